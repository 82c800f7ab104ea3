//! 68-point facial landmark sets: parsing, canonical normalization, and
//! rasterization into fixed 96×96 single-channel images.
//!
//! The jaw contour (points 0..=16) is carried through normalization but never
//! drawn. Normalization pins the nose tip (point 30) to the seam row so every
//! raster splits into equally sized upper and lower halves.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_POINTS: usize = 68;
pub const RASTER_SIZE: usize = 96;
pub const SEAM_ROW: usize = 48;
pub const HALF_ROWS: usize = RASTER_SIZE / 2;
/// Index of the nose tip, the seam anchor.
pub const NOSE_TIP: usize = 30;
/// Target extent of the larger side of the inner-face bounding box.
pub const BOX_EXTENT: f64 = 80.0;
/// Jaw contour, excluded from the rendered image.
pub const JAW: std::ops::RangeInclusive<usize> = 0..=16;
/// Points that define the face box: everything except the jaw.
pub const INNER: std::ops::Range<usize> = 17..68;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("line {line}: malformed landmark record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected 68 points, found {count}")]
    PointCount { line: usize, count: usize },
    #[error("line {line}: point {index} has a non-finite coordinate")]
    NonFinite { line: usize, index: usize },
    #[error("line {line}: unknown emotion label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("degenerate landmarks: inner-face bounding box has zero extent")]
    Degenerate,
    #[error("point {index} at ({x:.3}, {y:.3}) falls outside the 96x96 raster")]
    OutOfBounds { index: usize, x: f64, y: f64 },
    #[error("i/o error: {0}")]
    Io(String),
}

/// The seven expression classes, with stable integer codes 0..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Sadness = 0,
    Happiness = 1,
    Anger = 2,
    Stress = 3,
    Surprise = 4,
    Disgust = 5,
    Neutral = 6,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 7] = [
        EmotionLabel::Sadness,
        EmotionLabel::Happiness,
        EmotionLabel::Anger,
        EmotionLabel::Stress,
        EmotionLabel::Surprise,
        EmotionLabel::Disgust,
        EmotionLabel::Neutral,
    ];
    /// The six emotions the game board is painted with.
    pub const NON_NEUTRAL: [EmotionLabel; 6] = [
        EmotionLabel::Sadness,
        EmotionLabel::Happiness,
        EmotionLabel::Anger,
        EmotionLabel::Stress,
        EmotionLabel::Surprise,
        EmotionLabel::Disgust,
    ];
    pub const COUNT: usize = 7;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Stress => "stress",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One face: 68 (x, y) points in source pixel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<[f64; 2]>,
    pub subject_id: String,
    pub label: Option<EmotionLabel>,
    pub source_frame: Option<String>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>, subject_id: impl Into<String>) -> Result<Self, LandmarkError> {
        let set = LandmarkSet {
            points,
            subject_id: subject_id.into(),
            label: None,
            source_frame: None,
        };
        set.validate(0)?;
        Ok(set)
    }

    pub fn with_label(mut self, label: EmotionLabel) -> Self {
        self.label = Some(label);
        self
    }

    /// Checks the point count, finiteness and a non-degenerate inner box.
    /// `line` is only used for error attribution.
    pub fn validate(&self, line: usize) -> Result<(), LandmarkError> {
        if self.points.len() != NUM_POINTS {
            return Err(LandmarkError::PointCount {
                line,
                count: self.points.len(),
            });
        }
        if let Some(index) = self
            .points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(LandmarkError::NonFinite { line, index });
        }
        let b = self.inner_box();
        if b.width() <= 0.0 || b.height() <= 0.0 {
            return Err(LandmarkError::Degenerate);
        }
        Ok(())
    }

    pub fn is_jaw(index: usize) -> bool {
        JAW.contains(&index)
    }

    /// Bounding box of points 17..68.
    pub fn inner_box(&self) -> BoundingBox {
        BoundingBox::of(self.points[INNER].iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    fn of<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> Self {
        let mut b = BoundingBox {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            b.min_x = b.min_x.min(p[0]);
            b.max_x = b.max_x.max(p[0]);
            b.min_y = b.min_y.min(p[1]);
            b.max_y = b.max_y.max(p[1]);
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Deserialize)]
struct RawRecord {
    subject: String,
    label: Option<String>,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    frame: Option<String>,
}

#[derive(Serialize)]
struct RawRecordOut<'a> {
    subject: &'a str,
    label: Option<&'static str>,
    points: &'a [[f64; 2]],
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<&'a str>,
}

/// Parses one JSON Lines record. `line` is 1-based and used in errors.
pub fn parse_landmark_line(text: &str, line: usize) -> Result<LandmarkSet, LandmarkError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| LandmarkError::Malformed {
        line,
        message: e.to_string(),
    })?;
    if raw.points.len() != NUM_POINTS {
        return Err(LandmarkError::PointCount {
            line,
            count: raw.points.len(),
        });
    }
    let mut points = Vec::with_capacity(NUM_POINTS);
    for (index, p) in raw.points.iter().enumerate() {
        if p.len() != 2 {
            return Err(LandmarkError::Malformed {
                line,
                message: format!("point {index} has {} coordinates, expected 2", p.len()),
            });
        }
        points.push([p[0], p[1]]);
    }
    let label = match raw.label {
        None => None,
        Some(name) => Some(
            name.parse::<EmotionLabel>()
                .map_err(|label| LandmarkError::UnknownLabel { line, label })?,
        ),
    };
    let set = LandmarkSet {
        points,
        subject_id: raw.subject,
        label,
        source_frame: raw.frame,
    };
    set.validate(line)?;
    Ok(set)
}

/// Parses a `.lmk.jsonl` stream, one set per non-blank line, in file order.
pub fn parse_landmark_file<R: BufRead>(reader: R) -> Result<Vec<LandmarkSet>, LandmarkError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| LandmarkError::Io(e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_landmark_line(&text, line_no)?);
    }
    Ok(out)
}

pub fn to_landmark_line(set: &LandmarkSet) -> String {
    let rec = RawRecordOut {
        subject: &set.subject_id,
        label: set.label.map(EmotionLabel::name),
        points: &set.points,
        frame: set.source_frame.as_deref(),
    };
    serde_json::to_string(&rec).expect("landmark record serializes")
}

pub fn write_landmark_file<W: std::io::Write>(mut w: W, sets: &[LandmarkSet]) -> std::io::Result<()> {
    for s in sets {
        writeln!(w, "{}", to_landmark_line(s))?;
    }
    Ok(())
}

/// A landmark set in the canonical 96×96 frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLandmarks(LandmarkSet);

impl NormalizedLandmarks {
    pub fn as_set(&self) -> &LandmarkSet {
        &self.0
    }

    pub fn into_set(self) -> LandmarkSet {
        self.0
    }
}

/// Uniform scale + translation: the inner box's larger side becomes 80 px,
/// the box is centered horizontally, and the nose tip lands on row 48.
pub fn normalize(set: &LandmarkSet) -> Result<NormalizedLandmarks, LandmarkError> {
    set.validate(0)?;
    let b = set.inner_box();
    let scale = BOX_EXTENT / b.width().max(b.height());
    let x_off = (RASTER_SIZE as f64 - scale * b.width()) / 2.0;
    let nose_y = set.points[NOSE_TIP][1];
    let points = set
        .points
        .iter()
        .map(|p| {
            [
                scale * (p[0] - b.min_x) + x_off,
                scale * (p[1] - nose_y) + SEAM_ROW as f64,
            ]
        })
        .collect();
    Ok(NormalizedLandmarks(LandmarkSet {
        points,
        subject_id: set.subject_id.clone(),
        label: set.label,
        source_frame: set.source_frame.clone(),
    }))
}

/// Stroke groups as (first, last, closed).
pub const STROKES: [(usize, usize, bool); 7] = [
    (17, 21, false),
    (22, 26, false),
    (27, 35, false),
    (36, 41, true),
    (42, 47, true),
    (48, 59, true),
    (60, 67, true),
];

/// Segments drawn for a face, as point-index pairs.
pub fn stroke_segments() -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    for &(first, last, closed) in STROKES.iter() {
        for i in first..last {
            segs.push((i, i + 1));
        }
        if closed {
            segs.push((last, first));
        }
    }
    segs
}

/// 96×96 single-channel image, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pixels: Vec<f32>,
}

impl RasterImage {
    pub const WIDTH: usize = RASTER_SIZE;
    pub const HEIGHT: usize = RASTER_SIZE;
    pub const LEN: usize = RASTER_SIZE * RASTER_SIZE;

    pub fn zeros() -> Self {
        RasterImage {
            pixels: vec![0.0; Self::LEN],
        }
    }

    /// Fails if the buffer has the wrong length or values outside [0, 1].
    pub fn from_pixels(pixels: Vec<f32>) -> Option<Self> {
        (pixels.len() == Self::LEN && pixels.iter().all(|v| (0.0..=1.0).contains(v)))
            .then_some(RasterImage { pixels })
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn seam_row(&self) -> usize {
        SEAM_ROW
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * RASTER_SIZE + col]
    }

    pub fn nonzero_count(&self) -> usize {
        self.pixels.iter().filter(|v| **v != 0.0).count()
    }
}

/// 48×96 half of a raster.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfImage {
    pixels: Vec<f32>,
}

impl HalfImage {
    pub const LEN: usize = HALF_ROWS * RASTER_SIZE;

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|v| *v == 0.0)
    }
}

fn pixel_of(index: usize, p: [f64; 2]) -> Result<(i64, i64), LandmarkError> {
    let size = RASTER_SIZE as f64;
    if !(0.0..size).contains(&p[0]) || !(0.0..size).contains(&p[1]) {
        return Err(LandmarkError::OutOfBounds {
            index,
            x: p[0],
            y: p[1],
        });
    }
    Ok((p[0].floor() as i64, p[1].floor() as i64))
}

fn draw_line(canvas: &mut [f32], (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y) = (x0, y0);
    let mut err = dx + dy;
    loop {
        canvas[y as usize * RASTER_SIZE + x as usize] = 1.0;
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws the 1-px strokes without smoothing.
pub fn draw_strokes(face: &NormalizedLandmarks) -> Result<Vec<f32>, LandmarkError> {
    let pts = &face.0.points;
    let mut pix = Vec::with_capacity(NUM_POINTS);
    for (i, p) in pts.iter().enumerate() {
        pix.push(if LandmarkSet::is_jaw(i) {
            (0, 0)
        } else {
            pixel_of(i, *p)?
        });
    }
    let mut canvas = vec![0.0f32; RasterImage::LEN];
    for (a, b) in stroke_segments() {
        draw_line(&mut canvas, pix[a], pix[b]);
    }
    Ok(canvas)
}

/// One pass of the separable [1 2 1]/4 kernel in each direction, zero border.
fn binomial_smooth(src: &[f32]) -> Vec<f32> {
    const K: [f32; 3] = [0.25, 0.5, 0.25];
    let n = RASTER_SIZE;
    let mut tmp = vec![0.0f32; src.len()];
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for (k, w) in K.iter().enumerate() {
                let cc = c as isize + k as isize - 1;
                if (0..n as isize).contains(&cc) {
                    acc += w * src[r * n + cc as usize];
                }
            }
            tmp[r * n + c] = acc;
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for (k, w) in K.iter().enumerate() {
                let rr = r as isize + k as isize - 1;
                if (0..n as isize).contains(&rr) {
                    acc += w * tmp[rr as usize * n + c];
                }
            }
            out[r * n + c] = acc.clamp(0.0, 1.0);
        }
    }
    out
}

pub fn rasterize(face: &NormalizedLandmarks) -> Result<RasterImage, LandmarkError> {
    let strokes = draw_strokes(face)?;
    Ok(RasterImage {
        pixels: binomial_smooth(&strokes),
    })
}

/// Upper rows 0..48 and lower rows 48..96.
pub fn split_halves(img: &RasterImage) -> (HalfImage, HalfImage) {
    let cut = SEAM_ROW * RASTER_SIZE;
    (
        HalfImage {
            pixels: img.pixels[..cut].to_vec(),
        },
        HalfImage {
            pixels: img.pixels[cut..].to_vec(),
        },
    )
}

pub fn concat_halves(upper: &HalfImage, lower: &HalfImage) -> RasterImage {
    let mut pixels = Vec::with_capacity(RasterImage::LEN);
    pixels.extend_from_slice(&upper.pixels);
    pixels.extend_from_slice(&lower.pixels);
    RasterImage { pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::synth::template;

    fn line_for(points: usize, label: &str) -> String {
        let pts: Vec<[f64; 2]> = (0..points).map(|i| [i as f64, (i * 2 % 13) as f64]).collect();
        format!(
            r#"{{"subject":"s","label":{label},"points":{}}}"#,
            serde_json::to_string(&pts).unwrap()
        )
    }

    #[test]
    fn parses_lines_in_order() {
        let t = template(EmotionLabel::Neutral);
        let mut buf = Vec::new();
        let mut sets = Vec::new();
        for (i, l) in [EmotionLabel::Happiness, EmotionLabel::Neutral, EmotionLabel::Anger]
            .into_iter()
            .enumerate()
        {
            let mut s = LandmarkSet::new(t.clone(), format!("s{i}")).unwrap().with_label(l);
            s.source_frame = None;
            sets.push(s);
        }
        write_landmark_file(&mut buf, &sets).unwrap();
        let parsed = parse_landmark_file(&buf[..]).unwrap();
        assert_eq!(parsed, sets);
        assert_eq!(parsed[0].label.unwrap().code(), 1);
        assert_eq!(parsed[1].label.unwrap().code(), 6);
    }

    #[test]
    fn short_point_list_names_line_and_count() {
        let text = format!("{}\n{}\n", line_for(68, "null"), line_for(67, "null"));
        let err = parse_landmark_file(text.as_bytes()).unwrap_err();
        assert_eq!(err, LandmarkError::PointCount { line: 2, count: 67 });
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_label_rejected() {
        let err = parse_landmark_line(&line_for(68, "\"joy\""), 4).unwrap_err();
        assert!(matches!(err, LandmarkError::UnknownLabel { line: 4, .. }));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_landmark_file("{\"subject\": 3}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LandmarkError::Malformed { line: 1, .. }));
    }

    #[test]
    fn label_codes_round_trip() {
        for (i, l) in EmotionLabel::ALL.iter().enumerate() {
            assert_eq!(l.code() as usize, i);
            assert_eq!(EmotionLabel::from_code(l.code()), Some(*l));
            assert_eq!(l.name().parse::<EmotionLabel>().unwrap(), *l);
        }
        assert_eq!(EmotionLabel::from_code(7), None);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let err = LandmarkSet::new(vec![[3.0, 3.0]; 68], "x").unwrap_err();
        assert_eq!(err, LandmarkError::Degenerate);
    }

    #[test]
    fn nose_tip_pinned_to_seam() {
        let set = LandmarkSet::new(template(EmotionLabel::Surprise), "x").unwrap();
        let n = normalize(&set).unwrap();
        assert_eq!(n.as_set().points[NOSE_TIP][1], 48.0);
        let b = n.as_set().inner_box();
        assert!((b.width().max(b.height()) - 80.0).abs() < 1e-9);
        assert!((b.min_x + b.max_x - 96.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_is_idempotent() {
        let set = LandmarkSet::new(template(EmotionLabel::Disgust), "x").unwrap();
        let once = normalize(&set).unwrap();
        let twice = normalize(once.as_set()).unwrap();
        for (a, b) in once.as_set().points.iter().zip(&twice.as_set().points) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn raster_ignores_jaw() {
        let set = LandmarkSet::new(template(EmotionLabel::Happiness), "x").unwrap();
        let mut moved = set.clone();
        for i in JAW {
            moved.points[i][0] += 7.5 * i as f64;
            moved.points[i][1] -= 3.25;
        }
        // Keep the inner box fixed so the normalization matches.
        let a = rasterize(&normalize(&set).unwrap()).unwrap();
        let b = rasterize(&normalize(&moved).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seam_row(), 48);
    }

    #[test]
    fn raster_out_of_bounds_names_point() {
        let set = LandmarkSet::new(template(EmotionLabel::Neutral), "x").unwrap();
        let mut n = normalize(&set).unwrap();
        n.0.points[57][1] = 96.0;
        let err = rasterize(&n).unwrap_err();
        assert!(matches!(err, LandmarkError::OutOfBounds { index: 57, .. }));
    }

    #[test]
    fn halves_partition_the_image() {
        let set = LandmarkSet::new(template(EmotionLabel::Anger), "x").unwrap();
        let img = rasterize(&normalize(&set).unwrap()).unwrap();
        let (u, l) = split_halves(&img);
        assert_eq!(concat_halves(&u, &l), img);
        let (zu, zl) = split_halves(&RasterImage::zeros());
        assert!(zu.is_blank() && zl.is_blank());
    }

    /// Faces whose brows and eyes sit well above the seam and whose lower
    /// strokes collapse onto a single point far from it: only the top half has ink.
    #[test]
    fn brows_and_eyes_only_face_has_blank_lower_half() {
        let mut pts = template(EmotionLabel::Neutral);
        // Collapse nose and mouth onto the nose tip, and push the upper part up.
        let tip = pts[NOSE_TIP];
        for p in pts.iter_mut().take(36).skip(27) {
            *p = tip;
        }
        for p in pts.iter_mut().skip(48) {
            *p = tip;
        }
        // Drop the collapsed lower strokes out of the raster's lower half by
        // placing the tip 3 px above the seam after normalization.
        let set = LandmarkSet::new(pts, "x").unwrap();
        let mut n = normalize(&set).unwrap();
        for i in 27..68 {
            if !(36..48).contains(&i) {
                n.0.points[i][1] -= 4.0;
            }
        }
        let img = rasterize(&n).unwrap();
        let (u, l) = split_halves(&img);
        assert!(!u.is_blank());
        assert!(l.is_blank());
    }
}
