//! Synthetic landmark corpus: seven hand-authored expression templates plus
//! bounded uniform jitter. Stands in for curated stills from public FER
//! databases, which cannot ship with the repository.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::landmark::{EmotionLabel, LandmarkSet, NUM_POINTS};

/// Default per-coordinate jitter bound, in source pixels.
pub const DEFAULT_JITTER: f64 = 2.0;

/// Offset applied so template coordinates are positive source-pixel values.
const ORIGIN: [f64; 2] = [160.0, 140.0];

/// Neutral face with the nose tip at the origin, x right, y down.
fn neutral_face() -> Vec<[f64; 2]> {
    let mut p = vec![[0.0; 2]; NUM_POINTS];
    // Jaw, ear to ear around the chin.
    for (i, pt) in p.iter_mut().enumerate().take(17) {
        let t = std::f64::consts::PI * i as f64 / 16.0;
        *pt = [-48.0 * t.cos(), -22.0 + 66.0 * t.sin()];
    }
    // Brows, outer to inner on the left, inner to outer on the right.
    for k in 0..5 {
        let t = k as f64 / 4.0;
        let arch = 4.0 * (std::f64::consts::PI * t).sin();
        p[17 + k] = [-40.0 + 32.0 * t, -36.0 - arch];
        p[22 + k] = [8.0 + 32.0 * t, -36.0 - (4.0 * (std::f64::consts::PI * t).sin())];
    }
    // Nose bridge down to the tip, then the nostril base.
    p[27] = [0.0, -28.0];
    p[28] = [0.0, -19.0];
    p[29] = [0.0, -10.0];
    p[30] = [0.0, 0.0];
    p[31] = [-9.0, 6.0];
    p[32] = [-4.5, 8.0];
    p[33] = [0.0, 9.0];
    p[34] = [4.5, 8.0];
    p[35] = [9.0, 6.0];
    // Eyes.
    let left = [
        [-30.0, -22.0],
        [-25.0, -25.0],
        [-19.0, -25.0],
        [-14.0, -22.0],
        [-19.0, -19.0],
        [-25.0, -19.0],
    ];
    for (k, q) in left.iter().enumerate() {
        p[36 + k] = *q;
    }
    let right = [
        [14.0, -22.0],
        [19.0, -25.0],
        [25.0, -25.0],
        [30.0, -22.0],
        [25.0, -19.0],
        [19.0, -19.0],
    ];
    for (k, q) in right.iter().enumerate() {
        p[42 + k] = *q;
    }
    // Outer lips: left corner, upper lip, right corner, lower lip.
    let outer = [
        [-20.0, 24.0],
        [-13.0, 20.0],
        [-6.0, 18.0],
        [0.0, 19.0],
        [6.0, 18.0],
        [13.0, 20.0],
        [20.0, 24.0],
        [13.0, 29.0],
        [6.0, 32.0],
        [0.0, 33.0],
        [-6.0, 32.0],
        [-13.0, 29.0],
    ];
    for (k, q) in outer.iter().enumerate() {
        p[48 + k] = *q;
    }
    let inner = [
        [-16.0, 24.0],
        [-6.0, 22.0],
        [0.0, 22.0],
        [6.0, 22.0],
        [16.0, 24.0],
        [6.0, 26.0],
        [0.0, 26.0],
        [-6.0, 26.0],
    ];
    for (k, q) in inner.iter().enumerate() {
        p[60 + k] = *q;
    }
    p
}

const LEFT_BROW: std::ops::Range<usize> = 17..22;
const RIGHT_BROW: std::ops::Range<usize> = 22..27;
const UPPER_LIDS: [usize; 4] = [37, 38, 43, 44];
const LOWER_LIDS: [usize; 4] = [40, 41, 46, 47];
const UPPER_LIP: [usize; 8] = [49, 50, 51, 52, 53, 61, 62, 63];
const LOWER_LIP: [usize; 8] = [55, 56, 57, 58, 59, 65, 66, 67];
const CORNERS: [usize; 4] = [48, 54, 60, 64];

fn shift(p: &mut [[f64; 2]], idx: impl IntoIterator<Item = usize>, dx: f64, dy: f64) {
    for i in idx {
        p[i][0] += dx;
        p[i][1] += dy;
    }
}

/// Raises (negative dy) the brows, with separate inner and outer amounts.
fn brows(p: &mut [[f64; 2]], inner_dy: f64, outer_dy: f64, inward: f64) {
    for k in 0..5 {
        let t = k as f64 / 4.0;
        // left brow runs outer -> inner, right brow inner -> outer
        let l = LEFT_BROW.start + k;
        let r = RIGHT_BROW.start + k;
        p[l][1] += outer_dy + (inner_dy - outer_dy) * t;
        p[l][0] += inward * t;
        p[r][1] += inner_dy + (outer_dy - inner_dy) * t;
        p[r][0] -= inward * (1.0 - t);
    }
}

fn eye_aperture(p: &mut [[f64; 2]], delta: f64) {
    shift(p, UPPER_LIDS, 0.0, -delta / 2.0);
    shift(p, LOWER_LIDS, 0.0, delta / 2.0);
}

fn mouth_corners(p: &mut [[f64; 2]], dy: f64, widen: f64) {
    p[48][0] -= widen;
    p[60][0] -= widen;
    p[54][0] += widen;
    p[64][0] += widen;
    shift(p, CORNERS, 0.0, dy);
}

/// The class template in source pixel units.
pub fn template(label: EmotionLabel) -> Vec<[f64; 2]> {
    let mut p = neutral_face();
    match label {
        EmotionLabel::Neutral => {}
        EmotionLabel::Happiness => {
            mouth_corners(&mut p, -7.0, 5.0);
            shift(&mut p, LOWER_LIP, 0.0, 3.0);
            eye_aperture(&mut p, -2.0);
        }
        EmotionLabel::Sadness => {
            brows(&mut p, -5.0, 3.0, 0.0);
            mouth_corners(&mut p, 7.0, -2.0);
            eye_aperture(&mut p, -1.5);
        }
        EmotionLabel::Anger => {
            brows(&mut p, 7.0, 1.0, 4.0);
            eye_aperture(&mut p, -3.0);
            mouth_corners(&mut p, 0.0, -5.0);
            shift(&mut p, [61, 62, 63, 65, 66, 67], 0.0, 0.0);
            shift(&mut p, [49, 50, 51, 52, 53], 0.0, 2.0);
            shift(&mut p, [55, 56, 57, 58, 59], 0.0, -3.0);
        }
        EmotionLabel::Stress => {
            brows(&mut p, -8.0, -3.0, 2.0);
            eye_aperture(&mut p, 4.0);
            mouth_corners(&mut p, 2.0, 6.0);
            shift(&mut p, LOWER_LIP, 0.0, 4.0);
        }
        EmotionLabel::Surprise => {
            brows(&mut p, -10.0, -10.0, 0.0);
            eye_aperture(&mut p, 5.0);
            mouth_corners(&mut p, 2.0, -6.0);
            shift(&mut p, UPPER_LIP, 0.0, -2.0);
            shift(&mut p, LOWER_LIP, 0.0, 11.0);
        }
        EmotionLabel::Disgust => {
            brows(&mut p, 4.0, 2.0, 2.0);
            shift(&mut p, 27..36, 0.0, -2.0);
            p[30][1] += 2.0;
            shift(&mut p, UPPER_LIP, 0.0, -5.0);
            mouth_corners(&mut p, 3.0, -1.0);
            eye_aperture(&mut p, -2.0);
        }
    }
    for q in p.iter_mut() {
        q[0] += ORIGIN[0];
        q[1] += ORIGIN[1];
    }
    p
}

/// `per_class` jittered sets for each of the seven labels, in label order.
/// Deterministic for a given seed; every set gets a unique subject id.
pub fn synth_corpus(per_class: usize, seed: u64) -> Vec<LandmarkSet> {
    synth_corpus_with_jitter(per_class, seed, DEFAULT_JITTER)
}

pub fn synth_corpus_with_jitter(per_class: usize, seed: u64, jitter: f64) -> Vec<LandmarkSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * EmotionLabel::COUNT);
    for label in EmotionLabel::ALL {
        let base = template(label);
        for k in 0..per_class {
            let points = base
                .iter()
                .map(|q| {
                    if jitter > 0.0 {
                        [
                            q[0] + rng.random_range(-jitter..=jitter),
                            q[1] + rng.random_range(-jitter..=jitter),
                        ]
                    } else {
                        *q
                    }
                })
                .collect();
            out.push(LandmarkSet {
                points,
                subject_id: format!("synth-{}-{k:04}", label.name()),
                label: Some(label),
                source_frame: None,
            });
        }
    }
    out
}
