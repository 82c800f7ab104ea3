//! Packed composite file: `MAYD`, u32 version, u64 count, then per sample a
//! label byte followed by 9,216 little-endian f32 pixels. All integers are
//! little-endian.

use std::io::{Read, Write};

use super::{AugmentError, Dataset};
use crate::landmark::{EmotionLabel, RasterImage};

pub const MAGIC: &[u8; 4] = b"MAYD";
pub const VERSION: u32 = 1;

pub fn write_packed<W: Write>(
    mut w: W,
    samples: impl ExactSizeIterator<Item = (EmotionLabel, RasterImage)>,
) -> Result<(), AugmentError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(1 + RasterImage::LEN * 4);
    for (label, img) in samples {
        buf.clear();
        buf.push(label.code());
        for v in img.pixels() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Writes the given dataset indices in order.
pub fn write_dataset<W: Write>(w: W, ds: &Dataset, indices: &[usize]) -> Result<(), AugmentError> {
    write_packed(w, indices.iter().map(|&i| (ds.label(i), ds.image(i))))
}

pub fn read_packed<R: Read>(mut r: R) -> Result<Vec<(EmotionLabel, RasterImage)>, AugmentError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AugmentError::Pack(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(AugmentError::Pack(format!("unsupported version {version}")));
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut buf = vec![0u8; 1 + RasterImage::LEN * 4];
    for k in 0..count {
        r.read_exact(&mut buf)?;
        let label = EmotionLabel::from_code(buf[0])
            .ok_or_else(|| AugmentError::Pack(format!("sample {k}: bad label byte {}", buf[0])))?;
        let pixels = buf[1..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let img = RasterImage::from_pixels(pixels)
            .ok_or_else(|| AugmentError::Pack(format!("sample {k}: pixel outside [0, 1]")))?;
        out.push((label, img));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{banks_from_landmarks, build_dataset, synth::synth_corpus};

    #[test]
    fn packed_round_trip_is_byte_exact() {
        let ds = build_dataset(banks_from_landmarks(&synth_corpus(2, 4)).unwrap()).unwrap();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &ds, &idx).unwrap();
        assert_eq!(&bytes[..4], b"MAYD");
        assert_eq!(bytes.len(), 16 + ds.len() * (1 + 9216 * 4));
        let back = read_packed(&bytes[..]).unwrap();
        assert_eq!(back.len(), 28);
        for (i, (l, img)) in back.iter().enumerate() {
            assert_eq!(*l, ds.label(i));
            assert_eq!(*img, ds.image(i));
        }
        let mut again = Vec::new();
        write_packed(&mut again, back.into_iter()).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_packed(&b"MAYX\x01\0\0\0"[..]).is_err());
    }
}
