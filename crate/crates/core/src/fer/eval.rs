use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FerError, FerModel};
use crate::landmark::EmotionLabel;
use crate::nn::{self, SampleSource};

const N: usize = EmotionLabel::COUNT;

/// Rows are the true label, columns the prediction, both in label-code order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N]; N],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (EmotionLabel, EmotionLabel)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            m.counts[truth.index()][pred.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; N] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Fixed-width grid with label headers.
    pub fn render_text(&self) -> String {
        let short: Vec<&str> = EmotionLabel::ALL.iter().map(|l| &l.name()[..3.min(l.name().len())]).collect();
        let mut out = format!("{:>10}", "true\\pred");
        for s in &short {
            out.push_str(&format!(" {s:>7}"));
        }
        out.push('\n');
        for (label, row) in EmotionLabel::ALL.iter().zip(&self.counts) {
            out.push_str(&format!("{:>10}", label.name()));
            for v in row {
                out.push_str(&format!(" {v:>7}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in EmotionLabel::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (label, row) in EmotionLabel::ALL.iter().zip(&self.counts) {
            out.push_str(label.name());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
}

pub fn evaluate_predictions(
    pairs: impl IntoIterator<Item = (EmotionLabel, EmotionLabel)>,
) -> Result<Evaluation, FerError> {
    let matrix = ConfusionMatrix::from_pairs(pairs);
    if matrix.total() == 0 {
        return Err(FerError::EmptySamples);
    }
    Ok(Evaluation {
        accuracy: matrix.accuracy(),
        matrix,
    })
}

/// Classifies `indices` of `source` and tallies the confusion matrix.
pub fn evaluate<S: SampleSource + ?Sized>(
    model: &FerModel,
    source: &S,
    indices: &[usize],
) -> Result<Evaluation, FerError> {
    if indices.is_empty() {
        return Err(FerError::EmptySamples);
    }
    let pairs: Vec<(EmotionLabel, EmotionLabel)> = indices
        .par_iter()
        .map(|&i| {
            let (x, label) = source.get(i);
            let logits = model.network().forward(&x)?;
            Ok((EmotionLabel::ALL[label], EmotionLabel::ALL[nn::argmax(logits.data())]))
        })
        .collect::<Result<_, FerError>>()?;
    evaluate_predictions(pairs)
}
