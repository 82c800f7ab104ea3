use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.80;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("embedding norm {0} is not 1")]
    NotNormalized(f64),
    #[error("embedding has {got} dimensions, gallery uses {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("threshold {0} outside [-1, 1]")]
    Threshold(f64),
    #[error("unknown person {0}")]
    UnknownPerson(u64),
    #[error("gallery file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub person_id: u64,
    pub name: String,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub person_id: u64,
    pub name: String,
    pub similarity: f64,
}

/// Enrolled people and their embeddings; matched by cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityGallery {
    pub threshold: f64,
    next_id: u64,
    entries: Vec<GalleryEntry>,
}

impl Default for IdentityGallery {
    fn default() -> Self {
        IdentityGallery {
            threshold: DEFAULT_THRESHOLD,
            next_id: 1,
            entries: Vec::new(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl IdentityGallery {
    pub fn with_threshold(threshold: f64) -> Result<Self, GalleryError> {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(GalleryError::Threshold(threshold));
        }
        Ok(IdentityGallery {
            threshold,
            ..Self::default()
        })
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check(&self, embedding: &[f64]) -> Result<(), GalleryError> {
        let norm = dot(embedding, embedding).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GalleryError::NotNormalized(norm));
        }
        if let Some(e) = self.entries.first() {
            let expected = e.embeddings[0].len();
            if expected != embedding.len() {
                return Err(GalleryError::Dimension {
                    expected,
                    got: embedding.len(),
                });
            }
        }
        Ok(())
    }

    /// Adds a new person and returns their id.
    pub fn enroll(&mut self, name: &str, embedding: Vec<f64>) -> Result<u64, GalleryError> {
        self.check(&embedding)?;
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(GalleryEntry {
            person_id: id,
            name: name.to_string(),
            embeddings: vec![embedding],
        });
        Ok(id)
    }

    /// Stores another embedding for an enrolled person.
    pub fn add_embedding(&mut self, person_id: u64, embedding: Vec<f64>) -> Result<(), GalleryError> {
        self.check(&embedding)?;
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.person_id == person_id)
            .ok_or(GalleryError::UnknownPerson(person_id))?;
        entry.embeddings.push(embedding);
        Ok(())
    }

    /// Highest cosine similarity over every stored embedding, regardless of
    /// threshold. Ties go to the lowest person id.
    pub fn best(&self, embedding: &[f64]) -> Result<Option<Match>, GalleryError> {
        self.check(embedding)?;
        let mut best: Option<(&GalleryEntry, f64)> = None;
        for entry in &self.entries {
            for e in &entry.embeddings {
                let s = dot(e, embedding);
                let better = match best {
                    None => true,
                    Some((b, bs)) => s > bs || (s == bs && entry.person_id < b.person_id),
                };
                if better {
                    best = Some((entry, s));
                }
            }
        }
        Ok(best.map(|(e, s)| Match {
            person_id: e.person_id,
            name: e.name.clone(),
            similarity: s,
        }))
    }

    /// The best match if its similarity reaches the threshold.
    pub fn identify(&self, embedding: &[f64]) -> Result<Option<Match>, GalleryError> {
        Ok(self.best(embedding)?.filter(|m| m.similarity >= self.threshold))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gallery serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GalleryError> {
        let g: IdentityGallery = serde_json::from_str(text).map_err(|e| GalleryError::Io(e.to_string()))?;
        let mut check = IdentityGallery::with_threshold(g.threshold)?;
        for e in &g.entries {
            if e.embeddings.is_empty() {
                return Err(GalleryError::Io(format!("person {} has no embeddings", e.person_id)));
            }
            for emb in &e.embeddings {
                check.check(emb)?;
            }
            check.entries.push(e.clone());
        }
        let mut ids: Vec<u64> = g.entries.iter().map(|e| e.person_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.last().is_some_and(|&m| m >= g.next_id) {
            return Err(GalleryError::Io("duplicate or out-of-range person ids".into()));
        }
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<(), GalleryError> {
        std::fs::write(path, self.to_json()).map_err(|e| GalleryError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, GalleryError> {
        let text = std::fs::read_to_string(path).map_err(|e| GalleryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
