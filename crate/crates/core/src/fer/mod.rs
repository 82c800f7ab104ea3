//! Expression recognition: the inception network with its 7-way head, the
//! landmark-to-prediction pipeline, evaluation and the identity gallery.

mod eval;
mod gallery;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::Dataset;
use crate::landmark::{self, EmotionLabel, LandmarkError, LandmarkSet, RasterImage, RASTER_SIZE};
use crate::nn::checkpoint::{self, CheckpointMeta};
use crate::nn::{self, Architecture, InceptionSpec, LayerSpec, Network, NnError, Padding, SampleSource, Tensor};

pub use eval::{evaluate, evaluate_predictions, ConfusionMatrix, Evaluation};
pub use gallery::{GalleryEntry, GalleryError, IdentityGallery, Match, DEFAULT_THRESHOLD};

pub const EMBEDDING_DIM: usize = 48;
pub const HEAD_NAME: &str = "head";
pub const EMBEDDING_LAYER: &str = "l2norm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Normalize,
    Rasterize,
    Model,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Normalize => "normalize",
            Stage::Rasterize => "rasterize",
            Stage::Model => "model",
        })
    }
}

#[derive(Debug, Error)]
pub enum FerError {
    #[error("{stage}: {source}")]
    Landmark {
        stage: Stage,
        #[source]
        source: LandmarkError,
    },
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("model is not a 7-way classifier with a {EMBEDDING_DIM}-d embedding: {0}")]
    NotFerNetwork(String),
}

fn conv(name: &str, kernel: usize, stride: usize, out_channels: usize) -> LayerSpec {
    LayerSpec::Conv {
        name: name.into(),
        kernel,
        stride,
        out_channels,
        padding: Padding::Same,
        relu: true,
    }
}

fn maxpool(name: &str) -> LayerSpec {
    LayerSpec::Maxpool {
        name: name.into(),
        kernel: 3,
        stride: 2,
        padding: Padding::Same,
    }
}

/// The trunk ending in the 48-d L2-normalized embedding.
pub fn trunk_layers() -> Vec<LayerSpec> {
    vec![
        conv("conv-1", 7, 2, 64),
        maxpool("maxpool-1"),
        conv("conv-2", 3, 2, 192),
        maxpool("maxpool-2"),
        LayerSpec::Inception {
            name: "inception-3".into(),
            widths: InceptionSpec {
                one_by_one: 8,
                reduce3: 12,
                three_by_three: 16,
                reduce5: 2,
                five_by_five: 4,
                pool_proj: 4,
            },
            relu: true,
        },
        maxpool("maxpool-4"),
        LayerSpec::Inception {
            name: "inception-5".into(),
            widths: InceptionSpec {
                one_by_one: 24,
                reduce3: 12,
                three_by_three: 12,
                reduce5: 2,
                five_by_five: 6,
                pool_proj: 8,
            },
            relu: true,
        },
        // 3×3 window over a 3×3 map, no padding: a global average.
        LayerSpec::Avgpool {
            name: "avgpool-6".into(),
            kernel: 3,
            stride: 1,
            padding: Padding::Valid,
        },
        conv("conv-7", 1, 1, 1024),
        LayerSpec::FullyConnected {
            name: "fc-8".into(),
            out_features: EMBEDDING_DIM,
            relu: false,
        },
        LayerSpec::L2norm {
            name: EMBEDDING_LAYER.into(),
        },
    ]
}

pub fn maya_architecture() -> Architecture {
    let mut layers = trunk_layers();
    layers.push(LayerSpec::FullyConnected {
        name: HEAD_NAME.into(),
        out_features: EmotionLabel::COUNT,
        relu: false,
    });
    Architecture {
        input: [RASTER_SIZE, RASTER_SIZE, 1],
        layers,
    }
}

/// Network output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub top: EmotionLabel,
    pub embedding: Vec<f64>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FerModel {
    net: Network,
    meta: CheckpointMeta,
    embedding_index: usize,
}

pub fn build_maya_net(seed: u64) -> FerModel {
    let net = Network::build(maya_architecture(), seed).expect("fixed architecture builds");
    FerModel::from_network(
        net,
        CheckpointMeta {
            seed,
            ..CheckpointMeta::default()
        },
    )
    .expect("fixed architecture is a fer network")
}

/// 96×96×1 network input for a raster.
pub fn raster_tensor(img: &RasterImage) -> Tensor {
    let data = img.pixels().iter().map(|&v| v as f64).collect();
    Tensor::new(vec![RASTER_SIZE, RASTER_SIZE, 1], data).expect("raster has 96×96 pixels")
}

/// Normalize, rasterize; the first three pipeline stages.
pub fn landmarks_to_raster(set: &LandmarkSet) -> Result<RasterImage, FerError> {
    set.validate(0).map_err(|source| FerError::Landmark {
        stage: Stage::Ingest,
        source,
    })?;
    let norm = landmark::normalize(set).map_err(|source| FerError::Landmark {
        stage: Stage::Normalize,
        source,
    })?;
    landmark::rasterize(&norm).map_err(|source| FerError::Landmark {
        stage: Stage::Rasterize,
        source,
    })
}

impl FerModel {
    pub fn from_network(net: Network, mut meta: CheckpointMeta) -> Result<Self, FerError> {
        let arch = net.architecture();
        if arch.input != [RASTER_SIZE, RASTER_SIZE, 1] {
            return Err(FerError::NotFerNetwork(format!("input {:?}", arch.input)));
        }
        if net.output_len() != EmotionLabel::COUNT {
            return Err(FerError::NotFerNetwork(format!("{} outputs", net.output_len())));
        }
        let embedding_index = arch
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::L2norm { .. }))
            .ok_or_else(|| FerError::NotFerNetwork("no l2norm layer".into()))?;
        let trace = net.shape_trace();
        let emb_len: usize = trace[embedding_index].1.iter().product();
        if emb_len != EMBEDDING_DIM {
            return Err(FerError::NotFerNetwork(format!("{emb_len}-d embedding")));
        }
        if meta.labels.is_empty() {
            meta.labels = EmotionLabel::ALL.iter().map(|l| l.name().to_string()).collect();
        }
        Ok(FerModel {
            net,
            meta,
            embedding_index,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn meta(&self) -> &CheckpointMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut CheckpointMeta {
        &mut self.meta
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Parameters of the layers before the appended head.
    pub fn trunk_param_count(&self) -> usize {
        self.net
            .param_ledger()
            .iter()
            .filter(|l| l.name != HEAD_NAME)
            .map(|l| l.count)
            .sum()
    }

    /// Probabilities and embedding for an already-rendered frame.
    pub fn classify(&self, img: &RasterImage) -> Result<(Vec<f64>, Vec<f64>), FerError> {
        let outs = self.net.forward_all(&raster_tensor(img))?;
        let embedding = outs[self.embedding_index].data().to_vec();
        let logits = outs.last().expect("network has layers");
        Ok((nn::ops::softmax(logits.data()), embedding))
    }

    /// Runs the full pipeline on one landmark set.
    pub fn predict(&self, set: &LandmarkSet) -> Result<Prediction, FerError> {
        let start = Instant::now();
        let img = landmarks_to_raster(set)?;
        let (probs, embedding) = self.classify(&img)?;
        let top = EmotionLabel::ALL[nn::argmax(&probs)];
        Ok(Prediction {
            probs,
            top,
            embedding,
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FerError> {
        Ok(checkpoint::save(path, &self.net, &self.meta)?)
    }

    pub fn load(path: &Path) -> Result<Self, FerError> {
        let (net, meta) = checkpoint::load(path)?;
        Self::from_network(net, meta)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.net, &self.meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FerError> {
        let (net, meta) = checkpoint::decode(bytes)?;
        Self::from_network(net, meta)
    }
}

/// Composite dataset as network samples.
pub struct DatasetSource<'a>(pub &'a Dataset);

impl SampleSource for DatasetSource<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> (Tensor, usize) {
        (raster_tensor(&self.0.image(index)), self.0.label(index).index())
    }
}

/// Pre-rendered labeled rasters, as read back from a packed file.
pub struct RasterSource<'a>(pub &'a [(EmotionLabel, RasterImage)]);

impl SampleSource for RasterSource<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> (Tensor, usize) {
        let (label, img) = &self.0[index];
        (raster_tensor(img), label.index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::synth::template;

    #[test]
    fn ledger_matches_closed_forms() {
        let m = build_maya_net(0);
        let ledger = m.network().param_ledger();
        let get = |n: &str| ledger.iter().find(|l| l.name == n).unwrap().count;
        // k·k·c_in·c_out + c_out per conv; inception sums its six convs.
        let conv = |k: usize, ci: usize, co: usize| k * k * ci * co + co;
        assert_eq!(get("conv-1"), conv(7, 1, 64));
        assert_eq!(get("conv-2"), conv(3, 64, 192));
        let inc = |ci, a, r3, b, r5, c, p| {
            conv(1, ci, a) + conv(1, ci, r3) + conv(3, r3, b) + conv(1, ci, r5) + conv(5, r5, c) + conv(1, ci, p)
        };
        assert_eq!(get("inception-3"), inc(192, 8, 12, 16, 2, 4, 4));
        assert_eq!(get("inception-5"), inc(32, 24, 12, 12, 2, 6, 8));
        assert_eq!(get("conv-7"), conv(1, 50, 1024));
        assert_eq!(get("fc-8"), 1024 * 48 + 48);
        assert_eq!(get(HEAD_NAME), 48 * 7 + 7);
        assert_eq!(m.trunk_param_count() + 343, m.param_count());
    }

    #[test]
    fn equal_seeds_equal_weights() {
        assert_eq!(build_maya_net(9), build_maya_net(9));
        assert_ne!(build_maya_net(9).network(), build_maya_net(10).network());
    }

    #[test]
    fn prediction_invariants() {
        let m = build_maya_net(3);
        let set = LandmarkSet::new(template(EmotionLabel::Surprise), "t").unwrap();
        let p = m.predict(&set).unwrap();
        assert_eq!(p.probs.len(), 7);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(p.top, EmotionLabel::ALL[nn::argmax(&p.probs)]);
        let norm = p.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        let q = m.predict(&set).unwrap();
        assert_eq!((p.probs, p.embedding), (q.probs, q.embedding));
    }

    #[test]
    fn pipeline_errors_name_the_stage() {
        let m = build_maya_net(0);
        let mut set = LandmarkSet::new(template(EmotionLabel::Neutral), "t").unwrap();
        set.points = vec![[1.0, 1.0]; 68];
        match m.predict(&set) {
            Err(FerError::Landmark { stage, .. }) => assert_eq!(stage, Stage::Ingest),
            other => panic!("{other:?}"),
        }
        set.points.pop();
        assert!(matches!(
            m.predict(&set),
            Err(FerError::Landmark {
                stage: Stage::Ingest,
                source: LandmarkError::PointCount { count: 67, .. }
            })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        let m = build_maya_net(4);
        let bytes = m.to_bytes();
        let back = FerModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta().seed, 4);
        assert_eq!(back.meta().labels[1], "happiness");
    }
}
