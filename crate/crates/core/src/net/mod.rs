//! Hotspot classifier: location and temporal embeddings feed a bidirectional
//! LSTM; dot-product attention against the region context vector pools the
//! hidden states; a bias-free GRU reads the pooled vector together with the
//! context; a softmax layer scores the five classes.

pub mod label;
mod layers;
mod params;
mod synth;
mod train;

pub use label::{label_region, GeoCase, HotspotClass};
pub use layers::TWO_PHASE_GAIN;
pub use synth::{is_risky, location_id, planted_label, synthesize_samples, SampleSynthConfig};
pub use params::{NetParams, NetShape, TensorSpec, PARAMS_HEADER};
pub use train::{
    accuracy, cross_entropy_loss, evaluate, gradient_check, predict, train, train_from, Adam, TrainConfig, TrainResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::TEMPORAL_ONEHOT;
use crate::pkg::Timestamp;
use layers::{GruTrace, LstmTrace};

/// Width of the region context vector `m`.
pub const CONTEXT_DIM: usize = 17;
/// Entries of `m` derived from the knowledge graph: six SC values and the
/// two pattern flags. Zeroed by [`Ablation::no_pkg_features`].
pub const PKG_CONTEXT: [usize; 8] = [0, 1, 2, 3, 4, 5, 10, 11];
pub const N_CLASSES: usize = HotspotClass::COUNT;

/// Context vector slots.
pub mod ctx {
    pub const SC: usize = 0;
    pub const DENSITY: usize = 6;
    pub const LITERACY: usize = 7;
    pub const MEDICAL: usize = 8;
    pub const POI: usize = 9;
    pub const PATTERN_CA: usize = 10;
    pub const PATTERN_CO: usize = 11;
    pub const HOTSPOT_FACT: usize = 12;
    pub const CONNECTIVITY: usize = 13;
    pub const MOBILITY_DELTA: usize = 14;
    pub const NEIGHBOR_HOTSPOT_14D: usize = 15;
    pub const ELDERLY_SHARE: usize = 16;
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("params line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_pkg_features: bool,
    pub no_attention: bool,
    pub no_bilstm: bool,
    pub no_two_phase: bool,
}

impl Ablation {
    pub fn full() -> Self {
        Self::default()
    }
}

/// One step of a region's recent mobility trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStep {
    pub location: String,
    pub day: u32,
    pub timestamp: Timestamp,
    pub duration_s: i64,
    /// Air-connectivity index of the step's location, used by the
    /// initial-phase attention bias.
    pub air_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub region_id: String,
    pub steps: Vec<SampleStep>,
    pub context: Vec<f64>,
    pub initial_phase: bool,
    pub label: HotspotClass,
}

/// A sample with locations and temporal buckets resolved to indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub locs: Vec<usize>,
    pub hot: Vec<[usize; 3]>,
    pub air_ci: Vec<f64>,
    pub context: Vec<f64>,
    pub initial_phase: bool,
    pub label: usize,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Step inputs `[loc_emb; time]`, `L x X`.
    pub x: Vec<f64>,
    pub(crate) fwd: LstmTrace,
    pub(crate) bwd: Option<LstmTrace>,
    /// Per-step `h_fwd + h_bwd` (or `h_fwd` alone), `L x H`.
    pub hidden: Vec<f64>,
    pub scores: Vec<f64>,
    /// Attention distribution over steps; `None` when attention is ablated.
    pub attention: Option<Vec<f64>>,
    pub pooled: Vec<f64>,
    pub(crate) context: Vec<f64>,
    pub(crate) gru: GruTrace,
    pub probs: Vec<f64>,
}

impl NetParams {
    pub fn encode(&self, s: &RegionSample) -> Result<Encoded, NetError> {
        if s.steps.is_empty() {
            return Err(NetError::Shape(format!("sample {} has no steps", s.region_id)));
        }
        if s.context.len() != self.shape.context_dim {
            return Err(NetError::Shape(format!(
                "sample {} context has {} entries, expected {}",
                s.region_id,
                s.context.len(),
                self.shape.context_dim
            )));
        }
        if s.context.iter().chain(s.steps.iter().map(|x| &x.air_ci)).any(|v| !v.is_finite()) {
            return Err(NetError::Shape(format!("sample {} has non-finite features", s.region_id)));
        }
        let mut locs = Vec::with_capacity(s.steps.len());
        let mut hot = Vec::with_capacity(s.steps.len());
        for st in &s.steps {
            locs.push(self.location_index(&st.location)?);
            let day = (st.day % 7) as usize;
            let hour = (st.timestamp.rem_euclid(86_400) / 3600) as usize;
            let dur = crate::embed::duration_bucket(st.duration_s.max(0));
            hot.push([day, 7 + hour, 31 + dur]);
        }
        debug_assert!(hot.iter().all(|h| h[2] < TEMPORAL_ONEHOT));
        Ok(Encoded {
            locs,
            hot,
            air_ci: s.steps.iter().map(|x| x.air_ci).collect(),
            context: s.context.clone(),
            initial_phase: s.initial_phase,
            label: s.label.index(),
        })
    }

    pub fn encode_all(&self, samples: &[RegionSample]) -> Result<Vec<Encoded>, NetError> {
        samples.iter().map(|s| self.encode(s)).collect()
    }
}

#[cfg(test)]
mod tests;
