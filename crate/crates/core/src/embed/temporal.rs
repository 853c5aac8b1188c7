use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pkg::Timestamp;

pub const DURATION_BUCKETS: usize = 6;
/// Day-of-week, hour-of-day and duration one-hot blocks, concatenated.
pub const TEMPORAL_ONEHOT: usize = 7 + 24 + DURATION_BUCKETS;

const BUCKET_EDGES_S: [i64; DURATION_BUCKETS - 1] = [15 * 60, 3600, 3 * 3600, 8 * 3600, 24 * 3600];

/// `<15m, <1h, <3h, <8h, <24h, >=24h`.
pub fn duration_bucket(duration_s: i64) -> usize {
    BUCKET_EDGES_S.iter().position(|&e| duration_s < e).unwrap_or(DURATION_BUCKETS - 1)
}

/// Seeded dense projection of the temporal one-hots, `TEMPORAL_ONEHOT x dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalProjection {
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl TemporalProjection {
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (dim as f64).sqrt();
        Self { dim, weights: (0..TEMPORAL_ONEHOT * dim).map(|_| rng.gen_range(-a..a)).collect() }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalVector {
    pub day_of_week: usize,
    pub hour: usize,
    pub duration_bucket: usize,
    pub projection: Vec<f64>,
}

impl TemporalVector {
    /// Positions of the three hot entries in the concatenated one-hot.
    pub fn hot_indices(&self) -> [usize; 3] {
        [self.day_of_week, 7 + self.hour, 31 + self.duration_bucket]
    }
}

/// Buckets `(day, hour of timestamp, duration)` and sums the matching
/// projection rows. Negative durations are clamped to zero.
pub fn embed_temporal(day: u32, timestamp: Timestamp, duration_s: i64, proj: &TemporalProjection) -> TemporalVector {
    let day_of_week = (day % 7) as usize;
    let hour = (timestamp.rem_euclid(86_400) / 3600) as usize;
    let duration_bucket = duration_bucket(duration_s.max(0));
    let mut v = TemporalVector { day_of_week, hour, duration_bucket, projection: vec![0.0; proj.dim] };
    for k in v.hot_indices() {
        for (o, w) in v.projection.iter_mut().zip(proj.row(k)) {
            *o += w;
        }
    }
    v
}
