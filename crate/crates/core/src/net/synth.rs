//! Seeded classification task whose labels are a fixed function of planted
//! features spread over the knowledge-graph context, the attention marker
//! and the step after it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ctx, HotspotClass, NetError, RegionSample, SampleStep, CONTEXT_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSynthConfig {
    pub n_samples: usize,
    pub seq_len: usize,
    pub n_locations: usize,
    /// Air-connectivity index of the marked (long-distance) step; other
    /// steps draw theirs from `[0, 0.5)`.
    pub marker_air_ci: f64,
    /// Context density below this value forces `NONE`.
    pub none_density: f64,
    pub seed: u64,
}

impl Default for SampleSynthConfig {
    fn default() -> Self {
        Self { n_samples: 2000, seq_len: 5, n_locations: 20, marker_air_ci: 5.0, none_density: -0.6, seed: 0 }
    }
}

pub fn location_id(k: usize) -> String {
    format!("loc{k:03}")
}

/// Locations with an even index are the risky destinations.
pub fn is_risky(location: &str) -> bool {
    location.strip_prefix("loc").and_then(|n| n.parse::<usize>().ok()).is_some_and(|n| n % 2 == 0)
}

/// The label rule the generator plants:
/// * density below `none_density` gives `NONE`;
/// * otherwise the pattern flag picks C1/C2 (set) or C3/C4 (clear), and the
///   first class of each pair is chosen when the step right after the
///   highest air-connectivity step goes to a risky location.
pub fn planted_label(s: &RegionSample, none_density: f64) -> HotspotClass {
    if s.context[ctx::DENSITY] < none_density {
        return HotspotClass::None;
    }
    let marked = (0..s.steps.len())
        .max_by(|&a, &b| s.steps[a].air_ci.total_cmp(&s.steps[b].air_ci))
        .unwrap_or(0);
    let next_risky = s.steps.get(marked + 1).is_some_and(|st| is_risky(&st.location));
    match (s.context[ctx::PATTERN_CA] > 0.5, next_risky) {
        (true, true) => HotspotClass::C1,
        (true, false) => HotspotClass::C2,
        (false, true) => HotspotClass::C3,
        (false, false) => HotspotClass::C4,
    }
}

pub fn synthesize_samples(cfg: &SampleSynthConfig) -> Result<Vec<RegionSample>, NetError> {
    if cfg.seq_len < 2 || cfg.n_locations < 2 || !cfg.marker_air_ci.is_finite() || cfg.marker_air_ci <= 0.5 {
        return Err(NetError::Config("need seq_len >= 2, n_locations >= 2 and marker_air_ci > 0.5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let marked = rng.gen_range(0..cfg.seq_len - 1);
        let start: i64 = rng.gen_range(0..28) * 86_400;
        let steps: Vec<SampleStep> = (0..cfg.seq_len)
            .map(|t| {
                let day = rng.gen_range(0..7u32);
                let timestamp = start + day as i64 * 86_400 + rng.gen_range(0..86_400);
                SampleStep {
                    location: location_id(rng.gen_range(0..cfg.n_locations)),
                    day,
                    timestamp,
                    duration_s: rng.gen_range(60..40_000),
                    air_ci: if t == marked { cfg.marker_air_ci } else { rng.gen_range(0.0..0.5) },
                }
            })
            .collect();
        let mut context: Vec<f64> = (0..CONTEXT_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        context[ctx::PATTERN_CA] = f64::from(rng.gen_bool(0.5));
        context[ctx::PATTERN_CO] = f64::from(rng.gen_bool(0.5));
        let mut s = RegionSample {
            region_id: format!("s{i:05}"),
            steps,
            context,
            initial_phase: true,
            label: HotspotClass::None,
        };
        s.label = planted_label(&s, cfg.none_density);
        out.push(s);
    }
    Ok(out)
}
