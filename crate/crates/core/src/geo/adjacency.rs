use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GeoError, Region};

/// The six ways two regions can be considered neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMetric {
    SharedBorder,
    DirectRoute,
    RankDensity,
    RankLiteracy,
    RankMedical,
    RankFlow,
}

impl AdjacencyMetric {
    pub const ALL: [AdjacencyMetric; 6] = [
        AdjacencyMetric::SharedBorder,
        AdjacencyMetric::DirectRoute,
        AdjacencyMetric::RankDensity,
        AdjacencyMetric::RankLiteracy,
        AdjacencyMetric::RankMedical,
        AdjacencyMetric::RankFlow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AdjacencyMetric::SharedBorder => "shared_border",
            AdjacencyMetric::DirectRoute => "direct_route",
            AdjacencyMetric::RankDensity => "rank_density",
            AdjacencyMetric::RankLiteracy => "rank_literacy",
            AdjacencyMetric::RankMedical => "rank_medical",
            AdjacencyMetric::RankFlow => "rank_flow",
        }
    }

    fn rank_key(&self, r: &Region) -> Option<Option<f64>> {
        match self {
            AdjacencyMetric::RankDensity => Some(r.population_density),
            AdjacencyMetric::RankLiteracy => Some(r.literacy_rate),
            AdjacencyMetric::RankMedical => Some(r.medical_facilities.map(f64::from)),
            AdjacencyMetric::RankFlow => Some(r.aggregate_flow),
            _ => None,
        }
    }

    fn attribute_name(&self) -> &'static str {
        match self {
            AdjacencyMetric::RankDensity => "population_density",
            AdjacencyMetric::RankLiteracy => "literacy_rate",
            AdjacencyMetric::RankMedical => "medical_facilities",
            AdjacencyMetric::RankFlow => "aggregate_flow",
            _ => "",
        }
    }
}

impl std::str::FromStr for AdjacencyMetric {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdjacencyMetric::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GeoError::InvalidInput(format!("unknown adjacency metric {s:?}")))
    }
}

/// Directed route between two regions with the number of available routes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub src: String,
    pub dst: String,
    pub count: u32,
}

/// Binary, symmetric, zero-diagonal weights `w_ab` over an ordered region list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    pub metric: AdjacencyMetric,
    pub ids: Vec<String>,
    weights: Vec<f64>,
}

impl AdjacencyMatrix {
    /// Builds a matrix from explicit row-major weights.
    pub fn from_weights(metric: AdjacencyMetric, ids: Vec<String>, weights: Vec<f64>) -> Result<Self, GeoError> {
        let n = ids.len();
        if weights.len() != n * n {
            return Err(GeoError::InvalidInput(format!("{} weights for {n} regions", weights.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GeoError::InvalidInput("weights must be finite and non-negative".into()));
        }
        Ok(Self { metric, ids, weights })
    }

    fn zeros(metric: AdjacencyMetric, ids: Vec<String>) -> Self {
        let n = ids.len();
        Self { metric, ids, weights: vec![0.0; n * n] }
    }

    fn link(&mut self, a: usize, b: usize) {
        if a != b {
            let n = self.n();
            self.weights[a * n + b] = 1.0;
            self.weights[b * n + a] = 1.0;
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.n() + b]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|a| self.get(a, a) == 0.0 && (0..a).all(|b| self.get(a, b) == self.get(b, a)))
    }

    /// Indices of the non-zero entries in row `a`.
    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n();
        (0..n).filter(move |&b| self.weights[a * n + b] != 0.0)
    }
}

/// Builds the adjacency matrix of `regions` (in the given order) under `metric`.
///
/// Rank metrics sort by the metric's attribute, breaking ties by region id,
/// and connect each region to its predecessor and successor. `routes` is only
/// consulted by [`AdjacencyMetric::DirectRoute`]; a missing route set means
/// no region is route-adjacent.
pub fn adjacency_matrix(
    regions: &[Region],
    metric: AdjacencyMetric,
    routes: Option<&[Route]>,
) -> Result<AdjacencyMatrix, GeoError> {
    if regions.len() < 2 {
        return Err(GeoError::TooFewRegions(regions.len()));
    }
    let ids: Vec<String> = regions.iter().map(|r| r.id.clone()).collect();
    let mut m = AdjacencyMatrix::zeros(metric, ids);
    match metric {
        AdjacencyMetric::SharedBorder => {
            for a in 0..regions.len() {
                for b in (a + 1)..regions.len() {
                    if regions[a].bbox.shares_border(&regions[b].bbox) {
                        m.link(a, b);
                    }
                }
            }
        }
        AdjacencyMetric::DirectRoute => {
            let index: HashMap<&str, usize> =
                regions.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
            for route in routes.unwrap_or(&[]) {
                let a = *index.get(route.src.as_str()).ok_or_else(|| GeoError::UnknownRegion(route.src.clone()))?;
                let b = *index.get(route.dst.as_str()).ok_or_else(|| GeoError::UnknownRegion(route.dst.clone()))?;
                if route.count > 0 {
                    m.link(a, b);
                }
            }
        }
        _ => {
            let mut keyed = Vec::with_capacity(regions.len());
            for (i, r) in regions.iter().enumerate() {
                let key = metric.rank_key(r).flatten().ok_or_else(|| GeoError::MissingAttribute {
                    region: r.id.clone(),
                    attribute: metric.attribute_name(),
                })?;
                if !key.is_finite() {
                    return Err(GeoError::InvalidInput(format!("region {} has non-finite rank value", r.id)));
                }
                keyed.push((key, r.id.as_str(), i));
            }
            keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(y.1)));
            for pair in keyed.windows(2) {
                m.link(pair[0].2, pair[1].2);
            }
        }
    }
    Ok(m)
}
