//! Global Moran's I of regional case counts, per adjacency metric and week.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{adjacency_matrix, AdjacencyMatrix, AdjacencyMetric, GeoError, Region, Route};
use crate::pkg::{CaseEvent, Timestamp};

pub const WEEK_S: Timestamp = 7 * 86_400;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("{values} values for a {n}x{n} weight matrix")]
    Shape { values: usize, n: usize },
    #[error("adjacency has no links (sum of weights is 0)")]
    NoAdjacency,
    #[error("non-finite value: {0}")]
    NonFinite(f64),
    #[error("no count for region {region} in week starting {week_start}")]
    MissingCell { region: String, week_start: Timestamp },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScClass {
    None,
    Positive,
    Negative,
}

impl ScClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ScClass::None => "none",
            ScClass::Positive => "positive",
            ScClass::Negative => "negative",
        }
    }
}

/// Values within this distance of zero count as no autocorrelation, so that
/// rounding noise on a zero-variance or balanced field is not reported as a
/// sign.
pub const SC_ZERO_TOL: f64 = 1e-12;

/// Moran's I:
/// `(o / W) * sum_ab w_ab (v_a - mean)(v_b - mean) / sum_a (v_a - mean)^2`
/// with `o` the number of regions and `W` the total weight. A field with no
/// variance returns 0.
pub fn moran_sc(values: &[f64], weights: &AdjacencyMatrix) -> Result<f64, SpatialError> {
    let n = weights.n();
    if values.len() != n {
        return Err(SpatialError::Shape { values: values.len(), n });
    }
    if n < 2 {
        return Err(GeoError::TooFewRegions(n).into());
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(SpatialError::NonFinite(*v));
    }
    let total = weights.total_weight();
    if total <= 0.0 {
        return Err(SpatialError::NoAdjacency);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let w = weights.weights();
    let mut num = 0.0;
    for a in 0..n {
        let row = &w[a * n..(a + 1) * n];
        let mut acc = 0.0;
        for b in 0..n {
            acc += row[b] * dev[b];
        }
        num += dev[a] * acc;
    }
    Ok(n as f64 / total * num / denom)
}

pub fn classify_sc(sc: f64) -> Result<ScClass, SpatialError> {
    if !sc.is_finite() {
        return Err(SpatialError::NonFinite(sc));
    }
    Ok(if sc.abs() <= SC_ZERO_TOL {
        ScClass::None
    } else if sc > 0.0 {
        ScClass::Positive
    } else {
        ScClass::Negative
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScResult {
    pub metric: AdjacencyMetric,
    pub week_start: Timestamp,
    pub sc: f64,
    pub classification: ScClass,
}

/// Region-by-week case counts. Weeks are 7-day buckets counted from `origin`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CasePanel {
    pub origin: Timestamp,
    pub weeks: usize,
    counts: HashMap<(String, usize), f64>,
}

impl CasePanel {
    pub fn new(origin: Timestamp, weeks: usize) -> Self {
        Self { origin, weeks, counts: HashMap::new() }
    }

    pub fn set(&mut self, region: &str, week: usize, count: f64) {
        self.weeks = self.weeks.max(week + 1);
        self.counts.insert((region.to_string(), week), count);
    }

    pub fn get(&self, region: &str, week: usize) -> Option<f64> {
        self.counts.get(&(region.to_string(), week)).copied()
    }

    pub fn week_start(&self, week: usize) -> Timestamp {
        self.origin + week as Timestamp * WEEK_S
    }

    pub fn week_of(&self, t: Timestamp) -> Option<usize> {
        (t >= self.origin).then(|| ((t - self.origin) / WEEK_S) as usize)
    }

    /// Sums case events into weekly buckets starting at the earliest event.
    /// Every region gets an explicit zero for weeks without cases.
    pub fn from_cases(cases: &[CaseEvent], regions: &[Region]) -> Result<Self, SpatialError> {
        let Some(origin) = cases.iter().map(|c| c.timestamp).min() else {
            return Ok(Self::new(0, 0));
        };
        let last = cases.iter().map(|c| c.timestamp).max().unwrap_or(origin);
        let weeks = ((last - origin) / WEEK_S) as usize + 1;
        let mut panel = Self::new(origin, weeks);
        for r in regions {
            for w in 0..weeks {
                panel.set(&r.id, w, 0.0);
            }
        }
        for c in cases {
            if !regions.iter().any(|r| r.id == c.region_id) {
                return Err(GeoError::UnknownRegion(c.region_id.clone()).into());
            }
            let w = ((c.timestamp - origin) / WEEK_S) as usize;
            *panel.counts.entry((c.region_id.clone(), w)).or_insert(0.0) += c.count as f64;
        }
        Ok(panel)
    }

    /// Counts of `regions` (in order) for one week.
    pub fn column(&self, regions: &[Region], week: usize) -> Result<Vec<f64>, SpatialError> {
        regions
            .iter()
            .map(|r| {
                self.get(&r.id, week)
                    .ok_or_else(|| SpatialError::MissingCell { region: r.id.clone(), week_start: self.week_start(week) })
            })
            .collect()
    }
}

/// One result per (week, metric), weeks ascending and metrics in
/// [`AdjacencyMetric::ALL`] order.
pub fn sc_panel(panel: &CasePanel, regions: &[Region], routes: Option<&[Route]>) -> Result<Vec<ScResult>, SpatialError> {
    let matrices = AdjacencyMetric::ALL
        .iter()
        .map(|m| adjacency_matrix(regions, *m, routes))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(panel.weeks * matrices.len());
    for week in 0..panel.weeks {
        let values = panel.column(regions, week)?;
        for m in &matrices {
            let sc = moran_sc(&values, m)?;
            out.push(ScResult {
                metric: m.metric,
                week_start: panel.week_start(week),
                sc,
                classification: classify_sc(sc)?,
            });
        }
    }
    Ok(out)
}

/// Latest SC per metric at or before `t`, in [`AdjacencyMetric::ALL`] order;
/// metrics without a result yet are 0.
pub fn sc_features_at(results: &[ScResult], t: Timestamp) -> [f64; 6] {
    let mut latest: BTreeMap<usize, (Timestamp, f64)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.week_start <= t) {
        let k = AdjacencyMetric::ALL.iter().position(|m| *m == r.metric).unwrap_or(0);
        let e = latest.entry(k).or_insert((r.week_start, r.sc));
        if r.week_start >= e.0 {
            *e = (r.week_start, r.sc);
        }
    }
    let mut out = [0.0; 6];
    for (k, (_, sc)) in latest {
        out[k] = sc;
    }
    out
}

pub const SC_HEADER: &str = "# mobikg-sc v1";

pub fn write_sc_csv<W: Write>(results: &[ScResult], mut w: W) -> Result<(), SpatialError> {
    writeln!(w, "{SC_HEADER}")?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["metric", "week_start", "sc", "classification"])?;
    for r in results {
        wr.write_record([r.metric.as_str(), &r.week_start.to_string(), &r.sc.to_string(), r.classification.as_str()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sc_csv<R: std::io::Read>(r: R) -> Result<Vec<ScResult>, SpatialError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = rd.headers()?.clone();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let r: ScResult = rec.deserialize(Some(&headers)).map_err(|e| SpatialError::Parse { line, msg: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}
