//! Skip-gram location embeddings with a full softmax, and bucketed temporal
//! context vectors.

mod temporal;

pub use temporal::{duration_bucket, embed_temporal, TemporalProjection, TemporalVector, DURATION_BUCKETS, TEMPORAL_ONEHOT};

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBED_HEADER: &str = "# mobikg-embed v1";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sequence {0} has fewer than 2 locations")]
    ShortSequence(usize),
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { dim: 16, window: 2, epochs: 20, learning_rate: 0.05, seed: 0 }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 || self.window < 1 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::Config(format!(
                "need dim >= 2, window >= 1, learning_rate > 0 (got {}, {}, {})",
                self.dim, self.window, self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Input (`a_l`) and output vectors for `N` locations, row-major `N x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl EmbeddingTable {
    /// Uniform in `[-0.5/dim, 0.5/dim]` for both tables.
    pub fn random(ids: Vec<String>, dim: usize, rng: &mut impl Rng) -> Self {
        let n = ids.len();
        let a = 0.5 / dim as f64;
        let input = (0..n * dim).map(|_| rng.gen_range(-a..=a)).collect();
        let output = (0..n * dim).map(|_| rng.gen_range(-a..=a)).collect();
        Self { ids, dim, input, output }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize, EmbedError> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).map_err(|_| EmbedError::UnknownLocation(id.to_string()))
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    /// Softmax over every location of `out_i . in_center`.
    pub fn context_distribution(&self, center: usize) -> Vec<f64> {
        let c = self.input_row(center);
        let scores: Vec<f64> = (0..self.len()).map(|i| dot(self.output_row(i), c)).collect();
        softmax(&scores)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let n = self.ids.len();
        if self.input.len() != n * self.dim || self.output.len() != n * self.dim {
            return Err(EmbedError::Config("table shape does not match ids and dim".into()));
        }
        if self.ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EmbedError::Config("ids must be sorted and unique".into()));
        }
        if self.input.iter().chain(&self.output).any(|v| !v.is_finite()) {
            return Err(EmbedError::Config("non-finite embedding entry".into()));
        }
        Ok(())
    }

    /// Writes input vectors to `path` and output vectors to `<path>.out`.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        write_matrix(&self.ids, self.dim, &self.input, std::fs::File::create(path)?)?;
        write_matrix(&self.ids, self.dim, &self.output, std::fs::File::create(sidecar(path))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let (ids, dim, input) = read_matrix(path)?;
        let out_path = sidecar(path);
        let (ids2, dim2, output) = read_matrix(&out_path)?;
        if ids != ids2 || dim != dim2 {
            return Err(EmbedError::Parse { path: out_path.display().to_string(), msg: "does not match input table".into() });
        }
        let t = Self { ids, dim, input, output };
        t.validate()?;
        Ok(t)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".out");
    PathBuf::from(s)
}

fn write_matrix<W: Write>(ids: &[String], dim: usize, data: &[f64], w: W) -> Result<(), EmbedError> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "{EMBED_HEADER}")?;
    let header: Vec<String> = std::iter::once("id".to_string()).chain((0..dim).map(|k| format!("v_{k}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, id) in ids.iter().enumerate() {
        write!(w, "{id}")?;
        for v in &data[i * dim..(i + 1) * dim] {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<(Vec<String>, usize, Vec<f64>), EmbedError> {
    let bad = |line: usize, msg: &str| EmbedError::Parse { path: path.display().to_string(), msg: format!("line {line}: {msg}") };
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    if lines.next().transpose()?.as_deref() != Some(EMBED_HEADER) {
        return Err(bad(1, "missing version header"));
    }
    let cols = lines.next().transpose()?.ok_or_else(|| bad(2, "missing column header"))?;
    let dim = cols.split(',').count().saturating_sub(1);
    let (mut ids, mut data) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        let mut f = line.split(',');
        let id = f.next().unwrap_or_default().to_string();
        let row: Vec<f64> = f.map(|x| x.parse::<f64>().map_err(|_| bad(i + 3, "bad number"))).collect::<Result<_, _>>()?;
        if row.len() != dim {
            return Err(bad(i + 3, "wrong column count"));
        }
        ids.push(id);
        data.extend(row);
    }
    Ok((ids, dim, data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `p(context | center)` under the table's full softmax.
pub fn context_probability(center: &str, context: &str, table: &EmbeddingTable) -> Result<f64, EmbedError> {
    let c = table.index_of(center)?;
    let o = table.index_of(context)?;
    Ok(table.context_distribution(c)[o])
}

/// Corpus with ids replaced by table indices; validates sequence lengths.
pub fn index_corpus(corpus: &[Vec<String>], table: &EmbeddingTable) -> Result<Vec<Vec<usize>>, EmbedError> {
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    corpus
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if s.len() < 2 {
                return Err(EmbedError::ShortSequence(k));
            }
            s.iter().map(|id| table.index_of(id)).collect()
        })
        .collect()
}

fn pairs(corpus: &[Vec<usize>], window: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    corpus.iter().flat_map(move |s| {
        (0..s.len()).flat_map(move |t| {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(s.len() - 1);
            (lo..=hi).filter(move |&j| j != t).map(move |j| (s[t], s[j]))
        })
    })
}

/// `(1/T) sum_t sum_{0<|j|<=c} log p(l_{t+j} | l_t)`, with `T` the total
/// number of positions in the corpus.
pub fn objective(table: &EmbeddingTable, corpus: &[Vec<usize>], window: usize) -> f64 {
    let t: usize = corpus.iter().map(Vec::len).sum();
    let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut total = 0.0;
    for (c, o) in pairs(corpus, window) {
        let p = cache.entry(c).or_insert_with(|| table.context_distribution(c));
        total += p[o].ln();
    }
    total / t as f64
}

/// Gradient of [`objective`] with respect to the input and output tables.
pub fn objective_gradient(table: &EmbeddingTable, corpus: &[Vec<usize>], window: usize) -> (Vec<f64>, Vec<f64>) {
    let t: usize = corpus.iter().map(Vec::len).sum();
    let scale = 1.0 / t as f64;
    let mut g_in = vec![0.0; table.input.len()];
    let mut g_out = vec![0.0; table.output.len()];
    for (c, o) in pairs(corpus, window) {
        let p = table.context_distribution(c);
        accumulate(table, c, o, &p, scale, &mut g_in, &mut g_out);
    }
    (g_in, g_out)
}

/// Adds `scale * d log p(o|c)` into the gradient buffers.
fn accumulate(table: &EmbeddingTable, c: usize, o: usize, p: &[f64], scale: f64, g_in: &mut [f64], g_out: &mut [f64]) {
    let d = table.dim;
    let vin = table.input_row(c);
    for i in 0..table.len() {
        let coef = scale * ((i == o) as u8 as f64 - p[i]);
        let vout = table.output_row(i);
        for k in 0..d {
            g_in[c * d + k] += coef * vout[k];
            g_out[i * d + k] += coef * vin[k];
        }
    }
}

/// Trains with per-pair stochastic gradient ascent and returns the table
/// along with the objective after each epoch. Pairs are visited in a seeded
/// random order each epoch.
pub fn train_with_history(corpus: &[Vec<String>], cfg: &EmbedConfig) -> Result<(EmbeddingTable, Vec<f64>), EmbedError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let ids: Vec<String> = corpus.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = EmbeddingTable::random(ids, cfg.dim, &mut rng);
    let idx = index_corpus(corpus, &table)?;
    let mut all: Vec<(usize, usize)> = pairs(&idx, cfg.window).collect();
    let d = cfg.dim;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut g_in_row = vec![0.0; d];
    for _ in 0..cfg.epochs {
        all.shuffle(&mut rng);
        for &(c, o) in &all {
            let p = table.context_distribution(c);
            g_in_row.iter_mut().for_each(|g| *g = 0.0);
            for i in 0..table.len() {
                let coef = (i == o) as u8 as f64 - p[i];
                for k in 0..d {
                    g_in_row[k] += coef * table.output[i * d + k];
                }
            }
            for i in 0..table.len() {
                let coef = cfg.learning_rate * ((i == o) as u8 as f64 - p[i]);
                for k in 0..d {
                    table.output[i * d + k] += coef * table.input[c * d + k];
                }
            }
            for k in 0..d {
                table.input[c * d + k] += cfg.learning_rate * g_in_row[k];
            }
        }
        history.push(objective(&table, &idx, cfg.window));
    }
    Ok((table, history))
}

pub fn train_location_embeddings(corpus: &[Vec<String>], cfg: &EmbedConfig) -> Result<EmbeddingTable, EmbedError> {
    train_with_history(corpus, cfg).map(|(t, _)| t)
}
