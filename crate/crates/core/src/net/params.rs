use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ablation, NetError, CONTEXT_DIM, N_CLASSES};
use crate::embed::{EmbeddingTable, TemporalProjection, TEMPORAL_ONEHOT};

pub const PARAMS_HEADER: &str = "# mobikg-net v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub n_loc: usize,
    pub loc_dim: usize,
    pub time_dim: usize,
    pub hidden: usize,
    pub context_dim: usize,
}

impl NetShape {
    pub fn new(n_loc: usize, loc_dim: usize, time_dim: usize, hidden: usize) -> Self {
        Self { n_loc, loc_dim, time_dim, hidden, context_dim: CONTEXT_DIM }
    }

    pub fn x_dim(&self) -> usize {
        self.loc_dim + self.time_dim
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.n_loc == 0 || self.loc_dim == 0 || self.time_dim == 0 || self.hidden == 0 || self.context_dim == 0 {
            return Err(NetError::Config(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one LSTM direction. The four gate matrices `W_i, W_f, W_o,
/// W_c` are stored back to back, so together they form one `4H x (H + X)`
/// matrix; the biases likewise form one `4H` vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LstmOffsets {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Offsets {
    pub loc_emb: usize,
    pub time_proj: usize,
    pub lstm: [LstmOffsets; 2],
    /// `W_z, W_r, W_h`, each `H x (2H + M)`, back to back.
    pub gru: usize,
    pub out_w: usize,
    pub out_b: usize,
}

fn layout(s: &NetShape) -> (Vec<TensorSpec>, Offsets) {
    let (h, x, m) = (s.hidden, s.x_dim(), s.context_dim);
    let mut specs = Vec::new();
    let mut at = 0;
    let mut push = |name: String, rows: usize, cols: usize| {
        let off = at;
        specs.push(TensorSpec { name, offset: off, rows, cols });
        at += rows * cols;
        off
    };
    let loc_emb = push("loc_emb".into(), s.n_loc, s.loc_dim);
    let time_proj = push("time_proj".into(), TEMPORAL_ONEHOT, s.time_dim);
    let mut lstm = [LstmOffsets { w: 0, b: 0 }; 2];
    for (d, dir) in ["lstm_fwd", "lstm_bwd"].iter().enumerate() {
        let w = push(format!("{dir}.W_i"), h, h + x);
        for g in ["f", "o", "c"] {
            push(format!("{dir}.W_{g}"), h, h + x);
        }
        let b = push(format!("{dir}.b_i"), h, 1);
        for g in ["f", "o", "c"] {
            push(format!("{dir}.b_{g}"), h, 1);
        }
        lstm[d] = LstmOffsets { w, b };
    }
    let gru = push("gru.W_z".into(), h, 2 * h + m);
    push("gru.W_r".into(), h, 2 * h + m);
    push("gru.W_h".into(), h, 2 * h + m);
    let out_w = push("out.W".into(), N_CLASSES, h);
    let out_b = push("out.b".into(), N_CLASSES, 1);
    (specs, Offsets { loc_emb, time_proj, lstm, gru, out_w, out_b })
}

/// Every trainable tensor in one flat vector, plus the location vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub shape: NetShape,
    /// Sorted location ids; row `k` of `loc_emb` belongs to `loc_ids[k]`.
    pub loc_ids: Vec<String>,
    pub data: Vec<f64>,
    /// Ablation flags the params were trained under; inference reuses them.
    pub flags: Ablation,
    pub(crate) specs: Vec<TensorSpec>,
    pub(crate) off: Offsets,
}

impl NetParams {
    pub fn zeros(shape: NetShape, mut loc_ids: Vec<String>) -> Result<Self, NetError> {
        loc_ids.sort();
        loc_ids.dedup();
        let shape = NetShape { n_loc: loc_ids.len(), ..shape };
        shape.validate()?;
        let (specs, off) = layout(&shape);
        let n = specs.last().map_or(0, |s| s.offset + s.len());
        Ok(Self { shape, loc_ids, data: vec![0.0; n], flags: Ablation::full(), specs, off })
    }

    /// Seeded initialisation: weights uniform in `+-1/sqrt(fan_in)`, forget
    /// gate biases 1, other biases 0, location embeddings uniform in
    /// `+-0.5/loc_dim`, temporal projection from [`TemporalProjection::seeded`].
    pub fn init(shape: NetShape, loc_ids: Vec<String>, seed: u64) -> Result<Self, NetError> {
        let mut p = Self::zeros(shape, loc_ids)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = p.specs.clone();
        for s in &specs {
            let slot = &mut p.data[s.range()];
            if s.name == "loc_emb" {
                let a = 0.5 / p.shape.loc_dim as f64;
                slot.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
            } else if s.name == "time_proj" {
                slot.copy_from_slice(&TemporalProjection::seeded(p.shape.time_dim, rng.gen()).weights);
            } else if s.cols > 1 {
                let a = 1.0 / (s.cols as f64).sqrt();
                slot.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
            } else if s.name.ends_with(".b_f") {
                slot.iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Ok(p)
    }

    /// Copies input vectors of a trained location table into `loc_emb` for
    /// every id both share.
    pub fn load_location_table(&mut self, table: &EmbeddingTable) -> Result<usize, NetError> {
        if table.dim != self.shape.loc_dim {
            return Err(NetError::Shape(format!("table dim {} != loc_dim {}", table.dim, self.shape.loc_dim)));
        }
        let mut n = 0;
        for (k, id) in self.loc_ids.iter().enumerate() {
            if let Ok(i) = table.index_of(id) {
                let d = self.shape.loc_dim;
                let at = self.off.loc_emb + k * d;
                self.data[at..at + d].copy_from_slice(table.input_row(i));
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn location_index(&self, id: &str) -> Result<usize, NetError> {
        self.loc_ids.binary_search_by(|x| x.as_str().cmp(id)).map_err(|_| NetError::UnknownLocation(id.to_string()))
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.specs.iter().find(|s| s.name == name)?.range();
        Some(&mut self.data[r])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Text format: header, shape line, location ids, ablation flags, then one
    /// `name rows cols` line per tensor followed by its rows.
    pub fn save<W: Write>(&self, w: W) -> Result<(), NetError> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "{PARAMS_HEADER}")?;
        let s = &self.shape;
        writeln!(w, "shape {} {} {} {} {}", s.n_loc, s.loc_dim, s.time_dim, s.hidden, s.context_dim)?;
        writeln!(w, "locations {}", self.loc_ids.join(" "))?;
        let f = &self.flags;
        let b = |x: bool| u8::from(x);
        writeln!(
            w,
            "flags {} {} {} {}",
            b(f.no_pkg_features),
            b(f.no_attention),
            b(f.no_bilstm),
            b(f.no_two_phase)
        )?;
        for spec in &self.specs {
            writeln!(w, "tensor {} {} {}", spec.name, spec.rows, spec.cols)?;
            for r in 0..spec.rows {
                let row = &self.data[spec.offset + r * spec.cols..spec.offset + (r + 1) * spec.cols];
                let text: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", text.join(" "))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, NetError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
        let mut next = |what: &str| -> Result<(usize, String), NetError> {
            lines.next().transpose()?.ok_or_else(|| NetError::Parse { line: 0, msg: format!("missing {what}") })
        };
        let (ln, header) = next("header")?;
        if header != PARAMS_HEADER {
            return Err(NetError::Parse { line: ln, msg: format!("unsupported header {header:?}") });
        }
        let (ln, shape_line) = next("shape")?;
        let nums: Vec<usize> = shape_line
            .strip_prefix("shape ")
            .ok_or_else(|| NetError::Parse { line: ln, msg: "expected shape".into() })?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| NetError::Parse { line: ln, msg: "bad shape".into() }))
            .collect::<Result<_, _>>()?;
        if nums.len() != 5 {
            return Err(NetError::Parse { line: ln, msg: "shape needs 5 numbers".into() });
        }
        let (ln, loc_line) = next("locations")?;
        let ids: Vec<String> = loc_line
            .strip_prefix("locations")
            .ok_or_else(|| NetError::Parse { line: ln, msg: "expected locations".into() })?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let shape = NetShape { n_loc: nums[0], loc_dim: nums[1], time_dim: nums[2], hidden: nums[3], context_dim: nums[4] };
        let mut p = Self::zeros(shape, ids)?;
        if p.shape != shape {
            return Err(NetError::Parse { line: ln, msg: "location count does not match shape".into() });
        }
        let (ln, flag_line) = next("flags")?;
        let flags: Vec<bool> = flag_line
            .strip_prefix("flags ")
            .ok_or_else(|| NetError::Parse { line: ln, msg: "expected flags".into() })?
            .split_whitespace()
            .map(|x| match x {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(NetError::Parse { line: ln, msg: format!("bad flag {x:?}") }),
            })
            .collect::<Result<_, _>>()?;
        if flags.len() != 4 {
            return Err(NetError::Parse { line: ln, msg: "flags needs 4 values".into() });
        }
        p.flags = Ablation { no_pkg_features: flags[0], no_attention: flags[1], no_bilstm: flags[2], no_two_phase: flags[3] };
        for spec in p.specs.clone() {
            let (ln, head) = next("tensor")?;
            if head != format!("tensor {} {} {}", spec.name, spec.rows, spec.cols) {
                return Err(NetError::Parse { line: ln, msg: format!("expected tensor {}", spec.name) });
            }
            for r in 0..spec.rows {
                let (ln, row) = next("tensor row")?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| NetError::Parse { line: ln, msg: "bad number".into() }))
                    .collect::<Result<_, _>>()?;
                if vals.len() != spec.cols {
                    return Err(NetError::Parse { line: ln, msg: format!("expected {} values", spec.cols) });
                }
                let at = spec.offset + r * spec.cols;
                p.data[at..at + spec.cols].copy_from_slice(&vals);
            }
        }
        Ok(p)
    }
}
