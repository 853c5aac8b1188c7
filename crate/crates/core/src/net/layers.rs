use super::params::{LstmOffsets, NetParams};
use super::{Ablation, Encoded, ForwardTrace, NetError, N_CLASSES, PKG_CONTEXT};
use crate::embed::softmax;

/// Scale of the initial-phase attention bias `gain * air_ci_t`.
pub const TWO_PHASE_GAIN: f64 = 1.0;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y += W[:, c0..c0+x.len()] x` for a row-major matrix with `stride` columns.
fn matvec_acc(w: &[f64], stride: usize, c0: usize, x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let at = r * stride + c0;
        *yr += dot(&w[at..at + n], x);
    }
}

/// `out += W[:, c0..c0+out.len()]^T v`.
fn matvec_t_acc(w: &[f64], stride: usize, c0: usize, v: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (r, &vr) in v.iter().enumerate() {
        if vr != 0.0 {
            let at = r * stride + c0;
            axpy(vr, &w[at..at + n], out);
        }
    }
}

/// `dW[:, c0..c0+x.len()] += v x^T`.
fn outer_acc(dw: &mut [f64], stride: usize, c0: usize, v: &[f64], x: &[f64]) {
    let n = x.len();
    for (r, &vr) in v.iter().enumerate() {
        if vr != 0.0 {
            let at = r * stride + c0;
            axpy(vr, x, &mut dw[at..at + n]);
        }
    }
}

/// One LSTM direction, stored in processing order.
#[derive(Clone, Debug, Default)]
pub(crate) struct LstmTrace {
    /// Positions in processing order.
    pub order: Vec<usize>,
    /// `[h_{k-1}; x_k]`, `L x (H + X)`.
    pub z: Vec<f64>,
    /// Activated gates `i, f, o, c~`, `L x 4H`.
    pub gates: Vec<f64>,
    /// Cell states, `(L + 1) x H` with a zero initial state.
    pub c: Vec<f64>,
    /// Hidden states, `(L + 1) x H` with a zero initial state.
    pub h: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmTrace {
    /// Hidden state of the step that processed position `pos`.
    fn hidden_at(&self, pos: usize, hdim: usize) -> &[f64] {
        let k = self.order.iter().position(|&p| p == pos).expect("position in sequence");
        &self.h[(k + 1) * hdim..(k + 2) * hdim]
    }
}

fn lstm_forward(w: &[f64], off: LstmOffsets, hdim: usize, xdim: usize, xs: &[f64], order: Vec<usize>) -> LstmTrace {
    let l = order.len();
    let zdim = hdim + xdim;
    let wm = &w[off.w..off.w + 4 * hdim * zdim];
    let b = &w[off.b..off.b + 4 * hdim];
    let mut tr = LstmTrace {
        z: vec![0.0; l * zdim],
        gates: vec![0.0; l * 4 * hdim],
        c: vec![0.0; (l + 1) * hdim],
        h: vec![0.0; (l + 1) * hdim],
        tanh_c: vec![0.0; l * hdim],
        order,
    };
    for k in 0..l {
        let pos = tr.order[k];
        let (zk, _) = tr.z[k * zdim..].split_at_mut(zdim);
        zk[..hdim].copy_from_slice(&tr.h[k * hdim..(k + 1) * hdim]);
        zk[hdim..].copy_from_slice(&xs[pos * xdim..(pos + 1) * xdim]);
        let g = &mut tr.gates[k * 4 * hdim..(k + 1) * 4 * hdim];
        g.copy_from_slice(b);
        matvec_acc(wm, zdim, 0, zk, g);
        for v in &mut g[..3 * hdim] {
            *v = sigmoid(*v);
        }
        for v in &mut g[3 * hdim..] {
            *v = v.tanh();
        }
        for j in 0..hdim {
            let (i, f, o, cc) = (g[j], g[hdim + j], g[2 * hdim + j], g[3 * hdim + j]);
            let c = f * tr.c[k * hdim + j] + i * cc;
            tr.c[(k + 1) * hdim + j] = c;
            let tc = c.tanh();
            tr.tanh_c[k * hdim + j] = tc;
            tr.h[(k + 1) * hdim + j] = o * tc;
        }
    }
    tr
}

/// Backpropagates per-position hidden gradients `dh_pos` (`L x H`) through
/// one direction, accumulating weight gradients into `grad` and input
/// gradients into `dx` (`L x X`).
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    w: &[f64],
    grad: &mut [f64],
    off: LstmOffsets,
    hdim: usize,
    xdim: usize,
    tr: &LstmTrace,
    dh_pos: &[f64],
    dx: &mut [f64],
) {
    let l = tr.order.len();
    let zdim = hdim + xdim;
    let wm = &w[off.w..off.w + 4 * hdim * zdim];
    let mut dh_next = vec![0.0; hdim];
    let mut dc_next = vec![0.0; hdim];
    let mut da = vec![0.0; 4 * hdim];
    let mut dz = vec![0.0; zdim];
    for k in (0..l).rev() {
        let pos = tr.order[k];
        let g = &tr.gates[k * 4 * hdim..(k + 1) * 4 * hdim];
        for j in 0..hdim {
            let dh = dh_pos[pos * hdim + j] + dh_next[j];
            let (i, f, o, cc) = (g[j], g[hdim + j], g[2 * hdim + j], g[3 * hdim + j]);
            let tc = tr.tanh_c[k * hdim + j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let c_prev = tr.c[k * hdim + j];
            da[j] = dc * cc * i * (1.0 - i);
            da[hdim + j] = dc * c_prev * f * (1.0 - f);
            da[2 * hdim + j] = dh * tc * o * (1.0 - o);
            da[3 * hdim + j] = dc * i * (1.0 - cc * cc);
            dc_next[j] = dc * f;
        }
        let zk = &tr.z[k * zdim..(k + 1) * zdim];
        outer_acc(&mut grad[off.w..off.w + 4 * hdim * zdim], zdim, 0, &da, zk);
        axpy(1.0, &da, &mut grad[off.b..off.b + 4 * hdim]);
        dz.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(wm, zdim, 0, &da, &mut dz);
        dh_next.copy_from_slice(&dz[..hdim]);
        axpy(1.0, &dz[hdim..], &mut dx[pos * xdim..(pos + 1) * xdim]);
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct GruTrace {
    /// Constant input `[r_att; m]`.
    pub u: Vec<f64>,
    /// `W_{z,r,h}[:, H..] u`, `3 x H`.
    pub ux: Vec<f64>,
    /// States `(G + 1) x H`, zero initial state.
    pub g: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub rg: Vec<f64>,
    pub hh: Vec<f64>,
}

fn gru_forward(w: &[f64], gru: usize, hdim: usize, u: Vec<f64>, steps: usize) -> GruTrace {
    let stride = hdim + u.len();
    let block = hdim * stride;
    let wz = &w[gru..gru + block];
    let wr = &w[gru + block..gru + 2 * block];
    let wh = &w[gru + 2 * block..gru + 3 * block];
    let mut ux = vec![0.0; 3 * hdim];
    for (k, wg) in [wz, wr, wh].iter().enumerate() {
        matvec_acc(wg, stride, hdim, &u, &mut ux[k * hdim..(k + 1) * hdim]);
    }
    let mut tr = GruTrace {
        g: vec![0.0; (steps + 1) * hdim],
        z: vec![0.0; steps * hdim],
        r: vec![0.0; steps * hdim],
        rg: vec![0.0; steps * hdim],
        hh: vec![0.0; steps * hdim],
        ux,
        u,
    };
    let mut tmp = vec![0.0; hdim];
    for s in 0..steps {
        let g_prev = tr.g[s * hdim..(s + 1) * hdim].to_vec();
        let span = s * hdim..(s + 1) * hdim;
        tmp.copy_from_slice(&tr.ux[..hdim]);
        matvec_acc(wz, stride, 0, &g_prev, &mut tmp);
        for (o, v) in tr.z[span.clone()].iter_mut().zip(&tmp) {
            *o = sigmoid(*v);
        }
        tmp.copy_from_slice(&tr.ux[hdim..2 * hdim]);
        matvec_acc(wr, stride, 0, &g_prev, &mut tmp);
        for (o, v) in tr.r[span.clone()].iter_mut().zip(&tmp) {
            *o = sigmoid(*v);
        }
        for j in 0..hdim {
            tr.rg[s * hdim + j] = tr.r[s * hdim + j] * g_prev[j];
        }
        tmp.copy_from_slice(&tr.ux[2 * hdim..]);
        matvec_acc(wh, stride, 0, &tr.rg[span.clone()], &mut tmp);
        for j in 0..hdim {
            let hh = tmp[j].tanh();
            tr.hh[s * hdim + j] = hh;
            let z = tr.z[s * hdim + j];
            tr.g[(s + 1) * hdim + j] = (1.0 - z) * g_prev[j] + z * hh;
        }
    }
    tr
}

/// Returns `dL/du`.
fn gru_backward(w: &[f64], grad: &mut [f64], gru: usize, hdim: usize, tr: &GruTrace, dg_out: &[f64]) -> Vec<f64> {
    let udim = tr.u.len();
    let stride = hdim + udim;
    let block = hdim * stride;
    let steps = tr.z.len() / hdim;
    let mut dg = dg_out.to_vec();
    let mut sum_da = vec![0.0; 3 * hdim];
    let (mut daz, mut dar, mut dah) = (vec![0.0; hdim], vec![0.0; hdim], vec![0.0; hdim]);
    let mut drg = vec![0.0; hdim];
    for s in (0..steps).rev() {
        let at = s * hdim;
        let g_prev = &tr.g[at..at + hdim];
        let mut dg_prev = vec![0.0; hdim];
        for j in 0..hdim {
            let (z, hh) = (tr.z[at + j], tr.hh[at + j]);
            let dz = dg[j] * (hh - g_prev[j]);
            dah[j] = dg[j] * z * (1.0 - hh * hh);
            daz[j] = dz * z * (1.0 - z);
            dg_prev[j] = dg[j] * (1.0 - z);
        }
        let (wz, rest) = grad[gru..gru + 3 * block].split_at_mut(block);
        let (wr, wh) = rest.split_at_mut(block);
        outer_acc(wh, stride, 0, &dah, &tr.rg[at..at + hdim]);
        drg.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(&w[gru + 2 * block..gru + 3 * block], stride, 0, &dah, &mut drg);
        for j in 0..hdim {
            let r = tr.r[at + j];
            dar[j] = drg[j] * g_prev[j] * r * (1.0 - r);
            dg_prev[j] += drg[j] * r;
        }
        outer_acc(wz, stride, 0, &daz, g_prev);
        outer_acc(wr, stride, 0, &dar, g_prev);
        matvec_t_acc(&w[gru..gru + block], stride, 0, &daz, &mut dg_prev);
        matvec_t_acc(&w[gru + block..gru + 2 * block], stride, 0, &dar, &mut dg_prev);
        axpy(1.0, &daz, &mut sum_da[..hdim]);
        axpy(1.0, &dar, &mut sum_da[hdim..2 * hdim]);
        axpy(1.0, &dah, &mut sum_da[2 * hdim..]);
        dg = dg_prev;
    }
    let mut du = vec![0.0; udim];
    for k in 0..3 {
        let o = gru + k * block;
        let da = &sum_da[k * hdim..(k + 1) * hdim];
        outer_acc(&mut grad[o..o + block], stride, hdim, da, &tr.u);
        matvec_t_acc(&w[o..o + block], stride, hdim, da, &mut du);
    }
    du
}

impl NetParams {
    fn check(&self, s: &Encoded) -> Result<(), NetError> {
        if s.is_empty() || s.hot.len() != s.len() || s.air_ci.len() != s.len() {
            return Err(NetError::Shape("sample steps are empty or inconsistent".into()));
        }
        if s.context.len() != self.shape.context_dim {
            return Err(NetError::Shape(format!("context width {} != {}", s.context.len(), self.shape.context_dim)));
        }
        if s.locs.iter().any(|&l| l >= self.shape.n_loc) {
            return Err(NetError::Shape("location index out of range".into()));
        }
        if s.label >= N_CLASSES {
            return Err(NetError::Shape(format!("label {} out of range", s.label)));
        }
        Ok(())
    }

    pub fn forward(&self, s: &Encoded, ab: &Ablation) -> Result<ForwardTrace, NetError> {
        self.check(s)?;
        let sh = &self.shape;
        let (hdim, e, t, xdim) = (sh.hidden, sh.loc_dim, sh.time_dim, sh.x_dim());
        let w = &self.data;
        let l = s.len();

        let mut x = vec![0.0; l * xdim];
        for p in 0..l {
            let row = &mut x[p * xdim..(p + 1) * xdim];
            let emb = self.off.loc_emb + s.locs[p] * e;
            row[..e].copy_from_slice(&w[emb..emb + e]);
            for &k in &s.hot[p] {
                let at = self.off.time_proj + k * t;
                axpy(1.0, &w[at..at + t], &mut row[e..]);
            }
        }

        let fwd = lstm_forward(w, self.off.lstm[0], hdim, xdim, &x, (0..l).collect());
        let bwd = (!ab.no_bilstm).then(|| lstm_forward(w, self.off.lstm[1], hdim, xdim, &x, (0..l).rev().collect()));
        let mut hidden = vec![0.0; l * hdim];
        for p in 0..l {
            let row = &mut hidden[p * hdim..(p + 1) * hdim];
            row.copy_from_slice(fwd.hidden_at(p, hdim));
            if let Some(b) = &bwd {
                axpy(1.0, b.hidden_at(p, hdim), row);
            }
        }

        let mut context = s.context.clone();
        if ab.no_pkg_features {
            for &k in &PKG_CONTEXT {
                context[k] = 0.0;
            }
        }
        let kk = hdim.min(context.len());
        let phase = s.initial_phase && !ab.no_two_phase;
        let scores: Vec<f64> = (0..l)
            .map(|p| {
                let base = dot(&hidden[p * hdim..p * hdim + kk], &context[..kk]);
                if phase { base + TWO_PHASE_GAIN * s.air_ci[p] } else { base }
            })
            .collect();
        let alpha = if ab.no_attention { vec![1.0 / l as f64; l] } else { softmax(&scores) };
        let mut pooled = vec![0.0; hdim];
        for p in 0..l {
            axpy(alpha[p], &hidden[p * hdim..(p + 1) * hdim], &mut pooled);
        }

        let mut u = pooled.clone();
        u.extend_from_slice(&context);
        let gru = gru_forward(w, self.off.gru, hdim, u, l);
        let g_last = &gru.g[l * hdim..(l + 1) * hdim];
        let mut logits = w[self.off.out_b..self.off.out_b + N_CLASSES].to_vec();
        matvec_acc(&w[self.off.out_w..self.off.out_w + N_CLASSES * hdim], hdim, 0, g_last, &mut logits);
        let probs = softmax(&logits);

        Ok(ForwardTrace {
            x,
            fwd,
            bwd,
            hidden,
            scores,
            attention: (!ab.no_attention).then_some(alpha),
            pooled,
            context,
            gru,
            probs,
        })
    }

    /// Adds `scale * dLoss/dparams` for one sample to `grad` and returns the
    /// sample's (clamped) cross-entropy loss.
    pub fn backward(&self, s: &Encoded, tr: &ForwardTrace, grad: &mut [f64], scale: f64) -> f64 {
        let sh = &self.shape;
        let (hdim, e, t, xdim) = (sh.hidden, sh.loc_dim, sh.time_dim, sh.x_dim());
        let w = &self.data;
        let l = s.len();
        let loss = -tr.probs[s.label].max(1e-12).ln();

        let mut dlogits: Vec<f64> = tr.probs.iter().map(|p| scale * p).collect();
        dlogits[s.label] -= scale;
        let g_last = &tr.gru.g[l * hdim..(l + 1) * hdim];
        outer_acc(&mut grad[self.off.out_w..self.off.out_w + N_CLASSES * hdim], hdim, 0, &dlogits, g_last);
        axpy(1.0, &dlogits, &mut grad[self.off.out_b..self.off.out_b + N_CLASSES]);
        let mut dg = vec![0.0; hdim];
        matvec_t_acc(&w[self.off.out_w..self.off.out_w + N_CLASSES * hdim], hdim, 0, &dlogits, &mut dg);

        let du = gru_backward(w, grad, self.off.gru, hdim, &tr.gru, &dg);
        let dpooled = &du[..hdim];

        let mut dhidden = vec![0.0; l * hdim];
        match &tr.attention {
            Some(alpha) => {
                let dalpha: Vec<f64> = (0..l).map(|p| dot(dpooled, &tr.hidden[p * hdim..(p + 1) * hdim])).collect();
                let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                let kk = hdim.min(tr.context.len());
                for p in 0..l {
                    let row = &mut dhidden[p * hdim..(p + 1) * hdim];
                    axpy(alpha[p], dpooled, row);
                    let ds = alpha[p] * (dalpha[p] - mean);
                    axpy(ds, &tr.context[..kk], &mut row[..kk]);
                }
            }
            None => {
                for p in 0..l {
                    axpy(1.0 / l as f64, dpooled, &mut dhidden[p * hdim..(p + 1) * hdim]);
                }
            }
        }

        let mut dx = vec![0.0; l * xdim];
        lstm_backward(w, grad, self.off.lstm[0], hdim, xdim, &tr.fwd, &dhidden, &mut dx);
        if let Some(b) = &tr.bwd {
            lstm_backward(w, grad, self.off.lstm[1], hdim, xdim, b, &dhidden, &mut dx);
        }
        for p in 0..l {
            let row = &dx[p * xdim..(p + 1) * xdim];
            let emb = self.off.loc_emb + s.locs[p] * e;
            axpy(1.0, &row[..e], &mut grad[emb..emb + e]);
            for &k in &s.hot[p] {
                let at = self.off.time_proj + k * t;
                axpy(1.0, &row[e..], &mut grad[at..at + t]);
            }
        }
        loss
    }
}
