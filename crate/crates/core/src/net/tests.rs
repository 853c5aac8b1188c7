use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("l{i:02}")).collect()
}

fn random_sample(rng: &mut ChaCha8Rng, n_loc: usize, len: usize) -> RegionSample {
    let steps = (0..len)
        .map(|_| SampleStep {
            location: format!("l{:02}", rng.gen_range(0..n_loc)),
            day: rng.gen_range(0..7),
            timestamp: rng.gen_range(0..7 * 86_400),
            duration_s: rng.gen_range(0..30_000),
            air_ci: rng.gen_range(0.0..1.0),
        })
        .collect();
    RegionSample {
        region_id: "r".into(),
        steps,
        context: (0..CONTEXT_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        initial_phase: rng.gen_bool(0.5),
        label: HotspotClass::from_index(rng.gen_range(0..N_CLASSES)).unwrap(),
    }
}

fn small_params(seed: u64) -> NetParams {
    NetParams::init(NetShape::new(6, 3, 3, 4), ids(6), seed).unwrap()
}

fn all_ablations() -> Vec<Ablation> {
    let mut v = Vec::new();
    for bits in 0..16u8 {
        v.push(Ablation {
            no_pkg_features: bits & 1 != 0,
            no_attention: bits & 2 != 0,
            no_bilstm: bits & 4 != 0,
            no_two_phase: bits & 8 != 0,
        });
    }
    v
}

// Straightforward re-implementation over named tensors, used as an oracle.
mod reference {
    use super::*;

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn row_dot(p: &NetParams, name: &str, r: usize, x: &[f64]) -> f64 {
        let s = p.specs().iter().find(|s| s.name == name).unwrap();
        assert_eq!(s.cols, x.len(), "{name}");
        let w = p.tensor(name).unwrap();
        (0..s.cols).map(|c| w[r * s.cols + c] * x[c]).sum()
    }

    fn lstm(p: &NetParams, dir: &str, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let h = p.shape.hidden;
        let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
        let mut out = Vec::new();
        for x in xs {
            let z: Vec<f64> = hp.iter().chain(x).copied().collect();
            let gate = |g: &str, r: usize| row_dot(p, &format!("{dir}.W_{g}"), r, &z) + p.tensor(&format!("{dir}.b_{g}")).unwrap()[r];
            let mut hn = vec![0.0; h];
            let mut cn = vec![0.0; h];
            for r in 0..h {
                let i = sig(gate("i", r));
                let f = sig(gate("f", r));
                let o = sig(gate("o", r));
                let c = gate("c", r).tanh();
                cn[r] = f * cp[r] + i * c;
                hn[r] = o * cn[r].tanh();
            }
            hp = hn.clone();
            cp = cn;
            out.push(hn);
        }
        out
    }

    pub fn forward(p: &NetParams, s: &Encoded, ab: &Ablation) -> Vec<f64> {
        let sh = p.shape;
        let xs: Vec<Vec<f64>> = (0..s.len())
            .map(|t| {
                let emb = p.tensor("loc_emb").unwrap();
                let tp = p.tensor("time_proj").unwrap();
                let mut x: Vec<f64> = emb[s.locs[t] * sh.loc_dim..(s.locs[t] + 1) * sh.loc_dim].to_vec();
                for j in 0..sh.time_dim {
                    x.push(s.hot[t].iter().map(|&k| tp[k * sh.time_dim + j]).sum());
                }
                x
            })
            .collect();
        let mut hs = lstm(p, "lstm_fwd", &xs);
        if !ab.no_bilstm {
            let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
            let mut b = lstm(p, "lstm_bwd", &rev);
            b.reverse();
            for (h, hb) in hs.iter_mut().zip(b) {
                for (a, c) in h.iter_mut().zip(hb) {
                    *a += c;
                }
            }
        }
        let mut m = s.context.clone();
        if ab.no_pkg_features {
            for k in PKG_CONTEXT {
                m[k] = 0.0;
            }
        }
        let l = s.len();
        let alpha: Vec<f64> = if ab.no_attention {
            vec![1.0 / l as f64; l]
        } else {
            let sc: Vec<f64> = (0..l)
                .map(|t| {
                    let d: f64 = hs[t].iter().zip(&m).map(|(a, b)| a * b).sum();
                    if s.initial_phase && !ab.no_two_phase { d + TWO_PHASE_GAIN * s.air_ci[t] } else { d }
                })
                .collect();
            let mx = sc.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = sc.iter().map(|v| (v - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        };
        let h = sh.hidden;
        let mut r = vec![0.0; h];
        for t in 0..l {
            for k in 0..h {
                r[k] += alpha[t] * hs[t][k];
            }
        }
        let mut g = vec![0.0; h];
        for _ in 0..l {
            let gu: Vec<f64> = g.iter().chain(&r).chain(&m).copied().collect();
            let z: Vec<f64> = (0..h).map(|q| sig(row_dot(p, "gru.W_z", q, &gu))).collect();
            let rr: Vec<f64> = (0..h).map(|q| sig(row_dot(p, "gru.W_r", q, &gu))).collect();
            let rgu: Vec<f64> = (0..h).map(|q| rr[q] * g[q]).chain(r.iter().copied()).chain(m.iter().copied()).collect();
            let hh: Vec<f64> = (0..h).map(|q| row_dot(p, "gru.W_h", q, &rgu).tanh()).collect();
            g = (0..h).map(|q| (1.0 - z[q]) * g[q] + z[q] * hh[q]).collect();
        }
        let logits: Vec<f64> = (0..N_CLASSES).map(|k| row_dot(p, "out.W", k, &g) + p.tensor("out.b").unwrap()[k]).collect();
        let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    }
}

#[test]
fn zero_weights_give_uniform_output() {
    let p = NetParams::zeros(NetShape::new(3, 2, 2, 4), ids(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = p.encode(&random_sample(&mut rng, 3, 4)).unwrap();
    let tr = p.forward(&s, &Ablation::full()).unwrap();
    for v in tr.probs {
        assert!((v - 0.2).abs() < 1e-15);
    }
}

#[test]
fn hand_set_two_unit_forward_matches_golden() {
    let mut p = NetParams::zeros(NetShape::new(1, 1, 1, 2), vec!["a".into()]).unwrap();
    for (i, v) in p.data.iter_mut().enumerate() {
        *v = ((i * 37 % 19) as f64 - 9.0) / 20.0;
    }
    let sample = RegionSample {
        region_id: "r".into(),
        steps: vec![SampleStep { location: "a".into(), day: 2, timestamp: 5 * 3600 + 100, duration_s: 1800, air_ci: 0.7 }],
        context: (0..CONTEXT_DIM).map(|k| (k + 1) as f64 / 20.0 - 0.4).collect(),
        initial_phase: true,
        label: HotspotClass::C2,
    };
    let enc = p.encode(&sample).unwrap();
    let probs = p.forward(&enc, &Ablation::full()).unwrap().probs;
    let golden = [0.22677489361463832, 0.21747558763854025, 0.19305832523877803, 0.18514162683794336, 0.17754956667010002];
    for (a, b) in probs.iter().zip(golden) {
        assert!((a - b).abs() < 1e-12, "{probs:?}");
    }
}

#[test]
fn forward_matches_reference_under_every_ablation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for ab in all_ablations() {
        let p = small_params(rng.gen());
        for _ in 0..10 {
            let len = rng.gen_range(1..6);
            let s = p.encode(&random_sample(&mut rng, 6, len)).unwrap();
            let got = p.forward(&s, &ab).unwrap().probs;
            let want = reference::forward(&p, &s, &ab);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{ab:?}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let p = small_params(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = random_sample(&mut rng, 6, 3);
    s.context.pop();
    assert!(matches!(p.encode(&s), Err(NetError::Shape(_))));
    let mut s = random_sample(&mut rng, 6, 3);
    s.steps[0].location = "nowhere".into();
    assert!(matches!(p.encode(&s), Err(NetError::UnknownLocation(_))));
    let s = RegionSample { steps: vec![], ..random_sample(&mut rng, 6, 1) };
    assert!(p.encode(&s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outputs_and_attention_are_distributions(seed in any::<u64>(), len in 1usize..8, bits in 0u8..16) {
        let ab = all_ablations()[bits as usize];
        let p = small_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        let s = p.encode(&random_sample(&mut rng, 6, len)).unwrap();
        let tr = p.forward(&s, &ab).unwrap();
        prop_assert!(tr.probs.iter().all(|v| *v >= 0.0));
        prop_assert!((tr.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        match &tr.attention {
            Some(a) => {
                prop_assert!(!ab.no_attention);
                prop_assert_eq!(a.len(), len);
                prop_assert!(a.iter().all(|v| *v >= 0.0));
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            None => prop_assert!(ab.no_attention),
        }
    }
}

#[test]
fn batching_does_not_change_outputs() {
    let p = small_params(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<Encoded> = (0..12).map(|_| p.encode(&random_sample(&mut rng, 6, 4)).unwrap()).collect();
    let ab = Ablation::full();
    let together = p.forward_batch(&batch, &ab).unwrap();
    let mut rev = batch.clone();
    rev.reverse();
    let reversed = p.forward_batch(&rev, &ab).unwrap();
    for (i, s) in batch.iter().enumerate() {
        let alone = p.forward(s, &ab).unwrap().probs;
        for k in 0..N_CLASSES {
            assert!((alone[k] - together[i][k]).abs() <= 1e-12);
            assert!((alone[k] - reversed[batch.len() - 1 - i][k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn cross_entropy_examples() {
    let one_hot = vec![0.0, 1.0, 0.0, 0.0, 0.0];
    let uniform = vec![0.2; 5];
    let y = HotspotClass::C2;
    assert_eq!(cross_entropy_loss(&[one_hot.clone()], &[y]).unwrap(), 0.0);
    assert!((cross_entropy_loss(&[uniform.clone()], &[y]).unwrap() - 5f64.ln()).abs() < 1e-12);
    let both = cross_entropy_loss(&[one_hot, uniform], &[y, y]).unwrap();
    assert!((both - 5f64.ln() / 2.0).abs() < 1e-12);
    assert!((both - 0.8047).abs() < 1e-4);
    let zero = cross_entropy_loss(&[vec![1.0, 0.0, 0.0, 0.0, 0.0]], &[y]).unwrap();
    assert!((zero + 1e-12f64.ln()).abs() < 1e-9);
    assert!(cross_entropy_loss(&[], &[]).is_err());
}

#[test]
fn gradient_check_over_twenty_seeds() {
    for seed in 0..20u64 {
        let p = small_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let samples: Vec<RegionSample> = (0..10)
            .map(|_| {
                let len = rng.gen_range(1..5);
                random_sample(&mut rng, 6, len)
            })
            .collect();
        let ab = all_ablations()[(seed % 16) as usize];
        let err = gradient_check(&p, &samples, 1e-5, &ab).unwrap();
        assert!(err < 1e-4, "seed {seed} {ab:?}: {err}");
    }
}

#[test]
fn ablated_branch_has_zero_gradient() {
    let p = small_params(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let enc: Vec<Encoded> = (0..4).map(|_| p.encode(&random_sample(&mut rng, 6, 3)).unwrap()).collect();
    let ab = Ablation { no_bilstm: true, ..Ablation::full() };
    let (_, grad) = p.loss_and_gradient(&enc, &ab).unwrap();
    for s in p.specs().iter().filter(|s| s.name.starts_with("lstm_bwd")) {
        assert!(grad[s.range()].iter().all(|g| *g == 0.0), "{}", s.name);
    }
    let samples: Vec<RegionSample> = (0..4).map(|_| random_sample(&mut rng, 6, 3)).collect();
    assert!(gradient_check(&p, &samples, 1e-5, &ab).unwrap() < 1e-4);
}

#[test]
fn gradient_check_rejects_large_epsilon() {
    let p = small_params(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = vec![random_sample(&mut rng, 6, 2)];
    assert!(matches!(gradient_check(&p, &s, 1e-2, &Ablation::full()), Err(NetError::Config(_))));
    assert!(gradient_check(&p, &s, 1e-8, &Ablation::full()).is_err());
}

fn separable(n: usize, seed: u64) -> Vec<RegionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut s = random_sample(&mut rng, 4, 3);
            let label = if i % 2 == 0 { HotspotClass::C1 } else { HotspotClass::C3 };
            s.context[ctx::DENSITY] = if label == HotspotClass::C1 { 1.0 } else { -1.0 };
            s.label = label;
            s
        })
        .collect()
}

fn tiny_cfg(seed: u64) -> TrainConfig {
    TrainConfig { cell_size: 8, loc_dim: 3, time_dim: 3, epochs: 100, learning_rate: 1e-2, seed, ..TrainConfig::default() }
}

#[test]
fn training_on_separable_data_drops_loss_tenfold() {
    let data = separable(40, 11);
    let res = train(&data, &tiny_cfg(4)).unwrap();
    assert_eq!(res.loss_curve.len(), 100);
    let (first, last) = (res.loss_curve[0], *res.loss_curve.last().unwrap());
    assert!(last < 0.1 * first, "{first} -> {last}");
    let (acc, _) = evaluate(&res.params, &data).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn training_is_deterministic() {
    let data = separable(20, 2);
    let cfg = TrainConfig { epochs: 5, ..tiny_cfg(9) };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_curve, b.loss_curve);
    let c = train(&data, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.params.data, c.params.data);
}

#[test]
fn training_rejects_degenerate_inputs() {
    let mut data = separable(6, 1);
    for s in &mut data {
        s.label = HotspotClass::C4;
    }
    assert!(matches!(train(&data, &tiny_cfg(0)), Err(NetError::Dataset(_))));
    assert!(matches!(train(&[], &tiny_cfg(0)), Err(NetError::Dataset(_))));
    let bad = TrainConfig { batch_size: 0, ..tiny_cfg(0) };
    assert!(matches!(train(&separable(6, 1), &bad), Err(NetError::Config(_))));
}

#[test]
fn trained_flags_are_used_at_prediction() {
    let data = separable(10, 3);
    let cfg = TrainConfig { epochs: 2, ablation: Ablation { no_attention: true, ..Ablation::full() }, ..tiny_cfg(1) };
    let res = train(&data, &cfg).unwrap();
    assert!(res.params.flags.no_attention);
    let enc = res.params.encode(&data[0]).unwrap();
    let want = res.params.forward(&enc, &cfg.ablation).unwrap().probs;
    assert_eq!(predict(&res.params, &data[0]).unwrap().1, want);
}

#[test]
fn params_round_trip_through_text() {
    let mut p = small_params(8);
    p.flags.no_two_phase = true;
    let mut buf = Vec::new();
    p.save(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with(PARAMS_HEADER));
    let q = NetParams::load(buf.as_slice()).unwrap();
    assert_eq!(p, q);
    let mut again = Vec::new();
    q.save(&mut again).unwrap();
    assert_eq!(buf, again);

    let text = String::from_utf8(buf).unwrap().replacen("tensor loc_emb", "tensor nope", 1);
    assert!(matches!(NetParams::load(text.as_bytes()), Err(NetError::Parse { line: 5, .. })));
}
