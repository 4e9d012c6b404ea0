use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scalar-loop GRU used as an independent reference.
fn reference_gru(wi: &Tensor, wh: &Tensor, b: &[f64], x: &[f64], h: &[f64]) -> Vec<f64> {
    let hs = h.len();
    let lin = |w: &Tensor, row: usize, v: &[f64]| -> f64 { (0..v.len()).map(|c| w.row(row)[c] * v[c]).sum() };
    let s = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut out = vec![0.0; hs];
    let z: Vec<f64> = (0..hs).map(|k| s(lin(wi, k, x) + lin(wh, k, h) + b[k])).collect();
    let r: Vec<f64> = (0..hs).map(|k| s(lin(wi, hs + k, x) + lin(wh, hs + k, h) + b[hs + k])).collect();
    let rh: Vec<f64> = (0..hs).map(|k| r[k] * h[k]).collect();
    for k in 0..hs {
        let n = (lin(wi, 2 * hs + k, x) + lin(wh, 2 * hs + k, &rh) + b[2 * hs + k]).tanh();
        out[k] = (1.0 - z[k]) * h[k] + z[k] * n;
    }
    out
}

#[test]
fn gru_with_zero_weights_stays_at_zero() {
    let mut store = ParamStore::new();
    let gru = GruStack::new(&mut store, "g", 1, 3, 4, &mut rng(1));
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::row_vector(vec![1.0, -2.0, 0.5]));
    let h = tape.input(Tensor::zeros(1, 4));
    let out = gru.step(&mut tape, &[h], x).unwrap();
    assert_eq!(tape.shape(out[0]), [1, 4]);
    assert!(tape.value(out[0]).iter().all(|&v| v == 0.0));
}

#[test]
fn gru_stack_matches_scalar_reference() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let gru = GruStack::new(&mut store, "g", 2, 3, 2, &mut r);
    let x: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
    let h0: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
    let h1: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut tape = Tape::new(&store);
    let xv = tape.input(Tensor::row_vector(x.clone()));
    let a = tape.input(Tensor::row_vector(h0.clone()));
    let b = tape.input(Tensor::row_vector(h1.clone()));
    let out = gru.step(&mut tape, &[a, b], xv).unwrap();
    let p = |name: &str| store.get(store.find(name).unwrap()).clone();
    let l0 = reference_gru(&p("g.0.w_ih"), &p("g.0.w_hh"), p("g.0.b").data(), &x, &h0);
    let l1 = reference_gru(&p("g.1.w_ih"), &p("g.1.w_hh"), p("g.1.b").data(), &l0, &h1);
    for (got, want) in tape.value(out[0]).iter().zip(&l0) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in tape.value(out[1]).iter().zip(&l1) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn gru_rejects_bad_shapes() {
    let mut store = ParamStore::new();
    let gru = GruStack::new(&mut store, "g", 2, 3, 2, &mut rng(3));
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::zeros(1, 4));
    let h = tape.input(Tensor::zeros(1, 2));
    assert!(gru.step(&mut tape, &[h, h], x).is_err());
    let x = tape.input(Tensor::zeros(1, 3));
    assert!(gru.step(&mut tape, &[h], x).is_err());
}

#[test]
fn mlp_cases() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", 1, 1, 1, &mut rng(4));
    // hand case: w1=2, b1=-1, w2=-3, b2=0.5, x=3 -> relu(5)=5 -> -14.5
    let set = |store: &mut ParamStore, name: &str, v: f64| {
        let id = store.find(name).unwrap();
        store.get_mut(id).data_mut()[0] = v;
    };
    set(&mut store, "m.0.w", 2.0);
    set(&mut store, "m.0.b", -1.0);
    set(&mut store, "m.1.w", -3.0);
    set(&mut store, "m.1.b", 0.5);
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::row_vector(vec![3.0]));
    let y = mlp.forward(&mut tape, x);
    assert!((tape.value(y)[0] + 14.5).abs() < 1e-9);
    // negative pre-activation is cut by the ReLU
    let x = tape.input(Tensor::row_vector(vec![-1.0]));
    let y = mlp.forward(&mut tape, x);
    assert!((tape.value(y)[0] - 0.5).abs() < 1e-9);
}

#[test]
fn zero_mlp_gives_uniform_softmax() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", 5, 7, 4, &mut rng(5));
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::row_vector(vec![1.0; 5]));
    let y = mlp.forward(&mut tape, x);
    assert_eq!(tape.value(y), &[0.0; 4]);
    let loss = tape.xent(y, 2, None, 1.0).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn mlp_rows_are_independent() {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", 3, 5, 2, &mut r);
    let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let mut tape = Tape::new(&store);
    let batch = tape.input(Tensor::from_vec(4, 3, rows.concat()).unwrap());
    let yb = mlp.forward(&mut tape, batch);
    assert_eq!(tape.shape(yb), [4, 2]);
    let batch_out = tape.value(yb).to_vec();
    for (i, row) in rows.iter().enumerate() {
        let x = tape.input(Tensor::row_vector(row.clone()));
        let y = mlp.forward(&mut tape, x);
        assert_eq!(tape.value(y), &batch_out[i * 2..i * 2 + 2]);
    }
}

#[test]
fn softmax_xent_cases() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let uniform = tape.input(Tensor::row_vector(vec![0.3; 6]));
    assert!((tape.xent(uniform, 1, None, 1.0).unwrap() - 6f64.ln()).abs() < 1e-12);

    let logits = tape.input(Tensor::row_vector(vec![0.2, -1.3, 2.5, 0.7]));
    let only = [false, true, false, false];
    assert!(tape.xent(logits, 1, Some(&only), 1.0).unwrap().abs() < 1e-15);
    assert_eq!(tape.xent(logits, 0, Some(&only), 1.0), Err(NnError::TargetMasked(0)));
    assert_eq!(tape.xent(logits, 0, Some(&[false; 4]), 1.0), Err(NnError::TargetMasked(0)));
    assert_eq!(log_softmax(&[1.0, 2.0], Some(&[false, false])), Err(NnError::AllMasked));

    // brute-force renormalized probability with category 2 masked
    let raw = [0.2f64, -1.3, 2.5, 0.7];
    let mask = [true, true, false, true];
    let z: f64 = [0, 1, 3].iter().map(|&k| raw[k].exp()).sum();
    for target in [0, 1, 3] {
        let want = -(raw[target].exp() / z).ln();
        let got = tape.xent(logits, target, Some(&mask), 1.0).unwrap();
        assert!((got - want).abs() < 1e-10);
    }
    let lp = log_softmax(&raw, Some(&mask)).unwrap();
    let total: f64 = lp.iter().map(|l| l.exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(lp[2], f64::NEG_INFINITY);
}

/// Small network touching every op, used for gradient checks.
fn composite_loss(store: &ParamStore, gru: &GruStack, mlp: &Mlp, emb: ParamId) -> (f64, Grads, u64) {
    let mut tape = Tape::new(store);
    let e0 = tape.embed(emb, 1);
    let e1 = tape.embed(emb, 2);
    let x = tape.concat(&[e0, e1]);
    let h = tape.input(Tensor::row_vector(vec![0.1, -0.2, 0.3]));
    let hs = gru.step(&mut tape, &[h, h], x).unwrap();
    let hs = gru.step(&mut tape, &hs, x).unwrap();
    let logits = mlp.forward(&mut tape, hs[1]);
    tape.xent(logits, 2, None, 0.7).unwrap();
    tape.xent(logits, 0, Some(&[true, false, true, true]), 1.3).unwrap();
    tape.entropy(logits, Some(&[true, false, true, true]), 0.7).unwrap();
    tape.entropy(logits, None, -0.4).unwrap();
    // graph-style ops on a 3-row block
    let rows = tape.input(Tensor::from_vec(3, 2, vec![0.5, -1.0, 0.2, 0.3, -0.7, 0.9]).unwrap());
    let adj = Tensor::from_vec(3, 3, vec![0.5, 0.5, 0.0, 0.5, 0.25, 0.25, 0.0, 0.25, 0.75]).unwrap();
    let p = tape.propagate(&adj, rows);
    let feat = tape.concat(&[p, p]);
    let w = store.find("proj.w").unwrap();
    let b = store.find("proj.b").unwrap();
    let y = tape.affine(feat, w, Some(b));
    let y = tape.relu(y);
    let mean = tape.mean_rows(y);
    let sum = tape.sum_rows(y);
    let both = tape.concat(&[mean, sum, hs[0]]);
    let head = store.find("head.w").unwrap();
    let out = tape.affine(both, head, None);
    tape.squared_error(out, 0.4, 0.5);
    let signature = tape.signature();
    (tape.loss(), tape.backward(), signature)
}

fn composite_store() -> (ParamStore, GruStack, Mlp, ParamId) {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let emb = store.add("emb", 3, 2, Init::Uniform, &mut r);
    let gru = GruStack::new(&mut store, "g", 2, 4, 3, &mut r);
    let mlp = Mlp::new(&mut store, "m", 3, 5, 4, &mut r);
    store.add("proj.w", 4, 4, Init::Uniform, &mut r);
    store.add("proj.b", 1, 4, Init::Uniform, &mut r);
    store.add("head.w", 1, 11, Init::Uniform, &mut r);
    // nonzero gate biases exercise those paths too
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".b") {
            for v in store.get_mut(id).data_mut() {
                *v = r.gen_range(-0.5..0.5);
            }
        }
    }
    (store, gru, mlp, emb)
}

#[test]
fn composite_gradients_match_finite_differences() {
    let (store, gru, mlp, emb) = composite_store();
    let report = check_gradients(&store, 1e-3, 1e-3, |s| composite_loss(s, &gru, &mlp, emb));
    assert!(report.checked > 100);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn constant_loss_has_zero_gradient() {
    let (store, gru, _, emb) = composite_store();
    let mut tape = Tape::new(&store);
    let e = tape.embed(emb, 0);
    let x = tape.concat(&[e, e]);
    let h = tape.input(Tensor::zeros(1, 3));
    gru.step(&mut tape, &[h, h], x).unwrap();
    let c = tape.input(Tensor::row_vector(vec![2.0]));
    tape.squared_error(c, 1.0, 1.0);
    let g = tape.backward();
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn gradients_are_linear_in_the_loss() {
    let (store, gru, mlp, emb) = composite_store();
    let run = |a: bool, b: bool| {
        let mut tape = Tape::new(&store);
        let e = tape.embed(emb, 1);
        let x = tape.concat(&[e, e]);
        let h = tape.input(Tensor::zeros(1, 3));
        let hs = gru.step(&mut tape, &[h, h], x).unwrap();
        let logits = mlp.forward(&mut tape, hs[1]);
        if a {
            tape.xent(logits, 1, None, 1.0).unwrap();
        }
        if b {
            tape.xent(logits, 3, None, 1.0).unwrap();
        }
        tape.backward()
    };
    let mut sum = run(true, false);
    sum.add_assign(&run(false, true));
    let both = run(true, true);
    for (x, y) in sum.buffers().iter().flatten().zip(both.buffers().iter().flatten()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut store = ParamStore::new();
    store.add("p", 2, 2, Init::Uniform, &mut rng(8));
    let before = store.clone();
    let mut adam = Adam::new(AdamConfig::default(), &store);
    let zero = Grads::zeros(&store);
    for _ in 0..5 {
        adam.step(&mut store, &zero);
    }
    assert_eq!(store, before);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut store = ParamStore::new();
    let id = store.add_tensor("p", Tensor::row_vector(vec![0.0]));
    let mut adam = Adam::new(AdamConfig::default(), &store);
    let g = Grads::from_buffers(&store, vec![vec![1.0]]).unwrap();
    adam.step(&mut store, &g);
    // m̂ = 1, v̂ = 1 -> Δ = −lr / (1 + ε)
    let delta = store.get(id).data()[0];
    assert!((delta + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
}

#[test]
fn adam_minimizes_a_quadratic_bowl() {
    let mut store = ParamStore::new();
    let id = store.add_tensor("p", Tensor::row_vector(vec![3.0, -2.0, 0.5]));
    let centre = [1.0, 0.25, -0.75];
    let cfg = AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(cfg, &store);
    let mut loss = f64::INFINITY;
    for _ in 0..5000 {
        let p = store.get(id).data().to_vec();
        loss = p.iter().zip(&centre).map(|(a, c)| (a - c) * (a - c)).sum();
        if loss < 1e-6 {
            break;
        }
        let g: Vec<f64> = p.iter().zip(&centre).map(|(a, c)| 2.0 * (a - c)).collect();
        let g = Grads::from_buffers(&store, vec![g]).unwrap();
        adam.step(&mut store, &g);
    }
    assert!(loss < 1e-6, "{loss}");
}

#[test]
fn learning_rate_schedule_reaches_target() {
    let k = decay_interval(46_030, 1e-3, 1e-5, 0.999);
    assert_eq!(k, 10);
    let store = ParamStore::new();
    let mut adam = Adam::new(
        AdamConfig {
            decay_every: k,
            ..AdamConfig::default()
        },
        &store,
    );
    assert_eq!(adam.current_lr(), 1e-3);
    adam.step = 46_030;
    assert!(adam.current_lr() <= 1e-5 * 1.001);
    assert!(adam.current_lr() > 0.99e-5);
    assert_eq!(decay_interval(100, 1e-3, 1e-5, 0.999), 1);
    assert_eq!(decay_interval(100, 1e-3, 1e-3, 0.999), 0);
}

#[test]
fn clipping_caps_the_norm() {
    let store = {
        let mut s = ParamStore::new();
        s.add_tensor("p", Tensor::row_vector(vec![0.0, 0.0]));
        s
    };
    let mut g = Grads::from_buffers(&store, vec![vec![30.0, 40.0]]).unwrap();
    assert_eq!(g.clip_norm(5.0), 50.0);
    assert!((g.norm() - 5.0).abs() < 1e-12);
    assert_eq!(g.get(ParamId(0)), &[3.0, 4.0]);
}

#[test]
fn entropy_of_uniform_and_masked_logits() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::row_vector(vec![0.3, 0.3, 0.3, 0.3]));
    let h = tape.entropy(x, None, 0.0).unwrap();
    assert!((h - libm::log(4.0)).abs() < 1e-12);
    let h = tape.entropy(x, Some(&[true, false, false, false]), 0.0).unwrap();
    assert_eq!(h, 0.0);
    let h = tape.entropy(x, Some(&[true, false, true, false]), 2.0).unwrap();
    assert!((h - libm::log(2.0)).abs() < 1e-12);
    assert!((tape.loss() + 2.0 * libm::log(2.0)).abs() < 1e-12);
}
