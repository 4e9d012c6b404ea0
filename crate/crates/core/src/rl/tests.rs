use alloc::string::String;
use alloc::vec::Vec;

use super::*;
use crate::critics::{descriptor, Constant, CriticError};
use crate::graph::MolGraph;
use crate::model::{nll, probe, sample, MolecularRnnConfig, StepKind};
use crate::nn::check_gradients;

fn tiny(max_atoms: usize) -> MolecularRnnConfig {
    MolecularRnnConfig {
        node_embed: 4,
        edge_embed: 2,
        node_hidden: 8,
        node_layers: 2,
        node_mlp_hidden: 6,
        edge_hidden: 4,
        edge_layers: 2,
        edge_mlp_hidden: 5,
        window: 3,
        min_atoms: 1,
        max_atoms,
    }
}

fn state(max_atoms: usize, seed: u64) -> ModelState {
    ModelState::new(tiny(max_atoms), AdamConfig::default(), seed).unwrap()
}

#[test]
fn hand_evaluated_objective() {
    let cfg = RlConfig {
        gamma: 0.9,
        ..RlConfig::default()
    };
    // node 2 is terminal-adjacent and undiscounted
    let loss = pg_objective(&[(1, -0.5), (2, -1.0)], 2, 2.0, &cfg);
    assert!((loss - 2.9).abs() < 1e-12);
    let flat = RlConfig {
        gamma: 1.0,
        ..cfg
    };
    assert_eq!(pg_objective(&[(1, -0.5), (2, -1.0)], 2, 2.0, &flat), 3.0);
    let literal = RlConfig {
        orientation: DiscountOrientation::FromStart,
        ..cfg
    };
    let l = pg_objective(&[(1, -0.5), (2, -1.0)], 2, 2.0, &literal);
    assert!((l - 2.0 * (0.9 * 0.5 + 0.81 * 1.0)).abs() < 1e-12);
}

#[test]
fn unit_reward_without_discount_is_the_nll() {
    let s = state(12, 1);
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        gamma: 1.0,
        ..RlConfig::default()
    };
    for masked in [true, false] {
        let mut trajs = sample(&s.net, &s.params, 12, &vt, masked, 3).unwrap();
        trajs.iter_mut().for_each(|t| t.reward = 1.0);
        let pg = pg_loss(&s.net, &s.params, &trajs, &vt, &cfg, 0.0).unwrap();
        let seqs: Vec<_> = trajs.iter().map(|t| t.sequence.clone()).collect();
        let reference = nll(&s.net, &s.params, &seqs, &vt, masked).unwrap();
        assert!((pg.loss - reference.loss).abs() < 1e-6 * reference.loss, "{} vs {}", pg.loss, reference.loss);
    }
}

#[test]
fn zero_reward_gives_zero_loss_and_gradient() {
    let s = state(12, 2);
    let vt = ValencyTable::default();
    let trajs = sample(&s.net, &s.params, 6, &vt, true, 4).unwrap();
    let pg = pg_loss(&s.net, &s.params, &trajs, &vt, &RlConfig::default(), 0.0).unwrap();
    assert_eq!(pg.loss, 0.0);
    assert_eq!(pg.grads.norm(), 0.0);
    assert_eq!(pg_loss(&s.net, &s.params, &[], &vt, &RlConfig::default(), 0.0), Err(RlError::EmptyBatch));
}

/// Per-node log-probabilities read off the step probe, terminal row marginalized.
fn probed_steps(s: &ModelState, t: &Trajectory, vt: &ValencyTable) -> Vec<(usize, f64)> {
    let p = probe(&s.net, &s.params, &t.sequence, vt, t.masked).unwrap();
    let mut node = 0;
    let mut out = Vec::new();
    for (dist, cat) in &p.steps {
        if dist.kind == StepKind::Atom {
            node += 1;
        }
        out.push((node, dist.log_probs[*cat as usize]));
    }
    if let Some((atom, rows)) = &p.terminal {
        let psi = atom.probs();
        let end: f64 = rows
            .iter()
            .enumerate()
            .map(|(c, row)| psi[c] * row.iter().map(|d| d.probs()[0]).product::<f64>())
            .sum();
        out.push((t.sequence.len(), libm::log(end)));
    }
    out
}

#[test]
fn batch_loss_matches_reference_objective() {
    let s = state(12, 3);
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        gamma: 0.9,
        ..RlConfig::default()
    };
    for orientation in [DiscountOrientation::FromTerminal, DiscountOrientation::FromStart] {
        let cfg = RlConfig { orientation, ..cfg };
        let mut trajs = sample(&s.net, &s.params, 8, &vt, true, 5).unwrap();
        for (k, t) in trajs.iter_mut().enumerate() {
            t.reward = 0.5 + k as f64;
        }
        let pg = pg_loss(&s.net, &s.params, &trajs, &vt, &cfg, 0.25).unwrap();
        let reference: f64 = trajs
            .iter()
            .map(|t| pg_objective(&probed_steps(&s, t, &vt), t.node_steps(), t.reward - 0.25, &cfg))
            .sum::<f64>()
            / trajs.len() as f64;
        assert!((pg.loss - reference).abs() < 1e-9 * reference.abs().max(1.0), "{} vs {reference}", pg.loss);
    }
}

#[test]
fn penalty_marks_only_violating_steps_and_is_idempotent() {
    let s = state(12, 4);
    let vt = ValencyTable::default();
    let mut trajs = sample(&s.net, &s.params, 40, &vt, false, 6).unwrap();
    let before = trajs.clone();
    apply_structural_penalty(&mut trajs, -10.0);
    let once = trajs.clone();
    apply_structural_penalty(&mut trajs, -10.0);
    assert_eq!(trajs, once);
    let mut marked = 0;
    for (t, b) in trajs.iter().zip(&before) {
        if b.violations.is_empty() {
            assert_eq!(t, b);
        }
        for (s, sb) in t.steps.iter().zip(&b.steps) {
            assert_eq!(s.reward_override.is_some(), sb.violation);
            if sb.violation {
                assert_eq!(s.reward_override, Some(-10.0));
                assert!(matches!(s.kind, StepKind::Edge { .. }));
                marked += 1;
            }
        }
    }
    assert!(marked > 0);
}

#[test]
fn every_violating_step_is_penalized() {
    let s = state(12, 5);
    let vt = ValencyTable::default();
    let mut trajs = sample(&s.net, &s.params, 1, &vt, false, 7).unwrap();
    for step in &mut trajs[0].steps {
        if matches!(step.kind, StepKind::Edge { .. }) {
            step.violation = true;
        }
    }
    apply_structural_penalty(&mut trajs, -10.0);
    for step in &trajs[0].steps {
        assert_eq!(step.reward_override.is_some(), matches!(step.kind, StepKind::Edge { .. }));
    }
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let s = state(4, 6);
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        gamma: 0.8,
        entropy: 0.3,
        ..RlConfig::default()
    };
    let mut trajs = sample(&s.net, &s.params, 6, &vt, false, 8).unwrap();
    apply_structural_penalty(&mut trajs, -10.0);
    for (k, t) in trajs.iter_mut().enumerate() {
        t.reward = 1.0 + 0.5 * k as f64;
    }
    let mut masked = sample(&s.net, &s.params, 3, &vt, true, 9).unwrap();
    masked.iter_mut().for_each(|t| t.reward = 2.0);
    trajs.extend(masked);
    let report = check_gradients(&s.params, 1e-3, 1e-3, |p| {
        let out = pg_loss(&s.net, p, &trajs, &vt, &cfg, 0.4).unwrap();
        (out.loss, out.grads, out.signature)
    });
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn finetune_is_deterministic() {
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        batch: 8,
        iterations: 3,
        lr: 1e-3,
        ..RlConfig::default()
    };
    let run = || {
        let mut s = state(12, 7);
        let mut critic = descriptor("nitrogen_count").unwrap();
        let reports = finetune(&mut s, Some(&mut critic), cfg, &vt, 11).unwrap();
        (reports, s.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert!(a.iter().all(|r| r.validity == 1.0 && r.masked));
}

#[test]
fn constant_critic_leaves_parameters_unchanged() {
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        batch: 8,
        iterations: 4,
        lr: 1e-2,
        ..RlConfig::default()
    };
    let mut s = state(12, 8);
    let before = s.params.clone();
    let reports = finetune(&mut s, Some(&mut Constant(3.0)), cfg, &vt, 1).unwrap();
    assert!(reports.iter().all(|r| r.mean_reward == 3.0 && r.baseline == 3.0));
    assert_eq!(s.params, before);
}

struct Flaky;

impl Critic for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        if g.atom_count() % 2 == 0 {
            Err(CriticError::Failed(String::from("even")))
        } else {
            Ok(g.atom_count() as f64)
        }
    }
}

#[test]
fn failing_critic_drops_trajectories() {
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        batch: 16,
        iterations: 2,
        lr: 1e-3,
        ..RlConfig::default()
    };
    let mut s = state(12, 9);
    let reports = finetune(&mut s, Some(&mut Flaky), cfg, &vt, 2).unwrap();
    for r in &reports {
        assert!(r.dropped > 0);
        assert_eq!(r.scored + r.dropped, 16);
        assert!(r.mean_reward >= 1.0);
    }
}

#[test]
fn nitrogen_reward_rises_on_a_toy_model() {
    let vt = ValencyTable::default();
    let cfg = RlConfig {
        batch: 32,
        iterations: 40,
        lr: 1e-2,
        ..RlConfig::default()
    };
    let mut s = state(12, 10);
    let mut critic = descriptor("nitrogen_count").unwrap();
    let reports = finetune(&mut s, Some(&mut critic), cfg, &vt, 3).unwrap();
    let early: f64 = reports[..10].iter().map(|r| r.mean_reward).sum::<f64>() / 10.0;
    let late: f64 = reports[30..].iter().map(|r| r.mean_reward).sum::<f64>() / 10.0;
    assert!(late > 1.5 * early, "{early} -> {late}");
}

#[test]
fn spearman_cases() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]);
    assert!(rho > 0.9 && rho < 1.0);
}

#[test]
fn config_validation() {
    assert!(RlConfig::default().validate().is_ok());
    for bad in [
        RlConfig {
            gamma: 0.0,
            ..RlConfig::default()
        },
        RlConfig {
            gamma: 1.5,
            ..RlConfig::default()
        },
        RlConfig {
            batch: 0,
            ..RlConfig::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(RlError::Config(_))));
    }
    assert!(!RlConfig::structural_penalty().masked);
}
