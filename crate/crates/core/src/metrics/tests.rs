use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::smiles::{self, parse};

const CORPUS: &str = include_str!("../../../../data/moses_sample.smi");

fn corpus(skip: usize, count: usize) -> Vec<MolGraph> {
    smiles::lines(CORPUS).skip(skip).take(count).map(|(_, t)| parse(t).unwrap()).collect()
}

#[test]
fn tanimoto_cases() {
    let x = Fingerprint::from_bits(16, &[1, 5, 9]);
    assert_eq!(tanimoto(&x, &x).unwrap(), 1.0);
    let y = Fingerprint::from_bits(16, &[2, 6]);
    assert_eq!(tanimoto(&x, &y).unwrap(), 0.0);
    let a = Fingerprint::from_bits(16, &[1, 2, 3]);
    let b = Fingerprint::from_bits(16, &[2, 3, 4]);
    assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
    assert_eq!(tanimoto(&Fingerprint::new(16), &Fingerprint::new(16)).unwrap(), 1.0);
    assert_eq!(
        tanimoto(&Fingerprint::new(16), &Fingerprint::new(32)),
        Err(MetricsError::LengthMismatch(16, 32))
    );
}

#[test]
fn int_div_cases() {
    let g = parse("CC(=O)Nc1ccccc1").unwrap();
    let same = vec![g.clone(), g.clone(), g];
    assert_eq!(int_div(&same, 1).unwrap(), 0.0);
    assert_eq!(int_div(&same, 2).unwrap(), 0.0);
    let disjoint = [Fingerprint::from_bits(8, &[0, 1]), Fingerprint::from_bits(8, &[4])];
    assert_eq!(int_div_exact(&disjoint, 1).unwrap(), 0.5);
    assert_eq!(int_div(&[], 1), Err(MetricsError::EmptyPool));
    assert_eq!(int_div_exact(&disjoint, 3), Err(MetricsError::Exponent(3)));
}

fn brute(fps: &[Fingerprint], p: i32) -> f64 {
    let mut s = 0.0;
    for a in fps {
        for b in fps {
            s += libm::pow(tanimoto(a, b).unwrap(), p as f64);
        }
    }
    let mean = s / (fps.len() * fps.len()) as f64;
    1.0 - libm::pow(mean, 1.0 / p as f64)
}

#[test]
fn int_div_matches_double_loop() {
    for (skip, size) in [(0, 20), (100, 20), (300, 50), (500, 1)] {
        let fps: Vec<Fingerprint> = corpus(skip, size).iter().map(default_fingerprint).collect();
        for p in [1, 2] {
            let fast = int_div_exact(&fps, p).unwrap();
            let slow = brute(&fps, p as i32);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }
}

#[test]
fn sampled_int_div_estimates_exact_value() {
    let fps: Vec<Fingerprint> = corpus(0, 300).iter().map(default_fingerprint).collect();
    for p in [1, 2] {
        let exact = int_div_exact(&fps, p).unwrap();
        let est = int_div_sampled(&fps, p, 200_000, 5).unwrap();
        assert!((exact - est).abs() < 0.01, "{exact} vs {est}");
    }
}

#[test]
fn fingerprints_ignore_atom_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in corpus(0, 300) {
        let fp = default_fingerprint(&g);
        assert!(!fp.is_empty());
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..g.atom_count()).collect();
            perm.shuffle(&mut rng);
            assert_eq!(default_fingerprint(&g.permuted(&perm)), fp);
        }
    }
    // different molecules usually differ
    assert_ne!(default_fingerprint(&parse("CCO").unwrap()), default_fingerprint(&parse("CCN").unwrap()));
}

fn keys(pool: &[MolGraph]) -> BTreeSet<crate::CanonicalKey> {
    pool.iter().map(canonical_key).collect()
}

#[test]
fn evaluate_examples() {
    let vt = ValencyTable::default();
    let train = corpus(0, 50);
    let cfg = EvalConfig::default();
    let r = evaluate(train.clone(), &keys(&train), &vt, &cfg);
    assert_eq!(r.samples, 50);
    assert_eq!(r.validity, 100.0);
    assert_eq!(r.novelty, 0.0);
    assert_eq!(r.uniqueness, 100.0);
    assert!(!r.int_div_sampled);
    assert!(r.int_div1 > 0.0 && r.int_div1 <= 1.0);

    let one = parse("CC(=O)Nc1ccccc1").unwrap();
    let dup = evaluate(vec![one.clone(); 10], &BTreeSet::new(), &vt, &cfg);
    assert_eq!(dup.uniqueness, 10.0);
    assert_eq!(dup.novelty, 100.0);
    assert_eq!(dup.int_div1, 0.0);

    let mut bad = MolGraph::with_atoms(&[crate::Element::O, crate::Element::C]);
    bad.add_bond(0, 1, crate::BondOrder::Triple).unwrap();
    let mixed = evaluate(vec![one, bad], &BTreeSet::new(), &vt, &cfg);
    assert_eq!(mixed.validity, 50.0);
    assert_eq!(mixed.below_min, 1);
    assert_eq!(mixed.descriptors[0].name, "heavy_atoms");
    assert_eq!(mixed.descriptors[0].mean, 10.0);
}

#[test]
fn evaluate_ignores_pool_order() {
    let vt = ValencyTable::default();
    let mut pool = corpus(0, 120);
    pool.extend(corpus(0, 30));
    let training = keys(&corpus(100, 200));
    for limit in [10_000, 50] {
        let cfg = EvalConfig {
            exact_int_div_limit: limit,
            sampled_pairs: 5_000,
            ..EvalConfig::default()
        };
        let reference = evaluate(pool.clone(), &training, &vt, &cfg);
        assert_eq!(reference.int_div_sampled, limit == 50);
        let mut rng = ChaCha8Rng::seed_from_u64(limit as u64);
        for _ in 0..3 {
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(evaluate(shuffled, &training, &vt, &cfg), reference);
        }
    }
}

#[test]
fn short_molecules_can_be_excluded() {
    let vt = ValencyTable::default();
    let pool = vec![parse("CC").unwrap(), parse("CC").unwrap(), parse("CCCCCCCCCCC").unwrap()];
    let inc = evaluate(pool.clone(), &BTreeSet::new(), &vt, &EvalConfig::default());
    assert!((inc.uniqueness - 200.0 / 3.0).abs() < 1e-9);
    let exc = evaluate(
        pool,
        &BTreeSet::new(),
        &vt,
        &EvalConfig {
            exclude_below_min: true,
            ..EvalConfig::default()
        },
    );
    assert_eq!(exc.uniqueness, 100.0);
    assert_eq!(exc.below_min, 2);
}

#[test]
fn histogram_bins() {
    let h = histogram(&[0.0, 0.5, 1.0, 1.5, 9.0, -3.0, f64::NAN], 2, 0.0, 2.0);
    assert_eq!(h, vec![(0.5, 3), (1.5, 3)]);
    assert_eq!(histogram_text(&h), "0.500000\t3\n1.500000\t3\n");
}

#[test]
fn report_text_is_flat() {
    let vt = ValencyTable::default();
    let r = evaluate(corpus(0, 5), &BTreeSet::new(), &vt, &EvalConfig::default());
    let text = r.to_text();
    assert!(text.lines().all(|l| l.split_once('=').is_some()));
    assert!(text.contains("validity_pct=100.0000\n"));
    assert!(text.contains("intdiv_estimator=exact\n"));
}
