//! Generation-quality metrics over pools of molecules.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::canon::{canonical_key, CanonicalKey};
use crate::critics::descriptor_critics;
use crate::element::ValencyTable;
use crate::graph::MolGraph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("fingerprint lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty pool")]
    EmptyPool,
    #[error("diversity exponent must be 1 or 2, got {0}")]
    Exponent(u32),
}

/// Fixed-length bit vector of hashed circular substructures.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    bits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(bits: usize) -> Self {
        Fingerprint {
            bits,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: usize, set: &[usize]) -> Self {
        let mut fp = Self::new(bits);
        for &b in set {
            fp.set(b);
        }
        fp
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % self.bits;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Morgan-style fingerprint: each atom starts from its element, degree, used
/// valence and ring membership; every round folds in the sorted
/// `(bond order, neighbor identifier)` pairs. Identifiers from all rounds up
/// to `radius` are hashed into `bits` positions.
pub fn fingerprint(g: &MolGraph, radius: usize, bits: usize) -> Fingerprint {
    let n = g.atom_count();
    let ring = g.ring_atoms();
    let mut ids: Vec<u64> = (0..n)
        .map(|a| {
            let used: u32 = g.neighbors(a).iter().map(|&(_, o)| o.order() as u32).sum();
            fnv(
                FNV_OFFSET,
                &[g.element(a).index() as u8, g.degree(a) as u8, used as u8, ring[a] as u8],
            )
        })
        .collect();
    let mut fp = Fingerprint::new(bits);
    for &id in &ids {
        fp.set((id % bits as u64) as usize);
    }
    for round in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|a| {
                let mut env: Vec<(u8, u64)> = g.neighbors(a).iter().map(|&(b, o)| (o.order(), ids[b])).collect();
                env.sort_unstable();
                let mut h = fnv(FNV_OFFSET, &[round as u8]);
                h = fnv(h, &ids[a].to_le_bytes());
                for (o, id) in env {
                    h = fnv(h, &[o]);
                    h = fnv(h, &id.to_le_bytes());
                }
                h
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % bits as u64) as usize);
        }
    }
    fp
}

/// Radius 2, 2048 bits.
pub fn default_fingerprint(g: &MolGraph) -> Fingerprint {
    fingerprint(g, 2, 2048)
}

/// `|a ∧ b| / |a ∨ b|`, and 1 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, MetricsError> {
    if a.bits != b.bits {
        return Err(MetricsError::LengthMismatch(a.bits, b.bits));
    }
    let (mut and, mut or) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        and += (x & y).count_ones();
        or += (x | y).count_ones();
    }
    Ok(if or == 0 { 1.0 } else { and as f64 / or as f64 })
}

fn check_p(p: u32) -> Result<(), MetricsError> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(MetricsError::Exponent(p))
    }
}

fn powi(x: f64, p: u32) -> f64 {
    if p == 1 {
        x
    } else {
        x * x
    }
}

fn finish(mean: f64, p: u32) -> f64 {
    let m = if p == 1 { mean } else { libm::sqrt(mean) };
    (1.0 - m).clamp(0.0, 1.0)
}

/// `1 − (mean over all ordered pairs, self-pairs included, of T^p)^(1/p)`.
pub fn int_div_exact(fps: &[Fingerprint], p: u32) -> Result<f64, MetricsError> {
    check_p(p)?;
    if fps.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let n = fps.len();
    let mut off_diagonal = 0.0;
    let mut diagonal = 0.0;
    for i in 0..n {
        diagonal += powi(tanimoto(&fps[i], &fps[i])?, p);
        for j in i + 1..n {
            off_diagonal += powi(tanimoto(&fps[i], &fps[j])?, p);
        }
    }
    Ok(finish((diagonal + 2.0 * off_diagonal) / (n * n) as f64, p))
}

/// Estimate of [`int_div_exact`] from `pairs` ordered pairs drawn uniformly.
pub fn int_div_sampled(fps: &[Fingerprint], p: u32, pairs: usize, seed: u64) -> Result<f64, MetricsError> {
    check_p(p)?;
    if fps.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..pairs.max(1) {
        let i = rng.gen_range(0..fps.len());
        let j = rng.gen_range(0..fps.len());
        sum += powi(tanimoto(&fps[i], &fps[j])?, p);
    }
    Ok(finish(sum / pairs.max(1) as f64, p))
}

/// Exact internal diversity of a pool of graphs.
pub fn int_div(pool: &[MolGraph], p: u32) -> Result<f64, MetricsError> {
    let fps: Vec<Fingerprint> = pool.iter().map(default_fingerprint).collect();
    int_div_exact(&fps, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub fingerprint_radius: usize,
    pub fingerprint_bits: usize,
    /// Pools of valid molecules larger than this use sampled IntDiv.
    pub exact_int_div_limit: usize,
    pub sampled_pairs: usize,
    pub seed: u64,
    pub min_atoms: usize,
    /// Leave molecules below `min_atoms` out of the uniqueness and novelty counts.
    pub exclude_below_min: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            fingerprint_radius: 2,
            fingerprint_bits: 2048,
            exact_int_div_limit: 10_000,
            sampled_pairs: 1_000_000,
            seed: 0,
            min_atoms: 10,
            exclude_below_min: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStat {
    pub name: &'static str,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub valid: usize,
    pub below_min: usize,
    /// Percentages in `[0, 100]`.
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub int_div1: f64,
    pub int_div2: f64,
    pub int_div_sampled: bool,
    pub descriptors: Vec<DescriptorStat>,
}

impl EvalReport {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "valid={}", self.valid);
        let _ = writeln!(s, "below_min={}", self.below_min);
        let _ = writeln!(s, "validity_pct={:.4}", self.validity);
        let _ = writeln!(s, "unique_pct={:.4}", self.uniqueness);
        let _ = writeln!(s, "novel_pct={:.4}", self.novelty);
        let _ = writeln!(s, "intdiv1={:.6}", self.int_div1);
        let _ = writeln!(s, "intdiv2={:.6}", self.int_div2);
        let _ = writeln!(s, "intdiv_estimator={}", if self.int_div_sampled { "sampled" } else { "exact" });
        for d in &self.descriptors {
            let _ = writeln!(s, "{}.mean={:.6}", d.name, d.mean);
            let _ = writeln!(s, "{}.std={:.6}", d.name, d.std);
        }
        s
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Mean and population standard deviation; zeros for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Scores a pool. Uniqueness counts distinct keys among valid molecules;
/// novelty counts distinct valid keys absent from `training`. IntDiv and
/// descriptor statistics run over all valid molecules, taken in canonical-key
/// order so results do not depend on pool order.
pub fn evaluate<I>(pool: I, training: &BTreeSet<CanonicalKey>, vt: &ValencyTable, cfg: &EvalConfig) -> EvalReport
where
    I: IntoIterator<Item = MolGraph>,
{
    let mut samples = 0;
    let mut below_min = 0;
    let mut valid: Vec<(CanonicalKey, MolGraph)> = Vec::new();
    for g in pool {
        samples += 1;
        let short = g.atom_count() < cfg.min_atoms;
        below_min += usize::from(short);
        if g.is_empty() || !g.check_validity(vt).valid {
            continue;
        }
        valid.push((canonical_key(&g), g));
    }
    valid.sort_by(|a, b| a.0.cmp(&b.0));
    let counted = valid
        .iter()
        .filter(|(_, g)| !(cfg.exclude_below_min && g.atom_count() < cfg.min_atoms));
    let mut distinct: BTreeSet<&CanonicalKey> = BTreeSet::new();
    let mut counted_total = 0;
    for (k, _) in counted {
        counted_total += 1;
        distinct.insert(k);
    }
    let novel = distinct.iter().filter(|k| !training.contains(**k)).count();

    let fps: Vec<Fingerprint> = valid
        .iter()
        .map(|(_, g)| fingerprint(g, cfg.fingerprint_radius, cfg.fingerprint_bits))
        .collect();
    let sampled = fps.len() > cfg.exact_int_div_limit;
    let div = |p| {
        if fps.is_empty() {
            0.0
        } else if sampled {
            int_div_sampled(&fps, p, cfg.sampled_pairs, cfg.seed).expect("uniform fingerprint length")
        } else {
            int_div_exact(&fps, p).expect("uniform fingerprint length")
        }
    };
    let descriptors = descriptor_critics()
        .into_iter()
        .map(|d| {
            let values: Vec<f64> = valid.iter().map(|(_, g)| (d.eval)(g)).collect();
            let (mean, std) = mean_std(&values);
            DescriptorStat { name: d.name, mean, std }
        })
        .collect();
    EvalReport {
        samples,
        valid: valid.len(),
        below_min,
        validity: pct(valid.len(), samples),
        uniqueness: pct(distinct.len(), counted_total),
        novelty: pct(novel, distinct.len()),
        int_div1: div(1),
        int_div2: div(2),
        int_div_sampled: sampled,
        descriptors,
    }
}

/// Equal-width histogram over `[lo, hi]`; values outside are clamped into the
/// end bins. Returns `(bin center, count)` pairs.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<(f64, usize)> {
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let k = libm::floor((v - lo) / width);
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + (k as f64 + 0.5) * width, c))
        .collect()
}

/// Two-column text: bin center and count.
pub fn histogram_text(hist: &[(f64, usize)]) -> String {
    hist.iter().map(|(c, n)| format!("{c:.6}\t{n}\n")).collect()
}

#[cfg(test)]
mod tests;
