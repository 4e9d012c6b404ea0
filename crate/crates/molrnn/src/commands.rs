//! The tool's subcommands as library functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use molrnn_core::codec::{decode, encode_default, BfsSequence, CodecError};
use molrnn_core::critics::{
    descriptor, descriptor_critics, gcn_reward, gcn_train, penalized_logp, Critic, GcnTraining, LabeledSet,
    PenalizedLogp,
};
use molrnn_core::metrics::{evaluate as evaluate_pool, histogram, histogram_text, EvalReport};
use molrnn_core::model::{train_epoch, EpochStats, ModelState};
use molrnn_core::rl::{Finetuner, IterationReport};
use molrnn_core::smiles::{self, parse_with};
use molrnn_core::{canonical_key, CanonicalKey, Element, MolGraph};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::external::{Endpoint, ExternalCritic};
use crate::formats::{
    read_cache, read_checkpoint, read_regressor, write_cache, write_checkpoint, write_regressor, Checkpoint, Dataset,
    RegressorFile,
};
use crate::report::Report;
use crate::workers::Workers;
use crate::Error;

/// Settings layered over a command's base configuration: a full config
/// file replaces the base, then single keys, then the seed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<RunConfig>,
    pub set: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set.push((key.to_string(), value.to_string()));
        self
    }

    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig, Error> {
        let mut cfg = self.config.clone().unwrap_or(base);
        for (k, v) in &self.set {
            cfg.set(k, v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `out` with `suffix` appended to its file name.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary sibling and renames it into place.
fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = sibling(path, ".tmp");
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn config_comment(cfg: &RunConfig) -> String {
    cfg.to_text().lines().map(|l| format!("# config.{l}\n")).collect()
}

pub fn load_dataset(path: &Path) -> Result<Dataset, Error> {
    read_cache(&read_bytes(path)?).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    read_checkpoint(&read_bytes(path)?).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub read: usize,
    pub kept: usize,
    /// Skip reason to count.
    pub skipped: BTreeMap<String, usize>,
}

/// Why a parsed-or-not line cannot enter the cache.
pub fn prepare(text: &str, cfg: &RunConfig) -> Result<BfsSequence, String> {
    let g = parse_with(text, &cfg.valency).map_err(|e| e.kind.reason().to_string())?;
    let m = &cfg.model;
    if g.atom_count() < m.min_atoms {
        return Err(format!("below N_min={}", m.min_atoms));
    }
    if g.atom_count() > m.max_atoms {
        return Err(format!("above N_max={}", m.max_atoms));
    }
    if !g.atoms().contains(&Element::C) {
        return Err("no carbon atom".into());
    }
    encode_default(&g, &m.codec()).map_err(|e| match e {
        CodecError::NoEncodableRoot => format!("bandwidth above M={}", m.window),
        CodecError::Disconnected => "disconnected".into(),
        e => e.to_string(),
    })
}

pub fn ingest(input: &Path, out: &Path, overrides: &Overrides, workers: &Workers) -> Result<IngestReport, Error> {
    let cfg = overrides.resolve(RunConfig::default())?;
    let text = read_text(input)?;
    let lines: Vec<(usize, &str)> = smiles::lines(&text).collect();
    let results: Vec<Result<BfsSequence, String>> =
        workers.install(|| lines.par_iter().map(|(_, s)| prepare(s, &cfg)).collect());
    let mut sequences = Vec::new();
    let mut skipped = BTreeMap::new();
    for ((line, _), r) in lines.iter().zip(results) {
        match r {
            Ok(seq) => sequences.push(seq),
            Err(reason) => {
                log::debug!("{}:{line}: skipped ({reason})", input.display());
                *skipped.entry(reason).or_insert(0) += 1;
            }
        }
    }
    let report = IngestReport {
        read: lines.len(),
        kept: sequences.len(),
        skipped,
    };
    if sequences.is_empty() {
        return Err(Error::Empty(format!("{}: no molecules kept", input.display())));
    }
    write_file(out, &write_cache(&Dataset { config: cfg.clone(), sequences }))?;
    let mut r = Report::new("ingest");
    r.push("read", report.read).push("kept", report.kept);
    for (k, (reason, count)) in report.skipped.iter().enumerate() {
        r.push(format!("skip.{}.reason", k + 1), reason);
        r.push(format!("skip.{}.count", k + 1), count);
    }
    write_file(&sibling(out, ".report"), r.render(&cfg).as_bytes())?;
    log::info!("ingested {} of {} molecules into {}", report.kept, report.read, out.display());
    Ok(report)
}

fn epoch_line(s: &EpochStats) -> String {
    format!(
        "epoch={} nll={} per_step_nll={} lr={} steps={}",
        s.epoch, s.nll, s.per_step_nll, s.lr, s.optimizer_steps
    )
}

/// Likelihood training on a cache, optionally continuing a checkpoint. The
/// per-epoch log goes to `<out>.log`.
pub fn train(
    cache: &Path,
    out: &Path,
    resume: Option<&Path>,
    overrides: &Overrides,
    workers: &Workers,
) -> Result<Vec<EpochStats>, Error> {
    let data = load_dataset(cache)?;
    let cfg = overrides.resolve(data.config.clone())?;
    if data.config.model.window != cfg.model.window {
        return Err(Error::Mismatch(format!(
            "cache was encoded with M={} but the config has M={}",
            data.config.model.window, cfg.model.window
        )));
    }
    if let Some(long) = data.sequences.iter().find(|s| s.len() > cfg.model.max_atoms) {
        return Err(Error::Mismatch(format!(
            "cache holds a {}-atom molecule, the config allows {}",
            long.len(),
            cfg.model.max_atoms
        )));
    }
    let tc = cfg.train_config(data.sequences.len());
    let mut state = match resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.state.config() != &cfg.model {
                return Err(Error::Mismatch(format!(
                    "{} was saved with a different model configuration",
                    path.display()
                )));
            }
            ck.state
        }
        None => ModelState::new(cfg.model, tc.adam, cfg.seed)?,
    };
    let mut log = config_comment(&cfg);
    let mut history = Vec::new();
    let vt = cfg.valency;
    let masked = tc.masked_loss;
    let mut gradient = |net: &_, params: &_, batch: &[BfsSequence]| workers.nll(net, params, batch, &vt, masked);
    while (state.epoch as usize) < tc.epochs {
        let stats = train_epoch(&mut state, &data.sequences, &vt, &tc, Some(&mut gradient))?;
        let line = epoch_line(&stats);
        log::info!("{line}");
        log.push_str(&line);
        log.push('\n');
        history.push(stats);
        let every = cfg.train.checkpoint_every;
        if every > 0 && (state.epoch as usize).is_multiple_of(every) {
            write_file(out, &write_checkpoint(&state, &cfg))?;
        }
    }
    write_file(out, &write_checkpoint(&state, &cfg))?;
    write_file(&sibling(out, ".log"), log.as_bytes())?;
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub samples: usize,
    pub valid: usize,
    pub masked: bool,
    pub violating_samples: usize,
    pub violating_steps: usize,
    pub edge_steps: usize,
    pub below_min: usize,
    pub unique_valid: usize,
}

impl SampleSummary {
    pub fn validity(&self) -> f64 {
        100.0 * self.valid as f64 / self.samples.max(1) as f64
    }
}

/// Draws `sample.count` molecules and writes one SMILES per line. Molecules
/// that break valency (only possible unmasked) are written without checks
/// and fail to re-parse.
pub fn sample(checkpoint: &Path, out: &Path, overrides: &Overrides, workers: &Workers) -> Result<SampleSummary, Error> {
    let ck = load_checkpoint(checkpoint)?;
    let mut cfg = overrides.resolve(ck.config.clone())?;
    cfg.model = *ck.state.config();
    let (count, masked) = (cfg.sample.count, cfg.sample.masked);
    let trajs = workers.sample(&ck.state.net, &ck.state.params, count, &cfg.valency, masked, cfg.seed)?;
    let mut text = config_comment(&cfg);
    let mut summary = SampleSummary {
        samples: trajs.len(),
        valid: 0,
        masked,
        violating_samples: 0,
        violating_steps: 0,
        edge_steps: 0,
        below_min: 0,
        unique_valid: 0,
    };
    let mut keys = BTreeSet::new();
    for t in &trajs {
        let valid = t.graph.check_validity(&cfg.valency).valid;
        let line = if valid {
            summary.valid += 1;
            keys.insert(canonical_key(&t.graph));
            smiles::write_with(&t.graph, &cfg.valency)
        } else {
            smiles::write_lenient(&t.graph)
        }
        .map_err(|e| Error::Model(format!("sample {} cannot be written: {e}", t.index)))?;
        text.push_str(&line);
        text.push('\n');
        if !t.violations.is_empty() {
            summary.violating_samples += 1;
        }
        summary.violating_steps += t.steps.iter().filter(|s| s.violation).count();
        summary.edge_steps += t
            .steps
            .iter()
            .filter(|s| matches!(s.kind, molrnn_core::model::StepKind::Edge { .. }))
            .count();
        if t.below_min(cfg.model.min_atoms) {
            summary.below_min += 1;
        }
    }
    summary.unique_valid = keys.len();
    write_file(out, text.as_bytes())?;
    let mut r = Report::new("sample");
    r.push("checkpoint_epoch", ck.state.epoch)
        .push("samples", summary.samples)
        .push("masked", masked)
        .push("valid", summary.valid)
        .push("validity_pct", format!("{:.4}", summary.validity()))
        .push("unique_valid", summary.unique_valid)
        .push("below_min", summary.below_min)
        .push("violating_samples", summary.violating_samples)
        .push("violating_steps", summary.violating_steps)
        .push("edge_steps", summary.edge_steps)
        .push(
            "violation_rate",
            format!("{:.6}", summary.violating_steps as f64 / summary.edge_steps.max(1) as f64),
        );
    write_file(&sibling(out, ".report"), r.render(&cfg).as_bytes())?;
    log::info!(
        "sampled {} molecules ({}masked), validity {:.2}%",
        summary.samples,
        if masked { "" } else { "un" },
        summary.validity()
    );
    Ok(summary)
}

/// What the fine-tuning reward comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticSpec {
    /// Penalties on valency-breaking bonds only, sampled without masking.
    StructuralPenalty,
    Descriptor(String),
    PenalizedLogp,
    Gcn(PathBuf),
    External(Endpoint),
}

impl CriticSpec {
    pub fn parse(spec: &str) -> Result<Self, Error> {
        if spec == "structural-penalty" {
            return Ok(CriticSpec::StructuralPenalty);
        }
        if spec == "penalized_logp" {
            return Ok(CriticSpec::PenalizedLogp);
        }
        if let Some(path) = spec.strip_prefix("gcn:") {
            return Ok(CriticSpec::Gcn(PathBuf::from(path)));
        }
        if let Some(endpoint) = spec.strip_prefix("external:") {
            return Ok(CriticSpec::External(Endpoint::parse(endpoint)?));
        }
        if descriptor(spec).is_some() {
            return Ok(CriticSpec::Descriptor(spec.to_string()));
        }
        let names: Vec<&str> = descriptor_critics().iter().map(|d| d.name).collect();
        Err(Error::Critic(format!(
            "unknown critic {spec:?}; expected structural-penalty, penalized_logp, gcn:<path>, external:<endpoint> or one of {}",
            names.join(", ")
        )))
    }

    fn build(&self, cfg: &RunConfig) -> Result<Option<Box<dyn Critic>>, Error> {
        Ok(match self {
            CriticSpec::StructuralPenalty => None,
            CriticSpec::Descriptor(name) => Some(Box::new(descriptor(name).expect("checked at parse"))),
            CriticSpec::PenalizedLogp => Some(Box::new(PenalizedLogp { valency: cfg.valency })),
            CriticSpec::Gcn(path) => {
                let file = read_regressor(&read_bytes(path)?).map_err(|source| Error::Format {
                    path: path.clone(),
                    source,
                })?;
                Some(Box::new(gcn_reward(file.model)))
            }
            CriticSpec::External(endpoint) => Some(Box::new(ExternalCritic::new(
                endpoint.clone(),
                Duration::from_millis(cfg.external.timeout_ms),
                cfg.external.retries,
            ))),
        })
    }
}

fn iteration_line(r: &IterationReport) -> String {
    format!(
        "iteration={} mean_reward={} max_reward={} validity={} unique={} masked={} scored={} dropped={} violating_steps={} baseline={} loss={} digest={:016x}",
        r.iteration,
        r.mean_reward,
        r.max_reward,
        r.validity,
        r.unique,
        r.masked,
        r.scored,
        r.dropped,
        r.violating_steps,
        r.baseline,
        r.loss,
        r.digest
    )
}

/// Policy-gradient fine-tuning of a checkpoint. Iteration records go to
/// `<out>.iterations`, one line each.
pub fn finetune(
    checkpoint: &Path,
    critic: &CriticSpec,
    out: &Path,
    overrides: &Overrides,
    workers: &Workers,
) -> Result<Vec<IterationReport>, Error> {
    let ck = load_checkpoint(checkpoint)?;
    let mut cfg = overrides.resolve(ck.config.clone())?;
    cfg.model = *ck.state.config();
    if *critic == CriticSpec::StructuralPenalty {
        cfg.rl.masked = false;
    }
    let mut state = ck.state;
    let mut scorer = critic.build(&cfg)?;
    let mut tuner = Finetuner::new(cfg.rl, cfg.seed, &mut state)?;
    let mut engine = workers;
    let mut log = config_comment(&cfg);
    let _ = writeln!(log, "# critic={}", scorer.as_ref().map_or("none", |c| c.name()));
    let mut reports = Vec::with_capacity(cfg.rl.iterations);
    for _ in 0..cfg.rl.iterations {
        let c: Option<&mut dyn Critic> = match &mut scorer {
            Some(c) => Some(&mut **c),
            None => None,
        };
        let r = tuner.step(&mut state, &cfg.valency, c, &mut engine)?;
        let line = iteration_line(&r);
        log::info!("{line}");
        log.push_str(&line);
        log.push('\n');
        reports.push(r);
    }
    write_file(out, &write_checkpoint(&state, &cfg))?;
    write_file(&sibling(out, ".iterations"), log.as_bytes())?;
    Ok(reports)
}

/// An evaluation plus the histogram data written next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Lines that did not parse; counted as invalid samples.
    pub unparsed: usize,
    pub histograms: Vec<(String, Vec<(f64, usize)>)>,
}

fn property_histogram(values: &[f64], bins: usize) -> Vec<(f64, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return histogram(values, bins, 0.0, 1.0);
    }
    let (lo, mut hi) = (lo.floor(), hi.ceil());
    if hi <= lo {
        hi = lo + 1.0;
    }
    // widen so the maximum falls inside the last bin
    let hi = hi + (hi - lo) * 1e-9;
    histogram(values, bins, lo, hi)
}

/// Scores a SMILES file against a training cache. Writes the flat report to
/// `out` and one `<out>.<property>.hist` file per property.
pub fn evaluate(samples: &Path, training: &Path, out: &Path, overrides: &Overrides) -> Result<Evaluation, Error> {
    let data = load_dataset(training)?;
    let cfg = overrides.resolve(data.config.clone())?;
    let vt = cfg.valency;
    let mut training_keys: BTreeSet<CanonicalKey> = BTreeSet::new();
    for (k, seq) in data.sequences.iter().enumerate() {
        let g = decode(seq, &vt).map_err(|e| Error::Format {
            path: training.to_path_buf(),
            source: crate::FormatError::Corrupt(format!("record {k} does not decode: {e}")),
        })?;
        training_keys.insert(canonical_key(&g));
    }
    let text = read_text(samples)?;
    let mut pool: Vec<MolGraph> = Vec::new();
    let mut unparsed = 0;
    for (_, line) in smiles::lines(&text) {
        match parse_with(line, &vt) {
            Ok(g) => pool.push(g),
            Err(_) => unparsed += 1,
        }
    }
    let valid: Vec<MolGraph> = pool.iter().filter(|g| g.check_validity(&vt).valid).cloned().collect();
    let mut report = evaluate_pool(pool, &training_keys, &vt, &cfg.eval_config());
    report.samples += unparsed;
    report.validity = 100.0 * report.valid as f64 / report.samples.max(1) as f64;

    let bins = cfg.metrics.histogram_bins;
    let mut histograms: Vec<(String, Vec<(f64, usize)>)> = descriptor_critics()
        .iter()
        .map(|d| {
            let values: Vec<f64> = valid.iter().map(|g| (d.eval)(g)).collect();
            (d.name.to_string(), property_histogram(&values, bins))
        })
        .collect();
    let logp: Vec<f64> = valid.iter().map(penalized_logp).collect();
    histograms.push(("penalized_logp".into(), property_histogram(&logp, bins)));

    let mut r = Report::new("evaluate");
    r.push("unparsed", unparsed).extend_flat(&report.to_text());
    write_file(out, r.render(&cfg).as_bytes())?;
    for (name, h) in &histograms {
        let body = format!("{}{}", config_comment(&cfg), histogram_text(h));
        write_file(&sibling(out, &format!(".{name}.hist")), body.as_bytes())?;
    }
    Ok(Evaluation {
        report,
        unparsed,
        histograms,
    })
}

/// Reads `smiles<TAB>value` lines. Blank lines and `#` comments are skipped;
/// a `# unit=<name>` comment names the label unit.
pub fn read_labeled(path: &Path, cfg: &RunConfig) -> Result<LabeledSet, Error> {
    let text = read_text(path)?;
    let mut set = LabeledSet {
        molecules: Vec::new(),
        labels: Vec::new(),
        unit: "label".into(),
    };
    let input = |line: usize, message: String| Error::Input {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches(['\r', '\n']);
        if let Some(unit) = line.trim().strip_prefix("# unit=") {
            set.unit = unit.trim().to_string();
            continue;
        }
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (smi, value) = line
            .split_once('\t')
            .ok_or_else(|| input(k + 1, "expected `smiles<TAB>value`".into()))?;
        let g = parse_with(smi.trim(), &cfg.valency).map_err(|e| input(k + 1, format!("bad SMILES: {e}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| input(k + 1, format!("bad label {:?}", value.trim())))?;
        set.molecules.push(g);
        set.labels.push(value);
    }
    Ok(set)
}

/// Trains the property regressor; the model goes to `out`, the error
/// report to `<out>.report`.
pub fn critic_train(labeled: &Path, out: &Path, overrides: &Overrides) -> Result<GcnTraining, Error> {
    let cfg = overrides.resolve(RunConfig::default())?;
    let set = read_labeled(labeled, &cfg)?;
    let training = gcn_train(&set, &cfg.gcn_config()).map_err(|e| Error::Critic(e.to_string()))?;
    let file = RegressorFile {
        config: cfg.clone(),
        model: training.model.clone(),
        unit: set.unit.clone(),
        test_rmse: training.test_rmse,
    };
    write_file(out, &write_regressor(&file))?;
    let mut r = Report::new("critic-train");
    r.push("unit", &set.unit)
        .push("train_size", training.train_size)
        .push("test_size", training.test_size)
        .push("test_rmse", training.test_rmse)
        .push("train_rmse", training.train_rmse)
        .push("test_label_std", training.test_label_std)
        .push("rmse_over_std", training.test_rmse / training.test_label_std);
    for (k, loss) in training.epoch_losses.iter().enumerate() {
        r.push(format!("epoch.{}.loss", k + 1), loss);
    }
    write_file(&sibling(out, ".report"), r.render(&cfg).as_bytes())?;
    log::info!(
        "regressor test RMSE {:.4} {} (label std {:.4})",
        training.test_rmse,
        set.unit,
        training.test_label_std
    );
    Ok(training)
}
