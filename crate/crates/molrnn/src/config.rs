//! Run configuration: every module's settings in one flat `section.key = value`
//! text file. The same text is embedded in every artifact the tools write.

use std::fmt::Write as _;

use molrnn_core::critics::GcnTrainConfig;
use molrnn_core::metrics::EvalConfig;
use molrnn_core::model::{MolecularRnnConfig, TrainConfig};
use molrnn_core::nn::{decay_interval, AdamConfig};
use molrnn_core::rl::{DiscountOrientation, RlConfig};
use molrnn_core::{Element, ValencyTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: cannot parse {value:?} as {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Pretraining schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
    /// Rate the stepwise decay reaches at the last optimizer step.
    pub final_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub masked_loss: bool,
    /// Epochs between checkpoint writes; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 250,
            batch_size: 512,
            lr: 1e-3,
            decay: 0.999,
            final_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            masked_loss: false,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSettings {
    pub count: usize,
    pub masked: bool,
}

impl Default for SampleSettings {
    fn default() -> Self {
        SampleSettings {
            count: 10_000,
            masked: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSettings {
    pub eval: EvalConfig,
    pub histogram_bins: usize,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        MetricsSettings {
            eval: EvalConfig::default(),
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalSettings {
    pub timeout_ms: u64,
    /// Extra attempts after a timeout or broken connection.
    pub retries: usize,
}

impl Default for ExternalSettings {
    fn default() -> Self {
        ExternalSettings {
            timeout_ms: 10_000,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: MolecularRnnConfig,
    pub valency: ValencyTable,
    pub train: TrainSettings,
    pub sample: SampleSettings,
    pub rl: RlConfig,
    pub gcn: GcnTrainConfig,
    pub metrics: MetricsSettings,
    pub external: ExternalSettings,
}

trait Value: Sized {
    const EXPECTED: &'static str;
    fn show(&self) -> String;
    fn read(raw: &str) -> Option<Self>;
}

macro_rules! plain_value {
    ($($t:ty => $name:literal),*) => {$(
        impl Value for $t {
            const EXPECTED: &'static str = $name;
            fn show(&self) -> String {
                format!("{self:?}")
            }
            fn read(raw: &str) -> Option<Self> {
                raw.parse().ok()
            }
        }
    )*};
}

plain_value!(usize => "a non-negative integer", u64 => "a non-negative integer", bool => "true or false");

impl Value for f64 {
    const EXPECTED: &'static str = "a finite number";
    fn show(&self) -> String {
        format!("{self:?}")
    }
    fn read(raw: &str) -> Option<Self> {
        raw.parse().ok().filter(|x: &f64| x.is_finite())
    }
}

impl Value for DiscountOrientation {
    const EXPECTED: &'static str = "from_terminal or from_start";
    fn show(&self) -> String {
        match self {
            DiscountOrientation::FromTerminal => "from_terminal".into(),
            DiscountOrientation::FromStart => "from_start".into(),
        }
    }
    fn read(raw: &str) -> Option<Self> {
        match raw {
            "from_terminal" => Some(DiscountOrientation::FromTerminal),
            "from_start" => Some(DiscountOrientation::FromStart),
            _ => None,
        }
    }
}

macro_rules! fields {
    ($($key:literal => $($path:ident).+),* $(,)?) => {
        const KEYS: &[&str] = &[$($key),*];

        fn get_field(&self, key: &str) -> Option<String> {
            match key {
                $($key => Some(Value::show(&self $(.$path)+)),)*
                _ => None,
            }
        }

        fn set_field(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
            fn parse<T: Value>(key: &str, raw: &str) -> Result<T, ConfigError> {
                T::read(raw).ok_or_else(|| ConfigError::Value {
                    key: key.to_string(),
                    value: raw.to_string(),
                    expected: T::EXPECTED,
                })
            }
            match key {
                $($key => self $(.$path)+ = parse(key, raw)?,)*
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            }
            Ok(())
        }
    };
}

impl RunConfig {
    fields! {
        "seed" => seed,
        "model.node_embed" => model.node_embed,
        "model.edge_embed" => model.edge_embed,
        "model.node_hidden" => model.node_hidden,
        "model.node_layers" => model.node_layers,
        "model.node_mlp_hidden" => model.node_mlp_hidden,
        "model.edge_hidden" => model.edge_hidden,
        "model.edge_layers" => model.edge_layers,
        "model.edge_mlp_hidden" => model.edge_mlp_hidden,
        "model.window" => model.window,
        "model.min_atoms" => model.min_atoms,
        "model.max_atoms" => model.max_atoms,
        "train.epochs" => train.epochs,
        "train.batch_size" => train.batch_size,
        "train.lr" => train.lr,
        "train.decay" => train.decay,
        "train.final_lr" => train.final_lr,
        "train.beta1" => train.beta1,
        "train.beta2" => train.beta2,
        "train.eps" => train.eps,
        "train.clip_norm" => train.clip_norm,
        "train.masked_loss" => train.masked_loss,
        "train.checkpoint_every" => train.checkpoint_every,
        "sample.count" => sample.count,
        "sample.masked" => sample.masked,
        "rl.iterations" => rl.iterations,
        "rl.batch" => rl.batch,
        "rl.lr" => rl.lr,
        "rl.gamma" => rl.gamma,
        "rl.orientation" => rl.orientation,
        "rl.reward_scale" => rl.reward_scale,
        "rl.penalty" => rl.penalty,
        "rl.masked" => rl.masked,
        "rl.baseline" => rl.baseline,
        "rl.baseline_momentum" => rl.baseline_momentum,
        "rl.entropy" => rl.entropy,
        "rl.clip_norm" => rl.clip_norm,
        "gcn.layers" => gcn.model.layers,
        "gcn.hidden" => gcn.model.hidden,
        "gcn.epochs" => gcn.epochs,
        "gcn.batch_size" => gcn.batch_size,
        "gcn.lr" => gcn.lr,
        "gcn.epoch_decay" => gcn.epoch_decay,
        "gcn.test_fraction" => gcn.test_fraction,
        "gcn.clip_norm" => gcn.clip_norm,
        "metrics.fingerprint_radius" => metrics.eval.fingerprint_radius,
        "metrics.fingerprint_bits" => metrics.eval.fingerprint_bits,
        "metrics.exact_int_div_limit" => metrics.eval.exact_int_div_limit,
        "metrics.sampled_pairs" => metrics.eval.sampled_pairs,
        "metrics.exclude_below_min" => metrics.eval.exclude_below_min,
        "metrics.histogram_bins" => metrics.histogram_bins,
        "external.timeout_ms" => external.timeout_ms,
        "external.retries" => external.retries,
    }

    /// Reduced network and batch sizes for single-core machines.
    pub fn desk() -> Self {
        let mut cfg = RunConfig {
            model: MolecularRnnConfig::desk(),
            ..RunConfig::default()
        };
        cfg.train.batch_size = 64;
        cfg.train.epochs = 50;
        cfg.sample.count = 1000;
        cfg.rl.batch = 64;
        cfg.rl.iterations = 100;
        cfg.rl.lr = 1e-3;
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(RunConfig::default()),
            "desk" => Some(RunConfig::desk()),
            _ => None,
        }
    }

    /// All settable keys, in file order.
    pub fn keys() -> impl Iterator<Item = String> {
        Self::KEYS
            .iter()
            .map(|k| k.to_string())
            .chain(Element::ALL.iter().map(|e| format!("valency.{}", e.symbol())))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(symbol) = key.strip_prefix("valency.") {
            let e = Element::from_symbol(symbol)?;
            return Some(self.valency.max_valence(e).to_string());
        }
        self.get_field(key)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let raw = raw.trim();
        if let Some(symbol) = key.strip_prefix("valency.") {
            let e = Element::from_symbol(symbol).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            let limit = raw
                .parse::<u8>()
                .ok()
                .and_then(|l| self.valency.with_limit(e, l).ok())
                .ok_or_else(|| ConfigError::Value {
                    key: key.to_string(),
                    value: raw.to_string(),
                    expected: "an integer in 1..=255",
                })?;
            self.valency = limit;
            return Ok(());
        }
        self.set_field(key, raw)
    }

    /// Parses `key = value` lines; `#` starts a comment. An optional leading
    /// `preset = desk` line picks the base the remaining keys override.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (k, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "preset" {
                if !seen.is_empty() {
                    return Err(ConfigError::Syntax {
                        line: k + 1,
                        message: "preset must come before other keys".into(),
                    });
                }
                cfg = RunConfig::preset(value).ok_or_else(|| ConfigError::Value {
                    key: key.into(),
                    value: value.into(),
                    expected: "default or desk",
                })?;
                seen.insert(key.to_string());
                continue;
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    message: format!("duplicate key {key}"),
                });
            }
            cfg.set(key, value).map_err(|e| match e {
                ConfigError::UnknownKey(key) => ConfigError::Syntax {
                    line: k + 1,
                    message: format!("unknown key {key:?}"),
                },
                e => e,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::keys() {
            let value = self.get(&key).expect("listed key");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rl.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.train;
        if t.batch_size == 0 {
            return invalid("train.batch_size must be positive");
        }
        if !(t.lr > 0.0 && t.final_lr > 0.0) {
            return invalid("train learning rates must be positive");
        }
        if !(t.decay > 0.0 && t.decay <= 1.0) {
            return invalid("train.decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || t.eps <= 0.0 {
            return invalid("Adam moments must lie in [0, 1) and eps must be positive");
        }
        let g = &self.gcn;
        if g.model.layers == 0 || g.model.hidden == 0 || g.batch_size == 0 {
            return invalid("gcn sizes must be positive");
        }
        if !(g.test_fraction > 0.0 && g.test_fraction < 1.0) {
            return invalid("gcn.test_fraction must lie in (0, 1)");
        }
        if !(g.lr > 0.0 && g.epoch_decay > 0.0) {
            return invalid("gcn learning rate and decay must be positive");
        }
        let m = &self.metrics;
        if m.eval.fingerprint_bits == 0 || m.histogram_bins == 0 {
            return invalid("fingerprint bits and histogram bins must be positive");
        }
        if self.external.timeout_ms == 0 {
            return invalid("external.timeout_ms must be positive");
        }
        Ok(())
    }

    /// Pretraining config for a dataset of `molecules`; the decay interval is
    /// chosen so the rate reaches `final_lr` at the last step.
    pub fn train_config(&self, molecules: usize) -> TrainConfig {
        let t = &self.train;
        let steps = (t.epochs * molecules.div_ceil(t.batch_size)) as u64;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                decay: t.decay,
                decay_every: decay_interval(steps, t.lr, t.final_lr, t.decay),
            },
            final_lr: t.final_lr,
            clip_norm: t.clip_norm,
            masked_loss: t.masked_loss,
        }
    }

    pub fn gcn_config(&self) -> GcnTrainConfig {
        GcnTrainConfig {
            seed: self.seed,
            ..self.gcn
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seed,
            min_atoms: self.model.min_atoms,
            ..self.metrics.eval
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        for cfg in [RunConfig::default(), RunConfig::desk()] {
            let text = cfg.to_text();
            assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
            assert_eq!(text.lines().count(), RunConfig::keys().count());
        }
    }

    #[test]
    fn every_key_is_settable() {
        let base = RunConfig::default();
        for key in RunConfig::keys() {
            let value = base.get(&key).unwrap();
            let mut cfg = base.clone();
            cfg.set(&key, &value).unwrap();
            assert_eq!(cfg, base, "{key}");
        }
    }

    #[test]
    fn overrides_and_preset() {
        let cfg = RunConfig::parse("preset = desk\n# comment\nseed = 7\nvalency.N = 4\nrl.orientation = from_start  # trailing\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model, MolecularRnnConfig::desk());
        assert_eq!(cfg.valency.max_valence(Element::N), 4);
        assert_eq!(cfg.rl.orientation, DiscountOrientation::FromStart);
        assert_eq!(cfg.train.lr, 1e-3);
    }

    #[test]
    fn errors_name_the_problem() {
        assert!(matches!(
            RunConfig::parse("seed = 1\nmodel.colour = 3"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse("seed"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("seed = -1"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("train.lr = nan"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(RunConfig::parse("seed = 1\npreset = desk"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(RunConfig::parse("valency.C = 0"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("model.window = 60"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn decay_interval_reaches_final_rate() {
        let cfg = RunConfig::default();
        let tc = cfg.train_config(250_000);
        let steps = (250 * 250_000usize.div_ceil(512)) as u64;
        let drops = steps / tc.adam.decay_every;
        let final_lr = tc.adam.lr * tc.adam.decay.powi(drops as i32);
        assert!(final_lr <= 1e-5 * 1.001, "{final_lr}");
        assert!(final_lr > 0.9e-5, "{final_lr}");
    }
}
