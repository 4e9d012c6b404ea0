//! Binary artifacts: the encoded dataset cache, model checkpoints and
//! regressor files. All are little-endian, start with an 8-byte magic and a
//! `u16` format version, embed the run configuration as text, and end with an
//! FNV-1a 64 checksum over every preceding byte. Byte layouts are listed in
//! `docs/formats.md`.

use molrnn_core::codec::BfsSequence;
use molrnn_core::critics::{GcnConfig, GcnRegressor};
use molrnn_core::model::{ModelState, MolecularRnnConfig};
use molrnn_core::nn::{Adam, AdamConfig, Grads, Tensor};
use molrnn_core::Element;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{Reader, Writer};
use crate::config::RunConfig;
use crate::FormatError;

pub const CACHE_MAGIC: &[u8; 8] = b"MOLRNNDS";
pub const CACHE_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MOLRNNCK";
pub const CHECKPOINT_VERSION: u16 = 1;
pub const REGRESSOR_MAGIC: &[u8; 8] = b"MOLRNNGC";
pub const REGRESSOR_VERSION: u16 = 1;

/// Encoded training molecules plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: RunConfig,
    pub sequences: Vec<BfsSequence>,
}

fn read_config(r: &mut Reader) -> Result<RunConfig, FormatError> {
    let text = r.text()?;
    Ok(RunConfig::parse(&text)?)
}

pub fn write_cache(data: &Dataset) -> Vec<u8> {
    let m = &data.config.model;
    let mut w = Writer::default();
    w.bytes(CACHE_MAGIC);
    w.u16(CACHE_VERSION);
    w.u8(m.window as u8);
    w.u8(m.min_atoms as u8);
    w.u8(m.max_atoms as u8);
    w.u8(Element::ALL.len() as u8);
    for e in Element::ALL {
        w.u8(e.symbol().len() as u8);
        w.bytes(e.symbol().as_bytes());
    }
    w.text(&data.config.to_text());
    w.u32(data.sequences.len() as u32);
    for seq in &data.sequences {
        w.u8(seq.len() as u8);
        for e in seq.atom_types() {
            w.u8(e.index() as u8);
        }
        w.bytes(&pack_categories(seq.edges_flat()));
    }
    w.finish()
}

/// Four 2-bit categories per byte, first category in the low bits.
pub fn pack_categories(cats: &[u8]) -> Vec<u8> {
    cats.chunks(4)
        .map(|c| c.iter().enumerate().fold(0u8, |b, (k, &v)| b | (v & 3) << (2 * k)))
        .collect()
}

pub fn unpack_categories(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count).map(|k| (bytes[k / 4] >> (2 * (k % 4))) & 3).collect()
}

pub fn read_cache(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::open(bytes, CACHE_MAGIC, "dataset cache")?;
    r.version("dataset cache", CACHE_VERSION)?;
    let window = r.u8()? as usize;
    let min_atoms = r.u8()? as usize;
    let max_atoms = r.u8()? as usize;
    let vocab = r.u8()? as usize;
    let mut symbols = Vec::with_capacity(vocab);
    for _ in 0..vocab {
        let n = r.u8()? as usize;
        symbols.push(String::from_utf8_lossy(r.bytes(n)?).into_owned());
    }
    if symbols.iter().map(String::as_str).ne(Element::ALL.iter().map(|e| e.symbol())) {
        return Err(FormatError::Corrupt(format!("element vocabulary {symbols:?} differs from this build")));
    }
    let config = read_config(&mut r)?;
    let m = &config.model;
    if (m.window, m.min_atoms, m.max_atoms) != (window, min_atoms, max_atoms) {
        return Err(FormatError::Corrupt("header bounds disagree with the embedded config".into()));
    }
    let count = r.u32()? as usize;
    let mut sequences = Vec::with_capacity(count.min(1 << 20));
    for k in 0..count {
        let n = r.u8()? as usize;
        let atoms = r
            .bytes(n)?
            .iter()
            .map(|&b| Element::from_index(b as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| FormatError::Corrupt(format!("record {k}: unknown element index")))?;
        let cats = n.saturating_sub(1) * window;
        let packed = r.bytes(cats.div_ceil(4))?;
        let seq = BfsSequence::new(window, atoms, unpack_categories(packed, cats))
            .map_err(|e| FormatError::Corrupt(format!("record {k}: {e}")))?;
        sequences.push(seq);
    }
    r.done()?;
    Ok(Dataset { config, sequences })
}

/// A model state together with the run configuration it was saved under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: ModelState,
}

fn model_fields(m: &MolecularRnnConfig) -> [usize; 11] {
    [
        m.node_embed,
        m.edge_embed,
        m.node_hidden,
        m.node_layers,
        m.node_mlp_hidden,
        m.edge_hidden,
        m.edge_layers,
        m.edge_mlp_hidden,
        m.window,
        m.min_atoms,
        m.max_atoms,
    ]
}

pub fn write_checkpoint(state: &ModelState, config: &RunConfig) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    let mut config = config.clone();
    config.model = *state.config();
    w.text(&config.to_text());
    for v in model_fields(state.config()) {
        w.u32(v as u32);
    }
    w.u64(state.epoch);
    let a = &state.adam.config;
    w.f64s(&[a.lr, a.beta1, a.beta2, a.eps, a.decay]);
    w.u64(a.decay_every);
    w.u64(state.adam.step);
    w.bytes(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.u128(state.rng.get_word_pos());
    w.u32(state.params.len() as u32);
    for (id, p) in state.params.iter() {
        w.text(&p.name);
        w.u32(p.value.rows() as u32);
        w.u32(p.value.cols() as u32);
        w.f64s(p.value.data());
        w.f64s(state.adam.m.get(id));
        w.f64s(state.adam.v.get(id));
    }
    w.finish()
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    r.version("checkpoint", CHECKPOINT_VERSION)?;
    let config = read_config(&mut r)?;
    let mut f = [0usize; 11];
    for v in &mut f {
        *v = r.u32()? as usize;
    }
    let model = MolecularRnnConfig {
        node_embed: f[0],
        edge_embed: f[1],
        node_hidden: f[2],
        node_layers: f[3],
        node_mlp_hidden: f[4],
        edge_hidden: f[5],
        edge_layers: f[6],
        edge_mlp_hidden: f[7],
        window: f[8],
        min_atoms: f[9],
        max_atoms: f[10],
    };
    if model != config.model {
        return Err(FormatError::Corrupt("model block disagrees with the embedded config".into()));
    }
    let epoch = r.u64()?;
    let h = r.f64s(5)?;
    let adam_config = AdamConfig {
        lr: h[0],
        beta1: h[1],
        beta2: h[2],
        eps: h[3],
        decay: h[4],
        decay_every: r.u64()?,
    };
    let step = r.u64()?;
    let seed: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = r.u128()?;

    let mut state = ModelState::new(model, adam_config, 0).map_err(|e| FormatError::Corrupt(e.to_string()))?;
    let count = r.u32()? as usize;
    if count != state.params.len() {
        return Err(FormatError::Corrupt(format!(
            "{count} parameter blobs, model has {}",
            state.params.len()
        )));
    }
    let ids: Vec<_> = state.params.ids().collect();
    let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for id in ids {
        let name = r.text()?;
        if name != state.params.name(id) {
            return Err(FormatError::Corrupt(format!(
                "parameter {name:?} where {:?} was expected",
                state.params.name(id)
            )));
        }
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let len = rows * cols;
        let value = Tensor::from_vec(rows, cols, r.f64s(len)?).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        state
            .params
            .set(id, value)
            .map_err(|e| FormatError::Corrupt(format!("{name}: {e}")))?;
        m.push(r.f64s(len)?);
        v.push(r.f64s(len)?);
    }
    r.done()?;
    let corrupt = |e: molrnn_core::nn::NnError| FormatError::Corrupt(e.to_string());
    state.adam = Adam {
        config: adam_config,
        step,
        m: Grads::from_buffers(&state.params, m).map_err(corrupt)?,
        v: Grads::from_buffers(&state.params, v).map_err(corrupt)?,
    };
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    state.rng = rng;
    state.epoch = epoch;
    Ok(Checkpoint { config, state })
}

/// A trained property regressor with its label unit and held-out error.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorFile {
    pub config: RunConfig,
    pub model: GcnRegressor,
    pub unit: String,
    pub test_rmse: f64,
}

pub fn write_regressor(file: &RegressorFile) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(REGRESSOR_MAGIC);
    w.u16(REGRESSOR_VERSION);
    w.text(&file.config.to_text());
    w.u32(file.model.config.layers as u32);
    w.u32(file.model.config.hidden as u32);
    w.f64s(&[file.model.label_mean, file.model.label_std, file.test_rmse]);
    w.text(&file.unit);
    w.u32(file.model.params.len() as u32);
    for (_, p) in file.model.params.iter() {
        w.text(&p.name);
        w.u32(p.value.rows() as u32);
        w.u32(p.value.cols() as u32);
        w.f64s(p.value.data());
    }
    w.finish()
}

pub fn read_regressor(bytes: &[u8]) -> Result<RegressorFile, FormatError> {
    let mut r = Reader::open(bytes, REGRESSOR_MAGIC, "regressor")?;
    r.version("regressor", REGRESSOR_VERSION)?;
    let config = read_config(&mut r)?;
    let model_config = GcnConfig {
        layers: r.u32()? as usize,
        hidden: r.u32()? as usize,
    };
    let stats = r.f64s(3)?;
    let unit = r.text()?;
    let count = r.u32()? as usize;
    let mut named = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.text()?;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let t = Tensor::from_vec(rows, cols, r.f64s(rows * cols)?).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        named.push((name, t));
    }
    r.done()?;
    let model = GcnRegressor::from_parts(model_config, named, stats[0], stats[1])
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    Ok(RegressorFile {
        config,
        model,
        unit,
        test_rmse: stats[2],
    })
}
