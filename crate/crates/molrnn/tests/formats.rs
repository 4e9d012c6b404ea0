use molrnn::config::RunConfig;
use molrnn::formats::*;
use molrnn::workers::Workers;
use molrnn::{fnv1a64, FormatError};
use molrnn_core::codec::{encode_default, BfsSequence};
use molrnn_core::critics::{GcnConfig, GcnRegressor};
use molrnn_core::model::{nll, train_epoch, ModelState, MolecularRnnConfig};
use molrnn_core::smiles::{self, parse};
use proptest::prelude::*;
use rand::SeedableRng;

const CORPUS: &str = include_str!("../../../data/moses_sample.smi");

fn sequences(cfg: &RunConfig, count: usize) -> Vec<BfsSequence> {
    smiles::lines(CORPUS)
        .take(count)
        .map(|(_, s)| encode_default(&parse(s).unwrap(), &cfg.model.codec()).unwrap())
        .collect()
}

fn desk() -> RunConfig {
    RunConfig::preset("desk").unwrap()
}

proptest! {
    #[test]
    fn packed_categories_roundtrip(cats in prop::collection::vec(0u8..4, 0..200)) {
        let packed = pack_categories(&cats);
        prop_assert_eq!(packed.len(), cats.len().div_ceil(4));
        prop_assert_eq!(unpack_categories(&packed, cats.len()), cats);
    }

    #[test]
    fn cache_roundtrips(start in 0usize..2900, len in 1usize..60, seed in any::<u64>()) {
        static ALL: std::sync::OnceLock<Vec<BfsSequence>> = std::sync::OnceLock::new();
        let config = RunConfig { seed, ..RunConfig::default() };
        let all = ALL.get_or_init(|| sequences(&config, 3000));
        let data = Dataset { config, sequences: all[start..(start + len).min(all.len())].to_vec() };
        let bytes = write_cache(&data);
        prop_assert_eq!(read_cache(&bytes).unwrap(), data);
    }

    #[test]
    fn any_flipped_byte_is_detected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let config = RunConfig::default();
        let data = Dataset { sequences: sequences(&config, 5), config };
        let mut bytes = write_cache(&data);
        let k = pos.index(bytes.len());
        bytes[k] ^= 1 << bit;
        prop_assert!(read_cache(&bytes).is_err());
    }
}

#[test]
fn cache_layout_header() {
    let config = RunConfig::default();
    let data = Dataset {
        sequences: sequences(&config, 3),
        config,
    };
    let bytes = write_cache(&data);
    assert_eq!(&bytes[..8], CACHE_MAGIC);
    assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), CACHE_VERSION);
    assert_eq!(&bytes[10..13], &[12, 10, 50]);
    let (body, sum) = bytes.split_at(bytes.len() - 8);
    assert_eq!(u64::from_le_bytes(sum.try_into().unwrap()), fnv1a64(body));
}

#[test]
fn damaged_files_are_rejected() {
    let config = RunConfig::default();
    let data = Dataset {
        sequences: sequences(&config, 4),
        config,
    };
    let bytes = write_cache(&data);
    for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(read_cache(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    assert!(matches!(read_cache(&bytes[..bytes.len() - 1]), Err(FormatError::Checksum)));

    let mut other = bytes.clone();
    other[..8].copy_from_slice(CHECKPOINT_MAGIC);
    assert!(matches!(read_cache(&other), Err(FormatError::Magic(_))));

    // a newer version with a valid checksum
    let mut newer = bytes[..bytes.len() - 8].to_vec();
    newer[8] = 2;
    let sum = fnv1a64(&newer);
    newer.extend_from_slice(&sum.to_le_bytes());
    assert!(matches!(
        read_cache(&newer),
        Err(FormatError::Version { found: 2, expected: 1, .. })
    ));
}

#[test]
fn checkpoint_restores_training_state() {
    let mut cfg = desk();
    cfg.set("train.batch_size", "8").unwrap();
    cfg.set("train.epochs", "3").unwrap();
    let data = sequences(&cfg, 24);
    let tc = cfg.train_config(data.len());
    let mut state = ModelState::new(cfg.model, tc.adam, 3).unwrap();
    train_epoch(&mut state, &data, &cfg.valency, &tc, None).unwrap();

    let bytes = write_checkpoint(&state, &cfg);
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let back = read_checkpoint(&bytes).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.state.epoch, state.epoch);
    assert_eq!(back.state.adam.step, state.adam.step);
    assert_eq!(write_checkpoint(&back.state, &back.config), bytes);

    let vt = cfg.valency;
    let a = nll(&state.net, &state.params, &data, &vt, false).unwrap();
    let b = nll(&back.state.net, &back.state.params, &data, &vt, false).unwrap();
    assert_eq!(a.loss, b.loss);

    let workers = Workers::new(1).unwrap();
    let x = workers.sample(&state.net, &state.params, 20, &vt, true, 9).unwrap();
    let y = workers.sample(&back.state.net, &back.state.params, 20, &vt, true, 9).unwrap();
    assert_eq!(x, y);

    // continued training matches an uninterrupted run
    let mut resumed = back.state;
    train_epoch(&mut state, &data, &vt, &tc, None).unwrap();
    train_epoch(&mut resumed, &data, &vt, &tc, None).unwrap();
    assert_eq!(write_checkpoint(&state, &cfg), write_checkpoint(&resumed, &cfg));
}

#[test]
fn checkpoint_truncation_is_a_checksum_error() {
    let cfg = desk();
    let state = ModelState::new(cfg.model, Default::default(), 1).unwrap();
    let bytes = write_checkpoint(&state, &cfg);
    assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 100]), Err(FormatError::Checksum)));
}

#[test]
fn checkpoint_records_its_own_model_shape() {
    let mut cfg = desk();
    let state = ModelState::new(
        MolecularRnnConfig {
            window: 6,
            ..MolecularRnnConfig::desk()
        },
        Default::default(),
        1,
    )
    .unwrap();
    // the embedded config follows the state, not the caller
    let back = read_checkpoint(&write_checkpoint(&state, &cfg)).unwrap();
    assert_eq!(back.config.model.window, 6);
    cfg.model.window = 6;
    assert_eq!(back.config, cfg);
}

#[test]
fn regressor_roundtrip() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut model = GcnRegressor::new(GcnConfig { layers: 3, hidden: 7 }, &mut rng);
    model.label_mean = 12.5;
    model.label_std = 3.25;
    let file = RegressorFile {
        config: RunConfig::default(),
        model,
        unit: "degC".into(),
        test_rmse: 1.5,
    };
    let bytes = write_regressor(&file);
    assert_eq!(&bytes[..8], REGRESSOR_MAGIC);
    let back = read_regressor(&bytes).unwrap();
    assert_eq!(back.unit, "degC");
    assert_eq!(back.test_rmse, 1.5);
    let g = parse("CC(=O)Nc1ccccc1").unwrap();
    assert_eq!(back.model.predict(&g).unwrap(), file.model.predict(&g).unwrap());
    assert!(matches!(read_regressor(&bytes[..bytes.len() - 3]), Err(FormatError::Checksum)));
}
