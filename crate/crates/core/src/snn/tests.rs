use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{SeqItem, Sample, SEQ_NUMERIC_FIELDS};

use super::*;

const CHAN_NUM: usize = 2;
const TGT_NUM: usize = 3;
const CHAN_ROWS: usize = 4;
const COIN_ROWS: usize = 6;

fn tiny_config(mode: ModelMode, seq_len: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        mode,
        embedding_mode: EmbeddingMode::E2E,
        seq_len,
        channel_embed_dim: 3,
        coin_embed_dim: 4,
        hidden: vec![6, 5],
        lr: 1e-2,
        alpha_lr_scale: 10.0,
        batch_size: 4,
        epochs: 8,
        patience: 8,
        seed,
        downsample_negatives: None,
    }
}

fn random_sample(rng: &mut ChaCha8Rng, seq_len: usize, masked: usize, label: u8) -> Sample {
    let mut sequence = Vec::new();
    let mut seq_mask = Vec::new();
    for i in 0..seq_len {
        if i < masked {
            let numeric: Vec<f64> = (0..SEQ_NUMERIC_FIELDS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            sequence.push(SeqItem {
                coin: format!("C{i}"),
                coin_id: rng.gen_range(2..COIN_ROWS),
                pump_time: 0,
                numeric,
            });
            seq_mask.push(true);
        } else {
            sequence.push(SeqItem::pad());
            seq_mask.push(false);
        }
    }
    Sample {
        event_ref: "t@0".into(),
        event_time: 0,
        channel: "ch".into(),
        channel_id: rng.gen_range(1..CHAN_ROWS),
        channel_numeric: (0..CHAN_NUM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        target_coin: "TGT".into(),
        target_coin_id: rng.gen_range(2..COIN_ROWS),
        target_numeric: (0..TGT_NUM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        sequence,
        seq_mask,
        label,
    }
}

fn make_batch(seed: u64, n: usize, seq_len: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let masked = if i == 0 { 0 } else { rng.gen_range(1..=seq_len) };
            random_sample(&mut rng, seq_len, masked, (i % 2) as u8)
        })
        .collect()
}

fn params_for(config: ModelConfig) -> ModelParams {
    ModelParams::init(config, CHAN_ROWS, COIN_ROWS, CHAN_NUM, TGT_NUM).unwrap()
}

/// Central-difference derivative of the mean batch loss wrt one coordinate.
fn fd_grad(params: &mut ModelParams, batch: &[Sample], pick: &dyn Fn(&mut ModelParams) -> &mut f64) -> f64 {
    let h = 1e-5;
    let orig = *pick(params);
    *pick(params) = orig + h;
    let up = batch_loss(params, batch);
    *pick(params) = orig - h;
    let down = batch_loss(params, batch);
    *pick(params) = orig;
    (up - down) / (2.0 * h)
}

fn check(analytic: f64, numeric: f64, what: &str) {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-6 {
        // Below finite-difference resolution; require absolute agreement.
        assert!(
            (analytic - numeric).abs() < 1e-8,
            "{what}: analytic {analytic} vs fd {numeric}"
        );
        return;
    }
    let rel = (analytic - numeric).abs() / denom;
    assert!(
        rel < 1e-4,
        "{what}: analytic {analytic} vs fd {numeric} (rel {rel})"
    );
}

#[test]
fn gradients_match_finite_differences() {
    let mut params = params_for(tiny_config(ModelMode::Snn, 3, 7));
    // Nudge alpha off zero so the attention branch is exercised non-trivially.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for a in params.alpha.iter_mut() {
        *a = rng.gen_range(-0.5..0.5);
    }
    let batch = make_batch(3, 6, 3);

    let mut grads = Grads::zeros(&params);
    accumulate_batch(&params, &batch, &mut grads);

    for row in 0..CHAN_ROWS {
        for d in 0..3 {
            let a = grads.channel_rows.get(&row).map_or(0.0, |g| g[d]);
            let f = fd_grad(&mut params, &batch, &move |p| &mut p.channel_table[row * 3 + d]);
            check(a, f, &format!("channel[{row},{d}]"));
        }
    }
    for row in 0..COIN_ROWS {
        for d in 0..4 {
            let a = grads.coin_rows.get(&row).map_or(0.0, |g| g[d]);
            let f = fd_grad(&mut params, &batch, &move |p| &mut p.coin_table[row * 4 + d]);
            check(a, f, &format!("coin[{row},{d}]"));
        }
    }
    for idx in 0..params.alpha.len() {
        let a = grads.alpha[idx];
        let f = fd_grad(&mut params, &batch, &move |p| &mut p.alpha[idx]);
        check(a, f, &format!("alpha[{idx}]"));
    }
    for li in 0..params.layers.len() {
        for wi in 0..params.layers[li].w.len() {
            let a = grads.layers[li].0[wi];
            let f = fd_grad(&mut params, &batch, &move |p| &mut p.layers[li].w[wi]);
            check(a, f, &format!("w[{li},{wi}]"));
        }
        for bi in 0..params.layers[li].b.len() {
            let a = grads.layers[li].1[bi];
            let f = fd_grad(&mut params, &batch, &move |p| &mut p.layers[li].b[bi]);
            check(a, f, &format!("b[{li},{bi}]"));
        }
    }
}

#[test]
fn dnn_equals_snn_with_zero_length_sequence() {
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);

    let run = |mode: ModelMode| {
        let params = params_for(tiny_config(mode, 0, 9));
        train(params, &data, &val).unwrap().params
    };
    let dnn = run(ModelMode::Dnn);
    let snn = run(ModelMode::Snn);

    assert_eq!(dnn.channel_table, snn.channel_table);
    assert_eq!(dnn.coin_table, snn.coin_table);
    assert_eq!(dnn.alpha, snn.alpha);
    for (a, b) in dnn.layers.iter().zip(&snn.layers) {
        assert_eq!(a.w, b.w);
        assert_eq!(a.b, b.b);
    }
}

#[test]
fn snn_v_attention_is_masked_mean() {
    let params = params_for(tiny_config(ModelMode::SnnV, 4, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sample = random_sample(&mut rng, 4, 2, 1);
    let trace = forward(&params, &sample);
    let k = params.config.seq_fields();
    for i in 0..4 {
        for j in 0..k {
            let expected = if sample.seq_mask[i] { 0.5 } else { 0.0 };
            assert!((trace.weights[i * k + j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn snn_v_training_never_moves_alpha() {
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);
    let params = params_for(tiny_config(ModelMode::SnnV, 3, 4));
    let outcome = train(params, &data, &val).unwrap();
    assert!(outcome.params.alpha.iter().all(|&a| a == 0.0));
}

#[test]
fn empty_sequence_pools_to_zero() {
    let params = params_for(tiny_config(ModelMode::Snn, 3, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample = random_sample(&mut rng, 3, 0, 0);
    let trace = forward(&params, &sample);
    assert!(trace.h_s.iter().all(|&v| v == 0.0));
    assert!(trace.weights.iter().all(|&w| w == 0.0));
}

#[test]
fn frozen_coin_table_is_bit_stable_after_training() {
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);
    let mut params = params_for(tiny_config(ModelMode::Snn, 3, 4));
    params.coin_frozen = true;
    let before = params.coin_table.clone();
    let outcome = train(params, &data, &val).unwrap();
    assert_eq!(outcome.params.coin_table, before);
    // Other parameters still learned.
    assert!(outcome.log.len() > 1);
}

#[test]
fn untouched_embedding_rows_keep_their_init() {
    // Coin ids in the data are 2..COIN_ROWS; grow the table so the last
    // rows are provably never referenced.
    let config = tiny_config(ModelMode::Snn, 3, 4);
    let params = ModelParams::init(config, CHAN_ROWS, COIN_ROWS + 5, CHAN_NUM, TGT_NUM).unwrap();
    let de = params.config.coin_embed_dim;
    let before = params.coin_table[COIN_ROWS * de..].to_vec();
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);
    let outcome = train(params, &data, &val).unwrap();
    assert_eq!(outcome.params.coin_table[COIN_ROWS * de..], before[..]);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);
    let run = || {
        let params = params_for(tiny_config(ModelMode::Snn, 3, 42));
        train(params, &data, &val).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.params.coin_table, b.params.coin_table);
    assert_eq!(a.params.alpha, b.params.alpha);
    for (la, lb) in a.params.layers.iter().zip(&b.params.layers) {
        assert_eq!(la.w, lb.w);
    }
    let (sa, _) = predict(&a.params, &val);
    let (sb, _) = predict(&b.params, &val);
    assert_eq!(sa, sb);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = make_batch(5, 24, 3);
    let val = make_batch(6, 8, 3);
    let params = params_for(tiny_config(ModelMode::Snn, 3, 4));
    let outcome = train(params, &data, &val).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    outcome.params.save(&path).unwrap();
    let loaded = ModelParams::load(&path).unwrap();
    let (a, _) = predict(&outcome.params, &val);
    let (b, _) = predict(&loaded, &val);
    assert_eq!(a, b);
}

#[test]
fn heatmap_export_round_trips() {
    let mut params = params_for(tiny_config(ModelMode::Snn, 4, 4));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for a in params.alpha.iter_mut() {
        *a = rng.gen_range(-1.0..1.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alpha.csv");
    export_attention_heatmap(&params, &path).unwrap();
    let rows = import_attention_heatmap(&path).unwrap();
    let k = params.config.seq_fields();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!((v - params.alpha[i * k + j]).abs() < 1e-12);
        }
    }
}

#[test]
fn learns_a_separable_signal() {
    // Label is determined by the sign of the first target feature.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut data = Vec::new();
    for _ in 0..200 {
        let mut s = random_sample(&mut rng, 3, 2, 0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        s.target_numeric[0] = v;
        s.label = (v > 0.0) as u8;
        data.push(s);
    }
    let val = data.split_off(160);
    let mut config = tiny_config(ModelMode::Snn, 3, 5);
    config.epochs = 40;
    config.patience = 40;
    config.lr = 5e-2;
    let params = params_for(config);
    let outcome = train(params, &data, &val).unwrap();
    assert!(
        outcome.best_val_auc > 0.95,
        "val auc {}",
        outcome.best_val_auc
    );
}

#[test]
fn unknown_ids_fall_back_and_are_counted() {
    let params = params_for(tiny_config(ModelMode::Snn, 3, 4));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut s = random_sample(&mut rng, 3, 1, 0);
    s.target_coin_id = 999;
    let (_, unknown) = predict(&params, &[s]);
    assert_eq!(unknown, 1);
}

#[test]
fn single_class_training_data_is_rejected() {
    let mut data = make_batch(5, 8, 3);
    for s in data.iter_mut() {
        s.label = 1;
    }
    let params = params_for(tiny_config(ModelMode::Snn, 3, 4));
    assert!(matches!(
        train(params, &data, &[]),
        Err(crate::error::Error::SingleClassData)
    ));
}
