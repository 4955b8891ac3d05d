use super::*;
use crate::autodiff::{gradient_check, sample_coordinates};
use crate::dataio::Dataset;
use crate::rng;

fn random_matrix(n: usize, d: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, "test.matrix");
    let data = (0..n * d)
        .map(|_| rng::uniform(&mut r, -2.0, 2.0))
        .collect();
    Tensor::new(vec![n, d], data).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn set(model: &mut TrainedModel, name: &str, data: Vec<f64>) {
    let id = model.params.id(name).unwrap();
    let v = model.params.value_mut(id);
    assert_eq!(v.len(), data.len(), "{name}");
    v.data_mut().copy_from_slice(&data);
}

fn zero_all(model: &mut TrainedModel) {
    for id in model.params.ids().collect::<Vec<_>>() {
        model.params.value_mut(id).data_mut().fill(0.0);
    }
}

fn small_saint(use_intersample: bool) -> SaintConfig {
    SaintConfig {
        use_intersample,
        ..SaintConfig::default()
    }
}

fn per_row(model: &TrainedModel, x: &Tensor) -> Vec<f64> {
    (0..x.rows())
        .map(|i| predict_proba(model, &x.select_rows(&[i])).unwrap()[0])
        .collect()
}

// Plain-f64 reference pieces for the block oracles.

fn ref_linear(x: &[f64], rows: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        for j in 0..n {
            let mut s = b.data()[j];
            for i in 0..k {
                s += x[r * k + i] * w.get2(i, j);
            }
            out[r * n + j] = s;
        }
    }
    out
}

fn ref_layer_norm(x: &[f64], width: usize, gain: &Tensor, bias: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(width) {
        let m = row.iter().sum::<f64>() / width as f64;
        let v = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / width as f64;
        let s = (v + NORM_EPS).sqrt();
        for (j, a) in row.iter().enumerate() {
            out.push((a - m) / s * gain.data()[j] + bias.data()[j]);
        }
    }
    out
}

fn p<'a>(model: &'a TrainedModel, name: &str) -> &'a Tensor {
    model.params.value(model.params.id(name).unwrap())
}

/// `LN2(z + FF(z))` with `z = LN1(r)`, per `d`-wide token.
fn ref_post_attention(model: &TrainedModel, prefix: &str, r: &[f64], d: usize) -> Vec<f64> {
    let rows = r.len() / d;
    let z = ref_layer_norm(
        r,
        d,
        p(model, &format!("{prefix}.norm1.gain")),
        p(model, &format!("{prefix}.norm1.bias")),
    );
    let h = ref_linear(
        &z,
        rows,
        p(model, &format!("{prefix}.ff1.W")),
        p(model, &format!("{prefix}.ff1.b")),
    );
    let h: Vec<f64> = h.into_iter().map(|v| v.max(0.0)).collect();
    let f = ref_linear(
        &h,
        rows,
        p(model, &format!("{prefix}.ff2.W")),
        p(model, &format!("{prefix}.ff2.b")),
    );
    let r2: Vec<f64> = z.iter().zip(&f).map(|(a, b)| a + b).collect();
    ref_layer_norm(
        &r2,
        d,
        p(model, &format!("{prefix}.norm2.gain")),
        p(model, &format!("{prefix}.norm2.bias")),
    )
}

fn randomize_norms(model: &mut TrainedModel, seed: u64) {
    let mut r = rng::stream(seed, "test.norms");
    let ids: Vec<_> = model
        .params
        .ids()
        .filter(|&id| {
            let n = &model.params.get(id).name;
            n.ends_with(".gain") || n.ends_with(".bias") || n.ends_with(".b")
        })
        .collect();
    for id in ids {
        for v in model.params.value_mut(id).data_mut() {
            *v = rng::uniform(&mut r, -0.5, 0.5) + if *v == 1.0 { 1.0 } else { 0.0 };
        }
    }
}

#[test]
fn mlp_zero_weights_give_one_half() {
    let mut m = TrainedModel::init(ModelConfig::Mlp(MlpConfig::default()), 22, 1).unwrap();
    zero_all(&mut m);
    let out = mlp_forward(&m, &random_matrix(5, 22, 1)).unwrap();
    assert_eq!(out, vec![0.5; 5]);
}

#[test]
fn mlp_hand_computed_two_feature_model() {
    let cfg = MlpConfig {
        hidden_sizes: vec![1],
    };
    let mut m = TrainedModel::init(ModelConfig::Mlp(cfg), 2, 1).unwrap();
    set(&mut m, "mlp.layer0.W", vec![0.5, -1.2]);
    set(&mut m, "mlp.layer0.b", vec![0.3]);
    set(&mut m, "mlp.out.W", vec![2.0]);
    set(&mut m, "mlp.out.b", vec![-0.4]);
    let x = Tensor::from_rows(&[vec![1.0, 0.2], vec![-2.0, 0.5]]).unwrap();
    let out = mlp_forward(&m, &x).unwrap();
    // Row 0: h = relu(0.5 - 0.24 + 0.3) = 0.56, logit = 1.12 - 0.4 = 0.72.
    // Row 1: h = relu(-1 - 0.6 + 0.3) = 0, logit = -0.4.
    let expect = [1.0 / (1.0 + (-0.72f64).exp()), 1.0 / (1.0 + 0.4f64.exp())];
    assert!(max_abs_diff(&out, &expect) <= 1e-12, "{out:?}");
}

#[test]
fn mlp_rows_are_independent_and_dims_checked() {
    let m = generic_model(ModelConfig::Mlp(MlpConfig::default()), 3);
    let x = random_matrix(6, 22, 2);
    let batched = predict_proba(&m, &x).unwrap();
    assert!(max_abs_diff(&batched, &per_row(&m, &x)) <= 1e-10);
    let dup = Tensor::from_rows(&[x.row(0).to_vec(), x.row(0).to_vec()]).unwrap();
    let d = predict_proba(&m, &dup).unwrap();
    assert_eq!(d[0], d[1]);
    assert!(matches!(
        predict_proba(&m, &random_matrix(2, 21, 1)),
        Err(Error::Dimension { .. })
    ));
    assert!(attentive_forward(&m, &x).is_err());
}

#[test]
fn attentive_zero_mask_weights_are_uniform() {
    let mut m =
        TrainedModel::init(ModelConfig::Attentive(AttentiveConfig::default()), 22, 4).unwrap();
    set(&mut m, "attentive.mask.W", vec![0.0; 22 * 22]);
    let x = random_matrix(5, 22, 3);
    let ins = attentive_inspect(&m, &x).unwrap();
    assert!(ins
        .mask
        .data()
        .iter()
        .all(|&v| (v - 1.0 / 22.0).abs() <= 1e-15));
}

#[test]
fn attentive_mask_is_distribution_and_recomposes() {
    let m = generic_model(ModelConfig::Attentive(AttentiveConfig::default()), 5);
    let x = random_matrix(7, 22, 4);
    let ins = attentive_inspect(&m, &x).unwrap();
    for i in 0..7 {
        let row = ins.mask.row(i);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (j, &w) in row.iter().enumerate() {
            assert!((ins.masked_input.get2(i, j) - w * x.get2(i, j)).abs() <= 1e-12);
        }
    }
    assert_eq!(ins.probabilities, attentive_forward(&m, &x).unwrap());
    assert!(max_abs_diff(&ins.probabilities, &per_row(&m, &x)) <= 1e-10);
}

#[test]
fn attentive_ghost_batches_follow_virtual_batch_size() {
    let cfg = AttentiveConfig {
        head_hidden: 5,
        virtual_batch: 4,
    };
    let m = TrainedModel::init(ModelConfig::Attentive(cfg), 22, 6).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random_matrix(10, 22, 5));
    let mut r = rng::stream(1, "test");
    let out = m.forward(&mut g, x, &mut Mode::Train(&mut r)).unwrap();
    let rows: Vec<usize> = out.batch_stats.iter().map(|c| c.rows).collect();
    assert_eq!(rows, vec![4, 4, 2]);

    let mut stats = RunningStats::new(2);
    stats.update(&[ChunkStats {
        rows: 3,
        mean: vec![1.0, -1.0],
        var: vec![2.0, 0.0],
    }]);
    assert_eq!(stats.mean, vec![0.1, -0.1]);
    assert_eq!(stats.var, vec![1.1, 0.9]);
}

#[test]
fn saint_embed_shape_bias_and_locality() {
    let m = TrainedModel::init(ModelConfig::Saint(small_saint(true)), 22, 7).unwrap();
    let mut params = m.params.clone();
    let b = params.id("saint.embed.b").unwrap();
    let mut r = rng::stream(7, "bias");
    for v in params.value_mut(b).data_mut() {
        *v = rng::uniform(&mut r, -1.0, 1.0);
    }
    let mut g = Graph::new();
    let zero = g.constant(Tensor::zeros(&[3, 22]));
    let e = saint_embed(&mut g, &params, zero).unwrap();
    assert_eq!(g.value(e).shape(), &[3, 22, 16]);
    for i in 0..3 {
        assert_eq!(
            &g.value(e).data()[i * 352..(i + 1) * 352],
            params.value(b).data()
        );
    }

    let x = random_matrix(2, 22, 8);
    let mut x2 = x.clone();
    for i in 0..2 {
        x2.data_mut()[i * 22 + 5] *= 2.0;
    }
    let (a, c) = (g.constant(x), g.constant(x2));
    let (ea, ec) = (
        saint_embed(&mut g, &params, a).unwrap(),
        saint_embed(&mut g, &params, c).unwrap(),
    );
    let (va, vc) = (g.value(ea).data(), g.value(ec).data());
    for i in 0..2 {
        for j in 0..22 {
            let s = (i * 22 + j) * 16;
            let same = va[s..s + 16] == vc[s..s + 16];
            assert_eq!(same, j != 5, "row {i} token {j}");
        }
    }
}

#[test]
fn self_attention_block_with_zero_values_matches_composition() {
    let mut m = TrainedModel::init(ModelConfig::Saint(small_saint(false)), 22, 9).unwrap();
    randomize_norms(&mut m, 9);
    set(&mut m, "saint.layer0.self.attn.v.W", vec![0.0; 256]);
    set(&mut m, "saint.layer0.self.attn.v.b", vec![0.0; 16]);
    let h = random_matrix(3 * 22, 16, 10).reshape(&[3, 22, 16]).unwrap();
    let mut g = Graph::new();
    let hn = g.constant(h.clone());
    let mut traces = Vec::new();
    let cfg = small_saint(false);
    let out =
        self_attention_block(&mut g, &m.params, &cfg, 0, hn, &mut Mode::Eval, &mut traces).unwrap();
    assert_eq!(g.value(out).shape(), &[3, 22, 16]);

    // Zero values make every head's context zero, so attention output is o.b.
    let ob = p(&m, "saint.layer0.self.attn.o.b").data().to_vec();
    let r: Vec<f64> = h
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v + ob[i % 16])
        .collect();
    let expect = ref_post_attention(&m, "saint.layer0.self", &r, 16);
    assert!(max_abs_diff(g.value(out).data(), &expect) <= 1e-12);

    assert_eq!(traces.len(), 1);
    let w = g.value(traces[0].node);
    assert_eq!(w.shape(), &[6, 22, 22]);
    for row in w.data().chunks(22) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn intersample_block_single_row_is_residual_path() {
    let mut m = TrainedModel::init(ModelConfig::Saint(small_saint(true)), 22, 11).unwrap();
    randomize_norms(&mut m, 11);
    let h = random_matrix(22, 16, 12).reshape(&[1, 22, 16]).unwrap();
    let mut g = Graph::new();
    let hn = g.constant(h.clone());
    let mut traces = Vec::new();
    let cfg = small_saint(true);
    let out =
        intersample_attention_block(&mut g, &m.params, &cfg, 0, hn, &mut Mode::Eval, &mut traces)
            .unwrap();
    let w = g.value(traces[0].node);
    assert_eq!(w.shape(), &[2, 1, 1]);
    assert!(w.data().iter().all(|&v| v == 1.0));

    let pre = "saint.layer0.inter.attn";
    let v = ref_linear(
        h.data(),
        1,
        p(&m, &format!("{pre}.v.W")),
        p(&m, &format!("{pre}.v.b")),
    );
    let o = ref_linear(
        &v,
        1,
        p(&m, &format!("{pre}.o.W")),
        p(&m, &format!("{pre}.o.b")),
    );
    let r: Vec<f64> = h.data().iter().zip(&o).map(|(a, b)| a + b).collect();
    let expect = ref_post_attention(&m, "saint.layer0.inter", &r, 16);
    assert!(max_abs_diff(g.value(out).data(), &expect) <= 1e-10);
}

#[test]
fn intersample_attention_is_permutation_equivariant() {
    let m = generic_model(ModelConfig::Saint(small_saint(true)), 13);
    let x = random_matrix(9, 22, 14);
    let perm = [4, 0, 8, 2, 7, 1, 6, 3, 5];
    let xp = x.select_rows(&perm);
    let base = predict_proba(&m, &x).unwrap();
    let permuted = predict_proba(&m, &xp).unwrap();
    let expect: Vec<f64> = perm.iter().map(|&i| base[i]).collect();
    assert!(max_abs_diff(&permuted, &expect) <= 1e-10);

    // Block level, on the embedded tokens.
    let cfg = small_saint(true);
    let mut g = Graph::new();
    let (a, b) = (g.constant(x), g.constant(xp));
    let (ea, eb) = (
        saint_embed(&mut g, &m.params, a).unwrap(),
        saint_embed(&mut g, &m.params, b).unwrap(),
    );
    let mut t = Vec::new();
    let oa = intersample_attention_block(&mut g, &m.params, &cfg, 0, ea, &mut Mode::Eval, &mut t)
        .unwrap();
    let ob = intersample_attention_block(&mut g, &m.params, &cfg, 0, eb, &mut Mode::Eval, &mut t)
        .unwrap();
    let (va, vb) = (g.value(oa), g.value(ob));
    for (k, &i) in perm.iter().enumerate() {
        let (ra, rb) = (
            &va.data()[i * 352..(i + 1) * 352],
            &vb.data()[k * 352..(k + 1) * 352],
        );
        assert!(max_abs_diff(ra, rb) <= 1e-10);
    }
}

#[test]
fn saint_without_intersample_is_row_independent() {
    let m = generic_model(ModelConfig::Saint(small_saint(false)), 15);
    let x = random_matrix(6, 22, 16);
    assert!(max_abs_diff(&saint_forward(&m, &x).unwrap(), &per_row(&m, &x)) <= 1e-10);
}

#[test]
fn saint_duplicated_batch_preserves_outputs() {
    let m = generic_model(ModelConfig::Saint(small_saint(true)), 17);
    let x = random_matrix(5, 22, 18);
    let idx: Vec<usize> = (0..5).chain(0..5).collect();
    let base = saint_forward(&m, &x).unwrap();
    let doubled = saint_forward(&m, &x.select_rows(&idx)).unwrap();
    assert!(max_abs_diff(&base, &doubled[..5]) <= 1e-6);
}

#[test]
fn saint_attention_maps_are_distributions() {
    let m = TrainedModel::init(ModelConfig::Saint(small_saint(true)), 22, 19).unwrap();
    let x = random_matrix(4, 22, 20);
    let maps = m.attention_maps(&x).unwrap();
    assert_eq!(maps.len(), 4);
    for map in &maps {
        let width = map.weights.cols();
        let expect = match map.scope {
            AttentionScope::Feature => vec![8, 22, 22],
            AttentionScope::Sample => vec![2, 4, 4],
            AttentionScope::Mask => unreachable!(),
        };
        assert_eq!(map.weights.shape(), expect.as_slice());
        for row in map.weights.data().chunks(width) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn inference_is_repeatable_and_in_open_unit_interval() {
    for cfg in [
        ModelConfig::Mlp(MlpConfig::default()),
        ModelConfig::Attentive(AttentiveConfig::default()),
        ModelConfig::Saint(SaintConfig::default()),
    ] {
        let m = generic_model(cfg, 21);
        let x = random_matrix(5, 22, 22);
        let a = predict_proba(&m, &x).unwrap();
        assert_eq!(a, predict_proba(&m, &x).unwrap());
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn dropout_only_changes_training_passes() {
    let m = generic_model(
        ModelConfig::Saint(SaintConfig {
            dropout: 0.5,
            ..SaintConfig::default()
        }),
        23,
    );
    let x = random_matrix(4, 22, 24);
    let run = |mode: &mut Mode<'_>| {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let out = m.forward(&mut g, xn, mode).unwrap();
        g.value(out.prob).data().to_vec()
    };
    let eval = run(&mut Mode::Eval);
    let mut r = rng::stream(1, "drop");
    assert_ne!(run(&mut Mode::Train(&mut r)), eval);
}

/// Untrained model with its zero output layer replaced by random weights, so
/// gradients reach every parameter.
fn generic_model(cfg: ModelConfig, seed: u64) -> TrainedModel {
    let mut model = TrainedModel::init(cfg, 22, seed).unwrap();
    let mut r = rng::stream(seed, "test.head");
    let ids: Vec<_> = model
        .params
        .ids()
        .filter(|&id| model.params.get(id).name.contains(".out."))
        .collect();
    for id in ids {
        for v in model.params.value_mut(id).data_mut() {
            *v = rng::uniform(&mut r, -0.5, 0.5);
        }
    }
    model
}

fn check_model_gradients(cfg: ModelConfig, seed: u64) -> f64 {
    let model = generic_model(cfg, seed);
    let x = random_matrix(8, 22, seed + 100);
    let y: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
    let mut store = model.params.clone();
    let mut r = rng::stream(seed, "coords");
    let coords = sample_coordinates(&store, 60.max(store.len()), &mut r);
    gradient_check(
        &mut store,
        |params| {
            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let mut drop_rng = rng::stream(seed, "gradcheck.dropout");
            let out = model.forward_with(params, &mut g, xn, &mut Mode::Train(&mut drop_rng))?;
            let bce = g.binary_cross_entropy(out.prob, &y)?;
            let loss = g.scale(bce, 1.0 / 8.0);
            Ok((g, loss))
        },
        &coords,
        1e-5,
    )
    .unwrap()
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let err = check_model_gradients(ModelConfig::Mlp(MlpConfig::default()), 31);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn attentive_gradients_match_finite_differences() {
    let err = check_model_gradients(ModelConfig::Attentive(AttentiveConfig::default()), 32);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn saint_gradients_match_finite_differences() {
    let err = check_model_gradients(ModelConfig::Saint(SaintConfig::default()), 33);
    assert!(err < 1e-3, "{err}");
}

/// 20 rows, two features, separable by `x0 + x1 > 0` with margin.
fn toy_dataset() -> Dataset {
    let mut r = rng::stream(3, "toy");
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let label = (i % 2) as u8;
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let a = rng::uniform(&mut r, -1.0, 1.0);
        let b = sign * rng::uniform(&mut r, 0.5, 1.5);
        rows.push(vec![a + b, b - a]);
        y.push(label);
    }
    Dataset::new(
        Tensor::from_rows(&rows).unwrap(),
        y,
        vec!["a".into(), "b".into()],
    )
    .unwrap()
}

fn all_kinds() -> [ModelConfig; 3] {
    [
        ModelConfig::Mlp(MlpConfig::default()),
        ModelConfig::Attentive(AttentiveConfig::default()),
        ModelConfig::Saint(SaintConfig::default()),
    ]
}

#[test]
fn toy_problem_is_learned_by_every_kind() {
    let data = toy_dataset();
    let tc = TrainConfig {
        epochs: 200,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    for cfg in all_kinds() {
        let m = train(&cfg, &tc, &data).unwrap();
        assert_eq!(m.training_loss_curve.len(), 200);
        let p = predict_proba(&m, &data.x).unwrap();
        let correct = p
            .iter()
            .zip(&data.y)
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        assert_eq!(correct, 20, "{:?}", cfg.kind());
    }
}

#[test]
fn first_epoch_loss_is_near_ln2_and_training_is_deterministic() {
    let mut r = rng::stream(4, "synthetic");
    let n = 60;
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 4 != 0)).collect();
    let data: Vec<f64> = (0..n * 22)
        .map(|k| rng::uniform(&mut r, -1.5, 1.5) + 0.5 * f64::from(y[k / 22]))
        .collect();
    let x = Tensor::new(vec![n, 22], data).unwrap();
    let ds = Dataset::new(x, y, (0..22).map(|j| format!("f{j}")).collect()).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    for cfg in all_kinds() {
        let a = train(&cfg, &tc, &ds).unwrap();
        let b = train(&cfg, &tc, &ds).unwrap();
        assert!(
            (a.training_loss_curve[0] - std::f64::consts::LN_2).abs() <= 0.15,
            "{:?} {:?}",
            cfg.kind(),
            a.training_loss_curve
        );
        assert_eq!(a.training_loss_curve, b.training_loss_curve);
        assert_eq!(a.params, b.params);
    }
}

#[test]
fn non_finite_inputs_report_divergence() {
    let mut data = toy_dataset();
    data.x.data_mut()[0] = f64::NAN;
    let err = train(
        &ModelConfig::Mlp(MlpConfig::default()),
        &TrainConfig::default(),
        &data,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
}

#[test]
fn single_class_training_data_is_rejected() {
    let mut data = toy_dataset();
    data.y.iter_mut().for_each(|v| *v = 1);
    assert!(train(
        &ModelConfig::Mlp(MlpConfig::default()),
        &TrainConfig::default(),
        &data
    )
    .is_err());
}

#[test]
fn config_validation() {
    assert!(ModelConfig::Saint(SaintConfig {
        d_emb: 15,
        ..SaintConfig::default()
    })
    .validate()
    .is_err());
    assert!(ModelConfig::Saint(SaintConfig {
        dropout: 1.0,
        ..SaintConfig::default()
    })
    .validate()
    .is_err());
    assert!(ModelConfig::Mlp(MlpConfig {
        hidden_sizes: vec![4, 0]
    })
    .validate()
    .is_err());
    assert!(ModelConfig::Attentive(AttentiveConfig {
        virtual_batch: 0,
        ..AttentiveConfig::default()
    })
    .validate()
    .is_err());
    assert!(TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
}

#[test]
fn model_serializes_bit_exactly() {
    let m = train(
        &ModelConfig::Attentive(AttentiveConfig::default()),
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        &toy_dataset(),
    )
    .unwrap();
    let text = serde_json::to_string(&m).unwrap();
    let back: TrainedModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(
        predict_proba(&back, &toy_dataset().x).unwrap(),
        predict_proba(&m, &toy_dataset().x).unwrap()
    );
}
