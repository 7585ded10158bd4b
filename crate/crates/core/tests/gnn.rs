use std::borrow::Cow;
use std::time::Instant;

use isac_core::channel::{generate_scenario, Channels, Dims, Purpose, RngStream, ScenarioConfig};
use isac_core::gnn::*;
use isac_core::linalg::CMatrix;
use isac_core::metrics::{bs_power, c1_violation, c2_violation, evaluate, Noise, ObjectiveWeights, ReceiveMode};
use isac_core::tensor::{Eager, Tape, Tensor};
use num_complex::Complex;
use rand::Rng;

fn tiny_scenario() -> ScenarioConfig {
    ScenarioConfig {
        dims: Dims {
            bs: 1,
            users: 1,
            targets: 1,
            n_t: 4,
            n_rf: 2,
            n_u: 2,
            n_r: 2,
        },
        ..ScenarioConfig::default()
    }
}

fn tiny_config(sc: &ScenarioConfig) -> GnnConfig {
    GnnConfig {
        hidden: 8,
        embed: 4,
        ..GnnConfig::from_scenario(sc)
    }
}

fn draw(sc: &ScenarioConfig, seed: u64, k: u64) -> Channels<f64> {
    let mut rng = RngStream::new(seed, 77, k).rng(Purpose::Scenario);
    generate_scenario(sc, &mut rng).unwrap().1.channels
}

fn node(t: Tensor<f64>) -> Cow<'static, Tensor<f64>> {
    Cow::Owned(t)
}

fn value(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

// Plain-loop dense layer: relu(x W + b) when `relu`.
fn dense_oracle(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>, relu: bool) -> Vec<f64> {
    let (rows, cols) = w.dims2().unwrap();
    assert_eq!(x.len(), rows);
    (0..cols)
        .map(|c| {
            let mut acc = b.get(0, c);
            for r in 0..rows {
                acc += x[r] * w.get(r, c);
            }
            if relu {
                acc.max(0.0)
            } else {
                acc
            }
        })
        .collect()
}

fn mlp_oracle(model: &GnnModel<f64>, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let p = |id| &model.store.get(id).value;
    let h = dense_oracle(x, p(m.l1.w), p(m.l1.b), true);
    dense_oracle(&h, p(m.l2.w), p(m.l2.b), true)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn embedding_matches_hand_composed_chain() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 5).unwrap();
    let ch = draw(&sc, 1, 0);
    let feats = build_node_features::<f64>(&[&ch], 0, &model.config).unwrap();
    let mut g = Eager;
    let z = embed(&mut g, &model.store, &model.nets[0], &feats).unwrap();
    let net = &model.nets[0];
    let user1 = mlp_oracle(&model, &net.emb_com, feats.com.gather_rows(&[1]).unwrap().data());
    let target0 = mlp_oracle(&model, &net.emb_sen, feats.sen.gather_rows(&[0]).unwrap().data());
    assert!(close(z.gather_rows(&[1]).unwrap().data(), &user1, 1e-12));
    assert!(close(z.gather_rows(&[sc.dims.users]).unwrap().data(), &target0, 1e-12));
}

#[test]
fn zero_parameters_give_zero_embeddings() {
    let sc = tiny_scenario();
    let mut model = GnnModel::<f64>::new(tiny_config(&sc), 0).unwrap();
    for p in model.store.iter_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
    let ch = draw(&sc, 2, 0);
    let feats = build_node_features::<f64>(&[&ch], 0, &model.config).unwrap();
    let z = embed(&mut Eager, &model.store, &model.nets[0], &feats).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identical_rows_embed_identically() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 5).unwrap();
    let mut ch = draw(&sc, 3, 0);
    ch.com[0][1] = ch.com[0][0].clone();
    let feats = build_node_features::<f64>(&[&ch], 0, &model.config).unwrap();
    let z = embed(&mut Eager, &model.store, &model.nets[0], &feats).unwrap();
    assert_eq!(z.gather_rows(&[0]).unwrap(), z.gather_rows(&[1]).unwrap());
}

fn layout(users: usize, targets: usize) -> BatchLayout {
    BatchLayout {
        batch: 1,
        users,
        targets,
    }
}

#[test]
fn mean_node_is_column_average() {
    let mut rng = RngStream::new(1, 1, 1).rng(Purpose::Batch);
    let z = Tensor::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0));
    let mut g = Eager;
    let zn = node(z.clone());
    let out = append_mean_node(&mut g, &zn, &layout(2, 1)).unwrap();
    assert_eq!(out.shape(), &[4, 5]);
    let oracle: Vec<f64> = (0..5).map(|c| (z.get(0, c) + z.get(1, c) + z.get(2, c)) / 3.0).collect();
    assert!(close(out.gather_rows(&[3]).unwrap().data(), &oracle, 1e-15));

    let r = Tensor::from_fn(1, 4, |_, c| c as f64 - 1.5);
    let pair = Tensor::concat_rows(&[&r, &r.map(|v| -v)]).unwrap();
    let pn = node(pair);
    let out = append_mean_node(&mut g, &pn, &layout(1, 1)).unwrap();
    assert!(out.gather_rows(&[2]).unwrap().data().iter().all(|&v| v == 0.0));

    let twin = Tensor::concat_rows(&[&r, &r]).unwrap();
    let tn = node(twin);
    let out = append_mean_node(&mut g, &tn, &layout(2, 0)).unwrap();
    assert_eq!(out.gather_rows(&[2]).unwrap(), r);
}

#[test]
fn two_node_convolution_matches_composition() {
    let sc = tiny_scenario();
    let model = GnnModel::<f64>::new(tiny_config(&sc), 9).unwrap();
    let layer = &model.nets[0].conv[0];
    let mut rng = RngStream::new(2, 2, 2).rng(Purpose::Batch);
    let z = Tensor::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
    let mut g = Eager;
    let zn = node(z.clone());
    let out = graph_conv(&mut g, &model.store, layer, &zn, &[vec![0, 1]]).unwrap();
    for (k, other) in [(0, 1), (1, 0)] {
        let agg = mlp_oracle(&model, &layer.node, z.gather_rows(&[other]).unwrap().data());
        let mut cat = z.gather_rows(&[k]).unwrap().data().to_vec();
        cat.extend(agg);
        let oracle = mlp_oracle(&model, &layer.combine, &cat);
        assert!(close(out.gather_rows(&[k]).unwrap().data(), &oracle, 1e-13));
    }
}

#[test]
fn convolution_symmetry_and_preconditions() {
    let sc = tiny_scenario();
    let model = GnnModel::<f64>::new(tiny_config(&sc), 9).unwrap();
    let layer = &model.nets[0].conv[1];
    let mut g = Eager;
    let one = node(Tensor::ones(&[1, 4]));
    assert!(graph_conv(&mut g, &model.store, layer, &one, &[vec![0]]).is_err());

    let same = node(Tensor::from_fn(3, 4, |_, c| 0.3 * c as f64));
    let out = graph_conv(&mut g, &model.store, layer, &same, &[vec![0, 1, 2]]).unwrap();
    assert_eq!(out.gather_rows(&[0]).unwrap(), out.gather_rows(&[2]).unwrap());

    let mut rng = RngStream::new(3, 3, 3).rng(Purpose::Batch);
    let z = Tensor::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
    let perm = [2, 0, 3, 1];
    let zp = z.gather_rows(&perm).unwrap();
    let zn = node(z);
    let zpn = node(zp);
    let a = graph_conv(&mut g, &model.store, layer, &zn, &[vec![0, 1, 2, 3]]).unwrap();
    let b = graph_conv(&mut g, &model.store, layer, &zpn, &[vec![0, 1, 2, 3]]).unwrap();
    assert_eq!(a.gather_rows(&perm).unwrap(), *b);
}

#[test]
fn heads_have_contract_widths_and_match_matmul() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 4).unwrap();
    let lay = layout(sc.dims.users, sc.dims.targets);
    let mut rng = RngStream::new(4, 4, 4).rng(Purpose::Batch);
    let z = Tensor::from_fn(lay.total_rows(), 256, |_, _| rng.gen_range(0.0..1.0));
    let mut g = Eager;
    let zn = node(z.clone());
    let net = &model.nets[0];
    let (d, a) = output_heads(&mut g, &model.store, net, &zn, &lay).unwrap();
    assert_eq!(d.shape(), &[lay.streams(), 2 * sc.dims.n_rf]);
    assert_eq!(a.shape(), &[1, sc.dims.n_t * sc.dims.n_rf]);
    let p = |id| &model.store.get(id).value;
    let row = dense_oracle(z.gather_rows(&[1]).unwrap().data(), p(net.digital.w), p(net.digital.b), false);
    assert!(close(d.gather_rows(&[1]).unwrap().data(), &row, 1e-12));
    let mean = dense_oracle(z.gather_rows(&[lay.mean_row(0)]).unwrap().data(), p(net.analog.w), p(net.analog.b), false);
    assert!(close(a.data(), &mean, 1e-12));

    let mut zero = model.clone();
    for p in zero.store.iter_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
    let z0 = node(Tensor::zeros(&[lay.total_rows(), 256]));
    let (d, a) = output_heads(&mut g, &zero.store, &zero.nets[0], &z0, &lay).unwrap();
    assert!(d.data().iter().chain(a.data()).all(|&v| v == 0.0));
}

#[test]
fn analog_normalization() {
    let mut g = Eager;
    let zeros = node(Tensor::zeros(&[1, 6]));
    let (re, im) = normalize_analog(&mut g, &zeros, 3, 2).unwrap();
    assert!(re.data().iter().all(|&v| v == 1.0) && im.data().iter().all(|&v| v == 0.0));
    let pi = node(Tensor::filled(&[1, 6], std::f64::consts::PI));
    let (re, im) = normalize_analog(&mut g, &pi, 3, 2).unwrap();
    assert!(re.data().iter().all(|&v| v == -1.0) && im.data().iter().all(|&v| v.abs() < 1e-15));
    let mut rng = RngStream::new(5, 5, 5).rng(Purpose::Batch);
    let raw = node(Tensor::from_fn(1, 32, |_, _| rng.gen_range(-20.0..20.0)));
    let (re, im) = normalize_analog(&mut g, &raw, 8, 4).unwrap();
    let f: CMatrix<f64> = CMatrix::from_parts(&re, &im).unwrap();
    assert_eq!(f.dims(), (8, 4));
    assert!(f.data().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
}

fn random_analog(g: &mut Eager, rng: &mut impl Rng, n_t: usize, n_rf: usize) -> (Cow<'static, Tensor<f64>>, Cow<'static, Tensor<f64>>) {
    let raw: Cow<Tensor<f64>> = Cow::Owned(Tensor::from_fn(1, n_t * n_rf, |_, _| rng.gen_range(-3.0..3.0)));
    let (re, im) = normalize_analog(g, &raw, n_t, n_rf).unwrap();
    (Cow::Owned(re.into_owned()), Cow::Owned(im.into_owned()))
}

#[test]
fn digital_normalization_hits_power_and_keeps_directions() {
    let mut rng = RngStream::new(6, 6, 6).rng(Purpose::Batch);
    let mut g = Eager;
    let (n_t, n_rf, s) = (8, 6, 4);
    for power in [1e-3, 1.0, 10.0] {
        let (fr, fi) = random_analog(&mut g, &mut rng, n_t, n_rf);
        let raw = Tensor::from_fn(s, 2 * n_rf, |_, _| rng.gen_range(-1.0..1.0));
        let rawn = node(raw.clone());
        let out = normalize_digital(&mut g, &rawn, fr.clone(), fi.clone(), n_rf, power).unwrap();
        assert!(!out.degenerate);
        let f = CMatrix::from_parts(&fr, &fi).unwrap();
        let w = CMatrix::from_parts(&out.w_re, &out.w_im).unwrap();
        let p = bs_power(&f, &w).unwrap();
        assert!((p - power).abs() / power < 1e-9);
        // Direct recomputation: w = sqrt(P / power(raw)) * raw.
        let w_raw = CMatrix::from_fn(n_rf, s, |r, c| Complex::new(raw.get(c, r), raw.get(c, n_rf + r)));
        let c = (power / bs_power(&f, &w_raw).unwrap()).sqrt();
        let expect = w_raw.scale_real(c);
        assert!(w.sub(&expect).unwrap().max_abs() <= 1e-14 * expect.max_abs());
        let x = CMatrix::from_parts(&out.x_re, &out.x_im).unwrap();
        assert!(x.sub(&f.matmul(&w).unwrap()).unwrap().max_abs() <= 1e-13 * x.max_abs());

        // Feeding the normalized beams back in leaves them unchanged.
        let again: Vec<f64> = (0..s)
            .flat_map(|k| {
                let col = w.col(k);
                let re: Vec<f64> = col.data().iter().map(|z| z.re).collect();
                let im: Vec<f64> = col.data().iter().map(|z| z.im).collect();
                re.into_iter().chain(im)
            })
            .collect();
        let an = node(Tensor::matrix(s, 2 * n_rf, again).unwrap());
        let out2 = normalize_digital(&mut g, &an, fr, fi, n_rf, power).unwrap();
        let w2 = CMatrix::from_parts(&out2.w_re, &out2.w_im).unwrap();
        assert!(w2.sub(&w).unwrap().max_abs() <= 1e-14 * w.max_abs());
    }
}

#[test]
fn zero_raw_beams_are_flagged() {
    let mut rng = RngStream::new(7, 7, 7).rng(Purpose::Batch);
    let mut g = Eager;
    let (fr, fi) = random_analog(&mut g, &mut rng, 4, 2);
    let zero = node(Tensor::zeros(&[2, 4]));
    let out = normalize_digital(&mut g, &zero, fr, fi, 2, 1.0).unwrap();
    assert!(out.degenerate);
    assert!(out.w_re.data().iter().chain(out.w_im.data()).all(|&v| v == 0.0));
}

#[test]
fn forward_outputs_satisfy_constraints() {
    let sc = ScenarioConfig::default();
    for seed in 0..5 {
        let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), seed).unwrap();
        let chans: Vec<Channels<f64>> = (0..8).map(|k| draw(&sc, seed, k)).collect();
        let refs: Vec<&Channels<f64>> = chans.iter().collect();
        for power in [0.1, 1.0, 10.0] {
            let inf = model.infer_batch(&refs, power).unwrap();
            for bf in &inf.beams {
                assert!(c2_violation(bf) < 1e-12);
                assert!(c1_violation(bf, power).unwrap() < 1e-9);
            }
        }
    }
}

#[test]
fn bs_output_depends_only_on_own_channels() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 3).unwrap();
    let ch = draw(&sc, 8, 0);
    let mut other = draw(&sc, 8, 1);
    other.com[0] = ch.com[0].clone();
    other.sen[0] = ch.sen[0].clone();
    let a = model.infer_batch(&[&ch], 1.0).unwrap();
    let b = model.infer_batch(&[&other], 1.0).unwrap();
    assert_eq!(a.beams[0].analog[0], b.beams[0].analog[0]);
    assert_eq!(a.beams[0].digital[0], b.beams[0].digital[0]);
    assert_ne!(a.beams[0].digital[1], b.beams[0].digital[1]);
}

#[test]
fn batch_rows_do_not_interact() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 3).unwrap();
    let chans: Vec<Channels<f64>> = (0..4).map(|k| draw(&sc, 10, k)).collect();
    let refs: Vec<&Channels<f64>> = chans.iter().collect();
    let batch = model.infer_batch(&refs, 1.0).unwrap();
    for (k, ch) in chans.iter().enumerate() {
        let single = model.infer_batch(&[ch], 1.0).unwrap();
        assert_eq!(single.beams[0], batch.beams[k]);
    }
}

#[test]
fn network_scales_with_user_count() {
    let mut sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 1).unwrap();
    for users in [2, 3] {
        sc.dims.users = users;
        let ch = draw(&sc, 11, 0);
        let (bf, report) = model.infer(&ch, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr).unwrap();
        assert_eq!(bf.digital[0].dims(), (sc.dims.n_rf, users + sc.dims.targets));
        assert_eq!(report.gamma_user.len(), users);
        assert!(c1_violation(&bf, 1.0).unwrap() < 1e-9);
    }
}

#[test]
fn swapping_users_swaps_beams_bitwise() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 12).unwrap();
    let (w, n) = (ObjectiveWeights::default(), Noise::default());
    for k in 0..5 {
        let ch = draw(&sc, 12, k);
        let sw = ch.permute_users(&[1, 0]);
        let (a, ra) = model.infer(&ch, &w, &n, ReceiveMode::Mvdr).unwrap();
        let (b, rb) = model.infer(&sw, &w, &n, ReceiveMode::Mvdr).unwrap();
        for m in 0..sc.dims.bs {
            assert_eq!(a.analog[m], b.analog[m]);
            assert_eq!(a.w(m, 0), b.w(m, 1));
            assert_eq!(a.w(m, 1), b.w(m, 0));
            for s in 2..a.streams() {
                assert_eq!(a.w(m, s), b.w(m, s));
            }
        }
        assert!((ra.wscsc - rb.wscsc).abs() < 1e-9);
    }
}

#[test]
fn loss_is_negative_mean_objective() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 2).unwrap();
    let (w, n, mode) = (ObjectiveWeights::default(), Noise::default(), ReceiveMode::Mvdr);
    let ch = draw(&sc, 13, 0);
    let (_, report) = model.infer(&ch, &w, &n, mode).unwrap();
    let one = [LossSample { estimate: &ch, errors: &[] }];
    let mut tape = Tape::new();
    let (loss, values) = loss_on_tape(&model, &mut tape, &one, &w, &n, mode, 0).unwrap();
    let single = tape.value(loss).item().unwrap();
    assert!((single + report.wscsc).abs() < 1e-12 * report.wscsc);
    assert!((values[0] - report.wscsc).abs() < 1e-12 * report.wscsc);

    let two = [one[0], one[0]];
    let mut tape = Tape::new();
    let (loss, _) = loss_on_tape(&model, &mut tape, &two, &w, &n, mode, 0).unwrap();
    assert!((tape.value(loss).item().unwrap() - single).abs() < 1e-14 * single.abs());
}

#[test]
fn non_finite_objective_names_sample() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 2).unwrap();
    let good = draw(&sc, 14, 0);
    let mut bad = draw(&sc, 14, 1);
    bad.com[0][0].set(0, 0, Complex::new(f64::NAN, 0.0));
    let batch = [LossSample { estimate: &good, errors: &[] }, LossSample { estimate: &bad, errors: &[] }];
    let mut tape = Tape::new();
    let err = loss_on_tape(&model, &mut tape, &batch, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr, 3);
    assert!(matches!(err, Err(GnnError::NonFinite { step: 3, sample: 1 })), "{err:?}");
}

fn loss_value(model: &GnnModel<f64>, batch: &[LossSample<'_>]) -> f64 {
    let mut tape = Tape::new();
    let (w, n) = (ObjectiveWeights::default(), Noise::default());
    let (loss, _) = loss_on_tape(model, &mut tape, batch, &w, &n, ReceiveMode::Mvdr, 0).unwrap();
    tape.value(loss).item().unwrap()
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let sc = tiny_scenario();
    let mut model = GnnModel::<f64>::new(tiny_config(&sc), 21).unwrap();
    let chans: Vec<Channels<f64>> = (0..2).map(|k| draw(&sc, 21, k)).collect();
    let batch: Vec<LossSample> = chans.iter().map(|c| LossSample { estimate: c, errors: &[] }).collect();

    let mut tape = Tape::new();
    let (w, n) = (ObjectiveWeights::default(), Noise::default());
    let (loss, _) = loss_on_tape(&model, &mut tape, &batch, &w, &n, ReceiveMode::Mvdr, 0).unwrap();
    tape.backward(loss).unwrap().accumulate_into(&mut model.store);
    let analytic: Vec<f64> = model.store.iter().flat_map(|p| value(&p.grad)).collect();

    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..model.store.len() {
        let id = model.store.iter().nth(k).unwrap().id;
        for e in 0..model.store.get(id).value.len() {
            let orig = model.store.get(id).value.data()[e];
            model.store.get_mut(id).value.data_mut()[e] = orig + h;
            let up = loss_value(&model, &batch);
            model.store.get_mut(id).value.data_mut()[e] = orig - h;
            let down = loss_value(&model, &batch);
            model.store.get_mut(id).value.data_mut()[e] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(norm > 0.0);
    assert!(diff / norm < 1e-4, "relative gradient error {}", diff / norm);
}

fn tiny_train(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        samples_per_epoch: 6,
        batch_size: 4,
        lr,
        seed: 5,
        validation_samples: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let sc = tiny_scenario();
    let mut model = GnnModel::<f64>::new(tiny_config(&sc), 1).unwrap();
    let before = model.clone();
    train(&mut model, &tiny_train(3, 0.0), &sc, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr, |_| {}).unwrap();
    for (a, b) in before.store.iter().zip(model.store.iter()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn training_is_deterministic_and_records_every_step() {
    let sc = tiny_scenario();
    let run = || {
        let mut model = GnnModel::<f64>::new(tiny_config(&sc), 1).unwrap();
        let mut seen = Vec::new();
        let trace = train(&mut model, &tiny_train(4, 1e-2), &sc, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr, |e| {
            seen.push(e.epoch)
        })
        .unwrap();
        (trace, seen, model)
    };
    let (a, seen, ma) = run();
    let (b, _, mb) = run();
    assert_eq!(a, b);
    assert_eq!(seen, vec![1, 2, 3, 4]);
    assert_eq!(a.steps.len(), 4 * 2);
    for (p, q) in ma.store.iter().zip(mb.store.iter()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn infer_matches_forward_and_metrics_and_is_pure() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 6).unwrap();
    let (w, n, mode) = (ObjectiveWeights::default(), Noise::default(), ReceiveMode::Mvdr);
    let ch = draw(&sc, 15, 0);
    let (bf, report) = model.infer(&ch, &w, &n, mode).unwrap();
    let direct = model.infer_batch(&[&ch], n.power).unwrap().beams.remove(0);
    assert_eq!(bf, direct);
    assert_eq!(report, evaluate(&ch, None, &direct, &w, &n, mode).unwrap());
    let (bf2, report2) = model.infer(&ch, &w, &n, mode).unwrap();
    assert_eq!((bf, report), (bf2, report2));
}

#[test]
fn inference_fits_latency_budget() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 6).unwrap();
    let ch = draw(&sc, 16, 0);
    let (w, n) = (ObjectiveWeights::default(), Noise::default());
    let best = (0..5)
        .map(|_| {
            let t = Instant::now();
            model.infer(&ch, &w, &n, ReceiveMode::Mvdr).unwrap();
            t.elapsed()
        })
        .min()
        .unwrap();
    assert!(best.as_secs_f64() < 0.05, "inference took {best:?}");
}

#[test]
fn checkpoint_file_round_trip() {
    let sc = ScenarioConfig::default();
    let model = GnnModel::<f32>::new(GnnConfig::from_scenario(&sc), 8).unwrap();
    let dir = std::env::temp_dir().join(format!("isac-ck-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    let back = GnnModel::<f32>::load(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    for (a, b) in model.store.iter().zip(back.store.iter()) {
        assert_eq!(a.value, b.value);
    }
    let ch = draw(&sc, 17, 0);
    assert_eq!(model.infer_batch(&[&ch], 1.0).unwrap().beams, back.infer_batch(&[&ch], 1.0).unwrap().beams);
}

#[test]
fn shared_mode_uses_one_parameter_set() {
    let sc = ScenarioConfig::default();
    let shared = GnnModel::<f64>::new(
        GnnConfig {
            shared: true,
            ..GnnConfig::from_scenario(&sc)
        },
        0,
    )
    .unwrap();
    let own = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 0).unwrap();
    assert_eq!(own.store.len(), sc.dims.bs * shared.store.len());
    assert_eq!(shared.nets[0], shared.nets[1]);
}
