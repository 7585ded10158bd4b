//! Acceptance criteria 1-11. Run with `cargo test -p isac-harness --test acceptance --release`;
//! prints one PASS/FAIL line per criterion and exits nonzero if any hard
//! check fails. Soft checks print a warning but still pass.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use isac_core::baselines::{baseline_beamformers, BaselineKind};
use isac_core::channel::{
    generate_scenario, perturb_estimate, Channels, CsiErrorSpec, Dims, ErrorScale, Purpose, RngStream, ScenarioConfig,
};
use isac_core::fpga::{calibrate_and_quantize, latency_estimate, network_layers, AcceleratorConfig};
use isac_core::gnn::{loss_on_tape, GnnConfig, GnnModel, LossSample, TrainTrace};
use isac_core::linalg::CMatrix;
use isac_core::metrics::{
    bs_power, c1_violation, c2_violation, evaluate, radar_sinr, radar_sinr_imperfect, receive_beamformer, user_sinr,
    user_sinr_imperfect, BeamformerSet, Noise, ObjectiveWeights, ReceiveMode,
};
use isac_core::tensor::{Tape, Tensor};
use isac_core::GnnModel64;
use isac_harness::config::{ExperimentConfig, Scheme, SweepVar};
use isac_harness::latency::{accuracy, REFERENCE_CYCLES};
use isac_harness::run::{eval_channels, run_sweep, score, train_gnn, Point};
use num_complex::Complex;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
    warning: Option<String>,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, warning: None }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn scenario(seed: u64, stream: u64, sc: &ScenarioConfig) -> Channels<f64> {
    let mut rng = RngStream::new(seed, 0xacce, stream).rng(Purpose::Scenario);
    generate_scenario(sc, &mut rng).unwrap().1.channels
}

fn random_bf(dims: &Dims, power: f64, r: &mut impl Rng) -> BeamformerSet<f64> {
    let mut analog = Vec::new();
    let mut digital = Vec::new();
    for _ in 0..dims.bs {
        let f = CMatrix::from_fn(dims.n_t, dims.n_rf, |_, _| Complex::from_polar(1.0, r.gen_range(-3.2..3.2)));
        let w = CMatrix::from_fn(dims.n_rf, dims.streams(), |_, _| Complex::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        let p = bs_power(&f, &w).unwrap();
        analog.push(f);
        digital.push(w.scale_real((power / p).sqrt()));
    }
    BeamformerSet { analog, digital }
}

fn c1_sinr_oracle() -> Outcome {
    let dims = Dims::default();
    let sc = ScenarioConfig::default();
    let noise = Noise::default();
    let spec = CsiErrorSpec::gaussian(0.05, 0.05, ErrorScale::Relative);
    let mut worst: f64 = 0.0;
    let instances = 128;
    for seed in 0..instances {
        let ch = scenario(seed, 1, &sc);
        let bf = random_bf(&dims, 1.0, &mut RngStream::new(seed, 0xacce, 1).rng(Purpose::Init));
        let real = perturb_estimate(&ch, &spec, &mut RngStream::new(seed, 0xacce, 1).rng(Purpose::CsiError)).unwrap();
        for i in 0..dims.users {
            let got = user_sinr(&ch, &bf, noise.user, i).unwrap();
            worst = worst.max(rel(got, oracle::user_sinr(&ch, None, &bf.analog, &bf.digital, noise.user, i)));
            let got = user_sinr_imperfect(&real.estimated, &real.error, &bf, noise.user, i).unwrap();
            let want = oracle::user_sinr(&real.estimated, Some(&real.error), &bf.analog, &bf.digital, noise.user, i);
            worst = worst.max(rel(got, want));
        }
        for j in 0..dims.targets {
            let u = oracle::mvdr(&ch, &bf.analog, &bf.digital, noise.radar, j);
            let lib_u = receive_beamformer(&ch, &bf, noise.radar, j, ReceiveMode::Mvdr).unwrap();
            let got = radar_sinr(&ch, &bf, &lib_u, noise.radar, j).unwrap();
            worst = worst.max(rel(got, oracle::radar_sinr(&ch, None, &bf.analog, &bf.digital, &u, noise.radar, j)));

            let ue = receive_beamformer(&real.estimated, &bf, noise.radar, j, ReceiveMode::Mvdr).unwrap();
            let ue_t: Vec<(f64, f64)> = (0..ue.cols()).map(|k| (ue.get(0, k).re, ue.get(0, k).im)).collect();
            let got = radar_sinr_imperfect(&real.estimated, &real.error, &bf, &ue, noise.radar, j).unwrap();
            let want = oracle::radar_sinr(&real.estimated, Some(&real.error), &bf.analog, &bf.digital, &ue_t, noise.radar, j);
            worst = worst.max(rel(got, want));
        }
    }
    outcome(worst < 1e-10, format!("{instances} instances, max rel error {worst:.2e} (< 1e-10)"))
}

fn mini_scenario() -> ScenarioConfig {
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

fn loss_value(model: &GnnModel<f64>, batch: &[LossSample<'_>]) -> f64 {
    let mut tape = Tape::new();
    let (loss, _) =
        loss_on_tape(model, &mut tape, batch, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr, 0).unwrap();
    tape.value(loss).item().unwrap()
}

/// Normwise relative error of the tape gradient against central differences,
/// at a point with random biases, or `None` when some sample hits the all-zero-beam fallback, where the loss
/// is discontinuous and finite differences are meaningless.
fn fd_error(seed: u64) -> Option<(usize, f64)> {
    let sc = mini_scenario();
    let cfg = GnnConfig {
        hidden: 8,
        embed: 4,
        ..GnnConfig::from_scenario(&sc)
    };
    let mut model = GnnModel::<f64>::new(cfg, seed).unwrap();
    // zero-initialized biases put ReLU inputs exactly on the kink
    let mut rng = RngStream::new(seed, 0xacce, 2).rng(Purpose::Init);
    let biases: Vec<_> = model.store.iter().filter(|p| p.name.ends_with(".b")).map(|p| p.id).collect();
    for id in biases {
        for v in model.store.get_mut(id).value.data_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    let chans: Vec<Channels<f64>> = (0..3).map(|k| scenario(seed, k, &sc)).collect();
    let refs: Vec<&Channels<f64>> = chans.iter().collect();
    if model.infer_batch(&refs, 1.0).unwrap().degenerate.iter().flatten().any(|&d| d) {
        return None;
    }
    let batch: Vec<LossSample> = chans.iter().map(|c| LossSample { estimate: c, errors: &[] }).collect();

    let mut tape = Tape::new();
    let (loss, _) =
        loss_on_tape(&model, &mut tape, &batch, &ObjectiveWeights::default(), &Noise::default(), ReceiveMode::Mvdr, 0).unwrap();
    tape.backward(loss).unwrap().accumulate_into(&mut model.store);
    let analytic: Vec<f64> = model.store.iter().flat_map(|p| p.grad.data().to_vec()).collect();

    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    let ids: Vec<_> = model.store.iter().map(|p| p.id).collect();
    for id in ids {
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
    let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    Some((analytic.len(), if norm > 0.0 { diff / norm } else { f64::INFINITY }))
}

fn c2_gradient() -> Outcome {
    let mut checked = Vec::new();
    let mut skipped = Vec::new();
    let mut params = 0;
    for seed in 0..5 {
        match fd_error(seed) {
            Some((n, e)) => {
                params = n;
                checked.push(e);
            }
            None => skipped.push(seed),
        }
    }
    let worst = checked.iter().copied().fold(0.0, f64::max);
    outcome(
        !checked.is_empty() && worst < 1e-4,
        format!(
            "{} init seeds x {params} parameters (biases offset by U(-0.1, 0.1)), max normwise rel error {worst:.2e} (< 1e-4); seeds skipped at the zero-beam discontinuity: {skipped:?}",
            checked.len()
        ),
    )
}

fn c3_constraints() -> Outcome {
    let sc = ScenarioConfig::default();
    let noise = Noise::default();
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    let mut forwards = 0;
    for seed in 0..10u64 {
        let model = GnnModel::<f64>::new(GnnConfig::from_scenario(&sc), 100 + seed).unwrap();
        let chans: Vec<Channels<f64>> = (0..100).map(|k| scenario(seed, 300 + k, &sc)).collect();
        let power = [0.1, 1.0, 10.0][seed as usize % 3];
        for chunk in chans.chunks(25) {
            let refs: Vec<&Channels<f64>> = chunk.iter().collect();
            for bf in model.infer_batch(&refs, power).unwrap().beams {
                c1 = c1.max(c1_violation(&bf, power).unwrap());
                c2 = c2.max(c2_violation(&bf));
                forwards += 1;
            }
        }
        let n = Noise { power, ..noise };
        for ch in &chans {
            for kind in [BaselineKind::Mmse, BaselineKind::Zf, BaselineKind::Mrt] {
                let (bf, _) = baseline_beamformers(kind, ch, sc.dims.n_rf, &n).unwrap();
                c1 = c1.max(c1_violation(&bf, power).unwrap());
                c2 = c2.max(c2_violation(&bf));
            }
        }
    }
    outcome(
        c1 < 1e-9 && c2 < 1e-12,
        format!("{forwards} GNN forwards + 3x{forwards} baseline constructions, max C1 rel {c1:.2e} (< 1e-9), max C2 {c2:.2e} (< 1e-12)"),
    )
}

const SEEDS: u64 = 5;

fn defaults() -> ExperimentConfig {
    ExperimentConfig::default()
}

/// Default-config models for seeds 0..5 with their traces; trained once.
fn default_models() -> &'static Vec<(GnnModel64, TrainTrace)> {
    static MODELS: OnceLock<Vec<(GnnModel64, TrainTrace)>> = OnceLock::new();
    MODELS.get_or_init(|| {
        (0..SEEDS)
            .map(|seed| {
                let cfg = ExperimentConfig { seed, ..defaults() };
                let started = Instant::now();
                let out = train_gnn(&cfg, &Point::base(&cfg), |_| {}).unwrap();
                eprintln!("  trained default model seed {seed} in {:.0} s", started.elapsed().as_secs_f64());
                out
            })
            .collect()
    })
}

fn c4_convergence() -> Outcome {
    let ratios: Vec<f64> = default_models()
        .iter()
        .map(|(_, trace)| {
            let at = |e: usize| trace.epochs.iter().find(|r| r.epoch == e).unwrap().val_wscsc;
            at(25) / at(200)
        })
        .collect();
    let m = median(ratios.clone());
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(m >= 0.95, format!("WSCSC(25)/WSCSC(200) per seed [{}], median {m:.3} (>= 0.95)", shown.join(", ")))
}

fn c5_ordering() -> Outcome {
    let cfg = defaults();
    let point = Point::base(&cfg);
    let model = &default_models()[0].0;
    let chans = eval_channels(cfg.seed, &point.scenario, 20).unwrap();
    let mut totals = [0.0; 4];
    for (d, ch) in chans.iter().enumerate() {
        let bf = model.infer_batch(&[ch], point.noise.power).unwrap().beams.remove(0);
        totals[0] += score(&cfg, &point, ch, &bf, d, 1).unwrap().wscsc;
        for (k, kind) in [BaselineKind::Mmse, BaselineKind::Zf, BaselineKind::Mrt].into_iter().enumerate() {
            let (bf, _) = baseline_beamformers(kind, ch, point.scenario.dims.n_rf, &point.noise).unwrap();
            totals[k + 1] += score(&cfg, &point, ch, &bf, d, 1).unwrap().wscsc;
        }
    }
    let m: Vec<f64> = totals.iter().map(|t| t / chans.len() as f64).collect();
    let best = m[1].max(m[2]).max(m[3]);
    let ratio = m[0] / best;
    let mut o = outcome(
        m[0] >= m[1] && m[0] >= m[2] && m[0] >= m[3],
        format!("mean WSCSC over 20 draws: GNN {:.4}, MMSE {:.4}, ZF {:.4}, MRT {:.4}; GNN / best {ratio:.3}", m[0], m[1], m[2], m[3]),
    );
    if ratio < 1.05 {
        o.warning = Some(format!("margin {ratio:.3} below the 1.05 target"));
    }
    o
}

/// Training budget for the criteria that retrain at every grid point.
fn reduced(seed: u64, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, ..defaults() };
    cfg.train.epochs = epochs;
    cfg.train.samples_per_epoch = 256;
    cfg.sweep.schemes = vec![Scheme::Gnn];
    cfg.sweep.draws = 20;
    cfg
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

fn c6_power_monotonicity() -> Outcome {
    let grid = [-10.0, -5.0, 0.0, 5.0, 10.0];
    let mut rhos = Vec::new();
    for seed in 0..SEEDS {
        let mut cfg = reduced(seed, 20);
        cfg.sweep.power_dbm = grid.to_vec();
        let out = run_sweep(&cfg, SweepVar::Power);
        if !out.failures.is_empty() {
            return outcome(false, format!("sweep failures: {:?}", out.failures));
        }
        let means: Vec<f64> = grid
            .iter()
            .map(|&p| mean(&out.rows.iter().filter(|r| r.value == p).map(|r| r.wscsc).collect::<Vec<_>>()))
            .collect();
        rhos.push(spearman(&grid, &means));
    }
    let m = mean(&rhos);
    let shown: Vec<String> = rhos.iter().map(|r| format!("{r:.2}")).collect();
    outcome(m >= 0.9, format!("Spearman per seed [{}], mean {m:.3} (>= 0.9); 20 epochs x 256 samples per point", shown.join(", ")))
}

fn c7_bs_scaling() -> Outcome {
    let mut by_m: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for seed in 0..3 {
        let mut cfg = reduced(seed, 40);
        cfg.sweep.n_bs = vec![1, 2, 3];
        let out = run_sweep(&cfg, SweepVar::NBs);
        if !out.failures.is_empty() {
            return outcome(false, format!("sweep failures: {:?}", out.failures));
        }
        for r in &out.rows {
            by_m[r.value as usize - 1].push(r.wscsc);
        }
    }
    let means: Vec<f64> = by_m.iter().map(|v| mean(v)).collect();
    let ses: Vec<f64> = by_m.iter().map(|v| std_err(v)).collect();
    let ok = (0..2).all(|k| means[k + 1] >= means[k] - (ses[k] * ses[k] + ses[k + 1] * ses[k + 1]).sqrt());
    outcome(
        ok,
        format!(
            "mean WSCSC M=1 {:.4} (se {:.4}), M=2 {:.4} (se {:.4}), M=3 {:.4} (se {:.4}); 3 seeds x 20 draws, 40 epochs x 256 samples",
            means[0], ses[0], means[1], ses[1], means[2], ses[2]
        ),
    )
}

fn c8_permutation() -> Outcome {
    let cfg = defaults();
    let point = Point::base(&cfg);
    let model = &default_models()[0].0;
    let mut worst: f64 = 0.0;
    let mut bitwise = true;
    for ch in eval_channels(7, &point.scenario, 20).unwrap() {
        let sw = ch.permute_users(&[1, 0]);
        let (a, ra) = model.infer(&ch, &point.weights, &point.noise, cfg.receive).unwrap();
        let (b, rb) = model.infer(&sw, &point.weights, &point.noise, cfg.receive).unwrap();
        for m in 0..point.scenario.dims.bs {
            bitwise &= a.analog[m] == b.analog[m] && a.w(m, 0) == b.w(m, 1) && a.w(m, 1) == b.w(m, 0);
            bitwise &= (2..a.streams()).all(|s| a.w(m, s) == b.w(m, s));
        }
        worst = worst.max((ra.wscsc - rb.wscsc).abs());
    }
    outcome(bitwise && worst < 1e-9, format!("20 draws, beams swapped bitwise: {bitwise}, max |dWSCSC| {worst:.2e} (< 1e-9)"))
}

fn c9_csi() -> Outcome {
    let cfg = defaults();
    let perfect = Point::base(&cfg);
    let model = &default_models()[0].0;
    let chans = eval_channels(cfg.seed, &perfect.scenario, 20).unwrap();
    let zero = CsiErrorSpec::gaussian(0.0, 0.0, ErrorScale::Relative);
    let mut exact = true;
    let mut perfect_scores = Vec::new();
    for (d, ch) in chans.iter().enumerate() {
        let bf = model.infer_batch(&[ch], perfect.noise.power).unwrap().beams.remove(0);
        let base = evaluate(ch, None, &bf, &perfect.weights, &perfect.noise, cfg.receive).unwrap();
        let real = perturb_estimate(ch, &zero, &mut RngStream::new(0, 0xacce, d as u64).rng(Purpose::CsiError)).unwrap();
        let under = evaluate(&real.estimated, Some(&real.error), &bf, &perfect.weights, &perfect.noise, cfg.receive).unwrap();
        let harness_zero = Point { csi: zero, ..perfect.clone() };
        exact &= under == base && score(&cfg, &harness_zero, ch, &bf, d, 4).unwrap().wscsc == base.wscsc;
        perfect_scores.push(base.wscsc);
    }

    let noisy = Point {
        csi: CsiErrorSpec::gaussian(0.01, 0.01, ErrorScale::Relative),
        ..perfect.clone()
    };
    let started = Instant::now();
    let (robust, _) = train_gnn(&cfg, &noisy, |_| {}).unwrap();
    eprintln!("  trained robust model in {:.0} s", started.elapsed().as_secs_f64());
    let robust_scores: Vec<f64> = chans
        .iter()
        .enumerate()
        .map(|(d, ch)| {
            let bf = robust.infer_batch(&[ch], noisy.noise.power).unwrap().beams.remove(0);
            score(&cfg, &noisy, ch, &bf, d, cfg.sweep.csi_eval_draws).unwrap().wscsc
        })
        .collect();
    let kept = mean(&robust_scores) / mean(&perfect_scores);
    let mut o = outcome(
        exact,
        format!(
            "sigma2=0 bitwise equal to perfect CSI: {exact}; robust model at sigma2=0.01 keeps {:.1}% of perfect-CSI WSCSC ({:.4} vs {:.4})",
            100.0 * kept,
            mean(&robust_scores),
            mean(&perfect_scores)
        ),
    );
    if kept < 0.8 {
        o.warning = Some(format!("robustness {:.1}% below the 80% target", 100.0 * kept));
    }
    o
}

fn c10_fpga() -> Outcome {
    let mut bound_ok = true;
    let mut rng = RngStream::new(0, 0xacce, 10).rng(Purpose::Init);
    for bits in 4..=16 {
        for _ in 0..20 {
            let scale: f64 = 10f64.powf(rng.gen_range(-6.0..3.0));
            let data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let t = Tensor::matrix(8, 8, data.clone()).unwrap();
            let q = calibrate_and_quantize(&t, bits).unwrap();
            let back: Tensor<f64> = q.dequantize();
            let half = q.format.scale / 2.0;
            bound_ok &= q.clamped == 0 && data.iter().zip(back.data()).all(|(a, b)| (a - b).abs() <= half * (1.0 + 1e-12));
        }
    }

    let cfg = defaults();
    let model = &default_models()[0].0;
    let errs: Vec<f64> = [4, 8, 16].iter().map(|&b| accuracy(&cfg, model, b, 50).unwrap().0).collect();
    let monotone = errs[0] >= errs[1] && errs[1] >= errs[2];

    let layers = network_layers(&model.config, cfg.scenario.dims.users, cfg.scenario.dims.targets);
    let cycles = |bits: u32, bus: u32| {
        let acc = AcceleratorConfig {
            bus_bits: bus,
            ..AcceleratorConfig::default()
        };
        latency_estimate(&layers, &acc, bits).unwrap()
    };
    let mut bus_ok = true;
    let mut table = Vec::new();
    for bits in [8, 16] {
        let (a, b) = (cycles(bits, 64).total_cycles, cycles(bits, 128).total_cycles);
        bus_ok &= b < a;
        table.push(format!("{bits}-bit {a} -> {b}"));
    }
    let d = cycles(16, AcceleratorConfig::default().bus_bits);
    eprintln!(
        "  default config: {} cycles = {:.3} ms; reference band {}..{} cycles (calibration only)",
        d.total_cycles, d.total_ms, REFERENCE_CYCLES.0, REFERENCE_CYCLES.1
    );
    outcome(
        bound_ok && errs[2] < 0.01 && monotone && bus_ok,
        format!(
            "quantization bound holds: {bound_ok}; median rel WSCSC error 4/8/16-bit {:.2e}/{:.2e}/{:.2e} (16-bit < 1e-2, monotone: {monotone}); \
             cycles 64->128-bit bus: {}; default {} cycles vs reference {}..{}",
            errs[0],
            errs[1],
            errs[2],
            table.join(", "),
            d.total_cycles,
            REFERENCE_CYCLES.0,
            REFERENCE_CYCLES.1
        ),
    )
}

fn c11_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = reduced(0, 5);
    cfg.sweep.schemes = Scheme::ALL.to_vec();
    cfg.train.samples_per_epoch = 64;
    let cfg_path = root.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let dir = root.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_isac-lab"))
            .current_dir(&dir)
            .args(["--config", cfg_path.to_str().unwrap(), "--out", "out", "sweep", "--var", "power"])
            .output()
            .unwrap();
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let read = |p: &Path| std::fs::read(p).unwrap();
        let mut bytes = read(&dir.join("out/sweep_power.csv"));
        bytes.extend(read(&dir.join("out/sweep_power.json")));
        Ok(bytes)
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => outcome(a == b, format!("two CLI power sweeps ({} bytes of CSV + sidecar), identical: {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("sweep failed: {e}")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("SINR oracle equivalence", c1_sinr_oracle),
        ("gradient vs finite differences", c2_gradient),
        ("constraint satisfaction", c3_constraints),
        ("convergence shape", c4_convergence),
        ("benchmark ordering", c5_ordering),
        ("power monotonicity", c6_power_monotonicity),
        ("BS scaling", c7_bs_scaling),
        ("permutation equivariance", c8_permutation),
        ("imperfect CSI", c9_csi),
        ("fixed-point emulator and latency", c10_fpga),
        ("determinism", c11_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let n = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status}  {name}: {} [{secs:.1} s]", o.detail);
        if let Some(w) = o.warning {
            println!("             warning: {w}");
        }
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
