//! Training, convergence traces and parameter sweeps.

use std::time::Instant;

use isac_core::baselines::{baseline_beamformers, BaselineKind};
use isac_core::channel::{generate_scenario, perturb_estimate, Channels, CsiErrorSpec, Purpose, RngStream, ScenarioConfig};
use isac_core::gnn::{train, GnnModel, TrainTrace};
use isac_core::metrics::{evaluate, BeamformerSet, Noise, ObjectiveWeights};
use isac_core::{GnnModel64, TrainReal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{dbm_to_mw, ExperimentConfig, Scheme, SweepVar};
use crate::Result;

/// RNG experiment tags for evaluation channels and their CSI errors.
pub const EXPERIMENT_SWEEP: u64 = 0x7377_6565;
pub const EXPERIMENT_EVAL_ERROR: u64 = 0x6576_616c;

/// Everything that defines one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub scenario: ScenarioConfig,
    pub weights: ObjectiveWeights,
    pub noise: Noise,
    pub csi: CsiErrorSpec,
}

impl Point {
    pub fn base(cfg: &ExperimentConfig) -> Self {
        Self {
            scenario: cfg.scenario.clone(),
            weights: cfg.weights,
            noise: cfg.noise(),
            csi: cfg.csi,
        }
    }

    pub fn at(cfg: &ExperimentConfig, var: SweepVar, value: f64) -> Self {
        let mut p = Self::base(cfg);
        match var {
            SweepVar::Power => p.noise.power = dbm_to_mw(value),
            SweepVar::NBs => p.scenario.dims.bs = value as usize,
            SweepVar::NUsers => p.scenario.dims.users = value as usize,
            SweepVar::NTargets => p.scenario.dims.targets = value as usize,
            SweepVar::Alpha => {
                p.weights.alpha_sen = value;
                p.weights.alpha_com = 1.0 - value;
            }
            SweepVar::Csi => p.csi = cfg.sweep.csi_spec(value),
        }
        p
    }
}

/// Trains at f32 from the run seed and returns the f64 model used for
/// evaluation.
pub fn train_gnn(
    cfg: &ExperimentConfig,
    point: &Point,
    on_epoch: impl FnMut(&isac_core::gnn::EpochRecord),
) -> Result<(GnnModel64, TrainTrace)> {
    let mut model = GnnModel::<TrainReal>::new(cfg.gnn_config(&point.scenario), cfg.seed)?;
    let tc = cfg.train_config(&point.csi);
    let trace = train(&mut model, &tc, &point.scenario, &point.weights, &point.noise, cfg.receive, on_epoch)?;
    Ok((model.cast(), trace))
}

/// Evaluation channels shared by every scheme and grid point.
pub fn eval_channels(seed: u64, scenario: &ScenarioConfig, draws: usize) -> Result<Vec<Channels<f64>>> {
    (0..draws)
        .map(|k| {
            let mut rng = RngStream::new(seed, EXPERIMENT_SWEEP, k as u64).rng(Purpose::Scenario);
            Ok(generate_scenario(scenario, &mut rng)?.1.channels)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Score {
    pub scc: f64,
    pub ssc: f64,
    pub wscsc: f64,
}

/// Objective of `bf` on estimate `ch`; under a non-trivial CSI spec, the
/// mean over `eval_draws` error realizations from the draw's own stream.
#[allow(clippy::too_many_arguments)]
pub fn score(
    cfg: &ExperimentConfig,
    point: &Point,
    ch: &Channels<f64>,
    bf: &BeamformerSet<f64>,
    draw: usize,
    eval_draws: usize,
) -> Result<Score> {
    if point.csi.is_trivial() {
        let r = evaluate(ch, None, bf, &point.weights, &point.noise, cfg.receive)?;
        return Ok(Score {
            scc: r.scc,
            ssc: r.ssc,
            wscsc: r.wscsc,
        });
    }
    let mut rng = RngStream::new(cfg.seed, EXPERIMENT_EVAL_ERROR, draw as u64).rng(Purpose::CsiError);
    let mut s = Score::default();
    for _ in 0..eval_draws {
        let real = perturb_estimate(ch, &point.csi, &mut rng)?;
        let r = evaluate(&real.estimated, Some(&real.error), bf, &point.weights, &point.noise, cfg.receive)?;
        s.scc += r.scc;
        s.ssc += r.ssc;
        s.wscsc += r.wscsc;
    }
    let n = eval_draws as f64;
    Ok(Score {
        scc: s.scc / n,
        ssc: s.ssc / n,
        wscsc: s.wscsc / n,
    })
}

pub fn baseline_kind(s: Scheme) -> Option<BaselineKind> {
    match s {
        Scheme::Gnn => None,
        Scheme::Mmse => Some(BaselineKind::Mmse),
        Scheme::Zf => Some(BaselineKind::Zf),
        Scheme::Mrt => Some(BaselineKind::Mrt),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variable: String,
    pub value: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub draw: usize,
    pub scc: f64,
    pub ssc: f64,
    pub wscsc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointTiming {
    pub value: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<String>,
    pub timing: Vec<PointTiming>,
}

fn sweep_point(cfg: &ExperimentConfig, var: SweepVar, value: f64, schemes: &[Scheme], draws: usize) -> SweepOutput {
    let mut out = SweepOutput::default();
    let fail = |out: &mut SweepOutput, what: String| out.failures.push(format!("{}={value}: {what}", var.name()));
    let point = Point::at(cfg, var, value);
    let channels = match eval_channels(cfg.seed, &point.scenario, draws) {
        Ok(c) => c,
        Err(e) => {
            fail(&mut out, format!("channel generation failed: {e}"));
            return out;
        }
    };
    let started = Instant::now();
    let model = if schemes.contains(&Scheme::Gnn) {
        match train_gnn(cfg, &point, |_| {}) {
            Ok((m, _)) => Some(m),
            Err(e) => {
                fail(&mut out, format!("gnn training failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let train_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    for &scheme in schemes {
        for (draw, ch) in channels.iter().enumerate() {
            let bf = match (scheme, &model) {
                (Scheme::Gnn, None) => continue,
                (Scheme::Gnn, Some(m)) => m.infer_batch(&[ch], point.noise.power).map(|mut i| i.beams.remove(0)).map_err(Into::into),
                (s, _) => baseline_beamformers(baseline_kind(s).expect("baseline"), ch, point.scenario.dims.n_rf, &point.noise)
                    .map(|(bf, _)| bf)
                    .map_err(Into::into),
            };
            let scored = bf.and_then(|bf| score(cfg, &point, ch, &bf, draw, cfg.sweep.csi_eval_draws));
            match scored {
                Ok(s) => out.rows.push(ResultRow {
                    variable: var.name().to_string(),
                    value,
                    scheme,
                    seed: cfg.seed,
                    draw,
                    scc: s.scc,
                    ssc: s.ssc,
                    wscsc: s.wscsc,
                }),
                Err(e) => fail(&mut out, format!("{scheme} draw {draw}: {e}")),
            }
        }
    }
    out.timing.push(PointTiming {
        value,
        train_seconds,
        eval_seconds: started.elapsed().as_secs_f64(),
    });
    out
}

/// One row per grid point, scheme and draw. Grid points run in parallel;
/// results are assembled in grid order.
pub fn run_sweep(cfg: &ExperimentConfig, var: SweepVar) -> SweepOutput {
    let grid = cfg.sweep.grid(var);
    let parts: Vec<SweepOutput> = grid
        .par_iter()
        .map(|&v| sweep_point(cfg, var, v, &cfg.sweep.schemes, cfg.sweep.draws))
        .collect();
    let mut out = SweepOutput::default();
    for p in parts {
        out.rows.extend(p.rows);
        out.failures.extend(p.failures);
        out.timing.extend(p.timing);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub iteration: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub kappa: f64,
    pub wscsc: f64,
}

/// Validation objective after every training epoch for each `(M, kappa)`
/// variant.
pub fn run_convergence(cfg: &ExperimentConfig, mut progress: impl FnMut(usize, f64, usize, f64)) -> Result<Vec<ConvergeRow>> {
    let mut rows = Vec::new();
    let mut run = cfg.clone();
    run.train.epochs = cfg.converge.iterations;
    for &m in &cfg.converge.bs {
        for &kappa in &cfg.converge.kappa {
            let mut point = Point::base(cfg);
            point.scenario.dims.bs = m;
            point.scenario.kappa_com = kappa;
            point.scenario.kappa_sen = kappa;
            point.scenario.validate()?;
            let (_, trace) = train_gnn(&run, &point, |r| progress(m, kappa, r.epoch, r.val_wscsc))?;
            rows.extend(trace.epochs.iter().map(|e| ConvergeRow {
                iteration: e.epoch,
                m,
                kappa,
                wscsc: e.val_wscsc,
            }));
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub epoch: usize,
    pub train_wscsc: f64,
    pub val_wscsc: f64,
}

/// Trains on the base point; returns the f32 model for checkpointing.
pub fn run_train(
    cfg: &ExperimentConfig,
    on_epoch: impl FnMut(&isac_core::gnn::EpochRecord),
) -> Result<(GnnModel<TrainReal>, Vec<TrainRow>)> {
    let point = Point::base(cfg);
    let mut model = GnnModel::<TrainReal>::new(cfg.gnn_config(&point.scenario), cfg.seed)?;
    let tc = cfg.train_config(&point.csi);
    let trace = train(&mut model, &tc, &point.scenario, &point.weights, &point.noise, cfg.receive, on_epoch)?;
    let rows = trace
        .epochs
        .iter()
        .map(|e| TrainRow {
            epoch: e.epoch,
            train_wscsc: e.train_wscsc,
            val_wscsc: e.val_wscsc,
        })
        .collect();
    Ok((model, rows))
}
