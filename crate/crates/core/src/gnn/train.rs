use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{
    generate_scenario, perturb_estimate, Channels, CsiErrorSpec, Purpose, RngStream, ScenarioConfig,
};
use crate::metrics::{evaluate, wscsc_expected, wscsc_on_tape, Noise, ObjectiveWeights, ReceiveMode, TapeChannels};
use crate::scalar::{lit, to_f64, Scalar};
use crate::tensor::{AdamConfig, CVar, Optimizer, OptimizerKind, Tape, Var};

use super::features::build_node_features;
use super::model::GnnModel;
use super::{GnnError, Result};

/// Experiment tags for the RNG streams of the training set and the
/// validation set.
pub const EXPERIMENT_TRAIN: u64 = 0x7261_696e;
pub const EXPERIMENT_VALIDATION: u64 = 0x7661_6c69;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub samples_per_epoch: usize,
    /// Draw a new training set every epoch instead of reshuffling one
    /// fixed set.
    pub fresh_samples: bool,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    pub seed: u64,
    pub csi: CsiErrorSpec,
    /// Error realizations averaged per sample and step under imperfect CSI.
    pub error_draws: usize,
    pub validation_samples: usize,
    pub validation_error_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            samples_per_epoch: 512,
            fresh_samples: true,
            batch_size: 32,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam: AdamConfig::default(),
            seed: 0,
            csi: CsiErrorSpec::none(),
            error_draws: 1,
            validation_samples: 32,
            validation_error_draws: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("samples_per_epoch", self.samples_per_epoch),
            ("batch_size", self.batch_size),
            ("error_draws", self.error_draws),
            ("validation_samples", self.validation_samples),
            ("validation_error_draws", self.validation_error_draws),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(GnnError::Config(format!("{name} must be at least 1")));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(GnnError::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        self.csi.validate()?;
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.samples_per_epoch.div_ceil(self.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's minibatches, measured
    /// before each update.
    pub train_wscsc: f64,
    /// Mean objective of the current parameters on the validation set.
    pub val_wscsc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_val_wscsc: f64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// One training sample: the channel the network sees and the error
/// realizations to average over (empty for perfect CSI).
#[derive(Clone, Copy, Debug)]
pub struct LossSample<'a> {
    pub estimate: &'a Channels<f64>,
    pub errors: &'a [Channels<f64>],
}

/// Records `-(1/T) sum_t mean_d WSCSC(t, d)` on `tape`. Also returns each
/// sample's objective value.
pub fn loss_on_tape<T: Scalar>(
    model: &GnnModel<T>,
    tape: &mut Tape<T>,
    samples: &[LossSample<'_>],
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
    step: usize,
) -> Result<(Var, Vec<f64>)> {
    if samples.is_empty() {
        return Err(GnnError::Shape("empty batch".into()));
    }
    if let Some(t) = samples.iter().position(|s| !s.estimate.is_finite() || s.errors.iter().any(|e| !e.is_finite())) {
        return Err(GnnError::NonFinite { step, sample: t });
    }
    let estimates: Vec<&Channels<f64>> = samples.iter().map(|s| s.estimate).collect();
    let mut per_bs = Vec::with_capacity(model.config.bs);
    for m in 0..model.config.bs {
        let feats = build_node_features::<T>(&estimates, m, &model.config)?;
        per_bs.push(model.forward_bs(tape, m, &feats, lit(noise.power))?);
    }
    let mut total: Option<Var> = None;
    let mut values = Vec::with_capacity(samples.len());
    for (t, s) in samples.iter().enumerate() {
        let x: Vec<CVar> = per_bs.iter().map(|b| CVar { re: b[t].x_re, im: b[t].x_im }).collect();
        let est = s.estimate.cast::<T>();
        let draws: Vec<Option<Channels<T>>> = if s.errors.is_empty() {
            vec![None]
        } else {
            s.errors.iter().map(|e| Some(e.cast::<T>())).collect()
        };
        let mut acc: Option<Var> = None;
        for e in &draws {
            let ch = TapeChannels::new(tape, &est, e.as_ref());
            let v = wscsc_on_tape(tape, &ch, &x, weights, noise, mode)?;
            acc = Some(match acc {
                None => v,
                Some(a) => tape.add(a, v)?,
            });
        }
        let mean = tape.scale(acc.expect("at least one draw"), lit(1.0 / draws.len() as f64));
        let value = to_f64(tape.value(mean).item()?);
        if !value.is_finite() {
            return Err(GnnError::NonFinite { step, sample: t });
        }
        values.push(value);
        total = Some(match total {
            None => mean,
            Some(a) => tape.add(a, mean)?,
        });
    }
    let loss = tape.scale(total.expect("non-empty batch"), lit(-1.0 / samples.len() as f64));
    Ok((loss, values))
}

/// Mean objective of `model` over `samples`. With a non-trivial `csi`
/// spec each sample's value is a Monte Carlo mean over `draws` error
/// realizations from fixed streams.
#[allow(clippy::too_many_arguments)]
pub fn mean_wscsc<T: Scalar>(
    model: &GnnModel<T>,
    samples: &[Channels<f64>],
    csi: &CsiErrorSpec,
    seed: u64,
    draws: usize,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<f64> {
    let refs: Vec<&Channels<f64>> = samples.iter().collect();
    let inf = model.infer_batch(&refs, noise.power)?;
    let mut total = 0.0;
    for (b, (ch, bf)) in samples.iter().zip(&inf.beams).enumerate() {
        let bf = bf.cast::<f64>();
        total += if csi.is_trivial() {
            evaluate(ch, None, &bf, weights, noise, mode)?.wscsc
        } else {
            let mut rng = RngStream::new(seed, EXPERIMENT_VALIDATION, b as u64).rng(Purpose::CsiError);
            wscsc_expected(ch, csi, &mut rng, &bf, weights, noise, mode, draws)?
        };
    }
    Ok(total / samples.len() as f64)
}

fn sample_set(scenario: &ScenarioConfig, seed: u64, experiment: u64, first: u64, n: usize) -> Result<Vec<Channels<f64>>> {
    (0..n)
        .map(|k| {
            let mut rng = RngStream::new(seed, experiment, first + k as u64).rng(Purpose::Scenario);
            Ok(generate_scenario(scenario, &mut rng)?.1.channels)
        })
        .collect()
}

/// Unsupervised training on seeded scenarios. Calls `on_epoch` after
/// every epoch.
pub fn train<T: Scalar>(
    model: &mut GnnModel<T>,
    cfg: &TrainConfig,
    scenario: &ScenarioConfig,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainTrace> {
    cfg.validate()?;
    scenario.validate()?;
    model.config.check_dims(&scenario.dims)?;
    let n = cfg.samples_per_epoch;
    let mut train_set = sample_set(scenario, cfg.seed, EXPERIMENT_TRAIN, 0, n)?;
    let val_set = sample_set(scenario, cfg.seed, EXPERIMENT_VALIDATION, 0, cfg.validation_samples)?;
    let validate = |model: &GnnModel<T>| {
        mean_wscsc(model, &val_set, &cfg.csi, cfg.seed, cfg.validation_error_draws, weights, noise, mode)
    };

    let mut opt = Optimizer::<T>::new(cfg.optimizer, cfg.lr, cfg.adam);
    let mut trace = TrainTrace {
        initial_val_wscsc: validate(model)?,
        ..TrainTrace::default()
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut tape = Tape::new();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.fresh_samples && epoch > 1 {
            train_set = sample_set(scenario, cfg.seed, EXPERIMENT_TRAIN, ((epoch - 1) * n) as u64, n)?;
        }
        let mut shuffle = RngStream::new(cfg.seed, EXPERIMENT_TRAIN, epoch as u64).rng(Purpose::Batch);
        order.shuffle(&mut shuffle);
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let errors: Vec<Vec<Channels<f64>>> = chunk
                .iter()
                .map(|&k| {
                    if cfg.csi.is_trivial() {
                        return Ok(Vec::new());
                    }
                    let draw = ((step as u64) << 24) | k as u64;
                    let mut rng = RngStream::new(cfg.seed, EXPERIMENT_TRAIN, draw).rng(Purpose::CsiError);
                    (0..cfg.error_draws)
                        .map(|_| Ok(perturb_estimate(&train_set[k], &cfg.csi, &mut rng)?.error))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let batch: Vec<LossSample> = chunk
                .iter()
                .zip(&errors)
                .map(|(&k, e)| LossSample {
                    estimate: &train_set[k],
                    errors: e,
                })
                .collect();
            tape.reset();
            let (loss, _) = loss_on_tape(model, &mut tape, &batch, weights, noise, mode, step)?;
            let value = to_f64(tape.value(loss).item()?);
            tape.backward(loss)?.accumulate_into(&mut model.store);
            opt.step(&mut model.store)?;
            epoch_sum += -value * chunk.len() as f64;
            trace.steps.push(StepRecord { step, epoch, loss: value });
        }
        let record = EpochRecord {
            epoch,
            train_wscsc: epoch_sum / train_set.len() as f64,
            val_wscsc: validate(model)?,
        };
        on_epoch(&record);
        trace.epochs.push(record);
    }
    Ok(trace)
}
