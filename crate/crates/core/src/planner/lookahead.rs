//! One-step look-ahead: predict each next position from the observed prefix.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    driven_rollout, fm_teacher_plan, si_backward, si_loss, si_plan, si_rollout, si_width, SiInit, TrainedFm,
    TrainedSi,
};
use crate::error::{Error, Result};
use crate::numeric::AdamState;
use crate::pvrnn::{
    backward, rollout, AdaptationVars, ModelConfig, NetworkParams, NoiseTable, Sampling,
};

#[derive(Debug, Clone, Copy)]
pub enum LookaheadModel<'a> {
    Glean {
        params: &'a NetworkParams,
        config: &'a ModelConfig,
    },
    Si(&'a TrainedSi),
    Fm(&'a TrainedFm),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookaheadOptions {
    /// Most recent prefix steps whose errors drive inference; clamped to
    /// the prefix length.
    pub window: usize,
    /// Error-regression epochs per step (GLean).
    pub regression_epochs: usize,
    /// Epochs for the one-off first-step inference (SI).
    pub si_epochs: usize,
    pub rate: f64,
}

impl Default for LookaheadOptions {
    fn default() -> Self {
        Self {
            window: usize::MAX,
            regression_epochs: 30,
            si_epochs: 500,
            rate: super::DEFAULT_PLAN_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadResult {
    /// Predictions of steps `1..T`, `(T − 1) × dim`.
    pub predictions: Vec<f64>,
    pub rmse: f64,
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let se: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    (se / pred.len() as f64).sqrt()
}

/// `truth` is `T × dim`, row-major.
pub fn one_step_lookahead(model: LookaheadModel<'_>, truth: &[f64], opts: &LookaheadOptions) -> Result<LookaheadResult> {
    let predictions = match model {
        LookaheadModel::Fm(m) => fm_lookahead(m, truth)?,
        LookaheadModel::Si(m) => si_lookahead(m, truth, opts)?,
        LookaheadModel::Glean { params, config } => glean_lookahead(params, config, truth, opts)?,
    };
    let dim = match model {
        LookaheadModel::Fm(m) => m.config.model.output_dim,
        LookaheadModel::Si(m) => m.config.model.output_dim,
        LookaheadModel::Glean { config, .. } => config.output_dim,
    };
    let r = rmse(&predictions, &truth[dim..]);
    if !r.is_finite() {
        return Err(Error::NonFinite("look-ahead predictions".into()));
    }
    Ok(LookaheadResult { predictions, rmse: r })
}

fn check_truth(truth: &[f64], config: &ModelConfig) -> Result<usize> {
    let dim = config.output_dim;
    if truth.len() % dim != 0 || truth.len() / dim < 2 {
        return Err(Error::DimensionMismatch {
            op: "look-ahead sequence",
            expected: config.seq_len * dim,
            got: truth.len(),
        });
    }
    Ok(truth.len() / dim)
}

fn fm_lookahead(model: &TrainedFm, truth: &[f64]) -> Result<Vec<f64>> {
    let config = &model.config.model;
    check_truth(truth, config)?;
    let plan = fm_teacher_plan(truth, config.output_dim);
    Ok(driven_rollout(&model.params.net, config, None, &plan)?.x)
}

fn si_lookahead(model: &TrainedSi, truth: &[f64], opts: &LookaheadOptions) -> Result<Vec<f64>> {
    let config = &model.config.model;
    let steps = check_truth(truth, config)?;
    let dim = config.output_dim;
    let width = si_width(config);
    let prefix = opts.window.min(steps);
    let eps = vec![0.0; width];
    let plan = si_plan(Some(truth), steps, dim, 0.0);
    let mut init = SiInit::zeros(width);
    let mut flat = init.flatten();
    let mut adam = AdamState::for_rate("A1", flat.len(), opts.rate);
    for _ in 0..opts.si_epochs {
        let tr = si_rollout(&model.params, config, &init, &eps, &plan)?;
        let (_, mut gx) = si_loss(&tr.inner.x, truth);
        gx[prefix * dim..].iter_mut().for_each(|g| *g = 0.0);
        let (_, ga) = si_backward(&model.params, config, &plan, &tr, &gx, false)?;
        adam.step(&mut flat, &ga.flatten(), opts.rate)?;
        init.set_flat(&flat);
    }
    let tr = si_rollout(&model.params, config, &init, &eps, &plan)?;
    Ok(tr.inner.x[dim..].to_vec())
}

/// Copies the first `a.steps` rows of `grad` into a `full`-shaped gradient.
fn embed(grad: &AdaptationVars, full_steps: usize) -> Vec<f64> {
    grad.resized(full_steps).flatten()
}

fn glean_lookahead(
    params: &NetworkParams,
    config: &ModelConfig,
    truth: &[f64],
    opts: &LookaheadOptions,
) -> Result<Vec<f64>> {
    let steps = check_truth(truth, config)?;
    let dim = config.output_dim;
    let width = config.layout().z_total;
    // Inference runs on posterior means, as for SI.
    let noise = NoiseTable::zeros(steps, width);
    let mut adapt = AdaptationVars::zeros(steps, width);
    let mut flat = adapt.flatten();
    let mut adam = AdamState::for_rate("A", flat.len(), opts.rate);
    let mut predictions = Vec::with_capacity((steps - 1) * dim);

    for t in 1..steps {
        // Regress A over the observed prefix 0..t.
        let lo = t.saturating_sub(opts.window.max(1));
        let prefix_noise = NoiseTable {
            steps: t,
            width,
            eps: noise.eps[..t * width].to_vec(),
        };
        for _ in 0..opts.regression_epochs {
            let a = adapt.resized(t);
            let tr = rollout(params, config, Some(&a), &prefix_noise, Sampling::posterior(t))?;
            let mut gx = vec![0.0; t * dim];
            for s in lo..t {
                for i in 0..dim {
                    gx[s * dim + i] = tr.x[s * dim + i] - truth[s * dim + i];
                }
            }
            let g = backward(params, config, &tr, &gx, false)?;
            let ga = embed(&g.adapt.expect("posterior rollout"), steps);
            adam.step(&mut flat, &ga, opts.rate)?;
            adapt.set_flat(&flat);
        }
        // Predict step t from the prior mean.
        let mut pred_noise = NoiseTable {
            steps: t + 1,
            width,
            eps: noise.eps[..(t + 1) * width].to_vec(),
        };
        pred_noise.at_mut(t).fill(0.0);
        let a = adapt.resized(t + 1);
        let tr = rollout(params, config, Some(&a), &pred_noise, Sampling::posterior(t))?;
        predictions.extend_from_slice(tr.x_at(t));
    }
    Ok(predictions)
}
