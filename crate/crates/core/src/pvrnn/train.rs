use serde::{Deserialize, Serialize};

use super::backward::{backward, Gradients};
use super::config::ModelConfig;
use super::elbo::{elbo, masked_output_grad, ElboReport};
use super::params::{AdaptationVars, NetworkParams};
use super::trace::{rollout, NoiseTable, Sampling};
use crate::error::{Error, Result};
use crate::numeric::{domain_seed, AdamState, SeededRng};
use crate::par::Execution;

/// A trained PV-RNN together with the per-sequence posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: NetworkParams,
    pub adaptation: Vec<AdaptationVars>,
    /// Sum over sequences, one entry per epoch, measured before the update.
    pub history: Vec<ElboReport>,
}

impl TrainedModel {
    pub fn final_report(&self) -> Option<&ElboReport> {
        self.history.last()
    }
}

/// Loss report and gradients of one sequence under fixed noise and mask.
///
/// `keep[t] == false` drops the prediction error of step `t` from the
/// gradient; the report still counts it.
pub fn sequence_gradients(
    params: &NetworkParams,
    config: &ModelConfig,
    adapt: &AdaptationVars,
    target: &[f64],
    noise: &NoiseTable,
    keep: &[bool],
) -> Result<(ElboReport, Gradients)> {
    let trace = rollout(params, config, Some(adapt), noise, Sampling::posterior(adapt.steps))?;
    let report = elbo(&trace, target, config)?;
    let gx = masked_output_grad(&trace, target, keep)?;
    let grads = backward(params, config, &trace, &gx, true)?;
    Ok((report, grads))
}

pub(crate) fn check_targets(targets: &[Vec<f64>], config: &ModelConfig) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let want = config.seq_len * config.output_dim;
    for t in targets {
        if t.len() != want {
            return Err(Error::DimensionMismatch {
                op: "training sequence length",
                expected: want,
                got: t.len(),
            });
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data".into()));
        }
    }
    Ok(())
}

/// Full-batch training of weights and every sequence's adaptation
/// variables. Each target is `seq_len × output_dim`, row-major.
pub fn train(targets: &[Vec<f64>], config: &ModelConfig, exec: Execution) -> Result<TrainedModel> {
    train_with_progress(targets, config, exec, |_, _| {})
}

pub fn train_with_progress(
    targets: &[Vec<f64>],
    config: &ModelConfig,
    exec: Execution,
    mut progress: impl FnMut(usize, &ElboReport),
) -> Result<TrainedModel> {
    config.validate()?;
    check_targets(targets, config)?;
    let layout = config.layout();
    let n = targets.len();
    let steps = config.seq_len;

    let mut params = NetworkParams::init(config, &mut SeededRng::new(domain_seed(config.seed, "init")));
    let mut adaptation = vec![AdaptationVars::for_config(config); n];
    let mut adam_w: Vec<AdamState> = params
        .blocks()
        .iter()
        .map(|(name, b)| AdamState::for_rate(name.clone(), b.len(), config.lr))
        .collect();
    let mut adam_a: Vec<AdamState> = (0..n)
        .map(|i| AdamState::for_rate(format!("A[{i}]"), 2 * steps * layout.z_total, config.lr))
        .collect();
    let noise_seed = domain_seed(config.seed, "train");
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let results = exec.map(n, |i| {
            let mut rng = SeededRng::derived(noise_seed, (epoch * n + i) as u64);
            let noise = NoiseTable::sample(&mut rng, steps, layout.z_total);
            let keep: Vec<bool> = (0..steps).map(|_| !rng.bernoulli(config.error_dropout)).collect();
            sequence_gradients(&params, config, &adaptation[i], &targets[i], &noise, &keep)
        });

        let mut total = params.zeros_like();
        let mut reports = Vec::with_capacity(n);
        let mut a_grads = Vec::with_capacity(n);
        for r in results {
            let (report, g) = r?;
            reports.push(report);
            total.add_assign(g.params.as_ref().expect("weight gradients requested"));
            a_grads.push(g.adapt.expect("posterior rollout"));
        }
        let report = ElboReport::sum(&reports);
        if !report.elbo.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: -report.elbo,
            });
        }
        progress(epoch, &report);
        history.push(report);

        let diverged = |_| Error::Divergence {
            epoch,
            loss: -report.elbo,
        };
        for ((state, p), (_, g)) in adam_w.iter_mut().zip(params.blocks_mut()).zip(total.blocks()) {
            state.step(p, g, config.lr).map_err(diverged)?;
        }
        for ((state, a), g) in adam_a.iter_mut().zip(adaptation.iter_mut()).zip(&a_grads) {
            let mut flat = a.flatten();
            state.step(&mut flat, &g.flatten(), config.lr).map_err(diverged)?;
            a.set_flat(&flat);
        }
    }

    Ok(TrainedModel {
        config: config.clone(),
        params,
        adaptation,
        history,
    })
}
