//! Single-step building blocks: the MTRNN cell, the prior and posterior
//! heads, and the Gaussian KL divergence.

use super::cell::layer_forward;
use super::config::{ModelConfig, SIGMA_FLOOR};
use super::params::NetworkParams;
use crate::error::{Error, Result};

/// One MTRNN step across all layers with `z_t` as the latent drive.
///
/// Inputs and outputs are per-layer vectors, bottom layer first.
pub fn mtrnn_cell(
    h_prev: &[Vec<f64>],
    d_prev: &[Vec<f64>],
    z_t: &[Vec<f64>],
    params: &NetworkParams,
    config: &ModelConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = config.layers.len();
    check_len("mtrnn_cell h_prev layers", n, h_prev.len())?;
    check_len("mtrnn_cell d_prev layers", n, d_prev.len())?;
    check_len("mtrnn_cell z_t layers", n, z_t.len())?;
    let mut h = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for (l, lc) in config.layers.iter().enumerate() {
        check_len("mtrnn_cell h_prev", lc.d_size, h_prev[l].len())?;
        check_len("mtrnn_cell d_prev", lc.d_size, d_prev[l].len())?;
        check_len("mtrnn_cell z_t", lc.z_size, z_t[l].len())?;
        let p = &params.layers[l];
        let drive = p.w_zd.matvec(&z_t[l])?;
        let mut hl = vec![0.0; lc.d_size];
        let mut dl = vec![0.0; lc.d_size];
        let above = (l + 1 < n).then(|| d_prev[l + 1].as_slice());
        layer_forward(&p.rec, lc.tau, &h_prev[l], &d_prev[l], above, &drive, &mut hl, &mut dl);
        h.push(hl);
        d.push(dl);
    }
    Ok((h, d))
}

fn check_len(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { op, expected, got });
    }
    Ok(())
}

/// Prior `(μᵖ, σᵖ)` of layer `layer` at 1-based step `t`.
///
/// The first step is the unit Gaussian regardless of `d_prev`.
pub fn prior_params(
    d_prev: &[f64],
    params: &NetworkParams,
    layer: usize,
    t: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if t == 0 {
        return Err(Error::Config("prior_params: steps are 1-based".into()));
    }
    let p = &params.layers[layer];
    let z = p.w_mu.rows();
    if t == 1 {
        return Ok((vec![0.0; z], vec![1.0; z]));
    }
    let mu = p.w_mu.matvec(d_prev)?.into_iter().map(f64::tanh).collect();
    let sigma = p
        .w_sigma
        .matvec(d_prev)?
        .into_iter()
        .map(|a| a.exp().max(SIGMA_FLOOR))
        .collect();
    Ok((mu, sigma))
}

/// Posterior `(μ^q, σ^q) = (tanh Aμ, exp Aσ)`.
pub fn posterior_params(a_mu: &[f64], a_sigma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        a_mu.iter().map(|a| a.tanh()).collect(),
        a_sigma.iter().map(|a| a.exp().max(SIGMA_FLOOR)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kld {
    pub weighted: f64,
    pub unweighted: f64,
}

/// `KL(q ‖ p)` for one unit, standard closed form.
#[inline]
pub fn kld_unit(mu_q: f64, sigma_q: f64, mu_p: f64, sigma_p: f64) -> f64 {
    let dm = mu_p - mu_q;
    (sigma_p / sigma_q).ln() + (dm * dm + sigma_q * sigma_q) / (2.0 * sigma_p * sigma_p) - 0.5
}

/// Diagonal-Gaussian KLD summed over units, plus its `w_eff` weighting.
///
/// On the first step the prior is `N(0, I)` and `mu_p`/`sigma_p` are ignored.
pub fn kld_term(
    mu_q: &[f64],
    sigma_q: &[f64],
    mu_p: &[f64],
    sigma_p: &[f64],
    w_eff: f64,
    first_step: bool,
) -> Result<Kld> {
    check_len("kld_term sigma_q", mu_q.len(), sigma_q.len())?;
    if !first_step {
        check_len("kld_term mu_p", mu_q.len(), mu_p.len())?;
        check_len("kld_term sigma_p", mu_q.len(), sigma_p.len())?;
    }
    let mut total = 0.0;
    for i in 0..mu_q.len() {
        let (mp, sp) = if first_step { (0.0, 1.0) } else { (mu_p[i], sigma_p[i]) };
        let sq = sigma_q[i];
        if !(sq > 0.0) {
            return Err(Error::NonPositiveSigma(sq));
        }
        if !(sp > 0.0) {
            return Err(Error::NonPositiveSigma(sp));
        }
        total += kld_unit(mu_q[i], sq, mp, sp);
    }
    Ok(Kld {
        weighted: w_eff * total,
        unweighted: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, SeededRng};
    use crate::pvrnn::{LayerConfig, MetaPrior};

    fn one_unit_config(tau: f64) -> ModelConfig {
        ModelConfig {
            layers: vec![LayerConfig {
                d_size: 1,
                z_size: 1,
                tau,
                w: 0.01,
            }],
            w_init: 0.01,
            output_dim: 1,
            seq_len: 1,
            lr: 0.001,
            epochs: 1,
            error_dropout: 0.0,
            seed: 0,
        }
    }

    fn one_unit_params(w_dd: f64, w_zd: f64) -> NetworkParams {
        let cfg = one_unit_config(1.0);
        let mut p = NetworkParams::init(&cfg, &mut SeededRng::new(0));
        p.layers[0].rec.w_dd = Matrix::from_vec(1, 1, vec![w_dd]).unwrap();
        p.layers[0].w_zd = Matrix::from_vec(1, 1, vec![w_zd]).unwrap();
        p
    }

    #[test]
    fn cell_zero_propagation() {
        let cfg = one_unit_config(1.0);
        let p = one_unit_params(1.0, 1.0);
        let (h, d) = mtrnn_cell(&[vec![0.0]], &[vec![0.0]], &[vec![0.0]], &p, &cfg).unwrap();
        assert_eq!((h[0][0], d[0][0]), (0.0, 0.0));
    }

    #[test]
    fn cell_large_tau_holds_state() {
        let cfg = one_unit_config(1e6);
        let p = one_unit_params(0.7, -1.3);
        let h_prev = 0.4;
        let (h, _) =
            mtrnn_cell(&[vec![h_prev]], &[vec![0.9]], &[vec![2.0]], &p, &cfg).unwrap();
        assert!(((h[0][0] - h_prev) / h_prev).abs() < 1e-5);
    }

    #[test]
    fn cell_hand_case() {
        let cfg = one_unit_config(2.0);
        let p = one_unit_params(1.0, 1.0);
        let d_prev = 1.0f64.tanh();
        let (h, d) = mtrnn_cell(&[vec![1.0]], &[vec![d_prev]], &[vec![0.0]], &p, &cfg).unwrap();
        assert!((h[0][0] - 0.880797).abs() < 1e-6);
        assert!((d[0][0] - h[0][0].tanh()).abs() < 1e-15);
    }

    #[test]
    fn cell_tau_one_is_vanilla_rnn() {
        let mut cfg = ModelConfig::experiment1(MetaPrior::Intermediate);
        cfg.layers[0].tau = 1.0;
        cfg.layers[1].tau = 1.0;
        let p = NetworkParams::init(&cfg, &mut SeededRng::new(9));
        let mut rng = SeededRng::new(10);
        let mut rv = |n: usize| (0..n).map(|_| rng.standard_normal() * 0.5).collect::<Vec<_>>();
        let h_prev = vec![rv(20), rv(10)];
        let d_prev = vec![crate::numeric::tanh_vec(&rv(20)), crate::numeric::tanh_vec(&rv(10))];
        let z = vec![rv(2), rv(1)];
        let (h, _) = mtrnn_cell(&h_prev, &d_prev, &z, &p, &cfg).unwrap();
        let l0 = &p.layers[0];
        let mut expect = l0.rec.w_dd.matvec(&d_prev[0]).unwrap();
        let zd = l0.w_zd.matvec(&z[0]).unwrap();
        let td = l0.rec.w_td.as_ref().unwrap().matvec(&d_prev[1]).unwrap();
        for i in 0..20 {
            expect[i] += zd[i] + td[i];
            assert!((h[0][i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_shape_mismatch() {
        let cfg = one_unit_config(1.0);
        let p = one_unit_params(1.0, 1.0);
        assert!(mtrnn_cell(&[vec![0.0, 0.0]], &[vec![0.0]], &[vec![0.0]], &p, &cfg).is_err());
    }

    #[test]
    fn prior_first_step_is_unit_gaussian() {
        let p = one_unit_params(1.0, 1.0);
        let (mu, sigma) = prior_params(&[0.9], &p, 0, 1).unwrap();
        assert_eq!((mu, sigma), (vec![0.0], vec![1.0]));
        let (mu, sigma) = prior_params(&[0.0], &p, 0, 2).unwrap();
        assert_eq!((mu, sigma), (vec![0.0], vec![1.0]));
    }

    #[test]
    fn prior_hand_case() {
        let mut p = one_unit_params(1.0, 1.0);
        p.layers[0].w_mu = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        p.layers[0].w_sigma = Matrix::from_vec(1, 1, vec![-1.0]).unwrap();
        let (mu, sigma) = prior_params(&[0.5], &p, 0, 2).unwrap();
        assert!((mu[0] - 0.462117).abs() < 1e-6);
        assert!((sigma[0] - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn posterior_cases() {
        assert_eq!(posterior_params(&[0.0], &[0.0]), (vec![0.0], vec![1.0]));
        let (mu, _) = posterior_params(&[20.0], &[0.0]);
        assert!((mu[0] - 1.0).abs() < 1e-9);
        let (mu, sigma) = posterior_params(&[0.3], &[-0.2]);
        assert!((mu[0] - 0.2913).abs() < 1e-4 && (sigma[0] - 0.8187).abs() < 1e-4);
    }

    #[test]
    fn kld_cases() {
        let k = kld_term(&[0.3], &[0.7], &[0.3], &[0.7], 1.0, false).unwrap();
        assert!(k.unweighted.abs() < 1e-15);
        let k = kld_term(&[0.0], &[1.0], &[5.0], &[0.1], 1.0, true).unwrap();
        assert!(k.unweighted.abs() < 1e-15);
        let k = kld_term(&[0.5], &[1.0], &[0.0], &[1.0], 0.01, false).unwrap();
        assert!((k.unweighted - 0.125).abs() < 1e-15);
        assert!((k.weighted - 0.00125).abs() < 1e-15);
        assert!(kld_term(&[0.0], &[0.0], &[0.0], &[1.0], 1.0, false).is_err());
    }
}
