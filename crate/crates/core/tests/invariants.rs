//! KLD and ELBO properties over random inputs.

use glean_core::numeric::SeededRng;
use glean_core::pvrnn::{
    elbo, kld_term, kld_unit, prior_params, rollout, AdaptationVars, LayerConfig, ModelConfig, NetworkParams,
    NoiseTable, Sampling,
};
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn config(w_init: f64, w: [f64; 2]) -> ModelConfig {
    ModelConfig {
        layers: vec![
            LayerConfig {
                d_size: 4,
                z_size: 2,
                tau: 2.0,
                w: w[0],
            },
            LayerConfig {
                d_size: 3,
                z_size: 1,
                tau: 4.0,
                w: w[1],
            },
        ],
        w_init,
        output_dim: 2,
        seq_len: 5,
        lr: 0.001,
        epochs: 1,
        error_dropout: 0.0,
        seed: 0,
    }
}

/// `∫ q ln(q/p)` by composite Simpson over ±14σ of q.
fn kld_by_quadrature(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let log_pdf = |x: f64, m: f64, s: f64| -(x - m) * (x - m) / (2.0 * s * s) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let (a, b) = (mq - 14.0 * sq, mq + 14.0 * sq);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lq = log_pdf(x, mq, sq);
        lq.exp() * (lq - log_pdf(x, mp, sp))
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn closed_form_matches_quadrature() {
    for &(mq, sq, mp, sp) in &[
        (0.0, 1.0, 0.0, 1.0),
        (0.3, 0.5, -0.2, 1.3),
        (-0.9, 0.05, 0.4, 0.7),
        (0.1, 2.0, 0.0, 0.5),
    ] {
        let exact = kld_by_quadrature(mq, sq, mp, sp);
        let closed = kld_unit(mq, sq, mp, sp);
        assert!((exact - closed).abs() < 1e-8, "{mq} {sq} {mp} {sp}: {exact} vs {closed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn kld_is_non_negative(mq in -1.0f64..1.0, sq in 1e-3f64..5.0, mp in -1.0f64..1.0, sp in 1e-3f64..5.0) {
        prop_assert!(kld_unit(mq, sq, mp, sp) >= -1e-12);
    }

    #[test]
    fn kld_vanishes_only_on_equal_distributions(m in -1.0f64..1.0, s in 1e-3f64..5.0, dm in 1e-3f64..0.5, ratio in 1.01f64..3.0) {
        prop_assert!(kld_unit(m, s, m, s).abs() < 1e-12);
        prop_assert!(kld_unit(m, s, m + dm, s) > 0.0);
        prop_assert!(kld_unit(m, s, m, s * ratio) > 0.0);
        prop_assert!(kld_unit(m, s * ratio, m, s) > 0.0);
    }

    #[test]
    fn first_step_prior_ignores_previous_state(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let cfg = config(0.1, [0.1, 0.1]);
        let mut rng = SeededRng::new(seed);
        let params = NetworkParams::init(&cfg, &mut rng);
        for l in 0..2 {
            let d: Vec<f64> = (0..cfg.layers[l].d_size).map(|_| scale * rng.standard_normal()).collect();
            let (mu, sigma) = prior_params(&d, &params, l, 1).unwrap();
            prop_assert!(mu.iter().all(|m| *m == 0.0));
            prop_assert!(sigma.iter().all(|s| *s == 1.0));
        }
        let mq = [rng.uniform() - 0.5];
        let sq = [0.1 + rng.uniform()];
        let junk = [rng.standard_normal()];
        let k = kld_term(&mq, &sq, &junk, &[0.5 + rng.uniform()], 1.0, true).unwrap();
        prop_assert_eq!(k.unweighted, kld_unit(mq[0], sq[0], 0.0, 1.0));
    }

    #[test]
    fn elbo_is_accuracy_minus_complexity(seed in any::<u64>(), w_init in 0.0f64..1.0, w0 in 0.0f64..1.0, w1 in 0.0f64..1.0) {
        let cfg = config(w_init, [w0, w1]);
        let mut rng = SeededRng::new(seed);
        let params = NetworkParams::init(&cfg, &mut rng);
        let mut a = AdaptationVars::for_config(&cfg);
        let v: Vec<f64> = (0..2 * a.mu.len()).map(|_| rng.standard_normal()).collect();
        a.set_flat(&v);
        let noise = NoiseTable::sample(&mut rng, cfg.seq_len, cfg.layout().z_total);
        let target: Vec<f64> = (0..cfg.seq_len * 2).map(|_| rng.uniform()).collect();
        let tr = rollout(&params, &cfg, Some(&a), &noise, Sampling::posterior(cfg.seq_len)).unwrap();
        let r = elbo(&tr, &target, &cfg).unwrap();
        prop_assert_eq!(r.elbo, r.accuracy - r.complexity);
        prop_assert!(r.kld_pq >= 0.0);
        prop_assert!(r.complexity >= 0.0);
        prop_assert!(r.accuracy <= 0.0);
    }
}
