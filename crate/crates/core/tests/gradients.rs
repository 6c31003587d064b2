//! Hand-written BPTT against central finite differences with replayed noise.

use glean_core::numeric::{finite_diff_gradient, relative_error, SeededRng};
use glean_core::pvrnn::{
    backward, elbo, endpoint_output_grad, estimated_lower_bound, masked_output_grad, rollout,
    AdaptationVars, LayerConfig, ModelConfig, NetworkParams, NoiseTable, Sampling,
};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-5;

fn config(layers: Vec<LayerConfig>, steps: usize) -> ModelConfig {
    ModelConfig {
        layers,
        w_init: 0.3,
        output_dim: 2,
        seq_len: steps,
        lr: 0.001,
        epochs: 1,
        error_dropout: 0.0,
        seed: 0,
    }
}

fn small() -> ModelConfig {
    config(
        vec![LayerConfig {
            d_size: 4,
            z_size: 1,
            tau: 2.0,
            w: 0.5,
        }],
        5,
    )
}

fn two_layer() -> ModelConfig {
    config(
        vec![
            LayerConfig {
                d_size: 4,
                z_size: 2,
                tau: 2.0,
                w: 0.4,
            },
            LayerConfig {
                d_size: 3,
                z_size: 1,
                tau: 5.0,
                w: 0.2,
            },
        ],
        6,
    )
}

struct Fixture {
    cfg: ModelConfig,
    params: NetworkParams,
    adapt: AdaptationVars,
    noise: NoiseTable,
    target: Vec<f64>,
}

fn fixture(cfg: ModelConfig, seed: u64) -> Fixture {
    let mut rng = SeededRng::new(seed);
    let mut params = NetworkParams::init(&cfg, &mut rng);
    let flat: Vec<f64> = params.flatten().iter().map(|w| 1.5 * w + 0.05 * rng.standard_normal()).collect();
    params.set_flat(&flat);
    let mut adapt = AdaptationVars::for_config(&cfg);
    let a: Vec<f64> = (0..adapt.flatten().len()).map(|_| 0.5 * rng.standard_normal()).collect();
    adapt.set_flat(&a);
    let width = cfg.layout().z_total;
    let noise = NoiseTable::sample(&mut rng, cfg.seq_len, width);
    let target = (0..cfg.seq_len * cfg.output_dim).map(|_| rng.uniform()).collect();
    Fixture {
        cfg,
        params,
        adapt,
        noise,
        target,
    }
}

fn neg_elbo(f: &Fixture, params: &NetworkParams, adapt: &AdaptationVars, sampling: Sampling) -> f64 {
    let tr = rollout(params, &f.cfg, Some(adapt), &f.noise, sampling).unwrap();
    -elbo(&tr, &f.target, &f.cfg).unwrap().elbo
}

fn assert_close(label: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    let worst = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| relative_error(*a, *b, FLOOR))
        .fold(0.0, f64::max);
    assert!(worst < TOL, "{label}: worst relative error {worst:e}");
}

fn check_elbo_gradients(f: &Fixture, sampling: Sampling) {
    let tr = rollout(&f.params, &f.cfg, Some(&f.adapt), &f.noise, sampling).unwrap();
    let gx = masked_output_grad(&tr, &f.target, &vec![true; f.cfg.seq_len]).unwrap();
    let g = backward(&f.params, &f.cfg, &tr, &gx, true).unwrap();

    let w0 = f.params.flatten();
    let fd_w = finite_diff_gradient(
        |w| {
            let mut p = f.params.clone();
            p.set_flat(w);
            neg_elbo(f, &p, &f.adapt, sampling)
        },
        &w0,
        H,
    )
    .unwrap();
    assert_close("weights", &g.params.unwrap().flatten(), &fd_w);

    let a0 = f.adapt.flatten();
    let fd_a = finite_diff_gradient(
        |a| {
            let mut ad = f.adapt.clone();
            ad.set_flat(a);
            neg_elbo(f, &f.params, &ad, sampling)
        },
        &a0,
        H,
    )
    .unwrap();
    assert_close("adaptation", &g.adapt.unwrap().flatten(), &fd_a);
}

#[test]
fn elbo_gradients_single_layer() {
    let f = fixture(small(), 11);
    check_elbo_gradients(&f, Sampling::posterior(f.cfg.seq_len));
}

#[test]
fn elbo_gradients_two_layers() {
    let f = fixture(two_layer(), 12);
    check_elbo_gradients(&f, Sampling::posterior(f.cfg.seq_len));
}

#[test]
fn elbo_gradients_with_prior_sampled_tail() {
    let f = fixture(two_layer(), 13);
    check_elbo_gradients(
        &f,
        Sampling {
            posterior_steps: 2,
            sigma_cap: f64::INFINITY,
        },
    );
}

#[test]
fn plan_objective_gradients() {
    for (cfg, seed) in [(small(), 21), (two_layer(), 22)] {
        let f = fixture(cfg, seed);
        let initial = [0.01, 0.02];
        let goal = [0.2, 0.8];
        let sampling = Sampling::posterior(f.cfg.seq_len);
        let bound = |ad: &AdaptationVars| {
            let tr = rollout(&f.params, &f.cfg, Some(ad), &f.noise, sampling).unwrap();
            -estimated_lower_bound(&tr, &initial, &goal, &f.cfg).unwrap().elbo
        };
        let tr = rollout(&f.params, &f.cfg, Some(&f.adapt), &f.noise, sampling).unwrap();
        let gx = endpoint_output_grad(&tr, &initial, &goal);
        let g = backward(&f.params, &f.cfg, &tr, &gx, false).unwrap();
        assert!(g.params.is_none());
        let fd = finite_diff_gradient(
            |a| {
                let mut ad = f.adapt.clone();
                ad.set_flat(a);
                bound(&ad)
            },
            &f.adapt.flatten(),
            H,
        )
        .unwrap();
        assert_close("plan A", &g.adapt.unwrap().flatten(), &fd);
    }
}

#[test]
fn adaptation_gradient_is_causal() {
    // A_t only shapes steps t.. so errors before t never reach it.
    let f = fixture(small(), 31);
    let tr = rollout(&f.params, &f.cfg, Some(&f.adapt), &f.noise, Sampling::posterior(5)).unwrap();
    let mut keep = vec![false; 5];
    keep[1] = true;
    let gx = masked_output_grad(&tr, &f.target, &keep).unwrap();
    let mut cfg = f.cfg.clone();
    cfg.w_init = 0.0;
    cfg.layers[0].w = 0.0;
    let g = backward(&f.params, &cfg, &tr, &gx, false).unwrap().adapt.unwrap();
    for t in 2..5 {
        assert_eq!(g.mu_at(t), &[0.0]);
        assert_eq!(g.sigma_at(t), &[0.0]);
    }
    assert!(g.mu_at(1)[0] != 0.0);
}

mod baselines {
    use super::*;
    use glean_core::baselines::{
        driven_backward, driven_rollout, fm_loss, fm_training_plan, si_backward, si_loss, si_plan,
        si_rollout, si_width, DrivenNet, SiInit, SiParams,
    };

    fn net_fixture(cfg: &ModelConfig, seed: u64) -> (DrivenNet, Vec<f64>) {
        let mut rng = SeededRng::new(seed);
        let net = DrivenNet::init(cfg, 2, &mut rng);
        let target = (0..cfg.seq_len * 2).map(|_| rng.uniform()).collect();
        (net, target)
    }

    #[test]
    fn forward_model_weights_and_inputs() {
        let cfg = two_layer();
        let (net, target) = net_fixture(&cfg, 41);
        let plan = fm_training_plan(&target, 2, 0.9);
        let loss = |n: &DrivenNet, p: &glean_core::baselines::InputPlan| {
            let tr = driven_rollout(n, &cfg, None, p).unwrap();
            fm_loss(&tr.x, &target, 2).0
        };
        let tr = driven_rollout(&net, &cfg, None, &plan).unwrap();
        let (_, gx) = fm_loss(&tr.x, &target, 2);
        let g = driven_backward(&net, &cfg, &plan, &tr, &gx, true).unwrap();

        let fd = finite_diff_gradient(
            |w| {
                let mut n = net.clone();
                n.set_flat(w);
                loss(&n, &plan)
            },
            &net.flatten(),
            H,
        )
        .unwrap();
        assert_close("fm weights", &g.net.unwrap().flatten(), &fd);

        let fd = finite_diff_gradient(
            |u| {
                let mut p = plan.clone();
                p.external.copy_from_slice(u);
                loss(&net, &p)
            },
            &plan.external,
            H,
        )
        .unwrap();
        assert_close("fm inputs", &g.external, &fd);
    }

    #[test]
    fn stochastic_initial_state_weights_and_latents() {
        let mut cfg = two_layer();
        cfg.w_init = 0.4;
        let mut rng = SeededRng::new(42);
        let params = SiParams::init(&cfg, &mut rng);
        let width = si_width(&cfg);
        let mut init = SiInit::zeros(width);
        let a: Vec<f64> = (0..2 * width).map(|_| 0.5 * rng.standard_normal()).collect();
        init.set_flat(&a);
        let mut eps = vec![0.0; width];
        rng.fill_standard_normal(&mut eps);
        let target: Vec<f64> = (0..cfg.seq_len * 2).map(|_| rng.uniform()).collect();
        let plan = si_plan(Some(&target), cfg.seq_len, 2, 0.9);
        let loss = |p: &SiParams, i: &SiInit| {
            let tr = si_rollout(p, &cfg, i, &eps, &plan).unwrap();
            si_loss(&tr.inner.x, &target).0 + cfg.w_init * tr.kld()
        };
        let tr = si_rollout(&params, &cfg, &init, &eps, &plan).unwrap();
        let (_, gx) = si_loss(&tr.inner.x, &target);
        let (gp, ga) = si_backward(&params, &cfg, &plan, &tr, &gx, true).unwrap();

        let fd = finite_diff_gradient(
            |w| {
                let mut p = params.clone();
                p.set_flat(w);
                loss(&p, &init)
            },
            &params.flatten(),
            H,
        )
        .unwrap();
        assert_close("si weights", &gp.unwrap().flatten(), &fd);

        let fd = finite_diff_gradient(
            |x| {
                let mut i = init.clone();
                i.set_flat(x);
                loss(&params, &i)
            },
            &init.flatten(),
            H,
        )
        .unwrap();
        assert_close("si latents", &ga.flatten(), &fd);
    }
}

#[test]
fn library_certification_passes() {
    use glean_core::pvrnn::{certification_config, certify_gradients};
    for seed in [1, 2, 3] {
        for c in certify_gradients(&certification_config(), seed).unwrap() {
            assert!(c.worst_relative_error < TOL, "{}: {:e}", c.label, c.worst_relative_error);
        }
    }
}
