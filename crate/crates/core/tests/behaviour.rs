use glean_core::baselines::{train_fm, train_si, BaselineConfig};
use glean_core::numeric::SeededRng;
use glean_core::planner::{plan_fm, plan_glean, plan_si, FmInit, PlanRequest};
use glean_core::pvrnn::{
    regenerate_target, sequence_gradients, train, AdaptationVars, LayerConfig, ModelConfig, NetworkParams,
    NoiseTable,
};
use glean_core::Execution;

fn small(epochs: usize) -> ModelConfig {
    ModelConfig {
        layers: vec![
            LayerConfig {
                d_size: 6,
                z_size: 2,
                tau: 2.0,
                w: 0.01,
            },
            LayerConfig {
                d_size: 4,
                z_size: 1,
                tau: 4.0,
                w: 0.005,
            },
        ],
        w_init: 0.001,
        output_dim: 2,
        seq_len: 8,
        lr: 0.01,
        epochs,
        error_dropout: 0.0,
        seed: 11,
    }
}

/// Straight lines from the lower middle towards either upper corner.
fn targets(cfg: &ModelConfig) -> Vec<Vec<f64>> {
    [(0.2, 0.8), (0.8, 0.8), (0.25, 0.75), (0.75, 0.75)]
        .iter()
        .map(|&(gx, gy)| {
            (0..cfg.seq_len)
                .flat_map(|t| {
                    let a = t as f64 / (cfg.seq_len - 1) as f64;
                    [0.5 + a * (gx - 0.5), 0.2 + a * (gy - 0.2)]
                })
                .collect()
        })
        .collect()
}

#[test]
fn full_dropout_removes_the_accuracy_gradient() {
    let cfg = small(1);
    let mut rng = SeededRng::new(3);
    let params = NetworkParams::init(&cfg, &mut rng);
    let adapt = AdaptationVars::for_config(&cfg);
    let noise = NoiseTable::sample(&mut rng, cfg.seq_len, cfg.layout().z_total);
    let target = &targets(&cfg)[0];
    let none = vec![false; cfg.seq_len];
    let (_, g) = sequence_gradients(&params, &cfg, &adapt, target, &noise, &none).unwrap();
    // With every error dropped only the KLD drives the gradient; the output
    // layer never sees it.
    let gp = g.params.unwrap();
    let (_, out) = gp.blocks().into_iter().find(|(n, _)| n.starts_with("out")).unwrap();
    assert!(out.iter().all(|v| *v == 0.0), "{out:?}");

    let all = vec![true; cfg.seq_len];
    let (_, g) = sequence_gradients(&params, &cfg, &adapt, target, &noise, &all).unwrap();
    let gp = g.params.unwrap();
    let (_, out) = gp.blocks().into_iter().find(|(n, _)| n.starts_with("out")).unwrap();
    assert!(out.iter().any(|v| *v != 0.0));
}

#[test]
fn training_and_regeneration_are_reproducible_across_modes() {
    let cfg = small(30);
    let data = targets(&cfg);
    let a = train(&data, &cfg, Execution::Sequential).unwrap();
    let b = train(&data, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a.params.flatten(), b.params.flatten());
    assert_eq!(a.history, b.history);

    let r1 = regenerate_target(&a.params, &a.adaptation[0], &cfg, 9, 5, Execution::Sequential).unwrap();
    let r2 = regenerate_target(&a.params, &a.adaptation[0], &cfg, 9, 5, Execution::Parallel).unwrap();
    for (x, y) in r1.iter().zip(&r2) {
        assert_eq!(x.x, y.x);
    }
    let r3 = regenerate_target(&a.params, &a.adaptation[0], &cfg, 10, 5, Execution::Sequential).unwrap();
    assert_ne!(r1[0].x, r3[0].x);
}

fn request(cfg: &ModelConfig, seed: u64) -> PlanRequest {
    let mut r = PlanRequest::new(vec![0.5, 0.2], vec![0.8, 0.8], cfg.seq_len, seed);
    r.epochs = 40;
    r.n_candidates = 4;
    r
}

#[test]
fn glean_keeps_weights_frozen_and_returns_the_best_candidate() {
    let cfg = small(20);
    let m = train(&targets(&cfg), &cfg, Execution::Sequential).unwrap();
    let before = m.params.flatten();
    let req = request(&cfg, 5);
    let p = plan_glean(&m.params, &cfg, &req, Execution::Sequential).unwrap();
    assert_eq!(m.params.flatten(), before);
    assert_eq!(p.candidate_bounds.len(), 4);
    let best = p.candidate_bounds[p.best].unwrap();
    assert_eq!(best, p.report.elbo);
    assert!(p.candidate_bounds.iter().flatten().all(|b| *b <= best));
    assert_eq!(p.trajectory.len(), cfg.seq_len * 2);
    let again = plan_glean(&m.params, &cfg, &req, Execution::Parallel).unwrap();
    assert_eq!(again, p);
}

#[test]
fn si_planning_is_deterministic() {
    let cfg = small(20);
    let m = train_si(&targets(&cfg), &BaselineConfig::si(cfg.clone()), Execution::Sequential).unwrap();
    let req = request(&cfg, 7);
    let a = plan_si(&m, &req, Execution::Sequential).unwrap();
    let b = plan_si(&m, &req, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert!(a.candidate_bounds.iter().flatten().all(|v| *v <= a.report.elbo));
}

#[test]
fn fm_replicate_runs_one_candidate_and_rejects_bad_requests() {
    let cfg = small(20);
    let m = train_fm(&targets(&cfg), &BaselineConfig::fm(cfg.clone()), Execution::Sequential).unwrap();
    let req = request(&cfg, 1);
    let p = plan_fm(&m, &req, FmInit::Replicate, Execution::Sequential).unwrap();
    assert_eq!(p.candidate_bounds.len(), 1);
    assert_eq!(&p.trajectory[..2], &req.initial[..]);

    let mut bad = req.clone();
    bad.n_candidates = 0;
    assert!(plan_fm(&m, &bad, FmInit::Random, Execution::Sequential).is_err());
    let mut bad = req.clone();
    bad.goal = vec![1.5, 0.5];
    assert!(plan_fm(&m, &bad, FmInit::Replicate, Execution::Sequential).is_err());
    let mut bad = req;
    bad.steps += 1;
    assert!(plan_fm(&m, &bad, FmInit::Replicate, Execution::Sequential).is_err());
}
