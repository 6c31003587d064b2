//! The experiment stages. Each reads its inputs from earlier stages (or
//! explicit checkpoint paths), checks that they exist before computing
//! anything, and writes one stage directory.

use std::path::{Path, PathBuf};

use glean_core::baselines::{
    driven_rollout, fm_teacher_plan, si_plan, si_rollout, train_fm, train_si, TrainedFm, TrainedSi,
};
use glean_core::checkpoint::{Checkpoint, ModelKind};
use glean_core::dataset::{
    flat_targets, generate_center_goal_set, generate_dataset, load_trajectories, save_trajectories, Point,
    Trajectory,
};
use glean_core::numeric::{domain_seed, SeededRng};
use glean_core::planner::{
    one_step_lookahead, plan_fm, plan_glean, plan_si, LookaheadModel, LookaheadOptions, PlanRequest, PlanResult,
};
use glean_core::pvrnn::{
    elbo, forward_prior, kld_per_step, prior_rollouts, regenerate_target, rollout, train_with_progress,
    MetaPrior, NoiseTable, Sampling, TrainedModel,
};
use glean_core::{Error, Execution, Result};

use crate::metrics::{
    endpoint, kld_csv, kld_spike_ratio, kld_timeseries, plan_metrics, region_name, rmse, GoalDistribution,
    Metrics,
};
use crate::record::{stage_dir, Group, RunRecord, StageDir, Timing};
use crate::spec::ExperimentSpec;

pub const STAGE_DATA: &str = "data";
pub const STAGE_TRAIN: &str = "train";
pub const STAGE_PRIOR: &str = "prior-gen";
pub const STAGE_REGEN: &str = "target-regen";
pub const STAGE_PLAN: &str = "plan";
pub const STAGE_LOOKAHEAD: &str = "lookahead";
pub const STAGE_COMPARE: &str = "compare";

pub const STAGES: [&str; 7] = [
    STAGE_DATA,
    STAGE_TRAIN,
    STAGE_PRIOR,
    STAGE_REGEN,
    STAGE_PLAN,
    STAGE_LOOKAHEAD,
    STAGE_COMPARE,
];

/// Bounding box of the training data is inflated by this much for the
/// confinement check on planned trajectories.
pub const CONFINEMENT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub spec: ExperimentSpec,
    pub out_dir: PathBuf,
    pub exec: Execution,
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing {what}: {}", path.display())))
    }
}

fn meta_kind() -> Option<&'static str> {
    Some(ModelKind::Pvrnn.tag())
}

fn trajectory_csv(rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> String {
    let mut s = String::from("id,t,x,y\n");
    for (id, flat) in rows {
        for (t, p) in flat.chunks_exact(2).enumerate() {
            s.push_str(&format!("{id},{t},{},{}\n", p[0], p[1]));
        }
    }
    s
}

fn max_step(flat: &[f64]) -> f64 {
    flat.chunks_exact(2)
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

impl Pipeline {
    pub fn new(spec: ExperimentSpec, out_dir: impl Into<PathBuf>, exec: Execution) -> Self {
        Self {
            spec,
            out_dir: out_dir.into(),
            exec,
        }
    }

    pub fn data_path(&self, set: &str) -> PathBuf {
        stage_dir(&self.out_dir, STAGE_DATA).join(format!("{set}.csv"))
    }

    pub fn checkpoint_path(&self, model: &str) -> PathBuf {
        self.spec
            .checkpoints
            .get(model)
            .cloned()
            .unwrap_or_else(|| stage_dir(&self.out_dir, STAGE_TRAIN).join(format!("{model}.ckpt")))
    }

    pub fn record_path(&self, stage: &str) -> PathBuf {
        stage_dir(&self.out_dir, stage).join("record.json")
    }

    fn preflight(&self, sets: &[&str], models: &[&str]) -> Result<()> {
        for s in sets {
            require(&self.data_path(s), &format!("{s} data (run `gen-data` first)"))?;
        }
        for m in models {
            require(&self.checkpoint_path(m), &format!("{m} checkpoint (run `train` first)"))?;
        }
        Ok(())
    }

    fn load_set(&self, set: &str) -> Result<Vec<Trajectory>> {
        let v = load_trajectories(&self.data_path(set))?;
        for t in &v {
            if t.len() != self.spec.data.steps {
                return Err(Error::Config(format!(
                    "{set} trajectory {} has {} steps, the spec expects {}",
                    t.id,
                    t.len(),
                    self.spec.data.steps
                )));
            }
        }
        Ok(v)
    }

    fn load_pvrnn(&self, name: &str) -> Result<TrainedModel> {
        match Checkpoint::load_kind(&self.checkpoint_path(name), ModelKind::Pvrnn)? {
            Checkpoint::Pvrnn(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    fn load_fm(&self) -> Result<TrainedFm> {
        match Checkpoint::load_kind(&self.checkpoint_path("fm"), ModelKind::Fm)? {
            Checkpoint::Fm(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    fn load_si(&self) -> Result<TrainedSi> {
        match Checkpoint::load_kind(&self.checkpoint_path("si"), ModelKind::Si)? {
            Checkpoint::Si(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    /// Seed shared by every model's plan for test item `j`, repetition `r`,
    /// so models are compared on identical random streams.
    pub fn plan_seed(&self, set: &str, j: usize, r: usize) -> u64 {
        domain_seed(self.spec.seed_for("plan"), &format!("{set}/{j}/{r}"))
    }

    fn request(&self, truth: &Trajectory, seed: u64) -> PlanRequest {
        let p = &self.spec.plan;
        PlanRequest {
            initial: truth.start().to_vec(),
            goal: truth.end().to_vec(),
            steps: self.spec.data.steps,
            rate: p.rate,
            epochs: p.epochs,
            n_candidates: p.candidates,
            seed,
        }
    }

    pub fn gen_data(&self) -> Result<RunRecord> {
        let spec = &self.spec;
        let d = &spec.data;
        let geo = spec.geometry();
        let dir = StageDir::create(&self.out_dir, STAGE_DATA)?;
        let mut timing = Timing::default();
        let sets = timing.time("generate", || -> Result<_> {
            Ok([
                ("train", generate_dataset(spec.seed_for("data/train"), d.train, d.steps, &geo, d.noise_scale)?),
                ("test", generate_dataset(spec.seed_for("data/test"), d.test, d.steps, &geo, d.noise_scale)?),
                (
                    "center",
                    generate_center_goal_set(spec.seed_for("data/center"), d.center, d.steps, &geo, d.noise_scale)?,
                ),
            ])
        })?;
        let mut groups = Vec::new();
        for (name, set) in &sets {
            save_trajectories(&dir.file(&format!("{name}.csv")), set)?;
            let items = set
                .iter()
                .map(|t| Metrics {
                    id: t.id.to_string(),
                    region: Some(region_name(&geo, t.end()).to_string()),
                    ..Metrics::default()
                })
                .collect();
            let ends: Vec<Point> = set.iter().map(Trajectory::end).collect();
            groups.push(
                Group::new(*name, None, items)
                    .with_distribution(GoalDistribution::of(&ends, &geo))
                    .scalar("max_step", set.iter().map(Trajectory::max_step).fold(0.0, f64::max)),
            );
        }
        let record = RunRecord::new(STAGE_DATA, spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    pub fn train(&self) -> Result<RunRecord> {
        self.preflight(&["train"], &[])?;
        let set = self.load_set("train")?;
        let targets = flat_targets(&set);
        let dir = StageDir::create(&self.out_dir, STAGE_TRAIN)?;
        let mut timing = Timing::default();
        let mut groups = Vec::new();
        let eval_seed = self.spec.seed_for("train-eval");

        for meta in MetaPrior::ALL {
            let name = meta.name();
            let config = self.spec.model_config(meta);
            let mut history_csv = String::from("epoch,accuracy,complexity,elbo,kld_pq\n");
            let model = timing.time(name, || {
                train_with_progress(&targets, &config, self.exec, |e, r| {
                    history_csv.push_str(&format!(
                        "{e},{},{},{},{}\n",
                        r.accuracy, r.complexity, r.elbo, r.kld_pq
                    ));
                })
            })?;
            Checkpoint::Pvrnn(model.clone()).save(&dir.file(&format!("{name}.ckpt")))?;
            dir.write(&format!("{name}_history.csv"), &history_csv)?;
            // Posterior reconstruction of every training sequence.
            let width = config.layout().z_total;
            let items = self
                .exec
                .map(set.len(), |i| -> Result<Metrics> {
                    let noise = NoiseTable::sample(&mut SeededRng::derived(eval_seed, i as u64), config.seq_len, width);
                    let a = &model.adaptation[i];
                    let tr = rollout(&model.params, &config, Some(a), &noise, Sampling::posterior(a.steps))?;
                    let rep = elbo(&tr, &targets[i], &config)?;
                    Ok(Metrics {
                        id: i.to_string(),
                        rmse: Some(rmse(&tr.x, &targets[i])?),
                        kld_pq: Some(rep.kld_pq),
                        ..Metrics::default()
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let last = model.final_report().copied().unwrap_or_default();
            groups.push(
                Group::new(name, meta_kind(), items)
                    .scalar("final_accuracy", last.accuracy)
                    .scalar("final_complexity", last.complexity)
                    .scalar("final_elbo", last.elbo)
                    .scalar("final_kld_pq", last.kld_pq),
            );
        }

        let fm_cfg = self.spec.fm_config();
        let fm = timing.time("fm", || train_fm(&targets, &fm_cfg, self.exec))?;
        Checkpoint::Fm(fm.clone()).save(&dir.file("fm.ckpt"))?;
        dir.write(
            "fm_history.csv",
            &std::iter::once("epoch,loss\n".to_string())
                .chain(fm.history.iter().enumerate().map(|(e, l)| format!("{e},{l}\n")))
                .collect::<String>(),
        )?;
        let items = targets
            .iter()
            .enumerate()
            .map(|(i, t)| -> Result<Metrics> {
                let m = &fm.config.model;
                let x = driven_rollout(&fm.params.net, m, None, &fm_teacher_plan(t, m.output_dim))?.x;
                Ok(Metrics {
                    id: i.to_string(),
                    rmse: Some(rmse(&x, &t[m.output_dim..])?),
                    ..Metrics::default()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(
            Group::new("fm", Some(ModelKind::Fm.tag()), items)
                .scalar("final_loss", fm.history.last().copied().unwrap_or(f64::NAN)),
        );

        let si_cfg = self.spec.si_config();
        let si = timing.time("si", || train_si(&targets, &si_cfg, self.exec))?;
        Checkpoint::Si(si.clone()).save(&dir.file("si.ckpt"))?;
        dir.write(
            "si_history.csv",
            &std::iter::once("epoch,loss,weighted_kld\n".to_string())
                .chain(si.history.iter().enumerate().map(|(e, (l, k))| format!("{e},{l},{k}\n")))
                .collect::<String>(),
        )?;
        let items = targets
            .iter()
            .enumerate()
            .map(|(i, t)| -> Result<Metrics> {
                let m = &si.config.model;
                let plan = si_plan(None, m.seq_len, m.output_dim, 1.0);
                let eps = vec![0.0; si.adaptation[i].mu.len()];
                let tr = si_rollout(&si.params, m, &si.adaptation[i], &eps, &plan)?;
                Ok(Metrics {
                    id: i.to_string(),
                    rmse: Some(rmse(&tr.inner.x, t)?),
                    kld_pq: Some(tr.kld()),
                    ..Metrics::default()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, kld) = si.history.last().copied().unwrap_or((f64::NAN, f64::NAN));
        groups.push(
            Group::new("si", Some(ModelKind::Si.tag()), items)
                .scalar("final_loss", loss)
                .scalar("final_weighted_kld", kld),
        );

        let record = RunRecord::new(STAGE_TRAIN, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    pub fn prior_gen(&self) -> Result<RunRecord> {
        let names: Vec<&str> = MetaPrior::ALL.iter().map(|m| m.name()).collect();
        self.preflight(&[], &names)?;
        let models = names.iter().map(|n| self.load_pvrnn(n)).collect::<Result<Vec<_>>>()?;
        let dir = StageDir::create(&self.out_dir, STAGE_PRIOR)?;
        let mut timing = Timing::default();
        let geo = self.spec.geometry();
        let mut groups = Vec::new();
        for (name, m) in names.iter().zip(&models) {
            let seed = self.spec.seed_for(&format!("prior-gen/{name}"));
            let traces = timing.time(*name, || {
                prior_rollouts(&m.params, &m.config, seed, self.spec.prior_rollouts, self.exec)
            })?;
            let ends: Vec<Point> = traces.iter().map(|t| endpoint(&t.x)).collect();
            let items = ends
                .iter()
                .enumerate()
                .map(|(i, &e)| Metrics {
                    id: i.to_string(),
                    region: Some(region_name(&geo, e).to_string()),
                    ..Metrics::default()
                })
                .collect();
            dir.write(
                &format!("rollouts_{name}.csv"),
                &trajectory_csv(traces.iter().enumerate().map(|(i, t)| (i.to_string(), t.x.clone()))),
            )?;
            groups.push(Group::new(*name, meta_kind(), items).with_distribution(GoalDistribution::of(&ends, &geo)));
        }
        let record = RunRecord::new(STAGE_PRIOR, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    pub fn target_regen(&self) -> Result<RunRecord> {
        let names: Vec<&str> = MetaPrior::ALL.iter().map(|m| m.name()).collect();
        self.preflight(&["train"], &names)?;
        let set = self.load_set("train")?;
        let label = self.spec.regen_label;
        let source = set
            .iter()
            .position(|t| t.label == label)
            .ok_or_else(|| Error::Config(format!("no {} trajectory in the training set", label.name())))?;
        let models = names.iter().map(|n| self.load_pvrnn(n)).collect::<Result<Vec<_>>>()?;
        for m in &models {
            if m.adaptation.len() != set.len() {
                return Err(Error::Config(format!(
                    "checkpoint holds {} posteriors but the training set has {} sequences",
                    m.adaptation.len(),
                    set.len()
                )));
            }
        }
        let dir = StageDir::create(&self.out_dir, STAGE_REGEN)?;
        let mut timing = Timing::default();
        let geo = self.spec.geometry();
        let mut groups = Vec::new();
        for (name, m) in names.iter().zip(&models) {
            let seed = self.spec.seed_for(&format!("target-regen/{name}"));
            let traces = timing.time(*name, || {
                regenerate_target(
                    &m.params,
                    &m.adaptation[source],
                    &m.config,
                    seed,
                    self.spec.regen_rollouts,
                    self.exec,
                )
            })?;
            let klds: Vec<Vec<Vec<f64>>> = traces.iter().map(kld_per_step).collect();
            let series = kld_timeseries(&klds)?;
            dir.write(&format!("kld_{name}.csv"), &kld_csv(&series))?;
            dir.write(
                &format!("rollouts_{name}.csv"),
                &trajectory_csv(traces.iter().enumerate().map(|(i, t)| (i.to_string(), t.x.clone()))),
            )?;
            let ends: Vec<Point> = traces.iter().map(|t| endpoint(&t.x)).collect();
            let items = ends
                .iter()
                .zip(&klds)
                .enumerate()
                .map(|(i, (&e, k))| Metrics {
                    id: i.to_string(),
                    kld_pq: Some(k.iter().flatten().sum()),
                    region: Some(region_name(&geo, e).to_string()),
                    ..Metrics::default()
                })
                .collect();
            let mut g = Group::new(*name, meta_kind(), items)
                .with_distribution(GoalDistribution::of(&ends, &geo))
                .scalar("source_sequence", source as f64);
            if let Some(r) = kld_spike_ratio(&series) {
                g = g.scalar("kld_spike_ratio", r);
            }
            groups.push(g);
        }
        let record = RunRecord::new(STAGE_REGEN, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    fn glean_group(
        &self,
        name: &str,
        model: &TrainedModel,
        set_name: &str,
        set: &[Trajectory],
        timing: &mut Timing,
    ) -> Result<(Group, Vec<PlanResult>)> {
        let reps = self.spec.plan.repetitions;
        let geo = self.spec.geometry();
        let results = timing.time(format!("{name}/{set_name}"), || {
            self.exec
                .map(set.len() * reps, |k| {
                    let (j, r) = (k / reps, k % reps);
                    let req = self.request(&set[j], self.plan_seed(set_name, j, r));
                    plan_glean(&model.params, &model.config, &req, Execution::Sequential)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })?;
        let items = self.plan_items(set, &results, true, &geo)?;
        Ok((Group::new(format!("{name}/{set_name}"), meta_kind(), items), results))
    }

    fn plan_items(
        &self,
        set: &[Trajectory],
        results: &[PlanResult],
        with_kld: bool,
        geo: &glean_core::dataset::TaskGeometry,
    ) -> Result<Vec<Metrics>> {
        let reps = self.spec.plan.repetitions;
        results
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let t = &set[k / reps];
                plan_metrics(
                    format!("{}/{}", k / reps, k % reps),
                    &p.trajectory,
                    &t.flat(),
                    t.end(),
                    with_kld.then_some(p.report.kld_pq),
                    geo,
                )
            })
            .collect()
    }

    fn plans_csv(results: &[PlanResult], reps: usize) -> String {
        trajectory_csv(
            results
                .iter()
                .enumerate()
                .map(|(k, p)| (format!("{}/{}", k / reps, k % reps), p.trajectory.clone())),
        )
    }

    pub fn plan(&self) -> Result<RunRecord> {
        let names: Vec<&str> = MetaPrior::ALL.iter().map(|m| m.name()).collect();
        self.preflight(&["train", "test", "center"], &names)?;
        let train = self.load_set("train")?;
        let test = self.load_set("test")?;
        let center = self.load_set("center")?;
        let models = names.iter().map(|n| self.load_pvrnn(n)).collect::<Result<Vec<_>>>()?;
        let dir = StageDir::create(&self.out_dir, STAGE_PLAN)?;
        let mut timing = Timing::default();
        let reps = self.spec.plan.repetitions;

        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for t in &train {
            for p in &t.points {
                for i in 0..2 {
                    lo[i] = lo[i].min(p[i] - CONFINEMENT_MARGIN);
                    hi[i] = hi[i].max(p[i] + CONFINEMENT_MARGIN);
                }
            }
        }
        let confined = |flat: &[f64]| {
            flat.chunks_exact(2)
                .all(|p| (0..2).all(|i| p[i] >= lo[i] && p[i] <= hi[i]))
        };

        let mut groups = Vec::new();
        for (name, m) in names.iter().zip(&models) {
            let (g, results) = self.glean_group(name, m, "test", &test, &mut timing)?;
            let inside = results.iter().filter(|p| confined(&p.trajectory)).count();
            groups.push(g.scalar("confined_percent", 100.0 * inside as f64 / results.len() as f64));
            dir.write(&format!("plans_{name}_test.csv"), &Self::plans_csv(&results, reps))?;
        }
        let inter = names.iter().position(|n| *n == MetaPrior::Intermediate.name()).expect("present");
        let (g, results) = self.glean_group(names[inter], &models[inter], "center", &center, &mut timing)?;
        groups.push(g);
        dir.write("plans_intermediate_center.csv", &Self::plans_csv(&results, reps))?;

        let record = RunRecord::new(STAGE_PLAN, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    pub fn lookahead(&self) -> Result<RunRecord> {
        let inter = MetaPrior::Intermediate.name();
        self.preflight(&["test"], &[inter, "fm", "si"])?;
        let test = self.load_set("test")?;
        let glean = self.load_pvrnn(inter)?;
        let fm = self.load_fm()?;
        let si = self.load_si()?;
        let dir = StageDir::create(&self.out_dir, STAGE_LOOKAHEAD)?;
        let mut timing = Timing::default();
        let l = &self.spec.lookahead;
        let seqs = &test[..l.sequences];
        let base_seed = self.spec.seed_for("lookahead");
        let opts = LookaheadOptions {
            window: l.window.unwrap_or(usize::MAX),
            regression_epochs: l.regression_epochs,
            si_epochs: l.si_epochs,
            rate: l.rate,
        };
        let models: [(&str, &str, LookaheadModel<'_>); 3] = [
            (
                "glean",
                ModelKind::Pvrnn.tag(),
                LookaheadModel::Glean {
                    params: &glean.params,
                    config: &glean.config,
                },
            ),
            ("si", ModelKind::Si.tag(), LookaheadModel::Si(&si)),
            ("fm", ModelKind::Fm.tag(), LookaheadModel::Fm(&fm)),
        ];
        let mut groups = Vec::new();
        for (name, kind, model) in models {
            let results = timing.time(name, || {
                self.exec
                    .map(seqs.len(), |j| one_step_lookahead(model, &seqs[j].flat(), &opts))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()
            })?;
            let items = results
                .iter()
                .enumerate()
                .map(|(j, r)| Metrics {
                    id: j.to_string(),
                    rmse: Some(r.rmse),
                    ..Metrics::default()
                })
                .collect();
            dir.write(
                &format!("lookahead_{name}.csv"),
                &trajectory_csv(results.iter().enumerate().map(|(j, r)| (j.to_string(), r.predictions.clone()))),
            )?;
            let mut g = Group::new(name, Some(kind), items);
            if name == "glean" {
                // Reference: the same sequences against free-running prior rollouts.
                let prior = seqs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| -> Result<f64> {
                        let mut rng = SeededRng::new(domain_seed(base_seed, &format!("prior/{j}")));
                        let tr = forward_prior(&glean.params, &glean.config, &mut rng, glean.config.seq_len)?;
                        rmse(&tr.x[2..], &t.flat()[2..])
                    })
                    .collect::<Result<Vec<_>>>()?;
                g = g.scalar("prior_rollout_rmse_mean", prior.iter().sum::<f64>() / prior.len() as f64);
            }
            groups.push(g);
        }
        let record = RunRecord::new(STAGE_LOOKAHEAD, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    pub fn compare(&self) -> Result<RunRecord> {
        let inter = MetaPrior::Intermediate.name();
        self.preflight(&["train", "test"], &[inter, "fm", "si"])?;
        let train = self.load_set("train")?;
        let test = self.load_set("test")?;
        let glean = self.load_pvrnn(inter)?;
        let fm = self.load_fm()?;
        let si = self.load_si()?;
        let dir = StageDir::create(&self.out_dir, STAGE_COMPARE)?;
        let mut timing = Timing::default();
        let geo = self.spec.geometry();
        let reps = self.spec.plan.repetitions;
        let n = test.len() * reps;

        let (g, glean_plans) = self.glean_group("glean", &glean, "test", &test, &mut timing)?;
        let mut groups = vec![Group { name: "glean".into(), ..g }];
        dir.write("plans_glean.csv", &Self::plans_csv(&glean_plans, reps))?;

        let si_plans = timing.time("si", || {
            self.exec
                .map(n, |k| {
                    let req = self.request(&test[k / reps], self.plan_seed("test", k / reps, k % reps));
                    plan_si(&si, &req, Execution::Sequential)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })?;
        groups.push(Group::new("si", Some(ModelKind::Si.tag()), self.plan_items(&test, &si_plans, true, &geo)?));
        dir.write("plans_si.csv", &Self::plans_csv(&si_plans, reps))?;

        let fm_plans = timing.time("fm", || {
            self.exec
                .map(n, |k| {
                    let req = self.request(&test[k / reps], self.plan_seed("test", k / reps, k % reps));
                    plan_fm(&fm, &req, self.spec.plan.fm_init, Execution::Sequential)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })?;
        // Largest step between consecutive planned inputs, against the data.
        let input_step = fm_plans.iter().map(|p| max_step(&p.decision)).fold(0.0, f64::max);
        let data_step = train.iter().map(Trajectory::max_step).fold(0.0, f64::max);
        groups.push(
            Group::new("fm", Some(ModelKind::Fm.tag()), self.plan_items(&test, &fm_plans, false, &geo)?)
                .scalar("max_input_step", input_step)
                .scalar("training_max_step", data_step),
        );
        dir.write("plans_fm.csv", &Self::plans_csv(&fm_plans, reps))?;
        dir.write(
            "inputs_fm.csv",
            &trajectory_csv(
                fm_plans
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (format!("{}/{}", k / reps, k % reps), p.decision.clone())),
            ),
        )?;

        let record = RunRecord::new(STAGE_COMPARE, &self.spec, groups);
        dir.finish(&record, &timing)?;
        Ok(record)
    }

    /// Runs one stage by name.
    pub fn run_stage(&self, stage: &str) -> Result<RunRecord> {
        match stage {
            STAGE_DATA => self.gen_data(),
            STAGE_TRAIN => self.train(),
            STAGE_PRIOR => self.prior_gen(),
            STAGE_REGEN => self.target_regen(),
            STAGE_PLAN => self.plan(),
            STAGE_LOOKAHEAD => self.lookahead(),
            STAGE_COMPARE => self.compare(),
            other => Err(Error::Config(format!("unknown stage `{other}`"))),
        }
    }

    /// Loads every completed stage record under the out-dir.
    pub fn records(&self) -> Result<Vec<RunRecord>> {
        STAGES
            .iter()
            .map(|s| stage_dir(&self.out_dir, s))
            .filter(|d| crate::record::is_complete(d))
            .map(|d| RunRecord::load(&d.join("record.json")))
            .collect()
    }
}
