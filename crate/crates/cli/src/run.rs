//! Training and evaluation runs: per-retraining checkpoints, long-format
//! curves, aggregate statistics and a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use voradv_core::attacks::{AttackConfig, AttackKind, AttackTemplate};
use voradv_core::eval::{aggregate, linear_grid, robustness_curve, Aggregate, RobustnessCurve};
use voradv_core::geometry::{make_circles, make_planes, DatasetRole, GridDensity, LabeledDataset, ManifoldKind};
use voradv_core::net::MlpModel;
use voradv_core::training::{TrainConfig, TrainMode, TrainedModel, Trainer};

use crate::checkpoint;
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{read_dataset, stratified_indices, write_dataset};
use crate::error::{CliError, CliResult, IoContext};

/// Salt separating the test draw of generated circles from the train draw.
const TEST_SEED_SALT: u64 = 0x7465_7374;

/// One train/test pair; `codim` is set for generated data.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub codim: Option<usize>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn generate(kind: ManifoldKind, codim: usize, cfg: &ExperimentConfig) -> CliResult<(LabeledDataset, LabeledDataset)> {
    let DataSource::Generated { n_per_class, n_test_per_class, cover, .. } = &cfg.data else {
        return Err(CliError::config("dataset comes from files"));
    };
    Ok(match kind {
        ManifoldKind::Circles => {
            let train = make_circles(*n_per_class, codim, cfg.seed)?;
            let mut test = make_circles(*n_test_per_class, codim, cfg.seed ^ TEST_SEED_SALT)?;
            test.role = DatasetRole::Test;
            (train, test)
        }
        ManifoldKind::Planes => make_planes(GridDensity::Cover(*cover), codim)?,
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Vec<Prepared>> {
    match &cfg.data {
        DataSource::Files { train, test } => {
            let train = read_dataset(train)?;
            let test = read_dataset(test)?;
            if train.dim() != test.dim() {
                return Err(CliError::config("train and test dimensions differ"));
            }
            Ok(vec![Prepared { codim: train.spec.map(|s| s.d - 2), train, test }])
        }
        DataSource::Generated { kind, codims, .. } => codims
            .iter()
            .map(|&c| {
                let (train, test) = generate(*kind, c, cfg)?;
                Ok(Prepared { codim: Some(c), train, test })
            })
            .collect(),
    }
}

/// Scale of the data: the decision-axis reach for generated manifolds, 1 for
/// ingested data.
fn reach(ds: &LabeledDataset) -> Option<f64> {
    ds.spec.map(|s| s.reach_decision_axis)
}

pub fn train_config(cfg: &ExperimentConfig, train: &LabeledDataset) -> CliResult<TrainConfig> {
    let attack = match cfg.mode {
        TrainMode::Natural => {
            if cfg.train_attack.is_some() {
                return Err(CliError::config("natural training takes no train_attack"));
            }
            None
        }
        TrainMode::BallAdv => {
            let kind = cfg.train_attack.unwrap_or(AttackKind::BallPgd);
            let eps = cfg.train_epsilon;
            let mut a = match kind {
                AttackKind::Fgsm => AttackConfig::fgsm(cfg.norm, eps),
                AttackKind::Bim => AttackConfig::bim(cfg.norm, eps, cfg.train_iters),
                AttackKind::BallPgd => AttackConfig { iters: cfg.train_iters, ..AttackConfig::ball_pgd(cfg.norm, eps) },
                AttackKind::VoronoiPgd => return Err(CliError::config("ball training cannot use the voronoi attack")),
            };
            a.step = cfg.train_step.unwrap_or(voradv_core::attacks::DEFAULT_STEP_SCALE * eps / a.iters.max(1) as f64);
            Some(a)
        }
        TrainMode::VoronoiAdv => {
            if !matches!(cfg.train_attack, None | Some(AttackKind::VoronoiPgd)) {
                return Err(CliError::config("Voronoi training needs train_attack = voronoi"));
            }
            let step = cfg.train_step.unwrap_or_else(|| reach(train).map_or(0.01, |r| 0.05 * r));
            Some(AttackConfig::voronoi_pgd(cfg.norm, step, cfg.train_iters))
        }
    };
    let tc = TrainConfig {
        mode: cfg.mode,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        hidden: cfg.hidden,
        optimizer: cfg.optimizer_config()?,
        attack,
        m: cfg.m,
        retrainings: cfg.retrainings,
        seed: cfg.seed,
        early_stop_loss: cfg.early_stop_loss,
    };
    tc.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(tc)
}

pub fn eps_grid(cfg: &ExperimentConfig, test: &LabeledDataset) -> CliResult<Vec<f64>> {
    let eps_max = cfg.eps_max.unwrap_or_else(|| reach(test).map_or(0.5, |r| 0.5 * r));
    linear_grid(eps_max, cfg.eps_points).map_err(|e| CliError::config(e.to_string()))
}

pub fn suite(cfg: &ExperimentConfig) -> Vec<AttackTemplate> {
    cfg.attacks
        .iter()
        .map(|&k| match k {
            AttackKind::Fgsm => AttackTemplate::fgsm(cfg.norm),
            AttackKind::Bim => AttackTemplate::bim(cfg.norm, cfg.eval_iters),
            _ => AttackTemplate::ball_pgd(cfg.norm, cfg.eval_iters),
        })
        .collect()
}

pub fn eval_subset(cfg: &ExperimentConfig, test: &LabeledDataset) -> CliResult<LabeledDataset> {
    let keep = stratified_indices(&test.labels, cfg.eval_n, cfg.seed, "eval-subset")?;
    Ok(test.subset(&keep))
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub codim: Option<usize>,
    pub models: Vec<TrainedModel>,
    pub curves: Vec<RobustnessCurve>,
    pub aggregate: Aggregate,
    pub seconds: f64,
}

/// Evaluates every model on the configured grid and suite. Retraining `r`
/// attacks with seed `seed + r`.
pub fn evaluate(cfg: &ExperimentConfig, models: &[(usize, MlpModel)], test: &LabeledDataset) -> CliResult<Vec<RobustnessCurve>> {
    let test = eval_subset(cfg, test)?;
    let grid = eps_grid(cfg, &test)?;
    let suite = suite(cfg);
    models
        .par_iter()
        .map(|(r, m)| Ok(robustness_curve(m, &test, &suite, &grid, cfg.seed.wrapping_add(*r as u64))?))
        .collect()
}

pub fn run_cell(cfg: &ExperimentConfig, p: &Prepared) -> CliResult<CellOutcome> {
    let start = Instant::now();
    let tc = train_config(cfg, &p.train)?;
    let trainer = Trainer::new(&p.train, tc)?;
    let models: Vec<TrainedModel> = (0..cfg.retrainings)
        .into_par_iter()
        .map(|r| trainer.train_one(r))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, MlpModel)> = models.iter().map(|m| (m.retraining, m.model.clone())).collect();
    let curves = evaluate(cfg, &pairs, &p.test)?;
    let aggregate = aggregate(&curves)?;
    Ok(CellOutcome { codim: p.codim, models, curves, aggregate, seconds: start.elapsed().as_secs_f64() })
}

pub fn curves_csv(curves: &[RobustnessCurve], seeds: &[u64]) -> String {
    let mut s = String::from("epsilon,attack,accuracy,seed\n");
    for (c, seed) in curves.iter().zip(seeds) {
        let named = c.attacks.iter().map(|(n, a)| (n.as_str(), a)).chain([("min", &c.min_curve)]);
        for (name, acc) in named {
            for (e, a) in c.eps_grid.iter().zip(acc) {
                let _ = writeln!(s, "{e},{name},{a},{seed}");
            }
        }
    }
    s
}

pub fn aggregate_csv(a: &Aggregate) -> String {
    let mut s = String::from("epsilon,acc_mean,acc_std,nauc_mean,nauc_std\n");
    for i in 0..a.eps_grid.len() {
        let _ = writeln!(s, "{},{},{},{},{}", a.eps_grid[i], a.acc_mean[i], a.acc_std[i], a.nauc_mean, a.nauc_std);
    }
    s
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).at(path)
}

fn checkpoint_path(dir: &Path, r: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("model_{r:03}.mrlm"))
}

/// Writes one cell's outputs. Every file is produced here, on the calling
/// thread, after all parallel work has finished.
pub fn write_cell(dir: &Path, cfg: &ExperimentConfig, out: &CellOutcome) -> CliResult<()> {
    std::fs::create_dir_all(dir.join("checkpoints")).at(dir)?;
    write(&dir.join("config.txt"), &cfg.echo())?;
    for m in &out.models {
        checkpoint::save(&m.model, &checkpoint_path(dir, m.retraining))?;
    }
    let seeds: Vec<u64> = out.models.iter().map(|m| cfg.seed.wrapping_add(m.retraining as u64)).collect();
    write(&dir.join("curves.csv"), &curves_csv(&out.curves, &seeds))?;
    write(&dir.join("aggregate.csv"), &aggregate_csv(&out.aggregate))?;
    let mut manifest = cfg.echo();
    for (m, nauc) in out.models.iter().zip(&out.aggregate.naucs) {
        let r = m.retraining;
        let _ = writeln!(manifest, "final_loss_{r} = {}", m.final_loss());
        let _ = writeln!(manifest, "epochs_run_{r} = {}", m.epoch_losses.len());
        let _ = writeln!(manifest, "nauc_{r} = {nauc}");
    }
    let _ = writeln!(manifest, "nauc_mean = {}", out.aggregate.nauc_mean);
    let _ = writeln!(manifest, "nauc_std = {}", out.aggregate.nauc_std);
    let _ = writeln!(manifest, "wall_seconds = {:.3}", out.seconds);
    write(&dir.join("manifest.txt"), &manifest)
}

/// Config for one cell of a sweep: the same settings with a single codim.
fn cell_config(cfg: &ExperimentConfig, codim: Option<usize>, dir: &Path) -> ExperimentConfig {
    let mut c = cfg.clone();
    if let (DataSource::Generated { codims, .. }, Some(k)) = (&mut c.data, codim) {
        *codims = vec![k];
    }
    c.out = dir.to_path_buf();
    c
}

/// Runs every cell. A sweep over several codimensions writes one
/// subdirectory per codimension plus `sweep.csv`.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<Vec<CellOutcome>> {
    let cells = prepare(cfg)?;
    for p in &cells {
        train_config(cfg, &p.train)?;
        eps_grid(cfg, &p.test)?;
    }
    let sweep = cells.len() > 1;
    let mut outcomes = Vec::new();
    for p in &cells {
        let dir = match (sweep, p.codim) {
            (true, Some(c)) => cfg.out.join(format!("codim_{c}")),
            _ => cfg.out.clone(),
        };
        let cell_cfg = cell_config(cfg, p.codim, &dir);
        let out = run_cell(&cell_cfg, p)?;
        write_cell(&dir, &cell_cfg, &out)?;
        outcomes.push(out);
    }
    if sweep {
        let mut s = String::from("codim,nauc_mean,nauc_std\n");
        for o in &outcomes {
            let _ = writeln!(s, "{},{},{}", o.codim.unwrap_or(0), o.aggregate.nauc_mean, o.aggregate.nauc_std);
        }
        write(&cfg.out.join("sweep.csv"), &s)?;
    }
    Ok(outcomes)
}

/// Writes generated train/test files for every configured codimension.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let DataSource::Generated { kind, codims, .. } = &cfg.data else {
        return Err(CliError::config("gen-data generates; drop the train/test keys"));
    };
    let mut written = Vec::new();
    for &c in codims {
        let (train, test) = generate(*kind, c, cfg)?;
        for (ds, role) in [(&train, "train"), (&test, "test")] {
            let path = cfg.out.join(format!("{kind}_codim{c}_{role}.csv"));
            write_dataset(ds, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Re-evaluates the checkpoints of an existing run directory. Evaluation keys
/// given now override those recorded with the run; outputs go to `out`.
pub fn cmd_eval(cfg: &ExperimentConfig, overrides: &std::collections::BTreeMap<String, String>) -> CliResult<Aggregate> {
    let run_dir = cfg.run_dir.as_ref().ok_or_else(|| CliError::config("eval needs run_dir"))?;
    let recorded = crate::config::parse_pairs(&std::fs::read_to_string(run_dir.join("config.txt")).at(run_dir.join("config.txt"))?)?;
    let mut map = recorded;
    for k in ["attacks", "eval_iters", "eps_max", "eps_points", "eval_n", "norm", "out"] {
        if let Some(v) = overrides.get(k) {
            map.insert(k.to_string(), v.clone());
        }
    }
    if !overrides.contains_key("out") {
        map.insert("out".into(), run_dir.join("eval").display().to_string());
    }
    let ecfg = ExperimentConfig::from_map(&map)?;
    let cells = prepare(&ecfg)?;
    let p = cells.first().ok_or_else(|| CliError::config("run has no data"))?;
    let mut models = Vec::new();
    for r in 0..ecfg.retrainings {
        models.push((r, checkpoint::load(&checkpoint_path(run_dir, r))?));
    }
    let curves = evaluate(&ecfg, &models, &p.test)?;
    let agg = aggregate(&curves)?;
    std::fs::create_dir_all(&ecfg.out).at(&ecfg.out)?;
    let seeds: Vec<u64> = (0..ecfg.retrainings).map(|r| ecfg.seed.wrapping_add(r as u64)).collect();
    write(&ecfg.out.join("curves.csv"), &curves_csv(&curves, &seeds))?;
    write(&ecfg.out.join("aggregate.csv"), &aggregate_csv(&agg))?;
    Ok(agg)
}
