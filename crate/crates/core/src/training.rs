//! Natural, ball-adversarial and Voronoi-adversarial training of the MLP.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::attacks::{ball_pgd, fgsm, voronoi_pgd, AttackConfig, AttackKind};
use crate::error::{Error, Result};
use crate::geometry::{DatasetRole, LabeledDataset};
use crate::net::{MlpDims, MlpModel, DEFAULT_HIDDEN};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{substream, ATTACK, INIT, SHUFFLE};
use crate::voronoi::{constraint_sets, ConstraintSet, NeighborIndex};

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_M: usize = 10;
pub const EARLY_STOP_LOSS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    Natural,
    BallAdv,
    VoronoiAdv,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Natural => "natural",
            TrainMode::BallAdv => "ball",
            TrainMode::VoronoiAdv => "voronoi",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "natural" => Ok(TrainMode::Natural),
            "ball" | "balladv" | "ball_adv" | "madry" => Ok(TrainMode::BallAdv),
            "voronoi" | "voronoiadv" | "voronoi_adv" => Ok(TrainMode::VoronoiAdv),
            other => Err(Error::invalid(format!("unknown training mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub hidden: usize,
    pub optimizer: OptimizerConfig,
    /// Inner maximization; `None` for natural training.
    pub attack: Option<AttackConfig>,
    pub m: usize,
    pub retrainings: usize,
    pub seed: u64,
    /// Stop once an epoch's mean loss falls below this; 0 disables.
    pub early_stop_loss: f64,
}

impl TrainConfig {
    pub fn natural(seed: u64) -> Self {
        TrainConfig {
            mode: TrainMode::Natural,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            hidden: DEFAULT_HIDDEN,
            optimizer: OptimizerConfig::default(),
            attack: None,
            m: DEFAULT_M,
            retrainings: 1,
            seed,
            early_stop_loss: EARLY_STOP_LOSS,
        }
    }

    pub fn ball(seed: u64, attack: AttackConfig) -> Self {
        TrainConfig { mode: TrainMode::BallAdv, attack: Some(attack), ..Self::natural(seed) }
    }

    pub fn voronoi(seed: u64, attack: AttackConfig, m: usize) -> Self {
        TrainConfig { mode: TrainMode::VoronoiAdv, attack: Some(attack), m, ..Self::natural(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.retrainings == 0 {
            return Err(Error::invalid("retrainings must be at least 1"));
        }
        if self.epochs == 0 || self.hidden == 0 {
            return Err(Error::invalid("epochs and hidden must be positive"));
        }
        if !(self.early_stop_loss >= 0.0) {
            return Err(Error::invalid("early_stop_loss must be >= 0"));
        }
        self.optimizer.validate()?;
        match (self.mode, &self.attack) {
            (TrainMode::Natural, None) => Ok(()),
            (TrainMode::Natural, Some(_)) => Err(Error::invalid("natural training takes no attack")),
            (TrainMode::BallAdv, Some(a)) if a.kind.is_ball() => a.validate(),
            (TrainMode::BallAdv, _) => Err(Error::invalid("ball training needs an fgsm, bim or pgd attack with an epsilon")),
            (TrainMode::VoronoiAdv, Some(a)) if a.kind == AttackKind::VoronoiPgd => {
                if self.m == 0 {
                    return Err(Error::invalid("Voronoi training needs m >= 1"));
                }
                a.validate()
            }
            (TrainMode::VoronoiAdv, _) => Err(Error::invalid("Voronoi training needs a voronoi attack")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub retraining: usize,
    /// Mean training loss of every completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainedModel {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Precomputed per-run state shared by all retrainings.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    data: &'a LabeledDataset,
    cfg: TrainConfig,
    dims: MlpDims,
    constraints: Vec<ConstraintSet>,
}

impl<'a> Trainer<'a> {
    /// Validates everything up front. Constraint sets depend only on the
    /// fixed training set, so they are built once here.
    pub fn new(data: &'a LabeledDataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.role != DatasetRole::Train {
            return Err(Error::invalid("training needs a dataset with role train"));
        }
        if data.is_empty() || !data.labels_contiguous() || data.n_classes() < 2 {
            return Err(Error::invalid("training labels must be contiguous in 1..=C with C >= 2"));
        }
        let dims = MlpDims::new(data.dim(), cfg.hidden, data.n_classes())?;
        let constraints = match (cfg.mode, cfg.attack) {
            (TrainMode::VoronoiAdv, Some(a)) => {
                let index = NeighborIndex::new(data.points.clone(), data.labels.clone(), a.norm)?;
                constraint_sets(&index, cfg.m)?
            }
            _ => Vec::new(),
        };
        Ok(Trainer { data, cfg, dims, constraints })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn constraints(&self) -> &[ConstraintSet] {
        &self.constraints
    }

    pub fn train_one(&self, r: usize) -> Result<TrainedModel> {
        self.train_one_observed(r, |_, _| {})
    }

    /// Like [`train_one`](Self::train_one) but reports every training
    /// input (after the inner attack) with the index of its source example.
    pub fn train_one_observed<F: FnMut(usize, &[f64])>(&self, r: usize, mut observe: F) -> Result<TrainedModel> {
        let seed = self.cfg.seed.wrapping_add(r as u64);
        let mut init_rng = substream(seed, INIT);
        let mut shuffle_rng = substream(seed, SHUFFLE);
        let mut attack_rng = substream(seed, ATTACK);
        let mut model = MlpModel::init(self.dims, &mut init_rng);
        let mut opt = Optimizer::new(self.cfg.optimizer, self.dims.n_params());

        let n = self.data.len();
        let batch = if self.cfg.batch_size == 0 { n } else { self.cfg.batch_size.min(n) };
        let mut order: Vec<usize> = (0..n).collect();
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(batch);
        let mut grads = alloc::vec![0.0; self.dims.n_params()];
        let mut epoch_losses = Vec::new();

        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                inputs.clear();
                for &i in chunk {
                    let x = self.data.points.row(i);
                    let y = self.data.labels[i];
                    let adv = match self.cfg.attack {
                        None => x.to_vec(),
                        Some(a) => match a.kind {
                            AttackKind::Fgsm => fgsm(&model, x, y, a.epsilon, a.norm)?,
                            AttackKind::Bim | AttackKind::BallPgd => ball_pgd(&model, x, y, &a, &mut attack_rng)?,
                            AttackKind::VoronoiPgd => voronoi_pgd(&model, x, y, &self.constraints[i], &a)?,
                        },
                    };
                    observe(i, &adv);
                    inputs.push(adv);
                }
                grads.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for (x, &i) in inputs.iter().zip(chunk) {
                    total += model.accumulate_param_grads(x, self.data.labels[i], scale, &mut grads)?;
                }
                opt.step(model.params_mut(), &grads)?;
            }
            let mean = total / n as f64;
            if !mean.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            epoch_losses.push(mean);
            if mean < self.cfg.early_stop_loss {
                break;
            }
        }
        Ok(TrainedModel { model, retraining: r, epoch_losses })
    }
}

/// Sequential convenience over all retrainings `0..cfg.retrainings`.
pub fn train(data: &LabeledDataset, cfg: TrainConfig) -> Result<Vec<TrainedModel>> {
    let trainer = Trainer::new(data, cfg)?;
    (0..cfg.retrainings).map(|r| trainer.train_one(r)).collect()
}
