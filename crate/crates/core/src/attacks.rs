//! Gradient attacks: FGSM, iterative ball-constrained ascent (BIM and
//! randomly started PGD) and the Voronoi-constrained ascent used for
//! training.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::ClassId;
use crate::linalg::{axpy, Norm};
use crate::net::MlpModel;
use crate::rng::uniform_in_ball;
use crate::voronoi::{satisfies, ConstraintSet};

pub const DEFAULT_ITERS: usize = 40;
pub const DEFAULT_STEP_SCALE: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Fgsm,
    Bim,
    BallPgd,
    VoronoiPgd,
}

impl AttackKind {
    pub fn is_ball(self) -> bool {
        !matches!(self, AttackKind::VoronoiPgd)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::BallPgd => "pgd",
            AttackKind::VoronoiPgd => "voronoi",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            "pgd" | "ballpgd" | "ball_pgd" => Ok(AttackKind::BallPgd),
            "voronoi" | "voronoipgd" | "voronoi_pgd" => Ok(AttackKind::VoronoiPgd),
            other => Err(Error::invalid(format!("unknown attack `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub norm: Norm,
    /// Budget; ignored by the Voronoi attack.
    pub epsilon: f64,
    pub step: f64,
    pub iters: usize,
    /// Ignored by FGSM, BIM and the Voronoi attack.
    pub random_start: bool,
}

impl AttackConfig {
    pub fn fgsm(norm: Norm, epsilon: f64) -> Self {
        AttackConfig { kind: AttackKind::Fgsm, norm, epsilon, step: epsilon, iters: 1, random_start: false }
    }

    pub fn bim(norm: Norm, epsilon: f64, iters: usize) -> Self {
        AttackConfig {
            kind: AttackKind::Bim,
            norm,
            epsilon,
            step: DEFAULT_STEP_SCALE * epsilon / iters.max(1) as f64,
            iters,
            random_start: false,
        }
    }

    pub fn ball_pgd(norm: Norm, epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::BallPgd,
            norm,
            epsilon,
            step: DEFAULT_STEP_SCALE * epsilon / DEFAULT_ITERS as f64,
            iters: DEFAULT_ITERS,
            random_start: true,
        }
    }

    pub fn voronoi_pgd(norm: Norm, step: f64, iters: usize) -> Self {
        AttackConfig { kind: AttackKind::VoronoiPgd, norm, epsilon: 0.0, step, iters, random_start: false }
    }

    /// A zero step is accepted: it turns every attack into the identity.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.kind != AttackKind::Fgsm {
            if self.iters == 0 {
                return Err(Error::invalid("iterative attacks need iters >= 1"));
            }
            if !(self.step.is_finite() && self.step >= 0.0) {
                return Err(Error::invalid(format!("step must be finite and >= 0, got {}", self.step)));
            }
        }
        Ok(())
    }
}

/// An attack family evaluated across budgets: the step is `step_scale · ε / iters`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackTemplate {
    pub kind: AttackKind,
    pub norm: Norm,
    pub iters: usize,
    pub step_scale: f64,
    pub random_start: bool,
}

impl AttackTemplate {
    pub fn fgsm(norm: Norm) -> Self {
        AttackTemplate { kind: AttackKind::Fgsm, norm, iters: 1, step_scale: 1.0, random_start: false }
    }

    pub fn bim(norm: Norm, iters: usize) -> Self {
        AttackTemplate { kind: AttackKind::Bim, norm, iters, step_scale: DEFAULT_STEP_SCALE, random_start: false }
    }

    pub fn ball_pgd(norm: Norm, iters: usize) -> Self {
        AttackTemplate { kind: AttackKind::BallPgd, norm, iters, step_scale: DEFAULT_STEP_SCALE, random_start: true }
    }

    pub fn name(&self) -> String {
        format!("{}", self.kind)
    }

    pub fn at(&self, epsilon: f64) -> AttackConfig {
        let iters = if self.kind == AttackKind::Fgsm { 1 } else { self.iters };
        AttackConfig {
            kind: self.kind,
            norm: self.norm,
            epsilon,
            step: self.step_scale * epsilon / iters.max(1) as f64,
            iters,
            random_start: self.random_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == AttackKind::VoronoiPgd {
            return Err(Error::invalid("the Voronoi attack has no budget and cannot be evaluated over an epsilon grid"));
        }
        self.at(1.0).validate()
    }
}

/// `x + ε·sign(∇)` for ℓ∞, `x + ε·∇/‖∇‖₂` for ℓ2; a zero gradient leaves `x`.
pub fn fgsm(model: &MlpModel, x: &[f64], y: ClassId, epsilon: f64, norm: Norm) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be finite and >= 0"));
    }
    let (_, g) = model.loss_and_input_grad(x, y)?;
    let mut out = x.to_vec();
    if epsilon > 0.0 {
        if let Some(dir) = norm.ascent_direction(&g) {
            axpy(epsilon, &dir, &mut out);
        }
    }
    Ok(out)
}

/// Iterative ascent projected onto `B(x, ε)` after every step.
pub fn ball_pgd<R: Rng + ?Sized>(model: &MlpModel, x: &[f64], y: ClassId, cfg: &AttackConfig, rng: &mut R) -> Result<Vec<f64>> {
    if !matches!(cfg.kind, AttackKind::Bim | AttackKind::BallPgd) {
        return Err(Error::invalid(format!("ball_pgd cannot run a {} config", cfg.kind)));
    }
    cfg.validate()?;
    check_dim(model.dims().d_in, x.len())?;
    let mut cur = x.to_vec();
    if cfg.epsilon == 0.0 || cfg.step == 0.0 {
        return Ok(cur);
    }
    if cfg.kind == AttackKind::BallPgd && cfg.random_start {
        let offset = uniform_in_ball(rng, x.len(), cfg.epsilon, cfg.norm);
        axpy(1.0, &offset, &mut cur);
        cfg.norm.project_onto_ball(x, &mut cur, cfg.epsilon);
    }
    for _ in 0..cfg.iters {
        let (_, g) = model.loss_and_input_grad(&cur, y)?;
        let Some(dir) = cfg.norm.ascent_direction(&g) else { break };
        axpy(cfg.step, &dir, &mut cur);
        cfg.norm.project_onto_ball(x, &mut cur, cfg.epsilon);
    }
    Ok(cur)
}

/// Unprojected ascent from `x` that stops at the first step leaving the
/// constrained Voronoi cell and returns the last feasible iterate.
pub fn voronoi_pgd(model: &MlpModel, x: &[f64], y: ClassId, constraints: &ConstraintSet, cfg: &AttackConfig) -> Result<Vec<f64>> {
    if cfg.kind != AttackKind::VoronoiPgd {
        return Err(Error::invalid(format!("voronoi_pgd cannot run a {} config", cfg.kind)));
    }
    cfg.validate()?;
    check_dim(model.dims().d_in, x.len())?;
    if constraints.anchor.as_slice() != x {
        return Err(Error::invalid("constraint set belongs to a different anchor"));
    }
    let mut cur = x.to_vec();
    if cfg.step == 0.0 {
        return Ok(cur);
    }
    let mut cand = cur.clone();
    for _ in 0..cfg.iters {
        let (_, g) = model.loss_and_input_grad(&cur, y)?;
        let Some(dir) = cfg.norm.ascent_direction(&g) else { break };
        cand.copy_from_slice(&cur);
        axpy(cfg.step, &dir, &mut cand);
        if !satisfies(x, &cand, &constraints.rivals, cfg.norm) {
            break;
        }
        core::mem::swap(&mut cur, &mut cand);
    }
    Ok(cur)
}

/// Dispatches on `cfg.kind`. The Voronoi attack needs `constraints`.
pub fn attack<R: Rng + ?Sized>(
    model: &MlpModel,
    x: &[f64],
    y: ClassId,
    cfg: &AttackConfig,
    constraints: Option<&ConstraintSet>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg.epsilon, cfg.norm),
        AttackKind::Bim | AttackKind::BallPgd => ball_pgd(model, x, y, cfg, rng),
        AttackKind::VoronoiPgd => {
            let c = constraints.ok_or_else(|| Error::invalid("the Voronoi attack needs a constraint set"))?;
            voronoi_pgd(model, x, y, c, cfg)
        }
    }
}
