//! Certification, covering-count and coverage tables for the planes and
//! circles geometries.

use std::fmt::Write as _;

use voradv_core::geometry::{
    coverage_ratio_bound, coverage_ratio_mc, covering_gap, empirical_count_ratio, make_planes, measure_delta_cover,
    CoverLevel, GridDensity, ManifoldSpec,
};
use voradv_core::rng::{substream, MC};
use voradv_core::voronoi::{certify_ball_cover, certify_nn_cover};
use voradv_core::Norm;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, IoContext};

/// Side of the cube `[0, side]^k` used for empirical grid-cover counts.
pub const GRID_SIDE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CertRow {
    pub cover: CoverLevel,
    pub delta: f64,
    pub reach: f64,
    pub epsilon: f64,
    pub nn_ok: bool,
    pub ball_ok: bool,
    pub beyond_reach: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub k: usize,
    pub epsilon: f64,
    pub delta_nn: f64,
    pub delta_ball: f64,
    pub ratio_lower: f64,
    pub empirical_count_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub d: usize,
    pub k: usize,
    pub epsilon: f64,
    pub n: usize,
    pub bound: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub certification: Vec<CertRow>,
    pub gap: Vec<GapRow>,
    pub coverage: Vec<CoverageRow>,
}

pub fn certification_rows(eps: &[f64]) -> CliResult<Vec<CertRow>> {
    let mut rows = Vec::new();
    for cover in [CoverLevel::One, CoverLevel::Half, CoverLevel::Quarter] {
        // Cell centers are the points farthest from the grid, so the test
        // set measures the cover radius exactly.
        let (train, centers) = make_planes(GridDensity::Cover(cover), 1)?;
        let delta = measure_delta_cover(&train, &centers, Norm::L2)?;
        let reach = train.spec.expect("generated").reach_decision_axis;
        for &e in eps {
            let nn = certify_nn_cover(delta, reach, e)?;
            let ball = certify_ball_cover(delta, reach, e)?;
            rows.push(CertRow {
                cover,
                delta,
                reach,
                epsilon: e,
                nn_ok: nn.certified,
                ball_ok: ball.certified,
                beyond_reach: nn.beyond_reach,
            });
        }
    }
    Ok(rows)
}

pub fn gap_rows(ks: &[usize], eps: &[f64]) -> CliResult<Vec<GapRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        for &e in eps {
            let g = covering_gap(k, e)?;
            rows.push(GapRow {
                k,
                epsilon: e,
                delta_nn: g.delta_nn,
                delta_ball: g.delta_ball,
                ratio_lower: g.count_ratio_lower,
                empirical_count_ratio: empirical_count_ratio(k, e, GRID_SIDE)?,
            });
        }
    }
    Ok(rows)
}

/// Planes 1-cover at each codimension: closed-form bound and a Monte Carlo
/// estimate of the covered tube fraction. Codimension `c` uses MC seed
/// `seed + c`.
pub fn coverage_rows(codims: &[usize], eps: f64, mc_points: usize, seed: u64) -> CliResult<Vec<CoverageRow>> {
    let mut rows = Vec::new();
    for &c in codims {
        let spec = ManifoldSpec::planes(c)?;
        let (train, _) = make_planes(GridDensity::Cover(CoverLevel::One), c)?;
        let bound = coverage_ratio_bound(spec.d, spec.k, eps, train.len(), spec.vol_k)?;
        let mut rng = substream(seed.wrapping_add(c as u64), MC);
        let mc = coverage_ratio_mc(&train, eps, mc_points, &mut rng)?;
        rows.push(CoverageRow {
            d: spec.d,
            k: spec.k,
            epsilon: eps,
            n: train.len(),
            bound,
            mc_estimate: mc.estimate,
            mc_stderr: mc.stderr,
        });
    }
    Ok(rows)
}

impl TheoryReport {
    pub fn build(cfg: &ExperimentConfig) -> CliResult<Self> {
        Ok(TheoryReport {
            certification: certification_rows(&cfg.cert_eps)?,
            gap: gap_rows(&cfg.gap_k, &cfg.gap_eps)?,
            coverage: coverage_rows(&cfg.coverage_codims, cfg.coverage_eps, cfg.mc_points, cfg.seed)?,
        })
    }

    /// Every Monte Carlo estimate must sit below its bound plus three
    /// standard errors.
    pub fn check(&self) -> CliResult<()> {
        for r in &self.coverage {
            if r.mc_estimate > r.bound + 3.0 * r.mc_stderr {
                return Err(CliError::Invariant(format!(
                    "coverage estimate {} exceeds bound {} + 3 x {} at d = {}",
                    r.mc_estimate, r.bound, r.mc_stderr, r.d
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# certification\ncover,delta,reach,epsilon,nn_ok,ball_ok,beyond_reach\n");
        for r in &self.certification {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.cover, r.delta, r.reach, r.epsilon, r.nn_ok, r.ball_ok, r.beyond_reach);
        }
        s.push_str("\n# gap\nk,epsilon,delta_nn,delta_ball,ratio_lower,empirical_count_ratio\n");
        for r in &self.gap {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.k, r.epsilon, r.delta_nn, r.delta_ball, r.ratio_lower, r.empirical_count_ratio);
        }
        s.push_str("\n# coverage\nd,k,epsilon,n,bound,mc_estimate,mc_stderr\n");
        for r in &self.coverage {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.d, r.k, r.epsilon, r.n, r.bound, r.mc_estimate, r.mc_stderr);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("Certification on planes (reach 1)\n");
        for r in &self.certification {
            let note = if r.beyond_reach { "  [epsilon >= reach]" } else { "" };
            let _ = writeln!(
                s,
                "  cover {:>4}  delta {:.4}  eps {:.2}  1-NN {:<5}  ball {:<5}{note}",
                r.cover, r.delta, r.epsilon, r.nn_ok, r.ball_ok
            );
        }
        s.push_str("\nCover radii and sample-count ratios\n");
        for r in &self.gap {
            let _ = writeln!(
                s,
                "  k {}  eps {:.2}  delta_nn {:.4}  delta_ball {:.4}  lower {:.3}  grid {:.3}",
                r.k, r.epsilon, r.delta_nn, r.delta_ball, r.ratio_lower, r.empirical_count_ratio
            );
        }
        s.push_str("\nCovered fraction of the tube (planes, 1-cover)\n");
        for r in &self.coverage {
            let _ = writeln!(
                s,
                "  d {:>4}  bound {:.6}  estimate {:.6} +/- {:.6}",
                r.d, r.bound, r.mc_estimate, r.mc_stderr
            );
        }
        s
    }
}

pub fn cmd_theory(cfg: &ExperimentConfig) -> CliResult<TheoryReport> {
    let report = TheoryReport::build(cfg)?;
    report.check()?;
    std::fs::create_dir_all(&cfg.out).at(&cfg.out)?;
    let csv = cfg.out.join("theory.csv");
    std::fs::write(&csv, report.to_csv()).at(csv)?;
    let txt = cfg.out.join("theory.txt");
    std::fs::write(&txt, report.summary()).at(txt)?;
    Ok(report)
}
