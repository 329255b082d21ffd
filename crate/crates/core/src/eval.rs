//! Robustness curves, normalized area under them, and aggregation over
//! retrainings.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attacks::{ball_pgd, fgsm, AttackKind, AttackTemplate};
use crate::error::{Error, Result};
use crate::geometry::LabeledDataset;
use crate::net::MlpModel;
use crate::rng::{substream, ATTACK};

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub eps_grid: Vec<f64>,
    /// Accuracy per attack, in suite order.
    pub attacks: Vec<(String, Vec<f64>)>,
    pub min_curve: Vec<f64>,
    pub n_test: usize,
}

impl RobustnessCurve {
    pub fn nauc(&self) -> Result<f64> {
        nauc(&self.eps_grid, &self.min_curve)
    }
}

/// `n` evenly spaced budgets from 0 to `eps_max` inclusive.
pub fn linear_grid(eps_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(eps_max > 0.0 && eps_max.is_finite()) {
        return Err(Error::invalid("an epsilon grid needs at least 2 points and eps_max > 0"));
    }
    Ok((0..n).map(|i| eps_max * i as f64 / (n - 1) as f64).collect())
}

pub fn validate_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 2 {
        return Err(Error::invalid("an epsilon grid needs at least 2 points"));
    }
    if eps_grid[0] != 0.0 {
        return Err(Error::invalid("an epsilon grid starts at 0"));
    }
    if eps_grid.windows(2).any(|w| !(w[1] > w[0])) || !eps_grid[eps_grid.len() - 1].is_finite() {
        return Err(Error::invalid("an epsilon grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Seed offset for one (attack, budget) cell, so cells are independent of
/// evaluation order.
fn cell_seed(seed: u64, attack: usize, eps: usize) -> u64 {
    seed ^ ((attack as u64) << 32 | eps as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Accuracy of `model` on `test` after attacking each point with every attack
/// of `suite` at one budget.
pub fn accuracy_under_attack(
    model: &MlpModel,
    test: &LabeledDataset,
    template: &AttackTemplate,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let cfg = template.at(epsilon);
    let mut rng = substream(seed, ATTACK);
    let mut correct = 0usize;
    for i in 0..test.len() {
        let x = test.points.row(i);
        let y = test.labels[i];
        let pred = if epsilon == 0.0 {
            model.predict(x)?
        } else {
            let adv = match cfg.kind {
                AttackKind::Fgsm => fgsm(model, x, y, epsilon, cfg.norm)?,
                AttackKind::Bim | AttackKind::BallPgd => ball_pgd(model, x, y, &cfg, &mut rng)?,
                AttackKind::VoronoiPgd => unreachable!("rejected by template validation"),
            };
            model.predict(&adv)?
        };
        if pred == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

pub fn robustness_curve(
    model: &MlpModel,
    test: &LabeledDataset,
    suite: &[AttackTemplate],
    eps_grid: &[f64],
    seed: u64,
) -> Result<RobustnessCurve> {
    validate_grid(eps_grid)?;
    if suite.is_empty() {
        return Err(Error::invalid("empty attack suite"));
    }
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    for t in suite {
        t.validate()?;
    }
    let clean = accuracy_under_attack(model, test, &suite[0], 0.0, seed)?;
    let mut attacks = Vec::with_capacity(suite.len());
    for (a, t) in suite.iter().enumerate() {
        let mut acc = vec![clean];
        for (e, &eps) in eps_grid.iter().enumerate().skip(1) {
            acc.push(accuracy_under_attack(model, test, t, eps, cell_seed(seed, a, e))?);
        }
        attacks.push((t.name(), acc));
    }
    let min_curve = min_over(&attacks, eps_grid.len());
    Ok(RobustnessCurve { eps_grid: eps_grid.to_vec(), attacks, min_curve, n_test: test.len() })
}

/// Assembles a curve from independently computed cells.
pub fn curve_from_cells(eps_grid: &[f64], attacks: Vec<(String, Vec<f64>)>, n_test: usize) -> Result<RobustnessCurve> {
    validate_grid(eps_grid)?;
    if attacks.is_empty() {
        return Err(Error::invalid("empty attack suite"));
    }
    for (name, acc) in &attacks {
        if acc.len() != eps_grid.len() || acc.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid(format!("attack {name}: accuracies must match the grid and lie in [0, 1]")));
        }
    }
    let min_curve = min_over(&attacks, eps_grid.len());
    Ok(RobustnessCurve { eps_grid: eps_grid.to_vec(), attacks, min_curve, n_test })
}

fn min_over(attacks: &[(String, Vec<f64>)], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| attacks.iter().map(|(_, a)| a[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Trapezoidal area under `acc` over `[0, ε_max]`, divided by `ε_max`.
pub fn nauc(eps_grid: &[f64], acc: &[f64]) -> Result<f64> {
    validate_grid(eps_grid)?;
    if acc.len() != eps_grid.len() {
        return Err(Error::DimensionMismatch { expected: eps_grid.len(), found: acc.len() });
    }
    let area: f64 = eps_grid
        .windows(2)
        .zip(acc.windows(2))
        .map(|(e, a)| (e[1] - e[0]) * 0.5 * (a[0] + a[1]))
        .sum();
    Ok(area / eps_grid[eps_grid.len() - 1])
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub eps_grid: Vec<f64>,
    pub acc_mean: Vec<f64>,
    pub acc_std: Vec<f64>,
    pub nauc_mean: f64,
    pub nauc_std: f64,
    pub naucs: Vec<f64>,
}

/// Pointwise mean/std of the minimum curves and of their NAUCs.
pub fn aggregate(curves: &[RobustnessCurve]) -> Result<Aggregate> {
    let first = curves.first().ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if curves.iter().any(|c| c.eps_grid != first.eps_grid) {
        return Err(Error::invalid("curves use different epsilon grids"));
    }
    let n = first.eps_grid.len();
    let mut acc_mean = Vec::with_capacity(n);
    let mut acc_std = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<f64> = curves.iter().map(|c| c.min_curve[i]).collect();
        let (m, s) = mean_std(&col);
        acc_mean.push(m);
        acc_std.push(s);
    }
    let naucs = curves.iter().map(|c| c.nauc()).collect::<Result<Vec<_>>>()?;
    let (nauc_mean, nauc_std) = mean_std(&naucs);
    Ok(Aggregate { eps_grid: first.eps_grid.clone(), acc_mean, acc_std, nauc_mean, nauc_std, naucs })
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("spearman needs two equally long samples of size >= 2"));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman is undefined for a constant sample"));
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_circles;
    use crate::linalg::Norm;
    use crate::net::MlpDims;

    #[test]
    fn nauc_hand_values() {
        assert!((nauc(&[0.0, 0.2, 0.4], &[1.0, 0.5, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(nauc(&[0.0, 0.1, 0.35, 1.0], &[1.0; 4]).unwrap(), 1.0);
        let grid = [0.0, 0.05, 0.3, 0.31, 0.9, 1.2];
        let acc: Vec<f64> = grid.iter().map(|e| 1.0 - e / 1.2).collect();
        assert!((nauc(&grid, &acc).unwrap() - 0.5).abs() < 1e-12);
        assert!(nauc(&[0.0], &[1.0]).is_err());
        assert!(nauc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_classifier_scores_half() {
        // Zero weights give equal logits; ties predict class 1.
        let m = MlpModel::zeros(MlpDims::new(4, 5, 2).unwrap());
        let test = make_circles(25, 2, 1).unwrap();
        let suite = [AttackTemplate::fgsm(Norm::L2), AttackTemplate::bim(Norm::LInf, 5)];
        let c = robustness_curve(&m, &test, &suite, &linear_grid(0.5, 6).unwrap(), 0).unwrap();
        assert!(c.min_curve.iter().all(|&a| a == 0.5));
        assert_eq!(c.nauc().unwrap(), 0.5);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[0.9, 0.8, 0.7, 0.1]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap() - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - libm::sqrt(32.0 / 7.0)).abs() < 1e-15);
    }
}
