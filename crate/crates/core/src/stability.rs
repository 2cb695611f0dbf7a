//! Lipschitz stability of node-variant filters under graph perturbations.
//!
//! If every per-node frequency response `h̃_t` is `C`-Lipschitz over the
//! spectrum of `S` and `‖Ŝ − S‖₂ ≤ ε`, then to first order in `ε`
//!
//! ```text
//! ‖(H_nv(Ŝ) − H_nv(S)) x‖₂ ≤ ε C √N (1 + 8N) ‖x‖₂
//! ```
//!
//! [`check_bound`] evaluates both sides on random perturbations, and
//! [`StabilityStudy::slope`] fits the log-log slope of the worst deviation
//! against `ε`, which should be close to one in the first-order regime.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_nv, NvTaps};
use crate::graph::{GraphShift, SpectralBasis};
use crate::spectral::Vandermonde;

/// Eigenvalue gaps below this are skipped when computing `C`.
pub const GAP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub trial: usize,
    pub lipschitz_c: f64,
    pub bound: f64,
    pub empirical: f64,
    pub ratio: f64,
}

impl StabilityReport {
    pub fn within_bound(&self) -> bool {
        self.empirical <= self.bound
    }
}

/// Largest secant slope of any node's frequency response over pairs of eigenvalues.
pub fn lipschitz_constant(taps: &NvTaps, basis: &SpectralBasis) -> Result<f64> {
    if taps.n() != basis.n() {
        return Err(Error::dims("node-variant tap rows", basis.n(), taps.n()));
    }
    let lam = basis.eigenvalues();
    let n = lam.len();
    let responses = taps.matrix() * Vandermonde::from_basis(basis, taps.order()).matrix().transpose();

    let mut c: f64 = 0.0;
    let mut any_pair = false;
    for i in 0..n {
        for j in i + 1..n {
            let gap = (lam[j] - lam[i]).abs();
            if gap < GAP_TOL {
                continue;
            }
            any_pair = true;
            for t in 0..taps.n() {
                c = c.max((responses[(t, j)] - responses[(t, i)]).abs() / gap);
            }
        }
    }
    if !any_pair {
        return Err(Error::InsufficientData(
            "all eigenvalues are equal; the Lipschitz constant is undefined".into(),
        ));
    }
    Ok(c)
}

/// `ε C √N (1 + 8N) ‖x‖₂`.
pub fn first_order_bound(epsilon: f64, c: f64, n: usize, x_norm: f64) -> f64 {
    let n = n as f64;
    epsilon * c * n.sqrt() * (1.0 + 8.0 * n) * x_norm
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

/// A random symmetric Gaussian direction with unit spectral norm.
pub fn unit_symmetric_direction(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        let e: DMatrix<f64> = (&a + a.transpose()) * 0.5;
        let norm = spectral_norm_sym(&e);
        if norm > 0.0 {
            return e / norm;
        }
    }
}

fn perturb(g: &GraphShift, direction: &DMatrix<f64>, epsilon: f64) -> Result<GraphShift> {
    let mut s = g.matrix() + direction * epsilon;
    crate::graph::symmetrize_in_place(&mut s);
    GraphShift::new(s)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "perturbation size must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// `Ŝ = S + E` with `E` a dense symmetric Gaussian direction and `‖E‖₂ = ε`.
pub fn random_perturbation(g: &GraphShift, epsilon: f64, seed: u64) -> Result<GraphShift> {
    check_epsilon(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb(g, &unit_symmetric_direction(g.n(), &mut rng), epsilon)
}

/// Gaussian jitter on existing edge weights only, rescaled so `‖E‖₂ = ε`.
pub fn edge_jitter_perturbation(g: &GraphShift, epsilon: f64, seed: u64) -> Result<GraphShift> {
    check_epsilon(epsilon)?;
    let n = g.n();
    let s = g.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if s[(i, j)] != 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                e[(i, j)] = z * s[(i, j)];
                e[(j, i)] = e[(i, j)];
            }
        }
    }
    let norm = spectral_norm_sym(&e);
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "edge jitter needs a graph with at least one nonzero weight".into(),
        ));
    }
    perturb(g, &(e / norm), epsilon)
}

/// `‖H_nv(Ŝ) x − H_nv(S) x‖₂` with the same taps on both graphs.
pub fn empirical_deviation(
    taps: &NvTaps,
    g: &GraphShift,
    gp: &GraphShift,
    x: &DVector<f64>,
) -> Result<f64> {
    if g.n() != gp.n() {
        return Err(Error::dims("perturbed graph size", g.n(), gp.n()));
    }
    Ok((apply_nv(taps, x, gp)? - apply_nv(taps, x, g)?).norm())
}

/// Reports for every `(ε, trial)` plus a log-log slope fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityStudy {
    pub lipschitz_c: f64,
    pub reports: Vec<StabilityReport>,
    /// `(ε, max deviation over trials)` in ascending `ε`.
    pub max_deviation: Vec<(f64, f64)>,
    /// Least-squares slope of `log max deviation` against `log ε`; `None`
    /// when fewer than two points have positive deviation.
    pub slope: Option<f64>,
    pub violations: usize,
}

impl StabilityStudy {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "trial", "empirical", "bound", "ratio"])?;
        for r in &self.reports {
            w.write_record(&[
                r.epsilon.to_string(),
                r.trial.to_string(),
                r.empirical.to_string(),
                r.bound.to_string(),
                r.ratio.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary without the per-trial rows.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lipschitz_c": self.lipschitz_c,
            "trials": self.reports.iter().map(|r| r.trial).max().map_or(0, |t| t + 1),
            "max_deviation": self.max_deviation,
            "slope": self.slope,
            "violations": self.violations,
        })
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Evaluate the bound on `trials` random perturbation directions.
///
/// Trial `t` draws its direction `E` and input `x` from stream `t` of a
/// ChaCha generator keyed by `seed`, and reuses them for every `ε`, so the
/// result is independent of thread scheduling.
pub fn check_bound(
    taps: &NvTaps,
    g: &GraphShift,
    epsilons: &[f64],
    trials: usize,
    seed: u64,
) -> Result<StabilityStudy> {
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if taps.n() != g.n() {
        return Err(Error::dims("node-variant tap rows", g.n(), taps.n()));
    }
    let basis = g.eigendecompose()?;
    let c = lipschitz_constant(taps, &basis)?;
    let n = g.n();

    let per_trial: Vec<Vec<StabilityReport>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let direction = unit_symmetric_direction(n, &mut rng);
            let x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            epsilons
                .iter()
                .map(|&epsilon| {
                    let gp = perturb(g, &direction, epsilon)?;
                    let empirical = empirical_deviation(taps, g, &gp, &x)?;
                    let bound = first_order_bound(epsilon, c, n, x.norm());
                    let ratio = if bound > 0.0 { empirical / bound } else { 0.0 };
                    Ok(StabilityReport {
                        epsilon,
                        trial,
                        lipschitz_c: c,
                        bound,
                        empirical,
                        ratio,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let reports: Vec<StabilityReport> = per_trial.into_iter().flatten().collect();

    let mut grid: Vec<f64> = epsilons.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let max_deviation: Vec<(f64, f64)> = grid
        .iter()
        .map(|&e| {
            let worst = reports
                .iter()
                .filter(|r| r.epsilon == e)
                .fold(0.0_f64, |m, r| m.max(r.empirical));
            (e, worst)
        })
        .collect();
    let logs: Vec<(f64, f64)> = max_deviation
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(e, d)| (e.ln(), d.ln()))
        .collect();
    let violations = reports.iter().filter(|r| !r.within_bound()).count();
    if violations > 0 {
        log::warn!("{violations} of {} reports exceed the first-order bound", reports.len());
    }

    Ok(StabilityStudy {
        lipschitz_c: c,
        reports,
        max_deviation,
        slope: fit_slope(&logs),
        violations,
    })
}
