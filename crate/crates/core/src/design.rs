//! Optimal unbiased node-variant approximations of pointwise nonlinearities.
//!
//! Given the first and second moments of a random graph signal `x` and its
//! cross-correlation with `ρ(x)`, the estimator
//!
//! ```text
//! ŷ = H_nv(S) (x − μ_x) + μ_ρ
//! ```
//!
//! is unbiased, and its mean squared error separates over nodes. Node `i`
//! solves the `(K+1)`-dimensional normal equations `R_i h_i = p_i` with
//!
//! ```text
//! R_i = Λᵀ diag(u_i) Vᵀ C_x V diag(u_i) Λ
//! p_i = Λᵀ diag(u_i) Vᵀ E[(ρ(x_i) − μ_ρi)(x − μ_x)]
//! ```
//!
//! where `u_i` is the `i`-th row of `V`. Rank-deficient systems are solved in
//! the minimum-norm sense with a relative eigenvalue cutoff of `1e-10`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_nv, NvTaps, TapFile};
use crate::graph::{GraphShift, SpectralBasis};
use crate::spectral::Vandermonde;

/// Relative cutoff below which eigenvalues of `R_i` are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Pointwise nonlinearities the design can target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Abs,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Abs => x.abs(),
            Nonlinearity::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Abs => "abs",
            Nonlinearity::Identity => "identity",
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            "abs" => Ok(Nonlinearity::Abs),
            "identity" | "none" => Ok(Nonlinearity::Identity),
            other => Err(Error::InvalidArgument(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

/// Empirical moments driving the design.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalMoments {
    pub mu_x: DVector<f64>,
    pub c_x: DMatrix<f64>,
    pub mu_rho: DVector<f64>,
    /// Column `i` is `E[(ρ(x_i) − μ_ρi)(x − μ_x)]`.
    pub cross: DMatrix<f64>,
    /// `Var[ρ(x_i)]`, used for residual diagnostics.
    pub rho_var: DVector<f64>,
    pub sample_count: usize,
}

impl SignalMoments {
    /// Unbiased moments from paired inputs and targets (divisor `n − 1`).
    pub fn from_pairs(inputs: &[DVector<f64>], targets: &[DVector<f64>]) -> Result<Self> {
        let count = inputs.len();
        if count < 2 {
            return Err(Error::InsufficientData(format!(
                "moment estimation needs at least 2 samples, got {count}"
            )));
        }
        if targets.len() != count {
            return Err(Error::dims("target sample count", count, targets.len()));
        }
        let n = inputs[0].len();
        for s in inputs.iter().chain(targets) {
            if s.len() != n {
                return Err(Error::dims("sample length", n, s.len()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("moment sample"));
            }
        }

        let mean = |data: &[DVector<f64>]| {
            let mut m = DVector::zeros(n);
            for s in data {
                m += s;
            }
            m / count as f64
        };
        let mu_x = mean(inputs);
        let mu_rho = mean(targets);

        let mut c_x = DMatrix::zeros(n, n);
        let mut cross = DMatrix::zeros(n, n);
        let mut rho_var = DVector::zeros(n);
        for (x, r) in inputs.iter().zip(targets) {
            let dx = x - &mu_x;
            let dr = r - &mu_rho;
            c_x.ger(1.0, &dx, &dx, 1.0);
            cross.ger(1.0, &dx, &dr, 1.0);
            rho_var += dr.component_mul(&dr);
        }
        let denom = (count - 1) as f64;
        c_x /= denom;
        cross /= denom;
        rho_var /= denom;
        crate::graph::symmetrize_in_place(&mut c_x);

        Ok(Self {
            mu_x,
            c_x,
            mu_rho,
            cross,
            rho_var,
            sample_count: count,
        })
    }

    pub fn n(&self) -> usize {
        self.mu_x.len()
    }

    /// `R_x = C_x + μ_x μ_xᵀ` (with the unbiased covariance).
    pub fn correlation(&self) -> DMatrix<f64> {
        &self.c_x + &self.mu_x * self.mu_x.transpose()
    }
}

pub fn estimate_moments(samples: &[DVector<f64>], rho: Nonlinearity) -> Result<SignalMoments> {
    let targets: Vec<DVector<f64>> = samples.iter().map(|x| x.map(|v| rho.apply(v))).collect();
    SignalMoments::from_pairs(samples, &targets)
}

/// Per-node solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    /// Residual MSE `hᵀ R h − 2 pᵀ h + Var[ρ(x_i)]` at each node.
    pub residual_mse: Vec<f64>,
    /// Numerical rank of `R_i` at each node.
    pub rank: Vec<usize>,
}

/// An unbiased node-variant estimator `ŷ = H_nv(S) x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignedNvgf {
    pub taps: NvTaps,
    pub offset: DVector<f64>,
    pub diagnostics: DesignDiagnostics,
}

impl DesignedNvgf {
    pub fn estimate(&self, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
        Ok(apply_nv(&self.taps, x, g)? + &self.offset)
    }

    pub fn to_tap_file(&self) -> TapFile {
        TapFile::Nv {
            k: self.taps.order(),
            taps: self
                .taps
                .matrix()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            offset: Some(self.offset.iter().copied().collect()),
            diagnostics: Some(serde_json::to_value(&self.diagnostics).expect("diagnostics serialize")),
        }
    }
}

/// `H_nv(S) = (V ∘ (H Λᵀ)) Vᵀ`, evaluated from the spectral basis.
pub fn nv_operator(taps: &NvTaps, basis: &SpectralBasis) -> Result<DMatrix<f64>> {
    if taps.n() != basis.n() {
        return Err(Error::dims("node-variant tap rows", basis.n(), taps.n()));
    }
    let vmd = Vandermonde::from_basis(basis, taps.order());
    let responses = taps.matrix() * vmd.matrix().transpose();
    let v = basis.eigenvectors();
    Ok(v.component_mul(&responses) * v.transpose())
}

/// Minimum-norm solution of `R h = p` for symmetric PSD `R`. Returns `(h, rank)`.
pub fn solve_min_norm(r: &DMatrix<f64>, p: &DVector<f64>) -> (DVector<f64>, usize) {
    let eig = SymmetricEigen::new(r.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let mut h = DVector::zeros(p.len());
    let mut rank = 0;
    if top == 0.0 {
        return (h, 0);
    }
    for (j, &w) in eig.eigenvalues.iter().enumerate() {
        if w.abs() > RANK_CUTOFF * top {
            let q = eig.eigenvectors.column(j);
            h += q * (q.dot(p) / w);
            rank += 1;
        }
    }
    (h, rank)
}

/// Per-node normal equations `(R_i, p_i)` for covariance `c_x` and cross term `cross`.
pub fn normal_equations(
    c_x: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    basis: &SpectralBasis,
    order: usize,
    node: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let v = basis.eigenvectors();
    let vmd = Vandermonde::from_basis(basis, order);
    // M_i = V diag(u_i) Λ, so that R_i = M_iᵀ C_x M_i and p_i = M_iᵀ cross_i
    let mut m = v.clone();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= v[(node, j)];
    }
    let m = m * vmd.matrix();
    let mut r = m.tr_mul(&(c_x * &m));
    crate::graph::symmetrize_in_place(&mut r);
    let p = m.tr_mul(&cross.column(node));
    (r, p)
}

fn check_psd(c: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(1.0);
    if min < -1e-8 * scale {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    Ok(())
}

fn assemble(
    rows: Vec<(DVector<f64>, usize, f64)>,
    order: usize,
    mu_x: &DVector<f64>,
    mu_rho: &DVector<f64>,
    basis: &SpectralBasis,
) -> Result<DesignedNvgf> {
    let n = rows.len();
    let mut h = DMatrix::zeros(n, order + 1);
    let mut residual_mse = Vec::with_capacity(n);
    let mut rank = Vec::with_capacity(n);
    for (i, (hi, ri, mse)) in rows.into_iter().enumerate() {
        h.set_row(i, &hi.transpose());
        rank.push(ri);
        residual_mse.push(mse);
    }
    let taps = NvTaps::new(h)?;
    let offset = mu_rho - nv_operator(&taps, basis)? * mu_x;
    Ok(DesignedNvgf {
        taps,
        offset,
        diagnostics: DesignDiagnostics { residual_mse, rank },
    })
}

/// The MSE-optimal unbiased node-variant filter of order `order`.
pub fn design_optimal(m: &SignalMoments, basis: &SpectralBasis, order: usize) -> Result<DesignedNvgf> {
    let n = basis.n();
    if m.n() != n {
        return Err(Error::dims("moments vs basis", n, m.n()));
    }
    if order + 1 > n {
        log::warn!("filter order {order} ≥ N = {n}: every R_i is rank deficient");
    }
    check_psd(&m.c_x)?;

    let rows: Vec<(DVector<f64>, usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (r, p) = normal_equations(&m.c_x, &m.cross, basis, order, i);
            let (h, rank) = solve_min_norm(&r, &p);
            let mse = h.dot(&(&r * &h)) - 2.0 * p.dot(&h) + m.rho_var[i];
            (h, rank, mse)
        })
        .collect();
    assemble(rows, order, &m.mu_x, &m.mu_rho, basis)
}

/// Design for a zero-mean stationary process with covariance `V diag(q) Vᵀ`.
///
/// `cross_gft` holds `Vᵀ E[ρ(x_i) x]` in column `i`. Each node's system
/// `diag(u_i ∘ q) Λ h_i = Vᵀ E[ρ(x_i) x]` is solved in the `q`-weighted
/// least-squares sense, which is exact whenever the system is consistent.
pub fn design_stationary(
    q: &DVector<f64>,
    cross_gft: &DMatrix<f64>,
    mu_rho: &DVector<f64>,
    basis: &SpectralBasis,
    order: usize,
) -> Result<DesignedNvgf> {
    let n = basis.n();
    if q.len() != n {
        return Err(Error::dims("power spectral density", n, q.len()));
    }
    if cross_gft.nrows() != n || cross_gft.ncols() != n {
        return Err(Error::dims("spectral cross-correlation", n, cross_gft.nrows()));
    }
    if mu_rho.len() != n {
        return Err(Error::dims("mean of ρ(x)", n, mu_rho.len()));
    }
    if let Some(bad) = q.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power spectral density must be nonnegative, found {bad}"
        )));
    }

    let v = basis.eigenvectors();
    let vmd = Vandermonde::from_basis(basis, order);
    let lam = vmd.matrix();
    let rows: Vec<(DVector<f64>, usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = v.row(i).transpose();
            let weight = u.component_mul(&u).component_mul(q);
            let mut weighted = lam.clone();
            for (j, mut row) in weighted.row_iter_mut().enumerate() {
                row *= weight[j];
            }
            let mut r = lam.tr_mul(&weighted);
            crate::graph::symmetrize_in_place(&mut r);
            let p = lam.tr_mul(&u.component_mul(&cross_gft.column(i)));
            let (h, rank) = solve_min_norm(&r, &p);
            (h, rank, f64::NAN)
        })
        .collect();
    assemble(rows, order, &DVector::zeros(n), mu_rho, basis)
}

/// `ŷ_i = (ξ²/σ²) x_i + μ_ρ`, optimal for zero-mean i.i.d. inputs.
pub fn closed_form_iid_relu(sigma2: f64, xi2: f64, mu_rho: f64, n: usize) -> Result<DesignedNvgf> {
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {sigma2}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("node count must be positive".into()));
    }
    let gain = xi2 / sigma2;
    Ok(DesignedNvgf {
        taps: NvTaps::new(DMatrix::from_element(n, 1, gain))?,
        offset: DVector::from_element(n, mu_rho),
        diagnostics: DesignDiagnostics {
            residual_mse: vec![f64::NAN; n],
            rank: vec![1; n],
        },
    })
}
