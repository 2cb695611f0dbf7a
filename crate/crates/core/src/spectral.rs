//! Graph Fourier transform and frequency responses of graph filters.
//!
//! For an LSI filter the output spectrum is the input spectrum multiplied
//! elementwise by `h̃ = Λ h`, where `Λ` is the Vandermonde matrix of the
//! eigenvalues. A node-variant filter instead maps `x̃ ↦ B x̃` with
//!
//! ```text
//! B = Vᵀ (V ∘ (H Λᵀ))
//! ```
//!
//! Whenever `B` has off-diagonal mass the filter moves energy into graph
//! frequencies that were absent from the input.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::{LsiTaps, NvTaps};
use crate::graph::SpectralBasis;

/// `m[i][k] = λ_i^k` for `k = 0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vandermonde {
    m: DMatrix<f64>,
}

impl Vandermonde {
    pub fn new(lambda: &DVector<f64>, order: usize) -> Self {
        let n = lambda.len();
        let mut m = DMatrix::zeros(n, order + 1);
        for i in 0..n {
            let mut p = 1.0;
            for k in 0..=order {
                m[(i, k)] = p;
                p *= lambda[i];
            }
        }
        Self { m }
    }

    pub fn from_basis(basis: &SpectralBasis, order: usize) -> Self {
        Self::new(basis.eigenvalues(), order)
    }

    pub fn order(&self) -> usize {
        self.m.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Graph Fourier coefficients of a signal, tied to the basis that produced them.
#[derive(Clone, Debug)]
pub struct FrequencyReport<'a> {
    xt: DVector<f64>,
    basis: &'a SpectralBasis,
}

impl<'a> FrequencyReport<'a> {
    pub fn from_coefficients(xt: DVector<f64>, basis: &'a SpectralBasis) -> Result<Self> {
        if xt.len() != basis.n() {
            return Err(Error::dims("spectral coefficients vs basis", basis.n(), xt.len()));
        }
        Ok(Self { xt, basis })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.xt
    }

    pub fn basis(&self) -> &'a SpectralBasis {
        self.basis
    }

    /// `(λ_i, x̃_i)` pairs in ascending eigenvalue order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.basis.eigenvalues().iter().copied().zip(self.xt.iter().copied())
    }

    /// Writes `eigenvalue,coefficient` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_spectrum_csv(out, self.pairs())
    }
}

/// Writes `(eigenvalue, value)` pairs as CSV with header `eigenvalue,coefficient`.
pub fn write_spectrum_csv<W: Write>(out: W, pairs: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eigenvalue", "coefficient"])?;
    for (l, c) in pairs {
        w.write_record([format!("{l:e}"), format!("{c:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `x̃ = Vᵀ x`.
pub fn gft<'a>(x: &DVector<f64>, basis: &'a SpectralBasis) -> Result<FrequencyReport<'a>> {
    if x.len() != basis.n() {
        return Err(Error::dims("graph signal", basis.n(), x.len()));
    }
    Ok(FrequencyReport {
        xt: basis.eigenvectors().tr_mul(x),
        basis,
    })
}

/// `x = V x̃`.
pub fn igft(report: &FrequencyReport<'_>) -> DVector<f64> {
    report.basis.eigenvectors() * &report.xt
}

/// `h̃ = Λ h`, the filter's gain at each eigenvalue.
pub fn lsi_frequency_response(h: &LsiTaps, vmd: &Vandermonde) -> Result<DVector<f64>> {
    if h.taps().len() != vmd.m.ncols() {
        return Err(Error::dims("taps vs Vandermonde columns", vmd.m.ncols(), h.taps().len()));
    }
    Ok(&vmd.m * h.taps())
}

/// The spectral operator of a node-variant filter.
#[derive(Clone, Debug, PartialEq)]
pub struct NvFrequencyMatrix {
    b: DMatrix<f64>,
    responses: DMatrix<f64>,
}

impl NvFrequencyMatrix {
    /// `B`, mapping input spectra to output spectra.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `H Λᵀ`: entry `(t, j)` is node `t`'s response `h̃_t(λ_j)`.
    pub fn node_responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    /// Responses of every node at eigenvalue `λ_j`.
    pub fn responses_at(&self, j: usize) -> DVector<f64> {
        self.responses.column(j).into_owned()
    }

    /// `ỹ = B x̃`.
    pub fn apply(&self, xt: &DVector<f64>) -> Result<DVector<f64>> {
        if xt.len() != self.b.ncols() {
            return Err(Error::dims("spectral coefficients", self.b.ncols(), xt.len()));
        }
        Ok(&self.b * xt)
    }
}

pub fn nv_frequency_matrix(taps: &NvTaps, basis: &SpectralBasis) -> Result<NvFrequencyMatrix> {
    if taps.n() != basis.n() {
        return Err(Error::dims("node-variant tap rows", basis.n(), taps.n()));
    }
    let vmd = Vandermonde::from_basis(basis, taps.order());
    let responses = taps.matrix() * vmd.matrix().transpose();
    let v = basis.eigenvectors();
    let b = v.tr_mul(&v.component_mul(&responses));
    Ok(NvFrequencyMatrix { b, responses })
}

/// Off-diagonal energy of a spectral operator and whether it counts as frequency creation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CreationIndex {
    pub offdiag_energy: f64,
    pub threshold: f64,
    pub creates: bool,
}

/// Relative tolerance on `‖B - diag(B)‖_F`, with an absolute floor of `1e-12`.
pub const CREATION_REL_TOL: f64 = 1e-9;

pub fn creation_index(m: &NvFrequencyMatrix) -> CreationIndex {
    let b = &m.b;
    let mut off = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            if i != j {
                off += b[(i, j)] * b[(i, j)];
            }
        }
    }
    let offdiag_energy = off.sqrt();
    let threshold = (CREATION_REL_TOL * b.norm()).max(1e-12);
    CreationIndex {
        offdiag_energy,
        threshold,
        creates: offdiag_energy > threshold,
    }
}
