//! Linear shift-invariant and node-variant graph filters in the vertex domain.
//!
//! Both filters are applied with the shift recursion `z₀ = x`, `z_k = S z_{k-1}`:
//! every term `S^k x` is obtained by exchanging information once more with the
//! one-hop neighbourhood, never by forming matrix powers. The dense operators
//! `H(S)` are available for checking and for perturbation analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphShift;

/// Taps `h_0, …, h_K` of `Σ_k h_k S^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LsiTaps {
    h: DVector<f64>,
}

impl LsiTaps {
    pub fn new(h: DVector<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidArgument("a filter needs at least one tap".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter taps"));
        }
        Ok(Self { h })
    }

    pub fn from_slice(h: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(h))
    }

    /// Filter order `K`.
    pub fn order(&self) -> usize {
        self.h.len() - 1
    }

    pub fn taps(&self) -> &DVector<f64> {
        &self.h
    }
}

/// Node-variant taps: row `i` holds the taps of node `i`, column `k` is `h^{(k)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NvTaps {
    h: DMatrix<f64>,
}

impl NvTaps {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "node-variant taps need at least one node and one tap".into(),
            ));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node-variant filter taps"));
        }
        Ok(Self { h })
    }

    pub fn zeros(n: usize, order: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, order + 1),
        }
    }

    /// Every node uses the same taps `h`.
    pub fn embed_lsi(h: &LsiTaps, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("node count must be positive".into()));
        }
        Ok(Self {
            h: DMatrix::from_fn(n, h.h.len(), |_, k| h.h[k]),
        })
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn order(&self) -> usize {
        self.h.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Taps of node `i`.
    pub fn node(&self, i: usize) -> DVector<f64> {
        self.h.row(i).transpose()
    }

    /// `h^{(k)}`, the per-node weights of the `k`-th shift.
    pub fn shift_weights(&self, k: usize) -> DVector<f64> {
        self.h.column(k).into_owned()
    }
}

/// `y = Σ_k h_k S^k x`.
pub fn apply_lsi(h: &LsiTaps, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
    check_signal(x, g)?;
    let mut z = x.clone();
    let mut y = DVector::zeros(x.len());
    for (k, &hk) in h.h.iter().enumerate() {
        if k > 0 {
            z = g.matrix() * &z;
            guard_finite(&z)?;
        }
        for i in 0..y.len() {
            y[i] += hk * z[i];
        }
    }
    guard_finite(&y)?;
    Ok(y)
}

/// `y = Σ_k diag(h^{(k)}) S^k x`.
pub fn apply_nv(taps: &NvTaps, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
    check_signal(x, g)?;
    if taps.n() != g.n() {
        return Err(Error::dims("node-variant tap rows", g.n(), taps.n()));
    }
    let mut z = x.clone();
    let mut y = DVector::zeros(x.len());
    for k in 0..taps.h.ncols() {
        if k > 0 {
            z = g.matrix() * &z;
            guard_finite(&z)?;
        }
        for i in 0..y.len() {
            y[i] += taps.h[(i, k)] * z[i];
        }
    }
    guard_finite(&y)?;
    Ok(y)
}

/// A graph filter that can be run by shift recursion or materialized as `H(S)`.
pub trait GraphFilter {
    fn apply(&self, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>>;

    fn dense_operator(&self, g: &GraphShift) -> Result<DMatrix<f64>>;
}

impl GraphFilter for LsiTaps {
    fn apply(&self, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
        apply_lsi(self, x, g)
    }

    fn dense_operator(&self, g: &GraphShift) -> Result<DMatrix<f64>> {
        let n = g.n();
        let mut power = DMatrix::identity(n, n);
        let mut out = DMatrix::zeros(n, n);
        for (k, &hk) in self.h.iter().enumerate() {
            if k > 0 {
                power = g.matrix() * &power;
            }
            out += &power * hk;
        }
        Ok(out)
    }
}

impl GraphFilter for NvTaps {
    fn apply(&self, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
        apply_nv(self, x, g)
    }

    fn dense_operator(&self, g: &GraphShift) -> Result<DMatrix<f64>> {
        let n = g.n();
        if self.n() != n {
            return Err(Error::dims("node-variant tap rows", n, self.n()));
        }
        let mut power = DMatrix::identity(n, n);
        let mut out = DMatrix::zeros(n, n);
        for k in 0..self.h.ncols() {
            if k > 0 {
                power = g.matrix() * &power;
            }
            for i in 0..n {
                let w = self.h[(i, k)];
                for j in 0..n {
                    out[(i, j)] += w * power[(i, j)];
                }
            }
        }
        Ok(out)
    }
}

/// Either kind of filter, as read from a tap file.
#[derive(Clone, Debug, PartialEq)]
pub enum Taps {
    Lsi(LsiTaps),
    Nv(NvTaps),
}

impl Taps {
    pub fn order(&self) -> usize {
        match self {
            Taps::Lsi(h) => h.order(),
            Taps::Nv(h) => h.order(),
        }
    }

    /// The node-variant view, embedding LSI taps on `n` nodes.
    pub fn to_nv(&self, n: usize) -> Result<NvTaps> {
        match self {
            Taps::Lsi(h) => NvTaps::embed_lsi(h, n),
            Taps::Nv(h) if h.n() == n => Ok(h.clone()),
            Taps::Nv(h) => Err(Error::dims("node-variant tap rows", n, h.n())),
        }
    }
}

impl GraphFilter for Taps {
    fn apply(&self, x: &DVector<f64>, g: &GraphShift) -> Result<DVector<f64>> {
        match self {
            Taps::Lsi(h) => h.apply(x, g),
            Taps::Nv(h) => h.apply(x, g),
        }
    }

    fn dense_operator(&self, g: &GraphShift) -> Result<DMatrix<f64>> {
        match self {
            Taps::Lsi(h) => h.dense_operator(g),
            Taps::Nv(h) => h.dense_operator(g),
        }
    }
}

/// JSON tap file: `{ "kind": "lsi" | "nv", "k": .., "taps": [..] | [[..], ..] }`.
///
/// Designed node-variant filters additionally carry `offset` and `diagnostics`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TapFile {
    Lsi {
        k: usize,
        taps: Vec<f64>,
    },
    Nv {
        k: usize,
        taps: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostics: Option<serde_json::Value>,
    },
}

impl TapFile {
    pub fn from_taps(taps: &Taps) -> Self {
        match taps {
            Taps::Lsi(h) => TapFile::Lsi {
                k: h.order(),
                taps: h.taps().iter().copied().collect(),
            },
            Taps::Nv(h) => TapFile::Nv {
                k: h.order(),
                taps: h.matrix().row_iter().map(|r| r.iter().copied().collect()).collect(),
                offset: None,
                diagnostics: None,
            },
        }
    }

    pub fn to_taps(&self) -> Result<Taps> {
        match self {
            TapFile::Lsi { k, taps } => {
                if taps.len() != k + 1 {
                    return Err(Error::dims("LSI tap count (k + 1)", k + 1, taps.len()));
                }
                Ok(Taps::Lsi(LsiTaps::from_slice(taps)?))
            }
            TapFile::Nv { k, taps, .. } => {
                if let Some(bad) = taps.iter().find(|r| r.len() != k + 1) {
                    return Err(Error::dims("node-variant tap row (k + 1)", k + 1, bad.len()));
                }
                let n = taps.len();
                let h = DMatrix::from_fn(n, k + 1, |i, j| taps[i][j]);
                Ok(Taps::Nv(NvTaps::new(h)?))
            }
        }
    }

    pub fn offset(&self) -> Option<DVector<f64>> {
        match self {
            TapFile::Nv {
                offset: Some(c), ..
            } => Some(DVector::from_column_slice(c)),
            _ => None,
        }
    }
}

fn check_signal(x: &DVector<f64>, g: &GraphShift) -> Result<()> {
    if x.len() != g.n() {
        return Err(Error::dims("graph signal", g.n(), x.len()));
    }
    Ok(())
}

fn guard_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("filter output (overflow in shift recursion)"))
    }
}
