//! Graph matrix descriptions and their spectral decomposition.
//!
//! A [`GraphShift`] holds the dense symmetric matrix `S` that encodes the graph
//! (adjacency, Laplacian or any normalization of them). Its eigendecomposition
//! `S = V diag(λ) Vᵀ` is captured by a [`SpectralBasis`] with eigenvalues sorted
//! ascending and a deterministic sign convention on the eigenvectors, so that
//! graph Fourier coefficients are reproducible across runs.

use std::io::Read;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated asymmetry `|s_ij - s_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

const EIGEN_MAX_ITER: usize = 10_000;

/// Dense symmetric graph matrix description.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphShift {
    s: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl GraphShift {
    /// Wraps a matrix, rejecting non-square, non-finite or asymmetric input.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::dims("graph matrix columns", s.nrows(), s.ncols()));
        }
        if s.nrows() == 0 {
            return Err(Error::InvalidArgument("graph must have at least one node".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("graph matrix"));
        }
        let asym = max_asymmetry(&s);
        if asym > SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        Ok(Self { s, labels: None })
    }

    /// Builds a graph from `(i, j, weight)` records. Duplicate records are summed.
    ///
    /// Directed input is only accepted with `symmetrize`, in which case the
    /// matrix `(W + Wᵀ)/2` is used.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], symmetrize: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph must have at least one node".into()));
        }
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, weight) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if !weight.is_finite() {
                return Err(Error::NonFinite("edge weight"));
            }
            w[(i, j)] += weight;
        }
        let asym = max_asymmetry(&w);
        if asym > SYMMETRY_TOL {
            if !symmetrize {
                return Err(Error::Asymmetric(asym));
            }
            w = (&w + w.transpose()) * 0.5;
        }
        Self::new(w)
    }

    /// Reads an edge-list CSV with header `src,dst,weight`.
    ///
    /// When `n` is `None` the node count is one more than the largest index.
    pub fn from_edge_csv<R: Read>(reader: R, n: Option<usize>, symmetrize: bool) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            src: usize,
            dst: usize,
            weight: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut edges = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            edges.push((row.src, row.dst, row.weight));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges, symmetrize)
    }

    /// Parses the graph JSON format `{ "n": .., "edges": [[i, j, w], ..], "labels": [..] }`.
    pub fn from_json_str(text: &str, symmetrize: bool) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.into_graph(symmetrize)
    }

    pub fn to_graph_file(&self) -> GraphFile {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.s[(i, j)];
                if w != 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        GraphFile {
            n,
            edges,
            labels: self.labels.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::dims("node labels", self.n(), labels.len()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of undirected edges, i.e. nonzero entries strictly above the diagonal.
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.s[(i, j)] != 0.0)
            .count()
    }

    /// One exchange with the one-hop neighbourhood: `S x`.
    pub fn shift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::dims("graph signal", self.n(), x.len()));
        }
        Ok(&self.s * x)
    }

    pub fn eigendecompose(&self) -> Result<SpectralBasis> {
        SpectralBasis::decompose(&self.s)
    }

    /// `‖S‖₂`, the largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = SymmetricEigen::try_new(self.s.clone(), f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or(Error::NoConvergence(EIGEN_MAX_ITER))?;
        Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs())))
    }

    /// Rescales `S` to unit spectral norm.
    pub fn spectral_normalize(&self) -> Result<GraphShift> {
        if self.s.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroMatrix);
        }
        let norm = self.spectral_norm()?;
        let mut s = &self.s / norm;
        symmetrize_in_place(&mut s);
        Ok(GraphShift {
            s,
            labels: self.labels.clone(),
        })
    }
}

/// On-disk graph description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl GraphFile {
    pub fn into_graph(self, symmetrize: bool) -> Result<GraphShift> {
        let g = GraphShift::from_edges(self.n, &self.edges, symmetrize)?;
        match self.labels {
            Some(labels) => g.with_labels(labels),
            None => Ok(g),
        }
    }
}

/// Orthonormal eigenvectors (columns of `v`) and ascending eigenvalues of a graph shift.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    v: DMatrix<f64>,
    lambda: DVector<f64>,
    repeated: Vec<(usize, usize)>,
}

impl SpectralBasis {
    fn decompose(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        let eig = SymmetricEigen::try_new(s.clone(), f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or(Error::NoConvergence(EIGEN_MAX_ITER))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("eigenvalues are finite")
                .then(a.cmp(&b))
        });

        let lambda = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut v = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            fix_sign(&mut col);
            v.set_column(dst, &col);
        }

        let scale = lambda.amax().max(1.0);
        let repeated: Vec<(usize, usize)> = (1..n)
            .filter(|&i| (lambda[i] - lambda[i - 1]).abs() <= 1e-10 * scale)
            .map(|i| (i - 1, i))
            .collect();
        if !repeated.is_empty() {
            log::warn!(
                "graph shift has {} repeated eigenvalue pair(s); the graph Fourier basis is not unique",
                repeated.len()
            );
        }

        Ok(Self { v, lambda, repeated })
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Eigenvectors as columns, ordered like [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// The `i`-th eigenvector `v_i` (0-based, ascending eigenvalue order).
    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.v.column(i).into_owned()
    }

    /// Adjacent index pairs whose eigenvalues coincide to within `1e-10` (relative).
    pub fn repeated_eigenvalues(&self) -> &[(usize, usize)] {
        &self.repeated
    }

    pub fn has_distinct_eigenvalues(&self) -> bool {
        self.repeated.is_empty()
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.lambda[j];
        }
        let mut s = scaled * self.v.transpose();
        symmetrize_in_place(&mut s);
        s
    }

    /// Rebuilds the graph shift from the decomposition.
    pub fn shift(&self) -> GraphShift {
        GraphShift {
            s: self.reconstruct(),
            labels: None,
        }
    }
}

/// Flips `col` so its largest-magnitude entry is positive; ties go to the lowest index.
pub(crate) fn fix_sign(col: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.neg_mut();
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn symmetric_pair_of_records() {
        let g = GraphShift::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)], false).unwrap();
        assert_eq!(g.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn empty_edge_list_gives_zero_matrix() {
        let g = GraphShift::from_edges(3, &[], false).unwrap();
        assert_eq!(g.matrix(), &DMatrix::zeros(3, 3));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn directed_edge_is_halved_when_symmetrized() {
        let g = GraphShift::from_edges(2, &[(0, 1, 2.0)], true).unwrap();
        assert_eq!(g.matrix()[(0, 1)], 1.0);
        assert_eq!(g.matrix()[(1, 0)], 1.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            GraphShift::from_edges(2, &[(0, 2, 1.0)], false),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
        assert!(matches!(
            GraphShift::from_edges(2, &[(0, 1, 1.0)], false),
            Err(Error::Asymmetric(_))
        ));
        assert!(matches!(
            GraphShift::from_edges(2, &[(0, 1, f64::NAN), (1, 0, 1.0)], false),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn duplicate_records_are_summed() {
        let g = GraphShift::from_edges(2, &[(0, 1, 1.0), (0, 1, 0.5), (1, 0, 1.5)], false).unwrap();
        assert_eq!(g.matrix()[(0, 1)], 1.5);
    }

    #[test]
    fn csv_and_json_inputs() {
        let csv = "src,dst,weight\n0,1,0.5\n1,0,0.5\n1,2,2\n2,1,2\n";
        let g = GraphShift::from_edge_csv(csv.as_bytes(), None, false).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 2);

        let json = r#"{ "n": 3, "edges": [[0,1,0.5],[1,0,0.5],[1,2,2.0],[2,1,2.0]], "labels": ["a","b","c"] }"#;
        let h = GraphShift::from_json_str(json, false).unwrap();
        assert_eq!(h.matrix(), g.matrix());
        assert_eq!(h.labels().unwrap()[2], "c");

        let back = serde_json::to_string(&h.to_graph_file()).unwrap();
        assert_eq!(GraphShift::from_json_str(&back, false).unwrap(), h);
    }

    #[test]
    fn identity_decomposition() {
        let g = GraphShift::new(DMatrix::identity(2, 2)).unwrap();
        let b = g.eigendecompose().unwrap();
        assert_eq!(b.eigenvalues().as_slice(), &[1.0, 1.0]);
        assert!((b.eigenvectors().transpose() * b.eigenvectors() - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((b.reconstruct() - g.matrix()).norm() < 1e-12);
        assert_eq!(b.repeated_eigenvalues(), &[(0, 1)]);
    }

    #[test]
    fn path_graph_on_two_nodes() {
        let g = GraphShift::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)], false).unwrap();
        let b = g.eigendecompose().unwrap();
        assert!((b.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((b.eigenvalues()[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // ties in magnitude resolve to the lowest index being positive
        let v0 = b.eigenvector(0);
        let v1 = b.eigenvector(1);
        assert!((v0[0] - r).abs() < 1e-14 && (v0[1] + r).abs() < 1e-14);
        assert!((v1[0] - r).abs() < 1e-14 && (v1[1] - r).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_symmetric(8, &mut rng);
        let b = GraphShift::new(s.clone()).unwrap().eigendecompose().unwrap();
        assert!((b.reconstruct() - &s).norm() <= 1e-10 * s.norm());
    }

    #[test]
    fn sign_convention_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GraphShift::new(random_symmetric(12, &mut rng)).unwrap();
        let a = g.eigendecompose().unwrap();
        let b = g.eigendecompose().unwrap();
        assert_eq!(a, b);
        for col in a.eigenvectors().column_iter() {
            let (imax, _) = col.iter().enumerate().fold((0, 0.0), |acc, (i, v)| {
                if v.abs() > acc.1 { (i, v.abs()) } else { acc }
            });
            assert!(col[imax] > 0.0);
        }
        assert!(a.eigenvalues().as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spectral_normalization_examples() {
        let g = GraphShift::new(DMatrix::identity(3, 3) * 2.0).unwrap();
        assert!((g.spectral_normalize().unwrap().matrix() - DMatrix::identity(3, 3)).norm() < 1e-15);

        let g = GraphShift::from_edges(2, &[(0, 1, 3.0), (1, 0, 3.0)], false).unwrap();
        let n = g.spectral_normalize().unwrap();
        assert!((n.matrix() - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).norm() < 1e-15);

        let again = n.spectral_normalize().unwrap();
        assert!((again.matrix() - n.matrix()).amax() <= 1e-12);

        let zero = GraphShift::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(zero.spectral_normalize(), Err(Error::ZeroMatrix)));
    }
}
