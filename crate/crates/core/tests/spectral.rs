mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use nvgf::filters::{apply_lsi, apply_nv, GraphFilter, LsiTaps, NvTaps, TapFile, Taps};
use nvgf::graph::GraphShift;
use nvgf::spectral::{creation_index, gft, igft, lsi_frequency_response, nv_frequency_matrix, Vandermonde};
use nvgf::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, n: usize, k: usize) -> (GraphShift, NvTaps, DVector<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let g = dense_graph(n, &mut r);
    let h = nv_taps(n, k, &mut r);
    let x = gaussian(n, &mut r);
    (g, h, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_and_inverse(seed in any::<u64>(), n in 2usize..24) {
        let (g, _, x) = instance(seed, n, 0);
        let b = g.eigendecompose().unwrap();
        let xt = gft(&x, &b).unwrap();
        prop_assert!((xt.coefficients().norm() - x.norm()).abs() <= 1e-10 * x.norm().max(1.0));
        prop_assert!((igft(&xt) - &x).amax() <= 1e-10);
    }

    #[test]
    fn nv_filter_matches_explicit_powers(seed in any::<u64>(), n in 2usize..20, k in 0usize..5) {
        let (g, h, x) = instance(seed, n, k);
        let oracle = dense_nv(&h, g.matrix());
        prop_assert!((apply_nv(&h, &x, &g).unwrap() - &oracle * &x).amax() <= 1e-10);
        prop_assert!((h.dense_operator(&g).unwrap() - oracle).amax() <= 1e-10);
    }

    #[test]
    fn lsi_is_embedded_nv(seed in any::<u64>(), n in 2usize..20, k in 0usize..5) {
        let (g, _, x) = instance(seed, n, k);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let h = lsi_taps(k, &mut r);
        let nv = NvTaps::embed_lsi(&h, n).unwrap();
        prop_assert!((apply_lsi(&h, &x, &g).unwrap() - apply_nv(&nv, &x, &g).unwrap()).amax() <= 1e-12);
    }

    #[test]
    fn frequency_matrix_is_spectral_operator(seed in any::<u64>(), n in 2usize..20, k in 0usize..5) {
        let (g, h, _) = instance(seed, n, k);
        let b = g.eigendecompose().unwrap();
        let m = nv_frequency_matrix(&h, &b).unwrap();
        let v = b.eigenvectors();
        let oracle = v.transpose() * dense_nv(&h, g.matrix()) * v;
        prop_assert!((m.matrix() - oracle).amax() <= 1e-10);
    }
}

#[test]
fn single_frequency_input_entries() {
    let (g, h, _) = instance(11, 9, 3);
    let b = g.eigendecompose().unwrap();
    let v = b.eigenvectors();
    let lam = b.eigenvalues();
    let t = 6;
    let y = gft(&apply_nv(&h, &b.eigenvector(t), &g).unwrap(), &b).unwrap();
    for i in 0..9 {
        let expected: f64 = (0..9)
            .map(|j| horner(h.node(j).as_slice(), lam[t]) * v[(j, i)] * v[(j, t)])
            .sum();
        assert!((y.coefficients()[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn lsi_response_is_polynomial_at_eigenvalues() {
    let mut r = rng(3);
    let g = dense_graph(12, &mut r);
    let b = g.eigendecompose().unwrap();
    let h = lsi_taps(4, &mut r);
    let resp = lsi_frequency_response(&h, &Vandermonde::from_basis(&b, 4)).unwrap();
    for (i, &l) in b.eigenvalues().iter().enumerate() {
        assert!((resp[i] - horner(h.taps().as_slice(), l)).abs() < 1e-13);
    }
}

#[test]
fn embedded_lsi_has_diagonal_frequency_matrix() {
    let mut r = rng(4);
    let g = dense_graph(10, &mut r);
    let b = g.eigendecompose().unwrap();
    let nv = NvTaps::embed_lsi(&lsi_taps(3, &mut r), 10).unwrap();
    let c = creation_index(&nv_frequency_matrix(&nv, &b).unwrap());
    assert!(!c.creates);
    assert!(c.offdiag_energy <= 1e-10);
}

#[test]
fn node_variant_taps_create_frequencies() {
    let (g, h, _) = instance(5, 10, 2);
    let b = g.eigendecompose().unwrap();
    let c = creation_index(&nv_frequency_matrix(&h, &b).unwrap());
    assert!(c.creates);
    assert!(c.offdiag_energy > 1e-3);
}

#[test]
fn basis_is_orthonormal_ascending_and_sign_fixed() {
    let mut r = rng(6);
    let g = dense_graph(15, &mut r);
    let b = g.eigendecompose().unwrap();
    let v = b.eigenvectors();
    assert!((v.transpose() * v - DMatrix::identity(15, 15)).amax() < 1e-12);
    assert!((b.reconstruct() - g.matrix()).amax() < 1e-12);
    assert!(b.eigenvalues().as_slice().windows(2).all(|w| w[0] <= w[1]));
    for j in 0..15 {
        let col = v.column(j);
        let big = col.iter().cloned().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a });
        assert!(big > 0.0);
    }
    assert!((g.spectral_norm().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn repeated_eigenvalues_are_reported() {
    // complete graph: eigenvalue -1 with multiplicity n - 1
    let n = 5;
    let s = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    let b = GraphShift::new(s).unwrap().eigendecompose().unwrap();
    assert!(!b.has_distinct_eigenvalues());
    assert!(!b.repeated_eigenvalues().is_empty());
}

#[test]
fn graph_inputs_are_validated() {
    let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
    assert!(matches!(GraphShift::new(asym), Err(Error::Asymmetric(_))));
    assert!(matches!(
        GraphShift::from_edges(3, &[(0, 3, 1.0)], true),
        Err(Error::IndexOutOfRange { index: 3, n: 3 })
    ));
    assert!(GraphShift::from_edges(2, &[(0, 1, 1.0)], false).is_err());
    let g = GraphShift::from_edges(2, &[(0, 1, 1.0)], true).unwrap();
    assert_eq!(g.matrix()[(1, 0)], 0.5);
}

#[test]
fn graph_file_formats_round_trip() {
    let csv = "src,dst,weight\n0,1,0.5\n1,0,0.5\n1,2,2.0\n2,1,2.0\n";
    let g = GraphShift::from_edge_csv(csv.as_bytes(), None, false).unwrap();
    assert_eq!(g.n(), 3);
    assert_eq!(g.edge_count(), 2);
    let json = serde_json::to_string(&g.to_graph_file()).unwrap();
    let back = GraphShift::from_json_str(&json, false).unwrap();
    assert_eq!(back.matrix(), g.matrix());

    let labelled = r#"{"n": 2, "edges": [[0, 1, 1.0], [1, 0, 1.0]], "labels": ["a", "b"]}"#;
    let g = GraphShift::from_json_str(labelled, false).unwrap();
    assert_eq!(g.labels().unwrap(), ["a", "b"]);
}

#[test]
fn tap_files_round_trip() {
    let mut r = rng(8);
    let nv = nv_taps(4, 2, &mut r);
    let file = TapFile::from_taps(&Taps::Nv(nv.clone()));
    let text = serde_json::to_string(&file).unwrap();
    assert!(text.contains("\"kind\":\"nv\""));
    match serde_json::from_str::<TapFile>(&text).unwrap().to_taps().unwrap() {
        Taps::Nv(back) => assert_eq!(back.matrix(), nv.matrix()),
        Taps::Lsi(_) => panic!("kind changed"),
    }
    let bad: TapFile = serde_json::from_str(r#"{"kind":"lsi","k":2,"taps":[1.0,2.0]}"#).unwrap();
    assert!(bad.to_taps().is_err());
    let lsi = LsiTaps::from_slice(&[1.0, 0.5]).unwrap();
    assert_eq!(Taps::Lsi(lsi).to_nv(3).unwrap().n(), 3);
}

#[test]
fn dimension_mismatches_are_errors() {
    let (g, h, _) = instance(9, 5, 1);
    assert!(apply_nv(&h, &DVector::zeros(4), &g).is_err());
    let b = dense_graph(6, &mut rng(1)).eigendecompose().unwrap();
    assert!(nv_frequency_matrix(&h, &b).is_err());
    assert!(gft(&DVector::zeros(5), &b).is_err());
}
