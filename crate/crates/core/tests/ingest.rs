use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use nvgf::ingest::{
    authorship_dataset, band_patterns, build_wan, class_counts, is_connected, knn_sparsify, movie_dataset,
    pearson_item_graph, pearson_weights, random_graph, random_signed_graph, synthetic_band_dataset, tokenize,
    wan_support, wan_weights, word_frequency_signal, Corpus, RatingsTable, Split, Task,
};
use nvgf::spectral::gft;

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| s.to_string()).collect()
}

#[test]
fn wan_weights_by_hand() {
    // "a x b a": from a(0): x skipped (discount still advances), b at distance 2
    // gets alpha, a at distance 3 is outside the window
    let corpus = Corpus::from_raw(&["a x b a. b a"], words(&["a", "b"])).unwrap();
    let w = wan_weights(&corpus, 0.5, 2).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 2.0, 0.0]);
    assert_eq!(w, expected);
}

#[test]
fn wan_support_normalizes_rows_and_symmetrizes() {
    let w = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let g = wan_support(&w, None).unwrap();
    // D⁻¹W = [[0, .5, .5], [1, 0, 0], [0, 0, 0]] (pseudo-degree for the last row)
    let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let s: DMatrix<f64> = (&p + p.transpose()) * 0.5;
    let norm = s.clone().svd(false, false).singular_values.max();
    assert!((g.matrix() - s / norm).amax() < 1e-14);
}

#[test]
fn corpus_wan_is_symmetric_and_labelled() {
    let corpus = Corpus::from_raw(
        &["The cat and the dog. A dog of the house!", "Of course the cat and a mouse?"],
        words(&["the", "and", "a", "of"]),
    )
    .unwrap();
    let g = build_wan(&corpus, 0.75, 3).unwrap();
    assert_eq!(g.labels().unwrap(), ["the", "and", "a", "of"]);
    assert!((g.spectral_norm().unwrap() - 1.0).abs() < 1e-12);
    assert!(wan_weights(&corpus, 1.0, 3).is_err());
    assert!(wan_weights(&corpus, 0.5, 0).is_err());
}

#[test]
fn frequency_signal_sums_to_one() {
    let fw = words(&["the", "a"]);
    let x = word_frequency_signal(&tokenize("The end. A the x."), &fw).unwrap();
    assert_eq!(x, DVector::from_column_slice(&[2.0 / 3.0, 1.0 / 3.0]));
    assert!(word_frequency_signal(&tokenize("nothing here"), &fw).is_err());
}

#[test]
fn authorship_dataset_is_balanced_per_split() {
    let fw = words(&["the", "a", "of", "and"]);
    let make = |style: &str, i: usize| tokenize(&format!("{style} {i} the a. of and {style}"));
    let author: Vec<_> = (0..40).map(|i| make("the of", i)).collect();
    let others: Vec<_> = (0..50).map(|i| make("a and", i)).collect();
    let (g, data, split) = authorship_dataset(&author, &others, &fw, 0.75, 5, 3).unwrap();
    assert_eq!(g.n(), 4);
    assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (70, 6, 4));
    for part in [&split.train, &split.valid, &split.test] {
        let ones = part.iter().filter(|&&i| data.label(i) == 1.0).count();
        assert_eq!(2 * ones, part.len());
    }
    assert!(authorship_dataset(&author, &others[..10], &fw, 0.75, 5, 3).is_err());
}

/// Independent Pearson weight: covariance over co-raters centered at item i's co-rater mean.
fn pearson_oracle(r: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let co: Vec<usize> = (0..r.nrows()).filter(|&u| r[(u, i)] > 0.0 && r[(u, j)] > 0.0).collect();
    if co.len() < 2 {
        return 0.0;
    }
    let m = co.len() as f64;
    let mi = co.iter().map(|&u| r[(u, i)]).sum::<f64>() / m;
    let mj = co.iter().map(|&u| r[(u, j)]).sum::<f64>() / m;
    // the two centerings differ by a term that sums to zero
    co.iter().map(|&u| (r[(u, i)] - mi) * (r[(u, j)] - mj)).sum::<f64>() / m
}

fn ratings() -> RatingsTable {
    let csv = "user,item,rating\n\
               1,10,5\n1,20,3\n1,30,4\n\
               2,10,2\n2,20,4\n2,30,1\n\
               3,10,4\n3,20,2\n3,40,5\n\
               4,20,5\n4,30,2\n4,40,1\n\
               5,10,1\n5,30,5\n5,40,3\n";
    RatingsTable::from_csv(csv.as_bytes()).unwrap()
}

#[test]
fn pearson_weights_match_oracle() {
    let t = ratings();
    assert_eq!((t.n_users(), t.n_items(), t.len()), (5, 4, 15));
    let w = pearson_weights(&t).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((w[(i, j)] - pearson_oracle(t.ratings(), i, j)).abs() < 1e-12, "({i}, {j})");
        }
    }
}

#[test]
fn knn_keeps_union_of_neighbors() {
    let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.1, 0.9, 1.0, 0.2, 0.1, 0.2, 1.0]);
    let k = knn_sparsify(&w, 1);
    // 0 -> 1, 1 -> 0, 2 -> 1
    let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.9, 1.0, 0.2, 0.0, 0.2, 1.0]);
    assert_eq!(k, expected);
}

#[test]
fn item_graph_and_movie_dataset() {
    let t = ratings();
    let g = pearson_item_graph(&t, 2).unwrap();
    assert_eq!(g.labels().unwrap(), ["10", "20", "30", "40"]);
    assert!((0..4).all(|i| g.matrix()[(i, i)] == 0.0));

    let data = movie_dataset(&t, 1).unwrap();
    assert_eq!(data.task(), Task::Regression { target: 1 });
    assert_eq!(data.labels(), [3.0, 4.0, 2.0, 5.0]);
    assert!(data.signals().iter().all(|x| x[1] == 0.0));
    assert!(movie_dataset(&t, 4).is_err());

    let top = t.top_items(2);
    assert_eq!(top.len(), 2);
    assert_eq!(t.restrict(&top).unwrap().n_items(), 2);
}

#[test]
fn ratings_are_validated() {
    assert!(RatingsTable::new(&[(1, 1, 6)]).is_err());
    assert!(RatingsTable::new(&[(1, 1, 3), (1, 1, 4)]).is_err());
}

#[test]
fn standard_split_partitions_indices() {
    let s = Split::standard(1000, 4);
    assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (810, 90, 100));
    let all: BTreeSet<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
    assert_eq!(all.len(), 1000);
    assert_eq!(Split::standard(1000, 4), s);
    assert!(Split::random(10, 0.8, 0.3, 0).is_err());
}

#[test]
fn random_graphs_are_connected_and_normalized() {
    for seed in 0..5 {
        for g in [random_graph(20, 0.15, seed).unwrap(), random_signed_graph(20, 0.15, seed).unwrap()] {
            assert!(is_connected(&g));
            assert!((g.spectral_norm().unwrap() - 1.0).abs() < 1e-12);
        }
    }
    let signed = random_signed_graph(20, 0.5, 1).unwrap();
    assert!(signed.matrix().iter().any(|&v| v < 0.0));
}

#[test]
fn band_patterns_are_invisible_to_pooled_shift_invariant_filters() {
    let g = random_signed_graph(32, 0.2, 7).unwrap();
    let b = g.eigendecompose().unwrap();
    let ones = DVector::from_element(32, 1.0);
    for (c, p) in band_patterns(&b, 4).unwrap().iter().enumerate() {
        let mut sp = p.clone();
        for _ in 0..=4 {
            assert!(ones.dot(&sp).abs() < 1e-10);
            sp = g.matrix() * sp;
        }
        let pt = gft(p, &b).unwrap();
        let band = if c == 0 { 0..8 } else { 24..32 };
        for i in 0..32 {
            if !band.contains(&i) {
                assert!(pt.coefficients()[i].abs() < 1e-12);
            }
        }
    }
    let data = synthetic_band_dataset(&b, 100, 1).unwrap();
    assert_eq!(class_counts(&data).into_iter().collect::<Vec<_>>(), [(0, 50), (1, 50)]);
    assert_eq!(synthetic_band_dataset(&b, 100, 1).unwrap(), data);
}

#[test]
fn dataset_csv_layout() {
    let data = nvgf::ingest::Dataset::new(
        Task::Classification { classes: 2 },
        vec![DVector::from_column_slice(&[1.0, 2.0]), DVector::from_column_slice(&[3.0, 4.0])],
        vec![0.0, 1.0],
    )
    .unwrap();
    let mut s = Vec::new();
    data.write_signals_csv(&mut s).unwrap();
    assert_eq!(String::from_utf8(s).unwrap(), "1,2\n3,4\n");
    let mut l = Vec::new();
    data.write_labels_csv(&mut l).unwrap();
    assert_eq!(String::from_utf8(l).unwrap(), "index,label\n0,0\n1,1\n");
    assert!(nvgf::ingest::Dataset::new(Task::Classification { classes: 2 }, vec![DVector::zeros(2)], vec![2.0]).is_err());
}

#[test]
fn dataset_files_round_trip() {
    let t = ratings();
    let data = movie_dataset(&t, 2).unwrap();
    let (mut s, mut l, mut m) = (Vec::new(), Vec::new(), Vec::new());
    data.write_signals_csv(&mut s).unwrap();
    data.write_labels_csv(&mut l).unwrap();
    let split = Split::standard(data.len(), 3);
    split.write_manifest(&mut m, data.task(), 3).unwrap();
    let (back_split, task, seed) = Split::read_manifest(m.as_slice()).unwrap();
    assert_eq!((back_split, task, seed), (split, data.task(), 3));
    let back = nvgf::ingest::Dataset::read_csv(task, s.as_slice(), l.as_slice()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn pruning_drops_items_without_co_ratings() {
    // item 50 has a single rater, item 60 is rated 3 by everyone
    let mut entries = vec![(1, 50, 4), (1, 60, 3), (2, 60, 3), (3, 60, 3)];
    for (u, i, r) in [(1, 10, 5), (2, 10, 2), (3, 10, 4), (1, 20, 3), (2, 20, 4), (3, 20, 1)] {
        entries.push((u, i, r));
    }
    let t = RatingsTable::new(&entries).unwrap();
    assert!(pearson_weights(&t).is_err());
    let (pruned, dropped) = nvgf::ingest::prune_items(&t).unwrap();
    assert_eq!(dropped, [50, 60]);
    assert_eq!(pruned.item_ids(), [10, 20]);
    assert!(pearson_weights(&pruned).is_ok());
}
