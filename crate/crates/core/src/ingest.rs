//! Dataset construction: word adjacency networks, item-similarity graphs from
//! ratings, labeled datasets with train/validation/test splits, and synthetic
//! generators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphShift, SpectralBasis};

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

/// A text split into sentences of lowercase tokens.
pub type Text = Vec<Vec<String>>;

/// Lowercase, split sentences on `.`, `!`, `?`, split tokens on whitespace and
/// strip every character that is neither alphanumeric nor an apostrophe.
pub fn tokenize(text: &str) -> Text {
    text.split(['.', '!', '?'])
        .map(|sentence| {
            sentence
                .split_whitespace()
                .map(|w| {
                    w.chars()
                        .filter(|c| c.is_alphanumeric() || *c == '\'')
                        .flat_map(char::to_lowercase)
                        .collect::<String>()
                })
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// One function word per line; blank lines and `#` comments are ignored.
pub fn read_function_words<R: Read>(mut reader: R) -> Result<Vec<String>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    texts: Vec<Text>,
    function_words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(texts: Vec<Text>, function_words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(function_words.len());
        for (i, w) in function_words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate function word `{w}`")));
            }
        }
        if function_words.is_empty() {
            return Err(Error::InvalidArgument("function word list is empty".into()));
        }
        let texts = texts
            .into_iter()
            .map(|t| t.into_iter().filter(|s| !s.is_empty()).collect())
            .collect();
        Ok(Self {
            texts,
            function_words,
            index,
        })
    }

    pub fn from_raw<S: AsRef<str>>(texts: &[S], function_words: Vec<String>) -> Result<Self> {
        Self::new(texts.iter().map(|t| tokenize(t.as_ref())).collect(), function_words)
    }

    pub fn texts(&self) -> &[Text] {
        &self.texts
    }

    pub fn function_words(&self) -> &[String] {
        &self.function_words
    }

    pub fn n(&self) -> usize {
        self.function_words.len()
    }

    fn positions(&self, sentence: &[String]) -> Vec<Option<usize>> {
        sentence.iter().map(|w| self.index.get(w).copied()).collect()
    }

    /// Discounted co-occurrence weights `w_ij` of a single text.
    pub fn text_weights(&self, text: &Text, alpha: f64, window: usize) -> DMatrix<f64> {
        let n = self.n();
        let mut w = DMatrix::zeros(n, n);
        for sentence in text {
            let slots = self.positions(sentence);
            for (e, from) in slots.iter().enumerate() {
                let Some(i) = *from else { continue };
                let mut discount = 1.0;
                for d in 1..=window {
                    match slots.get(e + d) {
                        Some(Some(j)) => w[(i, *j)] += discount,
                        Some(None) => {}
                        None => break,
                    }
                    discount *= alpha;
                }
            }
        }
        w
    }
}

fn check_wan_args(alpha: f64, window: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("discount must lie in (0, 1), got {alpha}")));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window length must be at least 1".into()));
    }
    Ok(())
}

/// Raw directed WAN weights summed over every text of the corpus.
pub fn wan_weights(corpus: &Corpus, alpha: f64, window: usize) -> Result<DMatrix<f64>> {
    check_wan_args(alpha, window)?;
    let n = corpus.n();
    let parts: Vec<DMatrix<f64>> = corpus
        .texts
        .par_iter()
        .map(|t| corpus.text_weights(t, alpha, window))
        .collect();
    Ok(parts.into_iter().fold(DMatrix::zeros(n, n), |acc, w| acc + w))
}

/// `S = ½(D⁻¹W + WᵀD⁻¹)` with `D = diag(W1)`, scaled to unit spectral norm.
///
/// Rows with zero degree get a pseudo-degree of one.
pub fn wan_support(w: &DMatrix<f64>, labels: Option<&[String]>) -> Result<GraphShift> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::dims("WAN weight columns", n, w.ncols()));
    }
    let mut inv_deg = DVector::zeros(n);
    for i in 0..n {
        let d: f64 = w.row(i).sum();
        if d == 0.0 {
            let name = labels.and_then(|l| l.get(i)).map_or_else(|| i.to_string(), |s| s.clone());
            log::warn!("function word `{name}` has no outgoing weight; using pseudo-degree 1");
            inv_deg[i] = 1.0;
        } else {
            inv_deg[i] = 1.0 / d;
        }
    }
    let dw = DMatrix::from_diagonal(&inv_deg) * w;
    let s = (&dw + dw.transpose()) * 0.5;
    let mut g = GraphShift::new(s)?;
    if g.matrix().amax() > 0.0 {
        g = g.spectral_normalize()?;
    }
    match labels {
        Some(l) => g.with_labels(l.to_vec()),
        None => Ok(g),
    }
}

pub fn build_wan(corpus: &Corpus, alpha: f64, window: usize) -> Result<GraphShift> {
    let w = wan_weights(corpus, alpha, window)?;
    wan_support(&w, Some(corpus.function_words()))
}

/// Function-word counts normalized to unit 1-norm.
pub fn word_frequency_signal(text: &Text, function_words: &[String]) -> Result<DVector<f64>> {
    let index: HashMap<&str, usize> = function_words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut x: DVector<f64> = DVector::zeros(function_words.len());
    for word in text.iter().flatten() {
        if let Some(&i) = index.get(word.as_str()) {
            x[i] += 1.0;
        }
    }
    let total = x.sum();
    if total == 0.0 {
        return Err(Error::InsufficientData("text contains no function words".into()));
    }
    Ok(x / total)
}

/// `(train, valid, test)` text counts for one author: 95% of texts are used
/// for training (8% of which are held out for validation) and 5% for testing.
pub fn authorship_split_sizes(texts: usize) -> (usize, usize, usize) {
    let train_all = (0.95 * texts as f64).round() as usize;
    let test = texts - train_all;
    let valid = (0.08 * train_all as f64).round() as usize;
    (train_all - valid, valid, test)
}

/// Binary authorship dataset.
///
/// The WAN is built from the author's training and validation texts only.
/// Each split is completed with an equal number of texts drawn at random from
/// `others` (label 0).
pub fn authorship_dataset(
    author: &[Text],
    others: &[Text],
    function_words: &[String],
    alpha: f64,
    window: usize,
    seed: u64,
) -> Result<(GraphShift, Dataset, Split)> {
    let (train, valid, test) = authorship_split_sizes(author.len());
    if train == 0 || test == 0 {
        return Err(Error::InsufficientData(format!(
            "{} author texts are too few for a 95/5 split",
            author.len()
        )));
    }
    if others.len() < author.len() {
        return Err(Error::InsufficientData(format!(
            "need at least {} texts from other authors, got {}",
            author.len(),
            others.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<usize> = (0..author.len()).collect();
    a.shuffle(&mut rng);
    let mut o: Vec<usize> = (0..others.len()).collect();
    o.shuffle(&mut rng);

    let wan_texts: Vec<Text> = a[..train + valid].iter().map(|&i| author[i].clone()).collect();
    let corpus = Corpus::new(wan_texts, function_words.to_vec())?;
    let graph = build_wan(&corpus, alpha, window)?;

    let mut signals = Vec::with_capacity(2 * author.len());
    let mut labels = Vec::with_capacity(2 * author.len());
    let mut split = Split::default();
    let bounds = [(0, train), (train, train + valid), (train + valid, author.len())];
    for (part, &(lo, hi)) in bounds.iter().enumerate() {
        for (texts, order, label) in [(author, &a, 1.0), (others, &o, 0.0)] {
            for &t in &order[lo..hi] {
                let idx = signals.len();
                signals.push(word_frequency_signal(&texts[t], function_words)?);
                labels.push(label);
                match part {
                    0 => split.train.push(idx),
                    1 => split.valid.push(idx),
                    _ => split.test.push(idx),
                }
            }
        }
    }
    let data = Dataset::new(Task::Classification { classes: 2 }, signals, labels)?;
    Ok((graph, data, split))
}

// ---------------------------------------------------------------------------
// Ratings
// ---------------------------------------------------------------------------

/// Integer ratings in `1..=5`, one per `(user, item)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsTable {
    users: Vec<u64>,
    items: Vec<u64>,
    /// `users × items`, zero where unrated.
    dense: DMatrix<f64>,
}

impl RatingsTable {
    pub fn new(entries: &[(u64, u64, u8)]) -> Result<Self> {
        let users: Vec<u64> = entries.iter().map(|e| e.0).collect::<BTreeSet<_>>().into_iter().collect();
        let items: Vec<u64> = entries.iter().map(|e| e.1).collect::<BTreeSet<_>>().into_iter().collect();
        let user_ix: HashMap<u64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_ix: HashMap<u64, usize> = items.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let mut dense = DMatrix::zeros(users.len(), items.len());
        for &(u, i, r) in entries {
            if !(1..=5).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "rating {r} for user {u}, item {i} is outside 1..=5"
                )));
            }
            let slot = &mut dense[(user_ix[&u], item_ix[&i])];
            if *slot != 0.0 {
                return Err(Error::InvalidArgument(format!("duplicate rating for user {u}, item {i}")));
            }
            *slot = f64::from(r);
        }
        Ok(Self { users, items, dense })
    }

    /// CSV with header `user,item,rating`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<(u64, u64, u8)>() {
            entries.push(row?);
        }
        Self::new(&entries)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// External item ids, in node order.
    pub fn item_ids(&self) -> &[u64] {
        &self.items
    }

    pub fn ratings(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn len(&self) -> usize {
        self.dense.iter().filter(|&&r| r != 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item_counts(&self) -> Vec<usize> {
        self.dense
            .column_iter()
            .map(|c| c.iter().filter(|&&r| r != 0.0).count())
            .collect()
    }

    /// Indices of the `count` most-rated items; ties go to the lower index.
    pub fn top_items(&self, count: usize) -> Vec<usize> {
        let counts = self.item_counts();
        let mut order: Vec<usize> = (0..self.n_items()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order.truncate(count);
        order
    }

    /// Restrict to the given item columns, in the given order, dropping users
    /// left without ratings.
    pub fn restrict(&self, items: &[usize]) -> Result<Self> {
        if let Some(&bad) = items.iter().find(|&&i| i >= self.n_items()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                n: self.n_items(),
            });
        }
        let keep: Vec<usize> = (0..self.n_users())
            .filter(|&u| items.iter().any(|&i| self.dense[(u, i)] != 0.0))
            .collect();
        let dropped = self.n_users() - keep.len();
        if dropped > 0 {
            log::info!("dropping {dropped} users with no ratings on the selected items");
        }
        Ok(Self {
            users: keep.iter().map(|&u| self.users[u]).collect(),
            items: items.iter().map(|&i| self.items[i]).collect(),
            dense: DMatrix::from_fn(keep.len(), items.len(), |u, i| self.dense[(keep[u], items[i])]),
        })
    }
}

/// Repeatedly drop items that [`pearson_weights`] would reject: items with no
/// partner sharing at least two raters, and items whose ratings are constant.
/// Returns the pruned table and the dropped item ids.
pub fn prune_items(table: &RatingsTable) -> Result<(RatingsTable, Vec<u64>)> {
    let mut current = table.clone();
    let mut dropped = Vec::new();
    loop {
        let r = current.ratings();
        let n = current.n_items();
        let raters: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..current.n_users()).filter(|&u| r[(u, i)] != 0.0).collect())
            .collect();
        let linked = |i: usize| {
            (0..n).any(|j| j != i && raters[i].iter().filter(|&&u| r[(u, j)] != 0.0).nth(1).is_some())
        };
        let varies = |i: usize| raters[i].iter().any(|&u| r[(u, i)] != r[(raters[i][0], i)]);
        let keep: Vec<usize> = (0..n).filter(|&i| raters[i].len() >= 2 && varies(i) && linked(i)).collect();
        if keep.len() == n {
            return Ok((current, dropped));
        }
        if keep.is_empty() {
            return Err(Error::InsufficientData(
                "no item has enough co-ratings to build a similarity graph".into(),
            ));
        }
        for i in (0..n).filter(|i| !keep.contains(i)) {
            log::warn!("dropping item {} with insufficient co-ratings", current.item_ids()[i]);
            dropped.push(current.item_ids()[i]);
        }
        current = current.restrict(&keep)?;
    }
}

/// Co-rater Pearson weights `w_ij = |T_ij|⁻¹ Σ (x_i − μ_ij)(x_j − μ_ij)`.
///
/// Pairs with fewer than two co-raters get weight zero. The diagonal holds
/// each item's rating variance over its own raters.
pub fn pearson_weights(table: &RatingsTable) -> Result<DMatrix<f64>> {
    let n = table.n_items();
    let r = table.ratings();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let co: Vec<usize> = (0..table.n_users())
                        .filter(|&u| r[(u, i)] != 0.0 && r[(u, j)] != 0.0)
                        .collect();
                    if co.len() < 2 {
                        return 0.0;
                    }
                    let m = co.len() as f64;
                    let mu: f64 = co.iter().map(|&u| r[(u, i)]).sum::<f64>() / m;
                    co.iter().map(|&u| (r[(u, i)] - mu) * (r[(u, j)] - mu)).sum::<f64>() / m
                })
                .collect()
        })
        .collect();
    let mut w = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    // equal to the co-rater covariance, hence symmetric up to rounding
    crate::graph::symmetrize_in_place(&mut w);

    for i in 0..n {
        let has_partner = (0..n).any(|j| {
            j != i && (0..table.n_users()).filter(|&u| r[(u, i)] != 0.0 && r[(u, j)] != 0.0).nth(1).is_some()
        });
        if !has_partner {
            return Err(Error::InsufficientData(format!(
                "item {} has no partner with at least two co-raters",
                table.item_ids()[i]
            )));
        }
        if w[(i, i)] <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "item {} has zero rating variance",
                table.item_ids()[i]
            )));
        }
    }
    Ok(w)
}

/// Keep each item's `knn` largest off-diagonal weights (edge kept when either
/// endpoint selects it) and the diagonal.
pub fn knn_sparsify(w: &DMatrix<f64>, knn: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let mut keep = vec![vec![false; n]; n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i && w[(i, j)] != 0.0).collect();
        others.sort_by(|&a, &b| w[(i, b)].total_cmp(&w[(i, a)]).then(a.cmp(&b)));
        for &j in others.iter().take(knn) {
            keep[i][j] = true;
            keep[j][i] = true;
        }
    }
    DMatrix::from_fn(n, n, |i, j| if i == j || keep[i][j] { w[(i, j)] } else { 0.0 })
}

/// `S = diag(W)^{-1/2} W diag(W)^{-1/2} − I` on the `knn`-nearest-neighbor graph.
pub fn pearson_item_graph(table: &RatingsTable, knn: usize) -> Result<GraphShift> {
    let w = knn_sparsify(&pearson_weights(table)?, knn);
    let n = w.nrows();
    let d = DVector::from_fn(n, |i, _| 1.0 / w[(i, i)].sqrt());
    let mut s = DMatrix::from_fn(n, n, |i, j| d[i] * w[(i, j)] * d[j]);
    for i in 0..n {
        s[(i, i)] = 0.0;
    }
    let labels = table.item_ids().iter().map(u64::to_string).collect();
    GraphShift::new(s)?.with_labels(labels)
}

/// Interpolation dataset for item `target`: every user who rated it yields
/// their rating vector with the target entry zeroed, labeled by that rating.
pub fn movie_dataset(table: &RatingsTable, target: usize) -> Result<Dataset> {
    if target >= table.n_items() {
        return Err(Error::IndexOutOfRange {
            index: target,
            n: table.n_items(),
        });
    }
    let r = table.ratings();
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    for u in 0..table.n_users() {
        let y = r[(u, target)];
        if y != 0.0 {
            let mut x = r.row(u).transpose();
            x[target] = 0.0;
            signals.push(x);
            labels.push(y);
        }
    }
    if signals.is_empty() {
        return Err(Error::InsufficientData(format!(
            "item {} has no ratings",
            table.item_ids()[target]
        )));
    }
    Dataset::new(Task::Regression { target }, signals, labels)
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    /// Labels are class indices `0..classes`.
    Classification { classes: usize },
    /// Labels are real values predicted at node `target`.
    Regression { target: usize },
}

/// Single-feature graph signals with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    task: Task,
    signals: Vec<DVector<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(task: Task, signals: Vec<DVector<f64>>, labels: Vec<f64>) -> Result<Self> {
        if signals.len() != labels.len() {
            return Err(Error::dims("label count", signals.len(), labels.len()));
        }
        let n = signals.first().map_or(0, |s| s.len());
        for s in &signals {
            if s.len() != n {
                return Err(Error::dims("signal length", n, s.len()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset signal"));
            }
        }
        match task {
            Task::Classification { classes } => {
                if let Some(bad) = labels
                    .iter()
                    .find(|&&y| y < 0.0 || y.fract() != 0.0 || y >= classes as f64)
                {
                    return Err(Error::InvalidArgument(format!(
                        "label {bad} is not a class index below {classes}"
                    )));
                }
            }
            Task::Regression { target } => {
                if n > 0 && target >= n {
                    return Err(Error::IndexOutOfRange { index: target, n });
                }
                if labels.iter().any(|y| !y.is_finite()) {
                    return Err(Error::NonFinite("regression label"));
                }
            }
        }
        Ok(Self {
            task,
            signals,
            labels,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.signals.first().map_or(0, |s| s.len())
    }

    pub fn signals(&self) -> &[DVector<f64>] {
        &self.signals
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn signal(&self, i: usize) -> &DVector<f64> {
        &self.signals[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Signals CSV: one row per sample, one column per node, no header.
    pub fn write_signals_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for s in &self.signals {
            w.write_record(s.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the files written by [`Dataset::write_signals_csv`] and [`Dataset::write_labels_csv`].
    pub fn read_csv<R1: Read, R2: Read>(task: Task, signals: R1, labels: R2) -> Result<Self> {
        let xs = read_signals_csv(signals)?;
        #[derive(Deserialize)]
        struct Row {
            index: usize,
            label: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(labels);
        let mut ys = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            if row.index != ys.len() {
                return Err(Error::InvalidArgument(format!(
                    "labels must be listed in index order, found {} at row {}",
                    row.index,
                    ys.len()
                )));
            }
            ys.push(row.label);
        }
        Self::new(task, xs, ys)
    }

    /// Labels CSV with header `index,label`.
    pub fn write_labels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "label"])?;
        for (i, y) in self.labels.iter().enumerate() {
            w.write_record(&[i.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Signals CSV: one row per sample, no header. Rows must have equal length.
pub fn read_signals_csv<R: Read>(reader: R) -> Result<Vec<DVector<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut xs = Vec::new();
    for row in rdr.deserialize::<Vec<f64>>() {
        xs.push(DVector::from_vec(row?));
    }
    Ok(xs)
}

/// Sample indices of each split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Random split with `round(n·train)` training and `round(n·valid)`
    /// validation samples; the rest are test samples.
    pub fn random(n: usize, train: f64, valid: f64, seed: u64) -> Result<Self> {
        if !(train >= 0.0 && valid >= 0.0 && train + valid <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split fractions {train} and {valid} must be nonnegative and sum to at most 1"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train * n as f64).round() as usize;
        let n_valid = ((valid * n as f64).round() as usize).min(n - n_train);
        Ok(Self {
            train: order[..n_train].to_vec(),
            valid: order[n_train..n_train + n_valid].to_vec(),
            test: order[n_train + n_valid..].to_vec(),
        })
    }

    /// The 81/9/10 split.
    pub fn standard(n: usize, seed: u64) -> Self {
        Self::random(n, 0.81, 0.09, seed).expect("fixed fractions are valid")
    }

    /// Reads a manifest written by [`Split::write_manifest`], returning the split, task and seed.
    pub fn read_manifest<R: Read>(reader: R) -> Result<(Self, Task, u64)> {
        #[derive(Deserialize)]
        struct Manifest {
            task: Task,
            seed: u64,
            train: Vec<usize>,
            valid: Vec<usize>,
            test: Vec<usize>,
        }
        let m: Manifest = serde_json::from_reader(reader)?;
        let split = Self {
            train: m.train,
            valid: m.valid,
            test: m.test,
        };
        Ok((split, m.task, m.seed))
    }

    pub fn write_manifest<W: Write>(&self, out: W, task: Task, seed: u64) -> Result<()> {
        let manifest = serde_json::json!({
            "task": task,
            "seed": seed,
            "sizes": { "train": self.train.len(), "valid": self.valid.len(), "test": self.test.len() },
            "train": self.train,
            "valid": self.valid,
            "test": self.test,
        });
        serde_json::to_writer_pretty(out, &manifest)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Weighted Erdős–Rényi graph with uniform `(0, 1]` weights, redrawn until
/// connected, scaled to unit spectral norm.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Result<GraphShift> {
    erdos_renyi(n, p, seed, |rng| 1.0 - rng.random::<f64>())
}

/// Like [`random_graph`] but edge weights are uniform in `[-1, 1]` (excluding 0),
/// so the leading eigenvector is not constrained to be entrywise positive.
pub fn random_signed_graph(n: usize, p: f64, seed: u64) -> Result<GraphShift> {
    erdos_renyi(n, p, seed, |rng| {
        let w = 1.0 - rng.random::<f64>();
        if rng.random_bool(0.5) {
            w
        } else {
            -w
        }
    })
}

fn erdos_renyi(n: usize, p: f64, seed: u64, mut weight: impl FnMut(&mut ChaCha8Rng) -> f64) -> Result<GraphShift> {
    if n < 2 || !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "random graph needs n ≥ 2 and p in (0, 1], got n = {n}, p = {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j, weight(&mut rng)));
                }
            }
        }
        let g = GraphShift::from_edges(n, &edges, true)?;
        if is_connected(&g) {
            return g.spectral_normalize();
        }
    }
    Err(Error::InvalidArgument(format!(
        "no connected graph after 1000 draws with n = {n}, p = {p}"
    )))
}

pub fn is_connected(g: &GraphShift) -> bool {
    let n = g.n();
    let s = g.matrix();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && (s[(i, j)] != 0.0 || s[(j, i)] != 0.0) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|v| v)
}

/// Samples `x = V diag(√q) w` with `w` standard normal.
pub fn synthetic_stationary(
    basis: &SpectralBasis,
    q: &DVector<f64>,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let n = basis.n();
    if q.len() != n {
        return Err(Error::dims("power spectral density", n, q.len()));
    }
    if let Some(bad) = q.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power spectral density must be nonnegative, found {bad}"
        )));
    }
    let shape = basis.eigenvectors() * DMatrix::from_diagonal(&q.map(f64::sqrt));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let w = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            &shape * w
        })
        .collect())
}

/// Parameters of the two-band classification surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    /// Mean amplitude of the class pattern.
    pub signal_mean: f64,
    pub signal_std: f64,
    /// Std of the shared clutter on the lowest quarter of GFT coordinates.
    pub clutter_std: f64,
    /// Std of white vertex-domain noise.
    pub noise_std: f64,
    /// Class patterns are orthogonal to `Sᵏ1` for `k ≤ hidden_order`.
    pub hidden_order: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            signal_mean: 1.0,
            signal_std: 0.25,
            clutter_std: 0.5,
            noise_std: 0.05,
            hidden_order: 4,
        }
    }
}

/// The low (class 0) and high (class 1) band patterns in the vertex domain.
///
/// Each is supported on a quarter of the GFT coordinates and, when the band is
/// wide enough, satisfies `1ᵀ Sᵏ p = 0` for `k ≤ hidden_order`, so its
/// amplitude is invisible to any node-invariant filter followed by a sum
/// over nodes.
pub fn band_patterns(basis: &SpectralBasis, hidden_order: usize) -> Result<[DVector<f64>; 2]> {
    let n = basis.n();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("band dataset needs N ≥ 8, got {n}")));
    }
    let quarter = n / 4;
    let v = basis.eigenvectors();
    let lam = basis.eigenvalues();
    let ones_gft = v.tr_mul(&DVector::from_element(n, 1.0));

    let pattern = |band: Vec<usize>| -> DVector<f64> {
        let m = band.len();
        let constraints = DMatrix::from_fn(hidden_order + 1, m, |k, j| {
            lam[band[j]].powi(k as i32) * ones_gft[band[j]]
        });
        let gram = constraints.tr_mul(&constraints);
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let mut coeffs = DVector::from_element(m, 1.0);
        for (j, &w) in eig.eigenvalues.iter().enumerate() {
            if w > 1e-10 * top {
                let u = eig.eigenvectors.column(j);
                coeffs -= u * u.dot(&coeffs);
            }
        }
        if coeffs.norm() < 1e-8 {
            let free = (0..m).find(|&j| eig.eigenvalues[j] <= 1e-10 * top);
            match free {
                Some(j) => coeffs = eig.eigenvectors.column(j).into_owned(),
                None => {
                    log::warn!("band of {m} coordinates cannot hide {} moments", hidden_order + 1);
                    coeffs = DVector::from_element(m, 1.0);
                }
            }
        }
        coeffs /= coeffs.norm();
        let mut x = DVector::zeros(n);
        for (j, &b) in band.iter().enumerate() {
            x += v.column(b) * coeffs[j];
        }
        crate::graph::fix_sign(&mut x);
        x
    };
    Ok([
        pattern((0..quarter).collect()),
        pattern((n - quarter..n).collect()),
    ])
}

/// Balanced two-class dataset: class `c` carries its band pattern with a
/// random amplitude, plus shared low-band clutter and white noise.
pub fn synthetic_band_dataset_with(
    basis: &SpectralBasis,
    count: usize,
    seed: u64,
    config: &BandConfig,
) -> Result<Dataset> {
    let patterns = band_patterns(basis, config.hidden_order)?;
    let n = basis.n();
    let quarter = n / 4;
    let v = basis.eigenvectors();
    let amp = Normal::new(config.signal_mean, config.signal_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<f64> = (0..count).map(|i| if i < count / 2 { 0.0 } else { 1.0 }).collect();
    labels.shuffle(&mut rng);
    let signals = labels
        .iter()
        .map(|&y| {
            let mut x = &patterns[y as usize] * amp.sample(&mut rng);
            for j in 0..quarter {
                let c: f64 = StandardNormal.sample(&mut rng);
                x += v.column(j) * (config.clutter_std * c);
            }
            for xi in x.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *xi += config.noise_std * e;
            }
            x
        })
        .collect();
    Dataset::new(Task::Classification { classes: 2 }, signals, labels)
}

pub fn synthetic_band_dataset(basis: &SpectralBasis, count: usize, seed: u64) -> Result<Dataset> {
    synthetic_band_dataset_with(basis, count, seed, &BandConfig::default())
}

/// Per-class sample counts.
pub fn class_counts(data: &Dataset) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for &y in data.labels() {
        *out.entry(y as usize).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::gft;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_rules() {
        let t = tokenize("The cat's hat, is RED! Is it? yes.. ");
        assert_eq!(
            t,
            vec![
                words(&["the", "cat's", "hat", "is", "red"]),
                words(&["is", "it"]),
                words(&["yes"])
            ]
        );
    }

    #[test]
    fn two_word_sentence_weights() {
        let c = Corpus::from_raw(&["a b"], words(&["a", "b"])).unwrap();
        let w = wan_weights(&c, 0.5, 2).unwrap();
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(1, 0)], 0.0);
        assert_eq!(w[(0, 0)], 0.0);
    }

    #[test]
    fn discount_and_window() {
        // a x b a: a→b at distance 2 (α), b→a at 1, a→a at distance 3 (outside D=2)
        let c = Corpus::from_raw(&["a x b a"], words(&["a", "b"])).unwrap();
        let w = wan_weights(&c, 0.5, 2).unwrap();
        assert_eq!(w[(0, 1)], 0.5);
        assert_eq!(w[(1, 0)], 1.0);
        assert_eq!(w[(0, 0)], 0.0);
        let w3 = wan_weights(&c, 0.5, 3).unwrap();
        assert_eq!(w3[(0, 0)], 0.25);
        // sentences do not interact
        let c = Corpus::from_raw(&["a. b"], words(&["a", "b"])).unwrap();
        assert_eq!(wan_weights(&c, 0.5, 2).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn isolated_word_has_zero_row_and_column() {
        let c = Corpus::from_raw(&["a b a b. c"], words(&["a", "b", "c"])).unwrap();
        let w = wan_weights(&c, 0.5, 3).unwrap();
        assert_eq!(w.row(2).sum() + w.column(2).sum(), 0.0);
        let g = build_wan(&c, 0.5, 3).unwrap();
        assert_eq!(g.matrix().row(2).amax(), 0.0);
        assert!((g.spectral_norm().unwrap() - 1.0).abs() < 1e-12);
        let s = g.matrix();
        assert!((s - s.transpose()).amax() < 1e-12);
    }

    #[test]
    fn corpus_rejects_duplicate_vocabulary() {
        assert!(Corpus::from_raw(&["a"], words(&["a", "a"])).is_err());
        assert!(wan_weights(&Corpus::from_raw(&["a"], words(&["a"])).unwrap(), 1.0, 2).is_err());
    }

    #[test]
    fn frequency_signal_examples() {
        let v = words(&["a", "b"]);
        assert_eq!(word_frequency_signal(&tokenize("a a"), &v).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(word_frequency_signal(&tokenize("b x a"), &v).unwrap().as_slice(), &[0.5, 0.5]);
        let x = word_frequency_signal(&tokenize("a b a"), &v).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(word_frequency_signal(&tokenize("x y"), &v).is_err());
    }

    #[test]
    fn authorship_sizes() {
        assert_eq!(authorship_split_sizes(771), (673, 59, 39));
        let (tr, va, te) = authorship_split_sizes(771);
        assert_eq!((2 * (tr + va), 2 * va, 2 * te), (1464, 118, 78));
    }

    #[test]
    fn authorship_dataset_is_balanced() {
        let vocab = words(&["the", "a", "of", "and"]);
        let author: Vec<Text> = (0..40).map(|i| tokenize(&format!("the cat of the {i} and a dog"))).collect();
        let others: Vec<Text> = (0..50).map(|i| tokenize(&format!("a dog and a {i} of a cat"))).collect();
        let (g, data, split) = authorship_dataset(&author, &others, &vocab, 0.8, 3, 1).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(data.len(), 80);
        let (tr, va, te) = authorship_split_sizes(40);
        assert_eq!(split.train.len(), 2 * tr);
        assert_eq!(split.valid.len(), 2 * va);
        assert_eq!(split.test.len(), 2 * te);
        let ones = split.test.iter().filter(|&&i| data.label(i) == 1.0).count();
        assert_eq!(ones, te);
    }

    fn small_table() -> RatingsTable {
        RatingsTable::new(&[
            (1, 10, 5),
            (1, 20, 4),
            (1, 30, 1),
            (2, 10, 3),
            (2, 20, 2),
            (2, 30, 3),
            (3, 10, 4),
            (3, 20, 3),
            (3, 30, 2),
            (4, 10, 1),
            (4, 30, 5),
        ])
        .unwrap()
    }

    #[test]
    #[allow(clippy::neg_multiply)]
    fn pearson_weights_by_hand() {
        let t = small_table();
        let w = pearson_weights(&t).unwrap();
        // items 10 and 20, co-raters 1,2,3: x10 = (5,3,4), x20 = (4,2,3), μ = 4
        let w01 = ((1.0 * 0.0) + (-1.0 * -2.0) + (0.0 * -1.0)) / 3.0;
        assert!((w[(0, 1)] - w01).abs() < 1e-12);
        // items 10 and 30, co-raters 1..4: x10 = (5,3,4,1), x30 = (1,3,2,5), μ = 13/4
        let x10 = [5.0, 3.0, 4.0, 1.0];
        let x30 = [1.0, 3.0, 2.0, 5.0];
        let mu = 13.0 / 4.0;
        let w02: f64 = x10.iter().zip(&x30).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / 4.0;
        assert!((w[(0, 2)] - w02).abs() < 1e-12);
        assert!((w[(2, 0)] - w02).abs() < 1e-12);
        // diagonal is the variance over raters
        let var10 = x10.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / 4.0;
        assert!((w[(0, 0)] - var10).abs() < 1e-12);
    }

    #[test]
    fn identical_items_have_maximal_weight() {
        let t = RatingsTable::new(&[
            (1, 1, 5),
            (1, 2, 5),
            (1, 3, 1),
            (2, 1, 1),
            (2, 2, 1),
            (2, 3, 4),
            (3, 1, 3),
            (3, 2, 3),
            (3, 3, 3),
        ])
        .unwrap();
        let w = pearson_weights(&t).unwrap();
        assert!(w[(0, 1)] > w[(0, 2)] && w[(0, 1)] > w[(1, 2)]);
    }

    #[test]
    fn item_graph_support() {
        let t = small_table();
        let g = pearson_item_graph(&t, 2).unwrap();
        let s = g.matrix();
        assert!((0..3).all(|i| s[(i, i)] == 0.0));
        assert!((s - s.transpose()).amax() < 1e-12);
        let w = pearson_weights(&t).unwrap();
        let s01 = w[(0, 1)] / (w[(0, 0)] * w[(1, 1)]).sqrt();
        assert!((s[(0, 1)] - s01).abs() < 1e-12);
        // knn = N − 1 keeps every edge
        assert_eq!(knn_sparsify(&w, 2), w);
    }

    #[test]
    fn knn_union() {
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.1, 0.9, 1.0, 0.2, 0.1, 0.2, 1.0]);
        let k = knn_sparsify(&w, 1);
        // 0→1, 1→0, 2→1 (union keeps 1–2)
        assert_eq!(k[(0, 2)], 0.0);
        assert_eq!(k[(1, 2)], 0.2);
        assert_eq!(k[(2, 1)], 0.2);
    }

    #[test]
    fn ratings_validation() {
        assert!(RatingsTable::new(&[(1, 1, 6)]).is_err());
        assert!(RatingsTable::new(&[(1, 1, 3), (1, 1, 4)]).is_err());
        let t = RatingsTable::from_csv("user,item,rating\n1,7,3\n2,7,4\n2,8,5\n".as_bytes()).unwrap();
        assert_eq!((t.n_users(), t.n_items(), t.len()), (2, 2, 3));
        assert_eq!(t.top_items(1), vec![0]);
    }

    #[test]
    fn movie_dataset_zeroes_target() {
        let t = small_table();
        let d = movie_dataset(&t, 1).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.signals().iter().all(|x| x[1] == 0.0));
        assert_eq!(d.labels(), &[4.0, 2.0, 3.0]);
        let r = t.restrict(&[1]).unwrap();
        assert_eq!(r.n_users(), 3);
    }

    fn basis(n: usize) -> SpectralBasis {
        random_graph(n, 0.3, 5).unwrap().eigendecompose().unwrap()
    }

    #[test]
    fn white_process_covariance() {
        let b = basis(6);
        let xs = synthetic_stationary(&b, &DVector::from_element(6, 1.0), 100_000, 1).unwrap();
        let mut c = DMatrix::zeros(6, 6);
        for x in &xs {
            c += x * x.transpose();
        }
        c /= xs.len() as f64;
        assert!((c - DMatrix::identity(6, 6)).amax() < 0.05);
    }

    #[test]
    fn rank_one_process_is_along_eigenvector() {
        let b = basis(6);
        let mut q = DVector::zeros(6);
        q[0] = 2.0;
        for x in synthetic_stationary(&b, &q, 10, 2).unwrap() {
            let v = b.eigenvector(0);
            assert!((&x - &v * v.dot(&x)).norm() < 1e-12);
        }
        assert_eq!(
            synthetic_stationary(&b, &q, 3, 2).unwrap(),
            synthetic_stationary(&b, &q, 3, 2).unwrap()
        );
        q[1] = -1.0;
        assert!(synthetic_stationary(&b, &q, 3, 2).is_err());
    }

    #[test]
    fn band_dataset_structure() {
        let g = random_graph(32, 0.2, 3).unwrap();
        let b = g.eigendecompose().unwrap();
        let quiet = BandConfig {
            clutter_std: 0.0,
            noise_std: 0.0,
            ..BandConfig::default()
        };
        let d = synthetic_band_dataset_with(&b, 101, 4, &quiet).unwrap();
        assert_eq!(class_counts(&d)[&0], 50);
        assert_eq!(class_counts(&d)[&1], 51);
        for i in 0..d.len() {
            if d.label(i) == 1.0 {
                let xt = gft(d.signal(i), &b).unwrap();
                let c = xt.coefficients();
                let top: f64 = c.rows(24, 8).norm_squared();
                assert!(top > 0.9 * c.norm_squared());
            }
        }
        // class patterns are invisible to 1ᵀSᵏ for k ≤ 4
        let [p0, p1] = band_patterns(&b, 4).unwrap();
        let ones = DVector::from_element(32, 1.0);
        let mut probe = ones.clone();
        for _ in 0..=4 {
            assert!(probe.dot(&p0).abs() < 1e-10 && probe.dot(&p1).abs() < 1e-10);
            probe = g.matrix() * probe;
        }
        assert!(synthetic_band_dataset(&basis(6), 10, 1).is_err());
    }

    #[test]
    fn split_sizes_and_manifest() {
        let s = Split::standard(1000, 7);
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (810, 90, 100));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        let mut out = Vec::new();
        s.write_manifest(&mut out, Task::Classification { classes: 2 }, 7).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["sizes"]["valid"], 90);
    }

    #[test]
    fn dataset_csv_layout() {
        let d = Dataset::new(
            Task::Classification { classes: 2 },
            vec![DVector::from_column_slice(&[0.5, 1.0]), DVector::from_column_slice(&[0.0, -1.0])],
            vec![1.0, 0.0],
        )
        .unwrap();
        let mut sig = Vec::new();
        d.write_signals_csv(&mut sig).unwrap();
        assert_eq!(String::from_utf8(sig).unwrap(), "0.5,1\n0,-1\n");
        let mut lab = Vec::new();
        d.write_labels_csv(&mut lab).unwrap();
        assert_eq!(String::from_utf8(lab).unwrap(), "index,label\n0,1\n1,0\n");
        assert!(Dataset::new(Task::Classification { classes: 2 }, vec![DVector::zeros(1)], vec![2.0]).is_err());
    }
}
