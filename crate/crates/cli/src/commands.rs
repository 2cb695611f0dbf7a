use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use nvgf::design::{design_optimal, estimate_moments};
use nvgf::filters::{apply_nv, NvTaps, TapFile, Taps};
use nvgf::graph::{GraphShift, SpectralBasis};
use nvgf::ingest::{
    authorship_dataset, build_wan, movie_dataset, pearson_item_graph, prune_items, random_signed_graph,
    read_function_words, read_signals_csv, synthetic_band_dataset, tokenize, word_frequency_signal, Corpus, Dataset, RatingsTable,
    Split, Task, Text,
};
use nvgf::nn::{self, Model, Readout};
use nvgf::spectral::{creation_index, gft, nv_frequency_matrix};
use nvgf::stability::check_bound;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::config::{ExperimentConfig, ReadoutChoice};
use crate::output::Outputs;
use crate::Failure;

const TOY_GRAPH: &str = include_str!("../data/toy_graph.json");

/// Coefficients below this magnitude count as zero in reports.
const ZERO_TOL: f64 = 1e-10;

type CmdResult = Result<(), Failure>;

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| config_error(format!("cannot open {}: {e}", path.display())))
}

/// The configured graph, or the bundled toy graph scaled to unit spectral norm.
pub fn load_graph(cfg: &ExperimentConfig) -> Result<GraphShift, Failure> {
    match &cfg.graph {
        Some(path) if path.extension().is_some_and(|e| e == "csv") => {
            Ok(GraphShift::from_edge_csv(open(path)?, None, true)?)
        }
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            Ok(GraphShift::from_json_str(&text, true)?)
        }
        None => Ok(GraphShift::from_json_str(TOY_GRAPH, true)?.spectral_normalize()?),
    }
}

/// Taps from file (LSI taps are embedded), or uniform random node-variant taps.
fn load_taps(cfg: &ExperimentConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<NvTaps, Failure> {
    let Some(path) = &cfg.taps else {
        let h = DMatrix::from_fn(n, cfg.order + 1, |_, _| rng.random_range(-1.0..1.0));
        return Ok(NvTaps::new(h)?);
    };
    let file: TapFile = serde_json::from_reader(open(path)?)
        .map_err(|e| config_error(format!("bad tap file {}: {e}", path.display())))?;
    let taps = file.to_taps()?;
    if let Taps::Nv(h) = &taps {
        if h.n() != n {
            return Err(config_error(format!("tap file has {} rows but the graph has {n} nodes", h.n())));
        }
    }
    Ok(taps.to_nv(n)?)
}

/// Plain CSV lines; an empty `header` writes none.
fn write_csv_rows(out: &mut Vec<u8>, header: &str, rows: impl Iterator<Item = String>) -> std::io::Result<()> {
    use std::io::Write;
    if !header.is_empty() {
        writeln!(out, "{header}")?;
    }
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

pub fn freq(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    let g = load_graph(cfg)?;
    let b = g.eigendecompose()?;
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let taps = load_taps(cfg, n, &mut rng)?;
    let t = cfg.frequency.unwrap_or(n - 1);
    if t >= n {
        return Err(config_error(format!("frequency index {t} is out of range for {n} nodes")));
    }

    let x = b.eigenvector(t);
    let input = gft(&x, &b)?;
    let output = gft(&apply_nv(&taps, &x, &g)?, &b)?;
    let m = nv_frequency_matrix(&taps, &b)?;
    let creation = creation_index(&m);

    out.write_with("spectrum_input.csv", |w| input.write_csv(w))?;
    out.write_with("spectrum_output.csv", |w| output.write_csv(w))?;
    let lam = b.eigenvalues();
    let responses = m.node_responses();
    out.write_with("node_responses.csv", |w| {
        write_csv_rows(
            w,
            "node,eigen_index,eigenvalue,response",
            (0..n).flat_map(|i| (0..n).map(move |j| format!("{i},{j},{},{}", lam[j], responses[(i, j)]))),
        )
    })?;
    let bm = m.matrix();
    out.write_with("frequency_matrix.csv", |w| {
        write_csv_rows(
            w,
            "row,col,value",
            (0..n).flat_map(|i| (0..n).map(move |j| format!("{i},{j},{}", bm[(i, j)]))),
        )
    })?;
    let nonzero = output.coefficients().iter().filter(|c| c.abs() > ZERO_TOL).count();
    out.write_json(
        "freq_report.json",
        &json!({
            "frequency": t,
            "eigenvalue": lam[t],
            "order": taps.order(),
            "creation": creation,
            "nonzero_output_coefficients": nonzero,
            "zero_tolerance": ZERO_TOL,
        }),
    )?;
    Ok(())
}

fn read_signals(path: &Path) -> Result<Vec<DVector<f64>>, Failure> {
    read_signals_csv(open(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

pub fn design(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    let g = load_graph(cfg)?;
    let b = g.eigendecompose()?;
    let n = g.n();
    let gaussian = |count: usize, seed: u64| -> Result<Vec<DVector<f64>>, Failure> {
        let dist = Normal::new(cfg.input_mean, cfg.input_std)
            .map_err(|e| config_error(format!("input distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| DVector::from_fn(n, |_, _| dist.sample(&mut rng))).collect())
    };
    let (samples, holdout) = match &cfg.signals {
        Some(path) => (read_signals(path)?, None),
        None => (gaussian(cfg.samples, cfg.seed)?, Some(gaussian(cfg.samples.clamp(2, 10_000), cfg.seed ^ 1)?)),
    };
    if samples.first().is_some_and(|s| s.len() != n) {
        return Err(config_error(format!("signals have length {} but the graph has {n} nodes", samples[0].len())));
    }
    let rho = cfg.nonlinearity;
    let m = estimate_moments(&samples, rho)?;
    let d = design_optimal(&m, &b, cfg.order)?;
    out.write_json("taps.json", &d.to_tap_file())?;

    let holdout_mse = match holdout {
        Some(xs) => {
            let mut total = 0.0;
            for x in &xs {
                total += (d.estimate(x, &g)? - x.map(|v| rho.apply(v))).norm_squared();
            }
            Some(total / (xs.len() * n) as f64)
        }
        None => None,
    };
    let residual = &d.diagnostics.residual_mse;
    out.write_json(
        "design_report.json",
        &json!({
            "nonlinearity": rho,
            "order": cfg.order,
            "samples": m.sample_count,
            "mean_residual_mse": residual.iter().sum::<f64>() / n as f64,
            "holdout_mse": holdout_mse,
            "target_variance": m.rho_var.mean(),
            "residual_mse": residual,
            "rank": d.diagnostics.rank,
            "offset": d.offset.as_slice(),
        }),
    )?;
    Ok(())
}

pub fn stability(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    if cfg.trials == 0 || cfg.epsilons.is_empty() {
        return Err(config_error("stability needs at least one trial and one epsilon"));
    }
    let g = load_graph(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let taps = load_taps(cfg, g.n(), &mut rng)?;
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    let study = check_bound(&taps, &g, &eps, cfg.trials, cfg.seed)?;
    out.write_with("stability.csv", |w| study.write_csv(w))?;
    out.write_json("stability_summary.json", &study.summary_json())?;
    if study.violations > 0 {
        log::warn!("{} trials exceeded the first-order bound", study.violations);
    }
    Ok(())
}

struct Problem {
    graph: GraphShift,
    data: Dataset,
    split: Split,
    band: bool,
}

fn load_problem(cfg: &ExperimentConfig) -> Result<Problem, Failure> {
    match &cfg.dataset {
        Some(dir) => {
            let text = std::fs::read_to_string(dir.join("graph.json"))
                .map_err(|e| config_error(format!("cannot read {}/graph.json: {e}", dir.display())))?;
            let graph = GraphShift::from_json_str(&text, false)?;
            let (split, task, _) = Split::read_manifest(open(&dir.join("split.json"))?)?;
            let data = Dataset::read_csv(task, open(&dir.join("signals.csv"))?, open(&dir.join("labels.csv"))?)?;
            if data.n() != graph.n() {
                return Err(config_error(format!(
                    "signals have {} entries but the graph has {} nodes",
                    data.n(),
                    graph.n()
                )));
            }
            if let Some(&bad) = split.train.iter().chain(&split.valid).chain(&split.test).find(|&&i| i >= data.len()) {
                return Err(config_error(format!("split index {bad} exceeds {} samples", data.len())));
            }
            Ok(Problem {
                graph,
                data,
                split,
                band: false,
            })
        }
        None => {
            let graph = random_signed_graph(cfg.nodes, cfg.edge_probability, cfg.seed)?;
            let b = graph.eigendecompose()?;
            let data = synthetic_band_dataset(&b, cfg.band_samples, cfg.seed)?;
            let split = Split::standard(data.len(), cfg.seed);
            Ok(Problem {
                graph,
                data,
                split,
                band: true,
            })
        }
    }
}

fn readout(choice: ReadoutChoice, p: &Problem) -> Result<Readout, Failure> {
    Ok(match (choice, p.data.task()) {
        (ReadoutChoice::Flatten, _) => Readout::Flatten,
        (ReadoutChoice::Pooled, _) => Readout::Pooled,
        (ReadoutChoice::Node | ReadoutChoice::Auto, Task::Regression { target }) => Readout::Node { target },
        (ReadoutChoice::Node, Task::Classification { .. }) => {
            return Err(config_error("the node readout needs a regression dataset"))
        }
        (ReadoutChoice::Auto, Task::Classification { .. }) if p.band => Readout::Pooled,
        (ReadoutChoice::Auto, Task::Classification { .. }) => Readout::Flatten,
    })
}

fn train_config(cfg: &ExperimentConfig) -> nn::TrainConfig {
    nn::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    }
}

/// Spectrum of the last-layer features for the input `v_N`.
fn write_vn_response(out: &mut Outputs, model: &Model, g: &GraphShift, b: &SpectralBasis) -> CmdResult {
    let n = g.n();
    let x = DMatrix::from_column_slice(n, 1, b.eigenvector(n - 1).as_slice());
    let spectrum = b.eigenvectors().tr_mul(&model.features(g, &x)?);
    let lam = b.eigenvalues();
    out.write_with("response_vn.csv", |w| {
        write_csv_rows(
            w,
            "eigen_index,eigenvalue,feature,coefficient",
            (0..n).flat_map(|i| {
                let s = &spectrum;
                (0..s.ncols()).map(move |f| format!("{i},{},{f},{}", lam[i], s[(i, f)]))
            }),
        )
    })?;
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    let p = load_problem(cfg)?;
    let tc = train_config(cfg);
    let r = nn::fit(cfg.arch, &p.graph, &p.data, &p.split, cfg.features, cfg.order, readout(cfg.readout, &p)?, &tc)?;
    let metrics = json!({
        "arch": cfg.arch,
        "valid": r.valid,
        "test": r.test,
        "train_samples": p.split.train.len(),
    });
    out.write_json("checkpoint.json", &r.model.to_checkpoint(Some(&tc), metrics.clone()))?;
    out.write_with("history.csv", |w| nn::write_history_csv(w, &r.history))?;
    out.write_json("metrics.json", &metrics)?;
    write_vn_response(out, &r.model, &p.graph, &p.graph.eigendecompose()?)?;
    Ok(())
}

pub fn grid(cfg: &ExperimentConfig, out: &mut Outputs, jobs: usize) -> CmdResult {
    let p = load_problem(cfg)?;
    let cells = nn::grid_search(
        cfg.arch,
        &p.graph,
        &p.data,
        &p.split,
        readout(cfg.readout, &p)?,
        &train_config(cfg),
        &cfg.grid,
        jobs,
    )?;
    out.write_with("ranking.csv", |w| nn::write_ranking_csv(w, &cells))?;
    out.write_json("best.json", &cells[0])?;
    Ok(())
}

fn read_texts(dir: &Path) -> Result<Vec<Text>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| config_error(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(config_error(format!("{} contains no text files", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            std::fs::read_to_string(p)
                .map(|t| tokenize(&t))
                .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))
        })
        .collect()
}

fn write_dataset(out: &mut Outputs, graph: &GraphShift, data: &Dataset, split: &Split, seed: u64) -> CmdResult {
    out.write_json("graph.json", &graph.to_graph_file())?;
    out.write_with("signals.csv", |w| data.write_signals_csv(w))?;
    out.write_with("labels.csv", |w| data.write_labels_csv(w))?;
    out.write_with("split.json", |w| split.write_manifest(w, data.task(), seed))?;
    Ok(())
}

pub fn wan(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    let texts = read_texts(cfg.require(&cfg.texts, "texts")?)?;
    let words = read_function_words(open(cfg.require(&cfg.function_words, "function_words")?)?)?;
    match &cfg.others {
        Some(dir) => {
            let others = read_texts(dir)?;
            let (graph, data, split) = authorship_dataset(&texts, &others, &words, cfg.alpha, cfg.window, cfg.seed)?;
            write_dataset(out, &graph, &data, &split, cfg.seed)?;
            out.write_json(
                "wan_report.json",
                &json!({
                    "nodes": graph.n(),
                    "edges": graph.edge_count(),
                    "author_texts": texts.len(),
                    "samples": { "train": split.train.len(), "valid": split.valid.len(), "test": split.test.len() },
                }),
            )?;
        }
        None => {
            let n_texts = texts.len();
            let corpus = Corpus::new(texts, words)?;
            let graph = build_wan(&corpus, cfg.alpha, cfg.window)?;
            out.write_json("graph.json", &graph.to_graph_file())?;
            let signals = corpus
                .texts()
                .iter()
                .map(|t| word_frequency_signal(t, corpus.function_words()))
                .collect::<Result<Vec<_>, _>>()?;
            out.write_with("signals.csv", |w| {
                write_csv_rows(w, "", signals.iter().map(|x| {
                    x.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
                }))
            })?;
            out.write_json(
                "wan_report.json",
                &json!({ "nodes": graph.n(), "edges": graph.edge_count(), "texts": n_texts }),
            )?;
        }
    }
    Ok(())
}

pub fn movies(cfg: &ExperimentConfig, out: &mut Outputs) -> CmdResult {
    let table = RatingsTable::from_csv(open(cfg.require(&cfg.ratings, "ratings")?)?)?;
    let top = table.restrict(&table.top_items(cfg.items))?;
    let (table, dropped) = prune_items(&top)?;
    let graph = pearson_item_graph(&table, cfg.knn)?;
    let target = match cfg.target {
        Some(id) => table
            .item_ids()
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| config_error(format!("target item {id} is not among the retained items")))?,
        None => table.top_items(1)[0],
    };
    let data = movie_dataset(&table, target)?;
    let split = Split::standard(data.len(), cfg.seed);
    write_dataset(out, &graph, &data, &split, cfg.seed)?;
    out.write_json(
        "movies_report.json",
        &json!({
            "items": table.n_items(),
            "users": table.n_users(),
            "edges": graph.edge_count(),
            "dropped_items": dropped,
            "target_item": table.item_ids()[target],
            "target_node": target,
            "samples": data.len(),
        }),
    )?;
    Ok(())
}
