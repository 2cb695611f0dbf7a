use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, Architecture, Readout, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::GraphShift;
use crate::ingest::{Dataset, Split};

/// Hyperparameter triplets `(η, F, K)` searched exhaustively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lrs: Vec<f64>,
    pub features: Vec<usize>,
    pub orders: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lrs: vec![0.001, 0.005, 0.01],
            features: vec![16, 32, 64],
            orders: vec![2, 3, 4],
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &f in &self.features {
                for &k in &self.orders {
                    out.push((lr, f, k));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub rank: usize,
    pub lr: f64,
    pub features: usize,
    pub order: usize,
    pub valid_metric: f64,
    pub test_metric: Option<f64>,
}

/// Train every cell on at most `jobs` threads and rank by validation metric;
/// ties keep grid order.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    arch: Architecture,
    g: &GraphShift,
    data: &Dataset,
    split: &Split,
    readout: Readout,
    base: &TrainConfig,
    grid: &GridSpec,
    jobs: usize,
) -> Result<Vec<GridCell>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut results: Vec<GridCell> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(lr, f, k)| {
                let cfg = TrainConfig { lr, ..base.clone() };
                let r = fit(arch, g, data, split, f, k, readout, &cfg)?;
                log::info!("{arch} η={lr} F={f} K={k}: valid {:.4}", r.valid.metric);
                Ok(GridCell {
                    rank: 0,
                    lr,
                    features: f,
                    order: k,
                    valid_metric: r.valid.metric,
                    test_metric: r.test.map(|t| t.metric),
                })
            })
            .collect::<Result<_>>()
    })?;
    results.sort_by(|a, b| a.valid_metric.total_cmp(&b.valid_metric));
    for (i, c) in results.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(results)
}

/// Ranking CSV with header `rank,lr,features,order,valid_metric,test_metric`.
pub fn write_ranking_csv<W: Write>(out: W, cells: &[GridCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
