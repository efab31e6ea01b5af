//! K-fold cross-validation over a grid of bandwidth pairs.
//!
//! Individuals are split into folds. For each held-out fold and candidate
//! pair, the model is fitted on the remaining individuals (the training
//! baseline is the lowest-index training individual), each held-out
//! individual is regressed on the trained curve, and the squared prediction
//! errors are accumulated. The selected pair minimizes the fold-averaged
//! mean squared prediction error.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{multi_step_fit, Bandwidths, FitOptions, SpectraPanel};

/// Cross-validation settings.
#[derive(Debug, Clone)]
pub struct CVConfig {
    /// Number of folds K, 2 <= K <= n (K = n is leave-one-out).
    pub folds: usize,
    pub h_grid: Vec<f64>,
    pub hstar_grid: Vec<f64>,
    /// Seed of the fold assignment.
    pub seed: u64,
    /// Fit each training set with a single pass; cuts the grid search cost
    /// substantially at a small accuracy price.
    pub single_pass: bool,
}

impl CVConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidFolds {
                folds: self.folds,
                individuals: n,
            });
        }
        validate_grid("h", &self.h_grid)?;
        validate_grid("h_star", &self.hstar_grid)
    }
}

fn validate_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(format!("{name} grid must be non-empty")));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "{name} grid values must be positive and finite"
        )));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// One grid cell that could not be evaluated, with the fold that failed.
#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub h: f64,
    pub h_star: f64,
    pub fold: usize,
    pub message: String,
}

/// The fold-averaged prediction-error surface and the selected pair.
#[derive(Debug, Clone, Serialize)]
pub struct CVReport {
    /// Rows indexed by `h_grid`, columns by `hstar_grid`; `None` marks a
    /// cell excluded because a fold failed to fit.
    pub mspe: Vec<Vec<Option<f64>>>,
    pub selected: Bandwidths,
    pub h_grid: Vec<f64>,
    pub hstar_grid: Vec<f64>,
    pub fold_assignments: Vec<usize>,
    pub failures: Vec<CellFailure>,
}

/// Randomly split `n` individuals into `folds` near-equal groups
/// (sizes differ by at most one), deterministically in `seed`.
///
/// The baseline index is validated but does not influence the assignment:
/// every training set elects its own baseline, so no individual needs
/// special placement.
pub fn assign_folds(n: usize, folds: usize, seed: u64, baseline_index: usize) -> Result<Vec<usize>> {
    if n == 0 || folds < 2 || folds > n {
        return Err(Error::InvalidFolds {
            folds,
            individuals: n,
        });
    }
    if baseline_index >= n {
        return Err(Error::InvalidInput(format!(
            "baseline index {baseline_index} out of range for {n} individuals"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates with a widening-multiply bound, so the permutation is
    // stable across platforms and library versions.
    for j in (1..n).rev() {
        let k = ((rng.next_u64() as u128 * (j as u128 + 1)) >> 64) as usize;
        order.swap(j, k);
    }
    let mut labels = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        labels[idx] = pos % folds;
    }
    Ok(labels)
}

/// Mean squared prediction error of one held-out fold at one bandwidth pair.
///
/// The model is fitted on the complement of `test_fold` with the
/// lowest-index training individual as baseline. Each test individual gets
/// its own least-squares (offset, scale) against the trained curve, and the
/// squared prediction errors are summed. The sum is divided by the panel's
/// common series length when there is one, otherwise by the number of
/// held-out points.
pub fn fold_mspe(
    panel: &SpectraPanel,
    test_fold: &[usize],
    bandwidths: Bandwidths,
    kernel: &KernelSpec,
    options: &FitOptions,
) -> Result<f64> {
    if test_fold.is_empty() {
        return Err(Error::InvalidInput("test fold must be non-empty".into()));
    }
    for &i in test_fold {
        if i >= panel.n() {
            return Err(Error::InvalidInput(format!(
                "test index {i} out of range"
            )));
        }
    }
    let train: Vec<usize> = (0..panel.n()).filter(|i| !test_fold.contains(i)).collect();
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "training set must be non-empty".into(),
        ));
    }
    let training_panel = panel.subset(&train)?;
    let fit = multi_step_fit(&training_panel, kernel, bandwidths, options)?;

    let mut sse = 0.0;
    let mut held_out_points = 0usize;
    for &i in test_fold {
        let x = panel.x_row(i);
        let y = panel.y_row(i);
        let m = fit.curve.values_at(x)?;
        let t = m.len() as f64;
        let m_bar = m.iter().sum::<f64>() / t;
        let y_bar = y.iter().sum::<f64>() / t;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (&mt, &yt) in m.iter().zip(y) {
            let c = mt - m_bar;
            sxx += c * c;
            sxy += c * yt;
        }
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if sxx <= (1e-12 * scale).powi(2) * t {
            return Err(Error::DegenerateCurve { individual: i });
        }
        let beta = sxy / sxx;
        let alpha = y_bar - beta * m_bar;
        for (&mt, &yt) in m.iter().zip(y) {
            let r = yt - (alpha + beta * mt);
            sse += r * r;
        }
        held_out_points += x.len();
    }
    let denom = panel.common_len().unwrap_or(held_out_points) as f64;
    Ok(sse / denom)
}

/// Grid search: average `fold_mspe` over all folds for every bandwidth pair
/// and select the minimizing pair (ties broken by smaller `h`, then smaller
/// `h_star`). Cells where any fold fails are excluded and reported instead
/// of aborting the whole search.
pub fn cv_select(panel: &SpectraPanel, config: &CVConfig, kernel: &KernelSpec) -> Result<CVReport> {
    config.validate(panel.n())?;
    let labels = assign_folds(panel.n(), config.folds, config.seed, panel.baseline_index())?;
    let folds: Vec<Vec<usize>> = (0..config.folds)
        .map(|k| {
            (0..panel.n())
                .filter(|&i| labels[i] == k)
                .collect::<Vec<usize>>()
        })
        .collect();
    let options = FitOptions {
        single_pass: config.single_pass,
        ..FitOptions::default()
    };

    let cells: Vec<(usize, usize)> = (0..config.h_grid.len())
        .flat_map(|i| (0..config.hstar_grid.len()).map(move |j| (i, j)))
        .collect();
    let evaluated: Vec<(Option<f64>, Option<CellFailure>)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let bw = Bandwidths {
                h: config.h_grid[i],
                h_star: config.hstar_grid[j],
            };
            let mut total = 0.0;
            for (k, fold) in folds.iter().enumerate() {
                match fold_mspe(panel, fold, bw, kernel, &options) {
                    Ok(v) => total += v,
                    Err(e) => {
                        return (
                            None,
                            Some(CellFailure {
                                h: bw.h,
                                h_star: bw.h_star,
                                fold: k,
                                message: e.to_string(),
                            }),
                        )
                    }
                }
            }
            (Some(total / config.folds as f64), None)
        })
        .collect();

    let mut mspe = vec![vec![None; config.hstar_grid.len()]; config.h_grid.len()];
    let mut failures = Vec::new();
    for (&(i, j), (value, failure)) in cells.iter().zip(evaluated) {
        mspe[i][j] = value;
        if let Some(f) = failure {
            failures.push(f);
        }
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for (i, row) in mspe.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                if best.is_none_or(|(_, _, bv)| *v < bv) {
                    best = Some((i, j, *v));
                }
            }
        }
    }
    let (bi, bj, _) = best.ok_or(Error::AllCellsInvalid)?;
    Ok(CVReport {
        mspe,
        selected: Bandwidths {
            h: config.h_grid[bi],
            h_star: config.hstar_grid[bj],
        },
        h_grid: config.h_grid.clone(),
        hstar_grid: config.hstar_grid.clone(),
        fold_assignments: labels,
        failures,
    })
}
