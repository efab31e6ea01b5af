//! Synthetic panels and the Monte Carlo experiment harness.
//!
//! Panels are generated as `y_it = alpha_i + beta_i m(x_it) + sigma e_it`
//! with standard normal errors. Every replication draws from its own
//! counter-derived random stream, so replications are order-independent and
//! a parallel run reproduces a serial one bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::norm_quantile;
use crate::kernel::KernelSpec;
use crate::model::{
    initial_curve, multi_step_fit, Bandwidths, FitOptions, LocationScale, SpectraPanel,
};
use crate::smoother::{pooled_weighted_fit, SmoothingPlan};

/// True curve families for simulation.
///
/// All but `Tabulated` expose an analytic second derivative, which the
/// bias/variance probes need.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimCurve {
    Linear {
        intercept: f64,
        slope: f64,
    },
    SineMix {
        offset: f64,
        components: Vec<SineTerm>,
    },
    /// Coefficients in ascending degree order.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// Piecewise-linear curve through the given (x, value) knots; values are
    /// clamped at the end knots, so keep the design inside the knot range.
    Tabulated {
        points: Vec<(f64, f64)>,
    },
}

/// One sinusoidal component `amplitude * sin(2 pi cycles x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    pub cycles: f64,
}

impl SimCurve {
    /// The default smooth test curve `2 + sin(2 pi x) + 0.5 sin(6 pi x)`
    /// on [0, 1]: bounded, wiggly, with nonzero curvature almost everywhere.
    pub fn default_sine_mix() -> SimCurve {
        SimCurve::SineMix {
            offset: 2.0,
            components: vec![
                SineTerm {
                    amplitude: 1.0,
                    cycles: 1.0,
                },
                SineTerm {
                    amplitude: 0.5,
                    cycles: 3.0,
                },
            ],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            SimCurve::Linear { intercept, slope } => intercept + slope * x,
            SimCurve::SineMix { offset, components } => {
                let mut v = *offset;
                for c in components {
                    v += c.amplitude * (2.0 * std::f64::consts::PI * c.cycles * x).sin();
                }
                v
            }
            SimCurve::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
            }
            SimCurve::Tabulated { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                if x <= points[0].0 {
                    return points[0].1;
                }
                let last = points[points.len() - 1];
                if x >= last.0 {
                    return last.1;
                }
                let j = points.partition_point(|p| p.0 <= x);
                let (x0, v0) = points[j - 1];
                let (x1, v1) = points[j];
                v0 + (x - x0) * (v1 - v0) / (x1 - x0)
            }
        }
    }

    /// Analytic second derivative, when the family has one.
    pub fn second_derivative(&self, x: f64) -> Option<f64> {
        match self {
            SimCurve::Linear { .. } => Some(0.0),
            SimCurve::SineMix { components, .. } => {
                let mut v = 0.0;
                for c in components {
                    let w = 2.0 * std::f64::consts::PI * c.cycles;
                    v -= c.amplitude * w * w * (w * x).sin();
                }
                Some(v)
            }
            SimCurve::Polynomial { coeffs } => {
                let mut v = 0.0;
                for (k, &c) in coeffs.iter().enumerate().skip(2) {
                    v += c * (k * (k - 1)) as f64 * x.powi(k as i32 - 2);
                }
                Some(v)
            }
            SimCurve::Tabulated { .. } => None,
        }
    }
}

/// Design of the x values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Design {
    /// One shared equally spaced grid from `lo` to `hi`.
    EquallySpaced { lo: f64, hi: f64 },
    /// Per-individual sorted uniform draws on `(lo, hi)`.
    UniformRandom { lo: f64, hi: f64 },
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "design bounds must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Design::EquallySpaced { lo, hi } | Design::UniformRandom { lo, hi } => (lo, hi),
        }
    }

    /// Density of x under this design (uniform in both cases).
    pub fn density(&self) -> f64 {
        let (lo, hi) = self.bounds();
        1.0 / (hi - lo)
    }

    /// Sample one strictly increasing row of length `t`.
    pub fn sample(&self, t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Design::EquallySpaced { lo, hi } => (0..t)
                .map(|k| lo + (hi - lo) * k as f64 / (t - 1).max(1) as f64)
                .collect(),
            Design::UniformRandom { lo, hi } => {
                // Ties have probability ~0; redraw the row if one occurs so
                // the strict-monotonicity invariant always holds.
                loop {
                    let mut row: Vec<f64> =
                        (0..t).map(|_| lo + (hi - lo) * uniform_open(rng)).collect();
                    row.sort_by(f64::total_cmp);
                    if row.windows(2).all(|w| w[0] < w[1]) {
                        return row;
                    }
                }
            }
        }
    }
}

/// Full description of one synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub t: usize,
    pub sigma: f64,
    pub curve: SimCurve,
    /// True per-individual parameters; the first pair must be `(0, 1)`.
    pub params: Vec<LocationScale>,
    pub design: Design,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("need at least one individual".into()));
        }
        if self.t < 3 {
            return Err(Error::InvalidInput(
                "need at least three points per series".into(),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput("sigma must be nonnegative".into()));
        }
        if self.params.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "expected {} parameter pairs, got {}",
                self.n,
                self.params.len()
            )));
        }
        if self.params[0] != LocationScale::BASELINE {
            return Err(Error::InvalidInput(
                "the first individual's true parameters must be (0, 1)".into(),
            ));
        }
        for (i, p) in self.params.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite true parameters for individual {i}"
                )));
            }
            if p.beta == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "true scale of individual {i} is zero; its curve carries no signal"
                )));
            }
        }
        self.design.validate()
    }
}

/// The cycling grid of true parameters used by the simulation studies:
/// offsets step through {0, 0.2, ..., 1.0} and scales through
/// {1, 0.2, 0.5, 1.5, 2}, so the first individual is always `(0, 1)`.
pub fn default_param_grid(n: usize) -> Vec<LocationScale> {
    const ALPHAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    const BETAS: [f64; 5] = [1.0, 0.2, 0.5, 1.5, 2.0];
    (0..n)
        .map(|i| LocationScale::new(ALPHAS[i % 6], BETAS[i % 5]))
        .collect()
}

/// Mix a base seed with a stream index (splitmix-style) so each replication
/// gets an independent, order-free random stream.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream))
}

/// Uniform draw in the open interval (0, 1).
#[inline]
fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal by quantile inversion: one uniform per draw, so the
/// stream position is predictable.
#[inline]
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    norm_quantile(uniform_open(rng))
}

/// Generate the panel for replication `rep`. Deterministic in
/// `(config.seed, rep)`.
pub fn generate(config: &SimConfig, rep: usize) -> Result<SpectraPanel> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, rep as u64);
    let width = (config.n as f64).log10().floor() as usize + 1;
    let ids = (0..config.n)
        .map(|i| format!("ind{:0width$}", i + 1))
        .collect();

    let xs: Vec<Vec<f64>> = match config.design {
        Design::EquallySpaced { .. } => {
            let row = config.design.sample(config.t, &mut rng);
            vec![row; config.n]
        }
        Design::UniformRandom { .. } => (0..config.n)
            .map(|_| config.design.sample(config.t, &mut rng))
            .collect(),
    };
    let ys: Vec<Vec<f64>> = (0..config.n)
        .map(|i| {
            let p = config.params[i];
            xs[i]
                .iter()
                .map(|&x| {
                    p.alpha + p.beta * config.curve.value(x) + config.sigma * standard_normal(&mut rng)
                })
                .collect()
        })
        .collect();
    SpectraPanel::new(ids, xs, ys, 0)
}

/// Options for a Monte Carlo run.
#[derive(Debug, Clone, Default)]
pub struct McOptions {
    /// Fit settings used for every grid cell (the evaluation grid is always
    /// the generated panel's own grid).
    pub fit: FitOptions,
    /// Bandwidth pair at which parameter estimates are accumulated.
    /// Defaults to the first grid pair.
    pub param_bandwidths: Option<Bandwidths>,
}

/// Aggregated Monte Carlo results.
#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub replications_requested: usize,
    pub replications_used: usize,
    pub failed_replications: usize,
    /// Messages from the first few failed replications, if any.
    pub failure_messages: Vec<String>,
    pub h_grid: Vec<f64>,
    pub hstar_grid: Vec<f64>,
    /// Bandwidths at which the parameter summaries below were accumulated.
    pub param_bandwidths: Bandwidths,
    pub alpha_true: Vec<f64>,
    pub beta_true: Vec<f64>,
    pub alpha_mean: Vec<f64>,
    pub alpha_sd: Vec<f64>,
    pub alpha_rmse: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    pub beta_rmse: Vec<f64>,
    /// Mean squared error of the initial (baseline-only) curve, per `h`.
    pub curve_mse_initial: Vec<f64>,
    pub curve_mse_initial_se: Vec<f64>,
    /// Mean squared error of the full fit's curve, `h` by `h_star`.
    pub curve_mse_updated: Vec<Vec<f64>>,
    pub curve_mse_updated_se: Vec<Vec<f64>>,
    /// Mean squared error of the known-parameters pooled fit, per `h_star`.
    pub oracle_mse: Vec<f64>,
    pub oracle_mse_se: Vec<f64>,
}

struct RepOutcome {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    initial: Vec<f64>,
    updated: Vec<Vec<f64>>,
    oracle: Vec<f64>,
}

fn mse(values: &[f64], truth: &[f64]) -> f64 {
    values
        .iter()
        .zip(truth)
        .map(|(v, t)| (v - t) * (v - t))
        .sum::<f64>()
        / values.len() as f64
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

fn run_rep(
    config: &SimConfig,
    h_grid: &[f64],
    hstar_grid: &[f64],
    kernel: &KernelSpec,
    options: &McOptions,
    param_bw: Bandwidths,
    rep: usize,
) -> Result<RepOutcome> {
    let panel = generate(config, rep)?;
    let eval = panel.baseline_x().to_vec();
    let truth: Vec<f64> = eval.iter().map(|&x| config.curve.value(x)).collect();

    let fit_opts = FitOptions {
        eval_points: None,
        ..options.fit.clone()
    };

    let initial: Vec<f64> = h_grid
        .iter()
        .map(|&h| Ok(mse(&initial_curve(&panel, kernel, h, &eval)?.values, &truth)))
        .collect::<Result<_>>()?;

    let mut updated = Vec::with_capacity(h_grid.len());
    let mut params: Option<Vec<LocationScale>> = None;
    for &h in h_grid {
        let mut row = Vec::with_capacity(hstar_grid.len());
        for &h_star in hstar_grid {
            let bw = Bandwidths { h, h_star };
            let fit = multi_step_fit(&panel, kernel, bw, &fit_opts)?;
            if bw == param_bw {
                params = Some(fit.params.clone());
            }
            row.push(mse(&fit.curve.values, &truth));
        }
        updated.push(row);
    }
    let params = match params {
        Some(p) => p,
        None => multi_step_fit(&panel, kernel, param_bw, &fit_opts)?.params,
    };

    // Known-parameters reference on the very same data: rescale by the true
    // parameters, then a single pooled smooth per h_star.
    let xs: Vec<&[f64]> = (0..panel.n()).map(|i| panel.x_row(i)).collect();
    let ystar: Vec<Vec<f64>> = (0..panel.n())
        .map(|i| {
            let p = config.params[i];
            panel
                .y_row(i)
                .iter()
                .map(|&v| (v - p.alpha) / p.beta)
                .collect()
        })
        .collect();
    let weights: Vec<f64> = config.params.iter().map(|p| p.beta * p.beta).collect();
    let oracle: Vec<f64> = hstar_grid
        .iter()
        .map(|&h_star| {
            let plan = SmoothingPlan::new(*kernel, h_star, eval.clone())?;
            Ok(mse(
                &pooled_weighted_fit(&xs, &ystar, &weights, &plan)?.values,
                &truth,
            ))
        })
        .collect::<Result<_>>()?;

    Ok(RepOutcome {
        alphas: params.iter().map(|p| p.alpha).collect(),
        betas: params.iter().map(|p| p.beta).collect(),
        initial,
        updated,
        oracle,
    })
}

/// Streaming mean/variance accumulator.
#[derive(Clone, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).sqrt()
        } else {
            0.0
        }
    }

    fn se(&self) -> f64 {
        if self.n > 0.0 {
            self.sd() / self.n.sqrt()
        } else {
            0.0
        }
    }
}

/// Run the full Monte Carlo experiment.
///
/// Per replication: generate a panel, fit the initial curve at every `h`,
/// the full procedure at every `(h, h_star)` pair, and the known-parameters
/// pooled reference at every `h_star`; accumulate parameter errors and
/// curve mean squared errors against the true curve on the panel grid.
/// Replications that fail to fit are recorded and excluded.
pub fn run_mc(
    config: &SimConfig,
    h_grid: &[f64],
    hstar_grid: &[f64],
    kernel: &KernelSpec,
    options: &McOptions,
) -> Result<McResult> {
    config.validate()?;
    validate_grid("h", h_grid)?;
    validate_grid("h_star", hstar_grid)?;
    let param_bw = match options.param_bandwidths {
        Some(bw) => Bandwidths::new(bw.h, bw.h_star)?,
        None => Bandwidths {
            h: h_grid[0],
            h_star: hstar_grid[0],
        },
    };

    let outcomes: Vec<Result<RepOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_rep(config, h_grid, hstar_grid, kernel, options, param_bw, rep))
        .collect();

    let n = config.n;
    let mut alpha_acc = vec![Welford::default(); n];
    let mut beta_acc = vec![Welford::default(); n];
    let mut alpha_sq = vec![0.0f64; n];
    let mut beta_sq = vec![0.0f64; n];
    let mut initial_acc = vec![Welford::default(); h_grid.len()];
    let mut updated_acc = vec![vec![Welford::default(); hstar_grid.len()]; h_grid.len()];
    let mut oracle_acc = vec![Welford::default(); hstar_grid.len()];
    let mut used = 0usize;
    let mut failures = Vec::new();

    for outcome in outcomes {
        match outcome {
            Ok(rep) => {
                used += 1;
                for i in 0..n {
                    alpha_acc[i].push(rep.alphas[i]);
                    beta_acc[i].push(rep.betas[i]);
                    let da = rep.alphas[i] - config.params[i].alpha;
                    let db = rep.betas[i] - config.params[i].beta;
                    alpha_sq[i] += da * da;
                    beta_sq[i] += db * db;
                }
                for (acc, v) in initial_acc.iter_mut().zip(&rep.initial) {
                    acc.push(*v);
                }
                for (row_acc, row) in updated_acc.iter_mut().zip(&rep.updated) {
                    for (acc, v) in row_acc.iter_mut().zip(row) {
                        acc.push(*v);
                    }
                }
                for (acc, v) in oracle_acc.iter_mut().zip(&rep.oracle) {
                    acc.push(*v);
                }
            }
            Err(e) => {
                if failures.len() < 10 {
                    failures.push(e.to_string());
                }
            }
        }
    }

    let failed = config.replications - used;
    if used == 0 {
        return Err(Error::InvalidInput(format!(
            "all {} replications failed (first error: {})",
            config.replications,
            failures.first().cloned().unwrap_or_default()
        )));
    }

    Ok(McResult {
        replications_requested: config.replications,
        replications_used: used,
        failed_replications: failed,
        failure_messages: failures,
        h_grid: h_grid.to_vec(),
        hstar_grid: hstar_grid.to_vec(),
        param_bandwidths: param_bw,
        alpha_true: config.params.iter().map(|p| p.alpha).collect(),
        beta_true: config.params.iter().map(|p| p.beta).collect(),
        alpha_mean: alpha_acc.iter().map(|a| a.mean).collect(),
        alpha_sd: alpha_acc.iter().map(|a| a.sd()).collect(),
        alpha_rmse: alpha_sq.iter().map(|s| (s / used as f64).sqrt()).collect(),
        beta_mean: beta_acc.iter().map(|a| a.mean).collect(),
        beta_sd: beta_acc.iter().map(|a| a.sd()).collect(),
        beta_rmse: beta_sq.iter().map(|s| (s / used as f64).sqrt()).collect(),
        curve_mse_initial: initial_acc.iter().map(|a| a.mean).collect(),
        curve_mse_initial_se: initial_acc.iter().map(|a| a.se()).collect(),
        curve_mse_updated: updated_acc
            .iter()
            .map(|row| row.iter().map(|a| a.mean).collect())
            .collect(),
        curve_mse_updated_se: updated_acc
            .iter()
            .map(|row| row.iter().map(|a| a.se()).collect())
            .collect(),
        oracle_mse: oracle_acc.iter().map(|a| a.mean).collect(),
        oracle_mse_se: oracle_acc.iter().map(|a| a.se()).collect(),
    })
}
