//! The multi-step estimator.
//!
//! A panel of spectra shares one baseline curve; each individual observes an
//! affine transform of it plus noise. Fitting alternates between
//!
//! 1. an initial curve from the designated baseline individual alone,
//! 2. per-individual least squares of the responses on the current curve,
//! 3. a pooled curve update over all individuals' rescaled responses,
//!
//! and repeats 2–3 until the parameters stop moving. The baseline individual
//! is pinned at `(alpha, beta) = (0, 1)` throughout; that is what makes the
//! decomposition identifiable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::smoother::{local_linear_fit, pooled_weighted_fit, CurveEstimate, SmoothingPlan};

/// Per-individual affine transform of the baseline curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationScale {
    pub alpha: f64,
    pub beta: f64,
}

impl LocationScale {
    /// The pinned parameters of the baseline individual.
    pub const BASELINE: LocationScale = LocationScale {
        alpha: 0.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        LocationScale { alpha, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

/// The two smoothing scales: `h` for the initial single-series curve,
/// `h_star` for the pooled update. They play different roles and are chosen
/// on different schedules; see [`crate::inference::default_bandwidths`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub h: f64,
    pub h_star: f64,
}

impl Bandwidths {
    pub fn new(h: f64, h_star: f64) -> Result<Self> {
        for (name, v) in [("h", h), ("h_star", h_star)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Bandwidths { h, h_star })
    }
}

/// The observed design: per-individual (x, y) series plus a designated
/// baseline individual.
///
/// Invariants enforced at construction: each row has matching lengths of at
/// least 3, strictly increasing finite x, finite y; the baseline index is in
/// range. `registered` is computed, not supplied: it is true exactly when
/// all rows share one x grid.
#[derive(Debug, Clone)]
pub struct SpectraPanel {
    ids: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    baseline_index: usize,
    registered: bool,
}

impl SpectraPanel {
    pub fn new(
        ids: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        baseline_index: usize,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::InvalidInput("panel must be non-empty".into()));
        }
        if x.len() != n || y.len() != n {
            return Err(Error::InvalidInput(
                "ids, x and y must have one entry per individual".into(),
            ));
        }
        if baseline_index >= n {
            return Err(Error::InvalidInput(format!(
                "baseline index {baseline_index} out of range for {n} individuals"
            )));
        }
        for i in 0..n {
            if x[i].len() != y[i].len() {
                return Err(Error::InvalidInput(format!(
                    "individual {} has {} x values but {} y values",
                    ids[i],
                    x[i].len(),
                    y[i].len()
                )));
            }
            if x[i].len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "individual {} has fewer than 3 observations",
                    ids[i]
                )));
            }
            if x[i].iter().chain(y[i].iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "individual {} contains non-finite observations",
                    ids[i]
                )));
            }
            if x[i].windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "x values of individual {} must be strictly increasing",
                    ids[i]
                )));
            }
        }
        let registered = x.iter().all(|row| row == &x[0]);
        Ok(SpectraPanel {
            ids,
            x,
            y,
            baseline_index,
            registered,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    pub fn baseline_index(&self) -> usize {
        self.baseline_index
    }

    pub fn baseline_x(&self) -> &[f64] {
        &self.x[self.baseline_index]
    }

    /// True when every individual shares one x grid.
    pub fn registered(&self) -> bool {
        self.registered
    }

    pub fn total_points(&self) -> usize {
        self.x.iter().map(Vec::len).sum()
    }

    /// The common series length, when all rows have one.
    pub fn common_len(&self) -> Option<usize> {
        let t = self.x[0].len();
        self.x.iter().all(|row| row.len() == t).then_some(t)
    }

    /// Range of the baseline individual's x values.
    pub fn baseline_x_range(&self) -> (f64, f64) {
        let row = self.baseline_x();
        (row[0], *row.last().expect("non-empty row"))
    }

    /// Range of x over the whole panel.
    pub fn global_x_range(&self) -> (f64, f64) {
        let lo = self
            .x
            .iter()
            .map(|r| r[0])
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .x
            .iter()
            .map(|r| *r.last().expect("non-empty row"))
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Sub-panel of the given individuals (in the given order); the first
    /// one becomes the new baseline. Used by cross-validation training sets.
    pub fn subset(&self, indices: &[usize]) -> Result<SpectraPanel> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("subset must be non-empty".into()));
        }
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!(
                    "subset index {i} out of range"
                )));
            }
        }
        SpectraPanel::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            indices.iter().map(|&i| self.x[i].clone()).collect(),
            indices.iter().map(|&i| self.y[i].clone()).collect(),
            0,
        )
    }

    /// Same panel with a different baseline individual, for checking that
    /// the fit is insensitive to the choice (after affine re-normalization).
    pub fn with_baseline(&self, baseline_index: usize) -> Result<SpectraPanel> {
        if baseline_index >= self.n() {
            return Err(Error::InvalidInput(format!(
                "baseline index {baseline_index} out of range"
            )));
        }
        let mut panel = self.clone();
        panel.baseline_index = baseline_index;
        Ok(panel)
    }
}

/// Knobs for the iterative fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop when `max_i (|d alpha_i| + |d beta_i|)` falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Stop after the first parameter/curve pass; one pass already attains
    /// the asymptotic rates, so this trades a little finite-sample accuracy
    /// for time on large panels.
    pub single_pass: bool,
    /// Curve evaluation grid; defaults to the baseline individual's x values.
    pub eval_points: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iterations: 20,
            single_pass: false,
            eval_points: None,
        }
    }
}

/// Result of the multi-step fit.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub params: Vec<LocationScale>,
    /// The pooled curve estimate from the final pass.
    pub curve: CurveEstimate,
    /// The initial baseline-only curve, retained for diagnostics.
    pub initial_curve: CurveEstimate,
    /// Per-individual residual variance (mean squared residual).
    pub sigma2: Vec<f64>,
    pub bandwidths: Bandwidths,
    pub iterations: usize,
    pub converged: bool,
    /// Max parameter change after each pass, for convergence diagnostics.
    pub param_path: Vec<f64>,
}

/// Initial curve: local linear fit to the baseline individual alone.
pub fn initial_curve(
    panel: &SpectraPanel,
    kernel: &KernelSpec,
    h: f64,
    eval_points: &[f64],
) -> Result<CurveEstimate> {
    let plan = SmoothingPlan::new(*kernel, h, eval_points.to_vec())?;
    local_linear_fit(panel.baseline_x(), panel.y_row(panel.baseline_index()), &plan)
}

fn regress_on_curve(
    x: &[f64],
    y: &[f64],
    curve: &CurveEstimate,
    individual: usize,
) -> Result<LocationScale> {
    let m = curve.values_at(x)?;
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
    // A curve that is constant over this individual's design carries no
    // scale information; refuse rather than divide by noise.
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = (1e-12 * scale).powi(2) * t;
    if sxx <= floor {
        return Err(Error::DegenerateCurve { individual });
    }
    let beta = sxy / sxx;
    let alpha = y_bar - beta * m_bar;
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("least squares for individual {individual}"),
        });
    }
    Ok(LocationScale { alpha, beta })
}

/// Per-individual least squares of the responses on the current curve.
///
/// For each non-baseline individual the slope is
/// `sum_t (m(x_it) - mean) y_it / sum_t (m(x_it) - mean)^2` and the offset is
/// `mean(y) - beta * mean(m)`; the baseline stays pinned at `(0, 1)`.
/// When an individual's x values fall between curve grid points, the curve
/// is evaluated by linear interpolation.
pub fn fit_location_scale(
    panel: &SpectraPanel,
    curve: &CurveEstimate,
) -> Result<Vec<LocationScale>> {
    (0..panel.n())
        .map(|i| {
            if i == panel.baseline_index() {
                Ok(LocationScale::BASELINE)
            } else {
                regress_on_curve(panel.x_row(i), panel.y_row(i), curve, i)
            }
        })
        .collect()
}

/// Divisor used when rescaling by an estimated scale parameter: keeps the
/// sign but never lets the magnitude fall below a small fraction of the
/// panel-median scale.
fn stabilized(beta: f64, eps: f64) -> f64 {
    beta.signum() * beta.abs().max(eps)
}

fn median_abs_beta(params: &[LocationScale]) -> f64 {
    let mut mags: Vec<f64> = params.iter().map(|p| p.beta.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let k = mags.len();
    if k % 2 == 1 {
        mags[k / 2]
    } else {
        0.5 * (mags[k / 2 - 1] + mags[k / 2])
    }
}

/// Pooled curve update, treating the current parameter estimates as truth.
///
/// Each individual contributes its rescaled responses
/// `(y_it - alpha_i) / beta_i` with pooling weight `beta_i^2`. Individuals
/// with an exactly zero scale estimate carry zero weight and are skipped;
/// small nonzero scales are stabilized before dividing.
pub fn update_curve(
    panel: &SpectraPanel,
    params: &[LocationScale],
    kernel: &KernelSpec,
    h_star: f64,
    eval_points: &[f64],
) -> Result<CurveEstimate> {
    if params.len() != panel.n() {
        return Err(Error::InvalidInput(
            "one parameter pair per individual is required".into(),
        ));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            context: "curve update parameters".into(),
        });
    }
    let eps_beta = 1e-8 * median_abs_beta(params);
    let mut xs: Vec<&[f64]> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut weights = Vec::new();
    for (i, p) in params.iter().enumerate() {
        if p.beta == 0.0 {
            continue;
        }
        let b = stabilized(p.beta, eps_beta);
        xs.push(panel.x_row(i));
        ys.push(panel.y_row(i).iter().map(|&v| (v - p.alpha) / b).collect());
        weights.push(p.beta * p.beta);
    }
    if weights.is_empty() {
        return Err(Error::AllZeroWeights);
    }
    let plan = SmoothingPlan::new(*kernel, h_star, eval_points.to_vec())?;
    pooled_weighted_fit(&xs, &ys, &weights, &plan)
}

/// Per-individual mean squared residual against the fitted curve, with the
/// baseline individual's parameters pinned at `(0, 1)`.
pub fn plug_in_sigma2(
    panel: &SpectraPanel,
    params: &[LocationScale],
    curve: &CurveEstimate,
) -> Result<Vec<f64>> {
    if params.len() != panel.n() {
        return Err(Error::InvalidInput(
            "one parameter pair per individual is required".into(),
        ));
    }
    (0..panel.n())
        .map(|i| {
            let p = if i == panel.baseline_index() {
                LocationScale::BASELINE
            } else {
                params[i]
            };
            let x = panel.x_row(i);
            let y = panel.y_row(i);
            let mut sse = 0.0;
            for (&xt, &yt) in x.iter().zip(y) {
                let r = yt - p.alpha - p.beta * curve.value_at(xt)?;
                sse += r * r;
            }
            Ok(sse / x.len() as f64)
        })
        .collect()
}

/// The full estimator: initial curve once, then alternate least squares and
/// pooled updates until the parameters converge (or a single pass when
/// requested). Residual variances are filled in from the final state.
pub fn multi_step_fit(
    panel: &SpectraPanel,
    kernel: &KernelSpec,
    bandwidths: Bandwidths,
    options: &FitOptions,
) -> Result<ModelFit> {
    Bandwidths::new(bandwidths.h, bandwidths.h_star)?;
    if !(options.tol.is_finite() && options.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if options.max_iterations == 0 {
        return Err(Error::InvalidInput(
            "at least one iteration is required".into(),
        ));
    }
    let eval: Vec<f64> = options
        .eval_points
        .clone()
        .unwrap_or_else(|| panel.baseline_x().to_vec());

    let m_tilde = initial_curve(panel, kernel, bandwidths.h, &eval)?;

    let mut params = vec![LocationScale::BASELINE; panel.n()];
    let mut curve = m_tilde.clone();
    let mut param_path = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        let new_params = fit_location_scale(panel, &curve)?;
        let new_curve = update_curve(panel, &new_params, kernel, bandwidths.h_star, &eval)?;
        iterations += 1;

        let delta = params
            .iter()
            .zip(&new_params)
            .map(|(old, new)| (old.alpha - new.alpha).abs() + (old.beta - new.beta).abs())
            .fold(0.0f64, f64::max);
        if !delta.is_finite() {
            return Err(Error::NonFinite {
                context: format!("parameter update at iteration {iterations}"),
            });
        }
        param_path.push(delta);
        params = new_params;
        curve = new_curve;

        if options.single_pass {
            converged = true;
            break;
        }
        if delta < options.tol {
            converged = true;
            break;
        }
    }

    let sigma2 = plug_in_sigma2(panel, &params, &curve)?;
    Ok(ModelFit {
        params,
        curve,
        initial_curve: m_tilde,
        sigma2,
        bandwidths,
        iterations,
        converged,
        param_path,
    })
}

/// Predicted responses `alpha + beta * m(x)` for one individual, with the
/// curve interpolated between its grid points. Extrapolation is refused.
pub fn predict(fit: &ModelFit, individual: &LocationScale, x_new: &[f64]) -> Result<Vec<f64>> {
    x_new
        .iter()
        .map(|&x| Ok(individual.alpha + individual.beta * fit.curve.value_at(x)?))
        .collect()
}

/// Serializable summary of a fit, the schema written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub ids: Vec<String>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub eval_points: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub m_tilde: Vec<f64>,
    pub h: f64,
    pub h_star: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_level: Option<f64>,
    /// Per-individual standard errors of the scale estimates; `null` for the
    /// baseline, whose parameters are pinned.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_lower: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_upper: Option<Vec<Option<f64>>>,
}

impl FitDocument {
    pub fn new(panel: &SpectraPanel, fit: &ModelFit) -> Self {
        FitDocument {
            ids: panel.ids().to_vec(),
            alpha: fit.params.iter().map(|p| p.alpha).collect(),
            beta: fit.params.iter().map(|p| p.beta).collect(),
            sigma2: fit.sigma2.clone(),
            eval_points: fit.curve.eval_points.clone(),
            m_hat: fit.curve.values.clone(),
            m_tilde: fit.initial_curve.values.clone(),
            h: fit.bandwidths.h,
            h_star: fit.bandwidths.h_star,
            iterations: fit.iterations,
            converged: fit.converged,
            ci_level: None,
            se: None,
            ci_lower: None,
            ci_upper: None,
        }
    }
}
