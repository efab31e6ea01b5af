//! Local linear smoothers.
//!
//! Both estimators fit a kernel-weighted least-squares line at every
//! evaluation point and return its intercept. `local_linear_fit` smooths a
//! single series; `pooled_weighted_fit` combines the rescaled series of a
//! whole panel, weighting each individual by its squared scale estimate so
//! that noisy, down-scaled individuals contribute less.
//!
//! Inputs are scanned through a sorted view, so each evaluation point only
//! touches the observations inside its kernel window. Correctness is defined
//! by the plain double loop over all observations; the windowed scan is an
//! optimization and is held to it by tests.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Relative floor for the local-linear denominator `s0*s2 - s1^2`.
///
/// The denominator is bounded above by `(sum_t K_h)^2 h^2`, so anything this
/// far below that scale is float cancellation noise rather than usable
/// curvature, and the window is reported as degenerate.
const DENOM_FLOOR_REL: f64 = 1e-12;

/// Bandwidth, kernel and evaluation grid for one smoothing pass.
#[derive(Debug, Clone)]
pub struct SmoothingPlan {
    pub kernel: KernelSpec,
    /// Same units as x; the kernel window at x0 is `[x0 - bandwidth, x0 + bandwidth]`.
    pub bandwidth: f64,
    /// Ascending (nondecreasing) evaluation points.
    pub eval_points: Vec<f64>,
}

impl SmoothingPlan {
    pub fn new(kernel: KernelSpec, bandwidth: f64, eval_points: Vec<f64>) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if eval_points.is_empty() {
            return Err(Error::InvalidInput(
                "at least one evaluation point is required".into(),
            ));
        }
        if eval_points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "evaluation points must be finite".into(),
            ));
        }
        if eval_points.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "evaluation points must be nondecreasing".into(),
            ));
        }
        Ok(SmoothingPlan {
            kernel,
            bandwidth,
            eval_points,
        })
    }
}

/// A fitted curve on an evaluation grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CurveEstimate {
    pub eval_points: Vec<f64>,
    pub values: Vec<f64>,
    /// Raw kernel mass `sum K_h(x_t - x)` near each evaluation point, for
    /// diagnosing sparse windows.
    pub effective_count: Vec<f64>,
}

impl CurveEstimate {
    pub fn len(&self) -> usize {
        self.eval_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eval_points.is_empty()
    }

    /// Piecewise-linear interpolation of the curve at `x`.
    ///
    /// Exact at the grid points themselves; anything outside the grid range
    /// is an `OutOfRange` error, never an extrapolation.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let pts = &self.eval_points;
        let lo = pts[0];
        let hi = *pts.last().expect("non-empty grid");
        if !x.is_finite() || x < lo || x > hi {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        // Index of the first grid point strictly greater than x.
        let j = pts.partition_point(|&p| p <= x);
        if j == pts.len() {
            return Ok(self.values[pts.len() - 1]);
        }
        let i = j - 1;
        if x == pts[i] {
            return Ok(self.values[i]);
        }
        let (x0, x1) = (pts[i], pts[j]);
        let (v0, v1) = (self.values[i], self.values[j]);
        Ok(v0 + (x - x0) * (v1 - v0) / (x1 - x0))
    }

    pub fn values_at(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.value_at(x)).collect()
    }
}

/// Raw local-linear weights at a single point, plus the centered design
/// moments they are built from. Diagnostics for the weight identities.
#[derive(Debug, Clone)]
pub struct WeightDiagnostics {
    /// One weight per observation, in input order.
    pub weights: Vec<f64>,
    pub s1: f64,
    pub s2: f64,
}

/// Per-observation pooled weights at a single point (one row per individual).
#[derive(Debug, Clone)]
pub struct PooledWeightDiagnostics {
    pub weights: Vec<Vec<f64>>,
    /// Weighted combinations `sum_i w_i s1_i` and `sum_i w_i s2_i`.
    pub s1_combined: f64,
    pub s2_combined: f64,
}

#[derive(Default, Clone, Copy)]
struct WindowMoments {
    s0: f64,
    s1: f64,
    s2: f64,
    t0: f64,
    t1: f64,
}

#[inline]
fn window(xs: &[f64], x0: f64, h: f64) -> (usize, usize) {
    let lo = xs.partition_point(|&v| v < x0 - h);
    let hi = xs.partition_point(|&v| v <= x0 + h);
    (lo, hi)
}

#[inline]
fn accumulate(
    xs: &[f64],
    ys: &[f64],
    kernel: &KernelSpec,
    h: f64,
    x0: f64,
    acc: &mut WindowMoments,
) {
    let (lo, hi) = window(xs, x0, h);
    for t in lo..hi {
        let d = xs[t] - x0;
        let w = kernel.eval(d / h) / h;
        acc.s0 += w;
        acc.s1 += w * d;
        acc.s2 += w * d * d;
        acc.t0 += w * ys[t];
        acc.t1 += w * d * ys[t];
    }
}

fn validate_series(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "x and y lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::InvalidInput(format!(
            "need at least {min_len} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "observations must be finite".into(),
        ));
    }
    Ok(())
}

/// Sorted-by-x view of a series; borrows when the input is already sorted.
type SortedSeries<'a> = (Cow<'a, [f64]>, Cow<'a, [f64]>);

fn sorted_view<'a>(x: &'a [f64], y: &'a [f64]) -> SortedSeries<'a> {
    if x.windows(2).all(|w| w[0] <= w[1]) {
        return (Cow::Borrowed(x), Cow::Borrowed(y));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    (Cow::Owned(xs), Cow::Owned(ys))
}

/// Local linear regression of one series, evaluated on the plan's grid.
///
/// At each evaluation point the fitted value is the intercept of the
/// kernel-weighted least-squares line, i.e. `(s2*t0 - s1*t1) / (s0*s2 - s1^2)`
/// with `s_k = sum_t K_h(x_t - x0) (x_t - x0)^k` and
/// `t_k = sum_t K_h(x_t - x0) (x_t - x0)^k y_t`.
pub fn local_linear_fit(x: &[f64], y: &[f64], plan: &SmoothingPlan) -> Result<CurveEstimate> {
    validate_series(x, y, 2)?;
    let (xs, ys) = sorted_view(x, y);
    let h = plan.bandwidth;
    let fits: Vec<(f64, f64, bool)> = plan
        .eval_points
        .par_iter()
        .map(|&x0| {
            let mut acc = WindowMoments::default();
            accumulate(&xs, &ys, &plan.kernel, h, x0, &mut acc);
            finish_point(&acc, h)
        })
        .collect();
    assemble_curve(plan, fits)
}

/// Pooled local linear regression over a panel of rescaled series.
///
/// `weights_sq` holds the squared per-individual scale estimates. At each
/// evaluation point the per-individual design moments are combined with
/// those weights before forming the line, so the fit is a single weighted
/// least-squares problem over all individuals at once.
pub fn pooled_weighted_fit<X, Y>(
    panel_x: &[X],
    panel_ystar: &[Y],
    weights_sq: &[f64],
    plan: &SmoothingPlan,
) -> Result<CurveEstimate>
where
    X: AsRef<[f64]> + Sync,
    Y: AsRef<[f64]> + Sync,
{
    if panel_x.len() != panel_ystar.len() || panel_x.len() != weights_sq.len() {
        return Err(Error::InvalidInput(
            "panel rows and weights must have matching lengths".into(),
        ));
    }
    if panel_x.is_empty() {
        return Err(Error::InvalidInput("panel must be non-empty".into()));
    }
    if weights_sq.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(
            "pooling weights must be finite and nonnegative".into(),
        ));
    }
    if weights_sq.iter().all(|&w| w == 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let mut total = 0usize;
    for (xr, yr) in panel_x.iter().zip(panel_ystar) {
        validate_series(xr.as_ref(), yr.as_ref(), 1)?;
        total += xr.as_ref().len();
    }
    if total < 2 {
        return Err(Error::InvalidInput(
            "panel must contain at least two observations".into(),
        ));
    }

    let rows: Vec<SortedSeries<'_>> = panel_x
        .iter()
        .zip(panel_ystar)
        .map(|(xr, yr)| sorted_view(xr.as_ref(), yr.as_ref()))
        .collect();
    let h = plan.bandwidth;

    let fits: Vec<(f64, f64, bool)> = plan
        .eval_points
        .par_iter()
        .map(|&x0| {
            // Combine per-individual moments with the squared-scale weights;
            // the pooled intercept then has the same closed form as the
            // single-series fit.
            let mut comb = WindowMoments::default();
            let mut raw_mass = 0.0;
            for ((xs, ys), &w) in rows.iter().zip(weights_sq) {
                let mut acc = WindowMoments::default();
                accumulate(xs, ys, &plan.kernel, h, x0, &mut acc);
                raw_mass += acc.s0;
                if w > 0.0 {
                    comb.s0 += w * acc.s0;
                    comb.s1 += w * acc.s1;
                    comb.s2 += w * acc.s2;
                    comb.t0 += w * acc.t0;
                    comb.t1 += w * acc.t1;
                }
            }
            let (value, _, ok) = finish_point(&comb, h);
            (value, raw_mass, ok)
        })
        .collect();
    assemble_curve(plan, fits)
}

#[inline]
fn finish_point(acc: &WindowMoments, h: f64) -> (f64, f64, bool) {
    let den = acc.s0 * acc.s2 - acc.s1 * acc.s1;
    let floor = DENOM_FLOOR_REL * (acc.s0 * h) * (acc.s0 * h);
    if acc.s0 <= 0.0 || den <= floor {
        (f64::NAN, acc.s0, false)
    } else {
        ((acc.s2 * acc.t0 - acc.s1 * acc.t1) / den, acc.s0, true)
    }
}

fn assemble_curve(plan: &SmoothingPlan, fits: Vec<(f64, f64, bool)>) -> Result<CurveEstimate> {
    let offenders: Vec<f64> = plan
        .eval_points
        .iter()
        .zip(&fits)
        .filter(|(_, f)| !f.2)
        .map(|(&p, _)| p)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::EmptyWindow {
            offenders,
            total: plan.eval_points.len(),
            bandwidth: plan.bandwidth,
        });
    }
    if fits.iter().any(|f| !f.0.is_finite()) {
        return Err(Error::NonFinite {
            context: "local linear fit".into(),
        });
    }
    Ok(CurveEstimate {
        eval_points: plan.eval_points.clone(),
        values: fits.iter().map(|f| f.0).collect(),
        effective_count: fits.iter().map(|f| f.1).collect(),
    })
}

/// Raw local-linear weights at `x0` for one series.
///
/// Exposes `w_t = K_h(x_t - x0) (s2 - (x_t - x0) s1)` together with the
/// centered moments, so the orthogonality identity
/// `sum_t w_t (x_t - x0) = 0` can be checked directly.
pub fn weight_diagnostics(x: &[f64], plan: &SmoothingPlan, x0: f64) -> WeightDiagnostics {
    let h = plan.bandwidth;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &xt in x {
        let d = xt - x0;
        let w = plan.kernel.eval(d / h) / h;
        s1 += w * d;
        s2 += w * d * d;
    }
    let weights = x
        .iter()
        .map(|&xt| {
            let d = xt - x0;
            plan.kernel.eval(d / h) / h * (s2 - d * s1)
        })
        .collect();
    WeightDiagnostics { weights, s1, s2 }
}

/// Pooled analogue of [`weight_diagnostics`]: the per-observation weights of
/// the panel smoother at `x0`, one row per individual.
pub fn pooled_weight_diagnostics<X: AsRef<[f64]>>(
    panel_x: &[X],
    weights_sq: &[f64],
    kernel: &KernelSpec,
    bandwidth: f64,
    x0: f64,
) -> PooledWeightDiagnostics {
    let h = bandwidth;
    let mut s1c = 0.0;
    let mut s2c = 0.0;
    for (xr, &w) in panel_x.iter().zip(weights_sq) {
        for &xt in xr.as_ref() {
            let d = xt - x0;
            let k = kernel.eval(d / h) / h;
            s1c += w * k * d;
            s2c += w * k * d * d;
        }
    }
    let weights = panel_x
        .iter()
        .zip(weights_sq)
        .map(|(xr, &w)| {
            xr.as_ref()
                .iter()
                .map(|&xt| {
                    let d = xt - x0;
                    w * kernel.eval(d / h) / h * (s2c - d * s1c)
                })
                .collect()
        })
        .collect();
    PooledWeightDiagnostics {
        weights,
        s1_combined: s1c,
        s2_combined: s2c,
    }
}
