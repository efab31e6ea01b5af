//! Asymptotic inference for the scale estimates, rate-based default
//! bandwidths, and a Monte Carlo probe for the smoother's bias/variance
//! expansion.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{Bandwidths, ModelFit, SpectraPanel};
use crate::smoother::{local_linear_fit, SmoothingPlan};
use crate::synth::{stream_rng, Design, SimCurve};

/// Normal-theory confidence interval for one individual's scale estimate.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BetaInference {
    pub beta_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
}

/// Confidence interval for the scale parameter of individual `i`.
///
/// The scale estimate is asymptotically normal with a variance driven by two
/// sources: the individual's own noise, and the baseline noise that entered
/// through the initial curve. Both are estimated by plugging the fitted
/// curve and the per-individual residual variances into
///
/// ```text
/// var = s2_i / a_i + beta_i^2 * s2_1 * a_1 / a_i^2,
/// a_j = mean_t (m(x_jt) - mean_t m(x_j.))^2
/// ```
///
/// and the interval is `beta_hat +/- z * sqrt(var / T_i)`.
pub fn beta_ci(
    panel: &SpectraPanel,
    fit: &ModelFit,
    individual: usize,
    level: f64,
) -> Result<BetaInference> {
    if individual >= panel.n() {
        return Err(Error::InvalidInput(format!(
            "individual {individual} out of range"
        )));
    }
    if individual == panel.baseline_index() {
        return Err(Error::InvalidInput(
            "the baseline individual's parameters are pinned; they have no sampling variability"
                .into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }

    let centered_mean_square = |i: usize| -> Result<(f64, usize)> {
        let m = fit.curve.values_at(panel.x_row(i))?;
        let t = m.len();
        let mean = m.iter().sum::<f64>() / t as f64;
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sum: f64 = m.iter().map(|&v| (v - mean) * (v - mean)).sum();
        if sum <= (1e-12 * scale).powi(2) * t as f64 {
            return Err(Error::DegenerateCurve { individual: i });
        }
        Ok((sum / t as f64, t))
    };

    let (a_i, t_i) = centered_mean_square(individual)?;
    let (a_1, _) = centered_mean_square(panel.baseline_index())?;
    let beta_hat = fit.params[individual].beta;
    let s2_i = fit.sigma2[individual];
    let s2_1 = fit.sigma2[panel.baseline_index()];

    let var = s2_i / a_i + beta_hat * beta_hat * s2_1 * a_1 / (a_i * a_i);
    let se = (var / t_i as f64).sqrt();
    let z = norm_quantile(0.5 * (1.0 + level));
    Ok(BetaInference {
        beta_hat,
        se,
        ci_lower: beta_hat - z * se,
        ci_upper: beta_hat + z * se,
        level,
    })
}

/// Rate-based default bandwidths: `h` scales as `T^(-1/3)` on the baseline
/// individual's x range, `h_star` as `(total points)^(-1/5)` on the panel's
/// full x range. Cross-validation should override these when it can.
pub fn default_bandwidths(panel: &SpectraPanel) -> Bandwidths {
    let (blo, bhi) = panel.baseline_x_range();
    let t = panel.baseline_x().len() as f64;
    let h = (bhi - blo) * t.powf(-1.0 / 3.0);
    let (glo, ghi) = panel.global_x_range();
    let total = panel.total_points() as f64;
    let h_star = (ghi - glo) * total.powf(-1.0 / 5.0);
    Bandwidths { h, h_star }
}

/// The `h` range inside which scale-parameter confidence intervals are
/// trustworthy: between `range * T^(-1/2)` and `range * T^(-1/4)`. Below it
/// the initial curve is too noisy, above it the smoothing bias leaks into
/// the intervals and erodes coverage.
pub fn ci_bandwidth_window(panel: &SpectraPanel) -> (f64, f64) {
    let (lo, hi) = panel.baseline_x_range();
    let range = hi - lo;
    let t = panel.baseline_x().len() as f64;
    (range * t.powf(-0.5), range * t.powf(-0.25))
}

/// Standard normal quantile, rational-approximation accuracy ~1e-15.
///
/// Returns NaN outside (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&CENTRAL_NUM, r) / poly(&CENTRAL_DEN, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let v = if r <= 5.0 {
        let r = r - 1.6;
        poly(&TAIL_NUM, r) / poly(&TAIL_DEN, r)
    } else {
        let r = r - 5.0;
        poly(&FAR_TAIL_NUM, r) / poly(&FAR_TAIL_DEN, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

#[allow(clippy::excessive_precision)]
fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[allow(clippy::excessive_precision)]
const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946_1e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
#[allow(clippy::excessive_precision)]
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_66e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545_5e3,
];
#[allow(clippy::excessive_precision)]
const TAIL_NUM: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
#[allow(clippy::excessive_precision)]
const TAIL_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_8,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
#[allow(clippy::excessive_precision)]
const FAR_TAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
#[allow(clippy::excessive_precision)]
const FAR_TAIL_DEN: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// Setup for the smoother bias/variance probe.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// True curve; needs an analytic second derivative.
    pub curve: SimCurve,
    pub design: Design,
    pub t: usize,
    pub sigma: f64,
    pub h: f64,
    /// Interior evaluation point.
    pub x0: f64,
    pub replications: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
}

/// Monte Carlo estimates next to their second-order predictions.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReport {
    pub empirical_bias: f64,
    /// `0.5 * m''(x0) * mu2 * h^2`.
    pub predicted_bias: f64,
    pub empirical_variance: f64,
    /// `sigma^2 * nu0 / (T * h * f(x0))`.
    pub predicted_variance: f64,
    pub mc_se_bias: f64,
}

/// Monte Carlo check of the initial smoother's bias and variance expansion
/// at a single interior point. A validation utility, not an estimator.
pub fn smoother_bias_probe(config: &ProbeConfig) -> Result<ProbeReport> {
    if config.t < 2 || config.replications < 2 {
        return Err(Error::InvalidInput(
            "probe needs at least 2 observations and 2 replications".into(),
        ));
    }
    if !(config.sigma.is_finite() && config.sigma >= 0.0) {
        return Err(Error::InvalidInput("sigma must be nonnegative".into()));
    }
    let m2 = config.curve.second_derivative(config.x0).ok_or_else(|| {
        Error::InvalidInput("probe curve must have an analytic second derivative".into())
    })?;
    config.design.validate()?;

    let truth = config.curve.value(config.x0);
    let values: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(config.seed, rep as u64);
            let x = config.design.sample(config.t, &mut rng);
            let y: Vec<f64> = x
                .iter()
                .map(|&v| config.curve.value(v) + config.sigma * crate::synth::standard_normal(&mut rng))
                .collect();
            let plan = SmoothingPlan::new(config.kernel, config.h, vec![config.x0])?;
            Ok(local_linear_fit(&x, &y, &plan)?.values[0])
        })
        .collect::<Result<Vec<f64>>>()?;

    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    Ok(ProbeReport {
        empirical_bias: mean - truth,
        predicted_bias: 0.5 * m2 * config.kernel.mu2 * config.h * config.h,
        empirical_variance: var,
        predicted_variance: config.sigma * config.sigma * config.kernel.nu0
            / (config.t as f64 * config.h * config.design.density()),
        mc_se_bias: (var / r).sqrt(),
    })
}
