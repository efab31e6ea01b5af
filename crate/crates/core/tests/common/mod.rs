//! Shared helpers for the integration suites: independent brute-force
//! oracles (kept free of the library's windowed-scan code path), a tiny
//! deterministic RNG, and panel constructors.

// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use basecurve::{KernelSpec, SpectraPanel};

/// Small xorshift-based RNG so test instances do not depend on the library's
/// generator at all.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// Independent single-series oracle: set up the kernel-weighted normal
/// equations for (intercept, slope) explicitly and solve them by Gaussian
/// elimination. Returns the intercept.
pub fn wls_intercept_oracle(x: &[f64], y: &[f64], kernel: &KernelSpec, h: f64, x0: f64) -> f64 {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xt, &yt) in x.iter().zip(y) {
        let d = xt - x0;
        let w = kernel.eval(d / h) / h;
        a11 += w;
        a12 += w * d;
        a22 += w * d * d;
        b1 += w * yt;
        b2 += w * d * yt;
    }
    let f = a12 / a11;
    let slope = (b2 - f * b1) / (a22 - f * a12);
    (b1 - a12 * slope) / a11
}

/// Independent pooled oracle: build every per-observation weight explicitly
/// with nested loops and average.
pub fn pooled_oracle(
    panel_x: &[Vec<f64>],
    panel_y: &[Vec<f64>],
    weights_sq: &[f64],
    kernel: &KernelSpec,
    h: f64,
    x0: f64,
) -> f64 {
    let n = panel_x.len();
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for i in 0..n {
        for &xt in &panel_x[i] {
            let d = xt - x0;
            let k = kernel.eval(d / h) / h;
            s1[i] += k * d;
            s2[i] += k * d * d;
        }
    }
    let a1: f64 = (0..n).map(|i| weights_sq[i] * s1[i]).sum();
    let a2: f64 = (0..n).map(|i| weights_sq[i] * s2[i]).sum();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for (&xt, &yt) in panel_x[i].iter().zip(&panel_y[i]) {
            let d = xt - x0;
            let omega = weights_sq[i] * kernel.eval(d / h) / h * (a2 - d * a1);
            num += omega * yt;
            den += omega;
        }
    }
    num / den
}

/// Relative difference guarded against near-zero fitted values: the scale of
/// the data keeps the ratio meaningful when the two routes both produce a
/// value close to zero.
pub fn relative_diff(a: f64, b: f64, data_scale: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs()) + 1e-9 * data_scale.max(1e-300))
}

/// Noise-free panel y_it = alpha_i + beta_i * (a + b x) on an equally spaced
/// grid over [0, 1].
pub fn linear_panel(params: &[(f64, f64)], t: usize, a: f64, b: f64) -> SpectraPanel {
    let x: Vec<f64> = (0..t).map(|k| k as f64 / (t - 1) as f64).collect();
    let ids = (0..params.len()).map(|i| format!("ind{i}")).collect();
    let ys = params
        .iter()
        .map(|&(al, be)| x.iter().map(|&v| al + be * (a + b * v)).collect())
        .collect();
    SpectraPanel::new(ids, vec![x; params.len()], ys, 0).unwrap()
}

