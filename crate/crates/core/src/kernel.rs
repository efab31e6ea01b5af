//! Kernel functions with bounded support and their moments.
//!
//! Every family is a symmetric probability density supported on `[-1, 1]`.
//! Bounded support keeps each smoothing window finite, so the smoothers only
//! ever touch the observations within one bandwidth of an evaluation point.
//! The scaled kernel `K_h(u) = K(u/h)/h` is formed inside the smoothers; a
//! `KernelSpec` itself is bandwidth-free and immutable, safe to share across
//! threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target absolute accuracy for moments without a stored closed form.
const QUADRATURE_TOL: f64 = 1e-12;

/// Kernel family, selectable by name in the CLI and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Epanechnikov,
    Triangular,
    Uniform,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Triangular => "triangular",
            KernelFamily::Uniform => "uniform",
        }
    }

    /// Build the full spec with exact closed-form moments.
    pub fn spec(self) -> KernelSpec {
        KernelSpec::new(self)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epan" => Ok(KernelFamily::Epanechnikov),
            "triangular" | "triangle" => Ok(KernelFamily::Triangular),
            "uniform" | "box" => Ok(KernelFamily::Uniform),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel family '{other}' (expected epanechnikov, triangular or uniform)"
            ))),
        }
    }
}

/// A kernel together with its cached second moment `mu2 = ∫ u² K(u) du` and
/// squared-mass `nu0 = ∫ K(u)² du`, the two constants every bias/variance
/// expression needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Half-width of the support; always 1, the bandwidth rescales it.
    pub support_radius: f64,
    pub mu2: f64,
    pub nu0: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        let (mu2, nu0) = match family {
            // K(u) = 3/4 (1 - u²)
            KernelFamily::Epanechnikov => (1.0 / 5.0, 3.0 / 5.0),
            // K(u) = 1 - |u|
            KernelFamily::Triangular => (1.0 / 6.0, 2.0 / 3.0),
            // K(u) = 1/2
            KernelFamily::Uniform => (1.0 / 3.0, 1.0 / 2.0),
        };
        KernelSpec {
            family,
            support_radius: 1.0,
            mu2,
            nu0,
        }
    }

    /// Evaluate K(u). Zero outside the support, nonnegative everywhere.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        if a > self.support_radius {
            return 0.0;
        }
        match self.family {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFamily::Triangular => 1.0 - a,
            KernelFamily::Uniform => 0.5,
        }
    }

    /// Moment `∫ u^l K(u) du` (`squared = false`) or `∫ u^l K(u)² du`
    /// (`squared = true`).
    ///
    /// The stored pairs (l = 2 plain, l = 0 squared) and the unit mass come
    /// back in closed form; anything else goes through adaptive quadrature
    /// to 1e-10 absolute.
    pub fn moment(&self, l: u32, squared: bool) -> f64 {
        match (l, squared) {
            (0, false) => 1.0,
            (2, false) => self.mu2,
            (0, true) => self.nu0,
            _ => {
                let f = |u: f64| {
                    let k = self.eval(u);
                    u.powi(l as i32) * if squared { k * k } else { k }
                };
                // Split at the origin: the triangular kernel has a kink there,
                // and each half is then polynomial.
                integrate(&f, -1.0, 0.0, QUADRATURE_TOL / 2.0)
                    + integrate(&f, 0.0, 1.0, QUADRATURE_TOL / 2.0)
            }
        }
    }
}

/// Adaptive Simpson quadrature over `[a, b]`.
pub(crate) fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [KernelFamily; 3] = [
        KernelFamily::Epanechnikov,
        KernelFamily::Triangular,
        KernelFamily::Uniform,
    ];

    #[test]
    fn epanechnikov_pointwise_values() {
        let k = KernelFamily::Epanechnikov.spec();
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(2.0), 0.0);
        assert_eq!(k.eval(-2.0), 0.0);
        assert!((k.eval(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn unit_mass_and_zero_first_moment() {
        for fam in FAMILIES {
            let k = fam.spec();
            let mass = integrate(&|u| k.eval(u), -1.0, 0.0, 1e-13)
                + integrate(&|u| k.eval(u), 0.0, 1.0, 1e-13);
            assert!((mass - 1.0).abs() < 1e-12, "{fam}: mass {mass}");
            let m1 = k.moment(1, false);
            assert!(m1.abs() < 1e-10, "{fam}: first moment {m1}");
        }
    }

    #[test]
    fn stored_moments_match_quadrature() {
        for fam in FAMILIES {
            let k = fam.spec();
            assert!(k.mu2 > 0.0 && k.nu0 > 0.0);
            let f2 = |u: f64| u * u * k.eval(u);
            let mu2 = integrate(&f2, -1.0, 0.0, 1e-13) + integrate(&f2, 0.0, 1.0, 1e-13);
            assert!((mu2 - k.moment(2, false)).abs() < 1e-10, "{fam}");
            let f0 = |u: f64| k.eval(u) * k.eval(u);
            let nu0 = integrate(&f0, -1.0, 0.0, 1e-13) + integrate(&f0, 0.0, 1.0, 1e-13);
            assert!((nu0 - k.moment(0, true)).abs() < 1e-10, "{fam}");
        }
    }

    #[test]
    fn epanechnikov_exact_moment_values() {
        let k = KernelFamily::Epanechnikov.spec();
        assert!((k.moment(2, false) - 0.2).abs() < 1e-12);
        assert!((k.moment(0, true) - 0.6).abs() < 1e-12);
        // Higher moments fall back to quadrature; both happen to be 3/35.
        assert!((k.moment(4, false) - 3.0 / 35.0).abs() < 1e-10);
        assert!((k.moment(2, true) - 3.0 / 35.0).abs() < 1e-10);
    }

    #[test]
    fn evenness_on_a_grid() {
        for fam in FAMILIES {
            let k = fam.spec();
            for i in 0..=1000 {
                let u = -2.0 + 4.0 * (i as f64) / 1000.0;
                assert_eq!(k.eval(u), k.eval(-u), "{fam} at {u}");
                assert!(k.eval(u) >= 0.0);
            }
        }
    }

    #[test]
    fn family_parses_by_name() {
        assert_eq!(
            "epanechnikov".parse::<KernelFamily>().unwrap(),
            KernelFamily::Epanechnikov
        );
        assert_eq!(
            "Uniform".parse::<KernelFamily>().unwrap(),
            KernelFamily::Uniform
        );
        assert!("gaussian".parse::<KernelFamily>().is_err());
    }
}
