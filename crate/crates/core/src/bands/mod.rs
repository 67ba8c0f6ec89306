//! Radial conduction-band models `eps(r)` in units of kB T_L, with
//! `r = |k|^2` scaled by the thermal wavevector.

mod average;
mod file;
mod spline;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use average::{
    gauss10_angular_nodes, l2_deviation, spherical_average, AngularNodes, BandTable,
    FullBandSampler, GridSampler, SyntheticBand,
};
pub use file::{load_band_file, write_angular_file, write_radial_file, BandFile};
pub use spline::{CubicSpline, SplineBoundary};

use crate::error::{Error, Result};

/// `eps(r)` and `d eps / dr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandValue {
    pub eps: f64,
    pub deps_dr: f64,
}

#[derive(Debug, Clone)]
pub enum EnergyBand {
    Parabolic,
    /// `eps (1 + alpha eps) = r`, alpha dimensionless.
    Kane { alpha: f64 },
    Tabulated(Arc<TabulatedBand>),
}

#[derive(Debug)]
pub struct TabulatedBand {
    spline: CubicSpline,
    allow_extrapolation: bool,
    extrapolations: AtomicU64,
}

impl TabulatedBand {
    pub fn spline(&self) -> &CubicSpline {
        &self.spline
    }

    /// Number of evaluations that fell outside the knot range.
    pub fn extrapolation_count(&self) -> u64 {
        self.extrapolations.load(Ordering::Relaxed)
    }
}

impl EnergyBand {
    pub fn kane(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("kane_alpha", format!("must be positive, got {alpha}")));
        }
        Ok(EnergyBand::Kane { alpha })
    }

    /// Spline band through `(r_k, eps_k)`. With `allow_extrapolation` the
    /// band continues linearly past the ends and counts each such call;
    /// without it out-of-range evaluation is an error.
    pub fn tabulated(r: &[f64], eps: &[f64], allow_extrapolation: bool) -> Result<Self> {
        let spline = CubicSpline::natural(r, eps)?;
        Ok(EnergyBand::Tabulated(Arc::new(TabulatedBand {
            spline,
            allow_extrapolation,
            extrapolations: AtomicU64::new(0),
        })))
    }

    pub fn from_table(table: &BandTable, allow_extrapolation: bool) -> Result<Self> {
        Self::tabulated(&table.r_nodes, &table.eps_values, allow_extrapolation)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnergyBand::Parabolic => "parabolic",
            EnergyBand::Kane { .. } => "kane",
            EnergyBand::Tabulated(_) => "tabulated",
        }
    }

    pub fn eval(&self, r: f64) -> Result<BandValue> {
        if !(r >= 0.0) {
            return Err(Error::param("r", format!("must be non-negative, got {r}")));
        }
        Ok(match self {
            EnergyBand::Parabolic => BandValue {
                eps: r,
                deps_dr: 1.0,
            },
            EnergyBand::Kane { alpha } => {
                let root = (1.0 + 4.0 * alpha * r).sqrt();
                BandValue {
                    // 2r / (1 + root) is the cancellation-free form of
                    // (root - 1) / (2 alpha).
                    eps: 2.0 * r / (1.0 + root),
                    deps_dr: 1.0 / root,
                }
            }
            EnergyBand::Tabulated(t) => {
                let (lo, hi) = (t.spline.lo(), t.spline.hi());
                if r < lo || r > hi {
                    if !t.allow_extrapolation {
                        return Err(Error::Extrapolation { r, lo, hi });
                    }
                    t.extrapolations.fetch_add(1, Ordering::Relaxed);
                }
                let (eps, deps_dr, _) = t.spline.eval_all(r);
                BandValue { eps, deps_dr }
            }
        })
    }

    pub fn eps(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.eps)
    }

    /// Checks `d eps/dr > 0` on `[0, r_max]` at `n` sample points.
    pub fn check_monotone(&self, r_max: f64, n: usize) -> Result<()> {
        for i in 0..=n {
            let r = r_max * i as f64 / n as f64;
            let v = self.eval(r)?;
            if !(v.deps_dr > 0.0) {
                return Err(Error::NonMonotoneBand { r, slope: v.deps_dr });
            }
        }
        Ok(())
    }

    /// Stable identifier of the band for cache keys.
    pub fn fingerprint_bytes(&self) -> Vec<u8> {
        let mut out = self.name().as_bytes().to_vec();
        match self {
            EnergyBand::Parabolic => {}
            EnergyBand::Kane { alpha } => out.extend(alpha.to_le_bytes()),
            EnergyBand::Tabulated(t) => {
                for k in t.spline.knots() {
                    out.extend(k.to_le_bytes());
                    out.extend(t.spline.eval(*k).to_le_bytes());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabolic_is_identity() {
        let v = EnergyBand::Parabolic.eval(3.5).unwrap();
        assert_eq!(v.eps, 3.5);
        assert_eq!(v.deps_dr, 1.0);
    }

    #[test]
    fn kane_matches_root_of_dispersion() {
        let alpha = 0.012925;
        let band = EnergyBand::kane(alpha).unwrap();
        let eps = band.eps(1.0).unwrap();
        // Bisection on eps (1 + alpha eps) = 1.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + alpha * mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((eps - lo).abs() < 1e-14);
        assert!((eps - 0.987_398_7).abs() < 1e-7);
    }

    #[test]
    fn kane_derivative_matches_implicit_function() {
        let alpha = 0.012925;
        let band = EnergyBand::kane(alpha).unwrap();
        let v = band.eval(1.0).unwrap();
        // d/dr of eps(1 + alpha eps) = r gives eps' = 1 / (1 + 2 alpha eps).
        assert!((v.deps_dr - 1.0 / (1.0 + 2.0 * alpha * v.eps)).abs() < 1e-14);
        assert!((v.deps_dr - 1.0 / (1.0 + 4.0 * alpha).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kane_tends_to_parabolic() {
        let band = EnergyBand::kane(1e-12).unwrap();
        assert!((band.eps(2.0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn kane_below_parabolic() {
        let band = EnergyBand::kane(0.5 * 0.025852).unwrap();
        for i in 1..=400 {
            let r = 0.1 * i as f64;
            assert!(band.eps(r).unwrap() < r);
        }
    }

    #[test]
    fn negative_r_rejected() {
        assert!(EnergyBand::Parabolic.eval(-1.0).is_err());
    }

    #[test]
    fn tabulated_extrapolation_policy() {
        let r: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
        let e = r.clone();
        let strict = EnergyBand::tabulated(&r, &e, false).unwrap();
        assert!(matches!(strict.eval(0.1), Err(Error::Extrapolation { .. })));
        let loose = EnergyBand::tabulated(&r, &e, true).unwrap();
        let v = loose.eval(0.1).unwrap();
        assert!((v.eps - 0.1).abs() < 1e-12);
        if let EnergyBand::Tabulated(t) = &loose {
            assert_eq!(t.extrapolation_count(), 1);
        }
    }
}
