//! Angular averaging of a full band over k-spheres.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

/// A band surface `eps(r, mu, phi)` on `r >= 0, mu in [0, 1], phi in [0, pi]`.
pub trait FullBandSampler {
    fn eps(&self, r: f64, mu: f64, phi: f64) -> Result<f64>;
}

impl<F> FullBandSampler for F
where
    F: Fn(f64, f64, f64) -> f64,
{
    fn eps(&self, r: f64, mu: f64, phi: f64) -> Result<f64> {
        Ok(self(r, mu, phi))
    }
}

/// 10-point Gauss-Legendre nodes on `[0, 1]` (mu) and `[0, pi]` (phi), with
/// weights scaled so each set sums to one.
#[derive(Debug, Clone)]
pub struct AngularNodes {
    pub mu: [f64; 10],
    pub mu_weights: [f64; 10],
    pub phi: [f64; 10],
    pub phi_weights: [f64; 10],
}

pub fn gauss10_angular_nodes() -> &'static AngularNodes {
    static NODES: OnceLock<AngularNodes> = OnceLock::new();
    NODES.get_or_init(|| {
        let g = GaussRule::new(10);
        let mut n = AngularNodes {
            mu: [0.0; 10],
            mu_weights: [0.0; 10],
            phi: [0.0; 10],
            phi_weights: [0.0; 10],
        };
        for i in 0..10 {
            n.mu[i] = 0.5 * (g.nodes[i] + 1.0);
            n.mu_weights[i] = 0.5 * g.weights[i];
            n.phi[i] = 0.5 * std::f64::consts::PI * (g.nodes[i] + 1.0);
            n.phi_weights[i] = 0.5 * g.weights[i];
        }
        n
    })
}

fn sample_sphere(sampler: &dyn FullBandSampler, r: f64) -> Result<[[f64; 10]; 10]> {
    let nodes = gauss10_angular_nodes();
    let mut out = [[0.0; 10]; 10];
    for (m, &mu) in nodes.mu.iter().enumerate() {
        for (n, &phi) in nodes.phi.iter().enumerate() {
            out[m][n] = sampler.eps(r, mu, phi)?;
        }
    }
    Ok(out)
}

fn weighted_sum(vals: &[[f64; 10]; 10], f: impl Fn(f64) -> f64) -> f64 {
    let nodes = gauss10_angular_nodes();
    let mut acc = 0.0;
    for m in 0..10 {
        for n in 0..10 {
            acc += nodes.mu_weights[m] * nodes.phi_weights[n] * f(vals[m][n]);
        }
    }
    acc
}

/// Angular mean of the band over the sphere of radius `sqrt(r)`.
pub fn spherical_average(sampler: &dyn FullBandSampler, r: f64) -> Result<f64> {
    let vals = sample_sphere(sampler, r)?;
    Ok(weighted_sum(&vals, |e| e))
}

/// Relative l2 anisotropy `<(eps - avg)^2> / <eps^2>` on the sphere; zero
/// when the band vanishes identically there.
pub fn l2_deviation(sampler: &dyn FullBandSampler, r: f64) -> Result<f64> {
    let vals = sample_sphere(sampler, r)?;
    let mean = weighted_sum(&vals, |e| e);
    let den = weighted_sum(&vals, |e| e * e);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(weighted_sum(&vals, |e| (e - mean) * (e - mean)) / den)
}

/// Spherically averaged band values and their anisotropy at radial nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub r_nodes: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl BandTable {
    pub fn new(r_nodes: Vec<f64>, eps_values: Vec<f64>, deviation: Vec<f64>) -> Result<Self> {
        if r_nodes.len() != eps_values.len() || r_nodes.len() != deviation.len() {
            return Err(Error::param("band table", "column lengths differ"));
        }
        if r_nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("band table", "r nodes not strictly increasing"));
        }
        if eps_values.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::param("band table", "negative or NaN energy"));
        }
        if deviation.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::param("band table", "negative or NaN deviation"));
        }
        Ok(BandTable {
            r_nodes,
            eps_values,
            deviation,
        })
    }

    /// Runs the averaging pipeline at each node.
    pub fn from_sampler(sampler: &dyn FullBandSampler, r_nodes: &[f64]) -> Result<Self> {
        let mut eps = Vec::with_capacity(r_nodes.len());
        let mut dev = Vec::with_capacity(r_nodes.len());
        for &r in r_nodes {
            eps.push(spherical_average(sampler, r)?);
            dev.push(l2_deviation(sampler, r)?);
        }
        Self::new(r_nodes.to_vec(), eps, dev)
    }

    pub fn len(&self) -> usize {
        self.r_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_nodes.is_empty()
    }
}

/// Analytic band surfaces used for testing and for generating sample files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticBand {
    Parabolic,
    Kane { alpha: f64 },
    /// Kane band modulated by `1 + strength * (r / r_ref) * P(mu, phi)`,
    /// so the anisotropy grows with r.
    Anisotropic { alpha: f64, strength: f64, r_ref: f64 },
}

impl SyntheticBand {
    fn kane(alpha: f64, r: f64) -> f64 {
        2.0 * r / (1.0 + (1.0 + 4.0 * alpha * r).sqrt())
    }
}

impl FullBandSampler for SyntheticBand {
    fn eps(&self, r: f64, mu: f64, phi: f64) -> Result<f64> {
        Ok(match *self {
            SyntheticBand::Parabolic => r,
            SyntheticBand::Kane { alpha } => Self::kane(alpha, r),
            SyntheticBand::Anisotropic {
                alpha,
                strength,
                r_ref,
            } => {
                let shape = (std::f64::consts::PI * mu).cos() + 0.5 * (2.0 * phi).cos();
                Self::kane(alpha, r) * (1.0 + strength * (r / r_ref) * shape)
            }
        })
    }
}

/// Band samples stored at the 10x10 angular Gauss nodes of each radius.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSampler {
    pub r_values: Vec<f64>,
    /// `values[k][m][n]` at `(r_k, mu_m, phi_n)`.
    pub values: Vec<[[f64; 10]; 10]>,
}

impl GridSampler {
    pub fn from_sampler(sampler: &dyn FullBandSampler, r_values: &[f64]) -> Result<Self> {
        let values = r_values
            .iter()
            .map(|&r| sample_sphere(sampler, r))
            .collect::<Result<_>>()?;
        Ok(GridSampler {
            r_values: r_values.to_vec(),
            values,
        })
    }

    fn find(list: &[f64], v: f64) -> Option<usize> {
        list.iter()
            .position(|&x| (x - v).abs() <= 1e-12 * x.abs().max(1.0))
    }

    pub fn table(&self) -> Result<BandTable> {
        BandTable::from_sampler(self, &self.r_values)
    }
}

impl FullBandSampler for GridSampler {
    fn eps(&self, r: f64, mu: f64, phi: f64) -> Result<f64> {
        let nodes = gauss10_angular_nodes();
        let k = Self::find(&self.r_values, r);
        let m = Self::find(&nodes.mu, mu);
        let n = Self::find(&nodes.phi, phi);
        match (k, m, n) {
            (Some(k), Some(m), Some(n)) => Ok(self.values[k][m][n]),
            _ => Err(Error::param(
                "grid sampler",
                format!("no sample at (r={r}, mu={mu}, phi={phi})"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_averages_to_one() {
        let one = |_r: f64, _m: f64, _p: f64| 1.0;
        assert!((spherical_average(&one, 3.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn isotropic_kane_reproduced() {
        let alpha = 0.012925;
        let s = SyntheticBand::Kane { alpha };
        let avg = spherical_average(&s, 4.0).unwrap();
        let exact = 2.0 * 4.0 / (1.0 + (1.0 + 16.0 * alpha).sqrt());
        assert!(((avg - exact) / exact).abs() <= 1e-12);
        assert!(l2_deviation(&s, 4.0).unwrap() < 1e-28);
    }

    #[test]
    fn linear_in_mu_sampler() {
        let f = |r: f64, mu: f64, _p: f64| r * (1.0 + 0.1 * mu);
        assert!((spherical_average(&f, 2.0).unwrap() - 2.1).abs() < 1e-13);
    }

    #[test]
    fn small_cosine_perturbation_deviation() {
        // eps = 1 + d cos(pi mu): mean over mu in [0,1] of cos is 0, of cos^2
        // is 1/2, so the ratio is d^2/2 / (1 + d^2/2).
        let d = 1e-3;
        let f = move |_r: f64, mu: f64, _p: f64| 1.0 + d * (std::f64::consts::PI * mu).cos();
        let got = l2_deviation(&f, 1.0).unwrap();
        let expected = 0.5 * d * d / (1.0 + 0.5 * d * d);
        assert!(((got - expected) / expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn zero_band_has_zero_deviation() {
        let z = |_r: f64, _m: f64, _p: f64| 0.0;
        assert_eq!(l2_deviation(&z, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn deviation_grows_with_anisotropy() {
        let s = SyntheticBand::Anisotropic {
            alpha: 0.012925,
            strength: 0.05,
            r_ref: 36.0,
        };
        let dev: Vec<f64> = (1..10)
            .map(|i| l2_deviation(&s, 4.0 * i as f64).unwrap())
            .collect();
        assert!(dev.windows(2).all(|w| w[1] > w[0]), "{dev:?}");
    }

    #[test]
    fn grid_sampler_round_trip() {
        let s = SyntheticBand::Kane { alpha: 0.012925 };
        let r: Vec<f64> = (0..5).map(|i| 0.5 + i as f64).collect();
        let grid = GridSampler::from_sampler(&s, &r).unwrap();
        let table = grid.table().unwrap();
        for (rk, ek) in table.r_nodes.iter().zip(&table.eps_values) {
            let exact = s.eps(*rk, 0.0, 0.0).unwrap();
            assert!(((ek - exact) / exact).abs() < 1e-12);
        }
        assert!(grid.eps(0.77, 0.5, 0.5).is_err());
    }
}
