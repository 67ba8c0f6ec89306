//! Physical constants, reference scales and the dimensionless groups of the
//! scaled Boltzmann-Poisson system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values, SI.
pub mod codata {
    pub const BOLTZMANN: f64 = 1.380649e-23;
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
}

use codata::*;

/// Deformation-potential data used to build the default silicon couplings.
///
/// `K0 = kB T_L Xi^2 / (4 pi^2 hbar rho v_s^2)` (elastic acoustic) and
/// `K = (D_t K)^2 / (8 pi^2 rho omega_p)` (optical).
pub mod silicon {
    /// Acoustic deformation potential, eV.
    pub const ACOUSTIC_DEFORMATION_EV: f64 = 9.0;
    /// Optical coupling constant D_t K, eV/m.
    pub const OPTICAL_DEFORMATION_EV_PER_M: f64 = 11.4e10;
    /// Crystal mass density, kg/m^3.
    pub const MASS_DENSITY: f64 = 2330.0;
    /// Longitudinal sound velocity, m/s.
    pub const SOUND_VELOCITY: f64 = 9040.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// m*/m_e.
    pub effective_mass_ratio: f64,
    /// hbar omega_p, eV.
    pub optical_phonon_energy: f64,
    /// K0, SI (m^3 s^-1 J^-1 after the 1/(2 pi)^3 convention).
    pub acoustic_coupling: f64,
    /// K, SI.
    pub optical_coupling: f64,
    /// Kane non-parabolicity, 1/eV.
    pub kane_alpha: f64,
    pub rel_permittivity: f64,
    /// T_L, kelvin.
    pub lattice_temperature: f64,
}

impl MaterialParams {
    /// Silicon defaults with couplings derived from [`silicon`] at `t_lattice`.
    pub fn silicon_at(t_lattice: f64) -> Self {
        let pi2 = std::f64::consts::PI.powi(2);
        let hw_j = 0.063 * ELEMENTARY_CHARGE;
        let omega = hw_j / HBAR;
        let xi = silicon::ACOUSTIC_DEFORMATION_EV * ELEMENTARY_CHARGE;
        let dtk = silicon::OPTICAL_DEFORMATION_EV_PER_M * ELEMENTARY_CHARGE;
        let acoustic = BOLTZMANN * t_lattice * xi * xi
            / (4.0 * pi2 * HBAR * silicon::MASS_DENSITY * silicon::SOUND_VELOCITY.powi(2));
        let optical = dtk * dtk / (8.0 * pi2 * silicon::MASS_DENSITY * omega);
        MaterialParams {
            effective_mass_ratio: 0.32,
            optical_phonon_energy: 0.063,
            acoustic_coupling: acoustic,
            optical_coupling: optical,
            kane_alpha: 0.5,
            rel_permittivity: 11.7,
            lattice_temperature: t_lattice,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("effective_mass_ratio", self.effective_mass_ratio),
            ("optical_phonon_energy", self.optical_phonon_energy),
            ("acoustic_coupling", self.acoustic_coupling),
            ("optical_coupling", self.optical_coupling),
            ("kane_alpha", self.kane_alpha),
            ("rel_permittivity", self.rel_permittivity),
            ("lattice_temperature", self.lattice_temperature),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// k_B T_L in eV.
    pub fn thermal_energy_ev(&self) -> f64 {
        BOLTZMANN * self.lattice_temperature / ELEMENTARY_CHARGE
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::silicon_at(300.0)
    }
}

/// Reference length, time and voltage. The reference field is always
/// `0.1 * voltage / length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceScales {
    /// m
    pub length: f64,
    /// s
    pub time: f64,
    /// V
    pub voltage: f64,
}

impl ReferenceScales {
    /// V/m.
    pub fn field(&self) -> f64 {
        0.1 * self.voltage / self.length
    }

    /// ℓ*/t*, m/s.
    pub fn velocity(&self) -> f64 {
        self.length / self.time
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("time", self.time),
            ("voltage", self.voltage),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for ReferenceScales {
    fn default() -> Self {
        ReferenceScales {
            length: 1e-6,
            time: 1e-12,
            voltage: 1.0,
        }
    }
}

/// Dimensionless constants of the scaled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingGroups {
    pub c_d: f64,
    pub c_e: f64,
    pub c_p: f64,
    pub c_v: f64,
    pub alpha_p: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub c_zero: f64,
    /// sqrt(2 m* kB T_L)/hbar, 1/m.
    pub k_scale: f64,
    pub n_q: f64,
    /// Kane alpha times kB T_L.
    pub kane_alpha: f64,
    /// kB T_L, eV.
    pub thermal_energy_ev: f64,
    pub rel_permittivity: f64,
    pub scales: ReferenceScales,
}

pub fn derive_scaling(mat: &MaterialParams, scales: &ReferenceScales) -> Result<ScalingGroups> {
    mat.validate()?;
    scales.validate()?;

    let m_star = mat.effective_mass_ratio * ELECTRON_MASS;
    let kt = BOLTZMANN * mat.lattice_temperature;
    let p_thermal = (2.0 * m_star * kt).sqrt();
    let k_scale = p_thermal / HBAR;

    let c_d = scales.time / scales.length * (kt / (2.0 * m_star)).sqrt();
    let c_e = scales.time * ELEMENTARY_CHARGE * scales.field() / p_thermal;
    let c_v = scales.voltage / (scales.length * scales.field());
    let c_p = k_scale.powi(3) * scales.length.powi(2) * ELEMENTARY_CHARGE
        / (VACUUM_PERMITTIVITY * scales.voltage);

    let alpha_p = mat.optical_phonon_energy * ELEMENTARY_CHARGE / kt;
    let n_q = 1.0 / alpha_p.exp_m1();
    let rate = 2.0 * m_star * scales.time / HBAR.powi(3) * p_thermal;

    Ok(ScalingGroups {
        c_d,
        c_e,
        c_p,
        c_v,
        alpha_p,
        c_plus: rate * (n_q + 1.0) * mat.optical_coupling,
        c_minus: rate * n_q * mat.optical_coupling,
        c_zero: rate * mat.acoustic_coupling,
        k_scale,
        n_q,
        kane_alpha: mat.kane_alpha * mat.thermal_energy_ev(),
        thermal_energy_ev: mat.thermal_energy_ev(),
        rel_permittivity: mat.rel_permittivity,
        scales: *scales,
    })
}

impl ScalingGroups {
    /// Physical density (m^-3) to dimensionless.
    pub fn density_to_dimless(&self, n: f64) -> f64 {
        n / self.k_scale.powi(3)
    }

    pub fn density_to_si(&self, rho: f64) -> f64 {
        rho * self.k_scale.powi(3)
    }

    /// Seconds to dimensionless time; picoseconds are `1e-12 s`.
    pub fn time_from_ps(&self, ps: f64) -> f64 {
        ps * 1e-12 / self.scales.time
    }

    pub fn time_to_ps(&self, t: f64) -> f64 {
        t * self.scales.time * 1e12
    }

    pub fn voltage_to_dimless(&self, v: f64) -> f64 {
        v / self.scales.voltage
    }

    /// Micrometres to dimensionless length.
    pub fn length_from_um(&self, um: f64) -> f64 {
        um * 1e-6 / self.scales.length
    }

    pub fn length_to_um(&self, x: f64) -> f64 {
        x * self.scales.length * 1e6
    }

    /// Lines of `name = value` for `--print-scaling`.
    pub fn describe(&self) -> String {
        let rows = [
            ("c_d", self.c_d),
            ("c_e", self.c_e),
            ("c_p", self.c_p),
            ("c_v", self.c_v),
            ("alpha_p", self.alpha_p),
            ("n_q", self.n_q),
            ("c_plus", self.c_plus),
            ("c_minus", self.c_minus),
            ("c_zero", self.c_zero),
            ("k_scale_per_m", self.k_scale),
            ("kane_alpha", self.kane_alpha),
            ("thermal_energy_ev", self.thermal_energy_ev),
            ("rel_permittivity", self.rel_permittivity),
            ("length_m", self.scales.length),
            ("time_s", self.scales.time),
            ("voltage_v", self.scales.voltage),
            ("field_v_per_m", self.scales.field()),
        ];
        rows.iter()
            .map(|(k, v)| format!("{k} = {v:.10e}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ScalingGroups {
        derive_scaling(&MaterialParams::default(), &ReferenceScales::default()).unwrap()
    }

    fn sig4(a: f64, b: f64) -> bool {
        ((a - b) / b).abs() < 5e-4
    }

    #[test]
    fn c_v_is_ten_for_unit_scales() {
        assert_eq!(defaults().c_v, 10.0);
    }

    #[test]
    fn alpha_p_for_63_mev_at_300k() {
        // 0.063 / (1.380649e-23 * 300 / 1.602176634e-19) evaluated by hand.
        let expected = 0.063 / 0.025_851_999_786_435_5;
        assert!((defaults().alpha_p - expected).abs() < 1e-12);
        assert!((defaults().alpha_p - 2.437).abs() < 1e-3);
    }

    #[test]
    fn silicon_groups_match_independent_evaluation() {
        // Frozen from a standalone CODATA evaluation of the scaled-constant
        // definitions (m*/m_e = 0.32, T_L = 300 K, unit scales).
        let g = defaults();
        assert!(sig4(g.c_d, 8.428_839e-2), "c_d = {}", g.c_d);
        assert!(sig4(g.c_e, 3.260_421e-1), "c_e = {}", g.c_e);
        assert!(sig4(g.c_p, 1.830_811e6), "c_p = {}", g.c_p);
    }

    #[test]
    fn phonon_occupation_balance() {
        let g = defaults();
        let lhs = g.c_plus * g.n_q;
        let rhs = g.c_minus * (g.n_q + 1.0);
        assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * lhs);
        assert!((g.c_plus / g.c_minus - (g.n_q + 1.0) / g.n_q).abs() < 1e-12);
    }

    #[test]
    fn doubling_time_scale_doubles_rates() {
        let mat = MaterialParams::default();
        let a = derive_scaling(&mat, &ReferenceScales::default()).unwrap();
        let mut s = ReferenceScales::default();
        s.time *= 2.0;
        let b = derive_scaling(&mat, &s).unwrap();
        assert!((b.c_d / a.c_d - 2.0).abs() < 1e-14);
        assert!((b.c_e / a.c_e - 2.0).abs() < 1e-14);
        assert_eq!(a.alpha_p, b.alpha_p);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        let mat = MaterialParams {
            rel_permittivity: 0.0,
            ..Default::default()
        };
        assert!(derive_scaling(&mat, &ReferenceScales::default()).is_err());
        let s = ReferenceScales {
            length: -1.0,
            ..Default::default()
        };
        assert!(derive_scaling(&MaterialParams::default(), &s).is_err());
    }

    #[test]
    fn kane_alpha_dimensionless() {
        let g = defaults();
        assert!((g.kane_alpha - 0.5 * 0.025_852).abs() < 1e-6);
    }

    #[test]
    fn reference_field_rule() {
        let s = ReferenceScales {
            length: 2e-6,
            time: 1e-12,
            voltage: 3.0,
        };
        assert_eq!(s.field(), 0.1 * 3.0 / 2e-6);
    }
}
