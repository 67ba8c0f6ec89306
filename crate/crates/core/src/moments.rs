//! Kinetic moments per x-cell and pdf slices, in SI units.

use std::f64::consts::PI;

use crate::bands::EnergyBand;
use crate::basis::{radial_nodes, rules, DGState, M, R, T};
use crate::error::{Error, Result};
use crate::mesh::PhaseSpaceMesh;
use crate::poisson::FieldState;
use crate::scaling::ScalingGroups;

/// Elementary charge, C.
const Q_E: f64 = 1.602_176_634e-19;

/// Cell-averaged observables per x-cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentSet {
    /// Cell centres, um.
    pub x: Vec<f64>,
    /// m^-3.
    pub rho: Vec<f64>,
    /// Mean x-velocity, m/s.
    pub velocity: Vec<f64>,
    /// Mean energy, eV.
    pub energy_ev: Vec<f64>,
    /// `q n v`, A/m^2; positive along the electron flow.
    pub current: Vec<f64>,
    /// V/m.
    pub e_field: Vec<f64>,
    /// V.
    pub potential: Vec<f64>,
    /// Cells whose density is not positive; their ratios are reported as 0.
    pub degenerate: Vec<usize>,
}

pub const MOMENT_COLUMNS: [&str; 7] = [
    "x",
    "rho",
    "velocity",
    "energy_eV",
    "current",
    "E_field",
    "potential",
];

/// Dimensionless `(rho, int a1 phi, int eps phi)` over one `(r, mu)` slab,
/// using the assembly quadrature.
pub fn slab_integrals<F>(mesh: &PhaseSpaceMesh, band: &EnergyBand, c_d: f64, phi: F) -> Result<[f64; 3]>
where
    F: Fn(usize, usize, f64, f64) -> f64,
{
    let mut acc = [0.0; 3];
    let re = mesh.r_edges();
    let me = mesh.mu_edges();
    for k in 0..mesh.nr() {
        for (r, wr) in radial_nodes(re[k], re[k + 1]) {
            let b = band.eval(r)?;
            for m in 0..mesh.nmu() {
                for (mu, wm) in rules().mu.on(me[m], me[m + 1]) {
                    let v = wr * wm * phi(k, m, r, mu);
                    acc[0] += v;
                    acc[1] += v * 2.0 * c_d * r.sqrt() * mu * b.deps_dr;
                    acc[2] += v * b.eps;
                }
            }
        }
    }
    Ok(acc)
}

/// x-cell averaged moments of `state`.
pub fn moments(
    mesh: &PhaseSpaceMesh,
    state: &DGState,
    field: &FieldState,
    band: &EnergyBand,
    s: &ScalingGroups,
) -> Result<MomentSet> {
    if state.mesh_fingerprint() != mesh.fingerprint() {
        return Err(Error::MeshMismatch {
            expected: mesh.fingerprint(),
            found: state.mesh_fingerprint(),
        });
    }
    let nx = mesh.nx();
    let mut out = MomentSet::default();
    let vel_scale = s.scales.length / s.scales.time;
    for i in 0..nx {
        // The x-slope integrates to zero over the cell.
        let [rho, mom, en] = slab_integrals(mesh, band, s.c_d, |k, m, r, mu| {
            let c = state.cell(i, k, m);
            c[T] + c[R] * 2.0 * (r - mesh.r_center(k)) / mesh.dr(k)
                + c[M] * 2.0 * (mu - mesh.mu_center(m)) / mesh.dmu(m)
        })?;
        let (v, e) = if rho > 0.0 {
            (mom / rho, en / rho)
        } else {
            out.degenerate.push(i);
            (0.0, 0.0)
        };
        let n_si = s.density_to_si(rho);
        out.x.push(s.length_to_um(mesh.x_center(i)));
        out.rho.push(n_si);
        out.velocity.push(v * vel_scale);
        out.energy_ev.push(e * s.thermal_energy_ev);
        out.current.push(Q_E * s.density_to_si(mom) * vel_scale);
        out.e_field.push(field.e[i][0] * s.scales.field());
        out.potential.push(field.psi(i, 0.0) * s.scales.voltage);
    }
    if !out.degenerate.is_empty() {
        log::warn!("{} cells with non-positive density", out.degenerate.len());
    }
    Ok(out)
}

impl MomentSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn columns(&self) -> [&[f64]; 7] {
        [
            &self.x,
            &self.rho,
            &self.velocity,
            &self.energy_ev,
            &self.current,
            &self.e_field,
            &self.potential,
        ]
    }

    /// CSV with 17 significant digits, so values reparse bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut s = MOMENT_COLUMNS.join(",");
        s.push('\n');
        let cols = self.columns();
        for i in 0..self.len() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:.16e}", c[i])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            path: "<moments>".into(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == MOMENT_COLUMNS.join(",") => {}
            _ => return Err(bad(1, "unexpected header".into())),
        }
        let mut cols: [Vec<f64>; 7] = Default::default();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != 7 {
                return Err(bad(n + 1, format!("{} fields", vals.len())));
            }
            for (c, v) in cols.iter_mut().zip(vals) {
                c.push(v.trim().parse().map_err(|e| bad(n + 1, format!("{e}")))?);
            }
        }
        let [x, rho, velocity, energy_ev, current, e_field, potential] = cols;
        Ok(MomentSet {
            x,
            rho,
            velocity,
            energy_ev,
            current,
            e_field,
            potential,
            degenerate: Vec::new(),
        })
    }

    /// Largest relative deviation of the current from its x-mean over the
    /// cells in `[lo_um, hi_um]`.
    pub fn current_spread(&self, lo_um: f64, hi_um: f64) -> f64 {
        let sel: Vec<f64> = self
            .x
            .iter()
            .zip(&self.current)
            .filter(|(x, _)| **x >= lo_um && **x <= hi_um)
            .map(|(_, c)| *c)
            .collect();
        if sel.is_empty() {
            return 0.0;
        }
        let mean = sel.iter().sum::<f64>() / sel.len() as f64;
        sel.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max) / mean.abs()
    }
}

/// `f(r, mu) = 2 phi / sqrt(r)` at the `(r, mu)` cell centres of one x-probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfSlice {
    /// um.
    pub x: f64,
    pub r: Vec<f64>,
    pub mu: Vec<f64>,
    /// `values[k * nmu + m]`.
    pub values: Vec<f64>,
    pub negative: usize,
}

pub fn pdf_slice(mesh: &PhaseSpaceMesh, state: &DGState, s: &ScalingGroups, x_um: f64) -> Result<PdfSlice> {
    let x = s.length_from_um(x_um);
    let i = mesh
        .x_cell_of(x)
        .ok_or_else(|| Error::Config(format!("pdf probe {x_um} um lies outside the device")))?;
    let r: Vec<f64> = (0..mesh.nr()).map(|k| mesh.r_center(k)).collect();
    let mu: Vec<f64> = (0..mesh.nmu()).map(|m| mesh.mu_center(m)).collect();
    let mut values = Vec::with_capacity(r.len() * mu.len());
    for (k, &rk) in r.iter().enumerate() {
        for (m, &mm) in mu.iter().enumerate() {
            values.push(2.0 * state.eval(mesh, (i, k, m), (x, rk, mm)) / rk.sqrt());
        }
    }
    let negative = values.iter().filter(|v| **v < 0.0).count();
    if negative > 0 {
        log::debug!("pdf at x = {x_um} um has {negative} negative samples");
    }
    Ok(PdfSlice {
        x: x_um,
        r,
        mu,
        values,
        negative,
    })
}

impl PdfSlice {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,mu,f\n");
        let nmu = self.mu.len();
        for (k, r) in self.r.iter().enumerate() {
            for (m, mu) in self.mu.iter().enumerate() {
                s.push_str(&format!("{r:.16e},{mu:.16e},{:.16e}\n", self.values[k * nmu + m]));
            }
        }
        s
    }
}

/// `int (sqrt(r)/2) e^-r dr` over `[0, inf)`.
pub fn maxwell_norm() -> f64 {
    PI.sqrt() / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{project_to_dg, X};
    use crate::mesh::{build_mesh, MeshPreset, MeshSpec};
    use crate::scaling::{derive_scaling, MaterialParams, ReferenceScales};

    fn scaling() -> ScalingGroups {
        derive_scaling(&MaterialParams::default(), &ReferenceScales::default()).unwrap()
    }

    #[test]
    fn manufactured_slab_integrals() {
        let s = scaling();
        let mesh = build_mesh(&MeshSpec::preset(MeshPreset::Diode400), 1.0).unwrap();
        let phi = |_k: usize, _m: usize, r: f64, mu: f64| 0.5 * r.sqrt() * (-r).exp() * 0.5 * (1.0 + mu);
        let [rho, mom, en] = slab_integrals(&mesh, &EnergyBand::Parabolic, s.c_d, phi).unwrap();
        assert!((rho / maxwell_norm() - 1.0).abs() < 1e-6);
        let v = 4.0 * s.c_d / (3.0 * PI.sqrt());
        assert!((mom / rho / v - 1.0).abs() < 1e-6);
        assert!((en / rho - 1.5).abs() < 1e-6);
    }

    fn toy() -> PhaseSpaceMesh {
        PhaseSpaceMesh::uniform(4, 8, 4, 1.0, 16.0).unwrap()
    }

    #[test]
    fn symmetric_state_carries_no_current() {
        let s = scaling();
        let mesh = toy();
        let w = project_to_dg(&mesh, |_, r, _| r.sqrt() * (-r).exp());
        let f = FieldState::zero(&mesh);
        let m = moments(&mesh, &w, &f, &EnergyBand::Parabolic, &s).unwrap();
        for i in 0..mesh.nx() {
            assert!(m.velocity[i].abs() < 1e-12 * 1e5);
            assert!(m.current[i].abs() <= 1e-14 * m.rho[i]);
            assert!(m.energy_ev[i] > 0.0);
        }
        let fwd = project_to_dg(&mesh, |_, r, mu| if mu > 0.0 { r.sqrt() * (-r).exp() } else { 0.0 });
        let m = moments(&mesh, &fwd, &f, &EnergyBand::Parabolic, &s).unwrap();
        assert!(m.velocity.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn moments_are_linear() {
        let s = scaling();
        let mesh = toy();
        let a = project_to_dg(&mesh, |x, r, mu| (1.0 + x) * (-r).exp() * (1.2 + mu));
        let b = project_to_dg(&mesh, |x, r, _| (2.0 - x) * r * (-r).exp());
        let f = FieldState::zero(&mesh);
        let band = EnergyBand::Parabolic;
        let ma = moments(&mesh, &a, &f, &band, &s).unwrap();
        let mb = moments(&mesh, &b, &f, &band, &s).unwrap();
        let mut c = a.clone();
        c.axpy(2.0, &b);
        let mc = moments(&mesh, &c, &f, &band, &s).unwrap();
        for i in 0..mesh.nx() {
            let want = ma.current[i] + 2.0 * mb.current[i];
            assert!((mc.current[i] - want).abs() <= 1e-12 * mc.rho[i]);
            assert!((mc.rho[i] - ma.rho[i] - 2.0 * mb.rho[i]).abs() <= 1e-12 * mc.rho[i]);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = scaling();
        let mesh = toy();
        let mut w = project_to_dg(&mesh, |x, r, mu| (1.0 + x * x) * (-r).exp() * (1.1 + mu));
        w.set(0, 0, 0, X, 1e-3);
        let m = moments(&mesh, &w, &FieldState::zero(&mesh), &EnergyBand::Parabolic, &s).unwrap();
        let back = MomentSet::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn zero_density_is_flagged() {
        let s = scaling();
        let mesh = toy();
        let w = DGState::zeros(&mesh);
        let m = moments(&mesh, &w, &FieldState::zero(&mesh), &EnergyBand::Parabolic, &s).unwrap();
        assert_eq!(m.degenerate.len(), mesh.nx());
        assert!(m.velocity.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pdf_slice_shape() {
        let s = scaling();
        let mesh = toy();
        let w = project_to_dg(&mesh, |_, r, _| 0.5 * r.sqrt() * (-r).exp());
        let p = pdf_slice(&mesh, &w, &s, 0.5).unwrap();
        assert_eq!(p.values.len(), 32);
        assert_eq!(p.to_csv().lines().count(), 33);
        assert!(pdf_slice(&mesh, &w, &s, 2.0).is_err());
    }
}
