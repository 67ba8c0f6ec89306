//! Time evolution: equilibrium start, SSP Runge-Kutta stepping with a
//! Poisson solve per stage, CFL control and steady-state monitoring.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::bands::{load_band_file, BandFile, EnergyBand};
use crate::basis::{density, radial_nodes, total_mass, DGState, NCOEF, R, T, X};
use crate::collisions::{project_band, CollisionOperator, ScatteringKernel};
use crate::config::{BandConfig, RkOrder, RunConfig};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, PhaseSpaceMesh};
use crate::par;
use crate::poisson::{DopingProfile, FieldState, PoissonSolver};
use crate::scaling::{derive_scaling, ScalingGroups};
use crate::transport::{AdvectionCoefficients, GhostPolicy, TransportOperator};

/// Per-state diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// `int rho dx`.
    pub mass: f64,
    /// `dt` times the largest inverse cell time of the last step.
    pub cfl: f64,
    /// `|W_new - W_old| / (dt |W_old|)` of the last step.
    pub residual: f64,
    pub dt: f64,
    pub wall_seconds: f64,
    pub poisson_solves: u64,
}

/// Solution snapshot. `field` is always consistent with `state`.
#[derive(Debug, Clone)]
pub struct RunState {
    pub time: f64,
    pub step: u64,
    pub state: DGState,
    pub field: FieldState,
    pub diagnostics: Diagnostics,
}

/// How the field is obtained for each stage.
#[derive(Debug, Clone)]
pub enum FieldMode {
    SelfConsistent,
    Frozen(FieldState),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: u64,
    pub final_time: f64,
    pub final_residual: f64,
    /// First time the residual fell below the steady tolerance.
    pub steady_at: Option<f64>,
    pub poisson_solves: u64,
    pub wall_seconds: f64,
    /// `(time, residual)` after every step.
    pub residual_history: Vec<(f64, f64)>,
}

pub struct Solver {
    pub scaling: ScalingGroups,
    pub mesh: PhaseSpaceMesh,
    pub band: EnergyBand,
    pub transport: TransportOperator,
    pub collisions: Option<CollisionOperator>,
    pub poisson: PoissonSolver,
    pub field_mode: FieldMode,
    /// Dimensionless potential at the right contact.
    pub bias: f64,
    pub cfl: f64,
    pub rk: RkOrder,
    pub steady_tol: f64,
    /// Upper bound on `dt`, also used when no cell limits it.
    pub dt_cap: f64,
    loss_rates: Option<Vec<f64>>,
}

/// Builds the band selected in the config.
pub fn band_from_config(cfg: &BandConfig, scaling: &ScalingGroups) -> Result<EnergyBand> {
    match cfg {
        BandConfig::Parabolic => Ok(EnergyBand::Parabolic),
        BandConfig::Kane => EnergyBand::kane(scaling.kane_alpha),
        BandConfig::Table {
            path,
            allow_extrapolation,
        } => match load_band_file(path)? {
            BandFile::Radial(t) => EnergyBand::from_table(&t, *allow_extrapolation),
            BandFile::Angular(g) => EnergyBand::from_table(&g.table()?, *allow_extrapolation),
        },
    }
}

impl Solver {
    /// Assembles every operator for `cfg`. `cache_dir` holds the collision
    /// operator cache when given.
    pub fn from_config(cfg: &RunConfig, cache_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let scaling = derive_scaling(&cfg.material, &cfg.scales)?;
        let (len_um, junctions_um, doping_m3) = cfg.device.geometry()?;
        let length = scaling.length_from_um(len_um);
        let mesh = build_mesh(&cfg.mesh_spec(), length)?;
        let band = band_from_config(&cfg.band, &scaling)?;
        let doping = DopingProfile::new(
            junctions_um.iter().map(|&x| scaling.length_from_um(x)).collect(),
            doping_m3.iter().map(|&n| scaling.density_to_dimless(n)).collect(),
        )?;
        let collisions = if cfg.device.collisions {
            let pl = project_band(&band, &mesh)?;
            let kernel = ScatteringKernel::from_scaling(&scaling);
            let path = cache_dir.map(|d| d.join("collision_operator.bin"));
            if let Some(d) = cache_dir {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            Some(CollisionOperator::build_cached(&kernel, &pl, &mesh, path.as_deref())?)
        } else {
            None
        };
        let mut s = Self::from_parts(
            scaling,
            mesh,
            band,
            doping,
            collisions,
            GhostPolicy::Vacuum,
            cfg.time.upwind.into(),
        )?;
        s.set_bias_volts(cfg.device.bias_v);
        s.cfl = cfg.time.cfl;
        s.rk = cfg.time.rk_order;
        s.steady_tol = cfg.time.steady_tol;
        s.dt_cap = scaling.time_from_ps(cfg.output.snapshot_every_ps);
        Ok(s)
    }

    /// Assembles a solver from prebuilt pieces. Contacts default to charge
    /// neutral at the doping end values unless `ghosts` is `Periodic`.
    pub fn from_parts(
        scaling: ScalingGroups,
        mesh: PhaseSpaceMesh,
        band: EnergyBand,
        doping: DopingProfile,
        collisions: Option<CollisionOperator>,
        ghosts: GhostPolicy,
        upwind: crate::transport::UpwindMode,
    ) -> Result<Self> {
        if mesh.n_cells() == 0 {
            return Err(Error::Mesh("empty mesh".into()));
        }
        band.check_monotone(mesh.r_max(), 4 * mesh.nr() + 1)?;
        let ghosts = match ghosts {
            GhostPolicy::Periodic => GhostPolicy::Periodic,
            GhostPolicy::Vacuum => GhostPolicy::ChargeNeutral {
                left: doping.left(),
                right: doping.right(),
            },
            g => g,
        };
        if let Some(c) = &collisions {
            if c.mesh_fingerprint() != mesh.fingerprint() {
                return Err(Error::MeshMismatch {
                    expected: mesh.fingerprint(),
                    found: c.mesh_fingerprint(),
                });
            }
        }
        let coeffs = AdvectionCoefficients::new(scaling.c_d, scaling.c_e, band.clone());
        let transport = TransportOperator::new(&mesh, &coeffs, ghosts, upwind)?;
        let poisson = PoissonSolver::new(
            &mesh,
            doping,
            scaling.c_p,
            scaling.rel_permittivity,
            scaling.c_v,
        )?;
        let loss_rates = collisions
            .as_ref()
            .map(|c| (0..mesh.nr()).map(|k| c.loss_rate(k)).collect());
        Ok(Solver {
            scaling,
            mesh,
            band,
            transport,
            collisions,
            poisson,
            field_mode: FieldMode::SelfConsistent,
            bias: 0.0,
            cfl: 0.3,
            rk: RkOrder::Ssp2,
            steady_tol: 1e-6,
            dt_cap: 1.0,
            loss_rates,
        })
    }

    pub fn set_bias_volts(&mut self, v: f64) {
        self.bias = self.scaling.voltage_to_dimless(v);
    }

    /// Field for `state` under the current field mode.
    pub fn field_for(&self, state: &DGState) -> FieldState {
        match &self.field_mode {
            FieldMode::SelfConsistent => self.poisson.solve(&density(&self.mesh, state), self.bias),
            FieldMode::Frozen(f) => f.clone(),
        }
    }

    fn counts_solves(&self) -> u64 {
        matches!(self.field_mode, FieldMode::SelfConsistent) as u64
    }

    /// Projected `C N_D(x) (sqrt(r)/2) exp(-eps(r))` with `C` fixed by the
    /// discrete density, so that `rho_h` equals the projected doping.
    pub fn equilibrium_state(&self) -> Result<DGState> {
        let (nr, nmu) = (self.mesh.nr(), self.mesh.nmu());
        let re = self.mesh.r_edges();
        // Radial mean and slope coefficient of the Maxwellian per r-cell.
        let mut b = vec![[0.0f64; 2]; nr];
        for (k, bk) in b.iter_mut().enumerate() {
            let (rc, dr) = (self.mesh.r_center(k), self.mesh.dr(k));
            for (r, w) in radial_nodes(re[k], re[k + 1]) {
                let v = 0.5 * r.sqrt() * (-self.band.eps(r)?).exp() * w / dr;
                bk[0] += v;
                bk[1] += 3.0 * v * 2.0 * (r - rc) / dr;
            }
        }
        let mut z = 0.0;
        for (k, bk) in b.iter().enumerate() {
            for m in 0..nmu {
                z += self.mesh.dr(k) * self.mesh.dmu(m) * bk[0];
            }
        }
        if !(z > 0.0) {
            return Err(Error::Mesh("Maxwellian has no mass on this r-mesh".into()));
        }
        let doping = self.poisson.doping_cells().to_vec();
        let mut w = DGState::zeros(&self.mesh);
        let chunk = w.x_chunk_len();
        par::for_each_chunk_mut(w.as_mut_slice(), chunk, |i, out| {
            let (d0, d1) = doping[i];
            for k in 0..nr {
                for m in 0..nmu {
                    let o = (k * nmu + m) * NCOEF;
                    out[o + T] = d0 * b[k][0] / z;
                    out[o + R] = d0 * b[k][1] / z;
                    out[o + X] = d1 * b[k][0] / z;
                }
            }
        });
        Ok(w)
    }

    /// Initial run state at `t = 0`.
    pub fn initialize(&self) -> Result<RunState> {
        let state = self.equilibrium_state()?;
        Ok(self.wrap(state, 0.0))
    }

    /// Wraps an arbitrary state with its field at time `t`.
    pub fn wrap(&self, state: DGState, time: f64) -> RunState {
        let field = self.field_for(&state);
        let mass = total_mass(&self.mesh, &state);
        RunState {
            time,
            step: 0,
            state,
            field,
            diagnostics: Diagnostics {
                mass,
                poisson_solves: self.counts_solves(),
                ..Default::default()
            },
        }
    }

    /// Largest inverse cell time under `field`, collision loss included.
    pub fn max_inverse_time(&self, field: &FieldState) -> f64 {
        self.transport
            .max_inverse_time(&field.e, self.loss_rates.as_deref())
    }

    /// `cfl / max_inverse_time`, capped at `dt_cap`.
    pub fn compute_dt(&self, field: &FieldState) -> f64 {
        let inv = self.max_inverse_time(field);
        if inv > 0.0 {
            (self.cfl / inv).min(self.dt_cap)
        } else {
            self.dt_cap
        }
    }

    /// `dW/dt` at `w` with the given field, written into `out`.
    pub fn rhs(&self, w: &DGState, field: &FieldState, out: &mut DGState) -> Result<()> {
        let ghost = self.transport.prepare(w, &field.e)?;
        let coll = self.collisions.as_ref();
        let chunk = w.x_chunk_len();
        par::for_each_chunk_mut(out.as_mut_slice(), chunk, |i, o| {
            o.fill(0.0);
            self.transport.add_rate_slice(i, w, &field.e, ghost, o);
            if let Some(c) = coll {
                c.add_rate_x_slice(w.x_slice(i), o);
            }
        });
        Ok(())
    }

    /// `w + dt L(w)` with `L` evaluated under `field`.
    fn euler(&self, w: &DGState, field: &FieldState, dt: f64, scratch: &mut DGState) -> Result<DGState> {
        self.rhs(w, field, scratch)?;
        let mut next = w.clone();
        next.axpy(dt, scratch);
        Ok(next)
    }

    fn finite(&self, w: &DGState, time: f64) -> Result<()> {
        match w.first_non_finite() {
            Some((i, k, m, p)) => Err(Error::NonFinite { i, k, m, p, time }),
            None => Ok(()),
        }
    }

    /// One SSP Runge-Kutta step of at most `dt_max`. The field of the
    /// incoming state serves the first stage; every later stage and the
    /// result get a fresh solve, so solves per step equal the stage count.
    pub fn step(&self, rs: &RunState, dt_max: f64) -> Result<RunState> {
        let t0 = Instant::now();
        let w0 = &rs.state;
        let dt = self.compute_dt(&rs.field).min(dt_max);
        let mut scratch = DGState::zeros(&self.mesh);
        let time = rs.time + dt;
        let w1 = self.euler(w0, &rs.field, dt, &mut scratch)?;
        self.finite(&w1, time)?;
        let f1 = self.field_for(&w1);
        let w_new = match self.rk {
            RkOrder::Ssp2 => {
                let e = self.euler(&w1, &f1, dt, &mut scratch)?;
                DGState::lincomb(0.5, w0, 0.5, &e)
            }
            RkOrder::Ssp3 => {
                let e = self.euler(&w1, &f1, dt, &mut scratch)?;
                let w2 = DGState::lincomb(0.75, w0, 0.25, &e);
                self.finite(&w2, time)?;
                let f2 = self.field_for(&w2);
                let e = self.euler(&w2, &f2, dt, &mut scratch)?;
                DGState::lincomb(1.0 / 3.0, w0, 2.0 / 3.0, &e)
            }
        };
        self.finite(&w_new, time)?;
        let field = self.field_for(&w_new);
        let mut diff = w_new.clone();
        diff.axpy(-1.0, w0);
        let norm0 = w0.norm();
        let residual = if norm0 > 0.0 && dt > 0.0 {
            diff.norm() / (dt * norm0)
        } else {
            0.0
        };
        let d = Diagnostics {
            mass: total_mass(&self.mesh, &w_new),
            cfl: dt * self.max_inverse_time(&rs.field),
            residual,
            dt,
            wall_seconds: rs.diagnostics.wall_seconds + t0.elapsed().as_secs_f64(),
            poisson_solves: rs.diagnostics.poisson_solves + self.rk.stages() * self.counts_solves(),
        };
        Ok(RunState {
            time,
            step: rs.step + 1,
            state: w_new,
            field,
            diagnostics: d,
        })
    }

    /// Advances `init` to `t_max`, calling `observer` at `t = 0`, at every
    /// multiple of `cadence` and at `t_max`. Steps shrink to land exactly on
    /// snapshot times. Returns the final state and a summary.
    pub fn run<F>(&self, init: RunState, t_max: f64, cadence: f64, mut observer: F) -> Result<(RunState, RunSummary)>
    where
        F: FnMut(&RunState) -> Result<()>,
    {
        if !(cadence > 0.0) {
            return Err(Error::Config("snapshot cadence must be positive".into()));
        }
        let start = Instant::now();
        let mut rs = init;
        observer(&rs)?;
        let mut summary = RunSummary {
            steps: 0,
            final_time: rs.time,
            final_residual: f64::NAN,
            steady_at: None,
            poisson_solves: 0,
            wall_seconds: 0.0,
            residual_history: Vec::new(),
        };
        let eps = 1e-12 * t_max.max(1.0);
        let mut next_snap = (rs.time + cadence).min(t_max);
        let mut last_log = Instant::now();
        while rs.time < t_max - eps {
            rs = self.step(&rs, next_snap - rs.time)?;
            let r = rs.diagnostics.residual;
            summary.residual_history.push((rs.time, r));
            if summary.steady_at.is_none() && r < self.steady_tol {
                summary.steady_at = Some(rs.time);
                log::info!("steady tolerance reached at t = {:.4}", rs.time);
            }
            if rs.time >= next_snap - eps {
                rs.time = next_snap;
                observer(&rs)?;
                next_snap = (next_snap + cadence).min(t_max);
            }
            if last_log.elapsed().as_secs_f64() > 10.0 {
                log::info!(
                    "t = {:.4} step {} dt = {:.3e} residual = {:.3e}",
                    rs.time,
                    rs.step,
                    rs.diagnostics.dt,
                    r
                );
                last_log = Instant::now();
            }
        }
        summary.steps = rs.step;
        summary.final_time = rs.time;
        summary.final_residual = rs.diagnostics.residual;
        summary.poisson_solves = rs.diagnostics.poisson_solves;
        summary.wall_seconds = start.elapsed().as_secs_f64();
        Ok((rs, summary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::PhaseSpaceMesh;
    use crate::scaling::{MaterialParams, ReferenceScales};
    use crate::transport::UpwindMode;

    fn scaling() -> ScalingGroups {
        derive_scaling(&MaterialParams::default(), &ReferenceScales::default()).unwrap()
    }

    fn small(collisions: bool) -> Solver {
        let s = scaling();
        let mesh = PhaseSpaceMesh::from_edges(
            (0..=10).map(|i| i as f64 * 0.1).collect(),
            (0..=6).map(|k| k as f64 * 3.0).collect(),
            vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        )
        .unwrap();
        let band = EnergyBand::Parabolic;
        let n_hi = s.density_to_dimless(5e23);
        let n_lo = s.density_to_dimless(2e21);
        let doping = DopingProfile::new(vec![0.35, 0.65], vec![n_hi, n_lo, n_hi]).unwrap();
        let coll = collisions.then(|| {
            let pl = project_band(&band, &mesh).unwrap();
            CollisionOperator::build(&ScatteringKernel::from_scaling(&s), &pl, &mesh).unwrap()
        });
        Solver::from_parts(s, mesh, band, doping, coll, GhostPolicy::Vacuum, UpwindMode::Pointwise).unwrap()
    }

    #[test]
    fn initial_density_matches_doping() {
        let s = small(true);
        let rs = s.initialize().unwrap();
        let rho = density(&s.mesh, &rs.state);
        for (r, d) in rho.iter().zip(s.poisson.doping_cells()) {
            assert!((r[0] / d.0 - 1.0).abs() < 1e-12);
            assert!((r[1] - d.1).abs() <= 1e-12 * d.0);
        }
        // zero bias, neutral start: no field
        assert!(rs.field.e.iter().all(|e| e[0].abs() < 1e-9 && e[1].abs() < 1e-9));
    }

    #[test]
    fn dt_shrinks_with_collisions_and_scales_with_mesh() {
        let a = small(false);
        let b = small(true);
        let f = FieldState::zero(&a.mesh);
        assert!(b.compute_dt(&f) < a.compute_dt(&f));
    }

    #[test]
    fn poisson_solves_equal_stage_count() {
        let mut s = small(true);
        s.set_bias_volts(0.5);
        for rk in [RkOrder::Ssp2, RkOrder::Ssp3] {
            s.rk = rk;
            let rs = s.initialize().unwrap();
            let n0 = rs.diagnostics.poisson_solves;
            let rs1 = s.step(&rs, 1.0).unwrap();
            assert_eq!(rs1.diagnostics.poisson_solves - n0, rk.stages());
            assert!(rs1.time > 0.0);
            assert!(rs1.diagnostics.cfl <= s.cfl * (1.0 + 1e-12));
        }
    }

    #[test]
    fn t_max_zero_gives_initial_snapshot_only() {
        let s = small(false);
        let mut seen = Vec::new();
        let (fin, sum) = s
            .run(s.initialize().unwrap(), 0.0, 1.0, |r| {
                seen.push(r.time);
                Ok(())
            })
            .unwrap();
        assert_eq!(seen, vec![0.0]);
        assert_eq!(sum.steps, 0);
        assert_eq!(fin.time, 0.0);
    }

    #[test]
    fn snapshots_land_on_cadence() {
        let mut s = small(true);
        s.set_bias_volts(0.2);
        let mut seen = Vec::new();
        s.run(s.initialize().unwrap(), 0.01, 0.004, |r| {
            seen.push(r.time);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 4);
        assert_eq!(seen[0], 0.0);
        assert!((seen[1] - 0.004).abs() < 1e-15);
        assert_eq!(*seen.last().unwrap(), 0.01);
    }

    #[test]
    fn nan_aborts_with_cell_index() {
        let s = small(false);
        let mut rs = s.initialize().unwrap();
        rs.state.set(3, 2, 1, R, f64::NAN);
        match s.step(&rs, 1.0) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
