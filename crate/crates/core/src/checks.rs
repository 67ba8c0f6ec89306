//! Fast built-in invariant checks, run by `dgbp check`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bands::{spherical_average, EnergyBand, SyntheticBand};
use crate::basis::{density, DGState};
use crate::collisions::{density_rate, project_band, CollisionOperator, ScatteringKernel};
use crate::driver::Solver;
use crate::error::Result;
use crate::mesh::PhaseSpaceMesh;
use crate::poisson::{DopingProfile, PoissonSolver};
use crate::scaling::{derive_scaling, MaterialParams, ReferenceScales, ScalingGroups};
use crate::transport::{
    geometric_identity_check, AdvectionCoefficients, GhostPolicy, TransportOperator, UpwindMode,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

fn default_scaling() -> Result<ScalingGroups> {
    derive_scaling(&MaterialParams::default(), &ReferenceScales::default())
}

/// State with independent uniform `[-1, 1)` coefficients.
pub fn random_state(mesh: &PhaseSpaceMesh, rng: &mut StdRng) -> DGState {
    let mut w = DGState::zeros(mesh);
    for v in w.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    w
}

fn toy_mesh() -> Result<PhaseSpaceMesh> {
    PhaseSpaceMesh::from_edges(
        (0..=6).map(|i| i as f64 / 6.0).collect(),
        (0..=6).map(|k| 6.0 * k as f64).collect(),
        vec![-1.0, -0.4, 0.0, 0.6, 1.0],
    )
}

pub fn collision_conservation(seed: u64) -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let mesh = toy_mesh()?;
    let band = EnergyBand::kane(s.kane_alpha)?;
    let op = CollisionOperator::build(
        &ScatteringKernel::from_scaling(&s),
        &project_band(&band, &mesh)?,
        &mesh,
    )?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = random_state(&mesh, &mut rng);
        let rate = op.apply(&w)?;
        let scale: f64 = rate.as_slice().iter().map(|v| v.abs()).sum::<f64>() / rate.as_slice().len() as f64;
        worst = worst.max(density_rate(&mesh, &rate).abs() / scale);
    }
    Ok(outcome(
        "collision conservation",
        worst <= 1e-8,
        format!("max relative density rate {worst:.2e} over 100 states"),
    ))
}

pub fn pole_faces(seed: u64) -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let mesh = toy_mesh()?;
    let coeffs = AdvectionCoefficients::new(s.c_d, s.c_e, EnergyBand::kane(s.kane_alpha)?);
    let op = TransportOperator::new(&mesh, &coeffs, GhostPolicy::Vacuum, UpwindMode::Pointwise)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut nonzero = 0usize;
    let mut total = 0usize;
    for _ in 0..20 {
        let w = random_state(&mesh, &mut rng);
        let field: Vec<[f64; 2]> = (0..mesh.nx())
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        for f in op.pole_face_fluxes(&w, &field) {
            total += 3;
            nonzero += f.iter().filter(|v| v.to_bits() != 0).count();
        }
    }
    Ok(outcome(
        "pole faces carry no flux",
        nonzero == 0,
        format!("{nonzero} of {total} pole-face moments nonzero"),
    ))
}

pub fn geometric_identities(seed: u64) -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let coeffs = AdvectionCoefficients::new(s.c_d, s.c_e, EnergyBand::kane(s.kane_alpha)?);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = rng.random_range(0.01..36.0);
        let mu = rng.random_range(-0.999..0.999);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let e = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        worst = worst.max(geometric_identity_check(&coeffs, r, mu, phi, e)?);
    }
    Ok(outcome(
        "geometric identities",
        worst <= 1e-13,
        format!("max residual {worst:.2e} at 1000 points"),
    ))
}

pub fn poisson_zero_source() -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let mesh = PhaseSpaceMesh::uniform(17, 1, 2, 1.3, 1.0)?;
    let n = 0.7;
    let p = PoissonSolver::new(&mesh, DopingProfile::uniform(n)?, s.c_p, s.rel_permittivity, s.c_v)?;
    let v0 = 2.5;
    let rho: Vec<[f64; 2]> = p.doping_cells().iter().map(|d| [d.0, d.1]).collect();
    let f = p.solve(&rho, v0);
    let want = -s.c_v * v0 / 1.3;
    let worst = f
        .e
        .iter()
        .map(|e| (e[0] - want).abs().max(e[1].abs()))
        .fold(0.0, f64::max);
    Ok(outcome(
        "poisson zero source",
        worst <= 1e-12 * want.abs(),
        format!("max field deviation {worst:.2e}"),
    ))
}

pub fn kane_below_parabolic() -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let band = EnergyBand::kane(s.kane_alpha)?;
    let mut bad = 0;
    for j in 1..=3600 {
        let r = j as f64 * 0.01;
        if band.eps(r)? >= r {
            bad += 1;
        }
    }
    Ok(outcome(
        "kane below parabolic",
        bad == 0,
        format!("{bad} of 3600 radii violate eps < r"),
    ))
}

pub fn isotropic_average() -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let alpha = s.kane_alpha;
    let band = SyntheticBand::Kane { alpha };
    let kane = EnergyBand::kane(alpha)?;
    let mut worst = 0.0f64;
    for j in 0..=72 {
        let r = 0.5 * j as f64;
        let avg = spherical_average(&band, r)?;
        worst = worst.max((avg - kane.eps(r)?).abs() / r.max(1.0));
    }
    Ok(outcome(
        "spherical average of an isotropic band",
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e}"),
    ))
}

pub fn equilibrium_normalization() -> Result<CheckOutcome> {
    let s = default_scaling()?;
    let mesh = PhaseSpaceMesh::uniform(12, 10, 4, 1.0, 20.0)?;
    let doping = DopingProfile::new(
        vec![0.3, 0.7],
        vec![s.density_to_dimless(5e23), s.density_to_dimless(2e21), s.density_to_dimless(5e23)],
    )?;
    let solver = Solver::from_parts(
        s,
        mesh,
        EnergyBand::kane(s.kane_alpha)?,
        doping,
        None,
        GhostPolicy::Vacuum,
        UpwindMode::Pointwise,
    )?;
    let w = solver.equilibrium_state()?;
    let rho = density(&solver.mesh, &w);
    let worst = rho
        .iter()
        .zip(solver.poisson.doping_cells())
        .map(|(r, d)| ((r[0] - d.0).abs() + (r[1] - d.1).abs()) / d.0)
        .fold(0.0, f64::max);
    Ok(outcome(
        "equilibrium density equals doping",
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e}"),
    ))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        collision_conservation(seed)?,
        pole_faces(seed)?,
        geometric_identities(seed)?,
        poisson_zero_source()?,
        kane_below_parabolic()?,
        isotropic_average()?,
        equilibrium_normalization()?,
    ])
}
