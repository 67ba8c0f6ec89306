//! Reduced 1D Poisson problem `eps_r psi'' = c_p (rho - N_D)` with
//! `psi(0) = 0`, `psi(L) = bias`, solved in closed form cell by cell.
//!
//! The density is piecewise linear, so `psi'` is piecewise quadratic. The
//! field handed to transport is the per-cell L2 projection of
//! `E = -c_v psi'` onto linears in `xi_x`.

use crate::error::{Error, Result};
use crate::mesh::PhaseSpaceMesh;

/// Piecewise-constant doping with abrupt junctions.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    /// Interior junction positions, strictly increasing.
    pub breakpoints: Vec<f64>,
    /// One dimensionless density per region (`breakpoints.len() + 1`).
    pub values: Vec<f64>,
}

impl DopingProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::param("doping", "need one value per region"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("doping", "junctions must be increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::param("doping", "densities must be positive"));
        }
        Ok(DopingProfile { breakpoints, values })
    }

    pub fn uniform(value: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn at(&self, x: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|&b| b <= x)]
    }

    /// L2 projection on `[a, b]` as `(mean, slope)` in `xi = 2 (x - c) / (b - a)`.
    pub fn cell_projection(&self, a: f64, b: f64) -> (f64, f64) {
        let h = b - a;
        let c = 0.5 * (a + b);
        let mut cuts = vec![a];
        cuts.extend(self.breakpoints.iter().copied().filter(|&p| p > a && p < b));
        cuts.push(b);
        let (mut m0, mut m1) = (0.0, 0.0);
        for w in cuts.windows(2) {
            let v = self.at(0.5 * (w[0] + w[1]));
            let (t0, t1) = (2.0 * (w[0] - c) / h, 2.0 * (w[1] - c) / h);
            m0 += v * (t1 - t0) / 2.0;
            m1 += v * 1.5 * (t1 * t1 - t0 * t0) / 2.0;
        }
        (m0, m1)
    }

    pub fn left(&self) -> f64 {
        self.values[0]
    }

    pub fn right(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Potential and projected field on the x-cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// `E = e[i][0] + e[i][1] xi_x` on cell `i`.
    pub e: Vec<[f64; 2]>,
    /// Potential at the x-edges.
    pub psi_edges: Vec<f64>,
    /// `psi'(0)`.
    pub dpsi0: f64,
    /// Cumulative source integral at the x-edges.
    s_edges: Vec<f64>,
    /// Source coefficients `(s0, s1)` per cell.
    source: Vec<[f64; 2]>,
    x_edges: Vec<f64>,
}

impl FieldState {
    /// Zero potential and field.
    pub fn zero(mesh: &PhaseSpaceMesh) -> Self {
        let n = mesh.nx();
        FieldState {
            e: vec![[0.0; 2]; n],
            psi_edges: vec![0.0; n + 1],
            dpsi0: 0.0,
            s_edges: vec![0.0; n + 1],
            source: vec![[0.0; 2]; n],
            x_edges: mesh.x_edges().to_vec(),
        }
    }

    /// Frozen uniform-in-cell field, for transport-only studies.
    pub fn frozen(mesh: &PhaseSpaceMesh, e: Vec<[f64; 2]>) -> Self {
        let mut f = Self::zero(mesh);
        f.e = e;
        f
    }

    /// `psi'` at `xi_x = t` in cell `i`.
    pub fn dpsi(&self, i: usize, t: f64) -> f64 {
        let dx = self.x_edges[i + 1] - self.x_edges[i];
        let [s0, s1] = self.source[i];
        self.dpsi0 + self.s_edges[i] + 0.5 * dx * (s0 * (t + 1.0) + 0.5 * s1 * (t * t - 1.0))
    }

    /// `psi` at `xi_x = t` in cell `i`.
    pub fn psi(&self, i: usize, t: f64) -> f64 {
        let dx = self.x_edges[i + 1] - self.x_edges[i];
        let [s0, s1] = self.source[i];
        let u = t + 1.0;
        let int_s = self.s_edges[i] * u
            + 0.5 * dx * (0.5 * s0 * u * u + 0.5 * s1 * ((t * t * t + 1.0) / 3.0 - u));
        self.psi_edges[i] + 0.5 * dx * (self.dpsi0 * u + int_s)
    }

    /// Projected field at `xi_x = t` in cell `i`.
    pub fn field_at(&self, i: usize, t: f64) -> f64 {
        self.e[i][0] + self.e[i][1] * t
    }
}

/// Per-mesh Poisson solver.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    x_edges: Vec<f64>,
    /// `c_p / eps_r`.
    coupling: f64,
    c_v: f64,
    doping_cells: Vec<(f64, f64)>,
    pub doping: DopingProfile,
}

impl PoissonSolver {
    pub fn new(
        mesh: &PhaseSpaceMesh,
        doping: DopingProfile,
        c_p: f64,
        rel_permittivity: f64,
        c_v: f64,
    ) -> Result<Self> {
        if !(rel_permittivity > 0.0) {
            return Err(Error::param("rel_permittivity", "must be positive"));
        }
        let e = mesh.x_edges();
        let doping_cells = (0..mesh.nx())
            .map(|i| doping.cell_projection(e[i], e[i + 1]))
            .collect();
        Ok(PoissonSolver {
            x_edges: e.to_vec(),
            coupling: c_p / rel_permittivity,
            c_v,
            doping_cells,
            doping,
        })
    }

    /// Doping projected per cell as `(mean, slope)`.
    pub fn doping_cells(&self) -> &[(f64, f64)] {
        &self.doping_cells
    }

    /// Solves for the field given the per-cell density `(mean, slope)` and
    /// the dimensionless potential `bias` at `x = L`.
    pub fn solve(&self, rho: &[[f64; 2]], bias: f64) -> FieldState {
        let n = self.x_edges.len() - 1;
        assert_eq!(rho.len(), n, "density has the wrong number of cells");
        let mut source = Vec::with_capacity(n);
        let mut s_edges = Vec::with_capacity(n + 1);
        let mut s_int = Vec::with_capacity(n);
        s_edges.push(0.0);
        for i in 0..n {
            let dx = self.x_edges[i + 1] - self.x_edges[i];
            let (d0, d1) = self.doping_cells[i];
            let s0 = self.coupling * (rho[i][0] - d0);
            let s1 = self.coupling * (rho[i][1] - d1);
            source.push([s0, s1]);
            let si = s_edges[i];
            s_int.push(dx * si + dx * dx * (0.5 * s0 - s1 / 6.0));
            s_edges.push(si + dx * s0);
        }
        let length = self.x_edges[n] - self.x_edges[0];
        let dpsi0 = (bias - s_int.iter().sum::<f64>()) / length;
        let mut psi_edges = Vec::with_capacity(n + 1);
        psi_edges.push(0.0);
        let mut e = Vec::with_capacity(n);
        for i in 0..n {
            let dx = self.x_edges[i + 1] - self.x_edges[i];
            let [s0, s1] = source[i];
            psi_edges.push(psi_edges[i] + dpsi0 * dx + s_int[i]);
            let mean = dpsi0 + s_edges[i] + 0.5 * dx * (s0 - s1 / 3.0);
            e.push([-self.c_v * mean, -self.c_v * 0.5 * dx * s0]);
        }
        // Pin the Dirichlet value against rounding in the cumulative sum.
        psi_edges[n] = bias;
        FieldState {
            e,
            psi_edges,
            dpsi0,
            s_edges,
            source,
            x_edges: self.x_edges.clone(),
        }
    }
}
