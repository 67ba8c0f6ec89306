//! P1 discontinuous Galerkin basis on (x, r, mu) cells and the coefficient
//! storage `W[i][k][m][p]`.
//!
//! Per cell the approximation is
//! `T + R xi_r + M xi_mu + X xi_x` with `xi_r = 2 (r - r_k) / dr_k` and so on;
//! `p = 0..4` indexes `T, R, M, X`. The unknown is the azimuthally
//! integrated weighted pdf, so moments carry no explicit 2 pi.

use std::sync::OnceLock;

use crate::mesh::PhaseSpaceMesh;
use crate::par;
use crate::quadrature::GaussRule;

pub const T: usize = 0;
pub const R: usize = 1;
pub const M: usize = 2;
pub const X: usize = 3;
pub const NCOEF: usize = 4;

/// `int psi_p^2` over the reference cell divided by the cell volume.
pub const MASS: [f64; NCOEF] = [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

/// Gauss points per axis: x and mu use 3, r uses 4 after `r = s^2`.
pub const NQ_X: usize = 3;
pub const NQ_R: usize = 4;
pub const NQ_MU: usize = 3;

pub(crate) struct Rules {
    pub x: GaussRule,
    pub r: GaussRule,
    pub mu: GaussRule,
}

pub(crate) fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        x: GaussRule::new(NQ_X),
        r: GaussRule::new(NQ_R),
        mu: GaussRule::new(NQ_MU),
    })
}

/// Radial quadrature on `[a, b]` through `r = s^2`: returns `(r_n, w_n)` with
/// `sum w_n g(r_n) ~ int g dr`. Integrands of the form `sqrt(r) p(r)` and
/// `p(r) / sqrt(r)` become polynomials in `s`.
pub fn radial_nodes(a: f64, b: f64) -> [(f64, f64); NQ_R] {
    let g = &rules().r;
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let mut out = [(0.0, 0.0); NQ_R];
    for (o, (s, w)) in out.iter_mut().zip(g.on(sa, sb)) {
        *o = (s * s, 2.0 * s * w);
    }
    out
}

/// Interaction matrix of the x-parts of the basis: `int eta_p eta_q dx / dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMatrix;

impl BetaMatrix {
    /// Full 6x6 table in the order `(T, R, M, P, X, Y)`.
    pub fn full() -> [[f64; 6]; 6] {
        let t = 1.0 / 3.0;
        [
            [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, t, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, t],
        ]
    }

    /// Block for the reduced unknowns `(T, R, M, X)`.
    pub fn reduced() -> [[f64; 4]; 4] {
        let f = Self::full();
        let map = [0, 1, 2, 4];
        let mut out = [[0.0; 4]; 4];
        for (a, &pa) in map.iter().enumerate() {
            for (b, &pb) in map.iter().enumerate() {
                out[a][b] = f[pa][pb];
            }
        }
        out
    }
}

/// DG coefficients for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DGState {
    nx: usize,
    nr: usize,
    nmu: usize,
    fingerprint: u64,
    data: Vec<f64>,
}

impl DGState {
    pub fn zeros(mesh: &PhaseSpaceMesh) -> Self {
        DGState {
            nx: mesh.nx(),
            nr: mesh.nr(),
            nmu: mesh.nmu(),
            fingerprint: mesh.fingerprint(),
            data: vec![0.0; mesh.n_cells() * NCOEF],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.nr, self.nmu)
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize, m: usize, p: usize) -> usize {
        ((i * self.nr + k) * self.nmu + m) * NCOEF + p
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize, m: usize, p: usize) -> f64 {
        self.data[self.idx(i, k, m, p)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, m: usize, p: usize, v: f64) {
        let j = self.idx(i, k, m, p);
        self.data[j] = v;
    }

    #[inline]
    pub fn cell(&self, i: usize, k: usize, m: usize) -> &[f64] {
        let j = self.idx(i, k, m, 0);
        &self.data[j..j + NCOEF]
    }

    /// All coefficients of x-cell `i`, laid out `[k][m][p]`.
    pub fn x_slice(&self, i: usize) -> &[f64] {
        let n = self.x_chunk_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn x_chunk_len(&self) -> usize {
        self.nr * self.nmu * NCOEF
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &DGState) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.data {
            *s *= a;
        }
    }

    /// `a * x + b * y`.
    pub fn lincomb(a: f64, x: &DGState, b: f64, y: &DGState) -> DGState {
        let mut out = x.clone();
        for (o, v) in out.data.iter_mut().zip(&y.data) {
            *o = a * *o + b * v;
        }
        out
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// First non-finite coefficient as `(i, k, m, p)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize, usize, usize)> {
        let j = self.data.iter().position(|v| !v.is_finite())?;
        let p = j % NCOEF;
        let c = j / NCOEF;
        let m = c % self.nmu;
        let k = (c / self.nmu) % self.nr;
        let i = c / (self.nmu * self.nr);
        Some((i, k, m, p))
    }

    /// Value of the approximation at a point of cell `(i, k, m)`.
    pub fn eval(
        &self,
        mesh: &PhaseSpaceMesh,
        (i, k, m): (usize, usize, usize),
        (x, r, mu): (f64, f64, f64),
    ) -> f64 {
        let c = self.cell(i, k, m);
        c[T] + c[R] * 2.0 * (r - mesh.r_center(k)) / mesh.dr(k)
            + c[M] * 2.0 * (mu - mesh.mu_center(m)) / mesh.dmu(m)
            + c[X] * 2.0 * (x - mesh.x_center(i)) / mesh.dx(i)
    }
}

/// L2 projection of `f(x, r, mu)` onto the P1 space, cell by cell.
pub fn project_to_dg<F>(mesh: &PhaseSpaceMesh, f: F) -> DGState
where
    F: Fn(f64, f64, f64) -> f64 + Sync + Send,
{
    let mut state = DGState::zeros(mesh);
    let chunk = state.x_chunk_len();
    let (nr, nmu) = (mesh.nr(), mesh.nmu());
    let rl = rules();
    par::for_each_chunk_mut(state.as_mut_slice(), chunk, |i, out| {
        let (xc, dx) = (mesh.x_center(i), mesh.dx(i));
        for k in 0..nr {
            let (rc, dr) = (mesh.r_center(k), mesh.dr(k));
            let rn = radial_nodes(mesh.r_edges()[k], mesh.r_edges()[k + 1]);
            for m in 0..nmu {
                let (mc, dmu) = (mesh.mu_center(m), mesh.dmu(m));
                let mut acc = [0.0; NCOEF];
                for (x, wx) in rl.x.on(mesh.x_edges()[i], mesh.x_edges()[i + 1]) {
                    let xi_x = 2.0 * (x - xc) / dx;
                    for &(r, wr) in &rn {
                        let xi_r = 2.0 * (r - rc) / dr;
                        for (mu, wm) in rl.mu.on(mesh.mu_edges()[m], mesh.mu_edges()[m + 1]) {
                            let xi_m = 2.0 * (mu - mc) / dmu;
                            let v = wx * wr * wm * f(x, r, mu);
                            acc[T] += v;
                            acc[R] += v * xi_r;
                            acc[M] += v * xi_m;
                            acc[X] += v * xi_x;
                        }
                    }
                }
                let vol = dx * dr * dmu;
                let base = (k * nmu + m) * NCOEF;
                for p in 0..NCOEF {
                    out[base + p] = acc[p] / (vol * MASS[p]);
                }
            }
        }
    });
    state
}

/// Density per x-cell as `(mean, x-slope)`: `rho(x) = mean + slope xi_x`.
pub fn density(mesh: &PhaseSpaceMesh, state: &DGState) -> Vec<[f64; 2]> {
    let (nr, nmu) = (mesh.nr(), mesh.nmu());
    (0..mesh.nx())
        .map(|i| {
            let mut mean = 0.0;
            let mut slope = 0.0;
            for k in 0..nr {
                let dr = mesh.dr(k);
                for m in 0..nmu {
                    let w = dr * mesh.dmu(m);
                    let c = state.cell(i, k, m);
                    mean += c[T] * w;
                    slope += c[X] * w;
                }
            }
            [mean, slope]
        })
        .collect()
}

/// Total mass `int rho dx`.
pub fn total_mass(mesh: &PhaseSpaceMesh, state: &DGState) -> f64 {
    density(mesh, state)
        .iter()
        .enumerate()
        .map(|(i, d)| d[0] * mesh.dx(i))
        .sum()
}
