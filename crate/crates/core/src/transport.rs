//! Advection coefficients and the upwind DG transport operator for the
//! reduced `(x, r, mu)` problem.
//!
//! Rates are assembled cell by cell. Every face flux is evaluated from both
//! neighbours with identical arguments, so the two contributions cancel
//! bitwise and each cell writes only to its own coefficients.

use crate::bands::EnergyBand;
use crate::basis::{radial_nodes, rules, DGState, MASS, M, NCOEF, NQ_MU, NQ_R, NQ_X, R, T, X};
use crate::error::{Error, Result};
use crate::mesh::PhaseSpaceMesh;
use crate::par;

/// Pointwise evaluators of the transport coefficients for a radial band.
#[derive(Debug, Clone)]
pub struct AdvectionCoefficients {
    pub c_d: f64,
    pub c_e: f64,
    pub band: EnergyBand,
}

fn check_point(r: f64, mu: f64) -> Result<()> {
    if !(r >= 0.0) || !(mu.abs() <= 1.0) {
        return Err(Error::param("(r, mu)", format!("({r}, {mu}) outside r >= 0, |mu| <= 1")));
    }
    Ok(())
}

impl AdvectionCoefficients {
    pub fn new(c_d: f64, c_e: f64, band: EnergyBand) -> Self {
        AdvectionCoefficients { c_d, c_e, band }
    }

    pub fn a1(&self, r: f64, mu: f64) -> Result<f64> {
        check_point(r, mu)?;
        Ok(self.c_d * 2.0 * r.sqrt() * mu * self.band.eval(r)?.deps_dr)
    }

    pub fn a4(&self, r: f64, mu: f64, ex: f64) -> Result<f64> {
        check_point(r, mu)?;
        Ok(-2.0 * self.c_e * r.sqrt() * mu * ex)
    }

    /// Singular at `r = 0`, where it is rejected.
    pub fn a5(&self, r: f64, mu: f64, ex: f64) -> Result<f64> {
        check_point(r, mu)?;
        if r == 0.0 {
            return Err(Error::param("r", "a5 is singular at r = 0"));
        }
        Ok(-self.c_e * (1.0 - mu * mu) / r.sqrt() * ex)
    }

    /// All six coefficients for a three-dimensional field, in component form.
    pub fn full(&self, r: f64, mu: f64, phi: f64, e: [f64; 3]) -> Result<[f64; 6]> {
        check_point(r, mu)?;
        if r == 0.0 || mu.abs() == 1.0 {
            return Err(Error::param("(r, mu)", "angular coefficients singular on the axis"));
        }
        let de = self.band.eval(r)?.deps_dr;
        let (sr, st) = (r.sqrt(), (1.0 - mu * mu).sqrt());
        let (c, s) = (phi.cos(), phi.sin());
        let ce = self.c_e;
        Ok([
            self.c_d * 2.0 * sr * mu * de,
            self.c_d * 2.0 * sr * st * c * de,
            self.c_d * 2.0 * sr * st * s * de,
            -2.0 * ce * sr * (mu * e[0] + st * (c * e[1] + s * e[2])),
            -ce * ((1.0 - mu * mu) / sr * e[0] - mu * st / sr * (c * e[1] + s * e[2])),
            -ce / (sr * st) * (-s * e[1] + c * e[2]),
        ])
    }
}

/// Orthonormal frame `(e_r, e_mu, e_phi)` at `(mu, phi)`.
pub fn spherical_frame(mu: f64, phi: f64) -> [[f64; 3]; 3] {
    let st = (1.0 - mu * mu).sqrt();
    let (c, s) = (phi.cos(), phi.sin());
    [
        [mu, st * c, st * s],
        [st, -mu * c, -mu * s],
        [0.0, -s, c],
    ]
}

/// Max residual between the component form of `(a4, a5, a6)` and their
/// projections of `E` on the spherical frame.
pub fn geometric_identity_check(
    coeffs: &AdvectionCoefficients,
    r: f64,
    mu: f64,
    phi: f64,
    e: [f64; 3],
) -> Result<f64> {
    let a = coeffs.full(r, mu, phi, e)?;
    let [er, em, ep] = spherical_frame(mu, phi);
    let dot = |u: [f64; 3]| u[0] * e[0] + u[1] * e[1] + u[2] * e[2];
    let (sr, st) = (r.sqrt(), (1.0 - mu * mu).sqrt());
    let ce = coeffs.c_e;
    let g4 = -2.0 * ce * sr * dot(er);
    let g5 = -ce * st / sr * dot(em);
    let g6 = -ce / (sr * st) * dot(ep);
    Ok([(a[3] - g4).abs(), (a[4] - g5).abs(), (a[5] - g6).abs()]
        .into_iter()
        .fold(0.0, f64::max))
}

/// Inflow rule at the x boundaries. The `r_max` face always uses a zero
/// ghost; the `r = 0` and `mu = +-1` faces carry no flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GhostPolicy {
    /// Ghost pdf is the interior trace rescaled so that its density equals
    /// the contact doping (dimensionless).
    ChargeNeutral { left: f64, right: f64 },
    Vacuum,
    Periodic,
}

/// How the upwind side is chosen on a face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpwindMode {
    /// Sign of the normal velocity at each face quadrature node.
    #[default]
    Pointwise,
    /// One sign per face, taken at the face centre.
    CellSign,
}

#[derive(Debug, Clone, Copy, Default)]
struct XNode {
    w: f64,
    a1: f64,
    xr: f64,
    xm: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Node1 {
    w: f64,
    v: f64,
    xi: f64,
}

/// Net particle fluxes through the domain boundary, positive inward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryFluxes {
    pub x_left: f64,
    pub x_right: f64,
    pub r_max: f64,
}

impl BoundaryFluxes {
    pub fn total(&self) -> f64 {
        self.x_left + self.x_right + self.r_max
    }
}

/// Precomputed transport operator on one mesh and band.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    mesh: PhaseSpaceMesh,
    c_e: f64,
    ghosts: GhostPolicy,
    upwind: UpwindMode,
    nr: usize,
    nmu: usize,
    /// Per `(k, m)`: volume moments of `a1`, `a4 / E` and `a5 / E` against
    /// `{1, xi_r, xi_mu}`.
    vol_a1: Vec<[f64; 3]>,
    vol_a4: Vec<[f64; 3]>,
    vol_a5: Vec<[f64; 3]>,
    /// x-face nodes per `(k, m)`.
    xface: Vec<[XNode; NQ_R * NQ_MU]>,
    /// mu nodes per `m`: `(w, mu, xi_mu)`.
    mu_nodes: Vec<[Node1; NQ_MU]>,
    /// r nodes per `k` for mu-faces: weight divided by `sqrt(r)`.
    r_nodes_inv: Vec<[Node1; NQ_R]>,
    /// Per `(k, m)`: `max |a1|`, `max 2 c_E sqrt(r) |mu|`,
    /// `max c_E (1 - mu^2) / sqrt(r)` over the cell's quadrature nodes.
    speed: Vec<[f64; 3]>,
}

/// x-quadrature on the reference cell: `(weight / dx, xi_x)`.
fn x_ref_nodes() -> [(f64, f64); NQ_X] {
    let mut out = [(0.0, 0.0); NQ_X];
    for (o, (t, w)) in out.iter_mut().zip(rules().x.on(-1.0, 1.0)) {
        *o = (0.5 * w, t);
    }
    out
}

impl TransportOperator {
    pub fn new(
        mesh: &PhaseSpaceMesh,
        coeffs: &AdvectionCoefficients,
        ghosts: GhostPolicy,
        upwind: UpwindMode,
    ) -> Result<Self> {
        let mu_e = mesh.mu_edges();
        if mu_e[0] != -1.0 || mu_e[mu_e.len() - 1] != 1.0 {
            return Err(Error::Mesh("transport needs mu edges spanning [-1, 1]".into()));
        }
        if let GhostPolicy::ChargeNeutral { left, right } = ghosts {
            if !(left > 0.0 && right > 0.0) {
                return Err(Error::param("contact density", "must be positive"));
            }
        }
        let (nr, nmu) = (mesh.nr(), mesh.nmu());
        let (c_d, c_e) = (coeffs.c_d, coeffs.c_e);
        let rl = rules();
        let mut mu_nodes = Vec::with_capacity(nmu);
        for m in 0..nmu {
            let (mc, dm) = (mesh.mu_center(m), mesh.dmu(m));
            let mut arr = [Node1::default(); NQ_MU];
            for (a, (mu, w)) in arr.iter_mut().zip(rl.mu.on(mu_e[m], mu_e[m + 1])) {
                *a = Node1 {
                    w,
                    v: mu,
                    xi: 2.0 * (mu - mc) / dm,
                };
            }
            mu_nodes.push(arr);
        }
        let r_e = mesh.r_edges();
        let mut r_nodes = Vec::with_capacity(nr);
        let mut r_nodes_inv = Vec::with_capacity(nr);
        let mut deps = Vec::with_capacity(nr);
        let mut deps_edge = Vec::with_capacity(nr);
        for k in 0..nr {
            let (rc, dr) = (mesh.r_center(k), mesh.dr(k));
            let rn = radial_nodes(r_e[k], r_e[k + 1]);
            let mut a = [Node1::default(); NQ_R];
            let mut b = [Node1::default(); NQ_R];
            let mut d = [0.0; NQ_R];
            for j in 0..NQ_R {
                let (r, w) = rn[j];
                let xi = 2.0 * (r - rc) / dr;
                a[j] = Node1 { w, v: r, xi };
                b[j] = Node1 {
                    w: w / r.sqrt(),
                    v: r,
                    xi,
                };
                d[j] = coeffs.band.eval(r)?.deps_dr;
            }
            deps_edge.push(coeffs.band.eval(r_e[k + 1])?.deps_dr.abs());
            r_nodes.push(a);
            r_nodes_inv.push(b);
            deps.push(d);
        }

        let ncell = nr * nmu;
        let mut vol_a1 = vec![[0.0; 3]; ncell];
        let mut vol_a4 = vec![[0.0; 3]; ncell];
        let mut vol_a5 = vec![[0.0; 3]; ncell];
        let mut xface = vec![[XNode::default(); NQ_R * NQ_MU]; ncell];
        let mut speed = vec![[0.0; 3]; ncell];
        for k in 0..nr {
            for m in 0..nmu {
                let c = k * nmu + m;
                let (mut s1, mut s4, mut s5) = (0.0f64, 0.0f64, 0.0f64);
                for (jr, rn) in r_nodes[k].iter().enumerate() {
                    let sr = rn.v.sqrt();
                    for (jm, mn) in mu_nodes[m].iter().enumerate() {
                        let w = rn.w * mn.w;
                        let a1 = c_d * 2.0 * sr * mn.v * deps[k][jr];
                        let a4 = -2.0 * c_e * sr * mn.v;
                        let a5 = -c_e * (1.0 - mn.v * mn.v) / sr;
                        let phi = [1.0, rn.xi, mn.xi];
                        for a in 0..3 {
                            vol_a1[c][a] += w * a1 * phi[a];
                            vol_a4[c][a] += w * a4 * phi[a];
                            vol_a5[c][a] += w * a5 * phi[a];
                        }
                        xface[c][jr * NQ_MU + jm] = XNode {
                            w,
                            a1,
                            xr: rn.xi,
                            xm: mn.xi,
                        };
                        s1 = s1.max(a1.abs());
                        s5 = s5.max(a5.abs());
                    }
                }
                let mu_max = mu_e[m].abs().max(mu_e[m + 1].abs());
                let r_hi = r_e[k + 1];
                s1 = s1.max(c_d * 2.0 * r_hi.sqrt() * mu_max * deps_edge[k]);
                s4 = s4.max(2.0 * c_e * r_hi.sqrt() * mu_max);
                // (1 - mu^2) peaks at the point of the closed cell nearest 0.
                let mu_min = if mu_e[m] <= 0.0 && mu_e[m + 1] >= 0.0 {
                    0.0
                } else {
                    mu_e[m].abs().min(mu_e[m + 1].abs())
                };
                let r_min = r_nodes[k][0].v;
                s5 = s5.max(c_e * (1.0 - mu_min * mu_min) / r_min.sqrt());
                speed[c] = [s1, s4, s5];
            }
        }
        Ok(TransportOperator {
            mesh: mesh.clone(),
            c_e,
            ghosts,
            upwind,
            nr,
            nmu,
            vol_a1,
            vol_a4,
            vol_a5,
            xface,
            mu_nodes,
            r_nodes_inv,
            speed,
        })
    }

    pub fn mesh(&self) -> &PhaseSpaceMesh {
        &self.mesh
    }

    pub fn ghosts(&self) -> GhostPolicy {
        self.ghosts
    }

    pub fn set_ghosts(&mut self, g: GhostPolicy) {
        self.ghosts = g;
    }

    pub fn upwind(&self) -> UpwindMode {
        self.upwind
    }

    #[inline]
    fn at(&self, k: usize, m: usize) -> usize {
        (k * self.nmu + m) * NCOEF
    }

    /// Density trace of x-cell `i` at `xi_x = side`.
    fn density_trace(&self, w: &[f64], side: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..self.nr {
            let dr = self.mesh.dr(k);
            for m in 0..self.nmu {
                let c = &w[self.at(k, m)..];
                s += dr * self.mesh.dmu(m) * (c[T] + side * c[X]);
            }
        }
        s
    }

    /// Scale factors of the charge-neutral ghosts, or the error when an
    /// interior trace density is not positive.
    fn ghost_factors(&self, state: &DGState) -> Result<(f64, f64)> {
        match self.ghosts {
            GhostPolicy::ChargeNeutral { left, right } => {
                let nx = self.mesh.nx();
                let rl = self.density_trace(state.x_slice(0), -1.0);
                let rr = self.density_trace(state.x_slice(nx - 1), 1.0);
                if !(rl > 0.0) {
                    return Err(Error::ContactDensity {
                        side: "left",
                        density: rl,
                    });
                }
                if !(rr > 0.0) {
                    return Err(Error::ContactDensity {
                        side: "right",
                        density: rr,
                    });
                }
                Ok((left / rl, right / rr))
            }
            _ => Ok((0.0, 0.0)),
        }
    }

    /// x-face flux moments `[F_T, F_R, F_M]` at a face with left coefficients
    /// `lc` (trace at `xi_x = +1`) and right coefficients `rc` (trace at -1).
    /// `lg` and `rg` scale the traces; ghosts use them.
    #[inline]
    fn x_flux(&self, cell: usize, lc: &[f64], lg: f64, rc: &[f64], rg: f64) -> [f64; 3] {
        let nodes = &self.xface[cell];
        let mut f = [0.0; 3];
        let cell_positive = match self.upwind {
            UpwindMode::Pointwise => None,
            UpwindMode::CellSign => {
                let m = cell % self.nmu;
                Some(self.mesh.mu_center(m) >= 0.0)
            }
        };
        for n in nodes {
            let pos = cell_positive.unwrap_or(n.a1 >= 0.0);
            let v = if pos {
                lg * (lc[T] + lc[R] * n.xr + lc[M] * n.xm + lc[X])
            } else {
                rg * (rc[T] + rc[R] * n.xr + rc[M] * n.xm - rc[X])
            };
            let g = n.w * n.a1 * v;
            f[0] += g;
            f[1] += g * n.xr;
            f[2] += g * n.xm;
        }
        f
    }

    /// r-face flux moments `[G_T, G_M, G_X]` on r-edge `edge` of mu-cell
    /// `m`, between the cell below (`lo`) and above (`hi`). A missing side
    /// is the zero ghost; at `r = 0` the coefficient itself vanishes.
    #[inline]
    fn r_flux(
        &self,
        edge: usize,
        m: usize,
        field: [f64; 2],
        lo: Option<&[f64]>,
        hi: Option<&[f64]>,
    ) -> [f64; 3] {
        let re = self.mesh.r_edges()[edge];
        let coef = -2.0 * self.c_e * re.sqrt();
        let cell_sign = match self.upwind {
            UpwindMode::Pointwise => None,
            UpwindMode::CellSign => Some(coef * self.mesh.mu_center(m) * field[0] >= 0.0),
        };
        let mut g = [0.0; 3];
        for &(wx, xx) in &x_ref_nodes() {
            let e = field[0] + field[1] * xx;
            for n in &self.mu_nodes[m] {
                let a4 = coef * n.v * e;
                let v = match (cell_sign.unwrap_or(a4 >= 0.0), lo, hi) {
                    (true, Some(l), _) => l[T] + l[R] + l[M] * n.xi + l[X] * xx,
                    (false, _, Some(h)) => h[T] - h[R] + h[M] * n.xi + h[X] * xx,
                    _ => 0.0,
                };
                let q = wx * n.w * a4 * v;
                g[0] += q;
                g[1] += q * n.xi;
                g[2] += q * xx;
            }
        }
        g
    }

    /// mu-face flux moments `[H_T, H_R, H_X]` on mu-edge `edge` of r-cell
    /// `k`. At `mu = +-1` the coefficient vanishes.
    #[inline]
    fn mu_flux(
        &self,
        k: usize,
        edge: usize,
        field: [f64; 2],
        lo: Option<&[f64]>,
        hi: Option<&[f64]>,
    ) -> [f64; 3] {
        let me = self.mesh.mu_edges()[edge];
        let coef = -self.c_e * (1.0 - me * me);
        let cell_sign = match self.upwind {
            UpwindMode::Pointwise => None,
            UpwindMode::CellSign => Some(coef * field[0] >= 0.0),
        };
        let mut h = [0.0; 3];
        for &(wx, xx) in &x_ref_nodes() {
            let e = field[0] + field[1] * xx;
            let pos = cell_sign.unwrap_or(coef * e >= 0.0);
            for n in &self.r_nodes_inv[k] {
                let v = match (pos, lo, hi) {
                    (true, Some(l), _) => l[T] + l[R] * n.xi + l[M] + l[X] * xx,
                    (false, _, Some(u)) => u[T] + u[R] * n.xi - u[M] + u[X] * xx,
                    _ => 0.0,
                };
                let q = wx * n.w * coef * e * v;
                h[0] += q;
                h[1] += q * n.xi;
                h[2] += q * xx;
            }
        }
        h
    }

    /// Adds the transport rate of x-cell `i` to `out` (laid out `[k][m][p]`).
    fn add_rate_x_slice(
        &self,
        i: usize,
        state: &DGState,
        field: &[[f64; 2]],
        ghost: (f64, f64),
        out: &mut [f64],
    ) {
        let nx = self.mesh.nx();
        let w = state.x_slice(i);
        let (dx, fe) = (self.mesh.dx(i), field[i]);
        let periodic = matches!(self.ghosts, GhostPolicy::Periodic);
        // Neighbour slices and trace scale factors on the two x-faces.
        let (left, lg) = if i > 0 {
            (Some(state.x_slice(i - 1)), 1.0)
        } else if periodic {
            (Some(state.x_slice(nx - 1)), 1.0)
        } else {
            (None, ghost.0)
        };
        let (right, rg) = if i + 1 < nx {
            (Some(state.x_slice(i + 1)), 1.0)
        } else if periodic {
            (Some(state.x_slice(0)), 1.0)
        } else {
            (None, ghost.1)
        };
        for k in 0..self.nr {
            let dr = self.mesh.dr(k);
            for m in 0..self.nmu {
                let c = k * self.nmu + m;
                let o = self.at(k, m);
                let me = &w[o..o + NCOEF];
                let dmu = self.mesh.dmu(m);
                let mut acc = [0.0; NCOEF];

                let a1 = &self.vol_a1[c];
                let a4 = &self.vol_a4[c];
                let a5 = &self.vol_a5[c];
                let s1 = me[T] * a1[0] + me[R] * a1[1] + me[M] * a1[2];
                acc[X] += 2.0 * s1;
                let s4 = me[T] * a4[0] + me[R] * a4[1] + me[M] * a4[2];
                acc[R] += 2.0 / dr * dx * (fe[0] * s4 + fe[1] * me[X] * a4[0] / 3.0);
                let s5 = me[T] * a5[0] + me[R] * a5[1] + me[M] * a5[2];
                acc[M] += 2.0 / dmu * dx * (fe[0] * s5 + fe[1] * me[X] * a5[0] / 3.0);

                // x-faces. A boundary ghost is the interior trace rescaled.
                let fl = match left {
                    Some(l) => self.x_flux(c, &l[o..o + NCOEF], lg, me, 1.0),
                    None => {
                        let mut mirror = [0.0; NCOEF];
                        mirror.copy_from_slice(me);
                        mirror[X] = -mirror[X];
                        self.x_flux(c, &mirror, lg, me, 1.0)
                    }
                };
                acc[T] += fl[0];
                acc[R] += fl[1];
                acc[M] += fl[2];
                acc[X] -= fl[0];
                let fr = match right {
                    Some(rn) => self.x_flux(c, me, 1.0, &rn[o..o + NCOEF], rg),
                    None => {
                        let mut mirror = [0.0; NCOEF];
                        mirror.copy_from_slice(me);
                        mirror[X] = -mirror[X];
                        self.x_flux(c, me, 1.0, &mirror, rg)
                    }
                };
                acc[T] -= fr[0];
                acc[R] -= fr[1];
                acc[M] -= fr[2];
                acc[X] -= fr[0];

                // r-faces. The r = 0 edge is assembled like any other; its
                // coefficient is zero. Beyond r_max the ghost is zero.
                let cell = |kk: usize, mm: usize| &w[self.at(kk, mm)..self.at(kk, mm) + NCOEF];
                let below = (k > 0).then(|| cell(k - 1, m));
                let g = self.r_flux(k, m, fe, below, Some(me));
                acc[T] += dx * g[0];
                acc[R] -= dx * g[0];
                acc[M] += dx * g[1];
                acc[X] += dx * g[2];
                let above = (k + 1 < self.nr).then(|| cell(k + 1, m));
                let g = self.r_flux(k + 1, m, fe, Some(me), above);
                acc[T] -= dx * g[0];
                acc[R] -= dx * g[0];
                acc[M] -= dx * g[1];
                acc[X] -= dx * g[2];

                // mu-faces, including the two poles where the coefficient is zero.
                let before = (m > 0).then(|| cell(k, m - 1));
                let h = self.mu_flux(k, m, fe, before, Some(me));
                acc[T] += dx * h[0];
                acc[R] += dx * h[1];
                acc[M] -= dx * h[0];
                acc[X] += dx * h[2];
                let after = (m + 1 < self.nmu).then(|| cell(k, m + 1));
                let h = self.mu_flux(k, m + 1, fe, Some(me), after);
                acc[T] -= dx * h[0];
                acc[R] -= dx * h[1];
                acc[M] -= dx * h[0];
                acc[X] -= dx * h[2];

                let vol = dx * dr * dmu;
                let dst = &mut out[o..o + NCOEF];
                for p in 0..NCOEF {
                    dst[p] += acc[p] / (vol * MASS[p]);
                }
            }
        }
    }

    /// Adds the transport rate of every cell to `out`.
    pub fn add_rate(&self, state: &DGState, field: &[[f64; 2]], out: &mut DGState) -> Result<()> {
        self.check(state, field)?;
        let ghost = self.ghost_factors(state)?;
        let chunk = state.x_chunk_len();
        par::for_each_chunk_mut(out.as_mut_slice(), chunk, |i, o| {
            self.add_rate_x_slice(i, state, field, ghost, o);
        });
        Ok(())
    }

    /// Transport rate `dW/dt` at frozen field.
    pub fn rate(&self, state: &DGState, field: &[[f64; 2]]) -> Result<DGState> {
        let mut out = DGState::zeros(&self.mesh);
        self.add_rate(state, field, &mut out)?;
        Ok(out)
    }

    /// Adds the rate of x-cell `i` into its slice; used by fused RHS loops.
    pub(crate) fn add_rate_slice(
        &self,
        i: usize,
        state: &DGState,
        field: &[[f64; 2]],
        ghost: (f64, f64),
        out: &mut [f64],
    ) {
        self.add_rate_x_slice(i, state, field, ghost, out);
    }

    pub(crate) fn prepare(&self, state: &DGState, field: &[[f64; 2]]) -> Result<(f64, f64)> {
        self.check(state, field)?;
        self.ghost_factors(state)
    }

    fn check(&self, state: &DGState, field: &[[f64; 2]]) -> Result<()> {
        if state.mesh_fingerprint() != self.mesh.fingerprint() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.fingerprint(),
                found: state.mesh_fingerprint(),
            });
        }
        if field.len() != self.mesh.nx() {
            return Err(Error::Mesh(format!(
                "field has {} cells, mesh has {}",
                field.len(),
                self.mesh.nx()
            )));
        }
        Ok(())
    }

    /// Particle fluxes through the boundary faces, positive into the domain.
    /// The total equals `d/dt int rho dx` under the transport rate.
    pub fn boundary_fluxes(&self, state: &DGState, field: &[[f64; 2]]) -> Result<BoundaryFluxes> {
        self.check(state, field)?;
        let ghost = self.ghost_factors(state)?;
        let nx = self.mesh.nx();
        let mut out = BoundaryFluxes::default();
        if !matches!(self.ghosts, GhostPolicy::Periodic) {
            let (w0, wn) = (state.x_slice(0), state.x_slice(nx - 1));
            for k in 0..self.nr {
                for m in 0..self.nmu {
                    let c = k * self.nmu + m;
                    let o = self.at(k, m);
                    let me = &w0[o..o + NCOEF];
                    let mut mirror = [0.0; NCOEF];
                    mirror.copy_from_slice(me);
                    mirror[X] = -mirror[X];
                    out.x_left += self.x_flux(c, &mirror, ghost.0, me, 1.0)[0];
                    let me = &wn[o..o + NCOEF];
                    let mut mirror = [0.0; NCOEF];
                    mirror.copy_from_slice(me);
                    mirror[X] = -mirror[X];
                    out.x_right -= self.x_flux(c, me, 1.0, &mirror, ghost.1)[0];
                }
            }
        }
        let k = self.nr - 1;
        for i in 0..nx {
            let w = state.x_slice(i);
            for m in 0..self.nmu {
                let o = self.at(k, m);
                out.r_max -= self.mesh.dx(i) * self.r_flux(k + 1, m, field[i], Some(&w[o..o + NCOEF]), None)[0];
            }
        }
        Ok(out)
    }

    /// Largest `|a1| / dx + |a4| / dr + |a5| / dmu (+ extra_k)` over cells,
    /// with the maxima taken over each cell's quadrature nodes and edges.
    /// `extra` adds a per-r-cell rate such as the collision loss.
    pub fn max_inverse_time(&self, field: &[[f64; 2]], extra: Option<&[f64]>) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.mesh.nx() {
            let emax = field[i][0].abs() + field[i][1].abs();
            let dx = self.mesh.dx(i);
            for k in 0..self.nr {
                let dr = self.mesh.dr(k);
                let ex = extra.map_or(0.0, |e| e[k]);
                for m in 0..self.nmu {
                    let s = &self.speed[k * self.nmu + m];
                    let v = s[0] / dx + emax * (s[1] / dr + s[2] / self.mesh.dmu(m)) + ex;
                    best = best.max(v);
                }
            }
        }
        best
    }

    /// Flux moments assembled on the pole faces: every `r = 0` face and
    /// every `mu = -1`, `mu = 1` face, exactly as the assembly evaluates them.
    pub fn pole_face_fluxes(&self, state: &DGState, field: &[[f64; 2]]) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        let nmu = self.nmu;
        for (i, fe) in field.iter().enumerate().take(self.mesh.nx()) {
            let w = state.x_slice(i);
            let cell = |k: usize, m: usize| &w[self.at(k, m)..self.at(k, m) + NCOEF];
            for m in 0..nmu {
                out.push(self.r_flux(0, m, *fe, None, Some(cell(0, m))));
            }
            for k in 0..self.nr {
                out.push(self.mu_flux(k, 0, *fe, None, Some(cell(k, 0))));
                out.push(self.mu_flux(k, nmu, *fe, Some(cell(k, nmu - 1)), None));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::project_to_dg;

    fn coeffs() -> AdvectionCoefficients {
        AdvectionCoefficients::new(0.084, 0.326, EnergyBand::Parabolic)
    }

    fn random_state(mesh: &PhaseSpaceMesh, seed: u64) -> DGState {
        let mut s = DGState::zeros(mesh);
        let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in s.as_mut_slice() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            *v = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.3;
        }
        s
    }

    #[test]
    fn pointwise_coefficients() {
        let c = coeffs();
        assert_eq!(c.a1(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(c.a4(3.0, 0.0, 2.0).unwrap(), 0.0);
        assert!((c.a1(4.0, 1.0).unwrap() - 4.0 * 0.084).abs() < 1e-15);
        assert_eq!(c.a5(2.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(c.a5(2.0, -1.0, 3.0).unwrap(), 0.0);
        assert_eq!(c.a4(0.0, 0.3, 3.0).unwrap(), 0.0);
        assert!(c.a5(0.0, 0.3, 1.0).is_err());
        assert!(c.a1(-1.0, 0.3).is_err());
    }

    #[test]
    fn identities_hold() {
        let c = AdvectionCoefficients::new(0.084, 0.326, EnergyBand::kane(0.0129).unwrap());
        let r = geometric_identity_check(&c, 2.0, 0.5, 0.7, [1.0, 0.0, 0.0]).unwrap();
        assert!(r <= 1e-13);
        // E along e_r kills a5 and a6.
        let (mu, phi) = (0.3, 1.1);
        let er = spherical_frame(mu, phi)[0];
        let a = c.full(2.0, mu, phi, er).unwrap();
        assert!(a[4].abs() < 1e-15 && a[5].abs() < 1e-15);
    }

    #[test]
    fn equilibrium_without_field_is_steady() {
        let mesh = PhaseSpaceMesh::uniform(5, 6, 4, 1.0, 12.0).unwrap();
        let op = TransportOperator::new(&mesh, &coeffs(), GhostPolicy::Periodic, UpwindMode::Pointwise)
            .unwrap();
        let s = project_to_dg(&mesh, |_, r, _| 0.5 * r.sqrt() * (-r).exp());
        let rate = op.rate(&s, &[[0.0, 0.0]; 5]).unwrap();
        assert!(rate.as_slice().iter().all(|v| v.abs() <= 1e-10));
        let op = TransportOperator::new(
            &mesh,
            &coeffs(),
            GhostPolicy::ChargeNeutral { left: 1.0, right: 1.0 },
            UpwindMode::Pointwise,
        )
        .unwrap();
        let rho = crate::basis::density(&mesh, &s)[0][0];
        let op = {
            let mut o = op;
            o.set_ghosts(GhostPolicy::ChargeNeutral { left: rho, right: rho });
            o
        };
        let rate = op.rate(&s, &[[0.0, 0.0]; 5]).unwrap();
        assert!(rate.as_slice().iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn linear_at_frozen_field() {
        let mesh = PhaseSpaceMesh::uniform(4, 5, 4, 1.0, 10.0).unwrap();
        let op =
            TransportOperator::new(&mesh, &coeffs(), GhostPolicy::Vacuum, UpwindMode::Pointwise).unwrap();
        let field: Vec<_> = (0..4).map(|i| [0.5 - i as f64 * 0.4, 0.1]).collect();
        let (a, b) = (random_state(&mesh, 3), random_state(&mesh, 4));
        let lhs = op.rate(&DGState::lincomb(1.5, &a, 2.0, &b), &field).unwrap();
        let rhs = DGState::lincomb(1.5, &op.rate(&a, &field).unwrap(), 2.0, &op.rate(&b, &field).unwrap());
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((x - y).abs() < 1e-11 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn mass_budget_matches_boundary_fluxes() {
        let mesh = PhaseSpaceMesh::uniform(4, 5, 5, 1.0, 10.0).unwrap();
        let field: Vec<_> = (0..4).map(|i| [1.0 - i as f64, -0.3]).collect();
        for g in [
            GhostPolicy::Vacuum,
            GhostPolicy::Periodic,
            GhostPolicy::ChargeNeutral { left: 2.0, right: 1.5 },
        ] {
            let op = TransportOperator::new(&mesh, &coeffs(), g, UpwindMode::Pointwise).unwrap();
            let s = project_to_dg(&mesh, |x, r, mu| (1.0 + x) * (-r).exp() * (1.2 + mu));
            let rate = op.rate(&s, &field).unwrap();
            let dm = crate::basis::total_mass(&mesh, &rate);
            let b = op.boundary_fluxes(&s, &field).unwrap();
            assert!((dm - b.total()).abs() < 1e-12 * (1.0 + dm.abs()), "{g:?}: {dm} vs {}", b.total());
        }
    }

    #[test]
    fn modes_agree_on_sign_uniform_mesh() {
        let mesh = PhaseSpaceMesh::from_edges(
            vec![0.0, 0.3, 0.6, 1.0],
            vec![0.0, 1.0, 2.5, 4.0],
            vec![-1.0, -0.4, 0.0, 0.5, 1.0],
        )
        .unwrap();
        let field = vec![[1.0, 0.2], [0.8, -0.1], [0.5, 0.3]];
        let a = TransportOperator::new(&mesh, &coeffs(), GhostPolicy::Vacuum, UpwindMode::Pointwise).unwrap();
        let b = TransportOperator::new(&mesh, &coeffs(), GhostPolicy::Vacuum, UpwindMode::CellSign).unwrap();
        let s = random_state(&mesh, 9);
        assert_eq!(a.rate(&s, &field).unwrap(), b.rate(&s, &field).unwrap());
    }

    #[test]
    fn contact_density_checked() {
        let mesh = PhaseSpaceMesh::uniform(3, 3, 2, 1.0, 3.0).unwrap();
        let op = TransportOperator::new(
            &mesh,
            &coeffs(),
            GhostPolicy::ChargeNeutral { left: 1.0, right: 1.0 },
            UpwindMode::Pointwise,
        )
        .unwrap();
        let err = op.rate(&DGState::zeros(&mesh), &[[0.0; 2]; 3]).unwrap_err();
        assert!(matches!(err, Error::ContactDensity { .. }));
    }
}
