//! Electron-phonon collision operator for radial bands.
//!
//! The band is replaced by its cell-wise linearization
//! `eps_k + A_k (r - r_k)`, which lets every delta function be resolved in
//! closed form. Each transition is described by a pair (destination cell,
//! source cell, shift `l`): the source energy equals the destination energy
//! plus `l alpha_p`. One routine integrates every pair over the destination
//! variable `s = sqrt(r)`; the gain tensor and the loss matrix are both read
//! off the same numbers, so the operator conserves particles to rounding.
//!
//! Because the kernel only depends on energies, the mu integrals factorize
//! and only an r-block is stored: `gain[kb][k][q][p]` with `q, p` in
//! `{1, xi_r}` and `loss[k][p][q]`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bands::EnergyBand;
use crate::basis::{DGState, M, NCOEF, R, T, X};
use crate::error::{Error, Result};
use crate::mesh::{fingerprint_f64s, truncate_digest, PhaseSpaceMesh};
use crate::par;
use crate::quadrature::GaussRule;
use crate::scaling::ScalingGroups;

const CACHE_MAGIC: &[u8; 8] = b"DGBPCOLL";
const CACHE_VERSION: u32 = 1;

/// Cell-wise linear band: `eps_k + slope_k (r - r_k)` on r-cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearBand {
    pub centers: Vec<f64>,
    pub eps: Vec<f64>,
    pub slope: Vec<f64>,
}

impl PiecewiseLinearBand {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    #[inline]
    pub fn value(&self, k: usize, r: f64) -> f64 {
        self.eps[k] + self.slope[k] * (r - self.centers[k])
    }

    /// Inverse of the linear piece `k`.
    #[inline]
    pub fn invert(&self, k: usize, e: f64) -> f64 {
        self.centers[k] + (e - self.eps[k]) / self.slope[k]
    }

    pub fn fingerprint(&self) -> u64 {
        let mut all = self.centers.clone();
        all.extend(&self.eps);
        all.extend(&self.slope);
        fingerprint_f64s(&all)
    }
}

/// Values and slopes of `band` at the r-cell midpoints.
pub fn project_band(band: &EnergyBand, mesh: &PhaseSpaceMesh) -> Result<PiecewiseLinearBand> {
    let n = mesh.nr();
    let mut out = PiecewiseLinearBand {
        centers: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        slope: Vec::with_capacity(n),
    };
    for k in 0..n {
        let r = mesh.r_center(k);
        let v = band.eval(r)?;
        if !(v.deps_dr > 0.0) || !v.eps.is_finite() {
            return Err(Error::NonMonotoneBand { r, slope: v.deps_dr });
        }
        out.centers.push(r);
        out.eps.push(v.eps);
        out.slope.push(v.deps_dr);
    }
    Ok(out)
}

/// Scattering strengths in dimensionless form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringKernel {
    pub c_zero: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub alpha_p: f64,
}

impl ScatteringKernel {
    pub fn from_scaling(s: &ScalingGroups) -> Self {
        ScatteringKernel {
            c_zero: s.c_zero,
            c_plus: s.c_plus,
            c_minus: s.c_minus,
            alpha_p: s.alpha_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_zero", self.c_zero),
            ("c_plus", self.c_plus),
            ("c_minus", self.c_minus),
            ("alpha_p", self.alpha_p),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `(l, c_l)`: the source energy is the destination energy plus `l alpha_p`.
    pub fn channels(&self) -> [(i32, f64); 3] {
        [(1, self.c_plus), (-1, self.c_minus), (0, self.c_zero)]
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint_f64s(&[self.c_zero, self.c_plus, self.c_minus, self.alpha_p])
    }
}

/// Destination-variable interval of a transition pair, in `r`.
///
/// Returns `None` when no point of the destination cell resonates with the
/// source cell.
pub fn pair_interval(
    band: &PiecewiseLinearBand,
    mesh: &PhaseSpaceMesh,
    dest: usize,
    src: usize,
    shift: f64,
) -> Option<(f64, f64)> {
    let e = mesh.r_edges();
    let lo_e = band.value(src, e[src]) - shift;
    let hi_e = band.value(src, e[src + 1]) - shift;
    let a = band.invert(dest, lo_e).max(e[dest]);
    let b = band.invert(dest, hi_e).min(e[dest + 1]);
    (b > a).then_some((a, b))
}

/// Integrals of one transition pair over the destination cell:
/// `out[f][g] = int s^2 f(r) g(r') / A_src ds`, with `f` in `{1, xi_dest}`,
/// `g` in `{1, xi_src, xi_src^2}` and `r'` the resolved source point.
fn pair_integrals(
    band: &PiecewiseLinearBand,
    mesh: &PhaseSpaceMesh,
    dest: usize,
    src: usize,
    shift: f64,
    rule: &GaussRule,
) -> Option<[[f64; 3]; 2]> {
    let (a, b) = pair_interval(band, mesh, dest, src, shift)?;
    let (rd, hd) = (mesh.r_center(dest), mesh.dr(dest));
    let (rs, hs) = (mesh.r_center(src), mesh.dr(src));
    let inv_a = 1.0 / band.slope[src];
    let mut out = [[0.0; 3]; 2];
    for (s, w) in rule.on(a.sqrt(), b.sqrt()) {
        let r = s * s;
        let rp = band.invert(src, band.value(dest, r) + shift);
        let fd = 2.0 * (r - rd) / hd;
        let gs = 2.0 * (rp - rs) / hs;
        let base = w * r * inv_a;
        let g = [1.0, gs, gs * gs];
        for j in 0..3 {
            out[0][j] += base * g[j];
            out[1][j] += base * fd * g[j];
        }
    }
    Some(out)
}

/// Precomputed gain tensor and loss matrix on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionOperator {
    nr: usize,
    mesh_fp: u64,
    band_fp: u64,
    kernel_fp: u64,
    /// `gain[kb * nr + k][q][p]`, scaled by `2 pi`.
    gain: Vec<[[f64; 2]; 2]>,
    /// Nonzero source cells per destination cell.
    support: Vec<Vec<usize>>,
    /// `loss[k][p][q]`, scaled by `4 pi`.
    loss: Vec<[[f64; 2]; 2]>,
    dr: Vec<f64>,
    dmu: Vec<f64>,
}

impl CollisionOperator {
    pub fn build(
        kernel: &ScatteringKernel,
        band: &PiecewiseLinearBand,
        mesh: &PhaseSpaceMesh,
    ) -> Result<Self> {
        kernel.validate()?;
        if band.len() != mesh.nr() {
            return Err(Error::Mesh(format!(
                "band has {} cells, mesh has {} r-cells",
                band.len(),
                mesh.nr()
            )));
        }
        let nr = mesh.nr();
        let rule = GaussRule::new(crate::basis::NQ_R);
        // Per destination: the pair integrals against every source, summed
        // over the three channels with their strengths.
        let rows: Vec<Vec<(usize, [[f64; 3]; 2])>> = par::map_range(nr, |d| {
            let mut row = Vec::new();
            for s in 0..nr {
                let mut acc = [[0.0; 3]; 2];
                let mut hit = false;
                for (l, c) in kernel.channels() {
                    if c == 0.0 {
                        continue;
                    }
                    let shift = l as f64 * kernel.alpha_p;
                    if let Some(v) = pair_integrals(band, mesh, d, s, shift, &rule) {
                        hit = true;
                        for f in 0..2 {
                            for g in 0..3 {
                                acc[f][g] += c * v[f][g];
                            }
                        }
                    }
                }
                if hit {
                    row.push((s, acc));
                }
            }
            row
        });

        let mut gain = vec![[[0.0; 2]; 2]; nr * nr];
        let mut loss = vec![[[0.0; 2]; 2]; nr];
        let mut support = vec![Vec::new(); nr];
        for (d, row) in rows.iter().enumerate() {
            for &(s, v) in row {
                let gblk = &mut gain[d * nr + s];
                for q in 0..2 {
                    for p in 0..2 {
                        gblk[q][p] = 2.0 * PI * v[q][p];
                    }
                }
                support[d].push(s);
                let l = &mut loss[s];
                l[0][0] += 4.0 * PI * v[0][0];
                l[0][1] += 4.0 * PI * v[0][1];
                l[1][1] += 4.0 * PI * v[0][2];
            }
        }
        for l in &mut loss {
            l[1][0] = l[0][1];
        }
        Ok(CollisionOperator {
            nr,
            mesh_fp: mesh.fingerprint(),
            band_fp: band.fingerprint(),
            kernel_fp: kernel.fingerprint(),
            gain,
            support,
            loss,
            dr: (0..nr).map(|k| mesh.dr(k)).collect(),
            dmu: (0..mesh.nmu()).map(|m| mesh.dmu(m)).collect(),
        })
    }

    /// Loads from `cache` when the fingerprints match, otherwise builds and
    /// writes the cache. Cache write failures are logged, not fatal.
    pub fn build_cached(
        kernel: &ScatteringKernel,
        band: &PiecewiseLinearBand,
        mesh: &PhaseSpaceMesh,
        cache: Option<&Path>,
    ) -> Result<Self> {
        let Some(path) = cache else {
            return Self::build(kernel, band, mesh);
        };
        let key = cache_key(mesh.fingerprint(), band.fingerprint(), kernel.fingerprint());
        if path.exists() {
            match Self::load(path, mesh) {
                Ok(op) if op.cache_key() == key => {
                    log::info!("collision operator loaded from {}", path.display());
                    return Ok(op);
                }
                Ok(_) => log::info!("collision cache {} is stale, rebuilding", path.display()),
                Err(e) => log::warn!("ignoring collision cache: {e}"),
            }
        }
        let op = Self::build(kernel, band, mesh)?;
        if let Err(e) = op.save(path) {
            log::warn!("could not write collision cache: {e}");
        }
        Ok(op)
    }

    fn cache_key(&self) -> u64 {
        cache_key(self.mesh_fp, self.band_fp, self.kernel_fp)
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.mesh_fp
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    /// Gain block for destination `kb` and source `k`: `[q][p]`.
    pub fn gain_block(&self, kb: usize, k: usize) -> [[f64; 2]; 2] {
        self.gain[kb * self.nr + k]
    }

    pub fn support(&self, kb: usize) -> &[usize] {
        &self.support[kb]
    }

    /// Loss block of r-cell `k`: `[p][q]`.
    pub fn loss_block(&self, k: usize) -> [[f64; 2]; 2] {
        self.loss[k]
    }

    /// Cell-averaged total scattering-out rate of r-cell `k`.
    pub fn loss_rate(&self, k: usize) -> f64 {
        self.loss[k][0][0] / self.dr[k]
    }

    pub fn max_loss_rate(&self) -> f64 {
        (0..self.nr).map(|k| self.loss_rate(k)).fold(0.0, f64::max)
    }

    pub fn n_gain_blocks(&self) -> usize {
        self.support.iter().map(Vec::len).sum()
    }

    /// Adds the collision rate of one x-cell to `out`. Both slices are laid
    /// out `[k][m][p]`.
    pub fn add_rate_x_slice(&self, w: &[f64], out: &mut [f64]) {
        let (nr, nmu) = (self.nr, self.dmu.len());
        let at = |k: usize, m: usize, p: usize| (k * nmu + m) * NCOEF + p;
        let mut sums = vec![[0.0f64; 3]; nr];
        for (k, s) in sums.iter_mut().enumerate() {
            for (m, &dm) in self.dmu.iter().enumerate() {
                s[0] += dm * w[at(k, m, T)];
                s[1] += dm * w[at(k, m, R)];
                s[2] += dm * w[at(k, m, X)];
            }
        }
        for kb in 0..nr {
            let mut g = [0.0; 3];
            for &k in &self.support[kb] {
                let b = &self.gain[kb * nr + k];
                let s = &sums[k];
                g[0] += b[0][0] * s[0] + b[0][1] * s[1];
                g[1] += b[1][0] * s[0] + b[1][1] * s[1];
                g[2] += b[0][0] * s[2];
            }
            let l = &self.loss[kb];
            let inv = 1.0 / self.dr[kb];
            for m in 0..nmu {
                let c = &w[at(kb, m, 0)..at(kb, m, 0) + NCOEF];
                let o = &mut out[at(kb, m, 0)..at(kb, m, 0) + NCOEF];
                o[T] += inv * (g[0] - (l[0][0] * c[T] + l[1][0] * c[R]));
                o[R] += 3.0 * inv * (g[1] - (l[0][1] * c[T] + l[1][1] * c[R]));
                o[M] -= inv * l[0][0] * c[M];
                o[X] += inv * (g[2] - l[0][0] * c[X]);
            }
        }
    }

    /// Collision rate `dW/dt` of a whole state.
    pub fn apply(&self, state: &DGState) -> Result<DGState> {
        if state.mesh_fingerprint() != self.mesh_fp {
            return Err(Error::MeshMismatch {
                expected: self.mesh_fp,
                found: state.mesh_fingerprint(),
            });
        }
        let mut out = state.clone();
        out.scale(0.0);
        let chunk = state.x_chunk_len();
        par::for_each_chunk_mut(out.as_mut_slice(), chunk, |i, o| {
            self.add_rate_x_slice(state.x_slice(i), o);
        });
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * 5 * self.gain.len());
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend(CACHE_VERSION.to_le_bytes());
        for v in [self.mesh_fp, self.band_fp, self.kernel_fp] {
            buf.extend(v.to_le_bytes());
        }
        buf.extend((self.nr as u64).to_le_bytes());
        buf.extend((self.n_gain_blocks() as u64).to_le_bytes());
        for (d, srcs) in self.support.iter().enumerate() {
            for &s in srcs {
                buf.extend((d as u32).to_le_bytes());
                buf.extend((s as u32).to_le_bytes());
                for v in self.gain[d * self.nr + s].iter().flatten() {
                    buf.extend(v.to_le_bytes());
                }
            }
        }
        for v in self.loss.iter().flatten().flatten() {
            buf.extend(v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a cache file written by [`save`](Self::save) for `mesh`.
    pub fn load(path: &Path, mesh: &PhaseSpaceMesh) -> Result<Self> {
        let bad = |msg: &str| Error::Cache {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { b: &bytes, at: 0 };
        if cur.take(8).ok_or_else(|| bad("truncated header"))? != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = cur.u32().ok_or_else(|| bad("truncated header"))?;
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut fp = [0u64; 3];
        for v in &mut fp {
            *v = cur.u64().ok_or_else(|| bad("truncated header"))?;
        }
        if fp[0] != mesh.fingerprint() {
            return Err(Error::MeshMismatch {
                expected: mesh.fingerprint(),
                found: fp[0],
            });
        }
        let nr = cur.u64().ok_or_else(|| bad("truncated header"))? as usize;
        if nr != mesh.nr() {
            return Err(bad("r-cell count differs from mesh"));
        }
        let nblocks = cur.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let mut gain = vec![[[0.0; 2]; 2]; nr * nr];
        let mut support = vec![Vec::new(); nr];
        for _ in 0..nblocks {
            let d = cur.u32().ok_or_else(|| bad("truncated gain block"))? as usize;
            let s = cur.u32().ok_or_else(|| bad("truncated gain block"))? as usize;
            if d >= nr || s >= nr {
                return Err(bad("gain block index out of range"));
            }
            let blk = &mut gain[d * nr + s];
            for v in blk.iter_mut().flatten() {
                *v = cur.f64().ok_or_else(|| bad("truncated gain block"))?;
            }
            support[d].push(s);
        }
        let mut loss = vec![[[0.0; 2]; 2]; nr];
        for v in loss.iter_mut().flatten().flatten() {
            *v = cur.f64().ok_or_else(|| bad("truncated loss matrix"))?;
        }
        if cur.at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(CollisionOperator {
            nr,
            mesh_fp: fp[0],
            band_fp: fp[1],
            kernel_fp: fp[2],
            gain,
            support,
            loss,
            dr: (0..nr).map(|k| mesh.dr(k)).collect(),
            dmu: (0..mesh.nmu()).map(|m| mesh.dmu(m)).collect(),
        })
    }
}

fn cache_key(mesh: u64, band: u64, kernel: u64) -> u64 {
    let mut h = Sha256::new();
    for v in [mesh, band, kernel] {
        h.update(v.to_le_bytes());
    }
    truncate_digest(h)
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.b.get(self.at..self.at + n)?;
        self.at += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Total particle rate `int rate dx dr dmu` of a collision rate.
pub fn density_rate(mesh: &PhaseSpaceMesh, rate: &DGState) -> f64 {
    crate::basis::total_mass(mesh, rate)
}
