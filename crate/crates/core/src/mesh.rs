//! Rectangular (x, r, mu) phase-space mesh and its presets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceMesh {
    x_edges: Vec<f64>,
    r_edges: Vec<f64>,
    mu_edges: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshPreset {
    /// 1 um diode, 400 nm channel: 120 x 80 x 24 cells.
    Diode400,
    /// 0.25 um diode, 50 nm channel: 64 x 80 x 20 cells.
    Diode50,
    /// Coarse 30 x 20 x 8 version of `diode400`, mirror symmetric in x
    /// and mu so that a zero-bias run keeps the device symmetry.
    Desk400,
}

impl std::str::FromStr for MeshPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diode400" => Ok(MeshPreset::Diode400),
            "diode50" => Ok(MeshPreset::Diode50),
            "desk400" => Ok(MeshPreset::Desk400),
            _ => Err(Error::Config(format!(
                "unknown mesh preset `{s}` (diode400, diode50, desk400)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XBlock {
    pub count: usize,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuBlock {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Mesh description as it appears in the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub preset: Option<MeshPreset>,
    pub x_blocks: Vec<XBlock>,
    pub r_cells: Option<usize>,
    pub dr: Option<f64>,
    pub mu_blocks: Vec<MuBlock>,
}

impl MeshSpec {
    pub fn preset(p: MeshPreset) -> Self {
        MeshSpec {
            preset: Some(p),
            ..Default::default()
        }
    }

    /// The spec with any preset expanded into explicit blocks; explicit
    /// fields take precedence over the preset's.
    pub fn resolved(&self) -> MeshSpec {
        let base = match self.preset {
            None => MeshSpec::default(),
            Some(MeshPreset::Diode400) => MeshSpec {
                preset: None,
                x_blocks: vec![xb(20, 0.01), xb(40, 0.005), xb(60, 0.01)],
                r_cells: Some(80),
                dr: Some(0.45),
                mu_blocks: vec![mb(12, -1.0, 0.7), mb(12, 0.7, 1.0)],
            },
            Some(MeshPreset::Diode50) => MeshSpec {
                preset: None,
                x_blocks: vec![
                    xb(9, 0.01),
                    xb(20, 0.001),
                    xb(6, 0.005),
                    xb(20, 0.001),
                    xb(9, 0.01),
                ],
                r_cells: Some(80),
                dr: Some(0.8),
                mu_blocks: vec![mb(10, -1.0, 0.7), mb(10, 0.7, 1.0)],
            },
            Some(MeshPreset::Desk400) => MeshSpec {
                preset: None,
                x_blocks: vec![xb(6, 0.05), xb(18, 0.4 / 18.0), xb(6, 0.05)],
                r_cells: Some(20),
                dr: Some(1.8),
                mu_blocks: vec![mb(8, -1.0, 1.0)],
            },
        };
        MeshSpec {
            preset: None,
            x_blocks: if self.x_blocks.is_empty() {
                base.x_blocks
            } else {
                self.x_blocks.clone()
            },
            r_cells: self.r_cells.or(base.r_cells),
            dr: self.dr.or(base.dr),
            mu_blocks: if self.mu_blocks.is_empty() {
                base.mu_blocks
            } else {
                self.mu_blocks.clone()
            },
        }
    }
}

fn xb(count: usize, width: f64) -> XBlock {
    XBlock { count, width }
}

fn mb(count: usize, lo: f64, hi: f64) -> MuBlock {
    MuBlock { count, lo, hi }
}

/// Builds the mesh for a device of dimensionless length `x_length`.
pub fn build_mesh(spec: &MeshSpec, x_length: f64) -> Result<PhaseSpaceMesh> {
    let spec = spec.resolved();
    if spec.x_blocks.is_empty() {
        return Err(Error::Mesh("no x blocks".into()));
    }
    let mut x_edges = vec![0.0];
    let mut start = 0.0;
    for b in &spec.x_blocks {
        if b.count == 0 || !(b.width > 0.0) {
            return Err(Error::Mesh(format!("bad x block {b:?}")));
        }
        for j in 1..=b.count {
            x_edges.push(start + j as f64 * b.width);
        }
        start += b.count as f64 * b.width;
    }
    let span = *x_edges.last().unwrap();
    if (span - x_length).abs() > 1e-9 * x_length {
        return Err(Error::Mesh(format!(
            "x blocks span {span}, device length is {x_length}"
        )));
    }
    *x_edges.last_mut().unwrap() = x_length;

    let nr = spec.r_cells.ok_or_else(|| Error::Mesh("missing r_cells".into()))?;
    let dr = spec.dr.ok_or_else(|| Error::Mesh("missing dr".into()))?;
    if nr == 0 || !(dr > 0.0) {
        return Err(Error::Mesh(format!("bad r grid: {nr} cells of {dr}")));
    }
    let r_edges: Vec<f64> = (0..=nr).map(|k| k as f64 * dr).collect();

    if spec.mu_blocks.is_empty() {
        return Err(Error::Mesh("no mu blocks".into()));
    }
    let mut mu_edges = vec![spec.mu_blocks[0].lo];
    for b in &spec.mu_blocks {
        if b.count == 0 || !(b.hi > b.lo) {
            return Err(Error::Mesh(format!("bad mu block {b:?}")));
        }
        let last = *mu_edges.last().unwrap();
        if (last - b.lo).abs() > 1e-12 {
            return Err(Error::Mesh(format!("mu block {b:?} does not start at {last}")));
        }
        let w = (b.hi - b.lo) / b.count as f64;
        for j in 1..b.count {
            mu_edges.push(b.lo + j as f64 * w);
        }
        mu_edges.push(b.hi);
    }
    if mu_edges[0] != -1.0 || *mu_edges.last().unwrap() != 1.0 {
        return Err(Error::Mesh("mu blocks must span [-1, 1]".into()));
    }
    PhaseSpaceMesh::from_edges(x_edges, r_edges, mu_edges)
}

impl PhaseSpaceMesh {
    pub fn from_edges(x_edges: Vec<f64>, r_edges: Vec<f64>, mu_edges: Vec<f64>) -> Result<Self> {
        for (name, e) in [("x", &x_edges), ("r", &r_edges), ("mu", &mu_edges)] {
            if e.len() < 2 {
                return Err(Error::Mesh(format!("{name} needs at least one cell")));
            }
            if e.iter().any(|v| !v.is_finite()) || e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Mesh(format!("{name} edges not strictly increasing")));
            }
        }
        if x_edges[0] != 0.0 {
            return Err(Error::Mesh("x must start at 0".into()));
        }
        if r_edges[0] != 0.0 {
            return Err(Error::Mesh("r must start at 0".into()));
        }
        if mu_edges[0] < -1.0 || *mu_edges.last().unwrap() > 1.0 {
            return Err(Error::Mesh("mu must lie in [-1, 1]".into()));
        }
        Ok(PhaseSpaceMesh {
            x_edges,
            r_edges,
            mu_edges,
        })
    }

    /// Uniform mesh on `[0, x_len] x [0, r_max] x [-1, 1]`.
    pub fn uniform(nx: usize, nr: usize, nmu: usize, x_len: f64, r_max: f64) -> Result<Self> {
        let lin = |n: usize, a: f64, b: f64| -> Vec<f64> {
            (0..=n).map(|j| a + (b - a) * j as f64 / n as f64).collect()
        };
        Self::from_edges(lin(nx, 0.0, x_len), lin(nr, 0.0, r_max), lin(nmu, -1.0, 1.0))
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.x_edges
    }
    pub fn r_edges(&self) -> &[f64] {
        &self.r_edges
    }
    pub fn mu_edges(&self) -> &[f64] {
        &self.mu_edges
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }
    pub fn nr(&self) -> usize {
        self.r_edges.len() - 1
    }
    pub fn nmu(&self) -> usize {
        self.mu_edges.len() - 1
    }
    pub fn n_cells(&self) -> usize {
        self.nx() * self.nr() * self.nmu()
    }

    pub fn dx(&self, i: usize) -> f64 {
        self.x_edges[i + 1] - self.x_edges[i]
    }
    pub fn dr(&self, k: usize) -> f64 {
        self.r_edges[k + 1] - self.r_edges[k]
    }
    pub fn dmu(&self, m: usize) -> f64 {
        self.mu_edges[m + 1] - self.mu_edges[m]
    }
    pub fn x_center(&self, i: usize) -> f64 {
        0.5 * (self.x_edges[i] + self.x_edges[i + 1])
    }
    pub fn r_center(&self, k: usize) -> f64 {
        0.5 * (self.r_edges[k] + self.r_edges[k + 1])
    }
    pub fn mu_center(&self, m: usize) -> f64 {
        0.5 * (self.mu_edges[m] + self.mu_edges[m + 1])
    }
    pub fn x_length(&self) -> f64 {
        *self.x_edges.last().unwrap()
    }
    pub fn r_max(&self) -> f64 {
        *self.r_edges.last().unwrap()
    }

    /// Index of the x-cell containing `x` (right-closed at the last edge).
    pub fn x_cell_of(&self, x: f64) -> Option<usize> {
        if x < 0.0 || x > self.x_length() {
            return None;
        }
        Some(
            self.x_edges
                .partition_point(|&e| e <= x)
                .saturating_sub(1)
                .min(self.nx() - 1),
        )
    }

    /// Hash of all edges, used to tie operators and caches to a mesh.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for e in [&self.x_edges, &self.r_edges, &self.mu_edges] {
            h.update((e.len() as u64).to_le_bytes());
            for v in e.iter() {
                h.update(v.to_le_bytes());
            }
        }
        truncate_digest(h)
    }

    /// Edges as CSV (`axis,index,edge`).
    pub fn edges_csv(&self) -> String {
        let mut s = String::from("axis,index,edge\n");
        for (name, e) in [("x", &self.x_edges), ("r", &self.r_edges), ("mu", &self.mu_edges)] {
            for (j, v) in e.iter().enumerate() {
                let _ = writeln!(s, "{name},{j},{v:.16e}");
            }
        }
        s
    }
}

/// First eight bytes of a SHA-256 digest.
pub(crate) fn truncate_digest(h: Sha256) -> u64 {
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Fingerprint of a list of floats.
pub(crate) fn fingerprint_f64s(values: &[f64]) -> u64 {
    let mut h = Sha256::new();
    h.update((values.len() as u64).to_le_bytes());
    for v in values {
        h.update(v.to_le_bytes());
    }
    truncate_digest(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diode400_preset() {
        let m = build_mesh(&MeshSpec::preset(MeshPreset::Diode400), 1.0).unwrap();
        assert_eq!((m.nx(), m.nr(), m.nmu()), (120, 80, 24));
        assert!((m.r_max() - 36.0).abs() < 1e-12);
        assert!((m.dr(5) - 0.45).abs() < 1e-15);
        let sum: f64 = (0..m.nx()).map(|i| m.dx(i)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((m.mu_edges()[12] - 0.7).abs() < 1e-15);
        // junction at 0.3 um lies inside the refined block
        assert!((m.dx(m.x_cell_of(0.3).unwrap()) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn diode50_preset() {
        let m = build_mesh(&MeshSpec::preset(MeshPreset::Diode50), 0.25).unwrap();
        assert_eq!((m.nx(), m.nr(), m.nmu()), (64, 80, 20));
        assert!((m.r_max() - 64.0).abs() < 1e-12);
        assert!((m.x_length() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn desk_preset_places_junction_edges() {
        let m = build_mesh(&MeshSpec::preset(MeshPreset::Desk400), 1.0).unwrap();
        assert_eq!((m.nx(), m.nr(), m.nmu()), (30, 20, 8));
        for j in [0.3, 0.7] {
            assert!(m.x_edges().iter().any(|e| (e - j).abs() < 1e-12));
        }
        for i in 0..30 {
            assert!((m.dx(i) - m.dx(29 - i)).abs() < 1e-15);
        }
        for k in 0..8 {
            assert!((m.mu_center(k) + m.mu_center(7 - k)).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_toy() {
        let m = PhaseSpaceMesh::uniform(4, 4, 4, 1.0, 4.0).unwrap();
        assert_eq!(m.n_cells(), 64);
        for i in 0..4 {
            assert!((m.dx(i) - 0.25).abs() < 1e-15);
            assert!((m.dr(i) - 1.0).abs() < 1e-15);
            assert!((m.dmu(i) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn span_mismatch_rejected() {
        let spec = MeshSpec {
            x_blocks: vec![xb(10, 0.05)],
            r_cells: Some(4),
            dr: Some(1.0),
            mu_blocks: vec![mb(4, -1.0, 1.0)],
            ..Default::default()
        };
        assert!(build_mesh(&spec, 1.0).is_err());
        assert!(build_mesh(&spec, 0.5).is_ok());
    }

    #[test]
    fn fingerprint_distinguishes_meshes() {
        let a = PhaseSpaceMesh::uniform(4, 4, 4, 1.0, 4.0).unwrap();
        let b = PhaseSpaceMesh::uniform(4, 4, 4, 1.0, 4.5).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
