//! Run configuration (JSON). Physical inputs are SI, eV, V and ps.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{MeshPreset, MeshSpec};
use crate::scaling::{MaterialParams, ReferenceScales};
use crate::transport::UpwindMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DevicePreset {
    /// 1 um n+-n-n+ diode with a 400 nm channel.
    Diode400,
    /// 0.25 um diode with a 50 nm channel.
    Diode50,
}

impl DevicePreset {
    /// `(length_um, junctions_um, doping_m3)`.
    pub fn geometry(self) -> (f64, Vec<f64>, Vec<f64>) {
        match self {
            DevicePreset::Diode400 => (1.0, vec![0.3, 0.7], vec![5e23, 2e21, 5e23]),
            DevicePreset::Diode50 => (0.25, vec![0.1, 0.15], vec![5e24, 1e21, 5e24]),
        }
    }

    pub fn mesh(self) -> MeshPreset {
        match self {
            DevicePreset::Diode400 => MeshPreset::Diode400,
            DevicePreset::Diode50 => MeshPreset::Diode50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub preset: Option<DevicePreset>,
    pub length_um: Option<f64>,
    pub junctions_um: Option<Vec<f64>>,
    pub doping_m3: Option<Vec<f64>>,
    /// Potential of the right contact, V; the left contact is grounded.
    pub bias_v: f64,
    pub collisions: bool,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            preset: Some(DevicePreset::Diode400),
            length_um: None,
            junctions_um: None,
            doping_m3: None,
            bias_v: 0.5,
            collisions: true,
        }
    }
}

impl DeviceConfig {
    /// Explicit fields override the preset.
    pub fn geometry(&self) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (l, j, d) = match self.preset {
            Some(p) => {
                let (l, j, d) = p.geometry();
                (Some(l), Some(j), Some(d))
            }
            None => (None, None, None),
        };
        let length = self.length_um.or(l).ok_or_else(|| Error::Config("device.length_um missing".into()))?;
        let junctions = self.junctions_um.clone().or(j).unwrap_or_default();
        let doping = self
            .doping_m3
            .clone()
            .or(d)
            .ok_or_else(|| Error::Config("device.doping_m3 missing".into()))?;
        if doping.len() != junctions.len() + 1 {
            return Err(Error::Config(format!(
                "{} doping regions for {} junctions",
                doping.len(),
                junctions.len()
            )));
        }
        if junctions.iter().any(|&x| !(x > 0.0 && x < length)) {
            return Err(Error::Config("junctions must lie inside the device".into()));
        }
        Ok((length, junctions, doping))
    }
}

/// Band selection: `parabolic`, `kane` or `table:<path>` on the command line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BandConfig {
    #[default]
    Parabolic,
    Kane,
    Table {
        path: PathBuf,
        #[serde(default = "yes")]
        allow_extrapolation: bool,
    },
}

fn yes() -> bool {
    true
}


impl FromStr for BandConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabolic" => Ok(BandConfig::Parabolic),
            "kane" => Ok(BandConfig::Kane),
            _ => match s.strip_prefix("table:") {
                Some(p) if !p.is_empty() => Ok(BandConfig::Table {
                    path: PathBuf::from(p),
                    allow_extrapolation: true,
                }),
                _ => Err(Error::Config(format!(
                    "unknown band `{s}` (parabolic, kane, table:<path>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RkOrder {
    #[default]
    #[serde(rename = "2")]
    Ssp2,
    #[serde(rename = "3")]
    Ssp3,
}

impl RkOrder {
    pub fn stages(self) -> u64 {
        match self {
            RkOrder::Ssp2 => 2,
            RkOrder::Ssp3 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max_ps: f64,
    pub cfl: f64,
    pub rk_order: RkOrder,
    pub steady_tol: f64,
    pub upwind: UpwindChoice,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t_max_ps: 5.0,
            cfl: 0.3,
            rk_order: RkOrder::Ssp2,
            steady_tol: 1e-6,
            upwind: UpwindChoice::Pointwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpwindChoice {
    #[default]
    Pointwise,
    Cell,
}

impl From<UpwindChoice> for UpwindMode {
    fn from(u: UpwindChoice) -> Self {
        match u {
            UpwindChoice::Pointwise => UpwindMode::Pointwise,
            UpwindChoice::Cell => UpwindMode::CellSign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_every_ps: f64,
    /// x positions (um) of the pdf slices written with every snapshot.
    pub pdf_probes_um: Vec<f64>,
    pub collision_cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            snapshot_every_ps: 1.0,
            pdf_probes_um: Vec::new(),
            collision_cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub material: MaterialParams,
    pub scales: ReferenceScales,
    pub band: BandConfig,
    pub mesh: MeshSpec,
    pub time: TimeConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative band-table paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg =
            Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let BandConfig::Table { path: p, .. } = &mut cfg.band {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Mesh spec with the device preset's mesh filled in when none is given.
    pub fn mesh_spec(&self) -> MeshSpec {
        let m = &self.mesh;
        if m.preset.is_none() && m.x_blocks.is_empty() && m.mu_blocks.is_empty() {
            if let Some(p) = self.device.preset {
                return MeshSpec {
                    preset: Some(p.mesh()),
                    r_cells: m.r_cells,
                    dr: m.dr,
                    ..Default::default()
                };
            }
        }
        m.clone()
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.scales.validate()?;
        let t = &self.time;
        if !(t.t_max_ps >= 0.0) {
            return Err(Error::Config("time.t_max_ps must be >= 0".into()));
        }
        if !(t.cfl > 0.0 && t.cfl <= 1.0) {
            return Err(Error::Config("time.cfl must be in (0, 1]".into()));
        }
        if !(self.output.snapshot_every_ps > 0.0) {
            return Err(Error::Config("output.snapshot_every_ps must be positive".into()));
        }
        self.device.geometry()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json() {
        let c = RunConfig::from_json(
            r#"{"device": {"preset": "diode50", "bias_v": 0.25},
                "band": {"kind": "kane"},
                "time": {"t_max_ps": 1.0, "rk_order": "3"}}"#,
        )
        .unwrap();
        assert_eq!(c.device.preset, Some(DevicePreset::Diode50));
        assert_eq!(c.band, BandConfig::Kane);
        assert_eq!(c.time.rk_order, RkOrder::Ssp3);
        assert_eq!(c.time.cfl, 0.3);
        assert_eq!(c.mesh_spec().preset, Some(MeshPreset::Diode50));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(RunConfig::from_json(r#"{"device": {"voltage": 1}}"#).is_err());
        let mut c = RunConfig::default();
        c.time.cfl = 1.5;
        assert!(c.validate().is_err());
        c.time.cfl = 0.3;
        c.device.doping_m3 = Some(vec![1e23]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn band_strings() {
        assert_eq!("kane".parse::<BandConfig>().unwrap(), BandConfig::Kane);
        assert!(matches!(
            "table:a/b.band".parse::<BandConfig>().unwrap(),
            BandConfig::Table { .. }
        ));
        assert!("table:".parse::<BandConfig>().is_err());
        assert!("epm".parse::<BandConfig>().is_err());
    }
}
