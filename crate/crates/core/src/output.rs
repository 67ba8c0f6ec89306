//! Run output tree: per-snapshot CSVs written on a background thread, plus
//! `run_meta.json`.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;

use serde::Serialize;

use crate::config::RunConfig;
use crate::driver::{RunState, RunSummary, Solver};
use crate::error::{Error, Result};
use crate::moments::{moments, pdf_slice, MomentSet, PdfSlice};
use crate::scaling::ScalingGroups;

/// Everything written for one snapshot time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time_ps: f64,
    pub moments: MomentSet,
    pub pdfs: Vec<PdfSlice>,
}

impl Snapshot {
    pub fn capture(solver: &Solver, rs: &RunState, probes_um: &[f64]) -> Result<Self> {
        let s = &solver.scaling;
        Ok(Snapshot {
            time_ps: s.time_to_ps(rs.time),
            moments: moments(&solver.mesh, &rs.state, &rs.field, &solver.band, s)?,
            pdfs: probes_um
                .iter()
                .map(|&x| pdf_slice(&solver.mesh, &rs.state, s, x))
                .collect::<Result<_>>()?,
        })
    }
}

pub fn moments_file_name(time_ps: f64) -> String {
    format!("moments_t{time_ps:.3}.csv")
}

pub fn pdf_file_name(x_um: f64, time_ps: f64) -> String {
    format!("pdf_x{x_um:.4}_t{time_ps:.3}.csv")
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes one snapshot's files into `dir`.
pub fn write_snapshot(dir: &Path, snap: &Snapshot) -> Result<Vec<PathBuf>> {
    let mut out = vec![write(dir.join(moments_file_name(snap.time_ps)), &snap.moments.to_csv())?];
    for p in &snap.pdfs {
        out.push(write(dir.join(pdf_file_name(p.x, snap.time_ps)), &p.to_csv())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub scaling: ScalingGroups,
    pub mesh_fingerprint: String,
    pub mesh_shape: [usize; 3],
    pub band: String,
    pub crate_version: String,
    pub parallel: bool,
    pub snapshot_times_ps: Vec<f64>,
    pub summary: Option<RunSummary>,
}

impl RunMeta {
    pub fn new(config: &RunConfig, solver: &Solver) -> Self {
        let m = &solver.mesh;
        RunMeta {
            config: config.clone(),
            scaling: solver.scaling,
            mesh_fingerprint: format!("{:016x}", m.fingerprint()),
            mesh_shape: [m.nx(), m.nr(), m.nmu()],
            band: solver.band.name().to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: crate::par::is_parallel(),
            snapshot_times_ps: Vec::new(),
            summary: None,
        }
    }

    /// Keeps at most `n` residual samples, always including the last.
    pub fn thin_history(&mut self, n: usize) {
        if let Some(s) = &mut self.summary {
            let h = &mut s.residual_history;
            if h.len() > n && n > 1 {
                let stride = h.len().div_ceil(n - 1);
                let last = *h.last().unwrap();
                let mut kept: Vec<_> = h.iter().step_by(stride).copied().collect();
                if kept.last() != Some(&last) {
                    kept.push(last);
                }
                *h = kept;
            }
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        write(dir.join("run_meta.json"), &text)
    }
}

/// Background writer. Snapshots are moved in; files appear in order.
pub struct OutputWriter {
    dir: PathBuf,
    tx: Option<mpsc::Sender<Snapshot>>,
    handle: Option<JoinHandle<Result<Vec<PathBuf>>>>,
    times: Vec<f64>,
}

impl OutputWriter {
    pub fn spawn(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (tx, rx) = mpsc::channel::<Snapshot>();
        let d = dir.to_path_buf();
        let handle = std::thread::Builder::new()
            .name("dgbp-writer".into())
            .spawn(move || {
                let mut files = Vec::new();
                for snap in rx {
                    files.extend(write_snapshot(&d, &snap)?);
                }
                Ok(files)
            })
            .map_err(|e| Error::io(dir, e))?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            tx: Some(tx),
            handle: Some(handle),
            times: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Queues a snapshot. A failed writer surfaces its error at `finish`.
    pub fn send(&mut self, snap: Snapshot) {
        self.times.push(snap.time_ps);
        if let Some(tx) = &self.tx {
            // A closed channel means the writer already failed.
            let _ = tx.send(snap);
        }
    }

    /// Drains the queue, then writes `run_meta.json`. Returns every file.
    pub fn finish(mut self, mut meta: RunMeta) -> Result<Vec<PathBuf>> {
        drop(self.tx.take());
        let mut files = match self.handle.take().map(JoinHandle::join) {
            Some(Ok(r)) => r?,
            Some(Err(_)) => return Err(Error::Config("output writer panicked".into())),
            None => Vec::new(),
        };
        meta.snapshot_times_ps = std::mem::take(&mut self.times);
        meta.thin_history(2000);
        files.push(meta.write(&self.dir)?);
        Ok(files)
    }
}

impl Drop for OutputWriter {
    fn drop(&mut self) {
        drop(self.tx.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Builds, runs and writes a full simulation for `cfg` into
/// `cfg.output.dir`. Returns the final state, summary and written files.
pub fn run_to_dir(cfg: &RunConfig) -> Result<(RunState, RunSummary, Vec<PathBuf>)> {
    let dir = cfg.output.dir.clone();
    let cache = cfg.output.collision_cache.then_some(dir.as_path());
    let solver = Solver::from_config(cfg, cache)?;
    log::info!(
        "mesh {}x{}x{}, band {}, bias {} V",
        solver.mesh.nx(),
        solver.mesh.nr(),
        solver.mesh.nmu(),
        solver.band.name(),
        cfg.device.bias_v
    );
    let mut writer = OutputWriter::spawn(&dir)?;
    let s = &solver.scaling;
    let t_max = s.time_from_ps(cfg.time.t_max_ps);
    let cadence = s.time_from_ps(cfg.output.snapshot_every_ps);
    let probes = cfg.output.pdf_probes_um.clone();
    let init = solver.initialize()?;
    let (fin, summary) = solver.run(init, t_max, cadence, |rs| {
        writer.send(Snapshot::capture(&solver, rs, &probes)?);
        Ok(())
    })?;
    let mut meta = RunMeta::new(cfg, &solver);
    meta.summary = Some(summary.clone());
    let files = writer.finish(meta)?;
    Ok((fin, summary, files))
}
