use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgbp::bands::{load_band_file, write_angular_file, write_radial_file, BandFile, GridSampler, SyntheticBand};
use dgbp::config::{BandConfig, RunConfig};
use dgbp::driver::band_from_config;
use dgbp::mesh::{build_mesh, MeshPreset};
use dgbp::scaling::derive_scaling;
use dgbp::{Error, Result};

#[derive(Parser)]
#[command(name = "dgbp", version, about = "DG Boltzmann-Poisson solver for 1D silicon diodes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation from a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Right-contact potential, V.
        #[arg(long)]
        bias: Option<f64>,
        /// parabolic | kane | table:<path>
        #[arg(long)]
        band: Option<BandConfig>,
        /// diode400 | diode50 | desk400
        #[arg(long)]
        mesh_preset: Option<MeshPreset>,
        /// Final time, ps.
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        cfl: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the derived scaling groups and exit.
        #[arg(long)]
        print_scaling: bool,
        /// Print the mesh edges and exit.
        #[arg(long)]
        print_mesh: bool,
        #[arg(long)]
        no_collision_cache: bool,
    },
    /// Tabulate eps(r) and eps'(r) for the band models as CSV.
    Bands {
        /// Limit to one band; default is parabolic and kane.
        #[arg(long)]
        band: Option<BandConfig>,
        #[arg(long, default_value_t = 36.0)]
        rmax: f64,
        #[arg(long, default_value_t = 361)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spherically average an angular band file into a radial table.
    Average {
        bandfile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic anisotropic angular band file.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 64.0)]
        rmax: f64,
        #[arg(long, default_value_t = 65)]
        points: usize,
        #[arg(long, default_value_t = 0.05)]
        strength: f64,
    },
    /// Run the built-in invariant checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            bias,
            band,
            mesh_preset,
            tmax,
            cfl,
            seed,
            print_scaling,
            print_mesh,
            no_collision_cache,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(v) = out {
                cfg.output.dir = v;
            }
            if let Some(v) = bias {
                cfg.device.bias_v = v;
            }
            if let Some(v) = band {
                cfg.band = v;
            }
            if let Some(p) = mesh_preset {
                cfg.mesh.preset = Some(p);
                cfg.mesh.x_blocks.clear();
                cfg.mesh.mu_blocks.clear();
            }
            if let Some(v) = tmax {
                cfg.time.t_max_ps = v;
            }
            if let Some(v) = cfl {
                cfg.time.cfl = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if no_collision_cache {
                cfg.output.collision_cache = false;
            }
            cfg.validate()?;
            if print_scaling || print_mesh {
                let s = derive_scaling(&cfg.material, &cfg.scales)?;
                if print_scaling {
                    println!("{}", s.describe());
                }
                if print_mesh {
                    let (len, _, _) = cfg.device.geometry()?;
                    let mesh = build_mesh(&cfg.mesh_spec(), s.length_from_um(len))?;
                    print!("{}", mesh.edges_csv());
                }
                return Ok(true);
            }
            let (_, summary, files) = dgbp::output::run_to_dir(&cfg)?;
            println!(
                "{} steps to t = {:.3} ps, residual {:.3e}, {} files in {}",
                summary.steps,
                summary.final_time,
                summary.final_residual,
                files.len(),
                cfg.output.dir.display()
            );
            Ok(true)
        }
        Cmd::Bands {
            band,
            rmax,
            points,
            out,
        } => {
            let s = derive_scaling(&Default::default(), &Default::default())?;
            let choices = match band {
                Some(b) => vec![b],
                None => vec![BandConfig::Parabolic, BandConfig::Kane],
            };
            let bands = choices
                .iter()
                .map(|c| band_from_config(c, &s))
                .collect::<Result<Vec<_>>>()?;
            let mut text = String::from("r");
            for b in &bands {
                text.push_str(&format!(",eps_{0},deps_{0}", b.name()));
            }
            text.push('\n');
            let n = points.max(2);
            for j in 0..n {
                let r = rmax * j as f64 / (n - 1) as f64;
                text.push_str(&format!("{r:.16e}"));
                for b in &bands {
                    let v = b.eval(r)?;
                    text.push_str(&format!(",{:.16e},{:.16e}", v.eps, v.deps_dr));
                }
                text.push('\n');
            }
            emit(out.as_ref(), &text)?;
            Ok(true)
        }
        Cmd::Average { bandfile, out } => {
            let table = match load_band_file(&bandfile)? {
                BandFile::Radial(t) => t,
                BandFile::Angular(g) => g.table()?,
            };
            match &out {
                Some(p) => write_radial_file(p, &table)?,
                None => {
                    let mut text = String::from("r,eps,deviation\n");
                    for j in 0..table.len() {
                        text.push_str(&format!(
                            "{:.16e},{:.16e},{:.16e}\n",
                            table.r_nodes[j], table.eps_values[j], table.deviation[j]
                        ));
                    }
                    emit(None, &text)?;
                }
            }
            Ok(true)
        }
        Cmd::Synth {
            out,
            rmax,
            points,
            strength,
        } => {
            let s = derive_scaling(&Default::default(), &Default::default())?;
            let band = SyntheticBand::Anisotropic {
                alpha: s.kane_alpha,
                strength,
                r_ref: rmax,
            };
            let n = points.max(2);
            let r: Vec<f64> = (0..n).map(|j| rmax * j as f64 / (n - 1) as f64).collect();
            write_angular_file(&out, &GridSampler::from_sampler(&band, &r)?)?;
            Ok(true)
        }
        Cmd::Check { seed } => {
            let mut ok = true;
            for c in dgbp::checks::run_all(seed)? {
                println!("{c}");
                ok &= c.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
