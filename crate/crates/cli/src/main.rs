use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mbdl_core::config::{self, ConfigMap, ExperimentConfig};
use mbdl_core::error::Error;
use mbdl_core::harness::{self, localized_window_mean, read_momentum_csv};
use mbdl_core::observables::jsd;
use mbdl_core::units::derive_scaled;

#[derive(Parser)]
#[command(name = "mbdl", version, about = "Kicked Tonks-Girardeau gas simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset applied before the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a key, e.g. `--set grid.n_dim=4096`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for random kick schedules.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn map(&self) -> Result<ConfigMap, Error> {
        let mut o = self.overrides.clone();
        if let Some(out) = &self.out {
            o.push(format!("output.dir={}", out.display()));
        }
        if let Some(seed) = self.seed {
            o.push(format!("kick.seed={seed}"));
        }
        config::load(self.preset.as_deref(), self.config.as_deref(), &o)
    }

    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::from_map(&self.map()?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    /// JWT fast and reference paths against two-particle quadrature.
    ObdmN2,
    /// One delta kick from rest against Bessel populations.
    Bessel,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dimensionless constants derived from the physical parameters.
    DeriveParams(ConfigArgs),
    /// Solve for the initial orbitals and write ground-state observables.
    GroundState(ConfigArgs),
    /// Run a kicked evolution.
    Run(ConfigArgs),
    /// Repeat a run over values of one key.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// n_dim, N, trap.kind or kick.K.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run a brute-force consistency check.
    Oracle {
        #[arg(value_enum)]
        mode: OracleMode,
        #[arg(long, default_value_t = 20)]
        cases: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Jensen-Shannon divergence between two saved `nk_*.csv` files.
    Compare { a: PathBuf, b: PathBuf },
    /// List built-in presets.
    Presets,
}

fn derive(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let p = &cfg.physical;
    let s = derive_scaled(p)?;
    println!("preset          {}", cfg.preset);
    println!("lattice_m       {:e}", p.lattice_constant);
    println!("mass_kg         {:e}", p.particle_mass);
    println!("recoil_hz       {:.4}", p.recoil_rate() / (2.0 * std::f64::consts::PI));
    println!("hbar_eff        {:.6}", s.hbar_eff);
    println!("kappa           {:.6}", s.kappa);
    println!("K_derived       {:.6}", s.kick_strength);
    println!("K_used          {:.6}", cfg.kick.kick_strength);
    println!("pulse_fraction  {:.6}", cfg.kick.pulse_fraction);
    println!("trap            {} v1={} v2={}", cfg.trap.kind, cfg.trap.v1_er, cfg.trap.v2_er);
    println!("config_hash     {}", cfg.source.hash());
    Ok(())
}

fn ground_state(args: &ConfigArgs) -> Result<(), Error> {
    let mut map = args.map()?;
    map.set("kick.n", "0")?;
    map.set("record.ground", "true")?;
    map.set("record.snapshots", "0")?;
    let cfg = ExperimentConfig::from_map(&map)?;
    let out = harness::run_experiment(&cfg)?;
    for (i, e) in out.eigen_energies_er.iter().enumerate() {
        println!("{i:4} {e:.8e}");
    }
    let row = &out.series.rows[0];
    println!("energy_er {:.6e}", row.energy_er);
    println!("output {}", out.dir.display());
    Ok(())
}

fn print_run(out: &harness::RunOutput, cfg: &ExperimentConfig) {
    if let Some(last) = out.series.rows.last() {
        println!("final n_p {} energy_er {:.6e}", last.n_p, last.energy_er);
    }
    match localized_window_mean(&out.series, cfg.late_window) {
        Ok((m, d)) => println!(
            "late window [{}, {}] mean {:.6e} drift {:.3e}",
            cfg.late_window.0, cfg.late_window.1, m, d
        ),
        Err(e) => println!("late window: {e}"),
    }
    println!("max boundary occupancy {:.3e}", out.manifest.max_boundary_occupancy);
    println!("output {}", out.dir.display());
}

fn oracle(mode: OracleMode, cases: u64, seed: u64) -> Result<(), Error> {
    match mode {
        OracleMode::ObdmN2 => {
            let mut worst = 0.0f64;
            for c in 0..cases {
                worst = worst.max(harness::oracle_self_check(seed.wrapping_add(c))?);
            }
            println!("cases {cases} max |rho_jwt - rho_quadrature| {worst:.3e}");
            if worst > 1e-8 {
                return Err(Error::invariant("oracle agreement", worst, 1e-8));
            }
        }
        OracleMode::Bessel => {
            let rows = harness::bessel_comparison(10)?;
            let mut worst = 0.0f64;
            for (m, p, e) in rows {
                worst = worst.max((p - e).abs());
                println!("{m:4} {p:.12e} {e:.12e}");
            }
            println!("max deviation {worst:.3e}");
            if worst > 1e-10 {
                return Err(Error::invariant("Bessel populations", worst, 1e-10));
            }
        }
    }
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Result<(), Error> {
    let (p, q) = (read_momentum_csv(a)?, read_momentum_csv(b)?);
    println!("{:.12e}", jsd(&p, &q)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::DeriveParams(a) => derive(&a),
        Command::GroundState(a) => ground_state(&a),
        Command::Run(a) => {
            let cfg = a.resolve()?;
            let out = harness::run_experiment(&cfg)?;
            print_run(&out, &cfg);
            Ok(())
        }
        Command::Sweep { cfg, axis, values } => {
            let map = cfg.map()?;
            let (root, rows) = harness::sweep(&map, &axis, &values, None)?;
            for r in &rows {
                match (&r.localized, &r.error) {
                    (Some((m, d)), _) => println!("{} = {}: {m:.6e} (drift {d:.3e})", axis, r.value),
                    (_, Some(e)) => println!("{} = {}: failed: {e}", axis, r.value),
                    _ => {}
                }
            }
            println!("summary {}", root.join(harness::SWEEP_SUMMARY).display());
            Ok(())
        }
        Command::Oracle { mode, cases, seed } => oracle(mode, cases, seed),
        Command::Compare { a, b } => compare(&a, &b),
        Command::Presets => {
            for name in config::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
