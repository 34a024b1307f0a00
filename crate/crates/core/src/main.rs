use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emitter_errors::config::{EnvConfig, HamiltonianKind, RunConfig};
use emitter_errors::run::{self, RunOutput};
use emitter_errors::{Error, Result};

#[derive(Parser)]
#[command(name = "emitter-errors", version, about = "Error-pattern distributions of emitted photonic cluster states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact probabilities of all error patterns.
    Distribution(Common),
    /// Distribution plus the Markovian-form bounds (pure dephasing only).
    Bounds(Common),
    /// Distribution plus the p^h (1-p)^(n-h) fits.
    FitMarkov(Common),
    /// Distribution plus the X/Y/Z trajectory-model fit.
    FitTrajectory(Common),
    /// Probability of one pattern (and its bound) over several bath sizes.
    Scaling {
        #[command(flatten)]
        common: Common,
        /// Bath sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
        sweep: Vec<usize>,
        /// Tracked pattern, written α_n … α_1.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Distribution plus the bath polarization conditioned on each pattern.
    Polarization(Common),
    /// Compare the engine with the brute-force state-vector oracle.
    OracleCheck(Common),
    /// Run one of the reference configurations.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(run::RECIPES))]
        recipe: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HamiltonianArg {
    Full,
    PureDephasing,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    PlotData,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    n_photons: Option<usize>,
    /// Number of bath spins N.
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    a_over_omega: Option<f64>,
    #[arg(long)]
    dipolar_ratio: Option<f64>,
    #[arg(long)]
    omega_ratio: Option<f64>,
    #[arg(long, value_enum)]
    hamiltonian: Option<HamiltonianArg>,
    /// Uniform mixture over the sector Σ I^y = m.
    #[arg(long, allow_negative_numbers = true, conflicts_with_all = ["pure_env", "ensemble_file", "random_env"])]
    sector: Option<i32>,
    /// Product bath state, site N first, '1' for I^y = -1.
    #[arg(long, conflicts_with_all = ["ensemble_file", "random_env"])]
    pure_env: Option<String>,
    /// JSON list of {"weight", "amplitudes": [[re, im], ...]} members.
    #[arg(long, conflicts_with = "random_env")]
    ensemble_file: Option<PathBuf>,
    /// Random pure bath state drawn from --seed.
    #[arg(long)]
    random_env: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    emit: Option<Emit>,
}

impl Common {
    fn config(&self, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut c = match (base, &self.config) {
            (Some(_), Some(_)) => return Err(Error::Config("--config cannot be combined with a recipe".into())),
            (Some(c), None) => c,
            (None, Some(path)) => RunConfig::load(path)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(v) = self.n_photons {
            c.n_photons = v;
        }
        if let Some(v) = self.sites {
            c.bath.n_sites = v;
        }
        if let Some(v) = self.a_over_omega {
            c.bath.a_over_omega = v;
        }
        if let Some(v) = self.dipolar_ratio {
            c.bath.dipolar_ratio = v;
        }
        if let Some(v) = self.omega_ratio {
            c.bath.omega_ratio = v;
        }
        if let Some(h) = self.hamiltonian {
            c.hamiltonian = match h {
                HamiltonianArg::Full => HamiltonianKind::Full,
                HamiltonianArg::PureDephasing => HamiltonianKind::PureDephasing,
            };
        }
        if let Some(m) = self.sector {
            c.env_state = EnvConfig::SectorUniform(m);
        }
        if let Some(b) = &self.pure_env {
            c.env_state = EnvConfig::Pure(b.clone());
        }
        if let Some(p) = &self.ensemble_file {
            c.env_state = EnvConfig::EnsembleFile(p.clone());
        }
        if self.random_env {
            c.env_state = EnvConfig::RandomPure;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.emit.is_some() {
            c.outputs.plot_data = true;
        }
        Ok(c)
    }
}

fn report(out: &RunOutput, files: &[PathBuf]) {
    let d = &out.distribution;
    println!(
        "n = {}, N = {}, Ω_eff = {:.6}, δ = {:.4}",
        d.n, out.config.bath.n_sites, out.physics.omega_eff, out.physics.delta
    );
    println!("Σ P = {:.12}, normalization residual = {:.3e}", d.probs.iter().sum::<f64>(), d.normalization_residual());
    if let Some(b) = &out.bounds {
        println!("p_+ = {:.6e}, p_- = {:.6e}", b.p_plus, b.p_minus);
        for s in &b.sectors {
            println!("  sector m = {}: weight {:.4}, p_+ = {:.6e}, p_- = {:.6e}", s.m, s.weight, s.p_plus, s.p_minus);
        }
    }
    if let Some(m) = &out.markov {
        println!(
            "markov fit p = {:.6e} (bounding p = {:.6e}, attainable = {:?})",
            m.least_squares_log.param("p"),
            m.bounding.param("p"),
            m.bounding.attainable
        );
    }
    if let Some(t) = &out.trajectory {
        println!(
            "trajectory fit p_x = {:.6e}, p_y = {:.6e}, p_z = {:.6e}",
            t.param("p_x"),
            t.param("p_y"),
            t.param("p_z")
        );
    }
    if let Some(s) = &out.scaling {
        for p in &s.points {
            println!("  N = {:2}: P({}) = {:.6e}, bound_eq6 = {}", p.n_sites, s.pattern, p.p_exact, run::fmt_opt(p.bound_eq6));
        }
        for (name, f) in [("exact form", &s.exact_fit), ("bound form", &s.bound_fit)] {
            if let Some(f) = f {
                println!("  {name}: {:?}", f.parameters);
            }
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    for msg in &out.invariant_failures {
        eprintln!("invariant violated: {msg}");
    }
}

fn execute(cli: Cli) -> Result<()> {
    let (common, base) = match &cli.command {
        Command::Reproduce { recipe, common } => (common, Some(run::recipe(recipe)?)),
        Command::Distribution(c)
        | Command::Bounds(c)
        | Command::FitMarkov(c)
        | Command::FitTrajectory(c)
        | Command::Polarization(c)
        | Command::OracleCheck(c) => (c, None),
        Command::Scaling { common, .. } => (common, None),
    };
    let mut cfg = common.config(base)?;
    match &cli.command {
        Command::Bounds(_) => cfg.outputs.bounds = true,
        Command::FitMarkov(_) => cfg.outputs.markov_fit = true,
        Command::FitTrajectory(_) => cfg.outputs.trajectory_fit = true,
        Command::Polarization(_) => cfg.outputs.polarization = true,
        Command::Scaling { sweep, pattern, .. } => {
            cfg.outputs.scaling_sweep = sweep.clone();
            if let Some(p) = pattern {
                cfg.outputs.scaling_pattern = Some(p.clone());
            } else if cfg.outputs.scaling_pattern.is_none() {
                return Err(Error::Config("--pattern is required for a scaling sweep".into()));
            }
        }
        Command::OracleCheck(_) => {
            let r = run::oracle_check(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            return if r.passed {
                Ok(())
            } else {
                Err(Error::InvariantViolation(format!(
                    "engine deviates from the oracle by {:.3e}",
                    r.engine_deviation.max(r.factorized_deviation.unwrap_or(0.0))
                )))
            };
        }
        _ => {}
    }
    let out = run::run(&cfg)?;
    let files = run::write_outputs(&out, &common.out)?;
    report(&out, &files);
    if out.invariant_failures.is_empty() {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!("{} invariant check(s) failed", out.invariant_failures.len())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e) as u8)
        }
    }
}
