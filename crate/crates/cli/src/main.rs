use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use baker_lab::config::ExperimentConfig;
use baker_lab::contracting::ContractionKind;
use baker_lab::runner::{run, Subcommand};
use baker_lab::Error;
use clap::{Parser, ValueEnum};

/// Thread count for the parallel stages; unset means one per core.
const THREADS_VAR: &str = "BAKER_LAB_THREADS";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Norms,
    LyCheck,
    Spectrum,
    Correlations,
    Clt,
    Ldp,
    SingularLimit,
    Contracting,
    All,
}

impl Command {
    fn sub(self) -> Subcommand {
        match self {
            Command::Norms => Subcommand::Norms,
            Command::LyCheck => Subcommand::LyCheck,
            Command::Spectrum => Subcommand::Spectrum,
            Command::Correlations => Subcommand::Correlations,
            Command::Clt => Subcommand::Clt,
            Command::Ldp => Subcommand::Ldp,
            Command::SingularLimit => Subcommand::SingularLimit,
            Command::Contracting => Subcommand::Contracting,
            Command::All => Subcommand::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Contraction {
    Half,
    Affine,
    Quad,
}

#[derive(Debug, Parser)]
#[command(name = "baker-lab", version, about = "Transfer-operator experiments for generalized baker's maps")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Birkhoff length for the CLT.
    #[arg(long)]
    n: Option<usize>,
    /// Orbit count for the CLT.
    #[arg(long)]
    count: Option<usize>,
    /// Contraction used by `contracting`.
    #[arg(long, value_enum)]
    map: Option<Contraction>,
    /// Hölder exponent: the dual norm for `contracting`, α otherwise.
    #[arg(long)]
    alpha: Option<f64>,
    /// Largest iterate checked by `ly-check`, `singular-limit` and `contracting`.
    #[arg(long)]
    nmax: Option<usize>,
}

fn configure(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.limits.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(n) = cli.n {
        cfg.limits.n = n;
    }
    if let Some(c) = cli.count {
        cfg.limits.count = c;
    }
    if let Some(m) = cli.map {
        cfg.contracting.map = match m {
            Contraction::Half => ContractionKind::Half,
            Contraction::Affine => ContractionKind::Affine,
            Contraction::Quad => ContractionKind::Quad,
        };
    }
    let contracting_only = matches!(cli.command, Command::Contracting);
    if let Some(a) = cli.alpha {
        cfg.contracting.alpha = a;
        if !contracting_only {
            cfg.norms.alpha = a;
        }
    }
    if let Some(n) = cli.nmax {
        cfg.ly.n_max = n;
        cfg.singular.n_max = n;
        cfg.contracting.n_max = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(Error::InvalidMap(_) | Error::InvalidParameter(_) | Error::Parse(_) | Error::Io(_))
        )
    })
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    let reports = run(cli.command.sub(), cfg)?;
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(cfg.output.join("config.toml"), cfg.to_toml())?;
    let mut ok = true;
    for r in &reports {
        r.write(&cfg.output)?;
        println!("{:<15} {} ({} assertions, {} failed)", r.subcommand, if r.passed { "PASS" } else { "FAIL" },
            r.assertions.len(), r.failures);
        for a in r.failed() {
            println!("  [{}] {}: {} > {}{}", a.tag, a.id, a.lhs, a.rhs,
                a.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default());
        }
        ok &= r.passed;
    }
    println!("config {} -> {}", &reports[0].config_hash[..12], cfg.output.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(THREADS_VAR).ok().and_then(|v| v.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match execute(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
