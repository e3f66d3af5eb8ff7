use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use primsplit::error::{Result, SolverError};
use primsplit::experiment::{
    convergence_study, coupled_run, hypotheses_report, run_check_suite, write_study,
    write_trajectory_csv, Execution, StudyConfig,
};
use primsplit::noise::{sample_path, NoiseKind};
use primsplit::reference::run_reference;

#[derive(Parser)]
#[command(name = "primsplit", version, about = "Splitting-up scheme for the stochastic primitive equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite on the configured grid
    Check {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Simulate one path at one n and write trajectory norms
    Simulate {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        n: usize,
        /// Path index within the study
        #[arg(long, default_value_t = 0)]
        path: usize,
        #[arg(long)]
        kind: Option<NoiseKind>,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Run the convergence study and write study.csv and study.json
    Converge {
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        kind: Option<NoiseKind>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Disable the thread pool
        #[arg(long)]
        sequential: bool,
    },
    /// Estimate the hypothesis constants of the noise families
    Hypotheses {
        #[arg(long, default_value = "default")]
        config: String,
        /// One family; all built-in families when omitted
        #[arg(long)]
        kind: Option<NoiseKind>,
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Exit status for a check that ran but failed.
const CHECK_FAILED: u8 = 4;

fn load(source: &str, kind: Option<NoiseKind>) -> Result<(StudyConfig, String)> {
    let (mut cfg, mut text) = StudyConfig::load(source)?;
    if let Some(k) = kind {
        cfg.noise.kind = k;
        text = cfg.to_toml();
    }
    Ok((cfg, text))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Check { config, trials, seed } => {
            let (cfg, _) = load(&config, None)?;
            let setup = cfg.setup()?;
            let suite = run_check_suite(&setup.grid, trials, seed)?;
            for i in &suite.items {
                let mark = if i.pass { "PASS" } else { "FAIL" };
                println!("{mark} {:<24} worst {:.3e} (limit {:.1e})", i.name, i.worst, i.limit);
            }
            Ok(if suite.pass() { 0 } else { CHECK_FAILED })
        }
        Command::Simulate { config, n, path, kind, out } => {
            let (cfg, _) = load(&config, kind)?;
            if n == 0 || cfg.n_ref() % n != 0 {
                return Err(SolverError::InvalidConfig(format!(
                    "n = {n} does not divide n_ref = {}",
                    cfg.n_ref()
                )));
            }
            let setup = cfg.setup()?;
            let w = sample_path(&setup.noise, cfg.path_seed(path), cfg.fine_steps(), cfg.scheme.horizon)?;
            let reference = run_reference(&cfg.reference_config(&setup), &w)?;
            let (history, record, _) =
                coupled_run(&cfg, &setup, n, &w, &reference, (f64::INFINITY, f64::INFINITY))?;
            let file = std::fs::File::create(&out).map_err(|e| {
                SolverError::InvalidConfig(format!("cannot write {}: {e}", out.display()))
            })?;
            write_trajectory_csv(file, &history, &reference)
                .map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
            let r = record.report;
            println!(
                "n = {n}: e_n = {:.6e} (sup v {:.3e}, sup eta {:.3e}, int v {:.3e}, int eta {:.3e})",
                r.e_n, r.sup_v, r.sup_eta, r.int_v, r.int_eta
            );
            Ok(0)
        }
        Command::Converge { config, kind, paths, out, sequential } => {
            let (mut cfg, mut text) = load(&config, kind)?;
            if let Some(p) = paths {
                cfg.study.paths = p;
                text = cfg.to_toml();
            }
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let result = convergence_study(&cfg, exec)?;
            write_study(&out, &result, &cfg, &text)?;
            println!("n\tmean_e\tstd_e\tomega_fraction");
            for p in &result.per_n {
                println!("{}\t{:.6e}\t{:.3e}\t{:.3}", p.n, p.mean_e, p.std_e, p.omega_fraction);
            }
            match result.fit {
                Some(f) => println!(
                    "slope {:.4} +- {:.4}",
                    f.rate,
                    f.rate_stderr.unwrap_or(f64::NAN)
                ),
                None => println!("noise-free floor: no slope fitted"),
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Hypotheses { config, kind, samples, seed } => {
            let (cfg, _) = load(&config, None)?;
            let setup = cfg.setup()?;
            let kinds: Vec<NoiseKind> = kind.map_or(NoiseKind::ALL.to_vec(), |k| vec![k]);
            let reports =
                hypotheses_report(&setup.grid, &kinds, cfg.noise.m_w, &cfg.sigma(), samples, seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{}", r.estimate.kind.name());
                for ((name, d), (_, e)) in r.estimate.declared.named().into_iter().zip(r.estimate.estimated.named()) {
                    println!("  {name:<3} declared {d:.6e}  estimated {e:.6e}");
                }
                println!(
                    "  within 10%: {}  rate conditions: {}",
                    r.within_tolerance, r.rate_conditions
                );
                ok &= r.within_tolerance && r.rate_conditions;
            }
            Ok(if ok { 0 } else { CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SolverError::InvalidConfig(_) => 2,
                e if e.is_numerical() => 3,
                _ => 1,
            })
        }
    }
}
