use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use mclab::certificate;
use mclab::experiment::{self, ExperimentConfig};
use mclab::io;
use mclab::model::{coherence_profile, make_random_low_rank, LowRankFactorization, MatrixModel};
use mclab::sampling::{self, SamplingModel};
use mclab::solver::{self, SolverParams};
use mclab::{Error, Result};

#[derive(Parser)]
#[command(name = "mclab", version, about = "Low-rank matrix completion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coherence profile of a factorization or matrix file, as JSON.
    Analyze {
        file: PathBuf,
        /// Rank to truncate to when `file` holds a plain matrix.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
    },
    /// Draw a random low-rank instance and write its factorization.
    Generate {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value = "haar")]
        model: MatrixModel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample observed entries, with values when a factorization is given.
    Sample {
        /// Factorization file supplying shape and values.
        factorization: Option<PathBuf>,
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        n2: Option<usize>,
        /// Number of draws (expected count for bernoulli).
        #[arg(long)]
        m: usize,
        #[arg(long, default_value = "uniform-no-replace")]
        model: SamplingModel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nuclear-norm completion of an observation file.
    Solve {
        observations: PathBuf,
        /// Ground truth, for the recovery verdict.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = solver::DEFAULT_RECOVERY_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Golfing certificate for a factorization and observation file.
    Certify {
        factorization: PathBuf,
        observations: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Per-step trace CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovery phase sweep from a JSON config.
    Phase {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte-Carlo verification of every concentration bound.
    VerifyBounds {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, path: &Path) -> Result<(ExperimentConfig, Option<PathBuf>)> {
        let mut cfg = experiment::parse_config(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg.validate()?;
        let out = self.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
        Ok((cfg, out))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_string(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_factorization(path: &Path) -> Result<LowRankFactorization> {
    io::parse_factorization(&io::read_to_string(path)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { file, rank, beta } => {
            let text = io::read_to_string(&file)?;
            let fields = text.lines().next().map_or(0, |l| l.split_whitespace().count());
            let f = if fields == 4 {
                io::parse_factorization(&text)?
            } else {
                let m = io::parse_matrix(&text)?;
                let r = rank.ok_or_else(|| Error::InvalidArgument("--rank is required for a matrix file".into()))?;
                LowRankFactorization::from_matrix(&m, r)?
            };
            let c = coherence_profile(&f);
            let threshold = sampling::sample_size_threshold(f.n1(), f.n2(), f.rank(), c.mu0, c.mu1, beta)?;
            let golfing = certificate::golfing_min_m(f.n1(), f.n2(), f.rank(), c.mu0, c.mu1, beta);
            let out = json!({
                "n1": f.n1(), "n2": f.n2(), "r": f.rank(),
                "mu_u": c.mu_u, "mu_v": c.mu_v, "mu0": c.mu0, "mu1": c.mu1,
                "beta": beta,
                "sample_size_threshold": threshold,
                "golfing_min_m": golfing,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        Command::Generate { n1, n2, r, model, seed, out } => {
            let f = make_random_low_rank(n1, n2, r, model, seed)?;
            emit(out.as_deref(), &io::format_factorization(&f))?;
        }
        Command::Sample { factorization, n1, n2, m, model, seed, out } => {
            let f = factorization.as_deref().map(read_factorization).transpose()?;
            let (n1, n2) = match (&f, n1, n2) {
                (Some(f), _, _) => (f.n1(), f.n2()),
                (None, Some(a), Some(b)) => (a, b),
                _ => return Err(Error::InvalidArgument("give a factorization file or both --n1 and --n2".into())),
            };
            let obs = match model {
                SamplingModel::UniformNoReplace => sampling::sample_uniform(n1, n2, m, seed)?,
                SamplingModel::WithReplace => sampling::sample_with_replacement(n1, n2, m, seed)?,
                SamplingModel::Bernoulli => sampling::sample_bernoulli(n1, n2, m as f64 / (n1 * n2) as f64, seed)?,
            };
            let obs = match &f {
                Some(f) => obs.with_values(&f.matrix())?,
                None => obs,
            };
            emit(out.as_deref(), &io::format_observations(&obs))?;
        }
        Command::Solve { observations, truth, tol, out } => {
            let obs = io::parse_observations(&io::read_to_string(&observations)?)?;
            let res = solver::solve_nuclear_min(&obs, &SolverParams::default())?;
            let mut summary = json!({
                "iterations": res.iterations,
                "residual": res.residual,
                "objective": res.objective,
                "converged": res.converged,
            });
            if let Some(t) = truth {
                let f = read_factorization(&t)?;
                let err = solver::relative_error(&res.x, &f)?;
                summary["relative_error"] = json!(err);
                summary["recovered"] = json!(err <= tol);
            }
            if let Some(p) = out {
                io::write_string(&p, &io::format_matrix(&res.x))?;
            }
            println!("{summary}");
        }
        Command::Certify { factorization, observations, beta, out } => {
            let f = read_factorization(&factorization)?;
            let obs = io::parse_observations(&io::read_to_string(&observations)?)?;
            let (trace, verdict) = certificate::certify(&f, &obs, beta)?;
            let mut csv = String::from("k,q_k,w_fro,w_inf,step_deviation\n");
            csv.push_str(&format!("0,,{:?},{:?},\n", trace.w_fro[0], trace.w_inf[0]));
            for k in 1..=trace.p {
                csv.push_str(&format!(
                    "{k},{},{:?},{:?},{:?}\n",
                    trace.q_list[k - 1],
                    trace.w_fro[k],
                    trace.w_inf[k],
                    trace.per_step_isometry[k - 1]
                ));
            }
            if let Some(p) = out {
                io::write_string(&p, &csv)?;
            }
            let record = json!({
                "verdict_fro": verdict.verdict_fro,
                "verdict_perp": verdict.verdict_perp,
                "certified": verdict.certified,
                "fro_residual": trace.fro_residual,
                "perp_norm": trace.perp_norm,
                "big_set": verdict.big_set,
                "kernel_margin": verdict.kernel_margin,
            });
            println!("{record}");
        }
        Command::Phase { config, overrides } => {
            let (cfg, out) = overrides.apply(&config)?;
            let sweep = experiment::run_phase_sweep(&cfg)?;
            emit(out.as_deref(), &experiment::phase_csv(&sweep.points, &cfg))?;
            if let Some(p) = out {
                io::write_string(&sibling(&p, "_trials.csv"), &experiment::trials_csv(&sweep.records, &cfg))?;
            }
        }
        Command::VerifyBounds { config, overrides } => {
            let (cfg, out) = overrides.apply(&config)?;
            let reports = experiment::run_verify_suite(&cfg)?;
            emit(out.as_deref(), &experiment::bounds_csv(&reports, &cfg))?;
            for r in reports.iter().filter(|r| !r.passed()) {
                eprintln!("{}: FAIL", r.bound_name);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
