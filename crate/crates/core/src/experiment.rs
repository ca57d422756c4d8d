//! Config-driven experiments: phase sweeps and the bound verification suite.
//!
//! Trial `t` of a run with seed `s` builds its instance from
//! `derive_seed(s, t)` and its sample from the same derived seed, so the
//! instance is shared across the grid and uniform samples are nested in `m`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds::montecarlo::{self, BoundReport};
use crate::certificate;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{make_random_low_rank, MatrixModel};
use crate::rng::{derive_seed, next_unit};
use crate::sampling::{sample_bernoulli, sample_uniform, sample_with_replacement, ObservationSet, SamplingModel};
use crate::solver::{self, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// Sample counts.
    M(Vec<usize>),
    /// Sampling fractions of `n1·n2`.
    P(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub recovery: f64,
    pub solver: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            recovery: solver::DEFAULT_RECOVERY_TOL,
            solver: SolverParams::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub matrix_model: MatrixModel,
    pub sampling_model: SamplingModel,
    pub grid: Option<Grid>,
    pub beta: f64,
    pub trials: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub output_path: Option<String>,
    pub certify: bool,
}

impl ExperimentConfig {
    /// Config with defaults for everything but the shape.
    pub fn new(n1: usize, n2: usize, r: usize) -> Self {
        Self {
            n1,
            n2,
            r,
            matrix_model: MatrixModel::Haar,
            sampling_model: SamplingModel::UniformNoReplace,
            grid: None,
            beta: 2.0,
            trials: 100,
            seed: 0,
            tolerances: Tolerances::default(),
            output_path: None,
            certify: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n1 == 0 {
            errs.push("n1: must be positive".to_string());
        }
        if self.n2 == 0 {
            errs.push("n2: must be positive".to_string());
        }
        if self.r == 0 {
            errs.push("r: must be positive".to_string());
        }
        if !(self.r <= self.n1 && self.n1 <= self.n2) {
            errs.push(format!("shape: need r <= n1 <= n2, got r={}, n1={}, n2={}", self.r, self.n1, self.n2));
        }
        if !(self.beta > 1.0) || !self.beta.is_finite() {
            errs.push(format!("beta: must exceed 1, got {}", self.beta));
        }
        if self.trials == 0 {
            errs.push("trials: must be at least 1".to_string());
        }
        for (name, v) in [("tolerances.recovery", self.tolerances.recovery), ("tolerances.solver", self.tolerances.solver)] {
            if !(v > 0.0) || !v.is_finite() {
                errs.push(format!("{name}: must be positive, got {v}"));
            }
        }
        let cells = self.n1 * self.n2;
        match &self.grid {
            Some(Grid::M(ms)) => {
                if ms.is_empty() {
                    errs.push("m_grid: must be nonempty".to_string());
                }
                if ms.contains(&0) {
                    errs.push("m_grid: entries must be positive".to_string());
                }
                if self.sampling_model == SamplingModel::UniformNoReplace {
                    if let Some(m) = ms.iter().find(|&&m| m > cells) {
                        errs.push(format!("m_grid: {m} exceeds n1*n2 = {cells} without replacement"));
                    }
                }
                if self.sampling_model == SamplingModel::Bernoulli {
                    if let Some(m) = ms.iter().find(|&&m| m > cells) {
                        errs.push(format!("m_grid: {m} exceeds n1*n2 = {cells} for bernoulli sampling"));
                    }
                }
            }
            Some(Grid::P(ps)) => {
                if ps.is_empty() {
                    errs.push("p_grid: must be nonempty".to_string());
                }
                if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                    errs.push(format!("p_grid: entries must lie in (0, 1], got {p}"));
                }
            }
            None => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

const KEYS: &[&str] = &[
    "n1",
    "n2",
    "r",
    "matrix_model",
    "sampling_model",
    "m_grid",
    "p_grid",
    "beta",
    "trials",
    "seed",
    "tolerances",
    "output_path",
    "certify",
];

fn expand_range(s: &str, errs: &mut Vec<String>, field: &str) -> Vec<f64> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = if parts.len() == 3 {
        parts.iter().map(|p| p.trim().parse::<f64>().ok()).collect()
    } else {
        None
    };
    let Some(v) = nums else {
        errs.push(format!("{field}: expected \"start:stop:step\", got {s:?}"));
        return Vec::new();
    };
    let (start, stop, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !(start <= stop) || !start.is_finite() || !stop.is_finite() {
        errs.push(format!("{field}: need step > 0 and start <= stop in {s:?}"));
        return Vec::new();
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

fn grid_values(v: &Value, field: &str, errs: &mut Vec<String>) -> Vec<f64> {
    match v {
        Value::String(s) => expand_range(s, errs, field),
        Value::Array(items) => items
            .iter()
            .filter_map(|x| match x.as_f64() {
                Some(f) => Some(f),
                None => {
                    errs.push(format!("{field}: entries must be numbers, got {x}"));
                    None
                }
            })
            .collect(),
        other => {
            errs.push(format!("{field}: expected a list or a \"start:stop:step\" string, got {other}"));
            Vec::new()
        }
    }
}

/// Expand a `"start:stop:step"` grid (inclusive of `stop`).
pub fn expand_grid(s: &str) -> Result<Vec<f64>> {
    let mut errs = Vec::new();
    let out = expand_range(s, &mut errs, "grid");
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(errs))
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid JSON: {e}")]))?;
    let Value::Object(map) = root else {
        return Err(Error::Config(vec!["top level must be an object".to_string()]));
    };
    let mut errs = Vec::new();
    for k in map.keys() {
        if !KEYS.contains(&k.as_str()) {
            errs.push(format!("{k}: unknown key"));
        }
    }
    let count = |key: &str, required: bool, errs: &mut Vec<String>| -> Option<u64> {
        match map.get(key) {
            None => {
                if required {
                    errs.push(format!("{key}: missing"));
                }
                None
            }
            Some(v) => match v.as_u64() {
                Some(x) => Some(x),
                None => {
                    errs.push(format!("{key}: expected a nonnegative integer, got {v}"));
                    None
                }
            },
        }
    };
    let n1 = count("n1", true, &mut errs);
    let n2 = count("n2", true, &mut errs);
    let r = count("r", true, &mut errs);
    let trials = count("trials", false, &mut errs);
    let seed = count("seed", false, &mut errs);

    let mut cfg = ExperimentConfig::new(
        n1.unwrap_or(1) as usize,
        n2.unwrap_or(1) as usize,
        r.unwrap_or(1) as usize,
    );
    if let Some(t) = trials {
        cfg.trials = t as usize;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = map.get("beta") {
        match v.as_f64() {
            Some(b) => cfg.beta = b,
            None => errs.push(format!("beta: expected a number, got {v}")),
        }
    }
    if let Some(v) = map.get("matrix_model") {
        match v.as_str().map(str::parse::<MatrixModel>) {
            Some(Ok(m)) => cfg.matrix_model = m,
            _ => errs.push(format!("matrix_model: expected haar, bounded-entry or spiky, got {v}")),
        }
    }
    if let Some(v) = map.get("sampling_model") {
        match v.as_str().map(str::parse::<SamplingModel>) {
            Some(Ok(m)) => cfg.sampling_model = m,
            _ => errs.push(format!(
                "sampling_model: expected uniform-no-replace, with-replace or bernoulli, got {v}"
            )),
        }
    }
    match (map.get("m_grid"), map.get("p_grid")) {
        (Some(_), Some(_)) => errs.push("m_grid, p_grid: give only one".to_string()),
        (Some(v), None) => {
            let vals = grid_values(v, "m_grid", &mut errs);
            if let Some(x) = vals.iter().find(|x| x.fract() != 0.0 || **x < 0.0) {
                errs.push(format!("m_grid: entries must be nonnegative integers, got {x}"));
            } else {
                cfg.grid = Some(Grid::M(vals.into_iter().map(|x| x as usize).collect()));
            }
        }
        (None, Some(v)) => cfg.grid = Some(Grid::P(grid_values(v, "p_grid", &mut errs))),
        (None, None) => {}
    }
    if let Some(v) = map.get("tolerances") {
        match v {
            Value::Object(t) => {
                for (k, x) in t {
                    let slot = match k.as_str() {
                        "recovery" => &mut cfg.tolerances.recovery,
                        "solver" => &mut cfg.tolerances.solver,
                        _ => {
                            errs.push(format!("tolerances.{k}: unknown key"));
                            continue;
                        }
                    };
                    match x.as_f64() {
                        Some(f) => *slot = f,
                        None => errs.push(format!("tolerances.{k}: expected a number, got {x}")),
                    }
                }
            }
            other => errs.push(format!("tolerances: expected an object, got {other}")),
        }
    }
    if let Some(v) = map.get("output_path") {
        match v.as_str() {
            Some(s) => cfg.output_path = Some(s.to_string()),
            None => errs.push(format!("output_path: expected a string, got {v}")),
        }
    }
    if let Some(v) = map.get("certify") {
        match v.as_bool() {
            Some(b) => cfg.certify = b,
            None => errs.push(format!("certify: expected a boolean, got {v}")),
        }
    }
    if n1.is_some() && n2.is_some() && r.is_some() {
        if let Err(Error::Config(more)) = cfg.validate() {
            errs.extend(more);
        }
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

pub fn parse_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub m: usize,
    pub trial: usize,
    pub trial_seed: u64,
    pub observed: usize,
    pub recovered: bool,
    pub certified: Option<bool>,
    pub rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    /// Sample count (expected count for Bernoulli sampling).
    pub m: usize,
    pub success_rate: f64,
    pub success_stderr: f64,
    pub cert_rate: Option<f64>,
    pub mean_error: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSweep {
    pub points: Vec<PhasePoint>,
    pub records: Vec<TrialRecord>,
}

enum Draw {
    Count(usize),
    Fraction(f64),
}

fn sample(cfg: &ExperimentConfig, draw: &Draw, seed: u64) -> Result<ObservationSet> {
    let cells = (cfg.n1 * cfg.n2) as f64;
    let (n1, n2) = (cfg.n1, cfg.n2);
    match (cfg.sampling_model, draw) {
        (SamplingModel::Bernoulli, Draw::Count(m)) => sample_bernoulli(n1, n2, *m as f64 / cells, seed),
        (SamplingModel::Bernoulli, Draw::Fraction(p)) => sample_bernoulli(n1, n2, *p, seed),
        (_, Draw::Fraction(p)) => sample(cfg, &Draw::Count(((p * cells).ceil() as usize).max(1)), seed),
        (SamplingModel::UniformNoReplace, Draw::Count(m)) => sample_uniform(n1, n2, *m, seed),
        (SamplingModel::WithReplace, Draw::Count(m)) => sample_with_replacement(n1, n2, *m, seed),
    }
}

fn run_trial(cfg: &ExperimentConfig, draw: &Draw, m: usize, trial: usize) -> Result<TrialRecord> {
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    let f = make_random_low_rank(cfg.n1, cfg.n2, cfg.r, cfg.matrix_model, trial_seed)?;
    let obs = sample(cfg, draw, trial_seed)?.with_values(&f.matrix())?;
    let params = SolverParams {
        tol: cfg.tolerances.solver,
        ..SolverParams::default()
    };
    let res = solver::solve_nuclear_min(&obs, &params)?;
    let rel_error = solver::relative_error(&res.x, &f)?;
    let certified = if cfg.certify {
        Some(certificate::certify(&f, &obs, cfg.beta)?.1.certified)
    } else {
        None
    };
    Ok(TrialRecord {
        m,
        trial,
        trial_seed,
        observed: obs.distinct(),
        recovered: rel_error <= cfg.tolerances.recovery,
        certified,
        rel_error,
        iterations: res.iterations,
        converged: res.converged,
    })
}

pub fn run_phase_sweep(cfg: &ExperimentConfig) -> Result<PhaseSweep> {
    cfg.validate()?;
    let cells = cfg.n1 * cfg.n2;
    let draws: Vec<(Draw, usize)> = match &cfg.grid {
        Some(Grid::M(ms)) => ms.iter().map(|&m| (Draw::Count(m), m)).collect(),
        Some(Grid::P(ps)) => ps
            .iter()
            .map(|&p| (Draw::Fraction(p), ((p * cells as f64).ceil() as usize).max(1)))
            .collect(),
        None => return Err(Error::Config(vec!["m_grid or p_grid: required for a phase sweep".to_string()])),
    };
    let jobs: Vec<(usize, usize)> = (0..draws.len())
        .flat_map(|g| (0..cfg.trials).map(move |t| (g, t)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(g, t)| run_trial(cfg, &draws[g].0, draws[g].1, t))
        .collect::<Result<Vec<_>>>()?;
    let points = records
        .chunks(cfg.trials)
        .map(|chunk| {
            let n = chunk.len() as f64;
            let success = chunk.iter().filter(|r| r.recovered).count() as f64 / n;
            PhasePoint {
                m: chunk[0].m,
                success_rate: success,
                success_stderr: montecarlo::stderr(success, chunk.len()),
                cert_rate: cfg
                    .certify
                    .then(|| chunk.iter().filter(|r| r.certified == Some(true)).count() as f64 / n),
                mean_error: chunk.iter().map(|r| r.rel_error).sum::<f64>() / n,
                trials: chunk.len(),
            }
        })
        .collect();
    Ok(PhaseSweep { points, records })
}

/// Pairs `(i, j)`, `i < j`, where the success rate drops by more than two
/// combined standard errors.
pub fn monotonicity_violations(points: &[PhasePoint]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 1..points.len() {
        for i in 0..j {
            let (a, b) = (&points[i], &points[j]);
            let slack = 2.0 * (a.success_stderr.powi(2) + b.success_stderr.powi(2)).sqrt();
            if b.success_rate + slack < a.success_rate {
                out.push((i, j));
            }
        }
    }
    out
}

/// One report per inequality, in a fixed order.
pub fn run_verify_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let (n1, n2, trials, beta) = (cfg.n1, cfg.n2, cfg.trials, cfg.beta);
    let seed = |k: u64| derive_seed(cfg.seed, 1_000_000 + k);
    let f = make_random_low_rank(n1, n2, cfg.r, cfg.matrix_model, cfg.seed)?;
    let named = |name: &str, r: Result<BoundReport>| -> Result<BoundReport> {
        r.map_err(|e| match e {
            Error::EnsembleContract { message, .. } => Error::EnsembleContract {
                bound: name.to_string(),
                message,
            },
            Error::PreconditionViolation(msg) => Error::PreconditionViolation(format!("{name}: {msg}")),
            other => other,
        })
    };
    let mut out = vec![
        named("duplicate_count", montecarlo::duplicate_count_report(n1, n2, n1 * n2, beta, trials, seed(0)))?,
        named("near_isometry", montecarlo::near_isometry_report(&f, beta, trials, seed(1)))?,
        named("inf_norm_deviation", montecarlo::inf_norm_report(&f, beta, trials, seed(2)))?,
        named(
            "norm_contraction",
            montecarlo::norm_contraction_report(&f, if beta > 2.0 { beta } else { 3.0 }, trials, seed(3)),
        )?,
    ];
    let a = Matrix::from_element(1, 1, 2.0);
    let mut markov = named(
        "operator_markov",
        montecarlo::operator_markov_check(|rng| Matrix::from_element(1, 1, next_unit(rng)), &a, trials, seed(4)),
    )?;
    markov.bound_name = "operator_markov_scalar".to_string();
    out.push(markov);
    let a4 = Matrix::identity(3, 3) * 4.0;
    let mut wishart = named(
        "operator_markov",
        montecarlo::operator_markov_check(
            |rng| {
                let g = Matrix::from_fn(3, 1, |_, _| StandardNormal.sample(rng));
                &g * g.transpose()
            },
            &a4,
            trials,
            seed(5),
        ),
    )?;
    wishart.bound_name = "operator_markov_wishart".to_string();
    out.push(wishart);
    out.push(named("golden_thompson", montecarlo::golden_thompson_report(4, trials, seed(6)))?);
    out.push(named("bernstein_scalar", montecarlo::bernstein_scalar_report(trials, seed(7)))?);
    out.push(named(
        "matrix_bernstein",
        montecarlo::matrix_bernstein_report(4, 6, 200, 20.0, trials, seed(8)),
    )?);
    out.push(named(
        "noncommutative_chernoff",
        montecarlo::chernoff_report(50, 0.4, trials, seed(9)),
    )?);
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn bounds_csv(reports: &[BoundReport], cfg: &ExperimentConfig) -> String {
    let hash = cfg.hash();
    let mut out = String::from(
        "bound_name,params,theoretical,raw_tail,threshold,empirical,trials,stderr,formula_residual,verdict,seed,config_hash\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?},{},{:?},{},{},{},{}\n",
            csv_field(&r.bound_name),
            csv_field(&r.params),
            r.theoretical_tail,
            r.raw_tail,
            r.theoretical_threshold,
            r.empirical_exceed_frequency,
            r.trials,
            r.stderr,
            opt(r.formula_residual.map(|x| format!("{x:?}"))),
            r.verdict(),
            cfg.seed,
            hash
        ));
    }
    out
}

pub fn phase_csv(points: &[PhasePoint], cfg: &ExperimentConfig) -> String {
    let hash = cfg.hash();
    let mut out = String::from("m,success_rate,success_stderr,cert_rate,mean_error,trials,seed,config_hash\n");
    for p in points {
        out.push_str(&format!(
            "{},{:?},{:?},{},{:?},{},{},{}\n",
            p.m,
            p.success_rate,
            p.success_stderr,
            opt(p.cert_rate.map(|x| format!("{x:?}"))),
            p.mean_error,
            p.trials,
            cfg.seed,
            hash
        ));
    }
    out
}

pub fn trials_csv(records: &[TrialRecord], cfg: &ExperimentConfig) -> String {
    let hash = cfg.hash();
    let mut out = String::from(
        "m,trial,trial_seed,observed,recovered,certified,rel_error,iterations,converged,seed,config_hash\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:?},{},{},{},{}\n",
            r.m,
            r.trial,
            r.trial_seed,
            r.observed,
            r.recovered,
            opt(r.certified),
            r.rel_error,
            r.iterations,
            r.converged,
            cfg.seed,
            hash
        ));
    }
    out
}
