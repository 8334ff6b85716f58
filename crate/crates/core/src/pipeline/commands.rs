use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::output::OutputDir;
use crate::cop::io::{distribution_from_json, read_jsonl, write_gap_csv, GapRow};
use crate::cop::{
    DistKind, EvalSet, HeuristicSolver, InsertionMethod, Instance, InstanceDistribution, LambdaMode, MixedGaussian,
    Oracle, OracleSolver, Point, TourSolver,
};
use crate::curriculum::{
    evaluate_target, resume_asp, run_asp_with, target_sets, AspCheckpoint, AspConfig, AspEvent, CurriculumState,
    Staircase,
};
use crate::error::{Error, Result};
use crate::flow::DensityCell;
use crate::meta_game::{exploitability, solve_with, MetaSolver};
use crate::seed;
use crate::solver::{DecodeMode, SolverPolicy};

pub const RUN_LOG: &str = "run_log.jsonl";
pub const FINAL_SOLVER: &str = "final_solver.json";
pub const TARGET_GAPS: &str = "target_gaps.csv";
pub const RESUME_STATE: &str = "resume.json";

/// Human-readable plan of a training run; touches no files.
pub fn plan_train(cfg: &RunConfig) -> String {
    let a = &cfg.asp;
    let mut s = String::new();
    let _ = writeln!(s, "{}", cfg.to_json_pretty());
    let _ = writeln!(s, "config hash: {}", cfg.hash());
    let _ = writeln!(s, "output directory: {}", cfg.output_dir.display());
    let _ = writeln!(s, "ladder: {:?} (target scales {:?})", a.ladder(), a.target_scales());
    let _ = writeln!(
        s,
        "iteration 0: exploration at n={} ({} PSRO epochs, {} solver steps each)",
        a.staircase.n_start,
        a.de.psro_epochs,
        a.de.solver_train.total_steps()
    );
    let _ = writeln!(
        s,
        "then per iteration: evaluate r over the {:?} scales; climb when r <= {}% or after {} stalled adaption rounds, \
         otherwise adapt for {} epochs x {} steps",
        a.eval_scope, a.staircase.alpha, a.staircase.patience, a.psa.epochs, a.psa.steps_per_epoch
    );
    let _ = writeln!(s, "at most {} iterations", a.max_iterations);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub final_r: f64,
    pub gradient_steps: usize,
    pub scales: Vec<usize>,
}

/// Rebuilds the evaluation state for a given ladder so a reloaded solver can
/// be checked against a logged `r`.
pub fn evaluation_state(cfg: &AspConfig, scales: &[usize]) -> Result<CurriculumState> {
    let staircase = Staircase::with_state(cfg.staircase, scales.to_vec(), 0)?;
    let mut state = CurriculumState::new(staircase, cfg.lambda, cfg.window, cfg.oracle(), 0);
    state.eval_scope = cfg.eval_scope;
    state.target_sets = target_sets(cfg)?;
    Ok(state)
}

pub fn recompute_r(cfg: &AspConfig, solver: &SolverPolicy, scales: &[usize]) -> Result<f64> {
    let state = evaluation_state(cfg, scales)?;
    let mut g = solver.clone();
    g.decode_mode = DecodeMode::Greedy;
    evaluate_target(&g, &state, seed::derive(cfg.seed, seed::stream::EVAL))
}

/// Runs the staircase loop and writes the run directory.
pub fn cmd_train(cfg: &RunConfig, out: &mut OutputDir, resume: Option<AspCheckpoint>) -> Result<TrainSummary> {
    cfg.validate()?;
    out.write_text("config.json", &(cfg.to_json_pretty() + "\n"))?;
    let log_path = out.path(RUN_LOG)?;
    let mut log = BufWriter::new(File::create(&log_path)?);
    if let Some(cp) = &resume {
        for rec in &cp.log {
            serde_json::to_writer(&mut log, rec)?;
            log.write_all(b"\n")?;
        }
        log.flush()?;
    }
    out.record(RUN_LOG, json!({"seed": cfg.asp.seed}))?;
    let hash = out.config_hash().to_string();
    let mut observer = |event: AspEvent<'_>| -> Result<()> {
        match event {
            AspEvent::Iteration { record, solver, .. } => {
                serde_json::to_writer(&mut log, record)?;
                log.write_all(b"\n")?;
                log.flush()?;
                let meta = json!({"iter": record.iter, "r": record.r, "scales": record.scales, "config_hash": hash});
                let rel = format!("checkpoints/iter_{:03}.json", record.iter);
                out.write_json(&rel, &solver.to_checkpoint(meta))?;
            }
            AspEvent::Exploration { iter, game } => {
                let dir = format!("exploration/iter_{iter:03}_n{}", game.scale);
                out.write_with(&format!("{dir}/utility.csv"), json!({"M": game.eval_samples}), |p| game.write_utility_csv(p))?;
                out.write_json(&format!("{dir}/game.json"), &game.sidecar_json())?;
                let mixed = game.mixed_distribution()?;
                out.write_json(&format!("{dir}/mixed_dist.json"), &crate::cop::io::distribution_to_json(&mixed))?;
            }
            AspEvent::Failed { checkpoint, error } => {
                let mut doc = checkpoint.to_json();
                doc["error"] = json!(error.to_string());
                out.write_json(RESUME_STATE, &doc)?;
            }
        }
        Ok(())
    };
    let outcome = match resume {
        Some(cp) => resume_asp(&cfg.asp, cp, &mut observer)?,
        None => run_asp_with(&cfg.asp, &mut observer)?,
    };
    log.flush()?;
    let scales = outcome.state.scales().to_vec();
    let meta = json!({
        "final_r": outcome.final_r,
        "scales": scales,
        "gradient_steps": outcome.gradient_steps,
        "config_hash": out.config_hash(),
    });
    out.write_json(FINAL_SOLVER, &outcome.solver.to_checkpoint(meta))?;
    let rows = target_gap_rows(&cfg.asp, &outcome.solver)?;
    out.write_with(TARGET_GAPS, Value::Null, |p| write_gap_csv(p, &rows))?;
    Ok(TrainSummary {
        iterations: outcome.log.len(),
        final_r: outcome.final_r,
        gradient_steps: outcome.gradient_steps,
        scales,
    })
}

/// Greedy gaps of `solver` on every target dataset.
pub fn target_gap_rows(cfg: &AspConfig, solver: &SolverPolicy) -> Result<Vec<GapRow>> {
    let mut g = solver.clone();
    g.decode_mode = DecodeMode::Greedy;
    let decode = seed::derive(cfg.seed, seed::stream::EVAL);
    target_sets(cfg)?
        .into_iter()
        .map(|(n, set)| {
            let est = set.evaluate(&g, decode)?;
            Ok(GapRow {
                solver: "final".into(),
                distribution: format!("mixed-gaussian(lambda_max={})", cfg.target.lambda_max),
                n,
                m: set.len(),
                mean_gap: est.mean,
                oracle_kind: est.oracle_kind.name().into(),
                seed: cfg.seed,
            })
        })
        .collect()
}

/// A solver named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverSpec {
    Oracle,
    Heuristic(InsertionMethod),
    Checkpoint(PathBuf),
}

impl FromStr for SolverSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        if let Some(m) = InsertionMethod::parse(s) {
            return Ok(Self::Heuristic(m));
        }
        let p = PathBuf::from(s);
        if p.extension().is_some_and(|e| e == "json") {
            Ok(Self::Checkpoint(p))
        } else {
            Err(Error::Config(vec![format!(
                "solver `{s}` is neither oracle, nearest, random, farthest nor a .json checkpoint"
            )]))
        }
    }
}

impl SolverSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Oracle => "oracle".into(),
            Self::Heuristic(m) => m.name().into(),
            Self::Checkpoint(p) => p.display().to_string(),
        }
    }

    pub fn load(&self, oracle: Oracle) -> Result<Box<dyn TourSolver>> {
        Ok(match self {
            Self::Oracle => Box::new(OracleSolver(oracle)),
            Self::Heuristic(m) => Box::new(HeuristicSolver(*m)),
            Self::Checkpoint(p) => {
                let mut policy = load_policy(p)?;
                policy.decode_mode = DecodeMode::Greedy;
                Box::new(policy)
            }
        })
    }
}

pub fn load_policy(path: &Path) -> Result<SolverPolicy> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    SolverPolicy::from_checkpoint(&doc)
}

/// Where evaluation or generated instances come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Uniform,
    MixedGaussian { lambda_max: f64 },
    /// JSON distribution document (for example an exploration `mixed_dist.json`).
    Distribution(PathBuf),
    /// JSONL dataset.
    Dataset(PathBuf),
}

impl FromStr for DataSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => return Ok(Self::Uniform),
            "mixed-gaussian" => return Ok(Self::MixedGaussian { lambda_max: 1.0 }),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("mixed-gaussian:") {
            let lambda_max: f64 =
                v.parse().map_err(|_| Error::Config(vec![format!("bad lambda_max in `{s}`")]))?;
            return Ok(Self::MixedGaussian { lambda_max });
        }
        let p = PathBuf::from(s);
        match p.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => Ok(Self::Dataset(p)),
            Some("json") => Ok(Self::Distribution(p)),
            _ => Err(Error::Config(vec![format!(
                "data source `{s}` is neither uniform, mixed-gaussian[:lambda_max], a .json distribution nor a .jsonl dataset"
            )])),
        }
    }
}

pub fn load_distribution(path: &Path) -> Result<InstanceDistribution> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    distribution_from_json(&doc)
}

impl DataSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Uniform => "uniform".into(),
            Self::MixedGaussian { lambda_max } => format!("mixed-gaussian(lambda_max={lambda_max})"),
            Self::Distribution(p) | Self::Dataset(p) => p.display().to_string(),
        }
    }

    /// Distribution at scale `n`; fixed-scale sources must match it.
    pub fn distribution(&self, n: usize) -> Result<InstanceDistribution> {
        let dist = match self {
            Self::Uniform => InstanceDistribution::uniform(n),
            Self::MixedGaussian { lambda_max } => InstanceDistribution::mixed_gaussian(
                n,
                MixedGaussian { lambda_max: *lambda_max, lambda_mode: LambdaMode::PerInstance },
            ),
            Self::Distribution(p) => load_distribution(p)?,
            Self::Dataset(p) => InstanceDistribution::empirical(read_jsonl(p)?)?,
        };
        if dist.scale != n {
            return Err(Error::InvalidDistribution(format!(
                "{} has scale {}, but scale {n} was requested",
                self.label(),
                dist.scale
            )));
        }
        Ok(dist)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub solver: String,
    pub distribution: String,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub mean_gap_pct: f64,
    /// Mean decode wallclock per instance, in milliseconds.
    pub mean_time_ms: f64,
    pub oracle_kind: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub solvers: Vec<SolverSpec>,
    pub data: DataSpec,
    /// Ignored for datasets, which are grouped by their own scales.
    pub scales: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub exact_limit: usize,
}

/// Gap table for every (solver, scale) pair.
pub fn cmd_eval(req: &EvalRequest) -> Result<Vec<EvalRow>> {
    if req.solvers.is_empty() {
        return Err(Error::Config(vec!["at least one solver is required".into()]));
    }
    let oracle = Oracle { exact_limit: req.exact_limit, proxy_seed: seed::derive(req.seed, seed::stream::PROXY) };
    let sets: Vec<(usize, EvalSet)> = match &req.data {
        DataSpec::Dataset(p) => {
            let mut by_n: BTreeMap<usize, Vec<Instance>> = BTreeMap::new();
            for inst in read_jsonl(p)? {
                by_n.entry(inst.n()).or_default().push(inst);
            }
            if by_n.is_empty() {
                return Err(Error::InvalidDistribution(format!("{} holds no instances", p.display())));
            }
            by_n.into_iter().map(|(n, v)| Ok((n, EvalSet::new(v, &oracle)?))).collect::<Result<_>>()?
        }
        other => {
            if req.samples == 0 {
                return Err(Error::Config(vec!["samples must be at least 1".into()]));
            }
            req.scales
                .iter()
                .map(|&n| {
                    let data = other.distribution(n)?.sample(req.samples, seed::derive2(req.seed, seed::stream::SAMPLE, n as u64))?;
                    Ok((n, EvalSet::new(data, &oracle)?))
                })
                .collect::<Result<_>>()?
        }
    };
    let decode = seed::derive(req.seed, seed::stream::DECODE);
    let mut rows = Vec::new();
    for spec in &req.solvers {
        let solver = spec.load(oracle)?;
        for (n, set) in &sets {
            let t = Instant::now();
            let est = set.evaluate(solver.as_ref(), decode)?;
            let ms = t.elapsed().as_secs_f64() * 1e3 / set.len() as f64;
            rows.push(EvalRow {
                solver: spec.label(),
                distribution: req.data.label(),
                n: *n,
                m: set.len(),
                mean_gap_pct: 100.0 * est.mean,
                mean_time_ms: ms,
                oracle_kind: est.oracle_kind.name().into(),
                seed: req.seed,
            });
        }
    }
    Ok(rows)
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::cop::io::csv_err)?;
    for r in rows {
        w.serialize(r).map_err(crate::cop::io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path).map_err(crate::cop::io::csv_err)?;
    r.deserialize().map(|row| row.map_err(crate::cop::io::csv_err)).collect()
}

/// Samples `count` instances of scale `n`.
pub fn cmd_gen_data(data: &DataSpec, n: usize, count: usize, seed: u64) -> Result<Vec<Instance>> {
    if let DataSpec::Dataset(p) = data {
        return Err(Error::Config(vec![format!("cannot generate from the dataset {}", p.display())]));
    }
    data.distribution(n)?.sample(count, seed)
}

/// Node density of a distribution built from uniform and flow components.
pub fn distribution_density(dist: &InstanceDistribution, p: Point) -> Result<f64> {
    let inside = p.iter().all(|c| (0.0..=1.0).contains(c));
    match &dist.kind {
        DistKind::UniformSquare => Ok(if inside { 1.0 } else { 0.0 }),
        DistKind::Flow(f) => {
            let ld = f.log_density(p);
            Ok(if ld == f64::NEG_INFINITY { 0.0 } else { ld.exp() })
        }
        DistKind::Mixture { weights, components } => {
            let mut total = 0.0;
            for (w, c) in weights.iter().zip(components) {
                if *w > 0.0 {
                    total += w * distribution_density(c, p)?;
                }
            }
            Ok(total)
        }
        _ => Err(Error::InvalidDistribution(format!("no closed-form node density for {}", dist.label()))),
    }
}

/// Density at the centres of a `resolution x resolution` grid over the unit square.
pub fn cmd_weakness(dist: &InstanceDistribution, resolution: usize) -> Result<Vec<DensityCell>> {
    if resolution == 0 {
        return Err(Error::Config(vec!["resolution must be at least 1".into()]));
    }
    dist.validate()?;
    let h = 1.0 / resolution as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            cells.push(DensityCell { x, y, density: distribution_density(dist, [x, y])? });
        }
    }
    Ok(cells)
}

/// Parses a utility matrix. A header row and a leading label column are
/// recognised by their non-numeric cells.
pub fn read_utility_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(crate::cop::io::csv_err)?;
    let numeric = |f: &&str| f.parse::<f64>().is_ok();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen_first = false;
    let mut labelled = None;
    for rec in reader.records() {
        let rec = rec.map_err(crate::cop::io::csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().map(str::trim).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !seen_first {
            seen_first = true;
            if !fields.iter().skip(1).all(numeric) {
                continue;
            }
        }
        let has_label = *labelled.get_or_insert_with(|| !numeric(&fields[0]));
        let cells = if has_label { &fields[1..] } else { &fields[..] };
        let row = cells
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("`{c}`: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse { line, msg: format!("expected {} values, found {}", first.len(), row.len()) });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse { line: 1, msg: "no utility values".into() });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub sigma_ss: Vec<f64>,
    pub sigma_dg: Vec<f64>,
    pub value: f64,
    pub exploitability: f64,
}

pub fn cmd_nash(utility: &[Vec<f64>], solver: MetaSolver) -> Result<NashReport> {
    let sol = solve_with(utility, solver)?;
    let e = exploitability(utility, &sol.sigma_ss, &sol.sigma_dg);
    Ok(NashReport { sigma_ss: sol.sigma_ss, sigma_dg: sol.sigma_dg, value: sol.value, exploitability: e })
}
