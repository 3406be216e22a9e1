//! `turnflow` command-line runner.
//!
//! Exit codes: 0 success, 1 domain error, 2 I/O or input-format error, 3 solver failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use turnflow::backend::ClarabelBackend;
use turnflow::ctm::{self, Metrics};
use turnflow::network::{LinkId, NodeId};
use turnflow::program::{AssemblyOptions, OnrampBoundMode};
use turnflow::robust::monte_carlo_feasibility;
use turnflow::scenarios::{load, Model, Scenario, Solved};
use turnflow::Error;

#[derive(Parser)]
#[command(
    name = "turnflow",
    version,
    about = "Robust inflow control for road networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and print its validation report.
    Validate {
        #[arg(long)]
        scenario: String,
    },
    /// Solve the control program and write inflow series.
    Solve(SolveArgs),
    /// Run the cell transmission model on a controls file.
    Simulate(SimulateArgs),
    /// Solve base and robust programs and simulate both under the realized ratios.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Builtin scenario name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// Comma-separated alpha values (1 - confidence). Defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Comma-separated node ids whose turning ratios are treated as uncertain.
    #[arg(long, value_delimiter = ',')]
    robust_nodes: Vec<u32>,
    #[arg(long, value_enum)]
    onramp_bound_mode: Option<BoundMode>,
    #[arg(long, value_enum, default_value_t = BackendName::Clarabel)]
    backend: BackendName,
    /// Drop all turning-ratio covariances before solving.
    #[arg(long)]
    zero_covariance: bool,
    /// Keep every compatibility row instead of pruning implied ones.
    #[arg(long)]
    no_prune: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = Mode::Robust)]
    mode: Mode,
    /// Monte-Carlo samples per robust solution for a satisfaction report (0 to skip).
    #[arg(long, default_value_t = 0)]
    mc_samples: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: String,
    /// Controls CSV as written by `solve`.
    #[arg(long)]
    controls: PathBuf,
    /// Which alpha column of the controls file to use (`base` for deterministic).
    #[arg(long)]
    alpha: Option<String>,
    /// Simulate with the mean ratios instead of the scenario's realized ones.
    #[arg(long)]
    mean_ratios: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Det,
    Robust,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundMode {
    Printed,
    Prose,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BackendName {
    /// Interior point on cumulative counts.
    Clarabel,
    /// Interior point on per-step flows.
    ClarabelFlows,
}

impl BackendName {
    fn backend(self) -> ClarabelBackend {
        ClarabelBackend {
            cumulative: self == BackendName::Clarabel,
            ..ClarabelBackend::default()
        }
    }
}

#[derive(Debug)]
enum Failure {
    Domain(String),
    Io(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Io(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Domain(m) | Failure::Io(m) | Failure::Solver(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Parse(_) | Error::UnknownScenario(_) => Failure::Io(msg),
            Error::Solver(_) => Failure::Solver(msg),
            _ => Failure::Domain(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

/// Written next to every output so a run can be repeated exactly.
#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    command: &'static str,
    scenario: String,
    mode: Option<Mode>,
    alphas: Vec<String>,
    robust_nodes: Vec<u32>,
    backend: Option<BackendName>,
    seed: u64,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &'static str, scenario: &str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            scenario: scenario.to_string(),
            mode: None,
            alphas: Vec::new(),
            robust_nodes: Vec::new(),
            backend: None,
            seed,
            outputs: Vec::new(),
        }
    }
}

fn alpha_label(alpha: Option<f64>) -> String {
    alpha.map_or_else(|| "base".to_string(), |a| a.to_string())
}

fn prepare(args: &ProblemArgs) -> CliResult<Scenario> {
    let mut s = load(&args.scenario)?;
    if !args.robust_nodes.is_empty() {
        let nodes: BTreeSet<NodeId> = args.robust_nodes.iter().map(|&n| NodeId(n)).collect();
        if let Some(bad) = nodes.iter().find(|n| s.network.node(**n).is_none()) {
            return Err(Failure::Domain(format!("unknown node {bad}")));
        }
        s.robust_nodes = nodes;
    }
    if let Some(mode) = args.onramp_bound_mode {
        match &mut s.model {
            Model::Freeway(cfg) => {
                cfg.onramp_bound_mode = match mode {
                    BoundMode::Printed => OnrampBoundMode::Printed,
                    BoundMode::Prose => OnrampBoundMode::Prose,
                }
            }
            Model::Urban(_) => {
                return Err(Failure::Domain(
                    "--onramp-bound-mode applies to freeway scenarios only".into(),
                ))
            }
        }
    }
    if args.zero_covariance {
        s.network = s.network.without_uncertainty();
    }
    if !args.alpha.is_empty() {
        s.alphas = args.alpha.clone();
    }
    let report = s.network.validate();
    if !report.is_valid() {
        return Err(Failure::Domain(format!("scenario is invalid:\n{report}")));
    }
    Ok(s)
}

/// Solves every requested case on its own thread; results keep the input order.
fn solve_all(s: &Scenario, cases: &[Option<f64>], args: &ProblemArgs) -> CliResult<Vec<Solved>> {
    let options = AssemblyOptions {
        prune: !args.no_prune,
    };
    let backend = args.backend.backend();
    let results: Vec<turnflow::Result<Solved>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .iter()
            .map(|&alpha| scope.spawn(move || s.solve_with(alpha, options, &backend)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    results
        .into_iter()
        .map(|r| r.map_err(Failure::from))
        .collect()
}

/// Writes all files or none: on the first error, files written so far are removed.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> CliResult<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written.iter().map(|p| p.display().to_string()).collect())
}

fn solution_csv(s: &Scenario, solved: &[Solved]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "time_step", "link_id", "q_in_veh_s", "q_out_veh_s"])?;
    for sol in solved {
        let label = alpha_label(sol.alpha);
        for link in s.network.controllable_links() {
            let f = &sol.flows[&link.id];
            for i in 0..s.network.steps {
                w.write_record([
                    label.clone(),
                    (i + 1).to_string(),
                    link.id.0.to_string(),
                    f.q_in[i].to_string(),
                    f.q_out[i].to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn objectives_csv(solved: &[Solved]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "objective", "iterations"])?;
    for sol in solved {
        w.write_record([
            alpha_label(sol.alpha),
            sol.objective().to_string(),
            sol.result.iterations.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn metrics_csv(m: &Metrics) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "t_s".to_string(),
        "blocked_veh".to_string(),
        "cumulative_blocked_veh".to_string(),
    ];
    header.extend(
        m.throughput
            .keys()
            .map(|id| format!("throughput_link{id}_veh")),
    );
    w.write_record(&header)?;
    for (k, t) in m.times.iter().enumerate() {
        let mut row = vec![
            t.to_string(),
            m.blocked[k].to_string(),
            m.cumulative_blocked[k].to_string(),
        ];
        row.extend(m.throughput.values().map(|s| s[k].to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn manifest_bytes(m: &RunManifest) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(m).expect("manifest serializes");
    v.push(b'\n');
    v
}

fn summary(label: &str, m: &Metrics) -> String {
    let through: Vec<String> = m
        .throughput
        .iter()
        .map(|(id, s)| format!("link {id} {:.3}", s.last().copied().unwrap_or(0.0)))
        .collect();
    format!(
        "{label}: cumulative blocked {:.3} veh; throughput {}",
        m.final_blocked(),
        through.join(", ")
    )
}

fn cmd_validate(scenario: &str) -> CliResult<()> {
    let s = load(scenario)?;
    let report = s.network.validate();
    if report.issues.is_empty() {
        println!("{}: no issues", s.name);
    } else {
        println!("{}:\n{report}", s.name);
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "{} has {} error(s)",
            s.name,
            report.errors().count()
        )))
    }
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let p = &args.problem;
    let s = prepare(p)?;
    let cases: Vec<Option<f64>> = match args.mode {
        Mode::Det => vec![None],
        Mode::Robust => s.alphas.iter().map(|&a| Some(a)).collect(),
    };
    let solved = solve_all(&s, &cases, p)?;
    for sol in &solved {
        println!(
            "alpha {}: objective {:.6}",
            alpha_label(sol.alpha),
            sol.objective()
        );
        if args.mc_samples > 0 && !sol.program.cones.is_empty() {
            let rates = monte_carlo_feasibility(
                &sol.result.x,
                &sol.program.cones,
                &s.network,
                args.mc_samples,
                p.seed,
            )?;
            let min = rates.iter().copied().fold(1.0, f64::min);
            println!(
                "  Monte-Carlo: {} cones, lowest satisfaction {min:.4}",
                rates.len()
            );
        }
    }
    let mut manifest = RunManifest::new("solve", &p.scenario, p.seed);
    manifest.mode = Some(args.mode);
    manifest.alphas = cases.iter().map(|&a| alpha_label(a)).collect();
    manifest.robust_nodes = s.robust_nodes.iter().map(|n| n.0).collect();
    manifest.backend = Some(p.backend);
    manifest.outputs = vec!["solution.csv".into(), "objectives.csv".into()];
    let files = vec![
        ("solution.csv".to_string(), solution_csv(&s, &solved)?),
        ("objectives.csv".to_string(), objectives_csv(&solved)?),
        ("manifest.json".to_string(), manifest_bytes(&manifest)),
    ];
    write_outputs(&p.out, &files)?;
    Ok(())
}

#[derive(Deserialize)]
struct ControlRow {
    alpha: String,
    time_step: usize,
    link_id: u32,
    q_in_veh_s: f64,
}

fn read_controls(
    path: &Path,
    s: &Scenario,
    alpha: Option<&str>,
) -> CliResult<BTreeMap<LinkId, Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<ControlRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let labels: BTreeSet<&str> = rows.iter().map(|r| r.alpha.as_str()).collect();
    let label = match alpha {
        Some(a) => a,
        None if labels.len() == 1 => labels.iter().next().copied().unwrap_or("base"),
        None => {
            return Err(Failure::Domain(format!(
                "controls file holds several alphas ({}); pick one with --alpha",
                labels.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    };
    let steps = s.network.steps;
    let mut controls: BTreeMap<LinkId, Vec<f64>> = s
        .network
        .controllable_links()
        .map(|l| (l.id, vec![0.0; steps]))
        .collect();
    let mut seen: BTreeMap<LinkId, usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.alpha == label) {
        let id = LinkId(r.link_id);
        let Some(series) = controls.get_mut(&id) else {
            return Err(Failure::Domain(format!("link {id} is not controllable")));
        };
        if r.time_step == 0 || r.time_step > steps {
            return Err(Failure::Domain(format!(
                "time step {} outside the horizon of {steps} steps",
                r.time_step
            )));
        }
        series[r.time_step - 1] = r.q_in_veh_s;
        *seen.entry(id).or_default() += 1;
    }
    if seen.is_empty() {
        return Err(Failure::Domain(format!("no controls for alpha '{label}'")));
    }
    if let Some((id, n)) = seen.iter().find(|(_, &n)| n != steps) {
        return Err(Failure::Domain(format!(
            "link {id} has {n} control steps, the horizon has {steps}"
        )));
    }
    Ok(controls)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let s = load(&args.scenario)?;
    let controls = read_controls(&args.controls, &s, args.alpha.as_deref())?;
    let net = ctm::scenario_network(&s, !args.mean_ratios)?;
    let m = ctm::simulate(&net, &controls)?;
    println!("{}", summary("simulation", &m));
    let mut manifest = RunManifest::new("simulate", &args.scenario, args.seed);
    manifest.alphas = args.alpha.iter().cloned().collect();
    manifest.outputs = vec!["metrics.csv".into()];
    write_outputs(
        &args.out,
        &[
            ("metrics.csv".to_string(), metrics_csv(&m)?),
            ("manifest.json".to_string(), manifest_bytes(&manifest)),
        ],
    )?;
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let p = &args.problem;
    let s = prepare(p)?;
    let alpha = *s
        .alphas
        .first()
        .ok_or_else(|| Failure::Domain("no alpha given".into()))?;
    let solved = solve_all(&s, &[None, Some(alpha)], p)?;
    let (base, robust) = (&solved[0], &solved[1]);
    let (rm, bm) =
        ctm::run_validation(&s, &robust.controls(&s.network), &base.controls(&s.network))?;
    println!("{}", summary("base", &bm));
    println!("{}", summary(&format!("robust alpha {alpha}"), &rm));
    let mut manifest = RunManifest::new("compare", &p.scenario, p.seed);
    manifest.alphas = vec!["base".into(), alpha.to_string()];
    manifest.robust_nodes = s.robust_nodes.iter().map(|n| n.0).collect();
    manifest.backend = Some(p.backend);
    manifest.outputs = vec![
        "solution.csv".into(),
        "metrics_base.csv".into(),
        "metrics_robust.csv".into(),
    ];
    write_outputs(
        &p.out,
        &[
            ("solution.csv".to_string(), solution_csv(&s, &solved)?),
            ("metrics_base.csv".to_string(), metrics_csv(&bm)?),
            ("metrics_robust.csv".to_string(), metrics_csv(&rm)?),
            ("manifest.json".to_string(), manifest_bytes(&manifest)),
        ],
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
