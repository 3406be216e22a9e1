//! Assembly of the control problems as conic programs.
//!
//! Two formulations share the same compatibility rows. The deterministic one keeps an inflow
//! variable for every link and ties inflows to upstream outflows with mean turning ratios. The
//! robust one keeps inflow variables only where vehicles enter the network and substitutes the
//! rest, turning rows that depend on random ratios into cones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compat::{
    build_link_constraints, form_to_affine, AffineExpr, RowLabel, VarIndex, VarKind, VarTable,
};
use crate::error::{Error, Result};
use crate::laxhopf::LinkGeometry;
use crate::network::{LinkId, LinkKind, Network, NodeId};
use crate::robust::{self, ConvertedRow, InflowSource, SocConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    Compat {
        link: LinkId,
        label: RowLabel,
    },
    Transition {
        node: NodeId,
        link: LinkId,
        step: usize,
    },
    Balance {
        step: usize,
        upper: bool,
    },
    OnRampBound {
        link: LinkId,
        step: usize,
    },
    ExitSupply {
        link: LinkId,
        step: usize,
    },
    ExitCapacity {
        link: LinkId,
        step: usize,
    },
    Signal {
        link: LinkId,
        step: usize,
    },
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowTag::Compat { link, label } => write!(f, "compat link {link} {label}"),
            RowTag::Transition { node, link, step } => {
                write!(f, "transition node {node} link {link} step {step}")
            }
            RowTag::Balance { step, upper } => write!(f, "balance step {step} upper={upper}"),
            RowTag::OnRampBound { link, step } => {
                write!(f, "on-ramp bound link {link} step {step}")
            }
            RowTag::ExitSupply { link, step } => write!(f, "exit supply link {link} step {step}"),
            RowTag::ExitCapacity { link, step } => {
                write!(f, "exit capacity link {link} step {step}")
            }
            RowTag::Signal { link, step } => write!(f, "signal link {link} step {step}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub tag: RowTag,
    pub expr: AffineExpr,
}

/// `weight * expr^2` added to the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTerm {
    pub weight: f64,
    pub expr: AffineExpr,
}

/// Minimize `objective . x + sum quadratic` subject to `inequalities <= 0`,
/// `equalities = 0`, cone rows, and nonnegativity where flagged.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub vars: VarTable,
    pub objective: Vec<f64>,
    pub quadratic: Vec<QuadTerm>,
    pub inequalities: Vec<Row>,
    pub equalities: Vec<Row>,
    pub cones: Vec<SocConstraint>,
    pub nonnegative: Vec<bool>,
    /// Compatibility rows removed as implied by others.
    pub pruned_rows: usize,
}

impl ConicProgram {
    pub fn add_var(&mut self, var: VarIndex, nonnegative: bool) -> usize {
        let c = self.vars.add(var);
        if c == self.objective.len() {
            self.objective.push(0.0);
            self.nonnegative.push(nonnegative);
        }
        c
    }

    pub fn linear_objective(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn quadratic_objective(&self, x: &[f64]) -> f64 {
        self.quadratic
            .iter()
            .map(|q| q.weight * q.expr.eval(x).powi(2))
            .sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.linear_objective(x) + self.quadratic_objective(x)
    }

    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let mut r = Residuals::default();
        for row in &self.inequalities {
            r.inequality = r.inequality.max(row.expr.eval(x));
        }
        for row in &self.equalities {
            r.equality = r.equality.max(row.expr.eval(x).abs());
        }
        for cone in &self.cones {
            r.cone = r.cone.max(cone.value(x));
        }
        for (c, &nn) in self.nonnegative.iter().enumerate() {
            if nn {
                r.bound = r.bound.max(-x[c]);
            }
        }
        r
    }

    /// Plain-text sparse dump: one line per row, `kind, indices, coeffs, rhs`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt_row = |kind: &str, e: &AffineExpr| {
            let idx: Vec<String> = e.terms.iter().map(|t| t.0.to_string()).collect();
            let val: Vec<String> = e.terms.iter().map(|t| format!("{:e}", t.1)).collect();
            format!(
                "{kind}, [{}], [{}], {:e}\n",
                idx.join(" "),
                val.join(" "),
                -e.constant
            )
        };
        for row in &self.equalities {
            out.push_str(&fmt_row("eq", &row.expr));
        }
        for row in &self.inequalities {
            out.push_str(&fmt_row("le", &row.expr));
        }
        for cone in &self.cones {
            out.push_str(&fmt_row("soc-mean", &cone.mean_expr()));
            for f in cone.factor_rows() {
                out.push_str(&fmt_row(&format!("soc-factor k={}", cone.kappa), &f));
            }
        }
        out
    }
}

/// Largest violation per row kind (zero when satisfied).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub inequality: f64,
    pub equality: f64,
    pub cone: f64,
    pub bound: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.inequality
            .max(self.equality)
            .max(self.cone)
            .max(self.bound)
            .max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Interior tolerance handed to the solver.
    pub solver: f64,
    /// Residual bound required to report an optimal status.
    pub report: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: 1e-8,
            report: 1e-6,
            max_iter: 500,
        }
    }
}

/// A conic solver able to handle linear, quadratic and second-order cone terms.
pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, program: &ConicProgram, tol: &Tolerances) -> Result<SolveResult>;
}

pub fn solve(
    program: &ConicProgram,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<SolveResult> {
    backend.solve(program, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formulation {
    Deterministic,
    Robust {
        alpha: f64,
        robust_nodes: BTreeSet<NodeId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Drop compatibility rows implied by a kept row plus a capacity row.
    pub prune: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { prune: true }
    }
}

fn has_outflow_var(kind: LinkKind) -> bool {
    kind != LinkKind::OffRamp
}

fn has_inflow_var(kind: LinkKind, formulation: &Formulation) -> bool {
    match formulation {
        Formulation::Deterministic => kind != LinkKind::OffRamp,
        Formulation::Robust { .. } => kind.is_controllable(),
    }
}

fn validated(network: &Network) -> Result<()> {
    let report = network.validate();
    if let Some(issue) = report.errors().next() {
        return Err(Error::Config(issue.to_string()));
    }
    Ok(())
}

/// Variables, compatibility rows and node coupling, with a zero objective.
pub fn assemble(
    network: &Network,
    formulation: &Formulation,
    options: AssemblyOptions,
) -> Result<ConicProgram> {
    validated(network)?;
    let steps = network.steps;
    let kappa = match formulation {
        Formulation::Deterministic => 0.0,
        Formulation::Robust {
            alpha,
            robust_nodes,
        } => {
            for id in robust_nodes {
                network
                    .node(*id)
                    .ok_or(crate::error::NetworkError::UnknownNode(*id))?;
            }
            robust::kappa(*alpha)?
        }
    };
    let robust_nodes = match formulation {
        Formulation::Robust { robust_nodes, .. } => robust_nodes.clone(),
        Formulation::Deterministic => BTreeSet::new(),
    };

    let mut prog = ConicProgram::default();
    for link in &network.links {
        if has_inflow_var(link.kind, formulation) {
            for step in 1..=steps {
                prog.add_var(
                    VarIndex {
                        kind: VarKind::Inflow,
                        link: link.id,
                        step,
                    },
                    true,
                );
            }
        }
    }
    for link in &network.links {
        if has_outflow_var(link.kind) {
            for step in 1..=steps {
                prog.add_var(
                    VarIndex {
                        kind: VarKind::Outflow,
                        link: link.id,
                        step,
                    },
                    true,
                );
            }
        }
    }

    for link in &network.links {
        if link.kind == LinkKind::OffRamp {
            continue;
        }
        let g = LinkGeometry::new(link, network.step);
        let built = build_link_constraints(&g, steps, options.prune);
        if let Some(bad) = built.failed_checks().next() {
            return Err(Error::Config(format!(
                "initial densities of link {} are inconsistent ({} exceeds by {:.3e})",
                link.id, bad.label, bad.value
            )));
        }
        prog.pruned_rows += built.pruned;
        if has_inflow_var(link.kind, formulation) {
            for row in &built.rows {
                let expr = form_to_affine(&row.form, link.id, &prog.vars).ok_or_else(|| {
                    Error::Config(format!("missing variable for link {}", link.id))
                })?;
                prog.inequalities.push(Row {
                    tag: RowTag::Compat {
                        link: link.id,
                        label: row.label,
                    },
                    expr,
                });
            }
        } else {
            let (node, _) = network
                .upstream_node(link.id)
                .ok_or_else(|| Error::Config(format!("link {} has no upstream node", link.id)))?;
            let random = robust_nodes.contains(&node.id);
            let source = InflowSource::for_link(network, link.id, random)
                .ok_or_else(|| Error::Config(format!("link {} has no upstream node", link.id)))?;
            for converted in robust::convert_rows(link.id, &built.rows, &prog.vars, &source, kappa)?
            {
                match converted {
                    ConvertedRow::Linear(label, expr) => prog.inequalities.push(Row {
                        tag: RowTag::Compat {
                            link: link.id,
                            label,
                        },
                        expr,
                    }),
                    ConvertedRow::Cone(c) => prog.cones.push(c),
                }
            }
        }
    }

    if matches!(formulation, Formulation::Deterministic) {
        for node in &network.nodes {
            for (row, &out_link) in node.outgoing.iter().enumerate() {
                let kind = network.link(out_link).map(|l| l.kind);
                if kind == Some(LinkKind::OffRamp) {
                    continue;
                }
                for step in 1..=steps {
                    let mut terms = vec![(
                        prog.vars
                            .series_column(VarKind::Inflow, out_link, step)
                            .expect("inflow variable"),
                        1.0,
                    )];
                    for (c, &in_link) in node.incoming.iter().enumerate() {
                        terms.push((
                            prog.vars
                                .series_column(VarKind::Outflow, in_link, step)
                                .expect("outflow variable"),
                            -node.turning_mean[(row, c)],
                        ));
                    }
                    prog.equalities.push(Row {
                        tag: RowTag::Transition {
                            node: node.id,
                            link: out_link,
                            step,
                        },
                        expr: AffineExpr::new(terms, 0.0),
                    });
                }
            }
        }
    }
    Ok(prog)
}

pub fn assemble_deterministic(network: &Network, options: AssemblyOptions) -> Result<ConicProgram> {
    assemble(network, &Formulation::Deterministic, options)
}

/// Weight `n_max - i + 1` of step `i`, favoring early flow.
pub fn step_weight(steps: usize, i: usize) -> f64 {
    (steps - i + 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnrampBoundMode {
    /// Use the explicitly listed (on-ramp, reference link) pairs.
    #[default]
    Printed,
    /// Pair each on-ramp with the other incoming link at its node.
    Prose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreewayConfig {
    /// On-ramp weight relative to mainline flow, in (0, 1).
    pub onramp_weight: f64,
    /// Penalty on the imbalance between the two entry links.
    pub balance_penalty: f64,
    /// Entry links whose lane-weighted outflows are kept proportional.
    pub balanced_pair: Option<(LinkId, LinkId)>,
    pub onramp_bound_mode: OnrampBoundMode,
    /// Pairs used in printed mode: on-ramp inflow at least the reference outflow per lane.
    pub printed_onramp_bounds: Vec<(LinkId, LinkId)>,
    /// Per-lane density that sets each exit link's supply; defaults to the exit link's last
    /// initial segment density.
    pub supply_density: BTreeMap<LinkId, f64>,
    pub alpha: f64,
    pub robust_nodes: BTreeSet<NodeId>,
}

impl Default for FreewayConfig {
    fn default() -> Self {
        Self {
            onramp_weight: 0.1,
            balance_penalty: 100.0,
            balanced_pair: None,
            onramp_bound_mode: OnrampBoundMode::Printed,
            printed_onramp_bounds: Vec::new(),
            supply_density: BTreeMap::new(),
            alpha: 0.1,
            robust_nodes: BTreeSet::new(),
        }
    }
}

impl FreewayConfig {
    pub fn formulation(&self) -> Formulation {
        Formulation::Robust {
            alpha: self.alpha,
            robust_nodes: self.robust_nodes.clone(),
        }
    }

    fn onramp_bounds(&self, network: &Network) -> Result<Vec<(LinkId, LinkId)>> {
        match self.onramp_bound_mode {
            OnrampBoundMode::Printed => Ok(self.printed_onramp_bounds.clone()),
            OnrampBoundMode::Prose => {
                let mut pairs = Vec::new();
                for ramp in network.links.iter().filter(|l| l.kind == LinkKind::OnRamp) {
                    let (node, _) = network
                        .downstream_node(ramp.id)
                        .ok_or_else(|| Error::Config(format!("on-ramp {} has no node", ramp.id)))?;
                    let partner = node
                        .incoming
                        .iter()
                        .copied()
                        .find(|&l| {
                            l != ramp.id
                                && network.link(l).is_some_and(|s| s.kind != LinkKind::OnRamp)
                        })
                        .ok_or_else(|| {
                            Error::Config(format!("on-ramp {} has no mainline partner", ramp.id))
                        })?;
                    pairs.push((ramp.id, partner));
                }
                Ok(pairs)
            }
        }
    }
}

fn col(prog: &ConicProgram, kind: VarKind, link: LinkId, step: usize) -> Result<usize> {
    prog.vars
        .series_column(kind, link, step)
        .ok_or_else(|| Error::Config(format!("no {kind:?} variable for link {link} step {step}")))
}

/// Freeway ramp-metering problem: maximize weighted mainline and entry flow, favor mainline
/// over on-ramps, and keep the two entries balanced.
pub fn assemble_freeway(
    network: &Network,
    cfg: &FreewayConfig,
    formulation: &Formulation,
    options: AssemblyOptions,
) -> Result<ConicProgram> {
    if !(cfg.onramp_weight > 0.0 && cfg.onramp_weight < 1.0) {
        return Err(Error::Config(format!(
            "on-ramp weight {} must lie in (0, 1)",
            cfg.onramp_weight
        )));
    }
    if !(cfg.balance_penalty > 0.0) {
        return Err(Error::Config(format!(
            "balance penalty {} must be positive",
            cfg.balance_penalty
        )));
    }
    let mut prog = assemble(network, formulation, options)?;
    let steps = network.steps;

    for i in 1..=steps {
        let w = step_weight(steps, i);
        for link in &network.links {
            if !link.kind.is_ramp() {
                let c = col(&prog, VarKind::Outflow, link.id, i)?;
                prog.objective[c] -= w;
            }
            match link.kind {
                LinkKind::IncomingBoundary => {
                    let c = col(&prog, VarKind::Inflow, link.id, i)?;
                    prog.objective[c] -= w;
                }
                LinkKind::OnRamp => {
                    let c = col(&prog, VarKind::Inflow, link.id, i)?;
                    prog.objective[c] -= cfg.onramp_weight * w;
                }
                _ => {}
            }
        }
    }

    if let Some((a, b)) = cfg.balanced_pair {
        let lanes = |id: LinkId| {
            network
                .link(id)
                .map(|l| l.lanes as f64)
                .ok_or(crate::error::NetworkError::UnknownLink(id))
        };
        let (la, lb) = (lanes(a)?, lanes(b)?);
        for i in 1..=steps {
            let y = prog.add_var(
                VarIndex {
                    kind: VarKind::Slack,
                    link: LinkId(0),
                    step: i,
                },
                false,
            );
            prog.objective[y] += cfg.balance_penalty;
            let qa = col(&prog, VarKind::Outflow, a, i)?;
            let qb = col(&prog, VarKind::Outflow, b, i)?;
            for upper in [true, false] {
                let s = if upper { 1.0 } else { -1.0 };
                prog.inequalities.push(Row {
                    tag: RowTag::Balance { step: i, upper },
                    expr: AffineExpr::new(vec![(qa, s * lb), (qb, -s * la), (y, -1.0)], 0.0),
                });
            }
        }
    }

    for (ramp, reference) in cfg.onramp_bounds(network)? {
        let lanes = network
            .link(reference)
            .ok_or(crate::error::NetworkError::UnknownLink(reference))?
            .lanes as f64;
        for i in 1..=steps {
            let q_on = col(&prog, VarKind::Inflow, ramp, i)?;
            let q_ref = col(&prog, VarKind::Outflow, reference, i)?;
            prog.inequalities.push(Row {
                tag: RowTag::OnRampBound {
                    link: ramp,
                    step: i,
                },
                expr: AffineExpr::new(vec![(q_ref, 1.0 / lanes), (q_on, -1.0)], 0.0),
            });
        }
    }

    for link in network
        .links
        .iter()
        .filter(|l| l.kind == LinkKind::OutgoingBoundary)
    {
        let rho = cfg
            .supply_density
            .get(&link.id)
            .copied()
            .unwrap_or_else(|| *link.init_density.last().expect("validated segments"));
        let supply = link.fd.supply(rho)? * link.lanes as f64;
        for i in 1..=steps {
            let q = col(&prog, VarKind::Outflow, link.id, i)?;
            prog.inequalities.push(Row {
                tag: RowTag::ExitSupply {
                    link: link.id,
                    step: i,
                },
                expr: AffineExpr::new(vec![(q, 1.0)], -supply),
            });
        }
    }
    Ok(prog)
}

pub fn assemble_freeway_robust(network: &Network, cfg: &FreewayConfig) -> Result<ConicProgram> {
    assemble_freeway(network, cfg, &cfg.formulation(), AssemblyOptions::default())
}

/// Green (`true`) or red per control step for links entering signalized nodes.
pub type SignalTable = BTreeMap<LinkId, Vec<bool>>;

#[derive(Debug, Clone, PartialEq)]
pub struct UrbanConfig {
    /// Weight of the squared step-to-step change of entry inflows.
    pub omega: f64,
    /// Fraction of capacity available at each exit.
    pub exit_fraction: f64,
    pub signals: SignalTable,
    pub alpha: f64,
    pub robust_nodes: BTreeSet<NodeId>,
}

impl UrbanConfig {
    pub fn formulation(&self) -> Formulation {
        Formulation::Robust {
            alpha: self.alpha,
            robust_nodes: self.robust_nodes.clone(),
        }
    }
}

/// Urban grid problem: maximize weighted throughput with smooth entry inflows, under fixed
/// signal phases and reduced exit capacities.
pub fn assemble_urban(
    network: &Network,
    cfg: &UrbanConfig,
    formulation: &Formulation,
    options: AssemblyOptions,
) -> Result<ConicProgram> {
    if !(cfg.omega >= 0.0) {
        return Err(Error::Config(format!(
            "omega {} must be nonnegative",
            cfg.omega
        )));
    }
    if !(cfg.exit_fraction > 0.0 && cfg.exit_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "exit fraction {} must lie in (0, 1]",
            cfg.exit_fraction
        )));
    }
    let mut prog = assemble(network, formulation, options)?;
    let steps = network.steps;
    for i in 1..=steps {
        let w = step_weight(steps, i);
        for link in &network.links {
            if has_outflow_var(link.kind) {
                let c = col(&prog, VarKind::Outflow, link.id, i)?;
                prog.objective[c] -= w;
            }
            if link.kind == LinkKind::IncomingBoundary {
                let c = col(&prog, VarKind::Inflow, link.id, i)?;
                prog.objective[c] -= w;
            }
        }
    }
    if cfg.omega > 0.0 {
        for link in network
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::IncomingBoundary)
        {
            for i in 1..steps {
                let a = col(&prog, VarKind::Inflow, link.id, i)?;
                let b = col(&prog, VarKind::Inflow, link.id, i + 1)?;
                prog.quadratic.push(QuadTerm {
                    weight: cfg.omega,
                    expr: AffineExpr::new(vec![(a, 1.0), (b, -1.0)], 0.0),
                });
            }
        }
    }
    for link in &network.links {
        let cap = link.capacity();
        if link.kind == LinkKind::OutgoingBoundary {
            for i in 1..=steps {
                let q = col(&prog, VarKind::Outflow, link.id, i)?;
                prog.inequalities.push(Row {
                    tag: RowTag::ExitCapacity {
                        link: link.id,
                        step: i,
                    },
                    expr: AffineExpr::new(vec![(q, 1.0)], -cfg.exit_fraction * cap),
                });
            }
        }
        if let Some(phases) = cfg.signals.get(&link.id) {
            if phases.len() != steps {
                return Err(Error::Config(format!(
                    "signal table for link {} has {} steps, expected {steps}",
                    link.id,
                    phases.len()
                )));
            }
            for (i, &green) in phases.iter().enumerate() {
                let q = col(&prog, VarKind::Outflow, link.id, i + 1)?;
                prog.inequalities.push(Row {
                    tag: RowTag::Signal {
                        link: link.id,
                        step: i + 1,
                    },
                    expr: AffineExpr::new(vec![(q, 1.0)], if green { -cap } else { 0.0 }),
                });
            }
        }
    }
    Ok(prog)
}

pub fn assemble_urban_robust(network: &Network, cfg: &UrbanConfig) -> Result<ConicProgram> {
    assemble_urban(network, cfg, &cfg.formulation(), AssemblyOptions::default())
}

/// Inflow and outflow series of one link in a solution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkFlows {
    pub q_in: Vec<f64>,
    pub q_out: Vec<f64>,
}

/// Extracts per-link series. Substituted inflows are reported under the mean ratios; off-ramps
/// have no outflow series and report zeros.
pub fn link_flows(
    network: &Network,
    prog: &ConicProgram,
    x: &[f64],
) -> BTreeMap<LinkId, LinkFlows> {
    let steps = network.steps;
    let series = |kind, link| -> Option<Vec<f64>> {
        (1..=steps)
            .map(|i| prog.vars.series_column(kind, link, i).map(|c| x[c]))
            .collect()
    };
    let mut out = BTreeMap::new();
    for link in &network.links {
        let q_out = series(VarKind::Outflow, link.id).unwrap_or_else(|| vec![0.0; steps]);
        out.insert(
            link.id,
            LinkFlows {
                q_in: Vec::new(),
                q_out,
            },
        );
    }
    for link in &network.links {
        let q_in = series(VarKind::Inflow, link.id).unwrap_or_else(|| {
            let mut q = vec![0.0; steps];
            if let Some((node, row)) = network.upstream_node(link.id) {
                for (c, r) in node.incoming.iter().enumerate() {
                    let p = node.turning_mean[(row, c)];
                    for (i, qi) in q.iter_mut().enumerate() {
                        *qi += p * out[r].q_out[i];
                    }
                }
            }
            q
        });
        out.get_mut(&link.id).expect("inserted").q_in = q_in;
    }
    out
}

/// Controls of a solution: inflow series of entry links and on-ramps.
pub fn controls(
    network: &Network,
    flows: &BTreeMap<LinkId, LinkFlows>,
) -> BTreeMap<LinkId, Vec<f64>> {
    network
        .controllable_links()
        .map(|l| (l.id, flows[&l.id].q_in.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FundamentalDiagram, LinkSpec};

    fn single_link(steps: usize, rho: f64) -> Network {
        Network {
            links: vec![LinkSpec {
                id: LinkId(1),
                length: 600.0,
                lanes: 1,
                segments: 1,
                init_density: vec![rho],
                fd: FundamentalDiagram::continuous(30.0, 0.0175, 0.225),
                kind: LinkKind::IncomingBoundary,
            }],
            nodes: vec![],
            boundary_in: vec![LinkId(1)],
            step: 20.0,
            steps,
        }
    }

    #[test]
    fn single_link_has_only_compat_rows() {
        let net = single_link(3, 0.0);
        let p = assemble_deterministic(&net, AssemblyOptions::default()).unwrap();
        assert_eq!(p.vars.len(), 6);
        assert!(p.equalities.is_empty());
        assert!(p.cones.is_empty());
        assert!(p
            .inequalities
            .iter()
            .all(|r| matches!(r.tag, RowTag::Compat { .. })));
    }

    #[test]
    fn step_weights_decrease() {
        assert_eq!(step_weight(25, 1), 25.0);
        assert_eq!(step_weight(25, 25), 1.0);
        assert_eq!(step_weight(1, 1), 1.0);
    }

    #[test]
    fn invalid_alpha_rejected() {
        let net = single_link(2, 0.0);
        let f = Formulation::Robust {
            alpha: 0.7,
            robust_nodes: BTreeSet::new(),
        };
        assert!(matches!(
            assemble(&net, &f, AssemblyOptions::default()),
            Err(Error::InvalidAlpha(_))
        ));
    }
}
