//! Ready-made case studies and scenario files.
//!
//! Freeway: two entries merging at node 2, then two parallel corridors each with an on-ramp
//! and an off-ramp. Urban: a one-way street grid with fixed-time signals.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::backend::ClarabelBackend;
use crate::ctm::CtmSettings;
use crate::error::{Error, Result};
use crate::io::{self, NetworkFile};
use crate::network::{FundamentalDiagram, LinkId, LinkKind, LinkSpec, Network, NodeId, NodeSpec};
use crate::program::{
    assemble_freeway, assemble_urban, controls, link_flows, AssemblyOptions, ConicBackend,
    ConicProgram, Formulation, FreewayConfig, LinkFlows, OnrampBoundMode, SignalTable, SolveResult,
    SolveStatus, Tolerances, UrbanConfig,
};

pub const BUILTIN_NAMES: [&str; 5] = [
    "freeway-free",
    "freeway-congested",
    "freeway-partial",
    "freeway-validation",
    "urban-grid",
];

/// Default confidence sweep, as `alpha = 1 - confidence`.
pub const ALPHA_SWEEP: [f64; 4] = [0.2, 0.15, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Freeway(FreewayConfig),
    Urban(UrbanConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Short description of the initial traffic state.
    pub regime: String,
    pub network: Network,
    pub robust_nodes: BTreeSet<NodeId>,
    pub alphas: Vec<f64>,
    pub model: Model,
    /// Turning matrices realized in simulation, replacing the means at the listed nodes.
    pub realized: BTreeMap<NodeId, DMatrix<f64>>,
    pub ctm: CtmSettings,
}

impl Scenario {
    pub fn formulation(&self, alpha: Option<f64>) -> Formulation {
        match alpha {
            None => Formulation::Deterministic,
            Some(alpha) => Formulation::Robust {
                alpha,
                robust_nodes: self.robust_nodes.clone(),
            },
        }
    }

    /// Assembles the scenario's program; `None` gives the deterministic base case.
    pub fn program(&self, alpha: Option<f64>, options: AssemblyOptions) -> Result<ConicProgram> {
        let f = self.formulation(alpha);
        match &self.model {
            Model::Freeway(cfg) => assemble_freeway(&self.network, cfg, &f, options),
            Model::Urban(cfg) => assemble_urban(&self.network, cfg, &f, options),
        }
    }

    /// Assembles and solves with the default backend. A non-optimal status is an error.
    pub fn solve(&self, alpha: Option<f64>) -> Result<Solved> {
        self.solve_with(
            alpha,
            AssemblyOptions::default(),
            &ClarabelBackend::default(),
        )
    }

    pub fn solve_with(
        &self,
        alpha: Option<f64>,
        options: AssemblyOptions,
        backend: &dyn ConicBackend,
    ) -> Result<Solved> {
        let program = self.program(alpha, options)?;
        let result = backend.solve(&program, &Tolerances::default())?;
        if result.status != SolveStatus::Optimal {
            return Err(Error::Solver(format!(
                "{} ({}): {:?} after {} iterations",
                self.name,
                alpha.map_or("deterministic".to_string(), |a| format!("alpha {a}")),
                result.status,
                result.iterations
            )));
        }
        let flows = link_flows(&self.network, &program, &result.x);
        Ok(Solved {
            alpha,
            program,
            result,
            flows,
        })
    }

    /// Turning matrices used by the simulator: realized where given, means elsewhere.
    pub fn realized_network(&self) -> Network {
        let mut net = self.network.clone();
        for (id, p) in &self.realized {
            if let Some(node) = net.node_mut(*id) {
                node.turning_mean = p.clone();
            }
        }
        net
    }
}

/// An optimal solution together with the program it solves.
#[derive(Debug, Clone)]
pub struct Solved {
    pub alpha: Option<f64>,
    pub program: ConicProgram,
    pub result: SolveResult,
    pub flows: BTreeMap<LinkId, LinkFlows>,
}

impl Solved {
    pub fn objective(&self) -> f64 {
        self.result.objective
    }

    /// Inflow series of the controllable links.
    pub fn controls(&self, network: &Network) -> BTreeMap<LinkId, Vec<f64>> {
        controls(network, &self.flows)
    }
}

pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "freeway-free" => Ok(freeway(name, Regime::Free)),
        "freeway-congested" => Ok(freeway(name, Regime::Congested)),
        "freeway-partial" => Ok(freeway(name, Regime::Partial)),
        "freeway-validation" => Ok(freeway(name, Regime::Validation)),
        "urban-grid" => Ok(urban_grid()),
        _ => Err(Error::UnknownScenario(name.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Free,
    Congested,
    Partial,
    Validation,
}

pub fn freeway_fd() -> FundamentalDiagram {
    FundamentalDiagram::new(30.0, -5.5, 0.0175, 0.225)
}

pub fn urban_fd() -> FundamentalDiagram {
    FundamentalDiagram::new(13.5, -3.86, 0.025, 0.125)
}

fn node(id: u32, incoming: &[u32], outgoing: &[u32], p: &[f64], cov: &[f64]) -> NodeSpec {
    let (m, n) = (outgoing.len(), incoming.len());
    NodeSpec {
        id: NodeId(id),
        incoming: incoming.iter().map(|&l| LinkId(l)).collect(),
        outgoing: outgoing.iter().map(|&l| LinkId(l)).collect(),
        turning_mean: DMatrix::from_row_slice(m, n, p),
        turning_cov: DMatrix::from_row_slice(n, n, cov),
    }
}

fn freeway(name: &str, regime: Regime) -> Scenario {
    let fd = freeway_fd();
    let rc = fd.critical_density;
    let free = 0.8 * rc;
    let jammed = 4.0 * rc;
    let density = |id: u32| match regime {
        Regime::Free => free,
        Regime::Congested => jammed,
        Regime::Partial | Regime::Validation => {
            if id <= 4 {
                jammed
            } else {
                free
            }
        }
    };
    let mut links = Vec::new();
    for id in 1..=6u32 {
        let kind = match id {
            1 | 4 => LinkKind::IncomingBoundary,
            2 | 5 => LinkKind::Interior,
            _ => LinkKind::OutgoingBoundary,
        };
        links.push(LinkSpec {
            id: LinkId(id),
            length: 1200.0,
            lanes: if id <= 3 { 4 } else { 3 },
            segments: 2,
            init_density: vec![density(id); 2],
            fd,
            kind,
        });
    }
    for (id, kind) in [
        (7, LinkKind::OnRamp),
        (8, LinkKind::OnRamp),
        (9, LinkKind::OffRamp),
        (10, LinkKind::OffRamp),
    ] {
        links.push(LinkSpec {
            id: LinkId(id),
            length: 200.0,
            lanes: 1,
            segments: 1,
            init_density: vec![0.0],
            fd,
            kind,
        });
    }
    let p2: &[f64] = match regime {
        Regime::Free | Regime::Congested => &[0.80, 0.27, 0.20, 0.73],
        Regime::Partial | Regime::Validation => &[0.60, 0.80, 0.40, 0.20],
    };
    let ramp_p = [0.80, 1.00, 0.20, 0.00];
    let ramp_cov = [0.005, 0.0, 0.0, 0.0];
    let network = Network {
        links,
        nodes: vec![
            node(2, &[1, 4], &[2, 5], p2, &[0.005, 0.001, 0.001, 0.005]),
            node(3, &[2, 7], &[3, 9], &ramp_p, &ramp_cov),
            node(6, &[5, 8], &[6, 10], &ramp_p, &ramp_cov),
        ],
        boundary_in: vec![LinkId(1), LinkId(4)],
        step: 20.0,
        steps: 25,
    };
    let (robust, alphas, regime_name) = match regime {
        Regime::Free => (6, ALPHA_SWEEP.to_vec(), "free flow"),
        Regime::Congested => (3, ALPHA_SWEEP.to_vec(), "congested"),
        Regime::Partial => (3, ALPHA_SWEEP.to_vec(), "partially congested"),
        Regime::Validation => (2, vec![0.1], "partially congested"),
    };
    let robust_nodes: BTreeSet<NodeId> = [NodeId(robust)].into();
    let mut realized = BTreeMap::new();
    if regime == Regime::Validation {
        realized.insert(
            NodeId(2),
            DMatrix::from_row_slice(2, 2, &[0.70, 0.85, 0.30, 0.15]),
        );
    }
    let cfg = FreewayConfig {
        onramp_weight: 0.1,
        balance_penalty: 100.0,
        balanced_pair: Some((LinkId(1), LinkId(4))),
        onramp_bound_mode: OnrampBoundMode::Printed,
        printed_onramp_bounds: vec![(LinkId(7), LinkId(2)), (LinkId(8), LinkId(4))],
        supply_density: BTreeMap::new(),
        alpha: alphas[0],
        robust_nodes: robust_nodes.clone(),
    };
    Scenario {
        name: name.to_string(),
        regime: regime_name.to_string(),
        network,
        robust_nodes,
        alphas,
        model: Model::Freeway(cfg),
        realized,
        ctm: CtmSettings::default(),
    }
}

pub const GRID_ROWS: usize = 4;
pub const GRID_COLS: usize = 5;
const SIGNAL_CYCLE_S: f64 = 60.0;
const SIGNAL_SPLIT: f64 = 0.5;

/// Direction of travel of a grid link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Heading {
    East,
    West,
    South,
    North,
}

impl Heading {
    fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }

    fn opposite(self) -> Heading {
        match self {
            Heading::East => Heading::West,
            Heading::West => Heading::East,
            Heading::South => Heading::North,
            Heading::North => Heading::South,
        }
    }
}

fn grid_node(r: usize, c: usize) -> NodeId {
    NodeId((r * GRID_COLS + c + 1) as u32)
}

/// Streets of the grid: each row and each column carries one direction, alternating, and the
/// first row is two-way.
fn grid_streets() -> Vec<(Heading, usize)> {
    let mut streets = Vec::new();
    for r in 0..GRID_ROWS {
        streets.push((
            if r % 2 == 0 {
                Heading::East
            } else {
                Heading::West
            },
            r,
        ));
        if r == 0 {
            streets.push((Heading::West, r));
        }
    }
    for c in 0..GRID_COLS {
        streets.push((
            if c % 2 == 0 {
                Heading::South
            } else {
                Heading::North
            },
            c,
        ));
    }
    streets
}

/// Synthetic downtown grid: 20 signalized nodes, 55 links, 10 controllable entries.
pub fn urban_grid() -> Scenario {
    let fd = urban_fd();
    let mut links = Vec::new();
    let mut heading: BTreeMap<LinkId, Heading> = BTreeMap::new();
    // Per node: (incoming, outgoing) link lists.
    let mut attach: BTreeMap<NodeId, (Vec<LinkId>, Vec<LinkId>)> = BTreeMap::new();
    let mut next = 1u32;
    for (h, line) in grid_streets() {
        let len = if h.is_horizontal() {
            GRID_COLS
        } else {
            GRID_ROWS
        };
        let at = |k: usize| {
            let k = match h {
                Heading::East | Heading::South => k,
                Heading::West | Heading::North => len - 1 - k,
            };
            if h.is_horizontal() {
                grid_node(line, k)
            } else {
                grid_node(k, line)
            }
        };
        // Positions 0..=len along the street: entry, len - 1 interior links, exit.
        for k in 0..=len {
            let id = LinkId(next);
            next += 1;
            let kind = if k == 0 {
                LinkKind::IncomingBoundary
            } else if k == len {
                LinkKind::OutgoingBoundary
            } else {
                LinkKind::Interior
            };
            if k > 0 {
                attach.entry(at(k - 1)).or_default().1.push(id);
            }
            if k < len {
                attach.entry(at(k)).or_default().0.push(id);
            }
            heading.insert(id, h);
            links.push(LinkSpec {
                id,
                length: 128.0,
                lanes: if h.is_horizontal() { 2 } else { 3 },
                segments: 2,
                init_density: vec![0.0, fd.critical_density],
                fd,
                kind,
            });
        }
    }

    let mut nodes = Vec::new();
    for (id, (incoming, outgoing)) in attach {
        let (m, n) = (outgoing.len(), incoming.len());
        let mut p = DMatrix::zeros(m, n);
        for (j, l_in) in incoming.iter().enumerate() {
            let h = heading[l_in];
            let allowed: Vec<usize> = (0..m)
                .filter(|&i| heading[&outgoing[i]] != h.opposite())
                .collect();
            let straight = allowed
                .iter()
                .copied()
                .find(|&i| heading[&outgoing[i]] == h);
            match (straight, allowed.len()) {
                (Some(s), 1) => p[(s, j)] = 1.0,
                (Some(s), k) => {
                    for &i in &allowed {
                        p[(i, j)] = if i == s { 0.8 } else { 0.2 / (k - 1) as f64 };
                    }
                }
                (None, k) => {
                    for &i in &allowed {
                        p[(i, j)] = 1.0 / k as f64;
                    }
                }
            }
        }
        let cov = DMatrix::from_fn(n, n, |a, b| if a == b { 0.005 } else { 0.001 });
        nodes.push(NodeSpec {
            id,
            incoming,
            outgoing,
            turning_mean: p,
            turning_cov: cov,
        });
    }

    let step = 4.0;
    let steps = 75;
    let boundary_in = links
        .iter()
        .filter(|l| l.kind == LinkKind::IncomingBoundary)
        .map(|l| l.id)
        .collect();
    let network = Network {
        links,
        nodes,
        boundary_in,
        step,
        steps,
    };
    let signals = fixed_time_signals(&network, |id| heading[&id].is_horizontal());
    let robust_nodes: BTreeSet<NodeId> = network.nodes.iter().map(|n| n.id).collect();
    let cfg = UrbanConfig {
        omega: 0.2,
        exit_fraction: 0.8,
        signals,
        alpha: 0.1,
        robust_nodes: robust_nodes.clone(),
    };
    Scenario {
        name: "urban-grid".to_string(),
        regime: "empty upstream halves, critical downstream halves".to_string(),
        network,
        robust_nodes,
        alphas: vec![0.1],
        model: Model::Urban(cfg),
        realized: BTreeMap::new(),
        ctm: CtmSettings {
            step: 2.0,
            cell_length: 32.0,
            ..CtmSettings::default()
        },
    }
}

/// Two-phase fixed-time plan with zero offsets. A step is green for a link when the step's
/// midpoint falls in the link's phase.
pub fn fixed_time_signals(network: &Network, first_phase: impl Fn(LinkId) -> bool) -> SignalTable {
    let green_time = SIGNAL_CYCLE_S * SIGNAL_SPLIT;
    network
        .links
        .iter()
        .filter(|l| network.downstream_node(l.id).is_some())
        .map(|l| {
            let phases = (1..=network.steps)
                .map(|i| {
                    let mid = (i as f64 - 0.5) * network.step;
                    let in_first = mid.rem_euclid(SIGNAL_CYCLE_S) < green_time;
                    in_first == first_phase(l.id)
                })
                .collect();
            (l.id, phases)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelFile {
    Freeway {
        #[serde(default = "default_onramp_weight")]
        onramp_weight: f64,
        #[serde(default = "default_balance_penalty")]
        balance_penalty: f64,
        #[serde(default)]
        balanced_pair: Option<(LinkId, LinkId)>,
        #[serde(default)]
        onramp_bound_mode: OnrampBoundMode,
        /// (on-ramp, reference link) pairs.
        #[serde(default)]
        onramp_bounds: Vec<(LinkId, LinkId)>,
    },
    Urban {
        omega: f64,
        exit_fraction: f64,
        /// Green flags per control step; links without an entry are unsignalized.
        #[serde(default)]
        signals: Vec<SignalFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFile {
    pub link: LinkId,
    pub green: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedFile {
    pub node: NodeId,
    /// Row-major, same shape as the node's `P`.
    #[serde(rename = "P")]
    pub p: Vec<f64>,
}

fn default_onramp_weight() -> f64 {
    0.1
}

fn default_balance_penalty() -> f64 {
    100.0
}

/// Scenario file: a network file plus the control problem around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub network: NetworkFile,
    #[serde(default)]
    pub regime: Option<String>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub robust_nodes: Vec<NodeId>,
    pub model: ModelFile,
    #[serde(rename = "realized_P", default)]
    pub realized_p: Vec<RealizedFile>,
    #[serde(default)]
    pub ctm: Option<CtmSettings>,
}

impl ScenarioFile {
    pub fn into_scenario(self, fallback_name: &str) -> Result<Scenario> {
        let network = self.network.into_network()?;
        let robust_nodes: BTreeSet<NodeId> = self.robust_nodes.into_iter().collect();
        let alphas = if self.alpha.is_empty() {
            vec![0.1]
        } else {
            self.alpha
        };
        let model = match self.model {
            ModelFile::Freeway {
                onramp_weight,
                balance_penalty,
                balanced_pair,
                onramp_bound_mode,
                onramp_bounds,
            } => Model::Freeway(FreewayConfig {
                onramp_weight,
                balance_penalty,
                balanced_pair,
                onramp_bound_mode,
                printed_onramp_bounds: onramp_bounds,
                supply_density: BTreeMap::new(),
                alpha: alphas[0],
                robust_nodes: robust_nodes.clone(),
            }),
            ModelFile::Urban {
                omega,
                exit_fraction,
                signals,
            } => Model::Urban(UrbanConfig {
                omega,
                exit_fraction,
                signals: signals.into_iter().map(|f| (f.link, f.green)).collect(),
                alpha: alphas[0],
                robust_nodes: robust_nodes.clone(),
            }),
        };
        let mut realized = BTreeMap::new();
        for RealizedFile {
            node: id,
            p: values,
        } in self.realized_p
        {
            let node = network
                .node(id)
                .ok_or(crate::error::NetworkError::UnknownNode(id))?;
            let p = io::matrix(
                &values,
                node.outgoing.len(),
                node.incoming.len(),
                &format!("realized_P of node {id}"),
            )?;
            realized.insert(id, p);
        }
        Ok(Scenario {
            name: self.name.unwrap_or_else(|| fallback_name.to_string()),
            regime: self.regime.unwrap_or_default(),
            network,
            robust_nodes,
            alphas,
            model,
            realized,
            ctm: self.ctm.unwrap_or_default(),
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let model = match &s.model {
            Model::Freeway(c) => ModelFile::Freeway {
                onramp_weight: c.onramp_weight,
                balance_penalty: c.balance_penalty,
                balanced_pair: c.balanced_pair,
                onramp_bound_mode: c.onramp_bound_mode,
                onramp_bounds: c.printed_onramp_bounds.clone(),
            },
            Model::Urban(c) => ModelFile::Urban {
                omega: c.omega,
                exit_fraction: c.exit_fraction,
                signals: c
                    .signals
                    .iter()
                    .map(|(&link, green)| SignalFile {
                        link,
                        green: green.clone(),
                    })
                    .collect(),
            },
        };
        Self {
            name: Some(s.name.clone()),
            network: NetworkFile::from_network(&s.network),
            regime: Some(s.regime.clone()),
            alpha: s.alphas.clone(),
            robust_nodes: s.robust_nodes.iter().copied().collect(),
            model,
            realized_p: s
                .realized
                .iter()
                .map(|(&node, p)| RealizedFile {
                    node,
                    p: io::row_major(p),
                })
                .collect(),
            ctm: Some(s.ctm),
        }
    }
}

pub fn parse_scenario(json: &str, fallback_name: &str) -> Result<Scenario> {
    serde_json::from_str::<ScenarioFile>(json)?.into_scenario(fallback_name)
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("plain data serializes")
}

/// Resolves a builtin name, or else reads a scenario file.
pub fn load(name_or_path: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownScenario(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scenario(&text, &stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn densities(s: &Scenario, id: u32) -> Vec<f64> {
        s.network.link(LinkId(id)).unwrap().init_density.clone()
    }

    #[test]
    fn regimes_set_densities() {
        let free = builtin("freeway-free").unwrap();
        assert!((1..=6).all(|l| densities(&free, l)
            .iter()
            .all(|&r| (r - 0.014).abs() < 1e-15)));
        let jam = builtin("freeway-congested").unwrap();
        assert!((1..=6).all(|l| densities(&jam, l).iter().all(|&r| (r - 0.07).abs() < 1e-15)));
        let part = builtin("freeway-partial").unwrap();
        assert!((1..=4).all(|l| densities(&part, l)[0] == 0.07));
        assert!((5..=6).all(|l| densities(&part, l)[0] == 0.8 * 0.0175));
    }

    #[test]
    fn builtins_validate_with_only_the_fd_warning() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            let report = s.network.validate();
            assert!(report.is_valid(), "{name}: {report}");
            assert_eq!(report.warnings().count(), 1, "{name}: {report}");
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(builtin("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn urban_grid_shape() {
        let s = urban_grid();
        let net = &s.network;
        assert_eq!(net.links.len(), 55);
        assert_eq!(net.nodes.len(), 20);
        assert_eq!(net.boundary_in.len(), 10);
        assert_eq!(net.steps, 75);
        assert_eq!(net.horizon(), 300.0);
        let Model::Urban(cfg) = &s.model else {
            panic!("urban model expected")
        };
        // Half of each 60 s cycle, snapped to the 4 s grid by step midpoints.
        for phases in cfg.signals.values() {
            let greens = phases.iter().filter(|&&g| g).count();
            assert!(greens == 35 || greens == 40, "{greens}");
        }
    }

    #[test]
    fn urban_turning_ratios_favor_straight() {
        let s = urban_grid();
        for node in &s.network.nodes {
            for j in 0..node.incoming.len() {
                let col = node.turning_mean.column(j);
                assert!((col.sum() - 1.0).abs() < 1e-12);
                assert!(col.max() >= 0.8 - 1e-12);
            }
        }
    }

    #[test]
    fn builtins_are_reproducible() {
        for name in BUILTIN_NAMES {
            let a = scenario_to_json(&builtin(name).unwrap());
            let b = scenario_to_json(&builtin(name).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            let back = parse_scenario(&scenario_to_json(&s), "x").unwrap();
            assert_eq!(back, s, "{name}");
        }
    }

    #[test]
    fn validation_realizes_node_two() {
        let s = builtin("freeway-validation").unwrap();
        let net = s.realized_network();
        assert_eq!(net.node(NodeId(2)).unwrap().turning_mean[(0, 0)], 0.70);
        assert_eq!(
            s.network.node(NodeId(2)).unwrap().turning_mean[(0, 0)],
            0.60
        );
    }
}
