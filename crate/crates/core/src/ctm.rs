//! Cell Transmission Model used to replay computed controls under realized turning ratios.
//!
//! Cells exchange `min(demand, supply)` each step. Junctions serve mainline links before
//! on-ramps and split each incoming flow by the realized ratios, throttled by its most
//! restrictive branch. Off-ramps are sinks. Entry demand that does not fit into the first cell
//! waits in an unbounded queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FundamentalDiagram, LinkId, LinkKind, Network};
use crate::program::SignalTable;

/// Tolerance of the per-step vehicle balance.
pub const STEP_CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeRule {
    /// Mainline links are served before on-ramps.
    #[default]
    Priority,
    /// All incoming links share the available supply in proportion to their demand.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmSettings {
    /// Simulation step (s).
    pub step: f64,
    /// Target cell length (m).
    pub cell_length: f64,
    #[serde(default)]
    pub merge: MergeRule,
}

impl Default for CtmSettings {
    fn default() -> Self {
        Self {
            step: 5.0,
            cell_length: 200.0,
            merge: MergeRule::Priority,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmLink {
    pub id: LinkId,
    pub kind: LinkKind,
    pub cells: usize,
    pub cell_length: f64,
    pub lanes: f64,
    pub fd: FundamentalDiagram,
    /// Discharge bound (veh/s) for links that leave the network.
    pub exit_bound: Option<f64>,
}

impl CtmLink {
    /// Vehicles a cell can send in one step.
    fn send(&self, n: f64, dt: f64) -> f64 {
        let rho = n / (self.cell_length * self.lanes);
        let fd = &self.fd;
        (fd.free_speed * rho).min(fd.capacity()).max(0.0) * self.lanes * dt
    }

    /// Vehicles a cell can accept in one step: the supply function, never more than the
    /// room left in the cell.
    fn receive(&self, n: f64, dt: f64) -> f64 {
        let room = (self.jam_occupancy() - n).max(0.0);
        let rho = (n / (self.cell_length * self.lanes)).clamp(0.0, self.fd.jam_density);
        (self.fd.supply_unchecked(rho) * self.lanes * dt).min(room)
    }

    pub fn jam_occupancy(&self) -> f64 {
        self.fd.jam_density * self.cell_length * self.lanes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outlet {
    Link(usize),
    Sink(LinkId),
}

#[derive(Debug, Clone, PartialEq)]
struct CtmNode {
    incoming: Vec<usize>,
    outgoing: Vec<Outlet>,
    /// Realized ratios, rows = outgoing, columns = incoming.
    ratios: Vec<Vec<f64>>,
    /// Service class per incoming link; lower is served first.
    class: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmNetwork {
    pub links: Vec<CtmLink>,
    nodes: Vec<CtmNode>,
    sinks: Vec<LinkId>,
    /// Control step (s) of the control series.
    pub control_step: f64,
    pub control_steps: usize,
    pub step: f64,
    signals: BTreeMap<usize, Vec<bool>>,
    initial: Vec<Vec<f64>>,
}

/// Splits links into cells, checks the CFL condition and fixes the realized ratios.
pub fn discretize(network: &Network, settings: &CtmSettings) -> Result<CtmNetwork> {
    let dt = settings.step;
    if !(dt > 0.0 && settings.cell_length > 0.0) {
        return Err(Error::Config(
            "simulation step and cell length must be positive".to_string(),
        ));
    }
    let index: BTreeMap<LinkId, usize> = network
        .links
        .iter()
        .filter(|l| l.kind != LinkKind::OffRamp)
        .enumerate()
        .map(|(i, l)| (l.id, i))
        .collect();
    let mut links = Vec::new();
    let mut initial = Vec::new();
    for l in network.links.iter().filter(|l| l.kind != LinkKind::OffRamp) {
        if settings.cell_length > l.length {
            return Err(Error::Cfl {
                link: l.id,
                detail: format!(
                    "cell length {} exceeds link length {}",
                    settings.cell_length, l.length
                ),
            });
        }
        let cells = (l.length / settings.cell_length).round().max(1.0) as usize;
        let cell_length = l.length / cells as f64;
        let fastest = l.fd.free_speed.max(-l.fd.wave_speed);
        if fastest * dt > cell_length * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                link: l.id,
                detail: format!(
                    "wave speed {fastest} m/s covers {} m per step, cells are {cell_length} m",
                    fastest * dt
                ),
            });
        }
        let lanes = l.lanes as f64;
        let seg = l.segment_length();
        let occupancy = (0..cells)
            .map(|c| {
                let mid = (c as f64 + 0.5) * cell_length;
                let k = ((mid / seg) as usize).min(l.segments - 1);
                l.init_density[k] * cell_length * lanes
            })
            .collect();
        initial.push(occupancy);
        let exit_bound = if network.downstream_node(l.id).is_none() {
            let rho = *l.init_density.last().unwrap_or(&0.0);
            Some(l.fd.supply(rho)? * lanes)
        } else {
            None
        };
        links.push(CtmLink {
            id: l.id,
            kind: l.kind,
            cells,
            cell_length,
            lanes,
            fd: l.fd,
            exit_bound,
        });
    }
    let mut nodes = Vec::new();
    for n in &network.nodes {
        let incoming: Vec<usize> = n
            .incoming
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or(crate::error::NetworkError::UnknownLink(*id))
            })
            .collect::<std::result::Result<_, _>>()?;
        let outgoing = n
            .outgoing
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .map_or(Outlet::Sink(*id), |&i| Outlet::Link(i))
            })
            .collect();
        let class = n
            .incoming
            .iter()
            .map(|id| match settings.merge {
                MergeRule::Priority
                    if network
                        .link(*id)
                        .is_some_and(|l| l.kind == LinkKind::OnRamp) =>
                {
                    1
                }
                _ => 0,
            })
            .collect();
        let ratios = (0..n.outgoing.len())
            .map(|i| {
                (0..n.incoming.len())
                    .map(|j| n.turning_mean[(i, j)])
                    .collect()
            })
            .collect();
        nodes.push(CtmNode {
            incoming,
            outgoing,
            ratios,
            class,
        });
    }
    let sinks = network
        .links
        .iter()
        .filter(|l| l.kind == LinkKind::OffRamp)
        .map(|l| l.id)
        .collect();
    Ok(CtmNetwork {
        links,
        nodes,
        sinks,
        control_step: network.step,
        control_steps: network.steps,
        step: dt,
        signals: BTreeMap::new(),
        initial,
    })
}

impl CtmNetwork {
    fn index(&self, id: LinkId) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Applies a fixed-time plan given on the control grid; red links do not discharge.
    pub fn with_signals(mut self, signals: &SignalTable) -> Self {
        for (id, phases) in signals {
            if let Some(i) = self.index(*id) {
                self.signals.insert(i, phases.clone());
            }
        }
        self
    }

    /// Overrides the discharge bound (veh/s) of an exit link.
    pub fn with_exit_bound(mut self, id: LinkId, bound: f64) -> Self {
        if let Some(i) = self.index(id) {
            self.links[i].exit_bound = Some(bound);
        }
        self
    }

    pub fn horizon(&self) -> f64 {
        self.control_step * self.control_steps as f64
    }

    pub fn substeps(&self) -> usize {
        (self.horizon() / self.step).round() as usize
    }

    /// Control step holding at simulation step `s` (zero-based).
    pub fn control_index(&self, s: usize) -> usize {
        let t = s as f64 * self.step;
        ((t / self.control_step + 1e-9).floor() as usize).min(self.control_steps - 1)
    }

    pub fn initial_state(&self) -> CtmState {
        CtmState {
            occupancy: self.initial.clone(),
            queue: self
                .links
                .iter()
                .filter(|l| l.kind.is_controllable())
                .map(|l| (l.id, 0.0))
                .collect(),
            discharged: self
                .links
                .iter()
                .filter(|l| l.exit_bound.is_some())
                .map(|l| l.id)
                .chain(self.sinks.iter().copied())
                .map(|id| (id, 0.0))
                .collect(),
            steps: 0,
        }
    }

    /// Advances one simulation step with entry rates `controls` (veh/s).
    pub fn step(
        &self,
        state: &CtmState,
        controls: &BTreeMap<LinkId, f64>,
    ) -> (CtmState, StepFlows) {
        let dt = self.step;
        let control_index = self.control_index(state.steps);
        let mut next = state.clone();
        let mut flows = StepFlows::default();

        // Flows between consecutive cells of each link.
        for (i, link) in self.links.iter().enumerate() {
            let occ = &state.occupancy[i];
            for c in 0..link.cells.saturating_sub(1) {
                let f = link.send(occ[c], dt).min(link.receive(occ[c + 1], dt));
                next.occupancy[i][c] -= f;
                next.occupancy[i][c + 1] += f;
            }
        }

        let demand = |i: usize| -> f64 {
            let link = &self.links[i];
            let red = self
                .signals
                .get(&i)
                .is_some_and(|p| !p.get(control_index).copied().unwrap_or(true));
            if red {
                0.0
            } else {
                link.send(state.occupancy[i][link.cells - 1], dt)
            }
        };
        let supply = |i: usize| -> f64 { self.links[i].receive(state.occupancy[i][0], dt) };

        // Entries.
        for (i, link) in self.links.iter().enumerate() {
            if !link.kind.is_controllable() {
                continue;
            }
            let rate = controls.get(&link.id).copied().unwrap_or(0.0).max(0.0);
            let arriving = rate * dt;
            let queued = state.queue[&link.id];
            let admitted = (arriving + queued).min(supply(i));
            next.occupancy[i][0] += admitted;
            *next.queue.get_mut(&link.id).expect("entry queue") = arriving + queued - admitted;
            flows.arriving += arriving;
            flows.admitted += admitted;
        }

        // Exits.
        for (i, link) in self.links.iter().enumerate() {
            if let Some(bound) = link.exit_bound {
                let f = demand(i).min(bound * dt);
                next.occupancy[i][link.cells - 1] -= f;
                *next.discharged.get_mut(&link.id).expect("exit") += f;
                flows.discharged += f;
            }
        }

        // Junctions.
        for node in &self.nodes {
            let mut remaining: Vec<f64> = node
                .outgoing
                .iter()
                .map(|o| match *o {
                    Outlet::Link(i) => supply(i),
                    Outlet::Sink(_) => f64::INFINITY,
                })
                .collect();
            let max_class = node.class.iter().copied().max().unwrap_or(0);
            for class in 0..=max_class {
                let members: Vec<usize> = (0..node.incoming.len())
                    .filter(|&j| node.class[j] == class)
                    .collect();
                let wanted: Vec<f64> = members.iter().map(|&j| demand(node.incoming[j])).collect();
                let mut theta: f64 = 1.0;
                for (r, row) in node.ratios.iter().enumerate() {
                    let load: f64 = members.iter().zip(&wanted).map(|(&j, d)| row[j] * d).sum();
                    if load > 0.0 {
                        theta = theta.min(remaining[r] / load);
                    }
                }
                let theta = theta.clamp(0.0, 1.0);
                for (&j, d) in members.iter().zip(&wanted) {
                    let f = theta * d;
                    let from = node.incoming[j];
                    let last = self.links[from].cells - 1;
                    next.occupancy[from][last] -= f;
                    for (r, row) in node.ratios.iter().enumerate() {
                        let part = row[j] * f;
                        remaining[r] -= part;
                        match node.outgoing[r] {
                            Outlet::Link(to) => next.occupancy[to][0] += part,
                            Outlet::Sink(id) => {
                                *next.discharged.get_mut(&id).expect("sink") += part;
                                flows.discharged += part;
                            }
                        }
                    }
                }
            }
        }

        // Round-off can push a cell a hair below zero.
        for cells in &mut next.occupancy {
            for n in cells.iter_mut() {
                if *n < 0.0 && *n > -1e-12 {
                    *n = 0.0;
                }
            }
        }
        next.steps += 1;
        (next, flows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmState {
    /// Vehicles per cell, indexed like `CtmNetwork::links`.
    pub occupancy: Vec<Vec<f64>>,
    /// Vehicles waiting to enter, per controllable link.
    pub queue: BTreeMap<LinkId, f64>,
    /// Vehicles that left the network, per exit link and off-ramp.
    pub discharged: BTreeMap<LinkId, f64>,
    pub steps: usize,
}

impl CtmState {
    pub fn total_occupancy(&self) -> f64 {
        self.occupancy.iter().flatten().sum()
    }

    pub fn total_queue(&self) -> f64 {
        self.queue.values().sum()
    }
}

/// Vehicle movements across the network boundary during one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepFlows {
    pub arriving: f64,
    pub admitted: f64,
    pub discharged: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// Sample times (s), from 0 to the horizon.
    pub times: Vec<f64>,
    /// Vehicles waiting at incoming-boundary entries.
    pub blocked: Vec<f64>,
    /// Running total of vehicles that had to join an entry queue.
    pub cumulative_blocked: Vec<f64>,
    /// Cumulative discharge per exit link and off-ramp.
    pub throughput: BTreeMap<LinkId, Vec<f64>>,
    /// Largest per-step vehicle balance error.
    pub max_step_imbalance: f64,
    /// Balance error over the whole run.
    pub total_imbalance: f64,
    /// Largest excursion of an occupancy outside `[0, jam]`.
    pub max_occupancy_violation: f64,
}

impl Metrics {
    pub fn final_blocked(&self) -> f64 {
        self.cumulative_blocked.last().copied().unwrap_or(0.0)
    }

    pub fn final_throughput(&self, link: LinkId) -> f64 {
        self.throughput
            .get(&link)
            .and_then(|s| s.last().copied())
            .unwrap_or(0.0)
    }

    pub fn conserves(&self) -> bool {
        self.max_step_imbalance <= STEP_CONSERVATION_TOL && self.total_imbalance <= 1e-6
    }

    /// `t_s, blocked_total_veh, throughput_link<id>_veh` rows.
    pub fn to_csv(&self, link: LinkId) -> String {
        let mut out = format!("t_s,blocked_total_veh,throughput_link{link}_veh\n");
        let empty = Vec::new();
        let tp = self.throughput.get(&link).unwrap_or(&empty);
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                t,
                self.blocked[k],
                tp.get(k).copied().unwrap_or(0.0)
            ));
        }
        out
    }
}

/// Runs the horizon with per-control-step entry rates (veh/s).
pub fn simulate(net: &CtmNetwork, controls: &BTreeMap<LinkId, Vec<f64>>) -> Result<Metrics> {
    for (id, series) in controls {
        if series.len() != net.control_steps {
            return Err(Error::Config(format!(
                "controls of link {id} cover {} steps, horizon has {}",
                series.len(),
                net.control_steps
            )));
        }
    }
    let entries: Vec<LinkId> = net
        .links
        .iter()
        .filter(|l| l.kind == LinkKind::IncomingBoundary)
        .map(|l| l.id)
        .collect();
    let blocked_at = |s: &CtmState| entries.iter().map(|id| s.queue[id]).sum::<f64>();

    let mut state = net.initial_state();
    let mut m = Metrics {
        times: vec![0.0],
        blocked: vec![blocked_at(&state)],
        cumulative_blocked: vec![0.0],
        throughput: state.discharged.keys().map(|&id| (id, vec![0.0])).collect(),
        ..Metrics::default()
    };
    let start = state.total_occupancy() + state.total_queue();
    let mut arrived = 0.0;
    let mut left = 0.0;
    let mut joined = 0.0;
    for s in 0..net.substeps() {
        let k = net.control_index(s);
        let rates: BTreeMap<LinkId, f64> = controls.iter().map(|(id, v)| (*id, v[k])).collect();
        let before = state.total_occupancy();
        let (next, flows) = net.step(&state, &rates);
        let change = next.total_occupancy() - before;
        let imbalance = (flows.admitted - flows.discharged - change).abs();
        m.max_step_imbalance = m.max_step_imbalance.max(imbalance);
        for (i, link) in net.links.iter().enumerate() {
            let jam = link.jam_occupancy();
            for &n in &next.occupancy[i] {
                let v = (-n).max(n - jam).max(0.0);
                m.max_occupancy_violation = m.max_occupancy_violation.max(v);
            }
        }
        for id in &entries {
            joined += (next.queue[id] - state.queue[id]).max(0.0);
        }
        arrived += flows.arriving;
        left += flows.discharged;
        state = next;
        m.times.push((s + 1) as f64 * net.step);
        m.blocked.push(blocked_at(&state));
        m.cumulative_blocked.push(joined);
        for (id, series) in m.throughput.iter_mut() {
            series.push(state.discharged[id]);
        }
    }
    let end = state.total_occupancy() + state.total_queue();
    m.total_imbalance = (start + arrived - left - end).abs();
    Ok(m)
}

/// Replays robust and base controls on the scenario network with its realized ratios.
pub fn run_validation(
    scenario: &crate::scenarios::Scenario,
    robust: &BTreeMap<LinkId, Vec<f64>>,
    base: &BTreeMap<LinkId, Vec<f64>>,
) -> Result<(Metrics, Metrics)> {
    let net = scenario_network(scenario, true)?;
    Ok((simulate(&net, robust)?, simulate(&net, base)?))
}

/// Simulator for a scenario, with realized ratios when `realized` is set. Urban scenarios
/// carry their signal plan and reduced exit capacities over.
pub fn scenario_network(
    scenario: &crate::scenarios::Scenario,
    realized: bool,
) -> Result<CtmNetwork> {
    let network = if realized {
        scenario.realized_network()
    } else {
        scenario.network.clone()
    };
    let mut net = discretize(&network, &scenario.ctm)?;
    if let crate::scenarios::Model::Urban(cfg) = &scenario.model {
        net = net.with_signals(&cfg.signals);
        for link in &network.links {
            if link.kind == LinkKind::OutgoingBoundary {
                net = net.with_exit_bound(link.id, cfg.exit_fraction * link.capacity());
            }
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LinkSpec;
    use crate::scenarios::{builtin, freeway_fd};

    fn single(rho: f64) -> Network {
        Network {
            links: vec![LinkSpec {
                id: LinkId(1),
                length: 1200.0,
                lanes: 1,
                segments: 2,
                init_density: vec![rho; 2],
                fd: freeway_fd(),
                kind: LinkKind::IncomingBoundary,
            }],
            nodes: vec![],
            boundary_in: vec![LinkId(1)],
            step: 20.0,
            steps: 25,
        }
    }

    #[test]
    fn freeway_links_get_six_cells() {
        let s = builtin("freeway-free").unwrap();
        let net = discretize(&s.network, &s.ctm).unwrap();
        let l1 = net.links.iter().find(|l| l.id == LinkId(1)).unwrap();
        assert_eq!(l1.cells, 6);
        assert_eq!(net.substeps(), 100);
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let s = CtmSettings {
            step: 10.0,
            ..CtmSettings::default()
        };
        assert!(matches!(
            discretize(&single(0.0), &s),
            Err(Error::Cfl { .. })
        ));
        let s = CtmSettings {
            cell_length: 2000.0,
            ..CtmSettings::default()
        };
        assert!(matches!(
            discretize(&single(0.0), &s),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn empty_network_stays_empty() {
        let net = discretize(&single(0.0), &CtmSettings::default()).unwrap();
        let m = simulate(&net, &BTreeMap::new()).unwrap();
        assert_eq!(m.final_throughput(LinkId(1)), 0.0);
        assert_eq!(m.final_blocked(), 0.0);
    }

    #[test]
    fn free_flow_propagation() {
        let net = discretize(&single(0.0), &CtmSettings::default()).unwrap();
        let c = freeway_fd().capacity();
        let controls = BTreeMap::from([(LinkId(1), vec![c; 25])]);
        let m = simulate(&net, &controls).unwrap();
        let expected = c * (500.0 - 1200.0 / 30.0);
        let slack = c * 200.0 / 30.0 + 1e-9;
        let got = m.final_throughput(LinkId(1));
        assert!((got - expected).abs() <= slack, "{got} vs {expected}");
        assert!(m.conserves());
    }

    #[test]
    fn control_hold_maps_substeps() {
        let net = discretize(&single(0.0), &CtmSettings::default()).unwrap();
        assert_eq!(net.control_index(0), 0);
        assert_eq!(net.control_index(3), 0);
        assert_eq!(net.control_index(4), 1);
        assert_eq!(net.control_index(99), 24);
    }

    #[test]
    fn identical_controls_identical_metrics() {
        let s = builtin("freeway-validation").unwrap();
        let u: BTreeMap<LinkId, Vec<f64>> = [1, 4, 7, 8]
            .into_iter()
            .map(|l| (LinkId(l), vec![0.6; 25]))
            .collect();
        let (a, b) = run_validation(&s, &u, &u).unwrap();
        assert_eq!(a, b);
        assert!(a.conserves());
        assert!(a.max_occupancy_violation == 0.0);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let net = discretize(&single(0.0), &CtmSettings::default()).unwrap();
        let controls = BTreeMap::from([(LinkId(1), vec![0.1; 3])]);
        assert!(simulate(&net, &controls).is_err());
    }
}
