//! Road network data model: triangular fundamental diagrams, links, nodes with
//! turning-ratio moments, and the control-time discretization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::linalg;

/// Relative tolerance under which the two triangle branches are considered to meet at the
/// critical density.
pub const CONTINUITY_TOLERANCE: f64 = 1e-6;

/// Absolute tolerance for turning-ratio column sums.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

const DENSITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Triangular flow-density relation, per lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    /// Free-flow speed (m/s), positive.
    pub free_speed: f64,
    /// Congestion wave speed (m/s), negative.
    pub wave_speed: f64,
    /// Critical density (veh/m/lane).
    pub critical_density: f64,
    /// Jam density (veh/m/lane).
    pub jam_density: f64,
}

impl FundamentalDiagram {
    pub fn new(free_speed: f64, wave_speed: f64, critical_density: f64, jam_density: f64) -> Self {
        Self {
            free_speed,
            wave_speed,
            critical_density,
            jam_density,
        }
    }

    /// `v_f * rho_c`.
    pub fn capacity(&self) -> f64 {
        self.free_speed * self.critical_density
    }

    fn check_density(&self, rho: f64) -> Result<f64, NetworkError> {
        if !(rho >= -DENSITY_SLACK && rho <= self.jam_density + DENSITY_SLACK) {
            return Err(NetworkError::DensityOutOfRange {
                density: rho,
                jam: self.jam_density,
            });
        }
        Ok(rho.clamp(0.0, self.jam_density))
    }

    /// Flow of the triangular diagram. At exactly the critical density the free-flow branch
    /// (the capacity) is returned.
    pub fn flow(&self, rho: f64) -> Result<f64, NetworkError> {
        let rho = self.check_density(rho)?;
        Ok(self.flow_unchecked(rho))
    }

    pub(crate) fn flow_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.critical_density {
            self.free_speed * rho
        } else {
            self.wave_speed * (rho - self.jam_density)
        }
    }

    /// Receiving function: capacity below the critical density, the congested branch above.
    pub fn supply(&self, rho: f64) -> Result<f64, NetworkError> {
        let rho = self.check_density(rho)?;
        Ok(self.supply_unchecked(rho))
    }

    pub(crate) fn supply_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.critical_density {
            self.capacity()
        } else {
            self.wave_speed * (rho - self.jam_density)
        }
    }

    /// Sending function: free-flow branch below the critical density, capacity above.
    pub fn demand(&self, rho: f64) -> Result<f64, NetworkError> {
        let rho = self.check_density(rho)?;
        Ok(self.demand_unchecked(rho))
    }

    pub(crate) fn demand_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.critical_density {
            self.free_speed * rho
        } else {
            self.capacity()
        }
    }

    /// Relative mismatch between the branch values at the critical density.
    pub fn continuity_gap(&self) -> f64 {
        let free = self.capacity();
        let congested = self.wave_speed * (self.critical_density - self.jam_density);
        (free - congested).abs() / free.abs().max(congested.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn is_continuous(&self) -> bool {
        self.continuity_gap() <= CONTINUITY_TOLERANCE
    }

    /// The same diagram expressed for `lanes` lanes (densities and capacity scale, speeds do not).
    pub fn scaled(&self, lanes: f64) -> Self {
        Self {
            free_speed: self.free_speed,
            wave_speed: self.wave_speed,
            critical_density: self.critical_density * lanes,
            jam_density: self.jam_density * lanes,
        }
    }

    /// A continuous triangle through `(rho_c, v_f rho_c)` with the given jam density; the
    /// wave speed is derived.
    pub fn continuous(free_speed: f64, critical_density: f64, jam_density: f64) -> Self {
        let capacity = free_speed * critical_density;
        Self {
            free_speed,
            wave_speed: -capacity / (jam_density - critical_density),
            critical_density,
            jam_density,
        }
    }

    fn parameter_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.free_speed > 0.0) {
            errors.push(format!(
                "free-flow speed {} must be positive",
                self.free_speed
            ));
        }
        if !(self.wave_speed < 0.0) {
            errors.push(format!(
                "congestion wave speed {} must be negative",
                self.wave_speed
            ));
        }
        if !(self.critical_density > 0.0 && self.critical_density < self.jam_density) {
            errors.push(format!(
                "densities must satisfy 0 < rho_c ({}) < rho_m ({})",
                self.critical_density, self.jam_density
            ));
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    IncomingBoundary,
    Interior,
    OnRamp,
    OffRamp,
    OutgoingBoundary,
}

impl LinkKind {
    /// Links whose inflow is a decision variable.
    pub fn is_controllable(self) -> bool {
        matches!(self, LinkKind::IncomingBoundary | LinkKind::OnRamp)
    }

    pub fn is_ramp(self) -> bool {
        matches!(self, LinkKind::OnRamp | LinkKind::OffRamp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: LinkId,
    /// Length in meters.
    pub length: f64,
    pub lanes: u32,
    pub segments: usize,
    /// Initial density per segment, veh/m/lane, upstream segment first.
    pub init_density: Vec<f64>,
    pub fd: FundamentalDiagram,
    pub kind: LinkKind,
}

impl LinkSpec {
    pub fn segment_length(&self) -> f64 {
        self.length / self.segments as f64
    }

    /// Total capacity over all lanes (veh/s).
    pub fn capacity(&self) -> f64 {
        self.fd.capacity() * self.lanes as f64
    }

    /// Initial number of vehicles on the link.
    pub fn initial_vehicles(&self) -> f64 {
        self.init_density.iter().sum::<f64>() * self.segment_length() * self.lanes as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    /// Incoming links, on-ramps included. Column order of the turning matrix.
    pub incoming: Vec<LinkId>,
    /// Outgoing links, off-ramps included. Row order of the turning matrix.
    pub outgoing: Vec<LinkId>,
    /// Mean turning ratios; entry (i, j) is the share of link `incoming[j]` going to
    /// `outgoing[i]`.
    pub turning_mean: DMatrix<f64>,
    /// Covariance between the ratios of different incoming links toward a common outgoing link.
    pub turning_cov: DMatrix<f64>,
}

impl NodeSpec {
    pub fn incoming_position(&self, link: LinkId) -> Option<usize> {
        self.incoming.iter().position(|&l| l == link)
    }

    pub fn outgoing_position(&self, link: LinkId) -> Option<usize> {
        self.outgoing.iter().position(|&l| l == link)
    }

    pub fn has_uncertainty(&self) -> bool {
        self.turning_cov.iter().any(|&v| v != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub links: Vec<LinkSpec>,
    pub nodes: Vec<NodeSpec>,
    pub boundary_in: Vec<LinkId>,
    /// Control time step `T` (s).
    pub step: f64,
    /// Number of control steps `n_max`.
    pub steps: usize,
}

impl Network {
    pub fn link(&self, id: LinkId) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn link_mut(&mut self, id: LinkId) -> Option<&mut LinkSpec> {
        self.links.iter_mut().find(|l| l.id == id)
    }

    /// Node the link leaves from, with the link's row in that node's turning matrix.
    pub fn upstream_node(&self, id: LinkId) -> Option<(&NodeSpec, usize)> {
        self.nodes
            .iter()
            .find_map(|n| n.outgoing_position(id).map(|row| (n, row)))
    }

    /// Node the link discharges into, with the link's column in that node's turning matrix.
    pub fn downstream_node(&self, id: LinkId) -> Option<(&NodeSpec, usize)> {
        self.nodes
            .iter()
            .find_map(|n| n.incoming_position(id).map(|col| (n, col)))
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.steps as f64
    }

    pub fn controllable_links(&self) -> impl Iterator<Item = &LinkSpec> {
        self.links.iter().filter(|l| l.kind.is_controllable())
    }

    /// Replaces every node covariance by zeros.
    pub fn without_uncertainty(&self) -> Network {
        let mut net = self.clone();
        for node in &mut net.nodes {
            node.turning_cov.fill(0.0);
        }
        net
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        if !(self.step > 0.0) {
            report.error(
                "horizon",
                format!("time step {} must be positive", self.step),
            );
        }
        if self.steps == 0 {
            report.error("horizon", "horizon must contain at least one step");
        }

        let mut seen_links = BTreeSet::new();
        let mut reported_fds: Vec<FundamentalDiagram> = Vec::new();
        for link in &self.links {
            let subject = format!("link {}", link.id);
            if !seen_links.insert(link.id) {
                report.error(&subject, "duplicate link id");
            }
            if !(link.length > 0.0) {
                report.error(&subject, format!("length {} must be positive", link.length));
            }
            if link.lanes == 0 {
                report.error(&subject, "lane count must be at least 1");
            }
            if link.segments == 0 {
                report.error(&subject, "segment count must be at least 1");
            }
            if link.init_density.len() != link.segments {
                report.error(
                    &subject,
                    format!(
                        "{} initial densities given for {} segments",
                        link.init_density.len(),
                        link.segments
                    ),
                );
            }
            for message in link.fd.parameter_errors() {
                report.error(&subject, message);
            }
            for (k, &rho) in link.init_density.iter().enumerate() {
                if !(rho >= 0.0 && rho <= link.fd.jam_density) {
                    report.error(
                        &subject,
                        format!(
                            "initial density {rho} of segment {} outside [0, {}]",
                            k + 1,
                            link.fd.jam_density
                        ),
                    );
                }
            }
            if !link.fd.is_continuous() && !reported_fds.contains(&link.fd) {
                reported_fds.push(link.fd);
                let fd = link.fd;
                report.warning(
                    "fundamental diagram",
                    format!(
                        "triangle is not continuous at the critical density: v_f*rho_c = {:.4} but \
                         w*(rho_c - rho_m) = {:.4}",
                        fd.capacity(),
                        fd.wave_speed * (fd.critical_density - fd.jam_density)
                    ),
                );
            }
        }

        let mut seen_nodes = BTreeSet::new();
        let mut upstream_count: BTreeMap<LinkId, usize> = BTreeMap::new();
        let mut downstream_count: BTreeMap<LinkId, usize> = BTreeMap::new();
        for node in &self.nodes {
            let subject = format!("node {}", node.id);
            if !seen_nodes.insert(node.id) {
                report.error(&subject, "duplicate node id");
            }
            for id in node.incoming.iter().chain(&node.outgoing) {
                if !seen_links.contains(id) {
                    report.error(&subject, format!("references unknown link {id}"));
                }
            }
            for &id in &node.incoming {
                *downstream_count.entry(id).or_default() += 1;
            }
            for &id in &node.outgoing {
                *upstream_count.entry(id).or_default() += 1;
            }
            let (m, n) = (node.outgoing.len(), node.incoming.len());
            if m <= 1 && n <= 1 {
                report.error(
                    &subject,
                    "a node needs more than one incoming or more than one outgoing link",
                );
            }
            let p = &node.turning_mean;
            if p.nrows() != m || p.ncols() != n {
                report.error(
                    &subject,
                    format!(
                        "turning matrix is {}x{}, expected {m}x{n}",
                        p.nrows(),
                        p.ncols()
                    ),
                );
            } else {
                if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    report.error(&subject, "turning ratios must lie in [0, 1]");
                }
                for j in 0..n {
                    let sum: f64 = p.column(j).sum();
                    if (sum - 1.0).abs() > CONSERVATION_TOLERANCE {
                        report.error(
                            &subject,
                            format!(
                                "turning ratios not conserved: column of link {} sums to {sum}",
                                node.incoming[j]
                            ),
                        );
                    }
                }
            }
            let g = &node.turning_cov;
            if g.nrows() != n || g.ncols() != n {
                report.error(
                    &subject,
                    format!(
                        "covariance is {}x{}, expected {n}x{n}",
                        g.nrows(),
                        g.ncols()
                    ),
                );
            } else if !linalg::is_symmetric(g, 1e-12) {
                report.error(&subject, "covariance is not symmetric");
            } else if !linalg::is_psd(g) {
                report.error(&subject, "covariance is not positive semidefinite");
            }
        }

        for link in &self.links {
            let subject = format!("link {}", link.id);
            let ups = upstream_count.get(&link.id).copied().unwrap_or(0);
            let downs = downstream_count.get(&link.id).copied().unwrap_or(0);
            if ups > 1 || downs > 1 {
                report.error(&subject, "attached to more than one node at the same end");
            }
            match link.kind {
                LinkKind::IncomingBoundary | LinkKind::OnRamp => {
                    if ups != 0 {
                        report.error(&subject, "an entry link cannot leave from a node");
                    }
                    if link.kind == LinkKind::OnRamp && downs != 1 {
                        report.error(&subject, "an on-ramp must discharge into a node");
                    }
                }
                LinkKind::Interior => {
                    if ups != 1 || downs != 1 {
                        report.error(&subject, "an interior link needs a node at both ends");
                    }
                }
                LinkKind::OffRamp | LinkKind::OutgoingBoundary => {
                    if ups != 1 {
                        report.error(&subject, "an exit link must leave from a node");
                    }
                    if downs != 0 {
                        report.error(&subject, "an exit link cannot discharge into a node");
                    }
                }
            }
        }

        let declared: BTreeSet<LinkId> = self.boundary_in.iter().copied().collect();
        let actual: BTreeSet<LinkId> = self
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::IncomingBoundary)
            .map(|l| l.id)
            .collect();
        if declared != actual {
            report.error(
                "boundary",
                format!(
                    "declared incoming boundary {declared:?} does not match topology {actual:?}"
                ),
            );
        }

        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, subject: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity,
            subject: subject.to_string(),
            message: message.into(),
        });
    }

    fn error(&mut self, subject: &str, message: impl Into<String>) {
        self.push(Severity::Error, subject, message);
    }

    fn warning(&mut self, subject: &str, message: impl Into<String>) {
        self.push(Severity::Warning, subject, message);
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}
