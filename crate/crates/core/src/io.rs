//! JSON network files.
//!
//! Matrices are stored row-major. `P` has one row per outgoing link and one column per
//! incoming link; `Gamma` is square over the incoming links.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FundamentalDiagram, LinkId, LinkKind, LinkSpec, Network, NodeId, NodeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdFile {
    pub vf: f64,
    pub w: f64,
    pub rho_c: f64,
    pub rho_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFile {
    pub id: LinkId,
    pub length_m: f64,
    pub lanes: u32,
    pub segments: usize,
    pub init_density: Vec<f64>,
    pub fd: FdFile,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFile {
    pub id: NodeId,
    #[serde(rename = "in")]
    pub incoming: Vec<LinkId>,
    #[serde(rename = "out")]
    pub outgoing: Vec<LinkId>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "Gamma", default)]
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonFile {
    #[serde(rename = "T_s")]
    pub step_s: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub links: Vec<LinkFile>,
    pub nodes: Vec<NodeFile>,
    pub boundary_in: Vec<LinkId>,
    pub horizon: HorizonFile,
}

/// Reads a row-major `rows x cols` matrix.
pub fn matrix(values: &[f64], rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "{what} has {} entries, expected {rows}x{cols}",
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, values))
}

/// Row-major entries of a matrix.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network> {
        let links = self
            .links
            .into_iter()
            .map(|l| LinkSpec {
                id: l.id,
                length: l.length_m,
                lanes: l.lanes,
                segments: l.segments,
                init_density: l.init_density,
                fd: FundamentalDiagram::new(l.fd.vf, l.fd.w, l.fd.rho_c, l.fd.rho_m),
                kind: l.kind,
            })
            .collect();
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                let (m, k) = (n.outgoing.len(), n.incoming.len());
                let what = format!("P of node {}", n.id);
                let turning_mean = matrix(&n.p, m, k, &what)?;
                let turning_cov = match n.gamma {
                    Some(g) => matrix(&g, k, k, &format!("Gamma of node {}", n.id))?,
                    None => DMatrix::zeros(k, k),
                };
                Ok(NodeSpec {
                    id: n.id,
                    incoming: n.incoming,
                    outgoing: n.outgoing,
                    turning_mean,
                    turning_cov,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            links,
            nodes,
            boundary_in: self.boundary_in,
            step: self.horizon.step_s,
            steps: self.horizon.steps,
        })
    }

    pub fn from_network(net: &Network) -> Self {
        Self {
            links: net
                .links
                .iter()
                .map(|l| LinkFile {
                    id: l.id,
                    length_m: l.length,
                    lanes: l.lanes,
                    segments: l.segments,
                    init_density: l.init_density.clone(),
                    fd: FdFile {
                        vf: l.fd.free_speed,
                        w: l.fd.wave_speed,
                        rho_c: l.fd.critical_density,
                        rho_m: l.fd.jam_density,
                    },
                    kind: l.kind,
                })
                .collect(),
            nodes: net
                .nodes
                .iter()
                .map(|n| NodeFile {
                    id: n.id,
                    incoming: n.incoming.clone(),
                    outgoing: n.outgoing.clone(),
                    p: row_major(&n.turning_mean),
                    gamma: Some(row_major(&n.turning_cov)),
                })
                .collect(),
            boundary_in: net.boundary_in.clone(),
            horizon: HorizonFile {
                step_s: net.step,
                steps: net.steps,
            },
        }
    }
}

pub fn parse_network(json: &str) -> Result<Network> {
    serde_json::from_str::<NetworkFile>(json)?.into_network()
}

pub fn read_network(path: &Path) -> Result<Network> {
    parse_network(&std::fs::read_to_string(path)?)
}

pub fn network_to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&NetworkFile::from_network(net)).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "links": [
        {"id": 1, "length_m": 400, "lanes": 2, "segments": 2, "init_density": [0.01, 0.0],
         "fd": {"vf": 30, "w": -5.5, "rho_c": 0.0175, "rho_m": 0.225}, "kind": "incoming-boundary"},
        {"id": 2, "length_m": 400, "lanes": 2, "segments": 1, "init_density": [0.0],
         "fd": {"vf": 30, "w": -5.5, "rho_c": 0.0175, "rho_m": 0.225}, "kind": "outgoing-boundary"},
        {"id": 3, "length_m": 200, "lanes": 1, "segments": 1, "init_density": [0.0],
         "fd": {"vf": 30, "w": -5.5, "rho_c": 0.0175, "rho_m": 0.225}, "kind": "off-ramp"}
      ],
      "nodes": [{"id": 1, "in": [1], "out": [2, 3], "P": [0.9, 0.1], "Gamma": [0.004]}],
      "boundary_in": [1],
      "horizon": {"T_s": 20, "steps": 5}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let net = parse_network(SMALL).unwrap();
        assert_eq!(net.links.len(), 3);
        assert_eq!(net.nodes[0].turning_mean[(1, 0)], 0.1);
        assert!(net.validate().is_valid());
        let again = parse_network(&network_to_json(&net)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn wrong_matrix_size_is_a_parse_error() {
        let bad = SMALL.replace("\"P\": [0.9, 0.1]", "\"P\": [0.9]");
        assert!(matches!(parse_network(&bad), Err(Error::Parse(_))));
    }

    #[test]
    fn row_major_order() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(row_major(&m), vec![1.0, 2.0, 3.0, 4.0]);
    }
}
