//! Moment-based chance constraints on turning ratios, converted to second-order cone rows.
//!
//! The inflow of a link leaving a node is replaced by the turning-ratio weighted outflows of
//! the node's incoming links. A compatibility row that then depends on random ratios,
//! `P(row <= 0) >= 1 - alpha` for every distribution with the given mean and covariance, is
//! equivalent to `kappa * sigma(x) + mean(x) <= 0` with `kappa = sqrt((1 - alpha) / alpha)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::compat::{AffineExpr, LinkRow, RowFamily, RowLabel, VarKind, VarTable};
use crate::error::{Error, Result};
use crate::laxhopf::Side;
use crate::linalg;
use crate::network::{LinkId, Network, NodeId, NodeSpec};

/// Safety factor of the distribution-free chance constraint.
pub fn kappa(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidAlpha(alpha));
    }
    // `1/alpha - 1` keeps common levels such as 0.05 exact.
    Ok((1.0 / alpha - 1.0).sqrt())
}

/// `kappa * ||factor * x|| + mean . x <= 0` over an explicit vector `x`, whose last entry is
/// the constant one.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSoc {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
    pub kappa: f64,
}

impl DenseSoc {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.kappa * (&self.factor * x).norm() + self.mean.dot(x)
    }

    pub fn is_linear(&self) -> bool {
        self.kappa == 0.0 || self.factor.iter().all(|&v| v == 0.0)
    }
}

/// Converts a chance constraint on `a . x <= 0` with `E[a] = mean`, `Cov[a] = cov`.
pub fn chance_to_soc(mean: &[f64], cov: &DMatrix<f64>, alpha: f64) -> Result<DenseSoc> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::Config(format!(
            "covariance is {}x{} for a mean of length {}",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    Ok(DenseSoc {
        mean: DVector::from_column_slice(mean),
        factor: linalg::psd_sqrt(cov)?,
        kappa: kappa(alpha)?,
    })
}

/// Covariance of `x` when each block `r` of `weights.len()` entries is scaled by a ratio with
/// covariance `node_cov`: `node_cov (x) w w^T`, followed by a zero row and column for the
/// constant slot.
pub fn expand_covariance(node_cov: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let n = node_cov.nrows();
    let p = weights.len();
    let w = DVector::from_column_slice(weights);
    let block = &w * w.transpose();
    let mut out = DMatrix::zeros(n * p + 1, n * p + 1);
    for r in 0..n {
        for s in 0..n {
            out.view_mut((r * p, s * p), (p, p))
                .copy_from(&(node_cov[(r, s)] * &block));
        }
    }
    out
}

/// `q_in(i, target) = sum_r P(target, r) q_out(i, r)` at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningSubstitution {
    pub node: NodeId,
    pub target: LinkId,
    /// Row of the target in the node's turning matrix.
    pub row: usize,
    /// Incoming links with their mean ratio toward the target.
    pub terms: Vec<(LinkId, f64)>,
}

impl TurningSubstitution {
    pub fn new(node: &NodeSpec, target: LinkId) -> Option<Self> {
        let row = node.outgoing_position(target)?;
        Some(Self {
            node: node.id,
            target,
            row,
            terms: node
                .incoming
                .iter()
                .enumerate()
                .map(|(c, &l)| (l, node.turning_mean[(row, c)]))
                .collect(),
        })
    }
}

/// Outflows of one incoming link weighted by the row's inflow coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBlock {
    pub link: LinkId,
    pub mean_ratio: f64,
    /// `(column, weight)`, steps ascending.
    pub terms: Vec<(usize, f64)>,
}

impl RandomBlock {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, v)| v * x[c]).sum()
    }
}

/// A converted compatibility row in structured form. The slot vector is the random blocks in
/// node order, then the direct terms, then a constant one.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub link: LinkId,
    pub label: RowLabel,
    pub node: NodeId,
    pub blocks: Vec<RandomBlock>,
    pub direct: Vec<(usize, f64)>,
    pub constant: f64,
    pub kappa: f64,
    pub node_cov: DMatrix<f64>,
    root: DMatrix<f64>,
}

impl SocConstraint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        link: LinkId,
        label: RowLabel,
        node: NodeId,
        blocks: Vec<RandomBlock>,
        direct: Vec<(usize, f64)>,
        constant: f64,
        kappa: f64,
        node_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let root = linalg::psd_sqrt(&node_cov)?;
        Ok(Self {
            link,
            label,
            node,
            blocks,
            direct,
            constant,
            kappa,
            node_cov,
            root,
        })
    }

    pub fn block_values(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.blocks.len(), self.blocks.iter().map(|b| b.value(x)))
    }

    fn direct_value(&self, x: &[f64]) -> f64 {
        self.direct.iter().map(|&(c, v)| v * x[c]).sum::<f64>() + self.constant
    }

    pub fn mean_value(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.mean_ratio * b.value(x))
            .sum::<f64>()
            + self.direct_value(x)
    }

    pub fn std_dev(&self, x: &[f64]) -> f64 {
        (&self.root * self.block_values(x)).norm()
    }

    /// Left side of the cone row; feasible when `<= 0`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.kappa * self.std_dev(x) + self.mean_value(x)
    }

    /// The underlying row under realized ratios toward the target, one per block.
    pub fn realized_value(&self, x: &[f64], ratios: &[f64]) -> f64 {
        self.blocks
            .iter()
            .zip(ratios)
            .map(|(b, r)| r * b.value(x))
            .sum::<f64>()
            + self.direct_value(x)
    }

    pub fn realized_from_blocks(&self, block_values: &[f64], direct: f64, ratios: &[f64]) -> f64 {
        block_values
            .iter()
            .zip(ratios)
            .map(|(y, r)| y * r)
            .sum::<f64>()
            + direct
    }

    pub fn mean_expr(&self) -> AffineExpr {
        let mut terms = self.direct.clone();
        for b in &self.blocks {
            terms.extend(b.terms.iter().map(|&(c, v)| (c, v * b.mean_ratio)));
        }
        AffineExpr::new(terms, self.constant)
    }

    /// Rows of `Gamma^{1/2} x~` as expressions over columns; rows that vanish are dropped.
    pub fn factor_rows(&self) -> Vec<AffineExpr> {
        let mut rows = Vec::new();
        for s in 0..self.root.nrows() {
            let mut terms = Vec::new();
            for (r, b) in self.blocks.iter().enumerate() {
                let f = self.root[(s, r)];
                if f != 0.0 {
                    terms.extend(b.terms.iter().map(|&(c, v)| (c, v * f)));
                }
            }
            let e = AffineExpr::new(terms, 0.0);
            if !e.terms.is_empty() {
                rows.push(e);
            }
        }
        rows
    }

    pub fn has_randomness(&self) -> bool {
        self.kappa > 0.0 && !self.factor_rows().is_empty()
    }

    /// Columns of the slot vector, without the constant slot.
    pub fn slot_columns(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .flat_map(|b| b.terms.iter().map(|t| t.0))
            .chain(self.direct.iter().map(|t| t.0))
            .collect()
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        let values: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|b| b.terms.iter().map(move |t| t.1 * b.mean_ratio))
            .chain(self.direct.iter().map(|t| t.1))
            .chain(std::iter::once(self.constant))
            .collect();
        DVector::from_vec(values)
    }

    /// Dense covariance of the slot vector's coefficients.
    pub fn covariance(&self) -> DMatrix<f64> {
        let dim = self.mean_vector().len();
        let mut out = DMatrix::zeros(dim, dim);
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut at = 0;
        for b in &self.blocks {
            offsets.push(at);
            at += b.terms.len();
        }
        for (r, br) in self.blocks.iter().enumerate() {
            for (s, bs) in self.blocks.iter().enumerate() {
                let g = self.node_cov[(r, s)];
                for (i, ti) in br.terms.iter().enumerate() {
                    for (j, tj) in bs.terms.iter().enumerate() {
                        out[(offsets[r] + i, offsets[s] + j)] = g * ti.1 * tj.1;
                    }
                }
            }
        }
        out
    }

    /// Slot vector evaluated at a point, constant slot included.
    pub fn slot_values(&self, x: &[f64]) -> DVector<f64> {
        let mut v: Vec<f64> = self.slot_columns().iter().map(|&c| x[c]).collect();
        v.push(1.0);
        DVector::from_vec(v)
    }
}

/// Where a link's inflow comes from when it is not a decision variable.
#[derive(Debug, Clone)]
pub struct InflowSource<'a> {
    pub node: &'a NodeSpec,
    pub substitution: TurningSubstitution,
    /// Whether the node's ratios are treated as random.
    pub random: bool,
}

impl<'a> InflowSource<'a> {
    pub fn for_link(network: &'a Network, link: LinkId, random: bool) -> Option<Self> {
        let (node, _) = network.upstream_node(link)?;
        Some(Self {
            node,
            substitution: TurningSubstitution::new(node, link)?,
            random,
        })
    }
}

/// A converted row: either linear or a cone.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvertedRow {
    Linear(RowLabel, AffineExpr),
    Cone(SocConstraint),
}

/// Converts compatibility rows of `link`. Rows without inflow terms map to direct variables;
/// rows with inflow terms have the inflow substituted and become cones when the source is
/// random, or linear rows under the mean ratios otherwise.
pub fn convert_rows(
    link: LinkId,
    rows: &[LinkRow],
    table: &VarTable,
    source: &InflowSource<'_>,
    kappa: f64,
) -> Result<Vec<ConvertedRow>> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut direct = Vec::new();
        let mut inflow: Vec<(usize, f64)> = Vec::new();
        for t in &row.form.terms {
            match t.side {
                Side::In => inflow.push((t.step, t.coef)),
                Side::Out => direct.push((column(table, VarKind::Outflow, link, t.step)?, t.coef)),
            }
        }
        if inflow.is_empty() {
            out.push(ConvertedRow::Linear(
                row.label,
                AffineExpr::new(direct, row.form.constant),
            ));
            continue;
        }
        let mut blocks = Vec::with_capacity(source.substitution.terms.len());
        for &(r, ratio) in &source.substitution.terms {
            let mut terms = Vec::with_capacity(inflow.len());
            for &(step, coef) in &inflow {
                terms.push((column(table, VarKind::Outflow, r, step)?, coef));
            }
            blocks.push(RandomBlock {
                link: r,
                mean_ratio: ratio,
                terms,
            });
        }
        let soc = SocConstraint::new(
            link,
            row.label,
            source.node.id,
            blocks,
            AffineExpr::new(direct, 0.0).terms,
            row.form.constant,
            if source.random { kappa } else { 0.0 },
            source.node.turning_cov.clone(),
        )?;
        if soc.has_randomness() {
            out.push(ConvertedRow::Cone(soc));
        } else {
            out.push(ConvertedRow::Linear(row.label, soc.mean_expr()));
        }
    }
    Ok(out)
}

fn column(table: &VarTable, kind: VarKind, link: LinkId, step: usize) -> Result<usize> {
    table
        .series_column(kind, link, step)
        .ok_or_else(|| Error::Config(format!("no {kind:?} variable for link {link} step {step}")))
}

fn family_rows(rows: &[LinkRow], families: &[RowFamily]) -> Vec<LinkRow> {
    rows.iter()
        .filter(|r| families.contains(&r.label.family))
        .cloned()
        .collect()
}

/// Rows generated by the initial-segment solutions.
pub fn build_soc_initial_family(
    link: LinkId,
    rows: &[LinkRow],
    table: &VarTable,
    source: &InflowSource<'_>,
    kappa: f64,
) -> Result<Vec<ConvertedRow>> {
    let fam = family_rows(
        rows,
        &[
            RowFamily::InitialVsDownstream,
            RowFamily::InitialVsDownstreamChar,
            RowFamily::InitialVsUpstream,
            RowFamily::InitialVsUpstreamChar,
        ],
    );
    convert_rows(link, &fam, table, source, kappa)
}

/// Rows generated by the upstream boundary solutions.
pub fn build_soc_upstream_family(
    link: LinkId,
    rows: &[LinkRow],
    table: &VarTable,
    source: &InflowSource<'_>,
    kappa: f64,
) -> Result<Vec<ConvertedRow>> {
    let fam = family_rows(
        rows,
        &[
            RowFamily::UpstreamVsUpstream,
            RowFamily::UpstreamVsDownstream,
            RowFamily::UpstreamVsDownstreamChar,
        ],
    );
    convert_rows(link, &fam, table, source, kappa)
}

/// Rows generated by the downstream boundary solutions.
pub fn build_soc_downstream_family(
    link: LinkId,
    rows: &[LinkRow],
    table: &VarTable,
    source: &InflowSource<'_>,
    kappa: f64,
) -> Result<Vec<ConvertedRow>> {
    let fam = family_rows(
        rows,
        &[
            RowFamily::DownstreamVsUpstream,
            RowFamily::DownstreamVsUpstreamChar,
            RowFamily::DownstreamVsDownstream,
        ],
    );
    convert_rows(link, &fam, table, source, kappa)
}

/// Test distribution for turning matrices: all but the last row Gaussian around the mean with
/// the node covariance, the last row completing each column to one, then entries clipped to
/// `[0, 1]` and columns renormalized.
#[derive(Debug, Clone)]
pub struct TurningSampler {
    mean: DMatrix<f64>,
    root: DMatrix<f64>,
    rng: ChaCha8Rng,
}

impl TurningSampler {
    pub fn new(node: &NodeSpec, seed: u64) -> Result<Self> {
        let node_seed = seed ^ (u64::from(node.id.0)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Ok(Self {
            mean: node.turning_mean.clone(),
            root: linalg::psd_sqrt(&node.turning_cov)?,
            rng: ChaCha8Rng::seed_from_u64(node_seed),
        })
    }

    pub fn sample(&mut self) -> DMatrix<f64> {
        let (m, n) = self.mean.shape();
        let mut p = self.mean.clone();
        for i in 0..m.saturating_sub(1) {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)));
            let noise = &self.root * z;
            for j in 0..n {
                p[(i, j)] += noise[j];
            }
        }
        if m > 1 {
            for j in 0..n {
                let others: f64 = (0..m - 1).map(|i| p[(i, j)]).sum();
                p[(m - 1, j)] = 1.0 - others;
            }
        }
        for j in 0..n {
            for i in 0..m {
                p[(i, j)] = p[(i, j)].clamp(0.0, 1.0);
            }
            let sum: f64 = p.column(j).sum();
            if sum > 0.0 {
                for i in 0..m {
                    p[(i, j)] /= sum;
                }
            } else {
                p.set_column(j, &self.mean.column(j));
            }
        }
        p
    }
}

/// Fraction of sampled turning matrices under which each cone's underlying row holds at `x`.
pub fn monte_carlo_feasibility(
    x: &[f64],
    socs: &[SocConstraint],
    network: &Network,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples < 100 {
        return Err(Error::Config(format!(
            "at least 100 samples required, got {n_samples}"
        )));
    }
    let mut hits = vec![0usize; socs.len()];
    let mut node_ids: Vec<NodeId> = socs.iter().map(|s| s.node).collect();
    node_ids.sort();
    node_ids.dedup();
    for node_id in node_ids {
        let node = network
            .node(node_id)
            .ok_or(crate::error::NetworkError::UnknownNode(node_id))?;
        let members: Vec<usize> = (0..socs.len())
            .filter(|&i| socs[i].node == node_id)
            .collect();
        let prepared: Vec<(usize, Vec<f64>, f64, f64)> = members
            .iter()
            .map(|&i| {
                let s = &socs[i];
                let row = network
                    .node(node_id)
                    .and_then(|n| n.outgoing_position(s.link))
                    .unwrap_or(0);
                let y: Vec<f64> = s.blocks.iter().map(|b| b.value(x)).collect();
                let scale = y.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
                (row, y, s.direct_value(x), scale)
            })
            .collect();
        let mut sampler = TurningSampler::new(node, seed)?;
        for _ in 0..n_samples {
            let p = sampler.sample();
            for (slot, &i) in members.iter().enumerate() {
                let (row, y, direct, scale) = &prepared[slot];
                let ratios: Vec<f64> = (0..p.ncols()).map(|c| p[(*row, c)]).collect();
                if socs[i].realized_from_blocks(y, *direct, &ratios) <= 1e-9 * scale {
                    hits[i] += 1;
                }
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / n_samples as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::RowFamily;

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0.1).unwrap(), 3.0);
        assert_eq!(kappa(0.05).unwrap(), 19f64.sqrt());
        assert!((kappa(0.5 - 1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!(kappa(0.5).is_err());
        assert!(kappa(0.0).is_err());
    }

    #[test]
    fn one_dimensional_chance_constraint() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.0]);
        let soc = chance_to_soc(&[1.0, -1.0], &cov, 0.1).unwrap();
        let at = |x: f64| soc.value(&DVector::from_vec(vec![x, 1.0]));
        assert!(at(0.625).abs() < 1e-12);
        assert!(at(0.63) > 0.0);
        assert!(at(0.62) < 0.0);
    }

    #[test]
    fn gaussian_coefficient_beats_the_distribution_free_level() {
        use rand_distr::Normal;
        use statrs::distribution::{ContinuousCDF, Normal as Gauss};
        // At the boundary x = 0.625, a x <= 1 holds iff a <= 1.6, i.e. three deviations up.
        let exact = Gauss::new(0.0, 1.0).unwrap().cdf(3.0);
        assert!((exact - 0.99865).abs() < 1e-5);
        assert!(exact >= 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Normal::new(1.0, 0.2).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| a.sample(&mut rng) * 0.625 <= 1.0).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt());
    }

    #[test]
    fn zero_covariance_is_linear() {
        let cov = DMatrix::zeros(3, 3);
        let soc = chance_to_soc(&[1.0, 2.0, -1.0], &cov, 0.2).unwrap();
        assert!(soc.is_linear());
        let x = DVector::from_vec(vec![0.3, 0.1, 1.0]);
        assert!((soc.value(&x) - (0.3 + 0.2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn expanded_covariance_shape_and_psd() {
        let g = DMatrix::from_row_slice(2, 2, &[0.005, 0.001, 0.001, 0.005]);
        let e = expand_covariance(&g, &[20.0, 20.0]);
        assert_eq!(e.shape(), (5, 5));
        assert!((e[(0, 2)] - 400.0 * 0.001).abs() < 1e-15);
        assert_eq!(e.row(4).sum(), 0.0);
        assert!(linalg::is_psd(&e));
        let small = expand_covariance(&DMatrix::from_element(1, 1, 0.005), &[20.0]);
        assert_eq!(small.shape(), (2, 2));
        assert!((small[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn structured_covariance_matches_expansion() {
        let g = DMatrix::from_row_slice(2, 2, &[0.005, 0.001, 0.001, 0.005]);
        let label = RowLabel {
            family: RowFamily::UpstreamVsUpstream,
            source: 1,
            target: 3,
        };
        let w = [20.0, 20.0, 7.5];
        let blocks = (0..2)
            .map(|r| RandomBlock {
                link: LinkId(r as u32 + 1),
                mean_ratio: 0.5,
                terms: w.iter().enumerate().map(|(i, &v)| (r * 3 + i, v)).collect(),
            })
            .collect();
        let soc = SocConstraint::new(
            LinkId(9),
            label,
            NodeId(1),
            blocks,
            vec![],
            -3.0,
            3.0,
            g.clone(),
        )
        .unwrap();
        assert!((soc.covariance() - expand_covariance(&g, &w)).abs().max() < 1e-15);
        let x: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let slots = soc.slot_values(&x);
        let dense = chance_to_soc(soc.mean_vector().as_slice(), &soc.covariance(), 0.1).unwrap();
        assert!((dense.value(&slots) - soc.value(&x)).abs() < 1e-12);
    }

    #[test]
    fn sampler_columns_sum_to_one() {
        let node = NodeSpec {
            id: NodeId(2),
            incoming: vec![LinkId(1), LinkId(4)],
            outgoing: vec![LinkId(2), LinkId(5)],
            turning_mean: DMatrix::from_row_slice(2, 2, &[0.8, 0.27, 0.2, 0.73]),
            turning_cov: DMatrix::from_row_slice(2, 2, &[0.005, 0.001, 0.001, 0.005]),
        };
        let mut s = TurningSampler::new(&node, 7).unwrap();
        let mut mean = 0.0;
        for _ in 0..2000 {
            let p = s.sample();
            for j in 0..2 {
                assert!((p.column(j).sum() - 1.0).abs() < 1e-12);
            }
            mean += p[(0, 0)];
        }
        assert!((mean / 2000.0 - 0.8).abs() < 0.01);
    }
}
