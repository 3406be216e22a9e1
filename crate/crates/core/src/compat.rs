//! Compatibility constraints of a link: each value condition must not exceed the solution
//! generated by any other condition on its own domain. Rows are built as affine forms in the
//! link's boundary flows, oriented as `condition - solution <= 0`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::laxhopf::{
    downstream_condition_form, moskowitz_downstream_form, moskowitz_initial,
    moskowitz_upstream_form, upstream_condition_form, value_initial, ExtendedValue, FlowForm,
    LinkGeometry, Side, GUARD_TOL,
};
use crate::network::LinkId;

/// Tolerance for variable-free rows and dominance certificates.
pub const CHECK_TOL: f64 = 1e-9;

/// Which solution is compared with which boundary condition, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RowFamily {
    /// Downstream condition at the end of a step vs an initial-segment solution.
    InitialVsDownstream,
    /// Same, at the time the segment's free-flow characteristic reaches the downstream end.
    InitialVsDownstreamChar,
    /// Upstream condition at the end of a step vs an initial-segment solution.
    InitialVsUpstream,
    /// Same, at the time the segment's congestion wave reaches the upstream end.
    InitialVsUpstreamChar,
    /// Upstream condition vs an earlier upstream solution, at the upstream end.
    UpstreamVsUpstream,
    /// Downstream condition vs an upstream solution, at the end of a step.
    UpstreamVsDownstream,
    /// Same, at the kink time of the upstream solution.
    UpstreamVsDownstreamChar,
    /// Upstream condition vs a downstream solution, at the end of a step.
    DownstreamVsUpstream,
    /// Same, at the kink time of the downstream solution.
    DownstreamVsUpstreamChar,
    /// Downstream condition vs an earlier downstream solution, at the downstream end.
    DownstreamVsDownstream,
}

impl RowFamily {
    /// Families whose rows are evaluated at step ends and indexed by a source step, so that
    /// consecutive sources can be compared for dominance.
    pub fn prunable(self) -> bool {
        matches!(
            self,
            RowFamily::UpstreamVsUpstream
                | RowFamily::UpstreamVsDownstream
                | RowFamily::DownstreamVsUpstream
                | RowFamily::DownstreamVsDownstream
        )
    }

    /// The single-step capacity family used as the dominance multiplier.
    fn capacity_family(self) -> Option<RowFamily> {
        match self {
            RowFamily::UpstreamVsUpstream | RowFamily::UpstreamVsDownstream => {
                Some(RowFamily::UpstreamVsUpstream)
            }
            RowFamily::DownstreamVsUpstream | RowFamily::DownstreamVsDownstream => {
                Some(RowFamily::DownstreamVsDownstream)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowLabel {
    pub family: RowFamily,
    /// Segment `k` for initial-solution families, step `n` otherwise.
    pub source: usize,
    /// Step `p` of the boundary condition being checked.
    pub target: usize,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[{},{}]", self.family, self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRow {
    pub label: RowLabel,
    /// Evaluation time (s).
    pub time: f64,
    /// `condition - solution`, required `<= 0`.
    pub form: FlowForm,
}

/// A variable-free row, checked once at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCheck {
    pub label: RowLabel,
    pub value: f64,
}

impl ParameterCheck {
    pub fn holds(&self) -> bool {
        self.value <= CHECK_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkConstraints {
    pub rows: Vec<LinkRow>,
    pub checks: Vec<ParameterCheck>,
    /// Rows removed as implied by a kept row plus a capacity row.
    pub pruned: usize,
}

impl LinkConstraints {
    pub fn failed_checks(&self) -> impl Iterator<Item = &ParameterCheck> {
        self.checks.iter().filter(|c| !c.holds())
    }
}

/// Step containing `t`: `[(p-1)T, pT)` except that the horizon end belongs to the last step.
pub fn step_containing(t: f64, step: f64, steps: usize) -> Option<usize> {
    let horizon = step * steps as f64;
    if t < -GUARD_TOL || t > horizon + GUARD_TOL {
        return None;
    }
    let j = (t / step).round();
    let p = if (t - j * step).abs() <= GUARD_TOL {
        j as usize + 1
    } else {
        (t / step).floor() as usize + 1
    };
    Some(p.clamp(1, steps))
}

struct Builder<'a> {
    g: &'a LinkGeometry,
    out: LinkConstraints,
}

impl Builder<'_> {
    fn push(
        &mut self,
        label: RowLabel,
        time: f64,
        condition: Option<FlowForm>,
        solution: Option<FlowForm>,
    ) {
        let (Some(condition), Some(solution)) = (condition, solution) else {
            return;
        };
        let form = condition.minus(&solution);
        if form.has_variables() {
            self.out.rows.push(LinkRow { label, time, form });
        } else {
            self.out.checks.push(ParameterCheck {
                label,
                value: form.constant,
            });
        }
    }

    fn initial(&self, k: usize, t: f64, x: f64) -> Option<FlowForm> {
        moskowitz_initial(self.g, k, t, x)
            .finite()
            .map(FlowForm::constant)
    }
}

/// Builds every compatibility row of a link over `steps` control steps. With `prune`, rows
/// implied by another row plus a single-step capacity row are dropped; each drop is backed by
/// an explicit certificate.
pub fn build_link_constraints(g: &LinkGeometry, steps: usize, prune: bool) -> LinkConstraints {
    let mut b = Builder {
        g,
        out: LinkConstraints::default(),
    };
    let t_step = g.step;
    let xi = g.upstream_end();
    let chi = g.downstream_end();
    let seg = g.segment_length;
    let fd = g.fd;
    let label = |family, source, target| RowLabel {
        family,
        source,
        target,
    };

    for k in 1..=g.segments() {
        for p in 1..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::InitialVsDownstream, k, p),
                t,
                downstream_condition_form(g, p, t),
                b.initial(k, t, chi),
            );
        }
        let t = (chi - k as f64 * seg) / fd.free_speed;
        if let Some(p) = step_containing(t, t_step, steps) {
            b.push(
                label(RowFamily::InitialVsDownstreamChar, k, p),
                t,
                downstream_condition_form(g, p, t),
                b.initial(k, t, chi),
            );
        }
        for p in 1..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::InitialVsUpstream, k, p),
                t,
                upstream_condition_form(g, p, t),
                b.initial(k, t, xi),
            );
        }
        let t = (xi - (k - 1) as f64 * seg) / fd.wave_speed;
        if let Some(p) = step_containing(t, t_step, steps) {
            b.push(
                label(RowFamily::InitialVsUpstreamChar, k, p),
                t,
                upstream_condition_form(g, p, t),
                b.initial(k, t, xi),
            );
        }
    }

    for n in 1..=steps {
        for p in (n + 1)..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::UpstreamVsUpstream, n, p),
                t,
                upstream_condition_form(g, p, t),
                moskowitz_upstream_form(g, n, t, xi),
            );
        }
        for p in 1..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::UpstreamVsDownstream, n, p),
                t,
                downstream_condition_form(g, p, t),
                moskowitz_upstream_form(g, n, t, chi),
            );
        }
        let tau = n as f64 * t_step + (chi - xi) / fd.free_speed;
        if let Some(p) = step_containing(tau, t_step, steps) {
            b.push(
                label(RowFamily::UpstreamVsDownstreamChar, n, p),
                tau,
                downstream_condition_form(g, p, tau),
                moskowitz_upstream_form(g, n, tau, chi),
            );
        }
        for p in 1..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::DownstreamVsUpstream, n, p),
                t,
                upstream_condition_form(g, p, t),
                moskowitz_downstream_form(g, n, t, xi),
            );
        }
        let tau = n as f64 * t_step + (xi - chi) / fd.wave_speed;
        if let Some(p) = step_containing(tau, t_step, steps) {
            b.push(
                label(RowFamily::DownstreamVsUpstreamChar, n, p),
                tau,
                upstream_condition_form(g, p, tau),
                moskowitz_downstream_form(g, n, tau, xi),
            );
        }
        for p in (n + 1)..=steps {
            let t = p as f64 * t_step;
            b.push(
                label(RowFamily::DownstreamVsDownstream, n, p),
                t,
                downstream_condition_form(g, p, t),
                moskowitz_downstream_form(g, n, t, chi),
            );
        }
    }

    let mut out = b.out;
    if prune {
        prune_dominated(&mut out);
    }
    out
}

/// Multiplier `lambda >= 0` and remainder `s` with `diff = lambda * cap + s`, if one exists.
fn dominance_certificate(diff: &FlowForm, cap: &FlowForm) -> Option<(f64, f64)> {
    let lambda = match (diff.terms.first(), cap.terms.first()) {
        (None, _) => 0.0,
        (Some(_), None) => return None,
        (Some(_), Some(c0)) => {
            let d0 = diff
                .terms
                .iter()
                .find(|t| t.side == c0.side && t.step == c0.step)?;
            d0.coef / c0.coef
        }
    };
    if lambda < 0.0 {
        return None;
    }
    let residual = diff.minus(&FlowForm {
        constant: lambda * cap.constant,
        terms: cap
            .terms
            .iter()
            .map(|t| crate::laxhopf::FlowTerm {
                coef: lambda * t.coef,
                ..*t
            })
            .collect(),
    });
    let scale = diff
        .terms
        .iter()
        .fold(1.0_f64, |acc, t| acc.max(t.coef.abs()));
    if residual.terms.iter().any(|t| t.coef.abs() > 1e-12 * scale) {
        return None;
    }
    Some((lambda, residual.constant))
}

fn prune_dominated(out: &mut LinkConstraints) {
    let index: HashMap<RowLabel, usize> = out
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.label, i))
        .collect();
    let mut drop = vec![false; out.rows.len()];
    for (i, row) in out.rows.iter().enumerate() {
        let family = row.label.family;
        let Some(cap_family) = family.capacity_family() else {
            continue;
        };
        let (n, p) = (row.label.source, row.label.target);
        if family == cap_family && p == n + 1 {
            continue;
        }
        let next = RowLabel {
            family,
            source: n + 1,
            target: p,
        };
        let cap = RowLabel {
            family: cap_family,
            source: n,
            target: n + 1,
        };
        let (Some(&j), Some(&c)) = (index.get(&next), index.get(&cap)) else {
            continue;
        };
        let diff = row.form.minus(&out.rows[j].form);
        if let Some((_, s)) = dominance_certificate(&diff, &out.rows[c].form) {
            if s <= CHECK_TOL {
                drop[i] = true;
            }
        }
    }
    let before = out.rows.len();
    let mut k = 0;
    out.rows.retain(|_| {
        let keep = !drop[k];
        k += 1;
        keep
    });
    out.pruned = before - out.rows.len();
}

/// A violated initial-vs-initial comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialViolation {
    /// Segment whose condition is checked.
    pub condition_segment: usize,
    /// Segment whose solution bounds it.
    pub solution_segment: usize,
    pub x: f64,
    pub excess: f64,
}

/// Compares every initial segment condition with the solutions of the other segments at the
/// segment ends, where both sides are affine in `x`.
pub fn check_initial_consistency(g: &LinkGeometry) -> Vec<InitialViolation> {
    let seg = g.segment_length;
    let mut violations = Vec::new();
    for p in 1..=g.segments() {
        for k in 1..=g.segments() {
            if k == p {
                continue;
            }
            for x in [(p - 1) as f64 * seg, p as f64 * seg] {
                let (ExtendedValue::Finite(c), ExtendedValue::Finite(m)) =
                    (value_initial(g, p, 0.0, x), moskowitz_initial(g, k, 0.0, x))
                else {
                    continue;
                };
                if c - m > CHECK_TOL {
                    violations.push(InitialViolation {
                        condition_segment: p,
                        solution_segment: k,
                        x,
                        excess: c - m,
                    });
                }
            }
        }
    }
    violations
}

/// True when every row evaluates to at most `tol` for the given numeric flows.
pub fn feasible_region_sanity(rows: &[LinkRow], q_in: &[f64], q_out: &[f64], tol: f64) -> bool {
    rows.iter().all(|r| r.form.eval(q_in, q_out) <= tol)
}

/// Kind of decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    Inflow,
    Outflow,
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarIndex {
    pub kind: VarKind,
    /// Link id; zero for slacks.
    pub link: LinkId,
    /// 1-based step.
    pub step: usize,
}

/// Bijection between decision variables and dense column numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarTable {
    vars: Vec<VarIndex>,
    columns: BTreeMap<VarIndex, usize>,
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable, returning its column. Adding an existing variable returns its column.
    pub fn add(&mut self, var: VarIndex) -> usize {
        if let Some(&c) = self.columns.get(&var) {
            return c;
        }
        let c = self.vars.len();
        self.vars.push(var);
        self.columns.insert(var, c);
        c
    }

    /// Adds one variable per step for a series.
    pub fn add_series(&mut self, kind: VarKind, link: LinkId, steps: usize) {
        for step in 1..=steps {
            self.add(VarIndex { kind, link, step });
        }
    }

    pub fn column(&self, var: VarIndex) -> Option<usize> {
        self.columns.get(&var).copied()
    }

    pub fn series_column(&self, kind: VarKind, link: LinkId, step: usize) -> Option<usize> {
        self.column(VarIndex { kind, link, step })
    }

    pub fn var(&self, column: usize) -> VarIndex {
        self.vars[column]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, VarIndex)> + '_ {
        self.vars.iter().copied().enumerate()
    }
}

/// Sparse affine expression over dense columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    /// Sorted by column, without zero coefficients.
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(mut terms: Vec<(usize, f64)>, constant: f64) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (c, v) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        Self {
            terms: merged,
            constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(c, v)| v * x[c]).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.terms.iter().map(|&(c, v)| (c, v * s)).collect(),
            self.constant * s,
        )
    }

    pub fn plus(&self, other: &AffineExpr) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::new(terms, self.constant + other.constant)
    }
}

/// Maps a link form onto direct variables: inflows and outflows of `link` must both exist in
/// the table.
pub fn form_to_affine(form: &FlowForm, link: LinkId, table: &VarTable) -> Option<AffineExpr> {
    let mut terms = Vec::with_capacity(form.terms.len());
    for t in &form.terms {
        let kind = match t.side {
            Side::In => VarKind::Inflow,
            Side::Out => VarKind::Outflow,
        };
        terms.push((table.series_column(kind, link, t.step)?, t.coef));
    }
    Some(AffineExpr::new(terms, form.constant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FundamentalDiagram, LinkKind, LinkSpec};

    fn geometry(rho: &[f64], lanes: u32) -> LinkGeometry {
        let spec = LinkSpec {
            id: LinkId(1),
            length: 1200.0,
            lanes,
            segments: rho.len(),
            init_density: rho.to_vec(),
            fd: FundamentalDiagram::new(30.0, -5.5, 0.0175, 0.225),
            kind: LinkKind::Interior,
        };
        LinkGeometry::new(&spec, 20.0)
    }

    #[test]
    fn step_membership_is_half_open() {
        assert_eq!(step_containing(0.0, 20.0, 5), Some(1));
        assert_eq!(step_containing(20.0, 20.0, 5), Some(2));
        assert_eq!(step_containing(19.9, 20.0, 5), Some(1));
        assert_eq!(step_containing(100.0, 20.0, 5), Some(5));
        assert_eq!(step_containing(100.1, 20.0, 5), None);
    }

    #[test]
    fn initial_consistency_holds_for_uniform_and_single_segment() {
        assert!(check_initial_consistency(&geometry(&[0.014, 0.014], 4)).is_empty());
        assert!(check_initial_consistency(&geometry(&[0.1], 4)).is_empty());
    }

    #[test]
    fn zero_flows_always_compatible() {
        for rho in [[0.014, 0.014], [0.07, 0.07], [0.0, 0.225]] {
            let g = geometry(&rho, 3);
            let c = build_link_constraints(&g, 10, false);
            assert!(c.failed_checks().next().is_none());
            let zeros = vec![0.0; 10];
            assert!(
                feasible_region_sanity(&c.rows, &zeros, &zeros, 1e-9),
                "{rho:?}"
            );
        }
        // A jam directly upstream of an empty segment needs the branches to meet at the
        // critical density.
        let fd = FundamentalDiagram::continuous(30.0, 0.0175, 0.225);
        for rho in [[0.225, 0.0], [0.1, 0.01], [0.0175, 0.225]] {
            let spec = LinkSpec {
                id: LinkId(1),
                length: 1200.0,
                lanes: 3,
                segments: 2,
                init_density: rho.to_vec(),
                fd,
                kind: LinkKind::Interior,
            };
            let g = LinkGeometry::new(&spec, 20.0);
            let c = build_link_constraints(&g, 10, false);
            assert!(c.failed_checks().next().is_none());
            let zeros = vec![0.0; 10];
            assert!(
                feasible_region_sanity(&c.rows, &zeros, &zeros, 1e-9),
                "{rho:?}"
            );
        }
    }

    #[test]
    fn jammed_link_rejects_inflow() {
        let g = geometry(&[0.225, 0.225], 1);
        let c = build_link_constraints(&g, 5, true);
        let mut q_in = vec![0.0; 5];
        let q_out = vec![0.0; 5];
        assert!(feasible_region_sanity(&c.rows, &q_in, &q_out, 1e-9));
        q_in[0] = g.fd.capacity();
        assert!(!feasible_region_sanity(&c.rows, &q_in, &q_out, 1e-9));
    }

    #[test]
    fn capacity_rows_survive_pruning() {
        let g = geometry(&[0.014, 0.014], 4);
        let c = build_link_constraints(&g, 25, true);
        assert!(c.pruned > 0);
        for n in 1..25 {
            assert!(c.rows.iter().any(|r| r.label
                == RowLabel {
                    family: RowFamily::UpstreamVsUpstream,
                    source: n,
                    target: n + 1
                }));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let g = geometry(&[0.07, 0.014], 3);
        assert_eq!(
            build_link_constraints(&g, 8, true),
            build_link_constraints(&g, 8, true)
        );
    }

    #[test]
    fn affine_expr_merges() {
        let e = AffineExpr::new(vec![(3, 1.0), (1, 2.0), (3, -1.0)], 0.5);
        assert_eq!(e.terms, vec![(1, 2.0)]);
        assert_eq!(e.eval(&[0.0, 2.0, 0.0, 9.0]), 4.5);
    }
}
