//! Piecewise-affine value conditions of a link and their closed-form Moskowitz solutions,
//! together with a brute-force Lax-Hopf minimizer used as a test oracle.
//!
//! All quantities are link totals: densities and capacity are multiplied by the lane count.
//! The upstream end sits at `x = 0` and the downstream end at `x = length`.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::network::{FundamentalDiagram, LinkSpec};

/// Slack used when testing whether a point lies on a branch or inside a time window.
pub const GUARD_TOL: f64 = 1e-9;

/// A vehicle index or `+inf`. `+inf` absorbs nothing under `min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedValue {
    Finite(f64),
    PlusInfinity,
}

impl ExtendedValue {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedValue::Finite(v) => Some(v),
            ExtendedValue::PlusInfinity => None,
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => ExtendedValue::Finite(a.min(b)),
            (ExtendedValue::PlusInfinity, b) => b,
            (a, ExtendedValue::PlusInfinity) => a,
        }
    }
}

impl PartialOrd for ExtendedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => a.partial_cmp(b),
            (ExtendedValue::Finite(_), ExtendedValue::PlusInfinity) => Some(Ordering::Less),
            (ExtendedValue::PlusInfinity, ExtendedValue::Finite(_)) => Some(Ordering::Greater),
            (ExtendedValue::PlusInfinity, ExtendedValue::PlusInfinity) => Some(Ordering::Equal),
        }
    }
}

impl From<Option<f64>> for ExtendedValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(ExtendedValue::PlusInfinity, ExtendedValue::Finite)
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedValue::Finite(v) => write!(f, "{v}"),
            ExtendedValue::PlusInfinity => write!(f, "+inf"),
        }
    }
}

/// Which boundary flow series a term refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// Inflow at the upstream end.
    In,
    /// Outflow at the downstream end.
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTerm {
    pub side: Side,
    /// 1-based control step.
    pub step: usize,
    pub coef: f64,
}

/// An affine function of one link's boundary flows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowForm {
    pub constant: f64,
    pub terms: Vec<FlowTerm>,
}

impl FlowForm {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn add(&mut self, side: Side, step: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push(FlowTerm { side, step, coef });
        }
    }

    /// Merges repeated entries, drops zeros and sorts by (side, step).
    pub fn normalized(mut self) -> Self {
        self.terms.sort_by_key(|t| (t.side, t.step));
        let mut merged: Vec<FlowTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match merged.last_mut() {
                Some(last) if last.side == t.side && last.step == t.step => last.coef += t.coef,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        self.terms = merged;
        self
    }

    pub fn minus(&self, other: &FlowForm) -> FlowForm {
        let mut out = self.clone();
        out.constant -= other.constant;
        out.terms.extend(other.terms.iter().map(|t| FlowTerm {
            coef: -t.coef,
            ..*t
        }));
        out.normalized()
    }

    pub fn has_variables(&self) -> bool {
        !self.terms.is_empty()
    }

    pub fn has_side(&self, side: Side) -> bool {
        self.terms.iter().any(|t| t.side == side)
    }

    pub fn eval(&self, q_in: &[f64], q_out: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let q = match t.side {
                        Side::In => q_in[t.step - 1],
                        Side::Out => q_out[t.step - 1],
                    };
                    t.coef * q
                })
                .sum::<f64>()
    }
}

/// A link reduced to the quantities the solutions need, in link totals.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub length: f64,
    pub segment_length: f64,
    /// Initial density per segment, summed over lanes.
    pub densities: Vec<f64>,
    /// Diagram with densities summed over lanes.
    pub fd: FundamentalDiagram,
    /// Control time step.
    pub step: f64,
}

impl LinkGeometry {
    pub fn new(link: &LinkSpec, step: f64) -> Self {
        let lanes = link.lanes as f64;
        Self {
            length: link.length,
            segment_length: link.segment_length(),
            densities: link.init_density.iter().map(|r| r * lanes).collect(),
            fd: link.fd.scaled(lanes),
            step,
        }
    }

    pub fn segments(&self) -> usize {
        self.densities.len()
    }

    /// Vehicles on segments `1..=k` at time zero.
    pub fn vehicles_through(&self, k: usize) -> f64 {
        self.densities[..k].iter().sum::<f64>() * self.segment_length
    }

    pub fn total_vehicles(&self) -> f64 {
        self.vehicles_through(self.segments())
    }

    pub fn upstream_end(&self) -> f64 {
        0.0
    }

    pub fn downstream_end(&self) -> f64 {
        self.length
    }
}

/// Initial condition of segment `k` (1-based): finite only at `t = 0` on the segment.
pub fn value_initial(g: &LinkGeometry, k: usize, t: f64, x: f64) -> ExtendedValue {
    let seg = g.segment_length;
    let a = (k - 1) as f64 * seg;
    if t.abs() > GUARD_TOL || x < a - GUARD_TOL || x > a + seg + GUARD_TOL {
        return ExtendedValue::PlusInfinity;
    }
    ExtendedValue::Finite(-g.vehicles_through(k - 1) - g.densities[k - 1] * (x - a))
}

fn in_step(g: &LinkGeometry, n: usize, t: f64) -> bool {
    let lo = (n - 1) as f64 * g.step;
    let hi = n as f64 * g.step;
    t >= lo - GUARD_TOL && t <= hi + GUARD_TOL
}

/// Upstream boundary condition during step `n`, as a form over the inflows. `None` when `t`
/// lies outside the step.
pub fn upstream_condition_form(g: &LinkGeometry, n: usize, t: f64) -> Option<FlowForm> {
    if !in_step(g, n, t) {
        return None;
    }
    let mut f = FlowForm::default();
    for i in 1..n {
        f.add(Side::In, i, g.step);
    }
    f.add(Side::In, n, t - (n - 1) as f64 * g.step);
    Some(f.normalized())
}

/// Downstream boundary condition during step `n`, including the initial-vehicle offset.
pub fn downstream_condition_form(g: &LinkGeometry, n: usize, t: f64) -> Option<FlowForm> {
    if !in_step(g, n, t) {
        return None;
    }
    let mut f = FlowForm::constant(-g.total_vehicles());
    for i in 1..n {
        f.add(Side::Out, i, g.step);
    }
    f.add(Side::Out, n, t - (n - 1) as f64 * g.step);
    Some(f.normalized())
}

pub fn value_upstream(g: &LinkGeometry, q_in: &[f64], n: usize, t: f64, x: f64) -> ExtendedValue {
    if (x - g.upstream_end()).abs() > GUARD_TOL {
        return ExtendedValue::PlusInfinity;
    }
    upstream_condition_form(g, n, t)
        .map(|f| f.eval(q_in, &[]))
        .into()
}

pub fn value_downstream(
    g: &LinkGeometry,
    q_out: &[f64],
    n: usize,
    t: f64,
    x: f64,
) -> ExtendedValue {
    if (x - g.downstream_end()).abs() > GUARD_TOL {
        return ExtendedValue::PlusInfinity;
    }
    downstream_condition_form(g, n, t)
        .map(|f| f.eval(&[], q_out))
        .into()
}

/// Solution generated by the initial condition of segment `k`. Where two branches apply
/// (cone edges, or a density exactly at the critical value) the smaller value is taken.
pub fn moskowitz_initial(g: &LinkGeometry, k: usize, t: f64, x: f64) -> ExtendedValue {
    let fd = &g.fd;
    let (vf, w, rho_c, rho_m) = (
        fd.free_speed,
        fd.wave_speed,
        fd.critical_density,
        fd.jam_density,
    );
    let seg = g.segment_length;
    let a = (k - 1) as f64 * seg;
    let b = k as f64 * seg;
    let rho = g.densities[k - 1];
    if x < a + t * w - GUARD_TOL || x > b + vf * t + GUARD_TOL {
        return ExtendedValue::PlusInfinity;
    }
    let before = g.vehicles_through(k - 1);
    let through = before + rho * seg;
    let within = |lo: f64, hi: f64| x >= lo - GUARD_TOL && x <= hi + GUARD_TOL;
    let mut best = ExtendedValue::PlusInfinity;
    if rho <= rho_c {
        if within(a + vf * t, b + vf * t) {
            best = best.min(ExtendedValue::Finite(-before + rho * (t * vf + a - x)));
        }
        if within(a + t * w, a + vf * t) {
            best = best.min(ExtendedValue::Finite(-before + rho_c * (t * vf + a - x)));
        }
    }
    if rho >= rho_c {
        if within(a + t * w, b + t * w) {
            best = best.min(ExtendedValue::Finite(
                -before + rho * (t * w + a - x) - rho_m * t * w,
            ));
        }
        if within(b + t * w, b + vf * t) {
            best = best.min(ExtendedValue::Finite(
                -through + rho_c * (t * w + b - x) - rho_m * t * w,
            ));
        }
    }
    best
}

/// Solution generated by the upstream condition of step `n`, as a form over the inflows.
/// Valid for points at or downstream of the upstream end.
pub fn moskowitz_upstream_form(g: &LinkGeometry, n: usize, t: f64, x: f64) -> Option<FlowForm> {
    let step = g.step;
    let delay = (x - g.upstream_end()) / g.fd.free_speed;
    let start = (n - 1) as f64 * step + delay;
    if t < start - GUARD_TOL {
        return None;
    }
    let mut f = FlowForm::default();
    for i in 1..n {
        f.add(Side::In, i, step);
    }
    if t <= n as f64 * step + delay {
        f.add(Side::In, n, (t - start).max(0.0));
    } else {
        f.add(Side::In, n, step);
        f.constant += g.fd.capacity() * (t - delay - n as f64 * step);
    }
    Some(f.normalized())
}

/// Solution generated by the downstream condition of step `n`, as a form over the outflows.
/// Valid for points at or upstream of the downstream end.
pub fn moskowitz_downstream_form(g: &LinkGeometry, n: usize, t: f64, x: f64) -> Option<FlowForm> {
    let step = g.step;
    let fd = &g.fd;
    let offset = x - g.downstream_end();
    let delay = offset / fd.wave_speed;
    let start = (n - 1) as f64 * step + delay;
    if t < start - GUARD_TOL {
        return None;
    }
    let switch = n as f64 * step + delay;
    let middle = || {
        let mut f = FlowForm::constant(-g.total_vehicles() - fd.jam_density * offset);
        for i in 1..n {
            f.add(Side::Out, i, step);
        }
        f.add(Side::Out, n, (t - start).max(0.0));
        f.normalized()
    };
    let after = || {
        let mut f = FlowForm::constant(
            -g.total_vehicles() + fd.capacity() * (t - n as f64 * step - offset / fd.free_speed),
        );
        for i in 1..=n {
            f.add(Side::Out, i, step);
        }
        f.normalized()
    };
    if t < switch - GUARD_TOL {
        Some(middle())
    } else if t > switch + GUARD_TOL {
        Some(after())
    } else {
        // Both branches carry the same flow terms here; keep the lower constant.
        let (m, a) = (middle(), after());
        Some(if m.constant <= a.constant { m } else { a })
    }
}

pub fn moskowitz_upstream(
    g: &LinkGeometry,
    q_in: &[f64],
    n: usize,
    t: f64,
    x: f64,
) -> ExtendedValue {
    moskowitz_upstream_form(g, n, t, x)
        .map(|f| f.eval(q_in, &[]))
        .into()
}

pub fn moskowitz_downstream(
    g: &LinkGeometry,
    q_out: &[f64],
    n: usize,
    t: f64,
    x: f64,
) -> ExtendedValue {
    moskowitz_downstream_form(g, n, t, x)
        .map(|f| f.eval(&[], q_out))
        .into()
}

/// `sup_p [p u + psi(p)]` over `p in [0, rho_m]`, for characteristic speeds
/// `u in [-v_f, -w]`. The objective is affine on each branch, so the supremum is attained at
/// a vertex or approached at the right limit of the critical density.
pub fn legendre_transform(u: f64, fd: &FundamentalDiagram) -> Result<f64> {
    let (lo, hi) = (-fd.free_speed, -fd.wave_speed);
    let slack = GUARD_TOL * fd.free_speed.max(1.0);
    if !(u >= lo - slack && u <= hi + slack) {
        return Err(Error::Config(format!(
            "characteristic speed {u} outside [{lo}, {hi}]"
        )));
    }
    let rc = fd.critical_density;
    let candidates = [
        0.0,
        rc * u + fd.capacity(),
        rc * u + fd.wave_speed * (rc - fd.jam_density),
        fd.jam_density * u,
    ];
    Ok(candidates.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// A single value condition of a link, used by the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueCondition {
    Initial { k: usize },
    Upstream { n: usize },
    Downstream { n: usize },
}

/// Numeric boundary flows of one link.
#[derive(Debug, Clone, Copy)]
pub struct Flows<'a> {
    pub q_in: &'a [f64],
    pub q_out: &'a [f64],
}

pub fn condition_value(
    g: &LinkGeometry,
    flows: Flows<'_>,
    cond: ValueCondition,
    t: f64,
    x: f64,
) -> ExtendedValue {
    match cond {
        ValueCondition::Initial { k } => value_initial(g, k, t, x),
        ValueCondition::Upstream { n } => value_upstream(g, flows.q_in, n, t, x),
        ValueCondition::Downstream { n } => value_downstream(g, flows.q_out, n, t, x),
    }
}

/// Closed-form solution for one condition.
pub fn closed_form(
    g: &LinkGeometry,
    flows: Flows<'_>,
    cond: ValueCondition,
    t: f64,
    x: f64,
) -> ExtendedValue {
    match cond {
        ValueCondition::Initial { k } => moskowitz_initial(g, k, t, x),
        ValueCondition::Upstream { n } => moskowitz_upstream(g, flows.q_in, n, t, x),
        ValueCondition::Downstream { n } => moskowitz_downstream(g, flows.q_out, n, t, x),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Minimizes `c(t - s, x + s u) + s * phi*(u)` over characteristics. Initial conditions are
/// reached only with `s = t`, so a grid over `u` is used; boundary conditions live on a fixed
/// `x`, so a grid over `s` is used with `u` implied. Each grid is augmented with the
/// condition's breakpoints and the ends of the speed range.
pub fn brute_force_lax_hopf(
    g: &LinkGeometry,
    flows: Flows<'_>,
    cond: ValueCondition,
    t: f64,
    x: f64,
    grid_n: usize,
) -> ExtendedValue {
    let fd = &g.fd;
    let (u_lo, u_hi) = (-fd.free_speed, -fd.wave_speed);
    let u_slack = GUARD_TOL * fd.free_speed.max(1.0);
    if t <= 0.0 {
        return condition_value(g, flows, cond, 0.0, x);
    }
    let mut best = ExtendedValue::PlusInfinity;
    match cond {
        ValueCondition::Initial { k } => {
            let seg = g.segment_length;
            let knots = [((k - 1) as f64 * seg - x) / t, (k as f64 * seg - x) / t];
            for u in linspace(u_lo, u_hi, grid_n).chain(knots) {
                if u < u_lo - u_slack || u > u_hi + u_slack {
                    continue;
                }
                let u = u.clamp(u_lo, u_hi);
                if let ExtendedValue::Finite(c) = condition_value(g, flows, cond, 0.0, x + t * u) {
                    let cost = legendre_transform(u, fd).expect("speed clamped into range");
                    best = best.min(ExtendedValue::Finite(c + t * cost));
                }
            }
        }
        ValueCondition::Upstream { n } | ValueCondition::Downstream { n } => {
            let xb = match cond {
                ValueCondition::Upstream { .. } => g.upstream_end(),
                _ => g.downstream_end(),
            };
            let step = g.step;
            let d = x - xb;
            if d.abs() <= GUARD_TOL {
                best = best.min(condition_value(g, flows, cond, t, xb));
            }
            let knots = [
                t - (n - 1) as f64 * step,
                t - n as f64 * step,
                d / fd.free_speed,
                d / fd.wave_speed,
                t,
            ];
            for s in linspace(0.0, t, grid_n).chain(knots) {
                if !(s > 0.0 && s <= t) {
                    continue;
                }
                let u = (xb - x) / s;
                if u < u_lo - u_slack || u > u_hi + u_slack {
                    continue;
                }
                let u = u.clamp(u_lo, u_hi);
                let tau = t - s;
                let lo = (n - 1) as f64 * step;
                let hi = n as f64 * step;
                if tau < lo - GUARD_TOL || tau > hi + GUARD_TOL {
                    continue;
                }
                let tau = tau.clamp(lo, hi);
                if let ExtendedValue::Finite(c) = condition_value(g, flows, cond, tau, xb) {
                    let cost = legendre_transform(u, fd).expect("speed clamped into range");
                    best = best.min(ExtendedValue::Finite(c + s * cost));
                }
            }
        }
    }
    best
}

/// Result of a refinement sequence of the brute-force oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    /// Oracle value at each grid size, coarsest first.
    pub values: Vec<ExtendedValue>,
}

impl Refinement {
    pub fn last(&self) -> ExtendedValue {
        *self.values.last().expect("at least one level")
    }
}

/// Runs the oracle at `base` and then doubles the grid up to `doublings` times, stopping early
/// once successive values change by less than `1e-6`.
pub fn refined_lax_hopf(
    g: &LinkGeometry,
    flows: Flows<'_>,
    cond: ValueCondition,
    t: f64,
    x: f64,
    base: usize,
    doublings: usize,
) -> Refinement {
    let mut values = vec![brute_force_lax_hopf(g, flows, cond, t, x, base)];
    let mut n = base;
    for _ in 0..doublings {
        n *= 2;
        let v = brute_force_lax_hopf(g, flows, cond, t, x, n);
        let prev = *values.last().unwrap();
        values.push(v);
        match (prev, v) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) if (a - b).abs() < 1e-6 => break,
            (ExtendedValue::PlusInfinity, ExtendedValue::PlusInfinity) => break,
            _ => {}
        }
    }
    Refinement { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LinkId, LinkKind};

    fn freeway_link(rho: f64) -> LinkGeometry {
        let spec = LinkSpec {
            id: LinkId(1),
            length: 1200.0,
            lanes: 1,
            segments: 2,
            init_density: vec![rho, rho],
            fd: FundamentalDiagram::new(30.0, -5.5, 0.0175, 0.225),
            kind: LinkKind::IncomingBoundary,
        };
        LinkGeometry::new(&spec, 20.0)
    }

    fn continuous_link(rho: &[f64]) -> LinkGeometry {
        let spec = LinkSpec {
            id: LinkId(1),
            length: 900.0,
            lanes: 2,
            segments: rho.len(),
            init_density: rho.to_vec(),
            fd: FundamentalDiagram::continuous(25.0, 0.02, 0.2),
            kind: LinkKind::Interior,
        };
        LinkGeometry::new(&spec, 10.0)
    }

    #[test]
    fn initial_condition_examples() {
        let g = freeway_link(0.8 * 0.0175);
        assert_eq!(value_initial(&g, 1, 0.0, 0.0), ExtendedValue::Finite(0.0));
        assert_eq!(
            value_initial(&g, 1, 0.1, 300.0),
            ExtendedValue::PlusInfinity
        );
        let v = value_initial(&g, 2, 0.0, 900.0).finite().unwrap();
        assert!((v + 12.6).abs() < 1e-12);
    }

    #[test]
    fn boundary_condition_examples() {
        let g = freeway_link(0.014);
        let q = [0.5; 3];
        assert_eq!(
            value_upstream(&g, &q, 1, 0.0, 0.0),
            ExtendedValue::Finite(0.0)
        );
        assert_eq!(
            value_upstream(&g, &q, 1, 20.0, 0.0),
            ExtendedValue::Finite(10.0)
        );
        let v = value_downstream(&g, &q, 1, 0.0, 1200.0).finite().unwrap();
        assert!((v + g.total_vehicles()).abs() < 1e-12);
    }

    #[test]
    fn initial_solution_matches_condition_at_time_zero() {
        for rho in [0.0, 0.01, 0.0175, 0.07, 0.225] {
            let g = freeway_link(rho);
            for k in 1..=2 {
                for i in 0..=10 {
                    let x = (k - 1) as f64 * 600.0 + 60.0 * i as f64;
                    let c = value_initial(&g, k, 0.0, x).finite().unwrap();
                    let m = moskowitz_initial(&g, k, 0.0, x).finite().unwrap();
                    assert!((c - m).abs() < 1e-9, "rho {rho} k {k} x {x}: {c} vs {m}");
                }
            }
        }
    }

    #[test]
    fn initial_solution_infinite_beyond_free_flow_cone() {
        let g = freeway_link(0.014);
        let t = 5.0;
        assert_eq!(
            moskowitz_initial(&g, 1, t, 600.0 + 30.0 * t + 1e-3),
            ExtendedValue::PlusInfinity
        );
        assert!(moskowitz_initial(&g, 1, t, 600.0 + 30.0 * t).is_finite());
    }

    #[test]
    fn upstream_solution_matches_condition_on_boundary() {
        let g = freeway_link(0.014);
        let q = [0.3, 0.2, 0.5];
        for n in 1..=3 {
            for i in 0..=4 {
                let t = (n - 1) as f64 * 20.0 + 5.0 * i as f64;
                let c = value_upstream(&g, &q, n, t, 0.0);
                let m = moskowitz_upstream(&g, &q, n, t, 0.0);
                assert_eq!(c, m);
            }
        }
        assert_eq!(
            moskowitz_upstream(&g, &q, 2, 20.0 + 600.0 / 30.0 - 1e-3, 600.0),
            ExtendedValue::PlusInfinity
        );
    }

    #[test]
    fn legendre_transform_examples() {
        let fd = FundamentalDiagram::continuous(30.0, 0.0175, 0.225);
        let c = legendre_transform(0.0, &fd).unwrap();
        assert!((c - fd.capacity()).abs() < 1e-12);
        let top = legendre_transform(-fd.wave_speed, &fd).unwrap();
        assert!((top - fd.critical_density * (fd.free_speed - fd.wave_speed)).abs() < 1e-12);
        assert!(legendre_transform(31.0, &fd).is_err());
        for i in 0..=20 {
            let u = -30.0 + (30.0 - fd.wave_speed) * i as f64 / 20.0;
            let v = legendre_transform(u, &fd).unwrap();
            assert!(v >= fd.capacity() + fd.critical_density * u.min(0.0) - 1e-12);
        }
    }

    #[test]
    fn oracle_matches_closed_forms_on_fixed_points() {
        let g = continuous_link(&[0.01, 0.05, 0.03]);
        let cap = g.fd.capacity();
        let q_in = [0.2 * cap, cap, 0.7 * cap, 0.0];
        let q_out = [0.5 * cap, 0.1 * cap, cap, 0.4 * cap];
        let flows = Flows {
            q_in: &q_in,
            q_out: &q_out,
        };
        let conds = [
            ValueCondition::Initial { k: 1 },
            ValueCondition::Initial { k: 2 },
            ValueCondition::Initial { k: 3 },
            ValueCondition::Upstream { n: 2 },
            ValueCondition::Downstream { n: 3 },
        ];
        for cond in conds {
            for (t, x) in [
                (7.0, 100.0),
                (25.0, 450.0),
                (38.0, 880.0),
                (15.0, 0.0),
                (33.0, 900.0),
            ] {
                let exact = closed_form(&g, flows, cond, t, x);
                let oracle = refined_lax_hopf(&g, flows, cond, t, x, 400, 4).last();
                match (exact, oracle) {
                    (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => {
                        assert!((a - b).abs() < 1e-6, "{cond:?} ({t},{x}): {a} vs {b}")
                    }
                    (a, b) => assert_eq!(a, b, "{cond:?} ({t},{x})"),
                }
            }
        }
    }

    #[test]
    fn forms_normalize() {
        let mut f = FlowForm::constant(1.0);
        f.add(Side::Out, 2, 1.0);
        f.add(Side::In, 1, 2.0);
        f.add(Side::Out, 2, -1.0);
        let f = f.normalized();
        assert_eq!(f.terms.len(), 1);
        assert_eq!(f.terms[0].side, Side::In);
    }
}
