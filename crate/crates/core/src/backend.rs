//! Clarabel interior-point backend.
//!
//! Flow series are handed to the solver as cumulative counts, `N_i = q_1 + ... + q_i`, so that
//! rows summing a series over many steps become a couple of entries. Nonnegative flows turn
//! into `N_i - N_{i-1} >= 0`.

use std::collections::{BTreeMap, HashMap};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::compat::{AffineExpr, VarKind};
use crate::error::{Error, Result};
use crate::program::{ConicBackend, ConicProgram, SolveResult, SolveStatus, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClarabelBackend {
    /// Solve over cumulative counts instead of per-step flows.
    pub cumulative: bool,
    pub verbose: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            cumulative: true,
            verbose: false,
        }
    }
}

/// Change of variables `x = M z`, with `M` bidiagonal on flow series and the identity elsewhere.
struct Lowering {
    /// For each original column, the solver column and, for series after their first step,
    /// the solver column of the previous step.
    map: Vec<(usize, Option<usize>)>,
}

impl Lowering {
    fn new(prog: &ConicProgram, cumulative: bool) -> Self {
        let n = prog.vars.len();
        let mut map: Vec<(usize, Option<usize>)> = (0..n).map(|c| (c, None)).collect();
        if cumulative {
            let mut by_series: HashMap<(VarKind, u32, usize), usize> = HashMap::new();
            for (c, v) in prog.vars.iter() {
                by_series.insert((v.kind, v.link.0, v.step), c);
            }
            for (c, v) in prog.vars.iter() {
                if v.kind == VarKind::Slack || v.step <= 1 {
                    continue;
                }
                if let Some(&prev) = by_series.get(&(v.kind, v.link.0, v.step - 1)) {
                    map[c].1 = Some(prev);
                }
            }
        }
        Self { map }
    }

    fn expr(&self, e: &AffineExpr) -> AffineExpr {
        let mut terms = Vec::with_capacity(2 * e.terms.len());
        for &(c, v) in &e.terms {
            let (z, prev) = self.map[c];
            terms.push((z, v));
            if let Some(p) = prev {
                terms.push((p, -v));
            }
        }
        let mut out = AffineExpr::new(terms, e.constant);
        out.terms.retain(|t| t.1.abs() > 1e-14 * (1.0 + t.1.abs()));
        out
    }

    fn recover(&self, z: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|&(c, prev)| z[c] - prev.map_or(0.0, |p| z[p]))
            .collect()
    }
}

#[derive(Default)]
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    /// Appends `a . z + s = rhs`.
    fn push(&mut self, e: &AffineExpr, scale: f64, rhs: f64) {
        let r = self.b.len();
        for &(c, v) in &e.terms {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(scale * v);
        }
        self.b.push(rhs);
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram, tol: &Tolerances) -> Result<SolveResult> {
        let n = prog.vars.len();
        if n == 0 {
            return Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective: 0.0,
                x: Vec::new(),
                residuals: prog.residuals(&[]),
                iterations: 0,
            });
        }
        let low = Lowering::new(prog, self.cumulative);

        let objective = low.expr(&AffineExpr::new(
            prog.objective.iter().copied().enumerate().collect(),
            0.0,
        ));
        let mut q = vec![0.0; n];
        for &(c, v) in &objective.terms {
            q[c] += v;
        }
        let mut p_entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for term in &prog.quadratic {
            let e = low.expr(&term.expr);
            for &(i, a) in &e.terms {
                q[i] += 2.0 * term.weight * e.constant * a;
                for &(j, b) in &e.terms {
                    if i <= j {
                        *p_entries.entry((i, j)).or_default() += 2.0 * term.weight * a * b;
                    }
                }
            }
        }
        let (pi, (pj, pv)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
            p_entries.iter().map(|(&(i, j), &v)| (i, (j, v))).unzip();
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

        let mut t = Triplets::default();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for row in &prog.equalities {
            let e = low.expr(&row.expr);
            t.push(&e, 1.0, -e.constant);
        }
        if !prog.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(prog.equalities.len()));
        }
        let mut nonneg = 0;
        for row in &prog.inequalities {
            let e = low.expr(&row.expr);
            if e.terms.is_empty() {
                if e.constant > tol.report {
                    return Ok(infeasible(prog, n));
                }
                continue;
            }
            t.push(&e, 1.0, -e.constant);
            nonneg += 1;
        }
        for (c, &nn) in prog.nonnegative.iter().enumerate() {
            if nn {
                let e = low.expr(&AffineExpr::new(vec![(c, -1.0)], 0.0));
                t.push(&e, 1.0, 0.0);
                nonneg += 1;
            }
        }
        if nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg));
        }
        for cone in &prog.cones {
            let mean = low.expr(&cone.mean_expr());
            t.push(&mean, 1.0, -mean.constant);
            let factors = cone.factor_rows();
            for f in &factors {
                let e = low.expr(f);
                t.push(&e, -cone.kappa, 0.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + factors.len()));
        }
        let m = t.b.len();
        let a = CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals);

        let settings = DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .tol_feas(tol.solver)
            .tol_gap_abs(tol.solver)
            .tol_gap_rel(tol.solver)
            .max_iter(tol.max_iter)
            .build()
            .map_err(|e| Error::Solver(e.to_string()))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &t.b, &cones, settings)
            .map_err(|e| Error::Solver(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let x = low.recover(&sol.x);
        let residuals = prog.residuals(&x);
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved if residuals.max() <= tol.report => {
                SolveStatus::Optimal
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };
        Ok(SolveResult {
            status,
            objective: prog.objective_value(&x),
            x,
            residuals,
            iterations: sol.iterations,
        })
    }
}

fn infeasible(prog: &ConicProgram, n: usize) -> SolveResult {
    let x = vec![0.0; n];
    SolveResult {
        status: SolveStatus::Infeasible,
        objective: f64::NAN,
        residuals: prog.residuals(&x),
        x,
        iterations: 0,
    }
}
