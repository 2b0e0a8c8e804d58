//! Solver-agnostic LMI/SDP layer: symmetric/rectangular/scalar variables,
//! affine block-matrix expressions, PSD constraints, linear objectives, and a
//! strict-feasibility margin protocol. Lowered to Clarabel's conic form.
//!
//! Two conventions are load-bearing and guarded by tests:
//! * Clarabel's PSD triangle cone expects the *upper*-triangle of a matrix in
//!   column-major order with off-diagonal entries scaled by sqrt(2). The
//!   lower-triangle order happens to coincide for 2x2 blocks and silently
//!   diverges from 3x3 on, so the regression test uses a 3x3 cone.
//! * Every solution is re-checked a posteriori: the smallest eigenvalue of
//!   each constraint at the returned point is computed directly, and an
//!   "optimal" status that violates feasibility is downgraded. Interior-point
//!   status codes alone are not trusted.

use crate::error::Error;
use crate::linalg::{min_eig, sym_eigenvalues};
use crate::Result;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

/// Margin above which a strict inequality is considered certified.
pub const EPS_STRICT: f64 = 1e-7;

/// Default feasibility tolerance for the a-posteriori constraint check.
pub const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum VarKind {
    Sym(usize),
    Rect(usize, usize),
    Scalar { lower: Option<f64> },
}

#[derive(Debug, Clone)]
struct VarDef {
    name: String,
    kind: VarKind,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: FEAS_TOL,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// One affine term of a block expression.
#[derive(Debug, Clone)]
enum Term {
    Const(DMatrix<f64>),
    /// coeff * left * V(^T) * right placed at (r0, c0)
    Lin {
        var: VarId,
        transposed: bool,
        coeff: f64,
        left: Option<DMatrix<f64>>,
        right: Option<DMatrix<f64>>,
    },
    /// scalar variable times a constant matrix placed at (r0, c0)
    ScalarMat { var: VarId, mat: DMatrix<f64> },
}

/// Affine symmetric matrix expression assembled block by block. The caller
/// places blocks so the total is symmetric; symmetry is verified when the
/// constraint is added.
#[derive(Debug, Clone)]
pub struct BlockExpr {
    dim: usize,
    terms: Vec<(usize, usize, Term)>,
}

impl BlockExpr {
    pub fn new(dim: usize) -> Self {
        BlockExpr { dim, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Add a constant block at `(r0, c0)`.
    pub fn constant(&mut self, r0: usize, c0: usize, m: &DMatrix<f64>) -> &mut Self {
        self.terms.push((r0, c0, Term::Const(m.clone())));
        self
    }

    /// Add `coeff * V` (or `coeff * V^T`) at `(r0, c0)`.
    pub fn var(&mut self, r0: usize, c0: usize, coeff: f64, v: VarId, transposed: bool) -> &mut Self {
        self.terms.push((
            r0,
            c0,
            Term::Lin { var: v, transposed, coeff, left: None, right: None },
        ));
        self
    }

    /// Add `coeff * left * V(^T) * right` at `(r0, c0)`; `None` factors are
    /// identities.
    pub fn product(
        &mut self,
        r0: usize,
        c0: usize,
        coeff: f64,
        left: Option<&DMatrix<f64>>,
        v: VarId,
        transposed: bool,
        right: Option<&DMatrix<f64>>,
    ) -> &mut Self {
        self.terms.push((
            r0,
            c0,
            Term::Lin {
                var: v,
                transposed,
                coeff,
                left: left.cloned(),
                right: right.cloned(),
            },
        ));
        self
    }

    /// Add `s * mat` for a scalar variable `s`, placed at `(r0, c0)`.
    pub fn scalar_mat(&mut self, r0: usize, c0: usize, v: VarId, mat: &DMatrix<f64>) -> &mut Self {
        self.terms.push((r0, c0, Term::ScalarMat { var: v, mat: mat.clone() }));
        self
    }
}

/// Lowered form of one PSD constraint: `constant + sum_k x_k * coeff[k] >= 0`.
struct LoweredConstraint {
    constant: DMatrix<f64>,
    /// slot index -> dense symmetric coefficient matrix (sparse in slots)
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

pub struct SdpProblem {
    vars: Vec<VarDef>,
    nslots: usize,
    constraints: Vec<BlockExpr>,
    objective: Option<(VarId, Sense)>,
    pub options: SolveOptions,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        SdpProblem {
            vars: Vec::new(),
            nslots: 0,
            constraints: Vec::new(),
            objective: None,
            options: SolveOptions::default(),
        }
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(Error::DuplicateVar(name.to_string()));
        }
        Ok(())
    }

    /// Symmetric `size x size` matrix variable. Slots are the upper triangle
    /// in column-major order (the same order the PSD cone vectorization uses).
    pub fn add_sym_var(&mut self, name: &str, size: usize) -> Result<VarId> {
        self.check_name(name)?;
        assert!(size >= 1);
        let len = size * (size + 1) / 2;
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.to_string(),
            kind: VarKind::Sym(size),
            offset: self.nslots,
        });
        self.nslots += len;
        Ok(id)
    }

    /// Rectangular `rows x cols` matrix variable, slots in row-major order.
    pub fn add_rect_var(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarId> {
        self.check_name(name)?;
        assert!(rows >= 1 && cols >= 1);
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.to_string(),
            kind: VarKind::Rect(rows, cols),
            offset: self.nslots,
        });
        self.nslots += rows * cols;
        Ok(id)
    }

    /// Scalar variable, optionally bounded below (`alpha >= 0`, `gamma >= tiny`).
    pub fn add_scalar_var(&mut self, name: &str, lower: Option<f64>) -> Result<VarId> {
        self.check_name(name)?;
        let id = VarId(self.vars.len());
        self.vars.push(VarDef {
            name: name.to_string(),
            kind: VarKind::Scalar { lower },
            offset: self.nslots,
        });
        self.nslots += 1;
        Ok(id)
    }

    /// Add the PSD constraint `expr >= 0`. The lowered expression must be
    /// symmetric; asymmetric assemblies are rejected outright since they
    /// indicate a transcription error in the calling module.
    pub fn add_psd_constraint(&mut self, expr: BlockExpr) -> Result<()> {
        let lowered = self.lower_expr(&expr)?;
        let check_sym = |m: &DMatrix<f64>| -> Result<()> {
            let asym = (m - m.transpose()).amax();
            if asym > 1e-8 * m.amax().max(1.0) {
                return Err(Error::NonSymmetric(asym));
            }
            Ok(())
        };
        check_sym(&lowered.constant)?;
        for (_, c) in &lowered.coeffs {
            check_sym(c)?;
        }
        self.constraints.push(expr);
        Ok(())
    }

    pub fn set_objective(&mut self, v: VarId, sense: Sense) {
        self.objective = Some((v, sense));
    }

    fn var_def(&self, v: VarId) -> &VarDef {
        &self.vars[v.0]
    }

    /// Expand one block expression into per-slot coefficient matrices.
    fn lower_expr(&self, expr: &BlockExpr) -> Result<LoweredConstraint> {
        let d = expr.dim;
        let mut constant = DMatrix::<f64>::zeros(d, d);
        let mut coeff_map: std::collections::BTreeMap<usize, DMatrix<f64>> =
            std::collections::BTreeMap::new();

        let place = |dst: &mut DMatrix<f64>, r0: usize, c0: usize, m: &DMatrix<f64>| -> Result<()> {
            if r0 + m.nrows() > d || c0 + m.ncols() > d {
                return Err(Error::Dimension(format!(
                    "block {}x{} at ({r0},{c0}) exceeds expression dim {d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let mut view = dst.view_mut((r0, c0), (m.nrows(), m.ncols()));
            view += m;
            Ok(())
        };

        for (r0, c0, term) in &expr.terms {
            match term {
                Term::Const(m) => place(&mut constant, *r0, *c0, m)?,
                Term::ScalarMat { var, mat } => {
                    let def = self.var_def(*var);
                    if !matches!(def.kind, VarKind::Scalar { .. }) {
                        return Err(Error::InvalidArgument(format!(
                            "`{}` is not a scalar variable",
                            def.name
                        )));
                    }
                    let slot = def.offset;
                    let entry = coeff_map
                        .entry(slot)
                        .or_insert_with(|| DMatrix::zeros(d, d));
                    place(entry, *r0, *c0, mat)?;
                }
                Term::Lin { var, transposed, coeff, left, right } => {
                    let def = self.var_def(*var);
                    let (vr, vc) = match def.kind {
                        VarKind::Sym(s) => (s, s),
                        VarKind::Rect(r, c) => (r, c),
                        VarKind::Scalar { .. } => {
                            return Err(Error::InvalidArgument(format!(
                                "scalar `{}` used where a matrix variable is required",
                                def.name
                            )))
                        }
                    };
                    // basis expansion of the variable
                    match def.kind {
                        VarKind::Sym(s) => {
                            let mut slot = def.offset;
                            for cj in 0..s {
                                for ri in 0..=cj {
                                    let mut e = DMatrix::<f64>::zeros(s, s);
                                    e[(ri, cj)] = 1.0;
                                    e[(cj, ri)] = 1.0;
                                    let contrib = apply_factors(&e, *coeff, left, right, false);
                                    let entry = coeff_map
                                        .entry(slot)
                                        .or_insert_with(|| DMatrix::zeros(d, d));
                                    place(entry, *r0, *c0, &contrib)?;
                                    slot += 1;
                                }
                            }
                        }
                        VarKind::Rect(..) => {
                            let mut slot = def.offset;
                            for ri in 0..vr {
                                for cj in 0..vc {
                                    let mut e = DMatrix::<f64>::zeros(vr, vc);
                                    e[(ri, cj)] = 1.0;
                                    let contrib =
                                        apply_factors(&e, *coeff, left, right, *transposed);
                                    let entry = coeff_map
                                        .entry(slot)
                                        .or_insert_with(|| DMatrix::zeros(d, d));
                                    place(entry, *r0, *c0, &contrib)?;
                                    slot += 1;
                                }
                            }
                        }
                        VarKind::Scalar { .. } => unreachable!(),
                    }
                }
            }
        }
        Ok(LoweredConstraint {
            constant,
            coeffs: coeff_map.into_iter().collect(),
        })
    }

    /// Scaled upper-triangle column-major vectorization matching the PSD cone.
    fn svec(m: &DMatrix<f64>) -> Vec<f64> {
        let p = m.nrows();
        let s2 = std::f64::consts::SQRT_2;
        let mut out = Vec::with_capacity(p * (p + 1) / 2);
        for c in 0..p {
            for r in 0..=c {
                out.push(if r == c { m[(r, c)] } else { m[(r, c)] * s2 });
            }
        }
        out
    }

    /// Solve the assembled problem.
    pub fn solve(&self) -> Result<SdpSolution> {
        let nv = self.nslots;
        // nonnegativity rows from scalar bounds: lower bounds as -x <= -lb
        let mut nn_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for v in &self.vars {
            if let VarKind::Scalar { lower: Some(lb) } = v.kind {
                nn_rows.push((vec![(v.offset, -1.0)], -lb));
            }
        }

        let lowered: Vec<LoweredConstraint> = self
            .constraints
            .iter()
            .map(|e| self.lower_expr(e))
            .collect::<Result<_>>()?;

        let total_rows: usize = nn_rows.len()
            + lowered
                .iter()
                .map(|l| {
                    let p = l.constant.nrows();
                    p * (p + 1) / 2
                })
                .sum::<usize>();

        if total_rows == 0 {
            // nothing to constrain: the zero point is optimal for our
            // single-variable objectives
            return Ok(SdpSolution {
                status: SdpStatus::Optimal,
                x: vec![0.0; nv],
                objective: 0.0,
                slacks: vec![],
                problem_vars: self.vars.clone(),
            });
        }

        // dense row assembly (desk-scale problems; largest cone here is ~60)
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total_rows);
        let mut b: Vec<f64> = Vec::with_capacity(total_rows);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !nn_rows.is_empty() {
            for (entries, rhs) in &nn_rows {
                let mut row = vec![0.0; nv];
                for (j, c) in entries {
                    row[*j] += c;
                }
                rows.push(row);
                b.push(*rhs);
            }
            cones.push(SupportedConeT::NonnegativeConeT(nn_rows.len()));
        }

        for l in &lowered {
            let p = l.constant.nrows();
            let sd = p * (p + 1) / 2;
            let base = rows.len();
            for _ in 0..sd {
                rows.push(vec![0.0; nv]);
            }
            let bv = Self::svec(&l.constant);
            b.extend_from_slice(&bv);
            for (slot, cmat) in &l.coeffs {
                let cv = Self::svec(cmat);
                for (k, val) in cv.iter().enumerate() {
                    rows[base + k][*slot] = -val;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(p));
        }

        // CSC assembly column by column
        let nrows = rows.len();
        let mut colptr = Vec::with_capacity(nv + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0usize);
        for j in 0..nv {
            for (i, row) in rows.iter().enumerate() {
                let v = row[j];
                if v != 0.0 {
                    rowval.push(i);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(nrows, nv, colptr, rowval, nzval);
        let p = CscMatrix::<f64>::zeros((nv, nv));

        let mut q = vec![0.0; nv];
        if let Some((v, sense)) = self.objective {
            let def = self.var_def(v);
            if !matches!(def.kind, VarKind::Scalar { .. }) {
                return Err(Error::InvalidArgument(
                    "objective must be a scalar variable".into(),
                ));
            }
            q[def.offset] = match sense {
                Sense::Minimize => 1.0,
                Sense::Maximize => -1.0,
            };
        }

        let settings = DefaultSettings {
            verbose: self.options.verbose,
            max_iter: self.options.max_iter,
            ..Default::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();

        let x: Vec<f64> = solver.solution.x.clone();
        let raw = solver.solution.status;
        let mut status = match raw {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SdpStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SdpStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SdpStatus::Unbounded
            }
            _ => SdpStatus::NumericalFailure,
        };

        // a-posteriori feasibility: evaluate each constraint at the returned
        // point and record its smallest eigenvalue
        let mut slacks = Vec::with_capacity(lowered.len());
        if status == SdpStatus::Optimal {
            for l in &lowered {
                let mut m = l.constant.clone();
                for (slot, cmat) in &l.coeffs {
                    m += cmat * x[*slot];
                }
                let scale = m.amax().max(1.0);
                let me = sym_eigenvalues(&m)[0];
                slacks.push(me);
                if me < -self.options.feas_tol * scale.max(1.0) * 10.0 {
                    status = SdpStatus::NumericalFailure;
                }
            }
        }

        let objective = match self.objective {
            Some((v, _)) => x[self.var_def(v).offset],
            None => 0.0,
        };

        Ok(SdpSolution {
            status,
            x,
            objective,
            slacks,
            problem_vars: self.vars.clone(),
        })
    }

    /// Strict-feasibility margin protocol: maximize `t` subject to every
    /// selected constraint shifted to `expr - t I >= 0`, with `t <= 1` to keep
    /// the problem bounded. Returns the solution of the shifted problem and
    /// the achieved margin; strictness holds when the margin clears
    /// [`EPS_STRICT`].
    pub fn strict_feasible(&self, which: &[usize]) -> Result<(SdpSolution, f64)> {
        let mut shifted = SdpProblem {
            vars: self.vars.clone(),
            nslots: self.nslots,
            constraints: Vec::new(),
            objective: None,
            options: self.options.clone(),
        };
        let tname = "__margin";
        let t = shifted.add_scalar_var(tname, None)?;
        for (i, c) in self.constraints.iter().enumerate() {
            let mut expr = c.clone();
            if which.contains(&i) {
                let neg_i = -DMatrix::<f64>::identity(expr.dim, expr.dim);
                expr.scalar_mat(0, 0, t, &neg_i);
            }
            shifted.constraints.push(expr);
        }
        // t <= 1 encoded as the PSD cone [1 - t] >= 0 on a 1x1 block
        let mut cap = BlockExpr::new(1);
        cap.constant(0, 0, &DMatrix::from_element(1, 1, 1.0));
        cap.scalar_mat(0, 0, t, &DMatrix::from_element(1, 1, -1.0));
        shifted.constraints.push(cap);
        shifted.set_objective(t, Sense::Maximize);
        let sol = shifted.solve()?;
        let margin = match sol.status {
            SdpStatus::Optimal => sol.objective,
            SdpStatus::Infeasible => f64::NEG_INFINITY,
            _ => {
                return Err(Error::Solver(format!(
                    "margin solve ended with {:?}",
                    sol.status
                )))
            }
        };
        Ok((sol, margin))
    }

    /// Text dump of variables and constraints for debugging.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "variables ({} slots):", self.nslots);
        for v in &self.vars {
            let kind = match v.kind {
                VarKind::Sym(n) => format!("sym {n}x{n}"),
                VarKind::Rect(r, c) => format!("rect {r}x{c}"),
                VarKind::Scalar { lower } => format!("scalar (lower {lower:?})"),
            };
            let _ = writeln!(s, "  {} : {} @ slot {}", v.name, kind, v.offset);
        }
        let _ = writeln!(s, "constraints:");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(s, "  [{i}] psd block {}x{}, {} terms", c.dim, c.dim, c.terms.len());
        }
        if let Some((v, sense)) = self.objective {
            let _ = writeln!(s, "objective: {:?} {}", sense, self.var_def(v).name);
        }
        s
    }
}

fn apply_factors(
    e: &DMatrix<f64>,
    coeff: f64,
    left: &Option<DMatrix<f64>>,
    right: &Option<DMatrix<f64>>,
    transposed: bool,
) -> DMatrix<f64> {
    let base = if transposed { e.transpose() } else { e.clone() };
    let with_left = match left {
        Some(l) => l * base,
        None => base,
    };
    let full = match right {
        Some(r) => with_left * r,
        None => with_left,
    };
    full * coeff
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// smallest eigenvalue of each PSD constraint at the returned point
    pub slacks: Vec<f64>,
    problem_vars: Vec<VarDef>,
}

impl SdpSolution {
    /// Value of a symmetric matrix variable.
    pub fn sym(&self, v: VarId) -> DMatrix<f64> {
        let def = &self.problem_vars[v.0];
        let VarKind::Sym(s) = def.kind else {
            panic!("`{}` is not a symmetric variable", def.name)
        };
        let mut m = DMatrix::zeros(s, s);
        let mut slot = def.offset;
        for c in 0..s {
            for r in 0..=c {
                m[(r, c)] = self.x[slot];
                m[(c, r)] = self.x[slot];
                slot += 1;
            }
        }
        m
    }

    /// Value of a rectangular matrix variable.
    pub fn rect(&self, v: VarId) -> DMatrix<f64> {
        let def = &self.problem_vars[v.0];
        let VarKind::Rect(rows, cols) = def.kind else {
            panic!("`{}` is not a rectangular variable", def.name)
        };
        let mut m = DMatrix::zeros(rows, cols);
        let mut slot = def.offset;
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.x[slot];
                slot += 1;
            }
        }
        m
    }

    /// Value of a scalar variable.
    pub fn scalar(&self, v: VarId) -> f64 {
        let def = &self.problem_vars[v.0];
        assert!(
            matches!(def.kind, VarKind::Scalar { .. }),
            "`{}` is not a scalar variable",
            def.name
        );
        self.x[def.offset]
    }

    /// Smallest constraint slack (worst min-eigenvalue over all constraints).
    pub fn worst_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Check that a symmetric matrix is positive definite with margin, used by
/// callers validating certificates outside the solver.
pub fn is_pd(m: &DMatrix<f64>, margin: f64) -> bool {
    matches!(min_eig(m), Ok(me) if me > margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn trivial_psd_constraints() {
        // constant I >= 0: feasible no-op
        let mut p = SdpProblem::new();
        let mut e = BlockExpr::new(2);
        e.constant(0, 0, &DMatrix::identity(2, 2));
        p.add_psd_constraint(e).unwrap();
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);

        // constant -I >= 0: infeasible
        let mut p = SdpProblem::new();
        let mut e = BlockExpr::new(2);
        e.constant(0, 0, &(-DMatrix::<f64>::identity(2, 2)));
        p.add_psd_constraint(e).unwrap();
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn empty_problem_is_trivially_optimal() {
        let p = SdpProblem::new();
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn largest_eigenvalue_via_scalar_shift() {
        // min x s.t. x I - J >= 0 with J the all-ones 2x2: x* = 2
        let mut p = SdpProblem::new();
        let x = p.add_scalar_var("x", None).unwrap();
        let mut e = BlockExpr::new(2);
        e.constant(0, 0, &(-DMatrix::<f64>::from_element(2, 2, 1.0)));
        e.scalar_mat(0, 0, x, &DMatrix::identity(2, 2));
        p.add_psd_constraint(e).unwrap();
        p.set_objective(x, Sense::Minimize);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-6);
    }

    /// Pins the PSD-cone vectorization order. With the correct upper-triangle
    /// column-major convention the optimum is x* = -1; with the lower-triangle
    /// order the very same data declares the problem infeasible. A 2x2 cone
    /// cannot distinguish the two (the orders coincide there), hence 3x3.
    #[test]
    fn svec_order_discriminator_3x3() {
        let mut p = SdpProblem::new();
        let x = p.add_scalar_var("x", None).unwrap();
        let mut e = BlockExpr::new(3);
        e.constant(
            0,
            0,
            &dmatrix![1.0, 0.0, 0.0; 0.0, 2.0, 0.0; 0.0, 0.0, 1.0],
        );
        e.scalar_mat(
            0,
            0,
            x,
            &dmatrix![0.0, 0.0, 1.0; 0.0, 0.0, 0.0; 1.0, 0.0, 0.0],
        );
        p.add_psd_constraint(e).unwrap();
        p.set_objective(x, Sense::Minimize);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -1.0, epsilon = 1e-6);
    }

    #[test]
    fn sym_var_minimize_trace_like_objective() {
        // P >= I, minimize a scalar bound u with u I - P >= 0 gives u = 1, P = I
        let mut p = SdpProblem::new();
        let pv = p.add_sym_var("P", 2).unwrap();
        let u = p.add_scalar_var("u", None).unwrap();
        let mut lower = BlockExpr::new(2);
        lower.var(0, 0, 1.0, pv, false);
        lower.constant(0, 0, &(-DMatrix::<f64>::identity(2, 2)));
        p.add_psd_constraint(lower).unwrap();
        let mut upper = BlockExpr::new(2);
        upper.scalar_mat(0, 0, u, &DMatrix::identity(2, 2));
        upper.var(0, 0, -1.0, pv, false);
        p.add_psd_constraint(upper).unwrap();
        p.set_objective(u, Sense::Minimize);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.sym(pv), DMatrix::identity(2, 2), epsilon = 1e-5);
    }

    #[test]
    fn scalar_lower_bound_is_enforced() {
        // maximize -a ... i.e. minimize a with a >= 0 and no other constraint
        let mut p = SdpProblem::new();
        let a = p.add_scalar_var("alpha", Some(0.0)).unwrap();
        p.set_objective(a, Sense::Minimize);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.scalar(a) >= -1e-9);
    }

    #[test]
    fn asymmetric_expression_rejected() {
        let mut p = SdpProblem::new();
        let l = p.add_rect_var("L", 1, 2).unwrap();
        let mut e = BlockExpr::new(3);
        // L placed off-diagonal without its transpose partner
        e.var(1, 0, 1.0, l, false);
        e.constant(0, 0, &DMatrix::identity(3, 3));
        assert!(matches!(
            p.add_psd_constraint(e),
            Err(Error::NonSymmetric(_))
        ));
    }

    #[test]
    fn rect_var_with_transpose_partner_accepted() {
        // [[I, L^T], [L, I]] >= 0 with L free: feasible (L = 0 works)
        let mut p = SdpProblem::new();
        let l = p.add_rect_var("L", 1, 2).unwrap();
        let mut e = BlockExpr::new(3);
        e.constant(0, 0, &DMatrix::identity(3, 3));
        e.var(2, 0, 1.0, l, false);
        e.var(0, 2, 1.0, l, true);
        p.add_psd_constraint(e).unwrap();
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
    }

    #[test]
    fn unbounded_detected() {
        // minimize x with I - x I >= 0, i.e. only an upper bound: x -> -inf
        let mut p = SdpProblem::new();
        let x = p.add_scalar_var("x", None).unwrap();
        let mut e = BlockExpr::new(1);
        e.constant(0, 0, &DMatrix::from_element(1, 1, 1.0));
        e.scalar_mat(0, 0, x, &DMatrix::from_element(1, 1, -1.0));
        p.add_psd_constraint(e).unwrap();
        p.set_objective(x, Sense::Minimize);
        let sol = p.solve().unwrap();
        assert_eq!(sol.status, SdpStatus::Unbounded);
    }

    #[test]
    fn margin_protocol_on_strict_problem() {
        // I >= 0 is strictly feasible with margin exactly 1 (capped at 1)
        let mut p = SdpProblem::new();
        let mut e = BlockExpr::new(2);
        e.constant(0, 0, &DMatrix::identity(2, 2));
        p.add_psd_constraint(e).unwrap();
        let (_, margin) = p.strict_feasible(&[0]).unwrap();
        assert_abs_diff_eq!(margin, 1.0, epsilon = 1e-6);

        // 0 >= 0 holds but not strictly: margin 0
        let mut p = SdpProblem::new();
        let mut e = BlockExpr::new(2);
        e.constant(0, 0, &DMatrix::zeros(2, 2));
        p.add_psd_constraint(e).unwrap();
        let (_, margin) = p.strict_feasible(&[0]).unwrap();
        assert!(margin.abs() <= 1e-6, "margin {margin}");
    }

    #[test]
    fn determinism_two_solves_agree() {
        let build = || {
            let mut p = SdpProblem::new();
            let x = p.add_scalar_var("x", None).unwrap();
            let mut e = BlockExpr::new(3);
            e.constant(0, 0, &dmatrix![2.0, 0.3, 0.0; 0.3, 1.0, -0.2; 0.0, -0.2, 1.5]);
            e.scalar_mat(0, 0, x, &(-DMatrix::<f64>::identity(3, 3)));
            p.add_psd_constraint(e).unwrap();
            p.set_objective(x, Sense::Maximize);
            p
        };
        let s1 = build().solve().unwrap();
        let s2 = build().solve().unwrap();
        assert!((s1.objective - s2.objective).abs() < 1e-9);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = SdpProblem::new();
        p.add_sym_var("P", 2).unwrap();
        assert!(matches!(
            p.add_scalar_var("P", None),
            Err(Error::DuplicateVar(_))
        ));
    }
}
