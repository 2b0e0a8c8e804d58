//! Trajectories, noise descriptions, and the quadratic data matrix that
//! summarizes what a finite experiment reveals about the unknown system.
//!
//! The central object is [`InformativityMatrix`]: a symmetric `(2n+m)` matrix
//! `N` built from input/state data and a noise bound such that a system
//! `(A, B)` could have produced the data exactly when
//! `[I; [A B]^T]^T N [I; [A B]^T] >= 0`. All set-membership reasoning
//! downstream (stabilizing the whole set, fragility radii over the set) is
//! phrased against `N`.

use crate::error::Error;
use crate::linalg::{
    gen_schur_complement, in_pi_class, numeric_rank, psd_inv_sqrt, psd_sqrt, qmi_value,
    spectral_norm, symmetrize, sym_eigenvalues, SymPartition, PINV_TOL,
};
use crate::Result;
use nalgebra::DMatrix;
use serde_json::{Map, Value};
use std::path::Path;

/// Data whose residual uncertainty (largest eigenvalue of the defect matrix)
/// falls below `SINGLETON_REL_TOL * ||N||` pins down a single system to
/// double precision; routines switch to the recovered model in that regime.
pub const SINGLETON_REL_TOL: f64 = 1e-8;

/// Relative eigenvalue tolerance for non-strict consistency checks.
pub const CONSISTENCY_REL_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// JSON plumbing: matrices are nested row arrays, objects keep insertion order
// ---------------------------------------------------------------------------

/// Encode a matrix as a JSON array of rows.
pub fn mat_to_value(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|r| Value::Array((0..m.ncols()).map(|c| Value::from(m[(r, c)])).collect()))
        .collect();
    Value::Array(rows)
}

/// Decode a matrix from a JSON array of rows. Every row must have the same
/// length and all entries must be finite numbers.
pub fn mat_from_value(v: &Value, what: &str) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::InvalidArgument(format!("`{what}` must be an array of rows")))?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("`{what}` has no rows")));
    }
    let ncols = rows[0]
        .as_array()
        .ok_or_else(|| Error::InvalidArgument(format!("`{what}` rows must be arrays")))?
        .len();
    if ncols == 0 {
        return Err(Error::InvalidArgument(format!("`{what}` has empty rows")));
    }
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (r, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::InvalidArgument(format!("`{what}` rows must be arrays")))?;
        if row.len() != ncols {
            return Err(Error::InvalidArgument(format!(
                "`{what}` row {r} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (c, e) in row.iter().enumerate() {
            let x = e
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument(format!("`{what}`[{r}][{c}] not a number")))?;
            if !x.is_finite() {
                return Err(Error::InvalidArgument(format!("`{what}`[{r}][{c}] not finite")));
            }
            out[(r, c)] = x;
        }
    }
    Ok(out)
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::InvalidArgument(format!("missing field `{key}`")))
}

fn as_obj(v: &Value) -> Result<&Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::InvalidArgument("expected a JSON object".into()))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// System model
// ---------------------------------------------------------------------------

/// Known state-space pair `x(t+1) = A x(t) + B u(t) (+ w(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {}xm with m >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(SystemModel { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A + B K` for a gain `K` (`m x n`).
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!((k.nrows(), k.ncols()), (self.m(), self.n()), "gain shape");
        &self.a + &self.b * k
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("A".into(), mat_to_value(&self.a));
        obj.insert("B".into(), mat_to_value(&self.b));
        Value::Object(obj)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = as_obj(v)?;
        SystemModel::new(mat_from_value(get(obj, "A")?, "A")?, mat_from_value(get(obj, "B")?, "B")?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(&read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_value())
    }
}

/// Gain files hold a single `m x n` matrix under the key `K`.
pub fn load_gain(path: &Path) -> Result<DMatrix<f64>> {
    let v = read_json(path)?;
    mat_from_value(get(as_obj(&v)?, "K")?, "K")
}

pub fn save_gain(path: &Path, k: &DMatrix<f64>) -> Result<()> {
    let mut obj = Map::new();
    obj.insert("K".into(), mat_to_value(k));
    write_json(path, &Value::Object(obj))
}

// ---------------------------------------------------------------------------
// Noise model
// ---------------------------------------------------------------------------

/// Bound on the unknown disturbance sequence `W = [w(0) ... w(T-1)]`,
/// expressed as `[I, W] Phi [I, W]^T >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// `W W^T <= eps^2 I`; stored parameter is the aggregate bound `eps`.
    NormBound { eps: f64 },
    /// Explicit blocks `Phi11` (`n x n`), `Phi12` (`n x T`), `Phi22` (`T x T`,
    /// negative semidefinite with `ker Phi22` inside `ker Phi12`).
    General {
        phi11: DMatrix<f64>,
        phi12: DMatrix<f64>,
        phi22: DMatrix<f64>,
    },
}

impl NoiseModel {
    pub fn norm_bound(eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidArgument(format!("noise bound eps = {eps}")));
        }
        Ok(NoiseModel::NormBound { eps })
    }

    /// Check the description against concrete data dimensions.
    pub fn validate(&self, n: usize, t: usize) -> Result<()> {
        match self {
            NoiseModel::NormBound { eps } => {
                if !eps.is_finite() || *eps < 0.0 {
                    return Err(Error::InvalidArgument(format!("noise bound eps = {eps}")));
                }
            }
            NoiseModel::General { phi11, phi12, phi22 } => {
                if phi11.nrows() != n
                    || phi11.ncols() != n
                    || phi12.nrows() != n
                    || phi12.ncols() != t
                    || phi22.nrows() != t
                    || phi22.ncols() != t
                {
                    return Err(Error::Dimension(format!(
                        "noise blocks must be {n}x{n}, {n}x{t}, {t}x{t}"
                    )));
                }
                let phi = self.full(n, t)?;
                if !in_pi_class(&phi, SymPartition::new(n, t), 1e-9) {
                    return Err(Error::NotPsd(
                        "noise description is not an admissible quadratic bound \
                         (needs Phi22 <= 0, nonnegative residual, kernel inclusion)"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The full `(n+T)` square bound matrix.
    pub fn full(&self, n: usize, t: usize) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(n + t, n + t);
        match self {
            NoiseModel::NormBound { eps } => {
                for i in 0..n {
                    phi[(i, i)] = eps * eps;
                }
                for i in 0..t {
                    phi[(n + i, n + i)] = -1.0;
                }
            }
            NoiseModel::General { phi11, phi12, phi22 } => {
                phi.view_mut((0, 0), (n, n)).copy_from(phi11);
                phi.view_mut((0, n), (n, t)).copy_from(phi12);
                phi.view_mut((n, 0), (t, n)).copy_from(&phi12.transpose());
                phi.view_mut((n, n), (t, t)).copy_from(phi22);
            }
        }
        Ok(symmetrize(&phi))
    }

    /// Whether a concrete disturbance matrix satisfies the bound (non-strict,
    /// with a small relative tolerance).
    pub fn admits(&self, w: &DMatrix<f64>) -> Result<bool> {
        let (n, t) = (w.nrows(), w.ncols());
        self.validate(n, t)?;
        let phi = self.full(n, t)?;
        let val = qmi_value(&phi, SymPartition::new(n, t), &w.transpose());
        let scale = phi.amax().max(1.0);
        Ok(sym_eigenvalues(&val)[0] >= -1e-9 * scale)
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        match self {
            NoiseModel::NormBound { eps } => {
                obj.insert("kind".into(), Value::from("norm_bound"));
                obj.insert("eps".into(), Value::from(*eps));
            }
            NoiseModel::General { phi11, phi12, phi22 } => {
                obj.insert("kind".into(), Value::from("general"));
                obj.insert("Phi11".into(), mat_to_value(phi11));
                obj.insert("Phi12".into(), mat_to_value(phi12));
                obj.insert("Phi22".into(), mat_to_value(phi22));
            }
        }
        Value::Object(obj)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = as_obj(v)?;
        match get(obj, "kind")?.as_str() {
            Some("norm_bound") => {
                let eps = get(obj, "eps")?
                    .as_f64()
                    .ok_or_else(|| Error::InvalidArgument("`eps` must be a number".into()))?;
                NoiseModel::norm_bound(eps)
            }
            Some("general") => Ok(NoiseModel::General {
                phi11: mat_from_value(get(obj, "Phi11")?, "Phi11")?,
                phi12: mat_from_value(get(obj, "Phi12")?, "Phi12")?,
                phi22: mat_from_value(get(obj, "Phi22")?, "Phi22")?,
            }),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise kind {other:?} (expected \"norm_bound\" or \"general\")"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(&read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_value())
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One recorded experiment: inputs `u` (`m x T`), states `x` (`n x (T+1)`),
/// and optionally the disturbance realization `w` (`n x T`) when it is known
/// (simulation ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub u: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub w: Option<DMatrix<f64>>,
}

impl TrajectoryData {
    pub fn new(u: DMatrix<f64>, x: DMatrix<f64>, w: Option<DMatrix<f64>>) -> Result<Self> {
        let (m, t) = (u.nrows(), u.ncols());
        let n = x.nrows();
        if n == 0 || m == 0 {
            return Err(Error::Dimension(
                "state and input dimensions must both be at least 1".into(),
            ));
        }
        if t == 0 || x.ncols() != t + 1 {
            return Err(Error::Dimension(format!(
                "with {t} input samples the state record must have {} columns, got {}",
                t + 1,
                x.ncols()
            )));
        }
        if let Some(wm) = &w {
            if wm.nrows() != n || wm.ncols() != t {
                return Err(Error::Dimension(format!(
                    "disturbance record must be {n}x{t}, got {}x{}",
                    wm.nrows(),
                    wm.ncols()
                )));
            }
        }
        Ok(TrajectoryData { u, x, w })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one transition
    }

    /// Roll the dynamics forward from `x0` under the given inputs and
    /// disturbances (zeros when `w` is `None`).
    pub fn simulate(
        sys: &SystemModel,
        x0: &[f64],
        u: DMatrix<f64>,
        w: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let (n, m) = (sys.n(), sys.m());
        if x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 has {} entries, state dimension is {n}",
                x0.len()
            )));
        }
        if u.nrows() != m {
            return Err(Error::Dimension(format!(
                "inputs must have {m} rows, got {}",
                u.nrows()
            )));
        }
        let t = u.ncols();
        let mut x = DMatrix::zeros(n, t + 1);
        for (i, v) in x0.iter().enumerate() {
            x[(i, 0)] = *v;
        }
        for k in 0..t {
            let mut next = &sys.a * x.column(k) + &sys.b * u.column(k);
            if let Some(wm) = &w {
                next += wm.column(k);
            }
            x.set_column(k + 1, &next);
        }
        TrajectoryData::new(u, x, w)
    }

    /// Split into the shifted data matrices used to build `N`.
    pub fn matrices(&self) -> DataMatrices {
        let t = self.len();
        DataMatrices {
            x_minus: self.x.columns(0, t).into_owned(),
            x_plus: self.x.columns(1, t).into_owned(),
            u_minus: self.u.clone(),
        }
    }

    /// Truncate to the first `t` transitions.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-step record to {t} steps",
                self.len()
            )));
        }
        TrajectoryData::new(
            self.u.columns(0, t).into_owned(),
            self.x.columns(0, t + 1).into_owned(),
            self.w.as_ref().map(|w| w.columns(0, t).into_owned()),
        )
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("n".into(), Value::from(self.n()));
        obj.insert("m".into(), Value::from(self.m()));
        obj.insert("T".into(), Value::from(self.len()));
        obj.insert("u".into(), mat_to_value(&self.u));
        obj.insert("x".into(), mat_to_value(&self.x));
        if let Some(w) = &self.w {
            obj.insert("w".into(), mat_to_value(w));
        }
        Value::Object(obj)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = as_obj(v)?;
        let n = get(obj, "n")?.as_u64().unwrap_or(0) as usize;
        let m = get(obj, "m")?.as_u64().unwrap_or(0) as usize;
        let t = get(obj, "T")?.as_u64().unwrap_or(0) as usize;
        if n == 0 || m == 0 {
            return Err(Error::Dimension(
                "state and input dimensions must both be at least 1".into(),
            ));
        }
        let u = mat_from_value(get(obj, "u")?, "u")?;
        let x = mat_from_value(get(obj, "x")?, "x")?;
        let w = match obj.get("w") {
            Some(wv) => Some(mat_from_value(wv, "w")?),
            None => None,
        };
        if u.nrows() != m || u.ncols() != t || x.nrows() != n {
            return Err(Error::Dimension(format!(
                "declared (n={n}, m={m}, T={t}) does not match array shapes"
            )));
        }
        TrajectoryData::new(u, x, w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(&read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_value())
    }

    /// CSV export: header `t,u1..um,x1..xn`, one row per time step. The final
    /// row carries the terminal state and empty input cells.
    pub fn to_csv(&self) -> String {
        let (n, m, t) = (self.n(), self.m(), self.len());
        let mut s = String::from("t");
        for j in 1..=m {
            s.push_str(&format!(",u{j}"));
        }
        for j in 1..=n {
            s.push_str(&format!(",x{j}"));
        }
        s.push('\n');
        for k in 0..=t {
            s.push_str(&k.to_string());
            for i in 0..m {
                if k < t {
                    s.push_str(&format!(",{}", self.u[(i, k)]));
                } else {
                    s.push(',');
                }
            }
            for i in 0..n {
                s.push_str(&format!(",{}", self.x[(i, k)]));
            }
            s.push('\n');
        }
        s
    }

    /// Parse the CSV layout produced by [`TrajectoryData::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") {
            return Err(Error::InvalidArgument("CSV header must start with `t`".into()));
        }
        let m = cols.iter().filter(|c| c.starts_with('u')).count();
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        if n == 0 || m == 0 {
            return Err(Error::Dimension(
                "CSV must declare at least one input and one state column".into(),
            ));
        }
        if cols.len() != 1 + m + n {
            return Err(Error::InvalidArgument("unrecognized CSV columns".into()));
        }
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').map(str::trim).collect()).collect();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("CSV needs at least two time steps".into()));
        }
        let t = rows.len() - 1;
        let mut u = DMatrix::zeros(m, t);
        let mut x = DMatrix::zeros(n, t + 1);
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad CSV number `{s}` in {what}")))
        };
        for (k, row) in rows.iter().enumerate() {
            if row.len() != 1 + m + n {
                return Err(Error::InvalidArgument(format!(
                    "CSV row {k} has {} cells, expected {}",
                    row.len(),
                    1 + m + n
                )));
            }
            for i in 0..m {
                let cell = row[1 + i];
                if k < t {
                    u[(i, k)] = parse(cell, "input")?;
                } else if !cell.is_empty() {
                    return Err(Error::InvalidArgument(
                        "input cells on the terminal CSV row must be empty".into(),
                    ));
                }
            }
            for i in 0..n {
                x[(i, k)] = parse(row[1 + m + i], "state")?;
            }
        }
        TrajectoryData::new(u, x, None)
    }
}

// ---------------------------------------------------------------------------
// Data matrices and the quadratic data bound
// ---------------------------------------------------------------------------

/// Shifted data matrices `X- = [x(0) .. x(T-1)]`, `X+ = [x(1) .. x(T)]`,
/// `U- = [u(0) .. u(T-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub x_minus: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    pub u_minus: DMatrix<f64>,
}

impl DataMatrices {
    pub fn n(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_minus.nrows()
    }

    pub fn len(&self) -> usize {
        self.x_minus.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x_minus.ncols() == 0
    }

    /// Whether the consistent set is bounded: the stacked regressor
    /// `[X-; U-]` must have full row rank `n + m`.
    pub fn is_bounded(&self) -> bool {
        let (n, m, t) = (self.n(), self.m(), self.len());
        let mut reg = DMatrix::zeros(n + m, t);
        reg.view_mut((0, 0), (n, t)).copy_from(&self.x_minus);
        reg.view_mut((n, 0), (m, t)).copy_from(&self.u_minus);
        numeric_rank(&reg, PINV_TOL) == n + m
    }
}

/// The symmetric `(2n+m)` data matrix `N` encoding every system consistent
/// with the measurements and the noise bound.
#[derive(Debug, Clone, PartialEq)]
pub struct InformativityMatrix {
    n: usize,
    m: usize,
    mat: DMatrix<f64>,
}

impl InformativityMatrix {
    /// Assemble `N` from data and a noise bound. With `G = [[I, X+], [0, -X-],
    /// [0, -U-]]` the matrix is `N = G Phi G^T`; the norm-bound case reduces to
    /// `N = eps^2 E E^T - F F^T` with `E = [I;0;0]`, `F = [X+; -X-; -U-]`.
    pub fn build(data: &DataMatrices, noise: &NoiseModel) -> Result<Self> {
        let (n, m, t) = (data.n(), data.m(), data.len());
        if n == 0 || m == 0 || t == 0 {
            return Err(Error::Dimension("data must have n, m, T >= 1".into()));
        }
        noise.validate(n, t)?;
        let d = 2 * n + m;
        let mat = match noise {
            NoiseModel::NormBound { eps } => {
                let mut f = DMatrix::zeros(d, t);
                f.view_mut((0, 0), (n, t)).copy_from(&data.x_plus);
                f.view_mut((n, 0), (n, t)).copy_from(&(-&data.x_minus));
                f.view_mut((2 * n, 0), (m, t)).copy_from(&(-&data.u_minus));
                let mut nmat = -(&f * f.transpose());
                for i in 0..n {
                    nmat[(i, i)] += eps * eps;
                }
                nmat
            }
            NoiseModel::General { .. } => {
                let phi = noise.full(n, t)?;
                let mut g = DMatrix::zeros(d, n + t);
                g.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                g.view_mut((0, n), (n, t)).copy_from(&data.x_plus);
                g.view_mut((n, n), (n, t)).copy_from(&(-&data.x_minus));
                g.view_mut((2 * n, n), (m, t)).copy_from(&(-&data.u_minus));
                &g * phi * g.transpose()
            }
        };
        Ok(InformativityMatrix { n, m, mat: symmetrize(&mat) })
    }

    /// Build directly from a trajectory.
    pub fn from_trajectory(traj: &TrajectoryData, noise: &NoiseModel) -> Result<Self> {
        Self::build(&traj.matrices(), noise)
    }

    /// Wrap an externally supplied matrix (tests, file import).
    pub fn from_matrix(n: usize, m: usize, mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != 2 * n + m || mat.ncols() != 2 * n + m {
            return Err(Error::Dimension(format!(
                "matrix must be {0}x{0} for n={n}, m={m}",
                2 * n + m
            )));
        }
        Ok(InformativityMatrix { n, m, mat: symmetrize(&mat) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        2 * self.n + self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Partition into the leading `n` block and the trailing `n + m` block.
    pub fn partition(&self) -> SymPartition {
        SymPartition::new(self.n, self.n + self.m)
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.mat)
    }

    /// Rescale so the matrix has unit spectral norm; returns the scaled copy
    /// and the factor `||N||` that was divided out. Solver-facing routines use
    /// this to keep the feasibility problems well conditioned; multipliers
    /// found for the scaled matrix apply to the original after dividing by the
    /// same factor.
    pub fn normalized(&self) -> (Self, f64) {
        let nrm = self.norm();
        if nrm <= f64::MIN_POSITIVE {
            return (self.clone(), 1.0);
        }
        (
            InformativityMatrix { n: self.n, m: self.m, mat: &self.mat / nrm },
            nrm,
        )
    }

    /// The trailing principal block `N_rr` (rows/cols `n..2n+m`).
    pub fn trailing_block(&self) -> DMatrix<f64> {
        let r = self.n + self.m;
        self.mat.view((self.n, self.n), (r, r)).into_owned()
    }

    /// Cross block `N_1r` (rows `0..n`, cols `n..2n+m`).
    pub fn cross_block(&self) -> DMatrix<f64> {
        self.mat.view((0, self.n), (self.n, self.n + self.m)).into_owned()
    }

    /// Leading block `N_11`.
    pub fn leading_block(&self) -> DMatrix<f64> {
        self.mat.view((0, 0), (self.n, self.n)).into_owned()
    }

    /// Would the pair `(A, B)` explain the data? Non-strict membership with a
    /// relative tolerance.
    pub fn is_consistent(&self, sys: &SystemModel) -> bool {
        if sys.n() != self.n || sys.m() != self.m {
            return false;
        }
        let mut z = DMatrix::zeros(self.n + self.m, self.n);
        z.view_mut((0, 0), (self.n, self.n)).copy_from(&sys.a.transpose());
        z.view_mut((self.n, 0), (self.m, self.n)).copy_from(&sys.b.transpose());
        let val = qmi_value(&self.mat, self.partition(), &z);
        sym_eigenvalues(&val)[0] >= -CONSISTENCY_REL_TOL * self.mat.amax().max(1.0)
    }

    /// Residual-uncertainty (defect) matrix: the generalized Schur complement
    /// of the trailing block. Zero exactly when the data identify one system.
    pub fn defect_matrix(&self) -> DMatrix<f64> {
        gen_schur_complement(&self.mat, self.partition())
    }

    /// Spectral norm of the defect matrix.
    pub fn singleton_defect(&self) -> f64 {
        spectral_norm(&self.defect_matrix())
    }

    /// Numerical singleton test: defect below [`SINGLETON_REL_TOL`] relative
    /// to `||N||`.
    pub fn is_singleton(&self) -> bool {
        self.singleton_defect() <= SINGLETON_REL_TOL * self.norm()
    }

    /// Recover the unique consistent pair (center of the consistent set),
    /// `[A B] = -N_r1^T N_rr^{-1}`. Requires a bounded set.
    pub fn recover(&self) -> Result<SystemModel> {
        let center = self.center()?;
        SystemModel::new(
            center.view((0, 0), (self.n, self.n)).into_owned(),
            center.view((0, self.n), (self.n, self.m)).into_owned(),
        )
    }

    fn center(&self) -> Result<DMatrix<f64>> {
        let neg_trailing = -self.trailing_block();
        let chol = nalgebra::Cholesky::new(neg_trailing).ok_or(Error::UnboundedSet)?;
        // [A B]^T = N_rr^{-1} (-N_r1)  computed via the Cholesky factor of -N_rr
        let zc = chol.solve(&self.cross_block().transpose());
        Ok(zc.transpose())
    }

    /// Exact parameterization of the consistent set: every member is
    /// `center + D^{1/2} S R^{-1/2}` with `||S|| <= 1`, where `D` is the
    /// defect matrix and `R = -N_rr`. Requires a bounded set.
    pub fn sigma_param(&self) -> Result<SigmaParam> {
        let r = -self.trailing_block();
        let r_inv_sqrt = psd_inv_sqrt(&r, PINV_TOL).map_err(|_| Error::UnboundedSet)?;
        let defect = self.defect_matrix();
        let scale = self.norm().max(1.0);
        let l_def = psd_sqrt(&(&defect / scale), 1e-9)? * scale.sqrt();
        Ok(SigmaParam { center: self.center()?, l_def, r_inv_sqrt })
    }
}

/// Factored description of the consistent set (see
/// [`InformativityMatrix::sigma_param`]).
#[derive(Debug, Clone)]
pub struct SigmaParam {
    center: DMatrix<f64>,
    l_def: DMatrix<f64>,
    r_inv_sqrt: DMatrix<f64>,
}

impl SigmaParam {
    pub fn n(&self) -> usize {
        self.center.nrows()
    }

    pub fn m(&self) -> usize {
        self.center.ncols() - self.center.nrows()
    }

    /// The center `[A B]` as a stacked matrix.
    pub fn center(&self) -> &DMatrix<f64> {
        &self.center
    }

    pub fn center_system(&self) -> SystemModel {
        let (n, m) = (self.n(), self.m());
        SystemModel::new(
            self.center.view((0, 0), (n, n)).into_owned(),
            self.center.view((0, n), (n, m)).into_owned(),
        )
        .expect("center dimensions are valid by construction")
    }

    /// Map a contraction `S` (`n x (n+m)`, `||S|| <= 1`) to a member of the
    /// consistent set.
    pub fn member(&self, s: &DMatrix<f64>) -> Result<SystemModel> {
        let (n, m) = (self.n(), self.m());
        if s.nrows() != n || s.ncols() != n + m {
            return Err(Error::Dimension(format!(
                "S must be {n}x{}, got {}x{}",
                n + m,
                s.nrows(),
                s.ncols()
            )));
        }
        if spectral_norm(s) > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(
                "S must be a contraction (spectral norm at most 1)".into(),
            ));
        }
        let member = &self.center + &self.l_def * s * &self.r_inv_sqrt;
        SystemModel::new(
            member.view((0, 0), (n, n)).into_owned(),
            member.view((0, n), (n, m)).into_owned(),
        )
    }
}
