//! Set-wide stabilization from data: decide whether one state feedback can
//! stabilize *every* system consistent with the measurements, produce such a
//! gain with a certificate, and parameterize the complete family of certified
//! gains.
//!
//! Two designs are offered. The full design solves one joint feasibility
//! problem in `(P, L, alpha)` and extracts `K = L P^{-1}`. The reduced design
//! works in `(P, alpha)` only, derives the quadratic gain condition by block
//! elimination, and reads the gain off the eliminated system; it is the route
//! that also yields the exact gain-set parameterization.
//!
//! Data that pins the system down to working precision (defect below the
//! singleton threshold) makes the set-wide multiplier problems numerically
//! meaningless: the feasible window collapses below what double precision can
//! represent. Such data is routed to an equivalent single-model design on the
//! recovered pair, and the certificate records that provenance in its source
//! tag.

use crate::data::{InformativityMatrix, SystemModel};
use crate::data::{mat_from_value, mat_to_value, read_json, write_json};
use crate::error::Error;
use crate::linalg::{
    min_eig, psd_inv_sqrt, psd_sqrt, qmi_member, spectral_norm, symmetrize, sym_eigenvalues,
    SymPartition,
};
use crate::sdp::{BlockExpr, SdpProblem, SdpStatus, SolveOptions, EPS_STRICT};
use crate::Result;
use nalgebra::DMatrix;
use serde_json::{Map, Value};
use std::path::Path;

/// How a certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertSource {
    /// Joint `(P, L, alpha)` feasibility problem.
    FullLmi,
    /// `(P, alpha)` problem with the gain recovered by block elimination.
    ReducedLmi,
    /// Supplied by the caller, validated but not designed here.
    UserSupplied,
    /// Data identified a single system; certified on the recovered model.
    SingletonModel,
}

impl CertSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertSource::FullLmi => "full_lmi",
            CertSource::ReducedLmi => "reduced_lmi",
            CertSource::UserSupplied => "user_supplied",
            CertSource::SingletonModel => "singleton_model",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full_lmi" => CertSource::FullLmi,
            "reduced_lmi" => CertSource::ReducedLmi,
            "user_supplied" => CertSource::UserSupplied,
            "singleton_model" => CertSource::SingletonModel,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown certificate source `{other}`"
                )))
            }
        })
    }
}

/// Stabilization certificate: a common Lyapunov-like matrix `P` (normalized
/// to unit largest eigenvalue), the data multiplier `alpha` (in the scale of
/// the original data matrix), the certified gain, and the smallest eigenvalue
/// margin the certificate achieves.
#[derive(Debug, Clone)]
pub struct GainCertificate {
    pub p: DMatrix<f64>,
    pub alpha: f64,
    pub k: DMatrix<f64>,
    pub margin: f64,
    pub source: CertSource,
}

impl GainCertificate {
    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("P".into(), mat_to_value(&self.p));
        obj.insert("alpha".into(), Value::from(self.alpha));
        obj.insert("K".into(), mat_to_value(&self.k));
        obj.insert("margin".into(), Value::from(self.margin));
        obj.insert("source".into(), Value::from(self.source.as_str()));
        Value::Object(obj)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("certificate must be a JSON object".into()))?;
        let field = |k: &str| {
            obj.get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("missing field `{k}`")))
        };
        Ok(GainCertificate {
            p: mat_from_value(field("P")?, "P")?,
            alpha: field("alpha")?
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument("`alpha` must be a number".into()))?,
            k: mat_from_value(field("K")?, "K")?,
            margin: field("margin")?
                .as_f64()
                .ok_or_else(|| Error::InvalidArgument("`margin` must be a number".into()))?,
            source: CertSource::parse(
                field("source")?
                    .as_str()
                    .ok_or_else(|| Error::InvalidArgument("`source` must be a string".into()))?,
            )?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(&read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_value())
    }
}

// ---------------------------------------------------------------------------
// Certificate matrices (reduced route)
// ---------------------------------------------------------------------------

/// The trio derived from a `(P, alpha)` pair: the big feasibility block
/// `Gamma`, the eliminated block `Theta`, and the gain-condition matrix `M`.
/// A gain is certified by `(P, alpha)` exactly when
/// `[I, K] M [I, K]^T > 0`.
#[derive(Debug, Clone)]
pub struct CertificateMatrices {
    pub gamma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub m: DMatrix<f64>,
    n: usize,
    m_dim: usize,
}

impl CertificateMatrices {
    pub fn new(nmat: &InformativityMatrix, p: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        let (n, m) = (nmat.n(), nmat.m());
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Dimension(format!(
                "P must be {n}x{n}, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
        }
        let nm = nmat.matrix();

        let mut gamma = -alpha * nm;
        let g11 = gamma.view((0, 0), (n, n)) + p;
        gamma.view_mut((0, 0), (n, n)).copy_from(&g11);

        let mut theta = -alpha * nm.view((0, 0), (2 * n, 2 * n)).into_owned();
        let t11 = theta.view((0, 0), (n, n)) + p;
        let t22 = theta.view((n, n), (n, n)) - p;
        theta.view_mut((0, 0), (n, n)).copy_from(&t11);
        theta.view_mut((n, n), (n, n)).copy_from(&t22);
        let theta = symmetrize(&theta);

        // eliminate the first 2n rows/columns of the gain condition:
        // M = blkdiag(-alpha N_33, -P) - T Theta^+ T^T with
        // T = [[alpha N_31, alpha N_32], [0, P]]
        let mut t_fac = DMatrix::zeros(m + n, 2 * n);
        t_fac
            .view_mut((0, 0), (m, 2 * n))
            .copy_from(&(alpha * nm.view((2 * n, 0), (m, 2 * n))));
        t_fac.view_mut((m, n), (n, n)).copy_from(p);
        let theta_pinv = crate::linalg::pinv(&theta, crate::linalg::PINV_TOL);
        let mut head = DMatrix::zeros(m + n, m + n);
        head.view_mut((0, 0), (m, m))
            .copy_from(&(-alpha * nm.view((2 * n, 2 * n), (m, m))));
        head.view_mut((m, m), (n, n)).copy_from(&(-p));
        let mmat = symmetrize(&(head - &t_fac * theta_pinv * t_fac.transpose()));

        Ok(CertificateMatrices {
            gamma: symmetrize(&gamma),
            theta,
            m: mmat,
            n,
            m_dim: m,
        })
    }

    pub fn m12(&self) -> DMatrix<f64> {
        self.m.view((0, self.m_dim), (self.m_dim, self.n)).into_owned()
    }

    pub fn m22(&self) -> DMatrix<f64> {
        self.m.view((self.m_dim, self.m_dim), (self.n, self.n)).into_owned()
    }

    /// Central certified gain `-M12 M22^{-1}`; requires `M22` negative
    /// definite, which holds whenever `Theta` is positive definite.
    pub fn central_gain(&self) -> Result<DMatrix<f64>> {
        let neg_m22 = -self.m22();
        let chol = nalgebra::Cholesky::new(neg_m22).ok_or_else(|| {
            Error::NotPsd("gain-condition block M22 is not negative definite".into())
        })?;
        // K = -M12 M22^{-1} = M12 (-M22)^{-1}
        Ok(chol.solve(&self.m12().transpose()).transpose())
    }

    /// Whether the pair behind these matrices is a usable certificate:
    /// `Gamma` and `Theta` positive semidefinite down to `tol * scale`.
    /// Pass a small negative `tol` to accept boundary pairs — optimal
    /// certificates from the radius problems sit exactly on the PSD boundary.
    pub fn is_valid(&self, tol: f64) -> bool {
        let ok = |m: &DMatrix<f64>| {
            let scale = m.amax().max(1.0);
            matches!(min_eig(m), Ok(me) if me > tol * scale)
        };
        ok(&self.gamma) && ok(&self.theta)
    }
}

// ---------------------------------------------------------------------------
// Gain-set membership and parameterization
// ---------------------------------------------------------------------------

fn normalized_pair(
    nmat: &InformativityMatrix,
    alpha: f64,
) -> (InformativityMatrix, f64) {
    let (nhat, factor) = nmat.normalized();
    (nhat, alpha * factor)
}

/// Does `(P, alpha)` certify the specific gain `K`? Fails with an error when
/// the pair is not a certificate at all (so a `false` answer always means
/// "valid certificate, gain outside its set").
pub fn gain_in_set(
    nmat: &InformativityMatrix,
    p: &DMatrix<f64>,
    alpha: f64,
    k: &DMatrix<f64>,
) -> Result<bool> {
    let (n, m) = (nmat.n(), nmat.m());
    if k.nrows() != m || k.ncols() != n {
        return Err(Error::Dimension(format!(
            "gain must be {m}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let (nhat, alpha_hat) = normalized_pair(nmat, alpha);
    let cm = CertificateMatrices::new(&nhat, p, alpha_hat)?;
    if !cm.is_valid(-1e-9) {
        return Err(Error::InvalidArgument(
            "(P, alpha) is not a valid certificate pair for this data".into(),
        ));
    }
    Ok(qmi_member(
        &cm.m,
        SymPartition::new(m, n),
        &k.transpose(),
        true,
        1e-12,
    ))
}

/// Exact parameterization of every gain certified by a `(P, alpha)` pair:
/// `K(S) = center + left * S * right` over strict contractions `S` (`m x n`).
#[derive(Debug, Clone)]
pub struct GainSetParam {
    center: DMatrix<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    left_inv: DMatrix<f64>,
    right_inv: DMatrix<f64>,
}

impl GainSetParam {
    pub fn center(&self) -> &DMatrix<f64> {
        &self.center
    }

    /// Gain for a strict contraction `S`.
    pub fn gain(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, n) = (self.center.nrows(), self.center.ncols());
        if s.nrows() != m || s.ncols() != n {
            return Err(Error::Dimension(format!(
                "S must be {m}x{n}, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        if spectral_norm(s) >= 1.0 {
            return Err(Error::InvalidArgument(
                "S must be a strict contraction (spectral norm below 1)".into(),
            ));
        }
        Ok(&self.center + &self.left * s * &self.right)
    }

    /// Recover the contraction that produces a given gain.
    pub fn invert(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.left_inv * (k - &self.center) * &self.right_inv
    }
}

/// Build the gain-set parameterization for a certificate pair.
pub fn parameterize_gains(
    nmat: &InformativityMatrix,
    p: &DMatrix<f64>,
    alpha: f64,
) -> Result<GainSetParam> {
    let (nhat, alpha_hat) = normalized_pair(nmat, alpha);
    let cm = CertificateMatrices::new(&nhat, p, alpha_hat)?;
    if !cm.is_valid(-1e-9) {
        return Err(Error::InvalidArgument(
            "(P, alpha) is not a valid certificate pair for this data".into(),
        ));
    }
    let center = cm.central_gain()?;
    let neg_m22 = -cm.m22();
    // Schur complement of M22 in M: the "radius" of the gain set
    let m12 = cm.m12();
    let neg_m22_chol = nalgebra::Cholesky::new(neg_m22.clone())
        .ok_or_else(|| Error::NotPsd("gain-condition block M22 is not negative definite".into()))?;
    let m11 = cm.m.view((0, 0), (center.nrows(), center.nrows())).into_owned();
    let radius = symmetrize(&(m11 + &m12 * neg_m22_chol.solve(&m12.transpose())));
    let scale = radius.amax().max(neg_m22.amax()).max(1e-300);
    let left = psd_sqrt(&(&radius / scale), 1e-9)? * scale.sqrt();
    let left_inv = psd_inv_sqrt(&(&radius / scale), 1e-12)? / scale.sqrt();
    let right_inv = psd_sqrt(&(&neg_m22 / scale), 1e-9)? * scale.sqrt();
    let right = psd_inv_sqrt(&(&neg_m22 / scale), 1e-12)? / scale.sqrt();
    Ok(GainSetParam { center, left, right, left_inv, right_inv })
}

// ---------------------------------------------------------------------------
// Designs
// ---------------------------------------------------------------------------

/// Rescale a designed `(P, L, alpha, margin)` tuple so the stored `P` has
/// unit largest eigenvalue. Everything in the certificate is jointly
/// homogeneous in `(P, L, alpha)`, so the gain is untouched and the margin
/// scales by the same factor (which is at least 1 thanks to the `P <= I`
/// normalization constraint in the designs).
fn unit_scale(p: &mut DMatrix<f64>, l: &mut DMatrix<f64>, alpha: &mut f64) {
    let lmax = sym_eigenvalues(&symmetrize(p))
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let c = 1.0 / lmax;
    *p = symmetrize(&(&*p * c));
    *l *= c;
    *alpha *= c;
}

fn gain_from(p: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(p.clone())
        .ok_or_else(|| Error::NotPsd("designed P is not positive definite".into()))?;
    // K = L P^{-1}  via  P K^T = L^T
    Ok(chol.solve(&l.transpose()).transpose())
}

/// Margin-maximizing stabilizing design for one known pair:
/// `[[P, (A P + B L)^T], [A P + B L, P]] >= t I`, `P <= I`, maximize `t`;
/// the gain is `K = L P^{-1}`.
pub fn design_on_model(
    sys: &SystemModel,
    options: &SolveOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let (n, m) = (sys.n(), sys.m());
    let mut prob = SdpProblem::new();
    prob.options = options.clone();
    let pv = prob.add_sym_var("P", n)?;
    let lv = prob.add_rect_var("L", m, n)?;
    let at = sys.a.transpose();
    let bt = sys.b.transpose();

    let mut lmi = BlockExpr::new(2 * n);
    lmi.var(0, 0, 1.0, pv, false);
    lmi.var(n, n, 1.0, pv, false);
    lmi.product(0, n, 1.0, None, pv, false, Some(&at));
    lmi.product(0, n, 1.0, None, lv, true, Some(&bt));
    lmi.product(n, 0, 1.0, Some(&sys.a), pv, false, None);
    lmi.product(n, 0, 1.0, Some(&sys.b), lv, false, None);
    prob.add_psd_constraint(lmi)?;

    let mut cap = BlockExpr::new(n);
    cap.constant(0, 0, &DMatrix::identity(n, n));
    cap.var(0, 0, -1.0, pv, false);
    prob.add_psd_constraint(cap)?;

    let (sol, margin) = prob.strict_feasible(&[0])?;
    if sol.status != SdpStatus::Optimal || margin <= EPS_STRICT {
        return Err(Error::NotInformative);
    }
    Ok((sol.sym(pv), sol.rect(lv), margin))
}

fn singleton_certificate(
    nmat: &InformativityMatrix,
    options: &SolveOptions,
) -> Result<GainCertificate> {
    let sys = nmat.recover()?;
    let (mut p, mut l, _) = design_on_model(&sys, options)?;
    let mut alpha = 0.0;
    unit_scale(&mut p, &mut l, &mut alpha);
    let k = gain_from(&p, &l)?;
    let apbl = &sys.a * &p + &sys.b * &l;
    let mut lmi = DMatrix::zeros(2 * sys.n(), 2 * sys.n());
    lmi.view_mut((0, 0), (sys.n(), sys.n())).copy_from(&p);
    lmi.view_mut((sys.n(), sys.n()), (sys.n(), sys.n())).copy_from(&p);
    lmi.view_mut((sys.n(), 0), (sys.n(), sys.n())).copy_from(&apbl);
    lmi.view_mut((0, sys.n()), (sys.n(), sys.n())).copy_from(&apbl.transpose());
    let margin = min_eig(&lmi)?;
    Ok(GainCertificate { p, alpha, k, margin, source: CertSource::SingletonModel })
}

/// Decide stabilization informativity with the joint `(P, L, alpha)` design.
///
/// Singleton-precision data is routed to the recovered model (the set-wide
/// multiplier problem has no representable interior there); the certificate
/// source says which route ran.
pub fn check_informativity_full(
    nmat: &InformativityMatrix,
    options: &SolveOptions,
) -> Result<GainCertificate> {
    if nmat.is_singleton() {
        return singleton_certificate(nmat, options);
    }
    let (n, m) = (nmat.n(), nmat.m());
    let (nhat, factor) = nmat.normalized();
    let d = 3 * n + m;

    let mut prob = SdpProblem::new();
    prob.options = options.clone();
    let pv = prob.add_sym_var("P", n)?;
    let lv = prob.add_rect_var("L", m, n)?;
    let av = prob.add_scalar_var("alpha", Some(0.0))?;

    let mut lmi = BlockExpr::new(d);
    lmi.var(0, 0, 1.0, pv, false);
    lmi.var(n, n, -1.0, pv, false);
    lmi.var(n, 2 * n, -1.0, lv, true);
    lmi.var(2 * n, n, -1.0, lv, false);
    lmi.var(2 * n, 2 * n + m, 1.0, lv, false);
    lmi.var(2 * n + m, 2 * n, 1.0, lv, true);
    lmi.var(2 * n + m, 2 * n + m, 1.0, pv, false);
    let mut embedded = DMatrix::zeros(d, d);
    embedded
        .view_mut((0, 0), (2 * n + m, 2 * n + m))
        .copy_from(nhat.matrix());
    lmi.scalar_mat(0, 0, av, &(-embedded));
    prob.add_psd_constraint(lmi)?;

    let mut cap = BlockExpr::new(n);
    cap.constant(0, 0, &DMatrix::identity(n, n));
    cap.var(0, 0, -1.0, pv, false);
    prob.add_psd_constraint(cap)?;

    let (sol, margin) = prob.strict_feasible(&[0])?;
    if sol.status != SdpStatus::Optimal || margin <= EPS_STRICT {
        return Err(Error::NotInformative);
    }
    let mut p = sol.sym(pv);
    let mut l = sol.rect(lv);
    let mut alpha_hat = sol.scalar(av);
    unit_scale(&mut p, &mut l, &mut alpha_hat);
    let k = gain_from(&p, &l)?;

    // recompute the achieved margin on the normalized data matrix
    let mut full = DMatrix::zeros(d, d);
    full.view_mut((0, 0), (n, n)).copy_from(&p);
    full.view_mut((n, n), (n, n)).copy_from(&(-&p));
    full.view_mut((n, 2 * n), (n, m)).copy_from(&(-l.transpose()));
    full.view_mut((2 * n, n), (m, n)).copy_from(&(-&l));
    full.view_mut((2 * n, 2 * n + m), (m, n)).copy_from(&l);
    full.view_mut((2 * n + m, 2 * n), (n, m)).copy_from(&l.transpose());
    full.view_mut((2 * n + m, 2 * n + m), (n, n)).copy_from(&p);
    let shifted = full.view((0, 0), (2 * n + m, 2 * n + m)) - alpha_hat * nhat.matrix();
    full.view_mut((0, 0), (2 * n + m, 2 * n + m)).copy_from(&shifted);
    let margin = min_eig(&symmetrize(&full))?;

    Ok(GainCertificate {
        p,
        alpha: alpha_hat / factor,
        k,
        margin,
        source: CertSource::FullLmi,
    })
}

/// Decide stabilization informativity with the eliminated `(P, alpha)`
/// design; the gain comes from the gain-condition matrix. Same singleton
/// routing as the full design.
pub fn check_informativity_reduced(
    nmat: &InformativityMatrix,
    options: &SolveOptions,
) -> Result<GainCertificate> {
    if nmat.is_singleton() {
        return singleton_certificate(nmat, options);
    }
    let (n, m) = (nmat.n(), nmat.m());
    let (nhat, factor) = nmat.normalized();

    let mut prob = SdpProblem::new();
    prob.options = options.clone();
    let pv = prob.add_sym_var("P", n)?;
    let av = prob.add_scalar_var("alpha", Some(0.0))?;

    let mut gamma = BlockExpr::new(2 * n + m);
    gamma.var(0, 0, 1.0, pv, false);
    gamma.scalar_mat(0, 0, av, &(-nhat.matrix()));
    prob.add_psd_constraint(gamma)?;

    let mut theta = BlockExpr::new(2 * n);
    theta.var(0, 0, 1.0, pv, false);
    theta.var(n, n, -1.0, pv, false);
    theta.scalar_mat(
        0,
        0,
        av,
        &(-nhat.matrix().view((0, 0), (2 * n, 2 * n)).into_owned()),
    );
    prob.add_psd_constraint(theta)?;

    let mut cap = BlockExpr::new(n);
    cap.constant(0, 0, &DMatrix::identity(n, n));
    cap.var(0, 0, -1.0, pv, false);
    prob.add_psd_constraint(cap)?;

    let (sol, margin) = prob.strict_feasible(&[0, 1])?;
    if sol.status != SdpStatus::Optimal || margin <= EPS_STRICT {
        return Err(Error::NotInformative);
    }
    let mut p = sol.sym(pv);
    let mut l = DMatrix::zeros(m, n); // no L in this design; scaling is (P, alpha) only
    let mut alpha_hat = sol.scalar(av);
    unit_scale(&mut p, &mut l, &mut alpha_hat);

    let cm = CertificateMatrices::new(&nhat, &p, alpha_hat)?;
    let k = cm.central_gain()?;
    let margin = min_eig(&cm.gamma)?.min(min_eig(&cm.theta)?);

    Ok(GainCertificate {
        p,
        alpha: alpha_hat / factor,
        k,
        margin,
        source: CertSource::ReducedLmi,
    })
}
