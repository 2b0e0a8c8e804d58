//! Randomized invariant checks. Structural identities of the linear-algebra
//! kernels run at full case counts; properties that solve semidefinite
//! programs per case run with reduced counts to keep the suite quick.

use fraglib::data::{DataMatrices, InformativityMatrix, NoiseModel, SystemModel, TrajectoryData};
use fraglib::fragility::{
    classify_data_fragility, extreme_witness, kappa_data_check, kappa_model_check,
    lambda_data_given_k, lambda_data_opt, lambda_model_given_k, lambda_model_opt, mu_oracle_model,
    trace_bound, FragilityClass, FragilityReport,
};
use fraglib::linalg::{
    is_schur, numeric_rank, pinv, psd_inv_sqrt, psd_sqrt, spectral_norm, spectral_radius,
    symmetrize,
};
use fraglib::sdp::SolveOptions;
use fraglib::stabilization::{design_on_model, gain_in_set, parameterize_gains, GainCertificate};
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use std::sync::OnceLock;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn recorded() -> TrajectoryData {
    let u = dmatrix![2.0, -4.0, 3.0, 5.0];
    let x = dmatrix![0.0, 1.0, 2.0, 1.5, 5.0; 0.0, 2.0, -2.0, 1.0, 5.0];
    let w = dmatrix![0.0, 1.0, 0.0, 0.0; 0.0, 0.0, 0.0, -1.0];
    TrajectoryData::new(u, x, Some(w)).unwrap()
}

fn recorded_nmat() -> &'static InformativityMatrix {
    static NMAT: OnceLock<InformativityMatrix> = OnceLock::new();
    NMAT.get_or_init(|| {
        InformativityMatrix::from_trajectory(&recorded(), &NoiseModel::norm_bound(1.0).unwrap())
            .unwrap()
    })
}

/// Radius report for the reference gain on the recorded data, solved once.
fn recorded_given_k() -> &'static FragilityReport {
    static REP: OnceLock<FragilityReport> = OnceLock::new();
    REP.get_or_init(|| {
        lambda_data_given_k(recorded_nmat(), &dmatrix![-1.35, -1.7], 7, &opts()).unwrap()
    })
}

fn recorded_opt() -> &'static FragilityReport {
    static REP: OnceLock<FragilityReport> = OnceLock::new();
    REP.get_or_init(|| lambda_data_opt(recorded_nmat(), 7, &opts()).unwrap())
}

fn recorded_cert() -> &'static GainCertificate {
    static CERT: OnceLock<GainCertificate> = OnceLock::new();
    CERT.get_or_init(|| {
        fraglib::stabilization::check_informativity_reduced(recorded_nmat(), &opts()).unwrap()
    })
}

/// Strategy: matrix of the given shape with entries in [-1, 1].
fn mat(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Strategy: shape pair plus a row-major entry pool large enough for any
/// matrix this suite builds from it.
fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=2)
}

proptest! {
    // ----------------------------------------------------------------- linalg

    #[test]
    fn pinv_satisfies_the_penrose_identities(
        (n, m) in dims(),
        k in 1usize..=2,
        left in prop::collection::vec(-1.0..1.0f64, 12),
        right in prop::collection::vec(-1.0..1.0f64, 10),
    ) {
        // products of thin factors exercise rank-deficient inputs too
        let l = DMatrix::from_fn(n + 1, k, |i, j| left[i * k + j]);
        let r = DMatrix::from_fn(k, m + 2, |i, j| right[i * (m + 2) + j]);
        let a = l * r;
        let ap = pinv(&a, 1e-12);
        let scale = a.amax().max(1.0);
        prop_assert!((&a * &ap * &a - &a).amax() <= 1e-8 * scale);
        prop_assert!((&ap * &a * &ap - &ap).amax() <= 1e-8 * scale.max(ap.amax()));
        let aap = &a * &ap;
        let apa = &ap * &a;
        prop_assert!((&aap - aap.transpose()).amax() <= 1e-8);
        prop_assert!((&apa - apa.transpose()).amax() <= 1e-8);
    }

    #[test]
    fn rank_of_a_thin_product_is_the_inner_dimension(
        n in 2usize..=4,
        k in 1usize..=2,
        seed_entries in prop::collection::vec(0.2..1.0f64, 32),
        signs in prop::collection::vec(prop::bool::ANY, 32),
    ) {
        // entries bounded away from zero make the generic-rank claim robust
        let e = |idx: usize| {
            let v = seed_entries[idx % seed_entries.len()];
            if signs[idx % signs.len()] { v } else { -v }
        };
        let l = DMatrix::from_fn(n, k, |i, j| e(i * k + j) + 1.5 * ((i + 7 * j) as f64).sin());
        let r = DMatrix::from_fn(k, n + 1, |i, j| e(13 + i * (n + 1) + j) + 1.5 * ((3 * i + j) as f64).cos());
        let a = l * r;
        prop_assert_eq!(numeric_rank(&a, 1e-10), k.min(n));
    }

    #[test]
    fn psd_roots_square_and_invert_back(g in mat(3, 3), shift in 0.05..1.0f64) {
        let m = symmetrize(&(&g * g.transpose())) + DMatrix::identity(3, 3) * shift;
        let s = psd_sqrt(&m, 1e-12).unwrap();
        let scale = m.amax().max(1.0);
        prop_assert!((&s * &s - &m).amax() <= 1e-9 * scale);
        let t = psd_inv_sqrt(&m, 1e-12).unwrap();
        prop_assert!((&t * &m * &t - DMatrix::identity(3, 3)).amax() <= 1e-8);
    }

    #[test]
    fn schur_test_agrees_with_the_spectral_radius(a in mat(3, 3), scale in 0.2..2.0f64) {
        let m = a * scale;
        let rho = spectral_radius(&m);
        prop_assume!((rho - 1.0).abs() > 1e-9);
        prop_assert_eq!(is_schur(&m, 0.0), rho < 1.0);
    }

    // ------------------------------------------------------------- data model

    #[test]
    fn noise_free_records_identify_their_generator(
        (n, m) in dims(),
        a_pool in prop::collection::vec(-0.6..0.6f64, 9),
        b_pool in prop::collection::vec(-1.0..1.0f64, 6),
        x0_pool in prop::collection::vec(-1.0..1.0f64, 3),
        u_pool in prop::collection::vec(-1.0..1.0f64, 22),
    ) {
        let a = DMatrix::from_fn(n, n, |i, j| a_pool[i * n + j]);
        let b = DMatrix::from_fn(n, m, |i, j| b_pool[i * m + j]);
        let sys = SystemModel::new(a.clone(), b.clone()).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| x0_pool[i]).collect();
        let t_len = n + m + 6;
        let u = DMatrix::from_fn(m, t_len, |i, j| u_pool[i * t_len + j]);
        let traj = TrajectoryData::simulate(&sys, &x0, u, None).unwrap();
        let data = traj.matrices();
        prop_assume!(data.is_bounded());
        let nmat = InformativityMatrix::build(&data, &NoiseModel::norm_bound(0.0).unwrap()).unwrap();

        prop_assert!(nmat.singleton_defect() <= 1e-10 * nmat.norm().max(1e-300));
        prop_assert!(nmat.is_consistent(&sys));
        let rec = nmat.recover().unwrap();
        let err = (&rec.a - &a).amax().max((&rec.b - &b).amax());
        let scale = a.amax().max(b.amax()).max(1e-12);
        prop_assert!(err <= 1e-8 * scale.max(1.0));
    }

    #[test]
    fn the_generator_explains_its_own_noisy_record(
        (n, m) in dims(),
        a_pool in prop::collection::vec(-0.6..0.6f64, 9),
        b_pool in prop::collection::vec(-1.0..1.0f64, 6),
        w_pool in prop::collection::vec(-0.1..0.1f64, 33),
        u_pool in prop::collection::vec(-1.0..1.0f64, 22),
    ) {
        let a = DMatrix::from_fn(n, n, |i, j| a_pool[i * n + j]);
        let b = DMatrix::from_fn(n, m, |i, j| b_pool[i * m + j]);
        let sys = SystemModel::new(a, b).unwrap();
        let t_len = n + m + 6;
        let u = DMatrix::from_fn(m, t_len, |i, j| u_pool[i * t_len + j]);
        let w = DMatrix::from_fn(n, t_len, |i, j| w_pool[(i * t_len + j) % w_pool.len()]);
        let eps = spectral_norm(&w) * 1.05 + 1e-6;
        let noise = NoiseModel::norm_bound(eps).unwrap();
        prop_assert!(noise.admits(&w).unwrap());
        let traj = TrajectoryData::simulate(&sys, &vec![0.25; n], u, Some(w)).unwrap();
        let nmat = InformativityMatrix::from_trajectory(&traj, &noise).unwrap();
        prop_assert!(nmat.is_consistent(&sys));
    }

    #[test]
    fn short_records_never_bound_the_consistent_set(
        (n, m) in dims(),
        x_pool in prop::collection::vec(-2.0..2.0f64, 12),
        u_pool in prop::collection::vec(-2.0..2.0f64, 8),
    ) {
        // with fewer samples than n + m the stacked regressor cannot have
        // full row rank, whatever the numbers are
        let t_len = (n + m).saturating_sub(1).max(1);
        let data = DataMatrices {
            x_minus: DMatrix::from_fn(n, t_len, |i, j| x_pool[i * t_len + j]),
            x_plus: DMatrix::from_fn(n, t_len, |i, j| x_pool[(i * t_len + j + 5) % x_pool.len()]),
            u_minus: DMatrix::from_fn(m, t_len, |i, j| u_pool[i * t_len + j]),
        };
        prop_assert!(!data.is_bounded());
        let nmat = InformativityMatrix::build(&data, &NoiseModel::norm_bound(1.0).unwrap()).unwrap();
        prop_assert_eq!(
            classify_data_fragility(&data, &nmat),
            FragilityClass::ExtremelyFragile
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // --------------------------------------------------- radius problems (SDP)

    #[test]
    fn radius_reports_ignore_the_data_scale(c in 0.05..20.0f64) {
        let nmat = recorded_nmat();
        let scaled = InformativityMatrix::from_matrix(
            nmat.n(),
            nmat.m(),
            nmat.matrix() * c,
        )
        .unwrap();
        let k = dmatrix![-1.35, -1.7];
        let base = recorded_given_k();
        let rep = lambda_data_given_k(&scaled, &k, 7, &opts()).unwrap();
        prop_assert!((rep.lambda - base.lambda).abs() <= 1e-6 * base.lambda.max(1.0));
        // the multiplier absorbs the scale change
        prop_assert!((rep.zeta_star * c - base.zeta_star).abs() <= 1e-6 * base.zeta_star.max(1e-6));
    }

    #[test]
    fn every_certified_gain_has_a_positive_radius_below_the_best(
        s1 in -0.97..0.97f64,
        s2 in -0.97..0.97f64,
    ) {
        let cert = recorded_cert();
        let params = parameterize_gains(recorded_nmat(), &cert.p, cert.alpha).unwrap();
        let s = dmatrix![s1, s2] / (1.0 + (s1 * s1 + s2 * s2).sqrt());
        let k = params.gain(&s).unwrap();
        prop_assert!(gain_in_set(recorded_nmat(), &cert.p, cert.alpha, &k).unwrap());
        let rep = lambda_data_given_k(recorded_nmat(), &k, 7, &opts()).unwrap();
        prop_assert!(rep.lambda > 0.0);
        prop_assert!(rep.lambda <= recorded_opt().lambda + 5e-3);
        // the optimizer must live in the unit box, as the feasibility
        // argument promises
        let eigs = fraglib::linalg::sym_eigenvalues(&rep.q_star);
        prop_assert!(eigs.iter().all(|&e| e >= -1e-6 && e <= 1.0 + 1e-6));
    }

    #[test]
    fn fixed_certificate_radii_respect_the_report_boundary(frac in 0.05..1.45f64) {
        let rep = recorded_given_k();
        let rho = frac * rep.lambda;
        let ok = kappa_data_check(
            recorded_nmat(),
            &rep.q_star,
            rep.zeta_star,
            &dmatrix![-1.35, -1.7],
            rho,
            &opts(),
        )
        .unwrap();
        if frac <= 0.9 {
            prop_assert!(ok, "certificate must cover {:.0}% of its own radius", frac * 100.0);
        }
        if ok {
            prop_assert!(rho <= rep.lambda + 5e-3);
        }
    }

    #[test]
    fn set_radius_never_exceeds_a_member_radius(
        g1 in -1.0..1.0f64, g2 in -1.0..1.0f64, g3 in -1.0..1.0f64,
        g4 in -1.0..1.0f64, g5 in -1.0..1.0f64, g6 in -1.0..1.0f64,
        shrink in 0.0..1.0f64,
    ) {
        let sp = recorded_nmat().sigma_param().unwrap();
        let raw = dmatrix![g1, g2, g3; g4, g5, g6];
        let nrm = spectral_norm(&raw).max(1e-9);
        let member = sp.member(&(raw * (shrink / nrm))).unwrap();
        let k = dmatrix![-1.35, -1.7];
        prop_assume!(is_schur(&member.closed_loop(&k), 0.0));
        let member_rep = lambda_model_given_k(&member, &k, 7, &opts()).unwrap();
        prop_assert!(recorded_given_k().lambda <= member_rep.lambda + 5e-3);
    }

    #[test]
    fn sampled_bracket_sits_between_certificate_and_trace_bound(
        a_pool in prop::collection::vec(-0.8..0.8f64, 4),
        b_pool in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let a = DMatrix::from_fn(2, 2, |i, j| a_pool[i * 2 + j]);
        let b = DMatrix::from_fn(2, 1, |i, _| b_pool[i]);
        prop_assume!(b.amax() > 0.05);
        let sys = SystemModel::new(a, b).unwrap();
        let (p_des, l_des, _) = match design_on_model(&sys, &opts()) {
            Ok(t) => t,
            Err(_) => return Ok(()), // not stabilizable at this draw
        };
        let k = l_des * p_des.cholesky().unwrap().inverse();

        let rep_k = lambda_model_given_k(&sys, &k, 7, &opts()).unwrap();
        let rep = lambda_model_opt(&sys, 7, &opts()).unwrap();
        prop_assert!(rep_k.lambda <= rep.lambda + 1e-6);

        let est = mu_oracle_model(&sys, &rep.k_star, 7).unwrap();
        prop_assert!(est.rho_lo > 0.0);
        prop_assert!(rep.lambda <= est.rho_hi + 0.01);
        prop_assert!(est.rho_hi <= trace_bound(&sys, &rep.k_star) + 1e-9);

        // a fixed certificate can never beat the optimized radius of its gain
        let p_fixed = symmetrize(&pinv(&rep_k.q_star, 1e-12));
        let at_report = kappa_model_check(&sys, &k, &p_fixed, 0.8 * rep_k.lambda, &opts())
            .unwrap_or(false);
        prop_assert!(at_report, "the report's own certificate must cover 80% of its radius");
        let beyond = kappa_model_check(&sys, &k, &p_fixed, 1.2 * rep_k.lambda + 1e-3, &opts())
            .unwrap_or(false);
        prop_assert!(!beyond, "no fixed certificate may exceed the optimized radius by 20%");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn unbounded_records_yield_witnesses_at_any_radius(rho_exp in -3.0..-1.0f64) {
        let rho = 10f64.powf(rho_exp);
        let traj = recorded().truncated(2).unwrap();
        let data = traj.matrices();
        let nmat = InformativityMatrix::build(&data, &NoiseModel::norm_bound(1.0).unwrap()).unwrap();
        let k = dmatrix![-1.35, -1.7];
        let (sys, delta) = extreme_witness(&data, &nmat, &k, rho, 7).unwrap();
        prop_assert!((spectral_norm(&delta) - rho).abs() <= 1e-9 * rho.max(1.0));
        prop_assert!(nmat.is_consistent(&sys));
        prop_assert!(spectral_radius(&sys.closed_loop(&(&k + &delta))) >= 1.0);
    }
}
