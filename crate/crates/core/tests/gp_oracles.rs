mod common;

use common::*;
use lagp::gp::{ln_gamma_half, log_likelihood_derivatives};
use lagp::synth::{gp_sample_path, rng};
use lagp::*;
use nalgebra::DVector;
use rand::Rng;

#[test]
fn inverse_times_k_is_identity() {
    let d = random_design(1, 20, 3);
    let h = Hyperparameters::new(0.4, 1e-8).unwrap();
    let st = build_gp(&d, h).unwrap();
    let k = dense_k(d.inputs(), 3, &h);
    let kinv = nalgebra::DMatrix::from_row_slice(20, 20, st.k_inv());
    let err = (kinv * k - nalgebra::DMatrix::identity(20, 20)).norm();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn predict_matches_dense_solve() {
    // short lengthscale keeps K well conditioned (cond ~ 2e3), so two
    // different solution paths can agree to 1e-10
    let d = random_design(2, 20, 2);
    let h = Hyperparameters::new(0.05, 1e-8).unwrap();
    let st = build_gp(&d, h).unwrap();
    let k = dense_k(d.inputs(), 2, &h);
    let y = DVector::from_column_slice(d.responses());
    let lu = k.clone().lu();
    let psi = y.dot(&lu.solve(&y).unwrap());
    let mut r = rng(22);
    for _ in 0..10 {
        let x = [r.random::<f64>(), r.random::<f64>()];
        let kx = dense_kx(d.inputs(), 2, &x, &h);
        let sol = lu.solve(&kx).unwrap();
        let mean = sol.dot(&y);
        let scale2 = psi * (1.0 + h.eta() - kx.dot(&sol)) / 20.0;
        let pred = predict(&st, &x).unwrap();
        assert!((pred.mean - mean).abs() < 1e-10, "{} {}", pred.mean, mean);
        assert!((pred.scale2 - scale2).abs() < 1e-10, "{} {}", pred.scale2, scale2);
        assert_eq!(pred.dof, 20);
        assert!(pred.variance.unwrap() >= pred.scale2);
    }
}

#[test]
fn likelihood_matches_fresh_determinant() {
    let d = random_design(3, 10, 2);
    let h = Hyperparameters::new(0.7, 1e-6).unwrap();
    let st = build_gp(&d, h).unwrap();
    let k = dense_k(d.inputs(), 2, &h);
    let y = DVector::from_column_slice(d.responses());
    let psi = y.dot(&k.clone().lu().solve(&y).unwrap());
    let log_det = k.determinant().ln();
    let n = 10.0;
    let expect = ln_gamma_half(10) - 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det
        - 0.5 * n * (psi / 2.0).ln();
    let got = log_marginal_likelihood(&st).unwrap();
    assert!((got - expect).abs() < 1e-10 * expect.abs().max(1.0), "{got} {expect}");
}

#[test]
fn likelihood_scaling_in_responses() {
    let d = random_design(4, 12, 2);
    let h = Hyperparameters::new(0.5, 1e-8).unwrap();
    let c: f64 = 3.5;
    let scaled = Design::new(
        d.inputs().to_vec(),
        2,
        d.responses().iter().map(|v| v * c).collect(),
    )
    .unwrap();
    let a = log_marginal_likelihood(&build_gp(&d, h).unwrap()).unwrap();
    let b = log_marginal_likelihood(&build_gp(&scaled, h).unwrap()).unwrap();
    assert!((b - a + 6.0 * (c * c).ln()).abs() < 1e-10);
}

#[test]
fn interpolates_every_design_row() {
    // with eta = 0 the residual variance at a row is pure roundoff scaled by
    // psi, so the design must be well conditioned for the 1e-10 bound
    let d = random_design(5, 25, 2);
    let st = build_gp(&d, Hyperparameters::new(0.02, 0.0).unwrap()).unwrap();
    for i in 0..d.len() {
        let pred = st.predict(d.row(i)).unwrap();
        assert!((pred.mean - d.response(i)).abs() < 1e-8);
        assert!(pred.scale2 <= 1e-10);
    }
}

#[test]
fn extend_matches_rebuild_at_21() {
    let d = random_design(6, 21, 3);
    let h = Hyperparameters::new(0.5, 1e-8).unwrap();
    let first: Vec<usize> = (0..20).collect();
    let st = LocalState::from_indices(&d, &first, h).unwrap();
    let st = update_gp(st, d.row(20), d.response(20), 20).unwrap();
    let fresh = build_gp(&d, h).unwrap();
    let k = nalgebra::DMatrix::from_row_slice(21, 21, fresh.k_inv());
    assert!(frobenius_rel(st.k_inv(), &k) < 1e-8);
    assert!((st.psi() - fresh.psi()).abs() < 1e-8 * fresh.psi());
    assert!((st.log_det_k() - fresh.log_det_k()).abs() < 1e-8 * fresh.log_det_k().abs().max(1.0));
}

#[test]
fn extension_sequence_stays_consistent() {
    // every reachable state up to 64 points against a dense inverse, then on to 128
    let d = random_design(7, 128, 4);
    let h = Hyperparameters::new(0.6, 1e-6).unwrap();
    let mut st = LocalState::from_indices(&d, &[0, 1], h).unwrap();
    for i in 2..128 {
        st.extend(d.row(i), d.response(i), i).unwrap();
        let j = st.size();
        if j <= 64 || j == 128 {
            let k = dense_k(st.sub_design(), 4, &h);
            let kinv = nalgebra::DMatrix::from_row_slice(j, j, st.k_inv());
            let eye = nalgebra::DMatrix::identity(j, j);
            let err = (kinv * &k - &eye).norm() / eye.norm();
            assert!(err < 1e-8, "j={j} err={err}");
        }
    }
    let fresh = build_gp(&d, h).unwrap();
    let k = nalgebra::DMatrix::from_row_slice(128, 128, fresh.k_inv());
    assert!(frobenius_rel(st.k_inv(), &k) < 1e-8);
    assert!((st.psi() - fresh.psi()).abs() <= 1e-8 * fresh.psi());
    assert!((st.log_det_k() - fresh.log_det_k()).abs() <= 1e-8 * fresh.log_det_k().abs());
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(8);
    for trial in 0..30 {
        let n = r.random_range(5..=50);
        let p = r.random_range(1..=4);
        let d = random_design(100 + trial, n, p);
        let theta = r.random_range(0.05..2.0);
        let h = Hyperparameters::new(theta, 1e-6).unwrap();
        let ev = log_likelihood_derivatives(&d, &h).unwrap();
        let step = 1e-6 * theta;
        let at = |t: f64| log_likelihood_derivatives(&d, &h.with_theta(t).unwrap()).unwrap();
        let fd = (at(theta + step).loglik - at(theta - step).loglik) / (2.0 * step);
        let fd2 = (at(theta + step).d_theta - at(theta - step).d_theta) / (2.0 * step);
        let scale = ev.d_theta.abs().max(1e-3);
        assert!((ev.d_theta - fd).abs() <= 1e-4 * scale, "trial {trial}: {} vs {fd}", ev.d_theta);
        let scale2 = ev.d2_theta.abs().max(1e-3);
        assert!((ev.d2_theta - fd2).abs() <= 1e-4 * scale2, "trial {trial}: {} vs {fd2}", ev.d2_theta);
    }
}

#[test]
fn mle_recovers_lengthscale_in_one_dimension() {
    let mut inside = 0;
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let x: Vec<f64> = (0..100).map(|_| r.random::<f64>() * 4.0).collect();
        let truth = Hyperparameters::new(0.5, 1e-6).unwrap();
        let y = gp_sample_path(&x, 1, &truth, seed).unwrap();
        let d = Design::new(x, 1, y).unwrap();
        let fit = mle_theta(&d, 1.0, (0.01, 10.0), 1e-6).unwrap();

        // grid-scan oracle over the same bounds
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=400 {
            let t = (0.01f64.ln() + (10.0f64.ln() - 0.01f64.ln()) * i as f64 / 400.0).exp();
            let ll = log_likelihood_derivatives(&d, &truth.with_theta(t).unwrap())
                .map(|e| e.loglik)
                .unwrap_or(f64::NEG_INFINITY);
            if ll > best.0 {
                best = (ll, t);
            }
        }
        assert!(fit.loglik >= best.0 - 1e-6, "seed {seed}: {} < {}", fit.loglik, best.0);
        if (0.25..=1.0).contains(&fit.theta) {
            inside += 1;
        }
        if !fit.at_boundary {
            let ev = log_likelihood_derivatives(&d, &truth.with_theta(fit.theta).unwrap()).unwrap();
            assert!(ev.d_theta.abs() <= 1e-5 * (1.0 + ev.loglik.abs()));
        }
    }
    assert!(inside >= 8, "only {inside}/10 estimates in [0.25, 1]");
}

#[test]
fn mle_never_worse_than_start() {
    for seed in 0..20u64 {
        let d = random_design(900 + seed, 30, 2);
        let start = 0.3;
        let fit = mle_theta(&d, start, (1e-3, 10.0), 1e-6).unwrap();
        let at_start = log_likelihood_derivatives(&d, &Hyperparameters::new(start, 1e-6).unwrap())
            .unwrap()
            .loglik;
        assert!(fit.loglik >= at_start - 1e-12);
    }
}

#[test]
fn random_state_interpolation_limit_far_away() {
    let d = random_design(10, 15, 2);
    let h = Hyperparameters::new(0.1, 1e-4).unwrap();
    let st = build_gp(&d, h).unwrap();
    let pred = st.predict(&[1e3, -1e3]).unwrap();
    assert_eq!(pred.mean, 0.0);
    assert!((pred.scale2 - st.psi() * (1.0 + 1e-4) / 15.0).abs() < 1e-14);
}
