use cqft::rgflow::*;
use proptest::prelude::*;

#[test]
fn coupling_approaches_the_continuum_flow() {
    for l0 in [0.05, 0.1] {
        let t = flow_phi4(l0, 1.0, 10_000).unwrap();
        let j = 10_000;
        let prod = t.lambda[j] * (1.0 / l0 + j as f64);
        assert!((0.99..=1.01).contains(&prod), "{prod}");
        assert!(t.lambda.windows(2).all(|w| w[1] <= w[0] && w[1] > 0.0));
    }
}

/// `sup_{100 ≤ j ≤ J} j²·c·|λ_j − 1/((1/λ⁰)+cj)|`
fn fitted_constant(l0: f64, c: f64) -> f64 {
    let t = flow_phi4(l0, c, 20_000).unwrap();
    (100..=20_000)
        .map(|j| {
            let jf = j as f64;
            jf * jf * c * (t.lambda[j] - continuum_coupling(l0, c, jf)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn discrete_flow_error_is_order_inverse_square() {
    let c_fit = fitted_constant(0.1, 1.0);
    let other = fitted_constant(0.05, 1.0);
    assert!(other <= c_fit, "{other} > {c_fit}");
    assert!(other > 0.5 * c_fit);
    let c2 = fitted_constant(0.1, 2.0);
    assert!(c2 <= 1.5 * c_fit && c2 >= 0.5 * c_fit, "{c2} vs {c_fit}");
}

#[test]
fn counterterms_vanish_at_zero_coupling() {
    let ct = flow_counterterms(0.0, Phi4Constants::default(), 100).unwrap();
    assert!(ct.mass_scaled.iter().all(|&x| x == 0.0));
    assert!(ct.wave.iter().all(|&x| x == 0.0));
}

#[test]
fn mass_counterterm_matches_forward_oracle() {
    let k = Phi4Constants::default();
    let ct = flow_counterterms(0.1, k, 1000).unwrap();
    let long = flow_phi4(0.1, 1.0, 1300).unwrap();
    for j in [0usize, 1, 10, 100, 500, 1000] {
        // M^{2j} Σ_{k≥j} λ_k M^{−2k}, truncated 300 scales deep
        let direct: f64 = (j..j + 300).map(|i| long.lambda[i] * 4f64.powi(-((i - j) as i32))).sum();
        assert!((ct.mass_scaled[j] - direct).abs() < 1e-14 * direct, "j={j}");
    }
    let scaled: Vec<f64> = (100..=1000).map(|j| ct.mass_scaled[j] * j as f64).collect();
    let sup = scaled.iter().cloned().fold(0.0, f64::max);
    let inf = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(sup / inf < 3.0);
    assert!((ct.mass(3) - ct.mass_scaled[3] / 64.0).abs() < 1e-18);
}

#[test]
fn wave_counterterm_tail_and_cauchy_bound() {
    let k = Phi4Constants::default();
    let ct = flow_counterterms(0.1, k, 10_000).unwrap();
    // deep direct summation as the oracle for the analytic tail
    let deep = flow_phi4(0.1, 1.0, 2_000_000).unwrap();
    // beyond 2·10⁶ scales Σ λ_k² ≈ λ_J to relative O(1/J)
    let head: f64 = deep.lambda[5000..].iter().map(|x| x * x).sum::<f64>() + deep.lambda[2_000_000];
    assert!((ct.wave[5000] - head).abs() < 1e-6 * head, "{} vs {head}", ct.wave[5000]);
    for j in [100usize, 500, 1000, 5000] {
        assert!((ct.wave[j] - ct.wave[2 * j]).abs() <= 2.0 / j as f64);
    }
    assert!(ct.wave.iter().all(|&x| x >= 0.0));
}

#[test]
fn two_loop_term_is_optional() {
    let base = flow_counterterms(0.1, Phi4Constants::default(), 50).unwrap();
    let with = flow_counterterms(0.1, Phi4Constants { two_loop: Some(1.0), ..Default::default() }, 50).unwrap();
    assert!(with.mass_scaled[10] > base.mass_scaled[10]);
    assert_eq!(with.wave, base.wave);
}

#[test]
fn rough_mass_grows_with_the_bubble_power() {
    let alpha = 0.2;
    let s = 1.0 - 4.0 * alpha;
    let f = rough_flow(alpha, 0.5, 30, 2.0).unwrap();
    for j in 2..=30 {
        let r = f.b[j] / f.b[j - 1];
        assert!((r - 2f64.powf(s)).abs() < 1e-12);
        assert!(f.b[j] > 0.0);
    }
    // |δm^ρ| / (λ² M^{ρs}) → 2/s
    let rho = 30;
    let ratio = f.delta_m[rho].abs() / (0.25 * 2f64.powf(rho as f64 * s));
    assert!((ratio - 2.0 / s).abs() < 0.02 * 2.0 / s, "{ratio}");
    assert!(rough_flow(0.3, 0.5, 10, 2.0).is_err());
}

#[test]
fn geometric_resummation() {
    let alpha = 0.2;
    let s = 1.0 - 4.0f64 * alpha;
    // choose ρ so that λ² M^{ρs} / |ξ|^s = 0.5
    let xi = 2f64.powf(10.0);
    let lambda = (0.5 * xi.powf(s) / 2f64.powf(8.0 * s)).sqrt();
    let p = renormalized_sigma_propagator(xi, 8.0, lambda, alpha, 2.0, 41);
    assert!((p.ratio - 0.5).abs() < 1e-12);
    assert!((p.partial_sums[40] - p.closed_form).abs() < 1e-10 * xi.powf(-s).max(1.0));
    let p = renormalized_sigma_propagator(1.0, 0.0, 0.9f64.sqrt(), alpha, 2.0, 400);
    assert!((p.partial_sums.last().unwrap() - p.closed_form).abs() < 1e-10);
    let p = renormalized_sigma_propagator(1.0, 0.0, 1.2, alpha, 2.0, 400);
    assert!(!p.convergent);
}

#[test]
fn resummed_propagator_decays_per_scale() {
    for alpha in [0.15, 0.2] {
        let s = 1.0 - 4.0 * alpha;
        let a = renormalized_sigma_propagator(1.0, 40.0, 1.0, alpha, 2.0, 0).closed_form;
        let b = renormalized_sigma_propagator(1.0, 41.0, 1.0, alpha, 2.0, 0).closed_form;
        assert!(((b / a) / 2f64.powf(-s) - 1.0).abs() < 0.01);
    }
}

#[test]
fn area_covariance_limit() {
    let alpha = 0.15;
    assert!((limiting_area_covariance(1.0, 1.0, alpha) - 1.0).abs() < 1e-15);
    assert!((limiting_area_covariance(0.7, 2.0, alpha) - limiting_area_covariance(0.7, 1.0, alpha) / 4.0).abs() < 1e-15);
    let gap = |rho: f64| limiting_area_covariance(1.0, 1.0, alpha) - renormalized_area_covariance(1.0, rho, 1.0, alpha, 2.0);
    let s = 1.0 - 4.0 * alpha;
    for rho in [20.0, 30.0, 40.0] {
        let r = gap(rho + 1.0) / gap(rho);
        assert!((r / 2f64.powf(-s) - 1.0).abs() < 0.01, "{r}");
    }
    assert!((renormalized_area_covariance(1.0, 80.0, 1.0, alpha, 2.0) - 1.0).abs() < 1e-6);
}

#[test]
fn phi4_domination() {
    let sweep = domination_sweep(Domination::Phi4 { kappa: 0.3, lambda: 1e-3 }, &[1e-2, 1e-3, 1e-4]).unwrap();
    assert!((sweep.slope - 0.05).abs() <= 0.02 * 0.05);
    let consts: Vec<f64> = sweep.reports.iter().map(|r| r.constant).collect();
    // closed form: x* = (4λ)^{−1/4}, sup = λ^{κ−1/4} (4e)^{−1/4}
    for c in &consts {
        assert!((c - (4.0 * std::f64::consts::E).powf(-0.25)).abs() < 1e-10);
        assert!(*c <= 1.0);
    }
}

#[test]
fn boundary_domination_closed_form() {
    let (alpha, m, height) = (0.2, 2.0, 3.0);
    let sweep = domination_sweep(Domination::Boundary { alpha, lambda: 0.1, m, height }, &[1e-2, 1e-3, 1e-4]).unwrap();
    assert!((sweep.slope - 0.5).abs() <= 0.01);
    for r in &sweep.reports {
        let damp = m.powf(-(12.0 * alpha - 1.0) * height);
        let lam = r.kind.lambda();
        let xstar = (6.0 * damp * lam.powi(3)).powf(-1.0 / 6.0);
        let exact = lam * xstar * (-1.0f64 / 6.0).exp();
        assert!((r.sup - exact).abs() < 1e-10 * exact);
    }
}

#[test]
fn sigma_mass_gives_a_large_factor() {
    let sweep = domination_sweep(Domination::SigmaMass { kappa: 0.5, lambda: 0.1, b: 1.0 }, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!((sweep.slope - (0.5 - 1.0)).abs() < 0.01);
    assert!(sweep.reports[2].sup > sweep.reports[0].sup);
}

#[test]
fn domination_refuses_outside_the_claim() {
    assert!(domination_check(Domination::Phi4 { kappa: 0.2, lambda: 0.01 }).is_err());
    assert!(domination_check(Domination::Phi4 { kappa: 0.3, lambda: 2.0 }).is_err());
    assert!(domination_check(Domination::Boundary { alpha: 0.3, lambda: 0.01, m: 2.0, height: 0.0 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counterterms_stay_nonnegative(l0 in 0.0f64..0.4, c in 0.2f64..1.2, cm in 0.1f64..3.0, cz in 0.1f64..3.0) {
        prop_assume!(l0 < 0.5 / c);
        let k = Phi4Constants { c, c_m: cm, c_z: cz, m: 2.0, two_loop: None };
        let ct = flow_counterterms(l0, k, 200).unwrap();
        prop_assert!(ct.mass_scaled.iter().all(|&x| x >= 0.0));
        prop_assert!(ct.wave.iter().all(|&x| x >= 0.0));
        prop_assert!(ct.wave.windows(2).all(|w| w[1] <= w[0]));
    }
}
