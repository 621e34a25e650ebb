use cqft::levyarea::*;
use cqft::wick::{wick_moment, GaussianVector};
use proptest::prelude::*;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn hurst_index_must_be_inside_the_open_interval() {
    assert!(sample_fbm(0.5, FbmGrid::standard(), 0, 1).is_err());
    assert!(sample_fbm(0.0, FbmGrid::standard(), 0, 1).is_err());
}

#[test]
fn unit_increment_has_unit_variance() {
    let alpha = 0.3;
    let ens = sample_fbm(alpha, FbmGrid::wide(), 3, 200).unwrap();
    let unit = 256;
    // lattice value and its finite-volume shift under doubling
    let exact = ens.lattice_increment_covariance(unit, unit);
    let big = sample_fbm(alpha, FbmGrid { size: 1 << 15, j_min: -5, ..FbmGrid::wide() }, 3, 1).unwrap();
    let shift = (big.lattice_increment_covariance(unit, unit) - exact).abs();
    // per-path means of B₁² and of the product of adjacent increments
    let (mut sq, mut adj) = (Vec::new(), Vec::new());
    for i in 0..ens.len {
        let p = ens.path(i, 0);
        let n = p.len();
        let inc = |k: usize| p[(k + unit) % n] - p[k];
        let starts: Vec<usize> = (0..n).step_by(2 * unit).collect();
        sq.push(starts.iter().map(|&k| inc(k).powi(2)).sum::<f64>() / starts.len() as f64);
        adj.push(starts.iter().map(|&k| inc(k) * inc(k + unit)).sum::<f64>() / starts.len() as f64);
    }
    let (m, se) = mean_se(&sq);
    assert!((m - 1.0).abs() < 5.0 * se, "{m} ± {se}");
    assert!((exact - 1.0).abs() < 0.01);
    assert!(shift < se, "{shift} vs {se}");
    // Cov(B(0,1), B(1,2)) = ½(2^{2α} − 2)
    let target = 0.5 * (2f64.powf(2.0 * alpha) - 2.0);
    let (a, ase) = mean_se(&adj);
    assert!((a - target).abs() < 5.0 * ase, "{a} vs {target}");
    assert!((fbm_covariance(alpha, 1.0, 2.0) - 1.0 - target).abs() < 1e-15);
}

#[test]
fn components_are_uncorrelated() {
    let ens = sample_fbm(0.3, FbmGrid::standard(), 4, 100).unwrap();
    let unit = 1024;
    let mut prods = Vec::new();
    for i in 0..ens.len {
        let (a, b) = (ens.path(i, 0), ens.path(i, 1));
        let n = a.len();
        let k = (0..n).step_by(unit).map(|k| (a[(k + unit) % n] - a[k]) * (b[(k + unit) % n] - b[k])).sum::<f64>();
        prods.push(k / (n / unit) as f64);
    }
    let (m, se) = mean_se(&prods);
    assert!(m.abs() < 5.0 * se);
}

#[test]
fn scale_components_and_remainder_rebuild_the_path() {
    let ens = sample_fbm(0.2, FbmGrid::standard(), 5, 1).unwrap();
    let path = ens.path(0, 1);
    let comps = ens.components(0, 1);
    let rem = ens.remainder(0, 1);
    for m in (0..path.len()).step_by(97) {
        let s: f64 = comps.iter().map(|c| c[m]).sum::<f64>() + rem[m];
        assert!((s - path[m]).abs() < 1e-10);
    }
}

#[test]
fn aliased_sum_lies_in_the_integral_test_bracket() {
    let (xi, period) = (1.3, 10.0);
    for p in [1.4, 3.0] {
        let big = 100_000i64;
        let direct: f64 = (-big..=big).map(|n| (xi + n as f64 * period).abs().powf(-p)).sum();
        // ∫_{N+1}^∞ f ≤ Σ_{n>N} f(n) ≤ ∫_N^∞ f on each side
        let tail = |a: f64, from: f64| (a + from * period).powf(1.0 - p) / (period * (p - 1.0));
        let lo = direct + tail(xi, big as f64 + 1.0) + tail(-xi, big as f64 + 1.0);
        let hi = direct + tail(xi, big as f64) + tail(-xi, big as f64);
        let got = aliased_power_law(xi, period, p);
        assert!(got >= lo * (1.0 - 1e-12) && got <= hi * (1.0 + 1e-12), "p={p}: {got} not in [{lo}, {hi}]");
    }
}

#[test]
fn deterministic_areas() {
    let n = 1024;
    let t: Vec<f64> = (0..=n).map(|m| m as f64 / n as f64).collect();
    let t2: Vec<f64> = t.iter().map(|x| x * x).collect();
    assert!(levy_area_dyadic(&t, &t, 0, n, 6).unwrap().abs() < 1e-15);
    let mut prev = f64::NAN;
    for level in 1..=10 {
        let a = levy_area_dyadic(&t, &t2, 0, n, level).unwrap();
        // ∫₀¹t²dt − ½ = −1/6, approached at the trapezoid rate
        assert!((a + 1.0 / 6.0).abs() <= 4f64.powi(-(level as i32)), "L={level}: {a}");
        if level > 1 {
            assert!((a - prev).abs() <= 4f64.powi(-(level as i32 - 1)));
        }
        prev = a;
    }
    assert!(levy_area_dyadic(&t, &t2, 0, 1000, 4).is_err());
    assert!(levy_area_dyadic(&t, &t2, 512, 1024, 2).is_err());
}

#[test]
fn sampled_areas_are_additive_and_antisymmetric() {
    let ens = sample_fbm(0.2, FbmGrid::standard(), 6, 2).unwrap();
    let (a, b) = (ens.path(1, 0), ens.path(1, 1));
    // finest level on each piece, so the polygons share nodes
    let (s, t, u) = (0usize, 1024, 2048);
    let whole = levy_area_dyadic(&a, &b, s, u - s, 11).unwrap();
    let left = levy_area_dyadic(&a, &b, s, t - s, 10).unwrap();
    let right = levy_area_dyadic(&a, &b, t, u - t, 10).unwrap();
    let (d1l, d2l) = (a[t] - a[s], b[t] - b[s]);
    let (d1r, d2r) = (a[u] - a[t], b[u] - b[t]);
    let cross = 0.5 * (d2l * d1r - d1l * d2r);
    assert!((whole - (left + right + cross)).abs() < 1e-12);
    let swapped = levy_area_dyadic(&b, &a, s, u - s, 11).unwrap();
    assert!((whole + swapped).abs() < 1e-14);
}

/// `Cov(B(a,b), B(c,d))` for the fractional field.
fn inc_cov(alpha: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let f = |x: f64| x.abs().powf(2.0 * alpha);
    0.5 * (f(d - a) + f(c - b) - f(d - b) - f(c - a))
}

/// `E(A_{L+1} − A_L)²` on `[0,1]`: midpoint refinements summed over pieces,
/// fourth moments factorized over the two independent components.
fn exact_refinement(alpha: f64, level: u32) -> f64 {
    let pieces = 1usize << level;
    let d = 1.0 / pieces as f64;
    let left = |p: usize| (p as f64 * d, (p as f64 + 0.5) * d);
    let right = |p: usize| ((p as f64 + 0.5) * d, (p as f64 + 1.0) * d);
    let mut total = 0.0;
    for p in 0..pieces {
        for q in 0..pieces {
            let g = |x: (f64, f64), y: (f64, f64)| inc_cov(alpha, x.0, x.1, y.0, y.1);
            total += g(left(p), left(q)) * g(right(p), right(q)) - g(left(p), right(q)) * g(right(p), left(q));
        }
    }
    0.5 * total
}

#[test]
fn coutin_qian_threshold() {
    let cfg = CoutinQianConfig::default();
    let scans = coutin_qian_scan(&cfg).unwrap();
    for s in &scans {
        for r in &s.rows {
            let exact = exact_refinement(s.alpha, r.level);
            assert!(
                (r.refinement - exact).abs() < 5.0 * r.refinement_stderr + 0.02 * exact,
                "α={} L={}: {} vs {exact}",
                s.alpha,
                r.level,
                r.refinement
            );
        }
        if s.alpha < 0.25 {
            assert_eq!(s.verdict, Verdict::Divergent);
            assert!((s.slope - (1.0 - 4.0 * s.alpha)).abs() <= 0.1, "{s:?}");
        } else {
            assert_eq!(s.verdict, Verdict::Convergent);
            assert!(s.ratio < CAUCHY_RATIO);
        }
    }
    let a35 = scans.iter().find(|s| s.alpha == 0.35).unwrap();
    assert!(a35.ratio < 0.8);
}

#[test]
fn quarter_is_the_logarithmic_boundary() {
    let cfg = CoutinQianConfig { alphas: vec![0.25], paths: 200, seed: 1, ..Default::default() };
    let s = &coutin_qian_scan(&cfg).unwrap()[0];
    assert!(s.slope.abs() < 3.0 * s.slope_stderr + 0.02, "{s:?}");
    // V_L grows by a roughly constant amount per level
    let steps: Vec<f64> = s.rows.windows(2).map(|w| w[1].variance - w[0].variance).collect();
    assert!(steps.iter().all(|&d| d > 0.0));
    let (m, _) = mean_se(&steps);
    let lin = s.rows.iter().map(|r| r.level as f64).collect::<Vec<_>>();
    let fit = cqft::powercount::least_squares_slope(&lin, &s.rows.iter().map(|r| r.variance).collect::<Vec<_>>());
    assert!((fit - m).abs() < 0.25 * m);
}

#[test]
fn normal_ordering_bookkeeping() {
    let ens = sample_fbm(0.2, FbmGrid::standard(), 7, 1).unwrap();
    let g = ens.grid();
    let t = ens.transform();
    let (c1, c2) = (ens.components(0, 0), ens.components(0, 1));
    let no = fourier_normal_order(&c1, &c2, &g, t);
    let swapped = fourier_normal_order(&c2, &c1, &g, t);
    assert_eq!(swapped.plus, no.minus);
    assert_eq!(swapped.minus, no.plus);
    let sum = |c: &[Vec<f64>]| -> Vec<f64> { (0..g.size).map(|m| c.iter().map(|x| x[m]).sum()).collect() };
    let (f1, f2) = (sum(&c1), sum(&c2));
    let (d1, d2) = (t.derivative(&g, &f1), t.derivative(&g, &f2));
    let scale = d1.iter().map(|x| x.abs()).fold(0.0, f64::max) * f2.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for m in 0..g.size {
        let prod = d1[m] * f2[m];
        assert!((no.plus[m] + no.plus_rest[m] - prod).abs() < 1e-8 * scale);
        let leibniz = d1[m] * f2[m] + f1[m] * d2[m];
        assert!((no.plus[m] + no.plus_rest[m] + no.minus[m] + no.minus_rest[m] - leibniz).abs() < 1e-8 * scale);
    }
    // one scale kept: the j<k sum is empty
    let k = 8;
    let one = fourier_normal_order(&c1[k..=k], &c2[k..=k], &g, t);
    let dk = t.derivative(&g, &c1[k]);
    for m in (0..g.size).step_by(31) {
        assert!((one.plus[m] - 0.5 * dk[m] * c2[k][m]).abs() < 1e-14 * (1.0 + scale));
    }
}

#[test]
fn plus_spectrum_matches_convolution_oracle() {
    let ens = sample_fbm(0.2, FbmGrid::standard(), 8, 64).unwrap();
    let g = ens.grid();
    let n = g.size;
    let lib = ens.plus_spectrum();
    let spec: Vec<Vec<f64>> = ens.scales().map(|j| ens.sliced.slice_spectrum(j).unwrap().to_vec()).collect();
    // direct cyclic convolution at a few bins
    for &b in &[100usize, 1000] {
        let mut s = 0.0;
        for k1 in 0..n {
            let k2 = (b + n - k1) % n;
            let xi = g.frequency(k1);
            let dk = if 2 * k1 == n { 0.0 } else { xi * xi };
            for (j, sj) in spec.iter().enumerate() {
                for (jp, sjp) in spec.iter().enumerate().skip(j) {
                    let w2 = if j == jp { 0.25 } else { 1.0 };
                    s += w2 * dk * sj[k1] * sjp[k2];
                }
            }
        }
        let s = s / g.length();
        assert!((lib[b] - s).abs() < 1e-9 * s, "bin {b}: {} vs {s}", lib[b]);
    }
    let emp = ens.empirical_plus_spectrum(64);
    for b in [128usize, 256, 512, 1024, 2048, 4096] {
        let (lo, hi) = (b - b / 8, b + b / 8);
        let r = emp[lo..hi].iter().sum::<f64>() / lib[lo..hi].iter().sum::<f64>();
        assert!((r - 1.0).abs() < 0.1, "bin {b}: {r}");
    }
}

#[test]
fn remainder_is_holder() {
    let alpha = 0.2;
    let ens = sample_fbm(alpha, FbmGrid::standard(), 9, 16).unwrap();
    let rows = ens.remainder_variance(16, &[16, 32, 64, 128, 256]);
    assert!(fit_exponent(&rows) >= 4.0 * alpha - 0.1);
}

#[test]
fn renormalized_area_regularity() {
    let cfg = AreaExperimentConfig::default();
    let rep = renormalized_area_experiment(&cfg).unwrap();
    assert!((rep.limit.exponent - 0.8).abs() <= 0.08, "{}", rep.limit.exponent);
    for (s, e) in rep.limit.sampled.iter().zip(&rep.limit.exact) {
        assert!((s.1 - e.1).abs() < 5.0 * s.2, "{s:?} vs {e:?}");
    }
    for r in &rep.lambda_doubling {
        assert!((r - 4.0).abs() < 1e-10);
    }
    // finite cut-offs approach the limit density
    let gaps: Vec<f64> = rep.rows.iter().map(|r| r.density_gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    let s = 1.0 - 4.0 * cfg.alpha;
    let xi = 10.0;
    let gap = |rho: f64| {
        cqft::rgflow::limiting_area_covariance(xi, 1.0, cfg.alpha)
            - cqft::rgflow::renormalized_area_covariance(xi, rho, 1.0, cfg.alpha, 2.0)
    };
    assert!((gap(31.0) / gap(30.0) / 2f64.powf(-s) - 1.0).abs() < 0.01);
    assert!(renormalized_area_experiment(&AreaExperimentConfig { alpha: 0.3, ..cfg.clone() }).is_err());
    assert!(renormalized_area_experiment(&AreaExperimentConfig { lambda: 1.5, ..cfg }).is_err());
}

#[test]
fn boundary_term_is_order_one_at_the_cutoff_and_vanishes_below() {
    let (alpha, m) = (0.2, 2.0);
    // trapezoid oracle for Var(σ⁰) = (1/π)∫ χ(ξ) ξ^{4α−1} dξ over [1/2, 2]
    let bump = cqft::scales::BumpSpec::standard(m);
    let steps = 200_000;
    let (a, b) = (0.5f64, 2.0f64);
    let h = (b - a) / steps as f64;
    let f = |x: f64| bump.rise(x) * (1.0 - bump.rise(x / m)) * x.powf(4.0 * alpha - 1.0);
    let trap: f64 =
        (0..=steps).map(|i| f(a + i as f64 * h) * if i == 0 || i == steps { 0.5 } else { 1.0 }).sum::<f64>() * h / std::f64::consts::PI;
    assert!((sigma_slice_variance(alpha, 0, m) - trap).abs() < 1e-8 * trap);

    let mut at_cutoff = Vec::new();
    for rho in [5, 10, 20] {
        let p = boundary_term_profile(alpha, 1.0, rho, m).unwrap();
        at_cutoff.push(p.rows.last().unwrap().magnitude);
        for r in &p.ratios {
            assert!((r / p.predicted_ratio - 1.0).abs() < 1e-8);
        }
        let row = &p.rows[3];
        let g = GaussianVector::new(&[vec![row.variance]]).unwrap();
        assert!((wick_moment(&g, &[0; 6]).unwrap() - row.sixth_moment).abs() < 1e-10 * row.sixth_moment);
        assert!(p.rows[0].magnitude < 1e-2 * p.rows.last().unwrap().magnitude || rho < 10);
    }
    assert!(at_cutoff.iter().all(|&x| (x / at_cutoff[0] - 1.0).abs() < 1e-8 && x > 1e-3 && x < 1e3));
    let small = boundary_term_profile(alpha, 0.1, 10, m).unwrap();
    let unit = boundary_term_profile(alpha, 1.0, 10, m).unwrap();
    assert!((small.rows[4].magnitude / unit.rows[4].magnitude - 1e-3).abs() < 1e-15);
    assert!(boundary_term_profile(0.1, 1.0, 10, m).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chen_relation_and_antisymmetry(
        x1 in prop::collection::vec(-5.0f64..5.0, 17),
        x2 in prop::collection::vec(-5.0f64..5.0, 17),
        cut in 1usize..16,
    ) {
        let whole = polygon_area(&x1, &x2);
        let l = polygon_area(&x1[..=cut], &x2[..=cut]);
        let r = polygon_area(&x1[cut..], &x2[cut..]);
        let (d1l, d2l) = (x1[cut] - x1[0], x2[cut] - x2[0]);
        let (d1r, d2r) = (x1[16] - x1[cut], x2[16] - x2[cut]);
        prop_assert!((whole - (l + r + 0.5 * (d2l * d1r - d1l * d2r))).abs() < 1e-10);
        prop_assert!((whole + polygon_area(&x2, &x1)).abs() < 1e-10);
    }
}
