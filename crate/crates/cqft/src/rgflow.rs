//! Discrete RG flows: the infrared φ⁴ coupling with its counterterms, the
//! rough-path σ mass, resummed propagators and scalar domination bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RgError {
    #[error("parameter `{name}` = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), RgError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(RgError::OutOfRange { name, value, range })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Phi4Constants {
    pub c: f64,
    pub c_m: f64,
    pub c_z: f64,
    pub m: f64,
    /// coefficient of the optional `λ² M^{−2j}` mass increment
    #[serde(default)]
    pub two_loop: Option<f64>,
}

impl Default for Phi4Constants {
    fn default() -> Self {
        Phi4Constants { c: 1.0, c_m: 1.0, c_z: 1.0, m: 2.0, two_loop: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Phi4Trajectory {
    pub lambda0: f64,
    /// `λ^{−j}` for `j = 0..=J`
    pub lambda: Vec<f64>,
    /// the map left `[0, λ⁰]`
    pub diverged: bool,
}

/// Iterates `λ ← λ − cλ²` for `steps` scales.
pub fn flow_phi4(lambda0: f64, c: f64, steps: usize) -> Result<Phi4Trajectory, RgError> {
    check("lambda0", lambda0, lambda0 >= 0.0, "[0, ∞)")?;
    check("c", c, c > 0.0, "(0, ∞)")?;
    let mut lambda = Vec::with_capacity(steps + 1);
    let mut x = lambda0;
    let mut diverged = false;
    lambda.push(x);
    for _ in 0..steps {
        x -= c * x * x;
        if !(0.0..=lambda0).contains(&x) {
            diverged = true;
        }
        lambda.push(x);
    }
    Ok(Phi4Trajectory { lambda0, lambda, diverged })
}

/// `1/((1/λ⁰) + cj)`.
pub fn continuum_coupling(lambda0: f64, c: f64, j: f64) -> f64 {
    if lambda0 == 0.0 {
        0.0
    } else {
        1.0 / (1.0 / lambda0 + c * j)
    }
}

/// Extra scales summed directly before the analytic tail of `δZ₃`.
pub const WAVE_PAD: usize = 1_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct Counterterms {
    pub constants: Phi4Constants,
    /// `M^{2j}·(δm²)^{−j}`
    pub mass_scaled: Vec<f64>,
    /// `(δZ₃)^{−j}`
    pub wave: Vec<f64>,
}

impl Counterterms {
    pub fn mass(&self, j: usize) -> f64 {
        self.mass_scaled[j] * self.constants.m.powi(-2 * j as i32)
    }
}

/// Backward sums from the terminal conditions `(δm²)^{−∞} = (δZ₃)^{−∞} = 0`.
/// Sign convention: both are reported as the positive tail sums of the increments.
pub fn flow_counterterms(lambda0: f64, k: Phi4Constants, steps: usize) -> Result<Counterterms, RgError> {
    check("m", k.m, k.m > 1.0, "(1, ∞)")?;
    check("c_m", k.c_m, k.c_m > 0.0, "(0, ∞)")?;
    check("c_z", k.c_z, k.c_z > 0.0, "(0, ∞)")?;
    // the mass tail is geometric in M^{−2}; extend until it is below 1e-16 of the head
    let pad = (37.0 / (2.0 * k.m.ln())).ceil() as usize;
    let traj = flow_phi4(lambda0, k.c, steps + pad)?;
    let lam = &traj.lambda;
    let q = k.m.powi(-2);
    let mut mass_scaled = vec![0.0; steps + pad + 1];
    for j in (0..steps + pad).rev() {
        let mut inc = k.c_m * lam[j];
        if let Some(c2) = k.two_loop {
            inc += c2 * lam[j] * lam[j];
        }
        mass_scaled[j] = inc + q * mass_scaled[j + 1];
    }
    mass_scaled.truncate(steps + 1);
    // direct summation a further WAVE_PAD scales, then Σ_{k>J'} λ_k² by the integral test
    let deep = flow_phi4(lam[steps], k.c, WAVE_PAD)?;
    let last = deep.lambda[WAVE_PAD];
    let mut beyond = if last == 0.0 { 0.0 } else { k.c_z / (k.c * (1.0 / last + 0.5 * k.c)) };
    for x in deep.lambda[1..].iter().rev() {
        beyond += k.c_z * x * x;
    }
    let mut wave = vec![0.0; steps + 1];
    wave[steps] = beyond + k.c_z * lam[steps] * lam[steps];
    for j in (0..steps).rev() {
        wave[j] = wave[j + 1] + k.c_z * lam[j] * lam[j];
    }
    Ok(Counterterms { constants: k, mass_scaled, wave })
}

#[derive(Clone, Debug, Serialize)]
pub struct RoughPathFlow {
    pub alpha: f64,
    pub lambda: f64,
    pub m: f64,
    /// σ mass counterterm `(δm)^j = −2λ²(M^{js} − 1)/s`, `s = 1 − 4α`, for `j = 0..=ρ`
    pub delta_m: Vec<f64>,
    /// `bʲ = ((δm)^{j−1} − (δm)^j)/λ²`; `b[0]` is unused
    pub b: Vec<f64>,
}

/// Shell-by-shell σ mass from the bubble `∫_{1<|ξ|<M^j} |ξ|^{−4α} dξ`.
pub fn rough_flow(alpha: f64, lambda: f64, rho: usize, m: f64) -> Result<RoughPathFlow, RgError> {
    check("alpha", alpha, alpha > 0.125 && alpha < 0.25, "(1/8, 1/4)")?;
    check("lambda", lambda, lambda != 0.0, "ℝ∖{0}")?;
    check("m", m, m > 1.0, "(1, ∞)")?;
    let s = 1.0 - 4.0 * alpha;
    let l2 = lambda * lambda;
    let delta_m: Vec<f64> = (0..=rho).map(|j| -2.0 * l2 * (m.powf(j as f64 * s) - 1.0) / s).collect();
    let mut b = vec![0.0; rho + 1];
    for j in 1..=rho {
        b[j] = (delta_m[j - 1] - delta_m[j]) / l2;
    }
    Ok(RoughPathFlow { alpha, lambda, m, delta_m, b })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResummedPropagator {
    pub ratio: f64,
    pub partial_sums: Vec<f64>,
    pub closed_form: f64,
    pub convergent: bool,
}

/// `|ξ|^{−s} Σ_n (−λ² M^{ρs}/|ξ|^s)^n` against `1/(|ξ|^s + λ² M^{ρs})`.
pub fn renormalized_sigma_propagator(xi: f64, rho: f64, lambda: f64, alpha: f64, m: f64, terms: usize) -> ResummedPropagator {
    let s = 1.0 - 4.0 * alpha;
    let a = xi.abs().powf(s);
    let g = lambda * lambda * m.powf(rho * s);
    let ratio = g / a;
    let convergent = ratio < 1.0;
    let mut partial_sums = Vec::new();
    if convergent {
        let (mut acc, mut term) = (0.0, 1.0 / a);
        for _ in 0..terms {
            acc += term;
            partial_sums.push(acc);
            term *= -ratio;
        }
    }
    ResummedPropagator { ratio, partial_sums, closed_form: 1.0 / (a + g), convergent }
}

/// `M^{ρs}/(1 + λ²(M^ρ/|ξ|)^s)`.
pub fn renormalized_area_covariance(xi: f64, rho: f64, lambda: f64, alpha: f64, m: f64) -> f64 {
    let s = 1.0 - 4.0 * alpha;
    m.powf(rho * s) / (1.0 + lambda * lambda * (m.powf(rho) / xi.abs()).powf(s))
}

/// `|ξ|^s/λ²`.
pub fn limiting_area_covariance(xi: f64, lambda: f64, alpha: f64) -> f64 {
    xi.abs().powf(1.0 - 4.0 * alpha) / (lambda * lambda)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domination {
    /// `λ^κ |x| e^{−λx⁴}` against `λ^{κ−1/4}`
    Phi4 { kappa: f64, lambda: f64 },
    /// `λ^κ |x| e^{−λ² b x²}` against `λ^{κ−1}`
    SigmaMass { kappa: f64, lambda: f64, b: f64 },
    /// `λ|y| exp(−M^{−(12α−1)(ρ−j)} λ³ y⁶)` against `λ^{1/2} M^{(12α−1)(ρ−j)/6}`
    Boundary { alpha: f64, lambda: f64, m: f64, height: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub kind: Domination,
    pub sup: f64,
    pub argmax: f64,
    pub claimed: f64,
    /// `sup / claimed`
    pub constant: f64,
}

impl Domination {
    fn validate(&self) -> Result<(), RgError> {
        match *self {
            Domination::Phi4 { kappa, lambda } => {
                check("kappa", kappa, kappa > 0.25 && kappa < 1.0 / 3.0, "(1/4, 1/3)")?;
                check("lambda", lambda, lambda > 0.0 && lambda < 1.0, "(0, 1)")
            }
            Domination::SigmaMass { kappa, lambda, b } => {
                check("kappa", kappa, kappa > 0.0 && kappa < 1.0, "(0, 1)")?;
                check("lambda", lambda, lambda > 0.0 && lambda < 1.0, "(0, 1)")?;
                check("b", b, b > 0.0, "(0, ∞)")
            }
            Domination::Boundary { alpha, lambda, m, height } => {
                check("alpha", alpha, alpha > 0.125 && alpha < 0.25, "(1/8, 1/4)")?;
                check("lambda", lambda, lambda > 0.0 && lambda < 1.0, "(0, 1)")?;
                check("m", m, m > 1.0, "(1, ∞)")?;
                check("height", height, height >= 0.0, "[0, ∞)")
            }
        }
    }

    fn profile(&self, x: f64) -> f64 {
        match *self {
            Domination::Phi4 { kappa, lambda } => lambda.powf(kappa) * x * (-lambda * x.powi(4)).exp(),
            Domination::SigmaMass { kappa, lambda, b } => lambda.powf(kappa) * x * (-lambda * lambda * b * x * x).exp(),
            Domination::Boundary { alpha, lambda, m, height } => {
                let damp = m.powf(-(12.0 * alpha - 1.0) * height);
                lambda * x * (-damp * lambda.powi(3) * x.powi(6)).exp()
            }
        }
    }

    fn claimed(&self) -> f64 {
        match *self {
            Domination::Phi4 { kappa, lambda } => lambda.powf(kappa - 0.25),
            Domination::SigmaMass { kappa, lambda, .. } => lambda.powf(kappa - 1.0),
            Domination::Boundary { alpha, lambda, m, height } => lambda.sqrt() * m.powf((12.0 * alpha - 1.0) * height / 6.0),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Domination::Phi4 { lambda, .. } | Domination::SigmaMass { lambda, .. } | Domination::Boundary { lambda, .. } => lambda,
        }
    }

    pub fn with_lambda(&self, l: f64) -> Self {
        let mut out = *self;
        match &mut out {
            Domination::Phi4 { lambda, .. } | Domination::SigmaMass { lambda, .. } | Domination::Boundary { lambda, .. } => *lambda = l,
        }
        out
    }

    /// Exponent of λ in the claimed bound.
    pub fn claimed_exponent(&self) -> f64 {
        match *self {
            Domination::Phi4 { kappa, .. } => kappa - 0.25,
            Domination::SigmaMass { kappa, .. } => kappa - 1.0,
            Domination::Boundary { .. } => 0.5,
        }
    }
}

/// Maximizes a unimodal profile over `x > 0` by golden section in `log x`.
pub fn maximize_log_unimodal<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let g = |u: f64| f(u.exp());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..300 {
        if b - a < 1e-13 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
    }
    let u = 0.5 * (a + b);
    (u.exp(), g(u))
}

pub fn domination_check(kind: Domination) -> Result<DominationReport, RgError> {
    kind.validate()?;
    let (argmax, sup) = maximize_log_unimodal(|x| kind.profile(x), -60.0, 60.0);
    let claimed = kind.claimed();
    Ok(DominationReport { kind, sup, argmax, claimed, constant: sup / claimed })
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationSweep {
    pub reports: Vec<DominationReport>,
    /// least-squares slope of `log sup` against `log λ`
    pub slope: f64,
    pub claimed_exponent: f64,
}

pub fn domination_sweep(kind: Domination, lambdas: &[f64]) -> Result<DominationSweep, RgError> {
    let reports: Vec<DominationReport> = lambdas.iter().map(|&l| domination_check(kind.with_lambda(l))).collect::<Result<_, _>>()?;
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.sup.ln()).collect();
    let slope = crate::powercount::least_squares_slope(&xs, &ys);
    Ok(DominationSweep { reports, slope, claimed_exponent: kind.claimed_exponent() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step() {
        let t = flow_phi4(0.1, 1.0, 1).unwrap();
        assert!((t.lambda[1] - 0.09).abs() < 1e-15);
        assert!(flow_phi4(0.0, 3.0, 50).unwrap().lambda.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn large_coupling_flagged() {
        assert!(flow_phi4(1.5, 1.0, 10).unwrap().diverged);
        assert!(!flow_phi4(0.3, 1.0, 10).unwrap().diverged);
    }

    #[test]
    fn golden_section_on_linear_exponential() {
        // |x| e^{−A|x|} peaks at 1/A with value 1/(eA)
        let a = 3.0;
        let (x, v) = maximize_log_unimodal(|x| x * (-a * x).exp(), -30.0, 30.0);
        assert!((x - 1.0 / a).abs() < 1e-6);
        assert!((v - 1.0 / (std::f64::consts::E * a)).abs() < 1e-14);
        assert!(v <= 1.0 / a);
    }

    #[test]
    fn closed_form_half() {
        let p = renormalized_sigma_propagator(1.0, 0.0, 1.0, 0.2, 2.0, 10);
        assert!((p.closed_form - 0.5).abs() < 1e-15);
        assert!(!p.convergent && p.partial_sums.is_empty());
    }
}
