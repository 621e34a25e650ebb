//! Truncated formal power series in one variable with rational coefficients.

use num_traits::{One, Zero};

use crate::poly::{rat_int, Rat};

/// Coefficients `c[k]` of `Σ c_k x^k`, truncated at `len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Series(pub Vec<Rat>);

impl Series {
    pub fn zero(len: usize) -> Self {
        Series(vec![Rat::zero(); len])
    }

    pub fn one(len: usize) -> Self {
        let mut s = Series::zero(len);
        if len > 0 {
            s.0[0] = Rat::one();
        }
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, other: &Series) -> Series {
        Series(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn mul(&self, other: &Series) -> Series {
        let n = self.len().min(other.len());
        let mut out = vec![Rat::zero(); n];
        for (i, a) in self.0.iter().enumerate().take(n) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.0.iter().enumerate().take(n - i) {
                out[i + j] += a * b;
            }
        }
        Series(out)
    }

    /// Logarithm; requires constant term 1.
    pub fn log(&self) -> Series {
        assert!(self.0[0].is_one(), "log needs unit constant term");
        let n = self.len();
        // (log f)' = f'/f  =>  k g_k = k f_k - Σ_{i=1}^{k-1} i g_i f_{k-i}
        let mut g = vec![Rat::zero(); n];
        for k in 1..n {
            let mut acc = rat_int(k as i64) * &self.0[k];
            for i in 1..k {
                acc -= rat_int(i as i64) * &g[i] * &self.0[k - i];
            }
            g[k] = acc / rat_int(k as i64);
        }
        Series(g)
    }

    /// Exponential; requires constant term 0.
    pub fn exp(&self) -> Series {
        assert!(self.0[0].is_zero(), "exp needs zero constant term");
        let n = self.len();
        // f' = g' f  =>  k f_k = Σ_{i=1}^{k} i g_i f_{k-i}
        let mut f = vec![Rat::zero(); n];
        if n > 0 {
            f[0] = Rat::one();
        }
        for k in 1..n {
            let mut acc = Rat::zero();
            for i in 1..=k {
                acc += rat_int(i as i64) * &self.0[i] * &f[k - i];
            }
            f[k] = acc / rat_int(k as i64);
        }
        Series(f)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + crate::poly::rat_to_f64(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    #[test]
    fn log_exp_roundtrip() {
        let s = Series(vec![rat(1, 1), rat(-3, 1), rat(105, 2), rat(-7, 5)]);
        assert_eq!(s.log().exp(), s);
    }

    #[test]
    fn log_of_geometric() {
        // log(1/(1-x)) = x + x^2/2 + x^3/3
        let s = Series(vec![rat(1, 1); 4]);
        assert_eq!(s.log().0, vec![rat(0, 1), rat(1, 1), rat(1, 2), rat(1, 3)]);
    }
}
