//! Monte Carlo summary statistics.

use crate::scalar::Real;

pub fn mean<R: Real>(v: &[R]) -> R {
    if v.is_empty() {
        return R::zero();
    }
    v.iter().fold(R::zero(), |a, &x| a + x) / R::lit(v.len() as f64)
}

/// Standard error of the sample mean.
///
/// With `antithetic`, consecutive pairs are averaged first so the correlation
/// between `ξ` and `−ξ` is accounted for.
pub fn mean_std_error<R: Real>(v: &[R], antithetic: bool) -> R {
    if antithetic && v.len() >= 4 {
        let pairs: Vec<R> = v
            .chunks(2)
            .map(|c| c.iter().fold(R::zero(), |a, &x| a + x) / R::lit(c.len() as f64))
            .collect();
        return mean_std_error(&pairs, false);
    }
    let n = v.len();
    if n < 2 {
        return R::zero();
    }
    let m = mean(v);
    let ss = v.iter().fold(R::zero(), |a, &x| a + (x - m) * (x - m));
    (ss / R::lit((n - 1) as f64) / R::lit(n as f64)).sqrt()
}

/// `log Σ exp(a_i)` with max-shift.
pub fn logsumexp<R: Real>(a: &[R]) -> R {
    let m = a.iter().copied().fold(R::lit(f64::NEG_INFINITY), R::max);
    if !m.is_finite() {
        return m;
    }
    let s = a.iter().fold(R::zero(), |acc, &x| acc + (x - m).exp());
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_standard_error() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let se: f64 = mean_std_error(&v, false);
        assert!((se - (1.666_666_666_666_666_7_f64 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn antithetic_pairs_cancel() {
        // perfectly anticorrelated pairs around the same mean
        let v = [1.0, 3.0, 0.0, 4.0, 2.5, 1.5, -1.0, 5.0];
        assert_eq!(mean_std_error(&v, true), 0.0);
    }

    #[test]
    fn logsumexp_no_overflow() {
        let v = [1000.0, 1000.0];
        assert!((logsumexp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
