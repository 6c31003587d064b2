use crate::error::{Error, Result};

/// Central-difference gradient `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error used for gradient certification:
/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_at_three() {
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn tanh_at_zero() {
        let g = finite_diff_gradient(|x| x[0].tanh(), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_objective_is_error() {
        let r = finite_diff_gradient(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn quadratic_form_gradient(vals in proptest::collection::vec(-2.0f64..2.0, 9 + 3)) {
            // symmetric A from the first 9 entries, x from the last 3
            let n = 3;
            let mut a = [[0.0; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = 0.5 * (vals[i * n + j] + vals[j * n + i]);
                }
            }
            let x = &vals[9..];
            let f = |v: &[f64]| {
                let mut s = 0.0;
                for i in 0..n { for j in 0..n { s += v[i] * a[i][j] * v[j]; } }
                0.5 * s
            };
            let g = finite_diff_gradient(f, x, 1e-5).unwrap();
            for i in 0..n {
                let exact: f64 = (0..n).map(|j| a[i][j] * x[j]).sum();
                prop_assert!(relative_error(g[i], exact, 1e-3) < 1e-6);
            }
        }
    }
}
