use crate::error::{Error, Result};

/// Thomas-algorithm workspace for tridiagonal systems of a fixed size.
///
/// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row `i` to
/// column `i + 1`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    c_prime: Vec<f64>,
    d_prime: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(n: usize) -> Self {
        Self { c_prime: vec![0.0; n], d_prime: vec![0.0; n] }
    }

    pub fn solve(
        &mut self,
        lower: &[f64],
        diag: &[f64],
        upper: &[f64],
        rhs: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let n = diag.len();
        if lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n || out.len() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: rhs.len().min(out.len()) });
        }
        if self.c_prime.len() != n {
            self.c_prime.resize(n, 0.0);
            self.d_prime.resize(n, 0.0);
        }
        let c = &mut self.c_prime;
        let d = &mut self.d_prime;

        if diag[0] == 0.0 {
            return Err(Error::SingularPivot(0));
        }
        c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
        d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i - 1] * c[i - 1];
            if m == 0.0 || !m.is_finite() {
                return Err(Error::SingularPivot(i));
            }
            c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
            d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
        }
        out[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = d[i] - c[i] * out[i + 1];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn matches_dense_elimination() {
        let lower = [3.0, 1.0, 3.0, -0.5];
        let diag = [10.0, 10.0, 7.0, 4.0, 6.0];
        let upper = [2.0, 4.0, 5.0, 1.5];
        let rhs = [3.0, 4.0, 5.0, 6.0, -1.0];
        let mut out = [0.0; 5];
        Tridiagonal::new(5).solve(&lower, &diag, &upper, &rhs, &mut out).unwrap();

        let mut a = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            a[i][i] = diag[i];
            if i > 0 {
                a[i][i - 1] = lower[i - 1];
            }
            if i < 4 {
                a[i][i + 1] = upper[i];
            }
        }
        let x = dense_solve(&mut a, &mut rhs.clone());
        for (u, v) in out.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_zero_pivot_and_bad_shapes() {
        let mut t = Tridiagonal::new(3);
        let mut out = [0.0; 3];
        assert!(t.solve(&[1.0, 1.0], &[0.0, 1.0, 1.0], &[1.0, 1.0], &[1.0; 3], &mut out).is_err());
        assert!(t.solve(&[1.0], &[1.0, 1.0, 1.0], &[1.0, 1.0], &[1.0; 3], &mut out).is_err());
    }
}
