//! Tridiagonal linear algebra: Thomas solves and a Sturm-sequence
//! eigensolver for symmetric tridiagonal matrices.

use crate::error::{Error, Result};

/// Solve `A x = r` with `A` given by `sub[i] = A[i+1][i]`, `diag`,
/// `sup[i] = A[i][i+1]`. Returns `None` on a zero pivot.
pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    debug_assert!(n == 0 || (sub.len() == n - 1 && sup.len() == n - 1));
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return None;
    }
    d[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i - 1] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return None;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Symmetric tridiagonal matrix: `diag` and `off[i] = T[i][i+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        SymTridiag { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `shift` (Sturm count).
    pub fn count_below(&self, shift: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - shift;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let denom = if q == 0.0 {
                f64::EPSILON * self.scale()
            } else {
                q
            };
            q = self.diag[i] - shift - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn scale(&self) -> f64 {
        self.diag
            .iter()
            .chain(self.off.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE)
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k` smallest eigenvalues by bisection on the Sturm count.
    pub fn lowest_eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if k > n {
            return Err(Error::SpectrumFailed(format!(
                "asked for {k} of {n} eigenvalues"
            )));
        }
        let (lo, hi) = self.gershgorin();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::SpectrumFailed("non-finite matrix entries".into()));
        }
        let tol = 4.0 * f64::EPSILON * self.scale();
        (0..k)
            .map(|j| {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.count_below(mid) > j {
                        b = mid;
                    } else {
                        a = mid;
                    }
                    if b - a <= tol.max(f64::EPSILON * mid.abs()) {
                        break;
                    }
                }
                Ok(0.5 * (a + b))
            })
            .collect()
    }

    /// Unit eigenvector for an (accurate) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let shift = lambda + 1e-10 * self.scale().max(1.0);
        let sub = self.off.clone();
        let sup = self.off.clone();
        let diag: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.01 * ((i * 7919 % 101) as f64))
            .collect();
        for _ in 0..4 {
            x = solve(&sub, &diag, &sup, &x)
                .ok_or_else(|| Error::SpectrumFailed("singular shifted system".into()))?;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::SpectrumFailed("inverse iteration broke down".into()));
            }
            x.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense() {
        let sub = [1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let sup = [0.3, 1.0, -1.0];
        let x_true = [1.0, -2.0, 3.0, 0.5];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = diag[i] * x_true[i];
                if i > 0 {
                    s += sub[i - 1] * x_true[i - 1];
                }
                if i < 3 {
                    s += sup[i] * x_true[i + 1];
                }
                s
            })
            .collect();
        let x = solve(&sub, &diag, &sup, &rhs).unwrap();
        for (a, b) in x.iter().zip(x_true) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn laplacian_spectrum() {
        // -d^2 on n interior points of (0, pi), h = pi/(n+1): 4/h^2 sin^2(k h/2)
        let n = 50;
        let h = std::f64::consts::PI / (n + 1) as f64;
        let t = SymTridiag::new(vec![2.0 / (h * h); n], vec![-1.0 / (h * h); n - 1]);
        let ev = t.lowest_eigenvalues(4).unwrap();
        for (k, e) in ev.iter().enumerate() {
            let exact = 4.0 / (h * h) * ((k + 1) as f64 * h / 2.0).sin().powi(2);
            assert!((e - exact).abs() < 1e-10 * exact, "{k}: {e} vs {exact}");
        }
        let v = t.eigenvector(ev[0]).unwrap();
        let r = t.apply(&v);
        let res: f64 = r
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - ev[0] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-8);
    }
}
