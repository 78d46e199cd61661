//! Reference computations used only by tests. Each routine is written
//! independently of the library code it checks.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Legendre nodes and weights on [-1, 1] via Golub–Welsch, sorted by node.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let k_f = k as f64;
        let b = k_f / (4.0 * k_f * k_f - 1.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Legendre polynomial P_n by explicit power-series coefficients
/// (Rodrigues expansion), independent of the three-term recurrence.
pub fn legendre_explicit(n: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..=n / 2 {
        let c = binom(n, k) * binom(2 * n - 2 * k, n) * if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += c * x.powi((n - 2 * k) as i32);
    }
    sum / 2f64.powi(n as i32)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha` (Smirnov series inverse
/// for the common levels).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let c = match alpha {
        a if (a - 0.01).abs() < 1e-12 => 1.627_6,
        a if (a - 0.05).abs() < 1e-12 => 1.358_1,
        a if (a - 0.10).abs() < 1e-12 => 1.223_8,
        _ => panic!("unsupported KS significance level {alpha}"),
    };
    c / (n as f64).sqrt()
}

/// Fully chaotic logistic map orbit `x ← 4x(1−x)`.
pub fn logistic_orbit(x0: f64, n: usize) -> Vec<f64> {
    let mut x = x0;
    (0..n)
        .map(|_| {
            x = 4.0 * x * (1.0 - x);
            x
        })
        .collect()
}

/// Empirical quantile by the definition `Q(p) = x_(k)`, interpolated linearly
/// between order statistics at position `p·(n−1)`, computed without sorting
/// the whole input (k-th order statistics by counting).
pub fn brute_quantile(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let order_stat = |k: usize| -> f64 {
        *values
            .iter()
            .find(|&&v| {
                let below = values.iter().filter(|&&u| u < v).count();
                let equal = values.iter().filter(|&&u| u == v).count();
                below <= k && k < below + equal
            })
            .expect("order statistic exists")
    };
    let a = order_stat(lo);
    if lo + 1 >= n {
        return a;
    }
    a + (h - lo as f64) * (order_stat(lo + 1) - a)
}

/// Pearson correlation of two equally long columns.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
