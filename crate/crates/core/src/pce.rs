//! Polynomial chaos surrogate in an orthonormal Legendre basis, fitted by
//! least-squares regression on model evaluations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::RandomInputSpec;

/// Orthonormal Legendre polynomial `sqrt(2n + 1) P_n(xi)` under the density
/// `1/2` on `[-1, 1]`.
pub fn legendre_1d(n: usize, xi: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return 1.0;
    }
    let mut cur = xi;
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * xi * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    ((2 * n + 1) as f64).sqrt() * cur
}

/// `[psi_0(xi), .., psi_degree(xi)]` in one recurrence sweep.
pub fn legendre_table(degree: usize, xi: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(xi);
    }
    for k in 1..degree {
        let next = ((2 * k + 1) as f64 * xi * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
        p.push(next);
    }
    for (n, v) in p.iter_mut().enumerate() {
        *v *= ((2 * n + 1) as f64).sqrt();
    }
    p
}

/// Per-coordinate polynomial degrees of one basis term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zeros(m: usize) -> Self {
        MultiIndex(vec![0; m])
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }
}

/// All multi-indices of total degree `<= p`, graded by degree; within a degree
/// the first coordinate varies slowest, largest first.
pub fn total_degree_set(m: usize, p: usize) -> Vec<MultiIndex> {
    fn fill(prefix: &mut Vec<usize>, slots: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for d in (0..=remaining).rev() {
            prefix.push(d);
            fill(prefix, slots - 1, remaining - d, out);
            prefix.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(m + p, p));
    let mut prefix = Vec::with_capacity(m);
    for degree in 0..=p {
        fill(&mut prefix, m, degree, &mut out);
    }
    out
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Product of 1-d orthonormal Legendre values over the coordinates.
pub fn basis_eval(idx: &MultiIndex, xi: &[f64]) -> Result<f64> {
    if idx.dim() != xi.len() {
        return Err(Error::DimensionMismatch { expected: idx.dim(), got: xi.len() });
    }
    Ok(idx.0.iter().zip(xi).map(|(&d, &x)| legendre_1d(d, x)).product())
}

/// Evaluates every basis term at one standardized point, sharing 1-d tables.
fn basis_row(indices: &[MultiIndex], degree: usize, xi: &[f64]) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = xi.iter().map(|&x| legendre_table(degree, x)).collect();
    indices
        .iter()
        .map(|idx| idx.0.iter().zip(&tables).map(|(&d, t)| t[d]).product())
        .collect()
}

/// Regression quality indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// 2-norm condition number of the design matrix.
    pub condition: f64,
    /// Normalised leave-one-out error, `sum(e_loo^2) / sum((y - mean)^2)`.
    pub loo: f64,
    pub n_samples: usize,
    pub rank: usize,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Minimum ratio of samples to basis terms.
    pub oversampling: f64,
    /// Condition numbers above this raise the ill-conditioning flag.
    pub condition_limit: f64,
    /// Turn the ill-conditioning warning into an error.
    pub strict: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { oversampling: 2.0, condition_limit: 1e8, strict: false }
    }
}

/// Fitted polynomial chaos expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct PceSurrogate {
    spec: RandomInputSpec,
    indices: Vec<MultiIndex>,
    coeffs: Vec<f64>,
    degree: usize,
    diagnostics: FitDiagnostics,
}

/// Householder QR with Businger–Golub column pivoting, `A P = Q R`.
struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above it.
    packed: DMatrix<f64>,
    /// Householder scalars `tau_k` with `H_k = I - tau_k v_k v_k^T`, `v_k[0] = 1`.
    tau: Vec<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
}

impl PivotedQr {
    fn new(mut a: DMatrix<f64>) -> Self {
        let (n, p) = a.shape();
        let kmax = n.min(p);
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = Vec::with_capacity(kmax);
        for k in 0..kmax {
            let (best, _) = (k..p)
                .map(|j| (j, a.view((k, j), (n - k, 1)).norm_squared()))
                .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = a.view((k, k), (n - k, 1)).norm();
            if norm == 0.0 {
                tau.push(0.0);
                continue;
            }
            let x0 = a[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            for i in k + 1..n {
                a[(i, k)] /= v0;
            }
            let t = (alpha - x0) / alpha;
            a[(k, k)] = alpha;
            // Apply H_k to the trailing columns.
            for j in k + 1..p {
                let mut dot = a[(k, j)];
                for i in k + 1..n {
                    dot += a[(i, k)] * a[(i, j)];
                }
                let s = t * dot;
                a[(k, j)] -= s;
                for i in k + 1..n {
                    let vi = a[(i, k)];
                    a[(i, j)] -= s * vi;
                }
            }
            tau.push(t);
        }
        PivotedQr { packed: a, tau, perm }
    }

    fn apply_qt(&self, y: &mut DVector<f64>) {
        let n = self.packed.nrows();
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut dot = y[k];
            for i in k + 1..n {
                dot += self.packed[(i, k)] * y[i];
            }
            let s = t * dot;
            y[k] -= s;
            for i in k + 1..n {
                y[i] -= s * self.packed[(i, k)];
            }
        }
    }

    /// Thin `Q` (n x p).
    fn thin_q(&self) -> DMatrix<f64> {
        let n = self.packed.nrows();
        let p = self.tau.len();
        let mut q = DMatrix::<f64>::zeros(n, p);
        for j in 0..p {
            q[(j, j)] = 1.0;
        }
        for k in (0..p).rev() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            for j in 0..p {
                let mut dot = q[(k, j)];
                for i in k + 1..n {
                    dot += self.packed[(i, k)] * q[(i, j)];
                }
                let s = t * dot;
                q[(k, j)] -= s;
                for i in k + 1..n {
                    q[(i, j)] -= s * self.packed[(i, k)];
                }
            }
        }
        q
    }

    fn r(&self) -> DMatrix<f64> {
        let p = self.tau.len();
        DMatrix::from_fn(p, self.packed.ncols(), |i, j| if j >= i { self.packed[(i, j)] } else { 0.0 })
    }

    /// Numerical rank from the decay of `|R_kk|`.
    fn rank(&self) -> usize {
        let r00 = self.packed[(0, 0)].abs();
        if r00 == 0.0 {
            return 0;
        }
        let tol = r00 * f64::EPSILON * self.packed.nrows().max(self.packed.ncols()) as f64;
        (0..self.tau.len()).take_while(|&k| self.packed[(k, k)].abs() > tol).count()
    }

    /// Basic least-squares solution using the leading `rank` pivoted columns.
    fn solve(&self, y: &[f64], rank: usize) -> Vec<f64> {
        let mut qty = DVector::from_column_slice(y);
        self.apply_qt(&mut qty);
        let mut z = vec![0.0; self.packed.ncols()];
        for i in (0..rank).rev() {
            let mut s = qty[i];
            for j in i + 1..rank {
                s -= self.packed[(i, j)] * z[j];
            }
            z[i] = s / self.packed[(i, i)];
        }
        let mut c = vec![0.0; z.len()];
        for (k, &col) in self.perm.iter().enumerate() {
            c[col] = z[k];
        }
        c
    }
}

/// Least-squares PCE fit of `y` against samples `x` (physical space, columns
/// in `spec` entry order) with a total-degree basis of degree `degree`.
pub fn fit_least_squares(
    spec: &RandomInputSpec,
    x: &[Vec<f64>],
    y: &[f64],
    degree: usize,
    options: &FitOptions,
) -> Result<PceSurrogate> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("model output {bad} is not finite")));
    }
    let indices = total_degree_set(spec.dim(), degree);
    let terms = indices.len();
    let required = ((options.oversampling * terms as f64).ceil() as usize).max(terms);
    if x.len() < required {
        return Err(Error::Underdetermined { samples: x.len(), required });
    }

    let rows: Vec<Vec<f64>> = x
        .par_iter()
        .map(|row| Ok(basis_row(&indices, degree, &spec.to_standard(row)?)))
        .collect::<Result<_>>()?;
    let n = rows.len();
    let design = DMatrix::from_fn(n, terms, |i, j| rows[i][j]);

    let qr = PivotedQr::new(design.clone());
    let rank = qr.rank();
    let coeffs = qr.solve(y, rank);

    let condition = if rank < terms {
        f64::INFINITY
    } else {
        let sv = qr.r().singular_values();
        sv.max() / sv.min()
    };
    let ill_conditioned = !(condition <= options.condition_limit);
    if ill_conditioned {
        if options.strict {
            return Err(Error::IllConditioned { condition });
        }
        log::warn!("PCE design matrix is ill-conditioned (condition {condition:.3e})");
    }

    let q = qr.thin_q();
    let fitted = &design * DVector::from_column_slice(&coeffs);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut press = 0.0;
    let mut spread = 0.0;
    for i in 0..n {
        let h: f64 = q.row(i).iter().take(rank).map(|v| v * v).sum();
        let e = (y[i] - fitted[i]) / (1.0 - h).max(f64::EPSILON);
        press += e * e;
        spread += (y[i] - y_mean).powi(2);
    }
    let loo = if spread > 0.0 { press / spread } else { press / n as f64 };

    Ok(PceSurrogate {
        spec: spec.clone(),
        indices,
        coeffs,
        degree,
        diagnostics: FitDiagnostics { condition, loo, n_samples: n, rank, ill_conditioned },
    })
}

impl PceSurrogate {
    pub fn spec(&self) -> &RandomInputSpec {
        &self.spec
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Coefficient of a given multi-index, if it is in the truncation set.
    pub fn coeff_of(&self, idx: &MultiIndex) -> Option<f64> {
        self.indices.iter().position(|i| i == idx).map(|k| self.coeffs[k])
    }

    /// Evaluates the expansion at a physical-space point.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let xi = self.spec.to_standard(x)?;
        Ok(self.predict_standard(&xi))
    }

    /// Evaluates the expansion at a point of `[-1, 1]^M`.
    pub fn predict_standard(&self, xi: &[f64]) -> f64 {
        basis_row(&self.indices, self.degree, xi)
            .iter()
            .zip(&self.coeffs)
            .map(|(b, c)| b * c)
            .sum()
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn variance(&self) -> f64 {
        self.coeffs[1..].iter().map(|c| c * c).sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn loo_error(&self) -> f64 {
        self.diagnostics.loo
    }

    /// Serializes the surrogate as a JSON document.
    pub fn to_document(&self) -> String {
        let doc = SurrogateDocument {
            format: DOCUMENT_FORMAT.to_string(),
            spec: self.spec.clone(),
            degree: self.degree,
            indices: self.indices.clone(),
            coeffs: self.coeffs.clone(),
            diagnostics: self.diagnostics,
        };
        serde_json::to_string_pretty(&doc).expect("surrogate document serializes")
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let doc: SurrogateDocument =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format != DOCUMENT_FORMAT {
            return Err(Error::Format(format!("unsupported format `{}`", doc.format)));
        }
        let spec = RandomInputSpec::from_parts(doc.spec.entries().to_vec(), doc.spec.fixed().clone())?;
        if doc.indices.len() != doc.coeffs.len() {
            return Err(Error::Format("indices and coefficients differ in length".into()));
        }
        match doc.indices.first() {
            Some(first) if first.is_zero() && first.dim() == spec.dim() => {}
            _ => return Err(Error::Format("first multi-index must be all zeros".into())),
        }
        if doc.indices.iter().any(|i| i.dim() != spec.dim() || i.total_degree() > doc.degree) {
            return Err(Error::Format("multi-index inconsistent with dimension or degree".into()));
        }
        Ok(PceSurrogate {
            spec,
            indices: doc.indices,
            coeffs: doc.coeffs,
            degree: doc.degree,
            diagnostics: doc.diagnostics,
        })
    }
}

const DOCUMENT_FORMAT: &str = "harvester-pce/1";

#[derive(Serialize, Deserialize)]
struct SurrogateDocument {
    format: String,
    spec: RandomInputSpec,
    degree: usize,
    indices: Vec<MultiIndex>,
    coeffs: Vec<f64>,
    diagnostics: FitDiagnostics,
}
