//! Maximum-entropy input model: independent uniform marginals on known supports.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{HarvesterParams, Param};
use crate::error::{Error, Result};

/// Uniform law on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformInterval {
    pub a: f64,
    pub b: f64,
}

impl UniformInterval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::BadSupport { a, b });
        }
        Ok(UniformInterval { a, b })
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.a..=self.b).contains(&x)
    }

    pub fn density(&self, x: f64) -> f64 {
        if self.contains(x) {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        ((x - self.a) / self.width()).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.midpoint()
    }

    pub fn variance(&self) -> f64 {
        self.width().powi(2) / 12.0
    }

    /// Differential entropy `ln(b - a)`.
    pub fn entropy(&self) -> f64 {
        self.width().ln()
    }

    /// Affine map onto `[-1, 1]`, the measure of the Legendre basis.
    pub fn to_standard(&self, x: f64) -> Result<f64> {
        let slack = 1e-12 * self.a.abs().max(self.b.abs()).max(1.0);
        if !(x >= self.a - slack && x <= self.b + slack) {
            return Err(Error::OutOfSupport { value: x, a: self.a, b: self.b });
        }
        if x == self.a {
            return Ok(-1.0);
        }
        if x == self.b {
            return Ok(1.0);
        }
        Ok(((x - self.midpoint()) / (0.5 * self.width())).clamp(-1.0, 1.0))
    }

    pub fn from_standard(&self, xi: f64) -> f64 {
        if xi == -1.0 {
            return self.a;
        }
        if xi == 1.0 {
            return self.b;
        }
        self.midpoint() + xi * 0.5 * self.width()
    }
}

/// Density tabulated on an ascending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if grid.len() < 2 {
            return Err(Error::EmptyInput);
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("density grid must be strictly ascending".into()));
        }
        Ok(TabulatedDensity { grid, values })
    }

    /// Samples `density` on `n` equally spaced nodes spanning `[a, b]`.
    pub fn from_fn(a: f64, b: f64, n: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let n = n.max(2);
        let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let values = grid.iter().map(|&x| density(x)).collect();
        Self::new(grid, values)
    }
}

fn trapezoid(grid: &[f64], values: impl Fn(usize) -> f64) -> f64 {
    grid.windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (values(i) + values(i + 1)))
        .sum()
}

/// Differential entropy `-∫ p ln p` by trapezoidal quadrature, with `0 ln 0 = 0`.
pub fn entropy(density: &TabulatedDensity) -> Result<f64> {
    if density.values.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParams("density must be finite and nonnegative".into()));
    }
    let integral = trapezoid(&density.grid, |i| density.values[i]);
    if (integral - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { integral });
    }
    let plogp = |i: usize| {
        let p = density.values[i];
        if p == 0.0 {
            0.0
        } else {
            p * p.ln()
        }
    };
    Ok(-trapezoid(&density.grid, plogp))
}

/// The maximum-entropy law when only the support `[a, b]` is known.
///
/// Stationarity of the Lagrangian `-∫ p ln p - (l0 - 1)(∫ p - 1)` gives a
/// constant density on the support, fixed to `1 / (b - a)` by normalisation.
pub fn maxent_uniform(a: f64, b: f64) -> Result<UniformInterval> {
    UniformInterval::new(a, b)
}

/// `[nominal (1 - spread), nominal (1 + spread)]`, ordered for negative nominals.
pub fn interval_from_nominal(nominal: f64, spread: f64) -> Result<UniformInterval> {
    interval_around(nominal, spread, None)
}

/// Like [`interval_from_nominal`], with an absolute half-width used when the
/// nominal value is zero.
pub fn interval_around(nominal: f64, spread: f64, half_width: Option<f64>) -> Result<UniformInterval> {
    if !(spread > 0.0 && spread < 1.0) {
        return Err(Error::InvalidParams(format!("spread must lie in (0, 1), got {spread}")));
    }
    if nominal == 0.0 {
        return match half_width {
            Some(h) => UniformInterval::new(-h, h),
            None => Err(Error::ZeroNominal),
        };
    }
    let lo = nominal * (1.0 - spread);
    let hi = nominal * (1.0 + spread);
    UniformInterval::new(lo.min(hi), lo.max(hi))
}

/// One uncertain parameter with its support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomEntry {
    pub param: Param,
    pub interval: UniformInterval,
}

/// Ordered uncertain parameters plus fixed values for everything else.
///
/// The entry order defines the column order of sample matrices and the
/// coordinate order of PCE multi-indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInputSpec {
    entries: Vec<RandomEntry>,
    fixed: BTreeMap<Param, f64>,
}

impl RandomInputSpec {
    /// Random `entries`; every other parameter is fixed at its value in `base`.
    pub fn new(entries: Vec<RandomEntry>, base: &HarvesterParams) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParams("at least one random parameter is required".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.param == e.param) {
                return Err(Error::InvalidParams(format!("parameter {} listed twice", e.param)));
            }
        }
        let fixed = Param::ALL
            .iter()
            .filter(|p| !entries.iter().any(|e| e.param == **p))
            .map(|&p| (p, base.get(p)))
            .collect();
        Ok(RandomInputSpec { entries, fixed })
    }

    /// Rebuilds a spec from its serialized parts, checking coverage and disjointness.
    pub fn from_parts(entries: Vec<RandomEntry>, fixed: BTreeMap<Param, f64>) -> Result<Self> {
        for p in Param::ALL {
            let random = entries.iter().filter(|e| e.param == p).count();
            let fixed_here = usize::from(fixed.contains_key(&p));
            if random + fixed_here != 1 {
                return Err(Error::InvalidParams(format!(
                    "parameter {p} must be either random or fixed exactly once"
                )));
            }
        }
        for e in &entries {
            UniformInterval::new(e.interval.a, e.interval.b)?;
        }
        Ok(RandomInputSpec { entries, fixed })
    }

    pub fn entries(&self) -> &[RandomEntry] {
        &self.entries
    }

    pub fn fixed(&self) -> &BTreeMap<Param, f64> {
        &self.fixed
    }

    /// Number of random parameters.
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.param.name()).collect()
    }

    pub fn position(&self, param: Param) -> Option<usize> {
        self.entries.iter().position(|e| e.param == param)
    }

    /// Full parameter vector for one row of a sample matrix.
    pub fn params_at(&self, row: &[f64]) -> Result<HarvesterParams> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: row.len() });
        }
        let mut params = HarvesterParams::default();
        for (&p, &v) in &self.fixed {
            params.set(p, v);
        }
        for (e, &v) in self.entries.iter().zip(row) {
            params.set(e.param, v);
        }
        Ok(params)
    }

    /// Maps a physical-space row onto `[-1, 1]^M`.
    pub fn to_standard(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: row.len() });
        }
        self.entries.iter().zip(row).map(|(e, &x)| e.interval.to_standard(x)).collect()
    }

    /// Same spec with the entries reordered by `order` (a permutation of `0..M`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.dim()];
        for &i in order {
            if i >= self.dim() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParams("not a permutation".into()));
            }
        }
        if order.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: order.len() });
        }
        Ok(RandomInputSpec {
            entries: order.iter().map(|&i| self.entries[i]).collect(),
            fixed: self.fixed.clone(),
        })
    }
}

/// Rows drawn per independent generator stream.
const ROWS_PER_STREAM: usize = 4096;

/// `n` i.i.d. rows, column `j` uniform on `spec.entries()[j]`.
///
/// Rows are produced in fixed-size blocks, each from its own ChaCha8 stream
/// keyed by `(seed, block index)`, so the result does not depend on how
/// many worker threads evaluate the blocks.
pub fn sample(spec: &RandomInputSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let blocks = n.div_ceil(ROWS_PER_STREAM);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let rows = ROWS_PER_STREAM.min(n - block * ROWS_PER_STREAM);
            (0..rows)
                .map(|_| {
                    spec.entries
                        .iter()
                        .map(|e| {
                            let u: f64 = rng.random();
                            (e.interval.a + u * e.interval.width()).min(e.interval.b)
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Mixes a master seed with a job tag into an independent sub-seed (SplitMix64).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_spec(m: usize) -> RandomInputSpec {
        let params = [Param::Lambda, Param::Kappa, Param::F, Param::Omega];
        let entries = params[..m]
            .iter()
            .map(|&param| RandomEntry { param, interval: UniformInterval::new(0.0, 1.0).unwrap() })
            .collect();
        RandomInputSpec::new(entries, &HarvesterParams::default()).unwrap()
    }

    #[test]
    fn uniform_entropy_is_log_width() {
        let unit = maxent_uniform(0.0, 1.0).unwrap();
        let d = TabulatedDensity::from_fn(0.0, 1.0, 101, |x| unit.density(x)).unwrap();
        assert_abs_diff_eq!(entropy(&d).unwrap(), 0.0, epsilon = 1e-12);

        let iv = maxent_uniform(0.04, 0.06).unwrap();
        assert_abs_diff_eq!(iv.density(0.05), 50.0, epsilon = 1e-9);
        let d = TabulatedDensity::from_fn(0.04, 0.06, 501, |x| iv.density(x)).unwrap();
        assert_abs_diff_eq!(entropy(&d).unwrap(), (0.02f64).ln(), epsilon = 1e-8);
    }

    #[test]
    fn triangle_has_lower_entropy_than_uniform() {
        // Closed form for p(x) = 2x on [0, 1]: 1/2 - ln 2.
        let d = TabulatedDensity::from_fn(0.0, 1.0, 20_001, |x| 2.0 * x).unwrap();
        let h = entropy(&d).unwrap();
        assert_abs_diff_eq!(h, 0.5 - 2f64.ln(), epsilon = 1e-6);
        assert!(h < 0.0);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        let d = TabulatedDensity::from_fn(0.0, 1.0, 11, |_| 2.0).unwrap();
        assert!(matches!(entropy(&d), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn bad_support() {
        assert_eq!(maxent_uniform(1.0, 1.0), Err(Error::BadSupport { a: 1.0, b: 1.0 }));
        assert!(maxent_uniform(2.0, 1.0).is_err());
    }

    #[test]
    fn nominal_intervals() {
        let iv = interval_from_nominal(0.05, 0.2).unwrap();
        assert_abs_diff_eq!(iv.a, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(iv.b, 0.06, epsilon = 1e-15);
        let iv = interval_from_nominal(0.8, 0.2).unwrap();
        assert_abs_diff_eq!(iv.a, 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(iv.b, 0.96, epsilon = 1e-15);
        let iv = interval_from_nominal(-1.0, 0.2).unwrap();
        assert!(iv.a < iv.b);
        assert_eq!(interval_from_nominal(0.0, 0.2), Err(Error::ZeroNominal));
        assert_eq!(interval_around(0.0, 0.2, Some(0.3)).unwrap(), UniformInterval { a: -0.3, b: 0.3 });
        assert!(interval_from_nominal(1.0, 1.5).is_err());
    }

    #[test]
    fn standard_map_endpoints_are_exact() {
        let iv = UniformInterval::new(0.04, 0.06).unwrap();
        assert_eq!(iv.to_standard(0.04).unwrap(), -1.0);
        assert_eq!(iv.to_standard(iv.midpoint()).unwrap(), 0.0);
        assert_eq!(iv.to_standard(0.06).unwrap(), 1.0);
        assert!(matches!(iv.to_standard(0.07), Err(Error::OutOfSupport { .. })));
        assert!(iv.to_standard(f64::NAN).is_err());
    }

    #[test]
    fn narrow_interval_sample() {
        let c = 0.37;
        let eps = 1e-9;
        let entries = vec![RandomEntry {
            param: Param::Kappa,
            interval: UniformInterval::new(c - eps, c + eps).unwrap(),
        }];
        let spec = RandomInputSpec::new(entries, &HarvesterParams::default()).unwrap();
        let rows = sample(&spec, 1, 11);
        assert_eq!(rows.len(), 1);
        assert!((rows[0][0] - c).abs() <= eps);
    }

    #[test]
    fn sampling_is_seeded() {
        let spec = unit_spec(3);
        assert_eq!(sample(&spec, 5000, 9), sample(&spec, 5000, 9));
        assert_ne!(sample(&spec, 10, 9), sample(&spec, 10, 10));
        // A prefix of a longer draw equals the shorter draw.
        assert_eq!(sample(&spec, 5000, 9)[..100], sample(&spec, 100, 9)[..]);
    }

    #[test]
    fn params_at_fills_fixed_values() {
        let base = HarvesterParams { xi: 0.02, ..HarvesterParams::default() };
        let entries = vec![RandomEntry { param: Param::Omega, interval: UniformInterval::new(0.6, 1.0).unwrap() }];
        let spec = RandomInputSpec::new(entries, &base).unwrap();
        let p = spec.params_at(&[0.9]).unwrap();
        assert_eq!(p.omega, 0.9);
        assert_eq!(p.xi, 0.02);
        assert_eq!(spec.fixed().len(), 9);
        assert!(spec.params_at(&[0.9, 1.0]).is_err());
    }

    #[test]
    fn duplicate_or_incomplete_specs_are_rejected() {
        let iv = UniformInterval::new(0.0, 1.0).unwrap();
        let dup = vec![RandomEntry { param: Param::F, interval: iv }, RandomEntry { param: Param::F, interval: iv }];
        assert!(RandomInputSpec::new(dup, &HarvesterParams::default()).is_err());

        let spec = unit_spec(2);
        let mut fixed = spec.fixed().clone();
        assert!(RandomInputSpec::from_parts(spec.entries().to_vec(), fixed.clone()).is_ok());
        fixed.remove(&Param::Xi);
        assert!(RandomInputSpec::from_parts(spec.entries().to_vec(), fixed.clone()).is_err());
        fixed.insert(Param::Xi, 0.01);
        fixed.insert(Param::Lambda, 0.05);
        assert!(RandomInputSpec::from_parts(spec.entries().to_vec(), fixed).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
