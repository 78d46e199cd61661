//! Probabilistic products built from mean-power sample clouds: normalized
//! densities, conditional CDF maps, conditional improvement probabilities and
//! time-domain confidence bands.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::MotionKind;
use crate::dynamics::Param;
use crate::error::{Error, Result};

/// Two-sided 95% standard-normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n−1) standard deviation.
pub fn sample_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// Zero mean, unit sample standard deviation.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples { got: values.len(), need: 2 });
    }
    let m = mean(values);
    let s = sample_std(values);
    if s == 0.0 || !s.is_finite() {
        return Err(Error::DegenerateSpread);
    }
    Ok(values.iter().map(|v| (v - m) / s).collect())
}

/// Silverman's rule `0.9·min(σ, IQR/1.34)·n^(−1/5)`; falls back to σ when the
/// interquartile range vanishes.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples { got: values.len(), need: 2 });
    }
    let s = sample_std(values);
    if s == 0.0 || !s.is_finite() {
        return Err(Error::DegenerateSpread);
    }
    let sv = sorted(values);
    let iqr = quantile_sorted(&sv, 0.75) - quantile_sorted(&sv, 0.25);
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    Ok(0.9 * spread * (values.len() as f64).powf(-0.2))
}

/// `points` evenly spaced values over `[min − 3h, max + 3h]`.
pub fn kde_grid(values: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    linspace(lo, hi, points)
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| if i == points - 1 { hi } else { lo + i as f64 * step }).collect()
        }
    }
}

/// Gaussian kernel density estimate on `grid`. Bandwidth defaults to
/// [`silverman_bandwidth`].
pub fn kde(values: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if values.len() < 10 {
        return Err(Error::EmptyInput);
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidParams(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(values)?,
    };
    let sv = sorted(values);
    let norm = 1.0 / (sv.len() as f64 * h * (2.0 * PI).sqrt());
    // Kernels beyond 9h contribute below e^-40 relative.
    let reach = 9.0 * h;
    Ok(grid
        .par_iter()
        .map(|&y| {
            let lo = sv.partition_point(|&v| v < y - reach);
            let hi = sv.partition_point(|&v| v <= y + reach);
            sv[lo..hi].iter().map(|&v| (-0.5 * ((y - v) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect())
}

/// Trapezoidal integral of samples `y` over the grid `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Count of strict interior local maxima; runs of equal values count once and
/// only if both neighbours of the run are lower.
pub fn modality(density: &[f64]) -> usize {
    local_maxima(density).len()
}

/// Plateau-merged strict interior maxima as `(first, last)` index runs.
fn local_maxima(density: &[f64]) -> Vec<(usize, usize)> {
    let n = density.len();
    let mut runs = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && density[j + 1] == density[i] {
            j += 1;
        }
        if j + 1 < n && density[i - 1] < density[i] && density[j + 1] < density[i] {
            runs.push((i, j));
        }
        i = j + 1;
    }
    runs
}

/// Topographic prominence of each local maximum: its height above the higher
/// of the two minima separating it from taller terrain (or the grid ends).
pub fn prominences(density: &[f64]) -> Vec<(usize, f64)> {
    local_maxima(density)
        .into_iter()
        .map(|(first, last)| {
            let peak = density[first];
            let mut left_min = peak;
            for &v in density[..first].iter().rev() {
                if v > peak {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = peak;
            for &v in &density[last + 1..] {
                if v > peak {
                    break;
                }
                right_min = right_min.min(v);
            }
            (first, peak - left_min.max(right_min))
        })
        .collect()
}

/// [`modality`] counting only maxima whose prominence is at least
/// `min_ratio` times the global maximum of the density.
pub fn prominent_modality(density: &[f64], min_ratio: f64) -> usize {
    let top = density.iter().copied().fold(0.0, f64::max);
    prominences(density).into_iter().filter(|&(_, p)| p >= min_ratio * top).count()
}

/// Normalized histogram: bin centers and densities integrating to 1.
pub fn histogram(values: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.is_empty() || bins == 0 {
        return Err(Error::EmptyInput);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::DegenerateSpread);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let scale = 1.0 / (values.len() as f64 * width);
    let centers = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    Ok((centers, counts.into_iter().map(|c| c as f64 * scale).collect()))
}

/// Mean-power realizations with the inputs that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoISamples {
    pub values: Vec<f64>,
    /// Row-major `n × M` parameter draws aligned with `values`.
    pub inputs: Vec<Vec<f64>>,
    /// Column names of `inputs`.
    pub params: Vec<Param>,
    /// Nominal value of each input column.
    pub nominal_inputs: Vec<f64>,
    /// Mean power at the all-nominal parameter point.
    pub nominal_power: f64,
}

impl QoISamples {
    pub fn new(
        values: Vec<f64>,
        inputs: Vec<Vec<f64>>,
        params: Vec<Param>,
        nominal_inputs: Vec<f64>,
        nominal_power: f64,
    ) -> Result<Self> {
        if values.len() != inputs.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), got: inputs.len() });
        }
        if nominal_inputs.len() != params.len() {
            return Err(Error::DimensionMismatch { expected: params.len(), got: nominal_inputs.len() });
        }
        if let Some(row) = inputs.iter().find(|r| r.len() != params.len()) {
            return Err(Error::DimensionMismatch { expected: params.len(), got: row.len() });
        }
        if !nominal_power.is_finite() || nominal_power < 0.0 {
            return Err(Error::InvalidParams(format!("nominal power must be finite and nonnegative, got {nominal_power}")));
        }
        Ok(QoISamples { values, inputs, params, nominal_inputs, nominal_power })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, param: Param) -> Result<usize> {
        self.params.iter().position(|&p| p == param).ok_or_else(|| Error::UnknownParameter(param.name().into()))
    }
}

/// Empirical CDF of power within equal-probability bins of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMap {
    pub param: Param,
    /// Median parameter value of each bin, ascending.
    pub param_grid: Vec<f64>,
    /// Bin boundaries, `param_grid.len() + 1` values.
    pub bin_edges: Vec<f64>,
    pub power_grid: Vec<f64>,
    /// `cdf[k][j] = F(power ≤ power_grid[j] | sample in bin k)`.
    pub cdf: Vec<Vec<f64>>,
}

pub fn conditional_cdf_map(
    q: &QoISamples,
    param: Param,
    n_param_bins: usize,
    n_power_grid: usize,
) -> Result<ConditionalMap> {
    const MIN_PER_BIN: usize = 50;
    let col = q.column(param)?;
    let n = q.len();
    if n_param_bins == 0 || n < MIN_PER_BIN * n_param_bins {
        return Err(Error::TooFewSamples { got: n, need: MIN_PER_BIN * n_param_bins.max(1) });
    }
    if n_power_grid < 2 {
        return Err(Error::InvalidParams("power grid needs at least 2 points".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| q.inputs[a][col].total_cmp(&q.inputs[b][col]).then(a.cmp(&b)));

    let lo = q.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = q.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let power_grid = linspace(lo, hi.max(lo), n_power_grid);

    let mut param_grid = Vec::with_capacity(n_param_bins);
    let mut bin_edges = vec![q.inputs[order[0]][col]];
    let mut cdf = Vec::with_capacity(n_param_bins);
    for k in 0..n_param_bins {
        let rows = &order[k * n / n_param_bins..(k + 1) * n / n_param_bins];
        let xs: Vec<f64> = rows.iter().map(|&r| q.inputs[r][col]).collect();
        let ys = sorted(&rows.iter().map(|&r| q.values[r]).collect::<Vec<_>>());
        param_grid.push(quantile_sorted(&xs, 0.5));
        bin_edges.push(*xs.last().expect("bins are nonempty"));
        let m = ys.len() as f64;
        cdf.push(power_grid.iter().map(|&y| ys.partition_point(|&v| v <= y) as f64 / m).collect());
    }
    Ok(ConditionalMap { param, param_grid, bin_edges, power_grid, cdf })
}

/// Per-parameter conditioning predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "c", rename_all = "snake_case")]
pub enum Event {
    /// `X ≥ c·X̄`.
    AtLeastFactor(f64),
    /// `|X| ≥ c`.
    AbsAtLeast(f64),
    /// `|X| ≤ c`.
    AbsAtMost(f64),
}

impl Event {
    pub fn holds(&self, x: f64, nominal: f64) -> bool {
        match *self {
            Event::AtLeastFactor(c) => x >= c * nominal,
            Event::AbsAtLeast(c) => x.abs() >= c,
            Event::AbsAtMost(c) => x.abs() <= c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventDomain {
    pub param: Param,
    pub event: Event,
}

/// Conditioning-event families: strong (`D1`) and weak (`D2`) asymmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainFamily {
    D1,
    D2,
}

impl DomainFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainFamily::D1 => "D1",
            DomainFamily::D2 => "D2",
        }
    }

    /// Event for `param`; parameters outside the asymmetry pair use the
    /// ten-percent increase `X ≥ 1.1·X̄` in both families.
    pub fn domain(self, param: Param) -> EventDomain {
        let event = match (param, self) {
            (Param::Delta, DomainFamily::D1) => Event::AbsAtLeast(0.1),
            (Param::Delta, DomainFamily::D2) => Event::AbsAtMost(0.1),
            (Param::Phi, DomainFamily::D1) => Event::AbsAtLeast(10f64.to_radians()),
            (Param::Phi, DomainFamily::D2) => Event::AbsAtMost(10f64.to_radians()),
            _ => Event::AtLeastFactor(1.1),
        };
        EventDomain { param, event }
    }
}

impl std::str::FromStr for DomainFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D1" => Ok(DomainFamily::D1),
            "D2" => Ok(DomainFamily::D2),
            _ => Err(Error::InvalidParams(format!("unknown domain family `{s}` (expected D1 or D2)"))),
        }
    }
}

/// Conditional probability with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondProb {
    pub probability: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_event: usize,
    pub n_success: usize,
    /// Fewer than 100 samples satisfy the event.
    pub wide_ci: bool,
}

/// Wilson 95% score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // The bounds touch 0 at k = 0 and 1 at k = n exactly; rounding would miss.
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// `P(power ≥ (1+gain)·nominal_power | domain)` over the sample cloud.
pub fn cond_prob_increase(q: &QoISamples, domain: &EventDomain, gain: f64) -> Result<CondProb> {
    let col = q.column(domain.param)?;
    let nominal = q.nominal_inputs[col];
    let threshold = (1.0 + gain) * q.nominal_power;
    let (mut n_event, mut n_success) = (0usize, 0usize);
    for (row, &y) in q.inputs.iter().zip(&q.values) {
        if domain.event.holds(row[col], nominal) {
            n_event += 1;
            if y >= threshold {
                n_success += 1;
            }
        }
    }
    if n_event == 0 {
        return Err(Error::EmptyEvent);
    }
    let (ci_lo, ci_hi) = wilson_interval(n_success, n_event);
    Ok(CondProb {
        probability: n_success as f64 / n_event as f64,
        ci_lo,
        ci_hi,
        n_event,
        n_success,
        wide_ci: n_event < 100,
    })
}

/// One excitation amplitude of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub f_nominal: f64,
    pub samples: QoISamples,
    pub motion: Option<MotionKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub f_nominal: f64,
    /// `None` when the event was empty at this amplitude.
    pub result: Option<CondProb>,
    pub motion: Option<MotionKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondProbCurve {
    pub param: Param,
    pub domain: EventDomain,
    pub points: Vec<CurvePoint>,
}

/// Probability-versus-amplitude curve for every random parameter of the
/// first case, in its column order.
pub fn cond_prob_curve(cases: &[SweepCase], family: DomainFamily, gain: f64) -> Result<Vec<CondProbCurve>> {
    let first = cases.first().ok_or(Error::EmptyInput)?;
    first
        .samples
        .params
        .iter()
        .map(|&param| {
            let domain = family.domain(param);
            let points = cases
                .iter()
                .map(|case| {
                    let result = match cond_prob_increase(&case.samples, &domain, gain) {
                        Ok(r) => Some(r),
                        Err(Error::EmptyEvent) => None,
                        Err(e) => return Err(e),
                    };
                    Ok(CurvePoint { f_nominal: case.f_nominal, result, motion: case.motion })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CondProbCurve { param, domain, points })
        })
        .collect()
}

/// A sampled scalar signal on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

/// Pointwise empirical-quantile envelope of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub level: f64,
    pub t: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConfidenceBand {
    /// Trapezoidal integral of `upper − lower` over time.
    pub fn integrated_width(&self) -> f64 {
        let width: Vec<f64> = self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect();
        trapezoid(&self.t, &width)
    }
}

pub const MIN_BAND_MEMBERS: usize = 40;

/// Quantiles `(1−level)/2` and `(1+level)/2` of the ensemble at each time.
pub fn confidence_band(ensemble: &[TimeSeries], level: f64) -> Result<ConfidenceBand> {
    if ensemble.len() < MIN_BAND_MEMBERS {
        return Err(Error::TooFewSamples { got: ensemble.len(), need: MIN_BAND_MEMBERS });
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParams(format!("band level must lie in [0, 1), got {level}")));
    }
    let t = &ensemble[0].t;
    if ensemble.iter().any(|m| m.t != *t || m.values.len() != t.len()) {
        return Err(Error::GridMismatch);
    }
    let (q_lo, q_hi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let rows: Vec<(f64, f64, f64)> = (0..t.len())
        .into_par_iter()
        .map(|i| {
            let column = sorted(&ensemble.iter().map(|m| m.values[i]).collect::<Vec<_>>());
            (quantile_sorted(&column, q_lo), quantile_sorted(&column, 0.5), quantile_sorted(&column, q_hi))
        })
        .collect();
    Ok(ConfidenceBand {
        level,
        t: t.clone(),
        lower: rows.iter().map(|r| r.0).collect(),
        median: rows.iter().map(|r| r.1).collect(),
        upper: rows.iter().map(|r| r.2).collect(),
    })
}
