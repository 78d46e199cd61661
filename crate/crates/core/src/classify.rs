//! Steady-state motion regimes: intrawell, regular interwell, chaotic.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{equilibria, HarvesterParams, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Intrawell,
    #[serde(rename = "interwell")]
    InterwellRegular,
    Chaotic,
}

impl MotionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::Intrawell => "intrawell",
            MotionKind::InterwellRegular => "interwell",
            MotionKind::Chaotic => "chaotic",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLabel {
    pub kind: MotionKind,
    /// Saddle crossings in the analysis window.
    pub crossings: usize,
    /// Median 0-1 test statistic.
    pub k_statistic: f64,
}

/// Number of sign changes of `x - saddle_x`. Samples exactly on the saddle
/// carry the previous sign.
pub fn count_well_crossings(x: &[f64], saddle_x: f64) -> usize {
    let mut crossings = 0;
    let mut side: Option<bool> = None;
    for &xi in x {
        let d = xi - saddle_x;
        if d == 0.0 {
            continue;
        }
        let above = d > 0.0;
        if let Some(prev) = side {
            if prev != above {
                crossings += 1;
            }
        }
        side = Some(above);
    }
    crossings
}

/// Settings for the 0-1 test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneOptions {
    pub phases: usize,
    pub seed: u64,
    /// Minimum series length.
    pub min_len: usize,
}

impl Default for ZeroOneOptions {
    fn default() -> Self {
        ZeroOneOptions { phases: 64, seed: 0x5EED_0001, min_len: 1000 }
    }
}

/// Gottwald–Melbourne 0-1 test for chaos (correlation method with the
/// oscillatory term removed), median over random phases `c ∈ (π/5, 4π/5)`.
///
/// Returns a value in `[0, 1]`: near 0 for regular dynamics, near 1 for chaos.
pub fn zero_one_test(series: &[f64], options: &ZeroOneOptions) -> Result<f64> {
    zero_one_test_sections(&[series], options)
}

/// 0-1 test over several equally long observables of one system, pooling
/// their mean-square displacements before the correlation step.
///
/// Used with interleaved stroboscopic sections of a periodically forced flow:
/// each section sees the slow dynamics aliased into the tested frequency band,
/// which a single densely sampled series misses.
pub fn zero_one_test_sections(sections: &[&[f64]], options: &ZeroOneOptions) -> Result<f64> {
    let len = sections.iter().map(|s| s.len()).min().unwrap_or(0);
    let total = len * sections.len();
    let min = options.min_len.max(20 * sections.len().max(1));
    if total < min || len < 20 {
        return Err(Error::TooShort { len: total, min });
    }
    if sections.iter().any(|s| s[..len].iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParams("series contains non-finite values".into()));
    }
    let sections: Vec<&[f64]> = sections.iter().map(|s| &s[..len]).collect();
    let means: Vec<f64> = sections.iter().map(|s| s.iter().sum::<f64>() / len as f64).collect();
    let n_cut = len / 10;
    let lags: Vec<f64> = (1..=n_cut).map(|l| l as f64).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut ks: Vec<f64> = (0..options.phases.max(1))
        .map(|_| {
            let c = PI / 5.0 + rng.random::<f64>() * 3.0 * PI / 5.0;
            let mut d = vec![0.0; n_cut];
            for (s, &mean) in sections.iter().zip(&means) {
                accumulate_displacement(s, mean, c, &mut d);
            }
            correlation(&lags, &d)
        })
        .collect();
    ks.sort_by(|a, b| a.total_cmp(b));
    let m = ks.len();
    let median = if m % 2 == 1 { ks[m / 2] } else { 0.5 * (ks[m / 2 - 1] + ks[m / 2]) };
    Ok(median.clamp(0.0, 1.0))
}

/// Adds the modified mean-square displacement `D_c(n)`, `n = 1..=d.len()`.
fn accumulate_displacement(series: &[f64], mean: f64, c: f64, d: &mut [f64]) {
    let n = series.len();
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    let (mut ps, mut qs) = (0.0, 0.0);
    for (j, &phi) in series.iter().enumerate() {
        let (s, co) = ((j + 1) as f64 * c).sin_cos();
        ps += phi * co;
        qs += phi * s;
        p.push(ps);
        q.push(qs);
    }
    let denom = 1.0 - c.cos();
    for (i, di) in d.iter_mut().enumerate() {
        let lag = i + 1;
        let m: f64 = (0..n - lag)
            .map(|j| (p[j + lag] - p[j]).powi(2) + (q[j + lag] - q[j]).powi(2))
            .sum::<f64>()
            / (n - lag) as f64;
        *di += m - mean * mean * (1.0 - (lag as f64 * c).cos()) / denom;
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// K at or above this marks chaos.
    pub threshold: f64,
    /// Target sampling density of the 0-1 test input.
    pub points_per_period: usize,
    /// Sections whose spread is below this fraction of the displacement
    /// spread count as constant.
    pub flat_tolerance: f64,
    pub zero_one: ZeroOneOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { threshold: 0.5, points_per_period: 10, flat_tolerance: 1e-2, zero_one: ZeroOneOptions::default() }
    }
}

/// Saddle between the wells, or `None` when the potential has a single well.
pub fn saddle_position(params: &HarvesterParams) -> Option<f64> {
    let eq = equilibria(params);
    if eq.len() < 3 {
        return None;
    }
    eq.iter().find(|e| !e.stable).map(|e| e.x)
}

/// Splits a window into `per_period` interleaved stroboscopic sections:
/// section `r` holds `x(t0 + k·T + r·T/per_period)` for whole periods `k`,
/// `T = 2π/Ω`, interpolated by cubic Hermite on `(x, x')`.
pub fn stroboscopic_sections(traj: &Trajectory, omega: f64, per_period: usize) -> Vec<Vec<f64>> {
    let n = traj.len();
    if n < 2 {
        return vec![Vec::new(); per_period.max(1)];
    }
    let period = 2.0 * PI / omega;
    let per_period = per_period.max(1);
    let span = (n - 1) as f64 * traj.dt;
    let periods = (span / period).floor() as usize;
    (0..per_period)
        .map(|r| {
            (0..periods)
                .map(|k| hermite_at(traj, k as f64 * period + r as f64 * period / per_period as f64))
                .collect()
        })
        .collect()
}

/// Displacement at elapsed time `tau` from the window start.
fn hermite_at(traj: &Trajectory, tau: f64) -> f64 {
    let h = traj.dt;
    let last = traj.len() - 1;
    let i = ((tau / h).floor() as usize).min(last - 1);
    let s = (tau / h - i as f64).clamp(0.0, 1.0);
    let (a, b) = (&traj.states[i], &traj.states[i + 1]);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * a.x
        + (s3 - 2.0 * s2 + s) * h * a.xdot
        + (-2.0 * s3 + 3.0 * s2) * b.x
        + (s3 - s2) * h * b.xdot
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Labels a steady-state window of a trajectory.
///
/// The displacement is sampled at `points_per_period` forcing-phase-locked
/// points per period and tested as that many stroboscopic sections.
pub fn classify_motion(
    traj: &Trajectory,
    params: &HarvesterParams,
    options: &ClassifyOptions,
) -> Result<MotionLabel> {
    let x = traj.displacement();
    let sections = stroboscopic_sections(traj, params.omega, options.points_per_period);
    let refs: Vec<&[f64]> = sections.iter().map(|s| s.as_slice()).collect();
    let k_statistic = zero_one_test_sections(&refs, &options.zero_one)?;
    // A stroboscopic fixed point is a forcing-period orbit; the 0-1 test is
    // undefined on constant input.
    let spread = std_dev(&x);
    let flat = sections.iter().all(|s| std_dev(s) <= options.flat_tolerance * spread);
    let k_statistic = if flat { 0.0 } else { k_statistic };

    let chaotic = k_statistic >= options.threshold;
    let (kind, crossings) = match saddle_position(params) {
        Some(saddle) => {
            let crossings = count_well_crossings(&x, saddle);
            let kind = match (crossings, chaotic) {
                (0, _) => MotionKind::Intrawell,
                (_, false) => MotionKind::InterwellRegular,
                (_, true) => MotionKind::Chaotic,
            };
            (kind, crossings)
        }
        // Single well: only confined regular motion or chaos.
        None => (if chaotic { MotionKind::Chaotic } else { MotionKind::Intrawell }, 0),
    };
    Ok(MotionLabel { kind, crossings, k_statistic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_never_crosses() {
        assert_eq!(count_well_crossings(&[1.0; 50], 0.0), 0);
    }

    #[test]
    fn sine_crosses_twice_per_period() {
        let x: Vec<f64> = (0..=1000).map(|i| (0.1 + 2.0 * PI * i as f64 / 1000.0).sin()).collect();
        assert_eq!(count_well_crossings(&x, 0.0), 2);
    }

    #[test]
    fn crossings_are_scale_invariant() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() + 0.2 * (i as f64 * 1.3).cos()).collect();
        let base = count_well_crossings(&x, 0.1);
        for c in [0.5, 3.0, 1e4] {
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            assert_eq!(count_well_crossings(&scaled, c * 0.1), base);
        }
    }

    #[test]
    fn sinusoid_is_regular() {
        let x: Vec<f64> = (0..2000).map(|i| (2.0 * PI * i as f64 / 10.0).sin()).collect();
        let k = zero_one_test(&x, &ZeroOneOptions::default()).unwrap();
        assert!(k < 0.1, "{k}");
    }

    #[test]
    fn logistic_map_is_chaotic() {
        let mut v = 0.3;
        let x: Vec<f64> = (0..2000)
            .map(|_| {
                v = 4.0 * v * (1.0 - v);
                v
            })
            .collect();
        let k = zero_one_test(&x, &ZeroOneOptions::default()).unwrap();
        assert!(k > 0.9, "{k}");
    }

    #[test]
    fn zero_one_is_seeded_and_checks_length() {
        let x: Vec<f64> = (0..1500).map(|i| ((i * i) as f64 * 0.001).sin()).collect();
        let opts = ZeroOneOptions::default();
        let a = zero_one_test(&x, &opts).unwrap();
        let b = zero_one_test(&x, &opts).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..=1.0).contains(&a));
        assert_eq!(zero_one_test(&x[..999], &opts), Err(Error::TooShort { len: 999, min: 1000 }));
    }

    #[test]
    fn monostable_potential_has_no_saddle() {
        let params = HarvesterParams { phi: 1.0, p: 2.0, ..HarvesterParams::default() };
        assert_eq!(saddle_position(&params), None);
        assert!(saddle_position(&HarvesterParams::default()).unwrap().abs() < 1e-12);
    }

    fn sampled_sine(omega: f64, dt: f64, n: usize) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let states = t
            .iter()
            .map(|&t| crate::dynamics::State { x: (omega * t).sin(), xdot: omega * (omega * t).cos(), v: 0.0 })
            .collect();
        Trajectory { t, states, power: vec![0.0; n], dt, lambda: 0.05 }
    }

    #[test]
    fn stroboscopic_sections_hit_exact_phases() {
        let omega = 0.8;
        let traj = sampled_sine(omega, 0.01, 20_000);
        let sections = stroboscopic_sections(&traj, omega, 10);
        assert_eq!(sections.len(), 10);
        for (r, section) in sections.iter().enumerate() {
            assert_eq!(section.len(), 25);
            let expected = (2.0 * PI * r as f64 / 10.0).sin();
            for v in section {
                assert!((v - expected).abs() < 1e-9, "{r}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn forcing_period_orbit_is_regular() {
        let params = HarvesterParams { omega: 0.8, ..HarvesterParams::default() };
        let traj = sampled_sine(0.8, 0.01, 100_001);
        let label = classify_motion(&traj, &params, &ClassifyOptions::default()).unwrap();
        assert_eq!(label.k_statistic, 0.0);
        assert_eq!(label.kind, MotionKind::InterwellRegular);
        let offset = Trajectory {
            states: traj.states.iter().map(|s| crate::dynamics::State { x: s.x + 1.0, ..*s }).collect(),
            ..traj.clone()
        };
        assert_eq!(classify_motion(&offset, &params, &ClassifyOptions::default()).unwrap().kind, MotionKind::Intrawell);
    }

    #[test]
    fn pooled_sections_match_single_series() {
        let x: Vec<f64> = (0..1200).map(|i| (i as f64 * 0.9).sin()).collect();
        let opts = ZeroOneOptions::default();
        assert_eq!(zero_one_test(&x, &opts).unwrap(), zero_one_test_sections(&[&x], &opts).unwrap());
        assert!(matches!(zero_one_test_sections(&[&x[..90], &x[..90]], &opts), Err(Error::TooShort { .. })));
    }
}
