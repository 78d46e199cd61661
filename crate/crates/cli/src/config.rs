//! Experiment configuration: a TOML document with a top-level seed and variant
//! list and the sections `[model] [random] [integrator] [pce] [stats]`.
//! Every field has a default, so a file only needs the keys it changes.

use std::collections::BTreeMap;
use std::path::Path;

use harvester_core::classify::ClassifyOptions;
use harvester_core::dynamics::{HarvesterParams, IntegratorSettings, Param, State, Variant};
use harvester_core::pce::FitOptions;
use harvester_core::probability::{interval_from_nominal, RandomEntry, RandomInputSpec, UniformInterval};
use harvester_core::statistics::DomainFamily;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SWEEP: [f64; 9] = [0.041, 0.060, 0.083, 0.091, 0.105, 0.115, 0.147, 0.200, 0.250];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub model: ModelConfig,
    pub random: RandomConfig,
    pub integrator: IntegratorConfig,
    pub pce: PceConfig,
    pub stats: StatsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 20_240_601,
            variants: Variant::ALL.to_vec(),
            model: ModelConfig::default(),
            random: RandomConfig::default(),
            integrator: IntegratorConfig::default(),
            pce: PceConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

/// Nominal parameter values; `phi` is in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub xi: f64,
    pub chi: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub omega: f64,
    pub beta: f64,
    pub delta: f64,
    pub phi: f64,
    /// Gravity constant; has no default and must be set whenever `phi != 0`
    /// is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub f_sweep: Vec<f64>,
    /// Relative half-width of the uniform supports.
    pub spread: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            xi: 0.01,
            chi: 0.05,
            lambda: 0.05,
            kappa: 0.5,
            omega: 0.8,
            beta: 1.0,
            delta: 0.15,
            phi: 10f64.to_radians(),
            p: None,
            f_sweep: SWEEP.to_vec(),
            spread: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomConfig {
    /// Random-parameter lists keyed by variant name; absent variants use
    /// [`default_random_params`].
    pub params: BTreeMap<String, Vec<Param>>,
    /// Absolute `[a, b]` supports replacing `nominal·[1 − spread, 1 + spread]`.
    pub supports: BTreeMap<String, [f64; 2]>,
    /// Support overrides used when sampling for domain family D2.
    pub d2_supports: BTreeMap<String, [f64; 2]>,
}

impl Default for RandomConfig {
    fn default() -> Self {
        let phi = 12f64.to_radians();
        RandomConfig {
            params: BTreeMap::new(),
            supports: BTreeMap::new(),
            d2_supports: BTreeMap::from([("delta".into(), [-0.18, 0.18]), ("phi".into(), [-phi, phi])]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub transient_fraction: f64,
    pub x0: f64,
    pub xdot0: f64,
    pub v0: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let s = IntegratorSettings::default();
        IntegratorConfig {
            dt: s.dt,
            t_end: s.t_end,
            transient_fraction: s.transient_fraction,
            x0: s.ic.x,
            xdot0: s.ic.xdot,
            v0: s.ic.v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceConfig {
    pub degree: usize,
    pub samples: usize,
    pub oversampling: f64,
    /// Cases whose LOO error exceeds this use the direct model evaluations.
    pub loo_threshold: f64,
    pub condition_limit: f64,
    pub strict: bool,
}

impl Default for PceConfig {
    fn default() -> Self {
        let o = FitOptions::default();
        PceConfig {
            degree: 3,
            samples: 2000,
            oversampling: o.oversampling,
            loo_threshold: 0.2,
            condition_limit: o.condition_limit,
            strict: o.strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Surrogate draws per case.
    pub draws: usize,
    pub bins: usize,
    pub power_grid: usize,
    pub gain: f64,
    pub domains: Vec<DomainFamily>,
    pub kde_points: usize,
    /// Minimum peak prominence, relative to the highest peak, for a mode.
    pub mode_prominence: f64,
    pub hist_bins: usize,
    pub band_level: f64,
    pub band_members: usize,
    /// Time-series decimation of band output.
    pub band_stride: usize,
    pub band_cases: Vec<f64>,
    pub classify_threshold: f64,
    pub points_per_period: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let c = ClassifyOptions::default();
        StatsConfig {
            draws: 100_000,
            bins: 20,
            power_grid: 200,
            gain: 0.5,
            domains: vec![DomainFamily::D1, DomainFamily::D2],
            kde_points: 512,
            mode_prominence: 0.1,
            hist_bins: 50,
            band_level: 0.95,
            band_members: 50,
            band_stride: 10,
            band_cases: vec![0.041, 0.091, 0.250],
            classify_threshold: c.threshold,
            points_per_period: c.points_per_period,
        }
    }
}

/// Random parameters of each model variant.
pub fn default_random_params(variant: Variant) -> Vec<Param> {
    use Param::*;
    match variant {
        Variant::SymmetricLinear => vec![Lambda, Kappa, F, Omega],
        Variant::SymmetricNonlinear => vec![Lambda, Kappa, F, Omega, Beta],
        Variant::Asymmetric => vec![Lambda, Kappa, F, Omega, Beta, Delta, Phi],
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn parse_param(name: &str) -> Result<Param, CliError> {
    name.parse().map_err(|_| CliError::Config(format!("unknown parameter `{name}`")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check(self.seed <= i64::MAX as u64, || "seed must fit in 63 bits".into())?;
        check(!self.variants.is_empty(), || "no variants selected".into())?;
        check(!self.model.f_sweep.is_empty(), || "f_sweep is empty".into())?;
        check(self.model.f_sweep.iter().all(|f| f.is_finite() && *f >= 0.0), || "f_sweep values must be >= 0".into())?;
        check(self.model.spread > 0.0 && self.model.spread < 1.0, || "spread must lie in (0, 1)".into())?;
        let s = &self.stats;
        check(s.draws >= 10 && s.kde_points >= 5 && s.hist_bins >= 1, || "stats sizes too small".into())?;
        check(s.bins >= 1 && s.power_grid >= 2, || "map needs >= 1 bin and >= 2 grid points".into())?;
        check(s.gain.is_finite(), || "gain must be finite".into())?;
        check((0.0..1.0).contains(&s.band_level), || "band_level must lie in [0, 1)".into())?;
        check(s.band_stride >= 1, || "band_stride must be >= 1".into())?;
        check(self.pce.loo_threshold >= 0.0, || "loo_threshold must be >= 0".into())?;
        for (name, [a, b]) in self.random.supports.iter().chain(&self.random.d2_supports) {
            parse_param(name)?;
            check(a < b, || format!("support of {name} must satisfy a < b"))?;
        }
        for (name, params) in &self.random.params {
            let variant: Variant = name.parse().map_err(|_| CliError::Config(format!("unknown variant `{name}`")))?;
            check(!params.is_empty(), || format!("{name}: empty random-parameter list"))?;
            for p in params {
                check(self.active(variant, *p), || format!("{name}: parameter {p} is inactive in this variant"))?;
            }
        }
        for &v in &self.variants {
            for &f in &self.model.f_sweep {
                self.nominal(v, f)?;
            }
        }
        Ok(())
    }

    /// Whether `param` is part of the `variant` model at all.
    fn active(&self, variant: Variant, param: Param) -> bool {
        match (variant, param) {
            (Variant::SymmetricLinear, Param::Beta | Param::Delta | Param::Phi | Param::P) => false,
            (Variant::SymmetricNonlinear, Param::Delta | Param::Phi | Param::P) => false,
            _ => true,
        }
    }

    pub fn integrator(&self) -> IntegratorSettings {
        let i = &self.integrator;
        IntegratorSettings {
            dt: i.dt,
            t_end: i.t_end,
            transient_fraction: i.transient_fraction,
            ic: State::new(i.x0, i.xdot0, i.v0),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            oversampling: self.pce.oversampling,
            condition_limit: self.pce.condition_limit,
            strict: self.pce.strict,
        }
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            threshold: self.stats.classify_threshold,
            points_per_period: self.stats.points_per_period,
            ..ClassifyOptions::default()
        }
    }

    /// Nominal parameters of `variant` at amplitude `f`; the variant zeroes the
    /// terms it does not model.
    pub fn nominal(&self, variant: Variant, f: f64) -> Result<HarvesterParams, CliError> {
        let m = &self.model;
        let mut p = HarvesterParams {
            xi: m.xi,
            chi: m.chi,
            lambda: m.lambda,
            kappa: m.kappa,
            f,
            omega: m.omega,
            beta: m.beta,
            delta: m.delta,
            phi: m.phi,
            p: m.p.unwrap_or(0.0),
        };
        match variant {
            Variant::SymmetricLinear => (p.beta, p.delta, p.phi, p.p) = (0.0, 0.0, 0.0, 0.0),
            Variant::SymmetricNonlinear => (p.delta, p.phi, p.p) = (0.0, 0.0, 0.0),
            Variant::Asymmetric => {}
        }
        check(p.phi == 0.0 || m.p.is_some(), || {
            "model.p (gravity constant) is required when phi != 0; it has no default".into()
        })?;
        check(p.variant() == variant, || format!("nominal values do not describe the {variant} variant"))?;
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn random_params(&self, variant: Variant) -> Vec<Param> {
        self.random.params.get(variant.as_str()).cloned().unwrap_or_else(|| default_random_params(variant))
    }

    fn support(&self, param: Param, nominal: f64, family: DomainFamily) -> Result<UniformInterval, CliError> {
        let name = param.name();
        let fixed = match family {
            DomainFamily::D2 => self.random.d2_supports.get(name).or_else(|| self.random.supports.get(name)),
            DomainFamily::D1 => self.random.supports.get(name),
        };
        let interval = match fixed {
            Some(&[a, b]) => UniformInterval::new(a, b),
            None => interval_from_nominal(nominal, self.model.spread),
        };
        interval.map_err(|e| CliError::Config(format!("support of {name}: {e}")))
    }

    /// Input distribution of one case. D2 differs from D1 only through
    /// `d2_supports` of parameters that are random in the variant.
    pub fn random_spec(
        &self,
        variant: Variant,
        nominal: &HarvesterParams,
        family: DomainFamily,
    ) -> Result<RandomInputSpec, CliError> {
        let entries = self
            .random_params(variant)
            .into_iter()
            .map(|param| Ok(RandomEntry { param, interval: self.support(param, nominal.get(param), family)? }))
            .collect::<Result<Vec<_>, CliError>>()?;
        RandomInputSpec::new(entries, nominal).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Whether family D2 changes the input distribution of `variant`.
    pub fn d2_distinct(&self, variant: Variant) -> bool {
        self.random_params(variant).iter().any(|p| self.random.d2_supports.contains_key(p.name()))
    }
}
