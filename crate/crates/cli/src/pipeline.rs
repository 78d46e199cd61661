//! One case is a (variant, nominal amplitude, domain family) triple: seeded
//! inputs, model evaluations, a PCE fit and the sample cloud every
//! statistical product is computed from.

use harvester_core::classify::MotionLabel;
use harvester_core::dynamics::{integrate, HarvesterParams, Param, Variant};
use harvester_core::pce::{fit_least_squares, PceSurrogate};
use harvester_core::probability::{derive_seed, sample, RandomEntry, RandomInputSpec};
use harvester_core::statistics::{
    confidence_band, histogram, kde, kde_grid, modality, normalize, prominent_modality, silverman_bandwidth,
    ConditionalMap, ConfidenceBand, DomainFamily, QoISamples, TimeSeries,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::model::Model;

/// FNV-1a, a stable hash for seed tags (std's hasher is not stable across
/// releases).
pub fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn case_seed(master: u64, tag: &str) -> u64 {
    derive_seed(master, tag_hash(tag))
}

/// Directory-safe label of a nominal amplitude.
pub fn f_label(f: f64) -> String {
    format!("f{f:.3}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudSource {
    Surrogate,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaseSeeds {
    pub fit: u64,
    pub draws: u64,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub variant: Variant,
    pub f_nominal: f64,
    pub family: DomainFamily,
    pub nominal: HarvesterParams,
    pub spec: RandomInputSpec,
    pub fit_inputs: Vec<Vec<f64>>,
    pub fit_values: Vec<f64>,
    pub surrogate: PceSurrogate,
    pub source: CloudSource,
    pub cloud: QoISamples,
    pub motion: Option<MotionLabel>,
    pub seeds: CaseSeeds,
}

pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub model: &'a dyn Model,
    /// Use direct model evaluations for every cloud.
    pub force_mc: bool,
}

fn evaluate(model: &dyn Model, spec: &RandomInputSpec, rows: &[Vec<f64>]) -> Result<Vec<f64>, CliError> {
    let points = rows.iter().map(|r| spec.params_at(r)).collect::<harvester_core::Result<Vec<_>>>()?;
    Ok(model.mean_power(&points).into_iter().collect::<harvester_core::Result<Vec<_>>>()?)
}

impl Pipeline<'_> {
    pub fn case_tag(&self, variant: Variant, f: f64, family: DomainFamily) -> String {
        format!("{variant}/{}/{}", f_label(f), family.as_str())
    }

    pub fn run_case(&self, variant: Variant, f: f64, family: DomainFamily) -> Result<CaseResult, CliError> {
        let config = self.config;
        let nominal = config.nominal(variant, f)?;
        let spec = config.random_spec(variant, &nominal, family)?;
        let tag = self.case_tag(variant, f, family);
        let seeds = CaseSeeds {
            fit: case_seed(config.seed, &format!("{tag}/fit")),
            draws: case_seed(config.seed, &format!("{tag}/draws")),
        };

        let fit_inputs = sample(&spec, config.pce.samples, seeds.fit);
        let fit_values = evaluate(self.model, &spec, &fit_inputs)?;
        let surrogate = fit_least_squares(&spec, &fit_inputs, &fit_values, config.pce.degree, &config.fit_options())?;
        let nominal_power = self.model.mean_power(&[nominal]).remove(0)?;
        let motion = match self.model.label(&nominal) {
            Ok(m) => m,
            Err(e @ harvester_core::Error::TooShort { .. }) => {
                log::warn!("{tag}: no motion label ({e})");
                None
            }
            Err(e) => return Err(e.into()),
        };

        let loo = surrogate.loo_error();
        let use_mc = self.force_mc || !(loo <= config.pce.loo_threshold);
        if use_mc && !self.force_mc {
            log::info!("{tag}: LOO {loo:.3} above {}, using direct model evaluations", config.pce.loo_threshold);
        }
        let (source, inputs, values) = if use_mc {
            (CloudSource::MonteCarlo, fit_inputs.clone(), fit_values.clone())
        } else {
            let draws = sample(&spec, config.stats.draws, seeds.draws);
            let values = surrogate.predict_many(&draws)?;
            (CloudSource::Surrogate, draws, values)
        };
        let params = spec.entries().iter().map(|e| e.param).collect::<Vec<_>>();
        let nominal_inputs = params.iter().map(|&p| nominal.get(p)).collect();
        let cloud = QoISamples::new(values, inputs, params, nominal_inputs, nominal_power)?;
        Ok(CaseResult {
            variant,
            f_nominal: f,
            family,
            nominal,
            spec,
            fit_inputs,
            fit_values,
            surrogate,
            source,
            cloud,
            motion,
            seeds,
        })
    }

    /// Time-resolved power band with only `param` random, every other
    /// parameter at its nominal value. Members are direct integrations.
    pub fn band(&self, variant: Variant, f: f64, param: Param) -> Result<BandResult, CliError> {
        let config = self.config;
        let nominal = config.nominal(variant, f)?;
        let full = config.random_spec(variant, &nominal, DomainFamily::D1)?;
        let entry = full
            .entries()
            .iter()
            .find(|e| e.param == param)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("{param} is not random in the {variant} variant")))?;
        let spec = RandomInputSpec::new(vec![RandomEntry { param, interval: entry.interval }], &nominal)?;
        let seed = case_seed(config.seed, &format!("{variant}/{}/band/{param}", f_label(f)));
        let rows = sample(&spec, config.stats.band_members, seed);
        let settings = config.integrator();
        let stride = config.stats.band_stride;
        let series = |p: &HarvesterParams| -> Result<TimeSeries, CliError> {
            let traj = integrate(p, settings.ic, settings.t_end, settings.dt)?
                .tail(settings.transient_fraction)
                .decimate(stride);
            Ok(TimeSeries { t: traj.t, values: traj.power })
        };
        let members = rows
            .par_iter()
            .map(|r| series(&spec.params_at(r)?))
            .collect::<Result<Vec<_>, CliError>>()?;
        let band = confidence_band(&members, config.stats.band_level)?;
        let nominal_series = series(&nominal)?;
        Ok(BandResult { variant, f_nominal: f, param, seed, band, nominal: nominal_series.values })
    }
}

#[derive(Debug, Clone)]
pub struct BandResult {
    pub variant: Variant,
    pub f_nominal: f64,
    pub param: Param,
    pub seed: u64,
    pub band: ConfidenceBand,
    /// Power of the all-nominal trajectory on the band's time grid.
    pub nominal: Vec<f64>,
}

/// Normalized-power density and histogram of a cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityResult {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub hist_centers: Vec<f64>,
    pub hist_density: Vec<f64>,
    /// Strict interior maxima of the KDE.
    pub maxima: usize,
    /// Maxima with sufficient relative prominence.
    pub modes: usize,
}

pub fn density(cloud: &QoISamples, config: &ExperimentConfig) -> Result<DensityResult, CliError> {
    let z = normalize(&cloud.values)?;
    let h = silverman_bandwidth(&z)?;
    let grid = kde_grid(&z, h, config.stats.kde_points);
    let d = kde(&z, &grid, Some(h))?;
    let (hist_centers, hist_density) = histogram(&z, config.stats.hist_bins)?;
    Ok(DensityResult {
        maxima: modality(&d),
        modes: prominent_modality(&d, config.stats.mode_prominence),
        grid,
        density: d,
        bandwidth: h,
        hist_centers,
        hist_density,
    })
}

pub fn maps(cloud: &QoISamples, config: &ExperimentConfig) -> Result<Vec<ConditionalMap>, CliError> {
    cloud
        .params
        .iter()
        .map(|&p| Ok(harvester_core::statistics::conditional_cdf_map(cloud, p, config.stats.bins, config.stats.power_grid)?))
        .collect()
}

/// Summary written next to every case.
#[derive(Debug, Clone, Serialize)]
pub struct CaseDiagnostics {
    pub variant: Variant,
    pub f_nominal: f64,
    pub family: DomainFamily,
    pub degree: usize,
    pub terms: usize,
    pub n_samples: usize,
    pub rank: usize,
    pub condition: f64,
    pub loo: f64,
    pub ill_conditioned: bool,
    pub source: CloudSource,
    pub cloud_size: usize,
    pub nominal_power: f64,
    pub surrogate_mean: f64,
    pub surrogate_std: f64,
    pub cloud_mean: f64,
    pub cloud_std: f64,
    pub motion: Option<MotionLabel>,
    pub kde_maxima: Option<usize>,
    pub modes: Option<usize>,
    pub seeds: CaseSeeds,
}

pub fn diagnostics(case: &CaseResult, density: Option<&DensityResult>) -> CaseDiagnostics {
    let d = case.surrogate.diagnostics();
    let v = &case.cloud.values;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    CaseDiagnostics {
        variant: case.variant,
        f_nominal: case.f_nominal,
        family: case.family,
        degree: case.surrogate.degree(),
        terms: case.surrogate.indices().len(),
        n_samples: d.n_samples,
        rank: d.rank,
        condition: d.condition,
        loo: d.loo,
        ill_conditioned: d.ill_conditioned,
        source: case.source,
        cloud_size: v.len(),
        nominal_power: case.cloud.nominal_power,
        surrogate_mean: case.surrogate.mean(),
        surrogate_std: case.surrogate.std_dev(),
        cloud_mean: mean,
        cloud_std: harvester_core::statistics::sample_std(v),
        motion: case.motion,
        kde_maxima: density.map(|d| d.maxima),
        modes: density.map(|d| d.modes),
        seeds: case.seeds,
    }
}
