use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use harvester_core::classify::MotionLabel;
use harvester_core::dynamics::{integrate, Param, Variant};
use harvester_core::statistics::{cond_prob_curve, CondProbCurve, DomainFamily, SweepCase};

use crate::config::ExperimentConfig;
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};
use crate::model::{Harvester, Model};
use crate::output::{self, Bundle, Manifest};
use crate::pipeline::{density, f_label, maps, BandResult, CaseResult, DensityResult, Pipeline};

#[derive(Debug, Parser)]
#[command(name = "harvester", version, about = "Uncertainty propagation through bistable energy harvester models")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Use direct model evaluations instead of the surrogate.
    #[arg(long, global = true)]
    pub mc: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Restrict to these variants (repeatable).
    #[arg(long, global = true)]
    pub variant: Vec<Variant>,
    /// Replace the amplitude sweep (repeatable).
    #[arg(long = "f", global = true)]
    pub f: Vec<f64>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Config keys settable from the command line.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub xi: Option<f64>,
    #[arg(long, global = true)]
    pub chi: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Inclination angle in radians.
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub spread: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    #[arg(long, global = true)]
    pub transient_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub x0: Option<f64>,
    #[arg(long, global = true)]
    pub xdot0: Option<f64>,
    #[arg(long, global = true)]
    pub v0: Option<f64>,
    /// PCE training samples per case.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub degree: Option<usize>,
    /// Surrogate draws per case.
    #[arg(long, global = true)]
    pub draws: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Integrate the nominal model and label its motion.
    Simulate {
        /// Write every n-th trajectory point.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Draw inputs and evaluate the model.
    Sample,
    /// Fit the PCE surrogate.
    Fit,
    /// Conditional CDF maps, densities and histograms.
    Maps,
    /// Probability curves of a 50% power increase under each domain family.
    Condprob {
        #[arg(long)]
        domain: Vec<DomainFamily>,
    },
    /// Time-domain confidence bands with one parameter random at a time.
    Bands {
        #[arg(long)]
        param: Vec<Param>,
    },
    /// Motion regime of the nominal model.
    Classify,
    /// Every product for every variant and amplitude.
    Sweep,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        let m = &mut c.model;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut m.xi, self.xi);
        set(&mut m.chi, self.chi);
        set(&mut m.lambda, self.lambda);
        set(&mut m.kappa, self.kappa);
        set(&mut m.omega, self.omega);
        set(&mut m.beta, self.beta);
        set(&mut m.delta, self.delta);
        set(&mut m.phi, self.phi);
        set(&mut m.spread, self.spread);
        if self.p.is_some() {
            m.p = self.p;
        }
        let i = &mut c.integrator;
        set(&mut i.dt, self.dt);
        set(&mut i.t_end, self.t_end);
        set(&mut i.transient_fraction, self.transient_fraction);
        set(&mut i.x0, self.x0);
        set(&mut i.xdot0, self.xdot0);
        set(&mut i.v0, self.v0);
        if let Some(n) = self.samples {
            c.pce.samples = n;
        }
        if let Some(d) = self.degree {
            c.pce.degree = d;
        }
        if let Some(n) = self.draws {
            c.stats.draws = n;
        }
    }
}

/// File config plus command-line overrides, validated.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut c = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        c.seed = seed;
    }
    if !common.variant.is_empty() {
        c.variants = common.variant.clone();
    }
    if !common.f.is_empty() {
        c.model.f_sweep = common.f.clone();
        c.stats.band_cases = common.f.clone();
    }
    common.overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

/// Products of one variant's sweep, kept for callers that inspect them.
#[derive(Debug, Clone, Default)]
pub struct VariantOutcome {
    /// Successful D1 cases in sweep order.
    pub cases: Vec<CaseResult>,
    pub densities: Vec<DensityResult>,
    /// D2 cases when D2 changes the input distribution.
    pub d2_cases: Vec<CaseResult>,
    pub curves: Vec<(DomainFamily, Vec<CondProbCurve>)>,
    pub bands: Vec<BandResult>,
}

/// Which products a variant run emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Products {
    pub case_files: bool,
    pub maps: bool,
    pub condprob: bool,
    pub bands: bool,
}

impl Products {
    pub const ALL: Products = Products { case_files: true, maps: true, condprob: true, bands: true };
}

fn sweep_cases(cases: &[CaseResult]) -> Vec<SweepCase> {
    cases
        .iter()
        .map(|c| SweepCase { f_nominal: c.f_nominal, samples: c.cloud.clone(), motion: c.motion.map(|m| m.kind) })
        .collect()
}

/// Runs one variant over the configured sweep, recording per-case failures in
/// the bundle instead of aborting.
pub fn run_variant(
    pipeline: &Pipeline,
    variant: Variant,
    products: Products,
    bundle: &mut Bundle,
) -> Result<VariantOutcome, CliError> {
    let config = pipeline.config;
    let mut out = VariantOutcome::default();
    let wants_d2 = products.condprob && config.stats.domains.contains(&DomainFamily::D2) && config.d2_distinct(variant);
    for &f in &config.model.f_sweep {
        let dir = format!("{variant}/{}", f_label(f));
        match pipeline.run_case(variant, f, DomainFamily::D1) {
            Ok(case) => {
                let dens = if products.maps || products.case_files { Some(density(&case.cloud, config)) } else { None };
                let dens = match dens.transpose() {
                    Ok(d) => d,
                    Err(e) => {
                        bundle.fail(format!("{dir}/density"), &e);
                        None
                    }
                };
                if products.case_files {
                    output::write_case(bundle, &dir, &case, dens.as_ref())?;
                }
                if products.maps {
                    match maps(&case.cloud, config) {
                        Ok(ms) => {
                            for m in &ms {
                                let rel = format!("{dir}/maps/{}.csv", m.param.name());
                                bundle.write(&rel, &output::map_csv(m), Some(case.seeds.draws))?;
                            }
                        }
                        Err(e) => bundle.fail(format!("{dir}/maps"), &e),
                    }
                }
                if let Some(d) = dens {
                    out.densities.push(d);
                }
                out.cases.push(case);
            }
            Err(e) => bundle.fail(format!("{dir}/D1"), &e),
        }
        if wants_d2 {
            match pipeline.run_case(variant, f, DomainFamily::D2) {
                Ok(case) => {
                    if products.case_files {
                        output::write_case(bundle, &format!("{dir}/D2"), &case, None)?;
                    }
                    out.d2_cases.push(case);
                }
                Err(e) => bundle.fail(format!("{dir}/D2"), &e),
            }
        }
    }

    if products.condprob {
        let rows: Vec<(f64, Option<MotionLabel>, f64)> =
            out.cases.iter().map(|c| (c.f_nominal, c.motion, c.cloud.nominal_power)).collect();
        bundle.write(&format!("{variant}/classify.csv"), &output::classify_csv(&rows), None)?;
        for &family in &config.stats.domains {
            let cases = if family == DomainFamily::D2 && wants_d2 { &out.d2_cases } else { &out.cases };
            if cases.is_empty() {
                continue;
            }
            match cond_prob_curve(&sweep_cases(cases), family, config.stats.gain) {
                Ok(curves) => {
                    let rel = format!("{variant}/condprob_{}.csv", family.as_str());
                    bundle.write(&rel, &output::condprob_csv(&curves), None)?;
                    out.curves.push((family, curves));
                }
                Err(e) => bundle.fail(format!("{variant}/condprob_{}", family.as_str()), &e.into()),
            }
        }
    }

    if products.bands {
        out.bands = run_bands(pipeline, variant, &[], bundle)?;
    }
    Ok(out)
}

/// Bands at each configured band amplitude for `params` (all random
/// parameters when empty).
pub fn run_bands(
    pipeline: &Pipeline,
    variant: Variant,
    params: &[Param],
    bundle: &mut Bundle,
) -> Result<Vec<BandResult>, CliError> {
    let config = pipeline.config;
    let params = if params.is_empty() { config.random_params(variant) } else { params.to_vec() };
    let mut out = Vec::new();
    for &f in &config.stats.band_cases {
        for &param in &params {
            let rel = format!("{variant}/bands/{}/{}.csv", f_label(f), param.name());
            match pipeline.band(variant, f, param) {
                Ok(b) => {
                    bundle.write(&rel, &output::band_csv(&b), Some(b.seed))?;
                    out.push(b);
                }
                Err(e @ CliError::Usage(_)) => return Err(e),
                Err(e) => bundle.fail(rel, &e),
            }
        }
    }
    Ok(out)
}

fn simulate(config: &ExperimentConfig, stride: usize, bundle: &mut Bundle) -> Result<(), CliError> {
    let s = config.integrator();
    let model = Harvester { settings: s, classify: config.classify_options() };
    for &variant in &config.variants {
        for &f in &config.model.f_sweep {
            let params = config.nominal(variant, f)?;
            let traj = integrate(&params, s.ic, s.t_end, s.dt)?;
            let power = harvester_core::dynamics::mean_power(&traj, s.transient_fraction)?;
            let rel = format!("{variant}/{}/trajectory.csv", f_label(f));
            bundle.write(&rel, &output::trajectory_csv(&traj.decimate(stride)), None)?;
            match model.label(&params) {
                Ok(Some(label)) => println!(
                    "variant={variant} f={f} motion={} k={:.4} crossings={} mean_power={power:.6e}",
                    label.kind, label.k_statistic, label.crossings
                ),
                Ok(None) => println!("variant={variant} f={f} mean_power={power:.6e}"),
                Err(e @ harvester_core::Error::TooShort { .. }) => {
                    log::warn!("{variant}/{}: no motion label ({e})", f_label(f));
                    println!("variant={variant} f={f} motion=unlabeled mean_power={power:.6e}");
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}

fn sample_only(pipeline: &Pipeline, bundle: &mut Bundle) -> Result<(), CliError> {
    let config = pipeline.config;
    for &variant in &config.variants {
        for &f in &config.model.f_sweep {
            let nominal = config.nominal(variant, f)?;
            let spec = config.random_spec(variant, &nominal, DomainFamily::D1)?;
            let seed = crate::pipeline::case_seed(
                config.seed,
                &format!("{}/fit", pipeline.case_tag(variant, f, DomainFamily::D1)),
            );
            let rows = harvester_core::probability::sample(&spec, config.pce.samples, seed);
            let points = rows.iter().map(|r| spec.params_at(r)).collect::<harvester_core::Result<Vec<_>>>()?;
            let values = pipeline.model.mean_power(&points).into_iter().collect::<harvester_core::Result<Vec<_>>>()?;
            let rel = format!("{variant}/{}/samples.csv", f_label(f));
            bundle.write(&rel, &output::samples_csv(&spec.names(), &rows, &values), Some(seed))?;
        }
    }
    Ok(())
}

fn classify_only(config: &ExperimentConfig, model: &dyn Model, bundle: &mut Bundle) -> Result<(), CliError> {
    for &variant in &config.variants {
        let mut rows = Vec::new();
        for &f in &config.model.f_sweep {
            let params = config.nominal(variant, f)?;
            let label = model.label(&params)?;
            let power = model.mean_power(&[params]).remove(0)?;
            if let Some(l) = label {
                println!("variant={variant} f={f} motion={} k={:.4} crossings={}", l.kind, l.k_statistic, l.crossings);
            }
            rows.push((f, label, power));
        }
        bundle.write(&format!("{variant}/classify.csv"), &output::classify_csv(&rows), None)?;
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Sample => "sample",
        Command::Fit => "fit",
        Command::Maps => "maps",
        Command::Condprob { .. } => "condprob",
        Command::Bands { .. } => "bands",
        Command::Classify => "classify",
        Command::Sweep => "sweep",
    }
}

/// Executes `command` with a resolved config and an explicit model.
pub fn execute(
    command: &Command,
    config: &ExperimentConfig,
    model: &dyn Model,
    force_mc: bool,
    out: &Path,
) -> Result<Manifest, CliError> {
    let mut config = config.clone();
    if let Command::Condprob { domain } = command {
        if !domain.is_empty() {
            config.stats.domains = domain.clone();
        }
    }
    let pipeline = Pipeline { config: &config, model, force_mc };
    let mut bundle = Bundle::create(out)?;
    let only = |case_files, maps, condprob, bands| Products { case_files, maps, condprob, bands };
    match command {
        Command::Simulate { stride } => simulate(&config, *stride, &mut bundle)?,
        Command::Sample => sample_only(&pipeline, &mut bundle)?,
        Command::Classify => classify_only(&config, model, &mut bundle)?,
        Command::Bands { param } => {
            for &variant in &config.variants {
                run_bands(&pipeline, variant, param, &mut bundle)?;
            }
        }
        Command::Fit | Command::Maps | Command::Condprob { .. } | Command::Sweep => {
            let products = match command {
                Command::Fit => only(true, false, false, false),
                Command::Maps => only(true, true, false, false),
                Command::Condprob { .. } => only(false, false, true, false),
                _ => Products::ALL,
            };
            for &variant in &config.variants {
                run_variant(&pipeline, variant, products, &mut bundle)?;
            }
        }
    }
    bundle.finish(command_name(command), &config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli.common)?;
    let model = Harvester { settings: config.integrator(), classify: config.classify_options() };
    let go = || execute(&cli.command, &config, &model, cli.common.mc, &cli.common.out).map(|_| ());
    match cli.common.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
