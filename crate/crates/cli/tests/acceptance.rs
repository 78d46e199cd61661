//! Acceptance suite: one PASS/FAIL line per criterion, at the default
//! experiment settings. Criteria listed in `KNOWN_FAILURES` are reported but
//! do not fail the run; any other failure exits nonzero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use harvester_cli::output::Bundle;
use harvester_cli::pipeline::{case_seed, f_label, CaseResult};
use harvester_cli::{execute, run_variant, Command, ExperimentConfig, Harvester, Model, Pipeline, Products, VariantOutcome};
use harvester_core::classify::MotionKind;
use harvester_core::dynamics::{integrate, steady_mean_power, HarvesterParams, IntegratorSettings, Param, State, Variant};
use harvester_core::pce::{basis_eval, fit_least_squares, total_degree_set, FitOptions, PceSurrogate};
use harvester_core::probability::{entropy, maxent_uniform, sample, RandomEntry, RandomInputSpec, TabulatedDensity, UniformInterval};
use harvester_core::statistics::{CondProbCurve, DomainFamily};
use harvester_testkit::gauss_legendre;

/// Criteria measured to miss their target at the default settings; the
/// measured values are printed with each line.
const KNOWN_FAILURES: &[u32] = &[5, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn model(config: &ExperimentConfig) -> Harvester {
    Harvester { settings: config.integrator(), classify: config.classify_options() }
}

fn criterion_1(config: &ExperimentConfig, sweep: &VariantOutcome) -> Outcome {
    let decay_error = |dt: f64| {
        let p = HarvesterParams { kappa: 0.0, chi: 0.0, f: 0.0, lambda: 0.05, ..HarvesterParams::default() };
        let traj = integrate(&p, State::new(1.0, 0.0, 1.0), 1.0, dt).unwrap();
        (traj.states.last().unwrap().v - (-0.05f64).exp()).abs()
    };
    let ratios: Vec<f64> = [0.2, 0.1].iter().map(|&dt| decay_error(dt) / decay_error(dt / 2.0)).collect();
    let mut pass = ratios.iter().all(|r| (12.0..=20.0).contains(r));
    let mut detail = format!("decay ratios {:.2}/{:.2};", ratios[0], ratios[1]);

    // Pointwise self-convergence only exists for regular orbits.
    let s = config.integrator();
    let half = IntegratorSettings { dt: s.dt / 2.0, ..s };
    for case in &sweep.cases {
        let rel = {
            let a = steady_mean_power(&case.nominal, &s).unwrap();
            let b = steady_mean_power(&case.nominal, &half).unwrap();
            ((a - b) / b).abs()
        };
        let regular = matches!(case.motion.map(|m| m.kind), Some(MotionKind::Intrawell | MotionKind::InterwellRegular));
        if regular {
            pass &= rel < 1e-4;
            detail += &format!(" f={} {rel:.1e}", case.f_nominal);
        } else {
            detail += &format!(" f={} {rel:.1e}(chaotic, not checked)", case.f_nominal);
        }
    }
    outcome(pass, detail)
}

fn criterion_2(config: &ExperimentConfig, dir: &Path) -> Outcome {
    let mut c = config.clone();
    c.model.f_sweep = vec![0.041, 0.091, 0.250];
    execute(&Command::Simulate { stride: 1 }, &c, &model(&c), false, dir).unwrap();
    let mut rows = 0usize;
    let mut bad = 0usize;
    for variant in Variant::ALL {
        let lambda = c.nominal(variant, 0.041).unwrap().lambda;
        for &f in &c.model.f_sweep {
            let path = dir.join(format!("{variant}/{}/trajectory.csv", f_label(f)));
            let mut r = csv::Reader::from_path(&path).unwrap();
            for rec in r.records() {
                let rec = rec.unwrap();
                let v: f64 = rec[3].parse().unwrap();
                let p: f64 = rec[4].parse().unwrap();
                rows += 1;
                if p != lambda * v * v {
                    bad += 1;
                }
            }
        }
    }
    outcome(bad == 0 && rows > 0, format!("{rows} emitted rows, {bad} violate P = lambda v^2"))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for (a, b) in [(0.0, 1.0), (0.04, 0.06), (-3.0, 5.0)] {
        let iv = maxent_uniform(a, b).unwrap();
        let h = entropy(&TabulatedDensity::from_fn(a, b, 2001, |x| iv.density(x)).unwrap()).unwrap();
        worst = worst.max((h - (b - a).ln()).abs());
    }
    let uniform = entropy(&TabulatedDensity::from_fn(0.0, 1.0, 4001, |_| 1.0).unwrap()).unwrap();
    let mut beaten = 0;
    let mut members = 0;
    for k in 1..=10 {
        for eps in [0.05, 0.2, 0.4, 0.7, 0.95] {
            let q = TabulatedDensity::from_fn(0.0, 1.0, 4001, |x| 1.0 + eps * (std::f64::consts::PI * k as f64 * x).cos()).unwrap();
            members += 1;
            if entropy(&q).unwrap() < uniform {
                beaten += 1;
            }
        }
    }
    outcome(worst < 1e-8 && beaten == members, format!("entropy error {worst:.1e}; uniform beats {beaten}/{members}"))
}

fn unit_spec(m: usize) -> RandomInputSpec {
    let entries = [(Param::Lambda, 0.04, 0.06), (Param::Kappa, 0.4, 0.6), (Param::Omega, 0.64, 0.96)][..m]
        .iter()
        .map(|&(param, a, b)| RandomEntry { param, interval: UniformInterval::new(a, b).unwrap() })
        .collect();
    RandomInputSpec::new(entries, &HarvesterParams::default()).unwrap()
}

fn tensor_rule(m: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let (nodes, weights) = gauss_legendre(n);
    let mut rule = vec![(Vec::new(), 1.0)];
    for _ in 0..m {
        rule = rule
            .into_iter()
            .flat_map(|(p, w)| {
                nodes.iter().zip(&weights).map(move |(&x, &wx)| {
                    let mut q: Vec<f64> = p.clone();
                    q.push(x);
                    (q, w * wx / 2.0)
                })
            })
            .collect();
    }
    rule
}

fn criterion_4() -> Outcome {
    let mut gram = 0.0f64;
    for m in 1..=3 {
        let rule = tensor_rule(m, 8);
        for degree in 0..=4 {
            let basis = total_degree_set(m, degree);
            for (i, a) in basis.iter().enumerate() {
                for (j, b) in basis.iter().enumerate() {
                    let g: f64 = rule.iter().map(|(x, w)| w * basis_eval(a, x).unwrap() * basis_eval(b, x).unwrap()).sum();
                    gram = gram.max((g - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }

    let s = unit_spec(3);
    let xs = sample(&s, 400, 3);
    let y: Vec<f64> = xs.iter().map(|r| (60.0 * r[0]).exp() * (1.0 + r[1]) + (3.0 * r[2]).sin()).collect();
    let pce = fit_least_squares(&s, &xs, &y, 3, &FitOptions::default()).unwrap();
    let rule = tensor_rule(3, 6);
    let mean: f64 = rule.iter().map(|(xi, w)| w * pce.predict_standard(xi)).sum();
    let second: f64 = rule.iter().map(|(xi, w)| w * pce.predict_standard(xi).powi(2)).sum();
    let mean_err = (pce.mean() - mean).abs() / mean.abs();
    let var_err = (pce.variance() - (second - mean * mean)).abs() / pce.variance();

    let quad = |r: &[f64]| 3.0 + 40.0 * r[0] - 2.0 * r[1] * r[1] + 15.0 * r[0] * r[2] + 0.5 * r[2] * r[2];
    let xs = sample(&s, 100, 11);
    let y: Vec<f64> = xs.iter().map(|r| quad(r)).collect();
    let fit = fit_least_squares(&s, &xs, &y, 2, &FitOptions::default()).unwrap();
    let quad_err = sample(&s, 1000, 12)
        .iter()
        .map(|r| (fit.predict(r).unwrap() - quad(r)).abs() / quad(r).abs().max(1.0))
        .fold(0.0, f64::max);
    outcome(
        gram < 1e-10 && mean_err < 1e-8 && var_err < 1e-8 && quad_err < 1e-8,
        format!("gram {gram:.1e}; parseval mean {mean_err:.1e} var {var_err:.1e}; quadratic {quad_err:.1e}"),
    )
}

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, m2.sqrt(), m4)
}

fn criterion_5(config: &ExperimentConfig, sweep: &VariantOutcome) -> Outcome {
    const ORACLE: usize = 100_000;
    let m = model(config);
    let mut pass = true;
    let mut detail = String::new();
    for f in [0.041, 0.250] {
        let case = find(&sweep.cases, f);
        let seed = case_seed(config.seed, &format!("acceptance/{}/oracle", f_label(f)));
        let rows = sample(&case.spec, ORACLE, seed);
        let points: Vec<HarvesterParams> = rows.iter().map(|r| case.spec.params_at(r).unwrap()).collect();
        let values: Vec<f64> = m.mean_power(&points).into_iter().map(|r| r.unwrap()).collect();
        let (mc_mean, mc_std, m4) = moments(&values);
        let n = ORACLE as f64;
        let se_mean = mc_std / n.sqrt();
        let se_std = ((m4 - mc_std.powi(4)) / (4.0 * n * mc_std * mc_std)).sqrt();
        let (pce_mean, pce_std) = (case.surrogate.mean(), case.surrogate.std_dev());
        let ok_mean = (pce_mean - mc_mean).abs() <= (0.02 * mc_mean.abs()).max(3.0 * se_mean);
        let ok_std = (pce_std - mc_std).abs() <= (0.02 * mc_std).max(3.0 * se_std);
        pass &= ok_mean && ok_std;
        detail += &format!(
            " f={f}: mean {:+.2}% std {:+.2}% (3SE {:.2}%/{:.2}%, LOO {:.3});",
            100.0 * (pce_mean / mc_mean - 1.0),
            100.0 * (pce_std / mc_std - 1.0),
            300.0 * se_mean / mc_mean,
            300.0 * se_std / mc_std,
            case.surrogate.loo_error(),
        );
    }
    outcome(pass, detail.trim().to_string())
}

fn find(cases: &[CaseResult], f: f64) -> &CaseResult {
    cases.iter().find(|c| c.f_nominal == f).unwrap_or_else(|| panic!("no case at f={f}"))
}

fn criterion_6(sweep: &VariantOutcome) -> Outcome {
    let expected = [(0.041, MotionKind::Intrawell), (0.091, MotionKind::Chaotic), (0.250, MotionKind::InterwellRegular)];
    let mut pass = true;
    let mut detail = String::new();
    for (f, kind) in expected {
        let label = find(&sweep.cases, f).motion;
        pass &= label.map(|l| l.kind) == Some(kind);
        match label {
            Some(l) => detail += &format!(" f={f}: {} (K={:.3}, crossings {});", l.kind, l.k_statistic, l.crossings),
            None => detail += &format!(" f={f}: unlabeled;"),
        }
    }
    outcome(pass, detail.trim().to_string())
}

fn criterion_7(sweep: &VariantOutcome) -> Outcome {
    let mut pass = true;
    let mut detail = String::from("modes (strict maxima):");
    for (case, d) in sweep.cases.iter().zip(&sweep.densities) {
        let f = case.f_nominal;
        let expected = if f <= 0.105 {
            Some(2)
        } else if f >= 0.147 {
            Some(1)
        } else {
            None
        };
        if let Some(e) = expected {
            pass &= d.modes == e;
        }
        detail += &format!(" {f}:{}({})", d.modes, d.maxima);
    }
    outcome(pass, detail)
}

fn probability(curves: &[(DomainFamily, Vec<CondProbCurve>)], param: Param, f: f64) -> f64 {
    let (_, curves) = curves.iter().find(|(fam, _)| *fam == DomainFamily::D1).expect("D1 curves");
    let curve = curves.iter().find(|c| c.param == param).expect("parameter curve");
    let point = curve.points.iter().find(|p| p.f_nominal == f).expect("amplitude");
    point.result.map_or(f64::NAN, |r| r.probability)
}

fn criterion_8(sweep: &VariantOutcome) -> Outcome {
    let omega = probability(&sweep.curves, Param::Omega, 0.041);
    let force = probability(&sweep.curves, Param::F, 0.091);
    let kappa = probability(&sweep.curves, Param::Kappa, 0.250);
    let pass = omega > 0.8 && (force - 0.4).abs() <= 0.1 && (kappa - 0.2).abs() <= 0.1;
    outcome(
        pass,
        format!("P(omega event, f=0.041) {omega:.3} [>0.8]; P(f event, f=0.091) {force:.3} [0.4+-0.1]; P(kappa event, f=0.25) {kappa:.3} [0.2+-0.1]"),
    )
}

fn criterion_9(config: &ExperimentConfig) -> Outcome {
    let mut c = config.clone();
    c.model.f_sweep = vec![0.041];
    c.stats.domains = vec![DomainFamily::D1];
    let m = model(&c);
    let pipeline = Pipeline { config: &c, model: &m, force_mc: false };
    let case = pipeline.run_case(Variant::Asymmetric, 0.041, DomainFamily::D1).unwrap();
    let curves = harvester_core::statistics::cond_prob_curve(
        &[harvester_core::statistics::SweepCase { f_nominal: 0.041, samples: case.cloud.clone(), motion: None }],
        DomainFamily::D1,
        c.stats.gain,
    )
    .unwrap();
    let p = probability(&[(DomainFamily::D1, curves)], Param::Omega, 0.041);
    outcome((p - 0.7).abs() <= 0.1, format!("P(omega event, f=0.041) {p:.3} [0.7+-0.1]"))
}

fn criterion_10(sweep: &VariantOutcome) -> Outcome {
    let width = |param: Param| {
        sweep
            .bands
            .iter()
            .find(|b| b.f_nominal == 0.041 && b.param == param)
            .expect("band at f=0.041")
            .band
            .integrated_width()
    };
    let (omega, lambda) = (width(Param::Omega), width(Param::Lambda));
    let ratio = omega / lambda;
    outcome(ratio > 2.0, format!("integrated width omega {omega:.4e} / lambda {lambda:.4e} = {ratio:.2}"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_11(config: &ExperimentConfig, sweep: &VariantOutcome, dir: &Path) -> Outcome {
    let mut c = config.clone();
    c.model.f_sweep = vec![0.041, 0.091, 0.250];
    c.integrator.t_end = 400.0;
    c.pce.samples = 150;
    c.pce.degree = 2;
    c.stats.draws = 5000;
    c.stats.bins = 2;
    c.stats.band_cases = vec![0.091];
    let m = model(&c);
    let runs: Vec<BTreeMap<PathBuf, Vec<u8>>> = ["a", "b"]
        .iter()
        .map(|name| {
            execute(&Command::Sweep, &c, &m, false, &dir.join(name)).unwrap();
            tree(&dir.join(name))
        })
        .collect();
    let identical = runs[0] == runs[1];

    let mut drift = 0.0f64;
    let mut docs = 0;
    for case in &sweep.cases {
        let doc = case.surrogate.to_document();
        let back = PceSurrogate::from_document(&doc).unwrap();
        drift = back.coeffs().iter().zip(case.surrogate.coeffs()).map(|(a, b)| (a - b).abs()).fold(drift, f64::max);
        docs += 1;
    }
    outcome(
        identical && drift == 0.0,
        format!("{} files byte-identical across reruns: {identical}; {docs} surrogate documents, coefficient drift {drift:e}", runs[0].len()),
    )
}

fn main() {
    let start = Instant::now();
    let config = ExperimentConfig::load(&config_path()).unwrap();
    config.validate().unwrap();
    let work = tempfile::tempdir().unwrap();

    // The symmetric-linear sweep at default settings, through the CLI path.
    let m = model(&config);
    let pipeline = Pipeline { config: &config, model: &m, force_mc: false };
    let mut bundle = Bundle::create(&work.path().join("sweep")).unwrap();
    let sweep = run_variant(&pipeline, Variant::SymmetricLinear, Products::ALL, &mut bundle).unwrap();
    assert!(bundle.failures().is_empty(), "sweep failures: {:?}", bundle.failures());
    assert_eq!(sweep.cases.len(), config.model.f_sweep.len());
    eprintln!("symmetric-linear sweep done in {:.0?}", start.elapsed());

    let checks: Vec<(u32, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(|| criterion_1(&config, &sweep))),
        (2, Box::new(|| criterion_2(&config, &work.path().join("simulate")))),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(|| criterion_5(&config, &sweep))),
        (6, Box::new(|| criterion_6(&sweep))),
        (7, Box::new(|| criterion_7(&sweep))),
        (8, Box::new(|| criterion_8(&sweep))),
        (9, Box::new(|| criterion_9(&config))),
        (10, Box::new(|| criterion_10(&sweep))),
        (11, Box::new(|| criterion_11(&config, &sweep, &work.path().join("determinism")))),
    ];
    let mut unexpected = Vec::new();
    for (n, check) in checks {
        let t = Instant::now();
        let o = check();
        let known = KNOWN_FAILURES.contains(&n);
        let status = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {n}: {status} {} [{:.0?}]", o.detail, t.elapsed());
        if !o.pass && !known {
            unexpected.push(n);
        }
    }
    println!("acceptance finished in {:.0?}", start.elapsed());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
