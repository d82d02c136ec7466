//! The experiment subcommands.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use condwalk::accuracy::{
    accuracy_curve, proxy_conditional_log_density, saddlepoint_log_density, select_k, AccuracyReport, Reference,
};
use condwalk::density::RunSpec;
use condwalk::model::{log_normal_pdf, CenteredExponential, ModelKind, ModelRef, StandardNormal};
use condwalk::oracles::{exact_conditional_log_density, exponential_conditional_log_density};
use condwalk::presets::level_for_pvalue;
use condwalk::rng::{substream, Purpose};
use condwalk::sampler::{sample_paths, sample_step_rejection, PathBundle, SamplerConfig};
use condwalk::stats::{histogram, ks_statistic, mean, std_error, variance};
use condwalk::tilted::{invert_m, tilt_log_density};
use condwalk::trace::Trace;

use crate::config::{CommandKind, ConfigError, ExperimentConfig};
use crate::plot::{self, Panel, Series};

/// What a finished command reports back to `main`.
#[derive(Debug, Default)]
pub struct Outcome {
    pub cap_reached: bool,
    pub failed_checks: usize,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)
        .with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.write_record(&row)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare(config: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    config.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    config.write_manifest(out)
}

pub fn run(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    prepare(config, out)?;
    match config.command {
        CommandKind::Sample => sample(config, out),
        CommandKind::Hist => hist(config, out),
        CommandKind::Accuracy => accuracy(config, out),
        CommandKind::SelectK => choose_k(config, out),
        CommandKind::Validate => validate(config, out),
    }
}

fn draw(config: &ExperimentConfig) -> anyhow::Result<(RunSpec, PathBundle)> {
    let spec = config.run_spec()?;
    let bundle = sample_paths(&spec, &SamplerConfig::default(), config.paths)?;
    Ok((spec, bundle))
}

fn sample(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let (spec, bundle) = draw(config)?;
    let mut header = vec!["index".to_string()];
    header.extend((1..=spec.k).map(|i| format!("y_{i}")));
    header.push("log_density".into());
    let rows = bundle.paths.iter().enumerate().map(|(j, p)| {
        let mut row = vec![j.to_string()];
        row.extend(p.values.iter().map(|&v| num(v)));
        row.push(num(p.log_density));
        row
    });
    write_csv(&out.join("paths.csv"), &header, rows)?;

    let trace = Trace {
        n: spec.n as u64,
        k: spec.k as u64,
        a: spec.a,
        seed: spec.seed,
        paths: bundle.paths.iter().map(|p| (p.values.clone(), p.log_density)).collect(),
    };
    let path = out.join("paths.trace");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    trace
        .write_to(BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))?;

    for (j, p) in bundle.paths.iter().enumerate() {
        println!(
            "path {j}: terminal mean of f {:.5} (level {:.5}), log density {:.4}",
            p.partial_sums[spec.k - 1] / spec.k as f64,
            spec.level(),
            p.log_density
        );
    }
    println!("aborted attempts: {} (rate {:.4})", bundle.aborts, bundle.abort_rate());

    if config.plot {
        let mut series: Vec<Series> = bundle
            .paths
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let pts = std::iter::once((0.0, 0.0))
                    .chain(p.partial_sums.iter().enumerate().map(|(i, &s)| ((i + 1) as f64, s)))
                    .collect();
                Series::line(format!("path {j}"), pts)
            })
            .collect();
        series.push(Series::dashed(
            "i × level",
            vec![(0.0, 0.0), (spec.k as f64, spec.k as f64 * spec.level())],
        ));
        let panel = Panel {
            title: format!(
                "{} trajectories, n = {}, k = {}, a = {:.4}",
                config.model, spec.n, spec.k, spec.a
            ),
            x_label: "i".into(),
            y_label: "partial sum of f(Y)".into(),
            series,
        };
        write_text(&out.join("trajectories.svg"), &plot::render(&[panel]))?;
    }
    Ok(Outcome::default())
}

/// Distribution function of the tilted law with mean `level`.
fn tilted_cdf(model: ModelKind, level: f64) -> impl Fn(f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = match model {
        ModelKind::NormalSquare => Normal::new(0.0, level.sqrt()).ok(),
        _ => Normal::new(level, 1.0).ok(),
    };
    move |x| match (model, &normal) {
        (ModelKind::CenteredExponential, _) => {
            if x <= -1.0 {
                0.0
            } else {
                1.0 - (-(x + 1.0) / (1.0 + level)).exp()
            }
        }
        (_, Some(d)) => d.cdf(x),
        _ => f64::NAN,
    }
}

fn hist(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let (spec, bundle) = draw(config)?;
    let pooled: Vec<f64> = bundle.paths.iter().flat_map(|p| p.values.iter().copied()).collect();
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let counts = histogram(&pooled, lo, hi, config.bins);
    let width = (hi - lo) / config.bins as f64;
    let model = spec.model.as_ref();
    let t = invert_m(model, spec.level())?;
    let total = pooled.len() as f64;
    let rows: Vec<Vec<String>> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let (l, h) = (lo + b as f64 * width, lo + (b + 1) as f64 * width);
            let overlay = tilt_log_density(model, t, 0.5 * (l + h)).map(f64::exp).unwrap_or(0.0);
            vec![
                num(l),
                num(h),
                c.to_string(),
                num(c as f64 / (total * width)),
                num(overlay),
            ]
        })
        .collect();
    let header = ["bin_lo", "bin_hi", "count", "density", "tilted_density"].map(String::from);
    write_csv(&out.join("hist.csv"), &header, rows.clone())?;

    let ks = ks_statistic(&pooled, tilted_cdf(config.model, spec.level()));
    write_csv(
        &out.join("hist_summary.csv"),
        &["statistic", "value"].map(String::from),
        [
            vec!["values".into(), pooled.len().to_string()],
            vec!["ks_vs_tilted".into(), num(ks)],
            vec!["tilt".into(), num(t)],
        ],
    )?;
    println!(
        "pooled {} values; KS distance to the tilted law = {ks:.5}",
        pooled.len()
    );

    if config.plot {
        let centers = |col: usize| -> Vec<(f64, f64)> {
            rows.iter()
                .map(|r| {
                    let l: f64 = r[0].parse().unwrap();
                    let h: f64 = r[1].parse().unwrap();
                    (0.5 * (l + h), r[col].parse().unwrap())
                })
                .collect()
        };
        let panel = Panel {
            title: format!(
                "pooled marginal, {} n = {}, k = {}, a = {:.4}",
                config.model, spec.n, spec.k, spec.a
            ),
            x_label: "y".into(),
            y_label: "density".into(),
            series: vec![
                Series::steps("empirical", centers(3)),
                Series::line("tilted law", centers(4)),
            ],
        };
        write_text(&out.join("hist.svg"), &plot::render(&[panel]))?;
    }
    Ok(Outcome::default())
}

fn scan_lengths(config: &ExperimentConfig) -> Vec<usize> {
    let cap = config.n - 2;
    let mut ks: Vec<usize> = (1..=cap).step_by(config.stride.max(1)).collect();
    if ks.last() != Some(&cap) {
        ks.push(cap);
    }
    ks
}

fn report_header() -> Vec<String> {
    ["k", "ere_bar", "vre_bar", "ci_lo", "ci_hi", "L", "drop_rate"]
        .map(String::from)
        .to_vec()
}

fn report_row(r: &AccuracyReport) -> Vec<String> {
    vec![
        r.k.to_string(),
        num(r.ere_bar),
        num(r.vre_bar),
        num(r.ci_lo),
        num(r.ci_hi),
        r.l.to_string(),
        num(r.drop_rate),
    ]
}

fn curve_panel(title: String, reports: &[AccuracyReport]) -> Panel {
    let pick = |f: fn(&AccuracyReport) -> f64| reports.iter().map(|r| (r.k as f64, f(r))).collect();
    Panel {
        title,
        x_label: "k".into(),
        y_label: "relative error".into(),
        series: vec![
            Series::line("ERE", pick(|r| r.ere_bar)),
            Series::dashed("CI low", pick(|r| r.ci_lo)),
            Series::dashed("CI high", pick(|r| r.ci_hi)),
        ],
    }
}

fn has_oracle(model: ModelKind) -> bool {
    matches!(model, ModelKind::Normal | ModelKind::CenteredExponential)
}

fn accuracy(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let spec = config.run_spec()?;
    let ks = scan_lengths(config);
    let proxy = accuracy_curve(&spec, config.blocks, Reference::Saddlepoint, &ks, config.weighting)?;
    write_csv(
        &out.join("accuracy.csv"),
        &report_header(),
        proxy.iter().map(report_row),
    )?;
    let mut panels = vec![curve_panel(
        format!("saddlepoint proxy, {} n = {}", config.model, config.n),
        &proxy,
    )];
    if has_oracle(config.model) {
        let oracle = accuracy_curve(&spec, config.blocks, Reference::Exact, &ks, config.weighting)?;
        write_csv(
            &out.join("accuracy_oracle.csv"),
            &report_header(),
            oracle.iter().map(report_row),
        )?;
        panels.push(curve_panel(
            format!("exact conditional density, {} n = {}", config.model, config.n),
            &oracle,
        ));
    }
    let worst = proxy.iter().map(|r| r.drop_rate).fold(0.0, f64::max);
    println!(
        "{} run lengths evaluated with L = {}; max drop rate {worst:.4}",
        ks.len(),
        config.blocks
    );
    if config.plot {
        write_text(&out.join("accuracy.svg"), &plot::render(&panels))?;
    }
    Ok(Outcome::default())
}

fn choose_k(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let spec = config.run_spec()?;
    let sel = select_k(&spec, config.delta, config.blocks, config.stride, config.weighting)?;
    let mut header = report_header();
    header.push("k_delta".into());
    let rows = sel.reports.iter().map(|r| {
        let mut row = report_row(r);
        row.push(r.k_delta.map(|k| k.to_string()).unwrap_or_default());
        row
    });
    write_csv(&out.join("select_k.csv"), &header, rows)?;
    let show = |k: Option<usize>| k.map(|k| k.to_string()).unwrap_or_else(|| "none".into());
    match sel.k_delta {
        Some(k) => println!("k_delta = {k} (delta = {}; last k with the interval below delta: {})", config.delta, show(sel.last_below)),
        None => println!(
            "cap reached: delta = {} never entered the interval up to k = {} (last k with the interval below delta: {})",
            config.delta,
            config.n - 2,
            show(sel.last_below)
        ),
    }
    if config.plot {
        let panel = curve_panel(format!("run-length search, delta = {}", config.delta), &sel.reports);
        write_text(&out.join("select_k.svg"), &plot::render(&[panel]))?;
    }
    Ok(Outcome {
        cap_reached: sel.cap_reached,
        ..Outcome::default()
    })
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

fn validate(config: &ExperimentConfig, out: &Path) -> anyhow::Result<Outcome> {
    let seed = config.seed;
    let sampler = SamplerConfig::default();
    let mut checks = Vec::new();

    let normal: ModelRef = Arc::new(StandardNormal);
    let spec = RunSpec::new(normal.clone(), 200, 199, 0.2)?.with_seed(seed);
    let bundle = sample_paths(&spec, &sampler, 20)?;
    let mut worst: f64 = 0.0;
    for p in &bundle.paths {
        worst = worst.max((p.log_density - exact_conditional_log_density(&spec, &p.values)?).abs());
    }
    checks.push(Check {
        name: "gaussian_run_density_log_error",
        value: worst,
        tolerance: 1e-8,
    });

    let mut worst: f64 = 0.0;
    for k in [1, 50, 150] {
        let spec_k = RunSpec::new(normal.clone(), 200, k, 0.2)?;
        for p in &bundle.paths {
            let y = &p.values[..k];
            let diff = proxy_conditional_log_density(&spec_k, y)? - exact_conditional_log_density(&spec_k, y)?;
            worst = worst.max(diff.abs());
        }
    }
    checks.push(Check {
        name: "gaussian_proxy_log_error",
        value: worst,
        tolerance: 1e-3,
    });

    let exp: ModelRef = Arc::new(CenteredExponential);
    let a = level_for_pvalue(1e-2, 200)?;
    let spec = RunSpec::new(exp, 200, 150, a)?.with_seed(seed);
    let bundle = sample_paths(&spec, &sampler, 100)?;
    let errs: Vec<f64> = bundle
        .paths
        .iter()
        .map(|p| {
            (p.log_density - exponential_conditional_log_density(200, 150, a, &p.values))
                .exp_m1()
                .abs()
        })
        .collect();
    checks.push(Check {
        name: "exponential_mean_abs_rel_error",
        value: mean(&errs),
        tolerance: 0.05,
    });

    let mut worst: f64 = 0.0;
    for n in [10usize, 100, 1000] {
        for j in 0..=10 {
            let u = -1.0 + 0.2 * j as f64;
            let exact = log_normal_pdf(0.0, 1.0 / n as f64, u);
            let sp = saddlepoint_log_density(&StandardNormal, n, u)?;
            worst = worst.max((sp - exact).abs() / exact.abs().max(1.0));
        }
    }
    checks.push(Check {
        name: "gaussian_saddlepoint_scaled_error",
        value: worst,
        tolerance: 1e-12,
    });

    let mut worst: f64 = 0.0;
    for j in 0..=10 {
        let u = 0.05 + 0.05 * j as f64;
        let g = 100.0 * (u + 1.0);
        let exact = 100f64.ln() + 99.0 * g.ln() - g - statrs::function::gamma::ln_gamma(100.0);
        worst = worst.max(
            (saddlepoint_log_density(&CenteredExponential, 100, u)? - exact)
                .exp_m1()
                .abs(),
        );
    }
    checks.push(Check {
        name: "exponential_saddlepoint_rel_error",
        value: worst,
        tolerance: 0.02,
    });

    let mut rng = substream(seed, Purpose::Scratch, 0);
    let xs: Vec<f64> = (0..20_000)
        .map(|_| sample_step_rejection(&StandardNormal, 0.0, 1.0, &mut rng).map(|r| r.0))
        .collect::<Result<_, _>>()?;
    checks.push(Check {
        name: "rejection_mean_in_se_units",
        value: mean(&xs).abs() / std_error(&xs),
        tolerance: 3.0,
    });
    checks.push(Check {
        name: "rejection_variance_error",
        value: (variance(&xs) - 0.5).abs(),
        tolerance: 3.0 * 0.5 * (2.0f64 / 20_000.0).sqrt(),
    });

    let failed = checks.iter().filter(|c| !(c.value <= c.tolerance)).count();
    for c in &checks {
        let verdict = if c.value <= c.tolerance { "ok" } else { "FAILED" };
        println!(
            "{:<36} {:>12.4e}  (tolerance {:.1e})  {verdict}",
            c.name, c.value, c.tolerance
        );
    }
    write_csv(
        &out.join("validate.csv"),
        &["check", "value", "tolerance", "pass"].map(String::from),
        checks.iter().map(|c| {
            vec![
                c.name.into(),
                num(c.value),
                num(c.tolerance),
                (c.value <= c.tolerance).to_string(),
            ]
        }),
    )?;
    Ok(Outcome {
        failed_checks: failed,
        ..Outcome::default()
    })
}

/// Reject a preset/flag combination that cannot be expressed.
pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}
