//! `condwalk`: sample conditioned runs, compare their marginals with the
//! tilted law, and certify run lengths.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use condwalk::accuracy::{default_stride, Weighting};
use condwalk::density::MeanAnchor;
use condwalk::model::ModelKind;
use condwalk::presets::{exact_level_for_pvalue, level_for_pvalue, Preset};

use crate::commands::config_error;
use crate::config::{CommandKind, ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "condwalk", version, about = "Conditioned random walks by adaptive tilting")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample runs and write them as CSV and binary trace.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        paths: usize,
    },
    /// Pooled marginal histogram against the tilted law.
    Hist {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 200)]
        paths: usize,
        #[arg(long, default_value_t = 60)]
        bins: usize,
    },
    /// Relative-error curve over run lengths.
    Accuracy {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// First run length whose interval contains delta.
    SelectK {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Check the implementation against closed-form oracles.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat a run from its manifest.toml.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FArg {
    Id,
    Square,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightingArg {
    Plain,
    SelfNormalized,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AnchorArg {
    A,
    Mi,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// normal-moderate, normal-large, exponential-moderate, exponential-large, square-moderate
    #[arg(long)]
    preset: Option<Preset>,
    /// normal, exponential (centered_exponential) or normal_square
    #[arg(long)]
    model: Option<ModelKind>,
    /// Conditioning function; `square` turns the normal model into normal_square.
    #[arg(long = "f", value_enum)]
    f: Option<FArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Conditioning level.
    #[arg(long, conflicts_with = "pvalue")]
    a: Option<f64>,
    /// Tail probability giving a = z_p / √n.
    #[arg(long)]
    pvalue: Option<f64>,
    /// Match the tail probability under the model's own law of S_n instead.
    #[arg(long)]
    exact_quantile: bool,
    #[arg(long, value_enum, default_value = "mi")]
    anchor: AnchorArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Number of i.i.d. blocks.
    #[arg(long = "L", default_value_t = 1000)]
    blocks: usize,
    /// Step between scanned run lengths (default 1 up to n = 200, else n/100).
    #[arg(long)]
    stride: Option<usize>,
    /// Block averages: plain means, or means divided by the mean importance weight.
    #[arg(long, value_enum, default_value = "self-normalized")]
    weighting: WeightingArg,
}

fn resolve(run: &RunArgs, command: CommandKind) -> anyhow::Result<ExperimentConfig> {
    let preset = run.preset.map(Preset::values);
    let mut model = run.model.or(preset.map(|p| p.model)).unwrap_or(ModelKind::Normal);
    match (run.f, model) {
        (Some(FArg::Square), ModelKind::Normal) => model = ModelKind::NormalSquare,
        (Some(FArg::Square), ModelKind::NormalSquare)
        | (Some(FArg::Id), ModelKind::Normal | ModelKind::CenteredExponential)
        | (None, _) => {}
        (Some(f), m) => {
            let name = match f {
                FArg::Id => "id",
                FArg::Square => "square",
            };
            return Err(config_error(format!("--f {name} is not available for the {m} model")));
        }
    }
    let n = run.n.or(preset.map(|p| p.n)).unwrap_or(1000);
    if n < 3 {
        return Err(config_error(format!("n must be at least 3, got {n}")));
    }
    let preset_k = preset.filter(|p| p.n == n && p.model == model).map(|p| p.k);
    let k = match command {
        CommandKind::Accuracy | CommandKind::SelectK => n - 2,
        _ => run
            .k
            .or(preset_k)
            .unwrap_or(if model == ModelKind::Normal { n - 1 } else { n * 9 / 10 }),
    };
    let (a, pvalue) = match run.a {
        Some(a) => (a, None),
        None => {
            let p = run.pvalue.or(preset.map(|p| p.pvalue)).unwrap_or(1e-2);
            let a = if run.exact_quantile {
                exact_level_for_pvalue(model, p, n)
            } else {
                level_for_pvalue(p, n)
            };
            (a.map_err(|e| config_error(e.to_string()))?, Some(p))
        }
    };
    Ok(ExperimentConfig {
        command,
        model,
        n,
        k,
        a,
        pvalue,
        anchor: match run.anchor {
            AnchorArg::A => MeanAnchor::AnchorA,
            AnchorArg::Mi => MeanAnchor::AnchorMi,
        },
        seed: run.seed,
        paths: 0,
        bins: 0,
        blocks: 0,
        delta: 0.0,
        stride: default_stride(n),
        weighting: Weighting::default(),
        plot: run.plot,
    })
}

fn build(cmd: Cmd) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let with_scan = |mut c: ExperimentConfig, scan: &ScanArgs| {
        c.blocks = scan.blocks;
        c.weighting = match scan.weighting {
            WeightingArg::Plain => Weighting::Plain,
            WeightingArg::SelfNormalized => Weighting::SelfNormalized,
        };
        if let Some(s) = scan.stride {
            c.stride = s;
        }
        c
    };
    Ok(match cmd {
        Cmd::Sample { run, paths } => {
            let mut c = resolve(&run, CommandKind::Sample)?;
            c.paths = paths;
            (c, run.out)
        }
        Cmd::Hist { run, paths, bins } => {
            let mut c = resolve(&run, CommandKind::Hist)?;
            c.paths = paths;
            c.bins = bins;
            (c, run.out)
        }
        Cmd::Accuracy { run, scan } => (with_scan(resolve(&run, CommandKind::Accuracy)?, &scan), run.out),
        Cmd::SelectK { run, scan, delta } => {
            let mut c = with_scan(resolve(&run, CommandKind::SelectK)?, &scan);
            c.delta = delta;
            (c, run.out)
        }
        Cmd::Validate { seed, out } => (
            ExperimentConfig {
                command: CommandKind::Validate,
                model: ModelKind::Normal,
                n: 200,
                k: 199,
                a: 0.2,
                pvalue: None,
                anchor: MeanAnchor::AnchorMi,
                seed,
                paths: 0,
                bins: 0,
                blocks: 0,
                delta: 0.0,
                stride: 1,
                weighting: Weighting::default(),
                plot: false,
            },
            out,
        ),
        Cmd::Rerun { manifest, out } => (ExperimentConfig::read_manifest(&manifest)?, out),
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<condwalk::Error>() {
        Some(condwalk::Error::InvalidSpec(_)) => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli.command).and_then(|(config, out)| commands::run(&config, &out));
    match result {
        Ok(outcome) if outcome.failed_checks > 0 => {
            eprintln!("{} validation checks failed", outcome.failed_checks);
            ExitCode::from(3)
        }
        Ok(outcome) if outcome.cap_reached => ExitCode::from(4),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
