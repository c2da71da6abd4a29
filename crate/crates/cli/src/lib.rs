//! Command-line front end for the concatenated-swapping simulator.
//!
//! [`run`] takes the full argument vector and returns the process exit code.

mod commands;
mod config;
mod output;
mod reproduce;

use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use swapchain::chain::{ChainClickPattern, VisibilityMode};
use swapchain::rates::{ChannelBase, TradeOff, INGAAS_A, INGAAS_B};

use config::{is_angle, ParseError, RunConfig, SweepAxis};
use reproduce::Figure;

const ANGLE_NOTE: &str = "Angles (--delta-a, --delta-b and delta sweeps) are given in units of pi: 0.5 means pi/2.\n\
Outputs go to <name>.csv and <name>.meta.json with --output <name>; otherwise the CSV is printed.\n\
Exit codes: 1 invalid input or failed check, 2 unparseable arguments or config, 3 some sweep points failed.";

#[derive(Parser, Debug)]
#[command(name = "swapchain", version, about = "Concatenated entanglement swapping: visibilities, key rates and figure data", after_help = ANGLE_NOTE)]
struct Cli {
    /// Worker threads for sweeps and grids.
    #[arg(long, global = true, env = "SWAPCHAIN_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fringe visibility of the outer coincidences.
    Visibility(Params),
    /// All sixteen outer click probabilities.
    Coincidence(Params),
    /// Visibility, QBER and key rates at one operating point.
    Keyrate(Params),
    /// Maximize the net key rate over source strength and detector efficiency.
    Optimize(Params),
    /// Key-rate figures over one parameter axis.
    Sweep(Params),
    /// Repeaterless (TGW) bound.
    Tgw(Params),
    /// Compare the closed-form evaluator with the brute-force oracle (one swap).
    OracleCheck(Params),
    /// Emit the data behind a figure.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        params: Params,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Base {
    Ten,
    E,
}

#[derive(Args, Debug, Default)]
#[command(after_help = ANGLE_NOTE)]
struct Params {
    /// JSON config (or a previous run's .meta.json); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output name; writes <name>.csv and <name>.meta.json.
    #[arg(long, short)]
    output: Option<String>,
    /// Source strength.
    #[arg(long)]
    chi: Option<f64>,
    /// Intrinsic detector efficiency.
    #[arg(long)]
    eta0: Option<f64>,
    /// Fixed dark-count probability.
    #[arg(long, conflicts_with = "trade_off")]
    dark: Option<f64>,
    /// Tie the dark-count probability to eta0 as A exp(B eta0).
    #[arg(long)]
    trade_off: bool,
    #[arg(long, requires = "trade_off", default_value_t = INGAAS_A)]
    trade_a: f64,
    #[arg(long, requires = "trade_off", default_value_t = INGAAS_B)]
    trade_b: f64,
    /// Fiber loss in dB/km.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fixed loss in dB.
    #[arg(long)]
    alpha0: Option<f64>,
    /// End-to-end distance in km.
    #[arg(long, visible_alias = "length-km")]
    length: Option<f64>,
    #[arg(long, value_enum)]
    channel_base: Option<Base>,
    /// Rotator angle at A, in units of pi.
    #[arg(long, allow_hyphen_values = true)]
    delta_a: Option<f64>,
    /// Rotator angle at B, in units of pi.
    #[arg(long, allow_hyphen_values = true)]
    delta_b: Option<f64>,
    /// Number of swaps; a comma-separated list for `reproduce`.
    #[arg(long, value_delimiter = ',')]
    n_swaps: Option<Vec<usize>>,
    /// Bound on each ideal inner photon count.
    #[arg(long)]
    truncation: Option<usize>,
    /// Oracle truncation for `oracle-check` (defaults to --truncation).
    #[arg(long)]
    oracle_truncation: Option<usize>,
    /// Reconciliation efficiency.
    #[arg(long)]
    kappa: Option<f64>,
    /// Inner station clicks from A to B, e.g. 1010|1010|1010.
    #[arg(long)]
    inner_pattern: Option<ChainClickPattern>,
    /// Take q_max and q_min as extremes over delta_b.
    #[arg(long)]
    extremize: bool,
    /// Sweep axis as name:from:to:steps.
    #[arg(long, allow_hyphen_values = true)]
    sweep: Option<String>,
}

fn parse_sweep(text: &str) -> Result<SweepAxis> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 4 {
        bail!(ParseError(format!(
            "sweep `{text}` must look like name:from:to:steps"
        )));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| ParseError(format!("bad number `{s}` in sweep")))
    };
    let scale = if is_angle(parts[0]) { PI } else { 1.0 };
    Ok(SweepAxis {
        parameter: parts[0].trim().to_string(),
        from: num(parts[1])? * scale,
        to: num(parts[2])? * scale,
        steps: parts[3]
            .trim()
            .parse()
            .map_err(|_| ParseError(format!("bad step count `{}` in sweep", parts[3])))?,
    })
}

fn apply(params: &Params, cfg: &mut RunConfig, list_depths: bool) -> Result<()> {
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = params.$field {
                cfg.$field = v;
            }
        };
    }
    set!(chi);
    set!(eta0);
    set!(alpha);
    set!(alpha0);
    set!(truncation);
    set!(kappa);
    if let Some(l) = params.length {
        cfg.length_km = l;
    }
    if let Some(d) = params.dark {
        cfg.dark = Some(d);
        cfg.trade_off = None;
    }
    if params.trade_off {
        cfg.dark = None;
        cfg.trade_off = Some(TradeOff {
            a: params.trade_a,
            b: params.trade_b,
        });
    }
    if let Some(b) = params.channel_base {
        cfg.channel_base = match b {
            Base::Ten => ChannelBase::Ten,
            Base::E => ChannelBase::E,
        };
    }
    if let Some(d) = params.delta_a {
        cfg.delta_a = d * PI;
    }
    if let Some(d) = params.delta_b {
        cfg.delta_b = d * PI;
    }
    if let Some(list) = &params.n_swaps {
        if list_depths {
            cfg.n_swaps_list = list.clone();
        } else if let [n] = list.as_slice() {
            cfg.n_swaps = *n;
        } else {
            bail!(ParseError("--n-swaps takes a single value here".into()));
        }
    }
    if params.oracle_truncation.is_some() {
        cfg.oracle_truncation = params.oracle_truncation;
    }
    if let Some(p) = &params.inner_pattern {
        cfg.inner_pattern = Some(p.clone());
    }
    if params.extremize {
        cfg.visibility_mode = VisibilityMode::ExtremizeDeltaB;
    }
    if let Some(s) = &params.sweep {
        cfg.sweep = Some(parse_sweep(s)?);
    }
    if let Some(o) = &params.output {
        cfg.output = Some(o.clone());
    }
    Ok(())
}

fn resolve(
    name: &str,
    figure: Option<Figure>,
    params: &Params,
    workers: Option<usize>,
) -> Result<RunConfig> {
    let mut cfg = match (&params.config, figure) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(f)) => reproduce::preset(f),
        (None, None) => RunConfig::default(),
    };
    cfg.command = name.to_string();
    if let Some(f) = figure {
        cfg.figure = Some(f.id());
        if cfg.output.is_none() {
            cfg.output = Some(f.id());
        }
    } else {
        cfg.figure = None;
    }
    if params.config.is_none() && name == "optimize" {
        cfg.dark = None;
        cfg.trade_off = Some(TradeOff::default());
    }
    apply(params, &mut cfg, figure.is_some())?;
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Status {
    Ok,
    Partial(usize),
    CheckFailed,
}

fn execute(cli: &Cli) -> Result<Status> {
    let (name, figure, params) = match &cli.command {
        Command::Visibility(p) => ("visibility", None, p),
        Command::Coincidence(p) => ("coincidence", None, p),
        Command::Keyrate(p) => ("keyrate", None, p),
        Command::Optimize(p) => ("optimize", None, p),
        Command::Sweep(p) => ("sweep", None, p),
        Command::Tgw(p) => ("tgw", None, p),
        Command::OracleCheck(p) => ("oracle-check", None, p),
        Command::Reproduce { figure, params } => ("reproduce", Some(*figure), params),
    };
    let cfg = resolve(name, figure, params, cli.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .context("starting worker pool")?;
    let mut check_failed = false;
    let report = pool.install(|| -> Result<_> {
        Ok(match name {
            "visibility" => commands::visibility(&cfg)?,
            "coincidence" => commands::coincidence(&cfg)?,
            "keyrate" => commands::keyrate(&cfg)?,
            "optimize" => commands::optimize(&cfg)?,
            "sweep" => commands::sweep(&cfg)?,
            "tgw" => commands::tgw(&cfg)?,
            "oracle-check" => {
                let (report, agree) = commands::oracle_check(&cfg)?;
                check_failed = !agree;
                report
            }
            _ => reproduce::run(figure.expect("reproduce has a figure"), &cfg)?,
        })
    })?;
    for path in output::emit(&report, &cfg)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(if check_failed {
        Status::CheckFailed
    } else if report.failures > 0 {
        Status::Partial(report.failures)
    } else {
        Status::Ok
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    match execute(&cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::CheckFailed) => 1,
        Ok(Status::Partial(n)) => {
            eprintln!("warning: {n} point(s) failed; partial output written");
            3
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ParseError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
