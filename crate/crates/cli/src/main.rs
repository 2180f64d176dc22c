use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vlf_core::capacity::{capacity, restrict_to_support, CapacityError, DEFAULT_MAX_ITER, DEFAULT_TOL, SUPPORT_THRESHOLD};
use vlf_core::channel::{compute_info, ChannelError, Dmc};
use vlf_core::harness::{
    drift_audit, md_curve, prepare_channel, read_csv, resolve_threads, run_campaign, with_pool, CampaignConfig,
    DriftAuditOptions, HarnessError, OutputFormat, RhoFamily,
};
use vlf_core::lab::{
    audit_schedule, converse_roots, simulate_stopping, AuditError, DriftWalkSpec, RootsError, StepLaw, TwoRegime,
    WalkError,
};
use vlf_core::scheme::{solve_p0, Mode, Regime, SchemeError};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "vlf", version, about = "Variable-length feedback coding simulator")]
struct Cli {
    /// Worker threads (default: VLF_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel quantities B, B*, C, C2 and the operating regime.
    Info { channel: PathBuf },
    /// Capacity and capacity-achieving input law.
    Capacity {
        channel: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run a Monte Carlo campaign over a grid of target blocklengths.
    Simulate(SimulateArgs),
    /// Moderate-deviations table from a campaign CSV.
    MdCurve {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Exact drift identities on posteriors visited by the scheme.
    DriftAudit {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        states: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "M", default_value_t = 8)]
        messages: usize,
        #[arg(long = "N", default_value_t = 60.0)]
        n: f64,
        #[arg(long, default_value_t = 12.0)]
        log_eps: f64,
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[arg(long)]
        p0: Option<f64>,
    },
    /// Stopping time of a synthetic drift walk.
    Walk {
        #[arg(long, value_enum, default_value_t = WalkRegime::SingleUp)]
        regime: WalkRegime,
        #[arg(long)]
        k1: f64,
        #[arg(long)]
        k2: f64,
        #[arg(long)]
        k3: f64,
        #[arg(long = "T0", default_value_t = 0.0)]
        t0: f64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        xi0: f64,
        #[arg(long, value_enum, default_value_t = StepLawArg::TwoPoint)]
        step_law: StepLawArg,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Case-2 schedule audit over design lengths.
    Audit {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long = "L-grid", value_delimiter = ',', default_value = "100,1000,10000,100000,1000000")]
        l_grid: Vec<f64>,
        /// Backoff rho'_L = L^(-s).
        #[arg(long, default_value_t = 1.0 / 3.0)]
        rho_exp: f64,
        #[arg(long, default_value_t = 0.0)]
        const_q: f64,
    },
    /// Both roots of x/C = ln(x)/B + b.
    Roots {
        #[arg(long = "B")]
        b_div: f64,
        #[arg(long = "C")]
        c: f64,
        #[arg(long = "b")]
        b: f64,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// JSON campaign config; command-line flags then override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long = "N-grid", value_delimiter = ',')]
    n_grid: Option<Vec<f64>>,
    /// pow:<s> or const:<c>.
    #[arg(long)]
    rho: Option<RhoFamily>,
    /// Fixed message count; omit to couple M to the rate.
    #[arg(long = "M")]
    messages: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    const_q: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_max_factor: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    tol_rel: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Theory,
    Calibrated,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Case1,
    Case2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum WalkRegime {
    SingleUp,
    UpThenDown,
    UpThenUp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepLawArg {
    TwoPoint,
    Uniform,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Case1 => Regime::Case1,
            RegimeArg::Case2 => Regime::Case2,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<CapacityError> for Failure {
    fn from(e: CapacityError) -> Self {
        let code = match e {
            CapacityError::NotConverged { .. } => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        let code = match e {
            SchemeError::InvalidParams(_) | SchemeError::MissingCapacity => EXIT_CONFIG,
            _ => EXIT_INFEASIBLE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Channel(e) => e.into(),
            HarnessError::Capacity(e) => e.into(),
            HarnessError::Scheme(e) => e.into(),
            other => Failure::config(other.to_string()),
        }
    }
}

impl From<WalkError> for Failure {
    fn from(e: WalkError) -> Self {
        let code = match e {
            WalkError::AllGuarded(_) => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<RootsError> for Failure {
    fn from(e: RootsError) -> Self {
        let code = match e {
            RootsError::NoTwoRoots { .. } => EXIT_INFEASIBLE,
            RootsError::Invalid { .. } => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(e.to_string())
    }
}

/// One JSON record per line; a closed stdout is not an error.
fn emit(v: &Value) {
    let _ = writeln!(std::io::stdout().lock(), "{v}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let threads = resolve_threads(cli.threads)?;
    match cli.command {
        Command::Info { channel } => info(&channel),
        Command::Capacity { channel, tol } => {
            let dmc = Dmc::load(&channel)?;
            let r = capacity(&dmc, tol, DEFAULT_MAX_ITER)?;
            emit(&json!({
                "capacity_nats": r.capacity,
                "capacity_bits": r.capacity_bits(),
                "px_star": r.px_star,
                "gap": r.gap,
                "iterations": r.iterations,
                "support": r.support,
            }));
            Ok(0)
        }
        Command::Simulate(args) => simulate(args, threads),
        Command::MdCurve { input } => {
            let rows = read_csv(&input)?;
            let curve = md_curve(&rows)?;
            emit(&serde_json::to_value(&curve)?);
            Ok(0)
        }
        Command::DriftAudit {
            channel,
            states,
            seed,
            messages,
            n,
            log_eps,
            regime,
            p0,
        } => {
            let dmc = Dmc::load(&channel)?;
            let options = DriftAuditOptions {
                messages,
                n_target: n,
                rho: n.powf(-1.0 / 3.0),
                log_eps,
                max_states: states,
                seed,
                regime: regime.map(Into::into),
                p0,
            };
            let report = with_pool(threads, || drift_audit(&dmc, &options))??;
            emit(&json!({ "pass": report.pass(), "report": report }));
            Ok(if report.pass() { 0 } else { EXIT_INVARIANT })
        }
        Command::Walk {
            regime,
            k1,
            k2,
            k3,
            t0,
            t,
            xi0,
            step_law,
            trials,
            seed,
        } => {
            let spec = DriftWalkSpec {
                k1,
                k2,
                k3,
                t,
                t0,
                xi0,
                regime: match regime {
                    WalkRegime::SingleUp => TwoRegime::SingleUp,
                    WalkRegime::UpThenDown => TwoRegime::UpThenDown,
                    WalkRegime::UpThenUp => TwoRegime::UpThenUp,
                },
                step_law: match step_law {
                    StepLawArg::TwoPoint => StepLaw::TwoPoint,
                    StepLawArg::Uniform => StepLaw::TruncatedUniform,
                },
            };
            let r = with_pool(threads, || simulate_stopping(&spec, trials, seed))??;
            emit(&json!({ "spec": spec, "result": r }));
            Ok(0)
        }
        Command::Audit {
            channel,
            l_grid,
            rho_exp,
            const_q,
        } => {
            let ch = prepare_channel(&Dmc::load(&channel)?)?;
            let mut code = 0;
            for l in l_grid {
                let a = audit_schedule(&ch.info, ch.capacity, l, l.powf(-rho_exp), const_q)?;
                if a.holds() == Some(false) {
                    code = EXIT_INVARIANT;
                }
                emit(&json!({ "holds": a.holds(), "audit": a }));
            }
            Ok(code)
        }
        Command::Roots { b_div, c, b } => {
            let r = converse_roots(b_div, c, b)?;
            emit(&serde_json::to_value(r)?);
            Ok(0)
        }
    }
}

fn info(path: &PathBuf) -> Result<u8, Failure> {
    let dmc = Dmc::load(path)?;
    let raw = compute_info(&dmc);
    let full = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let restricted = restrict_to_support(&dmc, &full, SUPPORT_THRESHOLD)?;
    let c = full.capacity;
    let ch = prepare_channel(&dmc)?;
    let regime = Regime::for_channel(ch.info.b_star, ch.capacity);
    let p0 = match regime {
        Regime::Case1 => match solve_p0(&ch.dmc, &ch.info, ch.capacity) {
            Ok(s) => json!(s),
            Err(e) => json!({ "error": e.to_string() }),
        },
        Regime::Case2 => Value::Null,
    };
    emit(&json!({
        "inputs": dmc.input_size(),
        "outputs": dmc.output_size(),
        "b": raw.b,
        "b_star": raw.b_star,
        "c2": raw.c2,
        "t_ratio": raw.t_ratio,
        "capacity": c,
        "b_over_c": raw.b / c,
        "px_star": full.px_star,
        "support": restricted.kept,
        "restricted": {
            "b": ch.info.b,
            "b_star": ch.info.b_star,
            "x0": ch.info.x0,
            "x0_prime": ch.info.x0_prime,
        },
        "regime": regime,
        "p0": p0,
    }));
    Ok(0)
}

fn simulate(args: SimulateArgs, threads: Option<usize>) -> Result<u8, Failure> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str::<CampaignConfig>(&std::fs::read_to_string(path)?)?,
        None => {
            let missing = |what: &str| Failure::config(format!("--{what} is required without --config"));
            CampaignConfig::new(
                args.channel.clone().ok_or_else(|| missing("channel"))?,
                args.n_grid.clone().ok_or_else(|| missing("N-grid"))?,
                args.rho.ok_or_else(|| missing("rho"))?,
                args.trials.ok_or_else(|| missing("trials"))?,
                args.seed.ok_or_else(|| missing("seed"))?,
            )
        }
    };
    if let Some(v) = args.channel {
        cfg.channel_path = v;
    }
    if let Some(v) = args.n_grid {
        cfg.n_grid = v;
    }
    if let Some(v) = args.rho {
        cfg.rho_family = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.messages.is_some() {
        cfg.messages = args.messages;
    }
    if let Some(v) = args.mode {
        cfg.mode = match v {
            ModeArg::Theory => Mode::Theory,
            ModeArg::Calibrated => Mode::Calibrated,
        };
    }
    if let Some(v) = args.const_q {
        cfg.const_q = v;
    }
    if let Some(v) = args.n_max_factor {
        cfg.n_max_factor = v;
    }
    if let Some(v) = args.regime {
        cfg.regime = Some(v.into());
    }
    if args.p0.is_some() {
        cfg.p0 = args.p0;
    }
    if let Some(v) = args.tol_rel {
        cfg.tol_rel = v;
    }
    if args.out.is_some() {
        cfg.output = args.out;
    }
    if let Some(v) = args.format {
        cfg.format = match v {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Jsonl => OutputFormat::Jsonl,
        };
    }
    if cfg.threads.is_none() {
        cfg.threads = threads;
    }

    let campaign = run_campaign(&cfg)?;
    if let Some(path) = &cfg.output {
        vlf_core::harness::write_summaries(path, cfg.format, &campaign.points)?;
    }
    let mut violations = Vec::new();
    for p in &campaign.points {
        if !p.fano_pass {
            violations.push(format!("N = {}: Fano inequality violated", p.n));
        }
        if p.mode == Mode::Calibrated && !p.tau_on_target {
            violations.push(format!("N = {}: mean tau {} off target", p.n, p.mean_tau));
        }
    }
    for p in &campaign.points {
        let mut v = serde_json::to_value(p)?;
        v["wall_seconds"] = json!(p.wall_seconds);
        emit(&v);
    }
    emit(&json!({
        "config_hash": campaign.config_hash,
        "seed": cfg.seed,
        "points": campaign.points.len(),
        "skipped": campaign.skipped,
        "violations": violations,
    }));
    Ok(if !violations.is_empty() {
        EXIT_INVARIANT
    } else if !campaign.skipped.is_empty() {
        EXIT_INFEASIBLE
    } else {
        0
    })
}
