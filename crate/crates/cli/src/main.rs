use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use qpower_core::harness::{run_experiment, ExperimentConfig, Verb};

/// Run one experiment and write its artifacts.
///
/// Exit status: 0 when every acceptance check passes, 1 when one fails,
/// 2 on a usage or configuration error. The worker count comes from
/// QPOWER_WORKERS.
#[derive(Parser, Debug)]
#[command(name = "qpower", version)]
struct Cli {
    verb: VerbArg,

    /// JSON config with flat keys; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// `key=value`, applied after the config file and flags.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Dimension or comma-separated sweep.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    /// Compare exact distributions instead of sampling.
    #[arg(long)]
    exact: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum VerbArg {
    Npm,
    Qnpm,
    Subspace,
    LambdaQ,
    PrepareV1,
    Tomography,
    GpeCalibrate,
    PmfDump,
    LowerBound,
    HardInstance,
}

impl VerbArg {
    fn verb(self) -> Verb {
        match self {
            VerbArg::Npm => Verb::Npm,
            VerbArg::Qnpm => Verb::Qnpm,
            VerbArg::Subspace => Verb::Subspace,
            VerbArg::LambdaQ => Verb::LambdaQ,
            VerbArg::PrepareV1 => Verb::PrepareV1,
            VerbArg::Tomography => Verb::Tomography,
            VerbArg::GpeCalibrate => Verb::GpeCalibrate,
            VerbArg::PmfDump => Verb::PmfDump,
            VerbArg::LowerBound => Verb::LowerBound,
            VerbArg::HardInstance => Verb::HardInstance,
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let verb = cli.verb.verb();
    let mut value = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<serde_json::Value>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => serde_json::json!({}),
    };
    let Some(obj) = value.as_object_mut() else {
        bail!("config must be a JSON object");
    };
    match obj.get("experiment").and_then(|e| e.as_str()) {
        Some(name) if name != verb.name() => bail!("config is for `{name}`, not `{}`", verb.name()),
        _ => {
            obj.insert("experiment".into(), verb.name().into());
        }
    }
    let flags = [
        ("d", &cli.d),
        ("q", &cli.q),
        ("gamma", &cli.gamma),
        ("eps", &cli.eps),
        ("delta", &cli.delta),
        ("trials", &cli.trials),
        ("seed", &cli.seed),
        ("mode", &cli.mode),
        ("noise", &cli.noise),
        ("a", &cli.a),
        ("s", &cli.s),
        ("N", &cli.n),
    ];
    let mut overrides: Vec<String> = flags
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}")))
        .collect();
    if cli.exact {
        overrides.push("exact=true".into());
    }
    if let Some(out) = &cli.out {
        obj.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    overrides.extend(cli.overrides.iter().cloned());
    Ok(ExperimentConfig::from_value(value, &overrides)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(rows) = outcome.summary.get("rows").and_then(|r| r.as_array()) {
        for r in rows {
            let label = match (r.get("d"), r.get("a")) {
                (Some(d), _) => format!("d={d}"),
                (None, Some(a)) => format!("a={a}"),
                _ => String::new(),
            };
            let rate = r
                .get("success_rate")
                .or_else(|| r.get("tv"))
                .cloned()
                .unwrap_or_default();
            let ok = r.get("pass").and_then(|p| p.as_bool()).unwrap_or(false);
            println!("  {label} {} {}", if ok { "pass" } else { "fail" }, rate);
        }
    }
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    println!("{verdict} {} -> {}", cfg.experiment.name(), outcome.dir.display());
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
