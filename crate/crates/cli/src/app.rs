//! Command-line surface.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Format};
use crate::experiments::{run_experiment, Sinks};
use crate::report::{emit_report, sidecar};

#[derive(Debug, Parser)]
#[command(name = "exceedmc", version, about = "Importance sampling for exceedance and boundary-crossing probabilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed-horizon two-sided tail of the three-state chain.
    Table1(Common),
    /// Boundary crossing of the regime-switching Gaussian walk.
    Table2(Common),
    /// Single tilt against the two-point mixture for |S_n| >= a n.
    Counterexample(Common),
    /// One user-specified model, event and method.
    Estimate(Common),
    /// Exact martingale and unbiasedness checks plus eigenfunction estimates.
    Verify(Common),
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Table1(_) => "table1",
            Command::Table2(_) => "table2",
            Command::Counterexample(_) => "counterexample",
            Command::Estimate(_) => "estimate",
            Command::Verify(_) => "verify",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Table1(c) | Command::Table2(c) | Command::Counterexample(c) | Command::Estimate(c) | Command::Verify(c) => c,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config; optional except for `estimate`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write mixture components to `<out>.mixture.csv` (stderr without --out).
    #[arg(long)]
    pub dump_mixture: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write per-run trajectory records as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Reads the config (or the subcommand's defaults) and applies the flags.
pub fn load_config(command: &Command) -> Result<ExperimentConfig> {
    let c = command.common();
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None if command.kind() == "estimate" => bail!("estimate needs --config"),
        None => format!(r#"{{"experiment":{{"kind":"{}"}}}}"#, command.kind()),
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).context("config is not valid JSON")?;
    let obj = value.as_object_mut().context("config must be a JSON object")?;
    if let Some(s) = c.seed {
        obj.insert("seed".into(), s.into());
    }
    if let Some(r) = c.runs {
        obj.insert("runs".into(), r.into());
    }
    if let Some(w) = c.workers {
        obj.insert("workers".into(), w.into());
    }
    if c.out.is_some() || c.format.is_some() {
        let out = obj.entry("output").or_insert_with(|| serde_json::json!({}));
        let out = out.as_object_mut().context("output must be an object")?;
        if let Some(p) = &c.out {
            out.insert("path".into(), p.to_string_lossy().into_owned().into());
        }
        if let Some(f) = c.format {
            out.insert("format".into(), serde_json::to_value(f)?);
        }
    }
    let cfg = ExperimentConfig::from_json(&value.to_string()).with_context(|| match &c.config {
        Some(p) => format!("in config {}", p.display()),
        None => "in default config".into(),
    })?;
    let kind = serde_json::to_value(&cfg.experiment)?["kind"].as_str().unwrap_or_default().to_string();
    if kind != command.kind() {
        bail!("config describes a {kind} experiment, not {}", command.kind());
    }
    Ok(cfg)
}

fn open(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn main(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.command)?;
    let common = cli.command.common();
    let out_path = cfg.output.path.clone();

    let mut trace = common.trace.as_ref().map(open).transpose()?;
    let mut mixtures: Option<Box<dyn Write>> = match (common.dump_mixture, &out_path) {
        (false, _) => None,
        (true, Some(p)) => Some(Box::new(open(&sidecar(p, "mixture.csv"))?)),
        (true, None) => Some(Box::new(std::io::stderr())),
    };
    let mut sinks = Sinks {
        trace: trace.as_mut().map(|w| w as &mut dyn Write),
        mixtures: mixtures.as_deref_mut().map(|w| w as &mut dyn Write),
    };
    let outcome = run_experiment(&cfg, &mut sinks)?;
    if let Some(mut t) = trace {
        t.flush()?;
    }
    if let Some(mut m) = mixtures {
        m.flush()?;
    }

    for note in &outcome.notes {
        eprintln!("{note}");
    }
    emit_report(&outcome.rows, cfg.output.format, out_path.as_deref())?;
    if let Some(p) = &out_path {
        let side = sidecar(p, "config.json");
        std::fs::write(&side, serde_json::to_string_pretty(&cfg)? + "\n").with_context(|| format!("writing {}", side.display()))?;
    }
    let failed = outcome.rows.iter().filter(|r| r.is_failed()).count();
    if failed > 0 {
        eprintln!("{failed} row(s) failed");
    }
    if cli.command.kind() == "verify" && outcome.rows.iter().any(|r| r.display.contains("FAIL")) {
        bail!("verification failed");
    }
    Ok(())
}
