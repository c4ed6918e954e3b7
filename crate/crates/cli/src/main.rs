//! `pcsqam` command-line runner.
//!
//! Exit status is 0 when every record passed its stages, 2 when at least one
//! stage failed, and 1 for configuration or I/O errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pcsqam::scenario::{run_scenario, write_outputs, Mode, ScenarioConfig, ScenarioResult, SweepAxis};
use pcsqam::constellation::shaped_qam;

#[derive(Parser)]
#[command(name = "pcsqam", version, about = "Probabilistically shaped QAM transmission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario in the mode given by the configuration.
    Run(Common),
    /// Sweep one axis and report the AIR argmax.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept axis: entropy, launch_power, distance or frequency.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Per-channel link budget over the DWDM grid.
    Dwdm(Common),
    /// Repeated measurements of one configuration.
    Monitor(Common),
    /// Write the shaped constellation and its probabilities as CSV.
    ExportConstellation {
        #[arg(long, default_value_t = 256)]
        order: usize,
        /// Target entropy in bit per 2D symbol; uniform when omitted.
        #[arg(long)]
        entropy: Option<f64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write JSON (points, labels, probabilities, H, nu) instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Print a complete configuration with default values.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set format.entropy_bits=7.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Allow trellis detection above the default state limit.
    #[arg(long)]
    full: bool,
    /// Output directory for CSV, JSON and SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let mut overrides = Vec::with_capacity(self.overrides.len() + 1);
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        if self.full {
            overrides.push(("dsp.allow_large_trellis".into(), "true".into()));
        }
        Ok(ScenarioConfig::from_toml(&text, &overrides)?)
    }
}

fn parse_axis(s: &str) -> Result<SweepAxis> {
    Ok(match s {
        "entropy" => SweepAxis::Entropy,
        "launch_power" | "launch" => SweepAxis::LaunchPower,
        "distance" => SweepAxis::Distance,
        "frequency" => SweepAxis::Frequency,
        other => bail!("unknown sweep axis `{other}`"),
    })
}

fn execute(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ExitCode> {
    let result = run_scenario(cfg)?;
    report(&result);
    if let Some(dir) = out.or(cfg.output.dir.as_deref()) {
        for p in write_outputs(&result, dir, &cfg.output.prefix)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(if result.any_failed() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn report(result: &ScenarioResult) {
    print!("{}", result.to_csv());
    let s = &result.summary;
    eprintln!("records: {}, failed: {}", s.records, s.failed);
    if let Some(a) = &s.argmax_air {
        eprintln!(
            "max AIR {:.4} bit/symbol ({:.4} Tb/s) at coordinate {}",
            a.air_bits_per_symbol, a.air_tbps, a.coordinate
        );
    }
    if let Some(d) = &s.dwdm {
        eprintln!(
            "DWDM {}/{} channels, {:.3}-{:.3} THz: {:.2} Tb/s, {:.2} bit/s/Hz",
            d.passing_channels, d.channels, d.start_thz, d.end_thz, d.total_net_tbps, d.spectral_efficiency
        );
    }
    if let Some(st) = &s.air_stats {
        eprintln!("AIR mean {:.4}, std {:.4}, min {:.4}, max {:.4}", st.mean, st.std, st.min, st.max);
    }
}

fn export_constellation(order: usize, entropy: Option<f64>, out: Option<&Path>, json: bool) -> Result<()> {
    let shaped = shaped_qam(order, entropy.unwrap_or((order as f64).log2()))?;
    let mut sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    if json {
        serde_json::to_writer_pretty(&mut sink, &shaped.export())?;
        writeln!(sink)?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["index", "label", "re", "im", "probability"])?;
    let base = shaped.base();
    for (i, (p, prob)) in shaped.points().iter().zip(shaped.probs()).enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:0width$b}", base.labels()[i], width = base.m()),
            format!("{:.9}", p.re),
            format!("{:.9}", p.im),
            format!("{prob:.12e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(c) => execute(&c.load()?, c.out.as_deref()),
        Command::Sweep { common, axis, values } => {
            let mut cfg = common.load()?;
            if let Some(a) = axis {
                cfg.sweep.axis = Some(parse_axis(&a)?);
            }
            if !values.is_empty() {
                cfg.sweep.values = values;
            }
            if cfg.sweep.axis.is_none() {
                bail!("sweep needs an axis, from --axis or [sweep] axis");
            }
            if matches!(cfg.mode, Mode::DwdmBudget | Mode::Monitor) {
                bail!("sweeps run in b2b or single_channel mode");
            }
            execute(&cfg, common.out.as_deref())
        }
        Command::Dwdm(c) => {
            let mut cfg = c.load()?;
            cfg.mode = Mode::DwdmBudget;
            execute(&cfg, c.out.as_deref())
        }
        Command::Monitor(c) => {
            let mut cfg = c.load()?;
            cfg.mode = Mode::Monitor;
            execute(&cfg, c.out.as_deref())
        }
        Command::ExportConstellation {
            order,
            entropy,
            out,
            json,
        } => {
            export_constellation(order, entropy, out.as_deref(), json)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DefaultConfig => {
            let cfg = ScenarioConfig {
                seed: Some(1),
                ..ScenarioConfig::default()
            };
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}
