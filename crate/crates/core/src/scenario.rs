//! End-to-end runs: transmitter, channel, receiver DSP and metrics, swept
//! over one axis and written as CSV, JSON and SVG.
//!
//! Configurations are TOML with every key optional except `seed`. Physical
//! units are part of the key names.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    add_ase, apply_cd, gn_link_snr, iq_impair, osnr_from_snr, phase_noise, random_polarization,
    ImpairmentConfig, LinkConfig, Span,
};
use crate::constellation::{apply_maxwell_boltzmann, build_qam, shaped_qam, ShapedConstellation};
use crate::error::{invalid, Error, Result};
use crate::metrics::{
    air_from_llrs, air_from_posteriors, ensure_aligned, snr_estimate, spectral_efficiency, AirFlavor,
    MetricsReport, ReportMetadata, SymbolAir, REPORT_COLUMNS,
};
use crate::rxdsp::{
    bcjr_detect_windowed, carrier_recover, cd_compensate, estimate_preq_alpha, mimo_equalize, preq_filter,
    soft_demap, volterra_equalize, CprConfig, EqualizerConfig, EqualizerState, LlrBlock,
    Placement, VolterraConfig,
};
use crate::shaping::{label_bits, PasFramer};
use crate::signal::SignalBlock;
use crate::svg::LinePlot;
use crate::txdsp::{map_symbols, TxConfig, TxPipeline};
use crate::{db_to_lin, lin_to_db, rng_from_seed};

/// Version of the CSV and JSON record layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Noise loading at a fixed SNR, no fiber.
    #[default]
    B2b,
    /// One channel over the configured link, SNR from the link budget.
    SingleChannel,
    /// Analytic per-channel budget over a DWDM grid.
    DwdmBudget,
    /// Repeated runs with slow SNR drift.
    Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Entropy,
    LaunchPower,
    /// Number of spans.
    Distance,
    /// Channel frequency in THz.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    #[default]
    Memoryless,
    /// Partial-response equalization followed by BCJR.
    Bcjr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatConfig {
    pub order: usize,
    /// Target entropy; takes precedence over `nu`.
    pub entropy_bits: Option<f64>,
    pub nu: Option<f64>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self {
            order: 256,
            entropy_bits: Some(7.9),
            nu: None,
        }
    }
}

impl FormatConfig {
    /// Shaped constellation; uniform when neither entropy nor `nu` is set or
    /// the entropy equals `log2 M`.
    pub fn build(&self) -> Result<ShapedConstellation> {
        let base = build_qam(self.order)?;
        match (self.entropy_bits, self.nu) {
            (Some(h), _) if (h - (self.order as f64).log2()).abs() < 1e-12 => {
                Ok(ShapedConstellation::uniform(&base))
            }
            (Some(h), _) => shaped_qam(self.order, h),
            (None, Some(nu)) => apply_maxwell_boltzmann(&base, nu),
            (None, None) => Ok(ShapedConstellation::uniform(&base)),
        }
    }

    pub fn label(&self) -> String {
        match (self.entropy_bits, self.nu) {
            (Some(h), _) => format!("PCS-{}QAM H={h}", self.order),
            (None, Some(nu)) => format!("PCS-{}QAM nu={nu}", self.order),
            (None, None) => format!("{}QAM", self.order),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkSection {
    pub span_count: usize,
    pub span_km: f64,
    pub span_loss_db: f64,
    pub dispersion_ps_nm_km: f64,
    pub nf_db: f64,
    pub center_thz: f64,
    /// NLI coefficient per span, 1/W^2. Calibrated when absent.
    pub eta_per_span: Option<f64>,
    /// Launch power the calibration places the optimum at.
    pub calibrate_dbm: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            span_count: 1,
            span_km: 61.3,
            span_loss_db: 19.5,
            dispersion_ps_nm_km: 17.0,
            nf_db: 5.0,
            center_thz: 193.1,
            eta_per_span: None,
            calibrate_dbm: crate::channel::CALIBRATED_OPTIMUM_DBM,
        }
    }
}

impl LinkSection {
    pub fn build(&self) -> Result<LinkConfig> {
        let mut link = LinkConfig {
            spans: vec![
                Span {
                    length_km: self.span_km,
                    attenuation_db: self.span_loss_db,
                };
                self.span_count
            ],
            dispersion_ps_nm_km: self.dispersion_ps_nm_km,
            center_frequency_hz: self.center_thz * 1e12,
            edfa_nf_db: self.nf_db,
            ..LinkConfig::default()
        };
        link.validate()?;
        link.nli_eta_per_span = match self.eta_per_span {
            Some(eta) => eta,
            None if self.span_count > 0 => crate::channel::calibrate_eta(&link, self.calibrate_dbm)?,
            None => 0.0,
        };
        Ok(link)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    /// Explicit coordinates; used when non-empty.
    pub values: Vec<f64>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

impl SweepSection {
    /// Sweep coordinates in order.
    pub fn points(&self) -> Result<Vec<f64>> {
        if !self.values.is_empty() {
            return Ok(self.values.clone());
        }
        match (self.start, self.stop, self.step) {
            (Some(a), Some(b), Some(s)) => {
                if !(s > 0.0) || b < a {
                    return Err(invalid("sweep", "need step > 0 and stop >= start"));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| a + i as f64 * s).collect())
            }
            _ => Err(invalid("sweep", "range is empty: give values or start/stop/step")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspSection {
    pub mimo: bool,
    pub equalizer: EqualizerConfig,
    pub carrier_recovery: bool,
    pub cpr: CprConfig,
    pub volterra: bool,
    pub volterra_config: VolterraConfig,
    pub detector: Detector,
    pub bcjr_window: usize,
    pub bcjr_overlap: usize,
    pub allow_large_trellis: bool,
    /// Symbols per noise-variance estimate of the memoryless demapper.
    pub sigma_block: usize,
    pub air_flavor: AirFlavor,
    pub symbolwise_air: bool,
}

impl Default for DspSection {
    fn default() -> Self {
        Self {
            mimo: true,
            equalizer: EqualizerConfig::default(),
            carrier_recovery: true,
            cpr: CprConfig::default(),
            volterra: false,
            volterra_config: VolterraConfig::default(),
            detector: Detector::Memoryless,
            bcjr_window: 4096,
            bcjr_overlap: 64,
            allow_large_trellis: false,
            sigma_block: 8192,
            air_flavor: AirFlavor::Bitwise,
            symbolwise_air: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwdmSection {
    pub start_thz: f64,
    pub count: usize,
    pub spacing_ghz: f64,
    /// SNR penalty per THz of distance from the grid centre.
    pub penalty_db_per_thz: f64,
}

impl Default for DwdmSection {
    fn default() -> Self {
        Self {
            start_thz: 191.225,
            count: 34,
            spacing_ghz: 150.0,
            penalty_db_per_thz: 0.0,
        }
    }
}

impl DwdmSection {
    pub fn frequencies_thz(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.start_thz + i as f64 * self.spacing_ghz * 1e-3)
            .collect()
    }

    pub fn end_thz(&self) -> f64 {
        self.start_thz + self.count.saturating_sub(1) as f64 * self.spacing_ghz * 1e-3
    }

    pub fn center_thz(&self) -> f64 {
        0.5 * (self.start_thz + self.end_thz())
    }

    fn penalty_db(&self, f_thz: f64) -> f64 {
        self.penalty_db_per_thz * (f_thz - self.center_thz()).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorSection {
    pub repetitions: usize,
    pub interval_s: f64,
    /// Amplitude of the sinusoidal SNR drift.
    pub drift_db: f64,
    /// Drift period in repetitions.
    pub drift_period: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            repetitions: 20,
            interval_s: 45.0,
            drift_db: 0.0,
            drift_period: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            prefix: "pcsqam".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Required; there is no clock-derived fallback.
    pub seed: Option<u64>,
    /// Draw a fresh realization per sweep point instead of reusing one.
    pub independent_seeds: bool,
    pub format: FormatConfig,
    pub rs_gbaud: f64,
    pub symbols: usize,
    pub frame_symbols: usize,
    pub overhead: f64,
    pub net_target_tbps: Option<f64>,
    /// Electrical SNR for back-to-back runs.
    pub snr_db: f64,
    pub launch_dbm: f64,
    /// SNR ceiling of the transceiver, combined with the link SNR.
    pub transceiver_snr_db: Option<f64>,
    pub random_polarization: bool,
    pub link: LinkSection,
    pub impairments: ImpairmentConfig,
    pub tx: TxConfig,
    pub dsp: DspSection,
    pub sweep: SweepSection,
    pub dwdm: DwdmSection,
    pub monitor: MonitorSection,
    pub output: OutputSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::B2b,
            seed: None,
            independent_seeds: false,
            format: FormatConfig::default(),
            rs_gbaud: 130.0,
            symbols: 1 << 16,
            frame_symbols: 2048,
            overhead: 0.137,
            net_target_tbps: None,
            snr_db: 20.0,
            launch_dbm: 7.0,
            transceiver_snr_db: None,
            random_polarization: false,
            link: LinkSection::default(),
            impairments: ImpairmentConfig::default(),
            tx: TxConfig::default(),
            dsp: DspSection::default(),
            sweep: SweepSection::default(),
            dwdm: DwdmSection::default(),
            monitor: MonitorSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn config_error(reason: impl std::fmt::Display) -> Error {
    invalid("config", reason.to_string())
}

/// Sets a dotted `key` in a TOML table. `value` is read as a TOML value and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| config_error("empty override key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

impl ScenarioConfig {
    /// Parses TOML and applies `key=value` overrides in order.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_error)?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(invalid("seed", "a seed is mandatory"));
        }
        if !(self.rs_gbaud > 0.0) {
            return Err(invalid("rs_gbaud", "must be positive"));
        }
        if self.symbols == 0 || self.frame_symbols == 0 {
            return Err(invalid("symbols", "symbol and frame counts must be positive"));
        }
        if self.sweep.axis.is_some() {
            self.sweep.points()?;
        }
        if self.mode == Mode::Monitor && self.monitor.repetitions < 2 {
            return Err(invalid("monitor.repetitions", "need at least 2"));
        }
        if self.mode == Mode::DwdmBudget && (self.dwdm.count == 0 || !(self.dwdm.spacing_ghz > 0.0)) {
            return Err(invalid("dwdm", "need at least one channel and positive spacing"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn symbol_rate(&self) -> f64 {
        self.rs_gbaud * 1e9
    }

    /// SHA-256 of the configuration without its output section, hex.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let json = serde_json::to_string(&c).expect("config is serializable");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn with_coordinate(&self, axis: Option<SweepAxis>, v: f64) -> Self {
        let mut c = self.clone();
        match axis {
            Some(SweepAxis::Entropy) => c.format.entropy_bits = Some(v),
            Some(SweepAxis::LaunchPower) => c.launch_dbm = v,
            Some(SweepAxis::Distance) => c.link.span_count = v.round().max(0.0) as usize,
            Some(SweepAxis::Frequency) => c.link.center_thz = v,
            None => {}
        }
        c
    }

    /// Electrical SNR the waveform is loaded to.
    pub fn target_snr_db(&self) -> Result<f64> {
        let base = match self.mode {
            Mode::B2b => self.snr_db,
            _ if self.link.span_count == 0 => self.snr_db,
            _ => gn_link_snr(&self.link.build()?, self.launch_dbm).snr_db,
        };
        let combined = match self.transceiver_snr_db {
            Some(trx) => -lin_to_db(1.0 / db_to_lin(base) + 1.0 / db_to_lin(trx)),
            None => base,
        };
        let penalty = if self.sweep.axis == Some(SweepAxis::Frequency) {
            self.dwdm.penalty_db(self.link.center_thz)
        } else {
            0.0
        };
        Ok(combined - penalty)
    }
}

/// One row of the output table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub index: usize,
    pub mode: Mode,
    pub axis: Option<SweepAxis>,
    pub coordinate: f64,
    pub seed: u64,
    pub snr_target_db: f64,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub cycle_slips: usize,
    pub preq_alpha: Option<f64>,
    /// AIR covers the net rate and the net rate meets the declared target.
    pub pass: bool,
    pub report: Option<MetricsReport>,
}

impl ResultRecord {
    pub fn failed(&self) -> bool {
        self.failed_stage.is_some()
    }
}

/// Leading CSV columns before the [`REPORT_COLUMNS`].
pub const RECORD_COLUMNS: [&str; 13] = [
    "schema_version",
    "index",
    "mode",
    "axis",
    "coordinate",
    "seed",
    "snr_target_db",
    "status",
    "failed_stage",
    "error",
    "cycle_slips",
    "preq_alpha",
    "pass",
];

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Argmax {
    pub index: usize,
    pub coordinate: f64,
    pub air_bits_per_symbol: f64,
    pub air_tbps: f64,
    pub net_bitrate_tbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DwdmAggregate {
    pub channels: usize,
    pub passing_channels: usize,
    pub start_thz: f64,
    pub end_thz: f64,
    pub spacing_ghz: f64,
    pub total_net_tbps: f64,
    pub spectral_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub len: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub failed: usize,
    pub argmax_air: Option<Argmax>,
    pub dwdm: Option<DwdmAggregate>,
    pub air_stats: Option<SeriesStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub config_hash: String,
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
}

impl ScenarioResult {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(ResultRecord::failed)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let keep: Vec<bool> = REPORT_COLUMNS.iter().map(|c| !RECORD_COLUMNS.contains(c)).collect();
        let report_columns = || REPORT_COLUMNS.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| *c);
        let header: Vec<&str> = RECORD_COLUMNS.iter().copied().chain(report_columns()).collect();
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![
                r.schema_version.to_string(),
                r.index.to_string(),
                snake(&r.mode),
                r.axis.as_ref().map(snake).unwrap_or_default(),
                r.coordinate.to_string(),
                r.seed.to_string(),
                r.snr_target_db.to_string(),
                if r.failed() { "failed" } else { "ok" }.to_string(),
                r.failed_stage.clone().unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
                r.cycle_slips.to_string(),
                r.preq_alpha.map(|a| a.to_string()).unwrap_or_default(),
                r.pass.to_string(),
            ];
            match &r.report {
                Some(rep) => row.extend(rep.csv_fields().into_iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v)),
                None => row.extend(std::iter::repeat_n(String::new(), report_columns().count())),
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 fields")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result is serializable")
    }

    /// AIR and net rate against the sweep coordinate.
    pub fn plot(&self, title: &str) -> LinePlot {
        let axis = self.records.first().and_then(|r| r.axis);
        let x_label = match (self.records.first().map(|r| r.mode), axis) {
            (Some(Mode::Monitor), _) => "time (s)",
            (Some(Mode::DwdmBudget), _) | (_, Some(SweepAxis::Frequency)) => "frequency (THz)",
            (_, Some(SweepAxis::Entropy)) => "entropy (bit/symbol)",
            (_, Some(SweepAxis::LaunchPower)) => "launch power (dBm)",
            (_, Some(SweepAxis::Distance)) => "spans",
            _ => "point",
        };
        let mut plot = LinePlot::new(title, x_label, "rate (Tb/s)");
        let pick = |f: fn(&MetricsReport) -> f64| -> Vec<(f64, f64)> {
            self.records
                .iter()
                .filter_map(|r| r.report.as_ref().map(|rep| (r.coordinate, f(rep))))
                .collect()
        };
        plot.add_series("AIR", pick(|r| r.air_tbps));
        plot.add_series("net bitrate", pick(|r| r.net_bitrate_tbps));
        plot
    }
}

/// Writes `<prefix>.csv`, `<prefix>.json` and `<prefix>.svg` into `dir`.
pub fn write_outputs(result: &ScenarioResult, dir: &Path, prefix: &str) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{prefix}.csv"));
    let json = dir.join(format!("{prefix}.json"));
    let svg = dir.join(format!("{prefix}.svg"));
    std::fs::write(&csv, result.to_csv())?;
    std::fs::write(&json, result.to_json())?;
    std::fs::write(&svg, result.plot(prefix).render())?;
    Ok(vec![csv, json, svg])
}

/// Seed of sweep point `index`.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct StageFailure {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageFailure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageFailure> {
        self.map_err(|error| StageFailure { stage: name, error })
    }
}

#[derive(Default)]
struct RunExtras {
    cycle_slips: usize,
    preq_alpha: Option<f64>,
}

/// Symbol-level Monte Carlo over AWGN: i.i.d. symbols from the shaped
/// distribution, memoryless demapping at the true noise variance.
/// Returns the bit-wise and symbol-wise AIR.
pub fn simulate_awgn_air<R: Rng + ?Sized>(
    shaped: &ShapedConstellation,
    snr_db: f64,
    n: usize,
    rng: &mut R,
) -> Result<(f64, SymbolAir)> {
    if n == 0 {
        return Err(invalid("n", "need at least one symbol"));
    }
    let dist = WeightedIndex::new(shaped.probs()).map_err(|e| invalid("probs", e.to_string()))?;
    let sigma2 = 1.0 / db_to_lin(snr_db);
    let sd = (sigma2 / 2.0).sqrt();
    let tx: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
    let rx: Vec<Complex64> = tx
        .iter()
        .map(|&i| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            shaped.points()[i] + Complex64::new(a, b) * sd
        })
        .collect();
    let llrs = soft_demap(&rx, shaped, sigma2)?.with_bits(label_bits(shaped, &tx))?;
    let bitwise = air_from_llrs(&llrs, shaped)?;
    let symbolwise = memoryless_symbol_air(&rx, &tx, shaped, |_| sigma2)?;
    Ok((bitwise, symbolwise))
}

/// Memoryless symbol-wise AIR streamed over the symbols. Prior and
/// likelihood factor over I and Q, so the posterior does too.
fn memoryless_symbol_air(
    rx: &[Complex64],
    tx: &[usize],
    shaped: &ShapedConstellation,
    sigma2: impl Fn(usize) -> f64,
) -> Result<SymbolAir> {
    if rx.len() != tx.len() || tx.is_empty() {
        return Err(Error::LengthMismatch {
            what: "symbol-wise AIR inputs",
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    let base = shaped.base();
    let side = base.side();
    let coords: Vec<f64> = (0..side).map(|l| shaped.level_coordinate(l)).collect();
    let log_prior: Vec<f64> = shaped.level_probs().iter().map(|p| p.ln()).collect();
    let floor = crate::metrics::POSTERIOR_FLOOR.ln();
    let mut metric = vec![0.0; side];
    let mut acc = 0.0;
    let mut floored = 0;
    for (k, (y, &x)) in rx.iter().zip(tx).enumerate() {
        let inv = 1.0 / sigma2(k);
        let (li, lq) = base.levels_of(x);
        let mut lp = 0.0;
        for (c, l) in [(y.re, li), (y.im, lq)] {
            for (j, m) in metric.iter_mut().enumerate() {
                let d = c - coords[j];
                *m = log_prior[j] - d * d * inv;
            }
            lp += metric[l] - crate::rxdsp::demap::log_sum_exp(metric.iter().copied());
        }
        if !(lp >= floor) {
            lp = floor;
            floored += 1;
        }
        acc += lp;
    }
    Ok(SymbolAir {
        air: (shaped.entropy() + acc / std::f64::consts::LN_2 / tx.len() as f64).max(0.0),
        floored,
    })
}

fn draw_frames<R: Rng + ?Sized>(
    shaped: &ShapedConstellation,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<[Vec<usize>; 2]> {
    let framer = PasFramer::new(shaped, cfg.overhead, cfg.frame_symbols)?;
    let frames = cfg.symbols.div_ceil(cfg.frame_symbols);
    let mut draw = || -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(frames * cfg.frame_symbols);
        for _ in 0..frames {
            let info: Vec<u8> = (0..framer.info_bits()).map(|_| u8::from(rng.random::<bool>())).collect();
            idx.extend(framer.frame(&info, rng)?.symbols);
        }
        Ok(idx)
    };
    Ok([draw()?, draw()?])
}

fn split_tributaries(s: &[Vec<Complex64>; 2]) -> Vec<Vec<f64>> {
    s.iter()
        .flat_map(|p| [p.iter().map(|v| v.re).collect(), p.iter().map(|v| v.im).collect()])
        .collect()
}

fn join_tributaries(t: &[Vec<f64>]) -> [Vec<Complex64>; 2] {
    let pol = |i: usize| t[i].iter().zip(&t[i + 1]).map(|(&re, &im)| Complex64::new(re, im)).collect();
    [pol(0), pol(2)]
}

/// Full waveform run at electrical SNR `snr_db`.
fn simulate_waveform(
    cfg: &ScenarioConfig,
    seed: u64,
    snr_db: f64,
    hash: &str,
) -> std::result::Result<(MetricsReport, RunExtras), StageFailure> {
    let rs = cfg.symbol_rate();
    let shaped = cfg.format.build().stage("shaping")?;
    let mut rng = rng_from_seed(seed);
    let tx_idx = draw_frames(&shaped, cfg, &mut rng).stage("shaping")?;
    let tx_sym = [
        map_symbols(&tx_idx[0], &shaped).stage("mapping")?,
        map_symbols(&tx_idx[1], &shaped).stage("mapping")?,
    ];
    let mut sig = TxPipeline::new(cfg.tx.clone())
        .run(&tx_sym[0], &tx_sym[1], rs, &mut rng)
        .stage("tx")?;

    let link = match cfg.mode {
        Mode::B2b => LinkConfig::back_to_back(),
        _ => cfg.link.build().stage("channel")?,
    };
    sig = apply_cd(&sig, &link);
    if cfg.random_polarization {
        sig = random_polarization(&sig, &mut rng).0;
    }
    sig = add_ase(&sig, osnr_from_snr(snr_db, rs), &mut rng).stage("channel")?;
    sig = phase_noise(&sig, cfg.impairments.linewidth_hz, &mut rng).stage("channel")?.0;
    sig = iq_impair(&sig, &cfg.impairments);

    sig = cd_compensate(&sig, &link);
    let vcfg = cfg.dsp.volterra_config;
    if cfg.dsp.volterra && vcfg.placement == Placement::Rx {
        let reference = cfg.tx.rrc.shape(&tx_sym[0], &tx_sym[1], rs).stage("rx_nle")?.tributaries();
        let out = volterra_equalize(&sig.tributaries(), &reference, &vcfg, None).stage("rx_nle")?;
        let t: [Vec<f64>; 4] = out.tributaries.try_into().expect("four tributaries");
        sig.set_tributaries(&t);
    }
    let rrc = cfg.tx.rrc;
    for pol in &mut sig.pols {
        *pol = rrc.filter_stream(pol);
    }
    let mut rx = if cfg.dsp.mimo {
        let mut state = EqualizerState::new(cfg.dsp.equalizer).stage("equalizer")?;
        mimo_equalize(&sig, &mut state, &tx_sym, &shaped).stage("equalizer")?
    } else {
        decimate(&sig)
    };

    let mut extras = RunExtras::default();
    if cfg.dsp.carrier_recovery {
        for p in 0..2 {
            let out = carrier_recover(&rx[p], rs, &shaped, Some(&tx_sym[p]), &cfg.dsp.cpr)
                .stage("carrier_recovery")?;
            extras.cycle_slips += out.cycle_slips;
            rx[p] = out.symbols;
        }
    }
    if cfg.dsp.volterra && vcfg.placement == Placement::Tx {
        let slicer = vcfg.decision_directed.then_some(&shaped);
        let out = volterra_equalize(&split_tributaries(&rx), &split_tributaries(&tx_sym), &vcfg, slicer)
            .stage("tx_nle")?;
        rx = join_tributaries(&out.tributaries);
    }
    for p in 0..2 {
        let px: f64 = tx_sym[p].iter().map(|x| x.norm_sqr()).sum();
        let g = rx[p].iter().zip(&tx_sym[p]).map(|(y, x)| y * x.conj()).sum::<Complex64>() / px;
        if !(g.norm() > 0.0) {
            return Err(StageFailure {
                stage: "detection",
                error: Error::Degenerate("received symbols carry no signal"),
            });
        }
        rx[p].iter_mut().for_each(|y| *y /= g);
    }

    let (llrs, symbolwise) = detect(cfg, &shaped, &rx, &tx_sym, &tx_idx, &mut extras).stage("detection")?;
    let bits: Vec<u8> = tx_idx.iter().flat_map(|idx| label_bits(&shaped, idx)).collect();
    let llrs = llrs.with_bits(bits).stage("metrics")?;
    let air = air_from_llrs(&llrs, &shaped).stage("metrics")?;
    let rx_all: Vec<Complex64> = rx.concat();
    let tx_all: Vec<Complex64> = tx_sym.concat();
    let snr = snr_estimate(&rx_all, &tx_all).stage("metrics")?;
    ensure_aligned(air, shaped.entropy(), snr).stage("metrics")?;
    let report = MetricsReport::new(
        snr,
        air,
        symbolwise,
        cfg.dsp.air_flavor,
        cfg.overhead,
        shaped.m(),
        metadata(cfg, &shaped, seed, hash),
    )
    .stage("metrics")?;
    Ok((report, extras))
}

fn metadata(cfg: &ScenarioConfig, shaped: &ShapedConstellation, seed: u64, hash: &str) -> ReportMetadata {
    ReportMetadata {
        format: cfg.format.label(),
        order: shaped.order(),
        entropy: shaped.entropy(),
        symbol_rate_baud: cfg.symbol_rate(),
        seed,
        config_hash: hash.to_string(),
    }
}

fn decimate(sig: &SignalBlock) -> [Vec<Complex64>; 2] {
    let pick = |p: &Vec<Complex64>| {
        p.iter()
            .skip(sig.alignment)
            .step_by(sig.samples_per_symbol)
            .copied()
            .collect()
    };
    [pick(&sig.pols[0]), pick(&sig.pols[1])]
}

fn detect(
    cfg: &ScenarioConfig,
    shaped: &ShapedConstellation,
    rx: &[Vec<Complex64>; 2],
    tx_sym: &[Vec<Complex64>; 2],
    tx_idx: &[Vec<usize>; 2],
    extras: &mut RunExtras,
) -> Result<(LlrBlock, Option<SymbolAir>)> {
    let m = shaped.m();
    let mut llrs = Vec::with_capacity(2 * rx[0].len() * m);
    let mut sym = Vec::with_capacity(2);
    match cfg.dsp.detector {
        Detector::Memoryless => {
            let block = cfg.dsp.sigma_block.max(1);
            for p in 0..2 {
                let sigma2: Vec<f64> = rx[p]
                    .chunks(block)
                    .zip(tx_sym[p].chunks(block))
                    .map(|(y, x)| {
                        let e: f64 = y.iter().zip(x).map(|(a, b)| (a - b).norm_sqr()).sum();
                        (e / y.len() as f64).max(1e-12)
                    })
                    .collect();
                for (b, chunk) in rx[p].chunks(block).enumerate() {
                    llrs.extend_from_slice(soft_demap(chunk, shaped, sigma2[b])?.llrs());
                }
                if cfg.dsp.symbolwise_air {
                    sym.push(memoryless_symbol_air(&rx[p], &tx_idx[p], shaped, |k| sigma2[k / block])?);
                }
            }
        }
        Detector::Bcjr => {
            let mut alpha = 0.0;
            for p in 0..2 {
                let errors: Vec<Complex64> = rx[p].iter().zip(&tx_sym[p]).map(|(y, x)| y - x).collect();
                let model = estimate_preq_alpha(&errors)?;
                alpha += model.alpha / 2.0;
                let z = preq_filter(&rx[p], model.alpha);
                let out = bcjr_detect_windowed(
                    &z,
                    &model,
                    shaped,
                    cfg.dsp.allow_large_trellis,
                    cfg.dsp.bcjr_window,
                    cfg.dsp.bcjr_overlap,
                )?;
                llrs.extend_from_slice(out.llrs.llrs());
                if cfg.dsp.symbolwise_air {
                    sym.push(air_from_posteriors(&out.posteriors, &tx_idx[p], shaped)?);
                }
            }
            extras.preq_alpha = Some(alpha);
        }
    }
    let symbolwise = (sym.len() == 2).then(|| SymbolAir {
        air: 0.5 * (sym[0].air + sym[1].air),
        floored: sym[0].floored + sym[1].floored,
    });
    Ok((LlrBlock::new(m, llrs)?, symbolwise))
}

struct Point {
    index: usize,
    coordinate: f64,
    seed: u64,
    snr_offset_db: f64,
    cfg: ScenarioConfig,
}

fn run_point(p: &Point, hash: &str) -> ResultRecord {
    let mut record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        index: p.index,
        mode: p.cfg.mode,
        axis: p.cfg.sweep.axis,
        coordinate: p.coordinate,
        seed: p.seed,
        snr_target_db: f64::NAN,
        failed_stage: None,
        error: None,
        cycle_slips: 0,
        preq_alpha: None,
        pass: false,
        report: None,
    };
    let outcome = p
        .cfg
        .target_snr_db()
        .stage("budget")
        .and_then(|snr| {
            record.snr_target_db = snr + p.snr_offset_db;
            simulate_waveform(&p.cfg, p.seed, record.snr_target_db, hash)
        });
    match outcome {
        Ok((report, extras)) => {
            record.cycle_slips = extras.cycle_slips;
            record.preq_alpha = extras.preq_alpha;
            record.pass = passes(&report, p.cfg.net_target_tbps);
            record.report = Some(report);
        }
        Err(f) => {
            record.failed_stage = Some(f.stage.to_string());
            record.error = Some(f.error.to_string());
        }
    }
    record
}

fn passes(report: &MetricsReport, target: Option<f64>) -> bool {
    report.backoff_tbps >= 0.0 && target.is_none_or(|t| report.net_bitrate_tbps >= t)
}

fn run_points(points: &[Point], hash: &str) -> Vec<ResultRecord> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|p| run_point(p, hash)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|p| run_point(p, hash)).collect()
    }
}

/// Runs the configured scenario. Stage failures are recorded per point and
/// do not abort the run.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let hash = cfg.hash();
    let seed = cfg.seed();
    if cfg.mode == Mode::DwdmBudget {
        return dwdm_budget(cfg);
    }
    let points: Vec<Point> = if cfg.mode == Mode::Monitor {
        let mon = &cfg.monitor;
        (0..mon.repetitions)
            .map(|r| Point {
                index: r,
                coordinate: r as f64 * mon.interval_s,
                seed: derive_seed(seed, r),
                snr_offset_db: mon.drift_db * (2.0 * PI * r as f64 / mon.drift_period).sin(),
                cfg: cfg.clone(),
            })
            .collect()
    } else {
        let coords = match cfg.sweep.axis {
            Some(_) => cfg.sweep.points()?,
            None => vec![0.0],
        };
        coords
            .iter()
            .enumerate()
            .map(|(i, &v)| Point {
                index: i,
                coordinate: v,
                seed: if cfg.independent_seeds { derive_seed(seed, i) } else { seed },
                snr_offset_db: 0.0,
                cfg: cfg.with_coordinate(cfg.sweep.axis, v),
            })
            .collect()
    };
    let records = run_points(&points, &hash);
    let summary = summarize(&records, None, cfg.mode == Mode::Monitor);
    Ok(ScenarioResult {
        config_hash: hash,
        records,
        summary,
    })
}

/// Sum of per-channel net rates and the resulting spectral efficiency.
pub fn dwdm_aggregate(net_tbps: &[f64], spacing_ghz: f64) -> Result<(f64, f64)> {
    let total: f64 = net_tbps.iter().sum();
    Ok((total, spectral_efficiency(total, net_tbps.len(), spacing_ghz)?))
}

/// Evaluates every grid channel through the link budget and a symbol-level
/// AWGN estimate of the AIR.
pub fn dwdm_budget(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let hash = cfg.hash();
    let shaped = cfg.format.build()?;
    let grid = &cfg.dwdm;
    let freqs = grid.frequencies_thz();
    let eval = |(i, &f): (usize, &f64)| -> ResultRecord {
        let mut c = cfg.clone();
        c.link.center_thz = f;
        let seed = if cfg.independent_seeds { derive_seed(cfg.seed(), i) } else { cfg.seed() };
        let mut record = ResultRecord {
            schema_version: SCHEMA_VERSION,
            index: i,
            mode: Mode::DwdmBudget,
            axis: Some(SweepAxis::Frequency),
            coordinate: f,
            seed,
            snr_target_db: f64::NAN,
            failed_stage: None,
            error: None,
            cycle_slips: 0,
            preq_alpha: None,
            pass: false,
            report: None,
        };
        let outcome = c.target_snr_db().stage("budget").and_then(|snr| {
            let snr = snr - grid.penalty_db(f);
            record.snr_target_db = snr;
            let mut rng = rng_from_seed(seed);
            let (bitwise, symbolwise) = simulate_awgn_air(&shaped, snr, cfg.symbols, &mut rng).stage("metrics")?;
            MetricsReport::new(
                snr,
                bitwise,
                Some(symbolwise),
                cfg.dsp.air_flavor,
                cfg.overhead,
                shaped.m(),
                metadata(&c, &shaped, seed, &hash),
            )
            .stage("metrics")
        });
        match outcome {
            Ok(report) => {
                record.pass = passes(&report, cfg.net_target_tbps);
                record.report = Some(report);
            }
            Err(f) => {
                record.failed_stage = Some(f.stage.to_string());
                record.error = Some(f.error.to_string());
            }
        }
        record
    };
    #[cfg(feature = "parallel")]
    let records: Vec<ResultRecord> = {
        use rayon::prelude::*;
        freqs.par_iter().enumerate().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Vec<ResultRecord> = freqs.iter().enumerate().map(eval).collect();

    let nets: Vec<f64> = records
        .iter()
        .filter(|r| r.pass)
        .filter_map(|r| r.report.as_ref().map(|rep| rep.net_bitrate_tbps))
        .collect();
    let (total, se) = if nets.is_empty() {
        (0.0, 0.0)
    } else {
        let (t, _) = dwdm_aggregate(&nets, grid.spacing_ghz)?;
        (t, spectral_efficiency(t, grid.count, grid.spacing_ghz)?)
    };
    let aggregate = DwdmAggregate {
        channels: grid.count,
        passing_channels: nets.len(),
        start_thz: grid.start_thz,
        end_thz: grid.end_thz(),
        spacing_ghz: grid.spacing_ghz,
        total_net_tbps: total,
        spectral_efficiency: se,
    };
    let summary = summarize(&records, Some(aggregate), false);
    Ok(ScenarioResult {
        config_hash: hash,
        records,
        summary,
    })
}

fn summarize(records: &[ResultRecord], dwdm: Option<DwdmAggregate>, stats: bool) -> Summary {
    let ok: Vec<(&ResultRecord, &MetricsReport)> =
        records.iter().filter_map(|r| r.report.as_ref().map(|rep| (r, rep))).collect();
    let argmax_air = ok
        .iter()
        .fold(None::<(&ResultRecord, &MetricsReport)>, |best, &(r, rep)| match best {
            Some((_, b)) if b.air_bits_per_symbol >= rep.air_bits_per_symbol => best,
            _ => Some((r, rep)),
        })
        .map(|(r, rep)| Argmax {
            index: r.index,
            coordinate: r.coordinate,
            air_bits_per_symbol: rep.air_bits_per_symbol,
            air_tbps: rep.air_tbps,
            net_bitrate_tbps: rep.net_bitrate_tbps,
        });
    let air_stats = (stats && !ok.is_empty()).then(|| {
        let v: Vec<f64> = ok.iter().map(|(_, rep)| rep.air_bits_per_symbol).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        SeriesStats {
            len: v.len(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
        }
    });
    Summary {
        records: records.len(),
        failed: records.iter().filter(|r| r.failed()).count(),
        argmax_air,
        dwdm,
        air_stats,
    }
}
