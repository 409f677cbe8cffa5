//! Experiment runner: JSON experiment specs, launch-power sweeps, CSV results and
//! comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::LinkParams;
use crate::dbp::{fixed_config, DbpConfig, Nonlinearity};
use crate::filter::{default_passband_fraction, design_lsco_bank, FilterBank, DEFAULT_MAGNITUDE_BOUND};
use crate::fixed::{cost_report, CostReport, QuantConfig, QuantizedBank};
use crate::learn::{train, TrainConfig, TrainOutcome};
use crate::signal::Metrics;
use crate::system::{evaluate, simulate_batch, SystemConfig};
use crate::{Error, Result};

pub const SPEC_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "variant,power_dbm,seed,eff_snr_db,ber,n_symbols,spec_hash,build";
const CALIBRATION_SALT: u64 = 0x5eed_ca11_b7a7_e000;
const FAILED: &str = "failed";

/// Where a variant's filter bank comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum BankSource {
    Lsco { taps: usize },
    Learned,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub bank: BankSource,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    /// Fixed-point arithmetic; absent means floating point.
    #[serde(default)]
    pub quant: Option<QuantConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub launch_powers_dbm: Vec<f64>,
    pub symbols: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub link: LinkParams,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    pub variants: Vec<Variant>,
    pub sweep: Sweep,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec; relative bank paths resolve against the spec's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("{}: {e}", path.display())))?;
        let mut spec = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut spec.variants {
            if let BankSource::File { path } = &mut v.bank {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        spec.validate_files()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(schema(format!("unsupported spec version {}", self.version)));
        }
        if self.variants.is_empty() {
            return Err(schema("at least one variant is required"));
        }
        let mut names = std::collections::BTreeSet::new();
        for v in &self.variants {
            if v.name.is_empty() || v.name.contains([',', '\n', '"']) {
                return Err(schema(format!("invalid variant name {:?}", v.name)));
            }
            if !names.insert(&v.name) {
                return Err(schema(format!("duplicate variant {}", v.name)));
            }
            if v.bank == BankSource::Learned && self.train.is_none() {
                return Err(schema(format!("variant {} needs a train section", v.name)));
            }
            if let BankSource::Lsco { taps } = v.bank {
                if taps % 2 == 0 {
                    return Err(schema(format!("variant {}: taps must be odd", v.name)));
                }
            }
            if let Some(q) = &v.quant {
                q.validate().map_err(|e| schema(e.to_string()))?;
            }
        }
        if self.sweep.launch_powers_dbm.is_empty() || self.sweep.seeds.is_empty() || self.sweep.symbols == 0 {
            return Err(schema("sweep needs powers, seeds and a positive symbol count"));
        }
        if let Some(t) = &self.train {
            t.validate().map_err(|e| schema(e.to_string()))?;
        }
        self.link.validate().map_err(|e| schema(e.to_string()))?;
        Ok(())
    }

    fn validate_files(&self) -> Result<()> {
        for v in &self.variants {
            if let BankSource::File { path } = &v.bank {
                load_bank_file(path)?;
            }
        }
        Ok(())
    }

    /// Content hash of the canonical serialisation (after overrides).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("spec serialises");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

/// A bank file in either the float or the integer-tap schema.
#[derive(Debug, Clone)]
pub enum LoadedBank {
    Float(FilterBank),
    Fixed(QuantizedBank),
}

pub fn load_bank_file(path: &Path) -> Result<LoadedBank> {
    let text = std::fs::read_to_string(path).map_err(|e| schema(format!("{}: {e}", path.display())))?;
    match FilterBank::from_json(&text) {
        Ok(b) => Ok(LoadedBank::Float(b)),
        Err(float_err) => QuantizedBank::from_json(&text)
            .map(LoadedBank::Fixed)
            .map_err(|e| schema(format!("{}: not a filter bank ({float_err}; {e})", path.display()))),
    }
}

/// Identifies the build that produced a result.
pub fn build_stamp() -> &'static str {
    option_env!("TDDBP_COMMIT").unwrap_or(env!("CARGO_PKG_VERSION"))
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: String,
    pub power_dbm: f64,
    pub seed: u64,
    /// `None` marks a failed cell.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<String>,
    pub spec_hash: String,
    pub variants: Vec<VariantInfo>,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        for r in &self.rows {
            let (snr, ber, n) = match &r.metrics {
                Some(m) => (format!("{:.6}", m.effective_snr_db), format!("{:.6e}", m.ber), m.num_symbols),
                None => (FAILED.into(), FAILED.into(), 0),
            };
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.variant,
                r.power_dbm,
                r.seed,
                snr,
                ber,
                n,
                self.spec_hash,
                build_stamp()
            )
            .unwrap();
        }
        s
    }

    /// Writes `results.csv` and `variants.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.to_csv())?;
        std::fs::write(dir.join("variants.json"), serde_json::to_string_pretty(&self.variants)?)?;
        Ok(())
    }
}

/// Hardware-relevant shape of one variant, used for cost columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantInfo {
    pub name: String,
    pub taps: usize,
    pub signal_bits: Option<u32>,
    pub coeff_bits: Option<u32>,
}

struct Prepared {
    name: String,
    bank: FilterBank,
    nonlinearity: Nonlinearity,
    fixed: Option<(QuantizedBank, QuantConfig)>,
}

fn prepare(spec: &ExperimentSpec, trained: Option<&TrainOutcome>) -> Result<Vec<Prepared>> {
    let sys = &spec.system;
    let fs = sys.sample_rate();
    spec.variants
        .iter()
        .map(|v| {
            let (bank, qbank) = match &v.bank {
                BankSource::Lsco { taps } => (
                    design_lsco_bank(
                        spec.link.num_spans,
                        spec.link.span_length_m,
                        spec.link.beta2,
                        *taps,
                        fs,
                        default_passband_fraction(sys.symbol_rate, sys.rolloff, fs),
                        DEFAULT_MAGNITUDE_BOUND,
                    )?,
                    None,
                ),
                BankSource::Learned => {
                    let t = trained.expect("training runs before learned variants");
                    let same_bits = spec.train.as_ref().and_then(|c| c.coeff_bits) == v.quant.map(|q| q.coeff_bits);
                    let q = if same_bits { t.quantized_bank.clone() } else { None };
                    (t.float_bank.clone(), q)
                }
                BankSource::File { path } => match load_bank_file(path)? {
                    LoadedBank::Float(b) => (b, None),
                    LoadedBank::Fixed(q) => (q.to_float(), Some(q)),
                },
            };
            let fixed = match v.quant {
                None => None,
                Some(q) => {
                    let qb = match qbank {
                        Some(qb) => qb,
                        None => QuantizedBank::quantize(&bank, q.coeff_bits)?,
                    };
                    Some((qb, q))
                }
            };
            Ok(Prepared {
                name: v.name.clone(),
                bank,
                nonlinearity: v.nonlinearity,
                fixed,
            })
        })
        .collect()
}

fn run_cell(spec: &ExperimentSpec, p: &Prepared, power: f64, seed: u64) -> Result<Metrics> {
    let link = LinkParams {
        launch_power_dbm: power,
        ..spec.link.clone()
    };
    let batch = simulate_batch(&spec.system, &link, spec.sweep.symbols, seed)?;
    let mut cfg = DbpConfig::for_link(p.bank.clone(), &link, p.nonlinearity)?;
    if let Some((qb, q)) = &p.fixed {
        let cal = simulate_batch(&spec.system, &link, spec.sweep.symbols, seed ^ CALIBRATION_SALT)?;
        cfg = fixed_config(&cfg, qb, *q, &cal.rx.samples)?;
    }
    let m = evaluate(&batch, &cfg, &spec.system)?;
    if !m.effective_snr_db.is_finite() {
        return Err(Error::Numerical("non-finite effective SNR".into()));
    }
    Ok(m)
}

/// Runs every (variant, power, seed) cell. `threads = 0` uses the global pool.
/// Cell failures are recorded in the report rather than aborting the run.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<RunReport> {
    spec.validate()?;
    let trained = match (&spec.train, spec.variants.iter().any(|v| v.bank == BankSource::Learned)) {
        (Some(t), true) => Some(train(t, &spec.link, &spec.system)?),
        _ => None,
    };
    let prepared = prepare(spec, trained.as_ref())?;
    let mut cells = Vec::new();
    for (i, _) in prepared.iter().enumerate() {
        for &power in &spec.sweep.launch_powers_dbm {
            for &seed in &spec.sweep.seeds {
                cells.push((i, power, seed));
            }
        }
    }
    let work = || -> Vec<Result<Metrics>> {
        cells
            .par_iter()
            .map(|&(i, power, seed)| run_cell(spec, &prepared[i], power, seed))
            .collect()
    };
    let results = if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let mut rows = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for (&(i, power, seed), r) in cells.iter().zip(results) {
        let metrics = match r {
            Ok(m) => Some(m),
            Err(e) => {
                failures.push(format!("{} @ {power} dBm, seed {seed}: {e}", prepared[i].name));
                None
            }
        };
        rows.push(ResultRow {
            variant: prepared[i].name.clone(),
            power_dbm: power,
            seed,
            metrics,
        });
    }
    let variants = prepared
        .iter()
        .zip(&spec.variants)
        .map(|(p, v)| VariantInfo {
            name: p.name.clone(),
            taps: p.bank.num_taps(),
            signal_bits: v.quant.map(|q| q.signal_bits),
            coeff_bits: v.quant.map(|q| q.coeff_bits),
        })
        .collect();
    Ok(RunReport {
        rows,
        failures,
        spec_hash: spec.hash(),
        variants,
    })
}

/// Parses a results CSV written by [`RunReport::to_csv`].
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(schema("unexpected results header")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(schema(format!("bad results row: {l}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| schema(format!("bad number {s:?}")));
            let metrics = if f[3] == FAILED {
                None
            } else {
                Some(Metrics {
                    effective_snr_db: num(f[3])?,
                    ber: num(f[4])?,
                    num_symbols: f[5].parse().map_err(|_| schema("bad symbol count"))?,
                })
            };
            Ok(ResultRow {
                variant: f[0].to_string(),
                power_dbm: num(f[1])?,
                seed: f[2].parse().map_err(|_| schema("bad seed"))?,
                metrics,
            })
        })
        .collect()
}

/// Results of one run together with its variant metadata.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub label: String,
    pub rows: Vec<ResultRow>,
    pub variants: Vec<VariantInfo>,
}

impl ResultSet {
    pub fn load(dir: &Path) -> Result<Self> {
        let rows = parse_results_csv(&std::fs::read_to_string(dir.join("results.csv"))?)?;
        let variants: Vec<VariantInfo> = serde_json::from_str(&std::fs::read_to_string(dir.join("variants.json"))?)
            .map_err(|e| schema(e.to_string()))?;
        Ok(Self {
            label: dir.display().to_string(),
            rows,
            variants,
        })
    }

    pub fn from_report(label: &str, r: &RunReport) -> Self {
        Self {
            label: label.into(),
            rows: r.rows.clone(),
            variants: r.variants.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub set: String,
    pub variant: String,
    pub taps: usize,
    pub signal_bits: Option<u32>,
    pub coeff_bits: Option<u32>,
    pub peak_snr_db: f64,
    pub optimal_power_dbm: f64,
    pub ber_at_peak: f64,
    /// Peak effective SNR minus that of the same variant in the first set.
    pub delta_peak_db: f64,
    pub cost: Option<CostReport>,
}

/// Mean over seeds per launch power, for one variant.
fn curve(rows: &[ResultRow], variant: &str) -> Result<BTreeMap<i64, (f64, f64, f64, usize)>> {
    let mut acc: BTreeMap<i64, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.variant == variant) {
        let m = r
            .metrics
            .as_ref()
            .ok_or_else(|| Error::Mismatch(format!("{variant} has failed cells")))?;
        let key = (r.power_dbm * 1e6).round() as i64;
        let e = acc.entry(key).or_insert((r.power_dbm, 0.0, 0.0, 0));
        e.1 += m.effective_snr_db;
        e.2 += m.ber;
        e.3 += 1;
    }
    if acc.is_empty() {
        return Err(Error::Mismatch(format!("variant {variant} is missing")));
    }
    Ok(acc)
}

fn grid(rows: &[ResultRow], variant: &str) -> Vec<(i64, u64)> {
    let mut g: Vec<(i64, u64)> = rows
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| ((r.power_dbm * 1e6).round() as i64, r.seed))
        .collect();
    g.sort_unstable();
    g
}

/// Peak SNR, optimal power, BER at peak and cost proxy per variant of every set.
pub fn compare_report(sets: &[ResultSet], parallelism: usize) -> Result<Vec<SummaryRow>> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two result sets".into()));
    }
    let names: Vec<&str> = sets[0].variants.iter().map(|v| v.name.as_str()).collect();
    for s in sets {
        let other: Vec<&str> = s.variants.iter().map(|v| v.name.as_str()).collect();
        if other != names {
            return Err(Error::Mismatch(format!("{} has variants {other:?}, expected {names:?}", s.label)));
        }
        for n in &names {
            if grid(&s.rows, n) != grid(&sets[0].rows, n) {
                return Err(Error::Mismatch(format!("{}: sweep grid of {n} differs", s.label)));
            }
        }
    }
    let mut table = Vec::new();
    let mut first_peak = BTreeMap::new();
    for s in sets {
        for v in &s.variants {
            let c = curve(&s.rows, &v.name)?;
            let (power, snr, ber) = c
                .values()
                .map(|&(p, snr, ber, n)| (p, snr / n as f64, ber / n as f64))
                .fold((f64::NAN, f64::NEG_INFINITY, f64::NAN), |best, x| if x.1 > best.1 { x } else { best });
            let reference = *first_peak.entry(v.name.clone()).or_insert(snr);
            let cost = match (v.signal_bits, v.coeff_bits) {
                (Some(sb), Some(cb)) => Some(cost_report(v.taps, &QuantConfig::new(sb, cb), parallelism)?),
                _ => None,
            };
            table.push(SummaryRow {
                set: s.label.clone(),
                variant: v.name.clone(),
                taps: v.taps,
                signal_bits: v.signal_bits,
                coeff_bits: v.coeff_bits,
                peak_snr_db: snr,
                optimal_power_dbm: power,
                ber_at_peak: ber,
                delta_peak_db: snr - reference,
                cost,
            });
        }
    }
    Ok(table)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "set,variant,taps,signal_bits,coeff_bits,peak_snr_db,optimal_power_dbm,ber_at_peak,delta_peak_db,real_multipliers,cost_proxy\n",
    );
    let opt = |v: Option<u32>| v.map_or(String::new(), |b| b.to_string());
    for r in rows {
        let (mults, proxy) = r
            .cost
            .as_ref()
            .map_or((String::new(), String::new()), |c| (c.real_multipliers.to_string(), format!("{}", c.proxy)));
        writeln!(
            s,
            "{},{},{},{},{},{:.4},{},{:.4e},{:.4},{},{}",
            r.set,
            r.variant,
            r.taps,
            opt(r.signal_bits),
            opt(r.coeff_bits),
            r.peak_snr_db,
            r.optimal_power_dbm,
            r.ber_at_peak,
            r.delta_peak_db,
            mults,
            proxy
        )
        .unwrap();
    }
    s
}
