//! End-to-end link: symbols, pulse shaping, fiber, receiver DSP and scoring.

use serde::{Deserialize, Serialize};

use crate::channel::{ideal_cd_compensation, ssfm_forward, LinkParams, Scheme, SsfmPlan};
use crate::dbp::{dbp_run, DbpConfig};
use crate::filter::FilterBank;
use crate::signal::{
    downsample, generate_symbols, matched_filter, pulse_shape, score, ComplexSignal, Constellation, Metrics,
    SymbolBlock,
};
use crate::{Error, Result, C64};

const NOISE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Transceiver settings shared by simulation, training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub symbol_rate: f64,
    pub samples_per_symbol: usize,
    pub rolloff: f64,
    pub pulse_span_symbols: usize,
    pub constellation: String,
    /// Split steps per span of the forward fiber simulation.
    pub sim_steps_per_span: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 20e9,
            samples_per_symbol: 2,
            rolloff: 0.1,
            pulse_span_symbols: 64,
            constellation: "16qam".into(),
            sim_steps_per_span: 50,
        }
    }
}

impl SystemConfig {
    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::by_name(&self.constellation)
    }

    /// Matched-filter half length in samples.
    pub fn pulse_half_len(&self) -> usize {
        self.pulse_span_symbols * self.samples_per_symbol / 2
    }

    /// Symbols dropped at each end before scoring: the cumulative DBP filter support
    /// plus the matched filter half length.
    pub fn trim_symbols(&self, bank: &FilterBank) -> usize {
        (bank.total_half_len() + self.pulse_half_len()).div_ceil(self.samples_per_symbol)
    }
}

/// One simulated transmission.
#[derive(Debug, Clone)]
pub struct Batch {
    pub tx: SymbolBlock,
    pub rx: ComplexSignal,
}

/// Transmits `num_symbols` random symbols over the link at its launch power.
pub fn simulate_batch(sys: &SystemConfig, link: &LinkParams, num_symbols: usize, seed: u64) -> Result<Batch> {
    let constellation = sys.constellation()?;
    let tx = generate_symbols(num_symbols, &constellation, seed)?;
    let shaped = pulse_shape(
        &tx.values,
        sys.symbol_rate,
        sys.samples_per_symbol,
        sys.rolloff,
        sys.pulse_span_symbols,
    )?;
    // unit-energy pulses and unit-power symbols give 1/sps power per sample
    let gain = (link.launch_power_w() * sys.samples_per_symbol as f64).sqrt();
    let launched = shaped.with_samples(shaped.samples.iter().map(|v| v * gain).collect());
    let plan = SsfmPlan::uniform(link, sys.sim_steps_per_span, Scheme::Symmetric)?;
    let rx = ssfm_forward(&launched, link, &plan, seed ^ NOISE_SEED_SALT)?;
    Ok(Batch { tx, rx })
}

/// Matched filter, symbol-rate decimation and edge trimming of an equalised waveform.
pub fn receive_symbols(equalized: &[C64], sys: &SystemConfig, trim: usize) -> Result<Vec<C64>> {
    let z = matched_filter(equalized, sys.samples_per_symbol, sys.rolloff, sys.pulse_span_symbols);
    let s = downsample(&z, sys.samples_per_symbol, 0);
    if s.len() <= 2 * trim {
        return Err(Error::LengthUnderflow {
            len: s.len(),
            need: 2 * trim + 1,
        });
    }
    Ok(s[trim..s.len() - trim].to_vec())
}

pub fn trimmed_block(tx: &SymbolBlock, trim: usize) -> SymbolBlock {
    let end = tx.values.len() - trim;
    SymbolBlock {
        patterns: tx.patterns[trim..end].to_vec(),
        values: tx.values[trim..end].to_vec(),
    }
}

/// Runs the receiver and scores it on the trimmed symbol block.
pub fn evaluate(batch: &Batch, cfg: &DbpConfig, sys: &SystemConfig) -> Result<Metrics> {
    let trim = sys.trim_symbols(&cfg.bank);
    let y = dbp_run(&batch.rx, cfg)?;
    let s = receive_symbols(&y.samples, sys, trim)?;
    score(&s, &trimmed_block(&batch.tx, trim), &sys.constellation()?)
}

/// Linear-only reference: exact frequency-domain dispersion inversion over the link,
/// scored with the same trimming as a bank of the given size.
pub fn evaluate_cd_ceiling(batch: &Batch, link: &LinkParams, sys: &SystemConfig, trim: usize) -> Result<Metrics> {
    let y = ideal_cd_compensation(&batch.rx, link.beta2, link.total_length_m());
    let s = receive_symbols(&y.samples, sys, trim)?;
    score(&s, &trimmed_block(&batch.tx, trim), &sys.constellation()?)
}
