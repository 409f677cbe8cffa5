//! Complex baseband signals, constellations, pulse shaping and quality metrics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Reported effective SNR when the fitted error power vanishes.
pub const SNR_CAP_DB: f64 = 100.0;

/// Uniformly sampled complex baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<C64>,
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
}

impl ComplexSignal {
    pub fn new(samples: Vec<C64>, sample_rate: f64, samples_per_symbol: usize) -> Result<Self> {
        if samples_per_symbol == 0 {
            return Err(Error::InvalidArgument("samples_per_symbol must be >= 1".into()));
        }
        if samples.len() % samples_per_symbol != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} samples is not a multiple of {} samples/symbol",
                samples.len(),
                samples_per_symbol
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument("sample_rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            samples_per_symbol,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn symbol_rate(&self) -> f64 {
        self.sample_rate / self.samples_per_symbol as f64
    }

    /// Mean sample power.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<C64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            samples_per_symbol: self.samples_per_symbol,
        }
    }
}

pub fn mean_power(x: &[C64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Unit-energy constellation with a Gray bit labelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub points: Vec<C64>,
    pub bits_per_symbol: u32,
    /// `gray_map[pattern]` is the index into `points` labelled by `pattern`.
    pub gray_map: Vec<usize>,
}

impl Constellation {
    /// Builds a constellation from points and labels, normalising to unit mean power.
    pub fn new(points: Vec<C64>, gray_map: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyConstellation);
        }
        if !points.len().is_power_of_two() || gray_map.len() != points.len() {
            return Err(Error::InvalidArgument(
                "constellation size must be a power of two with one label per point".into(),
            ));
        }
        let mut seen = vec![false; points.len()];
        for &idx in &gray_map {
            if idx >= points.len() || seen[idx] {
                return Err(Error::InvalidArgument("gray_map is not a bijection".into()));
            }
            seen[idx] = true;
        }
        let p = mean_power(&points);
        if p == 0.0 {
            return Err(Error::InvalidArgument("constellation has zero power".into()));
        }
        let s = 1.0 / p.sqrt();
        Ok(Self {
            points: points.into_iter().map(|v| v * s).collect(),
            bits_per_symbol: gray_map.len().trailing_zeros(),
            gray_map,
        })
    }

    pub fn bpsk() -> Self {
        Self::new(vec![C64::new(-1.0, 0.0), C64::new(1.0, 0.0)], vec![0, 1]).unwrap()
    }

    pub fn qpsk() -> Self {
        let pts = vec![
            C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            C64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        ];
        // bit0 -> sign of I, bit1 -> sign of Q
        Self::new(pts, vec![0, 1, 2, 3]).unwrap()
    }

    /// Square 16-QAM, two Gray-coded bits per rail.
    pub fn qam16() -> Self {
        // 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
        let level = |b: usize| match b {
            0b00 => -3.0,
            0b01 => -1.0,
            0b11 => 1.0,
            _ => 3.0,
        };
        let points: Vec<C64> = (0..16)
            .map(|p| C64::new(level(p >> 2), level(p & 0b11)))
            .collect();
        Self::new(points, (0..16).collect()).unwrap()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Self::bpsk()),
            "qpsk" => Ok(Self::qpsk()),
            "16qam" | "qam16" => Ok(Self::qam16()),
            other => Err(Error::InvalidArgument(format!("unknown constellation {other}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, pattern: usize) -> C64 {
        self.points[self.gray_map[pattern]]
    }

    /// Minimum-distance decision, returning the bit pattern.
    pub fn decide(&self, x: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (pattern, &idx) in self.gray_map.iter().enumerate() {
            let d = (self.points[idx] - x).norm_sqr();
            if d < best_d {
                best_d = d;
                best = pattern;
            }
        }
        best
    }

    /// Expands patterns into a flat MSB-first bit stream.
    pub fn bits(&self, patterns: &[usize]) -> Vec<u8> {
        let k = self.bits_per_symbol;
        patterns
            .iter()
            .flat_map(|&p| (0..k).rev().map(move |b| ((p >> b) & 1) as u8))
            .collect()
    }
}

/// Transmitted symbols together with their bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub patterns: Vec<usize>,
    pub values: Vec<C64>,
}

/// Draws `count` i.i.d. uniform symbols; reproducible for a fixed seed.
pub fn generate_symbols(count: usize, constellation: &Constellation, seed: u64) -> Result<SymbolBlock> {
    if constellation.is_empty() {
        return Err(Error::EmptyConstellation);
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = constellation.len();
    let patterns: Vec<usize> = (0..count).map(|_| rng.random_range(0..n)).collect();
    let values = patterns.iter().map(|&p| constellation.point(p)).collect();
    Ok(SymbolBlock { patterns, values })
}

/// Root-raised-cosine pulse evaluated at `t` symbol periods.
fn rrc(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let quarter = 1.0 / (4.0 * beta);
    if (t.abs() - quarter).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

fn rrc_raw(samples_per_symbol: usize, rolloff: f64, span_symbols: usize) -> Vec<f64> {
    let half = span_symbols * samples_per_symbol / 2;
    (0..=2 * half)
        .map(|i| rrc((i as f64 - half as f64) / samples_per_symbol as f64, rolloff))
        .collect()
}

/// Unit-energy RRC taps of length `span_symbols * sps + 1` (rounded to odd), centred.
pub fn rrc_taps(samples_per_symbol: usize, rolloff: f64, span_symbols: usize) -> Vec<f64> {
    let mut h = rrc_raw(samples_per_symbol, rolloff, span_symbols);
    let e: f64 = h.iter().map(|v| v * v).sum();
    let s = 1.0 / e.sqrt();
    h.iter_mut().for_each(|v| *v *= s);
    h
}

/// Fraction of RRC energy lying outside a truncation window of `span_symbols`.
pub fn rrc_tail_energy(samples_per_symbol: usize, rolloff: f64, span_symbols: usize) -> f64 {
    let long_span = (span_symbols * 16).max(span_symbols + 1024);
    let long = rrc_raw(samples_per_symbol, rolloff, long_span);
    let total: f64 = long.iter().map(|v| v * v).sum();
    let mid = long.len() / 2;
    let half = span_symbols * samples_per_symbol / 2;
    let inner: f64 = long[mid - half..=mid + half].iter().map(|v| v * v).sum();
    ((total - inner) / total).max(0.0)
}

fn check_shaping(samples_per_symbol: usize, rolloff: f64, span_symbols: usize, min_sps: usize) -> Result<()> {
    if samples_per_symbol < min_sps {
        return Err(Error::InvalidArgument(format!(
            "samples_per_symbol must be >= {min_sps}"
        )));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(Error::InvalidArgument("rolloff must lie in (0, 1]".into()));
    }
    let tail = rrc_tail_energy(samples_per_symbol, rolloff, span_symbols);
    if tail > 1e-4 {
        return Err(Error::PulseSpanTooShort {
            span_symbols,
            tail_energy: tail,
        });
    }
    Ok(())
}

/// Circular convolution with a centred real filter.
pub(crate) fn circular_filter(x: &[C64], taps: &[f64]) -> Vec<C64> {
    let n = x.len();
    let half = taps.len() / 2;
    let mut y = vec![C64::new(0.0, 0.0); n];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (j, &h) in taps.iter().enumerate() {
            // lag m = j - half: y[i] += h[m] x[i - m]
            let idx = (i as isize - (j as isize - half as isize)).rem_euclid(n as isize);
            acc += x[idx as usize] * h;
        }
        *out = acc;
    }
    y
}

/// RRC pulse shaping of a periodic symbol block (circular, delay compensated).
///
/// Output has `symbols.len() * samples_per_symbol` samples; a matched filter followed
/// by decimation at offset 0 recovers the symbols up to truncation ISI.
pub fn pulse_shape(
    symbols: &[C64],
    symbol_rate: f64,
    samples_per_symbol: usize,
    rolloff: f64,
    span_symbols: usize,
) -> Result<ComplexSignal> {
    check_shaping(samples_per_symbol, rolloff, span_symbols, 2)?;
    if symbols.is_empty() {
        return Err(Error::InvalidArgument("no symbols to shape".into()));
    }
    let taps = rrc_taps(samples_per_symbol, rolloff, span_symbols);
    let mut up = vec![C64::new(0.0, 0.0); symbols.len() * samples_per_symbol];
    for (i, &s) in symbols.iter().enumerate() {
        up[i * samples_per_symbol] = s;
    }
    let y = circular_filter(&up, &taps);
    ComplexSignal::new(y, symbol_rate * samples_per_symbol as f64, samples_per_symbol)
}

/// Circular RRC matched filter at the sample rate.
pub fn matched_filter(signal: &[C64], samples_per_symbol: usize, rolloff: f64, span_symbols: usize) -> Vec<C64> {
    let taps = rrc_taps(samples_per_symbol, rolloff, span_symbols);
    circular_filter(signal, &taps)
}

pub fn downsample(x: &[C64], factor: usize, offset: usize) -> Vec<C64> {
    x.iter().skip(offset).step_by(factor.max(1)).copied().collect()
}

/// Least-squares complex gain `c` minimising `sum |c*eq - ref|^2`.
pub fn ls_scale(equalized: &[C64], reference: &[C64]) -> C64 {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for (e, r) in equalized.iter().zip(reference) {
        num += e.conj() * r;
        den += e.norm_sqr();
    }
    if den == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        num / den
    }
}

/// Effective SNR in dB after removing one global complex gain.
///
/// Capped at [`SNR_CAP_DB`] when the residual error vanishes.
pub fn effective_snr(equalized: &[C64], reference: &[C64]) -> Result<f64> {
    effective_snr_fit(equalized, reference).map(|(snr, _)| snr)
}

/// Like [`effective_snr`] but also returns the fitted gain.
pub fn effective_snr_fit(equalized: &[C64], reference: &[C64]) -> Result<(f64, C64)> {
    if equalized.len() != reference.len() || reference.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} equalized vs {} reference",
            equalized.len(),
            reference.len()
        )));
    }
    let ref_power: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::ZeroReferencePower);
    }
    let c = ls_scale(equalized, reference);
    let err: f64 = equalized
        .iter()
        .zip(reference)
        .map(|(e, r)| (c * e - r).norm_sqr())
        .sum();
    Ok((snr_db_from_ratio(ref_power, err), c))
}

pub(crate) fn snr_db_from_ratio(signal: f64, error: f64) -> f64 {
    if error <= signal * 10f64.powf(-SNR_CAP_DB / 10.0) {
        SNR_CAP_DB
    } else {
        (10.0 * (signal / error).log10()).min(SNR_CAP_DB)
    }
}

/// Bit error tally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitErrors {
    pub errors: usize,
    pub bits: usize,
    pub ber: f64,
}

pub fn ber_count(decided_bits: &[u8], reference_bits: &[u8]) -> Result<BitErrors> {
    if decided_bits.len() != reference_bits.len() {
        return Err(Error::InvalidArgument("bit streams differ in length".into()));
    }
    let errors = decided_bits
        .iter()
        .zip(reference_bits)
        .filter(|(a, b)| a != b)
        .count();
    let bits = decided_bits.len();
    let ber = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
    Ok(BitErrors { errors, bits, ber })
}

/// Quality of one equalised block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub effective_snr_db: f64,
    pub ber: f64,
    pub num_symbols: usize,
}

/// Scales, decides and scores equalised symbols against the transmitted block.
pub fn score(equalized: &[C64], tx: &SymbolBlock, constellation: &Constellation) -> Result<Metrics> {
    let (snr, c) = effective_snr_fit(equalized, &tx.values)?;
    let decided: Vec<usize> = equalized.iter().map(|&e| constellation.decide(c * e)).collect();
    let errs = ber_count(&constellation.bits(&decided), &constellation.bits(&tx.patterns))?;
    Ok(Metrics {
        effective_snr_db: snr,
        ber: errs.ber,
        num_symbols: equalized.len(),
    })
}
