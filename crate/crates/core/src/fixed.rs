//! Bit-exact fixed-point model of the hardware datapath.
//!
//! A value is an integer times a power of two. Products are formed exactly in wide
//! integers and then requantized, by default with the add-half-ULP-then-truncate rule
//! (round half up). Overflow always saturates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filter::{FilterBank, FirFilter};
use crate::{Error, Result, C64};

/// Two's-complement word of `word_bits` bits (sign included) scaled by `2^scale_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    pub word_bits: u32,
    pub scale_exp: i32,
}

impl FixedFormat {
    pub fn new(word_bits: u32, scale_exp: i32) -> Result<Self> {
        if !(2..=32).contains(&word_bits) {
            return Err(Error::InvalidArgument(format!("word_bits {word_bits} outside 2..=32")));
        }
        Ok(Self { word_bits, scale_exp })
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.word_bits - 1))
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.word_bits - 1)) - 1
    }

    pub fn ulp(&self) -> f64 {
        2f64.powi(self.scale_exp)
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    pub fn saturate(&self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    Truncate,
    /// Add half an ULP of the target format, then truncate; ties round up.
    #[default]
    HalfUp,
}

/// A quantized real value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixed {
    pub raw: i64,
    pub fmt: FixedFormat,
}

impl Fixed {
    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.fmt.ulp()
    }
}

/// Quantizes a real number, saturating to the format range.
pub fn quantize_value(x: f64, fmt: FixedFormat, mode: RoundingMode) -> Fixed {
    let v = x * 2f64.powi(-fmt.scale_exp);
    let r = match mode {
        RoundingMode::HalfUp => (v + 0.5).floor(),
        RoundingMode::Truncate => v.floor(),
    };
    let raw = if r.is_nan() {
        0
    } else {
        r.clamp(fmt.min_raw() as f64, fmt.max_raw() as f64) as i64
    };
    Fixed { raw, fmt }
}

/// Drops `shift` low bits of an exact integer (`shift <= 0` widens exactly).
pub fn round_shift(value: i128, shift: i32, mode: RoundingMode) -> i128 {
    if shift <= 0 {
        return value << (-shift) as u32;
    }
    let s = shift as u32;
    match mode {
        RoundingMode::Truncate => value >> s,
        RoundingMode::HalfUp => (value + (1i128 << (s - 1))) >> s,
    }
}

/// Moves an exact integer at scale `2^from_exp` into `out`, rounding then saturating.
pub fn requantize(raw: i128, from_exp: i32, out: FixedFormat, mode: RoundingMode) -> i64 {
    out.saturate(round_shift(raw, out.scale_exp - from_exp, mode))
}

/// Exact product at scale `2^(a.scale + b.scale)` rounded half up into `out_fmt`.
pub fn requantize_product(a: Fixed, b: Fixed, out_fmt: FixedFormat) -> Fixed {
    let p = a.raw as i128 * b.raw as i128;
    Fixed {
        raw: requantize(p, a.fmt.scale_exp + b.fmt.scale_exp, out_fmt, RoundingMode::HalfUp),
        fmt: out_fmt,
    }
}

/// Saturating clamp of a real value to the representable range.
pub fn clip(x: f64, fmt: FixedFormat) -> f64 {
    x.clamp(fmt.min_value(), fmt.max_value())
}

/// Component-wise [`clip`].
pub fn clip_complex(x: C64, fmt: FixedFormat) -> C64 {
    C64::new(clip(x.re, fmt), clip(x.im, fmt))
}

/// Power-of-two scale for a stage with per-component RMS `rms`: the clipping level
/// `clip_sigma * rms` is rounded to the nearest power of two and becomes the top of
/// the word.
pub fn scale_for_rms(rms: f64, word_bits: u32, clip_sigma: f64) -> i32 {
    (rms * clip_sigma).log2().round() as i32 - (word_bits as i32 - 1)
}

/// Assigns power-of-two formats along a chain of stages.
///
/// `input_rms` is the per-component RMS at the chain input and `stage_gains[i]` the RMS
/// ratio of stage `i` to its predecessor. Returns `stage_gains.len() + 1` formats, input
/// first.
pub fn propagate_scaling(input_rms: f64, stage_gains: &[f64], word_bits: u32, clip_sigma: f64) -> Result<Vec<FixedFormat>> {
    if !(clip_sigma > 0.0) {
        return Err(Error::InvalidArgument("clip_sigma must be positive".into()));
    }
    let mut rms = input_rms;
    let mut out = Vec::with_capacity(stage_gains.len() + 1);
    for stage in 0..=stage_gains.len() {
        if stage > 0 {
            rms *= stage_gains[stage - 1];
        }
        if !(rms > 0.0) || !rms.is_finite() {
            return Err(Error::DegenerateScaling { stage });
        }
        out.push(FixedFormat::new(word_bits, scale_for_rms(rms, word_bits, clip_sigma))?);
    }
    Ok(out)
}

/// Signal and coefficient word lengths of a fixed-point datapath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    pub signal_bits: u32,
    pub coeff_bits: u32,
    /// Clipping level in per-component standard deviations.
    #[serde(default = "default_clip_sigma")]
    pub clip_sigma: f64,
    /// Word length of the constant multiplier inside each nonlinear step.
    #[serde(default = "default_gain_bits")]
    pub gain_bits: u32,
    #[serde(default)]
    pub rounding: RoundingMode,
    /// Requantize |x|^2 before the nonlinear product; off keeps the exact square.
    #[serde(default = "default_true")]
    pub quantize_power: bool,
}

fn default_true() -> bool {
    true
}

fn default_clip_sigma() -> f64 {
    4.0
}

fn default_gain_bits() -> u32 {
    12
}

impl QuantConfig {
    pub fn new(signal_bits: u32, coeff_bits: u32) -> Self {
        Self {
            signal_bits,
            coeff_bits,
            clip_sigma: default_clip_sigma(),
            gain_bits: default_gain_bits(),
            rounding: RoundingMode::HalfUp,
            quantize_power: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        FixedFormat::new(self.signal_bits, 0)?;
        FixedFormat::new(self.coeff_bits, 0)?;
        FixedFormat::new(self.gain_bits, 0)?;
        if !(self.clip_sigma > 0.0) {
            return Err(Error::InvalidArgument("clip_sigma must be positive".into()));
        }
        if !self.quantize_power && self.signal_bits > 30 {
            return Err(Error::InvalidArgument("an exact |x|^2 needs signal_bits <= 30".into()));
        }
        Ok(())
    }
}

/// Filter with integer taps sharing one format.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFilter {
    pub fmt: FixedFormat,
    /// `K + 1` unique taps as `(re, im)` integers.
    pub taps: Vec<(i64, i64)>,
}

impl QuantizedFilter {
    pub fn half_len(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn num_taps(&self) -> usize {
        2 * self.taps.len() - 1
    }

    pub fn to_float(&self) -> FirFilter {
        let u = self.fmt.ulp();
        FirFilter::from_unique(self.taps.iter().map(|&(re, im)| C64::new(re as f64 * u, im as f64 * u)).collect())
            .expect("quantized filters are never empty")
    }
}

/// Smallest scale at which every tap component quantizes without saturating.
pub fn coefficient_scale(unique: &[C64], coeff_bits: u32, mode: RoundingMode) -> Result<FixedFormat> {
    let m = unique.iter().flat_map(|c| [c.re.abs(), c.im.abs()]).fold(0.0, f64::max);
    if m == 0.0 || !m.is_finite() {
        return Err(Error::ZeroFilter);
    }
    let mut s = m.log2().floor() as i32 - coeff_bits as i32;
    loop {
        let fmt = FixedFormat::new(coeff_bits, s)?;
        let fits = unique.iter().flat_map(|c| [c.re, c.im]).all(|v| {
            let scaled = v * 2f64.powi(-s);
            let r = match mode {
                RoundingMode::HalfUp => (scaled + 0.5).floor(),
                RoundingMode::Truncate => scaled.floor(),
            };
            r >= fmt.min_raw() as f64 && r <= fmt.max_raw() as f64
        });
        if fits {
            return Ok(fmt);
        }
        s += 1;
    }
}

/// Quantizes the `K + 1` unique taps (half up) with a per-filter power-of-two scale.
pub fn quantize_filter(filter: &FirFilter, coeff_bits: u32) -> Result<QuantizedFilter> {
    let fmt = coefficient_scale(filter.unique(), coeff_bits, RoundingMode::HalfUp)?;
    Ok(quantize_filter_with(filter, fmt))
}

/// Quantizes with a given format (saturating).
pub fn quantize_filter_with(filter: &FirFilter, fmt: FixedFormat) -> QuantizedFilter {
    let taps = filter
        .unique()
        .iter()
        .map(|c| {
            (
                quantize_value(c.re, fmt, RoundingMode::HalfUp).raw,
                quantize_value(c.im, fmt, RoundingMode::HalfUp).raw,
            )
        })
        .collect();
    QuantizedFilter { fmt, taps }
}

/// Bank of integer-tap filters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBank {
    pub beta2: f64,
    pub step_sizes: Vec<f64>,
    pub filters: Vec<QuantizedFilter>,
    pub nonlinear_scales: Vec<f64>,
}

impl QuantizedBank {
    pub fn quantize(bank: &FilterBank, coeff_bits: u32) -> Result<Self> {
        let filters = bank
            .filters
            .iter()
            .map(|f| quantize_filter(f, coeff_bits))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beta2: bank.beta2,
            step_sizes: bank.step_sizes.clone(),
            filters,
            nonlinear_scales: bank.nonlinear_scales.clone(),
        })
    }

    /// Dequantized copy; evaluating it in float isolates the coefficient error.
    pub fn to_float(&self) -> FilterBank {
        FilterBank {
            beta2: self.beta2,
            step_sizes: self.step_sizes.clone(),
            filters: self.filters.iter().map(QuantizedFilter::to_float).collect(),
            nonlinear_scales: self.nonlinear_scales.clone(),
        }
    }

    pub fn num_taps(&self) -> usize {
        self.filters[0].num_taps()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = QuantBankDocument {
            beta2: self.beta2,
            step_sizes: self.step_sizes.clone(),
            num_taps: self.num_taps(),
            filters: self
                .filters
                .iter()
                .map(|f| QuantFilterDocument {
                    word_bits: f.fmt.word_bits,
                    scale_exp: f.fmt.scale_exp,
                    taps: f.taps.iter().map(|&(a, b)| [a, b]).collect(),
                })
                .collect(),
            nonlinear_scales: self.nonlinear_scales.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: QuantBankDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.num_taps % 2 == 0 || doc.filters.is_empty() || doc.filters.len() != doc.step_sizes.len() {
            return Err(Error::Schema("inconsistent quantized bank".into()));
        }
        let k1 = doc.num_taps / 2 + 1;
        let mut filters = Vec::new();
        for f in doc.filters {
            let fmt = FixedFormat::new(f.word_bits, f.scale_exp).map_err(|e| Error::Schema(e.to_string()))?;
            if f.taps.len() != k1 {
                return Err(Error::Schema(format!("expected {k1} unique taps, found {}", f.taps.len())));
            }
            let in_range = |v: i64| v >= fmt.min_raw() && v <= fmt.max_raw();
            if !f.taps.iter().all(|[a, b]| in_range(*a) && in_range(*b)) {
                return Err(Error::Schema("tap outside word range".into()));
            }
            filters.push(QuantizedFilter {
                fmt,
                taps: f.taps.into_iter().map(|[a, b]| (a, b)).collect(),
            });
        }
        if !doc.nonlinear_scales.is_empty() && doc.nonlinear_scales.len() + 1 != filters.len() {
            return Err(Error::Schema("nonlinear_scales length mismatch".into()));
        }
        Ok(Self {
            beta2: doc.beta2,
            step_sizes: doc.step_sizes,
            filters,
            nonlinear_scales: doc.nonlinear_scales,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantBankDocument {
    beta2: f64,
    step_sizes: Vec<f64>,
    #[serde(rename = "T")]
    num_taps: usize,
    filters: Vec<QuantFilterDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nonlinear_scales: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantFilterDocument {
    word_bits: u32,
    scale_exp: i32,
    taps: Vec<[i64; 2]>,
}

/// How a complex multiplication is costed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexMultCost {
    /// 4 real multiplies, 2 adds.
    #[default]
    FourMult,
    /// 3 real multiplies, 5 adds.
    ThreeMult,
}

impl ComplexMultCost {
    pub fn real_mults(&self) -> usize {
        match self {
            Self::FourMult => 4,
            Self::ThreeMult => 3,
        }
    }

    pub fn real_adds(&self) -> usize {
        match self {
            Self::FourMult => 2,
            Self::ThreeMult => 5,
        }
    }
}

/// Arithmetic cost of one parallel symmetric FIR step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub num_taps: usize,
    pub parallelism: usize,
    pub signal_bits: u32,
    pub coeff_bits: u32,
    /// Unique-coefficient products per output sample, `K + 1`.
    pub complex_mults_per_sample: usize,
    pub complex_multipliers: usize,
    pub real_multipliers: usize,
    pub real_adders: usize,
    /// `real_multipliers * signal_bits * coeff_bits`; relative area/power proxy only.
    pub proxy: f64,
}

impl CostReport {
    /// Proxy per information bit for `num_steps` cascaded steps, where each clock cycle
    /// delivers `parallelism / samples_per_symbol` symbols of `bits_per_symbol` bits.
    pub fn proxy_per_bit(&self, num_steps: usize, samples_per_symbol: usize, bits_per_symbol: u32) -> f64 {
        let bits_per_cycle = self.parallelism as f64 / samples_per_symbol as f64 * bits_per_symbol as f64;
        self.proxy * num_steps as f64 / bits_per_cycle
    }

    /// Fractional proxy saving of `self` relative to `baseline`.
    pub fn reduction_vs(&self, baseline: &CostReport) -> f64 {
        1.0 - self.proxy / baseline.proxy
    }
}

pub fn cost_report(num_taps: usize, quant: &QuantConfig, parallelism: usize) -> Result<CostReport> {
    cost_report_with(num_taps, quant, parallelism, ComplexMultCost::FourMult)
}

pub fn cost_report_with(num_taps: usize, quant: &QuantConfig, parallelism: usize, cmult: ComplexMultCost) -> Result<CostReport> {
    if parallelism == 0 {
        return Err(Error::InvalidArgument("parallelism must be >= 1".into()));
    }
    if num_taps % 2 == 0 {
        return Err(Error::InvalidArgument("tap count must be odd".into()));
    }
    let k = num_taps / 2;
    let cm = k + 1;
    let real_mults = cm * cmult.real_mults() * parallelism;
    // pre-adds x[n-k] + x[n+k], multiplier-internal adds, accumulation
    let adds = (2 * k + cm * cmult.real_adds() + 2 * k) * parallelism;
    Ok(CostReport {
        num_taps,
        parallelism,
        signal_bits: quant.signal_bits,
        coeff_bits: quant.coeff_bits,
        complex_mults_per_sample: cm,
        complex_multipliers: cm * parallelism,
        real_multipliers: real_mults,
        real_adders: adds,
        proxy: real_mults as f64 * quant.signal_bits as f64 * quant.coeff_bits as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn representable_values_are_fixed_points() {
        let fmt = FixedFormat::new(8, -4).unwrap();
        for k in [-128i64, -3, 0, 5, 127] {
            let x = k as f64 / 16.0;
            for mode in [RoundingMode::HalfUp, RoundingMode::Truncate] {
                assert_eq!(quantize_value(x, fmt, mode).to_f64(), x);
            }
        }
    }

    #[test]
    fn half_up_ties_round_up() {
        let fmt = FixedFormat::new(8, 0).unwrap();
        assert_eq!(quantize_value(1.25, fmt, RoundingMode::HalfUp).raw, 1);
        assert_eq!(quantize_value(1.5, fmt, RoundingMode::HalfUp).raw, 2);
        assert_eq!(quantize_value(-1.5, fmt, RoundingMode::HalfUp).raw, -1);
        assert_eq!(quantize_value(1.75, fmt, RoundingMode::Truncate).raw, 1);
        assert_eq!(quantize_value(-1.25, fmt, RoundingMode::Truncate).raw, -2);
    }

    #[test]
    fn saturation() {
        let fmt = FixedFormat::new(4, 0).unwrap();
        assert_eq!(quantize_value(100.0, fmt, RoundingMode::HalfUp).raw, 7);
        assert_eq!(quantize_value(-100.0, fmt, RoundingMode::HalfUp).raw, -8);
        assert_eq!(clip(3.0, fmt), 3.0);
        assert_eq!(clip(9.0, fmt), 7.0);
        assert_eq!(clip(-9.0, fmt), -8.0);
        assert_eq!(clip_complex(C64::new(9.0, -1.0), fmt), C64::new(7.0, -1.0));
        assert!(FixedFormat::new(1, 0).is_err());
        assert!(FixedFormat::new(33, 0).is_err());
    }

    #[test]
    fn dense_grid_bias() {
        // 10 extra bits over 64 ulps
        let fmt = FixedFormat::new(12, 0).unwrap();
        let k = 12;
        let n = 64 << k;
        let (mut up, mut tr) = (0.0, 0.0);
        for i in 0..n {
            let x = i as f64 / (1 << k) as f64 - 32.0;
            up += quantize_value(x, fmt, RoundingMode::HalfUp).to_f64() - x;
            tr += quantize_value(x, fmt, RoundingMode::Truncate).to_f64() - x;
        }
        let (up, tr) = (up / n as f64, tr / n as f64);
        assert!(up.abs() < 2f64.powi(-(fmt.word_bits as i32)), "{up}");
        assert!((tr + 0.5).abs() < 1e-3, "{tr}");
    }

    #[test]
    fn unit_product() {
        let a = quantize_value(1.0, FixedFormat::new(6, -3).unwrap(), RoundingMode::HalfUp);
        let b = quantize_value(1.0, FixedFormat::new(9, -5).unwrap(), RoundingMode::HalfUp);
        let out = FixedFormat::new(8, -4).unwrap();
        assert_eq!(requantize_product(a, b, out).to_f64(), 1.0);
    }

    #[test]
    fn midpoint_product_rounds_up() {
        // 0.75 * 0.5 = 0.375, exactly half-way between 0.25 and 0.5
        let f = FixedFormat::new(4, -2).unwrap();
        let a = Fixed { raw: 3, fmt: f };
        let b = Fixed { raw: 2, fmt: f };
        assert_eq!(requantize_product(a, b, f).to_f64(), 0.5);
        let neg = Fixed { raw: -3, fmt: f };
        assert_eq!(requantize_product(neg, b, f).to_f64(), -0.25);
    }

    #[test]
    fn scaling_chain() {
        let f = propagate_scaling(0.25, &[1.0, 1.0, 1.0], 9, 4.0).unwrap();
        assert!(f.iter().all(|x| *x == f[0]));
        let g = propagate_scaling(0.25, &[1.0, 4.0, 1.0], 9, 4.0).unwrap();
        assert_eq!(g[2].scale_exp, g[1].scale_exp + 2);
        assert_eq!(g[3].scale_exp, g[2].scale_exp);
        assert!(matches!(
            propagate_scaling(0.25, &[1.0, 0.0], 9, 4.0),
            Err(Error::DegenerateScaling { stage: 2 })
        ));
    }

    #[test]
    fn gaussian_clip_rate() {
        let fmt = propagate_scaling(1.0, &[], 9, 4.0).unwrap()[0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 2_000_000;
        let mut clipped = 0;
        for _ in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            if x > fmt.max_value() || x < fmt.min_value() {
                clipped += 1;
            }
        }
        let rate = clipped as f64 / n as f64;
        assert!((1e-5..=1e-3).contains(&rate), "{rate}");
    }

    #[test]
    fn clipping_costs_little_snr_at_nine_bits() {
        // a 20 dB signal quantized with 9 bits and 4-sigma clipping
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let clean: Vec<C64> = (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        let noisy: Vec<C64> = clean
            .iter()
            .map(|c| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                c + C64::new(a, b) * (0.01f64 / 2.0).sqrt()
            })
            .collect();
        let rms = (crate::signal::mean_power(&noisy) / 2.0).sqrt();
        let fmt = propagate_scaling(rms, &[], 9, 4.0).unwrap()[0];
        let q: Vec<C64> = noisy
            .iter()
            .map(|v| {
                C64::new(
                    quantize_value(v.re, fmt, RoundingMode::HalfUp).to_f64(),
                    quantize_value(v.im, fmt, RoundingMode::HalfUp).to_f64(),
                )
            })
            .collect();
        let before = crate::signal::effective_snr(&noisy, &clean).unwrap();
        let after = crate::signal::effective_snr(&q, &clean).unwrap();
        assert!(before - after < 0.1, "{before} -> {after}");
    }

    #[test]
    fn filter_quantization() {
        let imp = FirFilter::unit_impulse(9).unwrap();
        let q = quantize_filter(&imp, 6).unwrap();
        assert_eq!(q.to_float(), imp);
        let on_grid = FirFilter::from_unique(vec![C64::new(0.5, -0.25), C64::new(0.125, 0.0), C64::new(-0.0625, 0.03125)]).unwrap();
        assert_eq!(quantize_filter(&on_grid, 8).unwrap().to_float(), on_grid);
        assert!(matches!(
            quantize_filter(&FirFilter::from_unique(vec![C64::new(0.0, 0.0)]).unwrap(), 6),
            Err(Error::ZeroFilter)
        ));
    }

    #[test]
    fn quantized_bank_json() {
        let f = FirFilter::from_unique(vec![C64::new(0.7, 0.1), C64::new(0.2, -0.3)]).unwrap();
        let bank = FilterBank::new(-2e-26, vec![5e4, 5e4], vec![f.clone(), f]).unwrap();
        let q = QuantizedBank::quantize(&bank, 6).unwrap();
        let text = q.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for f in v["filters"].as_array().unwrap() {
            let taps = f["taps"].as_array().unwrap();
            assert_eq!(taps.len(), 2);
            assert!(taps.iter().flat_map(|t| t.as_array().unwrap()).all(|c| c.is_i64()));
        }
        let raw: Vec<i64> = v["filters"][0]["taps"].as_array().unwrap().iter().flat_map(|t| t.as_array().unwrap().iter().map(|c| c.as_i64().unwrap())).collect();
        let expected: Vec<i64> = q.filters[0].taps.iter().flat_map(|&(a, b)| [a, b]).collect();
        assert_eq!(raw, expected);
        assert_eq!(QuantizedBank::from_json(&text).unwrap(), q);
        let bad = text.replace("\"word_bits\": 6", "\"word_bits\": 40");
        assert!(matches!(QuantizedBank::from_json(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn cost_counts() {
        let q = QuantConfig::new(9, 6);
        let r = cost_report(15, &q, 96).unwrap();
        assert_eq!(r.complex_mults_per_sample, 8);
        assert_eq!(r.complex_multipliers, 768);
        assert_eq!(r.real_multipliers, 3072);
        let a = cost_report(25, &QuantConfig::new(9, 8), 96).unwrap();
        let b = cost_report(25, &QuantConfig::new(9, 9), 96).unwrap();
        assert!((a.proxy / b.proxy - 8.0 / 9.0).abs() < 1e-15);
        assert!(cost_report(15, &q, 0).is_err());
        let three = cost_report_with(15, &q, 1, ComplexMultCost::ThreeMult).unwrap();
        assert_eq!(three.real_multipliers, 24);
    }

    proptest::proptest! {
        #[test]
        fn quantized_filters_stay_symmetric(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10), bits in 3u32..16) {
            let f = FirFilter::from_unique(vals.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap();
            proptest::prop_assume!(f.unique().iter().any(|c| c.norm() > 1e-6));
            let q = quantize_filter(&f, bits).unwrap().to_float();
            let full = q.full();
            let k = full.len() / 2;
            for i in 1..=k {
                proptest::prop_assert_eq!(full[k + i], full[k - i]);
            }
        }

        #[test]
        fn fixed_ops_are_deterministic(x in -100.0f64..100.0, y in -100.0f64..100.0, e in -8i32..4) {
            let f = FixedFormat::new(12, e).unwrap();
            let a = quantize_value(x, f, RoundingMode::HalfUp);
            let b = quantize_value(y, f, RoundingMode::HalfUp);
            proptest::prop_assert_eq!(requantize_product(a, b, f), requantize_product(a, b, f));
        }
    }
}
