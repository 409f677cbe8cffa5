//! Time-domain digital backpropagation receiver.
//!
//! One step per span, symmetric split: `filter_1` (half span), then alternately a
//! nonlinear step and the next filter, ending with a half-span filter. The same control
//! flow runs in floating point or in the bit-exact fixed-point model, where signals are
//! quantized at the DBP input, every FIR output, the `|x|^2` term and every
//! nonlinear-step output.

use serde::{Deserialize, Serialize};

use crate::channel::{effective_step_length, LinkParams};
use crate::filter::{FilterBank, FirFilter};
use crate::fixed::{
    coefficient_scale, propagate_scaling, quantize_value, requantize, ComplexMultCost, Fixed, FixedFormat,
    QuantConfig, QuantizedBank, QuantizedFilter, RoundingMode,
};
use crate::signal::ComplexSignal;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Exact,
    #[default]
    Taylor1,
    Off,
}

/// Sign of the phase applied by the nonlinear step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearSign {
    /// `x (1 - j g |x|^2)`: undoes the forward Kerr rotation.
    #[default]
    Compensating,
    /// `x (1 + j g |x|^2)`: the forward-rotation expansion.
    Forward,
}

impl NonlinearSign {
    pub(crate) fn factor(self) -> f64 {
        match self {
            Self::Compensating => 1.0,
            Self::Forward => -1.0,
        }
    }
}

/// `x exp(-j g |x|^2)`.
pub fn nonlinear_exact(x: C64, g: f64) -> C64 {
    x * C64::cis(-g * x.norm_sqr())
}

/// First-order expansion `x (1 - j g |x|^2)`.
pub fn nonlinear_taylor(x: C64, g: f64) -> C64 {
    x * C64::new(1.0, -g * x.norm_sqr())
}

/// Zero-padded "same" convolution with centre tap at lag 0, using the symmetric form
/// `h_0 x[n] + sum_k h_k (x[n-k] + x[n+k])`.
pub fn fir_same(x: &[C64], unique: &[C64]) -> Vec<C64> {
    let n = x.len();
    let k_max = unique.len() - 1;
    let zero = C64::new(0.0, 0.0);
    let at = |i: isize| -> C64 {
        if i < 0 || i as usize >= n {
            zero
        } else {
            x[i as usize]
        }
    };
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = unique[0] * x[i];
        if i >= k_max && i + k_max < n {
            for k in 1..=k_max {
                acc += unique[k] * (x[i - k] + x[i + k]);
            }
        } else {
            let ii = i as isize;
            for k in 1..=k_max {
                acc += unique[k] * (at(ii - k as isize) + at(ii + k as isize));
            }
        }
        y.push(acc);
    }
    y
}

pub fn fir_apply(signal: &ComplexSignal, filter: &FirFilter) -> Result<ComplexSignal> {
    if signal.len() <= filter.num_taps() {
        return Err(Error::LengthUnderflow {
            len: signal.len(),
            need: filter.num_taps() + 1,
        });
    }
    Ok(signal.with_samples(fir_same(&signal.samples, filter.unique())))
}

#[derive(Debug, Clone)]
pub enum Arithmetic {
    Float,
    Fixed(Box<FixedDatapath>),
}

/// Everything needed to run the receiver.
#[derive(Debug, Clone)]
pub struct DbpConfig {
    pub bank: FilterBank,
    /// Base nonlinear coefficient per step (rad/W) before the bank's per-step scale.
    pub gamma_steps: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    pub sign: NonlinearSign,
    pub arithmetic: Arithmetic,
}

impl DbpConfig {
    pub fn new(bank: FilterBank, gamma_steps: Vec<f64>, nonlinearity: Nonlinearity) -> Result<Self> {
        let cfg = Self {
            bank,
            gamma_steps,
            nonlinearity,
            sign: NonlinearSign::Compensating,
            arithmetic: Arithmetic::Float,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One nonlinear step per span with coefficient `gamma * L_eff(span)`.
    pub fn for_link(bank: FilterBank, link: &LinkParams, nonlinearity: Nonlinearity) -> Result<Self> {
        let g = link.gamma * effective_step_length(link.span_length_m, link.alpha_db_per_km);
        let steps = bank.len().saturating_sub(1);
        Self::new(bank, vec![g; steps], nonlinearity)
    }

    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        if self.gamma_steps.len() + 1 != self.bank.len() {
            return Err(Error::InvalidArgument(format!(
                "{} filters need {} nonlinear steps, got {}",
                self.bank.len(),
                self.bank.len() - 1,
                self.gamma_steps.len()
            )));
        }
        if let Arithmetic::Fixed(dp) = &self.arithmetic {
            if dp.filters.len() != self.bank.len() {
                return Err(Error::InvalidArgument("fixed datapath does not match bank".into()));
            }
        }
        Ok(())
    }

    /// Signed nonlinear coefficient of step `l` including the learned scale.
    pub fn step_gain(&self, l: usize) -> f64 {
        match self.nonlinearity {
            Nonlinearity::Off => 0.0,
            _ => self.sign.factor() * self.gamma_steps[l] * self.bank.nonlinear_scale(l),
        }
    }

    fn apply_nonlinear(&self, x: &mut [C64], g: f64) {
        match self.nonlinearity {
            Nonlinearity::Off => {}
            Nonlinearity::Exact => x.iter_mut().for_each(|v| *v = nonlinear_exact(*v, g)),
            Nonlinearity::Taylor1 => x.iter_mut().for_each(|v| *v = nonlinear_taylor(*v, g)),
        }
    }

    /// Floating-point run reporting each quantization point to `probe` in datapath order.
    fn run_float_probed(&self, x: &[C64], mut probe: impl FnMut(Stage, &[C64])) -> Vec<C64> {
        probe(Stage::Input, x);
        let mut y = fir_same(x, self.bank.filters[0].unique());
        probe(Stage::Fir(0), &y);
        for l in 0..self.gamma_steps.len() {
            if self.nonlinearity != Nonlinearity::Off {
                let power: Vec<C64> = y.iter().map(|v| C64::new(v.norm_sqr(), 0.0)).collect();
                probe(Stage::Power(l), &power);
                self.apply_nonlinear(&mut y, self.step_gain(l));
                probe(Stage::Nonlinear(l), &y);
            }
            y = fir_same(&y, self.bank.filters[l + 1].unique());
            probe(Stage::Fir(l + 1), &y);
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Input,
    Fir(usize),
    Power(usize),
    Nonlinear(usize),
}

/// Runs the receiver on the full-length signal; edges are left untrimmed.
pub fn dbp_run(signal: &ComplexSignal, cfg: &DbpConfig) -> Result<ComplexSignal> {
    cfg.validate()?;
    let edge = cfg.bank.total_half_len();
    if signal.len() <= 2 * edge {
        return Err(Error::LengthUnderflow {
            len: signal.len(),
            need: 2 * edge + 1,
        });
    }
    let out = match &cfg.arithmetic {
        Arithmetic::Float => cfg.run_float_probed(&signal.samples, |_, _| {}),
        Arithmetic::Fixed(dp) => dp.run(&signal.samples, cfg),
    };
    Ok(signal.with_samples(out))
}

/// Integer-tap filters plus one power-of-two format per quantization point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDatapath {
    pub quant: QuantConfig,
    pub filters: Vec<QuantizedFilter>,
    pub input_fmt: FixedFormat,
    pub fir_fmts: Vec<FixedFormat>,
    pub power_fmts: Vec<FixedFormat>,
    pub nonlinear_fmts: Vec<FixedFormat>,
    /// Signed nonlinear coefficient per step, quantized to `gain_bits`.
    pub gains: Vec<Fixed>,
}

fn component_rms(x: &[C64]) -> f64 {
    (crate::signal::mean_power(x) / 2.0).sqrt()
}

impl FixedDatapath {
    /// Calibrates stage formats by a floating-point run of the dequantized bank.
    pub fn calibrate(cfg: &DbpConfig, qbank: &QuantizedBank, quant: QuantConfig, calibration: &[C64]) -> Result<Self> {
        quant.validate()?;
        if qbank.filters.len() != cfg.bank.len() {
            return Err(Error::InvalidArgument("quantized bank does not match config".into()));
        }
        let mut float_cfg = cfg.clone();
        float_cfg.arithmetic = Arithmetic::Float;
        float_cfg.bank.filters = qbank.filters.iter().map(QuantizedFilter::to_float).collect();
        let mut stages = Vec::new();
        float_cfg.run_float_probed(calibration, |s, x| {
            // |x|^2 is real: its RMS is the value RMS, not per component
            let rms = match s {
                Stage::Power(_) => (x.iter().map(|v| v.re * v.re).sum::<f64>() / x.len().max(1) as f64).sqrt(),
                _ => component_rms(x),
            };
            stages.push((s, rms));
        });
        let input_rms = stages[0].1;
        let gains: Vec<f64> = stages.windows(2).map(|w| w[1].1 / w[0].1).collect();
        let fmts = propagate_scaling(input_rms, &gains, quant.signal_bits, quant.clip_sigma)?;
        let mut dp = Self {
            quant,
            filters: qbank.filters.clone(),
            input_fmt: fmts[0],
            fir_fmts: Vec::new(),
            power_fmts: Vec::new(),
            nonlinear_fmts: Vec::new(),
            gains: Vec::new(),
        };
        for ((s, _), f) in stages.iter().zip(&fmts) {
            match s {
                Stage::Input => {}
                Stage::Fir(_) => dp.fir_fmts.push(*f),
                Stage::Power(_) => dp.power_fmts.push(*f),
                Stage::Nonlinear(_) => dp.nonlinear_fmts.push(*f),
            }
        }
        for l in 0..cfg.gamma_steps.len() {
            let g = cfg.step_gain(l);
            let fixed = if g == 0.0 {
                Fixed {
                    raw: 0,
                    fmt: FixedFormat::new(quant.gain_bits, 0)?,
                }
            } else {
                let fmt = coefficient_scale(&[C64::new(g, 0.0)], quant.gain_bits, RoundingMode::HalfUp)?;
                quantize_value(g, fmt, RoundingMode::HalfUp)
            };
            dp.gains.push(fixed);
        }
        Ok(dp)
    }

    fn run(&self, x: &[C64], cfg: &DbpConfig) -> Vec<C64> {
        let mode = self.quant.rounding;
        let mut fmt = self.input_fmt;
        let mut sig: Vec<(i64, i64)> = x
            .iter()
            .map(|v| (quantize_value(v.re, fmt, mode).raw, quantize_value(v.im, fmt, mode).raw))
            .collect();
        sig = fir_fixed(&sig, fmt, &self.filters[0], self.fir_fmts[0], mode);
        fmt = self.fir_fmts[0];
        for l in 0..cfg.gamma_steps.len() {
            if cfg.nonlinearity != Nonlinearity::Off {
                let exact = FixedFormat {
                    word_bits: 2 * fmt.word_bits + 1,
                    scale_exp: 2 * fmt.scale_exp,
                };
                let pf = if self.quant.quantize_power { self.power_fmts[l] } else { exact };
                let of = self.nonlinear_fmts[l];
                let g = self.gains[l];
                sig = sig
                    .iter()
                    .map(|&(re, im)| {
                        let p = requantize(
                            re as i128 * re as i128 + im as i128 * im as i128,
                            2 * fmt.scale_exp,
                            pf,
                            mode,
                        );
                        match cfg.nonlinearity {
                            Nonlinearity::Taylor1 => taylor_fixed(re, im, fmt, p, pf, g, of, mode),
                            _ => {
                                let v = C64::new(re as f64 * fmt.ulp(), im as f64 * fmt.ulp());
                                let phase = -g.to_f64() * p as f64 * pf.ulp();
                                let y = v * C64::cis(phase);
                                (quantize_value(y.re, of, mode).raw, quantize_value(y.im, of, mode).raw)
                            }
                        }
                    })
                    .collect();
                fmt = of;
            }
            sig = fir_fixed(&sig, fmt, &self.filters[l + 1], self.fir_fmts[l + 1], mode);
            fmt = self.fir_fmts[l + 1];
        }
        let u = fmt.ulp();
        sig.into_iter().map(|(a, b)| C64::new(a as f64 * u, b as f64 * u)).collect()
    }
}

/// `x (1 - j g p)` formed exactly, then requantized once.
#[allow(clippy::too_many_arguments)]
fn taylor_fixed(
    re: i64,
    im: i64,
    xf: FixedFormat,
    p: i64,
    pf: FixedFormat,
    g: Fixed,
    out: FixedFormat,
    mode: RoundingMode,
) -> (i64, i64) {
    let t = g.raw as i128 * p as i128;
    let t_exp = g.fmt.scale_exp + pf.scale_exp;
    // -j t (re + j im) = t im - j t re
    let (a, b) = (re as i128, im as i128);
    let common = xf.scale_exp + t_exp.min(0);
    let shift_x = (xf.scale_exp - common) as u32;
    let shift_t = (xf.scale_exp + t_exp - common) as u32;
    let yr = (a << shift_x) + ((t * b) << shift_t);
    let yi = (b << shift_x) - ((t * a) << shift_t);
    (requantize(yr, common, out, mode), requantize(yi, common, out, mode))
}

/// Symmetric FIR with exact integer accumulation, requantized at the output.
fn fir_fixed(
    x: &[(i64, i64)],
    xf: FixedFormat,
    filt: &QuantizedFilter,
    out: FixedFormat,
    mode: RoundingMode,
) -> Vec<(i64, i64)> {
    let n = x.len();
    let k_max = filt.half_len();
    let acc_exp = xf.scale_exp + filt.fmt.scale_exp;
    let at = |i: isize| -> (i128, i128) {
        if i < 0 || i as usize >= n {
            (0, 0)
        } else {
            let v = x[i as usize];
            (v.0 as i128, v.1 as i128)
        }
    };
    (0..n)
        .map(|i| {
            let (h0r, h0i) = (filt.taps[0].0 as i128, filt.taps[0].1 as i128);
            let (xr, xi) = at(i as isize);
            let mut ar = h0r * xr - h0i * xi;
            let mut ai = h0r * xi + h0i * xr;
            for k in 1..=k_max {
                let (l, r) = (at(i as isize - k as isize), at(i as isize + k as isize));
                let (sr, si) = (l.0 + r.0, l.1 + r.1);
                let (hr, hi) = (filt.taps[k].0 as i128, filt.taps[k].1 as i128);
                ar += hr * sr - hi * si;
                ai += hr * si + hi * sr;
            }
            (requantize(ar, acc_exp, out, mode), requantize(ai, acc_exp, out, mode))
        })
        .collect()
}

/// Builds a fixed-point configuration from a float one.
pub fn fixed_config(cfg: &DbpConfig, qbank: &QuantizedBank, quant: QuantConfig, calibration: &[C64]) -> Result<DbpConfig> {
    let dp = FixedDatapath::calibrate(cfg, qbank, quant, calibration)?;
    let mut out = cfg.clone();
    out.arithmetic = Arithmetic::Fixed(Box::new(dp));
    Ok(out)
}

/// FFT multiplication-count model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FftAlgorithm {
    /// `(N/2) log2 N` general complex multiplications (every twiddle counted).
    Radix2,
    /// Split-radix: `N log2 N - 3N + 4` real multiplications with 3-mult complex products.
    SplitRadix,
}

impl FftAlgorithm {
    pub fn real_mults(&self, n: usize, cmult: ComplexMultCost) -> f64 {
        let nf = n as f64;
        let lg = nf.log2();
        match self {
            Self::Radix2 => nf / 2.0 * lg * cmult.real_mults() as f64,
            Self::SplitRadix => {
                let three = (nf * lg - 3.0 * nf + 4.0).max(0.0);
                three * cmult.real_mults() as f64 / 3.0
            }
        }
    }
}

/// How many outputs one overlap-save block yields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockPolicy {
    /// Any power-of-two FFT size from the candidate range; `N - T + 1` outputs per block.
    FreeSize,
    /// A parallel datapath emitting `P` outputs per clock: `N = next_pow2(P + T - 1)`.
    Parallel(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub fft: FftAlgorithm,
    pub cmult: ComplexMultCost,
    pub block: BlockPolicy,
}

impl Default for CostModel {
    /// Radix-2 FFTs in a 96-parallel datapath with 4-multiplier complex products.
    fn default() -> Self {
        Self {
            fft: FftAlgorithm::Radix2,
            cmult: ComplexMultCost::FourMult,
            block: BlockPolicy::Parallel(96),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub taps: usize,
    pub direct_complex_mults: usize,
    pub direct_real_mults: f64,
    pub fft_real_mults: f64,
    pub fft_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub model: CostModel,
    pub rows: Vec<CrossoverRow>,
    /// Smallest tap count at which overlap-save FFT filtering needs fewer real
    /// multiplications per output sample than symmetric direct convolution.
    pub crossover_taps: Option<usize>,
}

/// Real multiplications per output sample of symmetric direct-form filtering.
pub fn direct_cost(num_taps: usize, cmult: ComplexMultCost) -> f64 {
    ((num_taps / 2 + 1) * cmult.real_mults()) as f64
}

/// Cheapest overlap-save cost per output sample and the FFT size achieving it.
pub fn overlap_save_cost(num_taps: usize, fft_sizes: &[usize], model: &CostModel) -> Option<(f64, usize)> {
    let per_block = |n: usize| 2.0 * model.fft.real_mults(n, model.cmult) + (n * model.cmult.real_mults()) as f64;
    match model.block {
        BlockPolicy::Parallel(p) => {
            let n = (p + num_taps - 1).next_power_of_two();
            Some((per_block(n) / p as f64, n))
        }
        BlockPolicy::FreeSize => fft_sizes
            .iter()
            .filter(|&&n| n.is_power_of_two() && n >= num_taps)
            .map(|&n| (per_block(n) / (n - num_taps + 1) as f64, n))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()),
    }
}

/// Direct-versus-FFT multiplication counts over odd tap counts in `taps`.
pub fn estimate_crossover(
    taps: std::ops::RangeInclusive<usize>,
    fft_sizes: &[usize],
    model: &CostModel,
) -> Result<CrossoverReport> {
    if taps.is_empty() || (matches!(model.block, BlockPolicy::FreeSize) && fft_sizes.is_empty()) {
        return Err(Error::InvalidArgument("empty tap or FFT-size range".into()));
    }
    if let BlockPolicy::Parallel(0) = model.block {
        return Err(Error::InvalidArgument("parallelism must be >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut crossover = None;
    for t in taps.filter(|t| t % 2 == 1) {
        let Some((fft, n)) = overlap_save_cost(t, fft_sizes, model) else {
            continue;
        };
        let direct = direct_cost(t, model.cmult);
        if crossover.is_none() && fft < direct {
            crossover = Some(t);
        }
        rows.push(CrossoverRow {
            taps: t,
            direct_complex_mults: t / 2 + 1,
            direct_real_mults: direct,
            fft_real_mults: fft,
            fft_size: n,
        });
    }
    Ok(CrossoverReport {
        model: *model,
        rows,
        crossover_taps: crossover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn random_filter(k1: usize, seed: u64) -> FirFilter {
        FirFilter::from_unique(random_signal(k1, seed)).unwrap()
    }

    #[test]
    fn nonlinear_steps_basic() {
        let x = C64::new(0.3, -0.7);
        assert_eq!(nonlinear_exact(C64::new(0.0, 0.0), 2.0), C64::new(0.0, 0.0));
        assert_eq!(nonlinear_taylor(C64::new(0.0, 0.0), 2.0), C64::new(0.0, 0.0));
        assert_eq!(nonlinear_exact(x, 0.0), x);
        assert_eq!(nonlinear_taylor(x, 0.0), x);
        assert!((nonlinear_exact(x, 1.7).norm() - x.norm()).abs() < 1e-15);
    }

    #[test]
    fn identity_filters() {
        let x = ComplexSignal::new(random_signal(64, 1), 1.0, 2).unwrap();
        let imp = FirFilter::unit_impulse(7).unwrap();
        assert_eq!(fir_apply(&x, &imp).unwrap(), x);
        let centre = FirFilter::from_full(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(fir_apply(&x, &centre).unwrap(), x);
        let short = ComplexSignal::new(random_signal(6, 1), 1.0, 2).unwrap();
        assert!(fir_apply(&short, &imp).is_err());
    }

    #[test]
    fn symmetric_fir_matches_naive_convolution() {
        let x = random_signal(200, 2);
        let f = random_filter(8, 3);
        let full = f.full();
        let y = fir_same(&x, f.unique());
        for n in 0..x.len() {
            // y[n] = sum_m h[m] x[n - m]
            let mut naive = C64::new(0.0, 0.0);
            for (j, h) in full.iter().enumerate() {
                let m = j as isize - 7;
                let idx = n as isize - m;
                if idx >= 0 && (idx as usize) < x.len() {
                    naive += h * x[idx as usize];
                }
            }
            assert!((naive - y[n]).norm() <= 8.0 * f64::EPSILON * naive.norm().max(1.0), "{n}");
        }
    }

    #[test]
    fn identity_bank_without_nonlinearity_is_identity() {
        let bank = FilterBank::identity(5, 9).unwrap();
        let cfg = DbpConfig::new(bank, vec![0.3; 4], Nonlinearity::Off).unwrap();
        let x = ComplexSignal::new(random_signal(256, 4), 1.0, 2).unwrap();
        assert_eq!(dbp_run(&x, &cfg).unwrap(), x);
    }

    #[test]
    fn config_shape_is_checked() {
        let bank = FilterBank::identity(5, 9).unwrap();
        assert!(DbpConfig::new(bank.clone(), vec![0.3; 3], Nonlinearity::Taylor1).is_err());
        let cfg = DbpConfig::new(bank, vec![0.3; 4], Nonlinearity::Taylor1).unwrap();
        let x = ComplexSignal::new(random_signal(40, 4), 1.0, 2).unwrap();
        assert!(matches!(dbp_run(&x, &cfg), Err(Error::LengthUnderflow { .. })));
    }

    #[test]
    fn forward_sign_flips_rotation() {
        let bank = FilterBank::identity(2, 1).unwrap();
        let mut cfg = DbpConfig::new(bank, vec![0.5], Nonlinearity::Exact).unwrap();
        let x = ComplexSignal::new(vec![C64::new(1.0, 0.0); 4], 1.0, 2).unwrap();
        let a = dbp_run(&x, &cfg).unwrap();
        cfg.sign = NonlinearSign::Forward;
        let b = dbp_run(&x, &cfg).unwrap();
        assert!((a.samples[0] - C64::cis(-0.5)).norm() < 1e-15);
        assert!((b.samples[0] - C64::cis(0.5)).norm() < 1e-15);
    }

    #[test]
    fn wide_fixed_point_tracks_float() {
        let mut filters = Vec::new();
        for s in 0..4 {
            let mut f = random_filter(6, 10 + s);
            f.unique_mut().iter_mut().for_each(|h| *h *= 0.25);
            f.unique_mut()[0] = C64::new(0.8, 0.1);
            filters.push(f);
        }
        let bank = FilterBank::new(0.0, vec![1.0; 4], filters).unwrap();
        let x = ComplexSignal::new(random_signal(1024, 7), 1.0, 2).unwrap();
        for nl in [Nonlinearity::Taylor1, Nonlinearity::Exact, Nonlinearity::Off] {
            let cfg = DbpConfig::new(bank.clone(), vec![0.05; 3], nl).unwrap();
            let mut quant = QuantConfig::new(24, 24);
            quant.gain_bits = 24;
            quant.clip_sigma = 8.0;
            let qbank = QuantizedBank::quantize(&bank, 24).unwrap();
            let fixed = fixed_config(&cfg, &qbank, quant, &x.samples).unwrap();
            let a = dbp_run(&x, &cfg).unwrap();
            let b = dbp_run(&x, &fixed).unwrap();
            let err: f64 = a.samples.iter().zip(&b.samples).map(|(u, v)| (u - v).norm_sqr()).sum();
            let pow: f64 = a.samples.iter().map(|u| u.norm_sqr()).sum();
            assert!((err / pow).sqrt() < 1e-4, "{nl:?}: {}", (err / pow).sqrt());
            assert_eq!(b, dbp_run(&x, &fixed).unwrap());
        }
    }

    #[test]
    fn exact_power_skips_one_rounding() {
        let bank = FilterBank::identity(3, 3).unwrap();
        let x = ComplexSignal::new(random_signal(4096, 3), 1.0, 2).unwrap();
        let cfg = DbpConfig::new(bank.clone(), vec![0.2; 2], Nonlinearity::Taylor1).unwrap();
        let qbank = QuantizedBank::quantize(&bank, 8).unwrap();
        let float = dbp_run(&x, &cfg).unwrap();
        let err = |quantize_power| {
            let quant = QuantConfig {
                quantize_power,
                ..QuantConfig::new(8, 8)
            };
            let y = dbp_run(&x, &fixed_config(&cfg, &qbank, quant, &x.samples).unwrap()).unwrap();
            y.samples.iter().zip(&float.samples).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>()
        };
        let (rounded, exact) = (err(true), err(false));
        assert!(exact < rounded, "{exact} vs {rounded}");
        let q: QuantConfig = serde_json::from_str(r#"{"signal_bits": 9, "coeff_bits": 6}"#).unwrap();
        assert!(q.quantize_power);
        assert!(QuantConfig { quantize_power: false, ..QuantConfig::new(31, 6) }.validate().is_err());
    }

    #[test]
    fn crossover_examples() {
        let m = CostModel::default();
        let r = estimate_crossover(1..=41, &[], &m).unwrap();
        let row = |t| r.rows.iter().find(|x| x.taps == t).unwrap().clone();
        assert_eq!(row(15).direct_complex_mults, 8);
        assert_eq!(row(1).direct_complex_mults, 1);
        assert!(row(1).direct_real_mults < row(1).fft_real_mults);
        let c = r.crossover_taps.unwrap();
        assert!((20..=40).contains(&c), "{c}");
        let free = CostModel {
            block: BlockPolicy::FreeSize,
            ..m
        };
        let sizes: Vec<usize> = (1..=16).map(|p| 1 << p).collect();
        let rf = estimate_crossover(1..=41, &sizes, &free).unwrap();
        assert!(rf.rows.iter().all(|x| x.taps > 1 || x.direct_real_mults < x.fft_real_mults));
        assert!(estimate_crossover(1..=41, &[], &free).is_err());
    }

    proptest::proptest! {
        #[test]
        fn taylor_remainder_bound(re in -2.0f64..2.0, im in -2.0f64..2.0, g in 0.0f64..1.0) {
            let x = C64::new(re, im);
            let phi = g * x.norm_sqr();
            proptest::prop_assume!(phi <= 0.5);
            let err = (nonlinear_taylor(x, g) - nonlinear_exact(x, g)).norm();
            proptest::prop_assert!(err <= x.norm() * phi * phi / 2.0 + 1e-15);
        }

        #[test]
        fn exact_step_preserves_magnitude(re in -3.0f64..3.0, im in -3.0f64..3.0, g in -2.0f64..2.0) {
            let x = C64::new(re, im);
            proptest::prop_assert!((nonlinear_exact(x, g).norm() - x.norm()).abs() <= 1e-14 * x.norm().max(1.0));
        }
    }
}
