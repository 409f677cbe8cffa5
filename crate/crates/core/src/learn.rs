//! Gradient training of the backpropagation filter bank.
//!
//! All taps (and per-step nonlinear scales) are optimised jointly against the effective
//! SNR measured after the matched filter. Taps are pruned from the outside in and the
//! last phase fine-tunes through a coefficient quantizer with a straight-through
//! gradient.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::dbp::{fir_same, nonlinear_exact, nonlinear_taylor, DbpConfig, Nonlinearity};
use crate::filter::{default_passband_fraction, design_lsco_bank, BankDocument, FilterBank, FirFilter, DEFAULT_MAGNITUDE_BOUND};
use crate::fixed::{coefficient_scale, quantize_filter_with, quantize_value, FixedFormat, QuantizedBank, RoundingMode};
use crate::signal::{downsample, matched_filter, snr_db_from_ratio, SNR_CAP_DB};
use crate::system::{simulate_batch, trimmed_block, Batch, SystemConfig};
use crate::{Error, Result, C64};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const DIVERGENCE_DB: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 200;
const FAKEQUANT_ITERATIONS: std::ops::RangeInclusive<usize> = 500..=1000;
const VALIDATION_SEED_SALT: u64 = 0xa076_1d64_78bd_642f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub iteration: usize,
    /// Symmetric tap pairs removed from every filter.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_taps: usize,
    pub target_taps: usize,
    pub batch_symbols: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per iteration.
    pub lr_decay: f64,
    /// Length of the floating-point phase (training and pruning).
    pub max_iterations: usize,
    pub prune_schedule: Vec<PruneEvent>,
    /// Iteration at which quantization-aware fine-tuning begins.
    pub fakequant_start: usize,
    pub fakequant_iterations: usize,
    pub fakequant_lr: f64,
    /// Batch size while fine-tuning; `None` keeps `batch_symbols`.
    pub fakequant_batch_symbols: Option<usize>,
    /// Decay the fine-tuning rate linearly to zero.
    pub fakequant_anneal: bool,
    /// Held-out batch on which fine-tuning snapshots are compared; 0 keeps the last one.
    pub validation_symbols: usize,
    pub validation_interval: usize,
    /// Coefficient word length of the fine-tuning phase; `None` skips it.
    pub coeff_bits: Option<u32>,
    pub seed: u64,
    pub launch_power_dbm: f64,
    pub nonlinearity: Nonlinearity,
    pub train_nonlinear_scales: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_taps: 25,
            target_taps: 15,
            batch_symbols: 1 << 14,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            max_iterations: 3000,
            prune_schedule: uniform_prune_schedule(25, 15, 500),
            fakequant_start: 3000,
            fakequant_iterations: 500,
            fakequant_lr: 1e-5,
            fakequant_batch_symbols: None,
            fakequant_anneal: true,
            validation_symbols: 1 << 14,
            validation_interval: 20,
            coeff_bits: Some(6),
            seed: 1,
            launch_power_dbm: 1.0,
            nonlinearity: Nonlinearity::Taylor1,
            train_nonlinear_scales: true,
        }
    }
}

/// One pair removed every `interval` iterations, starting at `interval`.
pub fn uniform_prune_schedule(initial_taps: usize, target_taps: usize, interval: usize) -> Vec<PruneEvent> {
    let pairs = initial_taps.saturating_sub(target_taps) / 2;
    (1..=pairs)
        .map(|i| PruneEvent {
            iteration: i * interval,
            pairs: 1,
        })
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.initial_taps % 2 == 0 || self.target_taps % 2 == 0 || self.target_taps == 0 {
            return bad("tap counts must be odd and positive");
        }
        if self.initial_taps < self.target_taps {
            return bad("initial_taps must be >= target_taps");
        }
        let pairs: usize = self.prune_schedule.iter().map(|e| e.pairs).sum();
        if pairs != (self.initial_taps - self.target_taps) / 2 {
            return bad("prune schedule must remove exactly (initial - target)/2 pairs");
        }
        if self.prune_schedule.windows(2).any(|w| w[0].iteration >= w[1].iteration) {
            return bad("prune iterations must be strictly increasing");
        }
        let last_prune = self.prune_schedule.last().map_or(0, |e| e.iteration);
        if last_prune > self.max_iterations {
            return bad("prune events must fall inside the float phase");
        }
        if self.coeff_bits.is_some() {
            if self.fakequant_start < last_prune || self.fakequant_start > self.max_iterations {
                return bad("fakequant_start must lie between the last prune and max_iterations");
            }
            if !FAKEQUANT_ITERATIONS.contains(&self.fakequant_iterations) {
                return bad("fakequant_iterations must lie in [500, 1000]");
            }
        }
        if self.batch_symbols == 0 || !(self.learning_rate > 0.0) || !(self.fakequant_lr > 0.0) {
            return bad("batch size and learning rates must be positive");
        }
        if self.fakequant_batch_symbols == Some(0) || (self.validation_symbols > 0 && self.validation_interval == 0) {
            return bad("fine-tuning batch and validation interval must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn float_iterations(&self) -> usize {
        if self.coeff_bits.is_some() {
            self.fakequant_start
        } else {
            self.max_iterations
        }
    }
}

/// Gradient of the loss with respect to every trainable parameter. Tap gradients use the
/// `dL/dRe + j dL/dIm` convention and have the full (unpruned) unique length.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub taps: Vec<Vec<C64>>,
    pub nonlinear_scales: Vec<f64>,
}

/// The model being trained: a float bank, its active tap counts and the DBP constants.
#[derive(Debug, Clone)]
pub struct Model {
    pub dbp: DbpConfig,
    /// Active unique taps per filter; positions beyond are pruned and exactly zero.
    pub active: Vec<usize>,
}

impl Model {
    pub fn new(dbp: DbpConfig) -> Self {
        let active = dbp.bank.filters.iter().map(|f| f.unique().len()).collect();
        Self { dbp, active }
    }

    /// Bank truncated to the active taps.
    pub fn compact_bank(&self) -> FilterBank {
        let mut bank = self.dbp.bank.clone();
        for (f, &a) in bank.filters.iter_mut().zip(&self.active) {
            *f = FirFilter::from_unique(f.unique()[..a].to_vec()).expect("at least one active tap");
        }
        bank
    }
}

struct Tape {
    /// Input of every FIR stage.
    fir_inputs: Vec<Vec<C64>>,
    /// Output of every FIR stage but the last, i.e. the nonlinear-step inputs.
    fir_outputs: Vec<Vec<C64>>,
    output: Vec<C64>,
}

fn forward(model: &Model, taps: &[Vec<C64>], x: &[C64]) -> Tape {
    let cfg = &model.dbp;
    let mut fir_inputs = Vec::with_capacity(taps.len());
    let mut fir_outputs = Vec::with_capacity(taps.len());
    let mut y = x.to_vec();
    for (m, h) in taps.iter().enumerate() {
        if m > 0 {
            fir_outputs.push(y.clone());
            let g = cfg.step_gain(m - 1);
            match cfg.nonlinearity {
                Nonlinearity::Off => {}
                Nonlinearity::Exact => y.iter_mut().for_each(|v| *v = nonlinear_exact(*v, g)),
                Nonlinearity::Taylor1 => y.iter_mut().for_each(|v| *v = nonlinear_taylor(*v, g)),
            }
        }
        let out = fir_same(&y, &h[..model.active[m]]);
        fir_inputs.push(std::mem::replace(&mut y, out));
    }
    Tape {
        fir_inputs,
        fir_outputs,
        output: y,
    }
}

struct MetricGrad {
    snr_linear: f64,
    snr_db: f64,
    /// `dL/dy` with `L = -snr_linear`.
    grad_y: Vec<C64>,
}

fn metric(y: &[C64], batch: &Batch, sys: &SystemConfig, trim: usize, want_grad: bool) -> Result<MetricGrad> {
    let sps = sys.samples_per_symbol;
    let z = matched_filter(y, sps, sys.rolloff, sys.pulse_span_symbols);
    let s = downsample(&z, sps, 0);
    if s.len() <= 2 * trim {
        return Err(Error::LengthUnderflow {
            len: s.len(),
            need: 2 * trim + 1,
        });
    }
    let eq = &s[trim..s.len() - trim];
    let reference = trimmed_block(&batch.tx, trim).values;
    let a_pow: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    let b_pow: f64 = eq.iter().map(|e| e.norm_sqr()).sum();
    if a_pow == 0.0 {
        return Err(Error::ZeroReferencePower);
    }
    if !(b_pow > 0.0) || !b_pow.is_finite() {
        return Err(Error::DegenerateBatch("equalized output has no power".into()));
    }
    let cross: C64 = eq.iter().zip(&reference).map(|(e, a)| e.conj() * a).sum();
    let c = cross / b_pow;
    let err: f64 = eq.iter().zip(&reference).map(|(e, a)| (c * e - a).norm_sqr()).sum();
    let snr_db = snr_db_from_ratio(a_pow, err);
    let snr_linear = 10f64.powf(snr_db / 10.0);
    let mut grad_y = Vec::new();
    if want_grad {
        let mut grad_z = vec![C64::new(0.0, 0.0); z.len()];
        if snr_db < SNR_CAP_DB {
            // d(err) = -2 conj(C) a / B + 2 |C|^2 e / B^2, and dL = (A / err^2) d(err)
            let k = a_pow / (err * err);
            let c2 = cross.norm_sqr();
            for (i, (e, a)) in eq.iter().zip(&reference).enumerate() {
                let g = (-2.0 * cross.conj() * a / b_pow + 2.0 * c2 * e / (b_pow * b_pow)) * k;
                grad_z[(i + trim) * sps] = g;
            }
        }
        // circular convolution with real symmetric taps is self-adjoint
        grad_y = matched_filter(&grad_z, sps, sys.rolloff, sys.pulse_span_symbols);
    }
    Ok(MetricGrad {
        snr_linear,
        snr_db,
        grad_y,
    })
}

fn check_finite(g: &[C64], stage: &str) -> Result<()> {
    if g.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient(stage.into()))
    }
}

/// Loss (`-` linear effective SNR) and effective SNR in dB of `taps` on one batch.
pub fn loss_with_taps(model: &Model, taps: &[Vec<C64>], batch: &Batch, sys: &SystemConfig) -> Result<(f64, f64)> {
    let tape = forward(model, taps, &batch.rx.samples);
    let trim = trim_for(model, sys);
    let m = metric(&tape.output, batch, sys, trim, false)?;
    Ok((-m.snr_linear, m.snr_db))
}

pub fn loss(model: &Model, batch: &Batch, sys: &SystemConfig) -> Result<f64> {
    let taps = model_taps(model);
    Ok(loss_with_taps(model, &taps, batch, sys)?.0)
}

fn model_taps(model: &Model) -> Vec<Vec<C64>> {
    model.dbp.bank.filters.iter().map(|f| f.unique().to_vec()).collect()
}

fn trim_for(model: &Model, sys: &SystemConfig) -> usize {
    sys.trim_symbols(&model.dbp.bank)
}

/// Reverse-mode gradient through the whole receiver, evaluated at `taps`.
pub fn gradient_with_taps(
    model: &Model,
    taps: &[Vec<C64>],
    batch: &Batch,
    sys: &SystemConfig,
) -> Result<(f64, f64, Gradient)> {
    let cfg = &model.dbp;
    let tape = forward(model, taps, &batch.rx.samples);
    let mg = metric(&tape.output, batch, sys, trim_for(model, sys), true)?;
    check_finite(&mg.grad_y, "metric")?;
    let nsteps = cfg.gamma_steps.len();
    let mut grad = Gradient {
        taps: taps.iter().map(|h| vec![C64::new(0.0, 0.0); h.len()]).collect(),
        nonlinear_scales: vec![0.0; nsteps],
    };
    let mut g = mg.grad_y;
    for m in (0..taps.len()).rev() {
        let u = &tape.fir_inputs[m];
        let h = &taps[m][..model.active[m]];
        let n = u.len();
        for (j, gh) in grad.taps[m][..h.len()].iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                let mut s = u[i];
                if j > 0 {
                    s = if i >= j { u[i - j] } else { C64::new(0.0, 0.0) }
                        + if i + j < n { u[i + j] } else { C64::new(0.0, 0.0) };
                }
                acc += g[i] * s.conj();
            }
            *gh = acc;
        }
        check_finite(&grad.taps[m], &format!("filter {m} taps"))?;
        let hc: Vec<C64> = h.iter().map(|v| v.conj()).collect();
        g = fir_same(&g, &hc);
        check_finite(&g, &format!("filter {m} input"))?;
        if m == 0 || cfg.nonlinearity == Nonlinearity::Off {
            continue;
        }
        let l = m - 1;
        let gain = cfg.step_gain(l);
        let mut g_gain = 0.0;
        for (gy, &x) in g.iter_mut().zip(&tape.fir_outputs[l]) {
            let p = x.norm_sqr();
            match cfg.nonlinearity {
                Nonlinearity::Exact => {
                    let rot = C64::cis(gain * p);
                    let y = x * rot.conj();
                    let s = (gy.conj() * C64::new(0.0, -1.0) * y).re;
                    g_gain += s * p;
                    *gy = *gy * rot + x * (2.0 * gain * s);
                }
                Nonlinearity::Taylor1 => {
                    let f = C64::new(1.0, -gain * p);
                    let r = (gy.conj() * C64::new(0.0, -gain) * x).re;
                    g_gain += (gy.conj() * C64::new(0.0, -p) * x).re;
                    *gy = f.conj() * *gy + x * (2.0 * r);
                }
                Nonlinearity::Off => unreachable!(),
            }
        }
        // gain = sign * gamma * scale
        grad.nonlinear_scales[l] = g_gain * cfg.sign.factor() * cfg.gamma_steps[l];
        check_finite(&g, &format!("nonlinear step {l}"))?;
    }
    Ok((-mg.snr_linear, mg.snr_db, grad))
}

pub fn gradient(model: &Model, batch: &Batch, sys: &SystemConfig) -> Result<Gradient> {
    let taps = model_taps(model);
    Ok(gradient_with_taps(model, &taps, batch, sys)?.2)
}

/// Forward value of a quantized tap (half up, saturating) back on the real scale.
pub fn fake_quantize(tap: C64, fmt: FixedFormat) -> C64 {
    C64::new(
        quantize_value(tap.re, fmt, RoundingMode::HalfUp).to_f64(),
        quantize_value(tap.im, fmt, RoundingMode::HalfUp).to_f64(),
    )
}

/// Straight-through derivative of [`fake_quantize`] per component: 1 inside the
/// representable range, 0 where the quantizer saturates.
pub fn fake_quantize_grad(tap: C64, fmt: FixedFormat) -> (f64, f64) {
    let inside = |v: f64| {
        let r = (v * 2f64.powi(-fmt.scale_exp) + 0.5).floor();
        if r >= fmt.min_raw() as f64 && r <= fmt.max_raw() as f64 {
            1.0
        } else {
            0.0
        }
    };
    (inside(tap.re), inside(tap.im))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    /// One descent step of `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.steps as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.steps as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Full training state; serialisable as a checkpoint.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub iteration: usize,
    pub loss_history: Vec<(usize, f64)>,
    /// Frozen coefficient formats once quantization-aware fine-tuning has begun.
    pub quant_formats: Option<Vec<FixedFormat>>,
    pub initial_snr_db: Option<f64>,
    bad_streak: usize,
}

fn param_count(model: &Model) -> usize {
    2 * model.dbp.bank.filters.iter().map(|f| f.unique().len()).sum::<usize>() + model.dbp.gamma_steps.len()
}

fn batch_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_add((iteration as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let n = param_count(&model);
        Self {
            model,
            adam: Adam::new(n),
            iteration: 0,
            loss_history: Vec::new(),
            quant_formats: None,
            initial_snr_db: None,
            bad_streak: 0,
        }
    }

    /// Removes the outermost active pair of every filter, permanently, and restarts the
    /// optimiser moments: the loss scale after a prune is far below the one they tracked.
    pub fn prune(&mut self, pairs: usize) -> Result<()> {
        if self.model.active.iter().any(|&a| a <= pairs) {
            return Err(Error::InvalidArgument("pruning would remove the centre tap".into()));
        }
        for (m, f) in self.model.dbp.bank.filters.iter_mut().enumerate() {
            self.model.active[m] -= pairs;
            for t in &mut f.unique_mut()[self.model.active[m]..] {
                *t = C64::new(0.0, 0.0);
            }
        }
        self.adam = Adam::new(self.adam.m.len());
        Ok(())
    }

    /// Freezes per-filter coefficient formats, switches to quantized forward taps and
    /// restarts the optimiser moments.
    pub fn start_fake_quant(&mut self, coeff_bits: u32) -> Result<()> {
        let formats = self
            .model
            .dbp
            .bank
            .filters
            .iter()
            .zip(&self.model.active)
            .map(|(f, &a)| coefficient_scale(&f.unique()[..a], coeff_bits, RoundingMode::HalfUp))
            .collect::<Result<Vec<_>>>()?;
        self.quant_formats = Some(formats);
        self.adam = Adam::new(self.adam.m.len());
        Ok(())
    }

    fn forward_taps(&self) -> Vec<Vec<C64>> {
        let taps = model_taps(&self.model);
        match &self.quant_formats {
            None => taps,
            Some(fmts) => taps
                .iter()
                .zip(fmts)
                .map(|(h, &fmt)| h.iter().map(|&t| fake_quantize(t, fmt)).collect())
                .collect(),
        }
    }

    /// One optimisation step on a fresh batch; returns the batch effective SNR (dB).
    pub fn step(&mut self, sys: &SystemConfig, link: &LinkParams, cfg: &TrainConfig, lr: f64) -> Result<f64> {
        let batch = simulate_batch(sys, link, cfg.batch_symbols, batch_seed(cfg.seed, self.iteration))?;
        let taps = self.forward_taps();
        let (_, snr_db, grad) = gradient_with_taps(&self.model, &taps, &batch, sys)?;
        let mut params = Vec::with_capacity(self.adam.m.len());
        let mut flat = Vec::with_capacity(self.adam.m.len());
        for (m, f) in self.model.dbp.bank.filters.iter().enumerate() {
            for (k, (&t, &g)) in f.unique().iter().zip(&grad.taps[m]).enumerate() {
                let (mr, mi) = match &self.quant_formats {
                    Some(fmts) => fake_quantize_grad(t, fmts[m]),
                    None => (1.0, 1.0),
                };
                let live = if k < self.model.active[m] { 1.0 } else { 0.0 };
                params.extend([t.re, t.im]);
                flat.extend([g.re * mr * live, g.im * mi * live]);
            }
        }
        let train_scales = cfg.train_nonlinear_scales && cfg.nonlinearity != Nonlinearity::Off;
        for (l, g) in grad.nonlinear_scales.iter().enumerate() {
            params.push(self.model.dbp.bank.nonlinear_scale(l));
            flat.push(if train_scales { *g } else { 0.0 });
        }
        self.adam.step(&mut params, &flat, lr);
        let mut it = params.into_iter();
        for (m, f) in self.model.dbp.bank.filters.iter_mut().enumerate() {
            let active = self.model.active[m];
            for (k, t) in f.unique_mut().iter_mut().enumerate() {
                let (re, im) = (it.next().unwrap(), it.next().unwrap());
                *t = if k < active { C64::new(re, im) } else { C64::new(0.0, 0.0) };
            }
        }
        let nsteps = self.model.dbp.gamma_steps.len();
        self.model.dbp.bank.nonlinear_scales = it.take(nsteps).collect();

        let initial = *self.initial_snr_db.get_or_insert(snr_db);
        self.loss_history.push((self.iteration, snr_db));
        self.bad_streak = if snr_db < initial - DIVERGENCE_DB { self.bad_streak + 1 } else { 0 };
        self.iteration += 1;
        if self.bad_streak >= DIVERGENCE_PATIENCE {
            return Err(Error::Diverged {
                iteration: self.iteration,
                snr_db,
                initial_db: initial,
            });
        }
        Ok(snr_db)
    }

    /// The coefficient-quantized bank (requires fine-tuning to have started).
    pub fn quantized_bank(&self) -> Option<QuantizedBank> {
        let fmts = self.quant_formats.as_ref()?;
        let bank = self.model.compact_bank();
        Some(QuantizedBank {
            beta2: bank.beta2,
            step_sizes: bank.step_sizes.clone(),
            filters: bank.filters.iter().zip(fmts).map(|(f, &fmt)| quantize_filter_with(f, fmt)).collect(),
            nonlinear_scales: bank.nonlinear_scales.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            bank: BankDocument::from(&self.model.dbp.bank),
            gamma_steps: self.model.dbp.gamma_steps.clone(),
            nonlinearity: self.model.dbp.nonlinearity,
            active: self.model.active.clone(),
            adam: self.adam.clone(),
            iteration: self.iteration,
            quant_formats: self
                .quant_formats
                .as_ref()
                .map(|f| f.iter().map(|x| (x.word_bits, x.scale_exp)).collect()),
            initial_snr_db: self.initial_snr_db,
            loss_history: self.loss_history.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let bank = FilterBank::try_from(c.bank)?;
        let dbp = DbpConfig::new(bank, c.gamma_steps, c.nonlinearity)?;
        let model = Model { dbp, active: c.active };
        if model.active.len() != model.dbp.bank.len() || c.adam.m.len() != param_count(&model) {
            return Err(Error::Schema("checkpoint shapes are inconsistent".into()));
        }
        let quant_formats = c
            .quant_formats
            .map(|v| v.into_iter().map(|(w, s)| FixedFormat::new(w, s)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Ok(Self {
            model,
            adam: c.adam,
            iteration: c.iteration,
            loss_history: c.loss_history,
            quant_formats,
            initial_snr_db: c.initial_snr_db,
            bad_streak: 0,
        })
    }
}

/// Serialised [`TrainState`]: bank schema plus optimiser state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub bank: BankDocument,
    pub gamma_steps: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    pub active: Vec<usize>,
    pub adam: Adam,
    pub iteration: usize,
    pub quant_formats: Option<Vec<(u32, i32)>>,
    pub initial_snr_db: Option<f64>,
    pub loss_history: Vec<(usize, f64)>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// LS-CO initialisation at the configured initial length.
pub fn initial_model(cfg: &TrainConfig, link: &LinkParams, sys: &SystemConfig) -> Result<Model> {
    let fs = sys.sample_rate();
    let bank = design_lsco_bank(
        link.num_spans,
        link.span_length_m,
        link.beta2,
        cfg.initial_taps,
        fs,
        default_passband_fraction(sys.symbol_rate, sys.rolloff, fs),
        DEFAULT_MAGNITUDE_BOUND,
    )?;
    Ok(Model::new(DbpConfig::for_link(bank, link, cfg.nonlinearity)?))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Float bank at the end of the floating-point phase, truncated to the target length.
    pub float_bank: FilterBank,
    pub quantized_bank: Option<QuantizedBank>,
    pub loss_history: Vec<(usize, f64)>,
    pub state: TrainState,
}

/// Runs the float phase with pruning, then optional quantization-aware fine-tuning.
/// `link.launch_power_dbm` is replaced by the training launch power.
pub fn train(cfg: &TrainConfig, link: &LinkParams, sys: &SystemConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let link = LinkParams {
        launch_power_dbm: cfg.launch_power_dbm,
        ..link.clone()
    };
    let mut state = TrainState::new(initial_model(cfg, &link, sys)?);
    run_float_phase(&mut state, cfg, &link, sys)?;
    let float_bank = state.model.compact_bank();
    let selected = match cfg.coeff_bits {
        Some(bits) => Some(fine_tune(&mut state, cfg, &link, sys, bits, cfg.fakequant_iterations)?),
        None => None,
    };
    Ok(TrainOutcome {
        float_bank,
        quantized_bank: selected.map(|s| s.bank),
        loss_history: state.loss_history.clone(),
        state,
    })
}

/// Float training up to the end of the float phase, applying due prune events.
pub fn run_float_phase(state: &mut TrainState, cfg: &TrainConfig, link: &LinkParams, sys: &SystemConfig) -> Result<()> {
    while state.iteration < cfg.float_iterations() {
        let due: usize = cfg
            .prune_schedule
            .iter()
            .filter(|e| e.iteration == state.iteration)
            .map(|e| e.pairs)
            .sum();
        if due > 0 {
            state.prune(due)?;
        }
        let lr = cfg.learning_rate * cfg.lr_decay.powi(state.iteration as i32);
        state.step(sys, link, cfg, lr)?;
    }
    Ok(())
}

/// Quantized bank chosen by fine-tuning.
#[derive(Debug, Clone)]
pub struct FineTuned {
    pub bank: QuantizedBank,
    /// Effective SNR on the validation batch; `None` without validation.
    pub validation_snr_db: Option<f64>,
    pub iteration: usize,
}

/// Quantization-aware fine-tuning for `iterations` further steps at `fakequant_lr`
/// (linearly annealed if configured). Returns the snapshot with the best validation
/// SNR, or the final one when validation is off.
pub fn fine_tune(
    state: &mut TrainState,
    cfg: &TrainConfig,
    link: &LinkParams,
    sys: &SystemConfig,
    coeff_bits: u32,
    iterations: usize,
) -> Result<FineTuned> {
    state.start_fake_quant(coeff_bits)?;
    let step_cfg = TrainConfig {
        batch_symbols: cfg.fakequant_batch_symbols.unwrap_or(cfg.batch_symbols),
        ..cfg.clone()
    };
    let validation = match cfg.validation_symbols {
        0 => None,
        n => Some(simulate_batch(sys, link, n, cfg.seed ^ VALIDATION_SEED_SALT)?),
    };
    let mut best: Option<(f64, FineTuned)> = None;
    let mut consider = |state: &TrainState| -> Result<()> {
        let Some(batch) = &validation else { return Ok(()) };
        let (_, snr) = loss_with_taps(&state.model, &state.forward_taps(), batch, sys)?;
        if best.as_ref().is_none_or(|(b, _)| snr > *b) {
            let bank = state.quantized_bank().expect("formats are frozen");
            best = Some((snr, FineTuned { bank, validation_snr_db: Some(snr), iteration: state.iteration }));
        }
        Ok(())
    };
    for i in 0..iterations {
        if i % cfg.validation_interval.max(1) == 0 {
            consider(state)?;
        }
        let lr = if cfg.fakequant_anneal {
            cfg.fakequant_lr * (1.0 - i as f64 / iterations as f64)
        } else {
            cfg.fakequant_lr
        };
        state.step(sys, link, &step_cfg, lr)?;
    }
    consider(state)?;
    Ok(match best {
        Some((_, f)) => f,
        None => FineTuned {
            bank: state.quantized_bank().expect("formats are frozen"),
            validation_snr_db: None,
            iteration: state.iteration,
        },
    })
}

/// Fine-tunes a copy of `state` at each candidate rate and returns the rate whose snapshot
/// scores best on the validation batch, with that snapshot and the tuned state.
pub fn fine_tune_best_rate(
    state: &TrainState,
    cfg: &TrainConfig,
    link: &LinkParams,
    sys: &SystemConfig,
    coeff_bits: u32,
    iterations: usize,
    rates: &[f64],
) -> Result<(f64, FineTuned, TrainState)> {
    if rates.is_empty() || cfg.validation_symbols == 0 {
        return Err(Error::InvalidArgument("rate selection needs candidate rates and a validation batch".into()));
    }
    let mut best: Option<(f64, FineTuned, TrainState)> = None;
    for &lr in rates {
        let mut s = state.clone();
        let c = TrainConfig {
            fakequant_lr: lr,
            ..cfg.clone()
        };
        c.validate()?;
        let f = fine_tune(&mut s, &c, link, sys, coeff_bits, iterations)?;
        if best.as_ref().is_none_or(|(_, b, _)| f.validation_snr_db > b.validation_snr_db) {
            best = Some((lr, f, s));
        }
    }
    Ok(best.expect("at least one rate"))
}

/// Writes `iteration,eff_snr_db` rows.
pub fn write_loss_csv(history: &[(usize, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,eff_snr_db")?;
    for (i, s) in history {
        writeln!(f, "{i},{s}")?;
    }
    f.flush()?;
    Ok(())
}
