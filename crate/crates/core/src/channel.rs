//! Forward fiber propagation: split-step Fourier solution of the scalar NLSE with
//! lumped amplification and ASE noise.
//!
//! Conventions: spectra use the DFT kernel `exp(-j w n)`. A forward linear step of
//! length `d` multiplies the spectrum by `exp(-j beta2/2 d w^2) exp(-alpha d / 2)` and the
//! Kerr step rotates each sample by `exp(+j gamma L |x|^2)`. Digital backpropagation
//! applies the opposite signs.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::signal::ComplexSignal;
use crate::{Error, Result, C64};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;
pub const CARRIER_WAVELENGTH_M: f64 = 1550e-9;

/// Fiber link physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Group-velocity dispersion, s^2/m.
    pub beta2: f64,
    /// Kerr nonlinearity, 1/(W m).
    pub gamma: f64,
    pub alpha_db_per_km: f64,
    pub span_length_m: f64,
    pub num_spans: usize,
    /// EDFA noise figure; `None` disables ASE.
    pub ase_noise_figure_db: Option<f64>,
    pub launch_power_dbm: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            beta2: -21.7e-27,
            gamma: 1.3e-3,
            alpha_db_per_km: 0.2,
            span_length_m: 100e3,
            num_spans: 8,
            ase_noise_figure_db: Some(5.0),
            launch_power_dbm: 0.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_length_m > 0.0) || self.num_spans == 0 {
            return Err(Error::InvalidArgument(
                "span_length_m must be positive and num_spans >= 1".into(),
            ));
        }
        if !(self.gamma >= 0.0) || !self.beta2.is_finite() || !(self.alpha_db_per_km >= 0.0) {
            return Err(Error::InvalidArgument("gamma and alpha must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_length_m(&self) -> f64 {
        self.span_length_m * self.num_spans as f64
    }

    /// Power attenuation coefficient in 1/m.
    pub fn alpha_per_m(&self) -> f64 {
        alpha_per_m(self.alpha_db_per_km)
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_w(self.launch_power_dbm)
    }

    /// Power gain of each amplifier (equal to the span loss).
    pub fn span_gain(&self) -> f64 {
        (self.alpha_per_m() * self.span_length_m).exp()
    }

    /// One-sided ASE power spectral density per amplifier, W/Hz.
    pub fn ase_psd(&self) -> f64 {
        match self.ase_noise_figure_db {
            None => 0.0,
            Some(nf_db) => {
                let nsp = 10f64.powf(nf_db / 10.0) / 2.0;
                let h_nu = PLANCK * LIGHT_SPEED / CARRIER_WAVELENGTH_M;
                nsp * h_nu * (self.span_gain() - 1.0)
            }
        }
    }

    /// Linear SNR limited by accumulated ASE in a matched-filter receiver.
    pub fn ase_limited_snr_db(&self, symbol_rate: f64) -> f64 {
        let noise = self.num_spans as f64 * self.ase_psd() * symbol_rate;
        10.0 * (self.launch_power_w() / noise).log10()
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn alpha_per_m(alpha_db_per_km: f64) -> f64 {
    alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
}

/// Loss-weighted effective length `(1 - exp(-alpha d)) / alpha` of a step.
pub fn effective_step_length(delta_m: f64, alpha_db_per_km: f64) -> f64 {
    let a = alpha_per_m(alpha_db_per_km);
    let ad = a * delta_m;
    if ad < 1e-8 {
        // series keeps full precision near the lossless limit
        delta_m * (1.0 - ad / 2.0 + ad * ad / 6.0)
    } else {
        -(-ad).exp_m1() / a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Symmetric,
    Asymmetric,
}

/// Step layout within one span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsfmPlan {
    pub steps_per_span: usize,
    pub step_sizes: Vec<f64>,
    pub scheme: Scheme,
}

impl SsfmPlan {
    pub fn uniform(link: &LinkParams, steps_per_span: usize, scheme: Scheme) -> Result<Self> {
        if steps_per_span == 0 {
            return Err(Error::InvalidArgument("steps_per_span must be >= 1".into()));
        }
        let d = link.span_length_m / steps_per_span as f64;
        Ok(Self {
            steps_per_span,
            step_sizes: vec![d; steps_per_span],
            scheme,
        })
    }

    fn validate(&self, link: &LinkParams) -> Result<()> {
        if self.steps_per_span == 0 || self.step_sizes.len() != self.steps_per_span {
            return Err(Error::InvalidArgument("plan has inconsistent step count".into()));
        }
        let total: f64 = self.step_sizes.iter().sum();
        if (total - link.span_length_m).abs() > 1e-9 * link.span_length_m {
            return Err(Error::InvalidArgument(format!(
                "steps sum to {total} m, span is {} m",
                link.span_length_m
            )));
        }
        Ok(())
    }
}

/// Angular frequency of each DFT bin (rad/s), negative frequencies in the upper half.
pub fn bin_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            2.0 * std::f64::consts::PI * k * sample_rate / n as f64
        })
        .collect()
}

/// Fraction of spectral energy in the outer 10% of the simulation band.
pub fn band_edge_fraction(x: &[C64]) -> f64 {
    let n = x.len();
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let total: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let edge: f64 = buf
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = if *k < n.div_ceil(2) { *k as f64 } else { n as f64 - *k as f64 };
            f / n as f64 >= 0.45
        })
        .map(|(_, v)| v.norm_sqr())
        .sum();
    edge / total
}

struct Propagator {
    n: usize,
    omega2: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Propagator {
    fn new(n: usize, sample_rate: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        Self {
            n,
            omega2: bin_frequencies(n, sample_rate).into_iter().map(|w| w * w).collect(),
            fwd,
            inv,
            scratch,
        }
    }

    /// Spectral multiplier for a linear step of length `d` (negative `d` inverts it).
    fn kernel(&self, beta2: f64, alpha: f64, d: f64) -> Vec<C64> {
        let amp = (-alpha * d / 2.0).exp() / self.n as f64;
        self.omega2
            .iter()
            .map(|w2| C64::from_polar(amp, -beta2 / 2.0 * d * w2))
            .collect()
    }

    fn apply(&mut self, x: &mut [C64], kernel: &[C64]) {
        self.fwd.process_with_scratch(x, &mut self.scratch);
        x.iter_mut().zip(kernel).for_each(|(v, k)| *v *= k);
        self.inv.process_with_scratch(x, &mut self.scratch);
    }
}

fn kerr(x: &mut [C64], phase_per_watt: f64) {
    if phase_per_watt == 0.0 {
        return;
    }
    for v in x.iter_mut() {
        *v *= C64::cis(phase_per_watt * v.norm_sqr());
    }
}

/// Effective Kerr length of a step referenced to the power at its midpoint.
fn midpoint_kerr_length(d: f64, link: &LinkParams) -> f64 {
    effective_step_length(d, link.alpha_db_per_km) * (link.alpha_per_m() * d / 2.0).exp()
}

fn propagate_span(
    prop: &mut Propagator,
    x: &mut [C64],
    link: &LinkParams,
    plan: &SsfmPlan,
    direction: f64,
) {
    let alpha = link.alpha_per_m();
    let beta2 = link.beta2;
    let gamma = link.gamma * direction;
    match plan.scheme {
        Scheme::Symmetric => {
            let steps: Box<dyn Iterator<Item = &f64>> = if direction > 0.0 {
                Box::new(plan.step_sizes.iter())
            } else {
                Box::new(plan.step_sizes.iter().rev())
            };
            for &d in steps {
                let half = prop.kernel(beta2, alpha, direction * d / 2.0);
                prop.apply(x, &half);
                kerr(x, gamma * midpoint_kerr_length(d, link));
                prop.apply(x, &half);
            }
        }
        Scheme::Asymmetric => {
            if direction > 0.0 {
                for &d in &plan.step_sizes {
                    kerr(x, gamma * effective_step_length(d, link.alpha_db_per_km));
                    let k = prop.kernel(beta2, alpha, d);
                    prop.apply(x, &k);
                }
            } else {
                for &d in plan.step_sizes.iter().rev() {
                    let k = prop.kernel(beta2, alpha, -d);
                    prop.apply(x, &k);
                    kerr(x, gamma * effective_step_length(d, link.alpha_db_per_km));
                }
            }
        }
    }
}

/// Forward propagation over all spans.
///
/// Each span ends with an ideal amplifier whose gain equals the span loss, followed by
/// white circular Gaussian ASE drawn from a stream seeded by `seed`.
pub fn ssfm_forward(signal: &ComplexSignal, link: &LinkParams, plan: &SsfmPlan, seed: u64) -> Result<ComplexSignal> {
    link.validate()?;
    plan.validate(link)?;
    if signal.is_empty() {
        return Err(Error::InvalidArgument("empty signal".into()));
    }
    let edge = band_edge_fraction(&signal.samples);
    if edge > 1e-3 {
        return Err(Error::Aliasing { fraction: edge });
    }
    let mut x = signal.samples.clone();
    let mut prop = Propagator::new(x.len(), signal.sample_rate);
    let gain = link.span_gain().sqrt();
    let sigma = (link.ase_psd() * signal.sample_rate / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..link.num_spans {
        propagate_span(&mut prop, &mut x, link, plan, 1.0);
        x.iter_mut().for_each(|v| *v *= gain);
        if sigma > 0.0 {
            for v in x.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *v += C64::new(re, im) * sigma;
            }
        }
    }
    Ok(signal.with_samples(x))
}

/// Exact inverse of the noiseless forward map: frequency-domain backpropagation with the
/// same step layout. Used as a performance ceiling, never as the receiver under test.
pub fn ideal_backpropagation(signal: &ComplexSignal, link: &LinkParams, plan: &SsfmPlan) -> Result<ComplexSignal> {
    link.validate()?;
    plan.validate(link)?;
    let mut x = signal.samples.clone();
    let mut prop = Propagator::new(x.len(), signal.sample_rate);
    let inv_gain = 1.0 / link.span_gain().sqrt();
    for _ in 0..link.num_spans {
        x.iter_mut().for_each(|v| *v *= inv_gain);
        propagate_span(&mut prop, &mut x, link, plan, -1.0);
    }
    Ok(signal.with_samples(x))
}

/// Frequency-domain compensation of the accumulated dispersion only.
pub fn ideal_cd_compensation(signal: &ComplexSignal, beta2: f64, length_m: f64) -> ComplexSignal {
    let mut x = signal.samples.clone();
    let mut prop = Propagator::new(x.len(), signal.sample_rate);
    let k = prop.kernel(beta2, 0.0, -length_m);
    prop.apply(&mut x, &k);
    signal.with_samples(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_symbols, pulse_shape, Constellation};

    fn test_signal(n_sym: usize, seed: u64, power_w: f64) -> ComplexSignal {
        let tx = generate_symbols(n_sym, &Constellation::qam16(), seed).unwrap();
        let mut s = pulse_shape(&tx.values, 20e9, 2, 0.1, 64).unwrap();
        let scale = (power_w / s.power()).sqrt();
        s.samples.iter_mut().for_each(|v| *v *= scale);
        s
    }

    fn spectrum(x: &[C64]) -> Vec<C64> {
        let mut b = x.to_vec();
        FftPlanner::new().plan_fft_forward(b.len()).process(&mut b);
        b
    }

    #[test]
    fn effective_length_limits() {
        assert_eq!(effective_step_length(1234.0, 0.0), 1234.0);
        let a = alpha_per_m(0.2);
        assert!((effective_step_length(1e9, 0.2) - 1.0 / a).abs() < 1e-6);
        let l = effective_step_length(100e3, 0.2);
        assert!((l - 21.5e3).abs() < 0.1e3, "{l}");
        let exact = (1.0 - (-a * 100e3f64).exp()) / a;
        assert!((l - exact).abs() < 1e-9);
    }

    #[test]
    fn dispersion_is_all_pass() {
        let link = LinkParams {
            gamma: 0.0,
            alpha_db_per_km: 0.0,
            ase_noise_figure_db: None,
            num_spans: 2,
            ..LinkParams::default()
        };
        let plan = SsfmPlan::uniform(&link, 5, Scheme::Symmetric).unwrap();
        let sig = test_signal(512, 1, 1e-3);
        let out = ssfm_forward(&sig, &link, &plan, 0).unwrap();
        let (a, b) = (spectrum(&sig.samples), spectrum(&out.samples));
        let peak = a.iter().map(|u| u.norm()).fold(0.0, f64::max);
        for (u, v) in a.iter().zip(&b) {
            assert!((u.norm() - v.norm()).abs() <= 1e-12 * peak);
        }
        let e_in: f64 = sig.samples.iter().map(|v| v.norm_sqr()).sum();
        let e_out: f64 = out.samples.iter().map(|v| v.norm_sqr()).sum();
        assert!(((e_in - e_out) / e_in).abs() < 1e-12);
    }

    #[test]
    fn dispersionless_fiber_is_pure_phase() {
        let link = LinkParams {
            beta2: 0.0,
            alpha_db_per_km: 0.0,
            ase_noise_figure_db: None,
            num_spans: 3,
            ..LinkParams::default()
        };
        let plan = SsfmPlan::uniform(&link, 7, Scheme::Symmetric).unwrap();
        let p: f64 = 5e-3;
        let samples: Vec<C64> = (0..256)
            .map(|i| C64::from_polar(p.sqrt(), 0.3 * (i as f64 * 0.05).sin()))
            .collect();
        let sig = ComplexSignal::new(samples, 40e9, 2).unwrap();
        let out = ssfm_forward(&sig, &link, &plan, 0).unwrap();
        let rot = C64::cis(link.gamma * link.total_length_m() * p);
        for (a, b) in sig.samples.iter().zip(&out.samples) {
            assert!((a * rot - b).norm() < 1e-12);
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_scheme_is_second_order() {
        let link = LinkParams {
            gamma: 10e-3,
            ase_noise_figure_db: None,
            num_spans: 1,
            ..LinkParams::default()
        };
        // smooth, band-limited input
        let n = 512;
        let samples: Vec<C64> = (0..n)
            .map(|i| {
                let t = (i as f64 - n as f64 / 2.0) / 12.0;
                C64::new((-t * t / 2.0).exp() * 0.1, 0.0)
            })
            .collect();
        let sig = ComplexSignal::new(samples, 40e9, 2).unwrap();
        let run = |steps| {
            let plan = SsfmPlan::uniform(&link, steps, Scheme::Symmetric).unwrap();
            ssfm_forward(&sig, &link, &plan, 0).unwrap().samples
        };
        let reference = run(1024);
        let err = |x: &[C64]| -> f64 { x.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() };
        let e1 = err(&run(8));
        let e2 = err(&run(16));
        let order = (e1 / e2).log2();
        assert!((1.7..=2.3).contains(&order), "order {order}");
    }

    #[test]
    fn noise_is_reproducible_and_seeded() {
        let link = LinkParams {
            num_spans: 2,
            ..LinkParams::default()
        };
        let plan = SsfmPlan::uniform(&link, 4, Scheme::Symmetric).unwrap();
        let sig = test_signal(256, 2, 1e-3);
        let a = ssfm_forward(&sig, &link, &plan, 5).unwrap();
        let b = ssfm_forward(&sig, &link, &plan, 5).unwrap();
        let c = ssfm_forward(&sig, &link, &plan, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn aliased_input_rejected() {
        let link = LinkParams::default();
        let plan = SsfmPlan::uniform(&link, 2, Scheme::Symmetric).unwrap();
        let samples: Vec<C64> = (0..64).map(|i| C64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        let sig = ComplexSignal::new(samples, 40e9, 2).unwrap();
        assert!(matches!(ssfm_forward(&sig, &link, &plan, 0), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn backpropagation_inverts_noiseless_link() {
        for scheme in [Scheme::Symmetric, Scheme::Asymmetric] {
            let link = LinkParams {
                ase_noise_figure_db: None,
                num_spans: 2,
                ..LinkParams::default()
            };
            let plan = SsfmPlan::uniform(&link, 10, scheme).unwrap();
            let sig = test_signal(512, 3, 1e-2);
            let rx = ssfm_forward(&sig, &link, &plan, 0).unwrap();
            let back = ideal_backpropagation(&rx, &link, &plan).unwrap();
            let err: f64 = sig.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
            let e: f64 = sig.samples.iter().map(|a| a.norm_sqr()).sum();
            assert!(err / e < 1e-24, "{scheme:?}: {}", err / e);
        }
    }

    #[test]
    fn bad_plans_rejected() {
        let link = LinkParams::default();
        assert!(SsfmPlan::uniform(&link, 0, Scheme::Symmetric).is_err());
        let plan = SsfmPlan {
            steps_per_span: 2,
            step_sizes: vec![1.0, 2.0],
            scheme: Scheme::Symmetric,
        };
        let sig = test_signal(64, 0, 1e-3);
        assert!(ssfm_forward(&sig, &link, &plan, 0).is_err());
    }
}
