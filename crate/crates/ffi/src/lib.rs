//! C ABI over the tddbp library.
//!
//! Every function returns a [`TddbpStatus`]; values come back through out-pointers.
//! Complex buffers are interleaved `re, im` doubles. Handles are opaque and must be
//! released with the matching `*_free` function. After a failure,
//! [`tddbp_last_error`] describes it (per thread).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tddbp::channel::LinkParams;
use tddbp::dbp::{dbp_run, estimate_crossover, BlockPolicy, CostModel, DbpConfig, Nonlinearity};
use tddbp::filter::{design_lsco_bank, FilterBank};
use tddbp::fixed::{cost_report, QuantConfig, QuantizedBank};
use tddbp::signal::{effective_snr, ComplexSignal};
use tddbp::{Error, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TddbpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Schema = 3,
    Numerical = 4,
    Io = 5,
    LengthUnderflow = 6,
    Panic = 7,
}

/// Filter bank in floating point.
pub struct TddbpBank(FilterBank);

/// Filter bank with integer taps.
pub struct TddbpQuantBank(QuantizedBank);

/// Link physics. A NaN noise figure disables amplifier noise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TddbpLink {
    pub beta2: f64,
    pub gamma: f64,
    pub alpha_db_per_km: f64,
    pub span_length_m: f64,
    pub num_spans: usize,
    pub noise_figure_db: f64,
    pub launch_power_dbm: f64,
}

/// Nonlinear step used by [`tddbp_dbp_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TddbpNonlinearity {
    Taylor1 = 0,
    Exact = 1,
    Off = 2,
}

impl From<&TddbpLink> for LinkParams {
    fn from(l: &TddbpLink) -> Self {
        Self {
            beta2: l.beta2,
            gamma: l.gamma,
            alpha_db_per_km: l.alpha_db_per_km,
            span_length_m: l.span_length_m,
            num_spans: l.num_spans,
            ase_noise_figure_db: (!l.noise_figure_db.is_nan()).then_some(l.noise_figure_db),
            launch_power_dbm: l.launch_power_dbm,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TddbpStatus {
    match e {
        Error::InvalidArgument(_) | Error::EmptyConstellation | Error::PulseSpanTooShort { .. } | Error::ZeroFilter => {
            TddbpStatus::InvalidArgument
        }
        Error::Schema(_) | Error::Json(_) | Error::Mismatch(_) => TddbpStatus::Schema,
        Error::Io(_) => TddbpStatus::Io,
        Error::LengthUnderflow { .. } => TddbpStatus::LengthUnderflow,
        _ => TddbpStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TddbpStatus, String)>) -> TddbpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TddbpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TddbpStatus::Panic
        }
    }
}

trait Lift<T> {
    fn lift(self) -> Result<T, (TddbpStatus, String)>;
}

impl<T> Lift<T> for tddbp::Result<T> {
    fn lift(self) -> Result<T, (TddbpStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (TddbpStatus, String) {
    (TddbpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, (TddbpStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TddbpStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn complex_in<'a>(p: *const f64, len: usize) -> Result<Vec<C64>, (TddbpStatus, String)> {
    if p.is_null() {
        return Err(null("input buffer"));
    }
    let v = std::slice::from_raw_parts(p, 2 * len);
    Ok(v.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}

/// Message of the last failure on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn tddbp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default 8 x 100 km link.
#[no_mangle]
pub unsafe extern "C" fn tddbp_link_default(out: *mut TddbpLink) -> TddbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let l = LinkParams::default();
        *out = TddbpLink {
            beta2: l.beta2,
            gamma: l.gamma,
            alpha_db_per_km: l.alpha_db_per_km,
            span_length_m: l.span_length_m,
            num_spans: l.num_spans,
            noise_figure_db: l.ase_noise_figure_db.unwrap_or(f64::NAN),
            launch_power_dbm: l.launch_power_dbm,
        };
        Ok(())
    })
}

/// Constrained least-squares bank for one-step-per-span backpropagation over `link`.
#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_design_lsco(
    link: *const TddbpLink,
    num_taps: usize,
    sample_rate: f64,
    passband_fraction: f64,
    magnitude_bound: f64,
    out: *mut *mut TddbpBank,
) -> TddbpStatus {
    guard(|| {
        let link = link.as_ref().ok_or_else(|| null("link"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let bank = design_lsco_bank(
            link.num_spans,
            link.span_length_m,
            link.beta2,
            num_taps,
            sample_rate,
            passband_fraction,
            magnitude_bound,
        )
        .lift()?;
        *out = Box::into_raw(Box::new(TddbpBank(bank)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_load(path: *const c_char, out: *mut *mut TddbpBank) -> TddbpStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(TddbpBank(FilterBank::load(path).lift()?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_save(bank: *const TddbpBank, path: *const c_char) -> TddbpStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        bank.0.save(path_arg(path)?).lift()
    })
}

/// Taps per filter and number of filters.
#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_shape(
    bank: *const TddbpBank,
    num_taps: *mut usize,
    num_filters: *mut usize,
) -> TddbpStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        if num_taps.is_null() || num_filters.is_null() {
            return Err(null("out"));
        }
        *num_taps = bank.0.num_taps();
        *num_filters = bank.0.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_free(bank: *mut TddbpBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Per-filter power-of-two coefficient quantization.
#[no_mangle]
pub unsafe extern "C" fn tddbp_bank_quantize(
    bank: *const TddbpBank,
    coeff_bits: u32,
    out: *mut *mut TddbpQuantBank,
) -> TddbpStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = QuantizedBank::quantize(&bank.0, coeff_bits).lift()?;
        *out = Box::into_raw(Box::new(TddbpQuantBank(q)));
        Ok(())
    })
}

/// Dequantized float copy of an integer-tap bank.
#[no_mangle]
pub unsafe extern "C" fn tddbp_quant_bank_to_float(qbank: *const TddbpQuantBank, out: *mut *mut TddbpBank) -> TddbpStatus {
    guard(|| {
        let q = qbank.as_ref().ok_or_else(|| null("qbank"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(TddbpBank(q.0.to_float())));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_quant_bank_load(path: *const c_char, out: *mut *mut TddbpQuantBank) -> TddbpStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(TddbpQuantBank(QuantizedBank::load(path).lift()?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_quant_bank_save(qbank: *const TddbpQuantBank, path: *const c_char) -> TddbpStatus {
    guard(|| {
        let q = qbank.as_ref().ok_or_else(|| null("qbank"))?;
        q.0.save(path_arg(path)?).lift()
    })
}

#[no_mangle]
pub unsafe extern "C" fn tddbp_quant_bank_free(qbank: *mut TddbpQuantBank) {
    if !qbank.is_null() {
        drop(Box::from_raw(qbank));
    }
}

/// Floating-point backpropagation of `len` complex samples. `output` must hold `2 * len`
/// doubles; the nonlinear step gain follows from `link`.
#[no_mangle]
pub unsafe extern "C" fn tddbp_dbp_run(
    bank: *const TddbpBank,
    link: *const TddbpLink,
    nonlinearity: TddbpNonlinearity,
    input: *const f64,
    len: usize,
    sample_rate: f64,
    samples_per_symbol: usize,
    output: *mut f64,
) -> TddbpStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        let link = LinkParams::from(link.as_ref().ok_or_else(|| null("link"))?);
        if output.is_null() {
            return Err(null("output buffer"));
        }
        let nl = match nonlinearity {
            TddbpNonlinearity::Taylor1 => Nonlinearity::Taylor1,
            TddbpNonlinearity::Exact => Nonlinearity::Exact,
            TddbpNonlinearity::Off => Nonlinearity::Off,
        };
        let x = ComplexSignal::new(complex_in(input, len)?, sample_rate, samples_per_symbol).lift()?;
        let cfg = DbpConfig::for_link(bank.0.clone(), &link, nl).lift()?;
        let y = dbp_run(&x, &cfg).lift()?;
        let out = std::slice::from_raw_parts_mut(output, 2 * len);
        for (o, v) in out.chunks_exact_mut(2).zip(&y.samples) {
            o[0] = v.re;
            o[1] = v.im;
        }
        Ok(())
    })
}

/// Effective SNR (dB) of `len` equalized symbols against the transmitted ones.
#[no_mangle]
pub unsafe extern "C" fn tddbp_effective_snr_db(
    equalized: *const f64,
    reference: *const f64,
    len: usize,
    out: *mut f64,
) -> TddbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = effective_snr(&complex_in(equalized, len)?, &complex_in(reference, len)?).lift()?;
        Ok(())
    })
}

/// Relative multiplier cost proxy of one parallel FIR step.
#[no_mangle]
pub unsafe extern "C" fn tddbp_cost_proxy(
    num_taps: usize,
    signal_bits: u32,
    coeff_bits: u32,
    parallelism: usize,
    out: *mut f64,
) -> TddbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let q = QuantConfig::new(signal_bits, coeff_bits);
        q.validate().lift()?;
        *out = cost_report(num_taps, &q, parallelism).lift()?.proxy;
        Ok(())
    })
}

/// Smallest odd tap count (up to `max_taps`) at which radix-2 overlap-save filtering in a
/// `parallelism`-wide datapath beats direct symmetric filtering; 0 if none.
#[no_mangle]
pub unsafe extern "C" fn tddbp_crossover_taps(parallelism: usize, max_taps: usize, out: *mut usize) -> TddbpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = CostModel {
            block: BlockPolicy::Parallel(parallelism),
            ..CostModel::default()
        };
        let r = estimate_crossover(1..=max_taps, &[], &model).lift()?;
        *out = r.crossover_taps.unwrap_or(0);
        Ok(())
    })
}
