//! C ABI for `crpsmix`.
//!
//! Every fallible function returns a [`CrpsmixStatus`]; on failure a message
//! for the calling thread is available from [`crpsmix_last_error`]. Arrays
//! are caller-owned. Grid CDFs are `cells` values at the right cell edges,
//! and expert blocks are laid out row-major (`experts * cells`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crpsmix::aggregation::{Aggregator, AggregatorConfig, ExpertForecast, Prediction, Rule};
use crpsmix::distributions::{self, GridCdf, GridDomain, Outcome, ParametricDistribution};
use crpsmix::regret::{theoretical_bound, LedgerConfig, RegretLedger, RoundRecord};
use crpsmix::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpsmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidDomain = 2,
    InvalidDistribution = 3,
    InvalidCdf = 4,
    OutcomeOutOfRange = 5,
    ExpertCountMismatch = 6,
    InvalidConfidence = 7,
    InvalidConfig = 8,
    AllExpertsAsleep = 9,
    /// `observe` without a pending `predict`, or `predict` twice.
    OutOfOrder = 10,
    BufferTooSmall = 11,
    InvalidArgument = 12,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpsmixRule {
    Aa = 0,
    Wa = 1,
}

impl From<CrpsmixRule> for Rule {
    fn from(r: CrpsmixRule) -> Self {
        match r {
            CrpsmixRule::Aa => Rule::Aa,
            CrpsmixRule::Wa => Rule::Wa,
        }
    }
}

/// Opaque aggregator handle.
pub struct CrpsmixAggregator {
    inner: Aggregator,
    ledger: RegretLedger,
    pending: Option<(Prediction, Vec<ExpertForecast>)>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(CrpsmixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidDomain(_) | Error::DomainMismatch => CrpsmixStatus::InvalidDomain,
            Error::InvalidDistribution(_) => CrpsmixStatus::InvalidDistribution,
            Error::InvalidCdf(_) => CrpsmixStatus::InvalidCdf,
            Error::OutcomeOutOfRange { .. } => CrpsmixStatus::OutcomeOutOfRange,
            Error::ExpertCountMismatch { .. } => CrpsmixStatus::ExpertCountMismatch,
            Error::InvalidConfidence(_) => CrpsmixStatus::InvalidConfidence,
            Error::InvalidConfig(_) | Error::BoundScope(_) => CrpsmixStatus::InvalidConfig,
            Error::AllExpertsAsleep => CrpsmixStatus::AllExpertsAsleep,
            Error::RoundMismatch { .. } => CrpsmixStatus::OutOfOrder,
            Error::UnknownExpert(_) | Error::EmptyLedger => CrpsmixStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CrpsmixStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CrpsmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrpsmixStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CrpsmixStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(CrpsmixStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(CrpsmixStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn live<'a>(h: *mut CrpsmixAggregator) -> Result<&'a mut CrpsmixAggregator, Failure> {
    h.as_mut()
        .ok_or_else(|| fail(CrpsmixStatus::NullPointer, "null aggregator"))
}

fn write_out(out: &mut [f64], values: &[f64]) -> Result<(), Failure> {
    if out.len() < values.len() {
        return Err(fail(
            CrpsmixStatus::BufferTooSmall,
            &format!("need {} values, buffer holds {}", values.len(), out.len()),
        ));
    }
    out[..values.len()].copy_from_slice(values);
    Ok(())
}

/// Message for the last failed call on this thread (empty if none).
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn crpsmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// `ln(experts) / eta`.
#[no_mangle]
pub extern "C" fn crpsmix_theoretical_bound(experts: usize, eta: f64) -> f64 {
    theoretical_bound(experts, eta)
}

/// Learning rate of `rule` on `[a, b]`; NaN when `b <= a`.
#[no_mangle]
pub extern "C" fn crpsmix_learning_rate(rule: CrpsmixRule, a: f64, b: f64) -> f64 {
    GridDomain::new(a, b, 2)
        .map(|d| Rule::from(rule).learning_rate(&d))
        .unwrap_or(f64::NAN)
}

/// CRPS of a grid CDF (`cells` values) against outcome `y`.
///
/// # Safety
/// `cdf` must point to `cells` readable doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_crps(
    a: f64,
    b: f64,
    cells: usize,
    cdf: *const f64,
    y: f64,
    out: *mut f64,
) -> CrpsmixStatus {
    guard(|| {
        let domain = GridDomain::new(a, b, cells)?;
        let values = slice(cdf, cells)?.to_vec();
        let out = slice_mut(out, 1)?;
        let grid = GridCdf::new(domain, values)?;
        out[0] = distributions::crps(&grid, Outcome::new(y, &domain)?)?;
        Ok(())
    })
}

/// Discretize a parametric distribution onto the grid.
///
/// `kind` is one of `point`, `uniform`, `triangular`, `gmm`; `params` follow
/// the CSV layout (`gmm` takes weight, mean, std triples).
///
/// # Safety
/// `kind` must be a NUL-terminated string, `params` must point to
/// `n_params` doubles and `out` to `cells` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_discretize(
    kind: *const c_char,
    params: *const f64,
    n_params: usize,
    a: f64,
    b: f64,
    cells: usize,
    out: *mut f64,
) -> CrpsmixStatus {
    guard(|| {
        if kind.is_null() {
            return Err(fail(CrpsmixStatus::NullPointer, "null kind"));
        }
        let kind = CStr::from_ptr(kind)
            .to_str()
            .map_err(|_| fail(CrpsmixStatus::InvalidArgument, "kind is not UTF-8"))?;
        let domain = GridDomain::new(a, b, cells)?;
        let dist =
            ParametricDistribution::from_kind_params(kind, slice(params, n_params)?, &domain)?;
        let grid = distributions::discretize(&dist, &domain)?;
        write_out(slice_mut(out, cells)?, grid.values())
    })
}

/// Create an aggregator. `alpha = 0` disables Fixed Share.
///
/// # Safety
/// `out` must point to a writable handle slot. Release the handle with
/// [`crpsmix_aggregator_free`].
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_new(
    rule: CrpsmixRule,
    a: f64,
    b: f64,
    cells: usize,
    experts: usize,
    alpha: f64,
    confidence: bool,
    out: *mut *mut CrpsmixAggregator,
) -> CrpsmixStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CrpsmixStatus::NullPointer, "null handle slot"));
        }
        *out = ptr::null_mut();
        let domain = GridDomain::new(a, b, cells)?;
        let config = AggregatorConfig::new(rule.into(), domain, experts)?
            .with_alpha(alpha)?
            .with_confidence(confidence);
        let ledger = RegretLedger::new(LedgerConfig::from(&config));
        let boxed = Box::new(CrpsmixAggregator {
            inner: Aggregator::new(config),
            ledger,
            pending: None,
        });
        *out = Box::into_raw(boxed);
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`crpsmix_aggregator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_free(handle: *mut CrpsmixAggregator) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

/// Learner CDF for the current round from `experts * cells` expert values.
/// `confidences` may be null (every expert fully confident).
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `out_cdf` holds `cells` doubles.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_predict(
    handle: *mut CrpsmixAggregator,
    expert_cdfs: *const f64,
    confidences: *const f64,
    out_cdf: *mut f64,
) -> CrpsmixStatus {
    guard(|| {
        let h = live(handle)?;
        if h.pending.is_some() {
            return Err(fail(
                CrpsmixStatus::OutOfOrder,
                "previous prediction not observed",
            ));
        }
        let config = h.inner.config();
        let (n, d, domain) = (config.experts(), config.domain().cells(), *config.domain());
        let values = slice(expert_cdfs, n * d)?;
        let conf = if confidences.is_null() {
            vec![1.0; n]
        } else {
            slice(confidences, n)?.to_vec()
        };
        let forecasts = values
            .chunks(d)
            .zip(conf)
            .map(|(row, p)| ExpertForecast::new(GridCdf::new(domain, row.to_vec())?, p))
            .collect::<Result<Vec<_>, Error>>()?;
        let out = slice_mut(out_cdf, d)?;
        let prediction = h.inner.predict(&forecasts)?;
        write_out(out, prediction.learner.values())?;
        h.pending = Some((prediction, forecasts));
        Ok(())
    })
}

/// Reveal the outcome for the pending round. `out_learner_loss` may be null.
///
/// # Safety
/// `handle` must be live; `out_learner_loss` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_observe(
    handle: *mut CrpsmixAggregator,
    y: f64,
    out_learner_loss: *mut f64,
) -> CrpsmixStatus {
    guard(|| {
        let h = live(handle)?;
        let y = Outcome::new(y, h.inner.config().domain())?;
        let (prediction, forecasts) = h
            .pending
            .take()
            .ok_or_else(|| fail(CrpsmixStatus::OutOfOrder, "observe called before predict"))?;
        let losses = match h.inner.observe(prediction.clone(), &forecasts, y) {
            Ok(l) => l,
            Err(e) => {
                h.pending = Some((prediction, forecasts));
                return Err(e.into());
            }
        };
        h.ledger.push(RoundRecord {
            t: prediction.round,
            outcome: y.value(),
            learner_loss: losses.learner,
            expert_losses: losses.experts,
            confidences: prediction.confidences,
            weights: prediction.weights,
        })?;
        if !out_learner_loss.is_null() {
            *out_learner_loss = losses.learner;
        }
        Ok(())
    })
}

/// Current normalized weights (before confidence scaling); `len >= experts`.
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_weights(
    handle: *mut CrpsmixAggregator,
    out: *mut f64,
    len: usize,
) -> CrpsmixStatus {
    guard(|| {
        let h = live(handle)?;
        write_out(slice_mut(out, len)?, &h.inner.state().weights())
    })
}

/// Number of completed rounds; 0 for a null handle.
///
/// # Safety
/// `handle` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_rounds(handle: *const CrpsmixAggregator) -> u64 {
    handle.as_ref().map_or(0, |h| h.ledger.len() as u64)
}

/// Confidence-discounted regret to each expert over the completed rounds.
///
/// # Safety
/// `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn crpsmix_aggregator_discounted_regret(
    handle: *mut CrpsmixAggregator,
    out: *mut f64,
    len: usize,
) -> CrpsmixStatus {
    guard(|| {
        let h = live(handle)?;
        let n = h.inner.config().experts();
        let regrets = if h.ledger.is_empty() {
            vec![0.0; n]
        } else {
            (0..n)
                .map(|i| h.ledger.discounted_regret(i))
                .collect::<Result<Vec<_>, _>>()?
        };
        write_out(slice_mut(out, len)?, &regrets)
    })
}
