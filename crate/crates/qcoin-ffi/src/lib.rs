//! C ABI for the coin scheme: opaque handles over the ledger and coin types,
//! integer status codes, and a generated header (`include/qcoin.h`) so other
//! languages can mint, verify, and run attack estimates.
//!
//! Every fallible function returns a [`QcoinStatus`]; on failure a
//! thread-local message is retrievable through [`qcoin_last_error`] until the
//! next call on the same thread. Handles are freed exactly once with their
//! `_free` function and are not thread-safe individually.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use qcoin::adversary::{self, Strategy};
use qcoin::coin::{load_coin, load_ledger, save_coin, save_ledger, BankLedger, Mint, QCoin};
use qcoin::protocol::{run_verification, ProtocolParams, Reason};
use qcoin::qsim::RngSeed;

/// Status of one call. Anything but `Ok` leaves a message for
/// [`qcoin_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcoinStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    FormatError = 4,
    Internal = 5,
}

/// Outcome of one verification, mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcoinVerdict {
    Valid = 0,
    Invalid = 1,
    ExhaustedOrAborted = 2,
}

/// Opaque bank ledger handle.
pub struct QcoinLedger(BankLedger);

/// Opaque coin handle.
pub struct QcoinCoin(QCoin);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = CString::new(message.into().replace('\0', "?"))
        .unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn fail(status: QcoinStatus, message: impl Into<String>) -> QcoinStatus {
    set_error(message);
    status
}

/// The message of the most recent failure on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qcoin_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |message| message.as_ptr())
    })
}

unsafe fn path_arg<'a>(raw: *const c_char) -> Result<&'a Path, QcoinStatus> {
    if raw.is_null() {
        return Err(fail(QcoinStatus::NullPointer, "path is NULL"));
    }
    match unsafe { CStr::from_ptr(raw) }.to_str() {
        Ok(text) => Ok(Path::new(text)),
        Err(_) => Err(fail(QcoinStatus::InvalidArgument, "path is not UTF-8")),
    }
}

fn guarded<F: FnOnce() -> QcoinStatus>(body: F) -> QcoinStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(QcoinStatus::Internal, "internal panic"),
    }
}

/// Creates an empty ledger.
#[no_mangle]
pub extern "C" fn qcoin_ledger_new() -> *mut QcoinLedger {
    Box::into_raw(Box::new(QcoinLedger(BankLedger::new())))
}

/// Loads a ledger file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcoin_ledger_load(
    path: *const c_char,
    out: *mut *mut QcoinLedger,
) -> QcoinStatus {
    if out.is_null() {
        return fail(QcoinStatus::NullPointer, "out is NULL");
    }
    let path = match unsafe { path_arg(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match load_ledger(path) {
        Ok(ledger) => {
            unsafe { *out = Box::into_raw(Box::new(QcoinLedger(ledger))) };
            QcoinStatus::Ok
        }
        Err(qcoin::coin::PersistError::Io(e)) => fail(QcoinStatus::IoError, e.to_string()),
        Err(e) => fail(QcoinStatus::FormatError, e.to_string()),
    }
}

/// Writes a ledger file.
///
/// # Safety
/// `ledger` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qcoin_ledger_save(
    ledger: *const QcoinLedger,
    path: *const c_char,
) -> QcoinStatus {
    let Some(ledger) = (unsafe { ledger.as_ref() }) else {
        return fail(QcoinStatus::NullPointer, "ledger is NULL");
    };
    let path = match unsafe { path_arg(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match save_ledger(&ledger.0, path) {
        Ok(()) => QcoinStatus::Ok,
        Err(e) => fail(QcoinStatus::IoError, e.to_string()),
    }
}

/// Number of coins the ledger backs.
///
/// # Safety
/// `ledger` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn qcoin_ledger_len(ledger: *const QcoinLedger) -> u64 {
    unsafe { ledger.as_ref() }.map_or(0, |ledger| ledger.0.len() as u64)
}

/// Releases a ledger handle.
///
/// # Safety
/// `ledger` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qcoin_ledger_free(ledger: *mut QcoinLedger) {
    if !ledger.is_null() {
        drop(unsafe { Box::from_raw(ledger) });
    }
}

/// Mints one coin of `k` registers: the secret record is appended to the
/// ledger and the coin handle is returned through `out`.
///
/// # Safety
/// `ledger` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcoin_mint(
    ledger: *mut QcoinLedger,
    k: u64,
    epoch: u64,
    seed: u64,
    out: *mut *mut QcoinCoin,
) -> QcoinStatus {
    let Some(ledger) = (unsafe { ledger.as_mut() }) else {
        return fail(QcoinStatus::NullPointer, "ledger is NULL");
    };
    if out.is_null() {
        return fail(QcoinStatus::NullPointer, "out is NULL");
    }
    guarded(|| {
        let mut mint = Mint::new(epoch);
        let (coin, record) = match mint.mint(k as usize, &mut RngSeed(seed).rng()) {
            Ok(pair) => pair,
            Err(e) => return fail(QcoinStatus::InvalidArgument, e.to_string()),
        };
        if let Err(e) = ledger.0.insert(record) {
            return fail(QcoinStatus::InvalidArgument, e.to_string());
        }
        unsafe { *out = Box::into_raw(Box::new(QcoinCoin(coin))) };
        QcoinStatus::Ok
    })
}

/// Loads a coin file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_load(
    path: *const c_char,
    out: *mut *mut QcoinCoin,
) -> QcoinStatus {
    if out.is_null() {
        return fail(QcoinStatus::NullPointer, "out is NULL");
    }
    let path = match unsafe { path_arg(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match load_coin(path) {
        Ok(coin) => {
            unsafe { *out = Box::into_raw(Box::new(QcoinCoin(coin))) };
            QcoinStatus::Ok
        }
        Err(qcoin::coin::PersistError::Io(e)) => fail(QcoinStatus::IoError, e.to_string()),
        Err(e) => fail(QcoinStatus::FormatError, e.to_string()),
    }
}

/// Writes a coin file, simulated amplitudes included.
///
/// # Safety
/// `coin` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_save(
    coin: *const QcoinCoin,
    path: *const c_char,
) -> QcoinStatus {
    let Some(coin) = (unsafe { coin.as_ref() }) else {
        return fail(QcoinStatus::NullPointer, "coin is NULL");
    };
    let path = match unsafe { path_arg(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match save_coin(&coin.0, path) {
        Ok(()) => QcoinStatus::Ok,
        Err(e) => fail(QcoinStatus::IoError, e.to_string()),
    }
}

/// Copies the coin id into `buf`, NUL-terminated. Returns the id length in
/// bytes, excluding the terminator; nothing is written when `buf_len` is too
/// small.
///
/// # Safety
/// `coin` must be a live handle; `buf` must point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_id(
    coin: *const QcoinCoin,
    buf: *mut c_char,
    buf_len: u64,
) -> u64 {
    let Some(coin) = (unsafe { coin.as_ref() }) else {
        return 0;
    };
    let id = coin.0.id().to_string();
    let needed = id.len() as u64;
    if !buf.is_null() && buf_len > needed {
        unsafe {
            std::ptr::copy_nonoverlapping(id.as_ptr(), buf.cast(), id.len());
            *buf.add(id.len()) = 0;
        }
    }
    needed
}

/// Number of registers on the coin.
///
/// # Safety
/// `coin` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_registers(coin: *const QcoinCoin) -> u64 {
    unsafe { coin.as_ref() }.map_or(0, |coin| coin.0.k() as u64)
}

/// Number of registers already burned.
///
/// # Safety
/// `coin` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_used(coin: *const QcoinCoin) -> u64 {
    unsafe { coin.as_ref() }.map_or(0, |coin| coin.0.used_count() as u64)
}

/// Releases a coin handle.
///
/// # Safety
/// `coin` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qcoin_coin_free(coin: *mut QcoinCoin) {
    if !coin.is_null() {
        drop(unsafe { Box::from_raw(coin) });
    }
}

/// Runs one in-memory verification of `coin` against `ledger` with challenge
/// size `t`. Burned registers stay burned whatever the verdict.
///
/// # Safety
/// `ledger` and `coin` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcoin_verify(
    ledger: *const QcoinLedger,
    coin: *mut QcoinCoin,
    t: u32,
    bank_seed: u64,
    holder_seed: u64,
    out: *mut QcoinVerdict,
) -> QcoinStatus {
    let Some(ledger) = (unsafe { ledger.as_ref() }) else {
        return fail(QcoinStatus::NullPointer, "ledger is NULL");
    };
    let Some(coin) = (unsafe { coin.as_mut() }) else {
        return fail(QcoinStatus::NullPointer, "coin is NULL");
    };
    if out.is_null() {
        return fail(QcoinStatus::NullPointer, "out is NULL");
    }
    guarded(|| {
        let params = match ProtocolParams::new(t as usize) {
            Ok(params) => params,
            Err(e) => return fail(QcoinStatus::InvalidArgument, e.to_string()),
        };
        let outcome = run_verification(
            &ledger.0,
            &mut coin.0,
            params,
            RngSeed(bank_seed),
            RngSeed(holder_seed),
        );
        let verdict = if outcome.verdict.valid {
            QcoinVerdict::Valid
        } else {
            match outcome.verdict.reason {
                Reason::CoinExhausted | Reason::ProtocolViolation | Reason::Timeout => {
                    QcoinVerdict::ExhaustedOrAborted
                }
                _ => QcoinVerdict::Invalid,
            }
        };
        unsafe { *out = verdict };
        QcoinStatus::Ok
    })
}

/// Estimates the acceptance probability of an attack strategy over `trials`
/// seeded protocol sessions. `strategy` is one of "honest", "blind",
/// "wrong-basis", "replay".
///
/// # Safety
/// `strategy` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcoin_attack_estimate(
    strategy: *const c_char,
    t: u32,
    trials: u64,
    seed: u64,
    out: *mut f64,
) -> QcoinStatus {
    if strategy.is_null() || out.is_null() {
        return fail(QcoinStatus::NullPointer, "strategy or out is NULL");
    }
    let Ok(name) = (unsafe { CStr::from_ptr(strategy) }).to_str() else {
        return fail(QcoinStatus::InvalidArgument, "strategy is not UTF-8");
    };
    guarded(|| {
        let strategy: Strategy = match name.parse() {
            Ok(strategy) => strategy,
            Err(e) => return fail(QcoinStatus::InvalidArgument, e.to_string()),
        };
        let params = match ProtocolParams::new(t as usize) {
            Ok(params) => params,
            Err(e) => return fail(QcoinStatus::InvalidArgument, e.to_string()),
        };
        let k = match strategy {
            Strategy::Replay => 4 * params.t(),
            _ => params.t(),
        };
        match adversary::estimate(strategy, k, params, trials, RngSeed(seed)) {
            Ok(report) => {
                unsafe { *out = report.estimate };
                QcoinStatus::Ok
            }
            Err(e) => fail(QcoinStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn mint_verify_and_wear_out_through_the_c_abi() {
        let ledger = qcoin_ledger_new();
        let mut coin: *mut QcoinCoin = std::ptr::null_mut();
        let status = unsafe { qcoin_mint(ledger, 60, 1, 42, &mut coin) };
        assert_eq!(status, QcoinStatus::Ok);
        assert_eq!(unsafe { qcoin_ledger_len(ledger) }, 1);
        assert_eq!(unsafe { qcoin_coin_registers(coin) }, 60);
        assert_eq!(unsafe { qcoin_coin_used(coin) }, 0);

        let mut id_buf = [0 as c_char; 64];
        let len = unsafe { qcoin_coin_id(coin, id_buf.as_mut_ptr(), 64) };
        assert!(len > 0);

        let mut verdict = QcoinVerdict::Invalid;
        let status = unsafe { qcoin_verify(ledger, coin, 15, 7, 8, &mut verdict) };
        assert_eq!(status, QcoinStatus::Ok);
        assert_eq!(verdict, QcoinVerdict::Valid);
        assert_eq!(unsafe { qcoin_coin_used(coin) }, 10);

        // Drain the coin; the verdict eventually reports exhaustion.
        let mut rounds = 0u64;
        loop {
            rounds += 1;
            let status =
                unsafe { qcoin_verify(ledger, coin, 15, 100 + rounds, 200 + rounds, &mut verdict) };
            assert_eq!(status, QcoinStatus::Ok);
            if verdict == QcoinVerdict::ExhaustedOrAborted {
                break;
            }
            assert!(rounds < 20, "coin never wore out");
        }

        unsafe {
            qcoin_coin_free(coin);
            qcoin_ledger_free(ledger);
        }
    }

    #[test]
    fn files_round_trip_through_the_c_abi() {
        let dir = std::env::temp_dir().join(format!("qcoin-ffi-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ledger_path = CString::new(dir.join("ledger.json").to_str().unwrap()).unwrap();
        let coin_path = CString::new(dir.join("coin.json").to_str().unwrap()).unwrap();

        let ledger = qcoin_ledger_new();
        let mut coin: *mut QcoinCoin = std::ptr::null_mut();
        unsafe {
            assert_eq!(qcoin_mint(ledger, 12, 2, 5, &mut coin), QcoinStatus::Ok);
            assert_eq!(
                qcoin_ledger_save(ledger, ledger_path.as_ptr()),
                QcoinStatus::Ok
            );
            assert_eq!(qcoin_coin_save(coin, coin_path.as_ptr()), QcoinStatus::Ok);

            let mut reloaded_ledger: *mut QcoinLedger = std::ptr::null_mut();
            let mut reloaded_coin: *mut QcoinCoin = std::ptr::null_mut();
            assert_eq!(
                qcoin_ledger_load(ledger_path.as_ptr(), &mut reloaded_ledger),
                QcoinStatus::Ok
            );
            assert_eq!(
                qcoin_coin_load(coin_path.as_ptr(), &mut reloaded_coin),
                QcoinStatus::Ok
            );
            assert_eq!(qcoin_ledger_len(reloaded_ledger), 1);
            assert_eq!(qcoin_coin_registers(reloaded_coin), 12);

            qcoin_coin_free(coin);
            qcoin_coin_free(reloaded_coin);
            qcoin_ledger_free(ledger);
            qcoin_ledger_free(reloaded_ledger);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn errors_come_with_messages() {
        let status = unsafe { qcoin_ledger_load(std::ptr::null(), std::ptr::null_mut()) };
        assert_eq!(status, QcoinStatus::NullPointer);
        let message = unsafe { CStr::from_ptr(qcoin_last_error()) };
        assert!(!message.to_bytes().is_empty());

        let missing = CString::new("/nonexistent/ledger.json").unwrap();
        let mut out: *mut QcoinLedger = std::ptr::null_mut();
        let status = unsafe { qcoin_ledger_load(missing.as_ptr(), &mut out) };
        assert_eq!(status, QcoinStatus::IoError);

        let mut estimate = 0.0f64;
        let bogus = CString::new("quantum").unwrap();
        let status = unsafe { qcoin_attack_estimate(bogus.as_ptr(), 3, 10, 1, &mut estimate) };
        assert_eq!(status, QcoinStatus::InvalidArgument);
        let message = unsafe { CStr::from_ptr(qcoin_last_error()) };
        assert!(message.to_string_lossy().contains("quantum"));
    }

    #[test]
    fn attack_estimates_flow_through() {
        let strategy = CString::new("honest").unwrap();
        let mut estimate = 0.0f64;
        let status = unsafe { qcoin_attack_estimate(strategy.as_ptr(), 3, 50, 9, &mut estimate) };
        assert_eq!(status, QcoinStatus::Ok);
        assert_eq!(estimate, 1.0);

        let strategy = CString::new("blind").unwrap();
        let status = unsafe { qcoin_attack_estimate(strategy.as_ptr(), 3, 2000, 9, &mut estimate) };
        assert_eq!(status, QcoinStatus::Ok);
        assert!((estimate - 0.25).abs() < 0.05);
    }
}
