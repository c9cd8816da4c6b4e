//! Holds only the acceptance test target (`tests/acceptance.rs`) and its
//! reporting helper. The package sorts after the other workspace members,
//! so cargo runs it last.

use std::sync::{Mutex, MutexGuard};

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so wall-clock budgets are not shared.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the one-line verdict for a criterion and fails the test on FAIL.
pub fn verdict(name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {detail}");
    assert!(passed, "{name}: {detail}");
}
