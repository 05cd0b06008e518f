//! Global floating-point precision switch.
//!
//! Storage is always `f64`. A tape running in [`Precision::F32`] mode rounds
//! every value it records to the nearest `f32`, which reproduces single
//! precision storage semantics for the tolerance checks that ask for it.
//! The global setting is only the default picked up by [`crate::Tape::new`];
//! individual tapes can override it.

use core::sync::atomic::{AtomicBool, Ordering};

static SINGLE: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

pub fn set_precision(p: Precision) {
    SINGLE.store(p == Precision::F32, Ordering::SeqCst);
}

pub fn precision() -> Precision {
    if SINGLE.load(Ordering::SeqCst) {
        Precision::F32
    } else {
        Precision::F64
    }
}

#[inline]
pub(crate) fn round_in_place(data: &mut [f64]) {
    for x in data {
        *x = *x as f32 as f64;
    }
}
