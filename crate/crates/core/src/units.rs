//! Unit conventions.
//!
//! Internally all frequencies/energies are in eV and time is in units of
//! `hbar/eV` (about 0.658 fs), so a phase `omega * t` is dimensionless with
//! no conversion factor. Public interfaces accept and report eV and fs.

use crate::scalar::Real;

/// Planck constant over 2 pi, in eV * fs.
pub const HBAR_EV_FS: f64 = 0.658211951;

/// Convert a time in femtoseconds to internal units (`hbar/eV`).
pub fn fs_to_internal<T: Real>(t_fs: T) -> T {
    t_fs / T::of(HBAR_EV_FS)
}

/// Convert a time in internal units (`hbar/eV`) to femtoseconds.
pub fn internal_to_fs<T: Real>(t: T) -> T {
    t * T::of(HBAR_EV_FS)
}
