//! Fixed-point formats shared by the trig front end, the drift kernels and
//! the array simulator.
//!
//! * [`PhaseQ15`]: a phase in Q1.15, normalized so that raw `r` means `r·π/2¹⁵`
//!   radians. Two's-complement wrap is phase wrap.
//! * [`Q15`]: a plain Q1.15 fraction (sine/cosine samples, scale factors).
//! * [`AccQ824`]: the 32-bit accumulator, Q8.24, range [−128, 128).
//!
//! Every rounding step is round-to-nearest, ties-to-even. Accumulator
//! arithmetic saturates and counts each clamp in a [`Saturation`] counter.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Fraction bits of Q1.15.
pub const Q15_FRAC_BITS: u32 = 15;
/// Fraction bits of the Q8.24 accumulator.
pub const ACC_FRAC_BITS: u32 = 24;

const Q15_ONE: f64 = (1u32 << Q15_FRAC_BITS) as f64;
const ACC_ONE: f64 = (1u32 << ACC_FRAC_BITS) as f64;

/// Arithmetic right shift by `shift` bits, rounding to nearest with ties to even.
pub fn round_shift(x: i64, shift: u32) -> i64 {
    if shift == 0 {
        return x;
    }
    let floor = x >> shift;
    let rem = x - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

fn saturate_i16(x: i64) -> (i16, bool) {
    if x > i16::MAX as i64 {
        (i16::MAX, true)
    } else if x < i16::MIN as i64 {
        (i16::MIN, true)
    } else {
        (x as i16, false)
    }
}

fn saturate_i32(x: i64) -> (i32, bool) {
    if x > i32::MAX as i64 {
        (i32::MAX, true)
    } else if x < i32::MIN as i64 {
        (i32::MIN, true)
    } else {
        (x as i32, false)
    }
}

/// Wraps an angle into [−π, π).
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta - 2.0 * PI * ((theta + PI) / (2.0 * PI)).floor();
    // floor can land one period off when theta + π rounds onto a multiple of 2π
    if w >= PI {
        w - 2.0 * PI
    } else if w < -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Smallest signed difference `a − b` on the circle, in (−π, π].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d == -PI {
        PI
    } else {
        d
    }
}

/// A phase sample in Q1.15; every raw code is valid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct PhaseQ15(pub i16);

impl PhaseQ15 {
    pub const ZERO: PhaseQ15 = PhaseQ15(0);
    /// The −π code, the one phase whose negation is itself.
    pub const MIN: PhaseQ15 = PhaseQ15(i16::MIN);

    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Encodes radians: wrap into [−π, π), scale by 1/π, round ties-to-even.
    pub fn from_radians(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::NonFinitePhase(theta));
        }
        let scaled = (wrap_angle(theta) / PI * Q15_ONE).round_ties_even();
        // wrap_angle(θ) close to +π can round up to +1.0, which is the −π code
        Ok(PhaseQ15((scaled as i64).rem_euclid(1 << 16) as u16 as i16))
    }

    pub fn to_radians(self) -> f64 {
        self.0 as f64 / Q15_ONE * PI
    }

    /// The raw code viewed as an unsigned full-turn angle (0 ↦ 0, 0x4000 ↦ π/2).
    pub const fn turn(self) -> u16 {
        self.0 as u16
    }

    pub const fn wrapping_add(self, delta: i16) -> Self {
        PhaseQ15(self.0.wrapping_add(delta))
    }

    pub const fn wrapping_neg(self) -> Self {
        PhaseQ15(self.0.wrapping_neg())
    }
}

impl fmt::Display for PhaseQ15 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0 as u16)
    }
}

/// Encodes a phase in radians as Q1.15.
pub fn encode_phase(theta: f64) -> Result<PhaseQ15> {
    PhaseQ15::from_radians(theta)
}

/// Decodes a Q1.15 phase to radians.
pub fn decode_phase(p: PhaseQ15) -> f64 {
    p.to_radians()
}

/// A Q1.15 fraction in [−1, 1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct Q15(pub i16);

impl Q15 {
    pub const ZERO: Q15 = Q15(0);
    pub const MAX: Q15 = Q15(i16::MAX);

    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Rounds ties-to-even and clamps to [−1, 1 − 2⁻¹⁵]; the flag reports a clamp.
    pub fn from_f64_saturating(x: f64) -> (Self, bool) {
        let (raw, clamped) = saturate_i16((x * Q15_ONE).round_ties_even() as i64);
        (Q15(raw), clamped)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Q15_ONE
    }
}

/// Q8.24 accumulator word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct AccQ824(pub i32);

impl AccQ824 {
    pub const ZERO: AccQ824 = AccQ824(0);
    pub const MAX: AccQ824 = AccQ824(i32::MAX);
    pub const MIN: AccQ824 = AccQ824(i32::MIN);
    /// One unit in the last place, 2⁻²⁴.
    pub const ULP: f64 = 1.0 / ACC_ONE;

    pub const fn raw(self) -> i32 {
        self.0
    }

    /// Exact widening of a Q1.15 value.
    pub const fn from_q15(x: Q15) -> Self {
        AccQ824((x.0 as i32) << (ACC_FRAC_BITS - Q15_FRAC_BITS))
    }

    pub fn from_f64_saturating(x: f64) -> (Self, bool) {
        let (raw, clamped) = saturate_i32((x * ACC_ONE).round_ties_even() as i64);
        (AccQ824(raw), clamped)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ACC_ONE
    }
}

/// Sticky saturation record: counts every clamp performed through it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Saturation {
    events: u64,
}

impl Saturation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn saturated(&self) -> bool {
        self.events > 0
    }

    pub fn merge(&mut self, other: Saturation) {
        self.events += other.events;
    }

    fn note(&mut self, clamped: bool) {
        if clamped {
            self.events += 1;
        }
    }

    /// Saturating Q8.24 addition.
    pub fn add(&mut self, a: AccQ824, b: AccQ824) -> AccQ824 {
        let (raw, clamped) = saturate_i32(a.0 as i64 + b.0 as i64);
        self.note(clamped);
        AccQ824(raw)
    }

    /// Saturating Q8.24 subtraction.
    pub fn sub(&mut self, a: AccQ824, b: AccQ824) -> AccQ824 {
        let (raw, clamped) = saturate_i32(a.0 as i64 - b.0 as i64);
        self.note(clamped);
        AccQ824(raw)
    }

    /// Q1.15 × Q8.24 → Q8.24, rounded ties-to-even, saturating.
    pub fn mul_acc(&mut self, a: Q15, b: AccQ824) -> AccQ824 {
        let wide = round_shift(a.0 as i64 * b.0 as i64, Q15_FRAC_BITS);
        let (raw, clamped) = saturate_i32(wide);
        self.note(clamped);
        AccQ824(raw)
    }

    /// Q8.24 × Q8.24 → Q8.24, rounded ties-to-even, saturating.
    pub fn mul(&mut self, a: AccQ824, b: AccQ824) -> AccQ824 {
        let wide = round_shift(a.0 as i64 * b.0 as i64, ACC_FRAC_BITS);
        let (raw, clamped) = saturate_i32(wide);
        self.note(clamped);
        AccQ824(raw)
    }

    /// Quantizes a real value into Q8.24, counting a clamp.
    pub fn quantize(&mut self, x: f64) -> AccQ824 {
        let (v, clamped) = AccQ824::from_f64_saturating(x);
        self.note(clamped);
        v
    }
}

/// Saturating Q8.24 addition. The returned flag is set when the sum clamped.
pub fn acc_add(a: AccQ824, b: AccQ824) -> (AccQ824, bool) {
    let mut sat = Saturation::new();
    let sum = sat.add(a, b);
    (sum, sat.saturated())
}

/// Exact 16×16 product (Q2.30) renormalized to Q8.24. Cannot overflow.
pub fn mul_q15(a: Q15, b: Q15) -> AccQ824 {
    let product = a.0 as i64 * b.0 as i64;
    AccQ824(round_shift(product, 2 * Q15_FRAC_BITS - ACC_FRAC_BITS) as i32)
}
