//! Quarter-wave sine table with 2-bit linear interpolation.
//!
//! A Q1.15 phase is read as an unsigned full-turn angle `u = raw mod 2¹⁶`.
//! Bits 15..14 pick the quadrant, bits 13..2 index the table and bits 1..0
//! interpolate between neighbouring samples. Cosine is the sine of the
//! complementary quarter-turn offset, looked up in the same table.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::fixedpoint::{round_shift, PhaseQ15, Q15};

/// Stored samples over [0, π/2), not counting the endpoint.
pub const LUT_SAMPLES: usize = 4096;

const QUARTER: u32 = 1 << 14;

/// Quarter-wave sine table: `LUT_SAMPLES + 1` unsigned Q0.16 entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuarterWaveLut {
    samples: Box<[u16; LUT_SAMPLES + 1]>,
}

impl QuarterWaveLut {
    /// `samples[k] = round(sin(k·π/8192)·2¹⁶)`, clamped to `u16::MAX`.
    pub fn build() -> Self {
        let mut samples = Box::new([0u16; LUT_SAMPLES + 1]);
        for (k, s) in samples.iter_mut().enumerate() {
            let v = (k as f64 * FRAC_PI_2 / LUT_SAMPLES as f64).sin() * 65536.0;
            *s = v.round_ties_even().min(u16::MAX as f64) as u16;
        }
        Self { samples }
    }

    /// Process-wide shared table.
    pub fn shared() -> &'static QuarterWaveLut {
        static LUT: OnceLock<QuarterWaveLut> = OnceLock::new();
        LUT.get_or_init(QuarterWaveLut::build)
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples[..]
    }

    /// Largest difference between adjacent stored samples.
    pub fn max_step(&self) -> u16 {
        self.samples
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    /// sin of a quarter-turn offset `a ∈ [0, 2¹⁴]` as unsigned Q0.16.
    fn quarter_sine(&self, a: u32) -> u32 {
        debug_assert!(a <= QUARTER);
        let k = (a >> 2) as usize;
        let f = a & 3;
        let lo = self.samples[k] as u32;
        if f == 0 {
            // same value as the blend formula with f = 0, and k may be the endpoint
            return lo;
        }
        let hi = self.samples[k + 1] as u32;
        (lo * (4 - f) + hi * f + 2) >> 2
    }

    /// Magnitude in Q1.15, held at 0x7FFF so that exact 1.0 saturates.
    fn magnitude(&self, a: u32) -> i16 {
        round_shift(self.quarter_sine(a) as i64, 1).min(i16::MAX as i64) as i16
    }

    /// Sine and cosine of a Q1.15 phase, both in Q1.15.
    pub fn sincos(&self, p: PhaseQ15) -> (Q15, Q15) {
        let u = p.turn() as u32;
        let a = u & (QUARTER - 1);
        let along = self.magnitude(a);
        let across = self.magnitude(QUARTER - a);
        let (sin, cos) = match u >> 14 {
            0 => (along, across),
            1 => (across, -along),
            2 => (-along, -across),
            _ => (-across, along),
        };
        (Q15(sin), Q15(cos))
    }

    /// Writes `index,value` rows for every stored sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,value")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(w, "{k},{s}")?;
        }
        Ok(())
    }
}

impl Default for QuarterWaveLut {
    fn default() -> Self {
        Self::build()
    }
}

pub fn build_lut() -> QuarterWaveLut {
    QuarterWaveLut::build()
}

pub fn sincos_q15(p: PhaseQ15, lut: &QuarterWaveLut) -> (Q15, Q15) {
    lut.sincos(p)
}

/// Library-precision sine and cosine; reference path only.
pub fn sincos_exact(theta: f64) -> Result<(f64, f64)> {
    if !theta.is_finite() {
        return Err(Error::NonFinitePhase(theta));
    }
    Ok(theta.sin_cos())
}

/// Maximum absolute error (normalized units) of the table path against
/// `f64` sine/cosine over all 65536 codes.
pub fn sweep_max_error(lut: &QuarterWaveLut) -> f64 {
    let mut worst = 0.0f64;
    for raw in i16::MIN..=i16::MAX {
        let p = PhaseQ15(raw);
        let (s, c) = lut.sincos(p);
        let (es, ec) = p.to_radians().sin_cos();
        worst = worst
            .max((s.to_f64() - es).abs())
            .max((c.to_f64() - ec).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_endpoints() {
        let lut = build_lut();
        assert_eq!(lut.samples()[0], 0);
        assert_eq!(lut.samples()[LUT_SAMPLES], u16::MAX);
        // round(sin(π/4)·65536) = round(46340.95) = 46341
        assert_eq!(lut.samples()[2048], 46341);
        assert!(lut.samples().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cardinal_phases() {
        let lut = build_lut();
        assert_eq!(lut.sincos(PhaseQ15(0)), (Q15(0), Q15(0x7FFF)));
        assert_eq!(lut.sincos(PhaseQ15(0x4000)), (Q15(0x7FFF), Q15(0)));
        assert_eq!(lut.sincos(PhaseQ15::MIN), (Q15(0), Q15(-0x7FFF)));
        assert_eq!(lut.sincos(PhaseQ15(-0x4000)), (Q15(-0x7FFF), Q15(0)));
    }

    #[test]
    fn exact_reference() {
        assert_eq!(sincos_exact(0.0).unwrap(), (0.0, 1.0));
        let (s, c) = sincos_exact(std::f64::consts::PI).unwrap();
        assert!(s.abs() < 1e-15 && (c + 1.0).abs() < 1e-15);
        assert!(sincos_exact(f64::NAN).is_err());
    }

    #[test]
    fn sweep_within_bound() {
        let err = sweep_max_error(&build_lut());
        assert!(err <= 1.0 / 4096.0, "max error {err}");
    }

    #[test]
    fn odd_even_symmetry() {
        let lut = build_lut();
        for raw in i16::MIN + 1..=i16::MAX {
            let (s, c) = lut.sincos(PhaseQ15(raw));
            let (sn, cn) = lut.sincos(PhaseQ15(-raw));
            assert_eq!(sn.raw(), -s.raw(), "sin raw {raw}");
            assert_eq!(cn, c, "cos raw {raw}");
        }
    }

    #[test]
    fn pythagorean_residual() {
        let lut = build_lut();
        for raw in i16::MIN..=i16::MAX {
            let (s, c) = lut.sincos(PhaseQ15(raw));
            let r = s.to_f64().powi(2) + c.to_f64().powi(2) - 1.0;
            assert!(r.abs() <= 1.0 / 1024.0, "raw {raw}: {r}");
        }
    }

    #[test]
    fn adjacent_codes_are_continuous() {
        let lut = build_lut();
        // max table step is in Q0.16, outputs are Q1.15
        let limit = 2 + (lut.max_step() as i32 + 1) / 2;
        let mut prev = lut.sincos(PhaseQ15::MIN).0.raw() as i32;
        for raw in i16::MIN + 1..=i16::MAX {
            let s = lut.sincos(PhaseQ15(raw)).0.raw() as i32;
            assert!((s - prev).abs() <= limit, "raw {raw}");
            prev = s;
        }
    }

    #[test]
    fn csv_dump() {
        let mut out = Vec::new();
        build_lut().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), LUT_SAMPLES + 2);
        assert!(text.ends_with("4096,65535\n"));
    }
}
