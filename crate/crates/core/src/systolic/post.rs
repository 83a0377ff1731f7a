use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::fixedpoint::{round_shift, AccQ824, Saturation};
use crate::map::PhaseMap;
use crate::sampler::NoiseStream;

/// round(2³²/π): converts radians to phase units.
pub(crate) const INV_PI_Q32: i64 = 1_367_130_551;

/// Q8.24 radians → Q1.15 phase increment (mod 2π).
pub(crate) fn radians_to_phase_delta(rad: AccQ824) -> i16 {
    // Q8.24 · Q0.32 = Q?.56; phase units keep 15 fraction bits
    round_shift(rad.raw() as i64 * INV_PI_Q32, 56 - 15) as i16
}

/// Inputs of the theta-update stage for one sampling step.
#[derive(Clone, Copy, Debug)]
pub struct PostArrayInputs<'a> {
    pub phases: &'a PhaseMap,
    /// Deterministic drift `(K/M²)·ũ + ref` from the array.
    pub drift: &'a DriftField<AccQ824>,
    /// Externally computed score term, rad per unit time; absent means zero.
    pub score: Option<&'a DriftField<f64>>,
    /// Diffusion coefficient D(t).
    pub diffusion: f64,
    pub dt: f64,
}

/// `θ' = wrap(θ + (u + score)·dt + √(2·D·dt)·ξ)` in the datapath formats:
/// drift, score, dt and the noise increment in Q8.24, the result in Q1.15.
/// One normal variate is drawn per pixel in raster order, even when D = 0.
pub fn post_array_update(
    inputs: PostArrayInputs<'_>,
    noise: &mut NoiseStream,
    sat: &mut Saturation,
) -> Result<PhaseMap> {
    let PostArrayInputs {
        phases,
        drift,
        score,
        diffusion,
        dt,
    } = inputs;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {dt}")));
    }
    if !(diffusion.is_finite() && diffusion >= 0.0) {
        return Err(Error::param(format!("D must be ≥ 0, got {diffusion}")));
    }
    let dims = (phases.width(), phases.height());
    if (drift.width(), drift.height()) != dims {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} drift", dims.0, dims.1),
            actual: format!("{}x{}", drift.width(), drift.height()),
        });
    }
    if let Some(s) = score {
        if (s.width(), s.height()) != dims {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} score", dims.0, dims.1),
                actual: format!("{}x{}", s.width(), s.height()),
            });
        }
    }

    let dt_q = sat.quantize(dt);
    let sigma = (2.0 * diffusion * dt).sqrt();
    let mut out = phases.clone();
    for (i, theta) in out.data_mut().iter_mut().enumerate() {
        let xi = noise.next_normal();
        let score_q = score.map_or(AccQ824::ZERO, |s| sat.quantize(s.data()[i]));
        let rate = sat.add(drift.data()[i], score_q);
        let step = sat.mul(rate, dt_q);
        let kick = sat.quantize(sigma * xi);
        let incr = sat.add(step, kick);
        *theta = theta.wrapping_add(radians_to_phase_delta(incr));
    }
    Ok(out)
}
