//! Reference kernels for the locally-coupled Kuramoto drift
//!
//! ```text
//! u_i = K/M² · Σ_{j∈N_i} sin(θ_j − θ_i) + K_ref · sin(ψ_ref − θ_i)
//! ```
//!
//! evaluated three ways: the direct pairwise sum, the separated form
//! `K/M² · (cos θ_i·S_i − sin θ_i·C_i) + K_ref·(sin ψ cos θ_i − cos ψ sin θ_i)`
//! in `f64`, and a bit-exact fixed-point model of the array datapath. The
//! fixed-point model is the functional oracle for the systolic simulator.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fixedpoint::{mul_q15, AccQ824, PhaseQ15, Saturation, Q15};
use crate::map::{split_header, PhaseMap};
use crate::trig::QuarterWaveLut;

pub const KDF1_MAGIC: &[u8; 4] = b"KDF1";

/// Where out-of-image neighbours come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BoundaryPolicy {
    /// Clamp to the nearest in-image pixel.
    #[default]
    Replicate,
    /// Mirror about the edge pixel without repeating it.
    Reflect,
    /// Periodic.
    Wrap,
    /// Out-of-image neighbours have phase 0 (sin 0, cos 1).
    ZeroPhase,
}

impl BoundaryPolicy {
    pub const ALL: [BoundaryPolicy; 4] = [
        BoundaryPolicy::Replicate,
        BoundaryPolicy::Reflect,
        BoundaryPolicy::Wrap,
        BoundaryPolicy::ZeroPhase,
    ];

    fn index(self, i: isize, n: usize) -> Option<usize> {
        let n_i = n as isize;
        if (0..n_i).contains(&i) {
            return Some(i as usize);
        }
        match self {
            BoundaryPolicy::Replicate => Some(i.clamp(0, n_i - 1) as usize),
            BoundaryPolicy::Reflect => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * (n_i - 1);
                let m = i.rem_euclid(period);
                Some(if m >= n_i { period - m } else { m } as usize)
            }
            BoundaryPolicy::Wrap => Some(i.rem_euclid(n_i) as usize),
            BoundaryPolicy::ZeroPhase => None,
        }
    }

    /// Phase at a possibly out-of-image coordinate.
    pub fn sample(self, map: &PhaseMap, x: isize, y: isize) -> PhaseQ15 {
        match (self.index(x, map.width()), self.index(y, map.height())) {
            (Some(xi), Some(yi)) => map.get(xi, yi),
            _ => PhaseQ15::ZERO,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryPolicy::Replicate => "replicate",
            BoundaryPolicy::Reflect => "reflect",
            BoundaryPolicy::Wrap => "wrap",
            BoundaryPolicy::ZeroPhase => "zero",
        }
    }
}

impl fmt::Display for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" => Ok(BoundaryPolicy::Replicate),
            "reflect" => Ok(BoundaryPolicy::Reflect),
            "wrap" => Ok(BoundaryPolicy::Wrap),
            "zero" | "zero-phase" => Ok(BoundaryPolicy::ZeroPhase),
            other => Err(Error::param(format!("unknown boundary policy `{other}`"))),
        }
    }
}

/// Scalars of one drift evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftParams {
    /// Local coupling strength K.
    pub k: f64,
    /// Reference gain K_ref.
    pub k_ref: f64,
    /// Reference phase ψ_ref in radians.
    pub psi_ref: f64,
    /// Odd neighbourhood side length.
    pub m: usize,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            k_ref: 0.0,
            psi_ref: 0.0,
            m: 5,
        }
    }
}

impl DriftParams {
    pub fn new(k: f64, k_ref: f64, psi_ref: f64) -> Self {
        Self {
            k,
            k_ref,
            psi_ref,
            m: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_m(self.m)?;
        if !self.k.is_finite() || self.k < 0.0 {
            return Err(Error::param(format!(
                "K must be finite and ≥ 0, got {}",
                self.k
            )));
        }
        if !self.k_ref.is_finite() || self.k_ref < 0.0 {
            return Err(Error::param(format!(
                "K_ref must be finite and ≥ 0, got {}",
                self.k_ref
            )));
        }
        if !self.psi_ref.is_finite() {
            return Err(Error::param("psi_ref must be finite"));
        }
        Ok(())
    }

    /// |N_i| = M², center included.
    pub fn neighborhood_count(&self) -> usize {
        self.m * self.m
    }

    pub fn half(&self) -> isize {
        (self.m / 2) as isize
    }
}

pub(crate) fn validate_m(m: usize) -> Result<()> {
    if m < 3 || m.is_multiple_of(2) {
        return Err(Error::param(format!(
            "neighbourhood side M must be odd and ≥ 3, got {m}"
        )));
    }
    Ok(())
}

/// Per-step configuration registers of the post-array datapath, in Q1.15.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantizedParams {
    /// K/M² (the division by M² is folded into the scale).
    pub k_scale: Q15,
    /// K_ref·sin ψ_ref.
    pub ref_sin: Q15,
    /// K_ref·cos ψ_ref.
    pub ref_cos: Q15,
    pub m: usize,
}

impl QuantizedParams {
    /// Quantizes the step scalars. K/M² must be below 1, and both reference
    /// coefficients must lie in [−1, 1]; an exact ±1 saturates to the nearest code.
    pub fn from_params(p: &DriftParams) -> Result<Self> {
        p.validate()?;
        let scale = p.k / p.neighborhood_count() as f64;
        if scale >= 1.0 {
            return Err(Error::param(format!(
                "K/M² = {scale} does not fit Q1.15 (K must be < {})",
                p.neighborhood_count()
            )));
        }
        let (ps, pc) = p.psi_ref.sin_cos();
        let (rs, rc) = (p.k_ref * ps, p.k_ref * pc);
        if rs.abs() > 1.0 || rc.abs() > 1.0 {
            return Err(Error::param(format!(
                "K_ref·sin ψ / K_ref·cos ψ = ({rs}, {rc}) exceed the Q1.15 range"
            )));
        }
        Ok(Self {
            k_scale: Q15::from_f64_saturating(scale).0,
            ref_sin: Q15::from_f64_saturating(rs).0,
            ref_cos: Q15::from_f64_saturating(rc).0,
            m: p.m,
        })
    }
}

/// A per-pixel drift value grid matching its source map.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftField<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> DriftField<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }
}

impl DriftField<f64> {
    /// Quantizes to Q8.24 for the binary export.
    pub fn to_fixed(&self) -> DriftField<AccQ824> {
        let data = self
            .data
            .iter()
            .map(|&v| AccQ824::from_f64_saturating(v).0)
            .collect();
        DriftField::from_parts(self.width, self.height, data)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,value")?;
        for y in 0..self.height {
            for x in 0..self.width {
                writeln!(w, "{x},{y},{:e}", self.get(x, y))?;
            }
        }
        Ok(())
    }
}

impl DriftField<AccQ824> {
    pub fn to_f64(&self) -> DriftField<f64> {
        DriftField::from_parts(
            self.width,
            self.height,
            self.data.iter().map(|v| v.to_f64()).collect(),
        )
    }

    /// KDF1: the KPM1 header layout with magic `KDF1` and i32 LE Q8.24 payload.
    pub fn to_kdf1_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 4 * self.data.len());
        buf.extend_from_slice(KDF1_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.raw().to_le_bytes());
        }
        buf
    }

    pub fn from_kdf1_bytes(bytes: &[u8]) -> Result<Self> {
        let (width, height, payload) = split_header(bytes, KDF1_MAGIC, "KDF1")?;
        if payload.len() != width * height * 4 {
            return Err(Error::format(
                "KDF1",
                format!(
                    "payload is {} bytes, expected {}",
                    payload.len(),
                    width * height * 4
                ),
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| AccQ824(i32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Ok(Self::from_parts(width, height, data))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.to_f64().write_csv(w)
    }
}

fn sum_over_neighbors(
    map: &PhaseMap,
    x: usize,
    y: usize,
    m: usize,
    boundary: BoundaryPolicy,
    include_center: bool,
    mut f: impl FnMut(PhaseQ15),
) {
    let h = (m / 2) as isize;
    for dy in -h..=h {
        for dx in -h..=h {
            if !include_center && dx == 0 && dy == 0 {
                continue;
            }
            f(boundary.sample(map, x as isize + dx, y as isize + dy));
        }
    }
}

/// Direct pairwise evaluation in `f64`; the j = i term is included and is zero.
pub fn drift_direct(
    map: &PhaseMap,
    params: &DriftParams,
    boundary: BoundaryPolicy,
) -> DriftField<f64> {
    let scale = params.k / params.neighborhood_count() as f64;
    let mut out = Vec::with_capacity(map.len());
    for y in 0..map.height() {
        for x in 0..map.width() {
            let ti = map.get(x, y).to_radians();
            let mut pair = 0.0;
            sum_over_neighbors(map, x, y, params.m, boundary, true, |p| {
                pair += (p.to_radians() - ti).sin();
            });
            out.push(scale * pair + params.k_ref * (params.psi_ref - ti).sin());
        }
    }
    DriftField::from_parts(map.width(), map.height(), out)
}

/// `(S_i, C_i)`: sums of sin θ_j and cos θ_j over the neighbourhood, center excluded.
pub fn neighbor_sums(
    map: &PhaseMap,
    x: usize,
    y: usize,
    m: usize,
    boundary: BoundaryPolicy,
) -> Result<(f64, f64)> {
    if x >= map.width() || y >= map.height() {
        return Err(Error::IndexOutOfRange {
            x,
            y,
            width: map.width(),
            height: map.height(),
        });
    }
    validate_m(m)?;
    let (mut s, mut c) = (0.0, 0.0);
    sum_over_neighbors(map, x, y, m, boundary, false, |p| {
        let (sj, cj) = p.to_radians().sin_cos();
        s += sj;
        c += cj;
    });
    Ok((s, c))
}

/// Unscaled neighbourhood core `cos θ_i·S − sin θ_i·C`.
pub fn nbr_core(s: f64, c: f64, sin_i: f64, cos_i: f64) -> f64 {
    cos_i * s - sin_i * c
}

/// `K_ref·(sin ψ·cos θ_i − cos ψ·sin θ_i)`.
pub fn ref_term(sin_i: f64, cos_i: f64, k_ref: f64, psi_ref: f64) -> f64 {
    let (ps, pc) = psi_ref.sin_cos();
    (k_ref * ps) * cos_i - (k_ref * pc) * sin_i
}

/// Separated evaluation in `f64`.
pub fn drift_reformulated(
    map: &PhaseMap,
    params: &DriftParams,
    boundary: BoundaryPolicy,
) -> DriftField<f64> {
    let scale = params.k / params.neighborhood_count() as f64;
    let mut out = Vec::with_capacity(map.len());
    for y in 0..map.height() {
        for x in 0..map.width() {
            let (s, c) =
                neighbor_sums(map, x, y, params.m, boundary).expect("coordinates are in range");
            let (sin_i, cos_i) = map.get(x, y).to_radians().sin_cos();
            out.push(
                scale * nbr_core(s, c, sin_i, cos_i)
                    + ref_term(sin_i, cos_i, params.k_ref, params.psi_ref),
            );
        }
    }
    DriftField::from_parts(map.width(), map.height(), out)
}

/// The PE multiply–subtract: `ũ = CCB·S − SCB·C`.
pub fn combine_core(
    sat: &mut Saturation,
    acc_s: AccQ824,
    acc_c: AccQ824,
    center_sin: Q15,
    center_cos: Q15,
) -> AccQ824 {
    let a = sat.mul_acc(center_cos, acc_s);
    let b = sat.mul_acc(center_sin, acc_c);
    sat.sub(a, b)
}

/// Reference term from the captured center components and the
/// per-step coefficient registers.
pub fn ref_term_fixed(
    sat: &mut Saturation,
    q: &QuantizedParams,
    sin_i: Q15,
    cos_i: Q15,
) -> AccQ824 {
    sat.sub(mul_q15(q.ref_sin, cos_i), mul_q15(q.ref_cos, sin_i))
}

/// Deterministic drift `u = (K/M²)·ũ + ref` as produced after the array.
pub fn scale_and_add_ref(
    sat: &mut Saturation,
    q: &QuantizedParams,
    core: AccQ824,
    sin_i: Q15,
    cos_i: Q15,
) -> AccQ824 {
    let nbr = sat.mul_acc(q.k_scale, core);
    let r = ref_term_fixed(sat, q, sin_i, cos_i);
    sat.add(nbr, r)
}

/// Output of the fixed-point functional model.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedDrift {
    /// Unscaled neighbourhood cores ũ.
    pub core: DriftField<AccQ824>,
    /// Full deterministic drift u.
    pub drift: DriftField<AccQ824>,
    /// Captured (sin θ_i, cos θ_i) per pixel.
    pub centers: Vec<(Q15, Q15)>,
    pub saturation: Saturation,
}

/// Bit-exact fixed-point drift.
pub fn drift_fixed(
    map: &PhaseMap,
    q: &QuantizedParams,
    boundary: BoundaryPolicy,
    lut: &QuarterWaveLut,
) -> FixedDrift {
    let mut sat = Saturation::new();
    let mut core = Vec::with_capacity(map.len());
    let mut drift = Vec::with_capacity(map.len());
    let mut centers = Vec::with_capacity(map.len());
    for y in 0..map.height() {
        for x in 0..map.width() {
            let (mut acc_s, mut acc_c) = (AccQ824::ZERO, AccQ824::ZERO);
            sum_over_neighbors(map, x, y, q.m, boundary, false, |p| {
                let (s, c) = lut.sincos(p);
                acc_s = sat.add(acc_s, AccQ824::from_q15(s));
                acc_c = sat.add(acc_c, AccQ824::from_q15(c));
            });
            let (sin_i, cos_i) = lut.sincos(map.get(x, y));
            let u_core = combine_core(&mut sat, acc_s, acc_c, sin_i, cos_i);
            core.push(u_core);
            drift.push(scale_and_add_ref(&mut sat, q, u_core, sin_i, cos_i));
            centers.push((sin_i, cos_i));
        }
    }
    let (w, h) = (map.width(), map.height());
    FixedDrift {
        core: DriftField::from_parts(w, h, core),
        drift: DriftField::from_parts(w, h, drift),
        centers,
        saturation: sat,
    }
}
