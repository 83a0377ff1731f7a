//! Euler–Maruyama orientation diffusion over phase maps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drift::{
    drift_fixed, drift_reformulated, validate_m, BoundaryPolicy, DriftField, DriftParams,
    QuantizedParams,
};
use crate::error::{Error, Result};
use crate::fixedpoint::{encode_phase, PhaseQ15, Saturation};
use crate::map::PhaseMap;
use crate::systolic::{post_array_update, run_image, ArrayConfig, PostArrayInputs};
use crate::trig::QuarterWaveLut;

/// Seeded standard-normal stream (ChaCha8 uniforms, polar Box–Muller).
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
    draws: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of normals handed out so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on [−1, 1) with 53 random bits.
    fn symmetric_uniform(&mut self) -> f64 {
        let k = self.rng.next_u64() >> 11;
        k as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
    }

    pub fn next_normal(&mut self) -> f64 {
        self.draws += 1;
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = self.symmetric_uniform();
            let v = self.symmetric_uniform();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// Piecewise-linear function of normalized time, held constant outside its knots.
#[derive(Clone, Debug, PartialEq)]
pub struct Ramp {
    knots: Vec<(f64, f64)>,
}

impl Ramp {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::param("schedule table is empty"));
        }
        for &(t, v) in &knots {
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::param(format!("non-finite schedule knot ({t}, {v})")));
            }
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::param(
                "schedule knots must be strictly increasing in t",
            ));
        }
        Ok(Self { knots })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            knots: vec![(0.0, v)],
        }
    }

    /// `a` at t = 0 to `b` at t = 1.
    pub fn linear(a: f64, b: f64) -> Self {
        Self {
            knots: vec![(0.0, a), (1.0, b)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        let last = k[k.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let i = k.partition_point(|&(kt, _)| kt <= t);
        let (t0, v0) = k[i - 1];
        let (t1, v1) = k[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn min_value(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for Ramp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, v)) in self.knots.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}:{v}")?;
        }
        Ok(())
    }
}

impl FromStr for Ramp {
    type Err = Error;

    /// `0.5` (constant) or `t:v, t:v, ...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if !s.contains(':') {
            let v = parse_f64(s)?;
            return Ramp::new(vec![(0.0, v)]);
        }
        let knots = s
            .split(',')
            .map(|kv| {
                let (t, v) = kv
                    .split_once(':')
                    .ok_or_else(|| Error::param(format!("bad schedule knot `{kv}`")))?;
                Ok((parse_f64(t)?, parse_f64(v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ramp::new(knots)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::param(format!("not a number: `{}`", s.trim())))
}

/// Time-dependent coefficients of the diffusion.
///
/// The defaults are placeholder ramps, not fitted schedules.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub k: Ramp,
    pub k_ref: Ramp,
    pub diffusion: Ramp,
    pub psi_ref: f64,
    pub m: usize,
    pub dt: f64,
    pub steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            k: Ramp::linear(1.0, 0.0),
            k_ref: Ramp::linear(0.0, 1.0),
            diffusion: Ramp::constant(0.1),
            psi_ref: 0.0,
            m: 5,
            dt: 0.01,
            steps: 100,
        }
    }
}

/// Coefficients of a single step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoefficients {
    pub t: f64,
    pub params: DriftParams,
    pub diffusion: f64,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            _ => Err(Error::param(format!("unknown direction `{s}`"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        })
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        validate_m(self.m)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param(format!("dt must be > 0, got {}", self.dt)));
        }
        if !self.psi_ref.is_finite() {
            return Err(Error::param("psi_ref must be finite"));
        }
        if self.diffusion.min_value() < 0.0 {
            return Err(Error::param("D(t) must be ≥ 0"));
        }
        if self.k.min_value() < 0.0 || self.k_ref.min_value() < 0.0 {
            return Err(Error::param("K(t) and K_ref(t) must be ≥ 0"));
        }
        Ok(())
    }

    /// Normalized time of step `k`: k/steps forward, 1 − k/steps in reverse.
    pub fn time(&self, step: usize, direction: Direction) -> f64 {
        let frac = if self.steps == 0 {
            0.0
        } else {
            step as f64 / self.steps as f64
        };
        match direction {
            Direction::Forward => frac,
            Direction::Reverse => 1.0 - frac,
        }
    }

    pub fn at(&self, t: f64) -> StepCoefficients {
        StepCoefficients {
            t,
            params: DriftParams {
                k: self.k.at(t),
                k_ref: self.k_ref.at(t),
                psi_ref: self.psi_ref,
                m: self.m,
            },
            diffusion: self.diffusion.at(t),
            dt: self.dt,
        }
    }

    /// Parses `key = value` lines (`#` starts a comment). Keys: `k`, `k_ref`,
    /// `d`, `psi_ref`, `m`, `dt`, `steps`; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Schedule::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::param(format!(
                    "schedule line {}: expected `key = value`",
                    lineno + 1
                ))
            })?;
            let value = value.trim();
            let at = |e: Error| Error::param(format!("schedule line {}: {e}", lineno + 1));
            match key.trim() {
                "k" => s.k = value.parse().map_err(at)?,
                "k_ref" => s.k_ref = value.parse().map_err(at)?,
                "d" | "diffusion" => s.diffusion = value.parse().map_err(at)?,
                "psi_ref" => s.psi_ref = parse_f64(value).map_err(at)?,
                "dt" => s.dt = parse_f64(value).map_err(at)?,
                "m" => {
                    s.m = value
                        .parse()
                        .map_err(|_| at(Error::param(format!("bad M `{value}`"))))?
                }
                "steps" => {
                    s.steps = value
                        .parse()
                        .map_err(|_| at(Error::param(format!("bad step count `{value}`"))))?
                }
                other => return Err(at(Error::param(format!("unknown key `{other}`")))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Inverse of [`Schedule::parse`].
    pub fn to_text(&self) -> String {
        format!(
            "k = {}\nk_ref = {}\nd = {}\npsi_ref = {}\nm = {}\ndt = {}\nsteps = {}\n",
            self.k, self.k_ref, self.diffusion, self.psi_ref, self.m, self.dt, self.steps
        )
    }
}

/// Which model evaluates the deterministic drift.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum DriftEngine {
    /// Double precision, quantized once per step.
    #[default]
    Oracle,
    /// Bit-exact fixed-point functional model.
    Fixed,
    /// Cycle-level array simulation.
    Systolic(ArrayConfig),
}

impl DriftEngine {
    pub fn name(&self) -> &'static str {
        match self {
            DriftEngine::Oracle => "oracle",
            DriftEngine::Fixed => "fixed",
            DriftEngine::Systolic(_) => "systolic",
        }
    }
}

/// Supplies the externally computed score term, rad per unit time.
pub trait ScoreHook {
    fn score(&mut self, map: &PhaseMap, t: f64) -> Result<DriftField<f64>>;
}

impl<F> ScoreHook for F
where
    F: FnMut(&PhaseMap, f64) -> Result<DriftField<f64>>,
{
    fn score(&mut self, map: &PhaseMap, t: f64) -> Result<DriftField<f64>> {
        self(map, t)
    }
}

fn integrate(
    map: &PhaseMap,
    at: &StepCoefficients,
    noise: &mut NoiseStream,
    engine: &DriftEngine,
    boundary: BoundaryPolicy,
    score: Option<&DriftField<f64>>,
) -> Result<PhaseMap> {
    if !(at.dt.is_finite() && at.dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {}", at.dt)));
    }
    if !(at.diffusion.is_finite() && at.diffusion >= 0.0) {
        return Err(Error::param(format!("D must be ≥ 0, got {}", at.diffusion)));
    }
    if let Some(s) = score {
        if (s.width(), s.height()) != (map.width(), map.height()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} score", map.width(), map.height()),
                actual: format!("{}x{}", s.width(), s.height()),
            });
        }
    }
    at.params.validate()?;
    let lut = QuarterWaveLut::shared();
    match engine {
        DriftEngine::Oracle => {
            let u = drift_reformulated(map, &at.params, boundary);
            let sigma = (2.0 * at.diffusion * at.dt).sqrt();
            let mut out = Vec::with_capacity(map.len());
            for (i, theta) in map.data().iter().enumerate() {
                let xi = noise.next_normal();
                let s = score.map_or(0.0, |f| f.data()[i]);
                out.push(encode_phase(
                    theta.to_radians() + (u.data()[i] + s) * at.dt + sigma * xi,
                )?);
            }
            PhaseMap::new(map.width(), map.height(), out)
        }
        DriftEngine::Fixed | DriftEngine::Systolic(_) => {
            let q = QuantizedParams::from_params(&at.params)?;
            let drift = match engine {
                DriftEngine::Systolic(config) => run_image(map, config, &q, boundary, lut)?.0.drift,
                _ => drift_fixed(map, &q, boundary, lut).drift,
            };
            let mut sat = Saturation::new();
            post_array_update(
                PostArrayInputs {
                    phases: map,
                    drift: &drift,
                    score,
                    diffusion: at.diffusion,
                    dt: at.dt,
                },
                noise,
                &mut sat,
            )
        }
    }
}

/// One Euler–Maruyama step `θ' = wrap(θ + u·dt + √(2·D·dt)·ξ)`.
pub fn forward_step(
    map: &PhaseMap,
    at: &StepCoefficients,
    noise: &mut NoiseStream,
    engine: &DriftEngine,
    boundary: BoundaryPolicy,
) -> Result<PhaseMap> {
    integrate(map, at, noise, engine, boundary, None)
}

/// Like [`forward_step`] with the score field added to the drift before
/// integration. A missing hook contributes zero.
pub fn reverse_step(
    map: &PhaseMap,
    at: &StepCoefficients,
    noise: &mut NoiseStream,
    engine: &DriftEngine,
    boundary: BoundaryPolicy,
    score_hook: Option<&mut (dyn ScoreHook + '_)>,
) -> Result<PhaseMap> {
    let score = match score_hook {
        Some(hook) => Some(hook.score(map, at.t)?),
        None => None,
    };
    integrate(map, at, noise, engine, boundary, score.as_ref())
}

/// Isotropic contraction baseline `θ' = wrap(θ − ½·β·θ·dt + √(2·D·dt)·ξ)`.
pub fn trivial_drift_step(
    map: &PhaseMap,
    beta: f64,
    diffusion: f64,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<PhaseMap> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {dt}")));
    }
    if !(diffusion.is_finite() && diffusion >= 0.0) || !beta.is_finite() {
        return Err(Error::param("β must be finite and D ≥ 0"));
    }
    let sigma = (2.0 * diffusion * dt).sqrt();
    let mut out = Vec::with_capacity(map.len());
    for theta in map.data() {
        let th = theta.to_radians();
        let xi = noise.next_normal();
        out.push(encode_phase(th - 0.5 * beta * th * dt + sigma * xi)?);
    }
    PhaseMap::new(map.width(), map.height(), out)
}

/// Mean local order parameter `|Σ_j e^{iθ_j}| / M²` over an M×M window
/// (center included, edges replicated).
pub fn local_coherence(map: &PhaseMap, m: usize) -> Result<f64> {
    validate_m(m)?;
    let (w, h) = (map.width(), map.height());
    let phasors: Vec<(f64, f64)> = map
        .data()
        .iter()
        .map(|p| p.to_radians().sin_cos())
        .collect();
    let half = (m / 2) as isize;
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut s, mut c) = (0.0, 0.0);
            for dy in -half..=half {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -half..=half {
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let (ps, pc) = phasors[yy * w + xx];
                    s += ps;
                    c += pc;
                }
            }
            total += s.hypot(c) / (m * m) as f64;
        }
    }
    Ok(total / map.len() as f64)
}

/// Which drift a trajectory integrates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriftKind {
    Kuramoto(DriftEngine),
    /// Contraction baseline; `beta = None` uses β(t) = 2·D(t).
    Trivial {
        beta: Option<f64>,
    },
}

/// One row of a coherence curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherencePoint {
    pub step: usize,
    pub t: f64,
    pub coherence: f64,
}

#[derive(Debug)]
pub struct Trajectory {
    pub final_map: PhaseMap,
    /// Coherence before step 0 and after each step; `steps + 1` rows.
    pub coherence: Vec<CoherencePoint>,
}

/// Runs `schedule.steps` steps from `initial`. `on_snapshot` sees the map
/// before the first step and after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    initial: &PhaseMap,
    schedule: &Schedule,
    kind: DriftKind,
    direction: Direction,
    boundary: BoundaryPolicy,
    seed: u64,
    mut score_hook: Option<&mut dyn ScoreHook>,
    mut on_snapshot: impl FnMut(usize, &PhaseMap) -> Result<()>,
) -> Result<Trajectory> {
    schedule.validate()?;
    if let DriftKind::Kuramoto(DriftEngine::Systolic(config)) = kind {
        config.validate()?;
        if config.m != schedule.m {
            return Err(Error::param(format!(
                "systolic engine built for M = {} but the schedule uses M = {}",
                config.m, schedule.m
            )));
        }
    }
    let mut noise = NoiseStream::new(seed);
    let mut map = initial.clone();
    let mut coherence = Vec::with_capacity(schedule.steps + 1);
    let t_of = |k: usize| schedule.time(k, direction);
    coherence.push(CoherencePoint {
        step: 0,
        t: t_of(0),
        coherence: local_coherence(&map, schedule.m)?,
    });
    on_snapshot(0, &map)?;
    for k in 0..schedule.steps {
        let at = schedule.at(t_of(k));
        map = match kind {
            DriftKind::Kuramoto(engine) => match direction {
                Direction::Forward => forward_step(&map, &at, &mut noise, &engine, boundary)?,
                Direction::Reverse => reverse_step(
                    &map,
                    &at,
                    &mut noise,
                    &engine,
                    boundary,
                    score_hook.as_deref_mut(),
                )?,
            },
            DriftKind::Trivial { beta } => {
                let beta = beta.unwrap_or(2.0 * at.diffusion);
                trivial_drift_step(&map, beta, at.diffusion, at.dt, &mut noise)?
            }
        };
        coherence.push(CoherencePoint {
            step: k + 1,
            t: t_of(k + 1),
            coherence: local_coherence(&map, schedule.m)?,
        });
        on_snapshot(k + 1, &map)?;
    }
    Ok(Trajectory {
        final_map: map,
        coherence,
    })
}

/// `step,t,coherence`
pub fn write_coherence_csv<W: Write>(points: &[CoherencePoint], mut w: W) -> Result<()> {
    writeln!(w, "step,t,coherence")?;
    for p in points {
        writeln!(w, "{},{},{:.12}", p.step, p.t, p.coherence)?;
    }
    Ok(())
}

/// Vertical binary stripes of width `period / 2` at phases ±`amplitude`.
pub fn stripes(width: usize, height: usize, period: usize, amplitude: f64) -> Result<PhaseMap> {
    if period < 2 {
        return Err(Error::param(format!(
            "stripe period must be ≥ 2, got {period}"
        )));
    }
    let hi = encode_phase(amplitude)?;
    let lo = encode_phase(-amplitude)?;
    PhaseMap::from_fn(width, height, |x, _| {
        if (2 * x / period).is_multiple_of(2) {
            hi
        } else {
            lo
        }
    })
}

/// I.i.d. uniform phase codes.
pub fn random_map(width: usize, height: usize, seed: u64) -> Result<PhaseMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PhaseMap::from_fn(width, height, |_, _| PhaseQ15(rng.next_u32() as u16 as i16))
}
