//! End-to-end verification suite behind `sakura selftest`.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drift::{
    drift_direct, drift_fixed, drift_reformulated, BoundaryPolicy, DriftParams, QuantizedParams,
};
use crate::dse::{
    baseline_ratios, cycles_per_tile, energy_px, fit_model, optimal_width, standard_grid,
    synthesize, system_epx, Bilinear, ModelCoefficients, SYNTHETIC_COEFFICIENTS,
};
use crate::fixedpoint::PhaseQ15;
use crate::map::PhaseMap;
use crate::sampler::{
    random_map, run_trajectory, stripes, Direction, DriftEngine, DriftKind, Schedule,
};
use crate::systolic::{plan_tiles, run_image, ArrayConfig};
use crate::trig::{sweep_max_error, QuarterWaveLut};

/// Deliberate defects used to prove the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Predict `N_w + M² + 2` cycles per tile.
    TileCycleOffByOne,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SelftestOptions {
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn(&SelftestOptions) -> (bool, String);

const CHECKS: [(u8, &str, Check); 9] = [
    (1, "reformulation identity", check_reformulation),
    (2, "cycle exactness", check_cycles),
    (3, "engine bit-exactness", check_bit_exact),
    (4, "LUT fidelity", check_lut),
    (5, "model fit quality", check_fit),
    (6, "optimal width", check_optimal_width),
    (7, "baseline ratios", check_ratios),
    (8, "structure preservation", check_structure),
    (9, "E_px monotone/convex", check_epx_shape),
];

pub fn run_selftest(options: &SelftestOptions) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(id, name, check)| {
            let start = Instant::now();
            let (passed, detail) = check(options);
            CheckResult {
                id,
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn check_reformulation(_: &SelftestOptions) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (w, h) = match i {
            0 => (1, 1),
            99 => (96, 96),
            _ => (rng.gen_range(1..=96), rng.gen_range(1..=96)),
        };
        let map = PhaseMap::from_fn(w, h, |_, _| PhaseQ15(rng.gen())).expect("non-empty");
        let params = DriftParams::new(
            rng.gen_range(0.0..4.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(-3.0..3.0),
        );
        let boundary = BoundaryPolicy::ALL[i % 4];
        let a = drift_direct(&map, &params, boundary);
        let b = drift_reformulated(&map, &params, boundary);
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).abs());
        }
    }
    (
        worst <= 1e-12,
        format!("max |direct − separated| = {worst:.2e} over 100 maps"),
    )
}

fn predicted_tile_cycles(nw: usize, m: usize, options: &SelftestOptions) -> u64 {
    let c = cycles_per_tile(nw, m).expect("valid M");
    match options.fault {
        Some(Fault::TileCycleOffByOne) => c + 1,
        None => c,
    }
}

fn check_cycles(options: &SelftestOptions) -> (bool, String) {
    let lut = QuarterWaveLut::shared();
    let map = random_map(96, 96, 0x5eed_0002).expect("non-empty");
    let q = QuantizedParams::from_params(&DriftParams::default()).expect("default params");
    let mut failing = Vec::new();
    let mut h20w5 = 0;
    for (nh, nw) in standard_grid() {
        let config = ArrayConfig::new(nh, nw);
        let (_, trace) =
            run_image(&map, &config, &q, BoundaryPolicy::Replicate, lut).expect("valid config");
        let want = predicted_tile_cycles(nw, 5, options);
        let tiles = plan_tiles(96, 96, &config).expect("valid").len() as u64;
        let per_tile_ok = trace.per_tile.iter().all(|t| t.total == want);
        if !per_tile_ok || trace.total_cycles != tiles * want {
            failing.push(format!(
                "{} (simulated {} cycles, predicted {})",
                config.label(),
                trace.total_cycles,
                tiles * want
            ));
        }
        if (nh, nw) == (20, 5) {
            h20w5 = trace.total_cycles;
        }
    }
    if h20w5 != 3100 {
        failing.push(format!("H20W5 total {h20w5} ≠ 3100"));
    }
    if failing.is_empty() {
        (
            true,
            "25 configs, every tile N_w + 26 cycles; H20W5 = 3100".into(),
        )
    } else {
        (false, format!("mismatch: {}", failing.join("; ")))
    }
}

fn check_bit_exact(_: &SelftestOptions) -> (bool, String) {
    let lut = QuarterWaveLut::shared();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let shapes = [(96, 96), (53, 37), (25, 25), (7, 90), (1, 1)];
    let mut failing = Vec::new();
    for (i, &(w, h)) in shapes.iter().enumerate() {
        let map = random_map(w, h, rng.gen()).expect("non-empty");
        let q = QuantizedParams::from_params(&DriftParams::new(
            rng.gen_range(0.0..20.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(-3.0..3.0),
        ))
        .expect("in range");
        let boundary = BoundaryPolicy::ALL[i % 4];
        let reference = drift_fixed(&map, &q, boundary, lut);
        for (nh, nw) in standard_grid() {
            let config = ArrayConfig::new(nh, nw);
            let (out, _) = run_image(&map, &config, &q, boundary, lut).expect("valid config");
            if out.drift != reference.drift || out.core != reference.core {
                failing.push(format!("{} on {w}x{h}", config.label()));
            }
        }
    }
    if failing.is_empty() {
        (true, "25 configs x 5 maps raw-identical".into())
    } else {
        (false, format!("differs: {}", failing.join(", ")))
    }
}

fn check_lut(_: &SelftestOptions) -> (bool, String) {
    let lut = QuarterWaveLut::shared();
    let err = sweep_max_error(lut);
    let mut pyth = 0.0f64;
    for raw in i16::MIN..=i16::MAX {
        let (s, c) = lut.sincos(PhaseQ15(raw));
        let (s, c) = (s.to_f64(), c.to_f64());
        pyth = pyth.max((s * s + c * c - 1.0).abs());
    }
    let ok = err <= 2f64.powi(-12) && pyth <= 2f64.powi(-10);
    (
        ok,
        format!(
            "max error {:.3}·2⁻¹², Pythagorean residual {:.3}·2⁻¹⁰",
            err * 4096.0,
            pyth * 1024.0
        ),
    )
}

fn check_fit(_: &SelftestOptions) -> (bool, String) {
    let grid = standard_grid();
    let clean = synthesize(&SYNTHETIC_COEFFICIENTS, &grid);
    let Ok((fitted, _, _)) = fit_model(&clean) else {
        return (false, "noise-free fit failed".into());
    };
    let truth = SYNTHETIC_COEFFICIENTS;
    let worst_rel = fitted
        .power
        .as_array()
        .iter()
        .chain(fitted.area.as_array().iter())
        .zip(
            truth
                .power
                .as_array()
                .iter()
                .chain(truth.area.as_array().iter()),
        )
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut noisy = clean;
    for s in &mut noisy {
        s.power_w *= 1.0 + 1e-3 * rng.gen_range(-1.0..1.0);
        s.area_um2 *= 1.0 + 1e-3 * rng.gen_range(-1.0..1.0);
    }
    let Ok((_, p, a)) = fit_model(&noisy) else {
        return (false, "noisy fit failed".into());
    };
    let ok = worst_rel <= 1e-9 && p.r_squared > 0.999 && a.r_squared > 0.999;
    (
        ok,
        format!(
            "recovery rel err {worst_rel:.1e}; noisy R² power {:.6}, area {:.6}",
            p.r_squared, a.r_squared
        ),
    )
}

fn random_positive(rng: &mut ChaCha8Rng) -> ModelCoefficients {
    let mut draw = || 10f64.powf(rng.gen_range(-2.0..0.0));
    ModelCoefficients {
        power: Bilinear::new(draw(), draw(), draw(), draw()),
        area: Bilinear::default(),
    }
}

fn epx_real(coeffs: &ModelCoefficients, nh: usize, nw: f64) -> f64 {
    let p = &coeffs.power;
    let h = nh as f64;
    (nw + 26.0) * (p.hw + p.w / h + p.h / nw + p.fixed / (h * nw))
}

/// Bisection on the sign of a central-difference slope.
fn numeric_argmin(coeffs: &ModelCoefficients, nh: usize) -> f64 {
    let slope = |w: f64| {
        let d = 1e-5 * w;
        epx_real(coeffs, nh, w + d) - epx_real(coeffs, nh, w - d)
    };
    let (mut lo, mut hi) = (1e-3, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn integer_argmin(coeffs: &ModelCoefficients, nh: usize) -> usize {
    (1..=200)
        .min_by(|&a, &b| {
            energy_px(coeffs, &ArrayConfig::new(nh, a))
                .total_cmp(&energy_px(coeffs, &ArrayConfig::new(nh, b)))
        })
        .expect("non-empty range")
}

fn check_optimal_width(_: &SelftestOptions) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut worst = 0.0f64;
    let mut bad_int = 0;
    for _ in 0..1000 {
        let coeffs = random_positive(&mut rng);
        let nh = rng.gen_range(1..=32);
        let Ok(w) = optimal_width(&coeffs, nh, 5) else {
            return (false, "optimal_width rejected positive coefficients".into());
        };
        worst = worst.max((numeric_argmin(&coeffs, nh) - w).abs());
        let lo = (w.floor() as i64 - 1).clamp(1, 200) as usize;
        let hi = (w.ceil() as i64 + 1).clamp(1, 200) as usize;
        let k = integer_argmin(&coeffs, nh);
        if k < lo || k > hi {
            bad_int += 1;
        }
    }
    (
        worst <= 1e-6 && bad_int == 0,
        format!("max |numeric − closed form| = {worst:.1e}; integer misses {bad_int}/1000"),
    )
}

fn check_ratios(_: &SelftestOptions) -> (bool, String) {
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let r = baseline_ratios(123.8e-3, 30.38e-3, 641.3e-6, 84.5e-3).expect("positive");
    let e = system_epx(641.3e-6, 84.5e-3, 96 * 96).expect("positive");
    let ok = rel(r.speedup, 192.99) <= 5e-3
        && rel(r.energy_ratio, 69.39) <= 5e-3
        && rel(r.power_ratio, 2.78) <= 5e-3
        && rel(e, 5.88e-9) <= 5e-3
        && rel(270.57 / 5.88, 46.02) <= 5e-3;
    (
        ok,
        format!(
            "speedup {:.2}x, energy {:.2}x, power {:.3}x, {:.3} nJ/px",
            r.speedup,
            r.energy_ratio,
            r.power_ratio,
            e * 1e9
        ),
    )
}

/// Coherence of Kuramoto minus trivial drift after each of the first 50 steps.
pub fn structure_margins(seed: u64) -> crate::Result<Vec<f64>> {
    let initial = stripes(96, 96, 8, std::f64::consts::FRAC_PI_4)?;
    let schedule = Schedule::default();
    let run = |kind| {
        run_trajectory(
            &initial,
            &schedule,
            kind,
            Direction::Forward,
            BoundaryPolicy::Replicate,
            seed,
            None,
            |_, _| Ok(()),
        )
    };
    let kuramoto = run(DriftKind::Kuramoto(DriftEngine::Oracle))?;
    let trivial = run(DriftKind::Trivial { beta: None })?;
    Ok((1..=50)
        .map(|k| kuramoto.coherence[k].coherence - trivial.coherence[k].coherence)
        .collect())
}

fn check_structure(_: &SelftestOptions) -> (bool, String) {
    match structure_margins(2026) {
        Ok(m) => {
            let min = m.iter().copied().fold(f64::INFINITY, f64::min);
            let below = m.iter().filter(|&&d| d <= 0.0).count();
            (
                below == 0,
                format!("min coherence margin {min:.2e} over steps 1..50"),
            )
        }
        Err(e) => (false, e.to_string()),
    }
}

fn check_epx_shape(_: &SelftestOptions) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let mut failures = 0;
    for _ in 0..1000 {
        // non-negative: each term is zero a quarter of the time
        let mut draw = || {
            if rng.gen_bool(0.25) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        };
        let coeffs = ModelCoefficients {
            power: Bilinear::new(draw(), draw(), draw(), draw()),
            area: Bilinear::default(),
        };
        let p = coeffs.power;
        let nw = rng.gen_range(1..=200);
        let strict = p.w + p.fixed / nw as f64 > 0.0;
        let col: Vec<f64> = (1..=200)
            .map(|nh| energy_px(&coeffs, &ArrayConfig::new(nh, nw)))
            .collect();
        let monotone = col
            .windows(2)
            .all(|w| if strict { w[1] < w[0] } else { w[1] <= w[0] });

        let nh = rng.gen_range(1..=200);
        let row: Vec<f64> = (1..=200)
            .map(|w| energy_px(&coeffs, &ArrayConfig::new(nh, w)))
            .collect();
        // unimodal: once the sequence rises it never falls again
        let mut rising = false;
        let mut unimodal = true;
        for w in row.windows(2) {
            if w[1] > w[0] {
                rising = true;
            } else if rising && w[1] < w[0] {
                unimodal = false;
            }
        }
        if !(monotone && unimodal) {
            failures += 1;
        }
    }
    (
        failures == 0,
        format!("{failures}/1000 draws violate monotonicity or unimodality"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_injection_names_configs() {
        let opts = SelftestOptions {
            fault: Some(Fault::TileCycleOffByOne),
        };
        let (ok, detail) = check_cycles(&opts);
        assert!(!ok);
        assert!(detail.contains("H20W5"), "{detail}");
        assert!(check_cycles(&SelftestOptions::default()).0);
    }

    #[test]
    fn cheap_checks_pass() {
        let o = SelftestOptions::default();
        for check in [
            check_lut,
            check_fit,
            check_ratios,
            check_optimal_width,
            check_epx_shape,
        ] {
            let (ok, detail) = check(&o);
            assert!(ok, "{detail}");
        }
    }

    #[test]
    fn display_row() {
        let r = CheckResult {
            id: 4,
            name: "LUT fidelity",
            passed: true,
            detail: "x".into(),
            seconds: 0.5,
        };
        assert!(r.to_string().starts_with("[PASS]  4 LUT fidelity"));
    }
}
