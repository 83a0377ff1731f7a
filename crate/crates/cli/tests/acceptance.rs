//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//! Every check compares the library against an oracle written here.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sakura_core::drift::{drift_direct, drift_fixed, drift_reformulated};
use sakura_core::dse::{
    baseline_ratios, energy_px, fit_bilinear, optimal_width, standard_grid, synthesize, system_epx,
    Bilinear, FitTarget, MeasurementSample, ModelCoefficients, SYNTHETIC_COEFFICIENTS,
};
use sakura_core::sampler::{run_trajectory, stripes, Direction, DriftEngine, DriftKind, Schedule};
use sakura_core::systolic::{plan_tiles, run_image};
use sakura_core::{
    ArrayConfig, BoundaryPolicy, DriftParams, PhaseMap, PhaseQ15, QuantizedParams, QuarterWaveLut,
};

type Outcome = Result<String, String>;
type Target = (FitTarget, fn(&MeasurementSample) -> f64, Bilinear);

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> PhaseMap {
    PhaseMap::from_fn(w, h, |_, _| PhaseQ15(rng.gen::<i16>())).unwrap()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn reformulation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (w, h) = match i {
            0 => (1, 1),
            1 => (96, 96),
            _ => (rng.gen_range(1..=96), rng.gen_range(1..=96)),
        };
        let map = random_map(&mut rng, w, h);
        let params = DriftParams::new(
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(-PI..PI),
        );
        let boundary = BoundaryPolicy::ALL[i % 4];
        let a = drift_direct(&map, &params, boundary);
        let b = drift_reformulated(&map, &params, boundary);
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max |Δ| = {worst:.3e}"))?;
    Ok(format!("100 maps, max |Δ| = {worst:.2e}"))
}

fn cycle_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let map = random_map(&mut rng, 96, 96);
    let q = QuantizedParams::from_params(&DriftParams::default()).map_err(|e| e.to_string())?;
    let lut = QuarterWaveLut::build();
    let mut h20w5 = 0;
    for (nh, nw) in standard_grid() {
        let config = ArrayConfig::new(nh, nw);
        let (_, trace) = run_image(&map, &config, &q, BoundaryPolicy::Replicate, &lut)
            .map_err(|e| e.to_string())?;
        let expect = (nw + 26) as u64;
        let plan = plan_tiles(96, 96, &config).map_err(|e| e.to_string())?;
        for (tile, cycles) in plan.tiles.iter().zip(&trace.per_tile) {
            if !tile.is_partial(&config) {
                ensure(cycles.total == expect, || {
                    format!(
                        "H{nh}W{nw} tile {}: {} cycles, expected {expect}",
                        tile.index, cycles.total
                    )
                })?;
            }
        }
        let tiles = 96usize.div_ceil(nh) * 96usize.div_ceil(nw);
        ensure(trace.total_cycles == tiles as u64 * expect, || {
            format!("H{nh}W{nw} total {} cycles", trace.total_cycles)
        })?;
        if (nh, nw) == (20, 5) {
            h20w5 = trace.total_cycles;
        }
    }
    ensure(h20w5 == 3100, || format!("H20W5 total {h20w5}"))?;
    Ok("25 configs, H20W5 = 3100 cycles".into())
}

fn bit_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let lut = QuarterWaveLut::build();
    let shapes = [(96, 96), (37, 53), (1, 1), (5, 120), (64, 7)];
    let mut pixels = 0;
    for (i, &(w, h)) in shapes.iter().enumerate() {
        let map = random_map(&mut rng, w, h);
        let params = DriftParams::new(
            rng.gen_range(0.0..20.0),
            rng.gen_range(0.0..0.9),
            rng.gen_range(-PI..PI),
        );
        let q = QuantizedParams::from_params(&params).map_err(|e| e.to_string())?;
        let boundary = BoundaryPolicy::ALL[i % 4];
        let reference = drift_fixed(&map, &q, boundary, &lut);
        for (nh, nw) in standard_grid() {
            let config = ArrayConfig::new(nh, nw);
            let (out, _) =
                run_image(&map, &config, &q, boundary, &lut).map_err(|e| e.to_string())?;
            ensure(
                out.drift == reference.drift
                    && out.core == reference.core
                    && out.centers == reference.centers,
                || format!("{w}x{h} on H{nh}W{nw} differs"),
            )?;
            pixels += map.len();
        }
    }
    Ok(format!("125 runs, {pixels} pixels identical"))
}

fn lut_fidelity() -> Outcome {
    let lut = QuarterWaveLut::build();
    let (mut err, mut pyth) = (0.0f64, 0.0f64);
    for raw in i16::MIN..=i16::MAX {
        let (s, c) = lut.sincos(PhaseQ15(raw));
        let (s, c) = (s.raw() as f64 / 32768.0, c.raw() as f64 / 32768.0);
        let theta = raw as f64 * PI / 32768.0;
        err = err
            .max((s - theta.sin()).abs())
            .max((c - theta.cos()).abs());
        pyth = pyth.max((s * s + c * c - 1.0).abs());
    }
    ensure(err <= 2f64.powi(-12), || format!("max error {err:.3e}"))?;
    ensure(pyth <= 2f64.powi(-10), || {
        format!("Pythagorean residual {pyth:.3e}")
    })?;
    Ok(format!(
        "max error {:.3}·2⁻¹², residual {:.3}·2⁻¹⁰",
        err * 4096.0,
        pyth * 1024.0
    ))
}

fn svd_fit(samples: &[MeasurementSample], pick: fn(&MeasurementSample) -> f64) -> [f64; 4] {
    let x = DMatrix::from_fn(samples.len(), 4, |i, j| {
        let (h, w) = (samples[i].nh as f64, samples[i].nw as f64);
        [h * w, w, h, 1.0][j]
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(pick));
    let beta = x.svd(true, true).solve(&y, 1e-14).expect("full SVD");
    [beta[0], beta[1], beta[2], beta[3]]
}

fn r_squared(
    samples: &[MeasurementSample],
    pick: fn(&MeasurementSample) -> f64,
    b: &Bilinear,
) -> f64 {
    let mean = samples.iter().map(pick).sum::<f64>() / samples.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for s in samples {
        ss_res += (pick(s) - b.eval(s.nh, s.nw)).powi(2);
        ss_tot += (pick(s) - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

fn model_fit() -> Outcome {
    let truth = SYNTHETIC_COEFFICIENTS;
    let clean = synthesize(&truth, &standard_grid());
    let targets: [Target; 2] = [
        (FitTarget::Power, |s| s.power_w, truth.power),
        (FitTarget::Area, |s| s.area_um2, truth.area),
    ];
    let mut worst_rel = 0.0f64;
    for (target, pick, exact) in targets {
        let fit = fit_bilinear(&clean, target).map_err(|e| e.to_string())?;
        let svd = svd_fit(&clean, pick);
        for ((got, want), alt) in fit.coeffs.as_array().iter().zip(exact.as_array()).zip(svd) {
            worst_rel = worst_rel.max(((got - want) / want).abs());
            ensure(((got - alt) / want).abs() <= 1e-9, || {
                format!("{target:?}: {got} disagrees with SVD {alt}")
            })?;
        }
    }
    ensure(worst_rel <= 1e-9, || {
        format!("recovery error {worst_rel:.3e}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let noisy: Vec<MeasurementSample> = clean
        .iter()
        .map(|s| MeasurementSample {
            power_w: s.power_w * (1.0 + 1e-3 * normal(&mut rng)),
            area_um2: s.area_um2 * (1.0 + 1e-3 * normal(&mut rng)),
            ..*s
        })
        .collect();
    let mut r2 = [0.0; 2];
    for (slot, (target, pick, _)) in r2.iter_mut().zip(targets) {
        let fit = fit_bilinear(&noisy, target).map_err(|e| e.to_string())?;
        let own = r_squared(&noisy, pick, &fit.coeffs);
        ensure((own - fit.r_squared).abs() <= 1e-12, || {
            format!("{target:?}: reported R² {} vs {own}", fit.r_squared)
        })?;
        let svd = svd_fit(&noisy, pick);
        let best = r_squared(&noisy, pick, &Bilinear::new(svd[0], svd[1], svd[2], svd[3]));
        ensure(own >= best - 1e-12, || {
            format!("{target:?}: R² {own} below SVD {best}")
        })?;
        ensure(own > 0.999, || format!("{target:?}: R² {own}"))?;
        *slot = own;
    }
    Ok(format!(
        "recovery {worst_rel:.1e}, noisy R² power {:.6} area {:.6}",
        r2[0], r2[1]
    ))
}

fn draw_positive(rng: &mut ChaCha8Rng) -> ModelCoefficients {
    let mut d = || 10f64.powf(rng.gen_range(-3.0..0.0));
    ModelCoefficients {
        power: Bilinear::new(d(), d(), d(), d()),
        area: Bilinear::default(),
    }
}

/// Energy per pixel for real-valued N_w, straight from P·C_tile/(N_h·N_w·f).
fn epx(c: &ModelCoefficients, nh: f64, nw: f64) -> f64 {
    let p = &c.power;
    let power = p.hw * nh * nw + p.w * nw + p.h * nh + p.fixed;
    power * (nw + 26.0) / (nh * nw * 1e8)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-10 * b.max(1.0) {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn optimal_width_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut worst, mut tested) = (0.0f64, 0);
    for _ in 0..1000 {
        let c = draw_positive(&mut rng);
        let nh = rng.gen_range(1..=40usize);
        let closed = optimal_width(&c, nh, 5).map_err(|e| e.to_string())?;
        let numeric = golden_section(|w| epx(&c, nh as f64, w), 1e-3, 1e5);
        let rel = ((numeric - closed) / closed).abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || {
            format!("N_h={nh}: numeric {numeric} vs {closed}")
        })?;
        if closed <= 199.0 {
            let best = (1..=200usize)
                .min_by(|&a, &b| {
                    energy_px(&c, &ArrayConfig::new(nh, a))
                        .total_cmp(&energy_px(&c, &ArrayConfig::new(nh, b)))
                })
                .unwrap();
            let (lo, hi) = (closed.floor() - 1.0, closed.ceil() + 1.0);
            ensure((lo..=hi).contains(&(best as f64)), || {
                format!("integer optimum {best} outside [{lo}, {hi}] (N_w* = {closed})")
            })?;
            tested += 1;
        }
    }
    Ok(format!(
        "1000 draws, max rel Δ = {worst:.1e}, {tested} integer scans"
    ))
}

fn published_ratios() -> Outcome {
    let within = |got: f64, want: f64| ((got - want) / want).abs() <= 5e-3;
    let r = baseline_ratios(123.8e-3, 30.38e-3, 641.3e-6, 84.5e-3).map_err(|e| e.to_string())?;
    let epx = system_epx(641.3e-6, 84.5e-3, 9216).map_err(|e| e.to_string())?;
    let checks = [
        ("speedup", r.speedup, 192.99),
        ("energy", r.energy_ratio, 69.39),
        ("power", r.power_ratio, 2.78),
        ("epx nJ", epx * 1e9, 5.88),
        ("gpu/ours epx", 270.57 / 5.88, 46.02),
    ];
    for (name, got, want) in checks {
        ensure(within(got, want), || format!("{name}: {got} vs {want}"))?;
    }
    Ok(format!(
        "{:.2}x speed, {:.2}x energy, {:.2}x power, {:.3} nJ/px",
        r.speedup,
        r.energy_ratio,
        r.power_ratio,
        epx * 1e9
    ))
}

/// Mean over pixels of |mean phasor| in the replicate-padded 5x5 window.
fn coherence(map: &PhaseMap) -> f64 {
    let (w, h) = (map.width() as isize, map.height() as isize);
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut c) = (0.0, 0.0);
            for dy in -2..=2isize {
                for dx in -2..=2isize {
                    let px = (x + dx).clamp(0, w - 1) as usize;
                    let py = (y + dy).clamp(0, h - 1) as usize;
                    let t = map.get(px, py).raw() as f64 * PI / 32768.0;
                    s += t.sin();
                    c += t.cos();
                }
            }
            total += (s * s + c * c).sqrt() / 25.0;
        }
    }
    total / (w * h) as f64
}

fn structure_preservation() -> Outcome {
    let initial = stripes(96, 96, 8, PI / 4.0).map_err(|e| e.to_string())?;
    let schedule = Schedule::default();
    let curve = |kind: DriftKind| -> Result<Vec<f64>, String> {
        let mut own = Vec::new();
        let traj = run_trajectory(
            &initial,
            &schedule,
            kind,
            Direction::Forward,
            BoundaryPolicy::Replicate,
            2026,
            None,
            |_, m| {
                own.push(coherence(m));
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
        for (p, o) in traj.coherence.iter().zip(&own) {
            ensure((p.coherence - o).abs() <= 1e-12, || {
                format!("step {}: reported {} vs {o}", p.step, p.coherence)
            })?;
        }
        Ok(own)
    };
    let k = curve(DriftKind::Kuramoto(DriftEngine::Oracle))?;
    let t = curve(DriftKind::Trivial { beta: None })?;
    ensure(k.len() == 101 && t.len() == 101, || {
        format!("{} snapshots", k.len())
    })?;
    let margin = (1..=50).map(|i| k[i] - t[i]).fold(f64::INFINITY, f64::min);
    ensure(margin > 0.0, || {
        let first = (1..=50).find(|&i| k[i] <= t[i]).unwrap();
        format!(
            "step {first}: kuramoto {:.4} <= trivial {:.4}",
            k[first], t[first]
        )
    })?;
    Ok(format!(
        "min margin {margin:.2e}; step 50: {:.3} vs {:.3}",
        k[50], t[50]
    ))
}

fn epx_shape() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for draw in 0..1000 {
        let mut d = || {
            if rng.gen_bool(0.1) {
                0.0
            } else {
                10f64.powf(rng.gen_range(-3.0..0.0))
            }
        };
        let c = ModelCoefficients {
            power: Bilinear::new(d(), d(), d(), d()),
            area: Bilinear::default(),
        };
        let e = |nh: usize, nw: usize| energy_px(&c, &ArrayConfig::new(nh, nw));
        let tol = |x: f64| 1e-12 * x.abs();
        for nw in 1..=64 {
            for nh in 1..64 {
                let (a, b) = (e(nh, nw), e(nh + 1, nw));
                ensure(b <= a + tol(a), || {
                    format!(
                        "draw {draw}: E_px rises from N_h={nh} to {} at N_w={nw}",
                        nh + 1
                    )
                })?;
                ensure(
                    (a - epx(&c, nh as f64, nw as f64)).abs() <= 1e-9 * a.abs().max(1e-30),
                    || format!("draw {draw}: E_px({nh},{nw}) = {a} disagrees with P·C/(N·f)"),
                )?;
            }
        }
        for nh in 1..=64 {
            for nw in 2..200 {
                let second = e(nh, nw - 1) - 2.0 * e(nh, nw) + e(nh, nw + 1);
                ensure(second >= -tol(e(nh, nw)) * 4.0, || {
                    format!("draw {draw}: not convex in N_w at ({nh},{nw})")
                })?;
            }
        }
    }
    Ok("1000 draws, monotone in N_h and convex in N_w".into())
}

fn selftest_binary() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_sakura"))
        .arg("selftest")
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success(), || {
        format!("exit {:?}: {}", out.status.code(), text.trim())
    })?;
    let passed = text.matches("[PASS]").count();
    ensure(passed >= 8, || format!("{passed} checks passed"))?;
    Ok(format!("{passed} checks passed, exit 0"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "reformulation identity",
            limit: Some(Duration::from_secs(10)),
            run: reformulation,
        },
        Criterion {
            id: 2,
            name: "cycle exactness",
            limit: Some(Duration::from_secs(30)),
            run: cycle_exactness,
        },
        Criterion {
            id: 3,
            name: "engine bit-exactness",
            limit: None,
            run: bit_exactness,
        },
        Criterion {
            id: 4,
            name: "LUT fidelity",
            limit: Some(Duration::from_secs(5)),
            run: lut_fidelity,
        },
        Criterion {
            id: 5,
            name: "model fit quality",
            limit: None,
            run: model_fit,
        },
        Criterion {
            id: 6,
            name: "optimal-width formula",
            limit: None,
            run: optimal_width_formula,
        },
        Criterion {
            id: 7,
            name: "published ratios",
            limit: None,
            run: published_ratios,
        },
        Criterion {
            id: 8,
            name: "structure preservation",
            limit: Some(Duration::from_secs(20)),
            run: structure_preservation,
        },
        Criterion {
            id: 9,
            name: "E_px monotonicity and convexity",
            limit: None,
            run: epx_shape,
        },
        Criterion {
            id: 10,
            name: "selftest end-to-end",
            limit: Some(Duration::from_secs(60)),
            run: selftest_binary,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&outcome, c.limit) {
            if elapsed > limit {
                outcome = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {}: {detail} ({:.2?})", c.id, c.name, elapsed);
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
