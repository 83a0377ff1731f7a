//! Analytical design-space model: cycles, throughput, bilinear power/area,
//! energy per pixel, least-squares fitting and Pareto extraction.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::drift::validate_m;
use crate::error::{Error, Result};
use crate::systolic::ArrayConfig;

/// Side lengths of the standard 5 × 5 configuration grid.
pub const GRID_SIDES: [usize; 5] = [5, 10, 15, 20, 25];

/// `(N_h, N_w)` over [`GRID_SIDES`]², N_h-major.
pub fn standard_grid() -> Vec<(usize, usize)> {
    GRID_SIDES
        .iter()
        .flat_map(|&nh| GRID_SIDES.iter().map(move |&nw| (nh, nw)))
        .collect()
}

/// `c_hw·N_h·N_w + c_w·N_w + c_h·N_h + c_fixed`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bilinear {
    pub hw: f64,
    pub w: f64,
    pub h: f64,
    pub fixed: f64,
}

impl Bilinear {
    pub const fn new(hw: f64, w: f64, h: f64, fixed: f64) -> Self {
        Self { hw, w, h, fixed }
    }

    pub fn eval(&self, nh: usize, nw: usize) -> f64 {
        let (h, w) = (nh as f64, nw as f64);
        self.hw * h * w + self.w * w + self.h * h + self.fixed
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.hw, self.w, self.h, self.fixed]
    }

    fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// Names of negative terms.
    pub fn negative_terms(&self) -> Vec<&'static str> {
        ["hw", "w", "h", "fixed"]
            .into_iter()
            .zip(self.as_array())
            .filter(|&(_, v)| v < 0.0)
            .map(|(n, _)| n)
            .collect()
    }
}

/// Power (W) and area (µm²) models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub power: Bilinear,
    pub area: Bilinear,
}

/// Synthetic coefficients: H20W5 draws 54.12 mW at the model level, and the
/// best-under-budget choice grows with the area budget. Not measured data.
pub const SYNTHETIC_COEFFICIENTS: ModelCoefficients = ModelCoefficients {
    power: Bilinear::new(0.15e-3, 0.02e-3, 1.42e-3, 10.62e-3),
    area: Bilinear::new(5_000.0, 25_000.0, 50_000.0, 1_625_000.0),
};

impl ModelCoefficients {
    /// Reads `key = value` lines (`p_hw`, `p_w`, `p_h`, `p_fixed`, `a_hw`,
    /// `a_w`, `a_h`, `a_fixed`); all eight are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut vals = [None; 8];
        const KEYS: [&str; 8] = [
            "p_hw", "p_w", "p_h", "p_fixed", "a_hw", "a_w", "a_h", "a_fixed",
        ];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |why: String| Error::format("coefficients", format!("line {}: {why}", lineno + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let idx = KEYS
                .iter()
                .position(|&n| n == k.trim())
                .ok_or_else(|| bad(format!("unknown key `{}`", k.trim())))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("not a number: `{}`", v.trim())))?;
            if !v.is_finite() {
                return Err(bad("non-finite coefficient".into()));
            }
            vals[idx] = Some(v);
        }
        let mut out = [0.0; 8];
        for (i, v) in vals.iter().enumerate() {
            out[i] =
                v.ok_or_else(|| Error::format("coefficients", format!("missing `{}`", KEYS[i])))?;
        }
        Ok(Self {
            power: Bilinear::new(out[0], out[1], out[2], out[3]),
            area: Bilinear::new(out[4], out[5], out[6], out[7]),
        })
    }

    pub fn to_text(&self) -> String {
        let p = self.power;
        let a = self.area;
        format!(
            "p_hw = {:e}\np_w = {:e}\np_h = {:e}\np_fixed = {:e}\na_hw = {:e}\na_w = {:e}\na_h = {:e}\na_fixed = {:e}\n",
            p.hw, p.w, p.h, p.fixed, a.hw, a.w, a.h, a.fixed
        )
    }
}

/// `N_w + M² + 1`.
pub fn cycles_per_tile(nw: usize, m: usize) -> Result<u64> {
    validate_m(m)?;
    if nw == 0 {
        return Err(Error::param("N_w must be ≥ 1"));
    }
    Ok((nw + m * m + 1) as u64)
}

/// Pixels per second, `f·N_h·N_w / C_tile`.
pub fn throughput_px(config: &ArrayConfig) -> f64 {
    config.f_clk * (config.nh * config.nw) as f64 / config.tile_cycles() as f64
}

/// `1/N_h + (M² + 1)/(N_h·N_w)`.
pub fn cycles_per_px(config: &ArrayConfig) -> f64 {
    let (h, w) = (config.nh as f64, config.nw as f64);
    let m2 = (config.m * config.m) as f64;
    1.0 / h + (m2 + 1.0) / (h * w)
}

pub fn power_total(coeffs: &ModelCoefficients, nh: usize, nw: usize) -> f64 {
    coeffs.power.eval(nh, nw)
}

pub fn area_total(coeffs: &ModelCoefficients, nh: usize, nw: usize) -> f64 {
    coeffs.area.eval(nh, nw)
}

/// Compute-only energy per output pixel, expanded form.
pub fn energy_px(coeffs: &ModelCoefficients, config: &ArrayConfig) -> f64 {
    let (h, w) = (config.nh as f64, config.nw as f64);
    let p = &coeffs.power;
    config.tile_cycles() as f64 / config.f_clk * (p.hw + p.w / h + p.h / w + p.fixed / (h * w))
}

/// Continuous energy-optimal N_w for a given N_h.
pub fn optimal_width(coeffs: &ModelCoefficients, nh: usize, m: usize) -> Result<f64> {
    validate_m(m)?;
    if nh == 0 {
        return Err(Error::param("N_h must be ≥ 1"));
    }
    let h = nh as f64;
    let p = &coeffs.power;
    let den = p.hw + p.w / h;
    if den.is_nan() || den <= 0.0 {
        return Err(Error::param(
            "p_hw + p_w/N_h is not positive: energy keeps falling as N_w grows (no finite optimum)",
        ));
    }
    let num = ((m * m + 1) as f64) * (p.h + p.fixed / h);
    Ok((num / den).sqrt())
}

/// One synthesized or measured design point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub nh: usize,
    pub nw: usize,
    pub power_w: f64,
    pub area_um2: f64,
    #[serde(default)]
    pub sys_latency_s: Option<f64>,
    #[serde(default)]
    pub sys_power_w: Option<f64>,
}

impl MeasurementSample {
    fn validate(&self) -> Result<()> {
        if self.nh == 0 || self.nw == 0 {
            return Err(Error::param(format!(
                "config {}x{} has a zero side",
                self.nh, self.nw
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.power_w) || !positive(self.area_um2) {
            return Err(Error::param(format!(
                "H{}W{}: power and area must be > 0",
                self.nh, self.nw
            )));
        }
        if self.sys_latency_s.is_some_and(|v| !positive(v))
            || self.sys_power_w.is_some_and(|v| !positive(v))
        {
            return Err(Error::param(format!(
                "H{}W{}: system latency and power must be > 0",
                self.nh, self.nw
            )));
        }
        Ok(())
    }
}

/// Reads `nh,nw,power_w,area_um2[,sys_latency_s,sys_power_w]`.
pub fn read_measurements<R: Read>(r: R) -> Result<Vec<MeasurementSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| Error::format("measurement CSV", e.to_string()))?
        .clone();
    for need in ["nh", "nw", "power_w", "area_um2"] {
        if !headers.iter().any(|h| h == need) {
            return Err(Error::format(
                "measurement CSV",
                format!("missing column `{need}`"),
            ));
        }
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<MeasurementSample>() {
        let s = row.map_err(|e| Error::format("measurement CSV", e.to_string()))?;
        s.validate()
            .map_err(|e| Error::format("measurement CSV", e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_measurements<W: Write>(samples: &[MeasurementSample], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let with_sys = samples
        .iter()
        .any(|s| s.sys_latency_s.is_some() || s.sys_power_w.is_some());
    if with_sys {
        writer.write_record([
            "nh",
            "nw",
            "power_w",
            "area_um2",
            "sys_latency_s",
            "sys_power_w",
        ])
    } else {
        writer.write_record(["nh", "nw", "power_w", "area_um2"])
    }
    .map_err(csv_io)?;
    for s in samples {
        let mut rec = vec![
            s.nh.to_string(),
            s.nw.to_string(),
            format!("{:e}", s.power_w),
            format!("{:e}", s.area_um2),
        ];
        if with_sys {
            rec.push(
                s.sys_latency_s
                    .map(|v| format!("{v:e}"))
                    .unwrap_or_default(),
            );
            rec.push(s.sys_power_w.map(|v| format!("{v:e}")).unwrap_or_default());
        }
        writer.write_record(&rec).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("CSV", format!("{other:?}")),
    }
}

/// Model quantity a fit targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitTarget {
    Power,
    Area,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilinearFit {
    pub coeffs: Bilinear,
    pub r_squared: f64,
    /// Terms that came out negative; reported, not clamped.
    pub negative: Vec<&'static str>,
}

/// Ordinary least squares over the basis `{N_h·N_w, N_w, N_h, 1}`.
pub fn fit_bilinear(samples: &[MeasurementSample], target: FitTarget) -> Result<BilinearFit> {
    if samples.len() < 4 {
        return Err(Error::RankDeficient(format!(
            "{} samples cannot determine 4 coefficients",
            samples.len()
        )));
    }
    let rows: Vec<[f64; 4]> = samples
        .iter()
        .map(|s| {
            let (h, w) = (s.nh as f64, s.nw as f64);
            [h * w, w, h, 1.0]
        })
        .collect();
    let y: Vec<f64> = samples
        .iter()
        .map(|s| match target {
            FitTarget::Power => s.power_w,
            FitTarget::Area => s.area_um2,
        })
        .collect();

    // equilibrate columns so the pivot test is scale-free
    let mut scale = [0.0f64; 4];
    for r in &rows {
        for (j, v) in r.iter().enumerate() {
            scale[j] += v * v;
        }
    }
    let scale = scale.map(f64::sqrt);
    let mut a = [[0.0f64; 5]; 4];
    for (r, &yv) in rows.iter().zip(&y) {
        for i in 0..4 {
            let xi = r[i] / scale[i];
            for j in 0..4 {
                a[i][j] += xi * r[j] / scale[j];
            }
            a[i][4] += xi * yv;
        }
    }

    let x = solve4(a).ok_or_else(|| {
        let distinct = |f: fn(&MeasurementSample) -> usize| {
            let mut v: Vec<usize> = samples.iter().map(f).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        let why = if distinct(|s| s.nh) < 2 {
            "all samples share one N_h, so N_h·N_w and N_w (and N_h and 1) are collinear"
                .to_string()
        } else if distinct(|s| s.nw) < 2 {
            "all samples share one N_w, so N_h·N_w and N_h (and N_w and 1) are collinear"
                .to_string()
        } else {
            "design columns {N_h·N_w, N_w, N_h, 1} are linearly dependent".to_string()
        };
        Error::RankDeficient(why)
    })?;
    let coeffs = Bilinear::from_array([0, 1, 2, 3].map(|j| x[j] / scale[j]));

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (s, &yv) in samples.iter().zip(&y) {
        let e = yv - coeffs.eval(s.nh, s.nw);
        ss_res += e * e;
        ss_tot += (yv - mean) * (yv - mean);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(BilinearFit {
        negative: coeffs.negative_terms(),
        coeffs,
        r_squared,
    })
}

/// Gaussian elimination with partial pivoting on an augmented 4×5 system.
fn solve4(mut a: [[f64; 5]; 4]) -> Option<[f64; 4]> {
    const PIVOT_TOL: f64 = 1e-12;
    for col in 0..4 {
        let p = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < PIVOT_TOL {
            return None;
        }
        a.swap(col, p);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            let (top, rest) = a.split_at_mut(r);
            for (dst, src) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let s: f64 = (i + 1..4).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][4] - s) / a[i][i];
    }
    Some(x)
}

/// Fits power and area together.
pub fn fit_model(
    samples: &[MeasurementSample],
) -> Result<(ModelCoefficients, BilinearFit, BilinearFit)> {
    let p = fit_bilinear(samples, FitTarget::Power)?;
    let a = fit_bilinear(samples, FitTarget::Area)?;
    Ok((
        ModelCoefficients {
            power: p.coeffs,
            area: a.coeffs,
        },
        p,
        a,
    ))
}

/// Model evaluation for one configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub nh: usize,
    pub nw: usize,
    pub c_tile: u64,
    pub c_px: f64,
    pub t_px: f64,
    pub power_w: f64,
    pub area_um2: f64,
    pub epx_j: f64,
    /// Measured system-level energy per pixel, when overlay data exist.
    pub sys_epx_j: Option<f64>,
}

pub fn evaluate(coeffs: &ModelCoefficients, config: &ArrayConfig) -> Result<SweepRecord> {
    config.validate()?;
    let power_w = power_total(coeffs, config.nh, config.nw);
    Ok(SweepRecord {
        nh: config.nh,
        nw: config.nw,
        c_tile: config.tile_cycles(),
        c_px: cycles_per_px(config),
        t_px: throughput_px(config),
        power_w,
        area_um2: area_total(coeffs, config.nh, config.nw),
        epx_j: energy_px(coeffs, config),
        sys_epx_j: None,
    })
}

/// Evaluates every `(N_h, N_w)` on up to `jobs` threads; rows keep input order.
/// Overlay rows whose config matches and carry both system fields add `sys_epx_j`.
pub fn sweep(
    grid: &[(usize, usize)],
    coeffs: &ModelCoefficients,
    m: usize,
    f_clk: f64,
    overlay: &[MeasurementSample],
    pixels: usize,
    jobs: usize,
) -> Result<Vec<SweepRecord>> {
    let configs: Vec<ArrayConfig> = grid
        .iter()
        .map(|&(nh, nw)| {
            let c = ArrayConfig { nh, nw, m, f_clk };
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let jobs = jobs.clamp(1, configs.len().max(1));
    let chunk = configs.len().div_ceil(jobs).max(1);
    let parts: Vec<Result<Vec<SweepRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .chunks(chunk)
            .map(|cs| s.spawn(move || cs.iter().map(|c| evaluate(coeffs, c)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(configs.len());
    for p in parts {
        out.extend(p?);
    }
    for rec in &mut out {
        let hit = overlay.iter().find(|s| s.nh == rec.nh && s.nw == rec.nw);
        if let Some(MeasurementSample {
            sys_latency_s: Some(lat),
            sys_power_w: Some(pow),
            ..
        }) = hit
        {
            rec.sys_epx_j = Some(system_epx(*lat, *pow, pixels)?);
        }
    }
    Ok(out)
}

/// Best configuration under one area budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetChoice {
    pub budget_um2: f64,
    /// Index into the record list; `None` when nothing fits.
    pub best: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoResult {
    /// Per record, whether it is non-dominated in (area, E_px).
    pub frontier: Vec<bool>,
    pub budgets: Vec<BudgetChoice>,
}

/// Non-dominated points in (area, E_px) and the minimum-E_px record under
/// each budget (ties: smaller area, then smaller N_w).
pub fn pareto_frontier(records: &[SweepRecord], budgets: &[f64]) -> Result<ParetoResult> {
    if records.is_empty() {
        return Err(Error::param("no configurations to compare"));
    }
    let dominates = |a: &SweepRecord, b: &SweepRecord| {
        a.area_um2 <= b.area_um2
            && a.epx_j <= b.epx_j
            && (a.area_um2 < b.area_um2 || a.epx_j < b.epx_j)
    };
    let frontier = records
        .iter()
        .map(|r| !records.iter().any(|o| dominates(o, r)))
        .collect();
    let budgets = budgets
        .iter()
        .map(|&b| {
            let best = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.area_um2 <= b)
                .min_by(|(_, x), (_, y)| {
                    x.epx_j
                        .total_cmp(&y.epx_j)
                        .then(x.area_um2.total_cmp(&y.area_um2))
                        .then(x.nw.cmp(&y.nw))
                })
                .map(|(i, _)| i);
            BudgetChoice {
                budget_um2: b,
                best,
            }
        })
        .collect();
    Ok(ParetoResult { frontier, budgets })
}

/// `nh,nw,ctile,cpx,tpx,power_w,area_um2,epx_j[,sys_epx_j][,frontier]`
pub fn write_sweep_csv<W: Write>(
    records: &[SweepRecord],
    frontier: Option<&[bool]>,
    w: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let with_sys = records.iter().any(|r| r.sys_epx_j.is_some());
    let mut header = vec![
        "nh", "nw", "ctile", "cpx", "tpx", "power_w", "area_um2", "epx_j",
    ];
    if with_sys {
        header.push("sys_epx_j");
    }
    if frontier.is_some() {
        header.push("frontier");
    }
    writer.write_record(&header).map_err(csv_io)?;
    for (i, r) in records.iter().enumerate() {
        let mut rec = vec![
            r.nh.to_string(),
            r.nw.to_string(),
            r.c_tile.to_string(),
            format!("{:.6}", r.c_px),
            format!("{:.6e}", r.t_px),
            format!("{:.6e}", r.power_w),
            format!("{:.6e}", r.area_um2),
            format!("{:.6e}", r.epx_j),
        ];
        if with_sys {
            rec.push(r.sys_epx_j.map(|v| format!("{v:.6e}")).unwrap_or_default());
        }
        if let Some(f) = frontier {
            rec.push(u8::from(f[i]).to_string());
        }
        writer.write_record(&rec).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Ratios of system A (baseline) over system B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineRatios {
    /// `lat_a / lat_b`
    pub speedup: f64,
    /// `(lat_a·pow_a) / (lat_b·pow_b)`
    pub energy_ratio: f64,
    /// `pow_b / pow_a`
    pub power_ratio: f64,
}

pub fn baseline_ratios(lat_a: f64, pow_a: f64, lat_b: f64, pow_b: f64) -> Result<BaselineRatios> {
    for (name, v) in [
        ("lat_a", lat_a),
        ("pow_a", pow_a),
        ("lat_b", lat_b),
        ("pow_b", pow_b),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok(BaselineRatios {
        speedup: lat_a / lat_b,
        energy_ratio: (lat_a * pow_a) / (lat_b * pow_b),
        power_ratio: pow_b / pow_a,
    })
}

/// Measured energy per pixel, `latency·power / pixels`.
pub fn system_epx(latency_s: f64, power_w: f64, pixels: usize) -> Result<f64> {
    if pixels == 0 {
        return Err(Error::param("pixel count must be ≥ 1"));
    }
    if !(latency_s.is_finite() && latency_s > 0.0 && power_w.is_finite() && power_w > 0.0) {
        return Err(Error::param("latency and power must be > 0"));
    }
    Ok(latency_s * power_w / pixels as f64)
}

/// Noise-free samples of `coeffs` over `grid`.
pub fn synthesize(coeffs: &ModelCoefficients, grid: &[(usize, usize)]) -> Vec<MeasurementSample> {
    grid.iter()
        .map(|&(nh, nw)| MeasurementSample {
            nh,
            nw,
            power_w: coeffs.power.eval(nh, nw),
            area_um2: coeffs.area.eval(nh, nw),
            sys_latency_s: None,
            sys_power_w: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn config(nh: usize, nw: usize) -> ArrayConfig {
        ArrayConfig::new(nh, nw)
    }

    #[test]
    fn tile_cycle_examples() {
        assert_eq!(cycles_per_tile(5, 5).unwrap(), 31);
        assert_eq!(cycles_per_tile(25, 5).unwrap(), 51);
        assert_eq!(cycles_per_tile(1, 3).unwrap(), 11);
        assert!(cycles_per_tile(5, 4).is_err());
        assert!(cycles_per_tile(5, 1).is_err());
        assert!(cycles_per_tile(0, 5).is_err());
    }

    #[test]
    fn throughput_examples() {
        let c = config(20, 5);
        assert!((cycles_per_px(&c) - 0.31).abs() < 1e-15);
        assert!(rel(throughput_px(&c), 1e8 * 100.0 / 31.0) < 1e-15);
        assert!((throughput_px(&c) - 3.2258e8).abs() < 1e4);
        assert!((cycles_per_px(&config(5, 5)) - 1.24).abs() < 1e-15);
        // c_px = C_tile / (N_h·N_w)
        for (nh, nw) in standard_grid() {
            let c = config(nh, nw);
            assert!(rel(cycles_per_px(&c), c.tile_cycles() as f64 / (nh * nw) as f64) < 1e-14);
        }
        let mut last = f64::INFINITY;
        for nh in [1, 10, 100, 1000, 10000] {
            let v = cycles_per_px(&config(nh, 5));
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn bilinear_examples() {
        let only_fixed = ModelCoefficients {
            power: Bilinear::new(0.0, 0.0, 0.0, 0.7),
            area: Bilinear::new(0.0, 0.0, 0.0, 3.0),
        };
        for (nh, nw) in standard_grid() {
            assert_eq!(power_total(&only_fixed, nh, nw), 0.7);
            assert_eq!(area_total(&only_fixed, nh, nw), 3.0);
            let c = config(nh, nw);
            let want = (nw + 26) as f64 * 0.7 / (1e8 * (nh * nw) as f64);
            assert!(rel(energy_px(&only_fixed, &c), want) < 1e-14);
        }
        let hw = ModelCoefficients {
            power: Bilinear::new(1.0, 0.0, 0.0, 0.0),
            ..Default::default()
        };
        assert_eq!(power_total(&hw, 20, 5), 100.0);
    }

    #[test]
    fn synthetic_calibration() {
        let c = SYNTHETIC_COEFFICIENTS;
        assert!((power_total(&c, 20, 5) - 54.12e-3).abs() < 1e-12);
        let records = sweep(&standard_grid(), &c, 5, 1e8, &[], 9216, 3).unwrap();
        let p = pareto_frontier(&records, &[3e6, 4e6, 5e6, 6e6]).unwrap();
        let chosen: Vec<(usize, usize)> = p
            .budgets
            .iter()
            .map(|b| {
                let r = &records[b.best.unwrap()];
                (r.nh, r.nw)
            })
            .collect();
        assert_eq!(chosen, vec![(10, 10), (15, 15), (20, 15), (25, 20)]);
    }

    #[test]
    fn energy_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let coeffs = ModelCoefficients {
                power: Bilinear::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()),
                area: Bilinear::default(),
            };
            let c = ArrayConfig {
                nh: rng.gen_range(1..=64),
                nw: rng.gen_range(1..=64),
                m: [3, 5, 7][rng.gen_range(0..3)],
                f_clk: rng.gen_range(1e7..1e9),
            };
            let closed = power_total(&coeffs, c.nh, c.nw) * c.tile_cycles() as f64
                / ((c.nh * c.nw) as f64 * c.f_clk);
            assert!(rel(energy_px(&coeffs, &c), closed) < 1e-12);
        }
    }

    #[test]
    fn optimal_width_examples() {
        // (p_h + p_fixed/N_h) = (p_hw + p_w/N_h)
        let balanced = ModelCoefficients {
            power: Bilinear::new(1.0, 5.0, 1.0, 5.0),
            ..Default::default()
        };
        assert!((optimal_width(&balanced, 5, 5).unwrap() - 26f64.sqrt()).abs() < 1e-12);
        let narrow = ModelCoefficients {
            power: Bilinear::new(1.0, 1.0, 0.0, 0.0),
            ..Default::default()
        };
        assert_eq!(optimal_width(&narrow, 7, 5).unwrap(), 0.0);
        let unbounded = ModelCoefficients {
            power: Bilinear::new(0.0, 0.0, 1.0, 1.0),
            ..Default::default()
        };
        assert!(optimal_width(&unbounded, 5, 5).is_err());
        let w = optimal_width(&SYNTHETIC_COEFFICIENTS, 10, 5).unwrap();
        assert!((w - 20.6).abs() < 0.05, "{w}");
    }

    #[test]
    fn optimal_width_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let coeffs = ModelCoefficients {
                power: Bilinear::new(
                    rng.gen_range(0.01..1.0),
                    rng.gen_range(0.01..1.0),
                    rng.gen_range(0.01..1.0),
                    rng.gen_range(0.01..1.0),
                ),
                ..Default::default()
            };
            let nh = rng.gen_range(1..=30);
            let w = optimal_width(&coeffs, nh, 5).unwrap();
            // dE/dN_w ∝ (p_hw + p_w/N_h) − (M²+1)(p_h + p_fixed/N_h)/N_w²
            let p = coeffs.power;
            let h = nh as f64;
            let grad = (p.hw + p.w / h) - 26.0 * (p.h + p.fixed / h) / (w * w);
            assert!(grad.abs() < 1e-9 * (p.hw + p.w / h));
        }
    }

    #[test]
    fn noise_free_fit_recovers_coefficients() {
        let samples = synthesize(&SYNTHETIC_COEFFICIENTS, &standard_grid());
        let (fitted, pf, af) = fit_model(&samples).unwrap();
        for (got, want) in fitted
            .power
            .as_array()
            .iter()
            .zip(SYNTHETIC_COEFFICIENTS.power.as_array())
        {
            assert!(rel(*got, want) < 1e-9, "{got} vs {want}");
        }
        for (got, want) in fitted
            .area
            .as_array()
            .iter()
            .zip(SYNTHETIC_COEFFICIENTS.area.as_array())
        {
            assert!(rel(*got, want) < 1e-9, "{got} vs {want}");
        }
        assert!(pf.r_squared > 1.0 - 1e-12);
        assert!(af.r_squared > 1.0 - 1e-12);
        assert!(pf.negative.is_empty());
    }

    #[test]
    fn noisy_fit_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut samples = synthesize(&SYNTHETIC_COEFFICIENTS, &standard_grid());
        for s in &mut samples {
            s.power_w *= 1.0 + 1e-3 * (2.0 * rng.gen::<f64>() - 1.0);
            s.area_um2 *= 1.0 + 1e-3 * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let (_, pf, af) = fit_model(&samples).unwrap();
        assert!(pf.r_squared > 0.999 && af.r_squared > 0.999);
    }

    #[test]
    fn fit_rejects_degenerate_designs() {
        let all = synthesize(&SYNTHETIC_COEFFICIENTS, &standard_grid());
        assert!(matches!(
            fit_bilinear(&all[..3], FitTarget::Power),
            Err(Error::RankDeficient(_))
        ));
        let one_height: Vec<_> = all.iter().copied().filter(|s| s.nh == 10).collect();
        match fit_bilinear(&one_height, FitTarget::Area) {
            Err(Error::RankDeficient(why)) => assert!(why.contains("N_h"), "{why}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_reports_negative_terms() {
        let coeffs = ModelCoefficients {
            power: Bilinear::new(1e-4, -2e-4, 1e-3, 1e-2),
            area: Bilinear::new(1.0, 1.0, 1.0, 1.0),
        };
        let fit = fit_bilinear(&synthesize(&coeffs, &standard_grid()), FitTarget::Power).unwrap();
        assert_eq!(fit.negative, vec!["w"]);
    }

    #[test]
    fn pareto_small_cases() {
        let r = |nh, nw, area, epx| SweepRecord {
            nh,
            nw,
            c_tile: 0,
            c_px: 0.0,
            t_px: 0.0,
            power_w: 0.0,
            area_um2: area,
            epx_j: epx,
            sys_epx_j: None,
        };
        let single = pareto_frontier(&[r(5, 5, 1.0, 1.0)], &[0.5, 2.0]).unwrap();
        assert_eq!(single.frontier, vec![true]);
        assert_eq!(single.budgets[0].best, None);
        assert_eq!(single.budgets[1].best, Some(0));

        let dominated = pareto_frontier(&[r(5, 5, 1.0, 1.0), r(5, 10, 2.0, 2.0)], &[]).unwrap();
        assert_eq!(dominated.frontier, vec![true, false]);

        // equal E_px: smaller area wins, then smaller N_w
        let ties = [r(5, 10, 2.0, 1.0), r(10, 10, 1.5, 1.0), r(5, 5, 1.5, 1.0)];
        let p = pareto_frontier(&ties, &[10.0]).unwrap();
        assert_eq!(p.budgets[0].best, Some(2));
        assert!(pareto_frontier(&[], &[]).is_err());
    }

    #[test]
    fn published_ratios() {
        let r = baseline_ratios(123.8e-3, 30.38e-3, 641.3e-6, 84.5e-3).unwrap();
        assert!(rel(r.speedup, 192.99) < 5e-3);
        assert!(rel(r.energy_ratio, 69.39) < 5e-3);
        assert!(rel(r.power_ratio, 2.78) < 5e-3);
        let same = baseline_ratios(1.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(
            (same.speedup, same.energy_ratio, same.power_ratio),
            (1.0, 1.0, 1.0)
        );
        assert!(baseline_ratios(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(baseline_ratios(1.0, -1.0, 1.0, 1.0).is_err());

        let e = system_epx(641.3e-6, 84.5e-3, 96 * 96).unwrap();
        assert!(rel(e, 5.88e-9) < 5e-3);
        assert!(rel(270.57e-9 / 5.88e-9, 46.02) < 5e-3);
        assert!(system_epx(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn measurement_csv_round_trip() {
        let mut samples = synthesize(&SYNTHETIC_COEFFICIENTS, &[(20, 5), (5, 5)]);
        samples[0].sys_latency_s = Some(641.3e-6);
        samples[0].sys_power_w = Some(84.5e-3);
        let mut buf = Vec::new();
        write_measurements(&samples, &mut buf).unwrap();
        assert_eq!(read_measurements(buf.as_slice()).unwrap(), samples);

        let plain = "nh,nw,power_w,area_um2\n5,5,0.01,1e6\n";
        let s = read_measurements(plain.as_bytes()).unwrap();
        assert_eq!(s[0].sys_latency_s, None);
        assert!(read_measurements("nh,nw,power_w\n5,5,1\n".as_bytes()).is_err());
        assert!(read_measurements("nh,nw,power_w,area_um2\n5,x,1,1\n".as_bytes()).is_err());
        assert!(read_measurements("nh,nw,power_w,area_um2\n5,5,-1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn sweep_overlay_and_csv() {
        let overlay = [MeasurementSample {
            nh: 20,
            nw: 5,
            power_w: 1.0,
            area_um2: 1.0,
            sys_latency_s: Some(641.3e-6),
            sys_power_w: Some(84.5e-3),
        }];
        let records = sweep(
            &standard_grid(),
            &SYNTHETIC_COEFFICIENTS,
            5,
            1e8,
            &overlay,
            9216,
            4,
        )
        .unwrap();
        assert_eq!(records.len(), 25);
        let serial = sweep(
            &standard_grid(),
            &SYNTHETIC_COEFFICIENTS,
            5,
            1e8,
            &overlay,
            9216,
            1,
        )
        .unwrap();
        assert_eq!(records, serial);
        let h20w5 = records.iter().find(|r| (r.nh, r.nw) == (20, 5)).unwrap();
        assert!(rel(h20w5.sys_epx_j.unwrap(), 5.88e-9) < 5e-3);
        assert_eq!(records.iter().filter(|r| r.sys_epx_j.is_some()).count(), 1);

        let p = pareto_frontier(&records, &[]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&records, Some(&p.frontier), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "nh,nw,ctile,cpx,tpx,power_w,area_um2,epx_j,sys_epx_j,frontier"
        );
        assert_eq!(lines.count(), 25);
        assert!(sweep(&[(0, 5)], &SYNTHETIC_COEFFICIENTS, 5, 1e8, &[], 1, 1).is_err());
    }

    #[test]
    fn coefficient_text_round_trip() {
        let c = SYNTHETIC_COEFFICIENTS;
        assert_eq!(ModelCoefficients::parse(&c.to_text()).unwrap(), c);
        assert!(ModelCoefficients::parse("p_hw = 1").is_err());
        assert!(ModelCoefficients::parse("bogus = 1").is_err());
    }

    proptest! {
        #[test]
        fn epx_decreases_with_height(
            p in prop::array::uniform4(0.0f64..1.0),
            nw in 1usize..100,
            nh in 1usize..100,
        ) {
            let coeffs = ModelCoefficients { power: Bilinear::from_array(p), ..Default::default() };
            prop_assume!(p[1] + p[3] / nw as f64 > 1e-9);
            let a = energy_px(&coeffs, &config(nh, nw));
            let b = energy_px(&coeffs, &config(nh + 1, nw));
            prop_assert!(b < a);
        }
    }
}
