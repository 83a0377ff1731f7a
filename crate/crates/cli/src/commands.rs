use std::fs;
use std::path::Path;
use std::time::Instant;

use sakura_core::drift::{drift_fixed, drift_reformulated};
use sakura_core::dse::{
    fit_model, pareto_frontier, read_measurements, sweep, write_sweep_csv, ModelCoefficients,
    SYNTHETIC_COEFFICIENTS,
};
use sakura_core::sampler::{
    random_map, run_trajectory, stripes, write_coherence_csv, Direction, DriftEngine, DriftKind,
    Schedule,
};
use sakura_core::selftest::{run_selftest, Fault, SelftestOptions};
use sakura_core::systolic::{run_image_with, SimOptions};
use sakura_core::{
    ArrayConfig, DriftField, DriftParams, PhaseMap, PhaseQ15, QuantizedParams, QuarterWaveLut,
};

use crate::args::*;

// Stdout writes that ignore a closed pipe (`sakura sweep | head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}
use crate::output::{manifest_path, read_input, RunManifest};
use crate::CliError;

fn load_map(path: &Path, manifest: &mut RunManifest) -> Result<PhaseMap, CliError> {
    let bytes = read_input(path)?;
    manifest.input(path, &bytes);
    Ok(PhaseMap::from_bytes(&bytes)?)
}

fn kernel_params(k: &KernelArgs) -> Result<DriftParams, CliError> {
    let p = DriftParams {
        k: k.k,
        k_ref: k.k_ref,
        psi_ref: k.psi_ref,
        m: k.m,
    };
    p.validate()?;
    Ok(p)
}

fn array_config(a: &ArrayArgs, m: usize) -> Result<ArrayConfig, CliError> {
    let c = ArrayConfig {
        nh: a.nh,
        nw: a.nw,
        m,
        f_clk: a.fclk_hz,
    };
    c.validate()?;
    Ok(c)
}

fn record_kernel(manifest: &mut RunManifest, p: &DriftParams, k: &KernelArgs) {
    manifest
        .param("k", p.k)
        .param("k_ref", p.k_ref)
        .param("psi_ref", p.psi_ref)
        .param("m", p.m)
        .param("boundary", k.boundary);
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> sakura_core::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

pub fn drift(cmd: &DriftCmd) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("drift");
    let params = kernel_params(&cmd.kernel)?;
    let map = load_map(&cmd.input, &mut manifest)?;
    let lut = QuarterWaveLut::shared();
    record_kernel(&mut manifest, &params, &cmd.kernel);
    manifest.param("engine", format!("{:?}", cmd.engine).to_lowercase());

    let boundary = cmd.kernel.boundary;
    let (real, fixed): (Option<DriftField<f64>>, _) = match cmd.engine {
        Engine::Oracle => {
            let f = drift_reformulated(&map, &params, boundary);
            let q = f.to_fixed();
            (Some(f), q)
        }
        Engine::Fixed => {
            let q = QuantizedParams::from_params(&params)?;
            (None, drift_fixed(&map, &q, boundary, lut).drift)
        }
        Engine::Systolic => {
            let q = QuantizedParams::from_params(&params)?;
            let config = array_config(&cmd.array, params.m)?;
            manifest
                .param("nh", config.nh)
                .param("nw", config.nw)
                .param("fclk_hz", config.f_clk);
            let (out, _) = run_image_with(&map, &config, &q, boundary, lut, SimOptions::default())?;
            (None, out.drift)
        }
    };
    let bytes = match cmd.format {
        FieldFormat::Kdf1 => fixed.to_kdf1_bytes(),
        FieldFormat::Csv => match &real {
            Some(r) => csv_bytes(|b| r.write_csv(b)),
            None => csv_bytes(|b| fixed.write_csv(b)),
        },
    };
    manifest.emit(&cmd.output, &bytes)?;
    manifest.finish(&manifest_path(&cmd.output))?;
    outln!(
        "wrote {}x{} drift field to {}",
        fixed.width(),
        fixed.height(),
        cmd.output.display()
    );
    Ok(())
}

pub fn simulate(cmd: &SimulateCmd) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("simulate");
    let params = kernel_params(&cmd.kernel)?;
    let config = array_config(&cmd.array, params.m)?;
    let q = QuantizedParams::from_params(&params)?;
    let map = load_map(&cmd.input, &mut manifest)?;
    record_kernel(&mut manifest, &params, &cmd.kernel);
    manifest
        .param("nh", config.nh)
        .param("nw", config.nw)
        .param("fclk_hz", config.f_clk);

    let start = Instant::now();
    let options = SimOptions {
        record_events: cmd.events.is_some(),
    };
    let (out, trace) = run_image_with(
        &map,
        &config,
        &q,
        cmd.kernel.boundary,
        QuarterWaveLut::shared(),
        options,
    )?;
    let host = start.elapsed();

    manifest.emit(&cmd.output, &out.drift.to_kdf1_bytes())?;
    if let Some(path) = &cmd.trace {
        manifest.emit(path, &csv_bytes(|b| trace.write_csv(b)))?;
    }
    if let Some(path) = &cmd.events {
        manifest.emit(path, &csv_bytes(|b| trace.write_event_log(b)))?;
    }
    manifest.finish(&manifest_path(&cmd.output))?;

    outln!("config          {}", config.label());
    outln!("tiles           {}", trace.per_tile.len());
    outln!("cycles/tile     {}", config.tile_cycles());
    outln!("total cycles    {}", trace.total_cycles);
    outln!(
        "wall-clock      {:.3} us at {:.0} MHz",
        trace.seconds(config.f_clk) * 1e6,
        config.f_clk / 1e6
    );
    outln!("conversions     {}", trace.streamer_conversions);
    outln!("saturations     {}", out.saturation.events());
    outln!("host time       {:.3} ms", host.as_secs_f64() * 1e3);
    Ok(())
}

pub fn sweep_cmd(cmd: &SweepCmd) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("sweep");
    let mut overlay = Vec::new();
    let coeffs = if let Some(path) = &cmd.measurements {
        let bytes = read_input(path)?;
        manifest.input(path, &bytes);
        overlay = read_measurements(bytes.as_slice())?;
        let (coeffs, p, a) = fit_model(&overlay)
            .map_err(|e| CliError::Format(format!("{}: cannot fit: {e}", path.display())))?;
        if cmd.fit {
            outln!("samples         {}", overlay.len());
            outln!("R² power        {:.6}", p.r_squared);
            outln!("R² area         {:.6}", a.r_squared);
            out!("{}", coeffs.to_text());
            for (name, fit) in [("power", &p), ("area", &a)] {
                if !fit.negative.is_empty() {
                    outln!(
                        "warning: negative {name} terms: {}",
                        fit.negative.join(", ")
                    );
                }
            }
        }
        coeffs
    } else if let Some(path) = &cmd.coeffs {
        let bytes = read_input(path)?;
        manifest.input(path, &bytes);
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Format(format!("{}: not UTF-8", path.display())))?;
        ModelCoefficients::parse(&text)?
    } else {
        SYNTHETIC_COEFFICIENTS
    };
    manifest.param(
        "coefficients",
        coeffs.to_text().trim_end().replace('\n', "; "),
    );
    manifest
        .param("m", cmd.m)
        .param("fclk_hz", cmd.fclk_hz)
        .param("pixels", cmd.pixels)
        .param("jobs", cmd.jobs);

    let grid: Vec<(usize, usize)> = cmd
        .nh
        .iter()
        .flat_map(|&h| cmd.nw.iter().map(move |&w| (h, w)))
        .collect();
    let records = sweep(
        &grid,
        &coeffs,
        cmd.m,
        cmd.fclk_hz,
        &overlay,
        cmd.pixels,
        cmd.jobs,
    )?;
    let pareto = pareto_frontier(&records, &cmd.budgets)?;
    let bytes = csv_bytes(|b| write_sweep_csv(&records, Some(&pareto.frontier), b));

    for choice in &pareto.budgets {
        match choice.best {
            Some(i) => {
                let r = &records[i];
                outln!(
                    "budget {:.4e} um²: H{}W{} area {:.4e} um², E_px {:.4e} J",
                    choice.budget_um2,
                    r.nh,
                    r.nw,
                    r.area_um2,
                    r.epx_j
                );
            }
            None => outln!(
                "budget {:.4e} um²: no configuration fits",
                choice.budget_um2
            ),
        }
    }
    match &cmd.output {
        Some(path) => {
            manifest.emit(path, &bytes)?;
            manifest.finish(&manifest_path(path))?;
            outln!("wrote {} rows to {}", records.len(), path.display());
        }
        None if !cmd.fit => out!("{}", String::from_utf8_lossy(&bytes)),
        None => {}
    }
    Ok(())
}

pub fn sample(cmd: &SampleCmd) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("sample");
    let mut schedule = match &cmd.schedule {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.input(path, &bytes);
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Format(format!("{}: not UTF-8", path.display())))?;
            Schedule::parse(&text)?
        }
        None => Schedule::default(),
    };
    if let Some(steps) = cmd.steps {
        schedule.steps = steps;
    }
    if let Some(dt) = cmd.dt {
        schedule.dt = dt;
    }
    schedule.validate()?;
    if cmd.snapshot_every == 0 {
        return Err(CliError::Param("--snapshot-every must be ≥ 1".into()));
    }

    let initial = match (&cmd.input, cmd.generator) {
        (Some(path), _) => load_map(path, &mut manifest)?,
        (None, generator) => {
            let g = generator.unwrap_or(Generator::Stripes);
            manifest
                .param("generator", format!("{g:?}").to_lowercase())
                .param("width", cmd.width)
                .param("height", cmd.height);
            match g {
                Generator::Stripes => {
                    manifest
                        .param("period", cmd.period)
                        .param("amplitude", cmd.amplitude);
                    stripes(cmd.width, cmd.height, cmd.period, cmd.amplitude)?
                }
                Generator::Random => {
                    manifest.param("map_seed", cmd.map_seed);
                    random_map(cmd.width, cmd.height, cmd.map_seed)?
                }
                Generator::Uniform => PhaseMap::filled(cmd.width, cmd.height, PhaseQ15::ZERO)?,
            }
        }
    };

    let engine = match cmd.engine {
        Engine::Oracle => DriftEngine::Oracle,
        Engine::Fixed => DriftEngine::Fixed,
        Engine::Systolic => {
            let mut c = ArrayConfig::new(cmd.nh, cmd.nw);
            c.m = schedule.m;
            c.validate()?;
            manifest.param("nh", c.nh).param("nw", c.nw);
            DriftEngine::Systolic(c)
        }
    };
    let kind = match cmd.drift {
        DriftChoice::Kuramoto => DriftKind::Kuramoto(engine),
        DriftChoice::Trivial => DriftKind::Trivial { beta: cmd.beta },
    };
    let direction = match cmd.direction {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Reverse => Direction::Reverse,
    };
    manifest
        .param(
            "schedule",
            schedule.to_text().trim_end().replace('\n', "; "),
        )
        .param("seed", cmd.seed)
        .param("direction", direction)
        .param("engine", engine.name())
        .param("drift", format!("{:?}", cmd.drift).to_lowercase())
        .param("boundary", cmd.boundary);
    if let Some(beta) = cmd.beta {
        manifest.param("beta", beta);
    }

    fs::create_dir_all(&cmd.output)
        .map_err(|e| CliError::Io(format!("{}: {e}", cmd.output.display())))?;
    let steps = schedule.steps;
    let mut snapshot_err = None;
    let trajectory = run_trajectory(
        &initial,
        &schedule,
        kind,
        direction,
        cmd.boundary,
        cmd.seed,
        None,
        |k, map| {
            if k % cmd.snapshot_every == 0 || k == steps {
                let path = cmd.output.join(format!("snapshot_{k:05}.kpm1"));
                if let Err(e) = manifest.emit(&path, &map.to_kpm1_bytes()) {
                    snapshot_err = Some(e);
                    return Err(sakura_core::Error::InvalidParameter(
                        "snapshot write failed".into(),
                    ));
                }
            }
            Ok(())
        },
    );
    if let Some(e) = snapshot_err {
        return Err(e);
    }
    let trajectory = trajectory?;
    let coherence = csv_bytes(|b| write_coherence_csv(&trajectory.coherence, b));
    manifest.emit(&cmd.output.join("coherence.csv"), &coherence)?;
    manifest.finish(&cmd.output.join("manifest.json"))?;

    let last = trajectory
        .coherence
        .last()
        .expect("at least the initial point");
    outln!(
        "{} steps, coherence {:.6} -> {:.6}, output in {}",
        steps,
        trajectory.coherence[0].coherence,
        last.coherence,
        cmd.output.display()
    );
    Ok(())
}

pub fn selftest(cmd: &SelftestCmd) -> Result<(), CliError> {
    let options = SelftestOptions {
        fault: cmd.inject_fault.map(|f| match f {
            FaultArg::TileCycles => Fault::TileCycleOffByOne,
        }),
    };
    let start = Instant::now();
    let results = run_selftest(&options);
    for r in &results {
        outln!("{r}");
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    outln!(
        "{}/{} checks passed in {:.2}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<_> = failed
            .iter()
            .map(|r| format!("{} {}", r.id, r.name))
            .collect();
        Err(CliError::Verify(format!("failed: {}", names.join(", "))))
    }
}

pub fn lut(cmd: &LutCmd) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("lut");
    let bytes = csv_bytes(|b| QuarterWaveLut::shared().write_csv(b));
    manifest.emit(&cmd.output, &bytes)?;
    manifest.finish(&manifest_path(&cmd.output))?;
    Ok(())
}
