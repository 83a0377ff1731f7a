//! Cycle-accurate model of the N_h × N_w PE array.
//!
//! The image is cut into N_h × N_w tiles processed in row-major order. Each
//! tile costs `N_w` prefill cycles, `M²` offset-sweep cycles and one
//! combine/drain cycle; the drain of one tile overlaps the prefill of the next,
//! so a tile costs `N_w + M² + 1` cycles in steady state. Tiles read the
//! pre-step phase map and write a separate output, so traversal order does not
//! affect results.

mod array;
mod post;
mod trace;

use crate::drift::{scale_and_add_ref, validate_m, BoundaryPolicy, DriftField, QuantizedParams};
use crate::error::{Error, Result};
use crate::fixedpoint::{AccQ824, Saturation, Q15};
use crate::map::PhaseMap;
use crate::trig::QuarterWaveLut;

pub use array::{PeState, SystolicArray, TileResult};
pub use post::{post_array_update, PostArrayInputs};
pub use trace::{CycleEvent, CyclePhase, CycleTrace, TileCycles};

/// Default array clock, 100 MHz.
pub const DEFAULT_F_CLK: f64 = 1.0e8;

/// Largest supported PE-array side.
pub const MAX_ARRAY_SIDE: usize = 1024;

/// One accelerator instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayConfig {
    /// PE rows.
    pub nh: usize,
    /// PE columns.
    pub nw: usize,
    /// Neighbourhood side.
    pub m: usize,
    /// Clock frequency in Hz.
    pub f_clk: f64,
}

impl ArrayConfig {
    pub fn new(nh: usize, nw: usize) -> Self {
        Self {
            nh,
            nw,
            m: 5,
            f_clk: DEFAULT_F_CLK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ARRAY_SIDE).contains(&self.nh) || !(1..=MAX_ARRAY_SIDE).contains(&self.nw) {
            return Err(Error::param(format!(
                "array shape {}x{} must lie within 1x1 ..= {MAX_ARRAY_SIDE}x{MAX_ARRAY_SIDE}",
                self.nh, self.nw
            )));
        }
        validate_m(self.m)?;
        if !(self.f_clk.is_finite() && self.f_clk > 0.0) {
            return Err(Error::param(format!(
                "f_clk must be > 0, got {}",
                self.f_clk
            )));
        }
        Ok(())
    }

    /// Closed-form steady-state cycles per tile, `N_w + M² + 1`.
    pub fn tile_cycles(&self) -> u64 {
        (self.nw + self.m * self.m + 1) as u64
    }

    /// Halo on each side, `(M − 1)/2`.
    pub fn halo(&self) -> usize {
        self.m / 2
    }

    pub fn label(&self) -> String {
        format!("H{}W{}", self.nh, self.nw)
    }
}

/// A tile's placement in the image and its valid (unmasked) extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub index: usize,
    /// Image row of PE row 0.
    pub row0: usize,
    /// Image column of PE column 0.
    pub col0: usize,
    /// PE rows that map onto image pixels.
    pub valid_rows: usize,
    /// PE columns that map onto image pixels.
    pub valid_cols: usize,
}

impl Tile {
    pub fn is_partial(&self, config: &ArrayConfig) -> bool {
        self.valid_rows < config.nh || self.valid_cols < config.nw
    }
}

/// Covering, non-overlapping tile grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePlan {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Halo width on each side of every tile.
    pub halo: usize,
    pub tiles: Vec<Tile>,
}

impl TilePlan {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn partial_tiles(&self, config: &ArrayConfig) -> usize {
        self.tiles.iter().filter(|t| t.is_partial(config)).count()
    }
}

pub fn plan_tiles(width: usize, height: usize, config: &ArrayConfig) -> Result<TilePlan> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    config.validate()?;
    let tile_rows = height.div_ceil(config.nh);
    let tile_cols = width.div_ceil(config.nw);
    let mut tiles = Vec::with_capacity(tile_rows * tile_cols);
    for tr in 0..tile_rows {
        for tc in 0..tile_cols {
            let row0 = tr * config.nh;
            let col0 = tc * config.nw;
            tiles.push(Tile {
                index: tiles.len(),
                row0,
                col0,
                valid_rows: config.nh.min(height - row0),
                valid_cols: config.nw.min(width - col0),
            });
        }
    }
    Ok(TilePlan {
        tile_rows,
        tile_cols,
        halo: config.halo(),
        tiles,
    })
}

/// Simulator options.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    /// Keep a per-cycle event log in the trace.
    pub record_events: bool,
}

/// Whole-image simulator output.
#[derive(Clone, Debug, PartialEq)]
pub struct SystolicOutput {
    /// Unscaled cores ũ drained from the array.
    pub core: DriftField<AccQ824>,
    /// Post-array deterministic drift `(K/M²)·ũ + ref`.
    pub drift: DriftField<AccQ824>,
    /// Captured (SCB, CCB) per pixel.
    pub centers: Vec<(Q15, Q15)>,
    pub saturation: Saturation,
}

/// Runs every tile of `map` through a fresh array instance.
pub fn run_image(
    map: &PhaseMap,
    config: &ArrayConfig,
    q: &QuantizedParams,
    boundary: BoundaryPolicy,
    lut: &QuarterWaveLut,
) -> Result<(SystolicOutput, CycleTrace)> {
    run_image_with(map, config, q, boundary, lut, SimOptions::default())
}

pub fn run_image_with(
    map: &PhaseMap,
    config: &ArrayConfig,
    q: &QuantizedParams,
    boundary: BoundaryPolicy,
    lut: &QuarterWaveLut,
    options: SimOptions,
) -> Result<(SystolicOutput, CycleTrace)> {
    if config.m != q.m {
        return Err(Error::param(format!(
            "array built for M = {} but parameters use M = {}",
            config.m, q.m
        )));
    }
    let plan = plan_tiles(map.width(), map.height(), config)?;
    let mut sim = SystolicArray::new(*config)?;
    if options.record_events {
        sim.record_events();
    }

    let (w, h) = (map.width(), map.height());
    let mut core = vec![AccQ824::ZERO; w * h];
    let mut drift = vec![AccQ824::ZERO; w * h];
    let mut centers = vec![(Q15::ZERO, Q15::ZERO); w * h];
    let mut post_sat = Saturation::new();

    for tile in &plan.tiles {
        let result = sim.run_tile(map, boundary, tile, lut);
        // drained values go through the post-array datapath; padded PEs are masked
        for r in 0..tile.valid_rows {
            for c in 0..tile.valid_cols {
                let pe = r * config.nw + c;
                let px = (tile.row0 + r) * w + tile.col0 + c;
                let (sin_i, cos_i) = result.centers[pe];
                core[px] = result.core[pe];
                centers[px] = (sin_i, cos_i);
                drift[px] = scale_and_add_ref(&mut post_sat, q, result.core[pe], sin_i, cos_i);
            }
        }
    }

    let (trace, mut saturation) = sim.finish();
    saturation.merge(post_sat);
    Ok((
        SystolicOutput {
            core: DriftField::from_parts(w, h, core),
            drift: DriftField::from_parts(w, h, drift),
            centers,
            saturation,
        },
        trace,
    ))
}
