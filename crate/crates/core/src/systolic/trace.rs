use std::fmt;
use std::io::Write;

use crate::error::Result;

/// Cycle decomposition of one tile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TileCycles {
    pub tile_index: usize,
    pub prefill: u64,
    pub sweep: u64,
    pub drain: u64,
    pub total: u64,
}

/// What the array did in one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CyclePhase {
    Prefill,
    /// Offset of the streamed field relative to each PE's center.
    Sweep {
        dx: i32,
        dy: i32,
    },
    CombineDrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleEvent {
    pub cycle: u64,
    pub tile: usize,
    pub phase: CyclePhase,
}

impl fmt::Display for CycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            CyclePhase::Prefill => write!(f, "{} {} prefill - -", self.cycle, self.tile),
            CyclePhase::Sweep { dx, dy } => {
                write!(f, "{} {} sweep {} {}", self.cycle, self.tile, dx, dy)
            }
            CyclePhase::CombineDrain => write!(f, "{} {} drain - -", self.cycle, self.tile),
        }
    }
}

/// Cycle accounting for a whole image.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleTrace {
    pub per_tile: Vec<TileCycles>,
    /// Cycles counted by the simulator clock, not derived from the formula.
    pub total_cycles: u64,
    pub prefill_cycles: u64,
    pub sweep_cycles: u64,
    pub drain_cycles: u64,
    /// sin/cos evaluations performed by the streamer.
    pub streamer_conversions: u64,
    /// Conversions per tile, in tile order.
    pub conversions_per_tile: Vec<u64>,
    pub events: Option<Vec<CycleEvent>>,
}

impl CycleTrace {
    pub(crate) fn record(&mut self, tile: TileCycles, conversions: u64) {
        self.prefill_cycles += tile.prefill;
        self.sweep_cycles += tile.sweep;
        self.drain_cycles += tile.drain;
        self.streamer_conversions += conversions;
        self.conversions_per_tile.push(conversions);
        self.per_tile.push(tile);
    }

    /// Wall-clock time of the simulated schedule.
    pub fn seconds(&self, f_clk: f64) -> f64 {
        self.total_cycles as f64 / f_clk
    }

    /// `tile_index,prefill,sweep,drain,total`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tile_index,prefill,sweep,drain,total")?;
        for t in &self.per_tile {
            writeln!(
                w,
                "{},{},{},{},{}",
                t.tile_index, t.prefill, t.sweep, t.drain, t.total
            )?;
        }
        Ok(())
    }

    /// One `cycle tile phase dx dy` line per recorded cycle.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# cycle tile phase dx dy")?;
        for e in self.events.iter().flatten() {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}
