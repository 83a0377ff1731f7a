use std::collections::VecDeque;

use super::trace::{CycleEvent, CyclePhase, CycleTrace, TileCycles};
use super::{ArrayConfig, Tile};
use crate::drift::{combine_core, BoundaryPolicy};
use crate::error::Result;
use crate::fixedpoint::{AccQ824, Saturation, Q15};
use crate::map::PhaseMap;
use crate::trig::QuarterWaveLut;

/// A transformed sample travelling through the fabric: (sin θ, cos θ).
type Sample = (Q15, Q15);

/// Registers of one processing element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PeState {
    pub acc_s: AccQ824,
    pub acc_c: AccQ824,
    /// SCB.
    pub center_sin: Q15,
    /// CCB.
    pub center_cos: Q15,
    pub center_captured: bool,
    /// Down-going CDB/SDB pair; `None` until something is shifted in.
    pub data: Option<Sample>,
    /// Right-going CRB/SRB snapshot taken before each downward sweep.
    pub snapshot: Option<Sample>,
    /// Multiply–subtract result presented on the drain port.
    pub drain: AccQ824,
}

/// One tile's drained results, PE-major (row · N_w + column).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileResult {
    pub core: Vec<AccQ824>,
    pub centers: Vec<Sample>,
    pub cycles: TileCycles,
}

/// One array instance: PE grid, row buffer, column buffer and streamer.
///
/// Single-threaded; run distinct instances for concurrent sweeps.
#[derive(Debug)]
pub struct SystolicArray {
    config: ArrayConfig,
    pes: Vec<PeState>,
    /// M − 1 halo rows above the array; the last row borders PE row 0.
    row_buffer: Vec<Vec<Option<Sample>>>,
    row_snapshot: Vec<Vec<Option<Sample>>>,
    /// Converted columns waiting for injection, each N_h + M − 1 tall.
    column_buffer: VecDeque<Vec<Sample>>,
    cycle: u64,
    saturation: Saturation,
    trace: CycleTrace,
    events: Option<Vec<CycleEvent>>,
}

/// Streamer state for the tile in flight: which halo column comes next.
struct Streamer<'a> {
    map: &'a PhaseMap,
    boundary: BoundaryPolicy,
    lut: &'a QuarterWaveLut,
    tile: &'a Tile,
    halo: isize,
    height: usize,
    /// Halo-column indices in injection order (rightmost first).
    pending: std::iter::Rev<std::ops::Range<usize>>,
    conversions: u64,
}

impl Streamer<'_> {
    fn convert_column(&mut self, hc: usize) -> Vec<Sample> {
        let x = self.tile.col0 as isize - self.halo + hc as isize;
        (0..self.height)
            .map(|hr| {
                let y = self.tile.row0 as isize - self.halo + hr as isize;
                self.conversions += 1;
                self.lut.sincos(self.boundary.sample(self.map, x, y))
            })
            .collect()
    }
}

impl SystolicArray {
    pub fn new(config: ArrayConfig) -> Result<Self> {
        config.validate()?;
        let halo_rows = config.m - 1;
        Ok(Self {
            config,
            pes: vec![PeState::default(); config.nh * config.nw],
            row_buffer: vec![vec![None; config.nw]; halo_rows],
            row_snapshot: vec![vec![None; config.nw]; halo_rows],
            column_buffer: VecDeque::with_capacity(config.nw),
            cycle: 0,
            saturation: Saturation::new(),
            trace: CycleTrace::default(),
            events: None,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn record_events(&mut self) {
        self.events.get_or_insert_with(Vec::new);
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn pes(&self) -> &[PeState] {
        &self.pes
    }

    /// Consumes the instance, returning the accumulated trace and saturation record.
    pub fn finish(mut self) -> (CycleTrace, Saturation) {
        self.trace.total_cycles = self.cycle;
        self.trace.events = self.events.take();
        (self.trace, self.saturation)
    }

    fn log(&mut self, tile: usize, phase: CyclePhase) {
        let cycle = self.cycle;
        if let Some(events) = self.events.as_mut() {
            events.push(CycleEvent { cycle, tile, phase });
        }
    }

    /// Streamer fills the column buffer by one column when there is room.
    fn streamer_tick(&mut self, streamer: &mut Streamer<'_>) {
        if self.column_buffer.len() < self.config.nw {
            if let Some(hc) = streamer.pending.next() {
                let col = streamer.convert_column(hc);
                self.column_buffer.push_back(col);
            }
        }
    }

    fn pop_column(&mut self, tile: &Tile) -> Vec<Sample> {
        self.column_buffer.pop_front().unwrap_or_else(|| {
            panic!(
                "column buffer underflow at cycle {} (tile {})",
                self.cycle, tile.index
            )
        })
    }

    /// Shifts PE data and row buffer right by one, injecting `column` at the
    /// left edge: the upper M − 1 entries go to the row buffer, the lower N_h to
    /// PE column 0. `from_snapshot` shifts the CRB/SRB and row-buffer snapshots
    /// instead of the live registers (restore + advance).
    fn shift_right_inject(&mut self, column: &[Sample], from_snapshot: bool) {
        let (nh, nw) = (self.config.nh, self.config.nw);
        let halo_rows = self.config.m - 1;
        debug_assert_eq!(column.len(), nh + halo_rows);

        for (k, entry) in column[..halo_rows].iter().enumerate() {
            let src = if from_snapshot {
                &self.row_snapshot[k]
            } else {
                &self.row_buffer[k]
            };
            let mut row = Vec::with_capacity(nw);
            row.push(Some(*entry));
            row.extend_from_slice(&src[..nw - 1]);
            self.row_buffer[k] = row;
        }

        for r in 0..nh {
            for c in (1..nw).rev() {
                let left = &self.pes[r * nw + c - 1];
                let v = if from_snapshot {
                    left.snapshot
                } else {
                    left.data
                };
                self.pes[r * nw + c].data = v;
            }
            self.pes[r * nw].data = Some(column[halo_rows + r]);
        }
    }

    /// Latch CRB/SRB and the row-buffer state ahead of a downward sweep.
    fn take_snapshot(&mut self) {
        for pe in &mut self.pes {
            pe.snapshot = pe.data;
        }
        self.row_snapshot.clone_from(&self.row_buffer);
    }

    /// The row buffer feeds its row nearest the array into PE row 0 while
    /// every PE passes its sample to the PE below.
    fn shift_down(&mut self) {
        let (nh, nw) = (self.config.nh, self.config.nw);
        for r in (1..nh).rev() {
            for c in 0..nw {
                self.pes[r * nw + c].data = self.pes[(r - 1) * nw + c].data;
            }
        }
        let bottom = self.row_buffer.len() - 1;
        for c in 0..nw {
            self.pes[c].data = self.row_buffer[bottom][c];
        }
        for k in (1..=bottom).rev() {
            self.row_buffer[k] = std::mem::take(&mut self.row_buffer[k - 1]);
        }
        self.row_buffer[0] = vec![None; nw];
    }

    /// One PE compute step at sweep offset (a, b); center capture at the middle.
    fn pe_step(&mut self, a: usize, b: usize, tile: &Tile) {
        let h = self.config.halo();
        let capture = a == h && b == h;
        for (i, pe) in self.pes.iter_mut().enumerate() {
            let (s, c) = pe.data.unwrap_or_else(|| {
                panic!(
                    "PE {i} has no operand at cycle {} (tile {}, offset {a},{b})",
                    self.cycle, tile.index
                )
            });
            if capture {
                assert!(
                    !pe.center_captured,
                    "PE {i} captured its center twice in tile {}",
                    tile.index
                );
                pe.center_sin = s;
                pe.center_cos = c;
                pe.center_captured = true;
            } else {
                pe.acc_s = self.saturation.add(pe.acc_s, AccQ824::from_q15(s));
                pe.acc_c = self.saturation.add(pe.acc_c, AccQ824::from_q15(c));
            }
        }
    }

    /// Simulates one tile cycle by cycle. Out-of-image halo and padding
    /// samples come from `boundary`.
    pub fn run_tile(
        &mut self,
        map: &PhaseMap,
        boundary: BoundaryPolicy,
        tile: &Tile,
        lut: &QuarterWaveLut,
    ) -> TileResult {
        let ArrayConfig { nh, nw, m, .. } = self.config;
        let start = self.cycle;
        let mut streamer = Streamer {
            map,
            boundary,
            lut,
            tile,
            halo: self.config.halo() as isize,
            height: nh + m - 1,
            pending: (0..nw + m - 1).rev(),
            conversions: 0,
        };

        // prefill: one column per cycle; afterwards PE (r, c) holds offset (−h, −h)
        for _ in 0..nw {
            self.streamer_tick(&mut streamer);
            let col = self.pop_column(tile);
            self.shift_right_inject(&col, false);
            self.log(tile.index, CyclePhase::Prefill);
            self.cycle += 1;
        }
        self.take_snapshot();
        let prefill = self.cycle - start;

        // offset sweep, Δx-major; snapshot/restore/inject share the last
        // cycle of each vertical pass
        let h = self.config.halo() as i32;
        for a in 0..m {
            for b in 0..m {
                self.streamer_tick(&mut streamer);
                self.pe_step(a, b, tile);
                if b + 1 < m {
                    self.shift_down();
                } else if a + 1 < m {
                    let col = self.pop_column(tile);
                    self.shift_right_inject(&col, true);
                    self.take_snapshot();
                }
                self.log(
                    tile.index,
                    CyclePhase::Sweep {
                        dx: a as i32 - h,
                        dy: b as i32 - h,
                    },
                );
                self.cycle += 1;
            }
        }
        let sweep = self.cycle - start - prefill;
        assert!(
            self.column_buffer.is_empty() && streamer.pending.len() == 0,
            "tile {} left unconsumed columns",
            tile.index
        );

        // combine and drain; the next tile's prefill overwrites the data path
        let mut core = Vec::with_capacity(nh * nw);
        let mut centers = Vec::with_capacity(nh * nw);
        for (i, pe) in self.pes.iter_mut().enumerate() {
            assert!(pe.center_captured, "PE {i} never captured its center");
            pe.drain = combine_core(
                &mut self.saturation,
                pe.acc_s,
                pe.acc_c,
                pe.center_sin,
                pe.center_cos,
            );
            core.push(pe.drain);
            centers.push((pe.center_sin, pe.center_cos));
            pe.acc_s = AccQ824::ZERO;
            pe.acc_c = AccQ824::ZERO;
            pe.center_captured = false;
        }
        self.log(tile.index, CyclePhase::CombineDrain);
        self.cycle += 1;
        let drain = self.cycle - start - prefill - sweep;

        let cycles = TileCycles {
            tile_index: tile.index,
            prefill,
            sweep,
            drain,
            total: self.cycle - start,
        };
        self.trace.record(cycles, streamer.conversions);
        TileResult {
            core,
            centers,
            cycles,
        }
    }
}
