//! Pipelined inference engine.
//!
//! Thresholds are read from their dedicated rows into per-column neuron
//! registers, inputs are then presented one row per cycle, every `+1` sense
//! output decrements its column register, and the output activation is the
//! complement of the register's sign bit at the end.
//!
//! [`oracle_eval`] computes the same layer directly from the popcount
//! definition; with ideal sensing the two must agree bit for bit.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::binary::{xnor_popcount, Binary, BinaryMatrix};
use crate::device::ProgrammingContext;
use crate::tile::{SenseContext, Tile, TileError, COLS, MAX_THRESHOLD, THRESHOLD_BASE, THRESHOLD_ROWS, WEIGHT_ROWS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("input row {row} is outside the engine fan-in {fan_in}")]
    RowOutOfRange { row: usize, fan_in: usize },
    #[error("thresholds have not been loaded")]
    ThresholdsNotLoaded,
    #[error("threshold cells of tile {tile} are not programmed: {source}")]
    NotProgrammed { tile: usize, source: TileError },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("threshold {0} cannot be stored by this engine")]
    ThresholdOutOfRange(i64),
    #[error("target preactivation {target} is not reachable with fan-in {fan_in}")]
    TargetOutOfRange { target: i64, fan_in: usize },
    #[error(transparent)]
    Tile(#[from] TileError),
}

/// Engine layouts. Tiles are stacked along the input dimension (58 rows
/// each) and placed side by side along the output dimension (64 columns
/// each).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineConfig {
    /// One tile, 58 inputs, 64 outputs (single-module test mode).
    SingleTile58x64,
    /// One layer of the two-layer chip configuration: 2 stacked tiles
    /// feeding one bank of 64 registers.
    TwoLayer116x64,
    /// Single-layer chip configuration: 2x2 tiles, 116 inputs, 128 outputs.
    OneLayer116x128,
}

impl EngineConfig {
    /// Tiles stacked along the input dimension.
    pub fn stack(self) -> usize {
        match self {
            EngineConfig::SingleTile58x64 => 1,
            EngineConfig::TwoLayer116x64 | EngineConfig::OneLayer116x128 => 2,
        }
    }

    /// Tile groups side by side along the output dimension.
    pub fn groups(self) -> usize {
        match self {
            EngineConfig::OneLayer116x128 => 2,
            _ => 1,
        }
    }

    pub fn tile_count(self) -> usize {
        self.stack() * self.groups()
    }

    pub fn fan_in(self) -> usize {
        self.stack() * WEIGHT_ROWS
    }

    pub fn fan_out(self) -> usize {
        self.groups() * COLS
    }

    /// Largest total threshold a register can be loaded with.
    pub fn max_threshold(self) -> i64 {
        self.stack() as i64 * MAX_THRESHOLD as i64
    }
}

/// Cycle constants of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineTiming {
    pub threshold_load_cycles: u64,
    pub drain_cycles: u64,
}

impl Default for PipelineTiming {
    fn default() -> Self {
        Self {
            threshold_load_cycles: THRESHOLD_ROWS as u64,
            drain_cycles: 2,
        }
    }
}

impl PipelineTiming {
    pub fn cycles(&self, fan_in: usize) -> u64 {
        self.threshold_load_cycles + fan_in as u64 + self.drain_cycles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    ThresholdLoad,
    InputRow,
    SignCopy,
    ShiftOut,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ThresholdLoad => "threshold_load",
            EventKind::InputRow => "input_row",
            EventKind::SignCopy => "sign_copy",
            EventKind::ShiftOut => "shift_out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub kind: EventKind,
    pub row: Option<usize>,
    pub col: Option<usize>,
}

/// Cycle count and (optionally) the ordered event log of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineTrace {
    pub cycles: u64,
    pub events: Vec<TraceEvent>,
}

impl PipelineTrace {
    /// `cycle,event,row,col`, with empty fields where not applicable.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cycle,event,row,col\n");
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.events {
            let _ = writeln!(s, "{},{},{},{}", e.cycle, e.kind.as_str(), opt(e.row), opt(e.col));
        }
        s
    }
}

/// Result of a full inference pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inference {
    pub outputs: Vec<Binary>,
    /// Preactivation `popcount - T` per output neuron, as the hardware saw it.
    pub deltas: Vec<i32>,
    pub trace: PipelineTrace,
}

/// One layer's worth of tiles plus the neuron register bank.
#[derive(Debug, Clone)]
pub struct LayerEngine {
    config: EngineConfig,
    tiles: Vec<Tile>,
    registers: Vec<i8>,
    loaded: bool,
    timing: PipelineTiming,
    record_events: bool,
    trace: PipelineTrace,
}

impl LayerEngine {
    pub fn new(config: EngineConfig, tiles: Vec<Tile>) -> Result<Self, PipelineError> {
        if tiles.len() != config.tile_count() {
            return Err(PipelineError::DimensionMismatch(format!(
                "{config:?} needs {} tiles, got {}",
                config.tile_count(),
                tiles.len()
            )));
        }
        Ok(Self {
            config,
            tiles,
            registers: vec![0; config.fan_out()],
            loaded: false,
            timing: PipelineTiming::default(),
            record_events: true,
            trace: PipelineTrace::default(),
        })
    }

    /// Engine with freshly formed tiles; tile ids start at `first_id`.
    pub fn formed<R: Rng + ?Sized>(
        config: EngineConfig,
        first_id: u64,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<Self, PipelineError> {
        let tiles = (0..config.tile_count() as u64)
            .map(|i| Tile::formed(first_id + i, ctx, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(config, tiles)
    }

    pub fn with_timing(mut self, timing: PipelineTiming) -> Self {
        self.timing = timing;
        self
    }

    /// Disables the event log; cycle counting is unaffected.
    pub fn without_events(mut self) -> Self {
        self.record_events = false;
        self
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tiles_mut(&mut self) -> &mut [Tile] {
        &mut self.tiles
    }

    pub fn registers(&self) -> &[i8] {
        &self.registers
    }

    pub fn trace(&self) -> &PipelineTrace {
        &self.trace
    }

    #[inline]
    fn tile_index(&self, stack: usize, group: usize) -> usize {
        group * self.config.stack() + stack
    }

    /// Programs `weights` (`fan_out x fan_in`, row per output neuron).
    pub fn program_weights<R: Rng + ?Sized>(
        &mut self,
        weights: &BinaryMatrix,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), PipelineError> {
        if weights.rows() != self.config.fan_out() || weights.cols() != self.config.fan_in() {
            return Err(PipelineError::DimensionMismatch(format!(
                "weights are {}x{}, engine is {}x{}",
                weights.rows(),
                weights.cols(),
                self.config.fan_out(),
                self.config.fan_in()
            )));
        }
        for group in 0..self.config.groups() {
            for stack in 0..self.config.stack() {
                let t = self.tile_index(stack, group);
                self.tiles[t].program_weights_with(ctx, rng, |row, col| {
                    weights.get(group * COLS + col, stack * WEIGHT_ROWS + row)
                })?;
            }
        }
        self.loaded = false;
        Ok(())
    }

    /// Programs each output's total threshold, split over the stacked tiles
    /// (remainder to the lowest stack position).
    pub fn program_thresholds<R: Rng + ?Sized>(
        &mut self,
        thresholds: &[i64],
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), PipelineError> {
        if thresholds.len() != self.config.fan_out() {
            return Err(PipelineError::DimensionMismatch(format!(
                "{} thresholds for {} outputs",
                thresholds.len(),
                self.config.fan_out()
            )));
        }
        let stack = self.config.stack() as i64;
        for (j, &t) in thresholds.iter().enumerate() {
            if !(0..=self.config.max_threshold()).contains(&t) {
                return Err(PipelineError::ThresholdOutOfRange(t));
            }
            let (group, col) = (j / COLS, j % COLS);
            for s in 0..stack {
                let part = t / stack + i64::from(s < t % stack);
                let idx = self.tile_index(s as usize, group);
                self.tiles[idx].program_threshold(col, part, ctx, rng)?;
            }
        }
        self.loaded = false;
        Ok(())
    }

    fn event(&mut self, kind: EventKind, row: Option<usize>, col: Option<usize>) {
        if self.record_events {
            self.trace.events.push(TraceEvent {
                cycle: self.trace.cycles,
                kind,
                row,
                col,
            });
        }
        self.trace.cycles += 1;
    }

    /// Reads every threshold row into the registers and starts a new trace.
    pub fn load_thresholds(&mut self, ctx: &mut SenseContext) -> Result<(), PipelineError> {
        self.trace = PipelineTrace::default();
        for (t, tile) in self.tiles.iter().enumerate() {
            for col in 0..COLS {
                tile.check_threshold_programmed(col)
                    .map_err(|source| PipelineError::NotProgrammed { tile: t, source })?;
            }
        }
        let mut totals = vec![0i16; self.config.fan_out()];
        for group in 0..self.config.groups() {
            for stack in 0..self.config.stack() {
                let tile = &self.tiles[self.tile_index(stack, group)];
                for col in 0..COLS {
                    totals[group * COLS + col] += i16::from(tile.read_threshold(col, ctx)?);
                }
            }
        }
        for (r, t) in self.registers.iter_mut().zip(totals) {
            *r = i8::try_from(t).expect("stacked thresholds fit the register width");
        }
        for k in 0..self.timing.threshold_load_cycles as usize {
            self.event(EventKind::ThresholdLoad, Some(THRESHOLD_BASE + k.min(THRESHOLD_ROWS - 1)), None);
        }
        self.loaded = true;
        Ok(())
    }

    /// Presents input `row` with activation `x`; each `+1` sense output
    /// decrements its column register.
    pub fn present_input(&mut self, row: usize, x: Binary, ctx: &mut SenseContext) -> Result<(), PipelineError> {
        if !self.loaded {
            return Err(PipelineError::ThresholdsNotLoaded);
        }
        let fan_in = self.config.fan_in();
        if row >= fan_in {
            return Err(PipelineError::RowOutOfRange { row, fan_in });
        }
        let (stack, local) = (row / WEIGHT_ROWS, row % WEIGHT_ROWS);
        for group in 0..self.config.groups() {
            let tile = &self.tiles[self.tile_index(stack, group)];
            tile.accumulate_row(local, x, ctx, &mut self.registers[group * COLS..(group + 1) * COLS])?;
        }
        self.event(EventKind::InputRow, Some(row), None);
        Ok(())
    }

    /// Drains the pipeline: output is `+1` iff the register went negative.
    pub fn finish(&mut self) -> Result<(Vec<Binary>, Vec<i32>), PipelineError> {
        if !self.loaded {
            return Err(PipelineError::ThresholdsNotLoaded);
        }
        let outputs = self.registers.iter().map(|&r| Binary::from_bool(r < 0)).collect();
        let deltas = self.registers.iter().map(|&r| -i32::from(r)).collect();
        for k in 0..self.timing.drain_cycles {
            let kind = if k == 0 { EventKind::SignCopy } else { EventKind::ShiftOut };
            self.event(kind, None, None);
        }
        self.loaded = false;
        Ok((outputs, deltas))
    }

    /// Full pass: threshold load, every input row in order, drain.
    pub fn run_inference(&mut self, x: &[Binary], ctx: &mut SenseContext) -> Result<Inference, PipelineError> {
        if x.len() != self.config.fan_in() {
            return Err(PipelineError::DimensionMismatch(format!(
                "input has {} entries, engine fan-in is {}",
                x.len(),
                self.config.fan_in()
            )));
        }
        self.load_thresholds(ctx)?;
        for (row, &xi) in x.iter().enumerate() {
            self.present_input(row, xi, ctx)?;
        }
        let (outputs, deltas) = self.finish()?;
        Ok(Inference {
            outputs,
            deltas,
            trace: std::mem::take(&mut self.trace),
        })
    }
}

/// Direct evaluation: `delta_j = popcount(XNOR(W_j, X)) - T_j`, output `+1`
/// iff `delta_j > 0`.
pub fn oracle_eval(
    weights: &BinaryMatrix,
    x: &[Binary],
    thresholds: &[i64],
) -> Result<(Vec<Binary>, Vec<i32>), PipelineError> {
    if weights.cols() != x.len() || weights.rows() != thresholds.len() {
        return Err(PipelineError::DimensionMismatch(format!(
            "W is {}x{}, X has {}, T has {}",
            weights.rows(),
            weights.cols(),
            x.len(),
            thresholds.len()
        )));
    }
    let deltas: Vec<i32> = (0..weights.rows())
        .map(|j| (xnor_popcount(weights.row(j), x) as i64 - thresholds[j]) as i32)
        .collect();
    let outputs = deltas.iter().map(|&d| Binary::from_bool(d > 0)).collect();
    Ok((outputs, deltas))
}

/// Shared input plus one weight column and threshold per target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    pub x: Vec<Binary>,
    /// Row `k` is the weight vector realising `targets[k]`.
    pub weights: BinaryMatrix,
    pub thresholds: Vec<i64>,
    pub targets: Vec<i64>,
}

/// Builds weights and thresholds whose preactivation against a shared
/// random input is exactly each requested target.
///
/// The popcount is kept near the middle of the attainable range so that
/// read errors can move it in either direction.
pub fn gen_preactivation_pattern<R: Rng + ?Sized>(
    targets: &[i64],
    fan_in: usize,
    max_threshold: i64,
    rng: &mut R,
) -> Result<PatternSet, PipelineError> {
    let n = fan_in as i64;
    let x: Vec<Binary> = (0..fan_in).map(|_| Binary::from_bool(rng.random())).collect();
    let mut weights = BinaryMatrix::filled(targets.len(), fan_in, Binary::Pos);
    let mut thresholds = Vec::with_capacity(targets.len());
    let mut positions: Vec<usize> = (0..fan_in).collect();
    for (k, &target) in targets.iter().enumerate() {
        let lo = target.max(0);
        let hi = n.min(max_threshold + target);
        if target.abs() > n || lo > hi {
            return Err(PipelineError::TargetOutOfRange { target, fan_in });
        }
        let popcount = ((n + target + 1) / 2).clamp(lo, hi);
        positions.shuffle(rng);
        let row = weights.row_mut(k);
        for (rank, &i) in positions.iter().enumerate() {
            row[i] = if (rank as i64) < popcount { x[i] } else { -x[i] };
        }
        thresholds.push(popcount - target);
    }
    Ok(PatternSet {
        x,
        weights,
        thresholds,
        targets: targets.to_vec(),
    })
}

/// Parses one `+1`/`-1` vector per line (comma separated).
pub fn parse_vectors_csv(text: &str) -> Result<Vec<Vec<Binary>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<i32>()
                        .ok()
                        .and_then(Binary::from_i32)
                        .ok_or_else(|| format!("line {}: `{}` is not 1 or -1", n + 1, v.trim()))
                })
                .collect()
        })
        .collect()
}

pub fn vectors_to_csv<T: std::fmt::Display>(rows: &[Vec<T>]) -> String {
    let mut s = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}
