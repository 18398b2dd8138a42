//! One 8,192-memristor memory module: a 64x64 grid of 2T2R bit cells with
//! complementary programming and the XNOR-augmented precharge sense read.
//!
//! Geometry: rows `0..58` hold weights, rows `58..64` hold a 6-bit unsigned
//! threshold per column (bit `k` in row `58 + k`).

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::binary::Binary;
use crate::device::{DeviceError, MemristorDevice, ProgrammingContext, ProgrammingPulse, ResistanceState};
use crate::rng::{derive_seed, SimRng};

pub const ROWS: usize = 64;
pub const COLS: usize = 64;
pub const WEIGHT_ROWS: usize = 58;
pub const THRESHOLD_ROWS: usize = 6;
pub const THRESHOLD_BASE: usize = WEIGHT_ROWS;
pub const MAX_THRESHOLD: u8 = (1 << THRESHOLD_ROWS) - 1;
pub const MEMRISTORS_PER_TILE: usize = ROWS * COLS * 2;

const TEXT_MAGIC: &str = "bnnsim-tile 1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TileError {
    #[error("cell ({row}, {col}) is not formed")]
    NotFormed { row: usize, col: usize },
    #[error("cell ({row}, {col}) holds no complementary value")]
    NotProgrammed { row: usize, col: usize },
    #[error("row {0} is outside the weight rows 0..{WEIGHT_ROWS}")]
    RowOutOfRange(usize),
    #[error("column {0} is outside 0..{COLS}")]
    ColOutOfRange(usize),
    #[error("threshold {0} does not fit in {THRESHOLD_ROWS} bits")]
    ThresholdOutOfRange(i64),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("tile text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// How a weak cell (|margin| at or below the sensing threshold) decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakDecode {
    /// Fresh uniform draw on every read.
    PerRead,
    /// Resolved once per cell for a given seed; repeated reads agree.
    Frozen { seed: u64 },
}

/// Sensing conditions for a batch of reads.
#[derive(Debug, Clone)]
pub struct SenseContext {
    margin_threshold: f64,
    decode: WeakDecode,
    rng: SimRng,
}

impl SenseContext {
    pub fn new(margin_threshold: f64, decode: WeakDecode, rng: SimRng) -> Self {
        assert!(margin_threshold >= 0.0, "margin threshold must be non-negative");
        Self {
            margin_threshold,
            decode,
            rng,
        }
    }

    /// Margin threshold zero: every programmed cell decodes by the sign of
    /// its margin.
    pub fn ideal() -> Self {
        use rand::SeedableRng;
        Self::new(0.0, WeakDecode::PerRead, SimRng::seed_from_u64(0))
    }

    pub fn margin_threshold(&self) -> f64 {
        self.margin_threshold
    }

    pub fn decode(&self) -> WeakDecode {
        self.decode
    }

    #[inline]
    pub fn is_weak(&self, margin: f64) -> bool {
        self.margin_threshold > 0.0 && margin.abs() <= self.margin_threshold
    }

    #[inline]
    fn weak_weight(&mut self, key: u64) -> Binary {
        match self.decode {
            WeakDecode::PerRead => Binary::from_bool(self.rng.random::<bool>()),
            WeakDecode::Frozen { seed } => Binary::from_bool(derive_seed(seed, &[key]) & 1 == 1),
        }
    }
}

/// Two memristors storing one binary value as a complementary pair.
///
/// Encoding: `+1` is left LRS / right HRS, `-1` is left HRS / right LRS.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BitCell {
    pub left: MemristorDevice,
    pub right: MemristorDevice,
}

impl BitCell {
    pub fn new(left: MemristorDevice, right: MemristorDevice) -> Self {
        Self { left, right }
    }

    /// `ln(R_right) - ln(R_left)`; positive for a healthy `+1` cell.
    #[inline]
    pub fn margin(&self) -> Option<f64> {
        Some(self.right.log_resistance()? - self.left.log_resistance()?)
    }

    pub fn is_formed(&self) -> bool {
        self.left.is_formed() && self.right.is_formed()
    }

    /// Exactly one device LRS and the other HRS.
    pub fn is_complementary(&self) -> bool {
        matches!(
            (self.left.state(), self.right.state()),
            (Some(ResistanceState::Lrs), Some(ResistanceState::Hrs))
                | (Some(ResistanceState::Hrs), Some(ResistanceState::Lrs))
        )
    }

    /// The value the cell was programmed to, from device states alone.
    pub fn stored_value(&self) -> Option<Binary> {
        match (self.left.state()?, self.right.state()?) {
            (ResistanceState::Lrs, ResistanceState::Hrs) => Some(Binary::Pos),
            (ResistanceState::Hrs, ResistanceState::Lrs) => Some(Binary::Neg),
            _ => None,
        }
    }

    /// XNOR-augmented differential read: returns `XNOR(decoded weight, x)`.
    /// Never changes the devices.
    pub fn sense(&self, x: Binary, ctx: &mut SenseContext) -> Option<Binary> {
        self.sense_keyed(x, ctx, 0)
    }

    #[inline]
    fn sense_keyed(&self, x: Binary, ctx: &mut SenseContext, key: u64) -> Option<Binary> {
        let m = self.margin()?;
        let weight = if ctx.is_weak(m) {
            ctx.weak_weight(key)
        } else {
            Binary::from_bool(m > 0.0)
        };
        Some(weight.xnor(x))
    }

    fn program<R: Rng + ?Sized>(
        &mut self,
        value: Binary,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), DeviceError> {
        const PAIRS: [(ResistanceState, ResistanceState); 2] =
            [(ResistanceState::Hrs, ResistanceState::Lrs), (ResistanceState::Lrs, ResistanceState::Hrs)];
        let (l, r) = PAIRS[usize::from(value.is_pos())];
        if !(self.left.is_formed() && self.right.is_formed()) {
            return Err(DeviceError::NotFormed);
        }
        self.left.reprogram_in_place(l, ctx, rng)?;
        self.right.reprogram_in_place(r, ctx, rng)
    }
}

/// Free-function form of the sense read on a lone cell.
pub fn xpcsa_read(cell: &BitCell, x: Binary, ctx: &mut SenseContext) -> Result<Binary, TileError> {
    cell.sense(x, ctx).ok_or(TileError::NotFormed { row: 0, col: 0 })
}

/// The 64x64 module.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    id: u64,
    cells: Vec<BitCell>,
}

impl Tile {
    /// Fresh tile; every memristor unformed. `id` salts frozen weak-cell
    /// decodes so distinct tiles fail independently.
    pub fn new(id: u64) -> Self {
        Self {
            id,
            cells: vec![BitCell::default(); ROWS * COLS],
        }
    }

    /// Fresh tile with every memristor formed.
    pub fn formed<R: Rng + ?Sized>(id: u64, ctx: &ProgrammingContext, rng: &mut R) -> Result<Self, TileError> {
        let mut t = Self::new(id);
        t.form_all(&ProgrammingPulse::form(), ctx, rng)?;
        Ok(t)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Forms every device, row by row, left before right.
    pub fn form_all<R: Rng + ?Sized>(
        &mut self,
        pulse: &ProgrammingPulse,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        for cell in &mut self.cells {
            cell.left = cell.left.form(pulse, ctx, rng)?;
            cell.right = cell.right.form(pulse, ctx, rng)?;
        }
        Ok(())
    }

    #[inline]
    fn index(row: usize, col: usize) -> usize {
        row * COLS + col
    }

    pub fn cell(&self, row: usize, col: usize) -> &BitCell {
        &self.cells[Self::index(row, col)]
    }

    /// Direct cell access for fixtures (e.g. planting a weak pair).
    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut BitCell {
        &mut self.cells[Self::index(row, col)]
    }

    fn check_col(col: usize) -> Result<(), TileError> {
        if col >= COLS {
            return Err(TileError::ColOutOfRange(col));
        }
        Ok(())
    }

    fn program_cell<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        value: Binary,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        ctx.validate_pulses()?;
        self.program_cell_prevalidated(row, col, value, ctx, rng)
    }

    #[inline]
    fn program_cell_prevalidated<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        value: Binary,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        self.cells[Self::index(row, col)]
            .program(value, ctx, rng)
            .map_err(|e| match e {
                DeviceError::NotFormed => TileError::NotFormed { row, col },
                other => other.into(),
            })
    }

    /// Programs weight `w` at a weight row.
    pub fn program_weight<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        w: Binary,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        if row >= WEIGHT_ROWS {
            return Err(TileError::RowOutOfRange(row));
        }
        Self::check_col(col)?;
        self.program_cell(row, col, w, ctx, rng)
    }

    /// Programs every weight row, row by row, with `w(row, col)`. Pulses are
    /// checked once for the whole array.
    pub fn program_weights_with<R: Rng + ?Sized>(
        &mut self,
        ctx: &ProgrammingContext,
        rng: &mut R,
        mut w: impl FnMut(usize, usize) -> Binary,
    ) -> Result<(), TileError> {
        ctx.validate_pulses()?;
        for row in 0..WEIGHT_ROWS {
            for col in 0..COLS {
                self.program_cell_prevalidated(row, col, w(row, col), ctx, rng)?;
            }
        }
        Ok(())
    }

    /// Programs the 6-bit threshold of `col` into the dedicated rows.
    pub fn program_threshold<R: Rng + ?Sized>(
        &mut self,
        col: usize,
        t: i64,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        Self::check_col(col)?;
        if !(0..=MAX_THRESHOLD as i64).contains(&t) {
            return Err(TileError::ThresholdOutOfRange(t));
        }
        ctx.validate_pulses()?;
        for bit in 0..THRESHOLD_ROWS {
            let value = Binary::from_bool((t >> bit) & 1 == 1);
            self.program_cell_prevalidated(THRESHOLD_BASE + bit, col, value, ctx, rng)?;
        }
        Ok(())
    }

    /// Sense read of one cell against input `x`.
    #[inline]
    pub fn sense(&self, row: usize, col: usize, x: Binary, ctx: &mut SenseContext) -> Result<Binary, TileError> {
        let key = derive_key(self.id, row, col);
        self.cells[Self::index(row, col)]
            .sense_keyed(x, ctx, key)
            .ok_or(TileError::NotFormed { row, col })
    }

    /// Senses every column of `row` against `x`, decrementing `regs[col]`
    /// for each `+1` read.
    #[inline]
    pub fn accumulate_row(
        &self,
        row: usize,
        x: Binary,
        ctx: &mut SenseContext,
        regs: &mut [i8],
    ) -> Result<(), TileError> {
        let cells = &self.cells[Self::index(row, 0)..Self::index(row, 0) + COLS];
        if ctx.margin_threshold() == 0.0 {
            // no weak cells: every read is the sign of the margin
            for (col, (cell, reg)) in cells.iter().zip(regs.iter_mut()).enumerate() {
                let m = cell.margin().ok_or(TileError::NotFormed { row, col })?;
                *reg -= i8::from((m > 0.0) == x.is_pos());
            }
            return Ok(());
        }
        for (col, (cell, reg)) in cells.iter().zip(regs.iter_mut()).enumerate() {
            let key = derive_key(self.id, row, col);
            if cell.sense_keyed(x, ctx, key).ok_or(TileError::NotFormed { row, col })?.is_pos() {
                *reg -= 1;
            }
        }
        Ok(())
    }

    /// Reads the threshold of `col` through six sense reads with `x = +1`.
    pub fn read_threshold(&self, col: usize, ctx: &mut SenseContext) -> Result<u8, TileError> {
        Self::check_col(col)?;
        let mut t = 0u8;
        for bit in 0..THRESHOLD_ROWS {
            if self.sense(THRESHOLD_BASE + bit, col, Binary::Pos, ctx)?.is_pos() {
                t |= 1 << bit;
            }
        }
        Ok(t)
    }

    /// Fails with `NotProgrammed` if any threshold cell of `col` is not a
    /// complementary pair.
    pub fn check_threshold_programmed(&self, col: usize) -> Result<(), TileError> {
        for row in THRESHOLD_BASE..ROWS {
            let cell = self.cell(row, col);
            if !cell.is_formed() {
                return Err(TileError::NotFormed { row, col });
            }
            if !cell.is_complementary() {
                return Err(TileError::NotProgrammed { row, col });
            }
        }
        Ok(())
    }

    /// Programs a full logical image.
    pub fn program_image<R: Rng + ?Sized>(
        &mut self,
        image: &TileImage,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), TileError> {
        self.program_weights_with(ctx, rng, |row, col| image.weight(row, col))?;
        for (col, &t) in image.thresholds.iter().enumerate() {
            self.program_threshold(col, t as i64, ctx, rng)?;
        }
        Ok(())
    }

    /// Logical content as stored in device states (no sensing involved).
    pub fn stored_image(&self) -> Result<TileImage, TileError> {
        let mut image = TileImage::default();
        for row in 0..ROWS {
            for col in 0..COLS {
                let v = self
                    .cell(row, col)
                    .stored_value()
                    .ok_or(TileError::NotProgrammed { row, col })?;
                if row < WEIGHT_ROWS {
                    image.set_weight(row, col, v);
                } else if v.is_pos() {
                    image.thresholds[col] |= 1 << (row - THRESHOLD_BASE);
                }
            }
        }
        Ok(image)
    }

    /// Logical content as seen through the sense amplifiers.
    pub fn read_image(&self, ctx: &mut SenseContext) -> Result<TileImage, TileError> {
        let mut image = TileImage::default();
        for row in 0..WEIGHT_ROWS {
            for col in 0..COLS {
                image.set_weight(row, col, self.sense(row, col, Binary::Pos, ctx)?);
            }
        }
        for col in 0..COLS {
            image.thresholds[col] = self.read_threshold(col, ctx)?;
        }
        Ok(image)
    }
}

#[inline]
fn derive_key(tile: u64, row: usize, col: usize) -> u64 {
    (tile << 16) ^ ((row as u64) << 8) ^ col as u64
}

/// Logical tile content: 58x64 weights and 64 thresholds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileImage {
    weights: Vec<Binary>,
    pub thresholds: Vec<u8>,
}

impl Default for TileImage {
    fn default() -> Self {
        Self {
            weights: vec![Binary::Neg; WEIGHT_ROWS * COLS],
            thresholds: vec![0; COLS],
        }
    }
}

impl TileImage {
    pub fn weight(&self, row: usize, col: usize) -> Binary {
        self.weights[row * COLS + col]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, w: Binary) {
        self.weights[row * COLS + col] = w;
    }

    pub fn set_threshold(&mut self, col: usize, t: i64) -> Result<(), TileError> {
        if !(0..=MAX_THRESHOLD as i64).contains(&t) {
            return Err(TileError::ThresholdOutOfRange(t));
        }
        self.thresholds[col] = t as u8;
        Ok(())
    }

    /// Deterministic text form: a magic line, `weights 58 64` followed by
    /// 58 rows of 64 space-separated `1`/`-1`, then `thresholds 64` and one
    /// line of 64 integers.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(WEIGHT_ROWS * COLS * 3 + 512);
        let _ = writeln!(s, "{TEXT_MAGIC}");
        let _ = writeln!(s, "weights {WEIGHT_ROWS} {COLS}");
        for row in 0..WEIGHT_ROWS {
            let line: Vec<String> = (0..COLS).map(|c| self.weight(row, c).to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        let _ = writeln!(s, "thresholds {COLS}");
        let line: Vec<String> = self.thresholds.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TileError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: &str| TileError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (n, magic) = next("header")?;
        if magic != TEXT_MAGIC {
            return Err(err(n, "bad magic"));
        }
        let (n, dims) = next("weights header")?;
        if dims.split_whitespace().collect::<Vec<_>>() != ["weights", "58", "64"] {
            return Err(err(n, "expected `weights 58 64`"));
        }
        let mut image = TileImage::default();
        for row in 0..WEIGHT_ROWS {
            let (n, line) = next("weight row")?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != COLS {
                return Err(err(n, "expected 64 weights"));
            }
            for (col, v) in vals.into_iter().enumerate() {
                let w = v
                    .parse::<i32>()
                    .ok()
                    .and_then(Binary::from_i32)
                    .ok_or_else(|| err(n, "weights must be 1 or -1"))?;
                image.set_weight(row, col, w);
            }
        }
        let (n, th) = next("thresholds header")?;
        if th.split_whitespace().collect::<Vec<_>>() != ["thresholds", "64"] {
            return Err(err(n, "expected `thresholds 64`"));
        }
        let (n, line) = next("threshold values")?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != COLS {
            return Err(err(n, "expected 64 thresholds"));
        }
        for (col, v) in vals.into_iter().enumerate() {
            let t: i64 = v.parse().map_err(|_| err(n, "threshold is not an integer"))?;
            image.set_threshold(col, t)?;
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing content"));
        }
        Ok(image)
    }
}
