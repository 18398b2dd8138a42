//! Solar supply, chip load and energy accounting.
//!
//! Energy per inference follows `E = C * V^2` pinned at 45 nJ for 0.7 V and
//! does not depend on the clock. Efficiency counts operations per bit-cell
//! read against the part of the energy left after removing the control
//! logic.

mod solar;

pub use solar::{
    equivalent_suns, iv_current, iv_sweep_csv, load_current, operating_point, operating_point_in, ChipLoadModel,
    OperatingPoint, SolarCellModel, IV_CSV_HEADER, IV_REL_TOL, OP_TOL_V,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tile::{COLS, WEIGHT_ROWS};

pub const REFERENCE_ENERGY_J: f64 = 45e-9;
pub const REFERENCE_VOLTAGE: f64 = 0.7;

/// Published efficiency with clock gating and an optimized read. Reported
/// as a number only; nothing here computes it.
pub const REPORTED_OPTIMIZED_TOPS_W: f64 = 22.5;
/// Published projection for a 28 nm clock-gated design; reported only.
pub const REPORTED_28NM_TOPS_W: f64 = 397.0;
/// Published efficiency with the control logic excluded.
pub const REPORTED_TOPS_W: f64 = 2.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("solver did not converge: {0}")]
    NoConvergence(&'static str),
    #[error("no operating point at {suns} suns: the load exceeds the cell's supply (brown-out)")]
    NoOperatingPoint { suns: f64 },
    #[error("bracket [{lo}, {hi}] does not contain the operating point")]
    BadBracket { lo: f64, hi: f64 },
    #[error("configured energy fractions sum to {0}, more than 1")]
    FractionOverflow(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `E(v) = E_ref * (v / v_ref)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyModel {
    pub e_ref_j: f64,
    pub v_ref: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            e_ref_j: REFERENCE_ENERGY_J,
            v_ref: REFERENCE_VOLTAGE,
        }
    }
}

impl EnergyModel {
    #[inline]
    pub fn energy(&self, v: f64) -> f64 {
        let r = v / self.v_ref;
        self.e_ref_j * r * r
    }

    /// The clock frequency is accepted and ignored.
    pub fn energy_at(&self, v: f64, _f_mhz: f64) -> f64 {
        self.energy(v)
    }

    /// Effective switched capacitance implied by the reference point.
    pub fn c_eff(&self) -> f64 {
        self.e_ref_j / (self.v_ref * self.v_ref)
    }
}

/// Energy per inference with the default model.
pub fn energy_per_inference(v: f64) -> f64 {
    EnergyModel::default().energy(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnergyComponent {
    Control,
    Clock,
    Registers,
    Mac,
    Other,
}

impl EnergyComponent {
    pub const ALL: [EnergyComponent; 5] = [
        EnergyComponent::Control,
        EnergyComponent::Clock,
        EnergyComponent::Registers,
        EnergyComponent::Mac,
        EnergyComponent::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyComponent::Control => "control",
            EnergyComponent::Clock => "clock",
            EnergyComponent::Registers => "registers",
            EnergyComponent::Mac => "mac",
            EnergyComponent::Other => "other",
        }
    }
}

/// Configured shares; control takes whatever is left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyFractions {
    pub clock: f64,
    pub registers: f64,
    pub mac: f64,
    pub other: f64,
}

impl Default for EnergyFractions {
    fn default() -> Self {
        Self {
            clock: 0.052,
            registers: 0.160,
            mac: 0.065,
            other: 0.0,
        }
    }
}

/// Totals and per-component fractions of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total_j: f64,
    /// In [`EnergyComponent::ALL`] order.
    pub fractions: [f64; 5],
    pub tops_per_watt: f64,
}

impl EnergyReport {
    pub fn fraction(&self, c: EnergyComponent) -> f64 {
        self.fractions[c as usize]
    }

    pub fn share_j(&self, c: EnergyComponent) -> f64 {
        self.total_j * self.fraction(c)
    }

    pub fn fraction_sum(&self) -> f64 {
        self.fractions.iter().sum()
    }
}

/// Splits `total_j` by `fractions`, control receiving the remainder.
pub fn energy_breakdown(total_j: f64, fractions: &EnergyFractions) -> Result<EnergyReport, PowerError> {
    let given = [fractions.clock, fractions.registers, fractions.mac, fractions.other];
    if given.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(PowerError::InvalidParameter(format!("fractions must be non-negative: {fractions:?}")));
    }
    let sum: f64 = given.iter().sum();
    if sum > 1.0 + 1e-12 {
        return Err(PowerError::FractionOverflow(sum));
    }
    let control = (1.0 - sum).max(0.0);
    Ok(EnergyReport {
        total_j,
        fractions: [control, fractions.clock, fractions.registers, fractions.mac, fractions.other],
        tops_per_watt: f64::NAN,
    })
}

/// Tera-operations per second per watt, i.e. `ops / energy / 1e12`.
pub fn tops_per_watt(counted_energy_j: f64, ops: u64) -> f64 {
    ops as f64 / counted_energy_j / 1e12
}

/// Operation counting convention for efficiency figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyAccounting {
    /// Operations credited per bit-cell read (multiply + accumulate).
    pub ops_per_read: u64,
    pub tiles: u64,
    pub rows: u64,
    pub cols: u64,
    /// Share of the inference energy counted against the operations once
    /// the control logic is excluded.
    pub counted_fraction: f64,
    /// Multiplier on the counted energy for a cheaper read path; 1 means
    /// no optimization.
    pub read_optimization_scale: f64,
}

impl Default for EfficiencyAccounting {
    fn default() -> Self {
        let ops = 2 * 4 * WEIGHT_ROWS as u64 * COLS as u64;
        Self {
            ops_per_read: 2,
            tiles: 4,
            rows: WEIGHT_ROWS as u64,
            cols: COLS as u64,
            counted_fraction: back_solved_counted_fraction(ops, REPORTED_TOPS_W, REFERENCE_ENERGY_J),
            read_optimization_scale: 1.0,
        }
    }
}

/// Fraction of `total_j` that yields `target_tops_w` for `ops` operations.
pub fn back_solved_counted_fraction(ops: u64, target_tops_w: f64, total_j: f64) -> f64 {
    ops as f64 / (target_tops_w * 1e12 * total_j)
}

impl EfficiencyAccounting {
    pub fn ops_per_inference(&self) -> u64 {
        self.ops_per_read * self.tiles * self.rows * self.cols
    }

    pub fn counted_energy(&self, total_j: f64) -> f64 {
        total_j * self.counted_fraction * self.read_optimization_scale
    }

    pub fn tops_per_watt(&self, total_j: f64) -> f64 {
        tops_per_watt(self.counted_energy(total_j), self.ops_per_inference())
    }
}

/// Full report at supply `v`.
pub fn energy_report(
    v: f64,
    model: &EnergyModel,
    fractions: &EnergyFractions,
    accounting: &EfficiencyAccounting,
) -> Result<EnergyReport, PowerError> {
    let total = model.energy(v);
    let mut r = energy_breakdown(total, fractions)?;
    r.tops_per_watt = accounting.tops_per_watt(total);
    Ok(r)
}
