//! Single-diode solar cell, chip load, and their intersection.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PowerError;

const BOLTZMANN: f64 = 1.380_649e-23;
const CHARGE: f64 = 1.602_176_634e-19;

/// Relative tolerance of the implicit current solve.
pub const IV_REL_TOL: f64 = 1e-9;
/// Voltage tolerance of the operating-point bisection.
pub const OP_TOL_V: f64 = 1e-6;
const MAX_ITER: usize = 400;

/// Five-parameter single-diode model of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolarCellModel {
    /// Photocurrent at one sun, A.
    pub i_ph_1sun: f64,
    /// Diode saturation current, A.
    pub i_0: f64,
    /// Ideality factor.
    pub n: f64,
    pub r_s: f64,
    pub r_sh: f64,
    pub temperature_k: f64,
    pub area_cm2: f64,
}

impl Default for SolarCellModel {
    fn default() -> Self {
        Self {
            i_ph_1sun: 3.5e-3,
            i_0: 9.26e-14,
            n: 1.8,
            r_s: 2.0,
            r_sh: 20e3,
            temperature_k: 300.0,
            area_cm2: 0.25,
        }
    }
}

impl SolarCellModel {
    pub fn validate(&self) -> Result<(), PowerError> {
        let pos = [self.i_ph_1sun, self.i_0, self.n, self.r_sh, self.temperature_k, self.area_cm2];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.r_s.is_finite() && self.r_s >= 0.0) {
            return Err(PowerError::InvalidParameter(format!("solar cell parameters must be positive: {self:?}")));
        }
        if self.r_sh <= 10.0 * self.r_s {
            return Err(PowerError::InvalidParameter("shunt resistance must dominate series resistance".into()));
        }
        Ok(())
    }

    pub fn thermal_voltage(&self) -> f64 {
        BOLTZMANN * self.temperature_k / CHARGE
    }

    fn n_vt(&self) -> f64 {
        self.n * self.thermal_voltage()
    }

    /// Residual `F(I) = I - I_pv(I)`; strictly increasing in `I`.
    fn residual(&self, v: f64, suns: f64, i: f64) -> (f64, f64) {
        let nvt = self.n_vt();
        let vd = v + i * self.r_s;
        let e = (vd / nvt).exp();
        let f = i - (suns * self.i_ph_1sun - self.i_0 * (e - 1.0) - vd / self.r_sh);
        let df = 1.0 + self.i_0 * e * self.r_s / nvt + self.r_s / self.r_sh;
        (f, df)
    }

    /// Terminal current at voltage `v` under `suns`.
    pub fn iv_current(&self, v: f64, suns: f64) -> Result<f64, PowerError> {
        let iph = suns * self.i_ph_1sun;
        if self.r_s == 0.0 {
            let e = (v / self.n_vt()).exp();
            return Ok(iph - self.i_0 * (e - 1.0) - v / self.r_sh);
        }
        // F(hi) >= 0 and F(lo) <= 0 for any v >= 0
        let mut hi = iph + self.i_0;
        let mut lo = -(v.max(0.0) / self.r_s) - self.i_0;
        let mut i = hi.min(iph);
        for _ in 0..MAX_ITER {
            let (f, df) = self.residual(v, suns, i);
            if f == 0.0 {
                return Ok(i);
            }
            if f > 0.0 {
                hi = i;
            } else {
                lo = i;
            }
            let newton = i - f / df;
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let tol = IV_REL_TOL * next.abs().max(1e-12);
            if (next - i).abs() <= tol || (hi - lo) <= tol {
                return Ok(next);
            }
            i = next;
        }
        Err(PowerError::NoConvergence("terminal current"))
    }

    pub fn short_circuit_current(&self, suns: f64) -> Result<f64, PowerError> {
        self.iv_current(0.0, suns)
    }

    /// Open-circuit voltage: root of `suns*I_ph - I_0*(e^(v/nVt) - 1) - v/R_sh`.
    pub fn open_circuit_voltage(&self, suns: f64) -> Result<f64, PowerError> {
        let iph = suns * self.i_ph_1sun;
        if iph <= 0.0 {
            return Ok(0.0);
        }
        let nvt = self.n_vt();
        let g = |v: f64| iph - self.i_0 * ((v / nvt).exp() - 1.0) - v / self.r_sh;
        let (mut lo, mut hi) = (0.0, nvt * (iph / self.i_0 + 1.0).ln());
        for _ in 0..MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(PowerError::NoConvergence("open-circuit voltage"))
    }

    /// Illumination implied by a measured short-circuit current.
    pub fn equivalent_suns(&self, i_sc_measured: f64) -> Result<f64, PowerError> {
        Ok(i_sc_measured / self.short_circuit_current(1.0)?)
    }

    /// `n` evenly spaced points from 0 to Voc.
    pub fn iv_sweep(&self, suns: f64, points: usize) -> Result<Vec<(f64, f64)>, PowerError> {
        let voc = self.open_circuit_voltage(suns)?;
        let n = points.max(2);
        (0..n)
            .map(|k| {
                let v = voc * k as f64 / (n - 1) as f64;
                Ok((v, self.iv_current(v, suns)?))
            })
            .collect()
    }
}

pub fn iv_current(cell: &SolarCellModel, v: f64, suns: f64) -> Result<f64, PowerError> {
    cell.iv_current(v, suns)
}

pub fn equivalent_suns(cell: &SolarCellModel, i_sc_measured: f64) -> Result<f64, PowerError> {
    cell.equivalent_suns(i_sc_measured)
}

pub const IV_CSV_HEADER: &str = "suns,v,i";

/// Concatenated sweeps for several illuminations.
pub fn iv_sweep_csv(cell: &SolarCellModel, suns: &[f64], points: usize) -> Result<String, PowerError> {
    let mut s = format!("{IV_CSV_HEADER}\n");
    for &x in suns {
        for (v, i) in cell.iv_sweep(x, points)? {
            let _ = writeln!(s, "{x},{v:.6},{i:.6e}");
        }
    }
    Ok(s)
}

/// Average electrical load of the chip while inferring continuously.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChipLoadModel {
    /// Switched capacitance per inference, F.
    pub c_eff: f64,
    pub i_leak: f64,
    pub f_mhz: f64,
    pub cycles_per_inference: u64,
}

impl Default for ChipLoadModel {
    fn default() -> Self {
        Self {
            c_eff: super::REFERENCE_ENERGY_J / (super::REFERENCE_VOLTAGE * super::REFERENCE_VOLTAGE),
            i_leak: 1e-6,
            f_mhz: 0.5,
            cycles_per_inference: 248,
        }
    }
}

impl ChipLoadModel {
    pub fn validate(&self) -> Result<(), PowerError> {
        let ok = self.c_eff.is_finite()
            && self.c_eff >= 0.0
            && self.i_leak.is_finite()
            && self.i_leak >= 0.0
            && self.f_mhz.is_finite()
            && self.f_mhz >= 0.0
            && self.cycles_per_inference > 0;
        if !ok {
            return Err(PowerError::InvalidParameter(format!("bad chip load: {self:?}")));
        }
        Ok(())
    }

    /// `i_leak + (c_eff / cycles) * v * f`.
    pub fn current(&self, v: f64) -> f64 {
        self.i_leak + self.c_eff / self.cycles_per_inference as f64 * v * self.f_mhz * 1e6
    }

    /// Time for one inference, s.
    pub fn inference_time(&self) -> f64 {
        self.cycles_per_inference as f64 / (self.f_mhz * 1e6)
    }
}

pub fn load_current(load: &ChipLoadModel, v: f64) -> f64 {
    load.current(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub v: f64,
    pub i: f64,
}

/// Intersection of the cell's IV curve with the load line.
pub fn operating_point(cell: &SolarCellModel, load: &ChipLoadModel, suns: f64) -> Result<OperatingPoint, PowerError> {
    let voc = cell.open_circuit_voltage(suns)?;
    operating_point_in(cell, load, suns, 0.0, voc)
}

/// Same, bisecting over a caller-supplied bracket inside `[0, Voc]`.
pub fn operating_point_in(
    cell: &SolarCellModel,
    load: &ChipLoadModel,
    suns: f64,
    lo: f64,
    hi: f64,
) -> Result<OperatingPoint, PowerError> {
    let g = |v: f64| -> Result<f64, PowerError> { Ok(cell.iv_current(v, suns)? - load.current(v)) };
    let g0 = g(0.0)?;
    if g0 < 0.0 {
        return Err(PowerError::NoOperatingPoint { suns });
    }
    let (mut lo, mut hi) = (lo, hi);
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if glo < 0.0 || ghi > 0.0 {
        // at Voc the cell supplies nothing, so ghi > 0 only with a negative load
        if ghi > 0.0 && load.current(hi) == 0.0 {
            return Ok(OperatingPoint { v: hi, i: 0.0 });
        }
        return Err(PowerError::BadBracket { lo, hi });
    }
    if glo == 0.0 {
        return Ok(OperatingPoint { v: lo, i: load.current(lo) });
    }
    for _ in 0..MAX_ITER {
        if hi - lo <= OP_TOL_V {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    Ok(OperatingPoint {
        v,
        i: cell.iv_current(v, suns)?,
    })
}
