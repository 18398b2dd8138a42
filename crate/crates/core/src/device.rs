//! Single memristor model: forming, complementary SET/RESET programming and
//! resistance variability.
//!
//! Devices are plain values. Every operation consumes a device and returns
//! the new one; randomness enters only through the stream passed in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on every component of a programming pulse tuple.
pub const DEFAULT_PULSE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("device is already formed")]
    AlreadyFormed,
    #[error("device has not been formed")]
    NotFormed,
    #[error("illegal {kind:?} pulse: {reason}")]
    IllegalPulse { kind: PulseKind, reason: String },
    #[error("invalid variability parameters: {0}")]
    InvalidVariability(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResistanceState {
    Lrs,
    Hrs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Filament {
    state: ResistanceState,
    log_resistance: f64,
}

/// One resistive element. Unformed devices have no readable state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MemristorDevice {
    filament: Option<Filament>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseKind {
    Form,
    SetLrs,
    ResetHrs,
}

impl PulseKind {
    /// Nominal `(vddc, vddr, vdd, duration_us)` tuple of the lab protocol.
    pub fn nominal(self) -> (f64, f64, f64, f64) {
        match self {
            PulseKind::Form => (4.5, 2.7, 1.2, 10.0),
            PulseKind::SetLrs => (2.7, 2.7, 1.2, 6.0),
            PulseKind::ResetHrs => (2.7, 4.5, 1.2, 6.0),
        }
    }

    pub fn target(self) -> ResistanceState {
        match self {
            PulseKind::Form | PulseKind::SetLrs => ResistanceState::Lrs,
            PulseKind::ResetHrs => ResistanceState::Hrs,
        }
    }
}

/// Supply tuple applied to a cell during forming or programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgrammingPulse {
    pub vddc: f64,
    pub vddr: f64,
    pub vdd: f64,
    pub duration_us: f64,
    pub kind: PulseKind,
}

impl ProgrammingPulse {
    pub fn nominal(kind: PulseKind) -> Self {
        let (vddc, vddr, vdd, duration_us) = kind.nominal();
        Self {
            vddc,
            vddr,
            vdd,
            duration_us,
            kind,
        }
    }

    pub fn form() -> Self {
        Self::nominal(PulseKind::Form)
    }

    pub fn set_lrs() -> Self {
        Self::nominal(PulseKind::SetLrs)
    }

    pub fn reset_hrs() -> Self {
        Self::nominal(PulseKind::ResetHrs)
    }

    /// Pulse that drives a formed device to `state`.
    pub fn for_state(state: ResistanceState) -> Self {
        match state {
            ResistanceState::Lrs => Self::set_lrs(),
            ResistanceState::Hrs => Self::reset_hrs(),
        }
    }

    /// Checks the tuple against the nominal one of its kind.
    pub fn validate(&self, tolerance: f64) -> Result<(), DeviceError> {
        let (c, r, d, t) = self.kind.nominal();
        let illegal = |reason: String| DeviceError::IllegalPulse {
            kind: self.kind,
            reason,
        };
        if !(self.duration_us > 0.0) {
            return Err(illegal(format!("duration {} us", self.duration_us)));
        }
        let fields = [
            ("vddc", self.vddc, c),
            ("vddr", self.vddr, r),
            ("vdd", self.vdd, d),
            ("duration_us", self.duration_us, t),
        ];
        for (name, actual, nominal) in fields {
            if !(actual >= 0.0) || (actual - nominal).abs() > tolerance * nominal {
                return Err(illegal(format!("{name} = {actual}, expected {nominal}")));
            }
        }
        Ok(())
    }
}

/// Lognormal resistance spread of the two states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceVariability {
    #[serde(rename = "lrs_median_ohms")]
    pub lrs_median: f64,
    pub lrs_log_sigma: f64,
    #[serde(rename = "hrs_median_ohms")]
    pub hrs_median: f64,
    pub hrs_log_sigma: f64,
}

impl Default for DeviceVariability {
    fn default() -> Self {
        Self {
            lrs_median: 10e3,
            lrs_log_sigma: 0.3,
            hrs_median: 1e6,
            hrs_log_sigma: 0.8,
        }
    }
}

impl DeviceVariability {
    /// Same medians, no spread.
    pub fn ideal() -> Self {
        Self {
            lrs_log_sigma: 0.0,
            hrs_log_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |m: &str| Err(DeviceError::InvalidVariability(m.to_string()));
        if !(self.lrs_median > 0.0 && self.hrs_median > 0.0) {
            return bad("medians must be positive");
        }
        if !(self.lrs_log_sigma >= 0.0 && self.hrs_log_sigma >= 0.0) {
            return bad("log sigmas must be non-negative");
        }
        if !(self.lrs_median < self.hrs_median) {
            return bad("LRS median must be below HRS median");
        }
        Ok(())
    }

    fn spread(&self, state: ResistanceState) -> (f64, f64) {
        match state {
            ResistanceState::Lrs => (self.lrs_median, self.lrs_log_sigma),
            ResistanceState::Hrs => (self.hrs_median, self.hrs_log_sigma),
        }
    }
}

/// Lognormal sampler for one state, with the log-median precomputed.
#[derive(Debug, Clone, Copy)]
struct StateSampler {
    median: f64,
    log_median: f64,
    log_sigma: f64,
}

impl StateSampler {
    fn new((median, log_sigma): (f64, f64)) -> Self {
        Self {
            median,
            log_median: median.ln(),
            log_sigma,
        }
    }

    #[inline]
    fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.log_sigma == 0.0 {
            return self.log_median;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.log_median + self.log_sigma * z
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.log_sigma == 0.0 {
            return self.median;
        }
        self.sample_log(rng).exp()
    }
}

/// Everything needed to form and program devices: variability plus the
/// accepted pulse tolerance.
#[derive(Debug, Clone, Copy)]
pub struct ProgrammingContext {
    variability: DeviceVariability,
    pulse_tolerance: f64,
    set_pulse: ProgrammingPulse,
    reset_pulse: ProgrammingPulse,
    /// Indexed by `ResistanceState as usize`.
    samplers: [StateSampler; 2],
}

impl ProgrammingContext {
    pub fn new(variability: DeviceVariability, pulse_tolerance: f64) -> Result<Self, DeviceError> {
        variability.validate()?;
        Ok(Self {
            variability,
            pulse_tolerance,
            set_pulse: ProgrammingPulse::set_lrs(),
            reset_pulse: ProgrammingPulse::reset_hrs(),
            samplers: [
                StateSampler::new(variability.spread(ResistanceState::Lrs)),
                StateSampler::new(variability.spread(ResistanceState::Hrs)),
            ],
        })
    }

    pub fn with_variability(variability: DeviceVariability) -> Result<Self, DeviceError> {
        Self::new(variability, DEFAULT_PULSE_TOLERANCE)
    }

    pub fn ideal() -> Self {
        Self::with_variability(DeviceVariability::ideal()).expect("ideal variability is valid")
    }

    pub fn variability(&self) -> &DeviceVariability {
        &self.variability
    }

    pub fn pulse_tolerance(&self) -> f64 {
        self.pulse_tolerance
    }

    /// Replaces the supply tuples used for bulk SET/RESET programming.
    pub fn with_pulses(mut self, set: ProgrammingPulse, reset: ProgrammingPulse) -> Self {
        self.set_pulse = set;
        self.reset_pulse = reset;
        self
    }

    /// Pulse the context applies to reach `state`.
    pub fn pulse_for(&self, state: ResistanceState) -> &ProgrammingPulse {
        match state {
            ResistanceState::Lrs => &self.set_pulse,
            ResistanceState::Hrs => &self.reset_pulse,
        }
    }

    /// Checks both bulk programming pulses against their nominal tuples.
    pub fn validate_pulses(&self) -> Result<(), DeviceError> {
        for state in [ResistanceState::Lrs, ResistanceState::Hrs] {
            let p = self.pulse_for(state);
            if p.kind == PulseKind::Form || p.kind.target() != state {
                return Err(DeviceError::IllegalPulse {
                    kind: p.kind,
                    reason: format!("pulse does not program {state:?}"),
                });
            }
            p.validate(self.pulse_tolerance)?;
        }
        Ok(())
    }

    #[inline]
    fn draw_log<R: Rng + ?Sized>(&self, state: ResistanceState, rng: &mut R) -> f64 {
        // indexed rather than matched: random weight patterns make the
        // branch unpredictable
        self.samplers[state as usize].sample_log(rng)
    }
}

impl Default for ProgrammingContext {
    fn default() -> Self {
        Self::with_variability(DeviceVariability::default()).expect("default variability is valid")
    }
}

/// Draws a resistance (ohms) for `state`: lognormal about the state's median.
pub fn sample_resistance<R: Rng + ?Sized>(
    state: ResistanceState,
    variability: &DeviceVariability,
    rng: &mut R,
) -> f64 {
    StateSampler::new(variability.spread(state)).sample(rng)
}

impl MemristorDevice {
    pub fn unformed() -> Self {
        Self::default()
    }

    pub fn is_formed(&self) -> bool {
        self.filament.is_some()
    }

    pub fn state(&self) -> Option<ResistanceState> {
        self.filament.map(|f| f.state)
    }

    pub fn resistance(&self) -> Option<f64> {
        self.filament.map(|f| f.log_resistance.exp())
    }

    /// Natural log of the resistance.
    #[inline]
    pub fn log_resistance(&self) -> Option<f64> {
        self.filament.map(|f| f.log_resistance)
    }

    /// One-time forming. Leaves the device in LRS.
    pub fn form<R: Rng + ?Sized>(
        self,
        pulse: &ProgrammingPulse,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<Self, DeviceError> {
        if self.is_formed() {
            return Err(DeviceError::AlreadyFormed);
        }
        if pulse.kind != PulseKind::Form {
            return Err(DeviceError::IllegalPulse {
                kind: pulse.kind,
                reason: "forming requires a FORM pulse".into(),
            });
        }
        pulse.validate(ctx.pulse_tolerance)?;
        Ok(Self::with_state(ResistanceState::Lrs, ctx, rng))
    }

    /// SET (to LRS) or RESET (to HRS). The resistance is sampled once, with
    /// no verify loop.
    pub fn program<R: Rng + ?Sized>(
        self,
        target: ResistanceState,
        pulse: &ProgrammingPulse,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<Self, DeviceError> {
        if !self.is_formed() {
            return Err(DeviceError::NotFormed);
        }
        if pulse.kind == PulseKind::Form || pulse.kind.target() != target {
            return Err(DeviceError::IllegalPulse {
                kind: pulse.kind,
                reason: format!("pulse does not program {target:?}"),
            });
        }
        pulse.validate(ctx.pulse_tolerance)?;
        Ok(Self::with_state(target, ctx, rng))
    }

    #[inline]
    fn with_state<R: Rng + ?Sized>(state: ResistanceState, ctx: &ProgrammingContext, rng: &mut R) -> Self {
        let log_resistance = ctx.draw_log(state, rng);
        Self {
            filament: Some(Filament { state, log_resistance }),
        }
    }

    /// Reprograms in place without pulse checks; the caller has validated
    /// the pulse once for a whole batch.
    #[inline]
    pub(crate) fn reprogram_in_place<R: Rng + ?Sized>(
        &mut self,
        target: ResistanceState,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<(), DeviceError> {
        match &mut self.filament {
            Some(f) => {
                f.state = target;
                f.log_resistance = ctx.draw_log(target, rng);
                Ok(())
            }
            None => Err(DeviceError::NotFormed),
        }
    }

    /// Device with an explicit resistance, for tests and golden fixtures.
    pub fn with_resistance(state: ResistanceState, resistance: f64) -> Self {
        assert!(resistance > 0.0, "resistance must be positive");
        Self {
            filament: Some(Filament {
                state,
                log_resistance: resistance.ln(),
            }),
        }
    }
}

/// Free-function form of [`MemristorDevice::form`].
pub fn form_device<R: Rng + ?Sized>(
    device: MemristorDevice,
    pulse: &ProgrammingPulse,
    ctx: &ProgrammingContext,
    rng: &mut R,
) -> Result<MemristorDevice, DeviceError> {
    device.form(pulse, ctx, rng)
}

/// Free-function form of [`MemristorDevice::program`].
pub fn program_device<R: Rng + ?Sized>(
    device: MemristorDevice,
    target: ResistanceState,
    pulse: &ProgrammingPulse,
    ctx: &ProgrammingContext,
    rng: &mut R,
) -> Result<MemristorDevice, DeviceError> {
    device.program(target, pulse, ctx, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn formed(ctx: &ProgrammingContext) -> MemristorDevice {
        MemristorDevice::unformed()
            .form(&ProgrammingPulse::form(), ctx, &mut stream(1, &[]))
            .unwrap()
    }

    #[test]
    fn form_with_lab_tuple() {
        let ctx = ProgrammingContext::default();
        let d = formed(&ctx);
        assert!(d.is_formed());
        assert_eq!(d.state(), Some(ResistanceState::Lrs));
        assert!(d.resistance().unwrap() > 0.0);
    }

    #[test]
    fn second_form_errors() {
        let ctx = ProgrammingContext::default();
        let d = formed(&ctx);
        let err = d.form(&ProgrammingPulse::form(), &ctx, &mut stream(2, &[]));
        assert_eq!(err, Err(DeviceError::AlreadyFormed));
    }

    #[test]
    fn swapped_form_voltages_rejected() {
        let ctx = ProgrammingContext::default();
        let pulse = ProgrammingPulse {
            vddc: 2.7,
            vddr: 4.5,
            ..ProgrammingPulse::form()
        };
        let err = MemristorDevice::unformed().form(&pulse, &ctx, &mut stream(1, &[]));
        assert!(matches!(err, Err(DeviceError::IllegalPulse { .. })));
    }

    #[test]
    fn pulse_tolerance_window() {
        let mut p = ProgrammingPulse::form();
        p.vddc = 4.5 * 1.049;
        assert!(p.validate(0.05).is_ok());
        p.vddc = 4.5 * 1.06;
        assert!(p.validate(0.05).is_err());
        p = ProgrammingPulse::set_lrs();
        p.duration_us = 0.0;
        assert!(p.validate(0.05).is_err());
    }

    #[test]
    fn reset_to_hrs() {
        let ctx = ProgrammingContext::default();
        let d = formed(&ctx)
            .program(
                ResistanceState::Hrs,
                &ProgrammingPulse::reset_hrs(),
                &ctx,
                &mut stream(3, &[]),
            )
            .unwrap();
        assert_eq!(d.state(), Some(ResistanceState::Hrs));
    }

    #[test]
    fn program_unformed_errors() {
        let ctx = ProgrammingContext::default();
        let err = MemristorDevice::unformed().program(
            ResistanceState::Lrs,
            &ProgrammingPulse::set_lrs(),
            &ctx,
            &mut stream(3, &[]),
        );
        assert_eq!(err, Err(DeviceError::NotFormed));
    }

    #[test]
    fn pulse_kind_must_match_target() {
        let ctx = ProgrammingContext::default();
        let err = formed(&ctx).program(
            ResistanceState::Lrs,
            &ProgrammingPulse::reset_hrs(),
            &ctx,
            &mut stream(3, &[]),
        );
        assert!(matches!(err, Err(DeviceError::IllegalPulse { .. })));
    }

    #[test]
    fn zero_sigma_returns_exact_median() {
        let v = DeviceVariability::ideal();
        let mut rng = stream(5, &[]);
        assert_eq!(sample_resistance(ResistanceState::Lrs, &v, &mut rng), v.lrs_median);
        assert_eq!(sample_resistance(ResistanceState::Hrs, &v, &mut rng), v.hrs_median);
    }

    #[test]
    fn monte_carlo_median_within_two_percent() {
        let v = DeviceVariability::default();
        let mut rng = stream(11, &[]);
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| sample_resistance(ResistanceState::Lrs, &v, &mut rng))
            .collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        assert!((median / v.lrs_median - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn variability_validation() {
        assert!(DeviceVariability::default().validate().is_ok());
        let swapped = DeviceVariability {
            lrs_median: 1e6,
            hrs_median: 1e4,
            ..DeviceVariability::default()
        };
        assert!(swapped.validate().is_err());
        let neg = DeviceVariability {
            lrs_log_sigma: -0.1,
            ..DeviceVariability::default()
        };
        assert!(ProgrammingContext::with_variability(neg).is_err());
    }
}
