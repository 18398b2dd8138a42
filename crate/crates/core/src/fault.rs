//! Supply-dependent error behaviour.
//!
//! Two injection paths exist. The output-level path flips a neuron's
//! activation with a probability that depends only on the supply condition
//! and the neuron's preactivation `|Δ|`. The cell-level path widens the
//! sense amplifier's dead band (the margin threshold) so that weakly
//! programmed bit cells decode unreliably; with a frozen decode those
//! failures persist for the whole run.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binary::Binary;
use crate::rng::{derive_seed, float_key, stream};
use crate::tile::{SenseContext, Tile, WeakDecode, COLS, ROWS};

/// Upper bound on any shipped default flip probability.
pub const MAX_DEFAULT_ERROR_RATE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("dimension mismatch: {outputs} outputs, {deltas} deltas")]
    DimensionMismatch { outputs: usize, deltas: usize },
    #[error("malformed error table: {0}")]
    MalformedTable(String),
    #[error("bad condition {0:?}")]
    BadCondition(String),
    #[error("no calibrated profile covers {0}")]
    OutOfCalibratedRange(Condition),
    #[error("error table CSV line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Supply condition an error profile was measured under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Condition {
    /// Supply voltage in volts.
    Voltage(f64),
    /// Illumination in equivalent suns.
    Illumination(f64),
}

impl Condition {
    pub fn value(self) -> f64 {
        match self {
            Condition::Voltage(v) | Condition::Illumination(v) => v,
        }
    }

    pub fn same_kind(self, other: Condition) -> bool {
        matches!(
            (self, other),
            (Condition::Voltage(_), Condition::Voltage(_)) | (Condition::Illumination(_), Condition::Illumination(_))
        )
    }

    /// Stable key for seed derivation.
    pub fn key(self) -> u64 {
        match self {
            Condition::Voltage(v) => float_key(v),
            Condition::Illumination(s) => float_key(s) ^ 0x5a5a_0000_0000_0001,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Voltage(v) => write!(f, "{v}V"),
            Condition::Illumination(s) => write!(f, "{s}suns"),
        }
    }
}

impl FromStr for Condition {
    type Err = FaultError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || FaultError::BadCondition(s.to_string());
        let (num, make): (&str, fn(f64) -> Condition) = if let Some(n) = t.strip_suffix("suns") {
            (n, Condition::Illumination)
        } else if let Some(n) = t.strip_suffix("sun") {
            (n, Condition::Illumination)
        } else if let Some(n) = t.strip_suffix('V').or_else(|| t.strip_suffix('v')) {
            (n, Condition::Voltage)
        } else {
            return Err(bad());
        };
        let v: f64 = num.trim().parse().map_err(|_| bad())?;
        if !v.is_finite() || v < 0.0 {
            return Err(bad());
        }
        Ok(make(v))
    }
}

impl TryFrom<String> for Condition {
    type Error = FaultError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

/// Flip probability as a function of `|Δ|` under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    condition: Condition,
    /// `table[k]` is the probability for `|Δ| = k`; zero beyond the end.
    table: Vec<f64>,
}

impl ErrorProfile {
    /// Validates and stores `table` (trailing zeros are trimmed, keeping at
    /// least one entry).
    pub fn new(condition: Condition, mut table: Vec<f64>) -> Result<Self, FaultError> {
        if table.is_empty() {
            return Err(FaultError::MalformedTable("empty table".into()));
        }
        for (k, &p) in table.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(FaultError::MalformedTable(format!("p({k}) = {p} is not a probability")));
            }
        }
        if let Some(k) = table.windows(2).position(|w| w[1] > w[0]) {
            return Err(FaultError::MalformedTable(format!("p rises between |Δ| = {k} and {}", k + 1)));
        }
        while table.len() > 1 && table[table.len() - 1] == 0.0 {
            table.pop();
        }
        Ok(Self { condition, table })
    }

    /// Error-free profile.
    pub fn zero(condition: Condition) -> Self {
        Self {
            condition,
            table: vec![0.0],
        }
    }

    /// `p(k) = p0 * (1 - k / (cutoff + 1))`, clipped to `[0, 0.02]`.
    pub fn parametric(condition: Condition, p0: f64, cutoff: u32) -> Result<Self, FaultError> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(FaultError::MalformedTable(format!("p0 = {p0} is not a probability")));
        }
        let n = cutoff as f64 + 1.0;
        let table = (0..=cutoff)
            .map(|k| (p0 * (1.0 - k as f64 / n)).clamp(0.0, MAX_DEFAULT_ERROR_RATE))
            .collect();
        Self::new(condition, table)
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Largest `|Δ|` that can still flip. Zero for an error-free profile.
    pub fn cutoff(&self) -> u32 {
        (self.table.len() - 1) as u32
    }

    #[inline]
    pub fn prob(&self, delta: i64) -> f64 {
        self.table.get(delta.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    pub fn max_prob(&self) -> f64 {
        self.table[0]
    }

    pub fn is_error_free(&self) -> bool {
        self.table[0] == 0.0
    }
}

/// Per-neuron flip probability for preactivation `delta`.
#[inline]
pub fn neuron_error_prob(profile: &ErrorProfile, delta: i64) -> f64 {
    profile.prob(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    #[default]
    StochasticOutput,
    DeterministicWeakCell,
    Combined,
}

impl FaultMode {
    pub fn uses_output_flips(self) -> bool {
        matches!(self, FaultMode::StochasticOutput | FaultMode::Combined)
    }

    pub fn uses_weak_cells(self) -> bool {
        matches!(self, FaultMode::DeterministicWeakCell | FaultMode::Combined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FaultPolicy {
    #[serde(default)]
    pub mode: FaultMode,
    #[serde(default)]
    pub seed: u64,
}

impl FaultPolicy {
    pub fn new(mode: FaultMode, seed: u64) -> Self {
        Self { mode, seed }
    }

    /// Sensing context for a read batch under `condition`.
    ///
    /// Output-only modes sense ideally. Cell-level modes use `threshold`
    /// with a decode frozen per condition, so that every read of a weak cell
    /// under the same condition returns the same value for the whole run.
    pub fn sense_context(&self, condition: Condition, threshold: f64) -> SenseContext {
        if !self.mode.uses_weak_cells() {
            return SenseContext::ideal();
        }
        let seed = derive_seed(self.seed, &[condition.key()]);
        SenseContext::new(threshold, WeakDecode::Frozen { seed }, stream(seed, &[1]))
    }
}

/// Flips outputs in place; see [`apply_output_errors`].
pub fn apply_output_errors_in_place<R: Rng + ?Sized>(
    outputs: &mut [Binary],
    deltas: &[i32],
    profile: &ErrorProfile,
    policy: &FaultPolicy,
    rng: &mut R,
) -> Result<usize, FaultError> {
    if outputs.len() != deltas.len() {
        return Err(FaultError::DimensionMismatch {
            outputs: outputs.len(),
            deltas: deltas.len(),
        });
    }
    if !policy.mode.uses_output_flips() || profile.is_error_free() {
        return Ok(0);
    }
    let mut flips = 0;
    for (o, &d) in outputs.iter_mut().zip(deltas) {
        let p = profile.prob(d as i64);
        // no draw for neurons that cannot flip
        if p > 0.0 && rng.random_bool(p) {
            *o = -*o;
            flips += 1;
        }
    }
    Ok(flips)
}

/// Output-level fault injection. Each output flips independently with
/// probability `p(|Δ_j|)` when the policy flips outputs. The weak-cell mode
/// acts during sensing instead and leaves outputs untouched here.
pub fn apply_output_errors<R: Rng + ?Sized>(
    outputs: &[Binary],
    deltas: &[i32],
    profile: &ErrorProfile,
    policy: &FaultPolicy,
    rng: &mut R,
) -> Result<Vec<Binary>, FaultError> {
    let mut out = outputs.to_vec();
    apply_output_errors_in_place(&mut out, deltas, profile, policy, rng)?;
    Ok(out)
}

/// Sensing dead band as a function of supply and clock.
///
/// `θ(V, f) = max(0, V0 - V) * (a + c*f) + b*f`, with `f` in MHz. All
/// coefficients are non-negative, so θ never rises with V and never falls
/// with f. With `b = 0` no cell is weak at or above `V0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginLaw {
    pub v0: f64,
    pub a: f64,
    /// Per MHz, scaled by the voltage deficit.
    pub c_per_mhz: f64,
    /// Per MHz, independent of voltage.
    #[serde(default)]
    pub b_per_mhz: f64,
}

impl Default for MarginLaw {
    fn default() -> Self {
        Self {
            v0: 1.0,
            a: 5.5,
            c_per_mhz: 0.133,
            b_per_mhz: 0.0,
        }
    }
}

impl MarginLaw {
    /// The additive form `a * max(0, V0 - V) + b * f`.
    pub fn additive(v0: f64, a: f64, b_per_mhz: f64) -> Self {
        Self {
            v0,
            a,
            c_per_mhz: 0.0,
            b_per_mhz,
        }
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        let ok = [self.v0, self.a, self.c_per_mhz, self.b_per_mhz]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(FaultError::MalformedTable(format!("margin law coefficients must be non-negative: {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn threshold(&self, v: f64, f_mhz: f64) -> f64 {
        let f = f_mhz.max(0.0);
        ((self.v0 - v).max(0.0) * (self.a + self.c_per_mhz * f) + self.b_per_mhz * f).max(0.0)
    }
}

pub fn margin_threshold(law: &MarginLaw, v: f64, f_mhz: f64) -> f64 {
    law.threshold(v, f_mhz)
}

/// Cells whose `|margin|` is within `threshold`; empty for `threshold = 0`.
pub fn failing_cells_at(tile: &Tile, threshold: f64) -> BTreeSet<(usize, usize)> {
    let mut set = BTreeSet::new();
    if threshold <= 0.0 {
        return set;
    }
    for row in 0..ROWS {
        for col in 0..COLS {
            if let Some(m) = tile.cell(row, col).margin() {
                if m.abs() <= threshold {
                    set.insert((row, col));
                }
            }
        }
    }
    set
}

/// Weak cells of a programmed tile at `(v, f)`.
pub fn failing_cell_set(tile: &Tile, law: &MarginLaw, v: f64, f_mhz: f64) -> BTreeSet<(usize, usize)> {
    failing_cells_at(tile, law.threshold(v, f_mhz))
}

/// Pass/fail region of the voltage/frequency plane; points outside are
/// reported as non-functional rather than simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalEnvelope {
    pub v_min: f64,
    /// `(voltage, max frequency in MHz)`, linearly interpolated and clamped
    /// at the ends. Must be sorted by voltage.
    pub f_max: Vec<(f64, f64)>,
}

impl Default for FunctionalEnvelope {
    fn default() -> Self {
        Self {
            v_min: 0.7,
            f_max: vec![(0.7, 10.0), (0.8, 33.0), (0.9, 66.0), (1.2, 66.0)],
        }
    }
}

impl FunctionalEnvelope {
    pub fn max_frequency(&self, v: f64) -> f64 {
        let pts = &self.f_max;
        match pts.len() {
            0 => f64::INFINITY,
            _ if v <= pts[0].0 => pts[0].1,
            _ if v >= pts[pts.len() - 1].0 => pts[pts.len() - 1].1,
            _ => {
                let i = pts.iter().position(|p| p.0 >= v).unwrap_or(pts.len() - 1);
                let (v0, f0) = pts[i - 1];
                let (v1, f1) = pts[i];
                if v1 == v0 {
                    return f1;
                }
                f0 + (f1 - f0) * (v - v0) / (v1 - v0)
            }
        }
    }

    pub fn is_functional(&self, v: f64, f_mhz: f64) -> bool {
        const EPS: f64 = 1e-9;
        v + EPS >= self.v_min && f_mhz <= self.max_frequency(v) + EPS
    }
}

/// One calibration observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub condition: Condition,
    pub delta: i64,
    pub rate: f64,
}

/// Builds a profile from measurements taken under a single condition.
///
/// Rates for `+Δ` and `-Δ` are merged by taking the larger, unobserved
/// magnitudes inside the range count as zero, and the table is then
/// replaced by its non-increasing envelope `p'(k) = max_{j >= k} p(j)`.
/// The cutoff is the largest `|Δ|` with a nonzero observed rate.
pub fn calibrate_profile(measurements: &[Measurement]) -> Result<ErrorProfile, FaultError> {
    let first = measurements
        .first()
        .ok_or_else(|| FaultError::MalformedTable("no measurements".into()))?;
    let condition = first.condition;
    let mut seen = BTreeSet::new();
    for m in measurements {
        if m.condition != condition {
            return Err(FaultError::MalformedTable(format!(
                "mixed conditions {} and {}",
                condition, m.condition
            )));
        }
        if !(0.0..=1.0).contains(&m.rate) {
            return Err(FaultError::MalformedTable(format!("rate {} at Δ = {} is not a probability", m.rate, m.delta)));
        }
        if !seen.insert(m.delta) {
            return Err(FaultError::MalformedTable(format!("duplicate Δ = {} for {}", m.delta, condition)));
        }
    }
    let cutoff = measurements
        .iter()
        .filter(|m| m.rate > 0.0)
        .map(|m| m.delta.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    let mut table = vec![0.0f64; cutoff + 1];
    for m in measurements {
        let k = m.delta.unsigned_abs() as usize;
        if k <= cutoff {
            table[k] = table[k].max(m.rate);
        }
    }
    for k in (0..cutoff).rev() {
        table[k] = table[k].max(table[k + 1]);
    }
    ErrorProfile::new(condition, table)
}

/// Groups measurements by condition (first-seen order) and calibrates each.
pub fn calibrate_profiles(measurements: &[Measurement]) -> Result<ProfileSet, FaultError> {
    let mut groups: Vec<(Condition, Vec<Measurement>)> = Vec::new();
    for m in measurements {
        match groups.iter_mut().find(|(c, _)| *c == m.condition) {
            Some((_, g)) => g.push(*m),
            None => groups.push((m.condition, vec![*m])),
        }
    }
    let profiles = groups
        .iter()
        .map(|(_, g)| calibrate_profile(g))
        .collect::<Result<Vec<_>, _>>()?;
    ProfileSet::new(profiles)
}

pub const TABLE_CSV_HEADER: &str = "condition,delta,error_rate";

pub fn parse_measurements_csv(text: &str) -> Result<Vec<Measurement>, FaultError> {
    let mut out = Vec::new();
    let mut header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| FaultError::Parse { line: i + 1, msg };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header {
            if line.replace(' ', "") != TABLE_CSV_HEADER {
                return Err(err(format!("expected header {TABLE_CSV_HEADER:?}")));
            }
            header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        }
        let condition = fields[0].parse().map_err(|e: FaultError| err(e.to_string()))?;
        let delta = fields[1].parse().map_err(|_| err(format!("bad delta {:?}", fields[1])))?;
        let rate: f64 = fields[2].parse().map_err(|_| err(format!("bad rate {:?}", fields[2])))?;
        if !(0.0..=1.0).contains(&rate) {
            return Err(FaultError::MalformedTable(format!("line {}: rate {rate} is not a probability", i + 1)));
        }
        out.push(Measurement { condition, delta, rate });
    }
    if !header {
        return Err(FaultError::Parse {
            line: 0,
            msg: "missing header".into(),
        });
    }
    Ok(out)
}

/// Writes each profile as rows `Δ = 0..=cutoff`; reading the result back
/// through [`calibrate_profiles`] reproduces the profiles.
pub fn profiles_to_csv(profiles: &[ErrorProfile]) -> String {
    let mut s = format!("{TABLE_CSV_HEADER}\n");
    for p in profiles {
        for (k, rate) in p.table.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", p.condition, k, rate));
        }
    }
    s
}

/// A collection of profiles, at most one per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<ErrorProfile>,
}

impl ProfileSet {
    pub fn new(profiles: Vec<ErrorProfile>) -> Result<Self, FaultError> {
        for (i, p) in profiles.iter().enumerate() {
            if profiles[..i].iter().any(|q| q.condition == p.condition) {
                return Err(FaultError::MalformedTable(format!("duplicate condition {}", p.condition)));
            }
        }
        Ok(Self { profiles })
    }

    /// Default supply-voltage profiles: error-free at 1.0 V and above,
    /// `(p0, cutoff) = (0.02, 5)` below.
    pub fn default_voltage() -> Self {
        let mut v = Vec::new();
        for volts in [1.2, 1.1, 1.0] {
            v.push(ErrorProfile::zero(Condition::Voltage(volts)));
        }
        for volts in [0.9, 0.8, 0.7] {
            v.push(ErrorProfile::parametric(Condition::Voltage(volts), 0.02, 5).expect("valid default"));
        }
        Self { profiles: v }
    }

    /// Default illumination profiles.
    pub fn default_illumination() -> Self {
        let params = [(8.0, 0.005, 1), (0.8, 0.01, 3), (0.36, 0.012, 3), (0.08, 0.02, 5)];
        let profiles = params
            .iter()
            .map(|&(s, p0, c)| ErrorProfile::parametric(Condition::Illumination(s), p0, c).expect("valid default"))
            .collect();
        Self { profiles }
    }

    /// Every shipped default.
    pub fn defaults() -> Self {
        let mut p = Self::default_voltage().profiles;
        p.extend(Self::default_illumination().profiles);
        Self { profiles: p }
    }

    /// Optional calibration for residual high-voltage errors, confined to
    /// `|Δ| <= 1`. Not part of the defaults.
    pub fn high_voltage_residual() -> ErrorProfile {
        ErrorProfile::parametric(Condition::Voltage(1.2), 0.005, 1).expect("valid profile")
    }

    pub fn profiles(&self) -> &[ErrorProfile] {
        &self.profiles
    }

    /// Adds `profile`, replacing any with the same condition.
    pub fn insert(&mut self, profile: ErrorProfile) {
        match self.profiles.iter_mut().find(|p| p.condition == profile.condition) {
            Some(slot) => *slot = profile,
            None => self.profiles.push(profile),
        }
    }

    pub fn get(&self, condition: Condition) -> Option<&ErrorProfile> {
        self.profiles.iter().find(|p| p.condition == condition)
    }

    /// Exact match first, otherwise the nearest profile of the same kind in
    /// log space, provided `condition` lies within the calibrated range.
    pub fn resolve(&self, condition: Condition) -> Result<&ErrorProfile, FaultError> {
        const EPS: f64 = 1e-9;
        let same: Vec<&ErrorProfile> = self.profiles.iter().filter(|p| p.condition.same_kind(condition)).collect();
        let x = condition.value();
        if let Some(p) = same.iter().find(|p| (p.condition.value() - x).abs() <= EPS) {
            return Ok(p);
        }
        let lo = same.iter().map(|p| p.condition.value()).fold(f64::INFINITY, f64::min);
        let hi = same.iter().map(|p| p.condition.value()).fold(f64::NEG_INFINITY, f64::max);
        if same.is_empty() || x <= 0.0 || x < lo - EPS || x > hi + EPS {
            return Err(FaultError::OutOfCalibratedRange(condition));
        }
        let dist = |p: &&ErrorProfile| (p.condition.value().ln() - x.ln()).abs();
        let best = same
            .iter()
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .expect("non-empty");
        log::warn!("no profile for {condition}; using nearest {}", best.condition);
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceVariability, ProgrammingContext};
    use crate::rng::stream;
    use crate::tile::WEIGHT_ROWS;

    fn v(x: f64) -> Condition {
        Condition::Voltage(x)
    }

    #[test]
    fn default_profile_examples() {
        let set = ProfileSet::defaults();
        assert_eq!(neuron_error_prob(set.get(v(1.2)).unwrap(), 2), 0.0);
        for d in -20..=20 {
            assert_eq!(neuron_error_prob(set.get(v(1.0)).unwrap(), d), 0.0);
        }
        for p in set.profiles() {
            assert_eq!(p.prob(6), 0.0);
            assert_eq!(p.prob(-6), 0.0);
            assert!(p.max_prob() <= MAX_DEFAULT_ERROR_RATE);
            assert!(p.cutoff() <= 5);
        }
        let p = set.get(v(0.9)).unwrap();
        assert_eq!(p.cutoff(), 5);
        assert_eq!(p.prob(0), 0.02);
        assert!((p.prob(-3) - 0.02 * (1.0 - 3.0 / 6.0)).abs() < 1e-15);
        let r = ProfileSet::high_voltage_residual();
        assert_eq!(r.cutoff(), 1);
        assert_eq!(r.prob(2), 0.0);
    }

    #[test]
    fn profile_validation() {
        assert!(ErrorProfile::new(v(1.0), vec![]).is_err());
        assert!(ErrorProfile::new(v(1.0), vec![1.5]).is_err());
        assert!(ErrorProfile::new(v(1.0), vec![f64::NAN]).is_err());
        assert!(ErrorProfile::new(v(1.0), vec![0.01, 0.02]).is_err());
        let p = ErrorProfile::new(v(1.0), vec![0.01, 0.0, 0.0]).unwrap();
        assert_eq!(p.cutoff(), 0);
    }

    #[test]
    fn output_errors_trivial_cases() {
        let pol = FaultPolicy::new(FaultMode::StochasticOutput, 0);
        let p = ErrorProfile::parametric(v(0.9), 0.02, 5).unwrap();
        let outs = vec![Binary::Pos; 8];
        let deltas = vec![6, -7, 10, 100, -6, 9, 8, 50];
        let mut rng = stream(1, &[]);
        assert_eq!(apply_output_errors(&outs, &deltas, &p, &pol, &mut rng).unwrap(), outs);

        let certain = ErrorProfile::new(v(0.5), vec![1.0]).unwrap();
        let got = apply_output_errors(&[Binary::Pos, Binary::Neg], &[0, 1], &certain, &pol, &mut rng).unwrap();
        assert_eq!(got, vec![Binary::Neg, Binary::Neg]);

        let weak = FaultPolicy::new(FaultMode::DeterministicWeakCell, 0);
        let got = apply_output_errors(&[Binary::Pos], &[0], &certain, &weak, &mut rng).unwrap();
        assert_eq!(got, vec![Binary::Pos]);

        assert_eq!(
            apply_output_errors(&[Binary::Pos], &[0, 1], &certain, &pol, &mut rng),
            Err(FaultError::DimensionMismatch { outputs: 1, deltas: 2 })
        );
    }

    #[test]
    fn flip_rate_matches_probability() {
        let pol = FaultPolicy::default();
        let p = ErrorProfile::new(v(0.9), vec![0.02]).unwrap();
        let mut rng = stream(42, &[]);
        let mut outs = vec![Binary::Pos; 100_000];
        let deltas = vec![0; outs.len()];
        let flips = apply_output_errors_in_place(&mut outs, &deltas, &p, &pol, &mut rng).unwrap();
        let rate = flips as f64 / 1e5;
        assert!((rate - 0.02).abs() <= 0.002, "rate {rate}");
    }

    #[test]
    fn margin_law_monotone() {
        let law = MarginLaw::default();
        assert!(law.threshold(1.2, 33.0) <= law.threshold(0.9, 33.0));
        assert!(law.threshold(0.9, 33.0) <= law.threshold(0.9, 66.0));
        assert_eq!(law.threshold(1.0, 66.0), 0.0);
        assert_eq!(law.threshold(1.2, 66.0), 0.0);
        let add = MarginLaw::additive(1.0, 2.0, 0.01);
        assert!((add.threshold(0.9, 10.0) - (0.2 + 0.1)).abs() < 1e-12);
        assert!(MarginLaw { a: -1.0, ..law }.validate().is_err());
    }

    #[test]
    fn failing_cells_nest() {
        let ctx = ProgrammingContext::with_variability(DeviceVariability::default()).unwrap();
        let mut rng = stream(3, &[]);
        let mut tile = Tile::formed(0, &ctx, &mut rng).unwrap();
        for r in 0..WEIGHT_ROWS {
            for c in 0..COLS {
                tile.program_weight(r, c, Binary::from_bool(rng.random()), &ctx, &mut rng).unwrap();
            }
        }
        for c in 0..COLS {
            tile.program_threshold(c, rng.random_range(0..64), &ctx, &mut rng).unwrap();
        }
        assert!(failing_cells_at(&tile, 0.0).is_empty());
        // a law loose enough to catch something
        let law = MarginLaw::additive(1.0, 20.0, 0.0);
        let a = failing_cell_set(&tile, &law, 0.9, 33.0);
        let b = failing_cell_set(&tile, &law, 0.7, 33.0);
        assert!(!b.is_empty());
        assert!(a.is_subset(&b));
        let law = MarginLaw::default();
        assert!(failing_cell_set(&tile, &law, 0.7, 33.0).is_subset(&failing_cell_set(&tile, &law, 0.7, 66.0)));
        assert!(failing_cell_set(&tile, &law, 1.0, 66.0).is_empty());
    }

    #[test]
    fn calibration_examples() {
        let m = |d: i64, r: f64| Measurement {
            condition: v(0.8),
            delta: d,
            rate: r,
        };
        let p = calibrate_profile(&[m(0, 0.0), m(3, 0.0), m(-2, 0.0)]).unwrap();
        assert_eq!(p.cutoff(), 0);
        assert_eq!(p.table(), &[0.0]);

        let p = calibrate_profile(&[m(0, 0.02), m(1, 0.01), m(5, 0.001), m(6, 0.0)]).unwrap();
        assert_eq!(p.cutoff(), 5);
        assert_eq!(p.prob(4), 0.001);

        let p = calibrate_profile(&[m(0, 0.01), m(1, 0.02)]).unwrap();
        assert_eq!(p.table(), &[0.02, 0.02]);

        let p = calibrate_profile(&[m(-1, 0.03), m(1, 0.01), m(0, 0.0)]).unwrap();
        assert_eq!(p.table(), &[0.03, 0.03]);

        assert!(calibrate_profile(&[]).is_err());
        assert!(calibrate_profile(&[m(0, 1.2)]).is_err());
        assert!(calibrate_profile(&[m(0, 0.1), m(0, 0.2)]).is_err());
        let other = Measurement {
            condition: v(0.9),
            delta: 1,
            rate: 0.0,
        };
        assert!(calibrate_profile(&[m(0, 0.1), other]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let set = ProfileSet::defaults();
        let text = profiles_to_csv(set.profiles());
        assert!(text.starts_with("condition,delta,error_rate\n"));
        let back = calibrate_profiles(&parse_measurements_csv(&text).unwrap()).unwrap();
        assert_eq!(back, set);
        assert!(parse_measurements_csv("condition,delta,error_rate\n0.9V,0,2\n").is_err());
        assert!(parse_measurements_csv("a,b,c\n").is_err());
        assert!(parse_measurements_csv("condition,delta,error_rate\n0.9X,0,0.1\n").is_err());
    }

    #[test]
    fn condition_text() {
        for c in [v(0.9), v(1.2), Condition::Illumination(0.08), Condition::Illumination(8.0)] {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert_eq!("8suns".parse::<Condition>().unwrap(), Condition::Illumination(8.0));
        assert_eq!(" 0.7 V".parse::<Condition>().unwrap(), v(0.7));
        assert!("-1V".parse::<Condition>().is_err());
        assert_ne!(v(1.0).key(), Condition::Illumination(1.0).key());
    }

    #[test]
    fn resolution() {
        let set = ProfileSet::defaults();
        assert_eq!(set.resolve(v(0.9)).unwrap().condition(), v(0.9));
        assert_eq!(set.resolve(v(0.91)).unwrap().condition(), v(0.9));
        assert_eq!(
            set.resolve(Condition::Illumination(0.3)).unwrap().condition(),
            Condition::Illumination(0.36)
        );
        assert!(set.resolve(v(1.3)).is_err());
        assert!(set.resolve(Condition::Illumination(0.0)).is_err());
        assert!(set.resolve(Condition::Illumination(10.0)).is_err());
    }

    #[test]
    fn envelope() {
        let e = FunctionalEnvelope::default();
        assert!(e.is_functional(0.7, 10.0));
        assert!(!e.is_functional(0.7, 33.0));
        assert!(!e.is_functional(0.6, 1.0));
        assert!(e.is_functional(0.9, 66.0));
        assert!(e.is_functional(1.2, 66.0));
        assert!(!e.is_functional(1.2, 100.0));
        assert!((e.max_frequency(0.75) - 21.5).abs() < 1e-9);
    }

    #[test]
    fn weak_cell_context_is_frozen_per_condition() {
        let pol = FaultPolicy::new(FaultMode::DeterministicWeakCell, 9);
        let a = pol.sense_context(v(0.9), 0.5);
        let b = pol.sense_context(v(0.9), 0.5);
        assert_eq!(a.decode(), b.decode());
        assert_ne!(a.decode(), pol.sense_context(v(0.8), 0.5).decode());
        assert_eq!(FaultPolicy::default().sense_context(v(0.8), 0.5).margin_threshold(), 0.0);
    }
}
