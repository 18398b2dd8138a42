//! Pattern/schmoo, solar, accuracy and energy experiments.
//!
//! Every random choice is drawn from a stream keyed by what it belongs to
//! (pattern batch, dataset sample, condition, trial) under the base seed,
//! so results do not depend on grid order or on the worker count.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::binary::{Binary, BinaryMatrix};
use crate::fault::{apply_output_errors_in_place, Condition, ErrorProfile, FaultPolicy, ProfileSet};
use crate::mapper::{compile, BlockDeltas, BnnModel, MappedNetwork};
use crate::pipeline::{gen_preactivation_pattern, EngineConfig, LayerEngine, PipelineTrace};
use crate::power::{energy_breakdown, operating_point, EnergyComponent, PowerError};
use crate::rng::{derive_seed, float_key, stream};
use crate::tile::{SenseContext, Tile, TileImage, COLS, WEIGHT_ROWS};

use super::{Config, Dataset, HarnessError, RunCondition, SolarGrid};

const TAG_PATTERN: u64 = 0x7061_7474;
const TAG_PROGRAM: u64 = 0x7072_6f67;
const TAG_FAULT: u64 = 0x6661_756c;
const TAG_POLICY: u64 = 0x706f_6c69;

fn policy(cfg: &Config) -> FaultPolicy {
    FaultPolicy::new(cfg.fault.mode, derive_seed(cfg.experiment.base_seed, &[TAG_POLICY]))
}

/// One sensing/fault setting evaluated by the pattern bench.
#[derive(Debug, Clone)]
struct BenchCondition {
    profile: ErrorProfile,
    /// Keys the frozen weak-cell decode.
    decode: Condition,
    threshold: f64,
    /// Keys the output-flip stream.
    key: [u64; 2],
}

/// Correct/total per target Δ, in target order.
type DeltaCounts = Vec<(u64, u64)>;

fn targets(delta_max: i64) -> Vec<i64> {
    (-delta_max..=delta_max).collect()
}

/// Runs preactivation-spanning pattern batches on `engine_cfg` under each
/// condition and tallies output correctness per target Δ.
fn pattern_bench(cfg: &Config, conditions: &[BenchCondition]) -> Result<Vec<DeltaCounts>, HarnessError> {
    let e = &cfg.experiment;
    let engine_cfg = e.engine_config()?;
    let tlist = targets(e.delta_max);
    let fan_out = engine_cfg.fan_out();
    let total = tlist.len() * e.patterns_per_delta;
    let batches = total.div_ceil(fan_out);
    let prog = cfg.device.programming_context()?;
    let pol = policy(cfg);
    let base = e.base_seed;

    let per_batch: Vec<Result<Vec<DeltaCounts>, HarnessError>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let bt: Vec<i64> = (0..fan_out).map(|j| tlist[(b * fan_out + j) % tlist.len()]).collect();
            let mut prng = stream(base, &[TAG_PATTERN, b as u64]);
            let pat = gen_preactivation_pattern(&bt, engine_cfg.fan_in(), engine_cfg.max_threshold(), &mut prng)?;
            let mut grng = stream(base, &[TAG_PROGRAM, b as u64]);
            let first_id = (b * engine_cfg.tile_count()) as u64;
            let mut engine = LayerEngine::formed(engine_cfg, first_id, &prog, &mut grng)?.without_events();
            engine.program_weights(&pat.weights, &prog, &mut grng)?;
            engine.program_thresholds(&pat.thresholds, &prog, &mut grng)?;
            let mut out = Vec::with_capacity(conditions.len());
            for c in conditions {
                let mut sense = pol.sense_context(c.decode, c.threshold);
                let inf = engine.run_inference(&pat.x, &mut sense)?;
                let mut outputs = inf.outputs;
                let mut frng = stream(base, &[TAG_FAULT, b as u64, c.key[0], c.key[1]]);
                apply_output_errors_in_place(&mut outputs, &inf.deltas, &c.profile, &pol, &mut frng)?;
                let mut counts = vec![(0u64, 0u64); tlist.len()];
                for (j, o) in outputs.iter().enumerate() {
                    let k = (b * fan_out + j) % tlist.len();
                    let want = Binary::from_bool(bt[j] > 0);
                    counts[k].0 += u64::from(*o == want);
                    counts[k].1 += 1;
                }
                out.push(counts);
            }
            Ok(out)
        })
        .collect();

    let mut acc = vec![vec![(0u64, 0u64); tlist.len()]; conditions.len()];
    for r in per_batch {
        for (ci, counts) in r?.into_iter().enumerate() {
            for (k, (c, n)) in counts.into_iter().enumerate() {
                acc[ci][k].0 += c;
                acc[ci][k].1 += n;
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmooRow {
    pub voltage_v: f64,
    pub frequency_mhz: f64,
    /// `None` where the point is outside the functional envelope.
    pub accuracy_pct: Option<f64>,
    pub functional: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub voltage_v: f64,
    pub frequency_mhz: f64,
    pub delta: i64,
    pub correct: u64,
    pub n: u64,
}

impl DeltaRow {
    pub fn accuracy_pct(&self) -> f64 {
        100.0 * self.correct as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternResult {
    pub schmoo: Vec<SchmooRow>,
    pub per_delta: Vec<DeltaRow>,
}

/// Schmoo sweep over the configured voltage x frequency grid.
pub fn run_pattern_experiment(cfg: &Config) -> Result<PatternResult, HarnessError> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let profiles = cfg.fault.profile_set()?;
    let mut grid = Vec::new();
    let mut conds = Vec::new();
    for &v in &e.voltages {
        for &f in &e.frequencies_mhz {
            let functional = cfg.fault.envelope.is_functional(v, f);
            grid.push((v, f, functional));
            if functional {
                let c = Condition::Voltage(v);
                conds.push(BenchCondition {
                    profile: profiles.resolve(c)?.clone(),
                    decode: c,
                    threshold: cfg.fault.margin_law.threshold(v, f),
                    key: [float_key(v), float_key(f)],
                });
            }
        }
    }
    let counts = pattern_bench(cfg, &conds)?;
    let tlist = targets(e.delta_max);
    let mut schmoo = Vec::new();
    let mut per_delta = Vec::new();
    let mut it = counts.into_iter();
    for (v, f, functional) in grid {
        if !functional {
            schmoo.push(SchmooRow {
                voltage_v: v,
                frequency_mhz: f,
                accuracy_pct: None,
                functional,
            });
            continue;
        }
        let c = it.next().expect("one count set per functional point");
        let (ok, n) = c.iter().fold((0, 0), |a, x| (a.0 + x.0, a.1 + x.1));
        schmoo.push(SchmooRow {
            voltage_v: v,
            frequency_mhz: f,
            accuracy_pct: Some(100.0 * ok as f64 / n as f64),
            functional,
        });
        for (k, (correct, n)) in c.into_iter().enumerate() {
            per_delta.push(DeltaRow {
                voltage_v: v,
                frequency_mhz: f,
                delta: tlist[k],
                correct,
                n,
            });
        }
    }
    Ok(PatternResult { schmoo, per_delta })
}

pub const SCHMOO_CSV_HEADER: &str = "voltage_v,frequency_mhz,accuracy_pct,functional";
pub const PATTERN_CSV_HEADER: &str = "voltage_v,frequency_mhz,delta,accuracy_pct,n";
pub const SOLAR_CSV_HEADER: &str = "suns,v_operating,delta,accuracy_pct";
pub const ACCURACY_CSV_HEADER: &str = "condition,accuracy_pct,ci_low_pct,ci_high_pct,n_samples,trials,seed";

pub fn schmoo_csv(rows: &[SchmooRow]) -> String {
    let mut s = format!("{SCHMOO_CSV_HEADER}\n");
    for r in rows {
        let acc = r.accuracy_pct.map(|a| format!("{a:.4}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.voltage_v, r.frequency_mhz, acc, r.functional);
    }
    s
}

pub fn pattern_csv(rows: &[DeltaRow]) -> String {
    let mut s = format!("{PATTERN_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{}",
            r.voltage_v,
            r.frequency_mhz,
            r.delta,
            r.accuracy_pct(),
            r.n
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolarRow {
    /// No operating point, or one below the functional envelope.
    BrownOut { suns: f64 },
    Point {
        /// `None` for lab-supply rows.
        suns: Option<f64>,
        v_operating: f64,
        delta: i64,
        correct: u64,
        n: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolarResult {
    pub rows: Vec<SolarRow>,
    /// `(suns, v, i)` for every powered illumination.
    pub operating_points: Vec<(f64, f64, f64)>,
    pub iv_csv: String,
}

impl SolarResult {
    pub fn brown_out_only(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| matches!(r, SolarRow::BrownOut { .. }))
    }
}

/// Illumination profile if one covers `suns`, else the voltage profile
/// nearest the operating voltage.
fn solar_profile(profiles: &ProfileSet, suns: f64, v: f64) -> Result<ErrorProfile, HarnessError> {
    match profiles.resolve(Condition::Illumination(suns)) {
        Ok(p) => Ok(p.clone()),
        Err(_) => Ok(profiles.resolve(Condition::Voltage(v))?.clone()),
    }
}

pub fn run_solar_sweep(cfg: &Config) -> Result<SolarResult, HarnessError> {
    cfg.validate()?;
    let profiles = cfg.fault.profile_set()?;
    let law = &cfg.fault.margin_law;
    let f = cfg.load.f_mhz;
    // (suns, v) per grid entry; `None` entries are brown-outs
    let mut points: Vec<(Option<f64>, Option<f64>)> = Vec::new();
    let mut conds = Vec::new();
    let mut ops = Vec::new();
    let mut curves = Vec::new();
    match cfg.experiment.solar_grid()? {
        SolarGrid::Suns(grid) => {
            for &s in &grid {
                match operating_point(&cfg.solar, &cfg.load, s) {
                    Ok(op) if cfg.fault.envelope.is_functional(op.v, f) => {
                        ops.push((s, op.v, op.i));
                        let c = Condition::Illumination(s);
                        conds.push(BenchCondition {
                            profile: solar_profile(&profiles, s, op.v)?,
                            decode: c,
                            threshold: law.threshold(op.v, f),
                            key: [c.key(), float_key(f)],
                        });
                        points.push((Some(s), Some(op.v)));
                    }
                    Ok(op) => {
                        ops.push((s, op.v, op.i));
                        points.push((Some(s), None));
                    }
                    Err(PowerError::NoOperatingPoint { .. }) => points.push((Some(s), None)),
                    Err(e) => return Err(e.into()),
                }
                if s > 0.0 {
                    curves.push(s);
                }
            }
        }
        SolarGrid::SupplyVoltage(grid) => {
            for &v in &grid {
                let c = Condition::Voltage(v);
                conds.push(BenchCondition {
                    profile: profiles.resolve(c)?.clone(),
                    decode: c,
                    threshold: law.threshold(v, f),
                    key: [c.key(), float_key(f)],
                });
                points.push((None, Some(v)));
            }
        }
    }
    let counts = pattern_bench(cfg, &conds)?;
    let tlist = targets(cfg.experiment.delta_max);
    let mut rows = Vec::new();
    let mut it = counts.into_iter();
    for (suns, v) in points {
        match v {
            None => rows.push(SolarRow::BrownOut {
                suns: suns.unwrap_or(0.0),
            }),
            Some(v) => {
                for (k, (correct, n)) in it.next().expect("counts per condition").into_iter().enumerate() {
                    rows.push(SolarRow::Point {
                        suns,
                        v_operating: v,
                        delta: tlist[k],
                        correct,
                        n,
                    });
                }
            }
        }
    }
    let iv_csv = crate::power::iv_sweep_csv(&cfg.solar, &curves, cfg.experiment.iv_points)?;
    Ok(SolarResult {
        rows,
        operating_points: ops,
        iv_csv,
    })
}

pub fn solar_csv(rows: &[SolarRow]) -> String {
    let mut s = format!("{SOLAR_CSV_HEADER}\n");
    for r in rows {
        match r {
            SolarRow::BrownOut { suns } => {
                let _ = writeln!(s, "{suns},NF,,");
            }
            SolarRow::Point {
                suns,
                v_operating,
                delta,
                correct,
                n,
            } => {
                let sn = suns.map(|x| x.to_string()).unwrap_or_default();
                let acc = 100.0 * *correct as f64 / *n as f64;
                let _ = writeln!(s, "{sn},{v_operating:.6},{delta},{acc:.4}");
            }
        }
    }
    s
}

pub fn operating_points_csv(ops: &[(f64, f64, f64)]) -> String {
    let mut s = format!("{}\n", crate::power::IV_CSV_HEADER);
    for (x, v, i) in ops {
        let _ = writeln!(s, "{x},{v:.6},{i:.6e}");
    }
    s
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub condition: String,
    /// `None` when the condition browns out the chip.
    pub accuracy_pct: Option<f64>,
    pub ci_low_pct: f64,
    pub ci_high_pct: f64,
    pub n_samples: usize,
    pub trials: u32,
    pub seed: u64,
    /// Accuracy (%) of each trial.
    pub per_trial: Vec<f64>,
}

impl AccuracyRow {
    pub fn ci_mid_pct(&self) -> f64 {
        0.5 * (self.ci_low_pct + self.ci_high_pct)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyResult {
    pub rows: Vec<AccuracyRow>,
}

pub fn load_model(path: &Path) -> Result<BnnModel, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Model(format!("{}: {e}", path.display())))?;
    BnnModel::from_text(&text).map_err(|e| HarnessError::Model(format!("{}: {e}", path.display())))
}

/// Applies the model's input rule to every image.
pub fn binarize_dataset(model: &BnnModel, data: &Dataset) -> Result<Vec<Vec<Binary>>, HarnessError> {
    let want = model.input_len();
    let got = model.input.output_len(data.cols, data.rows);
    if want != got {
        return Err(HarnessError::Model(format!(
            "model expects {want} inputs, {}x{} images pooled by {} give {got}",
            data.rows, data.cols, model.input.pool
        )));
    }
    Ok((0..data.len())
        .map(|i| model.input.apply(data.image(i), data.cols, data.rows))
        .collect())
}

struct AccCondition {
    label: String,
    key: u64,
    /// `None` on brown-out.
    setting: Option<(ErrorProfile, Condition, f64)>,
}

fn accuracy_conditions(cfg: &Config, profiles: &ProfileSet) -> Result<Vec<AccCondition>, HarnessError> {
    let law = &cfg.fault.margin_law;
    let mut out = Vec::new();
    for s in &cfg.experiment.conditions {
        let rc = RunCondition::parse(s)?;
        let setting = match rc {
            RunCondition::ErrorFree => Some((ErrorProfile::zero(Condition::Voltage(1.2)), Condition::Voltage(1.2), 0.0)),
            RunCondition::Supply(c @ Condition::Voltage(v)) => Some((
                profiles.resolve(c)?.clone(),
                c,
                law.threshold(v, cfg.experiment.frequency_mhz),
            )),
            RunCondition::Supply(c @ Condition::Illumination(suns)) => {
                match operating_point(&cfg.solar, &cfg.load, suns) {
                    Ok(op) if cfg.fault.envelope.is_functional(op.v, cfg.load.f_mhz) => Some((
                        solar_profile(profiles, suns, op.v)?,
                        c,
                        law.threshold(op.v, cfg.load.f_mhz),
                    )),
                    Ok(_) | Err(PowerError::NoOperatingPoint { .. }) => None,
                    Err(e) => return Err(e.into()),
                }
            }
        };
        out.push(AccCondition {
            label: rc.label(),
            key: rc.key(),
            setting,
        });
    }
    Ok(out)
}

/// Dataset accuracy of the mapped model under each configured condition.
pub fn run_accuracy(cfg: &Config) -> Result<AccuracyResult, HarnessError> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let need = |p: &Option<std::path::PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| HarnessError::Config(format!("accuracy runs need experiment.{what}")))
    };
    let model = load_model(&need(&e.model, "model")?)?;
    let data = super::load_idx_dataset(&need(&e.images, "images")?, &need(&e.labels, "labels")?)?.truncated(e.max_samples);
    run_accuracy_with(cfg, model, &data)
}

/// Same as [`run_accuracy`] with the model and data already loaded.
pub fn run_accuracy_with(cfg: &Config, model: BnnModel, data: &Dataset) -> Result<AccuracyResult, HarnessError> {
    let e = &cfg.experiment;
    let profiles = cfg.fault.profile_set()?;
    let conds = accuracy_conditions(cfg, &profiles)?;
    let inputs = binarize_dataset(&model, data)?;
    let plan = compile(&model)?;
    let prog = cfg.device.programming_context()?;
    let mut prng = stream(e.base_seed, &[TAG_PROGRAM]);
    let net = MappedNetwork::program(model, plan, &prog, &mut prng)?;
    let pol = policy(cfg);
    let base = e.base_seed;

    // first-layer block deltas depend only on the sensing setting
    let mut cache: Vec<((Condition, u64), Vec<Option<BlockDeltas>>)> = Vec::new();
    let sense_key = |decode: Condition, thr: f64| {
        if pol.mode.uses_weak_cells() && thr > 0.0 {
            (decode, thr.to_bits())
        } else {
            (Condition::Voltage(0.0), 0)
        }
    };
    let has_hidden = !net.plan().layers.is_empty();
    for c in &conds {
        if let Some((_, decode, thr)) = &c.setting {
            let key = sense_key(*decode, *thr);
            if has_hidden && !cache.iter().any(|(k, _)| *k == key) {
                let bd: Result<Vec<_>, HarnessError> = inputs
                    .par_iter()
                    .map_init(
                        || net.clone(),
                        |n, x| {
                            let mut sense = pol.sense_context(*decode, *thr);
                            Ok(Some(n.block_deltas(0, x, &mut sense)?))
                        },
                    )
                    .collect();
                cache.push((key, bd?));
            }
        }
    }

    let mut rows = Vec::new();
    for c in &conds {
        let Some((profile, decode, thr)) = &c.setting else {
            rows.push(AccuracyRow {
                condition: c.label.clone(),
                accuracy_pct: None,
                ci_low_pct: 0.0,
                ci_high_pct: 0.0,
                n_samples: inputs.len(),
                trials: e.trials,
                seed: base,
                per_trial: Vec::new(),
            });
            continue;
        };
        let key = sense_key(*decode, *thr);
        let cached = cache.iter().find(|(k, _)| *k == key).map(|(_, v)| v);
        let mut per_trial = Vec::with_capacity(e.trials as usize);
        let mut total_ok = 0u64;
        for t in 0..e.trials {
            let ok: Result<u64, HarnessError> = inputs
                .par_iter()
                .enumerate()
                .map_init(
                    || net.clone(),
                    |n, (i, x)| {
                        let mut rng = stream(base, &[i as u64, c.key, t as u64]);
                        let mut sense = pol.sense_context(*decode, *thr);
                        let out = match cached.and_then(|v| v[i].as_ref()) {
                            Some(bd) => n.evaluate_from_first(bd, profile, &pol, &mut sense, &mut rng)?,
                            None => n.evaluate(x, profile, &pol, &mut sense, &mut rng)?,
                        };
                        Ok(u64::from(out.class == data.labels[i] as usize))
                    },
                )
                .try_reduce(|| 0, |a, b| Ok(a + b));
            let ok = ok?;
            total_ok += ok;
            per_trial.push(100.0 * ok as f64 / inputs.len().max(1) as f64);
        }
        let n = inputs.len() as u64 * e.trials as u64;
        let (lo, hi) = wilson_interval(total_ok, n);
        rows.push(AccuracyRow {
            condition: c.label.clone(),
            accuracy_pct: Some(100.0 * total_ok as f64 / n.max(1) as f64),
            ci_low_pct: 100.0 * lo,
            ci_high_pct: 100.0 * hi,
            n_samples: inputs.len(),
            trials: e.trials,
            seed: base,
            per_trial,
        });
    }
    Ok(AccuracyResult { rows })
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut s = format!("{ACCURACY_CSV_HEADER}\n");
    for r in rows {
        match r.accuracy_pct {
            Some(a) => {
                let _ = writeln!(
                    s,
                    "{},{a:.4},{:.4},{:.4},{},{},{}",
                    r.condition, r.ci_low_pct, r.ci_high_pct, r.n_samples, r.trials, r.seed
                );
            }
            None => {
                let _ = writeln!(s, "{},NF,,,{},{},{}", r.condition, r.n_samples, r.trials, r.seed);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub voltage_v: f64,
    pub frequency_mhz: f64,
    pub energy_j: f64,
    pub tops_per_watt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyResult {
    pub rows: Vec<EnergyRow>,
    /// Breakdown at the reference voltage.
    pub breakdown: crate::power::EnergyReport,
}

pub fn run_energy(cfg: &Config) -> Result<EnergyResult, HarnessError> {
    cfg.validate()?;
    let en = &cfg.energy;
    let mut rows = Vec::new();
    for &v in &cfg.experiment.voltages {
        for &f in &cfg.experiment.frequencies_mhz {
            let e = en.model.energy_at(v, f);
            rows.push(EnergyRow {
                voltage_v: v,
                frequency_mhz: f,
                energy_j: e,
                tops_per_watt: en.accounting.tops_per_watt(e),
            });
        }
    }
    let total = en.model.energy(en.model.v_ref);
    let mut breakdown = energy_breakdown(total, &en.fractions)?;
    breakdown.tops_per_watt = en.accounting.tops_per_watt(total);
    Ok(EnergyResult { rows, breakdown })
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from("voltage_v,frequency_mhz,energy_nj,tops_per_watt\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6}",
            r.voltage_v,
            r.frequency_mhz,
            r.energy_j * 1e9,
            r.tops_per_watt
        );
    }
    s
}

pub fn energy_breakdown_csv(r: &crate::power::EnergyReport) -> String {
    let mut s = String::from("component,fraction,energy_nj\n");
    for c in EnergyComponent::ALL {
        let _ = writeln!(s, "{},{:.6},{:.6}", c.as_str(), r.fraction(c), r.share_j(c) * 1e9);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramResult {
    pub read_back: TileImage,
    /// Weight and threshold-bit cells that read back differently.
    pub weight_mismatches: usize,
    pub threshold_mismatches: usize,
}

fn tile_sense(cfg: &Config, v: f64, f: f64) -> SenseContext {
    let c = Condition::Voltage(v);
    let thr = cfg.fault.margin_law.threshold(v, f);
    let mut pol = policy(cfg);
    // programming checks always see the cell-level behaviour
    pol.mode = crate::fault::FaultMode::DeterministicWeakCell;
    pol.sense_context(c, thr)
}

/// Programs `image` onto a fresh tile and reads it back at `(v, f)`.
pub fn program_tile_image(cfg: &Config, image: &TileImage, v: f64, f: f64) -> Result<(Tile, ProgramResult), HarnessError> {
    let prog = cfg.device.programming_context()?;
    let mut rng = stream(cfg.experiment.base_seed, &[TAG_PROGRAM]);
    let mut tile = Tile::formed(0, &prog, &mut rng)?;
    tile.program_image(image, &prog, &mut rng)?;
    let mut sense = tile_sense(cfg, v, f);
    let read_back = tile.read_image(&mut sense)?;
    let mut weight_mismatches = 0;
    for r in 0..WEIGHT_ROWS {
        for c in 0..COLS {
            weight_mismatches += usize::from(read_back.weight(r, c) != image.weight(r, c));
        }
    }
    let threshold_mismatches = (0..COLS)
        .map(|c| (read_back.thresholds[c] ^ image.thresholds[c]).count_ones() as usize)
        .sum();
    Ok((
        tile,
        ProgramResult {
            read_back,
            weight_mismatches,
            threshold_mismatches,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferResult {
    pub outputs: Vec<Vec<Binary>>,
    pub deltas: Vec<Vec<i32>>,
    pub trace: PipelineTrace,
}

/// Runs input vectors through a single-tile engine holding `image`.
pub fn infer_tile_image(
    cfg: &Config,
    image: &TileImage,
    inputs: &[Vec<Binary>],
    v: f64,
    f: f64,
) -> Result<InferResult, HarnessError> {
    let prog = cfg.device.programming_context()?;
    let mut rng = stream(cfg.experiment.base_seed, &[TAG_PROGRAM]);
    let tile = Tile::formed(0, &prog, &mut rng)?;
    let mut engine = LayerEngine::new(EngineConfig::SingleTile58x64, vec![tile])?;
    let w = BinaryMatrix::from_fn(COLS, WEIGHT_ROWS, |c, r| image.weight(r, c));
    let t: Vec<i64> = image.thresholds.iter().map(|&x| x as i64).collect();
    engine.program_weights(&w, &prog, &mut rng)?;
    engine.program_thresholds(&t, &prog, &mut rng)?;
    let pol = policy(cfg);
    let c = Condition::Voltage(v);
    let profiles = cfg.fault.profile_set()?;
    let profile = profiles.resolve(c)?.clone();
    let mut sense = pol.sense_context(c, cfg.fault.margin_law.threshold(v, f));
    let mut outputs = Vec::new();
    let mut deltas = Vec::new();
    let mut trace = PipelineTrace::default();
    for (k, x) in inputs.iter().enumerate() {
        let inf = engine.run_inference(x, &mut sense)?;
        let mut o = inf.outputs;
        let mut frng = stream(cfg.experiment.base_seed, &[TAG_FAULT, k as u64, c.key(), float_key(f)]);
        apply_output_errors_in_place(&mut o, &inf.deltas, &profile, &pol, &mut frng)?;
        if k == 0 {
            trace = inf.trace;
        }
        outputs.push(o);
        deltas.push(inf.deltas);
    }
    Ok(InferResult { outputs, deltas, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::FaultMode;

    fn small(mut cfg: Config) -> Config {
        cfg.experiment.patterns_per_delta = 16;
        cfg.experiment.delta_max = 7;
        cfg
    }

    #[test]
    fn ideal_grid_is_perfect() {
        let mut cfg = small(Config::default());
        cfg.fault.profiles = [0.7, 0.8, 0.9]
            .iter()
            .map(|&v| super::super::ProfileOverride {
                condition: Condition::Voltage(v),
                p0: Some(0.0),
                cutoff: None,
                table: None,
            })
            .collect();
        cfg.device = super::super::DeviceSection {
            lrs_log_sigma: 0.0,
            hrs_log_sigma: 0.0,
            ..Default::default()
        };
        let r = run_pattern_experiment(&cfg).unwrap();
        assert_eq!(r.schmoo.len(), 18);
        for row in &r.schmoo {
            if row.functional {
                assert_eq!(row.accuracy_pct, Some(100.0), "{row:?}");
            } else {
                assert_eq!(row.accuracy_pct, None);
            }
        }
        assert!(r.schmoo.iter().any(|x| !x.functional));
    }

    #[test]
    fn errors_stay_in_band_and_rerun_is_identical() {
        let mut cfg = small(Config::default());
        cfg.experiment.voltages = vec![0.9, 1.2];
        cfg.experiment.frequencies_mhz = vec![33.0];
        let a = run_pattern_experiment(&cfg).unwrap();
        for d in &a.per_delta {
            if d.delta.abs() > 5 || d.voltage_v >= 1.0 {
                assert_eq!(d.correct, d.n, "{d:?}");
            }
        }
        let b = run_pattern_experiment(&cfg).unwrap();
        assert_eq!(pattern_csv(&a.per_delta), pattern_csv(&b.per_delta));
        assert_eq!(schmoo_csv(&a.schmoo), schmoo_csv(&b.schmoo));
        // grid order does not change any point's outcome
        cfg.experiment.voltages = vec![1.2, 0.9];
        let c = run_pattern_experiment(&cfg).unwrap();
        let find = |r: &PatternResult, v: f64| r.per_delta.iter().filter(|x| x.voltage_v == v).cloned().collect::<Vec<_>>();
        assert_eq!(find(&a, 0.9), find(&c, 0.9));
    }

    #[test]
    fn weak_cell_mode_runs() {
        let mut cfg = small(Config::default());
        cfg.fault.mode = FaultMode::DeterministicWeakCell;
        cfg.fault.margin_law = crate::fault::MarginLaw::additive(1.0, 20.0, 0.0);
        cfg.experiment.voltages = vec![0.8, 1.0];
        cfg.experiment.frequencies_mhz = vec![10.0];
        let r = run_pattern_experiment(&cfg).unwrap();
        let a08 = r.schmoo[0].accuracy_pct.unwrap();
        let a10 = r.schmoo[1].accuracy_pct.unwrap();
        assert!(a08 < 100.0 && a10 == 100.0, "{a08} {a10}");
    }

    #[test]
    fn solar_rows() {
        let mut cfg = small(Config::default());
        cfg.experiment.suns = Some(vec![8.0, 0.08, 0.0]);
        cfg.experiment.mode = super::super::Mode::SolarSweep;
        let r = run_solar_sweep(&cfg).unwrap();
        let csv = solar_csv(&r.rows);
        assert!(csv.starts_with("suns,v_operating,delta,accuracy_pct\n"));
        assert!(csv.ends_with("0,NF,,\n"));
        assert_eq!(r.operating_points.len(), 2);
        assert!(!r.brown_out_only());
        assert!(r.iv_csv.starts_with("suns,v,i\n"));
        cfg.experiment.suns = Some(vec![0.0]);
        assert!(run_solar_sweep(&cfg).unwrap().brown_out_only());
    }

    #[test]
    fn wilson() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        assert!((wilson_interval(10, 10).1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_rows() {
        let cfg = Config::default();
        let r = run_energy(&cfg).unwrap();
        assert_eq!(r.rows.len(), 18);
        let csv = energy_breakdown_csv(&r.breakdown);
        assert!(csv.contains("clock,0.052000,2.340000\n"));
        assert!(energy_csv(&r.rows).contains("\n0.7,10,45.000000,2.900000\n"));
    }
}
