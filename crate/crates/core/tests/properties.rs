//! Property tests for the model invariants, module by module.

use bnnsim::binary::{xnor_popcount, Binary, BinaryMatrix};
use bnnsim::device::{
    sample_resistance, DeviceError, DeviceVariability, MemristorDevice, ProgrammingContext, ProgrammingPulse,
    ResistanceState,
};
use bnnsim::fault::{
    apply_output_errors, failing_cell_set, Condition, ErrorProfile, FaultMode, FaultPolicy, MarginLaw, ProfileSet,
    MAX_DEFAULT_ERROR_RATE,
};
use bnnsim::mapper::{block_pads, majority_vote, pad_inputs, plan_blocks, vote_layer, BlockDeltas, BLOCK_SIZE};
use bnnsim::pipeline::{oracle_eval, EngineConfig, LayerEngine};
use bnnsim::power::{
    energy_breakdown, energy_per_inference, operating_point, operating_point_in, ChipLoadModel, EnergyFractions,
    EnergyModel, SolarCellModel,
};
use bnnsim::rng::stream;
use bnnsim::tile::{xpcsa_read, BitCell, SenseContext, Tile, WeakDecode, COLS, WEIGHT_ROWS};
use proptest::prelude::*;
use rand::Rng;

fn bits(v: &[bool]) -> Vec<Binary> {
    v.iter().map(|&b| Binary::from_bool(b)).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> BinaryMatrix {
    BinaryMatrix::from_fn(rows, cols, |_, _| Binary::from_bool(rng.random()))
}

fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<Binary> {
    (0..n).map(|_| Binary::from_bool(rng.random())).collect()
}

fn programmed_engine(cfg: EngineConfig, ctx: &ProgrammingContext, seed: u64) -> (LayerEngine, BinaryMatrix, Vec<i64>) {
    let mut rng = stream(seed, &[0]);
    let mut e = LayerEngine::formed(cfg, 0, ctx, &mut rng).unwrap();
    let w = random_matrix(cfg.fan_out(), cfg.fan_in(), &mut rng);
    let t: Vec<i64> = (0..cfg.fan_out()).map(|_| rng.random_range(0..=cfg.max_threshold())).collect();
    e.program_weights(&w, ctx, &mut rng).unwrap();
    e.program_thresholds(&t, ctx, &mut rng).unwrap();
    (e, w, t)
}

fn state() -> impl Strategy<Value = ResistanceState> {
    prop_oneof![Just(ResistanceState::Lrs), Just(ResistanceState::Hrs)]
}

fn engine_cfg() -> impl Strategy<Value = EngineConfig> {
    prop_oneof![
        Just(EngineConfig::SingleTile58x64),
        Just(EngineConfig::TwoLayer116x64),
        Just(EngineConfig::OneLayer116x128),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn second_form_always_errors(seed: u64) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let d = MemristorDevice::unformed().form(&ProgrammingPulse::form(), &ctx, &mut rng).unwrap();
        prop_assert_eq!(d.form(&ProgrammingPulse::form(), &ctx, &mut rng), Err(DeviceError::AlreadyFormed));
    }

    #[test]
    fn program_reaches_target(seed: u64, targets in prop::collection::vec(state(), 1..8)) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let mut d = MemristorDevice::unformed().form(&ProgrammingPulse::form(), &ctx, &mut rng).unwrap();
        for t in targets {
            d = d.program(t, &ProgrammingPulse::for_state(t), &ctx, &mut rng).unwrap();
            prop_assert_eq!(d.state(), Some(t));
            prop_assert!(d.resistance().unwrap() > 0.0);
        }
    }

    #[test]
    fn zero_spread_never_overlaps(seed: u64, lrs in 1e2f64..1e5, ratio in 1.001f64..1e3) {
        let v = DeviceVariability { lrs_median: lrs, lrs_log_sigma: 0.0, hrs_median: lrs * ratio, hrs_log_sigma: 0.0 };
        let mut rng = stream(seed, &[]);
        let lo = (0..32).map(|_| sample_resistance(ResistanceState::Lrs, &v, &mut rng)).fold(f64::MIN, f64::max);
        let hi = (0..32).map(|_| sample_resistance(ResistanceState::Hrs, &v, &mut rng)).fold(f64::MAX, f64::min);
        prop_assert!(lo < hi);
    }

    #[test]
    fn sampling_is_reproducible(seed: u64, s in state()) {
        let v = DeviceVariability::default();
        let a = sample_resistance(s, &v, &mut stream(seed, &[1]));
        let b = sample_resistance(s, &v, &mut stream(seed, &[1]));
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn programmed_cells_are_complementary(seed: u64, row in 0..WEIGHT_ROWS, col in 0..COLS, w: bool) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let mut tile = Tile::formed(0, &ctx, &mut rng).unwrap();
        tile.program_weight(row, col, Binary::from_bool(w), &ctx, &mut rng).unwrap();
        let c = tile.cell(row, col);
        let lrs = [c.left.state(), c.right.state()].iter().filter(|s| **s == Some(ResistanceState::Lrs)).count();
        prop_assert_eq!(lrs, 1);
        prop_assert_eq!(c.stored_value(), Some(Binary::from_bool(w)));
    }

    #[test]
    fn reads_do_not_disturb(seed: u64, thr in 0.0f64..8.0, frozen: bool, reads in 1usize..20) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let mut tile = Tile::formed(3, &ctx, &mut rng).unwrap();
        for r in 0..WEIGHT_ROWS {
            tile.program_weight(r, 0, Binary::from_bool(rng.random()), &ctx, &mut rng).unwrap();
        }
        let decode = if frozen { WeakDecode::Frozen { seed } } else { WeakDecode::PerRead };
        let mut sense = SenseContext::new(thr, decode, stream(seed, &[2]));
        let before = tile.clone();
        for k in 0..reads {
            let _ = tile.sense(k % WEIGHT_ROWS, 0, Binary::from_bool(k % 2 == 0), &mut sense).unwrap();
            let _ = xpcsa_read(tile.cell(k % WEIGHT_ROWS, 0), Binary::Pos, &mut sense).unwrap();
        }
        prop_assert_eq!(tile, before);
    }

    #[test]
    fn deterministic_reads_are_odd_in_x(seed: u64, thr in 0.0f64..8.0, row in 0..WEIGHT_ROWS, col in 0..COLS) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let mut tile = Tile::formed(1, &ctx, &mut rng).unwrap();
        tile.program_weight(row, col, Binary::from_bool(rng.random()), &ctx, &mut rng).unwrap();
        let mut sense = SenseContext::new(thr, WeakDecode::Frozen { seed }, stream(seed, &[2]));
        let p = tile.sense(row, col, Binary::Pos, &mut sense).unwrap();
        let n = tile.sense(row, col, Binary::Neg, &mut sense).unwrap();
        prop_assert_eq!(n, -p);
    }

    #[test]
    fn registers_follow_the_reads(seed: u64, thr in 0.0f64..3.0) {
        // whatever the sensing returns, delta = popcount(reads) - T(read)
        let cfg = EngineConfig::SingleTile58x64;
        let ctx = ProgrammingContext::default();
        let (mut e, _, _) = programmed_engine(cfg, &ctx, seed);
        let x = random_bits(cfg.fan_in(), &mut stream(seed, &[9]));
        let mut sense = SenseContext::new(thr, WeakDecode::Frozen { seed: seed ^ 1 }, stream(seed, &[3]));
        let mut probe = sense.clone();
        let inf = e.run_inference(&x, &mut sense).unwrap();
        let tile = &e.tiles()[0];
        for col in 0..COLS {
            let pop = (0..WEIGHT_ROWS).filter(|&r| tile.sense(r, col, x[r], &mut probe).unwrap().is_pos()).count();
            let t = tile.read_threshold(col, &mut probe).unwrap();
            prop_assert_eq!(inf.deltas[col], pop as i32 - t as i32);
            prop_assert_eq!(inf.outputs[col], Binary::from_bool(inf.deltas[col] > 0));
        }
    }

    #[test]
    fn cycle_count_ignores_data(cfg in engine_cfg(), seed: u64) {
        let ctx = ProgrammingContext::ideal();
        let (mut e, _, _) = programmed_engine(cfg, &ctx, seed);
        let x = random_bits(cfg.fan_in(), &mut stream(seed, &[5]));
        let inf = e.run_inference(&x, &mut SenseContext::ideal()).unwrap();
        prop_assert_eq!(inf.trace.cycles, 6 + cfg.fan_in() as u64 + 2);
    }

    #[test]
    fn one_input_flip_moves_delta_by_one(cfg in engine_cfg(), seed: u64, pos in 0usize..116) {
        let ctx = ProgrammingContext::ideal();
        let (mut e, w, t) = programmed_engine(cfg, &ctx, seed);
        let mut x = random_bits(cfg.fan_in(), &mut stream(seed, &[6]));
        let a = e.run_inference(&x, &mut SenseContext::ideal()).unwrap();
        let p = pos % cfg.fan_in();
        x[p] = -x[p];
        let b = e.run_inference(&x, &mut SenseContext::ideal()).unwrap();
        for j in 0..cfg.fan_out() {
            prop_assert_eq!((a.deltas[j] - b.deltas[j]).abs(), 1);
        }
        prop_assert_eq!(oracle_eval(&w, &x, &t).unwrap().1, b.deltas);
    }

    #[test]
    fn large_preactivations_never_flip(seed: u64, deltas in prop::collection::vec((6i32..=58).prop_flat_map(|m| prop_oneof![Just(m), Just(-m)]), 1..128)) {
        let policy = FaultPolicy::new(FaultMode::StochasticOutput, seed);
        let outs: Vec<Binary> = deltas.iter().map(|&d| Binary::from_bool(d > 0)).collect();
        let mut rng = stream(seed, &[]);
        for p in ProfileSet::defaults().profiles() {
            prop_assert_eq!(&apply_output_errors(&outs, &deltas, p, &policy, &mut rng).unwrap(), &outs);
        }
    }

    #[test]
    fn failing_sets_nest(seed: u64, v in 0.6f64..1.25, f_lo in 1.0f64..66.0, df in 0.0f64..60.0, dv in 0.0f64..0.5) {
        let ctx = ProgrammingContext::default();
        let mut rng = stream(seed, &[]);
        let mut tile = Tile::formed(0, &ctx, &mut rng).unwrap();
        for r in 0..WEIGHT_ROWS {
            for c in 0..COLS {
                tile.program_weight(r, c, Binary::from_bool(rng.random()), &ctx, &mut rng).unwrap();
            }
        }
        let law = MarginLaw::default();
        let lo = failing_cell_set(&tile, &law, v, f_lo);
        prop_assert!(lo.is_subset(&failing_cell_set(&tile, &law, v, f_lo + df)));
        prop_assert!(failing_cell_set(&tile, &law, v + dv, f_lo).is_subset(&lo));
    }

    #[test]
    fn weak_cell_errors_repeat(seed: u64, v in 0.7f64..1.0) {
        let cfg = EngineConfig::TwoLayer116x64;
        let ctx = ProgrammingContext::default();
        let (mut e, _, _) = programmed_engine(cfg, &ctx, seed);
        let x = random_bits(cfg.fan_in(), &mut stream(seed, &[7]));
        let policy = FaultPolicy::new(FaultMode::DeterministicWeakCell, seed);
        let thr = MarginLaw::default().threshold(v, 66.0);
        let a = e.run_inference(&x, &mut policy.sense_context(Condition::Voltage(v), thr)).unwrap();
        let b = e.run_inference(&x, &mut policy.sense_context(Condition::Voltage(v), thr)).unwrap();
        prop_assert_eq!(a.outputs, b.outputs);
        prop_assert_eq!(a.deltas, b.deltas);
    }

    #[test]
    fn padded_blocks_sum_to_the_unpadded_preactivation(fan_in in 1usize..400, seed: u64) {
        let mut rng = stream(seed, &[]);
        let (n, pad) = plan_blocks(fan_in);
        prop_assert_eq!(n % 2, 1);
        prop_assert_eq!(n * BLOCK_SIZE, fan_in + pad);
        let x = random_bits(fan_in, &mut rng);
        let w = random_bits(fan_in, &mut rng);
        let xp = pad_inputs(&x, pad);
        let mut wp = w.clone();
        wp.resize(fan_in + pad, Binary::Pos);
        let pads = block_pads(fan_in, n);
        let mut total = 0i64;
        for b in 0..n {
            let r = b * BLOCK_SIZE..(b + 1) * BLOCK_SIZE;
            // the block's offset removes exactly the pads' contribution
            let padded = xnor_popcount(&xp[r.clone()], &wp[r.clone()]) as i64 - pads[b] as i64;
            let real_end = r.end.min(fan_in);
            let unpadded = if r.start < fan_in { xnor_popcount(&x[r.start..real_end], &w[r.start..real_end]) as i64 } else { 0 };
            prop_assert_eq!(padded, unpadded);
            total += padded;
        }
        prop_assert_eq!(total, xnor_popcount(&x, &w) as i64);
    }

    #[test]
    fn votes_only_move_near_small_block_deltas(seed: u64, n_half in 0usize..4, fan_out in 1usize..16, cutoff in 0u32..6) {
        let n = 2 * n_half + 1;
        let mut rng = stream(seed, &[]);
        let deltas: Vec<i32> = (0..n * fan_out).map(|_| rng.random_range(-12..=12)).collect();
        let bd = BlockDeltas { n_blocks: n, fan_out, deltas };
        let profile = ErrorProfile::parametric(Condition::Voltage(0.8), 0.5, cutoff).unwrap();
        let policy = FaultPolicy::new(FaultMode::StochasticOutput, seed);
        let clean = vote_layer(&bd, &ErrorProfile::zero(Condition::Voltage(1.2)), &policy, &mut rng).unwrap();
        let noisy = vote_layer(&bd, &profile, &policy, &mut rng).unwrap();
        for j in 0..fan_out {
            if clean[j] != noisy[j] {
                prop_assert!((0..n).any(|b| bd.get(b, j).unsigned_abs() <= cutoff));
            }
        }
    }

    #[test]
    fn iv_curve_is_monotone(v in 0.0f64..1.2, dv in 1e-3f64..0.1, suns in 0.05f64..8.0, ds in 0.01f64..2.0) {
        let cell = SolarCellModel::default();
        let voc = cell.open_circuit_voltage(suns).unwrap();
        prop_assume!(v + dv < voc);
        prop_assert!(cell.iv_current(v + dv, suns).unwrap() < cell.iv_current(v, suns).unwrap());
        prop_assert!(cell.iv_current(v, suns + ds).unwrap() > cell.iv_current(v, suns).unwrap());
    }

    #[test]
    fn short_circuit_scales_with_suns(suns in 0.01f64..10.0) {
        let cell = SolarCellModel::default();
        let ratio = cell.iv_current(0.0, suns).unwrap() / cell.iv_current(0.0, 1.0).unwrap();
        prop_assert!((ratio / suns - 1.0).abs() < 1e-3);
    }

    #[test]
    fn operating_point_is_bracket_independent(suns in 0.05f64..8.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (cell, load) = (SolarCellModel::default(), ChipLoadModel::default());
        let op = operating_point(&cell, &load, suns).unwrap();
        let voc = cell.open_circuit_voltage(suns).unwrap();
        let lo = op.v * a;
        let hi = op.v + (voc - op.v) * b;
        prop_assume!(hi > lo);
        let other = operating_point_in(&cell, &load, suns, lo, hi.max(op.v + 1e-9).min(voc)).unwrap();
        prop_assert!((other.v - op.v).abs() <= 2.0 * bnnsim::power::OP_TOL_V);
    }

    #[test]
    fn energy_is_quadratic_in_voltage(v in 0.3f64..1.5, f in 0.1f64..100.0) {
        let model = EnergyModel::default();
        let k = energy_per_inference(0.7) / 0.49;
        prop_assert!((energy_per_inference(v) / (v * v) / k - 1.0).abs() < 1e-12);
        prop_assert_eq!(model.energy_at(v, f), model.energy_at(v, 10.0));
    }

    #[test]
    fn breakdown_is_conserved(clock in 0.0f64..0.3, regs in 0.0f64..0.3, mac in 0.0f64..0.3, other in 0.0f64..0.1, e in 1e-9f64..1e-6) {
        let f = EnergyFractions { clock, registers: regs, mac, other };
        let r = energy_breakdown(e, &f).unwrap();
        prop_assert!((r.fraction_sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exact_xnor_under_ideal_sensing() {
    let ctx = ProgrammingContext::default();
    let mut rng = stream(11, &[]);
    for w in [Binary::Neg, Binary::Pos] {
        for x in [Binary::Neg, Binary::Pos] {
            let mut tile = Tile::formed(0, &ctx, &mut rng).unwrap();
            tile.program_weight(0, 0, w, &ctx, &mut rng).unwrap();
            let cell: BitCell = *tile.cell(0, 0);
            assert!(cell.left.resistance() != cell.right.resistance());
            assert_eq!(xpcsa_read(&cell, x, &mut SenseContext::ideal()).unwrap(), w.xnor(x));
        }
    }
}

#[test]
fn default_profiles_stay_below_two_percent() {
    for p in ProfileSet::defaults().profiles() {
        if matches!(p.condition(), Condition::Voltage(v) if v < 0.7) {
            continue;
        }
        assert!(p.max_prob() <= MAX_DEFAULT_ERROR_RATE, "{:?}", p.condition());
    }
}

#[test]
fn vote_flips_need_enough_blocks() {
    // exhaustive for odd n <= 7: flipping k blocks can only change the vote
    // when k covers the winning side's surplus
    for n in [1usize, 3, 5, 7] {
        for pattern in 0u32..(1 << n) {
            let v = bits(&(0..n).map(|i| pattern >> i & 1 == 1).collect::<Vec<_>>());
            let pos = v.iter().filter(|b| b.is_pos()).count() as i64;
            let margin = (2 * pos - n as i64).unsigned_abs() as usize;
            let base = majority_vote(&v).unwrap();
            for flips in 0u32..(1 << n) {
                let k = flips.count_ones() as usize;
                let w: Vec<Binary> = (0..n).map(|i| if flips >> i & 1 == 1 { -v[i] } else { v[i] }).collect();
                if majority_vote(&w).unwrap() != base {
                    assert!(2 * k > margin, "n={n} pattern={pattern:b} flips={flips:b}");
                }
            }
        }
    }
}

#[test]
fn log_resistance_is_normal() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let v = DeviceVariability::default();
    let mut rng = stream(2024, &[]);
    for (state, median, sigma) in [
        (ResistanceState::Lrs, v.lrs_median, v.lrs_log_sigma),
        (ResistanceState::Hrs, v.hrs_median, v.hrs_log_sigma),
    ] {
        let n = 20_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_resistance(state, &v, &mut rng).ln()).collect();
        xs.sort_by(f64::total_cmp);
        let dist = Normal::new(median.ln(), sigma).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = dist.cdf(x);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        // critical value at alpha = 0.001
        assert!(d < 1.95 / (n as f64).sqrt(), "{state:?}: D = {d}");
    }
}
