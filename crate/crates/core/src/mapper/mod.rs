//! Mapping wide binarized layers onto 58-input tiles.
//!
//! A layer with fan-in `n` is cut into an odd number of 58-input blocks.
//! Each block is evaluated on its own tile and yields one binary partial
//! decision per neuron; the neuron's activation is the majority of those.
//! Missing inputs at the tail are padded with `+1` inputs against `+1`
//! weights, and each block's threshold is raised by its pad count so the
//! padding cancels exactly.

mod model;

pub use model::{BnnModel, InputBinarization, Layer, LayerKind, LayerThresholds, MODEL_MAGIC};

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::binary::{xnor_popcount, Binary, BinaryMatrix};
use crate::device::ProgrammingContext;
use crate::fault::{apply_output_errors_in_place, ErrorProfile, FaultError, FaultPolicy};
use crate::pipeline::{EngineConfig, LayerEngine, PipelineError};
use crate::tile::{SenseContext, Tile, TileError, COLS, MAX_THRESHOLD, WEIGHT_ROWS};

pub const BLOCK_SIZE: usize = WEIGHT_ROWS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapperError {
    #[error("majority vote needs an odd number of inputs, got {0}")]
    EvenLength(usize),
    #[error("model has no layers")]
    EmptyModel,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),
    #[error("model line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("layer {layer} block {block} neuron {neuron}: encoded threshold {value} outside 0..=63")]
    ThresholdOverflow {
        layer: usize,
        block: usize,
        neuron: usize,
        value: i64,
    },
    #[error("plan does not match model: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error(transparent)]
    Fault(#[from] FaultError),
}

/// Smallest odd block count covering `fan_in`, and the padding it implies.
pub fn plan_blocks(fan_in: usize) -> (usize, usize) {
    let min = fan_in.max(1).div_ceil(BLOCK_SIZE);
    let n = if min % 2 == 0 { min + 1 } else { min };
    (n, n * BLOCK_SIZE - fan_in)
}

/// Pad positions per block under tail padding.
pub fn block_pads(fan_in: usize, n_blocks: usize) -> Vec<usize> {
    (0..n_blocks)
        .map(|b| {
            let start = b * BLOCK_SIZE;
            BLOCK_SIZE - fan_in.saturating_sub(start).min(BLOCK_SIZE)
        })
        .collect()
}

/// Appends `pad_count` `+1` entries.
pub fn pad_inputs(x: &[Binary], pad_count: usize) -> Vec<Binary> {
    let mut v = Vec::with_capacity(x.len() + pad_count);
    v.extend_from_slice(x);
    v.resize(x.len() + pad_count, Binary::Pos);
    v
}

/// Splits a monolithic threshold: `floor(t / n)` each, with the remainder
/// going one apiece to the lowest-index blocks.
pub fn split_threshold(t: i64, n_blocks: usize) -> Vec<i64> {
    let n = n_blocks as i64;
    let (q, r) = (t.div_euclid(n), t.rem_euclid(n));
    (0..n).map(|b| q + i64::from(b < r)).collect()
}

/// Sign of the sum of an odd number of `±1` values.
pub fn majority_vote(bits: &[Binary]) -> Result<Binary, MapperError> {
    if bits.len() % 2 == 0 {
        return Err(MapperError::EvenLength(bits.len()));
    }
    let pos = bits.iter().filter(|b| b.is_pos()).count();
    Ok(Binary::from_bool(2 * pos > bits.len()))
}

/// Compiled mapping of one hidden layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    /// Index of the layer within the model.
    pub layer: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub n_blocks: usize,
    pub pad_count: usize,
    /// Pads per block; also each block's threshold offset.
    pub block_pads: Vec<usize>,
    /// 64-output tile groups.
    pub groups: usize,
    /// Tile id for `(group, block)` at `group * n_blocks + block`.
    pub tiles: Vec<u64>,
    /// Encoded thresholds `[block][neuron]`, each in `0..=63`.
    pub thresholds: Vec<Vec<i64>>,
}

impl LayerPlan {
    pub fn tile(&self, group: usize, block: usize) -> u64 {
        self.tiles[group * self.n_blocks + block]
    }

    pub fn threshold_offset(&self, block: usize) -> usize {
        self.block_pads[block]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub layers: Vec<LayerPlan>,
}

pub const PLAN_CSV_HEADER: &str = "layer,block,tile,pad_count,threshold_offset";

impl TilePlan {
    pub fn tile_count(&self) -> usize {
        self.layers.iter().map(|l| l.tiles.len()).sum()
    }

    /// One row per tile; `pad_count` is the layer total.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{PLAN_CSV_HEADER}\n");
        for l in &self.layers {
            for g in 0..l.groups {
                for b in 0..l.n_blocks {
                    let _ = writeln!(s, "{},{},{},{},{}", l.layer, b, l.tile(g, b), l.pad_count, l.threshold_offset(b));
                }
            }
        }
        s
    }
}

/// Plans every hidden layer and encodes its block thresholds.
pub fn compile(model: &BnnModel) -> Result<TilePlan, MapperError> {
    model.validate()?;
    let mut layers = Vec::new();
    let mut next_tile = 0u64;
    for (idx, layer) in model.hidden_layers() {
        let (n_blocks, pad_count) = plan_blocks(layer.fan_in());
        let pads = block_pads(layer.fan_in(), n_blocks);
        let real: Vec<Vec<i64>> = match &layer.thresholds {
            LayerThresholds::PerBlock(b) => {
                if b.len() != n_blocks {
                    return Err(MapperError::InvalidModel(format!(
                        "layer {idx}: {} block threshold rows, mapping needs {n_blocks}",
                        b.len()
                    )));
                }
                b.clone()
            }
            LayerThresholds::Monolithic(t) => {
                let mut b = vec![vec![0; layer.fan_out()]; n_blocks];
                for (j, &tj) in t.iter().enumerate() {
                    for (k, part) in split_threshold(tj, n_blocks).into_iter().enumerate() {
                        b[k][j] = part;
                    }
                }
                b
            }
        };
        let mut encoded = real;
        for (block, row) in encoded.iter_mut().enumerate() {
            for (neuron, t) in row.iter_mut().enumerate() {
                *t += pads[block] as i64;
                if !(0..=MAX_THRESHOLD as i64).contains(t) {
                    return Err(MapperError::ThresholdOverflow {
                        layer: idx,
                        block,
                        neuron,
                        value: *t,
                    });
                }
            }
        }
        let groups = layer.fan_out().div_ceil(COLS);
        let tiles = (0..(groups * n_blocks) as u64).map(|i| next_tile + i).collect();
        next_tile += (groups * n_blocks) as u64;
        layers.push(LayerPlan {
            layer: idx,
            fan_in: layer.fan_in(),
            fan_out: layer.fan_out(),
            n_blocks,
            pad_count,
            block_pads: pads,
            groups,
            tiles,
            thresholds: encoded,
        });
    }
    Ok(TilePlan { layers })
}

/// Per-block preactivations of one hidden layer, `[block * fan_out + neuron]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDeltas {
    pub n_blocks: usize,
    pub fan_out: usize,
    pub deltas: Vec<i32>,
}

impl BlockDeltas {
    pub fn block(&self, b: usize) -> &[i32] {
        &self.deltas[b * self.fan_out..(b + 1) * self.fan_out]
    }

    pub fn get(&self, block: usize, neuron: usize) -> i32 {
        self.deltas[block * self.fan_out + neuron]
    }
}

/// Block outputs with fault injection, then majority vote per neuron.
pub fn vote_layer<R: Rng + ?Sized>(
    bd: &BlockDeltas,
    profile: &ErrorProfile,
    policy: &FaultPolicy,
    rng: &mut R,
) -> Result<Vec<Binary>, MapperError> {
    let mut outs: Vec<Binary> = bd.deltas.iter().map(|&d| Binary::from_bool(d > 0)).collect();
    for b in 0..bd.n_blocks {
        let range = b * bd.fan_out..(b + 1) * bd.fan_out;
        apply_output_errors_in_place(&mut outs[range.clone()], &bd.deltas[range], profile, policy, rng)?;
    }
    if bd.n_blocks % 2 == 0 {
        return Err(MapperError::EvenLength(bd.n_blocks));
    }
    Ok((0..bd.fan_out)
        .map(|j| {
            let pos = (0..bd.n_blocks).filter(|&b| outs[b * bd.fan_out + j].is_pos()).count();
            Binary::from_bool(2 * pos > bd.n_blocks)
        })
        .collect())
}

/// Integer class scores `popcount - T` of the output layer.
pub fn output_scores(layer: &Layer, h: &[Binary]) -> Result<Vec<i64>, MapperError> {
    let t = match &layer.thresholds {
        LayerThresholds::Monolithic(t) => t,
        LayerThresholds::PerBlock(_) => {
            return Err(MapperError::InvalidModel("output layer takes monolithic thresholds".into()))
        }
    };
    if h.len() != layer.fan_in() {
        return Err(MapperError::PlanMismatch(format!(
            "output layer expects {} inputs, got {}",
            layer.fan_in(),
            h.len()
        )));
    }
    Ok((0..layer.fan_out())
        .map(|j| xnor_popcount(layer.weights.row(j), h) as i64 - t[j])
        .collect())
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[i64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedOutput {
    pub scores: Vec<i64>,
    pub class: usize,
}

/// A compiled model with every hidden-layer tile programmed.
#[derive(Debug, Clone)]
pub struct MappedNetwork {
    model: BnnModel,
    plan: TilePlan,
    /// Per hidden layer, one single-tile engine per `(group, block)`.
    engines: Vec<Vec<LayerEngine>>,
}

impl MappedNetwork {
    pub fn program<R: Rng + ?Sized>(
        model: BnnModel,
        plan: TilePlan,
        ctx: &ProgrammingContext,
        rng: &mut R,
    ) -> Result<Self, MapperError> {
        check_plan(&model, &plan)?;
        let mut engines = Vec::with_capacity(plan.layers.len());
        for lp in &plan.layers {
            let layer = &model.layers[lp.layer];
            let mut per = Vec::with_capacity(lp.tiles.len());
            for g in 0..lp.groups {
                for b in 0..lp.n_blocks {
                    let tile = Tile::formed(lp.tile(g, b), ctx, rng)?;
                    let mut e = LayerEngine::new(EngineConfig::SingleTile58x64, vec![tile])?.without_events();
                    let w = BinaryMatrix::from_fn(COLS, BLOCK_SIZE, |c, r| {
                        let (neuron, input) = (g * COLS + c, b * BLOCK_SIZE + r);
                        if neuron < lp.fan_out && input < lp.fan_in {
                            layer.weights.get(neuron, input)
                        } else {
                            Binary::Pos
                        }
                    });
                    let t: Vec<i64> = (0..COLS)
                        .map(|c| lp.thresholds[b].get(g * COLS + c).copied().unwrap_or(0))
                        .collect();
                    e.program_weights(&w, ctx, rng)?;
                    e.program_thresholds(&t, ctx, rng)?;
                    per.push(e);
                }
            }
            engines.push(per);
        }
        Ok(Self { model, plan, engines })
    }

    pub fn model(&self) -> &BnnModel {
        &self.model
    }

    pub fn plan(&self) -> &TilePlan {
        &self.plan
    }

    pub fn engines(&self, hidden: usize) -> &[LayerEngine] {
        &self.engines[hidden]
    }

    /// Runs every block of hidden layer `hidden` (index into the plan) on
    /// its tile.
    pub fn block_deltas(
        &mut self,
        hidden: usize,
        x: &[Binary],
        sense: &mut SenseContext,
    ) -> Result<BlockDeltas, MapperError> {
        let lp = &self.plan.layers[hidden];
        if x.len() != lp.fan_in {
            return Err(MapperError::PlanMismatch(format!(
                "layer {} expects {} inputs, got {}",
                lp.layer,
                lp.fan_in,
                x.len()
            )));
        }
        let padded = pad_inputs(x, lp.pad_count);
        let (n_blocks, fan_out, groups) = (lp.n_blocks, lp.fan_out, lp.groups);
        let mut deltas = vec![0i32; n_blocks * fan_out];
        for g in 0..groups {
            for b in 0..n_blocks {
                let e = &mut self.engines[hidden][g * n_blocks + b];
                let inf = e.run_inference(&padded[b * BLOCK_SIZE..(b + 1) * BLOCK_SIZE], sense)?;
                for c in 0..COLS {
                    let j = g * COLS + c;
                    if j < fan_out {
                        deltas[b * fan_out + j] = inf.deltas[c];
                    }
                }
            }
        }
        Ok(BlockDeltas {
            n_blocks,
            fan_out,
            deltas,
        })
    }

    /// Continues from the first hidden layer's block deltas (which do not
    /// depend on output-level faults and can be reused across trials).
    pub fn evaluate_from_first<R: Rng + ?Sized>(
        &mut self,
        first: &BlockDeltas,
        profile: &ErrorProfile,
        policy: &FaultPolicy,
        sense: &mut SenseContext,
        rng: &mut R,
    ) -> Result<MappedOutput, MapperError> {
        let mut h = vote_layer(first, profile, policy, rng)?;
        for hidden in 1..self.plan.layers.len() {
            let bd = self.block_deltas(hidden, &h, sense)?;
            h = vote_layer(&bd, profile, policy, rng)?;
        }
        self.finish(&h)
    }

    fn finish(&self, h: &[Binary]) -> Result<MappedOutput, MapperError> {
        let out = self
            .model
            .output_layer()
            .ok_or_else(|| MapperError::InvalidModel("no output layer".into()))?;
        let scores = output_scores(out, h)?;
        let class = argmax(&scores);
        Ok(MappedOutput { scores, class })
    }

    /// Full evaluation of a binarized input.
    pub fn evaluate<R: Rng + ?Sized>(
        &mut self,
        x: &[Binary],
        profile: &ErrorProfile,
        policy: &FaultPolicy,
        sense: &mut SenseContext,
        rng: &mut R,
    ) -> Result<MappedOutput, MapperError> {
        if self.plan.layers.is_empty() {
            if x.len() != self.model.input_len() {
                return Err(MapperError::PlanMismatch(format!(
                    "model expects {} inputs, got {}",
                    self.model.input_len(),
                    x.len()
                )));
            }
            return self.finish(x);
        }
        let first = self.block_deltas(0, x, sense)?;
        self.evaluate_from_first(&first, profile, policy, sense, rng)
    }
}

/// Free-function form of [`MappedNetwork::evaluate`].
pub fn evaluate_mapped<R: Rng + ?Sized>(
    net: &mut MappedNetwork,
    x: &[Binary],
    profile: &ErrorProfile,
    policy: &FaultPolicy,
    sense: &mut SenseContext,
    rng: &mut R,
) -> Result<MappedOutput, MapperError> {
    net.evaluate(x, profile, policy, sense, rng)
}

fn check_plan(model: &BnnModel, plan: &TilePlan) -> Result<(), MapperError> {
    model.validate()?;
    let hidden: Vec<usize> = model.hidden_layers().map(|(i, _)| i).collect();
    if hidden.len() != plan.layers.len() {
        return Err(MapperError::PlanMismatch(format!(
            "model has {} hidden layers, plan has {}",
            hidden.len(),
            plan.layers.len()
        )));
    }
    for (lp, &i) in plan.layers.iter().zip(&hidden) {
        let l = &model.layers[i];
        let (n, pad) = plan_blocks(l.fan_in());
        let ok = lp.layer == i
            && lp.fan_in == l.fan_in()
            && lp.fan_out == l.fan_out()
            && lp.n_blocks == n
            && lp.pad_count == pad
            && lp.groups == l.fan_out().div_ceil(COLS)
            && lp.tiles.len() == lp.groups * n
            && lp.thresholds.len() == n
            && lp.thresholds.iter().all(|r| r.len() == l.fan_out());
        if !ok {
            return Err(MapperError::PlanMismatch(format!("layer {i} dimensions differ")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> BinaryMatrix {
        BinaryMatrix::from_fn(rows, cols, |_, _| Binary::from_bool(rng.random()))
    }

    #[test]
    fn plan_examples() {
        assert_eq!(plan_blocks(1102), (19, 0));
        assert_eq!(plan_blocks(174), (3, 0));
        assert_eq!(plan_blocks(100), (3, 74));
        assert_eq!(plan_blocks(58), (1, 0));
        assert_eq!(plan_blocks(1), (1, 57));
        assert_eq!(plan_blocks(116), (3, 58));
        assert_eq!(block_pads(100, 3), vec![0, 16, 58]);
        assert_eq!(block_pads(196, 5), vec![0, 0, 0, 36, 58]);
    }

    #[test]
    fn padding_and_split() {
        let x = vec![Binary::Neg; 5];
        assert_eq!(pad_inputs(&x, 0), x);
        let p = pad_inputs(&x, 3);
        assert_eq!(p.len(), 8);
        assert!(p[5..].iter().all(|b| b.is_pos()));
        assert_eq!(split_threshold(100, 3), vec![34, 33, 33]);
        assert_eq!(split_threshold(101, 3), vec![34, 34, 33]);
        assert_eq!(split_threshold(-4, 3), vec![-1, -1, -2]);
        assert_eq!(split_threshold(7, 1), vec![7]);
    }

    #[test]
    fn vote_examples() {
        use Binary::{Neg, Pos};
        assert_eq!(majority_vote(&[Pos, Pos, Neg]), Ok(Pos));
        assert_eq!(majority_vote(&[Neg; 7]), Ok(Neg));
        assert_eq!(majority_vote(&[Pos]), Ok(Pos));
        assert_eq!(majority_vote(&[Pos; 4]), Err(MapperError::EvenLength(4)));
        assert_eq!(majority_vote(&[]), Err(MapperError::EvenLength(0)));
    }

    fn model_with(hidden: Vec<Layer>, out_in: usize, rng: &mut impl Rng) -> BnnModel {
        let mut layers = hidden;
        layers.push(Layer {
            kind: LayerKind::Output,
            weights: random_matrix(4, out_in, rng),
            thresholds: LayerThresholds::Monolithic(vec![0, 1, 2, 3]),
        });
        BnnModel {
            input: InputBinarization::default(),
            layers,
        }
    }

    #[test]
    fn compile_examples() {
        let mut rng = stream(1, &[]);
        let l = Layer {
            kind: LayerKind::Hidden,
            weights: random_matrix(64, 1102, &mut rng),
            thresholds: LayerThresholds::Monolithic(vec![560; 64]),
        };
        let m = model_with(vec![l], 64, &mut rng);
        let plan = compile(&m).unwrap();
        assert_eq!(plan.layers[0].n_blocks, 19);
        assert_eq!(plan.layers[0].groups, 1);
        assert_eq!(plan.tile_count(), 19);
        assert_eq!(plan.layers[0].thresholds[0][0], 30);
        assert_eq!(plan.layers[0].thresholds[18][0], 29);

        let l = Layer {
            kind: LayerKind::Hidden,
            weights: random_matrix(10, 100, &mut rng),
            thresholds: LayerThresholds::Monolithic(vec![17; 10]),
        };
        let mut m = model_with(vec![l], 10, &mut rng);
        let plan = compile(&m).unwrap();
        let lp = &plan.layers[0];
        assert_eq!(lp.thresholds.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![6, 6 + 16, 5 + 58]);
        let csv = plan.to_csv();
        assert!(csv.starts_with("layer,block,tile,pad_count,threshold_offset\n"));
        assert!(csv.contains("\n0,2,2,74,58\n"));
        // the all-pad block only has room for a share of at most 5
        m.layers[0].thresholds = LayerThresholds::Monolithic(vec![100; 10]);
        assert!(matches!(
            compile(&m),
            Err(MapperError::ThresholdOverflow { block: 2, value: 91, .. })
        ));

        // overflow: 100 extra over 58 inputs
        let l = Layer {
            kind: LayerKind::Hidden,
            weights: random_matrix(3, 58, &mut rng),
            thresholds: LayerThresholds::Monolithic(vec![10, 64, 3]),
        };
        let m = model_with(vec![l], 3, &mut rng);
        assert!(matches!(
            compile(&m),
            Err(MapperError::ThresholdOverflow { neuron: 1, value: 64, .. })
        ));
        let empty = BnnModel {
            input: InputBinarization::default(),
            layers: vec![],
        };
        assert_eq!(compile(&empty), Err(MapperError::EmptyModel));
    }

    #[test]
    fn all_pad_block_votes_negative() {
        let mut rng = stream(2, &[]);
        let l = Layer {
            kind: LayerKind::Hidden,
            weights: random_matrix(2, 100, &mut rng),
            thresholds: LayerThresholds::PerBlock(vec![vec![0, 0], vec![0, 0], vec![0, 0]]),
        };
        let m = model_with(vec![l], 2, &mut rng);
        let plan = compile(&m).unwrap();
        let mut net = MappedNetwork::program(m, plan, &ProgrammingContext::ideal(), &mut rng).unwrap();
        let x: Vec<Binary> = (0..100).map(|_| Binary::from_bool(rng.random())).collect();
        let bd = net.block_deltas(0, &x, &mut SenseContext::ideal()).unwrap();
        assert_eq!(bd.block(2), &[0, 0]);
    }

    #[test]
    fn single_block_matches_oracle() {
        let mut rng = stream(3, &[]);
        let w = random_matrix(8, 58, &mut rng);
        let t: Vec<i64> = (0..8).map(|_| rng.random_range(20..40)).collect();
        let hidden = Layer {
            kind: LayerKind::Hidden,
            weights: w.clone(),
            thresholds: LayerThresholds::Monolithic(t.clone()),
        };
        let m = model_with(vec![hidden], 8, &mut rng);
        let plan = compile(&m).unwrap();
        let mut net = MappedNetwork::program(m.clone(), plan, &ProgrammingContext::ideal(), &mut rng).unwrap();
        let prof = ErrorProfile::zero(crate::fault::Condition::Voltage(1.2));
        for _ in 0..50 {
            let x: Vec<Binary> = (0..58).map(|_| Binary::from_bool(rng.random())).collect();
            let (h, _) = crate::pipeline::oracle_eval(&w, &x, &t).unwrap();
            let want = output_scores(m.output_layer().unwrap(), &h).unwrap();
            let got = net
                .evaluate(&x, &prof, &FaultPolicy::default(), &mut SenseContext::ideal(), &mut rng)
                .unwrap();
            assert_eq!(got.scores, want);
            assert_eq!(got.class, argmax(&want));
        }
    }

    #[test]
    fn model_text_round_trip() {
        let mut rng = stream(4, &[]);
        let hidden = Layer {
            kind: LayerKind::Hidden,
            weights: random_matrix(5, 70, &mut rng),
            thresholds: LayerThresholds::PerBlock(vec![vec![1, 2, 3, 4, 5], vec![0; 5], vec![-58; 5]]),
        };
        let mut m = model_with(vec![hidden], 5, &mut rng);
        m.input = InputBinarization { pool: 2, threshold: 0.25 };
        let text = m.to_text();
        assert!(text.starts_with("bnnsim-model 1\n"));
        assert_eq!(BnnModel::from_text(&text).unwrap(), m);

        let conv = "bnnsim-model 1\nlayer conv 3 3\nend\n";
        assert!(matches!(BnnModel::from_text(conv), Err(MapperError::UnsupportedLayer(_))));
        assert!(matches!(BnnModel::from_text("nope\n"), Err(MapperError::Parse { line: 1, .. })));
        let bad = text.replacen("layer hidden 70 5\nweights\n1", "layer hidden 70 5\nweights\n2", 1);
        if bad != text {
            assert!(BnnModel::from_text(&bad).is_err());
        }
        let truncated = &text[..text.len() / 2];
        assert!(BnnModel::from_text(truncated).is_err());
    }

    #[test]
    fn input_binarization() {
        let r = InputBinarization { pool: 2, threshold: 0.5 };
        let px = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.5];
        let b = r.apply(&px, 4, 4);
        use Binary::{Neg, Pos};
        assert_eq!(b, vec![Pos, Neg, Neg, Pos]);
        assert_eq!(r.output_len(28, 28), 196);
    }
}
