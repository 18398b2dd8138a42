//! Binarized fully-connected models and their text format.
//!
//! ```text
//! bnnsim-model 1
//! # comments and blank lines are ignored
//! input pool 2 threshold 0.5
//! layer hidden <fan_in> <fan_out>
//! weights
//! <fan_out lines of fan_in characters, 1 = +1, 0 = -1>
//! block_thresholds <n_blocks>
//! <n_blocks lines of fan_out integers>
//! layer output <fan_in> <fan_out>
//! weights
//! ...
//! thresholds
//! <one line of fan_out integers>
//! end
//! ```
//!
//! A hidden layer may carry a single `thresholds` line instead of
//! `block_thresholds`; the per-block values are then derived at compile
//! time. Block thresholds count real inputs only; padding offsets are added
//! by the compiler.

use std::fmt::Write as _;

use crate::binary::{Binary, BinaryMatrix};

use super::MapperError;

pub const MODEL_MAGIC: &str = "bnnsim-model 1";

/// First-layer input rule: `pool x pool` mean pooling of unit-scaled
/// pixels, then `+1` where the pooled value exceeds `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBinarization {
    pub pool: usize,
    pub threshold: f64,
}

impl Default for InputBinarization {
    fn default() -> Self {
        Self { pool: 1, threshold: 0.5 }
    }
}

impl InputBinarization {
    /// Binarizes a row-major `width x height` image. Trailing rows and
    /// columns that do not fill a pooling window are dropped.
    pub fn apply(&self, pixels: &[f32], width: usize, height: usize) -> Vec<Binary> {
        let k = self.pool.max(1);
        let (ow, oh) = (width / k, height / k);
        let mut out = Vec::with_capacity(ow * oh);
        let norm = (k * k) as f64;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0f64;
                for dy in 0..k {
                    let row = (oy * k + dy) * width + ox * k;
                    s += pixels[row..row + k].iter().map(|&p| p as f64).sum::<f64>();
                }
                out.push(Binary::from_bool(s / norm > self.threshold));
            }
        }
        out
    }

    pub fn output_len(&self, width: usize, height: usize) -> usize {
        let k = self.pool.max(1);
        (width / k) * (height / k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Binary activations, mapped onto tiles.
    Hidden,
    /// Integer class scores, evaluated directly.
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerThresholds {
    /// One threshold per neuron over the full fan-in.
    Monolithic(Vec<i64>),
    /// `[block][neuron]`, each counting only the block's real inputs.
    PerBlock(Vec<Vec<i64>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub kind: LayerKind,
    /// `fan_out x fan_in`.
    pub weights: BinaryMatrix,
    pub thresholds: LayerThresholds,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnModel {
    pub input: InputBinarization,
    pub layers: Vec<Layer>,
}

impl BnnModel {
    /// Checks layer chaining, threshold shapes, and that only the last
    /// layer is an output layer.
    pub fn validate(&self) -> Result<(), MapperError> {
        if self.layers.is_empty() {
            return Err(MapperError::EmptyModel);
        }
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |msg: String| Err(MapperError::InvalidModel(format!("layer {i}: {msg}")));
            if l.fan_in() == 0 || l.fan_out() == 0 {
                return bad("empty weight matrix".into());
            }
            if i > 0 && self.layers[i - 1].fan_out() != l.fan_in() {
                return bad(format!(
                    "fan-in {} does not match previous fan-out {}",
                    l.fan_in(),
                    self.layers[i - 1].fan_out()
                ));
            }
            let last = i + 1 == self.layers.len();
            match (l.kind, last) {
                (LayerKind::Output, false) => return bad("output layer must be last".into()),
                (LayerKind::Hidden, true) => return bad("last layer must be an output layer".into()),
                _ => {}
            }
            match &l.thresholds {
                LayerThresholds::Monolithic(t) if t.len() != l.fan_out() => {
                    return bad(format!("{} thresholds for {} neurons", t.len(), l.fan_out()));
                }
                LayerThresholds::PerBlock(_) if l.kind == LayerKind::Output => {
                    return bad("output layer takes monolithic thresholds".into());
                }
                LayerThresholds::PerBlock(b) => {
                    if b.iter().any(|r| r.len() != l.fan_out()) {
                        return bad("block threshold row length differs from fan-out".into());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map(Layer::fan_in).unwrap_or(0)
    }

    pub fn hidden_layers(&self) -> impl Iterator<Item = (usize, &Layer)> {
        self.layers.iter().enumerate().filter(|(_, l)| l.kind == LayerKind::Hidden)
    }

    pub fn output_layer(&self) -> Option<&Layer> {
        self.layers.last().filter(|l| l.kind == LayerKind::Output)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MODEL_MAGIC}\n");
        let _ = writeln!(s, "input pool {} threshold {}", self.input.pool, self.input.threshold);
        let ints = |v: &[i64]| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
        for l in &self.layers {
            let kind = match l.kind {
                LayerKind::Hidden => "hidden",
                LayerKind::Output => "output",
            };
            let _ = writeln!(s, "layer {kind} {} {}", l.fan_in(), l.fan_out());
            s.push_str("weights\n");
            for r in 0..l.fan_out() {
                s.extend(l.weights.row(r).iter().map(|w| if w.is_pos() { '1' } else { '0' }));
                s.push('\n');
            }
            match &l.thresholds {
                LayerThresholds::Monolithic(t) => {
                    let _ = writeln!(s, "thresholds\n{}", ints(t));
                }
                LayerThresholds::PerBlock(b) => {
                    let _ = writeln!(s, "block_thresholds {}", b.len());
                    for row in b {
                        let _ = writeln!(s, "{}", ints(row));
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MapperError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, msg: &str| MapperError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut next = |what: &str| lines.next().ok_or_else(|| perr(0, &format!("unexpected end of file, expected {what}")));

        let (ln, magic) = next("header")?;
        if magic != MODEL_MAGIC {
            return Err(perr(ln, &format!("expected header {MODEL_MAGIC:?}")));
        }
        let mut input = InputBinarization::default();
        let mut layers = Vec::new();
        let mut pending = next("input or layer")?;
        loop {
            let (ln, line) = pending;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["end"] => break,
                ["input", "pool", k, "threshold", t] => {
                    let pool = k.parse().ok().filter(|&k: &usize| k > 0).ok_or_else(|| perr(ln, "bad pool size"))?;
                    let threshold = t.parse().map_err(|_| perr(ln, "bad input threshold"))?;
                    input = InputBinarization { pool, threshold };
                    pending = next("layer")?;
                }
                ["layer", kind, fi, fo] => {
                    let kind = match *kind {
                        "hidden" => LayerKind::Hidden,
                        "output" => LayerKind::Output,
                        "conv" | "conv2d" | "convolution" => {
                            return Err(MapperError::UnsupportedLayer(format!("line {ln}: convolutional layers are not supported")))
                        }
                        other => return Err(MapperError::UnsupportedLayer(format!("line {ln}: unknown layer kind {other:?}"))),
                    };
                    let fan_in: usize = fi.parse().map_err(|_| perr(ln, "bad fan-in"))?;
                    let fan_out: usize = fo.parse().map_err(|_| perr(ln, "bad fan-out"))?;
                    let (wl, w) = next("weights")?;
                    if w != "weights" {
                        return Err(perr(wl, "expected 'weights'"));
                    }
                    let mut rows = Vec::with_capacity(fan_out);
                    for _ in 0..fan_out {
                        let (rl, r) = next("weight row")?;
                        if r.len() != fan_in {
                            return Err(perr(rl, &format!("weight row has {} entries, expected {fan_in}", r.len())));
                        }
                        let row = r
                            .bytes()
                            .map(|b| match b {
                                b'1' => Ok(Binary::Pos),
                                b'0' => Ok(Binary::Neg),
                                _ => Err(perr(rl, "weights must be 0 or 1")),
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        rows.push(row);
                    }
                    let weights = BinaryMatrix::from_rows(rows)
                        .unwrap_or_else(|| BinaryMatrix::filled(fan_out, fan_in, Binary::Pos));
                    let (tl, t) = next("thresholds")?;
                    let parse_ints = |l: usize, s: &str| -> Result<Vec<i64>, MapperError> {
                        let v = s
                            .split_whitespace()
                            .map(|x| x.parse::<i64>().map_err(|_| perr(l, &format!("bad threshold {x:?}"))))
                            .collect::<Result<Vec<_>, _>>()?;
                        if v.len() != fan_out {
                            return Err(perr(l, &format!("{} thresholds, expected {fan_out}", v.len())));
                        }
                        Ok(v)
                    };
                    let toks: Vec<&str> = t.split_whitespace().collect();
                    let thresholds = match toks.as_slice() {
                        ["thresholds"] => {
                            let (l, s) = next("threshold row")?;
                            LayerThresholds::Monolithic(parse_ints(l, s)?)
                        }
                        ["block_thresholds", n] => {
                            let n: usize = n.parse().map_err(|_| perr(tl, "bad block count"))?;
                            let mut b = Vec::with_capacity(n);
                            for _ in 0..n {
                                let (l, s) = next("block threshold row")?;
                                b.push(parse_ints(l, s)?);
                            }
                            LayerThresholds::PerBlock(b)
                        }
                        _ => return Err(perr(tl, "expected 'thresholds' or 'block_thresholds <n>'")),
                    };
                    layers.push(Layer {
                        kind,
                        weights,
                        thresholds,
                    });
                    pending = next("layer or end")?;
                }
                _ => return Err(perr(ln, &format!("unexpected line {line:?}"))),
            }
        }
        let model = BnnModel { input, layers };
        model.validate()?;
        Ok(model)
    }
}
