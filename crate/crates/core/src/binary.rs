//! Binary (+1/-1) values used for weights and activations.

use std::fmt;
use std::ops::Neg;

/// A binarized value. `Pos` is +1, `Neg` is -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Binary {
    Neg,
    Pos,
}

impl Binary {
    #[inline]
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Binary::Pos
        } else {
            Binary::Neg
        }
    }

    /// Parses +1/-1 from an integer; anything else is rejected.
    pub fn from_i32(v: i32) -> Option<Self> {
        match v {
            1 => Some(Binary::Pos),
            -1 => Some(Binary::Neg),
            _ => None,
        }
    }

    #[inline]
    pub fn is_pos(self) -> bool {
        self == Binary::Pos
    }

    #[inline]
    pub fn to_i32(self) -> i32 {
        match self {
            Binary::Pos => 1,
            Binary::Neg => -1,
        }
    }

    /// XNOR in the +1/-1 algebra, i.e. the product of the two values.
    #[inline]
    pub fn xnor(self, other: Binary) -> Binary {
        Binary::from_bool(self == other)
    }
}

impl Neg for Binary {
    type Output = Binary;

    #[inline]
    fn neg(self) -> Binary {
        match self {
            Binary::Pos => Binary::Neg,
            Binary::Neg => Binary::Pos,
        }
    }
}

impl fmt::Display for Binary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Binary::Pos => "1",
            Binary::Neg => "-1",
        })
    }
}

/// Dense row-major matrix of binary values. For layer weights, row `j`
/// holds the incoming weights of output neuron `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Binary>,
}

impl BinaryMatrix {
    pub fn filled(rows: usize, cols: usize, v: Binary) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Binary>>) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let n = rows.len();
        Some(Self {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Binary) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Binary {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Binary) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Binary] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Binary] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Number of `+1` results of the element-wise XNOR of two vectors.
pub fn xnor_popcount(a: &[Binary], b: &[Binary]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xnor_truth_table() {
        use Binary::*;
        assert_eq!(Pos.xnor(Pos), Pos);
        assert_eq!(Pos.xnor(Neg), Neg);
        assert_eq!(Neg.xnor(Pos), Neg);
        assert_eq!(Neg.xnor(Neg), Pos);
        for a in [Pos, Neg] {
            for b in [Pos, Neg] {
                assert_eq!(a.xnor(b).to_i32(), a.to_i32() * b.to_i32());
            }
        }
    }

    #[test]
    fn parse_only_unit_values() {
        assert_eq!(Binary::from_i32(1), Some(Binary::Pos));
        assert_eq!(Binary::from_i32(-1), Some(Binary::Neg));
        assert_eq!(Binary::from_i32(0), None);
        assert_eq!(Binary::from_i32(2), None);
    }
}
