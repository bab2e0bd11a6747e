//! Top-k binarization and Smith-Waterman local alignment with at most one
//! skipped beat per step.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scoring {
    pub matched: i64,
    pub mismatched: i64,
    /// Added once for every step that skips a beat on either side.
    pub skip: i64,
}

impl Default for Scoring {
    fn default() -> Self {
        Self {
            matched: 2,
            mismatched: -3,
            skip: -2,
        }
    }
}

impl Scoring {
    pub fn cell(&self, on: bool) -> i64 {
        if on {
            self.matched
        } else {
            self.mismatched
        }
    }
}

/// Allowed steps `(di, dj)` between consecutive path cells.
pub const STEPS: [(usize, usize); 3] = [(1, 1), (2, 1), (1, 2)];

/// Number of cells [`threshold_top`] keeps for an `m x n` matrix.
pub fn threshold_count(m: usize, n: usize) -> usize {
    let mn = m * n;
    ((3.0 * (mn as f64).sqrt()).round() as usize).min(mn)
}

/// Marks the [`threshold_count`] largest entries of `d`. Equal values are
/// taken in row-major order.
pub fn threshold_top(d: &Array2<f64>) -> Array2<bool> {
    let (m, n) = d.dim();
    let flat: Vec<f64> = d.iter().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    // stable sort keeps row-major order among ties
    order.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]));
    let mut out = Array2::from_elem((m, n), false);
    for &idx in order.iter().take(threshold_count(m, n)) {
        out[[idx / n, idx % n]] = true;
    }
    out
}

/// Ordered beat-index pairs `(i, j)` linking beat `i` of one song to beat `j`
/// of the other.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when consecutive pairs advance by one of [`STEPS`].
    pub fn is_valid(&self) -> bool {
        self.pairs.windows(2).all(|w| {
            let step = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            STEPS.contains(&step)
        })
    }

    /// Sum of cell scores plus one skip penalty per skipping step.
    pub fn score(&self, b: &Array2<bool>, scoring: &Scoring) -> i64 {
        let cells: i64 = self.pairs.iter().map(|&(i, j)| scoring.cell(b[[i, j]])).sum();
        let skips = self
            .pairs
            .windows(2)
            .filter(|w| w[1].0 - w[0].0 > 1 || w[1].1 - w[0].1 > 1)
            .count() as i64;
        cells + skips * scoring.skip
    }

    /// One `i j t_i s_j` row per pair, onsets in seconds.
    pub fn to_text(&self, onsets_a: &[f64], onsets_b: &[f64]) -> String {
        let mut out = String::new();
        for &(i, j) in &self.pairs {
            let t = onsets_a.get(i).copied().unwrap_or(f64::NAN);
            let s = onsets_b.get(j).copied().unwrap_or(f64::NAN);
            writeln!(out, "{i} {j} {t} {s}").expect("write to string");
        }
        out
    }

    /// Parses the output of [`AlignmentPath::to_text`], returning the path and
    /// the onset columns. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<(AlignmentPath, Vec<f64>, Vec<f64>)> {
        let mut path = AlignmentPath::default();
        let (mut ts, mut ss) = (Vec::new(), Vec::new());
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("alignment path line {}: {what}", line_no + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("bad index"))?;
            let t: f64 = fields[2].parse().map_err(|_| bad("bad time"))?;
            let s: f64 = fields[3].parse().map_err(|_| bad("bad time"))?;
            if !t.is_finite() || !s.is_finite() {
                return Err(bad("non-finite time"));
            }
            path.pairs.push((i, j));
            ts.push(t);
            ss.push(s);
        }
        if !path.is_valid() {
            return Err(Error::Format("alignment path steps are not monotone".into()));
        }
        Ok((path, ts, ss))
    }
}

/// Local alignment over a binary match matrix. Returns the score matrix and
/// the path traced back from the first maximal cell in row-major order, or
/// an empty path when no cell scores above zero.
pub fn smith_waterman(b: &Array2<bool>, scoring: &Scoring) -> (Array2<i64>, AlignmentPath) {
    let (m, n) = b.dim();
    let mut d = Array2::<i64>::zeros((m, n));
    let pred = |d: &Array2<i64>, i: usize, j: usize, (di, dj): (usize, usize)| -> Option<i64> {
        if i >= di && j >= dj {
            let extra = if di + dj > 2 { scoring.skip } else { 0 };
            Some(d[[i - di, j - dj]] + extra)
        } else {
            None
        }
    };
    for i in 0..m {
        for j in 0..n {
            let best = STEPS.iter().filter_map(|&st| pred(&d, i, j, st)).fold(0, i64::max);
            d[[i, j]] = (scoring.cell(b[[i, j]]) + best).max(0);
        }
    }
    let mut best = (0, 0);
    for i in 0..m {
        for j in 0..n {
            if d[[i, j]] > d[[best.0, best.1]] {
                best = (i, j);
            }
        }
    }
    let mut path = AlignmentPath::default();
    if m == 0 || n == 0 || d[best] <= 0 {
        return (d, path);
    }
    let (mut i, mut j) = best;
    loop {
        path.pairs.push((i, j));
        let rest = d[[i, j]] - scoring.cell(b[[i, j]]);
        if rest <= 0 {
            break;
        }
        let step = STEPS
            .iter()
            .copied()
            .find(|&st| pred(&d, i, j, st) == Some(rest))
            .expect("score has a predecessor");
        i -= step.0;
        j -= step.1;
    }
    path.pairs.reverse();
    (d, path)
}
