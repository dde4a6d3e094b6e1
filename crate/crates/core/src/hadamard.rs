//! Sylvester Hadamard bases for single-pixel measurement.
//!
//! A basis of order `k` covers a `2^k × 2^k` pixel grid, so it holds
//! `N = 4^k` rows of length `N`. Row `i` is reshaped row-major into an
//! `n × n` pattern. Entries are never stored densely: the Sylvester matrix
//! satisfies `H[i][j] = (-1)^popcount(i & j)`, which is evaluated on demand.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Largest Sylvester order accepted by [`sylvester`].
pub const MAX_SYLVESTER_LOG2: u32 = 13;

/// Largest grid order for a [`HadamardBasis`] (`N = 4^k` must stay within the
/// Sylvester guard).
pub const MAX_GRID_LOG2: u32 = MAX_SYLVESTER_LOG2 / 2;

/// Entry `(row, col)` of the natural-order Sylvester matrix.
#[inline]
pub fn entry(row: usize, col: usize) -> i8 {
    if (row & col).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Dense `2^k × 2^k` Sylvester matrix, built by the block recursion
/// `[[H, H], [H, -H]]`.
pub fn sylvester(k: u32) -> Result<Array2<i8>> {
    if k > MAX_SYLVESTER_LOG2 {
        return Err(Error::Size(format!(
            "sylvester order {k} exceeds limit {MAX_SYLVESTER_LOG2}"
        )));
    }
    let n = 1usize << k;
    let mut h = Array2::<i8>::zeros((n, n));
    h[[0, 0]] = 1;
    let mut size = 1;
    while size < n {
        for r in 0..size {
            for c in 0..size {
                let v = h[[r, c]];
                h[[r, c + size]] = v;
                h[[r + size, c]] = v;
                h[[r + size, c + size]] = -v;
            }
        }
        size *= 2;
    }
    Ok(h)
}

/// In-place unnormalized fast Walsh–Hadamard transform in natural order.
pub fn fwht_in_place(data: &mut [f64]) -> Result<()> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(Error::Size(format!("fwht length {n} is not a power of two")));
    }
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// Returns `H_N · v`.
pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Row ordering strategy for a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    /// Sylvester row order.
    Natural,
    /// Ascending number of sign changes along the 1D row.
    Sequency,
    /// Ascending number of 0↔1 transitions in the reshaped 2D pattern,
    /// counted along rows and columns.
    ConnectivityAscending,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::Natural => "natural",
            Ordering::Sequency => "sequency",
            Ordering::ConnectivityAscending => "connectivity",
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(Ordering::Natural),
            "sequency" => Ok(Ordering::Sequency),
            "connectivity" | "connectivity-ascending" => Ok(Ordering::ConnectivityAscending),
            other => Err(Error::Domain(format!("unknown ordering '{other}'"))),
        }
    }
}

/// A Sylvester basis over a `2^k × 2^k` grid together with a row ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardBasis {
    grid_log2: u32,
    ordering: Ordering,
    permutation: Vec<usize>,
}

impl HadamardBasis {
    pub fn new(grid_log2: u32, ordering: Ordering) -> Result<Self> {
        if grid_log2 > MAX_GRID_LOG2 {
            return Err(Error::Size(format!(
                "grid order {grid_log2} exceeds limit {MAX_GRID_LOG2}"
            )));
        }
        let mut basis = HadamardBasis {
            grid_log2,
            ordering: Ordering::Natural,
            permutation: (0..1usize << (2 * grid_log2)).collect(),
        };
        if ordering != Ordering::Natural {
            basis.permutation = order_basis(&basis, ordering);
            basis.ordering = ordering;
        }
        Ok(basis)
    }

    pub fn grid_log2(&self) -> u32 {
        self.grid_log2
    }

    /// Pattern side length `n`.
    pub fn side(&self) -> usize {
        1 << self.grid_log2
    }

    /// Number of rows (and pixels), `N = n²`.
    pub fn len(&self) -> usize {
        1 << (2 * self.grid_log2)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Row `index` (natural numbering) as a ±1 vector.
    pub fn row(&self, index: usize) -> Vec<i8> {
        (0..self.len()).map(|j| entry(index, j)).collect()
    }

    /// Row `index` reshaped row-major to `n × n`.
    pub fn signed_pattern(&self, index: usize) -> Array2<i8> {
        let n = self.side();
        Array2::from_shape_fn((n, n), |(y, x)| entry(index, y * n + x))
    }

    /// Signed pattern as floating point, for use as a reconstruction basis.
    pub fn signed_pattern_f64(&self, index: usize) -> Array2<f64> {
        self.signed_pattern(index).mapv(f64::from)
    }

    /// Header line and index list in the basis export text format.
    pub fn export(&self, indices: &[usize]) -> String {
        let list: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
        format!(
            "HAD k={} order={}\n{}\n",
            self.grid_log2,
            self.ordering,
            list.join(",")
        )
    }
}

/// Parses the basis export text format into `(k, ordering, indices)`.
pub fn parse_export(text: &str) -> Result<(u32, Ordering, Vec<usize>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty basis file".into(),
    })?;
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some("HAD") {
        return Err(bad("missing HAD header"));
    }
    let k = parts
        .next()
        .and_then(|p| p.strip_prefix("k="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing k="))?;
    let ordering = parts
        .next()
        .and_then(|p| p.strip_prefix("order="))
        .ok_or_else(|| bad("missing order="))?
        .parse()?;
    let body = lines.next().unwrap_or("").trim();
    let indices = if body.is_empty() {
        Vec::new()
    } else {
        body.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| Error::Parse {
                    line: 2,
                    msg: format!("bad index '{s}'"),
                })
            })
            .collect::<Result<Vec<usize>>>()?
    };
    Ok((k, ordering, indices))
}

fn sign_changes(basis: &HadamardBasis, index: usize) -> usize {
    (1..basis.len())
        .filter(|&j| entry(index, j) != entry(index, j - 1))
        .count()
}

fn transitions_2d(basis: &HadamardBasis, index: usize) -> usize {
    let n = basis.side();
    let at = |y: usize, x: usize| entry(index, y * n + x);
    let mut count = 0;
    for y in 0..n {
        for x in 0..n {
            if x + 1 < n && at(y, x) != at(y, x + 1) {
                count += 1;
            }
            if y + 1 < n && at(y, x) != at(y + 1, x) {
                count += 1;
            }
        }
    }
    count
}

/// Permutation of natural row indices for the given strategy. Ties keep
/// natural order.
pub fn order_basis(basis: &HadamardBasis, strategy: Ordering) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..basis.len()).collect();
    match strategy {
        Ordering::Natural => {}
        Ordering::Sequency => {
            let keys: Vec<usize> = perm.iter().map(|&i| sign_changes(basis, i)).collect();
            perm.sort_by_key(|&i| keys[i]);
        }
        Ordering::ConnectivityAscending => {
            let keys: Vec<usize> = perm.iter().map(|&i| transitions_2d(basis, i)).collect();
            perm.sort_by_key(|&i| keys[i]);
        }
    }
    perm
}

/// Number of rows kept at a sampling `rate`, rounded half-up, at least one.
pub fn compressed_len(total: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Domain(format!("sampling rate {rate} not in (0, 1]")));
    }
    let m = (rate * total as f64 + 0.5).floor() as usize;
    Ok(m.clamp(1, total))
}

/// The first `round(rate · N)` entries of `permutation`.
pub fn compress(permutation: &[usize], rate: f64) -> Result<Vec<usize>> {
    let m = compressed_len(permutation.len(), rate)?;
    Ok(permutation[..m].to_vec())
}

/// Binary realization of one signed Hadamard row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternPair {
    /// Pixels where the row is +1.
    pub positive: Array2<u8>,
    /// Pixels where the row is −1.
    pub negative: Array2<u8>,
}

impl PatternPair {
    /// `P⁺ − P⁻`, the signed pattern.
    pub fn signed(&self) -> Array2<f64> {
        let mut out = self.positive.mapv(f64::from);
        out.zip_mut_with(&self.negative, |a, &b| *a -= f64::from(b));
        out
    }
}

pub fn make_pattern_pair(basis: &HadamardBasis, index: usize, n: usize) -> Result<PatternPair> {
    if n * n != basis.len() {
        return Err(Error::Size(format!(
            "pattern side {n} does not match basis of {} rows",
            basis.len()
        )));
    }
    if index >= basis.len() {
        return Err(Error::Size(format!(
            "pattern index {index} out of range 0..{}",
            basis.len()
        )));
    }
    let signed = basis.signed_pattern(index);
    Ok(PatternPair {
        positive: signed.mapv(|v| u8::from(v > 0)),
        negative: signed.mapv(|v| u8::from(v < 0)),
    })
}
