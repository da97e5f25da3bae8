//! Coordinate-format storage for a sparse third-order QoS tensor.
//!
//! Every entry lives once in a flat array; each mode additionally keeps, per
//! index, the list of entry positions that share that coordinate. The update
//! rules only ever iterate those per-entity slices.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three tensor modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    User,
    Service,
    Time,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::User, Mode::Service, Mode::Time];

    #[inline]
    pub fn axis(self) -> usize {
        match self {
            Mode::User => 0,
            Mode::Service => 1,
            Mode::Time => 2,
        }
    }

    /// The two remaining modes, in axis order.
    #[inline]
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::User => (Mode::Service, Mode::Time),
            Mode::Service => (Mode::User, Mode::Time),
            Mode::Time => (Mode::User, Mode::Service),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::User => "user",
            Mode::Service => "service",
            Mode::Time => "time",
        })
    }
}

/// Tensor shape `(|I|, |J|, |K|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(users: usize, services: usize, times: usize) -> Result<Self> {
        let dims = Dims([users, services, times]);
        if dims.0.contains(&0) {
            return Err(Error::InvalidDims(format!("{dims}: every mode must be positive")));
        }
        Ok(dims)
    }

    #[inline]
    pub fn get(&self, mode: Mode) -> usize {
        self.0[mode.axis()]
    }

    /// Number of cells, `None` on overflow.
    pub fn cells(&self) -> Option<usize> {
        self.0[0].checked_mul(self.0[1])?.checked_mul(self.0[2])
    }

    /// Elementwise maximum.
    pub fn union(&self, other: &Dims) -> Dims {
        Dims([
            self.0[0].max(other.0[0]),
            self.0[1].max(other.0[1]),
            self.0[2].max(other.0[2]),
        ])
    }

    pub fn contains(&self, other: &Dims) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a >= b)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

/// A single observed value `y` at cell `(i, j, k)`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub y: f64,
}

impl Entry {
    pub fn new(i: usize, j: usize, k: usize, y: f64) -> Self {
        Entry { i, j, k, y }
    }

    #[inline]
    pub fn coord(&self, mode: Mode) -> usize {
        match mode {
            Mode::User => self.i,
            Mode::Service => self.j,
            Mode::Time => self.k,
        }
    }

    #[inline]
    pub fn triple(&self) -> (usize, usize, usize) {
        (self.i, self.j, self.k)
    }
}

/// The observed entry set together with its per-mode slices.
#[derive(Debug, Clone)]
pub struct SparseTensor {
    dims: Dims,
    entries: Vec<Entry>,
    slices: [Vec<Vec<usize>>; 3],
}

impl SparseTensor {
    /// Validates `entries` against `dims` and indexes them by mode.
    ///
    /// Entry order is preserved. Duplicate cells are rejected rather than
    /// merged, since merging would silently change the slice sizes.
    pub fn build(dims: Dims, entries: Vec<Entry>) -> Result<Self> {
        if dims.0.contains(&0) {
            return Err(Error::InvalidDims(format!("{dims}: every mode must be positive")));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            for mode in Mode::ALL {
                let dim = dims.get(mode);
                if e.coord(mode) >= dim {
                    return Err(Error::IndexOutOfRange { mode, index: e.coord(mode), dim });
                }
            }
            if !e.y.is_finite() || e.y < 0.0 {
                return Err(Error::InvalidValue { i: e.i, j: e.j, k: e.k, value: e.y });
            }
            if !seen.insert(e.triple()) {
                return Err(Error::DuplicateEntry { i: e.i, j: e.j, k: e.k });
            }
        }

        let mut slices: [Vec<Vec<usize>>; 3] = Mode::ALL.map(|m| vec![Vec::new(); dims.get(m)]);
        for (pos, e) in entries.iter().enumerate() {
            for mode in Mode::ALL {
                slices[mode.axis()][e.coord(mode)].push(pos);
            }
        }
        Ok(SparseTensor { dims, entries, slices })
    }

    /// Builds with dims inferred as `max index + 1` per mode.
    pub fn from_entries(entries: Vec<Entry>) -> Result<Self> {
        let dims = infer_dims(&entries).ok_or(Error::Empty("cannot infer dimensions"))?;
        Self::build(dims, entries)
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `|Λ| / (|I|·|J|·|K|)`.
    pub fn density(&self) -> f64 {
        let cells = self.dims.0.iter().map(|&d| d as f64).product::<f64>();
        self.entries.len() as f64 / cells
    }

    /// Positions of the entries whose `mode` coordinate equals `index`.
    pub fn slice(&self, mode: Mode, index: usize) -> Result<&[usize]> {
        let dim = self.dims.get(mode);
        if index >= dim {
            return Err(Error::IndexOutOfRange { mode, index, dim });
        }
        Ok(&self.slices[mode.axis()][index])
    }

    /// Unchecked variant used by the optimizer's inner loops.
    #[inline]
    pub(crate) fn slice_positions(&self, mode: Mode, index: usize) -> &[usize] {
        &self.slices[mode.axis()][index]
    }

    /// Slice sizes `|Λ(x)|` for every index of `mode`.
    pub fn slice_sizes(&self, mode: Mode) -> impl Iterator<Item = usize> + '_ {
        self.slices[mode.axis()].iter().map(Vec::len)
    }

    /// Number of indices of `mode` with no observed entry.
    pub fn empty_slices(&self, mode: Mode) -> usize {
        self.slice_sizes(mode).filter(|&n| n == 0).count()
    }

    /// Same entries re-indexed under a larger shape.
    pub fn with_dims(&self, dims: Dims) -> Result<Self> {
        Self::build(dims, self.entries.clone())
    }
}

/// Smallest shape containing every entry; `None` for an empty list.
pub fn infer_dims(entries: &[Entry]) -> Option<Dims> {
    if entries.is_empty() {
        return None;
    }
    let mut max = [0usize; 3];
    for e in entries {
        for mode in Mode::ALL {
            max[mode.axis()] = max[mode.axis()].max(e.coord(mode));
        }
    }
    // saturating keeps an index of usize::MAX from wrapping to a zero dim
    Some(Dims(max.map(|m| m.saturating_add(1))))
}
