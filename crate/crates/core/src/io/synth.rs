//! Synthetic low-rank tensors with controlled outlier contamination.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::floor_fraction;
use crate::model::FactorModel;
use crate::tensor::{Dims, Entry, Mode, SparseTensor};

/// Ground-truth factors are drawn from `[TRUTH_LOW, TRUTH_HIGH)`.
pub const TRUTH_LOW: f64 = 0.5;
pub const TRUTH_HIGH: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: Dims,
    pub rank: usize,
    /// Fraction of observed cells, in `(0, 1]`.
    pub density: f64,
    pub noise_std: f64,
    /// Fraction of observed entries turned into outliers, in `[0, 1)`.
    pub outlier_rate: f64,
    /// Multiplier applied to outliers, `> 1`.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(dims: Dims, rank: usize, density: f64, seed: u64) -> Self {
        SynthSpec { dims, rank, density, noise_std: 0.0, outlier_rate: 0.0, outlier_scale: 10.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let cells = self
            .dims
            .cells()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::InvalidDims(format!("{}: unusable shape", self.dims)))?;
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if self.observed_count(cells) == 0 {
            return bad(format!("density {} observes no cell of {}", self.density, self.dims));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be nonnegative, got {}", self.noise_std));
        }
        if !(self.outlier_rate >= 0.0 && self.outlier_rate < 1.0) {
            return bad(format!("outlier_rate must lie in [0, 1), got {}", self.outlier_rate));
        }
        if !(self.outlier_scale > 1.0 && self.outlier_scale.is_finite()) {
            return bad(format!("outlier_scale must exceed 1, got {}", self.outlier_scale));
        }
        Ok(())
    }

    fn observed_count(&self, cells: usize) -> usize {
        floor_fraction(self.density, cells).min(cells)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub observed: SparseTensor,
    pub truth: FactorModel,
    /// `outliers[p]` flags entry `p` of `observed`.
    pub outliers: Vec<bool>,
}

impl Synthetic {
    pub fn outlier_entries(&self) -> Vec<Entry> {
        self.observed
            .entries()
            .iter()
            .zip(&self.outliers)
            .filter(|(_, &o)| o)
            .map(|(e, _)| *e)
            .collect()
    }
}

/// Draws a ground-truth model and a sampled, noisy, contaminated tensor.
///
/// Draw order (all from one ChaCha8 stream seeded with `seed`): `U`, `S`, `T`
/// row-major; the observed cells (sorted, row-major cell order); one Gaussian
/// per observed entry when `noise_std > 0`; the outlier positions.
pub fn synthesize(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let dims = spec.dims;
    let cells = dims.cells().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut truth = FactorModel::zeros(dims, spec.rank);
    for mode in Mode::ALL {
        for v in truth.factor_mut(mode).as_mut_slice() {
            *v = rng.random_range(TRUTH_LOW..TRUTH_HIGH);
        }
    }

    let count = spec.observed_count(cells);
    let mut picked = index::sample(&mut rng, cells, count).into_vec();
    picked.sort_unstable();
    let (nj, nk) = (dims.0[1], dims.0[2]);
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let mut entries: Vec<Entry> = picked
        .into_iter()
        .map(|cell| {
            let (i, j, k) = (cell / (nj * nk), (cell / nk) % nj, cell % nk);
            let mut y = truth.predict_unchecked(i, j, k);
            if let Some(noise) = &noise {
                y = (y + noise.sample(&mut rng)).max(0.0);
            }
            Entry::new(i, j, k, y)
        })
        .collect();

    let n_out = floor_fraction(spec.outlier_rate, count).min(count);
    let mut outliers = vec![false; count];
    for p in index::sample(&mut rng, count, n_out) {
        outliers[p] = true;
        entries[p].y *= spec.outlier_scale;
    }

    Ok(Synthetic { observed: SparseTensor::build(dims, entries)?, truth, outliers })
}
