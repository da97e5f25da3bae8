//! Held-out accuracy and train/validation/test splitting.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FactorModel;
use crate::tensor::{Entry, Mode, SparseTensor};

/// Mean absolute error of `model` over `entries`.
///
/// The absolute residuals are combined by pairwise summation in entry order,
/// so the result does not depend on how callers chunk the work.
pub fn mae(model: &FactorModel, entries: &[Entry]) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::Empty("MAE needs at least one entry"));
    }
    let errs = entries
        .iter()
        .map(|e| model.residual(e).map(f64::abs))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&errs) / entries.len() as f64)
}

/// Recursive halving sum; leaves of up to 64 values are summed left to right.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Entries of `entries` whose user, service or time index has no entry in
/// `train`.
pub fn count_cold(train: &SparseTensor, entries: &[Entry]) -> usize {
    let dims = train.dims();
    entries
        .iter()
        .filter(|e| {
            Mode::ALL.iter().any(|&m| {
                let x = e.coord(m);
                x >= dims.get(m) || train.slice_positions(m, x).is_empty()
            })
        })
        .count()
}

/// `train : validation : test` proportions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub m_ratio: f64,
    pub n_ratio: f64,
    pub o_ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(m_ratio: f64, n_ratio: f64, o_ratio: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec { m_ratio, n_ratio, o_ratio, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ratios = [self.m_ratio, self.n_ratio, self.o_ratio];
        if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidConfig(format!("split ratios must be nonnegative: {ratios:?}")));
        }
        if self.m_ratio <= 0.0 {
            return Err(Error::InvalidConfig("training ratio must be positive".into()));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must sum to 1: {ratios:?}")));
        }
        Ok(())
    }
}

/// `⌊ratio·n⌋`, tolerant of the representation error in `ratio` (so that
/// `0.29·100` yields 29, not 28).
pub(crate) fn floor_fraction(ratio: f64, n: usize) -> usize {
    let x = ratio * n as f64;
    let snapped = x.round();
    if (x - snapped).abs() <= 1e-9 * x.abs().max(1.0) {
        snapped as usize
    } else {
        x.floor() as usize
    }
}

/// Sizes of the three parts: `⌊m·n⌋`, `⌊n_ratio·n⌋` and the remainder.
pub fn split_sizes(n: usize, spec: &SplitSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let train = floor_fraction(spec.m_ratio, n).min(n);
    let validation = floor_fraction(spec.n_ratio, n).min(n - train);
    Ok((train, validation, n - train - validation))
}

/// Uniform random, seed-deterministic partition of the tensor's entries.
///
/// The permutation is a Fisher–Yates shuffle of the entry positions driven by
/// ChaCha8 seeded with `seed` (`seed_from_u64`): for `i = n-1, …, 1` the swap
/// partner is `j = (x · (i+1)) >> 64` with `x` the next 64-bit output. The
/// first `⌊m·n⌋` shuffled positions form the training set, the next
/// `⌊n_ratio·n⌋` the validation set, the rest the test set. Each part keeps
/// the original entry order.
pub fn split(tensor: &SparseTensor, spec: &SplitSpec) -> Result<(Vec<Entry>, Vec<Entry>, Vec<Entry>)> {
    let n = tensor.len();
    let (n_train, n_val, _) = split_sizes(n, spec)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        order.swap(i, j);
    }
    let take = |positions: &mut [usize]| -> Vec<Entry> {
        positions.sort_unstable();
        positions.iter().map(|&p| tensor.entries()[p]).collect()
    };
    let (train, rest) = order.split_at_mut(n_train);
    let (val, test) = rest.split_at_mut(n_val);
    Ok((take(train), take(val), take(test)))
}

/// One line of the per-epoch trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub val_mae: f64,
    pub max_primal_residual: f64,
}

/// Training trace and final accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch completed.
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub test_mae: Option<f64>,
    /// Test entries touching an entity absent from training.
    pub cold_test_entries: Option<usize>,
    /// Entities per mode with an empty training slice; they keep their
    /// initial values.
    pub skipped_entities: [usize; 3],
    /// Row phases are split into contiguous index ranges across this many
    /// workers. Results do not depend on it.
    pub threads: usize,
    pub diverged: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;
    use proptest::prelude::*;
    use rand::RngCore;
    use std::collections::HashSet;

    fn constant_model(dims: Dims, value: f64) -> FactorModel {
        let mut m = FactorModel::zeros(dims, 1);
        m.bias_mut(Mode::User).fill(value);
        m
    }

    #[test]
    fn mae_examples() {
        let m = constant_model(Dims([2, 1, 1]), 3.0);
        assert_eq!(mae(&m, &[Entry::new(0, 0, 0, 3.0)]).unwrap(), 0.0);
        assert_eq!(mae(&m, &[Entry::new(0, 0, 0, 5.0)]).unwrap(), 2.0);
        let two = [Entry::new(0, 0, 0, 4.0), Entry::new(1, 0, 0, 0.0)];
        assert_eq!(mae(&m, &two).unwrap(), 2.0);
        assert!(matches!(mae(&m, &[]), Err(Error::Empty(_))));
        assert!(mae(&m, &[Entry::new(2, 0, 0, 1.0)]).is_err());
    }

    #[test]
    fn standard_ratios_on_hundred_entries() {
        let tensor = SparseTensor::build(
            Dims([100, 1, 1]),
            (0..100).map(|i| Entry::new(i, 0, 0, 1.0)).collect(),
        )
        .unwrap();
        for (m, n, o, want) in [(0.16, 0.04, 0.80, (16, 4, 80)), (0.20, 0.05, 0.75, (20, 5, 75))] {
            let spec = SplitSpec::new(m, n, o, 11).unwrap();
            let (a, b, c) = split(&tensor, &spec).unwrap();
            assert_eq!((a.len(), b.len(), c.len()), want);
        }
    }

    #[test]
    fn large_split_train_and_validation_counts() {
        // 30,287,611 known records
        let n = 30_287_611;
        let d11 = split_sizes(n, &SplitSpec::new(0.16, 0.04, 0.80, 0).unwrap()).unwrap();
        assert_eq!((d11.0, d11.1), (4_846_017, 1_211_504));
        let d12 = split_sizes(n, &SplitSpec::new(0.20, 0.05, 0.75, 0).unwrap()).unwrap();
        assert_eq!((d12.0, d12.1), (6_057_522, 1_514_380));
    }

    #[test]
    fn floor_handles_representation_error() {
        assert_eq!(floor_fraction(0.29, 100), 29);
        assert_eq!(floor_fraction(0.07, 100), 7);
        assert_eq!(floor_fraction(0.5, 3), 1);
    }

    #[test]
    fn same_seed_same_split() {
        let tensor = SparseTensor::build(
            Dims([50, 2, 1]),
            (0..100).map(|n| Entry::new(n / 2, n % 2, 0, n as f64)).collect(),
        )
        .unwrap();
        let spec = SplitSpec::new(0.5, 0.25, 0.25, 99).unwrap();
        assert_eq!(split(&tensor, &spec).unwrap(), split(&tensor, &spec).unwrap());
        let other = SplitSpec { seed: 100, ..spec };
        assert_ne!(split(&tensor, &spec).unwrap().0, split(&tensor, &other).unwrap().0);
    }

    #[test]
    fn invalid_ratios() {
        assert!(SplitSpec::new(0.0, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(0.5, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(1.2, -0.2, 0.0, 0).is_err());
        assert!(SplitSpec::new(f64::NAN, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(1.0, 0.0, 0.0, 0).is_ok());
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|x| x as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn cold_entries() {
        let train = SparseTensor::build(Dims([2, 2, 1]), vec![Entry::new(0, 0, 0, 1.0)]).unwrap();
        let test = [Entry::new(0, 0, 0, 1.0), Entry::new(1, 0, 0, 1.0), Entry::new(0, 0, 3, 1.0)];
        assert_eq!(count_cold(&train, &test), 2);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(
            n in 1usize..300,
            m in 0.01f64..0.98,
            frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let rest = 1.0 - m;
            let spec = SplitSpec::new(m, rest * frac, rest * (1.0 - frac), seed).unwrap();
            let tensor = SparseTensor::build(
                Dims([n, 1, 1]),
                (0..n).map(|i| Entry::new(i, 0, 0, i as f64)).collect(),
            ).unwrap();
            let (a, b, c) = split(&tensor, &spec).unwrap();
            let (sa, sb, _) = split_sizes(n, &spec).unwrap();
            prop_assert_eq!(a.len(), sa);
            prop_assert_eq!(b.len(), sb);
            prop_assert_eq!(a.len() + b.len() + c.len(), n);
            let all: HashSet<usize> = a.iter().chain(&b).chain(&c).map(|e| e.i).collect();
            prop_assert_eq!(all.len(), n);
        }

        #[test]
        fn mae_is_permutation_invariant_and_scales(
            ys in proptest::collection::vec(0.0f64..10.0, 1..40),
            bias in 0.0f64..5.0,
            scale in 0.1f64..10.0,
            seed in any::<u64>(),
        ) {
            let n = ys.len();
            let dims = Dims([n, 1, 1]);
            let mut model = FactorModel::zeros(dims, 1);
            model.factor_mut(Mode::User).as_mut_slice().iter_mut().enumerate()
                .for_each(|(i, v)| *v = (i % 3) as f64 * 0.5);
            model.factor_mut(Mode::Service).row_mut(0)[0] = 1.0;
            model.factor_mut(Mode::Time).row_mut(0)[0] = bias;
            let entries: Vec<Entry> = ys.iter().enumerate().map(|(i, &y)| Entry::new(i, 0, 0, y)).collect();
            let base = mae(&model, &entries).unwrap();

            let mut shuffled = entries.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let perm = mae(&model, &shuffled).unwrap();
            prop_assert!((perm - base).abs() <= 1e-12 * base.max(1.0));

            let mut scaled_model = model.clone();
            for v in scaled_model.factor_mut(Mode::User).as_mut_slice() {
                *v *= scale;
            }
            let scaled: Vec<Entry> = entries.iter().map(|e| Entry { y: e.y * scale, ..*e }).collect();
            let s = mae(&scaled_model, &scaled).unwrap();
            prop_assert!((s - scale * base).abs() <= 1e-9 * (scale * base).max(1.0));
        }
    }
}
