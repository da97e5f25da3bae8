//! Rank-R CP factors plus linear biases, and the `lft-model v1` text format.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::tensor::{Dims, Entry, Mode, SparseTensor};

const MAGIC: &str = "lft-model";
const VERSION: &str = "v1";
const FACTOR_LABELS: [&str; 3] = ["U", "S", "T"];
const BIAS_LABELS: [&str; 3] = ["a", "b", "c"];

/// Upper bound (exclusive) of the uniform factor initialization.
pub const INIT_SCALE: f64 = 0.1;

/// Dense row-major `rows × rank` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    rows: usize,
    rank: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, rank: usize) -> Self {
        FactorMatrix { rows, rank, data: vec![0.0; rows * rank] }
    }

    pub fn from_vec(rows: usize, rank: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * rank {
            return Err(Error::InvalidDims(format!(
                "factor data has {} values, expected {rows}x{rank}",
                data.len()
            )));
        }
        Ok(FactorMatrix { rows, rank, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.rank..(i + 1) * self.rank]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.rank..(i + 1) * self.rank]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Names of the six parameter groups, in storage order.
pub const GROUP_NAMES: [&str; 6] = ["U", "S", "T", "a", "b", "c"];

/// Latent factors `U, S, T` and biases `a, b, c`.
///
/// The trained model is nonnegative; the optimizer also uses this type for its
/// unconstrained auxiliary copies and multipliers, which share the shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    rank: usize,
    dims: Dims,
    factors: [FactorMatrix; 3],
    biases: [Vec<f64>; 3],
}

impl FactorModel {
    pub fn zeros(dims: Dims, rank: usize) -> Self {
        FactorModel {
            rank,
            dims,
            factors: Mode::ALL.map(|m| FactorMatrix::zeros(dims.get(m), rank)),
            biases: Mode::ALL.map(|m| vec![0.0; dims.get(m)]),
        }
    }

    /// Factors drawn uniformly from `[0, INIT_SCALE)`, biases zero.
    pub fn random<R: Rng + ?Sized>(dims: Dims, rank: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(dims, rank);
        for f in &mut model.factors {
            for v in f.as_mut_slice() {
                *v = rng.random_range(0.0..INIT_SCALE);
            }
        }
        model
    }

    pub fn from_parts(
        rank: usize,
        factors: [FactorMatrix; 3],
        biases: [Vec<f64>; 3],
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        let dims = Dims([factors[0].rows(), factors[1].rows(), factors[2].rows()]);
        for mode in Mode::ALL {
            let f = &factors[mode.axis()];
            if f.rank() != rank {
                return Err(Error::InvalidDims(format!("{mode} factor has rank {}", f.rank())));
            }
            if biases[mode.axis()].len() != dims.get(mode) {
                return Err(Error::InvalidDims(format!(
                    "{mode} bias has length {}, expected {}",
                    biases[mode.axis()].len(),
                    dims.get(mode)
                )));
            }
        }
        Ok(FactorModel { rank, dims, factors, biases })
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn factor(&self, mode: Mode) -> &FactorMatrix {
        &self.factors[mode.axis()]
    }

    #[inline]
    pub fn factor_mut(&mut self, mode: Mode) -> &mut FactorMatrix {
        &mut self.factors[mode.axis()]
    }

    #[inline]
    pub fn bias(&self, mode: Mode) -> &[f64] {
        &self.biases[mode.axis()]
    }

    #[inline]
    pub fn bias_mut(&mut self, mode: Mode) -> &mut [f64] {
        &mut self.biases[mode.axis()]
    }

    /// The six groups as flat slices, ordered as [`GROUP_NAMES`].
    pub fn groups(&self) -> [&[f64]; 6] {
        [
            self.factors[0].as_slice(),
            self.factors[1].as_slice(),
            self.factors[2].as_slice(),
            &self.biases[0],
            &self.biases[1],
            &self.biases[2],
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 6] {
        let [u, s, t] = &mut self.factors;
        let [a, b, c] = &mut self.biases;
        [u.as_mut_slice(), s.as_mut_slice(), t.as_mut_slice(), a, b, c]
    }

    fn check_index(&self, i: usize, j: usize, k: usize) -> Result<()> {
        for (mode, index) in Mode::ALL.into_iter().zip([i, j, k]) {
            let dim = self.dims.get(mode);
            if index >= dim {
                return Err(Error::IndexOutOfRange { mode, index, dim });
            }
        }
        Ok(())
    }

    /// `ŷ_ijk = Σ_r u_ir·s_jr·t_kr + a_i + b_j + c_k`
    pub fn predict(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_index(i, j, k)?;
        Ok(self.predict_unchecked(i, j, k))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        let (u, s, t) = (self.factors[0].row(i), self.factors[1].row(j), self.factors[2].row(k));
        let cp: f64 = u.iter().zip(s).zip(t).map(|((u, s), t)| u * s * t).sum();
        cp + (self.biases[0][i] + self.biases[1][j] + self.biases[2][k])
    }

    /// `y - ŷ` for the entry's cell.
    pub fn residual(&self, entry: &Entry) -> Result<f64> {
        Ok(entry.y - self.predict(entry.i, entry.j, entry.k)?)
    }

    /// Unscaled loss summed over every observed entry.
    pub fn objective(&self, tensor: &SparseTensor, loss: Loss) -> Result<f64> {
        loss.validate()?;
        self.check_covers(tensor.dims())?;
        Ok(tensor
            .entries()
            .iter()
            .map(|e| loss.value(e.y - self.predict_unchecked(e.i, e.j, e.k)))
            .sum())
    }

    /// Fails with the first mode whose data dimension exceeds the model's.
    pub fn check_covers(&self, data: Dims) -> Result<()> {
        for mode in Mode::ALL {
            if data.get(mode) > self.dims.get(mode) {
                return Err(Error::DimMismatch {
                    mode,
                    model: self.dims.get(mode),
                    data: data.get(mode),
                });
            }
        }
        Ok(())
    }

    /// Smallest element over all six groups (`+∞` if every group is empty).
    pub fn min_value(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|&v| v >= 0.0))
    }

    /// Name of the first group holding a non-finite value or one whose
    /// magnitude exceeds `limit`.
    pub fn first_unbounded_group(&self, limit: f64) -> Option<&'static str> {
        self.groups()
            .iter()
            .zip(GROUP_NAMES)
            .find(|(g, _)| g.iter().any(|v| !v.is_finite() || v.abs() > limit))
            .map(|(_, name)| name)
    }

    /// Writes the `lft-model v1` text format.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let d = self.dims.0;
        let mut out = format!("{MAGIC} {VERSION} {} {} {} {}\n", self.rank, d[0], d[1], d[2]);
        for (label, f) in FACTOR_LABELS.iter().zip(&self.factors) {
            out.push_str(label);
            out.push('\n');
            for i in 0..f.rows() {
                push_row(&mut out, f.row(i));
            }
        }
        for (label, b) in BIAS_LABELS.iter().zip(&self.biases) {
            out.push_str(label);
            out.push('\n');
            for v in b {
                push_row(&mut out, std::slice::from_ref(v));
            }
        }
        out
    }

    /// Parses the `lft-model v1` text format.
    ///
    /// Every value must be a finite nonnegative decimal. Memory use is bounded
    /// by the input length, not by the dimensions claimed in the header.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let (n, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let fields: Vec<&str> = header.split_ascii_whitespace().collect();
        if fields.len() != 6 || fields[0] != MAGIC {
            return Err(Error::parse(n, format!("expected `{MAGIC} {VERSION} R I J K` header")));
        }
        if fields[1] != VERSION {
            return Err(Error::parse(n, format!("unsupported version {}", fields[1])));
        }
        let mut nums = [0usize; 4];
        for (slot, f) in nums.iter_mut().zip(&fields[2..]) {
            *slot = f
                .parse()
                .map_err(|_| Error::parse(n, format!("invalid size field `{f}`")))?;
            if *slot == 0 {
                return Err(Error::parse(n, "sizes must be positive"));
            }
        }
        let [rank, ni, nj, nk] = nums;
        let dims = Dims([ni, nj, nk]);

        let mut read_block = |label: &str, rows: usize, width: usize| -> Result<Vec<f64>> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing block `{label}`")))?;
            if l.trim() != label {
                return Err(Error::parse(n, format!("expected block label `{label}`")));
            }
            let mut data = Vec::new();
            for _ in 0..rows {
                let (n, l) = lines
                    .next()
                    .ok_or_else(|| Error::parse(0, format!("block `{label}` ended early")))?;
                let mut count = 0;
                for tok in l.split_ascii_whitespace() {
                    count += 1;
                    if count > width {
                        break;
                    }
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::parse(n, format!("invalid number `{tok}`")))?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::parse(n, format!("value {v} is not finite and nonnegative")));
                    }
                    data.push(v);
                }
                if count != width {
                    return Err(Error::parse(n, format!("expected {width} fields")));
                }
            }
            Ok(data)
        };

        let mut factors = Vec::with_capacity(3);
        for (label, mode) in FACTOR_LABELS.iter().zip(Mode::ALL) {
            let data = read_block(label, dims.get(mode), rank)?;
            factors.push(FactorMatrix::from_vec(dims.get(mode), rank, data)?);
        }
        let mut biases = Vec::with_capacity(3);
        for (label, mode) in BIAS_LABELS.iter().zip(Mode::ALL) {
            biases.push(read_block(label, dims.get(mode), 1)?);
        }
        if let Some((n, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::parse(n, format!("trailing content `{}`", truncate(l))));
        }
        let factors: [FactorMatrix; 3] = factors.try_into().expect("three factor blocks");
        let biases: [Vec<f64>; 3] = biases.try_into().expect("three bias blocks");
        Self::from_parts(rank, factors, biases)
    }
}

fn push_row(out: &mut String, row: &[f64]) {
    for (n, v) in row.iter().enumerate() {
        if n > 0 {
            out.push(' ');
        }
        // Display for f64 is the shortest representation that round-trips
        write!(out, "{v}").expect("writing to a String");
    }
    out.push('\n');
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(32) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// R=2 model with U_0=[1,2], S_0=[1,1], T_0=[1,0.5], a=0.1, b=0.2, c=0.3.
    pub(crate) fn rank_two_example() -> FactorModel {
        let mut m = FactorModel::zeros(Dims([1, 1, 1]), 2);
        m.factor_mut(Mode::User).row_mut(0).copy_from_slice(&[1.0, 2.0]);
        m.factor_mut(Mode::Service).row_mut(0).copy_from_slice(&[1.0, 1.0]);
        m.factor_mut(Mode::Time).row_mut(0).copy_from_slice(&[1.0, 0.5]);
        m.bias_mut(Mode::User)[0] = 0.1;
        m.bias_mut(Mode::Service)[0] = 0.2;
        m.bias_mut(Mode::Time)[0] = 0.3;
        m
    }

    #[test]
    fn predict_examples() {
        let mut m = FactorModel::zeros(Dims([1, 1, 1]), 1);
        assert_eq!(m.predict(0, 0, 0).unwrap(), 0.0);
        for mode in Mode::ALL {
            m.factor_mut(mode).row_mut(0)[0] = 1.0;
        }
        assert_eq!(m.predict(0, 0, 0).unwrap(), 1.0);

        let m = rank_two_example();
        assert!((m.predict(0, 0, 0).unwrap() - 2.6).abs() < 1e-12);
        assert!(matches!(
            m.predict(0, 1, 0),
            Err(Error::IndexOutOfRange { mode: Mode::Service, .. })
        ));
    }

    #[test]
    fn residual_examples() {
        let m = rank_two_example();
        assert!(m.residual(&Entry::new(0, 0, 0, 2.6)).unwrap().abs() < 1e-12);
        assert!((m.residual(&Entry::new(0, 0, 0, 3.6)).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.residual(&Entry::new(0, 0, 0, 0.0)).unwrap() + 2.6).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let m = FactorModel::zeros(Dims([1, 1, 1]), 1);
        let zero = SparseTensor::build(Dims([1, 1, 1]), vec![Entry::new(0, 0, 0, 0.0)]).unwrap();
        assert_eq!(m.objective(&zero, Loss::L2).unwrap(), 0.0);
        assert_eq!(m.objective(&zero, Loss::Cauchy { gamma: 1.0 }).unwrap(), 0.0);

        let one = SparseTensor::build(Dims([1, 1, 1]), vec![Entry::new(0, 0, 0, 1.0)]).unwrap();
        let v = m.objective(&one, Loss::Cauchy { gamma: 1.0 }).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let three = SparseTensor::build(Dims([1, 1, 1]), vec![Entry::new(0, 0, 0, 3.0)]).unwrap();
        assert_eq!(m.objective(&three, Loss::L2).unwrap(), 9.0);

        assert!(m.objective(&one, Loss::Cauchy { gamma: 0.0 }).is_err());
        assert!(m.objective(&one, Loss::Cauchy { gamma: -2.0 }).is_err());
    }

    #[test]
    fn l2_objective_matches_entrywise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims([5, 6, 4]);
        let model = FactorModel::random(dims, 3, &mut rng);
        let entries: Vec<Entry> = (0..40)
            .map(|n| {
                let e = Entry::new(n % 5, (n / 5) % 6, n % 4, rng.random_range(0.0..3.0));
                (e.triple(), e)
            })
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_values()
            .collect();
        let tensor = SparseTensor::build(dims, entries).unwrap();
        let brute: f64 = tensor
            .entries()
            .iter()
            .map(|e| {
                let (u, s, t) = (
                    model.factor(Mode::User).row(e.i),
                    model.factor(Mode::Service).row(e.j),
                    model.factor(Mode::Time).row(e.k),
                );
                let mut y_hat = model.bias(Mode::User)[e.i]
                    + model.bias(Mode::Service)[e.j]
                    + model.bias(Mode::Time)[e.k];
                for r in 0..3 {
                    y_hat += u[r] * s[r] * t[r];
                }
                (e.y - y_hat).powi(2)
            })
            .sum();
        let obj = model.objective(&tensor, Loss::L2).unwrap();
        assert!((obj - brute).abs() <= 1e-12 * brute.abs().max(1.0));
    }

    #[test]
    fn objective_rejects_uncovered_tensor() {
        let m = FactorModel::zeros(Dims([1, 1, 1]), 1);
        let t = SparseTensor::build(Dims([1, 3, 1]), vec![Entry::new(0, 2, 0, 1.0)]).unwrap();
        assert!(matches!(
            m.objective(&t, Loss::L2),
            Err(Error::DimMismatch { mode: Mode::Service, model: 1, data: 3 })
        ));
    }

    #[test]
    fn random_init_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = FactorModel::random(Dims([10, 10, 10]), 4, &mut rng);
        for g in &m.groups()[..3] {
            assert!(g.iter().all(|&v| (0.0..INIT_SCALE).contains(&v)));
        }
        for g in &m.groups()[3..] {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn text_layout() {
        let text = rank_two_example().to_text();
        assert_eq!(
            text,
            "lft-model v1 2 1 1 1\nU\n1 2\nS\n1 1\nT\n1 0.5\na\n0.1\nb\n0.2\nc\n0.3\n"
        );
    }

    #[test]
    fn text_rejects_malformed() {
        let good = rank_two_example().to_text();
        assert!(FactorModel::parse_text(&good).is_ok());
        for bad in [
            "",
            "lft-model v2 2 1 1 1\n",
            "lft-model v1 0 1 1 1\n",
            "lft-model v1 2 1 1\n",
            &good.replace("1 0.5", "1 -0.5"),
            &good.replace("1 0.5", "1"),
            &good.replace("1 0.5", "1 0.5 3"),
            &good.replace("\nS\n", "\nX\n"),
            &good.replace("0.3\n", ""),
            &format!("{good}junk\n"),
            &good.replace("0.1", "NaN"),
            &good.replace("0.1", "inf"),
            "lft-model v1 1 99999999999 99999999999 99999999999\nU\n",
        ] {
            assert!(FactorModel::parse_text(bad).is_err(), "accepted {bad:?}");
        }
    }

    proptest! {
        #[test]
        fn text_round_trip(
            dims in (1usize..4, 1usize..4, 1usize..4),
            rank in 1usize..4,
            seed in any::<u64>(),
        ) {
            let dims = Dims([dims.0, dims.1, dims.2]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = FactorModel::random(dims, rank, &mut rng);
            for b in &mut m.groups_mut()[3..] {
                for v in b.iter_mut() {
                    *v = rng.random::<f64>() * 10f64.powi(rng.random_range(-20..20));
                }
            }
            let back = FactorModel::parse_text(&m.to_text()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
