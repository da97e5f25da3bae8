//! ADMM learning scheme for the nonnegative, bias-augmented CP model.
//!
//! Each parameter group (`U, S, T, a, b, c`) has an unconstrained auxiliary
//! copy and a multiplier of the same shape. One epoch
//!
//! 1. solves every auxiliary coordinate in closed form with the other
//!    variables frozen: `Ũ` rows, then `S̃` rows, then `T̃` rows (each row over
//!    all rank components), then `ã`, `b̃`, `c̃`;
//! 2. projects `max(0, aux + mult/κ)` onto the primal model;
//! 3. takes a dual ascent step `mult += η·κ·(aux - primal)`.
//!
//! The Cauchy loss is handled half-quadratically: each residual carries the
//! weight `Δ = 1/(γ² + e²)`, refreshed from the current auxiliary prediction
//! immediately before every coordinate solve.
//!
//! Rows of one factor touch disjoint entry sets, so a phase may be split over
//! threads without changing the result: every row reads only the frozen
//! state from before the phase plus its own slice.

mod trainer;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::model::FactorModel;
use crate::tensor::{Mode, SparseTensor};

pub use trainer::{train, train_with_log, TrainOutcome};

/// Any variable whose magnitude exceeds this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Cauchy,
    L2,
}

/// Hyperparameters and stopping rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rank: usize,
    /// Cauchy scale `γ`; ignored in L2 mode.
    pub gamma: f64,
    /// Augmentation coefficient `λ`. In Cauchy mode the constants are
    /// `λ·|Λ(x)|/γ²`, which keeps the penalties balanced against the
    /// `γ²`-normalized data weights.
    pub lambda: f64,
    /// Dual step `η ∈ (0, 2]`.
    pub eta: f64,
    pub loss_mode: LossMode,
    pub max_epochs: usize,
    /// Epochs without a validation improvement of at least `min_delta`
    /// before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Worker threads for the row phases; `0` or `1` runs on the caller.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 5,
            gamma: 1.0,
            lambda: 0.1,
            eta: 1.0,
            loss_mode: LossMode::Cauchy,
            max_epochs: 1000,
            patience: 20,
            min_delta: 1e-5,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.eta > 0.0 && self.eta <= 2.0) {
            return bad(format!("eta must lie in (0, 2], got {}", self.eta));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return bad(format!("min_delta must be nonnegative, got {}", self.min_delta));
        }
        Ok(())
    }

    pub fn loss(&self) -> Loss {
        match self.loss_mode {
            LossMode::Cauchy => Loss::Cauchy { gamma: self.gamma },
            LossMode::L2 => Loss::L2,
        }
    }

    /// `λ` rescaled by the loss's zero-residual weight.
    pub fn effective_lambda(&self) -> f64 {
        self.lambda * self.loss().weight_scale()
    }
}

/// Half-quadratic weight of a residual under the chosen loss mode.
pub fn cauchy_weight(residual: f64, gamma: f64, mode: LossMode) -> f64 {
    match mode {
        LossMode::Cauchy => Loss::Cauchy { gamma }.weight(residual),
        LossMode::L2 => Loss::L2.weight(residual),
    }
}

/// Per-entity penalty weights `κ = λ·|Λ(x)|`.
///
/// The factor constants (`τ, ν, ω`) and bias constants (`α, β, δ`) are equal
/// by construction but stored separately so tests can perturb them.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConstants {
    factor: [Vec<f64>; 3],
    bias: [Vec<f64>; 3],
}

impl AugmentationConstants {
    pub fn compute(tensor: &SparseTensor, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        let factor = Mode::ALL.map(|m| tensor.slice_sizes(m).map(|n| lambda * n as f64).collect());
        Ok(AugmentationConstants { bias: factor.clone(), factor })
    }

    /// Explicit constants; `factor` and `bias` are `[τ, ν, ω]` and `[α, β, δ]`.
    pub fn from_parts(factor: [Vec<f64>; 3], bias: [Vec<f64>; 3]) -> Self {
        AugmentationConstants { factor, bias }
    }

    pub fn factor(&self, mode: Mode) -> &[f64] {
        &self.factor[mode.axis()]
    }

    pub fn bias(&self, mode: Mode) -> &[f64] {
        &self.bias[mode.axis()]
    }

    pub fn tau(&self) -> &[f64] {
        &self.factor[0]
    }
    pub fn nu(&self) -> &[f64] {
        &self.factor[1]
    }
    pub fn omega(&self) -> &[f64] {
        &self.factor[2]
    }
    pub fn alpha(&self) -> &[f64] {
        &self.bias[0]
    }
    pub fn beta(&self) -> &[f64] {
        &self.bias[1]
    }
    pub fn delta(&self) -> &[f64] {
        &self.bias[2]
    }

    /// Constants for group `g` (ordered as `GROUP_NAMES`), one per entity.
    fn group(&self, g: usize) -> &[f64] {
        if g < 3 {
            &self.factor[g]
        } else {
            &self.bias[g - 3]
        }
    }
}

/// Shorthand for [`AugmentationConstants::compute`].
pub fn compute_augmentation_constants(
    tensor: &SparseTensor,
    lambda: f64,
) -> Result<AugmentationConstants> {
    AugmentationConstants::compute(tensor, lambda)
}

/// Diagnostics of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Unscaled training loss of the projected model.
    pub objective: f64,
    /// `max |aux - primal|` over all six groups.
    pub max_primal_residual: f64,
}

/// Auxiliary copies, multipliers and constants.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub aux: FactorModel,
    pub mult: FactorModel,
    pub constants: AugmentationConstants,
    pub loss: Loss,
}

/// Closed-form minimizer of the frozen-weight coordinate subproblem
/// `½ Σ Δ_p (y_p - ŷ_p(x))² + (κ/2)(x - primal + mult/κ)²` where
/// `ŷ_p(x) = pred_p + (x - old)·coef_p`.
///
/// Updates `preds` to the new value. Returns `None` (and leaves everything
/// untouched) when the denominator vanishes.
#[allow(clippy::too_many_arguments)]
#[inline]
fn solve_coordinate(
    loss: Loss,
    ys: &[f64],
    preds: &mut [f64],
    coefs: &[f64],
    old: f64,
    primal: f64,
    mult: f64,
    kappa: f64,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&y, &pred), &c) in ys.iter().zip(preds.iter()).zip(coefs) {
        let w = loss.weight(y - pred);
        let rest = pred - old * c;
        num += w * c * (y - rest);
        den += w * c * c;
    }
    let den = kappa + den;
    if den == 0.0 {
        return None;
    }
    let new = (num + kappa * primal - mult) / den;
    let step = new - old;
    for (pred, &c) in preds.iter_mut().zip(coefs) {
        *pred += step * c;
    }
    Some(new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Factor,
    Bias,
}

/// New auxiliary values for one entity plus the refreshed predictions of its
/// slice.
struct RowUpdate {
    values: Vec<f64>,
    preds: Vec<f64>,
}

impl AdmmState {
    /// Auxiliaries start equal to `model`, multipliers at zero.
    pub fn new(model: &FactorModel, tensor: &SparseTensor, loss: Loss, lambda: f64) -> Result<Self> {
        loss.validate()?;
        let constants = AugmentationConstants::compute(tensor, lambda * loss.weight_scale())?;
        Self::with_constants(model, tensor, loss, constants)
    }

    pub fn with_constants(
        model: &FactorModel,
        tensor: &SparseTensor,
        loss: Loss,
        constants: AugmentationConstants,
    ) -> Result<Self> {
        loss.validate()?;
        let state = AdmmState {
            aux: model.clone(),
            mult: FactorModel::zeros(model.dims(), model.rank()),
            constants,
            loss,
        };
        state.check_shapes(model, tensor)?;
        Ok(state)
    }

    fn check_shapes(&self, model: &FactorModel, tensor: &SparseTensor) -> Result<()> {
        let dims = model.dims();
        if tensor.dims() != dims || self.aux.dims() != dims || self.mult.dims() != dims {
            return Err(Error::InvalidDims(format!(
                "state/model/tensor shapes disagree: model {dims}, tensor {}",
                tensor.dims()
            )));
        }
        if self.aux.rank() != model.rank() || self.mult.rank() != model.rank() {
            return Err(Error::InvalidDims("state rank differs from model rank".into()));
        }
        for mode in Mode::ALL {
            let n = dims.get(mode);
            if self.constants.factor(mode).len() != n || self.constants.bias(mode).len() != n {
                return Err(Error::InvalidDims(format!("{mode} constants have the wrong length")));
            }
        }
        Ok(())
    }

    /// Coefficient of auxiliary factor `(mode, ·, r)` in the prediction of
    /// entry `pos`: the product of the other two auxiliary rows at `r`.
    #[inline]
    fn coef(&self, tensor: &SparseTensor, mode: Mode, pos: usize, r: usize) -> f64 {
        let e = &tensor.entries()[pos];
        let (m1, m2) = mode.others();
        self.aux.factor(m1).row(e.coord(m1))[r] * self.aux.factor(m2).row(e.coord(m2))[r]
    }

    /// Solves every coordinate of entity `x` in `mode`, reading predictions
    /// from `pred_of`.
    fn solve_row(
        &self,
        model: &FactorModel,
        tensor: &SparseTensor,
        mode: Mode,
        target: Target,
        x: usize,
        pred_of: impl Fn(usize) -> f64,
    ) -> Option<RowUpdate> {
        let positions = tensor.slice_positions(mode, x);
        if positions.is_empty() {
            return None;
        }
        let entries = tensor.entries();
        let ys: Vec<f64> = positions.iter().map(|&p| entries[p].y).collect();
        let mut preds: Vec<f64> = positions.iter().map(|&p| pred_of(p)).collect();
        match target {
            Target::Factor => {
                let kappa = self.constants.factor(mode)[x];
                let mut values = self.aux.factor(mode).row(x).to_vec();
                let primal = model.factor(mode).row(x);
                let mult = self.mult.factor(mode).row(x);
                let mut coefs = vec![0.0; positions.len()];
                for r in 0..values.len() {
                    for (c, &p) in coefs.iter_mut().zip(positions) {
                        *c = self.coef(tensor, mode, p, r);
                    }
                    if let Some(v) = solve_coordinate(
                        self.loss, &ys, &mut preds, &coefs, values[r], primal[r], mult[r], kappa,
                    ) {
                        values[r] = v;
                    }
                }
                Some(RowUpdate { values, preds })
            }
            Target::Bias => {
                let kappa = self.constants.bias(mode)[x];
                let old = self.aux.bias(mode)[x];
                let coefs = vec![1.0; positions.len()];
                let value = solve_coordinate(
                    self.loss,
                    &ys,
                    &mut preds,
                    &coefs,
                    old,
                    model.bias(mode)[x],
                    self.mult.bias(mode)[x],
                    kappa,
                )
                .unwrap_or(old);
                Some(RowUpdate { values: vec![value], preds })
            }
        }
    }

    /// Closed-form update of the single auxiliary factor `(mode, index, r)`,
    /// with every other variable frozen. Returns the new (unconstrained)
    /// value; entities with an empty slice are left unchanged.
    pub fn update_auxiliary_factor(
        &mut self,
        model: &FactorModel,
        tensor: &SparseTensor,
        mode: Mode,
        index: usize,
        r: usize,
    ) -> Result<f64> {
        self.check_shapes(model, tensor)?;
        tensor.slice(mode, index)?;
        if r >= model.rank() {
            return Err(Error::InvalidConfig(format!("rank component {r} out of range")));
        }
        let positions = tensor.slice_positions(mode, index);
        let entries = tensor.entries();
        let ys: Vec<f64> = positions.iter().map(|&p| entries[p].y).collect();
        let mut preds: Vec<f64> = positions
            .iter()
            .map(|&p| {
                let e = &entries[p];
                self.aux.predict_unchecked(e.i, e.j, e.k)
            })
            .collect();
        let coefs: Vec<f64> = positions.iter().map(|&p| self.coef(tensor, mode, p, r)).collect();
        let old = self.aux.factor(mode).row(index)[r];
        let new = if positions.is_empty() {
            old
        } else {
            solve_coordinate(
                self.loss,
                &ys,
                &mut preds,
                &coefs,
                old,
                model.factor(mode).row(index)[r],
                self.mult.factor(mode).row(index)[r],
                self.constants.factor(mode)[index],
            )
            .unwrap_or(old)
        };
        self.aux.factor_mut(mode).row_mut(index)[r] = new;
        Ok(new)
    }

    /// Closed-form update of the auxiliary bias `(mode, index)`.
    pub fn update_auxiliary_bias(
        &mut self,
        model: &FactorModel,
        tensor: &SparseTensor,
        mode: Mode,
        index: usize,
    ) -> Result<f64> {
        self.check_shapes(model, tensor)?;
        tensor.slice(mode, index)?;
        let aux = &self.aux;
        let update = self.solve_row(model, tensor, mode, Target::Bias, index, |p| {
            let e = &tensor.entries()[p];
            aux.predict_unchecked(e.i, e.j, e.k)
        });
        let value = match update {
            Some(u) => u.values[0],
            None => self.aux.bias(mode)[index],
        };
        self.aux.bias_mut(mode)[index] = value;
        Ok(value)
    }

    /// `primal ← max(0, aux + mult/κ)` elementwise; entities with `κ = 0`
    /// keep their primal value.
    pub fn project_nonnegative(&self, model: &mut FactorModel) {
        let rank = model.rank();
        let aux = self.aux.groups();
        let mult = self.mult.groups();
        for (g, primal) in model.groups_mut().into_iter().enumerate() {
            let width = if g < 3 { rank } else { 1 };
            let kappa = self.constants.group(g);
            for (p, v) in primal.iter_mut().enumerate() {
                let k = kappa[p / width];
                if k > 0.0 {
                    *v = (aux[g][p] + mult[g][p] / k).max(0.0);
                }
            }
        }
    }

    /// `mult ← mult + η·κ·(aux - primal)`.
    pub fn update_multipliers(&mut self, model: &FactorModel, eta: f64) {
        let rank = model.rank();
        let aux = self.aux.groups();
        let primal = model.groups();
        for (g, mult) in self.mult.groups_mut().into_iter().enumerate() {
            let width = if g < 3 { rank } else { 1 };
            let kappa = self.constants.group(g);
            for (p, m) in mult.iter_mut().enumerate() {
                *m += eta * kappa[p / width] * (aux[g][p] - primal[g][p]);
            }
        }
    }

    /// `max |aux - primal|` over every element of the six groups.
    pub fn max_primal_residual(&self, model: &FactorModel) -> f64 {
        self.aux
            .groups()
            .iter()
            .zip(model.groups())
            .flat_map(|(a, p)| a.iter().zip(p).map(|(a, p)| (a - p).abs()))
            .fold(0.0, f64::max)
    }

    /// Augmented Lagrangian at the current point:
    /// `½ Σ loss(e) + Σ (κ/2)(aux - primal + mult/κ)² - Σ mult²/(2κ)`,
    /// where the residuals use the auxiliary prediction. Entities with `κ = 0`
    /// contribute nothing to the penalty sums.
    pub fn lagrangian_value(&self, model: &FactorModel, tensor: &SparseTensor) -> f64 {
        let data: f64 = tensor
            .entries()
            .iter()
            .map(|e| self.loss.value(e.y - self.aux.predict_unchecked(e.i, e.j, e.k)))
            .sum();
        let rank = model.rank();
        let (aux, mult, primal) = (self.aux.groups(), self.mult.groups(), model.groups());
        let mut penalty = 0.0;
        for g in 0..6 {
            let width = if g < 3 { rank } else { 1 };
            let kappa = self.constants.group(g);
            for p in 0..primal[g].len() {
                let k = kappa[p / width];
                if k > 0.0 {
                    let d = aux[g][p] - primal[g][p] + mult[g][p] / k;
                    penalty += 0.5 * k * d * d - mult[g][p] * mult[g][p] / (2.0 * k);
                }
            }
        }
        0.5 * data + penalty
    }

    fn sweep(
        &mut self,
        model: &FactorModel,
        tensor: &SparseTensor,
        mode: Mode,
        target: Target,
        cache: &mut [f64],
        pool: Option<&ThreadPool>,
    ) {
        let dim = tensor.dims().get(mode);
        let updates: Vec<Option<RowUpdate>> = {
            let this = &*self;
            let cached = &*cache;
            let solve = |x: usize| this.solve_row(model, tensor, mode, target, x, |p| cached[p]);
            match pool {
                Some(pool) => pool.install(|| (0..dim).into_par_iter().map(solve).collect()),
                None => (0..dim).map(solve).collect(),
            }
        };
        for (x, update) in updates.into_iter().enumerate() {
            let Some(update) = update else { continue };
            match target {
                Target::Factor => self.aux.factor_mut(mode).row_mut(x).copy_from_slice(&update.values),
                Target::Bias => self.aux.bias_mut(mode)[x] = update.values[0],
            }
            for (&p, v) in tensor.slice_positions(mode, x).iter().zip(update.preds) {
                cache[p] = v;
            }
        }
    }
}

fn check_bounded(model: &FactorModel, prefix: &str) -> Result<()> {
    match model.first_unbounded_group(DIVERGENCE_LIMIT) {
        Some(name) => Err(Error::NonFinite { group: format!("{prefix} {name}") }),
        None => Ok(()),
    }
}

/// One full sweep: auxiliary factors, auxiliary biases, projection, dual
/// ascent.
///
/// Fails with [`Error::NonFinite`] naming the group if any variable becomes
/// non-finite or exceeds [`DIVERGENCE_LIMIT`].
pub fn train_epoch(
    state: &mut AdmmState,
    model: &mut FactorModel,
    tensor: &SparseTensor,
    config: &TrainConfig,
) -> Result<EpochStats> {
    run_epoch(state, model, tensor, config.eta, None)
}

pub(crate) fn run_epoch(
    state: &mut AdmmState,
    model: &mut FactorModel,
    tensor: &SparseTensor,
    eta: f64,
    pool: Option<&ThreadPool>,
) -> Result<EpochStats> {
    state.check_shapes(model, tensor)?;
    let mut cache: Vec<f64> = tensor
        .entries()
        .iter()
        .map(|e| state.aux.predict_unchecked(e.i, e.j, e.k))
        .collect();
    for target in [Target::Factor, Target::Bias] {
        for mode in Mode::ALL {
            state.sweep(model, tensor, mode, target, &mut cache, pool);
        }
    }
    check_bounded(&state.aux, "auxiliary")?;

    state.project_nonnegative(model);
    check_bounded(model, "primal")?;

    state.update_multipliers(model, eta);
    check_bounded(&state.mult, "multiplier")?;

    Ok(EpochStats {
        objective: model.objective(tensor, state.loss)?,
        max_primal_residual: state.max_primal_residual(model),
    })
}
