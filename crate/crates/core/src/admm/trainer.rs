use std::borrow::Cow;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{run_epoch, AdmmState, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{mae, EpochRecord, EvalReport};
use crate::model::FactorModel;
use crate::tensor::{Mode, SparseTensor};

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation MAE (earliest on ties).
    pub model: FactorModel,
    pub report: EvalReport,
    /// Set when training aborted on a non-finite or exploding variable; names
    /// the offending group.
    pub divergence: Option<String>,
}

/// [`train_with_log`] without a log sink.
pub fn train(
    train: &SparseTensor,
    validation: &SparseTensor,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_log(train, validation, config, &mut std::io::sink())
}

/// Runs epochs until `max_epochs`, early stopping, or divergence.
///
/// The model shape is the union of the two tensors' shapes. After each epoch
/// one line `epoch <n> obj <v> val_mae <v> max_primal_residual <v>` is written
/// to `log`.
pub fn train_with_log(
    train: &SparseTensor,
    validation: &SparseTensor,
    config: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }

    let dims = train.dims().union(&validation.dims());
    let train: Cow<'_, SparseTensor> = if dims == train.dims() {
        Cow::Borrowed(train)
    } else {
        Cow::Owned(train.with_dims(dims)?)
    };

    let pool = match config.threads {
        0 | 1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        ),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FactorModel::random(dims, config.rank, &mut rng);
    let mut state = AdmmState::new(&model, &train, config.loss(), config.lambda)?;

    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    let mut epochs = Vec::new();
    let mut divergence = None;

    for epoch in 1..=config.max_epochs {
        let stats = match run_epoch(&mut state, &mut model, &train, config.eta, pool.as_ref()) {
            Ok(stats) => stats,
            Err(Error::NonFinite { group }) => {
                divergence = Some(group);
                break;
            }
            Err(e) => return Err(e),
        };
        let val_mae = mae(&model, validation.entries())?;
        if !val_mae.is_finite() {
            divergence = Some("validation MAE".to_string());
            break;
        }
        writeln!(
            log,
            "epoch {epoch} obj {} val_mae {val_mae} max_primal_residual {}",
            stats.objective, stats.max_primal_residual
        )?;
        epochs.push(EpochRecord {
            epoch,
            objective: stats.objective,
            val_mae,
            max_primal_residual: stats.max_primal_residual,
        });

        if val_mae < best_val {
            stale = if best_val - val_mae >= config.min_delta { 0 } else { stale + 1 };
            best_val = val_mae;
            best_epoch = epoch;
            best.clone_from(&model);
        } else {
            stale += 1;
        }
        if stale >= config.patience || val_mae == 0.0 {
            break;
        }
    }

    if epochs.is_empty() {
        best_val = mae(&best, validation.entries())?;
    }
    let report = EvalReport {
        epochs,
        best_epoch,
        best_val_mae: best_val,
        test_mae: None,
        cold_test_entries: None,
        skipped_entities: Mode::ALL.map(|m| train.empty_slices(m)),
        threads: config.threads.max(1),
        diverged: divergence.clone(),
    };
    Ok(TrainOutcome { model: best, report, divergence })
}
