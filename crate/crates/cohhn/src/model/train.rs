//! Mini-batch training, epoch history, and the checkpoint format.
//!
//! One batch = one propagation over the full graph, one summed loss
//! over the batch's sessions, one Adam step. After every epoch the
//! parameters are frozen and scored on the validation set, and the
//! checkpoint with the best validation Prec@20 is retained (earlier
//! epoch wins ties).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Session;
use crate::error::{DataError, NumericError};
use crate::hypergraph::HeteroHypergraph;
use crate::metrics::{mrr_at_k, prec_at_k};
use crate::optim::{seeded_rng, AdamConfig, ParamStore};
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::{forward_session, propagate, FrozenModel, Hyperparams, ModelVars};

/// Knobs of the optimization loop itself (the network shape lives in
/// [`Hyperparams`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 100,
            learning_rate: 0.001,
            seed: 42,
        }
    }
}

impl TrainSettings {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.learning_rate)
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-session loss over the epoch's training batches.
    pub train_loss: f64,
    /// Validation metrics in percent (unrounded).
    pub valid_prec_at_10: f64,
    pub valid_prec_at_20: f64,
    pub valid_mrr_at_10: f64,
    pub valid_mrr_at_20: f64,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the final epoch.
    pub final_params: ParamStore,
    /// Parameters of the epoch with the best validation Prec@20
    /// (the initial parameters when no epoch ran or validation was
    /// empty).
    pub best_params: ParamStore,
    /// Epoch (1-based) the best parameters came from, if any.
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

/// Run the training loop. Sessions are shuffled each epoch with a
/// dedicated generator derived from `settings.seed`, so the whole run
/// is a pure function of its inputs.
pub fn train(
    store: ParamStore,
    graph: &HeteroHypergraph,
    hp: &Hyperparams,
    train_sessions: &[Session],
    valid_sessions: &[Session],
    settings: &TrainSettings,
) -> Result<TrainOutcome, NumericError> {
    if train_sessions.is_empty() {
        return Err(NumericError::TrainingAborted(
            "no training sessions".into(),
        ));
    }
    let adam = settings.adam();
    let batch_size = settings.batch_size.max(1);
    let item_levels = graph.item_levels().to_vec();
    // A distinct stream from parameter initialization, so reseeding
    // one never perturbs the other.
    let mut shuffle_rng = seeded_rng(settings.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut store = store;
    let mut best_params = store.clone();
    let mut best_epoch = None;
    let mut best_prec20 = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(settings.epochs);

    for epoch in 1..=settings.epochs {
        let mut order: Vec<usize> = (0..train_sessions.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (batch_index, batch) in order.chunks(batch_size).enumerate() {
            let context = |e: NumericError| {
                NumericError::TrainingAborted(format!(
                    "epoch {epoch}, batch {batch_index}: {e}"
                ))
            };
            let tape = Tape::new();
            let vars = ModelVars::bind(&tape, &store, hp, true).map_err(context)?;
            let states = propagate(&tape, graph, &vars, hp, None).map_err(context)?;
            let mut batch_loss = None;
            for &session_index in batch {
                let session = &train_sessions[session_index];
                let scores = forward_session(
                    &tape,
                    &vars,
                    &states,
                    hp,
                    &item_levels,
                    session.input(),
                    None,
                )
                .map_err(context)?;
                let session_loss =
                    super::loss(&tape, scores, session.label()).map_err(context)?;
                batch_loss = Some(match batch_loss {
                    None => session_loss,
                    Some(total) => tape.add(total, session_loss).map_err(context)?,
                });
            }
            let batch_loss = batch_loss.expect("chunks are non-empty");
            let batch_value = tape.value(batch_loss).at(0, 0);
            if !batch_value.is_finite() {
                return Err(NumericError::TrainingAborted(format!(
                    "epoch {epoch}, batch {batch_index}: loss became {batch_value}"
                )));
            }
            loss_sum += batch_value;
            let grads = tape.backward(batch_loss).map_err(context)?;
            store.adam_step(&grads, &adam).map_err(context)?;
        }
        let train_loss = loss_sum / train_sessions.len() as f64;

        let frozen = FrozenModel::freeze(&store, graph, hp)?;
        let (p10, p20, m10, m20) = validation_metrics(&frozen, valid_sessions)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_prec_at_10: p10,
            valid_prec_at_20: p20,
            valid_mrr_at_10: m10,
            valid_mrr_at_20: m20,
        });
        if p20 > best_prec20 {
            best_prec20 = p20;
            best_params = store.clone();
            best_epoch = Some(epoch);
        }
    }

    Ok(TrainOutcome {
        final_params: store,
        best_params,
        best_epoch,
        history,
    })
}

/// Prec@10/20 and MRR@10/20 in percent; zeros for an empty set.
fn validation_metrics(
    frozen: &FrozenModel,
    sessions: &[Session],
) -> Result<(f64, f64, f64, f64), NumericError> {
    if sessions.is_empty() {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let mut sums = [0.0; 4];
    for session in sessions {
        let ranked = frozen.predict_topk(session.input(), 20)?;
        let target = session.label();
        sums[0] += prec_at_k(&ranked, target, 10);
        sums[1] += prec_at_k(&ranked, target, 20);
        sums[2] += mrr_at_k(&ranked, target, 10);
        sums[3] += mrr_at_k(&ranked, target, 20);
    }
    let n = sessions.len() as f64;
    Ok((
        sums[0] / n * 100.0,
        sums[1] / n * 100.0,
        sums[2] / n * 100.0,
        sums[3] / n * 100.0,
    ))
}

/// Write the history as JSON lines, one record per epoch.
pub fn save_history(history: &[EpochRecord], path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    for record in history {
        let line = serde_json::to_string(record).expect("history records serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Read a history file written by [`save_history`].
pub fn load_history(path: &Path) -> Result<Vec<EpochRecord>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| DataError::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// On-disk checkpoint version; bumped whenever the layout changes.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Shape-tagged tensor payload inside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// A complete model snapshot: every parameter plus the hyperparameters
/// and seed needed to reproduce or continue the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub params: BTreeMap<String, SavedTensor>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, hp: &Hyperparams, seed: u64) -> Self {
        let params = store
            .iter()
            .map(|(name, tensor)| {
                (
                    name.clone(),
                    SavedTensor {
                        rows: tensor.rows(),
                        cols: tensor.cols(),
                        data: tensor.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            hyperparams: hp.clone(),
            seed,
            params,
        }
    }

    /// Rebuild the parameter store, validating every shape.
    pub fn to_store(&self) -> Result<ParamStore, DataError> {
        let mut store = ParamStore::new();
        for (name, saved) in &self.params {
            let tensor = Tensor::new(saved.rows, saved.cols, saved.data.clone()).map_err(
                |e| DataError::Format {
                    path: "checkpoint".into(),
                    message: format!("parameter '{name}': {e}"),
                },
            )?;
            store.insert(name, tensor);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self).expect("checkpoints serialize");
        std::fs::write(path, json + "\n").map_err(|source| DataError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let checkpoint: Checkpoint =
            serde_json::from_str(&text).map_err(|e| DataError::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(DataError::Format {
                path: path.display().to_string(),
                message: format!(
                    "unsupported checkpoint version {} (expected {})",
                    checkpoint.version, CHECKPOINT_VERSION
                ),
            });
        }
        Ok(checkpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CatalogItem, ItemCatalog};
    use crate::model::{initialize_params, Hyperparams};

    fn fixture() -> (Hyperparams, HeteroHypergraph, ParamStore, Vec<Session>) {
        let catalog = ItemCatalog {
            items: [(0usize, 0usize), (1, 0), (2, 1), (1, 1)]
                .iter()
                .enumerate()
                .map(|(i, &(level, cat))| CatalogItem {
                    item_id: format!("i{i}"),
                    category: cat,
                    price: level as f64,
                    price_level: level,
                })
                .collect(),
            categories: vec!["a".into(), "b".into()],
            price_levels: 3,
            stats: Default::default(),
        };
        let sessions: Vec<Session> = [
            vec![0, 1, 2],
            vec![1, 2, 3],
            vec![2, 0, 3],
            vec![3, 1, 0],
            vec![0, 2, 1],
        ]
        .into_iter()
        .map(Session::new)
        .collect();
        let graph = HeteroHypergraph::build(&catalog, &sessions).unwrap();
        let hp = Hyperparams {
            embedding_dim: 6,
            heads: 2,
            price_levels: 3,
            rounds: 1,
            ..Hyperparams::default()
        };
        let store = initialize_params(&hp, 4, 2, 11).unwrap();
        (hp, graph, store, sessions)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (hp, graph, store, sessions) = fixture();
        let settings = TrainSettings {
            epochs: 1,
            batch_size: 2,
            learning_rate: 0.0,
            seed: 5,
        };
        let outcome =
            train(store.clone(), &graph, &hp, &sessions, &[], &settings).unwrap();
        for (name, tensor) in store.iter() {
            assert_eq!(tensor, outcome.final_params.get(name).unwrap(), "{name}");
        }
        assert_eq!(outcome.history.len(), 1);
    }

    #[test]
    fn same_seed_reproduces_the_loss_curve_exactly() {
        let (hp, graph, store, sessions) = fixture();
        let settings = TrainSettings {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.01,
            seed: 7,
        };
        let a = train(store.clone(), &graph, &hp, &sessions, &sessions, &settings).unwrap();
        let b = train(store, &graph, &hp, &sessions, &sessions, &settings).unwrap();
        assert_eq!(a.history, b.history);
        for (name, tensor) in a.final_params.iter() {
            assert_eq!(tensor, b.final_params.get(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn zero_epochs_return_the_initial_parameters() {
        let (hp, graph, store, sessions) = fixture();
        let settings = TrainSettings {
            epochs: 0,
            ..TrainSettings::default()
        };
        let outcome =
            train(store.clone(), &graph, &hp, &sessions, &[], &settings).unwrap();
        assert!(outcome.history.is_empty());
        assert_eq!(outcome.best_epoch, None);
        for (name, tensor) in store.iter() {
            assert_eq!(tensor, outcome.final_params.get(name).unwrap());
            assert_eq!(tensor, outcome.best_params.get(name).unwrap());
        }
    }

    #[test]
    fn loss_falls_on_a_memorizable_fixture() {
        let (hp, graph, store, sessions) = fixture();
        let settings = TrainSettings {
            epochs: 8,
            batch_size: 5,
            learning_rate: 0.05,
            seed: 3,
        };
        let outcome = train(store, &graph, &hp, &sessions, &[], &settings).unwrap();
        let first = outcome.history.first().unwrap().train_loss;
        let last = outcome.history.last().unwrap().train_loss;
        assert!(
            last < first,
            "loss did not improve: first {first}, last {last}"
        );
    }

    #[test]
    fn best_epoch_prefers_the_earliest_tie() {
        let (hp, graph, store, sessions) = fixture();
        // Tiny validation set and aggressive learning rate: the
        // metric quickly saturates, so later epochs tie the early
        // best and must not displace it.
        let settings = TrainSettings {
            epochs: 4,
            batch_size: 5,
            learning_rate: 0.0,
            seed: 2,
        };
        let outcome =
            train(store, &graph, &hp, &sessions, &sessions[..2], &settings).unwrap();
        // With lr = 0 every epoch scores identically, so the first
        // epoch must remain the best.
        assert_eq!(outcome.best_epoch, Some(1));
    }

    #[test]
    fn history_round_trips_through_jsonl() {
        let history = vec![
            EpochRecord {
                epoch: 1,
                train_loss: 2.5,
                valid_prec_at_10: 10.0,
                valid_prec_at_20: 20.0,
                valid_mrr_at_10: 5.0,
                valid_mrr_at_20: 6.25,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 2.25,
                valid_prec_at_10: 12.0,
                valid_prec_at_20: 22.0,
                valid_mrr_at_10: 5.5,
                valid_mrr_at_20: 6.5,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        save_history(&history, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"epoch\":1,"));
        assert_eq!(load_history(&path).unwrap(), history);
    }

    #[test]
    fn checkpoint_round_trips_and_validates() {
        let (hp, _, store, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let checkpoint = Checkpoint::from_store(&store, &hp, 11);
        checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, checkpoint);
        let rebuilt = loaded.to_store().unwrap();
        for (name, tensor) in store.iter() {
            assert_eq!(tensor, rebuilt.get(name).unwrap());
        }
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let (hp, _, store, _) = fixture();
        let dir = tempfile::tempdir().unwrap();

        let wrong_version = dir.path().join("old.json");
        let mut checkpoint = Checkpoint::from_store(&store, &hp, 0);
        checkpoint.version = 99;
        let json = serde_json::to_string(&checkpoint).unwrap();
        std::fs::write(&wrong_version, json).unwrap();
        let err = Checkpoint::load(&wrong_version).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let bad_shape = Checkpoint {
            params: [(
                "embed.item".to_string(),
                SavedTensor {
                    rows: 2,
                    cols: 3,
                    data: vec![0.0; 5],
                },
            )]
            .into_iter()
            .collect(),
            ..Checkpoint::from_store(&store, &hp, 0)
        };
        assert!(bad_shape.to_store().is_err());
    }
}
