//! Operator commands: `preprocess`, `train`, `evaluate`, `recommend`,
//! and `sweep`, all driven by one TOML config plus optional flag
//! overrides.
//!
//! Every command copies the effective config into its output
//! directory, so a run can be reproduced from the artifacts alone.
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 numeric failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{PopIndex, Sknn};
use crate::config::RunConfig;
use crate::dataset::{
    assign_price_levels, filter_and_index, load_dataset, load_interactions, save_dataset,
    sessionize_daily, split_chronological, ItemCatalog, PriceMode, SplitDataset,
};
use crate::error::{ConfigError, DataError, Error};
use crate::hypergraph::HeteroHypergraph;
use crate::metrics::{evaluate, rank_descending, EvalReport};
use crate::model::train::{save_history, train, Checkpoint};
use crate::model::{initialize_params, Ablation, FrozenModel, Hyperparams};

/// Price-aware session-based recommender.
#[derive(Debug, Parser)]
#[command(name = "cohhn", version, about)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "config.toml")]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    /// Self-attention heads.
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    /// Price discretization levels.
    #[arg(long, global = true)]
    pub price_levels: Option<usize>,
    /// Message-passing rounds.
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    /// One of: none, no_price, no_category, price_as_feature_only,
    /// no_coguide.
    #[arg(long, global = true)]
    pub ablation: Option<String>,
    /// Price discretization mode: logistic or uniform.
    #[arg(long, global = true)]
    pub price_mode: Option<String>,
    /// Session-kNN neighborhood size.
    #[arg(long, global = true)]
    pub k_neighbors: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the dataset pipeline: load, sessionize, filter, discretize
    /// prices, split, and write the dataset directory.
    Preprocess,
    /// Train the network; keeps the checkpoint with the best
    /// validation Prec@20 plus the full epoch history.
    Train,
    /// Score the test split with a checkpoint or a baseline.
    Evaluate {
        /// What to evaluate: checkpoint, spop, or sknn.
        #[arg(long, default_value = "checkpoint")]
        model: String,
        /// Checkpoint path; defaults to `<train.output_dir>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank items for one session given as a JSON array of item ids.
    Recommend {
        /// Path to the session JSON file, e.g. `["B002", "B017"]`.
        #[arg(long)]
        session: PathBuf,
        /// How many items to print.
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Checkpoint path; defaults to `<train.output_dir>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate across a grid of one hyperparameter.
    Sweep {
        /// Which knob to sweep: price_levels or rounds.
        #[arg(long)]
        param: String,
        /// Grid values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Run grid points on threads instead of sequentially.
        #[arg(long)]
        parallel: bool,
    },
}

impl Overrides {
    /// Fold the flags into `config`.
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        if let Some(batch_size) = self.batch_size {
            config.train.batch_size = batch_size;
        }
        if let Some(learning_rate) = self.learning_rate {
            config.train.learning_rate = learning_rate;
        }
        if let Some(embedding_dim) = self.embedding_dim {
            config.model.embedding_dim = embedding_dim;
        }
        if let Some(heads) = self.heads {
            config.model.heads = heads;
        }
        if let Some(price_levels) = self.price_levels {
            config.model.price_levels = price_levels;
        }
        if let Some(rounds) = self.rounds {
            config.model.rounds = rounds;
        }
        if let Some(name) = &self.ablation {
            config.model.ablation = Ablation::from_name(name)?;
        }
        if let Some(mode) = &self.price_mode {
            config.data.price_mode = match mode.as_str() {
                "logistic" => PriceMode::Logistic,
                "uniform" => PriceMode::Uniform,
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown price mode '{other}' (expected logistic or uniform)"
                    )))
                }
            };
        }
        if let Some(k_neighbors) = self.k_neighbors {
            config.eval.k_neighbors = k_neighbors;
        }
        config.validate()
    }
}

/// Load the config, apply overrides, and dispatch the command.
pub fn run(cli: Cli) -> Result<(), Error> {
    let mut config = RunConfig::load(&cli.config)?;
    cli.overrides.apply(&mut config)?;
    match cli.command {
        Command::Preprocess => cmd_preprocess(&config),
        Command::Train => cmd_train(&config),
        Command::Evaluate { model, checkpoint } => {
            cmd_evaluate(&config, &model, checkpoint.as_deref())
        }
        Command::Recommend {
            session,
            k,
            checkpoint,
        } => cmd_recommend(&config, &session, k, checkpoint.as_deref()),
        Command::Sweep {
            param,
            values,
            parallel,
        } => cmd_sweep(&config, &param, &values, parallel),
    }
}

/// Run the dataset pipeline end to end and print the summary stats.
pub fn cmd_preprocess(config: &RunConfig) -> Result<(), Error> {
    if config.data.raw_csv.is_empty() {
        return Err(ConfigError::Invalid("data.raw_csv is not set".into()).into());
    }
    let interactions =
        load_interactions(Path::new(&config.data.raw_csv), &config.data.columns)?;
    let raw_sessions = sessionize_daily(&interactions);
    let (mut catalog, indexed) = filter_and_index(
        &raw_sessions,
        config.data.min_item_count,
        config.data.min_session_len,
    )?;
    assign_price_levels(&mut catalog, config.model.price_levels, config.data.price_mode)?;
    let split = split_chronological(indexed)?;

    let dir = config.dataset_dir();
    save_dataset(&dir, &catalog, &split)?;
    config.save_into(&dir)?;

    print!("{}", dataset_stats(&catalog, &split));
    println!("dataset written to {}", dir.display());
    Ok(())
}

/// The six headline statistics of a preprocessed dataset.
pub fn dataset_stats(catalog: &ItemCatalog, split: &SplitDataset) -> String {
    let sessions = split.train.len() + split.valid.len() + split.test.len();
    let interactions: usize = split
        .train
        .iter()
        .chain(&split.valid)
        .chain(&split.test)
        .map(|s| s.items.len())
        .sum();
    let avg_len = interactions as f64 / sessions.max(1) as f64;
    format!(
        "items             : {}\n\
         price levels      : {}\n\
         categories        : {}\n\
         interactions      : {}\n\
         sessions          : {}\n\
         avg. session len  : {:.2}\n",
        catalog.len(),
        catalog.price_levels,
        catalog.categories.len(),
        interactions,
        sessions,
        avg_len
    )
}

fn default_checkpoint_path(config: &RunConfig) -> PathBuf {
    Path::new(&config.train.output_dir).join("checkpoint.json")
}

fn build_graph(
    catalog: &ItemCatalog,
    split: &SplitDataset,
) -> Result<HeteroHypergraph, Error> {
    Ok(HeteroHypergraph::build(catalog, &split.train)?)
}

/// Train per the config and write checkpoint, history, and config
/// into the train output directory.
pub fn cmd_train(config: &RunConfig) -> Result<(), Error> {
    let (catalog, split) = load_dataset(&config.dataset_dir())?;
    let hp = &config.model;
    hp.check_against_catalog(&catalog)?;
    let graph = build_graph(&catalog, &split)?;
    let store = initialize_params(hp, catalog.len(), catalog.categories.len(), config.seed)?;

    let settings = config.train_settings();
    let outcome = train(store, &graph, hp, &split.train, &split.valid, &settings)?;

    for record in &outcome.history {
        println!(
            "epoch {:>3}  loss {:>10.4}  valid Prec@10 {:>6.2}  Prec@20 {:>6.2}  MRR@10 {:>6.2}  MRR@20 {:>6.2}",
            record.epoch,
            record.train_loss,
            record.valid_prec_at_10,
            record.valid_prec_at_20,
            record.valid_mrr_at_10,
            record.valid_mrr_at_20,
        );
    }

    let dir = Path::new(&config.train.output_dir);
    std::fs::create_dir_all(dir).map_err(|source| DataError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    Checkpoint::from_store(&outcome.best_params, hp, config.seed)
        .save(&dir.join("checkpoint.json"))?;
    save_history(&outcome.history, &dir.join("history.jsonl"))?;
    config.save_into(dir)?;
    match outcome.best_epoch {
        Some(epoch) => println!("best epoch: {epoch}"),
        None => println!("no epochs ran; checkpoint holds the initial parameters"),
    }
    println!("checkpoint written to {}", dir.join("checkpoint.json").display());
    Ok(())
}

/// Human-readable model label for reports.
fn model_label(hp: &Hyperparams) -> String {
    let a = hp.ablation;
    let suffix = if a.no_price {
        "-no_price"
    } else if a.no_category {
        "-no_category"
    } else if a.price_as_feature_only {
        "-price_as_feature_only"
    } else if a.no_coguide {
        "-no_coguide"
    } else {
        ""
    };
    format!("cohhn{suffix}")
}

/// Evaluate a checkpoint or baseline on the test split and write the
/// report as JSON and text.
pub fn cmd_evaluate(
    config: &RunConfig,
    model: &str,
    checkpoint: Option<&Path>,
) -> Result<(), Error> {
    let (catalog, split) = load_dataset(&config.dataset_dir())?;
    let report = match model {
        "checkpoint" => {
            let path = checkpoint
                .map(Path::to_path_buf)
                .unwrap_or_else(|| default_checkpoint_path(config));
            let loaded = Checkpoint::load(&path)?;
            let hp = loaded.hyperparams.clone();
            hp.check_against_catalog(&catalog)?;
            let graph = build_graph(&catalog, &split)?;
            let frozen = FrozenModel::freeze(&loaded.to_store()?, &graph, &hp)?;
            evaluate(
                &frozen,
                &split.test,
                &config.eval.ks,
                &catalog,
                &model_label(&hp),
                loaded.seed,
            )?
        }
        "spop" => {
            let pop = PopIndex::build(&split.train, catalog.len());
            evaluate(&pop, &split.test, &config.eval.ks, &catalog, "spop", config.seed)?
        }
        "sknn" => {
            let knn = Sknn::new(&split.train, catalog.len(), config.eval.k_neighbors);
            evaluate(&knn, &split.test, &config.eval.ks, &catalog, "sknn", config.seed)?
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown model '{other}' (expected checkpoint, spop, or sknn)"
            ))
            .into())
        }
    };

    let dir = Path::new(&config.eval.output_dir);
    std::fs::create_dir_all(dir).map_err(|source| DataError::Write {
        path: dir.display().to_string(),
        source,
    })?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    std::fs::write(dir.join("report.json"), json + "\n").map_err(|source| DataError::Write {
        path: dir.join("report.json").display().to_string(),
        source,
    })?;
    std::fs::write(dir.join("report.txt"), report.to_table()).map_err(|source| {
        DataError::Write {
            path: dir.join("report.txt").display().to_string(),
            source,
        }
    })?;
    config.save_into(dir)?;
    print!("{}", report.to_table());
    Ok(())
}

/// Rank items for one ad-hoc session and print them with scores.
pub fn cmd_recommend(
    config: &RunConfig,
    session_path: &Path,
    k: usize,
    checkpoint: Option<&Path>,
) -> Result<(), Error> {
    let (catalog, split) = load_dataset(&config.dataset_dir())?;
    let text = std::fs::read_to_string(session_path).map_err(|source| DataError::Io {
        path: session_path.display().to_string(),
        source,
    })?;
    let ids: Vec<String> = serde_json::from_str(&text).map_err(|e| DataError::Format {
        path: session_path.display().to_string(),
        message: format!("expected a JSON array of item-id strings: {e}"),
    })?;
    if ids.is_empty() {
        return Err(DataError::Format {
            path: session_path.display().to_string(),
            message: "session is empty".into(),
        }
        .into());
    }
    let session: Vec<usize> = ids
        .iter()
        .map(|id| {
            catalog
                .index_of(id)
                .ok_or_else(|| DataError::UnknownItem(id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_checkpoint_path(config));
    let loaded = Checkpoint::load(&path)?;
    let hp = loaded.hyperparams.clone();
    hp.check_against_catalog(&catalog)?;
    let graph = build_graph(&catalog, &split)?;
    let frozen = FrozenModel::freeze(&loaded.to_store()?, &graph, &hp)?;

    let scores = frozen.score_session(&session, None)?;
    for (rank, &item) in rank_descending(&scores, k).iter().enumerate() {
        println!(
            "{:>3}  {}  {:.6}",
            rank + 1,
            catalog.items[item].item_id,
            scores[item]
        );
    }
    Ok(())
}

/// One grid point's outcome, for the sweep summary.
struct SweepPoint {
    value: usize,
    report: EvalReport,
}

/// Train and evaluate once per grid value of `price_levels` or
/// `rounds`, writing each point's artifacts into its own directory.
pub fn cmd_sweep(
    config: &RunConfig,
    param: &str,
    values: &[usize],
    parallel: bool,
) -> Result<(), Error> {
    if values.is_empty() {
        return Err(ConfigError::Invalid("sweep grid is empty".into()).into());
    }
    if !matches!(param, "price_levels" | "rounds") {
        return Err(ConfigError::Invalid(format!(
            "unknown sweep parameter '{param}' (expected price_levels or rounds)"
        ))
        .into());
    }
    let (catalog, split) = load_dataset(&config.dataset_dir())?;
    let sweep_dir = Path::new(&config.train.output_dir).join(format!("sweep-{param}"));
    config.save_into(&sweep_dir)?;

    let run_point = |&value: &usize| -> Result<SweepPoint, Error> {
        let mut point_config = config.clone();
        let mut catalog = catalog.clone();
        match param {
            "price_levels" => {
                point_config.model.price_levels = value;
                assign_price_levels(&mut catalog, value, point_config.data.price_mode)?;
            }
            _ => point_config.model.rounds = value,
        }
        point_config.model.validate()?;
        let hp = &point_config.model;
        let graph = build_graph(&catalog, &split)?;
        let store =
            initialize_params(hp, catalog.len(), catalog.categories.len(), point_config.seed)?;
        let outcome = train(
            store,
            &graph,
            hp,
            &split.train,
            &split.valid,
            &point_config.train_settings(),
        )?;
        let frozen = FrozenModel::freeze(&outcome.best_params, &graph, hp)?;
        let report = evaluate(
            &frozen,
            &split.test,
            &point_config.eval.ks,
            &catalog,
            &format!("{}[{param}={value}]", model_label(hp)),
            point_config.seed,
        )?;

        let dir = sweep_dir.join(format!("{param}-{value}"));
        std::fs::create_dir_all(&dir).map_err(|source| DataError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        Checkpoint::from_store(&outcome.best_params, hp, point_config.seed)
            .save(&dir.join("checkpoint.json"))?;
        save_history(&outcome.history, &dir.join("history.jsonl"))?;
        let json = serde_json::to_string_pretty(&report).expect("reports serialize");
        std::fs::write(dir.join("report.json"), json + "\n").map_err(|source| {
            DataError::Write {
                path: dir.join("report.json").display().to_string(),
                source,
            }
        })?;
        Ok(SweepPoint { value, report })
    };

    let points: Vec<SweepPoint> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = values
                .iter()
                .map(|value| scope.spawn(move || run_point(value)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect::<Result<_, Error>>()
        })?
    } else {
        values.iter().map(run_point).collect::<Result<_, _>>()?
    };

    for point in &points {
        let (&k, pair) = point
            .report
            .at
            .iter()
            .next_back()
            .expect("reports always carry at least one cutoff");
        println!(
            "{param} = {:<4}  Prec@{k} {:>6.2}  MRR@{k} {:>6.2}",
            point.value, pair.precision, pair.mrr
        );
    }
    println!("sweep artifacts in {}", sweep_dir.display());
    Ok(())
}
