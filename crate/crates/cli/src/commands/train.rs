//! `train`: assemble the train and validation datasets, fit the classifier,
//! and write the selected checkpoint plus the evaluation log under the output
//! directory. With `export_datasets` enabled the assembled datasets are also
//! written, so any run can be audited or reproduced offline.

use fundrank_core::features::{build_dataset, export_dataset, DenominatorFloors, Split};
use fundrank_core::net::{config_hash, save_checkpoint, train, TrainingSet};

use crate::config::RunConfig;
use crate::lock::OutputLock;
use crate::CliError;

use super::{write_text, World};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let world = World::load(config)?;
    let _lock = OutputLock::acquire(&config.paths.output_dir)?;

    // Denominator floors are fit on statements available before the training
    // boundary, then frozen: validation, test, and live scoring all reuse the
    // training-time floors, exactly like the network weights.
    let floors = DenominatorFloors::fit(&world.store, &world.stocks, config.splits.train_end);
    let bounds = config.splits.boundaries();
    let pipeline = config.pipeline.pipeline();

    let train_samples = build_dataset(
        &world.store,
        &world.cal,
        &world.schedule,
        &world.stocks,
        &floors,
        pipeline,
        &bounds,
        Split::Train,
    )?;
    let val_samples = build_dataset(
        &world.store,
        &world.cal,
        &world.schedule,
        &world.stocks,
        &floors,
        pipeline,
        &bounds,
        Split::Validation,
    )?;
    println!("train samples: {}", train_samples.len());
    println!("validation samples: {}", val_samples.len());

    if config.export_datasets {
        let dir = config.out("datasets");
        std::fs::create_dir_all(&dir).map_err(|e| crate::io_err(&dir, e))?;
        export_dataset(
            &train_samples,
            &dir.join("train_values.csv"),
            &dir.join("train_mask.csv"),
        )?;
        export_dataset(
            &val_samples,
            &dir.join("validation_values.csv"),
            &dir.join("validation_mask.csv"),
        )?;
        println!("datasets exported to {}", dir.display());
    }

    let train_set = TrainingSet::from_samples(&train_samples)?;
    let val_set = TrainingSet::from_samples(&val_samples)?;
    let outcome = train(&train_set, &val_set, &config.train, config.seed)?;

    let mut log_csv = String::from("iteration,train_loss,val_metric\n");
    for row in &outcome.log {
        log_csv.push_str(&format!("{},{},{}\n", row.iteration, row.train_loss, row.val_metric));
    }
    write_text(&config.out(TRAINING_LOG_FILE), &log_csv)?;

    let checkpoint_path = config.out(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint_path, &outcome.best, &config_hash(&config.train), &floors)?;

    if outcome.clamp_events > 0 {
        log::warn!("{} training rows hit the loss clamp", outcome.clamp_events);
    }
    println!(
        "best {} {:.6} at iteration {}",
        outcome.best.metric.as_str(),
        outcome.best.metric_value,
        outcome.best.iteration
    );
    println!("checkpoint written to {}", checkpoint_path.display());
    Ok(())
}
