//! Batch commands. Each is a pure function of the config, its input files
//! and the seed; rerunning one reproduces its output files byte for byte.

use std::io::Write;
use std::path::Path;

use crate::calibration::{
    self, build_autoencoder, split_holdout, transfer_learn, AutoencoderSpec, Normalizer, ObservableVector,
    NUM_OBSERVABLES, OBSERVABLE_NAMES,
};
use crate::datagen;
use crate::evaluation;
use crate::numcore::SeededRng;
use crate::{Error, Result};

use super::config::RunConfig;
use super::csvio;
use super::model_file::{load_model, save_model, ModelFile};
use super::write_atomic;

// Independent RNG streams under the run seed. Training shuffles use stream 0.
const STREAM_SIM_DATABASE: u64 = 1;
const STREAM_SHOTS: u64 = 2;
const STREAM_INIT: u64 = 3;

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| Error::io("<output>", e))?
    };
}

fn read_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(&bytes).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

fn write_model(path: &Path, m: &ModelFile) -> Result<()> {
    write_atomic(path, &save_model(m)?)
}

pub fn cmd_generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    if cfg.n_sim == 0 || cfg.n_shots == 0 {
        return Err(Error::Config("n_sim and n_shots must be >= 1".into()));
    }
    let sims = datagen::generate_sim_database(cfg.n_sim, &mut SeededRng::with_stream(seed, STREAM_SIM_DATABASE))?;
    let shots =
        datagen::generate_shot_series(cfg.n_shots, &cfg.generator, &mut SeededRng::with_stream(seed, STREAM_SHOTS))?;
    let sim_path = cfg.resolve(&cfg.sim_database);
    let shots_path = cfg.resolve(&cfg.shots);
    csvio::write_sim_database(&sim_path, &sims)?;
    csvio::write_shots(&shots_path, &shots)?;
    say!(out, "wrote {} simulations to {}", sims.len(), sim_path.display());
    say!(out, "wrote {} shots to {}", shots.len(), shots_path.display());
    Ok(())
}

pub fn cmd_train_base(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    let data = csvio::read_sim_database(&cfg.resolve(&cfg.sim_database))?;
    let n_check = (data.len() as f64 * cfg.ev_holdout_fraction).floor() as usize;
    let (train, check) = data.split_at(data.len() - n_check);
    let normalizer = Normalizer::fit(train)?;
    let spec = AutoencoderSpec::default();
    let ae = build_autoencoder(&spec, &mut SeededRng::with_stream(seed, STREAM_INIT))?;
    let tc = cfg.base_train(seed);
    let (base, history) = calibration::train_base(&ae, train, &normalizer, &tc)?;

    say!(out, "trained base autoencoder {:?} on {} simulations", spec.widths(), train.len());
    if let Some(loss) = history.last() {
        say!(out, "epochs {}  final loss {loss:.6e}", history.epochs());
    }
    if n_check >= 2 {
        let report = evaluation::reconstruction_report(&base, &normalizer, check)?;
        say!(out, "explained variance on {} held-out simulations:", report.samples);
        for (name, ev) in OBSERVABLE_NAMES.iter().zip(report.explained_variance) {
            say!(out, "  {name:<16} {ev:.4}");
        }
    }

    let path = cfg.resolve(&cfg.base_model);
    write_model(
        &path,
        &ModelFile {
            autoencoder: spec,
            normalizer,
            base,
            calibrated: None,
            n_experiments_used: 0,
            init_seed: seed,
            base_training: tc,
            transfer_training: None,
        },
    )?;
    say!(out, "wrote {}", path.display());
    Ok(())
}

pub fn cmd_transfer(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    let base_file = read_model(&cfg.resolve(&cfg.base_model))?;
    let shots = csvio::read_shots(&cfg.resolve(&cfg.shots))?;
    let (train, holdout) = split_holdout(shots, cfg.holdout)?;
    let n = cfg.n_experiments.unwrap_or(train.len());
    if n == 0 || n > train.len() {
        return Err(Error::Config(format!(
            "n_experiments must be in 1..={}, got {n}",
            train.len()
        )));
    }
    let train = &train[..n];
    let tc = cfg.transfer_train(seed);
    let model = transfer_learn(&base_file.base, train, &base_file.normalizer, &tc)?;
    let report = evaluation::evaluate_holdout(&model, &holdout)?;

    say!(out, "transferred on {} experiments (shots {}..={})", n, train[0].shot_index, train[n - 1].shot_index);
    let ids: Vec<String> = report.shot_indices.iter().map(u64::to_string).collect();
    say!(out, "holdout shots: {}", ids.join(" "));
    say!(out, "{:<16} {:>12} {:>12}", "observable", "simulation", "calibrated");
    for i in 0..NUM_OBSERVABLES {
        say!(
            out,
            "{:<16} {:>11.2}% {:>11.2}%",
            OBSERVABLE_NAMES[i],
            100.0 * report.baseline[i],
            100.0 * report.calibrated[i]
        );
    }

    let avp = evaluation::export_actual_vs_predicted(&model, train, &holdout)?;
    let avp_path = cfg.resolve(&cfg.actual_vs_predicted);
    csvio::write_actual_vs_predicted(&avp_path, &avp)?;

    let path = cfg.resolve(&cfg.calibrated_model);
    write_model(
        &path,
        &ModelFile {
            calibrated: Some(model.calibrated),
            n_experiments_used: n,
            transfer_training: Some(tc),
            ..base_file
        },
    )?;
    say!(out, "wrote {} and {}", path.display(), avp_path.display());
    Ok(())
}

pub fn cmd_curve(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    let base_file = read_model(&cfg.resolve(&cfg.base_model))?;
    let shots = csvio::read_shots(&cfg.resolve(&cfg.shots))?;
    let (train, holdout) = split_holdout(shots, cfg.holdout)?;
    let curve = calibration::learning_curve(
        &base_file.base,
        &train,
        &holdout,
        &base_file.normalizer,
        &cfg.transfer_train(seed),
        cfg.curve_parallel,
    )?;
    let path = cfg.resolve(&cfg.learning_curve);
    csvio::write_learning_curve(&path, &curve)?;

    let fmt = |errs: &[f64; NUM_OBSERVABLES]| {
        errs.iter().map(|e| format!("{:>7.2}", 100.0 * e)).collect::<Vec<_>>().join(" ")
    };
    say!(out, "holdout mean relative error (%) by experiments ingested");
    say!(out, "{:>3} {}", 0, fmt(&curve.base_errors));
    for row in &curve.rows {
        say!(out, "{:>3} {}  {}", row.n, fmt(&row.errors), row.campaign);
    }
    say!(out, "wrote {} rows to {}", curve.rows.len(), path.display());
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, sim_values: &[f64], out: &mut dyn Write) -> Result<()> {
    let values: [f64; NUM_OBSERVABLES] = sim_values.try_into().map_err(|_| {
        Error::Config(format!(
            "predict takes {NUM_OBSERVABLES} values ({}), got {}",
            OBSERVABLE_NAMES.join(" "),
            sim_values.len()
        ))
    })?;
    let sim = ObservableVector::from_array(values);
    sim.check_finite()?;
    let model = read_model(&cfg.resolve(&cfg.calibrated_model))?.calibrated_model();
    let pred = model.predict(&sim)?;
    for (name, x) in OBSERVABLE_NAMES.iter().zip(pred.to_array()) {
        say!(out, "{name} = {x}");
    }
    Ok(())
}
