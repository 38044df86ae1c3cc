//! Reconstruction and prediction metrics.
//!
//! Yields are scored on their log10 values, as stored.

use crate::calibration::{self, CalibratedModel, Normalizer, ObservableVector, ShotRecord, NUM_OBSERVABLES, OBSERVABLE_NAMES};
use crate::network::Mlp;
use crate::{Error, Result};

// Shifted mean: exact for constant input.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// `1 - Var(truth - pred) / Var(truth)` with population variances.
///
/// The residual variance is accumulated from centered truth and centered
/// prediction, so a constant predictor scores exactly 0 and a shifted copy
/// of the truth scores exactly 1 whenever the centering is exact.
pub fn explained_variance(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::dims(
            "explained_variance",
            format!("{} truths", truth.len()),
            format!("{} predictions", pred.len()),
        ));
    }
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("explained variance needs at least 2 samples".into()));
    }
    let (mt, mp) = (mean(truth), mean(pred));
    let mut var_truth = 0.0;
    let mut var_resid = 0.0;
    for (t, p) in truth.iter().zip(pred) {
        let ct = t - mt;
        let r = ct - (p - mp);
        var_truth += ct * ct;
        var_resid += r * r;
    }
    if !(var_truth > 0.0) {
        return Err(Error::InvalidArgument("truth has zero variance".into()));
    }
    Ok(1.0 - var_resid / var_truth)
}

/// `(1/n) Σ |pred_i - truth_i| / |truth_i|`, as a fraction.
pub fn mean_relative_error(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::dims(
            "mean_relative_error",
            format!("{} truths", truth.len()),
            format!("{} predictions", pred.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("mean relative error needs at least 1 sample".into()));
    }
    let mut total = 0.0;
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        if *t == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "relative error undefined: truth[{i}] is zero"
            )));
        }
        total += (p - t).abs() / t.abs();
    }
    Ok(total / truth.len() as f64)
}

fn columns(vs: &[ObservableVector]) -> [Vec<f64>; NUM_OBSERVABLES] {
    let mut cols: [Vec<f64>; NUM_OBSERVABLES] = Default::default();
    for v in vs {
        for (c, x) in cols.iter_mut().zip(v.to_array()) {
            c.push(x);
        }
    }
    cols
}

fn per_observable(
    truth: &[ObservableVector],
    pred: &[ObservableVector],
    metric: fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<[f64; NUM_OBSERVABLES]> {
    let (t, p) = (columns(truth), columns(pred));
    let mut out = [0.0; NUM_OBSERVABLES];
    for i in 0..NUM_OBSERVABLES {
        out[i] = metric(&t[i], &p[i]).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", OBSERVABLE_NAMES[i])),
            other => other,
        })?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport {
    pub explained_variance: [f64; NUM_OBSERVABLES],
    pub samples: usize,
}

/// Per-observable explained variance of autoencoder reconstructions.
pub fn reconstruction_report(model: &Mlp, normalizer: &Normalizer, data: &[ObservableVector]) -> Result<ReconstructionReport> {
    let recon = data
        .iter()
        .map(|v| calibration::reconstruct(model, normalizer, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionReport {
        explained_variance: per_observable(data, &recon, explained_variance)?,
        samples: data.len(),
    })
}

/// Holdout mean relative errors of the calibrated model and of the raw
/// simulation, per observable.
#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutReport {
    pub calibrated: [f64; NUM_OBSERVABLES],
    pub baseline: [f64; NUM_OBSERVABLES],
    pub samples: usize,
    pub shot_indices: Vec<u64>,
}

pub fn evaluate_holdout(model: &CalibratedModel, holdout: &[ShotRecord]) -> Result<HoldoutReport> {
    if holdout.is_empty() {
        return Err(Error::InvalidArgument("holdout is empty".into()));
    }
    let measured: Vec<_> = holdout.iter().map(|s| s.exp).collect();
    let simulated: Vec<_> = holdout.iter().map(|s| s.sim).collect();
    let predicted = holdout
        .iter()
        .map(|s| model.predict(&s.sim))
        .collect::<Result<Vec<_>>>()?;
    Ok(HoldoutReport {
        calibrated: per_observable(&measured, &predicted, mean_relative_error)?,
        baseline: per_observable(&measured, &simulated, mean_relative_error)?,
        samples: holdout.len(),
        shot_indices: holdout.iter().map(|s| s.shot_index).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Holdout,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Holdout => "holdout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActualVsPredicted {
    pub shot_index: u64,
    pub split: Split,
    pub observable: &'static str,
    pub measured: f64,
    pub simulation: f64,
    pub calibrated: f64,
}

/// Long-format rows: one per shot per observable, training shots first.
pub fn export_actual_vs_predicted(
    model: &CalibratedModel,
    train: &[ShotRecord],
    holdout: &[ShotRecord],
) -> Result<Vec<ActualVsPredicted>> {
    let mut rows = Vec::with_capacity((train.len() + holdout.len()) * NUM_OBSERVABLES);
    for (split, shots) in [(Split::Train, train), (Split::Holdout, holdout)] {
        for s in shots {
            let pred = model.predict(&s.sim)?.to_array();
            let (exp, sim) = (s.exp.to_array(), s.sim.to_array());
            for i in 0..NUM_OBSERVABLES {
                rows.push(ActualVsPredicted {
                    shot_index: s.shot_index,
                    split,
                    observable: OBSERVABLE_NAMES[i],
                    measured: exp[i],
                    simulation: sim[i],
                    calibrated: pred[i],
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{build_autoencoder, transfer_learn, AutoencoderSpec};
    use crate::datagen::{self, GeneratorConfig};
    use crate::network::TrainConfig;
    use crate::numcore::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn explained_variance_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(explained_variance(&t, &t).unwrap(), 1.0);
        assert_eq!(explained_variance(&t, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|x| x + 5.0).collect();
        assert_eq!(explained_variance(&t, &shifted).unwrap(), 1.0);
        assert!(explained_variance(&[1.0, 1.0], &[0.0, 2.0]).is_err());
        assert!(explained_variance(&[1.0], &[1.0]).is_err());
        assert!(explained_variance(&t, &[1.0]).is_err());
    }

    #[test]
    fn mean_relative_error_examples() {
        assert_eq!(mean_relative_error(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), 0.0);
        assert!((mean_relative_error(&[100.0], &[110.0]).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(mean_relative_error(&[2.0, 4.0], &[1.0, 6.0]).unwrap(), 0.5);
        let err = mean_relative_error(&[1.0, 0.0], &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("truth[1]"), "{err}");
        assert!(mean_relative_error(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn explained_variance_affine_invariant(
            truth in prop::collection::vec(-10.0f64..10.0, 3..30),
            noise in prop::collection::vec(-1.0f64..1.0, 30),
            alpha in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            beta in -10.0f64..10.0,
        ) {
            prop_assume!(population_variance(&truth) > 1e-3);
            let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e).collect();
            let a = explained_variance(&truth, &pred).unwrap();
            let map = |xs: &[f64]| xs.iter().map(|x| alpha * x + beta).collect::<Vec<_>>();
            let b = explained_variance(&map(&truth), &map(&pred)).unwrap();
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
            prop_assert!(a <= 1.0);
        }

        #[test]
        fn explained_variance_of_mean_predictor_is_zero(truth in prop::collection::vec(-10.0f64..10.0, 2..30)) {
            prop_assume!(population_variance(&truth) > 1e-6);
            let m = truth.iter().sum::<f64>() / truth.len() as f64;
            let pred = vec![m; truth.len()];
            prop_assert_eq!(explained_variance(&truth, &pred).unwrap(), 0.0);
        }

        #[test]
        fn relative_error_scale_invariant(
            pairs in prop::collection::vec((0.1f64..10.0, -10.0f64..10.0), 1..20),
            k in 0.01f64..100.0,
        ) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mean_relative_error(&t, &p).unwrap();
            let scale = |xs: &[f64]| xs.iter().map(|x| k * x).collect::<Vec<_>>();
            let b = mean_relative_error(&scale(&t), &scale(&p)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }

    fn model_and_shots(epochs: usize) -> (CalibratedModel, Vec<ShotRecord>) {
        let data = datagen::generate_sim_database(300, &mut SeededRng::new(1)).unwrap();
        let norm = Normalizer::fit(&data).unwrap();
        let ae = build_autoencoder(&AutoencoderSpec::default(), &mut SeededRng::new(2)).unwrap();
        let shots = datagen::generate_shot_series(15, &GeneratorConfig::default(), &mut SeededRng::new(3)).unwrap();
        let cfg = TrainConfig {
            epochs,
            ..TrainConfig::transfer(4)
        };
        (transfer_learn(&ae, &shots[..8], &norm, &cfg).unwrap(), shots)
    }

    #[test]
    fn holdout_report_counts_and_baseline() {
        let (model, shots) = model_and_shots(3);
        let holdout = &shots[8..];
        let r = evaluate_holdout(&model, holdout).unwrap();
        assert_eq!(r.samples, 7);
        assert_eq!(r.shot_indices, (8..15).collect::<Vec<_>>());
        let exp: Vec<f64> = holdout.iter().map(|s| s.exp.tion_dt).collect();
        let sim: Vec<f64> = holdout.iter().map(|s| s.sim.tion_dt).collect();
        assert_eq!(r.baseline[3], mean_relative_error(&exp, &sim).unwrap());
        assert!(r.calibrated.iter().chain(&r.baseline).all(|&e| e >= 0.0));
        assert!(evaluate_holdout(&model, &[]).is_err());
    }

    #[test]
    fn perfect_identity_model_matches_baseline() {
        // A net that reproduces its input exactly: calibrated error == baseline.
        use crate::network::{Activation, Layer, Mlp};
        use crate::numcore::{Matrix, Vector};
        let (mut model, shots) = model_and_shots(0);
        let id = Mlp::new(vec![Layer::new(Matrix::identity(7), Vector::zeros(7), Activation::Linear).unwrap()]).unwrap();
        model.calibrated = id;
        let r = evaluate_holdout(&model, &shots[8..]).unwrap();
        for (c, b) in r.calibrated.iter().zip(&r.baseline) {
            assert!((c - b).abs() < 1e-12);
        }
    }

    #[test]
    fn holdout_report_ignores_training_shots() {
        let (model, shots) = model_and_shots(3);
        let holdout = &shots[8..];
        let before = evaluate_holdout(&model, holdout).unwrap();
        let mut tampered = shots.clone();
        tampered[2].exp.tion_dt = 1e6;
        tampered[5].sim.dsr = 0.9;
        let after = evaluate_holdout(&model, &tampered[8..]).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn actual_vs_predicted_rows() {
        let (model, shots) = model_and_shots(3);
        let rows = export_actual_vs_predicted(&model, &shots[..8], &shots[8..]).unwrap();
        assert_eq!(rows.len(), 15 * 7);
        assert_eq!(rows.iter().filter(|r| r.split == Split::Holdout).count(), 49);
        for r in &rows {
            let s = &shots[r.shot_index as usize];
            let i = OBSERVABLE_NAMES.iter().position(|n| *n == r.observable).unwrap();
            assert_eq!(r.simulation, s.sim.to_array()[i]);
            assert_eq!(r.measured, s.exp.to_array()[i]);
            assert_eq!(r.calibrated, model.predict(&s.sim).unwrap().to_array()[i]);
        }
    }
}
