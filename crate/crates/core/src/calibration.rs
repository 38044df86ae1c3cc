//! Simulation-to-experiment calibration by transfer learning an autoencoder.
//!
//! The base autoencoder learns to reconstruct standardized simulation
//! observables through a 5-wide bottleneck. Transfer then retrains only the
//! last two decoder layers so that, given a shot's *simulated* observables,
//! the network emits the *measured* ones. Standardization statistics always
//! come from the simulation training set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation;
use crate::network::{self, Activation, FreezeMask, LossHistory, Mlp, TrainConfig};
use crate::numcore::{SeededRng, Vector};
use crate::{Error, Result};

pub const NUM_OBSERVABLES: usize = 7;

/// Canonical observable names, in storage order.
pub const OBSERVABLE_NAMES: [&str; NUM_OBSERVABLES] = [
    "bang_time",
    "burnwidth",
    "log10_yield_dt",
    "tion_dt",
    "log10_yield_dd",
    "tion_dd",
    "dsr",
];

/// The seven implosion diagnostics. Times in ns, temperatures in keV, yields
/// as log10 of the neutron count, down-scatter ratio as a fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableVector {
    pub gamma_bang_time: f64,
    pub gamma_burnwidth: f64,
    pub log10_yield_dt: f64,
    pub tion_dt: f64,
    pub log10_yield_dd: f64,
    pub tion_dd: f64,
    pub dsr: f64,
}

impl ObservableVector {
    pub fn from_array(v: [f64; NUM_OBSERVABLES]) -> Self {
        Self {
            gamma_bang_time: v[0],
            gamma_burnwidth: v[1],
            log10_yield_dt: v[2],
            tion_dt: v[3],
            log10_yield_dd: v[4],
            tion_dd: v[5],
            dsr: v[6],
        }
    }

    /// Ingests raw neutron yields, converting them to log10.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw_yields(
        bang_time: f64,
        burnwidth: f64,
        yield_dt: f64,
        tion_dt: f64,
        yield_dd: f64,
        tion_dd: f64,
        dsr: f64,
    ) -> Result<Self> {
        if !(yield_dt > 0.0 && yield_dd > 0.0) {
            return Err(Error::Data(format!(
                "neutron yields must be positive, got DT {yield_dt}, DD {yield_dd}"
            )));
        }
        let v = Self::from_array([
            bang_time,
            burnwidth,
            yield_dt.log10(),
            tion_dt,
            yield_dd.log10(),
            tion_dd,
            dsr,
        ]);
        v.validate()?;
        Ok(v)
    }

    pub fn to_array(&self) -> [f64; NUM_OBSERVABLES] {
        [
            self.gamma_bang_time,
            self.gamma_burnwidth,
            self.log10_yield_dt,
            self.tion_dt,
            self.log10_yield_dd,
            self.tion_dd,
            self.dsr,
        ]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.to_array().iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("observable `{}`", OBSERVABLE_NAMES[i]))),
            None => Ok(()),
        }
    }

    /// Physical validity of a measured or simulated record. Model outputs
    /// are only required to be finite.
    pub fn validate(&self) -> Result<()> {
        self.check_finite()?;
        if !(0.0..=1.0).contains(&self.dsr) {
            return Err(Error::Data(format!("dsr must lie in [0, 1], got {}", self.dsr)));
        }
        if !(self.gamma_burnwidth > 0.0) {
            return Err(Error::Data(format!(
                "burnwidth must be positive, got {}",
                self.gamma_burnwidth
            )));
        }
        Ok(())
    }
}

/// Per-observable standardization fitted on simulation data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: [f64; NUM_OBSERVABLES],
    pub sd: [f64; NUM_OBSERVABLES],
}

impl Normalizer {
    /// Population mean and standard deviation of each observable.
    pub fn fit(data: &[ObservableVector]) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "normalizer needs at least 2 samples, got {}",
                data.len()
            )));
        }
        let n = data.len() as f64;
        let mut mean = [0.0; NUM_OBSERVABLES];
        for v in data {
            for (m, x) in mean.iter_mut().zip(v.to_array()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = [0.0; NUM_OBSERVABLES];
        for v in data {
            for ((s, x), m) in sd.iter_mut().zip(v.to_array()).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for (i, s) in sd.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) || !s.is_finite() {
                return Err(Error::ZeroVariance(OBSERVABLE_NAMES[i]));
            }
        }
        Ok(Self { mean, sd })
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_OBSERVABLES {
            if !self.mean[i].is_finite() {
                return Err(Error::NonFinite(format!("normalizer mean `{}`", OBSERVABLE_NAMES[i])));
            }
            if !(self.sd[i] > 0.0) || !self.sd[i].is_finite() {
                return Err(Error::ZeroVariance(OBSERVABLE_NAMES[i]));
            }
        }
        Ok(())
    }

    pub fn transform(&self, v: &ObservableVector) -> Result<Vector> {
        v.check_finite()?;
        let a = v.to_array();
        Vector::new((0..NUM_OBSERVABLES).map(|i| (a[i] - self.mean[i]) / self.sd[i]).collect())
    }

    pub fn inverse(&self, z: &Vector) -> Result<ObservableVector> {
        if z.len() != NUM_OBSERVABLES {
            return Err(Error::dims(
                "Normalizer::inverse",
                format!("{NUM_OBSERVABLES} observables"),
                format!("vector of length {}", z.len()),
            ));
        }
        let mut out = [0.0; NUM_OBSERVABLES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = z[i] * self.sd[i] + self.mean[i];
        }
        Ok(ObservableVector::from_array(out))
    }
}

/// Hourglass autoencoder shape. The decoder mirrors the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            input_dim: NUM_OBSERVABLES,
            encoder_widths: vec![10, 10],
            latent_dim: 5,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }
}

impl AutoencoderSpec {
    /// Full width sequence, e.g. `7-10-10-5-10-10-7`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.encoder_widths);
        w.push(self.latent_dim);
        w.extend(self.encoder_widths.iter().rev());
        w.push(self.input_dim);
        w
    }

    pub fn activations(&self) -> Vec<Activation> {
        let layers = self.widths().len() - 1;
        (0..layers)
            .map(|i| if i + 1 == layers { self.output_activation } else { self.hidden_activation })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != NUM_OBSERVABLES {
            return Err(Error::InvalidArgument(format!(
                "autoencoder input must be {NUM_OBSERVABLES} observables, got {}",
                self.input_dim
            )));
        }
        if self.latent_dim == 0 || self.encoder_widths.contains(&0) {
            return Err(Error::InvalidArgument("autoencoder widths must be positive".into()));
        }
        Ok(())
    }

    /// True when `net` has exactly this architecture.
    pub fn matches(&self, net: &Mlp) -> bool {
        net.widths() == self.widths()
            && net
                .layers()
                .iter()
                .map(|l| l.activation())
                .eq(self.activations())
    }
}

pub fn build_autoencoder(spec: &AutoencoderSpec, rng: &mut SeededRng) -> Result<Mlp> {
    spec.validate()?;
    let net = Mlp::init(&spec.widths(), &spec.activations(), rng)?;
    let widths = net.widths();
    let (encoder, decoder) = widths.split_at(widths.len() / 2 + 1);
    assert!(encoder.iter().rev().skip(1).eq(decoder.iter()), "decoder must mirror encoder");
    Ok(net)
}

/// A past experiment paired with its simulation prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub campaign: String,
    pub sim: ObservableVector,
    pub exp: ObservableVector,
}

/// Number of leading layers held fixed during transfer: the encoder and the
/// first decoder layer.
pub const TRANSFER_FROZEN_LAYERS: usize = 4;

/// Base autoencoder plus its transfer-learned copy.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedModel {
    pub base: Mlp,
    pub calibrated: Mlp,
    pub normalizer: Normalizer,
    pub n_experiments_used: usize,
}

impl CalibratedModel {
    /// Data-informed prediction of how an experiment will measure, given its
    /// simulated observables.
    pub fn predict(&self, sim: &ObservableVector) -> Result<ObservableVector> {
        apply(&self.calibrated, &self.normalizer, sim)
    }
}

pub fn predict_experiment(model: &CalibratedModel, sim: &ObservableVector) -> Result<ObservableVector> {
    model.predict(sim)
}

fn apply(net: &Mlp, normalizer: &Normalizer, v: &ObservableVector) -> Result<ObservableVector> {
    let z = normalizer.transform(v)?;
    normalizer.inverse(&net.forward(&z)?)
}

/// Reconstruction through the autoencoder, in physical units.
pub fn reconstruct(model: &Mlp, normalizer: &Normalizer, v: &ObservableVector) -> Result<ObservableVector> {
    apply(model, normalizer, v)
}

fn normalize_all(normalizer: &Normalizer, data: &[ObservableVector]) -> Result<Vec<Vector>> {
    data.iter().map(|v| normalizer.transform(v)).collect()
}

/// Trains every layer to reconstruct standardized simulation observables.
pub fn train_base(
    ae: &Mlp,
    sim_data: &[ObservableVector],
    normalizer: &Normalizer,
    cfg: &TrainConfig,
) -> Result<(Mlp, LossHistory)> {
    let z = normalize_all(normalizer, sim_data)?;
    network::train(ae, &z, &z, &FreezeMask::all_trainable(ae.num_layers()), cfg)
}

/// Retrains the last two decoder layers to map simulated to measured
/// observables. Adam restarts from zero; `base` is never modified.
pub fn transfer_learn(
    base: &Mlp,
    shots: &[ShotRecord],
    normalizer: &Normalizer,
    cfg: &TrainConfig,
) -> Result<CalibratedModel> {
    if shots.is_empty() {
        return Err(Error::InvalidArgument("transfer needs at least one shot".into()));
    }
    if base.num_layers() <= TRANSFER_FROZEN_LAYERS {
        return Err(Error::InvalidArgument(format!(
            "transfer expects more than {TRANSFER_FROZEN_LAYERS} layers, got {}",
            base.num_layers()
        )));
    }
    let inputs = shots
        .iter()
        .map(|s| normalizer.transform(&s.sim))
        .collect::<Result<Vec<_>>>()?;
    let targets = shots
        .iter()
        .map(|s| normalizer.transform(&s.exp))
        .collect::<Result<Vec<_>>>()?;
    let mask = FreezeMask::freeze_first(base.num_layers(), TRANSFER_FROZEN_LAYERS);
    let (calibrated, _) = network::train(base, &inputs, &targets, &mask, cfg)?;
    Ok(CalibratedModel {
        base: base.clone(),
        calibrated,
        normalizer: normalizer.clone(),
        n_experiments_used: shots.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    /// Number of experiments ingested.
    pub n: usize,
    /// Campaign of the n-th (most recently added) shot.
    pub campaign: String,
    /// Holdout mean relative error per observable, as fractions.
    pub errors: [f64; NUM_OBSERVABLES],
    /// Frozen-layer parameters of this step's calibrated net were identical
    /// to the base.
    pub frozen_layers_match_base: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    /// Holdout error of the untransferred base autoencoder (n = 0).
    pub base_errors: [f64; NUM_OBSERVABLES],
    pub rows: Vec<CurveRow>,
}

fn check_curve_inputs(shots: &[ShotRecord], holdout: &[ShotRecord]) -> Result<()> {
    if shots.is_empty() || holdout.is_empty() {
        return Err(Error::InvalidArgument(
            "learning curve needs training shots and a non-empty holdout".into(),
        ));
    }
    if let Some(w) = shots.windows(2).find(|w| w[0].shot_index >= w[1].shot_index) {
        return Err(Error::InvalidArgument(format!(
            "training shots must be strictly chronological: {} then {}",
            w[0].shot_index, w[1].shot_index
        )));
    }
    if let Some(h) = holdout
        .iter()
        .find(|h| shots.iter().any(|s| s.shot_index == h.shot_index))
    {
        return Err(Error::Data(format!(
            "shot {} appears in both training set and holdout",
            h.shot_index
        )));
    }
    Ok(())
}

/// One learning-curve step: transfer from `base` on the first `n` shots and
/// score the holdout.
pub fn curve_step(
    base: &Mlp,
    shots: &[ShotRecord],
    holdout: &[ShotRecord],
    normalizer: &Normalizer,
    cfg: &TrainConfig,
    n: usize,
) -> Result<CurveRow> {
    if n == 0 || n > shots.len() {
        return Err(Error::InvalidArgument(format!(
            "curve step {n} outside 1..={}",
            shots.len()
        )));
    }
    let model = transfer_learn(base, &shots[..n], normalizer, cfg)?;
    let frozen_layers_match_base = model.calibrated.layers()[..TRANSFER_FROZEN_LAYERS]
        == base.layers()[..TRANSFER_FROZEN_LAYERS];
    Ok(CurveRow {
        n,
        campaign: shots[n - 1].campaign.clone(),
        errors: evaluation::evaluate_holdout(&model, holdout)?.calibrated,
        frozen_layers_match_base,
    })
}

/// Holdout error after ingesting `1..=len(shots)` experiments in order, each
/// step restarting from the same base autoencoder.
///
/// Steps are independent; with `parallel` they run on the rayon pool and are
/// assembled by index, so the result is identical either way.
pub fn learning_curve(
    base: &Mlp,
    shots_chronological: &[ShotRecord],
    holdout: &[ShotRecord],
    normalizer: &Normalizer,
    cfg: &TrainConfig,
    parallel: bool,
) -> Result<LearningCurve> {
    check_curve_inputs(shots_chronological, holdout)?;
    let step = |n| curve_step(base, shots_chronological, holdout, normalizer, cfg, n);
    let ns = 1..=shots_chronological.len();
    let rows = if parallel {
        ns.into_par_iter().map(step).collect::<Result<Vec<_>>>()?
    } else {
        ns.map(step).collect::<Result<Vec<_>>>()?
    };

    let untouched = CalibratedModel {
        base: base.clone(),
        calibrated: base.clone(),
        normalizer: normalizer.clone(),
        n_experiments_used: 0,
    };
    let base_errors = evaluation::evaluate_holdout(&untouched, holdout)?.calibrated;
    Ok(LearningCurve { base_errors, rows })
}

/// Splits a shot series into chronological training shots and the `holdout`
/// most recent shots.
pub fn split_holdout(mut shots: Vec<ShotRecord>, holdout: usize) -> Result<(Vec<ShotRecord>, Vec<ShotRecord>)> {
    if holdout == 0 || shots.len() <= holdout {
        return Err(Error::Data(format!(
            "need more than {holdout} shots for a holdout of {holdout}, got {}",
            shots.len()
        )));
    }
    shots.sort_by_key(|s| s.shot_index);
    if let Some(w) = shots.windows(2).find(|w| w[0].shot_index == w[1].shot_index) {
        return Err(Error::Data(format!("duplicate shot_index {}", w[0].shot_index)));
    }
    let test = shots.split_off(shots.len() - holdout);
    Ok((shots, test))
}
