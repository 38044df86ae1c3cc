//! Synthetic stand-in for a simulation database and an experimental shot log.
//!
//! Four design knobs in `[0, 1]` are mapped through a fixed polynomial
//! "simulation". The "experiment" applies a smooth systematic warp to the
//! simulated observables and adds Gaussian measurement noise. Knob scalings:
//! `v = 0.2 + 0.8 x1` (drive), `a = 1 + 3 x2` (adiabat), `s = x3`
//! (asymmetry), `c = 0.5 + 0.5 x4` (capsule scale).

use serde::{Deserialize, Serialize};

use crate::calibration::{ObservableVector, ShotRecord, NUM_OBSERVABLES};
use crate::numcore::SeededRng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignPoint {
    x: [f64; 4],
}

impl DesignPoint {
    pub fn new(x: [f64; 4]) -> Result<Self> {
        if let Some(i) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "design knob x{} = {} outside [0, 1]",
                i + 1,
                x[i]
            )));
        }
        Ok(Self { x })
    }

    pub fn knobs(&self) -> [f64; 4] {
        self.x
    }
}

/// Closed-form simulated observables.
pub fn simulate(d: &DesignPoint) -> ObservableVector {
    let [x1, x2, x3, x4] = d.x;
    let v = 0.2 + 0.8 * x1;
    let a = 1.0 + 3.0 * x2;
    let s = x3;
    let c = 0.5 + 0.5 * x4;
    let log10_yield_dt = 15.0 + 2.5 * v - 0.8 * a - 1.5 * s * s + 1.2 * c;
    let tion_dt = 2.0 + 3.0 * v - 0.5 * a * s;
    ObservableVector {
        gamma_bang_time: 8.0 - 2.0 * v + 0.5 * a,
        gamma_burnwidth: 0.15 + 0.10 * a - 0.05 * v,
        log10_yield_dt,
        tion_dt,
        log10_yield_dd: log10_yield_dt - 2.2 + 0.1 * a,
        tion_dd: 0.9 * tion_dt - 0.1,
        dsr: 0.02 + 0.04 * c - 0.01 * a,
    }
}

/// Systematic simulation-to-experiment discrepancy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    /// Log-yield deficit `yield_offset + yield_asymmetry_slope * x3`.
    pub yield_offset: f64,
    pub yield_asymmetry_slope: f64,
    /// Ion temperatures become `tion_scale * tion + tion_offset`.
    pub tion_scale: f64,
    pub tion_offset: f64,
    pub bang_time_shift: f64,
    pub burnwidth_scale: f64,
    pub dsr_scale: f64,
}

impl Default for Warp {
    fn default() -> Self {
        Self {
            yield_offset: 0.5,
            yield_asymmetry_slope: 1.5,
            tion_scale: 0.85,
            tion_offset: 0.3,
            bang_time_shift: 0.1,
            burnwidth_scale: 1.3,
            dsr_scale: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Measurement noise standard deviation per observable, canonical order.
    pub noise_sd: [f64; NUM_OBSERVABLES],
    pub warp: Warp,
    /// Fraction of a shot's x1 set by its position in the series; the rest
    /// is uniform. 0 disables drift.
    pub drift: f64,
}

impl GeneratorConfig {
    pub const DEFAULT_NOISE_SD: [f64; NUM_OBSERVABLES] = [0.05, 0.003, 0.02, 0.03, 0.02, 0.03, 0.0005];

    pub fn noiseless() -> Self {
        Self {
            noise_sd: [0.0; NUM_OBSERVABLES],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.noise_sd.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sd[{i}] must be finite and >= 0, got {}",
                self.noise_sd[i]
            )));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::InvalidArgument(format!("drift must be in [0, 1], got {}", self.drift)));
        }
        Ok(())
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            noise_sd: Self::DEFAULT_NOISE_SD,
            warp: Warp::default(),
            drift: 0.5,
        }
    }
}

/// Warped, noisy "measurement" of a design. Always draws 7 normals from
/// `rng`, one per observable in canonical order. The measured DSR is clipped
/// to `[0, 1]`.
pub fn experiment_truth(d: &DesignPoint, cfg: &GeneratorConfig, rng: &mut SeededRng) -> Result<ObservableVector> {
    cfg.validate()?;
    let w = &cfg.warp;
    let sim = simulate(d);
    let deficit = w.yield_offset + w.yield_asymmetry_slope * d.x[2];
    let clean = ObservableVector {
        gamma_bang_time: sim.gamma_bang_time + w.bang_time_shift,
        gamma_burnwidth: sim.gamma_burnwidth * w.burnwidth_scale,
        log10_yield_dt: sim.log10_yield_dt - deficit,
        tion_dt: w.tion_scale * sim.tion_dt + w.tion_offset,
        log10_yield_dd: sim.log10_yield_dd - deficit,
        tion_dd: w.tion_scale * sim.tion_dd + w.tion_offset,
        dsr: sim.dsr * w.dsr_scale,
    };
    let noise = rng.normal(0.0, 1.0, NUM_OBSERVABLES)?;
    let mut out = clean.to_array();
    for ((o, z), sd) in out.iter_mut().zip(noise).zip(cfg.noise_sd) {
        *o += sd * z;
    }
    out[6] = out[6].clamp(0.0, 1.0);
    Ok(ObservableVector::from_array(out))
}

fn sample_design(rng: &mut SeededRng) -> Result<DesignPoint> {
    let u = rng.uniform(0.0, 1.0, 4)?;
    DesignPoint::new([u[0], u[1], u[2], u[3]])
}

/// `n` simulations at designs drawn uniformly from the unit hypercube.
pub fn generate_sim_database(n: usize, rng: &mut SeededRng) -> Result<Vec<ObservableVector>> {
    if n == 0 {
        return Err(Error::InvalidArgument("simulation database size must be >= 1".into()));
    }
    (0..n).map(|_| sample_design(rng).map(|d| simulate(&d))).collect()
}

pub const CAMPAIGNS: [&str; 4] = ["low-drive", "mid-low-drive", "mid-high-drive", "high-drive"];

fn campaign_for(x1: f64) -> &'static str {
    CAMPAIGNS[((x1 * 4.0) as usize).min(3)]
}

/// Chronological shot series with campaign drift toward higher drive.
///
/// Shot `i` of `n` takes `x1 = drift * i/(n-1) + (1 - drift) * u` with `u`
/// uniform; the other knobs are uniform. Campaign labels follow the x1
/// quartile.
pub fn generate_shot_series(n: usize, cfg: &GeneratorConfig, rng: &mut SeededRng) -> Result<Vec<ShotRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("shot series size must be >= 1".into()));
    }
    cfg.validate()?;
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let u = sample_design(rng)?.knobs();
            let x1 = (cfg.drift * t + (1.0 - cfg.drift) * u[0]).clamp(0.0, 1.0);
            let d = DesignPoint::new([x1, u[1], u[2], u[3]])?;
            Ok(ShotRecord {
                shot_index: i as u64,
                campaign: campaign_for(x1).to_string(),
                sim: simulate(&d),
                exp: experiment_truth(&d, cfg, rng)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: [f64; 4]) -> DesignPoint {
        DesignPoint::new(x).unwrap()
    }

    #[test]
    fn simulate_origin() {
        let o = simulate(&d([0.0; 4]));
        assert!((o.gamma_bang_time - 8.1).abs() < 1e-12);
        assert!((o.dsr - 0.03).abs() < 1e-12);
        assert_eq!(o, simulate(&d([0.0; 4])));
    }

    #[test]
    fn design_bounds() {
        assert!(DesignPoint::new([0.0, 1.0, 0.5, 0.2]).is_ok());
        assert!(DesignPoint::new([1.1, 0.0, 0.0, 0.0]).is_err());
        assert!(DesignPoint::new([0.0, 0.0, -0.1, 0.0]).is_err());
        assert!(DesignPoint::new([0.0, 0.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn noiseless_experiment_is_the_warp() {
        let cfg = GeneratorConfig::noiseless();
        let mut rng = SeededRng::new(1);
        let e = experiment_truth(&d([0.0; 4]), &cfg, &mut rng).unwrap();
        assert!((e.gamma_bang_time - 8.2).abs() < 1e-12);

        for x in [[0.3, 0.7, 0.0, 0.1], [0.9, 0.2, 0.6, 0.8], [1.0, 1.0, 1.0, 1.0]] {
            let p = d(x);
            let s = simulate(&p);
            let e = experiment_truth(&p, &cfg, &mut rng).unwrap();
            let deficit = 0.5 + 1.5 * x[2];
            let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            close(e.gamma_bang_time, s.gamma_bang_time + 0.1);
            close(e.gamma_burnwidth, s.gamma_burnwidth * 1.3);
            close(e.log10_yield_dt, s.log10_yield_dt - deficit);
            close(e.tion_dt, 0.85 * s.tion_dt + 0.3);
            close(e.log10_yield_dd, s.log10_yield_dd - deficit);
            close(e.tion_dd, 0.85 * s.tion_dd + 0.3);
            close(e.dsr, 0.9 * s.dsr);
            if x[2] == 0.0 {
                close(e.log10_yield_dt, s.log10_yield_dt - 0.5);
            }
        }
    }

    #[test]
    fn noisy_experiment_is_seeded() {
        let cfg = GeneratorConfig::default();
        let p = d([0.4, 0.4, 0.4, 0.4]);
        let a = experiment_truth(&p, &cfg, &mut SeededRng::new(3)).unwrap();
        let b = experiment_truth(&p, &cfg, &mut SeededRng::new(3)).unwrap();
        assert_eq!(a, b);
        let clean = experiment_truth(&p, &GeneratorConfig::noiseless(), &mut SeededRng::new(3)).unwrap();
        assert_ne!(a, clean);
        let bad = GeneratorConfig {
            noise_sd: [-1.0; 7],
            ..GeneratorConfig::default()
        };
        assert!(experiment_truth(&p, &bad, &mut SeededRng::new(3)).is_err());
    }

    #[test]
    fn sim_database_shape_and_ranges() {
        let db = generate_sim_database(20_000, &mut SeededRng::new(7)).unwrap();
        assert_eq!(db.len(), 20_000);
        assert_eq!(db[0].to_array().len(), 7);
        // dsr = 0.02 + 0.04c - 0.01a over c in [0.5, 1], a in [1, 4] spans [0, 0.05].
        for v in &db {
            assert!((0.0..=0.05).contains(&v.dsr), "{}", v.dsr);
            v.validate().unwrap();
        }
        assert_eq!(db, generate_sim_database(20_000, &mut SeededRng::new(7)).unwrap());
        assert!(generate_sim_database(0, &mut SeededRng::new(7)).is_err());
    }

    #[test]
    fn corners_are_physical() {
        for mask in 0u32..16 {
            let x = [0, 1, 2, 3].map(|k| f64::from((mask >> k) & 1));
            let p = d(x);
            let s = simulate(&p);
            s.validate().unwrap();
            experiment_truth(&p, &GeneratorConfig::default(), &mut SeededRng::new(u64::from(mask)))
                .unwrap()
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn dt_yield_increases_with_drive() {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=20 {
            let y = simulate(&d([k as f64 / 20.0, 0.3, 0.6, 0.5])).log10_yield_dt;
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn shot_series() {
        let cfg = GeneratorConfig::default();
        let shots = generate_shot_series(47, &cfg, &mut SeededRng::new(9)).unwrap();
        assert_eq!(shots.len(), 47);
        assert!(shots.iter().enumerate().all(|(i, s)| s.shot_index == i as u64));
        assert_eq!(shots, generate_shot_series(47, &cfg, &mut SeededRng::new(9)).unwrap());
        assert!(shots.iter().all(|s| CAMPAIGNS.contains(&s.campaign.as_str())));
        assert!(generate_shot_series(0, &cfg, &mut SeededRng::new(9)).is_err());

        // drift: late shots sit at higher drive on average
        let mean_bt = |s: &[ShotRecord]| s.iter().map(|r| r.sim.gamma_bang_time).sum::<f64>() / s.len() as f64;
        let early = mean_bt(&shots[..15]);
        let late = mean_bt(&shots[32..]);
        assert!(late < early, "bang time should fall with drive: {early} -> {late}");
    }

    #[test]
    fn noiseless_series_reproduces_sim() {
        let shots = generate_shot_series(10, &GeneratorConfig::noiseless(), &mut SeededRng::new(2)).unwrap();
        for s in &shots {
            assert!((s.exp.gamma_bang_time - s.sim.gamma_bang_time - 0.1).abs() < 1e-12);
            assert!((s.exp.gamma_burnwidth - 1.3 * s.sim.gamma_burnwidth).abs() < 1e-12);
            assert!((s.exp.tion_dd - (0.85 * s.sim.tion_dd + 0.3)).abs() < 1e-12);
        }
    }
}
