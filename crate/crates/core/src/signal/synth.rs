//! Deterministic synthetic sessions.
//!
//! For left-hand imagery the elevated-side electrode (F7 by default) of each
//! band has mean power `mu * (1 + delta * w_band * s(t))` and the opposite
//! side `mu * (1 - delta * w_band * s(t))`; right-hand imagery mirrors the
//! sides. Each value is multiplied by log-normal noise `exp(sigma*z - sigma^2/2)`
//! so the mean is preserved.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    ChannelId, ClassLabel, Electrode, SampleFrame, SignalError, Trial, FRAME_PERIOD,
    STANDARD_TRIAL_FRAMES,
};

/// Discriminability envelope `s(t)`, with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `cos^2(pi * (t - peak) / width)` within half a width of the peak, 0
    /// outside.
    RaisedCosine { peak: f64, width: f64 },
    Constant { level: f64 },
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Envelope::RaisedCosine { peak, width } => {
                let u = (t - peak) / width;
                if u.abs() > 0.5 {
                    0.0
                } else {
                    (PI * u).cos().powi(2)
                }
            }
            Envelope::Constant { level } => level,
        }
    }
}

impl Default for Envelope {
    /// Peaks at 4.5 s, the centre of the "3-7" ordinal-second period
    /// (t in [2, 7)).
    fn default() -> Self {
        Envelope::RaisedCosine {
            peak: 4.5,
            width: 10.0,
        }
    }
}

/// Group A records left-hand trials first, group B right-hand first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PresentationOrder {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub subject_id: String,
    pub trials_per_class: usize,
    pub frames_per_trial: usize,
    /// `mu`
    pub base_power: f64,
    /// `delta`, in `[0, 1]`
    pub separation: f64,
    /// `sigma` of the log-normal noise
    pub noise: f64,
    pub envelope: Envelope,
    /// Per-band multiplier on `delta` (gamma, beta, alpha), each in `[0, 1]`.
    pub band_weights: [f64; 3],
    /// Electrode whose power rises during left-hand imagery.
    pub left_elevates: Electrode,
    pub order: PresentationOrder,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            subject_id: "synthetic".into(),
            trials_per_class: 20,
            frames_per_trial: STANDARD_TRIAL_FRAMES,
            base_power: 1.0,
            separation: 0.5,
            noise: 0.1,
            envelope: Envelope::default(),
            band_weights: [1.0; 3],
            left_elevates: Electrode::F7,
            order: PresentationOrder::A,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: String| Err(SignalError::InvalidConfig(m));
        if self.trials_per_class == 0 {
            return bad("trials_per_class must be positive".into());
        }
        if self.frames_per_trial == 0 {
            return bad("frames_per_trial must be positive".into());
        }
        if !(self.base_power > 0.0 && self.base_power.is_finite()) {
            return bad(format!("base_power must be positive, got {}", self.base_power));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return bad(format!("separation must be in [0,1], got {}", self.separation));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if self.band_weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return bad("band weights must be in [0,1]".into());
        }
        Ok(())
    }
}

/// Frame-by-frame generator shared by [`generate_session`] and the live
/// synthetic stream source.
#[derive(Debug, Clone)]
pub struct FrameSynth {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
}

impl FrameSynth {
    pub fn new(cfg: SynthConfig) -> Result<Self, SignalError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(FrameSynth { cfg, rng })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Mean band power of `ch` for `label` at envelope level `s`.
    pub fn mean_power(&self, ch: ChannelId, label: ClassLabel, s: f64) -> f64 {
        let elevated = match label {
            ClassLabel::Left => self.cfg.left_elevates,
            ClassLabel::Right => self.cfg.left_elevates.opposite(),
        };
        let sign = if ch.electrode == elevated { 1.0 } else { -1.0 };
        let d = self.cfg.separation * self.cfg.band_weights[ch.band.index()];
        self.cfg.base_power * (1.0 + sign * d * s)
    }

    /// Draws one frame at trial time `t` with envelope level `s`.
    pub fn frame_at(&mut self, t: f64, s: f64, label: ClassLabel) -> SampleFrame {
        let sigma = self.cfg.noise;
        let mut values = [0.0; ChannelId::COUNT];
        for ch in ChannelId::ALL {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            values[ch.index()] =
                self.mean_power(ch, label, s) * (sigma * z - 0.5 * sigma * sigma).exp();
        }
        SampleFrame { t, values }
    }

    pub fn trial(&mut self, trial_index: u32, label: ClassLabel) -> Trial {
        let frames = (0..self.cfg.frames_per_trial)
            .map(|k| {
                let t = round_decisecond(k as f64 * FRAME_PERIOD);
                let s = self.cfg.envelope.at(t);
                self.frame_at(t, s, label)
            })
            .collect();
        Trial::new(self.cfg.subject_id.clone(), trial_index, label, frames)
            .expect("generated frames are evenly spaced")
    }
}

fn round_decisecond(t: f64) -> f64 {
    (t * 10.0).round() / 10.0
}

/// `2 * trials_per_class` trials, one class block after the other in the
/// configured presentation order. Pure function of `cfg`.
pub fn generate_session(cfg: &SynthConfig) -> Result<Vec<Trial>, SignalError> {
    let mut synth = FrameSynth::new(cfg.clone())?;
    let (first, second) = match cfg.order {
        PresentationOrder::A => (ClassLabel::Left, ClassLabel::Right),
        PresentationOrder::B => (ClassLabel::Right, ClassLabel::Left),
    };
    let n = cfg.trials_per_class;
    Ok((0..2 * n)
        .map(|i| synth.trial(i as u32, if i < n { first } else { second }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Band;

    fn gamma(e: Electrode) -> ChannelId {
        ChannelId::new(Band::Gamma, e)
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig {
            seed: 1,
            ..Default::default()
        };
        assert_eq!(generate_session(&cfg).unwrap(), generate_session(&cfg).unwrap());
        let other = SynthConfig { seed: 2, ..cfg.clone() };
        assert_ne!(generate_session(&cfg).unwrap(), generate_session(&other).unwrap());
    }

    #[test]
    fn session_shape() {
        let trials = generate_session(&SynthConfig::default()).unwrap();
        assert_eq!(trials.len(), 40);
        assert!(trials.iter().all(|t| t.is_standard()));
        assert_eq!(trials[0].label, ClassLabel::Left);
        assert_eq!(trials[39].label, ClassLabel::Right);
        let b = generate_session(&SynthConfig {
            order: PresentationOrder::B,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(b[0].label, ClassLabel::Right);
    }

    #[test]
    fn zero_separation_zero_noise_is_constant() {
        let cfg = SynthConfig {
            separation: 0.0,
            noise: 0.0,
            base_power: 2.5,
            ..Default::default()
        };
        for trial in generate_session(&cfg).unwrap() {
            for f in trial.frames() {
                assert!(f.values.iter().all(|&v| v == 2.5));
            }
        }
    }

    #[test]
    fn left_elevates_f7_at_mid_trial() {
        let cfg = SynthConfig {
            seed: 3,
            separation: 0.5,
            noise: 0.1,
            ..Default::default()
        };
        let trials = generate_session(&cfg).unwrap();
        let (mut f7, mut f8, mut n) = (0.0, 0.0, 0.0);
        for t in trials.iter().filter(|t| t.label == ClassLabel::Left) {
            for f in &t.frames()[30..70] {
                f7 += f.get(gamma(Electrode::F7));
                f8 += f.get(gamma(Electrode::F8));
                n += 1.0;
            }
        }
        assert!(f7 / n > f8 / n, "{} vs {}", f7 / n, f8 / n);
    }

    #[test]
    fn noise_free_sign_separation() {
        let cfg = SynthConfig {
            separation: 0.3,
            noise: 0.0,
            ..Default::default()
        };
        for trial in generate_session(&cfg).unwrap() {
            for f in trial.frames() {
                // s(t) below ~1e-12 rounds away in 1 +/- delta*s
                if cfg.envelope.at(f.t) > 1e-12 {
                    let (a, b) = (f.get(gamma(Electrode::F7)), f.get(gamma(Electrode::F8)));
                    match trial.label {
                        ClassLabel::Left => assert!(a > b),
                        ClassLabel::Right => assert!(a < b),
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig {
            trials_per_class: 0,
            ..Default::default()
        };
        assert!(matches!(generate_session(&cfg), Err(SignalError::InvalidConfig(_))));
    }

    #[test]
    fn envelope_peak_and_support() {
        let e = Envelope::RaisedCosine { peak: 5.0, width: 10.0 };
        assert!((e.at(5.0) - 1.0).abs() < 1e-15);
        assert!((e.at(2.5) - (std::f64::consts::PI * 0.25).sin().powi(2)).abs() < 1e-12);
        assert_eq!(e.at(11.0), 0.0);
        assert_eq!(Envelope::default().at(4.5), 1.0);
    }
}
