//! Synthetic labeled corpora: OFDM-like protocol waveforms stamped with
//! per-transmitter hardware impairments, plus AWGN.
//!
//! The profiles and fingerprints are stand-ins tuned for separability, not
//! emulations of any standard or of real radios.

mod corpus;
mod impair;
mod waveform;

use serde::{Deserialize, Serialize};

use crate::datasets::{Protocol, Transmitter};
use crate::error::{Error, Result};
use crate::features::WINDOW_LEN;

pub use corpus::{generate_corpus, CorpusEntry, CorpusManifest, CORPUS_MANIFEST};
pub use impair::{apply_awgn, apply_transmitter_fingerprint};
pub use waveform::{generate_waveform, generate_waveform_with_activity, occupied_bins};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolProfile {
    pub name: String,
    /// Label written into sidecars of recordings using this profile.
    pub protocol: Protocol,
    pub fft_size: usize,
    pub cyclic_prefix_len: usize,
    pub occupied_subcarriers: usize,
    pub symbol_constellation: Constellation,
    /// Fraction of time transmitting, in (0, 1].
    pub duty_cycle: f64,
    /// OFDM symbols per burst; idle gaps fall between bursts.
    pub burst_symbols: usize,
    pub sample_rate_hz: f64,
}

impl ProtocolProfile {
    pub fn wifi_like() -> Self {
        Self {
            name: "wifi-like".into(),
            protocol: Protocol::Wifi,
            fft_size: 64,
            cyclic_prefix_len: 16,
            occupied_subcarriers: 52,
            symbol_constellation: Constellation::Qpsk,
            duty_cycle: 0.6,
            // 640-sample bursts keep every gap shorter than one window
            burst_symbols: 8,
            sample_rate_hz: 5e6,
        }
    }

    pub fn lte_like() -> Self {
        Self {
            name: "lte-like".into(),
            protocol: Protocol::Lte,
            fft_size: 128,
            cyclic_prefix_len: 9,
            occupied_subcarriers: 72,
            symbol_constellation: Constellation::Qpsk,
            duty_cycle: 0.9,
            burst_symbols: 14,
            sample_rate_hz: 7.68e6,
        }
    }

    pub fn nr_like() -> Self {
        Self {
            name: "nr-like".into(),
            protocol: Protocol::Nr,
            occupied_subcarriers: 96,
            ..Self::lte_like()
        }
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::wifi_like(), Self::lte_like(), Self::nr_like()]
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cyclic_prefix_len
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("profile {:?}: {msg}", self.name)));
        if self.fft_size == 0 || self.burst_symbols == 0 {
            return bad("fft size and burst length must be positive".into());
        }
        if self.occupied_subcarriers == 0 || self.occupied_subcarriers >= self.fft_size {
            return bad(format!(
                "{} occupied subcarriers must be in 1..{}",
                self.occupied_subcarriers, self.fft_size
            ));
        }
        if self.cyclic_prefix_len >= self.fft_size {
            return bad(format!(
                "cyclic prefix {} must be shorter than the FFT",
                self.cyclic_prefix_len
            ));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return bad(format!("duty cycle {} outside (0, 1]", self.duty_cycle));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample rate {}", self.sample_rate_hz));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterFingerprint {
    pub transmitter: Transmitter,
    pub cfo_hz: f64,
    pub iq_gain_imbalance_db: f64,
    pub iq_phase_imbalance_rad: f64,
    /// (I, Q)
    pub dc_offset: [f64; 2],
    pub cubic_nonlinearity_coeff: f64,
    /// Std of the per-sample phase random-walk increment.
    pub phase_noise_std_rad: f64,
    pub tx_power_db: f64,
}

impl TransmitterFingerprint {
    /// No impairment at all.
    pub fn identity(transmitter: Transmitter) -> Self {
        Self {
            transmitter,
            cfo_hz: 0.0,
            iq_gain_imbalance_db: 0.0,
            iq_phase_imbalance_rad: 0.0,
            dc_offset: [0.0, 0.0],
            cubic_nonlinearity_coeff: 0.0,
            phase_noise_std_rad: 0.0,
            tx_power_db: 0.0,
        }
    }

    /// One fingerprint per transmitter, in `Transmitter::ALL` order.
    pub fn defaults() -> Vec<Self> {
        const CFO: [f64; 4] = [-800.0, -200.0, 300.0, 900.0];
        const GAIN_DB: [f64; 4] = [0.2, 0.5, 0.8, 1.1];
        const CUBIC: [f64; 4] = [0.01, 0.03, 0.05, 0.07];
        const PHASE_RAD: [f64; 4] = [0.05, -0.1, 0.15, -0.2];
        const DC: [[f64; 2]; 4] = [[0.1, 0.0], [0.0, 0.32], [-0.44, 0.0], [0.0, -0.5]];
        const PHASE_NOISE: [f64; 4] = [2e-5, 3e-5, 4e-5, 5e-5];
        const POWER_DB: [f64; 4] = [-6.0, -4.0, -2.0, 0.0];
        Transmitter::ALL
            .iter()
            .enumerate()
            .map(|(i, &transmitter)| Self {
                transmitter,
                cfo_hz: CFO[i],
                iq_gain_imbalance_db: GAIN_DB[i],
                iq_phase_imbalance_rad: PHASE_RAD[i],
                dc_offset: DC[i],
                cubic_nonlinearity_coeff: CUBIC[i],
                phase_noise_std_rad: PHASE_NOISE[i],
                tx_power_db: POWER_DB[i],
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.cfo_hz,
            self.iq_gain_imbalance_db,
            self.iq_phase_imbalance_rad,
            self.dc_offset[0],
            self.dc_offset[1],
            self.cubic_nonlinearity_coeff,
            self.phase_noise_std_rad,
            self.tx_power_db,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "fingerprint for {} has non-finite fields",
                self.transmitter
            )));
        }
        if self.phase_noise_std_rad < 0.0 {
            return Err(Error::Config(format!(
                "fingerprint for {}: negative phase noise std {}",
                self.transmitter, self.phase_noise_std_rad
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    pub profile: ProtocolProfile,
    pub fingerprint: TransmitterFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub pairs: Vec<ScenarioPair>,
    pub samples_per_recording: usize,
    pub recordings_per_pair: usize,
    /// `None` means no noise is added.
    pub snr_db: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_center_frequency")]
    pub center_frequency_hz: f64,
}

fn default_center_frequency() -> f64 {
    2.685e9
}

impl Default for Scenario {
    /// Every default profile with every default fingerprint, five recordings each.
    fn default() -> Self {
        let pairs = ProtocolProfile::defaults()
            .into_iter()
            .flat_map(|profile| {
                TransmitterFingerprint::defaults()
                    .into_iter()
                    .map(move |fingerprint| ScenarioPair {
                        profile: profile.clone(),
                        fingerprint,
                    })
            })
            .collect();
        Self {
            pairs,
            samples_per_recording: 100_000,
            recordings_per_pair: 5,
            snr_db: Some(20.0),
            seed: 0,
            center_frequency_hz: default_center_frequency(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config(
                "scenario has no (profile, fingerprint) pairs".into(),
            ));
        }
        if self.samples_per_recording < WINDOW_LEN {
            return Err(Error::Config(format!(
                "{} samples per recording is below one {WINDOW_LEN}-sample window",
                self.samples_per_recording
            )));
        }
        if self.recordings_per_pair == 0 {
            return Err(Error::Config("recordings per pair must be positive".into()));
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return Err(Error::Config(
                "snr_db must be finite; omit it for a noiseless corpus".into(),
            ));
        }
        for pair in &self.pairs {
            pair.profile.validate()?;
            pair.fingerprint.validate()?;
            if self.samples_per_recording < pair.profile.symbol_len() {
                return Err(Error::Config(format!(
                    "{} samples cannot hold one {} symbol",
                    self.samples_per_recording, pair.profile.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_covers_every_pair() {
        let s = Scenario::default();
        assert_eq!(s.pairs.len(), 12);
        s.validate().unwrap();
        for p in ProtocolProfile::defaults() {
            assert!(p.occupied_subcarriers < p.fft_size && p.cyclic_prefix_len < p.fft_size);
        }
        let cfo: Vec<f64> = TransmitterFingerprint::defaults()
            .iter()
            .map(|f| f.cfo_hz)
            .collect();
        assert_eq!(cfo, [-800.0, -200.0, 300.0, 900.0]);
    }

    #[test]
    fn scenario_json_round_trips() {
        let mut s = Scenario::default();
        s.snr_db = None;
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = Scenario::default();
        s.samples_per_recording = 1000;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = Scenario::default();
        s.pairs.clear();
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = Scenario::default();
        s.pairs[0].profile.occupied_subcarriers = 64;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.pairs[0].fingerprint.phase_noise_std_rad = -1.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.pairs[0].fingerprint.cfo_hz = f64::NAN;
        assert!(s.validate().is_err());
    }
}
