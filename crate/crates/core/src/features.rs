//! Complex IQ windows to the 4-channel real representation fed to the model:
//! real, imaginary, magnitude, phase.

use std::f32::consts::PI;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WINDOW_LEN: usize = 1024;
pub const CHANNELS: usize = 4;

/// 1024 complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqWindow {
    samples: Vec<Complex32>,
}

impl IqWindow {
    pub fn new(samples: Vec<Complex32>) -> Result<Self> {
        if samples.len() != WINDOW_LEN {
            return Err(Error::dim("IQ window length", WINDOW_LEN, samples.len()));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !s.re.is_finite() || !s.im.is_finite())
        {
            return Err(Error::Input(format!("non-finite IQ sample at index {i}")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }
}

/// `[4, 1024]` row-major: real, imaginary, magnitude, phase in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelizedWindow {
    data: Vec<f32>,
}

impl ChannelizedWindow {
    pub fn from_data(data: Vec<f32>) -> Result<Self> {
        if data.len() != CHANNELS * WINDOW_LEN {
            return Err(Error::dim(
                "channelized window elements",
                CHANNELS * WINDOW_LEN,
                data.len(),
            ));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * WINDOW_LEN..(c + 1) * WINDOW_LEN]
    }

    pub fn real(&self) -> &[f32] {
        self.channel(0)
    }

    pub fn imag(&self) -> &[f32] {
        self.channel(1)
    }

    pub fn magnitude(&self) -> &[f32] {
        self.channel(2)
    }

    pub fn phase(&self) -> &[f32] {
        self.channel(3)
    }
}

/// Phase in (-pi, pi]; the zero sample has phase 0.
pub fn phase_of(s: Complex32) -> f32 {
    if s.re == 0.0 && s.im == 0.0 {
        return 0.0;
    }
    let p = s.im.atan2(s.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub fn iq_to_channels(window: &IqWindow) -> ChannelizedWindow {
    channels_from_samples(window.samples())
}

/// Same as [`iq_to_channels`] on an unchecked slice of exactly 1024 samples.
pub(crate) fn channels_from_samples(samples: &[Complex32]) -> ChannelizedWindow {
    debug_assert_eq!(samples.len(), WINDOW_LEN);
    let mut data = vec![0.0f32; CHANNELS * WINDOW_LEN];
    let (re, rest) = data.split_at_mut(WINDOW_LEN);
    let (im, rest) = rest.split_at_mut(WINDOW_LEN);
    let (mag, ph) = rest.split_at_mut(WINDOW_LEN);
    for (t, s) in samples.iter().enumerate() {
        re[t] = s.re;
        im[t] = s.im;
        mag[t] = s.re.hypot(s.im);
        ph[t] = phase_of(*s);
    }
    ChannelizedWindow { data }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizePolicy {
    #[default]
    None,
    UnitRms,
}

impl std::str::FromStr for NormalizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "unit_rms" => Ok(Self::UnitRms),
            other => Err(Error::Config(format!(
                "unknown normalization {other:?}, expected none or unit_rms"
            ))),
        }
    }
}

/// Rescales the IQ-derived channels so the complex RMS is 1. Phase is scale-invariant and kept.
pub fn normalize_window(
    window: &ChannelizedWindow,
    policy: NormalizePolicy,
) -> Result<ChannelizedWindow> {
    match policy {
        NormalizePolicy::None => Ok(window.clone()),
        NormalizePolicy::UnitRms => {
            let power = window
                .real()
                .iter()
                .zip(window.imag())
                .map(|(&i, &q)| i as f64 * i as f64 + q as f64 * q as f64)
                .sum::<f64>()
                / WINDOW_LEN as f64;
            if !(power > 0.0) {
                return Err(Error::DegenerateInput(
                    "zero-power window cannot be RMS-normalized".into(),
                ));
            }
            let gain = (1.0 / power.sqrt()) as f32;
            let mut data = window.data.clone();
            for v in &mut data[..3 * WINDOW_LEN] {
                *v *= gain;
            }
            Ok(ChannelizedWindow { data })
        }
    }
}
