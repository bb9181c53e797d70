use num_complex::{Complex, Complex32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use super::ProtocolProfile;
use crate::error::{Error, Result};

/// FFT bins carrying payload: `1..=ceil(m/2)` above DC and the `floor(m/2)`
/// bins just below it (as indices `fft - floor(m/2)..fft`). DC stays empty.
pub fn occupied_bins(profile: &ProtocolProfile) -> Vec<usize> {
    let m = profile.occupied_subcarriers;
    let n = profile.fft_size;
    let upper = m.div_ceil(2);
    (1..=upper).chain(n - m / 2..n).collect()
}

/// Same as [`generate_waveform_with_activity`] without the activity mask.
pub fn generate_waveform(profile: &ProtocolProfile, n: usize, seed: u64) -> Result<Vec<Complex32>> {
    Ok(generate_waveform_with_activity(profile, n, seed)?.0)
}

/// `n` samples of bursty OFDM with a random QPSK payload, plus a mask marking
/// the transmitting samples. Power over the transmitting samples is 1.
///
/// Bursts of `burst_symbols` symbols alternate with silent gaps sized so the
/// active fraction is `duty_cycle`; the stream starts at a seeded random
/// point of that frame.
pub fn generate_waveform_with_activity(
    profile: &ProtocolProfile,
    n: usize,
    seed: u64,
) -> Result<(Vec<Complex32>, Vec<bool>)> {
    profile.validate()?;
    let sym_len = profile.symbol_len();
    if n < sym_len {
        return Err(Error::Input(format!(
            "{n} samples cannot hold one {}-sample {} symbol",
            sym_len, profile.name
        )));
    }
    let burst = profile.burst_symbols * sym_len;
    let gap = (burst as f64 * (1.0 - profile.duty_cycle) / profile.duty_cycle).round() as usize;
    let frame = burst + gap;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..frame);
    let total = start + n;

    let fft = FftPlanner::<f64>::new().plan_fft_inverse(profile.fft_size);
    let bins = occupied_bins(profile);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut symbol = vec![Complex::new(0.0, 0.0); profile.fft_size];
    let mut out: Vec<Complex<f64>> = Vec::with_capacity(total + sym_len);
    let mut active = Vec::with_capacity(total + sym_len);
    while out.len() < total {
        for _ in 0..profile.burst_symbols {
            symbol.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for &b in &bins {
                let bits: u8 = rng.gen_range(0..4);
                let re = if bits & 1 == 0 { h } else { -h };
                let im = if bits & 2 == 0 { h } else { -h };
                symbol[b] = Complex::new(re, im);
            }
            fft.process(&mut symbol);
            out.extend_from_slice(&symbol[profile.fft_size - profile.cyclic_prefix_len..]);
            out.extend_from_slice(&symbol);
            active.resize(out.len(), true);
        }
        out.resize(out.len() + gap, Complex::new(0.0, 0.0));
        active.resize(out.len(), false);
    }
    let out = &out[start..total];
    let active = active[start..total].to_vec();

    let (sum, count) = out
        .iter()
        .zip(&active)
        .filter(|(_, a)| **a)
        .fold((0.0, 0usize), |(s, c), (x, _)| (s + x.norm_sqr(), c + 1));
    if count == 0 {
        // a stretch shorter than one gap; nothing transmits
        return Ok((vec![Complex32::new(0.0, 0.0); n], active));
    }
    let scale = (count as f64 / sum).sqrt();
    let samples = out
        .iter()
        .map(|x| Complex32::new((x.re * scale) as f32, (x.im * scale) as f32))
        .collect();
    Ok((samples, active))
}
