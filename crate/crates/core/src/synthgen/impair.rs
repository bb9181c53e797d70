use std::f64::consts::PI;

use num_complex::{Complex, Complex32};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::TransmitterFingerprint;
use crate::error::{Error, Result};

/// Stamps `fp` onto `samples`. In order: IQ imbalance, dc offset, cubic
/// nonlinearity `x + c x |x|^2`, phase-noise random walk (seeded by `seed`),
/// CFO rotation `exp(j 2 pi cfo t / fs)`, power scaling.
///
/// The IQ model keeps I and distorts Q: `Q' = g (Q cos(phi) - I sin(phi))`.
/// Stages whose parameters are neutral are skipped, so the identity
/// fingerprint returns the input bit for bit.
pub fn apply_transmitter_fingerprint(
    samples: &[Complex32],
    fp: &TransmitterFingerprint,
    sample_rate_hz: f64,
    seed: u64,
) -> Vec<Complex32> {
    let mut x: Vec<Complex<f64>> = samples
        .iter()
        .map(|s| Complex::new(s.re as f64, s.im as f64))
        .collect();

    if fp.iq_gain_imbalance_db != 0.0 || fp.iq_phase_imbalance_rad != 0.0 {
        let g = 10f64.powf(fp.iq_gain_imbalance_db / 20.0);
        let (sin, cos) = fp.iq_phase_imbalance_rad.sin_cos();
        for v in &mut x {
            v.im = g * (v.im * cos - v.re * sin);
        }
    }
    if fp.dc_offset != [0.0, 0.0] {
        let dc = Complex::new(fp.dc_offset[0], fp.dc_offset[1]);
        x.iter_mut().for_each(|v| *v += dc);
    }
    if fp.cubic_nonlinearity_coeff != 0.0 {
        let c = fp.cubic_nonlinearity_coeff;
        x.iter_mut().for_each(|v| *v += *v * (c * v.norm_sqr()));
    }
    if fp.phase_noise_std_rad > 0.0 {
        let step = Normal::new(0.0, fp.phase_noise_std_rad).expect("validated std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = 0.0;
        for v in &mut x {
            *v *= Complex::from_polar(1.0, theta);
            theta += step.sample(&mut rng);
        }
    }
    if fp.cfo_hz != 0.0 {
        let w = 2.0 * PI * fp.cfo_hz / sample_rate_hz;
        for (t, v) in x.iter_mut().enumerate() {
            *v *= Complex::from_polar(1.0, w * t as f64);
        }
    }
    if fp.tx_power_db != 0.0 {
        let a = 10f64.powf(fp.tx_power_db / 20.0);
        x.iter_mut().for_each(|v| *v *= a);
    }
    x.iter()
        .map(|v| Complex32::new(v.re as f32, v.im as f32))
        .collect()
}

/// Adds circular complex Gaussian noise with total variance
/// `P / 10^(snr_db / 10)`, `P` the mean power of the whole input.
/// `snr_db = +inf` returns the input unchanged.
pub fn apply_awgn(samples: &[Complex32], snr_db: f64, seed: u64) -> Result<Vec<Complex32>> {
    if snr_db == f64::INFINITY {
        return Ok(samples.to_vec());
    }
    if snr_db.is_nan() {
        return Err(Error::Input("snr_db is NaN".into()));
    }
    let power =
        samples.iter().map(|s| s.norm_sqr() as f64).sum::<f64>() / samples.len().max(1) as f64;
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "signal power {power} leaves the noise level undefined"
        )));
    }
    let per_component = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let normal = Normal::new(0.0, per_component)
        .map_err(|e| Error::Input(format!("noise std {per_component}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samples
        .iter()
        .map(|s| {
            let re = s.re as f64 + normal.sample(&mut rng);
            let im = s.im as f64 + normal.sample(&mut rng);
            Complex32::new(re as f32, im as f32)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::{generate_waveform, ProtocolProfile};
    use super::*;
    use crate::datasets::Transmitter;

    fn tone(n: usize) -> Vec<Complex32> {
        (0..n)
            .map(|t| Complex32::from_polar(0.8, 0.37 * t as f32))
            .collect()
    }

    #[test]
    fn identity_fingerprint_is_the_identity() {
        let x = generate_waveform(&ProtocolProfile::nr_like(), 4096, 1).unwrap();
        let fp = TransmitterFingerprint::identity(Transmitter::Bes);
        assert_eq!(apply_transmitter_fingerprint(&x, &fp, 7.68e6, 5), x);
    }

    #[test]
    fn cfo_alone_is_an_analytic_rotation() {
        let fs = 7.68e6;
        let f0 = 900.0;
        let ones = vec![Complex32::new(1.0, 0.0); 20_000];
        let mut fp = TransmitterFingerprint::identity(Transmitter::Meb);
        fp.cfo_hz = f0;
        let y = apply_transmitter_fingerprint(&ones, &fp, fs, 0);
        for (t, v) in y.iter().enumerate() {
            let a = 2.0 * PI * f0 * t as f64 / fs;
            assert!(
                (v.re as f64 - a.cos()).abs() < 1e-6 && (v.im as f64 - a.sin()).abs() < 1e-6,
                "t={t}"
            );
        }
    }

    #[test]
    fn dc_offset_shifts_the_mean() {
        let x = tone(10_000);
        let mut fp = TransmitterFingerprint::identity(Transmitter::Honors);
        fp.dc_offset = [0.1, 0.0];
        let y = apply_transmitter_fingerprint(&x, &fp, 5e6, 0);
        let n = x.len() as f64;
        let re = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a.re - b.re) as f64)
            .sum::<f64>()
            / n;
        let im = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a.im - b.im) as f64)
            .sum::<f64>()
            / n;
        assert!((re - 0.1).abs() < 1e-6 && im.abs() < 1e-6, "{re} {im}");
    }

    #[test]
    fn cubic_and_power_stages_follow_their_formulas() {
        let x = vec![Complex32::new(0.6, -0.8)];
        let mut fp = TransmitterFingerprint::identity(Transmitter::Bes);
        fp.cubic_nonlinearity_coeff = 0.05;
        fp.tx_power_db = -6.0;
        let y = apply_transmitter_fingerprint(&x, &fp, 5e6, 0)[0];
        // |x| = 1, so the cubic term scales by 1.05
        let a = 10f64.powf(-0.3) * 1.05;
        assert!((y.re as f64 - 0.6 * a).abs() < 1e-6 && (y.im as f64 + 0.8 * a).abs() < 1e-6);
    }

    #[test]
    fn gain_imbalance_scales_quadrature_only() {
        let x = vec![Complex32::new(0.5, 0.5)];
        let mut fp = TransmitterFingerprint::identity(Transmitter::Bes);
        fp.iq_gain_imbalance_db = 20.0;
        let y = apply_transmitter_fingerprint(&x, &fp, 5e6, 0)[0];
        assert_eq!(y.re, 0.5);
        assert!((y.im - 5.0).abs() < 1e-6);
    }

    #[test]
    fn phase_noise_preserves_magnitude_and_repeats_under_a_seed() {
        let x = tone(5000);
        let mut fp = TransmitterFingerprint::identity(Transmitter::Bes);
        fp.phase_noise_std_rad = 0.01;
        let a = apply_transmitter_fingerprint(&x, &fp, 5e6, 3);
        assert_eq!(a, apply_transmitter_fingerprint(&x, &fp, 5e6, 3));
        assert_ne!(a, apply_transmitter_fingerprint(&x, &fp, 5e6, 4));
        assert!(a
            .iter()
            .zip(&x)
            .all(|(p, q)| (p.norm() - q.norm()).abs() < 1e-5));
    }

    #[test]
    fn infinite_snr_is_the_identity() {
        let x = tone(100);
        assert_eq!(apply_awgn(&x, f64::INFINITY, 1).unwrap(), x);
    }

    #[test]
    fn zero_power_is_degenerate() {
        let x = vec![Complex32::new(0.0, 0.0); 64];
        assert!(matches!(
            apply_awgn(&x, 10.0, 1),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            apply_awgn(&[], 10.0, 1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn zero_db_noise_on_a_unit_signal_has_unit_power() {
        let x = vec![Complex32::new(1.0, 0.0); 1_000_000];
        let y = apply_awgn(&x, 0.0, 42).unwrap();
        let noise = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum::<f64>()
            / x.len() as f64;
        assert!((noise - 1.0).abs() < 0.01, "{noise}");
    }

    #[test]
    fn noise_repeats_under_a_seed() {
        let x = tone(1000);
        assert_eq!(
            apply_awgn(&x, 10.0, 8).unwrap(),
            apply_awgn(&x, 10.0, 8).unwrap()
        );
        assert_ne!(
            apply_awgn(&x, 10.0, 8).unwrap(),
            apply_awgn(&x, 10.0, 9).unwrap()
        );
    }
}
