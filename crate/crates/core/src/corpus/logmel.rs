//! Log mel filterbank frontend for real audio.

use std::f64::consts::PI;

use babel_numerics::Tensor;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const N_MELS: usize = 80;
/// Added to the filterbank power before the log, so silence maps to `ln(1e-10)`.
pub const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `N_MELS x (n_fft/2 + 1)` triangular filters evenly spaced on the mel scale
/// between 0 Hz and Nyquist.
fn mel_filters(sample_rate: u32, n_fft: usize) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64))
        .collect();
    let bin_hz = |b: usize| b as f64 * f64::from(sample_rate) / n_fft as f64;
    (0..N_MELS)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = bin_hz(b);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// 80-bin log mel features: 30 ms Hamming windows every 10 ms, power spectrum,
/// `ln(power + LOG_FLOOR)`. Returns `frames x 80` with
/// `frames = (len - win) / hop + 1`.
pub fn logmel(samples: &[f64], sample_rate: u32) -> Result<Tensor> {
    if sample_rate != 8000 && sample_rate != 16000 {
        return Err(Error::Corpus(format!("unsupported sample rate {sample_rate}")));
    }
    let win = sample_rate as usize * 30 / 1000;
    let hop = sample_rate as usize / 100;
    if samples.len() < win {
        return Err(Error::Corpus(format!(
            "waveform of {} samples is shorter than one {win}-sample window",
            samples.len()
        )));
    }
    let n_fft = win.next_power_of_two();
    let frames = (samples.len() - win) / hop + 1;
    let window: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos())
        .collect();
    let filters = mel_filters(sample_rate, n_fft);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut out = Vec::with_capacity(frames * N_MELS);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = vec![0.0; n_fft / 2 + 1];
    for f in 0..frames {
        let chunk = &samples[f * hop..f * hop + win];
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(if i < win { chunk[i] * window[i] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for filt in &filters {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.push((e + LOG_FLOOR).ln());
        }
    }
    Ok(Tensor::new(&[frames, N_MELS], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_frame_count() {
        let x: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.05).sin()).collect();
        let m = logmel(&x, 16000).unwrap();
        assert_eq!(m.shape(), &[(16000 - 480) / 160 + 1, N_MELS]);
        assert_eq!(m.rows(), 98);
        let m8 = logmel(&x[..8000], 8000).unwrap();
        assert_eq!(m8.shape(), &[98, N_MELS]);
    }

    #[test]
    fn silence_hits_floor() {
        let m = logmel(&vec![0.0; 4000], 16000).unwrap();
        assert!(m.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn rejects_short_or_odd_input() {
        assert!(logmel(&[0.0; 479], 16000).is_err());
        assert!(logmel(&[0.0; 480], 16000).is_ok());
        assert!(logmel(&[0.0; 4000], 44100).is_err());
    }

    #[test]
    fn tone_peaks_in_matching_band() {
        // a 1 kHz tone should put the most energy in the filter centred nearest 1 kHz
        let x: Vec<f64> = (0..4000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let m = logmel(&x, 16000).unwrap();
        let row = m.row(3);
        let best = (0..N_MELS).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        let top = hz_to_mel(8000.0);
        let centre = mel_to_hz(top * (best + 1) as f64 / (N_MELS + 1) as f64);
        assert!((centre - 1000.0).abs() < 80.0, "peak filter centred at {centre} Hz");
    }

    #[test]
    fn filters_are_triangles_within_nyquist() {
        let f = mel_filters(16000, 512);
        assert_eq!(f.len(), N_MELS);
        for row in &f {
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }
}
