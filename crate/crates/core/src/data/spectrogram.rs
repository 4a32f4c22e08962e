//! Log-mel spectrogram utility for adapting raw audio.
//!
//! 25 ms Hann windows with a 10 ms hop, magnitude spectrum via FFT (next
//! power of two above the window), a 128-band triangular mel filterbank on
//! the HTK scale, and a log with a fixed floor. The synthetic dataset does
//! not go through here — this is the entry point for real waveforms.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MEL_BANDS: usize = 128;
pub const WINDOW_SECONDS: f64 = 0.025;
pub const HOP_SECONDS: f64 = 0.010;
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frame count for a waveform length: 1 + ⌊(len − window) / hop⌋.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        1 + (len - window) / hop
    }
}

/// Compute the [MEL_BANDS × T] log-mel spectrogram of a waveform.
pub fn log_mel_spectrogram(waveform: &[f32], sample_rate: u32) -> Result<Tensor<f32>> {
    if waveform.is_empty() {
        return Err(Error::Contract("spectrogram of an empty waveform".into()));
    }
    let sr = sample_rate as f64;
    let window = (sr * WINDOW_SECONDS).round() as usize;
    let hop = (sr * HOP_SECONDS).round() as usize;
    if window == 0 || hop == 0 {
        return Err(Error::Config(format!("sample rate {sample_rate} too low")));
    }
    let frames = frame_count(waveform.len(), window, hop);
    if frames == 0 {
        return Err(Error::Contract(format!(
            "waveform of {} samples is shorter than one {window}-sample window",
            waveform.len()
        )));
    }
    let n_fft = window.next_power_of_two();
    let bins = n_fft / 2 + 1;

    // Hann window
    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / window as f64).cos())
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);

    // magnitude spectrogram, frame-major
    let mut magnitudes = vec![0.0f64; frames * bins];
    let mut buffer = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..frames {
        let start = f * hop;
        for (i, b) in buffer.iter_mut().enumerate() {
            let v = if i < window {
                waveform[start + i] as f64 * hann[i]
            } else {
                0.0
            };
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buffer);
        for (k, slot) in magnitudes[f * bins..(f + 1) * bins].iter_mut().enumerate() {
            *slot = buffer[k].norm();
        }
    }

    // triangular mel filterbank: MEL_BANDS filters over [0, sr/2]
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(sr / 2.0);
    let points: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    let bin_hz = sr / n_fft as f64;

    let mut out = vec![0.0f32; MEL_BANDS * frames];
    for band in 0..MEL_BANDS {
        let (left, center, right) = (points[band], points[band + 1], points[band + 2]);
        for f in 0..frames {
            let mut acc = 0.0f64;
            for k in 0..bins {
                let hz = k as f64 * bin_hz;
                let weight = if hz >= left && hz <= center && center > left {
                    (hz - left) / (center - left)
                } else if hz > center && hz <= right && right > center {
                    (right - hz) / (right - center)
                } else {
                    0.0
                };
                if weight > 0.0 {
                    acc += weight * magnitudes[f * bins + k];
                }
            }
            out[band * frames + f] = acc.max(LOG_FLOOR).ln() as f32;
        }
    }
    Tensor::new(vec![MEL_BANDS, frames], out)
}

/// Frequency interval [lo, hi) in Hz covered by one mel band's support.
pub fn mel_band_range(band: usize, sample_rate: u32) -> (f64, f64) {
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0);
    let point =
        |i: usize| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (MEL_BANDS + 1) as f64);
    (point(band), point(band + 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_sits_at_the_log_floor() {
        let wave = vec![0.0f32; 1600];
        let spec = log_mel_spectrogram(&wave, 16_000).unwrap();
        let floor = (LOG_FLOOR.ln()) as f32;
        assert_eq!(spec.shape(), &[128, 8]);
        for v in spec.data() {
            assert_eq!(*v, floor);
        }
    }

    #[test]
    fn frame_count_matches_framing_arithmetic() {
        // window 400, hop 160 at 16 kHz
        assert_eq!(frame_count(1600, 400, 160), 8);
        assert_eq!(frame_count(400, 400, 160), 1);
        assert_eq!(frame_count(399, 400, 160), 0);
        let wave = vec![0.25f32; 4000];
        let spec = log_mel_spectrogram(&wave, 16_000).unwrap();
        assert_eq!(spec.shape()[1], 1 + (4000 - 400) / 160);
    }

    #[test]
    fn empty_and_short_waveforms_rejected() {
        assert!(log_mel_spectrogram(&[], 16_000).is_err());
        assert!(log_mel_spectrogram(&[0.1; 100], 16_000).is_err());
    }

    #[test]
    fn pure_tone_peaks_in_the_band_containing_its_frequency() {
        // 1 kHz tone at 16 kHz; the loudest mel band's range must contain
        // 1 kHz. The expected band is derived from the mel formulas alone.
        let sr = 16_000u32;
        let tone: Vec<f32> = (0..3200)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr as f64).sin() as f32)
            .collect();
        let spec = log_mel_spectrogram(&tone, sr).unwrap();
        let frames = spec.shape()[1];
        // average energy per band over frames
        let mut best_band = 0usize;
        let mut best = f32::NEG_INFINITY;
        for band in 0..MEL_BANDS {
            let mut acc = 0.0f32;
            for f in 0..frames {
                acc += spec.get2(band, f);
            }
            if acc > best {
                best = acc;
                best_band = band;
            }
        }
        let (lo, hi) = mel_band_range(best_band, sr);
        assert!(
            lo <= 1000.0 && 1000.0 <= hi,
            "band {best_band} covers [{lo:.1}, {hi:.1}] Hz"
        );

        // independent check: the band whose center is nearest 1 kHz in mel
        // space must be the winner or its direct neighbor
        let mel_hi = hz_to_mel(sr as f64 / 2.0);
        let target = hz_to_mel(1000.0);
        let mut nearest = 0usize;
        let mut gap = f64::INFINITY;
        for band in 0..MEL_BANDS {
            let center = mel_hi * (band + 1) as f64 / (MEL_BANDS + 1) as f64;
            if (center - target).abs() < gap {
                gap = (center - target).abs();
                nearest = band;
            }
        }
        assert!(
            best_band.abs_diff(nearest) <= 1,
            "peak band {best_band} vs mel-nearest {nearest}"
        );
    }
}
