//! Frame-level acoustic features: MFCCs with deltas, autocorrelation pitch,
//! LPC formants and spectral shape statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioSignal, VoiceError};

/// Log-energy floor applied before the DCT.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Samples per frame; a power of two.
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub rolloff_fraction: f64,
    pub pitch_tau_min: usize,
    pub pitch_tau_max: usize,
    pub lpc_order: usize,
    /// Minimum normalized autocorrelation at the pitch lag for a frame to
    /// count as voiced.
    pub voicing_threshold: f64,
    /// LPC roots broader than this (Hz) are not reported as formants.
    pub formant_max_bandwidth: f64,
    /// Append pitch, formant and spectral values to the modeling vector.
    pub include_extra: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 512,
            hop: 160,
            n_mels: 26,
            n_mfcc: 13,
            mel_fmin: 0.0,
            mel_fmax: 8_000.0,
            rolloff_fraction: 0.5,
            pitch_tau_min: 40,
            pitch_tau_max: 320,
            lpc_order: 12,
            voicing_threshold: 0.3,
            formant_max_bandwidth: 400.0,
            include_extra: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), VoiceError> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let checks = [
            (self.sample_rate > 0, "sample_rate must be positive"),
            (self.frame_len.is_power_of_two() && self.frame_len >= 4, "frame_len must be a power of two"),
            (self.hop >= 1 && self.hop <= self.frame_len, "hop must be in 1..=frame_len"),
            (self.n_mels >= 1, "n_mels must be positive"),
            (self.n_mfcc >= 1 && self.n_mfcc <= self.n_mels, "n_mfcc must be in 1..=n_mels"),
            (
                self.mel_fmin >= 0.0 && self.mel_fmin < self.mel_fmax && self.mel_fmax <= nyquist,
                "mel band must satisfy 0 <= fmin < fmax <= sample_rate/2",
            ),
            (self.rolloff_fraction > 0.0 && self.rolloff_fraction < 1.0, "rolloff_fraction must be in (0, 1)"),
            (
                self.pitch_tau_min >= 1 && self.pitch_tau_min < self.pitch_tau_max && self.pitch_tau_max < self.frame_len,
                "pitch lags must satisfy 1 <= min < max < frame_len",
            ),
            (self.lpc_order >= 2 && self.lpc_order < self.frame_len, "lpc_order must be in 2..frame_len"),
            ((0.0..=1.0).contains(&self.voicing_threshold), "voicing_threshold must be in [0, 1]"),
            (self.formant_max_bandwidth > 0.0, "formant_max_bandwidth must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(VoiceError::InvalidConfig(msg.to_string())),
            None => Ok(()),
        }
    }

    /// Width of the vector handed to the GMM.
    pub fn model_dim(&self) -> usize {
        3 * self.n_mfcc + if self.include_extra { EXTRA_DIM } else { 0 }
    }
}

const EXTRA_DIM: usize = 6;

/// Everything computed for one analysis frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub mfcc: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Pitch period in samples; `None` when unvoiced.
    pub pitch_period: Option<usize>,
    /// Two lowest formants in Hz; `None` for silent frames or when LPC finds
    /// fewer than two resonances.
    pub formants: Option<(f64, f64)>,
    pub centroid: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
}

impl FeatureVector {
    /// MFCC ‖ Δ ‖ ΔΔ, optionally followed by pitch (Hz, 0 when unvoiced),
    /// f₁, f₂, centroid, bandwidth and rolloff, all in kHz.
    pub fn model_vector(&self, cfg: &FeatureConfig) -> Vec<f64> {
        let mut v = Vec::with_capacity(cfg.model_dim());
        v.extend_from_slice(&self.mfcc);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.delta2);
        if cfg.include_extra {
            let pitch_hz = self.pitch_period.map_or(0.0, |t| cfg.sample_rate as f64 / t as f64);
            let (f1, f2) = self.formants.unwrap_or((0.0, 0.0));
            v.extend([pitch_hz, f1, f2, self.centroid, self.bandwidth, self.rolloff].iter().map(|x| x / 1000.0));
        }
        v
    }
}

/// `w(n) = 0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Quarter-wavelength resonance of a tube closed at one end: `c / (4L)`.
pub fn quarter_wave_resonance(speed_of_sound: f64, length: f64) -> f64 {
    speed_of_sound / (4.0 * length)
}

/// Triangular filters on FFT bins, `n_mels × (frame_len/2 + 1)`. Edges are
/// equally spaced on the mel scale and snapped to bins; each filter peaks at
/// exactly 1 on its center bin.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.frame_len / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax));
    let edges: Vec<usize> = (0..cfg.n_mels + 2)
        .map(|i| {
            let hz = mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64);
            ((cfg.frame_len as f64 * hz / cfg.sample_rate as f64).round() as usize).min(n_bins - 1)
        })
        .collect();
    (0..cfg.n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    if k == center {
                        1.0
                    } else if k > left && k < center {
                        (k - left) as f64 / (center - left) as f64
                    } else if k > center && k < right {
                        (right - k) as f64 / (right - center) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `rows × m`:
/// `G[k][j] = s_k·cos(πk(j + ½)/m)` with `s_0 = √(1/m)`, `s_k = √(2/m)`.
pub fn dct_matrix(rows: usize, m: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|k| {
            let s = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            (0..m).map(|j| s * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()).collect()
        })
        .collect()
}

pub fn dct_ii(basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    basis.iter().map(|row| row.iter().zip(x).map(|(g, v)| g * v).sum()).collect()
}

/// Autocorrelation pitch estimate on a raw (unwindowed) frame.
///
/// The frame mean is removed first. The lag maximizing the raw
/// autocorrelation over `[tau_min, tau_max]` is reported if its normalized
/// autocorrelation reaches the voicing threshold.
pub fn pitch_period(frame: &[f64], cfg: &FeatureConfig) -> Option<usize> {
    if frame.len() <= cfg.pitch_tau_max {
        return None;
    }
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let n = x.len();
    let mut best: Option<(usize, f64)> = None;
    for tau in cfg.pitch_tau_min..=cfg.pitch_tau_max {
        let phi: f64 = (0..n - tau).map(|i| x[i] * x[i + tau]).sum();
        if best.map_or(true, |(_, b)| phi > b) {
            best = Some((tau, phi));
        }
    }
    let (tau, phi) = best?;
    let e0: f64 = x[..n - tau].iter().map(|v| v * v).sum();
    let e1: f64 = x[tau..].iter().map(|v| v * v).sum();
    let denom = (e0 * e1).sqrt();
    if denom <= 0.0 || phi / denom < cfg.voicing_threshold {
        return None;
    }
    Some(tau)
}

/// LPC predictor `a[1..=p]` (with `a[0] = 1`) by Levinson–Durbin on the
/// autocorrelation of `frame`.
pub fn lpc(frame: &[f64], order: usize) -> Result<Vec<f64>, VoiceError> {
    let n = frame.len();
    if order >= n {
        return Err(VoiceError::InvalidConfig("lpc order exceeds frame length".into()));
    }
    let r: Vec<f64> = (0..=order).map(|k| (0..n - k).map(|i| frame[i] * frame[i + k]).sum()).collect();
    if !(r[0] > 0.0) {
        return Err(VoiceError::DegenerateFrame);
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= r[0] * 1e-14 {
            break;
        }
    }
    Ok(a)
}

/// Roots of `z^p + a₁z^{p−1} + … + a_p` via companion-matrix eigenvalues.
pub fn lpc_roots(a: &[f64]) -> Vec<Complex<f64>> {
    let p = a.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        companion[(0, j)] = -a[j + 1];
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().map(|c| Complex::new(c.re, c.im)).collect()
}

/// Two lowest formants (Hz, ascending) of an already windowed frame.
pub fn formants(frame: &[f64], cfg: &FeatureConfig) -> Result<(f64, f64), VoiceError> {
    let a = lpc(frame, cfg.lpc_order)?;
    let sr = cfg.sample_rate as f64;
    let mut candidates: Vec<(f64, f64)> = lpc_roots(&a)
        .into_iter()
        .filter(|z| z.im > 0.0)
        .map(|z| {
            let freq = z.im.atan2(z.re) * sr / (2.0 * PI);
            let bandwidth = -(sr / PI) * z.norm().ln();
            (freq, bandwidth)
        })
        .filter(|&(f, _)| f > 90.0 && f < sr / 2.0)
        .collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let narrow: Vec<f64> = candidates
        .iter()
        .filter(|(_, b)| *b < cfg.formant_max_bandwidth)
        .map(|(f, _)| *f)
        .collect();
    let pick = if narrow.len() >= 2 { narrow } else { candidates.iter().map(|(f, _)| *f).collect() };
    match pick.as_slice() {
        [f1, f2, ..] => Ok((*f1, *f2)),
        _ => Err(VoiceError::DegenerateFrame),
    }
}

/// Centroid, bandwidth and rolloff of a magnitude spectrum sampled at
/// `freqs`.
pub fn spectral_shape(freqs: &[f64], mags: &[f64], rolloff_fraction: f64) -> Result<(f64, f64, f64), VoiceError> {
    let total: f64 = mags.iter().sum();
    if !(total > 0.0) {
        return Err(VoiceError::DegenerateFrame);
    }
    let centroid = freqs.iter().zip(mags).map(|(f, x)| f * x).sum::<f64>() / total;
    let spread = freqs.iter().zip(mags).map(|(f, x)| (f - centroid).powi(2) * x).sum::<f64>() / total;
    let target = rolloff_fraction * total;
    let mut cumulative = 0.0;
    let mut rolloff = *freqs.last().unwrap();
    for (f, x) in freqs.iter().zip(mags) {
        cumulative += x;
        if cumulative >= target {
            rolloff = *f;
            break;
        }
    }
    Ok((centroid, spread.sqrt(), rolloff))
}

/// `Δ(t) = c(t+1) − c(t−1)`; the first and last frames copy their
/// neighbour's value.
pub fn delta(seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, VoiceError> {
    let t = seq.len();
    if t < 3 {
        return Err(VoiceError::TooFewFrames { got: t, need: 3 });
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(t);
    out.push(Vec::new());
    for i in 1..t - 1 {
        out.push(seq[i + 1].iter().zip(&seq[i - 1]).map(|(a, b)| a - b).collect());
    }
    out[0] = out[1].clone();
    out.push(out[t - 2].clone());
    Ok(out)
}

/// Δ and ΔΔ, the latter being Δ applied to Δ.
pub fn delta_features(seq: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), VoiceError> {
    let d = delta(seq)?;
    let dd = delta(&d)?;
    Ok((d, dd))
}

/// Precomputed window, FFT plan, filterbank and DCT basis for one config.
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, VoiceError> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            window: hamming(cfg.frame_len),
            fft: FftPlanner::new().plan_fft_forward(cfg.frame_len),
            filterbank: mel_filterbank(cfg),
            dct: dct_matrix(cfg.n_mfcc, cfg.n_mels),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    fn check_signal(&self, signal: &AudioSignal) -> Result<(), VoiceError> {
        if signal.sample_rate() != self.cfg.sample_rate {
            return Err(VoiceError::SampleRateMismatch { expected: self.cfg.sample_rate, got: signal.sample_rate() });
        }
        if signal.len() < self.cfg.frame_len {
            return Err(VoiceError::SignalTooShort { len: signal.len(), frame_len: self.cfg.frame_len });
        }
        Ok(())
    }

    /// Raw (unwindowed) frames at the hop interval.
    pub fn raw_frames<'a>(&self, signal: &'a AudioSignal) -> Result<Vec<&'a [f64]>, VoiceError> {
        self.check_signal(signal)?;
        let n = (signal.len() - self.cfg.frame_len) / self.cfg.hop + 1;
        Ok((0..n).map(|i| &signal.samples()[i * self.cfg.hop..i * self.cfg.hop + self.cfg.frame_len]).collect())
    }

    /// Frames multiplied by the Hamming window.
    pub fn frame_window(&self, signal: &AudioSignal) -> Result<Vec<Vec<f64>>, VoiceError> {
        Ok(self.raw_frames(signal)?.into_iter().map(|f| self.apply_window(f)).collect())
    }

    pub fn apply_window(&self, frame: &[f64]) -> Vec<f64> {
        frame.iter().zip(&self.window).map(|(x, w)| x * w).collect()
    }

    /// One-sided `|DFT|²`, bins `0..=N/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        buf[..self.cfg.frame_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn log_mel_energies(&self, power: &[f64]) -> Vec<f64> {
        self.filterbank
            .iter()
            .map(|filter| filter.iter().zip(power).map(|(w, p)| w * p).sum::<f64>().max(LOG_FLOOR).ln())
            .collect()
    }

    pub fn mfcc_frame(&self, power: &[f64]) -> Vec<f64> {
        dct_ii(&self.dct, &self.log_mel_energies(power))
    }

    pub fn mfcc(&self, signal: &AudioSignal) -> Result<Vec<Vec<f64>>, VoiceError> {
        Ok(self.frame_window(signal)?.iter().map(|f| self.mfcc_frame(&self.power_spectrum(f))).collect())
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        let step = self.cfg.sample_rate as f64 / self.cfg.frame_len as f64;
        (0..=self.cfg.frame_len / 2).map(|k| k as f64 * step).collect()
    }

    /// Full per-frame feature set for a signal.
    pub fn extract(&self, signal: &AudioSignal) -> Result<Vec<FeatureVector>, VoiceError> {
        let raw = self.raw_frames(signal)?;
        if raw.len() < 3 {
            return Err(VoiceError::TooFewFrames { got: raw.len(), need: 3 });
        }
        let freqs = self.bin_frequencies();
        let mut mfccs = Vec::with_capacity(raw.len());
        let mut rest = Vec::with_capacity(raw.len());
        for frame in &raw {
            let windowed = self.apply_window(frame);
            let power = self.power_spectrum(&windowed);
            mfccs.push(self.mfcc_frame(&power));
            let mags: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
            let (centroid, bandwidth, rolloff) = spectral_shape(&freqs, &mags, self.cfg.rolloff_fraction).unwrap_or((0.0, 0.0, 0.0));
            let pitch = pitch_period(frame, &self.cfg);
            let formant_pair = formants(&windowed, &self.cfg).ok();
            rest.push((pitch, formant_pair, centroid, bandwidth, rolloff));
        }
        let (d, dd) = delta_features(&mfccs)?;
        Ok(mfccs
            .into_iter()
            .zip(d)
            .zip(dd)
            .zip(rest)
            .map(|(((mfcc, delta), delta2), (pitch_period, formants, centroid, bandwidth, rolloff))| FeatureVector {
                mfcc,
                delta,
                delta2,
                pitch_period,
                formants,
                centroid,
                bandwidth,
                rolloff,
            })
            .collect())
    }

    /// Modeling vectors (see [`FeatureVector::model_vector`]).
    pub fn model_vectors(&self, signal: &AudioSignal) -> Result<Vec<Vec<f64>>, VoiceError> {
        Ok(self.extract(signal)?.iter().map(|f| f.model_vector(&self.cfg)).collect())
    }
}
