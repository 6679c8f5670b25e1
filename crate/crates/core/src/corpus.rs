//! Seeded synthetic users for end-to-end runs: procedural face textures
//! rendered to PGM frames and voices synthesized as a harmonic source plus
//! noise shaped by per-user resonators.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::face::GrayImage;
use crate::voice::AudioSignal;

pub const FACE_SIDE: usize = 80;
pub const SAMPLE_RATE: u32 = 16_000;
pub const REGISTRATION_SECS: f64 = 3.0;
pub const LOGIN_SECS: f64 = 1.0;
pub const VIDEO_FRAMES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grating {
    pub freq: f64,
    pub angle: f64,
    pub phase: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub background: f64,
    pub skin: f64,
    /// Ellipse semi-axes as fractions of the image side.
    pub radii: (f64, f64),
    pub eye_y: f64,
    pub eye_spread: f64,
    pub mouth_y: f64,
    pub gratings: Vec<Grating>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0: f64,
    /// (frequency, bandwidth) pairs in Hz.
    pub formants: Vec<(f64, f64)>,
    /// Harmonic amplitude falls off as `h^-tilt`.
    pub tilt: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUser {
    pub name: String,
    pub date_of_birth: String,
    pub email: String,
    pub phone_number: String,
    pub face: FaceParams,
    pub voice: VoiceParams,
    pub seed: u64,
}

/// Paths written by [`SyntheticUser::write_media`].
#[derive(Debug, Clone)]
pub struct UserMedia {
    pub registration_audio: PathBuf,
    /// Multi-frame PGM stream.
    pub registration_video: PathBuf,
    /// First registration frame as a standalone PGM.
    pub registration_frame: PathBuf,
    pub login_audio: PathBuf,
}

fn spread_slots(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    let mut slots: Vec<f64> = (0..n).map(|i| lo + step * (i as f64 + rng.gen_range(0.3..0.7))).collect();
    slots.shuffle(rng);
    slots
}

/// `n` users with well-separated voice parameters and independent faces.
pub fn generate(n: usize, seed: u64) -> Vec<SyntheticUser> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let f0s = spread_slots(&mut rng, n, 95.0, 260.0);
    let f1s = spread_slots(&mut rng, n, 300.0, 900.0);
    let f2s = spread_slots(&mut rng, n, 1000.0, 2400.0);
    let f3s = spread_slots(&mut rng, n, 2500.0, 3600.0);
    (0..n)
        .map(|i| {
            let face = FaceParams {
                background: rng.gen_range(0.05..0.3),
                skin: rng.gen_range(0.45..0.8),
                radii: (rng.gen_range(0.28..0.36), rng.gen_range(0.36..0.44)),
                eye_y: rng.gen_range(0.36..0.44),
                eye_spread: rng.gen_range(0.12..0.18),
                mouth_y: rng.gen_range(0.62..0.7),
                gratings: (0..3)
                    .map(|_| Grating {
                        freq: rng.gen_range(0.05..0.25),
                        angle: rng.gen_range(0.0..PI),
                        phase: rng.gen_range(0.0..2.0 * PI),
                        amplitude: rng.gen_range(0.05..0.15),
                    })
                    .collect(),
            };
            let voice = VoiceParams {
                f0: f0s[i],
                formants: vec![
                    (f1s[i], rng.gen_range(60.0..100.0)),
                    (f2s[i], rng.gen_range(80.0..130.0)),
                    (f3s[i], rng.gen_range(100.0..160.0)),
                ],
                tilt: rng.gen_range(0.8..1.4),
                noise: rng.gen_range(0.02..0.1),
            };
            SyntheticUser {
                name: format!("Synthetic User {i}"),
                date_of_birth: format!("19{:02}-{:02}-{:02}", 60 + i % 40, 1 + i % 12, 1 + i % 28),
                email: format!("user{i}@example.test"),
                phone_number: format!("+1555{:07}", i),
                face,
                voice,
                seed: rng.gen(),
            }
        })
        .collect()
}

impl SyntheticUser {
    /// One face frame; `take` selects the small pose/lighting jitter.
    pub fn render_frame(&self, take: u64) -> GrayImage {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ take.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let (dx, dy) = if take == 0 { (0.0, 0.0) } else { (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) };
        let gain = if take == 0 { 1.0 } else { rng.gen_range(0.95..1.05) };
        let noise = if take == 0 { 0.0 } else { 0.01 };
        let p = &self.face;
        let side = FACE_SIDE as f64;
        let (cx, cy) = (0.5 * side + dx, 0.5 * side + dy);
        let mut pixels = Vec::with_capacity(FACE_SIDE * FACE_SIDE);
        for y in 0..FACE_SIDE {
            for x in 0..FACE_SIDE {
                let (xf, yf) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let e = (xf / (p.radii.0 * side)).powi(2) + (yf / (p.radii.1 * side)).powi(2);
                let mut v = if e <= 1.0 {
                    let mut skin = p.skin;
                    for g in &p.gratings {
                        let u = xf * g.angle.cos() + yf * g.angle.sin();
                        skin += g.amplitude * (2.0 * PI * g.freq * u + g.phase).sin();
                    }
                    skin
                } else {
                    p.background
                };
                let (nx, ny) = (xf / side, yf / side + 0.5);
                for sx in [-1.0, 1.0] {
                    let d2 = (nx - sx * p.eye_spread).powi(2) + (ny - p.eye_y).powi(2);
                    v -= 0.35 * (-d2 / (2.0 * 0.03f64.powi(2))).exp();
                }
                let m2 = (nx / 2.5).powi(2) + (ny - p.mouth_y).powi(2);
                v -= 0.25 * (-m2 / (2.0 * 0.025f64.powi(2))).exp();
                if noise > 0.0 {
                    v += noise * (rng.gen::<f64>() - 0.5) * 2.0;
                }
                pixels.push((v * gain).clamp(0.0, 1.0));
            }
        }
        GrayImage::new(FACE_SIDE, FACE_SIDE, pixels).expect("rendered pixels are clamped")
    }

    /// Registration video as a PGM stream of [`VIDEO_FRAMES`] frames.
    pub fn registration_video(&self) -> Vec<u8> {
        (0..VIDEO_FRAMES as u64).flat_map(|t| self.render_frame(t).to_pgm()).collect()
    }

    /// An utterance of `secs` seconds; `take` varies the prosody and noise.
    pub fn utterance(&self, secs: f64, take: u64) -> AudioSignal {
        synthesize(&self.voice, secs, self.seed.wrapping_add(take.wrapping_mul(0x2545_f491_4f6c_dd1d)))
    }

    pub fn registration_audio(&self) -> AudioSignal {
        self.utterance(REGISTRATION_SECS, 0)
    }

    pub fn login_audio(&self, take: u64) -> AudioSignal {
        self.utterance(LOGIN_SECS, take + 1)
    }

    /// Writes registration media and one login utterance under `dir`.
    pub fn write_media(&self, dir: &Path) -> std::io::Result<UserMedia> {
        std::fs::create_dir_all(dir)?;
        let media = UserMedia {
            registration_audio: dir.join("registration.wav"),
            registration_video: dir.join("registration.pgm"),
            registration_frame: dir.join("frame0.pgm"),
            login_audio: dir.join("login.wav"),
        };
        std::fs::write(&media.registration_audio, self.registration_audio().to_wav_bytes())?;
        std::fs::write(&media.registration_video, self.registration_video())?;
        std::fs::write(&media.registration_frame, self.render_frame(0).to_pgm())?;
        std::fs::write(&media.login_audio, self.login_audio(0).to_wav_bytes())?;
        Ok(media)
    }
}

fn resonate(x: &[f64], freq: f64, bw: f64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let r = (-PI * bw / sr).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / sr).cos();
    let a2 = -r * r;
    let gain = 1.0 - r;
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
        let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
        y[n] = gain * x[n] + a1 * y1 + a2 * y2;
    }
    y
}

fn synthesize(p: &VoiceParams, secs: f64, seed: u64) -> AudioSignal {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let n = (secs * sr).round() as usize;
    let vibrato_rate = rng.gen_range(4.0..6.0);
    let drift = rng.gen_range(-0.03..0.03);
    let syllable_rate = rng.gen_range(3.0..5.0);
    let harmonics = ((0.45 * sr / p.f0).floor() as usize).max(1);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let mut source = Vec::with_capacity(n);
    let mut phase = 0.0;
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = p.f0 * (1.0 + drift * t / secs.max(1e-9) + 0.01 * (2.0 * PI * vibrato_rate * t).sin());
        phase += 2.0 * PI * f0 / sr;
        let mut s = 0.0;
        for (h, ph) in phases.iter().enumerate() {
            let h = (h + 1) as f64;
            if h * f0 < 0.45 * sr {
                s += (h * phase + ph).sin() / h.powf(p.tilt);
            }
        }
        let envelope = 0.7 + 0.3 * (2.0 * PI * syllable_rate * t).sin();
        source.push(envelope * s + p.noise * rng.gen_range(-1.0..1.0));
    }
    let mut out = vec![0.0; n];
    for &(f, bw) in &p.formants {
        let y = resonate(&source, f, bw);
        for (o, v) in out.iter_mut().zip(y) {
            *o += v;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let samples = out.iter().map(|v| 0.7 * v / peak).collect();
    AudioSignal::new(samples, SAMPLE_RATE).expect("normalized samples")
}
