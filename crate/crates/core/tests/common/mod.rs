//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use fbt_core::voice::{hamming, FeatureConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn resonate(input: &[f64], freq: f64, bandwidth: f64, sr: f64) -> Vec<f64> {
    let r = (-std::f64::consts::PI * bandwidth / sr).exp();
    let theta = 2.0 * std::f64::consts::PI * freq / sr;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let mut out = vec![0.0; input.len()];
    for n in 0..input.len() {
        let y1 = if n >= 1 { out[n - 1] } else { 0.0 };
        let y2 = if n >= 2 { out[n - 2] } else { 0.0 };
        out[n] = input[n] + a1 * y1 + a2 * y2;
    }
    out
}

/// Roots of a monic polynomial by Durand–Kerner iteration.
pub fn durand_kerner(coeffs: &[f64]) -> Vec<(f64, f64)> {
    use rustfft::num_complex::Complex;
    let p = coeffs.len() - 1;
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..p).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..p {
            let denom = (0..p).filter(|&j| j != i).fold(Complex::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            roots[i] = prev[i] - eval(prev[i]) / denom;
        }
    }
    roots.iter().map(|z| (z.re, z.im)).collect()
}

/// Frame of white noise filtered through resonators at 700 Hz and 1200 Hz
/// (50 Hz bandwidth), Hamming-windowed.
pub fn resonator_frame(seed: u64, cfg: &FeatureConfig) -> Vec<f64> {
    let sr = cfg.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..cfg.frame_len * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = resonate(&resonate(&noise, 700.0, 50.0, sr), 1200.0, 50.0, sr);
    let w = hamming(cfg.frame_len);
    x[cfg.frame_len * 2..cfg.frame_len * 3].iter().zip(&w).map(|(a, b)| a * b).collect()
}

/// Direct quadruple loop over output and kernel positions.
pub fn conv2d_oracle(input: &[Vec<f64>], kernel: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (h, w) = (input.len(), input[0].len());
    let (kh, kw) = (kernel.len(), kernel[0].len());
    let mut out = vec![vec![0.0; w - kw + 1]; h - kh + 1];
    for i in 0..=h - kh {
        for j in 0..=w - kw {
            let mut acc = 0.0;
            for k in 0..kh {
                for l in 0..kw {
                    acc += input[i + k][j + l] * kernel[k][l];
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `(x, y, w, h, score)`
pub type RawBox = (f64, f64, f64, f64, f64);

pub fn iou_oracle(a: RawBox, b: RawBox) -> f64 {
    let left = a.0.max(b.0);
    let right = (a.0 + a.2).min(b.0 + b.2);
    let top = a.1.max(b.1);
    let bottom = (a.1 + a.3).min(b.1 + b.3);
    if right <= left || bottom <= top {
        return 0.0;
    }
    let inter = (right - left) * (bottom - top);
    inter / (a.2 * a.3 + b.2 * b.3 - inter)
}

/// Brute-force suppression: repeatedly take the best remaining box (lowest
/// index among equal scores) and drop everything overlapping it.
pub fn nms_oracle(boxes: &[RawBox], threshold: f64) -> Vec<usize> {
    let mut alive = vec![true; boxes.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..boxes.len() {
            if alive[i] && best.map_or(true, |b| boxes[i].4 > boxes[b].4) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        alive[b] = false;
        for i in 0..boxes.len() {
            if alive[i] && iou_oracle(boxes[b], boxes[i]) > threshold {
                alive[i] = false;
            }
        }
    }
    kept
}

pub fn random_boxes(rng: &mut impl Rng, n: usize) -> Vec<RawBox> {
    (0..n)
        .map(|_| {
            let x = rng.gen_range(0.0..100.0);
            let y = rng.gen_range(0.0..100.0);
            let w = rng.gen_range(1.0..40.0);
            let h = rng.gen_range(1.0..40.0);
            // coarse scores so ties occur
            let score = rng.gen_range(0..=10) as f64 / 10.0;
            (x, y, w, h, score)
        })
        .collect()
}

/// Chain of `n` transactions, every tenth one carrying an embedded payload.
pub fn build_ledger(n: u64) -> fbt_core::ledger::Ledger {
    use fbt_core::ledger::{Address, Ledger};
    use sha2::{Digest, Sha256};
    let ledger = Ledger::in_memory();
    for i in 0..n {
        let (digest, payload) = if i % 10 == 0 {
            let p = format!("payload-{i}").into_bytes();
            (Sha256::digest(&p).into(), Some(p))
        } else {
            (Sha256::digest(i.to_be_bytes()).into(), None)
        };
        let record = ledger.draft(Address::derive(&format!("miner-{}", i % 3)), 1_700_000_000 + i, digest, i, payload);
        ledger.store_transaction(record).unwrap();
    }
    ledger
}

/// Applies mutation `field` (0..7) to a transaction in place.
pub fn mutate_field(record: &mut fbt_core::ledger::TransactionRecord, field: usize) {
    match field {
        0 => record.sender_address.0[0] ^= 1,
        1 => record.timestamp += 1,
        2 => record.block_number += 1,
        3 => record.data_hash[31] ^= 0x80,
        4 => record.nonce ^= 1 << 40,
        5 => record.previous_hash.0[5] ^= 2,
        6 => match &mut record.payload {
            Some(p) => p.push(b'!'),
            None => record.payload = Some(b"x".to_vec()),
        },
        _ => unreachable!("unknown field {field}"),
    }
}

pub const MUTABLE_FIELDS: usize = 7;
