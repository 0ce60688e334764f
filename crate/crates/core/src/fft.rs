//! Thin helpers over `rustfft` for real grids.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

type Plans = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<Plans>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

pub fn forward(data: &mut [Complex64]) {
    plan(data.len(), false).process(data);
}

/// Unnormalised inverse transform.
pub fn inverse(data: &mut [Complex64]) {
    plan(data.len(), true).process(data);
}

/// Forward transform of real samples zero-padded to length `n`.
pub fn forward_real(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (b, &v) in buf.iter_mut().zip(values) {
        b.re = v;
    }
    forward(&mut buf);
    buf
}

/// Inverse transform returning the real part, normalised by `1/n`.
pub fn inverse_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = spectrum.len() as f64;
    inverse(&mut spectrum);
    spectrum.into_iter().map(|c| c.re / n).collect()
}

/// Angular frequencies of an `n`-point transform with sample spacing `dx`,
/// in standard FFT order.
pub fn frequencies(n: usize, dx: f64) -> Vec<f64> {
    let base = 2.0 * PI / (n as f64 * dx);
    (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            // The Nyquist bin is treated as positive; spectra used here are
            // negligible there.
            base * kk
        })
        .collect()
}

pub fn next_len(n: usize) -> usize {
    n.next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let v: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let back = inverse_real(forward_real(&v, 64));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let n = 128;
        let dx = 2.0 * PI / n as f64;
        let v: Vec<f64> = (0..n).map(|i| (3.0 * i as f64 * dx).sin()).collect();
        let freqs = frequencies(n, dx);
        let spec: Vec<Complex64> = forward_real(&v, n)
            .into_iter()
            .zip(&freqs)
            .map(|(c, &w)| c * Complex64::new(0.0, w))
            .collect();
        let d = inverse_real(spec);
        for (i, x) in d.iter().enumerate() {
            assert!((x - 3.0 * (3.0 * i as f64 * dx).cos()).abs() < 1e-11);
        }
    }
}
