//! One-dimensional signal processing for event detection.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("window {window} must exceed polynomial order {order}")]
    WindowTooSmall { window: usize, order: usize },
    #[error("series of length {len} is shorter than required {required}")]
    TooShort { len: usize, required: usize },
    #[error("range [{lo}, {hi}] is invalid for series of length {len}")]
    BadRange { lo: usize, hi: usize, len: usize },
    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),
}

type Coefficients = Arc<Vec<f64>>;

fn coefficient_cache() -> &'static RwLock<HashMap<(usize, usize), Coefficients>> {
    static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Coefficients>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Smoothing weights for the center sample: the first row of the
/// pseudo-inverse of the Vandermonde matrix over offsets `-h..=h`.
fn compute_coefficients(window: usize, order: usize) -> Vec<f64> {
    let h = (window / 2) as f64;
    let a = DMatrix::from_fn(window, order + 1, |i, k| (i as f64 - h).powi(k as i32));
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .expect("Vandermonde normal matrix is invertible for window > order");
    let pinv = inv * a.transpose();
    pinv.row(0).iter().copied().collect()
}

fn coefficients(window: usize, order: usize) -> Coefficients {
    let key = (window, order);
    if let Some(c) = coefficient_cache().read().expect("cache lock").get(&key) {
        return Arc::clone(c);
    }
    let mut w = coefficient_cache().write().expect("cache lock");
    Arc::clone(
        w.entry(key)
            .or_insert_with(|| Arc::new(compute_coefficients(window, order))),
    )
}

fn check_finite(s: &[f64]) -> Result<(), SignalError> {
    match s.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SignalError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Reflect an out-of-range index back into `0..n` without repeating the
/// edge sample.
fn mirror_index(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    let mut i = i;
    while i < 0 || i > last {
        if i < 0 {
            i = -i;
        }
        if i > last {
            i = 2 * last - i;
        }
    }
    i as usize
}

/// Savitzky-Golay smoothing with mirror padding at both ends.
pub fn savgol_smooth(s: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>, SignalError> {
    if window % 2 == 0 {
        return Err(SignalError::EvenWindow(window));
    }
    if window <= poly_order {
        return Err(SignalError::WindowTooSmall {
            window,
            order: poly_order,
        });
    }
    if s.len() < window {
        return Err(SignalError::TooShort {
            len: s.len(),
            required: window,
        });
    }
    check_finite(s)?;
    let c = coefficients(window, poly_order);
    let n = s.len();
    let h = (window / 2) as isize;
    let out = (0..n as isize)
        .map(|t| {
            c.iter()
                .enumerate()
                .map(|(k, w)| w * s[mirror_index(t + k as isize - h, n)])
                .sum()
        })
        .collect();
    Ok(out)
}

/// Numerical first derivative in units of value per frame: central
/// differences inside, one-sided differences at the two ends.
pub fn derivative(s: &[f64]) -> Result<Vec<f64>, SignalError> {
    let n = s.len();
    if n < 3 {
        return Err(SignalError::TooShort { len: n, required: 3 });
    }
    check_finite(s)?;
    let mut d = Vec::with_capacity(n);
    d.push(s[1] - s[0]);
    d.extend(s.windows(3).map(|w| 0.5 * (w[2] - w[0])));
    d.push(s[n - 1] - s[n - 2]);
    Ok(d)
}

/// Strict local minima. A flat run counts once, at its first index, when
/// both neighbours of the run are strictly greater.
pub fn local_minima(s: &[f64]) -> Vec<usize> {
    let n = s.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if s[i - 1] > s[i] {
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] > s[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Smallest index in `lo..=hi` attaining the maximum.
pub fn argmax_in_range(s: &[f64], lo: usize, hi: usize) -> Result<usize, SignalError> {
    if lo > hi || hi >= s.len() {
        return Err(SignalError::BadRange { lo, hi, len: s.len() });
    }
    let mut best = lo;
    for i in lo + 1..=hi {
        if s[i] > s[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fits a polynomial to one window by solving the normal equations
    /// directly and evaluates it at the center.
    fn window_fit_center(window: &[f64], order: usize) -> f64 {
        let h = (window.len() / 2) as f64;
        let m = order + 1;
        let mut ata = DMatrix::<f64>::zeros(m, m);
        let mut aty = DVector::<f64>::zeros(m);
        for (i, &y) in window.iter().enumerate() {
            let x = i as f64 - h;
            for r in 0..m {
                aty[r] += x.powi(r as i32) * y;
                for c in 0..m {
                    ata[(r, c)] += x.powi((r + c) as i32);
                }
            }
        }
        let beta = ata.lu().solve(&aty).unwrap();
        // polynomial evaluated at offset 0 is the constant term
        beta[0]
    }

    #[test]
    fn constant_is_unchanged() {
        let s = vec![5.0; 50];
        for v in savgol_smooth(&s, 21, 3).unwrap() {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_interior_is_unchanged() {
        let s: Vec<f64> = (0..50).map(f64::from).collect();
        let out = savgol_smooth(&s, 21, 3).unwrap();
        for t in 10..40 {
            assert!((out[t] - s[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_interior_is_reproduced() {
        let s: Vec<f64> = (0..60).map(|t| {
            let t = t as f64;
            0.001 * t.powi(3) - 0.05 * t * t + 2.0 * t - 7.0
        }).collect();
        let out = savgol_smooth(&s, 21, 3).unwrap();
        for t in 10..50 {
            assert!((out[t] - s[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_per_window_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(21..80);
            let s: Vec<f64> = (0..n)
                .map(|t| (t as f64 * 0.2).sin() * 10.0 + rng.random_range(-1.0..1.0))
                .collect();
            let out = savgol_smooth(&s, 21, 3).unwrap();
            for t in 10..n - 10 {
                let oracle = window_fit_center(&s[t - 10..=t + 10], 3);
                assert!((out[t] - oracle).abs() < 1e-9, "t={t}: {} vs {oracle}", out[t]);
            }
        }
    }

    #[test]
    fn boundaries_use_mirror_padding() {
        let s: Vec<f64> = (0..30).map(|t| ((t * 7919) % 13) as f64).collect();
        let out = savgol_smooth(&s, 5, 2).unwrap();
        // padded sequence: s[2], s[1], s[0], s[1], ...
        let padded = [s[2], s[1], s[0], s[1], s[2]];
        assert!((out[0] - window_fit_center(&padded, 2)).abs() < 1e-12);
        let n = s.len();
        let padded_end = [s[n - 3], s[n - 2], s[n - 1], s[n - 2], s[n - 3]];
        assert!((out[n - 1] - window_fit_center(&padded_end, 2)).abs() < 1e-12);
    }

    #[test]
    fn smoothing_parameter_errors() {
        let s = vec![0.0; 30];
        assert_eq!(savgol_smooth(&s, 20, 3), Err(SignalError::EvenWindow(20)));
        assert!(matches!(savgol_smooth(&s, 3, 3), Err(SignalError::WindowTooSmall { .. })));
        assert!(matches!(savgol_smooth(&s[..10], 21, 3), Err(SignalError::TooShort { .. })));
        let mut bad = s.clone();
        bad[4] = f64::NAN;
        assert_eq!(savgol_smooth(&bad, 21, 3), Err(SignalError::NonFinite(4)));
    }

    #[test]
    fn coefficients_are_cached_and_sum_to_one() {
        let a = coefficients(21, 3);
        let b = coefficients(21, 3);
        assert!(Arc::ptr_eq(&a, &b));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let threads: Vec<_> = (0..4)
            .map(|_| std::thread::spawn(|| coefficients(11, 2)))
            .collect();
        let got: Vec<_> = threads.into_iter().map(|t| t.join().unwrap()).collect();
        assert!(got.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn derivative_examples() {
        let ramp: Vec<f64> = (0..10).map(|t| 2.0 * t as f64).collect();
        assert!(derivative(&ramp).unwrap().iter().all(|&d| d == 2.0));
        assert!(derivative(&[4.0; 6]).unwrap().iter().all(|&d| d == 0.0));
        let sq: Vec<f64> = (0..12).map(|t| (t * t) as f64).collect();
        let d = derivative(&sq).unwrap();
        for t in 1..11 {
            assert_eq!(d[t], 2.0 * t as f64);
        }
        assert_eq!(d[0], 1.0);
        assert_eq!(d[11], 21.0);
        assert!(derivative(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn derivative_of_smoothed_constant_is_zero() {
        let s = savgol_smooth(&[3.25; 40], 21, 3).unwrap();
        assert!(derivative(&s).unwrap().iter().all(|d| d.abs() < 1e-12));
    }

    /// Exhaustive definition: i is reported iff it starts a run of equal
    /// values whose left neighbour and the first different right value are
    /// both strictly greater.
    fn minima_oracle(s: &[f64]) -> Vec<usize> {
        let n = s.len();
        (1..n.saturating_sub(1))
            .filter(|&i| {
                if s[i - 1] <= s[i] {
                    return false;
                }
                match (i + 1..n).find(|&k| s[k] != s[i]) {
                    Some(k) => s[k] > s[i],
                    None => false,
                }
            })
            .collect()
    }

    #[test]
    fn local_minima_examples() {
        assert_eq!(local_minima(&[3.0, 1.0, 3.0]), vec![1]);
        assert_eq!(local_minima(&[1.0, 2.0, 3.0, 4.0]), Vec::<usize>::new());
        assert_eq!(local_minima(&[3.0, 1.0, 1.0, 3.0]), vec![1]);
        assert_eq!(local_minima(&[3.0, 1.0, 1.0, 0.0]), Vec::<usize>::new());
        assert_eq!(local_minima(&[3.0, 1.0, 1.0]), Vec::<usize>::new());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_in_range(&[0.0, 5.0, 5.0, 2.0], 0, 3), Ok(1));
        assert_eq!(argmax_in_range(&[0.0, 5.0, 5.0, 2.0], 2, 2), Ok(2));
        assert!(argmax_in_range(&[0.0, 1.0], 1, 0).is_err());
        assert!(argmax_in_range(&[0.0, 1.0], 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn local_minima_match_scan(v in prop::collection::vec(0u8..4, 0..30)) {
            let s: Vec<f64> = v.into_iter().map(f64::from).collect();
            prop_assert_eq!(local_minima(&s), minima_oracle(&s));
        }

        #[test]
        fn argmax_matches_scan(v in prop::collection::vec(-5i32..5, 1..40), a in 0usize..40, b in 0usize..40) {
            let s: Vec<f64> = v.into_iter().map(f64::from).collect();
            let (lo, hi) = (a.min(b) % s.len(), a.max(b) % s.len());
            prop_assume!(lo <= hi);
            let max = s[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let oracle = (lo..=hi).find(|&i| s[i] == max).unwrap();
            prop_assert_eq!(argmax_in_range(&s, lo, hi).unwrap(), oracle);
        }

        #[test]
        fn smoothing_commutes_with_affine_maps(
            v in prop::collection::vec(-10.0f64..10.0, 21..60),
            a in -5.0f64..5.0, b in -100.0f64..100.0,
        ) {
            let base = savgol_smooth(&v, 21, 3).unwrap();
            let mapped: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let out = savgol_smooth(&mapped, 21, 3).unwrap();
            for (o, s) in out.iter().zip(&base) {
                prop_assert!((o - (a * s + b)).abs() < 1e-9);
            }
        }
    }
}
