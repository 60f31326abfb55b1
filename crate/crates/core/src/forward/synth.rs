//! Synthetic test images and seeded observation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Complex;
use crate::image::ImageField;

/// Piecewise-constant scene with intensities in `[0, 255]`: a bright square,
/// a disc, a bar and a mid-grey background gradient in steps.
pub fn shapes_phantom(width: usize, height: usize) -> ImageField {
    let (w, h) = (width as f64, height as f64);
    let mut data = vec![0.0; width * height];
    for i in 0..height {
        for j in 0..width {
            let (u, v) = ((j as f64 + 0.5) / w, (i as f64 + 0.5) / h);
            let mut val = if v < 0.5 { 40.0 } else { 80.0 };
            if (0.1..0.4).contains(&u) && (0.1..0.4).contains(&v) {
                val = 220.0;
            }
            if (u - 0.68).powi(2) + (v - 0.32).powi(2) < 0.17f64.powi(2) {
                val = 160.0;
            }
            if (0.2..0.8).contains(&u) && (0.62..0.72).contains(&v) {
                val = 250.0;
            }
            if (u - 0.3).powi(2) + (v - 0.85).powi(2) < 0.06f64.powi(2) {
                val = 0.0;
            }
            data[i * width + j] = val;
        }
    }
    ImageField {
        data,
        width,
        height,
    }
}

/// Modified Shepp-Logan head phantom with intensities in `[0, 1]`.
pub fn shepp_logan(width: usize, height: usize) -> ImageField {
    // (intensity, a, b, x0, y0, phi in degrees)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    let mut data = vec![0.0; width * height];
    for i in 0..height {
        for j in 0..width {
            let x = 2.0 * (j as f64 + 0.5) / width as f64 - 1.0;
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / height as f64;
            let mut v = 0.0;
            for &(a0, a, b, x0, y0, phi) in &ELLIPSES {
                let (s, c) = phi.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let xr = dx * c + dy * s;
                let yr = -dx * s + dy * c;
                if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                    v += a0;
                }
            }
            data[i * width + j] = v.max(0.0);
        }
    }
    ImageField {
        data,
        width,
        height,
    }
}

/// `count` distinct nonzero pixels with intensities in `[64, 255]` on a zero
/// background, at seeded positions.
pub fn sparse_spikes(width: usize, height: usize, count: usize, seed: u64) -> ImageField {
    let d = width * height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; d];
    let mut placed = 0;
    while placed < count.min(d) {
        let k = rng.random_range(0..d);
        if data[k] == 0.0 {
            data[k] = rng.random_range(64.0..=255.0);
            placed += 1;
        }
    }
    ImageField {
        data,
        width,
        height,
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise drawn in row-major order.
pub fn add_gaussian_noise(x: &ImageField, sigma: f64, seed: u64) -> ImageField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = x
        .data
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    ImageField {
        data,
        width: x.width,
        height: x.height,
    }
}

/// Adds circular complex Gaussian noise with `E|n|^2 = sigma^2` per real
/// part, i.e. independent `N(0, sigma^2)` real and imaginary parts.
pub fn add_complex_noise(y: &[Complex], sigma: f64, seed: u64) -> Vec<Complex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    y.iter()
        .map(|v| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            v + Complex::new(sigma * a, sigma * b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spikes_are_sparse_and_seeded() {
        let a = sparse_spikes(16, 8, 10, 3);
        assert_eq!(a.data.iter().filter(|v| **v != 0.0).count(), 10);
        assert!(a
            .data
            .iter()
            .all(|v| *v == 0.0 || (64.0..=255.0).contains(v)));
        assert_eq!(a, sparse_spikes(16, 8, 10, 3));
        assert_ne!(a, sparse_spikes(16, 8, 10, 4));
        assert_eq!(
            sparse_spikes(2, 2, 9, 0)
                .data
                .iter()
                .filter(|v| **v != 0.0)
                .count(),
            4
        );
    }

    #[test]
    fn phantoms_are_in_range() {
        let s = shapes_phantom(32, 32);
        let (lo, hi) = s.min_max();
        assert!(lo >= 0.0 && hi <= 255.0 && hi > lo);
        let p = shepp_logan(32, 32);
        let (lo, hi) = p.min_max();
        assert!(lo >= 0.0 && hi <= 1.0 + 1e-12 && hi > 0.5);
    }

    #[test]
    fn noise_is_seeded() {
        let x = ImageField::zeros(8, 8);
        assert_eq!(
            add_gaussian_noise(&x, 1.0, 3),
            add_gaussian_noise(&x, 1.0, 3)
        );
        assert_ne!(
            add_gaussian_noise(&x, 1.0, 3),
            add_gaussian_noise(&x, 1.0, 4)
        );
    }
}
