use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Feature-space analogues of the weak (flip/jitter) and strong
/// (RandAugment-style) image augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub weak_sigma: f64,
    pub weak_scale: [f64; 2],
    pub strong_sigma: f64,
    pub strong_mask_frac: f64,
    pub strong_scale: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            weak_sigma: 0.05,
            weak_scale: [0.95, 1.05],
            strong_sigma: 0.25,
            strong_mask_frac: 0.2,
            strong_scale: [0.8, 1.2],
        }
    }
}

impl AugmentConfig {
    /// Both views equal the input.
    pub fn identity() -> Self {
        AugmentConfig {
            weak_sigma: 0.0,
            weak_scale: [1.0, 1.0],
            strong_sigma: 0.0,
            strong_mask_frac: 0.0,
            strong_scale: [1.0, 1.0],
        }
    }
}

fn gauss(rng: &mut impl Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// `s·x + ε`, `s ~ U[weak_scale]`, `ε ~ N(0, weak_sigma²)`.
pub fn weak_augment(x: &[f64], cfg: &AugmentConfig, rng: &mut impl Rng) -> Vec<f64> {
    let s = rng.random_range(cfg.weak_scale[0]..=cfg.weak_scale[1]);
    x.iter().map(|&v| s * v + gauss(rng, cfg.weak_sigma)).collect()
}

/// `m ⊙ (s·x + ε)` where `m` zeroes `round(strong_mask_frac · D)` random coordinates.
pub fn strong_augment(x: &[f64], cfg: &AugmentConfig, rng: &mut impl Rng) -> Vec<f64> {
    let s = rng.random_range(cfg.strong_scale[0]..=cfg.strong_scale[1]);
    let mut out: Vec<f64> = x.iter().map(|&v| s * v + gauss(rng, cfg.strong_sigma)).collect();
    let k = ((cfg.strong_mask_frac.clamp(0.0, 1.0) * x.len() as f64).round() as usize).min(x.len());
    for i in index::sample(rng, x.len(), k) {
        out[i] = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn null_weak_is_identity() {
        let cfg = AugmentConfig::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0, 0.5];
        assert_eq!(weak_augment(&x, &cfg, &mut rng), x);
        assert_eq!(strong_augment(&x, &cfg, &mut rng), x);
    }

    #[test]
    fn dimensions_preserved() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..20 {
            let x = vec![0.3; d];
            assert_eq!(weak_augment(&x, &cfg, &mut rng).len(), d);
            assert_eq!(strong_augment(&x, &cfg, &mut rng).len(), d);
        }
    }

    #[test]
    fn weak_perturbation_norm_is_sigma_sqrt_d() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 16;
        let x = vec![0.0; d];
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| dist(&weak_augment(&x, &cfg, &mut rng), &x)).sum::<f64>() / n as f64;
        let expected = cfg.weak_sigma * (d as f64).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.1, "{} vs {}", mean, expected);
    }

    #[test]
    fn strong_perturbs_more_than_weak() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) / 4.0).collect();
        let n = 10_000;
        let weak: f64 = (0..n).map(|_| dist(&weak_augment(&x, &cfg, &mut rng), &x)).sum::<f64>() / n as f64;
        let strong: f64 = (0..n).map(|_| dist(&strong_augment(&x, &cfg, &mut rng), &x)).sum::<f64>() / n as f64;
        assert!(strong > weak, "strong {} weak {}", strong, weak);
    }

    #[test]
    fn full_mask_without_noise_is_zero() {
        let cfg = AugmentConfig { strong_sigma: 0.0, strong_mask_frac: 1.0, ..AugmentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(strong_augment(&[1.0, 2.0, 3.0], &cfg, &mut rng).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_under_fixed_stream() {
        let cfg = AugmentConfig::default();
        let x = vec![0.1; 8];
        let a = strong_augment(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = strong_augment(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
