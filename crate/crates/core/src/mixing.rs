//! The mixing operator and its Beta(2, 2) coefficient sampler.
//!
//! A mixed item is `c * a + (1 - c) * b` in both feature and label space,
//! with `c ~ Beta(2, 2)` (density `6 c (1 - c)` on `[0, 1]`).

use rand::Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mixing coefficient in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixCoefficient<T>(T);

impl<T: Scalar> MixCoefficient<T> {
    pub fn new(c: T) -> Result<Self> {
        if c >= T::zero() && c <= T::one() {
            Ok(Self(c))
        } else {
            Err(Error::InvalidConfig(format!(
                "mix coefficient {c} outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Draw `c ~ Beta(2, 2)` as the median of three uniform draws.
///
/// The k-th order statistic of n i.i.d. uniforms is Beta(k, n + 1 - k), so
/// the median of three is exactly Beta(2, 2).
pub fn sample_mix_coefficient<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> MixCoefficient<T> {
    let a = rng.random_range(T::zero()..T::one());
    let b = rng.random_range(T::zero()..T::one());
    let c = rng.random_range(T::zero()..T::one());
    let median = a.max(b).min(a.min(b).max(c));
    MixCoefficient(median)
}

/// A convex combination of two examples, with audit provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample<T> {
    pub features: Vec<T>,
    pub soft_label: Vec<T>,
    pub anchor_index: usize,
    pub partner_index: usize,
    pub coefficient: T,
}

/// Mix two examples: `c * a + (1 - c) * b` in features and one-hot labels.
///
/// `sources` records the pair's positions in the originating dataset.
pub fn mix_examples<T: Scalar>(
    a: &Example<T>,
    b: &Example<T>,
    c: MixCoefficient<T>,
    num_classes: usize,
    sources: (usize, usize),
) -> Result<MixedExample<T>> {
    if a.features.len() != b.features.len() {
        return Err(Error::DimensionMismatch {
            expected: a.features.len(),
            actual: b.features.len(),
        });
    }
    let cv = c.value();
    let inv = T::one() - cv;
    let features = a
        .features
        .iter()
        .zip(&b.features)
        .map(|(&fa, &fb)| cv * fa + inv * fb)
        .collect();
    let mut soft_label = vec![T::zero(); num_classes];
    soft_label[a.class_index] += cv;
    soft_label[b.class_index] += inv;
    Ok(MixedExample {
        features,
        soft_label,
        anchor_index: sources.0,
        partner_index: sources.1,
        coefficient: cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn beta_moments() {
        let mut rng = StdRng::seed_from_u64(10);
        let n = 1_000_000;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for _ in 0..n {
            let c = sample_mix_coefficient::<f64, _>(&mut rng).value();
            assert!((0.0..=1.0).contains(&c));
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
        assert!((var - 0.05).abs() < 0.002, "variance {var}");
    }

    #[test]
    fn beta_kolmogorov_smirnov() {
        // Analytic CDF of Beta(2, 2) is 3c^2 - 2c^3.
        let mut rng = StdRng::seed_from_u64(11);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_mix_coefficient::<f64, _>(&mut rng).value())
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &c) in draws.iter().enumerate() {
            let cdf = 3.0 * c * c - 2.0 * c * c * c;
            let hi = (i + 1) as f64 / n as f64;
            let lo = i as f64 / n as f64;
            ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn beta_sampler_f32() {
        let mut rng = StdRng::seed_from_u64(12);
        let mean: f32 = (0..10_000)
            .map(|_| sample_mix_coefficient::<f32, _>(&mut rng).value())
            .sum::<f32>()
            / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn coefficient_bounds_checked() {
        assert!(MixCoefficient::new(0.0).is_ok());
        assert!(MixCoefficient::new(1.0).is_ok());
        assert!(MixCoefficient::new(-0.01).is_err());
        assert!(MixCoefficient::new(1.01).is_err());
    }

    #[test]
    fn mix_identity_at_one() {
        let a = Example::new(vec![1.0, 2.0], 0, 0);
        let b = Example::new(vec![-3.0, 4.0], 1, 0);
        let m = mix_examples(&a, &b, MixCoefficient::new(1.0).unwrap(), 2, (0, 1)).unwrap();
        assert_eq!(m.features, a.features);
        assert_eq!(m.soft_label, vec![1.0, 0.0]);
    }

    #[test]
    fn mix_midpoint() {
        let a = Example::new(vec![0.0, 0.0], 0, 0);
        let b = Example::new(vec![2.0, 2.0], 1, 0);
        let m = mix_examples(&a, &b, MixCoefficient::new(0.5).unwrap(), 2, (0, 1)).unwrap();
        assert_eq!(m.features, vec![1.0, 1.0]);
        assert_eq!(m.soft_label, vec![0.5, 0.5]);
    }

    #[test]
    fn mix_symmetry() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..200 {
            let dim = rng.random_range(1..5usize);
            let a = Example::new(
                (0..dim).map(|_| rng.random::<f64>()).collect(),
                rng.random_range(0..3),
                0,
            );
            let b = Example::new(
                (0..dim).map(|_| rng.random::<f64>()).collect(),
                rng.random_range(0..3),
                0,
            );
            let c: f64 = rng.random();
            let m1 = mix_examples(&a, &b, MixCoefficient::new(c).unwrap(), 3, (0, 1)).unwrap();
            let m2 =
                mix_examples(&b, &a, MixCoefficient::new(1.0 - c).unwrap(), 3, (1, 0)).unwrap();
            for (x, y) in m1.features.iter().zip(&m2.features) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
            for (x, y) in m1.soft_label.iter().zip(&m2.soft_label) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn soft_labels_sum_to_one_and_self_mix_is_identity() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..200 {
            let a = Example::new(vec![rng.random::<f64>(), rng.random()], 1, 0);
            let b = Example::new(vec![rng.random::<f64>(), rng.random()], 0, 0);
            let c = sample_mix_coefficient::<f64, _>(&mut rng);
            let m = mix_examples(&a, &b, c, 2, (0, 1)).unwrap();
            let total: f64 = m.soft_label.iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            assert!(m.soft_label.iter().all(|&v| v >= 0.0));

            let self_mix = mix_examples(&a, &a, c, 2, (0, 0)).unwrap();
            for (x, y) in self_mix.features.iter().zip(&a.features) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
            assert_eq!(self_mix.soft_label[1], 1.0);
        }
    }

    #[test]
    fn mix_dimension_mismatch() {
        let a = Example::new(vec![0.0], 0, 0);
        let b = Example::new(vec![0.0, 1.0], 1, 0);
        let r = mix_examples(&a, &b, MixCoefficient::new(0.5).unwrap(), 2, (0, 1));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Soft labels stay on the simplex for any pair and coefficient.
            #[test]
            fn soft_label_on_simplex(
                fa in proptest::collection::vec(-1e3f64..1e3, 1..6),
                ca in 0usize..4,
                cb in 0usize..4,
                c in 0f64..=1.0,
            ) {
                let fb: Vec<f64> = fa.iter().map(|v| -v).collect();
                let a = Example::new(fa, ca, 0);
                let b = Example::new(fb, cb, 0);
                let m = mix_examples(&a, &b, MixCoefficient::new(c).unwrap(), 4, (0, 1)).unwrap();
                let total: f64 = m.soft_label.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(m.soft_label.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
            }

            /// Mixing is symmetric under (a, b, c) -> (b, a, 1 - c).
            #[test]
            fn mix_swap_symmetry(
                fa in proptest::collection::vec(-1e2f64..1e2, 1..5),
                fb_seed in proptest::collection::vec(-1e2f64..1e2, 1..5),
                c in 0f64..=1.0,
            ) {
                let dim = fa.len().min(fb_seed.len());
                let a = Example::new(fa[..dim].to_vec(), 0, 0);
                let b = Example::new(fb_seed[..dim].to_vec(), 1, 0);
                let m1 = mix_examples(&a, &b, MixCoefficient::new(c).unwrap(), 2, (0, 1)).unwrap();
                let m2 =
                    mix_examples(&b, &a, MixCoefficient::new(1.0 - c).unwrap(), 2, (1, 0)).unwrap();
                for (x, y) in m1.features.iter().zip(&m2.features) {
                    prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
                }
            }
        }
    }
}
