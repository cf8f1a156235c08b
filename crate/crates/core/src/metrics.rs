//! Evaluation metrics and distribution-shift diagnostics.

use crate::data::{empirical_class_distribution, entropy, ClassDistribution, Dataset};
use crate::error::{Error, Result};
use crate::model::{forward_predict, Model};
use crate::scalar::Scalar;

/// Argmax with ties resolved to the lowest index.
fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn predictions<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<Vec<usize>> {
    data.examples()
        .iter()
        .map(|ex| Ok(argmax(&forward_predict(model, &ex.features)?)))
        .collect()
}

/// Positive-class scores for binary tasks.
fn positive_scores<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<Vec<T>> {
    data.examples()
        .iter()
        .map(|ex| Ok(forward_predict(model, &ex.features)?[1]))
        .collect()
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<T> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predictions(model, data)?;
    let correct = preds
        .iter()
        .zip(data.examples())
        .filter(|(&p, ex)| p == ex.class_index)
        .count();
    Ok(T::from_count(correct) / T::from_count(data.len()))
}

/// Minimum within-group accuracy over observed (class, domain) groups.
pub fn worst_group_accuracy<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<T> {
    let report = evaluate(model, data)?;
    Ok(report.worst_group_accuracy)
}

/// Mann-Whitney AUROC: `(concordant + 0.5 * tied) / (n_pos * n_neg)`,
/// computed with the O(n log n) rank formulation.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "auroc needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks across ties (1-based).
    let mut rank_sum_pos = T::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = T::from_count(i + 1 + j + 1) / T::cast(2.0);
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_t = T::from_count(n_pos);
    let u = rank_sum_pos - n_pos_t * (n_pos_t + T::one()) / T::cast(2.0);
    Ok(u / (n_pos_t * T::from_count(n_neg)))
}

/// Divergence between two class distributions of equal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    Kl,
    TotalVariation,
}

/// KL uses `q' = (q + eps) / (1 + C * eps)` with `eps = 1e-6` so empty test
/// classes stay finite; total variation is `0.5 * sum |p - q|`.
pub fn distribution_divergence<T: Scalar>(
    p: &ClassDistribution<T>,
    q: &ClassDistribution<T>,
    kind: DivergenceKind,
) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    match kind {
        DivergenceKind::Kl => {
            let eps = T::cast(1e-6);
            let norm = T::one() + T::from_count(p.len()) * eps;
            let mut kl = T::zero();
            for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
                if pi > T::zero() {
                    let q_smoothed = (qi + eps) / norm;
                    kl += pi * (pi / q_smoothed).ln();
                }
            }
            Ok(kl)
        }
        DivergenceKind::TotalVariation => {
            let mut tv = T::zero();
            for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
                tv += (pi - qi).abs();
            }
            Ok(tv * T::cast(0.5))
        }
    }
}

/// Mean over test examples of the minimum Euclidean distance to any training
/// example's features.
pub fn nn_covariate_divergence<T: Scalar>(train: &Dataset<T>, test: &Dataset<T>) -> Result<T> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.feature_dim(),
            actual: test.feature_dim(),
        });
    }
    let mut total = T::zero();
    for test_ex in test.examples() {
        let mut best = T::infinity();
        for train_ex in train.examples() {
            let mut dist_sq = T::zero();
            for (&a, &b) in test_ex.features.iter().zip(&train_ex.features) {
                let d = a - b;
                dist_sq += d * d;
            }
            if dist_sq < best {
                best = dist_sq;
            }
        }
        total += best.sqrt();
    }
    Ok(total / T::from_count(test.len()))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::UndefinedMetric(
            "pearson correlation needs at least 3 points".into(),
        ));
    }
    let n = T::from_count(xs.len());
    let mean_x = xs.iter().copied().sum::<T>() / n;
    let mean_y = ys.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut var_x = T::zero();
    let mut var_y = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == T::zero() || var_y == T::zero() {
        return Err(Error::UndefinedMetric(
            "pearson correlation undefined for zero variance".into(),
        ));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Per-domain class-balance diagnostics, ordered by domain index.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainUniformity<T> {
    pub domain: usize,
    pub n: usize,
    /// Minimum class frequency; reported for binary tasks only.
    pub minority_class_ratio: Option<T>,
    /// Entropy (nats) of the domain's class distribution.
    pub class_entropy: T,
}

/// Class-uniformity report per observed domain.
pub fn uniformity_shift_report<T: Scalar>(data: &Dataset<T>) -> Result<Vec<DomainUniformity<T>>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut report = Vec::new();
    for (domain, subset) in data.per_domain() {
        let dist = empirical_class_distribution(&subset)?;
        let minority = (data.num_classes() == 2).then(|| {
            dist.probs()
                .iter()
                .copied()
                .fold(T::infinity(), |a, b| a.min(b))
        });
        report.push(DomainUniformity {
            domain,
            n: subset.len(),
            minority_class_ratio: minority,
            class_entropy: entropy(&dist),
        });
    }
    Ok(report)
}

/// Accuracy of one (class, domain) group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy<T> {
    pub class: usize,
    pub domain: usize,
    pub n: usize,
    pub accuracy: T,
}

/// Per-domain accuracy (and AUROC on binary tasks).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMetrics<T> {
    pub domain: usize,
    pub n: usize,
    pub accuracy: T,
    pub auroc: Option<T>,
}

/// Full evaluation of a model on one dataset.
///
/// Serializes to one CSV row per (run, split, domain) — see
/// [`REPORT_CSV_HEADER`] and [`EvaluationReport::to_csv_rows`]; the `all`
/// domain row carries the overall and worst-case metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport<T> {
    pub n: usize,
    pub overall_accuracy: T,
    /// AUROC over all examples; binary tasks with both classes present only.
    pub overall_auroc: Option<T>,
    pub per_group: Vec<GroupAccuracy<T>>,
    pub worst_group_accuracy: T,
    pub per_domain: Vec<DomainMetrics<T>>,
    pub worst_domain_accuracy: T,
    pub worst_domain_auroc: Option<T>,
    /// (class, domain) groups absent from the data, skipped from the minimum.
    pub skipped_groups: Vec<(usize, usize)>,
}

/// Column names for [`EvaluationReport::to_csv_rows`].
pub const REPORT_CSV_HEADER: &str =
    "strategy,seed,split,domain,n,accuracy,worst_group_accuracy,worst_domain_accuracy,auroc";

impl<T: Scalar> EvaluationReport<T> {
    /// One row for the whole split (`domain = all`) followed by one row per
    /// observed domain. Optional metrics render as empty fields.
    pub fn to_csv_rows(&self, strategy: &str, seed: u64, split: &str) -> Vec<String> {
        let opt = |v: Option<T>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut rows = vec![format!(
            "{strategy},{seed},{split},all,{},{},{},{},{}",
            self.n,
            self.overall_accuracy,
            self.worst_group_accuracy,
            self.worst_domain_accuracy,
            opt(self.overall_auroc),
        )];
        for dm in &self.per_domain {
            rows.push(format!(
                "{strategy},{seed},{split},{},{},{},,,{}",
                dm.domain,
                dm.n,
                dm.accuracy,
                opt(dm.auroc),
            ));
        }
        rows
    }
}

/// Evaluate a model: overall, per-group, per-domain and worst-case metrics.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<EvaluationReport<T>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predictions(model, data)?;
    let binary = data.num_classes() == 2;
    let scores = if binary {
        Some(positive_scores(model, data)?)
    } else {
        None
    };
    let labels: Vec<bool> = data
        .examples()
        .iter()
        .map(|ex| ex.class_index == 1)
        .collect();

    let correct: Vec<bool> = preds
        .iter()
        .zip(data.examples())
        .map(|(&p, ex)| p == ex.class_index)
        .collect();
    let overall_accuracy =
        T::from_count(correct.iter().filter(|&&c| c).count()) / T::from_count(data.len());

    let auroc_of = |idx: &[usize]| -> Option<T> {
        let scores = scores.as_ref()?;
        let s: Vec<T> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        auroc(&s, &l).ok()
    };

    let all_indices: Vec<usize> = (0..data.len()).collect();
    let overall_auroc = auroc_of(&all_indices);

    let num_domains = data.num_domains();
    let mut per_group = Vec::new();
    let mut skipped_groups = Vec::new();
    let mut worst_group_accuracy = T::infinity();
    for class in 0..data.num_classes() {
        for domain in 0..num_domains {
            let indices: Vec<usize> = (0..data.len())
                .filter(|&i| {
                    let ex = data.example(i);
                    ex.class_index == class && ex.domain_index == domain
                })
                .collect();
            if indices.is_empty() {
                skipped_groups.push((class, domain));
                continue;
            }
            let acc = T::from_count(indices.iter().filter(|&&i| correct[i]).count())
                / T::from_count(indices.len());
            if acc < worst_group_accuracy {
                worst_group_accuracy = acc;
            }
            per_group.push(GroupAccuracy {
                class,
                domain,
                n: indices.len(),
                accuracy: acc,
            });
        }
    }

    let mut per_domain = Vec::new();
    let mut worst_domain_accuracy = T::infinity();
    let mut worst_domain_auroc: Option<T> = None;
    for domain in data.observed_domains() {
        let indices: Vec<usize> = (0..data.len())
            .filter(|&i| data.example(i).domain_index == domain)
            .collect();
        let acc = T::from_count(indices.iter().filter(|&&i| correct[i]).count())
            / T::from_count(indices.len());
        if acc < worst_domain_accuracy {
            worst_domain_accuracy = acc;
        }
        let domain_auroc = auroc_of(&indices);
        if let Some(a) = domain_auroc {
            worst_domain_auroc = Some(match worst_domain_auroc {
                None => a,
                Some(w) => w.min(a),
            });
        }
        per_domain.push(DomainMetrics {
            domain,
            n: indices.len(),
            accuracy: acc,
            auroc: domain_auroc,
        });
    }

    Ok(EvaluationReport {
        n: data.len(),
        overall_accuracy,
        overall_auroc,
        per_group,
        worst_group_accuracy,
        per_domain,
        worst_domain_accuracy,
        worst_domain_auroc,
        skipped_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, Split};
    use crate::model::{Arch, Model, ModelSpec};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn model_with_params(d: usize, c: usize, params: &[f64]) -> Model<f64> {
        let mut model = Model::init(ModelSpec {
            arch: Arch::Linear,
            input_dim: d,
            num_classes: c,
            init_scale: 0.1,
            seed: 0,
        })
        .unwrap();
        for (k, &v) in params.iter().enumerate() {
            model.set_param(k, v);
        }
        model
    }

    /// Linear model predicting class 0 always (large positive bias).
    fn constant_class0_model(d: usize) -> Model<f64> {
        let mut params = vec![0.0; 2 * d + 2];
        params[2 * d] = 10.0; // bias of class 0
        model_with_params(d, 2, &params)
    }

    /// Model predicting the class encoded in feature 0 (sign).
    fn sign_model() -> Model<f64> {
        // logit_0 = -w * x0, logit_1 = w * x0
        model_with_params(1, 2, &[-5.0, 5.0, 0.0, 0.0])
    }

    fn dataset(rows: &[(f64, usize, usize)]) -> Dataset<f64> {
        let examples: Vec<Example<f64>> = rows
            .iter()
            .map(|&(x, c, d)| Example::new(vec![x], c, d))
            .collect();
        Dataset::infer(examples, Split::Test).unwrap()
    }

    #[test]
    fn accuracy_majority_predictor() {
        let data = dataset(&[(0.0, 0, 0), (0.0, 0, 0), (0.0, 0, 0), (0.0, 1, 0)]);
        let model = constant_class0_model(1);
        assert_relative_eq!(accuracy(&model, &data).unwrap(), 0.75);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        // Zeroed model gives uniform probabilities: ties resolve to class 0.
        let model = model_with_params(1, 3, &[0.0; 6]);
        let data = dataset(&[(1.0, 0, 0), (2.0, 1, 0), (3.0, 2, 0)]);
        assert_relative_eq!(accuracy(&model, &data).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn accuracy_perfect_model() {
        let data = dataset(&[(-1.0, 0, 0), (1.0, 1, 0), (-2.0, 0, 1), (2.0, 1, 1)]);
        assert_relative_eq!(accuracy(&sign_model(), &data).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_decomposes_over_groups() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(5..60);
            let rows: Vec<(f64, usize, usize)> = (0..n)
                .map(|_| {
                    (
                        rng.random::<f64>() * 4.0 - 2.0,
                        rng.random_range(0..2usize),
                        rng.random_range(0..3usize),
                    )
                })
                .collect();
            let data = dataset(&rows);
            let report = evaluate(&sign_model(), &data).unwrap();
            let weighted: f64 = report
                .per_group
                .iter()
                .map(|g| g.accuracy * g.n as f64)
                .sum::<f64>()
                / data.len() as f64;
            assert_relative_eq!(report.overall_accuracy, weighted, epsilon = 1e-12);
            // Worst group is a minimum, so it cannot exceed the mean.
            assert!(report.worst_group_accuracy <= report.overall_accuracy + 1e-12);
            assert!(report.worst_group_accuracy <= report.worst_domain_accuracy + 1e-12);
        }
    }

    #[test]
    fn worst_group_minimum() {
        // Groups: (0,0) and (1,0) predicted perfectly by sign model,
        // (1,1) half wrong.
        let data = dataset(&[
            (-1.0, 0, 0),
            (-2.0, 0, 0),
            (1.0, 1, 0),
            (1.0, 1, 1),
            (-1.0, 1, 1),
        ]);
        let report = evaluate(&sign_model(), &data).unwrap();
        assert_relative_eq!(report.worst_group_accuracy, 0.5);
        assert_eq!(report.skipped_groups, vec![(0, 1)]);
    }

    #[test]
    fn worst_group_perfect_model() {
        let data = dataset(&[(-1.0, 0, 0), (1.0, 1, 0), (-1.0, 0, 1), (1.0, 1, 1)]);
        let report = evaluate(&sign_model(), &data).unwrap();
        assert_relative_eq!(report.worst_group_accuracy, 1.0);
    }

    #[test]
    fn auroc_known_values() {
        let perfect = auroc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_relative_eq!(perfect, 1.0);
        let ties = auroc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap();
        assert_relative_eq!(ties, 0.5);
        let mixed = auroc(&[0.9, 0.2, 0.8, 0.3], &[true, false, false, true]).unwrap();
        assert_relative_eq!(mixed, 0.75);
    }

    #[test]
    fn auroc_single_class_undefined() {
        let err = auroc(&[0.5, 0.2], &[true, true]).unwrap_err();
        assert!(matches!(err, Error::UndefinedMetric(_)));
    }

    #[test]
    fn auroc_negation_complement() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(4..40);
            // Tie-free scores.
            let scores: Vec<f64> = (0..n)
                .map(|i| i as f64 + rng.random::<f64>() * 0.5)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if labels.iter().all(|&l| l) {
                labels[0] = false;
            }
            if labels.iter().all(|&l| !l) {
                labels[0] = true;
            }
            let a = auroc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|&s| -s).collect();
            let b = auroc(&neg, &labels).unwrap();
            assert_relative_eq!(a + b, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn auroc_matches_exhaustive_pair_count() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(4..30);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random::<f64>() * 4.0).round() / 4.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            labels[0] = true;
            labels[1] = false;
            let fast = auroc(&scores, &labels).unwrap();
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] && !labels[j] {
                        den += 1.0;
                        if scores[i] > scores[j] {
                            num += 1.0;
                        } else if scores[i] == scores[j] {
                            num += 0.5;
                        }
                    }
                }
            }
            assert_relative_eq!(fast, num / den, epsilon = 1e-12);
        }
    }

    #[test]
    fn divergence_known_values() {
        let p = ClassDistribution::new(vec![0.77, 0.23]).unwrap();
        let q = ClassDistribution::new(vec![0.5, 0.5]).unwrap();
        let tv = distribution_divergence(&p, &q, DivergenceKind::TotalVariation).unwrap();
        assert_relative_eq!(tv, 0.27, epsilon = 1e-12);

        let kl_self: f64 = distribution_divergence(&p, &p, DivergenceKind::Kl).unwrap();
        assert!(kl_self.abs() < 1e-9, "{kl_self}");
        let tv_self = distribution_divergence(&p, &p, DivergenceKind::TotalVariation).unwrap();
        assert_eq!(tv_self, 0.0);

        let a = ClassDistribution::new(vec![1.0, 0.0]).unwrap();
        let b = ClassDistribution::new(vec![0.0, 1.0]).unwrap();
        let tv_max = distribution_divergence(&a, &b, DivergenceKind::TotalVariation).unwrap();
        assert_relative_eq!(tv_max, 1.0);
        // KL against an empty class stays finite through smoothing.
        let kl: f64 = distribution_divergence(&a, &b, DivergenceKind::Kl).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn kl_zero_iff_equal_within_smoothing() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = raw.iter().sum();
            let p = ClassDistribution::new(raw.iter().map(|v| v / sum).collect()).unwrap();
            let kl = distribution_divergence(&p, &p, DivergenceKind::Kl).unwrap();
            assert!(kl.abs() < 1e-9);
        }
        let p = ClassDistribution::new(vec![0.6, 0.4]).unwrap();
        let q = ClassDistribution::new(vec![0.4, 0.6]).unwrap();
        let kl = distribution_divergence(&p, &q, DivergenceKind::Kl).unwrap();
        assert!(kl > 1e-3);
    }

    #[test]
    fn total_variation_is_a_metric() {
        let mut rng = StdRng::seed_from_u64(5);
        let random_dist = |rng: &mut StdRng, c: usize| {
            let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            ClassDistribution::new(raw.iter().map(|v| v / sum).collect()).unwrap()
        };
        for _ in 0..200 {
            let c = rng.random_range(2..5);
            let a = random_dist(&mut rng, c);
            let b = random_dist(&mut rng, c);
            let cdist = random_dist(&mut rng, c);
            let tv = |x: &ClassDistribution<f64>, y: &ClassDistribution<f64>| {
                distribution_divergence(x, y, DivergenceKind::TotalVariation).unwrap()
            };
            assert_relative_eq!(tv(&a, &b), tv(&b, &a), epsilon = 1e-12);
            assert!(tv(&a, &cdist) <= tv(&a, &b) + tv(&b, &cdist) + 1e-12);
            assert!(tv(&a, &b) >= 0.0);
        }
    }

    #[test]
    fn nn_divergence_known_values() {
        let train = dataset(&[(0.0, 0, 0), (1.0, 1, 0)]);
        // Subset of train: zero divergence.
        let test = dataset(&[(1.0, 1, 0)]);
        assert_relative_eq!(nn_covariate_divergence(&train, &test).unwrap(), 0.0);

        let train =
            Dataset::new(vec![Example::new(vec![0.0, 0.0], 0, 0)], 2, 1, Split::Train).unwrap();
        let test =
            Dataset::new(vec![Example::new(vec![3.0, 4.0], 0, 0)], 2, 1, Split::Test).unwrap();
        assert_relative_eq!(nn_covariate_divergence(&train, &test).unwrap(), 5.0);
    }

    #[test]
    fn nn_divergence_permutation_and_translation_invariant() {
        let mut rng = StdRng::seed_from_u64(6);
        let make = |rng: &mut StdRng, n: usize, shift: f64| {
            let examples: Vec<Example<f64>> = (0..n)
                .map(|_| {
                    Example::new(
                        vec![rng.random::<f64>() + shift, rng.random::<f64>() + shift],
                        0,
                        0,
                    )
                })
                .collect();
            Dataset::new(examples, 2, 1, Split::Train).unwrap()
        };
        let train = make(&mut rng, 20, 0.0);
        let test = make(&mut rng, 10, 0.5);
        let base = nn_covariate_divergence(&train, &test).unwrap();

        // Permute both sets.
        let mut train_ex = train.examples().to_vec();
        train_ex.reverse();
        let train_perm = Dataset::new(train_ex, 2, 1, Split::Train).unwrap();
        let mut test_ex = test.examples().to_vec();
        test_ex.rotate_left(3);
        let test_perm = Dataset::new(test_ex, 2, 1, Split::Test).unwrap();
        assert_relative_eq!(
            nn_covariate_divergence(&train_perm, &test_perm).unwrap(),
            base,
            epsilon = 1e-12
        );

        // Translate both sets identically.
        let translate = |d: &Dataset<f64>| {
            let examples: Vec<Example<f64>> = d
                .examples()
                .iter()
                .map(|e| {
                    Example::new(
                        e.features.iter().map(|v| v + 11.25).collect(),
                        e.class_index,
                        e.domain_index,
                    )
                })
                .collect();
            Dataset::new(examples, 2, 1, d.split()).unwrap()
        };
        assert_relative_eq!(
            nn_covariate_divergence(&translate(&train), &translate(&test)).unwrap(),
            base,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pearson_known_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_relative_eq!(pearson_correlation(&xs, &ys).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_relative_eq!(
            pearson_correlation(&xs, &neg).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            pearson_correlation(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_degenerate_inputs() {
        assert!(matches!(
            pearson_correlation(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn uniformity_report_values() {
        // Domain 0: 80/20, domain 1: 50/50.
        let mut rows = Vec::new();
        for _ in 0..8 {
            rows.push((0.0, 0usize, 0usize));
        }
        for _ in 0..2 {
            rows.push((0.0, 1, 0));
        }
        for _ in 0..5 {
            rows.push((0.0, 0, 1));
            rows.push((0.0, 1, 1));
        }
        let data = dataset(&rows);
        let report = uniformity_shift_report(&data).unwrap();
        assert_eq!(report.len(), 2);
        assert_relative_eq!(report[0].minority_class_ratio.unwrap(), 0.2);
        assert_relative_eq!(report[1].minority_class_ratio.unwrap(), 0.5);
        assert_relative_eq!(
            report[1].class_entropy,
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uniformity_report_uniform_domains() {
        let mut rows = Vec::new();
        for d in 0..3 {
            for c in 0..2 {
                for _ in 0..4 {
                    rows.push((0.0, c, d));
                }
            }
        }
        let data = dataset(&rows);
        for entry in uniformity_shift_report(&data).unwrap() {
            assert_relative_eq!(entry.class_entropy, std::f64::consts::LN_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn report_metrics_within_ranges_on_fuzzed_inputs() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.random_range(4..50);
            let rows: Vec<(f64, usize, usize)> = (0..n)
                .map(|_| {
                    (
                        rng.random::<f64>() * 6.0 - 3.0,
                        rng.random_range(0..2usize),
                        rng.random_range(0..2usize),
                    )
                })
                .collect();
            let data = dataset(&rows);
            let model = Model::init(ModelSpec {
                arch: Arch::Linear,
                input_dim: 1,
                num_classes: 2,
                init_scale: 1.0,
                seed: trial,
            })
            .unwrap();
            let report = evaluate(&model, &data).unwrap();
            let in_unit = |v: f64| (0.0..=1.0).contains(&v);
            assert!(in_unit(report.overall_accuracy));
            assert!(in_unit(report.worst_group_accuracy));
            assert!(in_unit(report.worst_domain_accuracy));
            assert!(report.worst_group_accuracy <= report.overall_accuracy + 1e-12);
            assert!(report.worst_group_accuracy <= report.worst_domain_accuracy + 1e-12);
            if let Some(a) = report.overall_auroc {
                assert!(in_unit(a));
            }
        }
    }

    #[test]
    fn csv_rows_shape() {
        let data = dataset(&[(-1.0, 0, 0), (1.0, 1, 0), (1.0, 1, 1), (-1.0, 0, 1)]);
        let report = evaluate(&sign_model(), &data).unwrap();
        let rows = report.to_csv_rows("erm", 3, "test");
        assert_eq!(rows.len(), 3);
        assert!(rows[0].starts_with("erm,3,test,all,4,1,1,1,"));
        assert_eq!(
            REPORT_CSV_HEADER.split(',').count(),
            rows[0].split(',').count()
        );
        assert_eq!(
            REPORT_CSV_HEADER.split(',').count(),
            rows[1].split(',').count()
        );
    }
}
