//! Data model: labeled examples, datasets, and class distributions.
//!
//! A [`Dataset`] is an ordered collection of [`Example`]s with known class and
//! domain cardinalities. Class and domain labels are dense integer indices
//! starting at zero; string labels are mapped at CSV ingestion. Everything is
//! immutable after construction, so datasets can be shared across threads.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One labeled instance: a dense feature vector plus class and domain indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub features: Vec<T>,
    pub class_index: usize,
    pub domain_index: usize,
}

impl<T: Scalar> Example<T> {
    pub fn new(features: Vec<T>, class_index: usize, domain_index: usize) -> Self {
        Self {
            features,
            class_index,
            domain_index,
        }
    }

    /// One-hot label vector of length `num_classes`.
    pub fn one_hot(&self, num_classes: usize) -> Vec<T> {
        let mut v = vec![T::zero(); num_classes];
        v[self.class_index] = T::one();
        v
    }
}

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

/// An ordered, immutable collection of examples with declared cardinalities.
///
/// Group indices follow row-major order: group of an example is
/// `class_index * num_domains + domain_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    examples: Vec<Example<T>>,
    num_classes: usize,
    num_domains: usize,
    feature_dim: usize,
    split: Split,
    class_counts: Vec<usize>,
    domain_counts: Vec<usize>,
    group_counts: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    /// Build a dataset with explicit cardinalities, validating every example.
    pub fn new(
        examples: Vec<Example<T>>,
        num_classes: usize,
        num_domains: usize,
        split: Split,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if num_domains < 1 {
            return Err(Error::InvalidConfig(format!(
                "num_domains must be >= 1, got {num_domains}"
            )));
        }
        let feature_dim = examples[0].features.len();
        let mut class_counts = vec![0usize; num_classes];
        let mut domain_counts = vec![0usize; num_domains];
        let mut group_counts = vec![0usize; num_classes * num_domains];
        for (index, ex) in examples.iter().enumerate() {
            if ex.class_index >= num_classes {
                return Err(Error::InvalidExample {
                    index,
                    message: format!(
                        "class index {} out of range (num_classes = {num_classes})",
                        ex.class_index
                    ),
                });
            }
            if ex.domain_index >= num_domains {
                return Err(Error::InvalidExample {
                    index,
                    message: format!(
                        "domain index {} out of range (num_domains = {num_domains})",
                        ex.domain_index
                    ),
                });
            }
            if ex.features.len() != feature_dim {
                return Err(Error::InvalidExample {
                    index,
                    message: format!(
                        "feature length {} differs from first example ({feature_dim})",
                        ex.features.len()
                    ),
                });
            }
            class_counts[ex.class_index] += 1;
            domain_counts[ex.domain_index] += 1;
            group_counts[ex.class_index * num_domains + ex.domain_index] += 1;
        }
        Ok(Self {
            examples,
            num_classes,
            num_domains,
            feature_dim,
            split,
            class_counts,
            domain_counts,
            group_counts,
        })
    }

    /// Build a dataset inferring cardinalities as `max index + 1`.
    pub fn infer(examples: Vec<Example<T>>, split: Split) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let num_classes = examples
            .iter()
            .map(|e| e.class_index + 1)
            .max()
            .unwrap()
            .max(2);
        let num_domains = examples.iter().map(|e| e.domain_index + 1).max().unwrap();
        Self::new(examples, num_classes, num_domains, split)
    }

    pub fn examples(&self) -> &[Example<T>] {
        &self.examples
    }

    pub fn example(&self, index: usize) -> &Example<T> {
        &self.examples[index]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn domain_counts(&self) -> &[usize] {
        &self.domain_counts
    }

    /// Group counts in row-major (class-major) order.
    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    /// Row-major group index of an example.
    pub fn group_index(&self, example_index: usize) -> usize {
        let ex = &self.examples[example_index];
        ex.class_index * self.num_domains + ex.domain_index
    }

    /// Same dataset contents re-tagged with another split.
    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Domain indices observed in the data, ascending.
    pub fn observed_domains(&self) -> Vec<usize> {
        (0..self.num_domains)
            .filter(|&d| self.domain_counts[d] > 0)
            .collect()
    }

    /// New dataset restricted to one domain. Errors if the domain is empty.
    pub fn restrict_to_domain(&self, domain: usize) -> Result<Self> {
        let examples: Vec<_> = self
            .examples
            .iter()
            .filter(|e| e.domain_index == domain)
            .cloned()
            .collect();
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Self::new(examples, self.num_classes, self.num_domains, self.split)
    }

    /// Per-domain datasets for every observed domain, ascending by index.
    pub fn per_domain(&self) -> Vec<(usize, Self)> {
        self.observed_domains()
            .into_iter()
            .map(|d| (d, self.restrict_to_domain(d).expect("observed domain")))
            .collect()
    }
}

/// A probability vector over `C` classes.
///
/// Entries are in `[0, 1]` and sum to 1 within `1e-9`. Zero entries are
/// allowed: the declared number of classes may exceed the observed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ClassDistribution<T> {
    /// Validate and wrap a probability vector.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution {
                message: "empty probability vector".into(),
            });
        }
        let mut sum = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidDistribution {
                    message: format!("entry {i} = {p} outside [0, 1]"),
                });
            }
            sum += p;
        }
        if (sum - T::one()).abs() > T::cast(1e-9) {
            return Err(Error::InvalidDistribution {
                message: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `num_classes` classes.
    pub fn uniform(num_classes: usize) -> Self {
        let p = T::one() / T::from_count(num_classes);
        Self {
            probs: vec![p; num_classes],
        }
    }

    /// Normalized counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let t = T::from_count(total);
        Self::new(counts.iter().map(|&c| T::from_count(c) / t).collect())
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, class: usize) -> T {
        self.probs[class]
    }
}

/// Empirical class distribution: `probs[k] = count(class k) / |data|`.
pub fn empirical_class_distribution<T: Scalar>(data: &Dataset<T>) -> Result<ClassDistribution<T>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ClassDistribution::from_counts(data.class_counts())
}

/// Empirical (class, domain) group distribution in row-major order.
pub fn empirical_group_distribution<T: Scalar>(data: &Dataset<T>) -> Result<Vec<T>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = T::from_count(data.len());
    Ok(data
        .group_counts()
        .iter()
        .map(|&c| T::from_count(c) / n)
        .collect())
}

/// Empirical domain distribution.
pub fn empirical_domain_distribution<T: Scalar>(data: &Dataset<T>) -> Result<Vec<T>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = T::from_count(data.len());
    Ok(data
        .domain_counts()
        .iter()
        .map(|&c| T::from_count(c) / n)
        .collect())
}

/// Shannon entropy in nats, with `0 ln 0 := 0`.
pub fn entropy<T: Scalar>(p: &ClassDistribution<T>) -> T {
    entropy_of(p.probs())
}

/// Entropy of a raw probability slice (same convention as [`entropy`]).
pub fn entropy_of<T: Scalar>(probs: &[T]) -> T {
    let mut h = T::zero();
    for &p in probs {
        if p > T::zero() {
            h -= p * p.ln();
        }
    }
    h
}
