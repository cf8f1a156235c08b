//! Pair selection: the `Paired(anchor, partner)` predicate, partner sampling,
//! and the closed-form class distribution of the selected partners.
//!
//! Selecting partners under a "different class" criterion implicitly
//! resamples the class distribution: averaging the anchor and partner
//! distributions yields something strictly closer to uniform unless the
//! original was already uniform. Under class-uniform selection the partner
//! distribution has the closed form `p~_i = (1 - p_i) / (C - 1)`; under
//! example-uniform selection it is `p~_i = sum_{j != i} p_j * p_i / (1 - p_j)`.

use rand::Rng;

use crate::data::{ClassDistribution, Dataset, Example};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How one attribute of the partner must relate to the anchor's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Any,
    Same,
    Different,
}

impl Relation {
    fn allows(self, anchor: usize, candidate: usize) -> bool {
        match self {
            Relation::Any => true,
            Relation::Same => candidate == anchor,
            Relation::Different => candidate != anchor,
        }
    }
}

/// The pairing predicate: a class relation and a domain relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairCriterion {
    pub class_relation: Relation,
    pub domain_relation: Relation,
}

impl PairCriterion {
    pub fn new(class_relation: Relation, domain_relation: Relation) -> Self {
        Self {
            class_relation,
            domain_relation,
        }
    }

    /// The degenerate random pair used by vanilla mixup.
    pub fn vanilla() -> Self {
        Self::new(Relation::Any, Relation::Any)
    }

    /// True when at least one relation constrains the pair.
    pub fn is_selective(&self) -> bool {
        self.class_relation != Relation::Any || self.domain_relation != Relation::Any
    }

    /// The `Paired(anchor, candidate)` predicate.
    pub fn paired<T>(&self, anchor: &Example<T>, candidate: &Example<T>) -> bool {
        self.class_relation
            .allows(anchor.class_index, candidate.class_index)
            && self
                .domain_relation
                .allows(anchor.domain_index, candidate.domain_index)
    }
}

/// How a partner is drawn among the eligible examples.
///
/// `ExampleUniform` gives every eligible example equal probability.
/// `ClassUniform` first draws a class other than the anchor's uniformly
/// among classes with eligible examples, then an example within it; it is
/// only meaningful with a `Different` class relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairSelectionSemantics {
    ExampleUniform,
    ClassUniform,
}

/// Index of example positions by (class, domain) bucket, with per-class and
/// per-domain rollups. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PairPool {
    num_classes: usize,
    num_domains: usize,
    buckets: Vec<Vec<usize>>,
    by_class: Vec<Vec<usize>>,
    by_domain: Vec<Vec<usize>>,
    len: usize,
}

impl PairPool {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    /// Total number of indexed examples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Positions in the (class, domain) bucket.
    pub fn bucket(&self, class: usize, domain: usize) -> &[usize] {
        &self.buckets[class * self.num_domains + domain]
    }

    /// All positions with the given class.
    pub fn class_rollup(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    /// All positions with the given domain.
    pub fn domain_rollup(&self, domain: usize) -> &[usize] {
        &self.by_domain[domain]
    }

    fn eligible_count(&self, anchor_class: usize, anchor_domain: usize, c: PairCriterion) -> usize {
        let mut count = 0;
        for class in 0..self.num_classes {
            if !c.class_relation.allows(anchor_class, class) {
                continue;
            }
            for domain in 0..self.num_domains {
                if c.domain_relation.allows(anchor_domain, domain) {
                    count += self.bucket(class, domain).len();
                }
            }
        }
        count
    }

    fn class_eligible_count(
        &self,
        class: usize,
        anchor_domain: usize,
        domain_relation: Relation,
    ) -> usize {
        (0..self.num_domains)
            .filter(|&d| domain_relation.allows(anchor_domain, d))
            .map(|d| self.bucket(class, d).len())
            .sum()
    }

    fn nth_eligible_in_class(
        &self,
        class: usize,
        anchor_domain: usize,
        domain_relation: Relation,
        mut k: usize,
    ) -> usize {
        for domain in 0..self.num_domains {
            if !domain_relation.allows(anchor_domain, domain) {
                continue;
            }
            let b = self.bucket(class, domain);
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        unreachable!("k out of range for eligible count");
    }
}

/// Index a dataset for partner lookup.
pub fn build_pair_pool<T: Scalar>(data: &Dataset<T>) -> PairPool {
    let num_classes = data.num_classes();
    let num_domains = data.num_domains();
    let mut buckets = vec![Vec::new(); num_classes * num_domains];
    let mut by_class = vec![Vec::new(); num_classes];
    let mut by_domain = vec![Vec::new(); num_domains];
    for (i, ex) in data.examples().iter().enumerate() {
        buckets[ex.class_index * num_domains + ex.domain_index].push(i);
        by_class[ex.class_index].push(i);
        by_domain[ex.domain_index].push(i);
    }
    PairPool {
        num_classes,
        num_domains,
        buckets,
        by_class,
        by_domain,
        len: data.len(),
    }
}

/// Draw a partner for the anchor at `anchor_index` satisfying the criterion.
///
/// Self-pairing is permitted whenever the anchor itself satisfies the
/// predicate (e.g. a same-class/same-domain singleton bucket). Returns the
/// partner's position in the dataset.
pub fn select_partner<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    anchor_index: usize,
    pool: &PairPool,
    criterion: PairCriterion,
    semantics: PairSelectionSemantics,
    rng: &mut R,
) -> Result<usize> {
    let anchor = data.example(anchor_index);
    let (ac, ad) = (anchor.class_index, anchor.domain_index);
    match semantics {
        PairSelectionSemantics::ExampleUniform => {
            let total = pool.eligible_count(ac, ad, criterion);
            if total == 0 {
                return Err(Error::NoEligiblePartner {
                    class: ac,
                    domain: ad,
                });
            }
            let mut k = rng.random_range(0..total);
            for class in 0..pool.num_classes {
                if !criterion.class_relation.allows(ac, class) {
                    continue;
                }
                for domain in 0..pool.num_domains {
                    if !criterion.domain_relation.allows(ad, domain) {
                        continue;
                    }
                    let b = pool.bucket(class, domain);
                    if k < b.len() {
                        return Ok(b[k]);
                    }
                    k -= b.len();
                }
            }
            unreachable!("eligible_count covered k");
        }
        PairSelectionSemantics::ClassUniform => {
            if criterion.class_relation != Relation::Different {
                return Err(Error::InvalidCriterion(
                    "class-uniform selection requires a `different` class relation".into(),
                ));
            }
            let candidates: Vec<usize> = (0..pool.num_classes)
                .filter(|&c| c != ac)
                .filter(|&c| pool.class_eligible_count(c, ad, criterion.domain_relation) > 0)
                .collect();
            if candidates.is_empty() {
                return Err(Error::NoEligiblePartner {
                    class: ac,
                    domain: ad,
                });
            }
            let class = candidates[rng.random_range(0..candidates.len())];
            let count = pool.class_eligible_count(class, ad, criterion.domain_relation);
            let k = rng.random_range(0..count);
            Ok(pool.nth_eligible_in_class(class, ad, criterion.domain_relation, k))
        }
    }
}

/// Closed-form class distribution of partners selected under a criterion.
///
/// The class relation must be `Same` (returns `p` unchanged) or `Different`.
/// The formulas assume every class in `p`'s support can be paired, i.e. they
/// describe the selection in expectation over datasets realizing `p`; the
/// domain relation plays no role here and is measured empirically instead.
pub fn virtual_class_distribution<T: Scalar>(
    p: &ClassDistribution<T>,
    criterion: PairCriterion,
    semantics: PairSelectionSemantics,
) -> Result<ClassDistribution<T>> {
    match criterion.class_relation {
        Relation::Same => Ok(p.clone()),
        Relation::Any => Err(Error::InvalidCriterion(
            "virtual class distribution requires class relation `same` or `different`".into(),
        )),
        Relation::Different => {
            if p.probs().iter().any(|&pj| pj >= T::one()) {
                return Err(Error::InvalidDistribution {
                    message: "a class holds all probability mass; \
                              no different-class partner exists"
                        .into(),
                });
            }
            let c = p.len();
            let probs = match semantics {
                PairSelectionSemantics::ClassUniform => {
                    let denom = T::from_count(c - 1);
                    p.probs()
                        .iter()
                        .map(|&pi| (T::one() - pi) / denom)
                        .collect()
                }
                PairSelectionSemantics::ExampleUniform => {
                    let raw: Vec<T> = (0..c)
                        .map(|i| {
                            let pi = p.get(i);
                            let mut acc = T::zero();
                            for j in 0..c {
                                if j != i {
                                    let pj = p.get(j);
                                    acc += pj * pi / (T::one() - pj);
                                }
                            }
                            acc
                        })
                        .collect();
                    // The sum is exactly 1 in exact arithmetic; renormalize
                    // to absorb cancellation when some p_j is close to 1.
                    let total: T = raw.iter().copied().sum();
                    raw.into_iter().map(|v| v / total).collect()
                }
            };
            ClassDistribution::new(probs)
        }
    }
}

/// Element-wise average of the anchor and partner distributions.
pub fn combined_distribution<T: Scalar>(
    p: &ClassDistribution<T>,
    p_tilde: &ClassDistribution<T>,
) -> Result<ClassDistribution<T>> {
    if p.len() != p_tilde.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: p_tilde.len(),
        });
    }
    let half = T::cast(0.5);
    ClassDistribution::new(
        p.probs()
            .iter()
            .zip(p_tilde.probs())
            .map(|(&a, &b)| (a + b) * half)
            .collect(),
    )
}
