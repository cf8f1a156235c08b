//! Training-distribution strategies: how mini-batches are sampled.
//!
//! Every strategy emits batches of exactly the configured size, so any
//! difference between runs is attributable to the sampling distribution and
//! (where applicable) the mixing, never to the amount of data seen per step.
//!
//! Canonical strategy strings (used by config files and reports):
//! `erm`, `vanilla_mixup`, `resample:class`, `resample:domain`,
//! `resample:group`, `resample:target=<p0,p1,...>`,
//! `selective_mixup:<criterion>`, `selective_sampling:<criterion>`,
//! `resample:<axis>+vanilla_mixup`, `resample:<axis>+concat_pairs`,
//! `resample:<axis>+selective_mixup:<criterion>`.
//! A criterion joins relation parts with `+` (`same_class`, `diff_class`,
//! `same_domain`, `diff_domain`; an omitted attribute means "any") and may
//! carry an `@class_uniform` suffix selecting class-uniform partner
//! selection (example-uniform is the default).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{empirical_class_distribution, ClassDistribution, Dataset};
use crate::error::{Error, Result};
use crate::mixing::{mix_examples, sample_mix_coefficient, MixedExample};
use crate::pairing::{select_partner, PairCriterion, PairPool, PairSelectionSemantics, Relation};
use crate::scalar::Scalar;

/// Bound on anchor redraws when a sampled anchor has no eligible partner.
pub const MAX_ANCHOR_RETRIES: usize = 100;

/// Which marginal a resampling strategy equalizes (or targets).
#[derive(Debug, Clone, PartialEq)]
pub enum ResampleAxis<T> {
    Class,
    Domain,
    Group,
    /// Weight examples by `target(class) / empirical(class)`. Used for the
    /// "resample to the test class distribution" upper-bound probe.
    Target(ClassDistribution<T>),
}

/// A named way of turning a dataset into mini-batches.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingStrategy<T> {
    /// Uniform draws.
    Erm,
    /// Mixed pairs of uniform draws.
    VanillaMixup,
    /// Weighted draws, no mixing.
    Resample(ResampleAxis<T>),
    /// Uniform anchors, criterion-selected partners, mixed.
    SelectiveMixup {
        criterion: PairCriterion,
        semantics: PairSelectionSemantics,
    },
    /// Same pairs as `SelectiveMixup` but appended unmixed, then half of the
    /// instances dropped uniformly at random to restore the batch size.
    SelectiveSampling {
        criterion: PairCriterion,
        semantics: PairSelectionSemantics,
    },
    /// Weighted anchors, uniform partners, mixed.
    ResamplePlusVanillaMixup(ResampleAxis<T>),
    /// Weighted anchors, criterion-selected partners, mixed.
    ResamplePlusSelectiveMixup {
        axis: ResampleAxis<T>,
        criterion: PairCriterion,
        semantics: PairSelectionSemantics,
    },
    /// Weighted anchors with uniform partners arranged as adjacent unmixed
    /// pairs: the "concatenated pairs" ablation of the mixup combination.
    ResamplePlusConcatenatedPairs(ResampleAxis<T>),
}

/// One batch entry: either a dataset row or a mixed pair.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchItem<T> {
    Plain(usize),
    Mixed(MixedExample<T>),
}

/// A fixed-size training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch<T> {
    pub items: Vec<BatchItem<T>>,
    /// Non-fatal conditions observed while building (e.g. an empty class
    /// receiving zero resampling weight).
    pub warnings: Vec<String>,
}

/// Marginal class/domain/group frequencies of items entering the loss.
#[derive(Debug, Clone)]
pub struct SampledDistribution<T> {
    pub class: ClassDistribution<T>,
    pub domain: Vec<T>,
    pub group: Vec<T>,
}

// ---------------------------------------------------------------------------
// Canonical strings
// ---------------------------------------------------------------------------

fn relation_part(attr: &str, rel: Relation) -> Option<String> {
    match rel {
        Relation::Any => None,
        Relation::Same => Some(format!("same_{attr}")),
        Relation::Different => Some(format!("diff_{attr}")),
    }
}

fn criterion_string(criterion: &PairCriterion, semantics: PairSelectionSemantics) -> String {
    let mut parts = Vec::new();
    if let Some(p) = relation_part("class", criterion.class_relation) {
        parts.push(p);
    }
    if let Some(p) = relation_part("domain", criterion.domain_relation) {
        parts.push(p);
    }
    let mut s = parts.join("+");
    if semantics == PairSelectionSemantics::ClassUniform {
        s.push_str("@class_uniform");
    }
    s
}

fn axis_string<T: Scalar>(axis: &ResampleAxis<T>) -> String {
    match axis {
        ResampleAxis::Class => "class".into(),
        ResampleAxis::Domain => "domain".into(),
        ResampleAxis::Group => "group".into(),
        ResampleAxis::Target(p) => {
            let probs: Vec<String> = p.probs().iter().map(|v| format!("{v}")).collect();
            format!("target={}", probs.join(","))
        }
    }
}

impl<T: Scalar> fmt::Display for SamplingStrategy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingStrategy::Erm => write!(f, "erm"),
            SamplingStrategy::VanillaMixup => write!(f, "vanilla_mixup"),
            SamplingStrategy::Resample(axis) => write!(f, "resample:{}", axis_string(axis)),
            SamplingStrategy::SelectiveMixup {
                criterion,
                semantics,
            } => write!(
                f,
                "selective_mixup:{}",
                criterion_string(criterion, *semantics)
            ),
            SamplingStrategy::SelectiveSampling {
                criterion,
                semantics,
            } => write!(
                f,
                "selective_sampling:{}",
                criterion_string(criterion, *semantics)
            ),
            SamplingStrategy::ResamplePlusVanillaMixup(axis) => {
                write!(f, "resample:{}+vanilla_mixup", axis_string(axis))
            }
            SamplingStrategy::ResamplePlusSelectiveMixup {
                axis,
                criterion,
                semantics,
            } => write!(
                f,
                "resample:{}+selective_mixup:{}",
                axis_string(axis),
                criterion_string(criterion, *semantics)
            ),
            SamplingStrategy::ResamplePlusConcatenatedPairs(axis) => {
                write!(f, "resample:{}+concat_pairs", axis_string(axis))
            }
        }
    }
}

fn parse_criterion(s: &str) -> Result<(PairCriterion, PairSelectionSemantics)> {
    let err = |message: &str| Error::InvalidStrategy {
        input: s.to_string(),
        message: message.to_string(),
    };
    let (body, semantics) = match s.split_once('@') {
        None => (s, PairSelectionSemantics::ExampleUniform),
        Some((body, "example_uniform")) => (body, PairSelectionSemantics::ExampleUniform),
        Some((body, "class_uniform")) => (body, PairSelectionSemantics::ClassUniform),
        Some((_, other)) => {
            return Err(err(&format!("unknown selection semantics `{other}`")));
        }
    };
    let mut class_relation = Relation::Any;
    let mut domain_relation = Relation::Any;
    for part in body.split('+') {
        let (rel, attr) = match part.split_once('_') {
            Some(("same", attr)) => (Relation::Same, attr),
            Some(("diff", attr)) => (Relation::Different, attr),
            _ => return Err(err(&format!("unknown criterion part `{part}`"))),
        };
        let slot = match attr {
            "class" => &mut class_relation,
            "domain" => &mut domain_relation,
            _ => return Err(err(&format!("unknown criterion attribute `{attr}`"))),
        };
        if *slot != Relation::Any {
            return Err(err(&format!("duplicate relation for `{attr}`")));
        }
        *slot = match rel {
            Relation::Same => Relation::Same,
            Relation::Different => Relation::Different,
            Relation::Any => unreachable!(),
        };
    }
    let criterion = PairCriterion::new(class_relation, domain_relation);
    if !criterion.is_selective() {
        return Err(err("criterion must constrain class or domain"));
    }
    if semantics == PairSelectionSemantics::ClassUniform
        && criterion.class_relation != Relation::Different
    {
        return Err(err("@class_uniform requires a diff_class relation"));
    }
    Ok((criterion, semantics))
}

fn parse_axis<T: Scalar>(s: &str, full: &str) -> Result<ResampleAxis<T>> {
    match s {
        "class" => Ok(ResampleAxis::Class),
        "domain" => Ok(ResampleAxis::Domain),
        "group" => Ok(ResampleAxis::Group),
        _ => {
            if let Some(list) = s.strip_prefix("target=") {
                let mut probs = Vec::new();
                for field in list.split(',') {
                    let v = field
                        .trim()
                        .parse::<T>()
                        .map_err(|_| Error::InvalidStrategy {
                            input: full.to_string(),
                            message: format!("non-numeric target probability `{field}`"),
                        })?;
                    probs.push(v);
                }
                let dist = ClassDistribution::new(probs).map_err(|e| Error::InvalidStrategy {
                    input: full.to_string(),
                    message: e.to_string(),
                })?;
                Ok(ResampleAxis::Target(dist))
            } else {
                Err(Error::InvalidStrategy {
                    input: full.to_string(),
                    message: format!("unknown resampling axis `{s}`"),
                })
            }
        }
    }
}

impl<T: Scalar> FromStr for SamplingStrategy<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |message: String| Error::InvalidStrategy {
            input: s.to_string(),
            message,
        };
        match s {
            "erm" => return Ok(SamplingStrategy::Erm),
            "vanilla_mixup" => return Ok(SamplingStrategy::VanillaMixup),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("selective_mixup:") {
            let (criterion, semantics) = parse_criterion(rest)?;
            return Ok(SamplingStrategy::SelectiveMixup {
                criterion,
                semantics,
            });
        }
        if let Some(rest) = s.strip_prefix("selective_sampling:") {
            let (criterion, semantics) = parse_criterion(rest)?;
            return Ok(SamplingStrategy::SelectiveSampling {
                criterion,
                semantics,
            });
        }
        if let Some(rest) = s.strip_prefix("resample:") {
            let segments: Vec<&str> = rest.split('+').collect();
            let axis = parse_axis::<T>(segments[0], s)?;
            return match segments.len() {
                1 => Ok(SamplingStrategy::Resample(axis)),
                _ if segments[1] == "vanilla_mixup" && segments.len() == 2 => {
                    Ok(SamplingStrategy::ResamplePlusVanillaMixup(axis))
                }
                _ if segments[1] == "concat_pairs" && segments.len() == 2 => {
                    Ok(SamplingStrategy::ResamplePlusConcatenatedPairs(axis))
                }
                _ if segments[1].starts_with("selective_mixup:") => {
                    let criterion_str = segments[1..].join("+");
                    let rest = criterion_str.strip_prefix("selective_mixup:").unwrap();
                    let (criterion, semantics) = parse_criterion(rest)?;
                    Ok(SamplingStrategy::ResamplePlusSelectiveMixup {
                        axis,
                        criterion,
                        semantics,
                    })
                }
                _ => Err(err(format!(
                    "unknown combination `{}`",
                    segments[1..].join("+")
                ))),
            };
        }
        Err(err("unknown strategy".into()))
    }
}

impl<T: Scalar> SamplingStrategy<T> {
    /// Parse a canonical strategy string.
    pub fn parse(s: &str) -> Result<Self> {
        s.parse()
    }
}

// ---------------------------------------------------------------------------
// Batch construction
// ---------------------------------------------------------------------------

/// Per-example resampling weights for an axis, plus warnings for marginals
/// that received zero weight because they are empty.
fn resample_weights<T: Scalar>(
    data: &Dataset<T>,
    axis: &ResampleAxis<T>,
) -> Result<(Vec<T>, Vec<String>)> {
    let mut warnings = Vec::new();
    let weights = match axis {
        ResampleAxis::Class => {
            for (c, &count) in data.class_counts().iter().enumerate() {
                if count == 0 {
                    warnings.push(format!("class {c} is empty and receives zero weight"));
                }
            }
            data.examples()
                .iter()
                .map(|ex| T::one() / T::from_count(data.class_counts()[ex.class_index]))
                .collect()
        }
        ResampleAxis::Domain => {
            for (d, &count) in data.domain_counts().iter().enumerate() {
                if count == 0 {
                    warnings.push(format!("domain {d} is empty and receives zero weight"));
                }
            }
            data.examples()
                .iter()
                .map(|ex| T::one() / T::from_count(data.domain_counts()[ex.domain_index]))
                .collect()
        }
        ResampleAxis::Group => {
            for (g, &count) in data.group_counts().iter().enumerate() {
                if count == 0 {
                    let (c, d) = (g / data.num_domains(), g % data.num_domains());
                    warnings.push(format!(
                        "group (class {c}, domain {d}) is empty and receives zero weight"
                    ));
                }
            }
            (0..data.len())
                .map(|i| T::one() / T::from_count(data.group_counts()[data.group_index(i)]))
                .collect()
        }
        ResampleAxis::Target(target) => {
            if target.len() != data.num_classes() {
                return Err(Error::LengthMismatch {
                    left: target.len(),
                    right: data.num_classes(),
                });
            }
            let empirical = empirical_class_distribution(data)?;
            for c in 0..data.num_classes() {
                if data.class_counts()[c] == 0 && target.get(c) > T::zero() {
                    warnings.push(format!(
                        "class {c} has target mass {} but no examples",
                        target.get(c)
                    ));
                }
            }
            data.examples()
                .iter()
                .map(|ex| target.get(ex.class_index) / empirical.get(ex.class_index))
                .collect()
        }
    };
    Ok((weights, warnings))
}

/// Weighted index sampler over cumulative sums.
struct CumulativeSampler<T> {
    cumulative: Vec<T>,
    total: T,
}

impl<T: Scalar> CumulativeSampler<T> {
    fn new(weights: &[T]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut total = T::zero();
        for &w in weights {
            if w.is_nan() || w < T::zero() || !w.is_finite() {
                return Err(Error::Numerical(format!("invalid sampling weight {w}")));
            }
            total += w;
            cumulative.push(total);
        }
        if total.is_nan() || total <= T::zero() {
            return Err(Error::Numerical("sampling weights sum to zero".into()));
        }
        Ok(Self { cumulative, total })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random_range(T::zero()..self.total);
        // First index whose cumulative weight strictly exceeds u; the walk
        // steps over zero-weight entries when u lands exactly on a boundary.
        let mut idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).expect("finite weights"))
        {
            Ok(i) | Err(i) => i.min(self.cumulative.len() - 1),
        };
        while idx < self.cumulative.len() - 1 && self.cumulative[idx] <= u {
            idx += 1;
        }
        idx
    }
}

enum AnchorSampler<T> {
    Uniform(usize),
    Weighted(CumulativeSampler<T>),
}

impl<T: Scalar> AnchorSampler<T> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            AnchorSampler::Uniform(n) => rng.random_range(0..*n),
            AnchorSampler::Weighted(s) => s.draw(rng),
        }
    }
}

fn selective_criterion_check(criterion: &PairCriterion) -> Result<()> {
    if !criterion.is_selective() {
        return Err(Error::InvalidCriterion(
            "selective strategies need a constraining criterion; \
             use `vanilla_mixup` for random pairs"
                .into(),
        ));
    }
    Ok(())
}

/// Draw an anchor and a criterion-satisfying partner, redrawing the anchor
/// up to [`MAX_ANCHOR_RETRIES`] times when it has no eligible partner.
fn draw_pair<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    pool: &PairPool,
    anchors: &AnchorSampler<T>,
    criterion: PairCriterion,
    semantics: PairSelectionSemantics,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let mut starved = (0, 0);
    for _ in 0..=MAX_ANCHOR_RETRIES {
        let anchor = anchors.draw(rng);
        match select_partner(data, anchor, pool, criterion, semantics, rng) {
            Ok(partner) => return Ok((anchor, partner)),
            Err(Error::NoEligiblePartner { class, domain }) => starved = (class, domain),
            Err(other) => return Err(other),
        }
    }
    Err(Error::PartnerStarvation {
        class: starved.0,
        domain: starved.1,
        retries: MAX_ANCHOR_RETRIES,
    })
}

fn mixed_item<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    anchor: usize,
    partner: usize,
    rng: &mut R,
) -> Result<BatchItem<T>> {
    let c = sample_mix_coefficient(rng);
    let mixed = mix_examples(
        data.example(anchor),
        data.example(partner),
        c,
        data.num_classes(),
        (anchor, partner),
    )?;
    Ok(BatchItem::Mixed(mixed))
}

/// Keep exactly half of `items`, chosen uniformly without replacement,
/// preserving order.
fn drop_half<T, R: Rng + ?Sized>(items: Vec<BatchItem<T>>, rng: &mut R) -> Vec<BatchItem<T>> {
    let keep = items.len() / 2;
    let mut selected = rand::seq::index::sample(rng, items.len(), keep).into_vec();
    selected.sort_unstable();
    let mut kept = Vec::with_capacity(keep);
    let mut iter = selected.into_iter().peekable();
    for (i, item) in items.into_iter().enumerate() {
        if iter.peek() == Some(&i) {
            kept.push(item);
            iter.next();
        }
    }
    kept
}

/// Build one mini-batch of exactly `batch_size` items under a strategy.
pub fn build_minibatch<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    pool: &PairPool,
    strategy: &SamplingStrategy<T>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Minibatch<T>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let uniform = AnchorSampler::Uniform(n);
    let mut warnings = Vec::new();

    let items = match strategy {
        SamplingStrategy::Erm => (0..batch_size)
            .map(|_| BatchItem::Plain(uniform.draw(rng)))
            .collect(),
        SamplingStrategy::VanillaMixup => {
            let mut items = Vec::with_capacity(batch_size);
            for _ in 0..batch_size {
                let anchor = uniform.draw(rng);
                let partner = uniform.draw(rng);
                items.push(mixed_item(data, anchor, partner, rng)?);
            }
            items
        }
        SamplingStrategy::Resample(axis) => {
            let (weights, w) = resample_weights(data, axis)?;
            warnings = w;
            let sampler = CumulativeSampler::new(&weights)?;
            (0..batch_size)
                .map(|_| BatchItem::Plain(sampler.draw(rng)))
                .collect()
        }
        SamplingStrategy::SelectiveMixup {
            criterion,
            semantics,
        } => {
            selective_criterion_check(criterion)?;
            let mut items = Vec::with_capacity(batch_size);
            for _ in 0..batch_size {
                let (anchor, partner) =
                    draw_pair(data, pool, &uniform, *criterion, *semantics, rng)?;
                items.push(mixed_item(data, anchor, partner, rng)?);
            }
            items
        }
        SamplingStrategy::SelectiveSampling {
            criterion,
            semantics,
        } => {
            selective_criterion_check(criterion)?;
            let mut appended = Vec::with_capacity(2 * batch_size);
            for _ in 0..batch_size {
                let (anchor, partner) =
                    draw_pair(data, pool, &uniform, *criterion, *semantics, rng)?;
                appended.push(BatchItem::Plain(anchor));
                appended.push(BatchItem::Plain(partner));
            }
            drop_half(appended, rng)
        }
        SamplingStrategy::ResamplePlusVanillaMixup(axis) => {
            let (weights, w) = resample_weights(data, axis)?;
            warnings = w;
            let sampler = AnchorSampler::Weighted(CumulativeSampler::new(&weights)?);
            let mut items = Vec::with_capacity(batch_size);
            for _ in 0..batch_size {
                let anchor = sampler.draw(rng);
                let partner = uniform.draw(rng);
                items.push(mixed_item(data, anchor, partner, rng)?);
            }
            items
        }
        SamplingStrategy::ResamplePlusSelectiveMixup {
            axis,
            criterion,
            semantics,
        } => {
            selective_criterion_check(criterion)?;
            let (weights, w) = resample_weights(data, axis)?;
            warnings = w;
            let sampler = AnchorSampler::Weighted(CumulativeSampler::new(&weights)?);
            let mut items = Vec::with_capacity(batch_size);
            for _ in 0..batch_size {
                let (anchor, partner) =
                    draw_pair(data, pool, &sampler, *criterion, *semantics, rng)?;
                items.push(mixed_item(data, anchor, partner, rng)?);
            }
            items
        }
        SamplingStrategy::ResamplePlusConcatenatedPairs(axis) => {
            let (weights, w) = resample_weights(data, axis)?;
            warnings = w;
            let sampler = CumulativeSampler::new(&weights)?;
            let pairs = batch_size.div_ceil(2);
            let mut items = Vec::with_capacity(batch_size + 1);
            for _ in 0..pairs {
                items.push(BatchItem::Plain(sampler.draw(rng)));
                items.push(BatchItem::Plain(uniform.draw(rng)));
            }
            items.truncate(batch_size);
            items
        }
    };

    debug_assert_eq!(items.len(), batch_size);
    Ok(Minibatch { items, warnings })
}

/// Monte-Carlo estimate of the class/domain/group frequencies of items
/// emitted by [`build_minibatch`]. Mixed items contribute the mixing
/// coefficient to the anchor's marginals and its complement to the
/// partner's, i.e. exactly the label mass entering the loss.
pub fn effective_sampled_distribution<T: Scalar, R: Rng + ?Sized>(
    data: &Dataset<T>,
    pool: &PairPool,
    strategy: &SamplingStrategy<T>,
    num_draws: usize,
    rng: &mut R,
) -> Result<SampledDistribution<T>> {
    if num_draws == 0 {
        return Err(Error::InvalidConfig("num_draws must be >= 1".into()));
    }
    let mut class_mass = vec![T::zero(); data.num_classes()];
    let mut domain_mass = vec![T::zero(); data.num_domains()];
    let mut group_mass = vec![T::zero(); data.num_classes() * data.num_domains()];
    let credit = |index: usize,
                  mass: T,
                  class_mass: &mut [T],
                  domain_mass: &mut [T],
                  group_mass: &mut [T]| {
        let ex = &data.examples()[index];
        class_mass[ex.class_index] += mass;
        domain_mass[ex.domain_index] += mass;
        group_mass[ex.class_index * data.num_domains() + ex.domain_index] += mass;
    };

    let mut remaining = num_draws;
    while remaining > 0 {
        let b = remaining.min(256);
        let batch = build_minibatch(data, pool, strategy, b, rng)?;
        for item in &batch.items {
            match item {
                BatchItem::Plain(i) => credit(
                    *i,
                    T::one(),
                    &mut class_mass,
                    &mut domain_mass,
                    &mut group_mass,
                ),
                BatchItem::Mixed(m) => {
                    credit(
                        m.anchor_index,
                        m.coefficient,
                        &mut class_mass,
                        &mut domain_mass,
                        &mut group_mass,
                    );
                    credit(
                        m.partner_index,
                        T::one() - m.coefficient,
                        &mut class_mass,
                        &mut domain_mass,
                        &mut group_mass,
                    );
                }
            }
        }
        remaining -= b;
    }

    let normalize = |mass: &[T]| -> Vec<T> {
        let total: T = mass.iter().copied().sum();
        mass.iter().map(|&m| m / total).collect()
    };
    Ok(SampledDistribution {
        class: ClassDistribution::new(normalize(&class_mass))?,
        domain: normalize(&domain_mass),
        group: normalize(&group_mass),
    })
}
