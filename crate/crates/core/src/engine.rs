//! Tracking and label-distribution matrices.
//!
//! The tracking matrix accumulates classifier softmax outputs per class with
//! a momentum update every iteration. Once per epoch it is copied into the
//! label-distribution set, optionally zeroing same-domain entries and
//! rescaling cross-domain entries so that every other domain receives mass
//! proportional to its class count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::layout::DomainLayout;
use crate::scalar::Scalar;

/// Tolerance on the sum of an incoming prediction vector.
pub const PREDICTION_SUM_TOL: f64 = 1e-6;

/// Below this a domain similarity is treated as zero and redistribution fails.
pub const DEGENERATE_SIMILARITY: f64 = 1e-12;

/// How a committed row is post-processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Redistribution {
    /// Plain copy of the tracking row.
    #[serde(rename = "LDL-1")]
    Ldl1,
    /// Same-domain entries zeroed, cross-domain entries rescaled by one factor.
    #[serde(rename = "LDL-2")]
    Ldl2,
    /// Same-domain entries zeroed, equal attention across the other domains.
    #[serde(rename = "LDL-3")]
    Ldl3,
}

impl Redistribution {
    pub const ALL: [Redistribution; 3] = [Self::Ldl1, Self::Ldl2, Self::Ldl3];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ldl1 => "LDL-1",
            Self::Ldl2 => "LDL-2",
            Self::Ldl3 => "LDL-3",
        }
    }
}

impl fmt::Display for Redistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Redistribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "LDL-1" | "LDL1" => Ok(Self::Ldl1),
            "LDL-2" | "LDL2" => Ok(Self::Ldl2),
            "LDL-3" | "LDL3" => Ok(Self::Ldl3),
            _ => Err(format!("unknown redistribution variant {s:?}")),
        }
    }
}

/// C×C row-stochastic matrix of momentum-averaged predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingMatrix<T> {
    entries: Array2<T>,
}

impl<T: Scalar> TrackingMatrix<T> {
    pub fn uniform(class_count: usize) -> Self {
        let v = T::one() / T::of_usize(class_count);
        Self { entries: Array2::from_elem((class_count, class_count), v) }
    }

    pub fn entries(&self) -> ArrayView2<'_, T> {
        self.entries.view()
    }

    pub fn row(&self, class: usize) -> ArrayView1<'_, T> {
        self.entries.row(class)
    }
}

/// C×C row-stochastic matrix of per-class target distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistributionSet<T> {
    entries: Array2<T>,
    committed_epoch: usize,
}

impl<T: Scalar> LabelDistributionSet<T> {
    pub fn uniform(class_count: usize) -> Self {
        let v = T::one() / T::of_usize(class_count);
        Self { entries: Array2::from_elem((class_count, class_count), v), committed_epoch: 0 }
    }

    pub fn entries(&self) -> ArrayView2<'_, T> {
        self.entries.view()
    }

    /// Target distribution for samples of `class`.
    pub fn row(&self, class: usize) -> ArrayView1<'_, T> {
        self.entries.row(class)
    }

    pub fn committed_epoch(&self) -> usize {
        self.committed_epoch
    }
}

/// Mean of `row` over the classes of `domain`.
pub fn row_domain_similarity<T: Scalar>(layout: &DomainLayout, row: ArrayView1<'_, T>, domain: usize) -> T {
    let classes = layout.classes_in(domain);
    let total: T = classes.iter().map(|&j| row[j]).sum();
    total / T::of_usize(classes.len())
}

/// Zeroes the entries of `row` that share a domain with `class`, except the
/// diagonal.
fn zero_same_domain<T: Scalar>(layout: &DomainLayout, class: usize, row: &mut ArrayViewMut1<'_, T>) {
    for &j in layout.classes_in(layout.domain_of(class)) {
        if j != class {
            row[j] = T::zero();
        }
    }
}

/// Applies a redistribution variant to one committed row in place.
///
/// `row` is the copied tracking row for `class`. The diagonal is never
/// touched.
pub fn redistribute_row<T: Scalar>(
    layout: &DomainLayout,
    class: usize,
    mut row: ArrayViewMut1<'_, T>,
    variant: Redistribution,
) -> Result<()> {
    let own = row[class];
    let remaining = T::one() - own;
    match variant {
        Redistribution::Ldl1 => Ok(()),
        Redistribution::Ldl2 => {
            zero_same_domain(layout, class, &mut row);
            let cross_sum: T =
                layout.cross_domains(class).flat_map(|d| layout.classes_in(d).iter()).map(|&j| row[j]).sum();
            if cross_sum.as_f64() <= DEGENERATE_SIMILARITY {
                let domain = layout.cross_domains(class).next().unwrap_or(0);
                return Err(LdlError::DegenerateSimilarity { class, domain, value: cross_sum.as_f64() });
            }
            let factor = remaining / cross_sum;
            for d in layout.cross_domains(class) {
                for &j in layout.classes_in(d) {
                    row[j] *= factor;
                }
            }
            Ok(())
        }
        Redistribution::Ldl3 => {
            zero_same_domain(layout, class, &mut row);
            let cross_count = T::of_usize(layout.cross_class_count(class));
            // Similarities are read before any entry is rewritten.
            let mut scale = Vec::with_capacity(layout.domain_count());
            for d in layout.cross_domains(class) {
                let s = row_domain_similarity(layout, row.view(), d);
                if s.as_f64() <= DEGENERATE_SIMILARITY {
                    return Err(LdlError::DegenerateSimilarity { class, domain: d, value: s.as_f64() });
                }
                scale.push((d, remaining / (s * cross_count)));
            }
            for (d, factor) in scale {
                for &j in layout.classes_in(d) {
                    row[j] *= factor;
                }
            }
            Ok(())
        }
    }
}

fn check_probability_vector<T: Scalar>(v: &[T], len: usize) -> Result<T> {
    if v.len() != len {
        return Err(LdlError::NotAProbabilityVector(format!("length {} != {len}", v.len())));
    }
    let mut sum = T::zero();
    for (k, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < T::zero() {
            return Err(LdlError::NotAProbabilityVector(format!("entry {k} = {x}")));
        }
        sum += x;
    }
    if (sum.as_f64() - 1.0).abs() > PREDICTION_SUM_TOL {
        return Err(LdlError::NotAProbabilityVector(format!("sums to {sum}")));
    }
    Ok(sum)
}

fn check_momentum<T: Scalar>(m: T) -> Result<()> {
    if m >= T::zero() && m <= T::one() {
        Ok(())
    } else {
        Err(LdlError::InvalidMomentum(m.as_f64()))
    }
}

/// Per-class similarity to every other domain, with the spread across them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSimilarity {
    pub class: usize,
    pub domain: usize,
    /// `(domain, similarity)` for every other domain, ascending by domain.
    pub similarities: Vec<(usize, f64)>,
    /// Max minus min over `similarities`.
    pub diff: f64,
}

/// Computes the per-class cross-domain similarity table of a row-stochastic
/// matrix.
pub fn similarity_table<T: Scalar>(layout: &DomainLayout, matrix: ArrayView2<'_, T>) -> Vec<ClassSimilarity> {
    (0..layout.class_count())
        .map(|i| {
            let similarities: Vec<(usize, f64)> = layout
                .cross_domains(i)
                .map(|d| (d, row_domain_similarity(layout, matrix.row(i), d).as_f64()))
                .collect();
            let (lo, hi) = similarities
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, s)| (lo.min(s), hi.max(s)));
            let diff = if similarities.is_empty() { 0.0 } else { hi - lo };
            ClassSimilarity { class: i, domain: layout.domain_of(i), similarities, diff }
        })
        .collect()
}

/// Owns both matrices and drives the per-iteration and per-epoch updates.
#[derive(Clone, Debug)]
pub struct LdlEngine<T> {
    layout: DomainLayout,
    tracking: TrackingMatrix<T>,
    labels: LabelDistributionSet<T>,
    /// Tracking matrix as of the last commit, with same-domain entries of
    /// each row zeroed (the state similarities are measured on).
    committed_source: Array2<T>,
    updates_since_commit: usize,
}

impl<T: Scalar> LdlEngine<T> {
    /// Both matrices start uniform at `1/C`.
    pub fn new(layout: DomainLayout) -> Result<Self> {
        let c = layout.class_count();
        if c < 2 {
            return Err(LdlError::InvalidLayout(format!("need at least 2 classes, got {c}")));
        }
        if layout.domain_count() < 2 {
            return Err(LdlError::InvalidLayout(format!("need at least 2 domains, got {}", layout.domain_count())));
        }
        let tracking = TrackingMatrix::uniform(c);
        let labels = LabelDistributionSet::uniform(c);
        let committed_source = labels.entries.clone();
        Ok(Self { layout, tracking, labels, committed_source, updates_since_commit: 0 })
    }

    /// Rebuilds an engine from saved matrices. Both must be row-stochastic.
    pub fn from_parts(
        layout: DomainLayout,
        tracking: Array2<T>,
        labels: Array2<T>,
        committed_epoch: usize,
    ) -> Result<Self> {
        let mut engine = Self::new(layout)?;
        let c = engine.class_count();
        for (name, m) in [("tracking", &tracking), ("label distribution", &labels)] {
            if m.dim() != (c, c) {
                return Err(LdlError::ShapeMismatch(format!("{name} matrix is {:?}, expected ({c}, {c})", m.dim())));
            }
            for row in m.rows() {
                check_probability_vector(row.as_slice().unwrap_or(&row.to_vec()), c)?;
            }
        }
        engine.committed_source = tracking.clone();
        for i in 0..c {
            zero_same_domain(&engine.layout, i, &mut engine.committed_source.row_mut(i));
        }
        engine.tracking = TrackingMatrix { entries: tracking };
        engine.labels = LabelDistributionSet { entries: labels, committed_epoch };
        Ok(engine)
    }

    pub fn layout(&self) -> &DomainLayout {
        &self.layout
    }

    pub fn class_count(&self) -> usize {
        self.layout.class_count()
    }

    pub fn tracking(&self) -> &TrackingMatrix<T> {
        &self.tracking
    }

    pub fn labels(&self) -> &LabelDistributionSet<T> {
        &self.labels
    }

    pub fn updates_since_commit(&self) -> usize {
        self.updates_since_commit
    }

    /// `M_T[class] <- (1 - m) M_T[class] + m p`.
    ///
    /// `prediction` is renormalized to sum exactly to one before mixing so
    /// rows stay stochastic to rounding error.
    pub fn momentum_update(&mut self, class: usize, prediction: &[T], m: T) -> Result<()> {
        self.layout.check_class(class)?;
        check_momentum(m)?;
        let sum = check_probability_vector(prediction, self.class_count())?;
        self.apply_momentum(class, prediction, sum, m);
        self.updates_since_commit += 1;
        Ok(())
    }

    fn apply_momentum(&mut self, class: usize, prediction: &[T], sum: T, m: T) {
        let keep = T::one() - m;
        let mut row = self.tracking.entries.row_mut(class);
        for (r, &p) in row.iter_mut().zip(prediction) {
            *r = keep * *r + m * (p / sum);
        }
    }

    /// Averages the predictions of each class present in the batch and applies
    /// one momentum step per class. Everything is validated before any row
    /// changes.
    pub fn batch_update<'a, I>(&mut self, predictions: I, m: T) -> Result<()>
    where
        I: IntoIterator<Item = (usize, &'a [T])>,
    {
        check_momentum(m)?;
        let c = self.class_count();
        let mut grouped: BTreeMap<usize, (Vec<T>, usize)> = BTreeMap::new();
        for (class, p) in predictions {
            self.layout.check_class(class)?;
            check_probability_vector(p, c)?;
            let (acc, n) = grouped.entry(class).or_insert_with(|| (vec![T::zero(); c], 0));
            for (a, &x) in acc.iter_mut().zip(p) {
                *a += x;
            }
            *n += 1;
        }
        for (class, (mut acc, n)) in grouped {
            let n = T::of_usize(n);
            acc.iter_mut().for_each(|a| *a /= n);
            let sum: T = acc.iter().copied().sum();
            self.apply_momentum(class, &acc, sum, m);
            self.updates_since_commit += 1;
        }
        Ok(())
    }

    /// Copies the tracking matrix into the label-distribution set and applies
    /// `variant` to every row. On error the label set is left unchanged.
    pub fn commit_epoch(&mut self, variant: Redistribution) -> Result<()> {
        self.commit_with(variant, None)
    }

    /// Like [`commit_epoch`](Self::commit_epoch) with [`Redistribution::Ldl3`],
    /// but every diagonal entry is first overwritten with `own`. The remaining
    /// `1 - own` is spread over the other domains.
    pub fn commit_epoch_pinned(&mut self, own: T) -> Result<()> {
        if !(own >= T::zero() && own <= T::one()) {
            return Err(LdlError::NotAProbabilityVector(format!("pinned diagonal {own}")));
        }
        self.commit_with(Redistribution::Ldl3, Some(own))
    }

    fn commit_with(&mut self, variant: Redistribution, pinned: Option<T>) -> Result<()> {
        let mut next = self.tracking.entries.clone();
        let mut source = self.tracking.entries.clone();
        for i in 0..self.class_count() {
            zero_same_domain(&self.layout, i, &mut source.row_mut(i));
            let mut row = next.row_mut(i);
            if let Some(own) = pinned {
                row[i] = own;
            }
            redistribute_row(&self.layout, i, row, variant)?;
        }
        self.labels.entries = next;
        self.labels.committed_epoch += 1;
        self.committed_source = source;
        self.updates_since_commit = 0;
        Ok(())
    }

    /// Replaces the label-distribution set with a pinned-diagonal version of
    /// the current one without advancing the epoch counter.
    pub fn pin_labels(&mut self, own: T) -> Result<()> {
        let mut next = self.labels.entries.clone();
        for i in 0..self.class_count() {
            let mut row = next.row_mut(i);
            row[i] = own;
            redistribute_row(&self.layout, i, row, Redistribution::Ldl3)?;
        }
        self.labels.entries = next;
        Ok(())
    }

    /// Similarity between `class` and another domain, measured on the row
    /// committed at the last epoch boundary before redistribution.
    pub fn domain_similarity(&self, class: usize, domain: usize) -> Result<T> {
        self.layout.check_class(class)?;
        if domain >= self.layout.domain_count() {
            return Err(LdlError::DomainOutOfRange { domain, domain_count: self.layout.domain_count() });
        }
        if domain == self.layout.domain_of(class) {
            return Err(LdlError::SameDomainQuery { class, domain });
        }
        Ok(row_domain_similarity(&self.layout, self.committed_source.row(class), domain))
    }

    /// Average of [`domain_similarity`](Self::domain_similarity) over all
    /// other domains. Diagnostic only; it cancels out of the redistribution.
    pub fn mean_cross_similarity(&self, class: usize) -> Result<T> {
        self.layout.check_class(class)?;
        let mut total = T::zero();
        for d in self.layout.cross_domains(class) {
            total += self.domain_similarity(class, d)?;
        }
        Ok(total / T::of_usize(self.layout.domain_count() - 1))
    }

    /// Mass of the committed label row of `class` on each other domain.
    pub fn per_domain_mass(&self, class: usize) -> Result<Vec<(usize, T)>> {
        self.layout.check_class(class)?;
        let row = self.labels.row(class);
        Ok(self
            .layout
            .cross_domains(class)
            .map(|d| (d, self.layout.classes_in(d).iter().map(|&j| row[j]).sum()))
            .collect())
    }

    /// Largest deviation of the committed label set from the equal-attention
    /// mass law, over all classes and other domains.
    pub fn mass_law_residual(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.class_count() {
            let own = self.labels.row(i)[i];
            let cross = T::of_usize(self.layout.cross_class_count(i));
            for (d, mass) in self.per_domain_mass(i).expect("class in range") {
                let expected = (T::one() - own) * T::of_usize(self.layout.count(d)) / cross;
                worst = worst.max((mass - expected).abs());
            }
        }
        worst
    }

    /// Table of cross-domain similarities and their spread, read from the
    /// tracking matrix.
    pub fn similarity_report(&self) -> Vec<ClassSimilarity> {
        similarity_table(&self.layout, self.tracking.entries())
    }
}
