//! Loss terms and their gradients.
//!
//! Classification-style losses return gradients with respect to the logits;
//! the triplet loss returns gradients with respect to the features.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to this before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Tolerance on the sum of a target distribution.
pub const TARGET_SUM_TOL: f64 = 1e-6;

pub const DEFAULT_MARGIN: f64 = 0.3;
pub const DEFAULT_SMOOTHING: f64 = 0.1;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if let Some(k) = logits.iter().position(|x| !x.is_finite()) {
        return Err(LdlError::NonFiniteInput(format!("logit {k} = {}", logits[k])));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: T = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        let p = softmax(&row.to_vec())?;
        out.row_mut(i).iter_mut().zip(p).for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

/// Shannon entropy in nats.
pub fn entropy<T: Scalar>(dist: &[T]) -> T {
    dist.iter().filter(|&&l| l > T::zero()).map(|&l| -l * l.ln()).sum()
}

/// Soft-target cross entropy `-sum l_k log p_k` and its gradient with respect
/// to the logits that produced `probs`.
///
/// The gradient is `p - l`, which holds because the target sums to one.
pub fn ldl_loss<T: Scalar>(probs: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if probs.len() != target.len() {
        return Err(LdlError::LengthMismatch { expected: probs.len(), actual: target.len() });
    }
    let sum: T = target.iter().copied().sum();
    if (sum.as_f64() - 1.0).abs() > TARGET_SUM_TOL || target.iter().any(|&l| l < T::zero()) {
        return Err(LdlError::NotAProbabilityVector(format!("target sums to {sum}")));
    }
    let clamp = T::of(LOG_CLAMP);
    let loss = probs.iter().zip(target).filter(|(_, &l)| l != T::zero()).map(|(&p, &l)| -l * p.max(clamp).ln()).sum();
    let grad = probs.iter().zip(target).map(|(&p, &l)| p - l).collect();
    Ok((loss, grad))
}

/// Smoothed one-hot target: `(1 - eps)` on `class` plus `eps / C` everywhere.
pub fn smoothed_target<T: Scalar>(class_count: usize, class: usize, epsilon: T) -> Result<Vec<T>> {
    if !(epsilon >= T::zero() && epsilon < T::one()) {
        return Err(LdlError::InvalidEpsilon(epsilon.as_f64()));
    }
    if class >= class_count {
        return Err(LdlError::ClassOutOfRange { class, class_count });
    }
    let base = epsilon / T::of_usize(class_count);
    let mut y = vec![base; class_count];
    y[class] += T::one() - epsilon;
    Ok(y)
}

/// Label-smoothed cross entropy.
pub fn smoothed_ce_loss<T: Scalar>(probs: &[T], class: usize, epsilon: T) -> Result<(T, Vec<T>)> {
    let target = smoothed_target(probs.len(), class, epsilon)?;
    ldl_loss(probs, &target)
}

fn euclidean<T: Scalar>(features: ArrayView2<'_, T>, a: usize, b: usize) -> T {
    features.row(a).iter().zip(features.row(b)).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Hardest positive and negative chosen for one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinedTriplet<T> {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub loss: T,
}

/// Per-anchor hardest-pair selection. Ties keep the lowest index.
pub fn mine_hardest<T: Scalar>(features: ArrayView2<'_, T>, ids: &[usize], margin: T) -> Result<Vec<MinedTriplet<T>>> {
    let n = features.nrows();
    if ids.len() != n {
        return Err(LdlError::LengthMismatch { expected: n, actual: ids.len() });
    }
    let mut dist = Array2::<T>::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let d = euclidean(features, a, b);
            dist[[a, b]] = d;
            dist[[b, a]] = d;
        }
    }
    (0..n)
        .map(|a| {
            let mut pos: Option<(usize, T)> = None;
            let mut neg: Option<(usize, T)> = None;
            for b in 0..n {
                if b == a {
                    continue;
                }
                let d = dist[[a, b]];
                if ids[b] == ids[a] {
                    if pos.is_none_or(|(_, best)| d > best) {
                        pos = Some((b, d));
                    }
                } else if neg.is_none_or(|(_, best)| d < best) {
                    neg = Some((b, d));
                }
            }
            let (positive, d_pos) = pos.ok_or(LdlError::NoValidTriplet { anchor: a, missing: "positive" })?;
            let (negative, d_neg) = neg.ok_or(LdlError::NoValidTriplet { anchor: a, missing: "negative" })?;
            let loss = (margin + d_pos - d_neg).max(T::zero());
            Ok(MinedTriplet { anchor: a, positive, negative, loss })
        })
        .collect()
}

/// Batch-hard triplet loss on raw Euclidean distances, averaged over anchors,
/// with its gradient with respect to `features`.
///
/// Gradient flows only through the selected hardest pairs of anchors whose
/// hinge is active. Coincident points contribute zero gradient.
pub fn batch_hard_triplet<T: Scalar>(features: ArrayView2<'_, T>, ids: &[usize], margin: T) -> Result<(T, Array2<T>)> {
    let mined = mine_hardest(features, ids, margin)?;
    let n = features.nrows();
    let scale = T::one() / T::of_usize(n);
    let mut grad = Array2::<T>::zeros(features.raw_dim());
    let mut total = T::zero();
    for t in &mined {
        total += t.loss;
        if t.loss <= T::zero() {
            continue;
        }
        // d/dx_a |x_a - x_b| = (x_a - x_b) / |x_a - x_b|
        for (other, sign) in [(t.positive, T::one()), (t.negative, -T::one())] {
            let d = euclidean(features, t.anchor, other);
            if d <= T::zero() {
                continue;
            }
            let coef = sign * scale / d;
            for k in 0..features.ncols() {
                let g = coef * (features[[t.anchor, k]] - features[[other, k]]);
                grad[[t.anchor, k]] += g;
                grad[[other, k]] -= g;
            }
        }
    }
    Ok((total * scale, grad))
}

/// Which terms enter the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `cls + tri + lambda * ldl`.
    #[default]
    Full,
    /// `tri + lambda * ldl`; the classification term is dropped.
    DistributionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T = f64> {
    pub cls: T,
    pub tri: T,
    pub ldl: T,
    pub total: T,
    pub lambda: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn map<U: Scalar>(self, f: impl Fn(T) -> U) -> LossBreakdown<U> {
        LossBreakdown {
            cls: f(self.cls),
            tri: f(self.tri),
            ldl: f(self.ldl),
            total: f(self.total),
            lambda: f(self.lambda),
        }
    }
}

/// Combines the three loss terms. Under [`Composition::DistributionOnly`] the
/// reported `cls` is zero so `total = cls + tri + lambda * ldl` always holds.
pub fn overall_loss<T: Scalar>(cls: T, tri: T, ldl: T, lambda: T, mode: Composition) -> LossBreakdown<T> {
    let cls = match mode {
        Composition::Full => cls,
        Composition::DistributionOnly => T::zero(),
    };
    LossBreakdown { cls, tri, ldl, total: cls + tri + lambda * ldl, lambda }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64; 4]).unwrap(), vec![0.25; 4]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
        let a = softmax(&[0.3f64, -1.2, 2.0]).unwrap();
        let b = softmax(&[100.3f64, 98.8, 102.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
        let big = softmax(&[1000.0f64, 0.0]).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(LdlError::NonFiniteInput(_))));
    }

    #[test]
    fn ldl_loss_examples() {
        let (loss, grad) = ldl_loss(&[0.25f64; 4], &[0.25; 4]).unwrap();
        assert_abs_diff_eq!(loss, 4f64.ln(), epsilon = 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
        let (_, grad) = ldl_loss(&[0.7f64, 0.3], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(grad[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(grad[1], -0.2, epsilon = 1e-15);
        assert!(matches!(ldl_loss(&[0.5f64, 0.5], &[1.0]), Err(LdlError::LengthMismatch { .. })));
        let (loss, _) = ldl_loss(&[1.0f64, 0.0], &[0.5, 0.5]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn smoothed_ce_examples() {
        let p = [0.2f64, 0.5, 0.3];
        let (loss, _) = smoothed_ce_loss(&p, 1, 0.0).unwrap();
        assert_abs_diff_eq!(loss, -(0.5f64.ln()), epsilon = 1e-15);
        let (loss, _) = smoothed_ce_loss(&[1.0f64 - 1e-15, 1e-15], 0, 0.0).unwrap();
        assert!(loss < 1e-12);
        let (loss, _) = smoothed_ce_loss(&[0.1f64; 10], 3, 0.1).unwrap();
        assert_abs_diff_eq!(loss, 10f64.ln(), epsilon = 1e-12);
        assert!(matches!(smoothed_ce_loss(&p, 0, 1.0), Err(LdlError::InvalidEpsilon(_))));
        assert!(matches!(smoothed_ce_loss(&p, 0, -0.1), Err(LdlError::InvalidEpsilon(_))));
        let y = smoothed_target::<f64>(4, 2, 0.1).unwrap();
        assert_abs_diff_eq!(y[2], 0.925, epsilon = 1e-15);
        assert_abs_diff_eq!(y.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn triplet_examples() {
        let ids = [0, 0, 1, 1];
        let f = array![[0.0f64], [0.1], [1.0], [1.1]];
        let (loss, grad) = batch_hard_triplet(f.view(), &ids, 0.3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));

        let f = array![[0.0f64], [0.5], [0.6], [1.1]];
        let (loss, _) = batch_hard_triplet(f.view(), &ids, 0.3).unwrap();
        // anchors: 0 -> 0.3+0.5-0.6 = 0.2; 1 -> 0.3+0.5-0.1 = 0.7;
        //          2 -> 0.3+0.5-0.1 = 0.7; 3 -> 0.3+0.5-0.6 = 0.2
        assert_abs_diff_eq!(loss, (0.2 + 0.7 + 0.7 + 0.2) / 4.0, epsilon = 1e-12);
        let mined = mine_hardest(f.view(), &ids, 0.3).unwrap();
        assert_abs_diff_eq!(mined[0].loss, 0.2, epsilon = 1e-12);

        let clusters = array![[0.0f64, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]];
        let (loss, grad) = batch_hard_triplet(clusters.view(), &ids, 0.3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn triplet_coincident_points_have_zero_gradient() {
        let f = array![[1.0f64, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let (loss, grad) = batch_hard_triplet(f.view(), &[0, 0, 1, 1], 0.3).unwrap();
        assert_abs_diff_eq!(loss, 0.3, epsilon = 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn triplet_requires_positive_and_negative() {
        let f = array![[0.0f64], [1.0], [2.0]];
        assert!(matches!(
            batch_hard_triplet(f.view(), &[0, 0, 1], 0.3),
            Err(LdlError::NoValidTriplet { anchor: 2, missing: "positive" })
        ));
        assert!(matches!(
            batch_hard_triplet(f.view(), &[0, 0, 0], 0.3),
            Err(LdlError::NoValidTriplet { missing: "negative", .. })
        ));
        assert!(matches!(batch_hard_triplet(f.view(), &[0, 0], 0.3), Err(LdlError::LengthMismatch { .. })));
    }

    #[test]
    fn overall_examples() {
        let b = overall_loss(1.0f64, 0.5, 0.25, 0.0, Composition::Full);
        assert_eq!(b.total, 1.5);
        let b = overall_loss(1.0f64, 0.5, 0.25, 1.0, Composition::Full);
        assert_eq!(b.total, 1.75);
        let b = overall_loss(1.0f64, 0.5, 0.25, 1.0, Composition::DistributionOnly);
        assert_eq!(b.cls, 0.0);
        assert_eq!(b.total, 0.75);
    }

    #[test]
    fn entropy_of_uniform() {
        assert_abs_diff_eq!(entropy(&[0.25f64; 4]), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(entropy(&[1.0f64, 0.0]), 0.0);
    }
}
