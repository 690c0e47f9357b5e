use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::encoder::Scalar;
use crate::error::{Error, Result};

/// Mixing weights of the joint relation/source loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub relation: f64,
    pub source: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            relation: 0.9,
            source: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.relation >= 0.0 && self.source >= 0.0 && (self.relation + self.source - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be non-negative and sum to 1, got {} and {}",
                self.relation, self.source
            )))
        }
    }
}

/// Cross-entropy of `logits` against `label`, with its gradient
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy<T: Scalar>(logits: ArrayView1<'_, T>, label: usize) -> Result<(T, Array1<T>)> {
    if label >= logits.len() {
        return Err(Error::Label {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.fold(T::neg_infinity(), |a, &b| a.max(b));
    let exp = logits.mapv(|v| (v - max).exp());
    let z = exp.sum();
    let loss = z.ln() + max - logits[label];
    let mut grad = exp / z;
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Loss of one instance and the gradients w.r.t. each set of logits.
#[derive(Debug, Clone)]
pub struct LossParts<T> {
    pub loss: T,
    pub d_relation: Array1<T>,
    pub d_source: Option<Array1<T>>,
}

/// Plain cross-entropy when there is no source head, otherwise the
/// weighted sum of the two cross-entropies.
pub fn loss<T: Scalar>(
    relation_logits: ArrayView1<'_, T>,
    source_logits: Option<ArrayView1<'_, T>>,
    relation_label: usize,
    source_label: Option<usize>,
    weights: LossWeights,
) -> Result<LossParts<T>> {
    let (rel, d_rel) = cross_entropy(relation_logits, relation_label)?;
    let Some(src_logits) = source_logits else {
        return Ok(LossParts {
            loss: rel,
            d_relation: d_rel,
            d_source: None,
        });
    };
    let src_label = source_label
        .ok_or_else(|| Error::InconsistentLabels("source head present but instance has no source label".into()))?;
    let (src, d_src) = cross_entropy(src_logits, src_label)?;
    let wr = T::from_f64(weights.relation).unwrap();
    let ws = T::from_f64(weights.source).unwrap();
    Ok(LossParts {
        loss: wr * rel + ws * src,
        d_relation: d_rel * wr,
        d_source: Some(d_src * ws),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Array1::<f64>::from_elem(17, 0.3);
        let (l, g) = cross_entropy(logits.view(), 4).unwrap();
        assert!((l - 17f64.ln()).abs() < 1e-12);
        assert!((g.sum()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_near_zero_loss() {
        let (l, _) = cross_entropy(array![0.0f64, 60.0, 0.0].view(), 1).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn bad_label_is_rejected() {
        assert!(matches!(
            cross_entropy(array![0.0f32, 1.0].view(), 2),
            Err(Error::Label { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn weighted_sum() {
        let r = array![1.0f64, 2.0, 0.5];
        let s = array![0.2f64, -1.0, 0.0];
        let (lr, _) = cross_entropy(r.view(), 0).unwrap();
        let (ls, _) = cross_entropy(s.view(), 2).unwrap();
        let p = loss(r.view(), Some(s.view()), 0, Some(2), LossWeights::default()).unwrap();
        assert!((p.loss - (0.9 * lr + 0.1 * ls)).abs() < 1e-12);
        let only = loss(
            r.view(),
            Some(s.view()),
            0,
            Some(2),
            LossWeights {
                relation: 1.0,
                source: 0.0,
            },
        )
        .unwrap();
        assert_eq!(only.loss.to_bits(), lr.to_bits());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(LossWeights {
            relation: 0.5,
            source: 0.4
        }
        .validate()
        .is_err());
        LossWeights::default().validate().unwrap();
    }
}
