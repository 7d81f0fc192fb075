use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Tensor<T> {
    /// Softmax cross entropy of `(N, C)` or `(N, C, H, W)` logits against
    /// class indices laid out as `N` or `N·H·W` (row-major).
    ///
    /// Targets equal to `ignore` contribute nothing. With `class_weights`
    /// the result is the weighted mean `Σ w_y·nll / Σ w_y`, otherwise the
    /// plain mean over the counted entries.
    pub fn cross_entropy(
        &self,
        targets: &[usize],
        ignore: Option<usize>,
        class_weights: Option<&[T]>,
    ) -> Result<Tensor<T>> {
        let (n, c, spatial) = match *self.shape() {
            [n, c] => (n, c, 1),
            [n, c, h, w] => (n, c, h * w),
            _ => {
                return Err(TensorError::Rank {
                    op: "cross_entropy",
                    expected: 4,
                    shape: self.shape().to_vec(),
                })
            }
        };
        if targets.len() != n * spatial {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(wts) = class_weights {
            if wts.len() != c {
                return Err(TensorError::ShapeMismatch {
                    op: "cross_entropy weights",
                    lhs: vec![c],
                    rhs: vec![wts.len()],
                });
            }
        }
        let logits = self.data();
        let mut probs = vec![T::zero(); logits.len()];
        let mut total = T::zero();
        let mut norm = T::zero();
        for b in 0..n {
            for p in 0..spatial {
                let t = targets[b * spatial + p];
                if Some(t) == ignore {
                    continue;
                }
                if t >= c {
                    return Err(TensorError::Invalid {
                        op: "cross_entropy",
                        msg: format!("target {t} outside {c} classes"),
                    });
                }
                let at = |k: usize| (b * c + k) * spatial + p;
                let max = (0..c).map(|k| logits[at(k)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for k in 0..c {
                    let e = (logits[at(k)] - max).exp();
                    probs[at(k)] = e;
                    z = z + e;
                }
                for k in 0..c {
                    probs[at(k)] = probs[at(k)] / z;
                }
                let wt = class_weights.map_or(T::one(), |w| w[t]);
                total = total + wt * (z.ln() + max - logits[at(t)]);
                norm = norm + wt;
            }
        }
        if norm <= T::zero() {
            return Err(TensorError::Empty("cross_entropy"));
        }
        let weights = class_weights.map(<[T]>::to_vec);
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![total / norm],
            Vec::new(),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut d = vec![T::zero(); n * c * spatial];
                let scale = g[0] / norm;
                for b in 0..n {
                    for p in 0..spatial {
                        let t = targets[b * spatial + p];
                        if Some(t) == ignore {
                            continue;
                        }
                        let wt = weights.as_ref().map_or(T::one(), |w| w[t]) * scale;
                        for k in 0..c {
                            let i = (b * c + k) * spatial + p;
                            let onehot = if k == t { T::one() } else { T::zero() };
                            d[i] = wt * (probs[i] - onehot);
                        }
                    }
                }
                vec![Some(d)]
            }),
        ))
    }
}
