//! Elementwise arithmetic, activations, reductions and batch plumbing.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    /// Elementwise map with derivative `df(x)` expressed in terms of the input.
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T) -> T + 'static) -> Tensor<T> {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, p| {
                let x = p[0].data();
                vec![Some(g.iter().zip(x).map(|(&g, &x)| g * df(x)).collect())]
            }),
        )
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, rhs)?;
        let data = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a + b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", self, rhs)?;
        let data = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a - b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.iter().map(|&g| -g).collect())]),
        ))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, rhs)?;
        let data = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a * b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g, p| {
                let (a, b) = (p[0].data(), p[1].data());
                let ga = p[0]
                    .requires_grad()
                    .then(|| g.iter().zip(b).map(|(&g, &b)| g * b).collect());
                let gb = p[1]
                    .requires_grad()
                    .then(|| g.iter().zip(a).map(|(&g, &a)| g * a).collect());
                vec![ga, gb]
            }),
        ))
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.unary(|x| x + c, |_| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        self.unary(|x| x * c, move |_| c)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.mul_scalar(-T::one())
    }

    pub fn sqr(&self) -> Tensor<T> {
        let two = T::one() + T::one();
        self.unary(|x| x * x, move |x| two * x)
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&self) -> Tensor<T> {
        self.unary(
            |x| x.abs(),
            |x| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            |x| if x > T::zero() { x } else { T::zero() },
            |x| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: T) -> Tensor<T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary(
            |x| x.tanh(),
            |x| {
                let y = x.tanh();
                T::one() - y * y
            },
        )
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let s = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![s],
            Vec::new(),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        if self.numel() == 0 {
            return Err(TensorError::Empty("mean_all"));
        }
        let inv = T::one() / T::from_usize(self.numel()).unwrap_or_else(T::one);
        Ok(self.sum_all().mul_scalar(inv))
    }

    /// `(N, C, H, W) -> (N, C)` spatial mean.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        let (n, c, h, w) = self.dims4()?;
        let hw = h * w;
        if hw == 0 {
            return Err(TensorError::Empty("global_avg_pool"));
        }
        let inv = T::one() / T::from_usize(hw).unwrap_or_else(T::one);
        let data = self
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(Tensor::from_op(
            data,
            vec![n, c],
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut out = Vec::with_capacity(g.len() * hw);
                for &gi in g {
                    out.extend(std::iter::repeat_n(gi * inv, hw));
                }
                vec![Some(out)]
            }),
        ))
    }

    /// Concatenate along the leading (batch) dimension.
    pub fn cat0(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or(TensorError::Empty("cat0"))?;
        let inner = &first.shape()[1..];
        let mut lead = 0;
        for p in parts {
            if p.rank() == 0 || &p.shape()[1..] != inner {
                return Err(TensorError::ShapeMismatch {
                    op: "cat0",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            lead += p.shape()[0];
        }
        let mut data = Vec::with_capacity(parts.iter().map(Tensor::numel).sum());
        for p in parts {
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(inner);
        let sizes: Vec<usize> = parts.iter().map(Tensor::numel).collect();
        Ok(Tensor::from_op(
            data,
            shape,
            parts.to_vec(),
            Box::new(move |g, _| {
                let mut offset = 0;
                sizes
                    .iter()
                    .map(|&len| {
                        let part = g[offset..offset + len].to_vec();
                        offset += len;
                        Some(part)
                    })
                    .collect()
            }),
        ))
    }

    /// Rows `start..start + len` of the leading dimension.
    pub fn narrow0(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        if self.rank() == 0 || start + len > self.shape()[0] {
            return Err(TensorError::Invalid {
                op: "narrow0",
                msg: format!("range {start}..{} out of {:?}", start + len, self.shape()),
            });
        }
        let row: usize = self.shape()[1..].iter().product();
        let data = self.data()[start * row..(start + len) * row].to_vec();
        let mut shape = self.shape().to_vec();
        shape[0] = len;
        let total = self.numel();
        Ok(Tensor::from_op(
            data,
            shape,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut full = vec![T::zero(); total];
                full[start * row..(start + len) * row].copy_from_slice(g);
                vec![Some(full)]
            }),
        ))
    }

    /// Index of the largest entry along dim 1, for `(N, C)` or `(N, C, H, W)`.
    /// Output is `N` or `N·H·W` long, row-major over the remaining dims.
    pub fn argmax_dim1(&self) -> Result<Vec<usize>> {
        let (n, c, spatial) = match *self.shape() {
            [n, c] => (n, c, 1),
            [n, c, h, w] => (n, c, h * w),
            _ => {
                return Err(TensorError::Rank {
                    op: "argmax_dim1",
                    expected: 4,
                    shape: self.shape().to_vec(),
                })
            }
        };
        let d = self.data();
        let mut out = Vec::with_capacity(n * spatial);
        for b in 0..n {
            for p in 0..spatial {
                let mut best = 0;
                let mut best_v = d[b * c * spatial + p];
                for k in 1..c {
                    let v = d[(b * c + k) * spatial + p];
                    if v > best_v {
                        best_v = v;
                        best = k;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }
}
