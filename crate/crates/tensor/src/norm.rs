use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Tensor<T> {
    /// Per-sample, per-channel normalization over the spatial dims, without
    /// learned affine parameters.
    pub fn instance_norm(&self, eps: T) -> Result<Tensor<T>> {
        let (_, _, h, w) = self.dims4()?;
        let hw = h * w;
        if hw == 0 {
            return Err(TensorError::Empty("instance_norm"));
        }
        let inv_n = T::one() / T::from_usize(hw).unwrap_or_else(T::one);
        let mut y = Vec::with_capacity(self.numel());
        let mut inv_std = Vec::with_capacity(self.numel() / hw);
        for plane in self.data().chunks_exact(hw) {
            let mean = plane.iter().copied().sum::<T>() * inv_n;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            y.extend(plane.iter().map(|&v| (v - mean) * is));
        }
        let saved = y.clone();
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut dx = Vec::with_capacity(g.len());
                for ((gp, yp), &is) in g.chunks_exact(hw).zip(saved.chunks_exact(hw)).zip(&inv_std) {
                    let g_mean = gp.iter().copied().sum::<T>() * inv_n;
                    let gy_mean = gp.iter().zip(yp).map(|(&a, &b)| a * b).sum::<T>() * inv_n;
                    dx.extend(gp.iter().zip(yp).map(|(&gi, &yi)| is * (gi - g_mean - yi * gy_mean)));
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// `y[n, c] = x[n, c] * scale[c] + shift[c]` with constant per-channel
    /// coefficients (gradient flows to `x` only).
    pub fn channel_affine(&self, scale: &[T], shift: &[T]) -> Result<Tensor<T>> {
        let (_, c, h, w) = self.dims4()?;
        if scale.len() != c || shift.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "channel_affine",
                lhs: self.shape().to_vec(),
                rhs: vec![scale.len(), shift.len()],
            });
        }
        let hw = h * w;
        let data = self
            .data()
            .chunks_exact(hw)
            .enumerate()
            .flat_map(|(i, plane)| {
                let (s, b) = (scale[i % c], shift[i % c]);
                plane.iter().map(move |&v| v * s + b)
            })
            .collect();
        let scale = scale.to_vec();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, _| {
                let dx = g
                    .chunks_exact(hw)
                    .enumerate()
                    .flat_map(|(i, gp)| {
                        let s = scale[i % c];
                        gp.iter().map(move |&v| v * s)
                    })
                    .collect();
                vec![Some(dx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_norm_output_is_standardized() {
        let x = Tensor::from_vec(
            (0..2 * 3 * 4 * 4).map(|i| (i as f64).sin() * 3.0 + 1.0).collect(),
            &[2, 3, 4, 4],
        )
        .unwrap();
        let y = x.instance_norm(0.0).unwrap();
        for plane in y.data().chunks_exact(16) {
            let mean: f64 = plane.iter().sum::<f64>() / 16.0;
            let var: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn channel_affine_applies_per_channel() {
        let x = Tensor::from_vec(vec![1.0f32, 1.0, 2.0, 2.0], &[1, 2, 1, 2]).unwrap();
        let y = x.channel_affine(&[2.0, -1.0], &[0.5, 0.0]).unwrap();
        assert_eq!(y.data(), &[2.5, 2.5, -2.0, -2.0]);
    }
}
