//! 2-D convolution (im2col + GEMM) and nearest-neighbour upsampling.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfold one image `(C, H, W)` into `(C·KH·KW, OH·OW)`.
    fn im2col<T: Real>(&self, x: &[T], col: &mut [T]) {
        let p = self.col_cols();
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-add columns back into an image.
    fn col2im<T: Real>(&self, col: &[T], x: &mut [T]) {
        let p = self.col_cols();
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut x[(c * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] = dst[ix as usize] + src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Zero-padded cross-correlation of `(N, C, H, W)` with `(O, C, KH, KW)`
    /// weights and optional `(O)` bias.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, stride: usize, pad: usize) -> Result<Tensor<T>> {
        let (n, c, h, w) = self.dims4()?;
        let (o, wc, kh, kw) = weight.dims4()?;
        if wc != c {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if let Some(b) = bias {
            if b.shape() != [o] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![o],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("kernel {kh}x{kw} stride {stride} pad {pad} on {h}x{w}"),
            });
        }
        let geom = ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        };
        let (k, p) = (geom.col_rows(), geom.col_cols());
        let mut col = vec![T::zero(); k * p];
        let mut out = vec![T::zero(); n * o * p];
        let wd = weight.data();
        for b in 0..n {
            geom.im2col(&self.data()[b * c * h * w..(b + 1) * c * h * w], &mut col);
            let dst = &mut out[b * o * p..(b + 1) * o * p];
            T::gemm(o, k, p, T::one(), wd, (k, 1), &col, (p, 1), T::zero(), dst, (p, 1));
            if let Some(bias) = bias {
                for (oc, &bv) in bias.data().iter().enumerate() {
                    dst[oc * p..(oc + 1) * p].iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            out,
            vec![n, o, geom.oh, geom.ow],
            parents,
            Box::new(move |g, parents| {
                let (x, wt) = (&parents[0], &parents[1]);
                let need_x = x.requires_grad();
                let need_w = wt.requires_grad();
                let mut dx = need_x.then(|| vec![T::zero(); x.numel()]);
                let mut dw = need_w.then(|| vec![T::zero(); wt.numel()]);
                let mut col = vec![T::zero(); k * p];
                let mut dcol = vec![T::zero(); k * p];
                let img = c * h * w;
                for b in 0..n {
                    let gb = &g[b * o * p..(b + 1) * o * p];
                    if let Some(dw) = dw.as_mut() {
                        geom.im2col(&x.data()[b * img..(b + 1) * img], &mut col);
                        // dW += dY · colᵀ
                        T::gemm(o, p, k, T::one(), gb, (p, 1), &col, (1, p), T::one(), dw, (k, 1));
                    }
                    if let Some(dx) = dx.as_mut() {
                        // dcol = Wᵀ · dY
                        T::gemm(
                            k,
                            o,
                            p,
                            T::one(),
                            wt.data(),
                            (1, k),
                            gb,
                            (p, 1),
                            T::zero(),
                            &mut dcol,
                            (p, 1),
                        );
                        geom.col2im(&dcol, &mut dx[b * img..(b + 1) * img]);
                    }
                }
                let mut grads = vec![dx, dw];
                if let Some(bias) = parents.get(2) {
                    grads.push(bias.requires_grad().then(|| {
                        let mut db = vec![T::zero(); o];
                        for b in 0..n {
                            for (oc, acc) in db.iter_mut().enumerate() {
                                *acc = g[(b * o + oc) * p..(b * o + oc + 1) * p]
                                    .iter()
                                    .fold(*acc, |s, &v| s + v);
                            }
                        }
                        db
                    }));
                }
                grads
            }),
        ))
    }

    /// Repeat every pixel into a `factor × factor` block.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor<T>> {
        let (n, c, h, w) = self.dims4()?;
        if factor == 0 {
            return Err(TensorError::Invalid {
                op: "upsample_nearest",
                msg: "factor must be positive".into(),
            });
        }
        let (oh, ow) = (h * factor, w * factor);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in self.data().chunks_exact(h * w) {
            for y in 0..oh {
                let row = &plane[(y / factor) * w..][..w];
                for x in 0..ow {
                    out.push(row[x / factor]);
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![n, c, oh, ow],
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for (plane, gp) in dx.chunks_exact_mut(h * w).zip(g.chunks_exact(oh * ow)) {
                    for y in 0..oh {
                        for x in 0..ow {
                            let i = (y / factor) * w + x / factor;
                            plane[i] = plane[i] + gp[y * ow + x];
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}
