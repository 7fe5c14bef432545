//! 2-D convolution: direct reference loop, im2col fast path, and backward.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{gemm_nn_acc, gemm_nt_acc, gemm_tn_acc};

/// Explicit per-side zero padding in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Padding such that the output spatial extent is ceil(input/stride).
    /// The odd remainder goes to bottom/right.
    pub fn same(in_h: usize, in_w: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let pad_total = |n: usize, k: usize| -> usize {
            let out = n.div_ceil(stride);
            ((out - 1) * stride + k).saturating_sub(n)
        };
        let ph = pad_total(in_h, kh);
        let pw = pad_total(in_w, kw);
        Padding {
            top: ph / 2,
            bottom: ph - ph / 2,
            left: pw / 2,
            right: pw - pw / 2,
        }
    }
}

/// Weights and hyper-parameters of one convolutional layer.
#[derive(Debug, Clone)]
pub struct ConvParams<S> {
    pub weights: Tensor<S>, // (out_channels, in_channels, kh, kw)
    pub bias: Vec<S>,       // out_channels
    pub stride: usize,
    pub padding: Padding,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(weights: Tensor<S>, bias: Vec<S>, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArg("conv stride must be >= 1".into()));
        }
        if bias.len() != weights.shape()[0] {
            return Err(Error::shape("ConvParams::new", weights.shape()[0], bias.len()));
        }
        Ok(ConvParams {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }
    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weights.shape();
        (s[2], s[3])
    }

    /// Output spatial dims for a given input, or an error when the padded
    /// input is smaller than the kernel.
    pub fn out_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let ph = in_h + self.padding.top + self.padding.bottom;
        let pw = in_w + self.padding.left + self.padding.right;
        if ph < kh || pw < kw {
            return Err(Error::shape(
                "conv2d out_dims",
                format!("padded input >= {kh}x{kw} kernel"),
                format!("{ph}x{pw}"),
            ));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<(usize, usize)> {
        if input.channels() != self.in_channels() {
            return Err(Error::shape(
                "conv2d input channels",
                self.in_channels(),
                input.channels(),
            ));
        }
        input.check_finite("conv2d input")?;
        self.out_dims(input.height(), input.width())
    }
}

/// Gradients of one conv layer plus the gradient flowing to its input.
#[derive(Debug, Clone)]
pub struct ConvGrads<S> {
    pub dweights: Tensor<S>,
    pub dbias: Vec<S>,
    pub dinput: Tensor<S>,
}

/// Reference direct-loop convolution. Slow but obviously correct; the im2col
/// path is checked against it.
pub fn conv2d_forward<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>) -> Result<Tensor<S>> {
    let (oh, ow) = params.check_input(input)?;
    let [n, in_c, h, w] = input.shape();
    let out_c = params.out_channels();
    let (kh, kw) = params.kernel();
    let stride = params.stride;
    let pad = params.padding;

    let mut out = Tensor::zeros([n, out_c, oh, ow]);
    for bi in 0..n {
        for oc in 0..out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = params.bias[oc].to_acc();
                    for ic in 0..in_c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad.top as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad.left as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += input.at(bi, ic, iy as usize, ix as usize).to_acc()
                                    * params.weights.at(oc, ic, ky, kx).to_acc();
                            }
                        }
                    }
                    out.set(bi, oc, oy, ox, S::from_acc(acc));
                }
            }
        }
    }
    out.check_finite("conv2d_forward")?;
    Ok(out)
}

/// Unroll one (C,H,W) sample into a (C·kh·kw) × (oh·ow) column matrix.
fn im2col<S: Scalar>(
    sample: &[S],
    in_c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: Padding,
    oh: usize,
    ow: usize,
) -> Vec<S> {
    let l = oh * ow;
    let mut col = vec![S::zero(); in_c * kh * kw * l];
    for ic in 0..in_c {
        let plane = &sample[ic * h * w..(ic + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut col[((ic * kh + ky) * kw + kx) * l..][..l];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad.top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad.left as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add a column-matrix gradient back onto an input sample.
fn col2im_acc(
    dcol: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: Padding,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let l = oh * ow;
    for ic in 0..in_c {
        let plane = &mut dx[ic * h * w..(ic + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &dcol[((ic * kh + ky) * kw + kx) * l..][..l];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad.top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &g) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad.left as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// im2col + GEMM convolution; same contract as [`conv2d_forward`].
/// Parallel over batch elements; per-element results are independent, so the
/// output is identical for any worker count.
pub fn conv2d_forward_im2col<S: Scalar>(
    input: &Tensor<S>,
    params: &ConvParams<S>,
) -> Result<Tensor<S>> {
    let (oh, ow) = params.check_input(input)?;
    let [n, in_c, h, w] = input.shape();
    let out_c = params.out_channels();
    let (kh, kw) = params.kernel();
    let k = in_c * kh * kw;
    let l = oh * ow;

    let samples: Vec<Vec<S>> = (0..n)
        .into_par_iter()
        .map(|bi| {
            let col = im2col(
                input.sample(bi),
                in_c,
                h,
                w,
                kh,
                kw,
                params.stride,
                params.padding,
                oh,
                ow,
            );
            let mut acc = vec![0.0f64; out_c * l];
            for (oc, chunk) in acc.chunks_mut(l).enumerate() {
                chunk.fill(params.bias[oc].to_acc());
            }
            gemm_nn_acc(out_c, k, l, params.weights.data(), &col, &mut acc);
            acc.into_iter().map(S::from_acc).collect()
        })
        .collect();

    let mut data = Vec::with_capacity(n * out_c * l);
    for s in samples {
        data.extend_from_slice(&s);
    }
    let out = Tensor::new([n, out_c, oh, ow], data)?;
    out.check_finite("conv2d_forward_im2col")?;
    Ok(out)
}

/// Backward pass: gradients w.r.t. weights, bias and input.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &ConvParams<S>,
    upstream: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let (oh, ow) = params.check_input(input)?;
    let [n, in_c, h, w] = input.shape();
    let out_c = params.out_channels();
    let expect = [n, out_c, oh, ow];
    if upstream.shape() != expect {
        return Err(Error::shape(
            "conv2d_backward upstream",
            format!("{expect:?}"),
            format!("{:?}", upstream.shape()),
        ));
    }
    let (kh, kw) = params.kernel();
    let k = in_c * kh * kw;
    let l = oh * ow;

    // Per-sample contributions in batch order, then a sequential reduction so
    // results do not depend on thread scheduling.
    let per_sample: Vec<(Vec<S>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|bi| {
            let col = im2col(
                input.sample(bi),
                in_c,
                h,
                w,
                kh,
                kw,
                params.stride,
                params.padding,
                oh,
                ow,
            );
            let dy = upstream.sample(bi);

            // dW_n = dY_n · col_n^T  (out_c×L · L×K)
            let mut dw = vec![0.0f64; out_c * k];
            gemm_nt_acc(out_c, l, k, dy, &col, &mut dw);

            // db_n = per-channel sum of dY_n
            let mut db = vec![0.0f64; out_c];
            for (oc, chunk) in dy.chunks(l).enumerate() {
                db[oc] = chunk.iter().map(|g| g.to_acc()).sum();
            }

            // dcol = W^T · dY_n  (K×out_c · out_c×L), then scatter back.
            let mut dcol = vec![0.0f64; k * l];
            gemm_tn_acc(k, out_c, l, params.weights.data(), dy, &mut dcol);
            let mut dx = vec![0.0f64; in_c * h * w];
            col2im_acc(
                &dcol,
                in_c,
                h,
                w,
                kh,
                kw,
                params.stride,
                params.padding,
                oh,
                ow,
                &mut dx,
            );
            let dx = dx.into_iter().map(S::from_acc).collect::<Vec<_>>();
            (dx, dw, db)
        })
        .collect();

    let mut dw_acc = vec![0.0f64; out_c * k];
    let mut db_acc = vec![0.0f64; out_c];
    let mut dinput = Tensor::zeros([n, in_c, h, w]);
    for (bi, (dx, dw, db)) in per_sample.into_iter().enumerate() {
        dinput.sample_mut(bi).copy_from_slice(&dx);
        for (a, g) in dw_acc.iter_mut().zip(&dw) {
            *a += g;
        }
        for (a, g) in db_acc.iter_mut().zip(&db) {
            *a += g;
        }
    }

    Ok(ConvGrads {
        dweights: Tensor::new(
            params.weights.shape(),
            dw_acc.into_iter().map(S::from_acc).collect(),
        )?,
        dbias: db_acc.into_iter().map(S::from_acc).collect(),
        dinput,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_kernel(out_c: usize, in_c: usize, kh: usize, kw: usize) -> Tensor<f64> {
        Tensor::full([out_c, in_c, kh, kw], 1.0)
    }

    #[test]
    fn all_ones_same_padding_counts_window_overlap() {
        let input = Tensor::full([1, 1, 3, 3], 1.0);
        let params = ConvParams::new(ones_kernel(1, 1, 3, 3), vec![0.0], 1, Padding::uniform(1))
            .unwrap();
        let out = conv2d_forward(&input, &params).unwrap();
        assert_eq!(out.shape(), [1, 1, 3, 3]);
        // Output = number of input cells each window overlaps: center window
        // covers all nine ones, an edge window six, a corner window four.
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        assert_eq!(out.at(0, 0, 0, 1), 6.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 2, 2), 4.0);
    }

    #[test]
    fn zero_kernel_yields_constant_bias() {
        let input = Tensor::from_fn([2, 1, 6, 7], |i| (i % 13) as f32 * 0.5);
        let params = ConvParams::new(
            Tensor::zeros([3, 1, 5, 5]),
            vec![1.5, -2.0, 0.25],
            2,
            Padding::same(6, 7, 5, 5, 2),
        )
        .unwrap();
        let out = conv2d_forward(&input, &params).unwrap();
        assert_eq!(out.shape(), [2, 3, 3, 4]);
        for bi in 0..2 {
            for (oc, &b) in [1.5f32, -2.0, 0.25].iter().enumerate() {
                for oy in 0..3 {
                    for ox in 0..4 {
                        assert_eq!(out.at(bi, oc, oy, ox), b);
                    }
                }
            }
        }
    }

    #[test]
    fn stride2_same_padding_halves_300_down_to_3() {
        // 300 -> 150 -> 75 -> 38 -> 19 -> 10 -> 5 -> 3 under ceil(n/2).
        let mut sizes = Vec::new();
        let mut hw = 300usize;
        for _ in 0..7 {
            let params = ConvParams::new(
                Tensor::<f32>::zeros([1, 1, 5, 5]),
                vec![0.0],
                2,
                Padding::same(hw, hw, 5, 5, 2),
            )
            .unwrap();
            let (oh, ow) = params.out_dims(hw, hw).unwrap();
            assert_eq!(oh, ow);
            hw = oh;
            sizes.push(oh);
        }
        assert_eq!(sizes, vec![150, 75, 38, 19, 10, 5, 3]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let input = Tensor::<f32>::zeros([1, 2, 8, 8]);
        let params = ConvParams::new(
            Tensor::zeros([4, 3, 5, 5]),
            vec![0.0; 4],
            1,
            Padding::default(),
        )
        .unwrap();
        assert!(conv2d_forward(&input, &params).is_err());
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut input = Tensor::<f32>::zeros([1, 1, 8, 8]);
        input.data_mut()[3] = f32::INFINITY;
        let params = ConvParams::new(
            Tensor::zeros([1, 1, 5, 5]),
            vec![0.0],
            1,
            Padding::default(),
        )
        .unwrap();
        assert!(matches!(
            conv2d_forward(&input, &params),
            Err(crate::error::Error::NonFinite { .. })
        ));
    }

    #[test]
    fn im2col_matches_direct_on_ones_case() {
        let input = Tensor::full([1, 1, 3, 3], 1.0f32);
        let params = ConvParams::new(
            Tensor::full([1, 1, 3, 3], 1.0),
            vec![0.0],
            1,
            Padding::uniform(1),
        )
        .unwrap();
        let a = conv2d_forward(&input, &params).unwrap();
        let b = conv2d_forward_im2col(&input, &params).unwrap();
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-5);
        }
        assert_eq!(b.at(0, 0, 1, 1), 9.0);
        assert_eq!(b.at(0, 0, 0, 0), 4.0);
    }

    #[test]
    fn im2col_empty_batch() {
        let input = Tensor::<f32>::zeros([0, 2, 8, 8]);
        let params = ConvParams::new(
            Tensor::zeros([3, 2, 5, 5]),
            vec![0.0; 3],
            2,
            Padding::same(8, 8, 5, 5, 2),
        )
        .unwrap();
        let out = conv2d_forward_im2col(&input, &params).unwrap();
        assert_eq!(out.shape(), [0, 3, 4, 4]);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let input = Tensor::from_fn([2, 1, 6, 6], |i| (i as f32).sin());
        let params = ConvParams::new(
            Tensor::from_fn([2, 1, 3, 3], |i| 0.1 * i as f32),
            vec![0.5, -0.5],
            1,
            Padding::default(),
        )
        .unwrap();
        let up = Tensor::zeros([2, 2, 4, 4]);
        let g = conv2d_backward(&input, &params, &up).unwrap();
        assert!(g.dweights.data().iter().all(|&x| x == 0.0));
        assert!(g.dbias.iter().all(|&x| x == 0.0));
        assert!(g.dinput.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_upstream_element_selects_input_window() {
        // With exactly one upstream 1.0, dW equals the input window that
        // produced that output element.
        let input = Tensor::from_fn([1, 1, 5, 5], |i| i as f64);
        let params = ConvParams::new(
            Tensor::from_fn([1, 1, 3, 3], |i| (i as f64) * 0.01),
            vec![0.0],
            1,
            Padding::default(),
        )
        .unwrap();
        let mut up = Tensor::zeros([1, 1, 3, 3]);
        up.set(0, 0, 1, 2, 1.0); // output position (1,2) -> input window rows 1..4, cols 2..5
        let g = conv2d_backward(&input, &params, &up).unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                assert_eq!(g.dweights.at(0, 0, ky, kx), input.at(0, 0, 1 + ky, 2 + kx));
            }
        }
        assert_eq!(g.dbias[0], 1.0);
    }

    #[test]
    fn backward_rejects_wrong_upstream_shape() {
        let input = Tensor::<f32>::zeros([1, 1, 6, 6]);
        let params = ConvParams::new(
            Tensor::zeros([1, 1, 3, 3]),
            vec![0.0],
            1,
            Padding::default(),
        )
        .unwrap();
        let up = Tensor::zeros([1, 1, 3, 3]);
        assert!(conv2d_backward(&input, &params, &up).is_err());
    }
}
