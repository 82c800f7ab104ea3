//! Stateless kernels: convolution via im2col, pooling, activations, softmax,
//! L2 normalization and the clamped cross-entropy loss, with the backward
//! passes the layers need.

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output extent `ceil(in / stride)`; the missing rows/columns are split
    /// with the smaller half before the input.
    Same,
    /// No padding; output extent `(in - k) / stride + 1`.
    Valid,
}

/// Output extent and leading padding along one axis.
pub fn out_extent(input: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize), NnError> {
    if k == 0 || stride == 0 {
        return Err(NnError::Shape(format!("kernel {k} / stride {stride} must be positive")));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if k > input {
                return Err(NnError::Shape(format!("kernel {k} exceeds input extent {input}")));
            }
            Ok(((input - k) / stride + 1, 0))
        }
    }
}

/// Geometry of one sliding-window op on an H×W×C input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Window {
    pub fn new(h: usize, w: usize, c: usize, k: usize, stride: usize, padding: Padding) -> Result<Self, NnError> {
        let (out_h, pad_top) = out_extent(h, k, stride, padding)?;
        let (out_w, pad_left) = out_extent(w, k, stride, padding)?;
        Ok(Window {
            h,
            w,
            c,
            k,
            stride,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    /// Input coordinate for output index `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + t) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

/// Unfolds the input into a (out_h·out_w) × (k·k·c) matrix, taps ordered
/// (ky, kx, channel); padded taps are zero.
pub fn im2col(x: &[f64], g: &Window) -> Vec<f64> {
    let row_len = g.k * g.k * g.c;
    let mut cols = vec![0.0; g.out_h * g.out_w * row_len];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut cols[(oy * g.out_w + ox) * row_len..][..row_len];
            for ky in 0..g.k {
                let Some(iy) = Window::src(oy, ky, g.stride, g.pad_top, g.h) else {
                    continue;
                };
                for kx in 0..g.k {
                    let Some(ix) = Window::src(ox, kx, g.stride, g.pad_left, g.w) else {
                        continue;
                    };
                    let src = &x[(iy * g.w + ix) * g.c..][..g.c];
                    row[(ky * g.k + kx) * g.c..][..g.c].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back to the input.
pub fn col2im(cols: &[f64], g: &Window) -> Vec<f64> {
    let row_len = g.k * g.k * g.c;
    let mut x = vec![0.0; g.h * g.w * g.c];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &cols[(oy * g.out_w + ox) * row_len..][..row_len];
            for ky in 0..g.k {
                let Some(iy) = Window::src(oy, ky, g.stride, g.pad_top, g.h) else {
                    continue;
                };
                for kx in 0..g.k {
                    let Some(ix) = Window::src(ox, kx, g.stride, g.pad_left, g.w) else {
                        continue;
                    };
                    let dst = &mut x[(iy * g.w + ix) * g.c..][..g.c];
                    for (d, s) in dst.iter_mut().zip(&row[(ky * g.k + kx) * g.c..][..g.c]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

/// c[m×n] += a[m×k] · b[k×n]
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..][..n];
        let a_row = &a[i * k..][..k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..][..n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// c[k×n] += aᵀ · b with a[m×k], b[m×n]
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..][..k];
        let b_row = &b[i * n..][..n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..][..n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// c[m×k] += a · bᵀ with a[m×n], b[k×n]
pub fn gemm_nt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * n..][..n];
        let c_row = &mut c[i * k..][..k];
        for (p, cv) in c_row.iter_mut().enumerate() {
            *cv += dot(a_row, &b[p * n..][..n]);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[i * 4 + l] * b[i * 4 + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Pre-activation convolution output plus the unfolded input, which the
/// backward pass reuses. `weights` is laid out (ky, kx, c_in, c_out).
pub fn conv2d_raw(
    x: &Tensor,
    weights: &[f64],
    bias: &[f64],
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor, Window, Option<Vec<f64>>), NnError> {
    let (h, w, c) = x.hwc()?;
    let g = Window::new(h, w, c, k, stride, padding)?;
    let taps = k * k * c;
    if taps == 0 || weights.len() % taps != 0 {
        return Err(NnError::Shape(format!(
            "weights of length {} do not fit {k}×{k}×{c} kernels",
            weights.len()
        )));
    }
    let cout = weights.len() / taps;
    if bias.len() != cout {
        return Err(NnError::Shape(format!(
            "bias length {} != {cout} output channels",
            bias.len()
        )));
    }
    let rows = g.out_h * g.out_w;
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    let cols = if g.is_pointwise() {
        gemm_nn(rows, taps, cout, x.data(), weights, &mut out);
        None
    } else {
        let cols = im2col(x.data(), &g);
        gemm_nn(rows, taps, cout, &cols, weights, &mut out);
        Some(cols)
    };
    Ok((Tensor::new(vec![g.out_h, g.out_w, cout], out)?, g, cols))
}

/// 2-D convolution on an H×W×C tensor (no activation).
pub fn conv2d(
    x: &Tensor,
    weights: &[f64],
    bias: &[f64],
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<Tensor, NnError> {
    conv2d_raw(x, weights, bias, k, stride, padding).map(|(t, _, _)| t)
}

/// Gradients of a convolution given the upstream gradient `gy`.
/// Accumulates into `dw` / `db`; returns the input gradient when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &Tensor,
    cols: Option<&[f64]>,
    g: &Window,
    weights: &[f64],
    gy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let taps = g.k * g.k * g.c;
    let cout = db.len();
    let rows = g.out_h * g.out_w;
    for r in 0..rows {
        for (d, v) in db.iter_mut().zip(&gy[r * cout..][..cout]) {
            *d += v;
        }
    }
    let a = cols.unwrap_or(x.data());
    gemm_tn(rows, taps, cout, a, gy, dw);
    if !need_dx {
        return None;
    }
    let mut dcols = vec![0.0; rows * taps];
    gemm_nt(rows, cout, taps, gy, weights, &mut dcols);
    Some(if g.is_pointwise() { dcols } else { col2im(&dcols, g) })
}

/// Max pooling over in-bounds taps; also returns the argmax input offset of
/// every output element.
pub fn maxpool2d_raw(x: &Tensor, k: usize, stride: usize, padding: Padding) -> Result<(Tensor, Vec<usize>), NnError> {
    let (h, w, c) = x.hwc()?;
    let g = Window::new(h, w, c, k, stride, padding)?;
    let mut out = vec![f64::NEG_INFINITY; g.out_h * g.out_w * c];
    let mut arg = vec![usize::MAX; out.len()];
    let xd = x.data();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = (oy * g.out_w + ox) * c;
            for ky in 0..k {
                let Some(iy) = Window::src(oy, ky, stride, g.pad_top, h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = Window::src(ox, kx, stride, g.pad_left, w) else {
                        continue;
                    };
                    let base = (iy * w + ix) * c;
                    for ch in 0..c {
                        let v = xd[base + ch];
                        if v > out[o + ch] {
                            out[o + ch] = v;
                            arg[o + ch] = base + ch;
                        }
                    }
                }
            }
        }
    }
    if arg.contains(&usize::MAX) {
        return Err(NnError::Shape("pooling window with no in-bounds taps".into()));
    }
    Ok((Tensor::new(vec![g.out_h, g.out_w, c], out)?, arg))
}

pub fn maxpool2d(x: &Tensor, k: usize, stride: usize, padding: Padding) -> Result<Tensor, NnError> {
    maxpool2d_raw(x, k, stride, padding).map(|(t, _)| t)
}

pub fn maxpool2d_backward(input_len: usize, arg: &[usize], gy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&a, &g) in arg.iter().zip(gy) {
        dx[a] += g;
    }
    dx
}

/// Mean over in-bounds taps (padding does not count toward the divisor).
pub fn avgpool2d(x: &Tensor, k: usize, stride: usize, padding: Padding) -> Result<Tensor, NnError> {
    let (h, w, c) = x.hwc()?;
    let g = Window::new(h, w, c, k, stride, padding)?;
    let mut out = vec![0.0; g.out_h * g.out_w * c];
    let xd = x.data();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = (oy * g.out_w + ox) * c;
            let mut count = 0usize;
            for ky in 0..k {
                let Some(iy) = Window::src(oy, ky, stride, g.pad_top, h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = Window::src(ox, kx, stride, g.pad_left, w) else {
                        continue;
                    };
                    count += 1;
                    let base = (iy * w + ix) * c;
                    for ch in 0..c {
                        out[o + ch] += xd[base + ch];
                    }
                }
            }
            let inv = 1.0 / count as f64;
            for v in &mut out[o..o + c] {
                *v *= inv;
            }
        }
    }
    Tensor::new(vec![g.out_h, g.out_w, c], out)
}

pub fn avgpool2d_backward(g: &Window, gy: &[f64]) -> Vec<f64> {
    let c = g.c;
    let mut dx = vec![0.0; g.h * g.w * c];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = (oy * g.out_w + ox) * c;
            let taps: Vec<usize> = (0..g.k)
                .filter_map(|ky| Window::src(oy, ky, g.stride, g.pad_top, g.h))
                .flat_map(|iy| {
                    (0..g.k)
                        .filter_map(move |kx| Window::src(ox, kx, g.stride, g.pad_left, g.w))
                        .map(move |ix| (iy * g.w + ix) * c)
                })
                .collect();
            let inv = 1.0 / taps.len() as f64;
            for base in taps {
                for ch in 0..c {
                    dx[base + ch] += gy[o + ch] * inv;
                }
            }
        }
    }
    dx
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    relu_in_place(y.data_mut());
    y
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes upstream gradient where the activation output was clipped.
pub fn relu_backward_in_place(activated: &[f64], gy: &mut [f64]) {
    for (g, &y) in gy.iter_mut().zip(activated) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Affine map of a flattened input: `y = x·W + b`, W laid out in×out.
pub fn fully_connected(x: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>, NnError> {
    let out_n = bias.len();
    if out_n == 0 || weights.len() != x.len() * out_n {
        return Err(NnError::Shape(format!(
            "fully connected: {} inputs × {} outputs needs {} weights, got {}",
            x.len(),
            out_n,
            x.len() * out_n,
            weights.len()
        )));
    }
    let mut y = bias.to_vec();
    gemm_nn(1, x.len(), out_n, x, weights, &mut y);
    Ok(y)
}

/// Unit-norm copy; the zero vector maps to itself.
pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / norm).collect()
}

pub fn l2_normalize_backward(x: &[f64], y: &[f64], gy: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    let proj: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
    gy.iter().zip(y).map(|(g, yv)| (g - yv * proj) / norm).collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Probability floor of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn cross_entropy_loss(probs: &[f64], label: usize) -> Result<f64, NnError> {
    let p = probs.get(label).ok_or(NnError::Label {
        label,
        classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of the clamped cross-entropy with respect to the logits.
pub fn softmax_cross_entropy_backward(probs: &[f64], label: usize) -> Vec<f64> {
    if probs[label] < PROB_FLOOR {
        return vec![0.0; probs.len()];
    }
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct quadruple loop over outputs, output channels and taps.
    fn naive_conv(x: &Tensor, w: &[f64], b: &[f64], k: usize, s: usize, padding: Padding) -> Tensor {
        let (h, wd, c) = x.hwc().unwrap();
        let cout = b.len();
        let (oh, pt) = out_extent(h, k, s, padding).unwrap();
        let (ow, pl) = out_extent(wd, k, s, padding).unwrap();
        let mut out = vec![0.0; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b[co];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * s + ky) as isize - pt as isize;
                            let ix = (ox * s + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for ci in 0..c {
                                acc += x.data()[(iy as usize * wd + ix as usize) * c + ci]
                                    * w[((ky * k + kx) * c + ci) * cout + co];
                            }
                        }
                    }
                    out[(oy * ow + ox) * cout + co] = acc;
                }
            }
        }
        Tensor::new(vec![oh, ow, cout], out).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s, pad, cout) in [
            (3, 1, Padding::Same, 3),
            (3, 2, Padding::Same, 2),
            (5, 1, Padding::Same, 1),
            (2, 1, Padding::Valid, 4),
            (1, 1, Padding::Same, 2),
            (5, 2, Padding::Valid, 1),
        ] {
            let x = Tensor::new(vec![5, 5, 2], random(&mut rng, 50)).unwrap();
            let w = random(&mut rng, k * k * 2 * cout);
            let b = random(&mut rng, cout);
            let fast = conv2d(&x, &w, &b, k, s, pad).unwrap();
            let slow = naive_conv(&x, &w, &b, k, s, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conv_shapes() {
        let x = Tensor::zeros(&[96, 96, 1]);
        let w = vec![0.0; 7 * 7 * 64];
        let y = conv2d(&x, &w, &[0.0; 64], 7, 2, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[48, 48, 64]);
        let ident = Tensor::new(vec![3, 2, 1], vec![1.0, -2.0, 3.5, 0.0, 7.0, 9.0]).unwrap();
        assert_eq!(conv2d(&ident, &[1.0], &[0.0], 1, 1, Padding::Same).unwrap(), ident);
        assert!(conv2d(&ident, &[1.0, 2.0, 3.0], &[0.0], 1, 1, Padding::Same).is_err());
    }

    #[test]
    fn pooling_shapes_and_constants() {
        let x = Tensor::filled(&[48, 48, 64], 0.25);
        let y = maxpool2d(&x, 3, 2, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[24, 24, 64]);
        assert!(y.data().iter().all(|v| *v == 0.25));
        let a = avgpool2d(&x, 3, 2, Padding::Same).unwrap();
        assert!(a.data().iter().all(|v| (*v - 0.25).abs() < 1e-15));
        let z = avgpool2d(&Tensor::filled(&[3, 3, 50], 2.0), 3, 1, Padding::Valid).unwrap();
        assert_eq!(z.shape(), &[1, 1, 50]);
        assert!(z.data().iter().all(|v| (*v - 2.0).abs() < 1e-15));
    }

    /// Window-scan oracle: enumerate each window's in-bounds values.
    #[test]
    fn pooling_matches_window_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, s, pad) in [(2, 2, Padding::Valid), (3, 1, Padding::Same), (3, 2, Padding::Same), (2, 1, Padding::Valid)] {
            let x = Tensor::new(vec![4, 4, 1], random(&mut rng, 16)).unwrap();
            let (oh, pt) = out_extent(4, k, s, pad).unwrap();
            let mx = maxpool2d(&x, k, s, pad).unwrap();
            let av = avgpool2d(&x, k, s, pad).unwrap();
            for oy in 0..oh {
                for ox in 0..oh {
                    let mut vals = Vec::new();
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * s + ky) as isize - pt as isize;
                            let ix = (ox * s + kx) as isize - pt as isize;
                            if (0..4).contains(&iy) && (0..4).contains(&ix) {
                                vals.push(x.data()[iy as usize * 4 + ix as usize]);
                            }
                        }
                    }
                    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(mx.data()[oy * oh + ox], m);
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    assert!((av.data()[oy * oh + ox] - mean).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[0.0; 7]);
        for v in &p {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
        let mut big = vec![0.0; 7];
        big[0] = 1000.0;
        let p = softmax(&big);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
        let logits = [0.3, -1.2, 2.5, 0.0, 4.0, -3.0, 1.0];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.0).collect();
        let (a, b) = (softmax(&logits), softmax(&shifted));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 && *x > 0.0);
        }
    }

    #[test]
    fn l2_normalize_cases() {
        let mut v = vec![0.0; 48];
        v[0] = 3.0;
        v[1] = 4.0;
        let y = l2_normalize(&v);
        assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
        assert!(y[2..].iter().all(|x| *x == 0.0));
        assert_eq!(l2_normalize(&[0.0; 5]), vec![0.0; 5]);
    }

    #[test]
    fn cross_entropy_cases() {
        let mut onehot = vec![0.0; 7];
        onehot[3] = 1.0;
        assert_eq!(cross_entropy_loss(&onehot, 3).unwrap(), 0.0);
        let uniform = vec![1.0 / 7.0; 7];
        assert!((cross_entropy_loss(&uniform, 5).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_loss(&onehot, 0).unwrap() - 27.631021115928547).abs() < 1e-9);
        assert!(matches!(cross_entropy_loss(&uniform, 7), Err(NnError::Label { .. })));
    }

    #[test]
    fn fully_connected_shape_errors() {
        assert!(fully_connected(&[1.0, 2.0], &[1.0; 5], &[0.0; 3]).is_err());
        let y = fully_connected(&[1.0, 2.0], &[1.0, 0.0, 0.0, 1.0], &[0.5, -0.5]).unwrap();
        assert_eq!(y, vec![1.5, 1.5]);
    }
}
