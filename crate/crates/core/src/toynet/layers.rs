//! Channel-major tensor primitives with explicit backward passes.

/// A `channels × height × width` activation, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Converts from an interleaved `h × w × c` buffer.
    pub fn from_hwc(w: usize, h: usize, c: usize, hwc: &[f64]) -> Self {
        let mut data = vec![0.0; c * h * w];
        for (p, px) in hwc.chunks_exact(c).enumerate() {
            for (k, v) in px.iter().enumerate() {
                data[k * h * w + p] = *v;
            }
        }
        Self { c, h, w, data }
    }

    pub fn to_hwc(&self) -> Vec<f64> {
        let plane = self.plane();
        let mut out = vec![0.0; self.data.len()];
        for k in 0..self.c {
            for p in 0..plane {
                out[p * self.c + k] = self.data[k * plane + p];
            }
        }
        out
    }
}

/// `C = A·B + beta·C` with optional transposes; all operands row-major and dense.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: extents checked above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dense layer shape; weights are `out × in` row-major, then `out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.output * self.input + self.output
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let p = &params[self.offset..self.offset + self.len()];
        p.split_at(self.output * self.input)
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        let (w, b) = self.split(params);
        let mut y = b.to_vec();
        gemm(self.output, self.input, 1, w, false, x, false, &mut y, 1.0);
        y
    }

    /// Accumulates parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward(&self, params: &[f64], grads: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let (w, _) = self.split(params);
        let g = &mut grads[self.offset..self.offset + self.len()];
        let (gw, gb) = g.split_at_mut(self.output * self.input);
        gemm(self.output, 1, self.input, dy, false, x, false, gw, 1.0);
        for (b, d) in gb.iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![0.0; self.input];
        gemm(self.input, self.output, 1, w, true, dy, false, &mut dx, 0.0);
        dx
    }
}

/// 3×3 convolution with zero padding and unit stride; weights `out × in × 3 × 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3 {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

fn im2col(x: &Tensor) -> Vec<f64> {
    let (h, w) = (x.h, x.w);
    let plane = h * w;
    let mut col = vec![0.0; x.c * 9 * plane];
    for ci in 0..x.c {
        let src = &x.data[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = &src[sy as usize * w..][..w];
                    let d = &mut row[y * w..][..w];
                    match kx {
                        0 => d[1..].copy_from_slice(&s[..w - 1]),
                        1 => d.copy_from_slice(s),
                        _ => d[..w - 1].copy_from_slice(&s[1..]),
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], c: usize, h: usize, w: usize) -> Tensor {
    let plane = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s = &row[y * w..][..w];
                    let d = &mut dst[sy as usize * w..][..w];
                    match kx {
                        0 => d[..w - 1].iter_mut().zip(&s[1..]).for_each(|(a, b)| *a += b),
                        1 => d.iter_mut().zip(s).for_each(|(a, b)| *a += b),
                        _ => d[1..].iter_mut().zip(&s[..w - 1]).for_each(|(a, b)| *a += b),
                    }
                }
            }
        }
    }
    out
}

impl Conv3 {
    pub fn len(&self) -> usize {
        self.output * self.input * 9 + self.output
    }

    pub fn fan_in(&self) -> usize {
        self.input * 9
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Tensor {
        debug_assert_eq!(x.c, self.input);
        let plane = x.plane();
        let p = &params[self.offset..self.offset + self.len()];
        let (wts, bias) = p.split_at(self.output * self.input * 9);
        let mut y = Tensor::zeros(self.output, x.h, x.w);
        for (o, b) in bias.iter().enumerate() {
            y.data[o * plane..(o + 1) * plane].fill(*b);
        }
        let col = im2col(x);
        gemm(self.output, self.input * 9, plane, wts, false, &col, false, &mut y.data, 1.0);
        y
    }

    pub fn backward(&self, params: &[f64], grads: &mut [f64], x: &Tensor, dy: &Tensor) -> Tensor {
        let plane = x.plane();
        let k = self.input * 9;
        let p = &params[self.offset..self.offset + self.len()];
        let (wts, _) = p.split_at(self.output * k);
        let g = &mut grads[self.offset..self.offset + self.len()];
        let (gw, gb) = g.split_at_mut(self.output * k);
        let col = im2col(x);
        gemm(self.output, plane, k, &dy.data, false, &col, true, gw, 1.0);
        for (o, b) in gb.iter_mut().enumerate() {
            *b += dy.data[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
        let mut dcol = vec![0.0; k * plane];
        gemm(k, self.output, plane, wts, true, &dy.data, false, &mut dcol, 0.0);
        col2im(&dcol, self.input, x.h, x.w)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient of the rectifier given its input.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(v, d)| if *v > 0.0 { *d } else { 0.0 }).collect()
}

/// 2× max pooling. Each switch is the within-plane index of its window's maximum;
/// ties go to the first element in row-major window order.
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<u32>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, h2, w2);
    let mut switches = vec![0u32; x.c * h2 * w2];
    for ci in 0..x.c {
        let src = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
        for oy in 0..h2 {
            for ox in 0..w2 {
                let mut best = (2 * oy) * x.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (2 * oy + dy) * x.w + 2 * ox + dx;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                let o = ci * h2 * w2 + oy * w2 + ox;
                y.data[o] = src[best];
                switches[o] = best as u32;
            }
        }
    }
    (y, switches)
}

/// Places each value at its switch position in a `2h × 2w` map, zeros elsewhere.
/// This is also the backward pass of [`max_pool2`].
pub fn unpool2(x: &Tensor, switches: &[u32]) -> Tensor {
    debug_assert_eq!(switches.len(), x.data.len());
    let (h, w) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(x.c, h, w);
    let (plane_in, plane_out) = (x.plane(), h * w);
    for ci in 0..x.c {
        for p in 0..plane_in {
            let i = ci * plane_in + p;
            y.data[ci * plane_out + switches[i] as usize] += x.data[i];
        }
    }
    y
}

/// Gathers the switch positions; backward pass of [`unpool2`] (and forward of
/// pooling given fixed switches).
pub fn unpool2_backward(dy: &Tensor, switches: &[u32]) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, h, w);
    let (plane_in, plane_out) = (h * w, dy.plane());
    for ci in 0..dy.c {
        for p in 0..plane_in {
            let i = ci * plane_in + p;
            dx.data[i] = dy.data[ci * plane_out + switches[i] as usize];
        }
    }
    dx
}

/// Nearest-neighbor 2× upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(x.c, h, w);
    for ci in 0..x.c {
        for yy in 0..h {
            for xx in 0..w {
                y.data[(ci * h + yy) * w + xx] = x.data[(ci * x.h + yy / 2) * x.w + xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, h, w);
    for ci in 0..dy.c {
        for yy in 0..dy.h {
            for xx in 0..dy.w {
                dx.data[(ci * h + yy / 2) * w + xx / 2] += dy.data[(ci * dy.h + yy) * dy.w + xx];
            }
        }
    }
    dx
}

#[inline]
pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
