//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every value is a dense `[C, H, W]` array stored channel-major; vectors are
//! `[n, 1, 1]`. Nodes are evaluated eagerly when recorded, and
//! [`Graph::backward`] walks the tape once in reverse. All reductions run in a
//! fixed order, so gradients are bit-reproducible.

use pndr_core::compose::{tone_map_derivative, tone_map_value};

use crate::scalar::Scalar;

pub type Shape = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Softplus,
    Sigmoid,
    Sin,
    Abs,
    Sqrt,
    Recip,
    Square,
    /// Filmic tone map; the subgradient at the kink is 0.
    ToneMap,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Conv { x: Var, w: Var, b: Var, k: usize },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Var, Var),
    Unary(Var, Unary),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    MulChannel(Var, Var),
    BroadcastChannels(Var),
    BroadcastPixels(Var),
    SumChannels(Var),
    Slice(Var, usize),
    Linear { x: Var, w: Var, b: Var },
    Gather { table: Var, index: Vec<i32> },
    Hemisphere(Var, f64),
    MaskedL1 { x: Var, target: Vec<T>, mask: Vec<bool>, scale: f64 },
    Dot(Var, Vec<T>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Shape,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar with respect to every node that needed them.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of `v`, or zeros of length `len` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map_or_else(|| vec![T::zero(); len], <[T]>::to_vec)
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }
}

fn numel(s: Shape) -> usize {
    s[0] * s[1] * s[2]
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Per-output source taps for ×2 bilinear upsampling with half-pixel
/// centers, clamped at the border.
fn upsample_taps(n_in: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, gx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut gx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d = *d + s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d = *d + s),
                    }
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Shape, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), numel(shape));
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, shape: Shape, value: Vec<T>) -> Var {
        assert_eq!(value.len(), numel(shape), "param shape {shape:?}");
        self.push(value, shape, Op::Input, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, shape: Shape, value: Vec<T>) -> Var {
        assert_eq!(value.len(), numel(shape), "constant shape {shape:?}");
        self.push(value, shape, Op::Input, false)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Same-padded convolution with a `k×k` kernel, `k ∈ {1, 3}`.
    /// `w` is `[cout, cin·k·k, 1]`, `b` is `[cout, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, k: usize) -> Var {
        assert!(k == 1 || k == 3, "only 1x1 and 3x3 kernels");
        let [cin, h, wd] = self.shape(x);
        let [cout, kk, _] = self.shape(w);
        assert_eq!(kk, cin * k * k, "kernel does not match input channels");
        assert_eq!(self.shape(b)[0], cout);
        let hw = h * wd;
        let mut out = Vec::with_capacity(cout * hw);
        for &bias in self.value(b) {
            out.extend(std::iter::repeat_n(bias, hw));
        }
        let xs = self.value(x);
        let cols_buf;
        let cols: &[T] = if k == 1 {
            xs
        } else {
            let mut c = vec![T::zero(); kk * hw];
            im2col(xs, cin, h, wd, &mut c);
            cols_buf = c;
            &cols_buf
        };
        T::gemm(cout, kk, hw, self.value(w), kk as isize, 1, cols, hw as isize, 1, T::one(), &mut out);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, [cout, h, wd], Op::Conv { x, w, b, k }, ng)
    }

    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let [c, h, w] = self.shape(x);
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dimensions");
        let (oh, ow) = (h / 2, w / 2);
        let xs = self.value(x);
        let quarter = T::of(0.25);
        let mut out = vec![T::zero(); c * oh * ow];
        for ci in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let at = |dy: usize, dx: usize| xs[(ci * h + 2 * y + dy) * w + 2 * xx + dx];
                    out[(ci * oh + y) * ow + xx] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * quarter;
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, [c, oh, ow], Op::AvgPool2(x), ng)
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let [c, h, w] = self.shape(x);
        let (ty, tx) = (upsample_taps(h), upsample_taps(w));
        let xs = self.value(x);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); c * oh * ow];
        for ci in 0..c {
            let plane = &xs[ci * h * w..(ci + 1) * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                    let top = plane[y0 * w + x0] * gx + plane[y0 * w + x1] * fx;
                    let bottom = plane[y1 * w + x0] * gx + plane[y1 * w + x1] * fx;
                    out[(ci * oh + oy) * ow + ox] = top * gy + bottom * fy;
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, [c, oh, ow], Op::Upsample2(x), ng)
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let ([ca, h, w], [cb, hb, wb]) = (self.shape(a), self.shape(b));
        assert_eq!((h, w), (hb, wb), "concat needs equal spatial size");
        let mut out = self.value(a).to_vec();
        out.extend_from_slice(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, [ca + cb, h, w], Op::Concat(a, b), ng)
    }

    /// Concatenates many values along channels, left to right.
    pub fn concat_all(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.concat(acc, p);
        }
        acc
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        let out: Vec<T> = self
            .value(x)
            .iter()
            .map(|&v| match f {
                Unary::Relu => v.max(T::zero()),
                Unary::Softplus => softplus(v),
                Unary::Sigmoid => sigmoid(v),
                Unary::Sin => v.sin(),
                Unary::Abs => v.abs(),
                Unary::Sqrt => v.sqrt(),
                Unary::Recip => v.recip(),
                Unary::Square => v * v,
                Unary::ToneMap => T::of(tone_map_value(v.f64())),
            })
            .collect();
        let (s, ng) = (self.shape(x), self.needs(x));
        self.push(out, s, Op::Unary(x, f), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sin)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise op needs equal shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let (s, ng) = (self.shape(a), self.needs(a) || self.needs(b));
        self.push(out, s, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale · x`.
    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        let s = T::of(scale);
        let out = self.value(x).iter().map(|&v| v * s).collect();
        let (sh, ng) = (self.shape(x), self.needs(x));
        self.push(out, sh, Op::Affine(x, scale), ng)
    }

    /// `[C,H,W] ⊙ [1,H,W]`, the second operand repeated over channels.
    pub fn mul_channel(&mut self, a: Var, s: Var) -> Var {
        let [c, h, w] = self.shape(a);
        assert_eq!(self.shape(s), [1, h, w], "mul_channel needs a single-channel factor");
        let hw = h * w;
        let (av, sv) = (self.value(a), self.value(s));
        let out = (0..c * hw).map(|i| av[i] * sv[i % hw]).collect();
        let ng = self.needs(a) || self.needs(s);
        self.push(out, [c, h, w], Op::MulChannel(a, s), ng)
    }

    /// `[1,H,W] → [C,H,W]`.
    pub fn broadcast_channels(&mut self, x: Var, channels: usize) -> Var {
        let [c, h, w] = self.shape(x);
        assert_eq!(c, 1);
        let xs = self.value(x);
        let out = (0..channels).flat_map(|_| xs.iter().copied()).collect();
        let ng = self.needs(x);
        self.push(out, [channels, h, w], Op::BroadcastChannels(x), ng)
    }

    /// `[C,1,1] → [C,H,W]`.
    pub fn broadcast_pixels(&mut self, x: Var, h: usize, w: usize) -> Var {
        let [c, xh, xw] = self.shape(x);
        assert_eq!((xh, xw), (1, 1));
        let out = self.value(x).iter().flat_map(|&v| std::iter::repeat_n(v, h * w)).collect();
        let ng = self.needs(x);
        self.push(out, [c, h, w], Op::BroadcastPixels(x), ng)
    }

    /// `[C,H,W] → [1,H,W]`.
    pub fn sum_channels(&mut self, x: Var) -> Var {
        let [c, h, w] = self.shape(x);
        let hw = h * w;
        let xs = self.value(x);
        let mut out = xs[..hw].to_vec();
        for ci in 1..c {
            out.iter_mut().zip(&xs[ci * hw..(ci + 1) * hw]).for_each(|(o, &v)| *o = *o + v);
        }
        let ng = self.needs(x);
        self.push(out, [1, h, w], Op::SumChannels(x), ng)
    }

    /// Channels `start .. start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let [c, h, w] = self.shape(x);
        assert!(start + len <= c, "slice {start}+{len} of {c} channels");
        let out = self.value(x)[start * h * w..(start + len) * h * w].to_vec();
        let ng = self.needs(x);
        self.push(out, [len, h, w], Op::Slice(x, start), ng)
    }

    /// `W·x + b` with `W` shaped `[out, in, 1]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let n_in = numel(self.shape(x));
        let [n_out, wi, _] = self.shape(w);
        assert_eq!(wi, n_in, "linear: weight does not match input");
        assert_eq!(numel(self.shape(b)), n_out);
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        let out = (0..n_out)
            .map(|o| ws[o * n_in..(o + 1) * n_in].iter().zip(xs).fold(bs[o], |acc, (&a, &v)| acc + a * v))
            .collect();
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, [n_out, 1, 1], Op::Linear { x, w, b }, ng)
    }

    /// Looks up rows of a `channels`-wide table by per-pixel index; negative
    /// indices give zeros. Output `[channels, h, w]`.
    pub fn gather(&mut self, table: Var, channels: usize, index: &[i32], h: usize, w: usize) -> Var {
        assert_eq!(index.len(), h * w);
        let tv = self.value(table);
        assert_eq!(tv.len() % channels, 0, "table is not a whole number of rows");
        let rows = tv.len() / channels;
        let mut out = vec![T::zero(); channels * h * w];
        for (p, &r) in index.iter().enumerate() {
            if r < 0 {
                continue;
            }
            let r = r as usize;
            assert!(r < rows, "gather index {r} past {rows} rows");
            for c in 0..channels {
                out[c * h * w + p] = tv[r * channels + c];
            }
        }
        let ng = self.needs(table);
        self.push(
            out,
            [channels, h, w],
            Op::Gather {
                table,
                index: index.to_vec(),
            },
            ng,
        )
    }

    /// `radius · (x, y, |z|) / ‖(x, y, z)‖`: a point on the upper hemisphere.
    pub fn hemisphere(&mut self, x: Var, radius: f64) -> Var {
        assert_eq!(numel(self.shape(x)), 3);
        let v = self.value(x);
        let d = [v[0], v[1], v[2].abs()];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let r = T::of(radius);
        let out = d.iter().map(|&c| r * c / n).collect();
        let ng = self.needs(x);
        self.push(out, [3, 1, 1], Op::Hemisphere(x, radius), ng)
    }

    /// `scale · Σ |x − target|` over channels of pixels where `mask` is set.
    pub fn masked_l1(&mut self, x: Var, target: &[T], mask: &[bool], scale: f64) -> Var {
        let [c, h, w] = self.shape(x);
        assert_eq!(target.len(), c * h * w, "L1 target shape");
        assert_eq!(mask.len(), h * w, "L1 mask shape");
        let xs = self.value(x);
        let hw = h * w;
        let mut sum = T::zero();
        for ci in 0..c {
            for p in (0..hw).filter(|&p| mask[p]) {
                sum = sum + (xs[ci * hw + p] - target[ci * hw + p]).abs();
            }
        }
        let ng = self.needs(x);
        let op = Op::MaskedL1 {
            x,
            target: target.to_vec(),
            mask: mask.to_vec(),
            scale,
        };
        self.push(vec![sum * T::of(scale)], [1, 1, 1], op, ng)
    }

    /// `Σ x ⊙ weights`.
    pub fn dot(&mut self, x: Var, weights: &[T]) -> Var {
        assert_eq!(weights.len(), self.value(x).len());
        let sum = self.value(x).iter().zip(weights).map(|(&a, &b)| a * b).sum();
        let ng = self.needs(x);
        self.push(vec![sum], [1, 1, 1], Op::Dot(x, weights.to_vec()), ng)
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value[..];
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Input => {}
            &Op::Conv { x, w, b, k } => {
                let [cin, h, wd] = self.shape(x);
                let [cout, kk, _] = self.shape(w);
                let hw = h * wd;
                if self.needs(b) {
                    let gb = accumulate(grads, b, cout);
                    for (co, gbv) in gb.iter_mut().enumerate() {
                        *gbv = *gbv + g[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
                    }
                }
                if self.needs(w) {
                    let cols_buf;
                    let cols: &[T] = if k == 1 {
                        val(x)
                    } else {
                        let mut c = vec![T::zero(); kk * hw];
                        im2col(val(x), cin, h, wd, &mut c);
                        cols_buf = c;
                        &cols_buf
                    };
                    let gw = accumulate(grads, w, cout * kk);
                    T::gemm(cout, hw, kk, g, hw as isize, 1, cols, 1, hw as isize, T::one(), gw);
                }
                if self.needs(x) {
                    let wv = val(w);
                    let n = len(x);
                    if k == 1 {
                        let gx = accumulate(grads, x, n);
                        T::gemm(kk, cout, hw, wv, 1, kk as isize, g, hw as isize, 1, T::one(), gx);
                    } else {
                        let mut dcols = vec![T::zero(); kk * hw];
                        T::gemm(kk, cout, hw, wv, 1, kk as isize, g, hw as isize, 1, T::zero(), &mut dcols);
                        col2im_add(&dcols, cin, h, wd, accumulate(grads, x, n));
                    }
                }
            }
            &Op::AvgPool2(x) => {
                let [c, h, w] = self.shape(x);
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::of(0.25);
                let gx = accumulate(grads, x, c * h * w);
                for ci in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let v = g[(ci * oh + y) * ow + xx] * quarter;
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let j = (ci * h + 2 * y + dy) * w + 2 * xx + dx;
                                gx[j] = gx[j] + v;
                            }
                        }
                    }
                }
            }
            &Op::Upsample2(x) => {
                let [c, h, w] = self.shape(x);
                let (ty, tx) = (upsample_taps(h), upsample_taps(w));
                let (oh, ow) = (2 * h, 2 * w);
                let gx = accumulate(grads, x, c * h * w);
                for ci in 0..c {
                    let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
                        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                            let (fx, gxw) = (T::of(fx), T::of(1.0 - fx));
                            let v = g[(ci * oh + oy) * ow + ox];
                            plane[y0 * w + x0] = plane[y0 * w + x0] + v * gy * gxw;
                            plane[y0 * w + x1] = plane[y0 * w + x1] + v * gy * fx;
                            plane[y1 * w + x0] = plane[y1 * w + x0] + v * fy * gxw;
                            plane[y1 * w + x1] = plane[y1 * w + x1] + v * fy * fx;
                        }
                    }
                }
            }
            &Op::Concat(a, b) => {
                let na = len(a);
                if self.needs(a) {
                    add_into(accumulate(grads, a, na), &g[..na]);
                }
                if self.needs(b) {
                    let nb = len(b);
                    add_into(accumulate(grads, b, nb), &g[na..]);
                }
            }
            &Op::Unary(x, f) => {
                let (xs, ys) = (val(x), &node.value);
                let n = xs.len();
                let gx = accumulate(grads, x, n);
                for i in 0..n {
                    let (v, y) = (xs[i], ys[i]);
                    let d = match f {
                        Unary::Relu => {
                            if v > T::zero() {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }
                        Unary::Softplus => sigmoid(v),
                        Unary::Sigmoid => y * (T::one() - y),
                        Unary::Sin => v.cos(),
                        Unary::Abs => sign(v),
                        Unary::Sqrt => {
                            if y > T::zero() {
                                T::of(0.5) / y
                            } else {
                                T::zero()
                            }
                        }
                        Unary::Recip => -(y * y),
                        Unary::Square => v + v,
                        Unary::ToneMap => T::of(tone_map_derivative(v.f64())),
                    };
                    gx[i] = gx[i] + g[i] * d;
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(v) {
                        add_into(accumulate(grads, v, g.len()), g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if self.needs(a) {
                    add_into(accumulate(grads, a, g.len()), g);
                }
                if self.needs(b) {
                    let gb = accumulate(grads, b, g.len());
                    gb.iter_mut().zip(g).for_each(|(d, &s)| *d = *d - s);
                }
            }
            &Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if self.needs(v) {
                        let o = val(other);
                        let gv = accumulate(grads, v, g.len());
                        for i in 0..g.len() {
                            gv[i] = gv[i] + g[i] * o[i];
                        }
                    }
                }
            }
            &Op::Affine(x, s) => {
                let s = T::of(s);
                let gx = accumulate(grads, x, g.len());
                gx.iter_mut().zip(g).for_each(|(d, &v)| *d = *d + v * s);
            }
            &Op::MulChannel(a, s) => {
                let [c, h, w] = self.shape(a);
                let hw = h * w;
                if self.needs(a) {
                    let sv = val(s);
                    let ga = accumulate(grads, a, c * hw);
                    for i in 0..c * hw {
                        ga[i] = ga[i] + g[i] * sv[i % hw];
                    }
                }
                if self.needs(s) {
                    let av = val(a);
                    let gs = accumulate(grads, s, hw);
                    for ci in 0..c {
                        for p in 0..hw {
                            gs[p] = gs[p] + g[ci * hw + p] * av[ci * hw + p];
                        }
                    }
                }
            }
            &Op::BroadcastChannels(x) => {
                let hw = len(x);
                let gx = accumulate(grads, x, hw);
                for chunk in g.chunks(hw) {
                    add_into(gx, chunk);
                }
            }
            &Op::BroadcastPixels(x) => {
                let c = len(x);
                let hw = g.len() / c;
                let gx = accumulate(grads, x, c);
                for (ci, gv) in gx.iter_mut().enumerate() {
                    *gv = *gv + g[ci * hw..(ci + 1) * hw].iter().copied().sum::<T>();
                }
            }
            &Op::SumChannels(x) => {
                let n = len(x);
                let gx = accumulate(grads, x, n);
                for chunk in gx.chunks_mut(g.len()) {
                    add_into(chunk, g);
                }
            }
            &Op::Slice(x, start) => {
                let [_, h, w] = self.shape(x);
                let n = len(x);
                let gx = accumulate(grads, x, n);
                add_into(&mut gx[start * h * w..start * h * w + g.len()], g);
            }
            &Op::Linear { x, w, b } => {
                let n_in = len(x);
                if self.needs(b) {
                    add_into(accumulate(grads, b, g.len()), g);
                }
                if self.needs(w) {
                    let xs = val(x);
                    let gw = accumulate(grads, w, g.len() * n_in);
                    for (o, &go) in g.iter().enumerate() {
                        for (d, &v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(xs) {
                            *d = *d + go * v;
                        }
                    }
                }
                if self.needs(x) {
                    let ws = val(w);
                    let gx = accumulate(grads, x, n_in);
                    for (o, &go) in g.iter().enumerate() {
                        for (d, &a) in gx.iter_mut().zip(&ws[o * n_in..(o + 1) * n_in]) {
                            *d = *d + go * a;
                        }
                    }
                }
            }
            Op::Gather { table, index } => {
                let channels = node.shape[0];
                let hw = index.len();
                let n = len(*table);
                let gt = accumulate(grads, *table, n);
                for (p, &r) in index.iter().enumerate() {
                    if r < 0 {
                        continue;
                    }
                    for c in 0..channels {
                        let j = r as usize * channels + c;
                        gt[j] = gt[j] + g[c * hw + p];
                    }
                }
            }
            &Op::Hemisphere(x, radius) => {
                let v = val(x);
                let d = [v[0], v[1], v[2].abs()];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let u = d.map(|c| c / n);
                let ug = u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
                let k = T::of(radius) / n;
                let flip = [T::one(), T::one(), sign(v[2])];
                let gx = accumulate(grads, x, 3);
                for c in 0..3 {
                    gx[c] = gx[c] + k * (g[c] - u[c] * ug) * flip[c];
                }
            }
            Op::MaskedL1 { x, target, mask, scale } => {
                let xs = val(*x);
                let hw = mask.len();
                let s = g[0] * T::of(*scale);
                let gx = accumulate(grads, *x, xs.len());
                for (i, gv) in gx.iter_mut().enumerate() {
                    if mask[i % hw] {
                        *gv = *gv + s * sign(xs[i] - target[i]);
                    }
                }
            }
            Op::Dot(x, weights) => {
                let gx = accumulate(grads, *x, weights.len());
                gx.iter_mut().zip(weights).for_each(|(d, &w)| *d = *d + g[0] * w);
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}
