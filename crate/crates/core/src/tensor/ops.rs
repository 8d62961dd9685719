use std::rc::Rc;

use super::Tensor;
use crate::scalar::Scalar;

/// Visibility pattern for an attention score matrix (`true` = visible).
#[derive(Debug, Clone, PartialEq)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    visible: Vec<bool>,
}

impl AttnMask {
    /// Lower-triangular mask: query `i` sees keys `0..=i`.
    pub fn causal(len: usize) -> Self {
        let visible = (0..len)
            .flat_map(|i| (0..len).map(move |j| j <= i))
            .collect();
        AttnMask {
            rows: len,
            cols: len,
            visible,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let visible = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        AttnMask {
            rows,
            cols,
            visible,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.visible[i * self.cols + j]
    }

    /// Number of visible keys per query row.
    pub fn visible_counts(&self) -> Vec<usize> {
        self.visible
            .chunks(self.cols)
            .map(|r| r.iter().filter(|&&v| v).count())
            .collect()
    }

    /// 1 where visible, 0 elsewhere.
    pub fn indicator<T: Scalar>(&self) -> Vec<T> {
        self.visible
            .iter()
            .map(|&v| if v { T::one() } else { T::zero() })
            .collect()
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// out (m,n) = a (m,k) · b (k,n)
fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // four running sums let the compiler keep several multiplies in flight
    let mut acc = [T::zero(); 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: T = ac.remainder().iter().zip(bc.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// out (m,n) = a (m,k) · b (n,k)ᵀ
fn matmul_t_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(arow, brow);
        }
    }
    out
}

/// out (k,n) = a (m,k)ᵀ · b (m,n)
fn matmul_tn_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn gelu_tanh<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation; returns (value, derivative)
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let y = half * x * (T::one() + t);
    let dinner = c * (T::one() + T::of(3.0) * a * x * x);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * dinner;
    (y, dy)
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
    // log(1 + e^x), stable for large |x|
    x.max(T::zero()) + (-(x.abs())).exp().ln_1p()
}

impl<T: Scalar> Tensor<T> {
    fn same_shape(&self, other: &Tensor<T>, op: &str) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{op}: shape mismatch {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
    }

    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T) -> T + 'static,
    ) -> Tensor<T> {
        let value = self.value().iter().map(|&x| f(x)).collect();
        let x = self.clone();
        Tensor::from_op(
            op,
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let xv = x.value();
                vec![Some(zip_map(g, &xv, |gi, xi| gi * df(xi)))]
            }),
        )
    }

    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        self.same_shape(other, "add");
        let value = zip_map(&self.value(), &other.value(), |a, b| a + b);
        Tensor::from_op(
            "add",
            value,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        )
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        self.same_shape(other, "sub");
        let value = zip_map(&self.value(), &other.value(), |a, b| a - b);
        Tensor::from_op(
            "sub",
            value,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![Some(g.to_vec()), Some(g.iter().map(|&x| -x).collect())]),
        )
    }

    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        self.same_shape(other, "mul");
        let value = zip_map(&self.value(), &other.value(), |a, b| a * b);
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "mul",
            value,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (av, bv) = (a.value(), b.value());
                vec![
                    Some(zip_map(g, &bv, |x, y| x * y)),
                    Some(zip_map(g, &av, |x, y| x * y)),
                ]
            }),
        )
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        let value = self.value().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            "scale",
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.iter().map(|&x| x * c).collect())]),
        )
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        let value = self.value().iter().map(|&x| x + c).collect();
        Tensor::from_op(
            "add_scalar",
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    /// Multiply every element by a one-element tensor.
    pub fn mul_scalar(&self, s: &Tensor<T>) -> Tensor<T> {
        assert_eq!(s.numel(), 1, "mul_scalar expects a one-element tensor");
        let sv = s.item();
        let value = self.value().iter().map(|&x| x * sv).collect();
        let (x, st) = (self.clone(), s.clone());
        Tensor::from_op(
            "mul_scalar",
            value,
            self.shape().to_vec(),
            vec![self.clone(), s.clone()],
            Box::new(move |g| {
                let sv = st.item();
                let xv = x.value();
                let ds: T = g.iter().zip(xv.iter()).map(|(&a, &b)| a * b).sum();
                vec![Some(g.iter().map(|&a| a * sv).collect()), Some(vec![ds])]
            }),
        )
    }

    /// Add a one-element tensor to every element.
    pub fn add_scalar_tensor(&self, s: &Tensor<T>) -> Tensor<T> {
        assert_eq!(s.numel(), 1, "add_scalar_tensor expects a one-element tensor");
        let sv = s.item();
        let value = self.value().iter().map(|&x| x + sv).collect();
        Tensor::from_op(
            "add_scalar_tensor",
            value,
            self.shape().to_vec(),
            vec![self.clone(), s.clone()],
            Box::new(|g| vec![Some(g.to_vec()), Some(vec![g.iter().copied().sum()])]),
        )
    }

    /// Broadcast-add a vector over the last dimension.
    pub fn add_row(&self, v: &Tensor<T>) -> Tensor<T> {
        let n = self.cols();
        assert_eq!(v.numel(), n, "add_row: vector length must equal last dim");
        let vv = v.value();
        let value = self
            .value()
            .chunks(n)
            .flat_map(|r| r.iter().zip(vv.iter()).map(|(&a, &b)| a + b))
            .collect();
        drop(vv);
        Tensor::from_op(
            "add_row",
            value,
            self.shape().to_vec(),
            vec![self.clone(), v.clone()],
            Box::new(move |g| {
                let mut gv = vec![T::zero(); n];
                for r in g.chunks(n) {
                    gv.iter_mut().zip(r).for_each(|(a, &b)| *a += b);
                }
                vec![Some(g.to_vec()), Some(gv)]
            }),
        )
    }

    /// Broadcast-multiply a vector over the last dimension.
    pub fn mul_row(&self, v: &Tensor<T>) -> Tensor<T> {
        let n = self.cols();
        assert_eq!(v.numel(), n, "mul_row: vector length must equal last dim");
        let value = {
            let vv = v.value();
            self.value()
                .chunks(n)
                .flat_map(|r| r.iter().zip(vv.iter()).map(|(&a, &b)| a * b).collect::<Vec<_>>())
                .collect()
        };
        let (x, vt) = (self.clone(), v.clone());
        Tensor::from_op(
            "mul_row",
            value,
            self.shape().to_vec(),
            vec![self.clone(), v.clone()],
            Box::new(move |g| {
                let (xv, vv) = (x.value(), vt.value());
                let mut gx = Vec::with_capacity(g.len());
                let mut gv = vec![T::zero(); n];
                for (gr, xr) in g.chunks(n).zip(xv.chunks(n)) {
                    for c in 0..n {
                        gx.push(gr[c] * vv[c]);
                        gv[c] += gr[c] * xr[c];
                    }
                }
                vec![Some(gx), Some(gv)]
            }),
        )
    }

    /// Multiply each row by the matching entry of a per-row vector (length = rows).
    pub fn mul_col(&self, c: &Tensor<T>) -> Tensor<T> {
        let (rows, n) = (self.rows(), self.cols());
        assert_eq!(c.numel(), rows, "mul_col: vector length must equal row count");
        let value = {
            let cv = c.value();
            self.value()
                .chunks(n)
                .zip(cv.iter())
                .flat_map(|(r, &s)| r.iter().map(move |&a| a * s))
                .collect()
        };
        let (x, ct) = (self.clone(), c.clone());
        Tensor::from_op(
            "mul_col",
            value,
            self.shape().to_vec(),
            vec![self.clone(), c.clone()],
            Box::new(move |g| {
                let (xv, cv) = (x.value(), ct.value());
                let mut gx = Vec::with_capacity(g.len());
                let mut gc = vec![T::zero(); rows];
                for (i, (gr, xr)) in g.chunks(n).zip(xv.chunks(n)).enumerate() {
                    for (gi, xi) in gr.iter().zip(xr) {
                        gx.push(*gi * cv[i]);
                        gc[i] += *gi * *xi;
                    }
                }
                vec![Some(gx), Some(gc)]
            }),
        )
    }

    /// Element-wise addition of a constant array.
    pub fn add_const(&self, c: Vec<T>) -> Tensor<T> {
        assert_eq!(c.len(), self.numel(), "add_const: size mismatch");
        let value = zip_map(&self.value(), &c, |a, b| a + b);
        Tensor::from_op(
            "add_const",
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Element-wise multiplication by a constant array.
    pub fn mul_const(&self, c: Vec<T>) -> Tensor<T> {
        assert_eq!(c.len(), self.numel(), "mul_const: size mismatch");
        let value = zip_map(&self.value(), &c, |a, b| a * b);
        let c = Rc::new(c);
        Tensor::from_op(
            "mul_const",
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(zip_map(g, &c, |a, b| a * b))]),
        )
    }

    /// (m,k) · (k,n) → (m,n). Leading dimensions of `self` are flattened into m.
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        assert_eq!(other.shape().len(), 2, "matmul: rhs must be 2-D");
        assert_eq!(other.shape()[0], k, "matmul: inner dimension mismatch");
        let n = other.shape()[1];
        let value = matmul_raw(&self.value(), &other.value(), m, k, n);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "matmul",
            value,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (av, bv) = (a.value(), b.value());
                let ga = a.requires_grad().then(|| matmul_t_raw(g, &bv, m, n, k));
                let gb = b.requires_grad().then(|| matmul_tn_raw(&av, g, m, k, n));
                vec![ga, gb]
            }),
        )
    }

    /// (m,k) · (n,k)ᵀ → (m,n).
    pub fn matmul_t(&self, other: &Tensor<T>) -> Tensor<T> {
        let (m, k) = (self.rows(), self.cols());
        assert_eq!(other.cols(), k, "matmul_t: inner dimension mismatch");
        let n = other.rows();
        let value = matmul_t_raw(&self.value(), &other.value(), m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "matmul_t",
            value,
            vec![m, n],
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (av, bv) = (a.value(), b.value());
                let ga = a.requires_grad().then(|| matmul_raw(g, &bv, m, n, k));
                let gb = b.requires_grad().then(|| matmul_tn_raw(g, &av, m, n, k));
                vec![ga, gb]
            }),
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| x.max(T::zero()),
            |x| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary("square", |x| x * x, |x| x + x)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary("sigmoid", sigmoid, |x| {
            let s = sigmoid(x);
            s * (T::one() - s)
        })
    }

    pub fn silu(&self) -> Tensor<T> {
        self.unary(
            "silu",
            |x| x * sigmoid(x),
            |x| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor<T> {
        self.unary("gelu", |x| gelu_tanh(x).0, |x| gelu_tanh(x).1)
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |x| x.exp(), |x| x.exp())
    }

    pub fn softplus(&self) -> Tensor<T> {
        self.unary("softplus", softplus, sigmoid)
    }

    /// Element-wise clamp to [lo, hi]; zero gradient outside the interval.
    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.unary(
            "clamp",
            move |x| x.max(lo).min(hi),
            move |x| {
                if x > lo && x < hi {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Row-wise softmax over the last dimension. Masked entries act as −∞.
    /// A row with no visible entry yields zeros; the returned flag reports it.
    pub fn softmax_rows_flagged(&self, mask: Option<&AttnMask>) -> (Tensor<T>, bool) {
        let (rows, n) = (self.rows(), self.cols());
        if let Some(m) = mask {
            assert_eq!((m.rows(), m.cols()), (rows, n), "softmax mask shape mismatch");
        }
        let mut out = vec![T::zero(); rows * n];
        let mut empty_row = false;
        {
            let xv = self.value();
            for i in 0..rows {
                let row = &xv[i * n..(i + 1) * n];
                let vis = |j: usize| mask.is_none_or(|m| m.is_visible(i, j));
                let mut max = T::neg_infinity();
                for (j, &x) in row.iter().enumerate() {
                    if vis(j) && x > max {
                        max = x;
                    }
                }
                if max == T::neg_infinity() {
                    empty_row = true;
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                let mut sum = T::zero();
                for (j, &x) in row.iter().enumerate() {
                    if vis(j) {
                        let e = (x - max).exp();
                        orow[j] = e;
                        sum += e;
                    }
                }
                let inv = T::one() / sum;
                orow.iter_mut().for_each(|v| *v *= inv);
            }
        }
        let y = Rc::new(out.clone());
        let t = Tensor::from_op(
            "softmax_rows",
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![T::zero(); g.len()];
                for ((gr, yr), dr) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![Some(gx)]
            }),
        );
        (t, empty_row)
    }

    pub fn softmax_rows(&self, mask: Option<&AttnMask>) -> Tensor<T> {
        self.softmax_rows_flagged(mask).0
    }

    /// RMS normalisation over contiguous groups of `group` elements along the
    /// last dimension; `scale` (length `group`, optional) is shared across groups.
    pub fn rmsnorm_grouped(&self, scale: Option<&Tensor<T>>, eps: T, group: usize) -> Tensor<T> {
        let n = self.numel();
        assert!(group > 0 && self.cols() % group == 0, "rmsnorm: bad group size");
        if let Some(s) = scale {
            assert_eq!(s.numel(), group, "rmsnorm: scale length must equal group size");
        }
        let sv: Vec<T> = scale.map_or_else(|| vec![T::one(); group], |s| s.to_vec());
        let gsz = T::of_usize(group);
        let (value, inv_rms) = {
            let xv = self.value();
            let mut value = Vec::with_capacity(n);
            let mut inv_rms = Vec::with_capacity(n / group);
            for chunk in xv.chunks(group) {
                let ms = chunk.iter().map(|&x| x * x).sum::<T>() / gsz;
                let r = T::one() / (ms + eps).sqrt();
                inv_rms.push(r);
                value.extend(chunk.iter().zip(&sv).map(|(&x, &s)| x * r * s));
            }
            (value, inv_rms)
        };
        let mut parents = vec![self.clone()];
        if let Some(s) = scale {
            parents.push(s.clone());
        }
        let has_scale = scale.is_some();
        let x = self.clone();
        Tensor::from_op(
            "rmsnorm",
            value,
            self.shape().to_vec(),
            parents,
            Box::new(move |g| {
                let xv = x.value();
                let mut gx = Vec::with_capacity(g.len());
                let mut gs = vec![T::zero(); group];
                for ((gc, xc), &r) in g.chunks(group).zip(xv.chunks(group)).zip(&inv_rms) {
                    // y_i = s_i x_i r ; dr/dx_j = -x_j r^3 / n
                    let dot: T = (0..group).map(|j| gc[j] * sv[j] * xc[j]).sum();
                    let coef = dot * r * r * r / gsz;
                    for j in 0..group {
                        gx.push(gc[j] * sv[j] * r - xc[j] * coef);
                        gs[j] += gc[j] * xc[j] * r;
                    }
                }
                let mut out = vec![Some(gx)];
                if has_scale {
                    out.push(Some(gs));
                }
                out
            }),
        )
    }

    pub fn rmsnorm(&self, scale: Option<&Tensor<T>>, eps: T) -> Tensor<T> {
        self.rmsnorm_grouped(scale, eps, self.cols())
    }

    /// Mean-centred normalisation over contiguous groups (GroupNorm with one
    /// group per `group`-sized slice), scale-only affine.
    pub fn layernorm_grouped(&self, scale: Option<&Tensor<T>>, eps: T, group: usize) -> Tensor<T> {
        assert!(group > 0 && self.cols() % group == 0, "layernorm: bad group size");
        if let Some(s) = scale {
            assert_eq!(s.numel(), group, "layernorm: scale length must equal group size");
        }
        let sv: Vec<T> = scale.map_or_else(|| vec![T::one(); group], |s| s.to_vec());
        let gsz = T::of_usize(group);
        let (value, xhat, inv_std) = {
            let xv = self.value();
            let mut value = Vec::with_capacity(xv.len());
            let mut xhat = Vec::with_capacity(xv.len());
            let mut inv_std = Vec::with_capacity(xv.len() / group);
            for chunk in xv.chunks(group) {
                let mean = chunk.iter().copied().sum::<T>() / gsz;
                let var = chunk.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / gsz;
                let r = T::one() / (var + eps).sqrt();
                inv_std.push(r);
                for (&x, &s) in chunk.iter().zip(&sv) {
                    let h = (x - mean) * r;
                    xhat.push(h);
                    value.push(h * s);
                }
            }
            (value, xhat, inv_std)
        };
        let mut parents = vec![self.clone()];
        if let Some(s) = scale {
            parents.push(s.clone());
        }
        let has_scale = scale.is_some();
        Tensor::from_op(
            "layernorm",
            value,
            self.shape().to_vec(),
            parents,
            Box::new(move |g| {
                let mut gx = Vec::with_capacity(g.len());
                let mut gs = vec![T::zero(); group];
                for ((gc, hc), &r) in g.chunks(group).zip(xhat.chunks(group)).zip(&inv_std) {
                    let gy: Vec<T> = (0..group).map(|j| gc[j] * sv[j]).collect();
                    let mean_gy = gy.iter().copied().sum::<T>() / gsz;
                    let mean_gyh = gy.iter().zip(hc).map(|(&a, &b)| a * b).sum::<T>() / gsz;
                    for j in 0..group {
                        gx.push(r * (gy[j] - mean_gy - hc[j] * mean_gyh));
                        gs[j] += gc[j] * hc[j];
                    }
                }
                let mut out = vec![Some(gx)];
                if has_scale {
                    out.push(Some(gs));
                }
                out
            }),
        )
    }

    /// Rotary position embedding. Each row `r` is rotated at `positions[r]`;
    /// within every head of width `head_dim`, the pair (2i, 2i+1) is rotated
    /// by `pos · base^(−2i/head_dim)`.
    pub fn rope(&self, positions: &[usize], head_dim: usize, base: f64) -> Tensor<T> {
        assert_eq!(positions.len(), self.rows(), "rope: one position per row");
        assert!(head_dim % 2 == 0, "rope: head_dim must be even");
        let half = head_dim / 2;
        let angles: Vec<f64> = positions
            .iter()
            .flat_map(|&p| {
                (0..half).map(move |i| p as f64 * base.powf(-2.0 * i as f64 / head_dim as f64))
            })
            .collect();
        self.rotate_pairs(&angles, head_dim)
    }

    /// Rotate adjacent pairs (2i, 2i+1) of every head by `angles[row·head_dim/2 + i]`.
    pub fn rotate_pairs(&self, angles: &[f64], head_dim: usize) -> Tensor<T> {
        let (rows, n) = (self.rows(), self.cols());
        assert!(head_dim % 2 == 0 && n % head_dim == 0, "rope: bad head_dim");
        let half = head_dim / 2;
        assert_eq!(angles.len(), rows * half, "rope: one angle per row and pair");
        let cos: Vec<T> = angles.iter().map(|a| T::of(a.cos())).collect();
        let sin: Vec<T> = angles.iter().map(|a| T::of(a.sin())).collect();
        let rotate = move |src: &[T], cos: &[T], sin: &[T], sign: T| -> Vec<T> {
            let mut out = vec![T::zero(); src.len()];
            for r in 0..rows {
                for h in 0..n / head_dim {
                    for i in 0..half {
                        let at = r * n + h * head_dim + 2 * i;
                        let (c, s) = (cos[r * half + i], sign * sin[r * half + i]);
                        let (a, b) = (src[at], src[at + 1]);
                        out[at] = a * c - b * s;
                        out[at + 1] = a * s + b * c;
                    }
                }
            }
            out
        };
        let value = rotate(&self.value(), &cos, &sin, T::one());
        Tensor::from_op(
            "rope",
            value,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(rotate(g, &cos, &sin, -T::one()))]),
        )
    }

    /// Columns `start..start+len` of the last dimension, as a 2-D (rows, len) tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor<T> {
        let (rows, n) = (self.rows(), self.cols());
        assert!(start + len <= n && len > 0, "slice_cols out of range");
        let value = self
            .value()
            .chunks(n)
            .flat_map(|r| r[start..start + len].to_vec())
            .collect();
        Tensor::from_op(
            "slice_cols",
            value,
            vec![rows, len],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![T::zero(); rows * n];
                for (r, gr) in g.chunks(len).enumerate() {
                    gx[r * n + start..r * n + start + len].copy_from_slice(gr);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Concatenate 2-D tensors with equal row counts along columns.
    pub fn concat_cols(parts: &[Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = parts[0].rows();
        assert!(parts.iter().all(|p| p.rows() == rows), "concat_cols: row mismatch");
        let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(rows * total);
        {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            for r in 0..rows {
                for (v, &w) in vals.iter().zip(&widths) {
                    value.extend_from_slice(&v[r * w..(r + 1) * w]);
                }
            }
        }
        let w2 = widths.clone();
        Tensor::from_op(
            "concat_cols",
            value,
            vec![rows, total],
            parts.to_vec(),
            Box::new(move |g| {
                let mut outs: Vec<Vec<T>> = w2.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
                for gr in g.chunks(total) {
                    let mut off = 0;
                    for (o, &w) in outs.iter_mut().zip(&w2) {
                        o.extend_from_slice(&gr[off..off + w]);
                        off += w;
                    }
                }
                outs.into_iter().map(Some).collect()
            }),
        )
    }

    /// Rows `start..start+len` as a 2-D (len, cols) tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Tensor<T> {
        let (rows, n) = (self.rows(), self.cols());
        assert!(start + len <= rows && len > 0, "slice_rows out of range");
        let value = self.value()[start * n..(start + len) * n].to_vec();
        Tensor::from_op(
            "slice_rows",
            value,
            vec![len, n],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![T::zero(); rows * n];
                gx[start * n..(start + len) * n].copy_from_slice(g);
                vec![Some(gx)]
            }),
        )
    }

    /// Stack 2-D tensors with equal column counts along rows.
    pub fn concat_rows(parts: &[Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = parts[0].cols();
        assert!(parts.iter().all(|p| p.cols() == n), "concat_rows: column mismatch");
        let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        let mut value = Vec::with_capacity(sizes.iter().sum());
        for p in parts {
            value.extend_from_slice(&p.value());
        }
        let rows = value.len() / n;
        Tensor::from_op(
            "concat_rows",
            value,
            vec![rows, n],
            parts.to_vec(),
            Box::new(move |g| {
                let mut off = 0;
                sizes
                    .iter()
                    .map(|&s| {
                        let out = g[off..off + s].to_vec();
                        off += s;
                        Some(out)
                    })
                    .collect()
            }),
        )
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        assert_eq!(shape.iter().product::<usize>(), self.numel(), "reshape: size mismatch");
        Tensor::from_op(
            "reshape",
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        )
    }

    /// Gather rows of an embedding table (vocab, d) by id.
    pub fn embedding(table: &Tensor<T>, ids: &[usize]) -> Tensor<T> {
        let (vocab, d) = (table.rows(), table.cols());
        assert!(ids.iter().all(|&i| i < vocab), "embedding id out of range");
        let value = {
            let tv = table.value();
            ids.iter().flat_map(|&i| tv[i * d..(i + 1) * d].to_vec()).collect()
        };
        let ids = ids.to_vec();
        let n = ids.len();
        Tensor::from_op(
            "embedding",
            value,
            vec![n, d],
            vec![table.clone()],
            Box::new(move |g| {
                let mut gt = vec![T::zero(); vocab * d];
                for (r, &i) in ids.iter().enumerate() {
                    gt[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(a, &b)| *a += b);
                }
                vec![Some(gt)]
            }),
        )
    }

    pub fn sum(&self) -> Tensor<T> {
        let s = self.value().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        self.sum().scale(T::one() / T::of_usize(self.numel()))
    }

    /// Σ xᵢ·wᵢ against a constant weight array.
    pub fn dot_const(&self, w: Vec<T>) -> Tensor<T> {
        self.mul_const(w).sum()
    }

    /// Mean next-token negative log-likelihood of `targets` under row logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> Tensor<T> {
        let (rows, n) = (self.rows(), self.cols());
        assert_eq!(targets.len(), rows, "cross_entropy: one target per row");
        assert!(targets.iter().all(|&t| t < n), "cross_entropy: target out of range");
        let mut probs = vec![T::zero(); rows * n];
        let mut loss = T::zero();
        {
            let xv = self.value();
            for (r, &t) in targets.iter().enumerate() {
                let row = &xv[r * n..(r + 1) * n];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
                let lse = max + sum.ln();
                loss += lse - row[t];
                for j in 0..n {
                    probs[r * n + j] = (row[j] - lse).exp();
                }
            }
        }
        let inv = T::one() / T::of_usize(rows);
        let targets = targets.to_vec();
        Tensor::from_op(
            "cross_entropy",
            vec![loss * inv],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    gx[r * n + t] -= T::one();
                }
                let c = g[0] * inv;
                gx.iter_mut().for_each(|v| *v *= c);
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(v: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::leaf(v.to_vec(), shape)
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let y = t(&[0.3; 4], &[1, 4]).softmax_rows(None);
        assert_eq!(y.to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_closed_form_pair() {
        let y = t(&[0.0, 3f64.ln()], &[1, 2]).softmax_rows(None).to_vec();
        assert_abs_diff_eq!(y[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn softmax_all_masked_row_is_zero_and_flagged() {
        let mask = AttnMask::from_fn(2, 2, |i, _| i == 1);
        let (y, flag) = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]).softmax_rows_flagged(Some(&mask));
        assert!(flag);
        let y = y.to_vec();
        assert_eq!(&y[..2], &[0.0, 0.0]);
        assert!(y.iter().all(|v| v.is_finite()));
        let (_, flag) = t(&[1.0; 4], &[2, 2]).softmax_rows_flagged(Some(&AttnMask::causal(2)));
        assert!(!flag);
    }

    #[test]
    fn rmsnorm_known_values() {
        let y = t(&[3.0, 4.0], &[1, 2]).rmsnorm(None, 0.0).to_vec();
        let rms = 12.5f64.sqrt();
        assert_abs_diff_eq!(y[0], 3.0 / rms, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 4.0 / rms, epsilon = 1e-15);
        assert_abs_diff_eq!(y[0], 0.8485, epsilon = 1e-4);
        assert_abs_diff_eq!(y[1], 1.1314, epsilon = 1e-4);
        let z = t(&[0.0; 3], &[1, 3]).rmsnorm(None, 1e-5).to_vec();
        assert_eq!(z, vec![0.0; 3]);
    }

    #[test]
    fn rope_position_zero_is_identity_and_quarter_turn() {
        let x = t(&[0.3, -1.2, 2.0, 0.7], &[1, 4]);
        assert_eq!(x.rope(&[0], 4, 10000.0).to_vec(), x.to_vec());
        let y = t(&[1.0, 0.0], &[1, 2])
            .rotate_pairs(&[std::f64::consts::FRAC_PI_2], 2)
            .to_vec();
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slicing_round_trips_through_concat() {
        let x = t(&[1., 2., 3., 4., 5., 6.], &[2, 3]);
        let parts = [x.slice_cols(0, 1), x.slice_cols(1, 2)];
        assert_eq!(Tensor::concat_cols(&parts).to_vec(), x.to_vec());
        let rows = [x.slice_rows(0, 1), x.slice_rows(1, 1)];
        assert_eq!(Tensor::concat_rows(&rows).to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_backward_matches_hand_computation() {
        let a = t(&[1., 2., 3., 4.], &[2, 2]);
        let b = t(&[5., 6., 7., 8.], &[2, 2]);
        a.matmul(&b).sum().backward().unwrap();
        // d/dA sum(AB) = 1·Bᵀ row sums
        assert_eq!(a.grad().unwrap(), vec![11., 15., 11., 15.]);
        assert_eq!(b.grad().unwrap(), vec![4., 4., 6., 6.]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let x = t(&[0.0; 8], &[2, 4]);
        let l = x.cross_entropy(&[1, 3]);
        assert_abs_diff_eq!(l.item(), 4f64.ln(), epsilon = 1e-15);
    }
}
