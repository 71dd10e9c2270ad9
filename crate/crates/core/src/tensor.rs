//! Dense row-major arrays and the numeric kernels the tape is built on.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Floating-point element type. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Name used in checkpoint manifests.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to any float")
    }

    fn f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float converts to f64")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::invalid("tensor", format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} needs {len} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    /// Uniform Glorot initialisation over the last two extents.
    pub fn glorot<R: Rng>(shape: &[usize], rng: &mut R) -> Self {
        let (fan_in, fan_out) = match shape.len() {
            0 => (1, 1),
            1 => (shape[0], shape[0]),
            n => (shape[n - 2], shape[n - 1]),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::of(rng.gen_range(-limit..=limit)))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn normal<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("std must be positive");
        let len = shape.iter().product();
        let data = (0..len).map(|_| T::of(dist.sample(rng))).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| T::of(rng.gen_range(lo..hi))).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| {
                assert!(i < s, "index {index:?} out of bounds for {:?}", self.shape);
                acc * s + i
            })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn all_finite(&self) -> bool {
        // x - x is 0 for finite x and NaN otherwise
        let mut acc = [T::zero(); 8];
        let mut chunks = self.data.chunks_exact(8);
        for c in &mut chunks {
            for l in 0..8 {
                acc[l] = acc[l] + (c[l] - c[l]);
            }
        }
        acc.iter().all(|a| *a == T::zero()) && chunks.remainder().iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Swap the last two axes.
    pub fn transpose_last2(&self) -> Result<Self> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::invalid("transpose", format!("rank {r} < 2")));
        }
        let (m, n) = (self.shape[r - 2], self.shape[r - 1]);
        let batch = self.len() / (m * n);
        let mut out = vec![T::zero(); self.len()];
        for b in 0..batch {
            let src = &self.data[b * m * n..(b + 1) * m * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Ok(Self { shape, data: out })
    }

    /// Matrix product with broadcasting over leading batch axes.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let plan = MatmulPlan::new(&self.shape, &other.shape)?;
        let mut out = vec![T::zero(); plan.out_len()];
        plan.forward(&self.data, &other.data, &mut out);
        Ok(Self {
            shape: plan.out_shape.clone(),
            data: out,
        })
    }
}

/// C[m,n] += A[m,k] · B[k,n]
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let blocked = m / 4 * 4;
    let (c4, c1) = c[..m * n].split_at_mut(blocked * n);
    for (cb, ab) in c4.chunks_exact_mut(4 * n).zip(a.chunks_exact(4 * k)) {
        let (c0, rest) = cb.split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (ab[p], ab[k + p], ab[2 * k + p], ab[3 * k + p]);
            if a0 == T::zero() && a1 == T::zero() && a2 == T::zero() && a3 == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                let bv = brow[j];
                c0[j] = c0[j] + a0 * bv;
                c1[j] = c1[j] + a1 * bv;
                c2[j] = c2[j] + a2 * bv;
                c3[j] = c3[j] + a3 * bv;
            }
        }
    }
    for (i, crow) in c1.chunks_exact_mut(n.max(1)).enumerate().take(m - blocked) {
        let arow = &a[(blocked + i) * k..(blocked + i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// C[m,k] += G[m,n] · B[k,n]ᵀ
pub(crate) fn gemm_nt<T: Scalar>(g: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let mut bt = vec![T::zero(); n * k];
    for p in 0..k {
        for j in 0..n {
            bt[j * k + p] = b[p * n + j];
        }
    }
    gemm_nn(g, &bt, c, m, n, k);
}

/// C[k,n] += A[m,k]ᵀ · G[m,n]
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], g: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let blocked = m / 4 * 4;
    for (ab, gb) in a[..blocked * k].chunks_exact(4 * k).zip(g.chunks_exact(4 * n)) {
        let (g0, rest) = gb.split_at(n);
        let (g1, rest) = rest.split_at(n);
        let (g2, g3) = rest.split_at(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (ab[p], ab[k + p], ab[2 * k + p], ab[3 * k + p]);
            if a0 == T::zero() && a1 == T::zero() && a2 == T::zero() && a3 == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + a0 * g0[j] + a1 * g1[j] + a2 * g2[j] + a3 * g3[j];
            }
        }
    }
    for i in blocked..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv = *cv + av * gv;
            }
        }
    }
}

/// Batch layout of a (possibly broadcast) matrix product.
#[derive(Clone, Debug)]
pub(crate) struct MatmulPlan {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub batch: usize,
    pub a_batched: bool,
    pub b_batched: bool,
    pub out_shape: Vec<usize>,
}

impl MatmulPlan {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", a, b));
        }
        let a_lead = &a[..a.len() - 2];
        let b_lead = &b[..b.len() - 2];
        let lead = if a_lead.is_empty() {
            b_lead
        } else if b_lead.is_empty() || a_lead == b_lead {
            a_lead
        } else {
            return Err(Error::shape("matmul", a, b));
        };
        let mut out_shape = lead.to_vec();
        out_shape.extend([m, n]);
        Ok(Self {
            m,
            k,
            n,
            batch: lead.iter().product(),
            a_batched: !a_lead.is_empty(),
            b_batched: !b_lead.is_empty(),
            out_shape,
        })
    }

    pub fn out_len(&self) -> usize {
        self.batch * self.m * self.n
    }

    fn a_slice<'a, T>(&self, a: &'a [T], bi: usize) -> &'a [T] {
        let sz = self.m * self.k;
        if self.a_batched {
            &a[bi * sz..(bi + 1) * sz]
        } else {
            a
        }
    }

    fn b_slice<'a, T>(&self, b: &'a [T], bi: usize) -> &'a [T] {
        let sz = self.k * self.n;
        if self.b_batched {
            &b[bi * sz..(bi + 1) * sz]
        } else {
            b
        }
    }

    pub fn forward<T: Scalar>(&self, a: &[T], b: &[T], out: &mut [T]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if !self.b_batched {
            // Shared right operand: fold the batch into the row dimension.
            gemm_nn(a, b, out, self.batch * m, k, n);
            return;
        }
        for bi in 0..self.batch {
            gemm_nn(
                self.a_slice(a, bi),
                self.b_slice(b, bi),
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
    }

    pub fn grad_a<T: Scalar>(&self, g: &[T], b: &[T], da: &mut [T]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if !self.b_batched && self.a_batched {
            gemm_nt(g, b, da, self.batch * m, k, n);
            return;
        }
        for bi in 0..self.batch {
            let dst = if self.a_batched {
                &mut da[bi * m * k..(bi + 1) * m * k]
            } else {
                &mut da[..]
            };
            gemm_nt(&g[bi * m * n..(bi + 1) * m * n], self.b_slice(b, bi), dst, m, k, n);
        }
    }

    pub fn grad_b<T: Scalar>(&self, a: &[T], g: &[T], db: &mut [T]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if !self.b_batched && self.a_batched {
            gemm_tn(a, g, db, self.batch * m, k, n);
            return;
        }
        for bi in 0..self.batch {
            let dst = if self.b_batched {
                &mut db[bi * k * n..(bi + 1) * k * n]
            } else {
                &mut db[..]
            };
            gemm_tn(self.a_slice(a, bi), &g[bi * m * n..(bi + 1) * m * n], dst, m, k, n);
        }
    }
}

/// Output shape and per-operand strides for numpy-style broadcasting.
#[derive(Clone, Debug)]
pub(crate) struct Broadcast {
    pub out_shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
    pub same: bool,
    /// Length of `b` when `a` fills the output and `b` repeats along
    /// leading axes.
    tile_b: Option<usize>,
    tile_a: Option<usize>,
}

impl Broadcast {
    pub fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        if a == b {
            return Ok(Self {
                out_shape: a.to_vec(),
                a_strides: Vec::new(),
                b_strides: Vec::new(),
                same: true,
                tile_b: None,
                tile_a: None,
            });
        }
        let rank = a.len().max(b.len());
        let pad = |s: &[usize]| {
            let mut v = vec![1; rank - s.len()];
            v.extend_from_slice(s);
            v
        };
        let (pa, pb) = (pad(a), pad(b));
        let mut out_shape = Vec::with_capacity(rank);
        for (&x, &y) in pa.iter().zip(&pb) {
            if x == y || y == 1 {
                out_shape.push(x);
            } else if x == 1 {
                out_shape.push(y);
            } else {
                return Err(Error::shape(op, a, b));
            }
        }
        let strides = |s: &[usize]| {
            let mut st = vec![0; rank];
            let mut acc = 1;
            for i in (0..rank).rev() {
                st[i] = if s[i] == 1 { 0 } else { acc };
                acc *= s[i];
            }
            st
        };
        // `s` equals the output on a trailing block and is 1 before it
        let tile = |s: &[usize]| -> Option<usize> {
            let lead = s.iter().take_while(|&&d| d == 1).count();
            (s[lead..] == out_shape[lead..]).then(|| s[lead..].iter().product())
        };
        let tile_b = if pa == out_shape { tile(&pb) } else { None };
        let tile_a = if pb == out_shape { tile(&pa) } else { None };
        Ok(Self {
            a_strides: strides(&pa),
            b_strides: strides(&pb),
            out_shape,
            same: false,
            tile_b,
            tile_a,
        })
    }

    /// `f(a[ia], b[ib])` at every output position, in output order.
    pub fn map2<T: Copy, U>(&self, a: &[T], b: &[T], f: impl Fn(T, T) -> U) -> Vec<U> {
        let mut out = Vec::with_capacity(self.out_len());
        if self.same {
            out.extend(a.iter().zip(b).map(|(&x, &y)| f(x, y)));
        } else if let Some(len) = self.tile_b {
            for chunk in a.chunks_exact(len) {
                out.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
            }
        } else if let Some(len) = self.tile_a {
            for chunk in b.chunks_exact(len) {
                out.extend(a.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
            }
        } else {
            self.for_each(|_, ia, ib| out.push(f(a[ia], b[ib])));
        }
        out
    }

    /// Sum an output-shaped array back onto operand `a` (`lhs`) or `b`.
    pub fn reduce<T: Scalar>(&self, grad: Vec<T>, operand_len: usize, lhs: bool) -> Vec<T> {
        if grad.len() == operand_len {
            return grad;
        }
        let tile = if lhs { self.tile_a } else { self.tile_b };
        let mut out = vec![T::zero(); operand_len];
        match tile {
            Some(len) => {
                for chunk in grad.chunks_exact(len) {
                    for (o, &g) in out.iter_mut().zip(chunk) {
                        *o = *o + g;
                    }
                }
            }
            None => self.for_each(|o, ia, ib| {
                let i = if lhs { ia } else { ib };
                out[i] = out[i] + grad[o];
            }),
        }
        out
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    /// Visit every output position with the matching flat offsets into `a` and `b`.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let len = self.out_len();
        if self.same {
            for i in 0..len {
                f(i, i, i);
            }
            return;
        }
        let rank = self.out_shape.len();
        let inner = self.out_shape[rank - 1];
        if inner == 0 {
            return;
        }
        let (sa, sb) = (self.a_strides[rank - 1], self.b_strides[rank - 1]);
        let mut idx = vec![0usize; rank - 1];
        let (mut ia, mut ib) = (0usize, 0usize);
        let mut o = 0;
        while o < len {
            for j in 0..inner {
                f(o + j, ia + j * sa, ib + j * sb);
            }
            o += inner;
            for ax in (0..rank - 1).rev() {
                idx[ax] += 1;
                ia += self.a_strides[ax];
                ib += self.b_strides[ax];
                if idx[ax] < self.out_shape[ax] {
                    break;
                }
                ia -= self.a_strides[ax] * idx[ax];
                ib -= self.b_strides[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }
}

/// `(outer, axis_len, inner)` decomposition of a shape around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.at(&[i, p]) * b.at(&[p, j]);
                }
            }
        }
        out
    }

    #[test]
    fn identity_times_matrix() {
        let a = Tensor::<f64>::eye(2);
        let b = Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_column() {
        let a = Tensor::<f64>::from_f64(&[1, 2], &[1.0, 2.0]).unwrap();
        let b = Tensor::from_f64(&[2, 1], &[0.0, 0.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[0.0]);
    }

    #[test]
    fn random_3x4_by_4x2_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::<f64>::uniform(&[3, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[4, 2], -1.0, 1.0, &mut rng);
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.data().iter().zip(naive(&a, &b)) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatch_reports_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn shared_lhs_broadcasts_over_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::<f64>::uniform(&[3, 3], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[2, 3, 4], -1.0, 1.0, &mut rng);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 4]);
        for bi in 0..2 {
            let slice = Tensor::new(&[3, 4], b.data()[bi * 12..(bi + 1) * 12].to_vec()).unwrap();
            let expect = naive(&a, &slice);
            assert_eq!(&c.data()[bi * 12..(bi + 1) * 12], expect.as_slice());
        }
    }

    #[test]
    fn broadcast_bias_offsets() {
        let bc = Broadcast::new("add", &[2, 3], &[3]).unwrap();
        let mut seen = Vec::new();
        bc.for_each(|o, a, b| seen.push((o, a, b)));
        assert_eq!(seen[4], (4, 4, 1));
        assert!(Broadcast::new("add", &[2, 3], &[2]).is_err());
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::<f64>::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::new(&[0, 2], vec![]).is_err());
    }
}
