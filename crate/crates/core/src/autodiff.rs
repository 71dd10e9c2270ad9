//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op evaluates eagerly, checks its output for NaN/Inf, and appends a
//! node to the [`Tape`] holding the value and a local backward rule. Nodes are
//! only ever appended, so the tape is already in topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{split_axis, Broadcast, MatmulPlan, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Local backward rule: receives the upstream gradient and a flag per parent
/// telling whether that parent needs a gradient; returns one entry per parent.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    leaf: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], keyed by leaf [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn check_finite<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Gradient of a broadcast binary op with respect to one operand.
fn operand_grad<T: Scalar>(
    bc: &Broadcast,
    x: &[T],
    y: &[T],
    g: &[T],
    d: &impl Fn(T, T) -> T,
    shape: &[usize],
    lhs: bool,
) -> Tensor<T> {
    let mut local = bc.map2(x, y, d);
    for (v, &gv) in local.iter_mut().zip(g) {
        *v = *v * gv;
    }
    let len = shape.iter().product();
    Tensor::new(shape, bc.reduce(local, len, lhs)).unwrap()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.consumed = false;
        self.nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
            leaf: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf; receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad)
    }

    /// Record an op computed outside the built-in set.
    pub fn custom(
        &mut self,
        op: &'static str,
        parents: &[Var],
        value: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Result<Var> {
        check_finite(op, &value)?;
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.consumed = false;
        self.nodes.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.0).collect(),
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
            leaf: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rc(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes[v.0].value)
    }

    /// Reverse sweep from a scalar `loss`. A tape can be swept once per
    /// forward pass; a second call without new ops is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward on an empty tape".into()));
        }
        if self.consumed {
            return Err(Error::Tape(
                "tape already consumed by a previous backward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Tape(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || node.leaf {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let Some(rule) = node.backward.as_ref() else {
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let parent_grads = rule(&g, &needs);
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), self.nodes[p].value.shape());
                match grads[p].as_mut() {
                    Some(acc) => acc.add_assign(&pg),
                    None => grads[p] = Some(pg),
                }
            }
        }
        // Leaves that were never reached still get a zero gradient.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.leaf && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
            if !node.leaf {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    // ---- elementwise ---------------------------------------------------

    fn binary<F, DA, DB>(&mut self, op: &'static str, a: Var, b: Var, f: F, da: DA, db: DB) -> Result<Var>
    where
        F: Fn(T, T) -> T,
        DA: Fn(T, T) -> T + 'static,
        DB: Fn(T, T) -> T + 'static,
    {
        let (va, vb) = (self.rc(a), self.rc(b));
        let bc = Broadcast::new(op, va.shape(), vb.shape())?;
        let out = bc.map2(va.data(), vb.data(), f);
        let value = Tensor::new(&bc.out_shape, out)?;
        self.custom(
            op,
            &[a, b],
            value,
            Box::new(move |g, needs| {
                let (x, y, gd) = (va.data(), vb.data(), g.data());
                let ga = needs[0].then(|| operand_grad(&bc, x, y, gd, &da, va.shape(), true));
                let gb = needs[1].then(|| operand_grad(&bc, x, y, gd, &db, vb.shape(), false));
                vec![ga, gb]
            }),
        )
    }

    /// Broadcasting addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _| T::one(), |_, _| T::one())
    }

    /// Broadcasting subtraction.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _| T::one(), |_, _| -T::one())
    }

    /// Broadcasting elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: Var,
        f: impl Fn(T) -> T,
        // derivative given (input, output)
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var> {
        let va = self.rc(a);
        let out = Rc::new(va.map(f));
        let out2 = Rc::clone(&out);
        self.custom(
            op,
            &[a],
            (*out).clone(),
            Box::new(move |g, _| {
                let x = va.data();
                let y = out2.data();
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| gv * df(x[i], y[i]))
                    .collect();
                vec![Some(Tensor::new(g.shape(), data).unwrap())]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let va = self.rc(a);
        let value = va.map(|x| x * c);
        self.custom(
            "scale",
            &[a],
            value,
            Box::new(move |g, _| vec![Some(g.map(|v| v * c))]),
        )
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let value = self.value(a).map(|x| x + c);
        self.custom("add_scalar", &[a], value, Box::new(|g, _| vec![Some(g.clone())]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(
            "relu",
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(
            "sigmoid",
            a,
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, |x| x.abs(), |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let value = Tensor::scalar(self.value(a).sum());
        self.custom(
            "sum",
            &[a],
            value,
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    // ---- linear algebra --------------------------------------------------

    /// Matrix product over the last two axes; leading axes must match or one
    /// operand must be a plain matrix that is broadcast across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.rc(a), self.rc(b));
        let plan = MatmulPlan::new(va.shape(), vb.shape())?;
        let mut out = vec![T::zero(); plan.out_len()];
        plan.forward(va.data(), vb.data(), &mut out);
        let value = Tensor::new(&plan.out_shape, out)?;
        self.custom(
            "matmul",
            &[a, b],
            value,
            Box::new(move |g, needs| {
                let mut ga = None;
                let mut gb = None;
                if needs[0] {
                    let mut da = Tensor::zeros(va.shape());
                    plan.grad_a(g.data(), vb.data(), da.data_mut());
                    ga = Some(da);
                }
                if needs[1] {
                    let mut db = Tensor::zeros(vb.shape());
                    plan.grad_b(va.data(), g.data(), db.data_mut());
                    gb = Some(db);
                }
                vec![ga, gb]
            }),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose_last2()?;
        self.custom(
            "transpose",
            &[a],
            value,
            Box::new(|g, _| vec![Some(g.transpose_last2().unwrap())]),
        )
    }

    // ---- shape manipulation -----------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let from = self.shape(a).to_vec();
        let value = self.value(a).reshape(shape)?;
        self.custom(
            "reshape",
            &[a],
            value,
            Box::new(move |g, _| vec![Some(g.reshape(&from).unwrap())]),
        )
    }

    /// Concatenate along an existing axis.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            widths.push(s[axis]);
        }
        let total: usize = widths.iter().sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = vec![T::zero(); outer * total * inner];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for o in 0..outer {
                let dst = &mut out[(o * total + offset) * inner..(o * total + offset + w) * inner];
                dst.copy_from_slice(&src[o * w * inner..(o + 1) * w * inner]);
            }
            offset += w;
        }
        let value = Tensor::new(&shape, out)?;
        self.custom(
            "concat",
            parts,
            value,
            Box::new(move |g, needs| {
                let gd = g.data();
                let mut offset = 0;
                let mut res = Vec::with_capacity(widths.len());
                for (i, &w) in widths.iter().enumerate() {
                    if needs[i] {
                        let mut part = vec![T::zero(); outer * w * inner];
                        for o in 0..outer {
                            part[o * w * inner..(o + 1) * w * inner].copy_from_slice(
                                &gd[(o * total + offset) * inner..(o * total + offset + w) * inner],
                            );
                        }
                        let mut s = shape.clone();
                        s[axis] = w;
                        res.push(Some(Tensor::new(&s, part).unwrap()));
                    } else {
                        res.push(None);
                    }
                    offset += w;
                }
                res
            }),
        )
    }

    /// Stack equally shaped values along a new axis.
    pub fn stack(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let mut expanded = Vec::with_capacity(parts.len());
        for &p in parts {
            let mut s = self.shape(p).to_vec();
            if axis > s.len() {
                return Err(Error::invalid("stack", format!("axis {axis} for rank {}", s.len())));
            }
            s.insert(axis, 1);
            expanded.push(self.reshape(p, &s)?);
        }
        self.concat(&expanded, axis)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[(o * full + start) * inner..(o * full + start + len) * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = len;
        let value = Tensor::new(&oshape, out)?;
        self.custom(
            "narrow",
            &[a],
            value,
            Box::new(move |g, _| {
                let mut gin = Tensor::zeros(&shape);
                let dst = gin.data_mut();
                let gd = g.data();
                for o in 0..outer {
                    dst[(o * full + start) * inner..(o * full + start + len) * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gin)]
            }),
        )
    }

    /// Select rows of a `[V, d]` table: the one-hot-times-matrix product
    /// without materialising the one-hot vectors.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(Error::invalid("gather_rows", format!("table shape {shape:?}")));
        }
        let (v, d) = (shape[0], shape[1]);
        if let Some(&bad) = rows.iter().find(|&&r| r >= v) {
            return Err(Error::invalid("gather_rows", format!("row {bad} >= {v}")));
        }
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows", "no rows"));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let value = Tensor::new(&[rows.len(), d], out)?;
        let rows = rows.to_vec();
        self.custom(
            "gather_rows",
            &[table],
            value,
            Box::new(move |g, _| {
                let mut gt = Tensor::zeros(&shape);
                let dst = gt.data_mut();
                let gd = g.data();
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..d {
                        dst[r * d + c] = dst[r * d + c] + gd[i * d + c];
                    }
                }
                vec![Some(gt)]
            }),
        )
    }

    // ---- normalisation -----------------------------------------------------

    /// Softmax along `axis` restricted to positions where `mask` is true.
    /// Masked positions are exactly zero; a slice with no unmasked entry is
    /// all zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool], axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if mask.len() != self.value(x).len() {
            return Err(Error::shape("masked_softmax", &shape, &[mask.len()]));
        }
        if axis >= shape.len() {
            return Err(Error::invalid("masked_softmax", format!("axis {axis} for {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); xs.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..n {
                    if mask[idx(j)] && xs[idx(j)] > max {
                        max = xs[idx(j)];
                    }
                }
                if max == T::neg_infinity() {
                    continue;
                }
                let mut total = T::zero();
                for j in 0..n {
                    if mask[idx(j)] {
                        let e = (xs[idx(j)] - max).exp();
                        out[idx(j)] = e;
                        total = total + e;
                    }
                }
                for j in 0..n {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        let y = value.clone();
        self.custom(
            "masked_softmax",
            &[x],
            value,
            Box::new(move |g, _| {
                let (yd, gd) = (y.data(), g.data());
                let mut gx = vec![T::zero(); yd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: T = (0..n).map(|j| yd[idx(j)] * gd[idx(j)]).sum();
                        for j in 0..n {
                            // masked entries have y = 0, so they get no gradient
                            gx[idx(j)] = yd[idx(j)] * (gd[idx(j)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::new(&shape, gx).unwrap())]
            }),
        )
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let mask = vec![true; self.value(x).len()];
        self.masked_softmax(x, &mask, axis)
    }
}
