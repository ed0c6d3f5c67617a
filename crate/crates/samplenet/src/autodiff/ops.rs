//! Forward evaluation, shape rules, and backward rules for every op.
//!
//! Broadcasting for the elementwise binaries (`add`, `sub`, `mul`, `div`)
//! supports exactly: identical shapes, a single-element operand on either
//! side, a row vector `[c]` on the right against `[r, c]`, and a column
//! vector `[r, 1]` on the right against `[r, c]`. Everything else is a
//! shape error naming the op.

use super::graph::{Graph, Node, Op, TensorId};
use super::{Error, Result};

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Pairing {
    Same,
    LhsScalar,
    RhsScalar,
    /// lhs `[r, c]`, rhs `[c]`
    RhsRow { cols: usize },
    /// lhs `[r, c]`, rhs `[r, 1]`
    RhsCol { cols: usize },
}

impl Pairing {
    #[inline]
    fn map(self, i: usize) -> (usize, usize) {
        match self {
            Pairing::Same => (i, i),
            Pairing::LhsScalar => (0, i),
            Pairing::RhsScalar => (i, 0),
            Pairing::RhsRow { cols } => (i, i % cols),
            Pairing::RhsCol { cols } => (i, i / cols),
        }
    }
}

fn pairing(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<(Pairing, Vec<usize>)> {
    let ln: usize = lhs.iter().product();
    let rn: usize = rhs.iter().product();
    if lhs == rhs {
        return Ok((Pairing::Same, lhs.to_vec()));
    }
    if ln == 1 {
        return Ok((Pairing::LhsScalar, rhs.to_vec()));
    }
    if rn == 1 {
        return Ok((Pairing::RhsScalar, lhs.to_vec()));
    }
    if lhs.len() == 2 && rhs.len() == 1 && rhs[0] == lhs[1] {
        return Ok((Pairing::RhsRow { cols: lhs[1] }, lhs.to_vec()));
    }
    if lhs.len() == 2 && rhs.len() == 2 && rhs[0] == lhs[0] && rhs[1] == 1 {
        return Ok((Pairing::RhsCol { cols: lhs[1] }, lhs.to_vec()));
    }
    Err(Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

fn binary_pairing(op: &Op, nodes: &[Node]) -> (Pairing, &'static str, TensorId, TensorId) {
    let (name, a, b) = match op {
        Op::Add(a, b) => ("add", *a, *b),
        Op::Sub(a, b) => ("sub", *a, *b),
        Op::Mul(a, b) => ("mul", *a, *b),
        Op::Div(a, b) => ("div", *a, *b),
        _ => unreachable!(),
    };
    let (p, _) = pairing(name, &nodes[a.0].shape, &nodes[b.0].shape)
        .expect("shape checked at construction");
    (p, name, a, b)
}

fn matmul_dims(op: &'static str, a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, Vec<usize>)> {
    match (a.len(), b.len()) {
        (2, 2) if a[1] == b[0] => Ok((a[0], a[1], b[1], vec![a[0], b[1]])),
        (2, 1) if a[1] == b[0] => Ok((a[0], a[1], 1, vec![a[0]])),
        _ => Err(Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        }),
    }
}

/// `(rows, cols)` of a 2D node.
fn dims2(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

/// Evaluate `op` against already-computed nodes. Returns the output data and
/// the op's cache (argmax/argmin flat indices; empty for most ops).
pub(crate) fn eval(op: &Op, nodes: &[Node]) -> Result<(Vec<f64>, Vec<usize>)> {
    let val = |id: TensorId| -> &[f64] { &nodes[id.0].data };
    let shp = |id: TensorId| -> &[usize] { &nodes[id.0].shape };

    let out = match op {
        Op::Leaf => unreachable!("leaves are never evaluated"),
        Op::Add(..) | Op::Sub(..) | Op::Mul(..) | Op::Div(..) => {
            let (p, _, a, b) = binary_pairing(op, nodes);
            let (av, bv) = (val(a), val(b));
            let n = match p {
                Pairing::LhsScalar => bv.len(),
                _ => av.len(),
            };
            let f: fn(f64, f64) -> f64 = match op {
                Op::Add(..) => |x, y| x + y,
                Op::Sub(..) => |x, y| x - y,
                Op::Mul(..) => |x, y| x * y,
                Op::Div(..) => |x, y| x / y,
                _ => unreachable!(),
            };
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let (ai, bi) = p.map(i);
                out.push(f(av[ai], bv[bi]));
            }
            (out, vec![])
        }
        Op::Matmul(a, b) => {
            let (m, k, n, _) = matmul_dims("matmul", shp(*a), shp(*b))?;
            let (av, bv) = (val(*a), val(*b));
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let x = av[i * k + p];
                    if x == 0.0 {
                        continue;
                    }
                    let row = p * n;
                    let orow = i * n;
                    for j in 0..n {
                        out[orow + j] += x * bv[row + j];
                    }
                }
            }
            (out, vec![])
        }
        Op::Relu(a) => (val(*a).iter().map(|&x| x.max(0.0)).collect(), vec![]),
        Op::Exp(a) => (val(*a).iter().map(|&x| x.exp()).collect(), vec![]),
        Op::Log(a) => (val(*a).iter().map(|&x| x.ln()).collect(), vec![]),
        Op::Sqrt(a) => (val(*a).iter().map(|&x| x.sqrt()).collect(), vec![]),
        Op::Square(a) => (val(*a).iter().map(|&x| x * x).collect(), vec![]),
        Op::Scale(a, c) => (val(*a).iter().map(|&x| x * c).collect(), vec![]),
        Op::AddConst(a, c) => (val(*a).iter().map(|&x| x + c).collect(), vec![]),
        Op::ClampMin(a, c) => (val(*a).iter().map(|&x| x.max(*c)).collect(), vec![]),
        Op::Sum(a) => (vec![val(*a).iter().sum()], vec![]),
        Op::Mean(a) => {
            let v = val(*a);
            (vec![v.iter().sum::<f64>() / v.len() as f64], vec![])
        }
        Op::MaxAxis(a, axis) | Op::MinAxis(a, axis) => {
            let take_max = matches!(op, Op::MaxAxis(..));
            let (r, c) = dims2(shp(*a));
            let v = val(*a);
            let out_len = if *axis == 0 { c } else { r };
            let mut out = Vec::with_capacity(out_len);
            let mut arg = Vec::with_capacity(out_len);
            for o in 0..out_len {
                let (mut best, mut best_at) = (f64::NAN, 0usize);
                let count = if *axis == 0 { r } else { c };
                for j in 0..count {
                    let flat = if *axis == 0 { j * c + o } else { o * c + j };
                    let x = v[flat];
                    // Strict comparison keeps the lowest index on ties.
                    let better = if j == 0 {
                        true
                    } else if take_max {
                        x > best
                    } else {
                        x < best
                    };
                    if better {
                        best = x;
                        best_at = flat;
                    }
                }
                out.push(best);
                arg.push(best_at);
            }
            (out, arg)
        }
        Op::SoftmaxNegSqDist { d2, t } => {
            let tv = val(*t)[0];
            if tv <= 0.0 {
                return Err(Error::NonPositiveTemperature { value: tv });
            }
            let t2 = tv * tv;
            let (q, k) = dims2(shp(*d2));
            let d = val(*d2);
            let mut out = vec![0.0; q * k];
            for row in 0..q {
                let s = &d[row * k..(row + 1) * k];
                // exponent -d2/t^2, stabilized by its per-row maximum
                let m = s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                let mut denom = 0.0;
                for j in 0..k {
                    let e = (-(s[j] - m) / t2).exp();
                    out[row * k + j] = e;
                    denom += e;
                }
                for j in 0..k {
                    out[row * k + j] /= denom;
                }
            }
            (out, vec![])
        }
        Op::Gather { x, indices } => {
            let xs = shp(*x);
            let n = xs[0];
            let cols = if xs.len() == 2 { xs[1] } else { 1 };
            for &i in indices {
                if i >= n {
                    return Err(Error::IndexOutOfRange {
                        op: "gather",
                        index: i,
                        size: n,
                    });
                }
            }
            let v = val(*x);
            let mut out = Vec::with_capacity(indices.len() * cols);
            for &i in indices {
                out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
            }
            (out, vec![])
        }
        Op::Concat { parts, axis } => {
            let mut out = Vec::new();
            if *axis == 0 {
                for p in parts {
                    out.extend_from_slice(val(*p));
                }
            } else {
                let rows = shp(parts[0])[0];
                for r in 0..rows {
                    for p in parts {
                        let c = shp(*p)[1];
                        out.extend_from_slice(&val(*p)[r * c..(r + 1) * c]);
                    }
                }
            }
            (out, vec![])
        }
        Op::FeatureAffine { x, scale, shift } => {
            let (r, c) = dims2(shp(*x));
            let (xv, sv, bv) = (val(*x), val(*scale), val(*shift));
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    out.push(xv[i * c + j] * sv[j] + bv[j]);
                }
            }
            (out, vec![])
        }
        Op::Reshape(a) => (val(*a).to_vec(), vec![]),
        Op::Transpose(a) => {
            let (r, c) = dims2(shp(*a));
            let v = val(*a);
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = v[i * c + j];
                }
            }
            (out, vec![])
        }
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Backward rules
// ---------------------------------------------------------------------------

fn ensure<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: TensorId,
) -> &'a mut Vec<f64> {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(vec![0.0; nodes[id.0].data.len()]);
    }
    slot.as_mut().unwrap()
}

/// Accumulate `out_grad` of node `i` into the gradients of its active
/// parents. `active[p]` is true iff parent `p` requires gradients and is
/// reachable from the backward root.
pub(crate) fn backward_step(
    nodes: &[Node],
    i: usize,
    out_grad: &[f64],
    grads: &mut [Option<Vec<f64>>],
    active: &[bool],
) {
    let val = |id: TensorId| -> &[f64] { &nodes[id.0].data };
    let shp = |id: TensorId| -> &[usize] { &nodes[id.0].shape };
    let on = |id: TensorId| -> bool { active[id.0] };
    let node = &nodes[i];

    match &node.op {
        Op::Leaf => {}
        Op::Add(..) | Op::Sub(..) | Op::Mul(..) | Op::Div(..) => {
            let (p, _, a, b) = binary_pairing(&node.op, nodes);
            let (av, bv) = (val(a), val(b));
            if on(a) {
                let ga = ensure(grads, nodes, a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    let (ai, bi) = p.map(idx);
                    ga[ai] += match node.op {
                        Op::Add(..) | Op::Sub(..) => g,
                        Op::Mul(..) => g * bv[bi],
                        Op::Div(..) => g / bv[bi],
                        _ => unreachable!(),
                    };
                }
            }
            if on(b) {
                let gb = ensure(grads, nodes, b);
                for (idx, &g) in out_grad.iter().enumerate() {
                    let (ai, bi) = p.map(idx);
                    gb[bi] += match node.op {
                        Op::Add(..) => g,
                        Op::Sub(..) => -g,
                        Op::Mul(..) => g * av[ai],
                        Op::Div(..) => -g * av[ai] / (bv[bi] * bv[bi]),
                        _ => unreachable!(),
                    };
                }
            }
        }
        Op::Matmul(a, b) => {
            let (m, k, n, _) = matmul_dims("matmul", shp(*a), shp(*b)).unwrap();
            let (av, bv) = (val(*a), val(*b));
            if on(*a) {
                let ga = ensure(grads, nodes, *a);
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += out_grad[i * n + j] * bv[p * n + j];
                        }
                        ga[i * k + p] += s;
                    }
                }
            }
            if on(*b) {
                let gb = ensure(grads, nodes, *b);
                for i in 0..m {
                    for p in 0..k {
                        let a_ip = av[i * k + p];
                        if a_ip == 0.0 {
                            continue;
                        }
                        let grow = i * n;
                        let brow = p * n;
                        for j in 0..n {
                            gb[brow + j] += a_ip * out_grad[grow + j];
                        }
                    }
                }
            }
        }
        Op::Relu(a) => {
            if on(*a) {
                let v = val(*a);
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    if v[idx] > 0.0 {
                        ga[idx] += g;
                    }
                }
            }
        }
        Op::Exp(a) => {
            if on(*a) {
                let out = &node.data;
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g * out[idx];
                }
            }
        }
        Op::Log(a) => {
            if on(*a) {
                let v = val(*a);
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g / v[idx];
                }
            }
        }
        Op::Sqrt(a) => {
            if on(*a) {
                let out = &node.data;
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g / (2.0 * out[idx]);
                }
            }
        }
        Op::Square(a) => {
            if on(*a) {
                let v = val(*a);
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += 2.0 * v[idx] * g;
                }
            }
        }
        Op::Scale(a, c) => {
            if on(*a) {
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g * c;
                }
            }
        }
        Op::AddConst(a, _) => {
            if on(*a) {
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g;
                }
            }
        }
        Op::ClampMin(a, c) => {
            // Zero gradient where the clamp is engaged.
            if on(*a) {
                let v = val(*a);
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    if v[idx] > *c {
                        ga[idx] += g;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if on(*a) {
                let g = out_grad[0];
                let ga = ensure(grads, nodes, *a);
                for x in ga.iter_mut() {
                    *x += g;
                }
            }
        }
        Op::Mean(a) => {
            if on(*a) {
                let n = val(*a).len() as f64;
                let g = out_grad[0] / n;
                let ga = ensure(grads, nodes, *a);
                for x in ga.iter_mut() {
                    *x += g;
                }
            }
        }
        Op::MaxAxis(a, _) | Op::MinAxis(a, _) => {
            // Gradient routes to the arg element recorded at forward time.
            if on(*a) {
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[node.aux[idx]] += g;
                }
            }
        }
        Op::SoftmaxNegSqDist { d2, t } => {
            let tv = val(*t)[0];
            let t2 = tv * tv;
            let (q, k) = dims2(shp(*d2));
            let w = &node.data;
            let dv = val(*d2);
            let mut dt_total = 0.0;
            let want_d2 = on(*d2);
            let want_t = on(*t);
            if !want_d2 && !want_t {
                return;
            }
            let mut gd2 = vec![0.0; q * k];
            for row in 0..q {
                let base = row * k;
                let mut dot = 0.0;
                for j in 0..k {
                    dot += out_grad[base + j] * w[base + j];
                }
                for j in 0..k {
                    // gradient w.r.t. the exponent e_j = -d2_j / t^2
                    let ge = w[base + j] * (out_grad[base + j] - dot);
                    gd2[base + j] = -ge / t2;
                    dt_total += ge * 2.0 * dv[base + j] / (t2 * tv);
                }
            }
            if want_d2 {
                let ga = ensure(grads, nodes, *d2);
                for (idx, g) in gd2.into_iter().enumerate() {
                    ga[idx] += g;
                }
            }
            if want_t {
                ensure(grads, nodes, *t)[0] += dt_total;
            }
        }
        Op::Gather { x, indices } => {
            if on(*x) {
                let xs = shp(*x);
                let cols = if xs.len() == 2 { xs[1] } else { 1 };
                let ga = ensure(grads, nodes, *x);
                for (row, &src) in indices.iter().enumerate() {
                    for j in 0..cols {
                        ga[src * cols + j] += out_grad[row * cols + j];
                    }
                }
            }
        }
        Op::Concat { parts, axis } => {
            if *axis == 0 {
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).len();
                    if on(*p) {
                        let gp = ensure(grads, nodes, *p);
                        for idx in 0..len {
                            gp[idx] += out_grad[offset + idx];
                        }
                    }
                    offset += len;
                }
            } else {
                let rows = shp(parts[0])[0];
                let total_cols: usize = parts.iter().map(|p| shp(*p)[1]).sum();
                let mut col_offset = 0;
                for p in parts {
                    let c = shp(*p)[1];
                    if on(*p) {
                        let gp = ensure(grads, nodes, *p);
                        for r in 0..rows {
                            for j in 0..c {
                                gp[r * c + j] += out_grad[r * total_cols + col_offset + j];
                            }
                        }
                    }
                    col_offset += c;
                }
            }
        }
        Op::FeatureAffine { x, scale, shift } => {
            let (r, c) = dims2(shp(*x));
            let (xv, sv) = (val(*x), val(*scale));
            if on(*x) {
                let gx = ensure(grads, nodes, *x);
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += out_grad[i * c + j] * sv[j];
                    }
                }
            }
            if on(*scale) {
                let gs = ensure(grads, nodes, *scale);
                for i in 0..r {
                    for j in 0..c {
                        gs[j] += out_grad[i * c + j] * xv[i * c + j];
                    }
                }
            }
            if on(*shift) {
                let gb = ensure(grads, nodes, *shift);
                for i in 0..r {
                    for j in 0..c {
                        gb[j] += out_grad[i * c + j];
                    }
                }
            }
        }
        Op::Reshape(a) => {
            if on(*a) {
                let ga = ensure(grads, nodes, *a);
                for (idx, &g) in out_grad.iter().enumerate() {
                    ga[idx] += g;
                }
            }
        }
        Op::Transpose(a) => {
            if on(*a) {
                let (r, c) = dims2(shp(*a));
                let ga = ensure(grads, nodes, *a);
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += out_grad[j * r + i];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Public op builders
// ---------------------------------------------------------------------------

impl Graph {
    fn unary(&mut self, op: Op, parent: TensorId) -> Result<TensorId> {
        let rg = self.nodes[parent.0].requires_grad;
        let shape = self.nodes[parent.0].shape.clone();
        self.push_op(op, rg, shape)
    }

    fn binary(&mut self, name: &'static str, op: Op, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (_, out_shape) = pairing(name, self.shape(a), self.shape(b))?;
        let rg = self.any_requires_grad(&[a, b]);
        self.push_op(op, rg, out_shape)
    }

    /// Matrix product `[m, k] @ [k, n] -> [m, n]`, or `[m, k] @ [k] -> [m]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (_, _, _, out_shape) = matmul_dims("matmul", self.shape(a), self.shape(b))?;
        let rg = self.any_requires_grad(&[a, b]);
        self.push_op(Op::Matmul(a, b), rg, out_shape)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("add", Op::Add(a, b), a, b)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("sub", Op::Sub(a, b), a, b)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("mul", Op::Mul(a, b), a, b)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary("div", Op::Div(a, b), a, b)
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(Op::Relu(a), a)
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(Op::Exp(a), a)
    }

    /// Natural log. The caller guarantees positive inputs; see
    /// [`Graph::clamp_min`] for the usual guard.
    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(Op::Log(a), a)
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(Op::Sqrt(a), a)
    }

    pub fn square(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(Op::Square(a), a)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        self.unary(Op::Scale(a, c), a)
    }

    pub fn add_const(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        self.unary(Op::AddConst(a, c), a)
    }

    /// Elementwise `max(x, c)`. Gradient is zero where the clamp engages.
    pub fn clamp_min(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        self.unary(Op::ClampMin(a, c), a)
    }

    /// Full reduction to a `[1]` scalar.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let rg = self.nodes[a.0].requires_grad;
        self.push_op(Op::Sum(a), rg, vec![1])
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let rg = self.nodes[a.0].requires_grad;
        self.push_op(Op::Mean(a), rg, vec![1])
    }

    fn reduce_axis(&mut self, name: &'static str, op: Op, a: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.shape(a);
        if shape.len() != 2 || axis > 1 {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: shape.to_vec(),
                rhs: vec![axis],
            });
        }
        let out_shape = vec![if axis == 0 { shape[1] } else { shape[0] }];
        let rg = self.nodes[a.0].requires_grad;
        self.push_op(op, rg, out_shape)
    }

    /// Maximum over one axis of a 2D tensor. The gradient routes to the
    /// argmax element; ties break to the lowest index.
    pub fn max_over_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis("max_over_axis", Op::MaxAxis(a, axis), a, axis)
    }

    /// Minimum over one axis of a 2D tensor; ties break to the lowest index.
    pub fn min_over_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis("min_over_axis", Op::MinAxis(a, axis), a, axis)
    }

    /// Row-wise softmax of `-d2 / t^2` where `d2` holds squared distances
    /// `[q, k]` and `t` is a positive scalar. Stabilized per row by
    /// subtracting the maximal exponent. Differentiable in both `d2` and `t`.
    pub fn softmax_neg_sq_dist(&mut self, d2: TensorId, t: TensorId) -> Result<TensorId> {
        let shape = self.shape(d2);
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "softmax_neg_sq_dist",
                lhs: shape.to_vec(),
                rhs: self.shape(t).to_vec(),
            });
        }
        if self.nodes[t.0].data.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax_neg_sq_dist",
                lhs: shape.to_vec(),
                rhs: self.shape(t).to_vec(),
            });
        }
        let out_shape = shape.to_vec();
        let rg = self.any_requires_grad(&[d2, t]);
        self.push_op(Op::SoftmaxNegSqDist { d2, t }, rg, out_shape)
    }

    /// Select rows of a 2D tensor (or elements of a 1D tensor) by index,
    /// with repetition allowed. Backward scatter-adds into the source.
    pub fn gather_rows(&mut self, x: TensorId, indices: &[usize]) -> Result<TensorId> {
        let shape = self.shape(x);
        let n = shape[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                op: "gather",
                index: bad,
                size: n,
            });
        }
        let out_shape = if shape.len() == 2 {
            vec![indices.len(), shape[1]]
        } else {
            vec![indices.len()]
        };
        let rg = self.nodes[x.0].requires_grad;
        self.push_op(
            Op::Gather {
                x,
                indices: indices.to_vec(),
            },
            rg,
            out_shape,
        )
    }

    /// Concatenate along `axis` (0 for 1D/2D stacking, 1 for 2D columns).
    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: vec![parts.len()],
                rhs: vec![axis],
            });
        }
        let first = self.shape(parts[0]).to_vec();
        let mismatch = |other: &[usize]| Error::ShapeMismatch {
            op: "concat",
            lhs: first.clone(),
            rhs: other.to_vec(),
        };
        let out_shape = if axis == 0 {
            let mut lead = 0;
            for p in parts {
                let s = self.shape(*p);
                if s.len() != first.len() || (s.len() == 2 && s[1] != first[1]) {
                    return Err(mismatch(s));
                }
                lead += s[0];
            }
            if first.len() == 2 {
                vec![lead, first[1]]
            } else {
                vec![lead]
            }
        } else {
            let mut cols = 0;
            for p in parts {
                let s = self.shape(*p);
                if s.len() != 2 || s[0] != first[0] {
                    return Err(mismatch(s));
                }
                cols += s[1];
            }
            vec![first[0], cols]
        };
        let rg = self.any_requires_grad(parts);
        self.push_op(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
            out_shape,
        )
    }

    /// Per-feature affine `y[i, j] = x[i, j] * scale[j] + shift[j]` for
    /// `x: [r, c]`, `scale, shift: [c]`. This is the normalization-free
    /// stand-in used where a batch-norm layer would otherwise sit.
    pub fn feature_affine(
        &mut self,
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let ss = self.shape(scale).to_vec();
        let bs = self.shape(shift).to_vec();
        if xs.len() != 2 || ss != [xs[1]] || bs != [xs[1]] {
            return Err(Error::ShapeMismatch {
                op: "feature_affine",
                lhs: xs,
                rhs: ss,
            });
        }
        let rg = self.any_requires_grad(&[x, scale, shift]);
        self.push_op(Op::FeatureAffine { x, scale, shift }, rg, xs)
    }

    /// Transpose a 2D tensor.
    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: shape,
                rhs: vec![],
            });
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push_op(Op::Transpose(a), rg, vec![shape[1], shape[0]])
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let expected: usize = shape.iter().product();
        let actual = self.nodes[a.0].data.len();
        if expected != actual {
            return Err(Error::LengthMismatch {
                op: "reshape",
                expected,
                actual,
            });
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push_op(Op::Reshape(a), rg, shape)
    }
}
