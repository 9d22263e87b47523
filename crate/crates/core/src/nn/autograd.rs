//! Minimal reverse-mode automatic differentiation over 2-D arrays.
//!
//! A [`Tape`] records every operation as a node holding its value, its
//! parent node ids, and a backward closure that maps the upstream gradient
//! to one gradient per parent. [`Tape::backward`] walks the nodes in
//! reverse creation order and accumulates gradients, seeding the requested
//! scalar output with 1.
//!
//! The op set is exactly what the segmentation network and its losses
//! need; it is generic over the float type so the training path can run in
//! f32 while gradient tests instantiate f64 and compare against central
//! finite differences.

use std::cell::RefCell;

use ndarray::{concatenate, s, Array2, Axis};

/// Scalar type for tapes and parameters. `f32` for training and inference,
/// `f64` for finite-difference verification.
pub trait Real: ndarray::NdFloat {}
impl Real for f32 {}
impl Real for f64 {}

/// Convert an f64 literal to the tape scalar type.
pub fn r<F: Real>(x: f64) -> F {
    F::from(x).expect("finite conversion")
}

/// Handle to a node on a tape. Only valid for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<F> = Box<dyn Fn(&Array2<F>) -> Vec<Array2<F>>>;

struct Node<F: Real> {
    value: Array2<F>,
    parents: Vec<usize>,
    back: Option<BackFn<F>>,
}

/// Gradient of a scalar output with respect to every tape node.
pub struct Gradients<F: Real> {
    grads: Vec<Option<Array2<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient for `v`, if any path connected it to the output.
    pub fn get(&self, v: Var) -> Option<&Array2<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros of the given shape when disconnected.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<F> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Array2::zeros(shape),
        }
    }
}

#[derive(Default)]
pub struct Tape<F: Real> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Current value of a node (cloned out of the tape).
    pub fn value(&self, v: Var) -> Array2<F> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> F {
        let nodes = self.nodes.borrow();
        let value = &nodes[v.0].value;
        assert_eq!(value.dim(), (1, 1), "scalar() needs a 1x1 node");
        value[[0, 0]]
    }

    /// Register a leaf (input or parameter).
    pub fn input(&self, value: Array2<F>) -> Var {
        self.push_node(value, Vec::new(), None)
    }

    fn push_node(&self, value: Array2<F>, parents: Vec<usize>, back: Option<BackFn<F>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            back,
        });
        Var(nodes.len() - 1)
    }

    fn push(
        &self,
        value: Array2<F>,
        parents: Vec<Var>,
        back: impl Fn(&Array2<F>) -> Vec<Array2<F>> + 'static,
    ) -> Var {
        self.push_node(
            value,
            parents.iter().map(|v| v.0).collect(),
            Some(Box::new(back)),
        )
    }

    /// Accumulate d(output)/d(node) for every node feeding the scalar
    /// `output`.
    pub fn backward(&self, output: Var) -> Gradients<F> {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.0].value.dim(),
            (1, 1),
            "backward() differentiates a scalar"
        );
        let mut grads: Vec<Option<Array2<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));

        for id in (0..=output.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            let node = &nodes[id];
            let Some(back) = &node.back else { continue };
            let upstream = grads[id].as_ref().unwrap().clone();
            let contributions = back(&upstream);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (&p, c) in node.parents.iter().zip(contributions) {
                match &mut grads[p] {
                    Some(acc) => *acc += &c,
                    slot => *slot = Some(c),
                }
            }
        }
        Gradients { grads }
    }

    // ---- arithmetic ----

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&self, a: Var, b: Var) -> Var {
        let y = &self.value(a) + &self.value(b);
        self.push(y, vec![a, b], |g| vec![g.clone(), g.clone()])
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let y = &av * &bv;
        self.push(y, vec![a, b], move |g| vec![g * &bv, g * &av])
    }

    /// a*x + b with scalar constants.
    pub fn affine(&self, x: Var, a: F, b: F) -> Var {
        let y = self.value(x).mapv(|v| a * v + b);
        self.push(y, vec![x], move |g| vec![g.mapv(|v| a * v)])
    }

    /// Multiply by a scalar constant.
    pub fn scale(&self, x: Var, a: F) -> Var {
        self.affine(x, a, F::zero())
    }

    /// Elementwise product with a constant mask (dropout, one-hot gather).
    pub fn mul_mask(&self, x: Var, mask: Array2<F>) -> Var {
        let y = &self.value(x) * &mask;
        self.push(y, vec![x], move |g| vec![g * &mask])
    }

    // ---- matrix products ----

    /// `a` (n,k) times `b` (k,m).
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let y = av.dot(&bv);
        self.push(y, vec![a, b], move |g| {
            vec![g.dot(&bv.t()), av.t().dot(g)]
        })
    }

    /// `a` (n,k) times `b` (m,k) transposed: result (n,m).
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let y = av.dot(&bv.t());
        self.push(y, vec![a, b], move |g| {
            vec![g.dot(&bv), g.t().dot(&av)]
        })
    }

    /// Add a (1,m) bias row to every row of `x` (n,m).
    pub fn add_bias(&self, x: Var, bias: Var) -> Var {
        let y = &self.value(x) + &self.value(bias);
        self.push(y, vec![x, bias], |g| {
            vec![g.clone(), g.sum_axis(Axis(0)).insert_axis(Axis(0))]
        })
    }

    /// x (n,k) * w (k,m) + b (1,m): one dense layer without nonlinearity.
    pub fn linear(&self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    // ---- nonlinearities ----

    pub fn leaky_relu(&self, x: Var, alpha: F) -> Var {
        let xv = self.value(x);
        let y = xv.mapv(|v| if v > F::zero() { v } else { alpha * v });
        self.push(y, vec![x], move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&xv, |gv, &v| {
                if v <= F::zero() {
                    *gv = *gv * alpha;
                }
            });
            vec![out]
        })
    }

    pub fn exp(&self, x: Var) -> Var {
        let y = self.value(x).mapv(|v| v.exp());
        let yc = y.clone();
        self.push(y, vec![x], move |g| vec![g * &yc])
    }

    /// Elementwise x^p for x >= 0. The derivative at x = 0 with p < 1 is
    /// unbounded; it is evaluated at a tiny floor instead so focal factors
    /// with fractional exponents stay finite.
    pub fn powf(&self, x: Var, p: F) -> Var {
        let xv = self.value(x);
        let y = xv.mapv(|v| v.max(F::zero()).powf(p));
        self.push(y, vec![x], move |g| {
            let floor = r::<F>(1e-12);
            let d = xv.mapv(|v| {
                let base = if p < F::one() { v.max(floor) } else { v.max(F::zero()) };
                p * base.powf(p - F::one())
            });
            vec![g * &d]
        })
    }

    /// max(x, c) elementwise; zero gradient in the clamped region.
    pub fn clamp_min(&self, x: Var, c: F) -> Var {
        let xv = self.value(x);
        let y = xv.mapv(|v| v.max(c));
        self.push(y, vec![x], move |g| {
            let mut out = g.clone();
            out.zip_mut_with(&xv, |gv, &v| {
                if v <= c {
                    *gv = F::zero();
                }
            });
            vec![out]
        })
    }

    // ---- reductions and broadcasts ----

    /// Sum of every element, as a 1x1 node.
    pub fn sum_all(&self, x: Var) -> Var {
        let xv = self.value(x);
        let dim = xv.dim();
        let y = Array2::from_elem((1, 1), xv.sum());
        self.push(y, vec![x], move |g| {
            vec![Array2::from_elem(dim, g[[0, 0]])]
        })
    }

    /// Per-row sums: (n,m) -> (n,1).
    pub fn row_sums(&self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let y = xv.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros((n, m));
            for i in 0..n {
                let gi = g[[i, 0]];
                out.row_mut(i).fill(gi);
            }
            vec![out]
        })
    }

    /// Column-wise max pool: (n,m) -> (1,m). Ties resolve to the earliest
    /// row so the backward pass is deterministic.
    pub fn col_max(&self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let mut y = Array2::zeros((1, m));
        let mut arg = vec![0usize; m];
        for c in 0..m {
            let mut best = xv[[0, c]];
            for i in 1..n {
                if xv[[i, c]] > best {
                    best = xv[[i, c]];
                    arg[c] = i;
                }
            }
            y[[0, c]] = best;
        }
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros((n, m));
            for c in 0..m {
                out[[arg[c], c]] = g[[0, c]];
            }
            vec![out]
        })
    }

    /// Column-wise mean pool: (n,m) -> (1,m).
    pub fn col_mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let inv = F::one() / r::<F>(n as f64);
        let y = (xv.sum_axis(Axis(0)) * inv).insert_axis(Axis(0));
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros((n, m));
            for i in 0..n {
                for c in 0..m {
                    out[[i, c]] = g[[0, c]] * inv;
                }
            }
            vec![out]
        })
    }

    /// Repeat a (1,m) row n times: backward sums over rows.
    pub fn broadcast_rows(&self, x: Var, n: usize) -> Var {
        let xv = self.value(x);
        let m = xv.ncols();
        assert_eq!(xv.nrows(), 1, "broadcast_rows takes a single row");
        let mut y = Array2::zeros((n, m));
        for i in 0..n {
            y.row_mut(i).assign(&xv.row(0));
        }
        self.push(y, vec![x], |g| {
            vec![g.sum_axis(Axis(0)).insert_axis(Axis(0))]
        })
    }

    // ---- shape surgery ----

    /// Concatenate along columns: (n,a) ++ (n,b) -> (n,a+b).
    pub fn concat_cols(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let na = av.ncols();
        let y = concatenate![Axis(1), av, bv];
        self.push(y, vec![a, b], move |g| {
            vec![
                g.slice(s![.., ..na]).to_owned(),
                g.slice(s![.., na..]).to_owned(),
            ]
        })
    }

    /// Columns [start, start+len) of `x`.
    pub fn slice_cols(&self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let dim = xv.dim();
        let y = xv.slice(s![.., start..start + len]).to_owned();
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros(dim);
            out.slice_mut(s![.., start..start + len]).assign(g);
            vec![out]
        })
    }

    /// Select rows of `x` by index (duplicates allowed); backward scatters
    /// with accumulation.
    pub fn gather_rows(&self, x: Var, idx: Vec<usize>) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let mut y = Array2::zeros((idx.len(), m));
        for (out, &i) in idx.iter().enumerate() {
            y.row_mut(out).assign(&xv.row(i));
        }
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros((n, m));
            for (row, &i) in idx.iter().enumerate() {
                let mut target = out.row_mut(i);
                target += &g.row(row);
            }
            vec![out]
        })
    }

    // ---- normalized exponentials ----

    /// Row-wise softmax (max-shifted for stability).
    pub fn softmax_rows(&self, x: Var) -> Var {
        let y = softmax_rows_value(&self.value(x));
        let yc = y.clone();
        self.push(y, vec![x], move |g| {
            // dx = y * (g - rowsum(g * y))
            let gy = g * &yc;
            let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
            vec![&yc * &(g - &dot)]
        })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&self, x: Var) -> Var {
        let xv = self.value(x);
        let soft = softmax_rows_value(&xv);
        let y = xv.clone();
        let y = {
            let mut y = y;
            for (mut row, xrow) in y.rows_mut().into_iter().zip(xv.rows()) {
                let max = xrow.fold(F::neg_infinity(), |a, &b| a.max(b));
                let lse = xrow.fold(F::zero(), |a, &b| a + (b - max).exp()).ln() + max;
                row.mapv_inplace(|v| v - lse);
            }
            y
        };
        self.push(y, vec![x], move |g| {
            // dx = g - softmax * rowsum(g)
            let rs = g.sum_axis(Axis(1)).insert_axis(Axis(1));
            vec![g - &(&soft * &rs)]
        })
    }

    /// Row-wise layer normalization with learned gain/bias (1,m).
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: F) -> Var {
        let xv = self.value(x);
        let gv = self.value(gain);
        let bv = self.value(bias);
        let (n, m) = xv.dim();
        let minv = F::one() / r::<F>(m as f64);

        let mut xhat = Array2::zeros((n, m));
        let mut inv_std = vec![F::zero(); n];
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.sum() * minv;
            let var = row.fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) * minv;
            let is = F::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for c in 0..m {
                xhat[[i, c]] = (xv[[i, c]] - mean) * is;
            }
        }
        let mut y = Array2::zeros((n, m));
        for i in 0..n {
            for c in 0..m {
                y[[i, c]] = xhat[[i, c]] * gv[[0, c]] + bv[[0, c]];
            }
        }

        self.push(y, vec![x, gain, bias], move |g| {
            let mut dx = Array2::zeros((n, m));
            let mut dgain = Array2::zeros((1, m));
            let mut dbias = Array2::zeros((1, m));
            for i in 0..n {
                // Per row: dxhat = g * gain; then the standard layer-norm
                // pullback through mean and variance.
                let mut mean_dxhat = F::zero();
                let mut mean_dxhat_xhat = F::zero();
                for c in 0..m {
                    let dxh = g[[i, c]] * gv[[0, c]];
                    mean_dxhat = mean_dxhat + dxh;
                    mean_dxhat_xhat = mean_dxhat_xhat + dxh * xhat[[i, c]];
                    dgain[[0, c]] = dgain[[0, c]] + g[[i, c]] * xhat[[i, c]];
                    dbias[[0, c]] = dbias[[0, c]] + g[[i, c]];
                }
                mean_dxhat = mean_dxhat * minv;
                mean_dxhat_xhat = mean_dxhat_xhat * minv;
                for c in 0..m {
                    let dxh = g[[i, c]] * gv[[0, c]];
                    dx[[i, c]] =
                        (dxh - mean_dxhat - xhat[[i, c]] * mean_dxhat_xhat) * inv_std[i];
                }
            }
            vec![dx, dgain, dbias]
        })
    }

    // ---- graph ops for EdgeConv ----

    /// Per-edge features for EdgeConv: given x (n,d) and a flat neighbor
    /// list of n*k indices, produce (n*k, 2d) rows [x_i, x_j - x_i] for
    /// edge (i, j). The neighbor structure itself is a constant.
    pub fn edge_features(&self, x: Var, neighbors: Vec<u32>, k: usize) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.dim();
        assert_eq!(neighbors.len(), n * k);
        let mut y = Array2::zeros((n * k, 2 * d));
        for i in 0..n {
            for m in 0..k {
                let j = neighbors[i * k + m] as usize;
                for c in 0..d {
                    y[[i * k + m, c]] = xv[[i, c]];
                    y[[i * k + m, d + c]] = xv[[j, c]] - xv[[i, c]];
                }
            }
        }
        self.push(y, vec![x], move |g| {
            let mut dx = Array2::zeros((n, d));
            for i in 0..n {
                for m in 0..k {
                    let j = neighbors[i * k + m] as usize;
                    for c in 0..d {
                        dx[[i, c]] = dx[[i, c]] + g[[i * k + m, c]] - g[[i * k + m, d + c]];
                        dx[[j, c]] = dx[[j, c]] + g[[i * k + m, d + c]];
                    }
                }
            }
            vec![dx]
        })
    }

    /// Max over each consecutive group of k rows: (n*k, d) -> (n, d).
    /// Ties resolve to the earliest row.
    pub fn group_max(&self, x: Var, k: usize) -> Var {
        let xv = self.value(x);
        let (nk, d) = xv.dim();
        assert_eq!(nk % k, 0);
        let n = nk / k;
        let mut y = Array2::zeros((n, d));
        let mut arg = vec![0usize; n * d];
        for i in 0..n {
            for c in 0..d {
                let mut best = xv[[i * k, c]];
                let mut bi = i * k;
                for m in 1..k {
                    let v = xv[[i * k + m, c]];
                    if v > best {
                        best = v;
                        bi = i * k + m;
                    }
                }
                y[[i, c]] = best;
                arg[i * d + c] = bi;
            }
        }
        self.push(y, vec![x], move |g| {
            let mut out = Array2::zeros((nk, d));
            for i in 0..n {
                for c in 0..d {
                    out[[arg[i * d + c], c]] = out[[arg[i * d + c], c]] + g[[i, c]];
                }
            }
            vec![out]
        })
    }
}

/// Plain-value row softmax shared with the inference path.
pub fn softmax_rows_value<F: Real>(x: &Array2<F>) -> Array2<F> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}
