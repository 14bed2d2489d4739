//! Two-layer perceptron over batches of rows, with manual backward.
//!
//! Shapes are `in_dim -> hidden -> out_dim`; the hidden layer carries the
//! nonlinearity, the output layer is linear. A zero `in_dim` is legal and
//! yields a constant (bias-driven) function, which is how edge embeddings
//! degenerate when a dataset has no edge features.

use rand::Rng;

use crate::filters::Nonlinearity;
use crate::mat::Mat;

#[derive(Clone, Debug)]
pub struct Mlp {
    /// `in_dim x hidden`.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// `hidden x out_dim`.
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub hidden_act: Nonlinearity,
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    x: Mat,
    /// Post-activation hidden values; for relu the mask is `z1 > 0`, which
    /// assigns subgradient 0 at the kink.
    z1: Mat,
}

/// Per-tensor gradients, same shapes as the parameters.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

/// Uniform Glorot limit `sqrt(6 / (fan_in + fan_out))`.
fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.gen_range(-limit..=limit);
    }
    m
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(
        rng: &mut impl Rng,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        hidden_act: Nonlinearity,
    ) -> Self {
        Mlp {
            w1: glorot(rng, in_dim, hidden),
            b1: vec![0.0; hidden],
            w2: glorot(rng, hidden, out_dim),
            b2: vec![0.0; out_dim],
            hidden_act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }

    /// Applies the network to every row of `x`.
    pub fn forward_batch(&self, x: &Mat) -> (Mat, MlpCache) {
        debug_assert_eq!(x.cols(), self.in_dim(), "mlp input width");
        let mut z1 = x.matmul(&self.w1);
        let h = self.hidden_dim();
        for r in 0..z1.rows() {
            let row = z1.row_mut(r);
            for c in 0..h {
                row[c] = self.hidden_act.apply(row[c] + self.b1[c]);
            }
        }
        let mut y = z1.matmul(&self.w2);
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (c, &b) in self.b2.iter().enumerate() {
                row[c] += b;
            }
        }
        (y, MlpCache { x: x.clone(), z1 })
    }

    /// Reverse-mode pass: consumes `d loss / d output` rows, returns
    /// parameter gradients and `d loss / d input` rows.
    pub fn backward_batch(&self, cache: &MlpCache, dy: &Mat) -> (MlpGrads, Mat) {
        debug_assert_eq!(dy.rows(), cache.x.rows(), "mlp backward batch size");
        debug_assert_eq!(dy.cols(), self.out_dim(), "mlp backward width");

        let w2_grad = cache.z1.transpose().matmul(dy);
        let mut b2_grad = vec![0.0; self.out_dim()];
        for r in 0..dy.rows() {
            for (c, g) in b2_grad.iter_mut().enumerate() {
                *g += dy[(r, c)];
            }
        }

        let mut da1 = dy.matmul(&self.w2.transpose());
        if self.hidden_act == Nonlinearity::Relu {
            for r in 0..da1.rows() {
                let mask_row = cache.z1.row(r);
                let drow = da1.row_mut(r);
                for c in 0..drow.len() {
                    if mask_row[c] <= 0.0 {
                        drow[c] = 0.0;
                    }
                }
            }
        }

        let w1_grad = cache.x.transpose().matmul(&da1);
        let mut b1_grad = vec![0.0; self.hidden_dim()];
        for r in 0..da1.rows() {
            for (c, g) in b1_grad.iter_mut().enumerate() {
                *g += da1[(r, c)];
            }
        }
        let dx = da1.matmul(&self.w1.transpose());

        (MlpGrads { w1: w1_grad, b1: b1_grad, w2: w2_grad, b2: b2_grad }, dx)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            w1: Mat::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Mat::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Mutable views of the parameter tensors, in checkpoint order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.data_mut(),
            self.b1.as_mut_slice(),
            self.w2.data_mut(),
            self.b2.as_mut_slice(),
        ]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        self.w1.axpy(1.0, &other.w1);
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        self.w2.axpy(1.0, &other.w2);
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w1.data_mut() {
            *v *= s;
        }
        for v in &mut self.b1 {
            *v *= s;
        }
        for v in self.w2.data_mut() {
            *v *= s;
        }
        for v in &mut self.b2 {
            *v *= s;
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.data_mut(),
            self.b1.as_mut_slice(),
            self.w2.data_mut(),
            self.b2.as_mut_slice(),
        ]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }
}
