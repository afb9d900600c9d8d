use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::softmax;
use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// L2 penalty on the weights (not the biases).
    pub l2: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 100,
            epochs: 200,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 200,
            l2: 1e-4,
        }
    }
}

/// One ReLU hidden layer and a softmax output, trained by mini-batch SGD
/// with momentum for a fixed number of epochs.
#[derive(Clone, Debug)]
pub struct Mlp {
    w1: DMatrix<f64>,
    b1: DMatrix<f64>,
    w2: DMatrix<f64>,
    b2: DMatrix<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut seed::Rng) -> DMatrix<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

fn add_bias(z: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut row in z.row_iter_mut() {
        row += b;
    }
}

impl Mlp {
    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut z1 = x * &self.w1;
        add_bias(&mut z1, &self.b1);
        let a1 = z1.map(|v| v.max(0.0));
        let mut z2 = &a1 * &self.w2;
        add_bias(&mut z2, &self.b2);
        for i in 0..z2.nrows() {
            let mut row: Vec<f64> = z2.row(i).iter().copied().collect();
            softmax(&mut row);
            for (j, v) in row.into_iter().enumerate() {
                z2[(i, j)] = v;
            }
        }
        (a1, z2)
    }

    pub fn fit(p: &MlpParams, x: &Matrix, y: &[usize], n_classes: usize, seed_: u64) -> Result<Self> {
        if p.hidden == 0 || p.batch_size == 0 {
            return Err(invalid("mlp hidden and batch_size must be positive"));
        }
        let (n, d, k) = (x.rows(), x.cols(), n_classes);
        let mut rng = seed::rng(seed_);
        let mut net = Self {
            w1: glorot(d, p.hidden, &mut rng),
            b1: DMatrix::zeros(1, p.hidden),
            w2: glorot(p.hidden, k, &mut rng),
            b2: DMatrix::zeros(1, k),
        };
        let mut v = (
            DMatrix::zeros(d, p.hidden),
            DMatrix::zeros(1, p.hidden),
            DMatrix::zeros(p.hidden, k),
            DMatrix::zeros(1, k),
        );
        let mut order: Vec<usize> = (0..n).collect();
        let batch = p.batch_size.min(n);
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let m = chunk.len();
                let xb = DMatrix::from_fn(m, d, |i, j| x.get(chunk[i], j));
                let (a1, prob) = net.forward(&xb);
                let mut dz2 = prob;
                for (i, &r) in chunk.iter().enumerate() {
                    dz2[(i, y[r])] -= 1.0;
                }
                dz2 /= m as f64;
                let gw2 = a1.transpose() * &dz2 + &net.w2 * p.l2;
                let gb2 = DMatrix::from_fn(1, k, |_, j| dz2.column(j).sum());
                let mut dz1 = &dz2 * net.w2.transpose();
                dz1.zip_apply(&a1, |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                let gw1 = xb.transpose() * &dz1 + &net.w1 * p.l2;
                let gb1 = DMatrix::from_fn(1, p.hidden, |_, j| dz1.column(j).sum());
                let step = |vel: &mut DMatrix<f64>, w: &mut DMatrix<f64>, g: &DMatrix<f64>| {
                    *vel *= p.momentum;
                    *vel -= g * p.learning_rate;
                    *w += &*vel;
                };
                step(&mut v.0, &mut net.w1, &gw1);
                step(&mut v.1, &mut net.b1, &gb1);
                step(&mut v.2, &mut net.w2, &gw2);
                step(&mut v.3, &mut net.b2, &gb2);
            }
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !(finite(&net.w1) && finite(&net.w2) && finite(&net.b1) && finite(&net.b2)) {
            return Err(invalid("mlp training diverged; lower the learning rate"));
        }
        Ok(net)
    }

    pub fn scores(&self, x: &Matrix) -> Matrix {
        let xb = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
        let (_, prob) = self.forward(&xb);
        let k = prob.ncols();
        Matrix::from_vec(
            x.rows(),
            k,
            (0..x.rows())
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .map(|(i, j)| prob[(i, j)])
                .collect(),
        )
        .expect("shape")
    }
}
