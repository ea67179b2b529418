//! Three-layer perceptron scoring function with hand-written reverse mode.
//!
//! Topology is fixed: `d -> h1 -> h2 -> 1`, tanh on both hidden layers and a
//! linear output, so scores are raw ranking values.
//!
//! Checkpoint byte layout (all integers and floats little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `FAUCMLP1`                          |
//! | 8      | 32   | `u64` dims: input, hidden1, hidden2, 1    |
//! | 40     | 8    | `u64` parameter count `k`                 |
//! | 48     | 8k   | `f64` parameters in flat order            |
//!
//! Flat order is `w1` (row-major, `h1 x d`), `b1`, `w2` (`h2 x h1`), `b2`,
//! `w3` (`h2`), `b3`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FAUCMLP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpDims {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl MlpDims {
    pub fn num_params(&self) -> usize {
        self.hidden1 * self.input + self.hidden1 + self.hidden2 * self.hidden1 + self.hidden2 * 2 + 1
    }
}

/// Weights and biases. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

/// Activations kept from the forward pass for backpropagation.
struct Tape {
    a1: Array2<f64>,
    a2: Array2<f64>,
    scores: Array1<f64>,
}

impl MlpParams {
    pub fn zeros(dims: MlpDims) -> Self {
        MlpParams {
            w1: Array2::zeros((dims.hidden1, dims.input)),
            b1: Array1::zeros(dims.hidden1),
            w2: Array2::zeros((dims.hidden2, dims.hidden1)),
            b2: Array1::zeros(dims.hidden2),
            w3: Array1::zeros(dims.hidden2),
            b3: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: MlpDims, rng: &mut R) -> Self {
        let mut p = MlpParams::zeros(dims);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w {
                *v = rng.random_range(-limit..limit);
            }
        };
        fill(p.w1.as_slice_mut().unwrap(), dims.input, dims.hidden1);
        fill(p.w2.as_slice_mut().unwrap(), dims.hidden1, dims.hidden2);
        fill(p.w3.as_slice_mut().unwrap(), dims.hidden2, 1);
        p
    }

    pub fn dims(&self) -> MlpDims {
        MlpDims {
            input: self.w1.ncols(),
            hidden1: self.w1.nrows(),
            hidden2: self.w2.nrows(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims().num_params());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.push(self.b3);
        out
    }

    pub fn from_flat(dims: MlpDims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.num_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, dims need {}",
                flat.len(),
                dims.num_params()
            )));
        }
        let mut rest = flat;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        let w1 = Array2::from_shape_vec((dims.hidden1, dims.input), take(dims.hidden1 * dims.input)).unwrap();
        let b1 = Array1::from(take(dims.hidden1));
        let w2 = Array2::from_shape_vec((dims.hidden2, dims.hidden1), take(dims.hidden2 * dims.hidden1)).unwrap();
        let b2 = Array1::from(take(dims.hidden2));
        let w3 = Array1::from(take(dims.hidden2));
        let b3 = take(1)[0];
        Ok(MlpParams { w1, b1, w2, b2, w3, b3 })
    }

    fn check_shape(&self, other: &MlpParams) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "parameter dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn scaled_add(&mut self, alpha: f64, other: &MlpParams) -> Result<()> {
        self.check_shape(other)?;
        self.w1.scaled_add(alpha, &other.w1);
        self.b1.scaled_add(alpha, &other.b1);
        self.w2.scaled_add(alpha, &other.w2);
        self.b2.scaled_add(alpha, &other.b2);
        self.w3.scaled_add(alpha, &other.w3);
        self.b3 += alpha * other.b3;
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        let sq = |a: f64, x: &f64| a + x * x;
        let total = self.w1.iter().fold(0.0, sq)
            + self.b1.iter().fold(0.0, sq)
            + self.w2.iter().fold(0.0, sq)
            + self.b2.iter().fold(0.0, sq)
            + self.w3.iter().fold(0.0, sq)
            + self.b3 * self.b3;
        total.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.w1.ncols() {
            return Err(Error::Shape(format!(
                "features have {} columns, network expects {}",
                x.ncols(),
                self.w1.ncols()
            )));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(&x)?;
        let mut a1 = x.dot(&self.w1.t()) + &self.b1;
        a1.mapv_inplace(f64::tanh);
        finite_or(&a1, "hidden layer 1")?;
        let mut a2 = a1.dot(&self.w2.t()) + &self.b2;
        a2.mapv_inplace(f64::tanh);
        finite_or(&a2, "hidden layer 2")?;
        let scores = a2.dot(&self.w3) + self.b3;
        finite_or(&scores, "output layer")?;
        Ok(Tape { a1, a2, scores })
    }

    /// One score per row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.run(x)?.scores)
    }

    /// Gradient of a scalar loss of the scores.
    ///
    /// `assemble` receives the scores and returns the loss together with
    /// its derivative with respect to each score.
    pub fn grad<F>(&self, x: ArrayView2<f64>, assemble: F) -> Result<(f64, MlpParams)>
    where
        F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let tape = self.run(x)?;
        let (loss, dscores) = assemble(tape.scores.as_slice().unwrap())?;
        if dscores.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "loss returned {} score derivatives for {} rows",
                dscores.len(),
                x.nrows()
            )));
        }
        if !loss.is_finite() {
            return Err(Error::Numeric {
                layer: "loss".into(),
                msg: format!("loss evaluated to {loss}"),
            });
        }
        let grad = self.backward(x, &tape, &Array1::from(dscores))?;
        Ok((loss, grad))
    }

    fn backward(&self, x: ArrayView2<f64>, tape: &Tape, ds: &Array1<f64>) -> Result<MlpParams> {
        finite_or(ds, "score derivatives")?;
        let w3 = tape.a2.t().dot(ds);
        let b3 = ds.sum();

        let mut dz2 = ds
            .view()
            .insert_axis(Axis(1))
            .dot(&self.w3.view().insert_axis(Axis(0)));
        Zip::from(&mut dz2).and(&tape.a2).for_each(|d, &a| *d *= 1.0 - a * a);
        let w2 = dz2.t().dot(&tape.a1);
        let b2 = dz2.sum_axis(Axis(0));

        let mut dz1 = dz2.dot(&self.w2);
        Zip::from(&mut dz1).and(&tape.a1).for_each(|d, &a| *d *= 1.0 - a * a);
        let w1 = dz1.t().dot(&x);
        let b1 = dz1.sum_axis(Axis(0));

        finite_or(&w1, "gradient of layer 1")?;
        finite_or(&w2, "gradient of layer 2")?;
        finite_or(&w3, "gradient of layer 3")?;
        Ok(MlpParams { w1, b1, w2, b2, w3, b3 })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.dims();
        let flat = self.to_flat();
        let mut out = Vec::with_capacity(48 + 8 * flat.len());
        out.extend_from_slice(MAGIC);
        for d in [dims.input, dims.hidden1, dims.hidden2, 1, flat.len()] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 48 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing checkpoint header".into()));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
        let dims = MlpDims {
            input: word(0),
            hidden1: word(1),
            hidden2: word(2),
        };
        if word(3) != 1 {
            return Err(Error::Checkpoint(format!("output width {} != 1", word(3))));
        }
        let count = word(4);
        if count != dims.num_params() || bytes.len() != 48 + 8 * count {
            return Err(Error::Checkpoint(format!(
                "header says {count} parameters, dims need {}, payload has {} bytes",
                dims.num_params(),
                bytes.len() - 48
            )));
        }
        let flat: Vec<f64> = bytes[48..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        MlpParams::from_flat(dims, &flat)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MlpParams::from_bytes(&std::fs::read(path)?)
    }
}

fn finite_or<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer: layer.to_string(),
            msg: "non-finite activation or gradient".into(),
        })
    }
}

/// Sharpness-aware perturbation `theta + nu * g / ||g||_2`.
///
/// Returns the parameters unchanged when the gradient is zero.
pub fn sam_perturb(params: &MlpParams, grad: &MlpParams, nu: f64) -> Result<MlpParams> {
    params.check_shape(grad)?;
    let norm = grad.l2_norm();
    let mut out = params.clone();
    if nu == 0.0 || norm == 0.0 {
        return Ok(out);
    }
    out.scaled_add(nu / norm, grad)?;
    Ok(out)
}

pub fn sgd_step(params: &MlpParams, grad: &MlpParams, eta: f64) -> Result<MlpParams> {
    if eta <= 0.0 {
        return Err(Error::Parameter(format!("learning rate must be positive, got {eta}")));
    }
    let mut out = params.clone();
    out.scaled_add(-eta, grad)?;
    Ok(out)
}
