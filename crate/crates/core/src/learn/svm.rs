//! Soft-margin SVM trained on the dual by sequential minimal optimization.
//!
//! Working pairs are chosen by maximal KKT violation for the first index and
//! second-order gain for the second. Optimization stops once the violation gap
//! `max_{I_up} -y_t G_t - min_{I_low} -y_t G_t` is at most `tolerance`. The bias
//! is placed inside that gap, so every sample then satisfies the KKT
//! conditions on `y_i f(x_i)` within `tolerance`.

use serde::{Deserialize, Serialize};

use super::{both_classes, check_training_input, DesignMatrix, LearnError, Result};
use crate::labeling::Class;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    pub tolerance: f64,
    /// Iteration cap, in multiples of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: Kernel::Rbf { gamma: 1.0 / 20.0 },
            tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(LearnError::InvalidParam(format!("C = {} must be > 0", self.c)));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(LearnError::InvalidParam(format!("gamma = {gamma} must be > 0")));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(LearnError::InvalidParam("tolerance must be > 0".into()));
        }
        if self.max_passes == 0 {
            return Err(LearnError::InvalidParam("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coefficients: Vec<f64>,
    /// Training-set index of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    /// `Σ alpha_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (sv, coef) in self.support_vectors.iter().zip(&self.coefficients) {
            sum += coef * self.params.kernel.eval(sv, x);
        }
        sum + self.bias
    }

    /// Dual coefficient of training sample `i` (zero if not a support vector).
    pub fn alpha_of(&self, i: usize) -> f64 {
        self.support_indices
            .iter()
            .position(|&s| s == i)
            .map_or(0.0, |p| self.coefficients[p].abs())
    }
}

struct Solver<'a> {
    x: &'a DesignMatrix,
    y: Vec<f64>,
    kernel: Kernel,
    c: f64,
    alpha: Vec<f64>,
    /// Gradient of the dual objective: `(Qα)_t - 1`.
    grad: Vec<f64>,
    diag: Vec<f64>,
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(self.x.row(i), self.x.row(j))
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.c)
    }

    /// `(m, M)`: max of `-y G` over I_up, min over I_low.
    fn gap_bounds(&self) -> (f64, f64) {
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..self.y.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) {
                m = m.max(v);
            }
            if self.in_low(t) {
                big_m = big_m.min(v);
            }
        }
        (m, big_m)
    }

    /// Returns the working pair, or `None` once the gap is within `eps`.
    #[allow(clippy::needless_range_loop)]
    fn select(&self, eps: f64) -> Option<(usize, usize, Vec<f64>)> {
        let n = self.y.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = Some(t);
                }
            }
        }
        let i = i?;
        let k_i: Vec<f64> = (0..n).map(|t| self.k(i, t)).collect();
        let mut gmin = f64::INFINITY;
        let mut j = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.y[t] * self.grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut quad = self.diag[i] + self.diag[t] - 2.0 * k_i[t];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj < best_obj {
                    best_obj = obj;
                    j = Some(t);
                }
            }
        }
        if gmax - gmin <= eps {
            return None;
        }
        j.map(|j| (i, j, k_i))
    }

    fn update(&mut self, i: usize, j: usize, k_i: &[f64]) {
        let n = self.y.len();
        let c = self.c;
        let k_j: Vec<f64> = (0..n).map(|t| self.k(j, t)).collect();
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let mut quad = self.diag[i] + self.diag[j] - 2.0 * k_i[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            self.grad[t] += self.y[t] * (self.y[i] * k_i[t] * di + self.y[j] * k_j[t] * dj);
        }
    }

    /// Recomputes the gradient from α, in the same summation order the model
    /// uses for decision values.
    fn rebuild_gradient(&mut self) {
        let n = self.y.len();
        let support: Vec<usize> = (0..n).filter(|&j| self.alpha[j] > 0.0).collect();
        for t in 0..n {
            let mut u = 0.0;
            for &j in &support {
                u += (self.alpha[j] * self.y[j]) * self.k(j, t);
            }
            self.grad[t] = self.y[t] * u - 1.0;
        }
    }

    fn bias(&self) -> f64 {
        let (m, big_m) = self.gap_bounds();
        let free: Vec<f64> = (0..self.y.len())
            .filter(|&t| self.alpha[t] > 0.0 && self.alpha[t] < self.c)
            .map(|t| -self.y[t] * self.grad[t])
            .collect();
        let b = if free.is_empty() {
            (m + big_m) / 2.0
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };
        if m.is_finite() && big_m.is_finite() && big_m <= m {
            b.clamp(big_m, m)
        } else {
            b
        }
    }
}

/// Trains a binary SVM; hemolytic samples are the +1 class.
pub fn train_svm(x: &DesignMatrix, y: &[Class], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    check_training_input(x, y)?;
    if !both_classes(y) {
        return Err(LearnError::SingleClass);
    }
    let n = y.len();
    let mut solver = Solver {
        x,
        y: y.iter().map(|c| if c.is_positive() { 1.0 } else { -1.0 }).collect(),
        kernel: params.kernel,
        c: params.c,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
        diag: (0..n).map(|i| params.kernel.eval(x.row(i), x.row(i))).collect(),
    };
    let max_iter = params.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;
    // a few refinement rounds against accumulated gradient drift
    for _ in 0..5 {
        while iterations < max_iter {
            match solver.select(params.tolerance) {
                Some((i, j, k_i)) => {
                    solver.update(i, j, &k_i);
                    iterations += 1;
                }
                None => break,
            }
        }
        solver.rebuild_gradient();
        if solver.select(params.tolerance).is_none() {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance");
    }
    let bias = solver.bias();
    let support_indices: Vec<usize> = (0..n).filter(|&j| solver.alpha[j] > 0.0).collect();
    Ok(SvmModel {
        params: params.clone(),
        support_vectors: support_indices.iter().map(|&j| x.row(j).to_vec()).collect(),
        coefficients: support_indices
            .iter()
            .map(|&j| solver.alpha[j] * solver.y[j])
            .collect(),
        support_indices,
        bias,
        iterations,
        converged,
    })
}
