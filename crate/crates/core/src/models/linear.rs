use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::boosting::softmax;
use super::registry::{decode_state, Estimator, FittedModel, TrainingSet};
use super::Hyperparameters;
use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 300;
pub const DEFAULT_REGULARIZATION: f64 = 1.0;

/// Multinomial logistic regression on standardized features, L2 penalty,
/// full-batch gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct LogisticRegression;

/// One-vs-rest ridge regression on ±1 targets; class probabilities are the
/// softmax of the decision values.
#[derive(Debug, Clone, Copy)]
pub struct RidgeClassifier;

/// Column centring and scaling learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(data: &TrainingSet) -> Self {
        let n = data.n_rows as f64;
        let d = data.n_cols;
        let mut mean = vec![0.0; d];
        for i in 0..data.n_rows {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.n_rows {
            for (j, v) in data.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn matrix(&self, data: &TrainingSet) -> DMatrix<f64> {
        DMatrix::from_fn(data.n_rows, data.n_cols, |i, j| {
            (data.get(i, j) - self.mean[j]) / self.scale[j]
        })
    }
}

/// Decision values `x·W + b` for `k` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    n_classes: usize,
    standardizer: Standardizer,
    /// Row-major `n_features × n_classes`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    fn decision(&self, row: &[f64]) -> Vec<f64> {
        let z = self.standardizer.apply(row);
        let k = self.n_classes;
        let mut out = self.bias.clone();
        for (j, zj) in z.iter().enumerate() {
            if *zj != 0.0 {
                for c in 0..k {
                    out[c] += zj * self.weights[j * k + c];
                }
            }
        }
        out
    }

    fn check(self, kind: &str) -> Result<Self> {
        let d = self.standardizer.mean.len();
        if self.standardizer.scale.len() != d
            || self.weights.len() != d * self.n_classes
            || self.bias.len() != self.n_classes
        {
            return Err(Error::ModelFormat(format!("{kind} state has inconsistent shapes")));
        }
        Ok(self)
    }
}

impl FittedModel for LinearModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut p = self.decision(row);
        softmax(&mut p);
        p
    }

    fn state(&self) -> Value {
        serde_json::to_value(self).expect("linear model serializes")
    }
}

impl Estimator for LogisticRegression {
    fn name(&self) -> &'static str {
        "log"
    }

    fn description(&self) -> &'static str {
        "logistic regression"
    }

    fn fit(&self, data: &TrainingSet, params: &Hyperparameters, _seed: u64) -> Result<Box<dyn FittedModel>> {
        let st = Standardizer::fit(data);
        let x = st.matrix(data);
        let (n, d, k) = (data.n_rows, data.n_cols, data.n_classes);
        let lambda = params.regularization.unwrap_or(DEFAULT_REGULARIZATION);
        let iterations = params.iterations.unwrap_or(DEFAULT_ITERATIONS);
        // Step 1/L with L bounding the curvature of the mean loss.
        let curvature = 0.5 * (1.0 + x.norm_squared() / n as f64) + lambda / n as f64;
        let step = params.learning_rate.unwrap_or(1.0 / curvature);

        let mut y = DMatrix::<f64>::zeros(n, k);
        for (i, &c) in data.labels.iter().enumerate() {
            y[(i, c)] = 1.0;
        }
        let mut w = DMatrix::<f64>::zeros(d, k);
        let mut b = DMatrix::<f64>::zeros(1, k);
        let ones = DMatrix::<f64>::from_element(n, 1, 1.0);
        for _ in 0..iterations {
            let mut p = &x * &w + &ones * &b;
            for mut row in p.row_iter_mut() {
                let mut v: Vec<f64> = row.iter().copied().collect();
                softmax(&mut v);
                row.iter_mut().zip(v).for_each(|(r, v)| *r = v);
            }
            let resid = p - &y;
            let gw = (x.transpose() * &resid) / n as f64 + &w * (lambda / n as f64);
            let gb = (ones.transpose() * &resid) / n as f64;
            w -= gw * step;
            b -= gb * step;
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Training("logistic regression diverged".into()));
        }
        Ok(Box::new(LinearModel {
            n_classes: k,
            standardizer: st,
            weights: (0..d).flat_map(|j| (0..k).map(move |c| (j, c))).map(|(j, c)| w[(j, c)]).collect(),
            bias: b.iter().copied().collect(),
        }))
    }

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(decode_state::<LinearModel>("log", state)?.check("log")?))
    }
}

impl Estimator for RidgeClassifier {
    fn name(&self) -> &'static str {
        "rid"
    }

    fn description(&self) -> &'static str {
        "ridge classifier"
    }

    fn fit(&self, data: &TrainingSet, params: &Hyperparameters, _seed: u64) -> Result<Box<dyn FittedModel>> {
        let st = Standardizer::fit(data);
        let x = st.matrix(data);
        let (n, d, k) = (data.n_rows, data.n_cols, data.n_classes);
        let alpha = params.regularization.unwrap_or(DEFAULT_REGULARIZATION);

        let mut t = DMatrix::<f64>::from_element(n, k, -1.0);
        for (i, &c) in data.labels.iter().enumerate() {
            t[(i, c)] = 1.0;
        }
        let bias: Vec<f64> = (0..k).map(|c| t.column(c).mean()).collect();
        for c in 0..k {
            let m = bias[c];
            t.column_mut(c).add_scalar_mut(-m);
        }
        let solve = |a: DMatrix<f64>, rhs: DMatrix<f64>| -> Result<DMatrix<f64>> {
            match a.clone().cholesky() {
                Some(ch) => Ok(ch.solve(&rhs)),
                None => a
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::Training("ridge system is singular".into())),
            }
        };
        let w = if d <= n {
            let a = x.transpose() * &x + DMatrix::<f64>::identity(d, d) * alpha;
            solve(a, x.transpose() * &t)?
        } else {
            let a = &x * x.transpose() + DMatrix::<f64>::identity(n, n) * alpha;
            x.transpose() * solve(a, t)?
        };
        Ok(Box::new(LinearModel {
            n_classes: k,
            standardizer: st,
            weights: (0..d).flat_map(|j| (0..k).map(move |c| (j, c))).map(|(j, c)| w[(j, c)]).collect(),
            bias,
        }))
    }

    fn restore(&self, state: &Value) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(decode_state::<LinearModel>("rid", state)?.check("rid")?))
    }
}
