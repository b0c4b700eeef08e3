use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnError;

/// Probability clamp used by binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    Mse,
    Rmse,
}

impl RegressionLoss {
    pub fn value(self, pred: &Tensor, real: &Tensor) -> Result<f64, NnError> {
        match self {
            Self::Mse => mse(pred, real),
            Self::Rmse => rmse(pred, real),
        }
    }

    pub fn grad(self, pred: &Tensor, real: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Self::Mse => mse_grad(pred, real),
            Self::Rmse => rmse_grad(pred, real),
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), NnError> {
    if a.shape() != b.shape() || a.data().is_empty() {
        return Err(NnError::Shape(format!(
            "loss operands {:?} and {:?} differ or are empty",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean of squared differences over all entries.
pub fn mse(pred: &Tensor, real: &Tensor) -> Result<f64, NnError> {
    same_shape(pred, real)?;
    let n = pred.data().len() as f64;
    Ok(pred.data().iter().zip(real.data()).map(|(p, r)| (r - p) * (r - p)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &Tensor, real: &Tensor) -> Result<Tensor, NnError> {
    same_shape(pred, real)?;
    let n = pred.data().len() as f64;
    let data = pred.data().iter().zip(real.data()).map(|(p, r)| 2.0 * (p - r) / n).collect();
    Tensor::from_vec(pred.rows(), pred.cols(), data)
}

pub fn rmse(pred: &Tensor, real: &Tensor) -> Result<f64, NnError> {
    mse(pred, real).map(f64::sqrt)
}

/// Gradient of RMSE; zero at zero loss (subgradient choice).
pub fn rmse_grad(pred: &Tensor, real: &Tensor) -> Result<Tensor, NnError> {
    let loss = rmse(pred, real)?;
    let mut grad = mse_grad(pred, real)?;
    if loss == 0.0 {
        grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    } else {
        grad.data_mut().iter_mut().for_each(|g| *g /= 2.0 * loss);
    }
    Ok(grad)
}

/// Mean binary cross-entropy on clamped probabilities.
pub fn bce(prob: &Tensor, labels: &Tensor) -> Result<f64, NnError> {
    same_shape(prob, labels)?;
    let n = prob.data().len() as f64;
    Ok(-prob
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / n)
}

/// Gradient of [`bce`] with respect to the probabilities; zero where the
/// clamp is active.
pub fn bce_grad(prob: &Tensor, labels: &Tensor) -> Result<Tensor, NnError> {
    same_shape(prob, labels)?;
    let n = prob.data().len() as f64;
    let data = prob
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| {
            if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                0.0
            } else {
                (p - y) / (p * (1.0 - p)) / n
            }
        })
        .collect();
    Tensor::from_vec(prob.rows(), prob.cols(), data)
}

/// Gradient of BCE with respect to the logit feeding a sigmoid output,
/// `(p − y)/n`. Unlike [`bce_grad`] this does not vanish when the sigmoid
/// saturates.
pub fn bce_logit_grad(prob: &Tensor, labels: &Tensor) -> Result<Tensor, NnError> {
    same_shape(prob, labels)?;
    let n = prob.data().len() as f64;
    let data = prob.data().iter().zip(labels.data()).map(|(p, y)| (p - y) / n).collect();
    Tensor::from_vec(prob.rows(), prob.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn regression_examples() {
        let a = t(&[1.0, -2.0, 3.5]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert!(rmse_grad(&a, &a).unwrap().data().iter().all(|g| *g == 0.0));

        let shifted = a.map(|x| x + 0.75);
        assert!((mse(&shifted, &a).unwrap() - 0.5625).abs() < 1e-15);
        assert!((rmse(&shifted, &a).unwrap() - 0.75).abs() < 1e-15);

        let p = t(&[1.0, 2.0]);
        let r = t(&[0.0, 0.0]);
        assert_eq!(mse(&p, &r).unwrap(), 2.5);
        assert!((rmse(&p, &r).unwrap() - 1.581_138_830_084_19).abs() < 1e-12);
        assert!(mse(&p, &t(&[0.0])).is_err());
    }

    #[test]
    fn rmse_squared_is_mse() {
        let p = t(&[0.3, -1.7, 2.2, 9.0]);
        let r = t(&[0.1, 0.0, 2.0, -1.0]);
        let rm = rmse(&p, &r).unwrap();
        assert!((rm * rm - mse(&p, &r).unwrap()).abs() <= 1e-12 * mse(&p, &r).unwrap());
    }

    #[test]
    fn bce_examples() {
        let half = t(&[0.5, 0.5, 0.5]);
        assert!((bce(&half, &t(&[1.0, 0.0, 1.0])).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((bce(&half, &t(&[0.0, 0.0, 0.0])).unwrap() - 2f64.ln()).abs() < 1e-15);
        let exact = t(&[1.0, 0.0]);
        assert!(bce(&exact, &exact).unwrap() < 2e-7);
        assert!((bce(&t(&[0.9]), &t(&[1.0])).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
    }

    #[test]
    fn bce_gradients_agree_through_sigmoid() {
        let p = t(&[0.2, 0.7, 0.95]);
        let y = t(&[1.0, 0.0, 1.0]);
        let g = bce_grad(&p, &y).unwrap();
        let gl = bce_logit_grad(&p, &y).unwrap();
        for i in 0..3 {
            let pi = p.data()[i];
            assert!((g.data()[i] * pi * (1.0 - pi) - gl.data()[i]).abs() < 1e-14);
        }
    }
}
