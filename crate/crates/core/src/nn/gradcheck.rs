use super::{bce, bce_grad, mse, mse_grad, rmse, rmse_grad, Network, NnError, OutputGrad, Tensor};

/// Loss attached to the network output for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub enum CheckLoss<'a> {
    Mse(&'a Tensor),
    Rmse(&'a Tensor),
    /// Binary cross-entropy against labels; the output must be a probability.
    Bce(&'a Tensor),
}

impl CheckLoss<'_> {
    fn value(&self, out: &Tensor) -> Result<f64, NnError> {
        match *self {
            CheckLoss::Mse(t) => mse(out, t),
            CheckLoss::Rmse(t) => rmse(out, t),
            CheckLoss::Bce(t) => bce(out, t),
        }
    }

    fn grad(&self, out: &Tensor) -> Result<Tensor, NnError> {
        match *self {
            CheckLoss::Mse(t) => mse_grad(out, t),
            CheckLoss::Rmse(t) => rmse_grad(out, t),
            CheckLoss::Bce(t) => bce_grad(out, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: String,
    pub index: usize,
    pub checked: usize,
}

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
// Below this magnitude errors are measured absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Compares backprop gradients of `loss(net(input))` against central finite
/// differences for every parameter. Batch norm runs in training mode.
pub fn grad_check(net: &Network, input: &Tensor, loss: CheckLoss<'_>) -> Result<GradCheckReport, NnError> {
    let (out, tape) = net.forward_frozen(input)?;
    let upstream = loss.grad(&out)?;
    let (_, grads) = net.backward(&tape, &upstream, OutputGrad::Output)?;
    let mut probe = net.clone();
    check_gradients(&grads.0, &mut probe, |n| {
        let (out, _) = n.forward_frozen(input)?;
        loss.value(&out)
    })
}

/// Finite-difference check of `analytic` (ordered like `net.params()`)
/// against the scalar objective `f`.
pub fn check_gradients(
    analytic: &[Vec<f64>],
    net: &mut Network,
    mut f: impl FnMut(&Network) -> Result<f64, NnError>,
) -> Result<GradCheckReport, NnError> {
    let names = net.param_names();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: String::new(),
        index: 0,
        checked: 0,
    };
    for (p, name) in names.iter().enumerate() {
        let len = net.params()[p].len();
        if analytic.get(p).map(Vec::len) != Some(len) {
            return Err(NnError::Shape(format!("no analytic gradient for {name}")));
        }
        for i in 0..len {
            let original = net.params()[p][i];
            net.params_mut()[p][i] = original + FD_STEP;
            let plus = f(net)?;
            net.params_mut()[p][i] = original - FD_STEP;
            let minus = f(net)?;
            net.params_mut()[p][i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[p][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if report.checked == 1 || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.param = name.clone();
                report.index = i;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::{derive, Domain};
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u32) -> Tensor {
        let mut rng = derive(100, Domain::Init, seed, 1);
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn linear_mse_is_essentially_exact() {
        let mut rng = derive(10, Domain::Init, 0, 0);
        let net = Network::mlp(3, 0, 1, false, 2, Activation::Identity, &mut rng).unwrap();
        let (x, y) = (random(5, 3, 0), random(5, 2, 1));
        let report = grad_check(&net, &x, CheckLoss::Mse(&y)).unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, net.param_count());
    }

    #[test]
    fn gelu_batchnorm_mse() {
        let mut rng = derive(11, Domain::Init, 0, 0);
        let net = Network::mlp(4, 2, 12, true, 1, Activation::Identity, &mut rng).unwrap();
        let (x, y) = (random(8, 4, 2), random(8, 1, 3));
        let report = grad_check(&net, &x, CheckLoss::Mse(&y)).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn sigmoid_head_bce() {
        let mut rng = derive(12, Domain::Init, 0, 0);
        let net = Network::mlp(5, 2, 10, false, 1, Activation::Sigmoid, &mut rng).unwrap();
        let x = random(8, 5, 4);
        let labels = Tensor::from_vec(8, 1, (0..8).map(|i| (i % 2) as f64).collect()).unwrap();
        let report = grad_check(&net, &x, CheckLoss::Bce(&labels)).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
