use crate::error::{shape_err, Result};
use crate::net::{Network, ParamGrads};

/// Momentum SGD with L2 weight decay on every parameter:
/// `v ← μ·v − lr·(g + λ·w)`, then `w ← w + v`.
pub fn sgd_step(
    net: &mut Network,
    grads: &ParamGrads,
    velocity: &mut ParamGrads,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let groups = net.params().len();
    if grads.layers.len() != groups || velocity.layers.len() != groups {
        return shape_err("gradient or velocity layout does not match the network");
    }
    for ((params, gs), vs) in net.params_mut().iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        if params.len() != gs.len() || params.len() != vs.len() {
            return shape_err("gradient or velocity layout does not match the network");
        }
        for ((w, g), v) in params.iter_mut().zip(gs).zip(vs) {
            w.expect_same_shape(g, "gradient")?;
            w.expect_same_shape(v, "velocity")?;
            for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = momentum * *vi - learning_rate * (gi + weight_decay * *wi);
                *wi += *vi;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LayerSpec, NetworkSpec};
    use crate::Tensor;

    /// A 1→1 dense network: exactly one weight and one bias.
    fn scalar_net(w: f64) -> Network {
        let spec = NetworkSpec {
            name: "scalar".into(),
            input_shape: [1, 1, 1],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 1 }, LayerSpec::SoftmaxOutput],
            num_classes: 1,
        };
        let mut net = Network::init(&spec, 0).unwrap();
        net.params_mut()[1][0] = Tensor::filled(&[1, 1], w);
        net
    }

    fn grads(net: &Network, g: f64) -> ParamGrads {
        let mut out = net.zero_grads();
        out.layers[1][0] = Tensor::filled(&[1, 1], g);
        out
    }

    #[test]
    fn vanilla_step() {
        let mut net = scalar_net(0.7);
        let mut v = net.zero_grads();
        let g = grads(&net, 0.3);
        sgd_step(&mut net, &g, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(net.params()[1][0].data()[0], 0.7 - 0.1 * 0.3);
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let mut v = net.zero_grads();
        let g = net.zero_grads();
        sgd_step(&mut net, &g, &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn two_momentum_steps_follow_recurrence() {
        let (lr, mu, wd) = (0.1, 0.9, 0.01);
        let mut net = scalar_net(1.0);
        let mut v = net.zero_grads();
        // step 1: g = 0.5 at w = 1
        let g = grads(&net, 0.5);
        sgd_step(&mut net, &g, &mut v, lr, mu, wd).unwrap();
        let v1 = -lr * (0.5 + wd * 1.0);
        let w1 = 1.0 + v1;
        assert_eq!(net.params()[1][0].data()[0], w1);
        // step 2: g = -0.2
        let g = grads(&net, -0.2);
        sgd_step(&mut net, &g, &mut v, lr, mu, wd).unwrap();
        let v2 = mu * v1 - lr * (-0.2 + wd * w1);
        assert_eq!(net.params()[1][0].data()[0], w1 + v2);
        // hand-evaluated: v1 = −0.051, w1 = 0.949, v2 = −0.026849
        assert!((w1 + v2 - 0.922151).abs() < 1e-12);
    }
}
