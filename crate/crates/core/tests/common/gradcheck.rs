//! Central-difference checks of the analytic gradients on small random nets.

use e3b_core::nn::{forward_model_loss_and_grad, idm_loss_and_grad, Activation, GradBuffer, Mlp};
use e3b_core::rng::SplitMix64;
use e3b_core::trainer::{a2c_loss_and_grad, A2cCosts, A2cSample, PolicyParams};

use super::{central_difference, gaussian_vec, rel_err};

const H: f64 = 1e-5;

fn sizes(rng: &mut SplitMix64) -> (usize, usize, usize) {
    (3 + rng.below(4), 3 + rng.below(4), 2 + rng.below(3))
}

/// Largest relative error over every parameter of `phi` and `g`.
pub fn idm(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (inp, hid, feat) = sizes(&mut rng);
    let actions = 2 + rng.below(4);
    let phi = Mlp::new(&[inp, hid, feat], Activation::Identity, &mut rng).unwrap();
    let g = Mlp::new(&[2 * feat, hid, actions], Activation::Identity, &mut rng).unwrap();
    let s0 = gaussian_vec(&mut rng, inp, 1.0);
    let s1 = gaussian_vec(&mut rng, inp, 1.0);
    let a = rng.below(actions);

    let mut gp = GradBuffer::zeros_like(&phi);
    let mut gg = GradBuffer::zeros_like(&g);
    idm_loss_and_grad(&phi, &g, &s0, a, &s1, &mut gp, &mut gg).unwrap();

    let mut nets = (phi, g);
    let loss = |n: &(Mlp, Mlp)| {
        let mut a1 = GradBuffer::zeros_like(&n.0);
        let mut a2 = GradBuffer::zeros_like(&n.1);
        idm_loss_and_grad(&n.0, &n.1, &s0, a, &s1, &mut a1, &mut a2).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for k in 0..nets.0.num_params() {
        let fd = central_difference(&mut nets, k, H, |n, k| n.0.param_mut(k), loss);
        worst = worst.max(rel_err(fd, gp.get(k)));
        mag = mag.max(gp.get(k).abs());
    }
    for k in 0..nets.1.num_params() {
        let fd = central_difference(&mut nets, k, H, |n, k| n.1.param_mut(k), loss);
        worst = worst.max(rel_err(fd, gg.get(k)));
        mag = mag.max(gg.get(k).abs());
    }
    assert!(mag > 1e-3, "gradient is vanishingly small");
    worst
}

/// Largest relative error over the forward model's parameters.
pub fn forward_model(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (inp, hid, feat) = sizes(&mut rng);
    let actions = 2 + rng.below(4);
    let phi = Mlp::new(&[inp, hid, feat], Activation::Identity, &mut rng).unwrap();
    let mut f = Mlp::new(&[feat + actions, hid, feat], Activation::Identity, &mut rng).unwrap();
    let s0 = gaussian_vec(&mut rng, inp, 1.0);
    let s1 = gaussian_vec(&mut rng, inp, 1.0);
    let a = rng.below(actions);

    let mut gf = GradBuffer::zeros_like(&f);
    forward_model_loss_and_grad(&phi, &f, &s0, a, &s1, &mut gf).unwrap();
    let loss = |f: &Mlp| {
        let mut tmp = GradBuffer::zeros_like(f);
        forward_model_loss_and_grad(&phi, f, &s0, a, &s1, &mut tmp).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for k in 0..f.num_params() {
        let fd = central_difference(&mut f, k, H, |n, k| n.param_mut(k), loss);
        worst = worst.max(rel_err(fd, gf.get(k)));
        mag = mag.max(gf.get(k).abs());
    }
    assert!(mag > 1e-3, "gradient is vanishingly small");
    worst
}

/// Largest relative error of the full actor-critic loss over trunk, actor
/// and critic parameters, on a small batch.
pub fn a2c(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (inp, hid, actions) = sizes(&mut rng);
    let mut policy = PolicyParams::new(inp, &[hid, hid], actions, &mut rng).unwrap();
    let batch = 2 + rng.below(4);
    let xs: Vec<Vec<f64>> = (0..batch).map(|_| gaussian_vec(&mut rng, inp, 1.0)).collect();
    let meta: Vec<(usize, f64, f64)> = (0..batch)
        .map(|_| (rng.below(actions), rng.normal(), rng.normal()))
        .collect();
    let costs = A2cCosts {
        entropy_cost: rng.uniform(0.0, 0.1),
        baseline_cost: 0.5,
    };
    let samples = || -> Vec<A2cSample> {
        xs.iter()
            .zip(&meta)
            .map(|(x, &(action, advantage, ret))| A2cSample {
                x,
                action,
                advantage,
                ret,
            })
            .collect()
    };
    let (_, grads) = a2c_loss_and_grad(&policy, &samples(), costs).unwrap();
    let loss = |p: &PolicyParams| a2c_loss_and_grad(p, &samples(), costs).unwrap().0.total_loss;
    let mut worst: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for k in 0..policy.num_params() {
        let fd = central_difference(&mut policy, k, H, |p, k| p.param_mut(k), loss);
        worst = worst.max(rel_err(fd, grads.get(k)));
        mag = mag.max(grads.get(k).abs());
    }
    assert!(mag > 1e-3, "gradient is vanishingly small");
    worst
}
