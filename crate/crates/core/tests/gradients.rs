mod common;

use common::gradcheck;

#[test]
fn inverse_dynamics_gradients() {
    for seed in 0..25 {
        let e = gradcheck::idm(seed);
        assert!(e <= 1e-4, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn forward_model_gradients() {
    for seed in 100..125 {
        let e = gradcheck::forward_model(seed);
        assert!(e <= 1e-4, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn actor_critic_gradients() {
    for seed in 200..225 {
        let e = gradcheck::a2c(seed);
        assert!(e <= 1e-4, "seed {seed}: relative error {e:e}");
    }
}
