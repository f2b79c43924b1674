#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use selftomo::joint::JointPovm;
use selftomo::quantum::{BlochVector, MeasurementBasis, Rotation3};

pub fn unit(rng: &mut ChaCha8Rng) -> BlochVector {
    loop {
        let v = BlochVector::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v.scale(1.0 / n);
        }
    }
}

/// Uniform in the ball of radius `r`.
pub fn in_ball(rng: &mut ChaCha8Rng, r: f64) -> BlochVector {
    unit(rng).scale(r * rng.random::<f64>().cbrt())
}

pub fn rotation(rng: &mut ChaCha8Rng) -> Rotation3 {
    let axis = unit(rng);
    Rotation3::about_axis(&axis, rng.random_range(0.0..std::f64::consts::PI)).unwrap()
}

pub fn basis(rng: &mut ChaCha8Rng) -> MeasurementBasis {
    MeasurementBasis::ALL[rng.random_range(0..3)]
}

/// Random unit directions with `γ_X + γ_Y + γ_XY ≤ 1`, which keeps every outcome vector in the ball.
pub fn joint_povm(rng: &mut ChaCha8Rng) -> JointPovm {
    let g: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let k = rng.random_range(0.05..1.0) / g.iter().sum::<f64>().max(1e-9);
    JointPovm::new(
        unit(rng),
        unit(rng),
        unit(rng),
        g[0] * k,
        g[1] * k,
        g[2] * k,
    )
    .unwrap()
}
