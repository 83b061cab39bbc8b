#![allow(dead_code)]

pub mod oracles;

use nalgebra::{DVector, Vector3};
use pcc_cbf::dynamics::{RobotModel, DEFAULT_GRAVITY};
use pcc_cbf::kinematics::SegmentParams;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_segment() -> RobotModel {
    RobotModel::new(vec![SegmentParams::default(); 2], Vector3::from(DEFAULT_GRAVITY)).unwrap()
}

pub fn model(n: usize, gravity: [f64; 3]) -> RobotModel {
    RobotModel::new(vec![SegmentParams::default(); n], Vector3::from(gravity)).unwrap()
}

/// Segment coordinates with a prescribed bend angle and a random bend
/// direction and extension.
pub fn segment_with_angle(rng: &mut impl Rng, params: &SegmentParams, theta: f64) -> Vector3<f64> {
    let psi = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = theta * params.tendon_radius;
    Vector3::new(r * psi.cos(), r * psi.sin(), rng.gen_range(-0.03..0.03))
}

/// Random valid stacked configuration with bend angles up to `max_theta`.
pub fn random_config(rng: &mut impl Rng, model: &RobotModel, max_theta: f64) -> DVector<f64> {
    let mut q = DVector::zeros(model.dof());
    for (i, seg) in model.segments.iter().enumerate() {
        loop {
            let theta = rng.gen_range(0.0..max_theta);
            let qi = segment_with_angle(rng, seg, theta);
            if seg.height_margin(&qi) > 0.01 {
                q.fixed_rows_mut::<3>(3 * i).copy_from(&qi);
                break;
            }
        }
    }
    q
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}
