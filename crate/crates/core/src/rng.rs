//! Seeded sampling. Every consumer derives its own ChaCha stream from the
//! run seed and a stream id, so no generator state is shared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids used across the crate. Keeping them in one place makes
/// collisions visible.
pub mod streams {
    pub const NET_POOL: u64 = 1 << 32;
    pub const NET_REPAIR: u64 = 2 << 32;
    pub const VERIFY: u64 = 3 << 32;
    pub const SIGN_CHECK: u64 = 4 << 32;
    pub const EQUIVALENCE: u64 = 5 << 32;
    pub const CLASSIFY: u64 = 6 << 32;
    pub const COVERAGE: u64 = 7 << 32;
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform point on the sphere of radius `r` in R^d.
pub fn on_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x * r / n).collect();
        }
    }
}

/// Uniform point in the closed ball of radius `r` in R^d.
pub fn in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / d as f64);
    on_sphere(rng, d, radius)
}
