//! Fixed scenes shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tractoria::samples;
use tractoria::{CurveSpec, MetricSpec};

pub fn helix() -> (MetricSpec, CurveSpec) {
    let ms = MetricSpec::flat(&samples::coords(3), 0);
    let cs = CurveSpec::parse(&["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]).expect("helix parses");
    (ms, cs)
}

/// A curved Riemannian scene in dimension `n`.
pub fn generic(n: usize, seed: u64) -> (MetricSpec, CurveSpec) {
    samples::random_scene(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

pub fn null_curve(n: usize) -> (MetricSpec, CurveSpec) {
    samples::null_curve(n, &[0.3, -0.2, 0.5, 0.1][..n - 1], 0.1)
}
