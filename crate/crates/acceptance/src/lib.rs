//! Fixtures shared by the acceptance suite.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use roughcadlag::lift::{self, LiftConfig, RoughLift};
use roughcadlag::simulate::{GeneratorSpec, Model, PathGenerator};
use roughcadlag::CadlagPath;

/// Random staircase with jittered sample times in `[0, 1)` and horizon 1.
pub fn random_path(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CadlagPath {
    let mut times = vec![0.0];
    for _ in 1..n {
        let last = *times.last().unwrap();
        times.push(last + rng.random_range(0.1..1.0));
    }
    let end = times.last().unwrap() + 1.0;
    let times: Vec<f64> = times.iter().map(|t| t / end).collect();
    let values = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    CadlagPath::new(times, values, 1.0).unwrap()
}

/// Two-dimensional spec with every model parameter switched on.
pub fn model_spec(model: Model, seed: u64, steps: usize) -> GeneratorSpec {
    GeneratorSpec {
        lambda: 5.0,
        hurst: 0.75,
        q: 1.5,
        drift: vec![0.3, -0.2],
        ..GeneratorSpec::new(model, 2, 1.0, steps, seed)
    }
}

/// `seeds` paths of every model.
pub fn model_paths(seeds: u64, steps: usize) -> Vec<(Model, u64, CadlagPath)> {
    let mut out = Vec::new();
    for model in Model::ALL {
        let gen = PathGenerator::new(&model_spec(model, 0, steps)).unwrap();
        for seed in 0..seeds {
            out.push((model, seed, gen.sample(seed)));
        }
    }
    out
}

/// Every lift construction that applies to `model`.
pub fn lifts_for(model: Model, x: &CadlagPath) -> Vec<RoughLift> {
    let cfg = LiftConfig::default();
    let mut lifts = vec![lift::ito_lift(x, &cfg).unwrap()];
    match model {
        Model::Fbm | Model::Brownian => lifts.push(lift::gaussian_lift(x, &cfg).unwrap()),
        Model::FvStaircase => lifts.push(lift::young_lift(x, 1.5, lift::DEFAULT_P).unwrap()),
        Model::CompoundPoisson | Model::ItoSemimartingale => {}
    }
    lifts
}
