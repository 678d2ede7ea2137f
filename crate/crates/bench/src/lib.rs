//! Fixtures shared by the benchmarks.

use sphereflock::dynamics::Model;
use sphereflock::scenario::{reference_n6, random_admissible, EXP_PSI};
use sphereflock::{Ensemble, SigmaKernel};

pub fn fig2_model() -> Model {
    Model::Main {
        psi: EXP_PSI,
        sigma: SigmaKernel::new(1.0, 0.5),
    }
}

/// The six-agent example for `n == 6`, random admissible data otherwise.
pub fn ensemble(n: usize) -> Ensemble {
    if n == 6 {
        reference_n6().expect("built-in data are valid")
    } else {
        random_admissible(42, n, 3.0).expect("n >= 1")
    }
}
