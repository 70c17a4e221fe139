//! Benchmark fixtures shared by the criterion targets.

use pivotal_slope::datagen::{contaminate, gen_instance, InstanceSpec};
use pivotal_slope::penalties::{build_lambda, build_mu};
use pivotal_slope::{AdversaryStrategy, PenaltyConfig, RegressionInstance, WeightSequence};

/// Gaussian instance with `p = 2n`, ten active coefficients and `n/100`
/// gross outliers, together with the default penalty sequences.
pub fn fixture(n: usize, seed: u64) -> (RegressionInstance, WeightSequence, WeightSequence) {
    let mut spec = InstanceSpec::gaussian(n, 2 * n, 10);
    spec.beta_magnitude = 5.0;
    let inst = gen_instance(&spec, seed).expect("valid spec");
    let inst = contaminate(&inst, AdversaryStrategy::RandomLarge, n / 100, 10.0).expect("o <= n");
    let cfg = PenaltyConfig::default();
    let lam = build_lambda(n, 2 * n, &cfg).expect("valid penalty");
    let mu = build_mu(n, &cfg).expect("valid penalty");
    (inst, lam, mu)
}
