//! Fixtures shared by the benchmarks.

use nalgebra::DVector;

use dp_contract::casestudies::section5;
use dp_contract::{EpsilonSchedule, NoiseSchedule};

/// Rotation exo-system budget and noise over `horizon` steps.
pub fn section5_schedules(horizon: usize) -> (EpsilonSchedule, NoiseSchedule) {
    let eps = section5::epsilon(section5::EPS_SCALE, horizon).expect("valid schedule");
    let noise = section5::noise(section5::bounds().beta(), &eps, horizon).expect("valid noise");
    (eps, noise)
}

/// Adjacent initial states (r0, ω) and (r0, ω·e) clamped to 1.
pub fn section5_pair() -> (DVector<f64>, DVector<f64>) {
    let w = section5::OMEGA;
    let w2 = (w * section5::ZETA.exp()).min(section5::THETA_BAR);
    (
        DVector::from_vec(vec![100.0, 0.0, w]),
        DVector::from_vec(vec![100.0, 0.0, w2]),
    )
}
