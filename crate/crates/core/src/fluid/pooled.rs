use super::FluidError;
use crate::model::SystemSpec;

/// Service rate of the pooled fluid at occupancy `z`: the fastest capacity is
/// used first.
pub fn pooled_service_rate(z: f64, spec: &SystemSpec) -> f64 {
    let mut below = 0.0;
    let mut rate = 0.0;
    for p in spec.pools() {
        rate += p.speed * (z - below).max(0.0).min(p.fraction);
        below += p.fraction;
    }
    rate
}

/// Stationary occupancy of the pooled fluid.
pub fn pooled_fixed_point(spec: &SystemSpec) -> f64 {
    let lambda = spec.lambda();
    let (mut g, mut c) = (0.0, 0.0);
    let mut best = f64::NEG_INFINITY;
    for p in spec.pools() {
        best = best.max(g + (lambda - c) / p.speed);
        g += p.fraction;
        c += p.speed * p.fraction;
    }
    best
}

/// RK4 for `dz/dt = lambda - T'(z)`, sampled like
/// [`integrate_fluid`](super::integrate_fluid).
pub fn integrate_pooled(
    z0: f64,
    spec: &SystemSpec,
    t_end: f64,
    dt: f64,
    sample_every: f64,
) -> Result<Vec<(f64, f64)>, FluidError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FluidError::InvalidStep(dt));
    }
    if !(sample_every > 0.0) || !(t_end >= 0.0) {
        return Err(FluidError::InvalidStep(sample_every));
    }
    if !(z0 >= 0.0) {
        return Err(FluidError::NegativeOccupancy(z0));
    }
    let f = |z: f64| spec.lambda() - pooled_service_rate(z, spec);
    let steps = (t_end / dt).round() as u64;
    let stride = ((sample_every / dt).round() as u64).max(1);
    let mut z = z0;
    let mut out = vec![(0.0, z0)];
    for n in 1..=steps {
        let k1 = f(z);
        let k2 = f(z + dt / 2.0 * k1);
        let k3 = f(z + dt / 2.0 * k2);
        let k4 = f(z + dt * k3);
        z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if n % stride == 0 || n == steps {
            out.push((n as f64 * dt, z));
        }
    }
    Ok(out)
}
