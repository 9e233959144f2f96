use super::split::SplitBuffers;
use super::FluidError;
use crate::model::{SystemSpec, TailMeasure, DEFAULT_DEPTH};

pub const DEFAULT_DT: f64 = 1e-3;

/// Largest coordinate move the post-step projection may make.
pub const PROJECTION_LIMIT: f64 = 1e-3;

/// Time derivative of the fluid state, laid out like the measure:
/// `out[j][i - 1] = dx[i][j] / dt`.
pub fn fluid_rhs(x: &TailMeasure, spec: &SystemSpec) -> Result<Vec<Vec<f64>>, FluidError> {
    let mut out = vec![vec![0.0; x.depth()]; x.num_pools()];
    let mut buf = SplitBuffers::new(x.num_pools(), x.depth());
    rhs_into(x.columns(), x.depth(), spec, &mut buf, &mut out)?;
    Ok(out)
}

fn rhs_into(
    cols: &[Vec<f64>],
    depth: usize,
    spec: &SystemSpec,
    buf: &mut SplitBuffers,
    out: &mut [Vec<f64>],
) -> Result<(), FluidError> {
    buf.fill(cols, depth, spec)?;
    let lambda = spec.lambda();
    for (j, col) in cols.iter().enumerate() {
        let inflow = lambda / spec.fraction(j);
        let mu = spec.speed(j);
        for i in 0..depth {
            let next = if i + 1 < depth { col[i + 1] } else { 0.0 };
            out[j][i] = inflow * buf.probs[j][i] - mu * (col[i] - next);
        }
    }
    Ok(())
}

/// Stationary point: pools fill in speed order until the load is covered.
pub fn fixed_point(spec: &SystemSpec) -> TailMeasure {
    let lambda = spec.lambda();
    let mut covered = 0.0;
    let columns = spec
        .pools()
        .iter()
        .map(|p| {
            let cap = p.speed * p.fraction;
            let x = ((lambda - covered).max(0.0) / cap).min(1.0);
            covered += cap;
            vec![x]
        })
        .collect();
    TailMeasure::new(DEFAULT_DEPTH, columns).expect("values lie in [0, 1]")
}

fn axpy(out: &mut [Vec<f64>], base: &[Vec<f64>], k: &[Vec<f64>], h: f64) {
    for ((o, b), d) in out.iter_mut().zip(base).zip(k) {
        for ((o, b), d) in o.iter_mut().zip(b).zip(d) {
            *o = b + h * d;
        }
    }
}

/// Clips to `[0, 1]` and makes each column non-increasing. Returns the
/// largest move with its `(pool, level)`.
fn project(cols: &mut [Vec<f64>]) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for (j, col) in cols.iter_mut().enumerate() {
        let mut prev = 1.0f64;
        for (i, v) in col.iter_mut().enumerate() {
            let p = v.clamp(0.0, prev);
            let shift = (p - *v).abs();
            if shift > worst.0 {
                worst = (shift, j, i + 1);
            }
            *v = p;
            prev = p;
        }
    }
    worst
}

/// Fixed-step RK4 with projection onto the tail-measure set after each step.
/// Returns samples at `t = 0`, every `sample_every` (rounded to whole steps)
/// and at `t_end`.
pub fn integrate_fluid(
    x0: &TailMeasure,
    spec: &SystemSpec,
    t_end: f64,
    dt: f64,
    sample_every: f64,
) -> Result<Vec<(f64, TailMeasure)>, FluidError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FluidError::InvalidStep(dt));
    }
    if !(sample_every > 0.0) || !(t_end >= 0.0) {
        return Err(FluidError::InvalidStep(sample_every));
    }
    let depth = x0.depth();
    let steps = (t_end / dt).round() as u64;
    let stride = ((sample_every / dt).round() as u64).max(1);
    let mut x = x0.columns().to_vec();
    let zero = vec![vec![0.0; depth]; x.len()];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero);
    let mut buf = SplitBuffers::new(x.len(), depth);
    let mut out = vec![(0.0, x0.clone())];
    for n in 1..=steps {
        rhs_into(&x, depth, spec, &mut buf, &mut k1)?;
        axpy(&mut tmp, &x, &k1, dt / 2.0);
        rhs_into(&tmp, depth, spec, &mut buf, &mut k2)?;
        axpy(&mut tmp, &x, &k2, dt / 2.0);
        rhs_into(&tmp, depth, spec, &mut buf, &mut k3)?;
        axpy(&mut tmp, &x, &k3, dt);
        rhs_into(&tmp, depth, spec, &mut buf, &mut k4)?;
        for j in 0..x.len() {
            for i in 0..depth {
                x[j][i] += dt / 6.0 * (k1[j][i] + 2.0 * k2[j][i] + 2.0 * k3[j][i] + k4[j][i]);
            }
        }
        let t = n as f64 * dt;
        let (shift, pool, level) = project(&mut x);
        if shift > PROJECTION_LIMIT {
            return Err(FluidError::StepTooLarge { time: t, pool: pool + 1, level, shift });
        }
        if n % stride == 0 || n == steps {
            out.push((t, TailMeasure::from_columns_unchecked(depth, x.clone())));
        }
    }
    Ok(out)
}
