//! Stationary law of the fast chain of sporadic components, by brute force.
//!
//! `U_i` grows at rate `nu_i` and shrinks at rate `lambda` only while all lower
//! components are empty. The chain is truncated to `sum U <= T` with births
//! blocked on the boundary and solved by Gauss-Seidel sweeps.

use serde::{Deserialize, Serialize};

use super::FluidError;

pub const MAX_ORACLE_COMPONENTS: usize = 4;
pub const MIN_TRUNCATION: usize = 10;
/// Largest stationary mass tolerated on the truncation boundary.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

const SWEEP_TOLERANCE: f64 = 1e-13;
const MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastChainSummary {
    /// `pi{0 = U_1 = ... = U_{i-1} < U_i}` for each `i`.
    pub component_probs: Vec<f64>,
    pub empty_prob: f64,
    pub boundary_mass: f64,
    pub states: usize,
    pub sweeps: usize,
}

pub fn fast_chain_stationary_oracle(nus: &[f64], lambda: f64, truncation: usize) -> Result<FastChainSummary, FluidError> {
    let k = nus.len();
    if k == 0 || k > MAX_ORACLE_COMPONENTS {
        return Err(FluidError::InvalidOracle(format!("{k} components, expected 1..={MAX_ORACLE_COMPONENTS}")));
    }
    if truncation < MIN_TRUNCATION {
        return Err(FluidError::InvalidOracle(format!("truncation {truncation} below {MIN_TRUNCATION}")));
    }
    if !(lambda > 0.0) || nus.iter().any(|&v| !(v >= 0.0)) {
        return Err(FluidError::InvalidOracle("rates must be non-negative and lambda positive".into()));
    }
    let radix = truncation + 1;
    let stride: Vec<usize> = (0..k).map(|i| radix.pow(i as u32)).collect();
    let decode = |mut idx: usize| -> Vec<usize> {
        (0..k)
            .map(|_| {
                let d = idx % radix;
                idx /= radix;
                d
            })
            .collect()
    };
    // valid states ordered by total occupancy
    let mut states: Vec<(usize, Vec<usize>)> = (0..radix.pow(k as u32))
        .map(|idx| (idx, decode(idx)))
        .filter(|(_, u)| u.iter().sum::<usize>() <= truncation)
        .collect();
    states.sort_by_key(|(idx, u)| (u.iter().sum::<usize>(), *idx));

    // leading component: first non-zero coordinate, the only one that can shrink
    let lead = |u: &[usize]| u.iter().position(|&v| v > 0);
    let nu_total: f64 = nus.iter().sum();

    struct Node {
        idx: usize,
        out: f64,
        inflow: Vec<(usize, f64)>,
    }
    let nodes: Vec<Node> = states
        .iter()
        .map(|(idx, u)| {
            let total: usize = u.iter().sum();
            let mut out = if lead(u).is_some() { lambda } else { 0.0 };
            if total < truncation {
                out += nu_total;
            }
            let mut inflow = Vec::new();
            for i in 0..k {
                if u[i] > 0 {
                    inflow.push((idx - stride[i], nus[i]));
                }
                // from u + e_i, which shrinks in coordinate i iff u_1..u_{i-1} are zero
                if total < truncation && u[..i].iter().all(|&v| v == 0) {
                    inflow.push((idx + stride[i], lambda));
                }
            }
            Node { idx: *idx, out, inflow }
        })
        .collect();

    let mut pi = vec![0.0; radix.pow(k as u32)];
    let n = nodes.len() as f64;
    for node in &nodes {
        pi[node.idx] = 1.0 / n;
    }
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for node in &nodes {
            if node.out == 0.0 {
                continue;
            }
            let v = node.inflow.iter().map(|&(s, r)| pi[s] * r).sum::<f64>() / node.out;
            change = change.max((v - pi[node.idx]).abs());
            pi[node.idx] = v;
        }
        let total: f64 = nodes.iter().map(|nd| pi[nd.idx]).sum();
        for node in &nodes {
            pi[node.idx] /= total;
        }
        if change / total < SWEEP_TOLERANCE {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(FluidError::NotConverged { sweeps });
        }
    }

    let mut component_probs = vec![0.0; k];
    let mut empty_prob = 0.0;
    let mut boundary_mass = 0.0;
    for (idx, u) in &states {
        match lead(u) {
            Some(i) => component_probs[i] += pi[*idx],
            None => empty_prob += pi[*idx],
        }
        if u.iter().sum::<usize>() == truncation {
            boundary_mass += pi[*idx];
        }
    }
    if boundary_mass > BOUNDARY_MASS_LIMIT {
        return Err(FluidError::TruncationTooSmall { truncation, boundary_mass });
    }
    Ok(FastChainSummary { component_probs, empty_prob, boundary_mass, states: states.len(), sweeps })
}
