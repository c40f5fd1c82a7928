//! Exact nonlinear power flow for radial feeders.
//!
//! Backward/forward sweep on complex voltages: the backward pass aggregates
//! branch currents from the leaves, the forward pass propagates voltage
//! drops from the root. The fixed point satisfies the branch-flow equations
//! exactly, which makes this solver the ground-truth oracle for every
//! approximate model in the crate. It raises [`Error::NonConvergence`]
//! instead of returning a best-effort state.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::net::{Network, Scenario};

/// Solver output. All vectors are branch/bus indexed (length n); flows are
/// measured at the sending end of each branch.
#[derive(Debug, Clone)]
pub struct AcSolution {
    /// squared voltage magnitudes, p.u.²
    pub v: Vec<f64>,
    /// voltage magnitudes, p.u.
    pub v_mag: Vec<f64>,
    /// voltage angles, rad
    pub delta: Vec<f64>,
    /// sending-end active branch flows, p.u.
    pub p_flow: Vec<f64>,
    /// sending-end reactive branch flows, p.u.
    pub q_flow: Vec<f64>,
    /// squared branch current magnitudes, p.u.
    pub ell: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl AcSolution {
    /// Voltage magnitudes including the root at index 0.
    pub fn v_mag_full(&self, net: &Network) -> Vec<f64> {
        let mut out = Vec::with_capacity(net.n() + 1);
        out.push(net.root_voltage_sq().sqrt());
        out.extend_from_slice(&self.v_mag);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// maximum nodal complex power mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        // the paper's solver tolerances are unstated; 1e-10 is recorded in
        // report metadata
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

pub fn solve(net: &Network, scenario: &Scenario) -> Result<AcSolution> {
    solve_with(net, scenario, SolveOptions::default())
}

pub fn solve_with(net: &Network, scenario: &Scenario, opts: SolveOptions) -> Result<AcSolution> {
    let n = net.n();
    if scenario.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: scenario.len(),
        });
    }
    let s: Vec<Complex64> = scenario
        .p
        .iter()
        .zip(&scenario.q)
        .map(|(&p, &q)| Complex64::new(p, q))
        .collect();
    let z: Vec<Complex64> = net
        .r()
        .iter()
        .zip(net.x())
        .map(|(&r, &x)| Complex64::new(r, x))
        .collect();
    let v0 = Complex64::new(net.root_voltage_sq().sqrt(), 0.0);

    let mut volt = vec![v0; n + 1];
    let mut cur = vec![Complex64::ZERO; n]; // branch current, parent -> child
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_iter {
        // backward: branch current = load current + downstream branch currents
        for &bus in net.topo_order().iter().rev() {
            let j = bus - 1;
            let mut i_branch = -(s[j] / volt[bus]).conj();
            for &c in net.children(bus) {
                i_branch += cur[c - 1];
            }
            cur[j] = i_branch;
        }
        // forward: voltage drop along each branch
        for &bus in net.topo_order() {
            volt[bus] = volt[net.parent(bus)] - z[bus - 1] * cur[bus - 1];
        }
        if volt.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())
            || volt.iter().skip(1).any(|v| v.norm_sqr() < 1e-12)
        {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        residual = mismatch(net, &s, &z, &volt);
        if residual <= opts.tol {
            return Ok(extract(net, &volt, &cur, it, residual));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Max nodal complex power mismatch of a candidate solution, evaluated
/// independently of the sweep (pure KCL on the stored voltages).
pub fn residual(net: &Network, scenario: &Scenario, sol: &AcSolution) -> Result<f64> {
    let n = net.n();
    if scenario.len() != n || sol.v_mag.len() != n || sol.delta.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: scenario.len().min(sol.v_mag.len()),
        });
    }
    let s: Vec<Complex64> = scenario
        .p
        .iter()
        .zip(&scenario.q)
        .map(|(&p, &q)| Complex64::new(p, q))
        .collect();
    let z: Vec<Complex64> = net
        .r()
        .iter()
        .zip(net.x())
        .map(|(&r, &x)| Complex64::new(r, x))
        .collect();
    let mut volt = vec![Complex64::new(net.root_voltage_sq().sqrt(), 0.0); n + 1];
    for bus in 1..=n {
        volt[bus] = Complex64::from_polar(sol.v_mag[bus - 1], sol.delta[bus - 1]);
    }
    Ok(mismatch(net, &s, &z, &volt))
}

fn mismatch(net: &Network, s: &[Complex64], z: &[Complex64], volt: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for &bus in net.topo_order() {
        let j = bus - 1;
        let i_in = (volt[net.parent(bus)] - volt[bus]) / z[j];
        let mut m = s[j] + volt[bus] * i_in.conj();
        for &c in net.children(bus) {
            let i_out = (volt[bus] - volt[c]) / z[c - 1];
            m -= volt[bus] * i_out.conj();
        }
        worst = worst.max(m.norm());
    }
    worst
}

fn extract(
    net: &Network,
    volt: &[Complex64],
    cur: &[Complex64],
    iterations: usize,
    residual: f64,
) -> AcSolution {
    let n = net.n();
    let mut v = vec![0.0; n];
    let mut v_mag = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut p_flow = vec![0.0; n];
    let mut q_flow = vec![0.0; n];
    let mut ell = vec![0.0; n];
    for bus in 1..=n {
        let j = bus - 1;
        v[j] = volt[bus].norm_sqr();
        v_mag[j] = volt[bus].norm();
        delta[j] = volt[bus].arg();
        let s_send = volt[net.parent(bus)] * cur[j].conj();
        p_flow[j] = s_send.re;
        q_flow[j] = s_send.im;
        ell[j] = cur[j].norm_sqr();
    }
    AcSolution {
        v,
        v_mag,
        delta,
        p_flow,
        q_flow,
        ell,
        iterations,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::builtin;
    use crate::net::Branch;
    use approx::assert_abs_diff_eq;

    /// Closed-form two-bus DistFlow solution: ell solves the quadratic
    /// (r²+x²) ell² - (2pr + 2qx + v0) ell + (p²+q²) = 0 (low-current root),
    /// then v1 = v0 - 2(rP + xQ) + (r²+x²) ell with P = r ell - p, Q = x ell - q.
    pub(crate) fn two_bus_closed_form(r: f64, x: f64, p: f64, q: f64, v0: f64) -> (f64, f64) {
        let a = r * r + x * x;
        let b = 2.0 * p * r + 2.0 * q * x + v0;
        let c = p * p + q * q;
        let ell = (b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        let (pf, qf) = (r * ell - p, x * ell - q);
        let v1 = v0 - 2.0 * (r * pf + x * qf) + a * ell;
        (v1, ell)
    }

    fn two_bus(r: f64, x: f64) -> Network {
        Network::new(1, 1.0, 10.0, vec![Branch { from: 0, to: 1, r, x }]).unwrap()
    }

    #[test]
    fn zero_injection_flat_in_one_iteration() {
        let (net, _) = builtin("case33").unwrap();
        let sol = solve(&net, &Scenario::zeros(net.n())).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.residual, 0.0);
        for j in 0..net.n() {
            assert_eq!(sol.v[j], net.root_voltage_sq());
            assert_eq!(sol.p_flow[j], 0.0);
            assert_eq!(sol.q_flow[j], 0.0);
            assert_eq!(sol.ell[j], 0.0);
        }
    }

    #[test]
    fn two_bus_matches_closed_form() {
        let net = two_bus(0.05, 0.05);
        let scn = Scenario::new(vec![-0.3], vec![-0.2]).unwrap();
        let sol = solve(&net, &scn).unwrap();
        let (v1, ell) = two_bus_closed_form(0.05, 0.05, -0.3, -0.2, 1.0);
        // frozen from the oracle: v1 = 0.94931517..., ell = 0.13694107...
        assert_abs_diff_eq!(v1, 0.949315174, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.v_mag[0], v1.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(sol.ell[0], ell, epsilon = 1e-10);
    }

    #[test]
    fn case33_voltage_floor_at_base_load() {
        let (net, base) = builtin("case33").unwrap();
        let sol = solve(&net, &base).unwrap();
        let vmin = sol.v_mag.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((0.90..=0.92).contains(&vmin), "min |V| = {vmin}");
        // well-known benchmark: 0.9131 p.u. at bus 18
        assert_abs_diff_eq!(vmin, 0.91309, epsilon = 5e-5);
        let at = sol.v_mag.iter().position(|&v| v == vmin).unwrap();
        assert_eq!(net.label(at + 1), 18);
    }

    #[test]
    fn residual_of_converged_solution_is_tiny() {
        let (net, base) = builtin("case33").unwrap();
        let sol = solve(&net, &base).unwrap();
        assert!(residual(&net, &base, &sol).unwrap() <= 1e-10);
    }

    #[test]
    fn residual_detects_perturbation() {
        let (net, base) = builtin("case33").unwrap();
        let mut sol = solve(&net, &base).unwrap();
        sol.v_mag[10] += 0.01;
        assert!(residual(&net, &base, &sol).unwrap() > 1e-4);
    }

    #[test]
    fn residual_zero_for_flat_no_load() {
        let (net, _) = builtin("case33").unwrap();
        let scn = Scenario::zeros(net.n());
        let sol = solve(&net, &scn).unwrap();
        assert_eq!(residual(&net, &scn, &sol).unwrap(), 0.0);
    }

    #[test]
    fn loss_consistency_along_the_tree() {
        // root import = total losses - total injection, both from branch flows
        let (net, base) = builtin("case33").unwrap();
        let sol = solve(&net, &base).unwrap();
        let root_import: f64 = net
            .branches()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.from == 0)
            .map(|(l, _)| sol.p_flow[l])
            .sum();
        let losses: f64 = net
            .r()
            .iter()
            .zip(&sol.ell)
            .map(|(r, ell)| r * ell)
            .sum();
        let injections: f64 = base.p.iter().sum();
        assert_abs_diff_eq!(root_import, losses - injections, epsilon = 1e-9);
    }

    #[test]
    fn min_voltage_strictly_decreasing_in_loading() {
        let (net, base) = builtin("case33").unwrap();
        let mut last = f64::INFINITY;
        for k in [0.5, 1.0, 1.5] {
            let sol = solve(&net, &base.scaled(k)).unwrap();
            let vmin = sol.v_mag.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(vmin < last, "k={k}: {vmin} !< {last}");
            last = vmin;
        }
    }

    #[test]
    fn extreme_loading_does_not_converge() {
        let (net, base) = builtin("case33").unwrap();
        let mut failed_at = None;
        for k in [4.0, 5.0, 6.0, 8.0, 10.0] {
            if let Err(Error::NonConvergence { .. }) = solve(&net, &base.scaled(k)) {
                failed_at = Some(k);
                break;
            }
        }
        assert!(failed_at.is_some(), "no diverging k found up to 10");
    }

    #[test]
    fn ell_consistent_with_sending_end_flows() {
        let (net, base) = builtin("case69").unwrap();
        let sol = solve(&net, &base).unwrap();
        for (l, b) in net.branches().iter().enumerate() {
            let v_send = if b.from == 0 {
                net.root_voltage_sq()
            } else {
                sol.v[b.from - 1]
            };
            let lhs = sol.ell[l];
            let rhs = (sol.p_flow[l].powi(2) + sol.q_flow[l].powi(2)) / v_send;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }
}
