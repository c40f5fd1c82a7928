//! Linear voltage models for radial feeders.
//!
//! Three related objects live here:
//!
//! * the simplified-DistFlow baseline, `v = v0 1 + 2 (M⁻¹ D(r) M⁻ᵀ p +
//!   M⁻¹ D(x) M⁻ᵀ q)`, evaluated with tree traversals;
//! * the exact per-branch voltage sensitivity `alpha`, defined so that
//!   replacing the factor 2 with `(2 - alpha_l)` on each branch reproduces
//!   the exact squared voltages of the branch-flow model. With downstream
//!   power sums standing in for branch flows, the unique such vector is
//!
//!   `alpha = [2 (D(r) M⁻ᵀ D(r) + D(x) M⁻ᵀ D(x)) + (D²(r) + D²(x))] ell
//!            ⊘ [D(r) M⁻ᵀ p + D(x) M⁻ᵀ q]`
//!
//!   from the squared current magnitudes `ell` of an exact solution;
//! * the parameterized linear power flow map `v = v0 1 + R p + X q` with
//!   `R = M⁻¹ (2I - D(alpha)) D(r) M⁻ᵀ` and `X` alike, assembled densely as
//!   a reusable linear operator or applied matrix-free.
//!
//! With `alpha = 0` the parameterized model and simplified DistFlow are the
//! same map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, Scenario};

/// Guard threshold for near-zero sensitivity denominators.
pub const DEFAULT_EPS_DENOM: f64 = 1e-9;

/// Per-branch voltage sensitivities with a flag marking entries that were
/// zeroed because their denominator was below the guard threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub values: Vec<f64>,
    pub guarded: Vec<bool>,
}

impl AlphaVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            guarded: vec![false; n],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let guarded = vec![false; values.len()];
        Self { values, guarded }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Dense sensitivity matrices of squared voltages to net injections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlpfMatrices {
    pub rhat: DMatrix<f64>,
    pub xhat: DMatrix<f64>,
}

/// Squared voltages and their square roots from a linear model.
#[derive(Debug, Clone)]
pub struct PlpfSolution {
    pub v: Vec<f64>,
    pub v_mag: Vec<f64>,
}

/// Simplified-DistFlow squared voltages, two tree traversals per injection
/// vector.
pub fn sdistflow_solve(net: &Network, scenario: &Scenario) -> Result<Vec<f64>> {
    let sol = plpf_solve_matrix_free(net, &AlphaVector::zeros(net.n()), scenario)?;
    Ok(sol.v)
}

/// Exact voltage sensitivity from the squared branch currents of an exact
/// solution. Entries whose denominator magnitude falls below `eps_denom`
/// are guarded to exactly zero and flagged; the same near-zero quantity
/// multiplies the sensitivity inside the voltage model, so a guarded entry
/// cannot displace the solution beyond the guard scale.
pub fn exact_alpha(
    net: &Network,
    scenario: &Scenario,
    ell: &[f64],
    eps_denom: f64,
) -> Result<AlphaVector> {
    let n = net.n();
    if scenario.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: scenario.len(),
        });
    }
    if ell.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: ell.len(),
        });
    }
    let r = net.r();
    let x = net.x();

    let r_ell: Vec<f64> = r.iter().zip(ell).map(|(r, e)| r * e).collect();
    let x_ell: Vec<f64> = x.iter().zip(ell).map(|(x, e)| x * e).collect();
    let t_r = net.apply_m_inv_t(&r_ell)?;
    let t_x = net.apply_m_inv_t(&x_ell)?;

    let den = sensitivity_denominator(net, scenario)?;

    let mut values = vec![0.0; n];
    let mut guarded = vec![false; n];
    for l in 0..n {
        let num = 2.0 * (r[l] * t_r[l] + x[l] * t_x[l]) + (r[l] * r[l] + x[l] * x[l]) * ell[l];
        if den[l].abs() < eps_denom {
            guarded[l] = true;
        } else {
            values[l] = num / den[l];
        }
    }
    Ok(AlphaVector { values, guarded })
}

/// `D(r) M⁻ᵀ p + D(x) M⁻ᵀ q`, the branch quantity the sensitivity divides
/// by and later multiplies back.
pub fn sensitivity_denominator(net: &Network, scenario: &Scenario) -> Result<Vec<f64>> {
    let tp = net.apply_m_inv_t(&scenario.p)?;
    let tq = net.apply_m_inv_t(&scenario.q)?;
    Ok(net
        .r()
        .iter()
        .zip(net.x())
        .zip(tp.iter().zip(&tq))
        .map(|((r, x), (tp, tq))| r * tp + x * tq)
        .collect())
}

/// Squared branch currents approximated from voltage magnitudes alone:
/// `ell_l ≈ (V_send - V_recv)² / (r² + x²)`. `v_mag_full` includes the root
/// at index 0.
pub fn approx_ell(net: &Network, v_mag_full: &[f64]) -> Result<Vec<f64>> {
    let n = net.n();
    if v_mag_full.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: v_mag_full.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (l, b) in net.branches().iter().enumerate() {
        let z2 = b.r * b.r + b.x * b.x;
        if z2 == 0.0 {
            return Err(Error::ZeroImpedanceBranch { branch: l });
        }
        let drop = v_mag_full[b.from] - v_mag_full[b.to];
        out[l] = drop * drop / z2;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    Exact,
    Binomial,
}

/// Per-branch lambda from alpha: exactly `1/(1+alpha)` or its first-order
/// binomial expansion `1 - alpha`.
pub fn lambda_from_alpha(alpha: &[f64], mode: LambdaMode) -> Result<Vec<f64>> {
    match mode {
        LambdaMode::Binomial => Ok(alpha.iter().map(|a| 1.0 - a).collect()),
        LambdaMode::Exact => alpha
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if 1.0 + a == 0.0 {
                    Err(Error::SingularLambda(i))
                } else {
                    Ok(1.0 / (1.0 + a))
                }
            })
            .collect(),
    }
}

/// Small-angle per-branch sensitivity read directly off a voltage profile:
/// `|V_send| / |V_recv| - 1`. This is the quantity whose lambda admits the
/// binomial expansion study; it is not the recovery sensitivity of
/// [`exact_alpha`], which also absorbs the branch-loss flows.
pub fn voltage_ratio_alpha(net: &Network, v_mag_full: &[f64]) -> Result<Vec<f64>> {
    let n = net.n();
    if v_mag_full.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: v_mag_full.len(),
        });
    }
    Ok(net
        .branches()
        .iter()
        .map(|b| v_mag_full[b.from] / v_mag_full[b.to] - 1.0)
        .collect())
}

/// Assembles the dense `R` and `X` sensitivity matrices column by column
/// with tree traversals. Intended for feeders up to a few thousand buses;
/// [`plpf_solve_matrix_free`] covers the rest.
pub fn plpf_assemble(net: &Network, alpha: &AlphaVector) -> Result<PlpfMatrices> {
    let n = net.n();
    if alpha.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: alpha.len(),
        });
    }
    if alpha.max_abs() >= 0.1 {
        log::warn!(
            "max |alpha| = {:.3} >= 0.1; outside the small-sensitivity regime",
            alpha.max_abs()
        );
    }
    let r = net.r();
    let x = net.x();
    let mut rhat = DMatrix::zeros(n, n);
    let mut xhat = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col_t = net.apply_m_inv_t(&unit)?;
        unit[j] = 0.0;
        let scaled_r: Vec<f64> = (0..n)
            .map(|l| (2.0 - alpha.values[l]) * r[l] * col_t[l])
            .collect();
        let scaled_x: Vec<f64> = (0..n)
            .map(|l| (2.0 - alpha.values[l]) * x[l] * col_t[l])
            .collect();
        let col_r = net.apply_m_inv(&scaled_r)?;
        let col_x = net.apply_m_inv(&scaled_x)?;
        for i in 0..n {
            rhat[(i, j)] = col_r[i];
            xhat[(i, j)] = col_x[i];
        }
    }
    Ok(PlpfMatrices { rhat, xhat })
}

/// `v = v0 1 + R p + X q` through the assembled matrices.
pub fn plpf_solve(mats: &PlpfMatrices, scenario: &Scenario, v0: f64) -> Result<PlpfSolution> {
    let n = mats.rhat.nrows();
    if scenario.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: scenario.len(),
        });
    }
    let p = DVector::from_column_slice(&scenario.p);
    let q = DVector::from_column_slice(&scenario.q);
    let v = &mats.rhat * p + &mats.xhat * q;
    finish(v.iter().map(|d| v0 + d).collect())
}

/// Same map as [`plpf_solve`] without materializing the matrices: two
/// traversals down, one back up.
pub fn plpf_solve_matrix_free(
    net: &Network,
    alpha: &AlphaVector,
    scenario: &Scenario,
) -> Result<PlpfSolution> {
    let n = net.n();
    if alpha.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: alpha.len(),
        });
    }
    let w = sensitivity_denominator(net, scenario)?;
    let scaled: Vec<f64> = (0..n).map(|l| (2.0 - alpha.values[l]) * w[l]).collect();
    let drop = net.apply_m_inv(&scaled)?;
    let v0 = net.root_voltage_sq();
    finish(drop.iter().map(|d| v0 + d).collect())
}

fn finish(v: Vec<f64>) -> Result<PlpfSolution> {
    if let Some(bus) = v.iter().position(|&vi| vi <= 0.0) {
        return Err(Error::NegativeSquaredVoltage { bus: bus + 1 });
    }
    let v_mag = v.iter().map(|vi| vi.sqrt()).collect();
    Ok(PlpfSolution { v, v_mag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acpf;
    use crate::casefile::builtin;
    use crate::net::Branch;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_bus(r: f64, x: f64) -> Network {
        Network::new(1, 1.0, 10.0, vec![Branch { from: 0, to: 1, r, x }]).unwrap()
    }

    #[test]
    fn sdistflow_zero_injections_flat() {
        let (net, _) = builtin("case33").unwrap();
        let v = sdistflow_solve(&net, &Scenario::zeros(net.n())).unwrap();
        for vi in v {
            assert_eq!(vi, net.root_voltage_sq());
        }
    }

    #[test]
    fn sdistflow_two_bus_hand_value() {
        let net = two_bus(0.05, 0.05);
        let scn = Scenario::new(vec![-0.1], vec![-0.1]).unwrap();
        let v = sdistflow_solve(&net, &scn).unwrap();
        assert_abs_diff_eq!(v[0], 0.98, epsilon = 1e-15);
    }

    #[test]
    fn sdistflow_matches_dense_formula_on_case33() {
        let (net, base) = builtin("case33").unwrap();
        let n = net.n();
        let (_, m) = net.build_incidence();
        let minv = m.try_inverse().unwrap();
        let dr = DMatrix::from_diagonal(&DVector::from_column_slice(net.r()));
        let dx = DMatrix::from_diagonal(&DVector::from_column_slice(net.x()));
        let p = DVector::from_column_slice(&base.p);
        let q = DVector::from_column_slice(&base.q);
        let dense =
            2.0 * (&minv * &dr * minv.transpose() * p + &minv * &dx * minv.transpose() * q);
        let fast = sdistflow_solve(&net, &base).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(fast[i], net.root_voltage_sq() + dense[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn alpha_zero_for_lossless_fiction() {
        let (net, base) = builtin("case33").unwrap();
        let a = exact_alpha(&net, &base, &vec![0.0; net.n()], DEFAULT_EPS_DENOM).unwrap();
        assert_eq!(a.values, vec![0.0; net.n()]);
        assert!(a.guarded.iter().all(|g| !g));
    }

    #[test]
    fn alpha_two_bus_frozen_value() {
        // alpha = -(r²+x²) ell / (r(-p) + x(-q)); ell from the closed form
        let net = two_bus(0.05, 0.05);
        let scn = Scenario::new(vec![-0.3], vec![-0.2]).unwrap();
        let sol = acpf::solve(&net, &scn).unwrap();
        let a = exact_alpha(&net, &scn, &sol.ell, DEFAULT_EPS_DENOM).unwrap();
        let expected = -(0.05f64.powi(2) * 2.0) * sol.ell[0] / 0.025;
        assert_abs_diff_eq!(a.values[0], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(a.values[0], -0.027387, epsilon = 1e-6);
    }

    #[test]
    fn recovery_identity_on_case33() {
        // exact alpha + exact ell reproduce the exact squared voltages
        let (net, base) = builtin("case33").unwrap();
        let sol = acpf::solve(&net, &base).unwrap();
        let alpha = exact_alpha(&net, &base, &sol.ell, DEFAULT_EPS_DENOM).unwrap();
        let lin = plpf_solve_matrix_free(&net, &alpha, &base).unwrap();
        for l in 0..net.n() {
            if !alpha.guarded[l] {
                assert_abs_diff_eq!(lin.v[l], sol.v[l], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn guarded_entries_for_zero_denominator() {
        // no downstream injection on the single branch -> denominator 0
        let net = two_bus(0.05, 0.05);
        let scn = Scenario::zeros(1);
        let a = exact_alpha(&net, &scn, &[0.1], DEFAULT_EPS_DENOM).unwrap();
        assert!(a.guarded[0]);
        assert_eq!(a.values[0], 0.0);
    }

    #[test]
    fn approx_ell_flat_profile_is_zero() {
        let (net, _) = builtin("case33").unwrap();
        let v = vec![1.0; net.n() + 1];
        assert_eq!(approx_ell(&net, &v).unwrap(), vec![0.0; net.n()]);
    }

    #[test]
    fn approx_ell_two_bus_within_five_percent() {
        let net = two_bus(0.05, 0.05);
        let scn = Scenario::new(vec![-0.3], vec![-0.2]).unwrap();
        let sol = acpf::solve(&net, &scn).unwrap();
        let est = approx_ell(&net, &sol.v_mag_full(&net)).unwrap();
        let rel = (est[0] - sol.ell[0]).abs() / sol.ell[0];
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn zero_impedance_branch_rejected_at_construction() {
        let err = Network::new(1, 1.0, 10.0, vec![Branch { from: 0, to: 1, r: 0.0, x: 0.0 }])
            .unwrap_err();
        assert!(matches!(err, Error::ZeroImpedanceBranch { .. }));
    }

    #[test]
    fn lambda_identity_at_zero_alpha() {
        let lam_e = lambda_from_alpha(&[0.0, 0.0], LambdaMode::Exact).unwrap();
        let lam_b = lambda_from_alpha(&[0.0, 0.0], LambdaMode::Binomial).unwrap();
        assert_eq!(lam_e, vec![1.0, 1.0]);
        assert_eq!(lam_b, vec![1.0, 1.0]);
    }

    #[test]
    fn lambda_binomial_gap_at_small_alpha() {
        let lam_e = lambda_from_alpha(&[0.01], LambdaMode::Exact).unwrap();
        let lam_b = lambda_from_alpha(&[0.01], LambdaMode::Binomial).unwrap();
        assert_abs_diff_eq!(lam_e[0], 0.9900990099009901, epsilon = 1e-15);
        assert_abs_diff_eq!(lam_b[0], 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!((lam_e[0] - lam_b[0]).abs(), 9.9e-5, epsilon = 2e-6);
    }

    #[test]
    fn lambda_singular_at_minus_one() {
        let err = lambda_from_alpha(&[0.0, -1.0], LambdaMode::Exact).unwrap_err();
        assert!(matches!(err, Error::SingularLambda(1)));
    }

    #[test]
    fn assemble_two_bus_scalar_algebra() {
        let net = two_bus(0.05, 0.07);
        let mats = plpf_assemble(&net, &AlphaVector::from_values(vec![0.02])).unwrap();
        assert_abs_diff_eq!(mats.rhat[(0, 0)], (2.0 - 0.02) * 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(mats.xhat[(0, 0)], (2.0 - 0.02) * 0.07, epsilon = 1e-15);
    }

    #[test]
    fn assemble_zero_alpha_is_path_resistance_matrix() {
        // R[i][j] = 2 * resistance of the shared root-path of buses i+1, j+1
        let (net, _) = builtin("case33").unwrap();
        let n = net.n();
        let mats = plpf_assemble(&net, &AlphaVector::zeros(n)).unwrap();
        let path = |mut bus: usize| -> Vec<usize> {
            let mut out = Vec::new();
            while bus != 0 {
                out.push(bus - 1);
                bus = net.parent(bus);
            }
            out
        };
        for i in (0..n).step_by(7) {
            let pi = path(i + 1);
            for j in (0..n).step_by(5) {
                let pj = path(j + 1);
                let common: f64 = pi
                    .iter()
                    .filter(|l| pj.contains(l))
                    .map(|&l| net.r()[l])
                    .sum();
                assert_abs_diff_eq!(mats.rhat[(i, j)], 2.0 * common, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dense_and_matrix_free_paths_agree() {
        let (net, base) = builtin("case33").unwrap();
        let sol = acpf::solve(&net, &base).unwrap();
        let alpha = exact_alpha(&net, &base, &sol.ell, DEFAULT_EPS_DENOM).unwrap();
        let mats = plpf_assemble(&net, &alpha).unwrap();
        let dense = plpf_solve(&mats, &base, net.root_voltage_sq()).unwrap();
        let free = plpf_solve_matrix_free(&net, &alpha, &base).unwrap();
        for l in 0..net.n() {
            assert_abs_diff_eq!(dense.v[l], free.v[l], epsilon = 1e-13);
        }
    }

    #[test]
    fn plpf_zero_scenario_flat() {
        let (net, _) = builtin("case33").unwrap();
        let mats = plpf_assemble(&net, &AlphaVector::zeros(net.n())).unwrap();
        let out = plpf_solve(&mats, &Scenario::zeros(net.n()), net.root_voltage_sq()).unwrap();
        for v in out.v {
            assert_eq!(v, net.root_voltage_sq());
        }
    }

    #[test]
    fn negative_squared_voltage_is_an_error() {
        let net = two_bus(0.05, 0.05);
        let mats = plpf_assemble(&net, &AlphaVector::zeros(1)).unwrap();
        let err = plpf_solve(
            &mats,
            &Scenario::new(vec![-6.0], vec![-6.0]).unwrap(),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeSquaredVoltage { bus: 1 }));
    }

    #[test]
    fn sdistflow_overestimates_under_pure_load() {
        // sqrt of the lossless solution bounds the exact magnitudes from above
        for case in ["case33", "case69"] {
            let (net, base) = builtin(case).unwrap();
            for k in [0.5, 1.0, 1.5] {
                let scn = base.scaled(k);
                let exact = acpf::solve(&net, &scn).unwrap();
                let tilde = sdistflow_solve(&net, &scn).unwrap();
                for l in 0..net.n() {
                    assert!(
                        tilde[l].sqrt() >= exact.v_mag[l],
                        "{case} k={k} bus {}",
                        l + 1
                    );
                }
            }
        }
    }

    #[test]
    fn appendix_identity_light_two_bus() {
        // with small drops and near-zero angle the recovery sensitivity is
        // the receiving-over-sending ratio minus one; against the
        // sending-over-receiving ratio only the magnitude matches
        for (r, x, p, q) in [
            (0.04, 0.03, -0.02, -0.015),
            (0.05, 0.05, -0.01, -0.01),
            (0.02, 0.06, -0.03, -0.005),
        ] {
            let net = two_bus(r, x);
            let scn = Scenario::new(vec![p], vec![q]).unwrap();
            let sol = acpf::solve(&net, &scn).unwrap();
            assert!(sol.delta[0].abs() <= 1e-2);
            let a = exact_alpha(&net, &scn, &sol.ell, DEFAULT_EPS_DENOM).unwrap();
            let v0 = net.root_voltage_sq().sqrt();
            let ratio_sr = v0 / sol.v_mag[0] - 1.0;
            let ratio_rs = sol.v_mag[0] / v0 - 1.0;
            assert_abs_diff_eq!(a.values[0], ratio_rs, epsilon = 1e-4);
            assert_abs_diff_eq!(a.values[0].abs(), ratio_sr.abs(), epsilon = 1e-4);
        }
    }

    #[test]
    fn exact_vs_approx_ell_quality_report() {
        // quality indicator only; the approximation ignores angles entirely
        let (net, base) = builtin("case33").unwrap();
        let sol = acpf::solve(&net, &base).unwrap();
        let est = approx_ell(&net, &sol.v_mag_full(&net)).unwrap();
        let worst = net
            .branches()
            .iter()
            .enumerate()
            .filter(|(l, _)| sol.ell[*l] > 1e-9)
            .map(|(l, _)| (est[l] - sol.ell[l]).abs() / sol.ell[l])
            .fold(0.0f64, f64::max);
        println!("approx_ell worst relative error at base load: {worst:.4}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn remark1_plpf_with_zero_alpha_is_sdistflow(
            seedling in proptest::collection::vec((0.001f64..0.5, 0.001f64..0.5), 2..20),
            parents in proptest::collection::vec(0usize..1000, 2..20),
            loads in proptest::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 2..20),
        ) {
            let n = seedling.len().min(parents.len()).min(loads.len());
            let branches: Vec<Branch> = (0..n)
                .map(|j| Branch {
                    from: if j == 0 { 0 } else { parents[j] % j.max(1) },
                    to: j + 1,
                    r: seedling[j].0,
                    x: seedling[j].1,
                })
                .collect();
            let net = Network::new(n, 1.0, 10.0, branches).unwrap();
            let scn = Scenario::new(
                loads[..n].iter().map(|l| l.0).collect(),
                loads[..n].iter().map(|l| l.1).collect(),
            ).unwrap();
            let mats = plpf_assemble(&net, &AlphaVector::zeros(n)).unwrap();
            let a = plpf_solve(&mats, &scn, 1.0);
            let b = sdistflow_solve(&net, &scn);
            if let (Ok(a), Ok(b)) = (a, b) {
                for l in 0..n {
                    prop_assert!((a.v[l] - b[l]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn m_inv_inverts_m_on_random_vectors(
            entries in proptest::collection::vec(-10.0f64..10.0, 3..15),
        ) {
            let n = entries.len();
            let branches: Vec<Branch> = (0..n)
                .map(|j| Branch { from: j, to: j + 1, r: 0.01, x: 0.01 })
                .collect();
            let net = Network::new(n, 1.0, 10.0, branches).unwrap();
            let (_, m) = net.build_incidence();
            let y = DVector::from_column_slice(&entries);
            let my = &m * &y;
            let back = net.apply_m_inv(my.as_slice()).unwrap();
            for i in 0..n {
                prop_assert!((back[i] - entries[i]).abs() <= 1e-12);
            }
        }
    }
}
