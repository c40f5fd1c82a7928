//! Offline parameterization: sample operating points around a reference
//! scenario, solve each exactly, extract per-branch sensitivities, and fit
//! the Gaussian Process that supplies sensitivities (and confidence
//! intervals) to the linear model at prediction time.
//!
//! Training inputs pair branch `l` with the net injection `(p, q)` of its
//! receiving bus, giving the `(n·p) x 2` input matrix; targets are the
//! exact sensitivities computed with the exact squared branch currents of
//! each sample's AC solution. The default estimator is a single GP over the
//! stacked rows; a per-branch variant is available as an ablation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acpf;
use crate::error::{Error, Result};
use crate::gpr::{self, Dataset, FitOptions, GpModel, GpModelData};
use crate::linmodels::{self, AlphaVector, PlpfMatrices, DEFAULT_EPS_DENOM};
use crate::net::{Network, Scenario};

const MODEL_FILE_VERSION: u32 = 1;
/// 95% two-sided normal quantile for the confidence half-widths.
const CI_FACTOR: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// per-bus multiplier with magnitude uniform in [low, high] and a fair
    /// sign flip, covering [-high s, -low s] U [low s, high s] componentwise
    UniformRandom,
    /// one global multiplier per sample, equally spaced over the same union
    FixedGranularity,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainingSpec {
    pub p_samples: usize,
    pub interval_low: f64,
    pub interval_high: f64,
    pub mode: SamplingMode,
    pub seed: u64,
    /// derive targets from voltage-only approximate currents instead of the
    /// exact ones (ablation)
    pub use_approx_ell: bool,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            p_samples: 20,
            interval_low: 1.0,
            interval_high: 2.0,
            mode: SamplingMode::UniformRandom,
            seed: 0,
            use_approx_ell: false,
        }
    }
}

impl TrainingSpec {
    fn validate(&self) -> Result<()> {
        if self.p_samples < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: self.p_samples });
        }
        if !(1.0 <= self.interval_low && self.interval_low < self.interval_high) {
            return Err(Error::ShapeMismatch(format!(
                "need 1 <= interval_low < interval_high, got [{}, {}]",
                self.interval_low, self.interval_high
            )));
        }
        Ok(())
    }
}

/// Stacked training rows plus their provenance (sample, branch, guard flag).
#[derive(Debug, Clone)]
pub struct TrainingTable {
    pub data: Dataset,
    pub sample_of_row: Vec<usize>,
    pub branch_of_row: Vec<usize>,
    pub guarded: Vec<bool>,
    pub fingerprint: String,
}

/// Step 1 of the offline procedure: p scenarios drawn around the reference,
/// solved exactly, sensitivities stacked into a dataset. Deterministic for
/// a fixed (network, base, spec).
pub fn gen_training_set(
    net: &Network,
    base: &Scenario,
    spec: &TrainingSpec,
) -> Result<TrainingTable> {
    spec.validate()?;
    let n = net.n();
    if base.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: base.len() });
    }
    if base.p.iter().all(|&v| v == 0.0) && base.q.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroBaseScenario);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows_x = Vec::with_capacity(n * spec.p_samples * 2);
    let mut rows_y = Vec::with_capacity(n * spec.p_samples);
    let mut sample_of_row = Vec::with_capacity(n * spec.p_samples);
    let mut branch_of_row = Vec::with_capacity(n * spec.p_samples);
    let mut guarded = Vec::with_capacity(n * spec.p_samples);

    for sample in 0..spec.p_samples {
        let (scn, sol) = match spec.mode {
            SamplingMode::UniformRandom => {
                let mut attempt = 0;
                loop {
                    let m: Vec<f64> = (0..n)
                        .map(|_| {
                            let mag = rng.random_range(spec.interval_low..spec.interval_high);
                            if rng.random_bool(0.5) {
                                mag
                            } else {
                                -mag
                            }
                        })
                        .collect();
                    let scn = base.scaled_per_bus(&m);
                    match acpf::solve(net, &scn) {
                        Ok(sol) => break (scn, sol),
                        Err(Error::NonConvergence { .. }) if attempt < 3 => attempt += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
            SamplingMode::FixedGranularity => {
                let m = grid_multiplier(sample, spec);
                let scn = base.scaled(m);
                let sol = acpf::solve(net, &scn)?;
                (scn, sol)
            }
        };
        let ell = if spec.use_approx_ell {
            linmodels::approx_ell(net, &sol.v_mag_full(net))?
        } else {
            sol.ell.clone()
        };
        let alpha = linmodels::exact_alpha(net, &scn, &ell, DEFAULT_EPS_DENOM)?;
        for l in 0..n {
            rows_x.push(scn.p[l]);
            rows_x.push(scn.q[l]);
            rows_y.push(alpha.values[l]);
            sample_of_row.push(sample);
            branch_of_row.push(l);
            guarded.push(alpha.guarded[l]);
        }
    }

    let x = DMatrix::from_row_slice(n * spec.p_samples, 2, &rows_x);
    let y = DVector::from_column_slice(&rows_y);
    Ok(TrainingTable {
        data: Dataset::new(x, y)?,
        sample_of_row,
        branch_of_row,
        guarded,
        fingerprint: net.fingerprint(),
    })
}

/// Equally spaced multipliers along [-high, -low] U [low, high] by arc
/// length: 4 steps with defaults give -2, -4/3, 4/3, 2.
fn grid_multiplier(sample: usize, spec: &TrainingSpec) -> f64 {
    let span = spec.interval_high - spec.interval_low;
    let t = sample as f64 / (spec.p_samples - 1) as f64 * 2.0 * span;
    if t < span {
        -spec.interval_high + t
    } else {
        spec.interval_low + (t - span)
    }
}

/// CSV dump of the training table: `sample,branch,p,q,alpha,guarded`.
/// `branch` is the 1-based receiving-bus index.
pub fn dataset_csv(table: &TrainingTable) -> String {
    let mut out = String::from("sample,branch,p,q,alpha,guarded\n");
    for row in 0..table.data.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            table.sample_of_row[row],
            table.branch_of_row[row] + 1,
            table.data.x[(row, 0)],
            table.data.x[(row, 1)],
            table.data.y[row],
            u8::from(table.guarded[row]),
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpGranularity {
    /// one GP over all stacked (branch, sample) rows — the default protocol
    Stacked,
    /// an independent GP per branch (ablation)
    PerBranch,
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub granularity: GpGranularity,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            granularity: GpGranularity::Stacked,
        }
    }
}

#[derive(Debug, Clone)]
enum BranchEstimator {
    Gp(GpModel),
    /// all targets for the branch were identical (typically guarded zeros)
    Constant(f64),
}

#[derive(Debug, Clone)]
enum AlphaEstimator {
    Stacked(GpModel),
    PerBranch(Vec<BranchEstimator>),
}

/// A trained sensitivity estimator bound to one network.
#[derive(Debug, Clone)]
pub struct ParameterizedModel {
    estimator: AlphaEstimator,
    fingerprint: String,
    n: usize,
}

/// Detailed prediction output; `mats` are the assembled sensitivity
/// matrices for this operating point when requested.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub v: Vec<f64>,
    pub v_mag: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub alpha_var: Vec<f64>,
    pub mats: Option<PlpfMatrices>,
}

/// Step 2: fit the GP on a training table generated for the same network
/// (noise-free observations; the factorization jitter is numerical only).
pub fn parameterize(
    net: &Network,
    table: &TrainingTable,
    cfg: &FitConfig,
) -> Result<ParameterizedModel> {
    if table.fingerprint != net.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: net.fingerprint(),
            found: table.fingerprint.clone(),
        });
    }
    let opts = FitOptions {
        restarts: cfg.restarts,
        seed: cfg.seed,
        noise_var: 0.0,
        ..Default::default()
    };
    let estimator = match cfg.granularity {
        GpGranularity::Stacked => AlphaEstimator::Stacked(gpr::fit(&table.data, &opts)?),
        GpGranularity::PerBranch => {
            let n = net.n();
            let mut models = Vec::with_capacity(n);
            for l in 0..n {
                let rows: Vec<usize> = (0..table.data.len())
                    .filter(|&r| table.branch_of_row[r] == l)
                    .collect();
                let x = DMatrix::from_fn(rows.len(), 2, |i, j| table.data.x[(rows[i], j)]);
                let y = DVector::from_fn(rows.len(), |i, _| table.data.y[rows[i]]);
                let first = y[0];
                if y.iter().all(|&v| v == first) {
                    models.push(BranchEstimator::Constant(first));
                } else {
                    models.push(BranchEstimator::Gp(gpr::fit(&Dataset::new(x, y)?, &opts)?));
                }
            }
            AlphaEstimator::PerBranch(models)
        }
    };
    Ok(ParameterizedModel {
        estimator,
        fingerprint: table.fingerprint.clone(),
        n: net.n(),
    })
}

impl ParameterizedModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn granularity(&self) -> GpGranularity {
        match self.estimator {
            AlphaEstimator::Stacked(_) => GpGranularity::Stacked,
            AlphaEstimator::PerBranch(_) => GpGranularity::PerBranch,
        }
    }

    /// Posterior sensitivity mean and variance at a scenario, row l paired
    /// with the receiving-bus injection of branch l as in training.
    pub fn query_alpha(&self, scenario: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
        if scenario.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: scenario.len(),
            });
        }
        match &self.estimator {
            AlphaEstimator::Stacked(gp) => {
                let x = DMatrix::from_fn(self.n, 2, |l, j| {
                    if j == 0 {
                        scenario.p[l]
                    } else {
                        scenario.q[l]
                    }
                });
                let (mu, var) = gp.posterior(&x)?;
                Ok((mu.iter().copied().collect(), var.iter().copied().collect()))
            }
            AlphaEstimator::PerBranch(models) => {
                let mut mu = vec![0.0; self.n];
                let mut var = vec![0.0; self.n];
                for (l, m) in models.iter().enumerate() {
                    match m {
                        BranchEstimator::Constant(c) => mu[l] = *c,
                        BranchEstimator::Gp(gp) => {
                            let x = DMatrix::from_row_slice(1, 2, &[scenario.p[l], scenario.q[l]]);
                            let (m1, v1) = gp.posterior(&x)?;
                            mu[l] = m1[0];
                            var[l] = v1[0];
                        }
                    }
                }
                Ok((mu, var))
            }
        }
    }
}

/// Cold-start voltage prediction: GP sensitivities assembled into the
/// linear map plus a first-order 95% confidence half-width on the squared
/// voltages, `1.96 |M⁻¹ D(sigma_alpha) (D(r) M⁻ᵀ p + D(x) M⁻ᵀ q)|`.
pub fn predict(
    model: &ParameterizedModel,
    net: &Network,
    scenario: &Scenario,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pred = predict_detailed(model, net, scenario, false)?;
    Ok((pred.v_mag, pred.ci_halfwidth))
}

pub fn predict_detailed(
    model: &ParameterizedModel,
    net: &Network,
    scenario: &Scenario,
    with_mats: bool,
) -> Result<Prediction> {
    if model.fingerprint != net.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: net.fingerprint(),
            found: model.fingerprint.clone(),
        });
    }
    let (alpha_hat, alpha_var) = model.query_alpha(scenario)?;
    let alpha = AlphaVector::from_values(alpha_hat.clone());
    let sol = linmodels::plpf_solve_matrix_free(net, &alpha, scenario)?;

    let w = linmodels::sensitivity_denominator(net, scenario)?;
    let sigma_w: Vec<f64> = alpha_var
        .iter()
        .zip(&w)
        .map(|(var, w)| var.sqrt() * w)
        .collect();
    let ci_halfwidth: Vec<f64> = net
        .apply_m_inv(&sigma_w)?
        .iter()
        .map(|v| CI_FACTOR * v.abs())
        .collect();

    let mats = if with_mats {
        Some(linmodels::plpf_assemble(net, &alpha)?)
    } else {
        None
    };
    Ok(Prediction {
        v: sol.v,
        v_mag: sol.v_mag,
        ci_halfwidth,
        alpha_hat,
        alpha_var,
        mats,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BranchGpData {
    Gp { gp: GpModelData },
    Constant { value: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EstimatorData {
    Stacked { gp: GpModelData },
    PerBranch { branches: Vec<BranchGpData> },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    fingerprint: String,
    n: usize,
    estimator: EstimatorData,
}

/// Versioned JSON snapshot of a trained model. Identical inputs produce
/// byte-identical output.
pub fn save_model(model: &ParameterizedModel) -> Result<Vec<u8>> {
    let estimator = match &model.estimator {
        AlphaEstimator::Stacked(gp) => EstimatorData::Stacked { gp: gp.to_data() },
        AlphaEstimator::PerBranch(models) => EstimatorData::PerBranch {
            branches: models
                .iter()
                .map(|m| match m {
                    BranchEstimator::Gp(gp) => BranchGpData::Gp { gp: gp.to_data() },
                    BranchEstimator::Constant(value) => BranchGpData::Constant { value: *value },
                })
                .collect(),
        },
    };
    let file = ModelFile {
        version: MODEL_FILE_VERSION,
        fingerprint: model.fingerprint.clone(),
        n: model.n,
        estimator,
    };
    Ok(serde_json::to_vec_pretty(&file)?)
}

/// Loads a model file and binds it to `net`, verifying version and
/// fingerprint.
pub fn load_model(bytes: &[u8], net: &Network) -> Result<ParameterizedModel> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    if file.version != MODEL_FILE_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_FILE_VERSION,
            found: file.version,
        });
    }
    if file.fingerprint != net.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: net.fingerprint(),
            found: file.fingerprint,
        });
    }
    let estimator = match file.estimator {
        EstimatorData::Stacked { gp } => AlphaEstimator::Stacked(GpModel::from_data(gp)?),
        EstimatorData::PerBranch { branches } => AlphaEstimator::PerBranch(
            branches
                .into_iter()
                .map(|b| match b {
                    BranchGpData::Gp { gp } => GpModel::from_data(gp).map(BranchEstimator::Gp),
                    BranchGpData::Constant { value } => Ok(BranchEstimator::Constant(value)),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(ParameterizedModel {
        estimator,
        fingerprint: file.fingerprint,
        n: file.n,
    })
}
