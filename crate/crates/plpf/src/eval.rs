//! Evaluation protocols: base-load comparison, continuation sweeps over a
//! loading factor, and Monte Carlo load sampling, all scored with the
//! max/mean voltage-magnitude error pair against the exact solver.
//!
//! A loading factor that fails to converge in the exact solver is excluded
//! for every model symmetrically and logged in the report metadata.
//! Scenario evaluations run on a small scoped thread pool capped by the
//! `PLPF_THREADS` environment variable; results are merged in scenario
//! order so reports are identical regardless of thread count.

use serde::Serialize;

use crate::acpf;
use crate::error::{Error, Result};
use crate::linmodels;
use crate::net::{Network, Scenario};
use crate::pipeline::{self, ParameterizedModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One scored protocol row. `k` is present for per-factor rows, `seed` for
/// randomized protocols.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub feeder: String,
    pub model: String,
    pub protocol: String,
    pub k: Option<f64>,
    pub p_star: usize,
    pub eps_max: f64,
    pub eps_avg: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetadata {
    pub seeds: Vec<u64>,
    pub ac_tol: f64,
    pub timestamp_epoch_s: u64,
    pub k_grid: Vec<f64>,
    pub excluded_k: Vec<f64>,
    pub notes: Vec<String>,
}

impl EvalMetadata {
    fn new() -> Self {
        let timestamp_epoch_s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            seeds: Vec::new(),
            ac_tol: acpf::SolveOptions::default().tol,
            timestamp_epoch_s,
            k_grid: Vec::new(),
            excluded_k: Vec::new(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub metadata: EvalMetadata,
}

/// A voltage model under evaluation.
#[derive(Clone, Copy)]
pub enum ModelUnderTest<'a> {
    SDistFlow,
    Plpf(&'a ParameterizedModel),
}

impl ModelUnderTest<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ModelUnderTest::SDistFlow => "sdf",
            ModelUnderTest::Plpf(_) => "plpf",
        }
    }

    pub fn solve_v_mag(&self, net: &Network, scenario: &Scenario) -> Result<Vec<f64>> {
        match self {
            ModelUnderTest::SDistFlow => Ok(linmodels::sdistflow_solve(net, scenario)?
                .iter()
                .map(|v| v.sqrt())
                .collect()),
            ModelUnderTest::Plpf(model) => {
                Ok(pipeline::predict(model, net, scenario)?.0)
            }
        }
    }
}

/// Max and mean absolute voltage error over a batch: rows are scenarios,
/// columns buses. The exact matrix varies per row.
pub fn error_metrics(v_exact: &[Vec<f64>], v_hat: &[Vec<f64>]) -> Result<(f64, f64)> {
    if v_exact.len() != v_hat.len() || v_exact.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes {} vs {}",
            v_exact.len(),
            v_hat.len()
        )));
    }
    let n = v_exact[0].len();
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for (ve, vh) in v_exact.iter().zip(v_hat) {
        if ve.len() != n || vh.len() != n {
            return Err(Error::ShapeMismatch("ragged batch".into()));
        }
        for (e, h) in ve.iter().zip(vh) {
            let d = (e - h).abs();
            max = max.max(d);
            sum += d;
        }
    }
    Ok((max, sum / (n as f64 * v_exact.len() as f64)))
}

fn thread_cap() -> usize {
    std::env::var("PLPF_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Order-preserving parallel map over scenarios.
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = thread_cap().min(items.len());
    if threads <= 1 || items.len() < 16 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                scope.spawn(move || {
                    let mut got = Vec::new();
                    let mut i = t;
                    while i < items.len() {
                        got.push((i, f(&items[i])));
                        i += threads;
                    }
                    got
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

struct SolvedBatch {
    /// indices into the input scenario list that converged
    included: Vec<usize>,
    v_exact: Vec<Vec<f64>>,
}

fn solve_batch(net: &Network, scenarios: &[Scenario]) -> Result<SolvedBatch> {
    let solved = par_map(scenarios, |scn| acpf::solve(net, scn));
    let mut included = Vec::with_capacity(scenarios.len());
    let mut v_exact = Vec::with_capacity(scenarios.len());
    for (i, res) in solved.into_iter().enumerate() {
        match res {
            Ok(sol) => {
                included.push(i);
                v_exact.push(sol.v_mag);
            }
            Err(Error::NonConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(SolvedBatch { included, v_exact })
}

/// Scores a fixed scenario batch for every model, one summary row per
/// model. This is also the forced-draw hook the randomized protocols are
/// tested against.
pub fn evaluate_batch(
    net: &Network,
    feeder: &str,
    protocol: &str,
    scenarios: &[Scenario],
    models: &[ModelUnderTest],
    seed: Option<u64>,
) -> Result<EvalReport> {
    let batch = solve_batch(net, scenarios)?;
    if batch.included.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut metadata = EvalMetadata::new();
    if let Some(s) = seed {
        metadata.seeds.push(s);
    }
    let skipped = scenarios.len() - batch.included.len();
    if skipped > 0 {
        metadata
            .notes
            .push(format!("{skipped} scenario(s) excluded: exact solver did not converge"));
    }
    let mut rows = Vec::new();
    for model in models {
        let kept: Vec<&Scenario> = batch.included.iter().map(|&i| &scenarios[i]).collect();
        let v_hat: Vec<Result<Vec<f64>>> = par_map(&kept, |scn| model.solve_v_mag(net, scn));
        let v_hat = v_hat.into_iter().collect::<Result<Vec<_>>>()?;
        let (eps_max, eps_avg) = error_metrics(&batch.v_exact, &v_hat)?;
        rows.push(EvalRow {
            feeder: feeder.into(),
            model: model.name().into(),
            protocol: protocol.into(),
            k: None,
            p_star: batch.included.len(),
            eps_max,
            eps_avg,
            seed,
        });
    }
    Ok(EvalReport { rows, metadata })
}

/// 30 equally spaced loading factors over [-2, 2]; factors inside the
/// |k| < 0.05 dead zone would be dropped, though this grid has none.
pub fn default_k_grid() -> Vec<f64> {
    let n = 30;
    (0..n)
        .map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64)
        .filter(|k| k.abs() >= 0.05)
        .collect()
}

/// Scales the base injections by each factor in `k_grid` (negative factors
/// turn loads into generators), scores every model per factor and over the
/// full batch. Non-convergent factors are excluded for all models.
pub fn continuation_sweep(
    net: &Network,
    feeder: &str,
    base: &Scenario,
    models: &[ModelUnderTest],
    k_grid: &[f64],
) -> Result<EvalReport> {
    let scenarios: Vec<Scenario> = k_grid.iter().map(|&k| base.scaled(k)).collect();
    let batch = solve_batch(net, &scenarios)?;
    if batch.included.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut metadata = EvalMetadata::new();
    metadata.k_grid = k_grid.to_vec();
    metadata.excluded_k = k_grid
        .iter()
        .enumerate()
        .filter(|(i, _)| !batch.included.contains(i))
        .map(|(_, &k)| k)
        .collect();
    for &k in &metadata.excluded_k {
        metadata
            .notes
            .push(format!("k={k} excluded for all models: exact solver did not converge"));
    }

    let mut rows = Vec::new();
    for model in models {
        let kept: Vec<&Scenario> = batch.included.iter().map(|&i| &scenarios[i]).collect();
        let v_hat: Vec<Result<Vec<f64>>> = par_map(&kept, |scn| model.solve_v_mag(net, scn));
        let v_hat = v_hat.into_iter().collect::<Result<Vec<_>>>()?;
        for (row, &scn_idx) in batch.included.iter().enumerate() {
            let (eps_max, eps_avg) = error_metrics(
                std::slice::from_ref(&batch.v_exact[row]),
                std::slice::from_ref(&v_hat[row]),
            )?;
            rows.push(EvalRow {
                feeder: feeder.into(),
                model: model.name().into(),
                protocol: "sweep".into(),
                k: Some(k_grid[scn_idx]),
                p_star: 1,
                eps_max,
                eps_avg,
                seed: None,
            });
        }
        let (eps_max, eps_avg) = error_metrics(&batch.v_exact, &v_hat)?;
        rows.push(EvalRow {
            feeder: feeder.into(),
            model: model.name().into(),
            protocol: "sweep".into(),
            k: None,
            p_star: batch.included.len(),
            eps_max,
            eps_avg,
            seed: None,
        });
    }
    Ok(EvalReport { rows, metadata })
}

/// Random loading study: every bus draws an independent multiplier uniform
/// in (0, 1.5) applied to its reference complex injection, preserving the
/// load sign. Deterministic per seed.
pub fn monte_carlo(
    net: &Network,
    feeder: &str,
    base: &Scenario,
    models: &[ModelUnderTest],
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n_samples == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<Scenario> = (0..n_samples)
        .map(|_| {
            let m: Vec<f64> = (0..net.n()).map(|_| rng.random_range(0.0..1.5)).collect();
            base.scaled_per_bus(&m)
        })
        .collect();
    let mut report = evaluate_batch(net, feeder, "mc", &scenarios, models, Some(seed))?;
    report
        .metadata
        .notes
        .push(format!("mc draws: per-bus uniform multiplier in (0, 1.5) of s_ref, {n_samples} samples"));
    Ok(report)
}

/// CSV with schema `feeder,model,protocol,k,p_star,eps_max,eps_avg,seed`.
/// Deterministic byte-for-byte for identical reports.
pub fn emit_csv(report: &EvalReport) -> Result<Vec<u8>> {
    if report.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut out = String::from("feeder,model,protocol,k,p_star,eps_max,eps_avg,seed\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.feeder,
            r.model,
            r.protocol,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.p_star,
            r.eps_max,
            r.eps_avg,
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ));
    }
    Ok(out.into_bytes())
}

/// JSON report mirroring the CSV columns plus metadata.
pub fn emit_json(report: &EvalReport) -> Result<Vec<u8>> {
    if report.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(serde_json::to_vec_pretty(report)?)
}

const SVG_COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static voltage-profile plot: exact magnitudes as markers, one polyline
/// per model, buses on the horizontal axis.
pub fn svg_profiles(
    net: &Network,
    v_exact: &[f64],
    models: &[(String, Vec<f64>)],
) -> Result<String> {
    let n = net.n();
    if v_exact.len() != n || models.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::ShapeMismatch("profile length != n".into()));
    }
    let (w, h, ml, mb, mt, mr) = (820.0, 420.0, 70.0, 50.0, 20.0, 20.0);
    let all: Vec<f64> = v_exact
        .iter()
        .chain(models.iter().flat_map(|(_, v)| v.iter()))
        .copied()
        .collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min) - 0.005;
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.005;
    let sx = |bus: usize| ml + (w - ml - mr) * bus as f64 / (n.max(2) - 1) as f64;
    let sy = |v: f64| h - mb - (h - mb - mt) * (v - lo) / (hi - lo);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb, w - mr, h - mb, h - mb
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">bus index</text>\n",
        (w + ml) / 2.0, h - 12.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">|V| (p.u.)</text>\n",
        (h - mb) / 2.0, (h - mb) / 2.0
    ));
    for (m, (name, v)) in models.iter().enumerate() {
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| format!("{:.2},{:.2}", sx(i), sy(vi)))
            .collect();
        let color = SVG_COLORS[m % SVG_COLORS.len()];
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            w - mr - 120.0,
            mt + 16.0 * (m + 1) as f64
        ));
    }
    for (i, &vi) in v_exact.iter().enumerate() {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n",
            sx(i),
            sy(vi)
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg_profiles(
    net: &Network,
    v_exact: &[f64],
    models: &[(String, Vec<f64>)],
    path: &std::path::Path,
) -> Result<()> {
    let s = svg_profiles(net, v_exact, models)?;
    std::fs::write(path, s)?;
    Ok(())
}
