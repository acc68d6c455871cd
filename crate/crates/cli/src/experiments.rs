//! Experiment drivers: seeded synthetic sweeps, the step-size study and
//! image inpainting, all emitting plot-ready CSV files.
//!
//! CSV conventions: fixed column order as documented per writer, `.` as the
//! decimal separator, LF line endings. Timing columns are measured wall
//! time and are the only nondeterministic fields.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};

use lrtc_core::operators::MeasurementOperator;
use lrtc_core::problems::{
    self, best_nrank_preprocess, make_instance, nrmse, read_ppm, rel_err, sample_omega, write_ppm,
};
use lrtc_core::solver::{
    solve_fixed_rank, solve_heuristic_rank, SolverConfig, SolverError, SolverResult, SvdStrategy,
};
use lrtc_core::tensor::{DenseTensor, NRank};

use crate::config::{Settings, SolverChoice, SvdChoice};

/// One solver's aggregate over the trials of a setting.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub setting: String,
    pub solver: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub mean_iter: f64,
    pub mean_metric: f64,
    pub mean_seconds: f64,
    /// Per-trial detail for downstream checks (successful trials only).
    pub iterations: Vec<usize>,
    pub metrics: Vec<f64>,
    pub final_ranks: Vec<Vec<usize>>,
}

fn solver_config(settings: &Settings, choice: SolverChoice, image_run: bool) -> SolverConfig {
    let svd_strategy = match settings.svd {
        SvdChoice::Exact => SvdStrategy::Exact,
        SvdChoice::Sketch => SvdStrategy::Sketch {
            seed: settings.seed ^ 0x5ce7c5,
        },
    };
    let mut cfg = match choice {
        SolverChoice::Ihtr => SolverConfig::fixed(NRank::new(settings.ranks.clone())),
        _ => SolverConfig::heuristic(settings.xi_for(image_run)),
    };
    cfg.tau = settings.tau;
    cfg.tol = settings.tol;
    cfg.max_iter = settings.max_iter;
    cfg.weights = settings.weights.clone();
    cfg.svd_strategy = svd_strategy;
    cfg
}

fn run_one(
    settings: &Settings,
    choice: SolverChoice,
    op: &dyn MeasurementOperator,
    b: &[f64],
    image_run: bool,
) -> Result<SolverResult, SolverError> {
    let cfg = solver_config(settings, choice, image_run);
    match choice {
        SolverChoice::Ihtr => {
            solve_fixed_rank(op, b, &NRank::new(settings.ranks.clone()), &cfg)
        }
        _ => solve_heuristic_rank(op, b, &cfg),
    }
}

fn solvers_to_run(choice: Option<SolverChoice>) -> Vec<SolverChoice> {
    match choice.unwrap_or(SolverChoice::Both) {
        SolverChoice::Both => vec![SolverChoice::Ihtr, SolverChoice::Iht],
        single => vec![single],
    }
}

fn solver_name(choice: SolverChoice) -> &'static str {
    match choice {
        SolverChoice::Ihtr => "ihtr",
        SolverChoice::Iht => "iht",
        SolverChoice::Both => "both",
    }
}

fn setting_id(settings: &Settings) -> String {
    let shape: Vec<String> = settings.shape.iter().map(|n| n.to_string()).collect();
    let ranks: Vec<String> = settings.ranks.iter().map(|r| r.to_string()).collect();
    format!(
        "{}_r{}_sr{}_sig{}",
        shape.join("x"),
        ranks.join("-"),
        settings.sr,
        settings.sigma
    )
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from("setting,solver,mean_iter,mean_metric,mean_seconds,failures\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.12e},{:.6},{}\n",
            row.setting, row.solver, row.mean_iter, row.mean_metric, row.mean_seconds, row.failures
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Synthetic completion sweep: `trials` random instances of one setting,
/// solved by the selected solver(s). Writes one trace CSV per trial and a
/// summary CSV; the metric is the relative error against the clean tensor
/// for noiseless runs and the range-normalized RMS error on the unobserved
/// entries for noisy runs. Divergent trials are counted as failures and
/// excluded from the means.
pub fn run_synthetic(settings: &Settings) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let setting = setting_id(settings);
    let ranks = NRank::new(settings.ranks.clone());
    let mut rows = Vec::new();

    for choice in solvers_to_run(settings.solver) {
        let name = solver_name(choice);
        let mut iterations = Vec::new();
        let mut metrics = Vec::new();
        let mut final_ranks = Vec::new();
        let mut seconds = Vec::new();
        let mut failures = 0usize;

        for trial in 0..settings.trials {
            let seed = settings.seed.wrapping_add(trial as u64);
            let inst = make_instance(&settings.shape, &ranks, settings.sr, settings.sigma, seed)?;
            if settings.save_fixtures {
                let mut tensor_file = fs::File::create(
                    settings.out.join(format!("{setting}_t{trial}_truth.tensor")),
                )?;
                inst.ground_truth.write_to(&mut tensor_file)?;
                let mut omega_file = fs::File::create(
                    settings.out.join(format!("{setting}_t{trial}_omega.txt")),
                )?;
                inst.operator.write_to(&mut omega_file)?;
            }
            let started = Instant::now();
            match run_one(settings, choice, &inst.operator, &inst.b, false) {
                Ok(res) => {
                    let elapsed = started.elapsed().as_secs_f64();
                    let metric = if settings.sigma > 0.0 {
                        nrmse(&res.solution, &inst.ground_truth, &inst.operator)?
                    } else {
                        rel_err(&res.solution, &inst.ground_truth)?
                    };
                    let trace_path = settings
                        .out
                        .join(format!("trace_{setting}_{name}_t{trial}.csv"));
                    let mut file = fs::File::create(&trace_path)
                        .with_context(|| format!("creating {}", trace_path.display()))?;
                    res.trace.write_csv(&mut file)?;
                    if !res.converged {
                        writeln!(file, "# iteration cap reached without convergence")?;
                    }
                    iterations.push(res.iterations);
                    metrics.push(metric);
                    final_ranks.push(res.final_rank.as_slice().to_vec());
                    seconds.push(elapsed);
                }
                Err(SolverError::Diverged { iteration, tau, .. }) => {
                    log::warn!(
                        "{setting} {name} trial {trial}: diverged at iteration {iteration} (tau {tau})"
                    );
                    failures += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }

        let n = iterations.len().max(1) as f64;
        rows.push(SummaryRow {
            setting: setting.clone(),
            solver: name,
            trials: settings.trials,
            failures,
            mean_iter: iterations.iter().sum::<usize>() as f64 / n,
            mean_metric: metrics.iter().sum::<f64>() / n,
            mean_seconds: seconds.iter().sum::<f64>() / n,
            iterations,
            metrics,
            final_ranks,
        });
    }

    write_summary_csv(&settings.out.join("summary.csv"), &rows)?;
    for row in &rows {
        println!(
            "{} {}: mean_iter {:.1}, mean_metric {:.3e}, failures {}/{}",
            row.setting, row.solver, row.mean_iter, row.mean_metric, row.failures, row.trials
        );
    }
    Ok(rows)
}

/// One (sr, tau) cell of the step-size study.
#[derive(Debug, Clone)]
pub struct TauRow {
    pub sr: f64,
    pub tau: f64,
    pub solver: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub mean_iter: f64,
    pub mean_rel_err: f64,
    pub mean_seconds: f64,
    pub iterations: Vec<usize>,
}

/// Step-size study over `settings.taus` and `settings.srs`. Divergent or
/// non-convergent trials are flagged in the CSV, never fatal. Defaults
/// reproduce the published protocol: a 20x20x30x30 tensor of rank
/// (4,4,4,4), ten trials per cell.
pub fn run_tau_sweep(settings: &Settings) -> Result<Vec<TauRow>> {
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let ranks = NRank::new(settings.ranks.clone());
    let choice = settings.solver.unwrap_or(SolverChoice::Ihtr);
    if choice == SolverChoice::Both {
        return Err(anyhow!("tau sweep runs one solver at a time"));
    }
    let mut rows = Vec::new();

    for &sr in &settings.srs {
        for &tau in &settings.taus {
            let mut cell = Settings {
                sr,
                tau,
                ..settings.clone()
            };
            cell.solver = Some(choice);
            let mut iterations = Vec::new();
            let mut errs = Vec::new();
            let mut seconds = Vec::new();
            let mut failures = 0usize;
            for trial in 0..settings.trials {
                let seed = settings.seed.wrapping_add(trial as u64);
                let inst = make_instance(&settings.shape, &ranks, sr, settings.sigma, seed)?;
                let started = Instant::now();
                match run_one(&cell, choice, &inst.operator, &inst.b, false) {
                    Ok(res) => {
                        let elapsed = started.elapsed().as_secs_f64();
                        iterations.push(res.iterations);
                        errs.push(rel_err(&res.solution, &inst.ground_truth)?);
                        seconds.push(elapsed);
                        if !res.converged {
                            log::warn!("tau {tau} sr {sr} trial {trial}: iteration cap reached");
                        }
                    }
                    Err(SolverError::Diverged { .. }) => failures += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            let n = iterations.len().max(1) as f64;
            rows.push(TauRow {
                sr,
                tau,
                solver: solver_name(choice),
                trials: settings.trials,
                failures,
                mean_iter: iterations.iter().sum::<usize>() as f64 / n,
                mean_rel_err: errs.iter().sum::<f64>() / n,
                mean_seconds: seconds.iter().sum::<f64>() / n,
                iterations,
            });
        }
    }

    let mut csv = String::from("tau,sr,solver,mean_iter,mean_rel_err,mean_seconds,failures\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.3},{:.12e},{:.6},{}\n",
            row.tau, row.sr, row.solver, row.mean_iter, row.mean_rel_err, row.mean_seconds,
            row.failures
        ));
        println!(
            "tau {} sr {}: mean_iter {:.1}, mean_rel_err {:.3e}, failures {}/{}",
            row.tau, row.sr, row.mean_iter, row.mean_rel_err, row.failures, row.trials
        );
    }
    let path = settings.out.join("tau_sweep.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(rows)
}

/// One solver's outcome on the image pipeline.
#[derive(Debug, Clone)]
pub struct ImageRow {
    pub solver: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub cap_hit: bool,
    pub rel_err: f64,
    pub seconds: f64,
}

/// Image inpainting: load, reduce to the target ranks by alternating
/// per-mode truncation, mask, recover with the selected solver(s), and
/// export the recovered images plus a metrics CSV. The relative error is
/// measured against the rank-reduced target; hitting the iteration cap is
/// recorded, not an error.
pub fn run_image(settings: &Settings) -> Result<Vec<ImageRow>> {
    let input = settings
        .input
        .as_ref()
        .ok_or_else(|| anyhow!("image runs need --input pointing at a P6 pixmap"))?;
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;

    let file =
        fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let image = read_ppm(&mut std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", input.display()))?;
    let shape = image.shape().to_vec();
    if settings.ranks.len() != shape.len() {
        return Err(anyhow!(
            "ranks {:?} do not match image shape {shape:?}",
            settings.ranks
        ));
    }

    let ranks = NRank::new(settings.ranks.clone());
    let target = best_nrank_preprocess(&image, &ranks, settings.sweeps)?;
    let mut target_file = fs::File::create(settings.out.join("target.ppm"))?;
    write_ppm(&target, &mut target_file)?;

    let op = sample_omega(&shape, settings.sr, settings.seed)?;
    let b = op.apply(&target)?;
    if settings.save_fixtures {
        let mut omega_file = fs::File::create(settings.out.join("omega.txt"))?;
        op.write_to(&mut omega_file)?;
    }

    // the masked input, unobserved pixels black
    let masked = op.adjoint(&b)?;
    let mut masked_file = fs::File::create(settings.out.join("input_masked.ppm"))?;
    write_ppm(&masked, &mut masked_file)?;

    let image_settings = Settings {
        shape: shape.clone(),
        ..settings.clone()
    };
    let mut rows = Vec::new();
    for choice in solvers_to_run(settings.solver) {
        let name = solver_name(choice);
        let started = Instant::now();
        match run_one(&image_settings, choice, &op, &b, true) {
            Ok(res) => {
                let seconds = started.elapsed().as_secs_f64();
                let err = rel_err(&res.solution, &target)?;
                let mut rec =
                    fs::File::create(settings.out.join(format!("recovered_{name}.ppm")))?;
                write_ppm(&res.solution, &mut rec)?;
                println!(
                    "image {name}: iters {}, rel_err {:.3e}, converged {}",
                    res.iterations, err, res.converged
                );
                rows.push(ImageRow {
                    solver: name,
                    iterations: res.iterations,
                    converged: res.converged,
                    cap_hit: !res.converged && res.iterations == settings.max_iter,
                    rel_err: err,
                    seconds,
                });
            }
            Err(SolverError::Diverged { iteration, tau, .. }) => {
                log::warn!("image {name}: diverged at iteration {iteration} (tau {tau})");
                rows.push(ImageRow {
                    solver: name,
                    iterations: iteration,
                    converged: false,
                    cap_hit: false,
                    rel_err: f64::NAN,
                    seconds: started.elapsed().as_secs_f64(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut csv = String::from("solver,iterations,converged,cap_hit,rel_err,seconds\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.12e},{:.6}\n",
            row.solver, row.iterations, row.converged, row.cap_hit, row.rel_err, row.seconds
        ));
    }
    let path = settings.out.join("image_metrics.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(rows)
}

/// Writes the built-in synthetic test image.
pub fn run_gen_image(settings: &Settings, size: usize) -> Result<std::path::PathBuf> {
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    let image = crate::testimage::synthetic_image(size)?;
    let path = settings.out.join(format!("test_image_{size}.ppm"));
    let mut file = fs::File::create(&path)?;
    write_ppm(&image, &mut file)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Per-iteration error trace against a known ground truth, for convergence
/// diagnostics. Drives the public single-step operation.
pub fn error_trace(
    settings: &Settings,
    inst: &problems::ProblemInstance,
    max_steps: usize,
) -> Result<Vec<f64>> {
    let cfg = solver_config(settings, SolverChoice::Ihtr, false);
    let mut x = DenseTensor::zeros(&settings.shape)?;
    let mut errs = Vec::new();
    for _ in 0..max_steps {
        x = lrtc_core::solver::iht_step(&x, &inst.operator, &inst.b, &inst.true_rank, &cfg)?;
        let e = rel_err(&x, &inst.ground_truth)?;
        errs.push(e);
        if e < 1e-12 {
            break;
        }
    }
    Ok(errs)
}
