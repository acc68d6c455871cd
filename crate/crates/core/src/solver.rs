//! Iterative hard thresholding for minimum n-rank approximation.
//!
//! One iteration takes a gradient step on the measurement residual,
//! `Y = X - tau * A*(A(X) - b)`, hard-thresholds every mode unfolding of `Y`
//! to its per-mode rank bound, and recombines the refolded matrices as a
//! weighted average. With rank bounds given this is the fixed-rank solver;
//! the heuristic variant starts from half the mode lengths and re-estimates
//! the bounds from the singular spectra of the previous gradient step.

use std::io::{self, Write};
use std::time::Instant;

use thiserror::Error;

use crate::linalg::{self, LinalgError, SketchConfig};
use crate::operators::{MeasurementOperator, OperatorError};
use crate::tensor::{fold, frobenius_norm, unfold, DenseTensor, NRank, TensorError};

/// Extra spectrum values inspected past the current rank bound so the
/// census can see junk beyond it (and the sketch has spectrum to return).
const CENSUS_MARGIN: usize = 5;

/// The census cut is raised to this multiple of the smallest inspected
/// singular value beyond the current bound. That value sits in the noise
/// continuum of the unfolding (sampling fluctuation, not signal), so values
/// below the multiple are indistinguishable from noise; once the iterate
/// cleans up, the floor vanishes and the cut reduces to `xi` times the
/// leading value, the plain census rule.
const CENSUS_FLOOR_FACTOR: f64 = 2.5;

/// Rank bounds may shrink only while the fit is good: relative residual
/// below this gate marks the overfitting regime.
const SHRINK_GATE: f64 = 0.02;

/// Rank bounds grow when the iteration gives up on a fit worse than this
/// gate: the current bounds cannot explain the measurements. Must sit
/// above the relative residual floor that measurement noise induces.
const GROW_GATE: f64 = 0.03;

/// Relative change this much smaller than the relative residual means the
/// iterate is settling on a point that does not fit the measurements.
const HOPELESS_STEP_RATIO: f64 = 1e-2;

/// Relative-change decay slower than this ratio over consecutive
/// iterations counts as a stall.
const STALL_RATIO: f64 = 0.95;

/// A stalled overfit (tiny residual, no census signal) probes one rank
/// lower only while the relative change is still this many multiples of
/// the stopping tolerance away from convergence.
const PROBE_TOL_MULTIPLE: f64 = 1e3;

/// Once the bounds interpolate the measurements this deeply, the fit says
/// nothing more; the only way to tell a spurious interpolant from the true
/// tensor is to trim the bounds and watch whether the fit recovers.
const DEEP_PROBE_GATE: f64 = 1e-4;

/// Iterations between rank adjustments, so every probe is judged on a
/// refitted iterate rather than on its own transient.
const PROBE_COOLDOWN: usize = 8;

/// The census must report the same target this many times in a row before
/// a shrink acts on it; spectra near a threshold boundary jitter.
const CENSUS_CONFIRM: usize = 2;

/// Relative change beyond which the iteration is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("iteration {iteration} diverged (tau = {tau}): {detail}")]
    Diverged {
        iteration: usize,
        tau: f64,
        detail: String,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which SVD backend the per-mode thresholding uses.
#[derive(Debug, Clone, PartialEq)]
pub enum SvdStrategy {
    /// Exact truncated SVD.
    Exact,
    /// Monte-Carlo column-sampling SVD; `seed` fixes all draws. Each
    /// invocation within a solve derives its own sub-seed from the
    /// iteration and mode indices.
    Sketch { seed: u64 },
}

/// Whether the per-mode rank bounds are given or predicted.
#[derive(Debug, Clone, PartialEq)]
pub enum RankMode {
    Fixed(NRank),
    /// Predict ranks: keep the singular values of each unfolding above
    /// `xi` times its largest one, growing by one whenever the gradient
    /// norm increases.
    Heuristic { xi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Gradient step size. Values outside (1/2, 3/2) are accepted with a
    /// warning; the iteration is only guaranteed to contract inside it.
    pub tau: f64,
    /// Per-mode combination weights; `None` means uniform `1/N`.
    pub weights: Option<Vec<f64>>,
    /// Relative-change stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
    pub svd_strategy: SvdStrategy,
    pub rank_mode: RankMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1.4,
            weights: None,
            tol: 1e-8,
            max_iter: 5000,
            svd_strategy: SvdStrategy::Exact,
            rank_mode: RankMode::Heuristic { xi: 1e-2 },
        }
    }
}

impl SolverConfig {
    pub fn fixed(ranks: NRank) -> Self {
        Self {
            rank_mode: RankMode::Fixed(ranks),
            ..Self::default()
        }
    }

    pub fn heuristic(xi: f64) -> Self {
        Self {
            rank_mode: RankMode::Heuristic { xi },
            ..Self::default()
        }
    }

    fn validate(&self, order: usize) -> Result<Vec<f64>, SolverError> {
        if !(self.tau > 0.0) {
            return Err(SolverError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.tau <= 0.5 || self.tau >= 1.5 {
            log::warn!(
                "tau = {} lies outside the contraction band (1/2, 3/2)",
                self.tau
            );
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SolverError::Config("max_iter must be at least 1".into()));
        }
        if let RankMode::Heuristic { xi } = self.rank_mode {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(SolverError::Config(format!(
                    "heuristic threshold xi must lie in (0, 1), got {xi}"
                )));
            }
        }
        match &self.weights {
            None => Ok(vec![1.0 / order as f64; order]),
            Some(w) => {
                if w.len() != order {
                    return Err(SolverError::Config(format!(
                        "{} weights for an order-{order} tensor",
                        w.len()
                    )));
                }
                if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(SolverError::Config("weights must lie in [0, 1]".into()));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(SolverError::Config(format!(
                        "weights sum to {sum}, expected 1"
                    )));
                }
                Ok(w.clone())
            }
        }
    }
}

/// Per-iteration diagnostics. `seconds` is cumulative wall time since the
/// solve started.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub rel_change: Vec<f64>,
    pub residual_norm: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub ranks: Vec<Vec<usize>>,
    pub seconds: Vec<f64>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.rel_change.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rel_change.is_empty()
    }

    fn push(&mut self, rel: f64, residual: f64, grad: f64, ranks: Vec<usize>, seconds: f64) {
        self.rel_change.push(rel);
        self.residual_norm.push(residual);
        self.grad_norm.push(grad);
        self.ranks.push(ranks);
        self.seconds.push(seconds);
    }

    /// CSV with header `iter,rel_change,residual,grad_norm,r_1..r_N,seconds`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let order = self.ranks.first().map_or(0, Vec::len);
        let rank_cols: Vec<String> = (1..=order).map(|i| format!("r_{i}")).collect();
        writeln!(w, "iter,rel_change,residual,grad_norm,{},seconds", rank_cols.join(","))?;
        for k in 0..self.len() {
            let ranks: Vec<String> = self.ranks[k].iter().map(|r| r.to_string()).collect();
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{},{:.6}",
                k + 1,
                self.rel_change[k],
                self.residual_norm[k],
                self.grad_norm[k],
                ranks.join(","),
                self.seconds[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub solution: DenseTensor,
    pub iterations: usize,
    pub converged: bool,
    pub final_rank: NRank,
    pub trace: SolverTrace,
}

/// Stopping rule: `|x_next - x_prev|_F / max(1, |x_prev|_F) < tol`, strict.
pub fn stopping_check(x_prev: &DenseTensor, x_next: &DenseTensor, tol: f64) -> bool {
    relative_change(x_prev, x_next) < tol
}

fn relative_change(x_prev: &DenseTensor, x_next: &DenseTensor) -> f64 {
    let diff: f64 = x_prev
        .data()
        .iter()
        .zip(x_next.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    diff.sqrt() / frobenius_norm(x_prev).max(1.0)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hard-thresholds every mode unfolding of `y` and recombines the foldings
/// with `weights`. Returns the combined tensor and the per-mode singular
/// spectra that the rank census inspects. `spectrum_depth[i] > ranks[i]`
/// asks the sketch for extra values; the exact path always yields the full
/// spectrum.
fn threshold_modes(
    y: &DenseTensor,
    ranks: &[usize],
    weights: &[f64],
    strategy: &SvdStrategy,
    spectrum_depth: &[usize],
    seed_offset: u64,
) -> Result<(DenseTensor, Vec<Vec<f64>>), SolverError> {
    let shape = y.shape();
    let mut combined = DenseTensor::zeros(shape)?;
    let mut spectra = Vec::with_capacity(shape.len());
    for mode in 0..shape.len() {
        let unfolded = unfold(y, mode)?;
        let r = ranks[mode];
        let (truncated, spectrum) = match strategy {
            SvdStrategy::Exact => linalg::hard_threshold_with_spectrum(&unfolded, r)?,
            SvdStrategy::Sketch { seed } => {
                let pairs = spectrum_depth[mode]
                    .max(1)
                    .min(unfolded.rows().min(unfolded.cols()))
                    .min(unfolded.cols());
                let cfg = SketchConfig::default_for(
                    unfolded.rows(),
                    unfolded.cols(),
                    pairs,
                    seed.wrapping_add(seed_offset)
                        .wrapping_add(mode as u64),
                );
                let svd = linalg::linear_time_svd(&unfolded, &cfg)?;
                let truncated = if r == 0 {
                    crate::tensor::DenseMatrix::zeros(unfolded.rows(), unfolded.cols())
                } else {
                    linalg::project_onto_left(&unfolded, &svd, r)?
                };
                (truncated, svd.singular_values)
            }
        };
        if weights[mode] != 0.0 {
            let folded = fold(&truncated, mode, shape)?;
            combined = combined.axpy(weights[mode], &folded)?;
        }
        spectra.push(spectrum);
    }
    Ok((combined, spectra))
}

/// One iteration of the hard-thresholding scheme:
/// `Y = x - tau * A*(A(x) - b)`, then the weighted recombination of the
/// per-mode rank-`r_i` truncations of the unfoldings of `Y`.
pub fn iht_step(
    x: &DenseTensor,
    op: &dyn MeasurementOperator,
    b: &[f64],
    ranks: &NRank,
    cfg: &SolverConfig,
) -> Result<DenseTensor, SolverError> {
    let weights = cfg.validate(x.order())?;
    ranks.validate_for(x.shape())?;
    let mut residual = op.apply(x)?;
    if residual.len() != b.len() {
        return Err(SolverError::Operator(OperatorError::LengthMismatch {
            expected: residual.len(),
            got: b.len(),
        }));
    }
    for (r, &bi) in residual.iter_mut().zip(b) {
        *r -= bi;
    }
    let grad = op.adjoint(&residual)?;
    let y = x.axpy(-cfg.tau, &grad)?;
    check_finite_iterate(&y, 0, cfg.tau)?;
    let (next, _) = threshold_modes(
        &y,
        ranks.as_slice(),
        &weights,
        &cfg.svd_strategy,
        ranks.as_slice(),
        0,
    )?;
    Ok(next)
}

fn check_finite_iterate(t: &DenseTensor, iteration: usize, tau: f64) -> Result<(), SolverError> {
    if t.data().iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Diverged {
            iteration,
            tau,
            detail: "non-finite iterate".into(),
        });
    }
    Ok(())
}

/// Fixed-rank solve from the zero start until the relative change drops
/// below `cfg.tol` or `cfg.max_iter` is reached. Non-convergence at the cap
/// is reported through `converged = false`, not an error.
pub fn solve_fixed_rank(
    op: &dyn MeasurementOperator,
    b: &[f64],
    ranks: &NRank,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    run_loop(op, b, cfg, Some(ranks))
}

/// Unknown-rank solve: starts from rank bounds of half each mode length and
/// adjusts them from the singular spectra of the gradient-step unfoldings.
///
/// Every iteration counts, among the leading `r_i (+ margin)` singular
/// values of the previous gradient-step unfolding, those above `xi` times
/// the largest (raised to a noise-calibrated cut while the spectrum still
/// carries sampling noise). While the measurements are well fit the bounds
/// walk down toward that count, probing one step lower when the iteration
/// stalls without a census signal; when the measurements cannot be fit and
/// the iteration stalls, every bound grows by one, capped at
/// `min(n_i, T_i)`. Shrinking applies before growing within an iteration.
pub fn solve_heuristic_rank(
    op: &dyn MeasurementOperator,
    b: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    if !matches!(cfg.rank_mode, RankMode::Heuristic { .. }) {
        return Err(SolverError::Config(
            "solve_heuristic_rank needs rank_mode = Heuristic".into(),
        ));
    }
    run_loop(op, b, cfg, None)
}

/// Dispatches on `cfg.rank_mode`.
pub fn solve(
    op: &dyn MeasurementOperator,
    b: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    match &cfg.rank_mode {
        RankMode::Fixed(ranks) => solve_fixed_rank(op, b, &ranks.clone(), cfg),
        RankMode::Heuristic { .. } => solve_heuristic_rank(op, b, cfg),
    }
}

fn run_loop(
    op: &dyn MeasurementOperator,
    b: &[f64],
    cfg: &SolverConfig,
    fixed_ranks: Option<&NRank>,
) -> Result<SolverResult, SolverError> {
    let shape = op.shape().to_vec();
    let order = shape.len();
    let weights = cfg.validate(order)?;
    if b.len() != op.measurement_len() {
        return Err(SolverError::Operator(OperatorError::LengthMismatch {
            expected: op.measurement_len(),
            got: b.len(),
        }));
    }

    let total: usize = shape.iter().product();
    let caps: Vec<usize> = shape.iter().map(|&n| n.min(total / n)).collect();

    let heuristic_xi = match (&cfg.rank_mode, fixed_ranks) {
        (_, Some(ranks)) => {
            ranks.validate_for(&shape)?;
            None
        }
        (RankMode::Heuristic { xi }, None) => Some(*xi),
        (RankMode::Fixed(_), None) => {
            return Err(SolverError::Config(
                "fixed rank mode requires explicit rank bounds".into(),
            ))
        }
    };

    let mut ranks: Vec<usize> = match fixed_ranks {
        Some(r) => r.as_slice().to_vec(),
        None => shape.iter().map(|&n| n.div_ceil(2)).collect(),
    };
    // Heuristic start can exceed the column bound of an unbalanced mode.
    for (r, &cap) in ranks.iter_mut().zip(&caps) {
        *r = (*r).min(cap);
    }

    let census_margin = if heuristic_xi.is_some() {
        CENSUS_MARGIN
    } else {
        0
    };

    let mut x = DenseTensor::zeros(&shape)?;
    let mut trace = SolverTrace::default();
    let mut pending_census: Option<Vec<usize>> = None;
    let mut converged = false;
    let mut iterations = 0;
    let b_norm = l2(b).max(f64::MIN_POSITIVE);
    let mut stall_streak = 0usize;
    let mut prev_rel_change: Option<f64> = None;
    // rank-adaptation state: probes may not take a mode below its floor
    // (a level that already failed to refit), and wait out a cooldown so
    // each change is judged on refitted evidence
    let mut floors = vec![0usize; order];
    let mut last_rank_change = 0usize;
    let mut census_streak = 0usize;
    let mut last_census: Option<Vec<usize>> = None;
    let start = Instant::now();

    for k in 1..=cfg.max_iter {
        iterations = k;

        let mut residual = op.apply(&x)?;
        for (r, &bi) in residual.iter_mut().zip(b) {
            *r -= bi;
        }
        let residual_norm = l2(&residual);
        let grad = op.adjoint(&residual)?;
        let grad_norm = frobenius_norm(&grad);

        if heuristic_xi.is_some() && k >= 2 {
            let residual_rel = residual_norm / b_norm;
            let stalled = stall_streak >= 2;
            let cooled = k - last_rank_change >= PROBE_COOLDOWN;
            let above_tol_floor =
                prev_rel_change.is_some_and(|r| r > PROBE_TOL_MULTIPLE * cfg.tol);
            log::trace!(
                "iteration {k}: ranks {ranks:?}, relative residual {residual_rel:.3e}, \
                 stall streak {stall_streak}, floors {floors:?}, census {pending_census:?}"
            );

            let census = pending_census.take();
            if let Some(c) = &census {
                if last_census.as_ref() == Some(c) {
                    census_streak += 1;
                } else {
                    census_streak = 1;
                }
                last_census = Some(c.clone());
            }

            let before = ranks.clone();
            if residual_rel < SHRINK_GATE {
                // Overfitting regime: walk the bounds down, halving the
                // distance to a confirmed census target per step.
                if let Some(census) = census {
                    if census_streak >= CENSUS_CONFIRM {
                        for (r, target) in ranks.iter_mut().zip(census) {
                            if target < *r {
                                *r -= (*r - target).div_ceil(2);
                            }
                        }
                    }
                }
                let census_acted = ranks != before;
                // No census signal: probe one step down anyway, either on
                // a stall or once the fit is deep enough to be vacuous.
                // Floors mark levels that already failed to refit.
                let stall_probe = stalled && above_tol_floor;
                let deep_probe = residual_rel < DEEP_PROBE_GATE;
                if !census_acted && cooled && (stall_probe || deep_probe) {
                    for (r, &floor) in ranks.iter_mut().zip(&floors) {
                        if *r > floor.max(1) {
                            *r -= 1;
                        }
                    }
                }
            } else if residual_rel > GROW_GATE {
                // A stall, or steps tiny next to the residual, means the
                // iterate is settling without explaining the measurements:
                // grow, and remember the recovered levels as probe floors.
                let hopeless = prev_rel_change
                    .is_some_and(|r| r < HOPELESS_STEP_RATIO * residual_rel);
                if stalled || hopeless {
                    for (mode, (r, &cap)) in ranks.iter_mut().zip(&caps).enumerate() {
                        if *r < cap {
                            *r += 1;
                        } else {
                            log::debug!(
                                "rank growth capped at {cap} for mode {mode} (iteration {k})"
                            );
                        }
                    }
                    for (floor, &r) in floors.iter_mut().zip(&ranks) {
                        *floor = (*floor).max(r);
                    }
                    stall_streak = 0;
                }
            }
            if ranks != before {
                last_rank_change = k;
            }
        }

        let y = x.axpy(-cfg.tau, &grad)?;
        check_finite_iterate(&y, k, cfg.tau)?;

        // The census inspects only the leading values of each spectrum: the
        // current bound for the exact path (matching an SVD computed with
        // sv = r_i), plus a small margin for the sketch so the threshold
        // has spectrum beyond the bound to look at.
        let windows: Vec<usize> = ranks
            .iter()
            .zip(&caps)
            .map(|(&r, &cap)| (r + census_margin).min(cap).max(1))
            .collect();
        let (x_next, spectra) = match threshold_modes(
            &y,
            &ranks,
            &weights,
            &cfg.svd_strategy,
            &windows,
            (k as u64) * (order as u64),
        ) {
            Ok(v) => v,
            Err(SolverError::Linalg(LinalgError::NonFinite(_)))
            | Err(SolverError::Tensor(TensorError::NonFinite(_))) => {
                return Err(SolverError::Diverged {
                    iteration: k,
                    tau: cfg.tau,
                    detail: "non-finite values while thresholding".into(),
                })
            }
            Err(e) => return Err(e),
        };

        if let Some(xi) = heuristic_xi {
            let census: Vec<usize> = spectra
                .iter()
                .zip(ranks.iter().zip(&windows))
                .zip(&caps)
                .map(|((sigma, (&r, &window)), &cap)| {
                    let inspected = &sigma[..window.min(sigma.len())];
                    let lead = inspected.first().copied().unwrap_or(0.0);
                    // Noise calibration uses only values past the current
                    // bound; with none visible the plain xi rule applies.
                    let floor = if inspected.len() > r {
                        inspected.last().copied().unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    let cut = (xi * lead).max(CENSUS_FLOOR_FACTOR * floor);
                    inspected
                        .iter()
                        .filter(|&&s| s > cut && s > 0.0)
                        .count()
                        .min(cap)
                })
                .collect();
            pending_census = Some(census);
        }

        let rel = relative_change(&x, &x_next);
        if !rel.is_finite() || rel > DIVERGENCE_LIMIT {
            return Err(SolverError::Diverged {
                iteration: k,
                tau: cfg.tau,
                detail: format!("relative change {rel:.3e}"),
            });
        }
        check_finite_iterate(&x_next, k, cfg.tau)?;

        trace.push(
            rel,
            residual_norm,
            grad_norm,
            ranks.clone(),
            start.elapsed().as_secs_f64(),
        );

        let stop = stopping_check(&x, &x_next, cfg.tol);
        x = x_next;
        if let Some(prev) = prev_rel_change {
            if rel > STALL_RATIO * prev {
                stall_streak += 1;
            } else {
                stall_streak = 0;
            }
        }
        prev_rel_change = Some(rel);
        if stop {
            converged = true;
            break;
        }
    }

    Ok(SolverResult {
        solution: x,
        iterations,
        converged,
        final_rank: NRank::new(ranks),
        trace,
    })
}
