use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{clusters_from_blocks, BeamformerSolution, DcConfig, QosProblem, Surrogate};
use crate::conic;
use crate::error::{Error, Result};

/// Diagnostics for one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub objective: f64,
    /// `tr(W_m)` per group.
    pub group_power: Vec<f64>,
    /// Cluster size per group at the configured threshold.
    pub cluster_sizes: Vec<usize>,
}

/// Minimum total power subject to the QoS and per-BS power constraints.
/// Returns the optimal matrices and the optimal value.
pub fn solve_p_ini(problem: &QosProblem, tol: f64) -> Result<(Vec<DMatrix<Complex64>>, f64)> {
    let n = problem.dim();
    let obj = vec![DMatrix::<Complex64>::identity(n, n); problem.num_groups()];
    let sdp = problem.assemble(&obj, None)?;
    let sol = conic::solve(&sdp, tol)?.into_optimal()?;
    Ok((sol.blocks, sol.objective_value))
}

fn block_powers(problem: &QosProblem, w: &[DMatrix<Complex64>]) -> DMatrix<f64> {
    let sel = &problem.selectors;
    DMatrix::from_fn(sel.num_bs, w.len(), |l, m| sel.block_power(&w[m], l).max(0.0))
}

/// `eta sum_m tr(W_m) + sum_{l,m} alpha_lm penalty(tr(W_m J_l))`.
fn smoothed_objective(
    problem: &QosProblem,
    w: &[DMatrix<Complex64>],
    alpha: &DMatrix<f64>,
    eta: f64,
    s: &Surrogate,
) -> f64 {
    let x = block_powers(problem, w);
    let power: f64 = w.iter().map(|b| b.trace().re).sum();
    let backhaul: f64 = x.iter().zip(alpha.iter()).map(|(x, a)| if *a == 0.0 { 0.0 } else { a * s.penalty(*x) }).sum();
    eta * power + backhaul
}

fn record(problem: &QosProblem, w: &[DMatrix<Complex64>], objective: f64, threshold: f64) -> IterationRecord {
    IterationRecord {
        objective,
        group_power: w.iter().map(|b| b.trace().re).collect(),
        cluster_sizes: clusters_from_blocks(&problem.selectors, w, threshold)
            .iter()
            .map(Vec::len)
            .collect(),
    }
}

/// Reweighted iteration on the smoothed relaxation.
///
/// Starts from the minimum-power point. Each step linearizes the concave
/// backhaul penalty at the previous iterate and solves
///
/// ```text
/// minimize  eta sum_m tr(W_m) + sum_{l,m} alpha_lm weight(x_lm) tr(W_m J_l)
/// ```
///
/// under the QoS constraints. Constant terms of the linearization are left
/// out of the subproblem; the recorded trace is the smoothed objective at
/// each iterate. Stops when the decrease falls below `cfg.rho`.
pub fn dc_solve(problem: &QosProblem, alpha: &DMatrix<f64>, cfg: &DcConfig) -> Result<BeamformerSolution> {
    cfg.validate()?;
    let (l_bs, m_groups) = (problem.selectors.num_bs, problem.num_groups());
    if alpha.nrows() != l_bs || alpha.ncols() != m_groups {
        return Err(Error::Dimension(format!(
            "alpha is {}x{}, expected {l_bs}x{m_groups}",
            alpha.nrows(),
            alpha.ncols()
        )));
    }
    if alpha.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::Domain("backhaul weights must be nonnegative".into()));
    }
    let s = cfg.surrogate();
    let (w0, v_ini) = solve_p_ini(problem, cfg.solver_tol)?;
    let v0 = smoothed_objective(problem, &w0, alpha, cfg.eta, &s);
    let mut trace = vec![v0];
    let mut history = vec![record(problem, &w0, v0, cfg.cluster_threshold)];
    let mut w = w0;
    let mut converged = false;
    let mut iterations = 0;
    let n = problem.dim();

    for _ in 0..cfg.max_iters {
        let x = block_powers(problem, &w);
        let objective: Vec<DMatrix<Complex64>> = (0..m_groups)
            .map(|m| {
                let diag: Vec<Complex64> = (0..n)
                    .map(|i| {
                        let l = i / problem.selectors.antennas_per_bs;
                        let a = alpha[(l, m)];
                        let wt = if a == 0.0 { 0.0 } else { a * s.weight(x[(l, m)]) };
                        Complex64::new(cfg.eta + wt, 0.0)
                    })
                    .collect();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
            })
            .collect();
        let sdp = problem.assemble(&objective, None)?;
        let sol = conic::solve(&sdp, cfg.solver_tol)?.into_optimal()?;
        iterations += 1;
        let v = smoothed_objective(problem, &sol.blocks, alpha, cfg.eta, &s);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(v);
        history.push(record(problem, &sol.blocks, v, cfg.cluster_threshold));
        w = sol.blocks;
        if prev - v < cfg.rho {
            converged = true;
            break;
        }
    }

    let clusters = clusters_from_blocks(&problem.selectors, &w, cfg.cluster_threshold);
    let is_rank_one = w.iter().map(|b| super::rank_one_check(b, cfg.rank_tol)).collect();
    Ok(BeamformerSolution {
        w_blocks: w,
        beamformers: None,
        clusters,
        trace,
        history,
        v_ini,
        sdr_bound: None,
        is_rank_one,
        iterations,
        converged,
    })
}

/// Tab-separated per-iterate trace: index, objective, `tr(W_m)` per group,
/// cluster size per group.
pub fn trace_lines(sol: &BeamformerSolution) -> String {
    let mut out = String::new();
    for (t, r) in sol.history.iter().enumerate() {
        let _ = write!(out, "{t}\t{:.12e}", r.objective);
        for p in &r.group_power {
            let _ = write!(out, "\t{p:.12e}");
        }
        for c in &r.cluster_sizes {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
    }
    out
}
