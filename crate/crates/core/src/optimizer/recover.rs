//! Reading beamformers back out of the relaxed matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{DcConfig, QosProblem, SelectorMatrices};
use crate::conic::{self, Constraint, LinearSdp, Sense};
use crate::error::{Error, Result};
use crate::experiments::{network_cost, CostReport};
use crate::rng::{trial_rng, Stream};

/// Relative slack allowed on SINR and power checks.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Eigenpairs sorted by decreasing eigenvalue.
fn eigen_desc(w: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let herm = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let e = SymmetricEigen::new(herm);
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(w.nrows(), idx.len(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// `true` when `lambda_2 / lambda_1 <= rank_tol` (or the matrix is zero).
pub fn rank_one_check(w: &DMatrix<Complex64>, rank_tol: f64) -> bool {
    if w.nrows() <= 1 {
        return true;
    }
    let (vals, _) = eigen_desc(w);
    if vals[0] <= 0.0 {
        return true;
    }
    vals[1] / vals[0] <= rank_tol
}

/// Rotates `v` so its first significant entry is real and nonnegative.
fn fix_phase(v: &mut DVector<Complex64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12 * max).copied() {
        let rot = z.conj() / z.norm();
        v.iter_mut().for_each(|x| *x *= rot);
    }
}

/// `sqrt(lambda_1) v_1` for a numerically rank-one `W`.
pub fn extract_rank_one(w: &DMatrix<Complex64>, rank_tol: f64) -> Result<DVector<Complex64>> {
    if !rank_one_check(w, rank_tol) {
        return Err(Error::Contract("rank-one extraction on a matrix of higher rank".into()));
    }
    let (vals, vecs) = eigen_desc(w);
    if vals[0] <= 0.0 {
        return Ok(DVector::zeros(w.nrows()));
    }
    let mut v: DVector<Complex64> = vecs.column(0).into_owned() * Complex64::new(vals[0].sqrt(), 0.0);
    fix_phase(&mut v);
    Ok(v)
}

/// BSs whose block power `tr(W_m J_l)` exceeds `threshold`, per group.
pub fn clusters_from_blocks(sel: &SelectorMatrices, w: &[DMatrix<Complex64>], threshold: f64) -> Vec<Vec<usize>> {
    w.iter()
        .map(|b| (0..sel.num_bs).filter(|&l| sel.block_power(b, l) > threshold).collect())
        .collect()
}

/// BSs whose sub-vector power `||w_lm||^2` exceeds `threshold`, per group.
pub fn clusters_from_vectors(sel: &SelectorMatrices, w: &[DVector<Complex64>], threshold: f64) -> Vec<Vec<usize>> {
    w.iter()
        .map(|v| (0..sel.num_bs).filter(|&l| sel.vector_block_power(v, l) > threshold).collect())
        .collect()
}

/// Zeroes every BS block at or below `threshold`.
fn zero_small_blocks(sel: &SelectorMatrices, w: &[DVector<Complex64>], threshold: f64) -> Vec<DVector<Complex64>> {
    w.iter()
        .map(|v| {
            let mut v = v.clone();
            for l in 0..sel.num_bs {
                if sel.vector_block_power(&v, l) <= threshold {
                    for i in sel.range(l) {
                        v[i] = Complex64::new(0.0, 0.0);
                    }
                }
            }
            v
        })
        .collect()
}

/// Scales all beamformers by the smallest common factor that lifts every
/// SINR to its target. `None` when scaling cannot help.
fn polish(problem: &QosProblem, w: &[DVector<Complex64>]) -> Option<Vec<DVector<Complex64>>> {
    let group_of = problem.groups.group_of_user();
    let sigma2 = problem.channels.noise_power;
    let mut c2: f64 = 1.0;
    for (k, h) in problem.channels.h.iter().enumerate() {
        let m = group_of[k];
        let gamma = problem.groups.groups[m].sinr_target;
        let gains: Vec<f64> = w.iter().map(|wm| h.dotc(wm).norm_sqr()).collect();
        let interference: f64 = gains.iter().enumerate().filter(|(n, _)| *n != m).map(|(_, g)| g).sum();
        let margin = gains[m] - gamma * interference;
        if margin <= 0.0 {
            return None;
        }
        c2 = c2.max(gamma * sigma2 / margin);
    }
    if c2 <= 1.0 {
        return Some(w.to_vec());
    }
    let c = Complex64::new((c2 * (1.0 + 1e-12)).sqrt(), 0.0);
    Some(w.iter().map(|v| v * c).collect())
}

/// Thresholds small blocks, restores SINR by scaling, and checks
/// feasibility. Falls back to the un-thresholded vectors when zeroing
/// breaks the QoS. Returns the vectors and whether the fallback was taken.
fn finalize(problem: &QosProblem, w: &[DVector<Complex64>], threshold: f64) -> Option<(Vec<DVector<Complex64>>, bool)> {
    let zeroed = zero_small_blocks(&problem.selectors, w, threshold);
    if let Some(p) = polish(problem, &zeroed) {
        if problem.is_feasible(&p, FEASIBILITY_TOL) {
            return Some((p, false));
        }
    }
    let p = polish(problem, w)?;
    problem.is_feasible(&p, FEASIBILITY_TOL).then_some((p, true))
}

/// Minimum-power scaling of fixed unit directions `u`: minimizes
/// `sum_m beta_m ||u_m||^2` subject to every SINR target and per-BS budget.
/// `Ok(None)` when no scaling is feasible.
pub fn power_control(problem: &QosProblem, u: &[DVector<Complex64>], tol: f64) -> Result<Option<Vec<f64>>> {
    let m_groups = u.len();
    if m_groups != problem.num_groups() {
        return Err(Error::Dimension(format!("{m_groups} directions for {} groups", problem.num_groups())));
    }
    let scalar = |x: f64| DMatrix::from_element(1, 1, Complex64::new(x, 0.0));
    let group_of = problem.groups.group_of_user();
    let mut constraints = Vec::new();
    for (k, h) in problem.channels.h.iter().enumerate() {
        let m = group_of[k];
        let gamma = problem.groups.groups[m].sinr_target;
        let coeffs = (0..m_groups)
            .map(|n| {
                let g = h.dotc(&u[n]).norm_sqr();
                (n, scalar(if n == m { g } else { -gamma * g }))
            })
            .collect();
        constraints.push(Constraint {
            coeffs,
            sense: Sense::Geq,
            rhs: gamma * problem.channels.noise_power,
        });
    }
    for (l, &p) in problem.power_budget.iter().enumerate() {
        let coeffs: Vec<_> = (0..m_groups)
            .map(|m| (m, problem.selectors.vector_block_power(&u[m], l)))
            .filter(|(_, v)| *v > 0.0)
            .map(|(m, v)| (m, scalar(v)))
            .collect();
        if !coeffs.is_empty() {
            constraints.push(Constraint {
                coeffs,
                sense: Sense::Leq,
                rhs: p,
            });
        }
    }
    let lp = LinearSdp {
        block_dims: vec![1; m_groups],
        objective: u.iter().map(|v| scalar(v.norm_squared())).collect(),
        constant: 0.0,
        constraints,
    };
    let sol = conic::solve(&lp, tol)?;
    match sol.status {
        conic::SdpStatus::Optimal => Ok(Some(sol.blocks.iter().map(|b| b[(0, 0)].re.max(0.0)).collect())),
        conic::SdpStatus::Infeasible => Ok(None),
        conic::SdpStatus::NumericalFailure => Err(Error::NumericalFailure("power-control LP".into())),
    }
}

/// Outcome of beamformer recovery.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub beamformers: Vec<DVector<Complex64>>,
    pub clusters: Vec<Vec<usize>>,
    pub cost: CostReport,
    /// Every group was rank-one and sampling was skipped.
    pub bypassed: bool,
    /// Thresholding broke the QoS and the un-thresholded vectors were kept.
    pub zeroing_fallback: bool,
    /// Candidates that produced a feasible point.
    pub feasible_candidates: usize,
    /// The winner came from the cluster-restricted power minimization.
    pub refined: bool,
}

/// Unit direction drawn from `CN(0, W)` restricted to `coords`.
fn sample_direction(
    w: &DMatrix<Complex64>,
    coords: &[usize],
    rng: &mut impl rand::Rng,
) -> Option<DVector<Complex64>> {
    let sub = DMatrix::from_fn(coords.len(), coords.len(), |i, j| w[(coords[i], coords[j])]);
    let (vals, vecs) = eigen_desc(&sub);
    let xi: DVector<Complex64> = DVector::from_fn(coords.len(), |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let scaled = DVector::from_fn(coords.len(), |i, _| xi[i] * vals[i].max(0.0).sqrt());
    let local = vecs * scaled;
    let mut u = DVector::zeros(w.nrows());
    for (i, &c) in coords.iter().enumerate() {
        u[c] = local[i];
    }
    let n = u.norm();
    (n > 0.0).then(|| u / Complex64::new(n, 0.0))
}

fn principal_direction(w: &DMatrix<Complex64>, coords: &[usize]) -> Option<DVector<Complex64>> {
    let sub = DMatrix::from_fn(coords.len(), coords.len(), |i, j| w[(coords[i], coords[j])]);
    let (vals, vecs) = eigen_desc(&sub);
    if vals.first().is_none_or(|v| *v <= 0.0) {
        return None;
    }
    let mut u = DVector::zeros(w.nrows());
    for (i, &c) in coords.iter().enumerate() {
        u[c] = vecs[(i, 0)];
    }
    fix_phase(&mut u);
    Some(u)
}

/// Recovers beamformers from relaxed matrices `w_star`.
///
/// If every block is numerically rank-one the principal eigenvectors are
/// used directly. Otherwise the principal directions plus
/// `cfg.n_randomizations` Gaussian draws `u_m ~ CN(0, W_m)` (restricted to
/// the group's cluster, unit-normalized; rank-one groups keep their
/// eigenvector) are each rescaled by [`power_control`], and the feasible
/// candidate with the lowest network cost wins, ties going to the lower
/// Beamformers, whether zeroing fell back, and their cost.
type Candidate = (Vec<DVector<Complex64>>, bool, CostReport);

/// candidate index.
pub fn randomize(
    problem: &QosProblem,
    w_star: &[DMatrix<Complex64>],
    alpha: &DMatrix<f64>,
    cfg: &DcConfig,
    seed: u64,
) -> Result<Recovery> {
    let sel = &problem.selectors;
    let delta = cfg.cluster_threshold;
    let rank_one: Vec<bool> = w_star.iter().map(|w| rank_one_check(w, cfg.rank_tol)).collect();
    let evaluate = |w: Vec<DVector<Complex64>>| -> Option<(Vec<DVector<Complex64>>, bool, CostReport)> {
        let (w, fallback) = finalize(problem, &w, delta)?;
        let cost = network_cost(sel, &w, alpha, cfg.eta, delta);
        Some((w, fallback, cost))
    };

    if rank_one.iter().all(|&r| r) {
        let w: Vec<DVector<Complex64>> = w_star
            .iter()
            .map(|b| extract_rank_one(b, cfg.rank_tol))
            .collect::<Result<_>>()?;
        if let Some((w, fallback, cost)) = evaluate(w) {
            return Ok(Recovery {
                clusters: clusters_from_vectors(sel, &w, delta),
                beamformers: w,
                cost,
                bypassed: true,
                zeroing_fallback: fallback,
                feasible_candidates: 1,
                refined: false,
            });
        }
    }

    let full: Vec<usize> = (0..problem.dim()).collect();
    let coords: Vec<Vec<usize>> = clusters_from_blocks(sel, w_star, delta)
        .iter()
        .map(|c| if c.is_empty() { full.clone() } else { conic::support_coords(sel, c) })
        .collect();
    let principal: Vec<Option<DVector<Complex64>>> = w_star
        .iter()
        .zip(&coords)
        .map(|(w, c)| principal_direction(w, c))
        .collect();

    let candidates: Vec<Option<Candidate>> = (0..=cfg.n_randomizations)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let mut rng = trial_rng(seed, Stream::Randomization, t as u64);
            let mut u = Vec::with_capacity(w_star.len());
            for m in 0..w_star.len() {
                let dir = if t == 0 || rank_one[m] {
                    principal[m].clone()
                } else {
                    sample_direction(&w_star[m], &coords[m], &mut rng)
                };
                match dir {
                    Some(d) => u.push(d),
                    None => return Ok(None),
                }
            }
            let Some(beta) = power_control(problem, &u, cfg.solver_tol)? else {
                return Ok(None);
            };
            let w: Vec<DVector<Complex64>> = u
                .iter()
                .zip(&beta)
                .map(|(d, b)| d * Complex64::new(b.sqrt(), 0.0))
                .collect();
            Ok(evaluate(w))
        })
        .collect::<Result<_>>()?;

    let feasible_candidates = candidates.iter().filter(|c| c.is_some()).count();
    let best = candidates
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.2.network_cost < a.2.network_cost { b } else { a });
    match best {
        Some((w, fallback, cost)) => Ok(Recovery {
            clusters: clusters_from_vectors(sel, &w, delta),
            beamformers: w,
            cost,
            bypassed: false,
            zeroing_fallback: fallback,
            feasible_candidates,
            refined: false,
        }),
        None => Err(Error::RandomizationFailure {
            trials: cfg.n_randomizations + 1,
        }),
    }
}

/// Minimum-power relaxed matrices with every group restricted to the BSs
/// whose block power in `w_star` exceeds `threshold`.
pub fn refine_on_clusters(
    problem: &QosProblem,
    w_star: &[DMatrix<Complex64>],
    threshold: f64,
    tol: f64,
) -> Result<Vec<DMatrix<Complex64>>> {
    let sel = &problem.selectors;
    let clusters: Vec<Vec<usize>> = clusters_from_blocks(sel, w_star, threshold)
        .into_iter()
        .map(|c| if c.is_empty() { (0..sel.num_bs).collect() } else { c })
        .collect();
    let n = problem.dim();
    let obj = vec![DMatrix::<Complex64>::identity(n, n); problem.num_groups()];
    let sdp = problem.assemble(&obj, Some(&clusters))?;
    let sol = conic::solve(&sdp, tol)?.into_optimal()?;
    Ok(sol
        .blocks
        .iter()
        .zip(&clusters)
        .map(|(b, c)| conic::expand_block(b, &conic::support_coords(sel, c), n))
        .collect())
}

/// [`randomize`] on `w_star` and, when `cfg.refine` is set, also on
/// [`refine_on_clusters`] of `w_star`; the cheaper recovery wins, ties
/// going to `w_star`.
pub fn recover(
    problem: &QosProblem,
    w_star: &[DMatrix<Complex64>],
    alpha: &DMatrix<f64>,
    cfg: &DcConfig,
    seed: u64,
) -> Result<Recovery> {
    let direct = randomize(problem, w_star, alpha, cfg, seed);
    if !cfg.refine {
        return direct;
    }
    let refined = refine_on_clusters(problem, w_star, cfg.cluster_threshold, cfg.solver_tol)
        .and_then(|w| randomize(problem, &w, alpha, cfg, seed))
        .map(|r| Recovery { refined: true, ..r });
    match (direct, refined) {
        (Ok(a), Ok(b)) => Ok(if b.cost.network_cost < a.cost.network_cost { b } else { a }),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Lower bound on the cost of any beamformers whose clusters are contained
/// in `clusters`: `eta` times the relaxed minimum power on those supports
/// plus their backhaul. Uses the smaller of the primal and dual values.
pub fn relaxation_bound(
    problem: &QosProblem,
    alpha: &DMatrix<f64>,
    eta: f64,
    clusters: &[Vec<usize>],
    tol: f64,
) -> Result<f64> {
    let n = problem.dim();
    let obj = vec![DMatrix::<Complex64>::identity(n, n); problem.num_groups()];
    let sdp = problem.assemble(&obj, Some(clusters))?;
    let sol = conic::solve(&sdp, tol)?.into_optimal()?;
    let power = sol.objective_value.min(sol.dual_value);
    let backhaul: f64 = clusters
        .iter()
        .enumerate()
        .map(|(m, c)| c.iter().map(|&l| alpha[(l, m)]).sum::<f64>())
        .sum();
    Ok(eta * power + backhaul)
}
