//! Self-checks run by the `validate` subcommand.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::experiments::{
    brute_force_oracle, interval_instance, network_cost, optimize, run_interval, tiny_instance, Cell, SweepSpec,
};
use crate::optimizer::{gradient_matrix, gradient_scale, smooth_value, DcConfig, SelectorMatrices, SmoothKind};
use crate::rng::{stream_rng, Stream};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, failures: Vec<String>, total: usize) -> Self {
        Self {
            name,
            passed: failures.is_empty(),
            detail: match failures.first() {
                None => format!("{total} cases"),
                Some(f) => format!("{} of {total} failed; first: {f}", failures.len()),
            },
        }
    }
}

/// Grid index of the largest gradient magnitude over `theta` in
/// `[x / 100, 100 x]`, and the grid.
fn theta_scan(kind: SmoothKind, x: f64, points: usize) -> (usize, Vec<f64>) {
    let grid: Vec<f64> = (0..points)
        .map(|i| x * 10f64.powf(-2.0 + 4.0 * i as f64 / (points - 1) as f64))
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .max_by(|a, b| gradient_scale(kind, x, *a.1).total_cmp(&gradient_scale(kind, x, *b.1)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (best, grid)
}

fn check_theta(seed: u64) -> Check {
    let mut rng = stream_rng(seed, Stream::Instance);
    let mut failures = Vec::new();
    let n = 20;
    for _ in 0..n {
        let x = 10f64.powf(rng.random_range(-6.0..1.0));
        for kind in [SmoothKind::Exp, SmoothKind::Atan] {
            let (i, grid) = theta_scan(kind, x, 200);
            let step = grid[1] / grid[0];
            if !(grid[i] / x <= step && x / grid[i] <= step) {
                failures.push(format!("{kind:?} x={x:e} peak at {:e}", grid[i]));
            }
        }
    }
    Check::new("theta-maximality", failures, n)
}

fn random_hermitian(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn check_gradients(seed: u64) -> Check {
    let mut rng = stream_rng(seed, Stream::Instance);
    let sel = SelectorMatrices::new(3, 2);
    let mut failures = Vec::new();
    let n = 30;
    for _ in 0..n {
        let g = DMatrix::from_fn(6, 3, |_, _| Complex64::new(rng.random::<f64>(), rng.random::<f64>()));
        let w = &g * g.adjoint();
        let j = sel.matrix(rng.random_range(0..3));
        // Shifted so the directional derivative stays away from zero.
        let d = random_hermitian(6, &mut rng) + DMatrix::<Complex64>::identity(6, 6);
        let x = |m: &DMatrix<Complex64>| m.iter().zip(j.iter()).map(|(a, b)| (a * b.conj()).re).sum::<f64>();
        let theta = x(&w) * 10f64.powf(rng.random_range(-1.0..1.0));
        for kind in SmoothKind::ALL {
            let grad = gradient_matrix(kind, &w, &j, theta);
            let analytic: f64 = grad.iter().zip(d.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            let h = 1e-6;
            let plus = smooth_value(kind, x(&(&w + &d * Complex64::new(h, 0.0))), theta);
            let minus = smooth_value(kind, x(&(&w - &d * Complex64::new(h, 0.0))), theta);
            let fd = (plus - minus) / (2.0 * h);
            if (fd - analytic).abs() > 1e-5 * analytic.abs().max(1e-12) {
                failures.push(format!("{kind:?}: analytic {analytic:e}, difference {fd:e}"));
            }
        }
    }
    Check::new("gradient-finite-difference", failures, n)
}

fn check_oracle(seed: u64, instances: usize, dc: &DcConfig) -> Result<Vec<Check>> {
    let mut below = Vec::new();
    let mut infeasible = Vec::new();
    let mut identity = Vec::new();
    let mut near = 0;
    let mut count = 0;
    let mut s = seed;
    while count < instances {
        s = s.wrapping_add(1);
        let t = tiny_instance(s, 1 + (s % 3) as usize, 1 + (s % 2) as usize)?;
        let Ok(oracle) = brute_force_oracle(&t.problem, &t.alpha, t.eta, 1e-9) else {
            continue;
        };
        count += 1;
        let cfg = DcConfig { eta: t.eta, ..*dc };
        let (sol, rec) = optimize(&t.problem, &t.alpha, &cfg, s)?;
        let w = sol.beamformers.as_ref().expect("recovered");
        if rec.cost.network_cost < oracle.cost - 1e-6 {
            below.push(format!("seed {s}: {} < {}", rec.cost.network_cost, oracle.cost));
        }
        if rec.cost.network_cost <= 1.05 * oracle.cost {
            near += 1;
        }
        if !t.problem.is_feasible(w, 1e-6) {
            infeasible.push(format!("seed {s}"));
        }
        let again = network_cost(&t.problem.selectors, w, &t.alpha, t.eta, cfg.cluster_threshold);
        if (again.network_cost - rec.cost.network_cost).abs() > 1e-9 * again.network_cost.abs() {
            identity.push(format!("seed {s}"));
        }
    }
    let mut quality = Check::new("oracle-within-5-percent", Vec::new(), instances);
    quality.passed = near * 100 >= 85 * instances;
    quality.detail = format!("{near} of {instances} within 5%");
    Ok(vec![
        Check::new("oracle-lower-bound", below, instances),
        quality,
        Check::new("oracle-feasibility", infeasible, instances),
        Check::new("cost-identity", identity, instances),
    ])
}

fn check_intervals(spec: &SweepSpec, intervals: u64) -> Result<Vec<Check>> {
    let mut descent = Vec::new();
    let mut feasible = Vec::new();
    let mut bound = Vec::new();
    let mut determinism = Vec::new();
    let cell = Cell {
        eta: spec.etas[0],
        cache_size: spec.cache_sizes[0],
    };
    for t in 0..intervals {
        let inst = interval_instance(spec, t)?;
        let cache = spec.cache(cell.cache_size)?;
        let alpha = crate::content::coupling_weights(&cache, &inst.problem.groups)?;
        let dc = DcConfig { eta: cell.eta, ..spec.dc };
        let Ok((sol, rec)) = optimize(&inst.problem, &alpha, &dc, inst.seed) else {
            continue;
        };
        let tol = 10.0 * dc.solver_tol;
        for (i, pair) in sol.trace.windows(2).enumerate() {
            if pair[1] - pair[0] > tol * (1.0 + pair[0].abs()) {
                descent.push(format!("interval {t} step {}: {} -> {}", i + 1, pair[0], pair[1]));
            }
        }
        if !inst.problem.is_feasible(&rec.beamformers, 1e-6) {
            feasible.push(format!("interval {t}"));
        }
        let b = sol.sdr_bound.unwrap_or(f64::NAN);
        if !(rec.cost.network_cost >= b - 1e-6) {
            bound.push(format!("interval {t}: cost {} bound {b}", rec.cost.network_cost));
        }
        if run_interval(spec, cell, t)? != run_interval(spec, cell, t)? {
            determinism.push(format!("interval {t}"));
        }
    }
    let n = intervals as usize;
    Ok(vec![
        Check::new("descent", descent, n),
        Check::new("interval-feasibility", feasible, n),
        Check::new("relaxation-bound", bound, n),
        Check::new("determinism", determinism, n),
    ])
}

/// Runs every check. `spec` supplies the scenario and optimizer settings
/// for the interval checks; the oracle checks use tiny single-group
/// instances derived from `spec.seed`.
pub fn run_checks(spec: &SweepSpec, oracle_instances: usize, intervals: u64) -> Result<Vec<Check>> {
    let mut out = vec![check_theta(spec.seed), check_gradients(spec.seed)];
    out.extend(check_oracle(spec.seed, oracle_instances, &spec.dc)?);
    out.extend(check_intervals(spec, intervals)?);
    Ok(out)
}
