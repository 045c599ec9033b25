//! Linear semidefinite programs over complex Hermitian blocks.
//!
//! Every optimization stage in the crate (initial power minimization, the
//! reweighted subproblems, power-control recovery, the brute-force oracle)
//! reduces to
//!
//! ```text
//! minimize    sum_m <A_m, W_m> + constant
//! subject to  sum_m <B_jm, W_m>  (>= | <=)  b_j      for every j
//!             W_m PSD
//! ```
//!
//! Blocks of order 1 are plain nonnegative scalars. Larger blocks are solved
//! through the real symmetric embedding in [`embed`].

mod dump;
pub mod embed;
mod ipm;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::content::GroupSet;
use crate::error::{Error, Result};
use crate::netgen::ChannelRealization;
use crate::optimizer::SelectorMatrices;

pub use dump::{parse_dump, write_dump};
use ipm::{ConeProblem, IpmSettings, Outcome, Row};

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Geq,
    Leq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// `(block, B_jm)` pairs; blocks not listed have a zero coefficient.
    pub coeffs: Vec<(usize, DMatrix<Complex64>)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSdp {
    pub block_dims: Vec<usize>,
    pub objective: Vec<DMatrix<Complex64>>,
    pub constant: f64,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub blocks: Vec<DMatrix<Complex64>>,
    pub objective_value: f64,
    pub status: SdpStatus,
    /// Dual objective `b^T y + constant`. For a minimization it
    /// approaches `objective_value` from below at optimality.
    pub dual_value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl SdpSolution {
    /// Turns non-optimal statuses into errors.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            SdpStatus::Optimal => Ok(self),
            SdpStatus::Infeasible => Err(Error::Infeasible("SDP constraints cannot be met".into())),
            SdpStatus::NumericalFailure => Err(Error::NumericalFailure(format!(
                "stopped after {} iterations with KKT residual {:.3e}",
                self.iterations, self.kkt_residual
            ))),
        }
    }
}

fn hermitian_defect(a: &DMatrix<Complex64>) -> f64 {
    let d = (a - a.adjoint()).norm();
    let n = a.norm();
    if n == 0.0 {
        0.0
    } else {
        d / n
    }
}

impl LinearSdp {
    pub fn validate(&self) -> Result<()> {
        let nb = self.block_dims.len();
        if self.objective.len() != nb {
            return Err(Error::Dimension(format!(
                "{} objective blocks for {nb} variables",
                self.objective.len()
            )));
        }
        let check = |what: &str, m: usize, a: &DMatrix<Complex64>| -> Result<()> {
            let n = self.block_dims[m];
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "{what} for block {m} is {}x{}, block order is {n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if hermitian_defect(a) > 1e-12 {
                return Err(Error::Contract(format!("{what} for block {m} is not Hermitian")));
            }
            Ok(())
        };
        for (m, a) in self.objective.iter().enumerate() {
            check("objective", m, a)?;
        }
        for (j, c) in self.constraints.iter().enumerate() {
            for (m, b) in &c.coeffs {
                if *m >= nb {
                    return Err(Error::Dimension(format!("constraint {j} names block {m} of {nb}")));
                }
                check(&format!("constraint {j}"), *m, b)?;
            }
            if !c.rhs.is_finite() {
                return Err(Error::Domain(format!("constraint {j} has a non-finite right-hand side")));
            }
        }
        Ok(())
    }

    /// `sum_m <A_m, W_m> + constant`.
    pub fn objective_at(&self, blocks: &[DMatrix<Complex64>]) -> f64 {
        self.constant
            + self
                .objective
                .iter()
                .zip(blocks)
                .map(|(a, w)| embed::inner(a, w))
                .sum::<f64>()
    }

    /// Left-hand side of constraint `j` at `blocks`.
    pub fn constraint_lhs(&self, j: usize, blocks: &[DMatrix<Complex64>]) -> f64 {
        self.constraints[j]
            .coeffs
            .iter()
            .map(|(m, b)| embed::inner(b, &blocks[*m]))
            .sum()
    }

    /// Largest constraint violation, scaled by each row's coefficient norm.
    pub fn max_violation(&self, blocks: &[DMatrix<Complex64>]) -> f64 {
        self.constraints
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let lhs = self.constraint_lhs(j, blocks);
                let scale = c.coeffs.iter().map(|(_, b)| b.norm_squared()).sum::<f64>().sqrt();
                let v = match c.sense {
                    Sense::Geq => c.rhs - lhs,
                    Sense::Leq => lhs - c.rhs,
                };
                v.max(0.0) / scale.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Where each complex block lives in the real cone.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Psd(usize),
    Scalar(usize),
}

fn row_scale(c: &Constraint) -> f64 {
    let n = c.coeffs.iter().map(|(_, b)| b.norm_squared()).sum::<f64>().sqrt();
    if n > 0.0 {
        1.0 / n
    } else {
        1.0
    }
}

fn to_cone(p: &LinearSdp) -> (ConeProblem, Vec<Slot>) {
    let mut slots = Vec::with_capacity(p.block_dims.len());
    let (mut n_psd, mut n_lp) = (0, 0);
    for &n in &p.block_dims {
        if n == 1 {
            slots.push(Slot::Scalar(n_lp));
            n_lp += 1;
        } else {
            slots.push(Slot::Psd(n_psd));
            n_psd += 1;
        }
    }
    let slack0 = n_lp;
    let lp_dim = n_lp + p.constraints.len();
    let psd_dims: Vec<usize> = p.block_dims.iter().filter(|&&n| n > 1).map(|n| 2 * n).collect();
    let mut c_psd: Vec<DMatrix<f64>> = psd_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut c_lp = DVector::zeros(lp_dim);
    for (m, a) in p.objective.iter().enumerate() {
        match slots[m] {
            Slot::Psd(k) => c_psd[k] = embed::embed(a) * 0.5,
            Slot::Scalar(i) => c_lp[i] = a[(0, 0)].re,
        }
    }
    let rows = p
        .constraints
        .iter()
        .enumerate()
        .map(|(j, c)| {
            // Unit coefficient norm, so the slack does not dominate tiny
            // channel gains.
            let s = row_scale(c);
            let mut row = Row::default();
            for (m, b) in &c.coeffs {
                match slots[*m] {
                    Slot::Psd(k) => row.psd.push((k, embed::embed(b) * (0.5 * s))),
                    Slot::Scalar(i) => row.lp.push((i, b[(0, 0)].re * s)),
                }
            }
            let s = match c.sense {
                Sense::Geq => -1.0,
                Sense::Leq => 1.0,
            };
            row.lp.push((slack0 + j, s));
            row
        })
        .collect();
    let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs * row_scale(c)));
    (
        ConeProblem {
            psd_dims,
            lp_dim,
            c_psd,
            c_lp,
            rows,
            b,
        },
        slots,
    )
}

fn recover(p: &LinearSdp, slots: &[Slot], x_psd: &[DMatrix<f64>], x_lp: &DVector<f64>) -> Vec<DMatrix<Complex64>> {
    slots
        .iter()
        .zip(&p.block_dims)
        .map(|(s, &n)| match *s {
            Slot::Psd(k) => {
                debug_assert_eq!(x_psd[k].nrows(), 2 * n);
                embed::unembed(&x_psd[k])
            }
            Slot::Scalar(i) => DMatrix::from_element(1, 1, Complex64::new(x_lp[i], 0.0)),
        })
        .collect()
}

fn run(p: &LinearSdp, tol: f64) -> (ipm::IpmResult, Vec<Slot>, f64) {
    let (mut cone, slots) = to_cone(p);
    cone.normalize_rows();
    let r = cone.solve(IpmSettings { tol, max_iter: 200 });
    let dual = cone.b.dot(&r.point.y) + p.constant;
    (r, slots, dual)
}

/// Phase-I check: smallest uniform relaxation `t` (in row-normalized units)
/// that makes the constraints feasible. Positive `t` proves infeasibility.
fn phase_one(p: &LinearSdp, tol: f64) -> Option<f64> {
    let mut q = p.clone();
    let t_block = q.block_dims.len();
    q.block_dims.push(1);
    for (m, a) in q.objective.iter_mut().enumerate() {
        *a = DMatrix::identity(p.block_dims[m], p.block_dims[m]) * Complex64::new(1e-6, 0.0);
    }
    q.objective.push(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
    q.constant = 0.0;
    for c in &mut q.constraints {
        let scale = 1.0 / row_scale(c);
        let s = match c.sense {
            Sense::Geq => scale,
            Sense::Leq => -scale,
        };
        c.coeffs.push((t_block, DMatrix::from_element(1, 1, Complex64::new(s, 0.0))));
    }
    let (r, slots, _) = run(&q, tol);
    if r.outcome != Outcome::Optimal {
        return None;
    }
    let blocks = recover(&q, &slots, &r.point.x_psd, &r.point.x_lp);
    Some(blocks[t_block][(0, 0)].re)
}

/// Solves `problem` to relative tolerance `tol`.
///
/// Returns `Err` only for malformed input; infeasibility and solver
/// breakdown are reported through [`SdpSolution::status`].
pub fn solve(problem: &LinearSdp, tol: f64) -> Result<SdpSolution> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Domain("solver tolerance must be positive".into()));
    }
    let (r, slots, dual_value) = run(problem, tol);
    let blocks = recover(problem, &slots, &r.point.x_psd, &r.point.x_lp);
    let status = match r.outcome {
        Outcome::Optimal => SdpStatus::Optimal,
        Outcome::Infeasible => SdpStatus::Infeasible,
        Outcome::Stalled => match phase_one(problem, tol) {
            Some(t) if t > 1e-6_f64.max(100.0 * tol) => SdpStatus::Infeasible,
            _ => SdpStatus::NumericalFailure,
        },
    };
    Ok(SdpSolution {
        objective_value: problem.objective_at(&blocks),
        blocks,
        status,
        dual_value,
        kkt_residual: r.residual,
        iterations: r.iterations,
    })
}

fn restrict(a: &DMatrix<Complex64>, coords: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(coords.len(), coords.len(), |i, j| a[(coords[i], coords[j])])
}

/// Coordinates of a beamformer that belong to the BSs in `support`.
pub fn support_coords(sel: &SelectorMatrices, support: &[usize]) -> Vec<usize> {
    let mut bs: Vec<usize> = support.to_vec();
    bs.sort_unstable();
    bs.dedup();
    bs.into_iter().flat_map(|l| sel.range(l)).collect()
}

/// Builds the QoS-constrained SDP: one linearized SINR row per user,
///
/// ```text
/// <H_k, W_m> - gamma_m sum_{n != m} <H_k, W_n> >= gamma_m sigma^2,
/// ```
///
/// then one per-BS power row `sum_m <J_l, W_m> <= P_l`.
///
/// `supports`, when given, restricts group `m` to the antennas of the BSs in
/// `supports[m]`; block `m` then has order `N_t |supports[m]|` and power rows
/// that touch no block are dropped. `objective` is always given at full
/// order `L N_t` and restricted here.
pub fn assemble_qos_sdp(
    channels: &ChannelRealization,
    groups: &GroupSet,
    selectors: &SelectorMatrices,
    power_budget: &[f64],
    objective: &[DMatrix<Complex64>],
    supports: Option<&[Vec<usize>]>,
) -> Result<LinearSdp> {
    let dim = selectors.dim();
    let m_groups = groups.len();
    if channels.dim() != dim {
        return Err(Error::Dimension(format!(
            "channels of length {} for selectors of order {dim}",
            channels.dim()
        )));
    }
    if power_budget.len() != selectors.num_bs {
        return Err(Error::Dimension(format!(
            "{} power budgets for {} BSs",
            power_budget.len(),
            selectors.num_bs
        )));
    }
    if objective.len() != m_groups {
        return Err(Error::Dimension(format!("{} objective blocks for {m_groups} groups", objective.len())));
    }
    if let Some(a) = objective.iter().find(|a| a.nrows() != dim || a.ncols() != dim) {
        return Err(Error::Dimension(format!("objective block {}x{} for order {dim}", a.nrows(), a.ncols())));
    }
    if groups.num_users() != channels.num_users() {
        return Err(Error::Dimension(format!(
            "{} grouped users for {} channels",
            groups.num_users(),
            channels.num_users()
        )));
    }
    groups.validate(channels.num_users(), false)?;
    let coords: Vec<Vec<usize>> = match supports {
        Some(s) => {
            if s.len() != m_groups {
                return Err(Error::Dimension(format!("{} supports for {m_groups} groups", s.len())));
            }
            if let Some(l) = s.iter().flatten().find(|&&l| l >= selectors.num_bs) {
                return Err(Error::Dimension(format!("support names BS {l}")));
            }
            s.iter().map(|sup| support_coords(selectors, sup)).collect()
        }
        None => vec![(0..dim).collect(); m_groups],
    };
    if let Some(m) = coords.iter().position(Vec::is_empty) {
        return Err(Error::Domain(format!("group {m} has an empty BS support")));
    }
    let full = supports.is_none();
    let sub = |a: &DMatrix<Complex64>, m: usize| if full { a.clone() } else { restrict(a, &coords[m]) };

    let group_of = groups.group_of_user();
    let mut constraints = Vec::with_capacity(channels.num_users() + selectors.num_bs);
    for (k, h) in channels.gram.iter().enumerate() {
        let m = group_of[k];
        let gamma = groups.groups[m].sinr_target;
        let mut coeffs = vec![(m, sub(h, m))];
        for n in (0..m_groups).filter(|&n| n != m) {
            coeffs.push((n, sub(h, n) * Complex64::new(-gamma, 0.0)));
        }
        constraints.push(Constraint {
            coeffs,
            sense: Sense::Geq,
            rhs: gamma * channels.noise_power,
        });
    }
    for (l, &p) in power_budget.iter().enumerate() {
        let j = selectors.matrix(l);
        let coeffs: Vec<(usize, DMatrix<Complex64>)> = (0..m_groups)
            .map(|m| (m, sub(&j, m)))
            .filter(|(_, b)| b.iter().any(|v| v.re != 0.0))
            .collect();
        if coeffs.is_empty() && !full {
            continue;
        }
        constraints.push(Constraint {
            coeffs,
            sense: Sense::Leq,
            rhs: p,
        });
    }
    Ok(LinearSdp {
        block_dims: coords.iter().map(Vec::len).collect(),
        objective: (0..m_groups).map(|m| sub(&objective[m], m)).collect(),
        constant: 0.0,
        constraints,
    })
}

/// Expands a block solved on `coords` back to full order `dim`.
pub fn expand_block(w: &DMatrix<Complex64>, coords: &[usize], dim: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for (i, &ci) in coords.iter().enumerate() {
        for (j, &cj) in coords.iter().enumerate() {
            out[(ci, cj)] = w[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::form_groups;
    use nalgebra::DVector;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn scalar(x: f64) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, c(x))
    }

    #[test]
    fn trivial_scalar() {
        let p = LinearSdp {
            block_dims: vec![1],
            objective: vec![scalar(1.0)],
            constant: 0.0,
            constraints: vec![Constraint {
                coeffs: vec![(0, scalar(1.0))],
                sense: Sense::Geq,
                rhs: 1.0,
            }],
        };
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-6);
        assert!((s.blocks[0][(0, 0)].re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rank_one_power_minimization() {
        let h = DVector::from_vec(vec![Complex64::new(0.3, -0.2), Complex64::new(-0.5, 0.9), c(0.1)]);
        let hh = &h * h.adjoint();
        let (gamma, sigma2) = (10.0, 0.05);
        let p = LinearSdp {
            block_dims: vec![3],
            objective: vec![DMatrix::identity(3, 3).map(c)],
            constant: 0.0,
            constraints: vec![Constraint {
                coeffs: vec![(0, hh.clone())],
                sense: Sense::Geq,
                rhs: gamma * sigma2,
            }],
        };
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let want = gamma * sigma2 / h.norm_squared();
        assert!((s.objective_value - want).abs() <= 1e-6 * want, "{} vs {want}", s.objective_value);
        assert!(s.kkt_residual <= DEFAULT_TOL);
        assert!((s.dual_value - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let row = |sense, rhs| Constraint {
            coeffs: vec![(0, DMatrix::identity(2, 2).map(c))],
            sense,
            rhs,
        };
        let p = LinearSdp {
            block_dims: vec![2],
            objective: vec![DMatrix::identity(2, 2).map(c)],
            constant: 0.0,
            constraints: vec![row(Sense::Geq, 2.0), row(Sense::Leq, 1.0)],
        };
        assert_eq!(solve(&p, DEFAULT_TOL).unwrap().status, SdpStatus::Infeasible);
        assert!(phase_one(&p, DEFAULT_TOL).unwrap() > 1e-3);
    }

    #[test]
    fn rejects_non_hermitian_and_bad_dims() {
        let mut a = DMatrix::identity(2, 2).map(c);
        a[(0, 1)] = c(1.0);
        let p = LinearSdp {
            block_dims: vec![2],
            objective: vec![a],
            constant: 0.0,
            constraints: vec![],
        };
        assert!(matches!(solve(&p, 1e-7), Err(Error::Contract(_))));
        let p = LinearSdp {
            block_dims: vec![3],
            objective: vec![DMatrix::identity(2, 2).map(c)],
            constant: 0.0,
            constraints: vec![],
        };
        assert!(matches!(solve(&p, 1e-7), Err(Error::Dimension(_))));
    }

    #[test]
    fn qos_constraint_layout() {
        let sel = SelectorMatrices::new(2, 2);
        let h: Vec<DVector<Complex64>> = (0..3)
            .map(|k| DVector::from_fn(4, |i, _| Complex64::new(1.0 + (i + k) as f64, 0.5 * k as f64)))
            .collect();
        let ch = ChannelRealization::from_vectors(h, 2, 2, 0.1).unwrap();
        let groups = form_groups(&[5, 5, 7], 10.0).unwrap();
        let obj = vec![DMatrix::identity(4, 4).map(c); 2];
        let p = assemble_qos_sdp(&ch, &groups, &sel, &[1.0, 1.0], &obj, None).unwrap();
        assert_eq!(p.constraints.len(), 3 + 2);
        for con in &p.constraints {
            for (_, b) in &con.coeffs {
                assert!(hermitian_defect(b) <= 1e-12);
            }
        }
        let single = form_groups(&[5, 5, 5], 10.0).unwrap();
        let p = assemble_qos_sdp(&ch, &single, &sel, &[1.0, 1.0], &obj[..1], None).unwrap();
        assert!(p.constraints[..3].iter().all(|c| c.coeffs.len() == 1));
        assert!(assemble_qos_sdp(&ch, &single, &sel, &[1.0], &obj[..1], None).is_err());
    }
}
