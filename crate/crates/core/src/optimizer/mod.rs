//! Joint multicast beamforming and BS clustering.
//!
//! The network cost `eta * power + backhaul` is relaxed in two steps: the
//! beamformers are lifted to PSD matrices `W_m = w_m w_m^H` (dropping the
//! rank constraint), and the per-block indicator in the backhaul term is
//! replaced by a concave smooth surrogate. The resulting difference-of-convex
//! problem is solved by iterative linearization ([`dc_solve`]), and
//! beamformers are read back from the matrices by eigen-extraction or
//! Gaussian randomization with power control ([`randomize`]).

mod dc;
mod recover;
mod smooth;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::conic::{self, LinearSdp};
use crate::content::GroupSet;
use crate::error::{Error, Result};
use crate::netgen::ChannelRealization;

pub use dc::{dc_solve, solve_p_ini, trace_lines, IterationRecord};
pub use recover::{
    clusters_from_blocks, clusters_from_vectors, extract_rank_one, power_control, randomize, rank_one_check, recover,
    refine_on_clusters, relaxation_bound, Recovery,
};
pub use smooth::{gradient_matrix, gradient_scale, smooth_value, theta_star, SmoothKind, Surrogate, ThetaRule};

/// Diagonal 0/1 matrices `J_l` picking BS `l`'s antennas out of a
/// network-wide beamformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorMatrices {
    pub num_bs: usize,
    pub antennas_per_bs: usize,
}

impl SelectorMatrices {
    pub fn new(num_bs: usize, antennas_per_bs: usize) -> Self {
        Self {
            num_bs,
            antennas_per_bs,
        }
    }

    pub fn dim(&self) -> usize {
        self.num_bs * self.antennas_per_bs
    }

    /// Antenna indices of BS `l`.
    pub fn range(&self, l: usize) -> Range<usize> {
        l * self.antennas_per_bs..(l + 1) * self.antennas_per_bs
    }

    pub fn matrix(&self, l: usize) -> DMatrix<Complex64> {
        let r = self.range(l);
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j && r.contains(&i) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// `tr(W J_l)`.
    pub fn block_power(&self, w: &DMatrix<Complex64>, l: usize) -> f64 {
        self.range(l).map(|i| w[(i, i)].re).sum()
    }

    /// `||w_l||^2`.
    pub fn vector_block_power(&self, w: &DVector<Complex64>, l: usize) -> f64 {
        self.range(l).map(|i| w[i].norm_sqr()).sum()
    }
}

/// Channels, groups and per-BS power budgets of one scheduling interval.
#[derive(Debug, Clone)]
pub struct QosProblem {
    pub channels: ChannelRealization,
    pub groups: GroupSet,
    pub selectors: SelectorMatrices,
    pub power_budget: Vec<f64>,
}

impl QosProblem {
    pub fn new(channels: ChannelRealization, groups: GroupSet, power_budget: Vec<f64>) -> Result<Self> {
        let selectors = SelectorMatrices::new(channels.num_bs, channels.antennas_per_bs);
        if power_budget.len() != selectors.num_bs {
            return Err(Error::Dimension(format!(
                "{} power budgets for {} BSs",
                power_budget.len(),
                selectors.num_bs
            )));
        }
        groups.validate(channels.num_users(), false)?;
        Ok(Self {
            channels,
            groups,
            selectors,
            power_budget,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.selectors.dim()
    }

    /// QoS SDP with block objectives `objective`, optionally restricted to
    /// per-group BS supports.
    pub fn assemble(&self, objective: &[DMatrix<Complex64>], supports: Option<&[Vec<usize>]>) -> Result<LinearSdp> {
        conic::assemble_qos_sdp(
            &self.channels,
            &self.groups,
            &self.selectors,
            &self.power_budget,
            objective,
            supports,
        )
    }

    /// SINR of every user under beamformers `w`.
    pub fn sinr(&self, w: &[DVector<Complex64>]) -> Vec<f64> {
        let group_of = self.groups.group_of_user();
        self.channels
            .h
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let gains: Vec<f64> = w.iter().map(|wm| h.dotc(wm).norm_sqr()).collect();
                let m = group_of[k];
                let interference: f64 = gains.iter().enumerate().filter(|(n, _)| *n != m).map(|(_, g)| g).sum();
                gains[m] / (interference + self.channels.noise_power)
            })
            .collect()
    }

    /// Transmit power of every BS.
    pub fn bs_power(&self, w: &[DVector<Complex64>]) -> Vec<f64> {
        (0..self.selectors.num_bs)
            .map(|l| w.iter().map(|wm| self.selectors.vector_block_power(wm, l)).sum())
            .collect()
    }

    /// SINR within `gamma (1 - rel)` and power within `P (1 + rel)`.
    pub fn is_feasible(&self, w: &[DVector<Complex64>], rel: f64) -> bool {
        let group_of = self.groups.group_of_user();
        let sinr_ok = self
            .sinr(w)
            .iter()
            .enumerate()
            .all(|(k, &s)| s >= self.groups.groups[group_of[k]].sinr_target * (1.0 - rel));
        let power_ok = self
            .bs_power(w)
            .iter()
            .zip(&self.power_budget)
            .all(|(p, b)| *p <= b * (1.0 + rel));
        sinr_ok && power_ok
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcConfig {
    /// Weight of transmit power against backhaul.
    pub eta: f64,
    pub smooth: SmoothKind,
    /// Smoothing floor.
    pub eps: f64,
    /// Stop once the objective drops by less than this.
    pub rho: f64,
    pub max_iters: usize,
    pub theta_rule: ThetaRule,
    /// Scale exp/atan weights by `e`/`pi` so all kinds drive the same
    /// subproblems.
    pub normalize: bool,
    pub rank_tol: f64,
    /// Block-power threshold (watts) below which a BS is not in a cluster.
    pub cluster_threshold: f64,
    pub n_randomizations: usize,
    pub solver_tol: f64,
    /// Also recover from the minimum-power matrices on the found clusters.
    pub refine: bool,
}

impl Default for DcConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            smooth: SmoothKind::Log,
            eps: 1e-7,
            rho: 1e-6,
            max_iters: 50,
            theta_rule: ThetaRule::GradientMax,
            normalize: true,
            rank_tol: 1e-6,
            cluster_threshold: 1e-6,
            n_randomizations: 100,
            solver_tol: conic::DEFAULT_TOL,
            refine: true,
        }
    }
}

impl DcConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps", self.eps),
            ("rho", self.rho),
            ("cluster_threshold", self.cluster_threshold),
            ("rank_tol", self.rank_tol),
            ("solver_tol", self.solver_tol),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::config(*k, format!("{v} must be positive")));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta", format!("{} must be a nonnegative number", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if let ThetaRule::Fixed(t) = self.theta_rule {
            if !(t > 0.0) {
                return Err(Error::config("theta", format!("{t} must be positive")));
            }
        }
        Ok(())
    }

    pub fn surrogate(&self) -> Surrogate {
        Surrogate {
            kind: self.smooth,
            rule: self.theta_rule,
            eps: self.eps,
            normalize: self.normalize,
        }
    }
}

/// Result of the reweighted iteration and, after recovery, the beamformers.
#[derive(Debug, Clone)]
pub struct BeamformerSolution {
    /// Relaxed matrices `W_m` of the last iterate.
    pub w_blocks: Vec<DMatrix<Complex64>>,
    /// Extracted beamformers, once recovered.
    pub beamformers: Option<Vec<DVector<Complex64>>>,
    /// Serving BSs per group.
    pub clusters: Vec<Vec<usize>>,
    /// Smoothed objective per iterate, starting at the initial point.
    pub trace: Vec<f64>,
    /// Per-iterate diagnostics, aligned with `trace`.
    pub history: Vec<IterationRecord>,
    /// Optimal value of the initial power minimization.
    pub v_ini: f64,
    /// Relaxation lower bound on the cost of the recovered beamformers.
    pub sdr_bound: Option<f64>,
    pub is_rank_one: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
}
