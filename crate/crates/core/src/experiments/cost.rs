use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::content::{CachePlacement, GroupSet};
use crate::optimizer::{clusters_from_vectors, SelectorMatrices};

/// Power, backhaul and total cost of one set of beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// `sum_m ||w_m||^2`, watts.
    pub transmit_power: f64,
    pub backhaul: f64,
    /// `eta * transmit_power + backhaul`.
    pub network_cost: f64,
    /// `|Q_m|` per group.
    pub per_group_clusters: Vec<usize>,
    pub feasible: bool,
    pub iterations: usize,
}

impl CostReport {
    /// Placeholder for an interval that produced no beamformers. All costs
    /// are zero; averages skip it through `feasible`.
    pub fn infeasible(iterations: usize) -> Self {
        Self {
            transmit_power: 0.0,
            backhaul: 0.0,
            network_cost: 0.0,
            per_group_clusters: Vec::new(),
            feasible: false,
            iterations,
        }
    }
}

/// Transmit power plus backhaul `sum_m sum_{l in Q_m} alpha[(l, m)]`, where
/// `Q_m` holds the BSs with `||w_lm||^2 > threshold`.
pub fn network_cost(
    sel: &SelectorMatrices,
    w: &[DVector<Complex64>],
    alpha: &DMatrix<f64>,
    eta: f64,
    threshold: f64,
) -> CostReport {
    let clusters = clusters_from_vectors(sel, w, threshold);
    let transmit_power: f64 = w.iter().map(|v| v.norm_squared()).sum();
    let backhaul: f64 = clusters
        .iter()
        .enumerate()
        .map(|(m, q)| q.iter().map(|&l| alpha[(l, m)]).sum::<f64>())
        .sum();
    CostReport {
        transmit_power,
        backhaul,
        network_cost: eta * transmit_power + backhaul,
        per_group_clusters: clusters.iter().map(Vec::len).collect(),
        feasible: true,
        iterations: 0,
    }
}

/// Backhaul counted once per `(BS, content)`: BS `l` pays `R` for content
/// `f` if it serves any group requesting `f` and has not cached it.
/// Matches [`network_cost`] when every group asks for a different content.
pub fn dedup_backhaul(
    sel: &SelectorMatrices,
    w: &[DVector<Complex64>],
    groups: &GroupSet,
    cache: &CachePlacement,
    threshold: f64,
) -> f64 {
    let clusters = clusters_from_vectors(sel, w, threshold);
    let mut paid: Vec<(usize, usize, f64)> = Vec::new();
    for (g, q) in groups.groups.iter().zip(&clusters) {
        for &l in q {
            if cache.is_cached(l, g.content) {
                continue;
            }
            match paid.iter_mut().find(|(pl, pf, _)| *pl == l && *pf == g.content) {
                Some(p) => p.2 = p.2.max(g.rate),
                None => paid.push((l, g.content, g.rate)),
            }
        }
    }
    paid.iter().map(|p| p.2).sum()
}

/// [`network_cost`] with the backhaul replaced by [`dedup_backhaul`].
pub fn unicast_cost(
    sel: &SelectorMatrices,
    w: &[DVector<Complex64>],
    groups: &GroupSet,
    cache: &CachePlacement,
    eta: f64,
    threshold: f64,
) -> CostReport {
    let mut r = network_cost(sel, w, &DMatrix::zeros(sel.num_bs, w.len()), eta, threshold);
    r.backhaul = dedup_backhaul(sel, w, groups, cache, threshold);
    r.network_cost = eta * r.transmit_power + r.backhaul;
    r
}
