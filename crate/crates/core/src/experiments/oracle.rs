use nalgebra::DMatrix;
use rand::Rng;

use super::Scenario;
use crate::conic::{self, SdpStatus};
use crate::content::form_groups;
use crate::error::{Error, Result};
use crate::netgen::{generate_channels, place_users, ChannelModel};
use crate::optimizer::QosProblem;
use crate::rng::{stream_rng, Stream};

/// Exhaustive optimum of a single-group instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cost: f64,
    /// Best BS support.
    pub support: Vec<usize>,
    /// Relaxed minimum power on that support.
    pub power: f64,
}

/// Enumerates every nonempty BS support `S`, solves the power
/// minimization restricted to `S`, and returns the support with the lowest
/// `eta * power + sum_{l in S} alpha[(l, 0)]`.
///
/// Powers are the smaller of the primal and dual values, so the result never
/// exceeds the true optimum by more than the solver's dual gap.
pub fn brute_force_oracle(problem: &QosProblem, alpha: &DMatrix<f64>, eta: f64, tol: f64) -> Result<OracleResult> {
    let l_bs = problem.selectors.num_bs;
    if problem.num_groups() != 1 {
        return Err(Error::Contract("the oracle handles a single group only".into()));
    }
    if l_bs > 12 {
        return Err(Error::Contract(format!("{l_bs} BSs is too many to enumerate")));
    }
    if alpha.nrows() != l_bs || alpha.ncols() != 1 {
        return Err(Error::Dimension(format!("alpha is {}x{}", alpha.nrows(), alpha.ncols())));
    }
    let n = problem.dim();
    let obj = vec![DMatrix::identity(n, n)];
    let mut best: Option<OracleResult> = None;
    for mask in 1u32..(1 << l_bs) {
        let support: Vec<usize> = (0..l_bs).filter(|l| mask & (1 << l) != 0).collect();
        let sdp = problem.assemble(&obj, Some(std::slice::from_ref(&support)))?;
        let sol = conic::solve(&sdp, tol)?;
        match sol.status {
            SdpStatus::Optimal => {}
            SdpStatus::Infeasible => continue,
            SdpStatus::NumericalFailure => {
                return Err(Error::NumericalFailure(format!("oracle support {support:?}")));
            }
        }
        let power = sol.objective_value.min(sol.dual_value);
        let cost = eta * power + support.iter().map(|&l| alpha[(l, 0)]).sum::<f64>();
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(OracleResult { cost, support, power });
        }
    }
    best.ok_or_else(|| Error::Infeasible("no BS support meets the QoS".into()))
}

/// A single-group, single-antenna instance with random backhaul weights.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub problem: QosProblem,
    pub alpha: DMatrix<f64>,
    pub eta: f64,
}

/// Draws a tiny instance on the desk layout restricted to its first
/// `num_bs` BSs (at most 3), with one antenna per BS and `num_users` users
/// requesting the same content. Each BS misses the content with
/// probability one half.
pub fn tiny_instance(seed: u64, num_bs: usize, num_users: usize) -> Result<TinyInstance> {
    if !(1..=3).contains(&num_bs) || num_users == 0 {
        return Err(Error::Domain(format!("tiny instance with {num_bs} BSs and {num_users} users")));
    }
    let mut sc = Scenario::desk();
    sc.num_bs = num_bs;
    sc.antennas_per_bs = 1;
    sc.bs_positions = sc.bs_positions.map(|p| p[..num_bs].to_vec());
    let layout = sc.layout()?;
    let users = place_users(&layout, num_users, seed);
    let model = ChannelModel {
        shadowing_std_db: sc.shadowing_std_db,
        fading: sc.fading,
    };
    let channels = generate_channels(&layout, &users, &model, sc.noise_power(), seed)?;
    let groups = form_groups(&vec![0; num_users], sc.gamma())?;
    let rate = groups.groups[0].rate;
    let mut rng = stream_rng(seed, Stream::Instance);
    let alpha = DMatrix::from_fn(num_bs, 1, |_, _| if rng.random::<bool>() { rate } else { 0.0 });
    let problem = QosProblem::new(channels, groups, layout.power_budget_w)?;
    Ok(TinyInstance {
        problem,
        alpha,
        eta: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::ChannelRealization;
    use nalgebra::DVector;
    use num_complex::Complex64;

    #[test]
    fn single_bs_closed_form() {
        let h = DVector::from_vec(vec![Complex64::new(0.6, 0.8)]);
        let ch = ChannelRealization::from_vectors(vec![h], 1, 1, 0.1).unwrap();
        let p = QosProblem::new(ch, form_groups(&[0], 10.0).unwrap(), vec![10.0]).unwrap();
        let rate = 11f64.log2();
        let alpha = DMatrix::from_element(1, 1, rate);
        let r = brute_force_oracle(&p, &alpha, 2.0, 1e-9).unwrap();
        assert!((r.cost - (2.0 * 1.0 + rate)).abs() < 1e-6);
        assert_eq!(r.support, vec![0]);
    }

    #[test]
    fn free_backhaul_uses_every_bs() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.7)]);
        let ch = ChannelRealization::from_vectors(vec![h.clone()], 2, 1, 0.1).unwrap();
        let p = QosProblem::new(ch, form_groups(&[0], 10.0).unwrap(), vec![10.0; 2]).unwrap();
        let r = brute_force_oracle(&p, &DMatrix::zeros(2, 1), 1.0, 1e-9).unwrap();
        assert_eq!(r.support, vec![0, 1]);
        assert!((r.power - 1.0 / h.norm_squared()).abs() < 1e-6);
    }

    #[test]
    fn expensive_backhaul_picks_best_singleton() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.7)]);
        let ch = ChannelRealization::from_vectors(vec![h], 2, 1, 0.1).unwrap();
        let p = QosProblem::new(ch, form_groups(&[0], 10.0).unwrap(), vec![10.0; 2]).unwrap();
        let r = brute_force_oracle(&p, &DMatrix::from_element(2, 1, 1e3), 1.0, 1e-9).unwrap();
        assert_eq!(r.support, vec![0]);
    }

    #[test]
    fn rejects_multiple_groups() {
        let t = tiny_instance(1, 2, 2).unwrap();
        let mut p = t.problem.clone();
        p.groups = form_groups(&[0, 1], 10.0).unwrap();
        assert!(matches!(
            brute_force_oracle(&p, &DMatrix::zeros(2, 2), 1.0, 1e-7),
            Err(Error::Contract(_))
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        /// The relaxed minimum power never exceeds the power of a feasible
        /// rank-one point, and repeated solves agree.
        #[test]
        fn relaxation_is_a_lower_bound(seed in 0u64..10_000, bs in 1usize..=3, users in 1usize..=2) {
            let t = tiny_instance(seed, bs, users).unwrap();
            let Ok((_, p0)) = crate::optimizer::solve_p_ini(&t.problem, 1e-8) else { return Ok(()) };
            let (_, again) = crate::optimizer::solve_p_ini(&t.problem, 1e-8).unwrap();
            proptest::prop_assert!((p0 - again).abs() <= 1e-8 * (1.0 + p0.abs()));
            let cfg = crate::optimizer::DcConfig { n_randomizations: 10, ..Default::default() };
            let (_, rec) = crate::experiments::optimize(&t.problem, &t.alpha, &cfg, seed).unwrap();
            let power: f64 = rec.beamformers.iter().map(|w| w.norm_squared()).sum();
            proptest::prop_assert!(p0 <= power * (1.0 + 1e-6));
        }
    }
}
