//! Scheduling intervals end to end, parameter sweeps and the unicast
//! baseline.
//!
//! One interval runs
//! schedule → requests → groups → backhaul weights → reweighted SDR →
//! recovery → cost. Every random draw derives from the base seed and the
//! interval index, so intervals can run in any order and on any number of
//! threads with identical results.

mod cost;
mod oracle;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::content::{
    coupling_weights, draw_requests, form_groups, popularity_aware_cache, random_cache, round_robin_schedule,
    unicast_groups, CachePlacement, Catalog, CommonContent, GroupSet,
};
use crate::error::{Error, Result};
use crate::netgen::{
    generate_channels, generate_layout, noise_power, place_users, ChannelModel, Fading, LayoutConfig,
    NetworkLayout, Position,
};
use crate::optimizer::{dc_solve, recover, relaxation_bound, BeamformerSolution, DcConfig, QosProblem, Recovery};
use crate::rng::interval_seed;

pub use cost::{dedup_backhaul, network_cost, unicast_cost, CostReport};
pub use oracle::{brute_force_oracle, tiny_instance, OracleResult, TinyInstance};

/// Physical and traffic parameters of a simulated network.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub num_bs: usize,
    pub antennas_per_bs: usize,
    pub radius_km: f64,
    pub spacing_km: f64,
    pub bs_positions: Option<Vec<Position>>,
    /// Users dropped in the network; `users_per_interval` of them are
    /// scheduled round-robin.
    pub total_users: usize,
    pub users_per_interval: usize,
    pub num_contents: usize,
    pub zipf_skew: f64,
    pub common_fraction: f64,
    pub common_content: CommonContent,
    pub gamma_db: f64,
    pub power_budget_w: f64,
    pub antenna_gain_dbi: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub shadowing_std_db: f64,
    pub fading: Fading,
}

impl Scenario {
    /// Seven 3-antenna BSs, 14 of 140 users per interval, 100 contents.
    pub fn full() -> Self {
        Self {
            num_bs: 7,
            antennas_per_bs: 3,
            radius_km: 1.2,
            spacing_km: 0.8,
            bs_positions: None,
            total_users: 140,
            users_per_interval: 14,
            num_contents: 100,
            zipf_skew: 1.0,
            common_fraction: 0.5,
            common_content: CommonContent::Popularity,
            gamma_db: 10.0,
            power_budget_w: 10.0,
            antenna_gain_dbi: 10.0,
            noise_psd_dbm_hz: -172.0,
            bandwidth_hz: 10e6,
            shadowing_std_db: 8.0,
            fading: Fading::Rayleigh,
        }
    }

    /// Three 2-antenna BSs on a 0.8 km triangle serving a 0.5 km disk, 6 of
    /// 60 users per interval, 20 contents. Small enough for quick sweeps.
    pub fn desk() -> Self {
        let r = 0.8 / 3f64.sqrt();
        let bs = [90.0f64, 210.0, 330.0]
            .iter()
            .map(|a| Position::new(r * a.to_radians().cos(), r * a.to_radians().sin()))
            .collect();
        Self {
            num_bs: 3,
            antennas_per_bs: 2,
            radius_km: 0.5,
            bs_positions: Some(bs),
            total_users: 60,
            users_per_interval: 6,
            num_contents: 20,
            ..Self::full()
        }
    }

    pub fn gamma(&self) -> f64 {
        10f64.powf(self.gamma_db / 10.0)
    }

    pub fn noise_power(&self) -> f64 {
        noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }

    pub fn layout(&self) -> Result<NetworkLayout> {
        generate_layout(&LayoutConfig {
            num_bs: self.num_bs,
            radius_km: self.radius_km,
            spacing_km: self.spacing_km,
            antennas_per_bs: self.antennas_per_bs,
            power_budget_w: self.power_budget_w,
            antenna_gain_dbi: self.antenna_gain_dbi,
            positions: self.bs_positions.clone(),
        })
    }

    pub fn catalog(&self) -> Catalog {
        Catalog::zipf(self.num_contents, self.zipf_skew)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_bs", self.num_bs),
            ("antennas_per_bs", self.antennas_per_bs),
            ("total_users", self.total_users),
            ("users_per_interval", self.users_per_interval),
            ("num_contents", self.num_contents),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(*k, "must be at least 1"));
        }
        if self.users_per_interval > self.total_users {
            return Err(Error::config(
                "users_per_interval",
                format!("{} exceeds total_users = {}", self.users_per_interval, self.total_users),
            ));
        }
        let positive = [
            ("radius_km", self.radius_km),
            ("spacing_km", self.spacing_km),
            ("power_budget_w", self.power_budget_w),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(*k, format!("{v} must be positive")));
        }
        if !(self.zipf_skew >= 0.0) {
            return Err(Error::config("zipf_skew", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.common_fraction) {
            return Err(Error::config("common_fraction", "must lie in [0, 1]"));
        }
        if !self.gamma_db.is_finite() {
            return Err(Error::config("gamma_db", "must be finite"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::config("shadowing_std_db", "must be nonnegative"));
        }
        self.layout().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CachePolicy {
    Popularity,
    Random,
    None,
}

impl CachePolicy {
    pub fn name(self) -> &'static str {
        match self {
            CachePolicy::Popularity => "popularity",
            CachePolicy::Random => "random",
            CachePolicy::None => "none",
        }
    }
}

impl std::str::FromStr for CachePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "popularity" => Ok(CachePolicy::Popularity),
            "random" => Ok(CachePolicy::Random),
            "none" => Ok(CachePolicy::None),
            _ => Err(format!("unknown cache policy `{s}` (popularity, random, none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Multicast,
    Unicast,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Multicast => "multicast",
            Mode::Unicast => "unicast",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "multicast" => Ok(Mode::Multicast),
            "unicast" => Ok(Mode::Unicast),
            _ => Err(format!("unknown mode `{s}` (multicast, unicast)")),
        }
    }
}

/// A grid of `(eta, cache size)` cells evaluated over the same intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub etas: Vec<f64>,
    /// Contents cached per BS.
    pub cache_sizes: Vec<usize>,
    pub policy: CachePolicy,
    pub mode: Mode,
    pub intervals: usize,
    pub seed: u64,
    pub dc: DcConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::desk(),
            etas: vec![1.0],
            cache_sizes: vec![1],
            policy: CachePolicy::Popularity,
            mode: Mode::Multicast,
            intervals: 20,
            seed: 1,
            dc: DcConfig::default(),
        }
    }
}

/// One `(eta, cache size)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub eta: f64,
    pub cache_size: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.intervals == 0 {
            return Err(Error::config("intervals", "must be at least 1"));
        }
        if self.etas.is_empty() {
            return Err(Error::config("eta", "needs at least one value"));
        }
        if self.cache_sizes.is_empty() {
            return Err(Error::config("cache_sizes", "needs at least one value"));
        }
        if let Some(e) = self.etas.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::config("eta", format!("{e} must be a nonnegative number")));
        }
        if self.policy != CachePolicy::None {
            if let Some(s) = self.cache_sizes.iter().find(|&&s| s >= self.scenario.num_contents) {
                return Err(Error::config(
                    "cache_sizes",
                    format!("{s} must be below num_contents = {}", self.scenario.num_contents),
                ));
            }
        }
        self.dc.validate()
    }

    /// Cells in row-major order: every cache size for the first eta, then
    /// the next eta.
    pub fn cells(&self) -> Vec<Cell> {
        self.etas
            .iter()
            .flat_map(|&eta| self.cache_sizes.iter().map(move |&cache_size| Cell { eta, cache_size }))
            .collect()
    }

    /// Cache placement for `cache_size` contents per BS. Random placements
    /// come from the base seed and stay fixed across intervals.
    pub fn cache(&self, cache_size: usize) -> Result<CachePlacement> {
        let catalog = self.scenario.catalog();
        let budgets = vec![cache_size; self.scenario.num_bs];
        match self.policy {
            CachePolicy::None => Ok(CachePlacement::empty(self.scenario.num_bs, catalog.len())),
            CachePolicy::Popularity => popularity_aware_cache(&catalog, &budgets),
            CachePolicy::Random => random_cache(&catalog, &budgets, self.seed),
        }
    }
}

/// Channels, groups and requests of one interval, before optimization.
#[derive(Debug, Clone)]
pub struct IntervalInstance {
    pub problem: QosProblem,
    pub requests: Vec<usize>,
    pub scheduled: Vec<usize>,
    /// Seed of the interval's random streams.
    pub seed: u64,
}

/// Draws the channels and requests of `interval`. User drops depend on the
/// base seed only; channels and requests on the interval seed.
pub fn interval_instance(spec: &SweepSpec, interval: u64) -> Result<IntervalInstance> {
    let sc = &spec.scenario;
    let layout = sc.layout()?;
    let users = place_users(&layout, sc.total_users, spec.seed);
    let scheduled = round_robin_schedule(sc.total_users, sc.users_per_interval, interval)?;
    let seed = interval_seed(spec.seed, interval);
    let positions: Vec<Position> = scheduled.iter().map(|&k| users[k]).collect();
    let model = ChannelModel {
        shadowing_std_db: sc.shadowing_std_db,
        fading: sc.fading,
    };
    let channels = generate_channels(&layout, &positions, &model, sc.noise_power(), seed)?;
    let requests = draw_requests(
        sc.users_per_interval,
        sc.common_fraction,
        &sc.catalog(),
        sc.common_content,
        seed,
    )?;
    let groups: GroupSet = match spec.mode {
        Mode::Multicast => form_groups(&requests, sc.gamma())?,
        Mode::Unicast => unicast_groups(&requests, sc.gamma())?,
    };
    let problem = QosProblem::new(channels, groups, layout.power_budget_w.clone())?;
    Ok(IntervalInstance {
        problem,
        requests,
        scheduled,
        seed,
    })
}

/// Full result of one interval.
#[derive(Debug, Clone)]
pub struct IntervalRun {
    pub report: CostReport,
    /// `None` when the interval was infeasible.
    pub solution: Option<BeamformerSolution>,
    pub alpha: DMatrix<f64>,
    pub instance: IntervalInstance,
}

fn is_interval_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Infeasible(_) | Error::RandomizationFailure { .. } | Error::NumericalFailure(_)
    )
}

/// Reweighted iteration followed by beamformer recovery. The returned
/// solution carries the recovered beamformers, their clusters and the
/// relaxation bound on their cost.
pub fn optimize(
    problem: &QosProblem,
    alpha: &DMatrix<f64>,
    dc: &DcConfig,
    seed: u64,
) -> Result<(BeamformerSolution, Recovery)> {
    let mut sol = dc_solve(problem, alpha, dc)?;
    let rec = recover(problem, &sol.w_blocks, alpha, dc, seed)?;
    sol.sdr_bound = Some(relaxation_bound(problem, alpha, dc.eta, &rec.clusters, dc.solver_tol)?);
    sol.clusters = rec.clusters.clone();
    sol.beamformers = Some(rec.beamformers.clone());
    Ok((sol, rec))
}

/// Runs one interval at one grid point and keeps every intermediate.
///
/// Infeasible QoS, solver breakdown and randomization failure produce a
/// report with `feasible == false`; other errors are returned.
pub fn run_interval_detailed(spec: &SweepSpec, cell: Cell, interval: u64) -> Result<IntervalRun> {
    let instance = interval_instance(spec, interval)?;
    let cache = spec.cache(cell.cache_size)?;
    let alpha = coupling_weights(&cache, &instance.problem.groups)?;
    let dc = DcConfig { eta: cell.eta, ..spec.dc };
    let problem = &instance.problem;

    let outcome = optimize(problem, &alpha, &dc, instance.seed).map(|(sol, rec)| {
        let mut report = match spec.mode {
            Mode::Multicast => rec.cost,
            Mode::Unicast => unicast_cost(
                &problem.selectors,
                &rec.beamformers,
                &problem.groups,
                &cache,
                dc.eta,
                dc.cluster_threshold,
            ),
        };
        report.iterations = sol.iterations;
        (report, sol)
    });
    let (report, solution) = match outcome {
        Ok((r, s)) => (r, Some(s)),
        Err(e) if is_interval_failure(&e) => (CostReport::infeasible(0), None),
        Err(e) => return Err(e),
    };
    Ok(IntervalRun {
        report,
        solution,
        alpha,
        instance,
    })
}

/// Cost report of one interval at one grid point.
pub fn run_interval(spec: &SweepSpec, cell: Cell, interval: u64) -> Result<CostReport> {
    run_interval_detailed(spec, cell, interval).map(|r| r.report)
}

/// Averages for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub cache_size: usize,
    pub policy: CachePolicy,
    pub mode: Mode,
    /// Mean transmit power over feasible intervals, in dBm.
    pub mean_power_dbm: f64,
    pub mean_power_w: f64,
    pub mean_backhaul: f64,
    pub feasibility_rate: f64,
    pub intervals: usize,
    pub infeasible_count: usize,
}

impl SweepRow {
    pub fn is_empty(&self) -> bool {
        self.infeasible_count == self.intervals
    }
}

/// `10 log10(1000 w)`.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

/// Averages reports over the feasible intervals.
pub fn summarize(cell: Cell, policy: CachePolicy, mode: Mode, reports: &[CostReport]) -> SweepRow {
    let ok: Vec<&CostReport> = reports.iter().filter(|r| r.feasible).collect();
    let n = ok.len() as f64;
    let (mean_power_w, mean_backhaul) = if ok.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            ok.iter().map(|r| r.transmit_power).sum::<f64>() / n,
            ok.iter().map(|r| r.backhaul).sum::<f64>() / n,
        )
    };
    SweepRow {
        eta: cell.eta,
        cache_size: cell.cache_size,
        policy,
        mode,
        mean_power_dbm: watts_to_dbm(mean_power_w),
        mean_power_w,
        mean_backhaul,
        feasibility_rate: n / reports.len().max(1) as f64,
        intervals: reports.len(),
        infeasible_count: reports.len() - ok.len(),
    }
}

/// Runs every grid point over `spec.intervals` intervals in parallel and
/// averages per point. Results do not depend on scheduling order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..spec.intervals as u64).map(move |t| (c, t)))
        .collect();
    let reports: Vec<CostReport> = jobs
        .par_iter()
        .map(|&(c, t)| run_interval(spec, cells[c], t))
        .collect::<Result<_>>()?;
    Ok(cells
        .iter()
        .zip(reports.chunks(spec.intervals))
        .map(|(cell, r)| summarize(*cell, spec.policy, spec.mode, r))
        .collect())
}

/// [`run_sweep`] with every user served by its own beamformer.
pub fn unicast_baseline(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    run_sweep(&SweepSpec {
        mode: Mode::Unicast,
        ..spec.clone()
    })
}

pub const CSV_HEADER: &str =
    "eta,cache_size,policy,mode,mean_power_dbm,mean_power_w,mean_backhaul,feasibility_rate,intervals,infeasible_count";

/// CSV with [`CSV_HEADER`]. Means of empty cells are left blank.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let num = |x: f64| if x.is_finite() { x.to_string() } else { String::new() };
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.eta,
            r.cache_size,
            r.policy.name(),
            r.mode.name(),
            num(r.mean_power_dbm),
            num(r.mean_power_w),
            num(r.mean_backhaul),
            r.feasibility_rate,
            r.intervals,
            r.infeasible_count
        );
    }
    out
}
