//! Physical network generation: BS lattice, user drops, and channels.
//!
//! Distances are in km, powers in watts, gains in dB unless a name says
//! otherwise. All draws are seeded; the same inputs give bit-identical output.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Smallest BS-user distance used in the path-loss formula (1 m).
pub const MIN_DISTANCE_KM: f64 = 1e-3;

/// A point in the plane, in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Inputs to [`generate_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    pub num_bs: usize,
    pub radius_km: f64,
    pub spacing_km: f64,
    pub antennas_per_bs: usize,
    pub power_budget_w: f64,
    pub antenna_gain_dbi: f64,
    /// Explicit BS positions. Required when `num_bs` is not 1 or 7.
    pub positions: Option<Vec<Position>>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            num_bs: 7,
            radius_km: 1.2,
            spacing_km: 0.8,
            antennas_per_bs: 3,
            power_budget_w: 10.0,
            antenna_gain_dbi: 10.0,
            positions: None,
        }
    }
}

/// BS placement and per-BS radio parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub bs_positions: Vec<Position>,
    pub radius_km: f64,
    pub antennas_per_bs: usize,
    /// Peak transmit power per BS, watts.
    pub power_budget_w: Vec<f64>,
    pub antenna_gain_dbi: f64,
}

impl NetworkLayout {
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    /// Length of a network-wide beamformer, `L * N_t`.
    pub fn dim(&self) -> usize {
        self.num_bs() * self.antennas_per_bs
    }

    fn validate(&self) -> Result<()> {
        if self.bs_positions.is_empty() {
            return Err(Error::Domain("layout needs at least one BS".into()));
        }
        if self.antennas_per_bs == 0 {
            return Err(Error::Domain("antennas_per_bs must be >= 1".into()));
        }
        if !(self.radius_km > 0.0) {
            return Err(Error::Domain("radius must be positive".into()));
        }
        if self.power_budget_w.len() != self.num_bs() {
            return Err(Error::Dimension(format!(
                "{} power budgets for {} BSs",
                self.power_budget_w.len(),
                self.num_bs()
            )));
        }
        if let Some(p) = self.power_budget_w.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::Domain(format!("BS power budget {p} is not positive")));
        }
        let tol = 1e-9 * self.radius_km;
        if let Some(p) = self.bs_positions.iter().find(|p| p.norm() > self.radius_km + tol) {
            return Err(Error::Domain(format!(
                "BS at ({}, {}) lies outside the {} km disk",
                p.x, p.y, self.radius_km
            )));
        }
        Ok(())
    }
}

/// Builds the BS layout.
///
/// One BS sits at the origin; seven BSs form the centre plus a hexagonal ring
/// at angles 0, 60, ..., 300 degrees and distance `spacing_km`. Any other count
/// needs explicit positions.
pub fn generate_layout(cfg: &LayoutConfig) -> Result<NetworkLayout> {
    let bs_positions = match (&cfg.positions, cfg.num_bs) {
        (Some(p), n) => {
            if p.len() != n {
                return Err(Error::config(
                    "num_bs",
                    format!("{} explicit positions given for num_bs = {n}", p.len()),
                ));
            }
            p.clone()
        }
        (None, 1) => vec![Position::ORIGIN],
        (None, 7) => {
            let mut v = vec![Position::ORIGIN];
            v.extend((0..6).map(|i| {
                let a = i as f64 * PI / 3.0;
                Position::new(cfg.spacing_km * a.cos(), cfg.spacing_km * a.sin())
            }));
            v
        }
        (None, n) => {
            return Err(Error::config(
                "num_bs",
                format!("no built-in lattice for {n} BSs; supply explicit positions"),
            ))
        }
    };
    let layout = NetworkLayout {
        power_budget_w: vec![cfg.power_budget_w; bs_positions.len()],
        bs_positions,
        radius_km: cfg.radius_km,
        antennas_per_bs: cfg.antennas_per_bs,
        antenna_gain_dbi: cfg.antenna_gain_dbi,
    };
    layout.validate()?;
    Ok(layout)
}

/// Parses a layout override: one `x_km y_km` pair per line. Commas are
/// accepted as separators, `#` starts a comment.
pub fn parse_positions(text: &str) -> Result<Vec<Position>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if nums.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected two coordinates", i + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        };
        out.push(Position::new(parse(nums[0])?, parse(nums[1])?));
    }
    Ok(out)
}

/// Uniform i.i.d. user drops over the layout disk.
pub fn place_users(layout: &NetworkLayout, n: usize, seed: u64) -> Vec<Position> {
    let mut rng = stream_rng(seed, Stream::Users);
    (0..n)
        .map(|_| {
            let r = layout.radius_km * rng.random::<f64>().sqrt();
            let a = 2.0 * PI * rng.random::<f64>();
            Position::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Path loss in dB at distance `d_km`: `148.1 + 37.6 log10(d)`.
pub fn pathloss_db(d_km: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Domain(format!("path-loss distance {d_km} km is not positive")));
    }
    Ok(148.1 + 37.6 * d_km.log10())
}

/// Thermal noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((psd_dbm_hz + 10.0 * bandwidth_hz.log10() - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    /// Unit-variance circularly symmetric complex Gaussian entries.
    Rayleigh,
    /// Every small-scale coefficient equal to 1 (deterministic).
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Standard deviation of the log-normal shadowing, dB. Zero disables it.
    pub shadowing_std_db: f64,
    pub fading: Fading,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            shadowing_std_db: 8.0,
            fading: Fading::Rayleigh,
        }
    }
}

/// Network-wide channels for a set of users.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `h[k]` has length `L * N_t`, BS-major.
    pub h: Vec<DVector<Complex64>>,
    /// `gram[k] = h[k] h[k]^H`.
    pub gram: Vec<DMatrix<Complex64>>,
    pub noise_power: f64,
    pub num_bs: usize,
    pub antennas_per_bs: usize,
}

impl ChannelRealization {
    /// Wraps raw channel vectors, deriving the rank-one Gram matrices.
    pub fn from_vectors(
        h: Vec<DVector<Complex64>>,
        num_bs: usize,
        antennas_per_bs: usize,
        noise_power: f64,
    ) -> Result<Self> {
        if !(noise_power > 0.0) {
            return Err(Error::Domain("noise power must be positive".into()));
        }
        let dim = num_bs * antennas_per_bs;
        if let Some(v) = h.iter().find(|v| v.len() != dim) {
            return Err(Error::Dimension(format!(
                "channel of length {} for L*N_t = {dim}",
                v.len()
            )));
        }
        let gram = h.iter().map(|v| v * v.adjoint()).collect();
        Ok(Self {
            h,
            gram,
            noise_power,
            num_bs,
            antennas_per_bs,
        })
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.num_bs * self.antennas_per_bs
    }

    /// Channels for a subset of users, in the given order.
    pub fn select(&self, users: &[usize]) -> ChannelRealization {
        ChannelRealization {
            h: users.iter().map(|&k| self.h[k].clone()).collect(),
            gram: users.iter().map(|&k| self.gram[k].clone()).collect(),
            noise_power: self.noise_power,
            num_bs: self.num_bs,
            antennas_per_bs: self.antennas_per_bs,
        }
    }
}

/// Large-scale amplitude gain for one BS-user link with shadowing `shadow_db`.
pub fn link_amplitude(d_km: f64, shadow_db: f64, antenna_gain_dbi: f64) -> f64 {
    let pl = 148.1 + 37.6 * d_km.max(MIN_DISTANCE_KM).log10();
    10f64.powf((-pl - shadow_db + antenna_gain_dbi) / 20.0)
}

/// Draws channels for `users`. Shadowing is i.i.d. per link; the antenna gain
/// is applied once per link.
pub fn generate_channels(
    layout: &NetworkLayout,
    users: &[Position],
    model: &ChannelModel,
    noise_power_w: f64,
    seed: u64,
) -> Result<ChannelRealization> {
    if users.is_empty() {
        return Err(Error::Domain("no users to generate channels for".into()));
    }
    let mut rng = stream_rng(seed, Stream::Channels);
    let shadow = Normal::new(0.0, model.shadowing_std_db.max(0.0))
        .map_err(|e| Error::Domain(e.to_string()))?;
    let nt = layout.antennas_per_bs;
    let h = users
        .iter()
        .map(|u| {
            let mut v = DVector::<Complex64>::zeros(layout.dim());
            for (l, bs) in layout.bs_positions.iter().enumerate() {
                let x = if model.shadowing_std_db > 0.0 {
                    shadow.sample(&mut rng)
                } else {
                    0.0
                };
                let a = link_amplitude(u.distance(bs), x, layout.antenna_gain_dbi);
                for i in 0..nt {
                    let g = match model.fading {
                        Fading::Unit => Complex64::new(1.0, 0.0),
                        Fading::Rayleigh => {
                            let re: f64 = StandardNormal.sample(&mut rng);
                            let im: f64 = StandardNormal.sample(&mut rng);
                            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                        }
                    };
                    v[l * nt + i] = g * a;
                }
            }
            v
        })
        .collect();
    ChannelRealization::from_vectors(h, layout.num_bs(), nt, noise_power_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn layout7() -> NetworkLayout {
        generate_layout(&LayoutConfig::default()).unwrap()
    }

    #[test]
    fn single_bs_at_origin() {
        let l = generate_layout(&LayoutConfig {
            num_bs: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(l.bs_positions, vec![Position::ORIGIN]);
    }

    #[test]
    fn hexagon_distances() {
        let l = layout7();
        assert_eq!(l.num_bs(), 7);
        for p in &l.bs_positions[1..] {
            assert_relative_eq!(p.norm(), 0.8, epsilon = 1e-12);
        }
        for i in 1..7 {
            let j = if i == 6 { 1 } else { i + 1 };
            assert_relative_eq!(l.bs_positions[i].distance(&l.bs_positions[j]), 0.8, epsilon = 1e-12);
        }
        let mut max = 0.0f64;
        for a in &l.bs_positions {
            for b in &l.bs_positions {
                max = max.max(a.distance(b));
            }
        }
        assert_relative_eq!(max, 1.6, epsilon = 1e-12);
    }

    #[test]
    fn unsupported_count_needs_positions() {
        let cfg = LayoutConfig {
            num_bs: 3,
            ..Default::default()
        };
        assert!(matches!(generate_layout(&cfg), Err(Error::Config { .. })));
        let cfg = LayoutConfig {
            num_bs: 3,
            positions: Some(vec![
                Position::new(0.0, 0.4),
                Position::new(0.3, -0.2),
                Position::new(-0.3, -0.2),
            ]),
            ..Default::default()
        };
        assert_eq!(generate_layout(&cfg).unwrap().num_bs(), 3);
    }

    #[test]
    fn position_outside_disk_rejected() {
        let cfg = LayoutConfig {
            num_bs: 1,
            positions: Some(vec![Position::new(2.0, 0.0)]),
            ..Default::default()
        };
        assert!(generate_layout(&cfg).is_err());
    }

    #[test]
    fn parse_positions_accepts_comments_and_commas() {
        let p = parse_positions("# bs\n0 0\n0.8, 0.0\n\n-0.4 0.69 # ring\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1], Position::new(0.8, 0.0));
        assert!(parse_positions("1 2 3").is_err());
        assert!(parse_positions("1 x").is_err());
    }

    #[test]
    fn users_inside_disk_and_reproducible() {
        let l = layout7();
        let u = place_users(&l, 2000, 11);
        assert!(u.iter().all(|p| p.norm() <= 1.2));
        assert_eq!(place_users(&l, 1, 5), place_users(&l, 1, 5));
    }

    #[test]
    fn mean_user_radius_is_two_thirds() {
        let l = layout7();
        let u = place_users(&l, 10_000, 1);
        let mean = u.iter().map(Position::norm).sum::<f64>() / u.len() as f64;
        assert!((mean - 0.8).abs() / 0.8 < 0.02, "mean radius {mean}");
    }

    #[test]
    fn squared_radius_passes_ks() {
        let l = layout7();
        let mut s: Vec<f64> = place_users(&l, 10_000, 2)
            .iter()
            .map(|p| (p.norm() / 1.2).powi(2))
            .collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len() as f64;
        let d = s
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn pathloss_values() {
        assert_relative_eq!(pathloss_db(1.0).unwrap(), 148.1);
        assert!((pathloss_db(0.8).unwrap() - 144.456).abs() < 1e-3);
        assert_relative_eq!(pathloss_db(10.0).unwrap(), 185.7, epsilon = 1e-12);
        assert!(pathloss_db(0.0).is_err());
        assert!(pathloss_db(-1.0).is_err());
        assert!(pathloss_db(0.5).unwrap() < pathloss_db(0.51).unwrap());
    }

    #[test]
    fn noise_power_values() {
        let n = noise_power(-172.0, 1e7);
        assert!((n - 6.31e-14).abs() / 6.31e-14 < 0.01);
        assert_relative_eq!(noise_power(-30.0, 1.0), 1e-6, max_relative = 1e-12);
        let ratio_db = 10.0 * (noise_power(-172.0, 2e7) / n).log10();
        assert_relative_eq!(ratio_db, 3.0103, epsilon = 1e-4);
    }

    #[test]
    fn channel_dimensions_and_gram() {
        let l = layout7();
        let users = place_users(&l, 4, 3);
        let ch = generate_channels(&l, &users, &ChannelModel::default(), 1e-13, 9).unwrap();
        assert_eq!(ch.num_users(), 4);
        for (h, g) in ch.h.iter().zip(&ch.gram) {
            assert_eq!(h.len(), 21);
            let scale = h.norm_squared();
            for i in 0..21 {
                for j in 0..21 {
                    let e = h[i] * h[j].conj();
                    assert!((g[(i, j)] - e).norm() <= 1e-12 * scale);
                    assert_eq!(g[(i, j)], g[(j, i)].conj());
                }
            }
        }
    }

    #[test]
    fn deterministic_mode_amplitude() {
        let l = layout7();
        let users = vec![Position::new(0.3, 0.1)];
        let model = ChannelModel {
            shadowing_std_db: 0.0,
            fading: Fading::Unit,
        };
        let ch = generate_channels(&l, &users, &model, 1e-13, 0).unwrap();
        for (b, bs) in l.bs_positions.iter().enumerate() {
            let d = users[0].distance(bs);
            let want = 10f64.powf((-pathloss_db(d).unwrap() + 10.0) / 20.0);
            for i in 0..3 {
                assert_relative_eq!(ch.h[0][b * 3 + i].norm(), want, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn rayleigh_power_matches_pathloss() {
        let l = generate_layout(&LayoutConfig {
            num_bs: 1,
            antennas_per_bs: 1,
            ..Default::default()
        })
        .unwrap();
        let users = vec![Position::new(0.5, 0.0); 10_000];
        let model = ChannelModel {
            shadowing_std_db: 0.0,
            fading: Fading::Rayleigh,
        };
        let ch = generate_channels(&l, &users, &model, 1e-13, 4).unwrap();
        let mean = ch.h.iter().map(|h| h[0].norm_sqr()).sum::<f64>() / 10_000.0;
        let a2 = link_amplitude(0.5, 0.0, 10.0).powi(2);
        assert!((mean - a2).abs() / a2 < 0.03);
    }

    #[test]
    fn channels_reproducible() {
        let l = layout7();
        let users = place_users(&l, 3, 1);
        let a = generate_channels(&l, &users, &ChannelModel::default(), 1e-13, 5).unwrap();
        let b = generate_channels(&l, &users, &ChannelModel::default(), 1e-13, 5).unwrap();
        assert_eq!(a.h, b.h);
    }

    proptest::proptest! {
        #[test]
        fn pathloss_increases(d in 1e-3f64..50.0, step in 1e-6f64..10.0) {
            proptest::prop_assert!(pathloss_db(d).unwrap() < pathloss_db(d + step).unwrap());
        }
    }
}
