//! Content catalog, requests, multicast groups and static cache placement.
//!
//! Content ids are 0-based and ordered by popularity rank: content 0 is the
//! most popular.

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Content popularity distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub popularity: Vec<f64>,
}

impl Catalog {
    pub fn zipf(num_contents: usize, skew: f64) -> Self {
        Self {
            popularity: zipf_pmf(num_contents, skew),
        }
    }

    pub fn len(&self) -> usize {
        self.popularity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.popularity.is_empty()
    }
}

/// `p_f = f^-skew / sum_j j^-skew` over ranks `1..=num_contents`.
pub fn zipf_pmf(num_contents: usize, skew: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=num_contents).map(|f| (f as f64).powf(-skew)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Binary `L x F` cache placement with per-BS budgets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachePlacement {
    rows: Vec<Vec<bool>>,
    pub budgets: Vec<usize>,
}

impl CachePlacement {
    /// Builds a placement, checking every row against its budget.
    pub fn new(rows: Vec<Vec<bool>>, budgets: Vec<usize>) -> Result<Self> {
        if rows.len() != budgets.len() {
            return Err(Error::Dimension(format!(
                "{} cache rows for {} budgets",
                rows.len(),
                budgets.len()
            )));
        }
        let f = rows.first().map_or(0, Vec::len);
        for (l, (row, &b)) in rows.iter().zip(&budgets).enumerate() {
            if row.len() != f {
                return Err(Error::Dimension(format!("cache row {l} has {} entries, expected {f}", row.len())));
            }
            let used = row.iter().filter(|&&c| c).count();
            if used > b {
                return Err(Error::Domain(format!("BS {l} caches {used} contents over budget {b}")));
            }
        }
        Ok(Self { rows, budgets })
    }

    /// No BS caches anything.
    pub fn empty(num_bs: usize, num_contents: usize) -> Self {
        Self {
            rows: vec![vec![false; num_contents]; num_bs],
            budgets: vec![0; num_bs],
        }
    }

    pub fn num_bs(&self) -> usize {
        self.rows.len()
    }

    pub fn num_contents(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_cached(&self, bs: usize, content: usize) -> bool {
        self.rows[bs][content]
    }

    pub fn row(&self, bs: usize) -> &[bool] {
        &self.rows[bs]
    }

    /// Text form: header `L F`, then one row of space-separated 0/1 per BS.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.num_bs(), self.num_contents());
        for row in &self.rows {
            let line: Vec<&str> = row.iter().map(|&c| if c { "1" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses [`CachePlacement::to_text`] output. Budgets are taken as the row
    /// sums.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty cache file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token `{t}`"))))
            .collect::<Result<_>>()?;
        let [l, f] = dims[..] else {
            return Err(Error::Parse("header must be `L F`".into()));
        };
        let mut rows = Vec::with_capacity(l);
        for i in 0..l {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing cache row {i}")))?;
            let row: Vec<bool> = line
                .split_whitespace()
                .map(|t| match t {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(Error::Parse(format!("row {i}: entry `{t}` is not 0/1"))),
                })
                .collect::<Result<_>>()?;
            if row.len() != f {
                return Err(Error::Parse(format!("row {i}: {} entries, expected {f}", row.len())));
            }
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing rows after the declared L".into()));
        }
        let budgets = rows.iter().map(|r| r.iter().filter(|&&c| c).count()).collect();
        Self::new(rows, budgets)
    }
}

fn check_budgets(num_contents: usize, budgets: &[usize]) -> Result<()> {
    match budgets.iter().find(|&&b| b >= num_contents) {
        Some(b) => Err(Error::config(
            "cache_size",
            format!("cache budget {b} must be below the catalog size {num_contents}"),
        )),
        None => Ok(()),
    }
}

/// Every BS stores its `F_l` most popular contents (ties to the lower id).
pub fn popularity_aware_cache(catalog: &Catalog, budgets: &[usize]) -> Result<CachePlacement> {
    check_budgets(catalog.len(), budgets)?;
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    order.sort_by(|&a, &b| {
        catalog.popularity[b]
            .total_cmp(&catalog.popularity[a])
            .then(a.cmp(&b))
    });
    let rows = budgets
        .iter()
        .map(|&b| {
            let mut row = vec![false; catalog.len()];
            for &f in &order[..b] {
                row[f] = true;
            }
            row
        })
        .collect();
    CachePlacement::new(rows, budgets.to_vec())
}

/// Every BS stores a uniform random `F_l`-subset, independently across BSs.
pub fn random_cache(catalog: &Catalog, budgets: &[usize], seed: u64) -> Result<CachePlacement> {
    check_budgets(catalog.len(), budgets)?;
    let mut rng = stream_rng(seed, Stream::Cache);
    let rows = budgets
        .iter()
        .map(|&b| {
            let mut row = vec![false; catalog.len()];
            for f in index::sample(&mut rng, catalog.len(), b) {
                row[f] = true;
            }
            row
        })
        .collect();
    CachePlacement::new(rows, budgets.to_vec())
}

/// Users scheduled in `interval`: `K` consecutive ids starting at
/// `interval * K mod total`, wrapping around.
pub fn round_robin_schedule(total_users: usize, k: usize, interval: u64) -> Result<Vec<usize>> {
    if k > total_users || total_users == 0 {
        return Err(Error::config(
            "users_per_interval",
            format!("cannot schedule {k} of {total_users} users"),
        ));
    }
    let start = ((interval as u128 * k as u128) % total_users as u128) as usize;
    Ok((0..k).map(|i| (start + i) % total_users).collect())
}

/// How the content shared by the "common" users is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonContent {
    /// One draw from the popularity distribution per interval.
    Popularity,
    /// Always the most popular content.
    MostPopular,
}

/// Per-user requests. The first `ceil(common_fraction * K)` users share one
/// content; the rest draw independently from the popularity distribution.
pub fn draw_requests(
    k: usize,
    common_fraction: f64,
    catalog: &Catalog,
    common: CommonContent,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&common_fraction) {
        return Err(Error::config(
            "common_fraction",
            format!("{common_fraction} is outside [0, 1]"),
        ));
    }
    let dist = WeightedIndex::new(&catalog.popularity)
        .map_err(|e| Error::Domain(format!("popularity vector: {e}")))?;
    let mut rng = stream_rng(seed, Stream::Requests);
    let n_common = ((common_fraction * k as f64).ceil() as usize).min(k);
    let shared = match common {
        CommonContent::Popularity => dist.sample(&mut rng),
        CommonContent::MostPopular => 0,
    };
    let mut req = vec![shared; n_common];
    req.extend((n_common..k).map(|_| dist.sample(&mut rng)));
    Ok(req)
}

/// One multicast group.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub content: usize,
    /// Indices into the interval's user list.
    pub members: Vec<usize>,
    /// Linear SINR target.
    pub sinr_target: f64,
    /// Fixed rate `log2(1 + sinr_target)`, bits/s/Hz.
    pub rate: f64,
}

impl Group {
    pub fn new(content: usize, members: Vec<usize>, sinr_target: f64) -> Self {
        Self {
            content,
            members,
            sinr_target,
            rate: (1.0 + sinr_target).log2(),
        }
    }
}

/// Groups of an interval. In multicast mode contents are distinct across
/// groups; unicast mode keeps one singleton group per user and may repeat
/// contents.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    pub groups: Vec<Group>,
}

impl GroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).sum()
    }

    /// Group index of every user.
    pub fn group_of_user(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.num_users()];
        for (m, g) in self.groups.iter().enumerate() {
            for &k in &g.members {
                out[k] = m;
            }
        }
        out
    }

    /// Checks the partition property, and distinct contents when
    /// `distinct_contents` is set.
    pub fn validate(&self, num_users: usize, distinct_contents: bool) -> Result<()> {
        let mut seen = vec![false; num_users];
        for g in &self.groups {
            if !(g.sinr_target > 0.0) {
                return Err(Error::Domain("SINR targets must be positive".into()));
            }
            if g.members.is_empty() {
                return Err(Error::Domain(format!("group for content {} is empty", g.content)));
            }
            for &k in &g.members {
                if k >= num_users || std::mem::replace(&mut seen[k], true) {
                    return Err(Error::Domain(format!("user {k} is out of range or in two groups")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Domain("groups do not cover every user".into()));
        }
        if distinct_contents {
            let mut c: Vec<usize> = self.groups.iter().map(|g| g.content).collect();
            c.sort_unstable();
            if c.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Domain("two multicast groups share a content".into()));
            }
        }
        Ok(())
    }
}

/// One group per distinct requested content, in order of first request.
pub fn form_groups(requests: &[usize], sinr_target: f64) -> Result<GroupSet> {
    if requests.is_empty() {
        return Err(Error::Domain("no requests".into()));
    }
    if !(sinr_target > 0.0) {
        return Err(Error::config("gamma_db", "SINR target must be positive"));
    }
    let mut groups: Vec<Group> = Vec::new();
    for (k, &f) in requests.iter().enumerate() {
        match groups.iter_mut().find(|g| g.content == f) {
            Some(g) => g.members.push(k),
            None => groups.push(Group::new(f, vec![k], sinr_target)),
        }
    }
    Ok(GroupSet { groups })
}

/// One singleton group per user, keeping each user's content.
pub fn unicast_groups(requests: &[usize], sinr_target: f64) -> Result<GroupSet> {
    if requests.is_empty() {
        return Err(Error::Domain("no requests".into()));
    }
    if !(sinr_target > 0.0) {
        return Err(Error::config("gamma_db", "SINR target must be positive"));
    }
    Ok(GroupSet {
        groups: requests
            .iter()
            .enumerate()
            .map(|(k, &f)| Group::new(f, vec![k], sinr_target))
            .collect(),
    })
}

/// Backhaul weights `alpha[(l, m)] = R_m (1 - c_{l, f_m})`.
pub fn coupling_weights(cache: &CachePlacement, groups: &GroupSet) -> Result<DMatrix<f64>> {
    if let Some(g) = groups.groups.iter().find(|g| g.content >= cache.num_contents()) {
        return Err(Error::Dimension(format!(
            "content {} outside a catalog of {}",
            g.content,
            cache.num_contents()
        )));
    }
    Ok(DMatrix::from_fn(cache.num_bs(), groups.len(), |l, m| {
        let g = &groups.groups[m];
        if cache.is_cached(l, g.content) {
            0.0
        } else {
            g.rate
        }
    }))
}
