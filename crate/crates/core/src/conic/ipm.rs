//! Infeasible-start primal-dual path-following method for real block SDPs.
//!
//! Standard form over a product of real PSD blocks and one nonnegative
//! orthant:
//!
//! ```text
//! minimize   <C, X>            maximize   b'y
//! subject to A(X) = b          subject to A'(y) + Z = C
//!            X in cone                    Z in cone
//! ```
//!
//! Search directions use the HKM scaling with a Mehrotra predictor-corrector
//! step. Rows are normalized to unit Frobenius norm before iterating.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// One equality row: sparse over PSD blocks, sparse over orthant entries.
#[derive(Debug, Clone, Default)]
pub(crate) struct Row {
    pub psd: Vec<(usize, DMatrix<f64>)>,
    pub lp: Vec<(usize, f64)>,
}

impl Row {
    fn norm_squared(&self) -> f64 {
        self.psd.iter().map(|(_, a)| a.norm_squared()).sum::<f64>()
            + self.lp.iter().map(|(_, a)| a * a).sum::<f64>()
    }

    fn scale(&mut self, s: f64) {
        for (_, a) in &mut self.psd {
            *a *= s;
        }
        for (_, a) in &mut self.lp {
            *a *= s;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProblem {
    pub psd_dims: Vec<usize>,
    pub lp_dim: usize,
    pub c_psd: Vec<DMatrix<f64>>,
    pub c_lp: DVector<f64>,
    pub rows: Vec<Row>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConePoint {
    pub x_psd: Vec<DMatrix<f64>>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub z_psd: Vec<DMatrix<f64>>,
    pub z_lp: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    /// A Farkas ray `y` with `b'y = 1`, `A'(y)` (nearly) negative semidefinite.
    Infeasible,
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub outcome: Outcome,
    pub point: ConePoint,
    #[cfg_attr(not(test), allow(dead_code))]
    pub primal_obj: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `a` with `x + a dx` in the PSD cone, given `chol(x)`.
fn psd_step(chol_l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(t) = chol_l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(s) = chol_l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lmin = SymmetricEigen::new(sym(&s)).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn lp_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

impl ConeProblem {
    fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Barrier degree: total PSD order plus orthant size.
    fn degree(&self) -> f64 {
        (self.psd_dims.iter().sum::<usize>() + self.lp_dim) as f64
    }

    fn apply(&self, x_psd: &[DMatrix<f64>], x_lp: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.num_rows(),
            self.rows.iter().map(|r| {
                r.psd.iter().map(|(k, a)| a.dot(&x_psd[*k])).sum::<f64>()
                    + r.lp.iter().map(|(i, a)| a * x_lp[*i]).sum::<f64>()
            }),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut psd: Vec<DMatrix<f64>> = self.psd_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut lp = DVector::zeros(self.lp_dim);
        for (r, &yj) in self.rows.iter().zip(y.iter()) {
            for (k, a) in &r.psd {
                psd[*k] += a * yj;
            }
            for (i, a) in &r.lp {
                lp[*i] += yj * a;
            }
        }
        (psd, lp)
    }

    fn c_norm(&self) -> f64 {
        (self.c_psd.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lp.norm_squared()).sqrt()
    }

    fn primal_obj(&self, p: &ConePoint) -> f64 {
        self.c_psd.iter().zip(&p.x_psd).map(|(c, x)| c.dot(x)).sum::<f64>() + self.c_lp.dot(&p.x_lp)
    }

    /// Normalizes every row to unit norm. Returns the applied factors.
    pub fn normalize_rows(&mut self) -> Vec<f64> {
        let mut factors = Vec::with_capacity(self.rows.len());
        for (j, r) in self.rows.iter_mut().enumerate() {
            let n = r.norm_squared().sqrt();
            let s = if n > 0.0 { 1.0 / n } else { 1.0 };
            r.scale(s);
            self.b[j] *= s;
            factors.push(s);
        }
        factors
    }

    fn initial_point(&self) -> (ConePoint, f64) {
        let m = self.num_rows();
        let rows_psd_norm = |k: usize| {
            self.rows
                .iter()
                .enumerate()
                .filter_map(|(j, r)| r.psd.iter().find(|(bk, _)| *bk == k).map(|(_, a)| (j, a.norm())))
                .collect::<Vec<_>>()
        };
        let mut x_psd = Vec::new();
        let mut z_psd = Vec::new();
        let mut trace0 = 0.0;
        for (k, &n) in self.psd_dims.iter().enumerate() {
            let nf = n as f64;
            let entries = rows_psd_norm(k);
            let xi = entries
                .iter()
                .map(|&(j, an)| nf * (1.0 + self.b[j].abs()) / (1.0 + an))
                .fold(10f64.max(nf.sqrt()), f64::max);
            let eta = entries
                .iter()
                .map(|&(_, an)| an)
                .fold(10f64.max(nf.sqrt()).max(self.c_psd[k].norm()), f64::max);
            trace0 += xi * nf;
            x_psd.push(DMatrix::identity(n, n) * xi);
            z_psd.push(DMatrix::identity(n, n) * eta);
        }
        let nl = self.lp_dim as f64;
        let (mut xi, mut eta) = (10f64.max(nl.sqrt()), 10f64.max(nl.sqrt()).max(self.c_lp.norm()));
        for (j, r) in self.rows.iter().enumerate() {
            if !r.lp.is_empty() {
                let an = r.lp.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
                xi = xi.max(nl * (1.0 + self.b[j].abs()) / (1.0 + an));
                eta = eta.max(an);
            }
        }
        trace0 += xi * nl;
        let point = ConePoint {
            x_psd,
            x_lp: DVector::from_element(self.lp_dim, xi),
            y: DVector::zeros(m),
            z_psd,
            z_lp: DVector::from_element(self.lp_dim, eta),
        };
        (point, trace0)
    }

    /// Schur complement `M_ij = <A_i, X A_j Z^-1>` summed over the cone.
    fn schur(&self, p: &ConePoint, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.num_rows();
        let mut out = DMatrix::zeros(m, m);
        let mut by_block: Vec<Vec<(usize, &DMatrix<f64>)>> = vec![Vec::new(); self.psd_dims.len()];
        for (j, r) in self.rows.iter().enumerate() {
            for (k, a) in &r.psd {
                by_block[*k].push((j, a));
            }
        }
        for (k, entries) in by_block.iter().enumerate() {
            for &(j, aj) in entries {
                let g = &p.x_psd[k] * aj * &zinv[k];
                for &(i, ai) in entries.iter().filter(|(i, _)| *i <= j) {
                    let v = ai.dot(&g);
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
        let ratio: DVector<f64> = p.x_lp.component_div(&p.z_lp);
        for (i, ri) in self.rows.iter().enumerate() {
            for (j, rj) in self.rows.iter().enumerate().skip(i) {
                let mut v = 0.0;
                for (a, ca) in &ri.lp {
                    for (b, cb) in &rj.lp {
                        if a == b {
                            v += ca * cb * ratio[*a];
                        }
                    }
                }
                if v != 0.0 {
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
        out
    }
}

struct Direction {
    dx_psd: Vec<DMatrix<f64>>,
    dx_lp: DVector<f64>,
    dy: DVector<f64>,
    dz_psd: Vec<DMatrix<f64>>,
    dz_lp: DVector<f64>,
}

struct Factored {
    zinv: Vec<DMatrix<f64>>,
    schur: Cholesky<f64, Dyn>,
}

impl ConeProblem {
    /// Solves for the direction whose complementarity target is
    /// `target_psd` / `target_lp` (the desired value of `X Z`).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        p: &ConePoint,
        f: &Factored,
        rp: &DVector<f64>,
        rd_psd: &[DMatrix<f64>],
        rd_lp: &DVector<f64>,
        target_psd: &[DMatrix<f64>],
        target_lp: &DVector<f64>,
    ) -> Direction {
        // dX = K Z^-1 - X - X Rd Z^-1 + X A'(dy) Z^-1
        let base_psd: Vec<DMatrix<f64>> = (0..self.psd_dims.len())
            .map(|k| (&target_psd[k] - &p.x_psd[k] * &rd_psd[k]) * &f.zinv[k] - &p.x_psd[k])
            .collect();
        let base_lp: DVector<f64> = DVector::from_iterator(
            self.lp_dim,
            (0..self.lp_dim).map(|i| (target_lp[i] - p.x_lp[i] * rd_lp[i]) / p.z_lp[i] - p.x_lp[i]),
        );
        let rhs = rp - self.apply(&base_psd, &base_lp);
        let dy = f.schur.solve(&rhs);
        let (aty_psd, aty_lp) = self.adjoint(&dy);
        let dz_psd: Vec<DMatrix<f64>> = rd_psd.iter().zip(&aty_psd).map(|(r, a)| r - a).collect();
        let dz_lp = rd_lp - &aty_lp;
        let dx_psd = (0..self.psd_dims.len())
            .map(|k| sym(&(&base_psd[k] + &p.x_psd[k] * &aty_psd[k] * &f.zinv[k])))
            .collect();
        let dx_lp = DVector::from_iterator(
            self.lp_dim,
            (0..self.lp_dim).map(|i| base_lp[i] + p.x_lp[i] * aty_lp[i] / p.z_lp[i]),
        );
        Direction {
            dx_psd,
            dx_lp,
            dy,
            dz_psd,
            dz_lp,
        }
    }

    fn step_lengths(&self, p: &ConePoint, xl: &[DMatrix<f64>], zl: &[DMatrix<f64>], d: &Direction) -> (f64, f64) {
        let mut ap = lp_step(&p.x_lp, &d.dx_lp);
        let mut ad = lp_step(&p.z_lp, &d.dz_lp);
        for k in 0..self.psd_dims.len() {
            ap = ap.min(psd_step(&xl[k], &d.dx_psd[k]));
            ad = ad.min(psd_step(&zl[k], &d.dz_psd[k]));
        }
        (ap, ad)
    }

    /// Checks whether `y` certifies primal infeasibility: `b'y > 0` and
    /// `A'(y) <= eps I` with `eps` small against the trace scale.
    fn farkas(&self, y: &DVector<f64>, trace_scale: f64) -> bool {
        let by = self.b.dot(y);
        if !(by > 0.0) {
            return false;
        }
        let yn = y / by;
        let (s_psd, s_lp) = self.adjoint(&yn);
        let mut worst = s_lp.iter().cloned().fold(0.0f64, f64::max);
        for s in &s_psd {
            worst = worst.max(SymmetricEigen::new(sym(s)).eigenvalues.max());
        }
        // Any feasible X would need trace >= 1 / worst.
        worst * trace_scale <= 1e-8
    }

    pub fn solve(&self, settings: IpmSettings) -> IpmResult {
        let (mut p, trace0) = self.initial_point();
        let nu = self.degree().max(1.0);
        let b_norm = self.b.norm();
        let c_norm = self.c_norm();
        let trace_scale = 1.0 + trace0;
        let mut step_frac = 0.9;
        let mut last = (f64::INFINITY, 0.0);
        let mut stalls = 0;

        for iter in 0..settings.max_iter {
            let ax = self.apply(&p.x_psd, &p.x_lp);
            let rp = &self.b - &ax;
            let (aty_psd, aty_lp) = self.adjoint(&p.y);
            let rd_psd: Vec<DMatrix<f64>> = (0..self.psd_dims.len())
                .map(|k| &self.c_psd[k] - &p.z_psd[k] - &aty_psd[k])
                .collect();
            let rd_lp = &self.c_lp - &p.z_lp - &aty_lp;
            let pobj = self.primal_obj(&p);
            let dobj = self.b.dot(&p.y);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = (rd_psd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.norm_squared()).sqrt()
                / (1.0 + c_norm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let residual = pinf.max(dinf).max(gap);
            last = (residual, pobj);
            if residual <= settings.tol {
                return IpmResult {
                    outcome: Outcome::Optimal,
                    point: p,
                    primal_obj: pobj,
                    residual,
                    iterations: iter,
                };
            }
            if iter > 5 && self.farkas(&p.y, trace_scale) {
                return IpmResult {
                    outcome: Outcome::Infeasible,
                    point: p,
                    primal_obj: pobj,
                    residual,
                    iterations: iter,
                };
            }

            let mu = (p.x_psd.iter().zip(&p.z_psd).map(|(x, z)| x.dot(z)).sum::<f64>() + p.x_lp.dot(&p.z_lp)) / nu;

            let mut xl = Vec::with_capacity(self.psd_dims.len());
            let mut zl = Vec::with_capacity(self.psd_dims.len());
            let mut zinv = Vec::with_capacity(self.psd_dims.len());
            let mut broken = false;
            for k in 0..self.psd_dims.len() {
                match (Cholesky::new(p.x_psd[k].clone()), Cholesky::new(p.z_psd[k].clone())) {
                    (Some(cx), Some(cz)) => {
                        xl.push(cx.l());
                        zinv.push(sym(&cz.inverse()));
                        zl.push(cz.l());
                    }
                    _ => {
                        broken = true;
                        break;
                    }
                }
            }
            if broken {
                break;
            }
            let m = self.schur(&p, &zinv);
            let schur = match Cholesky::new(m.clone()) {
                Some(c) => c,
                None => {
                    let d = m.diagonal().max().max(1e-300);
                    let mut reg = m.clone();
                    for i in 0..reg.nrows() {
                        reg[(i, i)] += 1e-13 * d;
                    }
                    match Cholesky::new(reg) {
                        Some(c) => c,
                        None => break,
                    }
                }
            };
            let f = Factored { zinv, schur };

            // Predictor: drive X Z to zero.
            let zero_psd: Vec<DMatrix<f64>> = self.psd_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
            let zero_lp = DVector::zeros(self.lp_dim);
            let pred = self.direction(&p, &f, &rp, &rd_psd, &rd_lp, &zero_psd, &zero_lp);
            let (ap, ad) = self.step_lengths(&p, &xl, &zl, &pred);
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut mu_aff = 0.0;
            for k in 0..self.psd_dims.len() {
                let x = &p.x_psd[k] + &pred.dx_psd[k] * ap;
                let z = &p.z_psd[k] + &pred.dz_psd[k] * ad;
                mu_aff += x.dot(&z);
            }
            mu_aff += (&p.x_lp + &pred.dx_lp * ap).dot(&(&p.z_lp + &pred.dz_lp * ad));
            mu_aff /= nu;
            let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
            let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

            // Corrector with second-order term.
            let target_psd: Vec<DMatrix<f64>> = (0..self.psd_dims.len())
                .map(|k| {
                    DMatrix::identity(self.psd_dims[k], self.psd_dims[k]) * (sigma * mu)
                        - &pred.dx_psd[k] * &pred.dz_psd[k]
                })
                .collect();
            let target_lp = DVector::from_iterator(
                self.lp_dim,
                (0..self.lp_dim).map(|i| sigma * mu - pred.dx_lp[i] * pred.dz_lp[i]),
            );
            let d = self.direction(&p, &f, &rp, &rd_psd, &rd_lp, &target_psd, &target_lp);
            let (ap, ad) = self.step_lengths(&p, &xl, &zl, &d);
            let ap = (step_frac * ap).min(1.0);
            let ad = (step_frac * ad).min(1.0);
            step_frac = 0.9 + 0.09 * ap.min(ad);

            if ap < 1e-10 && ad < 1e-10 {
                stalls += 1;
                if stalls > 3 {
                    break;
                }
            } else {
                stalls = 0;
            }

            for k in 0..self.psd_dims.len() {
                p.x_psd[k] = sym(&(&p.x_psd[k] + &d.dx_psd[k] * ap));
                p.z_psd[k] = sym(&(&p.z_psd[k] + &d.dz_psd[k] * ad));
            }
            p.x_lp += &d.dx_lp * ap;
            p.z_lp += &d.dz_lp * ad;
            p.y += &d.dy * ad;
            // Guard against round-off pushing orthant entries out of the cone.
            for v in p.x_lp.iter_mut().chain(p.z_lp.iter_mut()) {
                *v = v.max(1e-300);
            }
        }
        IpmResult {
            outcome: Outcome::Stalled,
            primal_obj: last.1,
            residual: last.0,
            iterations: settings.max_iter,
            point: p,
        }
    }
}
