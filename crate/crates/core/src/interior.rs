//! Primal-dual interior point method for `max sum_k f_k(a_k . y)` over the
//! assignment polytope, with Mehrotra predictor-corrector steps.
//!
//! Student rows have disjoint supports, so the Newton system with a diagonal
//! block is solved per student in closed form. The objective Hessian and the
//! school rows add a rank `g + m` term, which is handled by a Woodbury
//! update with a small dense Cholesky factor.

use crate::error::{Error, Result};
use crate::instance::Instance;

/// A smooth concave objective through the group utility vectors.
pub(crate) trait Separable {
    /// `(f_k(x), f_k'(x), -f_k''(x))`.
    fn eval(&self, k: usize, x: f64) -> (f64, f64, f64);
}

pub(crate) struct InteriorResult {
    pub y: Vec<f64>,
    pub upper_bound: f64,
    pub iterations: usize,
    pub trace: Vec<(f64, f64)>,
}

const MAX_ITER: usize = 200;
const FEAS_TOL: f64 = 1e-10;
const STEP_FRACTION: f64 = 0.995;

/// `groups[k]` lists `(edge, utility)` for active group `k`.
pub(crate) fn interior_point(
    inst: &Instance,
    groups: &[Vec<(usize, f64)>],
    obj: &dyn Separable,
    eps: f64,
) -> Result<InteriorResult> {
    let ne = inst.n_edges();
    let n = inst.n_students();
    let m = inst.n_schools();
    let g = groups.len();
    let student: Vec<usize> = inst.edges().iter().map(|e| e.student).collect();
    let school: Vec<usize> = inst.edges().iter().map(|e| e.school).collect();
    let cap: Vec<f64> = inst.capacities().iter().map(|&c| c as f64).collect();

    let mut y = vec![0.0; ne];
    for i in 0..n {
        let es = inst.student_edges(i);
        for &e in es {
            y[e] = 1.0 / es.len() as f64;
        }
    }
    let mut s: Vec<f64> = (0..m)
        .map(|j| {
            let load: f64 = inst.school_edges(j).iter().map(|&e| y[e]).sum();
            (cap[j] - load).max(1.0)
        })
        .collect();
    let mut z = vec![1.0; ne];
    let mut nu = vec![1.0; m];
    let mut lambda = vec![0.0; n];

    let utilities = |y: &[f64]| -> Vec<f64> {
        groups.iter().map(|row| row.iter().map(|&(e, u)| u * y[e]).sum()).collect()
    };
    let big_n = (ne + m) as f64;
    let mut trace = Vec::new();
    let mut best: Option<(f64, f64)> = None;

    for it in 1..=MAX_ITER {
        let u = utilities(&y);
        let mut h = 0.0;
        let mut grad = vec![0.0; ne];
        let mut curv = vec![0.0; g];
        for k in 0..g {
            let (f, df, c) = obj.eval(k, u[k]);
            h += f;
            curv[k] = c;
            for &(e, a) in &groups[k] {
                grad[e] += df * a;
            }
        }
        let r_d: Vec<f64> = (0..ne).map(|e| grad[e] - lambda[student[e]] - nu[school[e]] + z[e]).collect();
        let mut r_p1 = vec![1.0; n];
        let mut r_p2: Vec<f64> = (0..m).map(|j| cap[j] - s[j]).collect();
        for e in 0..ne {
            r_p1[student[e]] -= y[e];
            r_p2[school[e]] -= y[e];
        }
        let comp: f64 = (0..ne).map(|e| y[e] * z[e]).sum::<f64>() + (0..m).map(|j| s[j] * nu[j]).sum::<f64>();
        let mu = comp / big_n;

        // Concavity bound over y' in [0,1]^E with A y' = 1, B y' <= C.
        let slack_bound: f64 = (0..ne).map(|e| (r_d[e] * (1.0 - y[e])).max(-r_d[e] * y[e])).sum();
        let ub = h
            + (0..n).map(|i| lambda[i] * r_p1[i]).sum::<f64>()
            + (0..m).map(|j| nu[j] * (s[j] + r_p2[j])).sum::<f64>()
            + (0..ne).map(|e| z[e] * y[e]).sum::<f64>()
            + slack_bound;
        let feas = r_p1.iter().chain(&r_p2).fold(0.0f64, |a, &b| a.max(b.abs()));
        let feasible = feas <= FEAS_TOL * (1.0 + cap.iter().copied().fold(0.0, f64::max));
        if feasible {
            let b = best.map_or(ub, |(_, b)| b.min(ub));
            best = Some((h, b));
            trace.push((h, b));
            if b - h <= eps * h.abs().max(1.0) {
                return Ok(InteriorResult { y, upper_bound: b, iterations: it, trace });
            }
        }
        if !h.is_finite() || !mu.is_finite() {
            return Err(Error::Internal("interior point diverged".into()));
        }

        let d: Vec<f64> = (0..ne).map(|e| z[e] / y[e]).collect();
        let reg: Vec<f64> = (0..m).map(|j| s[j] / nu[j]).collect();
        let system = NewtonSystem::new(inst, &d, groups, &curv, &reg, &student)?;

        let direction = |rc1: &[f64], rc2: &[f64]| {
            let r1: Vec<f64> = (0..ne).map(|e| r_d[e] + rc1[e] / y[e]).collect();
            let (dy, dl, dnu) = system.solve(&r1, &r_p1, |j, bdy| bdy - r_p2[j] + rc2[j] / nu[j]);
            let ds: Vec<f64> = (0..m).map(|j| (rc2[j] - s[j] * dnu[j]) / nu[j]).collect();
            let dz: Vec<f64> = (0..ne).map(|e| (rc1[e] - z[e] * dy[e]) / y[e]).collect();
            Step { dy, dl, dz, ds, dnu }
        };

        let rc1: Vec<f64> = (0..ne).map(|e| -y[e] * z[e]).collect();
        let rc2: Vec<f64> = (0..m).map(|j| -s[j] * nu[j]).collect();
        let aff = direction(&rc1, &rc2);
        let a_aff = aff.max_step(&y, &z, &s, &nu).min(1.0);
        let mu_aff = ((0..ne).map(|e| (y[e] + a_aff * aff.dy[e]) * (z[e] + a_aff * aff.dz[e])).sum::<f64>()
            + (0..m).map(|j| (s[j] + a_aff * aff.ds[j]) * (nu[j] + a_aff * aff.dnu[j])).sum::<f64>())
            / big_n;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc1: Vec<f64> = (0..ne).map(|e| sigma * mu - y[e] * z[e] - aff.dy[e] * aff.dz[e]).collect();
        let rc2: Vec<f64> = (0..m).map(|j| sigma * mu - s[j] * nu[j] - aff.ds[j] * aff.dnu[j]).collect();
        let step = direction(&rc1, &rc2);
        let alpha = (STEP_FRACTION * step.max_step(&y, &z, &s, &nu)).min(1.0);
        for e in 0..ne {
            y[e] += alpha * step.dy[e];
            z[e] += alpha * step.dz[e];
        }
        for j in 0..m {
            s[j] += alpha * step.ds[j];
            nu[j] += alpha * step.dnu[j];
        }
        for i in 0..n {
            lambda[i] += alpha * step.dl[i];
        }
    }
    Err(Error::Internal(format!("interior point did not converge in {MAX_ITER} iterations")))
}

struct Step {
    dy: Vec<f64>,
    dl: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dnu: Vec<f64>,
}

impl Step {
    /// Largest step keeping `y, z, s, nu` positive.
    fn max_step(&self, y: &[f64], z: &[f64], s: &[f64], nu: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for (v, dv) in [(y, &self.dy), (z, &self.dz), (s, &self.ds), (nu, &self.dnu)] {
            for (x, dx) in v.iter().zip(dv.iter()) {
                if *dx < 0.0 {
                    a = a.min(-x / dx);
                }
            }
        }
        a
    }
}

/// Newton system in `(dy, dl, dnu)`:
/// `[[D + U U^T, A^T, B^T], [A, 0, 0], [B, 0, -R]]` with `D`, `R` diagonal,
/// `A` the student rows, `B` the school rows and `U` the curvature columns.
/// `(dy, dl)` are eliminated first (per student, plus Woodbury on `U`), then
/// `dnu` solves the `m x m` Schur complement `B P B^T + R`.
struct NewtonSystem<'a> {
    inv_d: Vec<f64>,
    inv_sum: Vec<f64>,
    student: &'a [usize],
    edges_of: Vec<&'a [usize]>,
    school_edges: Vec<&'a [usize]>,
    cols: Vec<Vec<f64>>,
    p_y: Vec<Vec<f64>>,
    p_l: Vec<Vec<f64>>,
    chol: Vec<f64>,
    q_y: Vec<Vec<f64>>,
    q_l: Vec<Vec<f64>>,
    schur: Vec<f64>,
}

impl<'a> NewtonSystem<'a> {
    fn new(
        inst: &'a Instance,
        d: &[f64],
        groups: &[Vec<(usize, f64)>],
        curv: &[f64],
        reg: &[f64],
        student: &'a [usize],
    ) -> Result<Self> {
        let ne = d.len();
        let n = inst.n_students();
        let m = inst.n_schools();
        let inv_d: Vec<f64> = d.iter().map(|&v| 1.0 / v).collect();
        let mut inv_sum = vec![0.0; n];
        for e in 0..ne {
            inv_sum[student[e]] += inv_d[e];
        }
        let mut sys = NewtonSystem {
            inv_d,
            inv_sum,
            student,
            edges_of: (0..n).map(|i| inst.student_edges(i)).collect(),
            school_edges: (0..m).map(|j| inst.school_edges(j)).collect(),
            cols: Vec::new(),
            p_y: Vec::new(),
            p_l: Vec::new(),
            chol: Vec::new(),
            q_y: Vec::new(),
            q_l: Vec::new(),
            schur: Vec::new(),
        };
        let zeros = vec![0.0; n];
        let mut cols = Vec::new();
        for (k, row) in groups.iter().enumerate() {
            if curv[k] > 0.0 {
                let w = curv[k].sqrt();
                let mut c = vec![0.0; ne];
                for &(e, a) in row {
                    c[e] += w * a;
                }
                let (py, pl) = sys.solve_diag(&c, &zeros);
                sys.p_y.push(py);
                sys.p_l.push(pl);
                cols.push(c);
            }
        }
        let r = cols.len();
        let mut gmat = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..=a {
                let v: f64 = cols[a].iter().zip(&sys.p_y[b]).map(|(x, y)| x * y).sum();
                gmat[a * r + b] = v + if a == b { 1.0 } else { 0.0 };
                gmat[b * r + a] = gmat[a * r + b];
            }
        }
        sys.chol = cholesky(gmat, r).ok_or_else(|| Error::Internal("interior point system not positive definite".into()))?;
        sys.cols = cols;

        for j in 0..m {
            let mut b = vec![0.0; ne];
            for &e in sys.school_edges[j] {
                b[e] = 1.0;
            }
            let (qy, ql) = sys.solve_curv(&b, &zeros);
            sys.q_y.push(qy);
            sys.q_l.push(ql);
        }
        let mut schur = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let v: f64 = sys.school_edges[a].iter().map(|&e| sys.q_y[b][e]).sum();
                schur[a * m + b] = v;
                schur[b * m + a] = v;
            }
            schur[a * m + a] += reg[a];
        }
        // The school rows sum to the student rows, so B P B^T is singular
        // along the all-ones vector and only `reg` keeps it definite; a small
        // shift absorbs rounding there.
        let scale = (0..m).map(|a| schur[a * m + a]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut shift = 1e-14 * scale;
        sys.schur = loop {
            let mut shifted = schur.clone();
            for a in 0..m {
                shifted[a * m + a] += shift;
            }
            if let Some(l) = cholesky(shifted, m) {
                break l;
            }
            shift *= 100.0;
            if shift > scale {
                return Err(Error::Internal("interior point school system singular".into()));
            }
        };
        Ok(sys)
    }

    /// Solves with the diagonal block only, student by student.
    fn solve_diag(&self, g: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dl = vec![0.0; q.len()];
        for (i, es) in self.edges_of.iter().enumerate() {
            let t: f64 = es.iter().map(|&e| g[e] * self.inv_d[e]).sum();
            dl[i] = (t - q[i]) / self.inv_sum[i];
        }
        let dy = (0..g.len()).map(|e| (g[e] - dl[self.student[e]]) * self.inv_d[e]).collect();
        (dy, dl)
    }

    /// Solves `[[D + U U^T, A^T], [A, 0]]`.
    fn solve_curv(&self, g: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut dy, mut dl) = self.solve_diag(g, q);
        let r = self.cols.len();
        let t: Vec<f64> = self.cols.iter().map(|c| c.iter().zip(&dy).map(|(a, b)| a * b).sum()).collect();
        let alpha = cholesky_solve(&self.chol, r, t);
        subtract_combination(&mut dy, &mut dl, &alpha, &self.p_y, &self.p_l);
        (dy, dl)
    }

    /// Full solve; `school_rhs(j, (B dy0)_j)` gives the Schur right-hand side.
    fn solve(&self, g: &[f64], q: &[f64], school_rhs: impl Fn(usize, f64) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut dy, mut dl) = self.solve_curv(g, q);
        let m = self.school_edges.len();
        let rhs: Vec<f64> = (0..m)
            .map(|j| school_rhs(j, self.school_edges[j].iter().map(|&e| dy[e]).sum()))
            .collect();
        let dnu = cholesky_solve(&self.schur, m, rhs);
        subtract_combination(&mut dy, &mut dl, &dnu, &self.q_y, &self.q_l);
        (dy, dl, dnu)
    }
}

fn subtract_combination(dy: &mut [f64], dl: &mut [f64], coef: &[f64], py: &[Vec<f64>], pl: &[Vec<f64>]) {
    for (c, &a) in coef.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (x, p) in dy.iter_mut().zip(&py[c]) {
            *x -= a * p;
        }
        for (x, p) in dl.iter_mut().zip(&pl[c]) {
            *x -= a * p;
        }
    }
}

/// Lower-triangular factor of a symmetric positive definite row-major matrix.
fn cholesky(mut a: Vec<f64>, r: usize) -> Option<Vec<f64>> {
    for j in 0..r {
        let mut diag = a[j * r + j];
        for k in 0..j {
            diag -= a[j * r + k] * a[j * r + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let diag = diag.sqrt();
        a[j * r + j] = diag;
        for i in j + 1..r {
            let mut v = a[i * r + j];
            for k in 0..j {
                v -= a[i * r + k] * a[j * r + k];
            }
            a[i * r + j] = v / diag;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &[f64], r: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in 0..r {
        for k in 0..i {
            b[i] -= l[i * r + k] * b[k];
        }
        b[i] /= l[i * r + i];
    }
    for i in (0..r).rev() {
        for k in i + 1..r {
            b[i] -= l[k * r + i] * b[k];
        }
        b[i] /= l[i * r + i];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(a.clone(), 3).unwrap();
        let x = cholesky_solve(&l, 3, vec![1.0, 2.0, 3.0]);
        for i in 0..3 {
            let v: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((v - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        assert!(cholesky(vec![1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
