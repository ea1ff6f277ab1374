//! Splitting solver for the weighted joint program.
//!
//! Every nonsmooth term gets its own copy of the variables it touches:
//!
//! * one copy of each `S_k` carrying the weighted linear term and the
//!   feasibility indicator,
//! * a pair of copies `(S_k, S_l)` for each active `beta` difference term,
//! * one copy of each `P_k` for its group (or nuclear) penalty,
//! * a pair of copies `(P_k, P_l)` for each active stacked group term.
//!
//! The quadratic step minimizes the commutativity penalty plus the augmented
//! terms. In the eigenbasis of `C_k` the commutator is diagonal, so the step
//! splits into independent 4x4 problems over `(s_ij, s_ji, p_ij, p_ji)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::config::{AdmmConfig, Mode, Resolved};
use crate::error::{Error, Result};
use crate::prox::{
    group_soft_threshold, project_feasible, soft_threshold, stacked_group_soft_threshold,
    svd_soft_threshold,
};

const NORM_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    S = 0,
    P = 1,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, Default)]
struct Residuals {
    r2: f64,
    x2: f64,
    z2: f64,
    d2: f64,
    u2: f64,
}

impl Residuals {
    /// Normalized (primal, dual) residuals under penalty `rho`.
    fn normalized(&self, rho: f64) -> (f64, f64) {
        (
            self.r2.sqrt() / self.x2.sqrt().max(self.z2.sqrt()).max(NORM_FLOOR),
            self.d2.sqrt() / self.u2.sqrt().max(NORM_FLOOR / rho),
        )
    }
}

#[derive(Debug, Clone)]
struct Slot {
    graph: usize,
    var: Var,
    z: DMatrix<f64>,
    u: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Feasible { slot: usize },
    PairL1 { a: usize, b: usize, beta: f64 },
    Group { slot: usize, gamma: f64 },
    Nuclear { slot: usize, gamma: f64 },
    Stacked { a: usize, b: usize, eta: f64 },
}

/// Outcome of one inner solve over a group of coupled graphs.
#[derive(Debug, Clone)]
pub(crate) struct InnerOutcome {
    pub s: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub rho: [f64; 2],
    pub converged: bool,
}

/// Eigendecomposition of one covariance block.
struct Basis {
    q: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl Basis {
    fn new(c: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
        Basis {
            q: eig.eigenvectors,
            lambda: eig.eigenvalues,
        }
    }

    fn to_eig(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.q.transpose() * m * &self.q
    }

    fn from_eig(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * m * self.q.transpose()
    }
}

/// Minimizes `mu ||C S - S C + P - P^T||^2 + a ||S - vs||^2 + b ||P - vp||^2`
/// over `(S, P)`; with `vp = None` the lift is pinned to zero.
fn quadratic_step(
    basis: &Basis,
    mu: f64,
    a: f64,
    vs: &DMatrix<f64>,
    lift: Option<(f64, &DMatrix<f64>)>,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let o = vs.nrows();
    let mut s = basis.to_eig(vs);
    let lam = &basis.lambda;
    match lift {
        None => {
            for i in 0..o {
                for j in 0..o {
                    let d = lam[i] - lam[j];
                    s[(i, j)] *= a / (a + mu * d * d);
                }
            }
            (basis.from_eig(&s), None)
        }
        Some((b, vp)) => {
            let mut p = basis.to_eig(vp);
            for i in 0..o {
                for j in i + 1..o {
                    let d = lam[i] - lam[j];
                    let (s1, s2, p1, p2) = (s[(i, j)], s[(j, i)], p[(i, j)], p[(j, i)]);
                    // Residuals of the two coupled commutator entries at the prox centre.
                    let r1 = d * s1 + p1 - p2;
                    let r2 = -d * s2 - p1 + p2;
                    // Woodbury on diag(a, a, b, b) + mu G G^T.
                    let c = 1.0 + mu * (d * d / a + 2.0 / b);
                    let e = -2.0 * mu / b;
                    let det = c * c - e * e;
                    let y1 = mu * (c * r1 - e * r2) / det;
                    let y2 = mu * (-e * r1 + c * r2) / det;
                    s[(i, j)] = s1 - d * y1 / a;
                    s[(j, i)] = s2 + d * y2 / a;
                    p[(i, j)] = p1 - (y1 - y2) / b;
                    p[(j, i)] = p2 + (y1 - y2) / b;
                }
            }
            (basis.from_eig(&s), Some(basis.from_eig(&p)))
        }
    }
}

/// Runs the splitting iterations for graphs coupled through `r`.
pub(crate) fn solve_group(
    cov: &[DMatrix<f64>],
    weights: &[DMatrix<f64>],
    r: &Resolved,
    admm: &AdmmConfig,
    start_s: &[DMatrix<f64>],
    start_p: &[DMatrix<f64>],
    start_rho: [f64; 2],
) -> Result<InnerOutcome> {
    let k = r.k;
    let o = cov[0].nrows();
    let lift = r.mode.has_lift();
    let bases: Vec<Basis> = cov.iter().map(Basis::new).collect();

    let mut s: Vec<DMatrix<f64>> = start_s.to_vec();
    let mut p: Vec<DMatrix<f64>> = if lift {
        start_p.to_vec()
    } else {
        vec![DMatrix::zeros(o, o); k]
    };

    let mut slots: Vec<Slot> = Vec::new();
    let mut terms: Vec<Term> = Vec::new();
    let mut new_slot = |graph: usize, var: Var, init: &DMatrix<f64>| {
        slots.push(Slot {
            graph,
            var,
            z: init.clone(),
            u: DMatrix::zeros(o, o),
        });
        slots.len() - 1
    };
    for g in 0..k {
        terms.push(Term::Feasible {
            slot: new_slot(g, Var::S, &s[g]),
        });
    }
    for (i, j, beta) in Resolved::active_pairs(&r.beta) {
        let a = new_slot(i, Var::S, &s[i]);
        let b = new_slot(j, Var::S, &s[j]);
        terms.push(Term::PairL1 { a, b, beta });
    }
    if lift {
        for g in 0..k {
            let slot = new_slot(g, Var::P, &p[g]);
            let gamma = r.gamma[g];
            terms.push(match r.mode {
                Mode::Pnn => Term::Nuclear { slot, gamma },
                _ => Term::Group { slot, gamma },
            });
        }
        for (i, j, eta) in Resolved::active_pairs(&r.eta) {
            let a = new_slot(i, Var::P, &p[i]);
            let b = new_slot(j, Var::P, &p[j]);
            terms.push(Term::Stacked { a, b, eta });
        }
    }

    let count = |g: usize, v: Var| {
        slots
            .iter()
            .filter(|sl| sl.graph == g && sl.var == v)
            .count()
    };
    let n_s: Vec<usize> = (0..k).map(|g| count(g, Var::S)).collect();
    let n_p: Vec<usize> = (0..k).map(|g| count(g, Var::P)).collect();

    // Separate penalties for S copies and P copies, balanced independently.
    let mut rho = start_rho;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut old_z: Vec<DMatrix<f64>> = slots.iter().map(|sl| sl.z.clone()).collect();
    let relax = admm.relaxation;

    for iter in 1..=admm.max_iters {
        // Quadratic step per graph.
        for g in 0..k {
            let mean = |v: Var, n: usize| {
                let mut acc = DMatrix::zeros(o, o);
                for sl in slots.iter().filter(|sl| sl.graph == g && sl.var == v) {
                    acc += &sl.z - &sl.u;
                }
                acc / n as f64
            };
            let vs = mean(Var::S, n_s[g]);
            let a = 0.5 * rho[0] * n_s[g] as f64;
            if lift {
                let vp = mean(Var::P, n_p[g]);
                let b = 0.5 * rho[1] * n_p[g] as f64;
                let (ns, np) = quadratic_step(&bases[g], r.mu[g], a, &vs, Some((b, &vp)));
                s[g] = ns;
                p[g] = np.expect("lift requested");
            } else {
                s[g] = quadratic_step(&bases[g], r.mu[g], a, &vs, None).0;
            }
        }

        for (old, sl) in old_z.iter_mut().zip(&slots) {
            old.copy_from(&sl.z);
        }
        // Over-relaxed point: relax * x + (1 - relax) * z_old.
        let x_of = |sl: &Slot, s: &[DMatrix<f64>], p: &[DMatrix<f64>]| {
            let x = match sl.var {
                Var::S => &s[sl.graph],
                Var::P => &p[sl.graph],
            };
            if relax == 1.0 {
                x.clone()
            } else {
                x * relax + &sl.z * (1.0 - relax)
            }
        };

        // Proximal steps.
        let (rs, rp) = (rho[0], rho[1]);
        for term in &terms {
            match *term {
                Term::Feasible { slot } => {
                    let g = slots[slot].graph;
                    let v = x_of(&slots[slot], &s, &p) + &slots[slot].u
                        - &weights[g] * (r.alpha[g] / rs);
                    slots[slot].z = project_feasible(&v)?;
                }
                Term::PairL1 { a, b, beta } => {
                    let va = x_of(&slots[a], &s, &p) + &slots[a].u;
                    let vb = x_of(&slots[b], &s, &p) + &slots[b].u;
                    let mid = (&va + &vb) * 0.5;
                    let diff = soft_threshold(&(&va - &vb), 2.0 * beta / rs);
                    slots[a].z = &mid + &diff * 0.5;
                    slots[b].z = &mid - &diff * 0.5;
                }
                Term::Group { slot, gamma } => {
                    let v = x_of(&slots[slot], &s, &p) + &slots[slot].u;
                    slots[slot].z = group_soft_threshold(&v, gamma / rp);
                }
                Term::Nuclear { slot, gamma } => {
                    let v = x_of(&slots[slot], &s, &p) + &slots[slot].u;
                    slots[slot].z = svd_soft_threshold(&v, gamma / rp)?;
                }
                Term::Stacked { a, b, eta } => {
                    let va = x_of(&slots[a], &s, &p) + &slots[a].u;
                    let vb = x_of(&slots[b], &s, &p) + &slots[b].u;
                    let (za, zb) = stacked_group_soft_threshold(&va, &vb, eta / rp)?;
                    slots[a].z = za;
                    slots[b].z = zb;
                }
            }
        }

        // Dual ascent and residuals, accumulated per variable kind.
        let mut stats = [Residuals::default(); 2];
        let mut dz: Vec<DMatrix<f64>> = vec![DMatrix::zeros(o, o); 2 * k];
        let mut usum: Vec<DMatrix<f64>> = vec![DMatrix::zeros(o, o); 2 * k];
        for (sl, old) in slots.iter_mut().zip(&old_z) {
            let x = match sl.var {
                Var::S => &s[sl.graph],
                Var::P => &p[sl.graph],
            };
            let st = &mut stats[sl.var as usize];
            let gap = x - &sl.z;
            st.r2 += gap.norm_squared();
            st.x2 += x.norm_squared();
            st.z2 += sl.z.norm_squared();
            if relax == 1.0 {
                sl.u += &gap;
            } else {
                sl.u += x * relax + old * (1.0 - relax) - &sl.z;
            }
            let idx = 2 * sl.graph + sl.var as usize;
            dz[idx] += &sl.z - old;
            usum[idx] += &sl.u;
        }
        for (idx, (d, u)) in dz.iter().zip(&usum).enumerate() {
            let st = &mut stats[idx % 2];
            st.d2 += d.norm_squared();
            st.u2 += u.norm_squared();
        }
        let per_kind = [stats[0].normalized(rho[0]), stats[1].normalized(rho[1])];
        let total = Residuals {
            r2: stats[0].r2 + stats[1].r2,
            x2: stats[0].x2 + stats[1].x2,
            z2: stats[0].z2 + stats[1].z2,
            d2: 0.0,
            u2: 0.0,
        };
        primal = total.r2.sqrt() / total.x2.sqrt().max(total.z2.sqrt()).max(NORM_FLOOR);
        let dual_num = (rho[0] * rho[0] * stats[0].d2 + rho[1] * rho[1] * stats[1].d2).sqrt();
        let dual_den = (rho[0] * rho[0] * stats[0].u2 + rho[1] * rho[1] * stats[1].u2).sqrt();
        dual = dual_num / dual_den.max(NORM_FLOOR);

        if iter % 100 == 0 {
            log::trace!("iter {iter}: primal {primal:.3e} dual {dual:.3e} rho {rho:?}");
        }
        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::Numerical(format!(
                "residuals diverged at iteration {iter}"
            )));
        }
        if primal <= admm.primal_tol && dual <= admm.dual_tol {
            return Ok(finish(
                &slots, &terms, k, o, lift, iter, primal, dual, rho, true,
            ));
        }

        if admm.balance_every > 0 && iter % admm.balance_every == 0 {
            for kind in 0..if lift { 2 } else { 1 } {
                let (pr, du) = per_kind[kind];
                if pr <= admm.primal_tol && du <= admm.dual_tol {
                    continue;
                }
                let scale = if pr > admm.balance_ratio * du && rho[kind] < RHO_MAX {
                    2.0
                } else if du > admm.balance_ratio * pr && rho[kind] > RHO_MIN {
                    0.5
                } else {
                    continue;
                };
                rho[kind] *= scale;
                for sl in slots.iter_mut().filter(|sl| sl.var as usize == kind) {
                    sl.u /= scale;
                }
            }
        }
    }
    Ok(finish(
        &slots,
        &terms,
        k,
        o,
        lift,
        admm.max_iters,
        primal,
        dual,
        rho,
        false,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    slots: &[Slot],
    terms: &[Term],
    k: usize,
    o: usize,
    lift: bool,
    iterations: usize,
    primal: f64,
    dual: f64,
    rho: [f64; 2],
    converged: bool,
) -> InnerOutcome {
    let mut s = vec![DMatrix::zeros(o, o); k];
    let mut p = vec![DMatrix::zeros(o, o); k];
    for term in terms {
        match *term {
            Term::Feasible { slot } => s[slots[slot].graph] = slots[slot].z.clone(),
            Term::Group { slot, .. } | Term::Nuclear { slot, .. } if lift => {
                p[slots[slot].graph] = slots[slot].z.clone()
            }
            _ => {}
        }
    }
    InnerOutcome {
        s,
        p,
        iterations,
        primal,
        dual,
        rho,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense normal-equation solve of the quadratic step over all 2 O^2 unknowns.
    fn dense_quadratic(
        c: &DMatrix<f64>,
        mu: f64,
        a: f64,
        vs: &DMatrix<f64>,
        b: f64,
        vp: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let o = c.nrows();
        let n = 2 * o * o;
        let eval = |x: &DVector<f64>| {
            let s = DMatrix::from_column_slice(o, o, &x.as_slice()[..o * o]);
            let p = DMatrix::from_column_slice(o, o, &x.as_slice()[o * o..]);
            c * &s - &s * c + &p - p.transpose()
        };
        // Columns of the linear map x -> vec(residual).
        let mut l = DMatrix::zeros(o * o, n);
        for col in 0..n {
            let mut e = DVector::zeros(n);
            e[col] = 1.0;
            l.set_column(col, &DVector::from_column_slice(eval(&e).as_slice()));
        }
        let mut diag = DVector::zeros(n);
        let mut rhs = DVector::zeros(n);
        for i in 0..o * o {
            diag[i] = a;
            rhs[i] = a * vs.as_slice()[i];
            diag[o * o + i] = b;
            rhs[o * o + i] = b * vp.as_slice()[i];
        }
        let h = l.transpose() * &l * mu + DMatrix::from_diagonal(&diag);
        let x = h.cholesky().unwrap().solve(&rhs);
        (
            DMatrix::from_column_slice(o, o, &x.as_slice()[..o * o]),
            DMatrix::from_column_slice(o, o, &x.as_slice()[o * o..]),
        )
    }

    #[test]
    fn eigenbasis_step_matches_dense_solve() {
        let o = 4;
        let raw = DMatrix::from_fn(o, o, |i, j| ((i * 3 + j * 5) % 7) as f64 * 0.3 - 0.4);
        let c = &raw * raw.transpose() + DMatrix::identity(o, o);
        let vs = DMatrix::from_fn(o, o, |i, j| (i as f64 - 0.5 * j as f64).sin());
        let vp = DMatrix::from_fn(o, o, |i, j| (0.7 * i as f64 + j as f64).cos());
        let (mu, a, b) = (3.0, 0.8, 1.7);
        let basis = Basis::new(&c);
        let (s, p) = quadratic_step(&basis, mu, a, &vs, Some((b, &vp)));
        let (ds, dp) = dense_quadratic(&c, mu, a, &vs, b, &vp);
        assert!((s - ds).amax() < 1e-10);
        assert!((p.unwrap() - dp).amax() < 1e-10);
    }

    #[test]
    fn pinned_lift_step_matches_dense_solve() {
        let o = 3;
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let vs = DMatrix::from_fn(o, o, |i, j| (i + 2 * j) as f64 * 0.1);
        let basis = Basis::new(&c);
        let (s, p) = quadratic_step(&basis, 5.0, 0.5, &vs, None);
        assert!(p.is_none());
        // Huge b pins P to its (zero) centre.
        let (ds, _) = dense_quadratic(&c, 5.0, 0.5, &vs, 1e9, &DMatrix::zeros(o, o));
        assert!((s - ds).amax() < 1e-6);
    }
}
