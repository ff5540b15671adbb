//! Channel families induced by tensor and commuting models.
//!
//! Conventions, fixed because moment extraction depends on them:
//!
//! - the ancilla pair `A'B'` has composite index `(k, s) ↦ k·n + s`;
//! - density matrices on `A'B'` are vectorized row-major, so the
//!   superoperator `S` maps `vec(ρ)[a·n² + b] = ρ[a, b]` to `vec(Λ(ρ))`;
//! - the Schrödinger form is `Λ(ρ) = Tr_env[W† (ρ ⊗ σ) W]` with
//!   `W = (U ⊗ 1)(1 ⊗ V)`.
//!
//! With these conventions the moment table and superoperator are related by
//! `S[(k,s)·n² + (j,r), (l,t)·n² + (i,p)] = T[i,j,l,k,p,r,t,s]`.

use serde::{Deserialize, Serialize};

use crate::matcore::{herm_eig, kron, permute_registers, ComplexMatrix, RegisterDims, C64, TOL_BASE, ZERO};
use crate::models::{CommutingModel, Model, State, TensorModel};
use crate::{Error, Result};

/// Largest ancilla dimension accepted unless the caller raises the limit.
pub const DEFAULT_MAX_N: usize = 4;

/// Trace-preservation tolerance of the CPTP audit.
pub const TP_TOL: f64 = 1e-10;
/// Choi positivity tolerance of the CPTP audit.
pub const CHOI_TOL: f64 = 1e-9;

/// Superoperators `S[x][y]` of size `n⁴ × n⁴`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelFamily {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "super")]
    pub superops: Vec<Vec<ComplexMatrix>>,
}

impl ChannelFamily {
    pub fn new(n: usize, superops: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        let m = superops.len();
        let d = n.pow(4);
        if m == 0 || superops.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch("channel family must be an m×m grid".into()));
        }
        if let Some(s) = superops.iter().flatten().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch(format!("superoperator of dim {} (expected n⁴ = {d})", s.dim())));
        }
        Ok(Self { n, m, superops })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self { n, m, superops: vec![vec![ComplexMatrix::identity(n.pow(4)); m]; m] }
    }

    /// `Λ_xy(ρ)` for any `n² × n²` matrix (no state check).
    pub fn apply_one(&self, x: usize, y: usize, rho: &ComplexMatrix) -> ComplexMatrix {
        let out = self.superops[x][y].mul_vec(rho.as_slice());
        ComplexMatrix::from_vec(self.n * self.n, out).expect("n⁴ entries")
    }

    /// Largest entrywise difference across the whole family.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.m), (other.n, other.m), "channel families of different shape");
        self.superops
            .iter()
            .flatten()
            .zip(other.superops.iter().flatten())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// `Λ_xy(E_ab)` for composite indices `a, b` of `A'B'`.
    pub fn image_of_unit(&self, x: usize, y: usize, a: usize, b: usize) -> ComplexMatrix {
        let s = self.n * self.n;
        let sup = &self.superops[x][y];
        ComplexMatrix::from_fn(s, |c, d| sup[(c * s + d, a * s + b)])
    }
}

/// `T[x][y][i,j,l,k,p,r,t,s] = φ(u^x_ij (u^x_lk)* ⊗ v^y_pr (v^y_ts)*)`, stored
/// densely row-major in the index order `i,j,l,k,p,r,t,s`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub n: usize,
    pub m: usize,
    tables: Vec<Vec<Vec<C64>>>,
}

impl MomentTable {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, tables: vec![vec![vec![ZERO; n.pow(8)]; m]; m] }
    }

    #[inline]
    pub fn index(&self, idx: [usize; 8]) -> usize {
        idx.iter().fold(0, |acc, &v| acc * self.n + v)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, idx: [usize; 8]) -> C64 {
        self.tables[x][y][self.index(idx)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, idx: [usize; 8], v: C64) {
        let k = self.index(idx);
        self.tables[x][y][k] = v;
    }

    pub fn raw(&self, x: usize, y: usize) -> &[C64] {
        &self.tables[x][y]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.m), (other.n, other.m), "moment tables of different shape");
        self.tables
            .iter()
            .flatten()
            .zip(other.tables.iter().flatten())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
    }

    /// `max |T[i,j,l,k,p,r,t,s] − conj T[l,k,i,j,t,s,p,r]|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for x in 0..self.m {
            for y in 0..self.m {
                for_each_index(n, |[i, j, l, k, p, r, t, s]| {
                    let a = self.get(x, y, [i, j, l, k, p, r, t, s]);
                    let b = self.get(x, y, [l, k, i, j, t, s, p, r]).conj();
                    worst = worst.max((a - b).norm());
                });
            }
        }
        worst
    }

    /// Worst violation of the unitarity contractions
    /// `Σ_j T[i,j,l,j,p,r,t,s] = δ_il Φ1V[p,r,t,s]`,
    /// `Σ_r T[i,j,l,k,p,r,t,r] = δ_pt ΦU1[i,j,l,k]` and
    /// `Σ_{j,r} T[i,j,l,j,p,r,t,r] = δ_il δ_pt`, where the one-sided moments
    /// `Φ1V`, `ΦU1` are read off the `i = l = 0` (resp. `p = t = 0`) slice.
    pub fn contraction_defect(&self) -> f64 {
        let n = self.n;
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut worst = 0.0f64;
        for x in 0..self.m {
            for y in 0..self.m {
                let u_legs = |i, l, p, r, t, s| (0..n).map(|j| self.get(x, y, [i, j, l, j, p, r, t, s])).sum::<C64>();
                let v_legs = |i, j, l, k, p, t| (0..n).map(|r| self.get(x, y, [i, j, l, k, p, r, t, r])).sum::<C64>();
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                let phi_1v = u_legs(0, 0, a, b, c, d);
                                let phi_u1 = v_legs(a, b, c, d, 0, 0);
                                for e in 0..n {
                                    for f in 0..n {
                                        let lhs = u_legs(e, f, a, b, c, d);
                                        worst = worst.max((lhs - phi_1v * delta(e, f)).norm());
                                        let lhs = v_legs(a, b, c, d, e, f);
                                        worst = worst.max((lhs - phi_u1 * delta(e, f)).norm());
                                    }
                                }
                            }
                        }
                    }
                }
                for i in 0..n {
                    for l in 0..n {
                        for p in 0..n {
                            for t in 0..n {
                                let both: C64 = (0..n)
                                    .flat_map(|j| (0..n).map(move |r| (j, r)))
                                    .map(|(j, r)| self.get(x, y, [i, j, l, j, p, r, t, r]))
                                    .sum();
                                worst = worst.max((both - C64::new(delta(i, l) * delta(p, t), 0.0)).norm());
                            }
                        }
                    }
                }
            }
        }
        worst
    }
}

fn for_each_index(n: usize, mut f: impl FnMut([usize; 8])) {
    let total = n.pow(8);
    for mut k in 0..total {
        let mut idx = [0usize; 8];
        for slot in idx.iter_mut().rev() {
            *slot = k % n;
            k /= n;
        }
        f(idx);
    }
}

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::AncillaTooLarge { n, limit });
    }
    Ok(())
}

/// Ancilla limit from `UICHAN_MAX_N`, falling back to [`DEFAULT_MAX_N`].
pub fn max_n_from_env() -> usize {
    std::env::var("UICHAN_MAX_N").ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_MAX_N)
}

/// Global coupling unitaries `W_xy` in `(A', B', env)` order together with
/// the environment state and dimension.
struct Coupling {
    /// `w[x][y]`
    w: Vec<Vec<ComplexMatrix>>,
    sigma: ComplexMatrix,
    env: usize,
}

fn tensor_coupling(t: &TensorModel) -> Result<Coupling> {
    let (n, da, db) = (t.n, t.d_a, t.d_b);
    let hb_first = RegisterDims::new([n, db])?;
    let full = RegisterDims::new([n, da, db, n])?;
    let u_full: Vec<_> = t.u.iter().map(|u| kron(u, &ComplexMatrix::identity(db * n))).collect();
    let v_full = t
        .v
        .iter()
        .map(|v| Ok(kron(&ComplexMatrix::identity(n * da), &permute_registers(v, &hb_first, &[1, 0])?)))
        .collect::<Result<Vec<_>>>()?;
    let w = u_full
        .iter()
        .map(|u| v_full.iter().map(|v| permute_registers(&(u * v), &full, &[0, 3, 1, 2])).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(Coupling { w, sigma: t.state.to_density(), env: da * db })
}

fn commuting_coupling(c: &CommutingModel) -> Result<Coupling> {
    let (n, d) = (c.n, c.d);
    let h_first = RegisterDims::new([n, d])?;
    let full = RegisterDims::new([n, d, n])?;
    let u_full: Vec<_> = c.u.iter().map(|u| kron(u, &ComplexMatrix::identity(n))).collect();
    let v_full = c
        .v
        .iter()
        .map(|v| Ok(kron(&ComplexMatrix::identity(n), &permute_registers(v, &h_first, &[1, 0])?)))
        .collect::<Result<Vec<_>>>()?;
    let w = u_full
        .iter()
        .map(|u| v_full.iter().map(|v| permute_registers(&(u * v), &full, &[0, 2, 1])).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(Coupling { w, sigma: c.state.to_density(), env: d })
}

/// Superoperator of `ρ ↦ Tr_env[W† (ρ ⊗ σ) W]` for `W` in `(sys, env)` order,
/// assembled column by column from matrix-unit inputs.
fn superop_from_coupling(w: &ComplexMatrix, sigma: &ComplexMatrix, sys: usize, env: usize) -> ComplexMatrix {
    let dim = sys * env;
    let wd = w.as_slice();
    // y[b][f][(d, e)] = Σ_g σ[f, g] W[(b, g), (d, e)]
    let mut y = vec![ZERO; sys * env * dim];
    for b in 0..sys {
        for f in 0..env {
            let out = &mut y[(b * env + f) * dim..(b * env + f + 1) * dim];
            for g in 0..env {
                let s = sigma[(f, g)];
                if s == ZERO {
                    continue;
                }
                let row = &wd[(b * env + g) * dim..(b * env + g + 1) * dim];
                for (o, wv) in out.iter_mut().zip(row) {
                    *o += s * wv;
                }
            }
        }
    }
    // Λ(E_ab)[c, d] = Σ_{e, f} conj(W[(a, f), (c, e)]) · y[b][f][(d, e)]
    let mut sup = ComplexMatrix::zeros(sys * sys);
    for a in 0..sys {
        for b in 0..sys {
            let col = a * sys + b;
            for c in 0..sys {
                for d in 0..sys {
                    let mut acc = ZERO;
                    for f in 0..env {
                        let wrow = &wd[(a * env + f) * dim + c * env..(a * env + f) * dim + (c + 1) * env];
                        let yrow = &y[(b * env + f) * dim + d * env..(b * env + f) * dim + (d + 1) * env];
                        for (wv, yv) in wrow.iter().zip(yrow) {
                            acc += wv.conj() * yv;
                        }
                    }
                    sup[(c * sys + d, col)] = acc;
                }
            }
        }
    }
    sup
}

/// Channel family from the defining conjugation formula.
pub fn channel_direct(model: &Model) -> Result<ChannelFamily> {
    channel_direct_with_limit(model, DEFAULT_MAX_N)
}

pub fn channel_direct_with_limit(model: &Model, max_n: usize) -> Result<ChannelFamily> {
    check_limit(model.n(), max_n)?;
    model.ensure_valid()?;
    let coupling = match model {
        Model::Tensor(t) => tensor_coupling(t)?,
        Model::Commuting(c) => commuting_coupling(c)?,
    };
    let n = model.n();
    let superops = coupling
        .w
        .iter()
        .map(|row| row.iter().map(|w| superop_from_coupling(w, &coupling.sigma, n * n, coupling.env)).collect())
        .collect();
    ChannelFamily::new(n, superops)
}

/// `Λ_xy(ρ)` evaluated literally: align `ρ ⊗ σ` into model register order,
/// conjugate by the full `W†·W`, and partially trace the environment.
/// Quadratically more expensive than [`channel_direct`]; used as a check.
pub fn evolve_direct(model: &Model, x: usize, y: usize, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    model.ensure_valid()?;
    let n = model.n();
    if rho.dim() != n * n {
        return Err(Error::DimensionMismatch(format!("input of dim {} for n = {n}", rho.dim())));
    }
    let (w, joint, dims, keep) = match model {
        Model::Tensor(t) => {
            let (da, db) = (t.d_a, t.d_b);
            let hb_first = RegisterDims::new([n, db])?;
            let u = kron(&t.u[x], &ComplexMatrix::identity(db * n));
            let v = kron(&ComplexMatrix::identity(n * da), &permute_registers(&t.v[y], &hb_first, &[1, 0])?);
            // ρ ⊗ σ is (A', B', H_A, H_B); move to (A', H_A, H_B, B')
            let joint = permute_registers(
                &kron(rho, &t.state.to_density()),
                &RegisterDims::new([n, n, da, db])?,
                &[0, 2, 3, 1],
            )?;
            (&u * &v, joint, RegisterDims::new([n, da, db, n])?, vec![0, 3])
        }
        Model::Commuting(c) => {
            let d = c.d;
            let h_first = RegisterDims::new([n, d])?;
            let u = kron(&c.u[x], &ComplexMatrix::identity(n));
            let v = kron(&ComplexMatrix::identity(n), &permute_registers(&c.v[y], &h_first, &[1, 0])?);
            let joint =
                permute_registers(&kron(rho, &c.state.to_density()), &RegisterDims::new([n, n, d])?, &[0, 2, 1])?;
            (&u * &v, joint, RegisterDims::new([n, d, n])?, vec![0, 2])
        }
    };
    let evolved = &(&w.adjoint() * &joint) * &w;
    crate::matcore::partial_trace(&evolved, &dims, &keep)
}

fn block_products(w: &ComplexMatrix, n: usize, d: usize) -> Vec<ComplexMatrix> {
    // products[(i, j, l, k)] = w_ij w_lk†
    let blocks: Vec<ComplexMatrix> = (0..n * n).map(|q| w.block(d, q / n, q % n)).collect();
    let adj: Vec<ComplexMatrix> = blocks.iter().map(ComplexMatrix::adjoint).collect();
    let mut out = Vec::with_capacity(n.pow(4));
    for ij in 0..n * n {
        for lk in 0..n * n {
            out.push(&blocks[ij] * &adj[lk]);
        }
    }
    out
}

/// Moment table evaluated against the model state.
pub fn moment_table(model: &Model) -> Result<MomentTable> {
    moment_table_with_limit(model, DEFAULT_MAX_N)
}

pub fn moment_table_with_limit(model: &Model, max_n: usize) -> Result<MomentTable> {
    check_limit(model.n(), max_n)?;
    model.ensure_valid()?;
    let n = model.n();
    let m = model.m();
    let n4 = n.pow(4);
    let mut table = MomentTable::zeros(n, m);
    match model {
        Model::Tensor(t) => {
            let (da, db) = (t.d_a, t.d_b);
            let sigma = t.state.to_density();
            for x in 0..m {
                // z[(i,j,l,k)][c, c'] = Σ_{a,b} σ[(a,c),(b,c')] (u_ij u_lk†)[b, a]
                let z: Vec<ComplexMatrix> = block_products(&t.u[x], n, da)
                    .iter()
                    .map(|a_op| {
                        ComplexMatrix::from_fn(db, |c, c2| {
                            let mut acc = ZERO;
                            for a in 0..da {
                                for b in 0..da {
                                    acc += sigma[(a * db + c, b * db + c2)] * a_op[(b, a)];
                                }
                            }
                            acc
                        })
                    })
                    .collect();
                for y in 0..m {
                    let b_ops = block_products(&t.v[y], n, db);
                    let dst = &mut table.tables[x][y];
                    for (ua, za) in z.iter().enumerate() {
                        for (vb, b_op) in b_ops.iter().enumerate() {
                            dst[ua * n4 + vb] = za.trace_product(b_op);
                        }
                    }
                }
            }
        }
        Model::Commuting(c) => {
            let d = c.d;
            let rho = c.state.to_density();
            for x in 0..m {
                let rho_a: Vec<ComplexMatrix> = block_products(&c.u[x], n, d).iter().map(|a| &rho * a).collect();
                for y in 0..m {
                    let b_ops = block_products(&c.v[y], n, d);
                    let dst = &mut table.tables[x][y];
                    for (ua, ra) in rho_a.iter().enumerate() {
                        for (vb, b_op) in b_ops.iter().enumerate() {
                            dst[ua * n4 + vb] = ra.trace_product(b_op);
                        }
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Asymmetry above which a moment table is rejected.
pub const MOMENT_SYMMETRY_TOL: f64 = 1e-6;

/// `Λ_xy(ρ) = Σ_{j,k,r,s} [Σ_{i,l,p,t} T[i,j,l,k,p,r,t,s] ρ_(l,t),(i,p)] E_kj ⊗ E_sr`.
pub fn channel_from_moments(table: &MomentTable) -> Result<ChannelFamily> {
    channel_from_moments_with_limit(table, DEFAULT_MAX_N)
}

pub fn channel_from_moments_with_limit(table: &MomentTable, max_n: usize) -> Result<ChannelFamily> {
    let n = table.n;
    check_limit(n, max_n)?;
    let defect = table.symmetry_defect();
    if defect > MOMENT_SYMMETRY_TOL {
        return Err(Error::AsymmetricMoments(defect));
    }
    let s = n * n;
    let superops = (0..table.m)
        .map(|x| {
            (0..table.m)
                .map(|y| {
                    let mut sup = ComplexMatrix::zeros(s * s);
                    for_each_index(n, |[i, j, l, k, p, r, t, ss]| {
                        let row = (k * n + ss) * s + (j * n + r);
                        let col = (l * n + t) * s + (i * n + p);
                        sup[(row, col)] = table.get(x, y, [i, j, l, k, p, r, t, ss]);
                    });
                    sup
                })
                .collect()
        })
        .collect();
    ChannelFamily::new(n, superops)
}

/// `T[i,j,l,k,p,r,t,s]` is the `((k,s), (j,r))` entry of `Λ_xy(E_li ⊗ E_tp)`.
pub fn moments_from_channel(channel: &ChannelFamily) -> MomentTable {
    let n = channel.n;
    let s = n * n;
    let mut table = MomentTable::zeros(n, channel.m);
    for x in 0..channel.m {
        for y in 0..channel.m {
            let sup = &channel.superops[x][y];
            let dst = &mut table.tables[x][y];
            let mut pos = 0;
            for_each_index(n, |[i, j, l, k, p, r, t, ss]| {
                dst[pos] = sup[((k * n + ss) * s + (j * n + r), (l * n + t) * s + (i * n + p))];
                pos += 1;
            });
        }
    }
    table
}

/// `J_xy = Σ_{ab} E_ab ⊗ Λ_xy(E_ab)`, `choi[x][y]`.
pub fn choi(channel: &ChannelFamily) -> Vec<Vec<ComplexMatrix>> {
    let s = channel.n * channel.n;
    channel
        .superops
        .iter()
        .map(|row| {
            row.iter()
                .map(|sup| ComplexMatrix::from_fn(s * s, |r, c| sup[((r % s) * s + c % s, (r / s) * s + c / s)]))
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptpReport {
    /// Smallest Choi eigenvalue over all `(x, y)`.
    pub min_choi_eigenvalue: f64,
    /// `max_ab |Tr Λ(E_ab) − δ_ab|` over all `(x, y)`.
    pub trace_defect: f64,
    /// Largest Choi hermiticity defect (Frobenius).
    pub choi_hermiticity_defect: f64,
    pub passed: bool,
}

pub fn cptp_report(channel: &ChannelFamily) -> Result<CptpReport> {
    let s = channel.n * channel.n;
    let mut trace_defect = 0.0f64;
    for row in &channel.superops {
        for sup in row {
            for a in 0..s {
                for b in 0..s {
                    let tr: C64 = (0..s).map(|c| sup[(c * s + c, a * s + b)]).sum();
                    let target = if a == b { 1.0 } else { 0.0 };
                    trace_defect = trace_defect.max((tr - C64::new(target, 0.0)).norm());
                }
            }
        }
    }
    let mut min_eig = f64::INFINITY;
    let mut herm = 0.0f64;
    for j in choi(channel).iter().flatten() {
        herm = herm.max(j.hermiticity_defect());
        let (vals, _) = herm_eig(j)?;
        min_eig = min_eig.min(vals[0]);
    }
    Ok(CptpReport {
        min_choi_eigenvalue: min_eig,
        trace_defect,
        choi_hermiticity_defect: herm,
        passed: min_eig >= -CHOI_TOL && trace_defect <= TP_TOL,
    })
}

/// `{Λ_xy(ρ)}_{x,y}` for a density matrix `ρ` on `A'B'`.
pub fn apply(channel: &ChannelFamily, rho: &ComplexMatrix) -> Result<Vec<Vec<ComplexMatrix>>> {
    let s = channel.n * channel.n;
    if rho.dim() != s {
        return Err(Error::DimensionMismatch(format!("input of dim {} for n = {}", rho.dim(), channel.n)));
    }
    let state = State::Density(rho.clone());
    if !state.is_valid() {
        return Err(Error::NotAState(format!("defect {:.3e}", state.defect())));
    }
    Ok((0..channel.m).map(|x| (0..channel.m).map(|y| channel.apply_one(x, y, rho)).collect()).collect())
}

/// Tolerance of per-output state checks after [`apply`].
pub fn output_tolerance(n: usize) -> f64 {
    TOL_BASE * (n * n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{seeded_rng, wishart_density};
    use crate::models::{
        diagonal_fourier_lift, embed_tensor_as_commuting, identity_model, random_model, swap_model, ModelKind,
        StateKind, Strategy,
    };

    #[test]
    fn identity_model_gives_identity_channel() {
        for (n, m) in [(2, 1), (2, 2), (3, 1)] {
            let model = Model::Tensor(identity_model(n, m, 2, 2));
            let ch = channel_direct(&model).unwrap();
            assert!(ch.max_abs_diff(&ChannelFamily::identity(n, m)) < 1e-15);
        }
    }

    #[test]
    fn identity_moments_are_deltas() {
        let model = Model::Tensor(identity_model(2, 1, 2, 3));
        let t = moment_table(&model).unwrap();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for_each_index(2, |[i, j, l, k, p, r, tt, s]| {
            let expect = d(i, j) * d(l, k) * d(p, r) * d(tt, s);
            assert!((t.get(0, 0, [i, j, l, k, p, r, tt, s]) - C64::new(expect, 0.0)).norm() < 1e-15);
        });
        let ch = channel_from_moments(&t).unwrap();
        assert!(ch.max_abs_diff(&ChannelFamily::identity(2, 1)) < 1e-15);
        assert_eq!(moments_from_channel(&ChannelFamily::identity(2, 1)), t);
    }

    #[test]
    fn scalar_ancilla_moment_is_one() {
        let model = random_model(ModelKind::Tensor, 1, 2, 2, 2, StateKind::Density, 3);
        let t = moment_table(&model).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!((t.get(x, y, [0; 8]) - C64::new(1.0, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn swap_model_outputs_resource_state() {
        let mut rng = seeded_rng(12);
        for n in [2, 3] {
            let sigma = wishart_density(n * n, &mut rng);
            let model = Model::Tensor(swap_model(n, sigma.clone()).unwrap());
            let ch = channel_direct(&model).unwrap();
            for _ in 0..3 {
                let rho = wishart_density(n * n, &mut rng);
                let out = apply(&ch, &rho).unwrap();
                assert!(out[0][0].max_abs_diff(&sigma) <= 1e-12);
                assert!(evolve_direct(&model, 0, 0, &rho).unwrap().max_abs_diff(&sigma) <= 1e-12);
            }
            let via_moments = channel_from_moments(&moment_table(&model).unwrap()).unwrap();
            let rho = wishart_density(n * n, &mut rng);
            assert!(via_moments.apply_one(0, 0, &rho).max_abs_diff(&sigma) <= 1e-12);
        }
    }

    #[test]
    fn swap_choi_is_identity_tensor_resource() {
        let mut rng = seeded_rng(5);
        let sigma = wishart_density(4, &mut rng);
        let ch = channel_direct(&Model::Tensor(swap_model(2, sigma.clone()).unwrap())).unwrap();
        let j = &choi(&ch)[0][0];
        assert!(j.max_abs_diff(&kron(&ComplexMatrix::identity(4), &sigma)) < 1e-14);
        assert!(cptp_report(&ch).unwrap().passed);
    }

    #[test]
    fn identity_choi_is_maximally_entangled() {
        let ch = ChannelFamily::identity(2, 1);
        let j = &choi(&ch)[0][0];
        let omega: Vec<C64> =
            (0..16).map(|k| if k / 4 == k % 4 { C64::new(1.0, 0.0) } else { ZERO }).collect();
        assert_eq!(*j, ComplexMatrix::outer(&omega));
        let rep = cptp_report(&ch).unwrap();
        assert!(rep.min_choi_eigenvalue.abs() < 1e-12);
        assert_eq!(rep.trace_defect, 0.0);
    }

    #[test]
    fn direct_matches_literal_evolution() {
        let mut rng = seeded_rng(99);
        for (kind, seed) in [(ModelKind::Tensor, 1), (ModelKind::CommutingViaEmbedding, 2)] {
            let model = random_model(kind, 2, 2, 2, 3, StateKind::Density, seed);
            let ch = channel_direct(&model).unwrap();
            let rho = wishart_density(4, &mut rng);
            for x in 0..2 {
                for y in 0..2 {
                    let lit = evolve_direct(&model, x, y, &rho).unwrap();
                    assert!(ch.apply_one(x, y, &rho).max_abs_diff(&lit) < 1e-13);
                }
            }
        }
    }

    #[test]
    fn dual_formula_agrees_on_random_models() {
        for seed in 0..6 {
            let kind = if seed % 2 == 0 { ModelKind::Tensor } else { ModelKind::CommutingViaEmbedding };
            let sk = if seed % 3 == 0 { StateKind::Vector } else { StateKind::Density };
            let model = random_model(kind, 2, 2, 2, 2, sk, seed);
            let direct = channel_direct(&model).unwrap();
            let t = moment_table(&model).unwrap();
            assert!(t.symmetry_defect() < 1e-12);
            assert!(t.contraction_defect() < 1e-10, "{}", t.contraction_defect());
            let via = channel_from_moments(&t).unwrap();
            assert!(direct.max_abs_diff(&via) <= 1e-10);
        }
    }

    #[test]
    fn embedding_preserves_channel() {
        let Model::Tensor(t) = random_model(ModelKind::Tensor, 2, 2, 2, 3, StateKind::Density, 31) else {
            unreachable!()
        };
        let a = channel_direct(&Model::Tensor(t.clone())).unwrap();
        let b = channel_direct(&Model::Commuting(embed_tensor_as_commuting(&t))).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn moments_round_trip() {
        let model = random_model(ModelKind::Tensor, 2, 2, 2, 2, StateKind::Vector, 4);
        let t = moment_table(&model).unwrap();
        let back = moments_from_channel(&channel_from_moments(&t).unwrap());
        assert!(back.max_abs_diff(&t) <= 1e-10);
    }

    #[test]
    fn asymmetric_table_rejected() {
        let mut t = moment_table(&Model::Tensor(identity_model(2, 1, 1, 1))).unwrap();
        t.set(0, 0, [0, 1, 0, 0, 0, 0, 0, 0], C64::new(0.0, 0.5));
        assert!(matches!(channel_from_moments(&t), Err(Error::AsymmetricMoments(_))));
    }

    #[test]
    fn diagonal_moments_of_lift_match_state_expectations() {
        let mut rng = seeded_rng(71);
        let strat = Strategy::random(2, 2, 2, 2, &mut rng).unwrap();
        let lifted = diagonal_fourier_lift(&strat.alice, &strat.bob, &strat.state).unwrap();
        let ub = crate::bell::unitaries_from_pvm(&strat.alice).unwrap();
        let vb = crate::bell::unitaries_from_pvm(&strat.bob).unwrap();
        let t = moments_from_channel(&channel_direct(&Model::Tensor(lifted)).unwrap());
        for x in 0..2 {
            for y in 0..2 {
                for_each_index(2, |[j, _, k, _, r, _, s, _]| {
                    let op = kron(&(&ub[x][j] * &ub[x][k].adjoint()), &(&vb[y][r] * &vb[y][s].adjoint()));
                    let expect = strat.state.expect(&op);
                    assert!((t.get(x, y, [j, j, k, k, r, r, s, s]) - expect).norm() <= 1e-10);
                });
            }
        }
    }

    #[test]
    fn apply_checks_state_and_preserves_trace() {
        let model = random_model(ModelKind::Tensor, 2, 2, 2, 2, StateKind::Density, 8);
        let ch = channel_direct(&model).unwrap();
        let mixed = ComplexMatrix::identity(4).scale(C64::new(0.25, 0.0));
        for out in apply(&ch, &mixed).unwrap().iter().flatten() {
            assert!((out.trace() - C64::new(1.0, 0.0)).norm() <= 1e-12);
            assert!(out.is_psd());
        }
        let bad = ComplexMatrix::identity(4);
        assert!(matches!(apply(&ch, &bad), Err(Error::NotAState(_))));
        assert!(matches!(apply(&ch, &ComplexMatrix::identity(3)), Err(Error::DimensionMismatch(_))));
        let id = ChannelFamily::identity(2, 2);
        let rho = wishart_density(4, &mut seeded_rng(0));
        assert!(apply(&id, &rho).unwrap().iter().flatten().all(|o| *o == rho));
    }

    #[test]
    fn ancilla_limit_enforced() {
        let model = Model::Tensor(identity_model(5, 1, 1, 1));
        assert!(matches!(channel_direct(&model), Err(Error::AncillaTooLarge { n: 5, limit: 4 })));
        assert!(channel_direct_with_limit(&model, 5).is_ok());
    }

    #[test]
    fn invalid_model_rejected() {
        let mut t = identity_model(2, 1, 2, 2);
        t.v[0][(1, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(channel_direct(&Model::Tensor(t)), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn channel_json_schema() {
        let ch = ChannelFamily::identity(2, 1);
        let s = serde_json::to_string(&ch).unwrap();
        assert!(s.starts_with(r#"{"n":2,"m":1,"super":[[{"dim":16,"#));
        assert_eq!(serde_json::from_str::<ChannelFamily>(&s).unwrap(), ch);
    }
}
