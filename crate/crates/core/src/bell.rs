//! Bridge between channel families and Bell behaviours.
//!
//! A PVM `{P_{a|x}}_a` with `n` outcomes is encoded in the unitaries
//! `u^x_{a'} = Σ_a ω^{a·a'} P_{a|x}` (`ω = e^{2πi/n}`, labels 1-based) and
//! recovered by the inverse transform `P_{a|x} = Σ_{a'} c_{aa'} u^x_{a'}` with
//! `c_{aa'} = ω^{-a·a'}/n`. For a channel family the same coefficients applied
//! to the diagonal moments `T[j,j,k,k,r,r,s,s]` give the raw values
//! `q(ab|xy) = φ(M_{a|x} ⊗ N_{b|y})` of the sub-POVMs
//! `M_{a|x} = (Σ_j c_aj u_jj)(Σ_k c_ak u_kk)*`. The last outcome absorbs the
//! defect `1 − Σ_a M_{a|x}` so that the completed table is normalized.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::channels::{moments_from_channel, ChannelFamily, MomentTable};
use crate::matcore::{ComplexMatrix, C64, ZERO};
use crate::models::{PvmFamily, State, Strategy};
use crate::{Error, Result};

/// Imaginary residue above which extraction fails.
pub const IMAG_RESIDUE_ERROR: f64 = 1e-6;
/// Imaginary residue tolerated silently.
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// `c[a][a'] = e^{−2πi·a·a'/n} / n` with `a, a'` taken 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoeffs {
    pub n: usize,
    pub c: Vec<Vec<C64>>,
}

impl FourierCoeffs {
    #[inline]
    pub fn get(&self, a: usize, a_prime: usize) -> C64 {
        self.c[a][a_prime]
    }

    /// `max_{a,b} |Σ_{a'} c[a][a'] e^{2πi·b·a'/n} − δ_ab|`.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let s: C64 = (0..n).map(|ap| self.c[a][ap] * phase(n, (b + 1) * (ap + 1), 1.0)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// `e^{sign·2πi·k/n}`, with `k` reduced mod `n` so integer multiples of 2π
/// are exact.
fn phase(n: usize, k: usize, sign: f64) -> C64 {
    let k = k % n;
    if k == 0 {
        return C64::new(1.0, 0.0);
    }
    if 2 * k == n {
        return C64::new(-1.0, 0.0);
    }
    C64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64)
}

pub fn fourier_coeffs(n: usize) -> FourierCoeffs {
    assert!(n >= 1, "fourier_coeffs: n must be positive");
    let inv = 1.0 / n as f64;
    let c = (0..n).map(|a| (0..n).map(|ap| phase(n, (a + 1) * (ap + 1), -1.0) * inv).collect()).collect();
    FourierCoeffs { n, c }
}

/// `u[x][a'] = Σ_a e^{2πi·a·a'/n} P_{a|x}`; `u[x][n−1]` (label `a' = n`) is the identity.
pub fn unitaries_from_pvm(family: &PvmFamily) -> Result<Vec<Vec<ComplexMatrix>>> {
    family.validate()?;
    let n = family.n;
    Ok(family
        .projectors
        .iter()
        .map(|ps| {
            (0..n)
                .map(|ap| {
                    let mut u = ComplexMatrix::zeros(family.d);
                    for (a, p) in ps.iter().enumerate() {
                        u = &u + &p.scale(phase(n, (a + 1) * (ap + 1), 1.0));
                    }
                    u
                })
                .collect()
        })
        .collect())
}

/// `P_{a|x} = Σ_{a'} c_{aa'} u^x_{a'}`.
pub fn projectors_from_unitaries(us: &[Vec<ComplexMatrix>], coeffs: &FourierCoeffs) -> Vec<Vec<ComplexMatrix>> {
    us.iter()
        .map(|ux| {
            (0..coeffs.n)
                .map(|a| {
                    let d = ux[0].dim();
                    ux.iter().enumerate().fold(ComplexMatrix::zeros(d), |acc, (ap, u)| &acc + &u.scale(coeffs.get(a, ap)))
                })
                .collect()
        })
        .collect()
}

/// `Σ_a M_{a|x}` for a block unitary `U` (n × n grid of d × d blocks),
/// with `M_{a|x} = (Σ_j c_aj u_jj)(Σ_k c_ak u_kk)†`.
pub fn sub_povm_sum(u: &ComplexMatrix, n: usize) -> ComplexMatrix {
    let d = u.dim() / n;
    let coeffs = fourier_coeffs(n);
    let diag: Vec<ComplexMatrix> = (0..n).map(|j| u.block(d, j, j)).collect();
    let mut total = ComplexMatrix::zeros(d);
    for a in 0..n {
        let k = diag.iter().enumerate().fold(ComplexMatrix::zeros(d), |acc, (j, b)| &acc + &b.scale(coeffs.get(a, j)));
        total = &total + &(&k * &k.adjoint());
    }
    total
}

/// `p[a][b][x][y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Behaviour {
    pub n: usize,
    pub m: usize,
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Behaviour {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, p: vec![vec![vec![vec![0.0; m]; m]; n]; n] }
    }

    pub fn check_shape(&self) -> Result<()> {
        let ok = self.p.len() == self.n
            && self.p.iter().all(|pa| {
                pa.len() == self.n && pa.iter().all(|pb| pb.len() == self.m && pb.iter().all(|px| px.len() == self.m))
            });
        if !ok {
            return Err(Error::DimensionMismatch(format!("table is not {n}x{n}x{m}x{m}", n = self.n, m = self.m)));
        }
        Ok(())
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[a][b][x][y]
    }

    /// `max_{xy} |Σ_ab p(ab|xy) − 1|`.
    pub fn normalization_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.m {
            for y in 0..self.m {
                let s: f64 = (0..self.n).flat_map(|a| (0..self.n).map(move |b| (a, b))).map(|(a, b)| self.p[a][b][x][y]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    pub fn min_entry(&self) -> f64 {
        self.p.iter().flatten().flatten().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.p
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .zip(other.p.iter().flatten().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with entries in `[−1e-9, 0)` clamped to zero, for display.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        for v in out.p.iter_mut().flatten().flatten().flatten() {
            if *v < 0.0 && *v >= -1e-9 {
                *v = 0.0;
            }
        }
        out
    }

    /// `a,b,x,y,p` rows with 1-based labels.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("a,b,x,y,p\n");
        for a in 0..self.n {
            for b in 0..self.n {
                for x in 0..self.m {
                    for y in 0..self.m {
                        s.push_str(&format!("{},{},{},{},{}\n", a + 1, b + 1, x + 1, y + 1, self.p[a][b][x][y]));
                    }
                }
            }
        }
        s
    }
}

/// Linear functional on behaviours, `f[a][b][x][y]`; same file schema as [`Behaviour`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellFunctional {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "p", alias = "f")]
    pub f: Vec<Vec<Vec<Vec<f64>>>>,
}

impl BellFunctional {
    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let f = (0..n)
            .map(|a| (0..n).map(|b| (0..m).map(|x| (0..m).map(|y| f(a, b, x, y)).collect()).collect()).collect())
            .collect();
        Self { n, m, f }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.f[a][b][x][y]
    }

    /// Uniform `1/m²`; evaluates to 1 on every behaviour.
    pub fn normalization(n: usize, m: usize) -> Self {
        let w = 1.0 / (m * m) as f64;
        Self::from_fn(n, m, |_, _, _, _| w)
    }

    /// CHSH game winning probability with uniform inputs: win iff
    /// `(a−1) ⊕ (b−1) = (x−1)·(y−1)`.
    pub fn chsh() -> Self {
        Self::from_fn(2, 2, |a, b, x, y| if (a ^ b) == (x & y) { 0.25 } else { 0.0 })
    }

    /// Rewards outcome pair `(a, b)` for every setting pair.
    pub fn deterministic_target(n: usize, m: usize, a0: usize, b0: usize) -> Self {
        let w = 1.0 / (m * m) as f64;
        Self::from_fn(n, m, move |a, b, _, _| if a == a0 && b == b0 { w } else { 0.0 })
    }

    fn check_shape(&self) -> Result<()> {
        Behaviour { n: self.n, m: self.m, p: self.f.clone() }.check_shape()
    }
}

/// `Σ f(ab|xy)·p(ab|xy)`.
pub fn bell_value(b: &Behaviour, f: &BellFunctional) -> Result<f64> {
    if b.n != f.n || b.m != f.m {
        return Err(Error::DimensionMismatch(format!(
            "behaviour (n={}, m={}) vs functional (n={}, m={})",
            b.n, b.m, f.n, f.m
        )));
    }
    b.check_shape()?;
    f.check_shape()?;
    let mut acc = 0.0;
    for a in 0..b.n {
        for bb in 0..b.n {
            for x in 0..b.m {
                for y in 0..b.m {
                    acc += f.get(a, bb, x, y) * b.get(a, bb, x, y);
                }
            }
        }
    }
    Ok(acc)
}

/// `p(ab|xy) = φ(P_{a|x} ⊗ Q_{b|y})`.
pub fn behaviour_direct(alice: &PvmFamily, bob: &PvmFamily, state: &State) -> Result<Behaviour> {
    let strat = Strategy::new(alice.clone(), bob.clone(), state.clone())?;
    let (n, m, da, db) = (alice.n, alice.m, alice.d, bob.d);
    let rho = strat.state.to_density();
    let mut out = Behaviour::zeros(n, m);
    for x in 0..m {
        for a in 0..n {
            // reduced operator on B: Tr_A[ρ (P ⊗ 1)]
            let pa = &alice.projectors[x][a];
            let red = ComplexMatrix::from_fn(db, |c, c2| {
                let mut acc = ZERO;
                for i in 0..da {
                    for k in 0..da {
                        acc += rho[(i * db + c, k * db + c2)] * pa[(k, i)];
                    }
                }
                acc
            });
            for y in 0..m {
                for b in 0..n {
                    out.p[a][b][x][y] = red.trace_product(&bob.projectors[y][b]).re;
                }
            }
        }
    }
    Ok(out)
}

/// Full output of the channel-to-behaviour extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub behaviour: Behaviour,
    /// Real part of the raw values `q(ab|xy)`.
    pub raw: Behaviour,
    /// `max |Im p̂|`.
    pub imag_residue: f64,
    /// `max |p̂ − q|`: size of the completion applied to the last outcomes.
    pub completion_size: f64,
}

fn raw_cell(t: &MomentTable, c: &FourierCoeffs, x: usize, y: usize) -> Vec<Vec<C64>> {
    let n = t.n;
    // diag[(j,k)][(r,s)] = T[j,j,k,k,r,r,s,s]
    let mut out = vec![vec![ZERO; n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut acc = ZERO;
            for j in 0..n {
                for k in 0..n {
                    let ca = c.get(a, j) * c.get(a, k).conj();
                    for r in 0..n {
                        for s in 0..n {
                            let cb = c.get(b, r) * c.get(b, s).conj();
                            acc += ca * cb * t.get(x, y, [j, j, k, k, r, r, s, s]);
                        }
                    }
                }
            }
            out[a][b] = acc;
        }
    }
    out
}

/// `(φ(M_{a|x} ⊗ 1))_a` and `(φ(1 ⊗ N_{b|y}))_b` from the unitarity
/// contractions of the moment table, averaging over the free leg.
fn marginal_cells(t: &MomentTable, c: &FourierCoeffs, x: usize, y: usize) -> (Vec<C64>, Vec<C64>) {
    let n = t.n;
    let inv = 1.0 / n as f64;
    // φ(u_jj u_kk* ⊗ 1) = Σ_r T[j,j,k,k,p,r,p,r] for every p
    let alice_moment = |j: usize, k: usize| -> C64 {
        let mut acc = ZERO;
        for p in 0..n {
            for r in 0..n {
                acc += t.get(x, y, [j, j, k, k, p, r, p, r]);
            }
        }
        acc * inv
    };
    let bob_moment = |r: usize, s: usize| -> C64 {
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += t.get(x, y, [i, j, i, j, r, r, s, s]);
            }
        }
        acc * inv
    };
    let mut ma = vec![ZERO; n];
    let mut nb = vec![ZERO; n];
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                ma[a] += c.get(a, j) * c.get(a, k).conj() * alice_moment(j, k);
                nb[a] += c.get(a, j) * c.get(a, k).conj() * bob_moment(j, k);
            }
        }
    }
    (ma, nb)
}

/// Raw values `q(ab|xy)` as complex numbers, `[x][y][a][b]`.
pub fn raw_behaviour(table: &MomentTable) -> Vec<Vec<Vec<Vec<C64>>>> {
    let c = fourier_coeffs(table.n);
    (0..table.m).map(|x| (0..table.m).map(|y| raw_cell(table, &c, x, y)).collect()).collect()
}

/// Behaviour with the last-outcome completion, plus diagnostics.
pub fn extract_behaviour(channel: &ChannelFamily) -> Result<Extraction> {
    let t = moments_from_channel(channel);
    let (n, m) = (t.n, t.m);
    let c = fourier_coeffs(n);
    let last = n - 1;
    let one = C64::new(1.0, 0.0);

    let mut behaviour = Behaviour::zeros(n, m);
    let mut raw = Behaviour::zeros(n, m);
    let mut imag = 0.0f64;
    let mut completion = 0.0f64;
    for x in 0..m {
        for y in 0..m {
            let q = raw_cell(&t, &c, x, y);
            let (ma, nb) = marginal_cells(&t, &c, x, y);
            let row_sum: Vec<C64> = (0..n).map(|a| (0..n).map(|b| q[a][b]).sum()).collect(); // Σ_b q(ab)
            let col_sum: Vec<C64> = (0..n).map(|b| (0..n).map(|a| q[a][b]).sum()).collect(); // Σ_a q(ab)
            let total: C64 = row_sum.iter().sum();
            let sum_ma: C64 = ma.iter().sum();
            let sum_nb: C64 = nb.iter().sum();
            // φ(D_A ⊗ D_B) with D_A = 1 − Σ_a M_a, D_B = 1 − Σ_b N_b
            let defect_pair = one - sum_ma - sum_nb + total;
            for a in 0..n {
                for b in 0..n {
                    let mut v = q[a][b];
                    if a == last {
                        v += nb[b] - col_sum[b];
                    }
                    if b == last {
                        v += ma[a] - row_sum[a];
                    }
                    if a == last && b == last {
                        v += defect_pair;
                    }
                    imag = imag.max(v.im.abs());
                    completion = completion.max((v - q[a][b]).norm());
                    behaviour.p[a][b][x][y] = v.re;
                    raw.p[a][b][x][y] = q[a][b].re;
                }
            }
        }
    }
    if imag > IMAG_RESIDUE_ERROR {
        return Err(Error::InconsistentChannel(imag));
    }
    Ok(Extraction { behaviour, raw, imag_residue: imag, completion_size: completion })
}

/// Completed behaviour `p̂(ab|xy)` read off a channel family.
pub fn behaviour_from_channel(channel: &ChannelFamily) -> Result<Behaviour> {
    extract_behaviour(channel).map(|e| e.behaviour)
}

/// `Σ_{k,j,s,r} c_aj·conj(c_ak)·c_br·conj(c_bs)·[Λ_xy(E_kj ⊗ E_sr)]_{(k,s),(j,r)}`,
/// read directly from the superoperator.
pub fn lastcond_contraction(channel: &ChannelFamily, a: usize, b: usize, x: usize, y: usize) -> Result<C64> {
    let n = channel.n;
    if a >= n || b >= n || x >= channel.m || y >= channel.m {
        return Err(Error::IndexOutOfRange(format!(
            "(a, b, x, y) = ({a}, {b}, {x}, {y}) with n = {n}, m = {}",
            channel.m
        )));
    }
    let c = fourier_coeffs(n);
    let s2 = n * n;
    let sup = &channel.superops[x][y];
    let mut acc = ZERO;
    for k in 0..n {
        for j in 0..n {
            for s in 0..n {
                for r in 0..n {
                    // input E_kj ⊗ E_sr = E_{(k,s),(j,r)}; output entry ((k,s),(j,r))
                    let idx = (k * n + s) * s2 + (j * n + r);
                    let coeff = c.get(a, j) * c.get(a, k).conj() * c.get(b, r) * c.get(b, s).conj();
                    acc += coeff * sup[(idx, idx)];
                }
            }
        }
    }
    Ok(acc)
}

/// `Φ⁺` with `Z, X` for Alice and `(Z ± X)/√2` for Bob; outcome 1 is the `+1`
/// eigenspace. Attains the quantum CHSH optimum.
pub fn chsh_optimal_strategy() -> Strategy {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = [[1.0, 0.0], [0.0, -1.0]];
    let xm = [[0.0, 1.0], [1.0, 0.0]];
    let observable = |cz: f64, cx: f64| {
        ComplexMatrix::from_fn(2, |i, j| C64::new(cz * z[i][j] + cx * xm[i][j], 0.0))
    };
    let pvm = |obs: &ComplexMatrix| {
        let id = ComplexMatrix::identity(2);
        let half = C64::new(0.5, 0.0);
        vec![(&id + obs).scale(half), (&id - obs).scale(half)]
    };
    let alice = PvmFamily::new(2, vec![pvm(&observable(1.0, 0.0)), pvm(&observable(0.0, 1.0))]).expect("valid");
    let bob = PvmFamily::new(2, vec![pvm(&observable(h, h)), pvm(&observable(h, -h))]).expect("valid");
    let state = State::Vector(vec![C64::new(h, 0.0), ZERO, ZERO, C64::new(h, 0.0)]);
    Strategy::new(alice, bob, state).expect("consistent shapes")
}
