//! Finite-dimensional tensor and commuting models.
//!
//! A block unitary on `ancilla ⊗ system` is stored as an `n × n` grid of
//! `d × d` operator blocks: block `(i, j)` of `U[x]` is `u^x_ij`. Both `U[x]`
//! and `V[y]` use this ancilla-major layout; for `V` the ancilla is `B'`, so the
//! operator acting on `(system, B')` in that order is obtained by swapping the
//! two registers.
//!
//! Register orders used by the channel construction:
//!
//! - tensor model: `(A', H_A, H_B, B')`
//! - commuting model: `(A', H, B')`

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bell::unitaries_from_pvm;
use crate::matcore::{
    haar_unitary_with, haar_vector, kron, permute_registers, seeded_rng, vec_norm, wishart_density, ComplexMatrix,
    RegisterDims, C64, TOL_BASE, ZERO,
};
use crate::{Error, Result};

/// Shared state of the environment: a unit vector or a density matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Vector(Vec<C64>),
    Density(ComplexMatrix),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Vector(v) => v.len(),
            State::Density(m) => m.dim(),
        }
    }

    pub fn to_density(&self) -> ComplexMatrix {
        match self {
            State::Vector(v) => ComplexMatrix::outer(v),
            State::Density(m) => m.clone(),
        }
    }

    /// `φ(X)`: `⟨ψ|X|ψ⟩` or `Tr(ρ X)`.
    pub fn expect(&self, op: &ComplexMatrix) -> C64 {
        match self {
            State::Vector(v) => op.expectation(v),
            State::Density(m) => m.trace_product(op),
        }
    }

    /// Worst violation of normalization / hermiticity / positivity.
    pub fn defect(&self) -> f64 {
        match self {
            State::Vector(v) => (vec_norm(v) - 1.0).abs(),
            State::Density(m) => {
                let herm = m.hermiticity_defect();
                let tr = (m.trace() - C64::new(1.0, 0.0)).norm();
                let neg = match crate::matcore::herm_eig(m) {
                    Ok((vals, _)) => (-vals[0]).max(0.0),
                    Err(_) => f64::INFINITY,
                };
                herm.max(tr).max(neg)
            }
        }
    }

    pub fn tolerance(&self) -> f64 {
        TOL_BASE * self.dim().max(1) as f64
    }

    pub fn is_valid(&self) -> bool {
        self.defect() <= self.tolerance()
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    #[serde(rename = "type")]
    kind: String,
    matrix: RawEntries,
}

/// `{"dim", "re", "im"}` object; holds `dim²` entries for a matrix and `dim`
/// entries for a vector.
#[derive(Serialize, Deserialize)]
struct RawEntries {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, dim, entries): (&str, usize, &[C64]) = match self {
            State::Vector(v) => ("vector", v.len(), v),
            State::Density(m) => ("density", m.dim(), m.as_slice()),
        };
        StateJson {
            kind: kind.to_string(),
            matrix: RawEntries {
                dim,
                re: entries.iter().map(|z| z.re).collect(),
                im: entries.iter().map(|z| z.im).collect(),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = StateJson::deserialize(d)?;
        let m = raw.matrix;
        if m.re.len() != m.im.len() {
            return Err(D::Error::custom("state re/im length mismatch"));
        }
        let entries: Vec<C64> = m.re.into_iter().zip(m.im).map(|(r, i)| C64::new(r, i)).collect();
        match raw.kind.as_str() {
            "vector" => {
                if entries.len() != m.dim {
                    return Err(D::Error::custom(format!("vector state of dim {} has {} entries", m.dim, entries.len())));
                }
                Ok(State::Vector(entries))
            }
            "density" => ComplexMatrix::from_vec(m.dim, entries).map(State::Density).map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("unknown state type {other:?}"))),
        }
    }
}

/// `m` projective measurements with `n` outcomes on a `d`-dimensional space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvmFamily {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    /// `projectors[x][a]`.
    pub projectors: Vec<Vec<ComplexMatrix>>,
}

impl PvmFamily {
    pub fn new(d: usize, projectors: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        let m = projectors.len();
        let n = projectors.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::InvalidModel("PVM family needs at least one setting and one outcome".into()));
        }
        for (x, setting) in projectors.iter().enumerate() {
            if setting.len() != n {
                return Err(Error::InvalidModel(format!("setting {x} has {} outcomes, expected {n}", setting.len())));
            }
            if let Some(p) = setting.iter().find(|p| p.dim() != d) {
                return Err(Error::DimensionMismatch(format!("projector of dim {} in a dim-{d} family", p.dim())));
            }
        }
        Ok(Self { d, m, n, projectors })
    }

    /// Largest projector or completeness violation (Frobenius).
    pub fn defect(&self) -> f64 {
        let id = ComplexMatrix::identity(self.d);
        let mut worst = 0.0f64;
        for setting in &self.projectors {
            let mut sum = ComplexMatrix::zeros(self.d);
            for p in setting {
                worst = worst.max(p.projector_defect());
                sum = &sum + p;
            }
            worst = worst.max((&sum - &id).frobenius_norm());
        }
        worst
    }

    pub fn tolerance(&self) -> f64 {
        TOL_BASE * self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        let defect = self.defect();
        if defect > self.tolerance() {
            return Err(Error::InvalidModel(format!("PVM defect {defect:.3e} exceeds {:.3e}", self.tolerance())));
        }
        Ok(())
    }

    /// Measurement in the columns of `basis`, column `k` assigned to outcome
    /// `k mod n`.
    pub fn from_bases(bases: &[ComplexMatrix], n: usize) -> Result<Self> {
        let d = bases.first().map_or(0, ComplexMatrix::dim);
        let projectors = bases
            .iter()
            .map(|b| {
                let mut ps = vec![ComplexMatrix::zeros(d); n];
                for k in 0..d {
                    let col = b.column(k);
                    ps[k % n] = &ps[k % n] + &ComplexMatrix::outer(&col);
                }
                ps
            })
            .collect();
        Self::new(d, projectors)
    }

    pub fn random<R: Rng + ?Sized>(d: usize, m: usize, n: usize, rng: &mut R) -> Result<Self> {
        let bases: Vec<_> = (0..m).map(|_| haar_unitary_with(d, rng)).collect();
        Self::from_bases(&bases, n)
    }
}

/// Bipartite projective strategy `(P, Q, ψ)` on `H_A ⊗ H_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    #[serde(rename = "P")]
    pub alice: PvmFamily,
    #[serde(rename = "Q")]
    pub bob: PvmFamily,
    pub state: State,
}

impl Strategy {
    pub fn new(alice: PvmFamily, bob: PvmFamily, state: State) -> Result<Self> {
        if alice.n != bob.n || alice.m != bob.m {
            return Err(Error::DimensionMismatch(format!(
                "Alice (m={}, n={}) vs Bob (m={}, n={})",
                alice.m, alice.n, bob.m, bob.n
            )));
        }
        if state.dim() != alice.d * bob.d {
            return Err(Error::DimensionMismatch(format!(
                "state of dim {} for local dims {}x{}",
                state.dim(),
                alice.d,
                bob.d
            )));
        }
        Ok(Self { alice, bob, state })
    }

    pub fn random<R: Rng + ?Sized>(d_a: usize, d_b: usize, m: usize, n: usize, rng: &mut R) -> Result<Self> {
        let alice = PvmFamily::random(d_a, m, n, rng)?;
        let bob = PvmFamily::random(d_b, m, n, rng)?;
        let state = State::Vector(haar_vector(d_a * d_b, rng));
        Self::new(alice, bob, state)
    }
}

/// Soft validation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub max_unitarity_defect: f64,
    /// Worst `‖u v − v u‖_F` over all block pairs; 0 for tensor models.
    pub max_commutator: f64,
    /// Worst `‖u† v − v u†‖_F`.
    pub max_adjoint_commutator: f64,
    pub state_defect: f64,
    pub tol: f64,
    pub accepted: bool,
}

/// Tensor model: `σ` on `H_A ⊗ H_B`, `U[x]` on `A' ⊗ H_A`, `V[y]` with
/// ancilla-major blocks `v_kl` acting on `H_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorModel {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "dA")]
    pub d_a: usize,
    #[serde(rename = "dB")]
    pub d_b: usize,
    pub state: State,
    #[serde(rename = "U")]
    pub u: Vec<ComplexMatrix>,
    #[serde(rename = "V")]
    pub v: Vec<ComplexMatrix>,
}

impl TensorModel {
    /// Shape-checked construction; numerical defects are reported by
    /// [`TensorModel::report`].
    pub fn new(
        n: usize,
        d_a: usize,
        d_b: usize,
        state: State,
        u: Vec<ComplexMatrix>,
        v: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let model = Self { n, m: u.len(), d_a, d_b, state, u, v };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.n == 0 || self.d_a == 0 || self.d_b == 0 || self.m == 0 {
            return Err(Error::InvalidModel("n, m, dA, dB must be positive".into()));
        }
        if self.u.len() != self.m || self.v.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "m = {} but {} U and {} V unitaries",
                self.m,
                self.u.len(),
                self.v.len()
            )));
        }
        if let Some(u) = self.u.iter().find(|u| u.dim() != self.n * self.d_a) {
            return Err(Error::DimensionMismatch(format!("U of dim {} (expected n·dA = {})", u.dim(), self.n * self.d_a)));
        }
        if let Some(v) = self.v.iter().find(|v| v.dim() != self.n * self.d_b) {
            return Err(Error::DimensionMismatch(format!("V of dim {} (expected n·dB = {})", v.dim(), self.n * self.d_b)));
        }
        if self.state.dim() != self.d_a * self.d_b {
            return Err(Error::DimensionMismatch(format!(
                "state of dim {} (expected dA·dB = {})",
                self.state.dim(),
                self.d_a * self.d_b
            )));
        }
        Ok(())
    }

    pub fn report(&self) -> ModelReport {
        let unit = self.u.iter().chain(&self.v).map(ComplexMatrix::unitarity_defect).fold(0.0, f64::max);
        let state_defect = self.state.defect();
        let tol = TOL_BASE * (self.n * self.d_a.max(self.d_b)).max(self.state.dim()) as f64;
        ModelReport {
            max_unitarity_defect: unit,
            max_commutator: 0.0,
            max_adjoint_commutator: 0.0,
            state_defect,
            tol,
            accepted: unit <= tol && state_defect <= tol,
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.check_shapes()?;
        let r = self.report();
        if !r.accepted {
            return Err(Error::InvalidModel(format!(
                "unitarity defect {:.3e}, state defect {:.3e} (tol {:.3e})",
                r.max_unitarity_defect, r.state_defect, r.tol
            )));
        }
        Ok(())
    }
}

/// Commuting model: `ψ` on `H`, `U[x]` on `A' ⊗ H`, `V[y]` with ancilla-major
/// blocks `v_kl` on `H`; entries of `U` and `V` must commute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutingModel {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub state: State,
    #[serde(rename = "U")]
    pub u: Vec<ComplexMatrix>,
    #[serde(rename = "V")]
    pub v: Vec<ComplexMatrix>,
}

impl CommutingModel {
    pub fn new(n: usize, d: usize, state: State, u: Vec<ComplexMatrix>, v: Vec<ComplexMatrix>) -> Result<Self> {
        let model = Self { n, m: u.len(), d, state, u, v };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.m == 0 {
            return Err(Error::InvalidModel("n, m, d must be positive".into()));
        }
        if self.u.len() != self.m || self.v.len() != self.m {
            return Err(Error::InvalidModel(format!(
                "m = {} but {} U and {} V unitaries",
                self.m,
                self.u.len(),
                self.v.len()
            )));
        }
        if let Some(w) = self.u.iter().chain(&self.v).find(|w| w.dim() != self.n * self.d) {
            return Err(Error::DimensionMismatch(format!("unitary of dim {} (expected n·d = {})", w.dim(), self.n * self.d)));
        }
        if self.state.dim() != self.d {
            return Err(Error::DimensionMismatch(format!("state of dim {} (expected d = {})", self.state.dim(), self.d)));
        }
        Ok(())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.check_shapes()?;
        let r = validate_commuting(self);
        if !r.accepted {
            return Err(Error::InvalidModel(format!(
                "unitarity {:.3e}, commutator {:.3e}/{:.3e}, state {:.3e} (tol {:.3e})",
                r.max_unitarity_defect, r.max_commutator, r.max_adjoint_commutator, r.state_defect, r.tol
            )));
        }
        Ok(())
    }
}

/// Checks unitarity and the entrywise relations `u_ij v_kl = v_kl u_ij`,
/// `u*_ij v_kl = v_kl u*_ij` for every pair of settings.
pub fn validate_commuting(model: &CommutingModel) -> ModelReport {
    let (n, d) = (model.n, model.d);
    let blocks = |w: &ComplexMatrix| -> Vec<ComplexMatrix> {
        (0..n * n).map(|k| w.block(d, k / n, k % n)).collect()
    };
    let u_blocks: Vec<Vec<ComplexMatrix>> = model.u.iter().map(blocks).collect();
    let v_blocks: Vec<Vec<ComplexMatrix>> = model.v.iter().map(blocks).collect();

    let mut comm = 0.0f64;
    let mut adj = 0.0f64;
    for ux in &u_blocks {
        for vy in &v_blocks {
            for u in ux {
                let ud = u.adjoint();
                for v in vy {
                    comm = comm.max((&(u * v) - &(v * u)).frobenius_norm());
                    adj = adj.max((&(&ud * v) - &(v * &ud)).frobenius_norm());
                }
            }
        }
    }
    let unit = model.u.iter().chain(&model.v).map(ComplexMatrix::unitarity_defect).fold(0.0, f64::max);
    let state_defect = model.state.defect();
    let tol = TOL_BASE * (n * d) as f64;
    ModelReport {
        max_unitarity_defect: unit,
        max_commutator: comm,
        max_adjoint_commutator: adj,
        state_defect,
        tol,
        accepted: unit <= tol && comm <= tol && adj <= tol && state_defect <= tol,
    }
}

/// `H = H_A ⊗ H_B`, `u'_ij = u_ij ⊗ 1`, `v'_kl = 1 ⊗ v_kl`.
pub fn embed_tensor_as_commuting(t: &TensorModel) -> CommutingModel {
    let (n, da, db) = (t.n, t.d_a, t.d_b);
    let u = t.u.iter().map(|u| kron(u, &ComplexMatrix::identity(db))).collect();
    // kron(1_A, V) lives on (H_A, B', H_B); move B' to the front.
    let dims = RegisterDims::new([da, n, db]).expect("positive dims");
    let v = t
        .v
        .iter()
        .map(|v| {
            permute_registers(&kron(&ComplexMatrix::identity(da), v), &dims, &[1, 0, 2])
                .expect("register dims match by construction")
        })
        .collect();
    CommutingModel { n, m: t.m, d: da * db, state: t.state.clone(), u, v }
}

/// Block-diagonal unitaries `U[x] = ⊕_{a'} u^x_{a'}` with
/// `u^x_{a'} = Σ_a e^{2πi·a·a'/n} P_{a|x}`, and likewise for Bob.
pub fn diagonal_fourier_lift(alice: &PvmFamily, bob: &PvmFamily, state: &State) -> Result<TensorModel> {
    if alice.n != bob.n || alice.m != bob.m {
        return Err(Error::DimensionMismatch(format!(
            "Alice (m={}, n={}) vs Bob (m={}, n={})",
            alice.m, alice.n, bob.m, bob.n
        )));
    }
    let n = alice.n;
    let block_diag = |us: Vec<ComplexMatrix>, d: usize| {
        ComplexMatrix::from_blocks(n, d, |i, j| if i == j { us[i].clone() } else { ComplexMatrix::zeros(d) })
    };
    let u = unitaries_from_pvm(alice)?.into_iter().map(|us| block_diag(us, alice.d)).collect();
    let v = unitaries_from_pvm(bob)?.into_iter().map(|vs| block_diag(vs, bob.d)).collect();
    TensorModel::new(n, alice.d, bob.d, state.clone(), u, v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Tensor,
    CommutingViaEmbedding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Vector,
    Density,
}

/// Either model flavour; serialized with a `"kind"` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Tensor(TensorModel),
    Commuting(CommutingModel),
}

impl Model {
    pub fn n(&self) -> usize {
        match self {
            Model::Tensor(t) => t.n,
            Model::Commuting(c) => c.n,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Model::Tensor(t) => t.m,
            Model::Commuting(c) => c.m,
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        match self {
            Model::Tensor(t) => t.ensure_valid(),
            Model::Commuting(c) => c.ensure_valid(),
        }
    }
}

pub fn random_tensor_model<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    d_a: usize,
    d_b: usize,
    state_kind: StateKind,
    rng: &mut R,
) -> TensorModel {
    let u = (0..m).map(|_| haar_unitary_with(n * d_a, rng)).collect();
    let v = (0..m).map(|_| haar_unitary_with(n * d_b, rng)).collect();
    let state = match state_kind {
        StateKind::Vector => State::Vector(haar_vector(d_a * d_b, rng)),
        StateKind::Density => State::Density(wishart_density(d_a * d_b, rng)),
    };
    TensorModel { n, m, d_a, d_b, state, u, v }
}

/// Haar unitaries per setting, Haar vector or Wishart state; deterministic in `seed`.
pub fn random_model(
    kind: ModelKind,
    n: usize,
    m: usize,
    d_a: usize,
    d_b: usize,
    state_kind: StateKind,
    seed: u64,
) -> Model {
    assert!(n >= 1 && m >= 1 && d_a >= 1 && d_b >= 1, "random_model: dimensions must be positive");
    let t = random_tensor_model(n, m, d_a, d_b, state_kind, &mut seeded_rng(seed));
    match kind {
        ModelKind::Tensor => Model::Tensor(t),
        ModelKind::CommutingViaEmbedding => Model::Commuting(embed_tensor_as_commuting(&t)),
    }
}

/// `n·d`-dimensional `SWAP`-type unitary with blocks `u_ij = E_ji`; used by
/// the constant-output channel example.
pub fn swap_unitary(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_blocks(n, n, |i, j| ComplexMatrix::unit(n, j, i))
}

/// Tensor model with `dA = dB = n`, `U = V = SWAP` and resource state `σ`.
/// Its channel replaces any input on `A'B'` with `σ`.
pub fn swap_model(n: usize, sigma: ComplexMatrix) -> Result<TensorModel> {
    let s = swap_unitary(n);
    TensorModel::new(n, n, n, State::Density(sigma), vec![s.clone()], vec![s])
}

/// All-identity model on the given dims.
pub fn identity_model(n: usize, m: usize, d_a: usize, d_b: usize) -> TensorModel {
    let mut state = vec![ZERO; d_a * d_b];
    state[0] = C64::new(1.0, 0.0);
    TensorModel {
        n,
        m,
        d_a,
        d_b,
        state: State::Vector(state),
        u: vec![ComplexMatrix::identity(n * d_a); m],
        v: vec![ComplexMatrix::identity(n * d_b); m],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::haar_unitary;

    #[test]
    fn identity_commuting_model_has_zero_defects() {
        let c = CommutingModel::new(
            2,
            3,
            State::Vector(vec![C64::new(1.0, 0.0), ZERO, ZERO]),
            vec![ComplexMatrix::identity(6)],
            vec![ComplexMatrix::identity(6)],
        )
        .unwrap();
        let r = validate_commuting(&c);
        assert_eq!(r.max_commutator, 0.0);
        assert_eq!(r.max_adjoint_commutator, 0.0);
        assert_eq!(r.max_unitarity_defect, 0.0);
        assert!(r.accepted);
    }

    #[test]
    fn unrelated_unitaries_are_rejected() {
        let c = CommutingModel::new(
            2,
            3,
            State::Vector(haar_vector(3, &mut seeded_rng(1))),
            vec![haar_unitary(6, 2)],
            vec![haar_unitary(6, 3)],
        )
        .unwrap();
        let r = validate_commuting(&c);
        assert!(r.max_commutator > 0.1, "{r:?}");
        assert!(!r.accepted);
        assert!(c.ensure_valid().is_err());
    }

    #[test]
    fn embedding_of_scalar_model_keeps_unitaries() {
        let Model::Tensor(t) = random_model(ModelKind::Tensor, 3, 2, 1, 1, StateKind::Vector, 5) else {
            unreachable!()
        };
        let c = embed_tensor_as_commuting(&t);
        assert_eq!(c.u, t.u);
        assert_eq!(c.v, t.v);
        assert!(validate_commuting(&c).accepted);
    }

    #[test]
    fn embedded_swap_lift_commutes() {
        let mut rng = seeded_rng(8);
        let t = swap_model(2, wishart_density(4, &mut rng)).unwrap();
        let r = validate_commuting(&embed_tensor_as_commuting(&t));
        assert!(r.max_commutator <= 1e-12 && r.max_adjoint_commutator <= 1e-12, "{r:?}");
        assert!(r.accepted);
    }

    #[test]
    fn generated_models_are_valid_and_deterministic() {
        for kind in [ModelKind::Tensor, ModelKind::CommutingViaEmbedding] {
            for sk in [StateKind::Vector, StateKind::Density] {
                let a = random_model(kind, 2, 2, 2, 3, sk, 17);
                assert_eq!(a, random_model(kind, 2, 2, 2, 3, sk, 17));
                a.ensure_valid().unwrap();
            }
        }
        let Model::Commuting(c) = random_model(ModelKind::CommutingViaEmbedding, 2, 2, 2, 3, StateKind::Vector, 3)
        else {
            unreachable!()
        };
        let r = validate_commuting(&c);
        assert!(r.max_commutator <= 1e-12, "{r:?}");
    }

    #[test]
    fn shape_errors_are_hard() {
        let err = TensorModel::new(
            2,
            2,
            2,
            State::Vector(vec![ZERO; 3]),
            vec![ComplexMatrix::identity(4)],
            vec![ComplexMatrix::identity(4)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        let err = TensorModel::new(
            2,
            2,
            2,
            State::Vector(vec![ZERO; 4]),
            vec![ComplexMatrix::identity(4)],
            vec![ComplexMatrix::identity(5)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn corrupted_unitary_fails_soft_validation() {
        let mut t = identity_model(2, 1, 2, 2);
        t.u[0][(0, 1)] += C64::new(0.1, 0.0);
        assert!(t.check_shapes().is_ok());
        assert!(!t.report().accepted);
        assert!(matches!(t.ensure_valid(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn degenerate_pvm_lift_is_diagonal() {
        // P_{1|x} = 0, P_{2|x} = I: u_{a'} = e^{2πi·2a'/2}·I = I for every a'.
        let p = PvmFamily::new(2, vec![vec![ComplexMatrix::zeros(2), ComplexMatrix::identity(2)]; 2]).unwrap();
        let state = State::Vector(haar_vector(4, &mut seeded_rng(0)));
        let t = diagonal_fourier_lift(&p, &p, &state).unwrap();
        for u in &t.u {
            assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        }
    }

    #[test]
    fn computational_basis_lift_blocks() {
        // u_1 = e^{iπ}P_1 + e^{2iπ}P_2 = -P_1 + P_2, u_2 = I.
        let p1 = ComplexMatrix::unit(2, 0, 0);
        let p2 = ComplexMatrix::unit(2, 1, 1);
        let p = PvmFamily::new(2, vec![vec![p1, p2]]).unwrap();
        let state = State::Vector(vec![C64::new(1.0, 0.0), ZERO, ZERO, ZERO]);
        let t = diagonal_fourier_lift(&p, &p, &state).unwrap();
        let z = ComplexMatrix::from_real_rows(&[&[-1.0, 0.0], &[0.0, 1.0]]);
        assert!(t.u[0].block(2, 0, 0).max_abs_diff(&z) < 1e-15);
        assert!(t.u[0].block(2, 1, 1).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        assert_eq!(t.u[0].block(2, 0, 1), ComplexMatrix::zeros(2));
        t.ensure_valid().unwrap();
    }

    #[test]
    fn lift_rejects_mismatched_families() {
        let mut rng = seeded_rng(1);
        let a = PvmFamily::random(2, 2, 2, &mut rng).unwrap();
        let b = PvmFamily::random(2, 2, 3, &mut rng).unwrap();
        let s = State::Vector(haar_vector(4, &mut rng));
        assert!(matches!(diagonal_fourier_lift(&a, &b, &s), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn lift_blocks_are_unitary() {
        let mut rng = seeded_rng(44);
        for _ in 0..10 {
            let a = PvmFamily::random(3, 2, 3, &mut rng).unwrap();
            let b = PvmFamily::random(2, 2, 3, &mut rng).unwrap();
            let s = State::Vector(haar_vector(6, &mut rng));
            let t = diagonal_fourier_lift(&a, &b, &s).unwrap();
            for u in &t.u {
                for k in 0..3 {
                    assert!(u.block(3, k, k).unitarity_defect() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_pvm_is_valid() {
        let mut rng = seeded_rng(2);
        let p = PvmFamily::random(3, 4, 2, &mut rng).unwrap();
        assert!(p.defect() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn model_json_round_trip() {
        let m = random_model(ModelKind::Tensor, 2, 2, 2, 2, StateKind::Density, 7);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with(r#"{"kind":"tensor","n":2,"m":2,"dA":2,"dB":2,"state":{"type":"density""#));
        let back: Model = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);

        let c = random_model(ModelKind::CommutingViaEmbedding, 2, 1, 2, 2, StateKind::Vector, 7);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains(r#""kind":"commuting""#) && s.contains(r#""type":"vector""#));
        assert_eq!(serde_json::from_str::<Model>(&s).unwrap(), c);
    }
}
