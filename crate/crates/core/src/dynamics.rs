//! Unconditional evolution: Liouvillian and Heisenberg generators,
//! master-equation integration, steady states, expectations.

use crate::algebra::{CompositeSpace, GradedOperator, Parity, tau};
use crate::error::{Error, Result};
use crate::linalg::{C64, CMatrix, min_eigenvalue, svd_jacobi};
use crate::models::SystemModel;

/// Hermiticity tolerance for stored states.
pub const STATE_HERMITICITY_TOL: f64 = 1e-10;
/// Trace tolerance for stored states.
pub const STATE_TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a stored state.
pub const STATE_MIN_EIGENVALUE: f64 = -1e-8;
/// Evenness tolerance `‖ρ − θρθ‖` for stored states.
pub const STATE_EVENNESS_TOL: f64 = 1e-10;

/// Largest per-step trace drift tolerated by the master integrator.
pub const TRACE_DRIFT_PER_STEP: f64 = 1e-12;

/// Rewrites the step index into step-aware error variants.
pub(crate) fn attach_step(err: Error, step: usize) -> Error {
    match err {
        Error::InvariantViolation {
            what, violation, ..
        } => Error::InvariantViolation {
            what,
            step,
            violation,
        },
        Error::DegenerateRatio {
            intensity, floor, ..
        } => Error::DegenerateRatio {
            step,
            intensity,
            floor,
        },
        other => other,
    }
}

/// Diagnostics of one density matrix against the state invariants.
#[derive(Debug, Clone, Copy)]
pub struct StateDiagnostics {
    pub hermiticity_defect: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub evenness_defect: f64,
}

impl Default for StateDiagnostics {
    fn default() -> Self {
        StateDiagnostics {
            hermiticity_defect: 0.0,
            trace_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            evenness_defect: 0.0,
        }
    }
}

impl StateDiagnostics {
    /// Componentwise worst case of two diagnostics.
    pub fn merge(&self, other: &StateDiagnostics) -> StateDiagnostics {
        StateDiagnostics {
            hermiticity_defect: self.hermiticity_defect.max(other.hermiticity_defect),
            trace_error: self.trace_error.max(other.trace_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
            evenness_defect: self.evenness_defect.max(other.evenness_defect),
        }
    }
}

/// A density matrix with enforced hermiticity, unit trace, positivity
/// tolerance, and evenness under the parity superselection rule.
#[derive(Debug, Clone)]
pub struct ConditionalState {
    rho: CMatrix,
    space: CompositeSpace,
}

impl ConditionalState {
    pub fn new(rho: CMatrix, space: CompositeSpace) -> Result<Self> {
        if !rho.is_square() || rho.rows() != space.dim() {
            return Err(Error::DimensionMismatch {
                context: "density matrix vs space",
                left: rho.rows(),
                right: space.dim(),
            });
        }
        let state = Self { rho, space };
        let d = state.diagnostics();
        if d.hermiticity_defect > STATE_HERMITICITY_TOL {
            return Err(Error::InvariantViolation {
                what: "state hermiticity".into(),
                step: 0,
                violation: d.hermiticity_defect,
            });
        }
        if d.trace_error > STATE_TRACE_TOL {
            return Err(Error::InvariantViolation {
                what: "state trace".into(),
                step: 0,
                violation: d.trace_error,
            });
        }
        if d.min_eigenvalue < STATE_MIN_EIGENVALUE {
            return Err(Error::InvariantViolation {
                what: "state positivity".into(),
                step: 0,
                violation: d.min_eigenvalue,
            });
        }
        if d.evenness_defect > STATE_EVENNESS_TOL {
            return Err(Error::InvariantViolation {
                what: "state evenness".into(),
                step: 0,
                violation: d.evenness_defect,
            });
        }
        Ok(state)
    }

    /// Pure state |ψ⟩⟨ψ| from normalized amplitudes.
    pub fn from_pure(amplitudes: &[C64], space: CompositeSpace) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                context: "state vector vs space",
                left: amplitudes.len(),
                right: space.dim(),
            });
        }
        let n = amplitudes.len();
        let rho = CMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::new(rho, space)
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let theta_rho_theta = {
            let signs = self.space.parity_signs();
            let n = self.rho.rows();
            CMatrix::from_fn(n, n, |i, j| {
                self.rho[(i, j)] * C64::new((signs[i] * signs[j]) as f64, 0.0)
            })
        };
        StateDiagnostics {
            hermiticity_defect: self.rho.hermiticity_defect(),
            trace_error: (self.rho.trace() - C64::new(1.0, 0.0)).norm(),
            min_eigenvalue: min_eigenvalue(&self.rho),
            evenness_defect: self.rho.sub(&theta_rho_theta).norm(),
        }
    }
}

fn check_model_space(model: &SystemModel, dim: usize, context: &'static str) -> Result<()> {
    if model.space().dim() != dim {
        return Err(Error::DimensionMismatch {
            context,
            left: dim,
            right: model.space().dim(),
        });
    }
    Ok(())
}

/// Right-hand side of the master equation:
/// `−i[H,ρ] + LρL† − ½{L†L,ρ} + L1†ρL1 − ½{L1L1†,ρ} + L0ρL0† − ½{L0†L0,ρ}`.
///
/// The channel-1 dissipator uses the occupied-reservoir ordering. The
/// result is traceless and Hermitian for Hermitian input.
pub fn liouvillian_apply(model: &SystemModel, rho: &CMatrix) -> Result<CMatrix> {
    check_model_space(model, rho.rows(), "liouvillian input")?;
    let n = rho.rows();
    let mut out = CMatrix::zeros(n, n);
    let minus_half = C64::new(-0.5, 0.0);

    let h = model.h().matrix();
    if !h.is_zero() {
        // −i[H, ρ]
        let comm = h.mul(rho).sub(&rho.mul(h));
        out.add_assign_scaled(&comm, C64::new(0.0, -1.0));
    }
    let l = model.l().matrix();
    if !l.is_zero() {
        out = out.add(&l.mul(rho).mul(&l.adjoint()));
        let ll = model.l_dag_l();
        out.add_assign_scaled(&ll.mul(rho).add(&rho.mul(ll)), minus_half);
    }
    let l1 = model.l1().matrix();
    if !l1.is_zero() {
        out = out.add(&l1.adjoint().mul(rho).mul(l1));
        let ll = model.l1_l1_dag();
        out.add_assign_scaled(&ll.mul(rho).add(&rho.mul(ll)), minus_half);
    }
    let l0 = model.l0().matrix();
    if !l0.is_zero() {
        out = out.add(&l0.mul(rho).mul(&l0.adjoint()));
        let ll = model.l0_dag_l0();
        out.add_assign_scaled(&ll.mul(rho).add(&rho.mul(ll)), minus_half);
    }
    Ok(out)
}

/// Generator of Heisenberg-picture expectations:
/// `−i[X,H] + L†XL − ½{L†L,X} + L1τ(X)L1† − ½{L1L1†,X} + L0†τ(X)L0 − ½{L0†L0,X}`.
///
/// The parity conjugation τ enters through the fermion channels; for even
/// X it reduces to the plain dissipators.
pub fn heisenberg_apply(model: &SystemModel, x: &GradedOperator) -> Result<CMatrix> {
    if x.parity() == Parity::Mixed {
        return Err(Error::MixedParity);
    }
    check_model_space(model, x.dim(), "heisenberg input")?;
    let xm = x.matrix();
    let tx = tau(x);
    let txm = tx.matrix();
    let n = xm.rows();
    let mut out = CMatrix::zeros(n, n);
    let minus_half = C64::new(-0.5, 0.0);

    let h = model.h().matrix();
    if !h.is_zero() {
        let comm = xm.mul(h).sub(&h.mul(xm));
        out.add_assign_scaled(&comm, C64::new(0.0, -1.0));
    }
    let l = model.l().matrix();
    if !l.is_zero() {
        out = out.add(&l.adjoint().mul(xm).mul(l));
        let ll = model.l_dag_l();
        out.add_assign_scaled(&xm.mul(ll).add(&ll.mul(xm)), minus_half);
    }
    let l1 = model.l1().matrix();
    if !l1.is_zero() {
        out = out.add(&l1.mul(txm).mul(&l1.adjoint()));
        let ll = model.l1_l1_dag();
        out.add_assign_scaled(&xm.mul(ll).add(&ll.mul(xm)), minus_half);
    }
    let l0 = model.l0().matrix();
    if !l0.is_zero() {
        out = out.add(&l0.adjoint().mul(txm).mul(l0));
        let ll = model.l0_dag_l0();
        out.add_assign_scaled(&xm.mul(ll).add(&ll.mul(xm)), minus_half);
    }
    Ok(out)
}

/// Result of a master-equation integration on a uniform grid.
#[derive(Debug, Clone)]
pub struct MasterRun {
    times: Vec<f64>,
    states: Vec<ConditionalState>,
}

impl MasterRun {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ConditionalState] {
        &self.states
    }

    pub fn final_state(&self) -> &ConditionalState {
        self.states.last().expect("run stores at least rho0")
    }

    /// Expectation series tr(ρ(t) X).
    pub fn expectations(&self, x: &GradedOperator) -> Result<Vec<C64>> {
        self.states.iter().map(|s| expectation(s, x)).collect()
    }
}

/// Integrates the master equation with the classical fixed-step
/// fourth-order scheme; every stored state passes the state invariants.
pub fn evolve_master(
    model: &SystemModel,
    rho0: &ConditionalState,
    t_final: f64,
    dt: f64,
) -> Result<MasterRun> {
    model.ensure_valid()?;
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if t_final < dt {
        return Err(Error::InvalidInput(format!(
            "duration {t_final} shorter than one step {dt}"
        )));
    }
    check_model_space(model, rho0.dim(), "initial state")?;
    let steps = ((t_final / dt).round() as usize).max(1);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(rho0.clone());

    let mut rho = rho0.rho().clone();
    let half_dt = C64::new(dt / 2.0, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    for step in 0..steps {
        let k1 = liouvillian_apply(model, &rho)?;
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k1, half_dt);
        let k2 = liouvillian_apply(model, &stage)?;
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k2, half_dt);
        let k3 = liouvillian_apply(model, &stage)?;
        let mut stage = rho.clone();
        stage.add_assign_scaled(&k3, C64::new(dt, 0.0));
        let k4 = liouvillian_apply(model, &stage)?;

        let trace_before = rho.trace();
        rho.add_assign_scaled(&k1, sixth);
        rho.add_assign_scaled(&k2, sixth.scale(2.0));
        rho.add_assign_scaled(&k3, sixth.scale(2.0));
        rho.add_assign_scaled(&k4, sixth);
        let drift = (rho.trace() - trace_before).norm();
        if drift > TRACE_DRIFT_PER_STEP {
            return Err(Error::InvariantViolation {
                what: "per-step trace drift".into(),
                step,
                violation: drift,
            });
        }
        let state = ConditionalState::new(rho.clone(), rho0.space().clone())
            .map_err(|e| attach_step(e, step))?;
        times.push((step + 1) as f64 * dt);
        states.push(state);
    }
    Ok(MasterRun { times, states })
}

/// Matrix of the vectorized Liouvillian (row-major vectorization, so
/// vec(AρB) = (A ⊗ Bᵀ) vec(ρ)).
pub fn liouvillian_matrix(model: &SystemModel) -> CMatrix {
    let n = model.space().dim();
    let id = CMatrix::identity(n);
    let mut m = CMatrix::zeros(n * n, n * n);
    let minus_half = C64::new(-0.5, 0.0);

    let h = model.h().matrix();
    if !h.is_zero() {
        let term = h.kron(&id).sub(&id.kron(&h.transpose()));
        m.add_assign_scaled(&term, C64::new(0.0, -1.0));
    }
    let mut dissipator = |a: &CMatrix, b: &CMatrix, anti: &CMatrix| {
        // AρB − ½{anti, ρ}
        let mut term = a.kron(&b.transpose());
        let left = anti.kron(&id);
        let right = id.kron(&anti.transpose());
        term.add_assign_scaled(&left.add(&right), minus_half);
        m = m.add(&term);
    };
    let l = model.l().matrix();
    if !l.is_zero() {
        dissipator(l, &l.adjoint(), model.l_dag_l());
    }
    let l1 = model.l1().matrix();
    if !l1.is_zero() {
        dissipator(&l1.adjoint(), l1, model.l1_l1_dag());
    }
    let l0 = model.l0().matrix();
    if !l0.is_zero() {
        dissipator(l0, &l0.adjoint(), model.l0_dag_l0());
    }
    m
}

/// Matrix of the vectorized no-count generator: the Liouvillian minus the
/// counting sandwich, `𝒢(ρ) = Liouvillian(ρ) − L0ρL0†`.
///
/// `exp(dt·𝒢)` is a completely positive trace-nonincreasing map, so the
/// conditioned no-count propagation it defines preserves positivity
/// exactly; the dropped compensator `tr(L0ρL0†)ρ` is restored by the
/// per-step renormalization.
pub fn no_jump_generator_matrix(model: &SystemModel) -> CMatrix {
    let mut m = liouvillian_matrix(model);
    let l0 = model.l0().matrix();
    if !l0.is_zero() {
        let sandwich = l0.kron(&l0.conj());
        m.add_assign_scaled(&sandwich, C64::new(-1.0, 0.0));
    }
    m
}

/// Residual tolerance demanded of the extracted steady state.
pub const STEADY_STATE_RESIDUAL: f64 = 1e-10;

/// Steady state by null-space extraction of the vectorized Liouvillian,
/// followed by hermitization and trace normalization.
pub fn steady_state(model: &SystemModel) -> Result<ConditionalState> {
    model.ensure_valid()?;
    let n = model.space().dim();
    let m = liouvillian_matrix(model);
    let (sigma, v) = svd_jacobi(&m);
    let scale = sigma[0].max(1e-300);
    let nullity = sigma.iter().filter(|&&s| s <= 1e-9 * scale).count();
    if nullity > 1 {
        return Err(Error::NonUniqueSteadyState { nullity });
    }
    if nullity == 0 {
        return Err(Error::InvariantViolation {
            what: "liouvillian has no numerical null vector".into(),
            step: 0,
            violation: sigma[n * n - 1],
        });
    }
    let null: Vec<C64> = (0..n * n).map(|i| v[(i, n * n - 1)]).collect();
    let x = CMatrix::from_vectorized(n, &null);
    let mut rho = x.add(&x.adjoint()).scale(C64::new(0.5, 0.0));
    let tr = rho.trace();
    if tr.norm() < 1e-8 * rho.norm().max(1e-300) {
        return Err(Error::InvariantViolation {
            what: "steady-state candidate has vanishing trace".into(),
            step: 0,
            violation: tr.norm(),
        });
    }
    rho.scale_mut(C64::new(1.0, 0.0) / tr);
    let residual = liouvillian_apply(model, &rho)?.norm();
    if residual > STEADY_STATE_RESIDUAL {
        return Err(Error::InvariantViolation {
            what: "steady-state residual".into(),
            step: 0,
            violation: residual,
        });
    }
    ConditionalState::new(rho, model.space().clone())
}

/// tr(ρ X); real for Hermitian X, identically zero for odd X on states
/// obeying the parity superselection rule.
pub fn expectation(state: &ConditionalState, x: &GradedOperator) -> Result<C64> {
    if state.space() != x.space() {
        return Err(Error::DimensionMismatch {
            context: "expectation operator vs state",
            left: x.dim(),
            right: state.dim(),
        });
    }
    Ok(state.rho().trace_product(x.matrix()))
}

/// tr(ρ X) for raw matrices.
pub fn expectation_matrix(rho: &CMatrix, x: &CMatrix) -> C64 {
    rho.trace_product(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{GradedOperator, parity_decompose};
    use crate::models::{
        DetectorFilterState, DetectorParams, DotParams, dot_initial, dot_observables,
        photodetector, photodetector_initial, photodetector_observables, quantum_dot,
    };
    use crate::rng::CounterRng;

    fn random_matrix(rng: &CounterRng, step: u64, n: usize) -> CMatrix {
        let mut idx = 0;
        CMatrix::from_fn(n, n, |_, _| {
            let re = rng.uniform(step, idx) - 0.5;
            let im = rng.uniform(step, idx + 1) - 0.5;
            idx += 2;
            C64::new(re, im)
        })
    }

    /// Random even density matrix on the given space.
    fn random_even_state(rng: &CounterRng, step: u64, space: &CompositeSpace) -> ConditionalState {
        let g = random_matrix(rng, step, space.dim());
        let psd = g.mul(&g.adjoint());
        let graded = GradedOperator::new(psd, space.clone()).unwrap();
        let (even, _) = parity_decompose(&graded);
        let mut rho = even.matrix().clone();
        let tr = rho.trace().re;
        rho.scale_mut(C64::new(1.0 / tr, 0.0));
        ConditionalState::new(rho, space.clone()).unwrap()
    }

    #[test]
    fn dot_liouvillian_reproduces_occupation_rate_equation() {
        let p = DotParams::new(1.0, 2.0).unwrap();
        let model = quantum_dot(&p);
        let n_op = dot_observables().n;
        for n in [0.0, 0.25, 1.0] {
            let rho = CMatrix::diag_real(&[1.0 - n, n]);
            let drift = liouvillian_apply(&model, &rho).unwrap();
            let dn = expectation_matrix(&drift, n_op.matrix());
            let expected = p.gamma_l * (1.0 - n) - p.gamma_r * n;
            assert!((dn.re - expected).abs() < 1e-14);
            assert!(dn.im.abs() < 1e-14);
            assert!(drift.trace().norm() < 1e-14, "traceless");
            assert!(drift.hermiticity_defect() < 1e-14, "hermitian");
        }
    }

    #[test]
    fn liouvillian_annihilates_maximally_mixed_when_uncoupled() {
        // All couplings zero, H arbitrary: [H, I/d] = 0.
        let rng = CounterRng::new(31, 0);
        let mode = crate::algebra::fermion_mode();
        let space = CompositeSpace::single(mode.space);
        let g = random_matrix(&rng, 0, 2);
        let herm = g.add(&g.adjoint());
        let (h_even, _) = crate::algebra::parity_decompose(
            &GradedOperator::new(herm, space.clone()).unwrap(),
        );
        let model = crate::models::SystemModel::new(
            space.clone(),
            h_even,
            GradedOperator::identity(space.clone()),
            GradedOperator::zero(space.clone()),
            GradedOperator::identity(space.clone()),
            GradedOperator::zero(space.clone()),
            GradedOperator::zero(space),
        )
        .unwrap();
        assert!(model.validate().passed());
        let rho = CMatrix::identity(2).scale(C64::new(0.5, 0.0));
        let drift = liouvillian_apply(&model, &rho).unwrap();
        assert!(drift.norm() < 1e-15);
    }

    #[test]
    fn photodetector_initial_decay_rate_is_minus_kappa() {
        let p = DetectorParams::new(1.0, 0.5, 0.7, 0.3).unwrap();
        let model = photodetector(&p);
        let state = photodetector_initial(1.0).unwrap();
        let n = photodetector_observables().n;
        let drift = liouvillian_apply(&model, state.rho()).unwrap();
        let dn = expectation_matrix(&drift, n.matrix()).re;
        assert!((dn + p.kappa).abs() < 1e-13, "d<n>/dt = {dn}");
    }

    #[test]
    fn heisenberg_annihilates_identity() {
        let model = photodetector(&DetectorParams::new(1.0, 0.5, 0.7, 0.3).unwrap());
        let id = GradedOperator::identity(model.space().clone());
        let gen = heisenberg_apply(&model, &id).unwrap();
        assert!(gen.norm() < 1e-13);
    }

    #[test]
    fn heisenberg_dot_number_drift() {
        let p = DotParams::new(1.0, 2.0).unwrap();
        let model = quantum_dot(&p);
        let n_op = dot_observables().n;
        let gen = heisenberg_apply(&model, &n_op).unwrap();
        // γL(I − n) − γR n
        let expected = CMatrix::diag_real(&[p.gamma_l, -p.gamma_r]);
        assert!(gen.sub(&expected).norm() < 1e-14);
    }

    #[test]
    fn heisenberg_schroedinger_duality_random_even_observables() {
        let rng = CounterRng::new(2024, 0);
        for (mi, model) in [
            quantum_dot(&DotParams::new(1.0, 2.0).unwrap()),
            photodetector(&DetectorParams::new(1.0, 0.5, 0.7, 0.3).unwrap()),
        ]
        .iter()
        .enumerate()
        {
            let space = model.space().clone();
            for k in 0..100u64 {
                let step = (mi as u64) * 1000 + k;
                let state = random_even_state(&rng, step, &space);
                let g = random_matrix(&rng, step + 500_000, space.dim());
                let herm = g.add(&g.adjoint());
                let (x_even, _) =
                    parity_decompose(&GradedOperator::new(herm, space.clone()).unwrap());
                let lhs = expectation_matrix(
                    state.rho(),
                    &heisenberg_apply(model, &x_even).unwrap(),
                );
                let rhs = expectation_matrix(
                    &liouvillian_apply(model, state.rho()).unwrap(),
                    x_even.matrix(),
                );
                assert!(
                    (lhs - rhs).norm() < 1e-12,
                    "duality failed: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn liouvillian_matrix_agrees_with_apply() {
        let model = photodetector(&DetectorParams::new(1.0, 0.5, 0.7, 0.3).unwrap());
        let m = liouvillian_matrix(&model);
        let rng = CounterRng::new(5, 0);
        for k in 0..5 {
            let rho = random_matrix(&rng, k, 6);
            let direct = liouvillian_apply(&model, &rho).unwrap();
            let via_matrix = CMatrix::from_vectorized(6, &m.matvec(&rho.vectorize()));
            assert!(direct.sub(&via_matrix).norm() < 1e-13);
        }
    }

    #[test]
    fn dot_steady_states() {
        for (gl, gr, expect_n) in [(1.0, 2.0, 1.0 / 3.0), (1.0, 1.0, 0.5), (0.0, 1.0, 0.0)] {
            let model = quantum_dot(&DotParams::new(gl, gr).unwrap());
            let ss = steady_state(&model).unwrap();
            let n = dot_observables().n;
            let got = expectation(&ss, &n).unwrap().re;
            assert!(
                (got - expect_n).abs() < 1e-11,
                "({gl},{gr}): got {got}, expected {expect_n}"
            );
        }
    }

    #[test]
    fn zero_model_evolution_is_constant_but_steady_state_degenerate() {
        let p = DetectorParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let model = photodetector(&p);
        let rho0 = photodetector_initial(0.5).unwrap();
        let run = evolve_master(&model, &rho0, 0.1, 1e-3).unwrap();
        assert!(run.final_state().rho().sub(rho0.rho()).norm() < 1e-14);
        // Zero Liouvillian: every state is steady, nullity is maximal.
        let err = steady_state(&model).unwrap_err();
        assert!(matches!(err, Error::NonUniqueSteadyState { .. }));
    }

    #[test]
    fn expectation_examples() {
        let state = dot_initial(1.0 / 3.0).unwrap();
        let n = dot_observables().n;
        assert!((expectation(&state, &n).unwrap().re - 1.0 / 3.0).abs() < 1e-15);
        let id = GradedOperator::identity(state.space().clone());
        assert!((expectation(&state, &id).unwrap().re - 1.0).abs() < 1e-15);
        // Odd operator on an even state has vanishing expectation.
        let c = crate::algebra::fermion_mode().c;
        assert!(expectation(&state, &c).unwrap().norm() < 1e-15);
    }

    #[test]
    fn master_equation_preserves_trace_hermiticity_parity_on_random_models() {
        let rng = CounterRng::new(99, 0);
        let model = photodetector(&DetectorParams::new(1.3, 0.4, 0.9, 0.2).unwrap());
        for k in 0..20 {
            let state = random_even_state(&rng, k, model.space());
            let drift = liouvillian_apply(&model, state.rho()).unwrap();
            assert!(drift.trace().norm() < 1e-13, "trace preservation");
            assert!(drift.hermiticity_defect() < 1e-13, "hermiticity preservation");
            // Evenness preservation: odd couplings appear quadratically.
            let graded = GradedOperator::new(drift.clone(), model.space().clone()).unwrap();
            let (_, odd_part) = parity_decompose(&graded);
            assert!(odd_part.matrix().norm() < 1e-13, "parity preservation");
        }
    }

    #[test]
    fn rk4_order_verification() {
        let model = photodetector(&DetectorParams::new(1.0, 0.8, 0.6, 0.4).unwrap());
        let rho0 = photodetector_initial(1.0).unwrap();
        let coarse = evolve_master(&model, &rho0, 1.0, 0.02).unwrap();
        let medium = evolve_master(&model, &rho0, 1.0, 0.01).unwrap();
        let fine = evolve_master(&model, &rho0, 1.0, 0.005).unwrap();
        let e1 = coarse
            .final_state()
            .rho()
            .sub(medium.final_state().rho())
            .norm();
        let e2 = medium
            .final_state()
            .rho()
            .sub(fine.final_state().rho())
            .norm();
        let ratio = e1 / e2;
        assert!(
            (10.0..26.0).contains(&ratio),
            "fourth-order halving ratio ~16, got {ratio} ({e1} / {e2})"
        );
    }

    /// The six-equation photodetection filter is an exact closure of the
    /// matrix dynamics: drift and gain of each tracked component computed
    /// from the matrix generator coincide with the scalar right-hand
    /// sides on arbitrary even states.
    #[test]
    fn photodetector_scalar_closure_against_matrix_generator() {
        let p = DetectorParams::new(1.0, 0.7, 0.9, 0.4).unwrap();
        let model = photodetector(&p);
        let obs = photodetector_observables();
        let root_kg = (p.kappa * p.gamma).sqrt();
        let rng = CounterRng::new(314, 0);
        for k in 0..25u64 {
            let state = random_even_state(&rng, k, model.space());
            let s = DetectorFilterState::from_state(&state).unwrap();
            let drift_matrix = liouvillian_apply(&model, state.rho()).unwrap();
            let drift_of = |op: &GradedOperator| expectation_matrix(&drift_matrix, op.matrix());

            // Scalar drifts of the closed system.
            let f_n = -p.kappa * s.n;
            let f_s22 = -(p.gamma + p.gamma0) * s.s22 - root_kg * 2.0 * s.s12p.re;
            let f_s12p = s.s12p * C64::new(-0.5 * (p.kappa + p.gamma + p.gamma0), 0.0)
                + C64::new(root_kg * (s.s22pm - s.s11pm), 0.0);
            let f_s11pm = -p.kappa * s.s11pm + p.gamma * s.s22pm + p.gamma1 * s.s33pm;
            let f_s22pm = -(p.kappa + p.gamma + p.gamma0) * s.s22pm;
            let f_s33pm = -(p.kappa + p.gamma1) * s.s33pm + p.gamma0 * s.s22pm;

            assert!((drift_of(&obs.n).re - f_n).abs() < 1e-12);
            assert!((drift_of(&obs.s22).re - f_s22).abs() < 1e-12);
            assert!((drift_of(&obs.s12p) - f_s12p).norm() < 1e-12);
            assert!((drift_of(&obs.s11pm).re - f_s11pm).abs() < 1e-12);
            assert!((drift_of(&obs.s22pm).re - f_s22pm).abs() < 1e-12);
            assert!((drift_of(&obs.s33pm).re - f_s33pm).abs() < 1e-12);

            // Jump gains: π(L0† X L0)/π(L0†L0) − π(X).
            let l0 = model.l0().matrix();
            let jumped = l0.mul(state.rho()).mul(&l0.adjoint());
            let intensity = jumped.trace().re;
            if intensity > 1e-6 {
                let gain_of = |op: &GradedOperator| {
                    expectation_matrix(&jumped, op.matrix()) / C64::new(intensity, 0.0)
                };
                let ratio = s.s22pm / s.s22;
                assert!((gain_of(&obs.n).re - ratio).abs() < 1e-10);
                assert!(gain_of(&obs.s22).norm() < 1e-12);
                assert!(gain_of(&obs.s12p).norm() < 1e-12);
                assert!(gain_of(&obs.s11pm).norm() < 1e-12);
                assert!(gain_of(&obs.s22pm).norm() < 1e-12);
                assert!((gain_of(&obs.s33pm).re - ratio).abs() < 1e-10);
            }
        }
    }
    #[test]
    fn dot_without_source_decays_to_empty() {
        let model = quantum_dot(&DotParams::new(0.0, 1.0).unwrap());
        let rho0 = dot_initial(1.0).unwrap();
        let run = evolve_master(&model, &rho0, 20.0, 1e-3).unwrap();
        let n = dot_observables().n;
        let got = expectation(run.final_state(), &n).unwrap().re;
        assert!(got < 1e-8, "residual occupation {got}");
    }

    #[test]
    fn generator_inputs_are_dimension_checked() {
        let model = quantum_dot(&DotParams::new(1.0, 2.0).unwrap());
        let rho = CMatrix::identity(3);
        assert!(matches!(
            liouvillian_apply(&model, &rho),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn heisenberg_rejects_mixed_parity() {
        let model = quantum_dot(&DotParams::new(1.0, 2.0).unwrap());
        let mode = crate::algebra::fermion_mode();
        let space = model.space().clone();
        let mixed = GradedOperator::identity(space).add(&mode.c).unwrap();
        assert!(matches!(
            heisenberg_apply(&model, &mixed),
            Err(Error::MixedParity)
        ));
    }

    /// Builds a random validated model on a random graded composite
    /// (dims up to 8): Hermitian even H, even L, odd L0/L1, S = S0 = I.
    fn random_model(rng: &CounterRng, step: u64, layout: usize) -> crate::models::SystemModel {
        use crate::algebra::{GradedSpace, parity_decompose};
        let fermion = GradedSpace::fermionic(vec![1, -1]).unwrap();
        let factors = match layout % 3 {
            0 => vec![fermion.clone(), GradedSpace::trivial(2)],
            1 => vec![fermion.clone(), fermion.clone(), GradedSpace::trivial(2)],
            _ => vec![GradedSpace::trivial(3), fermion],
        };
        let space = CompositeSpace::new(factors);
        let definite = |step: u64, odd: bool, hermitian: bool| {
            let g = random_matrix(rng, step, space.dim());
            let m = if hermitian { g.add(&g.adjoint()) } else { g };
            let graded = GradedOperator::new(m, space.clone()).unwrap();
            let (even, odd_part) = parity_decompose(&graded);
            if odd { odd_part } else { even }
        };
        crate::models::SystemModel::new(
            space.clone(),
            definite(step, false, true),
            GradedOperator::identity(space.clone()),
            definite(step + 100_000, false, false),
            GradedOperator::identity(space.clone()),
            definite(step + 200_000, true, false),
            definite(step + 300_000, true, false),
        )
        .unwrap()
    }

    #[test]
    fn generator_properties_hold_on_random_validated_models() {
        let rng = CounterRng::new(7777, 0);
        for k in 0..24u64 {
            let model = random_model(&rng, k * 7, k as usize);
            assert!(model.validate().passed());
            let state = random_even_state(&rng, k + 900_000, model.space());
            let drift = liouvillian_apply(&model, state.rho()).unwrap();
            assert!(drift.trace().norm() < 1e-12, "trace preservation");
            assert!(drift.hermiticity_defect() < 1e-12, "hermiticity preservation");
            let graded = GradedOperator::new(drift, model.space().clone()).unwrap();
            let (_, odd_part) = parity_decompose(&graded);
            assert!(odd_part.matrix().norm() < 1e-12, "parity preservation");

            // Adjointness against the Heisenberg generator on even X.
            let g = random_matrix(&rng, k + 950_000, model.space().dim());
            let herm = g.add(&g.adjoint());
            let (x_even, _) =
                parity_decompose(&GradedOperator::new(herm, model.space().clone()).unwrap());
            let lhs = expectation_matrix(state.rho(), &heisenberg_apply(&model, &x_even).unwrap());
            let rhs = expectation_matrix(
                &liouvillian_apply(&model, state.rho()).unwrap(),
                x_even.matrix(),
            );
            assert!((lhs - rhs).norm() < 1e-12, "duality {lhs} vs {rhs}");
        }
    }

}
