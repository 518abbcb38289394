//! System-model container with parity and unitarity validation, the two
//! built-in presets (quantum dot, photodetection), and their closed
//! scalar filters used as oracles for the matrix filter.

use crate::algebra::{
    CompositeSpace, GradedOperator, Parity, ampliate, detector_parity_assignment, fermion_mode,
    three_level, two_level,
};
use crate::dynamics::ConditionalState;
use crate::error::{Error, Result};
use crate::linalg::{C64, CMatrix};
use crate::stochastics::{MeasurementRecord, RATIO_FLOOR};
use crate::telemetry::FilterStep;

/// Tolerance for hermiticity/unitarity validation of model operators.
pub const MODEL_TOL: f64 = 1e-12;

/// Which field channels the model actually couples to; absent channels
/// are stored as zero coupling and identity scattering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelFlags {
    pub boson: bool,
    pub fermion0: bool,
    pub fermion1: bool,
}

/// One validation check with its measured violation.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub violation: f64,
}

/// Pass/fail per model invariant, plus whether the counting channel can
/// drive a filter at all.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// False when L0 = 0: the jump intensity vanishes identically and
    /// filtering degenerates to the master equation.
    pub filtering_available: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// The system sextuple (H, S, L, S0, L0, L1) with channel metadata.
///
/// H is Hermitian and even; S, S0 are unitary and even; L is even;
/// L0, L1 are odd (or exactly zero). Validation happens at construction
/// and the report travels with the model.
#[derive(Debug, Clone)]
pub struct SystemModel {
    space: CompositeSpace,
    h: GradedOperator,
    s: GradedOperator,
    l: GradedOperator,
    s0: GradedOperator,
    l0: GradedOperator,
    l1: GradedOperator,
    channels: ChannelFlags,
    validation: ValidationReport,
    // Cached products used by the generators on every step.
    l_dag_l: CMatrix,
    l1_l1_dag: CMatrix,
    l0_dag_l0: CMatrix,
    l0_norm_sq: f64,
}

impl SystemModel {
    pub fn new(
        space: CompositeSpace,
        h: GradedOperator,
        s: GradedOperator,
        l: GradedOperator,
        s0: GradedOperator,
        l0: GradedOperator,
        l1: GradedOperator,
    ) -> Result<Self> {
        let dim = space.dim();
        for op in [&h, &s, &l, &s0, &l0, &l1] {
            if op.dim() != dim || *op.space() != space {
                return Err(Error::DimensionMismatch {
                    context: "model operator vs space",
                    left: op.dim(),
                    right: dim,
                });
            }
        }
        let id = CMatrix::identity(dim);
        let scale = |m: &CMatrix| m.norm().max(1.0);

        let mut checks = Vec::new();
        let mut push = |name: &'static str, violation: f64, tol: f64| {
            checks.push(Check {
                name,
                passed: violation <= tol,
                violation,
            });
        };
        push(
            "h_hermitian",
            h.matrix().hermiticity_defect(),
            MODEL_TOL * scale(h.matrix()),
        );
        push(
            "s_unitary",
            s.matrix().adjoint().mul(s.matrix()).sub(&id).norm(),
            MODEL_TOL * scale(s.matrix()),
        );
        push(
            "s0_unitary",
            s0.matrix().adjoint().mul(s0.matrix()).sub(&id).norm(),
            MODEL_TOL * scale(s0.matrix()),
        );
        let parity_defect = |op: &GradedOperator, want: Parity| -> f64 {
            if op.is_zero() || op.parity() == want {
                0.0
            } else {
                1.0
            }
        };
        push("h_even", parity_defect(&h, Parity::Even), 0.0);
        push("s_even", parity_defect(&s, Parity::Even), 0.0);
        push("l_even", parity_defect(&l, Parity::Even), 0.0);
        push("s0_even", parity_defect(&s0, Parity::Even), 0.0);
        push("l0_odd", parity_defect(&l0, Parity::Odd), 0.0);
        push("l1_odd", parity_defect(&l1, Parity::Odd), 0.0);

        let channels = ChannelFlags {
            boson: !l.is_zero() || s.matrix().sub(&id).norm() > 0.0,
            fermion0: !l0.is_zero() || s0.matrix().sub(&id).norm() > 0.0,
            fermion1: !l1.is_zero(),
        };
        let validation = ValidationReport {
            checks,
            filtering_available: !l0.is_zero(),
        };
        let l_dag_l = l.matrix().adjoint().mul(l.matrix());
        let l1_l1_dag = l1.matrix().mul(&l1.matrix().adjoint());
        let l0_dag_l0 = l0.matrix().adjoint().mul(l0.matrix());
        let l0_norm_sq = l0.matrix().norm().powi(2);
        Ok(Self {
            space,
            h,
            s,
            l,
            s0,
            l0,
            l1,
            channels,
            validation,
            l_dag_l,
            l1_l1_dag,
            l0_dag_l0,
            l0_norm_sq,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn h(&self) -> &GradedOperator {
        &self.h
    }

    pub fn s(&self) -> &GradedOperator {
        &self.s
    }

    pub fn l(&self) -> &GradedOperator {
        &self.l
    }

    pub fn s0(&self) -> &GradedOperator {
        &self.s0
    }

    pub fn l0(&self) -> &GradedOperator {
        &self.l0
    }

    pub fn l1(&self) -> &GradedOperator {
        &self.l1
    }

    pub fn channels(&self) -> ChannelFlags {
        self.channels
    }

    pub fn l_dag_l(&self) -> &CMatrix {
        &self.l_dag_l
    }

    pub fn l1_l1_dag(&self) -> &CMatrix {
        &self.l1_l1_dag
    }

    pub fn l0_dag_l0(&self) -> &CMatrix {
        &self.l0_dag_l0
    }

    /// Upper bound on the jump intensity: `‖L0‖²` (Frobenius).
    pub fn l0_norm_sq(&self) -> f64 {
        self.l0_norm_sq
    }

    /// The report computed at construction.
    pub fn validate(&self) -> &ValidationReport {
        &self.validation
    }

    /// Errors with the list of failed checks when the model is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        if self.validation.passed() {
            Ok(())
        } else {
            let names: Vec<&str> = self.validation.failures().iter().map(|c| c.name).collect();
            Err(Error::InvalidModel(format!(
                "failed checks: {}",
                names.join(", ")
            )))
        }
    }
}

/// Tunneling rates of the quantum-dot model.
#[derive(Debug, Clone, Copy)]
pub struct DotParams {
    pub gamma_l: f64,
    pub gamma_r: f64,
}

impl DotParams {
    pub fn new(gamma_l: f64, gamma_r: f64) -> Result<Self> {
        if gamma_l < 0.0 || gamma_r < 0.0 || !(gamma_l + gamma_r).is_finite() {
            return Err(Error::InvalidInput(
                "tunneling rates must be finite and nonnegative".into(),
            ));
        }
        if gamma_l + gamma_r <= 0.0 {
            return Err(Error::InvalidInput(
                "at least one tunneling rate must be positive".into(),
            ));
        }
        Ok(Self { gamma_l, gamma_r })
    }
}

/// Coupling rates of the photodetection model.
#[derive(Debug, Clone, Copy)]
pub struct DetectorParams {
    pub kappa: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl DetectorParams {
    pub fn new(kappa: f64, gamma: f64, gamma0: f64, gamma1: f64) -> Result<Self> {
        for (name, v) in [
            ("kappa", kappa),
            ("gamma", gamma),
            ("gamma0", gamma0),
            ("gamma1", gamma1),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            kappa,
            gamma,
            gamma0,
            gamma1,
        })
    }
}

/// Quantum dot between a source and a sink channel: a single fermion
/// mode with H = 0, no boson channel, L1 = i√γL c, L0 = i√γR c.
pub fn quantum_dot(p: &DotParams) -> SystemModel {
    let mode = fermion_mode();
    let space = CompositeSpace::single(mode.space);
    let i = C64::new(0.0, 1.0);
    let l1 = mode.c.scale(i * C64::new(p.gamma_l.sqrt(), 0.0));
    let l0 = mode.c.scale(i * C64::new(p.gamma_r.sqrt(), 0.0));
    SystemModel::new(
        space.clone(),
        GradedOperator::zero(space.clone()),
        GradedOperator::identity(space.clone()),
        GradedOperator::zero(space.clone()),
        GradedOperator::identity(space),
        l0,
        l1,
    )
    .expect("preset dimensions are consistent")
}

/// Named operator catalog of the quantum-dot model.
#[derive(Debug, Clone)]
pub struct DotObservables {
    pub n: GradedOperator,
}

pub fn dot_observables() -> DotObservables {
    DotObservables {
        n: fermion_mode().n,
    }
}

/// Dot state diag(1 − n0, n0) with mean occupation n0.
pub fn dot_initial(n0: f64) -> Result<ConditionalState> {
    if !(0.0..=1.0).contains(&n0) {
        return Err(Error::InvalidInput(format!(
            "occupation must lie in [0, 1], got {n0}"
        )));
    }
    let mode = fermion_mode();
    let space = CompositeSpace::single(mode.space);
    ConditionalState::new(CMatrix::diag_real(&[1.0 - n0, n0]), space)
}

/// Atom-photodetector cascade: two-level atom (trivial parity) feeding a
/// three-level detector with graded levels, one boson channel and two
/// fermion channels.
pub fn photodetector(p: &DetectorParams) -> SystemModel {
    photodetector_parts(p).model
}

/// Named operator catalog of the photodetection model, including the six
/// components tracked by its closed scalar filter.
#[derive(Debug, Clone)]
pub struct PhotodetectorObservables {
    /// Atomic excitation number σ₊σ₋.
    pub n: GradedOperator,
    /// Detector level-2 population.
    pub s22: GradedOperator,
    /// σ12 σ₊ (complex-valued expectation).
    pub s12p: GradedOperator,
    /// σ11 σ₊σ₋.
    pub s11pm: GradedOperator,
    /// σ22 σ₊σ₋.
    pub s22pm: GradedOperator,
    /// σ33 σ₊σ₋.
    pub s33pm: GradedOperator,
    /// Detector level-1 population.
    pub s11: GradedOperator,
    /// Detector level-3 population.
    pub s33: GradedOperator,
}

struct PhotodetectorParts {
    model: SystemModel,
    observables: PhotodetectorObservables,
}

fn photodetector_parts(p: &DetectorParams) -> PhotodetectorParts {
    let atom = two_level();
    let det = three_level(&detector_parity_assignment()).expect("static assignment");
    let space = CompositeSpace::new(vec![atom.space.clone(), det.space.clone()]);

    let up = |op: &GradedOperator, idx: usize| ampliate(op, idx, &space).expect("factor fits");
    let sm = up(&atom.sigma_m, 0);
    let sp = up(&atom.sigma_p, 0);
    let n_atom = up(&atom.n, 0);
    let s12 = up(det.sigma(1, 2), 1);
    let s21 = up(det.sigma(2, 1), 1);
    let s32 = up(det.sigma(3, 2), 1);
    let s31 = up(det.sigma(3, 1), 1);
    let s11 = up(det.sigma(1, 1), 1);
    let s22 = up(det.sigma(2, 2), 1);
    let s33 = up(det.sigma(3, 3), 1);

    let root_kg = (p.kappa * p.gamma).sqrt();
    // H = (i/2)√(κγ) (σ12 σ₊ − σ21 σ₋): Hermitian because the prefactor
    // multiplies an anti-Hermitian combination.
    let h = s12
        .mul(&sp)
        .unwrap()
        .sub(&s21.mul(&sm).unwrap())
        .unwrap()
        .scale(C64::new(0.0, 0.5 * root_kg));
    let l = sm
        .scale(C64::new(p.kappa.sqrt(), 0.0))
        .add(&s12.scale(C64::new(p.gamma.sqrt(), 0.0)))
        .unwrap();
    let l0 = s32.scale(C64::new(p.gamma0.sqrt(), 0.0));
    let l1 = s31.scale(C64::new(p.gamma1.sqrt(), 0.0));

    let model = SystemModel::new(
        space.clone(),
        h,
        GradedOperator::identity(space.clone()),
        l,
        GradedOperator::identity(space),
        l0,
        l1,
    )
    .expect("preset dimensions are consistent");

    let observables = PhotodetectorObservables {
        s12p: s12.mul(&sp).unwrap(),
        s11pm: s11.mul(&n_atom).unwrap(),
        s22pm: s22.mul(&n_atom).unwrap(),
        s33pm: s33.mul(&n_atom).unwrap(),
        n: n_atom,
        s22,
        s11,
        s33,
    };
    PhotodetectorParts { model, observables }
}

pub fn photodetector_observables() -> PhotodetectorObservables {
    let p = DetectorParams::new(1.0, 1.0, 1.0, 1.0).expect("static params");
    photodetector_parts(&p).observables
}

/// Product state: atom excited with probability `excited`, detector in
/// level |1⟩.
pub fn photodetector_initial(excited: f64) -> Result<ConditionalState> {
    if !(0.0..=1.0).contains(&excited) {
        return Err(Error::InvalidInput(format!(
            "excitation probability must lie in [0, 1], got {excited}"
        )));
    }
    let atom = CMatrix::diag_real(&[1.0 - excited, excited]);
    let det = CMatrix::diag_real(&[1.0, 0.0, 0.0]);
    let rho = atom.kron(&det);
    let atom_space = two_level().space;
    let det_space = three_level(&detector_parity_assignment())
        .expect("static assignment")
        .space;
    ConditionalState::new(rho, CompositeSpace::new(vec![atom_space, det_space]))
}

/// Out-of-range excursion of a scalar filter component.
#[derive(Debug, Clone, Copy)]
pub struct ScalarExcursion {
    pub step: usize,
    pub value: f64,
}

/// Output of the scalar quantum-dot filter.
#[derive(Debug, Clone)]
pub struct DotFilterRun {
    pub times: Vec<f64>,
    pub n_hat: Vec<f64>,
    pub telemetry: Vec<FilterStep>,
    /// Steps where n̂ left [0, 1] by more than the excursion tolerance;
    /// reported, never clamped.
    pub excursions: Vec<ScalarExcursion>,
}

/// Largest tolerated out-of-range excursion before it is reported.
pub const SCALAR_EXCURSION_TOL: f64 = 1e-6;

fn check_record(record: &MeasurementRecord) -> Result<()> {
    if record.is_empty() || record.dt() <= 0.0 {
        return Err(Error::GridMismatch(
            "record must carry at least one step on a positive uniform grid".into(),
        ));
    }
    Ok(())
}

/// `(1 − e^{−x})/x`, stable through x = 0.
fn expm1_ratio(x: f64) -> f64 {
    if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x }
}

/// Closed scalar filter of the quantum dot for
/// `dn̂ = γL(1−n̂)dt − γR n̂ dt − n̂ (dY − γR n̂ dt)`.
///
/// Discretized exactly like the matrix filter: no-count steps integrate
/// the linear two-population no-count flow in closed form and
/// renormalize; a count applies the pure jump map (detection empties the
/// dot). Per-step telemetry exposes the prediction/gain/innovation
/// decomposition, with `next = prediction + gain·innovation` exact on
/// no-count steps.
pub fn dot_scalar_filter(
    record: &MeasurementRecord,
    p: &DotParams,
    n0: f64,
) -> Result<DotFilterRun> {
    check_record(record)?;
    if !(0.0..=1.0).contains(&n0) {
        return Err(Error::InvalidInput(format!(
            "initial occupation must lie in [0, 1], got {n0}"
        )));
    }
    let dt = record.dt();
    let steps = record.len();
    // Unnormalized no-count flow: ṗ0 = −γL p0, ṗ1 = γL p0 − γR p1.
    let decay_l = (-p.gamma_l * dt).exp();
    let decay_r = (-p.gamma_r * dt).exp();
    let transfer = p.gamma_l * dt * decay_l * expm1_ratio((p.gamma_r - p.gamma_l) * dt);

    let mut n_hat = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut telemetry = Vec::with_capacity(steps);
    let mut excursions = Vec::new();
    let mut n = n0;
    n_hat.push(n);
    times.push(record.t0());

    for (step, &dy) in record.increments().iter().enumerate() {
        let intensity = p.gamma_r * n;
        let innovation = dy as f64 - intensity * dt;
        if dy == 1 {
            if intensity < RATIO_FLOOR {
                return Err(Error::DegenerateRatio {
                    step,
                    intensity,
                    floor: RATIO_FLOOR,
                });
            }
            telemetry.push(FilterStep {
                prediction: n,
                gain: -n,
                innovation,
            });
            // Jump map: detection empties the dot.
            n = 0.0;
        } else {
            let p0 = (1.0 - n) * decay_l;
            let p1 = n * decay_r + (1.0 - n) * transfer;
            let next = p1 / (p0 + p1);
            telemetry.push(FilterStep {
                prediction: next - p.gamma_r * n * n * dt,
                gain: -n,
                innovation,
            });
            n = next;
        }
        if !(-SCALAR_EXCURSION_TOL..=1.0 + SCALAR_EXCURSION_TOL).contains(&n) {
            excursions.push(ScalarExcursion { step, value: n });
        }
        n_hat.push(n);
        times.push(record.t0() + (step + 1) as f64 * dt);
    }
    Ok(DotFilterRun {
        times,
        n_hat,
        telemetry,
        excursions,
    })
}

/// The six tracked components of the photodetection filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorFilterState {
    /// n̂: conditional atomic excitation.
    pub n: f64,
    /// σ̂22: conditional detector level-2 population.
    pub s22: f64,
    /// σ̂12₊ (complex).
    pub s12p: C64,
    /// σ̂11₊₋.
    pub s11pm: f64,
    /// σ̂22₊₋.
    pub s22pm: f64,
    /// σ̂33₊₋.
    pub s33pm: f64,
}

impl DetectorFilterState {
    /// Reads the six components off a full conditional state.
    pub fn from_state(state: &ConditionalState) -> Result<Self> {
        let obs = photodetector_observables();
        let ex = |op: &GradedOperator| crate::dynamics::expectation(state, op);
        Ok(Self {
            n: ex(&obs.n)?.re,
            s22: ex(&obs.s22)?.re,
            s12p: ex(&obs.s12p)?,
            s11pm: ex(&obs.s11pm)?.re,
            s22pm: ex(&obs.s22pm)?.re,
            s33pm: ex(&obs.s33pm)?.re,
        })
    }

    /// Componentwise supremum distance to another six-vector.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        [
            (self.n - other.n).abs(),
            (self.s22 - other.s22).abs(),
            (self.s12p - other.s12p).norm(),
            (self.s11pm - other.s11pm).abs(),
            (self.s22pm - other.s22pm).abs(),
            (self.s33pm - other.s33pm).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Output of the six-component photodetection scalar filter.
#[derive(Debug, Clone)]
pub struct DetectorFilterRun {
    pub times: Vec<f64>,
    pub states: Vec<DetectorFilterState>,
    pub innovations: Vec<f64>,
}

/// Closed six-equation filter of the photodetection model, driven by the
/// counting record with innovations `dW = dY − γ0 σ̂22 dt`.
///
/// The six conditional components close under the no-count flow: in
/// unnormalized (linear) form, (trace, n̂, σ̂22, σ̂12₊, σ̂11₊₋, σ̂22₊₋,
/// σ̂33₊₋) obey a constant-coefficient linear system whose exponential is
/// precomputed once and applied per no-count step, then renormalized by
/// the trace component — the identical discretization the matrix filter
/// uses, restricted to this component set. A count applies the pure jump
/// map; demanding one while σ̂22 sits below the ratio floor aborts
/// instead of renormalizing noise.
pub fn photodetector_scalar_filter(
    record: &MeasurementRecord,
    p: &DetectorParams,
    init: DetectorFilterState,
) -> Result<DetectorFilterRun> {
    check_record(record)?;
    let dt = record.dt();
    let steps = record.len();
    let omega = (p.kappa * p.gamma).sqrt();
    let half_width = 0.5 * (p.kappa + p.gamma + p.gamma0);

    // Unnormalized no-count generator on
    // (τ, n, σ22, Re σ12₊, Im σ12₊, σ11₊₋, σ22₊₋, σ33₊₋).
    let mut gen = [[0.0_f64; 8]; 8];
    gen[0][2] = -p.gamma0;
    gen[1][1] = -p.kappa;
    gen[1][6] = -p.gamma0;
    gen[2][2] = -(p.gamma + p.gamma0);
    gen[2][3] = -2.0 * omega;
    gen[3][3] = -half_width;
    gen[3][5] = -omega;
    gen[3][6] = omega;
    gen[4][4] = -half_width;
    gen[5][5] = -p.kappa;
    gen[5][6] = p.gamma;
    gen[5][7] = p.gamma1;
    gen[6][6] = -(p.kappa + p.gamma + p.gamma0);
    gen[7][7] = -(p.kappa + p.gamma1);
    let gen_matrix = CMatrix::from_fn(8, 8, |i, j| C64::new(gen[i][j] * dt, 0.0));
    let propagator = crate::linalg::expm(&gen_matrix);

    let mut s = init;
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut innovations = Vec::with_capacity(steps);
    states.push(s);
    times.push(record.t0());

    for (step, &dy) in record.increments().iter().enumerate() {
        let intensity = p.gamma0 * s.s22;
        innovations.push(dy as f64 - intensity * dt);
        if dy == 1 {
            if s.s22 < RATIO_FLOOR {
                return Err(Error::DegenerateRatio {
                    step,
                    intensity,
                    floor: RATIO_FLOOR,
                });
            }
            let ratio = s.s22pm / s.s22;
            s = DetectorFilterState {
                n: ratio,
                s22: 0.0,
                s12p: C64::new(0.0, 0.0),
                s11pm: 0.0,
                s22pm: 0.0,
                s33pm: ratio,
            };
        } else {
            let m = [
                C64::new(1.0, 0.0),
                C64::new(s.n, 0.0),
                C64::new(s.s22, 0.0),
                C64::new(s.s12p.re, 0.0),
                C64::new(s.s12p.im, 0.0),
                C64::new(s.s11pm, 0.0),
                C64::new(s.s22pm, 0.0),
                C64::new(s.s33pm, 0.0),
            ];
            let next = propagator.matvec(&m);
            let tau = next[0].re;
            s = DetectorFilterState {
                n: next[1].re / tau,
                s22: next[2].re / tau,
                s12p: C64::new(next[3].re / tau, next[4].re / tau),
                s11pm: next[5].re / tau,
                s22pm: next[6].re / tau,
                s33pm: next[7].re / tau,
            };
        }
        states.push(s);
        times.push(record.t0() + (step + 1) as f64 * dt);
    }
    Ok(DetectorFilterRun {
        times,
        states,
        innovations,
    })
}
