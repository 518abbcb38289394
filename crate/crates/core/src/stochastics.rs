//! Quantum-jump synthesis of counting records on fermion channel 0, and
//! the counting filter (stochastic master equation) consuming them.
//!
//! The unravelling is Bernoulli thinning on a fixed grid: each step draws
//! one uniform keyed by (seed, trajectory, step); a count replaces the
//! no-count step by the pure jump map, so record and filter share one
//! grid with at most one jump per step. No-count steps apply the exact
//! exponential of the no-count generator (a completely positive map, so
//! conditioned states stay positive) followed by renormalization; the
//! scalar oracle filters advance with the exponential of the same
//! generator restricted to their closed component set, keeping the two
//! routes on an identical discretization.

use crate::algebra::GradedOperator;
use crate::dynamics::{
    ConditionalState, StateDiagnostics, attach_step, expectation, no_jump_generator_matrix,
};
use crate::error::{Error, Result};
use crate::linalg::{C64, CMatrix, expm};
use crate::models::SystemModel;
use crate::rng::CounterRng;

/// Below this filtered intensity a demanded jump is a record/model
/// mismatch, not a renormalizable event.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Safety cap on dt × sup-intensity, with the sup bounded by ‖L0‖².
pub const DT_INTENSITY_CAP: f64 = 0.1;

/// A counting record on a uniform grid: per-step increments dY ∈ {0, 1}
/// plus the RNG provenance that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    t0: f64,
    dt: f64,
    increments: Vec<u8>,
    seed: u64,
    trajectory_id: u64,
}

impl MeasurementRecord {
    pub fn new(
        t0: f64,
        dt: f64,
        increments: Vec<u8>,
        seed: u64,
        trajectory_id: u64,
    ) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::GridMismatch(format!(
                "record step must be positive, got {dt}"
            )));
        }
        if increments.is_empty() {
            return Err(Error::GridMismatch("record carries no steps".into()));
        }
        if increments.iter().any(|&b| b > 1) {
            return Err(Error::GridMismatch(
                "counting increments must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            t0,
            dt,
            increments,
            seed,
            trajectory_id,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[u8] {
        &self.increments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }

    /// Total number of counts.
    pub fn total_counts(&self) -> u64 {
        self.increments.iter().map(|&b| b as u64).sum()
    }

    /// Cumulative counting path Y(t); nondecreasing by construction.
    pub fn counting_path(&self) -> Vec<u64> {
        let mut y = 0u64;
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        out.push(0);
        for &b in &self.increments {
            y += b as u64;
            out.push(y);
        }
        out
    }
}

/// A conditional trajectory: states on the grid nodes, plus per-step
/// intensities and innovations dW = dY − intensity·dt.
#[derive(Debug, Clone)]
pub struct FilterRun {
    times: Vec<f64>,
    states: Vec<ConditionalState>,
    intensities: Vec<f64>,
    innovations: Vec<f64>,
}

impl FilterRun {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[ConditionalState] {
        &self.states
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn innovations(&self) -> &[f64] {
        &self.innovations
    }

    pub fn final_state(&self) -> &ConditionalState {
        self.states.last().expect("run stores at least rho0")
    }

    /// Conditional expectation series π_t(X).
    pub fn expectations(&self, x: &GradedOperator) -> Result<Vec<C64>> {
        self.states.iter().map(|s| expectation(s, x)).collect()
    }

    /// Innovations path W(t) summed over steps.
    pub fn w_final(&self) -> f64 {
        self.innovations.iter().sum()
    }

    /// Worst-case state diagnostics along the run.
    pub fn worst_diagnostics(&self) -> StateDiagnostics {
        self.states
            .iter()
            .map(|s| s.diagnostics())
            .fold(StateDiagnostics::default(), |acc, d| acc.merge(&d))
    }
}

/// Counting intensity tr(L0 ρ L0†); real and nonnegative up to rounding.
pub fn jump_intensity(model: &SystemModel, state: &ConditionalState) -> Result<f64> {
    if model.space().dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            context: "jump intensity state vs model",
            left: state.dim(),
            right: model.space().dim(),
        });
    }
    // tr(L0 ρ L0†) = tr(ρ L0†L0).
    let value = state.rho().trace_product(model.l0_dag_l0());
    if value.re < -1e-12 {
        return Err(Error::InvariantViolation {
            what: "negative jump intensity".into(),
            step: 0,
            violation: value.re,
        });
    }
    Ok(value.re)
}

fn check_dt_cap(model: &SystemModel, dt: f64) -> Result<()> {
    if dt * model.l0_norm_sq() > DT_INTENSITY_CAP {
        return Err(Error::InvalidInput(format!(
            "dt {} times intensity bound {} exceeds the safety cap {}",
            dt,
            model.l0_norm_sq(),
            DT_INTENSITY_CAP
        )));
    }
    Ok(())
}

/// Precomputed no-count propagator `exp(dt·𝒢)` with
/// `𝒢(ρ) = Liouvillian(ρ) − L0ρL0†` for one (model, dt) pair.
///
/// One step applies the map and renormalizes to unit trace, which is the
/// exact integral of the conditioned no-count flow
/// `dρ = [Liouvillian(ρ) + tr(L0ρL0†)ρ − L0ρL0†] dt` over the step. The
/// map is completely positive, so no-count steps cannot push eigenvalues
/// below zero.
#[derive(Debug, Clone)]
pub struct NoJumpPropagator {
    map: CMatrix,
    dt: f64,
    dim: usize,
}

impl NoJumpPropagator {
    pub fn new(model: &SystemModel, dt: f64) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "propagator step must be positive, got {dt}"
            )));
        }
        check_dt_cap(model, dt)?;
        let generator = no_jump_generator_matrix(model);
        let map = expm(&generator.scale(C64::new(dt, 0.0)));
        Ok(Self {
            map,
            dt,
            dim: model.space().dim(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One conditioned no-count step with exact renormalization.
    pub fn step(&self, state: &ConditionalState) -> Result<ConditionalState> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "no-count step state vs propagator",
                left: state.dim(),
                right: self.dim,
            });
        }
        let v = self.map.matvec(&state.rho().vectorize());
        let mut next = CMatrix::from_vectorized(self.dim, &v);
        let trace = next.trace().re;
        if trace <= 0.0 || !trace.is_finite() {
            return Err(Error::InvariantViolation {
                what: "no-count propagation lost trace positivity".into(),
                step: 0,
                violation: trace,
            });
        }
        next.scale_mut(C64::new(1.0 / trace, 0.0));
        ConditionalState::new(next, state.space().clone())
    }
}

/// One conditioned no-count step (builds the propagator on the fly; runs
/// over many steps share one [`NoJumpPropagator`] instead).
pub fn no_jump_step(
    model: &SystemModel,
    state: &ConditionalState,
    dt: f64,
) -> Result<ConditionalState> {
    NoJumpPropagator::new(model, dt)?.step(state)
}

/// The count-conditioned state update `ρ → L0 ρ L0† / tr(L0 ρ L0†)`.
pub fn jump_apply(model: &SystemModel, state: &ConditionalState) -> Result<ConditionalState> {
    let intensity = jump_intensity(model, state)?;
    if intensity < RATIO_FLOOR {
        return Err(Error::DegenerateRatio {
            step: 0,
            intensity,
            floor: RATIO_FLOOR,
        });
    }
    let l0 = model.l0().matrix();
    let mut next = l0.mul(state.rho()).mul(&l0.adjoint());
    next.scale_mut(C64::new(1.0 / intensity, 0.0));
    // Normalize away the residual rounding in the trace.
    let trace = next.trace().re;
    next.scale_mut(C64::new(1.0 / trace, 0.0));
    ConditionalState::new(next, state.space().clone())
}

fn run_steps(
    model: &SystemModel,
    rho0: &ConditionalState,
    dt: f64,
    t0: f64,
    drive: impl Fn(usize, f64) -> u8,
    steps: usize,
) -> Result<(Vec<u8>, FilterRun)> {
    let propagator = NoJumpPropagator::new(model, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut intensities = Vec::with_capacity(steps);
    let mut innovations = Vec::with_capacity(steps);
    let mut increments = Vec::with_capacity(steps);
    times.push(t0);
    states.push(rho0.clone());
    let mut state = rho0.clone();
    for step in 0..steps {
        let intensity = jump_intensity(model, &state).map_err(|e| attach_step(e, step))?;
        let dy = drive(step, intensity);
        state = if dy == 1 {
            jump_apply(model, &state).map_err(|e| attach_step(e, step))?
        } else {
            propagator.step(&state).map_err(|e| attach_step(e, step))?
        };
        increments.push(dy);
        intensities.push(intensity);
        innovations.push(dy as f64 - intensity * dt);
        times.push(t0 + (step + 1) as f64 * dt);
        states.push(state.clone());
    }
    Ok((
        increments,
        FilterRun {
            times,
            states,
            intensities,
            innovations,
        },
    ))
}

fn check_run_inputs(
    model: &SystemModel,
    rho0: &ConditionalState,
    dt: f64,
) -> Result<()> {
    model.ensure_valid()?;
    check_dt_cap(model, dt)?;
    if model.space().dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state vs model",
            left: rho0.dim(),
            right: model.space().dim(),
        });
    }
    Ok(())
}

/// Synthesizes one counting record by Bernoulli thinning and returns it
/// together with the generating conditional trajectory.
///
/// Per step the uniform draw is keyed by (seed, trajectory_id, step), so
/// a replay is bit-identical and trajectories are order-independent.
pub fn simulate_record(
    model: &SystemModel,
    rho0: &ConditionalState,
    t_final: f64,
    dt: f64,
    seed: u64,
    trajectory_id: u64,
) -> Result<(MeasurementRecord, FilterRun)> {
    check_run_inputs(model, rho0, dt)?;
    if dt.is_nan() || t_final < dt {
        return Err(Error::InvalidInput(format!(
            "need 0 < dt <= t_final, got dt {dt}, t_final {t_final}"
        )));
    }
    let steps = ((t_final / dt).round() as usize).max(1);
    let rng = CounterRng::new(seed, trajectory_id);
    let (increments, run) = run_steps(
        model,
        rho0,
        dt,
        0.0,
        |step, intensity| {
            let u = rng.uniform(step as u64, 0);
            if u < intensity.max(0.0) * dt { 1 } else { 0 }
        },
        steps,
    )?;
    let record = MeasurementRecord::new(0.0, dt, increments, seed, trajectory_id)?;
    Ok((record, run))
}

/// Runs the counting filter against a given record. The initial filter
/// state may differ from the true one; the record is trusted, and a
/// demanded jump at vanishing filtered intensity is an error.
pub fn run_filter(
    model: &SystemModel,
    rho0_hat: &ConditionalState,
    record: &MeasurementRecord,
) -> Result<FilterRun> {
    check_run_inputs(model, rho0_hat, record.dt())?;
    let increments = record.increments();
    let (_, run) = run_steps(
        model,
        rho0_hat,
        record.dt(),
        record.t0(),
        |step, _| increments[step],
        increments.len(),
    )?;
    Ok(run)
}

/// Per-time-point ensemble statistics of one observable.
#[derive(Debug, Clone)]
pub struct ObservableStats {
    pub mean: Vec<f64>,
    /// Standard error of the mean.
    pub se: Vec<f64>,
}

/// Deterministically merged statistics of an ensemble of trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub observables: Vec<ObservableStats>,
    /// Mean of W(T) across trajectories.
    pub w_mean: f64,
    /// Sample standard deviation of W(T).
    pub w_std: f64,
    pub n_trajectories: usize,
    /// Worst-case state diagnostics over every trajectory and step.
    pub worst_diagnostics: StateDiagnostics,
}

const ENSEMBLE_CHUNK: usize = 32;

struct ChunkPartial {
    index: usize,
    sums: Vec<Vec<f64>>,
    sum_sqs: Vec<Vec<f64>>,
    w_sum: f64,
    w_sum_sq: f64,
    diagnostics: StateDiagnostics,
}

/// Simulates `n_trajectories` records (trajectory ids 0..n) and folds
/// per-step expectations of the given Hermitian observables.
///
/// Work is fanned over a thread pool in fixed chunks merged in chunk
/// order, so the aggregate is byte-reproducible for any worker count.
pub fn run_ensemble(
    model: &SystemModel,
    rho0: &ConditionalState,
    t_final: f64,
    dt: f64,
    seed: u64,
    n_trajectories: usize,
    observables: &[GradedOperator],
) -> Result<EnsembleStats> {
    check_run_inputs(model, rho0, dt)?;
    if n_trajectories == 0 {
        return Err(Error::InvalidInput("ensemble needs trajectories".into()));
    }
    for op in observables {
        if !op.is_hermitian(1e-12) {
            return Err(Error::InvalidInput(
                "ensemble observables must be Hermitian".into(),
            ));
        }
    }
    let steps = ((t_final / dt).round() as usize).max(1);
    let n_chunks = n_trajectories.div_ceil(ENSEMBLE_CHUNK);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_chunks);

    let work = |chunk: usize| -> Result<ChunkPartial> {
        let lo = chunk * ENSEMBLE_CHUNK;
        let hi = ((chunk + 1) * ENSEMBLE_CHUNK).min(n_trajectories);
        let mut partial = ChunkPartial {
            index: chunk,
            sums: vec![vec![0.0; steps + 1]; observables.len()],
            sum_sqs: vec![vec![0.0; steps + 1]; observables.len()],
            w_sum: 0.0,
            w_sum_sq: 0.0,
            diagnostics: StateDiagnostics::default(),
        };
        for traj in lo..hi {
            let (_, run) = simulate_record(model, rho0, t_final, dt, seed, traj as u64)?;
            for (k, op) in observables.iter().enumerate() {
                for (i, state) in run.states().iter().enumerate() {
                    let v = expectation(state, op)?.re;
                    partial.sums[k][i] += v;
                    partial.sum_sqs[k][i] += v * v;
                }
            }
            let w = run.w_final();
            partial.w_sum += w;
            partial.w_sum_sq += w * w;
            partial.diagnostics = partial.diagnostics.merge(&run.worst_diagnostics());
        }
        Ok(partial)
    };

    let mut partials: Vec<ChunkPartial> = if workers <= 1 {
        (0..n_chunks).map(work).collect::<Result<_>>()?
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let work = &work;
                    scope.spawn(move || -> Result<Vec<ChunkPartial>> {
                        (w..n_chunks).step_by(workers).map(work).collect()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(n_chunks);
            for h in handles {
                all.extend(h.join().expect("ensemble worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    partials.sort_by_key(|p| p.index);

    let n = n_trajectories as f64;
    let mut observables_out = Vec::with_capacity(observables.len());
    for k in 0..observables.len() {
        let mut sum = vec![0.0; steps + 1];
        let mut sum_sq = vec![0.0; steps + 1];
        for p in &partials {
            for i in 0..=steps {
                sum[i] += p.sums[k][i];
                sum_sq[i] += p.sum_sqs[k][i];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let se: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(&sq, &m)| {
                if n_trajectories < 2 {
                    0.0
                } else {
                    let var = ((sq - n * m * m) / (n - 1.0)).max(0.0);
                    (var / n).sqrt()
                }
            })
            .collect();
        observables_out.push(ObservableStats { mean, se });
    }
    let (mut w_sum, mut w_sum_sq) = (0.0, 0.0);
    let mut diagnostics = StateDiagnostics::default();
    for p in &partials {
        w_sum += p.w_sum;
        w_sum_sq += p.w_sum_sq;
        diagnostics = diagnostics.merge(&p.diagnostics);
    }
    let w_mean = w_sum / n;
    let w_std = if n_trajectories < 2 {
        0.0
    } else {
        (((w_sum_sq - n * w_mean * w_mean) / (n - 1.0)).max(0.0)).sqrt()
    };
    let times = (0..=steps).map(|i| i as f64 * dt).collect();
    Ok(EnsembleStats {
        times,
        observables: observables_out,
        w_mean,
        w_std,
        n_trajectories,
        worst_diagnostics: diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DotParams, dot_initial, dot_observables, quantum_dot};

    fn dot_12() -> SystemModel {
        quantum_dot(&DotParams::new(1.0, 2.0).unwrap())
    }

    #[test]
    fn intensity_on_basis_states() {
        let model = dot_12();
        let occupied = dot_initial(1.0).unwrap();
        let empty = dot_initial(0.0).unwrap();
        let i_occ = jump_intensity(&model, &occupied).unwrap();
        let i_emp = jump_intensity(&model, &empty).unwrap();
        assert!((i_occ - 2.0).abs() < 1e-14);
        assert!(i_emp.abs() < 1e-14);
    }

    #[test]
    fn empty_dot_without_source_is_a_fixed_point() {
        let model = quantum_dot(&DotParams::new(0.0, 1.0).unwrap());
        let empty = dot_initial(0.0).unwrap();
        let next = no_jump_step(&model, &empty, 1e-3).unwrap();
        assert!(next.rho().sub(empty.rho()).norm() < 1e-15);
    }

    #[test]
    fn no_jump_step_composes_exactly_under_halving() {
        // The exponential propagator composes: one step at dt equals two
        // at dt/2 up to rounding (renormalization cancels between the
        // linear maps), comfortably inside the O(dt²) consistency bound.
        let model = dot_12();
        let state = dot_initial(0.7).unwrap();
        let dt = 2e-2;
        let full = no_jump_step(&model, &state, dt).unwrap();
        let half = no_jump_step(
            &model,
            &no_jump_step(&model, &state, dt / 2.0).unwrap(),
            dt / 2.0,
        )
        .unwrap();
        assert!(full.rho().sub(half.rho()).norm() < 1e-13);
    }

    #[test]
    fn no_jump_step_keeps_photodetector_states_positive() {
        // The pure cascade start is the worst case for positivity; the
        // completely positive propagator holds the floor at rounding
        // level where a first-order non-positive scheme dips to ~1e-5.
        let p = crate::models::DetectorParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let model = crate::models::photodetector(&p);
        let mut state = crate::models::photodetector_initial(1.0).unwrap();
        let propagator = NoJumpPropagator::new(&model, 1e-3).unwrap();
        let mut worst = f64::INFINITY;
        for _ in 0..2000 {
            state = propagator.step(&state).unwrap();
            worst = worst.min(state.diagnostics().min_eigenvalue);
        }
        assert!(worst >= -1e-12, "worst min eigenvalue {worst}");
    }

    #[test]
    fn jump_empties_the_dot_and_preserves_invariants() {
        let model = dot_12();
        let state = dot_initial(0.4).unwrap();
        let jumped = jump_apply(&model, &state).unwrap();
        let n = dot_observables().n;
        let after = expectation(&jumped, &n).unwrap().re;
        assert!(after.abs() < 1e-14);
    }

    #[test]
    fn jump_at_zero_intensity_is_degenerate() {
        let model = dot_12();
        let empty = dot_initial(0.0).unwrap();
        let err = jump_apply(&model, &empty).unwrap_err();
        assert!(matches!(err, Error::DegenerateRatio { .. }));
    }

    #[test]
    fn record_without_sink_channel_is_all_zeros() {
        let model = quantum_dot(&DotParams::new(1.0, 0.0).unwrap());
        let rho0 = dot_initial(0.0).unwrap();
        let (record, _) = simulate_record(&model, &rho0, 1.0, 1e-3, 9, 0).unwrap();
        assert_eq!(record.total_counts(), 0);
    }

    #[test]
    fn replay_is_bit_identical_and_filter_reproduces_generator() {
        let model = dot_12();
        let rho0 = dot_initial(0.0).unwrap();
        let (record_a, run_a) = simulate_record(&model, &rho0, 2.0, 1e-3, 77, 3).unwrap();
        let (record_b, _) = simulate_record(&model, &rho0, 2.0, 1e-3, 77, 3).unwrap();
        assert_eq!(record_a, record_b);

        let filtered = run_filter(&model, &rho0, &record_a).unwrap();
        let n = dot_observables().n;
        let a = run_a.expectations(&n).unwrap();
        let b = filtered.expectations(&n).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y, "identical recursion must match bitwise");
        }
    }

    #[test]
    fn dt_cap_rejects_coarse_grids() {
        let model = dot_12(); // ‖L0‖² = 2
        let rho0 = dot_initial(0.0).unwrap();
        let err = simulate_record(&model, &rho0, 1.0, 0.06, 1, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn record_grid_validation() {
        assert!(MeasurementRecord::new(0.0, 0.0, vec![0], 1, 0).is_err());
        assert!(MeasurementRecord::new(0.0, 1e-3, vec![], 1, 0).is_err());
        assert!(MeasurementRecord::new(0.0, 1e-3, vec![2], 1, 0).is_err());
        let r = MeasurementRecord::new(0.0, 1e-3, vec![0, 1, 0, 1], 1, 0).unwrap();
        assert_eq!(r.counting_path(), vec![0, 0, 1, 1, 2]);
    }
    #[test]
    fn photodetector_intensity_and_jump_transfer() {
        use crate::models::{DetectorParams, photodetector, photodetector_observables};
        let gamma0 = 1.7;
        let p = DetectorParams::new(1.0, 0.5, gamma0, 0.3).unwrap();
        let model = photodetector(&p);
        // Population entirely in detector level |2>, atom in the ground state.
        let rho = crate::linalg::CMatrix::diag_real(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let state = ConditionalState::new(rho, model.space().clone()).unwrap();
        let intensity = jump_intensity(&model, &state).unwrap();
        assert!((intensity - gamma0).abs() < 1e-13);
        // Detection transfers the population to level |3>.
        let jumped = jump_apply(&model, &state).unwrap();
        let obs = photodetector_observables();
        let s33 = expectation(&jumped, &obs.s33).unwrap().re;
        assert!((s33 - 1.0).abs() < 1e-13);
        let s22 = expectation(&jumped, &obs.s22).unwrap().re;
        assert!(s22.abs() < 1e-14);
    }

    #[test]
    fn stationary_jump_rate_matches_intensity_law() {
        // Starting at the steady state, counts arrive at rate γR·n̄ss = 2/3.
        use crate::dynamics::steady_state;
        let model = dot_12();
        let rho0 = steady_state(&model).unwrap();
        let t_final = 20.0;
        let n_traj = 200u64;
        let mut counts = Vec::with_capacity(n_traj as usize);
        for traj in 0..n_traj {
            let (record, _) = simulate_record(&model, &rho0, t_final, 1e-3, 5150, traj).unwrap();
            counts.push(record.total_counts() as f64 / t_final);
        }
        let n = counts.len() as f64;
        let mean: f64 = counts.iter().sum::<f64>() / n;
        let var: f64 = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expected = 2.0 / 3.0;
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "rate {mean} vs {expected} (3se {:.3e})",
            3.0 * se
        );
    }

    #[test]
    fn mismatched_filter_converges_to_generating_trajectory() {
        // Wrong initial occupation; the conditioned estimates lock on.
        let model = dot_12();
        let truth0 = dot_initial(0.0).unwrap();
        let wrong0 = dot_initial(1.0).unwrap();
        let n = dot_observables().n;
        let t_final = 10.0;
        let dt = 1e-3;
        let mut sup_late = 0.0_f64;
        let n_traj = 40;
        for traj in 0..n_traj {
            let (record, true_run) =
                simulate_record(&model, &truth0, t_final, dt, 777, traj).unwrap();
            let filtered = run_filter(&model, &wrong0, &record).unwrap();
            let a = true_run.expectations(&n).unwrap();
            let b = filtered.expectations(&n).unwrap();
            let half = a.len() / 2;
            let sup = a[half..]
                .iter()
                .zip(&b[half..])
                .map(|(x, y)| (x.re - y.re).abs())
                .fold(0.0, f64::max);
            sup_late += sup / n_traj as f64;
        }
        assert!(sup_late < 0.05, "late-run averaged sup distance {sup_late}");
    }

    #[test]
    fn filtered_path_moves_at_first_order_under_grid_refinement() {
        // Refine a record by splitting every step in two (counts land in
        // the first half-step); the filtered path shifts by O(dt).
        let model = dot_12();
        let rho0 = dot_initial(0.5).unwrap();
        let n = dot_observables().n;
        let sup_for = |dt: f64| -> f64 {
            let (record, coarse) = simulate_record(&model, &rho0, 10.0, dt, 909, 4).unwrap();
            let mut halved = Vec::with_capacity(record.len() * 2);
            for &dy in record.increments() {
                halved.push(dy);
                halved.push(0);
            }
            let refined = MeasurementRecord::new(0.0, dt / 2.0, halved, 909, 4).unwrap();
            let fine = run_filter(&model, &rho0, &refined).unwrap();
            let a = coarse.expectations(&n).unwrap();
            let b = fine.expectations(&n).unwrap();
            a.iter()
                .enumerate()
                .map(|(i, x)| (x.re - b[2 * i].re).abs())
                .fold(0.0, f64::max)
        };
        let e1 = sup_for(2e-3);
        let e2 = sup_for(1e-3);
        assert!(e1 < 0.05, "refinement shift too large: {e1}");
        let ratio = e1 / e2;
        assert!((1.2..3.5).contains(&ratio), "first-order ratio {ratio}");
    }

    #[test]
    fn zero_counting_channel_degenerates_filter_to_master_equation() {
        use crate::dynamics::evolve_master;
        use crate::models::{DetectorParams, photodetector, photodetector_initial,
            photodetector_observables};
        let p = DetectorParams::new(1.0, 0.8, 0.0, 0.4).unwrap();
        let model = photodetector(&p);
        assert!(!model.validate().filtering_available);
        let rho0 = photodetector_initial(1.0).unwrap();
        let dt = 1e-3;
        let record = MeasurementRecord::new(0.0, dt, vec![0; 2000], 1, 0).unwrap();
        let filtered = run_filter(&model, &rho0, &record).unwrap();
        assert!(filtered.intensities().iter().all(|&i| i == 0.0));
        let master = evolve_master(&model, &rho0, 2.0, dt).unwrap();
        let n = photodetector_observables().n;
        let a = filtered.expectations(&n).unwrap();
        let b = master.expectations(&n).unwrap();
        // Exponential steps vs the fourth-order integrator of the same
        // generator: agreement down to the integrator error.
        let sup = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x.re - y.re).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-9, "sup distance {sup}");
    }

}
