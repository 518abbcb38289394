//! Classical baselines: linear-Gaussian simulation, the continuous-time
//! Kalman filter, and a grid-based conditional-density filter for scalar
//! nonlinear diffusions observed in additive white noise.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::telemetry::FilterStep;

/// Scalar linear-Gaussian model: dξ = aξ dt + dV₁, dY = cξ dt + dV₂,
/// with ξ(0) ~ N(xi0_mean, xi0_var).
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussianModel {
    pub a: f64,
    pub c: f64,
    pub xi0_mean: f64,
    pub xi0_var: f64,
    /// Degenerate flag: drop dV₁ so the signal evolves deterministically.
    pub process_noise: bool,
}

impl LinearGaussianModel {
    pub fn new(a: f64, c: f64, xi0_mean: f64, xi0_var: f64) -> Result<Self> {
        if xi0_var < 0.0 || !xi0_var.is_finite() {
            return Err(Error::InvalidInput(format!(
                "initial variance must be nonnegative, got {xi0_var}"
            )));
        }
        if !a.is_finite() || !c.is_finite() || !xi0_mean.is_finite() {
            return Err(Error::InvalidInput("model coefficients must be finite".into()));
        }
        Ok(Self {
            a,
            c,
            xi0_mean,
            xi0_var,
            process_noise: true,
        })
    }

    pub fn without_process_noise(mut self) -> Self {
        self.process_noise = false;
        self
    }
}

/// A real-valued observation record on a uniform grid: per-step dY.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecord {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    seed: u64,
    trajectory_id: u64,
}

impl ContinuousRecord {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, seed: u64, trajectory_id: u64) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::GridMismatch(format!(
                "record step must be positive, got {dt}"
            )));
        }
        if values.is_empty() {
            return Err(Error::GridMismatch("record carries no steps".into()));
        }
        Ok(Self {
            t0,
            dt,
            values,
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
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }
}

/// Euler–Maruyama paths of the linear-Gaussian pair (ξ, Y); Gaussian
/// increments of variance dt, deterministic under (seed, trajectory_id).
pub fn simulate_linear(
    model: &LinearGaussianModel,
    t_final: f64,
    dt: f64,
    seed: u64,
    trajectory_id: u64,
) -> Result<(Vec<f64>, ContinuousRecord)> {
    if dt <= 0.0 || dt.is_nan() || t_final < dt {
        return Err(Error::InvalidInput(format!(
            "need 0 < dt <= t_final, got dt {dt}, t_final {t_final}"
        )));
    }
    let steps = ((t_final / dt).round() as usize).max(1);
    let rng = CounterRng::new(seed, trajectory_id);
    let sqrt_dt = dt.sqrt();

    // Pairs 0 and 1 of each step drive (V1, V2); pair 2 of step 0 draws
    // the initial condition.
    let mut xi = model.xi0_mean + model.xi0_var.sqrt() * rng.gaussian(0, 2);
    let mut path = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    path.push(xi);
    for step in 0..steps {
        let dv1 = if model.process_noise {
            sqrt_dt * rng.gaussian(step as u64, 0)
        } else {
            0.0
        };
        let dv2 = sqrt_dt * rng.gaussian(step as u64, 1);
        let dy = model.c * xi * dt + dv2;
        xi += model.a * xi * dt + dv1;
        increments.push(dy);
        path.push(xi);
    }
    let record = ContinuousRecord::new(0.0, dt, increments, seed, trajectory_id)?;
    Ok((path, record))
}

/// Kalman filter output: conditional mean and variance on the grid nodes,
/// plus per-step telemetry.
#[derive(Debug, Clone)]
pub struct KalmanRun {
    pub times: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    pub telemetry: Vec<FilterStep>,
}

/// Continuous-time Kalman filter, explicit Euler:
/// `dξ̂ = aξ̂ dt + cΣ (dY − cξ̂ dt)`, `Σ̇ = 2aΣ + 1 − c²Σ²`.
///
/// The conditional variance is deterministic: it never touches the
/// realized record.
pub fn kalman_run(model: &LinearGaussianModel, record: &ContinuousRecord) -> Result<KalmanRun> {
    let dt = record.dt();
    let steps = record.len();
    let mut xi_hat = Vec::with_capacity(steps + 1);
    let mut sigma = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut telemetry = Vec::with_capacity(steps);
    let mut x = model.xi0_mean;
    let mut s = model.xi0_var;
    xi_hat.push(x);
    sigma.push(s);
    times.push(record.t0());
    for (step, &dy) in record.values().iter().enumerate() {
        let prediction = x + model.a * x * dt;
        let gain = model.c * s;
        let innovation = dy - model.c * x * dt;
        x = prediction + gain * innovation;
        s += (2.0 * model.a * s + 1.0 - model.c * model.c * s * s) * dt;
        telemetry.push(FilterStep {
            prediction,
            gain,
            innovation,
        });
        xi_hat.push(x);
        sigma.push(s);
        times.push(record.t0() + (step + 1) as f64 * dt);
    }
    Ok(KalmanRun {
        times,
        xi_hat,
        sigma,
        telemetry,
    })
}

/// Stationary variance of the Kalman filter: the positive root of
/// `2aΣ + 1 − c²Σ² = 0`.
pub fn kalman_stationary_variance(a: f64, c: f64) -> f64 {
    if c == 0.0 {
        return if a < 0.0 { -1.0 / (2.0 * a) } else { f64::INFINITY };
    }
    let c2 = c * c;
    (a + (a * a + c2).sqrt()) / c2
}

/// Uniform spatial grid for the density filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min || nx < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs x_max > x_min and nx >= 3, got [{x_min}, {x_max}] with {nx} points"
            )));
        }
        Ok(Self { x_min, x_max, nx })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.point(i)).collect()
    }
}

/// Normalization tolerance of a grid density.
pub const DENSITY_NORM_TOL: f64 = 1e-8;
/// Most negative cell value tolerated in a grid density.
pub const DENSITY_NEGATIVITY_TOL: f64 = -1e-10;
/// Largest boundary-cell mass fraction before a run aborts.
pub const BOUNDARY_LEAK_TOL: f64 = 1e-4;

/// A discretized probability density on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nx {
            return Err(Error::DimensionMismatch {
                context: "density values vs grid",
                left: values.len(),
                right: grid.nx,
            });
        }
        let density = Self { grid, values };
        let mass = density.mass();
        if (mass - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(Error::InvariantViolation {
                what: "density normalization".into(),
                step: 0,
                violation: (mass - 1.0).abs(),
            });
        }
        if let Some(&min) = density
            .values
            .iter()
            .min_by(|x, y| x.partial_cmp(y).unwrap())
        {
            if min < DENSITY_NEGATIVITY_TOL {
                return Err(Error::InvariantViolation {
                    what: "density nonnegativity".into(),
                    step: 0,
                    violation: min,
                });
            }
        }
        Ok(density)
    }

    /// Gaussian density evaluated on the grid and renormalized.
    pub fn gaussian(grid: GridSpec, mean: f64, var: f64) -> Result<Self> {
        if var <= 0.0 || var.is_nan() {
            return Err(Error::InvalidInput(format!(
                "gaussian initialization needs positive variance, got {var}"
            )));
        }
        let mut values: Vec<f64> = (0..grid.nx)
            .map(|i| {
                let x = grid.point(i);
                (-(x - mean) * (x - mean) / (2.0 * var)).exp()
            })
            .collect();
        let mass: f64 = values.iter().sum::<f64>() * grid.dx();
        for v in &mut values {
            *v /= mass;
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass by rectangle quadrature.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Posterior expectation of an arbitrary function by quadrature.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &p)| f(self.grid.point(i)) * p)
            .sum::<f64>()
            * self.grid.dx()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expectation(|x| (x - m) * (x - m))
    }
}

/// Output of the grid-based conditional-density filter.
#[derive(Debug, Clone)]
pub struct KsGridRun {
    pub times: Vec<f64>,
    /// Posterior mean at every grid node time.
    pub means: Vec<f64>,
    /// (step index, density) snapshots at the requested stride.
    pub snapshots: Vec<(usize, GridDensity)>,
    pub final_density: GridDensity,
}

/// Grid filter for `dp̂ = 𝓛*(p̂)dt + (h − π_t(h)) p̂ dW`, with
/// `𝓛*(p) = ½p″ − (gp)′` in conservative central-difference form,
/// reflecting (zero-flux) boundaries, per-step renormalization, and
/// quadrature for π_t(h).
///
/// The diffusion step is explicit Euler; record intervals wider than the
/// stability guard dt ≤ Δx²/2 are split into that many inner substeps.
/// The innovation update applies once per record step with the pre-step
/// density. More than `BOUNDARY_LEAK_TOL` of mass in the boundary cells
/// aborts the run.
pub fn ks_grid_run(
    g: impl Fn(f64) -> f64,
    h: impl Fn(f64) -> f64,
    record: &ContinuousRecord,
    p0: GridDensity,
    snapshot_stride: usize,
) -> Result<KsGridRun> {
    let grid = p0.grid();
    let dx = grid.dx();
    let dt = record.dt();
    let nx = grid.nx;
    let xs = grid.points();
    let g_mid: Vec<f64> = (0..nx - 1).map(|i| g(0.5 * (xs[i] + xs[i + 1]))).collect();
    let h_vals: Vec<f64> = xs.iter().map(|&x| h(x)).collect();

    let cfl = 0.5 * dx * dx;
    let substeps = (dt / cfl).ceil().max(1.0) as usize;
    let dt_inner = dt / substeps as f64;

    let mut p = p0.values().to_vec();
    let mut means = Vec::with_capacity(record.len() + 1);
    let mut times = Vec::with_capacity(record.len() + 1);
    let mut snapshots = Vec::new();
    let quad = |p: &[f64], f: &[f64]| -> f64 {
        p.iter().zip(f).map(|(&a, &b)| a * b).sum::<f64>() * dx
    };
    means.push(quad(&p, &xs));
    times.push(record.t0());

    let mut flux = vec![0.0; nx + 1]; // flux[i] across the left face of cell i
    for (step, &dy) in record.values().iter().enumerate() {
        // π_t(h) and the innovation come from the pre-step density.
        let pi_h = quad(&p, &h_vals);
        let dw = dy - pi_h * dt;
        let innovation_weight: Vec<f64> = p
            .iter()
            .zip(&h_vals)
            .map(|(&pi, &hi)| (hi - pi_h) * pi * dw)
            .collect();

        // Drift-diffusion substeps, conservative form with zero-flux ends.
        for _ in 0..substeps {
            flux[0] = 0.0;
            flux[nx] = 0.0;
            for i in 1..nx {
                let adv = g_mid[i - 1] * 0.5 * (p[i - 1] + p[i]);
                let diff = 0.5 * (p[i] - p[i - 1]) / dx;
                flux[i] = adv - diff;
            }
            for i in 0..nx {
                p[i] -= dt_inner / dx * (flux[i + 1] - flux[i]);
            }
        }

        for i in 0..nx {
            p[i] += innovation_weight[i];
        }

        // Renormalize; the diffusion part conserves mass exactly, so this
        // only compensates the explicit innovation update.
        let mass: f64 = p.iter().sum::<f64>() * dx;
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::InvariantViolation {
                what: "grid density lost positivity of total mass".into(),
                step,
                violation: mass,
            });
        }
        for v in &mut p {
            *v /= mass;
        }

        let boundary_fraction = (p[0] + p[nx - 1]) * dx;
        if boundary_fraction > BOUNDARY_LEAK_TOL {
            return Err(Error::BoundaryMassLeak {
                step,
                fraction: boundary_fraction,
            });
        }

        means.push(quad(&p, &xs));
        times.push(record.t0() + (step + 1) as f64 * dt);
        if snapshot_stride > 0 && (step + 1) % snapshot_stride == 0 {
            snapshots.push((step + 1, GridDensity::new(grid, p.clone())?));
        }
    }
    let final_density = GridDensity::new(grid, p)?;
    Ok(KsGridRun {
        times,
        means,
        snapshots,
        final_density,
    })
}
