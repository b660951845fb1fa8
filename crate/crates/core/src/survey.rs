//! Data acquisition on top of the FDTD solver: the sampled data matrices,
//! the internal snapshot fields, and the additive-noise model.
//!
//! The array response is the receiver recording convolved with the
//! time-reversed probing pulse; the data matrix is its even-in-time
//! extension, sampled at the snapshot interval. Snapshot fields come from
//! a separate run driven by the derivative of the square-root pulse.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdtd::{fdtd_run, lattice_half_width, quadrature_weights, BoundarySpec, RecordSpec, SourceTraces};
use crate::grid::{Grid2D, Medium, SensorArray, TimeGrid};
use crate::signal::{derivative, pulse_f, pulse_f_derivative, PulseSpec, SampledSignal};

/// Sampled data matrices `D_j`, `j` ascending from zero. A cube holding
/// `2n` matrices also supports stiffness assembly; `2n - 1` is enough for
/// the mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub tau: f64,
    pub matrices: Vec<DMatrix<f64>>,
}

impl DataCube {
    pub fn new(tau: f64, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument("data cube needs at least D_0".into()));
        }
        let m = matrices[0].nrows();
        for (j, d) in matrices.iter().enumerate() {
            if d.nrows() != m || d.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "D_{j} is {}x{}, expected {m}x{m}",
                    d.nrows(),
                    d.ncols()
                )));
            }
        }
        Ok(Self { tau, matrices })
    }

    pub fn m(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// Snapshot count: `2n - 1` or `2n` stored matrices give `n`.
    pub fn n(&self) -> usize {
        (self.matrices.len() + 1) / 2
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn d(&self, j: usize) -> Result<&DMatrix<f64>> {
        self.matrices.get(j).ok_or_else(|| {
            Error::IndexOutOfRange(format!("D_{j} of a cube with {} matrices", self.matrices.len()))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    TrueU,
    ReferenceU,
    EstimatedU,
}

/// `n` wave fields per source on the finite-difference grid, sampled at
/// `t = j tau`. Column `j * m + s` of `fields` is the field of source `s`
/// at time `j tau`, flattened in grid order.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub kind: SnapshotKind,
    pub grid: Grid2D,
    pub tau: f64,
    pub n: usize,
    pub m: usize,
    pub fields: DMatrix<f64>,
    pub derivatives: Option<DMatrix<f64>>,
    /// Midpoint quadrature weights per grid node (no `h^2` factor).
    pub weights: Vec<f64>,
}

impl SnapshotSet {
    pub fn field(&self, j: usize, s: usize) -> Result<Vec<f64>> {
        if j >= self.n || s >= self.m {
            return Err(Error::IndexOutOfRange(format!(
                "snapshot (j = {j}, s = {s}) of a {}x{} set",
                self.n, self.m
            )));
        }
        Ok(self.fields.column(j * self.m + s).iter().cloned().collect())
    }

    /// All-source slab at time index `j`: `ngrid x m`.
    pub fn slab(&self, j: usize) -> Result<DMatrix<f64>> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange(format!("snapshot index {j} of {}", self.n)));
        }
        Ok(self
            .fields
            .columns(j * self.m, self.m)
            .into_owned())
    }

    /// The companion set whose fields are the recorded time derivatives.
    pub fn derivative_set(&self) -> Result<SnapshotSet> {
        let d = self.derivatives.as_ref().ok_or_else(|| {
            Error::InvalidArgument("snapshot set was built without derivatives".into())
        })?;
        Ok(SnapshotSet {
            kind: self.kind,
            grid: self.grid.clone(),
            tau: self.tau,
            n: self.n,
            m: self.m,
            fields: d.clone(),
            derivatives: None,
            weights: self.weights.clone(),
        })
    }

    pub fn same_lattice(&self, other: &SnapshotSet) -> bool {
        self.grid == other.grid && self.tau == other.tau && self.n == other.n && self.m == other.m
    }
}

/// Half-width of the truncated source window. The data matrices inherit
/// an exact Gram structure from the discrete evolution only while the
/// source is a whole (even) signal; truncating it perturbs the smallest
/// mass-matrix eigenvalues. At `2.5 t_F` the envelope is below 4e-17 of
/// its peak, which keeps the assembled mass matrix positive semidefinite
/// to rounding.
pub fn source_half_width(pulse: &PulseSpec, dt: f64) -> f64 {
    lattice_half_width(2.5 * pulse.t_f(), dt)
}

fn convolve_with_pulse(
    traces: &SourceTraces,
    pulse: &PulseSpec,
    t: f64,
    receiver: usize,
    t_window: f64,
) -> f64 {
    // M(t) = dt * sum_k f(t - t_k) p(t_k); f is even so f(-t) = f(t).
    let dt = traces.dt;
    let k_lo = ((t - t_window - traces.t0) / dt).floor().max(0.0) as usize;
    let k_hi_f = ((t + t_window - traces.t0) / dt).ceil();
    if k_hi_f < 0.0 {
        return 0.0;
    }
    let k_hi = (k_hi_f as usize).min(traces.values.nrows().saturating_sub(1));
    let mut acc = 0.0;
    for k in k_lo..=k_hi {
        let tk = traces.t0 + k as f64 * dt;
        acc += pulse_f(pulse, t - tk) * traces.values[(k, receiver)];
    }
    acc * dt
}

/// Synthesizes the sampled data matrices `D_j`, `j = 0 .. 2n-1`, in the
/// given medium: one probing run per source, receiver traces convolved
/// with the time-reversed pulse, evenized in time from the recorded
/// negative-time part, and sampled at the snapshot interval.
pub fn make_data_cube(
    medium: &Medium,
    array: &SensorArray,
    pulse: &PulseSpec,
    time_grid: &TimeGrid,
    boundaries: &BoundarySpec,
) -> Result<DataCube> {
    let m = array.m();
    let n = time_grid.n;
    let dt = time_grid.dt;
    let tau = time_grid.tau;
    let t_src = source_half_width(pulse, dt);
    // The convolution window: beyond 1.5 t_F the pulse is negligible, but
    // keep the full sampled support for exact discrete evenization.
    let t_window = t_src;
    let t_end = (2 * n - 1) as f64 * tau + t_window;

    let half = (t_src / dt).round() as usize;
    let signal = SampledSignal::new(
        dt,
        -(half as f64) * dt,
        (0..=2 * half)
            .map(|i| pulse_f_derivative(pulse, (i as f64 - half as f64) * dt))
            .collect(),
    )?;
    let record = RecordSpec { traces: true, snapshot_times: vec![], t_end };

    let per_source: Vec<SourceTraces> = (0..m)
        .into_par_iter()
        .map(|s| {
            fdtd_run(medium, array, s, &signal, boundaries, time_grid, &record)
                .map(|out| out.traces.expect("traces requested"))
        })
        .collect::<Result<_>>()?;

    let mut matrices = Vec::with_capacity(2 * n);
    for j in 0..2 * n {
        let t = j as f64 * tau;
        let mut d = DMatrix::<f64>::zeros(m, m);
        for s in 0..m {
            let tr = &per_source[s];
            for r in 0..m {
                let pos = convolve_with_pulse(tr, pulse, t, r, t_window);
                // The anticausal part vanishes once t exceeds the recorded
                // source ramp plus the pulse support.
                let neg = if t <= 2.0 * t_window {
                    convolve_with_pulse(tr, pulse, -t, r, t_window)
                } else {
                    0.0
                };
                d[(r, s)] = pos + neg;
            }
        }
        matrices.push(d);
    }
    DataCube::new(tau, matrices)
}

/// Simulates the internal snapshot fields `u_j(x)` for every source: one
/// run per source driven by the derivative of the square-root pulse,
/// similarity-scaled by `c_bar / c(x)`, and evenized in time from the
/// recorded negative-time ramp. With `with_derivative`, centered
/// differences on the fine time lattice are recorded alongside.
pub fn make_snapshots(
    medium: &Medium,
    array: &SensorArray,
    frak_f: &SampledSignal,
    time_grid: &TimeGrid,
    boundaries: &BoundarySpec,
    kind: SnapshotKind,
    with_derivative: bool,
) -> Result<SnapshotSet> {
    let m = array.m();
    let n = time_grid.n;
    let dt = time_grid.dt;
    let tau = time_grid.tau;
    let grid = medium.grid.clone();
    let n_nodes = grid.node_count();

    if (frak_f.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::DimensionMismatch(format!(
            "square-root pulse step {} differs from simulation step {dt}",
            frak_f.dt
        )));
    }
    let source = derivative(frak_f)?;
    let t_start = source.t0;
    let t_end = (n - 1) as f64 * tau + if with_derivative { dt } else { 0.0 };

    // Request fields at +-(j tau) and, for derivatives, +-(j tau) +- dt.
    // Negative times before the source onset are identically zero and are
    // skipped; `slot_of` remembers which requested time went where.
    let mut times: Vec<f64> = Vec::new();
    let push = |t: f64, times: &mut Vec<f64>| -> Option<usize> {
        if t < t_start - 0.5 * dt || t > t_end + 0.5 * dt {
            return None;
        }
        times.push(t);
        Some(times.len() - 1)
    };
    #[derive(Clone, Copy, Default)]
    struct Slots {
        pos: Option<usize>,
        neg: Option<usize>,
        pos_p: Option<usize>,
        pos_m: Option<usize>,
        neg_p: Option<usize>,
        neg_m: Option<usize>,
    }
    let mut slots = vec![Slots::default(); n];
    for (j, slot) in slots.iter_mut().enumerate() {
        let t = j as f64 * tau;
        slot.pos = push(t, &mut times);
        slot.neg = push(-t, &mut times);
        if with_derivative {
            slot.pos_p = push(t + dt, &mut times);
            slot.pos_m = push(t - dt, &mut times);
            slot.neg_p = push(-t + dt, &mut times);
            slot.neg_m = push(-t - dt, &mut times);
        }
    }

    let record = RecordSpec { traces: false, snapshot_times: times, t_end };
    let runs: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|s| {
            fdtd_run(medium, array, s, &source, boundaries, time_grid, &record)
                .map(|out| out.snapshots)
        })
        .collect::<Result<_>>()?;

    // zeta = (c_bar / c) q; u_j = zeta(j tau) + zeta(-j tau).
    let scale: Vec<f64> = medium.c.iter().map(|&c| medium.c_bar / c).collect();
    let grab = |snaps: &Vec<Vec<f64>>, slot: Option<usize>, node: usize| -> f64 {
        match slot {
            Some(q) => snaps[q][node] * scale[node],
            None => 0.0,
        }
    };

    let mut fields = DMatrix::<f64>::zeros(n_nodes, n * m);
    let mut derivatives = with_derivative.then(|| DMatrix::<f64>::zeros(n_nodes, n * m));
    for s in 0..m {
        let snaps = &runs[s];
        for (j, slot) in slots.iter().enumerate() {
            let col = j * m + s;
            for node in 0..n_nodes {
                fields[(node, col)] = grab(snaps, slot.pos, node) + grab(snaps, slot.neg, node);
            }
            if let Some(dm) = derivatives.as_mut() {
                for node in 0..n_nodes {
                    let ahead = grab(snaps, slot.pos_p, node) + grab(snaps, slot.neg_m, node);
                    let behind = grab(snaps, slot.pos_m, node) + grab(snaps, slot.neg_p, node);
                    dm[(node, col)] = (ahead - behind) / (2.0 * dt);
                }
            }
        }
    }

    let weights = quadrature_weights(&grid, boundaries);
    Ok(SnapshotSet {
        kind,
        grid,
        tau,
        n,
        m,
        fields,
        derivatives,
        weights,
    })
}

/// Adds i.i.d. zero-mean Gaussian noise to `D_1 .. D_{2n-1}` with variance
/// `level^2 / (2 n m^2) * sum_j ||D_j||_F^2`. `D_0` is computed in the
/// known medium near the sensors and stays untouched. Deterministic for a
/// given seed.
pub fn add_noise(cube: &DataCube, level: f64, seed: u64) -> Result<DataCube> {
    if level < 0.0 {
        return Err(Error::InvalidArgument(format!("noise level {level} must be >= 0")));
    }
    if level == 0.0 {
        return Ok(cube.clone());
    }
    let m = cube.m();
    let n = cube.n();
    let total: f64 = cube.matrices.iter().map(|d| d.norm_squared()).sum();
    let sigma = (level * level / (2.0 * n as f64 * (m * m) as f64) * total).sqrt();
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrices = cube.matrices.clone();
    for d in matrices.iter_mut().skip(1) {
        for r in 0..m {
            for s in 0..m {
                d[(r, s)] += normal.sample(&mut rng);
            }
        }
    }
    DataCube::new(cube.tau, matrices)
}
