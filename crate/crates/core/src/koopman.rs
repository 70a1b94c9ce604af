//! Observable dictionaries, EDMD, lifted prediction and the Δt-halving
//! experiment that checks the second-order one-step error bound.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{PlantModel, Reference, StateVector, Trajectory};
use crate::error::{invalid, Error, Result};

/// Ordered list of monomials over the state coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    n_state: usize,
    exponents: Vec<Vec<u32>>,
    identity: Vec<usize>,
}

impl Dictionary {
    /// All monomials of total degree ≤ `degree` (degree ≥ 1), grouped by
    /// degree and ordered lexicographically within a degree, optionally led
    /// by the constant observable.
    pub fn monomials(n_state: usize, degree: u32, constant: bool) -> Self {
        assert!(n_state > 0 && degree >= 1);
        let mut exps = Vec::new();
        if constant {
            exps.push(vec![0; n_state]);
        }
        for d in 1..=degree {
            // multisets of size d drawn from 0..n_state, non-decreasing
            let mut idx = vec![0usize; d as usize];
            loop {
                let mut e = vec![0u32; n_state];
                for &i in &idx {
                    e[i] += 1;
                }
                exps.push(e);
                // advance like an odometer keeping idx non-decreasing
                let mut pos = idx.len();
                while pos > 0 && idx[pos - 1] == n_state - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                idx[pos - 1] += 1;
                let v = idx[pos - 1];
                for slot in idx.iter_mut().skip(pos) {
                    *slot = v;
                }
            }
        }
        Self::from_exponents(n_state, exps).expect("generated dictionary is valid")
    }

    /// Identity observables only.
    pub fn identity(n_state: usize) -> Self {
        Self::monomials(n_state, 1, false)
    }

    pub fn from_exponents(n_state: usize, exponents: Vec<Vec<u32>>) -> Result<Self> {
        if exponents.iter().any(|e| e.len() != n_state) {
            return Err(invalid("exponents", "tuple length differs from the state dimension"));
        }
        for (i, a) in exponents.iter().enumerate() {
            if exponents[..i].contains(a) {
                return Err(invalid("exponents", "duplicate monomial"));
            }
        }
        let mut identity = Vec::with_capacity(n_state);
        for coord in 0..n_state {
            let pos = exponents
                .iter()
                .position(|e| e.iter().enumerate().all(|(j, &p)| p == u32::from(j == coord)));
            match pos {
                Some(p) => identity.push(p),
                None => return Err(invalid("exponents", "every state coordinate needs its identity observable")),
            }
        }
        Ok(Self { n_state, exponents, identity })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Position of the identity observable for state coordinate `i`.
    pub fn identity_index(&self, i: usize) -> usize {
        self.identity[i]
    }

    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_state);
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (xi, &p) in x.iter().zip(e) {
                if p > 0 {
                    v *= libm::pow(*xi, f64::from(p));
                }
            }
            *o = v;
        }
    }

    /// Recover the state from a lifted vector via the identity observables.
    pub fn project(&self, phi: &[f64], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(&self.identity) {
            *o = phi[i];
        }
    }
}

/// Evaluate every observable of `dict` at `x`.
pub fn lift(x: &[f64], dict: &Dictionary) -> Result<DVector<f64>> {
    if x.len() != dict.n_state() {
        return Err(Error::DimensionMismatch { expected: dict.n_state(), got: x.len() });
    }
    let mut out = DVector::zeros(dict.len());
    dict.lift_into(x, out.as_mut_slice());
    Ok(out)
}

/// One uniformly sampled run, flattened row-major (`len × n` states, `len × m` inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeq {
    pub dt: f64,
    pub n_state: usize,
    pub n_input: usize,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl SnapshotSeq {
    pub fn new(dt: f64, n_state: usize, n_input: usize, states: Vec<f64>, inputs: Vec<f64>) -> Result<Self> {
        if states.len() % n_state != 0 || inputs.len() != states.len() / n_state * n_input {
            return Err(invalid("snapshots", "state and input buffers have inconsistent lengths"));
        }
        Ok(Self { dt, n_state, n_input, states, inputs })
    }

    /// Clean (noise-free) states of a simulated run.
    pub fn from_trajectory(t: &Trajectory) -> Self {
        let states = t.states.iter().flat_map(|s| s.to_array()).collect();
        Self { dt: t.dt, n_state: 3, n_input: 1, states, inputs: t.inputs.clone() }
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n_state
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n_state..(k + 1) * self.n_state]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.n_input..(k + 1) * self.n_input]
    }
}

/// Ridge penalty for the EDMD regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// λ used as is.
    Absolute(f64),
    /// λ = factor · trace(ZᵀZ)/(N+m).
    TraceScaled(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::TraceScaled(1e-8)
    }
}

/// Discrete-time lifted model φ(x_{k+1}) ≈ Kφ(x_k) + B u_k.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub k: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dictionary: Dictionary,
    /// Absolute λ actually applied.
    pub ridge_lambda: f64,
    /// Frobenius norm of the one-step regression residual.
    pub fit_residual: f64,
    pub dt: f64,
}

/// Least-squares fit of `[K B]` over all snapshot pairs in `data`.
///
/// With λ > 0 the regularised normal equations are solved by Cholesky.  With
/// λ = 0 the regression goes through a QR of the regressor matrix followed by
/// an SVD of its triangular factor, which keeps the accuracy of the
/// unsquared problem; numerically rank-deficient regressors are reported
/// rather than pseudo-inverted silently.
pub fn fit_edmd(data: &[SnapshotSeq], dict: &Dictionary, ridge: Ridge) -> Result<KoopmanModel> {
    let first = data.first().ok_or(Error::Empty("no trajectories"))?;
    let (n_state, m) = (first.n_state, first.n_input);
    if n_state != dict.n_state() {
        return Err(Error::DimensionMismatch { expected: dict.n_state(), got: n_state });
    }
    for d in data {
        if (d.dt - first.dt).abs() > 1e-12 * first.dt {
            return Err(Error::InconsistentStep { first: first.dt, other: d.dt });
        }
        if d.n_state != n_state || d.n_input != m {
            return Err(Error::DimensionMismatch { expected: n_state, got: d.n_state });
        }
    }
    let n = dict.len();
    let cols = n + m;
    let pairs: usize = data.iter().map(|d| d.len().saturating_sub(1)).sum();
    if pairs < cols {
        return Err(Error::InsufficientData { need: cols, have: pairs });
    }

    let mut z = DMatrix::<f64>::zeros(pairs, cols);
    let mut y = DMatrix::<f64>::zeros(pairs, n);
    let mut phi = vec![0.0; n];
    let mut row = 0;
    for d in data {
        for k in 0..d.len().saturating_sub(1) {
            dict.lift_into(d.state(k), &mut phi);
            for (j, &v) in phi.iter().enumerate() {
                z[(row, j)] = v;
            }
            for (j, &v) in d.input(k).iter().enumerate() {
                z[(row, n + j)] = v;
            }
            dict.lift_into(d.state(k + 1), &mut phi);
            for (j, &v) in phi.iter().enumerate() {
                y[(row, j)] = v;
            }
            row += 1;
        }
    }

    let gram = z.tr_mul(&z);
    let lambda = match ridge {
        Ridge::Absolute(l) => l,
        Ridge::TraceScaled(f) => f * gram.trace() / cols as f64,
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("ridge_lambda", "must be finite and non-negative"));
    }

    let w = if lambda > 0.0 {
        let mut g = gram;
        for i in 0..cols {
            g[(i, i)] += lambda;
        }
        let chol = g.cholesky().ok_or(Error::RankDeficient { rank: 0, cols })?;
        chol.solve(&z.tr_mul(&y))
    } else {
        let qr = z.clone().qr();
        let r = qr.r();
        let qty = qr.q().tr_mul(&y);
        let svd = r.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = (pairs.max(cols) as f64) * f64::EPSILON * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        svd.solve(&qty, tol).map_err(|_| Error::RankDeficient { rank, cols })?
    };

    let fit_residual = (&y - &z * &w).norm();
    let k = w.rows(0, n).transpose();
    let b = w.rows(n, m).transpose();
    Ok(KoopmanModel { k, b, dictionary: dict.clone(), ridge_lambda: lambda, fit_residual, dt: first.dt })
}

impl KoopmanModel {
    pub fn n_lifted(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Kφ + Bu written into `out` (no allocation; `out` must not alias `phi`).
    pub fn step_into(&self, phi: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.n_lifted();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.k[(i, j)] * phi[j];
            }
            for (j, uj) in u.iter().enumerate() {
                acc += self.b[(i, j)] * uj;
            }
            out[i] = acc;
        }
    }

    /// ‖[K B]‖_F
    pub fn operator_norm_f(&self) -> f64 {
        libm::sqrt(self.k.norm_squared() + self.b.norm_squared())
    }

    /// Continuous generator log(K)/dt, where the principal logarithm exists.
    pub fn continuous_generator(&self) -> Result<DMatrix<f64>> {
        Ok(matrix_log(&self.k)? / self.dt)
    }
}

/// Lifted rollout: element `n` is Kⁿφ₀ + Σ_{j<n} K^{n−1−j}B u_j.
///
/// `inputs` holds `horizon` consecutive input vectors, flattened.
pub fn predict_lifted(
    model: &KoopmanModel,
    phi0: &DVector<f64>,
    inputs: &[f64],
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = model.n_lifted();
    let m = model.n_inputs();
    if phi0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: phi0.len() });
    }
    if inputs.len() < horizon * m {
        return Err(Error::DimensionMismatch { expected: horizon * m, got: inputs.len() });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(phi0.clone());
    for j in 0..horizon {
        let u = DVector::from_column_slice(&inputs[j * m..(j + 1) * m]);
        let next = &model.k * &out[j] + &model.b * u;
        out.push(next);
    }
    Ok(out)
}

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// Denman–Beavers square roots until ‖A − I‖ < ¼, then the Mercator series.
pub fn matrix_log(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut squarings = 0u32;
    while (&x - &eye).norm() >= 0.25 {
        if squarings > 60 {
            return Err(Error::NoLogarithm("square-root iteration did not approach the identity"));
        }
        x = sqrtm_db(&x)?;
        squarings += 1;
    }
    let d = &x - &eye;
    let mut term = d.clone();
    let mut acc = d.clone();
    for k in 2..80 {
        term = &term * &d;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        acc += &term * (sign / k as f64);
        if term.norm() < 1e-18 {
            break;
        }
    }
    Ok(acc * libm::pow(2.0, f64::from(squarings)))
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { libm::ceil(libm::log2(norm / 0.5)) as i32 } else { 0 };
    let scaled = a / libm::pow(2.0, f64::from(squarings));
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut acc = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        acc += &term;
        if term.norm() < 1e-18 * acc.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

fn sqrtm_db(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or(Error::NoLogarithm("singular iterate (eigenvalue at zero)"))?;
        let zi = z.clone().try_inverse().ok_or(Error::NoLogarithm("singular iterate (eigenvalue at zero)"))?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let change = (&y_next - &y).norm() / y_next.norm().max(f64::MIN_POSITIVE);
        y = y_next;
        z = z_next;
        if change < 1e-15 {
            return Ok(y);
        }
    }
    Err(Error::NoLogarithm("square-root iteration diverged (eigenvalue on the negative axis?)"))
}

/// A deterministic system that can be advanced by one step of any length.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn advance(&self, x: &[f64], u: f64, h: f64, out: &mut [f64]);
}

impl Dynamics for PlantModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn advance(&self, x: &[f64], u: f64, h: f64, out: &mut [f64]) {
        let next = self.step(&StateVector::from_slice(x), u, h);
        out.copy_from_slice(&next.to_array());
    }
}

/// Linear time-invariant plant ẋ = Ax + bu advanced by its exact
/// zero-order-hold map.  Used as the "exact regime" control case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dynamics for LinearPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn advance(&self, x: &[f64], u: f64, h: f64, out: &mut [f64]) {
        let n = self.state_dim();
        // exp([[A b],[0 0]]·h) gives both Φ and Γ in one go
        let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&self.a);
        aug.view_mut((0, n), (n, 1)).copy_from(&self.b);
        let e = matrix_exp(&(aug * h));
        for i in 0..n {
            let mut acc = e[(i, n)] * u;
            for j in 0..n {
                acc += e[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }
}

/// PD tracking of a reference on the first state coordinate (position),
/// with the second coordinate taken as velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub reference: Reference,
    pub kp: f64,
    pub kd: f64,
}

impl Excitation {
    fn command(&self, t: f64, x: &[f64]) -> f64 {
        let (xd, vd) = self.reference.desired(t);
        let v = if x.len() > 1 { x[1] } else { 0.0 };
        self.kp * (xd - x[0]) + self.kd * (vd - v)
    }
}

/// Design of the Δt-halving experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSetup {
    pub initial: Vec<f64>,
    pub train: Vec<Excitation>,
    pub test: Excitation,
    pub train_duration: f64,
    pub test_duration: f64,
    /// Step of the fine-step reference integration.
    pub oracle_step: f64,
    pub halvings: usize,
}

impl OrderSetup {
    /// Palpation in sustained contact: the tool starts at rest 3 mm into the
    /// tissue and is driven by ±1 mm-scale raised-cosine strokes, so the
    /// trajectory never crosses the contact switch.
    pub fn palpation(plant: &PlantModel) -> Self {
        let offset = 3.0e-3;
        let amp = 2.0e-3;
        let exc = |amplitude: f64, frequency: f64, phase: f64| Excitation {
            reference: Reference::RaisedCosine { offset, amplitude, frequency, phase },
            kp: 150.0,
            kd: 3.0,
        };
        Self {
            initial: plant.rest_state(offset).to_array().to_vec(),
            train: vec![exc(amp, 1.0, 0.0), exc(amp * 1.3, 0.7, 1.0), exc(amp * 0.7, 1.3, 2.0)],
            test: exc(amp * 1.1, 0.9, 0.5),
            train_duration: 3.0,
            test_duration: 2.0,
            oracle_step: 1e-5,
            halvings: 2,
        }
    }
}

/// Outcome of the Δt-halving experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorOrder {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// e(Δt)/e(Δt/2) for the first halving; `None` in the exact regime.
    pub ratio: Option<f64>,
    /// e(Δt)/e(Δt/2^halvings); `None` in the exact regime.
    pub cumulative: Option<f64>,
    /// Errors indistinguishable from round-off at every step size.
    pub exact: bool,
}

fn rollout<P: Dynamics + ?Sized>(
    plant: &P,
    setup: &OrderSetup,
    exc: &Excitation,
    h: f64,
    duration: f64,
    substeps: usize,
) -> SnapshotSeq {
    let n = plant.state_dim();
    let steps = libm::round(duration / h) as usize;
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = setup.initial.clone();
    let mut next = vec![0.0; n];
    let sub = h / substeps as f64;
    for k in 0..=steps {
        let u = exc.command(k as f64 * h, &x);
        states.extend_from_slice(&x);
        inputs.push(u);
        for _ in 0..substeps {
            plant.advance(&x, u, sub, &mut next);
            x.copy_from_slice(&next);
        }
    }
    SnapshotSeq { dt: h, n_state: n, n_input: 1, states, inputs }
}

/// Fit at Δt, Δt/2, … and score each model's one-step lifted prediction
/// against fine-step reference data.
///
/// Training data at step `h` come from the plant's own single-step
/// integrator; the test data come from `oracle_step` sub-stepping, so the
/// score combines the projection error of the dictionary with the
/// discretisation mismatch that error-order bounds speak about.
pub fn verify_error_order<P, F>(plant: &P, setup: &OrderSetup, mut factory: F, dt: f64) -> Result<ErrorOrder>
where
    P: Dynamics + ?Sized,
    F: FnMut(&[SnapshotSeq]) -> Result<KoopmanModel>,
{
    if setup.initial.len() != plant.state_dim() {
        return Err(Error::DimensionMismatch { expected: plant.state_dim(), got: setup.initial.len() });
    }
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    let mut scale = 0.0;
    for level in 0..=setup.halvings {
        let h = dt / libm::pow(2.0, level as f64);
        let train: Vec<SnapshotSeq> =
            setup.train.iter().map(|e| rollout(plant, setup, e, h, setup.train_duration, 1)).collect();
        let model = factory(&train)?;
        let substeps = (libm::round(h / setup.oracle_step) as usize).max(1);
        let test = rollout(plant, setup, &setup.test, h, setup.test_duration, substeps);
        let dict = &model.dictionary;
        let n = dict.len();
        let (mut phi, mut pred, mut next) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut total = 0.0;
        let mut norm = 0.0;
        let count = test.len() - 1;
        for k in 0..count {
            dict.lift_into(test.state(k), &mut phi);
            model.step_into(&phi, test.input(k), &mut pred);
            dict.lift_into(test.state(k + 1), &mut next);
            let mut sq = 0.0;
            for i in 0..n {
                sq += (next[i] - pred[i]) * (next[i] - pred[i]);
            }
            total += libm::sqrt(sq);
            norm += libm::sqrt(next.iter().map(|v| v * v).sum::<f64>());
        }
        steps.push(h);
        errors.push(total / count as f64);
        scale = f64::max(scale, norm / count as f64);
    }
    let exact = errors.iter().all(|&e| e <= 1e-10 * scale.max(1.0));
    let (ratio, cumulative) = if exact {
        (None, None)
    } else {
        (Some(errors[0] / errors[1]), Some(errors[0] / errors[errors.len() - 1]))
    };
    Ok(ErrorOrder { steps, errors, ratio, cumulative, exact })
}
