//! Governing equations of the bistable piezo-magneto-elastic harvester and a
//! fixed-step RK4 integrator.
//!
//! The model is dimensionless:
//!
//! ```text
//! x'' = -2 xi x' + x (1 + 2 delta x - x^2) / 2 + (1 + beta |x|) chi v + f cos(omega t) + p sin(phi)
//! v'  = -lambda v - (1 + beta |x|) kappa x'
//! ```
//!
//! with instantaneous power `P = lambda v^2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensionless parameter vector of the harvester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvesterParams {
    /// Damping ratio.
    pub xi: f64,
    /// Piezoelectric coupling in the mechanical equation.
    pub chi: f64,
    /// Reciprocal time constant of the electrical circuit.
    pub lambda: f64,
    /// Piezoelectric coupling in the electrical equation.
    pub kappa: f64,
    /// Base excitation amplitude.
    pub f: f64,
    /// Excitation frequency.
    pub omega: f64,
    /// Strain-dependent (nonlinear) coupling coefficient.
    pub beta: f64,
    /// Quadratic nonlinearity of the restoring force.
    pub delta: f64,
    /// Surface inclination angle in radians.
    pub phi: f64,
    /// Equivalent gravity constant of the ferromagnetic beam.
    pub p: f64,
}

impl Default for HarvesterParams {
    /// Nominal symmetric harvester with linear coupling.
    fn default() -> Self {
        HarvesterParams {
            xi: 0.01,
            chi: 0.05,
            lambda: 0.05,
            kappa: 0.5,
            f: 0.083,
            omega: 0.8,
            beta: 0.0,
            delta: 0.0,
            phi: 0.0,
            p: 0.0,
        }
    }
}

/// Model taxonomy implied by which asymmetry/nonlinear-coupling terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sym-linear", alias = "symmetric-linear")]
    SymmetricLinear,
    #[serde(rename = "sym-nonlinear", alias = "symmetric-nonlinear")]
    SymmetricNonlinear,
    #[serde(rename = "asymmetric")]
    Asymmetric,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::SymmetricLinear,
        Variant::SymmetricNonlinear,
        Variant::Asymmetric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SymmetricLinear => "sym-linear",
            Variant::SymmetricNonlinear => "sym-nonlinear",
            Variant::Asymmetric => "asymmetric",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym-linear" | "symmetric-linear" => Ok(Variant::SymmetricLinear),
            "sym-nonlinear" | "symmetric-nonlinear" => Ok(Variant::SymmetricNonlinear),
            "asymmetric" | "asym" => Ok(Variant::Asymmetric),
            other => Err(Error::InvalidParams(format!("unknown variant `{other}`"))),
        }
    }
}

/// Names of the fields of [`HarvesterParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Xi,
    Chi,
    Lambda,
    Kappa,
    F,
    Omega,
    Beta,
    Delta,
    Phi,
    P,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::Xi,
        Param::Chi,
        Param::Lambda,
        Param::Kappa,
        Param::F,
        Param::Omega,
        Param::Beta,
        Param::Delta,
        Param::Phi,
        Param::P,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Xi => "xi",
            Param::Chi => "chi",
            Param::Lambda => "lambda",
            Param::Kappa => "kappa",
            Param::F => "f",
            Param::Omega => "omega",
            Param::Beta => "beta",
            Param::Delta => "delta",
            Param::Phi => "phi",
            Param::P => "p",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

impl HarvesterParams {
    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::Xi => self.xi,
            Param::Chi => self.chi,
            Param::Lambda => self.lambda,
            Param::Kappa => self.kappa,
            Param::F => self.f,
            Param::Omega => self.omega,
            Param::Beta => self.beta,
            Param::Delta => self.delta,
            Param::Phi => self.phi,
            Param::P => self.p,
        }
    }

    pub fn set(&mut self, param: Param, value: f64) {
        let slot = match param {
            Param::Xi => &mut self.xi,
            Param::Chi => &mut self.chi,
            Param::Lambda => &mut self.lambda,
            Param::Kappa => &mut self.kappa,
            Param::F => &mut self.f,
            Param::Omega => &mut self.omega,
            Param::Beta => &mut self.beta,
            Param::Delta => &mut self.delta,
            Param::Phi => &mut self.phi,
            Param::P => &mut self.p,
        };
        *slot = value;
    }

    pub fn with(mut self, param: Param, value: f64) -> Self {
        self.set(param, value);
        self
    }

    pub fn variant(&self) -> Variant {
        if self.delta != 0.0 || self.phi != 0.0 {
            Variant::Asymmetric
        } else if self.beta != 0.0 {
            Variant::SymmetricNonlinear
        } else {
            Variant::SymmetricLinear
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = Param::ALL.iter().find(|p| !self.get(**p).is_finite()) {
            return Err(Error::InvalidParams(format!("{p} is not finite")));
        }
        let positive = [(Param::Xi, self.xi), (Param::Lambda, self.lambda), (Param::Omega, self.omega)];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {value}")));
            }
        }
        let nonneg = [
            (Param::Chi, self.chi),
            (Param::Kappa, self.kappa),
            (Param::F, self.f),
            (Param::Beta, self.beta),
            (Param::P, self.p),
        ];
        for (name, value) in nonneg {
            if value < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Constant part of the mechanical forcing, `p sin(phi)`.
    #[inline]
    fn static_load(&self) -> f64 {
        self.p * self.phi.sin()
    }
}

/// Mechanical displacement, velocity and resistor voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub xdot: f64,
    pub v: f64,
}

impl State {
    pub const fn new(x: f64, xdot: f64, v: f64) -> Self {
        State { x, xdot, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xdot.is_finite() && self.v.is_finite()
    }

    #[inline(always)]
    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            x: self.x + h * d.x,
            xdot: self.xdot + h * d.xdot,
            v: self.v + h * d.v,
        }
    }
}

#[inline(always)]
fn vector_field(s: &State, drive: f64, params: &HarvesterParams) -> State {
    let coupling = 1.0 + params.beta * s.x.abs();
    State {
        x: s.xdot,
        xdot: -2.0 * params.xi * s.xdot
            + 0.5 * s.x * (1.0 + 2.0 * params.delta * s.x - s.x * s.x)
            + coupling * params.chi * s.v
            + drive,
        v: -params.lambda * s.v - coupling * params.kappa * s.xdot,
    }
}

/// Time derivative `(x', x'', v')` of the state at time `t`.
pub fn rhs(state: &State, t: f64, params: &HarvesterParams) -> State {
    let drive = params.f * (params.omega * t).cos() + params.static_load();
    vector_field(state, drive, params)
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Leading fraction of the run discarded before averaging.
    pub transient_fraction: f64,
    pub ic: State,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            dt: 0.01,
            t_end: 2000.0,
            transient_fraction: 0.5,
            ic: State::new(1.0, 0.0, 0.0),
        }
    }
}

impl IntegratorSettings {
    /// Number of steps on the grid; `t_end` is snapped to `steps * dt`.
    pub fn steps(&self) -> Result<usize> {
        grid_steps(self.t_end, self.dt)
    }
}

fn grid_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParams(format!("t_end must be > 0, got {t_end}")));
    }
    let steps = (t_end / dt).round();
    if steps < 1.0 {
        return Err(Error::InvalidParams(format!("t_end = {t_end} is shorter than one step")));
    }
    Ok(steps as usize)
}

/// Half-step samples of `cos(omega t)` by angle rotation, resynchronised with
/// the exact value at a fixed cadence.
struct Harmonic {
    omega: f64,
    half_dt: f64,
    k: usize,
    c: f64,
    s: f64,
    rot_c: f64,
    rot_s: f64,
}

impl Harmonic {
    const RESYNC: usize = 512;

    fn new(omega: f64, dt: f64) -> Self {
        let half_dt = 0.5 * dt;
        let (rot_s, rot_c) = (omega * half_dt).sin_cos();
        Harmonic { omega, half_dt, k: 0, c: 1.0, s: 0.0, rot_c, rot_s }
    }

    #[inline(always)]
    fn current(&self) -> f64 {
        self.c
    }

    #[inline(always)]
    fn advance(&mut self) -> f64 {
        self.k += 1;
        if self.k % Self::RESYNC == 0 {
            let (s, c) = (self.omega * self.half_dt * self.k as f64).sin_cos();
            self.c = c;
            self.s = s;
        } else {
            let c = self.c * self.rot_c - self.s * self.rot_s;
            let s = self.s * self.rot_c + self.c * self.rot_s;
            self.c = c;
            self.s = s;
        }
        self.c
    }
}

/// Classical RK4 stepper over the uniform grid `t_i = i * dt`.
struct Stepper<'a> {
    params: &'a HarvesterParams,
    dt: f64,
    load: f64,
    harmonic: Harmonic,
    state: State,
    step: usize,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a HarvesterParams, ic: State, dt: f64) -> Self {
        Stepper {
            params,
            dt,
            load: params.static_load(),
            harmonic: Harmonic::new(params.omega, dt),
            state: ic,
            step: 0,
        }
    }

    #[inline(always)]
    fn advance(&mut self) -> Result<State> {
        let p = self.params;
        let h = self.dt;
        let d0 = p.f * self.harmonic.current() + self.load;
        let d_half = p.f * self.harmonic.advance() + self.load;
        let d1 = p.f * self.harmonic.advance() + self.load;

        let s = self.state;
        let k1 = vector_field(&s, d0, p);
        let k2 = vector_field(&s.axpy(0.5 * h, &k1), d_half, p);
        let k3 = vector_field(&s.axpy(0.5 * h, &k2), d_half, p);
        let k4 = vector_field(&s.axpy(h, &k3), d1, p);
        let w = h / 6.0;
        let next = State {
            x: s.x + w * (k1.x + 2.0 * (k2.x + k3.x) + k4.x),
            xdot: s.xdot + w * (k1.xdot + 2.0 * (k2.xdot + k3.xdot) + k4.xdot),
            v: s.v + w * (k1.v + 2.0 * (k2.v + k3.v) + k4.v),
        };
        self.step += 1;
        if !next.is_finite() {
            return Err(Error::NonFinite { t: self.step as f64 * h });
        }
        self.state = next;
        Ok(next)
    }
}

/// Time series produced by [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<State>,
    pub power: Vec<f64>,
    pub dt: f64,
    /// Reciprocal time constant the power samples were computed with.
    pub lambda: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the first sample kept after discarding `transient_fraction`.
    pub fn window_start(&self, transient_fraction: f64) -> usize {
        window_start(self.len(), transient_fraction)
    }

    /// Steady-state tail after discarding the leading `transient_fraction`.
    pub fn tail(&self, transient_fraction: f64) -> Trajectory {
        let i0 = self.window_start(transient_fraction);
        Trajectory {
            t: self.t[i0..].to_vec(),
            states: self.states[i0..].to_vec(),
            power: self.power[i0..].to_vec(),
            dt: self.dt,
            lambda: self.lambda,
        }
    }

    /// Every `stride`-th sample.
    pub fn decimate(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        Trajectory {
            t: self.t.iter().step_by(stride).copied().collect(),
            states: self.states.iter().step_by(stride).copied().collect(),
            power: self.power.iter().step_by(stride).copied().collect(),
            dt: self.dt * stride as f64,
            lambda: self.lambda,
        }
    }

    pub fn displacement(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.x).collect()
    }
}

#[inline]
fn instantaneous_power(lambda: f64, v: f64) -> f64 {
    lambda * v * v
}

fn window_start(len: usize, transient_fraction: f64) -> usize {
    if len == 0 {
        return 0;
    }
    let i0 = ((len - 1) as f64 * transient_fraction).round() as usize;
    i0.min(len - 1)
}

/// Integrates the harvester from `ic` over `[0, t_end]` with fixed step `dt`.
pub fn integrate(params: &HarvesterParams, ic: State, t_end: f64, dt: f64) -> Result<Trajectory> {
    params.validate()?;
    if !ic.is_finite() {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let steps = grid_steps(t_end, dt)?;
    let mut t = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut power = Vec::with_capacity(steps + 1);
    t.push(0.0);
    states.push(ic);
    power.push(instantaneous_power(params.lambda, ic.v));

    let mut stepper = Stepper::new(params, ic, dt);
    for i in 1..=steps {
        let s = stepper.advance()?;
        t.push(i as f64 * dt);
        states.push(s);
        power.push(instantaneous_power(params.lambda, s.v));
    }
    Ok(Trajectory { t, states, power, dt, lambda: params.lambda })
}

/// Trapezoidal mean over uniformly spaced samples, accumulated in push order.
#[derive(Debug, Default, Clone)]
struct TrapezoidMean {
    first: Option<f64>,
    last: Option<f64>,
    interior: f64,
    count: usize,
}

impl TrapezoidMean {
    #[inline]
    fn push(&mut self, value: f64) {
        match (self.first, self.last) {
            (None, _) => self.first = Some(value),
            (Some(_), None) => self.last = Some(value),
            (Some(_), Some(prev)) => {
                self.interior += prev;
                self.last = Some(value);
            }
        }
        self.count += 1;
    }

    fn finish(&self) -> Result<f64> {
        match (self.first, self.last) {
            (Some(a), Some(b)) => Ok((0.5 * (a + b) + self.interior) / (self.count - 1) as f64),
            _ => Err(Error::EmptyWindow { points: self.count }),
        }
    }
}

/// Time average of the power over the final `1 - transient_fraction` of the grid.
pub fn mean_power(traj: &Trajectory, transient_fraction: f64) -> Result<f64> {
    check_fraction(transient_fraction)?;
    let i0 = traj.window_start(transient_fraction);
    let mut acc = TrapezoidMean::default();
    for &p in traj.power.get(i0..).unwrap_or(&[]) {
        acc.push(p);
    }
    acc.finish()
}

fn check_fraction(transient_fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::InvalidParams(format!(
            "transient_fraction must lie in [0, 1), got {transient_fraction}"
        )));
    }
    Ok(())
}

/// Steady-state mean power without storing the trajectory.
///
/// Bit-identical to `mean_power(&integrate(..)?, transient_fraction)`.
pub fn steady_mean_power(params: &HarvesterParams, settings: &IntegratorSettings) -> Result<f64> {
    params.validate()?;
    check_fraction(settings.transient_fraction)?;
    if !settings.ic.is_finite() {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let steps = settings.steps()?;
    let i0 = window_start(steps + 1, settings.transient_fraction);
    let mut acc = TrapezoidMean::default();
    if i0 == 0 {
        acc.push(instantaneous_power(params.lambda, settings.ic.v));
    }
    let mut stepper = Stepper::new(params, settings.ic, settings.dt);
    for i in 1..=steps {
        let s = stepper.advance()?;
        if i >= i0 {
            acc.push(instantaneous_power(params.lambda, s.v));
        }
    }
    acc.finish()
}

const LANES: usize = 8;

/// `LANES` independent RK4 integrations advanced in lockstep (struct-of-arrays).
///
/// Each lane performs exactly the floating-point operations of [`Stepper`],
/// so results are bit-identical to the scalar path.
struct LaneStepper {
    xi2: [f64; LANES],
    chi: [f64; LANES],
    lambda: [f64; LANES],
    kappa: [f64; LANES],
    f: [f64; LANES],
    beta: [f64; LANES],
    delta2: [f64; LANES],
    load: [f64; LANES],
    omega_half: [f64; LANES],
    rot_c: [f64; LANES],
    rot_s: [f64; LANES],
    c: [f64; LANES],
    s: [f64; LANES],
    x: [f64; LANES],
    xdot: [f64; LANES],
    v: [f64; LANES],
    k: usize,
    dt: f64,
}

type Lanes = [f64; LANES];

#[inline(always)]
fn lanes_field(
    st: &LaneStepper,
    x: &Lanes,
    xdot: &Lanes,
    v: &Lanes,
    drive: &Lanes,
) -> (Lanes, Lanes, Lanes) {
    let mut ax = [0.0; LANES];
    let mut av = [0.0; LANES];
    for l in 0..LANES {
        let coupling = 1.0 + st.beta[l] * x[l].abs();
        ax[l] = -st.xi2[l] * xdot[l]
            + 0.5 * x[l] * (1.0 + st.delta2[l] * x[l] - x[l] * x[l])
            + coupling * st.chi[l] * v[l]
            + drive[l];
        av[l] = -st.lambda[l] * v[l] - coupling * st.kappa[l] * xdot[l];
    }
    (*xdot, ax, av)
}

impl LaneStepper {
    fn new(params: &[HarvesterParams; LANES], ic: State, dt: f64) -> Self {
        let pick = |g: &dyn Fn(&HarvesterParams) -> f64| -> Lanes {
            let mut out = [0.0; LANES];
            for (o, p) in out.iter_mut().zip(params) {
                *o = g(p);
            }
            out
        };
        let half_dt = 0.5 * dt;
        LaneStepper {
            xi2: pick(&|p| 2.0 * p.xi),
            chi: pick(&|p| p.chi),
            lambda: pick(&|p| p.lambda),
            kappa: pick(&|p| p.kappa),
            f: pick(&|p| p.f),
            beta: pick(&|p| p.beta),
            delta2: pick(&|p| 2.0 * p.delta),
            load: pick(&|p| p.static_load()),
            omega_half: pick(&|p| p.omega * half_dt),
            rot_c: pick(&|p| (p.omega * half_dt).cos()),
            rot_s: pick(&|p| (p.omega * half_dt).sin()),
            c: [1.0; LANES],
            s: [0.0; LANES],
            x: [ic.x; LANES],
            xdot: [ic.xdot; LANES],
            v: [ic.v; LANES],
            k: 0,
            dt,
        }
    }

    #[inline(always)]
    fn harmonic_advance(&mut self) -> Lanes {
        self.k += 1;
        if self.k % Harmonic::RESYNC == 0 {
            for l in 0..LANES {
                let (s, c) = (self.omega_half[l] * self.k as f64).sin_cos();
                self.c[l] = c;
                self.s[l] = s;
            }
        } else {
            for l in 0..LANES {
                let c = self.c[l] * self.rot_c[l] - self.s[l] * self.rot_s[l];
                let s = self.s[l] * self.rot_c[l] + self.c[l] * self.rot_s[l];
                self.c[l] = c;
                self.s[l] = s;
            }
        }
        let mut d = [0.0; LANES];
        for l in 0..LANES {
            d[l] = self.f[l] * self.c[l] + self.load[l];
        }
        d
    }

    #[inline(always)]
    fn advance(&mut self) {
        let h = self.dt;
        let hh = 0.5 * h;
        let w = h / 6.0;
        let mut d0 = [0.0; LANES];
        for l in 0..LANES {
            d0[l] = self.f[l] * self.c[l] + self.load[l];
        }
        let d_half = self.harmonic_advance();
        let d1 = self.harmonic_advance();

        let (x, xd, v) = (self.x, self.xdot, self.v);
        let (k1x, k1d, k1v) = lanes_field(self, &x, &xd, &v, &d0);
        let mut tx = [0.0; LANES];
        let mut td = [0.0; LANES];
        let mut tv = [0.0; LANES];
        for l in 0..LANES {
            tx[l] = x[l] + hh * k1x[l];
            td[l] = xd[l] + hh * k1d[l];
            tv[l] = v[l] + hh * k1v[l];
        }
        let (k2x, k2d, k2v) = lanes_field(self, &tx, &td, &tv, &d_half);
        for l in 0..LANES {
            tx[l] = x[l] + hh * k2x[l];
            td[l] = xd[l] + hh * k2d[l];
            tv[l] = v[l] + hh * k2v[l];
        }
        let (k3x, k3d, k3v) = lanes_field(self, &tx, &td, &tv, &d_half);
        for l in 0..LANES {
            tx[l] = x[l] + h * k3x[l];
            td[l] = xd[l] + h * k3d[l];
            tv[l] = v[l] + h * k3v[l];
        }
        let (k4x, k4d, k4v) = lanes_field(self, &tx, &td, &tv, &d1);
        for l in 0..LANES {
            self.x[l] = x[l] + w * (k1x[l] + 2.0 * (k2x[l] + k3x[l]) + k4x[l]);
            self.xdot[l] = xd[l] + w * (k1d[l] + 2.0 * (k2d[l] + k3d[l]) + k4d[l]);
            self.v[l] = v[l] + w * (k1v[l] + 2.0 * (k2v[l] + k3v[l]) + k4v[l]);
        }
    }

    fn all_finite(&self) -> bool {
        (0..LANES).all(|l| self.x[l].is_finite() && self.xdot[l].is_finite() && self.v[l].is_finite())
    }
}

/// Steady-state mean power for many parameter points sharing one set of
/// integrator settings. Results are identical to calling
/// [`steady_mean_power`] on each point.
pub fn steady_mean_power_batch(
    params: &[HarvesterParams],
    settings: &IntegratorSettings,
) -> Vec<Result<f64>> {
    let mut out = Vec::with_capacity(params.len());
    for chunk in params.chunks(LANES) {
        if chunk.len() <= 2 {
            out.extend(chunk.iter().map(|p| steady_mean_power(p, settings)));
            continue;
        }
        // Short tail chunks are padded with copies of their last point.
        let mut lanes = [chunk[chunk.len() - 1]; LANES];
        lanes[..chunk.len()].copy_from_slice(chunk);
        out.extend(mean_power_lanes(&lanes, settings).into_iter().take(chunk.len()));
    }
    out
}

fn mean_power_lanes(params: &[HarvesterParams; LANES], settings: &IntegratorSettings) -> Vec<Result<f64>> {
    let fallback = || params.iter().map(|p| steady_mean_power(p, settings)).collect();
    if params.iter().any(|p| p.validate().is_err())
        || check_fraction(settings.transient_fraction).is_err()
        || !settings.ic.is_finite()
    {
        return fallback();
    }
    let Ok(steps) = settings.steps() else {
        return fallback();
    };
    let i0 = window_start(steps + 1, settings.transient_fraction);
    let mut accs: Vec<TrapezoidMean> = vec![TrapezoidMean::default(); LANES];
    if i0 == 0 {
        for (acc, p) in accs.iter_mut().zip(params) {
            acc.push(instantaneous_power(p.lambda, settings.ic.v));
        }
    }
    let mut st = LaneStepper::new(params, settings.ic, settings.dt);
    for i in 1..=steps {
        st.advance();
        if i >= i0 {
            for l in 0..LANES {
                accs[l].push(instantaneous_power(st.lambda[l], st.v[l]));
            }
        }
        // Non-finite values persist once produced, so a sparse check suffices;
        // the scalar path then reports the exact failure time.
        if i % 1024 == 0 && !st.all_finite() {
            return fallback();
        }
    }
    if !st.all_finite() {
        return fallback();
    }
    accs.iter().map(TrapezoidMean::finish).collect()
}

/// Static equilibrium of the mechanical oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: f64,
    pub stable: bool,
}

/// Static restoring force `x (1 + 2 delta x - x^2) / 2 + p sin(phi)` and its slope.
fn restoring(params: &HarvesterParams, x: f64) -> (f64, f64) {
    let g = 0.5 * x * (1.0 + 2.0 * params.delta * x - x * x) + params.static_load();
    let dg = 0.5 + 2.0 * params.delta * x - 1.5 * x * x;
    (g, dg)
}

/// Real roots of the static restoring force with `v = 0`, ascending.
///
/// Stability follows the sign of the force slope: negative slope is a well bottom.
pub fn equilibria(params: &HarvesterParams) -> Vec<Equilibrium> {
    // x^3 + a x^2 + b x + c = 0
    let a = -2.0 * params.delta;
    let b = -1.0;
    let c = -2.0 * params.static_load();
    let mut roots = real_cubic_roots(a, b, c);
    for r in roots.iter_mut() {
        // Newton polish on the closed-form estimate.
        for _ in 0..3 {
            let (g, dg) = restoring(params, *r);
            if dg == 0.0 {
                break;
            }
            let next = *r - g / dg;
            if !next.is_finite() {
                break;
            }
            *r = next;
        }
    }
    roots.sort_by(|x, y| x.total_cmp(y));
    roots
        .into_iter()
        .map(|x| Equilibrium { x, stable: restoring(params, x).1 < 0.0 })
        .collect()
}

fn real_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc < 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    } else if disc == 0.0 && p != 0.0 {
        vec![3.0 * q / p - shift, -1.5 * q / p - shift]
    } else {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() - shift]
    }
}
