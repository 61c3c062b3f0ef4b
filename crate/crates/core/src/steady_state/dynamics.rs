//! Noise-free time-domain integration of the coupled field/mirror equations,
//! used as an independent check of fixed points and their stability.
//!
//! Amplitudes are in the same scaled units as [`SteadyState`], so the mirror
//! equation reads X'' = −ω_m²X + (ω_m²/g)Σ|α_m|² − γ_m X' and its fixed
//! point is X = P/g.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::SteadyState;
use crate::error::{Error, Result};
use crate::model::Cavity;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    pub amplitudes: Vec<Complex64>,
    /// X
    pub displacement: f64,
    /// dX/dt
    pub velocity: f64,
}

impl ClassicalState {
    pub fn from_steady(steady: &SteadyState) -> Self {
        Self {
            amplitudes: steady.amplitudes.clone(),
            displacement: steady.mirror_displacement,
            velocity: 0.0,
        }
    }

    pub fn power(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.amplitudes.len() + 2);
        for a in &self.amplitudes {
            y.push(a.re);
            y.push(a.im);
        }
        y.push(self.displacement);
        y.push(self.velocity);
        y
    }

    fn unpack(y: &[f64]) -> Self {
        let modes = (y.len() - 2) / 2;
        Self {
            amplitudes: (0..modes)
                .map(|i| Complex64::new(y[2 * i], y[2 * i + 1]))
                .collect(),
            displacement: y[2 * modes],
            velocity: y[2 * modes + 1],
        }
    }
}

/// Intracavity power and mirror displacement at every step, plus the final
/// full state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub power: Vec<f64>,
    pub displacement: Vec<f64>,
    pub final_state: ClassicalState,
}

struct Rhs<'a> {
    detunings: &'a [f64],
    pump: Vec<Complex64>,
    coupling: f64,
    mirror_freq: f64,
    mirror_damping: f64,
}

impl Rhs<'_> {
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let modes = self.pump.len();
        let x = y[2 * modes];
        let v = y[2 * modes + 1];
        let shift = self.coupling * x;
        let mut power = 0.0;
        for (i, (&d, e)) in self.detunings.iter().zip(&self.pump).enumerate() {
            let (re, im) = (y[2 * i], y[2 * i + 1]);
            power += re * re + im * im;
            // (−1 − i(Δ_n − gX))α + e
            let rot = d - shift;
            dy[2 * i] = -re + rot * im + e.re;
            dy[2 * i + 1] = -im - rot * re + e.im;
        }
        let w2 = self.mirror_freq * self.mirror_freq;
        dy[2 * modes] = v;
        dy[2 * modes + 1] = -w2 * x + w2 / self.coupling * power - self.mirror_damping * v;
    }
}

fn rk4_step(rhs: &Rhs, y: &mut [f64], dt: f64, k: &mut [Vec<f64>; 4], tmp: &mut [f64]) {
    let [k1, k2, k3, k4] = k;
    rhs.eval(y, k1);
    for (t, (yi, ki)) in tmp.iter_mut().zip(y.iter().zip(k1.iter())) {
        *t = yi + 0.5 * dt * ki;
    }
    rhs.eval(tmp, k2);
    for (t, (yi, ki)) in tmp.iter_mut().zip(y.iter().zip(k2.iter())) {
        *t = yi + 0.5 * dt * ki;
    }
    rhs.eval(tmp, k3);
    for (t, (yi, ki)) in tmp.iter_mut().zip(y.iter().zip(k3.iter())) {
        *t = yi + dt * ki;
    }
    rhs.eval(tmp, k4);
    for i in 0..y.len() {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Largest admissible step: must resolve both the cavity lifetime and the
/// mirror period.
pub fn max_time_step(cavity: &Cavity) -> f64 {
    1.0f64.min(2.0 * PI / (10.0 * cavity.params().mirror_freq))
}

/// A step comfortably inside both the resolution bound and the RK4 stability
/// region of the fastest-rotating mode near intracavity power `power`.
pub fn stable_time_step(cavity: &Cavity, power: f64) -> f64 {
    let fastest = cavity
        .grid()
        .detunings()
        .iter()
        .map(|d| (d - power).abs())
        .fold(1.0, f64::max);
    0.5 * max_time_step(cavity).min(1.0 / fastest)
}

/// Fixed-step RK4 integration of the classical equations from `initial` up
/// to `t_end`, driven by the cavity's configured pump.
pub fn integrate_classical(
    cavity: &Cavity,
    initial: &ClassicalState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let modes = cavity.grid().len();
    if initial.amplitudes.len() != modes {
        return Err(Error::domain(
            "initial",
            format!("{} amplitudes for {modes} modes", initial.amplitudes.len()),
        ));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::domain(
            "t_end",
            format!("must be positive, got {t_end}"),
        ));
    }
    let dt_max = max_time_step(cavity);
    if !(dt > 0.0 && dt < dt_max) {
        return Err(Error::domain(
            "dt",
            format!("must lie in (0, {dt_max}) to resolve cavity and mirror, got {dt}"),
        ));
    }

    let params = cavity.params();
    let rhs = Rhs {
        detunings: cavity.grid().detunings(),
        pump: cavity.pump_components(),
        coupling: params.coupling,
        mirror_freq: params.mirror_freq,
        mirror_damping: params.mirror_damping,
    };
    let pump_scale = rhs.pump.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let amplitude_limit = 1e6 * pump_scale;
    let shift_limit = 1e6 * pump_scale * pump_scale;

    let steps = (t_end / dt).ceil() as usize;
    let mut y = initial.pack();
    let mut k = [
        vec![0.0; y.len()],
        vec![0.0; y.len()],
        vec![0.0; y.len()],
        vec![0.0; y.len()],
    ];
    let mut tmp = vec![0.0; y.len()];

    let mut times = Vec::with_capacity(steps + 1);
    let mut power = Vec::with_capacity(steps + 1);
    let mut displacement = Vec::with_capacity(steps + 1);
    times.push(0.0);
    power.push(initial.power());
    displacement.push(initial.displacement);

    for step in 1..=steps {
        rk4_step(&rhs, &mut y, dt, &mut k, &mut tmp);
        let t = step as f64 * dt;
        let mut p = 0.0;
        let mut largest: f64 = 0.0;
        for i in 0..modes {
            let m2 = y[2 * i] * y[2 * i] + y[2 * i + 1] * y[2 * i + 1];
            p += m2;
            largest = largest.max(m2);
        }
        let x = y[2 * modes];
        let finite = y.iter().all(|v| v.is_finite());
        if !finite || largest.sqrt() > amplitude_limit || (params.coupling * x).abs() > shift_limit
        {
            return Err(Error::Diverged { step, time: t });
        }
        times.push(t);
        power.push(p);
        displacement.push(x);
    }

    Ok(Trajectory {
        times,
        power,
        displacement,
        final_state: ClassicalState::unpack(&y),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityProbe {
    /// The intracavity power left a 10⁻² neighbourhood of the fixed point.
    pub departed: bool,
    pub max_excursion: f64,
    pub final_power: f64,
}

/// Starts from `steady` with every amplitude scaled by (1 + perturbation)
/// and reports whether the trajectory stays near the fixed point. `cavity`
/// must be driven at the steady state's input power.
pub fn probe_stability(
    cavity: &Cavity,
    steady: &SteadyState,
    perturbation: f64,
    t_end: f64,
    dt: f64,
) -> Result<StabilityProbe> {
    let pump_power = cavity.params().input_power();
    if (pump_power - steady.input_power).abs() > 1e-9 * steady.input_power.max(1.0) {
        return Err(Error::Consistency(format!(
            "cavity pumped at P_in = {pump_power}, steady state needs {}",
            steady.input_power
        )));
    }
    let mut initial = ClassicalState::from_steady(steady);
    for a in &mut initial.amplitudes {
        *a *= 1.0 + perturbation;
    }
    let trajectory = integrate_classical(cavity, &initial, t_end, dt)?;
    let p0 = steady.intracavity_power;
    let max_excursion = trajectory
        .power
        .iter()
        .map(|p| (p - p0).abs())
        .fold(0.0, f64::max);
    Ok(StabilityProbe {
        departed: max_excursion > 1e-2,
        max_excursion,
        final_power: *trajectory.power.last().expect("at least one sample"),
    })
}
