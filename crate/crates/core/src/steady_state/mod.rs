//! Classical multimode steady state.
//!
//! With all amplitudes scaled by (g²/ω_m)^{1/2}, the steady state of mode n
//! obeys e_n = α_n{1 + i[Δ_n − P]} with P = Σ|α_m|², so every mode sees the
//! same radiation-pressure shift P and the whole problem reduces to a scalar
//! relation between the input power and P.

mod dynamics;

pub use dynamics::{
    integrate_classical, max_time_step, probe_stability, stable_time_step, ClassicalState,
    StabilityProbe, Trajectory,
};

use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Cavity;

/// Uniform scan resolution used to bracket intracavity-power roots.
pub const DEFAULT_SCAN_POINTS: usize = 2000;

/// Relative residual accepted for a root of the input/intracavity relation.
pub const ROOT_TOLERANCE: f64 = 1e-8;

/// Relative tolerance for identities that hold by construction.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// |P/P_in · dP_in/dP| below this counts as a turning point, where the slope
/// sign is not trusted and the classical integrator decides.
const TURNING_POINT_SLOPE: f64 = 1e-7;

/// Default upper end of the intracavity-power scan, 4Δ + 4.
pub fn default_power_ceiling(cavity: &Cavity) -> f64 {
    4.0 * cavity.params().detuning0.max(0.0) + 4.0
}

/// Σ_n |shape_n|² / (1 + (Δ_n − P)²), the fraction of the input power that
/// ends up inside the cavity per unit of intracavity power.
fn transmission(cavity: &Cavity, power: f64) -> f64 {
    cavity
        .pump_shape()
        .iter()
        .zip(cavity.grid().detunings())
        .map(|(s, &d)| {
            let detuning = d - power;
            s.norm_sqr() / (1.0 + detuning * detuning)
        })
        .sum()
}

fn input_power_unchecked(cavity: &Cavity, power: f64) -> f64 {
    if power == 0.0 {
        return 0.0;
    }
    power / transmission(cavity, power)
}

/// Input power P_in that sustains intracavity power `power`.
pub fn input_power_at(power: f64, cavity: &Cavity) -> Result<f64> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::domain(
            "intracavity_power",
            format!("must be non-negative, got {power}"),
        ));
    }
    if power > 0.0 && transmission(cavity, power) == 0.0 {
        return Err(Error::domain(
            "pump_shape",
            "pump does not overlap any lattice mode",
        ));
    }
    Ok(input_power_unchecked(cavity, power))
}

/// dP_in/dP by central differences.
fn input_power_slope(cavity: &Cavity, power: f64) -> f64 {
    let h = 1e-6 * power.max(1e-3);
    let lo = (power - h).max(0.0);
    let hi = power + h;
    (input_power_unchecked(cavity, hi) - input_power_unchecked(cavity, lo)) / (hi - lo)
}

/// Slope criterion: positive dP_in/dP is stable. Near a turning point the
/// classical integrator is run instead.
///
/// This is the static criterion. It is exact when the mirror follows the
/// field adiabatically (slow, damped mirror). An underdamped mirror on a
/// branch with P > Δ can still self-oscillate; `probe_stability` detects
/// that case.
pub fn is_stable_power(cavity: &Cavity, power: f64) -> Result<bool> {
    if power == 0.0 {
        return Ok(true);
    }
    let input = input_power_at(power, cavity)?;
    let slope = input_power_slope(cavity, power);
    if (slope * power / input).abs() > TURNING_POINT_SLOPE {
        return Ok(slope > 0.0);
    }
    log::debug!("P = {power} sits on a turning point; deciding stability dynamically");
    let steady = working_point(power, cavity, Branch::Unstable)?;
    let driven = cavity.with_params(crate::model::ModelParams {
        pump_amplitude: input.sqrt(),
        ..*cavity.params()
    })?;
    let dt = stable_time_step(&driven, power);
    let probe = probe_stability(&driven, &steady, 1e-4, 400.0, dt)?;
    Ok(!probe.departed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub power: f64,
    pub input_power: f64,
    pub stable: bool,
}

/// Parametric sample of P_in(P) with slope-based stability flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BistabilityCurve {
    pub samples: Vec<CurveSample>,
}

impl BistabilityCurve {
    /// Maximal runs of consecutive unstable samples.
    pub fn unstable_segments(&self) -> Vec<Range<usize>> {
        let mut segments = Vec::new();
        let mut start = None;
        for (i, s) in self.samples.iter().enumerate() {
            match (s.stable, start) {
                (false, None) => start = Some(i),
                (true, Some(b)) => {
                    segments.push(b..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(b) = start {
            segments.push(b..self.samples.len());
        }
        segments
    }

    /// True when P_in increases monotonically along the samples, i.e. each
    /// input power has a single intracavity power.
    pub fn is_single_valued(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].input_power > w[0].input_power)
    }
}

/// Samples P ∈ (0, p_max] on `steps` equally spaced points.
pub fn trace_bistability(cavity: &Cavity, p_max: f64, steps: usize) -> Result<BistabilityCurve> {
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::domain(
            "p_max",
            format!("must be positive, got {p_max}"),
        ));
    }
    if steps < 2 {
        return Err(Error::domain(
            "steps",
            format!("need at least 2, got {steps}"),
        ));
    }
    let powers: Vec<f64> = (1..=steps)
        .map(|i| p_max * i as f64 / steps as f64)
        .collect();
    let inputs = powers
        .iter()
        .map(|&p| input_power_at(p, cavity))
        .collect::<Result<Vec<_>>>()?;
    let samples = (0..steps)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == steps - 1 => (i - 1, i),
                i => (i - 1, i + 1),
            };
            let slope = (inputs[b] - inputs[a]) / (powers[b] - powers[a]);
            CurveSample {
                power: powers[i],
                input_power: inputs[i],
                stable: slope > 0.0,
            }
        })
        .collect();
    Ok(BistabilityCurve { samples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRoot {
    pub power: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub scan_points: usize,
    /// Upper end of the scan; extended by doubling until it brackets the
    /// largest root. `None` uses [`default_power_ceiling`].
    pub power_ceiling: Option<f64>,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            scan_points: DEFAULT_SCAN_POINTS,
            power_ceiling: None,
        }
    }
}

/// All intracavity powers compatible with `input_power`, ascending.
pub fn solve_intracavity_power(input_power: f64, cavity: &Cavity) -> Result<Vec<PowerRoot>> {
    solve_intracavity_power_with(input_power, cavity, RootOptions::default())
}

pub fn solve_intracavity_power_with(
    input_power: f64,
    cavity: &Cavity,
    options: RootOptions,
) -> Result<Vec<PowerRoot>> {
    if !(input_power.is_finite() && input_power >= 0.0) {
        return Err(Error::domain(
            "input_power",
            format!("must be non-negative, got {input_power}"),
        ));
    }
    if options.scan_points < 2 {
        return Err(Error::domain("scan_points", "need at least 2"));
    }
    if input_power == 0.0 {
        return Ok(vec![PowerRoot {
            power: 0.0,
            stable: true,
        }]);
    }
    input_power_at(1.0, cavity)?;

    // P_in(P) grows like P³, so doubling always brackets the top root.
    let mut ceiling = options
        .power_ceiling
        .unwrap_or_else(|| default_power_ceiling(cavity));
    let mut doublings = 0;
    while input_power_unchecked(cavity, ceiling) <= input_power {
        ceiling *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::domain(
                "input_power",
                "no bracketing intracavity power found",
            ));
        }
    }

    let residual = |p: f64| input_power_unchecked(cavity, p) - input_power;
    let n = options.scan_points;
    let mut roots: Vec<f64> = Vec::new();
    let mut lo = 0.0;
    let mut f_lo = -input_power;
    for i in 1..=n {
        let hi = ceiling * i as f64 / n as f64;
        let f_hi = residual(hi);
        if f_hi == 0.0 {
            roots.push(hi);
        } else if f_lo != 0.0 && (f_lo < 0.0) != (f_hi < 0.0) {
            roots.push(bisect(&residual, lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));

    let scale = input_power.max(1.0);
    roots
        .into_iter()
        .map(|p| {
            let r = residual(p).abs();
            if r >= ROOT_TOLERANCE * scale {
                return Err(Error::Consistency(format!(
                    "root P = {p} leaves residual {r:.3e} at P_in = {input_power}"
                )));
            }
            Ok(PowerRoot {
                power: p,
                stable: is_stable_power(cavity, p)?,
            })
        })
        .collect()
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    let mut f_hi = f(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Lower,
    Upper,
    Unstable,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Unstable => "unstable",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Branch::Lower),
            "upper" => Ok(Branch::Upper),
            "unstable" => Ok(Branch::Unstable),
            other => Err(Error::domain(
                "branch",
                format!("expected lower, upper or unstable, got `{other}`"),
            )),
        }
    }
}

/// Classical working point.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// P = Σ|α_n|²
    pub intracavity_power: f64,
    pub input_power: f64,
    /// e_n, the input field per mode.
    pub pump: Vec<Complex64>,
    /// α_n
    pub amplitudes: Vec<Complex64>,
    /// α_n^out = 2α_n − e_n
    pub output_amplitudes: Vec<Complex64>,
    /// x = P/g
    pub mirror_displacement: f64,
    pub branch: Branch,
}

impl SteadyState {
    /// A cavity whose modes are empty while the pump is reflected at the
    /// input mirror: α_n = 0, α_n^out = −e_n. Its fluctuations do not couple to
    /// the mirror, which makes it the coherent-state reference.
    pub fn uncoupled(cavity: &Cavity, input_power: f64) -> Self {
        let pump = cavity.pump_at(input_power);
        Self {
            intracavity_power: 0.0,
            input_power,
            amplitudes: vec![Complex64::new(0.0, 0.0); pump.len()],
            output_amplitudes: pump.iter().map(|e| -e).collect(),
            pump,
            mirror_displacement: 0.0,
            branch: Branch::Lower,
        }
    }

    /// Checks the steady-state equations, the power sum and the input/output
    /// relation against `cavity`.
    pub fn check(&self, cavity: &Cavity) -> Result<()> {
        let n = cavity.grid().len();
        if self.amplitudes.len() != n || self.output_amplitudes.len() != n || self.pump.len() != n {
            return Err(Error::Consistency(format!(
                "steady state has {} amplitudes for {n} modes",
                self.amplitudes.len()
            )));
        }
        let p = self.intracavity_power;
        let sum: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (sum - p).abs() > IDENTITY_TOLERANCE * p.max(1.0) {
            return Err(Error::Consistency(format!(
                "Σ|α_n|² = {sum} differs from P = {p}"
            )));
        }
        let pump_scale = self
            .pump
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        for (i, ((e, a), &d)) in self
            .pump
            .iter()
            .zip(&self.amplitudes)
            .zip(cavity.grid().detunings())
            .enumerate()
        {
            let r = (e - a * Complex64::new(1.0, d - p)).norm();
            if r > ROOT_TOLERANCE * pump_scale {
                return Err(Error::Consistency(format!(
                    "mode {:?} violates its steady-state equation by {r:.3e}",
                    cavity.grid().modes()[i]
                )));
            }
        }
        for ((e, a), out) in self
            .pump
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.output_amplitudes)
        {
            if (2.0 * a - e - out).norm() > IDENTITY_TOLERANCE * pump_scale {
                return Err(Error::Consistency("output field is not 2α − e".into()));
            }
        }
        Ok(())
    }
}

/// Steady state at intracavity power `power`; the pump amplitude is the one
/// that sustains it.
pub fn steady_state_at(power: f64, cavity: &Cavity) -> Result<SteadyState> {
    let input_power = input_power_at(power, cavity)?;
    let branch = classify_branch(cavity, power, input_power)?;
    working_point(power, cavity, branch)
}

fn working_point(power: f64, cavity: &Cavity, branch: Branch) -> Result<SteadyState> {
    let input_power = input_power_at(power, cavity)?;
    let pump = cavity.pump_at(input_power);
    let amplitudes: Vec<Complex64> = pump
        .iter()
        .zip(cavity.grid().detunings())
        .map(|(e, &d)| e / Complex64::new(1.0, d - power))
        .collect();
    let output_amplitudes = amplitudes
        .iter()
        .zip(&pump)
        .map(|(a, e)| 2.0 * a - e)
        .collect();
    let steady = SteadyState {
        intracavity_power: power,
        input_power,
        pump,
        amplitudes,
        output_amplitudes,
        mirror_displacement: power / cavity.params().coupling,
        branch,
    };
    steady.check(cavity)?;
    Ok(steady)
}

fn classify_branch(cavity: &Cavity, power: f64, input_power: f64) -> Result<Branch> {
    if input_power == 0.0 {
        return Ok(Branch::Lower);
    }
    if !is_stable_power(cavity, power)? {
        return Ok(Branch::Unstable);
    }
    let roots = solve_intracavity_power(input_power, cavity)?;
    let tol = 1e-6 * power.max(1.0);
    let below = roots
        .iter()
        .filter(|r| r.stable && r.power < power - tol)
        .count();
    Ok(if below == 0 {
        Branch::Lower
    } else {
        Branch::Upper
    })
}

/// Working point on a chosen branch for a given input power.
pub fn steady_state_on_branch(
    input_power: f64,
    branch: Branch,
    cavity: &Cavity,
) -> Result<SteadyState> {
    let roots = solve_intracavity_power(input_power, cavity)?;
    let stable: Vec<&PowerRoot> = roots.iter().filter(|r| r.stable).collect();
    let pick = match branch {
        Branch::Lower => stable.first().copied(),
        Branch::Upper => stable.last().copied().filter(|_| stable.len() > 1),
        Branch::Unstable => roots.iter().find(|r| !r.stable),
    };
    let root = pick.ok_or_else(|| {
        Error::domain(
            "branch",
            format!(
                "no {} branch at P_in = {input_power} (roots: {:?})",
                branch.as_str(),
                roots.iter().map(|r| r.power).collect::<Vec<_>>()
            ),
        )
    })?;
    steady_state_at(root.power, cavity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub r: f64,
    pub input: Complex64,
    pub intracavity: Complex64,
    pub output: Complex64,
}

/// Transverse field profiles along the x axis, reconstructed from the
/// plane-wave expansion (1/ℓ)Σ_n c_n exp(i k_n·x).
pub fn radial_profile(steady: &SteadyState, cavity: &Cavity, radii: &[f64]) -> Vec<ProfileSample> {
    let grid = cavity.grid();
    let inv_side = 1.0 / grid.box_side();
    radii
        .iter()
        .map(|&r| {
            let mut input = Complex64::new(0.0, 0.0);
            let mut intracavity = Complex64::new(0.0, 0.0);
            for (i, [kx, _]) in grid.wavevectors().iter().enumerate() {
                let phase = Complex64::from_polar(1.0, kx * r);
                input += steady.pump[i] * phase;
                intracavity += steady.amplitudes[i] * phase;
            }
            input *= inv_side;
            intracavity *= inv_side;
            ProfileSample {
                r,
                input,
                intracavity,
                output: 2.0 * intracavity - input,
            }
        })
        .collect()
}
