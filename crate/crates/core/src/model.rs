//! Parameters, unit conventions and the transverse-mode lattice.
//!
//! Everything downstream works in scaled units: times in cavity lifetimes
//! (1/γ_c), frequencies and rates in units of γ_c, transverse lengths in units
//! of the diffraction length ℓ_D, and field amplitudes multiplied by
//! (g²/ω_m)^{1/2} so that the intracavity power P directly equals the
//! radiation-pressure frequency shift of every mode.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default periodic box side, in units of ℓ_D. With `half_extent = 9` the
/// lattice reaches |k| = 2.25, where a waist-2 Gaussian pump carries a
/// relative weight of about 4e-5.
pub const DEFAULT_BOX_SIDE: f64 = 8.0 * PI;

/// Default lattice half extent: (2·9+1)² = 361 modes.
pub const DEFAULT_HALF_EXTENT: usize = 9;

/// Unscaled mirror and cavity constants, used only to compute the
/// radiation-pressure coupling constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// kg
    pub mirror_mass: f64,
    /// rad/s
    pub mirror_freq: f64,
    /// m
    pub cavity_length: f64,
    /// rad/s
    pub optical_freq: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mirror_mass", self.mirror_mass),
            ("mirror_freq", self.mirror_freq),
            ("cavity_length", self.cavity_length),
            ("optical_freq", self.optical_freq),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(
                    name,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// The model treats the mirror as slow compared to the optical carrier.
    /// Ratios below 10³ are accepted but flagged.
    pub fn is_adiabatic(&self) -> bool {
        self.optical_freq / self.mirror_freq >= 1e3
    }
}

/// Radiation-pressure coupling g = (ω_0/L)·√(ħ/(m ω_m)), in rad/s.
pub fn coupling_from_physical(p: &PhysicalParams, hbar: f64) -> Result<f64> {
    p.validate()?;
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::domain(
            "hbar",
            format!("must be positive, got {hbar}"),
        ));
    }
    if !p.is_adiabatic() {
        log::warn!(
            "optical_freq/mirror_freq = {:.3e} < 1e3; the slow-mirror approximation is questionable",
            p.optical_freq / p.mirror_freq
        );
    }
    Ok(p.optical_freq / p.cavity_length * (hbar / (p.mirror_mass * p.mirror_freq)).sqrt())
}

/// Scaled model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Δ, detuning of the fundamental transverse mode.
    pub detuning0: f64,
    /// ω_m/γ_c
    pub mirror_freq: f64,
    /// γ_m/γ_c
    pub mirror_damping: f64,
    /// g/γ_c. Only enters the static mirror displacement x = P/g.
    pub coupling: f64,
    /// N_T = k_B T/ħω_m. The Brownian noise model is meaningful for N_T ≫ 1;
    /// smaller values are accepted without any claim of validity.
    pub thermal_occupation: f64,
    /// 𝓔, real pump amplitude; P_in = 𝓔².
    pub pump_amplitude: f64,
    /// w_p in units of ℓ_D.
    pub pump_waist: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let mirror_freq = 10.0;
        Self {
            detuning0: 2.0,
            mirror_freq,
            mirror_damping: mirror_freq / 1e6,
            coupling: 1.0,
            thermal_occupation: 1e4,
            pump_amplitude: 2.89f64.sqrt(),
            pump_waist: 2.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("detuning0", self.detuning0),
            ("mirror_freq", self.mirror_freq),
            ("mirror_damping", self.mirror_damping),
            ("coupling", self.coupling),
            ("thermal_occupation", self.thermal_occupation),
            ("pump_amplitude", self.pump_amplitude),
            ("pump_waist", self.pump_waist),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(Error::domain(name, format!("must be finite, got {value}")));
            }
        }
        for (name, value) in [
            ("mirror_freq", self.mirror_freq),
            ("mirror_damping", self.mirror_damping),
            ("coupling", self.coupling),
            ("pump_waist", self.pump_waist),
        ] {
            if value <= 0.0 {
                return Err(Error::domain(
                    name,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        if self.thermal_occupation < 0.0 {
            return Err(Error::domain(
                "thermal_occupation",
                format!("must be non-negative, got {}", self.thermal_occupation),
            ));
        }
        let q = self.quality_factor();
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::domain(
                "mirror_damping",
                format!("quality factor mirror_freq/mirror_damping must exceed 1, got {q}"),
            ));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.mirror_freq / self.mirror_damping
    }

    pub fn input_power(&self) -> f64 {
        self.pump_amplitude * self.pump_amplitude
    }
}

/// Transverse mode label (n_x, n_y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub nx: i32,
    pub ny: i32,
}

impl ModeIndex {
    pub const FUNDAMENTAL: ModeIndex = ModeIndex { nx: 0, ny: 0 };

    pub const fn new(nx: i32, ny: i32) -> Self {
        Self { nx, ny }
    }

    /// Even, 0-based flat label 2(2n̄+1)(n_y+n̄) + 2(n_x+n̄). The δa and δa†
    /// components of this mode sit at 1-based positions flat+1 and flat+2 of
    /// the fluctuation vector.
    pub fn flat(self, half_extent: usize) -> Option<usize> {
        self.position(half_extent).map(|p| 2 * p)
    }

    pub fn from_flat(flat: usize, half_extent: usize) -> Option<Self> {
        if flat % 2 != 0 {
            return None;
        }
        Self::from_position(flat / 2, half_extent)
    }

    /// Index of the mode in lattice order (n_y slowest, n_x fastest).
    pub fn position(self, half_extent: usize) -> Option<usize> {
        let h = half_extent as i64;
        let (x, y) = (self.nx as i64, self.ny as i64);
        if x.abs() > h || y.abs() > h {
            return None;
        }
        let side = 2 * h + 1;
        Some(((y + h) * side + (x + h)) as usize)
    }

    pub fn from_position(position: usize, half_extent: usize) -> Option<Self> {
        let side = 2 * half_extent + 1;
        if position >= side * side {
            return None;
        }
        let h = half_extent as i32;
        Some(Self {
            nx: (position % side) as i32 - h,
            ny: (position / side) as i32 - h,
        })
    }

    pub fn reflected(self) -> Self {
        Self::new(-self.nx, -self.ny)
    }

    pub fn transposed(self) -> Self {
        Self::new(self.ny, self.nx)
    }

    /// n_x² + n_y²
    pub fn norm_sqr(self) -> i64 {
        let (x, y) = (self.nx as i64, self.ny as i64);
        x * x + y * y
    }
}

/// Truncated square lattice of plane-wave modes on a periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    half_extent: usize,
    box_side: f64,
    modes: Vec<ModeIndex>,
    wavevectors: Vec<[f64; 2]>,
    detunings: Vec<f64>,
}

impl ModeGrid {
    pub fn build(params: &ModelParams, half_extent: usize, box_side: f64) -> Result<Self> {
        if !(box_side.is_finite() && box_side > 0.0) {
            return Err(Error::domain(
                "box_side",
                format!("must be positive, got {box_side}"),
            ));
        }
        if half_extent > 1000 {
            return Err(Error::domain(
                "half_extent",
                format!("{half_extent} is beyond any supported lattice size"),
            ));
        }
        if box_side < 4.0 * params.pump_waist {
            log::warn!(
                "box_side {box_side} < 4 pump waists ({}); periodic images of the pump overlap",
                4.0 * params.pump_waist
            );
        }
        let side = 2 * half_extent + 1;
        let dk = 2.0 * PI / box_side;
        let mut modes = Vec::with_capacity(side * side);
        let mut wavevectors = Vec::with_capacity(side * side);
        let mut detunings = Vec::with_capacity(side * side);
        for position in 0..side * side {
            let mode = ModeIndex::from_position(position, half_extent).expect("in range");
            let k = [dk * mode.nx as f64, dk * mode.ny as f64];
            modes.push(mode);
            wavevectors.push(k);
            detunings.push(params.detuning0 + dk * dk * mode.norm_sqr() as f64);
        }
        Ok(Self {
            half_extent,
            box_side,
            modes,
            wavevectors,
            detunings,
        })
    }

    pub fn half_extent(&self) -> usize {
        self.half_extent
    }

    pub fn box_side(&self) -> f64 {
        self.box_side
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn wavevectors(&self) -> &[[f64; 2]] {
        &self.wavevectors
    }

    /// Δ_n = Δ + |k_n|².
    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    /// |k_n|², exactly invariant under the lattice symmetries.
    pub fn k_squared(&self, position: usize) -> f64 {
        let dk = 2.0 * PI / self.box_side;
        dk * dk * self.modes[position].norm_sqr() as f64
    }

    pub fn position(&self, mode: ModeIndex) -> Option<usize> {
        mode.position(self.half_extent)
    }

    pub fn fundamental(&self) -> usize {
        self.position(ModeIndex::FUNDAMENTAL)
            .expect("lattice always contains (0,0)")
    }

    pub fn detuning0(&self) -> f64 {
        self.detunings[self.fundamental()]
    }
}

pub fn build_grid(params: &ModelParams, half_extent: usize, box_side: f64) -> Result<ModeGrid> {
    ModeGrid::build(params, half_extent, box_side)
}

/// Per-mode projection of a unit-amplitude Gaussian pump,
/// √(2π)(w_p/ℓ)·exp[−(w_p/2)² k_n²].
pub fn gaussian_pump_shape(waist: f64, grid: &ModeGrid) -> Vec<f64> {
    let norm = (2.0 * PI).sqrt() * waist / grid.box_side();
    (0..grid.len())
        .map(|p| norm * (-(waist * waist / 4.0) * grid.k_squared(p)).exp())
        .collect()
}

/// Gaussian pump components e_n = 𝓔·√(2π)(w_p/ℓ)·exp[−(w_p/2)² k_n²].
pub fn pump_components(params: &ModelParams, grid: &ModeGrid) -> Vec<Complex64> {
    gaussian_pump_shape(params.pump_waist, grid)
        .into_iter()
        .map(|s| Complex64::new(params.pump_amplitude * s, 0.0))
        .collect()
}

/// A parameter set, its mode lattice and the pump's spatial shape.
///
/// The shape is the pump projection per unit amplitude, so the physical
/// components are e_n = √P_in · shape_n and Σ|shape_n|² ≈ 1 for a pump fully
/// resolved by the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Cavity {
    params: ModelParams,
    grid: ModeGrid,
    pump_shape: Vec<Complex64>,
}

impl Cavity {
    /// Gaussian pump on a freshly built lattice.
    pub fn new(params: ModelParams, half_extent: usize, box_side: f64) -> Result<Self> {
        params.validate()?;
        let grid = ModeGrid::build(&params, half_extent, box_side)?;
        let pump_shape = gaussian_pump_shape(params.pump_waist, &grid)
            .into_iter()
            .map(|s| Complex64::new(s, 0.0))
            .collect();
        Ok(Self {
            params,
            grid,
            pump_shape,
        })
    }

    /// Arbitrary per-mode pump shape, e.g. a flat pump exciting only (0,0).
    pub fn with_pump_shape(
        params: ModelParams,
        grid: ModeGrid,
        pump_shape: Vec<Complex64>,
    ) -> Result<Self> {
        params.validate()?;
        if pump_shape.len() != grid.len() {
            return Err(Error::domain(
                "pump_shape",
                format!("has {} entries for {} modes", pump_shape.len(), grid.len()),
            ));
        }
        if pump_shape
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::domain("pump_shape", "entries must be finite"));
        }
        Ok(Self {
            params,
            grid,
            pump_shape,
        })
    }

    /// Flat pump: a uniform field across the box, which projects only onto
    /// the fundamental mode.
    pub fn flat_pump(params: ModelParams, half_extent: usize, box_side: f64) -> Result<Self> {
        let grid = ModeGrid::build(&params, half_extent, box_side)?;
        let mut shape = vec![Complex64::new(0.0, 0.0); grid.len()];
        shape[grid.fundamental()] = Complex64::new(1.0, 0.0);
        Self::with_pump_shape(params, grid, shape)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn pump_shape(&self) -> &[Complex64] {
        &self.pump_shape
    }

    /// e_n at the configured pump amplitude.
    pub fn pump_components(&self) -> Vec<Complex64> {
        self.pump_at(self.params.input_power())
    }

    /// e_n for input power `input_power`.
    pub fn pump_at(&self, input_power: f64) -> Vec<Complex64> {
        let amplitude = input_power.max(0.0).sqrt();
        self.pump_shape.iter().map(|s| s * amplitude).collect()
    }

    /// Fraction of the pump power captured by the lattice, Σ|shape_n|².
    pub fn captured_pump_fraction(&self) -> f64 {
        self.pump_shape.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Copy with a different parameter set on the same lattice and pump
    /// shape. The lattice detunings are rebuilt from the new Δ.
    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let grid = ModeGrid::build(&params, self.grid.half_extent, self.grid.box_side)?;
        let pump_shape = if params.pump_waist == self.params.pump_waist {
            self.pump_shape.clone()
        } else {
            gaussian_pump_shape(params.pump_waist, &grid)
                .into_iter()
                .map(|s| Complex64::new(s, 0.0))
                .collect()
        };
        Ok(Self {
            params,
            grid,
            pump_shape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn coupling_unit_factors() {
        let p = PhysicalParams {
            mirror_mass: 1.0,
            mirror_freq: 1.0,
            cavity_length: 1.0,
            optical_freq: 1.0,
        };
        assert_eq!(coupling_from_physical(&p, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn coupling_scaling() {
        let base = PhysicalParams {
            mirror_mass: 2.0,
            mirror_freq: 3.0,
            cavity_length: 0.5,
            optical_freq: 7e4,
        };
        let g = coupling_from_physical(&base, 0.3).unwrap();
        let longer = PhysicalParams {
            cavity_length: 1.0,
            ..base
        };
        let heavier = PhysicalParams {
            mirror_mass: 8.0,
            ..base
        };
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(coupling_from_physical(&longer, 0.3).unwrap(), g / 2.0) < 1e-15);
        assert!(rel(coupling_from_physical(&heavier, 0.3).unwrap(), g / 2.0) < 1e-15);
    }

    #[test]
    fn coupling_rejects_non_positive() {
        let p = PhysicalParams {
            mirror_mass: 0.0,
            mirror_freq: 1.0,
            cavity_length: 1.0,
            optical_freq: 1.0,
        };
        assert!(matches!(
            coupling_from_physical(&p, 1.0),
            Err(Error::Domain {
                name: "mirror_mass",
                ..
            })
        ));
        let ok = PhysicalParams {
            mirror_mass: 1.0,
            ..p
        };
        assert!(coupling_from_physical(&ok, -1.0).is_err());
    }

    #[test]
    fn adiabatic_flag() {
        let p = PhysicalParams {
            mirror_mass: 1.0,
            mirror_freq: 1.0,
            cavity_length: 1.0,
            optical_freq: 999.0,
        };
        assert!(!p.is_adiabatic());
        assert!(PhysicalParams {
            optical_freq: 1e3,
            ..p
        }
        .is_adiabatic());
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let bad = ModelParams {
            mirror_damping: 20.0,
            ..params()
        };
        assert!(bad.validate().is_err());
        let bad = ModelParams {
            thermal_occupation: -1.0,
            ..params()
        };
        assert!(bad.validate().is_err());
        let bad = ModelParams {
            pump_waist: 0.0,
            ..params()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn degenerate_grid() {
        let grid = build_grid(&params(), 0, DEFAULT_BOX_SIDE).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.modes()[0], ModeIndex::FUNDAMENTAL);
        assert_eq!(grid.wavevectors()[0], [0.0, 0.0]);
        assert_eq!(grid.detunings()[0], params().detuning0);
    }

    #[test]
    fn nineteen_by_nineteen() {
        let grid = build_grid(&params(), 9, DEFAULT_BOX_SIDE).unwrap();
        assert_eq!(grid.len(), 361);
    }

    #[test]
    fn first_shell_wavevector() {
        let grid = build_grid(&params(), 3, 8.0 * PI).unwrap();
        let p = grid.position(ModeIndex::new(1, 0)).unwrap();
        let [kx, ky] = grid.wavevectors()[p];
        assert!((kx - 0.25).abs() < 1e-15 && ky == 0.0);
        assert!((grid.detunings()[p] - (params().detuning0 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_box() {
        assert!(build_grid(&params(), 2, 0.0).is_err());
        assert!(build_grid(&params(), 2, -1.0).is_err());
    }

    #[test]
    fn detunings_bounded_below_by_fundamental() {
        let grid = build_grid(&params(), 5, 10.0).unwrap();
        let d0 = params().detuning0;
        for (mode, &d) in grid.modes().iter().zip(grid.detunings()) {
            if *mode == ModeIndex::FUNDAMENTAL {
                assert_eq!(d, d0);
            } else {
                assert!(d > d0);
            }
        }
    }

    #[test]
    fn fundamental_pump_component() {
        let p = params();
        let grid = build_grid(&p, 4, DEFAULT_BOX_SIDE).unwrap();
        let e = pump_components(&p, &grid);
        let expected = p.pump_amplitude * (2.0 * PI).sqrt() * p.pump_waist / DEFAULT_BOX_SIDE;
        assert!((e[grid.fundamental()].re - expected).abs() < 1e-15);
        let max = e.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert_eq!(max, e[grid.fundamental()].re);
        assert!(e.iter().all(|z| z.re > 0.0 && z.im == 0.0));
    }

    #[test]
    fn pump_ratio_second_shell() {
        let p = ModelParams {
            pump_waist: 2.0,
            ..params()
        };
        let grid = build_grid(&p, 3, 8.0 * PI).unwrap();
        let e = pump_components(&p, &grid);
        let ratio = e[grid.position(ModeIndex::new(2, 0)).unwrap()].re / e[grid.fundamental()].re;
        assert!((ratio - (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn parseval_nominal_grid() {
        let p = params();
        let cavity = Cavity::new(p, 9, 8.0 * PI).unwrap();
        let fraction = cavity.captured_pump_fraction();
        assert!(fraction >= 0.99, "captured {fraction}");
        assert!(fraction <= 1.0 + 1e-12, "captured {fraction}");
        // Also via the physical components.
        let total: f64 = pump_components(&p, cavity.grid())
            .iter()
            .map(|z| z.norm_sqr())
            .sum();
        assert!((total / p.input_power() - fraction).abs() < 1e-12);
    }

    #[test]
    fn flat_pump_only_fundamental() {
        let cavity = Cavity::flat_pump(params(), 2, 10.0).unwrap();
        let f = cavity.grid().fundamental();
        for (i, s) in cavity.pump_shape().iter().enumerate() {
            assert_eq!(s.norm() > 0.0, i == f);
        }
    }

    #[test]
    fn custom_pump_length_checked() {
        let grid = build_grid(&params(), 1, 10.0).unwrap();
        assert!(
            Cavity::with_pump_shape(params(), grid, vec![Complex64::new(1.0, 0.0); 3]).is_err()
        );
    }

    #[test]
    fn flat_index_examples() {
        let h = 9;
        assert_eq!(ModeIndex::new(-9, -9).flat(h), Some(0));
        assert_eq!(ModeIndex::new(9, 9).flat(h), Some(2 * 361 - 2));
        assert_eq!(ModeIndex::new(0, 0).flat(h), Some(2 * 19 * 9 + 2 * 9));
        assert_eq!(ModeIndex::new(10, 0).flat(h), None);
        assert_eq!(ModeIndex::from_flat(1, h), None);
    }

    proptest! {
        #[test]
        fn flat_index_round_trip(h in 0usize..12, pos in 0usize..625) {
            let side = 2 * h + 1;
            prop_assume!(pos < side * side);
            let mode = ModeIndex::from_position(pos, h).unwrap();
            let flat = mode.flat(h).unwrap();
            prop_assert_eq!(flat % 2, 0);
            prop_assert!(flat <= 2 * side * side - 2);
            prop_assert_eq!(ModeIndex::from_flat(flat, h), Some(mode));
            let expected = 2 * side as i64 * (mode.ny as i64 + h as i64) + 2 * (mode.nx as i64 + h as i64);
            prop_assert_eq!(flat as i64, expected);
        }

        #[test]
        fn grid_symmetries(h in 0usize..7, side in 5.0f64..40.0, waist in 0.5f64..4.0, d0 in -3.0f64..3.0) {
            let p = ModelParams { detuning0: d0, pump_waist: waist, ..ModelParams::default() };
            let grid = build_grid(&p, h, side).unwrap();
            let e = pump_components(&p, &grid);
            for (i, mode) in grid.modes().iter().enumerate() {
                for image in [mode.reflected(), mode.transposed()] {
                    let j = grid.position(image).unwrap();
                    prop_assert_eq!(grid.detunings()[i], grid.detunings()[j]);
                    prop_assert_eq!(e[i], e[j]);
                }
            }
        }
    }
}
