//! Output second moments and intensity-noise spectra.
//!
//! All quantities are the coefficient of δ(Ω+Ω′). With the output stacked as
//! 𝒱 = (δã_n(Ω), δã_n†(−Ω)) per mode, the correlation of rows k (at Ω) and l
//! (at −Ω) is
//!
//! C_kl = Σ_j ℬ(Ω)_{k,δa_j} ℬ(−Ω)_{l,δa†_j} + N_T 𝒰(Ω)_k 𝒰(−Ω)_l.
//!
//! Intensity fluctuations of mode n weight its two rows by α^out*_n and
//! α^out_n. The resulting S_nm is Hermitian; its real part is reported as the
//! spectrum and the (antisymmetric) imaginary part is kept as `quadrature`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fluctuations::{
    assemble_system, solve, FluctuationSystem, PairProjection, Solution, SolverKind, VacuumKernel,
};
use crate::model::{Cavity, ModeIndex};
use crate::steady_state::SteadyState;

/// Relative |α^out_n| below which a mode is masked out of the matrix.
pub const MASK_THRESHOLD: f64 = 1e-8;

/// Tolerated relative deviation from Hermiticity and of the total-spectrum
/// cross-check.
pub const RESIDUE_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Output second moments at one analysis frequency, split into the vacuum
/// part and the part per unit thermal occupation.
#[derive(Debug, Clone)]
pub struct MomentSet {
    omega: f64,
    thermal_occupation: f64,
    kernel: Arc<VacuumKernel>,
    thermal_plus: Arc<Vec<Complex64>>,
    thermal_minus: Arc<Vec<Complex64>>,
}

/// Evaluates the output moments from the systems at +Ω and −Ω.
pub fn output_moments(
    plus: &FluctuationSystem,
    minus: &FluctuationSystem,
    thermal_occupation: f64,
    solver: SolverKind,
) -> Result<MomentSet> {
    if !plus.same_working_point(minus) {
        return Err(Error::Consistency(
            "systems at +Ω and −Ω linearize different steady states".into(),
        ));
    }
    if plus.omega() != -minus.omega() {
        return Err(Error::Consistency(format!(
            "frequencies {} and {} are not opposite",
            plus.omega(),
            minus.omega()
        )));
    }
    if !(thermal_occupation.is_finite() && thermal_occupation >= 0.0) {
        return Err(Error::domain(
            "thermal_occupation",
            format!("must be finite and non-negative, got {thermal_occupation}"),
        ));
    }
    let sol_plus = solve(plus, solver)?;
    let sol_minus = solve(minus, solver)?;
    check_conjugation(&sol_plus, &sol_minus)?;
    Ok(MomentSet {
        omega: plus.omega(),
        thermal_occupation,
        kernel: Arc::new(VacuumKernel::new(&sol_plus, &sol_minus)?),
        thermal_plus: Arc::new(sol_plus.thermal_u().to_vec()),
        thermal_minus: Arc::new(sol_minus.thermal_u().to_vec()),
    })
}

/// ℬ(−Ω)_{kl} = ℬ(Ω)*_{k̄l̄} and 𝒰(−Ω)_k = 𝒰(Ω)*_k̄, checked on the diagonal,
/// the partner diagonal and 𝒰.
fn check_conjugation(plus: &Solution, minus: &Solution) -> Result<()> {
    let mut worst: f64 = 0.0;
    for k in 0..plus.size() {
        let p = k ^ 1;
        for l in [k, p] {
            let a = minus.b_entry(k, l);
            let b = plus.b_entry(p, l ^ 1).conj();
            worst = worst.max((a - b).norm() / a.norm().max(1.0));
        }
        let (a, b) = (minus.thermal_u()[k], plus.thermal_u()[p].conj());
        worst = worst.max((a - b).norm() / a.norm().max(b.norm()).max(1e-300));
    }
    if worst > RESIDUE_TOLERANCE {
        return Err(Error::Internal(format!(
            "solutions at ±Ω violate conjugation symmetry by {worst:.3e}"
        )));
    }
    Ok(())
}

/// Moments of `steady` at `omega`, solving both frequencies explicitly.
pub fn moments_at(
    steady: &SteadyState,
    cavity: &Cavity,
    omega: f64,
    thermal_occupation: f64,
    solver: SolverKind,
) -> Result<MomentSet> {
    let plus = assemble_system(steady, cavity, omega)?;
    let minus = assemble_system(steady, cavity, -omega)?;
    output_moments(&plus, &minus, thermal_occupation, solver)
}

impl MomentSet {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn thermal_occupation(&self) -> f64 {
        self.thermal_occupation
    }

    /// Same moments at another N_T; the solves are shared.
    pub fn with_thermal_occupation(&self, thermal_occupation: f64) -> MomentSet {
        MomentSet {
            thermal_occupation,
            ..self.clone()
        }
    }

    pub fn size(&self) -> usize {
        self.thermal_plus.len()
    }

    pub fn vacuum(&self, k: usize, l: usize) -> Complex64 {
        self.kernel.entry(k, l)
    }

    pub fn thermal_per_quantum(&self, k: usize, l: usize) -> Complex64 {
        self.thermal_plus[k] * self.thermal_minus[l]
    }

    /// C_kl
    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        self.vacuum(k, l) + self.thermal_occupation * self.thermal_per_quantum(k, l)
    }

    /// ⟨δã†_n(−Ω) δã_m(Ω′)⟩ for lattice positions n, m.
    pub fn normal(&self, n: usize, m: usize) -> Complex64 {
        self.entry(2 * n + 1, 2 * m)
    }

    /// ⟨δã_n(Ω) δã_m(Ω′)⟩
    pub fn anomalous(&self, n: usize, m: usize) -> Complex64 {
        self.entry(2 * n, 2 * m)
    }

    /// ⟨δã_n(Ω) δã†_m(−Ω′)⟩
    pub fn normal_partner(&self, n: usize, m: usize) -> Complex64 {
        self.entry(2 * n, 2 * m + 1)
    }

    /// ⟨δã†_n(−Ω) δã†_m(−Ω′)⟩
    pub fn anomalous_partner(&self, n: usize, m: usize) -> Complex64 {
        self.entry(2 * n + 1, 2 * m + 1)
    }

    /// cᵀCc with c the intensity weights of every mode, evaluated without
    /// forming individual entries where the kernel allows it.
    fn total_intensity_correlation(&self, out: &[Complex64]) -> Complex64 {
        let weights = intensity_weights(out);
        let dot =
            |v: &[Complex64]| -> Complex64 { weights.iter().zip(v).map(|(c, v)| c * v).sum() };
        let thermal = dot(&self.thermal_plus) * dot(&self.thermal_minus);
        let vacuum = match &*self.kernel {
            VacuumKernel::LowRank(kernel) => kernel.quadratic_form(&weights),
            kernel => {
                let n = weights.len();
                (0..n)
                    .map(|k| {
                        weights[k]
                            * (0..n)
                                .map(|l| kernel.entry(k, l) * weights[l])
                                .sum::<Complex64>()
                    })
                    .sum()
            }
        };
        vacuum + self.thermal_occupation * thermal
    }
}

/// c: α^out*_n on δã rows, α^out_n on δã† rows.
fn intensity_weights(out: &[Complex64]) -> Vec<Complex64> {
    out.iter().flat_map(|a| [a.conj(), *a]).collect()
}

/// ⟨δĨ_n δĨ_m⟩ before normalization, for all mode pairs.
struct PairCorrelations<'a> {
    moments: &'a MomentSet,
    weights: Vec<Complex64>,
    projection: Option<PairProjection>,
    thermal_plus: Vec<Complex64>,
    thermal_minus: Vec<Complex64>,
}

impl<'a> PairCorrelations<'a> {
    fn new(moments: &'a MomentSet, out: &[Complex64]) -> Self {
        let weights = intensity_weights(out);
        let fold = |v: &[Complex64]| -> Vec<Complex64> {
            (0..out.len())
                .map(|n| weights[2 * n] * v[2 * n] + weights[2 * n + 1] * v[2 * n + 1])
                .collect()
        };
        let projection = match &*moments.kernel {
            VacuumKernel::LowRank(kernel) => Some(kernel.project_pairs(&weights)),
            _ => None,
        };
        Self {
            moments,
            thermal_plus: fold(&moments.thermal_plus),
            thermal_minus: fold(&moments.thermal_minus),
            weights,
            projection,
        }
    }

    fn get(&self, n: usize, m: usize) -> Complex64 {
        let vacuum = match &self.projection {
            Some(p) => p.entry(n, m),
            None => {
                let w = &self.weights;
                let mut s = ZERO;
                for k in [2 * n, 2 * n + 1] {
                    for l in [2 * m, 2 * m + 1] {
                        s += w[k] * w[l] * self.moments.vacuum(k, l);
                    }
                }
                s
            }
        };
        vacuum + self.moments.thermal_occupation * self.thermal_plus[n] * self.thermal_minus[m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub omega: f64,
    pub thermal_occupation: f64,
    /// Unmasked modes, in lattice order; they index `s_matrix`.
    pub modes: Vec<ModeIndex>,
    /// Re S_nm, row-major over `modes`.
    pub s_matrix: Vec<f64>,
    /// Im S_nm, antisymmetric.
    pub quadrature: Vec<f64>,
    pub s_total: f64,
    /// Modes excluded for vanishing output amplitude.
    pub masked: Vec<ModeIndex>,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.s_matrix[i * self.modes.len() + j]
    }

    pub fn index_of(&self, mode: ModeIndex) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    pub fn get(&self, n: ModeIndex, m: ModeIndex) -> Option<f64> {
        Some(self.s(self.index_of(n)?, self.index_of(m)?))
    }

    /// Coherent-state value of S_nm: δ_nm.
    pub fn coherent_reference(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            0.0
        }
    }

    /// Coherent-state value of S_out.
    pub const COHERENT_TOTAL: f64 = 1.0;

    /// (n, S_nn)
    pub fn autocorrelation(&self) -> Vec<(ModeIndex, f64)> {
        (0..self.len())
            .map(|i| (self.modes[i], self.s(i, i)))
            .collect()
    }

    /// (n, S_0n); empty when the fundamental is masked.
    pub fn fundamental_slice(&self) -> Vec<(ModeIndex, f64)> {
        match self.index_of(ModeIndex::FUNDAMENTAL) {
            Some(f) => (0..self.len())
                .map(|j| (self.modes[j], self.s(f, j)))
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Output amplitudes with their moduli and the mask applied.
fn unmasked_positions(out: &[Complex64]) -> (Vec<usize>, Vec<usize>) {
    let peak = out.iter().map(|a| a.norm()).fold(0.0, f64::max);
    (0..out.len()).partition(|&n| peak > 0.0 && out[n].norm() >= MASK_THRESHOLD * peak)
}

/// S_nm from `moments`, weighted by the output amplitudes of `steady`.
pub fn intensity_spectrum_matrix(
    moments: &MomentSet,
    steady: &SteadyState,
    cavity: &Cavity,
) -> Result<SpectrumResult> {
    intensity_spectrum_matrix_with_reference(moments, &steady.output_amplitudes, cavity)
}

/// As [`intensity_spectrum_matrix`] with explicitly supplied output
/// amplitudes. Useful when the field of interest vanishes in some modes
/// but their fluctuations should still be normalized, e.g. with a flat pump.
pub fn intensity_spectrum_matrix_with_reference(
    moments: &MomentSet,
    output_amplitudes: &[Complex64],
    cavity: &Cavity,
) -> Result<SpectrumResult> {
    let grid = cavity.grid();
    if output_amplitudes.len() != grid.len() || moments.size() != 2 * grid.len() {
        return Err(Error::Consistency(format!(
            "moments for {} modes, amplitudes for {}, lattice of {}",
            moments.size() / 2,
            output_amplitudes.len(),
            grid.len()
        )));
    }
    let (kept, masked) = unmasked_positions(output_amplitudes);
    if kept.is_empty() {
        return Err(Error::domain(
            "output_amplitudes",
            "total output power is zero",
        ));
    }
    let size = kept.len();
    let pairs = PairCorrelations::new(moments, output_amplitudes);
    let mut s_matrix = vec![0.0; size * size];
    let mut quadrature = vec![0.0; size * size];
    let mut weighted = ZERO;
    let mut worst: f64 = 0.0;
    for (i, &n) in kept.iter().enumerate() {
        for (j, &m) in kept.iter().enumerate().skip(i) {
            let s_nm = pairs.get(n, m);
            let s_mn = if i == j { s_nm } else { pairs.get(m, n) };
            let scale = s_nm.norm().max(s_mn.norm()).max(1e-300);
            worst = worst.max((s_nm - s_mn.conj()).norm() / scale);
            if i == j {
                worst = worst.max(s_nm.im.abs() / scale);
            }
            let norm = output_amplitudes[n].norm() * output_amplitudes[m].norm();
            let s = 0.5 * (s_nm + s_mn.conj()) / norm;
            s_matrix[i * size + j] = s.re;
            s_matrix[j * size + i] = s.re;
            quadrature[i * size + j] = s.im;
            quadrature[j * size + i] = -s.im;
            weighted += if i == j { s_nm } else { s_nm + s_mn };
        }
    }
    if worst > RESIDUE_TOLERANCE {
        return Err(Error::Internal(format!(
            "intensity correlations are not Hermitian (relative residue {worst:.3e})"
        )));
    }

    let power: f64 = output_amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let direct = moments.total_intensity_correlation(output_amplitudes);
    let masked_part = masked_contribution(&pairs, &kept, &masked);
    let reference = weighted + masked_part;
    let scale = direct.norm().max(reference.norm()).max(power);
    if (direct - reference).norm() > RESIDUE_TOLERANCE * scale
        || direct.im.abs() > RESIDUE_TOLERANCE * scale
    {
        return Err(Error::Internal(format!(
            "total spectrum {direct} disagrees with the mode-resolved sum {reference}"
        )));
    }

    Ok(SpectrumResult {
        omega: moments.omega(),
        thermal_occupation: moments.thermal_occupation(),
        modes: kept.iter().map(|&p| grid.modes()[p]).collect(),
        s_matrix,
        quadrature,
        s_total: direct.re / power,
        masked: masked.iter().map(|&p| grid.modes()[p]).collect(),
    })
}

/// Terms of the total spectrum that involve at least one masked mode.
fn masked_contribution(pairs: &PairCorrelations, kept: &[usize], masked: &[usize]) -> Complex64 {
    let mut total = ZERO;
    for &n in masked {
        for &m in kept {
            total += pairs.get(n, m) + pairs.get(m, n);
        }
        for &m in masked {
            total += pairs.get(n, m);
        }
    }
    total
}

/// S_out: the total output intensity spectrum normalized by the output power.
pub fn total_intensity_spectrum(moments: &MomentSet, steady: &SteadyState) -> Result<f64> {
    let out = &steady.output_amplitudes;
    if moments.size() != 2 * out.len() {
        return Err(Error::Consistency(format!(
            "moments for {} modes, amplitudes for {}",
            moments.size() / 2,
            out.len()
        )));
    }
    let power: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    if power <= 0.0 {
        return Err(Error::domain(
            "output_amplitudes",
            "total output power is zero",
        ));
    }
    Ok(moments.total_intensity_correlation(out).re / power)
}

/// Moments and spectrum of `steady` at (Ω, N_T) in one call.
pub fn spectrum_at(
    steady: &SteadyState,
    cavity: &Cavity,
    omega: f64,
    thermal_occupation: f64,
    solver: SolverKind,
) -> Result<SpectrumResult> {
    let moments = moments_at(steady, cavity, omega, thermal_occupation, solver)?;
    intensity_spectrum_matrix(&moments, steady, cavity)
}
