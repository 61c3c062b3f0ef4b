//! Linearized fluctuations around a steady state at analysis frequency Ω.
//!
//! The unknowns are stacked pairwise per mode, (δã_n(Ω), δã_n†(−Ω)), in
//! lattice order. In the usual 1-based notation odd rows hold δã and even
//! rows δã†; here rows are 0-based, so row `2p` is δã of lattice position `p`
//! and row `2p + 1` its δã† partner.
//!
//! The system matrix ℳ + (iΩ+1)𝓘 is a diagonal plus the single outer product
//! 𝒜 wᵀ, with w_l = i(−1)^l χ(Ω) 𝒜_{l−(−1)^l}. That structure gives an O(N)
//! inverse through the Sherman–Morrison formula ([`solve_fast`]); the dense
//! LU path ([`solve_dense`]) is kept as an independent reference.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Cavity, ModelParams};
use crate::steady_state::{Branch, SteadyState};

/// Largest dense system the matrix paths will build by default
/// (n̄ = 31 gives 2·63² = 7938).
pub const DEFAULT_DENSE_CAP: usize = 8192;

/// 1-norm condition number above which a dense solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// |1 + wᵀD⁻¹𝒜| below this makes the rank-one update unusable.
pub const UPDATE_DENOMINATOR_FLOOR: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// (−1)^k for the 1-based index k = row + 1.
#[inline]
fn parity_sign(row: usize) -> f64 {
    if row % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Index of the conjugate partner: l − (−1)^l in 1-based terms.
#[inline]
fn partner(row: usize) -> usize {
    row ^ 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseSample {
    pub omega: f64,
    pub chi: Complex64,
}

/// Mechanical susceptibility χ(Ω) = ω_m²/(ω_m² − Ω² + iγ_mΩ).
pub fn mirror_response(omega: f64, params: &ModelParams) -> ResponseSample {
    let w2 = params.mirror_freq * params.mirror_freq;
    let chi =
        Complex64::new(w2, 0.0) / Complex64::new(w2 - omega * omega, params.mirror_damping * omega);
    ResponseSample { omega, chi }
}

/// The linear system at one analysis frequency, kept in its structured
/// (diagonal + rank one) form. Dense matrices are built on request.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSystem {
    omega: f64,
    chi: Complex64,
    intracavity_power: f64,
    /// 𝒜: iα_n, −iα_n* interleaved.
    drive: Vec<Complex64>,
    /// 𝒟: Δ_n repeated for both members of a pair.
    detuning: Vec<f64>,
    /// w
    coupling_row: Vec<Complex64>,
    /// Diagonal of ℳ's first term plus (iΩ + 1).
    diagonal: Vec<Complex64>,
    /// √(2γ_m/ω_m)
    noise_gain: f64,
}

/// Builds the fluctuation system of `steady` at frequency `omega`.
pub fn assemble_system(
    steady: &SteadyState,
    cavity: &Cavity,
    omega: f64,
) -> Result<FluctuationSystem> {
    let modes = cavity.grid().len();
    if steady.amplitudes.len() != modes {
        return Err(Error::Consistency(format!(
            "steady state has {} modes, lattice has {modes}",
            steady.amplitudes.len()
        )));
    }
    if !omega.is_finite() {
        return Err(Error::domain(
            "omega",
            format!("must be finite, got {omega}"),
        ));
    }
    if steady.branch == Branch::Unstable {
        log::warn!(
            "linearizing around P = {}, which is on the slope-unstable branch",
            steady.intracavity_power
        );
    }
    let params = cavity.params();
    let chi = mirror_response(omega, params).chi;
    let power = steady.intracavity_power;
    let n = 2 * modes;

    let mut drive = Vec::with_capacity(n);
    let mut detuning = Vec::with_capacity(n);
    for (a, &d) in steady.amplitudes.iter().zip(cavity.grid().detunings()) {
        drive.push(I * a);
        drive.push(-I * a.conj());
        detuning.push(d);
        detuning.push(d);
    }
    let coupling_row = (0..n)
        .map(|l| I * parity_sign(l) * chi * drive[partner(l)])
        .collect();
    let diagonal = (0..n)
        .map(|k| I * parity_sign(k) * (power - detuning[k]) + Complex64::new(1.0, omega))
        .collect();

    let system = FluctuationSystem {
        omega,
        chi,
        intracavity_power: power,
        drive,
        detuning,
        coupling_row,
        diagonal,
        noise_gain: (2.0 * params.mirror_damping / params.mirror_freq).sqrt(),
    };
    system.check_pair_structure()?;
    Ok(system)
}

impl FluctuationSystem {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn chi(&self) -> Complex64 {
        self.chi
    }

    pub fn size(&self) -> usize {
        self.drive.len()
    }

    pub fn intracavity_power(&self) -> f64 {
        self.intracavity_power
    }

    pub fn drive(&self) -> &[Complex64] {
        &self.drive
    }

    pub fn detuning(&self) -> &[f64] {
        &self.detuning
    }

    pub fn coupling_row(&self) -> &[Complex64] {
        &self.coupling_row
    }

    /// D_k = i(−1)^k (P − 𝒟_k) + iΩ + 1.
    pub fn diagonal(&self) -> &[Complex64] {
        &self.diagonal
    }

    /// √(2γ_m/ω_m)·χ(Ω), the weight of the mirror noise in 𝒰.
    pub fn thermal_weight(&self) -> Complex64 {
        self.noise_gain * self.chi
    }

    /// No intracavity field: the mirror decouples from the fluctuations.
    pub fn is_dark(&self) -> bool {
        self.drive.iter().all(|a| *a == ZERO)
    }

    fn check_pair_structure(&self) -> Result<()> {
        for k in (0..self.size()).step_by(2) {
            if self.drive[k + 1] != self.drive[k].conj() || self.detuning[k + 1] != self.detuning[k]
            {
                return Err(Error::Internal(format!(
                    "pair ({}, {}) breaks the δa/δa† structure",
                    k + 1,
                    k + 2
                )));
            }
        }
        Ok(())
    }

    /// True when `other` linearizes the same steady state (any frequency).
    pub fn same_working_point(&self, other: &FluctuationSystem) -> bool {
        self.intracavity_power == other.intracavity_power
            && self.drive == other.drive
            && self.detuning == other.detuning
            && self.noise_gain == other.noise_gain
    }

    fn check_dense_size(&self, cap: usize) -> Result<()> {
        if self.size() > cap {
            return Err(Error::TooLarge {
                size: self.size(),
                cap,
            });
        }
        Ok(())
    }

    /// ℳ_{kl} = i(−1)^k [P − 𝒟_k] δ_{kl} + i(−1)^l χ 𝒜_k 𝒜_{l−(−1)^l}.
    pub fn coupling_matrix(&self, cap: usize) -> Result<Mat<Complex64>> {
        self.check_dense_size(cap)?;
        let p = self.intracavity_power;
        Ok(Mat::from_fn(self.size(), self.size(), |k, l| {
            let rank_one = self.drive[k] * self.coupling_row[l];
            if k == l {
                I * parity_sign(k) * (p - self.detuning[k]) + rank_one
            } else {
                rank_one
            }
        }))
    }

    /// ℳ + (iΩ + 1)𝓘.
    pub fn system_matrix(&self, cap: usize) -> Result<Mat<Complex64>> {
        let mut m = self.coupling_matrix(cap)?;
        let shift = Complex64::new(1.0, self.omega);
        for k in 0..self.size() {
            m[(k, k)] += shift;
        }
        Ok(m)
    }
}

fn one_norm(m: &Mat<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse, input/output transfer matrix and thermal vector from a dense LU.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub omega: f64,
    /// ℱ = [ℳ + (iΩ+1)𝓘]⁻¹
    pub f: Mat<Complex64>,
    /// ℬ = 2ℱ − 𝓘
    pub b: Mat<Complex64>,
    /// 𝒰 = √(2γ_m/ω_m) χ ℱ𝒜
    pub u: Vec<Complex64>,
    /// 1-norm condition number of the system matrix.
    pub condition: f64,
}

pub fn solve_dense(system: &FluctuationSystem) -> Result<DenseSolution> {
    solve_dense_with_cap(system, DEFAULT_DENSE_CAP)
}

pub fn solve_dense_with_cap(system: &FluctuationSystem, cap: usize) -> Result<DenseSolution> {
    let a = system.system_matrix(cap)?;
    let f = a.partial_piv_lu().inverse();
    let condition = one_norm(&a) * one_norm(&f);
    if !(condition.is_finite() && condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            estimate: condition,
        });
    }
    let n = system.size();
    let mut b = Mat::from_fn(n, n, |i, j| 2.0 * f[(i, j)]);
    for k in 0..n {
        b[(k, k)] -= ONE;
    }
    let weight = system.thermal_weight();
    let u = (0..n)
        .map(|k| {
            weight
                * (0..n)
                    .map(|l| f[(k, l)] * system.drive[l])
                    .sum::<Complex64>()
        })
        .collect();
    Ok(DenseSolution {
        omega: system.omega,
        f,
        b,
        u,
        condition,
    })
}

/// ℱ in implicit form: ℱ = D⁻¹ − σ (D⁻¹𝒜)(wᵀD⁻¹), σ = 1/(1 + wᵀD⁻¹𝒜).
#[derive(Debug, Clone)]
pub struct FastSolution {
    omega: f64,
    inv_diagonal: Vec<Complex64>,
    /// D⁻¹𝒜
    left: Vec<Complex64>,
    /// wᵀD⁻¹
    right: Vec<Complex64>,
    gain: Complex64,
    thermal: Vec<Complex64>,
}

pub fn solve_fast(system: &FluctuationSystem) -> Result<FastSolution> {
    let inv_diagonal: Vec<Complex64> = system.diagonal.iter().map(|d| d.inv()).collect();
    if inv_diagonal
        .iter()
        .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::NearSingularUpdate { magnitude: 0.0 });
    }
    let left: Vec<Complex64> = system
        .drive
        .iter()
        .zip(&inv_diagonal)
        .map(|(a, d)| a * d)
        .collect();
    let right: Vec<Complex64> = system
        .coupling_row
        .iter()
        .zip(&inv_diagonal)
        .map(|(w, d)| w * d)
        .collect();
    let denominator = ONE
        + system
            .coupling_row
            .iter()
            .zip(&left)
            .map(|(w, u)| w * u)
            .sum::<Complex64>();
    if denominator.norm() < UPDATE_DENOMINATOR_FLOOR {
        return Err(Error::NearSingularUpdate {
            magnitude: denominator.norm(),
        });
    }
    let gain = denominator.inv();
    // ℱ𝒜 = σ D⁻¹𝒜
    let weight = system.thermal_weight() * gain;
    let thermal = left.iter().map(|u| weight * u).collect();
    Ok(FastSolution {
        omega: system.omega,
        inv_diagonal,
        left,
        right,
        gain,
        thermal,
    })
}

impl FastSolution {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn size(&self) -> usize {
        self.inv_diagonal.len()
    }

    pub fn f_entry(&self, k: usize, l: usize) -> Complex64 {
        let update = -self.gain * self.left[k] * self.right[l];
        if k == l {
            self.inv_diagonal[k] + update
        } else {
            update
        }
    }

    pub fn b_entry(&self, k: usize, l: usize) -> Complex64 {
        let b = 2.0 * self.f_entry(k, l);
        if k == l {
            b - ONE
        } else {
            b
        }
    }

    pub fn f_row(&self, k: usize) -> Vec<Complex64> {
        (0..self.size()).map(|l| self.f_entry(k, l)).collect()
    }

    pub fn b_row(&self, k: usize) -> Vec<Complex64> {
        (0..self.size()).map(|l| self.b_entry(k, l)).collect()
    }

    /// ℱx in O(N).
    pub fn apply_f(&self, x: &[Complex64]) -> Vec<Complex64> {
        let projection: Complex64 = self.right.iter().zip(x).map(|(r, x)| r * x).sum();
        let scale = self.gain * projection;
        self.inv_diagonal
            .iter()
            .zip(x)
            .zip(&self.left)
            .map(|((d, x), u)| d * x - scale * u)
            .collect()
    }

    /// ℬx in O(N).
    pub fn apply_b(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.apply_f(x)
            .into_iter()
            .zip(x)
            .map(|(fx, x)| 2.0 * fx - x)
            .collect()
    }

    /// 𝒰
    pub fn thermal_u(&self) -> &[Complex64] {
        &self.thermal
    }

    /// Dense ℱ, for cross-checks at small sizes.
    pub fn to_dense_f(&self) -> Mat<Complex64> {
        Mat::from_fn(self.size(), self.size(), |k, l| self.f_entry(k, l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dense,
    Fast,
    /// Fast path, falling back to dense when the rank-one update is near
    /// singular.
    Auto,
}

#[derive(Debug, Clone)]
pub enum Solution {
    Dense(DenseSolution),
    Fast(FastSolution),
}

pub fn solve(system: &FluctuationSystem, kind: SolverKind) -> Result<Solution> {
    match kind {
        SolverKind::Dense => solve_dense(system).map(Solution::Dense),
        SolverKind::Fast => solve_fast(system).map(Solution::Fast),
        SolverKind::Auto => match solve_fast(system) {
            Ok(fast) => Ok(Solution::Fast(fast)),
            Err(Error::NearSingularUpdate { magnitude }) => {
                log::warn!(
                    "rank-one update near singular ({magnitude:.3e}) at Ω = {}; using dense LU",
                    system.omega
                );
                solve_dense(system).map(Solution::Dense)
            }
            Err(e) => Err(e),
        },
    }
}

impl Solution {
    pub fn omega(&self) -> f64 {
        match self {
            Solution::Dense(d) => d.omega,
            Solution::Fast(f) => f.omega,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Solution::Dense(d) => d.b.nrows(),
            Solution::Fast(f) => f.size(),
        }
    }

    pub fn b_entry(&self, k: usize, l: usize) -> Complex64 {
        match self {
            Solution::Dense(d) => d.b[(k, l)],
            Solution::Fast(f) => f.b_entry(k, l),
        }
    }

    pub fn thermal_u(&self) -> &[Complex64] {
        match self {
            Solution::Dense(d) => &d.u,
            Solution::Fast(f) => f.thermal_u(),
        }
    }
}

/// Vacuum contraction C_{kl} = Σ_j ℬ(Ω)_{k,δa_j} ℬ(−Ω)_{l,δa†_j}: the
/// coefficient of δ(Ω+Ω′) in ⟨𝒱ᵒᵘᵗ_k(Ω) 𝒱ᵒᵘᵗ_l(Ω′)⟩ driven by input vacuum
/// noise, whose only nonvanishing correlations pair δa_j with δa†_j.
#[derive(Debug, Clone)]
pub enum VacuumKernel {
    /// Full N×N matrix from one dense product.
    Dense(Mat<Complex64>),
    /// O(1) per entry from the two rank-one representations.
    LowRank(LowRankKernel),
    /// Explicit O(N) sums, used when the two sides are stored differently.
    Generic {
        plus: Box<Solution>,
        minus: Box<Solution>,
    },
}

#[derive(Debug, Clone)]
pub struct LowRankKernel {
    /// ℬ(Ω) diagonal part, 2D⁻¹ − 1.
    lambda_plus: Vec<Complex64>,
    lambda_minus: Vec<Complex64>,
    left_plus: Vec<Complex64>,
    left_minus: Vec<Complex64>,
    /// [k even] Λ⁺_k (−2σ⁻) (wᵀD⁻¹)⁻_{k+1}
    row_terms: Vec<Complex64>,
    /// [l odd] (−2σ⁺) (wᵀD⁻¹)⁺_{l−1} Λ⁻_l
    col_terms: Vec<Complex64>,
    /// 4σ⁺σ⁻ Σ_j (wᵀD⁻¹)⁺_{2j} (wᵀD⁻¹)⁻_{2j+1}
    cross: Complex64,
}

impl LowRankKernel {
    fn new(plus: &FastSolution, minus: &FastSolution) -> Self {
        let n = plus.size();
        let lambda = |s: &FastSolution| -> Vec<Complex64> {
            s.inv_diagonal.iter().map(|d| 2.0 * d - ONE).collect()
        };
        let lambda_plus = lambda(plus);
        let lambda_minus = lambda(minus);
        let two_sigma_plus = 2.0 * plus.gain;
        let two_sigma_minus = 2.0 * minus.gain;
        let row_terms = (0..n)
            .map(|k| {
                if k % 2 == 0 {
                    -two_sigma_minus * lambda_plus[k] * minus.right[k + 1]
                } else {
                    ZERO
                }
            })
            .collect();
        let col_terms = (0..n)
            .map(|l| {
                if l % 2 == 1 {
                    -two_sigma_plus * plus.right[l - 1] * lambda_minus[l]
                } else {
                    ZERO
                }
            })
            .collect();
        let overlap: Complex64 = (0..n / 2)
            .map(|j| plus.right[2 * j] * minus.right[2 * j + 1])
            .sum();
        Self {
            lambda_plus,
            lambda_minus,
            left_plus: plus.left.clone(),
            left_minus: minus.left.clone(),
            row_terms,
            col_terms,
            cross: two_sigma_plus * two_sigma_minus * overlap,
        }
    }

    fn entry(&self, k: usize, l: usize) -> Complex64 {
        let mut c = self.row_terms[k] * self.left_minus[l]
            + self.left_plus[k] * self.col_terms[l]
            + self.cross * self.left_plus[k] * self.left_minus[l];
        if k % 2 == 0 && l == k + 1 {
            c += self.lambda_plus[k] * self.lambda_minus[l];
        }
        c
    }

    /// Pair sums Σ_{k∈n, l∈m} c_k C_kl c_l for every pair of modes n, m,
    /// available in O(1) each after an O(N) pass.
    pub fn project_pairs(&self, c: &[Complex64]) -> PairProjection {
        let modes = c.len() / 2;
        let fold = |v: &[Complex64]| -> Vec<Complex64> {
            (0..modes)
                .map(|n| c[2 * n] * v[2 * n] + c[2 * n + 1] * v[2 * n + 1])
                .collect()
        };
        PairProjection {
            diagonal: (0..modes)
                .map(|n| {
                    c[2 * n] * self.lambda_plus[2 * n] * self.lambda_minus[2 * n + 1] * c[2 * n + 1]
                })
                .collect(),
            row: fold(&self.row_terms),
            col: fold(&self.col_terms),
            left_plus: fold(&self.left_plus),
            left_minus: fold(&self.left_minus),
            cross: self.cross,
        }
    }

    /// Σ_kl c_k C_kl c_l in O(N).
    pub fn quadratic_form(&self, c: &[Complex64]) -> Complex64 {
        let dot = |v: &[Complex64]| -> Complex64 { c.iter().zip(v).map(|(c, v)| c * v).sum() };
        let (lp, lm) = (dot(&self.left_plus), dot(&self.left_minus));
        let pairs: Complex64 = (0..c.len() / 2)
            .map(|j| {
                c[2 * j] * self.lambda_plus[2 * j] * self.lambda_minus[2 * j + 1] * c[2 * j + 1]
            })
            .sum();
        pairs + dot(&self.row_terms) * lm + lp * dot(&self.col_terms) + self.cross * lp * lm
    }
}

/// Mode-pair sums of a [`LowRankKernel`] against fixed weights.
#[derive(Debug, Clone)]
pub struct PairProjection {
    diagonal: Vec<Complex64>,
    row: Vec<Complex64>,
    col: Vec<Complex64>,
    left_plus: Vec<Complex64>,
    left_minus: Vec<Complex64>,
    cross: Complex64,
}

impl PairProjection {
    pub fn entry(&self, n: usize, m: usize) -> Complex64 {
        let s = self.row[n] * self.left_minus[m]
            + self.left_plus[n] * (self.col[m] + self.cross * self.left_minus[m]);
        if n == m {
            s + self.diagonal[n]
        } else {
            s
        }
    }
}

impl VacuumKernel {
    /// `plus` at +Ω and `minus` at −Ω of the same steady state.
    pub fn new(plus: &Solution, minus: &Solution) -> Result<Self> {
        if plus.size() != minus.size() {
            return Err(Error::Consistency(format!(
                "solutions of size {} and {} cannot be paired",
                plus.size(),
                minus.size()
            )));
        }
        Ok(match (plus, minus) {
            (Solution::Dense(p), Solution::Dense(m)) => {
                let n = p.b.nrows();
                let h = n / 2;
                let annihilation = Mat::from_fn(n, h, |k, j| p.b[(k, 2 * j)]);
                let creation = Mat::from_fn(n, h, |l, j| m.b[(l, 2 * j + 1)]);
                VacuumKernel::Dense(&annihilation * creation.transpose())
            }
            (Solution::Fast(p), Solution::Fast(m)) => {
                VacuumKernel::LowRank(LowRankKernel::new(p, m))
            }
            _ => VacuumKernel::Generic {
                plus: Box::new(plus.clone()),
                minus: Box::new(minus.clone()),
            },
        })
    }

    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        match self {
            VacuumKernel::Dense(c) => c[(k, l)],
            VacuumKernel::LowRank(r) => r.entry(k, l),
            VacuumKernel::Generic { plus, minus } => (0..plus.size() / 2)
                .map(|j| plus.b_entry(k, 2 * j) * minus.b_entry(l, 2 * j + 1))
                .sum(),
        }
    }
}
