//! Command execution.

use std::path::{Path, PathBuf};

use optomech_core::fluctuations::{assemble_system, solve_dense, SolverKind};
use optomech_core::model::{Cavity, ModeIndex};
use optomech_core::spectra::{intensity_spectrum_matrix, moments_at, SpectrumResult};
use optomech_core::steady_state::{
    default_power_ceiling, radial_profile, steady_state_at, steady_state_on_branch,
    trace_bistability, Branch, SteadyState,
};
use optomech_core::Error;
use rayon::prelude::*;

use crate::config::FileConfig;
use crate::error::{CliError, Result};
use crate::format::g17;
use crate::output::{ensure_dir, Table};

/// How the classical working point is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkingPoint {
    /// A root of the steady-state equation at this input power (default:
    /// `pump_amplitude²`).
    Input {
        input_power: Option<f64>,
        branch: Branch,
    },
    /// The steady state with this intracavity power.
    Power(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSpec {
    pub point: WorkingPoint,
    pub allow_unstable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectraArgs {
    pub point: PointSpec,
    /// Thermal occupations; empty means the configured one.
    pub occupations: Vec<f64>,
    pub full_matrix: bool,
    pub solver: SolverKind,
    pub dump_matrices: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArgs {
    pub spectra: SpectraArgs,
    /// Fundamental detunings; empty means the configured one.
    pub detunings: Vec<f64>,
    pub omegas: Vec<f64>,
    pub jobs: usize,
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Bistability { p_max: Option<f64>, steps: usize },
    Steady(PointSpec),
    Spectra { args: SpectraArgs, omega: f64 },
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: FileConfig,
    pub command: Command,
    pub output_dir: PathBuf,
}

/// Runs the command; returns the summary lines meant for the terminal.
pub fn run(config: &RunConfig) -> Result<Vec<String>> {
    ensure_dir(&config.output_dir)?;
    match &config.command {
        Command::Bistability { p_max, steps } => bistability(config, *p_max, *steps),
        Command::Steady(point) => steady(config, point),
        Command::Spectra { args, omega } => {
            let lines = spectra_set(&config.file, args, *omega, &config.output_dir)?;
            Ok(lines)
        }
        Command::Sweep(args) => sweep(config, args),
    }
}

fn cavity_for(file: &FileConfig) -> Result<Cavity> {
    Ok(Cavity::new(file.model, file.half_extent, file.box_side)?)
}

fn header(file: &FileConfig) -> Vec<(String, String)> {
    file.entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

fn push(header: &mut Vec<(String, String)>, key: &str, value: String) {
    header.push((key.to_string(), value));
}

fn resolve_point(cavity: &Cavity, spec: &PointSpec) -> Result<SteadyState> {
    let steady = match spec.point {
        WorkingPoint::Input {
            input_power,
            branch,
        } => {
            if branch == Branch::Unstable && !spec.allow_unstable {
                return Err(CliError::Usage(
                    "the unstable branch is only selectable with --allow-unstable".into(),
                ));
            }
            let input_power = input_power.unwrap_or_else(|| cavity.params().input_power());
            steady_state_on_branch(input_power, branch, cavity)?
        }
        WorkingPoint::Power(power) => steady_state_at(power, cavity)?,
    };
    if steady.branch == Branch::Unstable && !spec.allow_unstable {
        return Err(Error::Domain {
            name: "power",
            reason: format!(
                "P = {} is on the unstable branch; pass --allow-unstable to use it",
                steady.intracavity_power
            ),
        }
        .into());
    }
    Ok(steady)
}

fn point_header(file: &FileConfig, steady: &SteadyState) -> Vec<(String, String)> {
    let mut h = header(file);
    push(&mut h, "power", g17(steady.intracavity_power));
    push(&mut h, "input_power", g17(steady.input_power));
    push(&mut h, "branch", steady.branch.as_str().to_string());
    h
}

fn bistability(config: &RunConfig, p_max: Option<f64>, steps: usize) -> Result<Vec<String>> {
    let cavity = cavity_for(&config.file)?;
    let p_max = p_max.unwrap_or_else(|| default_power_ceiling(&cavity));
    let curve = trace_bistability(&cavity, p_max, steps)?;
    let mut h = header(&config.file);
    push(&mut h, "p_max", g17(p_max));
    push(&mut h, "steps", steps.to_string());
    let mut table = Table::new(&h, &["power", "input_power", "stable"]);
    for s in &curve.samples {
        table.row(&[
            g17(s.power),
            g17(s.input_power),
            u8::from(s.stable).to_string(),
        ]);
    }
    table.write(&config.output_dir.join("bistability.csv"))?;
    let unstable = curve.samples.iter().filter(|s| !s.stable).count();
    Ok(vec![format!(
        "bistability: {} samples, {} unstable in {} segment(s)",
        curve.samples.len(),
        unstable,
        curve.unstable_segments().len()
    )])
}

fn steady(config: &RunConfig, spec: &PointSpec) -> Result<Vec<String>> {
    let cavity = cavity_for(&config.file)?;
    let ss = resolve_point(&cavity, spec)?;
    let mut h = point_header(&config.file, &ss);
    push(&mut h, "mirror_displacement", g17(ss.mirror_displacement));

    let mut modes = Table::new(
        &h,
        &[
            "n_x", "n_y", "pump_re", "pump_im", "alpha_re", "alpha_im", "out_re", "out_im",
        ],
    );
    for (p, mode) in cavity.grid().modes().iter().enumerate() {
        let (e, a, o) = (ss.pump[p], ss.amplitudes[p], ss.output_amplitudes[p]);
        modes.row(&[
            mode.nx.to_string(),
            mode.ny.to_string(),
            g17(e.re),
            g17(e.im),
            g17(a.re),
            g17(a.im),
            g17(o.re),
            g17(o.im),
        ]);
    }
    modes.write(&config.output_dir.join("steady.csv"))?;

    let step = 0.05 * cavity.params().pump_waist;
    let radii: Vec<f64> = (0..=60).map(|i| i as f64 * step).collect();
    let mut profile = Table::new(
        &h,
        &[
            "r",
            "input_re",
            "input_im",
            "intracavity_re",
            "intracavity_im",
            "output_re",
            "output_im",
        ],
    );
    for s in radial_profile(&ss, &cavity, &radii) {
        profile.row(&[
            g17(s.r),
            g17(s.input.re),
            g17(s.input.im),
            g17(s.intracavity.re),
            g17(s.intracavity.im),
            g17(s.output.re),
            g17(s.output.im),
        ]);
    }
    profile.write(&config.output_dir.join("profile.csv"))?;
    Ok(vec![format!(
        "steady: P = {}, P_in = {}, branch {}",
        g17(ss.intracavity_power),
        g17(ss.input_power),
        ss.branch.as_str()
    )])
}

fn occupation_tag(nt: f64) -> String {
    format!("nt-{}", g17(nt))
}

/// The complete spectra artifact set for one (model, Ω) in `dir`.
/// `summary.csv` is written last and marks the set as complete.
fn spectra_set(
    file: &FileConfig,
    args: &SpectraArgs,
    omega: f64,
    dir: &Path,
) -> Result<Vec<String>> {
    if !omega.is_finite() {
        return Err(Error::Domain {
            name: "omega",
            reason: format!("must be finite, got {omega}"),
        }
        .into());
    }
    let cavity = cavity_for(file)?;
    let ss = resolve_point(&cavity, &args.point)?;
    let occupations = if args.occupations.is_empty() {
        vec![file.model.thermal_occupation]
    } else {
        args.occupations.clone()
    };
    let moments = moments_at(&ss, &cavity, omega, occupations[0], args.solver)?;
    if args.dump_matrices {
        dump_matrices(&ss, &cavity, omega, dir)?;
    }

    let base = {
        let mut h = point_header(file, &ss);
        push(&mut h, "omega", g17(omega));
        h
    };
    let with_occupation = |nt: f64| -> Vec<(String, String)> {
        base.iter()
            .map(|(k, v)| {
                let v = if k == "thermal_occupation" {
                    g17(nt)
                } else {
                    v.clone()
                };
                (k.clone(), v)
            })
            .collect()
    };

    let mut summary = Table::new(
        &base,
        &[
            "thermal_occupation",
            "s_total",
            "s_00",
            "min_s_0n",
            "negative_s_0n",
            "masked",
        ],
    );
    let mut lines = Vec::new();
    for &nt in &occupations {
        let result = intensity_spectrum_matrix(&moments.with_thermal_occupation(nt), &ss, &cavity)?;
        let h = with_occupation(nt);
        let tag = occupation_tag(nt);
        write_map(
            &h,
            "S_nn",
            result.autocorrelation(),
            &dir.join(format!("autocorrelation_{tag}.csv")),
        )?;
        write_map(
            &h,
            "S_0n",
            result.fundamental_slice(),
            &dir.join(format!("fundamental_{tag}.csv")),
        )?;
        if args.full_matrix {
            write_matrix(&h, &result, &dir.join(format!("s_matrix_{tag}.csv")))?;
        }
        let s00 = result
            .get(ModeIndex::FUNDAMENTAL, ModeIndex::FUNDAMENTAL)
            .unwrap_or(f64::NAN);
        let (negative, min) = result
            .fundamental_slice()
            .into_iter()
            .filter(|(m, _)| *m != ModeIndex::FUNDAMENTAL)
            .fold((0usize, f64::INFINITY), |(c, lo), (_, s)| {
                (c + usize::from(s < 0.0), lo.min(s))
            });
        summary.row(&[
            g17(nt),
            g17(result.s_total),
            g17(s00),
            g17(min),
            negative.to_string(),
            result.masked.len().to_string(),
        ]);
        lines.push(format!(
            "{}: S_out(Ω = {}, N_T = {}) = {}",
            dir.display(),
            g17(omega),
            g17(nt),
            g17(result.s_total)
        ));
    }
    summary.write(&dir.join("summary.csv"))?;
    Ok(lines)
}

fn write_map(
    h: &[(String, String)],
    column: &str,
    values: Vec<(ModeIndex, f64)>,
    path: &Path,
) -> Result<()> {
    let mut table = Table::new(h, &["n_x", "n_y", column]);
    for (mode, s) in values {
        table.row(&[mode.nx.to_string(), mode.ny.to_string(), g17(s)]);
    }
    table.write(path)
}

fn write_matrix(h: &[(String, String)], result: &SpectrumResult, path: &Path) -> Result<()> {
    let mut table = Table::new(h, &["n_x", "n_y", "m_x", "m_y", "S"]);
    for (i, n) in result.modes.iter().enumerate() {
        for (j, m) in result.modes.iter().enumerate() {
            table.row(&[
                n.nx.to_string(),
                n.ny.to_string(),
                m.nx.to_string(),
                m.ny.to_string(),
                g17(result.s(i, j)),
            ]);
        }
    }
    table.write(path)
}

/// ℳ and ℬ at +Ω as (row, col, re, im), for debugging.
fn dump_matrices(ss: &SteadyState, cavity: &Cavity, omega: f64, dir: &Path) -> Result<()> {
    let system = assemble_system(ss, cavity, omega)?;
    let coupling = system.coupling_matrix(optomech_core::fluctuations::DEFAULT_DENSE_CAP)?;
    let transfer = solve_dense(&system)?.b;
    for (name, m) in [
        ("coupling_matrix.csv", &coupling),
        ("transfer_matrix.csv", &transfer),
    ] {
        let mut table = Table::new(&[("omega".into(), g17(omega))], &["row", "col", "re", "im"]);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                table.row(&[i.to_string(), j.to_string(), g17(z.re), g17(z.im)]);
            }
        }
        table.write(&dir.join(name))?;
    }
    Ok(())
}

fn sweep(config: &RunConfig, args: &SweepArgs) -> Result<Vec<String>> {
    if args.omegas.is_empty() {
        return Err(CliError::Usage(
            "sweep needs at least one --omega value".into(),
        ));
    }
    let detunings = if args.detunings.is_empty() {
        vec![config.file.model.detuning0]
    } else {
        args.detunings.clone()
    };
    let points: Vec<(usize, f64, f64)> = detunings
        .iter()
        .flat_map(|&d| args.omegas.iter().map(move |&w| (d, w)))
        .enumerate()
        .map(|(i, (d, w))| (i, d, w))
        .collect();
    let dir_name = |i: usize| format!("point-{i:04}");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", args.jobs)))?;
    let outcomes: Vec<Result<Vec<String>>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(i, detuning0, omega)| {
                let dir = config.output_dir.join(dir_name(i));
                if args.resume && dir.join("summary.csv").is_file() {
                    log::info!("{} already complete, skipping", dir.display());
                    return Ok(vec![format!("{}: skipped (complete)", dir.display())]);
                }
                ensure_dir(&dir)?;
                let mut file = config.file.clone();
                file.model.detuning0 = detuning0;
                spectra_set(&file, &args.spectra, omega, &dir)
            })
            .collect()
    });

    let mut index_header = header(&config.file);
    index_header.retain(|(k, _)| k != "detuning0");
    let mut index = Table::new(&index_header, &["point", "detuning0", "omega", "directory"]);
    for &(i, d, w) in &points {
        index.row(&[i.to_string(), g17(d), g17(w), dir_name(i)]);
    }
    index.write(&config.output_dir.join("index.csv"))?;

    let mut lines = Vec::new();
    let mut first_error = None;
    for ((i, d, w), outcome) in points.iter().zip(outcomes) {
        match outcome {
            Ok(l) => lines.extend(l),
            Err(e) => {
                log::error!("point {i} (detuning0 = {d}, omega = {w}) failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(lines),
    }
}
