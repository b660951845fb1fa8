//! Batch front end: data synthesis, inversion runs, invariant
//! verification and the benchmark comparison.
//!
//! Exit codes: 0 success, 2 validation, 3 numerical failure, 4 i/o.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rwi_core::error::Error;
use rwi_core::inversion::{invert, relative_misfit, Approach, InversionOutput, Regularizer};
use rwi_core::io;
use rwi_core::scenario::{Resolved, Scenario};
use rwi_core::survey::{add_noise, make_data_cube, DataCube};
use rwi_core::verify;

#[derive(Parser)]
#[command(name = "rwi", version, about = "2D acoustic waveform inversion with a data-driven internal-wave estimate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Rom1,
    Rom2,
    Fwi,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Rom1 => Approach::Rom1,
            ApproachArg::Rom2 => Approach::Rom2,
            ApproachArg::Fwi => Approach::Fwi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegArg {
    Tikhonov,
    Tv,
}

impl From<RegArg> for Regularizer {
    fn from(r: RegArg) -> Self {
        match r {
            RegArg::Tikhonov => Regularizer::Tikhonov,
            RegArg::Tv => Regularizer::Tv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Hat,
    Gaussian,
    Pixel,
}

impl BasisArg {
    fn name(self) -> &'static str {
        match self {
            BasisArg::Hat => "hat",
            BasisArg::Gaussian => "gaussian",
            BasisArg::Pixel => "pixel",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the data cube and ground truth for a scenario.
    Synthesize {
        scenario: PathBuf,
        out_dir: PathBuf,
    },
    /// Run one inversion against a synthesized cube.
    Invert {
        scenario: PathBuf,
        cube_dir: PathBuf,
        #[arg(long, value_enum, default_value = "rom2")]
        approach: ApproachArg,
        #[arg(long, value_enum, default_value = "tikhonov")]
        reg: RegArg,
        /// Regularization weight; the scenario default for the chosen
        /// regularizer when omitted.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum)]
        basis: Option<BasisArg>,
        #[arg(long)]
        iters: Option<usize>,
        /// Add measurement noise of this relative level before inverting.
        #[arg(long)]
        noise_level: Option<f64>,
        /// Seed for the added noise; the scenario seed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Run the invariant checks for a scenario.
    Verify {
        scenario: PathBuf,
        /// List the check names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Compare every approach on one cube; emits the per-iteration
    /// misfit table.
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value = "bench")]
        out_dir: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::IndexOutOfRange(_)
        | Error::Validation(_)
        | Error::DimensionMismatch(_) => 2,
        Error::Stability { .. }
        | Error::Divergence { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::SpectralValidity(_)
        | Error::Singular(_)
        | Error::RegularizationSetup(_) => 3,
        Error::Io(_) | Error::FileFormat(_) => 4,
    }
}

fn write_text_atomic(path: &Path, text: &str) -> Result<(), Error> {
    io::write_atomic(path, |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

fn load_resolved(path: &Path) -> Result<Resolved, Error> {
    Scenario::load(path)?.resolve()
}

fn cmd_synthesize(scenario: &Path, out_dir: &Path) -> Result<(), Error> {
    let resolved = load_resolved(scenario)?;
    let cube = make_data_cube(
        &resolved.medium,
        &resolved.array,
        &resolved.pulse,
        &resolved.time_grid,
        &resolved.boundaries,
    )?;
    let noise = &resolved.scenario.noise;
    let cube = add_noise(&cube, noise.level, noise.seed)?;

    std::fs::create_dir_all(out_dir)?;
    io::write_cube(&out_dir.join("cube.rwic"), &cube)?;
    io::write_grid_fields(&out_dir.join("true_medium.rwiv"), &resolved.grid, &[&resolved.medium.c])?;
    write_text_atomic(&out_dir.join("manifest.toml"), &resolved.scenario.to_toml()?)?;
    println!(
        "synthesized {} matrices ({} sensors, n = {}) into {}",
        cube.len(),
        cube.m(),
        cube.n(),
        out_dir.display()
    );
    Ok(())
}

fn csv_line(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_run_outputs(out_dir: &Path, resolved: &Resolved, output: &InversionOutput) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let mut misfit = String::from("iter,misfit\n");
    for (k, v) in output.state.misfit_history.iter().enumerate() {
        misfit.push_str(&format!("{k},{v:.17e}\n"));
    }
    write_text_atomic(&out_dir.join("misfit.csv"), &misfit)?;

    let mut eta = String::from("iter,coefficients...\n");
    for (k, e) in output.eta_history.iter().enumerate() {
        eta.push_str(&format!("{},{}\n", k + 1, csv_line(e.iter().cloned())));
    }
    write_text_atomic(&out_dir.join("eta.csv"), &eta)?;

    for (k, c) in output.c_history.iter().enumerate() {
        io::write_grid_fields(
            &out_dir.join(format!("c_{:03}.rwiv", k + 1)),
            &resolved.grid,
            &[c],
        )?;
    }
    io::write_grid_fields(&out_dir.join("c_final.rwiv"), &resolved.grid, &[&output.state.c_k.c])?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_invert(
    scenario: &Path,
    cube_dir: &Path,
    approach: Approach,
    reg: Regularizer,
    gamma: Option<f64>,
    basis: Option<BasisArg>,
    iters: Option<usize>,
    noise_level: Option<f64>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<(), Error> {
    let mut scenario = Scenario::load(scenario)?;
    if let Some(b) = basis {
        scenario.inversion.basis = b.name().into();
    }
    let resolved = scenario.resolve()?;
    let mut cube = io::read_cube(&cube_dir.join("cube.rwic"))?;
    if let Some(level) = noise_level {
        cube = add_noise(&cube, level, seed.unwrap_or(resolved.scenario.noise.seed))?;
    }

    let mut config = resolved.inversion_config(approach, reg);
    if let Some(g) = gamma {
        config.gamma = g;
    }
    if let Some(it) = iters {
        config.max_iters = it;
    }
    let setup = resolved.inversion_setup()?;
    let output = invert(&config, &cube, &setup)?;
    write_run_outputs(out_dir, &resolved, &output)?;
    println!(
        "{} + {}: misfit {:.4e} -> {:.4e} in {} iterations (mass eps {}){}",
        approach.name(),
        reg.name(),
        output.state.misfit_history.first().unwrap_or(&f64::NAN),
        output.state.misfit_history.last().unwrap_or(&f64::NAN),
        output.state.iteration,
        output.effective_mass_eps,
        if output.converged { ", converged" } else { "" }
    );
    Ok(())
}

fn cmd_verify(scenario: &Path, list: bool) -> Result<bool, Error> {
    if list {
        for name in verify::CHECK_NAMES {
            println!("{name}");
        }
        return Ok(true);
    }
    let resolved = load_resolved(scenario)?;
    let results = verify::run_all(resolved)?;
    let mut all_ok = true;
    for r in &results {
        println!("{} {:<24} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_ok &= r.passed;
    }
    Ok(all_ok)
}

fn cmd_bench(scenario: &Path, out_dir: &Path) -> Result<(), Error> {
    let resolved = load_resolved(scenario)?;
    let cube = make_data_cube(
        &resolved.medium,
        &resolved.array,
        &resolved.pulse,
        &resolved.time_grid,
        &resolved.boundaries,
    )?;
    let cube = add_noise(&cube, resolved.scenario.noise.level, resolved.scenario.noise.seed)?;
    let setup = resolved.inversion_setup()?;

    let approaches = [Approach::Rom1, Approach::Rom2, Approach::Fwi, Approach::Ideal];
    let mut histories: Vec<Vec<f64>> = Vec::new();
    for &a in &approaches {
        let config = resolved.inversion_config(a, Regularizer::Tikhonov);
        let output = invert(&config, &cube, &setup)?;
        write_run_outputs(&out_dir.join(a.name()), &resolved, &output)?;
        histories.push(output.state.misfit_history.clone());
    }

    let rows = histories.iter().map(|h| h.len()).max().unwrap_or(0);
    let mut table = String::from("iter,rom1,rom2,fwi,ideal\n");
    println!("iter      rom1      rom2       fwi     ideal");
    for k in 0..rows {
        let cells: Vec<f64> = histories
            .iter()
            .map(|h| h.get(k).or(h.last()).copied().unwrap_or(f64::NAN))
            .collect();
        table.push_str(&format!("{k},{}\n", csv_line(cells.iter().cloned())));
        println!(
            "{k:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            cells[0], cells[1], cells[2], cells[3]
        );
    }
    std::fs::create_dir_all(out_dir)?;
    write_text_atomic(&out_dir.join("bench.csv"), &table)?;
    let _ = relative_misfit(&cube, &cube); // keep the misfit symbol used
    Ok(())
}

fn run() -> Result<bool, Error> {
    if let Ok(threads) = std::env::var("RWI_THREADS") {
        if let Ok(count) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(count).build_global();
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Synthesize { scenario, out_dir } => {
            cmd_synthesize(&scenario, &out_dir)?;
            Ok(true)
        }
        Command::Invert {
            scenario,
            cube_dir,
            approach,
            reg,
            gamma,
            basis,
            iters,
            noise_level,
            seed,
            out_dir,
        } => {
            cmd_invert(
                &scenario,
                &cube_dir,
                approach.into(),
                reg.into(),
                gamma,
                basis,
                iters,
                noise_level,
                seed,
                &out_dir,
            )?;
            Ok(true)
        }
        Command::Verify { scenario, list } => cmd_verify(&scenario, list),
        Command::Bench { scenario, out_dir } => {
            cmd_bench(&scenario, &out_dir)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
