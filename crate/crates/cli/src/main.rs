mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esdg_core::experiments::{preset, preset_names, Experiment, ExperimentConfig, OfflineArtifacts};
use esdg_core::fom::{EntropyDiagnostics, Trajectory};
use esdg_core::io;
use esdg_core::pod::{build_snapshots, weighted_pod};
use esdg_core::rom::ViscosityForm;
use esdg_core::tables::{collect_results, long_rows, table_rows, table_spec, CellFormat, TABLE_IDS};
use esdg_core::{EsdgError, Result};
use plot::{Plot, Series};

/// Entropy-stable DG reduced-order model experiments.
#[derive(Parser)]
#[command(name = "esdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and store its trajectory and entropy diagnostics.
    Fom(RunArgs),
    /// Build the POD basis and hyper-reduced operators from a stored trajectory.
    Offline(RunArgs),
    /// Run the reduced-order model from stored offline artifacts.
    Rom(RunArgs),
    /// Assemble result tables from stored sweep runs.
    Table(TableArgs),
    /// List the shipped presets, or print one as TOML.
    Presets {
        /// Preset to print.
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of POD modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Skip hyper-reduction (offline) or run the Galerkin ROM (rom).
    #[arg(long)]
    no_hyperreduction: bool,
    /// Append entropy-variable snapshots to the POD.
    #[arg(long, overrides_with = "no_enrich")]
    enrich: bool,
    #[arg(long, overrides_with = "enrich")]
    no_enrich: bool,
    /// Use the entropy-stable viscosity discretization in the ROM.
    #[arg(long)]
    es_viscosity: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Tables to assemble (`table1` .. `table6`, or `all`).
    #[arg(long = "table", required = true, num_args = 1..)]
    tables: Vec<String>,
    /// Output directory; sweep runs are stored under `<out>/runs`.
    #[arg(long, default_value = "out/tables")]
    out: PathBuf,
    /// Run missing sweep cases instead of reporting them.
    #[arg(long)]
    compute: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(EsdgError::config("--config", "give --config <path> or --preset <name>")),
        };
        if let Some(n) = self.modes {
            cfg.pod.modes = n;
        }
        if self.enrich {
            cfg.pod.enrich = true;
        }
        if self.no_enrich {
            cfg.pod.enrich = false;
        }
        if self.no_hyperreduction {
            cfg.hyperreduction.enabled = false;
        }
        if self.es_viscosity {
            cfg.rom.viscosity_form = ViscosityForm::EntropyStable;
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, out))
    }
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn diagnostics_rows(times: &[f64], diags: &[EntropyDiagnostics]) -> Vec<Vec<String>> {
    times
        .iter()
        .zip(diags)
        .map(|(t, d)| vec![fmt(*t), fmt(d.convective), fmt(d.viscous_dissipation), fmt(d.total_entropy)])
        .collect()
}

const DIAG_HEADER: [&str; 4] = ["time", "convective", "viscous_dissipation", "total_entropy"];

fn entropy_plot(title: &str, times: &[f64], diags: &[EntropyDiagnostics]) -> Plot {
    let series = |f: fn(&EntropyDiagnostics) -> f64| times.iter().zip(diags).map(|(t, d)| (*t, f(d))).collect();
    Plot::new(title, "t", "entropy rate")
        .with(Series::line("|convective|", series(|d| d.convective.abs())))
        .with(Series::line("viscous dissipation", series(|d| d.viscous_dissipation)))
        .log_y()
}

fn write_svg(path: &Path, plot: &Plot) -> Result<()> {
    fs::write(path, plot.to_svg())?;
    Ok(())
}

/// First component along the domain; in 2D the row of nodes closest to the
/// horizontal mid-line.
fn first_component_slice(exp: &Experiment, state: &[f64], nodes: Option<&[usize]>) -> Vec<(f64, f64)> {
    let ops = &exp.fom.ops;
    let nn = ops.num_nodes();
    let mid = if ops.dim == 2 {
        let [a, b] = exp.config.mesh.bounds[1];
        let c = 0.5 * (a + b);
        let closest = (0..nn).map(|i| (ops.coords[(i, 1)] - c).abs()).fold(f64::INFINITY, f64::min);
        Some((c, closest))
    } else {
        None
    };
    let keep = |i: usize| match mid {
        Some((c, d)) => ((ops.coords[(i, 1)] - c).abs() - d).abs() < 1e-12,
        None => true,
    };
    let mut pts: Vec<(f64, f64)> = match nodes {
        Some(idx) => idx.iter().copied().filter(|&i| keep(i)).map(|i| (ops.coords[(i, 0)], state[i])).collect(),
        None => (0..nn).filter(|&i| keep(i)).map(|i| (ops.coords[(i, 0)], state[i])).collect(),
    };
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn cmd_fom(args: &RunArgs) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let exp = Experiment::new(cfg)?;
    let dir = out.join("fom");
    fs::create_dir_all(&dir)?;
    fs::write(out.join("config.toml"), exp.config.to_toml())?;
    let traj = exp.run_fom()?;
    io::save_trajectory(&dir, "trajectory", &traj)?;
    let diags = exp.fom_diagnostics(&traj)?;
    io::write_csv(&dir.join("diagnostics.csv"), &DIAG_HEADER, &diagnostics_rows(&traj.times, &diags))?;
    let analytic = exp.fom_analytic_error(&traj);
    io::write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "experiment": exp.config.name,
            "nodes": exp.fom.num_nodes(),
            "accepted_steps": traj.stats.accepted,
            "rejected_steps": traj.stats.rejected,
            "rhs_evaluations": traj.stats.rhs_evaluations,
            "wall_seconds": traj.wall_seconds,
            "analytic_error": analytic,
        }),
    )?;
    write_svg(&dir.join("entropy.svg"), &entropy_plot(&format!("{}: full-order entropy", exp.config.name), &traj.times, &diags))?;
    write_svg(
        &dir.join("solution.svg"),
        &Plot::new(format!("{}: t = {}", exp.config.name, exp.config.time.t_final), "x", "u[0]")
            .with(Series::line("FOM", first_component_slice(&exp, traj.final_state(), None))),
    )?;
    println!(
        "fom: {} nodes, {} accepted steps, {:.2} s",
        exp.fom.num_nodes(),
        traj.stats.accepted,
        traj.wall_seconds
    );
    if let Some(e) = analytic {
        println!("fom: relative error to analytic solution {e:.3e}");
    }
    println!("fom: wrote {}", dir.display());
    Ok(())
}

fn load_fom(exp: &Experiment, out: &Path) -> Result<Trajectory> {
    let dir = out.join("fom");
    if !dir.join("trajectory.esdg").exists() {
        return Err(EsdgError::config(
            dir.display().to_string(),
            "no stored full-order trajectory; run `esdg fom` with the same configuration first",
        ));
    }
    let traj = io::load_trajectory(&dir, "trajectory")?;
    if traj.states.first().map(Vec::len) != Some(exp.fom.state_len()) {
        return Err(EsdgError::config(
            dir.display().to_string(),
            "stored trajectory does not match the configured mesh and law",
        ));
    }
    Ok(traj)
}

fn cmd_offline(args: &RunArgs) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let exp = Experiment::new(cfg)?;
    let traj = load_fom(&exp, &out)?;
    let art = exp.offline(&traj)?;
    let dir = out.join("offline");
    art.save(&dir, &exp)?;

    // Singular values with and without entropy-variable enrichment.
    let mut plot = Plot::new(format!("{}: snapshot singular values", exp.config.name), "index", "singular value").log_y();
    for (enrich, stem) in [(false, "singular_values_plain"), (true, "singular_values_enriched")] {
        let snap = build_snapshots(&traj, exp.law(), enrich)?;
        let full = weighted_pod(&snap, &exp.fom.ops.weights, 1)?;
        let rows: Vec<Vec<String>> = full
            .singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| vec![(k + 1).to_string(), fmt(*s)])
            .collect();
        io::write_csv(&dir.join(format!("{stem}.csv")), &["index", "singular_value"], &rows)?;
        let label = if enrich { "enriched" } else { "plain" };
        plot = plot.with(Series::markers(
            label,
            full.singular_values.iter().enumerate().map(|(k, s)| ((k + 1) as f64, *s)).collect(),
        ));
    }
    write_svg(&dir.join("singular_values.svg"), &plot)?;

    let (volume, boundary) = art
        .hyperreduction
        .as_ref()
        .map_or((None, None), |h| (Some(h.quadrature.len()), Some(h.boundary_points.len())));
    io::write_json(
        &dir.join("nodes.json"),
        &serde_json::json!({
            "modes": art.basis.num_modes(),
            "energy_residual": art.energy_residual(),
            "volume_nodes": volume,
            "boundary_nodes": boundary,
        }),
    )?;
    println!(
        "offline: N = {}, energy residual {:.3e}",
        art.basis.num_modes(),
        art.energy_residual()
    );
    if let (Some(v), Some(b)) = (volume, boundary) {
        println!("offline: {v} hyper-reduced volume nodes, {b} boundary nodes");
    }
    println!("offline: wrote {}", dir.display());
    Ok(())
}

fn cmd_rom(args: &RunArgs) -> Result<()> {
    let (cfg, out) = args.resolve()?;
    let exp = Experiment::new(cfg)?;
    let traj = load_fom(&exp, &out)?;
    let art_dir = out.join("offline");
    if !art_dir.join("manifest.json").exists() {
        return Err(EsdgError::config(
            art_dir.display().to_string(),
            "no offline artifacts; run `esdg offline` with the same configuration first",
        ));
    }
    let art = OfflineArtifacts::load(&art_dir, &exp)?;
    if art.basis.num_modes() != exp.config.pod.modes {
        return Err(EsdgError::config(
            "pod.modes",
            format!(
                "artifacts hold {} modes, the configuration asks for {}; rerun `esdg offline`",
                art.basis.num_modes(),
                exp.config.pod.modes
            ),
        ));
    }
    let hyperreduced = !args.no_hyperreduction;
    let run = exp.run_rom(&art, &traj, hyperreduced)?;
    let rom = exp.rom_problem(&art, hyperreduced)?;
    let dir = out.join(if hyperreduced { "rom-hr" } else { "rom-galerkin" });
    fs::create_dir_all(&dir)?;
    io::save_trajectory(&dir, "trajectory", &run.trajectory)?;
    io::write_csv(
        &dir.join("entropy.csv"),
        &DIAG_HEADER,
        &diagnostics_rows(&run.trajectory.times, &run.diagnostics),
    )?;
    io::write_json(
        &dir.join("report.json"),
        &serde_json::json!({
            "modes": rom.num_modes(),
            "hyperreduced": hyperreduced,
            "viscosity_form": exp.config.rom.viscosity_form,
            "relative_error": run.error,
            "volume_nodes": run.volume_nodes,
            "boundary_nodes": run.boundary_nodes,
            "accepted_steps": run.trajectory.stats.accepted,
            "rejected_steps": run.trajectory.stats.rejected,
            "fom_accepted_steps": traj.stats.accepted,
            "wall_seconds": run.trajectory.wall_seconds,
            "fom_wall_seconds": traj.wall_seconds,
            "max_abs_convective": run.diagnostics.iter().map(|d| d.convective.abs()).fold(0.0, f64::max),
            "min_viscous_dissipation": run.diagnostics.iter().map(|d| d.viscous_dissipation).fold(f64::INFINITY, f64::min),
        }),
    )?;
    write_svg(
        &dir.join("entropy.svg"),
        &entropy_plot(&format!("{}: ROM entropy, N = {}", exp.config.name, rom.num_modes()), &run.trajectory.times, &run.diagnostics),
    )?;
    let rom_state = rom.reconstruct(run.trajectory.final_state());
    let marker_nodes: Option<Vec<usize>> = rom.hr.as_ref().map(|h| h.quadrature.nodes.clone());
    write_svg(
        &dir.join("solution.svg"),
        &Plot::new(format!("{}: t = {}, N = {}", exp.config.name, exp.config.time.t_final, rom.num_modes()), "x", "u[0]")
            .with(Series::line("FOM", first_component_slice(&exp, traj.final_state(), None)))
            .with(Series::markers("ROM", first_component_slice(&exp, &rom_state, marker_nodes.as_deref()))),
    )?;
    println!(
        "rom: N = {}, {} nodes, relative error {:.3e}",
        rom.num_modes(),
        run.volume_nodes,
        run.error
    );
    println!(
        "rom: {} accepted steps ({} for the FOM), {:.3} s online",
        run.trajectory.stats.accepted, traj.stats.accepted, run.trajectory.wall_seconds
    );
    println!("rom: wrote {}", dir.display());
    Ok(())
}

fn cmd_table(args: &TableArgs) -> Result<()> {
    let ids: Vec<String> = if args.tables.iter().any(|t| t == "all") {
        TABLE_IDS.iter().map(|s| s.to_string()).collect()
    } else {
        args.tables.clone()
    };
    let specs = ids.iter().map(|id| table_spec(id)).collect::<Result<Vec<_>>>()?;
    let run_dir = args.out.join("runs");
    // Report every missing run across all requested tables at once.
    let mut missing = Vec::new();
    let mut collected = Vec::new();
    for spec in &specs {
        match collect_results(spec, &run_dir, args.compute) {
            Ok(r) => collected.push((spec, r)),
            Err(EsdgError::Config { message, .. }) if !args.compute => missing.push(message),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(EsdgError::config(run_dir.display().to_string(), missing.join("\n")));
    }
    fs::create_dir_all(&args.out)?;
    for (spec, results) in collected {
        let (header, rows) = table_rows(spec, &results);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        io::write_csv(&args.out.join(format!("{}.csv", spec.id)), &header, &rows)?;
        let (lh, lr) = long_rows(&results);
        io::write_csv(&args.out.join(format!("{}_runs.csv", spec.id)), &lh, &lr)?;
        let mut plot = match spec.format {
            CellFormat::Steps => Plot::new(spec.title, "N", "accepted steps"),
            _ => Plot::new(spec.title, "N", "relative error").log_y(),
        };
        for (case, r) in spec.cases.iter().zip(&results) {
            let pts = r
                .roms
                .iter()
                .filter_map(|s| {
                    let y = match spec.format {
                        CellFormat::Steps => s.accepted_steps as f64,
                        _ => s.error?,
                    };
                    Some((s.modes? as f64, y))
                })
                .collect();
            plot = plot.with(Series::line(case.column.clone(), pts));
        }
        write_svg(&args.out.join(format!("{}.svg", spec.id)), &plot)?;
        println!("{}: {}", spec.id, spec.title);
        println!("  {}", header.join(" | "));
        for row in &rows {
            println!("  {}", row.join(" | "));
        }
    }
    Ok(())
}

fn cmd_presets(name: Option<&str>) -> Result<()> {
    match name {
        Some(n) => print!("{}", preset(n)?.to_toml()),
        None => {
            for n in preset_names() {
                println!("{n}");
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ESDG_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| EsdgError::config("ESDG_THREADS", format!("expected a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| EsdgError::config("ESDG_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Fom(a) => cmd_fom(a),
        Command::Offline(a) => cmd_offline(a),
        Command::Rom(a) => cmd_rom(a),
        Command::Table(a) => cmd_table(a),
        Command::Presets { name } => cmd_presets(name.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
