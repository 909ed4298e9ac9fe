//! Command-line front end: generation, lattices, descriptors,
//! homogenization, the parametric studies, and file validation.
//!
//! One structured TOML config document per run supplies generator
//! parameters, phases, and study settings; flags override config fields;
//! no environment variables are consulted. Exit codes: 0 success, 1 domain
//! error, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::descriptors::{compute_descriptors, DescriptorConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    clustering_variants, equivalence_workflow, mnn_series, n_fibers_for, stiffness_cloud,
    sweep_min_gap, write_manifest_for, CloudSpec, EquivalenceSpec, MnnSpec, Regime, SweepSpec,
    VariantsSpec,
};
use crate::generate::{
    depleted_hexagonal, hexagonal_lattice, srm_generate, DepletionPattern, RadiusDist, SrmParams,
};
use crate::geometry::{validate, volume_fraction, Domain};
use crate::homogenize::{effective_properties, BcMode, ElasticPhase, Phases};
use crate::io::{
    load_microstructure, save_microstructure, write_distribution_csv, write_pair_csv,
    write_results_csv, write_ripley_csv, ResultRow, RunManifest,
};

#[derive(Parser)]
#[command(
    name = "rvelab",
    version,
    about = "Generate, quantify, and homogenize periodic fiber microstructures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a periodic fiber microstructure.
    Gen(GenArgs),
    /// Build a hexagonal (optionally depleted) lattice.
    Lattice(LatticeArgs),
    /// Compute spatial descriptors of a stored microstructure.
    Stats(StatsArgs),
    /// Compute effective elastic properties of a stored microstructure.
    Homog(HomogArgs),
    /// Run the minimum-gap stiffness sweep.
    Sweep(SweepArgs),
    /// Run the stiffness-cloud study with envelopes.
    Cloud(CloudArgs),
    /// Run the MNN-stiffness series (optionally with morphology variants).
    Mnn(MnnArgs),
    /// Run the statistical-equivalence workflow on a measured fiber table.
    Equiv(EquivArgs),
    /// Check a stored microstructure for overlaps and report its summary.
    Validate(ValidateArgs),
}

/// Entry point used by `main` and by integration tests.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and exit 0; real usage
            // errors print the synopsis to stderr and exit 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Lattice(a) => cmd_lattice(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Homog(a) => cmd_homog(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Cloud(a) => cmd_cloud(a),
        Command::Mnn(a) => cmd_mnn(a),
        Command::Equiv(a) => cmd_equiv(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PhaseSpec {
    e: f64,
    nu: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PhasesSpec {
    fiber: PhaseSpec,
    matrix: PhaseSpec,
}

impl PhasesSpec {
    fn build(&self) -> Result<Phases> {
        Ok(Phases {
            fiber: ElasticPhase::new(self.fiber.e, self.fiber.nu)?,
            matrix: ElasticPhase::new(self.matrix.e, self.matrix.nu)?,
        })
    }
}

/// One run's configuration document.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    srm: Option<SrmParams>,
    phases: Option<PhasesSpec>,
    sweep: Option<SweepConfig>,
    cloud: Option<CloudConfig>,
    mnn: Option<MnnConfig>,
    equiv: Option<EquivConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    min_gaps: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    nx: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudConfig {
    vf_grid: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    l_over_r: Option<f64>,
    min_gap: Option<f64>,
    nx: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MnnConfig {
    vf: Option<f64>,
    n_snapshots: Option<usize>,
    steps_per_snapshot: Option<usize>,
    migration: Option<f64>,
    seeds: Option<Vec<u64>>,
    nx: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EquivConfig {
    columns: Option<String>,
    migration_intensity: Option<f64>,
    min_gap: Option<f64>,
    l_over_r: Option<f64>,
    seeds: Option<Vec<u64>>,
    nx: Option<usize>,
    reconstructed_nx: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Parse `--phases`: a named preset or an `Ef,nuf,Em,num` quadruple.
fn parse_phases(spec: &str) -> Result<Phases> {
    if spec == "glass_epoxy" {
        return Ok(Phases {
            fiber: ElasticPhase::new(82.0, 0.22)?,
            matrix: ElasticPhase::new(3.24, 0.34)?,
        });
    }
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::InvalidInput(format!(
            "--phases takes 'glass_epoxy' or 'Ef,nuf,Em,num', got {spec:?}"
        )));
    }
    let mut vals = [0.0; 4];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("--phases value {p:?}: {e}")))?;
    }
    Ok(Phases {
        fiber: ElasticPhase::new(vals[0], vals[1])?,
        matrix: ElasticPhase::new(vals[2], vals[3])?,
    })
}

/// Resolve phases from flag or config; physics has no silent default.
fn resolve_phases(flag: Option<&str>, config: &RunConfig) -> Result<Phases> {
    if let Some(spec) = flag {
        return parse_phases(spec);
    }
    if let Some(spec) = &config.phases {
        return spec.build();
    }
    Err(Error::InvalidInput(
        "no phases given: pass --phases or a [phases] config section".into(),
    ))
}

fn parse_bc(name: &str) -> Result<BcMode> {
    match name {
        "periodic" => Ok(BcMode::Periodic),
        "mixed" => Ok(BcMode::Mixed),
        "displacement" => Ok(BcMode::Displacement),
        other => Err(Error::InvalidInput(format!(
            "unknown boundary condition {other:?} (periodic, mixed, displacement)"
        ))),
    }
}

fn seed_list(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

// ---------------------------------------------------------------------------
// gen / lattice
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// TOML config document (section [srm]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides config).
    #[arg(long)]
    seed: Option<u64>,
    /// Fiber count.
    #[arg(long)]
    n: Option<usize>,
    /// Target volume fraction.
    #[arg(long)]
    vf: Option<f64>,
    /// Migration intensity (mean radii per step).
    #[arg(long)]
    migration: Option<f64>,
    /// Minimum surface separation as a fraction of the mean radius pair.
    #[arg(long)]
    min_gap: Option<f64>,
    /// Log-std of the log-normal diameter distribution (0 = monodisperse).
    #[arg(long)]
    lognormal_sigma: Option<f64>,
    /// Log-mean of the log-normal diameter distribution.
    #[arg(long)]
    lognormal_mu: Option<f64>,
    /// Output microstructure document.
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let mut params = config.srm.unwrap_or_default();
    if let Some(v) = a.seed {
        params.seed = v;
    }
    if let Some(v) = a.n {
        params.n_fibers = v;
    }
    if let Some(v) = a.vf {
        params.target_vf = v;
    }
    if let Some(v) = a.migration {
        params.migration_intensity = v;
    }
    if let Some(v) = a.min_gap {
        params.min_gap = v;
    }
    if a.lognormal_sigma.is_some() || a.lognormal_mu.is_some() {
        params.radius_dist = RadiusDist::Lognormal {
            mu: a.lognormal_mu.unwrap_or(0.0),
            sigma: a.lognormal_sigma.unwrap_or(0.0),
        };
    }
    let (ms, trace) = srm_generate(&params, &Domain::unit())?;
    save_microstructure(&ms, &a.out)?;
    println!(
        "generated {} fibers at V_f = {:.4} in {} steps -> {}",
        ms.n_fibers(),
        volume_fraction(&ms),
        trace.steps_used,
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct LatticeArgs {
    /// Volume fraction (the base packing when depleting).
    #[arg(long)]
    vf: f64,
    /// Lattice cells along x.
    #[arg(long, default_value_t = 2)]
    cells: usize,
    /// Remove a superlattice of sites: 'third' or 'quarter'.
    #[arg(long)]
    deplete: Option<String>,
    /// Fiber diameter in the file's units.
    #[arg(long, default_value_t = 1.0)]
    diameter: f64,
    /// Output microstructure document.
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_lattice(a: LatticeArgs) -> Result<()> {
    let ms = match a.deplete.as_deref() {
        None => hexagonal_lattice(a.vf, a.cells, a.diameter)?,
        Some("third") => depleted_hexagonal(a.vf, a.cells, &DepletionPattern::Third, a.diameter)?,
        Some("quarter") => {
            depleted_hexagonal(a.vf, a.cells, &DepletionPattern::Quarter, a.diameter)?
        }
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown depletion pattern {other:?} (third, quarter)"
            )))
        }
    };
    save_microstructure(&ms, &a.out)?;
    println!(
        "lattice: {} fibers at V_f = {:.4} -> {}",
        ms.n_fibers(),
        volume_fraction(&ms),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stats / homog / validate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct StatsArgs {
    /// Input microstructure document.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma list among nn, voronoi, lvf, ripley, pair (default all).
    #[arg(long, default_value = "nn,voronoi,lvf,ripley,pair")]
    descriptors: String,
    /// Directory for the descriptor CSVs.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File-name stem of the CSVs (default: input stem).
    #[arg(long)]
    stem: Option<String>,
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let ms = load_microstructure(&a.input)?;
    let set = compute_descriptors(&ms, &DescriptorConfig::default())?;
    let stem = a.stem.clone().unwrap_or_else(|| {
        a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or("stats".into())
    });
    std::fs::create_dir_all(&a.out_dir)?;
    let mut written = Vec::new();
    for kind in a.descriptors.split(',').map(str::trim) {
        let path = a.out_dir.join(format!("{stem}_{kind}.csv"));
        match kind {
            "nn" => write_distribution_csv(&set.nn, &path)?,
            "voronoi" => write_distribution_csv(&set.voronoi_neighbor, &path)?,
            "lvf" => write_distribution_csv(&set.lvf, &path)?,
            "ripley" => write_ripley_csv(&set.ripley, &path)?,
            "pair" => write_pair_csv(&set.pair, &path)?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown descriptor {other:?} (nn, voronoi, lvf, ripley, pair)"
                )))
            }
        }
        written.push(path);
    }
    let manifest = RunManifest::new(
        "stats",
        &serde_json::json!({
            "input": a.input.display().to_string(),
            "descriptors": a.descriptors,
            "provenance": ms.meta,
        }),
        ms.meta.seed.into_iter().collect(),
    );
    crate::io::write_manifest(&manifest, &a.out_dir.join(format!("{stem}.manifest.json")))?;
    println!(
        "{} fibers, mean NN distance {:.4} R; wrote {}",
        set.n_fibers,
        set.mean_nn,
        written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

#[derive(Args)]
struct HomogArgs {
    /// Input microstructure document.
    #[arg(long = "in")]
    input: PathBuf,
    /// 'glass_epoxy' or 'Ef,nuf,Em,num'.
    #[arg(long)]
    phases: Option<String>,
    /// TOML config document ([phases] section).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid cells along x.
    #[arg(long, default_value_t = 256)]
    nx: usize,
    /// Boundary conditions: periodic, mixed, or displacement.
    #[arg(long, default_value = "periodic")]
    bc: String,
    /// Row label in the results CSV (default: input stem).
    #[arg(long)]
    name: Option<String>,
    /// Output results CSV.
    #[arg(short, long)]
    out: PathBuf,
}

fn cmd_homog(a: HomogArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let phases = resolve_phases(a.phases.as_deref(), &config)?;
    let mode = parse_bc(&a.bc)?;
    let ms = load_microstructure(&a.input)?;
    let props = effective_properties(&ms, &phases, a.nx, mode)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or("ms".into())
    });
    let row = ResultRow::new(&name, mode, &props);
    write_results_csv(&[row], &a.out)?;
    let manifest = RunManifest::new(
        "homog",
        &serde_json::json!({
            "input": a.input.display().to_string(),
            "phases": phases,
            "nx": a.nx,
            "bc": a.bc,
        }),
        ms.meta.seed.into_iter().collect(),
    );
    crate::io::write_manifest(&manifest, &a.out.with_extension("manifest.json"))?;
    println!(
        "E_x = {:.5}, E_y = {:.5}, E_z = {:.5}, G_xy = {:.5}, nu_xy = {:.4} -> {}",
        props.e_x,
        props.e_y,
        props.e_z,
        props.g_xy,
        props.nu_xy,
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct ValidateArgs {
    /// Input microstructure document.
    #[arg(long = "in")]
    input: PathBuf,
    /// Overlap tolerance in length units (default 1e-9 mean radii).
    #[arg(long)]
    tol: Option<f64>,
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let ms = load_microstructure(&a.input)?;
    let report = validate(&ms, a.tol);
    println!(
        "{} fibers, V_f = {:.4}, min surface gap = {:.3e}{}",
        report.n_fibers,
        report.volume_fraction,
        report.min_surface_gap,
        report
            .worst_pair
            .map(|(i, j)| format!(" (pair {i}-{j})"))
            .unwrap_or_default()
    );
    if report.ok {
        println!("ok");
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "overlap beyond tolerance: min surface gap {:.3e} < -{:.3e}",
            report.min_surface_gap, report.overlap_tol
        )))
    }
}

// ---------------------------------------------------------------------------
// Experiment commands
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    /// TOML config document ([sweep] and [phases] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// 'glass_epoxy' or 'Ef,nuf,Em,num'.
    #[arg(long)]
    phases: Option<String>,
    /// Volume fraction.
    #[arg(long, default_value_t = 0.65)]
    vf: f64,
    /// Window size in mean radii (sets the fiber count).
    #[arg(long, default_value_t = 40.0)]
    l_over_r: f64,
    /// Number of seeds per sweep point (1..=N).
    #[arg(long)]
    seeds: Option<u64>,
    /// Fine grid level of the two-level solves.
    #[arg(long)]
    nx: Option<usize>,
    /// Base random seed offset added to every seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let phases = resolve_phases(a.phases.as_deref(), &config)?;
    let cfg = config.sweep.as_ref();
    let seeds: Vec<u64> = match (a.seeds, cfg.and_then(|c| c.seeds.clone())) {
        (Some(n), _) => seed_list(n),
        (None, Some(list)) => list,
        (None, None) => seed_list(10),
    };
    let seeds: Vec<u64> = seeds.iter().map(|s| s.wrapping_add(a.seed)).collect();
    let spec = SweepSpec {
        base: SrmParams {
            n_fibers: n_fibers_for(a.vf, a.l_over_r),
            target_vf: a.vf,
            ..SrmParams::default()
        },
        min_gaps: cfg
            .and_then(|c| c.min_gaps.clone())
            .unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2, 0.1, 0.3]),
        seeds: seeds.clone(),
        regimes: vec![Regime::Clustered],
        phases,
        nx: a.nx.or(cfg.and_then(|c| c.nx)).unwrap_or(384),
    };
    let table = sweep_min_gap(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let path = a.out_dir.join("sweep.csv");
    table.write_csv(&path)?;
    write_manifest_for("sweep", &spec, &seeds, &path)?;
    println!("{} rows (hex reference {:.4}) -> {}", table.rows.len(), table.hex_e, path.display());
    Ok(())
}

#[derive(Args)]
struct CloudArgs {
    /// TOML config document ([cloud] and [phases] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// 'glass_epoxy' or 'Ef,nuf,Em,num'.
    #[arg(long)]
    phases: Option<String>,
    /// Number of seeds per cloud point (1..=N).
    #[arg(long)]
    seeds: Option<u64>,
    /// Fine grid level of the two-level solves.
    #[arg(long)]
    nx: Option<usize>,
    /// Base random seed offset added to every seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_cloud(a: CloudArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let phases = resolve_phases(a.phases.as_deref(), &config)?;
    let cfg = config.cloud.as_ref();
    let mut spec = CloudSpec::desk(phases, a.nx.or(cfg.and_then(|c| c.nx)).unwrap_or(384));
    if let Some(grid) = cfg.and_then(|c| c.vf_grid.clone()) {
        spec.vf_grid = grid;
    }
    if let Some(l) = cfg.and_then(|c| c.l_over_r) {
        spec.l_over_r = l;
    }
    if let Some(g) = cfg.and_then(|c| c.min_gap) {
        spec.min_gap = g;
    }
    spec.seeds = match (a.seeds, cfg.and_then(|c| c.seeds.clone())) {
        (Some(n), _) => seed_list(n),
        (None, Some(list)) => list,
        (None, None) => spec.seeds,
    };
    spec.seeds = spec.seeds.iter().map(|s| s.wrapping_add(a.seed)).collect();
    let table = stiffness_cloud(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let path = a.out_dir.join("cloud.csv");
    table.write_csv(&path)?;
    write_manifest_for("cloud", &spec, &spec.seeds, &path)?;
    println!("{} cloud points -> {}", table.points.len(), path.display());
    Ok(())
}

#[derive(Args)]
struct MnnArgs {
    /// TOML config document ([mnn] and [phases] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// 'glass_epoxy' or 'Ef,nuf,Em,num'.
    #[arg(long)]
    phases: Option<String>,
    /// Volume fraction.
    #[arg(long)]
    vf: Option<f64>,
    /// Number of seeds (1..=N).
    #[arg(long)]
    seeds: Option<u64>,
    /// Fine grid level of the two-level solves.
    #[arg(long)]
    nx: Option<usize>,
    /// Base random seed offset added to every seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the matched-MNN morphology variants.
    #[arg(long)]
    variants: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_mnn(a: MnnArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let phases = resolve_phases(a.phases.as_deref(), &config)?;
    let cfg = config.mnn.as_ref();
    let seeds: Vec<u64> = match (a.seeds, cfg.and_then(|c| c.seeds.clone())) {
        (Some(n), _) => seed_list(n),
        (None, Some(list)) => list,
        (None, None) => seed_list(3),
    };
    let seeds: Vec<u64> = seeds.iter().map(|s| s.wrapping_add(a.seed)).collect();
    let vf = a.vf.or(cfg.and_then(|c| c.vf)).unwrap_or(0.6);
    let nx = a.nx.or(cfg.and_then(|c| c.nx)).unwrap_or(384);
    let spec = MnnSpec {
        vf,
        l_over_r: 40.0,
        n_snapshots: cfg.and_then(|c| c.n_snapshots).unwrap_or(7),
        steps_per_snapshot: cfg.and_then(|c| c.steps_per_snapshot).unwrap_or(8),
        migration: cfg.and_then(|c| c.migration).unwrap_or(0.08),
        seeds: seeds.clone(),
        phases,
        nx,
    };
    let table = mnn_series(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let path = a.out_dir.join("mnn.csv");
    table.write_csv(&path)?;
    write_manifest_for("mnn", &spec, &seeds, &path)?;
    println!(
        "{} points, fit slope {:.4}, R^2 {:.4} -> {}",
        table.points.len(),
        table.fit.slope,
        table.fit.r_squared,
        path.display()
    );
    if a.variants {
        let vspec = VariantsSpec {
            vf,
            l_over_r: 40.0,
            seeds: seeds.clone(),
            phases,
            nx,
        };
        let vtable = clustering_variants(&vspec)?;
        let vpath = a.out_dir.join("variants.csv");
        vtable.write_csv(&vpath)?;
        write_manifest_for("mnn-variants", &vspec, &seeds, &vpath)?;
        println!(
            "variants: pockets {:.4}, random {:.4}, bundles {:.4} (spread {:.1}%, bracketed: {}) -> {}",
            vtable.mean_pockets,
            vtable.mean_random,
            vtable.mean_bundles,
            100.0 * vtable.spread,
            vtable.bracketed,
            vpath.display()
        );
    }
    Ok(())
}

#[derive(Args)]
struct EquivArgs {
    /// Measured fiber table (CSV of centers and diameters, micrometers).
    #[arg(long)]
    csv: PathBuf,
    /// Header names of the x, y, and diameter columns.
    #[arg(long, default_value = "x,y,d")]
    columns: String,
    /// TOML config document ([equiv] and [phases] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// 'glass_epoxy' or 'Ef,nuf,Em,num'.
    #[arg(long)]
    phases: Option<String>,
    /// Number of generated equivalents (1..=N).
    #[arg(long)]
    seeds: Option<u64>,
    /// Base random seed offset added to every seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_equiv(a: EquivArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let phases = resolve_phases(a.phases.as_deref(), &config)?;
    let cfg = config.equiv.as_ref();
    let seeds: Vec<u64> = match (a.seeds, cfg.and_then(|c| c.seeds.clone())) {
        (Some(n), _) => seed_list(n),
        (None, Some(list)) => list,
        (None, None) => seed_list(3),
    };
    let seeds: Vec<u64> = seeds.iter().map(|s| s.wrapping_add(a.seed)).collect();
    let spec = EquivalenceSpec {
        csv_path: a.csv.clone(),
        columns: cfg
            .and_then(|c| c.columns.clone())
            .unwrap_or_else(|| a.columns.clone()),
        migration_intensity: cfg.and_then(|c| c.migration_intensity).unwrap_or(0.03),
        min_gap: cfg.and_then(|c| c.min_gap).unwrap_or(0.005),
        l_over_r: cfg.and_then(|c| c.l_over_r).unwrap_or(40.0),
        seeds: seeds.clone(),
        phases,
        nx: cfg.and_then(|c| c.nx).unwrap_or(384),
        reconstructed_nx: cfg.and_then(|c| c.reconstructed_nx).unwrap_or(192),
    };
    let report = equivalence_workflow(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let path = a.out_dir.join("equiv.csv");
    report.write_csv(&seeds, &path)?;
    write_manifest_for("equiv", &spec, &seeds, &path)?;
    println!(
        "ingested {} fibers at V_f = {:.4}; reconstructed E/E_m = {:.4}, generated {:.4} +/- {:.4} ({:+.2}%)",
        report.n_ingested,
        report.ingested_vf,
        report.reconstructed_e,
        report.generated_mean,
        report.generated_std,
        100.0 * (report.generated_mean / report.reconstructed_e - 1.0)
    );
    println!("-> {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_flag_accepts_preset_and_quadruple() {
        let glass = parse_phases("glass_epoxy").unwrap();
        assert_eq!(glass.fiber.e, 82.0);
        assert_eq!(glass.matrix.nu, 0.34);
        let custom = parse_phases("25, 0.25, 1.0, 0.35").unwrap();
        assert_eq!(custom.fiber.e, 25.0);
        assert_eq!(custom.matrix.e, 1.0);
        assert!(parse_phases("25,0.25,1.0").is_err());
        assert!(parse_phases("a,b,c,d").is_err());
        // Validation runs on the parsed numbers.
        assert!(parse_phases("25,0.7,1.0,0.35").is_err());
    }

    #[test]
    fn bc_names_parse() {
        assert_eq!(parse_bc("periodic").unwrap(), BcMode::Periodic);
        assert_eq!(parse_bc("mixed").unwrap(), BcMode::Mixed);
        assert_eq!(parse_bc("displacement").unwrap(), BcMode::Displacement);
        assert!(parse_bc("free").is_err());
    }

    #[test]
    fn config_document_round_trips() {
        let text = r#"
            [srm]
            n_fibers = 100
            target_vf = 0.5
            swelling_rate = 0.02
            migration_intensity = 0.3
            min_gap = 0.01
            max_steps = 50000
            seed = 7

            [phases.fiber]
            e = 82.0
            nu = 0.22
            [phases.matrix]
            e = 3.24
            nu = 0.34

            [sweep]
            min_gaps = [0.001, 0.01]
            seeds = [1, 2]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let srm = cfg.srm.unwrap();
        assert_eq!(srm.n_fibers, 100);
        assert_eq!(srm.seed, 7);
        let phases = cfg.phases.unwrap().build().unwrap();
        assert_eq!(phases.fiber.e, 82.0);
        assert_eq!(cfg.sweep.unwrap().min_gaps.unwrap().len(), 2);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[srm]\nn_fiber = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn help_and_usage_exit_codes() {
        assert_eq!(run(["rvelab", "--help"]), 0);
        assert_eq!(run(["rvelab", "definitely-not-a-command"]), 2);
        assert_eq!(run(["rvelab", "gen", "--no-such-flag"]), 2);
    }
}
