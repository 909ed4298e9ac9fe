//! Persistence and ingestion: microstructure documents, fiber CSV export,
//! ImageJ-style micrograph import, descriptor and result tables, and run
//! manifests.
//!
//! Every writer goes through [`atomic_write`] (write to a sibling temp
//! file, then rename), numeric output uses round-trip precision, and the
//! microstructure document embeds enough provenance (seed, parameters,
//! generator) to regenerate it from the command line.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorSet, EmpiricalDistribution, KFunction, PairDistribution};
use crate::error::{Error, Result};
use crate::geometry::{disc_rect_intersection_area, Domain, Fiber, Microstructure, Provenance, Rect};
use crate::homogenize::{BcMode, EffectiveProperties};

/// Version tag written into every microstructure document; loading any
/// other version is refused rather than silently reinterpreted.
pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct FileDoc {
    schema_version: u64,
    units: String,
    domain: Domain,
    provenance: Provenance,
    /// (x, y, r) triples in the document's units.
    fibers: Vec<(f64, f64, f64)>,
}

/// Write bytes to `path` via a temporary sibling file and an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Save a microstructure as a schema-versioned JSON document (lossless
/// round trip: floats are printed with shortest-round-trip precision).
pub fn save_microstructure(ms: &Microstructure, path: &Path) -> Result<()> {
    let doc = FileDoc {
        schema_version: SCHEMA_VERSION,
        units: ms.meta.units.clone(),
        domain: ms.domain,
        provenance: ms.meta.clone(),
        fibers: ms.fibers.iter().map(|f| (f.x, f.y, f.r)).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Load a microstructure document, refusing unknown schema versions and
/// reporting parse failures with their position in the file.
pub fn load_microstructure(path: &Path) -> Result<Microstructure> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |detail: String| Error::Parse { path: path.display().to_string(), detail };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| parse_err("missing or non-integer schema_version".into()))?;
    if found != SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema { found, supported: SCHEMA_VERSION });
    }
    let doc: FileDoc = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
    let mut meta = doc.provenance;
    meta.units = doc.units;
    let fibers = doc.fibers.iter().map(|&(x, y, r)| Fiber::new(x, y, r)).collect();
    Microstructure::new(doc.domain, fibers, meta)
}

/// Format a float with full round-trip precision.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Export fiber centers and radii as `x,y,r` CSV with `#` provenance
/// comments.
pub fn export_fibers_csv(ms: &Microstructure, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# units: {}", ms.meta.units);
    let _ = writeln!(out, "# generator: {}", ms.meta.generator);
    if let Some(seed) = ms.meta.seed {
        let _ = writeln!(out, "# seed: {seed}");
    }
    let _ = writeln!(out, "# domain: {} x {} ({})", fmt_f64(ms.domain.lx), fmt_f64(ms.domain.ly),
        if ms.domain.periodic { "periodic" } else { "non-periodic" });
    out.push_str("x,y,r\n");
    for f in &ms.fibers {
        let _ = writeln!(out, "{},{},{}", fmt_f64(f.x), fmt_f64(f.y), fmt_f64(f.r));
    }
    atomic_write(path, out.as_bytes())
}

/// Crop window for micrograph ingestion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Crop {
    /// Inset the data extent by 2x the largest diameter on every side.
    Auto,
    Window(Rect),
}

/// What the ingestion found, before and after cropping.
#[derive(Clone, Debug, Serialize)]
pub struct IngestReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub window: [f64; 4],
    /// Fiber area inside the window (discs clipped exactly) over window area.
    pub volume_fraction: f64,
    pub mean_diameter: f64,
    pub max_diameter: f64,
}

/// Read an ImageJ-style `x,y,d` fiber table (micrometers, `#` comments,
/// named header) into a non-periodic microstructure on the crop window.
///
/// `columns` names the x, y, and diameter columns in the file's header
/// (default mapping `x,y,d`); pass it explicitly when the export used
/// different labels.
pub fn ingest_micrograph(path: &Path, crop: Crop, columns: &str) -> Result<(Microstructure, IngestReport)> {
    let parse_err = |detail: String| Error::Parse { path: path.display().to_string(), detail };
    let names: Vec<&str> = columns.split(',').map(str::trim).collect();
    if names.len() != 3 || names.iter().any(|n| n.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "column mapping must name three columns (x,y,diameter), got {columns:?}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(format!("column {name:?} not in header {headers:?}")))
    };
    let (cx, cy, cd) = (col(names[0])?, col(names[1])?, col(names[2])?);

    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            let raw = record
                .get(c)
                .ok_or_else(|| parse_err(format!("row {}: missing field {c}", idx + 2)))?;
            raw.parse::<f64>()
                .map_err(|e| parse_err(format!("row {}: {raw:?}: {e}", idx + 2)))
        };
        let (x, y, d) = (field(cx)?, field(cy)?, field(cd)?);
        if !(x.is_finite() && y.is_finite() && d.is_finite() && d > 0.0) {
            return Err(parse_err(format!(
                "row {}: coordinates must be finite and diameter positive (x={x}, y={y}, d={d})",
                idx + 2
            )));
        }
        rows.push((x, y, d));
    }
    if rows.is_empty() {
        return Err(parse_err("no data rows".into()));
    }

    let max_d = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let window = match crop {
        Crop::Window(r) => r,
        Crop::Auto => {
            let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &(x, y, _) in &rows {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            let inset = 2.0 * max_d;
            Rect::new(x0 + inset, y0 + inset, x1 - inset, y1 - inset)
        }
    };
    if !(window.width() > 0.0 && window.height() > 0.0) {
        return Err(Error::InvalidInput(format!(
            "crop window has no interior: [{}, {}] x [{}, {}]",
            window.x0, window.x1, window.y0, window.y1
        )));
    }

    let kept: Vec<(f64, f64, f64)> = rows
        .iter()
        .copied()
        .filter(|&(x, y, _)| x >= window.x0 && x <= window.x1 && y >= window.y0 && y <= window.y1)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidInput("no fibers inside the crop window".into()));
    }
    let clipped_area: f64 = kept
        .iter()
        .map(|&(x, y, d)| disc_rect_intersection_area(x, y, 0.5 * d, &window))
        .sum();
    let vf = clipped_area / window.area();
    let mean_d = kept.iter().map(|r| r.2).sum::<f64>() / kept.len() as f64;

    let meta = Provenance::new("micrograph-ingest", None, "um").with_params(&serde_json::json!({
        "source": path.display().to_string(),
        "columns": columns,
        "window": [window.x0, window.y0, window.x1, window.y1],
    }));
    let fibers = kept
        .iter()
        .map(|&(x, y, d)| Fiber::new(x - window.x0, y - window.y0, 0.5 * d))
        .collect();
    let ms = Microstructure::new(Domain::rect(window.width(), window.height()), fibers, meta)?;
    let report = IngestReport {
        n_input: rows.len(),
        n_kept: kept.len(),
        window: [window.x0, window.y0, window.x1, window.y1],
        volume_fraction: vf,
        mean_diameter: mean_d,
        max_diameter: max_d,
    };
    Ok((ms, report))
}

/// Write a binned distribution as `bin_left,bin_right,density`.
pub fn write_distribution_csv(d: &EmpiricalDistribution, path: &Path) -> Result<()> {
    let mut out = String::from("bin_left,bin_right,density\n");
    for i in 0..d.density.len() {
        let _ = writeln!(out, "{},{},{}", fmt_f64(d.bin_edges[i]), fmt_f64(d.bin_edges[i + 1]), fmt_f64(d.density[i]));
    }
    atomic_write(path, out.as_bytes())
}

/// Write Ripley's K as `h,K,K_poisson` (the Poisson reference is pi h^2).
pub fn write_ripley_csv(k: &KFunction, path: &Path) -> Result<()> {
    let mut out = String::from("h,K,K_poisson\n");
    for (h, kv) in k.h_values.iter().zip(&k.k_values) {
        let _ = writeln!(out, "{},{},{}", fmt_f64(*h), fmt_f64(*kv), fmt_f64(std::f64::consts::PI * h * h));
    }
    atomic_write(path, out.as_bytes())
}

/// Write the pair distribution as `h,g`.
pub fn write_pair_csv(g: &PairDistribution, path: &Path) -> Result<()> {
    let mut out = String::from("h,g\n");
    for (h, gv) in g.h_values.iter().zip(&g.g_values) {
        let _ = writeln!(out, "{},{}", fmt_f64(*h), fmt_f64(*gv));
    }
    atomic_write(path, out.as_bytes())
}

/// Write one CSV per descriptor under `dir`, named `{stem}_{kind}.csv`;
/// returns the paths written.
pub fn write_descriptor_set(set: &DescriptorSet, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let mut push = |p: PathBuf| paths.push(p);
    let p = dir.join(format!("{stem}_nn.csv"));
    write_distribution_csv(&set.nn, &p)?;
    push(p);
    let p = dir.join(format!("{stem}_voronoi.csv"));
    write_distribution_csv(&set.voronoi_neighbor, &p)?;
    push(p);
    let p = dir.join(format!("{stem}_lvf.csv"));
    write_distribution_csv(&set.lvf, &p)?;
    push(p);
    let p = dir.join(format!("{stem}_ripley.csv"));
    write_ripley_csv(&set.ripley, &p)?;
    push(p);
    let p = dir.join(format!("{stem}_pair.csv"));
    write_pair_csv(&set.pair, &p)?;
    push(p);
    Ok(paths)
}

/// One homogenization result: a row of the results CSV.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub name: String,
    pub bc_mode: BcMode,
    pub nx: usize,
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub g_xy: f64,
    pub nu_xy: f64,
    pub nu_yx: f64,
    pub nu_xz: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ResultRow {
    pub fn new(name: &str, mode: BcMode, props: &EffectiveProperties) -> Self {
        ResultRow {
            name: name.to_string(),
            bc_mode: mode,
            nx: props.diagnostics.nx,
            e_x: props.e_x,
            e_y: props.e_y,
            e_z: props.e_z,
            g_xy: props.g_xy,
            nu_xy: props.nu_xy,
            nu_yx: props.nu_yx,
            nu_xz: props.nu_xz,
            iterations: props.diagnostics.iterations.iter().copied().max().unwrap_or(0),
            residual: props.diagnostics.residuals.iter().copied().fold(0.0, f64::max),
        }
    }
}

fn bc_name(mode: BcMode) -> &'static str {
    match mode {
        BcMode::Periodic => "periodic",
        BcMode::Mixed => "mixed",
        BcMode::Displacement => "displacement",
    }
}

/// Write homogenization results, one row per (microstructure, bc mode, nx).
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut out = String::from("name,bc_mode,nx,e_x,e_y,e_z,g_xy,nu_xy,nu_yx,nu_xz,iterations,residual\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            bc_name(r.bc_mode),
            r.nx,
            fmt_f64(r.e_x),
            fmt_f64(r.e_y),
            fmt_f64(r.e_z),
            fmt_f64(r.g_xy),
            fmt_f64(r.nu_xy),
            fmt_f64(r.nu_yx),
            fmt_f64(r.nu_xz),
            r.iterations,
            fmt_f64(r.residual),
        );
    }
    atomic_write(path, out.as_bytes())
}

/// Reproducibility sidecar written next to every experiment table: the
/// command, its parameters, the seeds, and the build — no timestamps, so
/// identical runs produce identical artifacts.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new<P: Serialize>(command: &str, params: &P, seeds: Vec<u64>) -> Self {
        RunManifest {
            tool: "rvelab",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
            seeds,
        }
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization failed: {e}")))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{srm_generate, RadiusDist, SrmParams};
    use crate::geometry::volume_fraction;

    fn sample_ms() -> Microstructure {
        let params = SrmParams {
            n_fibers: 40,
            target_vf: 0.45,
            swelling_rate: 0.02,
            migration_intensity: 0.3,
            min_gap: 0.02,
            max_steps: 50_000,
            radius_dist: RadiusDist::Lognormal { mu: 0.0, sigma: 0.15 },
            seed: 77,
        };
        srm_generate(&params, &Domain::unit()).unwrap().0
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let ms = sample_ms();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ms.json");
        save_microstructure(&ms, &path).unwrap();
        let back = load_microstructure(&path).unwrap();
        assert_eq!(back.fibers.len(), ms.fibers.len());
        for (a, b) in ms.fibers.iter().zip(&back.fibers) {
            assert!(a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits() && a.r.to_bits() == b.r.to_bits());
        }
        assert_eq!(back.domain, ms.domain);
        assert_eq!(back.meta.seed, ms.meta.seed);
        assert_eq!(back.meta.units, ms.meta.units);
    }

    #[test]
    fn unknown_schema_version_is_refused() {
        let ms = sample_ms();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ms.json");
        save_microstructure(&ms, &path).unwrap();
        let doctored = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        std::fs::write(&path, doctored).unwrap();
        match load_microstructure(&path) {
            Err(Error::UnsupportedSchema { found: 9, supported: 1 }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_position() {
        let ms = sample_ms();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ms.json");
        save_microstructure(&ms, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_microstructure(&path) {
            Err(Error::Parse { detail, .. }) => {
                assert!(detail.contains("line") && detail.contains("column"), "detail {detail:?}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn micrograph_round_trip_reconstructs_the_lattice() {
        // A 6x6 square lattice of equal discs, exported ImageJ-style in
        // micrometers, must come back exactly when the crop keeps everyone.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let mut text = String::from("# synthetic lattice\nx,y,d\n");
        let (pitch, d) = (30.0, 14.0);
        for j in 0..6 {
            for i in 0..6 {
                let _ = writeln!(text, "{},{},{d}", 15.0 + pitch * i as f64, 15.0 + pitch * j as f64);
            }
        }
        std::fs::write(&path, text).unwrap();

        let window = Rect::new(0.0, 0.0, 180.0, 180.0);
        let (ms, report) = ingest_micrograph(&path, Crop::Window(window), "x,y,d").unwrap();
        assert_eq!(report.n_kept, 36);
        assert_eq!(ms.n_fibers(), 36);
        assert!(!ms.domain.periodic);
        assert_eq!(ms.meta.units, "um");
        assert!((ms.fibers[0].r - 7.0).abs() < 1e-12);
        // Every disc is interior, so clipping changes nothing: V_f is the
        // plain area sum.
        let expected = 36.0 * std::f64::consts::PI * 49.0 / (180.0f64 * 180.0);
        assert!((report.volume_fraction - expected).abs() < 1e-12);
        assert!((volume_fraction(&ms) - expected).abs() < 1e-12);
    }

    #[test]
    fn auto_crop_insets_by_twice_the_largest_diameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let mut text = String::from("x,y,d\n");
        // Extent [0, 100]^2 with max diameter 10 -> auto window [20, 80]^2.
        let centers = [(0.0, 0.0), (100.0, 100.0), (50.0, 50.0), (25.0, 75.0), (19.0, 50.0)];
        for (x, y) in centers {
            let _ = writeln!(text, "{x},{y},10");
        }
        std::fs::write(&path, text).unwrap();
        let (ms, report) = ingest_micrograph(&path, Crop::Auto, "x,y,d").unwrap();
        assert_eq!(report.window, [20.0, 20.0, 80.0, 80.0]);
        // Corner and (19, 50) fibers fall outside; centers shift to window
        // coordinates.
        assert_eq!(report.n_kept, 2);
        assert_eq!(ms.n_fibers(), 2);
        assert!((ms.fibers[0].x - 30.0).abs() < 1e-12 && (ms.fibers[0].y - 30.0).abs() < 1e-12);
    }

    #[test]
    fn micrograph_with_custom_columns_and_junk_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "cx,cy,diam\n1.0,2.0,3.0\n").unwrap();
        let (ms, _) = ingest_micrograph(&path, Crop::Window(Rect::new(0.0, 0.0, 4.0, 4.0)), "cx,cy,diam").unwrap();
        assert_eq!(ms.n_fibers(), 1);
        assert!(ingest_micrograph(&path, Crop::Auto, "x,y,d").is_err());

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "x,y,d\n1.0,2.0,-3.0\n").unwrap();
        match ingest_micrograph(&bad, Crop::Auto, "x,y,d") {
            Err(Error::Parse { detail, .. }) => assert!(detail.contains("row 2"), "{detail}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_crop_window_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "x,y,d\n5.0,5.0,2.0\n").unwrap();
        // Window excludes the only fiber.
        let r = ingest_micrograph(&path, Crop::Window(Rect::new(10.0, 10.0, 20.0, 20.0)), "x,y,d");
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        // Auto crop on a single point collapses to nothing.
        assert!(ingest_micrograph(&path, Crop::Auto, "x,y,d").is_err());
    }

    #[test]
    fn fiber_csv_export_round_trips_through_ingest() {
        let ms = sample_ms();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fibers.csv");
        export_fibers_csv(&ms, &path).unwrap();
        // Radii are exported, diameters ingested: map r -> d by naming the
        // column and halving back.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().any(|l| l == "x,y,r"));
        let window = Rect::new(0.0, 0.0, ms.domain.lx, ms.domain.ly);
        let (back, report) = ingest_micrograph(&path, Crop::Window(window), "x,y,r").unwrap();
        assert_eq!(back.n_fibers(), ms.n_fibers());
        assert_eq!(report.n_input, ms.n_fibers());
        // Ingest treats the named column as diameters; radii halve.
        assert!((back.max_radius() - 0.5 * ms.max_radius()).abs() < 1e-15);
    }

    #[test]
    fn results_csv_has_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "name,bc_mode,nx,e_x,e_y,e_z,g_xy,nu_xy,nu_yx,nu_xz,iterations,residual");
    }

    #[test]
    fn manifest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let m = RunManifest::new("sweep", &serde_json::json!({"n": 3}), vec![1, 2, 3]);
        write_manifest(&m, &a).unwrap();
        write_manifest(&m, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let text = std::fs::read_to_string(&a).unwrap();
        assert!(text.contains("\"seeds\""));
    }
}
