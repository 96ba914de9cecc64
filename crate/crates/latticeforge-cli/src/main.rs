//! Command-line surface tying the toolkit into reproducible pipelines.
//! Exit codes: 0 success, 1 usage error, 2 data/validation error.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use latticeforge::catalog;
use latticeforge::corrupt::{corrupt, derive_seed, CorruptionConfig};
use latticeforge::gen::{train, Dataset, GenConfig, Model, TrainItem};
use latticeforge::geom::{bounding_frame, Frame, UnitCell};
use latticeforge::homogenize::{
    effective_properties_in_frame, slenderness_warning, MaterialSpec, StrutSection,
    DEFAULT_BOUNDARY_TOL,
};
use latticeforge::io::{
    export_obj, read_lattice, sweep_to_csv, write_lattice, LatticeDocument, PropertiesDocument,
};
use latticeforge::refine::{refine, RefineConfig};
use latticeforge::symmetry::{SymmetryGroup, SymmetryPreset};
use latticeforge::validity::{validate_cell, FramePolicy};

#[derive(Parser)]
#[command(name = "latticeforge", version, about = "Periodic lattice unit-cell toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog cells: list names or emit one as a lattice document.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Validity report for one cell at a list of thresholds.
    Validate {
        file: PathBuf,
        /// Comma-separated increasing thresholds, e.g. 0.005,0.01,0.02,0.04
        #[arg(long)]
        thresholds: String,
        #[arg(long, default_value = "inversion")]
        symmetry: String,
        /// unit: the document frame (generation space); fit: bounding frame
        #[arg(long, default_value = "unit")]
        frame: String,
    },
    /// Two-stage symmetry/periodicity refinement.
    Refine {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        cycles: usize,
        #[arg(long, default_value = "mirrors")]
        group: String,
        /// Optional JSON trace of per-cycle modifications.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Effective elastic properties via periodic frame homogenization.
    Homogenize {
        file: PathBuf,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 0.3)]
        nu_s: f64,
    },
    /// Corrupt a cell (seeded).
    Corrupt {
        file: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        p_node_remove: f64,
        #[arg(long, default_value_t = 0.05)]
        p_node_add: f64,
        #[arg(long, default_value_t = 0.1)]
        p_edge_remove: f64,
        #[arg(long, default_value_t = 0.1)]
        p_edge_add: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Synthesize a (corrupted, clean) pair dataset over the catalog.
    MakeDataset {
        #[arg(long)]
        out: PathBuf,
        /// Pairs per catalog entry.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = 0.05)]
        p_node_remove: f64,
        #[arg(long, default_value_t = 0.05)]
        p_node_add: f64,
        #[arg(long, default_value_t = 0.1)]
        p_edge_remove: f64,
        #[arg(long, default_value_t = 0.1)]
        p_edge_add: f64,
    },
    /// Train the generator on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Strut radius used to compute conditioning properties.
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
    },
    /// Sample a cell from a trained model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Properties JSON (homogenize output format).
        #[arg(long)]
        props: PathBuf,
        /// Defaults to the catalog-typical count for the nearest training
        /// property vector.
        #[arg(long)]
        n_vertices: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Threshold sweep over a population directory of lattice documents.
    Sweep {
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        thresholds: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "inversion")]
        symmetry: String,
        #[arg(long, default_value = "unit")]
        frame: String,
    },
    /// Wavefront OBJ polyline export (optionally tiled).
    ExportObj {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        tile: usize,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
    Emit { name: String },
}

/// Errors that are the caller's fault (exit 1) vs data errors (exit 2).
enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<latticeforge::LatticeError> for CliError {
    fn from(e: latticeforge::LatticeError) -> Self {
        CliError::Data(anyhow::Error::new(e))
    }
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}

fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Err(msg) = check_thread_cap() {
        eprintln!("{msg}");
        return 1;
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let exit_ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            if exit_ok {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// LATTICEFORGE_THREADS caps internal parallelism. The toolkit is
/// single-threaded, which satisfies any positive cap; the value is still
/// validated.
fn check_thread_cap() -> Result<(), String> {
    match std::env::var("LATTICEFORGE_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!(
                "LATTICEFORGE_THREADS must be a positive integer, got `{raw}`"
            )),
        },
    }
}

fn parse_thresholds(raw: &str) -> Result<Vec<f64>, CliError> {
    let list: Result<Vec<f64>, _> = raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let list = list.map_err(|_| CliError::Usage(format!("invalid threshold list `{raw}`")))?;
    if list.is_empty() || list.windows(2).any(|w| w[1] <= w[0]) || list[0] < 0.0 {
        return Err(CliError::Usage(
            "thresholds must be a non-empty, non-negative, strictly increasing list".into(),
        ));
    }
    Ok(list)
}

fn parse_group(raw: &str) -> Result<SymmetryGroup, CliError> {
    let preset = SymmetryPreset::parse(raw)
        .map_err(|e| CliError::Usage(format!("{e} (expected inversion|mirrors|cubic)")))?;
    Ok(SymmetryGroup::preset(preset))
}

fn frame_for(policy: &str, doc_frame: Frame, cell: &UnitCell) -> Result<Frame, CliError> {
    match policy {
        "unit" => Ok(doc_frame),
        "fit" => Ok(bounding_frame(cell).map_err(anyhow::Error::new)?),
        other => Err(CliError::Usage(format!(
            "unknown frame policy `{other}` (expected unit|fit)"
        ))),
    }
}

fn read_doc(path: &Path) -> Result<(UnitCell, Frame, Option<f64>), CliError> {
    read_lattice(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Catalog { action } => match action {
            CatalogAction::List => {
                for name in catalog::list() {
                    println!("{name}");
                }
                Ok(())
            }
            CatalogAction::Emit { name } => {
                let cell = catalog::make(&name)?;
                let doc = LatticeDocument::from_cell(&cell, &Frame::unit(), None);
                print!("{}", doc.to_json());
                Ok(())
            }
        },
        Command::Validate { file, thresholds, symmetry, frame } => {
            let thresholds = parse_thresholds(&thresholds)?;
            let group = parse_group(&symmetry)?;
            let (cell, doc_frame, _) = read_doc(&file)?;
            let frame = frame_for(&frame, doc_frame, &cell)?;
            for theta in thresholds {
                let report = validate_cell(&cell, theta, &group, &frame)?;
                let intra = if report.intra_valid { "valid" } else { "invalid" };
                let inter = if report.inter_valid { "valid" } else { "invalid" };
                println!("{theta},{intra},{inter}");
            }
            Ok(())
        }
        Command::Refine { file, output, cycles, group, trace } => {
            if cycles == 0 {
                return Err(CliError::Usage("--cycles must be >= 1".into()));
            }
            let group = parse_group(&group)?;
            let (cell, doc_frame, radius) = read_doc(&file)?;
            let cfg = RefineConfig {
                group,
                max_cycles: cycles,
                frame_policy: FramePolicy::Explicit(doc_frame),
                ..RefineConfig::default()
            };
            let (refined, trace_data) = refine(&cell, &cfg)?;
            write_lattice(&refined, &doc_frame, radius, &output).map_err(anyhow::Error::new)?;
            if let Some(trace_path) = trace {
                let cycles_json: Vec<serde_json::Value> = trace_data
                    .cycles
                    .iter()
                    .map(|c| {
                        serde_json::json!({
                            "nodes_moved": c.stats.nodes_moved,
                            "nodes_added": c.stats.nodes_added,
                            "nodes_removed": c.stats.nodes_removed,
                            "edges_added": c.stats.edges_added,
                            "edges_removed": c.stats.edges_removed,
                            "intra_valid": c.report.intra_valid,
                            "inter_valid": c.report.inter_valid,
                        })
                    })
                    .collect();
                let doc = serde_json::json!({
                    "converged": trace_data.converged,
                    "cycles": cycles_json,
                });
                let mut text = serde_json::to_string_pretty(&doc).expect("trace json");
                text.push('\n');
                std::fs::write(&trace_path, text)
                    .with_context(|| format!("writing {}", trace_path.display()))?;
            }
            Ok(())
        }
        Command::Homogenize { file, radius, nu_s } => {
            let (cell, doc_frame, _) = read_doc(&file)?;
            let section = StrutSection::new(radius)?;
            let material = MaterialSpec { e_s: 1.0, nu_s };
            material.validate()?;
            if let Some(warning) = slenderness_warning(&cell, &section) {
                eprintln!("warning: {warning}");
            }
            let (_, props) = effective_properties_in_frame(
                &cell,
                &doc_frame,
                &section,
                &material,
                DEFAULT_BOUNDARY_TOL,
            )?;
            print!("{}", PropertiesDocument::from_properties(&props).to_json());
            Ok(())
        }
        Command::Corrupt {
            file,
            sigma,
            seed,
            p_node_remove,
            p_node_add,
            p_edge_remove,
            p_edge_add,
            output,
        } => {
            let (cell, doc_frame, radius) = read_doc(&file)?;
            let cfg = CorruptionConfig {
                sigma,
                p_node_remove,
                p_node_add,
                p_edge_remove,
                p_edge_add,
                seed,
            };
            cfg.validate()?;
            let corrupted = corrupt(&cell, &cfg);
            write_lattice(&corrupted, &doc_frame, radius, &output).map_err(anyhow::Error::new)?;
            Ok(())
        }
        Command::MakeDataset {
            out,
            n,
            seed,
            sigma,
            p_node_remove,
            p_node_add,
            p_edge_remove,
            p_edge_add,
        } => {
            if n == 0 {
                return Err(CliError::Usage("--n must be >= 1".into()));
            }
            let cfg = CorruptionConfig {
                sigma,
                p_node_remove,
                p_node_add,
                p_edge_remove,
                p_edge_add,
                seed: 0,
            };
            cfg.validate()?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let frame = Frame::unit();
            let mut manifest_entries = Vec::new();
            for (entry_idx, name) in catalog::list().iter().enumerate() {
                let clean = catalog::make(name)?;
                let clean_file = format!("clean_{name}.json");
                write_lattice(&clean, &frame, None, out.join(&clean_file))
                    .map_err(anyhow::Error::new)?;
                for j in 0..n {
                    let index = (entry_idx * n + j) as u64;
                    let pair_seed = derive_seed(seed, index);
                    let corrupted = corrupt(&clean, &cfg.with_seed(pair_seed));
                    let corrupt_file = format!("corrupt_{name}_{j:04}.json");
                    write_lattice(&corrupted, &frame, None, out.join(&corrupt_file))
                        .map_err(anyhow::Error::new)?;
                    manifest_entries.push(serde_json::json!({
                        "name": name,
                        "seed": pair_seed,
                        "clean": clean_file,
                        "corrupted": corrupt_file,
                    }));
                }
            }
            let manifest = serde_json::json!({
                "master_seed": seed,
                "n_per_entry": n,
                "pairs": manifest_entries,
            });
            let mut text = serde_json::to_string_pretty(&manifest).expect("manifest json");
            text.push('\n');
            std::fs::write(out.join("manifest.json"), text)
                .with_context(|| format!("writing {}", out.join("manifest.json").display()))?;
            Ok(())
        }
        Command::Train { data, epochs, out, seed, radius } => {
            if epochs == 0 {
                return Err(CliError::Usage("--epochs must be >= 1".into()));
            }
            let manifest_path = data.join("manifest.json");
            let manifest: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(&manifest_path)
                    .with_context(|| format!("reading {}", manifest_path.display()))?,
            )
            .map_err(|e| anyhow!("bad manifest: {e}"))?;
            let pairs = manifest["pairs"]
                .as_array()
                .ok_or_else(|| anyhow!("manifest has no pairs array"))?;
            let mut clean_files = Vec::new();
            for pair in pairs {
                let file = pair["clean"]
                    .as_str()
                    .ok_or_else(|| anyhow!("pair without clean file"))?;
                if !clean_files.iter().any(|f| f == file) {
                    clean_files.push(file.to_string());
                }
            }
            let section = StrutSection::new(radius)?;
            let material = MaterialSpec::default();
            let mut items = Vec::new();
            for file in &clean_files {
                let (cell, frame, _) = read_doc(&data.join(file))?;
                let (_, props) = effective_properties_in_frame(
                    &cell,
                    &frame,
                    &section,
                    &material,
                    DEFAULT_BOUNDARY_TOL,
                )?;
                items.push(TrainItem { cell, props: props.to_property_vector() });
            }
            let dataset = Dataset::new(items)?;
            let config = GenConfig { epochs, seed, ..GenConfig::default() };
            let (model, report) = train(&dataset, &config, true)?;
            model.save(&out).map_err(anyhow::Error::new)?;
            eprintln!(
                "trained {} epochs on {} cells: coordinate loss {:.6} -> {:.6}",
                epochs,
                clean_files.len(),
                report.epoch_coord_losses.first().unwrap_or(&f64::NAN),
                report.epoch_coord_losses.last().unwrap_or(&f64::NAN),
            );
            Ok(())
        }
        Command::Sample { model, props, n_vertices, seed, output } => {
            let model = Model::load(&model)?;
            let props_doc = PropertiesDocument::from_json(
                &std::fs::read_to_string(&props)
                    .with_context(|| format!("reading {}", props.display()))?,
            )?;
            let vector = props_doc.to_property_vector();
            let n = match n_vertices.or_else(|| model.default_vertex_count(&vector)) {
                Some(n) => n,
                None => {
                    return Err(CliError::Data(anyhow!(
                        "model has no training examples; pass --n-vertices"
                    )))
                }
            };
            let coords = model.sample(&vector, n, seed)?;
            let edges = model.predict_adjacency(&coords, &vector);
            let vertices = (0..coords.nrows())
                .map(|i| latticeforge::Vec3::new(coords[(i, 0)], coords[(i, 1)], coords[(i, 2)]))
                .collect();
            let cell = UnitCell::new(vertices, edges).with_name("generated");
            write_lattice(&cell, &Frame::unit(), None, &output).map_err(anyhow::Error::new)?;
            Ok(())
        }
        Command::Sweep { population, thresholds, report, symmetry, frame } => {
            let thresholds = parse_thresholds(&thresholds)?;
            let group = parse_group(&symmetry)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&population)
                .with_context(|| format!("reading {}", population.display()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().map_or(false, |e| e == "json"))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .map_or(true, |n| n != "manifest.json")
                })
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(CliError::Data(anyhow!(
                    "no lattice documents in {}",
                    population.display()
                )));
            }
            let mut cells = Vec::new();
            let mut frames = Vec::new();
            for file in &files {
                let (cell, doc_frame, _) = read_doc(file)?;
                cells.push(cell);
                frames.push(doc_frame);
            }
            let policy = match frame.as_str() {
                "fit" => FramePolicy::Bounding,
                "unit" => {
                    let first = frames[0];
                    if frames.iter().any(|f| *f != first) {
                        return Err(CliError::Data(anyhow!(
                            "population documents disagree on the frame; use --frame fit"
                        )));
                    }
                    FramePolicy::Explicit(first)
                }
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown frame policy `{other}` (expected unit|fit)"
                    )))
                }
            };
            let sweep_result = latticeforge::validity::sweep(&cells, &thresholds, &group, policy)?;
            std::fs::write(&report, sweep_to_csv(&sweep_result))
                .with_context(|| format!("writing {}", report.display()))?;
            Ok(())
        }
        Command::ExportObj { file, output, tile } => {
            if tile == 0 {
                return Err(CliError::Usage("--tile must be >= 1".into()));
            }
            let (cell, doc_frame, _) = read_doc(&file)?;
            std::fs::write(&output, export_obj(&cell, &doc_frame, tile))
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(())
        }
    }
}
