//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or query error, 2 I/O error, 3 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use warebus::dsl::{check_schema, serialize_schema, SourceText};
use warebus::etl::{load_rules, prepare_catalog, run_manifest, EtlError, SourceOutcome, SourcesManifest};
use warebus::model::Schema;
use warebus::olap::{self, CubeQuery, Filter, OlapError, Selection};
use warebus::store::{open_catalog, Catalog, OpenMode, StoreError};

use crate::http::{self, ServeError, ServerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "warebus", version, about = "Dimensional warehouse for medical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Schema language tools.
    #[command(subcommand)]
    Schema(SchemaCommand),
    /// Loads the sources of a manifest into a catalog.
    Load {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Runs a cube query given as JSON.
    Query {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exports one dimension attribute next to the measures of each fact row.
    ExportAv(ExportArgs),
    /// Serves the HTTP API.
    Serve {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        read_only: bool,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
}

#[derive(Debug, Subcommand)]
enum SchemaCommand {
    /// Validates a schema file; diagnostics go to standard error.
    Check { file: PathBuf },
    /// Prints a schema file in canonical form.
    Print { file: PathBuf },
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    fact: String,
    #[arg(long)]
    dimension: String,
    #[arg(long)]
    attribute: String,
    /// Measure to include; repeat for several. All measures when omitted.
    #[arg(long = "measure")]
    measures: Vec<String>,
    /// JSON file holding a list of filters.
    #[arg(long)]
    filters: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    /// Diagnostics were already printed.
    #[error("invalid input")]
    Reported,
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Reported => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } | StoreError::Locked | StoreError::NotACatalog(_) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<EtlError> for CliError {
    fn from(e: EtlError) -> Self {
        match e {
            EtlError::Store(s) => s.into(),
            EtlError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<OlapError> for CliError {
    fn from(e: OlapError) -> Self {
        match e {
            OlapError::Store(s) => s.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Catalog(s) => s.into(),
            ServeError::Config(_) => CliError::Invalid(e.to_string()),
            ServeError::Bind { .. } => CliError::Io(e.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !matches!(e, CliError::Reported) {
                let _ = writeln!(err, "error: {e}");
            }
            e.exit_code()
        }
    }
}

fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Schema(SchemaCommand::Check { file }) => {
            let schema = read_schema(&file, err)?;
            let _ = writeln!(
                out,
                "{}: schema `{}` version {} is valid ({} dimensions, {} fact tables)",
                file.display(),
                schema.name,
                schema.version,
                schema.dimensions.len(),
                schema.fact_tables.len()
            );
            Ok(())
        }
        Command::Schema(SchemaCommand::Print { file }) => {
            let schema = read_schema(&file, err)?;
            let text = serialize_schema(&schema).map_err(|e| CliError::Invalid(e.to_string()))?;
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
        Command::Load {
            schema,
            catalog,
            manifest,
        } => load(&schema, &catalog, &manifest, out, err),
        Command::Query { catalog, query, out: target } => {
            let text = fs::read_to_string(&query).map_err(|e| CliError::io(&query, e))?;
            let q: CubeQuery = serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", query.display())))?;
            let catalog = open_catalog(&catalog, OpenMode::ReadOnly)?;
            let result = olap::execute(&catalog.snapshot(), &q)?;
            let mut body = result.to_canonical_json().into_bytes();
            body.push(b'\n');
            emit(target.as_deref(), &body, out)
        }
        Command::ExportAv(args) => {
            let filters: Vec<Filter> = match &args.filters {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
                }
                None => Vec::new(),
            };
            let catalog = open_catalog(&args.catalog, OpenMode::ReadOnly)?;
            let view = olap::export_attribute_value(
                &catalog.snapshot(),
                &Selection {
                    fact: args.fact,
                    dimension: args.dimension,
                    attribute: args.attribute,
                    measures: args.measures,
                    filters,
                },
            )?;
            emit(args.out.as_deref(), view.to_csv()?.as_bytes(), out)
        }
        Command::Serve {
            catalog,
            port,
            bind,
            read_only,
            threads,
        } => {
            let config = ServerConfig {
                catalog,
                bind,
                port,
                read_only,
                threads,
            };
            let server = http::bind(&config)?;
            let _ = writeln!(
                out,
                "serving {} on http://{}{}",
                config.catalog.display(),
                server.addr(),
                if read_only { " (read-only)" } else { "" }
            );
            let _ = out.flush();
            server.join();
            Ok(())
        }
    }
}

fn emit(target: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match target {
        Some(path) if path != Path::new("-") => fs::write(path, bytes).map_err(|e| CliError::io(path, e)),
        _ => out.write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn read_schema(file: &Path, err: &mut dyn Write) -> Result<Schema, CliError> {
    let source = SourceText::read(file).map_err(|e| CliError::io(file, e))?;
    let (schema, diags) = check_schema(&source);
    let origin = file.display().to_string();
    for d in &diags {
        let _ = writeln!(err, "{}", d.render(&origin));
    }
    schema.ok_or(CliError::Reported)
}

fn load(schema: &Path, catalog: &Path, manifest: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let schema = read_schema(schema, err)?;
    let manifest = SourcesManifest::read(manifest)?;
    let (rules, intervals) = load_rules(&manifest)?;
    let catalog: Catalog = open_catalog(catalog, OpenMode::ReadWrite)?;
    if prepare_catalog(&catalog, &schema, Some(intervals))? {
        let _ = writeln!(out, "installed schema `{}` version {}", schema.name, schema.version);
    }
    for outcome in run_manifest(&catalog, &manifest, &rules)? {
        match outcome {
            SourceOutcome::Loaded(r) => {
                let _ = writeln!(
                    out,
                    "{}: {} accepted, {} rejected into `{}` (batch {})",
                    r.source,
                    r.accepted,
                    r.rejected.len(),
                    r.target,
                    r.batch_id
                );
                for rej in &r.rejected {
                    let _ = writeln!(err, "  rejected {}: {}", rej.provenance, rej.reason);
                }
            }
            SourceOutcome::Duplicate { source, batch } => {
                let _ = writeln!(out, "{source}: duplicate batch {batch}, already loaded; skipped");
            }
        }
    }
    let _ = writeln!(out, "catalog generation {}", catalog.snapshot().generation());
    Ok(())
}
