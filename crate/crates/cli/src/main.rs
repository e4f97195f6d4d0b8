use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pimdb::generate::{default_schema, generate};
use pimdb::image;
use pimdb::isa::formula_table;
use pimdb::layout::{read_csv, write_csv, Database, Schema};
use pimdb::memsys::{trace, PimModule, SimConfig};
use pimdb::oracle::{self, OracleTable};
use pimdb::query::{self, AggValue};
use pimdb::report::{formulas_text, ledger_from_trace, QueryReport, RunReport};

/// Exit status of a failed verification or ledger check.
const EXIT_MISMATCH: u8 = 1;
/// Exit status of any other failure (I/O, parse, capacity...).
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "pimdb", version, about = "Bulk-bitwise PIM database simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct QueryArgs {
    /// Memory image to run against.
    #[arg(long)]
    image: PathBuf,
    /// Query text.
    #[arg(
        long,
        conflicts_with = "query_file",
        required_unless_present = "query_file"
    )]
    query: Option<String>,
    /// File of semicolon-separated queries.
    #[arg(long)]
    query_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a schema and seeded CSV data files into a directory.
    Generate {
        /// Schema TOML; the built-in LINEITEM/CUSTOMER-like schema by default.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loads CSV data into a fresh module and writes a memory image.
    Load {
        #[arg(long)]
        schema: PathBuf,
        /// Directory holding <relation>.csv files.
        #[arg(long)]
        data: PathBuf,
        /// Simulator TOML; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
    },
    /// Runs queries on the PIM path, updates the image and prints a report.
    Query {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
        /// Writes the request trace of the queries.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Runs queries on the PIM path and the oracle and compares them. The
    /// image is not modified.
    Verify {
        #[command(flatten)]
        q: QueryArgs,
    },
    /// Measured cycle counts against the instruction-table formulas.
    Formulas {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
    },
    /// Recomputes the counters of a JSON report from its request trace.
    CheckTrace {
        #[arg(long)]
        trace: PathBuf,
        /// JSON report written by `query --report json`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        config: Option<PathBuf>,
        /// Takes the configuration from an image.
        #[arg(long)]
        image: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::from_toml(&read(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn load_image(path: &Path) -> Result<(PimModule, Database)> {
    image::load(path).with_context(|| format!("loading image {}", path.display()))
}

fn queries(q: &QueryArgs) -> Result<Vec<String>> {
    let list = match (&q.query, &q.query_file) {
        (Some(t), _) => query::split_queries(t),
        (None, Some(p)) => query::split_queries(&read(p)?),
        (None, None) => bail!("--query or --query-file is required"),
    };
    if list.is_empty() {
        bail!("no queries given");
    }
    Ok(list)
}

fn oracle_table(db: &Database, module: &PimModule, relation: &str) -> Result<OracleTable> {
    let layout = db
        .relation(relation)
        .with_context(|| format!("no loaded relation {relation}"))?;
    let schema = db
        .schema
        .relation(&layout.name)
        .context("catalog lacks the relation schema")?;
    Ok(OracleTable::new(
        schema.clone(),
        layout.peek_records(module)?,
    )?)
}

fn cmd_generate(schema: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let schema = match schema {
        Some(p) => Schema::from_toml(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => default_schema(),
    };
    let data = generate(&schema, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("schema.toml"), schema.to_toml())?;
    for (name, records) in &data {
        let rel = schema
            .relation(name)
            .expect("generated relations are in the schema");
        write_csv(rel, records, File::create(out.join(format!("{name}.csv")))?)?;
        println!("{name}: {} records", records.len());
    }
    Ok(())
}

fn cmd_load(
    schema: &Path,
    data_dir: &Path,
    config: Option<&Path>,
    image_path: &Path,
) -> Result<()> {
    let schema =
        Schema::from_toml(&read(schema)?).with_context(|| format!("in {}", schema.display()))?;
    let mut data = BTreeMap::new();
    for rel in &schema.relations {
        let path = data_dir.join(format!("{}.csv", rel.name));
        if !path.exists() {
            continue;
        }
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let records =
            read_csv(rel, BufReader::new(f)).with_context(|| format!("in {}", path.display()))?;
        data.insert(rel.name.clone(), records);
    }
    if data.is_empty() {
        bail!("no <relation>.csv files in {}", data_dir.display());
    }
    let mut module = PimModule::new(load_config(config)?)?;
    let db = Database::load(&schema, &data, &mut module)?;
    for r in &db.relations {
        println!(
            "{}: {} records on {} pages, {} free columns",
            r.name,
            r.records,
            r.pages.len(),
            r.free.len
        );
    }
    image::save(image_path, &module, &db)?;
    Ok(())
}

fn print_result(q: &str, ids: Option<&Vec<u64>>, aggs: &[AggValue]) {
    println!("{q}");
    match ids {
        Some(ids) => {
            let shown: Vec<String> = ids.iter().take(20).map(u64::to_string).collect();
            let more = if ids.len() > 20 { ", ..." } else { "" };
            println!("  {} records: [{}{more}]", ids.len(), shown.join(", "));
        }
        None => {
            let vals: Vec<String> = aggs.iter().map(AggValue::to_string).collect();
            println!("  {}", vals.join(", "));
        }
    }
}

fn cmd_query(q: &QueryArgs, format: Format, trace_out: Option<&Path>) -> Result<()> {
    let (mut module, db) = load_image(&q.image)?;
    if trace_out.is_some() {
        module.enable_trace();
    }
    let mut report = RunReport::new(module.config());
    let mut results = Vec::new();
    for text in queries(q)? {
        let plan = query::plan(&text, &db, &module).with_context(|| format!("planning {text}"))?;
        let layout = db
            .relation(&plan.relation)
            .expect("planned relation is loaded");
        let table = oracle_table(&db, &module, &plan.relation)?;
        let baseline = oracle::execute(&plan.query, &table)?.baseline_bytes;
        let r = query::execute(&plan, layout, &mut module)
            .with_context(|| format!("running {text}"))?;
        report.queries.push(QueryReport::new(
            &text,
            &plan,
            &r,
            baseline,
            layout.pages.len(),
            module.geometry(),
        ));
        results.push((text, r));
    }
    if let Some(p) = trace_out {
        fs::write(p, trace::format_trace(&module.take_trace()))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    image::save(&q.image, &module, &db)?;
    match format {
        Format::Json => {
            let res: Vec<_> = results
                .iter()
                .map(|(t, r)| serde_json::json!({ "query": t, "ids": r.ids, "aggregates": r.aggregates }))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(
                    &serde_json::json!({ "results": res, "report": report })
                )?
            );
        }
        Format::Text => {
            for (t, r) in &results {
                print_result(t, r.ids.as_ref(), &r.aggregates);
            }
            print!("\n{}", report.to_text());
        }
    }
    Ok(())
}

fn cmd_verify(q: &QueryArgs) -> Result<bool> {
    let (mut module, db) = load_image(&q.image)?;
    let mut all = true;
    for text in queries(q)? {
        let plan = query::plan(&text, &db, &module).with_context(|| format!("planning {text}"))?;
        let layout = db
            .relation(&plan.relation)
            .expect("planned relation is loaded");
        let table = oracle_table(&db, &module, &plan.relation)?;
        let reference = oracle::execute(&plan.query, &table)?;
        let pim = query::execute(&plan, layout, &mut module)?;
        let v = oracle::compare(&pim, &reference);
        match v.detail {
            None => println!("PASS {text}"),
            Some(d) => {
                all = false;
                println!("FAIL {text}: {d}");
            }
        }
    }
    Ok(all)
}

fn cmd_formulas(config: Option<&Path>, format: Format) -> Result<()> {
    let g = load_config(config)?.geometry()?;
    let rows = formula_table(&g)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        Format::Text => print!("{}", formulas_text(&rows)),
    }
    Ok(())
}

/// A bare report, or the `query --report json` output wrapping one.
fn parse_report(text: &str) -> Result<RunReport> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let inner = v.get("report").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

fn cmd_check_trace(
    trace_path: &Path,
    report: &Path,
    config: Option<&Path>,
    image_path: Option<&Path>,
) -> Result<bool> {
    let config = match image_path {
        Some(p) => load_image(p)?.0.config().clone(),
        None => load_config(config)?,
    };
    let records = trace::parse_trace(&read(trace_path)?)
        .with_context(|| format!("in {}", trace_path.display()))?;
    let report =
        parse_report(&read(report)?).with_context(|| format!("in {}", report.display()))?;
    let mut expect = ledger_from_trace(&records, &config)?;
    let mut got = report.ledger();
    if report.queries.len() != 1 {
        // Peak row wear is a per-query quantity.
        expect.max_row_writes = 0;
        got.max_row_writes = 0;
    }
    let diff = got.diff(&expect);
    if diff.is_empty() {
        println!("ledger matches the trace ({} records)", records.len());
        return Ok(true);
    }
    for d in diff {
        println!("mismatch {d}");
    }
    Ok(false)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { schema, seed, out } => {
            cmd_generate(schema.as_deref(), seed, &out).map(|_| true)
        }
        Command::Load {
            schema,
            data,
            config,
            image,
        } => cmd_load(&schema, &data, config.as_deref(), &image).map(|_| true),
        Command::Query {
            q,
            report,
            trace_out,
        } => cmd_query(&q, report, trace_out.as_deref()).map(|_| true),
        Command::Verify { q } => cmd_verify(&q),
        Command::Formulas { config, report } => {
            cmd_formulas(config.as_deref(), report).map(|_| true)
        }
        Command::CheckTrace {
            trace,
            report,
            config,
            image,
        } => cmd_check_trace(&trace, &report, config.as_deref(), image.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_MISMATCH),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
