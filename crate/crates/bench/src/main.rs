use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ukbench::{metrics, Axis, MetricsRow, Sweep};
use ukmeans::data::{read_dataset, read_points_csv, write_assignments, write_dataset, CsvPointOptions};
use ukmeans::{generate, uncertainize, Algo, Dataset, GenSpec, Params, RStarTree, RunSummary};

#[derive(Parser)]
#[command(name = "ukbench", version, about = "Generate uncertain datasets and benchmark UK-means pruning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Cluster a dataset and print one metrics row.
    Cluster(ClusterArgs),
    /// Measure algorithms over a range of n, k or block size.
    Sweep(SweepArgs),
    /// Turn CSV point rows into an uncertain dataset.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short = 'n', default_value_t = 20_000, value_parser = positive)]
    n: usize,
    /// Recorded in the file as the default cluster count.
    #[arg(short = 'k', default_value_t = 50, value_parser = positive)]
    k: usize,
    /// Maximum MBR side length.
    #[arg(short = 'l', default_value_t = 2.0, value_parser = side_length)]
    l: f64,
    /// Cells per PDF.
    #[arg(short = 's', default_value_t = 128, value_parser = positive)]
    s: usize,
    #[arg(short = 'd', default_value_t = 2, value_parser = positive)]
    d: usize,
    /// Recorded in the file as the default block size in bytes.
    #[arg(short = 'b', default_value_t = 512, value_parser = positive)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    dataset: PathBuf,
    #[arg(long, default_value = "rmm-vcp", value_parser = algo)]
    algo: Algo,
    /// Defaults to the k recorded in the dataset, else 50.
    #[arg(short = 'k', value_parser = positive)]
    k: Option<usize>,
    /// Defaults to the block size recorded in the dataset, else 512.
    #[arg(short = 'b', value_parser = positive)]
    b: Option<usize>,
    /// Seed for the initial representatives.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    max_iters: usize,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    threads: usize,
    /// Assignment file (`object_id,cluster`, clusters numbered from 1).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the run summary as JSON instead of a CSV metrics row.
    #[arg(long)]
    json: bool,
    /// Write the bulk-loaded tree, one node entry per line.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = axis)]
    vary: Axis,
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,mmbb,vcp,rmm-vcp", value_parser = algo)]
    algo: Vec<Algo>,
    /// Seeds per point, counting up from --seed.
    #[arg(long, default_value_t = 3, value_parser = positive)]
    reps: usize,
    /// Timing repeats per measurement; the fastest is kept.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    repeats: usize,
    #[arg(short = 'n', default_value_t = 20_000, value_parser = positive)]
    n: usize,
    #[arg(short = 'k', default_value_t = 50, value_parser = positive)]
    k: usize,
    #[arg(short = 'l', default_value_t = 2.0, value_parser = side_length)]
    l: f64,
    #[arg(short = 's', default_value_t = 128, value_parser = positive)]
    s: usize,
    #[arg(short = 'd', default_value_t = 2, value_parser = positive)]
    d: usize,
    #[arg(short = 'b', default_value_t = 512, value_parser = positive)]
    b: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    max_iters: usize,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    threads: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    has_headers: bool,
    /// Zero-based columns to keep, comma separated; all when omitted.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<usize>,
    /// Target range for min-max rescaling, as `lo,hi`.
    #[arg(long, default_value = "0,100", value_parser = range, conflicts_with = "no_rescale")]
    rescale: (f64, f64),
    #[arg(long)]
    no_rescale: bool,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(short = 'l', default_value_t = 2.0, value_parser = side_length)]
    l: f64,
    #[arg(short = 's', default_value_t = 128, value_parser = positive)]
    s: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn side_length(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 100.0 {
        Ok(v)
    } else {
        Err("must be in (0, 100]".into())
    }
}

fn algo(s: &str) -> Result<Algo, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

fn range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err("lo must be below hi".into())
    }
}

/// Failure with its exit code: 1 usage, 2 I/O or bad input, 3 internal.
enum Failure {
    Usage(String),
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ukmeans::Error> for Failure {
    fn from(e: ukmeans::Error) -> Self {
        use ukmeans::Error::*;
        let msg = e.to_string();
        match e {
            InvalidParam(_) => Failure::Usage(msg),
            StaleIndex(_) | IndexOutOfRange { .. } => Failure::Internal(msg),
            _ => Failure::Input(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let spec = GenSpec { n: a.n, l: a.l, s: a.s, d: a.d, seed: a.seed };
    let ds = Dataset::new(generate(&spec)?)
        .with_meta("l", a.l)
        .with_meta("k", a.k)
        .with_meta("b", a.b)
        .with_meta("seed", a.seed);
    let mut w = output(a.out.as_deref())?;
    write_dataset(&mut w, &ds)?;
    w.flush()?;
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> Result<(), Failure> {
    let ds = read_dataset(open(&a.dataset)?)?;
    let objects = &ds.objects;
    let params = Params {
        n: objects.len(),
        k: a.k.or_else(|| ds.meta_parse("k")).unwrap_or(50),
        l: ds.meta_parse("l").unwrap_or(Params::default().l),
        s: objects[0].pdf().cells(),
        d: ds.dim(),
        b: a.b.or_else(|| ds.meta_parse("b")).unwrap_or(512),
        seed: a.seed,
        max_iters: a.max_iters,
        threads: a.threads,
        ..Params::default()
    };
    params.validate()?;
    if let Some(path) = &a.dump_tree {
        let tree = RStarTree::bulk_load(objects, params.b)?;
        let mut w = output(Some(path))?;
        tree.dump(&mut w)?;
        w.flush()?;
    }

    let res = ukmeans::run_algo(objects, &params, a.algo)?;
    if res.final_state.assignment.len() != objects.len() {
        return Err(Failure::Internal("assignment length differs from object count".into()));
    }
    if let Some(path) = &a.out {
        let mut w = output(Some(path))?;
        write_assignments(&mut w, objects, &res.final_state.assignment)?;
        w.flush()?;
    }

    let mut stdout = io::stdout().lock();
    if a.json {
        writeln!(stdout, "{}", RunSummary::from_run(&res, params.n).to_json()?)?;
    } else {
        let row = MetricsRow::from_run(&res, &params, ds.meta_parse("l"));
        metrics::write_csv(&mut stdout, &[row])?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let base = Params {
        n: a.n,
        k: a.k,
        l: a.l,
        s: a.s,
        d: a.d,
        b: a.b,
        seed: a.seed,
        max_iters: a.max_iters,
        threads: a.threads,
        ..Params::default()
    };
    let sweep = Sweep {
        base,
        axis: a.vary,
        values: a.values,
        seeds: (0..a.reps as u64).map(|i| a.seed + i).collect(),
        algos: a.algo,
        repeats: a.repeats,
    };
    if let Some(notice) = sweep.notice() {
        eprintln!("{notice}");
    }
    let rows = sweep.run(|r| {
        eprintln!(
            "{}={} seed={} {}: t1={:.3}ms n_ed={:.4}",
            sweep.axis,
            match sweep.axis {
                Axis::N => r.n,
                Axis::K => r.k,
                Axis::B => r.b,
            },
            r.seed.unwrap_or_default(),
            r.algo,
            r.t1_ms,
            r.n_ed
        )
    })?;
    let mut w = output(a.out.as_deref())?;
    metrics::write_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<(), Failure> {
    let delimiter = u8::try_from(a.delimiter)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Failure::Usage("delimiter must be a single ASCII character".into()))?;
    let opts = CsvPointOptions {
        delimiter,
        has_headers: a.has_headers,
        columns: a.columns,
        rescale: (!a.no_rescale).then_some(a.rescale),
        limit: a.limit,
    };
    let points = read_points_csv(open(&a.input)?, &opts)?;
    let ds = Dataset::new(uncertainize(&points, a.l, a.s, a.seed)?)
        .with_meta("l", a.l)
        .with_meta("seed", a.seed)
        .with_meta("source", a.input.file_name().map_or_else(String::new, |f| f.to_string_lossy().replace(' ', "_")));
    let mut w = output(a.out.as_deref())?;
    write_dataset(&mut w, &ds)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Cluster(a) => cmd_cluster(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Ingest(a) => cmd_ingest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
