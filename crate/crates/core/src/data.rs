//! Synthetic datasets, point-CSV ingestion and the on-disk formats.
//!
//! Dataset text format, whitespace separated, `.` decimal point, floats in
//! shortest round-trip form:
//!
//! ```text
//! ukmeans-dataset v1 m=2 n=3 s=16 [key=value ...]
//! <id> <lo_1..lo_m> <hi_1..hi_m> <grid_1..grid_m> <mass_1..mass_s>
//! ...
//! ```
//!
//! One object per line; the number of masses is the product of the grid
//! dimensions. Unknown header keys are kept but ignored.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{RunResult, WORKSPACE_MAX};
use crate::error::{Error, Result};
use crate::model::{arrange_factors, near_equal_factors, validate_dataset, DiscretePdf, Mbr, Params, UncertainObject};

pub const DATASET_MAGIC: &str = "ukmeans-dataset";
pub const DATASET_VERSION: &str = "v1";

/// Everything that determines a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub l: f64,
    pub s: usize,
    pub d: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn from_params(p: &Params) -> Self {
        Self {
            n: p.n,
            l: p.l,
            s: p.s,
            d: p.d,
            seed: p.seed,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l <= WORKSPACE_MAX) {
            return Err(Error::InvalidParam(format!(
                "l must be in (0, {WORKSPACE_MAX}], got {}",
                self.l
            )));
        }
        if self.s == 0 {
            return Err(Error::InvalidParam("s must be >= 1".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidParam("d must be >= 1".into()));
        }
        Ok(())
    }
}

/// Uniform on `(0, hi]`.
fn open_closed(rng: &mut ChaCha8Rng, hi: f64) -> f64 {
    hi * (1.0 - rng.gen::<f64>())
}

/// Box of the given sides whose low corner is `anchor`, shifted back inside
/// the workspace if it sticks out.
fn place(anchor: &[f64], sides: &[f64]) -> Mbr {
    let lo: Vec<f64> = anchor
        .iter()
        .zip(sides)
        .map(|(&a, &w)| a.min(WORKSPACE_MAX - w).max(0.0))
        .collect();
    let hi = lo.iter().zip(sides).map(|(a, w)| a + w).collect();
    Mbr::new(lo, hi).expect("sides are positive")
}

fn random_pdf(rng: &mut ChaCha8Rng, mbr: Mbr, factors: &[usize], s: usize) -> DiscretePdf {
    let sides: Vec<f64> = (0..mbr.dim()).map(|t| mbr.side(t)).collect();
    let grid = arrange_factors(factors, &sides);
    let mut masses: Vec<f64> = (0..s).map(|_| open_closed(rng, 1.0)).collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|w| *w /= total);
    DiscretePdf::new(mbr, grid, masses).expect("grid matches s")
}

/// `n` random objects in `[0,100]^d`. Per object the generator draws, in
/// order: the anchor (d uniforms), the side lengths (d uniforms on
/// `(0, l]`) and the `s` cell masses (uniform on `(0, 1]`, then
/// normalized). One ChaCha8 stream per seed, consumed object by object.
pub fn generate(spec: &GenSpec) -> Result<Vec<UncertainObject>> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let factors = near_equal_factors(spec.s, spec.d);
    let mut anchor = vec![0.0; spec.d];
    let mut sides = vec![0.0; spec.d];
    let objects = (0..spec.n)
        .map(|i| {
            anchor.iter_mut().for_each(|a| *a = rng.gen_range(0.0..=WORKSPACE_MAX));
            sides.iter_mut().for_each(|w| *w = open_closed(&mut rng, spec.l));
            let mbr = place(&anchor, &sides);
            UncertainObject::new(i as u64, random_pdf(&mut rng, mbr, &factors, spec.s))
        })
        .collect();
    Ok(objects)
}

/// Replace every point by a random box of sides at most `l` centered on it
/// (shifted inside the workspace if needed) carrying a random PDF.
pub fn uncertainize(points: &[Vec<f64>], l: f64, s: usize, seed: u64) -> Result<Vec<UncertainObject>> {
    let d = points.first().ok_or(Error::EmptyInput("point set"))?.len();
    GenSpec { n: points.len(), l, s, d, seed }.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = near_equal_factors(s, d);
    let mut sides = vec![0.0; d];
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|x| !(0.0..=WORKSPACE_MAX).contains(x)) {
                return Err(Error::InvalidParam(format!(
                    "point {i} lies outside the workspace [0, {WORKSPACE_MAX}]"
                )));
            }
            sides.iter_mut().for_each(|w| *w = open_closed(&mut rng, l));
            let anchor: Vec<f64> = p.iter().zip(&sides).map(|(x, w)| x - 0.5 * w).collect();
            let mbr = place(&anchor, &sides);
            Ok(UncertainObject::new(i as u64, random_pdf(&mut rng, mbr, &factors, s)))
        })
        .collect()
}

/// How to read point rows out of a CSV file.
#[derive(Debug, Clone)]
pub struct CsvPointOptions {
    pub delimiter: u8,
    pub has_headers: bool,
    /// Zero-based columns to keep; empty keeps every column.
    pub columns: Vec<usize>,
    /// Min-max rescale each kept column onto this range.
    pub rescale: Option<(f64, f64)>,
    /// Stop after this many rows.
    pub limit: Option<usize>,
}

impl Default for CsvPointOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_headers: false,
            columns: Vec::new(),
            rescale: Some((0.0, WORKSPACE_MAX)),
            limit: None,
        }
    }
}

pub fn read_points_csv(reader: impl Read, opts: &CsvPointOptions) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_headers)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        if opts.limit.is_some_and(|n| points.len() >= n) {
            break;
        }
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let cols: Vec<usize> = if opts.columns.is_empty() {
            (0..rec.len()).collect()
        } else {
            opts.columns.clone()
        };
        let row = cols
            .iter()
            .map(|&c| {
                let field = rec.get(c).ok_or_else(|| Error::Parse {
                    offset,
                    line,
                    message: format!("missing column {c}"),
                })?;
                field.parse::<f64>().map_err(|e| Error::Parse {
                    offset,
                    line,
                    message: format!("column {c}: {field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = points.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), got: row.len() });
            }
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("CSV contains no rows"));
    }
    if let Some((lo, hi)) = opts.rescale {
        rescale(&mut points, lo, hi);
    }
    Ok(points)
}

/// Min-max rescale every column onto `[lo, hi]`; constant columns map to
/// the middle of the range.
pub fn rescale(points: &mut [Vec<f64>], lo: f64, hi: f64) {
    let Some(first) = points.first() else { return };
    for t in 0..first.len() {
        let (min, max) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[t]), b.max(p[t])));
        for p in points.iter_mut() {
            p[t] = if max > min {
                (lo + (p[t] - min) / (max - min) * (hi - lo)).clamp(lo, hi)
            } else {
                0.5 * (lo + hi)
            };
        }
    }
}

/// A dataset plus the free-form header metadata it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: BTreeMap<String, String>,
    pub objects: Vec<UncertainObject>,
}

impl Dataset {
    pub fn new(objects: Vec<UncertainObject>) -> Self {
        Self {
            meta: BTreeMap::new(),
            objects,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn dim(&self) -> usize {
        self.objects.first().map_or(0, UncertainObject::dim)
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        self.meta.get(key)?.parse().ok()
    }
}

const RESERVED: [&str; 3] = ["m", "n", "s"];

pub fn write_dataset(w: &mut impl Write, ds: &Dataset) -> Result<()> {
    let m = ds.dim();
    let s = ds.objects.first().map_or(0, |o| o.pdf().cells());
    write!(w, "{DATASET_MAGIC} {DATASET_VERSION} m={m} n={} s={s}", ds.objects.len())?;
    for (k, v) in &ds.meta {
        if RESERVED.contains(&k.as_str()) || k.contains(char::is_whitespace) || v.contains(char::is_whitespace) {
            continue;
        }
        write!(w, " {k}={v}")?;
    }
    writeln!(w)?;
    let mut line = String::new();
    for o in &ds.objects {
        use std::fmt::Write as _;
        line.clear();
        write!(line, "{}", o.id()).unwrap();
        for v in o.mbr().lo().iter().chain(o.mbr().hi()) {
            write!(line, " {v}").unwrap();
        }
        for g in o.pdf().grid_dims() {
            write!(line, " {g}").unwrap();
        }
        for v in o.pdf().masses() {
            write!(line, " {v}").unwrap();
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

struct Tokens<'a> {
    line: &'a str,
    base: usize,
    pos: usize,
}

impl<'a> Tokens<'a> {
    /// Next token and its absolute byte offset.
    fn next(&mut self) -> Option<(&'a str, usize)> {
        let rest = &self.line[self.pos..];
        let skip = rest.len() - rest.trim_start().len();
        let start = self.pos + skip;
        if start >= self.line.len() {
            self.pos = self.line.len();
            return None;
        }
        let len = self.line[start..].find(char::is_whitespace).unwrap_or(self.line.len() - start);
        self.pos = start + len;
        Some((&self.line[start..start + len], self.base + start))
    }

    fn end_offset(&self) -> usize {
        self.base + self.line.len()
    }
}

struct Fields<'a> {
    tok: Tokens<'a>,
    line_no: usize,
}

impl<'a> Fields<'a> {
    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        let end = self.tok.end_offset();
        self.tok.next().ok_or_else(|| Error::Parse {
            offset: end,
            line: self.line_no,
            message: format!("line ends before {what}"),
        })
    }

    fn num(&mut self, what: &str) -> Result<f64> {
        let (s, offset) = self.next(what)?;
        s.parse::<f64>().map_err(|_| Error::Parse {
            offset,
            line: self.line_no,
            message: format!("bad number {s:?} for {what}"),
        })
    }
}

pub fn read_dataset(mut r: impl Read) -> Result<Dataset> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let err = |offset: usize, line: usize, message: String| Error::Parse { offset, line, message };

    let mut lines = text.split_inclusive('\n').scan(0usize, |off, raw| {
        let start = *off;
        *off += raw.len();
        Some((start, raw.trim_end_matches(['\n', '\r'])))
    });

    let (_, header) = lines.next().ok_or_else(|| err(0, 1, "empty file".into()))?;
    let mut tok = Tokens { line: header, base: 0, pos: 0 };
    match tok.next() {
        Some((DATASET_MAGIC, _)) => {}
        _ => return Err(err(0, 1, format!("expected {DATASET_MAGIC:?} header"))),
    }
    match tok.next() {
        Some((DATASET_VERSION, _)) => {}
        Some((v, off)) => return Err(err(off, 1, format!("unsupported version {v:?}"))),
        None => return Err(err(tok.end_offset(), 1, "missing version".into())),
    }
    let mut meta = BTreeMap::new();
    while let Some((kv, off)) = tok.next() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(off, 1, format!("expected key=value, got {kv:?}")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let header_num = |key: &str| -> Result<usize> {
        meta.get(key)
            .ok_or_else(|| err(0, 1, format!("header lacks {key}=")))?
            .parse()
            .map_err(|_| err(0, 1, format!("header {key}= is not an integer")))
    };
    let m = header_num("m")?;
    let n = header_num("n")?;
    if m == 0 {
        return Err(err(0, 1, "m must be >= 1".into()));
    }

    let mut objects = Vec::with_capacity(n);
    let mut last_end = header.len();
    for (idx, (base, line)) in lines.enumerate() {
        let line_no = idx + 2;
        last_end = base + line.len();
        if line.trim().is_empty() {
            continue;
        }
        if objects.len() == n {
            return Err(err(base, line_no, format!("more than the {n} objects declared")));
        }
        let mut f = Fields {
            tok: Tokens { line, base, pos: 0 },
            line_no,
        };
        let (id_s, off) = f.next("id")?;
        let id: u64 = id_s.parse().map_err(|_| err(off, line_no, format!("bad id {id_s:?}")))?;
        let lo = (0..m).map(|_| f.num("MBR lo")).collect::<Result<Vec<_>>>()?;
        let hi = (0..m).map(|_| f.num("MBR hi")).collect::<Result<Vec<_>>>()?;
        let mut grid = Vec::with_capacity(m);
        for _ in 0..m {
            let (s, off) = f.next("grid dims")?;
            let g: usize = s
                .parse()
                .ok()
                .filter(|&g| g > 0)
                .ok_or_else(|| err(off, line_no, format!("bad grid dimension {s:?}")))?;
            grid.push(g);
        }
        let cells = grid.iter().try_fold(1usize, |a, &g| a.checked_mul(g));
        let cells = cells.ok_or_else(|| err(base, line_no, "grid too large".into()))?;
        let masses = (0..cells).map(|_| f.num("masses")).collect::<Result<Vec<_>>>()?;
        if let Some((extra, off)) = f.tok.next() {
            return Err(err(off, line_no, format!("unexpected trailing token {extra:?}")));
        }
        let mbr = Mbr::new(lo, hi).map_err(|e| err(base, line_no, e.to_string()))?;
        let pdf = DiscretePdf::new(mbr, grid, masses).map_err(|e| err(base, line_no, e.to_string()))?;
        objects.push(UncertainObject::new(id, pdf));
    }
    if objects.len() < n {
        return Err(err(
            last_end,
            text.lines().count(),
            format!("file ends after {} of {n} objects", objects.len()),
        ));
    }
    if let Err(diags) = validate_dataset(&objects) {
        let msg: Vec<String> = diags.iter().take(5).map(ToString::to_string).collect();
        return Err(Error::InvalidDataset(format!(
            "{} violation(s): {}",
            diags.len(),
            msg.join("; ")
        )));
    }
    for k in RESERVED {
        meta.remove(k);
    }
    Ok(Dataset { meta, objects })
}

/// Flat summary of a run for CSV and JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: String,
    pub n: usize,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Milliseconds per iteration.
    pub t1: f64,
    pub n_ed: f64,
    pub n_cand: f64,
    pub ed_evals: u64,
    pub cand_pairs: u64,
    pub objective: f64,
    pub sum_ed: f64,
    pub total_ms: f64,
    pub build_ms: f64,
}

impl RunSummary {
    pub fn from_run(res: &RunResult, n: usize) -> Self {
        let per = (n * res.iterations) as f64;
        Self {
            algo: res.algo.to_string(),
            n,
            k: res.final_state.k(),
            iterations: res.iterations,
            converged: res.converged,
            t1: res.wall_time_per_iter,
            n_ed: res.counters.ed_evals as f64 / per,
            n_cand: res.counters.cand_pairs as f64 / per,
            ed_evals: res.counters.ed_evals,
            cand_pairs: res.counters.cand_pairs,
            objective: res.objective,
            sum_ed: res.sum_ed,
            total_ms: res.total_ms,
            build_ms: res.build_ms,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// CSV with a header row and this summary as the single data row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// `object_id,cluster` rows; clusters are written 1-based.
pub fn write_assignments(w: &mut impl Write, objects: &[UncertainObject], assignment: &[usize]) -> Result<()> {
    writeln!(w, "object_id,cluster")?;
    for (o, j) in objects.iter().zip(assignment) {
        writeln!(w, "{},{}", o.id(), j + 1)?;
    }
    Ok(())
}

/// Inverse of [`write_assignments`]; returns `(object_id, 0-based cluster)`.
pub fn read_assignments(r: impl Read) -> Result<Vec<(u64, usize)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(u64, usize)>() {
        let (id, c) = rec?;
        if c == 0 {
            return Err(Error::InvalidParam(format!("cluster labels are 1-based; object {id} has 0")));
        }
        out.push((id, c - 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, seed: u64) -> GenSpec {
        GenSpec { n, l: 2.0, s: 16, d: 2, seed }
    }

    #[test]
    fn generate_is_deterministic() {
        assert_eq!(generate(&spec(5, 7)).unwrap(), generate(&spec(5, 7)).unwrap());
        assert_ne!(generate(&spec(5, 7)).unwrap(), generate(&spec(5, 8)).unwrap());
    }

    #[test]
    fn generated_boxes_respect_l_and_workspace() {
        let objs = generate(&GenSpec { n: 2000, l: 2.0, s: 8, d: 3, seed: 3 }).unwrap();
        for o in &objs {
            for t in 0..3 {
                assert!(o.mbr().side(t) > 0.0 && o.mbr().side(t) <= 2.0);
                assert!(o.mbr().lo()[t] >= 0.0 && o.mbr().hi()[t] <= 100.0);
            }
        }
        assert!(validate_dataset(&objs).is_ok());
    }

    #[test]
    fn generate_rejects_bad_params() {
        assert!(generate(&GenSpec { l: 0.0, ..spec(3, 1) }).is_err());
        assert!(generate(&GenSpec { l: -1.0, ..spec(3, 1) }).is_err());
        assert!(generate(&GenSpec { s: 0, ..spec(3, 1) }).is_err());
    }

    #[test]
    fn uncertainize_centers_boxes() {
        let objs = uncertainize(&[vec![50.0, 50.0]], 2.0, 16, 1).unwrap();
        let b = objs[0].mbr();
        assert!(b.contains_point(&[50.0, 50.0]));
        assert!(Mbr::new(vec![49.0, 49.0], vec![51.0, 51.0]).unwrap().contains(b));
        for t in 0..2 {
            assert!((b.lo()[t] + b.hi()[t] - 100.0).abs() < 1e-12);
        }
        assert_eq!(objs, uncertainize(&[vec![50.0, 50.0]], 2.0, 16, 1).unwrap());
        assert!(uncertainize(&[], 2.0, 16, 1).is_err());
    }

    #[test]
    fn uncertainize_shifts_at_border() {
        let objs = uncertainize(&[vec![0.0, 100.0]], 2.0, 4, 9).unwrap();
        let b = objs[0].mbr();
        assert_eq!(b.lo()[0], 0.0);
        assert_eq!(b.hi()[1], 100.0);
        assert!(b.contains_point(&[0.0, 100.0]));
    }

    #[test]
    fn csv_points_with_columns_and_rescale() {
        let text = "a,b,c\n1,10,x\n3,20,y\n2,30,z\n";
        let opts = CsvPointOptions {
            has_headers: true,
            columns: vec![0, 1],
            ..Default::default()
        };
        let pts = read_points_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(pts, vec![vec![0.0, 0.0], vec![100.0, 50.0], vec![50.0, 100.0]]);
        let bad = CsvPointOptions {
            columns: vec![2],
            ..opts
        };
        assert!(matches!(read_points_csv(text.as_bytes(), &bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn dataset_round_trip() {
        let ds = Dataset::new(generate(&spec(20, 4)).unwrap()).with_meta("l", 2).with_meta("seed", 4);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.meta_parse::<f64>("l"), Some(2.0));
    }

    #[test]
    fn truncated_dataset_names_offset() {
        let ds = Dataset::new(generate(&spec(3, 4)).unwrap());
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 40];
        match parse_dataset(cut) {
            Err(Error::Parse { offset, message, .. }) => {
                assert_eq!(offset, cut.len());
                assert!(message.contains("masses"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        // dropping a whole line
        let two_lines: String = text.split_inclusive('\n').take(3).collect();
        match parse_dataset(&two_lines) {
            Err(Error::Parse { offset, message, .. }) => {
                assert_eq!(offset, two_lines.len() - 1);
                assert!(message.contains("2 of 3"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_offset() {
        let text = "ukmeans-dataset v1 m=1 n=1 s=1\n0 0 1 1 zz\n";
        match parse_dataset(text) {
            Err(Error::Parse { offset, line, .. }) => {
                assert_eq!(offset, text.find("zz").unwrap());
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_dataset("nope\n").is_err());
        let bad_mass = "ukmeans-dataset v1 m=1 n=1 s=2\n0 0 1 2 0.5 0.4\n";
        assert!(matches!(parse_dataset(bad_mass), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn assignments_round_trip() {
        let objs = generate(&spec(4, 1)).unwrap();
        let mut buf = Vec::new();
        write_assignments(&mut buf, &objs, &[0, 2, 1, 0]).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("1,3\n"));
        let back = read_assignments(buf.as_slice()).unwrap();
        assert_eq!(back, vec![(0, 0), (1, 2), (2, 1), (3, 0)]);
    }
}
