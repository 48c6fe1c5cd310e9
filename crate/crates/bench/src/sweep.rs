use std::collections::hash_map::{Entry, HashMap};
use std::fmt;
use std::str::FromStr;

use ukmeans::{generate, run_algo, Algo, GenSpec, Params, Result, UncertainObject};

use crate::metrics::MetricsRow;

/// Run `algo` `repeats` times and keep the fastest run.
///
/// Every run does identical work, so counters and results are the same
/// across repeats; only timings differ, and the minimum is the least
/// disturbed by other load on the machine.
pub fn measure(objects: &[UncertainObject], params: &Params, algo: Algo, repeats: usize) -> Result<MetricsRow> {
    let mut best: Option<MetricsRow> = None;
    for _ in 0..repeats.max(1) {
        let res = run_algo(objects, params, algo)?;
        let row = MetricsRow::from_run(&res, params, Some(params.l));
        if best.as_ref().is_none_or(|b| row.t1_ms < b.t1_ms) {
            best = Some(row);
        }
    }
    Ok(best.expect("at least one repeat"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    N,
    K,
    B,
}

impl Axis {
    fn apply(self, base: &Params, value: usize) -> Params {
        let mut p = base.clone();
        match self {
            Axis::N => p.n = value,
            Axis::K => p.k = value,
            Axis::B => p.b = value,
        }
        p
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::N => "n",
            Axis::K => "k",
            Axis::B => "b",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "n" => Ok(Axis::N),
            "k" => Ok(Axis::K),
            "b" => Ok(Axis::B),
            _ => Err(format!("unknown axis '{s}', expected n, k or b")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub base: Params,
    pub axis: Axis,
    pub values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub algos: Vec<Algo>,
    /// Timing repeats per measurement; see [`measure`].
    pub repeats: usize,
}

impl Sweep {
    /// Warning for sweeps whose axis cannot affect any chosen algorithm.
    pub fn notice(&self) -> Option<String> {
        (self.axis == Axis::B && !self.algos.iter().any(|a| a.uses_tree())).then(|| {
            "notice: block size only affects rmm-vcp; the chosen algorithms should show flat timings".to_string()
        })
    }

    /// Raw rows in (value, seed, algo) order, then one mean row per
    /// (value, algo). `on_row` sees each raw row as it is measured.
    pub fn run(&self, mut on_row: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
        let mut raw = Vec::new();
        let mut datasets: HashMap<(usize, u64), Vec<UncertainObject>> = HashMap::new();
        for &value in &self.values {
            for &seed in &self.seeds {
                let params = Params { seed, ..self.axis.apply(&self.base, value) };
                params.validate()?;
                // only n changes the data; k and b sweeps reuse it per seed
                let objects = match datasets.entry((params.n, seed)) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(generate(&GenSpec::from_params(&params))?),
                };
                for &algo in &self.algos {
                    let row = measure(objects, &params, algo, self.repeats)?;
                    on_row(&row);
                    raw.push(row);
                }
            }
            if self.axis == Axis::N {
                datasets.clear();
            }
        }
        let mut rows = raw.clone();
        for &value in &self.values {
            for &algo in &self.algos {
                let group: Vec<MetricsRow> = raw
                    .iter()
                    .filter(|r| r.algo == algo && axis_value(self.axis, r) == value)
                    .cloned()
                    .collect();
                rows.extend(MetricsRow::mean(&group));
            }
        }
        Ok(rows)
    }
}

fn axis_value(axis: Axis, r: &MetricsRow) -> usize {
    match axis {
        Axis::N => r.n,
        Axis::K => r.k,
        Axis::B => r.b,
    }
}
