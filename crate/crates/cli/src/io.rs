use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDate, NaiveDateTime};
use mrs_core::model::presets;
use mrs_core::MrsModel;

/// Reads a model from a `.kv` or `.json` file, or `preset:<name>`.
pub fn load_model(spec: &str) -> Result<MrsModel> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return match name {
            "model1" => Ok(presets::model1()),
            "model2" => Ok(presets::model2()),
            "emlike-failure" => Ok(presets::emlike_failure()),
            _ => bail!("unknown preset `{name}` (expected model1, model2 or emlike-failure)"),
        };
    }
    let text = fs::read_to_string(spec).with_context(|| format!("cannot read model file {spec}"))?;
    let model = if spec.ends_with(".json") {
        MrsModel::from_json(&text)
    } else {
        MrsModel::from_kv(&text)
    };
    model.with_context(|| format!("invalid model file {spec}"))
}

/// Output sink: a file, or stdout for `None` / `-`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Writes one `#` comment line followed by CSV rows.
pub fn write_csv(path: Option<&Path>, header_comment: &str, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = sink(path)?;
    writeln!(out, "# {header_comment}")?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read data file {}", path.display()))
}

/// A univariate series with a label (time index or date) per row.
pub struct Series {
    pub labels: Vec<String>,
    pub label_name: String,
    pub x: Vec<f64>,
    /// Regime column if present (1-based, as written by `simulate`).
    pub r: Option<Vec<usize>>,
}

/// Reads the `x` column of a CSV (or its only column). A `date` or `t`
/// column, when present, labels the rows.
pub fn read_series(path: &Path) -> Result<Series> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let xcol = match (find("x"), headers.len()) {
        (Some(c), _) => c,
        (None, 1) => 0,
        _ => bail!("{} has no `x` column", path.display()),
    };
    let (label_col, label_name) = match (find("date"), find("t")) {
        (Some(c), _) => (Some(c), "date"),
        (None, Some(c)) => (Some(c), "t"),
        _ => (None, "t"),
    };
    let rcol = find("r");
    let mut s = Series {
        labels: Vec::new(),
        label_name: label_name.to_string(),
        x: Vec::new(),
        r: rcol.map(|_| Vec::new()),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("malformed row {} in {}", i + 1, path.display()))?;
        let field = |c: usize| rec.get(c).ok_or_else(|| anyhow!("row {} in {} is too short", i + 1, path.display()));
        let v: f64 = field(xcol)?
            .parse()
            .with_context(|| format!("row {} in {}: `x` is not a number", i + 1, path.display()))?;
        s.x.push(v);
        s.labels.push(match label_col {
            Some(c) => field(c)?.to_string(),
            None => i.to_string(),
        });
        if let (Some(c), Some(r)) = (rcol, s.r.as_mut()) {
            r.push(field(c)?.parse().with_context(|| format!("row {}: bad regime label", i + 1))?);
        }
    }
    if s.x.is_empty() {
        bail!("{} contains no observations", path.display());
    }
    Ok(s)
}

fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    bail!("cannot parse timestamp `{s}`")
}

/// Reads `timestamp,price` rows.
pub fn read_prices(path: &Path) -> Result<(Vec<NaiveDateTime>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))
    };
    let (tc, pc) = (col("timestamp")?, col("price")?);
    let mut stamps = Vec::new();
    let mut prices = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("malformed row {} in {}", i + 1, path.display()))?;
        let ts = rec.get(tc).unwrap_or_default();
        stamps.push(parse_timestamp(ts).with_context(|| format!("row {} in {}", i + 1, path.display()))?);
        prices.push(
            rec.get(pc)
                .unwrap_or_default()
                .parse::<f64>()
                .with_context(|| format!("row {} in {}: bad price", i + 1, path.display()))?,
        );
    }
    Ok((stamps, prices))
}
