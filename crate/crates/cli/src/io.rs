//! On-disk formats: dataset CSV, line-delimited draws, JSON reports and the
//! per-directory run manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use curemix::sampler::BlockAcceptance;
use curemix::{BlockTarget, LinkSpec, Parameters, PosteriorDraws, SurvivalDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DRAWS_FORMAT: &str = "curemix-draws";
pub const DRAWS_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

// ---------------------------------------------------------------------------
// Dataset CSV.
// ---------------------------------------------------------------------------

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a dataset as `time,censored,group,x1..xP` with one-based arms
/// and the δ = 1 ⇒ censored convention. The intercept column is not stored.
pub fn dataset_to_csv(data: &SurvivalDataset) -> String {
    let p = data.n_predictors();
    let mut out = String::from("time,censored,group");
    for j in 1..=p {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..data.len() {
        out.push_str(&fmt_num(data.time(i)));
        out.push_str(if data.is_censored(i) { ",1" } else { ",0" });
        out.push_str(&format!(",{}", data.group(i) + 1));
        for v in &data.covariates(i)[1..] {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, data: &SurvivalDataset) -> CliResult<()> {
    write_atomic(path, dataset_to_csv(data).as_bytes())
}

/// Parses the dataset CSV. `n_groups` overrides the arm count inferred from
/// the largest label; `flip_censor` reads the flag as δ = 1 ⇒ event.
pub fn parse_dataset(text: &str, n_groups: Option<usize>, flip_censor: bool) -> CliResult<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("unreadable header: {e}")))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[..3] != ["time", "censored", "group"] {
        return Err(CliError::Data(format!(
            "header must start with time,censored,group; got {}",
            names.join(",")
        )));
    }
    let p = names.len() - 3;
    for (j, n) in names[3..].iter().enumerate() {
        if *n != format!("x{}", j + 1) {
            return Err(CliError::Data(format!("predictor column {} must be named x{}, got {n}", j + 4, j + 1)));
        }
    }
    let mut times = Vec::new();
    let mut censored = Vec::new();
    let mut groups = Vec::new();
    let mut predictors = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        if rec.len() != p + 3 {
            return Err(CliError::Data(format!("line {line}: expected {} fields, found {}", p + 3, rec.len())));
        }
        let num = |k: usize| -> CliResult<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("line {line}: `{}` in column {} is not a number", &rec[k], names[k])))
        };
        times.push(num(0)?);
        let flag = match &rec[1] {
            "0" => false,
            "1" => true,
            other => return Err(CliError::Data(format!("line {line}: censoring flag must be 0 or 1, got `{other}`"))),
        };
        censored.push(flag != flip_censor);
        let g: usize = rec[2]
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}: group `{}` is not a positive integer", &rec[2])))?;
        if g == 0 {
            return Err(CliError::Data(format!("line {line}: groups are numbered from 1")));
        }
        groups.push(g - 1);
        predictors.push((3..3 + p).map(num).collect::<CliResult<Vec<f64>>>()?);
    }
    if times.is_empty() {
        return Err(CliError::Data("dataset has no rows".into()));
    }
    let max_g = groups.iter().max().map_or(0, |g| g + 1);
    let g_count = match n_groups {
        Some(n) if n < max_g => {
            return Err(CliError::Data(format!("group label {max_g} exceeds the declared {n} groups")));
        }
        Some(n) => n,
        None => max_g,
    };
    let covariates = predictors
        .into_iter()
        .map(|row| std::iter::once(1.0).chain(row).collect())
        .collect();
    Ok(SurvivalDataset::new(times, censored, groups, covariates, g_count, p)?)
}

pub fn read_dataset(path: &Path, n_groups: Option<usize>, flip_censor: bool) -> CliResult<SurvivalDataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, n_groups, flip_censor).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Posterior draws.
// ---------------------------------------------------------------------------

/// First line of a draws file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsHeader {
    pub format: String,
    pub version: u32,
    pub link: LinkSpec,
    pub n_groups: usize,
    pub n_predictors: usize,
    pub m_per_group: Vec<usize>,
    pub n_draws: usize,
    pub acceptance: Vec<AcceptanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRecord {
    pub target: BlockTarget,
    pub step: f64,
    /// `None` when no post-burn-in proposal was made.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DrawRecord {
    /// `None` stands for a non-finite value.
    loglik: Option<f64>,
    params: Parameters,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn draws_to_string(draws: &PosteriorDraws, n_predictors: usize) -> CliResult<String> {
    let n_groups = draws.m_per_group.len();
    let header = DrawsHeader {
        format: DRAWS_FORMAT.into(),
        version: DRAWS_VERSION,
        link: draws.link,
        n_groups,
        n_predictors,
        m_per_group: draws.m_per_group.clone(),
        n_draws: draws.draws.len(),
        acceptance: draws
            .acceptance
            .iter()
            .map(|a| AcceptanceRecord {
                target: a.target,
                step: a.step,
                rate: finite(a.rate),
            })
            .collect(),
    };
    let enc = |e: serde_json::Error| CliError::Numerical(format!("cannot encode draws: {e}"));
    let mut out = serde_json::to_string(&header).map_err(enc)?;
    out.push('\n');
    for (params, ll) in draws.draws.iter().zip(&draws.loglik) {
        let rec = DrawRecord {
            loglik: finite(*ll),
            params: params.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).map_err(enc)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws, n_predictors: usize) -> CliResult<()> {
    write_atomic(path, draws_to_string(draws, n_predictors)?.as_bytes())
}

/// Reads a draws file, checking the header against its records.
pub fn read_draws(path: &Path) -> CliResult<(DrawsHeader, PosteriorDraws)> {
    let file = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| CliError::Data(format!("{}:{line}: {msg}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| bad(1, "empty draws file".into()))?
        .map_err(|e| bad(1, e.to_string()))?;
    let header: DrawsHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.format != DRAWS_FORMAT {
        return Err(bad(1, format!("unknown format `{}`", header.format)));
    }
    if header.version != DRAWS_VERSION {
        return Err(bad(1, format!("unsupported version {}", header.version)));
    }
    let mut draws = Vec::with_capacity(header.n_draws);
    let mut loglik = Vec::with_capacity(header.n_draws);
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(k + 2, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let rec: DrawRecord = serde_json::from_str(&line).map_err(|e| bad(k + 2, e.to_string()))?;
        rec.params
            .validate(header.link, header.n_predictors)
            .map_err(|e| bad(k + 2, e.to_string()))?;
        if rec.params.n_groups() != header.n_groups {
            return Err(bad(k + 2, "group count differs from header".into()));
        }
        loglik.push(rec.loglik.unwrap_or(f64::NEG_INFINITY));
        draws.push(rec.params);
    }
    if draws.len() != header.n_draws {
        return Err(bad(1, format!("header announces {} draws, file has {}", header.n_draws, draws.len())));
    }
    let acceptance = header
        .acceptance
        .iter()
        .map(|a| BlockAcceptance {
            target: a.target,
            step: a.step,
            rate: a.rate.unwrap_or(f64::NAN),
        })
        .collect();
    let pd = PosteriorDraws {
        link: header.link,
        draws,
        loglik,
        m_per_group: header.m_per_group.clone(),
        acceptance,
    };
    Ok((header, pd))
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub seed: u64,
    /// Effective configuration after merging defaults, file and flags.
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    /// Output file names relative to the directory holding the manifest.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    write_json(&dir.join(MANIFEST_NAME), manifest)
}
