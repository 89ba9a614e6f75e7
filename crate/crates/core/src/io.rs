//! File formats: millisecond timestamp logs, log-binned histograms, and
//! versioned JSON documents for fit results and comparisons.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::likelihood::ItiSet;
use crate::selection::ComparisonMatrix;
use crate::simulate::EventTrain;

pub const FORMAT_VERSION: u64 = 1;
pub const FIT_FORMAT: &str = "burstmodel-fit";
pub const COMPARISON_FORMAT: &str = "burstmodel-comparison";
/// Smallest interval that enters the likelihood, in seconds.
pub const MIN_INTERVAL: f64 = 1e-3;

/// Parses newline-delimited integer milliseconds. A first line `unit=ms` is
/// accepted; blank lines are skipped. Events are sorted and exact duplicates
/// merged (the merge count is logged and returned).
pub fn read_timestamps<R: BufRead>(reader: R) -> Result<(EventTrain, usize)> {
    let mut values = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.replace(' ', "") == "unit=ms") {
            continue;
        }
        let t: i64 = line.parse().map_err(|_| Error::Parse {
            line: n + 1,
            message: format!("expected an integer millisecond timestamp, got `{line}`"),
        })?;
        if t < 0 {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("negative timestamp {t}"),
            });
        }
        values.push(t);
    }
    if values.is_empty() {
        return Err(Error::EmptyTrain);
    }
    let (train, duplicates) = EventTrain::from_unsorted(values);
    if duplicates > 0 {
        log::warn!("merged {duplicates} duplicate timestamp(s)");
    }
    Ok((train, duplicates))
}

pub fn load_timestamps(path: &Path) -> Result<(EventTrain, usize)> {
    let file = std::fs::File::open(path)?;
    read_timestamps(std::io::BufReader::new(file))
}

pub fn format_timestamps(train: &EventTrain) -> String {
    let mut out = String::with_capacity(train.len() * 10 + 8);
    out.push_str("unit=ms\n");
    for t in train.timestamps() {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

pub fn write_timestamps(path: &Path, train: &EventTrain) -> Result<()> {
    write_atomic(path, format_timestamps(train).as_bytes())
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Malformed(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Consecutive differences in seconds, floored at 1 ms.
pub fn compute_itis(train: &EventTrain) -> Result<ItiSet> {
    let ts = train.timestamps();
    if ts.len() < 2 {
        return Err(Error::TooFewEvents(ts.len()));
    }
    let intervals = ts
        .windows(2)
        .map(|w| ((w[1] - w[0]) as f64 / 1000.0).max(MIN_INTERVAL))
        .collect();
    ItiSet::new(intervals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogBinnedHistogram {
    /// Geometric bin edges in seconds, one more than the bins.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (N_total width)` in 1/s.
    pub densities: Vec<f64>,
    /// All intervals, including any outside the binned range.
    pub n_total: usize,
}

impl LogBinnedHistogram {
    /// Geometric bin centres.
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Two columns, bin centre and density.
    pub fn to_table(&self) -> String {
        self.centers()
            .iter()
            .zip(&self.densities)
            .map(|(c, d)| format!("{c:e}\t{d:e}\n"))
            .collect()
    }

    /// Least-squares slope of log density against log centre over the
    /// nonempty bins whose centres lie in `[lo, hi]`.
    pub fn log_log_slope(&self, lo: f64, hi: f64) -> Result<f64> {
        let points: Vec<(f64, f64)> = self
            .centers()
            .into_iter()
            .zip(&self.densities)
            .filter(|(c, d)| *c >= lo && *c <= hi && **d > 0.0)
            .map(|(c, d)| (c.ln(), d.ln()))
            .collect();
        if points.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "fewer than 2 nonempty bins in [{lo}, {hi}]"
            )));
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        Ok(sxy / sxx)
    }
}

/// Histogram on bins of `10^{1/bins_per_decade}` ratio, aligned to decade
/// boundaries. `range` defaults to the data range; intervals outside it are
/// not binned but still count in the normalization, so densities estimate
/// `p(τ)` itself. A single distinct value gets one bin.
pub fn log_binned_histogram(
    data: &ItiSet,
    bins_per_decade: usize,
    range: Option<(f64, f64)>,
) -> Result<LogBinnedHistogram> {
    if bins_per_decade == 0 {
        return Err(Error::InvalidConfig("bins_per_decade must be at least 1".into()));
    }
    let values = data.intervals();
    let (lo, hi) = match range {
        Some((lo, hi)) if lo > 0.0 && hi >= lo && hi.is_finite() => (lo, hi),
        Some((lo, hi)) => return Err(Error::InvalidConfig(format!("invalid range [{lo}, {hi}]"))),
        None => values.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v))),
    };
    let k = bins_per_decade as f64;
    let edges: Vec<f64> = if lo == hi {
        let half = 10f64.powf(0.5 / k);
        vec![lo / half, lo * half]
    } else {
        let first = (lo.log10() * k).floor() as i64;
        let mut last = (hi.log10() * k).ceil() as i64;
        if last == first {
            last += 1;
        }
        (first..=last).map(|i| 10f64.powf(i as f64 / k)).collect()
    };
    let n_bins = edges.len() - 1;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        // Locate by logarithm, then correct for rounding at the edges.
        let mut i = if n_bins == 1 {
            0
        } else {
            ((v.log10() * k).floor() as i64 - (edges[0].log10() * k).round() as i64).clamp(0, n_bins as i64 - 1) as usize
        };
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < n_bins && v >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    let n_total = values.len();
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (n_total as f64 * (w[1] - w[0])))
        .collect();
    Ok(LogBinnedHistogram {
        edges,
        counts,
        densities,
        n_total,
    })
}

/// Serializes `value` inside the envelope. JSON has no non-finite numbers,
/// so the text is read back and refused if it would not load.
fn to_document<T: Serialize + DeserializeOwned>(format: &str, key: &str, value: &T) -> Result<String> {
    let body = serde_json::to_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
    let doc = serde_json::json!({
        "format": format,
        "version": FORMAT_VERSION,
        key: body,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Malformed(e.to_string()))?;
    text.push('\n');
    from_document::<T>(format, key, &text)
        .map_err(|e| Error::Malformed(format!("{key} is not representable ({e}); non-finite value?")))?;
    Ok(text)
}

fn from_document<T: DeserializeOwned>(format: &str, key: &str, text: &str) -> Result<T> {
    let mut doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    let found = doc
        .get("format")
        .and_then(|f| f.as_str())
        .ok_or_else(|| Error::Malformed("missing field `format`".into()))?;
    if found != format {
        return Err(Error::Malformed(format!("expected format `{format}`, found `{found}`")));
    }
    let version = doc
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Malformed("missing field `version`".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let body = doc
        .get_mut(key)
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::Malformed(format!("missing field `{key}`")))?;
    serde_json::from_value(body).map_err(|e| Error::Malformed(format!("{key}: {e}")))
}

pub fn serialize_fit(result: &FitResult) -> Result<String> {
    to_document(FIT_FORMAT, "fit", result)
}

pub fn deserialize_fit(text: &str) -> Result<FitResult> {
    from_document(FIT_FORMAT, "fit", text)
}

pub fn serialize_comparison(matrix: &ComparisonMatrix) -> Result<String> {
    to_document(COMPARISON_FORMAT, "comparison", matrix)
}

pub fn deserialize_comparison(text: &str) -> Result<ComparisonMatrix> {
    from_document(COMPARISON_FORMAT, "comparison", text)
}
