//! Reading spectra from disk and registering ragged m/z grids onto a
//! reference grid by linear interpolation.
//!
//! Two CSV layouts are accepted: long (`id,mz,intensity`, one observation
//! per row, ragged grids welcome) and wide (`mz,<id1>,<id2>,...`, one shared
//! grid). Registration interpolates every individual onto the reference
//! individual's grid, trimmed to the intersection of all m/z hulls so that
//! no value is ever extrapolated.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SpectraPanel;

/// Minimum fraction of the reference grid an individual must cover.
const MIN_COVERAGE: f64 = 0.9;

/// Row filtering and transformation applied while reading.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub mz_min: Option<f64>,
    pub mz_max: Option<f64>,
    /// Replace each intensity v by ln(1 + v).
    pub log_transform: bool,
}

/// Per-individual (m/z, intensity) series, sorted by m/z, possibly ragged.
#[derive(Debug, Clone)]
pub struct RawSpectra {
    ids: Vec<String>,
    mz: Vec<Vec<f64>>,
    intensity: Vec<Vec<f64>>,
}

impl RawSpectra {
    /// Group, filter, transform and sort a list of (id, mz, intensity)
    /// records. Ids keep their first-appearance order.
    pub fn from_records(records: Vec<(String, f64, f64)>, options: &IngestOptions) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut series: Vec<Vec<(f64, f64)>> = Vec::new();
        for (id, mz, intensity) in records {
            if let Some(lo) = options.mz_min {
                if mz < lo {
                    continue;
                }
            }
            if let Some(hi) = options.mz_max {
                if mz > hi {
                    continue;
                }
            }
            let v = if options.log_transform {
                intensity.ln_1p()
            } else {
                intensity
            };
            match ids.iter().position(|existing| *existing == id) {
                Some(k) => series[k].push((mz, v)),
                None => {
                    ids.push(id);
                    series.push(vec![(mz, v)]);
                }
            }
        }
        let mut mz_rows = Vec::with_capacity(ids.len());
        let mut int_rows = Vec::with_capacity(ids.len());
        for (id, mut row) in ids.iter().zip(series) {
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::NonMonotonic { id: id.clone() });
            }
            mz_rows.push(row.iter().map(|p| p.0).collect());
            int_rows.push(row.iter().map(|p| p.1).collect());
        }
        Ok(RawSpectra {
            ids,
            mz: mz_rows,
            intensity: int_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn mz_row(&self, i: usize) -> &[f64] {
        &self.mz[i]
    }

    pub fn intensity_row(&self, i: usize) -> &[f64] {
        &self.intensity[i]
    }

    /// True when every individual already shares one grid.
    pub fn shared_grid(&self) -> bool {
        self.mz.iter().all(|row| row == &self.mz[0])
    }
}

fn parse_field(raw: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} value '{}'", raw.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} value must be finite, got '{}'", raw.trim()),
        });
    }
    Ok(v)
}

/// Parse the long layout (`id,mz,intensity`) from any reader.
pub fn parse_long_csv<R: BufRead>(reader: R, options: &IngestOptions) -> Result<RawSpectra> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?
        .map_err(Error::Io)?;
    let cols: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    if cols != ["id", "mz", "intensity"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 'id,mz,intensity', got '{header}'"),
        });
    }
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty id".into(),
            });
        }
        let mz = parse_field(fields[1], line_no, "mz")?;
        let intensity = parse_field(fields[2], line_no, "intensity")?;
        records.push((id.to_string(), mz, intensity));
    }
    RawSpectra::from_records(records, options)
}

/// Parse the wide layout (`mz,<id1>,<id2>,...`); all rows share the grid.
pub fn parse_wide_csv<R: BufRead>(reader: R, options: &IngestOptions) -> Result<RawSpectra> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?
        .map_err(Error::Io)?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.len() < 2 || !cols[0].eq_ignore_ascii_case("mz") {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 'mz,<id>,...', got '{header}'"),
        });
    }
    let ids: Vec<String> = cols[1..].to_vec();
    let mut grid: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    let mut prev = f64::NEG_INFINITY;
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ids.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, got {}", ids.len() + 1, fields.len()),
            });
        }
        let mz = parse_field(fields[0], line_no, "mz")?;
        if mz <= prev {
            return Err(Error::Parse {
                line: line_no,
                message: "mz values must be strictly increasing".into(),
            });
        }
        prev = mz;
        if let Some(lo) = options.mz_min {
            if mz < lo {
                continue;
            }
        }
        if let Some(hi) = options.mz_max {
            if mz > hi {
                continue;
            }
        }
        grid.push(mz);
        for (j, field) in fields[1..].iter().enumerate() {
            let v = parse_field(field, line_no, "intensity")?;
            rows[j].push(if options.log_transform { v.ln_1p() } else { v });
        }
    }
    Ok(RawSpectra {
        ids,
        mz: vec![grid; rows.len()],
        intensity: rows,
    })
}

pub fn read_long_csv(path: &Path, options: &IngestOptions) -> Result<RawSpectra> {
    parse_long_csv(BufReader::new(File::open(path)?), options)
}

pub fn read_wide_csv(path: &Path, options: &IngestOptions) -> Result<RawSpectra> {
    parse_wide_csv(BufReader::new(File::open(path)?), options)
}

fn lerp_series(xs: &[f64], ys: &[f64], q: f64) -> Result<f64> {
    let lo = xs[0];
    let hi = *xs.last().expect("non-empty series");
    if q < lo || q > hi {
        return Err(Error::OutOfRange { x: q, lo, hi });
    }
    let j = xs.partition_point(|&p| p <= q);
    if j == xs.len() {
        return Ok(ys[xs.len() - 1]);
    }
    let i = j - 1;
    if q == xs[i] {
        return Ok(ys[i]);
    }
    Ok(ys[i] + (q - xs[i]) * (ys[j] - ys[i]) / (xs[j] - xs[i]))
}

/// Register every individual onto the reference individual's grid.
///
/// The reference grid is first trimmed to the intersection of all
/// individuals' m/z hulls (interpolation only, never extrapolation); any
/// individual covering less than 90% of the reference grid is rejected.
/// The reference individual's own values are copied verbatim.
pub fn register(raw: &RawSpectra, reference_id: &str) -> Result<SpectraPanel> {
    let ref_idx = raw
        .ids
        .iter()
        .position(|id| id == reference_id)
        .ok_or_else(|| Error::MissingReference {
            id: reference_id.to_string(),
        })?;
    for (i, row) in raw.mz.iter().enumerate() {
        if row.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "individual {} has fewer than 3 points after filtering",
                raw.ids[i]
            )));
        }
    }
    let grid = &raw.mz[ref_idx];

    // Coverage check against the untrimmed reference grid.
    for (i, row) in raw.mz.iter().enumerate() {
        let (lo, hi) = (row[0], *row.last().expect("non-empty"));
        let covered = grid.iter().filter(|&&g| g >= lo && g <= hi).count();
        let coverage = covered as f64 / grid.len() as f64;
        if coverage < MIN_COVERAGE {
            return Err(Error::InsufficientOverlap {
                id: raw.ids[i].clone(),
                coverage: 100.0 * coverage,
            });
        }
    }

    // Trim to the intersection of hulls; the grid is sorted, so the kept
    // points form one contiguous block.
    let lo = raw
        .mz
        .iter()
        .map(|row| row[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = raw
        .mz
        .iter()
        .map(|row| *row.last().expect("non-empty"))
        .fold(f64::INFINITY, f64::min);
    let start = grid.partition_point(|&g| g < lo);
    let end = grid.partition_point(|&g| g <= hi);
    if end.saturating_sub(start) < 3 {
        return Err(Error::InvalidInput(
            "fewer than 3 reference grid points remain inside the common m/z range".into(),
        ));
    }
    let trimmed: Vec<f64> = grid[start..end].to_vec();

    let mut ys = Vec::with_capacity(raw.n());
    for i in 0..raw.n() {
        if i == ref_idx {
            ys.push(raw.intensity[ref_idx][start..end].to_vec());
        } else {
            let row: Result<Vec<f64>> = trimmed
                .iter()
                .map(|&g| lerp_series(&raw.mz[i], &raw.intensity[i], g))
                .collect();
            ys.push(row?);
        }
    }
    SpectraPanel::new(
        raw.ids.clone(),
        vec![trimmed; raw.n()],
        ys,
        ref_idx,
    )
}

/// Write a panel in the wide layout. Floats are printed in shortest
/// round-trip form, so reading the file back reproduces them exactly.
pub fn write_wide_csv<W: Write>(writer: &mut W, panel: &SpectraPanel) -> Result<()> {
    if panel.common_len().is_none() || !panel.registered() {
        return Err(Error::InvalidInput(
            "only registered panels can be written in the wide layout".into(),
        ));
    }
    write!(writer, "mz")?;
    for id in panel.ids() {
        write!(writer, ",{id}")?;
    }
    writeln!(writer)?;
    let grid = panel.x_row(0);
    for (t, &mz) in grid.iter().enumerate() {
        write!(writer, "{mz}")?;
        for i in 0..panel.n() {
            write!(writer, ",{}", panel.y_row(i)[t])?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Turn raw spectra into a panel: directly when the grids already agree,
/// otherwise by registering onto the requested (or first) individual.
pub fn panel_from_raw(raw: &RawSpectra, baseline_id: Option<&str>) -> Result<SpectraPanel> {
    if raw.n() == 0 {
        return Err(Error::InvalidInput("no spectra in input".into()));
    }
    let reference = match baseline_id {
        Some(id) => id.to_string(),
        None => raw.ids[0].clone(),
    };
    if raw.shared_grid() {
        let ref_idx = raw
            .ids
            .iter()
            .position(|id| *id == reference)
            .ok_or(Error::MissingReference { id: reference })?;
        SpectraPanel::new(
            raw.ids.clone(),
            raw.mz.clone(),
            raw.intensity.clone(),
            ref_idx,
        )
    } else {
        register(raw, &reference)
    }
}
