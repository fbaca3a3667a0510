//! Append-only progress ledger for resumable scans.
//!
//! Line one holds the schema tag and the resolved scan spec as JSON; every
//! further line is `delay_index,phase_index,yield,norm_drift,leakage`.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use attoscope::scan::{ScanPoint, ScanSpec};
use attoscope::{Error, Result};

pub const PROGRESS_SCHEMA: &str = "# attoscope-progress v1";

pub struct Ledger {
    path: PathBuf,
    out: BufWriter<File>,
}

fn header(spec: &ScanSpec) -> Result<String> {
    Ok(format!("{PROGRESS_SCHEMA} {}", serde_json::to_string(spec)?))
}

impl Ledger {
    /// Starts a fresh ledger, replacing any previous one.
    pub fn create(path: &Path, spec: &ScanSpec) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header(spec)?)?;
        out.flush()?;
        Ok(Self { path: path.to_path_buf(), out })
    }

    /// Reopens a ledger for appending and returns the points it holds.
    /// A torn last line from an interrupted write is dropped.
    pub fn resume(path: &Path, spec: &ScanSpec) -> Result<(Self, HashMap<(usize, usize), ScanPoint>)> {
        if !path.exists() {
            return Ok((Self::create(path, spec)?, HashMap::new()));
        }
        let text = fs::read_to_string(path)?;
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().unwrap_or("").trim_end();
        if first != header(spec)? {
            return Err(Error::Config(format!(
                "{} was written for a different scan configuration; rerun without --resume",
                path.display()
            )));
        }
        let mut done = HashMap::new();
        let mut keep = first.len() + 1;
        for line in lines {
            if !line.ends_with('\n') {
                break;
            }
            let Some(p) = parse_line(line.trim_end(), spec) else { break };
            done.insert((p.delay_index, p.phase_index), p);
            keep += line.len();
        }
        if keep < text.len() {
            // drop the torn tail so appended lines stay well formed
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(keep as u64)?;
        }
        let out = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        log::info!("resuming with {} of {} points done", done.len(), spec.n_points());
        Ok((Self { path: path.to_path_buf(), out }, done))
    }

    pub fn record(&mut self, p: &ScanPoint) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{:.16e},{:.16e},{:.16e}",
            p.delay_index, p.phase_index, p.ionization_yield, p.norm_drift, p.boundary_leakage
        )?;
        self.out.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn parse_line(line: &str, spec: &ScanSpec) -> Option<ScanPoint> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 5 {
        return None;
    }
    let i: usize = f[0].parse().ok()?;
    let j: usize = f[1].parse().ok()?;
    Some(ScanPoint {
        delay_index: i,
        phase_index: j,
        delay_fs: *spec.delays_fs.get(i)?,
        phase_rad: *spec.phases_rad.get(j)?,
        ionization_yield: f[2].parse().ok()?,
        norm_drift: f[3].parse().ok()?,
        boundary_leakage: f[4].parse().ok()?,
    })
}
