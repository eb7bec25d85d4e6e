//! File formats.
//!
//! * State matrices as CSV (one row per time step, optional header) or as
//!   binary: magic `BCD1`, little-endian `u32` T, `u32` N, then `T * N`
//!   little-endian `f64` values in row-major order.
//! * Descent traces as CSV with header `epoch,flipped_index,error,reward,test_error`.
//! * Tasks as a directory of state matrices, a target CSV and a `task.json`
//!   sidecar.
//!
//! Numbers are written with Rust's shortest round-trip formatting, which
//! does not depend on locale.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::descent::DescentTrace;
use crate::error::{Error, Result};
use crate::reservoir::StateMatrix;
use crate::tasks::{TaskData, TaskMeta};

pub const BINARY_MAGIC: &[u8; 4] = b"BCD1";

pub fn write_state_csv<W: Write>(mut w: W, m: &StateMatrix, header: bool) -> Result<()> {
    if header {
        let names: Vec<String> = (0..m.n_nodes()).map(|i| format!("node{i}")).collect();
        writeln!(w, "{}", names.join(","))?;
    }
    for n in 0..m.horizon() {
        let row: Vec<String> = m.row(n).iter().map(f64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a state matrix CSV. A first line that does not parse as numbers
/// is taken as a header.
pub fn read_state_csv<R: Read>(r: R) -> Result<StateMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if ln == 0 => continue,
            Err(e) => return Err(Error::Format(format!("line {}: {e}", ln + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Format("state matrix CSV has no data rows".into()));
    }
    StateMatrix::from_rows(&rows)
}

pub fn write_state_binary<W: Write>(mut w: W, m: &StateMatrix) -> Result<()> {
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
    };
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&dims(m.horizon())?.to_le_bytes())?;
    w.write_all(&dims(m.n_nodes())?.to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_state_binary<R: Read>(mut r: R) -> Result<StateMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let t = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != t * n * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {t}x{n}, found {}",
            t * n * 8,
            buf.len()
        )));
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    StateMatrix::new(t, n, values)
}

pub const TRACE_HEADER: &str = "epoch,flipped_index,error,reward,test_error";

/// Writes one row per epoch. Epoch 0 carries the starting error with an
/// empty flipped index and reward.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &DescentTrace) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(w, "{TRACE_HEADER}")?;
    writeln!(
        w,
        "0,,{},,{}",
        trace.initial_error,
        opt(trace.initial_test_error)
    )?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch,
            r.flipped_index,
            r.error,
            r.reward,
            opt(r.test_error)
        )?;
    }
    Ok(())
}

/// Writes `epoch,mean_error,std_error` rows.
pub fn write_curve_csv<W: Write>(mut w: W, mean: &[f64], std: &[f64]) -> Result<()> {
    writeln!(w, "epoch,mean_error,std_error")?;
    for (k, (m, s)) in mean.iter().zip(std).enumerate() {
        writeln!(w, "{k},{m},{s}")?;
    }
    Ok(())
}

/// Storage format for state matrices inside a task directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "bin",
        }
    }
}

fn write_matrix(path: &Path, m: &StateMatrix, format: MatrixFormat) -> Result<()> {
    let f = BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Csv => write_state_csv(f, m, true),
        MatrixFormat::Binary => write_state_binary(f, m),
    }
}

fn read_matrix(path: &Path) -> Result<StateMatrix> {
    let f = BufReader::new(fs::File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_state_binary(f),
        _ => read_state_csv(f),
    }
}

/// Writes `state_train.*`, `state_test.*`, `targets.csv`, `input.csv` and
/// `task.json` into `dir`.
pub fn write_task(dir: &Path, task: &TaskData, format: MatrixFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ext = format.extension();
    write_matrix(&dir.join(format!("state_train.{ext}")), &task.state_train, format)?;
    if let Some(test) = &task.state_test {
        write_matrix(&dir.join(format!("state_test.{ext}")), test, format)?;
    }
    let mut w = BufWriter::new(fs::File::create(dir.join("targets.csv"))?);
    writeln!(w, "split,index,target")?;
    for (i, t) in task.target_train.iter().enumerate() {
        writeln!(w, "train,{i},{t}")?;
    }
    for (i, t) in task.target_test.iter().enumerate() {
        writeln!(w, "test,{i},{t}")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("input.csv"))?);
    writeln!(w, "index,input")?;
    for (i, u) in task.input.iter().enumerate() {
        writeln!(w, "{i},{u}")?;
    }
    w.flush()?;
    let meta = serde_json::to_string_pretty(&task.meta)?;
    fs::write(dir.join("task.json"), meta + "\n")?;
    Ok(())
}

fn find_matrix(dir: &Path, stem: &str) -> Option<std::path::PathBuf> {
    ["bin", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

/// Reads a task directory written by [`write_task`].
pub fn read_task(dir: &Path) -> Result<TaskData> {
    let meta: TaskMeta = serde_json::from_str(&fs::read_to_string(dir.join("task.json"))?)?;
    let train_path = find_matrix(dir, "state_train")
        .ok_or_else(|| Error::Format("missing state_train matrix".into()))?;
    let state_train = read_matrix(&train_path)?;
    let state_test = find_matrix(dir, "state_test").map(|p| read_matrix(&p)).transpose()?;

    let mut target_train = Vec::new();
    let mut target_test = Vec::new();
    let f = BufReader::new(fs::File::open(dir.join("targets.csv"))?);
    for line in f.lines().skip(1) {
        let line = line?;
        let mut parts = line.split(',');
        let (split, _, value) = (parts.next(), parts.next(), parts.next());
        let value: f64 = value
            .ok_or_else(|| Error::Format(format!("bad target line `{line}`")))?
            .parse()
            .map_err(|e| Error::Format(format!("bad target value: {e}")))?;
        match split {
            Some("train") => target_train.push(value),
            Some("test") => target_test.push(value),
            _ => return Err(Error::Format(format!("bad target split in `{line}`"))),
        }
    }
    let mut input = Vec::new();
    let f = BufReader::new(fs::File::open(dir.join("input.csv"))?);
    for line in f.lines().skip(1) {
        let line = line?;
        let v = line
            .split(',')
            .nth(1)
            .ok_or_else(|| Error::Format(format!("bad input line `{line}`")))?;
        input.push(v.parse().map_err(|e| Error::Format(format!("bad input value: {e}")))?);
    }
    crate::error::check_dim("train targets", meta.t_train, target_train.len())?;
    crate::error::check_dim("test targets", meta.t_test, target_test.len())?;
    crate::error::check_dim("train rows", meta.t_train, state_train.horizon())?;
    Ok(TaskData {
        input,
        target_train,
        target_test,
        state_train,
        state_test,
        meta,
    })
}
