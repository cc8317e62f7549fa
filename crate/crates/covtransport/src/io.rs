//! Wide-CSV curve files and dimensioned matrix CSVs.
//!
//! A curve file has one curve per row: the group label, then the values on
//! the common grid. An optional first line `group,t1,...,tq` is recognised by
//! its non-numeric first token together with either non-numeric value
//! columns or the literal label `group`; if every grid token parses as a
//! number it is kept as the grid.
//!
//! Matrix files start with a `# rows=R cols=C` line followed by `R` rows of
//! `C` comma-separated values. Numbers are written with Rust's shortest
//! round-trip formatting, so reading a file back is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use covtransport_core::{CurveGroupSet, Mat};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: covtransport_core::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IoError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| IoError::io(path, e))
}

fn parse_number(token: &str) -> Option<f64> {
    token.trim().parse::<f64>().ok()
}

/// Reads a wide-CSV curve file.
pub fn load_curves(path: impl AsRef<Path>) -> Result<CurveGroupSet, IoError> {
    let path = path.as_ref();
    read_curves(open(path)?, path)
}

/// Parses wide-CSV curves from any reader; `path` is only used in messages.
pub fn read_curves<R: Read>(reader: R, path: &Path) -> Result<CurveGroupSet, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut grid = None;
    let mut width: Option<usize> = None;

    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            IoError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let label = &record[0];
        if index == 0 && parse_number(label).is_none() && looks_like_header(&record) {
            let tokens: Vec<Option<f64>> = record.iter().skip(1).map(parse_number).collect();
            width = Some(tokens.len());
            if tokens.iter().all(Option::is_some) {
                grid = Some(tokens.into_iter().flatten().collect());
            }
            continue;
        }
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(col, tok)| {
                parse_number(tok).ok_or_else(|| {
                    IoError::parse(path, line, format!("column {}: '{tok}' is not a number", col + 2))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match width {
            None => width = Some(values.len()),
            Some(q) if q != values.len() => {
                return Err(IoError::parse(
                    path,
                    line,
                    format!("expected {q} values, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        if values.is_empty() {
            return Err(IoError::parse(path, line, "curve has no values"));
        }
        let group = match labels.iter().position(|l| l == label) {
            Some(g) => g,
            None => {
                labels.push(label.to_string());
                members.push(Vec::new());
                labels.len() - 1
            }
        };
        members[group].push(rows.len());
        rows.push(values);
    }

    let q = width.unwrap_or(0);
    if rows.is_empty() {
        return Err(IoError::parse(path, 0, "no curves found"));
    }
    let groups = members
        .iter()
        .map(|idx| {
            let data = idx.iter().flat_map(|&i| rows[i].iter().copied()).collect();
            Mat::from_vec(idx.len(), q, data).expect("rows share the checked width")
        })
        .collect();
    CurveGroupSet::new(labels, groups, grid).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

// A first line whose data columns are all non-numeric names (t1, t2, ...)
// or all numeric grid points is a header. A data row with a non-numeric
// label always has numeric values, so the two only collide when the grid
// tokens are numbers; the label `group` settles that case.
fn looks_like_header(record: &csv::StringRecord) -> bool {
    let rest: Vec<&str> = record.iter().skip(1).collect();
    let numeric = rest.iter().filter(|t| parse_number(t).is_some()).count();
    numeric < rest.len() || record[0].eq_ignore_ascii_case("group")
}

/// Writes curves in the wide format, with a header row carrying the grid
/// when there is one.
pub fn write_curves(path: impl AsRef<Path>, set: &CurveGroupSet) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| IoError::io(path, e);
    write!(w, "group").map_err(io)?;
    match set.grid() {
        Some(grid) => grid.iter().try_for_each(|t| write!(w, ",{t}")),
        None => (1..=set.dim()).try_for_each(|i| write!(w, ",t{i}")),
    }
    .map_err(io)?;
    writeln!(w).map_err(io)?;
    for (label, g) in set.labels().iter().zip(set.groups()) {
        for i in 0..g.rows() {
            write!(w, "{label}").map_err(io)?;
            g.row(i).iter().try_for_each(|x| write!(w, ",{x}")).map_err(io)?;
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes `m` after a `# rows=R cols=C` line.
pub fn write_matrix(path: impl AsRef<Path>, m: &Mat) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_matrix_to(&mut w, m).map_err(|e| IoError::io(path, e))?;
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn write_matrix_to<W: Write>(w: &mut W, m: &Mat) -> std::io::Result<()> {
    writeln!(w, "# rows={} cols={}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        write_row(w, m.row(i))?;
    }
    Ok(())
}

pub(crate) fn write_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    for (j, x) in row.iter().enumerate() {
        if j > 0 {
            write!(w, ",")?;
        }
        write!(w, "{x}")?;
    }
    writeln!(w)
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat, IoError> {
    let path = path.as_ref();
    let mut lines = open(path)?.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| IoError::io(path, e))?
        .ok_or_else(|| IoError::parse(path, 1, "empty file"))?;
    let (rows, cols) = parse_dims(&header).ok_or_else(|| {
        IoError::parse(path, 1, format!("expected '# rows=R cols=C', found '{header}'"))
    })?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        let lineno = i as u64 + 2;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|t| parse_number(t).ok_or_else(|| IoError::parse(path, lineno, format!("'{t}' is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != cols {
            return Err(IoError::parse(
                path,
                lineno,
                format!("expected {cols} values, found {}", values.len()),
            ));
        }
        data.extend(values);
        seen += 1;
    }
    if seen != rows {
        return Err(IoError::parse(path, seen as u64 + 1, format!("expected {rows} rows, found {seen}")));
    }
    Mat::from_vec(rows, cols, data).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_dims(header: &str) -> Option<(usize, usize)> {
    let rest = header.strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for part in rest.split_whitespace() {
        let (key, value) = part.split_once('=')?;
        match key {
            "rows" => rows = value.parse().ok(),
            "cols" => cols = value.parse().ok(),
            _ => return None,
        }
    }
    Some((rows?, cols?))
}

/// Writes one value per line.
pub fn write_column(path: impl AsRef<Path>, values: &[f64]) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| IoError::io(path, e);
    for v in values {
        writeln!(w, "{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a table with a header line and a leading text column.
pub fn write_labelled_rows(
    path: impl AsRef<Path>,
    header: &[String],
    rows: &[(String, Vec<f64>)],
) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| IoError::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (label, values) in rows {
        write!(w, "{label},").map_err(io)?;
        write_row(&mut w, values).map_err(io)?;
    }
    w.flush().map_err(io)
}
