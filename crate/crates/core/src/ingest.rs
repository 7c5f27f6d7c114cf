//! Count-matrix readers and writers.
//!
//! Two on-disk layouts are supported: MatrixMarket coordinate files and
//! dense delimited text. Either may store genes as rows or as columns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counts::GeneCounts;
use crate::error::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFormat {
    MatrixMarket,
    DenseDelimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Orientation {
    #[default]
    GenesAsRows,
    GenesAsColumns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrixSource {
    pub path: PathBuf,
    pub format: MatrixFormat,
    pub orientation: Orientation,
    /// Field separator for delimited text.
    pub delimiter: u8,
    pub has_header: bool,
    pub has_rownames: bool,
}

impl CountMatrixSource {
    pub fn matrix_market(path: impl Into<PathBuf>, orientation: Orientation) -> Self {
        CountMatrixSource {
            path: path.into(),
            format: MatrixFormat::MatrixMarket,
            orientation,
            delimiter: b'\t',
            has_header: false,
            has_rownames: false,
        }
    }

    pub fn delimited(path: impl Into<PathBuf>, orientation: Orientation, delimiter: u8) -> Self {
        CountMatrixSource {
            path: path.into(),
            format: MatrixFormat::DenseDelimited,
            orientation,
            delimiter,
            has_header: false,
            has_rownames: false,
        }
    }

    pub fn with_header(mut self, yes: bool) -> Self {
        self.has_header = yes;
        self
    }

    pub fn with_rownames(mut self, yes: bool) -> Self {
        self.has_rownames = yes;
        self
    }
}

/// Reads every gene of a matrix, in file order.
pub fn load_matrix(source: &CountMatrixSource) -> Result<Vec<GeneCounts>, IngestError> {
    let file = File::open(&source.path).map_err(|e| io_err(&source.path, e))?;
    let mut genes = match source.format {
        MatrixFormat::MatrixMarket => read_matrix_market(BufReader::new(file), source.orientation, &source.path)?,
        MatrixFormat::DenseDelimited => read_delimited(file, source)?,
    };
    dedupe_gene_ids(&mut genes);
    Ok(genes)
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source }
}

/// Default identifier for the gene at `index`.
pub fn default_gene_id(index: usize) -> String {
    format!("gene_{index}")
}

/// Suffixes repeated ids with `#2`, `#3`, ... in order of appearance.
pub fn dedupe_gene_ids(genes: &mut [GeneCounts]) {
    let mut seen: HashSet<String> = genes.iter().map(|g| g.gene_id().to_string()).collect();
    let mut count: HashMap<String, u32> = HashMap::new();
    for g in genes.iter_mut() {
        let id = g.gene_id().to_string();
        let c = count.entry(id.clone()).or_insert(0);
        *c += 1;
        if *c > 1 {
            let mut k = *c;
            let mut renamed = format!("{id}#{k}");
            while seen.contains(&renamed) {
                k += 1;
                renamed = format!("{id}#{k}");
            }
            log::warn!("duplicate gene id {id:?} renamed to {renamed:?}");
            seen.insert(renamed.clone());
            g.set_gene_id(renamed);
        }
    }
}

enum BadValue {
    Negative,
    NonInteger,
}

/// Integer token, also accepting integral decimals such as `3.0`.
fn parse_count(tok: &str) -> Result<u64, BadValue> {
    if let Ok(v) = tok.parse::<u64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v < 0.0 || tok.starts_with('-') => Err(BadValue::Negative),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v < 2f64.powi(53) => Ok(v as u64),
        _ => Err(BadValue::NonInteger),
    }
}

fn bad_value(kind: BadValue, line: u64, offset: u64, gene: usize, cell: usize, value: &str) -> IngestError {
    let value = value.to_string();
    match kind {
        BadValue::Negative => IngestError::Negative { line, offset, gene, cell, value },
        BadValue::NonInteger => IngestError::NonInteger { line, offset, gene, cell, value },
    }
}

/// Parses a `%%MatrixMarket matrix coordinate integer general` stream.
/// Memory grows with the stored entries only.
pub fn read_matrix_market<R: BufRead>(
    mut reader: R,
    orientation: Orientation,
    path: &Path,
) -> Result<Vec<GeneCounts>, IngestError> {
    let mut buf = String::new();
    let mut line_no = 0u64;
    let mut offset = 0u64;
    let mut next_line = |buf: &mut String, line_no: &mut u64, offset: &mut u64| -> Result<Option<u64>, IngestError> {
        buf.clear();
        let start = *offset;
        let n = reader.read_line(buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            return Ok(None);
        }
        *line_no += 1;
        *offset += n as u64;
        Ok(Some(start))
    };

    if next_line(&mut buf, &mut line_no, &mut offset)?.is_none() {
        return Err(IngestError::Header { line: 1, msg: "empty file".into() });
    }
    let banner: Vec<String> = buf.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    let banner: Vec<&str> = banner.iter().map(String::as_str).collect();
    match banner.as_slice() {
        ["%%matrixmarket", "matrix", "coordinate", field, "general"] if matches!(*field, "integer" | "real") => {}
        _ => {
            return Err(IngestError::Header {
                line: 1,
                msg: format!("expected `%%MatrixMarket matrix coordinate integer general`, got {:?}", buf.trim_end()),
            })
        }
    }

    let (n_rows, n_cols, nnz) = loop {
        let Some(start) = next_line(&mut buf, &mut line_no, &mut offset)? else {
            return Err(IngestError::Header { line: line_no + 1, msg: "missing size line".into() });
        };
        let t = buf.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let dims: Vec<Option<u64>> = t.split_whitespace().map(|s| s.parse().ok()).collect();
        match dims.as_slice() {
            [Some(r), Some(c), Some(z)] => break (*r as usize, *c as usize, *z),
            _ => {
                return Err(IngestError::Malformed {
                    line: line_no,
                    offset: start,
                    msg: format!("size line must be `rows cols entries`, got {t:?}"),
                })
            }
        }
    };
    let (n_genes, n_cells) = match orientation {
        Orientation::GenesAsRows => (n_rows, n_cols),
        Orientation::GenesAsColumns => (n_cols, n_rows),
    };
    if n_cells == 0 && n_genes > 0 {
        return Err(IngestError::Dimension { line: line_no, offset: 0, msg: "matrix has no cells".into() });
    }

    let mut nonzero: Vec<Vec<u64>> = vec![Vec::new(); n_genes];
    let mut stored = vec![0u64; n_genes];
    let mut seen = 0u64;
    while let Some(start) = next_line(&mut buf, &mut line_no, &mut offset)? {
        let t = buf.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(IngestError::Malformed {
                line: line_no,
                offset: start,
                msg: format!("expected `row col value`, got {t:?}"),
            });
        }
        let index = |s: &str, bound: usize, what: &str| -> Result<usize, IngestError> {
            match s.parse::<usize>() {
                Ok(i) if (1..=bound).contains(&i) => Ok(i - 1),
                Ok(i) => Err(IngestError::Dimension {
                    line: line_no,
                    offset: start,
                    msg: format!("{what} index {i} outside 1..={bound}"),
                }),
                Err(_) => Err(IngestError::Malformed {
                    line: line_no,
                    offset: start,
                    msg: format!("bad {what} index {s:?}"),
                }),
            }
        };
        let r = index(toks[0], n_rows, "row")?;
        let c = index(toks[1], n_cols, "column")?;
        let (gene, cell) = match orientation {
            Orientation::GenesAsRows => (r, c),
            Orientation::GenesAsColumns => (c, r),
        };
        seen += 1;
        if seen > nnz {
            return Err(IngestError::Dimension {
                line: line_no,
                offset: start,
                msg: format!("more entries than the {nnz} declared"),
            });
        }
        let v = parse_count(toks[2]).map_err(|k| bad_value(k, line_no, start, gene, cell, toks[2]))?;
        stored[gene] += 1;
        if stored[gene] > n_cells as u64 {
            return Err(IngestError::Dimension {
                line: line_no,
                offset: start,
                msg: format!("gene {gene} has more stored entries than its {n_cells} cells"),
            });
        }
        if v > 0 {
            nonzero[gene].push(v);
        }
    }
    if seen != nnz {
        return Err(IngestError::Dimension {
            line: line_no,
            offset,
            msg: format!("declared {nnz} entries but found {seen}"),
        });
    }

    Ok(nonzero
        .into_iter()
        .enumerate()
        .map(|(i, values)| {
            let mut map = BTreeMap::new();
            let nz = values.len() as u64;
            for v in values {
                *map.entry(v).or_insert(0u64) += 1;
            }
            map.insert(0, n_cells as u64 - nz);
            GeneCounts::from_map(default_gene_id(i), map)
        })
        .collect())
}

/// `(line, byte offset)` of a record.
fn position(rec: &csv::StringRecord) -> (u64, u64) {
    rec.position().map_or((0, 0), |p| (p.line(), p.byte()))
}

fn read_delimited(file: File, source: &CountMatrixSource) -> Result<Vec<GeneCounts>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(source.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(None)
        .from_reader(BufReader::new(file));

    let mut records = rdr.records();
    let mut header: Option<(csv::StringRecord, u64)> = None;
    if source.has_header {
        match records.next() {
            Some(rec) => {
                let rec = rec?;
                header = Some((rec, 1));
            }
            None => return Err(IngestError::Header { line: 1, msg: "missing header row".into() }),
        }
    }
    let skip = usize::from(source.has_rownames);
    let mut width: Option<usize> = None;

    let check_width = |rec: &csv::StringRecord, width: &mut Option<usize>| -> Result<(), IngestError> {
        let pos = position(&rec);
        match *width {
            None => {
                if rec.len() <= skip {
                    return Err(IngestError::Dimension {
                        line: pos.0,
                        offset: pos.1,
                        msg: "row has no count fields".into(),
                    });
                }
                *width = Some(rec.len());
            }
            Some(w) if w != rec.len() => {
                return Err(IngestError::Dimension {
                    line: pos.0,
                    offset: pos.1,
                    msg: format!("row has {} fields, expected {w}", rec.len()),
                })
            }
            Some(_) => {}
        }
        Ok(())
    };

    // Header names for the data columns; a header may omit the corner cell.
    let column_names = |header: &Option<(csv::StringRecord, u64)>, width: usize| -> Result<Option<Vec<String>>, IngestError> {
        let Some((h, _)) = header else { return Ok(None) };
        let n_data = width - skip;
        let names: Vec<String> = if h.len() == width {
            h.iter().skip(skip).map(str::to_string).collect()
        } else if h.len() == n_data {
            h.iter().map(str::to_string).collect()
        } else {
            let pos = position(h);
            return Err(IngestError::Dimension {
                line: pos.0,
                offset: pos.1,
                msg: format!("header has {} fields, rows have {width}", h.len()),
            });
        };
        Ok(Some(names))
    };

    match source.orientation {
        Orientation::GenesAsRows => {
            let mut genes = Vec::new();
            for rec in records {
                let rec = rec?;
                check_width(&rec, &mut width)?;
                let gene = genes.len();
                let pos = position(&rec);
                let mut map = BTreeMap::new();
                for (cell, tok) in rec.iter().skip(skip).enumerate() {
                    let v = parse_count(tok).map_err(|k| bad_value(k, pos.0, pos.1, gene, cell, tok))?;
                    *map.entry(v).or_insert(0u64) += 1;
                }
                let id = if source.has_rownames { rec[0].to_string() } else { default_gene_id(gene) };
                genes.push(GeneCounts::from_map(id, map));
            }
            if let Some(w) = width {
                column_names(&header, w)?;
            }
            Ok(genes)
        }
        Orientation::GenesAsColumns => {
            let mut maps: Vec<BTreeMap<u64, u64>> = Vec::new();
            let mut cell = 0usize;
            for rec in records {
                let rec = rec?;
                check_width(&rec, &mut width)?;
                if maps.is_empty() {
                    maps = vec![BTreeMap::new(); rec.len() - skip];
                }
                let pos = position(&rec);
                for (gene, tok) in rec.iter().skip(skip).enumerate() {
                    let v = parse_count(tok).map_err(|k| bad_value(k, pos.0, pos.1, gene, cell, tok))?;
                    *maps[gene].entry(v).or_insert(0u64) += 1;
                }
                cell += 1;
            }
            let Some(w) = width else {
                return Err(IngestError::Dimension { line: 1, offset: 0, msg: "matrix has no cells".into() });
            };
            let names = column_names(&header, w)?;
            Ok(maps
                .into_iter()
                .enumerate()
                .map(|(i, m)| {
                    let id = names.as_ref().map_or_else(|| default_gene_id(i), |n| n[i].clone());
                    GeneCounts::from_map(id, m)
                })
                .collect())
        }
    }
}

/// Per-cell counts for a set of genes, all with the same number of cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellCounts {
    pub gene_ids: Vec<String>,
    /// `values[g][c]` is the count of gene `g` in cell `c`.
    pub values: Vec<Vec<u64>>,
}

impl CellCounts {
    pub fn n_genes(&self) -> usize {
        self.values.len()
    }

    pub fn n_cells(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn compact(&self) -> Vec<GeneCounts> {
        self.gene_ids.iter().zip(&self.values).map(|(id, v)| GeneCounts::from_values(id.clone(), v)).collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Writes a MatrixMarket coordinate file; zeros are left implicit.
/// Entries are ordered column-major.
pub fn write_matrix_market(path: &Path, counts: &CellCounts, orientation: Orientation) -> Result<(), IngestError> {
    let mut w = create(path)?;
    let (g, c) = (counts.n_genes(), counts.n_cells());
    let nnz: usize = counts.values.iter().map(|v| v.iter().filter(|&&x| x > 0).count()).sum();
    let (rows, cols) = match orientation {
        Orientation::GenesAsRows => (g, c),
        Orientation::GenesAsColumns => (c, g),
    };
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(w, "{rows} {cols} {nnz}")?;
        match orientation {
            Orientation::GenesAsRows => {
                for cell in 0..c {
                    for (gene, v) in counts.values.iter().enumerate() {
                        if v[cell] > 0 {
                            writeln!(w, "{} {} {}", gene + 1, cell + 1, v[cell])?;
                        }
                    }
                }
            }
            Orientation::GenesAsColumns => {
                for (gene, v) in counts.values.iter().enumerate() {
                    for (cell, &x) in v.iter().enumerate() {
                        if x > 0 {
                            writeln!(w, "{} {} {}", cell + 1, gene + 1, x)?;
                        }
                    }
                }
            }
        }
        w.flush()
    };
    out().map_err(|e| io_err(path, e))
}

/// Writes dense delimited text with a header row and a row-name column.
pub fn write_delimited(
    path: &Path,
    counts: &CellCounts,
    orientation: Orientation,
    delimiter: u8,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(create(path)?);
    let cell_names: Vec<String> = (0..counts.n_cells()).map(|c| format!("cell_{c}")).collect();
    match orientation {
        Orientation::GenesAsRows => {
            w.write_record(std::iter::once("gene").chain(cell_names.iter().map(String::as_str)))?;
            for (id, v) in counts.gene_ids.iter().zip(&counts.values) {
                w.write_record(std::iter::once(id.clone()).chain(v.iter().map(u64::to_string)))?;
            }
        }
        Orientation::GenesAsColumns => {
            w.write_record(std::iter::once("cell").chain(counts.gene_ids.iter().map(String::as_str)))?;
            for (c, name) in cell_names.iter().enumerate() {
                w.write_record(std::iter::once(name.clone()).chain(counts.values.iter().map(|v| v[c].to_string())))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn dense_two_by_two_genes_as_columns() {
        let f = file_with("0\t1\n2\t0\n");
        let genes = load_matrix(&CountMatrixSource::delimited(f.path(), Orientation::GenesAsColumns, b'\t')).unwrap();
        assert_eq!(genes.len(), 2);
        assert_eq!(genes[0].pairs(), &[(0, 1), (2, 1)]);
        assert_eq!(genes[1].pairs(), &[(0, 1), (1, 1)]);
        assert_eq!(genes[0].gene_id(), "gene_0");
    }

    #[test]
    fn empty_matrix_market() {
        let f = file_with("%%MatrixMarket matrix coordinate integer general\n% comment\n3 5 0\n");
        let genes = load_matrix(&CountMatrixSource::matrix_market(f.path(), Orientation::GenesAsRows)).unwrap();
        assert_eq!(genes.len(), 3);
        assert!(genes.iter().all(|g| g.pairs() == [(0, 5)]));
    }

    #[test]
    fn non_integer_entry_names_position() {
        let f = file_with("0,1\n2.5,0\n");
        let err = load_matrix(&CountMatrixSource::delimited(f.path(), Orientation::GenesAsRows, b',')).unwrap_err();
        match err {
            IngestError::NonInteger { line, offset, gene, cell, value } => {
                assert_eq!((line, offset, gene, cell), (2, 4, 1, 0));
                assert_eq!(value, "2.5");
            }
            other => panic!("{other}"),
        }
        let f = file_with("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 2 2.5\n");
        let err = load_matrix(&CountMatrixSource::matrix_market(f.path(), Orientation::GenesAsRows)).unwrap_err();
        assert!(matches!(err, IngestError::NonInteger { line: 3, offset: 55, gene: 0, cell: 1, .. }), "{err:?}");
    }

    #[test]
    fn negative_and_dimension_errors() {
        let f = file_with("1\t-3\n");
        let err = load_matrix(&CountMatrixSource::delimited(f.path(), Orientation::GenesAsRows, b'\t')).unwrap_err();
        assert!(matches!(err, IngestError::Negative { gene: 0, cell: 1, .. }));
        let f = file_with("1\t2\n3\n");
        let err = load_matrix(&CountMatrixSource::delimited(f.path(), Orientation::GenesAsRows, b'\t')).unwrap_err();
        assert!(matches!(err, IngestError::Dimension { line: 2, .. }));
        let f = file_with("%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 4\n");
        let err = load_matrix(&CountMatrixSource::matrix_market(f.path(), Orientation::GenesAsRows)).unwrap_err();
        assert!(matches!(err, IngestError::Dimension { .. }));
        let f = file_with("%%MatrixMarket matrix coordinate integer general\n2 2 1\n3 1 4\n");
        let err = load_matrix(&CountMatrixSource::matrix_market(f.path(), Orientation::GenesAsRows)).unwrap_err();
        assert!(matches!(err, IngestError::Dimension { line: 3, .. }));
        let f = file_with("%%MatrixMarket matrix array integer general\n2 2\n");
        let err = load_matrix(&CountMatrixSource::matrix_market(f.path(), Orientation::GenesAsRows)).unwrap_err();
        assert!(matches!(err, IngestError::Header { line: 1, .. }));
    }

    #[test]
    fn headers_rownames_and_duplicates() {
        let f = file_with("gene,c1,c2\nA,0,3\nB,1,1\nA,2,2\n");
        let src = CountMatrixSource::delimited(f.path(), Orientation::GenesAsRows, b',').with_header(true).with_rownames(true);
        let genes = load_matrix(&src).unwrap();
        let ids: Vec<_> = genes.iter().map(|g| g.gene_id()).collect();
        assert_eq!(ids, ["A", "B", "A#2"]);
        assert_eq!(genes[2].pairs(), &[(2, 2)]);

        // Header without the corner cell.
        let f = file_with("X\tY\nc1\t1\t0\nc2\t5\t0\n");
        let src = CountMatrixSource::delimited(f.path(), Orientation::GenesAsColumns, b'\t')
            .with_header(true)
            .with_rownames(true);
        let genes = load_matrix(&src).unwrap();
        assert_eq!(genes[0].gene_id(), "X");
        assert_eq!(genes[0].pairs(), &[(1, 1), (5, 1)]);
        assert_eq!(genes[1].pairs(), &[(0, 2)]);
    }

    #[test]
    fn dense_and_sparse_encodings_agree() {
        let counts = CellCounts {
            gene_ids: (0..3).map(default_gene_id).collect(),
            values: vec![vec![0, 0, 0, 0], vec![1, 0, 7, 1], vec![3, 3, 0, 2]],
        };
        let dir = tempfile::tempdir().unwrap();
        for orientation in [Orientation::GenesAsRows, Orientation::GenesAsColumns] {
            let mtx = dir.path().join("m.mtx");
            let tsv = dir.path().join("m.tsv");
            write_matrix_market(&mtx, &counts, orientation).unwrap();
            write_delimited(&tsv, &counts, orientation, b'\t').unwrap();
            let a = load_matrix(&CountMatrixSource::matrix_market(&mtx, orientation)).unwrap();
            let b = load_matrix(
                &CountMatrixSource::delimited(&tsv, orientation, b'\t').with_header(true).with_rownames(true),
            )
            .unwrap();
            assert_eq!(a, counts.compact());
            assert_eq!(b, counts.compact());
        }
    }
}
