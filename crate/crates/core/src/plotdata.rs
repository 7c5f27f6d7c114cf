//! Tidy data files for figures, derived from a results table.
//!
//! Parameters sitting exactly on a restriction value (`p0 = 1`, `d = 1`,
//! `m = 0`, ...) are counted in separate boundary strips rather than in the
//! interior histogram bins.

use std::io::Write;
use std::path::Path;

use crate::counts::GeneCounts;
use crate::error::IngestError;
use crate::model::{truncated_pmf_covering, DiscretePmf};
use crate::pipeline::ResultRow;

/// Columns of the 2-D histograms, with their restriction value and axis scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    P0,
    P1,
    P2,
    M,
    D,
    MuG,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::P0, Param::P1, Param::P2, Param::M, Param::D, Param::MuG];

    pub fn name(self) -> &'static str {
        match self {
            Param::P0 => "p0",
            Param::P1 => "p1",
            Param::P2 => "p2",
            Param::M => "m",
            Param::D => "d",
            Param::MuG => "mu_g",
        }
    }

    pub fn get(self, r: &ResultRow) -> f64 {
        match self {
            Param::P0 => r.p0,
            Param::P1 => r.p1,
            Param::P2 => r.p2,
            Param::M => r.m,
            Param::D => r.d,
            Param::MuG => r.mu_g,
        }
    }

    /// Values that mark a restricted fit.
    pub fn boundary_values(self) -> &'static [f64] {
        match self {
            Param::P0 => &[1.0],
            Param::P1 | Param::P2 => &[0.0],
            Param::M | Param::MuG => &[0.0],
            Param::D => &[1.0],
        }
    }

    /// Interior bins are uniform on this scale.
    pub fn log_scale(self) -> bool {
        matches!(self, Param::M | Param::D | Param::MuG)
    }

    fn to_axis(self, v: f64) -> f64 {
        match self {
            Param::D => (v - 1.0).log10(),
            Param::M | Param::MuG => v.log10(),
            _ => v,
        }
    }

    fn from_axis(self, a: f64) -> f64 {
        match self {
            Param::D => 1.0 + 10f64.powf(a),
            Param::M | Param::MuG => 10f64.powf(a),
            _ => a,
        }
    }

    fn boundary_of(self, v: f64) -> Option<f64> {
        self.boundary_values().iter().copied().find(|&b| v == b)
    }
}

/// Interior bin edges on the axis scale: fixed `[0, 1]` for probabilities,
/// data range otherwise.
fn axis_range(p: Param, rows: &[ResultRow]) -> Option<(f64, f64)> {
    if !p.log_scale() {
        return Some((0.0, 1.0));
    }
    let vals: Vec<f64> = rows
        .iter()
        .map(|r| p.get(r))
        .filter(|&v| p.boundary_of(v).is_none())
        .map(|v| p.to_axis(v))
        .filter(|a| a.is_finite())
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return None;
    }
    Some(if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Boundary(f64),
    Bin(usize),
}

fn cell(p: Param, v: f64, range: Option<(f64, f64)>, bins: usize) -> Option<Cell> {
    if let Some(b) = p.boundary_of(v) {
        return Some(Cell::Boundary(b));
    }
    let (lo, hi) = range?;
    let a = p.to_axis(v);
    if !a.is_finite() {
        return None;
    }
    let t = ((a - lo) / (hi - lo) * bins as f64).floor();
    Some(Cell::Bin((t.max(0.0) as usize).min(bins - 1)))
}

fn edges(p: Param, c: Cell, range: Option<(f64, f64)>, bins: usize) -> (&'static str, f64, f64) {
    match c {
        Cell::Boundary(b) => ("boundary", b, b),
        Cell::Bin(i) => {
            let (lo, hi) = range.expect("bins imply a range");
            let w = (hi - lo) / bins as f64;
            ("interior", p.from_axis(lo + w * i as f64), p.from_axis(lo + w * (i + 1) as f64))
        }
    }
}

fn tsv(out: impl Write) -> csv::Writer<impl Write> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(out)
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Ternary bins over `(p0, p1, p2)`: `bins` slices per side, one row per
/// bin of the triangle, including empty ones.
pub fn write_ternary<W: Write>(out: W, rows: &[ResultRow], bins: usize) -> Result<(), csv::Error> {
    let mut counts = vec![vec![0u64; bins]; bins];
    for r in rows {
        let i = ((r.p0 * bins as f64).floor() as usize).min(bins - 1);
        let j = ((r.p1 * bins as f64).floor() as usize).min(bins - 1 - i);
        counts[i][j] += 1;
    }
    let total = rows.len().max(1) as f64;
    let mut w = tsv(out);
    w.write_record(["i_p0", "i_p1", "center_p0", "center_p1", "center_p2", "count", "density"])?;
    let step = 1.0 / bins as f64;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate().take(bins - i) {
            let c0 = (i as f64 + 1.0 / 3.0) * step;
            let c1 = (j as f64 + 1.0 / 3.0) * step;
            w.write_record([
                i.to_string(),
                j.to_string(),
                num(c0),
                num(c1),
                num(1.0 - c0 - c1),
                c.to_string(),
                num(c as f64 / total),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 2-D histograms for every parameter pair. Rows carry each axis' region
/// (`interior` or `boundary`) and edges; boundary rows have equal edges at
/// the restriction value. Only non-empty cells are written.
pub fn write_hist2d<W: Write>(out: W, rows: &[ResultRow], bins: usize) -> Result<(), csv::Error> {
    let ranges: Vec<_> = Param::ALL.iter().map(|&p| axis_range(p, rows)).collect();
    let mut w = tsv(out);
    w.write_record(["x_param", "y_param", "x_region", "x_lo", "x_hi", "y_region", "y_lo", "y_hi", "count"])?;
    for (a, &px) in Param::ALL.iter().enumerate() {
        for (b, &py) in Param::ALL.iter().enumerate().skip(a + 1) {
            let mut cells: Vec<((Cell, Cell), u64)> = Vec::new();
            for r in rows {
                let (Some(cx), Some(cy)) =
                    (cell(px, px.get(r), ranges[a], bins), cell(py, py.get(r), ranges[b], bins))
                else {
                    continue;
                };
                match cells.iter_mut().find(|e| e.0 == (cx, cy)) {
                    Some(e) => e.1 += 1,
                    None => cells.push(((cx, cy), 1)),
                }
            }
            cells.sort_by(|x, y| order_key(x.0 .0).total_cmp(&order_key(y.0 .0)).then(order_key(x.0 .1).total_cmp(&order_key(y.0 .1))));
            for ((cx, cy), n) in cells {
                let (xr, xl, xh) = edges(px, cx, ranges[a], bins);
                let (yr, yl, yh) = edges(py, cy, ranges[b], bins);
                w.write_record([
                    px.name().to_string(),
                    py.name().to_string(),
                    xr.to_string(),
                    num(xl),
                    num(xh),
                    yr.to_string(),
                    num(yl),
                    num(yh),
                    n.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Boundary cells sort before interior bins.
fn order_key(c: Cell) -> f64 {
    match c {
        Cell::Boundary(b) => -1.0 - b,
        Cell::Bin(i) => i as f64,
    }
}

/// Share of genes on each parameter's restriction value.
pub fn write_boundary<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut w = tsv(out);
    w.write_record(["param", "boundary_value", "n_boundary", "n_total", "proportion"])?;
    for p in Param::ALL {
        for &b in p.boundary_values() {
            let n = rows.iter().filter(|r| p.get(r) == b).count();
            let frac = if rows.is_empty() { 0.0 } else { n as f64 / rows.len() as f64 };
            w.write_record([p.name().to_string(), num(b), n.to_string(), rows.len().to_string(), num(frac)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Empirical and model mass per value for each requested gene. The model
/// column covers the observed maximum and its truncated tail, so it sums to 1.
pub fn write_pmf_tables<W: Write>(
    out: W,
    genes: &[(&GeneCounts, &ResultRow)],
    mass_tol: f64,
) -> Result<(), csv::Error> {
    let mut w = tsv(out);
    w.write_record(["gene_id", "x", "empirical", "model"])?;
    for (g, r) in genes {
        let model = truncated_pmf_covering(&r.theta(), mass_tol, g.max_value());
        let data = DiscretePmf::empirical(g);
        for (x, m) in model.iter() {
            w.write_record([r.gene_id.clone(), x.to_string(), num(data.mass_at(x)), num(m)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Model mean and zero fraction against the diagnostics, one row per gene.
pub fn write_diag_scatter<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut w = tsv(out);
    w.write_record(["gene_id", "mean", "zero_fraction", "wasserstein", "p_b"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    for r in rows {
        w.write_record([r.gene_id.clone(), num(r.theta().mean()), num(r.p0), opt(r.wasserstein), opt(r.p_b)])?;
    }
    w.flush()?;
    Ok(())
}

/// Output files of [`export_all`], relative to the output directory.
pub const TERNARY_FILE: &str = "ternary.tsv";
pub const HIST2D_FILE: &str = "hist2d.tsv";
pub const BOUNDARY_FILE: &str = "boundary.tsv";
pub const PMF_FILE: &str = "pmf.tsv";
pub const SCATTER_FILE: &str = "diag_scatter.tsv";

pub struct ExportOptions {
    pub ternary_bins: usize,
    pub hist_bins: usize,
    pub mass_tol: f64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions { ternary_bins: 20, hist_bins: 30, mass_tol: crate::model::DEFAULT_MASS_TOL }
    }
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<(), csv::Error>) -> Result<(), IngestError> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
    let mut out = std::io::BufWriter::new(file);
    f(&mut out)?;
    out.flush().map_err(|e| IngestError::Io { path, source: e })
}

/// Writes every plot-data file into `dir`. `pmf_genes` pairs counts with
/// their results rows; the pmf file is skipped when it is empty.
pub fn export_all(
    dir: &Path,
    rows: &[ResultRow],
    pmf_genes: &[(&GeneCounts, &ResultRow)],
    opts: &ExportOptions,
) -> Result<(), IngestError> {
    write_file(dir, TERNARY_FILE, |w| write_ternary(w, rows, opts.ternary_bins))?;
    write_file(dir, HIST2D_FILE, |w| write_hist2d(w, rows, opts.hist_bins))?;
    write_file(dir, BOUNDARY_FILE, |w| write_boundary(w, rows))?;
    write_file(dir, SCATTER_FILE, |w| write_diag_scatter(w, rows))?;
    if !pmf_genes.is_empty() {
        write_file(dir, PMF_FILE, |w| write_pmf_tables(w, pmf_genes, opts.mass_tol))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{fit_gene, FitConfig};
    use crate::pipeline::DiagOutcome;

    fn row(g: &GeneCounts) -> ResultRow {
        ResultRow::new(g, &fit_gene(g, &FitConfig::default()), &DiagOutcome::NotRequested)
    }

    fn parse(buf: Vec<u8>) -> Vec<Vec<String>> {
        String::from_utf8(buf).unwrap().lines().skip(1).map(|l| l.split('\t').map(str::to_string).collect()).collect()
    }

    #[test]
    fn boundary_strips() {
        let zero = GeneCounts::from_pairs("z", [(0, 20)]);
        let mut poisson = row(&GeneCounts::from_pairs("p", [(0, 5), (1, 5), (2, 5), (3, 2)]));
        poisson.submodel = "PoissonOnly".into();
        poisson.d = 1.0;
        poisson.m = 1.7;
        let rows = vec![row(&zero), poisson];
        let mut buf = Vec::new();
        write_hist2d(&mut buf, &rows, 10).unwrap();
        let lines = parse(buf);
        // The all-zero gene is on the boundary in every parameter.
        let p0_d: Vec<_> = lines.iter().filter(|l| l[0] == "p0" && l[1] == "d").collect();
        assert!(p0_d.iter().any(|l| l[2] == "boundary" && l[3] == "1" && l[5] == "boundary"));
        // The Poisson gene's d lands in the d = 1 strip, never in an interior bin.
        let m_d: Vec<_> = lines.iter().filter(|l| l[0] == "m" && l[1] == "d").collect();
        assert!(m_d.iter().all(|l| l[5] == "boundary"));
        assert!(m_d.iter().any(|l| l[2] == "interior"));

        let mut buf = Vec::new();
        write_boundary(&mut buf, &rows).unwrap();
        let b = parse(buf);
        let d = b.iter().find(|l| l[0] == "d").unwrap();
        assert_eq!(d[2], "2");
        let p0 = b.iter().find(|l| l[0] == "p0").unwrap();
        assert_eq!(p0[2], "1");
    }

    #[test]
    fn ternary_counts_every_gene_once() {
        let genes = [
            GeneCounts::from_pairs("a", [(0, 20)]),
            GeneCounts::from_pairs("b", [(0, 10), (1, 10)]),
            GeneCounts::from_pairs("c", [(0, 3), (2, 6), (9, 4), (30, 1)]),
        ];
        let rows: Vec<_> = genes.iter().map(row).collect();
        let mut buf = Vec::new();
        write_ternary(&mut buf, &rows, 5).unwrap();
        let lines = parse(buf);
        assert_eq!(lines.len(), 15);
        let total: u64 = lines.iter().map(|l| l[5].parse::<u64>().unwrap()).sum();
        assert_eq!(total, 3);
        assert!(lines.iter().any(|l| l[0] == "4" && l[1] == "0" && l[5] == "1"));
    }

    #[test]
    fn pmf_export_sums_to_one() {
        let g = GeneCounts::from_pairs("g", [(0, 10), (1, 7), (2, 5), (4, 3), (11, 1)]);
        let r = row(&g);
        let mut buf = Vec::new();
        write_pmf_tables(&mut buf, &[(&g, &r)], 1e-10).unwrap();
        let lines = parse(buf);
        let model: f64 = lines.iter().map(|l| l[3].parse::<f64>().unwrap()).sum();
        let data: f64 = lines.iter().map(|l| l[2].parse::<f64>().unwrap()).sum();
        assert!((model - 1.0).abs() < 1e-9);
        assert!((data - 1.0).abs() < 1e-12);
        assert!(lines.iter().any(|l| l[1] == "11"));
    }
}
