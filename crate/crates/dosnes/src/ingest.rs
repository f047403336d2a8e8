//! Input loading, affinity construction, and embedding export.
//!
//! Three text formats come in: weighted edge lists ("i j w" per line) for
//! symmetric graphs, triplet files ("row col w") for rectangular dyadic
//! data, and dense CSV for vector datasets. Vector data turns into a kNN
//! affinity matrix, either binary or with per-row Gaussian weights whose
//! bandwidth is calibrated to a target perplexity. Embeddings go out as
//! CSV or JSON records and as orthographic SVG snapshots.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{MatrixError, RectNonnegMatrix, SparseSymMatrix};
use crate::sne::{sq_dist, Embedding, SneError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason} in {text:?}")]
    MalformedLine { line: usize, text: String, reason: String },
    #[error("row {row} has no entries; every row needs at least one positive entry")]
    EmptyRow { row: usize },
    #[error("dataset needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("line {line}: point has {got} coordinates, expected {expected}")]
    DimensionMismatch { line: usize, got: usize, expected: usize },
    #[error("invalid affinity config: {0}")]
    BadAffinityConfig(String),
    #[error(
        "perplexity calibration failed for row {row}: entropy target {target_bits:.4} bits \
         not reachable over {k} neighbors"
    )]
    CalibrationFailed { row: usize, target_bits: f64, k: usize },
    #[error("{labels} labels supplied for {points} points")]
    LabelCount { labels: usize, points: usize },
    #[error("viewpoint vector must be nonzero")]
    ZeroViewpoint,
    #[error("snapshot rendering requires a 3-dimensional embedding, got {0}")]
    SnapshotNeedsDim3(usize),
    #[error("bad embedding file: {0}")]
    BadEmbeddingFile(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Sne(#[from] SneError),
}

fn content_lines(source: impl BufRead) -> impl Iterator<Item = Result<(usize, String), std::io::Error>> {
    source.lines().enumerate().filter_map(|(idx, line)| match line {
        Ok(text) => {
            let trimmed = text.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                None
            } else {
                Some(Ok((idx + 1, trimmed.to_string())))
            }
        }
        Err(e) => Some(Err(e)),
    })
}

fn parse_triplet(line: usize, text: &str) -> Result<(usize, usize, f64), IngestError> {
    let malformed = |reason: &str| IngestError::MalformedLine {
        line,
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let mut parts = text.split_whitespace();
    let (a, b, w) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), Some(w), None) => (a, b, w),
        _ => return Err(malformed("expected three fields: id id weight")),
    };
    let a: usize = a.parse().map_err(|_| malformed("first id is not a nonnegative integer"))?;
    let b: usize = b.parse().map_err(|_| malformed("second id is not a nonnegative integer"))?;
    let w: f64 = w.parse().map_err(|_| malformed("weight is not a number"))?;
    if !w.is_finite() || w <= 0.0 {
        return Err(malformed("weight must be positive and finite"));
    }
    Ok((a, b, w))
}

/// Loads a symmetric weighted graph from "i j w" lines. Blank lines and
/// lines starting with '#' are skipped. Self-loops are dropped with a
/// warning (returned and logged), not an error; duplicate edges must agree
/// in weight.
pub fn load_edge_list(
    source: impl BufRead,
) -> Result<(SparseSymMatrix, Vec<String>), IngestError> {
    let mut triplets = Vec::new();
    let mut warnings = Vec::new();
    let mut max_id = None::<usize>;
    for item in content_lines(source) {
        let (line, text) = item?;
        let (i, j, w) = parse_triplet(line, &text)?;
        max_id = Some(max_id.map_or(i.max(j), |m| m.max(i).max(j)));
        if i == j {
            let msg = format!("line {line}: self-loop on node {i} dropped");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        triplets.push((i, j, w));
    }
    let n = max_id.map_or(0, |m| m + 1);
    let matrix = SparseSymMatrix::from_triplets(n, &triplets)?;
    Ok((matrix, warnings))
}

/// Loads a rectangular nonnegative matrix from "row col w" lines.
/// Dimensions are inferred from the largest indices. Every row must have at
/// least one entry: a zero row has no walk distribution downstream.
pub fn load_bipartite(source: impl BufRead) -> Result<RectNonnegMatrix, IngestError> {
    let mut triplets = Vec::new();
    let mut max_row = None::<usize>;
    let mut max_col = None::<usize>;
    for item in content_lines(source) {
        let (line, text) = item?;
        let (i, k, w) = parse_triplet(line, &text)?;
        max_row = Some(max_row.map_or(i, |m| m.max(i)));
        max_col = Some(max_col.map_or(k, |m| m.max(k)));
        triplets.push((i, k, w));
    }
    let n = max_row.map_or(0, |m| m + 1);
    let m = max_col.map_or(0, |m| m + 1);
    let matrix = RectNonnegMatrix::from_triplets(n, m, &triplets)?;
    for (row, sum) in matrix.row_sums().iter().enumerate() {
        if *sum <= 0.0 {
            return Err(IngestError::EmptyRow { row });
        }
    }
    Ok(matrix)
}

/// A set of points in R^D.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl VectorDataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, IngestError> {
        if rows.len() < 2 {
            return Err(IngestError::TooFewPoints(rows.len()));
        }
        let dim = rows[0].len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (idx, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(IngestError::DimensionMismatch {
                    line: idx + 1,
                    got: row.len(),
                    expected: dim,
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(IngestError::MalformedLine {
                    line: idx + 1,
                    text: format!("{row:?}"),
                    reason: "non-finite coordinate".to_string(),
                });
            }
            coords.extend_from_slice(row);
        }
        if dim == 0 {
            return Err(IngestError::BadEmbeddingFile("points have zero dimension".into()));
        }
        Ok(Self { n: rows.len(), dim, coords })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// Loads a dense CSV of points, one comma-separated row of reals per line.
pub fn load_vectors(source: impl BufRead) -> Result<VectorDataset, IngestError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_dim: Option<usize> = None;
    for item in content_lines(source) {
        let (line, text) = item?;
        let mut row = Vec::new();
        for field in text.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| IngestError::MalformedLine {
                line,
                text: text.clone(),
                reason: format!("field {:?} is not a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(IngestError::MalformedLine {
                    line,
                    text: text.clone(),
                    reason: "non-finite coordinate".to_string(),
                });
            }
            row.push(v);
        }
        match expected_dim {
            Some(dim) if row.len() != dim => {
                return Err(IngestError::DimensionMismatch { line, got: row.len(), expected: dim })
            }
            Some(_) => {}
            None => expected_dim = Some(row.len()),
        }
        rows.push(row);
    }
    VectorDataset::from_rows(&rows)
}

/// Weighting scheme for the kNN affinity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityMode {
    /// Weight 1 on each of the k nearest neighbors.
    Binary,
    /// Gaussian weights with per-row bandwidth calibrated to a target
    /// perplexity.
    Perplexity,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AffinityConfig {
    /// Neighbor count; defaults to min(n - 1, ceil(3 * perplexity)).
    pub k: Option<usize>,
    pub perplexity: f64,
    pub mode: AffinityMode,
}

impl AffinityConfig {
    pub fn binary(k: usize) -> Self {
        Self { k: Some(k), perplexity: 1.0, mode: AffinityMode::Binary }
    }

    pub fn perplexity(perplexity: f64) -> Self {
        Self { k: None, perplexity, mode: AffinityMode::Perplexity }
    }

    fn effective_k(&self, n: usize) -> Result<usize, IngestError> {
        let k = match self.k {
            Some(k) => k,
            None => ((3.0 * self.perplexity).ceil() as usize).min(n - 1).max(1),
        };
        if k == 0 || k > n - 1 {
            return Err(IngestError::BadAffinityConfig(format!(
                "k must lie in 1..={} for {n} points, got {k}",
                n - 1
            )));
        }
        Ok(k)
    }
}

const BETA_LO: f64 = 1e-12;
const BETA_HI: f64 = 1e12;
const BISECTION_STEPS: usize = 64;
const ENTROPY_TOL: f64 = 1e-5;

/// Builds the n x n kNN affinity matrix. Row i carries positive weights on
/// exactly the k nearest neighbors of point i (self excluded, distance ties
/// broken by smaller index). In perplexity mode the weights follow
/// `exp(-beta_i |x_i - x_j|^2)` with `beta_i` bisected until the row's
/// entropy matches `log2(perplexity)` within 1e-5 bits; weights are stored
/// rescaled so the nearest neighbor has weight 1, which keeps far rows from
/// underflowing and drops out under the row normalization applied by every
/// consumer.
pub fn build_affinity(
    data: &VectorDataset,
    cfg: &AffinityConfig,
) -> Result<RectNonnegMatrix, IngestError> {
    let n = data.len();
    let k = cfg.effective_k(n)?;
    if cfg.mode == AffinityMode::Perplexity {
        if !(cfg.perplexity >= 1.0 && cfg.perplexity.is_finite()) {
            return Err(IngestError::BadAffinityConfig(format!(
                "perplexity must be at least 1, got {}",
                cfg.perplexity
            )));
        }
        if cfg.perplexity >= n as f64 {
            return Err(IngestError::BadAffinityConfig(format!(
                "perplexity {} must be smaller than the point count {n}",
                cfg.perplexity
            )));
        }
    }

    let mut triplets = Vec::with_capacity(n * k);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for j in 0..n {
            if j != i {
                scratch.push((sq_dist(data.point(i), data.point(j)), j));
            }
        }
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &scratch[..k];
        match cfg.mode {
            AffinityMode::Binary => {
                for &(_, j) in neighbors {
                    triplets.push((i, j, 1.0));
                }
            }
            AffinityMode::Perplexity => {
                let weights = calibrate_row(i, neighbors, cfg.perplexity, k)?;
                for (&(_, j), w) in neighbors.iter().zip(weights) {
                    triplets.push((i, j, w));
                }
            }
        }
    }
    Ok(RectNonnegMatrix::from_triplets(n, n, &triplets)?)
}

/// Bisection on ln(beta): row entropy is decreasing in beta, from log2(k)
/// at beta -> 0 down to the entropy of the distance ties at beta -> inf.
fn calibrate_row(
    row: usize,
    neighbors: &[(f64, usize)],
    perplexity: f64,
    k: usize,
) -> Result<Vec<f64>, IngestError> {
    let target_bits = perplexity.log2();
    let d_min = neighbors[0].0;
    // Shifted exponents keep the largest weight at exactly 1.
    let gaps: Vec<f64> = neighbors.iter().map(|&(d, _)| d - d_min).collect();

    let weights_for = |beta: f64| -> Vec<f64> { gaps.iter().map(|g| (-beta * g).exp()).collect() };
    let entropy_bits = |w: &[f64]| -> f64 {
        let z: f64 = w.iter().sum();
        -w.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / z;
                p * p.log2()
            })
            .sum::<f64>()
    };

    let mut lo = BETA_LO.ln();
    let mut hi = BETA_HI.ln();
    for _ in 0..BISECTION_STEPS {
        let beta = ((lo + hi) / 2.0).exp();
        let w = weights_for(beta);
        let h = entropy_bits(&w);
        if (h - target_bits).abs() <= ENTROPY_TOL {
            return Ok(w);
        }
        if h > target_bits {
            lo = beta.ln();
        } else {
            hi = beta.ln();
        }
    }
    Err(IngestError::CalibrationFailed { row, target_bits, k })
}

/// Output serialization for embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    id: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    label: String,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Writes an embedding as CSV ("id,label,x,y[,z]", header included) or as a
/// JSON array of records. Coordinates print in shortest round-trip form, so
/// parsing them back recovers the exact values.
pub fn export_embedding(
    y: &Embedding,
    labels: Option<&[String]>,
    mut sink: impl Write,
    format: ExportFormat,
) -> Result<(), IngestError> {
    if let Some(l) = labels {
        if l.len() != y.len() {
            return Err(IngestError::LabelCount { labels: l.len(), points: y.len() });
        }
    }
    let label = |i: usize| labels.map_or("", |l| l[i].as_str());
    match format {
        ExportFormat::Csv => {
            let header = if y.dim() == 3 { "id,label,x,y,z" } else { "id,label,x,y" };
            writeln!(sink, "{header}")?;
            for i in 0..y.len() {
                let p = y.point(i);
                write!(sink, "{i},{},{},{}", csv_escape(label(i)), p[0], p[1])?;
                if y.dim() == 3 {
                    write!(sink, ",{}", p[2])?;
                }
                writeln!(sink)?;
            }
        }
        ExportFormat::Json => {
            let records: Vec<PointRecord> = (0..y.len())
                .map(|i| {
                    let p = y.point(i);
                    PointRecord {
                        id: i,
                        label: label(i).to_string(),
                        x: p[0],
                        y: p[1],
                        z: if y.dim() == 3 { Some(p[2]) } else { None },
                    }
                })
                .collect();
            serde_json::to_writer_pretty(&mut sink, &records)
                .map_err(|e| IngestError::BadEmbeddingFile(e.to_string()))?;
            writeln!(sink)?;
        }
    }
    Ok(())
}

fn split_csv_line(text: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if current.is_empty() => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    fields.push(current);
    fields
}

/// Parses the CSV produced by [`export_embedding`] back into an embedding
/// and its labels.
pub fn parse_embedding_csv(
    source: impl BufRead,
) -> Result<(Embedding, Vec<String>), IngestError> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| IngestError::BadEmbeddingFile("empty file".into()))??;
    let dim = match header.trim() {
        "id,label,x,y,z" => 3,
        "id,label,x,y" => 2,
        other => {
            return Err(IngestError::BadEmbeddingFile(format!("unrecognized header {other:?}")))
        }
    };
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut count = 0usize;
    for (idx, line) in lines.enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(text.trim_end_matches(['\r', '\n']));
        if fields.len() != 2 + dim {
            return Err(IngestError::MalformedLine {
                line: idx + 2,
                text,
                reason: format!("expected {} fields, got {}", 2 + dim, fields.len()),
            });
        }
        labels.push(fields[1].clone());
        for field in &fields[2..] {
            let v: f64 = field.parse().map_err(|_| IngestError::MalformedLine {
                line: idx + 2,
                text: text.clone(),
                reason: format!("coordinate {field:?} is not a number"),
            })?;
            coords.push(v);
        }
        count += 1;
    }
    let y = Embedding::from_coords(count, dim, coords)?;
    Ok((y, labels))
}

/// Parses the JSON produced by [`export_embedding`].
pub fn parse_embedding_json(
    source: impl Read,
) -> Result<(Embedding, Vec<String>), IngestError> {
    let records: Vec<PointRecord> = serde_json::from_reader(source)
        .map_err(|e| IngestError::BadEmbeddingFile(e.to_string()))?;
    let dim = match records.first() {
        Some(r) if r.z.is_some() => 3,
        Some(_) => 2,
        None => return Err(IngestError::BadEmbeddingFile("no records".into())),
    };
    let mut coords = Vec::with_capacity(records.len() * dim);
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        match (dim, r.z) {
            (3, Some(z)) => coords.extend_from_slice(&[r.x, r.y, z]),
            (2, None) => coords.extend_from_slice(&[r.x, r.y]),
            _ => {
                return Err(IngestError::BadEmbeddingFile(format!(
                    "record {} mixes 2-D and 3-D points",
                    r.id
                )))
            }
        }
        labels.push(r.label.clone());
    }
    let y = Embedding::from_coords(records.len(), dim, coords)?;
    Ok((y, labels))
}

const FAR_OPACITY: f64 = 0.25;
const MARKER_COLOR: &str = "#2f6f8f";

/// Renders an orthographic view of a 3-D embedding as an SVG document: the
/// points project onto the plane perpendicular to `viewpoint`, far-side
/// points (negative depth along the view axis) draw first at reduced
/// opacity, and each point becomes exactly one `<circle>` whose cx/cy are
/// the in-plane coordinates in data units.
pub fn render_snapshot(
    y: &Embedding,
    viewpoint: [f64; 3],
    mut sink: impl Write,
) -> Result<(), IngestError> {
    if y.dim() != 3 {
        return Err(IngestError::SnapshotNeedsDim3(y.dim()));
    }
    let vnorm = viewpoint.iter().map(|v| v * v).sum::<f64>().sqrt();
    if vnorm <= 0.0 || !vnorm.is_finite() {
        return Err(IngestError::ZeroViewpoint);
    }
    let w = [viewpoint[0] / vnorm, viewpoint[1] / vnorm, viewpoint[2] / vnorm];
    let up = if w[1].abs() > 0.999 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
    let mut right = cross(up, w);
    let rnorm = right.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in right.iter_mut() {
        *v /= rnorm;
    }
    let true_up = cross(w, right);

    struct Marker {
        u: f64,
        v: f64,
        depth: f64,
    }
    let mut markers: Vec<Marker> = (0..y.len())
        .map(|i| {
            let p = y.point(i);
            Marker { u: dot(p, &right), v: dot(p, &true_up), depth: dot(p, &w) }
        })
        .collect();
    markers.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap());

    let radius = (0..y.len()).map(|i| y.radius(i)).fold(0.0, f64::max);
    let extent = if radius > 0.0 { radius * 1.05 } else { 1.05 };
    let marker_r = extent * 0.02;

    writeln!(sink, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        sink,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="640" viewBox="{} {} {} {}">"#,
        -extent,
        -extent,
        2.0 * extent,
        2.0 * extent
    )?;
    for m in &markers {
        let opacity = if m.depth < 0.0 { FAR_OPACITY } else { 1.0 };
        writeln!(
            sink,
            r#"<circle cx="{}" cy="{}" r="{marker_r}" fill="{MARKER_COLOR}" fill-opacity="{opacity}"/>"#,
            m.u, -m.v
        )?;
    }
    writeln!(sink, "</svg>")?;
    Ok(())
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(p: &[f64], v: &[f64; 3]) -> f64 {
    p[0] * v[0] + p[1] * v[1] + p[2] * v[2]
}

/// Convenience used by tests and the CLI: collect the (cx, cy, opacity)
/// triples of every circle in a rendered snapshot.
pub fn scan_snapshot_markers(svg: &str) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for chunk in svg.split("<circle ").skip(1) {
        let attr = |name: &str| -> Option<f64> {
            let key = format!("{name}=\"");
            let start = chunk.find(&key)? + key.len();
            let end = chunk[start..].find('"')? + start;
            chunk[start..end].parse().ok()
        };
        if let (Some(cx), Some(cy), Some(op)) = (attr("cx"), attr("cy"), attr("fill-opacity")) {
            out.push((cx, cy, op));
        }
    }
    out
}
