//! Dataset loading (IDX, CSV) and the step / long-tailed imbalance
//! generators.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceKind {
    Step,
    Longtail,
}

impl std::str::FromStr for ImbalanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Self::Step),
            "longtail" | "long-tailed" | "long_tail" => Ok(Self::Longtail),
            other => Err(Error::Parameter(format!("unknown imbalance kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    pub kind: ImbalanceKind,
    /// Majority-to-minority size ratio, `>= 1`.
    pub ratio: f64,
    /// Step imbalance only: make the second half of the classes the majority.
    #[serde(default)]
    pub invert: bool,
}

impl ImbalanceSpec {
    pub fn new(kind: ImbalanceKind, ratio: f64) -> Result<Self> {
        let spec = Self {
            kind,
            ratio,
            invert: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 1.0) || !self.ratio.is_finite() {
            return Err(Error::Parameter(format!(
                "imbalance ratio must be a finite value >= 1, got {}",
                self.ratio
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub class_counts: Vec<usize>,
    pub imbalance: Option<ImbalanceSpec>,
}

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub labels: Option<Vec<usize>>,
    pub meta: DatasetMeta,
}

/// Per-class counts for labels `0..=max`.
pub fn class_counts(labels: &[usize]) -> Vec<usize> {
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; c];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Matrix<T>, labels: Option<Vec<usize>>, source: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::len("Dataset::new", x.rows(), l.len()));
            }
        }
        let class_counts = labels.as_deref().map(class_counts).unwrap_or_default();
        Ok(Self {
            x,
            labels,
            meta: DatasetMeta {
                source: source.into(),
                class_counts,
                imbalance: None,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Rows `idx` in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect::<Vec<_>>());
        let class_counts = labels.as_deref().map(class_counts).unwrap_or_default();
        Self {
            x: self.x.select_rows(idx),
            labels,
            meta: DatasetMeta {
                source: self.meta.source.clone(),
                class_counts,
                imbalance: self.meta.imbalance,
            },
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            msg: "truncated header".into(),
        })
}

/// Parses an unsigned-byte IDX file, returning its dimensions and payload.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:#010x}, expected {expected_magic:#010x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|d| be_u32(bytes, 4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("truncated payload: {} of {expected} bytes", payload.len()),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format {
            offset: (header + expected) as u64,
            msg: format!("{} trailing bytes", payload.len() - expected),
        });
    }
    Ok((dims, payload))
}

/// Loads IDX images (scaled by 1/255, flattened per image) and optional labels.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset<T>> {
    let bytes = read_bytes(images_path)?;
    let (dims, payload) = parse_idx(&bytes, IDX_IMAGES_MAGIC)?;
    let n = dims[0];
    let width: usize = dims[1..].iter().product();
    let scale = T::of(1.0 / 255.0);
    let x = Matrix::from_raw(
        n,
        width,
        payload.iter().map(|&b| T::of(f64::from(b)) * scale).collect(),
    );
    let labels = match labels_path {
        Some(p) => {
            let lb = read_bytes(p)?;
            let (ldims, lpayload) = parse_idx(&lb, IDX_LABELS_MAGIC)?;
            if ldims[0] != n {
                return Err(Error::Format {
                    offset: 4,
                    msg: format!("{} labels for {n} images", ldims[0]),
                });
            }
            Some(lpayload.iter().map(|&b| b as usize).collect())
        }
        None => None,
    };
    Dataset::new(x, labels, images_path.display().to_string())
}

/// Encodes images as an unsigned-byte IDX file with dims `[n, rows, cols]`.
pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes a dataset back to IDX, rounding features to bytes. Images are
/// stored as `n × 1 × d` unless `d` is a perfect square.
pub fn write_idx<T: Scalar>(ds: &Dataset<T>, images_path: &Path, labels_path: Option<&Path>) -> Result<()> {
    let d = ds.dim();
    let side = (d as f64).sqrt().round() as usize;
    let (r, c) = if side * side == d { (side, side) } else { (1, d) };
    let pixels: Vec<u8> = ds
        .x
        .data()
        .iter()
        .map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    fs::write(images_path, encode_idx_images(ds.len(), r, c, &pixels)).map_err(|e| Error::io(images_path, e))?;
    if let (Some(p), Some(labels)) = (labels_path, &ds.labels) {
        let bytes = labels
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::Parameter(format!("label {l} does not fit a byte"))))
            .collect::<Result<Vec<_>>>()?;
        fs::write(p, encode_idx_labels(&bytes)).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

/// Loads a numeric CSV. A first row with any non-numeric cell is taken as a
/// header. `label_column` names a header column or, without a header, gives
/// a zero-based index. Features are min-max scaled per column when `scale`.
pub fn load_csv<T: Scalar>(path: &Path, label_column: Option<&str>, scale: bool) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parameter(format!("{other:?}")),
        })?;
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Table {
            row,
            col: 0,
            msg: e.to_string(),
        })?;
        records.push(rec.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
    }
    let has_header = records
        .first()
        .is_some_and(|r| r.iter().any(|c| c.parse::<f64>().is_err()));
    let header = if has_header { Some(records.remove(0)) } else { None };
    let width = header
        .as_ref()
        .or(records.first())
        .map_or(0, Vec::len);
    let label_idx = match label_column {
        None => None,
        Some(name) => Some(match &header {
            Some(h) => h
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Parameter(format!("no column named {name:?}")))?,
            None => name
                .parse::<usize>()
                .ok()
                .filter(|&i| i < width)
                .ok_or_else(|| Error::Parameter(format!("no column {name:?} in a headerless file")))?,
        }),
    };
    let first_row = usize::from(has_header);
    let feat_width = width - usize::from(label_idx.is_some());
    let mut data = Vec::with_capacity(records.len() * feat_width);
    let mut labels = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        let row = r + first_row;
        if rec.len() != width {
            return Err(Error::Table {
                row,
                col: rec.len().min(width),
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Table {
                row,
                col: c,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Table {
                    row,
                    col: c,
                    msg: "non-finite value".into(),
                });
            }
            if Some(c) == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Table {
                        row,
                        col: c,
                        msg: format!("label must be a non-negative integer, got {cell}"),
                    });
                }
                labels.push(v as usize);
            } else {
                data.push(v);
            }
        }
    }
    let n = records.len();
    let mut x = Matrix::new(n, feat_width, data.into_iter().map(T::of).collect())?;
    if scale {
        minmax_scale(&mut x);
    }
    Dataset::new(x, label_idx.map(|_| labels), path.display().to_string())
}

/// Rescales every column to `[0,1]`; constant columns become 0.
pub fn minmax_scale<T: Scalar>(x: &mut Matrix<T>) {
    for c in 0..x.cols() {
        let (lo, hi) = (0..x.rows())
            .map(|r| x.get(r, c))
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for r in 0..x.rows() {
            let v = if range > T::zero() { (x.get(r, c) - lo) / range } else { T::zero() };
            x.set(r, c, v);
        }
    }
}

/// Writes features (and a trailing `label` column when present) with a header.
pub fn write_csv<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Parameter(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|c| format!("x{c}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(io)?;
    for (i, row) in ds.x.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Kept count per class for a balanced input with `per_class` samples each.
pub fn imbalance_counts(spec: &ImbalanceSpec, classes: usize, per_class: usize) -> Result<Vec<usize>> {
    spec.validate()?;
    let counts: Vec<usize> = match spec.kind {
        ImbalanceKind::Step => {
            let majority = classes.div_ceil(2);
            let minority = (per_class as f64 / spec.ratio).floor() as usize;
            (0..classes)
                .map(|c| {
                    let is_major = if spec.invert {
                        c >= classes - majority
                    } else {
                        c < majority
                    };
                    if is_major {
                        per_class
                    } else {
                        minority
                    }
                })
                .collect()
        }
        ImbalanceKind::Longtail => (0..classes)
            .map(|c| {
                if classes < 2 {
                    return per_class;
                }
                let frac = spec.ratio.powf(-(c as f64) / (classes - 1) as f64);
                // absorb rounding on exact endpoints such as 5000 · 0.1
                (per_class as f64 * frac + 1e-9).floor() as usize
            })
            .collect(),
    };
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Parameter(format!(
            "class {c} would keep no samples ({per_class} per class, ratio {})",
            spec.ratio
        )));
    }
    Ok(counts)
}

fn subsample<T: Scalar>(ds: &Dataset<T>, spec: &ImbalanceSpec, rng: &mut Rng) -> Result<Dataset<T>> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::Parameter("imbalance generators need labels".into()))?;
    let counts = class_counts(labels);
    let per_class = counts.iter().copied().min().unwrap_or(0);
    if per_class == 0 {
        return Err(Error::Parameter("every class needs at least one sample".into()));
    }
    let keep = imbalance_counts(spec, counts.len(), per_class)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut chosen = Vec::with_capacity(keep.iter().sum());
    for (members, &k) in by_class.iter().zip(&keep) {
        chosen.extend(
            rng.sample_without_replacement(members.len(), k)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    rng.shuffle(&mut chosen);
    let mut out = ds.subset(&chosen);
    out.meta.imbalance = Some(*spec);
    Ok(out)
}

/// Step imbalance: the first half of the classes keep `n_c` samples, the
/// rest keep `⌊n_c/ρ⌋`.
pub fn make_step_imbalance<T: Scalar>(ds: &Dataset<T>, spec: &ImbalanceSpec, rng: &mut Rng) -> Result<Dataset<T>> {
    if spec.kind != ImbalanceKind::Step {
        return Err(Error::Parameter("expected a step imbalance spec".into()));
    }
    subsample(ds, spec, rng)
}

/// Long-tailed imbalance: class `c` keeps `⌊n_c · ρ^{-c/(C-1)}⌋` samples.
pub fn make_longtail_imbalance<T: Scalar>(ds: &Dataset<T>, spec: &ImbalanceSpec, rng: &mut Rng) -> Result<Dataset<T>> {
    if spec.kind != ImbalanceKind::Longtail {
        return Err(Error::Parameter("expected a long-tail imbalance spec".into()));
    }
    subsample(ds, spec, rng)
}

pub fn make_imbalanced<T: Scalar>(ds: &Dataset<T>, spec: &ImbalanceSpec, rng: &mut Rng) -> Result<Dataset<T>> {
    subsample(ds, spec, rng)
}

/// JSON sidecar describing an imbalanced subsample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceManifest {
    pub kind: ImbalanceKind,
    pub ratio: f64,
    pub seed: u64,
    pub source: String,
    pub original_counts: Vec<usize>,
    pub kept_counts: Vec<usize>,
}

/// Isotropic Gaussian blobs, labelled by blob index.
pub fn gaussian_blobs<T: Scalar>(centers: &[Vec<f64>], sizes: &[usize], sigma: f64, rng: &mut Rng) -> Result<Dataset<T>> {
    if centers.len() != sizes.len() || centers.is_empty() {
        return Err(Error::Parameter("need one size per blob center".into()));
    }
    let d = centers[0].len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, (center, &size)) in centers.iter().zip(sizes).enumerate() {
        if center.len() != d {
            return Err(Error::Parameter("blob centers differ in dimension".into()));
        }
        for _ in 0..size {
            data.extend(center.iter().map(|&m| T::of(m + sigma * rng.normal())));
            labels.push(c);
        }
    }
    let n = labels.len();
    Dataset::new(Matrix::new(n, d, data)?, Some(labels), "blobs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn balanced(classes: usize, per_class: usize) -> Dataset<f64> {
        let n = classes * per_class;
        let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(x, Some(labels), "synthetic").unwrap()
    }

    #[test]
    fn idx_single_white_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.idx");
        fs::write(&p, encode_idx_images(1, 2, 2, &[255; 4])).unwrap();
        let ds: Dataset<f64> = load_idx(&p, None).unwrap();
        assert_eq!(ds.x.shape(), (1, 4));
        assert!(ds.x.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let good = encode_idx_images(2, 2, 2, &[1; 8]);
        let mut bad_magic = good.clone();
        bad_magic[3] = 0x01;
        assert!(matches!(parse_idx(&bad_magic, IDX_IMAGES_MAGIC), Err(Error::Format { offset: 0, .. })));
        let truncated = &good[..good.len() - 3];
        assert!(matches!(parse_idx(truncated, IDX_IMAGES_MAGIC), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&good[..6], IDX_IMAGES_MAGIC), Err(Error::Format { offset: 4, .. })));

        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("i");
        let lab = dir.path().join("l");
        fs::write(&img, &good).unwrap();
        fs::write(&lab, encode_idx_labels(&[0, 1, 2])).unwrap();
        assert!(matches!(load_idx::<f64>(&img, Some(&lab)), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_basic_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,2\n3,4\n").unwrap();
        let ds: Dataset<f64> = load_csv(&p, None, false).unwrap();
        assert_eq!(ds.x, Matrix::from_f64_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());

        let p = dir.path().join("b.csv");
        let mut f = fs::File::create(&p).unwrap();
        writeln!(f, "a,y,b\n1,0,5\n2,1,5\n4,1,5").unwrap();
        let ds: Dataset<f64> = load_csv(&p, Some("y"), true).unwrap();
        assert_eq!(ds.labels, Some(vec![0, 1, 1]));
        assert_eq!(ds.x.shape(), (3, 2));
        assert_eq!(ds.x.row(0), &[0.0, 0.0]);
        assert_eq!(ds.x.row(2), &[1.0, 0.0]);
        assert!((ds.x.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_errors_name_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(load_csv::<f64>(&p, None, true), Err(Error::Table { row: 1, .. })));
        fs::write(&p, "a,b\n1,2\n3,x\n").unwrap();
        assert!(matches!(load_csv::<f64>(&p, None, true), Err(Error::Table { row: 2, col: 1, .. })));
        assert!(matches!(
            load_csv::<f64>(&dir.path().join("missing.csv"), None, true),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn step_counts() {
        let spec = ImbalanceSpec::new(ImbalanceKind::Step, 10.0).unwrap();
        assert_eq!(imbalance_counts(&spec, 10, 5000).unwrap(), [vec![5000; 5], vec![500; 5]].concat());
        let spec = ImbalanceSpec::new(ImbalanceKind::Step, 100.0).unwrap();
        assert_eq!(imbalance_counts(&spec, 10, 5000).unwrap()[9], 50);
        let inv = ImbalanceSpec { invert: true, ..spec };
        assert_eq!(imbalance_counts(&inv, 10, 5000).unwrap()[0], 50);
        assert!(imbalance_counts(&spec, 10, 50).is_err());
        assert!(ImbalanceSpec::new(ImbalanceKind::Step, 0.5).is_err());
    }

    #[test]
    fn longtail_counts() {
        let spec = ImbalanceSpec::new(ImbalanceKind::Longtail, 10.0).unwrap();
        let c = imbalance_counts(&spec, 10, 5000).unwrap();
        assert_eq!((c[0], c[5], c[9]), (5000, 1391, 500));
        let spec = ImbalanceSpec::new(ImbalanceKind::Longtail, 100.0).unwrap();
        let c = imbalance_counts(&spec, 10, 5000).unwrap();
        assert_eq!((c[0], c[9]), (5000, 50));
    }

    #[test]
    fn unit_ratio_keeps_everything() {
        let ds = balanced(4, 25);
        for kind in [ImbalanceKind::Step, ImbalanceKind::Longtail] {
            let out = make_imbalanced(&ds, &ImbalanceSpec::new(kind, 1.0).unwrap(), &mut Rng::new(1)).unwrap();
            assert_eq!(out.meta.class_counts, vec![25; 4]);
            let mut rows: Vec<f64> = out.x.data().to_vec();
            rows.sort_by(f64::total_cmp);
            assert_eq!(rows, ds.x.data());
        }
    }

    #[test]
    fn longtail_total_shrinks_with_ratio() {
        let ds = balanced(5, 200);
        let mut prev = usize::MAX;
        for ratio in [1.0, 2.0, 5.0, 10.0, 50.0] {
            let spec = ImbalanceSpec::new(ImbalanceKind::Longtail, ratio).unwrap();
            let out = make_longtail_imbalance(&ds, &spec, &mut Rng::new(3)).unwrap();
            assert!(out.len() < prev || ratio == 1.0);
            prev = out.len();
        }
    }

    #[test]
    fn generators_subset_and_are_seeded() {
        let ds = balanced(6, 40);
        let spec = ImbalanceSpec::new(ImbalanceKind::Step, 4.0).unwrap();
        let a = make_step_imbalance(&ds, &spec, &mut Rng::new(9)).unwrap();
        let b = make_step_imbalance(&ds, &spec, &mut Rng::new(9)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.meta.class_counts, vec![40, 40, 40, 10, 10, 10]);
        // row i of `balanced` holds value i and label i % classes
        let labels = a.labels.as_ref().unwrap();
        let mut seen = std::collections::HashSet::new();
        for (row, &l) in a.x.row_iter().zip(labels) {
            let i = row[0] as usize;
            assert_eq!(i % 6, l);
            assert!(seen.insert(i));
        }
        assert!(make_longtail_imbalance(&ds, &spec, &mut Rng::new(9)).is_err());
        let unlabeled = Dataset::new(ds.x.clone(), None, "x").unwrap();
        assert!(make_step_imbalance(&unlabeled, &spec, &mut Rng::new(9)).is_err());
    }

    #[test]
    fn blobs_have_requested_sizes() {
        let ds: Dataset<f64> =
            gaussian_blobs(&[vec![0.0, 0.0], vec![3.0, 0.0]], &[10, 4], 0.1, &mut Rng::new(0)).unwrap();
        assert_eq!(ds.meta.class_counts, vec![10, 4]);
        assert_eq!(ds.dim(), 2);
    }
}
