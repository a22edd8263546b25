//! Datasets: seeded synthetic mixtures and IDX image files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdganError, Result};
use crate::linalg::{cholesky, Matrix, SymMatrix};
use crate::rng::{gaussian_matrix, RunRng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Samples in data space, one per row, with a class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(samples: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(LdganError::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.rows()
            )));
        }
        if labels.iter().any(|&c| c >= class_count) {
            return Err(LdganError::invalid("dataset label out of range"));
        }
        Ok(Dataset {
            samples,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// Row indices of each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.class_count];
        for (i, &c) in self.labels.iter().enumerate() {
            idx[c].push(i);
        }
        idx
    }

    pub fn class_mean(&self, c: usize) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
        (!idx.is_empty()).then(|| self.samples.select_rows(&idx).column_means())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Isotropic(f64),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    GaussianMixture {
        components: Vec<GaussianComponent>,
        #[serde(default = "default_true")]
        stratified: bool,
    },
    /// `arms` isotropic Gaussians spaced evenly on a circle of `radius`.
    RingMixture {
        radius: f64,
        arms: usize,
        std: f64,
        #[serde(default = "default_true")]
        stratified: bool,
    },
    IdxImages {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_downsample")]
        downsample: usize,
        #[serde(default)]
        max_count: Option<usize>,
    },
}

fn default_true() -> bool {
    true
}

fn default_downsample() -> usize {
    1
}

impl DatasetSpec {
    /// Single isotropic Gaussian.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Self {
        DatasetSpec::GaussianMixture {
            components: vec![GaussianComponent {
                mean,
                covariance: Covariance::Isotropic(variance),
                weight: 1.0,
            }],
            stratified: true,
        }
    }

    /// Equal-weight isotropic components at the given means.
    pub fn equal_mixture(means: Vec<Vec<f64>>, variance: f64) -> Self {
        let w = 1.0 / means.len() as f64;
        DatasetSpec::GaussianMixture {
            components: means
                .into_iter()
                .map(|mean| GaussianComponent {
                    mean,
                    covariance: Covariance::Isotropic(variance),
                    weight: w,
                })
                .collect(),
            stratified: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::GaussianMixture { components, .. } => {
                let first = components
                    .first()
                    .ok_or_else(|| LdganError::invalid("mixture has no components"))?;
                let dim = first.mean.len();
                if dim == 0 {
                    return Err(LdganError::invalid("component mean is empty"));
                }
                let mut total = 0.0;
                for (k, comp) in components.iter().enumerate() {
                    if comp.mean.len() != dim {
                        return Err(LdganError::invalid(format!(
                            "component {k} has dimension {}, expected {dim}",
                            comp.mean.len()
                        )));
                    }
                    if !(comp.weight > 0.0) {
                        return Err(LdganError::invalid(format!(
                            "component {k} weight must be positive"
                        )));
                    }
                    total += comp.weight;
                    covariance_factor(&comp.covariance, dim)?;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(LdganError::invalid(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            DatasetSpec::RingMixture {
                radius, arms, std, ..
            } => {
                if *arms == 0 || !(*std >= 0.0) || !radius.is_finite() {
                    return Err(LdganError::invalid("ring mixture needs arms >= 1 and std >= 0"));
                }
                Ok(())
            }
            DatasetSpec::IdxImages { downsample, .. } => {
                if *downsample == 0 {
                    return Err(LdganError::invalid("downsample factor must be at least 1"));
                }
                Ok(())
            }
        }
    }

    /// Number of classes the spec produces, when known without reading files.
    pub fn class_count(&self) -> Option<usize> {
        match self {
            DatasetSpec::GaussianMixture { components, .. } => Some(components.len()),
            DatasetSpec::RingMixture { arms, .. } => Some(*arms),
            DatasetSpec::IdxImages { .. } => None,
        }
    }

    /// Materializes the dataset: synthetic kinds draw `n` samples, IDX reads from disk.
    pub fn build(&self, n: usize, rng: &mut RunRng) -> Result<Dataset> {
        match self {
            DatasetSpec::IdxImages {
                images,
                labels,
                downsample,
                max_count,
            } => load_idx(images, labels, *downsample, *max_count),
            _ => generate_mixture(self, n, rng),
        }
    }
}

fn covariance_factor(cov: &Covariance, dim: usize) -> Result<Matrix> {
    match cov {
        Covariance::Isotropic(v) => {
            if !(*v >= 0.0) {
                return Err(LdganError::invalid("variance must be non-negative"));
            }
            Ok(Matrix::identity(dim).scale(v.sqrt()))
        }
        Covariance::Full(rows) => {
            let m = Matrix::from_rows(rows)?;
            if m.shape() != (dim, dim) {
                return Err(LdganError::invalid(format!(
                    "covariance shape {:?}, expected {dim}x{dim}",
                    m.shape()
                )));
            }
            cholesky(&SymMatrix::from_matrix(&m)?)
        }
    }
}

fn ring_components(radius: f64, arms: usize, std: f64) -> Vec<GaussianComponent> {
    (0..arms)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / arms as f64;
            GaussianComponent {
                mean: vec![radius * angle.cos(), radius * angle.sin()],
                covariance: Covariance::Isotropic(std * std),
                weight: 1.0 / arms as f64,
            }
        })
        .collect()
}

/// Per-component counts for stratified sampling: `floor(n w_k)` plus the remainder
/// handed out by largest fractional part, ties to the lower index.
fn stratified_counts(weights: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Draws `n` labelled samples from a synthetic mixture.
pub fn generate_mixture(spec: &DatasetSpec, n: usize, rng: &mut RunRng) -> Result<Dataset> {
    spec.validate()?;
    let (components, stratified) = match spec {
        DatasetSpec::GaussianMixture {
            components,
            stratified,
        } => (components.clone(), *stratified),
        DatasetSpec::RingMixture {
            radius,
            arms,
            std,
            stratified,
        } => (ring_components(*radius, *arms, *std), *stratified),
        DatasetSpec::IdxImages { .. } => {
            return Err(LdganError::invalid("generate_mixture needs a synthetic dataset kind"))
        }
    };
    let dim = components[0].mean.len();
    let factors = components
        .iter()
        .map(|c| covariance_factor(&c.covariance, dim))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();

    let labels: Vec<usize> = if stratified {
        stratified_counts(&weights, n)
            .into_iter()
            .enumerate()
            .flat_map(|(k, count)| std::iter::repeat_n(k, count))
            .collect()
    } else {
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return k;
                    }
                }
                weights.len() - 1
            })
            .collect()
    };

    let noise = gaussian_matrix(rng, n, dim);
    let mut samples = Matrix::zeros(n, dim);
    for (i, &k) in labels.iter().enumerate() {
        let l = &factors[k];
        let e = noise.row(i);
        let out = samples.row_mut(i);
        for r in 0..dim {
            let mut v = components[k].mean[r];
            for c in 0..=r {
                v += l[(r, c)] * e[c];
            }
            out[r] = v;
        }
    }
    Dataset::new(samples, labels, components.len())
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LdganError::Format(format!("{what}: truncated header")))
}

/// Raw IDX image payload: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(LdganError::Format(format!(
            "images: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(LdganError::Format(format!(
            "images: payload has {} bytes, header promises {need}",
            payload.len()
        )));
    }
    Ok((count, rows, cols, &payload[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(LdganError::Format(format!(
            "labels: magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(LdganError::Format(format!(
            "labels: payload has {} bytes, header promises {count}",
            payload.len()
        )));
    }
    Ok(&payload[..count])
}

/// Reads an IDX image/label pair, block-averages `downsample x downsample` patches
/// (edge blocks average the pixels they cover) and maps pixels to `p / 127.5 - 1`.
pub fn load_idx(
    images: &Path,
    labels: &Path,
    downsample: usize,
    max_count: Option<usize>,
) -> Result<Dataset> {
    if downsample == 0 {
        return Err(LdganError::invalid("downsample factor must be at least 1"));
    }
    let image_bytes = fs::read(images)?;
    let label_bytes = fs::read(labels)?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let label_payload = parse_idx_labels(&label_bytes)?;
    if label_payload.len() != count {
        return Err(LdganError::Format(format!(
            "{count} images but {} labels",
            label_payload.len()
        )));
    }
    let take = max_count.map_or(count, |m| m.min(count));
    let out_rows = rows.div_ceil(downsample);
    let out_cols = cols.div_ceil(downsample);
    let width = out_rows * out_cols;
    let mut samples = Matrix::zeros(take, width);
    for n in 0..take {
        let img = &pixels[n * rows * cols..(n + 1) * rows * cols];
        let out = samples.row_mut(n);
        for br in 0..out_rows {
            for bc in 0..out_cols {
                let mut sum = 0.0;
                let mut k = 0usize;
                for r in br * downsample..((br + 1) * downsample).min(rows) {
                    for c in bc * downsample..((bc + 1) * downsample).min(cols) {
                        sum += img[r * cols + c] as f64;
                        k += 1;
                    }
                }
                out[br * out_cols + bc] = (sum / k as f64) / 127.5 - 1.0;
            }
        }
    }
    let labels: Vec<usize> = label_payload[..take].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(samples, labels, class_count)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    /// Test-only IDX writer.
    pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(labels);
        b
    }

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (PathBuf, PathBuf) {
        let (i, l) = (dir.join("img.idx"), dir.join("lab.idx"));
        fs::write(&i, images).unwrap();
        fs::write(&l, labels).unwrap();
        (i, l)
    }

    #[test]
    fn idx_two_images() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..32).map(|v| (v * 8) as u8).collect();
        let (i, l) = write_pair(dir.path(), &idx_images(2, 4, 4, &pixels), &idx_labels(&[7, 3]));
        let d = load_idx(&i, &l, 1, None).unwrap();
        assert_eq!(d.samples.shape(), (2, 16));
        assert_eq!(d.labels, vec![7, 3]);
        for (v, &p) in d.samples.as_slice().iter().zip(&pixels) {
            assert_eq!(*v, p as f64 / 127.5 - 1.0);
        }
    }

    #[test]
    fn idx_pixel_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = write_pair(dir.path(), &idx_images(1, 1, 2, &[255, 0]), &idx_labels(&[0]));
        let d = load_idx(&i, &l, 1, None).unwrap();
        assert_eq!(d.samples.row(0), &[1.0, -1.0]);
    }

    #[test]
    fn idx_downsample_block_mean() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = [0, 255, 255, 0, 10, 10, 10, 10, 20, 20, 20, 20, 30, 30, 30, 30];
        let (i, l) = write_pair(dir.path(), &idx_images(1, 4, 4, &pixels), &idx_labels(&[1]));
        let d = load_idx(&i, &l, 2, None).unwrap();
        assert_eq!(d.samples.shape(), (1, 4));
        let expect = [
            (0.0 + 255.0 + 10.0 + 10.0) / 4.0,
            (255.0 + 0.0 + 10.0 + 10.0) / 4.0,
            25.0,
            25.0,
        ];
        for (v, e) in d.samples.row(0).iter().zip(expect) {
            assert!((v - (e / 127.5 - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn idx_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = idx_images(1, 1, 1, &[0]);
        bad[3] = 0x02;
        let (i, l) = write_pair(dir.path(), &bad, &idx_labels(&[0]));
        assert!(matches!(load_idx(&i, &l, 1, None), Err(LdganError::Format(_))));

        let (i, l) = write_pair(dir.path(), &idx_images(2, 2, 2, &[0; 5]), &idx_labels(&[0, 1]));
        assert!(matches!(load_idx(&i, &l, 1, None), Err(LdganError::Format(_))));

        let (i, l) = write_pair(dir.path(), &idx_images(2, 1, 1, &[0, 1]), &idx_labels(&[0]));
        assert!(matches!(load_idx(&i, &l, 1, None), Err(LdganError::Format(_))));
    }

    #[test]
    fn single_gaussian_mean() {
        let n = 10_000;
        let spec = DatasetSpec::gaussian(vec![0.0, 0.0], 1.0);
        let d = generate_mixture(&spec, n, &mut stream_rng(1, Stream::Dataset)).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        for m in d.samples.column_means() {
            assert!(m.abs() <= bound, "{m}");
        }
    }

    #[test]
    fn stratified_equal_thirds() {
        let spec = DatasetSpec::equal_mixture(vec![vec![0.0], vec![1.0], vec![2.0]], 0.1);
        let d = generate_mixture(&spec, 300, &mut stream_rng(2, Stream::Dataset)).unwrap();
        for c in 0..3 {
            assert_eq!(d.labels.iter().filter(|&&l| l == c).count(), 100);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec::RingMixture {
            radius: 2.0,
            arms: 5,
            std: 0.1,
            stratified: false,
        };
        let a = generate_mixture(&spec, 200, &mut stream_rng(9, Stream::Dataset)).unwrap();
        let b = generate_mixture(&spec, 200, &mut stream_rng(9, Stream::Dataset)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = DatasetSpec::equal_mixture(vec![vec![0.0], vec![1.0]], 0.1);
        if let DatasetSpec::GaussianMixture { components, .. } = &mut spec {
            components[0].weight = 0.7;
        }
        assert!(generate_mixture(&spec, 10, &mut stream_rng(0, Stream::Dataset)).is_err());
        let idx = DatasetSpec::IdxImages {
            images: "a".into(),
            labels: "b".into(),
            downsample: 0,
            max_count: None,
        };
        assert!(idx.validate().is_err());
    }
}
