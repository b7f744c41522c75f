//! Synthetic domain-shift task generation, label-noise injectors, the
//! stochastic augmentation pipeline, and dataset (de)serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{infer_pseudo_labels_aggregated, PseudoLabelSet};
use crate::model::ClassifierModel;
use crate::numerics::{Matrix, RngStream};

/// Feature layout: flat vectors or a single-channel H x W grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Flat,
    Grid { h: usize, w: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub domain: String,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub layout: Layout,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.rows
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }
}

/// Declarative description of a synthetic domain-shift task: Gaussian
/// clusters on a circle for the source, and a target drawn from the same
/// clusters pushed through a fixed transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftTask {
    pub num_classes: usize,
    pub dim: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Radius of the circle the cluster centers sit on (dims 0 and 1).
    pub cluster_radius: f64,
    /// Isotropic standard deviation of each cluster.
    pub cluster_std: f64,
    /// Scale of per-class offsets in dims 2..D; zero for a pure 2-D circle.
    pub aux_scale: f64,
    /// Target transform: rotation (degrees, applied in the 0-1 plane),
    /// per-dimension translation and scaling, additive feature noise.
    pub rotation_deg: f64,
    pub translation: Vec<f64>,
    pub scaling: Vec<f64>,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for ShiftTask {
    fn default() -> Self {
        ShiftTask {
            num_classes: 10,
            dim: 12,
            n_source: 600,
            n_target: 600,
            cluster_radius: 4.0,
            cluster_std: 0.8,
            aux_scale: 2.75,
            rotation_deg: 0.0,
            translation: vec![],
            scaling: vec![],
            feature_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl ShiftTask {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Generation("C must be >= 2".into()));
        }
        if self.dim < 2 {
            return Err(Error::Generation("D must be >= 2".into()));
        }
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::Generation("empty split".into()));
        }
        if self.cluster_radius <= 0.0 {
            return Err(Error::Generation("zero cluster separation".into()));
        }
        if !self.rotation_deg.is_finite()
            || !self.feature_noise_sigma.is_finite()
            || self.translation.iter().any(|v| !v.is_finite())
            || self.scaling.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Generation("non-finite transform parameter".into()));
        }
        if !self.translation.is_empty() && self.translation.len() != self.dim {
            return Err(Error::Generation("translation length != D".into()));
        }
        if !self.scaling.is_empty() && self.scaling.len() != self.dim {
            return Err(Error::Generation("scaling length != D".into()));
        }
        Ok(())
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        let mut centers = Vec::with_capacity(self.num_classes);
        for c in 0..self.num_classes {
            let angle = std::f64::consts::TAU * c as f64 / self.num_classes as f64;
            let mut center = vec![0.0; self.dim];
            center[0] = self.cluster_radius * angle.cos();
            center[1] = self.cluster_radius * angle.sin();
            // deterministic one-hot auxiliary code: every class pair is
            // separated by aux_scale * sqrt(2), so no pair collides by luck
            let aux = 2 + (c % (self.dim - 2).max(1));
            if aux < self.dim {
                center[aux] = self.aux_scale;
            }
            centers.push(center);
        }
        centers
    }

    fn sample_split(
        &self,
        centers: &[Vec<f64>],
        n: usize,
        stream: &mut RngStream,
    ) -> (Matrix, Vec<usize>) {
        let mut data = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % self.num_classes;
            labels.push(class);
            for d in 0..self.dim {
                data.push(centers[class][d] + self.cluster_std * stream.normal());
            }
        }
        (Matrix::from_vec(n, self.dim, data).unwrap(), labels)
    }

    fn apply_transform(&self, features: &mut Matrix, stream: &mut RngStream) {
        let theta = self.rotation_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        for r in 0..features.rows {
            let row = features.row_mut(r);
            let (x, y) = (row[0], row[1]);
            row[0] = cos * x - sin * y;
            row[1] = sin * x + cos * y;
            if !self.scaling.is_empty() {
                for (v, s) in row.iter_mut().zip(&self.scaling) {
                    *v *= s;
                }
            }
            if !self.translation.is_empty() {
                for (v, t) in row.iter_mut().zip(&self.translation) {
                    *v += t;
                }
            }
            if self.feature_noise_sigma > 0.0 {
                for v in row.iter_mut() {
                    *v += self.feature_noise_sigma * stream.normal();
                }
            }
        }
    }
}

/// Generates the labeled source split and the target split (its labels are
/// the hidden ground truth, used for metrics only).
pub fn generate_blob_task(spec: &ShiftTask) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let centers = spec.centers();

    let mut source_stream = RngStream::new(spec.seed, 0x50);
    let (source_features, source_labels) =
        spec.sample_split(&centers, spec.n_source, &mut source_stream);

    let mut target_stream = RngStream::new(spec.seed, 0x70);
    let (mut target_features, target_labels) =
        spec.sample_split(&centers, spec.n_target, &mut target_stream);
    let mut noise_stream = RngStream::new(spec.seed, 0x71);
    spec.apply_transform(&mut target_features, &mut noise_stream);

    let source = LabeledDataset {
        features: source_features,
        labels: source_labels,
        num_classes: spec.num_classes,
        layout: Layout::Flat,
        provenance: Provenance {
            domain: "blob-source".into(),
            seed: spec.seed,
        },
    };
    let target = LabeledDataset {
        features: target_features,
        labels: target_labels,
        num_classes: spec.num_classes,
        layout: Layout::Flat,
        provenance: Provenance {
            domain: "blob-target".into(),
            seed: spec.seed,
        },
    };
    Ok((source, target))
}

// ---------------------------------------------------------------------------
// Noise injectors
// ---------------------------------------------------------------------------

/// Relabels exactly round(r * N) uniformly chosen samples with a uniformly
/// random different class.
pub fn inject_symmetric_noise(
    labels: &[usize],
    num_classes: usize,
    rate: f64,
    stream: &mut RngStream,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Argument("rate outside [0, 1]".into()));
    }
    let n = labels.len();
    let count = (rate * n as f64).round() as usize;
    let universe: Vec<usize> = (0..n).collect();
    let victims = crate::numerics::draw_uniform_subset(stream, &universe, count)?;
    let mut out = labels.to_vec();
    for idx in victims {
        let offset = 1 + stream.below(num_classes - 1);
        out[idx] = (labels[idx] + offset) % num_classes;
    }
    Ok(out)
}

/// Class mapping for asymmetric noise; must have no fixed points.
pub type ClassMapping = Vec<(usize, usize)>;

/// The default digit-style mapping: 2->7, 3->8, 7->1, 5<->6.
pub fn default_asymmetric_mapping() -> ClassMapping {
    vec![(2, 7), (3, 8), (7, 1), (5, 6), (6, 5)]
}

fn mapping_lookup(mapping: &ClassMapping, class: usize) -> Option<usize> {
    mapping.iter().find(|(from, _)| *from == class).map(|(_, to)| *to)
}

/// Relabels a fraction `rate` of the samples whose class is in the
/// mapping's domain via the mapping; other classes are untouched.
pub fn inject_asymmetric_noise(
    labels: &[usize],
    rate: f64,
    mapping: &ClassMapping,
    stream: &mut RngStream,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Argument("rate outside [0, 1]".into()));
    }
    if mapping.iter().any(|(from, to)| from == to) {
        return Err(Error::Argument("mapping has a fixed point".into()));
    }
    let mappable: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| mapping_lookup(mapping, l).is_some())
        .map(|(i, _)| i)
        .collect();
    let count = (rate * mappable.len() as f64).round() as usize;
    let victims = crate::numerics::draw_uniform_subset(stream, &mappable, count)?;
    let mut out = labels.to_vec();
    for idx in victims {
        out[idx] = mapping_lookup(mapping, labels[idx]).unwrap();
    }
    Ok(out)
}

/// Solves the per-mappable-sample rate so the overall corrupted fraction
/// equals `global_rate`.
pub fn asymmetric_rate_for_global(
    labels: &[usize],
    mapping: &ClassMapping,
    global_rate: f64,
) -> Result<f64> {
    let mappable = labels
        .iter()
        .filter(|&&l| mapping_lookup(mapping, l).is_some())
        .count();
    if mappable == 0 {
        return Err(Error::Argument("no samples in the mapping's domain".into()));
    }
    let r = global_rate * labels.len() as f64 / mappable as f64;
    if r > 1.0 {
        return Err(Error::Argument(format!(
            "global rate {} unreachable: only {}/{} samples mappable",
            global_rate,
            mappable,
            labels.len()
        )));
    }
    Ok(r)
}

/// Shift noise: pseudo-labels inferred with the source model across the
/// domain gap. The returned set carries the target's hidden truth so the
/// disagreement (the noise level) can be reported.
pub fn inject_shift_noise(
    source_model: &ClassifierModel,
    target: &LabeledDataset,
) -> Result<PseudoLabelSet> {
    infer_pseudo_labels_aggregated(source_model, &target.features, Some(target.labels.clone()))
}

// ---------------------------------------------------------------------------
// Stochastic augmentation
// ---------------------------------------------------------------------------

/// One augmentation transform. Grid transforms require a grid layout and
/// return a layout error otherwise. Every transform preserves feature
/// dimensionality.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Additive Gaussian noise of the given sigma.
    FeatureJitter { sigma: f64 },
    /// Zeroes each feature independently with the given probability.
    RandomMask { drop_prob: f64 },
    /// Multiplies all features by one scale draw and adds one offset draw.
    ChannelDistort {
        scale: (f64, f64),
        offset: (f64, f64),
    },
    /// Random crop (uniform area and aspect-ratio ranges) followed by a
    /// bilinear resize back to the original grid.
    CropResize {
        area: (f64, f64),
        aspect: (f64, f64),
    },
    /// Random rotation and shear about the grid center.
    AffineJitter {
        max_rotation_deg: f64,
        max_shear: f64,
    },
    /// Separable Gaussian blur, sigma drawn uniformly from the range,
    /// kernel truncated at 3 sigma.
    GaussianBlur { sigma: (f64, f64) },
}

/// Ordered transform list for one ensemble member.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentationSpec {
    pub transforms: Vec<Transform>,
}

impl AugmentationSpec {
    pub fn identity() -> AugmentationSpec {
        AugmentationSpec { transforms: vec![] }
    }

    /// Default spec for flat vector features.
    pub fn default_flat() -> AugmentationSpec {
        AugmentationSpec {
            transforms: vec![
                Transform::FeatureJitter { sigma: 0.3 },
                Transform::RandomMask { drop_prob: 0.1 },
            ],
        }
    }

    /// Default spec for grid features, mirroring crop + affine/blur +
    /// distortion compositions.
    pub fn default_grid() -> AugmentationSpec {
        AugmentationSpec {
            transforms: vec![
                Transform::CropResize {
                    area: (0.08, 1.0),
                    aspect: (0.75, 4.0 / 3.0),
                },
                Transform::AffineJitter {
                    max_rotation_deg: 15.0,
                    max_shear: 0.1,
                },
                Transform::GaussianBlur { sigma: (0.1, 1.0) },
                Transform::ChannelDistort {
                    scale: (0.8, 1.2),
                    offset: (-0.1, 0.1),
                },
            ],
        }
    }
}

fn bilinear(grid: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    if y < -0.5 || x < -0.5 || y > h as f64 - 0.5 || x > w as f64 - 0.5 {
        return 0.0;
    }
    let yc = y.clamp(0.0, h as f64 - 1.0);
    let xc = x.clamp(0.0, w as f64 - 1.0);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    let a = grid[y0 * w + x0];
    let b = grid[y0 * w + x1];
    let c = grid[y1 * w + x0];
    let d = grid[y1 * w + x1];
    a * (1.0 - fy) * (1.0 - fx) + b * (1.0 - fy) * fx + c * fy * (1.0 - fx) + d * fy * fx
}

fn crop_resize(
    row: &mut [f64],
    h: usize,
    w: usize,
    area: (f64, f64),
    aspect: (f64, f64),
    stream: &mut RngStream,
) {
    let area_frac = stream.uniform(area.0, area.1.min(1.0)).min(1.0);
    let ratio = stream.uniform(aspect.0, aspect.1);
    let target = area_frac * (h * w) as f64;
    let mut cw = (target * ratio).sqrt().round() as usize;
    let mut ch = (target / ratio).sqrt().round() as usize;
    cw = cw.clamp(1, w);
    ch = ch.clamp(1, h);
    let top = if ch < h { stream.below(h - ch + 1) } else { 0 };
    let left = if cw < w { stream.below(w - cw + 1) } else { 0 };
    if ch == h && cw == w {
        return; // degenerate crop is the identity
    }
    let src = row.to_vec();
    for y in 0..h {
        for x in 0..w {
            let sy = top as f64 + (y as f64 + 0.5) * ch as f64 / h as f64 - 0.5;
            let sx = left as f64 + (x as f64 + 0.5) * cw as f64 / w as f64 - 0.5;
            row[y * w + x] = bilinear(&src, h, w, sy, sx);
        }
    }
}

fn affine_jitter(
    row: &mut [f64],
    h: usize,
    w: usize,
    max_rotation_deg: f64,
    max_shear: f64,
    stream: &mut RngStream,
) {
    let theta = stream
        .uniform(-max_rotation_deg, max_rotation_deg)
        .to_radians();
    let shear = stream.uniform(-max_shear, max_shear);
    if theta == 0.0 && shear == 0.0 {
        return;
    }
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = row.to_vec();
    for y in 0..h {
        for x in 0..w {
            // inverse map: rotate then shear back
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let ux = cos * dx + sin * dy + shear * dy;
            let uy = -sin * dx + cos * dy;
            row[y * w + x] = bilinear(&src, h, w, uy + cy, ux + cx);
        }
    }
}

fn gaussian_blur(row: &mut [f64], h: usize, w: usize, sigma_range: (f64, f64), stream: &mut RngStream) {
    let sigma = stream.uniform(sigma_range.0, sigma_range.1);
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        let v = (-0.5 * (d / sigma).powi(2)).exp();
        kernel.push(v);
        sum += v;
    }
    for k in &mut kernel {
        *k /= sum;
    }
    let conv = |src: &[f64], len: usize, stride: usize, base: usize, out: &mut Vec<f64>| {
        for i in 0..len {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let j = i as i64 + ki as i64 - radius as i64;
                let j = j.clamp(0, len as i64 - 1) as usize;
                acc += kv * src[base + j * stride];
            }
            out.push(acc);
        }
    };
    // horizontal then vertical
    let src = row.to_vec();
    let mut tmp = Vec::with_capacity(h * w);
    for y in 0..h {
        conv(&src, w, 1, y * w, &mut tmp);
    }
    let mut out = vec![0.0; h * w];
    for x in 0..w {
        let mut col = Vec::with_capacity(h);
        conv(&tmp, h, w, x, &mut col);
        for (y, v) in col.into_iter().enumerate() {
            out[y * w + x] = v;
        }
    }
    row.copy_from_slice(&out);
}

/// Applies the transform list to every row of the batch with fresh random
/// draws per sample. Output dimensionality is unchanged.
pub fn augment(
    batch: &Matrix,
    spec: &AugmentationSpec,
    layout: Layout,
    stream: &mut RngStream,
) -> Result<Matrix> {
    if let Layout::Grid { h, w } = layout {
        if h * w != batch.cols {
            return Err(Error::Layout(format!(
                "grid {}x{} does not match {} features",
                h, w, batch.cols
            )));
        }
    }
    let needs_grid = spec.transforms.iter().any(|t| {
        matches!(
            t,
            Transform::CropResize { .. }
                | Transform::AffineJitter { .. }
                | Transform::GaussianBlur { .. }
        )
    });
    if needs_grid && !matches!(layout, Layout::Grid { .. }) {
        return Err(Error::Layout(
            "grid transform requested on flat features".into(),
        ));
    }
    let mut out = batch.clone();
    for r in 0..out.rows {
        let row = &mut out.data[r * batch.cols..(r + 1) * batch.cols];
        for t in &spec.transforms {
            match *t {
                Transform::FeatureJitter { sigma } => {
                    if sigma > 0.0 {
                        for v in row.iter_mut() {
                            *v += sigma * stream.normal();
                        }
                    }
                }
                Transform::RandomMask { drop_prob } => {
                    if drop_prob > 0.0 {
                        for v in row.iter_mut() {
                            if stream.next_f64() < drop_prob {
                                *v = 0.0;
                            }
                        }
                    }
                }
                Transform::ChannelDistort { scale, offset } => {
                    let s = stream.uniform(scale.0, scale.1);
                    let o = stream.uniform(offset.0, offset.1);
                    for v in row.iter_mut() {
                        *v = *v * s + o;
                    }
                }
                Transform::CropResize { area, aspect } => {
                    if let Layout::Grid { h, w } = layout {
                        crop_resize(row, h, w, area, aspect, stream);
                    }
                }
                Transform::AffineJitter {
                    max_rotation_deg,
                    max_shear,
                } => {
                    if let Layout::Grid { h, w } = layout {
                        affine_jitter(row, h, w, max_rotation_deg, max_shear, stream);
                    }
                }
                Transform::GaussianBlur { sigma } => {
                    if let Layout::Grid { h, w } = layout {
                        gaussian_blur(row, h, w, sigma, stream);
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dataset serialization: CSV (feature_0..feature_{D-1}, label) plus a JSON
// sidecar with C, layout, and provenance. Full 64-bit decimal precision.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSidecar {
    num_classes: usize,
    layout: Layout,
    provenance: Provenance,
}

pub fn dataset_to_csv(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    for d in 0..ds.dim() {
        out.push_str(&format!("feature_{},", d));
    }
    out.push_str("label\n");
    for r in 0..ds.len() {
        for v in ds.features.row(r) {
            // {:?} prints the shortest decimal that round-trips exactly
            out.push_str(&format!("{:?},", v));
        }
        out.push_str(&format!("{}\n", ds.labels[r]));
    }
    out
}

pub fn dataset_from_csv_str(csv: &str, sidecar_json: &str) -> Result<LabeledDataset> {
    let sidecar: DatasetSidecar = serde_json::from_str(sidecar_json)
        .map_err(|e| Error::Format(format!("sidecar parse: {}", e)))?;
    if sidecar.num_classes < 2 {
        return Err(Error::Format("sidecar: C must be >= 2".into()));
    }
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "label" {
        return Err(Error::Format("bad dataset CSV header".into()));
    }
    let dim = cols.len() - 1;
    for (i, c) in cols[..dim].iter().enumerate() {
        if *c != format!("feature_{}", i) {
            return Err(Error::Format(format!("bad feature column '{}'", c)));
        }
    }
    if let Layout::Grid { h, w } = sidecar.layout {
        if h * w != dim {
            return Err(Error::Format("sidecar grid does not match CSV width".into()));
        }
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Format(format!("row {}: wrong field count", ln + 2)));
        }
        for f in &fields[..dim] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad feature", ln + 2)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("row {}: non-finite feature", ln + 2)));
            }
            data.push(v);
        }
        let label: usize = fields[dim]
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad label", ln + 2)))?;
        if label >= sidecar.num_classes {
            return Err(Error::Format(format!("row {}: label out of range", ln + 2)));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Format("dataset has no rows".into()));
    }
    Ok(LabeledDataset {
        features: Matrix::from_vec(labels.len(), dim, data)?,
        labels,
        num_classes: sidecar.num_classes,
        layout: sidecar.layout,
        provenance: sidecar.provenance,
    })
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn save_dataset(ds: &LabeledDataset, stem: &Path) -> Result<()> {
    let sidecar = DatasetSidecar {
        num_classes: ds.num_classes,
        layout: ds.layout,
        provenance: ds.provenance.clone(),
    };
    let mut csv = std::fs::File::create(stem.with_extension("csv"))?;
    csv.write_all(dataset_to_csv(ds).as_bytes())?;
    let mut json = std::fs::File::create(stem.with_extension("json"))?;
    json.write_all(serde_json::to_string_pretty(&sidecar).unwrap().as_bytes())?;
    Ok(())
}

pub fn load_dataset(stem: &Path) -> Result<LabeledDataset> {
    let csv = std::fs::read_to_string(stem.with_extension("csv"))?;
    let sidecar = std::fs::read_to_string(stem.with_extension("json"))?;
    dataset_from_csv_str(&csv, &sidecar)
}
