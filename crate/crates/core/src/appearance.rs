//! Embedding algebra: cosine similarity, EMA template updates and dense
//! correlation of templates against a feature map.
//!
//! Correlation normalises both sides, so a heatmap cell is the cosine between a
//! template and that cell's feature vector. Stacking the templates as a `k x D`
//! matrix and the cells as an `(H*W) x D` matrix turns the whole operation into
//! one matrix product followed by an outer-product division by the row norms.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default embedding width.
pub const DEFAULT_DIM: usize = 512;

/// Norms at or below this are treated as zero.
const ZERO_NORM: f64 = 1e-12;

/// Appearance vector of one detection or track.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Self {
        Embedding(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Unit-L2 copy. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if !(n > ZERO_NORM) || !n.is_finite() {
            return Err(Error::InvalidInput("cannot normalize zero-norm embedding".into()));
        }
        Ok(Embedding(self.0.iter().map(|&v| (v as f64 / n) as f32).collect()))
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociating a single chain.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] as f64 * b[i] as f64;
        acc[1] += a[i + 1] as f64 * b[i + 1] as f64;
        acc[2] += a[i + 2] as f64 * b[i + 2] as f64;
        acc[3] += a[i + 3] as f64 * b[i + 3] as f64;
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] as f64 * b[i] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("embedding dims differ: {} vs {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if !(na > ZERO_NORM && nb > ZERO_NORM) {
        return Err(Error::InvalidInput("zero-norm embedding in cosine".into()));
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// `(1 - gamma) * old + gamma * new`, re-normalised to unit length.
///
/// Returns [`Error::DegenerateUpdate`] when the blend is the zero vector; the
/// caller keeps `old` in that case.
pub fn ema_update(old: &Embedding, new: &Embedding, gamma: f64) -> Result<Embedding> {
    if old.dim() != new.dim() {
        return Err(Error::InvalidInput(format!("embedding dims differ: {} vs {}", old.dim(), new.dim())));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!("gamma {gamma} outside [0, 1]")));
    }
    let blended: Vec<f64> = ema_blend(old, new, gamma);
    let n = blended.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > ZERO_NORM) {
        return Err(Error::DegenerateUpdate);
    }
    Ok(Embedding(blended.iter().map(|v| (v / n) as f32).collect()))
}

/// The linear blend before normalisation.
pub fn ema_blend(old: &Embedding, new: &Embedding, gamma: f64) -> Vec<f64> {
    old.0.iter().zip(&new.0).map(|(&o, &n)| (1.0 - gamma) * o as f64 + gamma * n as f64).collect()
}

/// Dense `H x W x D` grid of features, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "feature map data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(FeatureMap { height, width, channels, data })
    }

    pub fn cell(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn num_cells(&self) -> usize {
        self.height * self.width
    }
}

/// Templates for `k` tracked identities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<Embedding>,
    pub track_ids: Vec<u64>,
}

impl TemplateSet {
    pub fn new(templates: Vec<Embedding>, track_ids: Vec<u64>) -> Result<Self> {
        if templates.len() != track_ids.len() {
            return Err(Error::InvalidInput("templates and ids differ in length".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = track_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidInput(format!("duplicate template id {dup}")));
        }
        Ok(TemplateSet { templates, track_ids })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// `H x W` response grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!("heatmap length {} != {height}x{width}", values.len())));
        }
        Ok(Heatmap { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Heatmap { height, width, values: vec![value; height * width] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// `(x, y)` of the maximum; the first cell in row-major order wins ties.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| (i % self.width, i / self.width))
    }
}

/// Output of [`correlate`]: one heatmap per template plus the indices of
/// zero-norm cells, whose response is defined as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub heatmaps: Vec<Heatmap>,
    pub degenerate_cells: Vec<usize>,
}

struct PreparedCells {
    /// Unit rows, or all-zero rows for degenerate cells.
    rows: Vec<f32>,
    inv_norms: Vec<f64>,
    degenerate: Vec<usize>,
}

fn validate(templates: &TemplateSet, fmap: &FeatureMap) -> Result<Vec<f64>> {
    templates
        .templates
        .iter()
        .map(|t| {
            if t.dim() != fmap.channels {
                return Err(Error::InvalidInput(format!(
                    "template dim {} != feature channels {}",
                    t.dim(),
                    fmap.channels
                )));
            }
            let n = t.norm();
            if !(n > ZERO_NORM) {
                return Err(Error::InvalidInput("zero-norm template".into()));
            }
            Ok(1.0 / n)
        })
        .collect()
}

fn prepare_cells(fmap: &FeatureMap) -> PreparedCells {
    let cells = fmap.num_cells();
    let mut inv_norms = Vec::with_capacity(cells);
    let mut degenerate = Vec::new();
    for c in 0..cells {
        let row = &fmap.data[c * fmap.channels..(c + 1) * fmap.channels];
        let n = norm(row);
        if n > ZERO_NORM {
            inv_norms.push(1.0 / n);
        } else {
            inv_norms.push(0.0);
            degenerate.push(c);
        }
    }
    PreparedCells { rows: fmap.data.clone(), inv_norms, degenerate }
}

/// One heatmap row: the template against every cell. Each row is computed by
/// this function alone, which is what makes serial and parallel runs bit-equal.
fn heatmap_row(template: &Embedding, inv_tnorm: f64, cells: &PreparedCells, fmap: &FeatureMap) -> Heatmap {
    let d = fmap.channels;
    let values = (0..fmap.num_cells())
        .map(|c| {
            let inv = cells.inv_norms[c];
            if inv == 0.0 {
                0.0
            } else {
                let raw = dot(&template.0, &cells.rows[c * d..(c + 1) * d]);
                (raw * (inv_tnorm * inv)).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Heatmap { height: fmap.height, width: fmap.width, values }
}

/// Correlates every template with every cell, parallel across templates.
pub fn correlate(templates: &TemplateSet, fmap: &FeatureMap) -> Result<Correlation> {
    let inv_t = validate(templates, fmap)?;
    let cells = prepare_cells(fmap);
    let heatmaps = templates
        .templates
        .par_iter()
        .zip(inv_t.par_iter())
        .map(|(t, &inv)| heatmap_row(t, inv, &cells, fmap))
        .collect();
    Ok(Correlation { heatmaps, degenerate_cells: cells.degenerate })
}

/// Single-threaded variant of [`correlate`]; produces identical bits.
pub fn correlate_serial(templates: &TemplateSet, fmap: &FeatureMap) -> Result<Correlation> {
    let inv_t = validate(templates, fmap)?;
    let cells = prepare_cells(fmap);
    let heatmaps =
        templates.templates.iter().zip(&inv_t).map(|(t, &inv)| heatmap_row(t, inv, &cells, fmap)).collect();
    Ok(Correlation { heatmaps, degenerate_cells: cells.degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(v: &[f32]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn cosine_cases() {
        let a = e(&[1.0, 2.0, 3.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
        let a3 = e(&[3.0, 6.0, 9.0]);
        assert!((cosine(&a, &a3).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine(&a, &e(&[0.0, 0.0, 0.0])).is_err());
        assert!(cosine(&a, &e(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn ema_cases() {
        let old = e(&[1.0, 0.0]);
        let new = e(&[0.0, 1.0]);
        assert_eq!(ema_blend(&old, &new, 0.1), vec![0.9, 0.1]);
        assert_eq!(ema_update(&old, &new, 0.0).unwrap(), old);
        assert_eq!(ema_update(&old, &new, 1.0).unwrap(), new);
        let got = ema_update(&e(&[2.0, 0.0]), &new, 0.0).unwrap();
        assert_eq!(got, old);

        // old = -(gamma / (1 - gamma)) * new with gamma = 0.5
        let d = ema_update(&e(&[-1.0, 2.0]), &e(&[1.0, -2.0]), 0.5);
        assert!(matches!(d, Err(Error::DegenerateUpdate)));
        assert!(ema_update(&old, &new, 1.5).is_err());
    }

    #[test]
    fn planted_match() {
        let (h, w, d) = (3, 4, 4);
        let mut fmap = FeatureMap::new(h, w, d, vec![0.0; h * w * d]).unwrap();
        for y in 0..h {
            for x in 0..w {
                fmap.cell_mut(x, y)[1] = 1.0;
            }
        }
        fmap.cell_mut(2, 1).copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let ts = TemplateSet::new(vec![e(&[5.0, 0.0, 0.0, 0.0])], vec![7]).unwrap();
        let c = correlate(&ts, &fmap).unwrap();
        let hm = &c.heatmaps[0];
        for y in 0..h {
            for x in 0..w {
                let expect = if (x, y) == (2, 1) { 1.0 } else { 0.0 };
                assert_eq!(hm.get(x, y), expect);
            }
        }
        assert_eq!(hm.argmax(), Some((2, 1)));
        assert!(c.degenerate_cells.is_empty());
    }

    #[test]
    fn empty_templates_and_degenerate_cells() {
        let fmap = FeatureMap::new(2, 2, 3, vec![0.0; 12]).unwrap();
        let c = correlate(&TemplateSet::default(), &fmap).unwrap();
        assert!(c.heatmaps.is_empty());

        let ts = TemplateSet::new(vec![e(&[1.0, 0.0, 0.0])], vec![1]).unwrap();
        let c = correlate(&ts, &fmap).unwrap();
        assert_eq!(c.degenerate_cells, vec![0, 1, 2, 3]);
        assert!(c.heatmaps[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correlate_errors() {
        let fmap = FeatureMap::new(1, 1, 3, vec![1.0; 3]).unwrap();
        let bad_dim = TemplateSet::new(vec![e(&[1.0, 0.0])], vec![1]).unwrap();
        assert!(correlate(&bad_dim, &fmap).is_err());
        let zero = TemplateSet::new(vec![e(&[0.0, 0.0, 0.0])], vec![1]).unwrap();
        assert!(correlate(&zero, &fmap).is_err());
        assert!(TemplateSet::new(vec![e(&[1.0]), e(&[1.0])], vec![3, 3]).is_err());
        assert!(FeatureMap::new(2, 2, 2, vec![0.0; 7]).is_err());
    }

    proptest! {
        #[test]
        fn correlate_scale_invariant(
            vals in prop::collection::vec(-1.0f32..1.0, 2 * 3 * 4),
            t in prop::collection::vec(-1.0f32..1.0, 4),
            scale in 0.1f32..10.0,
        ) {
            prop_assume!(norm(&t) > 1e-3);
            let fmap = FeatureMap::new(2, 3, 4, vals.clone()).unwrap();
            let ts = TemplateSet::new(vec![Embedding(t.clone())], vec![0]).unwrap();
            let scaled_t = TemplateSet::new(
                vec![Embedding(t.iter().map(|v| v * scale).collect())], vec![0]).unwrap();
            let a = correlate(&ts, &fmap).unwrap();
            let b = correlate(&scaled_t, &fmap).unwrap();
            for (x, y) in a.heatmaps[0].values.iter().zip(&b.heatmaps[0].values) {
                prop_assert!((x - y).abs() < 1e-5);
                prop_assert!((-1.0..=1.0).contains(x));
            }
        }

        #[test]
        fn ema_output_is_unit(
            old in prop::collection::vec(-1.0f32..1.0, 8),
            new in prop::collection::vec(-1.0f32..1.0, 8),
            gamma in 0.0f64..=1.0,
        ) {
            match ema_update(&Embedding(old), &Embedding(new), gamma) {
                Ok(u) => prop_assert!((u.norm() - 1.0).abs() < 1e-6),
                Err(Error::DegenerateUpdate) => {}
                Err(other) => prop_assert!(false, "unexpected {other}"),
            }
        }
    }
}
