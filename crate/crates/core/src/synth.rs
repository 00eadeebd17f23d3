//! Synthetic multi-domain identity data and PK batch sampling.
//!
//! Each identity has a latent code. Each domain applies its own affine
//! "style" map to the latent code, so the same kind of identity looks
//! different depending on the domain it was captured in. Identities never
//! cross domains. One extra domain is held out as the unseen target.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::layout::DomainLayout;
use crate::scalar::Scalar;
use crate::seeds;

/// Generator parameters. `classes_per_domain` has one entry per domain; the
/// last entry is the held-out target domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes_per_domain: Vec<usize>,
    pub samples_per_class: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub identity_scale: f64,
    pub within_class_noise: f64,
    pub domain_shift_strength: f64,
    pub view_count: usize,
    pub view_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Three sources of 20 identities plus a 40-identity target, 24 samples
    /// each. The larger target keeps evaluation noise below the effects
    /// being measured.
    fn default() -> Self {
        Self {
            classes_per_domain: vec![20, 20, 20, 40],
            samples_per_class: 24,
            latent_dim: 16,
            input_dim: 32,
            identity_scale: 1.0,
            within_class_noise: 0.8,
            domain_shift_strength: 1.0,
            view_count: 4,
            view_shift: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Total number of domains including the target.
    pub fn domain_count(&self) -> usize {
        self.classes_per_domain.len()
    }

    pub fn source_domain_count(&self) -> usize {
        self.domain_count().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LdlError::InvalidSpec(m.into()));
        if self.domain_count() < 2 {
            return bad("need at least one source and one target domain");
        }
        if self.classes_per_domain.contains(&0) {
            return bad("every domain needs at least one class");
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be at least 2");
        }
        if self.latent_dim == 0 || self.input_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.view_count == 0 {
            return bad("view_count must be positive");
        }
        let scales = [self.identity_scale, self.within_class_noise, self.domain_shift_strength, self.view_shift];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad("scales must be finite and non-negative");
        }
        Ok(())
    }
}

/// One row of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<'a, T> {
    pub vector: ArrayView1<'a, T>,
    pub class_id: usize,
    pub domain_id: usize,
    pub view_id: usize,
}

/// Column-oriented sample collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Array2<T>,
    pub class_ids: Vec<usize>,
    pub domain_ids: Vec<usize>,
    pub view_ids: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Array2<T>, class_ids: Vec<usize>, domain_ids: Vec<usize>, view_ids: Vec<usize>) -> Result<Self> {
        let n = inputs.nrows();
        for (name, len) in
            [("class_ids", class_ids.len()), ("domain_ids", domain_ids.len()), ("view_ids", view_ids.len())]
        {
            if len != n {
                return Err(LdlError::ShapeMismatch(format!("{name} has {len} entries for {n} samples")));
            }
        }
        Ok(Self { inputs, class_ids, domain_ids, view_ids })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> Sample<'_, T> {
        Sample {
            vector: self.inputs.row(i),
            class_id: self.class_ids[i],
            domain_id: self.domain_ids[i],
            view_id: self.view_ids[i],
        }
    }

    /// Rows in `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            inputs: self.inputs.select(Axis(0), indices),
            class_ids: indices.iter().map(|&i| self.class_ids[i]).collect(),
            domain_ids: indices.iter().map(|&i| self.domain_ids[i]).collect(),
            view_ids: indices.iter().map(|&i| self.view_ids[i]).collect(),
        }
    }

    pub fn domain_subset(&self, domain: usize) -> Dataset<T> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.domain_ids[i] == domain).collect();
        self.select(&idx)
    }

    /// Sample indices grouped by class id, ascending.
    pub fn indices_by_class(&self) -> std::collections::BTreeMap<usize, Vec<usize>> {
        let mut map = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for (i, &c) in self.class_ids.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        map
    }

    pub fn class_set(&self) -> BTreeSet<usize> {
        self.class_ids.iter().copied().collect()
    }

    /// Checks that every class id is consistent with `layout`.
    pub fn check_layout(&self, layout: &DomainLayout) -> Result<()> {
        for i in 0..self.len() {
            let (c, d) = (self.class_ids[i], self.domain_ids[i]);
            if c >= layout.class_count() || layout.domain_of(c) != d {
                return Err(LdlError::InvalidSpec(format!("sample {i}: class {c} not in domain {d}")));
            }
        }
        Ok(())
    }

    /// Writes one sample per row: `x0..x{D-1},class_id,domain_id,view_id`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LdlError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let io = |e: csv::Error| LdlError::format(path, e.to_string());
        let mut header: Vec<String> = (0..self.inputs.ncols()).map(|k| format!("x{k}")).collect();
        header.extend(["class_id", "domain_id", "view_id"].map(String::from));
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(|v| v.as_f64().to_string()).collect();
            rec.push(self.class_ids[i].to_string());
            rec.push(self.domain_ids[i].to_string());
            rec.push(self.view_ids[i].to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| LdlError::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| LdlError::format(path, e.to_string()))?;
        let bad = |m: String| LdlError::format(path, m);
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let width = header.len();
        if width < 4 || header.iter().rev().take(3).collect::<Vec<_>>() != ["view_id", "domain_id", "class_id"] {
            return Err(bad("header must end with class_id,domain_id,view_id".into()));
        }
        let dim = width - 3;
        for (k, name) in header.iter().take(dim).enumerate() {
            if name != format!("x{k}") {
                return Err(bad(format!("column {k} named {name:?}, expected x{k}")));
            }
        }
        let (mut values, mut classes, mut domains, mut views) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            for f in rec.iter().take(dim) {
                let v: f64 = f.parse().map_err(|_| bad(format!("row {i}: bad value {f:?}")))?;
                values.push(T::of(v));
            }
            let int = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(format!("row {i}: bad id {:?}", &rec[k])));
            classes.push(int(dim)?);
            domains.push(int(dim + 1)?);
            views.push(int(dim + 2)?);
        }
        let inputs = Array2::from_shape_vec((classes.len(), dim), values).map_err(|e| bad(e.to_string()))?;
        Dataset::new(inputs, classes, domains, views)
    }
}

/// Output of [`generate`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedData<T> {
    /// Samples of the source domains; class ids index into `layout`.
    pub source: Dataset<T>,
    pub layout: DomainLayout,
    /// Samples of the held-out domain. Class ids continue after the source
    /// classes and the domain id is the source domain count.
    pub target: Dataset<T>,
}

/// Per-domain affine style map.
struct StyleMap {
    linear: Array2<f64>,
    bias: Array1<f64>,
    view_offsets: Vec<Array1<f64>>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Generates source and target data. Deterministic in `spec.seed`.
///
/// Domain `d` maps a latent code `z` to `(P + s R_d) z + b + s g_d + v_{d,view}`
/// where `P` and `b` are shared, `R_d` and `g_d` are domain-specific Gaussian
/// draws and `s` is the domain shift strength. The random draws do not
/// depend on `s`, so the same seed with a larger shift moves the same
/// domains further apart.
pub fn generate<T: Scalar>(spec: &SyntheticSpec) -> Result<GeneratedData<T>> {
    spec.validate()?;
    let mut rng = seeds::stream_rng(spec.seed, seeds::DATA);
    let (latent, input) = (spec.latent_dim, spec.input_dim);
    let proj_scale = 1.0 / (latent as f64).sqrt();

    let shared = gaussian_matrix(&mut rng, input, latent, proj_scale);
    let shared_bias = gaussian_vector(&mut rng, input, 0.1);
    let styles: Vec<StyleMap> = (0..spec.domain_count())
        .map(|_| {
            let r = gaussian_matrix(&mut rng, input, latent, proj_scale);
            let g = gaussian_vector(&mut rng, input, 1.0);
            let view_offsets =
                (0..spec.view_count).map(|_| gaussian_vector(&mut rng, input, spec.view_shift)).collect();
            StyleMap {
                linear: &shared + &(r * spec.domain_shift_strength),
                bias: &shared_bias + &(g * spec.domain_shift_strength),
                view_offsets,
            }
        })
        .collect();

    let sources = spec.source_domain_count();
    let layout = DomainLayout::contiguous(&spec.classes_per_domain[..sources])?;
    let mut source = Builder::default();
    let mut target = Builder::default();
    let mut class_id = 0;
    for (d, (&n_classes, style)) in spec.classes_per_domain.iter().zip(&styles).enumerate() {
        for _ in 0..n_classes {
            let identity = gaussian_vector(&mut rng, latent, spec.identity_scale);
            for s in 0..spec.samples_per_class {
                let view = s % spec.view_count;
                let z = &identity + &gaussian_vector(&mut rng, latent, spec.within_class_noise);
                let x = style.linear.dot(&z) + &style.bias + &style.view_offsets[view];
                let out = if d < sources { &mut source } else { &mut target };
                out.push(x.view(), class_id, d, view);
            }
            class_id += 1;
        }
    }
    Ok(GeneratedData { source: source.finish(input)?, layout, target: target.finish(input)? })
}

#[derive(Default)]
struct Builder {
    values: Vec<f64>,
    class_ids: Vec<usize>,
    domain_ids: Vec<usize>,
    view_ids: Vec<usize>,
}

impl Builder {
    fn push(&mut self, x: ArrayView1<'_, f64>, class: usize, domain: usize, view: usize) {
        self.values.extend(x.iter());
        self.class_ids.push(class);
        self.domain_ids.push(domain);
        self.view_ids.push(view);
    }

    fn finish<T: Scalar>(self, dim: usize) -> Result<Dataset<T>> {
        let n = self.class_ids.len();
        let inputs = Array2::from_shape_vec((n, dim), self.values.into_iter().map(T::of).collect())
            .map_err(|e| LdlError::ShapeMismatch(e.to_string()))?;
        Dataset::new(inputs, self.class_ids, self.domain_ids, self.view_ids)
    }
}

/// Mean of the rows of `x` per group, in ascending group order.
pub fn group_centroids<T: Scalar>(x: ArrayView2<'_, T>, groups: &[usize]) -> Vec<(usize, Array1<f64>)> {
    let mut acc = std::collections::BTreeMap::<usize, (Array1<f64>, usize)>::new();
    for (row, &g) in x.rows().into_iter().zip(groups) {
        let e = acc.entry(g).or_insert_with(|| (Array1::zeros(x.ncols()), 0));
        e.0.zip_mut_with(&row, |a, &b| *a += b.as_f64());
        e.1 += 1;
    }
    acc.into_iter().map(|(g, (sum, n))| (g, sum / n as f64)).collect()
}

/// Mean pairwise Euclidean distance between domain centroids of the raw inputs.
pub fn mean_cross_domain_centroid_distance<T: Scalar>(data: &Dataset<T>) -> f64 {
    let cents = group_centroids(data.inputs.view(), &data.domain_ids);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..cents.len() {
        for b in (a + 1)..cents.len() {
            total += (&cents[a].1 - &cents[b].1).mapv(|v| v * v).sum().sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Epoch-wise PK sampler: every batch holds `ids_per_domain` distinct
/// classes from each source domain with `images_per_id` samples each.
///
/// An epoch has as many batches as the largest domain needs to show every
/// class once. Classes and samples are drawn without replacement within an
/// epoch, recycling a fresh permutation only once a pool is exhausted.
pub struct PkSampler {
    domains: Vec<Vec<usize>>,
    samples: std::collections::BTreeMap<usize, Vec<usize>>,
    sample_queues: std::collections::BTreeMap<usize, VecDeque<usize>>,
    ids_per_domain: usize,
    images_per_id: usize,
    rng: ChaCha8Rng,
}

pub type Batch = Vec<usize>;

impl PkSampler {
    pub fn new<T: Scalar>(
        dataset: &Dataset<T>,
        layout: &DomainLayout,
        ids_per_domain: usize,
        images_per_id: usize,
        seed: u64,
    ) -> Result<Self> {
        if ids_per_domain == 0 || images_per_id < 2 {
            return Err(LdlError::InvalidConfig(format!(
                "PK sampling needs at least one id and two images per id, got {ids_per_domain}x{images_per_id}"
            )));
        }
        dataset.check_layout(layout)?;
        let samples = dataset.indices_by_class();
        for class in 0..layout.class_count() {
            let available = samples.get(&class).map_or(0, Vec::len);
            if available < images_per_id {
                return Err(LdlError::InsufficientSamples { class, available, required: images_per_id });
            }
        }
        for d in 0..layout.domain_count() {
            if layout.count(d) < ids_per_domain {
                return Err(LdlError::InvalidConfig(format!(
                    "domain {d} has {} classes, batches need {ids_per_domain}",
                    layout.count(d)
                )));
            }
        }
        Ok(Self {
            domains: (0..layout.domain_count()).map(|d| layout.classes_in(d).to_vec()).collect(),
            sample_queues: samples.keys().map(|&c| (c, VecDeque::new())).collect(),
            samples,
            ids_per_domain,
            images_per_id,
            rng: seeds::stream_rng(seed, seeds::SAMPLER),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.domains.len() * self.ids_per_domain * self.images_per_id
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.domains.iter().map(|c| c.len().div_ceil(self.ids_per_domain)).max().unwrap_or(0)
    }

    fn class_chunks(&mut self, classes: &[usize], batches: usize) -> Vec<Vec<usize>> {
        let mut pool: Vec<usize> = Vec::new();
        let mut chunks = Vec::with_capacity(batches);
        for _ in 0..batches {
            let mut chunk = Vec::with_capacity(self.ids_per_domain);
            while chunk.len() < self.ids_per_domain {
                if pool.is_empty() {
                    pool = classes.to_vec();
                    pool.shuffle(&mut self.rng);
                    pool.retain(|c| !chunk.contains(c));
                    pool.reverse();
                }
                chunk.push(pool.pop().expect("domain has enough classes"));
            }
            chunks.push(chunk);
        }
        chunks
    }

    fn take_samples(&mut self, class: usize, out: &mut Vec<usize>) {
        let queue = self.sample_queues.get_mut(&class).expect("known class");
        let mut picked = Vec::with_capacity(self.images_per_id);
        while picked.len() < self.images_per_id {
            if queue.is_empty() {
                let mut fresh = self.samples[&class].clone();
                fresh.shuffle(&mut self.rng);
                queue.extend(fresh.into_iter().filter(|i| !picked.contains(i)));
            }
            picked.push(queue.pop_front().expect("class has enough samples"));
        }
        out.extend(picked);
    }

    /// Batches for the next epoch, as dataset row indices.
    pub fn next_epoch(&mut self) -> Vec<Batch> {
        let batches = self.batches_per_epoch();
        let domains = self.domains.clone();
        let chunks: Vec<Vec<Vec<usize>>> = domains.iter().map(|c| self.class_chunks(c, batches)).collect();
        (0..batches)
            .map(|b| {
                let mut batch = Vec::with_capacity(self.batch_size());
                for domain_chunks in &chunks {
                    for &class in &domain_chunks[b] {
                        self.take_samples(class, &mut batch);
                    }
                }
                batch
            })
            .collect()
    }
}

/// One epoch of PK batches.
pub fn pk_batches<T: Scalar>(
    dataset: &Dataset<T>,
    layout: &DomainLayout,
    ids_per_domain: usize,
    images_per_id: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Batch>> {
    let mut sampler = PkSampler::new(dataset, layout, ids_per_domain, images_per_id, seed)?;
    Ok(sampler.next_epoch().into_iter())
}

/// Writes the generated data plus a JSON manifest of the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: SyntheticSpec,
    pub layout: DomainLayout,
    pub source_samples: usize,
    pub target_samples: usize,
    pub source_classes_per_domain: Vec<usize>,
    pub target_classes: usize,
}

impl DatasetManifest {
    pub fn describe<T: Scalar>(spec: &SyntheticSpec, data: &GeneratedData<T>) -> Self {
        Self {
            format_version: 1,
            spec: spec.clone(),
            layout: data.layout.clone(),
            source_samples: data.source.len(),
            target_samples: data.target.len(),
            source_classes_per_domain: data.layout.counts(),
            target_classes: data.target.class_set().len(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LdlError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| LdlError::format(path, e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| LdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LdlError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LdlError::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            classes_per_domain: vec![5, 6, 5, 4],
            samples_per_class: 8,
            latent_dim: 4,
            input_dim: 6,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn default_matches_desk_scale() {
        let s = SyntheticSpec::default();
        assert_eq!(s.source_domain_count(), 3);
        assert_eq!(s.classes_per_domain, vec![20, 20, 20, 40]);
        assert_eq!((s.samples_per_class, s.input_dim, s.latent_dim), (24, 32, 16));
    }

    #[test]
    fn generate_shapes_and_ids() {
        let g = generate::<f64>(&small_spec(1)).unwrap();
        assert_eq!(g.source.len(), 16 * 8);
        assert_eq!(g.target.len(), 4 * 8);
        assert_eq!(g.layout.counts(), vec![5, 6, 5]);
        g.source.check_layout(&g.layout).unwrap();
        assert!(g.target.domain_ids.iter().all(|&d| d == 3));
        let src = g.source.class_set();
        assert!(g.target.class_set().iter().all(|c| !src.contains(c)));
        let s = g.source.sample(9);
        assert_eq!((s.class_id, s.domain_id, s.view_id), (1, 0, 1));
    }

    #[test]
    fn classes_are_disjoint_across_domains() {
        let g = generate::<f64>(&small_spec(2)).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for data in [&g.source, &g.target] {
            for (&c, &d) in data.class_ids.iter().zip(&data.domain_ids) {
                assert_eq!(*seen.entry(c).or_insert(d), d);
            }
        }
    }

    #[test]
    fn generate_is_deterministic() {
        assert_eq!(generate::<f64>(&small_spec(3)).unwrap(), generate::<f64>(&small_spec(3)).unwrap());
        assert_ne!(generate::<f64>(&small_spec(3)).unwrap(), generate::<f64>(&small_spec(4)).unwrap());
    }

    #[test]
    fn no_noise_means_identical_views() {
        let spec = SyntheticSpec { within_class_noise: 0.0, ..small_spec(5) };
        let g = generate::<f64>(&spec).unwrap();
        let by_class = g.source.indices_by_class();
        for idx in by_class.values() {
            for &a in idx {
                for &b in idx {
                    if g.source.view_ids[a] == g.source.view_ids[b] {
                        assert_eq!(g.source.inputs.row(a), g.source.inputs.row(b));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            SyntheticSpec { classes_per_domain: vec![5], ..small_spec(0) },
            SyntheticSpec { classes_per_domain: vec![5, 0, 3], ..small_spec(0) },
            SyntheticSpec { samples_per_class: 1, ..small_spec(0) },
            SyntheticSpec { domain_shift_strength: -1.0, ..small_spec(0) },
            SyntheticSpec { view_count: 0, ..small_spec(0) },
        ] {
            assert!(matches!(generate::<f64>(&spec), Err(LdlError::InvalidSpec(_))));
        }
    }

    #[test]
    fn pk_batches_structure() {
        let g = generate::<f64>(&small_spec(6)).unwrap();
        let mut sampler = PkSampler::new(&g.source, &g.layout, 4, 3, 11).unwrap();
        assert_eq!(sampler.batch_size(), 36);
        assert_eq!(sampler.batches_per_epoch(), 2);
        for _ in 0..3 {
            let epoch = sampler.next_epoch();
            let mut seen = BTreeSet::new();
            for batch in &epoch {
                assert_eq!(batch.len(), 36);
                for d in 0..3 {
                    let rows: Vec<usize> = batch.iter().copied().filter(|&i| g.source.domain_ids[i] == d).collect();
                    let classes: BTreeSet<usize> = rows.iter().map(|&i| g.source.class_ids[i]).collect();
                    assert_eq!(classes.len(), 4);
                    for c in classes {
                        let picks: BTreeSet<usize> =
                            rows.iter().copied().filter(|&i| g.source.class_ids[i] == c).collect();
                        assert_eq!(picks.len(), 3, "distinct samples per id");
                    }
                }
                seen.extend(batch.iter().map(|&i| g.source.class_ids[i]));
            }
            assert_eq!(seen, g.source.class_set());
        }
    }

    #[test]
    fn pk_errors() {
        let g = generate::<f64>(&small_spec(6)).unwrap();
        assert!(matches!(
            PkSampler::new(&g.source, &g.layout, 2, 9, 0),
            Err(LdlError::InsufficientSamples { required: 9, .. })
        ));
        assert!(PkSampler::new(&g.source, &g.layout, 6, 2, 0).is_err());
        assert!(PkSampler::new(&g.source, &g.layout, 2, 1, 0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let g = generate::<f64>(&small_spec(7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.csv");
        g.source.save_csv(&path).unwrap();
        let back = Dataset::<f64>::load_csv(&path).unwrap();
        assert_eq!(back, g.source);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1,x2,x3,x4,x5,class_id,domain_id,view_id\n"));
    }

    #[test]
    fn manifest_roundtrip() {
        let spec = small_spec(8);
        let g = generate::<f64>(&spec).unwrap();
        let m = DatasetManifest::describe(&spec, &g);
        assert_eq!(m.source_classes_per_domain, vec![5, 6, 5]);
        assert_eq!(m.target_classes, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);
    }
}
