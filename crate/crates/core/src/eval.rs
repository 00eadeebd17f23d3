//! Retrieval metrics and feature-space domain-gap statistics.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::scalar::Scalar;
use crate::synth::{group_centroids, Dataset};

pub const REPORT_VERSION: u32 = 1;

/// Ranks reported in [`CmcScores`].
pub const CMC_RANKS: [usize; 3] = [1, 5, 10];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

fn distance<T: Scalar>(metric: Metric, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = (x - y).as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (&x, &y) in a.iter().zip(b) {
                let (x, y) = (x.as_f64(), y.as_f64());
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let denom = (na * nb).sqrt();
            if denom > 0.0 {
                1.0 - dot / denom
            } else {
                1.0
            }
        }
    }
}

/// Feature rows with their identity and view labels.
#[derive(Clone, Copy, Debug)]
pub struct LabelledFeatures<'a, T> {
    pub features: ArrayView2<'a, T>,
    pub ids: &'a [usize],
    pub views: &'a [usize],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CmcScores {
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub map: f64,
    pub cmc: CmcScores,
}

/// Average precision of one ranked relevance list and the 0-based rank of
/// its first hit.
pub fn average_precision(ranked_relevance: &[bool]) -> (f64, Option<usize>) {
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut first = None;
    for (k, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            precision_sum += hits as f64 / (k + 1) as f64;
            first.get_or_insert(k);
        }
    }
    if hits == 0 {
        (0.0, None)
    } else {
        (precision_sum / hits as f64, first)
    }
}

/// mAP and CMC of `query` against `gallery`.
///
/// Gallery rows sharing both identity and view with the query are excluded.
/// Ties in distance keep gallery order.
pub fn retrieval_eval<T: Scalar>(
    query: LabelledFeatures<'_, T>,
    gallery: LabelledFeatures<'_, T>,
    metric: Metric,
) -> Result<RetrievalScores> {
    check_labels(&query)?;
    check_labels(&gallery)?;
    if query.features.ncols() != gallery.features.ncols() {
        return Err(LdlError::ShapeMismatch("query and gallery feature widths differ".into()));
    }
    let nq = query.features.nrows();
    if nq == 0 {
        return Err(LdlError::ShapeMismatch("no queries".into()));
    }
    let mut ap_sum = 0.0;
    let mut cmc_hits = [0usize; CMC_RANKS.len()];
    for q in 0..nq {
        let (qid, qview) = (query.ids[q], query.views[q]);
        let mut ranked: Vec<(f64, usize)> = (0..gallery.features.nrows())
            .filter(|&g| !(gallery.ids[g] == qid && gallery.views[g] == qview))
            .map(|g| (distance(metric, query.features.row(q), gallery.features.row(g)), g))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let relevance: Vec<bool> = ranked.iter().map(|&(_, g)| gallery.ids[g] == qid).collect();
        let (ap, first) = average_precision(&relevance);
        let first = first.ok_or(LdlError::NoValidMatch { query: q })?;
        ap_sum += ap;
        for (slot, &k) in cmc_hits.iter_mut().zip(&CMC_RANKS) {
            if first < k {
                *slot += 1;
            }
        }
    }
    let n = nq as f64;
    Ok(RetrievalScores {
        map: ap_sum / n,
        cmc: CmcScores { rank1: cmc_hits[0] as f64 / n, rank5: cmc_hits[1] as f64 / n, rank10: cmc_hits[2] as f64 / n },
    })
}

fn check_labels<T>(side: &LabelledFeatures<'_, T>) -> Result<()> {
    let n = side.features.nrows();
    for len in [side.ids.len(), side.views.len()] {
        if len != n {
            return Err(LdlError::LengthMismatch { expected: n, actual: len });
        }
    }
    Ok(())
}

/// Row indices of queries (view 0) and gallery (every other view).
pub fn split_query_gallery(view_ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    (0..view_ids.len()).partition(|&i| view_ids[i] == 0)
}

/// Evaluates features of a labelled dataset with the view-0 query split.
pub fn evaluate_split<T: Scalar>(
    features: ArrayView2<'_, T>,
    data: &Dataset<T>,
    metric: Metric,
) -> Result<RetrievalScores> {
    let (q, g) = split_query_gallery(&data.view_ids);
    let pick = |idx: &[usize]| {
        (
            features.select(ndarray::Axis(0), idx),
            idx.iter().map(|&i| data.class_ids[i]).collect::<Vec<_>>(),
            idx.iter().map(|&i| data.view_ids[i]).collect::<Vec<_>>(),
        )
    };
    let (qf, qi, qv) = pick(&q);
    let (gf, gi, gv) = pick(&g);
    retrieval_eval(
        LabelledFeatures { features: qf.view(), ids: &qi, views: &qv },
        LabelledFeatures { features: gf.view(), ids: &gi, views: &gv },
        metric,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainGap {
    /// Mean pairwise distance between domain centroids.
    pub between: f64,
    /// Mean pairwise distance between class centroids within a domain,
    /// averaged over domains.
    pub within: f64,
    /// `between / within`, or zero when `within` is zero.
    pub ratio: f64,
}

fn mean_pairwise(points: &[ndarray::Array1<f64>]) -> Option<f64> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            total += (&points[a] - &points[b]).mapv(|v| v * v).sum().sqrt();
            pairs += 1;
        }
    }
    (pairs > 0).then(|| total / pairs as f64)
}

/// Cross-domain versus within-domain centroid spread of a feature set.
pub fn domain_gap<T: Scalar>(
    features: ArrayView2<'_, T>,
    domain_ids: &[usize],
    class_ids: &[usize],
) -> Result<DomainGap> {
    let n = features.nrows();
    for len in [domain_ids.len(), class_ids.len()] {
        if len != n {
            return Err(LdlError::LengthMismatch { expected: n, actual: len });
        }
    }
    let domains = group_centroids(features, domain_ids);
    if domains.len() < 2 {
        return Err(LdlError::SingleDomain);
    }
    let between = mean_pairwise(&domains.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>()).unwrap_or(0.0);
    let mut within_sum = 0.0;
    let mut within_count = 0usize;
    for (d, _) in &domains {
        let rows: Vec<usize> = (0..n).filter(|&i| domain_ids[i] == *d).collect();
        let sub = features.select(ndarray::Axis(0), &rows);
        let classes: Vec<usize> = rows.iter().map(|&i| class_ids[i]).collect();
        let cents: Vec<_> = group_centroids(sub.view(), &classes).into_iter().map(|(_, c)| c).collect();
        if let Some(m) = mean_pairwise(&cents) {
            within_sum += m;
            within_count += 1;
        }
    }
    let within = if within_count > 0 { within_sum / within_count as f64 } else { 0.0 };
    let ratio = if within > 0.0 { between / within } else { 0.0 };
    Ok(DomainGap { between, within, ratio })
}

/// Retrieval and domain-gap results for one evaluated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    /// `"target"` or `"source-<d>"`.
    pub scope: String,
    pub variant: String,
    pub seed: u64,
    pub metric: Metric,
    pub map: f64,
    pub cmc: CmcScores,
    pub gap_between: f64,
    pub gap_within: f64,
    pub gap_ratio: f64,
    pub query_count: usize,
    pub gallery_count: usize,
    pub evaluated_classes: Vec<usize>,
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scope: impl Into<String>,
        variant: impl Into<String>,
        seed: u64,
        metric: Metric,
        scores: RetrievalScores,
        gap: DomainGap,
        data_views: &[usize],
        classes: Vec<usize>,
    ) -> Self {
        let (q, g) = split_query_gallery(data_views);
        Self {
            format_version: REPORT_VERSION,
            scope: scope.into(),
            variant: variant.into(),
            seed,
            metric,
            map: scores.map,
            cmc: scores.cmc,
            gap_between: gap.between,
            gap_within: gap.within,
            gap_ratio: gap.ratio,
            query_count: q.len(),
            gallery_count: g.len(),
            evaluated_classes: classes,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| LdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LdlError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LdlError::format(path, e.to_string()))
    }
}

/// Header of a feature dump: `f0..f{F-1},class_id,domain_id`.
pub fn feature_dump_header(width: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..width).map(|k| format!("f{k}")).collect();
    h.push("class_id".into());
    h.push("domain_id".into());
    h
}

/// Writes one feature vector per row with its class and domain, for
/// external embedding and plotting tools.
pub fn feature_dump<T: Scalar>(
    features: ArrayView2<'_, T>,
    class_ids: &[usize],
    domain_ids: &[usize],
    path: &Path,
) -> Result<()> {
    let n = features.nrows();
    for len in [class_ids.len(), domain_ids.len()] {
        if len != n {
            return Err(LdlError::LengthMismatch { expected: n, actual: len });
        }
    }
    let file = File::create(path).map_err(|e| LdlError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let fmt = |e: csv::Error| LdlError::format(path, e.to_string());
    w.write_record(feature_dump_header(features.ncols())).map_err(fmt)?;
    for i in 0..n {
        let mut rec: Vec<String> = features.row(i).iter().map(|v| v.as_f64().to_string()).collect();
        rec.push(class_ids[i].to_string());
        rec.push(domain_ids[i].to_string());
        w.write_record(&rec).map_err(fmt)?;
    }
    w.flush().map_err(|e| LdlError::io(path, e))
}

/// Features, class ids and domain ids read back from a dump.
pub type FeatureDump = (Array2<f64>, Vec<usize>, Vec<usize>);

pub fn load_feature_dump(path: &Path) -> Result<FeatureDump> {
    let bad = |m: String| LdlError::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(bad("too few columns".into()));
    }
    let width = header.len() - 2;
    if header.iter().collect::<Vec<_>>() != feature_dump_header(width) {
        return Err(bad("unexpected header".into()));
    }
    let (mut values, mut classes, mut domains) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for f in rec.iter().take(width) {
            values.push(f.parse::<f64>().map_err(|_| bad(format!("bad value {f:?}")))?);
        }
        classes.push(rec[width].parse().map_err(|_| bad("bad class_id".into()))?);
        domains.push(rec[width + 1].parse().map_err(|_| bad("bad domain_id".into()))?);
    }
    let m = Array2::from_shape_vec((classes.len(), width), values).map_err(|e| bad(e.to_string()))?;
    Ok((m, classes, domains))
}
