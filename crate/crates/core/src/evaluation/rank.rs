use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DistanceMatrix, Labels, RankingResult};

/// Gallery indices sorted by ascending distance, ties by index.
pub(crate) fn argsort(row: ArrayView1<'_, f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order
}

struct QueryOutcome {
    order: Vec<usize>,
    /// 0-based rank of the first correct match and the average precision;
    /// `None` when the query has no valid match.
    hit: Option<(usize, f64)>,
}

fn score_query(row: ArrayView1<'_, f64>, qid: u32, qcam: u32, gallery: &Labels) -> QueryOutcome {
    let order: Vec<usize> = argsort(row)
        .into_iter()
        .filter(|&g| !(gallery.ids[g] == qid && gallery.cams[g] == qcam))
        .collect();
    let mut first = None;
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &g) in order.iter().enumerate() {
        if gallery.ids[g] == qid {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
            first.get_or_insert(rank);
        }
    }
    let hit = first.map(|f| (f, precision_sum / hits as f64));
    QueryOutcome { order, hit }
}

/// Single-query CMC and mAP. Gallery entries sharing both identity and camera
/// with the query are dropped; queries without any remaining correct match do
/// not count towards either metric.
pub fn rank_queries(
    dist: &DistanceMatrix,
    query: &Labels,
    gallery: &Labels,
) -> Result<RankingResult> {
    let (nq, ng) = (dist.n_query(), dist.n_gallery());
    if query.len() != nq || gallery.len() != ng {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {nq}x{ng}, labels are {}x{}",
            query.len(),
            gallery.len()
        )));
    }
    if query.ids.len() != query.cams.len() || gallery.ids.len() != gallery.cams.len() {
        return Err(Error::ShapeMismatch(
            "id and camera lists differ in length".into(),
        ));
    }
    let values = dist.values();
    let outcomes: Vec<QueryOutcome> = (0..nq)
        .into_par_iter()
        .map(|q| score_query(values.row(q), query.ids[q], query.cams[q], gallery))
        .collect();

    let mut first_hit_counts = vec![0usize; ng];
    let mut ap_sum = 0.0;
    let mut n_valid = 0usize;
    for o in &outcomes {
        if let Some((first, ap)) = o.hit {
            first_hit_counts[first] += 1;
            ap_sum += ap;
            n_valid += 1;
        }
    }
    if n_valid == 0 {
        return Err(Error::NoValidQueries);
    }
    let mut cmc = Vec::with_capacity(ng);
    let mut running = 0usize;
    for c in first_hit_counts {
        running += c;
        cmc.push(running as f64 / n_valid as f64);
    }
    Ok(RankingResult {
        per_query_order: outcomes.into_iter().map(|o| o.order).collect(),
        cmc,
        map: ap_sum / n_valid as f64,
        n_valid,
    })
}
