//! One-to-one matching of predicted objects to ground truth.

use serde::{Deserialize, Serialize};

use crate::qra::GroundedObject;
use crate::scene::ObjectBox3D;

/// Largest allowed `|distance_m(pred) − range(gt)|` for a pair.
pub const DEFAULT_GATE_M: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred_index: usize,
    pub gt_id: String,
    /// Absolute distance error of the pair.
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by `pred_index`.
    pub pairs: Vec<MatchPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<String>,
}

impl MatchResult {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.error_m).sum()
    }
}

/// Pair cost, or `None` when the pair is forbidden (class differs or the
/// distance gap exceeds the gate).
pub fn pair_cost(pred: &GroundedObject, gt: &ObjectBox3D, gate: f64) -> Option<f64> {
    if pred.class != gt.class_label || !pred.distance_m.is_finite() {
        return None;
    }
    let err = (pred.distance_m - gt.range()).abs();
    (err <= gate).then_some(err)
}

/// Assignment with the most allowed pairs; among those, the least total
/// distance error (in whole micrometres); among those, the least sum of
/// squared errors, which prefers pairings that do not cross; remaining ties
/// (identical errors) go to the pairing that keeps prediction order aligned
/// with ground-truth order, i.e. the least `Σ i·(m − j)`.
pub fn match_objects(pred: &[GroundedObject], gt: &[ObjectBox3D], gate: f64) -> MatchResult {
    let costs: Vec<Vec<Option<f64>>> = pred
        .iter()
        .map(|p| gt.iter().map(|g| pair_cost(p, g, gate)).collect())
        .collect();
    let assignment = solve(&costs, pred.len(), gt.len());

    let mut result = MatchResult::default();
    let mut gt_used = vec![false; gt.len()];
    for (i, slot) in assignment.iter().enumerate() {
        match slot.and_then(|j| costs[i][j].map(|c| (j, c))) {
            Some((j, c)) => {
                gt_used[j] = true;
                result.pairs.push(MatchPair {
                    pred_index: i,
                    gt_id: gt[j].id.clone(),
                    error_m: c,
                });
            }
            None => result.unmatched_pred.push(i),
        }
    }
    result.unmatched_gt = gt
        .iter()
        .zip(&gt_used)
        .filter(|(_, used)| !**used)
        .map(|(g, _)| g.id.clone())
        .collect();
    result
}

/// Error in whole micrometres, the unit in which assignments are compared.
pub fn quantize_error(error_m: f64) -> i128 {
    (error_m * 1e6).round() as i128
}

/// Order tie-break for pred `i` and ground truth `j` of `m`.
pub fn order_cost(i: usize, j: usize, m: usize) -> i128 {
    (i * (m - j)) as i128
}

/// Row assignment for an `n × m` matrix with forbidden cells. Each allowed
/// cell costs `(e·S + e²)·T + order_cost` with `e` the quantized error, `S`
/// larger than any feasible sum of squares and `T` larger than any feasible
/// order sum, so total error decides first, then squared error, then order.
/// Forbidden cells carry a penalty larger than any feasible total so
/// cardinality wins before all of them.
fn solve(costs: &[Vec<Option<f64>>], n: usize, m: usize) -> Vec<Option<usize>> {
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    let q: Vec<Vec<Option<i128>>> = costs
        .iter()
        .map(|row| row.iter().map(|c| c.map(quantize_error)).collect())
        .collect();
    let sq_bound: i128 = q.iter().flatten().flatten().map(|e| e * e).sum::<i128>() + 1;
    let order_bound: i128 = (0..n)
        .flat_map(|i| (0..m).map(move |j| order_cost(i, j, m)))
        .sum::<i128>()
        + 1;
    let keyed: Vec<Vec<Option<i128>>> = q
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, e)| e.map(|e| (e * sq_bound + e * e) * order_bound + order_cost(i, j, m)))
                .collect()
        })
        .collect();
    let big = (keyed.iter().flatten().flatten().sum::<i128>() + 1) * 2;
    let dense = |i: usize, j: usize| keyed[i][j].unwrap_or(big);
    if n <= m {
        hungarian(n, m, dense).into_iter().map(Some).collect()
    } else {
        let cols = hungarian(m, n, |i, j| dense(j, i));
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            rows[i] = Some(j);
        }
        rows
    }
}

/// Shortest augmenting path Hungarian method for `n <= m` over exact integer
/// costs; returns the column assigned to each row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> i128) -> Vec<usize> {
    const INF: i128 = i128::MAX / 4;
    // 1-based potentials; column 0 is the virtual source
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}
