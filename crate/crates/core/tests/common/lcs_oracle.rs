//! Exponential reference implementation of the leftmost-LCS removed set.

use std::collections::BTreeSet;

/// Every common-subsequence alignment as `(original, variant)` index pairs.
fn alignments(o: &[u8], v: &[u8], i: usize, j: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    out.push(cur.clone());
    for a in i..o.len() {
        for b in j..v.len() {
            if o[a] == v[b] {
                cur.push((a, b));
                alignments(o, v, a + 1, b + 1, cur, out);
                cur.pop();
            }
        }
    }
}

/// Longest alignments only, the winner being the lexicographically smallest
/// sequence of original indices, then of variant indices.
pub fn brute_removed_set(o: &[u8], v: &[u8]) -> BTreeSet<usize> {
    let mut all = Vec::new();
    alignments(o, v, 0, 0, &mut Vec::new(), &mut all);
    let best = all.iter().map(Vec::len).max().unwrap_or(0);
    let winner = all
        .into_iter()
        .filter(|a| a.len() == best)
        .min_by(|x, y| {
            let xi: Vec<usize> = x.iter().map(|p| p.0).collect();
            let yi: Vec<usize> = y.iter().map(|p| p.0).collect();
            let xj: Vec<usize> = x.iter().map(|p| p.1).collect();
            let yj: Vec<usize> = y.iter().map(|p| p.1).collect();
            (xi, xj).cmp(&(yi, yj))
        })
        .unwrap_or_default();
    let kept: BTreeSet<usize> = winner.iter().map(|p| p.0).collect();
    (0..o.len()).filter(|i| !kept.contains(i)).collect()
}

/// F1 from raw set arithmetic, 1.0 when nothing was removed anywhere.
pub fn set_f1(m: &BTreeSet<usize>, g: &BTreeSet<usize>) -> f64 {
    let tp = m.intersection(g).count() as f64;
    let fp = m.difference(g).count() as f64;
    let fn_ = g.difference(m).count() as f64;
    if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}
