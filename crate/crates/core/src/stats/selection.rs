use crate::error::{Error, Result};

/// Picks `k` indices whose scores spread evenly over the observed range.
///
/// Greedy farthest-point selection in one dimension: the minimum and the
/// maximum come first, then repeatedly the score farthest from everything
/// already chosen. Ties go to the lower index. Indices are returned in
/// selection order.
pub fn uniform_coverage_select(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::invalid(format!(
            "cannot select {k} of {} scores",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite score"));
    }
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return Ok(chosen);
    }
    let mut taken = vec![false; scores.len()];
    // Smallest finite distance from each score to the chosen set.
    let mut gap = vec![f64::INFINITY; scores.len()];
    let take = |i: usize, chosen: &mut Vec<usize>, taken: &mut Vec<bool>, gap: &mut Vec<f64>| {
        chosen.push(i);
        taken[i] = true;
        for (g, s) in gap.iter_mut().zip(scores) {
            *g = g.min((s - scores[i]).abs());
        }
    };
    let pick = |taken: &[bool], key: &dyn Fn(usize) -> f64| -> usize {
        let mut best: Option<usize> = None;
        for i in (0..scores.len()).filter(|&i| !taken[i]) {
            if best.is_none_or(|b| key(i) > key(b)) {
                best = Some(i);
            }
        }
        best.expect("k <= n leaves a candidate")
    };

    let lowest = pick(&taken, &|i| -scores[i]);
    take(lowest, &mut chosen, &mut taken, &mut gap);
    if k >= 2 {
        let highest = pick(&taken, &|i| scores[i]);
        take(highest, &mut chosen, &mut taken, &mut gap);
    }
    while chosen.len() < k {
        let snapshot = gap.clone();
        let next = pick(&taken, &|i| snapshot[i]);
        take(next, &mut chosen, &mut taken, &mut gap);
    }
    Ok(chosen)
}
