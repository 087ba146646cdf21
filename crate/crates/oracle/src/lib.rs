//! Brute-force reference computations for the test suites.
//!
//! Everything here works on plain item indices and enumerates explicitly.
//! Nothing in this crate may call into `opg-core`: it is the independent
//! side of every oracle check.

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            break;
        };
        let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

fn position(order: &[usize], item: usize) -> usize {
    order.iter().position(|&x| x == item).expect("item missing from order")
}

/// Number of item pairs ordered one way in `a` and the other way in `b`.
pub fn kendall(a: &[usize], b: &[usize]) -> usize {
    let mut count = 0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if position(b, a[j]) < position(b, a[i]) {
                count += 1;
            }
        }
    }
    count
}

/// Group index of `item` in a weak ranking.
fn level(groups: &[Vec<usize>], item: usize) -> usize {
    groups.iter().position(|g| g.contains(&item)).expect("item missing from ranking")
}

/// All total orders obtained by resolving the ties of `groups`.
pub fn consistent_orders(groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let items: Vec<usize> = groups.iter().flatten().copied().collect();
    permutations(items.len())
        .into_iter()
        .map(|p| p.iter().map(|&i| items[i]).collect::<Vec<_>>())
        .filter(|order| {
            order.windows(2).all(|w| level(groups, w[0]) <= level(groups, w[1]))
        })
        .collect()
}

/// Sum over all k! orders of exp(-eta * inversions).
pub fn mallows_normalizer(eta: f64, k: usize) -> f64 {
    let identity: Vec<usize> = (0..k).collect();
    permutations(k)
        .iter()
        .map(|p| (-eta * kendall(&identity, p) as f64).exp())
        .sum()
}

/// Log-probability of weak ranking `groups` under a Mallows model centred on
/// `center` (a total order of the same items), by explicit enumeration.
pub fn mallows_log_likelihood(center: &[usize], groups: &[Vec<usize>], eta: f64) -> f64 {
    let num: f64 = consistent_orders(groups)
        .iter()
        .map(|o| (-eta * kendall(center, o) as f64).exp())
        .sum();
    let mut items: Vec<usize> = center.to_vec();
    items.sort_unstable();
    let den: f64 = permutations(items.len())
        .iter()
        .map(|p| {
            let o: Vec<usize> = p.iter().map(|&i| items[i]).collect();
            (-eta * kendall(center, &o) as f64).exp()
        })
        .sum();
    (num / den).ln()
}

/// One grader's contribution to a Kemeny objective: weight and weak ranking.
pub type WeightedRanking = (f64, Vec<Vec<usize>>);

/// Total weighted number of strict feedback pairs reversed by `order`.
pub fn weighted_disagreement(order: &[usize], feedback: &[WeightedRanking]) -> f64 {
    let mut total = 0.0;
    for (w, groups) in feedback {
        for (gi, better) in groups.iter().enumerate() {
            for worse_group in &groups[gi + 1..] {
                for &a in better {
                    for &b in worse_group {
                        if position(order, b) < position(order, a) {
                            total += w;
                        }
                    }
                }
            }
        }
    }
    total
}

/// Exhaustive Kemeny optimum over `n` items: (best cost, all optimal orders).
pub fn kemeny(n: usize, feedback: &[WeightedRanking]) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::INFINITY;
    let mut argbest = Vec::new();
    for p in permutations(n) {
        let c = weighted_disagreement(&p, feedback);
        if c < best - 1e-12 {
            best = c;
            argbest = vec![p];
        } else if (c - best).abs() <= 1e-12 {
            argbest.push(p);
        }
    }
    (best, argbest)
}

/// Score-weighted Kendall distance written literally: `reference` must be
/// sorted by descending score; each pair it orders and `other` reverses costs
/// the score gap.
pub fn score_weighted_kendall(reference: &[usize], other: &[usize], scores: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..reference.len() {
        for j in (i + 1)..reference.len() {
            let (a, b) = (reference[i], reference[j]);
            if position(other, b) < position(other, a) {
                total += scores[a] - scores[b];
            }
        }
    }
    total
}

/// Score-weighted Mallows log-likelihood by enumeration over `items`, with the
/// reference order obtained by sorting on score.
pub fn score_mallows_log_likelihood(groups: &[Vec<usize>], scores: &[f64], eta: f64) -> f64 {
    let mut reference: Vec<usize> = groups.iter().flatten().copied().collect();
    reference.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let num: f64 = consistent_orders(groups)
        .iter()
        .map(|o| (-eta * score_weighted_kendall(&reference, o, scores)).exp())
        .sum();
    let den: f64 = permutations(reference.len())
        .iter()
        .map(|p| {
            let o: Vec<usize> = p.iter().map(|&i| reference[i]).collect();
            (-eta * score_weighted_kendall(&reference, &o, scores)).exp()
        })
        .sum();
    (num / den).ln()
}

/// Tie-aware Kendall error of `predicted` against `target`, pair by pair.
pub fn tau_kt(target: &[Vec<usize>], predicted: &[Vec<usize>]) -> f64 {
    let items: Vec<usize> = target.iter().flatten().copied().collect();
    let mut total = 0.0;
    for &a in &items {
        for &b in &items {
            if level(target, a) < level(target, b) {
                let (pa, pb) = (level(predicted, a), level(predicted, b));
                if pb < pa {
                    total += 1.0;
                } else if pa == pb {
                    total += 0.5;
                }
            }
        }
    }
    total
}

/// Root of a continuous function on `[lo, hi]` by bisection; the function must
/// change sign over the bracket.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root is not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of `f` over a log-spaced grid on `[lo, hi]` followed by a finer
/// grid around the best point.
pub fn grid_argmax_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut best = a;
    for _ in 0..6 {
        let steps = 2000;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..=steps {
            let x = a + (b - a) * i as f64 / steps as f64;
            let v = f(x.exp());
            if v > best_val {
                best_val = v;
                best = x;
            }
        }
        let h = (b - a) / steps as f64;
        a = (best - 2.0 * h).max(lo.ln());
        b = (best + 2.0 * h).min(hi.ln());
    }
    best.exp()
}

/// Central finite-difference gradient.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// Relative error `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(0).len(), 1);
    }

    #[test]
    fn consistent_order_count() {
        let groups = vec![vec![0, 1], vec![2], vec![3, 4, 5]];
        assert_eq!(consistent_orders(&groups).len(), 2 * 6);
    }

    #[test]
    fn normalizer_small() {
        assert!((mallows_normalizer(1.0, 2) - (1.0 + (-1f64).exp())).abs() < 1e-12);
    }
}
