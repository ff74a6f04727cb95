use super::ot::atom_costs;
use super::weights::{seg_weights, WeightScheme};
use super::PairDoc;
use crate::Result;

/// Mass below this is treated as fully moved.
const MASS_EPS: f64 = 1e-12;

/// Greedy transport cost: visit all atom pairs by ascending cost (ties by
/// source then target index) and move as much mass as both ends still have.
pub fn greedy_transport_cost(cost: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let m = b.len();
    let mut order: Vec<usize> = (0..cost.len()).collect();
    // index order i * m + j already encodes the (i, j) tie rule
    order.sort_by(|&x, &y| cost[x].total_cmp(&cost[y]).then(x.cmp(&y)));
    let mut left_a = a.to_vec();
    let mut left_b = b.to_vec();
    let mut remaining: f64 = a.iter().sum();
    let mut total = 0.0;
    for idx in order {
        if remaining <= MASS_EPS {
            break;
        }
        let (i, j) = (idx / m, idx % m);
        let moved = left_a[i].min(left_b[j]);
        if moved <= 0.0 {
            continue;
        }
        left_a[i] -= moved;
        left_b[j] -= moved;
        remaining -= moved;
        total += moved * cost[idx];
    }
    total
}

/// `1 - greedy movers' distance` between two documents.
pub fn gmd_score(src: &PairDoc<'_>, tgt: &PairDoc<'_>, scheme: WeightScheme) -> Result<f64> {
    src.check(tgt)?;
    let sa = seg_weights(src.segments, scheme);
    let ta = seg_weights(tgt.segments, scheme);
    let cost = atom_costs(src, &sa, tgt, &ta);
    let a: Vec<f64> = sa.iter().map(|x| x.weight).collect();
    let b: Vec<f64> = ta.iter().map(|x| x.weight).collect();
    Ok(1.0 - greedy_transport_cost(&cost, &a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_io::Rows;
    use crate::segmentation::Segment;

    fn segs(n: usize) -> Vec<Segment> {
        (0..n)
            .map(|i| Segment {
                text: format!("s{i}"),
                token_len: 1,
                position: i,
            })
            .collect()
    }

    #[test]
    fn identical_docs() {
        let rows = [1.0f32, 0.0, 0.0, 1.0];
        let s = segs(2);
        let d = PairDoc::new(Rows::new(&rows, 2), &s);
        assert_eq!(gmd_score(&d, &d, WeightScheme::Uniform).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_hand_case() {
        let c = greedy_transport_cost(&[0.1, 0.9, 0.4, 0.2], &[0.5, 0.5], &[0.5, 0.5]);
        assert!((c - 0.15).abs() < 1e-15);
        assert!((1.0 - c - 0.85).abs() < 1e-15);
    }

    #[test]
    fn one_by_n_is_forced() {
        let c = [0.2, 0.8];
        assert!((greedy_transport_cost(&c, &[1.0], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ties_follow_index_order() {
        // all costs equal: (0,0) then (0,1) ... mass goes 0->0, 1->1
        let c = greedy_transport_cost(&[0.5; 4], &[0.5, 0.5], &[0.5, 0.5]);
        assert_eq!(c, 0.5);
    }
}
