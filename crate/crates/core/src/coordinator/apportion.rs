//! Largest-remainder apportionment.

/// Splits `target` integer units in proportion to `quotas`.
///
/// Every entry first gets `floor(quota)`; the units still missing go one each
/// to the largest fractional remainders, ties to the lower index. Entries
/// with a non-positive quota never receive a remainder unit. If the floors
/// already exceed `target`, units are taken back from the smallest
/// remainders first.
pub fn largest_remainder(quotas: &[f64], target: u64) -> Vec<u64> {
    let mut out: Vec<u64> = quotas.iter().map(|&q| if q > 0.0 { q.floor() as u64 } else { 0 }).collect();
    let assigned: u64 = out.iter().sum();
    let frac = |i: usize| if quotas[i] > 0.0 { quotas[i] - quotas[i].floor() } else { 0.0 };

    let mut order: Vec<usize> = (0..quotas.len()).filter(|&i| quotas[i] > 0.0).collect();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));

    if assigned < target {
        let mut missing = target - assigned;
        // more than one pass only happens when quotas undershoot the target
        while missing > 0 && !order.is_empty() {
            for &i in &order {
                if missing == 0 {
                    break;
                }
                out[i] += 1;
                missing -= 1;
            }
        }
    } else if assigned > target {
        let mut excess = assigned - target;
        while excess > 0 {
            let mut progressed = false;
            for &i in order.iter().rev() {
                if excess == 0 {
                    break;
                }
                if out[i] > 0 {
                    out[i] -= 1;
                    excess -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
    }
    out
}
