//! Independent oracles for the acceptance suite. These deliberately avoid
//! the library's own code paths: AUC is checked against exhaustive pairwise
//! comparison, and EMD against a dense two-phase simplex solving the full
//! transportation LP.

#![allow(dead_code)]

/// Mann-Whitney statistic by exhaustive pairwise comparison, ties counted
/// half: P(pos > neg) + P(pos == neg) / 2.
pub fn mann_whitney_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// Exact EMD oracle: normalizes both grids to unit mass and solves the full
/// transportation LP (every supply cell to every demand cell, Euclidean cell
/// distances, unit spacing) with a two-phase tableau simplex under Bland's
/// rule.
pub fn transport_emd_lp(p: &[f64], q: &[f64], width: usize) -> f64 {
    assert_eq!(p.len(), q.len());
    let cells = p.len();
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    assert!(ps > 0.0 && qs > 0.0);
    let p: Vec<f64> = p.iter().map(|&v| v / ps).collect();
    let q: Vec<f64> = q.iter().map(|&v| v / qs).collect();

    let dist = |a: usize, b: usize| -> f64 {
        let (ax, ay) = ((a % width) as f64, (a / width) as f64);
        let (bx, by) = ((b % width) as f64, (b / width) as f64);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    };

    // Variables x[i * cells + j]; one supply row per i, one demand row per j
    // except the last (implied by mass balance).
    let nvars = cells * cells;
    let nrows = 2 * cells - 1;
    let mut a = vec![vec![0.0f64; nvars]; nrows];
    let mut b = vec![0.0f64; nrows];
    for i in 0..cells {
        for j in 0..cells {
            a[i][i * cells + j] = 1.0;
        }
        b[i] = p[i];
    }
    for j in 0..cells - 1 {
        for i in 0..cells {
            a[cells + j][i * cells + j] = 1.0;
        }
        b[cells + j] = q[j];
    }
    let mut costs = vec![0.0f64; nvars];
    for i in 0..cells {
        for j in 0..cells {
            costs[i * cells + j] = dist(i, j);
        }
    }
    simplex_two_phase(a, b, costs)
}

/// Minimizes c.x subject to Ax = b, x >= 0 (b >= 0 assumed). Returns the
/// optimal objective. Panics if the program is infeasible or unbounded,
/// which would be a bug in the test setup.
fn simplex_two_phase(a: Vec<Vec<f64>>, b: Vec<f64>, costs: Vec<f64>) -> f64 {
    const EPS: f64 = 1e-11;
    let nrows = a.len();
    let nreal = costs.len();
    let ncols = nreal + nrows; // artificial variables appended

    // tableau[r] = coefficients + rhs; basis[r] = basic variable of row r.
    let mut tab: Vec<Vec<f64>> = (0..nrows)
        .map(|r| {
            let mut row = a[r].clone();
            row.extend((0..nrows).map(|k| if k == r { 1.0 } else { 0.0 }));
            row.push(b[r]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (0..nrows).map(|r| nreal + r).collect();

    let pivot = |tab: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, row: usize, col: usize| {
        let piv = tab[row][col];
        for v in tab[row].iter_mut() {
            *v /= piv;
        }
        for r in 0..tab.len() {
            if r != row && tab[r][col].abs() > 0.0 {
                let factor = tab[r][col];
                let src = tab[row].clone();
                for (dst, s) in tab[r].iter_mut().zip(&src) {
                    *dst -= factor * s;
                }
            }
        }
        basis[row] = col;
    };

    // Runs simplex iterations for the given cost vector with Bland's rule.
    let run = |tab: &mut Vec<Vec<f64>>,
               basis: &mut Vec<usize>,
               cost: &dyn Fn(usize) -> f64,
               allowed: usize| {
        loop {
            // Reduced costs: c_j - c_B . B^-1 A_j.
            let mut entering = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut red = cost(j);
                for (r, &bv) in basis.iter().enumerate() {
                    red -= cost(bv) * tab[r][j];
                }
                if red < -EPS {
                    entering = Some(j); // Bland: first improving index
                    break;
                }
            }
            let Some(col) = entering else { break };
            // Ratio test; Bland ties break on the smallest basic variable.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..tab.len() {
                let coef = tab[r][col];
                if coef > EPS {
                    let ratio = tab[r].last().unwrap() / coef;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - EPS
                                || (ratio < lratio + EPS && basis[r] < basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let (row, _) = leave.expect("transportation LP is bounded");
            pivot(tab, basis, row, col);
        }
    };

    // Phase 1: drive artificials to zero.
    let phase1_cost = move |j: usize| if j >= nreal { 1.0 } else { 0.0 };
    run(&mut tab, &mut basis, &phase1_cost, ncols);
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= nreal)
        .map(|(r, _)| tab[r].last().unwrap())
        .sum();
    assert!(
        infeasibility.abs() < 1e-8,
        "transportation LP reported infeasible: {infeasibility}"
    );

    // Pivot lingering zero-level artificials out on any real column. The
    // constraint rows are linearly independent (the redundant demand row was
    // never added), so this always succeeds.
    for r in 0..nrows {
        if basis[r] >= nreal {
            let col = (0..nreal)
                .find(|&j| tab[r][j].abs() > EPS)
                .expect("independent rows admit a real pivot");
            pivot(&mut tab, &mut basis, r, col);
        }
    }
    assert!(basis.iter().all(|&bv| bv < nreal));

    // Phase 2 over real variables only.
    let c2 = costs.clone();
    let phase2_cost = move |j: usize| if j < nreal { c2[j] } else { 0.0 };
    run(&mut tab, &mut basis, &phase2_cost, nreal);

    basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv < nreal)
        .map(|(r, &bv)| costs[bv] * tab[r].last().unwrap())
        .sum()
}

#[cfg(test)]
mod oracle_self_tests {
    use super::*;

    #[test]
    fn lp_oracle_hand_cases() {
        // All mass moving three cells right on a 4x1 grid costs 3.
        let v = transport_emd_lp(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0], 4);
        assert!((v - 3.0).abs() < 1e-9, "{v}");
        // Identical distributions cost nothing.
        let v = transport_emd_lp(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], 3);
        assert!(v.abs() < 1e-9, "{v}");
        // Half the mass moves 1, half moves 2.
        let v = transport_emd_lp(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5], 3);
        assert!((v - 1.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn mann_whitney_hand_cases() {
        assert_eq!(mann_whitney_auc(&[2.0], &[1.0]), 1.0);
        assert_eq!(mann_whitney_auc(&[1.0], &[1.0]), 0.5);
        assert_eq!(mann_whitney_auc(&[1.0, 3.0], &[2.0]), 0.5);
    }
}
