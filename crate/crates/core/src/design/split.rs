use crate::error::{input, Result};
use crate::mcse::rel_se_from;

/// Stage sizes `N + n = M` and the max-over-targets RelSE they achieve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub big_n: usize,
    pub n: usize,
    pub value: f64,
}

/// Scans `N ∈ {k, 2k, …, M−k}` for the smallest `max_ξ RelSE(ξ, N, M−N)`;
/// ties go to the smaller `N`.
pub fn optimal_split(budget: usize, k: usize, upsilon1: &[f64], upsilon2: &[f64], u_hat: &[f64]) -> Result<SplitChoice> {
    if k == 0 || budget < 2 * k {
        return input(format!("budget {budget} cannot give every one of {k} proposals a draw in both stages"));
    }
    if upsilon1.is_empty() || upsilon1.len() != upsilon2.len() || upsilon1.len() != u_hat.len() {
        return input("per-target terms must be nonempty and of equal length");
    }
    let objective = |big_n: usize| {
        upsilon1
            .iter()
            .zip(upsilon2)
            .zip(u_hat)
            .map(|((&a, &b), &u)| rel_se_from(a, b, u, big_n, budget - big_n))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = SplitChoice { big_n: k, n: budget - k, value: objective(k) };
    let mut big_n = 2 * k;
    while big_n + k <= budget {
        let v = objective(big_n);
        if v < best.value {
            best = SplitChoice { big_n, n: budget - big_n, value: v };
        }
        big_n += k;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_stage_one_error_puts_budget_in_stage_two() {
        let s = optimal_split(1000, 2, &[0.0, 0.0], &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((s.big_n, s.n), (2, 998));
    }

    #[test]
    fn symmetric_terms_split_evenly() {
        let s = optimal_split(1000, 2, &[1.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(s.big_n, 500);
        let m = optimal_split(999, 3, &[1.0], &[1.0], &[1.0]).unwrap();
        assert!((m.big_n as i64 - 499).abs() <= 3);
    }

    #[test]
    fn returned_split_is_locally_optimal() {
        let (u1, u2, u) = ([0.3, 2.0, 0.9], [1.5, 0.2, 0.7], [1.0, 0.5, 2.0]);
        let s = optimal_split(3000, 3, &u1, &u2, &u).unwrap();
        let at = |n: usize| (0..3).map(|i| rel_se_from(u1[i], u2[i], u[i], n, 3000 - n)).fold(0.0, f64::max);
        assert!(s.value <= at(s.big_n - 3) && s.value <= at(s.big_n + 3));
        assert_eq!(s.value, at(s.big_n));
    }

    #[test]
    fn too_small_budget() {
        assert!(optimal_split(5, 3, &[1.0], &[1.0], &[1.0]).is_err());
    }
}
