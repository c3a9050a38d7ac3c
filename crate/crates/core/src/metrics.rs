//! Clustering error up to relabeling of latent states.

use itertools::Itertools;

use crate::error::{Error, Result};

pub const MAX_EXACT_STATES: usize = 8;

/// Best alignment of an estimated decoder with the true one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Misclassification {
    pub count: usize,
    /// `permutation[s]` is the estimated label matched to true state `s`.
    pub permutation: Vec<usize>,
}

impl Misclassification {
    pub fn rate(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.count as f64 / n as f64
        }
    }
}

/// `min_sigma |{x : f_hat(x) != sigma(f_true(x))}|` by exhaustive search over
/// the `S!` label permutations. Ties resolve to the lexicographically first
/// permutation.
pub fn misclassification_count(f_true: &[usize], f_hat: &[usize], n_states: usize) -> Result<Misclassification> {
    if n_states > MAX_EXACT_STATES {
        return Err(Error::TooManyStates(n_states));
    }
    if f_true.len() != f_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "decoders have lengths {} and {}",
            f_true.len(),
            f_hat.len()
        )));
    }
    if let Some(&l) = f_true.iter().chain(f_hat).find(|&&l| l >= n_states) {
        return Err(Error::OutOfRange(format!("label {l} >= S = {n_states}")));
    }
    // confusion[s][t] = #{x : f_true(x) = s, f_hat(x) = t}
    let mut confusion = vec![vec![0usize; n_states]; n_states];
    for (&s, &t) in f_true.iter().zip(f_hat) {
        confusion[s][t] += 1;
    }
    let n = f_true.len();
    let mut best = Misclassification { count: usize::MAX, permutation: (0..n_states).collect() };
    for perm in (0..n_states).permutations(n_states) {
        let agree: usize = perm.iter().enumerate().map(|(s, &t)| confusion[s][t]).sum();
        let count = n - agree;
        if count < best.count {
            best = Misclassification { count, permutation: perm };
        }
    }
    if n_states == 0 {
        best.count = n;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over every permutation without the confusion table.
    fn oracle(f_true: &[usize], f_hat: &[usize], s: usize) -> usize {
        (0..s)
            .permutations(s)
            .map(|p| f_true.iter().zip(f_hat).filter(|(&a, &b)| p[a] != b).count())
            .min()
            .unwrap()
    }

    #[test]
    fn label_swap_is_free() {
        let r = misclassification_count(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(r.count, 0);
        assert_eq!(r.permutation, vec![1, 0]);
    }

    #[test]
    fn one_error() {
        assert_eq!(oracle(&[0, 0, 1, 1], &[0, 1, 1, 1], 2), 1);
        assert_eq!(misclassification_count(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap().count, 1);
    }

    #[test]
    fn identity_is_zero() {
        let f = [2, 0, 1, 1, 2];
        assert_eq!(misclassification_count(&f, &f, 3).unwrap().count, 0);
    }

    #[test]
    fn rejects_large_state_spaces() {
        assert!(matches!(misclassification_count(&[0], &[0], 9), Err(Error::TooManyStates(9))));
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(s in 1usize..5, pairs in prop::collection::vec((0usize..4, 0usize..4), 1..30)) {
            let f_true: Vec<usize> = pairs.iter().map(|p| p.0 % s).collect();
            let f_hat: Vec<usize> = pairs.iter().map(|p| p.1 % s).collect();
            let r = misclassification_count(&f_true, &f_hat, s).unwrap();
            prop_assert_eq!(r.count, oracle(&f_true, &f_hat, s));
        }

        #[test]
        fn invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30),
            shift in 0usize..3,
        ) {
            let f_true: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let f_hat: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let relabeled: Vec<usize> = f_hat.iter().map(|&l| (l + shift) % 3).collect();
            let base = misclassification_count(&f_true, &f_hat, 3).unwrap().count;
            prop_assert_eq!(base, misclassification_count(&f_true, &relabeled, 3).unwrap().count);
            prop_assert_eq!(base, misclassification_count(&f_hat, &f_true, 3).unwrap().count);
        }

        #[test]
        fn single_flip_moves_count_by_at_most_one(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..30),
            idx in 0usize..30,
            label in 0usize..3,
        ) {
            let f_true: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let mut f_hat: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let before = misclassification_count(&f_true, &f_hat, 3).unwrap().count as i64;
            let i = idx % f_hat.len();
            f_hat[i] = label;
            let after = misclassification_count(&f_true, &f_hat, 3).unwrap().count as i64;
            prop_assert!((after - before).abs() <= 1);
        }
    }
}
