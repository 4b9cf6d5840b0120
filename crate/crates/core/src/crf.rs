//! Linear-chain CRF: sequence scoring, log-partition via the forward
//! algorithm, Viterbi decoding, negative log-likelihood with analytic
//! gradients, and exact brute-force oracles for testing.
//!
//! Transitions live on an (L+2)×(L+2) matrix over the label set plus virtual
//! START and STOP states. Forbidden transitions (into START, out of STOP,
//! optional BIO constraints) are held at a large negative constant so all
//! arithmetic stays finite.

use rand::Rng;

use crate::nn::{uniform_init, Array2, Param};

/// Finite stand-in for minus infinity in transition scores.
pub const FORBIDDEN_SCORE: f64 = -1e4;

/// Token-by-label score matrix produced by the encoder (n × L).
pub type Emissions = Array2;

#[derive(Debug, thiserror::Error)]
pub enum CrfError {
    #[error("labels length {labels} does not match token count {tokens}")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("label index {label} out of range for {n_labels} labels")]
    LabelOutOfRange { label: usize, n_labels: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("state space too large for enumeration: {paths} paths")]
    SizeGuardExceeded { paths: f64 },
}

/// Trainable transition matrix with a fixed forbidden mask.
#[derive(Debug, Clone)]
pub struct Transitions {
    pub param: Param,
    n_labels: usize,
    forbidden: Vec<(usize, usize)>,
}

impl Transitions {
    /// Random init of allowed entries; forbidden entries fixed at
    /// [`FORBIDDEN_SCORE`].
    pub fn new(n_labels: usize, rng: &mut impl Rng) -> Transitions {
        let matrix = uniform_init(n_labels + 2, n_labels + 2, 0.1, rng);
        let mut t = Transitions {
            param: Param::new(matrix),
            n_labels,
            forbidden: Vec::new(),
        };
        t.forbidden = t.structural_forbidden();
        t.apply_forbidden();
        t
    }

    /// All-zero allowed entries; used by tests that need neutral transitions.
    pub fn zeros(n_labels: usize) -> Transitions {
        let matrix = Array2::zeros(n_labels + 2, n_labels + 2);
        let mut t = Transitions {
            param: Param::new(matrix),
            n_labels,
            forbidden: Vec::new(),
        };
        t.forbidden = t.structural_forbidden();
        t.apply_forbidden();
        t
    }

    fn structural_forbidden(&self) -> Vec<(usize, usize)> {
        let (start, stop) = (self.start(), self.stop());
        let mut pairs = Vec::new();
        for s in 0..self.n_labels + 2 {
            pairs.push((s, start)); // nothing enters START
            pairs.push((stop, s)); // nothing leaves STOP
        }
        pairs.push((start, stop));
        pairs
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn start(&self) -> usize {
        self.n_labels
    }

    pub fn stop(&self) -> usize {
        self.n_labels + 1
    }

    #[inline]
    pub fn score(&self, from: usize, to: usize) -> f64 {
        self.param.value.get(from, to)
    }

    /// Add forbidden transition pairs (label-index based) on top of the
    /// structural mask, e.g. BIO constraints.
    pub fn forbid(&mut self, pairs: impl IntoIterator<Item = (usize, usize)>) {
        self.forbidden.extend(pairs);
        self.apply_forbidden();
    }

    /// Reset every forbidden entry to [`FORBIDDEN_SCORE`]. Called after each
    /// optimizer step so constraints survive training.
    pub fn apply_forbidden(&mut self) {
        for &(from, to) in &self.forbidden {
            self.param.value.set(from, to, FORBIDDEN_SCORE);
        }
    }

    fn check(&self, emissions: &Emissions, labels: &[usize]) -> Result<(), CrfError> {
        if emissions.rows() != labels.len() {
            return Err(CrfError::LengthMismatch {
                tokens: emissions.rows(),
                labels: labels.len(),
            });
        }
        for &l in labels {
            if l >= self.n_labels {
                return Err(CrfError::LabelOutOfRange {
                    label: l,
                    n_labels: self.n_labels,
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Path score: `T[START][l_0] + Σ E[t][l_t] + Σ T[l_{t-1}][l_t] + T[l_last][STOP]`.
pub fn score_sequence(
    emissions: &Emissions,
    transitions: &Transitions,
    labels: &[usize],
) -> Result<f64, CrfError> {
    transitions.check(emissions, labels)?;
    if labels.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let mut score = transitions.score(transitions.start(), labels[0]);
    score += emissions.get(0, labels[0]);
    for t in 1..labels.len() {
        score += transitions.score(labels[t - 1], labels[t]);
        score += emissions.get(t, labels[t]);
    }
    score += transitions.score(labels[labels.len() - 1], transitions.stop());
    Ok(score)
}

/// Forward-algorithm alphas: `alpha[t][j] = log Σ paths ending at (t, j)`.
fn forward_alphas(emissions: &Emissions, transitions: &Transitions) -> Array2 {
    let n = emissions.rows();
    let labels = transitions.n_labels;
    let mut alpha = Array2::zeros(n, labels);
    for j in 0..labels {
        alpha.set(0, j, transitions.score(transitions.start(), j) + emissions.get(0, j));
    }
    let mut scratch = vec![0.0; labels];
    for t in 1..n {
        for j in 0..labels {
            for (k, s) in scratch.iter_mut().enumerate() {
                *s = alpha.get(t - 1, k) + transitions.score(k, j);
            }
            alpha.set(t, j, log_sum_exp(&scratch) + emissions.get(t, j));
        }
    }
    alpha
}

/// Log of the summed exponentiated scores over all label paths, computed in
/// O(n·L²) with log-sum-exp.
pub fn log_partition(emissions: &Emissions, transitions: &Transitions) -> f64 {
    assert!(emissions.rows() >= 1, "log_partition needs n >= 1");
    let n = emissions.rows();
    let alpha = forward_alphas(emissions, transitions);
    let finals: Vec<f64> = (0..transitions.n_labels)
        .map(|j| alpha.get(n - 1, j) + transitions.score(j, transitions.stop()))
        .collect();
    log_sum_exp(&finals)
}

/// Highest-scoring label path and its score. Ties break toward the lowest
/// label index at every backtrack step.
pub fn viterbi(emissions: &Emissions, transitions: &Transitions) -> (Vec<usize>, f64) {
    assert!(emissions.rows() >= 1, "viterbi needs n >= 1");
    let n = emissions.rows();
    let labels = transitions.n_labels;
    let mut score = vec![0.0; labels];
    for (j, s) in score.iter_mut().enumerate() {
        *s = transitions.score(transitions.start(), j) + emissions.get(0, j);
    }
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(n.saturating_sub(1));
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; labels];
        let mut ptr = vec![0usize; labels];
        for j in 0..labels {
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0;
            for k in 0..labels {
                let s = score[k] + transitions.score(k, j);
                if s > best {
                    best = s;
                    best_k = k;
                }
            }
            next[j] = best + emissions.get(t, j);
            ptr[j] = best_k;
        }
        score = next;
        backptr.push(ptr);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for (j, s) in score.iter().enumerate() {
        let total = s + transitions.score(j, transitions.stop());
        if total > best {
            best = total;
            best_j = j;
        }
    }
    let mut path = vec![best_j];
    for ptr in backptr.iter().rev() {
        path.push(ptr[*path.last().unwrap()]);
    }
    path.reverse();
    (path, best)
}

/// Negative log-likelihood of the gold path: `log_partition - score(gold)`.
pub fn nll_loss(
    emissions: &Emissions,
    transitions: &Transitions,
    gold: &[usize],
) -> Result<f64, CrfError> {
    let gold_score = score_sequence(emissions, transitions, gold)?;
    Ok(log_partition(emissions, transitions) - gold_score)
}

/// NLL plus analytic gradients w.r.t. emissions and the transition matrix,
/// from the forward-backward marginals: `dE = P(y_t=j) - 1[gold]`,
/// `dT = expected transition counts - gold transition counts`.
pub fn nll_grad(
    emissions: &Emissions,
    transitions: &Transitions,
    gold: &[usize],
) -> Result<(f64, Array2, Array2), CrfError> {
    transitions.check(emissions, gold)?;
    if gold.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let n = emissions.rows();
    let labels = transitions.n_labels;
    let (start, stop) = (transitions.start(), transitions.stop());

    let alpha = forward_alphas(emissions, transitions);
    // Betas: beta[t][k] = log sum over completions from (t, k).
    let mut beta = Array2::zeros(n, labels);
    for k in 0..labels {
        beta.set(n - 1, k, transitions.score(k, stop));
    }
    let mut scratch = vec![0.0; labels];
    for t in (0..n - 1).rev() {
        for k in 0..labels {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = transitions.score(k, j) + emissions.get(t + 1, j) + beta.get(t + 1, j);
            }
            beta.set(t, k, log_sum_exp(&scratch));
        }
    }
    let log_z = {
        let finals: Vec<f64> = (0..labels)
            .map(|j| alpha.get(n - 1, j) + transitions.score(j, stop))
            .collect();
        log_sum_exp(&finals)
    };

    // Emission gradient: token marginals minus the gold one-hot.
    let mut d_e = Array2::zeros(n, labels);
    for t in 0..n {
        for j in 0..labels {
            let marginal = (alpha.get(t, j) + beta.get(t, j) - log_z).exp();
            d_e.set(t, j, marginal);
        }
        d_e.set(t, gold[t], d_e.get(t, gold[t]) - 1.0);
    }

    // Transition gradient: expected pair counts minus gold pair counts.
    let mut d_t = Array2::zeros(labels + 2, labels + 2);
    for j in 0..labels {
        let marginal0 = (alpha.get(0, j) + beta.get(0, j) - log_z).exp();
        d_t.set(start, j, marginal0);
        let marginal_last = (alpha.get(n - 1, j) + beta.get(n - 1, j) - log_z).exp();
        d_t.set(j, stop, marginal_last);
    }
    for t in 0..n - 1 {
        for k in 0..labels {
            for j in 0..labels {
                let pair = (alpha.get(t, k)
                    + transitions.score(k, j)
                    + emissions.get(t + 1, j)
                    + beta.get(t + 1, j)
                    - log_z)
                    .exp();
                d_t.set(k, j, d_t.get(k, j) + pair);
            }
        }
    }
    d_t.set(start, gold[0], d_t.get(start, gold[0]) - 1.0);
    d_t.set(gold[n - 1], stop, d_t.get(gold[n - 1], stop) - 1.0);
    for t in 1..n {
        let (k, j) = (gold[t - 1], gold[t]);
        d_t.set(k, j, d_t.get(k, j) - 1.0);
    }

    let gold_score = score_sequence(emissions, transitions, gold)?;
    Ok((log_z - gold_score, d_e, d_t))
}

fn enumeration_guard(n: usize, labels: usize) -> Result<(), CrfError> {
    let paths = (labels as f64).powi(n as i32);
    if paths > 1e7 {
        return Err(CrfError::SizeGuardExceeded { paths });
    }
    Ok(())
}

/// Exact log-partition by enumerating every label sequence.
pub fn brute_force_partition(
    emissions: &Emissions,
    transitions: &Transitions,
) -> Result<f64, CrfError> {
    let n = emissions.rows();
    let labels = transitions.n_labels;
    enumeration_guard(n, labels)?;
    let mut scores = Vec::new();
    let mut assignment = vec![0usize; n];
    loop {
        scores.push(score_sequence(emissions, transitions, &assignment)?);
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(log_sum_exp(&scores));
            }
            assignment[pos] += 1;
            if assignment[pos] < labels {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact argmax by enumeration, with the same lowest-index tie-break as
/// Viterbi (the first maximal assignment in odometer order that is also
/// lexicographically-lowest from the rear is kept by strict comparison).
pub fn brute_force_decode(
    emissions: &Emissions,
    transitions: &Transitions,
) -> Result<(Vec<usize>, f64), CrfError> {
    let n = emissions.rows();
    let labels = transitions.n_labels;
    enumeration_guard(n, labels)?;
    let mut best_score = f64::NEG_INFINITY;
    let mut best = vec![0usize; n];
    let mut assignment = vec![0usize; n];
    loop {
        let s = score_sequence(emissions, transitions, &assignment)?;
        if s > best_score {
            best_score = s;
            best = assignment.clone();
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok((best, best_score));
            }
            assignment[pos] += 1;
            if assignment[pos] < labels {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, uniform_init};
    use crate::seed;

    fn random_case(rng: &mut impl rand::Rng, n: usize, labels: usize) -> (Emissions, Transitions) {
        let e = uniform_init(n, labels, 2.0, rng);
        let mut t = Transitions::new(labels, rng);
        // Spread transition scores a bit wider than init.
        let spread = uniform_init(labels + 2, labels + 2, 1.5, rng);
        t.param.value = spread;
        t.apply_forbidden();
        (e, t)
    }

    #[test]
    fn score_single_token() {
        let mut rng = seed::rng(31, 0);
        let (e, t) = random_case(&mut rng, 1, 3);
        for k in 0..3 {
            let expect = t.score(t.start(), k) + e.get(0, k) + t.score(k, t.stop());
            assert!((score_sequence(&e, &t, &[k]).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn score_zero_transitions_sums_emissions() {
        let e = Array2::from_vec(2, 2, vec![0.3, -0.4, 1.2, 0.9]);
        let t = Transitions::zeros(2);
        let s = score_sequence(&e, &t, &[1, 0]).unwrap();
        assert!((s - (-0.4 + 1.2)).abs() < 1e-12);
    }

    #[test]
    fn score_random_case_term_by_term() {
        let mut rng = seed::rng(32, 0);
        let (e, t) = random_case(&mut rng, 3, 4);
        let labels = [2usize, 0, 3];
        let mut expect = t.score(t.start(), 2) + e.get(0, 2);
        expect += t.score(2, 0) + e.get(1, 0);
        expect += t.score(0, 3) + e.get(2, 3);
        expect += t.score(3, t.stop());
        assert!((score_sequence(&e, &t, &labels).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn score_length_mismatch() {
        let e = Array2::zeros(2, 2);
        let t = Transitions::zeros(2);
        assert!(matches!(
            score_sequence(&e, &t, &[0]),
            Err(CrfError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_partition_uniform_two_paths() {
        // 1 token, 2 labels, zero scores everywhere: log 2.
        let e = Array2::zeros(1, 2);
        let t = Transitions::zeros(2);
        assert!((log_partition(&e, &t) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_partition_matches_brute_force() {
        let mut rng = seed::rng(33, 0);
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let labels = rng.random_range(1..=6);
            let (e, t) = random_case(&mut rng, n, labels);
            let fast = log_partition(&e, &t);
            let exact = brute_force_partition(&e, &t).unwrap();
            assert!((fast - exact).abs() < 1e-6, "n={n} L={labels}: {fast} vs {exact}");
        }
    }

    #[test]
    fn log_partition_dominates_any_path() {
        let mut rng = seed::rng(34, 0);
        let (e, t) = random_case(&mut rng, 4, 5);
        let z = log_partition(&e, &t);
        for _ in 0..20 {
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
            assert!(z >= score_sequence(&e, &t, &labels).unwrap());
        }
    }

    #[test]
    fn viterbi_dominant_emissions() {
        let mut e = Array2::zeros(3, 4);
        e.set(0, 2, 5.0);
        e.set(1, 0, 5.0);
        e.set(2, 3, 5.0);
        let t = Transitions::zeros(4);
        let (path, _) = viterbi(&e, &t);
        assert_eq!(path, vec![2, 0, 3]);
    }

    #[test]
    fn viterbi_all_zero_ties_to_label_zero() {
        let e = Array2::zeros(4, 3);
        let t = Transitions::zeros(3);
        let (path, score) = viterbi(&e, &t);
        assert_eq!(path, vec![0, 0, 0, 0]);
        assert!(score.abs() < 1e-12);
    }

    #[test]
    fn viterbi_matches_brute_force_score() {
        let mut rng = seed::rng(35, 0);
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let labels = rng.random_range(1..=6);
            let (e, t) = random_case(&mut rng, n, labels);
            let (path, score) = viterbi(&e, &t);
            let (_, exact) = brute_force_decode(&e, &t).unwrap();
            assert!((score - exact).abs() < 1e-9);
            let rescored = score_sequence(&e, &t, &path).unwrap();
            assert!((rescored - score).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_is_nonnegative_and_matches_enumeration() {
        let mut rng = seed::rng(36, 0);
        for _ in 0..20 {
            let n = rng.random_range(1..=4);
            let labels = rng.random_range(2..=5);
            let (e, t) = random_case(&mut rng, n, labels);
            let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..labels)).collect();
            let loss = nll_loss(&e, &t, &gold).unwrap();
            assert!(loss >= -1e-9);
            // -log p(gold) from enumeration.
            let z = brute_force_partition(&e, &t).unwrap();
            let expect = z - score_sequence(&e, &t, &gold).unwrap();
            assert!((loss - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn nll_single_label_is_zero() {
        // L = 1: the single path is the whole distribution.
        let mut rng = seed::rng(37, 0);
        let (e, t) = random_case(&mut rng, 3, 1);
        let loss = nll_loss(&e, &t, &[0, 0, 0]).unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn nll_dominant_gold_near_zero() {
        // Give the gold path a huge margin; loss must shrink below
        // exp(-margin) * L^n.
        let labels = 3;
        let n = 3;
        let mut e = Array2::zeros(n, labels);
        let gold = [1usize, 2, 0];
        for (t, &g) in gold.iter().enumerate() {
            e.set(t, g, 30.0);
        }
        let t = Transitions::zeros(labels);
        let loss = nll_loss(&e, &t, &gold).unwrap();
        let bound = (-30.0f64).exp() * (labels as f64).powi(n as i32);
        assert!(loss >= -1e-12 && loss < bound, "loss {loss} bound {bound}");
    }

    #[test]
    fn path_probabilities_sum_to_one() {
        let mut rng = seed::rng(38, 0);
        let (e, t) = random_case(&mut rng, 3, 3);
        let z = log_partition(&e, &t);
        let mut total = 0.0;
        let mut assignment = vec![0usize; 3];
        loop {
            total += (score_sequence(&e, &t, &assignment).unwrap() - z).exp();
            let mut pos = 0;
            loop {
                if pos == 3 {
                    assert!((total - 1.0).abs() < 1e-9, "sum {total}");
                    return;
                }
                assignment[pos] += 1;
                if assignment[pos] < 3 {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn row_shift_invariance() {
        // Adding c to one emission row shifts log_partition by c and leaves
        // the Viterbi path unchanged.
        let mut rng = seed::rng(39, 0);
        let (e, t) = random_case(&mut rng, 4, 4);
        let z = log_partition(&e, &t);
        let (path, _) = viterbi(&e, &t);
        let mut shifted = e.clone();
        let c = 2.75;
        for j in 0..4 {
            shifted.set(2, j, shifted.get(2, j) + c);
        }
        assert!((log_partition(&shifted, &t) - (z + c)).abs() < 1e-9);
        let (path2, _) = viterbi(&shifted, &t);
        assert_eq!(path, path2);
    }

    #[test]
    fn gradients_pass_finite_difference_check() {
        let mut rng = seed::rng(40, 0);
        let (e, t) = random_case(&mut rng, 4, 5);
        let gold = vec![1usize, 0, 3, 2];
        let (_, d_e, d_t) = nll_grad(&e, &t, &gold).unwrap();

        let t_for_e = t.clone();
        let gold_e = gold.clone();
        let mut params = vec![e.clone()];
        let res = grad_check(
            &mut move |p: &[Array2]| nll_loss(&p[0], &t_for_e, &gold_e).unwrap(),
            &mut params,
            0,
            &d_e,
            1e-5,
            1000,
            &mut rng,
        );
        assert!(res.max_rel_error < 1e-6, "dE: {}", res.max_rel_error);

        let e_for_t = e.clone();
        let base_t = t.clone();
        let gold_t = gold.clone();
        let mut params = vec![t.param.value.clone()];
        let res = grad_check(
            &mut move |p: &[Array2]| {
                let mut tt = base_t.clone();
                tt.param.value = p[0].clone();
                nll_loss(&e_for_t, &tt, &gold_t).unwrap()
            },
            &mut params,
            0,
            &d_t,
            1e-5,
            1000,
            &mut rng,
        );
        assert!(res.max_rel_error < 1e-6, "dT: {}", res.max_rel_error);
    }

    #[test]
    fn brute_force_guard() {
        let e = Array2::zeros(10, 10);
        let t = Transitions::zeros(10);
        assert!(matches!(
            brute_force_partition(&e, &t),
            Err(CrfError::SizeGuardExceeded { .. })
        ));
    }

    #[test]
    fn brute_force_single_token_is_direct_sum() {
        let mut rng = seed::rng(41, 0);
        let (e, t) = random_case(&mut rng, 1, 4);
        let scores: Vec<f64> = (0..4)
            .map(|k| t.score(t.start(), k) + e.get(0, k) + t.score(k, t.stop()))
            .collect();
        let expect = log_sum_exp(&scores);
        assert!((brute_force_partition(&e, &t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn constraints_forbid_transitions() {
        let mut rng = seed::rng(42, 0);
        let (mut e, mut t) = random_case(&mut rng, 2, 3);
        // Make label 1 -> label 2 maximally attractive, then forbid it.
        e.fill(0.0);
        e.set(0, 1, 10.0);
        e.set(1, 2, 10.0);
        let (path, _) = viterbi(&e, &t);
        assert_eq!(path, vec![1, 2]);
        t.forbid([(1usize, 2usize)]);
        let (path, _) = viterbi(&e, &t);
        assert_ne!(path, vec![1, 2]);
    }
}
