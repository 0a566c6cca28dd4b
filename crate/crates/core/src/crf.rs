//! Log-space linear-chain CRF.
//!
//! Tags are `0..K`. The transition matrix is `(K + 2) x (K + 2)` and indexed
//! `[from, to]`; rows/columns `K` and `K + 1` are the synthetic START and STOP
//! states, so every path of length `T` has exactly `T + 1` transition terms:
//!
//! ```text
//! s(x, y) = A[START, y_1] + sum_t A[y_t, y_{t+1}] + A[y_T, STOP] + sum_t f[t, y_t]
//! ```
//!
//! The partition function, marginals and Viterbi recursion all run in log
//! space (log-sum-exp and max-plus).

use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::error::{Error, Result};

/// Stand-in for `-inf` on blocked transitions. Finite so that sums never turn
/// into NaN, and small enough that it never wins a max or shows up in a
/// log-sum-exp at double precision.
pub const NEG_INF_SENTINEL: f64 = -1e4;

/// Transition scores for a `num_tags`-tag chain, augmented with START/STOP.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    num_tags: usize,
    transitions: Array2<f64>,
}

impl CrfParams {
    /// All usable transitions zero, blocked ones at the sentinel.
    pub fn new(num_tags: usize) -> Result<Self> {
        if num_tags == 0 {
            return Err(Error::Config("a CRF needs at least one tag".into()));
        }
        Self::from_transitions(num_tags, Array2::zeros((num_tags + 2, num_tags + 2)))
    }

    /// Takes a full `(K + 2) x (K + 2)` matrix. Cells that enter START or leave
    /// STOP are overwritten with [`NEG_INF_SENTINEL`]; every other cell must be
    /// finite.
    pub fn from_transitions(num_tags: usize, mut transitions: Array2<f64>) -> Result<Self> {
        if num_tags == 0 {
            return Err(Error::Config("a CRF needs at least one tag".into()));
        }
        let n = num_tags + 2;
        if transitions.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "transition matrix is {:?}, expected ({n}, {n}) for {num_tags} tags",
                transitions.dim()
            )));
        }
        let (start, stop) = (num_tags, num_tags + 1);
        for k in 0..n {
            transitions[[k, start]] = NEG_INF_SENTINEL;
            transitions[[stop, k]] = NEG_INF_SENTINEL;
        }
        if transitions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transition matrix".into()));
        }
        Ok(Self { num_tags, transitions })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    /// Index of the synthetic START state.
    pub fn start(&self) -> usize {
        self.num_tags
    }

    /// Index of the synthetic STOP state.
    pub fn stop(&self) -> usize {
        self.num_tags + 1
    }

    pub fn transitions(&self) -> &Array2<f64> {
        &self.transitions
    }

    /// True for the cells pinned to the sentinel.
    pub fn is_blocked(&self, from: usize, to: usize) -> bool {
        to == self.start() || from == self.stop()
    }

    pub(crate) fn transitions_slice_mut(&mut self) -> &mut [f64] {
        self.transitions.as_slice_mut().expect("transition matrix is contiguous")
    }

    fn check_emissions(&self, emissions: &EmissionMatrix) -> Result<()> {
        if emissions.num_tags() != self.num_tags {
            return Err(Error::Dimension(format!(
                "emissions have {} tag columns, CRF has {} tags",
                emissions.num_tags(),
                self.num_tags
            )));
        }
        Ok(())
    }

    fn check_path(&self, emissions: &EmissionMatrix, path: &[usize]) -> Result<()> {
        self.check_emissions(emissions)?;
        if path.len() != emissions.len() {
            return Err(Error::Dimension(format!(
                "path has length {}, emissions have {} positions",
                path.len(),
                emissions.len()
            )));
        }
        if let Some(&bad) = path.iter().find(|&&y| y >= self.num_tags) {
            return Err(Error::Index(format!("tag {bad} with only {} tags", self.num_tags)));
        }
        Ok(())
    }

    /// Unnormalized log score of one tag path.
    pub fn score_path(&self, emissions: &EmissionMatrix, path: &[usize]) -> Result<f64> {
        self.check_path(emissions, path)?;
        let a = &self.transitions;
        let f = emissions.scores();
        let mut score = a[[self.start(), path[0]]];
        for (t, &y) in path.iter().enumerate() {
            score += f[[t, y]];
            let next = path.get(t + 1).copied().unwrap_or(self.stop());
            score += a[[y, next]];
        }
        Ok(score)
    }

    /// Forward table: `alpha[t, k]` is the log-sum of all prefixes ending in `k` at `t`.
    fn forward_table(&self, emissions: &EmissionMatrix) -> (Array2<f64>, f64) {
        let (len, k) = emissions.scores().dim();
        let a = &self.transitions;
        let f = emissions.scores();
        let mut alpha = Array2::zeros((len, k));
        for j in 0..k {
            alpha[[0, j]] = a[[self.start(), j]] + f[[0, j]];
        }
        let mut scratch = vec![0.0; k];
        for t in 1..len {
            for j in 0..k {
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[[t - 1, i]] + a[[i, j]];
                }
                alpha[[t, j]] = log_sum_exp(&scratch) + f[[t, j]];
            }
        }
        for (i, s) in scratch.iter_mut().enumerate() {
            *s = alpha[[len - 1, i]] + a[[i, self.stop()]];
        }
        let log_z = log_sum_exp(&scratch);
        (alpha, log_z)
    }

    /// Backward table: `beta[t, k]` is the log-sum of all suffixes after `t` given tag `k` at `t`,
    /// including the transition into STOP.
    fn backward_table(&self, emissions: &EmissionMatrix) -> Array2<f64> {
        let (len, k) = emissions.scores().dim();
        let a = &self.transitions;
        let f = emissions.scores();
        let mut beta = Array2::zeros((len, k));
        for i in 0..k {
            beta[[len - 1, i]] = a[[i, self.stop()]];
        }
        let mut scratch = vec![0.0; k];
        for t in (0..len - 1).rev() {
            for i in 0..k {
                for (j, s) in scratch.iter_mut().enumerate() {
                    *s = a[[i, j]] + f[[t + 1, j]] + beta[[t + 1, j]];
                }
                beta[[t, i]] = log_sum_exp(&scratch);
            }
        }
        beta
    }

    /// Log partition function over all `K^T` paths, by the forward algorithm.
    pub fn log_partition(&self, emissions: &EmissionMatrix) -> Result<f64> {
        self.check_emissions(emissions)?;
        Ok(self.forward_table(emissions).1)
    }

    /// Negative log-likelihood of `gold`. Never negative.
    pub fn nll_loss(&self, emissions: &EmissionMatrix, gold: &[usize]) -> Result<f64> {
        let gold_score = self.score_path(emissions, gold)?;
        let log_z = self.log_partition(emissions)?;
        // rounding can push a K = 1 loss a hair below zero
        Ok((log_z - gold_score).max(0.0))
    }

    /// Posterior unary and pairwise marginals via forward-backward.
    pub fn marginals(&self, emissions: &EmissionMatrix) -> Result<Marginals> {
        self.check_emissions(emissions)?;
        let (alpha, log_z) = self.forward_table(emissions);
        let beta = self.backward_table(emissions);
        Ok(self.marginals_from_tables(emissions, &alpha, &beta, log_z))
    }

    fn marginals_from_tables(
        &self,
        emissions: &EmissionMatrix,
        alpha: &Array2<f64>,
        beta: &Array2<f64>,
        log_z: f64,
    ) -> Marginals {
        let (len, k) = emissions.scores().dim();
        let a = &self.transitions;
        let f = emissions.scores();
        let unary = Array2::from_shape_fn((len, k), |(t, j)| (alpha[[t, j]] + beta[[t, j]] - log_z).exp());
        let pairwise = Array3::from_shape_fn((len - 1, k, k), |(t, i, j)| {
            (alpha[[t, i]] + a[[i, j]] + f[[t + 1, j]] + beta[[t + 1, j]] - log_z).exp()
        });
        Marginals { unary, pairwise }
    }

    /// Loss and its gradient in one pass.
    pub fn nll_loss_and_grad(&self, emissions: &EmissionMatrix, gold: &[usize]) -> Result<(f64, CrfGradients)> {
        let gold_score = self.score_path(emissions, gold)?;
        let (alpha, log_z) = self.forward_table(emissions);
        let beta = self.backward_table(emissions);
        let Marginals { unary, pairwise } = self.marginals_from_tables(emissions, &alpha, &beta, log_z);

        let (len, k) = unary.dim();
        let mut d_emissions = unary;
        for (t, &y) in gold.iter().enumerate() {
            d_emissions[[t, y]] -= 1.0;
        }

        // expected minus observed transition counts
        let mut d_transitions = Array2::zeros(self.transitions.dim());
        for j in 0..k {
            let p_first = d_emissions[[0, j]] + f64::from(gold[0] == j);
            let p_last = d_emissions[[len - 1, j]] + f64::from(gold[len - 1] == j);
            d_transitions[[self.start(), j]] += p_first;
            d_transitions[[j, self.stop()]] += p_last;
        }
        for t in 0..len - 1 {
            for i in 0..k {
                for j in 0..k {
                    d_transitions[[i, j]] += pairwise[[t, i, j]];
                }
            }
        }
        d_transitions[[self.start(), gold[0]]] -= 1.0;
        d_transitions[[gold[len - 1], self.stop()]] -= 1.0;
        for pair in gold.windows(2) {
            d_transitions[[pair[0], pair[1]]] -= 1.0;
        }

        let loss = (log_z - gold_score).max(0.0);
        Ok((loss, CrfGradients { d_transitions, d_emissions }))
    }

    /// Gradient of [`nll_loss`](Self::nll_loss) with respect to the transitions and emissions.
    pub fn nll_grad(&self, emissions: &EmissionMatrix, gold: &[usize]) -> Result<CrfGradients> {
        self.nll_loss_and_grad(emissions, gold).map(|(_, g)| g)
    }

    /// Highest-scoring path and its score.
    ///
    /// Ties go to the lowest tag index, applied from the last position
    /// backwards: the final tag is the lowest among the best, and each
    /// backpointer picks the lowest predecessor among the best.
    pub fn viterbi_decode(&self, emissions: &EmissionMatrix) -> Result<(Vec<usize>, f64)> {
        self.check_emissions(emissions)?;
        let (len, k) = emissions.scores().dim();
        let a = &self.transitions;
        let f = emissions.scores();

        let mut best = Array1::from_shape_fn(k, |j| a[[self.start(), j]] + f[[0, j]]);
        let mut next = Array1::zeros(k);
        let mut backpointers = Array2::<usize>::zeros((len, k));
        for t in 1..len {
            for j in 0..k {
                let (arg, score) = argmax_lowest((0..k).map(|i| best[i] + a[[i, j]]));
                backpointers[[t, j]] = arg;
                next[j] = score + f[[t, j]];
            }
            std::mem::swap(&mut best, &mut next);
        }
        let (last, score) = argmax_lowest((0..k).map(|j| best[j] + a[[j, self.stop()]]));

        let mut path = vec![0; len];
        path[len - 1] = last;
        for t in (1..len).rev() {
            path[t - 1] = backpointers[[t, path[t]]];
        }
        Ok((path, score))
    }
}

/// Per-sentence `T x K` emission scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix(Array2<f64>);

impl EmissionMatrix {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() == 0 {
            return Err(Error::EmptySentence);
        }
        if scores.ncols() == 0 {
            return Err(Error::Dimension("emissions have no tag columns".into()));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("emission matrix".into()));
        }
        Ok(Self(scores))
    }

    /// Sentence length `T`.
    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.0.ncols()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.0.row(t)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

impl TryFrom<Array2<f64>> for EmissionMatrix {
    type Error = Error;

    fn try_from(scores: Array2<f64>) -> Result<Self> {
        Self::new(scores)
    }
}

/// Posterior marginals of a CRF.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `[t, k]`: probability that position `t` carries tag `k`.
    pub unary: Array2<f64>,
    /// `[t, i, j]`: probability of tags `i` at `t` and `j` at `t + 1`.
    pub pairwise: Array3<f64>,
}

/// Gradient of the negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradients {
    pub d_transitions: Array2<f64>,
    pub d_emissions: Array2<f64>,
}

/// Stable `log(sum(exp(x)))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
