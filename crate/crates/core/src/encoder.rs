//! Emission encoder: embedding lookup, a single unidirectional LSTM layer and a
//! linear projection onto tag scores, with hand-written backpropagation
//! through time.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output:
//! rows `0..H` of the LSTM weights and bias belong to the input gate,
//! `H..2H` to the forget gate, and so on.
//!
//! ```text
//! z_t = W_x x_t + W_h h_{t-1} + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! e_t = W_out h_t + b_out
//! ```

use std::collections::BTreeMap;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crf::EmissionMatrix;
use crate::error::{Error, Result};

/// Number of gate blocks in the stacked LSTM weights.
pub const NUM_GATES: usize = 4;

/// Encoder weights. Also used, zero-initialized, as a dense gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `V x D`. Has zero rows when inputs come from precomputed vectors.
    pub embedding: Array2<f64>,
    /// `4H x D`
    pub lstm_input_weights: Array2<f64>,
    /// `4H x H`
    pub lstm_hidden_weights: Array2<f64>,
    /// `4H`
    pub lstm_bias: Array1<f64>,
    /// `K x H`
    pub out_weights: Array2<f64>,
    /// `K`
    pub out_bias: Array1<f64>,
}

impl EncoderParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(vocab_size: usize, input_dim: usize, hidden_dim: usize, num_tags: usize) -> Self {
        let gates = NUM_GATES * hidden_dim;
        Self {
            embedding: Array2::zeros((vocab_size, input_dim)),
            lstm_input_weights: Array2::zeros((gates, input_dim)),
            lstm_hidden_weights: Array2::zeros((gates, hidden_dim)),
            lstm_bias: Array1::zeros(gates),
            out_weights: Array2::zeros((num_tags, hidden_dim)),
            out_bias: Array1::zeros(num_tags),
        }
    }

    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn init(vocab_size: usize, emb_dim: usize, hidden_dim: usize, num_tags: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        Self::init_with_vocab(vocab_size, emb_dim, hidden_dim, num_tags, seed)
    }

    /// Like [`init`](Self::init) for a model fed precomputed `input_dim`-sized
    /// vectors; the embedding table is empty.
    pub fn init_external(input_dim: usize, hidden_dim: usize, num_tags: usize, seed: u64) -> Result<Self> {
        Self::init_with_vocab(0, input_dim, hidden_dim, num_tags, seed)
    }

    fn init_with_vocab(
        vocab_size: usize,
        input_dim: usize,
        hidden_dim: usize,
        num_tags: usize,
        seed: u64,
    ) -> Result<Self> {
        for (name, dim) in
            [("embedding dimension", input_dim), ("hidden dimension", hidden_dim), ("number of tags", num_tags)]
        {
            if dim == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(vocab_size, input_dim, hidden_dim, num_tags);
        glorot_uniform(&mut params.embedding, &mut rng);
        glorot_uniform(&mut params.lstm_input_weights, &mut rng);
        glorot_uniform(&mut params.lstm_hidden_weights, &mut rng);
        glorot_uniform(&mut params.out_weights, &mut rng);
        params.lstm_bias.slice_mut(s![hidden_dim..2 * hidden_dim]).fill(1.0);
        Ok(params)
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    /// Width `D` of the LSTM input.
    pub fn input_dim(&self) -> usize {
        self.lstm_input_weights.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm_hidden_weights.ncols()
    }

    pub fn num_tags(&self) -> usize {
        self.out_weights.nrows()
    }

    /// Checks that all tensor shapes agree with each other.
    pub fn validate(&self) -> Result<()> {
        let (d, h, k) = (self.input_dim(), self.hidden_dim(), self.num_tags());
        let expect = [
            ("embedding", self.embedding.dim(), (self.vocab_size(), d)),
            ("lstm_input_weights", self.lstm_input_weights.dim(), (4 * h, d)),
            ("lstm_hidden_weights", self.lstm_hidden_weights.dim(), (4 * h, h)),
            ("lstm_bias", (self.lstm_bias.len(), 1), (4 * h, 1)),
            ("out_weights", self.out_weights.dim(), (k, h)),
            ("out_bias", (self.out_bias.len(), 1), (k, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Dimension(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        if d == 0 || h == 0 || k == 0 {
            return Err(Error::Dimension("encoder has an empty dimension".into()));
        }
        Ok(())
    }

    /// Named tensors as flat row-major slices, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("embedding", contiguous(&self.embedding)),
            ("lstm_input_weights", contiguous(&self.lstm_input_weights)),
            ("lstm_hidden_weights", contiguous(&self.lstm_hidden_weights)),
            ("lstm_bias", self.lstm_bias.as_slice().expect("contiguous")),
            ("out_weights", contiguous(&self.out_weights)),
            ("out_bias", self.out_bias.as_slice().expect("contiguous")),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.embedding.as_slice_mut().expect("contiguous"),
            self.lstm_input_weights.as_slice_mut().expect("contiguous"),
            self.lstm_hidden_weights.as_slice_mut().expect("contiguous"),
            self.lstm_bias.as_slice_mut().expect("contiguous"),
            self.out_weights.as_slice_mut().expect("contiguous"),
            self.out_bias.as_slice_mut().expect("contiguous"),
        ]
    }

    /// Runs the encoder over one sentence.
    pub fn forward(&self, input: TokenInput<'_>) -> Result<(EmissionMatrix, EncoderTape)> {
        let d = self.input_dim();
        let (inputs, token_ids) = match input {
            TokenInput::Ids(ids) => {
                if ids.is_empty() {
                    return Err(Error::EmptySentence);
                }
                if let Some(&bad) = ids.iter().find(|&&id| id >= self.vocab_size()) {
                    return Err(Error::Index(format!("token id {bad} with vocabulary size {}", self.vocab_size())));
                }
                (self.embedding.select(Axis(0), ids), Some(ids.to_vec()))
            }
            TokenInput::Vectors(vectors) => {
                if vectors.nrows() == 0 {
                    return Err(Error::EmptySentence);
                }
                if vectors.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "input vectors have dimension {}, encoder expects {d}",
                        vectors.ncols()
                    )));
                }
                (vectors.to_owned(), None)
            }
        };

        let h = self.hidden_dim();
        let len = inputs.nrows();
        let mut gates = inputs.dot(&self.lstm_input_weights.t()) + &self.lstm_bias;
        let mut cells = Array2::zeros((len, h));
        let mut cell_tanh = Array2::zeros((len, h));
        let mut hidden = Array2::<f64>::zeros((len, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..len {
            let mut z = gates.row_mut(t);
            general_mat_vec_mul(1.0, &self.lstm_hidden_weights, &h_prev, 1.0, &mut z);
            for j in 0..h {
                let i_gate = sigmoid(z[j]);
                let f_gate = sigmoid(z[h + j]);
                let g_gate = z[2 * h + j].tanh();
                let o_gate = sigmoid(z[3 * h + j]);
                z[j] = i_gate;
                z[h + j] = f_gate;
                z[2 * h + j] = g_gate;
                z[3 * h + j] = o_gate;
                let c = f_gate * c_prev[j] + i_gate * g_gate;
                let tc = c.tanh();
                cells[[t, j]] = c;
                cell_tanh[[t, j]] = tc;
                hidden[[t, j]] = o_gate * tc;
            }
            h_prev.assign(&hidden.row(t));
            c_prev.assign(&cells.row(t));
        }
        let emissions = hidden.dot(&self.out_weights.t()) + &self.out_bias;
        let tape = EncoderTape { token_ids, inputs, gates, cells, cell_tanh, hidden };
        Ok((EmissionMatrix::new(emissions)?, tape))
    }

    /// Reverse-mode gradient of `sum(d_emissions * emissions)` for the forward
    /// pass recorded in `tape`.
    pub fn backward(&self, tape: &EncoderTape, d_emissions: &Array2<f64>) -> Result<EncoderGradients> {
        let (d, h, k) = (self.input_dim(), self.hidden_dim(), self.num_tags());
        let len = tape.len();
        if tape.inputs.ncols() != d || tape.hidden.ncols() != h || tape.gates.ncols() != 4 * h {
            return Err(Error::Dimension("tape was recorded with different encoder dimensions".into()));
        }
        if d_emissions.dim() != (len, k) {
            return Err(Error::Dimension(format!(
                "emission cotangent has shape {:?}, expected ({len}, {k})",
                d_emissions.dim()
            )));
        }
        if let Some(ids) = &tape.token_ids {
            if ids.iter().any(|&id| id >= self.vocab_size()) {
                return Err(Error::Dimension("tape token ids exceed the vocabulary".into()));
            }
        }

        let out_weights = d_emissions.t().dot(&tape.hidden);
        let out_bias = d_emissions.sum_axis(Axis(0));
        let d_hidden = d_emissions.dot(&self.out_weights);

        let mut d_gates = Array2::<f64>::zeros((len, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..len).rev() {
            let gate = tape.gates.row(t);
            let mut dz = d_gates.row_mut(t);
            for j in 0..h {
                let (i_gate, f_gate, g_gate, o_gate) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
                let tc = tape.cell_tanh[[t, j]];
                let c_prev = if t > 0 { tape.cells[[t - 1, j]] } else { 0.0 };
                let dh = d_hidden[[t, j]] + dh_next[j];
                let dc = dh * o_gate * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g_gate * i_gate * (1.0 - i_gate);
                dz[h + j] = dc * c_prev * f_gate * (1.0 - f_gate);
                dz[2 * h + j] = dc * i_gate * (1.0 - g_gate * g_gate);
                dz[3 * h + j] = dh * tc * o_gate * (1.0 - o_gate);
                dc_next[j] = dc * f_gate;
            }
            // dh_{t-1} = W_h^T dz, accumulated row by row to stay contiguous
            dh_next.fill(0.0);
            for (r, w_row) in self.lstm_hidden_weights.rows().into_iter().enumerate() {
                dh_next.scaled_add(dz[r], &w_row);
            }
        }

        // h_{t-1} for every t, with h_{-1} = 0
        let mut prev_hidden = Array2::zeros((len, h));
        if len > 1 {
            prev_hidden.slice_mut(s![1.., ..]).assign(&tape.hidden.slice(s![..len - 1, ..]));
        }
        let lstm_hidden_weights = d_gates.t().dot(&prev_hidden);
        let lstm_input_weights = d_gates.t().dot(&tape.inputs);
        let lstm_bias = d_gates.sum_axis(Axis(0));
        let d_inputs = d_gates.dot(&self.lstm_input_weights);

        let embedding = match &tape.token_ids {
            Some(ids) => SparseRows::accumulate(ids, d_inputs.view()),
            None => SparseRows::empty(d),
        };

        Ok(EncoderGradients {
            embedding,
            lstm_input_weights,
            lstm_hidden_weights,
            lstm_bias,
            out_weights,
            out_bias,
            d_inputs,
        })
    }
}

/// One sentence as the encoder sees it.
#[derive(Debug, Clone, Copy)]
pub enum TokenInput<'a> {
    /// Vocabulary ids looked up in the embedding table.
    Ids(&'a [usize]),
    /// Precomputed `T x D` per-token vectors (contextual embeddings).
    Vectors(ArrayView2<'a, f64>),
}

impl TokenInput<'_> {
    pub fn len(&self) -> usize {
        match self {
            TokenInput::Ids(ids) => ids.len(),
            TokenInput::Vectors(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activations cached by [`EncoderParams::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTape {
    token_ids: Option<Vec<usize>>,
    inputs: Array2<f64>,
    /// post-activation gate values, `T x 4H`
    gates: Array2<f64>,
    cells: Array2<f64>,
    cell_tanh: Array2<f64>,
    hidden: Array2<f64>,
}

impl EncoderTape {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// The `T x D` LSTM inputs (looked-up embeddings in id mode).
    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    /// Hidden states `h_1..h_T`, `T x H`.
    pub fn hidden(&self) -> &Array2<f64> {
        &self.hidden
    }

    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }
}

/// Embedding-table gradient restricted to the rows a sentence touched.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    /// Sorted, distinct row ids.
    pub ids: Vec<usize>,
    /// One row per id.
    pub rows: Array2<f64>,
}

impl SparseRows {
    fn empty(width: usize) -> Self {
        Self { ids: Vec::new(), rows: Array2::zeros((0, width)) }
    }

    fn accumulate(ids: &[usize], per_position: ArrayView2<'_, f64>) -> Self {
        let mut slot = BTreeMap::new();
        for &id in ids {
            let next = slot.len();
            slot.entry(id).or_insert(next);
        }
        let mut rows = Array2::zeros((slot.len(), per_position.ncols()));
        let order: Vec<usize> = slot.keys().copied().collect();
        let position: BTreeMap<usize, usize> = order.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        for (t, &id) in ids.iter().enumerate() {
            let mut row = rows.row_mut(position[&id]);
            row += &per_position.row(t);
        }
        Self { ids: order, rows }
    }

    /// Gradient row for `id`, if the sentence used it.
    pub fn row(&self, id: usize) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.ids.binary_search(&id).ok().map(|p| self.rows.row(p))
    }

    pub fn to_dense(&self, vocab_size: usize) -> Array2<f64> {
        let mut dense = Array2::zeros((vocab_size, self.rows.ncols()));
        for (p, &id) in self.ids.iter().enumerate() {
            dense.row_mut(id).assign(&self.rows.row(p));
        }
        dense
    }
}

/// Gradients for every encoder tensor, plus the input cotangent.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub embedding: SparseRows,
    pub lstm_input_weights: Array2<f64>,
    pub lstm_hidden_weights: Array2<f64>,
    pub lstm_bias: Array1<f64>,
    pub out_weights: Array2<f64>,
    pub out_bias: Array1<f64>,
    /// `T x D` gradient with respect to the LSTM inputs.
    pub d_inputs: Array2<f64>,
}

impl EncoderGradients {
    /// Adds `scale * self` into a dense buffer shaped like the parameters.
    pub fn add_scaled_to(&self, buffer: &mut EncoderParams, scale: f64) {
        for (p, &id) in self.embedding.ids.iter().enumerate() {
            buffer.embedding.row_mut(id).scaled_add(scale, &self.embedding.rows.row(p));
        }
        buffer.lstm_input_weights.scaled_add(scale, &self.lstm_input_weights);
        buffer.lstm_hidden_weights.scaled_add(scale, &self.lstm_hidden_weights);
        buffer.lstm_bias.scaled_add(scale, &self.lstm_bias);
        buffer.out_weights.scaled_add(scale, &self.out_weights);
        buffer.out_bias.scaled_add(scale, &self.out_bias);
    }

    /// The gradient as dense tensors shaped like `params`.
    pub fn to_dense(&self, params: &EncoderParams) -> EncoderParams {
        let mut dense =
            EncoderParams::zeros(params.vocab_size(), params.input_dim(), params.hidden_dim(), params.num_tags());
        self.add_scaled_to(&mut dense, 1.0);
        dense
    }
}

fn contiguous(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter tensors are row-major contiguous")
}

fn glorot_uniform(weights: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (fan_out, fan_in) = weights.dim();
    if fan_out + fan_in == 0 {
        return;
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    weights.mapv_inplace(|_| rng.random_range(-limit..limit));
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_for_smallest_grid_row() {
        let p = EncoderParams::init(100, 50, 8, 73, 1).unwrap();
        assert_eq!(p.embedding.dim(), (100, 50));
        assert_eq!(p.lstm_input_weights.dim(), (32, 50));
        assert_eq!(p.lstm_hidden_weights.dim(), (32, 8));
        assert_eq!(p.lstm_bias.len(), 32);
        assert_eq!(p.out_weights.dim(), (73, 8));
        assert_eq!(p.out_bias.len(), 73);
        p.validate().unwrap();
    }

    #[test]
    fn init_biases() {
        let p = EncoderParams::init(10, 4, 3, 2, 9).unwrap();
        assert_eq!(p.lstm_bias.to_vec(), vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
        assert!(p.out_bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let a = EncoderParams::init(30, 5, 4, 3, 1).unwrap();
        let b = EncoderParams::init(30, 5, 4, 3, 1).unwrap();
        let c = EncoderParams::init(30, 5, 4, 3, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_glorot_limit() {
        let p = EncoderParams::init(10, 6, 5, 3, 4).unwrap();
        let limit = (6.0f64 / (6.0 + 20.0)).sqrt();
        assert!(p.lstm_input_weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(EncoderParams::init(0, 5, 4, 3, 1), Err(Error::Config(_))));
        assert!(matches!(EncoderParams::init(5, 0, 4, 3, 1), Err(Error::Config(_))));
        assert!(matches!(EncoderParams::init(5, 5, 0, 3, 1), Err(Error::Config(_))));
        assert!(matches!(EncoderParams::init(5, 5, 4, 0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_zero_emissions() {
        let p = EncoderParams::zeros(5, 3, 4, 2);
        let (e, tape) = p.forward(TokenInput::Ids(&[1, 4, 0])).unwrap();
        assert!(e.scores().iter().all(|&v| v == 0.0));
        assert!(tape.hidden().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emission_shape() {
        let p = EncoderParams::init(50, 100, 20, 73, 3).unwrap();
        let (e, _) = p.forward(TokenInput::Ids(&[1, 2, 3, 4, 5, 6, 7])).unwrap();
        assert_eq!(e.scores().dim(), (7, 73));
    }

    #[test]
    fn forward_errors() {
        let p = EncoderParams::init(5, 3, 2, 2, 1).unwrap();
        assert!(matches!(p.forward(TokenInput::Ids(&[5])), Err(Error::Index(_))));
        assert!(matches!(p.forward(TokenInput::Ids(&[])), Err(Error::EmptySentence)));
        let v = Array2::zeros((2, 4));
        assert!(matches!(p.forward(TokenInput::Vectors(v.view())), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let p = EncoderParams::init(6, 3, 2, 2, 1).unwrap();
        let (_, tape) = p.forward(TokenInput::Ids(&[1, 2, 1])).unwrap();
        let g = p.backward(&tape, &Array2::zeros((3, 2))).unwrap();
        let dense = g.to_dense(&p);
        for (_, t) in dense.tensors() {
            assert!(t.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn repeated_token_gradient_is_summed() {
        let p = EncoderParams::init(6, 3, 2, 2, 5).unwrap();
        let (_, tape) = p.forward(TokenInput::Ids(&[4, 2, 4])).unwrap();
        let g = p.backward(&tape, &array![[1.0, -0.5], [0.2, 0.3], [-0.7, 0.9]]).unwrap();
        assert_eq!(g.embedding.ids, vec![2, 4]);
        let expect = &g.d_inputs.row(0) + &g.d_inputs.row(2);
        assert_eq!(g.embedding.row(4).unwrap(), expect);
        assert_eq!(g.embedding.row(2).unwrap(), g.d_inputs.row(1));
        assert!(g.embedding.row(0).is_none());
    }

    #[test]
    fn backward_rejects_mismatched_tape() {
        let small = EncoderParams::init(6, 3, 2, 2, 5).unwrap();
        let big = EncoderParams::init(6, 3, 4, 2, 5).unwrap();
        let (_, tape) = small.forward(TokenInput::Ids(&[1, 2])).unwrap();
        assert!(matches!(big.backward(&tape, &Array2::zeros((2, 2))), Err(Error::Dimension(_))));
        assert!(matches!(small.backward(&tape, &Array2::zeros((3, 2))), Err(Error::Dimension(_))));
    }

    #[test]
    fn tape_replays_bit_for_bit() {
        let p = EncoderParams::init(9, 4, 3, 5, 11).unwrap();
        let (e, tape) = p.forward(TokenInput::Ids(&[3, 8, 0, 3])).unwrap();
        let (replayed, _) = p.forward(TokenInput::Vectors(tape.inputs().view())).unwrap();
        assert_eq!(e, replayed);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
