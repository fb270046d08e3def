//! Bidirectional LSTM over time-major batches.
//!
//! Gate columns are packed `[input | forget | cell | output]`, each `hidden`
//! wide. Padded steps (mask `false`) carry the previous state through
//! unchanged, so right-padded sequences in a batch produce exactly the same
//! states as when run alone, in both directions.

use rand::Rng;

use super::init_uniform;
use crate::error::{Error, Result};
use crate::numerics::{scoped, Graph, Parameters, Tensor, Var};

/// Parameters of one recurrence direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    /// `input × 4·hidden`
    pub w_input: Tensor,
    /// `hidden × 4·hidden`
    pub w_hidden: Tensor,
    /// `4·hidden`
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmDirectionVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

impl LstmDirection {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let gates = 4 * hidden;
        let mut bias = vec![0.0; gates];
        bias[hidden..2 * hidden].fill(1.0);
        Self {
            w_input: Tensor::param(vec![input, gates], init_uniform(rng, input * gates, bound)).expect("shape matches"),
            w_hidden: Tensor::param(vec![hidden, gates], init_uniform(rng, hidden * gates, bound))
                .expect("shape matches"),
            bias: Tensor::param(vec![gates], bias).expect("shape matches"),
        }
    }

    pub fn from_parts(w_input: Tensor, w_hidden: Tensor, bias: Tensor) -> Result<Self> {
        let ok = match (w_input.shape(), w_hidden.shape(), bias.shape()) {
            ([_, g1], [h, g2], [g3]) => g1 == g2 && g2 == g3 && *g1 == 4 * h,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "lstm parameters {:?} / {:?} / {:?} do not agree",
                w_input.shape(),
                w_hidden.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            w_input,
            w_hidden,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> LstmDirectionVars {
        LstmDirectionVars {
            w_input: g.param(&self.w_input),
            w_hidden: g.param(&self.w_hidden),
            bias: g.param(&self.bias),
        }
    }

    /// Runs the recurrence over `steps` time steps of a `(steps·batch) × input`
    /// tensor, visiting them in `order`. Returns one `batch × hidden` state per
    /// time step, indexed by time (not by visit order).
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        g: &mut Graph<'_>,
        vars: &LstmDirectionVars,
        projected: Var,
        batch: usize,
        mask: &[bool],
        order: impl Iterator<Item = usize>,
        steps: usize,
    ) -> Result<Vec<Var>> {
        let hidden = self.hidden_dim();
        let mut h = g.zeros(vec![batch, hidden]);
        let mut c = g.zeros(vec![batch, hidden]);
        let mut outputs = vec![None; steps];
        for t in order {
            let x_t = g.rows(projected, t * batch, batch)?;
            let rec = g.matmul(h, vars.w_hidden)?;
            let gates = g.add(x_t, rec)?;
            let i = g.narrow_cols(gates, 0, hidden)?;
            let i = g.sigmoid(i);
            let f = g.narrow_cols(gates, hidden, hidden)?;
            let f = g.sigmoid(f);
            let cand = g.narrow_cols(gates, 2 * hidden, hidden)?;
            let cand = g.tanh(cand);
            let o = g.narrow_cols(gates, 3 * hidden, hidden)?;
            let o = g.sigmoid(o);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            let c_new = g.add(keep, write)?;
            let c_act = g.tanh(c_new);
            let h_new = g.mul(o, c_act)?;
            let step_mask = &mask[t * batch..(t + 1) * batch];
            if step_mask.iter().all(|&m| m) {
                c = c_new;
                h = h_new;
            } else {
                c = g.select(step_mask, c_new, c)?;
                h = g.select(step_mask, h_new, h)?;
            }
            outputs[t] = Some(h);
        }
        Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
    }
}

impl LstmDirectionVars {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.w_input, self.w_hidden, self.bias]
    }
}

impl Parameters for LstmDirection {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_hidden".into(), &self.w_hidden),
            ("bias".into(), &self.bias),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_input".into(), &mut self.w_input),
            ("w_hidden".into(), &mut self.w_hidden),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// Forward and backward LSTMs whose per-step outputs are concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmVars {
    pub forward: LstmDirectionVars,
    pub backward: LstmDirectionVars,
}

impl BiLstmVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.forward.vars();
        v.extend(self.backward.vars());
        v
    }
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let forward = LstmDirection::new(input, hidden, rng);
        let backward = LstmDirection::new(input, hidden, rng);
        Self { forward, backward }
    }

    pub fn from_directions(forward: LstmDirection, backward: LstmDirection) -> Result<Self> {
        if forward.input_dim() != backward.input_dim() || forward.hidden_dim() != backward.hidden_dim() {
            return Err(Error::Shape("lstm directions disagree on dimensions".into()));
        }
        Ok(Self { forward, backward })
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    /// Width of each output row: forward and backward halves.
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> BiLstmVars {
        BiLstmVars {
            forward: self.forward.bind(g),
            backward: self.backward.bind(g),
        }
    }

    /// `inputs` is time-major `(steps·batch) × input`; returns
    /// `(steps·batch) × 2·hidden` with the forward half first.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        vars: &BiLstmVars,
        inputs: Var,
        batch: usize,
        mask: &[bool],
    ) -> Result<Var> {
        let rows = g.shape(inputs).first().copied().unwrap_or(0);
        if rows == 0 || batch == 0 {
            return Err(Error::EmptySequence);
        }
        if rows % batch != 0 || mask.len() != rows {
            return Err(Error::Shape(format!(
                "bilstm: {rows} rows for batch {batch} with mask {}",
                mask.len()
            )));
        }
        let width = g.shape(inputs)[1];
        if width != self.input_dim() {
            return Err(Error::Shape(format!(
                "bilstm expects input width {}, got {width}",
                self.input_dim()
            )));
        }
        let steps = rows / batch;

        let fwd_proj = g.matmul(inputs, vars.forward.w_input)?;
        let fwd_proj = g.add_bias(fwd_proj, vars.forward.bias)?;
        let bwd_proj = g.matmul(inputs, vars.backward.w_input)?;
        let bwd_proj = g.add_bias(bwd_proj, vars.backward.bias)?;

        let fwd = self
            .forward
            .run(g, &vars.forward, fwd_proj, batch, mask, 0..steps, steps)?;
        let bwd = self
            .backward
            .run(g, &vars.backward, bwd_proj, batch, mask, (0..steps).rev(), steps)?;

        let fwd_all = g.concat_rows(&fwd)?;
        let bwd_all = g.concat_rows(&bwd)?;
        g.concat_cols(&[fwd_all, bwd_all])
    }
}

impl Parameters for BiLstm {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut p = scoped("forward", self.forward.named_params());
        p.extend(scoped("backward", self.backward.named_params()));
        p
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = scoped("forward", self.forward.named_params_mut());
        p.extend(scoped("backward", self.backward.named_params_mut()));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_single(lstm: &BiLstm, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let input = Tensor::from_rows(x).unwrap();
        let mut g = Graph::new();
        let vars = lstm.bind(&mut g);
        let xv = g.constant(input);
        let out = lstm.forward(&mut g, &vars, xv, 1, &vec![true; x.len()]).unwrap();
        g.value(out).chunks(lstm.output_dim()).map(<[f64]>::to_vec).collect()
    }

    /// Plain-loop LSTM cell, written independently of the graph code.
    fn oracle_direction(dir: &LstmDirection, x: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
        let n_in = dir.input_dim();
        let h_dim = dir.hidden_dim();
        let g_dim = 4 * h_dim;
        let wi = dir.w_input.data();
        let wh = dir.w_hidden.data();
        let b = dir.bias.data();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut out = vec![vec![]; x.len()];
        let order: Vec<usize> = if reverse {
            (0..x.len()).rev().collect()
        } else {
            (0..x.len()).collect()
        };
        for t in order {
            let mut pre = vec![0.0; g_dim];
            for j in 0..g_dim {
                let mut acc = b[j];
                for k in 0..n_in {
                    acc += x[t][k] * wi[k * g_dim + j];
                }
                for k in 0..h_dim {
                    acc += h[k] * wh[k * g_dim + j];
                }
                pre[j] = acc;
            }
            for u in 0..h_dim {
                let i = sig(pre[u]);
                let f = sig(pre[h_dim + u]);
                let cand = pre[2 * h_dim + u].tanh();
                let o = sig(pre[3 * h_dim + u]);
                c[u] = f * c[u] + i * cand;
                h[u] = o * c[u].tanh();
            }
            out[t] = h.clone();
        }
        out
    }

    fn random_seq(rng: &mut ChaCha8Rng, steps: usize, width: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_weights_and_inputs_give_zero_outputs() {
        let z = |r, c| Tensor::param(vec![r, c], vec![0.0; r * c]).unwrap();
        let dir = LstmDirection::from_parts(z(3, 8), z(2, 8), Tensor::param(vec![8], vec![0.0; 8]).unwrap()).unwrap();
        let lstm = BiLstm::from_directions(dir.clone(), dir).unwrap();
        let out = run_single(&lstm, &vec![vec![0.0; 3]; 4]);
        assert!(out.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_halves_agree_for_mirrored_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dir = LstmDirection::new(3, 4, &mut rng);
        let lstm = BiLstm::from_directions(dir.clone(), dir).unwrap();
        let out = run_single(&lstm, &random_seq(&mut rng, 1, 3));
        assert_eq!(out[0][..4], out[0][4..]);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lstm = BiLstm::new(3, 4, &mut rng);
        let x = random_seq(&mut rng, 3, 3);
        let got = run_single(&lstm, &x);
        let fwd = oracle_direction(&lstm.forward, &x, false);
        let bwd = oracle_direction(&lstm.backward, &x, true);
        for t in 0..3 {
            let expect: Vec<f64> = fwd[t].iter().chain(&bwd[t]).copied().collect();
            for (a, b) in got[t].iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "step {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reversal_swaps_direction_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lstm = BiLstm::new(2, 3, &mut rng);
        let swapped = BiLstm::from_directions(lstm.backward.clone(), lstm.forward.clone()).unwrap();
        let x = random_seq(&mut rng, 5, 2);
        let mut rev = x.clone();
        rev.reverse();
        let orig = run_single(&lstm, &x);
        let flipped = run_single(&swapped, &rev);
        for t in 0..5 {
            // forward half on reversed input == backward half of original, reversed in time
            assert_eq!(flipped[t][..3], orig[4 - t][3..]);
            assert_eq!(flipped[t][3..], orig[4 - t][..3]);
        }
    }

    #[test]
    fn padded_batch_matches_individual_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lstm = BiLstm::new(2, 3, &mut rng);
        let a = random_seq(&mut rng, 4, 2);
        let b = random_seq(&mut rng, 2, 2);
        // time-major, b right-padded with zeros
        let mut rows = Vec::new();
        let mut mask = Vec::new();
        for t in 0..4 {
            rows.push(a[t].clone());
            mask.push(true);
            rows.push(if t < 2 { b[t].clone() } else { vec![0.0; 2] });
            mask.push(t < 2);
        }
        let mut g = Graph::new();
        let vars = lstm.bind(&mut g);
        let xv = g.constant(Tensor::from_rows(&rows).unwrap());
        let out = lstm.forward(&mut g, &vars, xv, 2, &mask).unwrap();
        let out: Vec<Vec<f64>> = g.value(out).chunks(6).map(<[f64]>::to_vec).collect();
        let solo_a = run_single(&lstm, &a);
        let solo_b = run_single(&lstm, &b);
        for t in 0..4 {
            assert_eq!(out[2 * t], solo_a[t]);
        }
        for t in 0..2 {
            for (x, y) in out[2 * t + 1].iter().zip(&solo_b[t]) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = BiLstm::new(2, 2, &mut rng);
        let mut g = Graph::new();
        let vars = lstm.bind(&mut g);
        let xv = g.constant(Tensor::new(vec![0, 2], vec![]).unwrap());
        assert!(matches!(
            lstm.forward(&mut g, &vars, xv, 1, &[]),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = LstmDirection::new(2, 3, &mut rng);
        assert_eq!(&d.bias.data()[3..6], &[1.0; 3]);
        assert!(d.bias.data()[..3].iter().chain(&d.bias.data()[6..]).all(|v| *v == 0.0));
    }
}
