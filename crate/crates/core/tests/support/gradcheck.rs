//! Central finite-difference checks for every graph op, every layer and
//! both model architectures.

use essaycbm::data::{generate_synthetic, ConceptVector, TokenSequence, Vocab};
use essaycbm::model::{BaselineModel, EssayCbmModel, GradingModel, ModelDims};
use essaycbm::nn::{BiLstm, Embedding, Linear, LstmDirection, Mlp};
use essaycbm::numerics::{Graph, Parameters, Tensor, Var};
use essaycbm::train::joint_loss_graph;
use essaycbm::Result;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that coordinates with (near) zero gradient are
/// judged on absolute error.
pub const FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

/// Loose leaf tensors, for op-level checks.
#[derive(Clone)]
pub struct Leaves(pub Vec<Tensor>);

impl Parameters for Leaves {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.0.iter().enumerate().map(|(i, t)| (format!("x{i}"), t)).collect()
    }
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.0
            .iter_mut()
            .enumerate()
            .map(|(i, t)| (format!("x{i}"), t))
            .collect()
    }
}

/// Compares the analytic gradient returned by `objective` with central
/// differences on up to `max_coords` sampled coordinates.
pub fn check<P, F>(name: &str, params: &P, max_coords: usize, seed: u64, objective: F) -> CheckResult
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let (_, analytic) = objective(params).expect("objective evaluates");
    let sizes: Vec<usize> = params.named_params().iter().map(|(_, t)| t.numel()).collect();
    assert_eq!(analytic.len(), sizes.len(), "{name}: one gradient per parameter");
    let coords: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(p, &n)| (0..n).map(move |i| (p, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(usize, usize)> = if coords.len() <= max_coords {
        coords
    } else {
        sample(&mut rng, coords.len(), max_coords)
            .into_iter()
            .map(|i| coords[i])
            .collect()
    };

    let mut work = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut worst = String::new();
    for &(p, i) in &picked {
        let original = work.named_params()[p].1.data()[i];
        let eval = |x: f64, work: &mut P| {
            work.named_params_mut()[p].1.data_mut()[i] = x;
            objective(work).expect("objective evaluates").0
        };
        let plus = eval(original + STEP, &mut work);
        let minus = eval(original - STEP, &mut work);
        work.named_params_mut()[p].1.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic[p][i];
        let rel = rel_error(a, numeric);
        if rel > max_rel || !rel.is_finite() {
            max_rel = rel;
            let pname = &params.named_params()[p].0;
            worst = format!("{pname}[{i}]: analytic {a:e}, numeric {numeric:e}");
        }
    }
    CheckResult {
        name: name.to_string(),
        coordinates: picked.len(),
        max_rel_error: max_rel,
        worst,
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::param(shape.to_vec(), data).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::param(shape.to_vec(), data).unwrap()
}

/// Projects `out` onto fixed random weights so every output element
/// contributes a distinct amount to the scalar.
fn project(g: &mut Graph<'_>, out: Var) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn grads_of(g: Graph<'_>, loss: Var, vars: &[Var], sizes: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    let value = g.value(loss)[0];
    let grads = g.backward(loss)?;
    Ok((
        value,
        vars.iter()
            .zip(sizes)
            .map(|(&v, &n)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]))
            .collect(),
    ))
}

fn op_check<F>(name: &str, leaves: Vec<Tensor>, build: F) -> CheckResult
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let leaves = Leaves(leaves);
    check(name, &leaves, 200, name.len() as u64, |l: &Leaves| {
        let mut g = Graph::new();
        let vars: Vec<Var> = l.0.iter().map(|t| g.param(t)).collect();
        let out = build(&mut g, &vars)?;
        let loss = if g.shape(out).iter().product::<usize>() == 1 {
            out
        } else {
            project(&mut g, out)?
        };
        let sizes: Vec<usize> = l.0.iter().map(Tensor::numel).collect();
        grads_of(g, loss, &vars, &sizes)
    })
}

pub fn op_checks() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = &mut rng;
    let mut out = Vec::new();
    out.push(op_check(
        "matmul",
        vec![uniform(r, &[3, 4], 1.0), uniform(r, &[4, 5], 1.0)],
        |g, v| g.matmul(v[0], v[1]),
    ));
    out.push(op_check(
        "add",
        vec![uniform(r, &[3, 4], 1.0), uniform(r, &[3, 4], 1.0)],
        |g, v| g.add(v[0], v[1]),
    ));
    out.push(op_check(
        "add_bias",
        vec![uniform(r, &[3, 4], 1.0), uniform(r, &[4], 1.0)],
        |g, v| g.add_bias(v[0], v[1]),
    ));
    out.push(op_check(
        "mul",
        vec![uniform(r, &[3, 4], 1.0), uniform(r, &[3, 4], 1.0)],
        |g, v| g.mul(v[0], v[1]),
    ));
    out.push(op_check("mul_self", vec![uniform(r, &[2, 5], 1.0)], |g, v| {
        g.mul(v[0], v[0])
    }));
    out.push(op_check("scale", vec![uniform(r, &[3, 4], 1.0)], |g, v| {
        Ok(g.scale(v[0], -1.7))
    }));
    out.push(op_check("sigmoid", vec![uniform(r, &[3, 4], 3.0)], |g, v| {
        Ok(g.sigmoid(v[0]))
    }));
    out.push(op_check(
        "tanh",
        vec![uniform(r, &[3, 4], 3.0)],
        |g, v| Ok(g.tanh(v[0])),
    ));
    out.push(op_check("relu", vec![away_from_zero(r, &[3, 4])], |g, v| {
        Ok(g.relu(v[0]))
    }));
    out.push(op_check("softmax", vec![uniform(r, &[4, 6], 3.0)], |g, v| {
        g.softmax(v[0])
    }));
    out.push(op_check("cross_entropy", vec![uniform(r, &[5, 6], 3.0)], |g, v| {
        g.cross_entropy(v[0], &[0, 5, 2, 2, 3])
    }));
    out.push(op_check("sum", vec![uniform(r, &[3, 4], 1.0)], |g, v| Ok(g.sum(v[0]))));
    out.push(op_check("narrow_cols", vec![uniform(r, &[3, 8], 1.0)], |g, v| {
        g.narrow_cols(v[0], 2, 3)
    }));
    out.push(op_check("rows", vec![uniform(r, &[6, 3], 1.0)], |g, v| {
        g.rows(v[0], 2, 3)
    }));
    out.push(op_check(
        "concat_cols",
        vec![uniform(r, &[3, 2], 1.0), uniform(r, &[3, 4], 1.0)],
        |g, v| g.concat_cols(&[v[0], v[1], v[0]]),
    ));
    out.push(op_check(
        "concat_rows",
        vec![uniform(r, &[2, 3], 1.0), uniform(r, &[4, 3], 1.0)],
        |g, v| g.concat_rows(&[v[1], v[0], v[1]]),
    ));
    out.push(op_check("gather", vec![uniform(r, &[5, 3], 1.0)], |g, v| {
        g.gather(v[0], &[4, 0, 4, 2, 4])
    }));
    out.push(op_check(
        "select",
        vec![uniform(r, &[4, 3], 1.0), uniform(r, &[4, 3], 1.0)],
        |g, v| g.select(&[true, false, false, true], v[0], v[1]),
    ));
    // 3 steps × batch 2, time-major; sequence 1 has a single valid step.
    out.push(op_check("masked_mean", vec![uniform(r, &[6, 4], 1.0)], |g, v| {
        g.masked_mean(v[0], &[true, true, true, false, true, false], 2)
    }));
    out.push(op_check(
        "composition",
        vec![
            uniform(r, &[3, 4], 1.0),
            uniform(r, &[4, 5], 1.0),
            uniform(r, &[5], 1.0),
        ],
        |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add_bias(h, v[2])?;
            let h = g.tanh(h);
            let h = g.sigmoid(h);
            g.cross_entropy(h, &[1, 4, 0])
        },
    ));
    out
}

pub fn layer_checks() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut out = Vec::new();

    let x = uniform(&mut rng, &[3, 4], 1.0);
    let linear = Linear::new(4, 5, &mut rng);
    out.push(check("linear", &linear, 200, 1, |l: &Linear| {
        let mut g = Graph::new();
        let vars = l.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = l.forward(&mut g, &vars, xv)?;
        let loss = project(&mut g, y)?;
        let (flat, sizes) = (vars.vars(), vec![20, 5]);
        grads_of(g, loss, &flat, &sizes)
    }));

    let mlp = Mlp::new(&[4, 6, 6, 3], &mut rng).unwrap();
    out.push(check("mlp", &mlp, 200, 2, |l: &Mlp| {
        let mut g = Graph::new();
        let bound = l.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = l.forward(&mut g, &bound, xv)?;
        let loss = g.cross_entropy(y, &[2, 0, 1])?;
        let flat: Vec<Var> = bound.iter().flat_map(|b| b.vars()).collect();
        let sizes: Vec<usize> = l.named_params().iter().map(|(_, t)| t.numel()).collect();
        grads_of(g, loss, &flat, &sizes)
    }));

    let table = Leaves(vec![Embedding::new(6, 3, &mut rng).table]);
    out.push(check("embedding", &table, 200, 3, |l: &Leaves| {
        let emb = Embedding::from_table(l.0[0].clone())?;
        let mut g = Graph::new();
        let t = g.param(&l.0[0]);
        let e = emb.forward(&mut g, t, &[1, 5, 1, 0, 3])?;
        let loss = project(&mut g, e)?;
        grads_of(g, loss, &[t], &[18])
    }));

    // 4 steps × batch 2; the second sequence is two steps long.
    let inputs = uniform(&mut rng, &[8, 3], 1.0);
    let mask = [true, true, true, true, true, false, true, false];
    let lstm = BiLstm::from_directions(LstmDirection::new(3, 4, &mut rng), LstmDirection::new(3, 4, &mut rng)).unwrap();
    out.push(check("bilstm", &lstm, 300, 4, |l: &BiLstm| {
        let mut g = Graph::new();
        let bound = l.bind(&mut g);
        let xv = g.constant(inputs.clone());
        let h = l.forward(&mut g, &bound, xv, 2, &mask)?;
        let pooled = g.masked_mean(h, &mask, 2)?;
        let loss = project(&mut g, pooled)?;
        let sizes: Vec<usize> = l.named_params().iter().map(|(_, t)| t.numel()).collect();
        grads_of(g, loss, &bound.vars(), &sizes)
    }));

    let leaves_in = Leaves(vec![inputs.clone()]);
    let lstm_fixed = lstm.clone();
    out.push(check("bilstm_inputs", &leaves_in, 200, 5, |l: &Leaves| {
        let mut g = Graph::new();
        let bound = lstm_fixed.bind(&mut g);
        let xv = g.param(&l.0[0]);
        let h = lstm_fixed.forward(&mut g, &bound, xv, 2, &mask)?;
        let loss = project(&mut g, h)?;
        grads_of(g, loss, &[xv], &[24])
    }));
    out
}

fn tiny_dims() -> ModelDims {
    ModelDims {
        embed_dim: 5,
        hidden_dim: 4,
        grade_hidden: vec![6, 6],
    }
}

fn model_objective<M: GradingModel>(
    m: &M,
    batch: &[&TokenSequence],
    concepts: &[ConceptVector],
    grades: &[u8],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars = m.bind(&mut g);
    let out = m.forward_train(&mut g, &vars, batch)?;
    let loss = joint_loss_graph(&mut g, &out.concept_logits, concepts, out.grade_logits, grades, 0.5)?;
    let sizes: Vec<usize> = m.named_params().iter().map(|(_, t)| t.numel()).collect();
    grads_of(g, loss.total, &M::flat_vars(&vars), &sizes)
}

pub fn model_checks() -> Vec<CheckResult> {
    let essays = generate_synthetic(12, 21);
    let vocab = Vocab::build(essays.iter().map(|e| e.text.as_str()), 1);
    let batch_essays = &essays[..3];
    // Ragged lengths so that masking is exercised.
    let seqs: Vec<TokenSequence> = batch_essays
        .iter()
        .zip([32usize, 9, 17])
        .map(|(e, n)| TokenSequence::new(vocab.tokenize(&e.text).ids[..n].to_vec()))
        .collect();
    let batch: Vec<&TokenSequence> = seqs.iter().collect();
    let concepts: Vec<ConceptVector> = batch_essays.iter().map(|e| e.concepts).collect();
    let grades: Vec<u8> = batch_essays.iter().map(|e| e.grade).collect();

    let cbm = EssayCbmModel::new(vocab.clone(), &tiny_dims(), 5).unwrap();
    let baseline = BaselineModel::new(vocab, &tiny_dims(), 6).unwrap();
    vec![
        check("cbm_joint_loss", &cbm, 500, 7, |m: &EssayCbmModel| {
            model_objective(m, &batch, &concepts, &grades)
        }),
        check("baseline_loss", &baseline, 400, 8, |m: &BaselineModel| {
            model_objective(m, &batch, &concepts, &grades)
        }),
    ]
}

pub fn full_suite() -> Vec<CheckResult> {
    let mut all = op_checks();
    all.extend(layer_checks());
    all.extend(model_checks());
    all
}
