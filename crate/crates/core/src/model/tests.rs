use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{generate_synthetic, TokenSequence, Vocab, CONCEPT_CLASSES, GRADE_CLASSES, NUM_CONCEPTS};
use crate::numerics::{Graph, Parameters, Tensor};

fn small_dims() -> ModelDims {
    ModelDims {
        embed_dim: 6,
        hidden_dim: 5,
        grade_hidden: vec![7, 4],
    }
}

fn fixture(seed: u64) -> (EssayCbmModel, Vec<TokenSequence>) {
    let essays = generate_synthetic(20, 3);
    let vocab = Vocab::build(essays.iter().map(|e| e.text.as_str()), 2);
    let seqs = essays.iter().map(|e| vocab.tokenize(&e.text)).collect();
    (EssayCbmModel::new(vocab, &small_dims(), seed).unwrap(), seqs)
}

fn random_sequences(vocab_size: usize, n: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..30);
            TokenSequence::new((0..len).map(|_| rng.random_range(1..vocab_size)).collect())
        })
        .collect()
}

#[test]
fn concept_logits_are_deterministic_with_fixed_shape() {
    let (m, seqs) = fixture(1);
    let a = m.forward_concept_logits(&seqs[0]).unwrap();
    let b = m.forward_concept_logits(&seqs[0]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), NUM_CONCEPTS);
    assert!(a.iter().all(|row| row.len() == CONCEPT_CLASSES));
}

#[test]
fn same_seed_gives_same_parameters() {
    let (a, _) = fixture(9);
    let (b, _) = fixture(9);
    let (c, _) = fixture(10);
    assert_eq!(a, b);
    assert_ne!(a.encoder, c.encoder);
}

#[test]
fn identical_heads_give_identical_logits() {
    let (mut m, seqs) = fixture(2);
    m.concept_heads[5] = m.concept_heads[2].clone();
    let logits = m.forward_concept_logits(&seqs[1]).unwrap();
    assert_eq!(logits[2], logits[5]);
    assert_ne!(logits[2], logits[3]);
}

fn pin_head(m: &mut EssayCbmModel, k: usize, bias: [f64; CONCEPT_CLASSES]) {
    let head = &mut m.concept_heads[k];
    head.weight.data_mut().fill(0.0);
    head.bias.data_mut().copy_from_slice(&bias);
}

#[test]
fn argmax_and_tie_rule() {
    let (mut m, seqs) = fixture(3);
    pin_head(&mut m, 0, [0.0, 0.0, 0.0, 0.0, 9.0]);
    pin_head(&mut m, 1, [0.0, 2.0, 0.0, 2.0, 0.0]);
    let p = m.predict_concepts(&seqs[0]).unwrap();
    assert_eq!(p.concepts.get(0), 4);
    assert_eq!(p.concepts.get(1), 1);
    for row in &p.probs {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn empty_sequence_is_degenerate() {
    let (m, _) = fixture(4);
    let empty = TokenSequence::new(vec![]);
    assert!(matches!(
        m.forward_concept_logits(&empty),
        Err(Error::DegenerateInput(_))
    ));
    let all_pad = TokenSequence::new(vec![0, 0]);
    assert!(matches!(m.predict(&all_pad), Err(Error::DegenerateInput(_))));
}

#[test]
fn soft_path_equals_hard_path_on_one_hot_rows() {
    let (mut m, seqs) = fixture(5);
    let target = [3u8, 0, 4, 1, 2, 2, 0, 4];
    for (k, &c) in target.iter().enumerate() {
        let mut bias = [0.0; CONCEPT_CLASSES];
        bias[c as usize] = 1000.0;
        pin_head(&mut m, k, bias);
    }
    let (concepts, grade) = m.forward_joint(&seqs[0]).unwrap();
    assert_eq!(concepts.len(), NUM_CONCEPTS);
    let hard = m.grade_from_concepts(&ConceptVector::new(target).unwrap());
    assert_eq!(grade, hard.logits);
    assert_eq!(grade.len(), GRADE_CLASSES);
}

#[test]
fn grade_loss_gradient_reaches_embedding_and_matches_finite_difference() {
    let (m, seqs) = fixture(6);
    let batch = [&seqs[0]];
    let grade_loss = |model: &EssayCbmModel| -> f64 {
        let mut g = Graph::new();
        let vars = model.bind(&mut g);
        let out = model.forward_train(&mut g, &vars, &batch).unwrap();
        let loss = g.cross_entropy(out.grade_logits, &[2]).unwrap();
        g.value(loss)[0]
    };

    let mut g = Graph::new();
    let vars = m.bind(&mut g);
    let out = m.forward_train(&mut g, &vars, &batch).unwrap();
    let loss = g.cross_entropy(out.grade_logits, &[2]).unwrap();
    let grads = g.backward(loss).unwrap();
    let table_grad = grads.get(vars.encoder.table).unwrap().to_vec();
    let (idx, &analytic) = table_grad
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert!(analytic != 0.0);

    let h = 1e-6;
    let mut plus = m.clone();
    plus.encoder.embedding.table.data_mut()[idx] += h;
    let mut minus = m.clone();
    minus.encoder.embedding.table.data_mut()[idx] -= h;
    let numeric = (grade_loss(&plus) - grade_loss(&minus)) / (2.0 * h);
    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
    assert!(rel < 1e-4, "analytic {analytic} numeric {numeric}");
}

#[test]
fn perturbing_one_head_leaves_others_unchanged() {
    let (m, seqs) = fixture(7);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for j in 0..NUM_CONCEPTS {
        let mut p = m.clone();
        for x in p.concept_heads[j].weight.data_mut() {
            *x += rng.random_range(-1.0..1.0);
        }
        p.concept_heads[j].bias.data_mut()[0] += 0.5;
        for s in seqs.iter().take(3) {
            let before = m.forward_concept_logits(s).unwrap();
            let after = p.forward_concept_logits(s).unwrap();
            for k in 0..NUM_CONCEPTS {
                if k == j {
                    assert_ne!(before[k], after[k]);
                } else {
                    assert_eq!(before[k], after[k]);
                }
            }
        }
    }
}

#[test]
fn grade_from_fixed_concepts_ignores_text() {
    let (m, _) = fixture(8);
    let fixed = ConceptVector::new([2, 3, 1, 4, 0, 2, 2, 1]).unwrap();
    let reference = m.grade_from_concepts(&fixed);
    for s in random_sequences(m.vocab.len(), 100, 1) {
        // Run the text path first so any hidden state would be exercised.
        let _ = m.predict(&s).unwrap();
        let g = m.grade_from_concepts(&fixed);
        assert_eq!(g, reference);
    }
}

#[test]
fn pipeline_equals_grade_of_predicted_concepts() {
    let (m, seqs) = fixture(11);
    for s in &seqs {
        let (c, g) = m.predict(s).unwrap();
        assert_eq!(g, m.grade_from_concepts(&c.concepts));
        let batch = m.predict_batch(&[s]).unwrap();
        assert_eq!(batch[0].concepts, Some(c.concepts));
        assert_eq!(batch[0].grade, g.grade);
    }
}

#[test]
fn batched_prediction_matches_single() {
    let (m, seqs) = fixture(12);
    let refs: Vec<&TokenSequence> = seqs.iter().take(6).collect();
    let batch = m.predict_batch(&refs).unwrap();
    for (s, b) in refs.iter().zip(&batch) {
        let (c, g) = m.predict(s).unwrap();
        assert_eq!(b.concepts, Some(c.concepts));
        assert_eq!(b.grade, g.grade);
    }
}

#[test]
fn every_concept_vector_maps_to_a_valid_distribution() {
    let essays = generate_synthetic(4, 0);
    let vocab = Vocab::build(essays.iter().map(|e| e.text.as_str()), 1);
    let m = EssayCbmModel::new(vocab, &ModelDims::default(), 13).unwrap();
    let mut count = 0usize;
    for c in ConceptVector::all() {
        let g = m.grade_from_concepts(&c);
        assert!((g.grade as usize) < GRADE_CLASSES);
        assert!((g.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(g.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        count += 1;
    }
    assert_eq!(count, 390_625);
}

#[test]
fn grade_head_width_is_fixed() {
    assert_eq!(
        GradeHead::new(&[64, 64], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .hidden_dims(),
        vec![64, 64]
    );
    let wrong = crate::nn::Mlp::new(&[39, 6], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(GradeHead::from_mlp(wrong), Err(Error::Shape(_))));
}

#[test]
fn from_parts_rejects_wrong_head_count() {
    let (m, _) = fixture(14);
    let heads = m.concept_heads[..7].to_vec();
    let r = EssayCbmModel::from_parts(
        m.vocab.clone(),
        m.encoder.clone(),
        heads,
        m.grade_head.clone(),
        Provenance::default(),
    );
    assert!(matches!(r, Err(Error::Shape(_))));
}

#[test]
fn baseline_is_deterministic_with_six_logits() {
    let (cbm, seqs) = fixture(0);
    let b = BaselineModel::new(cbm.vocab.clone(), &small_dims(), 4).unwrap();
    let x = b.forward(&seqs[0]).unwrap();
    assert_eq!(x, b.forward(&seqs[0]).unwrap());
    assert_eq!(x.len(), GRADE_CLASSES);
    assert!(b.named_params().iter().all(|(n, _)| !n.starts_with("concept")));
    assert_eq!(b.dims().grade_hidden, Vec::<usize>::new());
}

#[test]
fn absorb_grads_fills_every_parameter() {
    let (mut m, seqs) = fixture(15);
    let grads = {
        let mut g = Graph::new();
        let vars = m.bind(&mut g);
        let out = m.forward_train(&mut g, &vars, &[&seqs[0], &seqs[1]]).unwrap();
        let loss = g.cross_entropy(out.grade_logits, &[1, 4]).unwrap();
        (EssayCbmModel::flat_vars(&vars), g.backward(loss).unwrap())
    };
    m.absorb_grads(&grads.0, &grads.1).unwrap();
    assert!(m.named_params().iter().all(|(_, t)| t.grad().is_some()));
}

mod checkpoints {
    use super::*;

    #[test]
    fn cbm_round_trip_is_bit_exact() {
        let (mut m, _) = fixture(21);
        m.provenance.training = Some(serde_json::json!({"lambda": 0.5}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        for s in random_sequences(m.vocab.len(), 10, 2) {
            assert_eq!(m.forward_joint(&s).unwrap(), back.forward_joint(&s).unwrap());
            assert_eq!(m.predict(&s).unwrap(), back.predict(&s).unwrap());
        }
        assert_eq!(write_checkpoint(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn baseline_round_trip_is_bit_exact() {
        let (cbm, _) = fixture(0);
        let b = BaselineModel::new(cbm.vocab.clone(), &small_dims(), 22).unwrap();
        let bytes = write_checkpoint(&b).unwrap();
        let AnyModel::Baseline(back) = read_checkpoint(&bytes).unwrap() else {
            panic!("wrong kind");
        };
        for s in random_sequences(b.vocab.len(), 10, 3) {
            assert_eq!(b.forward(&s).unwrap(), back.forward(&s).unwrap());
        }
    }

    #[test]
    fn header_layout() {
        let (m, _) = fixture(23);
        let bytes = write_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), CHECKPOINT_VERSION);
        assert_eq!(bytes[12], 0);
        assert_eq!(
            u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize,
            m.vocab.len()
        );
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 2);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let (m, _) = fixture(24);
        let bytes = write_checkpoint(&m).unwrap();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(read_checkpoint(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let (m, _) = fixture(25);
        let mut bytes = write_checkpoint(&m).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(read_checkpoint(&bytes), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let (m, _) = fixture(26);
        let mut bytes = write_checkpoint(&m).unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_checkpoint(&bytes),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let (cbm, _) = fixture(0);
        let b = BaselineModel::new(cbm.vocab.clone(), &small_dims(), 27).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bpath = dir.path().join("b.ckpt");
        let cpath = dir.path().join("c.ckpt");
        save_checkpoint(&b, &bpath).unwrap();
        save_checkpoint(&cbm, &cpath).unwrap();
        assert!(matches!(load_checkpoint(&bpath), Err(Error::KindMismatch { .. })));
        assert!(matches!(load_baseline(&cpath), Err(Error::KindMismatch { .. })));
        assert_eq!(load_any(&bpath).unwrap().kind(), ModelKind::Baseline);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_any("/nonexistent/x.ckpt"), Err(Error::Io { .. })));
    }

    #[test]
    fn parameter_tensors_keep_gradient_tracking() {
        let (m, _) = fixture(28);
        let back = read_checkpoint(&write_checkpoint(&m).unwrap()).unwrap();
        let AnyModel::Cbm(back) = back else { panic!() };
        assert!(back
            .named_params()
            .iter()
            .all(|(_, t): &(String, &Tensor)| t.requires_grad()));
    }
}
