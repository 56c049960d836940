mod common;

use anchorlab::aligner::EncoderConfig;

#[test]
fn every_parameter_group_matches_finite_differences() {
    let cfg = common::compact_probe_config();
    let errors = common::encoder_gradient_errors(&cfg, 5, 11, 24);
    // input MLP, positions, 16 tensors per block, final norm, output MLP
    assert_eq!(errors.len(), 4 + 1 + cfg.layers * 16 + 2 + 4);
    for (name, rel) in &errors {
        assert!(*rel <= 1e-4, "{name}: relative error {rel:e}");
    }
}

#[test]
fn single_position_and_full_length() {
    let mut cfg = EncoderConfig::compact(6, 4);
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    cfg.layers = 1;
    cfg.max_positions = 4;
    for len in [1, 4] {
        for (name, rel) in common::encoder_gradient_errors(&cfg, len, 5, 40) {
            assert!(rel <= 1e-4, "len {len} {name}: {rel:e}");
        }
    }
}

mod loss_through_encoder {
    use anchorlab::aligner::{batch_gradient, AlignerModel, EncoderConfig, TrainSequence};
    use anchorlab::embedding::EmbeddingBank;
    use anchorlab::vocab::KeywordVocabulary;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(learn_tau: bool) -> (AlignerModel, Vec<TrainSequence>, Vec<Array2<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let lemmas = ["alpha", "beta", "gamma", "delta"];
        let vocab = KeywordVocabulary::from_lemmas(&lemmas).unwrap();
        let bank = EmbeddingBank::from_rows(
            6,
            lemmas
                .iter()
                .map(|l| (l.to_string(), (0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>())),
        )
        .unwrap();
        let mut cfg = EncoderConfig::compact(5, 6);
        cfg.model_dim = 8;
        cfg.heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_positions = 6;
        let mut model = AlignerModel::new(cfg, &vocab, &bank, 0.5, 4).unwrap();
        model.learn_tau = learn_tau;
        let seqs = vec![
            TrainSequence {
                sentence_id: "a".into(),
                subject_id: "s".into(),
                features: Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0)),
                positions: vec![0, 1, 2, 3],
                targets: vec![Some(1), None, Some(3), Some(0)],
            },
            TrainSequence {
                sentence_id: "b".into(),
                subject_id: "s".into(),
                features: Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0)),
                positions: vec![0, 1, 2],
                targets: vec![None, Some(2), Some(2)],
            },
        ];
        let noise = seqs
            .iter()
            .map(|s| Array2::from_shape_fn(s.features.raw_dim(), |_| 0.1 * rng.random_range(-1.0..1.0)))
            .collect();
        (model, seqs, noise)
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        for aux_weight in [0.0, 0.7] {
            let (model, seqs, noise) = setup(true);
            let batch: Vec<&TrainSequence> = seqs.iter().collect();
            let aux = Some((noise.as_slice(), aux_weight));
            let loss_of = |m: &AlignerModel| batch_gradient(m, &batch, aux).unwrap().unwrap().0;
            let (_, grad, d_tau) = batch_gradient(&model, &batch, aux).unwrap().unwrap();
            let h = 1e-5;
            let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.data.to_vec()).collect();
            for (ti, g) in analytic.iter().enumerate() {
                for i in (0..g.len()).step_by(g.len().div_ceil(6).max(1)) {
                    let mut p = model.clone();
                    p.weights.tensors_mut()[ti][i] += h;
                    let mut m = model.clone();
                    m.weights.tensors_mut()[ti][i] -= h;
                    let num = (loss_of(&p) - loss_of(&m)) / (2.0 * h);
                    let err = (num - g[i]).abs() / (num.abs() + g[i].abs()).max(1e-6);
                    assert!(err < 1e-4, "aux {aux_weight} tensor {ti}[{i}]: {num} vs {}", g[i]);
                }
            }
            let mut p = model.clone();
            p.log_tau += h;
            let mut m = model.clone();
            m.log_tau -= h;
            let num = (loss_of(&p) - loss_of(&m)) / (2.0 * h);
            assert!((num - d_tau).abs() / num.abs().max(1e-6) < 1e-4, "aux {aux_weight}: {num} vs {d_tau}");
        }
    }
}
