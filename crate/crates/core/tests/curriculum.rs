use hicu::checkpoint::Checkpoint;
use hicu::curriculum::{inspect_attention, run_flat, run_hicu, CurriculumConfig, Mode, Trainer};
use hicu::data_io::{index_documents, load_embeddings, synth_generate, Dataset, SynthConfig, SynthCorpus, Vocab};
use hicu::hyperbolic::{embedding_for_level, train_poincare, EmbedConfig, PoincareEmbedding};
use hicu::label_tree::{augment_tree, AugmentedLabelTree};
use hicu::loss::{AslConfig, Loss};
use hicu::network::{forward, Correction, CorrectionMode};
use ndarray::Array2;

struct Fixture {
    corpus: SynthCorpus,
    vocab: Vocab,
    tree: AugmentedLabelTree,
    train: Dataset,
    valid: Dataset,
    emb: PoincareEmbedding,
}

fn fixture(noise_rate: f64, train_docs: usize) -> Fixture {
    let corpus = synth_generate(&SynthConfig {
        branching: [2, 2, 2, 2, 2],
        noise_rate,
        noise_vocab: 50,
        doc_len: 20,
        max_labels_per_doc: 3,
        train_docs,
        valid_docs: 40,
        test_docs: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let vocab = Vocab::build(corpus.train.iter().map(|d| d.text.as_str()), 1);
    let tree = augment_tree(&corpus.tree);
    let train = index_documents(&corpus.train, &vocab, &corpus.tree, 4096).unwrap();
    let valid = index_documents(&corpus.valid, &vocab, &corpus.tree, 4096).unwrap();
    let emb = train_poincare(
        &corpus.tree,
        &EmbedConfig {
            dim: 4,
            epochs: 30,
            burn_in_epochs: 5,
            ..EmbedConfig::default()
        },
    )
    .unwrap();
    Fixture {
        corpus,
        vocab,
        tree,
        train,
        valid,
        emb,
    }
}

fn words(f: &Fixture) -> Array2<f64> {
    load_embeddings(None, &f.vocab, 8, 3).unwrap().0
}

fn cfg() -> CurriculumConfig {
    CurriculumConfig {
        epochs_per_level: vec![1, 1, 1, 1, 3],
        batch_size: 8,
        learning_rate: 3e-3,
        correction: CorrectionMode::Add,
        loss: Loss::Asl(AslConfig::default()),
        d_f: 8,
        seed: 5,
        ..CurriculumConfig::default()
    }
}

#[test]
fn training_is_deterministic_across_runs_and_workers() {
    let f = fixture(0.1, 120);
    let a = run_hicu(&f.train, &f.valid, &f.tree, Some(&f.emb), words(&f), &cfg()).unwrap();
    let b = run_hicu(&f.train, &f.valid, &f.tree, Some(&f.emb), words(&f), &cfg()).unwrap();
    assert_eq!(a, b);
    let parallel = CurriculumConfig { workers: 2, ..cfg() };
    let c = run_hicu(&f.train, &f.valid, &f.tree, Some(&f.emb), words(&f), &parallel).unwrap();
    assert_eq!(a.0, c.0);
    assert_eq!(a.1.records, c.1.records);
    assert_eq!(a.1.level_losses().len(), 5);
    assert!(a.1.summary.best_epoch.is_some());
}

#[test]
fn zero_epoch_curriculum_without_transfer_is_flat_training() {
    let f = fixture(0.1, 80);
    let c = CurriculumConfig {
        epochs_per_level: vec![0, 0, 0, 0, 2],
        knowledge_transfer: false,
        ..cfg()
    };
    let (hicu_model, hicu_report) = run_hicu(&f.train, &f.valid, &f.tree, Some(&f.emb), words(&f), &c).unwrap();
    let (flat_model, flat_report) = run_flat(&f.train, &f.valid, &f.tree, Some(&f.emb), words(&f), &c).unwrap();
    assert_eq!(hicu_model, flat_model);
    assert_eq!(hicu_report.records, flat_report.records);
    assert_eq!(flat_report.summary.mode, Mode::Flat);
}

#[test]
fn zero_correction_matches_no_correction() {
    let f = fixture(0.1, 40);
    let (mut model, _) = run_flat(
        &f.train,
        &f.valid,
        &f.tree,
        None,
        words(&f),
        &CurriculumConfig {
            epochs_per_level: vec![0, 0, 0, 0, 1],
            correction: CorrectionMode::None,
            ..cfg()
        },
    )
    .unwrap();
    let e_h = embedding_for_level(&f.emb, &f.tree, 5).unwrap();
    let (plain, _) = forward(&f.train.docs[0].tokens, &model, None).unwrap();
    model.decoder.correction = Correction::zeros(CorrectionMode::Add, 8, f.emb.dim());
    let (zeroed, _) = forward(&f.train.docs[0].tokens, &model, Some(&e_h)).unwrap();
    assert_eq!(plain, zeroed);
}

#[test]
fn attention_finds_planted_signatures() {
    let f = fixture(0.6, 300);
    let c = CurriculumConfig {
        epochs_per_level: vec![0, 0, 0, 0, 12],
        correction: CorrectionMode::None,
        loss: Loss::Bce,
        learning_rate: 1e-2,
        ..cfg()
    };
    let (model, _) = run_flat(&f.train, &f.valid, &f.tree, None, words(&f), &c).unwrap();
    let (mut hits, mut total, mut chance) = (0, 0, 0.0);
    for d in f.train.docs.iter().take(60) {
        for label in &d.labels {
            let top = inspect_attention(&model, &f.tree, None, &d.tokens, label, 1).unwrap();
            let path = f.tree.path_to(5, f.tree.leaf_index(label).unwrap());
            let planted: Vec<&str> = path
                .iter()
                .enumerate()
                .flat_map(|(i, n)| f.corpus.signatures.get(&(i + 1, n.clone())).into_iter().flatten())
                .map(String::as_str)
                .collect();
            total += 1;
            if planted.contains(&f.vocab.token(top[0].token)) {
                hits += 1;
            }
            chance += d.tokens.iter().filter(|&&t| planted.contains(&f.vocab.token(t))).count() as f64 / d.tokens.len() as f64;
        }
    }
    let chance = chance / total as f64;
    let rate = hits as f64 / total as f64;
    assert!(rate >= chance + 0.2, "{hits}/{total} top tokens were planted, chance {chance:.3}");
    assert!(inspect_attention(&model, &f.tree, None, &f.train.docs[0].tokens, "nope", 3).is_err());
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let f = fixture(0.1, 60);
    let c = cfg();
    let trainer = Trainer::new(&c, &f.tree, Some(&f.emb), &f.train, &f.valid).unwrap();
    let mut state = trainer.init_state(words(&f)).unwrap();
    trainer.run(&mut state, Some(6)).unwrap();
    assert!(state.early.best_model.is_some());
    let ckpt = Checkpoint {
        run_config: serde_json::json!({"seed": 5, "note": "x"}),
        curriculum: c.clone(),
        vocab: f.vocab.clone(),
        tree: f.corpus.tree.clone(),
        hyperbolic: Some(f.emb.clone()),
        state,
    };
    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes(), bytes);

    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(Checkpoint::from_bytes(&bad).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let f = fixture(0.1, 60);
    let c = cfg();
    let trainer = Trainer::new(&c, &f.tree, Some(&f.emb), &f.train, &f.valid).unwrap();
    for n in [1, 4, 5] {
        let mut straight = trainer.init_state(words(&f)).unwrap();
        trainer.run(&mut straight, Some(n + 1)).unwrap();

        let mut paused = trainer.init_state(words(&f)).unwrap();
        trainer.run(&mut paused, Some(n)).unwrap();
        let ckpt = Checkpoint {
            run_config: serde_json::Value::Null,
            curriculum: c.clone(),
            vocab: f.vocab.clone(),
            tree: f.corpus.tree.clone(),
            hyperbolic: Some(f.emb.clone()),
            state: paused,
        };
        let mut resumed = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap().state;
        trainer.run(&mut resumed, Some(1)).unwrap();
        assert_eq!(resumed, straight, "pause after {n} epochs");
    }
}
