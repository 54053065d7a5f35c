use invgan::autodiff::{gradient_check, Activation, AdamConfig, AdamState, Matrix, NetSpec, Network};
use invgan::checkpoint::Checkpoint;
use invgan::data::latent_sample;
use invgan::finetune::{finetune_run, FinetuneConfig, SnapshotSchedule};
use invgan::losses::{d_loss, d_loss_grad, inverted_g_loss, inverted_g_loss_grad, LossVariant};
use invgan::metrics::{classify_phases, PhaseThresholds};
use invgan::train::{probe_latents, sample_generator, train, TrainConfig};
use invgan::Result;
use proptest::prelude::*;

fn smooth() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Linear), Just(Activation::Tanh), Just(Activation::Sigmoid)]
}

#[derive(Clone, Copy, Debug)]
enum LossKind {
    Squared,
    Discriminator,
    Amplifying,
    Saturating,
}

fn loss_kind() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::Squared),
        Just(LossKind::Discriminator),
        Just(LossKind::Amplifying),
        Just(LossKind::Saturating),
    ]
}

fn column(v: Vec<f64>) -> Matrix {
    let n = v.len();
    Matrix::from_vec(n, 1, v).unwrap()
}

fn eval(kind: LossKind, out: &Matrix) -> Result<(f64, Matrix)> {
    let p = out.data();
    Ok(match kind {
        LossKind::Squared => (0.5 * p.iter().map(|v| v * v).sum::<f64>(), out.clone()),
        LossKind::Discriminator => {
            let half = p.len() / 2;
            let (r, f) = p.split_at(half.max(1).min(p.len() - 1));
            let (gr, gf) = d_loss_grad(r, f)?;
            (d_loss(r, f)?, column([gr, gf].concat()))
        }
        LossKind::Amplifying => {
            (inverted_g_loss(p, LossVariant::Amplifying)?, column(inverted_g_loss_grad(p, LossVariant::Amplifying)?))
        }
        LossKind::Saturating => {
            (inverted_g_loss(p, LossVariant::Saturating)?, column(inverted_g_loss_grad(p, LossVariant::Saturating)?))
        }
    })
}

fn tiny_base(seed: u64) -> Checkpoint {
    let cfg = TrainConfig {
        latent_dim: 3,
        g_layers: vec![6],
        d_layers: vec![6],
        batch_size: 8,
        iterations: 10,
        checkpoint_every: 10,
        seed,
        ..TrainConfig::ring2d()
    };
    train(&cfg).unwrap().final_checkpoint
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradients_match_finite_differences(
        hidden in prop::collection::vec(1usize..=32, 0..=3),
        acts in prop::collection::vec(smooth(), 4),
        in_dim in 1usize..6,
        batch in 2usize..6,
        kind in loss_kind(),
        seed in any::<u64>(),
    ) {
        let scalar_out = !matches!(kind, LossKind::Squared);
        let mut dims = vec![in_dim];
        dims.extend(&hidden);
        dims.push(if scalar_out { 1 } else { 3 });
        let n_layers = dims.len() - 1;
        let mut activations: Vec<Activation> = acts[..n_layers].to_vec();
        if scalar_out {
            activations[n_layers - 1] = Activation::Sigmoid;
        }
        let net = Network::init_seeded(&NetSpec::new(dims, activations).unwrap(), seed).unwrap();
        let x = latent_sample(in_dim, seed ^ 0xABCD, batch).unwrap().data;
        let r = gradient_check(&net, &x, &|o: &Matrix| eval(kind, o), 20, 1e-5, seed).unwrap();
        prop_assert!(r.max_rel_error < 1e-4, "{:?}: {}", kind, r.max_rel_error);
    }

    #[test]
    fn forward_shape_algebra(batch in 0usize..9, seed in any::<u64>()) {
        let spec = NetSpec::uniform(vec![3, 5, 2], Activation::LeakyRelu, Activation::Linear).unwrap();
        let mut net = Network::init_seeded(&spec, seed).unwrap();
        let x = latent_sample(3, seed, batch).unwrap().data;
        prop_assert_eq!(net.forward(&x).unwrap().rows(), batch);
        let tape = net.forward_tape(&x).unwrap();
        net.backward(&tape, &Matrix::zeros(batch, 2)).unwrap();
        for p in net.params() {
            prop_assert_eq!(p.grad().len(), p.values().len());
            prop_assert!(p.grad().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn adam_counts_steps(steps in 0u64..20, lr in 1e-6f64..1e-1) {
        let spec = NetSpec::uniform(vec![2, 2], Activation::Linear, Activation::Linear).unwrap();
        let mut net = Network::init_seeded(&spec, 1).unwrap();
        let mut adam = AdamState::for_network(&net, AdamConfig::with_lr(lr));
        for _ in 0..steps {
            adam.step_network(&mut net).unwrap();
        }
        prop_assert_eq!(adam.t, steps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn discriminator_never_moves(seed in 0u64..1000, variant in prop_oneof![Just(LossVariant::Amplifying), Just(LossVariant::Saturating)], lr in 1e-5f64..1e-1) {
        let base = tiny_base(seed);
        let cfg = FinetuneConfig {
            loss_variant: variant,
            lr_g: Some(lr),
            batch_size: 8,
            iterations: 55,
            snapshot_schedule: SnapshotSchedule::Stride(11),
            seed,
            ..FinetuneConfig::default()
        };
        let out = finetune_run(&base, &cfg).unwrap();
        let d0 = base.discriminator().unwrap().param_bytes();
        prop_assert_eq!(&out.d_hash_before, &out.d_hash_after);
        for s in &out.snapshots.snapshots {
            prop_assert_eq!(s.checkpoint.discriminator().unwrap().param_bytes(), d0.clone());
        }
    }
}

#[test]
fn snapshots_reload_and_reproduce_their_samples() {
    let base = tiny_base(3);
    let cfg = FinetuneConfig {
        batch_size: 8,
        iterations: 60,
        snapshot_schedule: SnapshotSchedule::List(vec![0, 7, 30]),
        ..FinetuneConfig::default()
    };
    let out = finetune_run(&base, &cfg).unwrap();
    let its: Vec<u64> = out.snapshots.snapshots.iter().map(|s| s.iteration).collect();
    assert_eq!(its, vec![0, 7, 30, 60]);
    let probe = probe_latents(3).unwrap();
    for snap in &out.snapshots.snapshots {
        let back = Checkpoint::from_bytes(&snap.checkpoint.to_bytes()).unwrap();
        assert_eq!(back.generator().unwrap().forward(&probe).unwrap(), snap.samples.data);
        assert!(back.optim.is_some());
        // forward-consistent: sampling works and is finite
        assert!(sample_generator(&back, 16, 1).unwrap().data.all_finite());
    }
}

#[test]
fn zero_learning_rate_leaves_generator_alone() {
    let base = tiny_base(4);
    let cfg = FinetuneConfig {
        lr_g: Some(0.0),
        batch_size: 8,
        iterations: 55,
        ..FinetuneConfig::default()
    };
    let out = finetune_run(&base, &cfg).unwrap();
    let g0 = base.generator().unwrap().param_bytes();
    for s in &out.snapshots.snapshots {
        assert_eq!(s.checkpoint.generator().unwrap().param_bytes(), g0);
    }
    assert_eq!(out.metrics.len(), 56);
}

#[test]
fn fine_tune_runs_are_deterministic() {
    let base = tiny_base(5);
    let cfg = FinetuneConfig { batch_size: 8, iterations: 60, ..FinetuneConfig::default() };
    let a = finetune_run(&base, &cfg).unwrap();
    let b = finetune_run(&base, &cfg).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.snapshots.run_id, b.snapshots.run_id);
    for (x, y) in a.snapshots.snapshots.iter().zip(&b.snapshots.snapshots) {
        assert_eq!(x.checkpoint.to_bytes(), y.checkpoint.to_bytes());
    }
    assert_eq!(classify_phases(&a.metrics, &PhaseThresholds::default()).unwrap(), a.report);
}
