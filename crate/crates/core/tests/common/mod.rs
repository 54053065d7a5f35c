#![allow(dead_code)]

use invgan::autodiff::{Activation, AdamConfig, AdamState, NetSpec, Network};
use invgan::checkpoint::{Checkpoint, Role};
use invgan::finetune::{FinetuneConfig, SnapshotSchedule};
use invgan::losses::LossVariant;
use invgan::metrics::{MetricsRecord, Phase, PhaseReport};
use invgan::train::{DatasetKind, TrainConfig};
use proptest::prelude::*;

pub fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Linear),
        Just(Activation::LeakyRelu),
        Just(Activation::Tanh),
        Just(Activation::Sigmoid),
    ]
}

/// Any bit pattern, NaN payloads included.
pub fn any_bits() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits)
}

fn net(dims: Vec<usize>, acts: Vec<Activation>, seed: u64, values: Vec<f64>) -> Network {
    let spec = NetSpec::new(dims, acts).unwrap();
    let mut n = Network::init_seeded(&spec, seed).unwrap();
    let mut it = values.into_iter().cycle();
    for p in n.params_mut().unwrap() {
        for v in p.values_mut() {
            *v = it.next().unwrap();
        }
    }
    n
}

pub fn network() -> impl Strategy<Value = Network> {
    (1usize..4)
        .prop_flat_map(|layers| {
            (
                prop::collection::vec(1usize..6, layers + 1),
                prop::collection::vec(activation(), layers),
                any::<u64>(),
                prop::collection::vec(any_bits(), 1..16),
            )
        })
        .prop_map(|(dims, acts, seed, values)| net(dims, acts, seed, values))
}

fn adam_for(n: &Network, t: u64, lr: f64, fill: f64) -> AdamState {
    let mut s = AdamState::for_network(n, AdamConfig { lr, ..AdamConfig::default() });
    s.t = t;
    for (k, m) in s.m.iter_mut().enumerate() {
        m.iter_mut().for_each(|x| *x = fill * (k + 1) as f64);
    }
    for v in &mut s.v {
        v.iter_mut().for_each(|x| *x = fill * fill);
    }
    s
}

pub fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    (
        prop_oneof![Just(Role::Generator), Just(Role::Discriminator), Just(Role::Pair)],
        network(),
        network(),
        any::<bool>(),
        any::<u64>(),
        any::<u64>(),
        any::<u64>(),
        any_bits(),
        any_bits(),
    )
        .prop_map(|(role, a, b, optim, seed, iteration, t, lr, fill)| {
            let nets = if role == Role::Pair { vec![a, b] } else { vec![a] };
            let states = optim.then(|| nets.iter().map(|n| adam_for(n, t, lr, fill)).collect());
            Checkpoint::new(role, nets, states, seed, iteration).unwrap()
        })
}

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..512, 0..4)
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-12f64..1.0, 1e-300f64..1e300]
}

pub fn train_config() -> impl Strategy<Value = TrainConfig> {
    (
        prop_oneof![Just(DatasetKind::Ring2d), Just(DatasetKind::Sprites)],
        1usize..128,
        widths(),
        widths(),
        activation(),
        activation(),
        positive(),
        positive(),
        1usize..4096,
        any::<u64>(),
        1u64..100_000,
        any::<u64>(),
    )
        .prop_map(|(dataset, latent_dim, g_layers, d_layers, g_act, d_act, lr_g, lr_d, batch, its, every, seed)| {
            TrainConfig {
                dataset,
                latent_dim,
                g_layers,
                d_layers,
                g_activation: g_act,
                d_activation: d_act,
                lr_g,
                lr_d,
                batch_size: batch,
                iterations: its,
                checkpoint_every: every,
                seed,
            }
        })
}

pub fn finetune_config() -> impl Strategy<Value = FinetuneConfig> {
    let path = prop_oneof![
        Just(None),
        "[A-Za-z0-9_./-]([A-Za-z0-9_. =/-]{0,24}[A-Za-z0-9_./-])?".prop_map(Some),
    ];
    let schedule = prop_oneof![
        (1u64..5000).prop_map(SnapshotSchedule::Stride),
        prop::collection::btree_set(0u64..5000, 0..12).prop_map(|s| SnapshotSchedule::List(s.into_iter().collect())),
    ];
    (
        path,
        prop_oneof![Just(LossVariant::Amplifying), Just(LossVariant::Saturating)],
        prop::option::of(positive()),
        1usize..4096,
        1u64..100_000,
        schedule,
        prop::option::of(positive()),
        any::<u64>(),
    )
        .prop_map(|(base_checkpoint, loss_variant, lr_g, batch_size, iterations, snapshot_schedule, grad_clip, seed)| {
            FinetuneConfig {
                base_checkpoint,
                loss_variant,
                lr_g,
                batch_size,
                iterations,
                snapshot_schedule,
                grad_clip,
                seed,
            }
        })
}

/// Any value the CSV can carry: everything except NaN.
pub fn real() -> impl Strategy<Value = f64> {
    prop_oneof![any_bits().prop_filter("not NaN", |v| !v.is_nan()), Just(f64::INFINITY), Just(-0.0)]
}

pub fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Baseline), Just(Phase::Divergence), Just(Phase::Explosion), Just(Phase::Collapse)]
}

pub fn records() -> impl Strategy<Value = Vec<MetricsRecord>> {
    prop::collection::vec((1u64..1000, real(), real(), real(), real(), phase()), 0..40).prop_map(|rows| {
        let mut it = 0u64;
        rows.into_iter()
            .map(|(step, g_loss, mean_fake_prob, grad_norm_g, diversity, phase)| {
                it += step;
                MetricsRecord { iteration: it, g_loss, mean_fake_prob, grad_norm_g, diversity, phase }
            })
            .collect()
    })
}

pub fn phase_report() -> impl Strategy<Value = PhaseReport> {
    (
        prop::option::of(any::<u64>()),
        prop::option::of(any::<u64>()),
        prop::option::of(any::<u64>()),
        real(),
        real(),
        real(),
        any::<u64>(),
    )
        .prop_map(|(d, e, c, p, div, g, its)| PhaseReport {
            divergence_onset: d,
            explosion_onset: e,
            collapse_onset: c,
            initial_mean_fake_prob: p,
            initial_diversity: div,
            median_early_grad_norm: g,
            iterations: its,
        })
}

/// Bit-level equality for records (`-0.0` vs `0.0` matters).
pub fn same_bits(a: &[MetricsRecord], b: &[MetricsRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.iteration == y.iteration
                && x.phase == y.phase
                && [
                    (x.g_loss, y.g_loss),
                    (x.mean_fake_prob, y.mean_fake_prob),
                    (x.grad_norm_g, y.grad_norm_g),
                    (x.diversity, y.diversity),
                ]
                .iter()
                .all(|(p, q)| p.to_bits() == q.to_bits())
        })
}
