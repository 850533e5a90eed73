//! Gradient verification against the central finite-difference oracle, plus
//! the detach-semantics contracts.

mod common;

use common::{grad_check, tiny_setup, LAMBDA_GRID};
use kpgen::loss::{forward_batch, gradients, Lambdas};
use kpgen::model::TensorRef;

fn tensor_is_zero(t: &TensorRef<'_>) -> bool {
    t.as_slice().iter().all(|&v| v == 0.0)
}

#[test]
fn finite_differences_agree_on_two_hundred_configs_per_lambda_combination() {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (k, lambdas) in LAMBDA_GRID.iter().enumerate() {
        for rep in 0..200u64 {
            let seed = 1000 + 997 * rep + k as u64;
            let setup = tiny_setup(seed, rep % 4 == 3);
            let report = grad_check(&setup, *lambdas, 1);
            assert!(
                report.max_rel_err < 1e-4,
                "lambda {lambdas:?} seed {seed}: max rel err {} at {:?}",
                report.max_rel_err,
                report.worst
            );
            worst = worst.max(report.max_rel_err);
            checked += report.coords_checked;
        }
    }
    eprintln!("gradcheck: {checked} coordinates over 800 configs, worst relative error {worst:.3e}");
}

#[test]
fn coverage_detach_blocks_target_encoder_when_disabled() {
    let setup = tiny_setup(5, false);
    let lambdas = Lambdas { or: 1.0, sc: 0.0 };
    let fwd = forward_batch(&setup.params, &setup.examples, lambdas, None, 2, setup.sc_seed, None)
        .unwrap();
    let grads = gradients(&setup.params, &setup.examples, &fwd, lambdas, None).unwrap();
    for (name, t) in grads.tensors() {
        if name.starts_with("tenc") || name == "bilinear" {
            assert!(tensor_is_zero(&t), "{name} should carry no gradient when lambda_sc = 0");
        }
    }

    // ... even though perturbing the target encoder does change the loss
    let mut shifted = setup.params.clone();
    shifted.tenc.b_n[0] += 0.05;
    let moved = forward_batch(&shifted, &setup.examples, lambdas, None, 2, setup.sc_seed, None)
        .unwrap();
    assert!(
        (moved.breakdown.total - fwd.breakdown.total).abs() > 1e-9,
        "the coverage state should still influence the forward value"
    );
}

#[test]
fn coverage_loss_alone_never_reaches_the_source_encoder() {
    let setup = tiny_setup(6, false);
    let base = forward_batch(
        &setup.params,
        &setup.examples,
        Lambdas::zero(),
        None,
        2,
        setup.sc_seed,
        None,
    )
    .unwrap();
    let with_sc = forward_batch(
        &setup.params,
        &setup.examples,
        Lambdas { or: 0.0, sc: 1.0 },
        None,
        2,
        setup.sc_seed,
        None,
    )
    .unwrap();
    let g0 =
        gradients(&setup.params, &setup.examples, &base, Lambdas::zero(), None).unwrap();
    let g1 = gradients(
        &setup.params,
        &setup.examples,
        &with_sc,
        Lambdas { or: 0.0, sc: 1.0 },
        None,
    )
    .unwrap();
    // the coverage-only contribution is the difference of the two gradient sets
    for ((name, a), (_, b)) in g0.tensors().iter().zip(g1.tensors().iter()) {
        let delta: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let expected_zero = name.starts_with("enc_fwd")
            || name.starts_with("enc_bwd")
            || name.starts_with("dec")
            || name.starts_with("attn")
            || name.starts_with("readout")
            || name.starts_with("out_proj")
            || name.starts_with("switch")
            || name.starts_with("init_map");
        if expected_zero {
            assert!(delta == 0.0, "{name}: coverage loss leaked gradient {delta}");
        }
    }
    // and it does train the target encoder and the bilinear map
    let tenc_moved = g0
        .tensors()
        .iter()
        .zip(g1.tensors().iter())
        .filter(|((name, _), _)| name.starts_with("tenc") || *name == "bilinear")
        .any(|((_, a), (_, b))| {
            a.as_slice().iter().zip(b.as_slice()).any(|(x, y)| (x - y).abs() > 0.0)
        });
    assert!(tenc_moved, "coverage loss should reach the target encoder");
}

#[test]
fn pad_embedding_row_gradient_is_zero() {
    let setup = tiny_setup(7, true);
    let lambdas = Lambdas { or: 1.0, sc: 1.0 };
    let fwd = forward_batch(
        &setup.params,
        &setup.examples,
        lambdas,
        setup.noise.as_ref(),
        2,
        setup.sc_seed,
        None,
    )
    .unwrap();
    let grads = gradients(
        &setup.params,
        &setup.examples,
        &fwd,
        lambdas,
        setup.noise.as_ref().map(|n| n.per_example.as_slice()),
    )
    .unwrap();
    assert!(grads.embedding.row(0).iter().all(|&v| v == 0.0));
}
