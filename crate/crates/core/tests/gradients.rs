mod common;

use common::{check_term, toy_config, Term, FD_TOLERANCE};
use disent_core::rng::RngStreams;
use disent_core::Model;

#[test]
fn toy_model_is_small() {
    let model = Model::new(&toy_config(0), &mut RngStreams::new(0)).unwrap();
    assert!(model.params.numel() <= 10_000, "{} parameters", model.params.numel());
}

fn run(term: Term) {
    for seed in 0..10 {
        let c = check_term(term, seed);
        assert!(c.directions >= 2, "{c:?}");
        assert!(c.max_rel_error <= FD_TOLERANCE, "{c:?}");
    }
}

#[test]
fn cycle_reconstruction_gradient() {
    run(Term::Rec);
}

#[test]
fn generator_adversarial_gradient() {
    run(Term::AdvG);
}

#[test]
fn discriminator_adversarial_gradient_with_r1() {
    run(Term::AdvD);
}

#[test]
fn bottleneck_gradient() {
    run(Term::Cb);
}
