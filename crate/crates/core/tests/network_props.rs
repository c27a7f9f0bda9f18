mod common;

use common::*;
use fieldnet::field_sim::CellTable;
use fieldnet::{
    build_network, classify, first_layer_fire, neuron_state, BinaryImage, Decision, Mode,
    PhysicalConfig, Reference,
};
use proptest::prelude::*;

fn cfg() -> PhysicalConfig {
    PhysicalConfig::default()
}

fn refs_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<Reference>> {
    prop::collection::vec((0u8..10, nonempty_image_strategy()), min..=max)
        .prop_map(|v| {
            let mut out: Vec<Reference> = Vec::new();
            for (d, img) in v {
                if out.iter().all(|r| r.image != img) {
                    out.push(Reference::new(d, img));
                }
            }
            out
        })
        .prop_filter("need two distinct references", |r| r.len() >= 2)
}

fn inputs_strategy(n: usize) -> impl Strategy<Value = Vec<BinaryImage>> {
    prop::collection::vec(image_strategy(), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn thresholds_are_antisymmetric(refs in refs_strategy(2, 8)) {
        let net = build_network(refs, &cfg()).unwrap();
        for k in 0..net.len() {
            for k1 in 0..net.len() {
                if k != k1 {
                    let (a, b) = (net.neuron(k, k1), net.neuron(k1, k));
                    prop_assert_eq!(a.wh1.to_bits(), (-b.wh1).to_bits());
                    prop_assert!(a.weights.bit_identical(&b.weights.negated()));
                }
            }
        }
    }

    #[test]
    fn pair_neurons_are_complementary(refs in refs_strategy(2, 8), inputs in inputs_strategy(20)) {
        let net = build_network(refs, &cfg()).unwrap();
        for x in &inputs {
            for k in 0..net.len() {
                for k1 in k + 1..net.len() {
                    let a = net.neuron(k, k1);
                    let v = neuron_state(a, x) + a.wh1;
                    let fa = first_layer_fire(a, x);
                    let fb = first_layer_fire(net.neuron(k1, k), x);
                    if v == 0.0 {
                        prop_assert!(fa && fb);
                    } else {
                        prop_assert!(fa != fb);
                    }
                }
            }
        }
    }

    #[test]
    fn decisions_ignore_charge_and_constant_scale(refs in refs_strategy(2, 8), inputs in inputs_strategy(30)) {
        let base = build_network(refs.clone(), &cfg()).unwrap();
        for c in [0.1, 10.0] {
            let by_q = build_network(refs.clone(), &cfg().with_charge(cfg().charge * c)).unwrap();
            let by_k = build_network(refs.clone(), &cfg().with_coulomb_k(cfg().coulomb_k * c)).unwrap();
            for x in &inputs {
                for mode in [Mode::Strict, Mode::Argmax] {
                    let d = classify(&base, x, mode);
                    prop_assert_eq!(d, classify(&by_q, x, mode));
                    prop_assert_eq!(d, classify(&by_k, x, mode));
                }
            }
        }
    }

    #[test]
    fn cascade_keeps_existing_neurons(refs in refs_strategy(3, 8)) {
        let (head, tail) = refs.split_at(2);
        let mut net = build_network(head.to_vec(), &cfg()).unwrap();
        for r in tail {
            let grown = net.add_reference(r.clone()).unwrap();
            for k in 0..net.len() {
                for k1 in 0..net.len() {
                    if k != k1 {
                        let (old, new) = (net.neuron(k, k1), grown.neuron(k, k1));
                        prop_assert!(old.weights.bit_identical(&new.weights));
                        prop_assert_eq!(old.wh1.to_bits(), new.wh1.to_bits());
                    }
                }
            }
            prop_assert_eq!(grown.neuron_count(), grown.len() * (grown.len() - 1));
            net = grown;
        }
    }

    #[test]
    fn add_then_build_agree(refs in refs_strategy(3, 8), inputs in inputs_strategy(100)) {
        let (last, head) = refs.split_last().unwrap();
        let grown = build_network(head.to_vec(), &cfg()).unwrap().add_reference(last.clone()).unwrap();
        let direct = build_network(refs.clone(), &cfg()).unwrap();
        for (a, b) in grown.neurons().iter().zip(direct.neurons()) {
            prop_assert!(a.weights.bit_identical(&b.weights));
            prop_assert_eq!(a.wh1.to_bits(), b.wh1.to_bits());
        }
        for x in &inputs {
            prop_assert_eq!(classify(&grown, x, Mode::Strict), classify(&direct, x, Mode::Strict));
        }
    }

    #[test]
    fn batch_agrees_with_forward(refs in refs_strategy(2, 8), inputs in inputs_strategy(40)) {
        let net = build_network(refs, &cfg()).unwrap();
        for mode in [Mode::Strict, Mode::Argmax] {
            let batch = net.classify_batch(&inputs, mode);
            for (x, d) in inputs.iter().zip(&batch) {
                prop_assert_eq!(*d, classify(&net, x, mode));
            }
        }
        let wins = net.win_counts(&inputs);
        for (x, w) in inputs.iter().zip(&wins) {
            let trace = net.forward(x, Mode::Strict);
            let fwd: Vec<usize> = trace.second_layer.iter().map(|s| s.0).collect();
            prop_assert_eq!(&fwd, w);
        }
    }

    #[test]
    fn references_classify_as_themselves(refs in refs_strategy(2, 8)) {
        let net = build_network(refs, &cfg()).unwrap();
        for (k, r) in net.references().iter().enumerate() {
            let trace = net.forward(&r.image, Mode::Strict);
            prop_assert_eq!(trace.second_layer[k], (net.len() - 1, true));
            prop_assert_eq!(trace.decision, Decision::Digit(r.digit));
        }
    }

    #[test]
    fn trace_layers_are_consistent(refs in refs_strategy(2, 8), x in image_strategy()) {
        let net = build_network(refs, &cfg()).unwrap();
        let t = net.forward(&x, Mode::Strict);
        prop_assert_eq!(t.first_layer.len(), net.neuron_count());
        for (k, &(wins, fired)) in t.second_layer.iter().enumerate() {
            let counted = t.first_layer.iter().filter(|((a, _), _, f)| *a == k && *f).count();
            prop_assert_eq!(wins, counted);
            prop_assert_eq!(fired, wins >= net.len() - 1);
        }
        for (d, &(votes, fired)) in t.third_layer.iter().enumerate() {
            let counted = net.class_group(d as u8).iter().filter(|&&k| t.second_layer[k].1).count();
            prop_assert_eq!(votes, counted);
            prop_assert_eq!(fired, votes > 0);
        }
        let fired: Vec<u8> = (0..10u8).filter(|&d| t.third_layer[d as usize].1).collect();
        match t.decision {
            Decision::Digit(d) => prop_assert_eq!(fired, vec![d]),
            Decision::Rejected => prop_assert!(fired.len() != 1),
        }
    }
}

#[test]
fn empty_input_has_zero_state() {
    let refs = vec![
        Reference::new(1, BinaryImage::from_coords([(3, 3), (4, 4)]).unwrap()),
        Reference::new(2, BinaryImage::from_coords([(20, 5)]).unwrap()),
    ];
    let net = build_network(refs, &cfg()).unwrap();
    for n in net.neurons() {
        assert_eq!(neuron_state(n, &BinaryImage::empty()), 0.0);
        assert_eq!(n.weights.dot(&BinaryImage::empty()), 0.0);
    }
}
