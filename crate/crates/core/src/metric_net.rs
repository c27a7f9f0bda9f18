//! The three-layer metric-recognition network.
//!
//! - First layer: one [`PairNeuron`] per ordered pair of references
//!   `(k, k1)`, `k != k1`. Its state on input `x` is the sum of its weight
//!   table over the white pixels of `x`; it fires when
//!   `state + wh1 >= 0`, i.e. when `x` looks more like reference `k` than
//!   reference `k1`.
//! - Second layer: one neuron per reference, counting the pair neurons
//!   `(k, ·)` that fired. It fires only when `k` wins all `N - 1`
//!   comparisons.
//! - Third layer: one neuron per digit, firing when any reference of that
//!   digit fired in the second layer.
//!
//! `wh1` is the negated midpoint of the pair neuron's responses to its own
//! two references, which places the decision boundary halfway between them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{
    build_kernel, potential_table, potential_table_fast, CellTable, PhysicalConfig, PotentialTable,
    WeightTable,
};
use crate::mnist_io::BinaryImage;
use crate::DIGITS;

/// A reference image and the digit it stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub digit: u8,
    pub image: BinaryImage,
    /// Dataset position the image was taken from, when known.
    pub source: Option<usize>,
}

impl Reference {
    pub fn new(digit: u8, image: BinaryImage) -> Self {
        Self {
            digit,
            image,
            source: None,
        }
    }

    pub fn with_source(mut self, position: usize) -> Self {
        self.source = Some(position);
        self
    }

    fn same_pattern(&self, other: &Self) -> bool {
        self.digit == other.digit && self.image == other.image
    }

    fn describe(&self) -> String {
        match self.source {
            Some(pos) => format!("digit {} (dataset position {pos})", self.digit),
            None => format!("digit {} ({} active pixels)", self.digit, self.image.len()),
        }
    }
}

/// First-layer neuron comparing reference `k` against reference `k1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNeuron {
    pub k: usize,
    pub k1: usize,
    pub weights: WeightTable,
    /// Weighted threshold; the neuron fires when `state + wh1 >= 0`.
    pub wh1: f64,
}

/// Weighted sum of `neuron`'s table over the white pixels of `x`.
pub fn neuron_state(neuron: &PairNeuron, x: &BinaryImage) -> f64 {
    neuron.weights.dot(x)
}

/// `-(state_k + state_k1) / 2`.
pub fn compute_threshold(state_k: f64, state_k1: f64) -> f64 {
    -(state_k + state_k1) / 2.0
}

/// Ties (`state + wh1 == 0`) fire.
pub fn first_layer_fire(neuron: &PairNeuron, x: &BinaryImage) -> bool {
    neuron_state(neuron, x) + neuron.wh1 >= 0.0
}

/// Per-reference weight table of the zero-layer variant: the potential of
/// the reference alone.
pub fn zero_layer_table(reference: &BinaryImage, cfg: &PhysicalConfig) -> PotentialTable {
    potential_table(reference, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The literal three-layer rule; no unique winning digit means rejection.
    Strict,
    /// Falls back to the reference with the most pairwise wins when the
    /// strict rule rejects.
    Argmax,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "argmax" => Ok(Mode::Argmax),
            other => Err(Error::Input(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Argmax => "argmax",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Digit(u8),
    Rejected,
}

impl Decision {
    pub fn digit(self) -> Option<u8> {
        match self {
            Decision::Digit(d) => Some(d),
            Decision::Rejected => None,
        }
    }
}

/// Every intermediate value of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `((k, k1), state, fired)` in neuron order.
    pub first_layer: Vec<((usize, usize), f64, bool)>,
    /// `(wins, fired)` per reference.
    pub second_layer: Vec<(usize, bool)>,
    /// `(votes, fired)` per digit.
    pub third_layer: [(usize, bool); DIGITS],
    pub decision: Decision,
}

#[derive(Debug, Clone)]
pub struct Network {
    cfg: PhysicalConfig,
    refs: Vec<Reference>,
    zero_layer: Vec<PotentialTable>,
    neurons: Vec<PairNeuron>,
    class_groups: [Vec<usize>; DIGITS],
}

fn check_references(refs: &[Reference]) -> Result<()> {
    for (i, r) in refs.iter().enumerate() {
        if r.digit as usize >= DIGITS {
            return Err(Error::Build(format!("reference {i} has digit {}", r.digit)));
        }
        if let Some(j) = refs[..i].iter().position(|o| o.same_pattern(r)) {
            return Err(Error::DuplicateReference(format!(
                "references {j} and {i} are the same image: {}",
                r.describe()
            )));
        }
    }
    Ok(())
}

fn class_groups(refs: &[Reference]) -> [Vec<usize>; DIGITS] {
    let mut groups: [Vec<usize>; DIGITS] = Default::default();
    for (i, r) in refs.iter().enumerate() {
        groups[r.digit as usize].push(i);
    }
    groups
}

fn make_neuron(
    k: usize,
    k1: usize,
    refs: &[Reference],
    zero_layer: &[PotentialTable],
) -> PairNeuron {
    let weights = WeightTable::difference(&zero_layer[k], &zero_layer[k1]);
    let state_k = weights.dot(&refs[k].image);
    let state_k1 = weights.dot(&refs[k1].image);
    PairNeuron {
        k,
        k1,
        weights,
        wh1: compute_threshold(state_k, state_k1),
    }
}

fn ordered_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |k| (0..n).filter(move |&k1| k1 != k).map(move |k1| (k, k1)))
}

/// Builds all `N(N-1)` pair neurons for `refs`.
pub fn build_network(refs: Vec<Reference>, cfg: &PhysicalConfig) -> Result<Network> {
    cfg.validate()?;
    if refs.len() < 2 {
        return Err(Error::Build(format!(
            "a network needs at least 2 references, got {}",
            refs.len()
        )));
    }
    check_references(&refs)?;

    let kernel = build_kernel(cfg);
    let zero_layer = refs
        .par_iter()
        .map(|r| potential_table_fast(&r.image, &kernel, cfg))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<_> = ordered_pairs(refs.len()).collect();
    let neurons = pairs
        .par_iter()
        .map(|&(k, k1)| make_neuron(k, k1, &refs, &zero_layer))
        .collect();

    Ok(Network {
        cfg: *cfg,
        class_groups: class_groups(&refs),
        refs,
        zero_layer,
        neurons,
    })
}

impl Network {
    /// Reassembles a network from stored parts, checking that the neuron
    /// list is complete and in `(k, k1)` order.
    pub fn from_parts(
        cfg: PhysicalConfig,
        refs: Vec<Reference>,
        neurons: Vec<PairNeuron>,
    ) -> Result<Self> {
        cfg.validate()?;
        if refs.len() < 2 {
            return Err(Error::Build("fewer than 2 references".into()));
        }
        check_references(&refs)?;
        let n = refs.len();
        if neurons.len() != n * (n - 1) {
            return Err(Error::Build(format!(
                "{} references need {} pair neurons, got {}",
                n,
                n * (n - 1),
                neurons.len()
            )));
        }
        for (neuron, (k, k1)) in neurons.iter().zip(ordered_pairs(n)) {
            if (neuron.k, neuron.k1) != (k, k1) {
                return Err(Error::Build(format!(
                    "pair neuron ({}, {}) found where ({k}, {k1}) belongs",
                    neuron.k, neuron.k1
                )));
            }
        }
        let kernel = build_kernel(&cfg);
        let zero_layer = refs
            .iter()
            .map(|r| potential_table_fast(&r.image, &kernel, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            class_groups: class_groups(&refs),
            refs,
            zero_layer,
            neurons,
        })
    }

    pub fn config(&self) -> &PhysicalConfig {
        &self.cfg
    }

    pub fn references(&self) -> &[Reference] {
        &self.refs
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn neurons(&self) -> &[PairNeuron] {
        &self.neurons
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons.len()
    }

    /// B2 = N - 1.
    pub fn second_layer_threshold(&self) -> usize {
        self.refs.len() - 1
    }

    pub fn class_group(&self, digit: u8) -> &[usize] {
        self.class_groups
            .get(digit as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn zero_layer(&self, k: usize) -> &PotentialTable {
        &self.zero_layer[k]
    }

    fn neuron_index(&self, k: usize, k1: usize) -> usize {
        let n = self.refs.len();
        assert!(k < n && k1 < n && k != k1, "no pair neuron ({k}, {k1})");
        k * (n - 1) + if k1 > k { k1 - 1 } else { k1 }
    }

    pub fn neuron(&self, k: usize, k1: usize) -> &PairNeuron {
        &self.neurons[self.neuron_index(k, k1)]
    }

    /// Grows the network by one reference. Existing neurons are carried
    /// over untouched; only the `2N` pairs involving the new reference are
    /// computed.
    pub fn add_reference(&self, reference: Reference) -> Result<Network> {
        let mut refs = self.refs.clone();
        refs.push(reference);
        check_references(&refs)?;
        let new = refs.len() - 1;

        let kernel = build_kernel(&self.cfg);
        let mut zero_layer = self.zero_layer.clone();
        zero_layer.push(potential_table_fast(&refs[new].image, &kernel, &self.cfg)?);

        let pairs: Vec<_> = ordered_pairs(refs.len()).collect();
        let neurons = pairs
            .par_iter()
            .map(|&(k, k1)| {
                if k != new && k1 != new {
                    self.neuron(k, k1).clone()
                } else {
                    make_neuron(k, k1, &refs, &zero_layer)
                }
            })
            .collect();

        Ok(Network {
            cfg: self.cfg,
            class_groups: class_groups(&refs),
            refs,
            zero_layer,
            neurons,
        })
    }

    /// Pairwise win count of reference `k` and whether its second-layer
    /// neuron fires.
    pub fn second_layer(&self, k: usize, x: &BinaryImage) -> (usize, bool) {
        let wins = (0..self.refs.len())
            .filter(|&k1| k1 != k && first_layer_fire(self.neuron(k, k1), x))
            .count();
        (wins, wins >= self.second_layer_threshold())
    }

    /// Second-layer votes for `digit` and whether its third-layer neuron
    /// fires.
    pub fn third_layer(&self, digit: u8, x: &BinaryImage) -> (usize, bool) {
        let votes = self
            .class_group(digit)
            .iter()
            .filter(|&&k| self.second_layer(k, x).1)
            .count();
        (votes, votes > 0)
    }

    /// Full forward pass with every intermediate value.
    pub fn forward(&self, x: &BinaryImage, mode: Mode) -> ForwardTrace {
        let first_layer: Vec<_> = self
            .neurons
            .iter()
            .map(|n| {
                let s = neuron_state(n, x);
                ((n.k, n.k1), s, s + n.wh1 >= 0.0)
            })
            .collect();
        let n = self.refs.len();
        let mut wins = vec![0usize; n];
        for &((k, _), _, fired) in &first_layer {
            wins[k] += fired as usize;
        }
        let b2 = self.second_layer_threshold();
        let second_layer: Vec<_> = wins.iter().map(|&w| (w, w >= b2)).collect();
        let third_layer = std::array::from_fn(|d| {
            let votes = self.class_groups[d]
                .iter()
                .filter(|&&k| second_layer[k].1)
                .count();
            (votes, votes > 0)
        });
        let decision = self.decide(&wins, &third_layer, mode);
        ForwardTrace {
            first_layer,
            second_layer,
            third_layer,
            decision,
        }
    }

    fn decide(&self, wins: &[usize], third: &[(usize, bool); DIGITS], mode: Mode) -> Decision {
        let mut fired = third.iter().enumerate().filter(|(_, t)| t.1).map(|(d, _)| d);
        let strict = match (fired.next(), fired.next()) {
            (Some(d), None) => Decision::Digit(d as u8),
            _ => Decision::Rejected,
        };
        match (strict, mode) {
            (Decision::Rejected, Mode::Argmax) => {
                // max_by_key keeps the last maximum; iterate in reverse so the
                // lowest index wins ties
                let best = (0..wins.len())
                    .rev()
                    .max_by_key(|&k| wins[k])
                    .expect("network has references");
                Decision::Digit(self.refs[best].digit)
            }
            _ => strict,
        }
    }

    fn decide_from_wins(&self, wins: &[usize], mode: Mode) -> Decision {
        let b2 = self.second_layer_threshold();
        let third = std::array::from_fn(|d| {
            let votes = self.class_groups[d].iter().filter(|&&k| wins[k] >= b2).count();
            (votes, votes > 0)
        });
        self.decide(wins, &third, mode)
    }

    /// Pairwise win counts for many inputs at once.
    ///
    /// Walks each unordered pair once: neuron `(k1, k)` has the exactly
    /// negated table and threshold of `(k, k1)`, so its sum is exactly
    /// `-(state + wh1)` and it fires iff `state + wh1 <= 0`. Results equal
    /// those of [`Network::forward`] bit for bit.
    pub fn win_counts(&self, inputs: &[BinaryImage]) -> Vec<Vec<usize>> {
        const CHUNK: usize = 256;
        let n = self.refs.len();
        inputs
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let mut wins = vec![vec![0usize; n]; chunk.len()];
                for k in 0..n {
                    for k1 in k + 1..n {
                        let neuron = self.neuron(k, k1);
                        let w = neuron.weights.values();
                        for (x, row) in chunk.iter().zip(wins.iter_mut()) {
                            let s: f64 = x.indices().iter().map(|&i| w[i as usize]).sum();
                            let v = s + neuron.wh1;
                            row[k] += (v >= 0.0) as usize;
                            row[k1] += (v <= 0.0) as usize;
                        }
                    }
                }
                wins
            })
            .collect()
    }

    /// Classifies many inputs; same decisions as [`classify`] per input.
    pub fn classify_batch(&self, inputs: &[BinaryImage], mode: Mode) -> Vec<Decision> {
        self.win_counts(inputs)
            .iter()
            .map(|w| self.decide_from_wins(w, mode))
            .collect()
    }
}

pub fn classify(net: &Network, x: &BinaryImage, mode: Mode) -> Decision {
    net.forward(x, mode).decision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::pair_weight_table;

    fn blob(r: usize, c: usize, size: usize) -> BinaryImage {
        BinaryImage::from_coords((r..r + size).flat_map(|i| (c..c + size).map(move |j| (i, j))))
            .unwrap()
    }

    fn refs() -> Vec<Reference> {
        vec![
            Reference::new(0, blob(2, 2, 5)),
            Reference::new(1, blob(2, 20, 4)),
            Reference::new(2, blob(20, 2, 6)),
            Reference::new(2, blob(20, 20, 3)),
        ]
    }

    #[test]
    fn thresholds_from_listing() {
        assert_eq!(compute_threshold(132216.0, -79734.0), -26241.0);
        assert_eq!(compute_threshold(-81138.0, -332606.0), 206872.0);
        assert_eq!(compute_threshold(12.5, 12.5), -12.5);
    }

    #[test]
    fn structure_counts() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        assert_eq!(net.neuron_count(), 12);
        assert_eq!(net.second_layer_threshold(), 3);
        assert_eq!(net.class_group(2), &[2, 3]);
        assert!(net.class_group(7).is_empty());
        let n = net.neuron(3, 1);
        assert_eq!((n.k, n.k1), (3, 1));
    }

    #[test]
    fn smallest_network() {
        let cfg = PhysicalConfig::default();
        let net = build_network(refs()[..2].to_vec(), &cfg).unwrap();
        assert_eq!(net.neuron_count(), 2);
        assert!(net.neuron(0, 1).weights.negated().bit_identical(&net.neuron(1, 0).weights));
        assert_eq!(net.neuron(0, 1).wh1, -net.neuron(1, 0).wh1);
    }

    #[test]
    fn build_errors() {
        let cfg = PhysicalConfig::default();
        assert!(matches!(
            build_network(refs()[..1].to_vec(), &cfg),
            Err(Error::Build(_))
        ));
        let mut dup = refs();
        dup.push(Reference::new(1, blob(2, 20, 4)));
        assert!(matches!(
            build_network(dup, &cfg),
            Err(Error::DuplicateReference(_))
        ));
        let net = build_network(refs(), &cfg).unwrap();
        assert!(matches!(
            net.add_reference(Reference::new(0, blob(2, 2, 5))),
            Err(Error::DuplicateReference(_))
        ));
    }

    #[test]
    fn neuron_weights_match_direct_pair_table() {
        let cfg = PhysicalConfig::default();
        let net = build_network(refs(), &cfg).unwrap();
        let r = refs();
        let direct = pair_weight_table(&r[0].image, &r[2].image, &cfg);
        assert!(net.neuron(0, 2).weights.bit_identical(&direct));
    }

    #[test]
    fn references_fire_for_themselves() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        for (k, r) in refs().iter().enumerate() {
            for k1 in 0..4 {
                if k1 != k {
                    assert!(first_layer_fire(net.neuron(k, k1), &r.image));
                    assert!(!first_layer_fire(net.neuron(k1, k), &r.image));
                }
            }
            assert_eq!(net.second_layer(k, &r.image), (3, true));
            assert_eq!(classify(&net, &r.image, Mode::Strict), Decision::Digit(r.digit));
        }
    }

    #[test]
    fn empty_input_state_is_zero() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        assert_eq!(neuron_state(net.neuron(0, 1), &BinaryImage::empty()), 0.0);
        // every state is 0, so each neuron fires iff its wh1 >= 0
        let t = net.forward(&BinaryImage::empty(), Mode::Strict);
        for &((k, k1), s, fired) in &t.first_layer {
            assert_eq!(s, 0.0);
            assert_eq!(fired, net.neuron(k, k1).wh1 >= 0.0);
        }
        let again = net.forward(&BinaryImage::empty(), Mode::Strict);
        assert_eq!(t.decision, again.decision);
    }

    #[test]
    fn third_layer_partition() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        let x = &refs()[3].image;
        let t = net.forward(x, Mode::Strict);
        let fired: Vec<_> = t.second_layer.iter().filter(|s| s.1).collect();
        assert_eq!(fired.len(), 1);
        assert_eq!(t.third_layer.iter().filter(|t| t.1).count(), 1);
        assert_eq!(t.third_layer[2], (1, true));
        for d in 0..DIGITS as u8 {
            let (votes, bit) = net.third_layer(d, x);
            assert!(votes <= net.class_group(d).len());
            assert_eq!((votes, bit), t.third_layer[d as usize]);
        }
    }

    #[test]
    fn add_reference_keeps_old_neurons() {
        let cfg = PhysicalConfig::default();
        let small = build_network(refs()[..3].to_vec(), &cfg).unwrap();
        let grown = small.add_reference(refs()[3].clone()).unwrap();
        assert_eq!(grown.neuron_count(), 12);
        assert_eq!(grown.second_layer_threshold(), 3);
        for n in small.neurons() {
            let m = grown.neuron(n.k, n.k1);
            assert!(m.weights.bit_identical(&n.weights));
            assert_eq!(m.wh1.to_bits(), n.wh1.to_bits());
        }
        let full = build_network(refs(), &cfg).unwrap();
        for (a, b) in full.neurons().iter().zip(grown.neurons()) {
            assert!(a.weights.bit_identical(&b.weights));
            assert_eq!(a.wh1.to_bits(), b.wh1.to_bits());
        }
    }

    #[test]
    fn batch_matches_forward() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        let inputs: Vec<_> = (0..40)
            .map(|s| blob(s % 23, (s * 7) % 23, 1 + s % 5))
            .chain(std::iter::once(BinaryImage::empty()))
            .collect();
        let wins = net.win_counts(&inputs);
        for mode in [Mode::Strict, Mode::Argmax] {
            let batch = net.classify_batch(&inputs, mode);
            for (i, x) in inputs.iter().enumerate() {
                let t = net.forward(x, mode);
                assert_eq!(batch[i], t.decision);
                let w: Vec<_> = t.second_layer.iter().map(|s| s.0).collect();
                assert_eq!(wins[i], w);
            }
        }
    }

    #[test]
    fn argmax_never_rejects() {
        let net = build_network(refs(), &PhysicalConfig::default()).unwrap();
        for s in 0..30 {
            let x = blob(s % 20, (3 * s) % 20, 2 + s % 6);
            assert!(classify(&net, &x, Mode::Argmax).digit().is_some());
        }
    }
}
