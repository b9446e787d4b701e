//! The network as a serial chain of conditional distributions
//! `P(F1|X) → P(F2|F1) → … → P(FY|F_last)`.

use crate::error::{CoreError, Result};
use crate::network::{forward_with_trace, Network};
use crate::problens::{conv_energy, empirical_distribution, fc_boltzmann, layer_groups, BinEdges, DiscreteBoltzmann, EmpiricalDistribution, EnergyMap};
use crate::scalar::Scalar;
use crate::spec::Stage;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum FactorSummary {
    /// Conv group: energy map of the group's conv layer and its histogram.
    Mrf {
        energy: EnergyMap,
        histogram: EmpiricalDistribution,
    },
    Boltzmann(DiscreteBoltzmann),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainFactor {
    pub name: String,
    /// Trace entries fused into this random variable.
    pub layers: Vec<usize>,
    /// Index of the conditioning factor; `None` for the first (conditioned on the input).
    pub parent: Option<usize>,
    pub summary: FactorSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDecomposition {
    pub factors: Vec<ChainFactor>,
}

impl ChainDecomposition {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Every factor conditions on exactly its predecessor.
    pub fn is_path(&self) -> bool {
        self.factors
            .iter()
            .enumerate()
            .all(|(i, f)| f.parent == i.checked_sub(1))
    }
}

/// One factor per random-variable group: each conv absorbs the pooling that
/// follows it, each FC layer stands alone.
pub fn decompose<T: Scalar>(net: &Network<T>, x: &Tensor<T>, edges: &BinEdges) -> Result<ChainDecomposition> {
    let (_, trace) = forward_with_trace(net, x)?;
    let stages: Vec<Stage> = trace.entries.iter().map(|e| e.stage).collect();
    let groups = layer_groups(&stages);
    if groups.last().map(|g| g.0.as_str()) != Some("FY") {
        return Err(CoreError::Spec("network has no output layer to close the chain".into()));
    }
    let mut factors = Vec::with_capacity(groups.len());
    for (i, (name, layers)) in groups.into_iter().enumerate() {
        let head = layers[0];
        let summary = match stages[head] {
            Stage::Conv { .. } => {
                let energy = conv_energy(&trace, head)?;
                let histogram = empirical_distribution(energy.values.data(), edges)?;
                FactorSummary::Mrf { energy, histogram }
            }
            Stage::Fc { .. } => FactorSummary::Boltzmann(fc_boltzmann(&trace, head)?),
            Stage::MaxPool { .. } => {
                return Err(CoreError::Spec(format!("group {name} starts with pooling and has no potential")));
            }
        };
        factors.push(ChainFactor {
            name,
            layers,
            parent: i.checked_sub(1),
            summary,
        });
    }
    Ok(ChainDecomposition { factors })
}

/// `P(FY | X)` after eliminating every intermediate variable.
///
/// Each intermediate conditional integrates to one over its own variable,
/// so the elimination leaves exactly the last factor.
pub fn posterior_via_elimination(chain: &ChainDecomposition) -> Result<Tensor<f64>> {
    match chain.factors.last().map(|f| &f.summary) {
        Some(FactorSummary::Boltzmann(d)) => Ok(Tensor::from_vec(d.probs.clone())),
        _ => Err(CoreError::Spec("chain does not end in a discrete output factor".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorCheck {
    pub name: String,
    pub total_mass: f64,
    pub passed: bool,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Checks that every factor sums to one (histograms include their
/// out-of-range mass).
pub fn factor_normalization_check(chain: &ChainDecomposition) -> Vec<FactorCheck> {
    chain
        .factors
        .iter()
        .map(|f| {
            let total_mass = match &f.summary {
                FactorSummary::Mrf { histogram, .. } => histogram.total_mass(),
                FactorSummary::Boltzmann(d) => d.total(),
            };
            FactorCheck {
                name: f.name.clone(),
                total_mass,
                passed: (total_mass - 1.0).abs() <= NORMALIZATION_TOLERANCE,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Layer};
    use crate::problens::PriorSpec;
    use crate::rng::{seeded, BoxMuller};
    use crate::spec::{NetworkSpec, Preset};

    fn image(seed: u64, shape: &[usize]) -> Tensor<f64> {
        let mut rng = seeded(seed);
        let mut g = BoxMuller::new(0.0, 32.0);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), g.sample_n(&mut rng, n)).unwrap()
    }

    fn edges() -> BinEdges {
        BinEdges::default_for(&PriorSpec::default())
    }

    #[test]
    fn cnn2_has_four_factors_in_a_path() {
        let net = init_params::<f64>(&Preset::Cnn2.spec(), 1).unwrap();
        let chain = decompose(&net, &image(1, &[32, 32, 1]), &edges()).unwrap();
        let names: Vec<&str> = chain.factors.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["F1", "F2", "F3", "FY"]);
        assert_eq!(chain.factors[0].layers, vec![0, 1]);
        assert_eq!(chain.factors[1].layers, vec![2, 3]);
        assert!(chain.is_path());
        let again = decompose(&net, &image(1, &[32, 32, 1]), &edges()).unwrap();
        assert_eq!(chain, again);
    }

    #[test]
    fn posterior_equals_forward_softmax() {
        let net = init_params::<f64>(&Preset::Cnn1.spec(), 2).unwrap();
        for s in 0..10 {
            let x = image(100 + s, &[32, 32, 1]);
            let chain = decompose(&net, &x, &edges()).unwrap();
            let post = posterior_via_elimination(&chain).unwrap();
            let (probs, _) = forward_with_trace(&net, &x).unwrap();
            assert_eq!(post.data(), probs.data());
            assert!((post.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_output_units_permutes_posterior() {
        let spec = NetworkSpec::tiny();
        let net = init_params::<f64>(&spec, 3).unwrap();
        let perm = [3usize, 0, 7, 1, 6, 2, 5, 4];
        let mut permuted = net.clone();
        let last = permuted.layers().len() - 1;
        if let (Layer::Fc { params: src, .. }, Layer::Fc { params: dst, .. }) = (&net.layers()[last], &mut permuted.layers_mut()[last]) {
            let n_in = src.inputs();
            for (new, &old) in perm.iter().enumerate() {
                dst.bias.data_mut()[new] = src.bias.data()[old];
                for r in 0..n_in {
                    dst.weights.data_mut()[r * 8 + new] = src.weights.data()[r * 8 + old];
                }
            }
        }
        let x = image(4, &[12, 12, 1]);
        let a = posterior_via_elimination(&decompose(&net, &x, &edges()).unwrap()).unwrap();
        let b = posterior_via_elimination(&decompose(&permuted, &x, &edges()).unwrap()).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert!((b.data()[new] - a.data()[old]).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_checks() {
        let zero = Network::<f64>::zeros(&Preset::Cnn2.spec()).unwrap();
        let chain = decompose(&zero, &image(5, &[32, 32, 1]), &edges()).unwrap();
        assert!(factor_normalization_check(&chain).iter().all(|c| c.passed));

        let net = init_params::<f64>(&Preset::Cnn2.spec(), 5).unwrap();
        let mut chain = decompose(&net, &image(5, &[32, 32, 1]), &edges()).unwrap();
        assert!(factor_normalization_check(&chain).iter().all(|c| c.passed));
        if let FactorSummary::Boltzmann(d) = &mut chain.factors[2].summary {
            for p in &mut d.probs {
                *p *= 1.5;
            }
        }
        let checks = factor_normalization_check(&chain);
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["F3"]);
    }

    #[test]
    fn fc_summary_depends_only_on_trace() {
        let net = init_params::<f64>(&Preset::Cnn3.spec(), 6).unwrap();
        let (_, trace) = forward_with_trace(&net, &image(6, &[32, 32, 1])).unwrap();
        let cloned = trace.clone();
        assert_eq!(fc_boltzmann(&trace, 4).unwrap(), fc_boltzmann(&cloned, 4).unwrap());
    }
}
