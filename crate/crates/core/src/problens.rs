//! Reading hidden layers as Boltzmann distributions.
//!
//! A convolutional layer is summarised by its energy map, the negated sum of
//! its linear channels at each pixel, and estimated through a histogram of
//! those energies. A fully connected layer is a discrete Boltzmann
//! distribution whose energies are the negated activations.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CoreError, Result};
use crate::layers::softmax_slice;
use crate::network::{forward_with_trace, LayerTrace, Network};
use crate::scalar::Scalar;
use crate::spec::Stage;
use crate::tensor::Tensor;

/// Added to empty empirical bins before taking logs in [`kl_divergence`].
pub const KL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    ConvMrf,
    FcBoltzmann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    /// `[H, W]`
    pub values: Tensor<f64>,
    pub layer: usize,
    pub kind: EnergyKind,
}

/// `E[p] = -Σ_n pre_n[p]` over the channels of a conv layer's linear output.
pub fn conv_energy<T: Scalar>(trace: &LayerTrace<T>, layer: usize) -> Result<EnergyMap> {
    let entry = trace.entries.get(layer).ok_or(CoreError::WrongLayerKind {
        layer,
        expected: "convolutional",
    })?;
    if !matches!(entry.stage, Stage::Conv { .. }) {
        return Err(CoreError::WrongLayerKind {
            layer,
            expected: "convolutional",
        });
    }
    let pre = &entry.pre_activation;
    let (h, w, c) = (pre.shape()[0], pre.shape()[1], pre.shape()[2]);
    let values: Vec<f64> = pre
        .data()
        .chunks_exact(c)
        .map(|px| -px.iter().map(|v| v.to_f64_lossy()).sum::<f64>())
        .collect();
    Ok(EnergyMap {
        values: Tensor::new(vec![h, w], values)?,
        layer,
        kind: EnergyKind::ConvMrf,
    })
}

/// Discrete Boltzmann distribution `p_k = exp(-E_k) / Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBoltzmann {
    pub energies: Vec<f64>,
    pub probs: Vec<f64>,
    /// `Z = Σ exp(-E_k)`; may overflow to infinity for large activations.
    pub partition: f64,
    /// `ln Z`, always finite for finite energies.
    pub log_partition: f64,
}

impl DiscreteBoltzmann {
    pub fn from_energies(energies: Vec<f64>) -> Self {
        let neg: Vec<f64> = energies.iter().map(|e| -e).collect();
        let probs = softmax_slice(&neg);
        let max = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_partition = max + neg.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        DiscreteBoltzmann {
            energies,
            probs,
            partition: log_partition.exp(),
            log_partition,
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Boltzmann view of a fully connected layer: energies are the negated activations.
pub fn fc_boltzmann<T: Scalar>(trace: &LayerTrace<T>, layer: usize) -> Result<DiscreteBoltzmann> {
    let entry = trace.entries.get(layer).ok_or(CoreError::WrongLayerKind {
        layer,
        expected: "fully connected",
    })?;
    if !matches!(entry.stage, Stage::Fc { .. }) {
        return Err(CoreError::WrongLayerKind {
            layer,
            expected: "fully connected",
        });
    }
    // Probabilities go through the same softmax as the network output so the
    // final layer reproduces it exactly.
    let probs = softmax_slice(entry.activation.data());
    let acts: Vec<f64> = entry.activation.data().iter().map(|v| v.to_f64_lossy()).collect();
    let mut d = DiscreteBoltzmann::from_energies(acts.iter().map(|a| -a).collect());
    d.probs = probs.into_iter().map(|p| p.to_f64_lossy()).collect();
    Ok(d)
}

/// Strictly increasing histogram edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(CoreError::invalid("bin edges", "need at least two edges"));
        }
        if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::invalid("bin edges", "edges must be strictly increasing"));
        }
        Ok(BinEdges(edges))
    }

    /// `bins` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(CoreError::invalid("bin edges", format!("bad uniform range [{lo}, {hi}] x {bins}")));
        }
        let w = (hi - lo) / bins as f64;
        let mut e: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
        e.push(hi);
        BinEdges::new(e)
    }

    /// 100 bins over `[-4σ, 4σ]` of the prior.
    pub fn default_for(prior: &PriorSpec) -> Self {
        let s = prior.std_dev();
        BinEdges::uniform(prior.mean - 4.0 * s, prior.mean + 4.0 * s, 100).expect("valid default edges")
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn bins(&self) -> usize {
        self.0.len() - 1
    }

    /// Bin index for `v`; bins are `[B_i, B_i+1)` except the last, which is closed.
    pub fn locate(&self, v: f64) -> Option<usize> {
        let e = &self.0;
        let last = *e.last().unwrap();
        if !(v >= e[0] && v <= last) {
            return None;
        }
        if v == last {
            return Some(e.len() - 2);
        }
        Some(e.partition_point(|&b| b <= v) - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub edges: BinEdges,
    pub probs: Vec<f64>,
    pub out_of_range_count: usize,
    pub total: usize,
    /// Mass outside the edges; equals `out_of_range_count / total` for
    /// histograms and the Gaussian tail mass for a discretised prior.
    pub out_of_range_mass: f64,
}

impl EmpiricalDistribution {
    pub fn in_range_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.in_range_mass() + self.out_of_range_mass
    }

    /// `(bin_left, bin_right, prob)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.edges.0.windows(2).zip(&self.probs).map(|(w, &p)| (w[0], w[1], p))
    }
}

pub fn empirical_distribution(values: &[f64], edges: &BinEdges) -> Result<EmpiricalDistribution> {
    if values.is_empty() {
        return Err(CoreError::invalid("empirical_distribution", "no values to histogram"));
    }
    let mut counts = vec![0usize; edges.bins()];
    let mut outside = 0usize;
    for &v in values {
        match edges.locate(v) {
            Some(i) => counts[i] += 1,
            None => outside += 1,
        }
    }
    let n = values.len() as f64;
    Ok(EmpiricalDistribution {
        edges: edges.clone(),
        probs: counts.iter().map(|&c| c as f64 / n).collect(),
        out_of_range_count: outside,
        total: values.len(),
        out_of_range_mass: outside as f64 / n,
    })
}

/// Gaussian prior over inputs, `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub mean: f64,
    pub variance: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            mean: 0.0,
            variance: 1024.0,
        }
    }
}

impl PriorSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(CoreError::invalid("prior", format!("variance must be positive, got {variance}")));
        }
        Ok(PriorSpec { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        Normal::new(self.mean, self.std_dev()).expect("validated prior").cdf(x)
    }
}

/// Bin masses of the prior; tail mass beyond the outer edges goes to `out_of_range_mass`.
pub fn discretize_prior(prior: &PriorSpec, edges: &BinEdges) -> EmpiricalDistribution {
    let cdfs: Vec<f64> = edges.0.iter().map(|&e| prior.cdf(e)).collect();
    let probs: Vec<f64> = cdfs.windows(2).map(|w| w[1] - w[0]).collect();
    let inside: f64 = probs.iter().sum();
    EmpiricalDistribution {
        edges: edges.clone(),
        probs,
        out_of_range_count: 0,
        total: 0,
        out_of_range_mass: (1.0 - inside).max(0.0),
    }
}

/// `KL[p || q] = Σ p_i ln(p_i / q_i)` over the shared bins plus one
/// out-of-range bin. Empty `q` bins under positive `p` mass receive
/// [`KL_EPSILON`] and `q` is renormalised before the sum.
pub fn kl_divergence(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    if p.edges != q.edges {
        return Err(CoreError::EdgeMismatch);
    }
    let pv: Vec<f64> = p.probs.iter().copied().chain([p.out_of_range_mass]).collect();
    let mut qv: Vec<f64> = q.probs.iter().copied().chain([q.out_of_range_mass]).collect();
    for (v, &pi) in qv.iter_mut().zip(&pv) {
        if *v <= 0.0 && pi > 0.0 {
            *v = KL_EPSILON;
        }
    }
    let qz: f64 = qv.iter().sum();
    let pz: f64 = pv.iter().sum();
    let kl: f64 = pv
        .iter()
        .zip(&qv)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            let pi = pi / pz;
            pi * (pi / (qi / qz)).ln()
        })
        .sum();
    Ok(kl.max(0.0))
}

/// One panel of a per-image layer report.
#[derive(Debug, Clone, PartialEq)]
pub enum PanelData {
    Histogram(EmpiricalDistribution),
    Boltzmann(DiscreteBoltzmann),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Short identifier used in CSV output (`x`, `F1`, `F2`, `F3`, `FY`).
    pub name: String,
    /// Trace entry the panel was computed from (`None` for the input image).
    pub layer: Option<usize>,
    pub data: PanelData,
    /// `KL[prior || panel]` for panels that are comparable with the prior.
    pub kl: Option<f64>,
    pub energy: Option<EnergyMap>,
}

impl Panel {
    pub fn total_mass(&self) -> f64 {
        match &self.data {
            PanelData::Histogram(h) => h.total_mass(),
            PanelData::Boltzmann(b) => b.total(),
        }
    }

    pub fn partition(&self) -> Option<f64> {
        match &self.data {
            PanelData::Boltzmann(b) => Some(b.partition),
            PanelData::Histogram(_) => None,
        }
    }
}

/// Per-layer distribution summary for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub input: Tensor<f64>,
    pub prior: EmpiricalDistribution,
    pub panels: Vec<Panel>,
    pub output_probs: Vec<f64>,
}

impl LayerReport {
    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }

    /// `layer,binLeft,binRight,prob` rows. Boltzmann panels use unit-width
    /// bins centred on the unit index.
    pub fn distributions_csv(&self) -> String {
        let mut s = String::from("layer,binLeft,binRight,prob\n");
        for (l, r, p) in self.prior.rows() {
            let _ = writeln!(s, "prior,{l},{r},{p}");
        }
        for panel in &self.panels {
            match &panel.data {
                PanelData::Histogram(h) => {
                    for (l, r, p) in h.rows() {
                        let _ = writeln!(s, "{},{l},{r},{p}", panel.name);
                    }
                }
                PanelData::Boltzmann(b) => {
                    for (k, p) in b.probs.iter().enumerate() {
                        let _ = writeln!(s, "{},{},{},{p}", panel.name, k as f64 - 0.5, k as f64 + 0.5);
                    }
                }
            }
        }
        s
    }

    /// `layer,kl,partitionZ` rows; absent values are left empty.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("layer,kl,partitionZ\n");
        for panel in &self.panels {
            let kl = panel.kl.map(|v| v.to_string()).unwrap_or_default();
            let z = panel.partition().map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{kl},{z}", panel.name);
        }
        s
    }
}

/// Conv layers grouped with the pooling that follows them, then FC layers,
/// as `(name, trace entry index)` pairs: F1, F2, ... for conv groups,
/// F{k} for hidden FC layers and FY for the output.
pub fn layer_groups(stages: &[Stage]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let fc_count = stages.iter().filter(|s| matches!(s, Stage::Fc { .. })).count();
    let mut fc_seen = 0;
    for (i, st) in stages.iter().enumerate() {
        match st {
            Stage::Conv { .. } => {
                groups.push((format!("F{}", groups.len() + 1), vec![i]));
            }
            Stage::MaxPool { .. } => match groups.last_mut() {
                Some(g) if g.0 != "FY" => g.1.push(i),
                _ => groups.push((format!("F{}", groups.len() + 1), vec![i])),
            },
            Stage::Fc { .. } => {
                fc_seen += 1;
                let name = if fc_seen == fc_count {
                    "FY".to_string()
                } else {
                    format!("F{}", groups.len() + 1)
                };
                groups.push((name, vec![i]));
            }
        }
    }
    groups
}

/// Input histogram, conv energy histograms and FC Boltzmann distributions
/// for one input. KL against the prior is attached to the input panel and
/// the first conv group only.
pub fn layer_kl_report<T: Scalar>(net: &Network<T>, x: &Tensor<T>, prior: &PriorSpec, edges: &BinEdges) -> Result<LayerReport> {
    let (probs, trace) = forward_with_trace(net, x)?;
    layer_kl_report_from_trace(&trace, &probs, prior, edges)
}

pub fn layer_kl_report_from_trace<T: Scalar>(
    trace: &LayerTrace<T>,
    probs: &Tensor<T>,
    prior: &PriorSpec,
    edges: &BinEdges,
) -> Result<LayerReport> {
    let prior_hist = discretize_prior(prior, edges);
    let input = trace.input.cast::<f64>();
    let input_hist = empirical_distribution(input.data(), edges)?;
    let mut panels = vec![Panel {
        name: "x".into(),
        layer: None,
        kl: Some(kl_divergence(&prior_hist, &input_hist)?),
        data: PanelData::Histogram(input_hist),
        energy: None,
    }];
    let stages: Vec<Stage> = trace.entries.iter().map(|e| e.stage).collect();
    for (gi, (name, members)) in layer_groups(&stages).into_iter().enumerate() {
        let head = members[0];
        match stages[head] {
            Stage::Conv { .. } => {
                let energy = conv_energy(trace, head)?;
                let hist = empirical_distribution(energy.values.data(), edges)?;
                let kl = if gi == 0 { Some(kl_divergence(&prior_hist, &hist)?) } else { None };
                panels.push(Panel {
                    name,
                    layer: Some(head),
                    data: PanelData::Histogram(hist),
                    kl,
                    energy: Some(energy),
                });
            }
            Stage::Fc { .. } => panels.push(Panel {
                name,
                layer: Some(head),
                data: PanelData::Boltzmann(fc_boltzmann(trace, head)?),
                kl: None,
                energy: None,
            }),
            Stage::MaxPool { .. } => {}
        }
    }
    Ok(LayerReport {
        input,
        prior: prior_hist,
        panels,
        output_probs: probs.to_f64_vec(),
    })
}

/// `KL[prior || histogram of the first conv layer's energy]` for one input.
///
/// Only the first conv layer is evaluated, so this is much cheaper than a
/// full report.
pub fn first_layer_kl<T: Scalar>(net: &Network<T>, x: &Tensor<T>, prior_hist: &EmpiricalDistribution) -> Result<f64> {
    use crate::layers::conv2d_im2col;
    use crate::network::Layer;
    let params = match net.layers().first() {
        Some(Layer::Conv { params, .. }) => params,
        _ => {
            return Err(CoreError::WrongLayerKind {
                layer: 0,
                expected: "convolutional",
            })
        }
    };
    let pre = conv2d_im2col(x, params)?;
    let c = params.out_channels();
    let energies: Vec<f64> = pre
        .data()
        .chunks_exact(c)
        .map(|px| -px.iter().map(|v| v.to_f64_lossy()).sum::<f64>())
        .collect();
    let hist = empirical_distribution(&energies, &prior_hist.edges)?;
    kl_divergence(prior_hist, &hist)
}
