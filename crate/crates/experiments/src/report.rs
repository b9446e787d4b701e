//! Per-image layer report: input and energy histograms against the prior,
//! FC Boltzmann distributions and the output posterior.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use boltzlens_core::problens::{layer_kl_report, BinEdges, LayerReport, PriorSpec};
use boltzlens_core::{checkpoint, Network, Scalar};
use boltzlens_synth::dataset::DatasetSplits;

use crate::error::{ExperimentError, Result};

pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const IMAGE_FILE: &str = "image.csv";
pub const ENERGY_FILE: &str = "energy.csv";

/// Report for test image `index` under `net`.
pub fn single_image_report<T: Scalar>(
    net: &Network<T>,
    splits: &DatasetSplits,
    index: usize,
    prior: &PriorSpec,
    edges: &BinEdges,
) -> Result<LayerReport> {
    let sample = splits.test.samples.get(index).ok_or_else(|| ExperimentError::IndexOutOfRange {
        index,
        split: "test".into(),
        len: splits.test.len(),
    })?;
    Ok(layer_kl_report(net, &sample.input::<T>(), prior, edges)?)
}

pub fn report_from_checkpoint(
    checkpoint_path: &Path,
    splits: &DatasetSplits,
    index: usize,
    prior: &PriorSpec,
    edges: &BinEdges,
) -> Result<LayerReport> {
    let net: Network<f64> = checkpoint::load(checkpoint_path)?;
    single_image_report(&net, splits, index, prior, edges)
}

/// `row,col,value` for the input image.
pub fn image_csv(report: &LayerReport) -> String {
    let shape = report.input.shape();
    let (h, w) = (shape[0], shape[1]);
    let c = report.input.len() / (h * w);
    let mut s = String::from("row,col,value\n");
    for r in 0..h {
        for col in 0..w {
            let _ = writeln!(s, "{r},{col},{}", report.input.data()[(r * w + col) * c]);
        }
    }
    s
}

/// `layer,row,col,energy` for every conv-layer energy map.
pub fn energy_csv(report: &LayerReport) -> String {
    let mut s = String::from("layer,row,col,energy\n");
    for p in &report.panels {
        if let Some(e) = &p.energy {
            let w = e.values.shape()[1];
            for (i, v) in e.values.data().iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{v}", p.name, i / w, i % w);
            }
        }
    }
    s
}

pub fn write_report(dir: &Path, report: &LayerReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(DISTRIBUTIONS_FILE), report.distributions_csv())?;
    fs::write(dir.join(SUMMARY_FILE), report.summary_csv())?;
    fs::write(dir.join(IMAGE_FILE), image_csv(report))?;
    fs::write(dir.join(ENERGY_FILE), energy_csv(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use boltzlens_core::{init_params, Preset};
    use boltzlens_synth::glyphs::render_corpus;
    use boltzlens_synth::{generate_dataset, DatasetOptions};

    fn splits() -> DatasetSplits {
        generate_dataset(&render_corpus(2, 1), &DatasetOptions::with_counts(1, 1, 3)).unwrap()
    }

    #[test]
    fn report_panels_and_files() {
        let ds = splits();
        let net = init_params::<f64>(&Preset::Cnn2.spec(), 2).unwrap();
        let edges = BinEdges::default_for(&PriorSpec::default());
        let rep = single_image_report(&net, &ds, 4, &PriorSpec::default(), &edges).unwrap();
        let names: Vec<&str> = rep.panels.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["x", "F1", "F2", "F3", "FY"]);
        assert!((rep.panel("FY").unwrap().total_mass() - 1.0).abs() < 1e-12);
        assert!(rep.panel("x").unwrap().kl.is_some() && rep.panel("F1").unwrap().kl.is_some());

        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &rep).unwrap();
        let again = single_image_report(&net, &ds, 4, &PriorSpec::default(), &edges).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap(), again.summary_csv());
        assert_eq!(image_csv(&rep).lines().count(), 1 + 1024);
        assert_eq!(energy_csv(&rep).lines().count(), 1 + 30 * 30 + 11 * 11);
    }

    #[test]
    fn index_out_of_range() {
        let ds = splits();
        let net = init_params::<f64>(&Preset::Cnn1.spec(), 2).unwrap();
        let edges = BinEdges::default_for(&PriorSpec::default());
        let err = single_image_report(&net, &ds, 10, &PriorSpec::default(), &edges).unwrap_err();
        assert!(matches!(err, ExperimentError::IndexOutOfRange { index: 10, len: 10, .. }));
    }
}
