//! Declarative network descriptions and the three preset architectures.

use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { kernel: usize, out_channels: usize },
    Relu,
    MaxPool { window: usize },
    Flatten,
    Fc { out: usize },
    Softmax,
}

/// A layer that owns state in a built network. ReLU is fused into the
/// preceding parametric layer; flatten is implicit in `Fc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Conv { kernel: usize, out_channels: usize, relu: bool },
    MaxPool { window: usize },
    Fc { out: usize, relu: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// One shape-annotated stage of a validated spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    pub stage: Stage,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input_shape, layers };
        spec.plan()?;
        Ok(spec)
    }

    /// Walks the layer list, fuses ReLUs, and checks the shape chain.
    pub fn plan(&self) -> Result<Vec<StagePlan>> {
        if self.input_shape.contains(&0) {
            return Err(CoreError::Spec("input shape has a zero dimension".into()));
        }
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        let mut plans: Vec<StagePlan> = Vec::new();
        let mut flattened = false;
        let mut saw_softmax = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if saw_softmax {
                return Err(CoreError::Spec(format!("layer {i} follows the softmax output")));
            }
            match *layer {
                LayerSpec::Conv { kernel, out_channels } => {
                    if flattened || shape.len() != 3 {
                        return Err(CoreError::Spec(format!("conv at layer {i} needs a spatial input")));
                    }
                    if kernel == 0 || out_channels == 0 || kernel > shape[0] || kernel > shape[1] {
                        return Err(CoreError::Spec(format!(
                            "conv {kernel}x{kernel} at layer {i} does not fit input {shape:?}"
                        )));
                    }
                    let out = vec![shape[0] - kernel + 1, shape[1] - kernel + 1, out_channels];
                    plans.push(StagePlan {
                        stage: Stage::Conv { kernel, out_channels, relu: false },
                        input_shape: shape.clone(),
                        output_shape: out.clone(),
                    });
                    shape = out;
                }
                LayerSpec::MaxPool { window } => {
                    if flattened || shape.len() != 3 {
                        return Err(CoreError::Spec(format!("maxpool at layer {i} needs a spatial input")));
                    }
                    if window == 0 || shape[0] < window || shape[1] < window {
                        return Err(CoreError::Spec(format!("maxpool window {window} at layer {i} too large")));
                    }
                    let out = vec![shape[0] / window, shape[1] / window, shape[2]];
                    plans.push(StagePlan {
                        stage: Stage::MaxPool { window },
                        input_shape: shape.clone(),
                        output_shape: out.clone(),
                    });
                    shape = out;
                }
                LayerSpec::Relu => match plans.last_mut() {
                    Some(StagePlan { stage: Stage::Conv { relu, .. }, .. })
                    | Some(StagePlan { stage: Stage::Fc { relu, .. }, .. })
                        if !*relu =>
                    {
                        *relu = true;
                    }
                    _ => {
                        return Err(CoreError::Spec(format!(
                            "relu at layer {i} must directly follow a conv or fc layer"
                        )))
                    }
                },
                LayerSpec::Flatten => {
                    flattened = true;
                    shape = vec![shape.iter().product()];
                }
                LayerSpec::Fc { out } => {
                    if out == 0 {
                        return Err(CoreError::Spec(format!("fc at layer {i} has zero outputs")));
                    }
                    let input = vec![shape.iter().product()];
                    plans.push(StagePlan {
                        stage: Stage::Fc { out, relu: false },
                        input_shape: input,
                        output_shape: vec![out],
                    });
                    flattened = true;
                    shape = vec![out];
                }
                LayerSpec::Softmax => {
                    match plans.last() {
                        Some(StagePlan { stage: Stage::Fc { relu: false, .. }, .. }) => {}
                        _ => {
                            return Err(CoreError::Spec(
                                "softmax must directly follow a linear fc output layer".into(),
                            ))
                        }
                    }
                    saw_softmax = true;
                }
            }
        }
        if !saw_softmax {
            return Err(CoreError::Spec("network must end with a softmax output".into()));
        }
        Ok(plans)
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.plan().map(|p| p.into_iter().map(|s| s.stage).collect()).unwrap_or_default()
    }

    pub fn num_classes(&self) -> usize {
        match self.stages().last() {
            Some(Stage::Fc { out, .. }) => *out,
            _ => 0,
        }
    }

    /// Table-1 style architecture with `first_channels` filters in the first conv.
    pub fn synthetic_cnn(first_channels: usize) -> Self {
        use LayerSpec::*;
        NetworkSpec {
            input_shape: [32, 32, 1],
            layers: vec![
                Conv { kernel: 3, out_channels: first_channels },
                Relu,
                MaxPool { window: 2 },
                Conv { kernel: 5, out_channels: 20 },
                Relu,
                MaxPool { window: 2 },
                Flatten,
                Fc { out: 20 },
                Relu,
                Fc { out: 10 },
                Softmax,
            ],
        }
    }

    /// Every layer type at toy scale: 12×12×1 → conv3 ×2 → pool → conv3 ×2 → pool(floor) → fc 8.
    pub fn tiny() -> Self {
        use LayerSpec::*;
        NetworkSpec {
            input_shape: [12, 12, 1],
            layers: vec![
                Conv { kernel: 3, out_channels: 2 },
                Relu,
                MaxPool { window: 2 },
                Conv { kernel: 3, out_channels: 2 },
                Relu,
                MaxPool { window: 2 },
                Flatten,
                Fc { out: 8 },
                Softmax,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Cnn1,
    Cnn2,
    Cnn3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Cnn1, Preset::Cnn2, Preset::Cnn3];

    pub fn first_conv_channels(self) -> usize {
        match self {
            Preset::Cnn1 => 4,
            Preset::Cnn2 => 12,
            Preset::Cnn3 => 20,
        }
    }

    pub fn spec(self) -> NetworkSpec {
        NetworkSpec::synthetic_cnn(self.first_conv_channels())
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cnn1 => "cnn1",
            Preset::Cnn2 => "cnn2",
            Preset::Cnn3 => "cnn3",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn1" => Ok(Preset::Cnn1),
            "cnn2" => Ok(Preset::Cnn2),
            "cnn3" => Ok(Preset::Cnn3),
            other => Err(format!("unknown preset '{other}' (expected cnn1, cnn2 or cnn3)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_reproduce_table_shapes() {
        for (preset, n) in [(Preset::Cnn1, 4), (Preset::Cnn2, 12), (Preset::Cnn3, 20)] {
            let plan = preset.spec().plan().unwrap();
            let outs: Vec<Vec<usize>> = plan.iter().map(|p| p.output_shape.clone()).collect();
            assert_eq!(
                outs,
                vec![
                    vec![30, 30, n],
                    vec![15, 15, n],
                    vec![11, 11, 20],
                    vec![5, 5, 20],
                    vec![20],
                    vec![10],
                ]
            );
            assert_eq!(preset.spec().num_classes(), 10);
        }
    }

    #[test]
    fn relu_fuses_into_previous_stage() {
        let stages = Preset::Cnn2.spec().stages();
        assert_eq!(stages[0], Stage::Conv { kernel: 3, out_channels: 12, relu: true });
        assert_eq!(stages[4], Stage::Fc { out: 20, relu: true });
        assert_eq!(stages[5], Stage::Fc { out: 10, relu: false });
    }

    #[test]
    fn rejects_broken_chains() {
        use LayerSpec::*;
        assert!(NetworkSpec::new([8, 8, 1], vec![Conv { kernel: 9, out_channels: 1 }, Flatten, Fc { out: 2 }, Softmax]).is_err());
        assert!(NetworkSpec::new([8, 8, 1], vec![Relu, Fc { out: 2 }, Softmax]).is_err());
        assert!(NetworkSpec::new([8, 8, 1], vec![Fc { out: 2 }]).is_err());
        assert!(NetworkSpec::new([8, 8, 1], vec![Fc { out: 2 }, Relu, Softmax]).is_err());
        assert!(NetworkSpec::new([8, 8, 1], vec![Flatten, Conv { kernel: 3, out_channels: 1 }, Fc { out: 2 }, Softmax]).is_err());
        assert!(NetworkSpec::new([8, 8, 1], vec![Fc { out: 2 }, Softmax]).is_ok());
    }

    #[test]
    fn tiny_uses_floor_pooling() {
        let plan = NetworkSpec::tiny().plan().unwrap();
        assert_eq!(plan[1].output_shape, vec![5, 5, 2]);
        assert_eq!(plan[2].output_shape, vec![3, 3, 2]);
        assert_eq!(plan[3].output_shape, vec![1, 1, 2]);
    }

    #[test]
    fn preset_parse() {
        assert_eq!("CNN3".parse::<Preset>().unwrap(), Preset::Cnn3);
        assert!("cnn4".parse::<Preset>().is_err());
    }
}
