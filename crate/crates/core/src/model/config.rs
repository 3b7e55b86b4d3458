use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::conv_output_extent;
use crate::model::{POOL_STRIDE, POOL_WINDOW};

/// Architectural hyperparameters of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    /// Chips are square, `input_size × input_size` pixels.
    pub input_size: usize,
    pub conv_widths: [usize; 3],
    pub kernel_sizes: [usize; 3],
    pub strides: [usize; 3],
    pub paddings: [usize; 3],
    pub dropout_p: f64,
    pub num_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 3,
            input_size: 80,
            conv_widths: [16, 32, 64],
            kernel_sizes: [5, 3, 3],
            strides: [1, 1, 1],
            paddings: [2, 1, 1],
            dropout_p: 0.5,
            num_classes: 2,
        }
    }
}

pub(crate) const CONFIG_KEYS: [&str; 8] = [
    "input_channels",
    "input_size",
    "conv_widths",
    "kernel_sizes",
    "strides",
    "paddings",
    "dropout_p",
    "num_classes",
];

impl NetworkConfig {
    /// Spatial extents after Conv1, Pool1, Conv2, Pool2 and Conv3.
    pub fn spatial_extents(&self) -> Result<[usize; 5]> {
        let [k1, k2, k3] = self.kernel_sizes;
        let [s1, s2, s3] = self.strides;
        let [p1, p2, p3] = self.paddings;
        let fail = |stage: &str| {
            Error::Config(format!("input size {} leaves no pixels after {stage}", self.input_size))
        };
        let c1 = conv_output_extent(self.input_size, k1, s1, p1).ok_or_else(|| fail("conv1"))?;
        let q1 = conv_output_extent(c1, POOL_WINDOW, POOL_STRIDE, 0).ok_or_else(|| fail("pool1"))?;
        let c2 = conv_output_extent(q1, k2, s2, p2).ok_or_else(|| fail("conv2"))?;
        let q2 = conv_output_extent(c2, POOL_WINDOW, POOL_STRIDE, 0).ok_or_else(|| fail("pool2"))?;
        let c3 = conv_output_extent(q2, k3, s3, p3).ok_or_else(|| fail("conv3"))?;
        Ok([c1, q1, c2, q2, c3])
    }

    /// Side length of the Conv3 feature maps.
    pub fn feature_size(&self) -> Result<usize> {
        Ok(self.spatial_extents()?[4])
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 2 {
            return Err(Error::Config(format!("num_classes must be 2, got {}", self.num_classes)));
        }
        if self.input_channels == 0 || self.conv_widths.contains(&0) || self.kernel_sizes.contains(&0) {
            return Err(Error::Config("channel counts and kernel sizes must be positive".into()));
        }
        if self.strides.contains(&0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        self.spatial_extents().map(|_| ())
    }

    /// Shapes of the parameters in [`PARAM_NAMES`](crate::model::PARAM_NAMES) order.
    pub fn param_shapes(&self) -> [Vec<usize>; 8] {
        let [c1, c2, c3] = self.conv_widths;
        let [k1, k2, k3] = self.kernel_sizes;
        [
            vec![c1, self.input_channels, k1, k1],
            vec![c1],
            vec![c2, c1, k2, k2],
            vec![c2],
            vec![c3, c2, k3, k3],
            vec![c3],
            vec![c3, self.num_classes],
            vec![self.num_classes],
        ]
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        vec![
            ("input_channels", self.input_channels.to_string()),
            ("input_size", self.input_size.to_string()),
            ("conv_widths", list(&self.conv_widths)),
            ("kernel_sizes", list(&self.kernel_sizes)),
            ("strides", list(&self.strides)),
            ("paddings", list(&self.paddings)),
            ("dropout_p", self.dropout_p.to_string()),
            ("num_classes", self.num_classes.to_string()),
        ]
    }

    /// Override fields from `key=value` pairs; keys not listed in
    /// [`CONFIG_KEYS`] are left for the caller.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in pairs {
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Set one field by name. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::Config(format!("invalid value {value:?} for {key}"));
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let triple = |v: &str| -> Result<[usize; 3]> {
            let parts: Vec<usize> = v.split(',').map(int).collect::<Result<_>>()?;
            <[usize; 3]>::try_from(parts).map_err(|_| bad())
        };
        match key {
            "input_channels" => self.input_channels = int(value)?,
            "input_size" => self.input_size = int(value)?,
            "conv_widths" => self.conv_widths = triple(value)?,
            "kernel_sizes" => self.kernel_sizes = triple(value)?,
            "strides" => self.strides = triple(value)?,
            "paddings" => self.paddings = triple(value)?,
            "dropout_p" => self.dropout_p = value.trim().parse().map_err(|_| bad())?,
            "num_classes" => self.num_classes = int(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
