//! Chip records, manifests, the per-class train/test split, incidence-angle
//! binning and the synthetic EO-like / SAR-like generators.

mod image;
mod manifest;
mod split;
mod synth;

pub use self::image::{bilinear_resize, decode_image, encode_png, preprocess, RawImage};
pub use manifest::{load_boxes, load_manifest, write_dataset, MANIFEST_HEADER};
pub use split::{stratified_split, SplitSpec};
pub use synth::{generate_synthetic, Domain, ShipBox, SyntheticConfig, SyntheticSet};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Class label. The discriminant is the class index used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NoShip = 0,
    Ship = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NoShip),
            1 => Some(Label::Ship),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Ship => "ship",
            Label::NoShip => "no_ship",
        }
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ship" => Ok(Label::Ship),
            "no_ship" => Ok(Label::NoShip),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

macro_rules! token_enum {
    ($name:ident { $($variant:ident => $tok:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $tok),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($tok => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} {s:?}", stringify!($name).to_lowercase())),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum!(Sensor { Grdh => "GRDH", Grdm => "GRDM", Scna => "SCNA" });
token_enum!(Polarization { Hh => "HH", Hv => "HV", Vv => "VV", Vh => "VH" });
token_enum!(AngleBin { Small => "Small", Medium => "Medium", Large => "Large" });

pub const MIN_INCIDENCE: f64 = 19.0;
pub const MAX_INCIDENCE: f64 = 47.0;

/// Right-inclusive bins: (19, 25], (25, 35], (35, 47].
pub fn bin_incidence_angle(angle: f64) -> Result<AngleBin> {
    if angle > MIN_INCIDENCE && angle <= 25.0 {
        Ok(AngleBin::Small)
    } else if angle > 25.0 && angle <= 35.0 {
        Ok(AngleBin::Medium)
    } else if angle > 35.0 && angle <= MAX_INCIDENCE {
        Ok(AngleBin::Large)
    } else {
        Err(Error::Parameter(format!("incidence angle {angle} outside (19, 47]")))
    }
}

/// Acquisition attributes. SAR chips carry all three, EO chips none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarAttributes {
    pub sensor: Sensor,
    pub polarization: Polarization,
    pub incidence_angle: f64,
}

impl SarAttributes {
    pub fn angle_bin(&self) -> Result<AngleBin> {
        bin_incidence_angle(self.incidence_angle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChipSource {
    File(PathBuf),
    Pixels(RawImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipRecord {
    /// Manifest path, relative to the dataset root.
    pub id: String,
    pub source: ChipSource,
    pub label: Label,
    pub attributes: Option<SarAttributes>,
}

impl ChipRecord {
    pub fn image(&self) -> Result<RawImage> {
        match &self.source {
            ChipSource::Pixels(img) => Ok(img.clone()),
            ChipSource::File(path) => decode_image(path),
        }
    }

    /// Decoded `[3, size, size]` tensor with values in [0, 1].
    pub fn tensor(&self, size: usize) -> Result<Tensor<f32>> {
        preprocess(&self.image()?, size)
    }
}
