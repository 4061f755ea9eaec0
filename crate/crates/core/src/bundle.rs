//! Shared branch-output containers and class vocabularies.
//!
//! The pipeline has four decoder branches. `NP` separates nucleus from
//! background (2 channels), `HoVer` regresses signed horizontal/vertical
//! centroid distances (2 real-valued maps), `NC` classifies nucleus pixels
//! (3 channels) and `LS` segments the tissue layers (5 channels).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster2D};

/// Channel order of the NP branch.
pub const NP_CHANNELS: usize = 2;
pub const NP_BACKGROUND: usize = 0;
pub const NP_NUCLEUS: usize = 1;

/// Channel order of the NC branch.
pub const NC_CHANNELS: usize = 3;
pub const NC_BACKGROUND: usize = 0;
pub const NC_OTHER: usize = 1;
pub const NC_EPITHELIAL: usize = 2;

/// Channel order of the LS branch.
pub const LS_CHANNELS: usize = 5;

/// Tolerance on the per-pixel channel sum of a probability raster.
pub const SOFTMAX_TOLERANCE: f64 = 1e-5;

/// Two-way nucleus class predicted by the NC branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NucleusClass {
    Other,
    Epithelial,
}

/// Semantic layer classes, in fixed channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerClass {
    Background,
    Other,
    Basal,
    Epithelium,
    Keratin,
}

impl LayerClass {
    pub const ALL: [LayerClass; 5] = [
        LayerClass::Background,
        LayerClass::Other,
        LayerClass::Basal,
        LayerClass::Epithelium,
        LayerClass::Keratin,
    ];

    #[inline]
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(value: u8) -> Result<Self> {
        Self::ALL
            .get(value as usize)
            .copied()
            .ok_or(Error::InvalidLayerLabel(value))
    }

    /// True for the three intra-epithelial layers.
    pub fn is_epithelial(self) -> bool {
        matches!(
            self,
            LayerClass::Basal | LayerClass::Epithelium | LayerClass::Keratin
        )
    }
}

/// Final five-way nucleus class after fusing NC votes with the layer map
/// (background excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalClass {
    Other,
    Basal,
    Epithelium,
    Keratin,
}

impl FinalClass {
    pub const ALL: [FinalClass; 4] = [
        FinalClass::Other,
        FinalClass::Basal,
        FinalClass::Epithelium,
        FinalClass::Keratin,
    ];

    /// Paint value in a nuclear class map (0 is background).
    #[inline]
    pub fn value(self) -> u8 {
        match self {
            FinalClass::Other => 1,
            FinalClass::Basal => 2,
            FinalClass::Epithelium => 3,
            FinalClass::Keratin => 4,
        }
    }

    pub fn from_value(value: u8) -> Result<Self> {
        match value {
            1 => Ok(FinalClass::Other),
            2 => Ok(FinalClass::Basal),
            3 => Ok(FinalClass::Epithelium),
            4 => Ok(FinalClass::Keratin),
            _ => Err(Error::InvalidLayerLabel(value)),
        }
    }

    /// Sub-class corresponding to an intra-epithelial layer.
    pub fn from_layer(layer: LayerClass) -> Option<Self> {
        match layer {
            LayerClass::Basal => Some(FinalClass::Basal),
            LayerClass::Epithelium => Some(FinalClass::Epithelium),
            LayerClass::Keratin => Some(FinalClass::Keratin),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FinalClass::Other => "other",
            FinalClass::Basal => "basal",
            FinalClass::Epithelium => "epithelium",
            FinalClass::Keratin => "keratin",
        }
    }
}

/// Signed distance maps regressed by the HoVer branch. In encoded targets
/// each map is zero on background and spans [-1, 1] within every instance;
/// predictions are unconstrained reals of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct HoVerMaps {
    pub horizontal: Raster2D<f64>,
    pub vertical: Raster2D<f64>,
}

impl HoVerMaps {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            horizontal: Raster2D::filled(height, width, 1, 0.0)?,
            vertical: Raster2D::filled(height, width, 1, 0.0)?,
        })
    }

    pub fn extent(&self) -> (usize, usize) {
        self.horizontal.extent()
    }

    pub fn check_extent(&self, other: &HoVerMaps) -> Result<()> {
        self.horizontal.check_extent(&other.horizontal)?;
        self.vertical.check_extent(&other.vertical)
    }
}

/// Ground-truth targets for all four branches.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBundle {
    /// 2-channel one-hot {background, nucleus}.
    pub np: Raster2D<f64>,
    pub hover: HoVerMaps,
    /// 3-channel one-hot {background, other, epithelial}.
    pub nc: Raster2D<f64>,
    /// 5-channel one-hot {background, other, basal, epithelium, keratin}.
    pub ls: Raster2D<f64>,
}

impl TargetBundle {
    pub fn extent(&self) -> (usize, usize) {
        self.np.extent()
    }

    /// Nucleus-pixel mask taken from the NP nucleus channel.
    pub fn nucleus_mask(&self) -> BinaryMask {
        let (h, w) = self.np.extent();
        BinaryMask::from_fn(h, w, |r, c| self.np.get(NP_NUCLEUS, r, c) > 0.5)
            .expect("target extent is valid")
    }
}

/// Per-tile branch outputs fed to post-processing and the losses.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBundle {
    /// 2-channel softmax.
    pub np: Raster2D<f64>,
    /// Same shape as encoded HoVer targets, values unconstrained.
    pub hover: HoVerMaps,
    /// 3-channel softmax.
    pub nc: Raster2D<f64>,
    /// 5-channel softmax.
    pub ls: Raster2D<f64>,
}

impl PredictionBundle {
    /// Reinterprets ground-truth targets as ideal predictions.
    pub fn from_targets(targets: &TargetBundle) -> Self {
        Self {
            np: targets.np.clone(),
            hover: targets.hover.clone(),
            nc: targets.nc.clone(),
            ls: targets.ls.clone(),
        }
    }

    pub fn extent(&self) -> (usize, usize) {
        self.np.extent()
    }

    /// Checks channel counts, a shared extent, and that each softmax raster
    /// sums to 1 within [`SOFTMAX_TOLERANCE`] per pixel.
    pub fn validate(&self) -> Result<()> {
        for (raster, expected) in [(&self.np, NP_CHANNELS), (&self.nc, NC_CHANNELS), (&self.ls, LS_CHANNELS)]
        {
            if raster.channels() != expected {
                return Err(Error::ChannelMismatch {
                    expected,
                    actual: raster.channels(),
                });
            }
            self.np.check_extent(raster)?;
        }
        self.np.check_extent(&self.hover.horizontal)?;
        self.np.check_extent(&self.hover.vertical)?;
        for raster in [&self.np, &self.nc, &self.ls] {
            let (h, w) = raster.extent();
            for r in 0..h {
                for c in 0..w {
                    let sum: f64 = (0..raster.channels()).map(|ch| raster.get(ch, r, c)).sum();
                    if (sum - 1.0).abs() > SOFTMAX_TOLERANCE {
                        return Err(Error::InvalidParam(format!(
                            "softmax channels sum to {sum} at ({r}, {c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
