//! Training-target encoding: instance maps into signed centroid-distance
//! maps, and instance/class/layer maps into the per-branch one-hot targets.

use std::collections::BTreeMap;

use crate::bundle::{
    HoVerMaps, NucleusClass, TargetBundle, LS_CHANNELS, NC_CHANNELS, NC_EPITHELIAL, NC_OTHER,
    NP_CHANNELS, NP_NUCLEUS,
};
use crate::error::{Error, Result};
use crate::raster::{InstanceLabelMap, Raster2D};

/// Encodes per-pixel signed distances from each nucleus pixel to its
/// instance centroid, normalized per instance to [-1, 1] by the maximum
/// absolute offset along each axis. Background pixels are zero; an axis
/// with no extent (a one-pixel-wide instance) encodes as zero.
pub fn encode_hover(instances: &InstanceLabelMap) -> HoVerMaps {
    let (h, w) = instances.extent();
    let mut maps = HoVerMaps::zeros(h, w).expect("instance extent is valid");

    let centroids = instances.centroids();
    if centroids.is_empty() {
        return maps;
    }

    // Per-instance maximum absolute offsets from the centroid.
    let mut max_abs: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for r in 0..h {
        for c in 0..w {
            let label = instances.get(r, c);
            if label == 0 {
                continue;
            }
            let (cr, cc) = centroids[&label];
            let e = max_abs.entry(label).or_insert((0.0, 0.0));
            e.0 = e.0.max((r as f64 - cr).abs());
            e.1 = e.1.max((c as f64 - cc).abs());
        }
    }

    for r in 0..h {
        for c in 0..w {
            let label = instances.get(r, c);
            if label == 0 {
                continue;
            }
            let (cr, cc) = centroids[&label];
            let (max_r, max_c) = max_abs[&label];
            if max_r > 0.0 {
                maps.vertical.set(0, r, c, (r as f64 - cr) / max_r);
            }
            if max_c > 0.0 {
                maps.horizontal.set(0, r, c, (c as f64 - cc) / max_c);
            }
        }
    }
    maps
}

/// Builds the one-hot targets for all four branches from ground truth.
///
/// `nucleus_classes` must cover every instance label; `layers` is a
/// single-channel raster of layer labels 0..=4 with the same extent.
pub fn make_target_bundle(
    instances: &InstanceLabelMap,
    nucleus_classes: &BTreeMap<u32, NucleusClass>,
    layers: &Raster2D<u8>,
) -> Result<TargetBundle> {
    let (h, w) = instances.extent();
    if layers.extent() != (h, w) {
        return Err(Error::shape_mismatch((h, w), layers.extent()));
    }
    if layers.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: layers.channels(),
        });
    }
    for label in instances.labels() {
        if !nucleus_classes.contains_key(&label) {
            return Err(Error::MissingClass(label));
        }
    }

    let mut np = Raster2D::filled(h, w, NP_CHANNELS, 0.0)?;
    let mut nc = Raster2D::filled(h, w, NC_CHANNELS, 0.0)?;
    let mut ls = Raster2D::filled(h, w, LS_CHANNELS, 0.0)?;

    for r in 0..h {
        for c in 0..w {
            let label = instances.get(r, c);
            let np_channel = if label > 0 { NP_NUCLEUS } else { 0 };
            np.set(np_channel, r, c, 1.0);

            let nc_channel = if label > 0 {
                match nucleus_classes[&label] {
                    NucleusClass::Other => NC_OTHER,
                    NucleusClass::Epithelial => NC_EPITHELIAL,
                }
            } else {
                0
            };
            nc.set(nc_channel, r, c, 1.0);

            let layer = layers.get(0, r, c);
            if layer as usize >= LS_CHANNELS {
                return Err(Error::InvalidLayerLabel(layer));
            }
            ls.set(layer as usize, r, c, 1.0);
        }
    }

    Ok(TargetBundle {
        np,
        hover: encode_hover(instances),
        nc,
        ls,
    })
}
