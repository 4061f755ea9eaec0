//! Prediction post-processing: instance segmentation via marker-based
//! watershed, majority nucleus classification, layer-map cleanup, and
//! nucleus/layer fusion into final five-way classes.
//!
//! Every stage is deterministic: the watershed orders its queue by
//! (energy, row, col), argmax ties resolve to the lowest channel, and all
//! per-instance maps iterate labels in ascending order. Results are
//! identical for any worker count.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{
    FinalClass, LayerClass, NucleusClass, PredictionBundle, LS_CHANNELS, NC_CHANNELS,
    NC_EPITHELIAL, NC_OTHER, NP_NUCLEUS,
};
use crate::error::{Error, Result};
use crate::raster::{
    connected_components, morphology, relabel, remove_small, sobel, BinaryMask, Connectivity,
    GradientAxis, InstanceLabelMap, MorphOp, Raster2D, RemoveMode,
};

/// Thresholds of the post-processing chain. The defaults are tuned for
/// 256x256 tiles; [`PostprocParams::scaled_to`] rescales the layer area
/// thresholds for other tile sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostprocParams {
    /// NP nucleus-channel probability above which a pixel is foreground.
    pub np_threshold: f64,
    /// Normalized-gradient level below which foreground pixels seed markers.
    pub marker_gradient_threshold: f64,
    /// Markers smaller than this are discarded.
    pub min_marker_area: usize,
    /// Instances smaller than this are dropped after the watershed.
    pub min_nucleus_area: usize,
    /// Disk radius of the per-layer opening and closing.
    pub layer_morph_radius: usize,
    /// Minimum area of a layer object, at the 256x256 reference size.
    pub layer_min_object: usize,
    /// Minimum area of a layer hole, at the 256x256 reference size.
    pub layer_min_hole: usize,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            np_threshold: 0.5,
            marker_gradient_threshold: 0.4,
            min_marker_area: 10,
            min_nucleus_area: 10,
            layer_morph_radius: 5,
            layer_min_object: 64,
            layer_min_hole: 64,
        }
    }
}

impl PostprocParams {
    /// Rescales the layer area thresholds quadratically with tile side
    /// (i.e. linearly with tile area) from the 256x256 reference.
    pub fn scaled_to(&self, height: usize, width: usize) -> Self {
        let factor = (height * width) as f64 / (256.0 * 256.0);
        let scale = |v: usize| ((v as f64 * factor).round() as usize).max(1);
        Self {
            layer_min_object: scale(self.layer_min_object),
            layer_min_hole: scale(self.layer_min_hole),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("np_threshold", self.np_threshold),
            ("marker_gradient_threshold", self.marker_gradient_threshold),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must lie in (0, 1), got {value}"
                )));
            }
        }
        for (name, value) in [
            ("min_marker_area", self.min_marker_area),
            ("min_nucleus_area", self.min_nucleus_area),
            ("layer_min_object", self.layer_min_object),
            ("layer_min_hole", self.layer_min_hole),
            ("layer_morph_radius", self.layer_morph_radius),
        ] {
            if value == 0 {
                return Err(Error::InvalidParam(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// One segmented nucleus.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NucleusRecord {
    pub label: u32,
    pub area: usize,
    /// (row, col), unweighted mean of the mask pixels.
    pub centroid: (f64, f64),
    pub class: FinalClass,
}

/// Everything produced by [`run_full_postprocess`].
#[derive(Clone, Debug)]
pub struct PostprocOutput {
    pub instances: InstanceLabelMap,
    pub records: Vec<NucleusRecord>,
    /// 0 background, 1 other, 2 basal, 3 epithelium, 4 keratin.
    pub nuclear_class_map: Raster2D<u8>,
    pub layer_map: Raster2D<u8>,
}

fn minmax_normalize(raster: &Raster2D<f64>) -> Raster2D<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in raster.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        raster.map(|v| (v - lo) / (hi - lo))
    } else {
        raster.map(|_| 0.0)
    }
}

/// Derives the watershed inputs from a prediction bundle.
///
/// The foreground is the thresholded NP nucleus channel. The separation
/// signal S is the pixelwise maximum of the min-max normalized absolute
/// Sobel responses of the two distance maps (horizontal gradient of the
/// horizontal map, vertical of the vertical); it spikes on instance
/// boundaries. Energy is 1 - S on the foreground and +inf elsewhere.
/// Markers are the connected components of low-S foreground after
/// small-object removal.
pub fn energy_and_markers(
    bundle: &PredictionBundle,
    params: &PostprocParams,
) -> Result<(BinaryMask, Raster2D<f64>, InstanceLabelMap)> {
    let (h, w) = bundle.extent();
    let foreground = BinaryMask::from_fn(h, w, |r, c| {
        bundle.np.get(NP_NUCLEUS, r, c) > params.np_threshold
    })?;

    let grad_h = minmax_normalize(
        &sobel(&bundle.hover.horizontal, GradientAxis::Horizontal)?.map(f64::abs),
    );
    let grad_v =
        minmax_normalize(&sobel(&bundle.hover.vertical, GradientAxis::Vertical)?.map(f64::abs));

    let mut energy = Raster2D::filled(h, w, 1, f64::INFINITY)?;
    let mut marker_mask = BinaryMask::zeros(h, w)?;
    for r in 0..h {
        for c in 0..w {
            let s = grad_h.get(0, r, c).max(grad_v.get(0, r, c));
            if foreground.get(r, c) {
                energy.set(0, r, c, 1.0 - s);
                if s < params.marker_gradient_threshold {
                    marker_mask.set(r, c, true);
                }
            }
        }
    }
    let marker_mask = remove_small(&marker_mask, RemoveMode::Objects, params.min_marker_area);
    let markers = connected_components(&marker_mask, Connectivity::Four);
    Ok((foreground, energy, markers))
}

#[derive(PartialEq)]
struct QueueEntry {
    energy: f64,
    row: usize,
    col: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the lowest (energy, row, col)
        // pops first.
        other
            .energy
            .total_cmp(&self.energy)
            .then_with(|| other.row.cmp(&self.row))
            .then_with(|| other.col.cmp(&self.col))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority-flood watershed.
///
/// Marker pixels keep their labels and seed a min-priority queue keyed by
/// (energy, row, col). Popping the lowest entry assigns its label to any
/// unlabelled foreground 4-neighbour, which is then queued with its own
/// energy. Afterwards instances below `min_nucleus_area` are dropped and
/// the rest relabelled densely in raster-scan order.
pub fn watershed_segment(
    foreground: &BinaryMask,
    energy: &Raster2D<f64>,
    markers: &InstanceLabelMap,
    params: &PostprocParams,
) -> Result<InstanceLabelMap> {
    let (h, w) = foreground.extent();
    if energy.extent() != (h, w) {
        return Err(Error::shape_mismatch((h, w), energy.extent()));
    }
    if markers.extent() != (h, w) {
        return Err(Error::shape_mismatch((h, w), markers.extent()));
    }

    let mut labels = markers.clone();
    let mut heap = BinaryHeap::new();
    for r in 0..h {
        for c in 0..w {
            let label = markers.get(r, c);
            if label == 0 {
                continue;
            }
            if !foreground.get(r, c) {
                return Err(Error::MarkerOutsideForeground { label, row: r, col: c });
            }
            heap.push(QueueEntry {
                energy: energy.get(0, r, c),
                row: r,
                col: c,
            });
        }
    }

    while let Some(entry) = heap.pop() {
        let label = labels.get(entry.row, entry.col);
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let nr = entry.row as i64 + dr;
            let nc = entry.col as i64 + dc;
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if foreground.get(nr, nc) && labels.get(nr, nc) == 0 {
                labels.set(nr, nc, label);
                heap.push(QueueEntry {
                    energy: energy.get(0, nr, nc),
                    row: nr,
                    col: nc,
                });
            }
        }
    }

    let areas = labels.areas();
    for r in 0..h {
        for c in 0..w {
            let l = labels.get(r, c);
            if l > 0 && areas[&l] < params.min_nucleus_area {
                labels.set(r, c, 0);
            }
        }
    }
    Ok(relabel(&labels, Connectivity::Four))
}

/// Majority vote of per-pixel NC argmax over each instance. Background
/// votes are ignored; an all-background instance and exact ties both
/// resolve to `Other`.
pub fn classify_nuclei_majority(
    instances: &InstanceLabelMap,
    nc_prob: &Raster2D<f64>,
) -> Result<BTreeMap<u32, NucleusClass>> {
    if instances.extent() != nc_prob.extent() {
        return Err(Error::shape_mismatch(instances.extent(), nc_prob.extent()));
    }
    if nc_prob.channels() != NC_CHANNELS {
        return Err(Error::ChannelMismatch {
            expected: NC_CHANNELS,
            actual: nc_prob.channels(),
        });
    }
    let (h, w) = instances.extent();
    let mut votes: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in 0..h {
        for c in 0..w {
            let label = instances.get(r, c);
            if label == 0 {
                continue;
            }
            let entry = votes.entry(label).or_insert((0, 0));
            match argmax_channel(nc_prob, r, c) {
                NC_OTHER => entry.0 += 1,
                NC_EPITHELIAL => entry.1 += 1,
                _ => {}
            }
        }
    }
    Ok(votes
        .into_iter()
        .map(|(label, (other, epithelial))| {
            let class = if epithelial > other {
                NucleusClass::Epithelial
            } else {
                NucleusClass::Other
            };
            (label, class)
        })
        .collect())
}

/// Lowest channel index attaining the per-pixel maximum.
fn argmax_channel(prob: &Raster2D<f64>, r: usize, c: usize) -> usize {
    let mut best = 0usize;
    let mut best_value = prob.get(0, r, c);
    for ch in 1..prob.channels() {
        let v = prob.get(ch, r, c);
        if v > best_value {
            best_value = v;
            best = ch;
        }
    }
    best
}

/// Cleans the LS argmax map: per non-background class, opening and closing
/// with a disk, then small object and hole removal. Pixels claimed by more
/// than one cleaned class resolve to the highest LS probability (ties to
/// the lowest class value); pixels claimed by none become background.
pub fn clean_layer_map(ls_prob: &Raster2D<f64>, params: &PostprocParams) -> Result<Raster2D<u8>> {
    if ls_prob.channels() != LS_CHANNELS {
        return Err(Error::ChannelMismatch {
            expected: LS_CHANNELS,
            actual: ls_prob.channels(),
        });
    }
    let (h, w) = ls_prob.extent();
    let mut argmax = Raster2D::filled(h, w, 1, 0u8)?;
    for r in 0..h {
        for c in 0..w {
            argmax.set(0, r, c, argmax_channel(ls_prob, r, c) as u8);
        }
    }

    let cleaned: Vec<BinaryMask> = (1u8..=4)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&class| {
            let mask = BinaryMask::from_fn(h, w, |r, c| argmax.get(0, r, c) == class)
                .expect("extent is valid");
            let mask = morphology(&mask, MorphOp::Open, params.layer_morph_radius);
            let mask = morphology(&mask, MorphOp::Close, params.layer_morph_radius);
            let mask = remove_small(&mask, RemoveMode::Objects, params.layer_min_object);
            remove_small(&mask, RemoveMode::Holes, params.layer_min_hole)
        })
        .collect();

    let mut out = Raster2D::filled(h, w, 1, 0u8)?;
    for r in 0..h {
        for c in 0..w {
            let mut winner = 0u8;
            let mut winner_prob = f64::NEG_INFINITY;
            for (i, mask) in cleaned.iter().enumerate() {
                if !mask.get(r, c) {
                    continue;
                }
                let class = (i + 1) as u8;
                let p = ls_prob.get(class as usize, r, c);
                if winner == 0 || p > winner_prob {
                    winner = class;
                    winner_prob = p;
                }
            }
            out.set(0, r, c, winner);
        }
    }
    Ok(out)
}

/// Assigns final classes by fusing NC votes with the layer map.
///
/// Other-voted nuclei keep their class. An epithelial-voted nucleus takes
/// the layer at its rounded centroid when that layer is intra-epithelial;
/// otherwise it falls back to (1) the majority intra-epithelial layer over
/// its mask, then (2) the layer of the nearest intra-epithelial pixel,
/// then (3) plain epithelium. Pixel support never changes, only classes.
pub fn fuse_nuclei_layers(
    instances: &InstanceLabelMap,
    nucleus_classes: &BTreeMap<u32, NucleusClass>,
    layer_map: &Raster2D<u8>,
) -> Result<(Vec<NucleusRecord>, Raster2D<u8>)> {
    if instances.extent() != layer_map.extent() {
        return Err(Error::shape_mismatch(instances.extent(), layer_map.extent()));
    }
    let (h, w) = instances.extent();
    for &v in layer_map.data() {
        LayerClass::from_value(v)?;
    }

    let mut pixels_by_label: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for r in 0..h {
        for c in 0..w {
            let l = instances.get(r, c);
            if l > 0 {
                pixels_by_label.entry(l).or_default().push((r, c));
            }
        }
    }

    // All intra-epithelial pixels, for the nearest-pixel fallback.
    let epithelial_pixels: Vec<(usize, usize, LayerClass)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter_map(|(r, c)| {
            let layer = LayerClass::from_value(layer_map.get(0, r, c)).expect("checked above");
            layer.is_epithelial().then_some((r, c, layer))
        })
        .collect();

    let mut records = Vec::new();
    let mut class_map = Raster2D::filled(h, w, 1, 0u8)?;
    for (&label, pixels) in &pixels_by_label {
        let vote = *nucleus_classes
            .get(&label)
            .ok_or(Error::MissingClass(label))?;
        let n = pixels.len() as f64;
        let centroid_r = pixels.iter().map(|&(r, _)| r as f64).sum::<f64>() / n;
        let centroid_c = pixels.iter().map(|&(_, c)| c as f64).sum::<f64>() / n;

        let class = match vote {
            NucleusClass::Other => FinalClass::Other,
            NucleusClass::Epithelial => {
                let at_centroid = LayerClass::from_value(
                    layer_map.get(0, centroid_r.round() as usize, centroid_c.round() as usize),
                )?;
                FinalClass::from_layer(at_centroid)
                    .or_else(|| majority_epithelial_layer(pixels, layer_map))
                    .or_else(|| {
                        nearest_epithelial_layer(&epithelial_pixels, centroid_r, centroid_c)
                    })
                    .unwrap_or(FinalClass::Epithelium)
            }
        };

        for &(r, c) in pixels {
            class_map.set(0, r, c, class.value());
        }
        records.push(NucleusRecord {
            label,
            area: pixels.len(),
            centroid: (centroid_r, centroid_c),
            class,
        });
    }
    Ok((records, class_map))
}

/// Majority intra-epithelial layer over the mask; ties resolve to the
/// lower layer value. None when the mask touches no such layer.
fn majority_epithelial_layer(
    pixels: &[(usize, usize)],
    layer_map: &Raster2D<u8>,
) -> Option<FinalClass> {
    let mut counts = [0usize; 5];
    for &(r, c) in pixels {
        counts[layer_map.get(0, r, c) as usize] += 1;
    }
    let mut best: Option<(usize, u8)> = None;
    for value in [2u8, 3, 4] {
        let count = counts[value as usize];
        if count == 0 {
            continue;
        }
        if best.map_or(true, |(best_count, _)| count > best_count) {
            best = Some((count, value));
        }
    }
    best.map(|(_, value)| FinalClass::from_value(value).expect("intra-epithelial value"))
}

/// Layer of the intra-epithelial pixel nearest to the centroid; ties
/// resolve in raster-scan order.
fn nearest_epithelial_layer(
    epithelial_pixels: &[(usize, usize, LayerClass)],
    centroid_r: f64,
    centroid_c: f64,
) -> Option<FinalClass> {
    let mut best: Option<(f64, FinalClass)> = None;
    for &(r, c, layer) in epithelial_pixels {
        let d2 = (r as f64 - centroid_r).powi(2) + (c as f64 - centroid_c).powi(2);
        if best.map_or(true, |(best_d2, _)| d2 < best_d2) {
            best = Some((d2, FinalClass::from_layer(layer).expect("intra-epithelial")));
        }
    }
    best.map(|(_, class)| class)
}

/// The full chain: energy/markers, watershed, majority classification,
/// layer cleanup, fusion.
pub fn run_full_postprocess(
    bundle: &PredictionBundle,
    params: &PostprocParams,
) -> Result<PostprocOutput> {
    bundle.validate()?;
    params.validate()?;
    let (foreground, energy, markers) = energy_and_markers(bundle, params)?;
    let instances = watershed_segment(&foreground, &energy, &markers, params)?;
    let nucleus_classes = classify_nuclei_majority(&instances, &bundle.nc)?;
    let layer_map = clean_layer_map(&bundle.ls, params)?;
    let (records, nuclear_class_map) = fuse_nuclei_layers(&instances, &nucleus_classes, &layer_map)?;
    Ok(PostprocOutput {
        instances,
        records,
        nuclear_class_map,
        layer_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{HoVerMaps, NP_BACKGROUND};
    use crate::hover::make_target_bundle;
    use crate::metrics;
    use crate::synth::{generate_scene, perfect_bundle, SceneParams};

    fn background_bundle(h: usize, w: usize) -> PredictionBundle {
        let mut np = Raster2D::filled(h, w, 2, 0.0).unwrap();
        for v in np.channel_mut(NP_BACKGROUND) {
            *v = 1.0;
        }
        let mut nc = Raster2D::filled(h, w, 3, 0.0).unwrap();
        for v in nc.channel_mut(0) {
            *v = 1.0;
        }
        let mut ls = Raster2D::filled(h, w, 5, 0.0).unwrap();
        for v in ls.channel_mut(0) {
            *v = 1.0;
        }
        PredictionBundle {
            np,
            hover: HoVerMaps::zeros(h, w).unwrap(),
            nc,
            ls,
        }
    }

    #[test]
    fn all_background_yields_nothing() {
        let bundle = background_bundle(32, 32);
        let params = PostprocParams::default();
        let (foreground, _, markers) = energy_and_markers(&bundle, &params).unwrap();
        assert_eq!(foreground.count_ones(), 0);
        assert!(markers.labels().is_empty());

        let out = run_full_postprocess(&bundle, &params).unwrap();
        assert!(out.records.is_empty());
        assert!(out.instances.labels().is_empty());
        assert!(out.nuclear_class_map.data().iter().all(|&v| v == 0));
        assert!(out.layer_map.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn single_disk_gets_one_interior_marker() {
        let mut instances = InstanceLabelMap::zeros(36, 36).unwrap();
        for r in 0..36i64 {
            for c in 0..36i64 {
                if (r - 18) * (r - 18) + (c - 18) * (c - 18) <= 49 {
                    instances.set(r as usize, c as usize, 1);
                }
            }
        }
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Epithelial)].into();
        let layers = Raster2D::filled(36, 36, 1, 3u8).unwrap();
        let targets = make_target_bundle(&instances, &classes, &layers).unwrap();
        let bundle = PredictionBundle::from_targets(&targets);
        let (foreground, _, markers) = energy_and_markers(&bundle, &PostprocParams::default()).unwrap();
        assert_eq!(markers.labels().len(), 1);
        // the marker sits inside the nucleus mask
        for r in 0..36 {
            for c in 0..36 {
                if markers.get(r, c) > 0 {
                    assert!(foreground.get(r, c));
                    assert_eq!(instances.get(r, c), 1);
                }
            }
        }
    }

    #[test]
    fn two_disks_with_gap_give_two_markers() {
        // radius-7 disks, centres 17 apart: a 3-pixel gap
        let mut instances = InstanceLabelMap::zeros(32, 56).unwrap();
        for (label, (cr, cc)) in [(1u32, (16i64, 14i64)), (2, (16, 31))] {
            for r in 0..32i64 {
                for c in 0..56i64 {
                    if (r - cr) * (r - cr) + (c - cc) * (c - cc) <= 49 {
                        instances.set(r as usize, c as usize, label);
                    }
                }
            }
        }
        let classes: BTreeMap<u32, NucleusClass> =
            [(1, NucleusClass::Other), (2, NucleusClass::Other)].into();
        let layers = Raster2D::filled(32, 56, 1, 1u8).unwrap();
        let targets = make_target_bundle(&instances, &classes, &layers).unwrap();
        let bundle = PredictionBundle::from_targets(&targets);
        let (_, _, markers) = energy_and_markers(&bundle, &PostprocParams::default()).unwrap();
        assert_eq!(markers.labels().len(), 2);
    }

    #[test]
    fn touching_disks_are_split_with_high_dice() {
        // two radius-7 disks whose masks touch (centres 14 apart); the
        // shared boundary carries the largest distance-map gradients, so
        // the watershed splits along it
        let mut instances = InstanceLabelMap::zeros(32, 52).unwrap();
        for r in 0..32i64 {
            for c in 0..52i64 {
                if (r - 16) * (r - 16) + (c - 18) * (c - 18) <= 49 {
                    instances.set(r as usize, c as usize, 1);
                } else if (r - 16) * (r - 16) + (c - 32) * (c - 32) <= 49 {
                    instances.set(r as usize, c as usize, 2);
                }
            }
        }
        let classes: BTreeMap<u32, NucleusClass> =
            [(1, NucleusClass::Other), (2, NucleusClass::Other)].into();
        let layers = Raster2D::filled(32, 52, 1, 1u8).unwrap();
        let targets = make_target_bundle(&instances, &classes, &layers).unwrap();
        let bundle = PredictionBundle::from_targets(&targets);
        let params = PostprocParams::default();
        let (foreground, energy, markers) = energy_and_markers(&bundle, &params).unwrap();
        assert_eq!(markers.labels().len(), 2);
        let segmented = watershed_segment(&foreground, &energy, &markers, &params).unwrap();
        assert_eq!(segmented.labels().len(), 2);
        // per-nucleus dice >= 0.9 against ground truth
        let matching = metrics::match_instances(&instances, &segmented).unwrap();
        assert_eq!(matching.pairs.len(), 2);
        for &(g, p, _) in &matching.pairs {
            let (mut inter, mut a, mut b) = (0f64, 0f64, 0f64);
            for r in 0..32 {
                for c in 0..52 {
                    let in_g = instances.get(r, c) == g;
                    let in_p = segmented.get(r, c) == p;
                    a += in_g as u8 as f64;
                    b += in_p as u8 as f64;
                    inter += (in_g && in_p) as u8 as f64;
                }
            }
            let dice = 2.0 * inter / (a + b);
            assert!(dice >= 0.9, "per-nucleus dice {dice}");
        }
    }

    #[test]
    fn flat_energy_reduces_to_connected_components() {
        let mut foreground = BinaryMask::zeros(8, 8).unwrap();
        for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2), (5, 5), (5, 6), (6, 5), (6, 6)] {
            foreground.set(r, c, true);
        }
        let energy = Raster2D::filled(8, 8, 1, 0.5).unwrap();
        let markers = connected_components(&foreground, Connectivity::Four);
        let params = PostprocParams {
            min_nucleus_area: 1,
            ..PostprocParams::default()
        };
        let segmented = watershed_segment(&foreground, &energy, &markers, &params).unwrap();
        assert_eq!(segmented, connected_components(&foreground, Connectivity::Four));
    }

    #[test]
    fn no_markers_yields_empty_map() {
        let foreground = BinaryMask::from_fn(6, 6, |r, c| r > 1 && c > 1).unwrap();
        let energy = Raster2D::filled(6, 6, 1, 0.0).unwrap();
        let markers = InstanceLabelMap::zeros(6, 6).unwrap();
        let params = PostprocParams::default();
        let out = watershed_segment(&foreground, &energy, &markers, &params).unwrap();
        assert!(out.labels().is_empty());
    }

    #[test]
    fn marker_outside_foreground_is_an_error() {
        let foreground = BinaryMask::zeros(4, 4).unwrap();
        let energy = Raster2D::filled(4, 4, 1, 0.0).unwrap();
        let mut markers = InstanceLabelMap::zeros(4, 4).unwrap();
        markers.set(2, 2, 1);
        assert!(matches!(
            watershed_segment(&foreground, &energy, &markers, &PostprocParams::default()),
            Err(Error::MarkerOutsideForeground { label: 1, row: 2, col: 2 })
        ));
    }

    #[test]
    fn watershed_partitions_foreground_and_keeps_markers() {
        let scene = generate_scene(&SceneParams {
            seed: 17,
            extent: 128,
            nucleus_count: 8,
            ..SceneParams::default()
        })
        .unwrap();
        let bundle = perfect_bundle(&scene).unwrap();
        let params = PostprocParams::default();
        let (foreground, energy, markers) = energy_and_markers(&bundle, &params).unwrap();
        let segmented = watershed_segment(&foreground, &energy, &markers, &params).unwrap();
        for r in 0..128 {
            for c in 0..128 {
                if segmented.get(r, c) > 0 {
                    assert!(foreground.get(r, c), "labels stay inside the foreground");
                }
            }
        }
        // each original marker pixel keeps a positive label
        for r in 0..128 {
            for c in 0..128 {
                if markers.get(r, c) > 0 {
                    assert!(segmented.get(r, c) > 0);
                }
            }
        }
    }

    #[test]
    fn majority_vote_rules() {
        let mut instances = InstanceLabelMap::zeros(2, 4).unwrap();
        for c in 0..4 {
            instances.set(0, c, 1);
            instances.set(1, c, 2);
        }
        let mut nc = Raster2D::filled(2, 4, 3, 0.0).unwrap();
        // instance 1: 3 epithelial votes, 1 other vote
        for c in 0..3 {
            nc.set(NC_EPITHELIAL, 0, c, 1.0);
        }
        nc.set(NC_OTHER, 0, 3, 1.0);
        // instance 2: all pixels vote background
        for c in 0..4 {
            nc.set(0, 1, c, 1.0);
        }
        let classes = classify_nuclei_majority(&instances, &nc).unwrap();
        assert_eq!(classes[&1], NucleusClass::Epithelial);
        assert_eq!(classes[&2], NucleusClass::Other);
    }

    #[test]
    fn majority_vote_tie_goes_to_other() {
        let mut instances = InstanceLabelMap::zeros(1, 4).unwrap();
        for c in 0..4 {
            instances.set(0, c, 1);
        }
        let mut nc = Raster2D::filled(1, 4, 3, 0.0).unwrap();
        nc.set(NC_EPITHELIAL, 0, 0, 1.0);
        nc.set(NC_EPITHELIAL, 0, 1, 1.0);
        nc.set(NC_OTHER, 0, 2, 1.0);
        nc.set(NC_OTHER, 0, 3, 1.0);
        let classes = classify_nuclei_majority(&instances, &nc).unwrap();
        assert_eq!(classes[&1], NucleusClass::Other);
    }

    fn banded_ls(h: usize, w: usize, bands: &[(usize, u8)]) -> Raster2D<f64> {
        // bands: (first row, class) cut points, ascending
        let mut ls = Raster2D::filled(h, w, 5, 0.0).unwrap();
        for r in 0..h {
            let mut class = 0u8;
            for &(start, value) in bands {
                if r >= start {
                    class = value;
                }
            }
            for c in 0..w {
                ls.set(class as usize, r, c, 1.0);
            }
        }
        ls
    }

    #[test]
    fn clean_layer_map_is_identity_on_wide_bands() {
        let ls = banded_ls(64, 32, &[(0, 1), (16, 2), (32, 3), (48, 4)]);
        let params = PostprocParams::default();
        let cleaned = clean_layer_map(&ls, &params).unwrap();
        for r in 0..64 {
            for c in 0..32 {
                let expected = match r {
                    0..=15 => 1,
                    16..=31 => 2,
                    32..=47 => 3,
                    _ => 4,
                };
                assert_eq!(cleaned.get(0, r, c), expected, "at ({r}, {c})");
            }
        }
    }

    #[test]
    fn clean_layer_map_reassigns_speckle() {
        let mut ls = banded_ls(64, 32, &[(0, 3)]);
        // single keratin-voting pixel inside the epithelium band
        for ch in 0..5 {
            ls.set(ch, 30, 15, 0.0);
        }
        ls.set(4, 30, 15, 1.0);
        let cleaned = clean_layer_map(&ls, &PostprocParams::default()).unwrap();
        assert_eq!(cleaned.get(0, 30, 15), 3);
    }

    #[test]
    fn clean_layer_map_fills_small_holes() {
        let mut ls = banded_ls(64, 32, &[(0, 2)]);
        // a 10-pixel background hole inside the basal band; opening and
        // closing with radius 5 would bridge it anyway, so shrink the
        // radius to isolate the hole-filling rule
        for (r, c) in [(20, 10), (20, 11), (20, 12), (20, 13), (20, 14),
                       (21, 10), (21, 11), (21, 12), (21, 13), (21, 14)] {
            for ch in 0..5 {
                ls.set(ch, r, c, 0.0);
            }
            ls.set(0, r, c, 1.0);
        }
        let params = PostprocParams {
            layer_morph_radius: 1,
            ..PostprocParams::default()
        };
        let cleaned = clean_layer_map(&ls, &params).unwrap();
        assert_eq!(cleaned.get(0, 20, 12), 2);
        assert_eq!(cleaned.get(0, 21, 13), 2);
    }

    fn square_instance(map: &mut InstanceLabelMap, label: u32, top: usize, left: usize, side: usize) {
        for r in top..top + side {
            for c in left..left + side {
                map.set(r, c, label);
            }
        }
    }

    #[test]
    fn fusion_uses_centroid_layer() {
        let mut instances = InstanceLabelMap::zeros(16, 16).unwrap();
        square_instance(&mut instances, 1, 2, 2, 4);
        let mut layers = Raster2D::filled(16, 16, 1, 2u8).unwrap(); // basal everywhere
        for c in 0..16 {
            layers.set(0, 0, c, 0);
        }
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Epithelial)].into();
        let (records, map) = fuse_nuclei_layers(&instances, &classes, &layers).unwrap();
        assert_eq!(records[0].class, FinalClass::Basal);
        assert_eq!(map.get(0, 3, 3), FinalClass::Basal.value());
    }

    #[test]
    fn fusion_keeps_other_nuclei() {
        let mut instances = InstanceLabelMap::zeros(16, 16).unwrap();
        square_instance(&mut instances, 1, 6, 6, 4);
        let layers = Raster2D::filled(16, 16, 1, 3u8).unwrap(); // epithelium band
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Other)].into();
        let (records, map) = fuse_nuclei_layers(&instances, &classes, &layers).unwrap();
        assert_eq!(records[0].class, FinalClass::Other);
        assert_eq!(map.get(0, 7, 7), FinalClass::Other.value());
    }

    #[test]
    fn fusion_falls_back_to_mask_majority() {
        // centroid on background, but 80% of the mask is keratin
        let mut instances = InstanceLabelMap::zeros(10, 10).unwrap();
        for c in 0..5 {
            for r in 2..6 {
                instances.set(r, c, 1);
            }
        }
        let mut layers = Raster2D::filled(10, 10, 1, 4u8).unwrap();
        // punch background at the centroid pixel and the column around it
        let (cr, cc) = instances.centroid(1).unwrap();
        let (cr, cc) = (cr.round() as usize, cc.round() as usize);
        layers.set(0, cr, cc, 0);
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Epithelial)].into();
        let (records, _) = fuse_nuclei_layers(&instances, &classes, &layers).unwrap();
        assert_eq!(records[0].class, FinalClass::Keratin);
    }

    #[test]
    fn fusion_falls_back_to_nearest_epithelial_pixel() {
        let mut instances = InstanceLabelMap::zeros(10, 20).unwrap();
        square_instance(&mut instances, 1, 2, 2, 3);
        // the whole mask sits on 'other' tissue; nearest epithelial pixel
        // is a basal column at c = 10
        let mut layers = Raster2D::filled(10, 20, 1, 1u8).unwrap();
        for r in 0..10 {
            layers.set(0, r, 10, 2);
        }
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Epithelial)].into();
        let (records, _) = fuse_nuclei_layers(&instances, &classes, &layers).unwrap();
        assert_eq!(records[0].class, FinalClass::Basal);
    }

    #[test]
    fn fusion_defaults_to_epithelium_without_any_epithelial_pixels() {
        let mut instances = InstanceLabelMap::zeros(8, 8).unwrap();
        square_instance(&mut instances, 1, 2, 2, 3);
        let layers = Raster2D::filled(8, 8, 1, 1u8).unwrap();
        let classes: BTreeMap<u32, NucleusClass> = [(1, NucleusClass::Epithelial)].into();
        let (records, _) = fuse_nuclei_layers(&instances, &classes, &layers).unwrap();
        assert_eq!(records[0].class, FinalClass::Epithelium);
    }

    #[test]
    fn painting_records_reproduces_class_map() {
        let scene = generate_scene(&SceneParams {
            seed: 23,
            extent: 128,
            nucleus_count: 12,
            ..SceneParams::default()
        })
        .unwrap();
        let bundle = perfect_bundle(&scene).unwrap();
        let out = run_full_postprocess(&bundle, &PostprocParams::default()).unwrap();
        let mut painted = Raster2D::filled(128, 128, 1, 0u8).unwrap();
        let by_label: BTreeMap<u32, &NucleusRecord> =
            out.records.iter().map(|rec| (rec.label, rec)).collect();
        for r in 0..128 {
            for c in 0..128 {
                let l = out.instances.get(r, c);
                if l > 0 {
                    painted.set(0, r, c, by_label[&l].class.value());
                }
            }
        }
        assert_eq!(painted.data(), out.nuclear_class_map.data());
    }

    #[test]
    fn round_trip_on_perfect_bundle_recovers_instances() {
        let scene = generate_scene(&SceneParams {
            seed: 5,
            extent: 128,
            nucleus_count: 10,
            ..SceneParams::default()
        })
        .unwrap();
        let bundle = perfect_bundle(&scene).unwrap();
        let out = run_full_postprocess(&bundle, &PostprocParams::default()).unwrap();
        let matching = metrics::match_instances(&scene.instances, &out.instances).unwrap();
        let (dq, sq, _) = metrics::panoptic_quality(&matching);
        assert_eq!(dq, 1.0, "every nucleus recovered exactly once");
        assert!(sq >= 0.95, "sq = {sq}");
    }
}
