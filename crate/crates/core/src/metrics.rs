//! Instance, classification and layer evaluation metrics.
//!
//! Instance matching pairs ground-truth and predicted objects whose IoU is
//! strictly greater than 0.5; such pairs are automatically one-to-one.
//! Panoptic quality decomposes into detection quality (an F1 over matched
//! pairs) and segmentation quality (mean IoU over matches). The aggregated
//! Jaccard index pools pixel overlap over greedy one-use matches. Layer
//! metrics are pixel-level one-vs-rest scores over the five layer classes.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bundle::{FinalClass, LayerClass};
use crate::error::{Error, Result};
use crate::raster::{InstanceLabelMap, Raster2D};

/// Result of IoU > 0.5 instance matching. `pairs` is sorted by gt label.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMatching {
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

struct OverlapTable {
    /// (gt, pred) -> intersection pixel count, over positive labels only.
    overlaps: BTreeMap<(u32, u32), u64>,
    gt_areas: BTreeMap<u32, u64>,
    pred_areas: BTreeMap<u32, u64>,
}

fn overlap_table(gt: &InstanceLabelMap, pred: &InstanceLabelMap) -> Result<OverlapTable> {
    if gt.extent() != pred.extent() {
        return Err(Error::shape_mismatch(gt.extent(), pred.extent()));
    }
    let mut overlaps = BTreeMap::new();
    let mut gt_areas = BTreeMap::new();
    let mut pred_areas = BTreeMap::new();
    let (h, w) = gt.extent();
    for r in 0..h {
        for c in 0..w {
            let g = gt.get(r, c);
            let p = pred.get(r, c);
            if g > 0 {
                *gt_areas.entry(g).or_insert(0u64) += 1;
            }
            if p > 0 {
                *pred_areas.entry(p).or_insert(0u64) += 1;
            }
            if g > 0 && p > 0 {
                *overlaps.entry((g, p)).or_insert(0u64) += 1;
            }
        }
    }
    Ok(OverlapTable {
        overlaps,
        gt_areas,
        pred_areas,
    })
}

#[inline]
fn iou(inter: u64, area_a: u64, area_b: u64) -> f64 {
    inter as f64 / (area_a + area_b - inter) as f64
}

/// Pairs every (gt, pred) object with IoU strictly greater than 0.5.
pub fn match_instances(gt: &InstanceLabelMap, pred: &InstanceLabelMap) -> Result<InstanceMatching> {
    let table = overlap_table(gt, pred)?;
    let mut pairs = Vec::new();
    let mut matched_gt = BTreeSet::new();
    let mut matched_pred = BTreeSet::new();
    for (&(g, p), &inter) in &table.overlaps {
        let score = iou(inter, table.gt_areas[&g], table.pred_areas[&p]);
        if score > 0.5 {
            pairs.push((g, p, score));
            matched_gt.insert(g);
            matched_pred.insert(p);
        }
    }
    let unmatched_gt = table
        .gt_areas
        .keys()
        .copied()
        .filter(|g| !matched_gt.contains(g))
        .collect();
    let unmatched_pred = table
        .pred_areas
        .keys()
        .copied()
        .filter(|p| !matched_pred.contains(p))
        .collect();
    Ok(InstanceMatching {
        pairs,
        unmatched_gt,
        unmatched_pred,
    })
}

/// (dq, sq, pq). With no objects on either side all three are 1; with
/// objects but no matches all three are 0.
pub fn panoptic_quality(matching: &InstanceMatching) -> (f64, f64, f64) {
    let tp = matching.pairs.len() as f64;
    let fp = matching.unmatched_pred.len() as f64;
    let fn_ = matching.unmatched_gt.len() as f64;
    if tp == 0.0 {
        return if fp == 0.0 && fn_ == 0.0 {
            (1.0, 1.0, 1.0)
        } else {
            (0.0, 0.0, 0.0)
        };
    }
    let dq = tp / (tp + 0.5 * fp + 0.5 * fn_);
    let sq = matching.pairs.iter().map(|&(_, _, iou)| iou).sum::<f64>() / tp;
    (dq, sq, dq * sq)
}

/// Pooled intersection/union counts for the aggregated Jaccard index.
///
/// Ground-truth labels are visited in ascending order; each claims its
/// highest-IoU still-unused overlapping prediction (ties to the lower
/// prediction label). Unclaimed ground truth and never-used predictions
/// penalize the union.
pub(crate) fn aji_counts(gt: &InstanceLabelMap, pred: &InstanceLabelMap) -> Result<(u64, u64)> {
    let table = overlap_table(gt, pred)?;
    let mut used_pred = BTreeSet::new();
    let mut c_total = 0u64;
    let mut u_total = 0u64;
    for (&g, &g_area) in &table.gt_areas {
        let mut best: Option<(f64, u32, u64)> = None;
        for (&(gg, p), &inter) in table.overlaps.range((g, 0)..=(g, u32::MAX)) {
            debug_assert_eq!(gg, g);
            if used_pred.contains(&p) {
                continue;
            }
            let score = iou(inter, g_area, table.pred_areas[&p]);
            let better = match best {
                None => true,
                // strict comparison keeps the lower pred label on ties
                Some((best_score, _, _)) => score > best_score,
            };
            if better {
                best = Some((score, p, inter));
            }
        }
        match best {
            Some((_, p, inter)) => {
                used_pred.insert(p);
                c_total += inter;
                u_total += g_area + table.pred_areas[&p] - inter;
            }
            None => u_total += g_area,
        }
    }
    for (&p, &area) in &table.pred_areas {
        if !used_pred.contains(&p) {
            u_total += area;
        }
    }
    Ok((c_total, u_total))
}

/// Aggregated Jaccard index. 1.0 when both maps are empty, 0.0 when a
/// positive union accumulates no intersection.
pub fn aggregated_jaccard(gt: &InstanceLabelMap, pred: &InstanceLabelMap) -> Result<f64> {
    let (c, u) = aji_counts(gt, pred)?;
    if u == 0 {
        return Ok(1.0);
    }
    Ok(c as f64 / u as f64)
}

/// Foreground dice over all nucleus pixels, instance identity ignored.
pub fn binary_dice(gt: &InstanceLabelMap, pred: &InstanceLabelMap) -> Result<f64> {
    if gt.extent() != pred.extent() {
        return Err(Error::shape_mismatch(gt.extent(), pred.extent()));
    }
    let (h, w) = gt.extent();
    let (mut inter, mut a, mut b) = (0u64, 0u64, 0u64);
    for r in 0..h {
        for c in 0..w {
            let g = gt.get(r, c) > 0;
            let p = pred.get(r, c) > 0;
            a += g as u64;
            b += p as u64;
            inter += (g && p) as u64;
        }
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Per-class detection/classification F1 built on the IoU > 0.5 matching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassScore {
    pub f1: f64,
    /// False when the class appears on neither side; the score is then
    /// reported as 1.0 by convention.
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FScores {
    /// Detection F1 regardless of class: 2TP / (2TP + FP + FN).
    pub detection: f64,
    pub per_class: BTreeMap<FinalClass, ClassScore>,
}

/// Detection and per-class classification F-scores.
///
/// TP per class counts pairs classed identically on both sides; a matched
/// but differently-classed prediction counts against both classes involved
/// (a false positive for its predicted class, a false negative for its
/// ground-truth class), as do unmatched objects.
pub fn f_scores(
    matching: &InstanceMatching,
    gt_classes: &BTreeMap<u32, FinalClass>,
    pred_classes: &BTreeMap<u32, FinalClass>,
) -> Result<FScores> {
    let gt_class = |label: u32| -> Result<FinalClass> {
        gt_classes
            .get(&label)
            .copied()
            .ok_or(Error::MissingClass(label))
    };
    let pred_class = |label: u32| -> Result<FinalClass> {
        pred_classes
            .get(&label)
            .copied()
            .ok_or(Error::MissingClass(label))
    };

    let tp = matching.pairs.len() as f64;
    let fp = matching.unmatched_pred.len() as f64;
    let fn_ = matching.unmatched_gt.len() as f64;
    let detection = if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };

    let mut per_class = BTreeMap::new();
    for class in FinalClass::ALL {
        let mut tp_t = 0u64;
        let mut fp_t = 0u64;
        let mut fn_t = 0u64;
        for &(g, p, _) in &matching.pairs {
            let gc = gt_class(g)?;
            let pc = pred_class(p)?;
            match (gc == class, pc == class) {
                (true, true) => tp_t += 1,
                (true, false) => fn_t += 1,
                (false, true) => fp_t += 1,
                (false, false) => {}
            }
        }
        for &g in &matching.unmatched_gt {
            if gt_class(g)? == class {
                fn_t += 1;
            }
        }
        for &p in &matching.unmatched_pred {
            if pred_class(p)? == class {
                fp_t += 1;
            }
        }
        let present = tp_t + fp_t + fn_t > 0;
        let f1 = if present {
            2.0 * tp_t as f64 / (2 * tp_t + fp_t + fn_t) as f64
        } else {
            1.0
        };
        per_class.insert(class, ClassScore { f1, present });
    }
    Ok(FScores {
        detection,
        per_class,
    })
}

/// Pixel-level one-vs-rest scores for one layer class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassPixelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip)]
    pub present: bool,
}

impl ClassPixelScore {
    fn absent() -> Self {
        Self {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            present: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerMetrics {
    pub background: ClassPixelScore,
    pub other: ClassPixelScore,
    pub basal: ClassPixelScore,
    pub epithelium: ClassPixelScore,
    pub keratin: ClassPixelScore,
    pub accuracy: f64,
    pub mean_f1: f64,
}

impl LayerMetrics {
    pub fn class(&self, layer: LayerClass) -> &ClassPixelScore {
        match layer {
            LayerClass::Background => &self.background,
            LayerClass::Other => &self.other,
            LayerClass::Basal => &self.basal,
            LayerClass::Epithelium => &self.epithelium,
            LayerClass::Keratin => &self.keratin,
        }
    }
}

pub(crate) fn layer_confusion(
    gt_layers: &Raster2D<u8>,
    pred_layers: &Raster2D<u8>,
) -> Result<[[u64; 5]; 5]> {
    if gt_layers.extent() != pred_layers.extent() {
        return Err(Error::shape_mismatch(gt_layers.extent(), pred_layers.extent()));
    }
    let mut confusion = [[0u64; 5]; 5];
    for (&g, &p) in gt_layers.data().iter().zip(pred_layers.data()) {
        if g > 4 {
            return Err(Error::InvalidLayerLabel(g));
        }
        if p > 4 {
            return Err(Error::InvalidLayerLabel(p));
        }
        confusion[g as usize][p as usize] += 1;
    }
    Ok(confusion)
}

fn layer_metrics_from_confusion(confusion: &[[u64; 5]; 5]) -> LayerMetrics {
    let total: u64 = confusion.iter().flatten().sum();
    let mut scores = [ClassPixelScore::absent(); 5];
    for (k, score) in scores.iter_mut().enumerate() {
        let tp = confusion[k][k];
        let fp: u64 = (0..5).filter(|&g| g != k).map(|g| confusion[g][k]).sum();
        let fn_: u64 = (0..5).filter(|&p| p != k).map(|p| confusion[k][p]).sum();
        if tp + fp + fn_ == 0 {
            continue; // stays absent, reported as 1.0
        }
        score.present = true;
        score.precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        score.recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        score.f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    let trace: u64 = (0..5).map(|k| confusion[k][k]).sum();
    LayerMetrics {
        background: scores[0],
        other: scores[1],
        basal: scores[2],
        epithelium: scores[3],
        keratin: scores[4],
        accuracy: if total > 0 {
            trace as f64 / total as f64
        } else {
            1.0
        },
        mean_f1: scores.iter().map(|s| s.f1).sum::<f64>() / 5.0,
    }
}

/// Pixel-level precision/recall/F1 per layer class, overall accuracy and
/// the unweighted mean F1. Classes absent from both maps score 1.0 and are
/// flagged not-present.
pub fn layer_metrics(gt_layers: &Raster2D<u8>, pred_layers: &Raster2D<u8>) -> Result<LayerMetrics> {
    Ok(layer_metrics_from_confusion(&layer_confusion(
        gt_layers,
        pred_layers,
    )?))
}

/// Every metric for one evaluation run. Serializes to the fixed JSON key
/// set; in-memory extras (keratin F-score, presence flags) are skipped.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub aji: f64,
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    pub f_d: f64,
    pub f_c_other: f64,
    pub f_c_basal: f64,
    pub f_c_epithelium: f64,
    /// Computed but excluded from the serialized report and summary means:
    /// keratin-layer nuclei are too rare to score meaningfully.
    #[serde(skip)]
    pub f_c_keratin: ClassScore,
    #[serde(skip)]
    pub f_c_flags: BTreeMap<FinalClass, bool>,
    pub layer: LayerMetrics,
}

/// Runs the full metric suite over one tile.
pub fn compute_report(
    gt_instances: &InstanceLabelMap,
    pred_instances: &InstanceLabelMap,
    gt_classes: &BTreeMap<u32, FinalClass>,
    pred_classes: &BTreeMap<u32, FinalClass>,
    gt_layers: &Raster2D<u8>,
    pred_layers: &Raster2D<u8>,
) -> Result<MetricsReport> {
    let matching = match_instances(gt_instances, pred_instances)?;
    let (dq, sq, pq) = panoptic_quality(&matching);
    let aji = aggregated_jaccard(gt_instances, pred_instances)?;
    let dice = binary_dice(gt_instances, pred_instances)?;
    let f = f_scores(&matching, gt_classes, pred_classes)?;
    let layer = layer_metrics(gt_layers, pred_layers)?;
    Ok(MetricsReport {
        dice,
        aji,
        dq,
        sq,
        pq,
        f_d: f.detection,
        f_c_other: f.per_class[&FinalClass::Other].f1,
        f_c_basal: f.per_class[&FinalClass::Basal].f1,
        f_c_epithelium: f.per_class[&FinalClass::Epithelium].f1,
        f_c_keratin: f.per_class[&FinalClass::Keratin],
        f_c_flags: f
            .per_class
            .iter()
            .map(|(&class, score)| (class, score.present))
            .collect(),
        layer,
    })
}

/// Pools raw counts across tiles; metrics derive from the pooled counts,
/// never from averaging per-tile metric values.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    tp: u64,
    fp: u64,
    fn_: u64,
    iou_sum: f64,
    aji_c: u64,
    aji_u: u64,
    fg_inter: u64,
    fg_gt: u64,
    fg_pred: u64,
    class_counts: BTreeMap<FinalClass, (u64, u64, u64)>,
    layer_confusion: [[u64; 5]; 5],
    pub tiles: usize,
}

impl MetricsAccumulator {
    pub fn accumulate(
        &mut self,
        gt_instances: &InstanceLabelMap,
        pred_instances: &InstanceLabelMap,
        gt_classes: &BTreeMap<u32, FinalClass>,
        pred_classes: &BTreeMap<u32, FinalClass>,
        gt_layers: &Raster2D<u8>,
        pred_layers: &Raster2D<u8>,
    ) -> Result<()> {
        let matching = match_instances(gt_instances, pred_instances)?;
        self.tp += matching.pairs.len() as u64;
        self.fp += matching.unmatched_pred.len() as u64;
        self.fn_ += matching.unmatched_gt.len() as u64;
        self.iou_sum += matching.pairs.iter().map(|&(_, _, i)| i).sum::<f64>();

        let (c, u) = aji_counts(gt_instances, pred_instances)?;
        self.aji_c += c;
        self.aji_u += u;

        let (h, w) = gt_instances.extent();
        for r in 0..h {
            for c in 0..w {
                let g = gt_instances.get(r, c) > 0;
                let p = pred_instances.get(r, c) > 0;
                self.fg_gt += g as u64;
                self.fg_pred += p as u64;
                self.fg_inter += (g && p) as u64;
            }
        }

        for class in FinalClass::ALL {
            let mut tp_t = 0u64;
            let mut fp_t = 0u64;
            let mut fn_t = 0u64;
            for &(g, p, _) in &matching.pairs {
                let gc = *gt_classes.get(&g).ok_or(Error::MissingClass(g))?;
                let pc = *pred_classes.get(&p).ok_or(Error::MissingClass(p))?;
                match (gc == class, pc == class) {
                    (true, true) => tp_t += 1,
                    (true, false) => fn_t += 1,
                    (false, true) => fp_t += 1,
                    (false, false) => {}
                }
            }
            for &g in &matching.unmatched_gt {
                if *gt_classes.get(&g).ok_or(Error::MissingClass(g))? == class {
                    fn_t += 1;
                }
            }
            for &p in &matching.unmatched_pred {
                if *pred_classes.get(&p).ok_or(Error::MissingClass(p))? == class {
                    fp_t += 1;
                }
            }
            let entry = self.class_counts.entry(class).or_insert((0, 0, 0));
            entry.0 += tp_t;
            entry.1 += fp_t;
            entry.2 += fn_t;
        }

        let confusion = layer_confusion(gt_layers, pred_layers)?;
        for g in 0..5 {
            for p in 0..5 {
                self.layer_confusion[g][p] += confusion[g][p];
            }
        }
        self.tiles += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
        self.aji_c += other.aji_c;
        self.aji_u += other.aji_u;
        self.fg_inter += other.fg_inter;
        self.fg_gt += other.fg_gt;
        self.fg_pred += other.fg_pred;
        for (class, &(tp, fp, fn_)) in &other.class_counts {
            let entry = self.class_counts.entry(*class).or_insert((0, 0, 0));
            entry.0 += tp;
            entry.1 += fp;
            entry.2 += fn_;
        }
        for g in 0..5 {
            for p in 0..5 {
                self.layer_confusion[g][p] += other.layer_confusion[g][p];
            }
        }
        self.tiles += other.tiles;
    }

    pub fn finalize(&self) -> MetricsReport {
        let (dq, sq, pq) = if self.tp == 0 {
            if self.fp == 0 && self.fn_ == 0 {
                (1.0, 1.0, 1.0)
            } else {
                (0.0, 0.0, 0.0)
            }
        } else {
            let dq = self.tp as f64 / (self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64);
            let sq = self.iou_sum / self.tp as f64;
            (dq, sq, dq * sq)
        };
        let f_d = if self.tp + self.fp + self.fn_ == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
        };
        let mut f_c = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for class in FinalClass::ALL {
            let (tp, fp, fn_) = self.class_counts.get(&class).copied().unwrap_or((0, 0, 0));
            let present = tp + fp + fn_ > 0;
            let f1 = if present {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            } else {
                1.0
            };
            f_c.insert(class, ClassScore { f1, present });
            flags.insert(class, present);
        }
        MetricsReport {
            dice: if self.fg_gt + self.fg_pred == 0 {
                1.0
            } else {
                2.0 * self.fg_inter as f64 / (self.fg_gt + self.fg_pred) as f64
            },
            aji: if self.aji_u == 0 {
                1.0
            } else {
                self.aji_c as f64 / self.aji_u as f64
            },
            dq,
            sq,
            pq,
            f_d,
            f_c_other: f_c[&FinalClass::Other].f1,
            f_c_basal: f_c[&FinalClass::Basal].f1,
            f_c_epithelium: f_c[&FinalClass::Epithelium].f1,
            f_c_keratin: f_c[&FinalClass::Keratin],
            f_c_flags: flags,
            layer: layer_metrics_from_confusion(&self.layer_confusion),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(rows: &[&[u32]]) -> InstanceLabelMap {
        let h = rows.len();
        let w = rows[0].len();
        let mut map = InstanceLabelMap::zeros(h, w).unwrap();
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                map.set(r, c, v);
            }
        }
        map
    }

    fn layers_from(rows: &[&[u8]]) -> Raster2D<u8> {
        let h = rows.len();
        let w = rows[0].len();
        let mut out = Raster2D::filled(h, w, 1, 0u8).unwrap();
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                out.set(0, r, c, v);
            }
        }
        out
    }

    #[test]
    fn identical_maps_match_perfectly() {
        let map = map_from(&[&[1, 1, 0, 2], &[1, 1, 0, 2], &[0, 0, 0, 0]]);
        let matching = match_instances(&map, &map).unwrap();
        assert_eq!(matching.pairs, vec![(1, 1, 1.0), (2, 2, 1.0)]);
        assert!(matching.unmatched_gt.is_empty());
        assert!(matching.unmatched_pred.is_empty());
        let (dq, sq, pq) = panoptic_quality(&matching);
        assert_eq!((dq, sq, pq), (1.0, 1.0, 1.0));
        assert_eq!(aggregated_jaccard(&map, &map).unwrap(), 1.0);
        assert_eq!(binary_dice(&map, &map).unwrap(), 1.0);
    }

    #[test]
    fn iou_point_six_pair() {
        // gt: 2x2 square; pred: 3 of those pixels plus 1 outside.
        let gt = map_from(&[&[1, 1, 0], &[1, 1, 0], &[0, 0, 0]]);
        let pred = map_from(&[&[1, 1, 1], &[1, 0, 0], &[0, 0, 0]]);
        let matching = match_instances(&gt, &pred).unwrap();
        assert_eq!(matching.pairs.len(), 1);
        let (_, _, iou) = matching.pairs[0];
        assert_eq!(iou, 0.6);
        let (dq, sq, pq) = panoptic_quality(&matching);
        assert_eq!(dq, 1.0);
        assert_eq!(sq, 0.6);
        assert_eq!(pq, 0.6);
        assert_eq!(aggregated_jaccard(&gt, &pred).unwrap(), 0.6);
    }

    #[test]
    fn iou_exactly_half_is_not_matched() {
        // gt is a 2x4 block (8 px); pred covers exactly half of it, so
        // intersection 4 against union 8 gives IoU = 0.5 exactly.
        let gt = map_from(&[&[1, 1, 1, 1], &[1, 1, 1, 1]]);
        let pred = map_from(&[&[1, 1, 0, 0], &[1, 1, 0, 0]]);
        let matching = match_instances(&gt, &pred).unwrap();
        assert!(matching.pairs.is_empty());
        assert_eq!(matching.unmatched_gt, vec![1]);
        assert_eq!(matching.unmatched_pred, vec![1]);
        let (dq, sq, pq) = panoptic_quality(&matching);
        assert_eq!((dq, sq, pq), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missed_instance_lowers_dq() {
        // 2 gt objects, 1 pred matching the first with IoU 0.8:
        // gt object of 5 px, pred covers 4 of them (iou 4/5).
        let gt = map_from(&[&[1, 1, 1, 1, 1, 0, 2, 2], &[0; 8]]);
        let pred = map_from(&[&[1, 1, 1, 1, 0, 0, 0, 0], &[0; 8]]);
        let matching = match_instances(&gt, &pred).unwrap();
        assert_eq!(matching.pairs.len(), 1);
        assert_eq!(matching.pairs[0].2, 0.8);
        let (dq, sq, pq) = panoptic_quality(&matching);
        assert!((dq - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(sq, 0.8);
        assert!((pq - 0.8 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn disjoint_maps_have_zero_aji() {
        let gt = map_from(&[&[1, 1, 0, 0]]);
        let pred = map_from(&[&[0, 0, 1, 1]]);
        assert_eq!(aggregated_jaccard(&gt, &pred).unwrap(), 0.0);
        assert_eq!(binary_dice(&gt, &pred).unwrap(), 0.0);
    }

    #[test]
    fn empty_maps_score_one() {
        let empty = InstanceLabelMap::zeros(4, 4).unwrap();
        assert_eq!(aggregated_jaccard(&empty, &empty).unwrap(), 1.0);
        assert_eq!(binary_dice(&empty, &empty).unwrap(), 1.0);
        let matching = match_instances(&empty, &empty).unwrap();
        assert_eq!(panoptic_quality(&matching), (1.0, 1.0, 1.0));
    }

    #[test]
    fn aji_uses_each_prediction_once() {
        // One pred overlapping two gt objects: only the first (ascending)
        // gt claims it; the second penalizes the union with its full area.
        let gt = map_from(&[&[1, 1, 2, 2]]);
        let pred = map_from(&[&[0, 1, 1, 0]]);
        // gt 1: overlap 1, iou 1/3 -> claims pred 1: C=1, U=2+2-1=3
        // gt 2: no available pred -> U += 2; unused preds: none
        let (c, u) = aji_counts(&gt, &pred).unwrap();
        assert_eq!((c, u), (1, 5));
    }

    #[test]
    fn binary_dice_half_overlap() {
        let gt = map_from(&[&[1, 1, 1, 1, 0, 0]]);
        let pred = map_from(&[&[0, 0, 1, 1, 1, 1]]);
        assert_eq!(binary_dice(&gt, &pred).unwrap(), 0.5);
        assert_eq!(
            binary_dice(&gt, &pred).unwrap(),
            binary_dice(&pred, &gt).unwrap()
        );
    }

    #[test]
    fn detection_f_score_counts() {
        let gt = map_from(&[&[1, 1, 1, 1, 1, 0, 2, 2], &[0; 8]]);
        let pred = map_from(&[&[1, 1, 1, 1, 0, 0, 0, 0], &[0; 8]]);
        let matching = match_instances(&gt, &pred).unwrap();
        let mut gt_classes = BTreeMap::new();
        gt_classes.insert(1, FinalClass::Other);
        gt_classes.insert(2, FinalClass::Other);
        let mut pred_classes = BTreeMap::new();
        pred_classes.insert(1, FinalClass::Other);
        let f = f_scores(&matching, &gt_classes, &pred_classes).unwrap();
        assert!((f.detection - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn class_swap_halves_basal_f1() {
        // 3 matched pairs; gt classes {basal, basal, epithelium};
        // pred classes {basal, epithelium, basal} (a swap on the last two).
        let gt = map_from(&[&[1, 1, 0, 2, 2, 0, 3, 3]]);
        let pred = map_from(&[&[1, 1, 0, 2, 2, 0, 3, 3]]);
        let matching = match_instances(&gt, &pred).unwrap();
        let gt_classes: BTreeMap<u32, FinalClass> = [
            (1, FinalClass::Basal),
            (2, FinalClass::Basal),
            (3, FinalClass::Epithelium),
        ]
        .into();
        let pred_classes: BTreeMap<u32, FinalClass> = [
            (1, FinalClass::Basal),
            (2, FinalClass::Epithelium),
            (3, FinalClass::Basal),
        ]
        .into();
        let f = f_scores(&matching, &gt_classes, &pred_classes).unwrap();
        // basal: TP=1, FP=1 (pred 3), FN=1 (gt 2) -> 2/(2+1+1)
        assert_eq!(f.per_class[&FinalClass::Basal].f1, 0.5);
        // epithelium: TP=0, FP=1 (pred 2), FN=1 (gt 3)
        assert_eq!(f.per_class[&FinalClass::Epithelium].f1, 0.0);
        assert!(!f.per_class[&FinalClass::Keratin].present);
        assert_eq!(f.per_class[&FinalClass::Keratin].f1, 1.0);
    }

    #[test]
    fn misclassified_only_match_scores_zero() {
        // the only basal gt is predicted epithelium
        let gt = map_from(&[&[1, 1, 1, 0]]);
        let pred = map_from(&[&[1, 1, 1, 0]]);
        let matching = match_instances(&gt, &pred).unwrap();
        let gt_classes: BTreeMap<u32, FinalClass> = [(1, FinalClass::Basal)].into();
        let pred_classes: BTreeMap<u32, FinalClass> = [(1, FinalClass::Epithelium)].into();
        let f = f_scores(&matching, &gt_classes, &pred_classes).unwrap();
        assert_eq!(f.per_class[&FinalClass::Basal].f1, 0.0);
        assert_eq!(f.per_class[&FinalClass::Epithelium].f1, 0.0);
        assert_eq!(f.detection, 1.0);
    }

    #[test]
    fn missing_class_errors() {
        let gt = map_from(&[&[1, 1, 1, 0]]);
        let matching = match_instances(&gt, &gt).unwrap();
        let empty = BTreeMap::new();
        assert_eq!(
            f_scores(&matching, &empty, &empty),
            Err(Error::MissingClass(1))
        );
    }

    #[test]
    fn layer_metrics_identity() {
        let layers = layers_from(&[&[0, 1, 2], &[3, 4, 0]]);
        let m = layer_metrics(&layers, &layers).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.mean_f1, 1.0);
        for class in LayerClass::ALL {
            assert_eq!(m.class(class).f1, 1.0);
        }
    }

    #[test]
    fn layer_metrics_half_background() {
        // gt: half background, half epithelium; pred: all background.
        let gt = layers_from(&[&[0, 0, 3, 3], &[0, 0, 3, 3]]);
        let pred = layers_from(&[&[0, 0, 0, 0], &[0, 0, 0, 0]]);
        let m = layer_metrics(&gt, &pred).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.background.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.epithelium.f1, 0.0);
        assert!(!m.basal.present);
        assert_eq!(m.basal.f1, 1.0);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall() {
        let a = layers_from(&[&[0, 1, 1, 2], &[2, 2, 1, 0]]);
        let b = layers_from(&[&[0, 1, 2, 2], &[2, 1, 1, 1]]);
        let ab = layer_metrics(&a, &b).unwrap();
        let ba = layer_metrics(&b, &a).unwrap();
        for class in LayerClass::ALL {
            assert_eq!(ab.class(class).precision, ba.class(class).recall);
            assert_eq!(ab.class(class).recall, ba.class(class).precision);
            assert_eq!(ab.class(class).f1, ba.class(class).f1);
        }
        assert_eq!(ab.accuracy, ba.accuracy);
    }

    #[test]
    fn accumulator_matches_single_tile_report() {
        let gt = map_from(&[&[1, 1, 0, 2], &[1, 1, 0, 2]]);
        let pred = map_from(&[&[1, 1, 0, 0], &[1, 1, 0, 0]]);
        let classes: BTreeMap<u32, FinalClass> =
            [(1, FinalClass::Basal), (2, FinalClass::Other)].into();
        let pred_classes: BTreeMap<u32, FinalClass> = [(1, FinalClass::Basal)].into();
        let layers = layers_from(&[&[0, 2, 2, 1], &[0, 2, 2, 1]]);
        let report = compute_report(&gt, &pred, &classes, &pred_classes, &layers, &layers).unwrap();
        let mut acc = MetricsAccumulator::default();
        acc.accumulate(&gt, &pred, &classes, &pred_classes, &layers, &layers)
            .unwrap();
        let pooled = acc.finalize();
        assert_eq!(report.pq, pooled.pq);
        assert_eq!(report.aji, pooled.aji);
        assert_eq!(report.dice, pooled.dice);
        assert_eq!(report.f_d, pooled.f_d);
        assert_eq!(report.f_c_basal, pooled.f_c_basal);
        assert_eq!(report.layer.accuracy, pooled.layer.accuracy);
    }

    #[test]
    fn relabeling_leaves_metrics_unchanged() {
        let gt = map_from(&[&[1, 1, 0, 2], &[1, 1, 0, 2]]);
        let pred = map_from(&[&[1, 1, 0, 2], &[1, 0, 0, 2]]);
        // permute pred labels 1<->2
        let permuted = map_from(&[&[2, 2, 0, 1], &[2, 0, 0, 1]]);
        let m1 = match_instances(&gt, &pred).unwrap();
        let m2 = match_instances(&gt, &permuted).unwrap();
        assert_eq!(panoptic_quality(&m1), panoptic_quality(&m2));
        assert_eq!(
            aggregated_jaccard(&gt, &pred).unwrap(),
            aggregated_jaccard(&gt, &permuted).unwrap()
        );
        assert_eq!(
            binary_dice(&gt, &pred).unwrap(),
            binary_dice(&gt, &permuted).unwrap()
        );
    }
}
