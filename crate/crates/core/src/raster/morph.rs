//! Binary morphology with a disk structuring element, plus small-object
//! and small-hole removal.

use super::{connected_components, BinaryMask, Connectivity};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erode then dilate.
    Open,
    /// Dilate then erode.
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemoveMode {
    Objects,
    Holes,
}

/// Offsets of the disk structuring element: all (dr, dc) with
/// dr² + dc² ≤ radius².
pub fn disk_offsets(radius: usize) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r2 {
                offsets.push((dr, dc));
            }
        }
    }
    offsets
}

/// Binary morphology with a disk of the given radius.
///
/// Out-of-bounds neighbours are ignored, which for a disk element is
/// identical to replicate border padding: a clamped window position always
/// falls on another position of the same window.
pub fn morphology(mask: &BinaryMask, op: MorphOp, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    match op {
        MorphOp::Erode => erode(mask, &offsets),
        MorphOp::Dilate => dilate(mask, &offsets),
        MorphOp::Open => dilate(&erode(mask, &offsets), &offsets),
        MorphOp::Close => erode(&dilate(mask, &offsets), &offsets),
    }
}

fn erode(mask: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    let (h, w) = mask.extent();
    let mut out = BinaryMask::zeros(h, w).expect("mask extent is valid");
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut keep = true;
            for &(dr, dc) in offsets {
                let nr = r as i64 + dr as i64;
                let nc = c as i64 + dc as i64;
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                if !mask.get(nr as usize, nc as usize) {
                    keep = false;
                    break;
                }
            }
            if keep {
                out.set(r, c, true);
            }
        }
    }
    out
}

fn dilate(mask: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    let (h, w) = mask.extent();
    let mut out = BinaryMask::zeros(h, w).expect("mask extent is valid");
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in offsets {
                let nr = r as i64 + dr as i64;
                let nc = c as i64 + dc as i64;
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                out.set(nr as usize, nc as usize, true);
            }
        }
    }
    out
}

/// Flips connected foreground regions (`Objects`) or enclosed background
/// regions not touching the raster border (`Holes`) whose area is below
/// `min_area`. Components are 4-connected.
pub fn remove_small(mask: &BinaryMask, mode: RemoveMode, min_area: usize) -> BinaryMask {
    let (h, w) = mask.extent();
    match mode {
        RemoveMode::Objects => {
            let labels = connected_components(mask, Connectivity::Four);
            let areas = labels.areas();
            let mut out = mask.clone();
            for r in 0..h {
                for c in 0..w {
                    let l = labels.get(r, c);
                    if l > 0 && areas[&l] < min_area {
                        out.set(r, c, false);
                    }
                }
            }
            out
        }
        RemoveMode::Holes => {
            let complement =
                BinaryMask::from_fn(h, w, |r, c| !mask.get(r, c)).expect("mask extent is valid");
            let labels = connected_components(&complement, Connectivity::Four);
            let areas = labels.areas();
            let mut touches_border = std::collections::BTreeSet::new();
            for r in 0..h {
                for &c in &[0, w - 1] {
                    let l = labels.get(r, c);
                    if l > 0 {
                        touches_border.insert(l);
                    }
                }
            }
            for c in 0..w {
                for &r in &[0, h - 1] {
                    let l = labels.get(r, c);
                    if l > 0 {
                        touches_border.insert(l);
                    }
                }
            }
            let mut out = mask.clone();
            for r in 0..h {
                for c in 0..w {
                    let l = labels.get(r, c);
                    if l > 0 && !touches_border.contains(&l) && areas[&l] < min_area {
                        out.set(r, c, true);
                    }
                }
            }
            out
        }
    }
}
