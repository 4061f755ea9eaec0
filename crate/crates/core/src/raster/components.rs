//! Connected-component labelling.

use std::collections::VecDeque;

use super::{BinaryMask, InstanceLabelMap};

/// Pixel adjacency used by component labelling and hole filling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Labels each maximal connected foreground region 1..K, in raster-scan
/// order of each region's first pixel. An empty mask yields K = 0.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> InstanceLabelMap {
    let (h, w) = mask.extent();
    let mut out = InstanceLabelMap::zeros(h, w).expect("mask extent is valid");
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || out.get(r, c) != 0 {
                continue;
            }
            next += 1;
            out.set(r, c, next);
            queue.push_back((r, c));
            while let Some((qr, qc)) = queue.pop_front() {
                for &(dr, dc) in connectivity.offsets() {
                    let nr = qr as i64 + dr as i64;
                    let nc = qc as i64 + dc as i64;
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask.get(nr, nc) && out.get(nr, nc) == 0 {
                        out.set(nr, nc, next);
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    out
}

/// Normalizes an instance map: splits any label whose pixels are not one
/// connected set, then renumbers all instances densely 1..K in raster-scan
/// order of first pixel.
pub fn relabel(map: &InstanceLabelMap, connectivity: Connectivity) -> InstanceLabelMap {
    let (h, w) = map.extent();
    let mut out = InstanceLabelMap::zeros(h, w).expect("map extent is valid");
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            let original = map.get(r, c);
            if original == 0 || out.get(r, c) != 0 {
                continue;
            }
            next += 1;
            out.set(r, c, next);
            queue.push_back((r, c));
            while let Some((qr, qc)) = queue.pop_front() {
                for &(dr, dc) in connectivity.offsets() {
                    let nr = qr as i64 + dr as i64;
                    let nc = qc as i64 + dc as i64;
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if map.get(nr, nc) == original && out.get(nr, nc) == 0 {
                        out.set(nr, nc, next);
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    out
}
