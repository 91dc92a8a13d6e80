use std::collections::VecDeque;

use super::BinaryMask;

/// Connected-component labeling result. Label 0 is background; labels
/// `1..=count` index into `areas` at `label - 1`.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    pub areas: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

pub(crate) fn neighbors8(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    NEIGHBORS_8.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}

/// Labels 8-connected components in raster order of their first pixel.
pub fn label_components(mask: &BinaryMask) -> Components {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        let mut area = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            for (nx, ny) in neighbors8(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        areas.push(area);
    }
    Components { labels, areas }
}

pub fn component_count(mask: &BinaryMask) -> usize {
    label_components(mask).count()
}

/// Binary opening by the four two-pixel line segments of the 8-neighborhood
/// (horizontal, vertical and both diagonals), taking the union of the four
/// openings. A set pixel survives iff at least one of its 8-neighbors is set,
/// so isolated pixels vanish while one-pixel-wide lines in any direction are
/// preserved.
pub fn open_isolated(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y) && neighbors8(x, y, w, h).any(|(nx, ny)| mask.get(nx, ny))
    })
}

/// Drops 8-connected components whose area is below `min_area`.
pub fn remove_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let comps = label_components(mask);
    let (w, h) = mask.dims();
    let bits = comps
        .labels
        .iter()
        .map(|&l| l != 0 && comps.areas[l as usize - 1] >= min_area)
        .collect();
    BinaryMask::new(w, h, bits).expect("same shape")
}

/// One opening followed by small-component removal.
pub fn morphological_cleanup(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    remove_small_components(&open_isolated(mask), min_area)
}
