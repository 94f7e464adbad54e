//! 4-connected component labeling and hole filling on row-major masks.

const NEIGHBORS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn flood(
    mask: &[bool],
    height: usize,
    width: usize,
    seed: usize,
    target: bool,
    labels: &mut [u32],
    label: u32,
) -> usize {
    let mut stack = vec![seed];
    labels[seed] = label;
    let mut size = 0;
    while let Some(p) = stack.pop() {
        size += 1;
        let (y, x) = ((p / width) as isize, (p % width) as isize);
        for (dy, dx) in NEIGHBORS {
            let (ny, nx) = (y + dy, x + dx);
            if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                continue;
            }
            let q = ny as usize * width + nx as usize;
            if mask[q] == target && labels[q] == 0 {
                labels[q] = label;
                stack.push(q);
            }
        }
    }
    size
}

/// Labels foreground components `1..=n` in raster order of their first
/// pixel; background is 0. Returns labels and the size of each component.
pub fn label_components(mask: &[bool], height: usize, width: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    for p in 0..mask.len() {
        if mask[p] && labels[p] == 0 {
            let label = sizes.len() as u32 + 1;
            sizes.push(flood(mask, height, width, p, true, &mut labels, label));
        }
    }
    (labels, sizes)
}

/// The largest 4-connected component, ties going to the one whose first
/// pixel comes earliest in raster order. `None` if the mask is empty.
pub fn largest_component(mask: &[bool], height: usize, width: usize) -> Option<Vec<bool>> {
    let (labels, sizes) = label_components(mask, height, width);
    let (best, _) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })?;
    let label = best as u32 + 1;
    Some(labels.iter().map(|&l| l == label).collect())
}

/// Sets every background pixel that cannot reach the image border through
/// 4-connected background.
pub fn fill_holes(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut reached = vec![0u32; mask.len()];
    let border = (0..width)
        .flat_map(|x| [x, (height - 1) * width + x])
        .chain((0..height).flat_map(|y| [y * width, y * width + width - 1]));
    for p in border {
        if !mask[p] && reached[p] == 0 {
            flood(mask, height, width, p, false, &mut reached, 1);
        }
    }
    mask.iter()
        .zip(&reached)
        .map(|(&m, &r)| m || r == 0)
        .collect()
}

/// True when the foreground is one 4-connected component with no holes.
pub fn is_solid_region(mask: &[bool], height: usize, width: usize) -> bool {
    let (_, sizes) = label_components(mask, height, width);
    sizes.len() <= 1 && fill_holes(mask, height, width) == mask
}
