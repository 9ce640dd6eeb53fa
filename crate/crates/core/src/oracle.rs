//! Brute-force reference implementations used to check the miners on small
//! instances. Everything here is recomputed from scratch and shares no code
//! with the production selection engine.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::greedy::GreedyStep;
use crate::positive::GroundTruth;
use crate::pyramid::Canvas;

pub const MAX_CANDIDATES: usize = 20;
pub const MAX_ELEMENTS: usize = 10;

/// Corner-wise enclosure with shared edges allowed.
pub fn naive_encloses(outer: &BBox, inner: &BBox) -> bool {
    let [ox, oy, ow, oh] = outer.to_array();
    let [ix, iy, iw, ih] = inner.to_array();
    ox <= ix && oy <= iy && ix + iw <= ox + ow && iy + ih <= oy + oh
}

/// `m[e][c]`: candidate `c` encloses element `e`.
pub fn enclosure_matrix(elements: &[BBox], candidates: &[BBox]) -> Vec<Vec<bool>> {
    elements
        .iter()
        .map(|e| candidates.iter().map(|c| naive_encloses(c, e)).collect())
        .collect()
}

/// Textbook greedy: every round recounts each candidate's uncovered
/// elements, keeps the first maximum and stops below `min_gain`.
pub fn naive_greedy(m: &[Vec<bool>], n_candidates: usize, min_gain: usize) -> Vec<GreedyStep> {
    let mut covered = vec![false; m.len()];
    let mut steps = Vec::new();
    loop {
        let gains: Vec<usize> = (0..n_candidates)
            .map(|c| (0..m.len()).filter(|&e| !covered[e] && m[e][c]).count())
            .collect();
        let best = gains.iter().copied().max().unwrap_or(0);
        if best == 0 || best < min_gain {
            return steps;
        }
        let candidate = gains.iter().position(|&g| g == best).unwrap();
        for (e, row) in m.iter().enumerate() {
            if row[candidate] {
                covered[e] = true;
            }
        }
        steps.push(GreedyStep { candidate, gain: best });
    }
}

/// Size of the smallest candidate set covering every coverable element,
/// found by exhaustive search over subsets in increasing size.
pub fn min_cover_size(m: &[Vec<bool>], n_candidates: usize) -> Result<usize> {
    if n_candidates > MAX_CANDIDATES || m.len() > MAX_ELEMENTS {
        return Err(Error::InstanceTooLarge {
            candidates: n_candidates,
            boxes: m.len(),
        });
    }
    let masks: Vec<u32> = (0..n_candidates)
        .map(|c| {
            m.iter()
                .enumerate()
                .filter(|(_, row)| row[c])
                .fold(0u32, |acc, (e, _)| acc | 1 << e)
        })
        .collect();
    let target = masks.iter().fold(0u32, |a, b| a | b);
    for k in 0..=n_candidates {
        if exists_cover(&masks, target, k, 0, 0) {
            return Ok(k);
        }
    }
    unreachable!("the full candidate set covers the target")
}

fn exists_cover(masks: &[u32], target: u32, k: usize, start: usize, acc: u32) -> bool {
    if acc == target {
        return true;
    }
    if k == 0 {
        return false;
    }
    (start..masks.len()).any(|c| exists_cover(masks, target, k - 1, c + 1, acc | masks[c]))
}

/// `b` scaled field-wise by the canvas factor and clipped to the resized
/// content, as corners `[x1, y1, x2, y2]`; `None` below one pixel.
pub fn naive_canvas_corners(b: &BBox, canvas: &Canvas) -> Option<[f64; 4]> {
    let f = canvas.factor;
    let [x, y, w, h] = b.to_array();
    let (sx, sy) = (x * f, y * f);
    let x1 = sx.max(0.0);
    let y1 = sy.max(0.0);
    let x2 = (sx + w * f).min(f64::from(canvas.content_w));
    let y2 = (sy + h * f).min(f64::from(canvas.content_h));
    (x2 - x1 >= 1.0 && y2 - y1 >= 1.0).then_some([x1, y1, x2, y2])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceCover {
    /// Fewest candidates enclosing every enclosable box.
    pub min_cover_size: usize,
    /// Reference greedy trace.
    pub per_step_argmax: Vec<GreedyStep>,
    /// Boxes some candidate encloses.
    pub enclosable: usize,
}

/// Exhaustive reference for positive chip selection on one canvas.
pub fn brute_force_cover(valid: &[GroundTruth], candidates: &[BBox], canvas: &Canvas) -> Result<BruteForceCover> {
    if candidates.len() > MAX_CANDIDATES || valid.len() > MAX_ELEMENTS {
        return Err(Error::InstanceTooLarge {
            candidates: candidates.len(),
            boxes: valid.len(),
        });
    }
    let m: Vec<Vec<bool>> = valid
        .iter()
        .map(|g| match naive_canvas_corners(&g.bbox, canvas) {
            Some([x1, y1, x2, y2]) => candidates
                .iter()
                .map(|c| {
                    let [cx, cy, cw, ch] = c.to_array();
                    cx <= x1 && cy <= y1 && x2 <= cx + cw && y2 <= cy + ch
                })
                .collect(),
            None => vec![false; candidates.len()],
        })
        .collect();
    Ok(BruteForceCover {
        min_cover_size: min_cover_size(&m, candidates.len())?,
        per_step_argmax: naive_greedy(&m, candidates.len(), 1),
        enclosable: m.iter().filter(|row| row.iter().any(|&v| v)).count(),
    })
}

/// Greedy set-cover approximation bound `(1 + ln n) * opt`.
pub fn greedy_bound(n_elements: usize, opt: usize) -> f64 {
    if n_elements == 0 {
        return 0.0;
    }
    (1.0 + (n_elements as f64).ln()) * opt as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn small_instance() {
        let elements = [b(0., 0., 1., 1.), b(5., 0., 1., 1.), b(9., 0., 1., 1.)];
        let candidates = [b(0., 0., 6., 2.), b(4., 0., 6., 2.), b(0., 0., 2., 2.)];
        let m = enclosure_matrix(&elements, &candidates);
        let steps = naive_greedy(&m, 3, 1);
        assert_eq!(steps[0], GreedyStep { candidate: 0, gain: 2 });
        assert_eq!(steps.len(), 2);
        assert_eq!(min_cover_size(&m, 3).unwrap(), 2);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // classic: a greedy-attractive middle set, optimum uses two halves
        let e: Vec<BBox> = (0..6).map(|i| b(i as f64 * 10.0, 0., 1., 1.)).collect();
        let mut m = vec![vec![false; 3]; 6];
        for (i, row) in m.iter_mut().enumerate() {
            row[0] = i < 3;
            row[1] = i >= 3;
            row[2] = (1..5).contains(&i);
        }
        assert_eq!(naive_greedy(&m, 3, 1).len(), 3);
        assert_eq!(min_cover_size(&m, 3).unwrap(), 2);
        assert_eq!(e.len(), 6);
    }

    #[test]
    fn brute_force_examples() {
        use crate::pyramid::{resolve_canvas, AreaRange, ResizeRule, ScaleSpec};
        let spec = ScaleSpec {
            index: 1,
            rule: ResizeRule::Factor(1.0),
            chip_size: 512,
            stride: 32,
            range: AreaRange::unbounded_above(0.0),
        };
        let canvas = resolve_canvas(1000, 600, &spec).unwrap();
        let gt = |id, x| GroundTruth {
            id,
            bbox: b(x, 10., 20., 20.),
            category: 1,
            is_crowd: false,
        };
        let one = brute_force_cover(&[gt(1, 10.)], &[b(0., 0., 512., 512.)], &canvas).unwrap();
        assert_eq!((one.min_cover_size, one.per_step_argmax.len()), (1, 1));
        let two = brute_force_cover(&[gt(1, 10.), gt(2, 100.)], &[b(0., 0., 512., 512.)], &canvas).unwrap();
        assert_eq!((two.min_cover_size, two.per_step_argmax.len()), (1, 1));
        let none = brute_force_cover(&[gt(1, 900.)], &[b(0., 0., 512., 512.)], &canvas).unwrap();
        assert_eq!((none.min_cover_size, none.enclosable), (0, 0));
    }

    #[test]
    fn too_large() {
        let m = vec![vec![false; 21]; 1];
        assert!(matches!(min_cover_size(&m, 21), Err(Error::InstanceTooLarge { .. })));
    }
}
