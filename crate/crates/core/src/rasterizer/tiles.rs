use crate::geometry::Cov2;
use crate::scalar::Scalar;

/// Screen-space footprint of one primitive, ready for binning/compositing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat<S> {
    pub mean2d: [S; 2],
    pub cov2d: Cov2<S>,
    pub conic: Cov2<S>,
    pub depth: S,
    pub color: [S; 3],
    /// Activated opacity, before any modulation.
    pub opacity: S,
}

/// Inclusive pixel rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Pixels where `opacity · G(x) ≥ alpha_cutoff` can occur, clipped to the
/// image. This is the Mahalanobis ellipse `dᵀ Σ⁻¹ d ≤ 2 ln(opacity / cutoff)`
/// (≈3.3σ at full opacity), bounded by its axis-aligned box.
pub fn footprint<S: Scalar>(
    mean2d: &[S; 2],
    cov2d: &Cov2<S>,
    opacity: S,
    alpha_cutoff: S,
    width: usize,
    height: usize,
) -> Option<PixelRect> {
    if !(opacity >= alpha_cutoff) {
        return None;
    }
    let r2 = S::lit(2.0) * (opacity / alpha_cutoff).ln() * S::lit(1.0 + 1e-6) + S::lit(1e-9);
    let hx = (r2 * cov2d[0]).sqrt();
    let hy = (r2 * cov2d[2]).sqrt();
    let lo_x = (mean2d[0] - hx).ceil();
    let hi_x = (mean2d[0] + hx).floor();
    let lo_y = (mean2d[1] - hy).ceil();
    let hi_y = (mean2d[1] + hy).floor();
    let maxx = S::from_usize(width).unwrap() - S::one();
    let maxy = S::from_usize(height).unwrap() - S::one();
    if !(hi_x >= S::zero() && hi_y >= S::zero() && lo_x <= maxx && lo_y <= maxy) {
        return None;
    }
    let clamp = |v: S, max: S| v.max(S::zero()).min(max).to_usize().unwrap_or(0);
    Some(PixelRect {
        x0: clamp(lo_x, maxx),
        y0: clamp(lo_y, maxy),
        x1: clamp(hi_x, maxx),
        y1: clamp(hi_y, maxy),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Per tile (row-major), primitive indices in front-to-back order.
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn entry_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Pixel bounds of tile `t` (exclusive upper ends).
    pub fn tile_pixels(&self, t: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, (x0 + self.tile_size).min(width), (y0 + self.tile_size).min(height))
    }
}

/// Stable front-to-back order: ascending depth, ties broken by index.
pub fn depth_order<S: Scalar>(splats: &[Option<Splat<S>>]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..splats.len() as u32).filter(|&i| splats[i as usize].is_some()).collect();
    order.sort_by(|&a, &b| {
        let da = splats[a as usize].as_ref().unwrap().depth;
        let db = splats[b as usize].as_ref().unwrap().depth;
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

/// Assigns every splat to the tiles its footprint overlaps. `effective_opacity`
/// is the opacity used for compositing (after any modulation). Lists inherit
/// the global front-to-back order.
pub fn tile_bin<S: Scalar>(
    splats: &[Option<Splat<S>>],
    effective_opacity: &[S],
    tile_size: usize,
    width: usize,
    height: usize,
    alpha_cutoff: S,
) -> TileBins {
    let tile_size = tile_size.max(1);
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for idx in depth_order(splats) {
        let s = splats[idx as usize].as_ref().unwrap();
        let Some(rect) = footprint(&s.mean2d, &s.cov2d, effective_opacity[idx as usize], alpha_cutoff, width, height)
        else {
            continue;
        };
        for ty in rect.y0 / tile_size..=rect.y1 / tile_size {
            for tx in rect.x0 / tile_size..=rect.x1 / tile_size {
                lists[ty * tiles_x + tx].push(idx);
            }
        }
    }
    TileBins {
        tile_size,
        tiles_x,
        tiles_y,
        lists,
    }
}
