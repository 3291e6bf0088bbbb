use celldet_core::geometry::PatchRegistration;
use celldet_core::Raster;

/// Bilinear value of channel `c` at the real-valued location `(sx, sy)`.
pub fn bilinear(r: &Raster, c: usize, sx: f64, sy: f64) -> f64 {
    let (h, w) = r.dims();
    let x0 = sx.floor().clamp(0.0, (w - 1) as f64) as usize;
    let y0 = sy.floor().clamp(0.0, (h - 1) as f64) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let v = |x, y| r.get(c, y, x);
    v(x0, y0) * (1.0 - fx) * (1.0 - fy) + v(x1, y0) * fx * (1.0 - fy) + v(x0, y1) * (1.0 - fx) * fy + v(x1, y1) * fx * fy
}

/// Tissue channel `c` as seen at cell pixel `(x, y)`: corner-aligned mapping
/// of the cell grid onto the registered tissue window.
pub fn ctm_tissue_value(tissue: &Raster, c: usize, reg: &PatchRegistration, cell_h: usize, cell_w: usize, x: usize, y: usize) -> f64 {
    let (ox, oy) = reg.cell_offset_in_tissue;
    let (ew, eh) = reg.cell_extent_in_tissue;
    let map = |v: usize, n: usize, e: usize| if n == 1 || e == 1 { 0.0 } else { v as f64 * (e - 1) as f64 / (n - 1) as f64 };
    bilinear(tissue, c, ox as f64 + map(x, cell_w, ew), oy as f64 + map(y, cell_h, eh))
}
