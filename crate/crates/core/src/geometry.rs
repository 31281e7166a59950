//! Anchor-based region mapping from template coordinates into an input image.

use crate::error::{Error, Result};
use crate::model::BBox;

/// The template anchor box and where the same anchor text was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorCorrespondence {
    template: BBox,
    found: BBox,
}

impl AnchorCorrespondence {
    pub fn new(template_anchor: BBox, found_anchor: BBox) -> Result<Self> {
        if template_anchor.width() <= 0.0 || template_anchor.height() <= 0.0 {
            return Err(Error::DegenerateAnchor(format!(
                "template anchor {template_anchor} has zero extent"
            )));
        }
        Ok(AnchorCorrespondence {
            template: template_anchor,
            found: found_anchor,
        })
    }

    pub fn template_anchor(&self) -> BBox {
        self.template
    }

    pub fn found_anchor(&self) -> BBox {
        self.found
    }

    /// Per-axis scale from template to input. Zero when the found anchor
    /// collapsed.
    pub fn scale(&self) -> (f64, f64) {
        (
            (self.found.width() / self.template.width()).max(0.0),
            (self.found.height() / self.template.height()).max(0.0),
        )
    }
}

/// Maps a template region into the input image.
///
/// Start corners are offset from the found anchor's start, end corners from
/// its end, each scaled by the anchor size ratio on that axis.
pub fn map_region(corr: &AnchorCorrespondence, region: &BBox) -> BBox {
    let (o, f) = (corr.template, corr.found);
    let sx = (f.x1() - f.x0()).max(0.0) / (o.x1() - o.x0());
    let sy = (f.y1() - f.y0()).max(0.0) / (o.y1() - o.y0());
    // Written as x * s + offset so an identity correspondence is exact.
    let ax = region.x0() * sx + (f.x0() - o.x0() * sx);
    let ay = region.y0() * sy + (f.y0() - o.y0() * sy);
    let bx = region.x1() * sx + (f.x1() - o.x1() * sx);
    let by = region.y1() * sy + (f.y1() - o.y1() * sy);
    BBox::ordered(ax, ay, bx, by)
}

/// The similar-triangles form: every corner is measured from the found
/// anchor's start corner.
pub fn map_region_ratio_form(corr: &AnchorCorrespondence, region: &BBox) -> BBox {
    let (o, f) = (corr.template, corr.found);
    let (sx, sy) = corr.scale();
    let ax = f.x0() + sx * (region.x0() - o.x0());
    let ay = f.y0() + sy * (region.y0() - o.y0());
    let bx = f.x0() + sx * (region.x1() - o.x0());
    let by = f.y0() + sy * (region.y1() - o.y0());
    BBox::ordered(ax, ay, bx, by)
}

/// Clamps a box to `[0, width] × [0, height]`.
pub fn clamp_to_image(b: &BBox, width: u32, height: u32) -> Result<BBox> {
    if width == 0 || height == 0 {
        return Err(Error::Range(format!("image size {width}x{height}")));
    }
    let (w, h) = (width as f64, height as f64);
    let x0 = b.x0().clamp(0.0, w);
    let y0 = b.y0().clamp(0.0, h);
    let x1 = b.x1().clamp(0.0, w);
    let y1 = b.y1().clamp(0.0, h);
    if x1 - x0 <= 0.0 || y1 - y0 <= 0.0 {
        return Err(Error::EmptyCrop);
    }
    Ok(BBox::ordered(x0, y0, x1, y1))
}

/// Integer pixel window `(x, y, w, h)` for cropping a clamped box.
/// Coordinates truncate toward zero.
pub fn crop_window(b: &BBox) -> Result<(u32, u32, u32, u32)> {
    let x0 = b.x0() as u32;
    let y0 = b.y0() as u32;
    let x1 = b.x1() as u32;
    let y1 = b.y1() as u32;
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::EmptyCrop);
    }
    Ok((x0, y0, x1 - x0, y1 - y0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    const ADHAAR_ANCHOR: [f64; 4] = [786.0, 215.0, 1629.0, 307.0];
    const NAME: [f64; 4] = [911.0, 566.0, 2105.0, 681.0];

    fn arr(b: [f64; 4]) -> BBox {
        bx(b[0], b[1], b[2], b[3])
    }

    #[test]
    fn identity_mapping_is_exact() {
        let corr = AnchorCorrespondence::new(arr(ADHAAR_ANCHOR), arr(ADHAAR_ANCHOR)).unwrap();
        assert_eq!(map_region(&corr, &arr(NAME)), arr(NAME));
    }

    #[test]
    fn pure_scale_two() {
        let o = arr(ADHAAR_ANCHOR);
        let f = o.scale_translate(2.0, 2.0, 0.0, 0.0);
        let corr = AnchorCorrespondence::new(o, f).unwrap();
        assert_eq!(map_region(&corr, &arr(NAME)), bx(1822.0, 1132.0, 4210.0, 1362.0));
    }

    #[test]
    fn pure_translation() {
        let o = arr(ADHAAR_ANCHOR);
        let f = o.scale_translate(1.0, 1.0, 37.0, -12.0);
        let corr = AnchorCorrespondence::new(o, f).unwrap();
        assert_eq!(
            map_region(&corr, &arr(NAME)),
            bx(948.0, 554.0, 2142.0, 669.0)
        );
    }

    #[test]
    fn degenerate_template_anchor() {
        let o = bx(10.0, 10.0, 10.0, 20.0);
        assert!(matches!(
            AnchorCorrespondence::new(o, o),
            Err(Error::DegenerateAnchor(_))
        ));
    }

    #[test]
    fn collapsed_found_anchor_collapses_region() {
        let o = arr(ADHAAR_ANCHOR);
        let f = bx(50.0, 60.0, 50.0, 60.0);
        let corr = AnchorCorrespondence::new(o, f).unwrap();
        let m = map_region(&corr, &arr(NAME));
        assert_eq!(m.width(), 0.0);
        assert_eq!(m.height(), 0.0);
        assert!(matches!(clamp_to_image(&m, 100, 100), Err(Error::EmptyCrop)));
    }

    #[test]
    fn clamping() {
        assert_eq!(
            clamp_to_image(&bx(-5.0, -5.0, 10.0, 10.0), 100, 100).unwrap(),
            bx(0.0, 0.0, 10.0, 10.0)
        );
        assert_eq!(
            clamp_to_image(&bx(90.0, 90.0, 120.0, 120.0), 100, 100).unwrap(),
            bx(90.0, 90.0, 100.0, 100.0)
        );
        assert!(matches!(
            clamp_to_image(&bx(150.0, 150.0, 160.0, 160.0), 100, 100),
            Err(Error::EmptyCrop)
        ));
    }

    #[test]
    fn crop_window_truncates() {
        assert_eq!(
            crop_window(&bx(1.9, 2.2, 10.7, 5.99)).unwrap(),
            (1, 2, 9, 3)
        );
        assert!(crop_window(&bx(1.2, 1.0, 1.8, 5.0)).is_err());
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn affine_equivariance(
            ox in 0.0f64..3000.0, oy in 0.0f64..3000.0,
            ow in 1.0f64..2000.0, oh in 1.0f64..500.0,
            rx in 0.0f64..3000.0, ry in 0.0f64..3000.0,
            rw in 0.0f64..2000.0, rh in 0.0f64..500.0,
            sx in 0.05f64..8.0, sy in 0.05f64..8.0,
            a in -2000.0f64..2000.0, b in -2000.0f64..2000.0,
        ) {
            let o = bx(ox, oy, ox + ow, oy + oh);
            let f = BBox::ordered(a + sx * o.x0(), b + sy * o.y0(), a + sx * o.x1(), b + sy * o.y1());
            let r = bx(rx, ry, rx + rw, ry + rh);
            let corr = AnchorCorrespondence::new(o, f).unwrap();
            let m = map_region(&corr, &r);
            let want = [a + sx * r.x0(), b + sy * r.y0(), a + sx * r.x1(), b + sy * r.y1()];
            for (got, want) in m.to_array().into_iter().zip(want) {
                prop_assert!(rel_close(got, want, 1e-9), "{got} vs {want}");
            }
            prop_assert!(rel_close(m.width(), sx * r.width(), 1e-9));
            prop_assert!(rel_close(m.height(), sy * r.height(), 1e-9));
            let alt = map_region_ratio_form(&corr, &r);
            for (p, q) in m.to_array().into_iter().zip(alt.to_array()) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }
    }
}
