//! Base document rasterization, greyscale conversion, A4 placement and the
//! 14-variant fan-out.

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::font;
use crate::idgen::DocumentRecord;
use crate::manifest::{RenderManifest, TextItem, VariantKind};
use crate::model::{BBox, DocumentClass};
use crate::templates::Template;

pub const A4_WIDTH: u32 = 2480;
pub const A4_HEIGHT: u32 = 3508;
pub const A4_DOC_HEIGHT: u32 = 600;
pub const A4_POSITIONS: [(u32, u32); 6] = [
    (100, 100),
    (1500, 100),
    (100, 1000),
    (1500, 1000),
    (100, 2000),
    (1500, 2000),
];

/// Variants produced per base image.
pub const FANOUT: usize = 2 + 2 * A4_POSITIONS.len();

const INK: Rgb<u8> = Rgb([0, 0, 0]);
const BORDER: u32 = 6;

pub fn native_size(class: DocumentClass) -> (u32, u32) {
    match class {
        DocumentClass::Adhaar => (2830, 1770),
        DocumentClass::DrivingLicence => (804, 504),
        DocumentClass::Pan => (3200, 2019),
        DocumentClass::Passport => (2783, 1847),
        DocumentClass::VoterCard => (3200, 2015),
    }
}

fn background(class: DocumentClass) -> (Rgb<u8>, Rgb<u8>) {
    match class {
        DocumentClass::Adhaar => (Rgb([252, 247, 236]), Rgb([214, 120, 40])),
        DocumentClass::DrivingLicence => (Rgb([236, 244, 252]), Rgb([40, 90, 170])),
        DocumentClass::Pan => (Rgb([234, 246, 250]), Rgb([30, 120, 150])),
        DocumentClass::Passport => (Rgb([244, 240, 250]), Rgb([70, 50, 130])),
        DocumentClass::VoterCard => (Rgb([248, 248, 236]), Rgb([110, 110, 60])),
    }
}

/// Fixed spots for render-only strings, in native pixels: (tag, x, y, scale).
fn decoration_spots(class: DocumentClass) -> &'static [(&'static str, u32, u32, u32)] {
    match class {
        DocumentClass::Adhaar => &[("NAME_HI", 925, 440, 8), ("GENDER_HI", 600, 820, 8)],
        DocumentClass::DrivingLicence => &[
            ("ADDRESS", 300, 440, 1),
            ("FILE_NUMBER", 560, 300, 1),
            ("SIGNATURE", 600, 380, 1),
        ],
        DocumentClass::Pan => &[("SIGNATURE", 120, 1700, 10)],
        DocumentClass::Passport => &[
            ("FATHER", 200, 1380, 6),
            ("MOTHER", 200, 1450, 6),
            ("SPOUSE", 200, 1520, 6),
            ("ADDRESS", 200, 1590, 6),
            ("FILE_NUMBER", 200, 1660, 6),
        ],
        DocumentClass::VoterCard => &[
            ("NAME_HI", 1290, 760, 8),
            ("HUSBAND_HI", 1600, 1000, 8),
            ("GENDER_HI", 1500, 1240, 8),
        ],
    }
}

fn int_box(x: u32, y: u32, w: u32, h: u32) -> BBox {
    BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).expect("non-negative extent")
}

/// Draws `text` at the region's origin, as large as fits. Text wider than
/// the region at scale 1 is squeezed to the region width and flagged.
fn draw_in_region(
    img: &mut RgbImage,
    region: &BBox,
    code: &str,
    text: &str,
    warnings: &mut Vec<String>,
) -> BBox {
    let x = region.x0().ceil() as u32;
    let y = region.y0().ceil() as u32;
    let rw = (region.x1().floor() as u32).saturating_sub(x).max(1);
    let rh = (region.y1().floor() as u32).saturating_sub(y).max(1);
    let (tw, th) = font::text_size(text);
    if tw == 0 {
        return int_box(x, y, 0, 0);
    }
    let by_height = (3 * rh / 4) / th;
    let by_width = rw / tw;
    let scale = by_height.min(by_width).max(1);
    let (mut w, h) = (tw * scale, th * scale);
    if w > rw {
        warnings.push(format!("TextOverflow: {code} needs {w}px, region is {rw}px"));
        w = rw;
    }
    font::draw_text_fit(img, x, y, w, h, text, INK);
    int_box(x, y, w, h)
}

/// Renders a record onto a flat canvas of the class's native size.
pub fn render_base(
    record: &DocumentRecord,
    template: &Template,
    manifest_id: impl Into<String>,
) -> Result<(RgbImage, RenderManifest)> {
    let class = record.class;
    if template.class() != Some(class) {
        return Err(Error::TemplateMismatch {
            template: template.code.clone(),
            class: class.id().to_string(),
        });
    }
    let (w, h) = native_size(class);
    let (ground, edge) = background(class);
    let mut img = RgbImage::from_pixel(w, h, ground);
    for (x, y, p) in img.enumerate_pixels_mut() {
        if x < BORDER || y < BORDER || x >= w - BORDER || y >= h - BORDER {
            *p = edge;
        }
    }

    let mut texts = Vec::new();
    let mut warnings = Vec::new();

    let id = &template.identifying_region;
    let a = id.identified_box;
    let (ax, ay) = (a.x0() as u32, a.y0() as u32);
    let (aw, ah) = (a.x1() as u32 - ax, a.y1() as u32 - ay);
    font::draw_text_fit(&mut img, ax, ay, aw, ah, &id.identifying_text, INK);
    let anchor_box = int_box(ax, ay, aw, ah);
    texts.push(TextItem {
        tag: id.code.clone(),
        text: id.identifying_text.clone(),
        bbox: anchor_box,
    });

    for (code, value) in record.values() {
        let region = template
            .region(code)
            .ok_or_else(|| Error::Schema(format!("{} has no region {code}", template.code)))?;
        let bbox = draw_in_region(&mut img, &region.region_box, code, value, &mut warnings);
        texts.push(TextItem {
            tag: code.clone(),
            text: value.clone(),
            bbox,
        });
    }

    let spots = decoration_spots(class);
    for deco in &record.decorations {
        let bbox = if let Some(region) = template.region(&deco.tag) {
            draw_in_region(&mut img, &region.region_box, &deco.tag, &deco.text, &mut warnings)
        } else if let Some(&(_, x, y, scale)) = spots.iter().find(|s| s.0 == deco.tag) {
            let (dw, dh) = font::draw_text(&mut img, x, y, scale, &deco.text, INK);
            let dw = dw.min(w - BORDER - x);
            int_box(x, y, dw, dh)
        } else {
            continue;
        };
        texts.push(TextItem {
            tag: deco.tag.clone(),
            text: deco.text.clone(),
            bbox,
        });
    }

    let manifest = RenderManifest {
        manifest_id: manifest_id.into(),
        class_id: class,
        kind: VariantKind::Original,
        image_width: w,
        image_height: h,
        placement: int_box(0, 0, w, h),
        anchor_box,
        texts,
        source_serial: record.serial,
        warnings,
        content_hash: None,
    };
    Ok((img, manifest))
}

/// Fixed-point ITU-R 601-2 luma, rounding to nearest.
#[inline]
pub fn luma(p: &Rgb<u8>) -> u8 {
    let [r, g, b] = p.0;
    ((r as u32 * 19595 + g as u32 * 38470 + b as u32 * 7471 + 0x8000) >> 16) as u8
}

pub fn to_greyscale(img: &RgbImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let data: Vec<u8> = img.pixels().map(luma).collect();
    GrayImage::from_raw(w, h, data).expect("buffer matches dimensions")
}

/// Width of a document scaled to the A4 document height.
pub fn a4_width(w: u32, h: u32) -> u32 {
    (A4_DOC_HEIGHT as f64 * w as f64 / h as f64).round() as u32
}

/// White A4 page buffer with `doc` copied in row by row at `(x, y)`. The
/// caller has checked that the document fits.
fn white_page<P: image::Pixel<Subpixel = u8>>(
    doc: &image::ImageBuffer<P, Vec<u8>>,
    channels: usize,
    x: u32,
    y: u32,
) -> Vec<u8> {
    let stride = A4_WIDTH as usize * channels;
    let mut page = vec![255u8; stride * A4_HEIGHT as usize];
    let row = doc.width() as usize * channels;
    for (r, src) in doc.as_raw().chunks_exact(row).enumerate() {
        let start = (y as usize + r) * stride + x as usize * channels;
        page[start..start + row].copy_from_slice(src);
    }
    page
}

/// Document resized for A4 placement, in colour and greyscale.
pub struct A4Source {
    rgb: RgbImage,
    grey: GrayImage,
    scale: f64,
}

impl A4Source {
    pub fn new(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let (nw, nh) = (a4_width(w, h), A4_DOC_HEIGHT);
        // area averaging is much faster than a filtered resize when shrinking
        let rgb = if nw <= w && nh <= h {
            imageops::thumbnail(img, nw, nh)
        } else {
            imageops::resize(img, nw, nh, FilterType::Triangle)
        };
        let grey = to_greyscale(&rgb);
        A4Source {
            rgb,
            grey,
            scale: A4_DOC_HEIGHT as f64 / h as f64,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn placement(&self, x: u32, y: u32) -> Result<BBox> {
        let (w, h) = self.rgb.dimensions();
        if x + w > A4_WIDTH || y + h > A4_HEIGHT {
            return Err(Error::PlacementOverflow {
                width: w,
                height: h,
                x,
                y,
            });
        }
        Ok(int_box(x, y, w, h))
    }

    pub fn place_rgb(&self, x: u32, y: u32) -> Result<(RgbImage, BBox)> {
        let placement = self.placement(x, y)?;
        let canvas = white_page(&self.rgb, 3, x, y);
        Ok((RgbImage::from_raw(A4_WIDTH, A4_HEIGHT, canvas).expect("page size"), placement))
    }

    /// Equivalent to converting the colour composite, since white maps to
    /// white.
    pub fn place_grey(&self, x: u32, y: u32) -> Result<(GrayImage, BBox)> {
        let placement = self.placement(x, y)?;
        let canvas = white_page(&self.grey, 1, x, y);
        Ok((GrayImage::from_raw(A4_WIDTH, A4_HEIGHT, canvas).expect("page size"), placement))
    }
}

/// Pastes the document onto a white A4 canvas at `(x, y)`, resized to 600px
/// height. Returns the composite, the placement box and the scale applied to
/// text geometry.
pub fn place_on_a4(img: &RgbImage, x: u32, y: u32) -> Result<(RgbImage, BBox, f64)> {
    let src = A4Source::new(img);
    let (canvas, placement) = src.place_rgb(x, y)?;
    Ok((canvas, placement, src.scale))
}

pub struct Variant {
    pub name: String,
    pub image: DynamicImage,
    pub manifest: RenderManifest,
}

pub fn variant_names(stem: &str) -> Vec<String> {
    let mut names = vec![stem.to_string(), format!("{stem}_greyscale")];
    for (x, y) in A4_POSITIONS {
        names.push(format!("{stem}_a4_{x}_{y}"));
        names.push(format!("{stem}_a4_{x}_{y}_greyscale"));
    }
    names
}

/// Manifests of the 14 variants of a base, in naming order, computed from
/// geometry alone.
///
/// Variant kinds follow the base kind: the untouched copy keeps it, the
/// greyscale copy takes its greyscale counterpart.
pub fn fanout_manifests(manifest: &RenderManifest, stem: &str) -> Result<Vec<RenderManifest>> {
    let base_kind = manifest.kind;
    let (w, h) = (manifest.image_width, manifest.image_height);
    let rw = a4_width(w, h);
    let scale = A4_DOC_HEIGHT as f64 / h as f64;
    let mut out = Vec::with_capacity(FANOUT);
    out.push(manifest.renamed(stem.to_string(), base_kind));
    out.push(manifest.renamed(format!("{stem}_greyscale"), base_kind.greyscale()));
    for (x, y) in A4_POSITIONS {
        if x + rw > A4_WIDTH || y + A4_DOC_HEIGHT > A4_HEIGHT {
            return Err(Error::PlacementOverflow {
                width: rw,
                height: A4_DOC_HEIGHT,
                x,
                y,
            });
        }
        let name = format!("{stem}_a4_{x}_{y}");
        let m = manifest.transformed(
            name.clone(),
            VariantKind::A4,
            (A4_WIDTH, A4_HEIGHT),
            scale,
            (x as f64, y as f64),
            int_box(x, y, rw, A4_DOC_HEIGHT),
        );
        out.push(m.renamed(format!("{name}_greyscale"), VariantKind::A4Greyscale));
        out.insert(out.len() - 1, m);
    }
    Ok(out)
}

/// Streams the 14 variants of a base image to `sink`, in naming order.
pub fn fanout_with(
    image: &DynamicImage,
    manifest: &RenderManifest,
    stem: &str,
    mut sink: impl FnMut(Variant) -> Result<()>,
) -> Result<()> {
    let mut manifests = fanout_manifests(manifest, stem)?.into_iter();
    let mut next = |image: DynamicImage| {
        let m = manifests.next().expect("one manifest per variant");
        Variant {
            name: m.manifest_id.clone(),
            image,
            manifest: m,
        }
    };
    let rgb = image.to_rgb8();
    sink(next(image.clone()))?;
    sink(next(DynamicImage::ImageLuma8(to_greyscale(&rgb))))?;
    let src = A4Source::new(&rgb);
    for (x, y) in A4_POSITIONS {
        let (canvas, _) = src.place_rgb(x, y)?;
        sink(next(DynamicImage::ImageRgb8(canvas)))?;
        let (grey, _) = src.place_grey(x, y)?;
        sink(next(DynamicImage::ImageLuma8(grey)))?;
    }
    Ok(())
}

pub fn fanout(image: &DynamicImage, manifest: &RenderManifest, stem: &str) -> Result<Vec<Variant>> {
    let mut out = Vec::with_capacity(FANOUT);
    fanout_with(image, manifest, stem, |v| {
        out.push(v);
        Ok(())
    })?;
    Ok(out)
}
