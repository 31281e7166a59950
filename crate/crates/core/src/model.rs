//! Shared domain types: boxes, document classes, annotations, detector and
//! OCR outputs, and content-addressed image references.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;

use image::DynamicImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Field delimiter used by annotation files and serialized extraction output.
pub const DELIMITER: &str = "::";

/// Axis-aligned rectangle in pixel space, origin top-left.
///
/// Coordinates are kept as reals; rounding only happens when a crop is cut.
/// Mapped regions may temporarily extend past the image (including negative
/// coordinates) until they are clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in ({x0}, {y0}, {x1}, {y1})"
            )));
        }
        if x1 < x0 || y1 < y0 {
            return Err(Error::InvalidBox(format!(
                "({x0}, {y0}, {x1}, {y1}) has negative extent"
            )));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    /// Builds a box from computed coordinates, collapsing sub-epsilon
    /// inversions caused by floating point noise.
    pub(crate) fn ordered(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox {
            x0,
            y0,
            x1: x1.max(x0),
            y1: y1.max(y0),
        }
    }

    pub fn from_origin_size(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Half-open containment: `[x0, x1) × [y0, y1)`.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    /// `s·box + (tx, ty)` componentwise, with independent axis scales.
    pub fn scale_translate(&self, sx: f64, sy: f64, tx: f64, ty: f64) -> BBox {
        BBox::ordered(
            self.x0 * sx + tx,
            self.y0 * sy + ty,
            self.x1 * sx + tx,
            self.y1 * sy + ty,
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x0, self.y0, self.x1, self.y1)
    }
}

/// The five supported identity document layouts.
///
/// Declaration order is alphabetical by class id, which is also the detector
/// label index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DocumentClass {
    Adhaar,
    DrivingLicence,
    Pan,
    Passport,
    VoterCard,
}

impl DocumentClass {
    pub const ALL: [DocumentClass; 5] = [
        DocumentClass::Adhaar,
        DocumentClass::DrivingLicence,
        DocumentClass::Pan,
        DocumentClass::Passport,
        DocumentClass::VoterCard,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DocumentClass::Adhaar => "adhaar_v1_p1",
            DocumentClass::DrivingLicence => "dl_v1_p1",
            DocumentClass::Pan => "pan_v1",
            DocumentClass::Passport => "passport_v1_p1",
            DocumentClass::VoterCard => "votercard_v1",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DocumentClass::Adhaar => "Adhaar Card",
            DocumentClass::DrivingLicence => "Driving Licence",
            DocumentClass::Pan => "PAN Card",
            DocumentClass::Passport => "Passport",
            DocumentClass::VoterCard => "Voter Card",
        }
    }

    /// Code carried by the bundled template for this class.
    pub fn template_code(self) -> &'static str {
        match self {
            DocumentClass::Adhaar => "ADHAAR_V1_P1",
            DocumentClass::DrivingLicence => "DL_V1_P1",
            DocumentClass::Pan => "PAN",
            DocumentClass::Passport => "PASSPORT_V1_P1",
            DocumentClass::VoterCard => "VOTERCARD_V1",
        }
    }

    /// Alphabetical rank of the class id; used as the label class index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Annotation field order (template region codes).
    pub fn field_order(self) -> &'static [&'static str] {
        match self {
            DocumentClass::Adhaar => &["NAME", "DATE_OF_BIRTH", "GENDER", "ADHAAR_NUMBER"],
            DocumentClass::DrivingLicence => &[
                "DRIVING_LICENCE_NUMBER",
                "DATE_OF_ISSUE",
                "VALADITY_TILL_DATE",
                "DATE_OF_BIRTH",
                "BLOOD_GROUP",
                "NAME",
                "FATHERS_NAME",
            ],
            DocumentClass::Pan => &[
                "NAME",
                "FATHERS_NAME",
                "PERMANENT_ACCOUNT_NUMBER",
                "DATE_OF_BIRTH",
            ],
            DocumentClass::Passport => &[
                "PASSPORT_NUMBER",
                "SURNAME",
                "GIVEN_NAME",
                "DATE_OF_BIRTH",
                "GENDER",
                "PLACE_OF_BIRTH",
                "PLACE_OF_ISSUE",
                "DATE_OF_ISSUE",
                "DATE_OF_EXPIRY",
            ],
            DocumentClass::VoterCard => &[
                "NAME",
                "HUSBANDS_NAME",
                "VOTERCARD_NUMBER",
                "GENDER",
                "DATE_OF_BIRTH",
            ],
        }
    }

    pub fn field_count(self) -> usize {
        self.field_order().len()
    }

    /// Recognises a class id (`pan_v1`) or a template code (`PAN`,
    /// `PASSPORT_V1_P1`), case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL.into_iter().find(|c| {
            c.id().eq_ignore_ascii_case(s) || c.template_code().eq_ignore_ascii_case(s)
        })
    }
}

impl fmt::Display for DocumentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DocumentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s).ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

impl TryFrom<String> for DocumentClass {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DocumentClass> for String {
    fn from(c: DocumentClass) -> Self {
        c.id().to_string()
    }
}

/// Ordered field values for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    class: DocumentClass,
    fields: Vec<(String, String)>,
}

impl Annotation {
    /// Builds an annotation from values listed in the class field order.
    pub fn new(class: DocumentClass, values: Vec<String>) -> Result<Self> {
        let order = class.field_order();
        if values.len() != order.len() {
            return Err(Error::FieldCountMismatch {
                class: class.id().to_string(),
                expected: order.len(),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| v.contains(DELIMITER)) {
            return Err(Error::DelimiterCollision(bad.clone()));
        }
        let fields = order
            .iter()
            .map(|c| c.to_string())
            .zip(values)
            .collect();
        Ok(Annotation { class, fields })
    }

    pub fn class(&self) -> DocumentClass {
        self.class
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn value(&self, code: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(c, _)| c == code)
            .map(|(_, v)| v.as_str())
    }

    pub fn serialize(&self) -> Result<String> {
        serialize_annotation(self)
    }
}

/// Joins annotation values with `::` in field order.
pub fn serialize_annotation(ann: &Annotation) -> Result<String> {
    if let Some((_, bad)) = ann.fields.iter().find(|(_, v)| v.contains(DELIMITER)) {
        return Err(Error::DelimiterCollision(bad.clone()));
    }
    Ok(join_fields(ann.fields.iter().map(|(_, v)| v.as_str())))
}

/// Inverse of [`serialize_annotation`]. Tolerates one trailing newline.
pub fn parse_annotation(class: DocumentClass, line: &str) -> Result<Annotation> {
    let line = line
        .strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(line);
    let values: Vec<String> = line.split(DELIMITER).map(str::to_string).collect();
    Annotation::new(class, values)
}

pub(crate) fn join_fields<'a>(values: impl IntoIterator<Item = &'a str>) -> String {
    values.into_iter().collect::<Vec<_>>().join(DELIMITER)
}

/// Rewrites any `::` inside an extracted value so the joined output stays
/// unambiguous.
pub fn scrub_value(value: &str) -> String {
    let mut out = value.to_string();
    while out.contains(DELIMITER) {
        out = out.replace(DELIMITER, ": :");
    }
    out
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Range(format!("{name} {v} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    #[serde(rename = "class_id")]
    pub class: DocumentClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl DetectionResult {
    pub fn new(class: DocumentClass, bbox: BBox, confidence: f64) -> Result<Self> {
        check_unit("confidence", confidence)?;
        Ok(DetectionResult {
            class,
            bbox,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrSpan {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub text: String,
    pub score: f64,
}

impl OcrSpan {
    pub fn new(bbox: BBox, text: impl Into<String>, score: f64) -> Result<Self> {
        check_unit("score", score)?;
        Ok(OcrSpan {
            bbox,
            text: text.into(),
            score,
        })
    }
}

/// Hex SHA-256 over the raster layout (color type, width, height) and bytes.
pub fn content_hash(image: &DynamicImage) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{:?}", image.color()).as_bytes());
    hasher.update(image.width().to_le_bytes());
    hasher.update(image.height().to_le_bytes());
    hasher.update(image.as_bytes());
    hex::encode(hasher.finalize())
}

/// A raster plus its content digest and, when known, the manifest it was
/// rendered from. The digest is computed on first use.
#[derive(Debug)]
pub struct ImageRef {
    image: DynamicImage,
    manifest_id: Option<String>,
    path: Option<PathBuf>,
    hash: OnceLock<String>,
}

impl ImageRef {
    pub fn new(image: DynamicImage) -> Self {
        ImageRef {
            image,
            manifest_id: None,
            path: None,
            hash: OnceLock::new(),
        }
    }

    pub fn with_manifest_id(mut self, id: impl Into<String>) -> Self {
        self.manifest_id = Some(id.into());
        self
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let image =
            image::load_from_memory(bytes).map_err(|e| Error::BadImage(e.to_string()))?;
        Ok(ImageRef::new(image))
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let image = image::open(&path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::BadImage(format!("{}: {other}", path.display())),
        })?;
        Ok(ImageRef::new(image).with_path(path))
    }

    pub fn image(&self) -> &DynamicImage {
        &self.image
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn manifest_id(&self) -> Option<&str> {
        self.manifest_id.as_deref()
    }

    pub fn path(&self) -> Option<&std::path::Path> {
        self.path.as_deref()
    }

    pub fn content_hash(&self) -> &str {
        self.hash.get_or_init(|| content_hash(&self.image))
    }
}
