//! Document templates: the anchor region, the data regions and the
//! annotation field order for each class.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::{BBox, DocumentClass};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawIdentifying {
    code: String,
    isx: f64,
    isy: f64,
    iex: f64,
    iey: f64,
    osx: f64,
    osy: f64,
    oex: f64,
    oey: f64,
    identifying_text: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    code: String,
    osx: f64,
    osy: f64,
    oex: f64,
    oey: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    code: String,
    identifying_region: RawIdentifying,
    data_regions: Vec<RawRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    field_order: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyingRegion {
    pub code: String,
    pub identifying_text: String,
    pub identified_box: BBox,
    pub outer_box: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRegion {
    pub code: String,
    pub region_box: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub code: String,
    pub identifying_region: IdentifyingRegion,
    pub data_regions: Vec<DataRegion>,
    pub field_order: Vec<String>,
}

fn schema_box(what: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<BBox> {
    BBox::new(x0, y0, x1, y1).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

impl Template {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawTemplate =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawTemplate) -> Result<Self> {
        let id = &raw.identifying_region;
        if id.iex <= id.isx || id.iey <= id.isy {
            return Err(Error::DegenerateAnchor(format!(
                "{}: identified box ({}, {}, {}, {})",
                raw.code, id.isx, id.isy, id.iex, id.iey
            )));
        }
        let identifying_region = IdentifyingRegion {
            code: id.code.clone(),
            identifying_text: id.identifying_text.clone(),
            identified_box: schema_box("identified box", id.isx, id.isy, id.iex, id.iey)?,
            outer_box: schema_box("identifying outer box", id.osx, id.osy, id.oex, id.oey)?,
        };
        let mut seen = HashSet::new();
        let mut data_regions = Vec::with_capacity(raw.data_regions.len());
        for r in &raw.data_regions {
            if !seen.insert(r.code.as_str()) {
                return Err(Error::Schema(format!("duplicate region code {}", r.code)));
            }
            data_regions.push(DataRegion {
                code: r.code.clone(),
                region_box: schema_box(&r.code, r.osx, r.osy, r.oex, r.oey)?,
            });
        }
        let field_order = match raw.field_order {
            Some(order) => order,
            None => data_regions.iter().map(|r| r.code.clone()).collect(),
        };
        let mut seen_order = HashSet::new();
        for code in &field_order {
            if !seen.contains(code.as_str()) {
                return Err(Error::Schema(format!(
                    "field_order code {code} has no data region"
                )));
            }
            if !seen_order.insert(code.as_str()) {
                return Err(Error::Schema(format!("field_order repeats {code}")));
            }
        }
        Ok(Template {
            code: raw.code,
            identifying_region,
            data_regions,
            field_order,
        })
    }

    pub fn to_json(&self) -> String {
        let id = &self.identifying_region;
        let (i, o) = (id.identified_box, id.outer_box);
        let raw = RawTemplate {
            code: self.code.clone(),
            identifying_region: RawIdentifying {
                code: id.code.clone(),
                isx: i.x0(),
                isy: i.y0(),
                iex: i.x1(),
                iey: i.y1(),
                osx: o.x0(),
                osy: o.y0(),
                oex: o.x1(),
                oey: o.y1(),
                identifying_text: id.identifying_text.clone(),
            },
            data_regions: self
                .data_regions
                .iter()
                .map(|r| RawRegion {
                    code: r.code.clone(),
                    osx: r.region_box.x0(),
                    osy: r.region_box.y0(),
                    oex: r.region_box.x1(),
                    oey: r.region_box.y1(),
                })
                .collect(),
            field_order: Some(self.field_order.clone()),
        };
        serde_json::to_string_pretty(&raw).expect("template serializes")
    }

    pub fn identifying_text(&self) -> &str {
        &self.identifying_region.identifying_text
    }

    pub fn identified_box(&self) -> BBox {
        self.identifying_region.identified_box
    }

    pub fn region(&self, code: &str) -> Option<&DataRegion> {
        self.data_regions.iter().find(|r| r.code == code)
    }

    /// Data regions in annotation order.
    pub fn ordered_regions(&self) -> impl Iterator<Item = &DataRegion> {
        self.field_order
            .iter()
            .map(|c| self.region(c).expect("field_order validated at load"))
    }

    /// The class whose template code this is, if any.
    pub fn class(&self) -> Option<DocumentClass> {
        DocumentClass::ALL
            .into_iter()
            .find(|c| c.template_code() == self.code)
    }
}

pub fn load_template(path: impl AsRef<Path>) -> Result<Template> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).at(path)?;
    Template::from_json(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn template_file_name(class: DocumentClass) -> String {
    format!("{}_template.json", class.id())
}

fn bundled_source(class: DocumentClass) -> &'static str {
    match class {
        DocumentClass::Adhaar => include_str!("../templates/adhaar_v1_p1_template.json"),
        DocumentClass::DrivingLicence => include_str!("../templates/dl_v1_p1_template.json"),
        DocumentClass::Pan => include_str!("../templates/pan_v1_template.json"),
        DocumentClass::Passport => include_str!("../templates/passport_v1_p1_template.json"),
        DocumentClass::VoterCard => include_str!("../templates/votercard_v1_template.json"),
    }
}

/// One validated template per class. Immutable once built.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: BTreeMap<DocumentClass, Template>,
}

impl Registry {
    /// The templates compiled into the crate.
    pub fn bundled() -> Self {
        let mut templates = BTreeMap::new();
        for class in DocumentClass::ALL {
            let t = Template::from_json(bundled_source(class)).expect("bundled template parses");
            templates.insert(class, t);
        }
        Self::from_templates(templates).expect("bundled templates are consistent")
    }

    /// Loads `<class_id>_template.json` for every class from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut templates = BTreeMap::new();
        for class in DocumentClass::ALL {
            templates.insert(class, load_template(dir.join(template_file_name(class)))?);
        }
        Self::from_templates(templates)
    }

    /// Writes the bundled templates into `dir`.
    pub fn write_bundled(dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).at(dir)?;
        for class in DocumentClass::ALL {
            let path = dir.join(template_file_name(class));
            std::fs::write(&path, bundled_source(class)).at(&path)?;
        }
        Ok(())
    }

    fn from_templates(templates: BTreeMap<DocumentClass, Template>) -> Result<Self> {
        for (class, t) in &templates {
            if t.class() != Some(*class) {
                return Err(Error::TemplateMismatch {
                    template: t.code.clone(),
                    class: class.id().to_string(),
                });
            }
            if t.field_order != class.field_order() {
                return Err(Error::Schema(format!(
                    "{}: field_order {:?} does not match the {} annotation layout",
                    t.code,
                    t.field_order,
                    class.id()
                )));
            }
        }
        Ok(Registry { templates })
    }

    pub fn get(&self, class: DocumentClass) -> &Template {
        &self.templates[&class]
    }

    pub fn registry_for(&self, class_id: &str) -> Result<&Template> {
        let class: DocumentClass = class_id.parse()?;
        Ok(self.get(class))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_match_layouts() {
        let reg = Registry::bundled();
        let adhaar = reg.registry_for("adhaar_v1_p1").unwrap();
        assert_eq!(adhaar.code, "ADHAAR_V1_P1");
        assert_eq!(adhaar.identifying_text(), "Government of India");
        assert_eq!(adhaar.data_regions.len(), 4);
        assert_eq!(
            adhaar.identified_box(),
            BBox::new(786.0, 215.0, 1629.0, 307.0).unwrap()
        );
        let dl = reg.get(DocumentClass::DrivingLicence);
        assert_eq!(dl.data_regions.len(), 7);
        assert_eq!(dl.data_regions[0].code, "NAME");
        assert_eq!(dl.code, "DL_V1_P1");
        let voter = reg.registry_for("votercard_v1").unwrap();
        assert_eq!(voter.identifying_text(), "ELECTION COMMISSION OF INDIA");
        assert_eq!(voter.code, "VOTERCARD_V1");
        let passport = reg.get(DocumentClass::Passport);
        assert!(passport.data_regions.len() > passport.field_order.len());
        let lens: Vec<usize> = DocumentClass::ALL
            .iter()
            .map(|c| reg.get(*c).field_order.len())
            .collect();
        assert_eq!(lens, vec![4, 7, 4, 9, 5]);
        assert!(matches!(reg.registry_for("x"), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn degenerate_anchor_rejected() {
        let src = bundled_source(DocumentClass::Adhaar).replace("\"iex\": 1629", "\"iex\": 786");
        assert!(matches!(
            Template::from_json(&src),
            Err(Error::DegenerateAnchor(_))
        ));
    }

    #[test]
    fn schema_errors() {
        let src = bundled_source(DocumentClass::Pan).replace("\"identifying_text\"", "\"text\"");
        assert!(matches!(Template::from_json(&src), Err(Error::Schema(_))));
        let src = bundled_source(DocumentClass::Pan).replace("\"code\": \"PAN\"", "\"code\": \"PAN\", \"extra\": 1");
        assert!(matches!(Template::from_json(&src), Err(Error::Schema(_))));
    }

    #[test]
    fn field_order_defaults_to_region_order() {
        let mut v: serde_json::Value =
            serde_json::from_str(bundled_source(DocumentClass::DrivingLicence)).unwrap();
        v.as_object_mut().unwrap().remove("field_order");
        let t = Template::from_json(&v.to_string()).unwrap();
        let codes: Vec<&str> = t.data_regions.iter().map(|r| r.code.as_str()).collect();
        assert_eq!(t.field_order, codes);
    }

    #[test]
    fn json_round_trip_and_dir_load() {
        let dir = tempfile::tempdir().unwrap();
        Registry::write_bundled(dir.path()).unwrap();
        let loaded = Registry::load_dir(dir.path()).unwrap();
        let bundled = Registry::bundled();
        for c in DocumentClass::ALL {
            assert_eq!(loaded.get(c), bundled.get(c));
            assert_eq!(&Template::from_json(&bundled.get(c).to_json()).unwrap(), bundled.get(c));
        }
    }

    #[test]
    fn mismatched_code_rejected() {
        let dir = tempfile::tempdir().unwrap();
        Registry::write_bundled(dir.path()).unwrap();
        let voter = dir.path().join(template_file_name(DocumentClass::VoterCard));
        let src = std::fs::read_to_string(&voter)
            .unwrap()
            .replace("VOTERCARD_V1", "PASSPORT_V1_P1");
        std::fs::write(&voter, src).unwrap();
        assert!(matches!(
            Registry::load_dir(dir.path()),
            Err(Error::TemplateMismatch { .. })
        ));
    }
}
