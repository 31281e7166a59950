//! Seeded synthesis of document records: serial numbers, names, dates and
//! genders for every document class.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IoContext, Result};
use crate::model::{Annotation, DocumentClass};

const ALPHABET: &[u8; 26] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";

/// First driving licence serial; later licences count up from here.
pub const DL_FIRST_SERIAL: u64 = 1_620_240_000_001;

pub const BLOOD_GROUPS: [&str; 8] = ["A+", "A-", "B+", "B-", "O+", "O-", "AB+", "AB-"];

pub const CITIES: [&str; 21] = [
    "Tokyo",
    "Jakarta",
    "Delhi",
    "Guangzhou",
    "Mumbai",
    "Manila",
    "Shanghai",
    "São Paulo",
    "Seoul",
    "Mexico City",
    "Cairo",
    "New York",
    "Dhaka",
    "Beijing",
    "Kolkata",
    "Bangkok",
    "Shenzhen",
    "Moscow",
    "Buenos Aires",
    "Lagos",
    "Bangalore",
];

const HINDI_NAMES: [&str; 16] = [
    "आरव शर्मा",
    "विवान गुप्ता",
    "अदिति वर्मा",
    "ईशा सिंह",
    "कबीर मेहता",
    "अनन्या जोशी",
    "रोहन कपूर",
    "सान्या मल्होत्रा",
    "अर्जुन पटेल",
    "दिया रेड्डी",
    "विहान नायर",
    "मीरा अय्यर",
    "आदित्य चौहान",
    "कियारा बंसल",
    "रेयांश सक्सेना",
    "तारा भाटिया",
];

fn names(src: &'static str, cell: &'static OnceLock<Vec<&'static str>>) -> &'static [&'static str] {
    cell.get_or_init(|| src.split_whitespace().collect())
}

pub fn first_names() -> &'static [&'static str] {
    static CELL: OnceLock<Vec<&'static str>> = OnceLock::new();
    names(include_str!("../data/first_names.txt"), &CELL)
}

pub fn last_names() -> &'static [&'static str] {
    static CELL: OnceLock<Vec<&'static str>> = OnceLock::new();
    names(include_str!("../data/last_names.txt"), &CELL)
}

fn budget(class: DocumentClass) -> u32 {
    match class {
        DocumentClass::Adhaar => 12,
        DocumentClass::DrivingLicence => 13,
        DocumentClass::Pan => 4,
        DocumentClass::Passport => 7,
        DocumentClass::VoterCard => 7,
    }
}

/// Builds a string from the least significant decimal digit upwards. Each
/// position either prints the digit or the letter at that alphabet index.
fn digits_right_to_left(
    mut serial: u64,
    glyphs: usize,
    is_letter: impl Fn(usize) -> bool,
    space_before: impl Fn(usize) -> bool,
) -> String {
    let mut out: Vec<char> = Vec::with_capacity(glyphs + 2);
    for i in 0..glyphs {
        let d = (serial % 10) as usize;
        serial /= 10;
        if space_before(i) {
            out.push(' ');
        }
        out.push(if is_letter(i) {
            ALPHABET[d] as char
        } else {
            char::from(b'0' + d as u8)
        });
    }
    out.iter().rev().collect()
}

pub fn format_serial(class: DocumentClass, serial: u64) -> Result<String> {
    if serial == 0 {
        return Err(Error::Range(format!("{} serials start at 1", class.id())));
    }
    if serial >= 10u64.pow(budget(class)) {
        return Err(Error::SerialOverflow {
            class: class.id().to_string(),
            serial,
        });
    }
    Ok(match class {
        DocumentClass::Adhaar => {
            digits_right_to_left(serial, 12, |_| false, |i| i == 4 || i == 8)
        }
        DocumentClass::DrivingLicence => digits_right_to_left(serial, 15, |i| i > 12, |i| i == 11),
        DocumentClass::Pan => {
            digits_right_to_left(serial, 9, |i| i == 0 || i > 4, |_| false)
        }
        DocumentClass::Passport => digits_right_to_left(serial, 8, |i| i > 6, |_| false),
        DocumentClass::VoterCard => digits_right_to_left(serial, 10, |i| i > 6, |_| false),
    })
}

/// Driving licence file number: one letter, nine digits, two letters.
pub fn file_number(serial: u64) -> String {
    digits_right_to_left(serial, 12, |i| i < 2 || i > 10, |_| false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }

    pub fn hindi(self) -> &'static str {
        match self {
            Gender::Male => "पुरुष",
            Gender::Female => "महिला",
        }
    }
}

/// Male for the first 40% of a batch and for the band between 80% and 90%.
pub fn gender_for_serial(serial: u64, max_count: u64) -> Gender {
    let s = 10 * serial as u128;
    let m = max_count as u128;
    if s <= 4 * m || (8 * m < s && s <= 9 * m) {
        Gender::Male
    } else {
        Gender::Female
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSeed {
    pub seed: u64,
    pub max_count: u64,
}

impl GenSeed {
    pub fn new(seed: u64, max_count: u64) -> Self {
        GenSeed { seed, max_count }
    }

    fn rng_for(&self, class: DocumentClass, serial: u64) -> ChaCha8Rng {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [class.index() as u64 + 1, serial] {
            h = splitmix(h ^ v);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A render-only string with a fixed tag; never part of the annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoration {
    pub tag: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub class: DocumentClass,
    pub serial: u64,
    pub annotation: Annotation,
    pub decorations: Vec<Decoration>,
}

impl DocumentRecord {
    /// Field values in annotation order, keyed by region code.
    pub fn values(&self) -> &[(String, String)] {
        self.annotation.fields()
    }

    pub fn stem(&self, index: u64) -> String {
        format!("{}_{}", self.class.id(), index)
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty list")
}

fn full_name<R: Rng>(rng: &mut R) -> String {
    format!("{} {}", pick(rng, first_names()), pick(rng, last_names()))
}

/// A calendar-valid date between 1970-01-01 and 2023-12-31.
fn date<R: Rng>(rng: &mut R, sep: char) -> String {
    let year = rng.gen_range(1970..=2023);
    let month = rng.gen_range(1..=12u32);
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = match month {
        2 if leap => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    let day = rng.gen_range(1..=days);
    format!("{day:02}{sep}{month:02}{sep}{year}")
}

fn deco(tag: &str, text: impl Into<String>) -> Decoration {
    Decoration {
        tag: tag.to_string(),
        text: text.into(),
    }
}

pub fn generate_record(class: DocumentClass, serial: u64, gen: GenSeed) -> Result<DocumentRecord> {
    let number = format_serial(class, serial)?;
    let mut rng = gen.rng_for(class, serial);
    let rng = &mut rng;
    let (values, decorations): (Vec<String>, Vec<Decoration>) = match class {
        DocumentClass::Adhaar => {
            let gender = gender_for_serial(serial, gen.max_count);
            let name = full_name(rng);
            let dob = date(rng, '/');
            (
                vec![name, dob, gender.as_str().into(), number],
                vec![
                    deco("NAME_HI", pick(rng, &HINDI_NAMES)),
                    deco("GENDER_HI", gender.hindi()),
                ],
            )
        }
        DocumentClass::DrivingLicence => {
            let doi = date(rng, '/');
            let dov = date(rng, '/');
            let dob = date(rng, '/');
            let blood = pick(rng, &BLOOD_GROUPS).to_string();
            let name = full_name(rng);
            let father = full_name(rng);
            let address = format!(
                "{} {} Road, {}",
                rng.gen_range(1..=999),
                pick(rng, last_names()),
                pick(rng, &CITIES[..7])
            );
            let sign = full_name(rng);
            (
                vec![number, doi, dov, dob, blood, name, father],
                vec![
                    deco("ADDRESS", address),
                    deco("FILE_NUMBER", file_number(serial)),
                    deco("SIGNATURE", sign),
                ],
            )
        }
        DocumentClass::Pan => {
            let name = full_name(rng);
            let father = full_name(rng);
            let dob = date(rng, '/');
            let first = name.split(' ').next().unwrap_or_default().to_string();
            (
                vec![name, father, number, dob],
                vec![deco("SIGNATURE", first)],
            )
        }
        DocumentClass::Passport => {
            let surname = pick(rng, last_names()).to_uppercase();
            let given = pick(rng, first_names()).to_string();
            let gender = if rng.gen_bool(0.5) { "M" } else { "F" };
            let dob = date(rng, '/');
            let pob = pick(rng, &CITIES).to_uppercase();
            let poi = pick(rng, &CITIES).to_uppercase();
            let doi = date(rng, '/');
            let doe = date(rng, '/');
            let father = full_name(rng).to_uppercase();
            let mother = full_name(rng).to_uppercase();
            let spouse = full_name(rng).to_uppercase();
            let address = format!(
                "{} {} ROAD, {}",
                rng.gen_range(1..=999),
                pick(rng, last_names()).to_uppercase(),
                pick(rng, &CITIES).to_uppercase()
            );
            (
                vec![number.clone(), surname, given, dob, gender.into(), pob, poi, doi, doe],
                vec![
                    deco("COUNTRY_CODE", "IND"),
                    deco("NATIONALITY", "INDIAN"),
                    deco("FATHER", father),
                    deco("MOTHER", mother),
                    deco("SPOUSE", spouse),
                    deco("ADDRESS", address),
                    deco("FILE_NUMBER", format!("FN{}", &number[1..])),
                ],
            )
        }
        DocumentClass::VoterCard => {
            let gender = gender_for_serial(serial, gen.max_count);
            let name = full_name(rng);
            let husband = full_name(rng);
            let dob = date(rng, '-');
            (
                vec![name, husband, number, gender.as_str().into(), dob],
                vec![
                    deco("NAME_HI", pick(rng, &HINDI_NAMES)),
                    deco("HUSBAND_HI", pick(rng, &HINDI_NAMES)),
                    deco("GENDER_HI", gender.hindi()),
                ],
            )
        }
    };
    Ok(DocumentRecord {
        class,
        serial,
        annotation: Annotation::new(class, values)?,
        decorations,
    })
}

/// First serial of a batch for the class.
pub fn first_serial(class: DocumentClass) -> u64 {
    match class {
        DocumentClass::DrivingLicence => DL_FIRST_SERIAL,
        _ => 1,
    }
}

/// Records `1..=count` for a class. The i-th record (1-based) carries serial
/// `first_serial + i - 1`.
pub fn generate_records(class: DocumentClass, count: u64, seed: u64) -> Result<Vec<DocumentRecord>> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let gen = GenSeed::new(seed, count);
    let first = first_serial(class);
    (0..count)
        .map(|i| generate_record(class, first + i, gen))
        .collect()
}

pub fn annotation_path(out_dir: &Path, class: DocumentClass, index: u64) -> PathBuf {
    out_dir
        .join("metadata")
        .join(class.id())
        .join(format!("{}_{}.txt", class.id(), index))
}

/// Generates a batch and writes one annotation file per record under
/// `out_dir/metadata/<class_id>/`.
pub fn generate_batch(
    class: DocumentClass,
    count: u64,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<DocumentRecord>> {
    let records = generate_records(class, count, seed)?;
    let dir = out_dir.join("metadata").join(class.id());
    fs::create_dir_all(&dir).at(&dir)?;
    for (i, rec) in records.iter().enumerate() {
        let path = annotation_path(out_dir, class, i as u64 + 1);
        fs::write(&path, rec.annotation.serialize()?).at(&path)?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn serial_examples() {
        let cases = [
            (DocumentClass::Adhaar, 1, "0000 0000 0001"),
            (DocumentClass::Passport, 7, "A0000007"),
            (DocumentClass::DrivingLicence, 1_620_240_000_001, "AA16 20240000001"),
            (DocumentClass::VoterCard, 10, "AAA0000010"),
            (DocumentClass::Pan, 1, "AAAA0000B"),
        ];
        for (class, serial, want) in cases {
            assert_eq!(format_serial(class, serial).unwrap(), want);
        }
    }

    #[test]
    fn serial_limits() {
        assert!(matches!(
            format_serial(DocumentClass::Passport, 10_000_000),
            Err(Error::SerialOverflow { .. })
        ));
        assert!(format_serial(DocumentClass::Passport, 9_999_999).is_ok());
        assert!(format_serial(DocumentClass::Pan, 10_000).is_err());
        assert!(format_serial(DocumentClass::Adhaar, 0).is_err());
        assert_eq!(
            format_serial(DocumentClass::Adhaar, 123_456_789_012).unwrap(),
            "1234 5678 9012"
        );
        assert_eq!(format_serial(DocumentClass::Pan, 1234).unwrap(), "AAAA0123E");
    }

    #[test]
    fn file_numbers() {
        assert_eq!(file_number(1), "A000000000AB");
        assert_eq!(file_number(DL_FIRST_SERIAL).len(), 12);
    }

    #[test]
    fn gender_rule() {
        let seq: String = (1..=10)
            .map(|s| match gender_for_serial(s, 10) {
                Gender::Male => 'M',
                Gender::Female => 'F',
            })
            .collect();
        assert_eq!(seq, "MMMMFFFFMF");
        for n in [10u64, 20, 100, 1000] {
            let males = (1..=n).filter(|s| gender_for_serial(*s, n) == Gender::Male).count() as u64;
            assert_eq!(males, (4 * n / 10) + (9 * n / 10 - 8 * n / 10));
        }
    }

    #[test]
    fn name_corpus() {
        assert!(first_names().len() + last_names().len() >= 1000);
        for n in first_names().iter().chain(last_names()) {
            assert!(n.is_ascii() && !n.contains("::"));
        }
    }

    #[test]
    fn records_follow_layouts() {
        let gen = GenSeed::new(7, 10);
        for class in DocumentClass::ALL {
            let r = generate_record(class, first_serial(class) + 3, gen).unwrap();
            assert_eq!(r.annotation.fields().len(), class.field_count());
            let codes: Vec<&str> = r.values().iter().map(|(c, _)| c.as_str()).collect();
            assert_eq!(codes, class.field_order());
            assert_eq!(r, generate_record(class, first_serial(class) + 3, gen).unwrap());
        }
        let v = generate_record(DocumentClass::VoterCard, 4, gen).unwrap();
        let dob = v.annotation.value("DATE_OF_BIRTH").unwrap();
        let b = dob.as_bytes();
        assert!(b.len() == 10 && b[2] == b'-' && b[5] == b'-');
        assert!(dob.chars().filter(|c| *c != '-').all(|c| c.is_ascii_digit()));
        let a = generate_record(DocumentClass::Adhaar, 4, gen).unwrap();
        assert_eq!(a.annotation.value("ADHAAR_NUMBER").unwrap(), "0000 0000 0004");
        let p = generate_record(DocumentClass::Passport, 4, gen).unwrap();
        for code in ["PLACE_OF_BIRTH", "PLACE_OF_ISSUE", "SURNAME"] {
            let v = p.annotation.value(code).unwrap();
            assert_eq!(v, v.to_uppercase());
        }
        assert!(CITIES
            .iter()
            .any(|c| c.to_uppercase() == p.annotation.value("PLACE_OF_BIRTH").unwrap()));
        let d = generate_record(DocumentClass::DrivingLicence, DL_FIRST_SERIAL, gen).unwrap();
        assert!(BLOOD_GROUPS.contains(&d.annotation.value("BLOOD_GROUP").unwrap()));
    }

    #[test]
    fn adhaar_line_shape() {
        let r = generate_record(DocumentClass::Adhaar, 91, GenSeed::new(42, 1000)).unwrap();
        let line = r.annotation.serialize().unwrap();
        let parts: Vec<&str> = line.split("::").collect();
        assert_eq!(parts.len(), 4, "{line}");
        assert_eq!(parts[0].split(' ').count(), 2, "{line}");
        let d = parts[1].as_bytes();
        assert!(d.len() == 10 && d[2] == b'/' && d[5] == b'/', "{line}");
        assert_eq!(&parts[2..], ["Male", "0000 0000 0091"]);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_record(DocumentClass::Pan, 3, GenSeed::new(1, 10)).unwrap();
        let b = generate_record(DocumentClass::Pan, 3, GenSeed::new(2, 10)).unwrap();
        assert_ne!(a.annotation, b.annotation);
    }

    #[test]
    fn batch_writes_annotation_files() {
        let dir = tempfile::tempdir().unwrap();
        let recs = generate_batch(DocumentClass::Adhaar, 10, 42, dir.path()).unwrap();
        assert_eq!(recs.len(), 10);
        for i in 1..=10 {
            let p = annotation_path(dir.path(), DocumentClass::Adhaar, i);
            assert!(p.ends_with(format!("adhaar_v1_p1_{i}.txt")));
            let text = fs::read_to_string(p).unwrap();
            assert_eq!(text, recs[i as usize - 1].annotation.serialize().unwrap());
        }
        let dl = generate_records(DocumentClass::DrivingLicence, 2, 42).unwrap();
        assert_eq!(dl[1].serial, 1_620_240_000_002);
        assert!(matches!(
            generate_batch(DocumentClass::Pan, 0, 42, dir.path()),
            Err(Error::EmptyBatch)
        ));
    }

    proptest! {
        #[test]
        fn adhaar_serial_round_trips(s in 1u64..1_000_000_000_000) {
            let f = format_serial(DocumentClass::Adhaar, s).unwrap();
            prop_assert_eq!(f.replace(' ', "").parse::<u64>().unwrap(), s);
        }

        #[test]
        fn serials_are_injective(a in 1u64..10_000, b in 1u64..10_000) {
            prop_assume!(a != b);
            for class in DocumentClass::ALL {
                let base = first_serial(class) - 1;
                prop_assert_ne!(
                    format_serial(class, base + a).unwrap(),
                    format_serial(class, base + b).unwrap()
                );
            }
        }

        #[test]
        fn annotations_round_trip(seed in any::<u64>(), k in 1u64..100) {
            for class in DocumentClass::ALL {
                let r = generate_record(class, first_serial(class) + k - 1, GenSeed::new(seed, 100)).unwrap();
                let line = r.annotation.serialize().unwrap();
                prop_assert_eq!(crate::model::parse_annotation(class, &line).unwrap(), r.annotation);
            }
        }
    }
}
