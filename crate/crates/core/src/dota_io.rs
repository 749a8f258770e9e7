//! DOTA-v1.0 annotation and Task-1 submission text formats, plus the
//! line-delimited JSON detection records used by the command-line tools.
//!
//! Annotation lines look like
//!
//! ```text
//! x1 y1 x2 y2 x3 y3 x4 y4 category difficult
//! ```
//!
//! optionally preceded by `imagesource:` and `gsd:` header lines. Submission
//! files hold one class each, with lines
//!
//! ```text
//! image_id score x1 y1 x2 y2 x3 y3 x4 y4
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Detection;
use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DotaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown category `{name}`")]
    UnknownCategory { line: usize, name: String },
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
}

/// The fifteen DOTA-v1.0 categories, in the order of the official class list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Category {
    Plane,
    BaseballDiamond,
    Bridge,
    GroundTrackField,
    SmallVehicle,
    LargeVehicle,
    Ship,
    TennisCourt,
    BasketballCourt,
    StorageTank,
    SoccerBallField,
    Roundabout,
    Harbor,
    SwimmingPool,
    Helicopter,
}

impl Category {
    pub const ALL: [Category; 15] = [
        Category::Plane,
        Category::BaseballDiamond,
        Category::Bridge,
        Category::GroundTrackField,
        Category::SmallVehicle,
        Category::LargeVehicle,
        Category::Ship,
        Category::TennisCourt,
        Category::BasketballCourt,
        Category::StorageTank,
        Category::SoccerBallField,
        Category::Roundabout,
        Category::Harbor,
        Category::SwimmingPool,
        Category::Helicopter,
    ];

    pub const COUNT: usize = 15;

    /// Name as it appears in DOTA label files.
    pub fn name(self) -> &'static str {
        match self {
            Category::Plane => "plane",
            Category::BaseballDiamond => "baseball-diamond",
            Category::Bridge => "bridge",
            Category::GroundTrackField => "ground-track-field",
            Category::SmallVehicle => "small-vehicle",
            Category::LargeVehicle => "large-vehicle",
            Category::Ship => "ship",
            Category::TennisCourt => "tennis-court",
            Category::BasketballCourt => "basketball-court",
            Category::StorageTank => "storage-tank",
            Category::SoccerBallField => "soccer-ball-field",
            Category::Roundabout => "roundabout",
            Category::Harbor => "harbor",
            Category::SwimmingPool => "swimming-pool",
            Category::Helicopter => "helicopter",
        }
    }

    /// Short form, e.g. `BD`, `SV`. Categories without one return their name.
    pub fn abbreviation(self) -> &'static str {
        match self {
            Category::BaseballDiamond => "BD",
            Category::GroundTrackField => "GTF",
            Category::SmallVehicle => "SV",
            Category::LargeVehicle => "LV",
            Category::TennisCourt => "TC",
            Category::BasketballCourt => "BC",
            Category::StorageTank => "ST",
            Category::SoccerBallField => "SBF",
            Category::Roundabout => "RA",
            Category::SwimmingPool => "SP",
            Category::Helicopter => "HC",
            other => other.name(),
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Category> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    /// Accepts label-file names, abbreviations and the spaced title form,
    /// case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '_'], "-");
        Category::ALL
            .into_iter()
            .find(|c| c.name() == key || c.abbreviation().eq_ignore_ascii_case(&key))
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

impl TryFrom<String> for Category {
    type Error = UnknownCategory;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Category> for String {
    fn from(c: Category) -> String {
        c.name().to_string()
    }
}

/// One ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub corners: [Point2; 4],
    pub category: Category,
    pub difficult: bool,
}

impl AnnotationRecord {
    pub fn center(&self) -> Point2 {
        self.corners.iter().fold(Point2::ZERO, |acc, &p| acc + p) / 4.0
    }
}

fn is_header(line: &str) -> bool {
    line.starts_with("imagesource:") || line.starts_with("gsd:")
}

fn parse_coord(tok: &str, line: usize) -> Result<f64, DotaError> {
    let v: f64 = tok.parse().map_err(|_| DotaError::Parse {
        line,
        message: format!("invalid coordinate `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(DotaError::Parse {
            line,
            message: format!("non-finite coordinate `{tok}`"),
        });
    }
    Ok(v)
}

/// Parse one annotation line. `line` is the 1-based line number used in errors.
pub fn parse_annotation_line(text: &str, line: usize) -> Result<AnnotationRecord, DotaError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 10 {
        return Err(DotaError::Parse {
            line,
            message: format!("expected 10 fields, found {}", fields.len()),
        });
    }
    let mut coords = [0.0; 8];
    for (slot, tok) in coords.iter_mut().zip(&fields[..8]) {
        *slot = parse_coord(tok, line)?;
    }
    let category = fields[8]
        .parse::<Category>()
        .map_err(|_| DotaError::UnknownCategory {
            line,
            name: fields[8].to_string(),
        })?;
    let difficult = match fields[9] {
        "0" => false,
        "1" => true,
        other => {
            return Err(DotaError::Parse {
                line,
                message: format!("difficult flag must be 0 or 1, found `{other}`"),
            })
        }
    };
    Ok(AnnotationRecord {
        corners: std::array::from_fn(|i| Point2::new(coords[2 * i], coords[2 * i + 1])),
        category,
        difficult,
    })
}

/// Parse a whole annotation file. Blank lines and header lines are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, DotaError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || is_header(line) {
            continue;
        }
        records.push(parse_annotation_line(line, i + 1)?);
    }
    Ok(records)
}

pub fn parse_annotation_bytes(bytes: &[u8]) -> Result<Vec<AnnotationRecord>, DotaError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DotaError::InvalidUtf8)?;
    parse_annotations(text)
}

/// Serialize annotations in label-file layout (no header).
pub fn format_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for p in &r.corners {
            out.push_str(&format!("{} {} ", p.x, p.y));
        }
        out.push_str(r.category.name());
        out.push_str(if r.difficult { " 1\n" } else { " 0\n" });
    }
    out
}

/// One line of a Task-1 submission file.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRecord {
    pub image_id: String,
    pub score: f64,
    pub corners: [Point2; 4],
}

pub fn format_submission_line(rec: &SubmissionRecord) -> String {
    let mut line = format!("{} {:.4}", rec.image_id, rec.score);
    for p in &rec.corners {
        line.push_str(&format!(" {:.1} {:.1}", p.x, p.y));
    }
    line
}

/// Render one submission stream per class, in class order.
pub fn write_submission(
    by_class: &BTreeMap<Category, Vec<SubmissionRecord>>,
) -> BTreeMap<Category, String> {
    by_class
        .iter()
        .map(|(&cat, recs)| {
            let mut text = String::new();
            for r in recs {
                text.push_str(&format_submission_line(r));
                text.push('\n');
            }
            (cat, text)
        })
        .collect()
}

/// File name the DOTA server expects for a class stream.
pub fn submission_file_name(category: Category) -> String {
    format!("Task1_{}.txt", category.name())
}

pub fn parse_submission(text: &str) -> Result<Vec<SubmissionRecord>, DotaError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(DotaError::Parse {
                line: i + 1,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let score = parse_coord(fields[1], i + 1)?;
        let mut coords = [0.0; 8];
        for (slot, tok) in coords.iter_mut().zip(&fields[2..]) {
            *slot = parse_coord(tok, i + 1)?;
        }
        out.push(SubmissionRecord {
            image_id: fields[0].to_string(),
            score,
            corners: std::array::from_fn(|k| Point2::new(coords[2 * k], coords[2 * k + 1])),
        });
    }
    Ok(out)
}

/// A detection tagged with its image, as stored one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub class: Category,
    pub score: f64,
    pub corners: [[f64; 2]; 4],
    pub is_rbb: bool,
}

impl DetectionRecord {
    /// `None` when the detection's class id is outside the DOTA vocabulary.
    pub fn from_detection(image: &str, det: &Detection) -> Option<Self> {
        Some(Self {
            image: image.to_string(),
            class: Category::from_index(det.class_id)?,
            score: det.score,
            corners: det.corners.map(Into::into),
            is_rbb: det.is_rbb,
        })
    }

    pub fn to_detection(&self) -> Detection {
        Detection {
            corners: self.corners.map(Point2::from),
            score: self.score,
            class_id: self.class.index(),
            is_rbb: self.is_rbb,
        }
    }

    pub fn to_submission(&self) -> SubmissionRecord {
        SubmissionRecord {
            image_id: self.image.clone(),
            score: self.score,
            corners: self.corners.map(Point2::from),
        }
    }
}

pub fn write_detection_records(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("detection records always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_detection_records(text: &str) -> Result<Vec<DetectionRecord>, DotaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DotaError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_record() {
        let recs = parse_annotations("0 0 10 0 10 5 0 5 plane 0").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].category, Category::Plane);
        assert!(!recs[0].difficult);
        assert_eq!(recs[0].corners[2], Point2::new(10.0, 5.0));
    }

    #[test]
    fn skips_header() {
        let text = "imagesource:GoogleEarth\ngsd:0.146343590398\n1.5 2 10 0 10 5 0 5 small-vehicle 1\n";
        let recs = parse_annotations(text).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].difficult);
        assert_eq!(recs[0].category, Category::SmallVehicle);
    }

    #[test]
    fn unknown_category_reports_line() {
        let err = parse_annotations("0 0 1 0 1 1 0 1 plane 0\n0 0 10 0 10 5 0 5 dragon 0").unwrap_err();
        assert_eq!(
            err,
            DotaError::UnknownCategory {
                line: 2,
                name: "dragon".into()
            }
        );
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_annotations("0 0 10 0 10 5 0 plane 0"),
            Err(DotaError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_annotations("0 0 10 0 10 5 0 nan plane 0"),
            Err(DotaError::Parse { .. })
        ));
        assert!(matches!(
            parse_annotations("0 0 10 0 10 5 0 5 plane 2"),
            Err(DotaError::Parse { .. })
        ));
        assert_eq!(parse_annotation_bytes(&[0xff, 0xfe]), Err(DotaError::InvalidUtf8));
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!("BD".parse::<Category>().unwrap(), Category::BaseballDiamond);
        assert_eq!("sbf".parse::<Category>().unwrap(), Category::SoccerBallField);
        assert_eq!(
            "Ground Track Field".parse::<Category>().unwrap(),
            Category::GroundTrackField
        );
        assert_eq!("harbor".parse::<Category>().unwrap(), Category::Harbor);
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
            assert_eq!(Category::from_index(c.index()), Some(c));
        }
    }

    #[test]
    fn submission_line_has_ten_fields() {
        let rec = SubmissionRecord {
            image_id: "P0001".into(),
            score: 0.87654,
            corners: [
                Point2::new(1.04, 2.0),
                Point2::new(3.0, 4.0),
                Point2::new(5.0, 6.0),
                Point2::new(7.0, 8.0),
            ],
        };
        let mut map = BTreeMap::new();
        map.insert(Category::Ship, vec![rec]);
        let streams = write_submission(&map);
        let text = &streams[&Category::Ship];
        assert_eq!(text, "P0001 0.8765 1.0 2.0 3.0 4.0 5.0 6.0 7.0 8.0\n");
        assert_eq!(text.split_whitespace().count(), 10);
        assert!(write_submission(&BTreeMap::new()).is_empty());
        assert_eq!(submission_file_name(Category::Ship), "Task1_ship.txt");
    }

    #[test]
    fn annotation_format_round_trips() {
        let text = "0 0 10 0 10 5 0 5 plane 0\n1.25 2 3 4 5 6 7 8 HC 1\n";
        let recs = parse_annotations(text).unwrap();
        assert_eq!(parse_annotations(&format_annotations(&recs)).unwrap(), recs);
    }

    #[test]
    fn detection_records_round_trip() {
        let rec = DetectionRecord {
            image: "img".into(),
            class: Category::TennisCourt,
            score: 0.5,
            corners: [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            is_rbb: true,
        };
        let text = write_detection_records(std::slice::from_ref(&rec));
        assert!(text.contains("\"class\":\"tennis-court\""));
        assert_eq!(parse_detection_records(&text).unwrap(), vec![rec]);
    }
}
