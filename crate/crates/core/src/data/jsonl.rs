//! JSONL dataset files: one object per line with `id`, `text`, `grade`
//! (0–5) and `concepts` (an object holding exactly the eight schema keys,
//! each 0–4). Blank lines are skipped; errors carry the 1-based line number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use serde_json::Value;

use super::schema::{ConceptVector, LabeledEssay, CONCEPT_NAMES, GRADE_CLASSES, NUM_CONCEPTS};
use crate::error::{Error, Result};

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledEssay>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file))
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<LabeledEssay>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::load(line_no, "<line>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::load(line_no, "<json>", format!("malformed JSON: {e}")))?;
        out.push(parse_record(&value, line_no)?);
    }
    Ok(out)
}

/// Validates one decoded record; `line` is reported in errors.
pub fn parse_record(value: &Value, line: usize) -> Result<LabeledEssay> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::load(line, "<record>", "expected a JSON object"))?;
    let string_field = |name: &str| -> Result<String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::load(line, name, "expected a string")),
            None => Err(Error::load(line, name, "missing field")),
        }
    };
    let id = string_field("id")?;
    let text = string_field("text")?;
    let grade = match obj.get("grade") {
        Some(v) => v
            .as_i64()
            .ok_or_else(|| Error::load(line, "grade", "expected an integer"))?,
        None => return Err(Error::load(line, "grade", "missing field")),
    };
    if !(0..GRADE_CLASSES as i64).contains(&grade) {
        return Err(Error::load(line, "grade", format!("grade {grade} out of range [0,5]")));
    }
    let concepts = match obj.get("concepts") {
        Some(Value::Object(map)) => map,
        Some(_) => return Err(Error::load(line, "concepts", "expected an object")),
        None => return Err(Error::load(line, "concepts", "missing field")),
    };
    if let Some(extra) = concepts.keys().find(|k| !CONCEPT_NAMES.contains(&k.as_str())) {
        return Err(Error::load(line, format!("concepts.{extra}"), "unknown concept key"));
    }
    let mut scores = [0u8; NUM_CONCEPTS];
    for (k, name) in CONCEPT_NAMES.iter().enumerate() {
        let field = format!("concepts.{name}");
        let v = concepts
            .get(*name)
            .ok_or_else(|| Error::load(line, &field, "missing concept key"))?
            .as_i64()
            .ok_or_else(|| Error::load(line, &field, "expected an integer"))?;
        if !(0..=4).contains(&v) {
            return Err(Error::load(line, &field, format!("concept out of range [0,4]: {v}")));
        }
        scores[k] = v as u8;
    }
    Ok(LabeledEssay {
        id,
        text,
        grade: grade as u8,
        concepts: ConceptVector::new(scores)?,
    })
}

struct ConceptsObject<'a>(&'a ConceptVector);

impl Serialize for ConceptsObject<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(NUM_CONCEPTS))?;
        for (k, name) in CONCEPT_NAMES.iter().enumerate() {
            map.serialize_entry(name, &self.0.get(k))?;
        }
        map.end()
    }
}

impl Serialize for LabeledEssay {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("LabeledEssay", 4)?;
        st.serialize_field("id", &self.id)?;
        st.serialize_field("text", &self.text)?;
        st.serialize_field("grade", &self.grade)?;
        st.serialize_field("concepts", &ConceptsObject(&self.concepts))?;
        st.end()
    }
}

pub fn write_jsonl(mut writer: impl Write, records: &[LabeledEssay]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_jsonl(path: impl AsRef<Path>, records: &[LabeledEssay]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, records)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(grade: i64, thesis: i64) -> String {
        let mut concepts = serde_json::Map::new();
        for name in CONCEPT_NAMES {
            concepts.insert(name.into(), 2.into());
        }
        concepts.insert("thesis_clarity".into(), thesis.into());
        serde_json::json!({"id": "e1", "text": "An essay.", "grade": grade, "concepts": concepts}).to_string()
    }

    #[test]
    fn valid_line_parses() {
        let recs = read_jsonl(line(3, 2).as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].grade, 3);
        assert_eq!(recs[0].concepts.scores(), [2; 8]);
    }

    #[test]
    fn concept_out_of_range_names_line_and_field() {
        let input = format!("{}\n{}\n", line(3, 2), line(3, 5));
        let err = read_jsonl(input.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Load { line: 2, .. }));
        assert!(msg.contains("concept out of range [0,4]"), "{msg}");
        assert!(msg.contains("concepts.thesis_clarity"), "{msg}");
    }

    #[test]
    fn grade_out_of_range() {
        let err = read_jsonl(line(6, 1).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Load { ref field, .. } if field == "grade"));
    }

    #[test]
    fn missing_concept_key() {
        let v = r#"{"id":"x","text":"t","grade":1,"concepts":{"thesis_clarity":1}}"#;
        let err = read_jsonl(v.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Load { ref field, .. } if field == "concepts.use_of_evidence"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let input = format!("{}\n\n{{oops\n", line(1, 1));
        let err = read_jsonl(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Load { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(read_jsonl(&b""[..]).unwrap().is_empty());
    }

    fn arb_record() -> impl Strategy<Value = LabeledEssay> {
        ("[a-z0-9-]{1,8}", ".{0,40}", 0u8..6, prop::array::uniform8(0u8..5)).prop_map(|(id, text, grade, c)| {
            LabeledEssay {
                id,
                text,
                grade,
                concepts: ConceptVector::new(c).unwrap(),
            }
        })
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(records in prop::collection::vec(arb_record(), 0..6)) {
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &records).unwrap();
            prop_assert_eq!(read_jsonl(&buf[..]).unwrap(), records);
        }
    }
}
