//! Line-oriented JSON persistence for datasets.
//!
//! An optional first line `{"provenance": {...}}` carries generator metadata; every
//! other non-blank line is one utterance record:
//!
//! ```text
//! {"id":"u1","tokens":"play adele","origin":"annotated","weight":1.0,
//!  "domain":"music","intent":"PlayMusic","slots":[{"type":"Artist","start":1,"end":2,"value":"adele"}]}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Annotation, Dataset, Entry, Origin, Provenance, Slot, Utterance};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    tokens: String,
    origin: Origin,
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots: Option<Vec<Slot>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    provenance: Provenance,
}

impl Record {
    fn from_entry(e: &Entry) -> Self {
        let a = e.annotation.as_ref();
        Record {
            id: e.utterance.id.clone(),
            tokens: e.utterance.tokens.join(" "),
            origin: e.utterance.origin,
            weight: e.utterance.weight,
            domain: a.map(|a| a.domain.clone()),
            intent: a.map(|a| a.intent.clone()),
            slots: a.map(|a| a.slots.clone()),
        }
    }

    fn into_entry(self, line: usize) -> Result<Entry> {
        let utterance = Utterance {
            id: self.id,
            tokens: self.tokens.split(' ').map(str::to_string).collect(),
            origin: self.origin,
            weight: self.weight,
        };
        utterance.validate().map_err(|e| Error::parse(line, e.to_string()))?;
        let annotation = match (self.domain, self.intent, self.slots) {
            (None, None, None) => None,
            (Some(domain), Some(intent), slots) => {
                let a = Annotation {
                    domain,
                    intent,
                    slots: slots.unwrap_or_default(),
                };
                a.validate(&utterance.tokens)
                    .map_err(|e| Error::parse(line, e.to_string()))?;
                Some(a)
            }
            _ => {
                return Err(Error::parse(
                    line,
                    "annotated records need both domain and intent",
                ))
            }
        };
        Ok(Entry {
            utterance,
            annotation,
        })
    }
}

pub fn write_dataset<W: Write>(d: &Dataset, mut w: W) -> Result<()> {
    if d.provenance() != &Provenance::default() {
        let header = Header {
            provenance: d.provenance().clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    for e in d.iter() {
        serde_json::to_writer(&mut w, &Record::from_entry(e)).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut provenance = Provenance::default();
    let mut entries = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 && line.trim_start().starts_with("{\"provenance\"") {
            let h: Header = serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
            provenance = h.provenance;
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let entry = rec.into_entry(lineno)?;
        if !ids.insert(entry.utterance.id.clone()) {
            return Err(Error::parse(
                lineno,
                format!("duplicate utterance id {}", entry.utterance.id),
            ));
        }
        entries.push(entry);
    }
    Dataset::new(entries, provenance)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(d, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GrammarSpec};

    #[test]
    fn generated_dataset_round_trips() {
        let g = GrammarSpec::from_toml_str(
            "id = \"g\"\n[[templates]]\ndomain = \"d\"\nintent = \"i\"\ntext = \"play {A} in the {R}\"\n[catalogs]\nA = [\"adele\", \"ed sheeran\"]\nR = [\"kitchen\"]\n",
        )
        .unwrap();
        let mut d = generate_corpus(&g, 20, 5).unwrap();
        let mut entries = d.clone().into_entries();
        entries[3].annotation = None;
        entries[4].utterance.weight = 0.3;
        d = Dataset::new(entries, d.provenance().clone()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), d);
    }

    #[test]
    fn overlapping_spans_fail_with_line_number() {
        let text = concat!(
            "{\"id\":\"a\",\"tokens\":\"play adele\",\"origin\":\"annotated\",\"weight\":1.0,\"domain\":\"d\",\"intent\":\"i\",\"slots\":[]}\n",
            "{\"id\":\"b\",\"tokens\":\"play ed sheeran\",\"origin\":\"annotated\",\"weight\":1.0,\"domain\":\"d\",\"intent\":\"i\",",
            "\"slots\":[{\"type\":\"A\",\"start\":1,\"end\":3,\"value\":\"ed sheeran\"},{\"type\":\"B\",\"start\":2,\"end\":3,\"value\":\"sheeran\"}]}\n"
        );
        match read_dataset(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("overlapping"), "{}", message);
            }
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let d = read_dataset(&b""[..]).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn garbage_line_reports_its_number() {
        let text = "{\"id\":\"a\",\"tokens\":\"hi\",\"origin\":\"unlabeled\",\"weight\":1.0}\nnot json\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
