use std::collections::BTreeSet;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{DatasetDescriptor, Format, IngestError, MentionInstance, Result};

/// Wire form of one line in the mention-record format.
///
/// Fields are written in declaration order, so output is byte-stable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub labels: Vec<String>,
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format, descriptor: &DatasetDescriptor) -> Result<Vec<MentionInstance>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let source = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    match format {
        Format::Column => parse_column(&text, &source, descriptor),
        Format::MentionRecord => parse_mention_records(&text, &source, descriptor),
    }
}

fn check_labels(
    gold: &BTreeSet<String>,
    descriptor: &DatasetDescriptor,
    source: &str,
    line: usize,
) -> Result<()> {
    if gold.is_empty() {
        return Err(IngestError::Parse {
            source_name: source.to_string(),
            line,
            message: "mention has no gold label".into(),
        });
    }
    if gold.len() > 1 && !descriptor.multi_label {
        return Err(IngestError::Parse {
            source_name: source.to_string(),
            line,
            message: format!("{} gold labels on a single-label dataset", gold.len()),
        });
    }
    for g in gold {
        if !descriptor.labels.contains(g) {
            return Err(IngestError::UnknownLabel {
                source_name: source.to_string(),
                line,
                dataset: descriptor.name.clone(),
                label: g.clone(),
            });
        }
    }
    Ok(())
}

/// Parses one-record-per-line JSON mentions.
pub fn parse_mention_records(text: &str, source: &str, descriptor: &DatasetDescriptor) -> Result<Vec<MentionInstance>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: MentionRecord = serde_json::from_str(raw).map_err(|e| IngestError::Parse {
            source_name: source.to_string(),
            line,
            message: e.to_string(),
        })?;
        if !(rec.start < rec.end && rec.end <= rec.tokens.len()) {
            return Err(IngestError::InvalidSpan {
                source_name: source.to_string(),
                line,
                start: rec.start,
                end: rec.end,
                len: rec.tokens.len(),
            });
        }
        let gold: BTreeSet<String> = rec.labels.into_iter().collect();
        check_labels(&gold, descriptor, source, line)?;
        out.push(MentionInstance {
            tokens: rec.tokens,
            start: rec.start,
            end: rec.end,
            gold,
            dataset: descriptor.name.clone(),
            instance_id: rec.id,
        });
    }
    Ok(out)
}

pub fn write_mention_records<'a>(instances: impl IntoIterator<Item = &'a MentionInstance>) -> String {
    let mut out = String::new();
    for inst in instances {
        let rec = MentionRecord {
            id: inst.instance_id.clone(),
            tokens: inst.tokens.clone(),
            start: inst.start,
            end: inst.end,
            labels: inst.gold.iter().cloned().collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("mention records always serialize"));
        out.push('\n');
    }
    out
}

/// Parses BIO column files. Each mention becomes one instance carrying its whole sentence.
pub fn parse_column(text: &str, source: &str, descriptor: &DatasetDescriptor) -> Result<Vec<MentionInstance>> {
    struct Sentence {
        first_line: usize,
        tokens: Vec<String>,
        // (start, end, label, line where the mention closed)
        mentions: Vec<(usize, usize, String, usize)>,
    }
    let mut sentences = Vec::new();
    let mut cur: Option<Sentence> = None;
    let mut open: Option<(usize, String)> = None;

    let parse_err = |line: usize, message: String| IngestError::Parse {
        source_name: source.to_string(),
        line,
        message,
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            if let Some(mut s) = cur.take() {
                if let Some((start, label)) = open.take() {
                    s.mentions.push((start, s.tokens.len(), label, line));
                }
                sentences.push(s);
            }
            continue;
        }
        let (token, tag) = raw
            .split_once('\t')
            .ok_or_else(|| parse_err(line, "expected `token<TAB>tag`".into()))?;
        let tag = tag.trim();
        if token.is_empty() {
            return Err(parse_err(line, "empty token".into()));
        }
        let s = cur.get_or_insert_with(|| Sentence {
            first_line: line,
            tokens: Vec::new(),
            mentions: Vec::new(),
        });
        let pos = s.tokens.len();
        let close = |s: &mut Sentence, open: &mut Option<(usize, String)>| {
            if let Some((start, label)) = open.take() {
                s.mentions.push((start, pos, label, line));
            }
        };
        if tag == "O" {
            close(s, &mut open);
        } else if let Some(label) = tag.strip_prefix("B-") {
            if label.is_empty() {
                return Err(parse_err(line, "empty entity type".into()));
            }
            close(s, &mut open);
            open = Some((pos, label.to_string()));
        } else if let Some(label) = tag.strip_prefix("I-") {
            match &open {
                Some((_, l)) if l == label => {}
                _ => return Err(parse_err(line, format!("`{tag}` does not continue an open `B-{label}`"))),
            }
        } else {
            return Err(parse_err(line, format!("unrecognised tag `{tag}`")));
        }
        s.tokens.push(token.to_string());
    }
    if let Some(mut s) = cur.take() {
        if let Some((start, label)) = open.take() {
            s.mentions.push((start, s.tokens.len(), label, text.lines().count()));
        }
        sentences.push(s);
    }

    let mut out = Vec::new();
    let mut dropped = 0usize;
    for s in sentences {
        if s.mentions.is_empty() {
            dropped += 1;
            continue;
        }
        for (start, end, label, line) in &s.mentions {
            let gold = BTreeSet::from([label.clone()]);
            check_labels(&gold, descriptor, source, *line)?;
            out.push(MentionInstance {
                tokens: s.tokens.clone(),
                start: *start,
                end: *end,
                gold,
                dataset: descriptor.name.clone(),
                instance_id: format!("{source}:{}:{start}-{end}", s.first_line),
            });
        }
    }
    if dropped > 0 {
        info!("{source}: dropped {dropped} sentence(s) without mentions");
    }
    Ok(out)
}
