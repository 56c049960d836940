use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedSentence, AnnotatedToken, Corpus, EegWordSequence, Segment, Task};
use crate::error::{Error, Result};

/// One JSONL record. Sentence lines carry `task`/`text`/`tokens`; sample lines
/// add `subject_id`/`segments` (and may repeat the sentence fields).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    sentence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<AnnotatedToken>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subject_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<Segment>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub lines: usize,
    pub sentences: usize,
    pub samples: usize,
}

pub fn load_dataset(path: impl AsRef<Path>, feature_dim: usize) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path, feature_dim)
}

pub fn read_dataset<R: BufRead>(reader: R, path: &Path, feature_dim: usize) -> Result<(Corpus, LoadReport)> {
    let line_err = |line: usize, message: String| Error::Line {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut sentences: Vec<AnnotatedSentence> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut samples: Vec<(usize, EegWordSequence)> = Vec::new();
    let mut lines = 0;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        let rec: DatasetLine =
            serde_json::from_str(&line).map_err(|e| line_err(lineno, format!("malformed record: {e}")))?;

        match (rec.task, rec.text, rec.tokens) {
            (Some(task), Some(text), Some(tokens)) => {
                let sentence = AnnotatedSentence {
                    sentence_id: rec.sentence_id.clone(),
                    task,
                    text,
                    tokens,
                };
                sentence.validate().map_err(|e| line_err(lineno, e.to_string()))?;
                match index.get(&sentence.sentence_id) {
                    Some(&j) if sentences[j] != sentence => {
                        return Err(line_err(
                            lineno,
                            format!("conflicting definitions for sentence {}", sentence.sentence_id),
                        ));
                    }
                    Some(_) if rec.segments.is_none() => {
                        return Err(line_err(lineno, format!("duplicate sentence_id {}", sentence.sentence_id)));
                    }
                    Some(_) => {}
                    None => {
                        index.insert(sentence.sentence_id.clone(), sentences.len());
                        sentences.push(sentence);
                    }
                }
            }
            (None, None, None) => {}
            _ => {
                return Err(line_err(
                    lineno,
                    "sentence records need all of task, text and tokens".into(),
                ))
            }
        }

        match (rec.subject_id, rec.segments) {
            (Some(subject_id), Some(segments)) => {
                for seg in &segments {
                    if seg.features.len() != feature_dim {
                        return Err(line_err(
                            lineno,
                            format!(
                                "dimension error: feature vector at position {} has {} entries, expected {feature_dim}",
                                seg.position,
                                seg.features.len()
                            ),
                        ));
                    }
                }
                samples.push((
                    lineno,
                    EegWordSequence {
                        sentence_id: rec.sentence_id,
                        subject_id,
                        segments,
                    },
                ));
            }
            (None, None) => {}
            _ => return Err(line_err(lineno, "sample records need both subject_id and segments".into())),
        }
    }

    for (lineno, sample) in &samples {
        let sentence = index
            .get(&sample.sentence_id)
            .map(|&j| &sentences[j])
            .ok_or_else(|| line_err(*lineno, format!("unknown sentence_id {}", sample.sentence_id)))?;
        sample
            .validate(sentence, feature_dim)
            .map_err(|e| line_err(*lineno, e.to_string()))?;
    }

    let samples: Vec<EegWordSequence> = samples.into_iter().map(|(_, s)| s).collect();
    let report = LoadReport {
        lines,
        sentences: sentences.len(),
        samples: samples.len(),
    };
    let corpus = Corpus::new(sentences, samples, feature_dim)?;
    Ok((corpus, report))
}

/// Writes every sentence as a sentence record, then every sample as a full
/// record (sentence fields repeated) in corpus order.
pub fn write_dataset<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io = |e| Error::io("<dataset>", e);
    for s in corpus.sentences() {
        let line = DatasetLine {
            sentence_id: s.sentence_id.clone(),
            task: Some(s.task),
            text: Some(s.text.clone()),
            tokens: Some(s.tokens.clone()),
            subject_id: None,
            segments: None,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(io)?;
    }
    for sample in corpus.samples() {
        let s = corpus.sentence(&sample.sentence_id).expect("validated corpus");
        let line = DatasetLine {
            sentence_id: s.sentence_id.clone(),
            task: Some(s.task),
            text: Some(s.text.clone()),
            tokens: Some(s.tokens.clone()),
            subject_id: Some(sample.subject_id.clone()),
            segments: Some(sample.segments.clone()),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

impl Corpus {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_dataset(self, file)
    }
}
