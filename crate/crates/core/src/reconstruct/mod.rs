//! Anchor-to-sentence reconstruction: TF-IDF retrieval over the task pool,
//! prompt construction, and a chat endpoint or deterministic fallback.

mod client;
mod prompt;
mod tfidf;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub use client::{first_sentence, ChatClient, Completion, EndpointConfig, GenerationParams, ENV_KEY, ENV_URL};
pub use prompt::{build_prompt, Mode, PromptSpec, Template, PRINCIPLES, SINGLE_SENTENCE_INSTRUCTION};
pub use tfidf::{content_lemmas, smooth_idf, RetrievalIndex, Retrieved};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Remote,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub sentence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    pub mode: Mode,
    pub anchors: Vec<String>,
    pub retrieved_ids: Vec<String>,
    pub output: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

/// One reconstruction request.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub sentence_id: String,
    pub subject_id: Option<String>,
    pub anchors: Vec<String>,
}

pub enum Backend<'a> {
    Fallback,
    Remote(&'a ChatClient),
}

/// Everything needed to turn anchors into a sentence for one task pool.
pub struct Reconstructor<'a> {
    pub index: &'a RetrievalIndex,
    pub templates: BTreeMap<Mode, Template>,
    pub params: GenerationParams,
    pub k: usize,
}

/// Deterministic offline sentence for naive/cot: anchors in order.
pub fn anchor_sentence(anchors: &[String]) -> String {
    let joined = anchors.join(" ");
    let mut chars = joined.chars();
    match chars.next() {
        Some(c) => format!("{}{}.", c.to_uppercase(), chars.as_str()),
        None => String::new(),
    }
}

impl<'a> Reconstructor<'a> {
    pub fn new(index: &'a RetrievalIndex) -> Self {
        Reconstructor {
            index,
            templates: Mode::ALL.iter().map(|&m| (m, Template::builtin(m))).collect(),
            params: GenerationParams::default(),
            k: DEFAULT_K,
        }
    }

    pub fn template(&self, mode: Mode) -> &Template {
        &self.templates[&mode]
    }

    /// The prompt that would be sent, plus the retrieved references.
    pub fn prompt(&self, anchors: &[String], mode: Mode) -> Result<(String, Vec<Retrieved>)> {
        let retrieved = if mode.uses_references() {
            self.index.retrieve(anchors, self.k)
        } else {
            Vec::new()
        };
        let template = self.template(mode);
        let spec = PromptSpec {
            mode,
            anchors: anchors.to_vec(),
            references: retrieved.iter().map(|r| r.text.clone()).collect(),
            template_id: template.id.clone(),
        };
        Ok((build_prompt(&spec, template)?, retrieved))
    }

    pub fn reconstruct(&self, job: &Job, mode: Mode, backend: &Backend) -> Result<ReconstructionRecord> {
        if job.anchors.is_empty() {
            return Err(validation(format!("sentence {}: no anchors to reconstruct from", job.sentence_id)));
        }
        let (prompt, retrieved) = self.prompt(&job.anchors, mode)?;
        let (output, provenance, raw_response) = match backend {
            Backend::Fallback => {
                let out = match retrieved.first() {
                    Some(top) => top.text.clone(),
                    None => anchor_sentence(&job.anchors),
                };
                (out, Provenance::Fallback, None)
            }
            Backend::Remote(client) => {
                let c = client.complete(&prompt, &self.params)?;
                (first_sentence(&c.content), Provenance::Remote, Some(c.raw))
            }
        };
        Ok(ReconstructionRecord {
            sentence_id: job.sentence_id.clone(),
            subject_id: job.subject_id.clone(),
            mode,
            anchors: job.anchors.clone(),
            retrieved_ids: retrieved.into_iter().map(|r| r.sentence_id).collect(),
            output,
            provenance,
            template_id: self.template(mode).id.clone(),
            raw_response,
        })
    }

    /// Runs all jobs with up to `concurrency` workers; output order follows
    /// input order. Stops at the first error.
    pub fn reconstruct_all(
        &self,
        jobs: &[Job],
        mode: Mode,
        backend: &Backend,
        concurrency: usize,
    ) -> Result<Vec<ReconstructionRecord>> {
        let workers = concurrency.clamp(1, jobs.len().max(1));
        if workers == 1 {
            return jobs.iter().map(|j| self.reconstruct(j, mode, backend)).collect();
        }
        let next = AtomicUsize::new(0);
        let failed = AtomicUsize::new(usize::MAX);
        let slots: Vec<Mutex<Option<Result<ReconstructionRecord>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= jobs.len() || failed.load(Ordering::SeqCst) < i {
                        break;
                    }
                    let r = self.reconstruct(&jobs[i], mode, backend);
                    if r.is_err() {
                        failed.fetch_min(i, Ordering::SeqCst);
                    }
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(jobs.len());
        for slot in slots {
            match slot.into_inner().unwrap() {
                Some(r) => out.push(r?),
                None => break,
            }
        }
        Ok(out)
    }
}

pub fn write_records<W: Write>(records: &[ReconstructionRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(Path::new("<records>"), e))?;
    }
    Ok(())
}

pub fn save_records(records: &[ReconstructionRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_records(records, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<ReconstructionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::sentence;
    use crate::corpus::AnnotatedSentence;
    use crate::corpus::Pos::*;
    use std::collections::BTreeSet;

    fn pool() -> Vec<AnnotatedSentence> {
        vec![
            sentence("a", &[("film", Noun), ("be", Verb), ("good", Adj)]),
            sentence("b", &[("actor", Noun), ("win", Verb), ("award", Noun)]),
            sentence("c", &[("critic", Noun), ("like", Verb), ("movie", Noun)]),
        ]
    }

    fn job(anchors: &[&str]) -> Job {
        Job {
            sentence_id: "b".into(),
            subject_id: None,
            anchors: anchors.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn fallback_outputs() {
        let p = pool();
        let refs: Vec<&AnnotatedSentence> = p.iter().collect();
        let idx = RetrievalIndex::build(&refs, &BTreeSet::new()).unwrap();
        let r = Reconstructor::new(&idx);
        let rec = r.reconstruct(&job(&["actor", "win", "award"]), Mode::CotRag, &Backend::Fallback).unwrap();
        assert_eq!(rec.output, p[1].text);
        assert_eq!(rec.retrieved_ids[0], "b");
        assert_eq!(rec.provenance, Provenance::Fallback);
        assert_eq!(rec.template_id, "cot_rag-v1");
        let rec = r.reconstruct(&job(&["actor", "win"]), Mode::Naive, &Backend::Fallback).unwrap();
        assert_eq!(rec.output, "Actor win.");
        assert!(rec.retrieved_ids.is_empty());
        assert!(r.reconstruct(&job(&[]), Mode::Naive, &Backend::Fallback).is_err());
    }

    #[test]
    fn batch_keeps_order_and_bytes() {
        let p = pool();
        let refs: Vec<&AnnotatedSentence> = p.iter().collect();
        let idx = RetrievalIndex::build(&refs, &BTreeSet::new()).unwrap();
        let r = Reconstructor::new(&idx);
        let jobs: Vec<Job> = [&["film"][..], &["movie", "critic"], &["award"]]
            .iter()
            .map(|a| job(a))
            .collect();
        let serial = r.reconstruct_all(&jobs, Mode::Rag, &Backend::Fallback, 1).unwrap();
        let parallel = r.reconstruct_all(&jobs, Mode::Rag, &Backend::Fallback, 3).unwrap();
        assert_eq!(serial, parallel);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_records(&serial, &mut a).unwrap();
        write_records(&parallel, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(serial[1].output, p[2].text);
    }
}
