use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::metrics::tokenize;
use crate::embedding::{dot, norm, EmbeddingBank};
use crate::error::{validation, Error, Result};

/// Ranks reported by default.
pub const DEFAULT_KS: [usize; 5] = [5, 10, 15, 20, 25];

/// Maps a sentence to a vector. `None` when nothing in the text can be embedded.
pub trait SentenceEmbedder: Sync {
    fn embed(&self, text: &str) -> Result<Option<Vec<f64>>>;

    fn embed_all(&self, texts: &[&str]) -> Result<Vec<Option<Vec<f64>>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// IDF-weighted mean of word vectors. IDF is estimated on the pool, with
/// `ln((1+N)/(1+df)) + 1` smoothing so unseen words still count.
pub struct IdfWordEmbedder {
    bank: EmbeddingBank,
    idf: HashMap<String, f64>,
    unseen_idf: f64,
}

impl IdfWordEmbedder {
    pub fn new<S: AsRef<str>>(bank: EmbeddingBank, pool: &[S]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for s in pool {
            let mut toks = tokenize(s.as_ref());
            toks.sort();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = pool.len() as f64;
        let idf = df
            .into_iter()
            .map(|(t, c)| (t, ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0))
            .collect();
        IdfWordEmbedder {
            bank,
            idf,
            unseen_idf: (1.0 + n).ln() + 1.0,
        }
    }
}

impl SentenceEmbedder for IdfWordEmbedder {
    fn embed(&self, text: &str) -> Result<Option<Vec<f64>>> {
        let mut acc = vec![0.0; self.bank.dim()];
        let mut any = false;
        for tok in tokenize(text) {
            if let Some(v) = self.bank.get(&tok) {
                let w = self.idf.get(&tok).copied().unwrap_or(self.unseen_idf);
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x);
                any = true;
            }
        }
        Ok(any.then_some(acc))
    }
}

/// Precomputed sentence vectors keyed by exact text.
pub struct SentenceBankEmbedder {
    pub bank: EmbeddingBank,
}

impl SentenceEmbedder for SentenceBankEmbedder {
    fn embed(&self, text: &str) -> Result<Option<Vec<f64>>> {
        Ok(self.bank.get(text).map(<[f64]>::to_vec))
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    pub url: String,
    pub model: String,
    pub key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(url: String, model: String, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemoteEmbedder { url, model, key, agent }
    }
}

impl SentenceEmbedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Option<Vec<f64>>> {
        let mut req = self.agent.post(&self.url);
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let endpoint_err = |message: String| Error::Endpoint { status: None, message };
        let mut resp = req
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| endpoint_err(e.to_string()))?;
        let body: Value = resp.body_mut().read_json().map_err(|e| endpoint_err(e.to_string()))?;
        let v = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| endpoint_err("response has no data[0].embedding".into()))?;
        Ok(Some(v.iter().filter_map(Value::as_f64).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// 1-based rank of the ground truth per reconstruction; `None` when the
    /// reconstruction could not be embedded (counted as a miss at every k).
    pub ranks: Vec<Option<usize>>,
    pub ks: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub n: usize,
}

impl RetrievalResult {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.accuracy[i])
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

/// Rank matrix: for each query, the 1-based rank of every pool sentence
/// under cosine similarity (ties broken by pool order). Rows of
/// unembeddable queries are `None`.
pub struct RankTable {
    pub pool_ids: Vec<String>,
    pub rows: Vec<Option<Vec<usize>>>,
}

impl RankTable {
    pub fn build(queries: &[&str], pool: &[(&str, &str)], embedder: &dyn SentenceEmbedder) -> Result<Self> {
        let texts: Vec<&str> = pool.iter().map(|p| p.1).collect();
        let pool_vecs: Vec<Vec<f64>> = embedder
            .embed_all(&texts)?
            .into_iter()
            .zip(pool)
            .map(|(v, (id, _))| v.map(unit).ok_or_else(|| validation(format!("embedder cannot embed pool sentence {id}"))))
            .collect::<Result<_>>()?;
        let rows = embedder
            .embed_all(queries)?
            .into_iter()
            .map(|q| {
                q.map(|q| {
                    let q = unit(q);
                    let sims: Vec<f64> = pool_vecs.iter().map(|p| dot(&q, p)).collect();
                    let mut order: Vec<usize> = (0..sims.len()).collect();
                    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
                    let mut ranks = vec![0; sims.len()];
                    for (r, &i) in order.iter().enumerate() {
                        ranks[i] = r + 1;
                    }
                    ranks
                })
            })
            .collect();
        Ok(RankTable {
            pool_ids: pool.iter().map(|p| p.0.to_string()).collect(),
            rows,
        })
    }

    pub fn rank(&self, query: usize, pool_index: usize) -> Option<usize> {
        self.rows[query].as_ref().map(|r| r[pool_index])
    }

    /// Share of queries whose assigned pool sentence ranks within `k`.
    pub fn accuracy(&self, targets: &[usize], k: usize) -> f64 {
        if targets.is_empty() {
            return 0.0;
        }
        let hits = targets
            .iter()
            .enumerate()
            .filter(|&(q, &t)| self.rank(q, t).is_some_and(|r| r <= k))
            .count();
        hits as f64 / targets.len() as f64
    }
}

/// Top-k sentence retrieval accuracy of reconstructions against the pool.
pub fn retrieval_accuracy(
    reconstructions: &[(&str, &str)],
    pool: &[(&str, &str)],
    embedder: &dyn SentenceEmbedder,
    ks: &[usize],
) -> Result<RetrievalResult> {
    let pos: HashMap<&str, usize> = pool.iter().enumerate().map(|(i, p)| (p.0, i)).collect();
    let targets: Vec<usize> = reconstructions
        .iter()
        .map(|(gt, _)| {
            pos.get(gt)
                .copied()
                .ok_or_else(|| validation(format!("ground-truth sentence {gt} is not in the pool")))
        })
        .collect::<Result<_>>()?;
    let queries: Vec<&str> = reconstructions.iter().map(|r| r.1).collect();
    let table = RankTable::build(&queries, pool, embedder)?;
    Ok(RetrievalResult {
        ranks: targets.iter().enumerate().map(|(q, &t)| table.rank(q, t)).collect(),
        ks: ks.to_vec(),
        accuracy: ks.iter().map(|&k| table.accuracy(&targets, k)).collect(),
        n: targets.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(HashMap<String, Vec<f64>>);

    impl SentenceEmbedder for Fixed {
        fn embed(&self, text: &str) -> Result<Option<Vec<f64>>> {
            Ok(self.0.get(text).cloned())
        }
    }

    #[test]
    fn identical_text_ranks_first() {
        let bank = EmbeddingBank::from_rows(
            3,
            vec![("film", vec![1.0, 0.0, 0.0]), ("actor", vec![0.0, 1.0, 0.0]), ("award", vec![0.0, 0.0, 1.0])],
        )
        .unwrap();
        let pool = [("p0", "The film."), ("p1", "An actor won an award."), ("p2", "Award for film.")];
        let texts: Vec<&str> = pool.iter().map(|p| p.1).collect();
        let e = IdfWordEmbedder::new(bank, &texts);
        let r = retrieval_accuracy(&[("p1", "An actor won an award.")], &pool, &e, &[1, 2]).unwrap();
        assert_eq!(r.ranks, vec![Some(1)]);
        assert_eq!(r.accuracy, vec![1.0, 1.0]);
        // unembeddable reconstruction is a miss everywhere
        let r = retrieval_accuracy(&[("p1", "zzz")], &pool, &e, &[1, 3]).unwrap();
        assert_eq!((r.ranks[0], r.accuracy.clone()), (None, vec![0.0, 0.0]));
        assert!(retrieval_accuracy(&[("nope", "film")], &pool, &e, &[1]).is_err());
    }

    #[test]
    fn ties_follow_pool_order_and_missing_pool_errors() {
        let mut m = HashMap::new();
        m.insert("a".to_string(), vec![1.0, 0.0]);
        m.insert("b".to_string(), vec![1.0, 0.0]);
        m.insert("q".to_string(), vec![1.0, 0.0]);
        let e = Fixed(m);
        let pool = [("a", "a"), ("b", "b")];
        let r = retrieval_accuracy(&[("b", "q"), ("a", "q")], &pool, &e, &[1]).unwrap();
        assert_eq!(r.ranks, vec![Some(2), Some(1)]);
        assert!(retrieval_accuracy(&[("a", "q")], &[("a", "a"), ("c", "c")], &e, &[1]).is_err());
    }
}
