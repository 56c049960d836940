//! Output-space sizes, in bits, of anchor sequences and full sentences over
//! a fixed lexical alphabet.

use serde::Serialize;

/// `m · log2(V)`: ordered length-`m` sequences over `V` symbols, repetition allowed.
pub fn anchor_entropy(vocab_size: usize, m: usize) -> f64 {
    assert!(vocab_size >= 1, "vocabulary size must be at least 1");
    m as f64 * (vocab_size as f64).log2()
}

/// `log2(V·(V−1)·…·(V−m+1))`: ordered sequences of distinct symbols.
/// Returns `None` when `m > V`.
pub fn anchor_entropy_distinct(vocab_size: usize, m: usize) -> Option<f64> {
    assert!(vocab_size >= 1, "vocabulary size must be at least 1");
    if m > vocab_size {
        return None;
    }
    Some((0..m).map(|i| ((vocab_size - i) as f64).log2()).sum())
}

/// `L · log2(V)`: a conservative lower bound for `L`-word sentences.
pub fn sentence_lower_bound(length: usize, vocab_size: usize) -> f64 {
    assert!(vocab_size >= 1, "vocabulary size must be at least 1");
    length as f64 * (vocab_size as f64).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub vocab_size: usize,
    pub m: usize,
    pub anchor_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_bits_distinct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleTable {
    pub rows: Vec<ScaleRow>,
    pub sentence_length: usize,
    pub sentence_bits: Vec<(usize, f64)>,
}

/// V × m grid plus the sentence bound for each V.
pub fn scale_table(vocab_sizes: &[usize], ms: &[usize], sentence_length: usize, distinct: bool) -> ScaleTable {
    let rows = vocab_sizes
        .iter()
        .flat_map(|&v| {
            ms.iter().map(move |&m| ScaleRow {
                vocab_size: v,
                m,
                anchor_bits: anchor_entropy(v, m),
                anchor_bits_distinct: if distinct { anchor_entropy_distinct(v, m) } else { None },
            })
        })
        .collect();
    ScaleTable {
        rows,
        sentence_length,
        sentence_bits: vocab_sizes
            .iter()
            .map(|&v| (v, sentence_lower_bound(sentence_length, v)))
            .collect(),
    }
}

impl ScaleTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,V,m_or_L,bits,bits_distinct\n");
        for r in &self.rows {
            let distinct = r.anchor_bits_distinct.map(|b| format!("{b:.2}")).unwrap_or_default();
            out.push_str(&format!("anchor,{},{},{:.2},{}\n", r.vocab_size, r.m, r.anchor_bits, distinct));
        }
        for (v, bits) in &self.sentence_bits {
            out.push_str(&format!("sentence,{v},{},{bits:.2},\n", self.sentence_length));
        }
        out
    }
}
