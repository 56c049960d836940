use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedToken, EntityTag, Pos};
use crate::error::{Error, Result};

const STOPWORDS: &str = include_str!("../../data/exclusions/stopwords.txt");
const MONTHS: &str = include_str!("../../data/exclusions/months.txt");
const TEMPORAL: &str = include_str!("../../data/exclusions/temporal.txt");
const NUMERALS: &str = include_str!("../../data/exclusions/numerals.txt");
const ORDINALS: &str = include_str!("../../data/exclusions/ordinals.txt");
const QUANTIFIERS: &str = include_str!("../../data/exclusions/quantifiers.txt");
const GENERATIONAL: &str = include_str!("../../data/exclusions/generational.txt");

/// Lexical filters applied when building the keyword candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRules {
    pub stopwords: BTreeSet<String>,
    pub months: BTreeSet<String>,
    pub temporal: BTreeSet<String>,
    pub numerals_written: BTreeSet<String>,
    pub ordinals: BTreeSet<String>,
    pub quantificational: BTreeSet<String>,
    pub generational_suffixes: BTreeSet<String>,
    /// Proper nouns shorter than this many characters are dropped.
    pub min_token_len: usize,
    pub exclude_person_entities: bool,
}

fn parse_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl Default for ExclusionRules {
    fn default() -> Self {
        ExclusionRules {
            stopwords: parse_list(STOPWORDS),
            months: parse_list(MONTHS),
            temporal: parse_list(TEMPORAL),
            numerals_written: parse_list(NUMERALS),
            ordinals: parse_list(ORDINALS),
            quantificational: parse_list(QUANTIFIERS),
            generational_suffixes: parse_list(GENERATIONAL),
            min_token_len: 3,
            exclude_person_entities: true,
        }
    }
}

impl ExclusionRules {
    /// No word lists; only the structural rules (POS, digits, Roman numerals,
    /// person entities, short proper names) apply.
    pub fn empty() -> Self {
        ExclusionRules {
            stopwords: BTreeSet::new(),
            months: BTreeSet::new(),
            temporal: BTreeSet::new(),
            numerals_written: BTreeSet::new(),
            ordinals: BTreeSet::new(),
            quantificational: BTreeSet::new(),
            generational_suffixes: BTreeSet::new(),
            min_token_len: 3,
            exclude_person_entities: true,
        }
    }

    /// Defaults, with any of `stopwords.txt`, `months.txt`, ... found in `dir`
    /// replacing the corresponding built-in list.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut rules = ExclusionRules::default();
        let slots: [(&str, &mut BTreeSet<String>); 7] = [
            ("stopwords.txt", &mut rules.stopwords),
            ("months.txt", &mut rules.months),
            ("temporal.txt", &mut rules.temporal),
            ("numerals.txt", &mut rules.numerals_written),
            ("ordinals.txt", &mut rules.ordinals),
            ("quantifiers.txt", &mut rules.quantificational),
            ("generational.txt", &mut rules.generational_suffixes),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = parse_list(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
            }
        }
        Ok(rules)
    }

    pub fn in_word_lists(&self, lemma: &str) -> bool {
        [
            &self.stopwords,
            &self.months,
            &self.temporal,
            &self.numerals_written,
            &self.ordinals,
            &self.quantificational,
            &self.generational_suffixes,
        ]
        .iter()
        .any(|set| set.contains(lemma))
    }

    /// Whether a token may serve as a keyword candidate.
    pub fn is_eligible(&self, token: &AnnotatedToken) -> bool {
        if !token.pos.is_content() {
            return false;
        }
        let lemma = token.lemma.as_str();
        if lemma.is_empty() || !lemma.chars().any(char::is_alphabetic) {
            return false;
        }
        if lemma.chars().any(|c| c.is_ascii_digit()) || token.surface.chars().any(|c| c.is_ascii_digit()) {
            return false;
        }
        if is_roman_numeral_token(&token.surface, lemma) {
            return false;
        }
        if self.exclude_person_entities && token.entity == EntityTag::Person {
            return false;
        }
        if token.pos == Pos::Propn && lemma.chars().count() < self.min_token_len {
            return false;
        }
        !self.in_word_lists(lemma)
    }
}

/// Value of a canonical (subtractive-notation) Roman numeral, if `s` is one.
pub fn roman_value(s: &str) -> Option<u32> {
    let digit = |c: char| match c.to_ascii_uppercase() {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let values: Vec<u32> = s.chars().map(digit).collect::<Option<_>>()?;
    if values.is_empty() {
        return None;
    }
    let mut total = 0;
    for (i, v) in values.iter().enumerate() {
        match values.get(i + 1) {
            Some(next) if next > v => total -= *v as i64,
            _ => total += *v as i64,
        }
    }
    let total = u32::try_from(total).ok().filter(|t| *t > 0 && *t < 4000)?;
    (to_roman(total).eq_ignore_ascii_case(s)).then_some(total)
}

fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (value, glyph) in TABLE {
        while n >= value {
            out.push_str(glyph);
            n -= value;
        }
    }
    out
}

/// Roman numerals are recognised only in upper-case surface form, so that
/// ordinary words spelled with numeral letters ("mix", "mild") survive.
fn is_roman_numeral_token(surface: &str, lemma: &str) -> bool {
    let upper = !surface.is_empty() && surface.chars().all(|c| c.is_ascii_uppercase());
    upper && roman_value(lemma).is_some()
}
