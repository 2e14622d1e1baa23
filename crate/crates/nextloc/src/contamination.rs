//! Four-choice data-contamination quiz.
//!
//! Each item shows four candidate dataset rows (plus an escape option E).
//! Exactly one of A–D is a verbatim row from the raw file; the three
//! distractors are perturbed copies, one per documented perturbation kind:
//! the user identifier swapped to another real user, the category swapped to
//! another real category (with a matching category-id mutation), or the tail
//! of the location identifier mutated in place. A model that has not seen
//! the dataset during training should score near chance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::Dataset;
use crate::{Error, Result};

pub const OPTION_E_TEXT: &str = "None of the provided options.";

/// Chi-square upper critical value at df=3, p=0.01; the letter-uniformity
/// check passes while the statistic stays below it.
pub const CHI_SQUARE_CRIT_DF3_P01: f64 = 11.345;

const HEX_ALPHABET: &[u8] = b"0123456789abcdef";
const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

/// Which field(s) a distractor perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Field 0 swapped to another real user id.
    UserSwap,
    /// Field 3 swapped to another real category, field 2 tail mutated.
    CategorySwap,
    /// Field 1 (location identifier) tail mutated, length preserved.
    VenueIdTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub letter: char,
    pub kind: PerturbationKind,
    pub fields_changed: Vec<usize>,
}

/// A quiz item with its answer key and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizItem {
    pub index: usize,
    /// Options A–D in letter order (E is the fixed escape text).
    pub options: Vec<String>,
    pub correct_letter: char,
    pub perturbations: Vec<PerturbationRecord>,
}

/// Model-facing rendering of an item (answer withheld).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuizQuestionRow {
    pub index: usize,
    pub question: String,
}

/// Answer-key row, stored separately from the questions file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuizKeyRow {
    pub index: usize,
    pub correct_letter: char,
    pub perturbations: Vec<PerturbationRecord>,
}

impl QuizItem {
    pub fn question(&self, dataset_label: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Instruction: You are provided with a four-choice quiz. Your task is to correctly select the option corresponding to an instance from the {dataset_label} dataset.\n\n"
        ));
        out.push_str(
            "When selecting the option, you must ensure that you follow the following rules:\n",
        );
        out.push_str(
            "1. You must ensure that you only generate a single option letter as your answer.\n",
        );
        out.push_str(&format!(
            "2. If you do not know the dataset or the correct answer, you must select option \"E) {OPTION_E_TEXT}\"\n\n"
        ));
        out.push_str("Hint: While all the following options seem similar, there is only one option that reflects an exact match with respect to the original instance.\n\n");
        out.push_str("Options:\n");
        for (letter, row) in LETTERS.iter().zip(&self.options) {
            out.push_str(&format!("{letter}) {row}\n"));
        }
        out.push_str(&format!("E) {OPTION_E_TEXT}\n"));
        out
    }

    pub fn public_row(&self, dataset_label: &str) -> QuizQuestionRow {
        QuizQuestionRow {
            index: self.index,
            question: self.question(dataset_label),
        }
    }

    pub fn key_row(&self) -> QuizKeyRow {
        QuizKeyRow {
            index: self.index,
            correct_letter: self.correct_letter,
            perturbations: self.perturbations.clone(),
        }
    }
}

/// Generate `n_items` quiz items from the raw rows backing a dataset.
pub fn generate_quiz(dataset: &Dataset, n_items: usize, seed: u64) -> Result<Vec<QuizItem>> {
    if dataset.records.is_empty() {
        return Err(Error::QuizMaterial("dataset has no raw rows".into()));
    }
    let mut users: Vec<&str> = dataset.records.iter().map(|r| r.user_id.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    let mut categories: Vec<&str> = dataset
        .records
        .iter()
        .map(|r| r.venue_category.as_str())
        .collect();
    categories.sort_unstable();
    categories.dedup();
    if users.len() < 2 {
        return Err(Error::QuizMaterial(
            "need at least two distinct users for the user-swap distractor".into(),
        ));
    }
    if categories.len() < 2 {
        return Err(Error::QuizMaterial(
            "need at least two distinct categories for the category-swap distractor".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n_items);
    for index in 0..n_items {
        let record = &dataset.records[rng.gen_range(0..dataset.records.len())];
        let fields: Vec<&str> = record.raw_line.split('\t').collect();
        if fields.len() != 8 {
            return Err(Error::QuizMaterial(format!(
                "raw row has {} fields, expected 8",
                fields.len()
            )));
        }

        let user_swap = {
            let mut f = fields.clone();
            let other = pick_other(&mut rng, &users, fields[0]);
            f[0] = other;
            (f.join("\t"), PerturbationKind::UserSwap, vec![0])
        };
        let category_swap = {
            let mut f = fields.clone();
            let other = pick_other(&mut rng, &categories, fields[3]);
            f[3] = other;
            let mutated = mutate_tail(&mut rng, fields[2]);
            let owned = mutated;
            let joined = {
                let mut parts: Vec<String> = f.iter().map(|s| s.to_string()).collect();
                parts[2] = owned;
                parts.join("\t")
            };
            (joined, PerturbationKind::CategorySwap, vec![2, 3])
        };
        let venue_tail = {
            let mutated = mutate_tail(&mut rng, fields[1]);
            let mut parts: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
            parts[1] = mutated;
            (parts.join("\t"), PerturbationKind::VenueIdTail, vec![1])
        };

        let mut distractors = vec![user_swap, category_swap, venue_tail];
        distractors.shuffle(&mut rng);
        let correct_pos = rng.gen_range(0..4);

        let mut options = Vec::with_capacity(4);
        let mut perturbations = Vec::with_capacity(3);
        let mut d_iter = distractors.into_iter();
        for (pos, letter) in LETTERS.iter().enumerate() {
            if pos == correct_pos {
                options.push(record.raw_line.clone());
            } else {
                let (row, kind, fields_changed) = d_iter.next().unwrap();
                options.push(row);
                perturbations.push(PerturbationRecord {
                    letter: *letter,
                    kind,
                    fields_changed,
                });
            }
        }
        items.push(QuizItem {
            index,
            options,
            correct_letter: LETTERS[correct_pos],
            perturbations,
        });
    }
    Ok(items)
}

fn pick_other<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str], current: &str) -> &'a str {
    loop {
        let candidate = pool[rng.gen_range(0..pool.len())];
        if candidate != current {
            return candidate;
        }
    }
}

/// Mutate the last 4–8 characters of an identifier, preserving its length
/// and the hex alphabet; every touched character is guaranteed to change.
fn mutate_tail(rng: &mut ChaCha8Rng, id: &str) -> String {
    let chars: Vec<char> = id.chars().collect();
    let tail_len = rng.gen_range(4..=8).min(chars.len().max(1));
    let start = chars.len().saturating_sub(tail_len);
    let mut out = chars.clone();
    for slot in out.iter_mut().skip(start) {
        let current = *slot;
        loop {
            let replacement = HEX_ALPHABET[rng.gen_range(0..HEX_ALPHABET.len())] as char;
            if replacement != current {
                *slot = replacement;
                break;
            }
        }
    }
    out.into_iter().collect()
}

/// Quiz scoring result. Unparseable answers count as abstentions and are
/// also tallied separately; correct + incorrect + abstentions always equals
/// the item count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizResult {
    pub model: String,
    pub items: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub abstentions: usize,
    pub unparseable: usize,
    /// Expected-by-chance accuracy over A–D.
    pub chance_four_way: f64,
    /// Expected-by-chance accuracy when E counts as a guess.
    pub chance_five_way: f64,
}

/// Tolerant single-letter extraction: the first standalone capital A–E.
pub fn extract_answer_letter(text: &str) -> Option<char> {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if !(b'A'..=b'E').contains(&b) {
            continue;
        }
        let before_ok = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
        let after_ok = i + 1 >= bytes.len() || !bytes[i + 1].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return Some(b as char);
        }
    }
    None
}

/// Exact-match scoring; `E` answers (and unparseable text) are abstentions.
pub fn score_quiz(items: &[QuizItem], answers: &[String], model: &str) -> QuizResult {
    let mut result = QuizResult {
        model: model.to_string(),
        items: items.len(),
        correct: 0,
        incorrect: 0,
        abstentions: 0,
        unparseable: 0,
        chance_four_way: 0.25,
        chance_five_way: 0.20,
    };
    for (item, answer) in items.iter().zip(answers) {
        match extract_answer_letter(answer) {
            Some('E') => result.abstentions += 1,
            Some(letter) if letter == item.correct_letter => result.correct += 1,
            Some(_) => result.incorrect += 1,
            None => {
                result.abstentions += 1;
                result.unparseable += 1;
            }
        }
    }
    result
}

/// Chi-square goodness-of-fit statistic for the correct-letter distribution
/// against uniform over A–D.
pub fn letter_chi_square(items: &[QuizItem]) -> f64 {
    let mut counts = [0usize; 4];
    for item in items {
        let idx = LETTERS
            .iter()
            .position(|l| *l == item.correct_letter)
            .unwrap();
        counts[idx] += 1;
    }
    let expected = items.len() as f64 / 4.0;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
