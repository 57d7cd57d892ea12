//! Seeded synthetic corpora for tests, demos and benchmarks.
//!
//! Headlines are built around topic bigrams (the bundled lexicon) whose
//! frequencies are skewed per outlet, so every (topic, year) unit yields a
//! usable contingency table. Identical specs give identical corpora.

use chrono::NaiveDate;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{OutletSet, RawRecord};
use crate::lexicon::Topic;

/// Topic bigrams. Every word is lowercase, not a stopword and a fixed point
/// of the lemmatizer, so each phrase survives preprocessing unchanged.
pub const TOPIC_BIGRAMS: [(Topic, [&str; 10]); 4] = [
    (
        Topic::ForeignAffairs,
        [
            "foreign minister", "trade war", "nuclear deal", "peace talk", "prime minister",
            "north korea", "middle east", "european union", "border crisis", "ukraine war",
        ],
    ),
    (
        Topic::DomesticPolitics,
        [
            "supreme court", "white house", "attorney general", "justice department", "donald trump",
            "joe biden", "capitol riot", "free speech", "election fraud", "house speaker",
        ],
    ),
    (
        Topic::EconomicIssue,
        [
            "interest rate", "stock market", "central bank", "oil price", "gas price",
            "student loan", "federal reserve", "trade deficit", "small business", "job market",
        ],
    ),
    (
        Topic::SocialIssue,
        [
            "climate change", "gun violence", "abortion law", "abortion right", "gay marriage",
            "public health", "hate crime", "gun control", "social media", "police reform",
        ],
    ),
];

const MODIFIERS: [(Topic, [&str; 6]); 4] = [
    (Topic::ForeignAffairs, ["summit", "envoy", "sanction", "tension", "visit", "plan"]),
    (Topic::DomesticPolitics, ["probe", "vote", "bill", "case", "order", "report"]),
    (Topic::EconomicIssue, ["outlook", "fear", "surge", "drop", "forecast", "report"]),
    (Topic::SocialIssue, ["debate", "protest", "study", "push", "policy", "report"]),
];

const FILLER: [&str; 8] = ["new", "week", "top", "day", "big", "latest", "official", "update"];

/// Off-topic headlines; none of these words appear in a topic bigram.
const NOISE: [&str; 12] = [
    "weather", "forecast", "movie", "review", "recipe", "dinner", "travel", "guide", "sport", "final", "music", "award",
];

const STOPWORD_PREFIXES: [&str; 4] = ["the", "a", "of", "to"];

/// The bundled lexicon: every topic bigram with its topic.
pub fn bundled_lexicon_tsv() -> String {
    let mut out = String::from("# synthetic topic lexicon\n");
    for (topic, grams) in TOPIC_BIGRAMS {
        for g in grams {
            out.push_str(&format!("{g}\t{topic}\n"));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub years: std::ops::RangeInclusive<i32>,
    /// Relevant headlines per (outlet, topic, year).
    pub per_cell: usize,
    /// Off-topic headlines over the whole corpus.
    pub noise: usize,
    /// Strength of outlet-specific preference; larger spreads outlets apart.
    pub skew: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { seed: 7, years: 2014..=2022, per_cell: 600, noise: 6000, skew: 0.8 }
    }
}

impl SynthSpec {
    pub fn total(&self, outlets: usize) -> usize {
        let years = (self.years.end() - self.years.start() + 1).max(0) as usize;
        outlets * years * TOPIC_BIGRAMS.len() * self.per_cell + self.noise
    }
}

fn random_date(rng: &mut ChaCha8Rng, year: i32) -> NaiveDate {
    let days = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() { 366 } else { 365 };
    NaiveDate::from_yo_opt(year, rng.gen_range(1..=days)).expect("ordinal within year")
}

/// Renders tokens as a headline with varied case, stopwords and punctuation.
fn dress(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(words.len() + 1);
    if rng.gen_bool(0.3) {
        parts.push(STOPWORD_PREFIXES.choose(rng).expect("non-empty").to_string());
    }
    parts.extend(words.iter().map(|w| w.to_string()));
    let title_case = rng.gen_bool(0.5);
    let mut text: Vec<String> = parts
        .into_iter()
        .map(|w| {
            if title_case {
                let mut c = w.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
            } else {
                w
            }
        })
        .collect();
    if let Some(first) = text.first_mut() {
        let mut c = first.chars();
        *first = c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default();
    }
    let mut title = text.join(" ");
    match rng.gen_range(0..4) {
        0 => title.push('!'),
        1 => title.push_str(" ..."),
        _ => {}
    }
    title
}

fn headline_words<'a>(rng: &mut ChaCha8Rng, anchor: &'a str, modifiers: &[&'a str]) -> Vec<&'a str> {
    let (a, b) = anchor.split_once(' ').expect("bigram");
    let m = *modifiers.choose(rng).expect("non-empty");
    let f = *FILLER.choose(rng).expect("non-empty");
    match rng.gen_range(0..4) {
        0 | 1 => vec![a, b, m],
        2 => vec![f, a, b],
        _ => vec![a, b, m, f],
    }
}

/// Per-outlet anchor weights for one topic and year: a shared Zipf-like base
/// times an outlet-specific factor whose strength fades over the years.
fn anchor_weights(rng: &mut ChaCha8Rng, skew: f64) -> Vec<f64> {
    (0..10).map(|rank| (1.0 / (rank as f64 + 1.0).powf(0.6)) * (skew * (rng.gen::<f64>() * 2.0 - 1.0)).exp()).collect()
}

/// Generates a corpus over `outlets`. Records come out grouped by outlet,
/// year and topic, then noise.
pub fn synth_corpus(spec: &SynthSpec, outlets: &OutletSet) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = outlets.names();
    let span = (spec.years.end() - spec.years.start()).max(1) as f64;
    let mut records = Vec::with_capacity(spec.total(names.len()));
    for outlet in &names {
        for year in spec.years.clone() {
            let fade = 1.0 - 0.5 * (year - spec.years.start()) as f64 / span;
            for (t, (topic, grams)) in TOPIC_BIGRAMS.iter().enumerate() {
                debug_assert_eq!(MODIFIERS[t].0, *topic);
                let topic_skew = match topic {
                    Topic::EconomicIssue => 0.3,
                    Topic::ForeignAffairs => 0.7,
                    _ => 1.0,
                };
                let weights = anchor_weights(&mut rng, spec.skew * topic_skew * fade);
                let pick = WeightedIndex::new(&weights).expect("positive weights");
                for _ in 0..spec.per_cell {
                    let anchor = grams[pick.sample(&mut rng)];
                    let words = headline_words(&mut rng, anchor, &MODIFIERS[t].1);
                    records.push(RawRecord { outlet: outlet.clone(), date: random_date(&mut rng, year), title: dress(&mut rng, &words) });
                }
            }
        }
    }
    let cells: Vec<(String, i32)> = names.iter().flat_map(|o| spec.years.clone().map(move |y| (o.clone(), y))).collect();
    if !cells.is_empty() {
        for i in 0..spec.noise {
            let (outlet, year) = &cells[i % cells.len()];
            let words: Vec<&str> = (0..rng.gen_range(2..=4)).map(|_| *NOISE.choose(&mut rng).expect("non-empty")).collect();
            records.push(RawRecord { outlet: outlet.clone(), date: random_date(&mut rng, *year), title: dress(&mut rng, &words) });
        }
    }
    records
}

/// JSON Lines text for a record list.
pub fn to_jsonl(records: &[RawRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// One domestic-politics year in which eight outlets share a vocabulary and
/// one outlet (chosen by the seed) uses a disjoint one.
#[derive(Clone, Debug)]
pub struct PlantedDiscrepancy {
    pub records: Vec<RawRecord>,
    pub outlier: String,
    pub lexicon_tsv: String,
    pub year: i32,
}

const PLANTED_SHARED: [&str; 8] = [
    "supreme court", "white house", "attorney general", "justice department",
    "donald trump", "joe biden", "capitol riot", "free speech",
];
const PLANTED_APART: [&str; 8] = [
    "school board", "county sheriff", "city council", "state senate",
    "town hall", "tax reform", "voter turnout", "party primary",
];

pub fn planted_discrepancy(seed: u64, outlets: &OutletSet, per_outlet: usize) -> PlantedDiscrepancy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = outlets.names();
    let outlier = names[rng.gen_range(0..names.len())].clone();
    let year = 2018;
    let base: Vec<f64> = (0..8).map(|r| 1.0 / (r as f64 + 1.0).powf(0.5)).collect();
    let pick = WeightedIndex::new(&base).expect("positive weights");
    let mut records = Vec::with_capacity(names.len() * per_outlet);
    for outlet in &names {
        let vocab = if *outlet == outlier { &PLANTED_APART } else { &PLANTED_SHARED };
        for _ in 0..per_outlet {
            let (a, b) = vocab[pick.sample(&mut rng)].split_once(' ').expect("bigram");
            let mut words = vec![a, b];
            if rng.gen_bool(0.5) {
                words.push(*FILLER.choose(&mut rng).expect("non-empty"));
            }
            records.push(RawRecord { outlet: outlet.clone(), date: random_date(&mut rng, year), title: dress(&mut rng, &words) });
        }
    }
    let lexicon_tsv = PLANTED_SHARED.iter().chain(&PLANTED_APART).map(|g| format!("{g}\tdomestic\n")).collect();
    PlantedDiscrepancy { records, outlier, lexicon_tsv, year }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Preprocessor;
    use crate::lexicon::load_lexicon;

    #[test]
    fn bank_words_survive_preprocessing() {
        let pre = Preprocessor::english();
        let words = TOPIC_BIGRAMS
            .iter()
            .flat_map(|(_, g)| g.iter().flat_map(|p| p.split(' ')))
            .chain(MODIFIERS.iter().flat_map(|(_, m)| m.iter().copied()))
            .chain(FILLER)
            .chain(NOISE)
            .chain(PLANTED_SHARED.iter().chain(&PLANTED_APART).flat_map(|p| p.split(' ')));
        for w in words {
            assert_eq!(pre.process(w), vec![w.to_string()], "{w}");
        }
    }

    #[test]
    fn noise_never_matches_the_lexicon() {
        let topical: Vec<&str> = TOPIC_BIGRAMS.iter().flat_map(|(_, g)| g.iter().flat_map(|p| p.split(' '))).collect();
        assert!(NOISE.iter().all(|w| !topical.contains(w)));
    }

    #[test]
    fn lexicon_loads() {
        let lex = load_lexicon(bundled_lexicon_tsv().as_bytes(), &Preprocessor::english()).unwrap();
        assert_eq!(lex.len(), 40);
        for t in Topic::ALL {
            assert_eq!(lex.count_for(t), 10);
        }
    }

    #[test]
    fn checked_in_fixtures_match() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        assert_eq!(std::fs::read_to_string(dir.join("lexicon.tsv")).unwrap(), bundled_lexicon_tsv());
        let outlets = OutletSet::parse(&std::fs::read_to_string(dir.join("outlets.toml")).unwrap()).unwrap();
        assert_eq!(outlets, OutletSet::default_nine());
    }

    #[test]
    fn deterministic_and_sized() {
        let spec = SynthSpec { per_cell: 5, noise: 13, years: 2014..=2015, ..Default::default() };
        let outlets = OutletSet::default_nine();
        let a = synth_corpus(&spec, &outlets);
        assert_eq!(a.len(), spec.total(9));
        assert_eq!(a.len(), 9 * 2 * 4 * 5 + 13);
        assert_eq!(a, synth_corpus(&spec, &outlets));
        assert_ne!(a, synth_corpus(&SynthSpec { seed: 8, ..spec.clone() }, &outlets));
    }

    #[test]
    fn planted_outlier_varies_with_seed() {
        let outlets = OutletSet::default_nine();
        let picks: std::collections::BTreeSet<String> = (0..20).map(|s| planted_discrepancy(s, &outlets, 10).outlier).collect();
        assert!(picks.len() > 1);
    }
}
