//! Deterministic synthetic corpus used as the bundled fixture.
//!
//! Sentences come from a handful of templates over country/capital and
//! male/female word pairs, padded with Zipf-distributed filler tokens so the
//! frequency profile has a long tail. A few `<unk>` tokens are sprinkled in
//! for the cleaning rules to remove. Output depends only on the seed.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::eval::AnalogyQuestion;

pub const COUNTRIES: &[(&str, &str)] = &[
    ("france", "paris"),
    ("germany", "berlin"),
    ("italy", "rome"),
    ("spain", "madrid"),
    ("japan", "tokyo"),
    ("china", "beijing"),
    ("russia", "moscow"),
    ("egypt", "cairo"),
    ("greece", "athens"),
    ("norway", "oslo"),
    ("sweden", "stockholm"),
    ("poland", "warsaw"),
    ("canada", "ottawa"),
    ("kenya", "nairobi"),
    ("peru", "lima"),
    ("cuba", "havana"),
];

pub const GENDER_PAIRS: &[(&str, &str)] = &[
    ("king", "queen"),
    ("man", "woman"),
    ("boy", "girl"),
    ("brother", "sister"),
    ("father", "mother"),
    ("son", "daughter"),
    ("uncle", "aunt"),
    ("husband", "wife"),
    ("prince", "princess"),
    ("nephew", "niece"),
];

const FILLER_WORDS: usize = 3000;

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    /// Generation stops at the first line that reaches this many bytes.
    pub target_bytes: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 20240601,
            target_bytes: 1_000_000,
        }
    }
}

struct Generator {
    rng: ChaCha20Rng,
    filler: WeightedIndex<f64>,
}

impl Generator {
    fn filler_word(&mut self) -> String {
        format!("w{}", self.filler.sample(&mut self.rng))
    }

    fn pad(&mut self, words: &mut Vec<String>) {
        let n = self.rng.random_range(0..4);
        for _ in 0..n {
            let w = self.filler_word();
            let at = self.rng.random_range(0..=words.len());
            words.insert(at, w);
        }
        if self.rng.random_range(0..50) == 0 {
            let at = self.rng.random_range(0..=words.len());
            words.insert(at, "<unk>".into());
        }
    }

    fn pick<'a>(&mut self, xs: &'a [(&'a str, &'a str)]) -> (&'a str, &'a str) {
        xs[self.rng.random_range(0..xs.len())]
    }

    fn sentence(&mut self) -> String {
        let mut words: Vec<String> = match self.rng.random_range(0..7) {
            0 => {
                let (c, k) = self.pick(COUNTRIES);
                format!("the capital of {c} is {k}")
            }
            1 => {
                let (c, k) = self.pick(COUNTRIES);
                format!("{k} is the largest city in {c} and its capital")
            }
            2 => {
                let (c, k) = self.pick(COUNTRIES);
                let (c2, k2) = self.pick(COUNTRIES);
                format!("people travel from {k} in {c} to {k2} in {c2}")
            }
            3 => {
                let (m, _) = self.pick(GENDER_PAIRS);
                format!("the {m} said that he would come and his friends agreed")
            }
            4 => {
                let (_, f) = self.pick(GENDER_PAIRS);
                format!("the {f} said that she would come and her friends agreed")
            }
            5 => {
                let (m, f) = self.pick(GENDER_PAIRS);
                format!("a {m} is male while a {f} is female")
            }
            _ => (0..self.rng.random_range(5..15)).map(|_| self.filler_word()).collect::<Vec<_>>().join(" "),
        }
        .split(' ')
        .map(str::to_string)
        .collect();
        self.pad(&mut words);
        if self.rng.random_range(0..10) == 0 {
            words[0] = capitalize(&words[0]);
        }
        words.join(" ")
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One sentence per line, newline-terminated.
pub fn fixture_corpus(opts: &SynthOptions) -> String {
    let weights: Vec<f64> = (1..=FILLER_WORDS).map(|r| 1.0 / r as f64).collect();
    let mut g = Generator {
        rng: ChaCha20Rng::seed_from_u64(opts.seed),
        filler: WeightedIndex::new(weights).expect("positive weights"),
    };
    let mut out = String::with_capacity(opts.target_bytes + 200);
    while out.len() < opts.target_bytes {
        out.push_str(&g.sentence());
        out.push('\n');
    }
    out
}

/// Google-format analogy questions over the fixture's word pairs.
pub fn fixture_analogies() -> Vec<(&'static str, Vec<AnalogyQuestion>)> {
    fn section(pairs: &[(&str, &str)]) -> Vec<AnalogyQuestion> {
        let mut qs = Vec::new();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            for (j, &(c, d)) in pairs.iter().enumerate() {
                if i != j {
                    qs.push(AnalogyQuestion::new(a, b, c, d));
                }
            }
        }
        qs
    }
    vec![("capital-world", section(COUNTRIES)), ("family", section(GENDER_PAIRS))]
}

pub fn analogy_file_text(sections: &[(&str, Vec<AnalogyQuestion>)]) -> String {
    let mut out = String::new();
    for (name, qs) in sections {
        out.push_str(&format!(": {name}\n"));
        for q in qs {
            out.push_str(&format!("{} {} {} {}\n", q.a, q.b, q.c, q.gold));
        }
    }
    out
}
