//! Deterministic synthetic patent corpus with planted structure.
//!
//! Each patent belongs to one of three topics. A topic owns a disjoint
//! vocabulary, a disjoint contributor group (inventors plus two applicants)
//! and a logistic filing curve. A few patents borrow one inventor from
//! another group so the network stays connected through weak bridges.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Seed used for the checked-in fixture.
pub const FIXTURE_SEED: u64 = 20240601;
pub const FIXTURE_SIZE: usize = 200;
pub const FIXTURE_HEADER: [&str; 6] = ["id", "title", "abstract", "inventors", "applicants", "publication_date"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedTopic {
    pub name: &'static str,
    pub inflection: f64,
    pub shape: f64,
    pub terms: &'static [&'static str],
    pub surnames: &'static [&'static str],
    pub applicants: [&'static str; 2],
}

pub const FIRST_YEAR: i32 = 2005;
pub const LAST_YEAR: i32 = 2024;

const GIVEN: [&str; 12] = [
    "Anna", "Ben", "Chen", "Dana", "Emil", "Farah", "Goro", "Hana", "Ivan", "Jun", "Kira", "Luis",
];

const GENERIC: [&str; 10] = [
    "system",
    "method",
    "device",
    "apparatus",
    "control",
    "unit",
    "module",
    "process",
    "signal",
    "data",
];

const FILLER: [&str; 8] = ["the", "and", "of", "a", "comprising", "wherein", "said", "with"];

pub const TOPICS: [PlantedTopic; 3] = [
    PlantedTopic {
        name: "battery",
        inflection: 2013.0,
        shape: 1.8,
        terms: &[
            "lithium",
            "cathode",
            "anode",
            "electrolyte",
            "separator",
            "charging",
            "electrode",
            "voltage",
            "capacity",
            "graphite",
            "thermal",
            "pack",
            "discharge",
            "ion",
            "polymer",
        ],
        surnames: &[
            "Akers",
            "Baptiste",
            "Cordero",
            "Delacroix",
            "Eriksen",
            "Fontaine",
            "Gallo",
            "Hartmann",
            "Ilves",
            "Jaramillo",
            "Kowalski",
            "Lindqvist",
        ],
        applicants: ["Voltaic Systems Inc", "Northcell Energy Ltd"],
    },
    PlantedTopic {
        name: "vision",
        inflection: 2018.0,
        shape: 1.4,
        terms: &[
            "image",
            "camera",
            "pixel",
            "neural",
            "convolution",
            "detection",
            "segmentation",
            "lens",
            "sensor",
            "frame",
            "depth",
            "feature",
            "recognition",
            "training",
            "classifier",
        ],
        surnames: &[
            "Mbeki", "Nakamura", "Okafor", "Petrov", "Quispe", "Rahman", "Sato", "Tanaka", "Ueda", "Valdez",
            "Watanabe", "Xu",
        ],
        applicants: ["Optiview Corp", "Deepframe Labs"],
    },
    PlantedTopic {
        name: "wireless",
        inflection: 2022.5,
        shape: 1.5,
        terms: &[
            "antenna",
            "beam",
            "channel",
            "spectrum",
            "modulation",
            "transmitter",
            "receiver",
            "carrier",
            "frequency",
            "bandwidth",
            "protocol",
            "handover",
            "uplink",
            "downlink",
            "mimo",
        ],
        surnames: &[
            "Yilmaz", "Zhou", "Abara", "Brandt", "Castillo", "Dumont", "Eze", "Fischer", "Guerra", "Haddad", "Iyer",
            "Jensen",
        ],
        applicants: ["Skywave Networks", "Meshlink Communications"],
    },
];

/// One generated patent with its planted topic.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatent {
    pub id: String,
    pub topic: usize,
    pub title: String,
    pub abstract_text: String,
    pub inventors: Vec<String>,
    pub applicant: String,
    pub year: i32,
    pub date: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub patents: Vec<SyntheticPatent>,
}

fn logistic_cdf(t: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (-(t - a) / b).exp())
}

/// Year drawn from the topic's logistic curve truncated to the window.
fn sample_year(rng: &mut ChaCha8Rng, topic: &PlantedTopic) -> i32 {
    let lo = logistic_cdf(FIRST_YEAR as f64, topic.inflection, topic.shape);
    let hi = logistic_cdf((LAST_YEAR + 1) as f64, topic.inflection, topic.shape);
    let u: f64 = rng.gen_range(lo..hi);
    let t = topic.inflection + topic.shape * (u / (1.0 - u)).ln();
    (t.floor() as i32).clamp(FIRST_YEAR, LAST_YEAR)
}

fn inventor_name(topic: &PlantedTopic, slot: usize) -> String {
    format!("{} {}", topic.surnames[slot], GIVEN[slot])
}

fn pick_word<'a>(rng: &mut ChaCha8Rng, topic: &'a PlantedTopic) -> &'a str {
    if rng.gen_bool(0.75) {
        topic.terms.choose(rng).copied().unwrap_or("unit")
    } else {
        GENERIC.choose(rng).copied().unwrap_or("unit")
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Generates `size` patents from `seed`. Topics are balanced up to one.
pub fn generate(size: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topics: Vec<usize> = (0..size).map(|i| i % TOPICS.len()).collect();
    topics.shuffle(&mut rng);

    let patents = topics
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let topic = &TOPICS[t];
            let title_len = rng.gen_range(3..=5);
            let title = (0..title_len)
                .map(|j| {
                    let w = pick_word(&mut rng, topic);
                    if j == 0 {
                        capitalize(w)
                    } else {
                        w.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join(" ");
            let abstract_len = rng.gen_range(18..=30);
            let mut words = Vec::with_capacity(abstract_len * 2);
            for _ in 0..abstract_len {
                if rng.gen_bool(0.35) {
                    words.push(FILLER.choose(&mut rng).copied().unwrap_or("the").to_string());
                }
                words.push(pick_word(&mut rng, topic).to_string());
            }
            let abstract_text = format!("{}.", capitalize(&words.join(" ")));

            let team = rng.gen_range(2..=4);
            let mut slots = rand::seq::index::sample(&mut rng, topic.surnames.len(), team).into_vec();
            slots.sort_unstable();
            let mut inventors: Vec<String> = slots.into_iter().map(|s| inventor_name(topic, s)).collect();
            if rng.gen_bool(0.03) {
                let other = (t + rng.gen_range(1..TOPICS.len())) % TOPICS.len();
                let slot = rng.gen_range(0..TOPICS[other].surnames.len());
                inventors.push(inventor_name(&TOPICS[other], slot));
            }
            let applicant = topic.applicants[rng.gen_range(0..2)].to_string();

            let year = sample_year(&mut rng, topic);
            let date = format!("{year}-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28));
            SyntheticPatent {
                id: format!("SYN-{:04}", i + 1),
                topic: t,
                title,
                abstract_text,
                inventors,
                applicant,
                year,
                date,
            }
        })
        .collect();
    SyntheticCorpus { patents }
}

impl SyntheticCorpus {
    /// CSV with the default schema column names and `;` separators.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(FIXTURE_HEADER)?;
        for p in &self.patents {
            w.write_record([
                p.id.as_str(),
                &p.title,
                &p.abstract_text,
                &p.inventors.join("; "),
                &p.applicant,
                &p.date,
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits the utf-8 it was given"))
    }

    /// Planted topic of every patent, keyed by id.
    pub fn topic_of(&self, id: &str) -> Option<usize> {
        self.patents.iter().find(|p| p.id == id).map(|p| p.topic)
    }

    /// Planted group of a contributor name: its topic index.
    pub fn group_of(name: &str) -> Option<usize> {
        TOPICS
            .iter()
            .position(|t| t.applicants.contains(&name) || (0..t.surnames.len()).any(|s| inventor_name(t, s) == name))
    }
}

/// The checked-in 200-patent fixture.
pub fn default_fixture() -> SyntheticCorpus {
    generate(FIXTURE_SIZE, FIXTURE_SEED)
}

/// Default pipeline config shipped next to the fixture.
pub const FIXTURE_CONFIG: &str = "\
# Pipeline config for the bundled synthetic fixture.
input = patents_200.csv
format = csv
seed = 42
k_min = 2
k_max = 11
restarts = 10
top_terms = 12
resolution = 1.0
";
