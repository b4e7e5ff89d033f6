//! Word-list driven labels and descriptions for synthetic KG records.

use rand::seq::IndexedRandom;
use rand::Rng;

const ONSETS: &[&str] = &[
    "b", "br", "c", "ch", "d", "dr", "f", "g", "gr", "h", "j", "k", "kl", "l", "m", "n", "p",
    "pr", "r", "s", "sh", "st", "t", "tr", "v", "w", "z",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou", "y", "ia"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "s", "th", "m", "nd", "rk", "x"];

const ADJECTIVES: &[&str] = &[
    "ancient", "coastal", "German-born", "independent", "fictional", "medieval", "northern",
    "southern", "American", "French", "Japanese", "Brazilian", "former", "public", "private",
    "mountainous", "historic", "experimental", "classical", "modern", "tropical", "volcanic",
    "rural", "urban", "Baroque", "eastern", "western", "Nordic", "Andean", "Saharan",
];
const NOUNS: &[&str] = &[
    "city", "river", "theoretical physicist", "painter", "novel", "film", "mountain",
    "company", "album", "species of bird", "university", "chemical compound", "football club",
    "village", "lake", "composer", "politician", "video game", "television series", "island",
    "mathematician", "newspaper", "railway station", "castle", "language", "software",
    "asteroid", "genus of plants", "band", "poet",
];
const CONTEXTS: &[&str] = &[
    "in", "from", "near", "founded in", "located in", "based in", "named after", "known for",
];

const RELATION_STEMS: &[&str] = &[
    "located in", "member of", "part of", "owned by", "founded by", "instance of", "head of",
    "capital of", "award received for", "spouse of", "child of", "named after", "director of",
    "author of", "publisher of", "country of", "employer of", "genre of", "record label of",
    "participant in", "occupation of", "educated at", "influenced by", "depicts", "contains",
];
const RELATION_GLOSSES: &[&str] = &[
    "property linking an item to its",
    "relation between a subject and the",
    "qualifier describing the",
    "statement pointing to the",
    "connects an entity with its",
];

pub fn pseudo_word<R: Rng + ?Sized>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut word = String::new();
    for _ in 0..syllables {
        word.push_str(ONSETS.choose(rng).unwrap());
        word.push_str(NUCLEI.choose(rng).unwrap());
        word.push_str(CODAS.choose(rng).unwrap());
    }
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => word,
    }
}

pub fn entity_label<R: Rng + ?Sized>(rng: &mut R) -> String {
    format!("{} {}", pseudo_word(rng), pseudo_word(rng))
}

pub fn entity_description<R: Rng + ?Sized>(rng: &mut R) -> String {
    format!(
        "{} {} {} {}",
        ADJECTIVES.choose(rng).unwrap(),
        NOUNS.choose(rng).unwrap(),
        CONTEXTS.choose(rng).unwrap(),
        pseudo_word(rng)
    )
}

pub fn relation_label<R: Rng + ?Sized>(rng: &mut R) -> String {
    format!(
        "{} {}",
        RELATION_STEMS.choose(rng).unwrap(),
        pseudo_word(rng).to_lowercase()
    )
}

pub fn relation_description<R: Rng + ?Sized>(rng: &mut R) -> String {
    format!(
        "{} {} {}",
        RELATION_GLOSSES.choose(rng).unwrap(),
        ADJECTIVES.choose(rng).unwrap().to_lowercase(),
        NOUNS.choose(rng).unwrap()
    )
}
