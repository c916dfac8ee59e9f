//! Seeded synthetic data with planted structure, used for evaluation,
//! benchmarking and replay demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::collections::{HashMap, HashSet};

use crate::census::{build_census, BBox, CensusParams, FollowGraph, SocialUser, StreamMessage};
use crate::polarity::LabeledExample;
use crate::Polarity;

/// Neutral English filler words.
pub const FILLER: &[&str] = &[
    "the", "city", "council", "meeting", "today", "about", "new", "road", "plan", "people", "said",
    "after", "week", "morning", "train", "station", "school", "water", "price", "market", "team",
    "match", "report", "street", "local", "news", "region", "government", "party", "vote", "time",
    "year", "house", "park", "music", "festival", "weather", "bridge", "river", "museum",
];

/// Marker tokens planted per class, in [`Polarity::ALL`] order.
pub const PLANTED_MARKERS: [[&str; 3]; 3] = [
    ["drusk", "drumel", "drovan"],
    ["tamsil", "tamrek", "tamvek"],
    ["qelvor", "qelmar", "qelbin"],
];

/// A balanced three-class English dataset in which every text contains
/// one marker of its class among 5 to 12 filler words.
pub fn planted_polarity(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = Polarity::ALL[i % 3];
            let len = rng.gen_range(5..=12);
            let mut words: Vec<&str> = (0..len).map(|_| *FILLER.choose(&mut rng).expect("non-empty")).collect();
            let marker = *PLANTED_MARKERS[label.index()].choose(&mut rng).expect("non-empty");
            let at = rng.gen_range(0..=words.len());
            words.insert(at, marker);
            LabeledExample {
                text: words.join(" "),
                lang: "en".into(),
                label,
                target_entity: None,
            }
        })
        .collect()
}

/// The same texts with labels permuted by the seed.
pub fn shuffled_labels(examples: &[LabeledExample], seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Polarity> = examples.iter().map(|e| e.label).collect();
    labels.shuffle(&mut rng);
    examples
        .iter()
        .zip(labels)
        .map(|(e, label)| LabeledExample { label, ..e.clone() })
        .collect()
}

const FUZZ_WORDS: &[&str] = &[
    "happy", "good", "day", "game", "of", "thrones", "very", "long", "love", "city", "Bilbao", "Donostia",
    "hello", "great", "bad", "today", "tomorrow", "night", "music", "party", "euskara", "kaixo", "gracias",
    "merci", "bonjour", "mundua", "l'eau", "don't", "can't", "C'est", "niño", "café", "ñandú", "été",
];
const FUZZ_SLANG: &[&str] = &[
    "4ever", "imo", "u", "r", "gr8", "b4", "thx", "pls", "omg", "lol", "LOL", "haha", "wow", "xD", "idk", "btw",
    "2day", "ppl", "tbh", "IMHO", "hmm", "jaja", "mdr", "ouais", "eskerrik", "mila",
];
const FUZZ_EMOTICONS: &[&str] = &[
    ":)", ":-)", ":))", ":D", "xD", "XDDD", ";)", ":P", ":(", ":((", ":'(", "T_T", ":O", "o.O", ":|", ":/", ":-\\",
    ">:(", ">_<", ":*", "<3", "<333", "</3", "♥", "😂", "😭", "😡", "😘", "💔", "❤️", "😀😀", ":-3", "(:", "D:", "^_^",
];
const FUZZ_PUNCT: &[&str] = &["!", "?", "!!!", "...", ",", ".", "¿", "¡", "(", ")", "\"", "-", ":", ";", "@user", "&", "…"];
const FUZZ_URLS: &[&str] = &["https://t.co/abc", "http://example.com/x?y=1", "www.berria.eus/albisteak", "(https://a.b/c)"];

fn elongate(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let i = rng.gen_range(0..chars.len());
    let times = rng.gen_range(3..7);
    let mut out: String = chars[..i].iter().collect();
    out.extend(std::iter::repeat(chars[i]).take(times));
    out.extend(&chars[i + 1..]);
    out
}

fn hashtag(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..4);
    let words: Vec<&str> = (0..n).map(|_| *FUZZ_WORDS.choose(rng).expect("non-empty")).collect();
    let body: String = match rng.gen_range(0..3) {
        0 => words.concat().to_lowercase(),
        1 => words
            .iter()
            .map(|w| {
                let mut c = w.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
            })
            .collect(),
        _ => format!("{}{}", words.concat(), rng.gen_range(0..3000)),
    };
    format!("#{body}")
}

/// Noisy social-media style messages: slang, elongations, hashtags,
/// emoticons, URLs and punctuation glued to words at random.
pub fn fuzz_messages(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..16);
            let mut out = String::new();
            for _ in 0..len {
                let piece = match rng.gen_range(0..10) {
                    0 | 1 | 2 => FUZZ_WORDS.choose(&mut rng).expect("non-empty").to_string(),
                    3 => FUZZ_SLANG.choose(&mut rng).expect("non-empty").to_string(),
                    4 => {
                        let w = if rng.gen_bool(0.5) { FUZZ_WORDS } else { FUZZ_SLANG };
                        elongate(w.choose(&mut rng).expect("non-empty"), &mut rng)
                    }
                    5 => hashtag(&mut rng),
                    6 => FUZZ_EMOTICONS.choose(&mut rng).expect("non-empty").to_string(),
                    7 => FUZZ_PUNCT.choose(&mut rng).expect("non-empty").to_string(),
                    8 => FUZZ_URLS.choose(&mut rng).expect("non-empty").to_string(),
                    _ => rng.gen_range(0..100_000).to_string(),
                };
                if !out.is_empty() && rng.gen_bool(0.8) {
                    out.push(' ');
                }
                out.push_str(&piece);
            }
            out
        })
        .collect()
}

/// A follow graph with a planted region, the stream sample that seeds it
/// and a truthful manual labeler.
#[derive(Debug, Clone)]
pub struct PlantedCensus {
    pub stream: Vec<StreamMessage>,
    /// `(from, to)`: from follows to.
    pub edges: Vec<(String, String)>,
    pub members: HashSet<String>,
    pub labels: HashMap<String, bool>,
    pub bbox: BBox,
}

impl PlantedCensus {
    /// Truthful judgements for `users` only.
    pub fn labels_for<'a, I: IntoIterator<Item = &'a String>>(&self, users: I) -> HashMap<String, bool> {
        users.into_iter().map(|u| (u.clone(), self.labels[u])).collect()
    }

    /// Labels a human would produce when asked about the seeds and the top
    /// `params.n_manual` candidates.
    pub fn human_labels(&self, graph: &FollowGraph, params: &CensusParams) -> HashMap<String, bool> {
        let oracle = build_census(&self.stream, graph, &self.bbox, Some(&self.labels), params)
            .expect("oracle labels cover every user");
        self.labels_for(&oracle.labeled)
    }
}

pub const PLANTED_BBOX: BBox = BBox {
    west: -3.5,
    south: 42.4,
    east: -1.7,
    north: 43.5,
};

/// `n` users, 40% of them region members. Each user follows 10 to 40
/// others, picked inside its own group with probability `homophily`.
/// About 6% of members post a geotag inside the box; about 1% of
/// outsiders do too (visitors); everyone else geotags outside or not at all.
pub fn planted_census(n: usize, homophily: f64, seed: u64) -> PlantedCensus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("u{i:05}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_members = n * 2 / 5;
    let is_member: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in &order[..n_members] {
            v[i] = true;
        }
        v
    };
    let groups: [Vec<usize>; 2] = [
        (0..n).filter(|&i| !is_member[i]).collect(),
        (0..n).filter(|&i| is_member[i]).collect(),
    ];
    let mut edges = Vec::new();
    let mut out_deg = vec![0u64; n];
    let mut in_deg = vec![0u64; n];
    for u in 0..n {
        let d = rng.gen_range(10..=40);
        let mut picked = HashSet::new();
        while picked.len() < d {
            let same = rng.gen_bool(homophily);
            let group = &groups[(is_member[u] == same) as usize];
            let v = *group.choose(&mut rng).expect("both groups non-empty");
            if v != u && picked.insert(v) {
                edges.push((ids[u].clone(), ids[v].clone()));
                out_deg[u] += 1;
                in_deg[v] += 1;
            }
        }
    }
    let mut stream = Vec::new();
    for u in 0..n {
        let author = SocialUser {
            user_id: ids[u].clone(),
            followers_total: in_deg[u] + rng.gen_range(0..=in_deg[u] / 2),
            friends_total: out_deg[u] + rng.gen_range(0..=out_deg[u] / 2),
            location_text: None,
        };
        let inside = if is_member[u] { 0.06 } else { 0.01 };
        let geo = if rng.gen_bool(inside) {
            Some((rng.gen_range(42.5..43.4), rng.gen_range(-3.4..-1.8)))
        } else if rng.gen_bool(0.3) {
            Some((rng.gen_range(36.0..42.0), rng.gen_range(-9.0..3.0)))
        } else {
            None
        };
        stream.push(StreamMessage { author, geo });
    }
    PlantedCensus {
        stream,
        edges,
        members: (0..n).filter(|&i| is_member[i]).map(|i| ids[i].clone()).collect(),
        labels: (0..n).map(|i| (ids[i].clone(), is_member[i])).collect(),
        bbox: PLANTED_BBOX,
    }
}

/// Parties named in the synthetic replay corpus; each is one leaf
/// category of [`replay_taxonomy`].
pub const REPLAY_PARTIES: [&str; 5] = ["Podemos", "Bildu", "PNV", "Sortu", "Geroa"];

/// Taxonomy file matching every message of [`replay_corpus`].
pub fn replay_taxonomy() -> String {
    REPLAY_PARTIES
        .iter()
        .map(|p| format!("politics/parties/{p}\t\\b{p}\\b\t*\tcase\n"))
        .collect()
}

/// A replay file of `n` social messages in the export line format. Each
/// message is a bundled corpus sentence in one of the four languages with
/// exactly one party name inserted, so every message yields one mention.
/// About a tenth are reposts of an earlier message.
pub fn replay_corpus(n: usize, seed: u64) -> String {
    use chrono::{TimeZone, Utc};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences: Vec<(&str, Vec<String>)> = crate::resources::LANGUAGES
        .iter()
        .map(|&lang| {
            let split = crate::resources::langid::corpus_split(lang).expect("bundled corpus");
            let lines = split
                .train
                .lines()
                .chain(split.held_out.iter().copied())
                .filter(|l| l.chars().count() >= 40)
                .map(str::to_string)
                .collect();
            (lang, lines)
        })
        .collect();
    let followers: Vec<Option<u64>> = (0..500)
        .map(|_| match rng.gen_range(0..4) {
            0 => None,
            1 => Some(rng.gen_range(0..1000)),
            2 => Some(rng.gen_range(1000..=10_000)),
            _ => Some(rng.gen_range(10_001..200_000)),
        })
        .collect();
    let start = Utc.with_ymd_and_hms(2024, 5, 1, 0, 0, 0).single().expect("valid date");
    let mut out = String::with_capacity(n * 200);
    for i in 0..n {
        let (_, lines) = sentences.choose(&mut rng).expect("four languages");
        let sentence = lines.choose(&mut rng).expect("non-empty corpus");
        let party = REPLAY_PARTIES.choose(&mut rng).expect("non-empty");
        let mut words: Vec<&str> = sentence.split_whitespace().collect();
        let at = rng.gen_range(0..=words.len());
        words.insert(at, party);
        let author = rng.gen_range(0..followers.len());
        let repost_of = (i > 0 && rng.gen_bool(0.1)).then(|| format!("m{}", rng.gen_range(0..i)));
        let line = serde_json::json!({
            "source_id": "replay",
            "native_id": format!("m{i}"),
            "text": words.join(" "),
            "timestamp": start + chrono::Duration::milliseconds(i as i64 * 864),
            "author_id": format!("u{author}"),
            "author_handle": format!("@user{author}"),
            "author_followers": followers[author],
            "is_repost": repost_of.is_some(),
            "repost_of": repost_of,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
