//! Seeded synthetic corpora for tests, CI, and offline demos: topical
//! sentences, paraphrase pairs, graded similarity pairs, and a small
//! retrieval collection with relevance judgments. Everything is a pure
//! function of its seed.

use crate::corpus::{Document, QRels, RetrievalCollection, StsPair};
use crate::util::stable_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Topic {
    nouns: &'static [&'static str],
    verbs: &'static [&'static str],
    adjectives: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic {
        nouns: &["star", "planet", "comet", "orbit", "galaxy", "telescope"],
        verbs: &["shines", "rotates", "drifts"],
        adjectives: &["bright", "distant", "icy"],
    },
    Topic {
        nouns: &["soup", "bread", "spice", "oven", "recipe", "flour"],
        verbs: &["bakes", "simmers", "rises"],
        adjectives: &["warm", "salty", "fresh"],
    },
    Topic {
        nouns: &["team", "goal", "match", "striker", "coach", "stadium"],
        verbs: &["scores", "defends", "wins"],
        adjectives: &["fast", "late", "strong"],
    },
    Topic {
        nouns: &["acid", "molecule", "reaction", "catalyst", "solvent", "crystal"],
        verbs: &["dissolves", "bonds", "reacts"],
        adjectives: &["stable", "pure", "volatile"],
    },
    Topic {
        nouns: &["melody", "chord", "rhythm", "guitar", "violin", "concert"],
        verbs: &["plays", "echoes", "swells"],
        adjectives: &["soft", "loud", "slow"],
    },
    Topic {
        nouns: &["wave", "coral", "reef", "tide", "whale", "current"],
        verbs: &["breaks", "flows", "surges"],
        adjectives: &["deep", "blue", "calm"],
    },
    Topic {
        nouns: &["tree", "moss", "fern", "oak", "trail", "canopy"],
        verbs: &["grows", "spreads", "falls"],
        adjectives: &["green", "dense", "old"],
    },
    Topic {
        nouns: &["engine", "track", "station", "wagon", "signal", "rail"],
        verbs: &["departs", "brakes", "rolls"],
        adjectives: &["heavy", "slow", "iron"],
    },
    Topic {
        nouns: &["dose", "vaccine", "symptom", "clinic", "nerve", "cell"],
        verbs: &["heals", "spreads", "responds"],
        adjectives: &["mild", "acute", "rare"],
    },
    Topic {
        nouns: &["storm", "cloud", "frost", "wind", "thunder", "rain"],
        verbs: &["gathers", "clears", "falls"],
        adjectives: &["cold", "heavy", "sudden"],
    },
    Topic {
        nouns: &["price", "trade", "stock", "profit", "merchant", "coin"],
        verbs: &["rises", "drops", "moves"],
        adjectives: &["high", "low", "steady"],
    },
    Topic {
        nouns: &["clay", "kiln", "glaze", "wheel", "vase", "shard"],
        verbs: &["spins", "hardens", "cracks"],
        adjectives: &["smooth", "thin", "fired"],
    },
];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

/// One statement or question built from a topic's vocabulary. Templates
/// bury the informative topic words among very frequent function words so
/// contrastive training has dominant tokens to find.
fn sentence(rng: &mut ChaCha8Rng, topic: &Topic) -> String {
    let n1 = pick(rng, topic.nouns);
    let n2 = pick(rng, topic.nouns);
    let v = pick(rng, topic.verbs);
    let adj = pick(rng, topic.adjectives);
    match rng.gen_range(0..6) {
        0 => format!("the {n1} of the {n2} is {adj}"),
        1 => format!("a {adj} {n1} {v} near the {n2}"),
        2 => format!("what is the {n1} of the {n2} ?"),
        3 => format!("how {v} the {adj} {n1} ?"),
        4 => format!("the {n1} and the {n2} {v} together"),
        _ => format!("it is {adj} that the {n1} {v}"),
    }
}

fn sentence_with(rng: &mut ChaCha8Rng, topic: &Topic, n1: &str, n2: &str) -> String {
    let v = pick(rng, topic.verbs);
    let adj = pick(rng, topic.adjectives);
    match rng.gen_range(0..6) {
        0 => format!("the {n1} of the {n2} is {adj}"),
        1 => format!("a {adj} {n1} {v} near the {n2}"),
        2 => format!("what is the {n1} of the {n2} ?"),
        3 => format!("how {v} the {adj} {n1} with the {n2} ?"),
        4 => format!("the {n1} and the {n2} {v} together"),
        _ => format!("it is {adj} that the {n1} {v} by the {n2}"),
    }
}

/// `n` one-sentence documents over the topical vocabulary (a miniature
/// line corpus in the style used for unsupervised sentence training).
pub fn sentences(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"sentences"]));
    (0..n)
        .map(|i| {
            let topic = &TOPICS[rng.gen_range(0..TOPICS.len())];
            Document {
                id: i.to_string(),
                title: None,
                text: sentence(&mut rng, topic),
            }
        })
        .collect()
}

/// `n` short question-style paraphrase pairs: both sides share the same
/// two topic nouns, phrased differently.
pub fn paraphrase_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"paraphrases"]));
    (0..n)
        .map(|_| {
            let topic = &TOPICS[rng.gen_range(0..TOPICS.len())];
            let n1 = pick(&mut rng, topic.nouns);
            let mut n2 = pick(&mut rng, topic.nouns);
            while n2 == n1 {
                n2 = pick(&mut rng, topic.nouns);
            }
            let a = sentence_with(&mut rng, topic, n1, n2);
            let mut b = sentence_with(&mut rng, topic, n1, n2);
            while b == a {
                b = sentence_with(&mut rng, topic, n1, n2);
            }
            (a, b)
        })
        .collect()
}

/// Graded sentence pairs: 5 = paraphrase, 3-4 = overlapping topic words,
/// 1-2 = same topic only, 0 = different topics.
pub fn sts_pairs(n: usize, seed: u64) -> Vec<StsPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"sts"]));
    (0..n)
        .map(|_| {
            let grade = rng.gen_range(0..=5u32);
            let ti = rng.gen_range(0..TOPICS.len());
            let topic = &TOPICS[ti];
            let n1 = pick(&mut rng, topic.nouns);
            let mut n2 = pick(&mut rng, topic.nouns);
            while n2 == n1 {
                n2 = pick(&mut rng, topic.nouns);
            }
            let s1 = sentence_with(&mut rng, topic, n1, n2);
            let s2 = match grade {
                5 => {
                    let mut s = sentence_with(&mut rng, topic, n1, n2);
                    while s == s1 {
                        s = sentence_with(&mut rng, topic, n1, n2);
                    }
                    s
                }
                4 => {
                    let mut n3 = pick(&mut rng, topic.nouns);
                    while n3 == n2 || n3 == n1 {
                        n3 = pick(&mut rng, topic.nouns);
                    }
                    sentence_with(&mut rng, topic, n1, n3)
                }
                3 => {
                    let mut n3 = pick(&mut rng, topic.nouns);
                    while n3 == n1 {
                        n3 = pick(&mut rng, topic.nouns);
                    }
                    let mut n4 = pick(&mut rng, topic.nouns);
                    while n4 == n1 || n4 == n3 {
                        n4 = pick(&mut rng, topic.nouns);
                    }
                    sentence_with(&mut rng, topic, n3, n4)
                }
                2 | 1 => sentence(&mut rng, topic),
                _ => {
                    let mut tj = rng.gen_range(0..TOPICS.len());
                    while tj == ti {
                        tj = rng.gen_range(0..TOPICS.len());
                    }
                    sentence(&mut rng, &TOPICS[tj])
                }
            };
            StsPair {
                sentence1: s1,
                sentence2: s2,
                score: grade as f64,
            }
        })
        .collect()
}

/// A retrieval collection: multi-sentence documents with titles, short
/// queries built from each target document's signature words, and binary
/// qrels. Documents of the same topic act as distractors.
pub fn retrieval_collection(n_docs: usize, n_queries: usize, seed: u64) -> RetrievalCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"retrieval"]));
    let mut corpus = Vec::with_capacity(n_docs);
    let mut signatures: Vec<(usize, &str, &str)> = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let ti = rng.gen_range(0..TOPICS.len());
        let topic = &TOPICS[ti];
        // Each document keeps returning to its two signature nouns, the
        // way an article stays on subject.
        let sig1 = pick(&mut rng, topic.nouns);
        let mut sig2 = pick(&mut rng, topic.nouns);
        while sig2 == sig1 {
            sig2 = pick(&mut rng, topic.nouns);
        }
        signatures.push((ti, sig1, sig2));
        let n_sentences = rng.gen_range(4..=7);
        let mut parts = Vec::with_capacity(n_sentences);
        for s in 0..n_sentences {
            let text = if s % 2 == 0 {
                sentence_with(&mut rng, topic, sig1, sig2)
            } else {
                sentence(&mut rng, topic)
            };
            parts.push(capitalize(&text));
        }
        corpus.push(Document {
            id: format!("doc{i}"),
            title: Some(format!("{} {}", sig1, sig2)),
            text: parts.join(" "),
        });
    }

    let mut queries = Vec::with_capacity(n_queries);
    let mut qrels = QRels::default();
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut rng);
    for (qi, &target) in order.iter().take(n_queries).enumerate() {
        let (ti, sig1, sig2) = signatures[target];
        let topic = &TOPICS[ti];
        let v = pick(&mut rng, topic.verbs);
        let text = match rng.gen_range(0..3) {
            0 => format!("what is the {sig1} of the {sig2} ?"),
            1 => format!("how {v} the {sig1} with the {sig2} ?"),
            _ => format!("the {sig1} and the {sig2}"),
        };
        let qid = format!("q{qi}");
        qrels.insert(&qid, format!("doc{target}"), 1);
        queries.push(Document {
            id: qid,
            title: None,
            text,
        });
    }
    RetrievalCollection {
        corpus,
        queries,
        qrels,
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Write a collection in the on-disk layout the loaders read
/// (`corpus.jsonl`, `queries.jsonl`, `qrels/test.tsv`).
pub fn write_retrieval_collection(
    collection: &RetrievalCollection,
    dir: &std::path::Path,
) -> crate::error::Result<()> {
    use crate::error::Error;
    use std::io::Write;
    std::fs::create_dir_all(dir.join("qrels")).map_err(|e| Error::io(dir, e))?;
    let mut corpus = Vec::new();
    for doc in &collection.corpus {
        let line = serde_json::json!({
            "_id": doc.id,
            "title": doc.title.clone().unwrap_or_default(),
            "text": doc.text,
        });
        writeln!(corpus, "{line}").expect("vec write");
    }
    std::fs::write(dir.join("corpus.jsonl"), corpus).map_err(|e| Error::io(dir, e))?;

    let mut queries = Vec::new();
    for q in &collection.queries {
        let line = serde_json::json!({"_id": q.id, "text": q.text});
        writeln!(queries, "{line}").expect("vec write");
    }
    std::fs::write(dir.join("queries.jsonl"), queries).map_err(|e| Error::io(dir, e))?;

    let mut qrels = String::from("query-id\tcorpus-id\tscore\n");
    for (qid, grades) in &collection.qrels.judgments {
        for (did, grade) in grades {
            qrels.push_str(&format!("{qid}\t{did}\t{grade}\n"));
        }
    }
    std::fs::write(dir.join("qrels").join("test.tsv"), qrels).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Write STS pairs as the tab-separated file the loader reads.
pub fn write_sts_pairs(pairs: &[StsPair], path: &std::path::Path) -> crate::error::Result<()> {
    use crate::error::Error;
    let mut out = String::from("sentence1\tsentence2\tscore\n");
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.sentence1, p.sentence2, p.score));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write one-sentence documents as a line corpus.
pub fn write_line_corpus(docs: &[Document], path: &std::path::Path) -> crate::error::Result<()> {
    use crate::error::Error;
    let mut out = String::new();
    for doc in docs {
        out.push_str(&doc.text);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_retrieval_collection;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(sentences(50, 7), sentences(50, 7));
        assert_eq!(paraphrase_pairs(20, 7), paraphrase_pairs(20, 7));
        assert_eq!(sts_pairs(20, 7), sts_pairs(20, 7));
        let a = retrieval_collection(20, 5, 7);
        let b = retrieval_collection(20, 5, 7);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.qrels, b.qrels);
        assert_ne!(sentences(50, 7), sentences(50, 8));
    }

    #[test]
    fn paraphrase_pairs_share_topic_nouns() {
        for (a, b) in paraphrase_pairs(30, 3) {
            let shared = a
                .split_whitespace()
                .filter(|w| w.len() > 3 && b.contains(*w))
                .count();
            assert!(shared >= 2, "pair lacks shared content: {a:?} / {b:?}");
        }
    }

    #[test]
    fn collection_round_trips_through_disk_format() {
        let collection = retrieval_collection(12, 4, 5);
        let dir = tempfile::tempdir().unwrap();
        write_retrieval_collection(&collection, dir.path()).unwrap();
        let loaded = load_retrieval_collection(dir.path()).unwrap();
        assert_eq!(loaded.corpus.len(), 12);
        assert_eq!(loaded.queries.len(), 4);
        assert_eq!(loaded.qrels.n_judgments(), collection.qrels.n_judgments());

        // Line-count oracle: loader sizes match the files on disk.
        let corpus_lines = std::fs::read_to_string(dir.path().join("corpus.jsonl"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(corpus_lines, loaded.corpus.len());
        let query_lines = std::fs::read_to_string(dir.path().join("queries.jsonl"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(query_lines, loaded.queries.len());
        let qrels_lines = std::fs::read_to_string(dir.path().join("qrels/test.tsv"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(qrels_lines - 1, loaded.qrels.n_judgments());
    }

    #[test]
    fn retrieval_docs_are_longer_than_queries() {
        let collection = retrieval_collection(10, 5, 1);
        let avg_doc: usize = collection
            .corpus
            .iter()
            .map(|d| d.text.split_whitespace().count())
            .sum::<usize>()
            / collection.corpus.len();
        let avg_q: usize = collection
            .queries
            .iter()
            .map(|d| d.text.split_whitespace().count())
            .sum::<usize>()
            / collection.queries.len();
        assert!(avg_doc > 3 * avg_q, "docs {avg_doc} vs queries {avg_q}");
    }
}
