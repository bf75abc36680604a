//! Synthetic corpora with a planted topic switch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PipelineError;
use crate::corpus::Post;

pub const TOPIC_A: [&str; 24] = [
    "package",
    "shipping",
    "stealth",
    "vacuum",
    "sealed",
    "tracking",
    "courier",
    "parcel",
    "delivery",
    "envelope",
    "customs",
    "postage",
    "arrived",
    "domestic",
    "overseas",
    "label",
    "box",
    "mailbox",
    "signature",
    "express",
    "dispatch",
    "transit",
    "warehouse",
    "carrier",
];

pub const TOPIC_B: [&str; 24] = [
    "bitcoin",
    "wallet",
    "escrow",
    "monero",
    "address",
    "transaction",
    "confirmations",
    "exchange",
    "mixer",
    "tumbler",
    "withdraw",
    "deposit",
    "balance",
    "fee",
    "blockchain",
    "coins",
    "satoshi",
    "ledger",
    "multisig",
    "refund",
    "payout",
    "key",
    "hash",
    "node",
];

const AUTHORS_A: [&str; 4] = ["vendor_a", "buyer_1", "buyer_2", "mod_x"];
const AUTHORS_B: [&str; 4] = ["vendor_b", "buyer_3", "buyer_4", "mod_x"];
const START: i64 = 1_388_534_400;
const WORDS_PER_POST: std::ops::RangeInclusive<usize> = 8..=16;

/// `n_posts` posts of one community: topic A vocabulary strictly before
/// `switch_index`, topic B from it onwards. Timestamps strictly increase.
pub fn generate_synthetic_corpus(
    community_id: &str,
    n_posts: usize,
    switch_index: usize,
    seed: u64,
) -> Result<Vec<Post>, PipelineError> {
    if !(0 < switch_index && switch_index < n_posts) {
        return Err(PipelineError::BadParams(format!(
            "need 0 < switch_index ({switch_index}) < n_posts ({n_posts})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts = START;
    let posts = (0..n_posts)
        .map(|i| {
            let (vocab, authors) = if i < switch_index {
                (&TOPIC_A, &AUTHORS_A)
            } else {
                (&TOPIC_B, &AUTHORS_B)
            };
            let words = rng.random_range(WORDS_PER_POST);
            let body: Vec<&str> = (0..words)
                .map(|_| *vocab.choose(&mut rng).expect("non-empty"))
                .collect();
            ts += rng.random_range(60..3600);
            Post {
                post_id: format!("{community_id}-{i:06}"),
                community_id: community_id.to_owned(),
                author: Some((*authors.choose(&mut rng).expect("non-empty")).to_owned()),
                timestamp: ts,
                body: body.join(" "),
            }
        })
        .collect();
    Ok(posts)
}

pub fn write_jsonl(posts: &[Post], path: &Path) -> Result<(), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for p in posts {
        serde_json::to_writer(&mut out, p).map_err(|e| PipelineError::Io(e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_post_record, InputFormat};

    #[test]
    fn vocabulary_switches_exactly_at_index() {
        let posts = generate_synthetic_corpus("synthetic", 1000, 500, 1).unwrap();
        assert_eq!(posts.len(), 1000);
        for (i, p) in posts.iter().enumerate() {
            let vocab: &[&str] = if i < 500 { &TOPIC_A } else { &TOPIC_B };
            assert!(p.body.split(' ').all(|w| vocab.contains(&w)), "post {i}");
        }
        assert!(posts.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn vocabularies_are_disjoint() {
        assert!(TOPIC_A.iter().all(|w| !TOPIC_B.contains(w)));
    }

    #[test]
    fn same_seed_same_file() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_jsonl(&generate_synthetic_corpus("s", 50, 10, 7).unwrap(), &a).unwrap();
        write_jsonl(&generate_synthetic_corpus("s", 50, 10, 7).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let first = std::fs::read_to_string(&a).unwrap();
        let parsed = parse_post_record(first.lines().next().unwrap(), InputFormat::Jsonl).unwrap();
        assert_eq!(parsed.post_id, "s-000000");
    }

    #[test]
    fn bad_switch_index() {
        assert!(matches!(
            generate_synthetic_corpus("s", 10, 0, 1),
            Err(PipelineError::BadParams(_))
        ));
        assert!(matches!(
            generate_synthetic_corpus("s", 10, 10, 1),
            Err(PipelineError::BadParams(_))
        ));
    }
}
