use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use llplace_core::parser::{parse_output, serialize_block, ParseError};
use llplace_core::{OutputBlockKind, PlacementRecord, Point3};

const FRAGMENTS: &[&str] = &[
    "[Task Output]",
    "[/Task Output]",
    "[Added Output]",
    "[/Added Output]",
    "[Deleted Output]",
    "[/Deleted Output]",
    "```json",
    "```",
    "{",
    "}",
    "[",
    "]",
    "\"object\"",
    "\"coordinates\"",
    "\"rotate\"",
    "\"angle\"",
    ":",
    ",",
    "\"x\": 1e308",
    "\"y\": -0.0",
    "NaN",
    "null",
    "\"bed\"",
    "\u{feff}",
    "\u{1F6CF}",
    "\n",
    "\\u0000",
];

fn valid_block(rng: &mut ChaCha8Rng, kind: OutputBlockKind) -> String {
    let n = rng.random_range(0..4);
    let records: Vec<PlacementRecord> = (0..n)
        .map(|i| {
            PlacementRecord::new(
                ["bed", "desk", "chair", "lamp"][i],
                Point3::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..3.0), rng.random_range(-3.0..3.0))
                    .unwrap(),
                rng.random_range(0.0..360.0),
            )
        })
        .collect();
    serialize_block(kind, &records).unwrap()
}

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..6) {
        let at = if chars.is_empty() { 0 } else { rng.random_range(0..=chars.len()) };
        match rng.random_range(0..4) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => {
                let frag = FRAGMENTS[rng.random_range(0..FRAGMENTS.len())];
                for (k, c) in frag.chars().enumerate() {
                    chars.insert(at + k, c);
                }
            }
            2 if at < chars.len() => {
                let end = rng.random_range(at..chars.len().min(at + 12) + 1).min(chars.len());
                let copy: Vec<char> = chars[at..end].to_vec();
                for (k, c) in copy.into_iter().enumerate() {
                    chars.insert(end + k, c);
                }
            }
            _ => chars.insert(at, char::from_u32(rng.random_range(0x20..0x2FFF)).unwrap_or('?')),
        }
    }
    chars.into_iter().collect()
}

fn arbitrary(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..200);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                FRAGMENTS[rng.random_range(0..FRAGMENTS.len())].to_string()
            } else {
                char::from_u32(rng.random_range(0..0x11000)).unwrap_or('x').to_string()
            }
        })
        .collect()
}

fn is_enumerated(e: &ParseError) -> bool {
    matches!(
        e,
        ParseError::MissingDelimiter { .. }
            | ParseError::MultipleOutputBlocks { .. }
            | ParseError::UnterminatedBlock { .. }
            | ParseError::MalformedJson { .. }
            | ParseError::UnknownObject { .. }
            | ParseError::CountMismatch { .. }
            | ParseError::MissingField { .. }
            | ParseError::DuplicatePlacement { .. }
    )
}

#[test]
fn ten_thousand_inputs_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let names: BTreeSet<String> = ["bed", "desk", "chair", "lamp"].iter().map(|s| s.to_string()).collect();
    let mut ok = 0usize;
    let mut errors = 0usize;
    for case in 0..10_000 {
        let kind = OutputBlockKind::ALL[case % 3];
        let text = match case % 3 {
            0 => arbitrary(&mut rng),
            1 => {
                let block = valid_block(&mut rng, kind);
                mutate(&mut rng, &block)
            }
            _ => {
                let block = valid_block(&mut rng, kind);
                format!("{}{}{}", arbitrary(&mut rng), block, arbitrary(&mut rng))
            }
        };
        let outcome = std::panic::catch_unwind(|| parse_output(&text, kind, &names));
        match outcome {
            Ok(Ok(_)) => ok += 1,
            Ok(Err(e)) => {
                assert!(is_enumerated(&e));
                assert!(!e.to_string().is_empty());
                errors += 1;
            }
            Err(_) => panic!("parser panicked on case {case}: {text:?}"),
        }
    }
    assert_eq!(ok + errors, 10_000);
    assert!(errors > 0);
}
