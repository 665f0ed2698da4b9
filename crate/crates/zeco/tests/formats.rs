use std::path::Path;

use proptest::prelude::*;
use zeco::archive::{decode_archive, encode_archive, read_archive, write_archive};
use zeco::trec::{parse_run, write_run};
use zeco_core::encoder::EmbeddingArchive;
use zeco_core::{Ranking, Role, Token, TokenMatrix};

fn unit(mut r: Vec<f32>) -> Vec<f32> {
    let n = r.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n < 1e-3 {
        r.iter_mut().for_each(|x| *x = 0.0);
        r[0] = 1.0;
    } else {
        r.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    }
    r
}

fn record(dim: usize) -> impl Strategy<Value = TokenMatrix> {
    prop::collection::vec(
        (
            prop::sample::select(Role::ALL.to_vec()),
            "[a-z#é]{1,6}",
            prop::collection::vec(-1.0f32..1.0, dim),
        ),
        1..6,
    )
    .prop_map(move |toks| {
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        for (role, text, row) in toks {
            let text = if role == Role::Expansion {
                String::new()
            } else {
                text
            };
            tokens.push(Token::new(text, role).unwrap());
            data.extend(unit(row));
        }
        TokenMatrix::new(tokens, data, dim).unwrap()
    })
}

fn archive() -> impl Strategy<Value = EmbeddingArchive> {
    (1usize..12).prop_flat_map(|dim| {
        prop::collection::btree_map("[A-Za-z0-9_#:]{1,10}", record(dim), 0..6).prop_map(
            move |records| {
                let mut a = EmbeddingArchive::new(dim).unwrap();
                for (id, m) in records {
                    a.push(id, m).unwrap();
                }
                a
            },
        )
    })
}

proptest! {
    #[test]
    fn archive_bytes_round_trip(a in archive()) {
        let bytes = encode_archive(&a).unwrap();
        let back = decode_archive(&bytes).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(encode_archive(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_archives_never_decode(a in archive(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_archive(&a).unwrap();
        let n = cut.index(bytes.len());
        prop_assert!(decode_archive(&bytes[..n]).is_err());
    }

    #[test]
    fn run_files_round_trip(
        queries in prop::collection::btree_map("[a-z0-9_]{1,6}", prop::collection::btree_map("[a-z0-9]{1,5}", -1e6f64..1e6, 1..20), 1..5),
    ) {
        let rankings: Vec<Ranking> = queries
            .into_iter()
            .map(|(q, docs)| {
                let n = docs.len();
                Ranking::from_scores(q, docs, n).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_run(&mut buf, &rankings, "tag").unwrap();
        prop_assert_eq!(parse_run(buf.as_slice(), Path::new("r")).unwrap(), rankings);
    }
}

#[test]
fn archive_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = EmbeddingArchive::new(2).unwrap();
    let m = TokenMatrix::new(vec![Token::new("x", Role::Doc).unwrap()], vec![0.6, 0.8], 2).unwrap();
    a.push("p1", m).unwrap();
    let path = dir.path().join("a.zeco");
    write_archive(&a, &path).unwrap();
    assert_eq!(read_archive(&path).unwrap(), a);
    assert!(read_archive(dir.path().join("missing.zeco")).is_err());
}
