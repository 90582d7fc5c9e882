use hexplane::cloud::{decode_ascii, decode_binary, encode_ascii, encode_binary, CloudFormat, Features, PointCloud};
use hexplane::Error;
use proptest::prelude::*;

fn record_of(e: Error) -> Option<usize> {
    match e {
        Error::Format { record, .. } => record,
        other => panic!("expected a format error, got {other}"),
    }
}

prop_compose! {
    fn arb_cloud()(n in 1usize..40, extra in 0usize..4, labeled in any::<bool>())
        (values in prop::collection::vec(-1e6f32..1e6, n * (3 + extra)),
         labels in prop::collection::vec(prop::option::weighted(0.9, 0u32..=i32::MAX as u32), n),
         extra in Just(extra), labeled in Just(labeled)) -> PointCloud {
        let cols = 3 + extra;
        let rows: Vec<&[f32]> = values.chunks_exact(cols).collect();
        let positions = rows.iter().map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]).collect();
        let features = (extra > 0).then(|| {
            Features::new(extra, rows.iter().flat_map(|r| r[3..].iter().map(|v| *v as f64)).collect()).unwrap()
        });
        PointCloud::new(positions, features, labeled.then_some(labels)).unwrap()
    }
}

proptest! {
    #[test]
    fn ascii_round_trip(cloud in arb_cloud()) {
        prop_assert_eq!(decode_ascii(&encode_ascii(&cloud)).unwrap(), cloud);
    }

    #[test]
    fn binary_round_trip(cloud in arb_cloud()) {
        let bytes = encode_binary(&cloud);
        prop_assert_eq!(CloudFormat::sniff(&bytes), CloudFormat::Binary);
        prop_assert_eq!(decode_binary(&bytes).unwrap(), cloud);
    }

    #[test]
    fn truncated_binary_names_first_missing_record(cloud in arb_cloud(), cut in 1usize..64) {
        let bytes = encode_binary(&cloud);
        let header = 19;
        let record_len = (bytes.len() - header) / cloud.len();
        let keep = bytes.len().saturating_sub(cut).max(header);
        let result = decode_binary(&bytes[..keep]);
        if keep == bytes.len() {
            prop_assert!(result.is_ok());
        } else {
            let complete = (keep - header) / record_len;
            prop_assert_eq!(record_of(result.unwrap_err()), Some(complete));
        }
    }
}

#[test]
fn ascii_errors_carry_the_record_index() {
    let cases = [
        ("hexpc ascii 3 3 0\n0 0 0\n1 1\n2 2 2\n", 1),
        ("hexpc ascii 2 3 1\n0 0 0 1\n1 1 1 -2\n", 1),
        ("hexpc ascii 2 3 0\n0 0 0\n1 nan 1\n", 1),
        ("hexpc ascii 2 3 0\n0 0 x\n", 0),
        ("hexpc ascii 3 3 0\n0 0 0\n1 1 1\n", 2),
        ("hexpc ascii 1 3 0\n0 0 0\n1 1 1\n", 1),
    ];
    for (text, record) in cases {
        assert_eq!(record_of(decode_ascii(text).unwrap_err()), Some(record), "{text:?}");
    }
}

#[test]
fn header_problems_have_no_record() {
    for text in ["", "hexpc binary 1 3 0\n0 0 0\n", "hexpc ascii 0 3 0\n", "hexpc ascii 1 2 0\n0 0\n", "hexpc ascii 1 3 2\n0 0 0\n"] {
        assert_eq!(record_of(decode_ascii(text).unwrap_err()), None, "{text:?}");
    }
}

#[test]
fn binary_label_out_of_range_is_attributed() {
    let cloud = PointCloud::from_positions(vec![[0.0; 3], [1.0; 3]])
        .unwrap()
        .with_labels(vec![Some(1), Some(2)])
        .unwrap();
    let mut bytes = encode_binary(&cloud);
    let n = bytes.len();
    bytes[n - 4..].copy_from_slice(&(-5i32).to_le_bytes());
    assert_eq!(record_of(decode_binary(&bytes).unwrap_err()), Some(1));
    bytes.push(0);
    assert!(decode_binary(&bytes).is_err());
}

#[test]
fn comments_and_blank_lines_are_skipped() {
    let text = "# exported\nhexpc ascii 2 3 1\n\n0 0 0 -1  # unlabeled\n1.5 2 3 4\n";
    let c = decode_ascii(text).unwrap();
    assert_eq!(c.labels().unwrap(), &[None, Some(4)]);
    assert_eq!(CloudFormat::sniff(text.as_bytes()), CloudFormat::Ascii);
}
