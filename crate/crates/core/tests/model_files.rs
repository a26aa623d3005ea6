mod common;

use common::*;
use netsurgery::model_io::{
    compression_report, export_sparse, load_dense, read_model_file, save_dense, write_file, CompressionReport,
    LayerCompression, SparseModel,
};
use netsurgery::Error;

#[test]
fn random_networks_round_trip_through_both_formats() {
    let mut rng = rng(31);
    let dir = tempfile::tempdir().unwrap();
    for case in 0..50 {
        let net = random_network(&mut rng);
        let dense = save_dense(&net);
        let back = load_dense(&dense).unwrap();
        assert!(back == net, "case {case}");
        assert_eq!(save_dense(&back), dense);

        let path = dir.path().join(format!("m{case}.dnss"));
        write_file(&path, &export_sparse(&net).to_bytes()).unwrap();
        let sparse = read_model_file(&path).unwrap();
        // Exact value equality; a pruned negative weight masks to -0.0.
        for (a, b) in sparse.params.iter().zip(&net.params) {
            assert_eq!(a.masked(), b.masked(), "case {case}");
        }
        assert_eq!(sparse.biases, net.biases);
        let r = compression_report(&net);
        assert_eq!(r.kept(), net.kept_weight_count() + net.biases.iter().map(Vec::len).sum::<usize>());
    }
}

#[test]
fn every_truncation_is_rejected() {
    let net = random_network(&mut rng(32));
    for bytes in [save_dense(&net), export_sparse(&net).to_bytes()] {
        for cut in 0..bytes.len() {
            let err = netsurgery::model_io::load_model(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Truncated { .. } | Error::Format { .. }), "cut {cut}: {err}");
        }
        assert!(SparseModel::from_bytes(&save_dense(&net)).is_err());
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_model_file(dir.path().join("none.dnsd")), Err(Error::Io { .. })));
}

fn layer(name: &str, weights: usize, kept_weights: usize, biases: usize) -> LayerCompression {
    LayerCompression {
        name: name.to_string(),
        weights,
        kept_weights,
        biases,
    }
}

#[test]
fn table_style_report_for_lenet_300_100() {
    // Kept weight counts at roughly 1.8%, 1.8% and 5.5%.
    let r = CompressionReport {
        layers: vec![
            layer("fc1", 235_200, 4_234, 300),
            layer("fc2", 30_000, 540, 100),
            layer("fc3", 1_000, 55, 10),
        ],
    };
    assert_eq!(r.total(), 266_610);
    assert_eq!(r.kept(), 5_239);
    assert_eq!(r.pruned(), 261_371);
    assert!((r.compression_rate() - 266_610.0 / 5_239.0).abs() < 1e-12);
    assert!((r.weight_compression_rate() - 266_200.0 / 4_829.0).abs() < 1e-12);
    assert_eq!(
        r.to_csv(),
        "layer,total,kept,percent\nfc1,235500,4534,1.925\nfc2,30100,640,2.126\nfc3,1010,65,6.436\ntotal,266610,5239,1.965\n"
    );
    let table = r.to_string();
    assert!(table.starts_with("Layer"));
    assert!(table.contains("fc1"));
    assert!(table.ends_with("Compression: 50.9x"));
}

#[test]
fn serialization_and_report_arithmetic() {
    check_serialization(100, 33).unwrap();
}
