mod common;

use std::io::BufRead;

use asp_core::cop::io::{distribution_from_json, distribution_to_json, read_jsonl, write_jsonl};
use asp_core::cop::{InstanceDistribution, MixedGaussian};
use asp_core::pipeline::{cmd_gen_data, DataSpec};

#[test]
fn ten_thousand_instances_of_twenty_nodes() {
    let data = cmd_gen_data(&DataSpec::Uniform, 20, 10_000, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u20.jsonl");
    write_jsonl(&p, &data).unwrap();
    let lines = std::io::BufReader::new(std::fs::File::open(&p).unwrap()).lines().count();
    assert_eq!(lines, 10_000);
    let back = read_jsonl(&p).unwrap();
    assert_eq!(back, data);
    assert!(back.iter().all(|i| i.n() == 20));
    assert!(back.iter().flat_map(|i| i.points()).all(|p| p.iter().all(|&c| (0.0..=1.0).contains(&c))));
}

#[test]
fn generation_is_seeded() {
    let spec = DataSpec::MixedGaussian { lambda_max: 1.0 };
    assert_eq!(cmd_gen_data(&spec, 9, 50, 1).unwrap(), cmd_gen_data(&spec, 9, 50, 1).unwrap());
    assert_ne!(cmd_gen_data(&spec, 9, 50, 1).unwrap(), cmd_gen_data(&spec, 9, 50, 2).unwrap());
}

#[test]
fn saved_distributions_sample_identically() {
    let dist = InstanceDistribution::mixture(
        vec![0.25, 0.75],
        vec![InstanceDistribution::uniform(7), InstanceDistribution::mixed_gaussian(7, MixedGaussian::default())],
    )
    .unwrap();
    let text = distribution_to_json(&dist).to_string();
    let back = distribution_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.sample(30, 8).unwrap(), dist.sample(30, 8).unwrap());
}
