//! Regenerates the CSV fixtures under `tests/fixtures/`.
//!
//! The four named fixtures are synthetic stand-ins sized and shaped like
//! common benchmark datasets (class count, group count, rough accuracy and
//! class imbalance); they are not the real data.
//!
//! Usage: `cargo run --example make_fixtures`

use std::fs::File;
use std::path::Path;

use multifair::data_model::ColumnSchema;
use multifair::synth::ConfusionGenerator;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&out)?;
    let fixtures: Vec<(&str, usize, u64, ConfusionGenerator)> = vec![
        (
            "bar",
            22406,
            1,
            ConfusionGenerator {
                class_probs: vec![0.08, 0.88, 0.04],
                group_probs: vec![0.16, 0.84],
                tdr: vec![vec![0.05, 0.95, 0.01], vec![0.12, 0.99, 0.03]],
                class_names: names(&["fail", "pass_first", "pass_second"]),
                group_names: names(&["non_white", "white"]),
            },
        ),
        (
            "cannabis",
            1885,
            2,
            ConfusionGenerator {
                class_probs: vec![0.22, 0.20, 0.58],
                group_probs: vec![0.5, 0.5],
                tdr: vec![vec![0.75, 0.35, 0.88], vec![0.65, 0.30, 0.85]],
                class_names: names(&["never", "not_past_year", "past_year"]),
                group_names: names(&["female", "male"]),
            },
        ),
        (
            "obesity",
            1490,
            3,
            ConfusionGenerator {
                class_probs: vec![0.18, 0.20, 0.22, 0.20, 0.20],
                group_probs: vec![0.5, 0.5],
                tdr: vec![vec![0.85, 0.70, 0.75, 0.78, 0.82], vec![0.80, 0.72, 0.70, 0.80, 0.78]],
                class_names: names(&["insufficient", "normal", "obesity_1", "overweight_1", "overweight_2"]),
                group_names: names(&["female", "male"]),
            },
        ),
        (
            "parkinsons",
            5875,
            4,
            ConfusionGenerator {
                class_probs: vec![0.25, 0.35, 0.40],
                group_probs: vec![0.68, 0.32],
                tdr: vec![vec![0.95, 0.93, 0.90], vec![0.93, 0.90, 0.88]],
                class_names: names(&["high", "low", "moderate"]),
                group_names: names(&["female", "male"]),
            },
        ),
        (
            "biased",
            3000,
            5,
            ConfusionGenerator {
                class_probs: vec![1.0 / 3.0; 3],
                group_probs: vec![0.7, 0.3],
                tdr: vec![vec![0.8; 3], vec![0.55; 3]],
                class_names: names(&["c0", "c1", "c2"]),
                group_names: names(&["g0", "g1"]),
            },
        ),
        (
            "fair_perfect",
            60,
            6,
            ConfusionGenerator {
                class_probs: vec![1.0 / 3.0; 3],
                group_probs: vec![0.5, 0.5],
                tdr: vec![vec![1.0; 3], vec![1.0; 3]],
                class_names: names(&["c0", "c1", "c2"]),
                group_names: names(&["g0", "g1"]),
            },
        ),
    ];
    for (name, n, seed, generator) in fixtures {
        let ds = generator.generate(n, seed)?;
        ds.write_csv(File::create(out.join(format!("{name}.csv")))?, &ColumnSchema::default())?;
        println!("{name}: {} rows, accuracy {:.3}", ds.len(), ds.blackbox_accuracy());
    }
    Ok(())
}
