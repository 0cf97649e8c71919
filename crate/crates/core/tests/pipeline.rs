use std::fs;
use std::path::PathBuf;

use perfhom::config::{parse_config, render_config};
use perfhom::homogenize::{realization_at, sample_study_realizations};
use perfhom::mpp::{mix64, sample_process_with, thin, MppRealization, SampleOptions};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = parse_config(&render_config(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn study_realizations_match_direct_sampling() {
    let text = fs::read_to_string(configs_dir().join("poisson_mixed.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let grounds = sample_study_realizations(&cfg).unwrap();
    assert_eq!(grounds.len(), cfg.study.seeds);
    let opts = SampleOptions {
        cap_resolution: cfg.run.cap_resolution,
        extrapolate: cfg.run.extrapolate,
    };
    for (i, g) in grounds.iter().enumerate() {
        let seed = mix64(cfg.study.base_seed, i as u64);
        assert_eq!(g.seed, seed);
        let direct = sample_process_with(&cfg.generator, &g.window, seed, &opts).unwrap();
        assert_eq!(&direct, g);
        // every scale sees the same points, only through a different window
        for &eps in &cfg.study.epsilons {
            let r = realization_at(g, &cfg, eps);
            assert_eq!(r.points, g.points);
            assert!(g.window.contains_box(&r.window));
        }
    }
}

#[test]
fn realization_json_round_trip_then_thin() {
    let text = fs::read_to_string(configs_dir().join("poisson_mixed.toml")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let g = &sample_study_realizations(&cfg).unwrap()[0];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    fs::write(&path, serde_json::to_string(g).unwrap()).unwrap();
    let back: MppRealization = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(&back, g);

    let (close, far) = thin(&back, 1.0).unwrap();
    assert_eq!(close.points.len() + far.points.len(), g.points.len());
    for p in &far.points {
        let isolated = g
            .points
            .iter()
            .filter(|q| q.z != p.z)
            .all(|q| (0..3).map(|a| (q.z[a] - p.z[a]).powi(2)).sum::<f64>().sqrt() >= 1.0);
        assert!(isolated);
    }
}
