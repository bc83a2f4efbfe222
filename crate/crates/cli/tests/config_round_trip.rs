use proptest::prelude::*;
use svfield_cli::config::{BoxConfig, GeometryConfig, ShapeConfig};
use svfield_cli::ExperimentConfig;

fn base() -> ExperimentConfig {
    ExperimentConfig::parse(
        r#"
seed = 1

[model.z]
type = "garch"
alpha0 = 0.1
alpha1 = 0.1
beta1 = 0.85
"#,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn toml_round_trip_preserves_config(
        seed in 0..=i64::MAX as u64,
        threads in 1usize..16,
        reps in 1u64..100_000,
        thresholds in prop::collection::vec(0.01f64..100.0, 1..5),
        quantile in 0.5f64..0.9999,
        c in 1.0f64..1e6,
        t in 1i64..1000,
        split in 0.05f64..0.95,
    ) {
        let mut cfg = base();
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.plan.replications = reps;
        cfg.plan.thresholds = thresholds;
        cfg.plan.quantile = quantile;
        cfg.geometry = Some(GeometryConfig {
            shape: ShapeConfig::BoxUnion {
                dim: 2,
                boxes: vec![BoxConfig { lo: vec![0.0, 0.0], hi: vec![split, 1.0] }],
            },
            c_n: vec![c, c],
            t_n: vec![t, t],
            x_n: None,
            schedule: Vec::new(),
        });
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
