use std::path::PathBuf;

use mrt_cli::config::{Problem, RunConfig};
use mrt_cli::output::{jnum, num};
use mrt_cli::{thread_count, CliError};
use serde_json::Value;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config_err(text: &str) -> String {
    match RunConfig::parse(text) {
        Err(CliError::Config(msg)) => msg,
        other => panic!("expected a config error for {text}, got {other:?}"),
    }
}

#[test]
fn shipped_configs_parse_and_resolve() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "schema.json" {
            continue;
        }
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.physical().unwrap();
        cfg.profile().unwrap();
        match cfg.problem {
            Problem::Bounded2d => {
                cfg.rect().unwrap();
            }
            Problem::Compressible => {
                cfg.equilibrium(&cfg.grid().unwrap()).unwrap();
            }
            Problem::Incompressible => {
                assert!(!cfg.modes().unwrap().is_empty());
            }
        }
        seen += 1;
    }
    assert!(seen >= 8);
}

#[test]
fn schema_lists_exactly_the_accepted_keys() {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(configs_dir().join("schema.json")).unwrap()).unwrap();
    let props = schema["properties"].as_object().unwrap();
    assert_eq!(schema["additionalProperties"], Value::Bool(false));
    // Each schema key is accepted on its own (with a value of the right shape)...
    for key in props.keys() {
        let value = match key.as_str() {
            "problem" | "c_const" => continue,
            "profile" => "\"affine\"".to_string(),
            "scheme" => "\"chebyshev\"".to_string(),
            "initial" => "\"random\"".to_string(),
            "time_unit" => "\"viscous\"".to_string(),
            "table" | "out" => "\"x\"".to_string(),
            "modes" => "[[1, 0]]".to_string(),
            "random_x0" => "true".to_string(),
            "field_dir" => "1".to_string(),
            "sign" => "-1".to_string(),
            "gamma" | "n" | "k_max" | "nx" | "nz" | "samples" | "every" | "threads" | "seed" => "2".to_string(),
            _ => "0.5".to_string(),
        };
        let text = format!("{{\"problem\": \"compressible\", \"c_const\": 50, \"{key}\": {value}}}");
        RunConfig::parse(&text).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
    // ...and a key outside the schema is not.
    assert!(config_err(r#"{"problem": "incompressible", "bogus": 1}"#).contains("bogus"));
}

#[test]
fn invalid_values_are_config_errors() {
    for text in [
        "{}",
        "not json",
        r#"{"problem": "maxwell"}"#,
        r#"{"problem": "incompressible", "mu": -1}"#,
        r#"{"problem": "incompressible", "g": 0}"#,
        r#"{"problem": "incompressible", "field_dir": 2}"#,
        r#"{"problem": "incompressible", "modes": [[0, 0]]}"#,
        r#"{"problem": "incompressible", "modes": []}"#,
        r#"{"problem": "incompressible", "modes": [[1, 0]], "k_max": 3}"#,
        r#"{"problem": "incompressible", "k_max": 0}"#,
        r#"{"problem": "incompressible", "sign": 0.5}"#,
        r#"{"problem": "incompressible", "t_end": 1, "dt": 2}"#,
        r#"{"problem": "incompressible", "threads": 0}"#,
        r#"{"problem": "incompressible", "gamma": 0.5}"#,
        r#"{"problem": "compressible"}"#,
    ] {
        config_err(text);
    }
    // Checks that need the profile or the equilibrium.
    let low_c = RunConfig::parse(r#"{"problem": "compressible", "c_const": 0.01}"#).unwrap();
    assert!(matches!(low_c.equilibrium(&low_c.grid().unwrap()), Err(CliError::Config(_))));
    let negative = RunConfig::parse(r#"{"problem": "incompressible", "rho_mid": 0.5, "beta": 1}"#).unwrap();
    assert!(matches!(negative.profile(), Err(CliError::Config(_))));
    let tiny = RunConfig::parse(r#"{"problem": "incompressible", "n": 1}"#).unwrap();
    assert!(matches!(tiny.grid(), Err(CliError::Config(_))));
}

#[test]
fn table_profiles_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..=20).map(|i| -1.0 + 0.1 * i as f64).map(|x| format!("{x},{}\n", 2.0 + x)).collect();
    std::fs::write(dir.path().join("rho.csv"), format!("x3,rho\n{rows}")).unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, r#"{"problem": "incompressible", "profile": "table", "table": "rho.csv"}"#).unwrap();
    let p = RunConfig::load(&cfg_path).unwrap().profile().unwrap();
    assert!((p.rho(0.25) - 2.25).abs() < 1e-12);
    std::fs::write(&cfg_path, r#"{"problem": "incompressible", "profile": "table", "table": "missing.csv"}"#).unwrap();
    assert!(matches!(RunConfig::load(&cfg_path).unwrap().profile(), Err(CliError::Config(_))));
}

#[test]
fn thread_precedence() {
    assert_eq!(thread_count(Some(3), Some("5"), Some(7)).unwrap(), Some(3));
    assert_eq!(thread_count(None, Some("5"), Some(7)).unwrap(), Some(5));
    assert_eq!(thread_count(None, None, Some(7)).unwrap(), Some(7));
    assert_eq!(thread_count(None, None, None).unwrap(), None);
    assert!(thread_count(None, Some("zero"), None).is_err());
    assert!(thread_count(Some(0), None, None).is_err());
}

#[test]
fn numbers_round_trip() {
    for x in [0.0, -0.0, 1.0, 1.0 / 3.0, 2.0 / std::f64::consts::PI, 1e-300, 5e-324, f64::MAX, -123456.789e10] {
        let s = num(x);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{s}");
    }
    assert_eq!(num(f64::INFINITY), "inf");
    assert_eq!(num(f64::NEG_INFINITY), "-inf");
    assert!(num(f64::NAN).parse::<f64>().unwrap().is_nan());
    assert_eq!(jnum(f64::INFINITY), Value::String("inf".into()));
}
