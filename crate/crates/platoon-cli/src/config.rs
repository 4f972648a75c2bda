//! Scenario and analysis configuration files.
//!
//! Configs are TOML with a `[platoon]` section, a `[leader]` section, a
//! `[[vehicles]]` array for the followers, and an optional `[analysis]`
//! section used by the region command. `--set key.path=value` overrides
//! are applied to the parsed document before deserialization, with the
//! short aliases (`D`, `Ts`, `T`, `h`, `m`, `dc`) accepted everywhere.

use std::path::{Path, PathBuf};

use platoon_core::{
    LeaderProfile, PlatoonConfig, SweepTemplate, ValidatedConfig, VehicleParams, VehicleState,
    load_leader_profile, validate_platoon,
};
use serde::Deserialize;

use crate::CliError;

fn default_sample_time() -> f64 {
    0.01
}

fn default_actuation_delay() -> f64 {
    0.7
}

fn default_horizon() -> f64 {
    120.0
}

fn default_alpha() -> f64 {
    5.0
}

fn default_b() -> f64 {
    10.0
}

fn default_c() -> f64 {
    2.0
}

fn default_follower_speed() -> f64 {
    15.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    platoon: Option<PlatoonSection>,
    leader: Option<LeaderSection>,
    #[serde(default)]
    vehicles: Vec<VehicleSection>,
    analysis: Option<AnalysisSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatoonSection {
    #[serde(alias = "D", default = "default_actuation_delay")]
    actuation_delay: f64,
    #[serde(alias = "Ts", default = "default_sample_time")]
    sample_time: f64,
    #[serde(alias = "T", default = "default_horizon")]
    horizon: f64,
}

impl Default for PlatoonSection {
    fn default() -> Self {
        Self {
            actuation_delay: default_actuation_delay(),
            sample_time: default_sample_time(),
            horizon: default_horizon(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeaderSection {
    tau: f64,
    #[serde(alias = "dc", default)]
    comm_delay: f64,
    #[serde(default)]
    initial_speed: Option<f64>,
    #[serde(default)]
    length: f64,
    /// Piecewise `(time, speed)` knots.
    #[serde(default)]
    profile: Option<Vec<(f64, f64)>>,
    /// Recorded trajectory CSV (`t,v` header), relative to the config.
    #[serde(default)]
    profile_csv: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleSection {
    tau: f64,
    #[serde(alias = "h")]
    headway: f64,
    #[serde(alias = "dc", default)]
    comm_delay: f64,
    #[serde(alias = "m")]
    mpf_depth: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_b")]
    b: f64,
    #[serde(default = "default_c")]
    c: f64,
    #[serde(default = "default_follower_speed")]
    initial_speed: f64,
    #[serde(default)]
    initial_spacing: Option<f64>,
    #[serde(default)]
    initial_accel: f64,
    #[serde(default)]
    length: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_headway_one")]
    pub h: f64,
    #[serde(default)]
    pub dc: f64,
    #[serde(
        rename = "D",
        alias = "actuation_delay",
        default = "default_actuation_delay"
    )]
    pub d: f64,
    #[serde(alias = "p", default)]
    pub pole: Option<f64>,
}

fn default_headway_one() -> f64 {
    1.0
}

/// Canonical spelling for the short key aliases, per section kind.
fn canonical_key(section: &str, key: &str) -> String {
    let mapped = match (section, key) {
        ("platoon", "D") => "actuation_delay",
        ("platoon", "Ts") => "sample_time",
        ("platoon", "T") => "horizon",
        ("vehicles", "h") => "headway",
        ("vehicles", "m") => "mpf_depth",
        ("vehicles", "dc") => "comm_delay",
        ("leader", "dc") => "comm_delay",
        ("analysis", "actuation_delay") => "D",
        ("analysis", "d") => "D",
        ("analysis", "p") => "pole",
        (_, other) => other,
    };
    mapped.to_string()
}

/// Fields that are floating-point in the schema; integer-looking override
/// values get coerced so `--set platoon.D=0` works.
fn is_float_field(key: &str) -> bool {
    matches!(
        key,
        "actuation_delay"
            | "sample_time"
            | "horizon"
            | "tau"
            | "headway"
            | "comm_delay"
            | "alpha"
            | "b"
            | "c"
            | "h"
            | "dc"
            | "D"
            | "pole"
            | "initial_speed"
            | "initial_spacing"
            | "initial_accel"
            | "length"
    )
}

fn parse_override_value(raw: &str, key: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        if is_float_field(key) {
            return toml::Value::Float(i as f64);
        }
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(raw.to_string())
}

/// Applies one `key.path=value` override to the parsed document.
fn apply_override(doc: &mut toml::Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw_value) = assignment.split_once('=').ok_or_else(|| {
        CliError::config(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.len() < 2 {
        return Err(CliError::config(format!(
            "override path '{path}' must name a section and a key"
        )));
    }
    let section = segments[0];
    let mut cursor = doc
        .get_mut(section)
        .ok_or_else(|| CliError::config(format!("unknown section '{section}' in override")))?;
    for segment in &segments[1..segments.len() - 1] {
        cursor = match cursor {
            toml::Value::Array(items) => {
                let idx: usize = segment.parse().map_err(|_| {
                    CliError::config(format!("'{segment}' is not an array index in '{path}'"))
                })?;
                items.get_mut(idx).ok_or_else(|| {
                    CliError::config(format!("index {idx} out of range in '{path}'"))
                })?
            }
            toml::Value::Table(table) => table
                .get_mut(*segment)
                .ok_or_else(|| CliError::config(format!("unknown key '{segment}' in '{path}'")))?,
            _ => {
                return Err(CliError::config(format!(
                    "'{segment}' does not address a table or array in '{path}'"
                )));
            }
        };
    }
    let leaf = canonical_key(section, segments[segments.len() - 1]);
    let table = cursor.as_table_mut().ok_or_else(|| {
        CliError::config(format!("override path '{path}' does not end in a table"))
    })?;
    // Drop an aliased spelling the file may have used.
    for alias in ["D", "Ts", "T", "h", "m", "dc", "d", "p", "actuation_delay"] {
        if alias != leaf && canonical_key(section, alias) == leaf {
            table.remove(alias);
        }
    }
    table.insert(leaf.clone(), parse_override_value(raw_value, &leaf));
    Ok(())
}

fn read_document(path: &Path, overrides: &[String]) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut doc = toml::Value::Table(table);
    for assignment in overrides {
        apply_override(&mut doc, assignment)?;
    }
    doc.try_into()
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// Parses and validates a simulation scenario.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<ValidatedConfig, CliError> {
    let file = read_document(path, overrides)?;
    let leader = file
        .leader
        .ok_or_else(|| CliError::config("scenario config needs a [leader] section".into()))?;
    if file.vehicles.is_empty() {
        return Err(CliError::config(
            "scenario config needs at least one [[vehicles]] entry".into(),
        ));
    }
    let platoon = file.platoon.unwrap_or_default();

    let profile = match (&leader.profile, &leader.profile_csv) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "leader has both `profile` and `profile_csv`; pick one".into(),
            ));
        }
        (Some(knots), None) => LeaderProfile::from_knots(knots.clone())
            .map_err(|e| CliError::config(format!("leader profile: {e}")))?,
        (None, Some(csv)) => {
            let csv_path = resolve_relative(path, csv);
            load_leader_profile(&csv_path, platoon.sample_time)
                .map_err(|e| CliError::config(format!("{}: {e}", csv_path.display())))?
        }
        (None, None) => LeaderProfile::constant(leader.initial_speed.unwrap_or(14.0)),
    };

    let mut vehicles = vec![VehicleParams {
        index: 0,
        tau: leader.tau,
        headway: 0.0,
        comm_delay: leader.comm_delay,
        mpf_depth: 0,
        alpha: 0.0,
        b: 0.0,
        c: 0.0,
        length: leader.length,
    }];
    let leader_speed = leader
        .initial_speed
        .unwrap_or_else(|| profile.speed_at(0.0));
    let mut initial_states = vec![VehicleState::new(0.0, leader_speed, 0.0)];

    for (offset, section) in file.vehicles.iter().enumerate() {
        let index = offset + 1;
        vehicles.push(VehicleParams {
            index,
            tau: section.tau,
            headway: section.headway,
            comm_delay: section.comm_delay,
            mpf_depth: section.mpf_depth,
            alpha: section.alpha,
            b: section.b,
            c: section.c,
            length: section.length,
        });
        // The first follower defaults to the cut-in gap of the bundled
        // scenarios; everyone else starts at the equilibrium spacing.
        let spacing = section.initial_spacing.unwrap_or(if index == 1 {
            6.0
        } else {
            section.headway * section.initial_speed
        });
        initial_states.push(VehicleState::new(
            spacing,
            section.initial_speed,
            section.initial_accel,
        ));
    }

    let config = PlatoonConfig {
        vehicles,
        actuation_delay: platoon.actuation_delay,
        sample_time: platoon.sample_time,
        horizon: platoon.horizon,
        leader_profile: profile,
        initial_states,
    };
    validate_platoon(config).map_err(|e| CliError::config(e.to_string()))
}

/// Parses the `[analysis]` template used by the region command.
pub fn load_analysis(path: &Path, overrides: &[String]) -> Result<SweepTemplate, CliError> {
    let file = read_document(path, overrides)?;
    let analysis = file
        .analysis
        .ok_or_else(|| CliError::config("region config needs an [analysis] section".into()))?;
    Ok(SweepTemplate {
        tau: analysis.tau,
        alpha: analysis.alpha,
        b: analysis.b,
        c: analysis.c,
        h: analysis.h,
        comm_delay: analysis.dc,
        actuation_delay: analysis.d,
        pole: analysis.pole,
    })
}

fn resolve_relative(config_path: &Path, target: &str) -> PathBuf {
    let target = Path::new(target);
    if target.is_absolute() {
        target.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        file
    }

    const SMALL: &str = r#"
[platoon]
D = 0.7
Ts = 0.01
T = 30.0

[leader]
tau = 0.3
dc = 0.03
initial_speed = 14.0
profile = [[0.0, 14.0], [10.0, 14.0], [12.0, 16.0], [30.0, 16.0]]

[[vehicles]]
tau = 0.3
h = 0.4
dc = 0.09
m = 1

[[vehicles]]
tau = 0.25
h = 0.4
dc = 0.12
m = 2
alpha = 4.0
"#;

    #[test]
    fn scenario_round_trip() {
        let file = write_config(SMALL);
        let config = load_scenario(file.path(), &[]).unwrap();
        let cfg = config.get();
        assert_eq!(cfg.vehicles.len(), 3);
        assert!((cfg.actuation_delay - 0.7).abs() < 1e-12);
        assert_eq!(cfg.vehicles[1].headway, 0.4);
        assert_eq!(cfg.vehicles[1].alpha, 5.0); // default gain
        assert_eq!(cfg.vehicles[2].alpha, 4.0);
        assert_eq!(cfg.vehicles[2].mpf_depth, 2);
        // Cut-in default for the first follower, equilibrium for the rest.
        assert_eq!(cfg.initial_states[1].spacing, 6.0);
        assert_eq!(cfg.initial_states[2].spacing, 0.4 * 15.0);
    }

    #[test]
    fn overrides_apply_with_aliases() {
        let file = write_config(SMALL);
        let config = load_scenario(
            file.path(),
            &[
                "platoon.D=0".to_string(),
                "vehicles.1.m=1".to_string(),
                "vehicles.0.h=0.5".to_string(),
            ],
        )
        .unwrap();
        let cfg = config.get();
        assert_eq!(cfg.actuation_delay, 0.0);
        assert_eq!(cfg.vehicles[2].mpf_depth, 1);
        assert_eq!(cfg.vehicles[1].headway, 0.5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let file = write_config(&SMALL.replace("dc = 0.03", "bogus_key = 1.0"));
        let err = load_scenario(file.path(), &[]).unwrap_err();
        assert_eq!(err.code(), "parse");
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn bad_override_paths_are_reported() {
        let file = write_config(SMALL);
        for bad in ["noequals", "platoon.D", "nosuch.key=1", "platoon.bogus.x=1"] {
            let err = load_scenario(file.path(), &[bad.to_string()]).unwrap_err();
            assert_eq!(err.code(), "config", "{bad}");
        }
    }

    #[test]
    fn validation_errors_surface() {
        let file = write_config(&SMALL.replace("m = 2", "m = 5"));
        let err = load_scenario(file.path(), &[]).unwrap_err();
        assert_eq!(err.code(), "config");
        assert!(err.to_string().contains("MPF depth"), "{err}");
    }

    fn shipped(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name)
    }

    #[test]
    fn shipped_ten_vehicle_scenario_matches_its_table() {
        let config = load_scenario(&shipped("ten_vehicle.toml"), &[]).unwrap();
        let cfg = config.get();
        assert_eq!(cfg.vehicles.len(), 10);
        assert!((cfg.actuation_delay - 0.7).abs() < 1e-12);
        assert_eq!(cfg.sample_time, 0.01);

        let expect: [(f64, f64, f64, usize); 9] = [
            (0.3, 0.4, 0.09, 1),
            (0.25, 0.4, 0.12, 2),
            (0.25, 0.5, 0.14, 3),
            (0.2, 0.5, 0.09, 3),
            (0.25, 0.3, 0.18, 3),
            (0.3, 0.25, 0.1, 3),
            (0.25, 0.25, 0.12, 3),
            (0.25, 0.5, 0.14, 3),
            (0.3, 0.3, 0.0, 3),
        ];
        assert_eq!(cfg.vehicles[0].tau, 0.3);
        assert!((cfg.vehicles[0].comm_delay - 0.03).abs() < 1e-12);
        for (i, (tau, h, dc, m)) in expect.into_iter().enumerate() {
            let v = &cfg.vehicles[i + 1];
            assert_eq!(v.tau, tau, "vehicle {}", i + 1);
            assert_eq!(v.headway, h, "vehicle {}", i + 1);
            assert!((v.comm_delay - dc).abs() < 1e-12, "vehicle {}", i + 1);
            assert_eq!(v.mpf_depth, m, "vehicle {}", i + 1);
            assert_eq!((v.alpha, v.b, v.c), (5.0, 10.0, 2.0));
            assert_eq!(cfg.initial_states[i + 1].speed, 15.0);
        }
        // Cut-in spacing for the first follower, equilibrium elsewhere.
        assert_eq!(cfg.initial_states[1].spacing, 6.0);
        assert_eq!(cfg.initial_states[2].spacing, 0.4 * 15.0);
        assert_eq!(cfg.initial_states[0].speed, 14.0);
    }

    #[test]
    fn shipped_trace_scenario_matches_its_table() {
        let config = load_scenario(&shipped("four_vehicle_trace.toml"), &[]).unwrap();
        let cfg = config.get();
        assert_eq!(cfg.vehicles.len(), 5);
        let expect: [(f64, f64, f64, usize); 4] = [
            (0.3, 1.0, 0.2, 1),
            (0.25, 0.7, 0.1, 2),
            (0.25, 1.0, 0.1, 2),
            (0.2, 0.7, 0.0, 2),
        ];
        for (i, (tau, h, dc, m)) in expect.into_iter().enumerate() {
            let v = &cfg.vehicles[i + 1];
            assert_eq!((v.tau, v.headway), (tau, h), "vehicle {}", i + 1);
            assert!((v.comm_delay - dc).abs() < 1e-12);
            assert_eq!(v.mpf_depth, m);
        }
        assert_eq!(cfg.initial_states[1].spacing, 14.5);
        assert_eq!(cfg.initial_states[2].spacing, 0.7 * 15.0);
        // Data-driven leader: starts at the recorded speed.
        assert!(cfg.leader_profile.is_data());
        assert!((cfg.leader_profile.speed_at(0.0) - 14.9).abs() < 1e-9);
        assert!((cfg.initial_states[0].speed - 14.9).abs() < 1e-9);
    }

    #[test]
    fn analysis_template_parses() {
        let file = write_config(
            r#"
[analysis]
tau = 0.1
alpha = 5.0
b = 10.0
c = 2.0
h = 1.0
dc = 0.0
D = 0.7
"#,
        );
        let template = load_analysis(file.path(), &["analysis.dc=0.1".into()]).unwrap();
        assert_eq!(template.tau, 0.1);
        assert_eq!(template.comm_delay, 0.1);
        assert_eq!(template.actuation_delay, 0.7);
        assert_eq!(template.pole, None);
    }
}
