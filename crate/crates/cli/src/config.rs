//! Scenario configuration (TOML).
//!
//! ```toml
//! case = "a"                 # "a" | "b"
//! engine = "master"          # "microscopic" | "master" | "fock"
//! phi = 3.141592653589793    # or: phi = { rabi = 2.0, detuning = 8.0, t_int = 0.5 }
//! alpha0 = { re = 1.4142135623730951, im = 0.0 }
//!
//! [bath]        # microscopic engine and compare only
//! modes = 201
//! half_bandwidth = 50.0
//! gamma = 1.0
//!
//! [master]      # master and fock engines, compare
//! gamma = 1.0
//!
//! [fock]        # fock engine only
//! n_max = 30
//! dt = 1e-5
//!
//! [compare]     # optional, compare only
//! window = [0.1, 2.0]
//!
//! [time]
//! t_max_over_tc = 2.0
//! points = 101
//!
//! [output]
//! format = "csv"             # "csv" | "json"
//! path = "out.csv"           # relative to the config file
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    A,
    B,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EngineName {
    Microscopic,
    Master,
    Fock,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DispersiveSection {
    pub rabi: f64,
    pub detuning: f64,
    pub t_int: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PhiValue {
    Direct(f64),
    Dispersive(DispersiveSection),
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub modes: usize,
    pub half_bandwidth: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MasterSection {
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FockSection {
    pub n_max: usize,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub window: [f64; 2],
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_max_over_tc: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: OutputFormat,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub case: CaseName,
    pub engine: EngineName,
    pub phi: PhiValue,
    pub alpha0: ComplexValue,
    pub bath: Option<BathSection>,
    pub master: Option<MasterSection>,
    pub fock: Option<FockSection>,
    pub compare: Option<CompareSection>,
    pub time: TimeSection,
    pub output: OutputSection,
}

/// Which subcommand will consume the config; decides the required sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Compare,
    Sweep,
}

/// A parsed config together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: ScenarioConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, CliError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| CliError::schema(path, e.to_string().trim_end()))?;
        Ok(Self { path: path.to_path_buf(), config })
    }

    /// Output location, relative paths taken from the config directory.
    pub fn output_path(&self) -> PathBuf {
        let p = &self.config.output.path;
        if p.is_absolute() {
            p.clone()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        let c = &self.config;
        let fail = |field: &str, msg: String| Err(CliError::schema(&self.path, format!("{field}: {msg}")));

        if !c.alpha0.re.is_finite() || !c.alpha0.im.is_finite() {
            return fail("alpha0", "components must be finite".into());
        }
        match c.phi {
            PhiValue::Direct(phi) if !phi.is_finite() => return fail("phi", "must be finite".into()),
            PhiValue::Dispersive(d) => {
                if !(d.rabi.is_finite() && d.t_int.is_finite()) {
                    return fail("phi", "rabi and t_int must be finite".into());
                }
                if d.detuning == 0.0 || !d.detuning.is_finite() {
                    return fail("phi.detuning", "must be finite and non-zero".into());
                }
            }
            _ => {}
        }
        if !(c.time.t_max_over_tc > 0.0 && c.time.t_max_over_tc.is_finite()) {
            return fail("time.t_max_over_tc", format!("must be > 0, got {}", c.time.t_max_over_tc));
        }
        if c.time.points < 2 {
            return fail("time.points", format!("must be >= 2, got {}", c.time.points));
        }

        let (need_bath, need_master, need_fock) = match (command, c.engine) {
            (Command::Compare, EngineName::Microscopic) => (true, true, false),
            (Command::Compare, other) => {
                return fail("engine", format!("compare needs engine = \"microscopic\", got {other:?}"))
            }
            (_, EngineName::Microscopic) => (true, false, false),
            (_, EngineName::Master) => (false, true, false),
            (_, EngineName::Fock) => (false, true, true),
        };
        for (name, needed, present) in [
            ("bath", need_bath, c.bath.is_some()),
            ("master", need_master, c.master.is_some()),
            ("fock", need_fock, c.fock.is_some()),
        ] {
            if needed && !present {
                return fail(name, format!("section required by engine {:?} for {command:?}", c.engine));
            }
            if present && !needed {
                return fail(name, format!("section not used by engine {:?} for {command:?}", c.engine));
            }
        }
        if c.compare.is_some() && command != Command::Compare {
            return fail("compare", "section only used by the compare command".into());
        }

        if let Some(b) = c.bath {
            if b.modes < 3 || b.modes % 2 == 0 {
                return fail("bath.modes", format!("must be odd and >= 3, got {}", b.modes));
            }
            if !(b.half_bandwidth > 0.0 && b.half_bandwidth.is_finite()) {
                return fail("bath.half_bandwidth", "must be positive".into());
            }
            if !(b.gamma > 0.0 && b.gamma.is_finite()) {
                return fail("bath.gamma", "must be positive".into());
            }
        }
        if let Some(m) = c.master {
            if !(m.gamma > 0.0 && m.gamma.is_finite()) {
                return fail("master.gamma", "must be positive".into());
            }
        }
        if let (Some(b), Some(m)) = (c.bath, c.master) {
            if b.gamma != m.gamma {
                return fail("master.gamma", format!("must equal bath.gamma ({} vs {})", m.gamma, b.gamma));
            }
        }
        if let Some(f) = c.fock {
            if f.n_max == 0 {
                return fail("fock.n_max", "must be positive".into());
            }
            if !(f.dt > 0.0 && f.dt.is_finite()) {
                return fail("fock.dt", "must be positive".into());
            }
        }
        if let Some(w) = c.compare {
            let [lo, hi] = w.window;
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return fail("compare.window", format!("need 0 <= lo < hi, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Decay rate defining `t_c = 1 / gamma`.
    pub fn gamma(&self) -> f64 {
        let c = &self.config;
        c.bath.map(|b| b.gamma).or(c.master.map(|m| m.gamma)).expect("validated config has a rate")
    }
}
