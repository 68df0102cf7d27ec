//! Device parameter sets and the plain-text config format they are loaded
//! from.

use crate::error::{Error, Result};

/// Static parameters of a transmon operated as a d-level system.
///
/// Frequencies are lab-frame transition frequencies in GHz; coherence times
/// are in microseconds. The rotating-frame model only ever consumes the
/// anharmonicity `omega12 - omega01`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub omega01_ghz: f64,
    pub omega12_ghz: f64,
    pub t1_01_us: f64,
    pub t1_12_us: f64,
    pub t2s_01_us: f64,
    pub t2s_12_us: f64,
    pub levels: usize,
}

impl DeviceParams {
    /// Tantalum-transmon qutrit testbed parameters (the `qudit` preset).
    pub fn qudit() -> Self {
        DeviceParams {
            omega01_ghz: 3.446,
            omega12_ghz: 3.237,
            t1_01_us: 220.0,
            t1_12_us: 145.0,
            t2s_01_us: 22.0,
            t2s_12_us: 25.0,
            levels: 3,
        }
    }

    /// Cloud-provider transmon parameters (the `aspen` preset). The 1-2
    /// manifold was not characterized independently, so its coherence times
    /// default to copies of the 0-1 values.
    pub fn aspen() -> Self {
        DeviceParams {
            omega01_ghz: 3.883,
            omega12_ghz: 3.674,
            t1_01_us: 22.0,
            t1_12_us: 22.0,
            t2s_01_us: 42.0,
            t2s_12_us: 42.0,
            levels: 3,
        }
    }

    /// Rotating-frame anharmonicity alpha = omega12 - omega01 in GHz
    /// (negative for a transmon).
    pub fn anharmonicity_ghz(&self) -> f64 {
        self.omega12_ghz - self.omega01_ghz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.levels == 2 || self.levels == 3) {
            return Err(Error::UnsupportedDimension(self.levels));
        }
        for (name, v) in [
            ("omega01_ghz", self.omega01_ghz),
            ("omega12_ghz", self.omega12_ghz),
            ("t1_01_us", self.t1_01_us),
            ("t1_12_us", self.t1_12_us),
            ("t2s_01_us", self.t2s_01_us),
            ("t2s_12_us", self.t2s_12_us),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Parses the key-value device config format: one `key = value` per line,
    /// `#` comments. `t1_12_us` / `t2s_12_us` default to the 0-1 values when
    /// omitted; `levels` defaults to 3; `omega12_ghz` may be omitted only for
    /// two-level devices (it is unused there).
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut seen: Vec<(String, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!("line {}: `{}` is not a number", lineno + 1, value.trim()))
            })?;
            const KNOWN: [&str; 7] = [
                "omega01_ghz",
                "omega12_ghz",
                "t1_01_us",
                "t1_12_us",
                "t2s_01_us",
                "t2s_12_us",
                "levels",
            ];
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown device key `{key}`")));
            }
            if seen.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("duplicate device key `{key}`")));
            }
            seen.push((key, value));
        }
        let get = |k: &str| seen.iter().find(|(key, _)| key == k).map(|&(_, v)| v);
        let require = |k: &str| {
            get(k).ok_or_else(|| Error::Config(format!("missing required device key `{k}`")))
        };
        let levels = match get("levels") {
            Some(v) => {
                if v.fract() != 0.0 || v < 2.0 {
                    return Err(Error::Config(format!("levels must be an integer >= 2, got {v}")));
                }
                v as usize
            }
            None => 3,
        };
        let omega01_ghz = require("omega01_ghz")?;
        let omega12_ghz = match get("omega12_ghz") {
            Some(v) => v,
            None if levels == 2 => omega01_ghz, // unused for two-level devices
            None => return Err(Error::Config("missing required device key `omega12_ghz`".into())),
        };
        let t1_01_us = require("t1_01_us")?;
        let t2s_01_us = require("t2s_01_us")?;
        let dev = DeviceParams {
            omega01_ghz,
            omega12_ghz,
            t1_01_us,
            t1_12_us: get("t1_12_us").unwrap_or(t1_01_us),
            t2s_01_us,
            t2s_12_us: get("t2s_12_us").unwrap_or(t2s_01_us),
            levels,
        };
        dev.validate()?;
        Ok(dev)
    }

    /// Renders the parameters back into the config format (used for the
    /// reproducibility headers of output files).
    pub fn to_config_string(&self) -> String {
        format!(
            "omega01_ghz = {}\nomega12_ghz = {}\nt1_01_us = {}\nt1_12_us = {}\nt2s_01_us = {}\nt2s_12_us = {}\nlevels = {}\n",
            self.omega01_ghz,
            self.omega12_ghz,
            self.t1_01_us,
            self.t1_12_us,
            self.t2s_01_us,
            self.t2s_12_us,
            self.levels
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qudit_preset_matches_the_characterized_device() {
        let d = DeviceParams::qudit();
        assert_eq!(d.omega01_ghz, 3.446);
        assert_eq!(d.omega12_ghz, 3.237);
        assert!((d.anharmonicity_ghz() - (-0.209)).abs() < 1e-12);
        assert_eq!((d.t1_01_us, d.t1_12_us), (220.0, 145.0));
        assert_eq!((d.t2s_01_us, d.t2s_12_us), (22.0, 25.0));
    }

    #[test]
    fn config_round_trip_and_12_manifold_defaults() {
        let text = "omega01_ghz = 3.883\nomega12_ghz = 3.674\nt1_01_us = 22\nt2s_01_us = 42\n";
        let d = DeviceParams::from_config_str(text).unwrap();
        assert_eq!(d, DeviceParams::aspen());
        let again = DeviceParams::from_config_str(&d.to_config_string()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn config_errors_are_reported() {
        assert!(DeviceParams::from_config_str("omega01_ghz = abc").is_err());
        assert!(DeviceParams::from_config_str("bogus_key = 1").is_err());
        assert!(DeviceParams::from_config_str("omega01_ghz = 3.4").is_err()); // missing keys
        let dup = "omega01_ghz = 3.4\nomega01_ghz = 3.5";
        assert!(DeviceParams::from_config_str(dup).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# test device\nomega01_ghz = 5.0 # inline\n\nt1_01_us = 10\nt2s_01_us = 5\nlevels = 2\n";
        let d = DeviceParams::from_config_str(text).unwrap();
        assert_eq!(d.levels, 2);
        assert_eq!(d.omega12_ghz, 5.0); // defaulted, unused for levels = 2
    }
}
