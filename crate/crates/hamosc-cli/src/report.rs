//! Machine-readable outputs: report documents, deterministic JSON with
//! 17-significant-digit floats, and trajectory CSV.

use hamosc::criteria::CriterionReport;
use hamosc::integrate::{Trajectory, ZeroRecord};
use serde::Serialize;
use std::io::{self, Write};

/// Tool version baked into every document.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The one report shape shared by the analysis subcommands; sections not
/// produced by a given subcommand are omitted.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of the configuration file bytes, lowercase hex.
    pub config_sha256: String,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<CriterionReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeros: Option<Vec<ZeroRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near_misses: Option<Vec<ZeroRecord>>,
    /// Largest conjoined-defect norm along the trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_max: Option<f64>,
    /// Joint rescaling events as (time, factor applied).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale_events: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted_steps: Option<usize>,
    /// Criteria claim oscillation but the integration cross-check found
    /// fewer than two zeros over the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl ReportDocument {
    pub fn new(command: &'static str, config_sha256: String) -> ReportDocument {
        ReportDocument {
            tool: "hamosc",
            version: VERSION,
            config_sha256,
            command,
            reports: None,
            zeros: None,
            near_misses: None,
            defect_max: None,
            rescale_events: None,
            accepted_steps: None,
            disagreement: None,
            horizon: None,
        }
    }
}

/// Outcome document of `validate`.
#[derive(Debug, Serialize)]
pub struct ValidationDocument {
    pub tool: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    pub valid: bool,
    /// `"parse"`, `"semantic"` or `"ok"` — the stage reached.
    pub stage: &'static str,
    pub issues: Vec<crate::config::Issue>,
    /// Byte offset of a parse error, when one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    /// Structural probe report, when the probe stage was reached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<hamosc::coeffs::ValidationReport>,
}

/// JSON serializer whose floats carry 17 significant digits
/// (`{:.16e}`), enough to round-trip any double exactly; output is
/// deterministic for a given document.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any document with the 17-significant-digit float format.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .expect("report documents always serialize");
    String::from_utf8(out).expect("serialized JSON is UTF-8")
}

/// Lowercase-hex SHA-256 of the raw configuration bytes.
pub fn config_hash(raw: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(raw);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write as _;
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}

/// Writes the per-step trajectory table.
///
/// One row per accepted step node. The determinant itself would under- or
/// overflow, so its complex logarithm is written instead:
/// `det_proxy_re = log|det Φ|` (sum of log singular values, `-inf` at an
/// exact zero) and `det_proxy_im = arg det Φ` (0 or ±π for real systems,
/// i.e. the sign).
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "t,sigma_min_ratio,conjoined_defect,det_proxy_re,det_proxy_im"
    )?;
    for k in 0..traj.times.len() {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            traj.times[k],
            traj.sigma_min_ratio[k],
            traj.conjoined_defect[k],
            traj.det_logabs_original(k),
            traj.det_phase(k).arg(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_serialize_with_seventeen_significant_digits() {
        #[derive(Serialize)]
        struct Doc {
            x: f64,
            v: Vec<f64>,
            n: usize,
        }
        let third = 1.0f64 / 3.0;
        let json = to_json_string(&Doc {
            x: third,
            v: vec![0.0, -2.5e-300],
            n: 7,
        });
        assert!(json.contains("3.3333333333333331e-1"), "{json}");
        assert!(json.contains("\"n\":7"), "{json}");
        // Round-trip is exact.
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), third);
        assert_eq!(back["v"][1].as_f64().unwrap(), -2.5e-300);
    }

    #[test]
    fn serialization_is_deterministic() {
        let doc = ReportDocument::new("criteria", "ab".repeat(32));
        assert_eq!(to_json_string(&doc), to_json_string(&doc));
    }

    #[test]
    fn config_hash_matches_known_vector() {
        // SHA-256 of the empty string.
        assert_eq!(
            config_hash(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
