//! Self-describing JSON design documents.

use std::path::Path;

use adaptrial::design::{Design, SingleStageDesign, TwoStageDesign, TwoStageParams};
use adaptrial::TruncatedNormalPrior;
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "design", rename_all = "kebab-case")]
pub enum Payload {
    SingleStage(SingleStageDesign),
    TwoStage(TwoStageParams),
}

/// Planning constraints the design was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_cond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prior: TruncatedNormalPrior,
    pub constraints: Constraints,
    /// SHA-256 of the canonical JSON of the settings that produced the design
    pub config_digest: String,
    /// RFC 3339 creation time
    pub created: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub schema_version: String,
    #[serde(flatten)]
    pub payload: Payload,
    pub provenance: Provenance,
}

pub fn digest<T: Serialize>(config: &T) -> anyhow::Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl DesignDocument {
    pub fn new(design: &Design, prior: TruncatedNormalPrior, constraints: Constraints, config_digest: String) -> Self {
        let payload = match design {
            Design::SingleStage(d) => Payload::SingleStage(*d),
            Design::TwoStage(d) => Payload::TwoStage(d.params().clone()),
        };
        let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            payload,
            provenance: Provenance { prior, constraints, config_digest, created },
        }
    }

    /// The validated design.
    pub fn design(&self) -> anyhow::Result<Design> {
        Ok(match &self.payload {
            Payload::SingleStage(d) => Design::SingleStage(SingleStageDesign::new(d.n, d.c)?),
            Payload::TwoStage(p) => Design::TwoStage(TwoStageDesign::try_from(p.clone())?),
        })
    }

    pub fn prior(&self) -> TruncatedNormalPrior {
        self.provenance.prior
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).context("design document is not valid JSON")?;
        match raw.get("schema_version").and_then(|v| v.as_str()) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => bail!("unsupported schema version {other:?}, expected {SCHEMA_VERSION:?}"),
            None => bail!("design document lacks a schema_version"),
        }
        let doc: Self = serde_json::from_value(raw).context("malformed design document")?;
        doc.provenance.prior.validate()?;
        doc.design()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_json()?).with_context(|| format!("cannot write {}", path.display()))
    }
}
