//! Experiment configuration: human-readable TOML schema plus programmatic
//! defaults. The scheduler seed fully determines a run given identical
//! protocol logic.

use serde::{Deserialize, Serialize};

use crate::types::ReplicaId;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Federation size.
    pub n: usize,
    pub seed: u64,
    /// Virtual run horizon in milliseconds.
    pub duration_ms: u64,
    /// Measurement starts after the warm-up.
    pub warmup_ms: u64,
    /// Emulated network round trip in milliseconds; each direction gets half.
    pub rtt_ms: f64,
    /// Uniform jitter as a fraction of the one-way latency (0.2 = ±20%).
    pub jitter_frac: f64,
    /// Seeded worst-case delivery-order heuristics.
    pub adversarial: bool,
    /// Max one-way delay while a setup or recovery phase is active.
    pub sync_bound_ms: f64,
    pub setup_timeout_ms: f64,
    pub batch_min: usize,
    pub batch_max: usize,
    pub batch_timer_ms: f64,
    /// "all": every replica answers; "origin": only the intake replica.
    pub respond: String,
    pub clients: ClientConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultEvent>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 3,
            seed: 1,
            duration_ms: 5_000,
            warmup_ms: 500,
            rtt_ms: 5.0,
            jitter_frac: 0.2,
            adversarial: false,
            sync_bound_ms: 50.0,
            setup_timeout_ms: 2_000.0,
            batch_min: 100,
            batch_max: 1000,
            batch_timer_ms: 100.0,
            respond: "all".to_string(),
            clients: ClientConfig::default(),
            faults: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// "nxb" (random replica, one answer, fallback timer) or
    /// "bft" (broadcast, quorum of matching answers).
    pub model: String,
    /// Emulated client pool size; a client has at most one open request.
    pub count: usize,
    /// Issued requests per second (constant rate).
    pub rate_per_s: f64,
    pub payload_bytes: usize,
    pub fallback_timeout_ms: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            model: "nxb".to_string(),
            count: 200,
            rate_per_s: 500.0,
            payload_bytes: 0,
            fallback_timeout_ms: 5_000.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    pub at_ms: u64,
    pub replica: ReplicaId,
    pub action: FaultAction,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FaultAction {
    /// Stop the replica and erase its volatile state, enclave included.
    Crash,
    /// Rebuild from the operator backup and run the recovery protocol.
    Recover,
    /// Drop outbound vertex traffic to the listed targets until `until_ms`.
    Omit {
        targets: Vec<ReplicaId>,
        until_ms: u64,
    },
    /// Drop every outbound message until `until_ms` (a silent participant).
    Mute { until_ms: u64 },
    /// Inject a dual-signed twin of the next broadcast (setup: a second
    /// attestation certificate; running: a forged-counter vertex).
    Equivocate,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 {
            return Err(ConfigError::Invalid("n must be at least 3".into()));
        }
        if self.clients.rate_per_s <= 0.0 {
            return Err(ConfigError::Invalid("client rate must be positive".into()));
        }
        if self.clients.count == 0 {
            return Err(ConfigError::Invalid("client count must be positive".into()));
        }
        if self.clients.count > 10_000 {
            return Err(ConfigError::Invalid(
                "client count capped at 10000 at desk scale".into(),
            ));
        }
        match self.clients.model.as_str() {
            "nxb" | "bft" => {}
            other => {
                return Err(ConfigError::Invalid(format!("unknown client model {other}")));
            }
        }
        match self.respond.as_str() {
            "all" | "origin" => {}
            other => {
                return Err(ConfigError::Invalid(format!("unknown respond policy {other}")));
            }
        }
        for f in &self.faults {
            if (f.replica as usize) >= self.n {
                return Err(ConfigError::Invalid(format!(
                    "fault targets replica {} outside 0..{}",
                    f.replica, self.n
                )));
            }
        }
        Ok(())
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_ms * 1_000
    }

    pub fn warmup_us(&self) -> u64 {
        self.warmup_ms * 1_000
    }

    pub fn half_rtt_us(&self) -> u64 {
        ((self.rtt_ms * 1_000.0) / 2.0).round() as u64
    }

    pub fn sync_bound_us(&self) -> u64 {
        (self.sync_bound_ms * 1_000.0).round() as u64
    }
}
