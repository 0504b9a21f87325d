//! TOML experiment configuration: schema, defaults, validation, hashing.
//!
//! Every run is a pure function of one `ExperimentConfig`: all randomness
//! flows from seeds recorded here, never from the clock. The config hash
//! keys stage caches and the run manifest, so any field change invalidates
//! downstream artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use multiport_core::circuit::{gate_library, GateName};
use multiport_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::sha256_hex;

/// Named experiment pipelines. CLI subcommands carry the same names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CharacterizeTm,
    DesignGates,
    Routing,
    RoutingSingleChannel,
    Swap,
    SwapMultiplexed,
    HomScan,
    Stability,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::CharacterizeTm,
        ExperimentKind::DesignGates,
        ExperimentKind::Routing,
        ExperimentKind::RoutingSingleChannel,
        ExperimentKind::Swap,
        ExperimentKind::SwapMultiplexed,
        ExperimentKind::HomScan,
        ExperimentKind::Stability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::CharacterizeTm => "characterize-tm",
            ExperimentKind::DesignGates => "design-gates",
            ExperimentKind::Routing => "routing",
            ExperimentKind::RoutingSingleChannel => "routing-single-channel",
            ExperimentKind::Swap => "swap",
            ExperimentKind::SwapMultiplexed => "swap-multiplexed",
            ExperimentKind::HomScan => "hom-scan",
            ExperimentKind::Stability => "stability",
        }
    }

    /// Experiments that act on the sampled medium even when gates are ideal.
    fn needs_medium_always(&self) -> bool {
        matches!(
            self,
            ExperimentKind::CharacterizeTm | ExperimentKind::DesignGates | ExperimentKind::Stability
        )
    }

    fn default_gates(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::CharacterizeTm => &[],
            ExperimentKind::DesignGates => &["t_i", "t_x", "t_m", "t_s"],
            ExperimentKind::Routing => &["t_i", "t_x", "t_m"],
            ExperimentKind::RoutingSingleChannel => &["identity4", "x4"],
            ExperimentKind::Swap => &["swap4"],
            ExperimentKind::SwapMultiplexed => &["t_s"],
            ExperimentKind::HomScan => &["swap4"],
            ExperimentKind::Stability => &["t_i"],
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::Parameter(format!(
                    "unknown experiment '{s}' (expected one of: {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    /// Fibre modes per polarization (N).
    pub n_fibre: usize,
    /// Pixels per phase plane (M).
    pub n_pixels: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    /// Qudit dimension per distribution channel (2 or 3).
    pub dim: usize,
    /// Per-channel Schmidt amplitudes; normalized on use. Default uniform.
    pub schmidt: Option<Vec<f64>>,
    /// Pairwise indistinguishability of the two signal photons.
    pub gamma: f64,
    /// Inter-polarization phase in radians; overrides the medium's sampled
    /// value when set, and is the phase used outright in ideal-gate runs.
    pub phi: Option<f64>,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            dim: 2,
            schmidt: None,
            gamma: 1.0,
            phi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeSection {
    /// Probe frames per input port. Default 8N (4x oversampling of the 2N
    /// complex unknowns per fibre column).
    pub probes: Option<usize>,
    /// Additive Gaussian camera noise, as a fraction of the mean intensity.
    pub sigma_y: f64,
    /// Seed for probe phases and camera noise.
    pub seed: u64,
    pub iters: usize,
    pub step: f64,
    /// Seed of the random fit starting point.
    pub init_seed: u64,
}

impl Default for CharacterizeSection {
    fn default() -> Self {
        CharacterizeSection {
            probes: None,
            sigma_y: 0.0,
            seed: 0x7C_A11B,
            iters: 3000,
            step: 0.5,
            init_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// Counting statistics. Omitting the whole section runs with exact
/// probabilities: no sampling, no bootstrap, no error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    /// Pair events per second.
    pub flux: f64,
    /// Integration time per measurement setting, seconds.
    pub duration: f64,
    pub seed: u64,
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
}

fn default_bootstrap_reps() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomSection {
    /// Width of the Gaussian mutual coherence, in delay units.
    pub sigma_tau: f64,
    /// Delays scan [-tau_max, +tau_max].
    pub tau_max: f64,
    pub points: usize,
}

impl Default for HomSection {
    fn default() -> Self {
        HomSection {
            sigma_tau: 1.0,
            tau_max: 3.0,
            points: 61,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Number of drift steps, including the pristine step 0.
    pub steps: usize,
    /// Drift strength added per step; step k evaluates epsilon = k * this.
    pub epsilon_step: f64,
    /// Seed of the frozen drift direction shared by all steps.
    pub seed: u64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            steps: 14,
            epsilon_step: 0.01,
            seed: 0xD41F7,
        }
    }
}

/// Pinned input artifacts. A pinned file replaces the corresponding pipeline
/// stage; a missing pinned file is an error telling you which stage to run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactsSection {
    pub medium: Option<PathBuf>,
    pub tm_fit: Option<PathBuf>,
    /// Gate name to phase-plane artifact path.
    pub planes: BTreeMap<String, PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Use exact gate matrices instead of designing phase planes.
    #[serde(default)]
    pub ideal_gates: bool,
    /// Design against the true medium instead of the intensity-probe fit.
    #[serde(default)]
    pub oracle_medium: bool,
    /// Gate names; empty picks the experiment's defaults.
    #[serde(default)]
    pub gates: Vec<String>,
    #[serde(default)]
    pub medium: Option<MediumSection>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub characterize: CharacterizeSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub stats: Option<StatsSection>,
    #[serde(default)]
    pub hom: HomSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub artifacts: ArtifactsSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// 0-based byte offset of a 1-based (line, column) position.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let clamped = offset.min(text.len());
    let mut line = 1;
    let mut col = 1;
    for b in text.as_bytes()[..clamped].iter() {
        if *b == b'\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            let (line, column) = line_col(text, offset);
            Error::Parse {
                line,
                column,
                offset,
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("config '{}': {e}", path.display()),
            ))
        })?;
        Self::from_toml_str(&text)
    }

    /// CLI flags layered over the file. A seed override replaces the medium
    /// seed and re-derives the other stage seeds as fixed xors of it, so one
    /// number still controls the entire run.
    pub fn apply_overrides(
        &mut self,
        seed_override: Option<u64>,
        out: Option<PathBuf>,
        oracle_medium: bool,
    ) {
        if let Some(seed) = seed_override {
            if let Some(m) = self.medium.as_mut() {
                m.seed = seed;
            }
            self.characterize.seed = seed ^ 0x01;
            self.stability.seed = seed ^ 0x03;
            if let Some(s) = self.stats.as_mut() {
                s.seed = seed ^ 0x02;
            }
        }
        if let Some(dir) = out {
            self.output_dir = dir;
        }
        if oracle_medium {
            self.oracle_medium = true;
        }
    }

    pub fn expect_kind(&self, kind: ExperimentKind) -> Result<()> {
        if self.experiment != kind {
            return Err(Error::Parameter(format!(
                "config declares experiment '{}' but the '{}' subcommand was invoked",
                self.experiment, kind
            )));
        }
        Ok(())
    }

    /// Fills defaulted gate lists and rejects configurations no experiment
    /// can run. Call after overrides, before hashing.
    pub fn validate(&mut self) -> Result<()> {
        if self.gates.is_empty() {
            self.gates = self
                .experiment
                .default_gates()
                .iter()
                .map(|s| s.to_string())
                .collect();
        }
        let gates = self.gate_names()?;

        let needs_medium = self.experiment.needs_medium_always() || !self.ideal_gates;
        if needs_medium && self.medium.is_none() && self.artifacts.medium.is_none() {
            return Err(Error::Parameter(format!(
                "experiment '{}' needs a [medium] section (n_fibre, n_pixels, seed) or a pinned \
                 [artifacts] medium",
                self.experiment
            )));
        }

        let src = &self.source;
        if !(0.0..=1.0).contains(&src.gamma) || !src.gamma.is_finite() {
            return Err(Error::Parameter(format!("gamma = {} outside [0,1]", src.gamma)));
        }
        if let Some(phi) = src.phi {
            if !phi.is_finite() {
                return Err(Error::Parameter("phi must be finite".into()));
            }
        }
        if let Some(l) = &src.schmidt {
            if l.len() != src.dim {
                return Err(Error::Parameter(format!(
                    "schmidt lists {} amplitudes for a dim-{} channel",
                    l.len(),
                    src.dim
                )));
            }
            if l.iter().any(|&x| !(x >= 0.0) || !x.is_finite())
                || l.iter().map(|x| x * x).sum::<f64>() <= 0.0
            {
                return Err(Error::Parameter(
                    "schmidt amplitudes must be non-negative with positive norm".into(),
                ));
            }
        }

        let witness_like = matches!(
            self.experiment,
            ExperimentKind::Routing | ExperimentKind::RoutingSingleChannel | ExperimentKind::Stability
        );
        let swap_like = matches!(
            self.experiment,
            ExperimentKind::Swap | ExperimentKind::SwapMultiplexed | ExperimentKind::HomScan
        );
        if witness_like && !matches!(src.dim, 2 | 3) {
            return Err(Error::Parameter(format!(
                "channel dimension {} has no MUB construction (supported: 2, 3)",
                src.dim
            )));
        }
        if swap_like && src.dim != 2 {
            return Err(Error::Parameter(
                "swapping and interference experiments run on qubit channels (dim = 2)".into(),
            ));
        }
        if witness_like || swap_like {
            for name in &gates {
                let spec = gate_library(*name);
                let width = spec.channels.in1[0].len();
                if width != src.dim {
                    return Err(Error::Parameter(format!(
                        "gate '{name}' carries {width}-mode channels but the source is dim {}",
                        src.dim
                    )));
                }
            }
        }

        if let Some(s) = &self.stats {
            if !(s.flux > 0.0) || !s.flux.is_finite() || !(s.duration > 0.0) || !s.duration.is_finite()
            {
                return Err(Error::Parameter(
                    "stats flux and duration must be positive and finite".into(),
                ));
            }
            if s.bootstrap_reps < 2 {
                return Err(Error::Parameter("bootstrap needs at least 2 replicas".into()));
            }
        }

        let c = &self.characterize;
        if !(c.step > 0.0) || !c.step.is_finite() || c.iters == 0 {
            return Err(Error::Parameter("characterize step/iters invalid".into()));
        }
        if !(c.sigma_y >= 0.0) || !c.sigma_y.is_finite() {
            return Err(Error::Parameter(format!("sigma_y = {} invalid", c.sigma_y)));
        }

        let d = &self.design;
        if d.max_iters == 0 || !(d.tol > 0.0) {
            return Err(Error::Parameter("design max_iters/tol invalid".into()));
        }

        let h = &self.hom;
        if !(h.sigma_tau > 0.0) || !(h.tau_max > 0.0) || h.points < 2 {
            return Err(Error::Parameter("hom sigma_tau/tau_max/points invalid".into()));
        }

        let st = &self.stability;
        if st.steps == 0 || !(st.epsilon_step >= 0.0) || !st.epsilon_step.is_finite() {
            return Err(Error::Parameter("stability steps/epsilon_step invalid".into()));
        }
        Ok(())
    }

    pub fn gate_names(&self) -> Result<Vec<GateName>> {
        self.gates.iter().map(|s| s.parse()).collect()
    }

    /// Normalized per-channel Schmidt amplitudes.
    pub fn channel_schmidt(&self) -> Vec<f64> {
        let raw = match &self.source.schmidt {
            Some(l) => l.clone(),
            None => vec![1.0; self.source.dim],
        };
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    }

    /// Full-run content hash over every field, CLI overrides included.
    /// Content hash over every field that can change a result. The output
    /// directory is storage location, not physics, and is pinned before
    /// hashing so the same experiment hashes identically wherever it lands.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::from("runs");
        let canon = serde_json::to_string(&canonical).expect("config serializes");
        sha256_hex(canon.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_routing() -> &'static str {
        "experiment = \"routing\"\nideal_gates = true\n"
    }

    #[test]
    fn minimal_ideal_routing_parses_and_defaults() {
        let mut cfg = ExperimentConfig::from_toml_str(minimal_routing()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.gates, vec!["t_i", "t_x", "t_m"]);
        assert_eq!(cfg.source.dim, 2);
        assert!(cfg.stats.is_none());
        assert_eq!(cfg.output_dir, PathBuf::from("runs"));
    }

    #[test]
    fn parse_error_reports_position() {
        let text = "experiment = \"routing\"\nideal_gates = maybe\n";
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Parse { line, offset, .. }) => {
                assert_eq!(line, 2);
                assert!(offset > 0 && offset < text.len());
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_gates_are_rejected() {
        let text = "experiment = \"routing\"\nideal_gates = true\nbanana = 1\n";
        assert!(matches!(
            ExperimentConfig::from_toml_str(text),
            Err(Error::Parse { .. })
        ));

        let text = "experiment = \"routing\"\nideal_gates = true\ngates = [\"t_q\"]\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::UnknownGate(_))));
    }

    #[test]
    fn designed_runs_need_a_medium() {
        let mut cfg = ExperimentConfig::from_toml_str("experiment = \"routing\"\n").unwrap();
        let err = cfg.validate().unwrap_err();
        match err {
            Error::Parameter(msg) => assert!(msg.contains("[medium]"), "{msg}"),
            other => panic!("expected parameter error, got {other:?}"),
        }
    }

    #[test]
    fn channel_width_must_match_source_dim() {
        let text = "experiment = \"routing\"\nideal_gates = true\n[source]\ndim = 3\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Parameter(m) if m.contains("2-mode channels")));

        let text = "experiment = \"routing-single-channel\"\nideal_gates = true\n\
                    gates = [\"identity6\", \"x6\"]\n[source]\ndim = 3\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_tracks_every_field_and_overrides() {
        let mut a = ExperimentConfig::from_toml_str(minimal_routing()).unwrap();
        a.validate().unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());

        b.source.gamma = 0.5;
        assert_ne!(a.config_hash(), b.config_hash());

        // Moving the output root relocates files without changing what they
        // contain, so the hash is deliberately blind to it.
        let mut c = a.clone();
        c.apply_overrides(None, Some(PathBuf::from("elsewhere")), false);
        assert_eq!(a.config_hash(), c.config_hash());

        let mut d = a.clone();
        d.apply_overrides(None, None, true);
        assert!(d.oracle_medium);
        assert_ne!(a.config_hash(), d.config_hash());
    }

    #[test]
    fn seed_override_reaches_every_stage_seed() {
        let text = "experiment = \"routing\"\n[medium]\nn_fibre = 4\nn_pixels = 16\nseed = 9\n\
                    [stats]\nflux = 100.0\nduration = 1.0\nseed = 9\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.apply_overrides(Some(1234), None, false);
        cfg.validate().unwrap();
        assert_eq!(cfg.medium.as_ref().unwrap().seed, 1234);
        assert_eq!(cfg.characterize.seed, 1234 ^ 0x01);
        assert_eq!(cfg.stats.as_ref().unwrap().seed, 1234 ^ 0x02);
        assert_eq!(cfg.stability.seed, 1234 ^ 0x03);
    }

    #[test]
    fn kind_round_trips_through_names() {
        for kind in ExperimentKind::ALL {
            assert_eq!(kind.as_str().parse::<ExperimentKind>().unwrap(), kind);
        }
        assert!(matches!("teleport".parse::<ExperimentKind>(), Err(Error::Parameter(_))));
    }

    #[test]
    fn schmidt_normalizes_on_use() {
        let text = "experiment = \"routing\"\nideal_gates = true\n[source]\nschmidt = [3.0, 4.0]\n";
        let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        let l = cfg.channel_schmidt();
        assert!((l[0] - 0.6).abs() < 1e-15);
        assert!((l[1] - 0.8).abs() < 1e-15);
    }
}
