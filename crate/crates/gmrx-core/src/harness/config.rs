//! Experiment configuration: a TOML file with one section per concern,
//! every field defaulted so a config can be as short as its scenario line.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Uncoded BER of every receiver over the SNR/power grid.
    Uncoded,
    /// LDPC-coded BER/BLER, including the detector/decoder schedules.
    Coded,
    /// Probability of exactly localizing the second packet.
    DetectProb,
    /// Channel-estimate mean squared error over the overlap.
    Mse,
    /// Interferer power deficit at which the mixture detector stops paying.
    Threshold,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Uncoded => "uncoded",
            Scenario::Coded => "coded",
            Scenario::DetectProb => "detect-prob",
            Scenario::Mse => "mse",
            Scenario::Threshold => "threshold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// The true start of the second packet is handed to the receivers.
    Genie,
    /// The correlation detector's output is used, faults included.
    Detected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeaderMode {
    /// True header bits are handed to the receivers.
    Genie,
    /// The desired user's header is decoded from the pre-collision prefix.
    Decoded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: Scenario,
    pub seed: u64,
    /// Trials per grid point before interval-driven extension.
    pub trials: u64,
    /// Hard cap on trials per grid point.
    pub max_trials: u64,
    /// Receivers to run; empty means every receiver the scenario knows.
    pub receivers: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            scenario: Scenario::Uncoded,
            seed: 1,
            trials: 200,
            max_trials: 50_000,
            receivers: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub alpha: f64,
    pub sigma_h2: f64,
    pub n_r: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { alpha: 0.99, sigma_h2: 1.0, n_r: 1 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub preamble_len: usize,
    pub header_len: usize,
    pub payload_len: usize,
    pub pilot_period: usize,
    pub preamble_seed: u64,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            preamble_len: 56,
            header_len: 16,
            payload_len: 400,
            pilot_period: 4,
            preamble_seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Desired-user SNR points in dB.
    pub snr_db: Vec<f64>,
    /// Interferer power relative to the desired user in dB.
    pub power_ratio_db: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0], power_ratio_db: vec![0.0] }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub k_max: usize,
    pub tau: f64,
    pub use_interferer_pilots: bool,
    pub offset_mode: OffsetMode,
    pub header_mode: HeaderMode,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            k_max: 8,
            tau: 0.5,
            use_interferer_pilots: true,
            offset_mode: OffsetMode::Genie,
            header_mode: HeaderMode::Genie,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmseSection {
    /// Known symbols per side of the Wiener window.
    pub window: usize,
}

impl Default for MmseSection {
    fn default() -> Self {
        MmseSection { window: 2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodedSection {
    pub ldpc_seed: u64,
    /// Code dimensions; payload_len of the frame must equal `n`.
    pub n: usize,
    pub m: usize,
    /// Decoder iterations given to single-pass receivers.
    pub decoder_iters: usize,
}

impl Default for CodedSection {
    fn default() -> Self {
        CodedSection { ldpc_seed: 7, n: 500, m: 250, decoder_iters: 30 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    /// Desired-user SNR at which the threshold is searched.
    pub snr_db: f64,
    /// Required MMSE-to-mixture BER ratio.
    pub ratio: f64,
    pub deficit_min_db: f64,
    pub deficit_max_db: f64,
    pub step_db: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        ThresholdSection {
            snr_db: 20.0,
            ratio: 3.0,
            deficit_min_db: -15.0,
            deficit_max_db: 0.0,
            step_db: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for CSV/SVG artifacts; empty writes nothing.
    pub dir: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub channel: ChannelSection,
    pub frame: FrameSection,
    pub grid: GridSection,
    pub detector: DetectorSection,
    pub mmse: MmseSection,
    pub coded: CodedSection,
    pub threshold: ThresholdSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Frame layout for the configured scenario. Coded frames carry one
    /// codeword; uncoded frames carry `payload_len` raw bits.
    pub fn packet_spec(&self) -> crate::framing::PacketSpec {
        let payload_len = match self.experiment.scenario {
            Scenario::Coded => self.coded.n,
            _ => self.frame.payload_len,
        };
        crate::framing::PacketSpec {
            preamble_len: self.frame.preamble_len,
            header_len: self.frame.header_len,
            payload_len,
            pilot_period: self.frame.pilot_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = |msg: String| Err(Error::Config(msg));
        if self.experiment.trials == 0 {
            return e("trials must be >= 1".into());
        }
        if self.experiment.max_trials < self.experiment.trials {
            return e(format!(
                "max_trials {} below trials {}",
                self.experiment.max_trials, self.experiment.trials
            ));
        }
        crate::channel::FadingParams {
            alpha: self.channel.alpha,
            sigma_h2: self.channel.sigma_h2,
            n_r: self.channel.n_r,
        }
        .validate()?;
        self.packet_spec().validate()?;
        if self.packet_spec().frame_len() < self.frame.preamble_len + self.frame.header_len + 2 {
            return e("frame too short to carry data".into());
        }
        if self.grid.snr_db.is_empty() || self.grid.power_ratio_db.is_empty() {
            return e("grid sections must not be empty".into());
        }
        if self.grid.snr_db.iter().chain(&self.grid.power_ratio_db).any(|v| !v.is_finite()) {
            return e("grid points must be finite".into());
        }
        if self.detector.k_max == 0 {
            return e("k_max must be >= 1".into());
        }
        if !(self.detector.tau > 0.0 && self.detector.tau < 1.0) {
            return e(format!("tau {} outside (0, 1)", self.detector.tau));
        }
        if self.mmse.window < 1 {
            return e("mmse window must be >= 1".into());
        }
        if self.experiment.scenario == Scenario::Coded {
            if self.coded.n == 0 || self.coded.m == 0 || self.coded.m >= self.coded.n {
                return e(format!("implausible code dimensions {} x {}", self.coded.n, self.coded.m));
            }
            if self.coded.decoder_iters == 0 {
                return e("decoder_iters must be >= 1".into());
            }
        }
        if self.experiment.scenario == Scenario::Threshold {
            let t = &self.threshold;
            if !(t.ratio > 1.0) {
                return e(format!("threshold ratio {} must exceed 1", t.ratio));
            }
            if !(t.step_db > 0.0) || t.deficit_max_db <= t.deficit_min_db {
                return e("threshold sweep range is empty".into());
            }
        }
        for name in &self.experiment.receivers {
            if !self.scenario_receivers().iter().any(|r| r == name) {
                return e(format!(
                    "receiver {name} not available in scenario {}",
                    self.experiment.scenario.name()
                ));
            }
        }
        Ok(())
    }

    /// Every receiver the configured scenario can run.
    pub fn scenario_receivers(&self) -> Vec<&'static str> {
        match self.experiment.scenario {
            Scenario::Uncoded => vec!["bp", "mmse", "conventional", "genie"],
            Scenario::Coded => vec!["bp-separate", "bp-joint", "mmse", "conventional", "genie"],
            Scenario::DetectProb => vec!["detector"],
            Scenario::Mse => vec!["bp", "mmse", "conventional"],
            Scenario::Threshold => vec!["bp", "mmse"],
        }
    }

    /// The receivers actually selected (config subset or scenario default).
    pub fn active_receivers(&self) -> Vec<String> {
        let all = self.scenario_receivers();
        if self.experiment.receivers.is_empty() {
            all.into_iter().map(String::from).collect()
        } else {
            all.into_iter()
                .filter(|r| self.experiment.receivers.iter().any(|s| s == r))
                .map(String::from)
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back.experiment.scenario, Scenario::Uncoded);
        assert_eq!(back.frame.preamble_len, 56);
        assert_eq!(back.detector.k_max, 8);
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "[experiment]\nscenario = \"detect-prob\"\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment.scenario, Scenario::DetectProb);
        assert_eq!(cfg.experiment.seed, 9);
        assert_eq!(cfg.channel.alpha, 0.99);
        assert_eq!(cfg.active_receivers(), vec!["detector".to_string()]);
    }

    #[test]
    fn coded_scenario_sizes_the_frame_from_the_code() {
        let cfg = ExperimentConfig::from_toml(
            "[experiment]\nscenario = \"coded\"\n\n[frame]\npreamble_len = 8\n",
        )
        .unwrap();
        let spec = cfg.packet_spec();
        assert_eq!(spec.payload_len, 500, "payload comes from the code length");
        assert_eq!(spec.payload_region_len(), 667, "500 data symbols plus 167 pilots");
        assert_eq!(spec.frame_len(), 8 + 16 + 667);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("[experiment]\ntrials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[detector]\ntau = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[grid]\nsnr_db = []\n").is_err());
        assert!(ExperimentConfig::from_toml("[unknown]\nx = 1\n").is_err());
        assert!(ExperimentConfig::from_toml(
            "[experiment]\nscenario = \"uncoded\"\nreceivers = [\"bp-joint\"]\n"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml("not toml at all [").is_err());
    }

    #[test]
    fn receiver_subsets_filter_in_scenario_order() {
        let cfg = ExperimentConfig::from_toml(
            "[experiment]\nreceivers = [\"genie\", \"bp\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.active_receivers(), vec!["bp".to_string(), "genie".to_string()]);
    }
}
