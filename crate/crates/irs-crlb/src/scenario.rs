//! Experiment configuration: file loading with validation, the built-in
//! paper-geometry presets, and deterministic scene construction.
//!
//! A scene build is fully determined by `(config, seed)`: reflectivities
//! and Dopplers are drawn path-interleaved from a counter-seeded ChaCha
//! stream, so truncating the IRS list (for the no-IRS / 1-IRS / 3-IRS
//! comparisons) leaves the shared leading paths bit-identical.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{
    angles_from_positions, coupling_matrix, lsr, nlos_channel_quadratic, path_loss,
    scale_reflectivities, ChannelSet, CouplingMatrix, IrsPanel, Position2D,
    DEFAULT_SPACING_RATIO,
};
use crate::optimizer::DesignScenario;
use crate::signal::{RadarParams, TargetParams};

/// One IRS placement in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrsSpec {
    pub position: Position2D,
    pub element_count: usize,
    #[serde(default = "default_spacing")]
    pub spacing_ratio: f64,
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING_RATIO
}

/// Per-path Doppler source: a uniform draw or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DopplerSpec {
    Uniform { low: f64, high: f64 },
    Explicit(Vec<f64>),
}

impl Default for DopplerSpec {
    fn default() -> Self {
        // reference draw interval, mean 0.2
        DopplerSpec::Uniform { low: 0.1, high: 0.3 }
    }
}

/// Slow-time code: the all-ones default or explicit `[re, im]` samples.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformSpec {
    #[default]
    Ones,
    Explicit(Vec<[f64; 2]>),
}

/// Path-loss model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossSpec {
    pub l0_db: f64,
    pub d0: f64,
    pub beta0: f64,
}

impl Default for PathLossSpec {
    fn default() -> Self {
        Self {
            l0_db: -30.0,
            d0: 1.0,
            beta0: 2.5,
        }
    }
}

/// The single source of truth for an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_radar_pos")]
    pub radar_pos: Position2D,
    #[serde(default = "default_target_pos")]
    pub target_pos: Position2D,
    #[serde(default)]
    pub irs: Vec<IrsSpec>,
    #[serde(default = "default_pulse_count")]
    pub pulse_count: usize,
    #[serde(default = "default_pri")]
    pub pri: f64,
    #[serde(default)]
    pub waveform: WaveformSpec,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub doppler: DopplerSpec,
    #[serde(default)]
    pub path_loss: PathLossSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_radar_pos() -> Position2D {
    Position2D::new(0.0, 0.0)
}
fn default_target_pos() -> Position2D {
    Position2D::new(0.0, 5000.0)
}
fn default_pulse_count() -> usize {
    16
}
fn default_pri() -> f64 {
    1.0
}
fn default_sigma2() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    42
}

impl ScenarioConfig {
    /// Built-in presets for the reference experiment geometry: radar at the
    /// origin, target 5 km up-range, IRS platforms at (2500, 2500),
    /// (-2500, 2500) and (0, 2500), with 8-element half-wavelength panels
    /// and 16 pulses.
    pub fn preset(name: &str) -> Result<Self> {
        let irs_positions: &[(f64, f64)] = match name {
            "paper-1irs" => &[(2500.0, 2500.0)],
            "paper-3irs" => &[(2500.0, 2500.0), (-2500.0, 2500.0), (0.0, 2500.0)],
            "paper-no-irs" => &[],
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}`; expected paper-1irs, paper-3irs or paper-no-irs"),
                ))
            }
        };
        let cfg = Self {
            radar_pos: default_radar_pos(),
            target_pos: default_target_pos(),
            irs: irs_positions
                .iter()
                .map(|&(x, y)| IrsSpec {
                    position: Position2D::new(x, y),
                    element_count: 8,
                    spacing_ratio: DEFAULT_SPACING_RATIO,
                })
                .collect(),
            pulse_count: 16,
            pri: 1.0,
            waveform: WaveformSpec::Ones,
            sigma2: default_sigma2(),
            gamma: default_gamma(),
            doppler: DopplerSpec::default(),
            path_loss: PathLossSpec::default(),
            seed: default_seed(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of IRS platforms `K`.
    pub fn nlos_count(&self) -> usize {
        self.irs.len()
    }

    /// A copy with only the first `k` IRS platforms, for scenario-variant
    /// comparisons against the same drawn target.
    pub fn truncated_to(&self, k: usize) -> Result<Self> {
        if k > self.irs.len() {
            return Err(Error::config(
                "irs",
                format!("cannot keep {k} IRS platforms out of {}", self.irs.len()),
            ));
        }
        let mut cfg = self.clone();
        cfg.irs.truncate(k);
        if let DopplerSpec::Explicit(nus) = &mut cfg.doppler {
            nus.truncate(k + 1);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config("gamma", "must be positive"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::config("sigma2", "must be positive"));
        }
        if self.pulse_count < 2 {
            return Err(Error::config("pulse_count", "need at least two pulses"));
        }
        if !(self.pri.is_finite() && self.pri > 0.0) {
            return Err(Error::config("pri", "must be positive"));
        }
        for (i, irs) in self.irs.iter().enumerate() {
            if irs.element_count == 0 {
                return Err(Error::config(
                    format!("irs[{i}].element_count"),
                    "must be at least 1",
                ));
            }
            if !(irs.spacing_ratio.is_finite() && irs.spacing_ratio > 0.0) {
                return Err(Error::config(
                    format!("irs[{i}].spacing_ratio"),
                    "must be positive",
                ));
            }
        }
        match &self.doppler {
            DopplerSpec::Uniform { low, high } => {
                if !(low < high && *low >= -0.5 && *high <= 0.5) {
                    return Err(Error::config(
                        "doppler.uniform",
                        "need -0.5 <= low < high <= 0.5",
                    ));
                }
            }
            DopplerSpec::Explicit(nus) => {
                if nus.len() != self.irs.len() + 1 {
                    return Err(Error::config(
                        "doppler.explicit",
                        format!(
                            "need {} entries (one per path), got {}",
                            self.irs.len() + 1,
                            nus.len()
                        ),
                    ));
                }
                for (i, nu) in nus.iter().enumerate() {
                    if !(-0.5..0.5).contains(nu) {
                        return Err(Error::config(
                            format!("doppler.explicit[{i}]"),
                            "normalized Doppler must lie in [-0.5, 0.5)",
                        ));
                    }
                }
            }
        }
        if let WaveformSpec::Explicit(samples) = &self.waveform {
            if samples.len() != self.pulse_count {
                return Err(Error::config(
                    "waveform.explicit",
                    format!(
                        "length {} does not match pulse_count {}",
                        samples.len(),
                        self.pulse_count
                    ),
                ));
            }
        }
        if !(self.path_loss.d0.is_finite() && self.path_loss.d0 > 0.0) {
            return Err(Error::config("path_loss.d0", "must be positive"));
        }
        Ok(())
    }

    pub fn radar_params(&self) -> Result<RadarParams> {
        match &self.waveform {
            WaveformSpec::Ones => RadarParams::constant_waveform(self.pulse_count, self.pri),
            WaveformSpec::Explicit(samples) => {
                let x = nalgebra::DVector::from_iterator(
                    samples.len(),
                    samples.iter().map(|&[re, im]| Complex64::new(re, im)),
                );
                RadarParams::new(self.pulse_count, self.pri, x)
            }
        }
    }

    /// SHA-256 digest of the canonical JSON form, for run provenance.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Loads and validates a JSON scenario file. Unknown keys are rejected.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let cfg: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A fully drawn scene: everything the Fisher pipeline consumes.
#[derive(Debug, Clone)]
pub struct BuiltScene {
    pub radar: RadarParams,
    pub channels: ChannelSet,
    pub target: TargetParams,
    pub couplings: Vec<CouplingMatrix>,
    /// Per-IRS `(theta_ir, theta_ti)` bearings.
    pub angles: Vec<(f64, f64)>,
    /// The phases the channel coefficients (and the reflectivity scaling)
    /// are anchored to.
    pub anchor_phases: Vec<Vec<f64>>,
}

impl BuiltScene {
    /// The design-time view of this scene.
    pub fn design_scenario(&self, sigma2: f64) -> Result<DesignScenario> {
        DesignScenario::new(
            self.radar.clone(),
            self.channels.h_los,
            self.target.alpha.clone(),
            self.target.nu.clone(),
            sigma2,
            self.couplings.clone(),
        )
    }
}

/// Draws a scene from the config: geometric NLoS channels at the anchor
/// phases (identity unless given), LoS gain from the two-way radar-target
/// path loss, reflectivities drawn CN(0,1) and rescaled to the requested
/// link-strength ratio, and Dopplers drawn per the config.
pub fn build_scene(cfg: &ScenarioConfig, phases: Option<&[Vec<f64>]>) -> Result<BuiltScene> {
    cfg.validate()?;
    let k = cfg.nlos_count();
    if cfg.radar_pos == cfg.target_pos {
        return Err(Error::invalid("radar and target positions coincide"));
    }

    let anchor_phases: Vec<Vec<f64>> = match phases {
        Some(p) => {
            if p.len() != k {
                return Err(Error::invalid(format!(
                    "expected {k} phase vectors, got {}",
                    p.len()
                )));
            }
            for (spec, ph) in cfg.irs.iter().zip(p) {
                if ph.len() != spec.element_count {
                    return Err(Error::invalid(
                        "phase vector length does not match IRS element count",
                    ));
                }
            }
            p.to_vec()
        }
        None => cfg
            .irs
            .iter()
            .map(|spec| vec![0.0; spec.element_count])
            .collect(),
    };

    let mut couplings = Vec::with_capacity(k);
    let mut angles = Vec::with_capacity(k);
    let mut h_nlos = Vec::with_capacity(k);
    for (spec, ph) in cfg.irs.iter().zip(&anchor_phases) {
        let (theta_ir, theta_ti) =
            angles_from_positions(cfg.radar_pos, spec.position, cfg.target_pos)?;
        let coupling = coupling_matrix(theta_ir, theta_ti, spec.element_count, spec.spacing_ratio)?;
        let panel = IrsPanel::new(ph.clone(), spec.spacing_ratio)?;
        let h = nlos_channel_quadratic(&panel.reflection_vector(), &coupling)?;
        couplings.push(coupling);
        angles.push((theta_ir, theta_ti));
        h_nlos.push(h);
    }

    // two-way radar-target-radar distance
    let round_trip = 2.0 * cfg.radar_pos.distance_to(&cfg.target_pos);
    let h_los = Complex64::new(
        path_loss(
            round_trip,
            cfg.path_loss.l0_db,
            cfg.path_loss.d0,
            cfg.path_loss.beta0,
        )?,
        0.0,
    );
    let channels = ChannelSet::new(h_los, h_nlos)?;

    // Path-interleaved draws: (Re alpha_k, Im alpha_k, nu_k) per path, so
    // configs truncated to fewer IRS share the leading paths exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut raw_alpha = Vec::with_capacity(k + 1);
    let mut nu = Vec::with_capacity(k + 1);
    for path in 0..=k {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        raw_alpha.push(Complex64::new(re * half, im * half));
        match &cfg.doppler {
            DopplerSpec::Uniform { low, high } => nu.push(rng.gen_range(*low..*high)),
            DopplerSpec::Explicit(nus) => nu.push(nus[path]),
        }
    }

    let alpha = if k == 0 {
        // no NLoS group to normalize; pin the LoS product alone
        let los_mag = raw_alpha[0].norm() * channels.h_los.norm();
        if los_mag == 0.0 {
            return Err(Error::DegenerateChannel(
                "zero LoS product; cannot reach the requested gamma".into(),
            ));
        }
        vec![raw_alpha[0] * (cfg.gamma.sqrt() / los_mag)]
    } else {
        scale_reflectivities(&raw_alpha, &channels, cfg.gamma)?
    };

    if k > 0 {
        debug_assert!((lsr(&alpha, &channels)? - cfg.gamma).abs() <= 1e-9 * cfg.gamma);
    }

    Ok(BuiltScene {
        radar: cfg.radar_params()?,
        channels,
        target: TargetParams::new(alpha, nu)?,
        couplings,
        angles,
        anchor_phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn presets_match_the_experiment_geometry() {
        let three = ScenarioConfig::preset("paper-3irs").unwrap();
        assert_eq!(three.radar_pos, Position2D::new(0.0, 0.0));
        assert_eq!(three.target_pos, Position2D::new(0.0, 5000.0));
        let got: Vec<_> = three.irs.iter().map(|s| (s.position.x, s.position.y)).collect();
        assert_eq!(
            got,
            vec![(2500.0, 2500.0), (-2500.0, 2500.0), (0.0, 2500.0)]
        );

        let one = ScenarioConfig::preset("paper-1irs").unwrap();
        assert_eq!(one.irs.len(), 1);
        assert_eq!(one.irs[0].position, Position2D::new(2500.0, 2500.0));
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn nonpositive_gamma_is_rejected() {
        let mut cfg = ScenarioConfig::preset("paper-1irs").unwrap();
        cfg.gamma = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        cfg.gamma = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn built_scene_hits_the_requested_lsr() {
        let mut cfg = ScenarioConfig::preset("paper-3irs").unwrap();
        cfg.gamma = 0.37;
        let scene = build_scene(&cfg, None).unwrap();
        assert_relative_eq!(
            lsr(&scene.target.alpha, &scene.channels).unwrap(),
            0.37,
            max_relative = 1e-12
        );
    }

    #[test]
    fn same_seed_reproduces_the_scene_exactly() {
        let cfg = ScenarioConfig::preset("paper-3irs").unwrap();
        let a = build_scene(&cfg, None).unwrap();
        let b = build_scene(&cfg, None).unwrap();
        assert_eq!(a.target.alpha, b.target.alpha);
        assert_eq!(a.target.nu, b.target.nu);
        assert_eq!(a.channels, b.channels);
    }

    #[test]
    fn truncated_variants_share_leading_paths() {
        let cfg3 = ScenarioConfig::preset("paper-3irs").unwrap();
        let cfg1 = cfg3.truncated_to(1).unwrap();
        let cfg0 = cfg3.truncated_to(0).unwrap();
        let s3 = build_scene(&cfg3, None).unwrap();
        let s1 = build_scene(&cfg1, None).unwrap();
        let s0 = build_scene(&cfg0, None).unwrap();
        // Dopplers of shared paths are identical; reflectivities agree up
        // to the group normalization, which preserves phase.
        assert_eq!(s3.target.nu[0], s1.target.nu[0]);
        assert_eq!(s3.target.nu[1], s1.target.nu[1]);
        assert_eq!(s3.target.nu[0], s0.target.nu[0]);
        assert_abs_diff_eq!(
            s3.target.alpha[1].arg(),
            s1.target.alpha[1].arg(),
            epsilon = 1e-12
        );
        // LoS product is pinned to gamma in every variant
        assert_relative_eq!(
            (s3.target.alpha[0] * s3.channels.h_los).norm_sqr(),
            (s0.target.alpha[0] * s0.channels.h_los).norm_sqr(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn doppler_draws_have_the_paper_mean() {
        let mut cfg = ScenarioConfig::preset("paper-1irs").unwrap();
        let mut acc = 0.0;
        let draws = 10_000;
        for seed in 0..draws / 2 {
            cfg.seed = seed;
            let scene = build_scene(&cfg, None).unwrap();
            acc += scene.target.nu[0] + scene.target.nu[1];
        }
        let mean = acc / draws as f64;
        assert!((mean - 0.2).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn explicit_doppler_list_is_used_verbatim() {
        let mut cfg = ScenarioConfig::preset("paper-1irs").unwrap();
        cfg.doppler = DopplerSpec::Explicit(vec![0.11, 0.29]);
        let scene = build_scene(&cfg, None).unwrap();
        assert_eq!(scene.target.nu, vec![0.11, 0.29]);
    }

    #[test]
    fn los_gain_uses_the_two_way_distance() {
        let cfg = ScenarioConfig::preset("paper-1irs").unwrap();
        let scene = build_scene(&cfg, None).unwrap();
        let want = path_loss(10_000.0, -30.0, 1.0, 2.5).unwrap();
        assert_relative_eq!(scene.channels.h_los.re, want, max_relative = 1e-12);
        assert_relative_eq!(scene.channels.h_los.re, 1e-13, max_relative = 1e-10);
    }

    #[test]
    fn load_scenario_round_trips_and_rejects_unknown_keys() {
        let dir = std::env::temp_dir().join("irs-crlb-test-config");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scene.json");
        let cfg = ScenarioConfig::preset("paper-3irs").unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded.digest(), cfg.digest());

        let bad = path.with_file_name("bad.json");
        std::fs::write(&bad, r#"{"gamma": 0.1, "not_a_field": 3}"#).unwrap();
        let err = load_scenario(&bad).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn config_errors_carry_the_field_path() {
        let mut cfg = ScenarioConfig::preset("paper-1irs").unwrap();
        cfg.doppler = DopplerSpec::Explicit(vec![0.1]);
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "doppler.explicit"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
