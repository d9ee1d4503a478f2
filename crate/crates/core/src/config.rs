//! Experiment configuration: a TOML file with one table per stage.

use std::path::{Path, PathBuf};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contracting::ContractionKind;
use crate::error::{Error, Result};
use crate::grid::HolderParams;
use crate::map::{parse_rational, BakerMap, MapSpec};
use crate::norms::NormConfig;
use crate::orbit::InitialMeasure;
use crate::spectral::EigenConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormSection {
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    /// Leaf grid cells N.
    pub leaf_grid: usize,
    /// Uniform leaf samples M.
    pub leaf_samples: usize,
    pub pair_bases: usize,
    pub pair_scales: u32,
    pub kadic_level: u32,
    /// Density grid used for suites, per side.
    pub density_grid: usize,
}

impl Default for NormSection {
    fn default() -> Self {
        let n = NormConfig::default();
        NormSection {
            alpha: 0.5,
            beta: 0.5,
            beta_prime: 0.75,
            leaf_grid: n.leaf_grid,
            leaf_samples: n.leaf_samples,
            pair_bases: n.pair_bases,
            pair_scales: n.pair_scales,
            kadic_level: n.kadic_level,
            density_grid: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LySection {
    pub n_max: usize,
    pub slack: f64,
}

impl Default for LySection {
    fn default() -> Self {
        LySection { n_max: 6, slack: 1.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Ulam s-level p: `κ^p` columns.
    pub level: u32,
    /// Ulam t-depth q.
    pub depth: u32,
    pub tol: f64,
    pub max_iter: usize,
    pub block: usize,
    pub decay_n_max: usize,
    pub decay_floor: f64,
    pub second_modulus_max: f64,
    pub uniformity_tol: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            level: 9,
            depth: 2,
            tol: 1e-8,
            max_iter: 100_000,
            block: 4,
            decay_n_max: 30,
            decay_floor: 1e-12,
            second_modulus_max: 0.95,
            uniformity_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSection {
    /// Birkhoff length for the CLT.
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    /// Coefficient c of the non-invariant start `(1 + c·s)`.
    pub start_c: f64,
    pub ks_max: f64,
    pub variance_rel_tol: f64,
    pub z_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub ldp_lengths: Vec<usize>,
    pub ldp_count: usize,
    pub ldp_min_hits: usize,
    pub ldp_rel_tol: f64,
    /// Ulam model used for Green–Kubo and pressure.
    pub level: u32,
    pub depth: u32,
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection {
            n: 10_000,
            count: 100_000,
            seed: 7,
            start_c: 0.5,
            ks_max: 0.02,
            variance_rel_tol: 0.05,
            z_grid: (-40..=40).map(|k| k as f64 * 0.1).collect(),
            t_grid: vec![-0.3, -0.2, -0.1, 0.1, 0.2, 0.3],
            ldp_lengths: vec![20, 25, 30, 40, 50, 60, 80, 100, 150, 200],
            ldp_count: 1_000_000,
            ldp_min_hits: 100,
            ldp_rel_tol: 0.15,
            level: 12,
            depth: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingularSection {
    pub kappa: usize,
    /// λ values as rational strings.
    pub schedule: Vec<String>,
    pub n_max: usize,
    pub slack: f64,
    pub final_distance_max: f64,
    pub ulam_level: u32,
    pub ulam_depth: u32,
}

impl Default for SingularSection {
    fn default() -> Self {
        SingularSection {
            kappa: 2,
            schedule: ["1/5", "1/10", "1/20", "1/40"].map(String::from).to_vec(),
            n_max: 6,
            slack: 1.05,
            final_distance_max: 0.2,
            ulam_level: 6,
            ulam_depth: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractingSection {
    pub map: ContractionKind,
    pub alpha: f64,
    pub n_max: usize,
    pub grid: usize,
    pub slack: f64,
    pub rate_margin: f64,
}

impl Default for ContractingSection {
    fn default() -> Self {
        ContractingSection { map: ContractionKind::Affine, alpha: 0.5, n_max: 10, grid: 512, slack: 1.05, rate_margin: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    pub norms: NormSection,
    pub ly: LySection,
    pub spectral: SpectralSection,
    pub limits: LimitSection,
    pub singular: SingularSection,
    pub contracting: ContractingSection,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map: MapSpec { kappa: 2, lambda: "1/2".into(), layout: None },
            norms: NormSection::default(),
            ly: LySection::default(),
            spectral: SpectralSection::default(),
            limits: LimitSection::default(),
            singular: SingularSection::default(),
            contracting: ContractingSection::default(),
            output: PathBuf::from("reports"),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.baker_map()?;
        self.holder_params()?;
        let n = &self.norms;
        check(n.leaf_grid >= 4 && n.leaf_samples >= 1 && n.pair_bases >= 1, || "norm grids too small".into())?;
        check(n.density_grid >= 4, || "density_grid must be at least 4".into())?;
        check(self.ly.slack >= 1.0 && self.ly.n_max >= 1, || "ly: need slack ≥ 1 and n_max ≥ 1".into())?;
        let s = &self.spectral;
        check(s.tol > 0.0 && s.max_iter > 0 && s.block >= 1, || "spectral: bad iteration parameters".into())?;
        let l = &self.limits;
        check(l.n >= 1 && l.count >= 2, || "limits: need n ≥ 1 and count ≥ 2".into())?;
        check(l.start_c > -1.0, || format!("limits.start_c = {} makes a negative density", l.start_c))?;
        check(!l.z_grid.is_empty() && l.z_grid.iter().all(|z| z.is_finite()), || "limits.z_grid is empty".into())?;
        check(l.ldp_lengths.iter().all(|&n| n >= 1), || "limits.ldp_lengths must be positive".into())?;
        let sg = &self.singular;
        check(sg.kappa >= 2, || "singular.kappa must be at least 2".into())?;
        self.schedule()?;
        let c = &self.contracting;
        check(c.alpha > 0.0 && c.alpha <= 1.0, || format!("contracting.alpha = {} outside (0, 1]", c.alpha))?;
        check(c.grid >= 8, || "contracting.grid must be at least 8".into())?;
        Ok(())
    }

    pub fn baker_map(&self) -> Result<BakerMap> {
        self.map.build()
    }

    pub fn holder_params(&self) -> Result<HolderParams> {
        HolderParams::new(self.norms.alpha, self.norms.beta, self.norms.beta_prime)
    }

    pub fn norm_config(&self, kappa: usize) -> NormConfig {
        NormConfig {
            leaf_grid: self.norms.leaf_grid,
            leaf_samples: self.norms.leaf_samples,
            kadic_level: self.norms.kadic_level,
            kappa,
            pair_bases: self.norms.pair_bases,
            pair_scales: self.norms.pair_scales,
            alpha: self.norms.alpha,
            beta: self.norms.beta,
            ..NormConfig::default()
        }
    }

    pub fn eigen_config(&self) -> EigenConfig {
        EigenConfig {
            tol: self.spectral.tol,
            max_iter: self.spectral.max_iter,
            block: self.spectral.block,
            seed: self.limits.seed,
            ..EigenConfig::default()
        }
    }

    pub fn schedule(&self) -> Result<Vec<BigRational>> {
        let v: Vec<BigRational> = self.singular.schedule.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?;
        check(!v.is_empty(), || "singular.schedule is empty".into())?;
        Ok(v)
    }

    pub fn start_measure(&self) -> InitialMeasure {
        InitialMeasure::Affine { c: self.limits.start_c }
    }
}
