use std::f64::consts::PI;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ellipticity::{Alpha, FitConfig, NonlinearitySpec, Perturbation, Weight};
use crate::error::{Error, Result};
use crate::fields::{io, random_band_limited, GridSpec, VectorField};
use crate::linear::Regularization;
use crate::nonlinear::SolveConfig;
use crate::stability::StabilityConfig;
use crate::tensor::SymTensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensorSource {
    Identity { dim: usize, components: usize },
    /// The `2 x 2` strictly convex tensor with parameter `m`, embedded in `dim` dimensions.
    Example2 { m: f64, dim: usize },
    /// Random symmetric tensor shifted until rank-one positive.
    RandomElliptic { dim: usize, components: usize, seed: u64 },
    /// Text file in the tensor format.
    File { path: PathBuf },
    Entries {
        dim: usize,
        components: usize,
        entries: Vec<f64>,
    },
}

impl TensorSource {
    pub fn load(&self) -> Result<SymTensor4> {
        match self {
            TensorSource::Identity { dim, components } => Ok(SymTensor4::identity(*dim, *components)),
            TensorSource::Example2 { m, dim } => {
                if !(*m >= 8.0 && m.is_finite()) {
                    return Err(Error::InvalidInput(format!("example tensor requires m >= 8, got {m}")));
                }
                Ok(SymTensor4::example2_in_dim(*m, *dim))
            }
            TensorSource::RandomElliptic {
                dim,
                components,
                seed,
            } => Ok(SymTensor4::random_elliptic(*dim, *components, *seed)),
            TensorSource::File { path } => SymTensor4::from_text(&fs::read_to_string(path)?),
            TensorSource::Entries {
                dim,
                components,
                entries,
            } => SymTensor4::new(*dim, *components, entries.clone()),
        }
    }

    fn shape(&self) -> Option<(usize, usize)> {
        match self {
            TensorSource::Identity { dim, components }
            | TensorSource::RandomElliptic { dim, components, .. }
            | TensorSource::Entries { dim, components, .. } => Some((*dim, *components)),
            TensorSource::Example2 { dim, .. } => Some((*dim, 2)),
            TensorSource::File { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub dim: usize,
    pub components: usize,
    pub points: usize,
    pub period: f64,
    pub budget_bytes: Option<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: 2,
            components: 2,
            points: 64,
            period: 1.0,
            budget_bytes: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        match self.budget_bytes {
            Some(b) => GridSpec::with_budget(self.dim, self.components, self.points, self.period, b as u128),
            None => GridSpec::new(self.dim, self.components, self.points, self.period),
        }
    }
}

/// Weight and perturbations on top of the anchor tensor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    pub weight: Weight,
    pub perturbations: Vec<Perturbation>,
    /// Adds a sine perturbation with Lipschitz constant `rho nu(A)`.
    pub rho: Option<f64>,
}

impl OperatorConfig {
    pub fn spec(&self, tensor: &SymTensor4) -> Result<NonlinearitySpec> {
        let mut spec = match self.rho {
            Some(rho) => NonlinearitySpec::sine_perturbed(tensor.clone(), rho, self.weight.clone())?,
            None => NonlinearitySpec::linear(tensor.clone()).with_weight(self.weight.clone()),
        };
        spec.perturbations.extend(self.perturbations.iter().cloned());
        Ok(spec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CertificateSource {
    #[default]
    Fitted,
    Supplied { alpha: Alpha, beta: f64, gamma: f64 },
}

/// `amplitude cos(2 pi k.x / L + phase)` in one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub component: usize,
    pub wavevector: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhsSource {
    /// Manufactured from an explicit mode list.
    Modes { modes: Vec<ModeSpec> },
    /// Manufactured from a random band-limited field.
    RandomBand { band: usize, seed: u64, amplitude: f64 },
    Zero,
    /// Right-hand side read from a binary field file; no exact solution.
    File { path: PathBuf },
}

impl RhsSource {
    /// Largest `|k_i|` present in the manufactured solution.
    pub fn band(&self) -> Option<usize> {
        match self {
            RhsSource::Modes { modes } => Some(
                modes
                    .iter()
                    .flat_map(|m| m.wavevector.iter().map(|k| k.unsigned_abs() as usize))
                    .max()
                    .unwrap_or(0),
            ),
            RhsSource::RandomBand { band, .. } => Some(*band),
            _ => None,
        }
    }

    pub fn exact_solution(&self, grid: &GridSpec) -> Result<Option<VectorField>> {
        match self {
            RhsSource::Modes { modes } => {
                for m in modes {
                    if m.component >= grid.components() || m.wavevector.len() != grid.dim() {
                        return Err(Error::DimensionMismatch(format!(
                            "mode {:?} does not fit a grid with n = {}, N = {}",
                            m.wavevector,
                            grid.dim(),
                            grid.components()
                        )));
                    }
                }
                let l = grid.period();
                Ok(Some(VectorField::from_fn(grid, |a, x| {
                    modes
                        .iter()
                        .filter(|m| m.component == a)
                        .map(|m| {
                            let kx: f64 = m.wavevector.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
                            m.amplitude * (2.0 * PI * kx / l + m.phase).cos()
                        })
                        .sum()
                })))
            }
            RhsSource::RandomBand {
                band,
                seed,
                amplitude,
            } => Ok(Some(random_band_limited(grid, *band, *seed)?.scale(*amplitude))),
            RhsSource::Zero => Ok(Some(VectorField::zeros(grid))),
            RhsSource::File { .. } => Ok(None),
        }
    }

    pub fn load_field(&self, grid: &GridSpec) -> Result<VectorField> {
        match self {
            RhsSource::File { path } => {
                let f = io::read_binary(BufReader::new(fs::File::open(path)?))?;
                if f.grid() != grid {
                    return Err(Error::DimensionMismatch(
                        "right-hand side file was written on a different grid".into(),
                    ));
                }
                Ok(f.to_physical())
            }
            _ => Err(Error::InvalidInput("source is manufactured, not a file".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyProfile {
    /// `u_a = prod_i exp(kappa sin(2 pi x_i / L + phi_ai))`, smooth but not band-limited.
    Analytic { kappa: f64 },
    BandLimited { band: usize, seed: u64 },
    Constant { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub points: Vec<usize>,
    pub profile: StudyProfile,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            points: vec![16, 32, 64],
            profile: StudyProfile::Analytic { kappa: 3.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub csv: bool,
    pub json: bool,
    pub binary: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            csv: true,
            json: true,
            binary: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub tensor: TensorSource,
    pub operator: OperatorConfig,
    /// Second operator `G` for stability runs.
    pub perturbed: Option<OperatorConfig>,
    pub certificate: CertificateSource,
    pub rhs: RhsSource,
    pub regularization: Regularization,
    pub solver: SolveConfig,
    pub fit: FitConfig,
    pub stability: StabilityConfig,
    pub study: StudyConfig,
    pub outputs: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            grid: GridConfig::default(),
            tensor: TensorSource::Identity {
                dim: 2,
                components: 2,
            },
            operator: OperatorConfig::default(),
            perturbed: None,
            certificate: CertificateSource::Fitted,
            rhs: RhsSource::RandomBand {
                band: 8,
                seed: 0,
                amplitude: 1.0,
            },
            regularization: Regularization::Exact,
            solver: SolveConfig::default(),
            fit: FitConfig::default(),
            stability: StabilityConfig::default(),
            study: StudyConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Echo with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Propagates one seed to every sampler and random source.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.fit.sampler.seed = seed;
        self.stability.sampler.seed = seed;
        if let RhsSource::RandomBand { seed: s, .. } = &mut self.rhs {
            *s = seed;
        }
        if let StudyProfile::BandLimited { seed: s, .. } = &mut self.study.profile {
            *s = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if let Some((dim, comps)) = self.tensor.shape() {
            if dim != g.dim || comps != g.components {
                return Err(Error::DimensionMismatch(format!(
                    "tensor has n = {dim}, N = {comps}; grid has n = {}, N = {}",
                    g.dim, g.components
                )));
            }
        }
        if let Some(band) = self.rhs.band() {
            if 4 * band > g.points {
                return Err(Error::InvalidInput(format!(
                    "manufactured band {band} exceeds M/4 = {} (anti-aliasing rule)",
                    g.points / 4
                )));
            }
        }
        if !(self.solver.tol_residual > 0.0) || self.solver.max_iters == 0 {
            return Err(Error::InvalidInput("need tol_residual > 0 and max_iters >= 1".into()));
        }
        if let Regularization::Epsilon { eps } = self.regularization {
            if !(eps > 0.0) {
                return Err(Error::InvalidInput(format!("regularization needs eps > 0, got {eps}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_echo_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn rich_echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.operator = OperatorConfig {
            weight: Weight::Cosine {
                mean: 1.0,
                amplitude: 0.25,
            },
            perturbations: vec![Perturbation::NormCombo { b: 0.1, c: 0.05 }],
            rho: Some(0.3),
        };
        cfg.perturbed = Some(OperatorConfig::default());
        cfg.certificate = CertificateSource::Supplied {
            alpha: Alpha::InverseWeight { scale: 1.0 },
            beta: 0.1,
            gamma: 0.2,
        };
        cfg.rhs = RhsSource::Modes {
            modes: vec![ModeSpec {
                component: 1,
                wavevector: vec![2, -1],
                amplitude: 0.5,
                phase: 0.25,
            }],
        };
        cfg.regularization = Regularization::Epsilon { eps: 1e-4 };
        cfg.outputs.dir = Some("out".into());
        cfg.apply_seed(42);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 3\n[grid]\npoints = 32\n[tensor]\nkind = \"example2\"\nm = 8.0\ndim = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.grid.points, 32);
        assert_eq!(cfg.grid.dim, 2);
        assert_eq!(cfg.solver.max_iters, 200);
        assert!(ExperimentConfig::from_toml("[grid]\npoints = \"many\"").is_err());
    }

    #[test]
    fn band_rule_enforced() {
        let mut cfg = ExperimentConfig::default();
        cfg.grid.points = 16;
        cfg.rhs = RhsSource::RandomBand {
            band: 5,
            seed: 0,
            amplitude: 1.0,
        };
        assert!(cfg.validate().is_err());
        cfg.rhs = RhsSource::RandomBand {
            band: 4,
            seed: 0,
            amplitude: 1.0,
        };
        cfg.validate().unwrap();
    }
}
