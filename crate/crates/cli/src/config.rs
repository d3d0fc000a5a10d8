//! Run configuration: one JSON document describing the model, the lattices,
//! the solvers and the `G/γ` axis of a sweep.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as c64;
use qdbh_core::corner::CornerOptions;
use qdbh_core::fock::FockSpace;
use qdbh_core::lattice::{LatticeGeometry, ModelParams, Shape};
use qdbh_core::liouvillian::{SolverMethod, SteadyStateOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Largest Hilbert dimension accepted for the exact solvers.
pub const MAX_EXACT_DIM: usize = 4096;

/// Model parameters in units of the one-photon loss rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub u: f64,
    pub j: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    /// `Δ = -|J|` and `η = γ`; `delta` and `eta` must then be absent.
    #[serde(default = "yes")]
    pub standard_convention: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    pub fn params(&self, g: f64) -> qdbh_core::Result<ModelParams> {
        if self.standard_convention {
            ModelParams::standard_convention(self.u, g, self.j, self.gamma)
        } else {
            ModelParams::new(
                self.delta.unwrap_or(f64::NAN),
                self.u,
                c64::new(g, 0.0),
                self.j,
                self.gamma,
                self.eta.unwrap_or(f64::NAN),
            )
        }
    }

    fn problems(&self, out: &mut Vec<String>) {
        if self.standard_convention {
            if self.delta.is_some() || self.eta.is_some() {
                out.push("model: delta and eta are fixed by standard_convention; remove them or set standard_convention = false".into());
            }
        } else {
            if self.delta.is_none() {
                out.push("model: delta is required when standard_convention = false".into());
            }
            if self.eta.is_none() {
                out.push("model: eta is required when standard_convention = false".into());
            }
        }
        if self.delta.is_some() || self.eta.is_some() || self.standard_convention {
            if let Err(e) = self.params(0.0) {
                out.push(format!("model: {e}"));
            }
        }
    }
}

/// One lattice of the sweep, with optional per-size overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSpec {
    /// `"N"` for a periodic chain, `"LxxLy"` for a periodic rectangle.
    pub lattice: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<SolverMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
}

impl SizeSpec {
    pub fn new(lattice: &str) -> Self {
        Self {
            lattice: lattice.to_string(),
            n_max: None,
            method: None,
            m_list: None,
        }
    }

    pub fn shape(&self) -> qdbh_core::Result<Shape> {
        Shape::parse(&self.lattice)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CornerSpec {
    /// Corner dimensions tried in increasing order until the observables settle.
    pub m_list: Vec<usize>,
    /// Largest change of parity and entropy between successive `M` accepted as converged.
    pub convergence_tol: f64,
    pub base_sites: usize,
    pub discard_bound: f64,
}

impl Default for CornerSpec {
    fn default() -> Self {
        let d = CornerOptions::default();
        Self {
            m_list: vec![100, 200, 400],
            convergence_tol: 1e-3,
            base_sites: d.base_sites,
            discard_bound: d.discard_bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Default method; absent means exact GMRES up to `exact_dim_cap`, corner beyond.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<SolverMethod>,
    /// Hilbert dimension up to which the automatic choice stays exact.
    pub exact_dim_cap: usize,
    pub steady: SteadyStateOptions,
    pub corner: CornerSpec,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: None,
            exact_dim_cap: 1024,
            steady: SteadyStateOptions::default(),
            corner: CornerSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Output directory; falls back to the environment variable, then `./output`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelSpec,
    /// Default Fock cutoff per site.
    pub n_max: usize,
    pub sizes: Vec<SizeSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    /// The sweep axis `G/γ`.
    pub g_values: Vec<f64>,
    /// Seeds every stochastic start vector.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

/// All problems found in a configuration, reported together.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.problems.len())?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Solver settings resolved for one lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedSize {
    pub label: String,
    pub shape: Shape,
    pub n_max: usize,
    pub method: SolverMethod,
    pub m_list: Vec<usize>,
}

/// The fields that determine the physics of a sweep, i.e. everything except
/// where results go and how many threads compute them.
#[derive(Serialize)]
struct HashView<'a> {
    name: &'a str,
    model: &'a ModelSpec,
    n_max: usize,
    sizes: &'a [SizeSpec],
    solver: &'a SolverSpec,
    seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Checks everything before any computation and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.name.trim().is_empty() {
            problems.push("name must not be empty".into());
        } else if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            problems.push(format!(
                "name '{}' may only contain letters, digits, '-', '_' and '.'",
                self.name
            ));
        }
        self.model.problems(&mut problems);
        if self.n_max == 0 {
            problems.push("n_max must be >= 1".into());
        }
        if self.sizes.is_empty() {
            problems.push("sizes must list at least one lattice".into());
        }
        let mut labels = HashSet::new();
        let mut dims = HashSet::new();
        for (k, size) in self.sizes.iter().enumerate() {
            let ctx = format!("sizes[{k}] ('{}')", size.lattice);
            match size.shape() {
                Ok(shape) => {
                    if !labels.insert(shape.label()) {
                        problems.push(format!("{ctx}: duplicate lattice"));
                    }
                    dims.insert(shape.dimensionality());
                    if let Err(e) = LatticeGeometry::from_shape(shape) {
                        problems.push(format!("{ctx}: {e}"));
                    }
                    if size.n_max == Some(0) {
                        problems.push(format!("{ctx}: n_max must be >= 1"));
                    }
                    if let Ok(r) = self.resolve(size) {
                        if r.method != SolverMethod::Corner {
                            let fock = FockSpace::new(r.n_max.max(1));
                            if let Ok(f) = fock {
                                if f.lattice_dim(shape.n_sites(), MAX_EXACT_DIM).is_err() {
                                    problems.push(format!(
                                        "{ctx}: exact method '{}' needs Hilbert dimension ({}+1)^{} > {MAX_EXACT_DIM}; use corner",
                                        r.method.as_str(),
                                        r.n_max,
                                        shape.n_sites()
                                    ));
                                }
                            }
                        }
                    }
                }
                Err(e) => problems.push(format!("{ctx}: {e}")),
            }
            if let Some(ms) = &size.m_list {
                if ms.is_empty() || ms.contains(&0) {
                    problems.push(format!("{ctx}: m_list must be non-empty with entries >= 1"));
                }
            }
        }
        if dims.len() > 1 {
            problems.push("sizes mix chains and rectangles; finite-size scaling needs one dimensionality".into());
        }
        if self.g_values.is_empty() {
            problems.push("g_values must not be empty".into());
        }
        if self.g_values.iter().any(|g| !g.is_finite() || *g < 0.0) {
            problems.push("g_values must be finite and >= 0".into());
        }
        let mut seen = HashSet::new();
        if self.g_values.iter().any(|g| !seen.insert(g.to_bits())) {
            problems.push("g_values contains duplicates".into());
        }
        let corner = &self.solver.corner;
        if corner.m_list.is_empty() || corner.m_list.contains(&0) {
            problems.push("solver.corner.m_list must be non-empty with entries >= 1".into());
        }
        if !(corner.convergence_tol > 0.0) {
            problems.push("solver.corner.convergence_tol must be > 0".into());
        }
        if corner.base_sites == 0 {
            problems.push("solver.corner.base_sites must be >= 1".into());
        }
        if !(corner.discard_bound > 0.0 && corner.discard_bound <= 1.0) {
            problems.push("solver.corner.discard_bound must lie in (0, 1]".into());
        }
        let st = &self.solver.steady;
        if !(st.tol > 0.0) || !(st.gmres_tol > 0.0) {
            problems.push("solver.steady tolerances must be > 0".into());
        }
        if st.max_iter == 0 || st.gmres_restart == 0 || st.krylov_dim < 2 {
            problems.push("solver.steady: max_iter and gmres_restart must be >= 1, krylov_dim >= 2".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Hex SHA-256 of the physics-relevant part of the configuration.
    pub fn hash(&self) -> String {
        let view = HashView {
            name: &self.name,
            model: &self.model,
            n_max: self.n_max,
            sizes: &self.sizes,
            solver: &self.solver,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&view).expect("configuration serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Per-size settings with the defaults filled in.
    pub fn resolve(&self, size: &SizeSpec) -> qdbh_core::Result<ResolvedSize> {
        let shape = size.shape()?;
        let n_max = size.n_max.unwrap_or(self.n_max);
        let method = match size.method.or(self.solver.method) {
            Some(m) => m,
            None => {
                let exact = FockSpace::new(n_max.max(1))?
                    .lattice_dim(shape.n_sites(), self.solver.exact_dim_cap)
                    .is_ok();
                if exact {
                    SolverMethod::Iterative
                } else {
                    SolverMethod::Corner
                }
            }
        };
        Ok(ResolvedSize {
            label: shape.label(),
            shape,
            n_max,
            method,
            m_list: size.m_list.clone().unwrap_or_else(|| self.solver.corner.m_list.clone()),
        })
    }

    pub fn resolved_sizes(&self) -> qdbh_core::Result<Vec<ResolvedSize>> {
        self.sizes.iter().map(|s| self.resolve(s)).collect()
    }

    pub fn steady_options(&self) -> SteadyStateOptions {
        SteadyStateOptions {
            seed: self.seed,
            ..self.solver.steady
        }
    }

    pub fn corner_options(&self) -> CornerOptions {
        CornerOptions {
            base_sites: self.solver.corner.base_sites,
            discard_bound: self.solver.corner.discard_bound,
            steady: self.steady_options(),
            ..CornerOptions::default()
        }
    }

    pub fn dimensionality(&self) -> usize {
        self.sizes
            .first()
            .and_then(|s| s.shape().ok())
            .map(|s| s.dimensionality())
            .unwrap_or(1)
    }

    /// Output directory: the config value, else `env_default`, else `./output`.
    pub fn output_dir(&self, env_default: Option<PathBuf>) -> PathBuf {
        self.output
            .dir
            .clone()
            .or(env_default)
            .unwrap_or_else(|| PathBuf::from("output"))
    }
}
