//! Flat JSON run configuration.
//!
//! Every key is optional except `problem`; unknown keys are rejected. Physical and
//! numerical constraints are re-checked when the config is resolved into core types.

use std::fs;
use std::path::{Path, PathBuf};

use mrt_core::{
    build_compressible_equilibrium, build_grid, make_affine_profile, make_table_profile, make_tanh_profile,
    CompressibleEquilibrium, DensityProfile, FieldDir, Grid1D, GrowthOptions, ModeSpec, PhysicalParams, Rect2D, Scheme,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Incompressible,
    Compressible,
    Bounded2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Affine,
    Tanh,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Fd2,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    Growing,
    Random,
}

/// Unit of `t_end` and `dt` for `evolve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Absolute,
    /// Multiples of `1/Λ` of the evolved mode.
    Growth,
    /// Multiples of `l² max ρ̄ / μ`.
    Viscous,
}

fn d_profile() -> ProfileKind {
    ProfileKind::Affine
}
fn d_one() -> f64 {
    1.0
}
fn d_rho_mid() -> f64 {
    2.0
}
fn d_mu() -> f64 {
    0.1
}
fn d_scheme() -> SchemeName {
    SchemeName::Fd2
}
fn d_n() -> usize {
    64
}
fn d_dir() -> u8 {
    3
}
fn d_every() -> usize {
    10
}
fn d_initial() -> InitialData {
    InitialData::Growing
}
fn d_unit() -> TimeUnit {
    TimeUnit::Growth
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,

    #[serde(default = "d_profile")]
    pub profile: ProfileKind,
    /// Half-height of the slab / rectangle.
    #[serde(default = "d_one")]
    pub l: f64,
    #[serde(default = "d_rho_mid")]
    pub rho_mid: f64,
    /// Affine slope `ρ̄'`.
    #[serde(default = "d_one")]
    pub beta: f64,
    pub tanh_amp: Option<f64>,
    pub tanh_k: Option<f64>,
    /// Two-column `x3,rho` CSV, relative to the config file.
    pub table: Option<PathBuf>,

    #[serde(default = "d_one")]
    pub g: f64,
    #[serde(default = "d_one")]
    pub lambda0: f64,
    #[serde(default = "d_mu")]
    pub mu: f64,
    /// `μ + ν`; defaults to `μ`.
    pub mu0: Option<f64>,
    #[serde(default = "d_one")]
    pub pressure_a: f64,
    #[serde(default = "d_one")]
    pub gamma: f64,

    #[serde(default = "d_scheme")]
    pub scheme: SchemeName,
    #[serde(default = "d_n")]
    pub n: usize,

    #[serde(default = "d_one")]
    pub period: f64,
    /// Explicit `(j1, j2)` list; `ξ = (j1, j2)/period`.
    pub modes: Option<Vec<[i64; 2]>>,
    /// Sweep `ξ = (k, 0)/period` for `k = 1..=k_max` when `modes` is absent.
    pub k_max: Option<i64>,

    /// Field direction `i` (1 or 3).
    #[serde(default = "d_dir")]
    pub field_dir: u8,
    #[serde(default)]
    pub m: f64,

    /// Compressible equilibrium constant `C`.
    pub c_const: Option<f64>,
    #[serde(default = "d_one")]
    pub sign: f64,

    pub a1: Option<f64>,
    pub b1: Option<f64>,
    pub nx: Option<usize>,
    pub nz: Option<usize>,

    pub tol: Option<f64>,
    pub probe: Option<f64>,
    pub samples: Option<usize>,
    pub marginal_tol: Option<f64>,
    pub ceiling: Option<f64>,

    #[serde(default = "d_initial")]
    pub initial: InitialData,
    #[serde(default)]
    pub seed: u64,
    /// Random data also perturbs `(ϱ0, N0)`.
    #[serde(default)]
    pub random_x0: bool,
    #[serde(default = "d_unit")]
    pub time_unit: TimeUnit,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    #[serde(default = "d_every")]
    pub every: usize,

    pub threads: Option<usize>,
    pub out: Option<PathBuf>,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("{name} must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need any assembly.
    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [("l", self.l), ("period", self.period), ("m", self.m), ("sign", self.sign)] {
            finite(name, v)?;
        }
        if self.l <= 0.0 {
            return Err(bad("l must be > 0"));
        }
        if self.period <= 0.0 {
            return Err(bad("period must be > 0"));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(bad("sign must be 1 or -1"));
        }
        self.field_dir()?;
        self.physical()?;
        if self.problem != Problem::Bounded2d {
            self.modes()?;
        }
        if self.problem == Problem::Compressible && self.c_const.is_none() {
            return Err(bad("compressible problems need c_const"));
        }
        if self.every == 0 {
            return Err(bad("every must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads must be >= 1"));
        }
        for (name, v) in [("t_end", self.t_end), ("dt", self.dt)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(bad(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        if let (Some(t), Some(dt)) = (self.t_end, self.dt) {
            if dt > t {
                return Err(bad("dt must not exceed t_end"));
            }
        }
        for (name, v) in [("tol", self.tol), ("probe", self.probe), ("ceiling", self.ceiling)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(bad(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        if let Some(v) = self.marginal_tol {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad("marginal_tol must be >= 0"));
            }
        }
        if self.samples == Some(0) {
            return Err(bad("samples must be >= 1"));
        }
        Ok(())
    }

    pub fn field_dir(&self) -> Result<FieldDir, CliError> {
        match self.field_dir {
            1 => Ok(FieldDir::X1),
            3 => Ok(FieldDir::X3),
            other => Err(bad(format!("field_dir must be 1 or 3, got {other}"))),
        }
    }

    pub fn physical(&self) -> Result<PhysicalParams, CliError> {
        let mu0 = self.mu0.unwrap_or(self.mu);
        PhysicalParams::new(self.g, self.lambda0, self.mu, mu0, self.pressure_a, self.gamma)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn profile(&self) -> Result<DensityProfile, CliError> {
        let p = match self.profile {
            ProfileKind::Affine => make_affine_profile(self.l, self.rho_mid, self.beta),
            ProfileKind::Tanh => {
                let amp = self.tanh_amp.ok_or_else(|| bad("tanh profile needs tanh_amp"))?;
                let k = self.tanh_k.ok_or_else(|| bad("tanh profile needs tanh_k"))?;
                make_tanh_profile(self.l, self.rho_mid, amp, k)
            }
            ProfileKind::Table => {
                let rel = self.table.as_ref().ok_or_else(|| bad("table profile needs table"))?;
                let (x, rho) = read_table(&self.base_dir.join(rel))?;
                make_table_profile(&x, &rho)
            }
        }
        .map_err(|e| bad(e.to_string()))?;
        if (p.l() - self.l).abs() > 1e-12 * self.l {
            return Err(bad(format!("table spans half-height {}, config l is {}", p.l(), self.l)));
        }
        Ok(p)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        let scheme = match self.scheme {
            SchemeName::Fd2 => Scheme::Fd2,
            SchemeName::Chebyshev => Scheme::Chebyshev,
        };
        build_grid(self.l, self.n, scheme).map_err(|e| bad(e.to_string()))
    }

    /// Modes with the configured field attached.
    pub fn modes(&self) -> Result<Vec<ModeSpec>, CliError> {
        let dir = self.field_dir()?;
        let pairs: Vec<[i64; 2]> = match (&self.modes, self.k_max) {
            (Some(_), Some(_)) => return Err(bad("give either modes or k_max, not both")),
            (Some(list), None) => list.clone(),
            (None, Some(k)) if k >= 1 => (1..=k).map(|j| [j, 0]).collect(),
            (None, Some(k)) => return Err(bad(format!("k_max must be >= 1, got {k}"))),
            (None, None) => vec![[1, 0]],
        };
        if pairs.is_empty() {
            return Err(bad("mode list is empty"));
        }
        if self.problem == Problem::Incompressible && pairs.iter().any(|p| p[0] == 0 && p[1] == 0) {
            return Err(bad("incompressible modes need (j1, j2) != (0, 0)"));
        }
        Ok(pairs.iter().map(|p| ModeSpec::new(self.period, p[0], p[1]).with_field(dir, self.m)).collect())
    }

    pub fn equilibrium(&self, grid: &Grid1D) -> Result<CompressibleEquilibrium, CliError> {
        let c = self.c_const.ok_or_else(|| bad("compressible problems need c_const"))?;
        build_compressible_equilibrium(&self.profile()?, &self.physical()?, finite("c_const", c)?, self.sign, grid)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn rect(&self) -> Result<Rect2D, CliError> {
        let a1 = self.a1.unwrap_or(-self.l);
        let b1 = self.b1.unwrap_or(self.l);
        Rect2D::new(a1, b1, self.l, self.nx.unwrap_or(32), self.nz.unwrap_or(32)).map_err(|e| bad(e.to_string()))
    }

    pub fn growth_options(&self) -> GrowthOptions {
        let d = GrowthOptions::default();
        GrowthOptions {
            probe: self.probe.unwrap_or(d.probe),
            tol: self.tol.unwrap_or(d.tol),
            ceiling: self.ceiling.or(d.ceiling),
            samples: self.samples.unwrap_or(d.samples),
            keep_phi: false,
            marginal_tol: self.marginal_tol.unwrap_or(d.marginal_tol),
        }
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("cannot read table {}: {e}", path.display())))?;
    let (mut x, mut rho) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("table row {}: {e}", i + 1)))?;
        if rec.len() != 2 {
            return Err(bad(format!("table row {} has {} columns, expected 2", i + 1, rec.len())));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("table row {}: {e}", i + 1)));
        match (parse(&rec[0]), parse(&rec[1])) {
            (Ok(a), Ok(b)) => {
                x.push(a);
                rho.push(b);
            }
            // A header line is allowed in the first row only.
            _ if i == 0 => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok((x, rho))
}
