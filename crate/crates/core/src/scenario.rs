//! Scenario files: the complete description of a synthetic experiment in
//! TOML. A resolved scenario can be serialized back out as a manifest
//! that reproduces the run bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{BoundaryKind, BoundarySpec};
use crate::grid::{grid_spacing, Grid2D, Medium, Rect, SensorArray, TimeGrid};
use crate::inversion::{Approach, BasisKind, BasisParams, InversionConfig, InversionSetup, Regularizer, SearchBasis};
use crate::signal::PulseSpec;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub domain: DomainSection,
    pub medium: MediumSection,
    pub array: ArraySection,
    pub pulse: PulseSection,
    pub time: TimeSection,
    #[serde(default)]
    pub boundaries: BoundariesSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub inversion: InversionSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainSection {
    /// Cross-range extent (length units).
    pub width: f64,
    /// Range (depth) extent.
    pub depth: f64,
    /// Grid spacing; derived from the pulse when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MediumSection {
    pub c_bar: f64,
    pub omega_in: Rect,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Inclusion {
    Rect {
        x0: f64,
        z0: f64,
        x1: f64,
        z1: f64,
        contrast: f64,
    },
    Ellipse {
        cx: f64,
        cz: f64,
        rx: f64,
        rz: f64,
        contrast: f64,
    },
    /// Thin tilted bar (a fracture-like feature).
    Bar {
        cx: f64,
        cz: f64,
        length: f64,
        thickness: f64,
        tilt_deg: f64,
        contrast: f64,
    },
}

impl Inclusion {
    pub fn contrast(&self) -> f64 {
        match *self {
            Inclusion::Rect { contrast, .. }
            | Inclusion::Ellipse { contrast, .. }
            | Inclusion::Bar { contrast, .. } => contrast,
        }
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        match *self {
            Inclusion::Rect { x0, z0, x1, z1, .. } => x >= x0 && x <= x1 && z >= z0 && z <= z1,
            Inclusion::Ellipse { cx, cz, rx, rz, .. } => {
                let a = (x - cx) / rx;
                let b = (z - cz) / rz;
                a * a + b * b <= 1.0
            }
            Inclusion::Bar { cx, cz, length, thickness, tilt_deg, .. } => {
                let t = tilt_deg.to_radians();
                let (c, s) = (t.cos(), t.sin());
                let u = c * (x - cx) + s * (z - cz);
                let v = -s * (x - cx) + c * (z - cz);
                u.abs() <= 0.5 * length && v.abs() <= 0.5 * thickness
            }
        }
    }

    /// Loose bounding box, for subdomain containment checks.
    pub fn bounding_box(&self) -> Rect {
        match *self {
            Inclusion::Rect { x0, z0, x1, z1, .. } => Rect { x0, z0, x1, z1 },
            Inclusion::Ellipse { cx, cz, rx, rz, .. } => Rect {
                x0: cx - rx,
                z0: cz - rz,
                x1: cx + rx,
                z1: cz + rz,
            },
            Inclusion::Bar { cx, cz, length, thickness, .. } => {
                let r = 0.5 * (length * length + thickness * thickness).sqrt();
                Rect { x0: cx - r, z0: cz - r, x1: cx + r, z1: cz + r }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArraySection {
    pub m: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PulseSection {
    pub omega_c: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TimeSection {
    pub tau: f64,
    pub n: usize,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
}

fn default_cfl_safety() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BoundariesSection {
    pub top: String,
    pub bottom: String,
    pub left: String,
    pub right: String,
}

impl Default for BoundariesSection {
    fn default() -> Self {
        Self {
            top: "hard".into(),
            bottom: "soft".into(),
            left: "soft".into(),
            right: "soft".into(),
        }
    }
}

fn parse_boundary(name: &str) -> Result<BoundaryKind> {
    match name {
        "hard" => Ok(BoundaryKind::Hard),
        "soft" => Ok(BoundaryKind::Soft),
        other => Err(Error::Validation(format!(
            "boundary kind `{other}` (expected `hard` or `soft`)"
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NoiseSection {
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { level: 0.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InversionSection {
    #[serde(default)]
    pub mass_eps: f64,
    #[serde(default = "default_gamma_tikhonov")]
    pub gamma_tikhonov: f64,
    #[serde(default = "default_gamma_tv")]
    pub gamma_tv: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_basis")]
    pub basis: String,
    /// Basis geometry; derived from the central wavelength when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hat_range_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hat_cross_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_sigma_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_sigma_cross: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_smoothing_eps: Option<f64>,
}

fn default_gamma_tikhonov() -> f64 {
    0.03
}

fn default_gamma_tv() -> f64 {
    0.01
}

fn default_max_iters() -> usize {
    10
}

fn default_stop_tol() -> f64 {
    1e-3
}

fn default_basis() -> String {
    "hat".into()
}

impl Default for InversionSection {
    fn default() -> Self {
        Self {
            mass_eps: 0.0,
            gamma_tikhonov: default_gamma_tikhonov(),
            gamma_tv: default_gamma_tv(),
            max_iters: default_max_iters(),
            stop_tol: default_stop_tol(),
            basis: default_basis(),
            hat_range_spacing: None,
            hat_cross_spacing: None,
            gaussian_sigma_range: None,
            gaussian_sigma_cross: None,
            pixel_size: None,
            tv_smoothing_eps: None,
        }
    }
}

/// A scenario with every derived quantity materialized.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub grid: Grid2D,
    pub medium: Medium,
    pub background: Medium,
    pub array: SensorArray,
    pub pulse: PulseSpec,
    pub time_grid: TimeGrid,
    pub boundaries: BoundarySpec,
    pub basis_kind: BasisKind,
    pub basis_params: BasisParams,
    pub tv_smoothing_eps: f64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("scenario parse: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("scenario write: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml(&text)
    }

    /// Validates and materializes every derived quantity. The returned
    /// value carries a copy of the scenario with `h` and the basis
    /// geometry filled in, which serves as the reproducible manifest.
    pub fn resolve(&self) -> Result<Resolved> {
        let pulse = PulseSpec::new(self.pulse.omega_c, self.pulse.bandwidth)?;
        let c_bar = self.medium.c_bar;
        if !(c_bar > 0.0) {
            return Err(Error::Validation("background speed must be > 0".into()));
        }
        let h = match self.domain.h {
            Some(h) if h > 0.0 => h,
            Some(h) => return Err(Error::Validation(format!("grid spacing {h} must be > 0"))),
            None => grid_spacing(pulse.omega_c, pulse.bandwidth, c_bar)?,
        };
        let nx = (self.domain.width / h).round() as usize + 1;
        let nz = (self.domain.depth / h).round() as usize + 1;
        let grid = Grid2D::new(nx, nz, h, [0.0, 0.0])?;

        let omega_in = self.medium.omega_in;
        let (lo, hi) = grid.extent();
        let domain_rect = Rect { x0: lo[0], z0: lo[1], x1: hi[0], z1: hi[1] };
        if !domain_rect.contains_rect(&omega_in) {
            return Err(Error::Validation("omega_in exits the domain".into()));
        }
        // The medium must stay at the background within a pulse flight of
        // the array line.
        let standoff = c_bar * pulse.t_f();
        if omega_in.z0 < standoff {
            return Err(Error::Validation(format!(
                "omega_in starts at depth {}, inside the known zone of depth {standoff:.3}",
                omega_in.z0
            )));
        }
        for inc in &self.medium.inclusions {
            if !(inc.contrast() > 0.0) {
                return Err(Error::Validation("inclusion contrast must be > 0".into()));
            }
            let bb = inc.bounding_box();
            if !omega_in.contains_rect(&bb) {
                return Err(Error::Validation(format!(
                    "inclusion with bounding box ({:.2}, {:.2})-({:.2}, {:.2}) exits omega_in",
                    bb.x0, bb.z0, bb.x1, bb.z1
                )));
            }
        }

        let mut c = vec![c_bar; grid.node_count()];
        for k in 0..nz {
            for i in 0..nx {
                let [x, z] = grid.node_pos(i, k);
                for inc in &self.medium.inclusions {
                    if inc.contains(x, z) {
                        c[grid.idx(i, k)] = c_bar * inc.contrast();
                    }
                }
            }
        }
        let medium = Medium::new(grid.clone(), c, c_bar, omega_in)?;
        let background = Medium::homogeneous(grid.clone(), c_bar, omega_in)?;

        let array = SensorArray::centered(&grid, self.array.m, self.array.spacing)?;
        // Headroom above the true maximum speed keeps the step stable for
        // the intermediate media an inversion visits.
        let c_cfl = medium.c_max().max(1.4 * c_bar);
        let time_grid = TimeGrid::from_cfl(self.time.tau, self.time.n, h, c_cfl, self.time.cfl_safety)?;
        let boundaries = BoundarySpec {
            top: parse_boundary(&self.boundaries.top)?,
            bottom: parse_boundary(&self.boundaries.bottom)?,
            left: parse_boundary(&self.boundaries.left)?,
            right: parse_boundary(&self.boundaries.right)?,
        };
        if self.noise.level < 0.0 {
            return Err(Error::Validation("noise level must be >= 0".into()));
        }

        let basis_kind = match self.inversion.basis.as_str() {
            "hat" => BasisKind::Hat,
            "gaussian" => BasisKind::Gaussian,
            "pixel" => BasisKind::Pixel,
            other => {
                return Err(Error::Validation(format!(
                    "basis `{other}` (expected hat, gaussian or pixel)"
                )))
            }
        };
        let lambda_c = pulse.lambda_c(c_bar);
        let defaults = BasisParams::from_wavelength(lambda_c);
        let basis_params = BasisParams {
            hat_range_spacing: self.inversion.hat_range_spacing.unwrap_or(defaults.hat_range_spacing),
            hat_cross_spacing: self.inversion.hat_cross_spacing.unwrap_or(defaults.hat_cross_spacing),
            gaussian_sigma_range: self
                .inversion
                .gaussian_sigma_range
                .unwrap_or(defaults.gaussian_sigma_range),
            gaussian_sigma_cross: self
                .inversion
                .gaussian_sigma_cross
                .unwrap_or(defaults.gaussian_sigma_cross),
            pixel_size: self.inversion.pixel_size.unwrap_or(defaults.pixel_size),
        };
        let tv_smoothing_eps = self
            .inversion
            .tv_smoothing_eps
            .unwrap_or(1e-3 * c_bar / lambda_c);

        // Manifest copy with the derived values pinned.
        let mut manifest = self.clone();
        manifest.domain.h = Some(h);
        manifest.inversion.hat_range_spacing = Some(basis_params.hat_range_spacing);
        manifest.inversion.hat_cross_spacing = Some(basis_params.hat_cross_spacing);
        manifest.inversion.gaussian_sigma_range = Some(basis_params.gaussian_sigma_range);
        manifest.inversion.gaussian_sigma_cross = Some(basis_params.gaussian_sigma_cross);
        manifest.inversion.pixel_size = Some(basis_params.pixel_size);
        manifest.inversion.tv_smoothing_eps = Some(tv_smoothing_eps);

        Ok(Resolved {
            scenario: manifest,
            grid,
            medium,
            background,
            array,
            pulse,
            time_grid,
            boundaries,
            basis_kind,
            basis_params,
            tv_smoothing_eps,
        })
    }
}

impl Resolved {
    pub fn search_basis(&self) -> Result<SearchBasis> {
        SearchBasis::build(
            self.basis_kind,
            &self.grid,
            self.medium.omega_in,
            &self.basis_params,
        )
    }

    /// Inversion setup with the background as the initial guess; the
    /// true medium rides along for the benchmark mode.
    pub fn inversion_setup(&self) -> Result<InversionSetup> {
        Ok(InversionSetup {
            array: self.array.clone(),
            pulse: self.pulse,
            time_grid: self.time_grid,
            boundaries: self.boundaries,
            c0: self.background.clone(),
            basis: self.search_basis()?,
            true_medium: Some(self.medium.clone()),
        })
    }

    pub fn inversion_config(&self, approach: Approach, reg: Regularizer) -> InversionConfig {
        let inv = &self.scenario.inversion;
        InversionConfig {
            approach,
            reg,
            gamma: match reg {
                Regularizer::Tikhonov => inv.gamma_tikhonov,
                Regularizer::Tv => inv.gamma_tv,
            },
            max_iters: inv.max_iters,
            tv_smoothing_eps: self.tv_smoothing_eps,
            stop_tol: inv.stop_tol,
            mass_eps: inv.mass_eps,
        }
    }
}
