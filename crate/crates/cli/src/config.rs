//! Run configuration: preset defaults, file overlay, canonical echo.
//!
//! Resolution order: the selected preset fills every field, an optional
//! TOML file overrides per key, then the command-line case and seed apply.
//! Unknown keys anywhere in the file abort before any computation. The
//! fully resolved configuration serializes to a canonical TOML string whose
//! SHA-256 stamps every artifact manifest, so artifacts from different
//! configurations never mix silently.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use chipdry::fom::SimOptions;
use chipdry::material::MaterialParams;
use chipdry::ocp::OcpSettings;
use chipdry::presets::{self, Case, Preset};

/// Fully resolved run configuration; the canonical echo serializes exactly
/// these fields in this order.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Base preset name.
    pub preset: String,
    /// Drying scenario, "A" (hot) or "B" (mild).
    pub case: String,
    /// Reserved for future randomized studies; recorded for provenance.
    pub seed: u64,
    pub material: MaterialSection,
    pub grid: GridSection,
    pub fom: FomSection,
    pub pod: PodSection,
    pub gramian: GramianSection,
    pub ocp: OcpSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaterialSection {
    pub rho_d: f64,
    pub c_pd: f64,
    pub c_pw: f64,
    pub lambda_w: f64,
    pub lambda_d_x: f64,
    pub lambda_d_y: f64,
    pub lambda_d_z: f64,
    pub delta_d_x: f64,
    pub delta_d_y: f64,
    pub delta_d_z: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "M_H2O")]
    pub m_h2o: f64,
    #[serde(rename = "R")]
    pub r_gas: f64,
    pub rho_inf: f64,
    pub diffusivity_scale_heat: f64,
    pub diffusivity_scale_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell edge [m].
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FomSection {
    /// Uniform initial moisture [kg/kg].
    pub initial_moisture: f64,
    /// Uniform initial temperature [K].
    pub initial_temperature: f64,
    /// Constant drying-air temperature [K]; set by the case unless
    /// overridden.
    pub ambient: f64,
    /// Fixed integration step [s]; omitted = automatic stable step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Snapshot-collection horizon [s].
    pub horizon: f64,
    /// Snapshots recorded over the horizon.
    pub snapshots: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PodSection {
    /// Moisture modes kept.
    pub n_x: usize,
    /// Temperature modes kept.
    #[serde(rename = "n_T")]
    pub n_t: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GramianSection {
    /// Impulse magnitudes [K s].
    pub magnitudes: Vec<f64>,
    /// Rest ambient the probe linearizes around [K].
    pub u0: f64,
    /// Impulse integration step [s].
    pub dt: f64,
    /// Step budget per impulse.
    pub max_steps: usize,
    /// Rate-norm settle tolerance [1/s].
    pub settle_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OcpSection {
    /// Planning horizon [s].
    pub horizon: f64,
    /// Zero-order-hold entries.
    pub steps: usize,
    /// Lower input bound [K].
    pub u_min: f64,
    /// Upper input bound [K].
    pub u_max: f64,
    /// Terminal bound on total moisture [kg/kg].
    pub terminal_moisture: f64,
    /// Reduced orders swept by the order study.
    pub study_orders: Vec<usize>,
}

/// Per-key overlay parsed from `--config`; every field optional, unknown
/// keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    material: Option<MaterialFile>,
    grid: Option<GridFile>,
    fom: Option<FomFile>,
    pod: Option<PodFile>,
    gramian: Option<GramianFile>,
    ocp: Option<OcpFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    rho_d: Option<f64>,
    c_pd: Option<f64>,
    c_pw: Option<f64>,
    lambda_w: Option<f64>,
    lambda_d_x: Option<f64>,
    lambda_d_y: Option<f64>,
    lambda_d_z: Option<f64>,
    delta_d_x: Option<f64>,
    delta_d_y: Option<f64>,
    delta_d_z: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    #[serde(rename = "M_H2O")]
    m_h2o: Option<f64>,
    #[serde(rename = "R")]
    r_gas: Option<f64>,
    rho_inf: Option<f64>,
    diffusivity_scale_heat: Option<f64>,
    diffusivity_scale_mass: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    nx: Option<usize>,
    ny: Option<usize>,
    nz: Option<usize>,
    h: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FomFile {
    initial_moisture: Option<f64>,
    initial_temperature: Option<f64>,
    ambient: Option<f64>,
    dt: Option<f64>,
    horizon: Option<f64>,
    snapshots: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PodFile {
    n_x: Option<usize>,
    #[serde(rename = "n_T")]
    n_t: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GramianFile {
    magnitudes: Option<Vec<f64>>,
    u0: Option<f64>,
    dt: Option<f64>,
    max_steps: Option<usize>,
    settle_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcpFile {
    horizon: Option<f64>,
    steps: Option<usize>,
    u_min: Option<f64>,
    u_max: Option<f64>,
    terminal_moisture: Option<f64>,
    study_orders: Option<Vec<usize>>,
}

fn overlay<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    /// Builds the configuration for a preset with everything at its
    /// defaults.
    pub fn from_preset(preset: &Preset) -> Self {
        let m = &preset.material;
        let (n_x, n_t) = presets::split_order(preset.rom_order);
        RunConfig {
            preset: preset.name.to_string(),
            case: "A".to_string(),
            seed: 0,
            material: MaterialSection {
                rho_d: m.rho_d,
                c_pd: m.c_pd,
                c_pw: m.c_pw,
                lambda_w: m.lambda_w,
                lambda_d_x: m.lambda_d[0],
                lambda_d_y: m.lambda_d[1],
                lambda_d_z: m.lambda_d[2],
                delta_d_x: m.delta_d[0],
                delta_d_y: m.delta_d[1],
                delta_d_z: m.delta_d[2],
                alpha: m.alpha,
                beta: m.beta,
                m_h2o: m.m_h2o,
                r_gas: m.r_gas,
                rho_inf: m.rho_inf,
                diffusivity_scale_heat: m.diffusivity_scale_heat,
                diffusivity_scale_mass: m.diffusivity_scale_mass,
            },
            grid: GridSection {
                nx: preset.nx,
                ny: preset.ny,
                nz: preset.nz,
                h: preset.h,
            },
            fom: FomSection {
                initial_moisture: preset.initial_moisture,
                initial_temperature: preset.initial_temperature,
                ambient: preset.ambient(Case::A),
                dt: None,
                horizon: preset.drying_horizon,
                snapshots: preset.snapshot_count,
            },
            pod: PodSection { n_x, n_t },
            gramian: GramianSection {
                magnitudes: vec![1.0e-3, 1.0e-2, 1.0e-1, 1.0, 1.0e1, 1.0e2, 1.0e3],
                u0: preset.gramian_ambient,
                dt: preset.gramian_dt,
                max_steps: preset.gramian_max_steps,
                settle_tol: preset.gramian_settle_tol,
            },
            ocp: OcpSection {
                horizon: preset.ocp.horizon,
                steps: preset.ocp.steps,
                u_min: preset.ocp.u_min,
                u_max: preset.ocp.u_max,
                terminal_moisture: preset.ocp.terminal_moisture,
                study_orders: preset.study_orders.clone(),
            },
        }
    }

    /// Applies a parsed file overlay, key by key.
    pub fn apply_file(&mut self, file: FileConfig) {
        if let Some(m) = file.material {
            overlay(&mut self.material.rho_d, m.rho_d);
            overlay(&mut self.material.c_pd, m.c_pd);
            overlay(&mut self.material.c_pw, m.c_pw);
            overlay(&mut self.material.lambda_w, m.lambda_w);
            overlay(&mut self.material.lambda_d_x, m.lambda_d_x);
            overlay(&mut self.material.lambda_d_y, m.lambda_d_y);
            overlay(&mut self.material.lambda_d_z, m.lambda_d_z);
            overlay(&mut self.material.delta_d_x, m.delta_d_x);
            overlay(&mut self.material.delta_d_y, m.delta_d_y);
            overlay(&mut self.material.delta_d_z, m.delta_d_z);
            overlay(&mut self.material.alpha, m.alpha);
            overlay(&mut self.material.beta, m.beta);
            overlay(&mut self.material.m_h2o, m.m_h2o);
            overlay(&mut self.material.r_gas, m.r_gas);
            overlay(&mut self.material.rho_inf, m.rho_inf);
            overlay(
                &mut self.material.diffusivity_scale_heat,
                m.diffusivity_scale_heat,
            );
            overlay(
                &mut self.material.diffusivity_scale_mass,
                m.diffusivity_scale_mass,
            );
        }
        if let Some(g) = file.grid {
            overlay(&mut self.grid.nx, g.nx);
            overlay(&mut self.grid.ny, g.ny);
            overlay(&mut self.grid.nz, g.nz);
            overlay(&mut self.grid.h, g.h);
        }
        if let Some(f) = file.fom {
            overlay(&mut self.fom.initial_moisture, f.initial_moisture);
            overlay(&mut self.fom.initial_temperature, f.initial_temperature);
            overlay(&mut self.fom.ambient, f.ambient);
            if f.dt.is_some() {
                self.fom.dt = f.dt;
            }
            overlay(&mut self.fom.horizon, f.horizon);
            overlay(&mut self.fom.snapshots, f.snapshots);
        }
        if let Some(p) = file.pod {
            overlay(&mut self.pod.n_x, p.n_x);
            overlay(&mut self.pod.n_t, p.n_t);
        }
        if let Some(g) = file.gramian {
            overlay(&mut self.gramian.magnitudes, g.magnitudes);
            overlay(&mut self.gramian.u0, g.u0);
            overlay(&mut self.gramian.dt, g.dt);
            overlay(&mut self.gramian.max_steps, g.max_steps);
            overlay(&mut self.gramian.settle_tol, g.settle_tol);
        }
        if let Some(o) = file.ocp {
            overlay(&mut self.ocp.horizon, o.horizon);
            overlay(&mut self.ocp.steps, o.steps);
            overlay(&mut self.ocp.u_min, o.u_min);
            overlay(&mut self.ocp.u_max, o.u_max);
            overlay(&mut self.ocp.terminal_moisture, o.terminal_moisture);
            overlay(&mut self.ocp.study_orders, o.study_orders);
        }
    }

    /// Applies the command-line case selection.
    pub fn apply_case(&mut self, case: Case) {
        self.case = match case {
            Case::A => "A",
            Case::B => "B",
        }
        .to_string();
        let preset = presets::by_name(&self.preset).expect("resolved preset name");
        self.fom.ambient = preset.ambient(case);
    }

    /// Material parameters assembled from the material section.
    pub fn material_params(&self) -> MaterialParams {
        let m = &self.material;
        MaterialParams {
            rho_d: m.rho_d,
            c_pd: m.c_pd,
            c_pw: m.c_pw,
            lambda_w: m.lambda_w,
            lambda_d: [m.lambda_d_x, m.lambda_d_y, m.lambda_d_z],
            delta_d: [m.delta_d_x, m.delta_d_y, m.delta_d_z],
            alpha: m.alpha,
            beta: m.beta,
            m_h2o: m.m_h2o,
            r_gas: m.r_gas,
            rho_inf: m.rho_inf,
            diffusivity_scale_heat: m.diffusivity_scale_heat,
            diffusivity_scale_mass: m.diffusivity_scale_mass,
        }
    }

    /// Snapshot-collection options from the fom section.
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.fom.dt,
            horizon: self.fom.horizon,
            snapshots: self.fom.snapshots,
            steady_tol: None,
        }
    }

    /// Heating-problem settings from the ocp section.
    pub fn ocp_settings(&self) -> OcpSettings {
        OcpSettings {
            horizon: self.ocp.horizon,
            steps: self.ocp.steps,
            u_min: self.ocp.u_min,
            u_max: self.ocp.u_max,
            terminal_moisture: self.ocp.terminal_moisture,
        }
    }

    /// Canonical TOML echo of the resolved configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical echo, lowercase hex.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_with_documented_defaults() {
        let full = RunConfig::from_preset(&presets::paper());
        assert_eq!(full.grid.ny, 20);
        assert_eq!(full.fom.ambient, 373.15);
        assert_eq!(full.material.rho_d, 500.0);
        assert_eq!(full.pod.n_x, 3);
        assert_eq!(full.ocp.steps, 600);
        let small = RunConfig::from_preset(&presets::desk());
        assert_eq!(small.grid.ny, 5);
        assert!(small.material.diffusivity_scale_mass < full.material.diffusivity_scale_mass);
    }

    #[test]
    fn overlay_overrides_single_keys_and_rejects_unknown_ones() {
        let mut config = RunConfig::from_preset(&presets::desk());
        let file: FileConfig =
            toml::from_str("[material]\nalpha = 50.0\n\n[fom]\nsnapshots = 7\n").unwrap();
        config.apply_file(file);
        assert_eq!(config.material.alpha, 50.0);
        assert_eq!(config.fom.snapshots, 7);
        assert_eq!(config.material.beta, 0.075);

        let bad: Result<FileConfig, _> = toml::from_str("[material]\nalpa = 50.0\n");
        assert!(bad.is_err());
        let bad_section: Result<FileConfig, _> = toml::from_str("[materials]\nalpha = 50.0\n");
        assert!(bad_section.is_err());
    }

    #[test]
    fn case_selection_sets_the_ambient() {
        let mut config = RunConfig::from_preset(&presets::desk());
        config.apply_case(Case::B);
        assert_eq!(config.case, "B");
        assert_eq!(config.fom.ambient, 335.65);
    }

    #[test]
    fn canonical_echo_is_stable_and_round_trips() {
        let config = RunConfig::from_preset(&presets::desk());
        let echo = config.canonical_toml();
        assert_eq!(echo, config.canonical_toml());
        assert_eq!(config.hash(), config.hash());
        assert_eq!(config.hash().len(), 64);
        // The echo parses back as a full overlay without unknown keys,
        // except the provenance scalars at the top.
        let body: String = echo
            .lines()
            .skip_while(|l| !l.starts_with('['))
            .collect::<Vec<_>>()
            .join("\n");
        let parsed: Result<FileConfig, _> = toml::from_str(&body);
        assert!(parsed.is_ok(), "echo did not round-trip: {parsed:?}");

        let mut other = RunConfig::from_preset(&presets::desk());
        other.apply_case(Case::B);
        assert_ne!(config.hash(), other.hash());
    }
}
