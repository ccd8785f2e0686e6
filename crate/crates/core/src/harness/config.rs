//! Experiment configuration: one TOML file covering the protocol, the plant,
//! the controller gains, the regressor, and the harness knobs. The canonical
//! serialization (fixed key order, full-precision floats) feeds the config
//! hash that run logs carry, so two logs compare as same-config by hash alone.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::controller::{GainCondition, GainSet};
use crate::error::{Error, Result};
use crate::harness::reference::Protocol;
use crate::krlst::KernelParams;
use crate::ldn::{build_ldn, LdnSystem};
use crate::plant::{self, PlantParams};

/// Plant section; matrices as row-major nested arrays for TOML readability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSection {
    pub a_lin: [[f64; 6]; 6],
    pub fa_coeff: [f64; 6],
    pub b1: [[f64; 6]; 6],
    pub b2_gain: f64,
    pub b2_coupling: [[f64; 6]; 6],
    pub g_sat: [f64; 6],
    pub delay_steps: usize,
    pub noise_std_pos: f64,
    pub noise_std_ori: f64,
    pub noise_enabled: bool,
    pub workspace_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSection {
    pub k1_low: [f64; 6],
    pub k2: [f64; 6],
    pub gamma: [f64; 6],
    pub l_obs: [f64; 6],
    pub u_lim: f64,
    /// Relative width of the multiplicative model mismatch the controller
    /// sees on a_lin, b1, and fa_coeff.
    pub mismatch_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdnSection {
    pub p: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessSection {
    /// Seed of the run whose log fits the feature normalizers.
    pub calibration_seed: u64,
    /// A run is excluded when its stable tracking RMS exceeds this factor
    /// times the median of its (variant, gain) cell.
    pub exclusion_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub protocol: Protocol,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub krlst: KernelParams,
    pub ldn: LdnSection,
    pub harness: HarnessSection,
}

fn to_rows(m: &Matrix6<f64>) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] = m[(i, j)];
        }
    }
    out
}

fn from_rows(rows: &[[f64; 6]; 6]) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| rows[i][j])
}

impl Default for Config {
    fn default() -> Self {
        let plant = plant::default_params();
        Config {
            protocol: Protocol::default(),
            plant: PlantSection {
                a_lin: to_rows(&plant.a_lin),
                fa_coeff: plant.fa_coeff.into(),
                b1: to_rows(&plant.b1),
                b2_gain: plant.b2_gain,
                b2_coupling: to_rows(&plant.b2_coupling),
                g_sat: plant.g_sat.into(),
                delay_steps: plant.delay_steps,
                noise_std_pos: plant.noise_std_pos,
                noise_std_ori: plant.noise_std_ori,
                noise_enabled: plant.noise_enabled,
                workspace_bound: plant.workspace_bound,
            },
            controller: ControllerSection {
                k1_low: [0.4; 6],
                k2: [0.1; 6],
                gamma: [900.0; 6],
                l_obs: [25.0; 6],
                u_lim: 4.0,
                mismatch_fraction: 0.15,
            },
            krlst: KernelParams {
                sigma2: 200.0,
                noise_var: 1e-4,
                lambda: 0.99999,
                budget: 80,
                jitter: 1e-8,
                novelty_threshold: None,
            },
            ldn: LdnSection { p: 3, theta: 0.14 },
            harness: HarnessSection {
                calibration_seed: 0,
                exclusion_factor: 5.0,
            },
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.plant_params().validate()?;
        self.krlst.validate()?;
        // Exercises the LDN dimension/time checks.
        self.ldn_system()?;
        if !(self.controller.u_lim > 0.0) {
            return Err(Error::Config("u_lim must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.controller.mismatch_fraction) {
            return Err(Error::Config("mismatch_fraction must be in [0, 1)".into()));
        }
        if !(self.harness.exclusion_factor > 0.0) {
            return Err(Error::Config("exclusion_factor must be > 0".into()));
        }
        self.gain_set(GainCondition::Low)?;
        Ok(())
    }

    pub fn plant_params(&self) -> PlantParams {
        PlantParams {
            a_lin: from_rows(&self.plant.a_lin),
            fa_coeff: Vector6::from_row_slice(&self.plant.fa_coeff),
            b1: from_rows(&self.plant.b1),
            b2_gain: self.plant.b2_gain,
            b2_coupling: from_rows(&self.plant.b2_coupling),
            g_sat: Vector6::from_row_slice(&self.plant.g_sat),
            delay_steps: self.plant.delay_steps,
            noise_std_pos: self.plant.noise_std_pos,
            noise_std_ori: self.plant.noise_std_ori,
            noise_enabled: self.plant.noise_enabled,
            dt: self.protocol.dt,
            workspace_bound: self.plant.workspace_bound,
        }
    }

    pub fn gain_set(&self, condition: GainCondition) -> Result<GainSet> {
        GainSet::ladder(
            Vector6::from_row_slice(&self.controller.k1_low),
            Vector6::from_row_slice(&self.controller.k2),
            Vector6::from_row_slice(&self.controller.gamma),
            Vector6::from_row_slice(&self.controller.l_obs),
            condition,
        )
    }

    pub fn ldn_system(&self) -> Result<LdnSystem> {
        build_ldn(self.ldn.p, self.ldn.theta, self.protocol.dt)
    }

    pub fn kernel_params(&self) -> KernelParams {
        self.krlst.clone()
    }

    /// Canonical flat serialization: one key=value line per scalar, fixed key
    /// order, floats at full precision. Keys never depend on the values, so
    /// equality of canonical strings is equality of configs.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let num = |s: &mut String, key: &str, v: f64| {
            s.push_str(&format!("{key}={v:.16e}\n"));
        };
        let int = |s: &mut String, key: &str, v: u64| {
            s.push_str(&format!("{key}={v}\n"));
        };

        let p = &self.protocol;
        num(&mut s, "protocol.duration", p.duration);
        num(&mut s, "protocol.buildup", p.buildup);
        num(&mut s, "protocol.omega", p.omega);
        num(&mut s, "protocol.radius", p.radius);
        num(&mut s, "protocol.transient_end", p.transient_end);
        num(&mut s, "protocol.dt", p.dt);
        num(&mut s, "protocol.z_ref", p.z_ref);
        for (i, v) in p.orientation_ref.iter().enumerate() {
            num(&mut s, &format!("protocol.orientation_ref.{i}"), *v);
        }

        for i in 0..6 {
            for j in 0..6 {
                num(&mut s, &format!("plant.a_lin.{i}.{j}"), self.plant.a_lin[i][j]);
            }
        }
        for (i, v) in self.plant.fa_coeff.iter().enumerate() {
            num(&mut s, &format!("plant.fa_coeff.{i}"), *v);
        }
        for i in 0..6 {
            for j in 0..6 {
                num(&mut s, &format!("plant.b1.{i}.{j}"), self.plant.b1[i][j]);
            }
        }
        num(&mut s, "plant.b2_gain", self.plant.b2_gain);
        for i in 0..6 {
            for j in 0..6 {
                num(
                    &mut s,
                    &format!("plant.b2_coupling.{i}.{j}"),
                    self.plant.b2_coupling[i][j],
                );
            }
        }
        for (i, v) in self.plant.g_sat.iter().enumerate() {
            num(&mut s, &format!("plant.g_sat.{i}"), *v);
        }
        int(&mut s, "plant.delay_steps", self.plant.delay_steps as u64);
        num(&mut s, "plant.noise_std_pos", self.plant.noise_std_pos);
        num(&mut s, "plant.noise_std_ori", self.plant.noise_std_ori);
        s.push_str(&format!("plant.noise_enabled={}\n", self.plant.noise_enabled));
        num(&mut s, "plant.workspace_bound", self.plant.workspace_bound);

        for (name, arr) in [
            ("k1_low", &self.controller.k1_low),
            ("k2", &self.controller.k2),
            ("gamma", &self.controller.gamma),
            ("l_obs", &self.controller.l_obs),
        ] {
            for (i, v) in arr.iter().enumerate() {
                num(&mut s, &format!("controller.{name}.{i}"), *v);
            }
        }
        num(&mut s, "controller.u_lim", self.controller.u_lim);
        num(
            &mut s,
            "controller.mismatch_fraction",
            self.controller.mismatch_fraction,
        );

        num(&mut s, "krlst.sigma2", self.krlst.sigma2);
        num(&mut s, "krlst.noise_var", self.krlst.noise_var);
        num(&mut s, "krlst.lambda", self.krlst.lambda);
        int(&mut s, "krlst.budget", self.krlst.budget as u64);
        num(&mut s, "krlst.jitter", self.krlst.jitter);
        match self.krlst.novelty_threshold {
            Some(v) => num(&mut s, "krlst.novelty_threshold", v),
            None => s.push_str("krlst.novelty_threshold=none\n"),
        }

        int(&mut s, "ldn.p", self.ldn.p as u64);
        num(&mut s, "ldn.theta", self.ldn.theta);

        int(&mut s, "harness.calibration_seed", self.harness.calibration_seed);
        num(&mut s, "harness.exclusion_factor", self.harness.exclusion_factor);
        s
    }

    /// SHA-256 of the canonical serialization, lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
