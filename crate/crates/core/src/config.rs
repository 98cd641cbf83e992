//! TOML run configuration. Every key is optional; missing keys take the
//! defaults of the selected preset. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::MonitorConfig;
use crate::error::{Error, Result};
use crate::flow::StepControl;
use crate::grid::{GridSpec, SpinStructure};
use crate::target::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    DecoupledSweep,
    Degree1Blowup,
    Convergence,
    EpsilonSweep,
    Identities,
}

impl Preset {
    pub fn is_sweep(self) -> bool {
        matches!(self, Preset::DecoupledSweep | Preset::EpsilonSweep)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<Preset>,
    pub eps: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub grid: Option<RawGrid>,
    pub target: Option<RawTarget>,
    pub step: Option<RawStep>,
    pub monitor: Option<RawMonitor>,
    pub initial: Option<RawInitial>,
    pub sweep: Option<RawSweep>,
    pub identities: Option<RawIdentities>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub lx: Option<f64>,
    pub ly: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub spin: Option<[u8; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTarget {
    pub kind: Option<String>,
    pub q: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    pub cfl_safety: Option<f64>,
    pub min_dt: Option<f64>,
    pub max_dt: Option<f64>,
    pub fixed_dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMonitor {
    pub cadence: Option<usize>,
    pub delta1: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub radius_divisors: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub map: Option<String>,
    pub map_amp: Option<f64>,
    pub bubble_lambda: Option<f64>,
    pub bubble_rho: Option<f64>,
    pub bubble_center: Option<[f64; 2]>,
    pub spinor: Option<String>,
    pub spinor_amp: Option<f64>,
    pub spinor_kmax: Option<i64>,
    pub spinor_branch: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub spins: Option<Vec<[u8; 2]>>,
    pub eps_factors: Option<Vec<f64>>,
    pub eps_list: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIdentities {
    pub sizes: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapInit {
    Constant,
    Geodesic,
    Smooth { amp: f64 },
    Bubble { lambda: f64, rho: f64, center: (f64, f64) },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpinorInit {
    Zero,
    Constant {
        amp: f64,
    },
    Random {
        amp: f64,
        kmax: i64,
    },
    /// Eigenmode at the smallest nonzero frequency on the Dirac branch `branch·|ξ|`.
    MinMode {
        amp: f64,
        branch: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EpsChoice {
    /// Multiples of the spectral threshold of each spin structure.
    Factors(Vec<f64>),
    List(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub grid: GridSpec,
    pub target: Target,
    pub eps: f64,
    pub t_end: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub step: StepControl,
    pub monitor: MonitorConfig,
    /// Divisors `d` of the injectivity radius behind `monitor.radii`, if given that way.
    pub radius_divisors: Option<Vec<f64>>,
    pub map: MapInit,
    pub spinor: SpinorInit,
    pub spins: Vec<SpinStructure>,
    pub eps_choice: EpsChoice,
    pub sizes: Vec<usize>,
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::config(key, msg)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("{key} must be > 0")))
    }
}

/// Pulls the first backquoted name out of a TOML error message.
fn offending_key(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<toml>").to_string()
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        Error::Config { key: offending_key(&msg), msg }
    })?;
    RunConfig::resolve(&raw)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

fn spin(key: &str, s: [u8; 2]) -> Result<SpinStructure> {
    SpinStructure::new(s[0], s[1]).map_err(|_| bad(key, "spin bits must be 0 or 1"))
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let preset = raw.preset.ok_or_else(|| bad("preset", "missing preset"))?;
        let g = raw.grid.clone().unwrap_or_default();
        let tg = raw.target.clone().unwrap_or_default();
        let st = raw.step.clone().unwrap_or_default();
        let mo = raw.monitor.clone().unwrap_or_default();
        let ini = raw.initial.clone().unwrap_or_default();
        let sw = raw.sweep.clone().unwrap_or_default();
        let id = raw.identities.clone().unwrap_or_default();
        use Preset::*;

        let n_default = match preset {
            Degree1Blowup => 128,
            Convergence | DecoupledSweep | EpsilonSweep => 32,
            Identities => 32,
        };
        let spin_default = match preset {
            Degree1Blowup => [0, 0],
            EpsilonSweep => [1, 0],
            _ => [1, 1],
        };
        let lx = positive("grid.lx", g.lx.unwrap_or(2.0 * PI))?;
        let ly = positive("grid.ly", g.ly.unwrap_or(2.0 * PI))?;
        let grid = GridSpec::new(
            lx,
            ly,
            g.nx.unwrap_or(n_default),
            g.ny.unwrap_or(n_default),
            spin("grid.spin", g.spin.unwrap_or(spin_default))?,
        )
        .map_err(|e| bad("grid", e.to_string()))?;

        let flat_default = matches!(preset, DecoupledSweep | EpsilonSweep);
        let kind = tg.kind.as_deref().unwrap_or(if flat_default { "flat" } else { "sphere" });
        let q = tg.q.unwrap_or(if kind == "flat" { 2 } else { 3 });
        let target = match kind {
            "sphere" => Target::sphere(q),
            "flat" => Target::flat(q),
            other => return Err(bad("target.kind", format!("unknown target kind {other:?} (sphere, flat)"))),
        }
        .map_err(|e| bad("target.q", e.to_string()))?;

        if preset.is_sweep() && raw.eps.is_some() {
            return Err(bad("eps", "sweep presets take eps from [sweep]; remove eps"));
        }
        let eps = positive(
            "eps",
            raw.eps.unwrap_or(match preset {
                Degree1Blowup => 1.0,
                _ => 4.0,
            }),
        )?;
        let t_end = positive(
            "t_end",
            raw.t_end.unwrap_or(match preset {
                Convergence => 10.0,
                DecoupledSweep => 20.0,
                _ => 1.0,
            }),
        )?;

        let defaults = StepControl::default();
        let step = StepControl {
            cfl_safety: st.cfl_safety.unwrap_or(defaults.cfl_safety),
            min_dt: st.min_dt.unwrap_or(defaults.min_dt),
            max_dt: st.max_dt.unwrap_or(defaults.max_dt),
            fixed_dt: st.fixed_dt,
            ..defaults
        };
        if !(step.cfl_safety > 0.0 && step.cfl_safety <= 1.0) {
            return Err(bad("step.cfl_safety", "cfl_safety must lie in (0, 1]"));
        }
        if !(step.min_dt >= 0.0 && step.min_dt < step.max_dt) {
            return Err(bad("step.min_dt", "need 0 <= min_dt < max_dt"));
        }
        if let Some(dt) = step.fixed_dt {
            positive("step.fixed_dt", dt)?;
        }

        let inj = grid.injectivity_radius();
        let (radii, radius_divisors) = match (&mo.radii, &mo.radius_divisors) {
            (Some(_), Some(_)) => {
                return Err(bad("monitor.radii", "give radii or radius_divisors, not both"));
            }
            (Some(r), None) => (r.clone(), None),
            (None, d) => {
                let d = d.clone().unwrap_or(match preset {
                    Degree1Blowup => vec![8.0, 16.0, 32.0],
                    _ => vec![2.0, 4.0, 8.0],
                });
                if d.iter().any(|v| !(*v > 1.0)) {
                    return Err(bad("monitor.radius_divisors", "divisors must be > 1"));
                }
                (d.iter().map(|v| inj / v).collect(), Some(d))
            }
        };
        let monitor = MonitorConfig {
            delta1: mo.delta1.unwrap_or(1.0),
            radii,
            cadence: mo.cadence.unwrap_or(match preset {
                Degree1Blowup => 10,
                _ => 20,
            }),
        };
        monitor.validate(&grid).map_err(|e| match e {
            Error::Config { key, msg } => bad(&format!("monitor.{key}"), msg),
            e => e,
        })?;

        let map = match ini.map.as_deref().unwrap_or(match preset {
            Degree1Blowup => "bubble",
            Convergence | Identities => "smooth",
            _ => "constant",
        }) {
            "constant" => MapInit::Constant,
            "geodesic" => MapInit::Geodesic,
            "smooth" => MapInit::Smooth {
                amp: ini.map_amp.unwrap_or(match preset {
                    Identities => 0.5,
                    _ => 0.3,
                }),
            },
            "bubble" => {
                let c = ini.bubble_center.unwrap_or([lx / 2.0, ly / 2.0]);
                MapInit::Bubble {
                    lambda: positive("initial.bubble_lambda", ini.bubble_lambda.unwrap_or(0.4))?,
                    rho: positive("initial.bubble_rho", ini.bubble_rho.unwrap_or(1.0))?,
                    center: (c[0], c[1]),
                }
            }
            other => {
                return Err(bad("initial.map", format!("unknown map {other:?} (constant, geodesic, smooth, bubble)")))
            }
        };
        if !matches!(map, MapInit::Constant) && target.is_flat() {
            return Err(bad("initial.map", "flat targets only support the constant map"));
        }
        if !matches!(map, MapInit::Constant) && q != 3 {
            return Err(bad("initial.map", "non-constant maps need the sphere in R^3"));
        }
        let amp = |d: f64| ini.spinor_amp.unwrap_or(d);
        let spinor = match ini.spinor.as_deref().unwrap_or(match preset {
            Degree1Blowup => "zero",
            DecoupledSweep | EpsilonSweep => "min_mode",
            _ => "random",
        }) {
            "zero" => SpinorInit::Zero,
            "constant" => SpinorInit::Constant { amp: amp(1.0) },
            "random" => SpinorInit::Random {
                amp: amp(match preset {
                    Convergence => 0.3,
                    _ => 0.5,
                }),
                kmax: ini.spinor_kmax.unwrap_or(2),
            },
            "min_mode" => {
                let branch = ini.spinor_branch.unwrap_or(-1.0);
                if branch != 1.0 && branch != -1.0 {
                    return Err(bad("initial.spinor_branch", "branch must be +1 or -1"));
                }
                SpinorInit::MinMode { amp: amp(0.01), branch }
            }
            other => {
                return Err(bad(
                    "initial.spinor",
                    format!("unknown spinor {other:?} (zero, constant, random, min_mode)"),
                ))
            }
        };
        if let SpinorInit::Constant { amp } | SpinorInit::Random { amp, .. } | SpinorInit::MinMode { amp, .. } = spinor
        {
            if !(amp >= 0.0 && amp.is_finite()) {
                return Err(bad("initial.spinor_amp", "spinor_amp must be >= 0"));
            }
        }
        if let SpinorInit::Random { kmax, .. } = spinor {
            if !(0..=64).contains(&kmax) {
                return Err(bad("initial.spinor_kmax", "spinor_kmax must lie in 0..=64"));
            }
        }

        let spins = match (&sw.spins, preset) {
            (Some(v), _) => v.iter().map(|s| spin("sweep.spins", *s)).collect::<Result<Vec<_>>>()?,
            (None, DecoupledSweep) => SpinStructure::all().to_vec(),
            (None, _) => vec![grid.spin],
        };
        if spins.is_empty() {
            return Err(bad("sweep.spins", "at least one spin structure is required"));
        }
        let eps_choice = match (&sw.eps_list, &sw.eps_factors) {
            (Some(_), Some(_)) => return Err(bad("sweep.eps_list", "give eps_list or eps_factors, not both")),
            (Some(l), None) => EpsChoice::List(l.clone()),
            (None, Some(f)) => EpsChoice::Factors(f.clone()),
            (None, None) => EpsChoice::Factors(match preset {
                EpsilonSweep => (0..7).map(|k| 0.5f64.powi(k)).collect(),
                _ => vec![0.75, 1.25],
            }),
        };
        let (key, vals) = match &eps_choice {
            EpsChoice::List(l) => ("sweep.eps_list", l),
            EpsChoice::Factors(f) => ("sweep.eps_factors", f),
        };
        if vals.is_empty() {
            return Err(bad(key, format!("{key} must not be empty")));
        }
        for v in vals {
            positive(key, *v)?;
        }

        let sizes = id.sizes.unwrap_or_else(|| vec![32, 64]);
        if sizes.len() < 2 || sizes.windows(2).any(|w| w[1] != 2 * w[0]) || sizes[0] < 16 {
            return Err(bad("identities.sizes", "need at least two sizes >= 16, each double the previous"));
        }

        Ok(Self {
            preset,
            grid,
            target,
            eps,
            t_end,
            seed: raw.seed.unwrap_or(0),
            out_dir: raw.out_dir.clone(),
            step,
            monitor,
            radius_divisors,
            map,
            spinor,
            spins,
            eps_choice,
            sizes,
        })
    }

    /// Fully populated raw form; parsing it back reproduces `self`.
    pub fn to_raw(&self) -> RawConfig {
        let (map, map_amp, bubble) = match self.map {
            MapInit::Constant => ("constant", None, None),
            MapInit::Geodesic => ("geodesic", None, None),
            MapInit::Smooth { amp } => ("smooth", Some(amp), None),
            MapInit::Bubble { lambda, rho, center } => ("bubble", None, Some((lambda, rho, [center.0, center.1]))),
        };
        let (spinor, spinor_amp, spinor_kmax, spinor_branch) = match self.spinor {
            SpinorInit::Zero => ("zero", None, None, None),
            SpinorInit::Constant { amp } => ("constant", Some(amp), None, None),
            SpinorInit::Random { amp, kmax } => ("random", Some(amp), Some(kmax), None),
            SpinorInit::MinMode { amp, branch } => ("min_mode", Some(amp), None, Some(branch)),
        };
        let (eps_list, eps_factors) = match &self.eps_choice {
            EpsChoice::List(l) => (Some(l.clone()), None),
            EpsChoice::Factors(f) => (None, Some(f.clone())),
        };
        let (radii, radius_divisors) = match &self.radius_divisors {
            Some(d) => (None, Some(d.clone())),
            None => (Some(self.monitor.radii.clone()), None),
        };
        RawConfig {
            preset: Some(self.preset),
            eps: (!self.preset.is_sweep()).then_some(self.eps),
            t_end: Some(self.t_end),
            seed: Some(self.seed),
            out_dir: self.out_dir.clone(),
            grid: Some(RawGrid {
                lx: Some(self.grid.lx),
                ly: Some(self.grid.ly),
                nx: Some(self.grid.nx),
                ny: Some(self.grid.ny),
                spin: Some([self.grid.spin.delta1, self.grid.spin.delta2]),
            }),
            target: Some(RawTarget {
                kind: Some(if self.target.is_flat() { "flat" } else { "sphere" }.into()),
                q: Some(self.target.q()),
            }),
            step: Some(RawStep {
                cfl_safety: Some(self.step.cfl_safety),
                min_dt: Some(self.step.min_dt),
                max_dt: Some(self.step.max_dt),
                fixed_dt: self.step.fixed_dt,
            }),
            monitor: Some(RawMonitor {
                cadence: Some(self.monitor.cadence),
                delta1: Some(self.monitor.delta1),
                radii,
                radius_divisors,
            }),
            initial: Some(RawInitial {
                map: Some(map.into()),
                map_amp,
                bubble_lambda: bubble.map(|b| b.0),
                bubble_rho: bubble.map(|b| b.1),
                bubble_center: bubble.map(|b| b.2),
                spinor: Some(spinor.into()),
                spinor_amp,
                spinor_kmax,
                spinor_branch,
            }),
            sweep: Some(RawSweep {
                spins: Some(self.spins.iter().map(|s| [s.delta1, s.delta2]).collect()),
                eps_factors,
                eps_list,
            }),
            identities: Some(RawIdentities { sizes: Some(self.sizes.clone()) }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }
}
