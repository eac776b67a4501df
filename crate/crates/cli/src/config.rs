//! Run configuration: a TOML file, mirrored as canonical JSON next to the outputs.

use std::path::{Path, PathBuf};

use dbm_lab::freeconv::{FreeConvolutionState, Window};
use dbm_lab::kernel::{ContourOptions, KernelEvaluator, KernelOptions, RescaledKernelFrame, Route, Scaling};
use dbm_lab::measures::{Generator, InitialConfiguration, MeasureBlock, MeasureSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reference measure; quantile configurations are drawn from it.
    pub measure: MeasureBlock,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_scaling: Option<TimeScaling>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Quantiles,
    Equispaced,
    Explicit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    /// Clear `(x_star - delta, x_star + delta)` after generating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insert_gap: Option<GapInsert>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapInsert {
    pub x_star: f64,
    pub delta: f64,
}

/// `t_n = prefactor * n^n_exponent * (ln n)^log_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScaling {
    pub prefactor: f64,
    pub n_exponent: f64,
    #[serde(default)]
    pub log_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub x_star: f64,
    pub extent: f64,
    pub step: f64,
    /// Fixed window width: positions are `x*_t + u * epsilon`, centred on the
    /// finite-n evolution of `x_star`. Without it the bulk scaling `1/(n c_t)` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { x_star: 0.0, extent: 2.0, step: 0.25, epsilon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub hermite_nodes: usize,
    pub rel_tol: f64,
    pub route: Route,
    pub max_segment: f64,
    pub panel_nodes: usize,
    pub verify: bool,
    /// Starting Nystrom node count for gap probabilities.
    pub nystrom_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let k = KernelOptions::default();
        QuadratureConfig {
            hermite_nodes: k.hermite_nodes,
            rel_tol: k.rel_tol,
            route: k.route,
            max_segment: k.contour.max_segment,
            panel_nodes: k.contour.panel_nodes,
            verify: k.contour.verify,
            nystrom_nodes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub samples: u64,
    /// Number of trajectories written by `paths`.
    pub paths: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { samples: 2000, paths: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// The interval is `[x*_t - half_width, x*_t + half_width]`.
    pub half_width: f64,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    /// Pretty JSON with every field spelled out.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises") + "\n"
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.reference_measure()?;
        match (&self.n, &self.n_grid) {
            (Some(_), Some(_)) => return Err(invalid("give either n or n_grid, not both")),
            (None, None) => return Err(invalid("missing n or n_grid")),
            (_, Some(g)) if g.is_empty() => return Err(invalid("n_grid is empty")),
            _ => {}
        }
        if self.sizes().contains(&0) {
            return Err(invalid("n must be at least 1"));
        }
        let given = [self.t.is_some(), self.t_grid.is_some(), self.t_scaling.is_some()].iter().filter(|&&b| b).count();
        if given != 1 {
            return Err(invalid("give exactly one of t, t_grid, t_scaling"));
        }
        if let Some(g) = &self.t_grid {
            if g.is_empty() {
                return Err(invalid("t_grid is empty"));
            }
        }
        for &n in &self.sizes() {
            for t in self.times(n) {
                // t = 0 is a valid path start; the kernel commands reject it themselves.
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(invalid(format!("times must be finite and >= 0, got {t} for n = {n}")));
                }
            }
        }
        let w = &self.window;
        if !(w.extent >= 0.0 && w.step > 0.0 && w.x_star.is_finite()) {
            return Err(invalid("window needs finite x_star, extent >= 0 and step > 0"));
        }
        if w.epsilon.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return Err(invalid("window.epsilon must be positive"));
        }
        if self.gap.is_some_and(|g| !(g.half_width > 0.0 && g.half_width.is_finite())) {
            return Err(invalid("gap.half_width must be positive"));
        }
        if self.monte_carlo.samples == 0 {
            return Err(invalid("monte_carlo.samples must be at least 1"));
        }
        if self.quadrature.nystrom_nodes < 8 {
            return Err(invalid("quadrature.nystrom_nodes must be at least 8"));
        }
        let g = &self.generator;
        let extra = |name: &str, set: bool| if set { Err(invalid(format!("generator.{name} does not apply to {:?}", g.kind))) } else { Ok(()) };
        match g.kind {
            GeneratorKind::Quantiles => {
                extra("a", g.a.is_some())?;
                extra("b", g.b.is_some())?;
                extra("points", g.points.is_some())?;
            }
            GeneratorKind::Equispaced => {
                extra("points", g.points.is_some())?;
                if g.a.is_none() || g.b.is_none() {
                    return Err(invalid("equispaced generator needs a and b"));
                }
            }
            GeneratorKind::Explicit => {
                extra("a", g.a.is_some())?;
                extra("b", g.b.is_some())?;
                if g.points.is_none() {
                    return Err(invalid("explicit generator needs points"));
                }
            }
        }
        Ok(())
    }

    pub fn reference_measure(&self) -> Result<MeasureSpec, CliError> {
        Ok(MeasureSpec::try_from(self.measure.clone())?)
    }

    pub fn sizes(&self) -> Vec<usize> {
        match (&self.n, &self.n_grid) {
            (Some(n), _) => vec![*n],
            (None, Some(g)) => g.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// Times to run at for size `n`.
    pub fn times(&self, n: usize) -> Vec<f64> {
        if let Some(t) = self.t {
            vec![t]
        } else if let Some(g) = &self.t_grid {
            g.clone()
        } else if let Some(s) = self.t_scaling {
            let n = n as f64;
            vec![s.prefactor * n.powf(s.n_exponent) * n.ln().powf(s.log_exponent)]
        } else {
            Vec::new()
        }
    }

    pub fn generator(&self) -> Result<Generator, CliError> {
        let g = &self.generator;
        let base = match g.kind {
            GeneratorKind::Quantiles => Generator::Quantiles { measure: self.reference_measure()? },
            GeneratorKind::Equispaced => Generator::Equispaced { a: g.a.unwrap_or(-1.0), b: g.b.unwrap_or(1.0) },
            GeneratorKind::Explicit => Generator::Explicit { points: g.points.clone().unwrap_or_default() },
        };
        Ok(match g.insert_gap {
            Some(GapInsert { x_star, delta }) => Generator::GapInserted { base: Box::new(base), x_star, delta },
            None => base,
        })
    }

    pub fn configuration(&self, n: usize) -> Result<InitialConfiguration, CliError> {
        Ok(InitialConfiguration::generate(self.generator()?, n)?)
    }

    pub fn kernel_options(&self) -> KernelOptions {
        let q = &self.quadrature;
        KernelOptions {
            hermite_nodes: q.hermite_nodes,
            rel_tol: q.rel_tol,
            route: q.route,
            contour: ContourOptions { max_segment: q.max_segment, panel_nodes: q.panel_nodes, verify: q.verify, ..Default::default() },
        }
    }

    pub fn u_grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(Window::grid(self.window.extent, self.window.step)?)
    }

    /// Observation frame for size `n` at time `t`.
    pub fn frame(&self, n: usize, t: f64) -> Result<RescaledKernelFrame, CliError> {
        let cfg = self.configuration(n)?;
        let grid = self.u_grid()?;
        let ev = KernelEvaluator::new(cfg, t, self.kernel_options())?;
        let x_star = self.window.x_star;
        match self.window.epsilon {
            None => {
                let state = FreeConvolutionState::new(self.reference_measure()?, t)?;
                Ok(RescaledKernelFrame::bulk(ev, Window::new(&state, x_star, grid)?)?)
            }
            Some(eps) => {
                let state = FreeConvolutionState::new(ev.config().measure().clone(), t)?;
                let (x_star_t, c_t) = state.psi_parametric(x_star)?;
                let window = Window { x_star, t, x_star_t, c_t, u_grid: grid };
                Ok(RescaledKernelFrame::new(ev, window, Scaling::Fixed { scale: 1.0 / eps })?)
            }
        }
    }
}
