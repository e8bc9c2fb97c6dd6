//! Scenario files: parsing, validation and construction of model inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use ensemble_credit::loss::{ConvolutionResolution, Method};
use ensemble_credit::mc::MCConfig;
use ensemble_credit::specfun::{gamma_composite, gauss_laguerre, QuadratureRule};
use ensemble_credit::{make_homogeneous, AssetParams, EnsembleParams, LossGrid, Portfolio};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Prefix of the lines that carry the scenario inside CSV outputs.
pub const EMBED_PREFIX: &str = "#@ ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    SecondOrder,
    Improved,
    Oracle,
    Mc,
}

impl MethodChoice {
    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::SecondOrder => "second-order",
            MethodChoice::Improved => "improved",
            MethodChoice::Oracle => "oracle",
            MethodChoice::Mc => "mc",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "second-order" => Ok(MethodChoice::SecondOrder),
            "improved" => Ok(MethodChoice::Improved),
            "oracle" => Ok(MethodChoice::Oracle),
            "mc" => Ok(MethodChoice::Mc),
            other => Err(CliError::Usage(format!(
                "method: unknown method {other:?}; expected second-order, improved, oracle or mc"
            ))),
        }
    }

    /// The analytic method, or `None` for Monte Carlo.
    pub fn analytic(self) -> Option<Method> {
        match self {
            MethodChoice::SecondOrder => Some(Method::SecondOrder),
            MethodChoice::Improved => Some(Method::Improved),
            MethodChoice::Oracle => Some(Method::Oracle),
            MethodChoice::Mc => None,
        }
    }
}

impl fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub sigma: f64,
    pub mu: f64,
    pub v0: f64,
    pub face: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assets: Option<Vec<AssetSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<NList>,
    /// N given as multiples of K.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_over_k: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub maturity: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Log,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub kind: GridKind,
    pub points: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kind: GridKind::Log,
            points: 400,
            min: LossGrid::DEFAULT_MIN,
            max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Composite,
    Laguerre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Unset: composite for the approximations, 64-node Laguerre for the oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<RuleKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    pub lower_drop: f64,
    pub upper_drop: f64,
    /// Added to the Gamma shape the rule is built for. Nonzero values exist
    /// only to exercise the moment test.
    pub alpha_offset: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            kind: None,
            points: None,
            lower_drop: ensemble_credit::loss::DEFAULT_LOWER_DROP,
            upper_drop: ensemble_credit::loss::DEFAULT_UPPER_DROP,
            alpha_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub draws: u64,
    pub seed: u64,
    pub chunk: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            draws: 1_000_000,
            seed: 1,
            chunk: MCConfig::DEFAULT_CHUNK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub bins: usize,
    pub max_error: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        let r = ConvolutionResolution::default();
        Self {
            bins: r.bins,
            max_error: r.max_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceKind {
    Hyperradial,
    Gbm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceSpec {
    pub kind: PriceKind,
    pub points: usize,
    /// Probability left beyond the end of the printed range.
    pub tail: f64,
}

impl Default for PriceSpec {
    fn default() -> Self {
        Self {
            kind: PriceKind::Both,
            points: 400,
            tail: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<MethodChoice>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Where output files go. Not embedded in the outputs.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
    /// Rescale analytic densities to unit total mass.
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    pub portfolio: PortfolioSpec,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub price: PriceSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_method() -> MethodChoice {
    MethodChoice::Improved
}

impl Default for Scenario {
    /// Ten identical assets over the convergence sweep N = K, 2K, 10K, 30K.
    fn default() -> Self {
        Self {
            method: default_method(),
            portfolio: PortfolioSpec {
                k: Some(10),
                sigma: Some(0.15),
                mu: Some(0.05),
                v0: Some(100.0),
                face: Some(75.0),
                assets: None,
            },
            ensemble: EnsembleSpec {
                n: None,
                n_over_k: Some(vec![1, 2, 10, 30]),
                maturity: 1.0,
            },
            grid: GridSpec::default(),
            quadrature: QuadratureSpec::default(),
            mc: McSpec::default(),
            oracle: OracleSpec::default(),
            price: PriceSpec::default(),
            sweep: SweepSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Extract scenario text from a scenario file or from one of our own outputs.
pub fn scenario_text(raw: &str) -> CliResult<String> {
    if raw.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| CliError::Usage(format!("config: invalid JSON: {e}")))?;
        return match v.get("scenario").and_then(|s| s.as_str()) {
            Some(s) => Ok(s.to_string()),
            None => usage("config: JSON file has no string field \"scenario\""),
        };
    }
    let embedded: Vec<&str> = raw
        .lines()
        .filter_map(|l| l.strip_prefix(EMBED_PREFIX).or_else(|| (l == EMBED_PREFIX.trim_end()).then_some("")))
        .collect();
    if embedded.is_empty() {
        Ok(raw.to_string())
    } else {
        Ok(embedded.join("\n") + "\n")
    }
}

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&scenario_text(&raw)?)
    }

    /// Canonical text embedded in every output file.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("scenario cannot be serialized: {e}")))
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> CliResult<()> {
        let p = &self.portfolio;
        let homogeneous = [p.k.is_some(), p.sigma.is_some(), p.mu.is_some(), p.v0.is_some(), p.face.is_some()];
        match &p.assets {
            Some(list) => {
                if homogeneous.iter().any(|&b| b) {
                    return usage("portfolio: give either k, sigma, mu, v0, face or an assets list, not both");
                }
                if list.is_empty() {
                    return usage("portfolio.assets: list is empty");
                }
                for (i, a) in list.iter().enumerate() {
                    AssetParams::new(a.sigma, a.mu, a.v0, a.face)
                        .map_err(|e| CliError::Usage(format!("portfolio.assets[{i}]: {e}")))?;
                }
            }
            None => {
                for (name, present) in ["k", "sigma", "mu", "v0", "face"].iter().zip(homogeneous) {
                    if !present {
                        return usage(format!("portfolio.{name}: missing field"));
                    }
                }
                if p.k == Some(0) {
                    return usage("portfolio.k: must be at least 1");
                }
                AssetParams::new(p.sigma.unwrap(), p.mu.unwrap(), p.v0.unwrap(), p.face.unwrap())
                    .map_err(|e| CliError::Usage(format!("portfolio: {e}")))?;
            }
        }
        let k = self.k();
        let e = &self.ensemble;
        if !(e.maturity > 0.0 && e.maturity.is_finite()) {
            return usage(format!("ensemble.maturity: must be positive, got {}", e.maturity));
        }
        match (&e.n, &e.n_over_k) {
            (Some(_), Some(_)) => return usage("ensemble: give either n or n_over_k, not both"),
            (None, None) => return usage("ensemble.n: missing field"),
            _ => {}
        }
        let ns = self.n_values();
        if ns.is_empty() {
            return usage("ensemble.n: list is empty");
        }
        for n in &ns {
            if *n < k {
                return usage(format!("ensemble.n: N = {n} is below K = {k}; N < K is not supported"));
            }
        }
        let g = &self.grid;
        if g.points < 2 || !(g.min > 0.0 && g.min < g.max && g.max <= 1.0) {
            return usage(format!(
                "grid: need points >= 2 and 0 < min < max <= 1, got points = {}, min = {}, max = {}",
                g.points, g.min, g.max
            ));
        }
        let q = &self.quadrature;
        if q.points == Some(0) {
            return usage("quadrature.points: must be positive");
        }
        if !(q.lower_drop > 0.0 && q.upper_drop > 0.0) {
            return usage("quadrature: lower_drop and upper_drop must be positive");
        }
        if !q.alpha_offset.is_finite() {
            return usage("quadrature.alpha_offset: must be finite");
        }
        if self.mc.draws == 0 || self.mc.chunk == 0 {
            return usage("mc: draws and chunk must be positive");
        }
        if self.mc.seed > i64::MAX as u64 {
            return usage(format!("mc.seed: must not exceed {}", i64::MAX));
        }
        if self.oracle.bins < 2 || !(self.oracle.max_error > 0.0) {
            return usage("oracle: need bins >= 2 and max_error > 0");
        }
        if self.price.points < 2 || !(self.price.tail > 0.0 && self.price.tail < 0.5) {
            return usage("price: need points >= 2 and 0 < tail < 0.5");
        }
        if let Some(m) = &self.sweep.methods {
            if m.is_empty() {
                return usage("sweep.methods: list is empty");
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        match &self.portfolio.assets {
            Some(list) => list.len(),
            None => self.portfolio.k.unwrap_or(0),
        }
    }

    pub fn n_values(&self) -> Vec<usize> {
        match (&self.ensemble.n, &self.ensemble.n_over_k) {
            (Some(NList::One(n)), _) => vec![*n],
            (Some(NList::Many(ns)), _) => ns.clone(),
            (None, Some(m)) => m.iter().map(|x| x * self.k()).collect(),
            (None, None) => vec![],
        }
    }

    pub fn portfolio(&self) -> CliResult<Portfolio> {
        let p = &self.portfolio;
        Ok(match &p.assets {
            Some(list) => Portfolio::new(
                list.iter()
                    .map(|a| AssetParams::new(a.sigma, a.mu, a.v0, a.face))
                    .collect::<Result<Vec<_>, _>>()?,
            )?,
            None => make_homogeneous(
                self.k(),
                p.sigma.unwrap_or_default(),
                p.mu.unwrap_or_default(),
                p.v0.unwrap_or_default(),
                p.face.unwrap_or_default(),
            )?,
        })
    }

    pub fn ensemble(&self, n: usize) -> CliResult<EnsembleParams> {
        Ok(EnsembleParams::new(n, self.ensemble.maturity)?)
    }

    pub fn grid(&self) -> CliResult<LossGrid> {
        let g = &self.grid;
        Ok(match g.kind {
            GridKind::Log => LossGrid::log_spaced(g.points, g.min, g.max)?,
            GridKind::Uniform => LossGrid::uniform(g.points, g.min, g.max)?,
        })
    }

    /// Quadrature rule for `method`, built for the (possibly offset) Gamma shape.
    pub fn rule(&self, method: Method, ensemble: &EnsembleParams) -> CliResult<QuadratureRule> {
        let q = &self.quadrature;
        let alpha = ensemble.mixing_alpha() + q.alpha_offset;
        let kind = q.kind.unwrap_or(match method {
            Method::Oracle => RuleKind::Laguerre,
            _ => RuleKind::Composite,
        });
        Ok(match kind {
            RuleKind::Laguerre => gauss_laguerre(alpha, q.points.unwrap_or(64))?,
            RuleKind::Composite => gamma_composite(
                alpha,
                q.points.unwrap_or(ensemble_credit::loss::DEFAULT_RULE_POINTS),
                q.lower_drop,
                q.upper_drop,
            )?,
        })
    }

    pub fn resolution(&self) -> ConvolutionResolution {
        ConvolutionResolution {
            bins: self.oracle.bins,
            max_error: self.oracle.max_error,
        }
    }

    pub fn mc_config(&self) -> MCConfig {
        MCConfig {
            chunk_size: self.mc.chunk,
            ..MCConfig::new(self.mc.draws, self.mc.seed)
        }
    }

    /// Methods a sweep runs, in order.
    pub fn sweep_methods(&self) -> Vec<MethodChoice> {
        self.sweep.methods.clone().unwrap_or_else(|| vec![self.method])
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
