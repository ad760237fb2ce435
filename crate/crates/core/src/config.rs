//! TOML scenario files.
//!
//! ```toml
//! traits = ["a", "b"]
//! costs = [[0, 1], [1, 0]]        # "inf" forbids a mutation
//! psi = [[1.0, 0.8]]              # one row per resource
//! h = [0.0, 0.5]
//!
//! [model]
//! family = "chemostat"            # or "lotka_volterra", "table"
//! d = [1, 1]
//! c = [2, 2]
//! alpha = [1]
//!
//! [run]
//! eps_list = [0.4, 0.2, 0.1, 0.05]
//! t_max = 5.0
//! dt_out = 0.01
//! seed = 0
//! ```
//!
//! `traits` and `[run]` are optional. The model table may also declare
//! `a`, `m`, `v_min` and `v_max`.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{ConfigError, ScenarioError};
use crate::scenario::{
    DeclaredBounds, GrowthFamily, GrowthModel, InitialExponent, MutationCosts, ResourceWeights, Scenario, TraitSpace,
};

/// Run parameters shared by the subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    pub t_max: f64,
    pub dt_out: f64,
    pub seed: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            t_max: 5.0,
            dt_out: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub run: RunParams,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
enum CostEntry {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    traits: Option<Spanned<Vec<String>>>,
    costs: Spanned<Vec<Spanned<Vec<CostEntry>>>>,
    psi: Spanned<Vec<Spanned<Vec<f64>>>>,
    h: Spanned<Vec<f64>>,
    model: Spanned<RawModel>,
    run: Option<Spanned<RawRun>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_max: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    eps_list: Option<Vec<f64>>,
    t_max: Option<f64>,
    dt_out: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct OutConfig<'a> {
    traits: &'a [String],
    costs: Vec<Vec<CostEntry>>,
    psi: &'a [Vec<f64>],
    h: &'a [f64],
    model: RawModel,
    run: RawRun,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line numbers of the top-level keys and array rows, for error messages.
struct Lines<'a> {
    text: &'a str,
    costs: (Range<usize>, Vec<Range<usize>>),
    psi: (Range<usize>, Vec<Range<usize>>),
    h: Range<usize>,
    model: Range<usize>,
    traits: Option<Range<usize>>,
    run: Option<Range<usize>>,
}

impl Lines<'_> {
    /// Line of the value named by a key such as `psi[0][1]` or `model.c[0]`.
    fn of(&self, key: &str) -> usize {
        let head = key.split(['.', '[']).next().unwrap_or("");
        let row = key
            .strip_prefix(head)
            .and_then(|rest| rest.strip_prefix('['))
            .and_then(|rest| rest.split(']').next())
            .and_then(|k| k.parse::<usize>().ok());
        let pick = |(whole, rows): &(Range<usize>, Vec<Range<usize>>)| {
            row.and_then(|k| rows.get(k)).unwrap_or(whole).start
        };
        let offset = match head {
            "costs" => pick(&self.costs),
            "psi" => pick(&self.psi),
            "h" => self.h.start,
            "traits" => self.traits.as_ref().map_or(0, |r| r.start),
            "run" => self.run.as_ref().map_or(0, |r| r.start),
            _ => self.model.start,
        };
        line_of(self.text, offset)
    }

    fn schema(&self, key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
        let key = key.into();
        ConfigError::Schema {
            line: self.of(&key),
            key,
            reason: reason.into(),
        }
    }

    fn scenario_error(&self, e: ScenarioError) -> ConfigError {
        match e {
            ScenarioError::InvalidValue { key, reason } => self.schema(key, reason),
            ScenarioError::Dimension(msg) => {
                let key = ["costs", "psi", "h", "traits"]
                    .into_iter()
                    .find(|k| msg.starts_with(k))
                    .unwrap_or("model");
                self.schema(key, msg)
            }
            ScenarioError::Labels(msg) => self.schema("traits", msg),
            e @ ScenarioError::SlackViolation { .. } => self.schema("costs", e.to_string()),
            ScenarioError::MissingBounds(msg) => self.schema("model", msg),
            e => self.schema("model", e.to_string()),
        }
    }
}

/// First backquoted name in a message, if any.
fn quoted_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

/// Key assigned on the given line, e.g. `psi` in `psi = [[1.0]]`.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let l = text.lines().nth(line.checked_sub(1)?)?;
    let (k, _) = l.split_once('=')?;
    Some(k.trim().to_string())
}

fn parse_cost(entry: &CostEntry, i: usize, j: usize, lines: &Lines<'_>) -> Result<f64, ConfigError> {
    match entry {
        CostEntry::Number(x) => Ok(*x),
        CostEntry::Text(t) if matches!(t.trim(), "inf" | "+inf" | "Inf" | "infinity") => Ok(f64::INFINITY),
        CostEntry::Text(t) => Err(lines.schema(format!("costs[{i}][{j}]"), format!("expected a number or \"inf\", got {t:?}"))),
    }
}

fn require<T: Clone>(field: &Option<T>, name: &str, family: &str, lines: &Lines<'_>) -> Result<T, ConfigError> {
    field
        .clone()
        .ok_or_else(|| lines.schema(format!("model.{name}"), format!("required for family {family:?}")))
}

fn build_family(m: &RawModel, lines: &Lines<'_>) -> Result<GrowthFamily, ConfigError> {
    let family = m.family.as_str();
    let allowed: &[&str] = match family {
        "chemostat" => &["d", "c", "alpha"],
        "lotka_volterra" => &["r", "c"],
        "table" => &["base", "slope"],
        other => {
            return Err(lines.schema(
                "model.family",
                format!("unknown family {other:?}; expected chemostat, lotka_volterra or table"),
            ))
        }
    };
    let present = [
        ("d", m.d.is_some()),
        ("c", m.c.is_some()),
        ("alpha", m.alpha.is_some()),
        ("r", m.r.is_some()),
        ("base", m.base.is_some()),
        ("slope", m.slope.is_some()),
    ];
    if let Some((name, _)) = present.iter().find(|(name, set)| *set && !allowed.contains(name)) {
        return Err(lines.schema(format!("model.{name}"), format!("not a parameter of family {family:?}")));
    }
    Ok(match family {
        "chemostat" => GrowthFamily::Chemostat {
            d: require(&m.d, "d", family, lines)?,
            c: require(&m.c, "c", family, lines)?,
            alpha: require(&m.alpha, "alpha", family, lines)?,
        },
        "lotka_volterra" => GrowthFamily::LotkaVolterra {
            r: require(&m.r, "r", family, lines)?,
            c: require(&m.c, "c", family, lines)?,
        },
        _ => GrowthFamily::Table {
            base: require(&m.base, "base", family, lines)?,
            slope: require(&m.slope, "slope", family, lines)?,
        },
    })
}

fn build_run(raw: Option<&RawRun>, lines: &Lines<'_>) -> Result<RunParams, ConfigError> {
    let mut run = RunParams::default();
    let Some(raw) = raw else { return Ok(run) };
    if let Some(list) = &raw.eps_list {
        if list.is_empty() || list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(lines.schema("run.eps_list", "must be a non-empty list of positive numbers"));
        }
        if list.windows(2).any(|p| !(p[1] < p[0])) {
            return Err(lines.schema("run.eps_list", "must be strictly decreasing"));
        }
        run.eps_list = list.clone();
    }
    for (name, value, slot) in [("t_max", raw.t_max, &mut run.t_max), ("dt_out", raw.dt_out, &mut run.dt_out)] {
        if let Some(x) = value {
            if !(x.is_finite() && x > 0.0) {
                return Err(lines.schema(format!("run.{name}"), format!("must be positive, got {x}")));
            }
            *slot = x;
        }
    }
    if let Some(seed) = raw.seed {
        run.seed = seed;
    }
    Ok(run)
}

/// Parses and validates a scenario file's contents.
pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    toml::from_str::<toml::Table>(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let raw: RawConfig = toml::from_str(text).map_err(
        |e: toml::de::Error| {
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            let key = quoted_key(e.message())
                .or_else(|| key_on_line(text, line))
                .unwrap_or_default();
            ConfigError::Schema {
                key,
                line,
                reason: e.message().to_string(),
            }
        },
    )?;
    let lines = Lines {
        text,
        costs: (raw.costs.span(), raw.costs.get_ref().iter().map(|r| r.span()).collect()),
        psi: (raw.psi.span(), raw.psi.get_ref().iter().map(|r| r.span()).collect()),
        h: raw.h.span(),
        model: raw.model.span(),
        traits: raw.traits.as_ref().map(|t| t.span()),
        run: raw.run.as_ref().map(|r| r.span()),
    };

    let n = raw.costs.get_ref().len();
    let traits = match &raw.traits {
        Some(t) => TraitSpace::new(t.get_ref().iter().cloned()),
        None => TraitSpace::numbered(n),
    }
    .map_err(|e| lines.scenario_error(e))?;
    let mut costs = Vec::with_capacity(n);
    for (i, row) in raw.costs.get_ref().iter().enumerate() {
        let parsed: Result<Vec<f64>, _> = row.get_ref().iter().enumerate().map(|(j, c)| parse_cost(c, i, j, &lines)).collect();
        costs.push(parsed?);
    }
    let costs = MutationCosts::new(costs).map_err(|e| lines.scenario_error(e))?;
    let psi: Vec<Vec<f64>> = raw.psi.get_ref().iter().map(|r| r.get_ref().clone()).collect();
    let psi = ResourceWeights::new(psi).map_err(|e| lines.scenario_error(e))?;
    let h = InitialExponent::new(raw.h.get_ref().clone()).map_err(|e| lines.scenario_error(e))?;
    let model = raw.model.get_ref();
    let family = build_family(model, &lines)?;
    let declared = DeclaredBounds {
        a: model.a,
        m: model.m,
        v_min: model.v_min,
        v_max: model.v_max,
    };
    let scenario = Scenario::new(traits, costs, psi, GrowthModel::with_bounds(family, declared), h)
        .map_err(|e| lines.scenario_error(e))?;
    let run = build_run(raw.run.as_ref().map(|r| r.get_ref()), &lines)?;
    Ok(Config { scenario, run })
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

/// Serialises a configuration; parsing the result gives back an equal value.
pub fn to_toml_string(cfg: &Config) -> String {
    let s = &cfg.scenario;
    let costs = s
        .costs
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|&c| if c.is_finite() { CostEntry::Number(c) } else { CostEntry::Text("inf".into()) })
                .collect()
        })
        .collect();
    let mut model = RawModel {
        family: s.model.family.name().to_string(),
        a: s.model.declared.a,
        m: s.model.declared.m,
        v_min: s.model.declared.v_min,
        v_max: s.model.declared.v_max,
        ..Default::default()
    };
    match &s.model.family {
        GrowthFamily::Chemostat { d, c, alpha } => {
            model.d = Some(d.clone());
            model.c = Some(c.clone());
            model.alpha = Some(alpha.clone());
        }
        GrowthFamily::LotkaVolterra { r, c } => {
            model.r = Some(r.clone());
            model.c = Some(c.clone());
        }
        GrowthFamily::Table { base, slope } => {
            model.base = Some(base.clone());
            model.slope = Some(slope.clone());
        }
    }
    let out = OutConfig {
        traits: s.traits.labels(),
        costs,
        psi: s.psi.rows(),
        h: s.h.values(),
        model,
        run: RawRun {
            eps_list: Some(cfg.run.eps_list.clone()),
            t_max: Some(cfg.run.t_max),
            dt_out: Some(cfg.run.dt_out),
            seed: Some(cfg.run.seed),
        },
    };
    toml::to_string(&out).expect("configuration values are always representable")
}
