//! Scenario files.
//!
//! A config is a TOML document. Top-level keys `toll`, `occupancy`, `asymmetry`
//! and `policy`; tables `[demand]`, `[lane1]`, `[lane2]`, `[sweep.toll]`,
//! `[sweep.n]`, `[carpool]` and `[design]`. See the README for every key.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;
use tollane_core::design::DEFAULT_TOLL_DELTA;
use tollane_core::prelude::*;
use tollane_core::search::linspace;

type Span = Range<usize>;
type Result<T, E = ConfigError> = std::result::Result<T, E>;

/// A problem with a config file, anchored to a line when one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: ", self.origin, line)?,
            None => write!(f, "{}: ", self.origin)?,
        }
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Evenly spaced sweep: `steps` intervals from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepRange {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 0 {
            vec![self.start]
        } else {
            linspace(self.start, self.stop, self.steps + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSettings {
    pub objective: Objective,
    pub grid_steps: usize,
    pub delta: f64,
    pub tau_star: Option<f64>,
    pub n_candidates: Option<Vec<f64>>,
}

/// A validated config with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub base: ThresholdBase,
    pub occupancy: Option<f64>,
    pub scenario: Option<Scenario>,
    pub toll_sweep: SweepRange,
    pub n_sweep: SweepRange,
    pub carpool: Option<CarpoolModel>,
    pub design: DesignSettings,
}

const DEFAULT_TOLL_SWEEP: SweepRange = SweepRange {
    start: 0.0,
    stop: 1.0,
    steps: 100,
};

const DEFAULT_N_SWEEP: SweepRange = SweepRange {
    start: 2.0,
    stop: 4.0,
    steps: 40,
};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    toll: Option<Spanned<f64>>,
    occupancy: Option<Spanned<f64>>,
    asymmetry: Spanned<f64>,
    policy: Option<Spanned<RawPolicy>>,
    demand: Option<Spanned<RawDemand>>,
    lane1: Spanned<RawDelay>,
    lane2: Spanned<RawDelay>,
    sweep: Option<RawSweeps>,
    carpool: Option<Spanned<RawCarpool>>,
    design: Option<Spanned<RawDesign>>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawPolicy {
    Named(String),
    Pins { pin_hv_ho: bool, pin_av_lo: bool },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    hv_lo: Spanned<f64>,
    hv_ho: Spanned<f64>,
    av_lo: Spanned<f64>,
    av_ho: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelay {
    free_flow: Spanned<f64>,
    gain: Spanned<f64>,
    exponent: Spanned<f64>,
    capacity: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweeps {
    toll: Option<Spanned<RawSweep>>,
    n: Option<Spanned<RawSweep>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    start: f64,
    stop: f64,
    steps: usize,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawProbability {
    Named(String),
    Constant(f64),
    Table(Vec<(f64, f64)>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCarpool {
    hv_total: Spanned<f64>,
    av_total: Spanned<f64>,
    probability: Spanned<RawProbability>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    objective: Option<Spanned<String>>,
    grid_steps: Option<Spanned<usize>>,
    delta: Option<Spanned<f64>>,
    tau_star: Option<Spanned<f64>>,
    n_candidates: Option<Spanned<Vec<f64>>>,
}

struct Ctx<'a> {
    origin: &'a str,
    src: &'a str,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        let end = offset.min(self.src.len());
        self.src.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Option<Span>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.origin.to_string(),
            line: span.map(|s| self.line(s.start)),
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Maps a model validation error to the key that produced it.
    fn anchor<T>(
        &self,
        r: tollane_core::Result<T>,
        table: &str,
        keys: &[(&str, Span)],
        fallback: Span,
    ) -> Result<T, ConfigError> {
        r.map_err(|e| {
            let (key, span) = match &e {
                Error::InvalidParameter { name, .. } => keys
                    .iter()
                    .find(|(k, _)| name.ends_with(k))
                    .map(|(k, s)| (qualify(table, k), s.clone()))
                    .unwrap_or_else(|| (table.to_string(), fallback.clone())),
                _ => (table.to_string(), fallback.clone()),
            };
            self.err(Some(span), &key, e.to_string())
        })
    }
}

fn qualify(table: &str, key: &str) -> String {
    if table.is_empty() {
        key.to_string()
    } else {
        format!("{table}.{key}")
    }
}

fn parse_policy(ctx: &Ctx, raw: Option<Spanned<RawPolicy>>) -> Result<LanePolicy, ConfigError> {
    let Some(raw) = raw else {
        return Ok(LanePolicy::baseline());
    };
    let span = raw.span();
    match raw.into_inner() {
        RawPolicy::Named(name) => name
            .parse::<PolicyKind>()
            .map(LanePolicy::from)
            .map_err(|e| ctx.err(Some(span), "policy", e)),
        RawPolicy::Pins { pin_hv_ho, pin_av_lo } => Ok(LanePolicy::new(pin_hv_ho, pin_av_lo)),
    }
}

fn parse_delay(ctx: &Ctx, name: &str, raw: Spanned<RawDelay>) -> Result<DelayFunction, ConfigError> {
    let span = raw.span();
    let d = raw.into_inner();
    let keys = [
        ("free_flow", d.free_flow.span()),
        ("gain", d.gain.span()),
        ("exponent", d.exponent.span()),
        ("capacity", d.capacity.span()),
    ];
    let r = DelayFunction::bpr(
        *d.free_flow.get_ref(),
        *d.gain.get_ref(),
        *d.exponent.get_ref(),
        *d.capacity.get_ref(),
    );
    ctx.anchor(r, name, &keys, span)
}

fn parse_demand(ctx: &Ctx, raw: Spanned<RawDemand>) -> Result<DemandProfile, ConfigError> {
    let span = raw.span();
    let d = raw.into_inner();
    let keys = [
        ("hv_lo", d.hv_lo.span()),
        ("hv_ho", d.hv_ho.span()),
        ("av_lo", d.av_lo.span()),
        ("av_ho", d.av_ho.span()),
    ];
    let r = DemandProfile::new(
        *d.hv_lo.get_ref(),
        *d.hv_ho.get_ref(),
        *d.av_lo.get_ref(),
        *d.av_ho.get_ref(),
    );
    ctx.anchor(r, "demand", &keys, span)
}

fn parse_sweep(
    ctx: &Ctx,
    name: &str,
    raw: Option<Spanned<RawSweep>>,
    default: SweepRange,
    min: f64,
) -> Result<SweepRange, ConfigError> {
    let Some(raw) = raw else {
        return Ok(default);
    };
    let span = raw.span();
    let r = raw.into_inner();
    let key = format!("sweep.{name}");
    if !(r.start.is_finite() && r.stop.is_finite()) {
        return Err(ctx.err(Some(span), &key, "start and stop must be finite"));
    }
    if r.start < min {
        return Err(ctx.err(Some(span), &key, format!("start {} is below {min}", r.start)));
    }
    if r.steps > 0 && r.stop <= r.start {
        return Err(ctx.err(Some(span), &key, "stop must exceed start when steps > 0"));
    }
    Ok(SweepRange {
        start: r.start,
        stop: r.stop,
        steps: r.steps,
    })
}

fn parse_carpool(ctx: &Ctx, raw: Spanned<RawCarpool>) -> Result<CarpoolModel, ConfigError> {
    let span = raw.span();
    let c = raw.into_inner();
    let prob_span = c.probability.span();
    let prob = match c.probability.into_inner() {
        RawProbability::Named(name) if name == "reciprocal" => CarpoolProbability::Reciprocal,
        RawProbability::Named(name) => {
            return Err(ctx.err(
                Some(prob_span),
                "carpool.probability",
                format!("unknown probability model `{name}` (expected \"reciprocal\", a number, or a table)"),
            ))
        }
        RawProbability::Constant(p) => CarpoolProbability::Constant(p),
        RawProbability::Table(rows) => CarpoolProbability::Table(rows),
    };
    let keys = [
        ("hv_total", c.hv_total.span()),
        ("av_total", c.av_total.span()),
        ("probability", prob_span.clone()),
        ("commuter totals", span.clone()),
    ];
    match CarpoolModel::new(*c.hv_total.get_ref(), *c.av_total.get_ref(), prob) {
        Err(Error::Precondition(msg)) => Err(ctx.err(Some(prob_span), "carpool.probability", msg)),
        r => ctx.anchor(r, "carpool", &keys, span),
    }
}

fn parse_design(ctx: &Ctx, raw: Option<Spanned<RawDesign>>) -> Result<DesignSettings, ConfigError> {
    let mut out = DesignSettings {
        objective: Objective::BestCase,
        grid_steps: tollane_core::design::DEFAULT_GRID_STEPS,
        delta: DEFAULT_TOLL_DELTA,
        tau_star: None,
        n_candidates: None,
    };
    let Some(raw) = raw else {
        return Ok(out);
    };
    let d = raw.into_inner();
    if let Some(o) = d.objective {
        let span = o.span();
        out.objective = o
            .into_inner()
            .parse()
            .map_err(|e: String| ctx.err(Some(span), "design.objective", e))?;
    }
    if let Some(g) = d.grid_steps {
        if *g.get_ref() < 3 {
            return Err(ctx.err(Some(g.span()), "design.grid_steps", "must be at least 3"));
        }
        out.grid_steps = g.into_inner();
    }
    if let Some(delta) = d.delta {
        let v = *delta.get_ref();
        if !(v.is_finite() && v > 0.0) {
            return Err(ctx.err(Some(delta.span()), "design.delta", "must be positive"));
        }
        out.delta = v;
    }
    if let Some(t) = d.tau_star {
        let v = *t.get_ref();
        if !(v.is_finite() && v > 0.0) {
            return Err(ctx.err(Some(t.span()), "design.tau_star", "must be positive"));
        }
        out.tau_star = Some(v);
    }
    if let Some(ns) = d.n_candidates {
        let span = ns.span();
        let ns = ns.into_inner();
        if ns.is_empty() || ns.iter().any(|n| !(n.is_finite() && *n >= 2.0)) {
            return Err(ctx.err(Some(span), "design.n_candidates", "must be a nonempty list of values >= 2"));
        }
        out.n_candidates = Some(ns);
    }
    Ok(out)
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config, ConfigError> {
        let origin = path.display().to_string();
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: origin.clone(),
            line: None,
            key: String::new(),
            message: format!("cannot read config: {e}"),
        })?;
        Config::parse(&src, &origin)
    }

    /// Parses config text; `origin` names the source in diagnostics.
    pub fn parse(src: &str, origin: &str) -> Result<Config, ConfigError> {
        let ctx = Ctx { origin, src };
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            ctx.err(e.span(), "", e.message().trim_end().to_string())
        })?;

        let toll_span = raw.toll.as_ref().map(|t| t.span()).unwrap_or(0..0);
        let toll = raw.toll.map(|t| t.into_inner()).unwrap_or(0.0);
        let asym_span = raw.asymmetry.span();
        let asymmetry = raw.asymmetry.into_inner();
        let occ_span = raw.occupancy.as_ref().map(|o| o.span()).unwrap_or(0..0);
        let occupancy = raw.occupancy.map(|o| o.into_inner());
        let top_keys = [
            ("toll", toll_span.clone()),
            ("occupancy", occ_span.clone()),
            ("asymmetry", asym_span.clone()),
        ];

        let policy = parse_policy(&ctx, raw.policy)?;
        let delay_lane1 = parse_delay(&ctx, "lane1", raw.lane1)?;
        let delay_lane2 = parse_delay(&ctx, "lane2", raw.lane2)?;
        let demand_span = raw.demand.as_ref().map(|d| d.span());
        let demand = raw.demand.map(|d| parse_demand(&ctx, d)).transpose()?;
        let sweeps = raw.sweep.unwrap_or(RawSweeps { toll: None, n: None });
        let toll_sweep = parse_sweep(&ctx, "toll", sweeps.toll, DEFAULT_TOLL_SWEEP, 0.0)?;
        let n_sweep = parse_sweep(&ctx, "n", sweeps.n, DEFAULT_N_SWEEP, 2.0)?;
        let carpool = raw.carpool.map(|c| parse_carpool(&ctx, c)).transpose()?;
        let design = parse_design(&ctx, raw.design)?;

        let base = ThresholdBase {
            delay_lane1,
            delay_lane2,
            toll,
            asymmetry,
            policy,
        };
        let scenario = match (demand, occupancy) {
            (Some(demand), Some(n)) => Some(ctx.anchor(
                Scenario::new(delay_lane1, delay_lane2, demand, toll, n, asymmetry, policy),
                "",
                &top_keys,
                0..0,
            )?),
            (Some(_), None) => {
                return Err(ctx.err(demand_span, "occupancy", "required when [demand] is given"));
            }
            (None, _) => None,
        };
        match (&scenario, &carpool) {
            (None, None) => {
                return Err(ctx.err(None, "", "config needs a [demand] table, a [carpool] table, or both"));
            }
            (None, Some(cm)) => {
                ctx.anchor(base.scenario(cm, occupancy.unwrap_or(2.0)), "", &top_keys, 0..0)?;
            }
            _ => {}
        }
        Ok(Config {
            base,
            occupancy,
            scenario,
            toll_sweep,
            n_sweep,
            carpool,
            design,
        })
    }

    /// Serializes the resolved config, defaults included, back to TOML.
    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Delay {
            free_flow: f64,
            gain: f64,
            exponent: f64,
            capacity: f64,
        }
        #[derive(Serialize)]
        struct Demand {
            hv_lo: f64,
            hv_ho: f64,
            av_lo: f64,
            av_ho: f64,
        }
        #[derive(Serialize)]
        struct Sweeps {
            toll: SweepRange,
            n: SweepRange,
        }
        #[derive(Serialize)]
        struct Carpool {
            hv_total: f64,
            av_total: f64,
            probability: RawProbability,
        }
        #[derive(Serialize)]
        struct Design {
            objective: &'static str,
            grid_steps: usize,
            delta: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            tau_star: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            n_candidates: Option<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct Out {
            toll: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            occupancy: Option<f64>,
            asymmetry: f64,
            policy: RawPolicy,
            #[serde(skip_serializing_if = "Option::is_none")]
            demand: Option<Demand>,
            lane1: Delay,
            lane2: Delay,
            sweep: Sweeps,
            #[serde(skip_serializing_if = "Option::is_none")]
            carpool: Option<Carpool>,
            design: Design,
        }
        let delay = |d: &DelayFunction| Delay {
            free_flow: d.free_flow(),
            gain: d.gain(),
            exponent: d.exponent(),
            capacity: d.capacity(),
        };
        let p = self.base.policy;
        let policy = match p.kind() {
            Some(kind) => RawPolicy::Named(kind.name().to_string()),
            None => RawPolicy::Pins {
                pin_hv_ho: p.is_pinned(TolledClass::HvHo),
                pin_av_lo: p.is_pinned(TolledClass::AvLo),
            },
        };
        let out = Out {
            toll: self.base.toll,
            occupancy: self.occupancy,
            asymmetry: self.base.asymmetry,
            policy,
            demand: self.scenario.map(|s| {
                let d = s.demand();
                Demand {
                    hv_lo: d.hv_lo(),
                    hv_ho: d.hv_ho(),
                    av_lo: d.av_lo(),
                    av_ho: d.av_ho(),
                }
            }),
            lane1: delay(&self.base.delay_lane1),
            lane2: delay(&self.base.delay_lane2),
            sweep: Sweeps {
                toll: self.toll_sweep,
                n: self.n_sweep,
            },
            carpool: self.carpool.as_ref().map(|c| Carpool {
                hv_total: c.hv_total(),
                av_total: c.av_total(),
                probability: match c.carpool_prob() {
                    CarpoolProbability::Reciprocal => RawProbability::Named("reciprocal".into()),
                    CarpoolProbability::Constant(p) => RawProbability::Constant(*p),
                    CarpoolProbability::Table(rows) => RawProbability::Table(rows.clone()),
                },
            }),
            design: Design {
                objective: self.design.objective.name(),
                grid_steps: self.design.grid_steps,
                delta: self.design.delta,
                tau_star: self.design.tau_star,
                n_candidates: self.design.n_candidates.clone(),
            },
        };
        toml::to_string(&out).expect("plain data serializes")
    }

    pub fn require_scenario(&self) -> Result<&Scenario, ConfigError> {
        self.scenario.as_ref().ok_or_else(|| ConfigError {
            origin: "config".into(),
            line: None,
            key: "demand".into(),
            message: "this command needs a [demand] table and `occupancy`".into(),
        })
    }

    pub fn require_carpool(&self) -> Result<&CarpoolModel, ConfigError> {
        self.carpool.as_ref().ok_or_else(|| ConfigError {
            origin: "config".into(),
            line: None,
            key: "carpool".into(),
            message: "this command needs a [carpool] table".into(),
        })
    }
}
