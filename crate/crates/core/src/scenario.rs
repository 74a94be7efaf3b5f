//! Scenario files: TOML configuration for the command-line pipelines.
//!
//! Plain numbers are taken in internal units (rad/ns for angular
//! frequencies, 1/ns for decay rates, ns for pulse times, µs for protocol
//! times, rad for phases). Strings carry an explicit unit:
//!
//! * frequencies: `"15 GHz"`, `"6.9 MHz"`, `"kHz"`, `"Hz"` mean `2π ×` the value;
//!   `"rad/ns"` is taken as is
//! * times: `"ps"`, `"ns"`, `"us"`/`"µs"`, `"ms"`
//! * phases: `"rad"`, `"turn"` (`2π`), `"deg"`
//! * rates: `"/ns"` or `"1/ns"`
//!
//! Every error names the dotted key it concerns.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;
use toml::{Table, Value};

use crate::cavity::CavityDesign;
use crate::dynamics::{DonorParams, IonParams, TimeGrid};
use crate::error::{Error, Result};
use crate::optimizer::{OptimizationSpec, PulseBounds, Side};
use crate::protocol::{self, ProtocolParams, ProtocolReport};
use crate::pulse::{PulseParam, PulseShape};

/// Upper bound on excitation probabilities accepted by the protocol model.
pub const WEAK_EXCITATION_BOUND: f64 = 0.1;

/// Sweep key that sets both excitation probabilities at once.
pub const P1_ALIAS: &str = "p1";

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub tolerance: f64,
    pub max_step: f64,
    pub output_step: f64,
    /// Explicit window; the per-system default window is used when absent.
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            tolerance: TimeGrid::<f64>::DEFAULT_TOLERANCE,
            max_step: TimeGrid::<f64>::DEFAULT_MAX_STEP,
            output_step: TimeGrid::<f64>::DEFAULT_OUTPUT_STEP,
            t_start: None,
            t_end: None,
        }
    }
}

impl GridSettings {
    /// Window for a system whose default window is `default`.
    pub fn resolve(&self, default: TimeGrid<f64>) -> TimeGrid<f64> {
        TimeGrid {
            t_start: self.t_start.unwrap_or(default.t_start),
            t_end: self.t_end.unwrap_or(default.t_end),
            max_step: self.max_step,
            tolerance: self.tolerance,
            output_step: Some(self.output_step),
        }
    }

    /// Step settings only; windows are chosen per candidate.
    pub fn template(&self) -> TimeGrid<f64> {
        self.resolve(TimeGrid::new(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    pub free_side: Side,
    /// Defaults to the free side's protocol excitation probability.
    pub target_p1: f64,
    pub p1_tolerance: f64,
    pub max_evaluations: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_sweeps: usize,
    pub bounds: PulseBounds<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMapConfig {
    pub q_min: f64,
    pub q_max: f64,
    pub q_points: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub v_points: usize,
    pub design: CavityDesign<f64>,
}

/// Artifact file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub summary: String,
    pub protocol_report: String,
    pub optimizer_log: String,
    pub optimized_pulse: String,
    pub cavity_map: String,
    pub cavity_summary: String,
    pub sweep: String,
    pub donor_trajectory: Option<String>,
    pub ion_trajectory: Option<String>,
    pub donor_photon: Option<String>,
    pub ion_photon: Option<String>,
    pub overlap: Option<String>,
}

impl Outputs {
    fn entries(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("summary", Some(&self.summary)),
            ("protocol_report", Some(&self.protocol_report)),
            ("optimizer_log", Some(&self.optimizer_log)),
            ("optimized_pulse", Some(&self.optimized_pulse)),
            ("cavity_map", Some(&self.cavity_map)),
            ("cavity_summary", Some(&self.cavity_summary)),
            ("sweep", Some(&self.sweep)),
            ("donor_trajectory", self.donor_trajectory.as_ref()),
            ("ion_trajectory", self.ion_trajectory.as_ref()),
            ("donor_photon", self.donor_photon.as_ref()),
            ("ion_photon", self.ion_photon.as_ref()),
            ("overlap", self.overlap.as_ref()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub donor: DonorParams<f64>,
    /// Factor used for each `≫` of the bad-cavity chain.
    pub bad_cavity_factor: f64,
    pub ion: IonParams<f64>,
    pub grid: GridSettings,
    pub protocol: ProtocolParams<f64>,
    /// Optional measured overlap; when given, `protocol` skips the dynamics.
    pub protocol_overlap: Option<f64>,
    pub optimization: Option<OptimizationConfig>,
    pub cavity: CavityMapConfig,
    pub outputs: Outputs,
}

fn cfg(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::config(key, reason)
}

/// Re-tags a parameter error with the section it came from.
fn in_section(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => cfg(format!("{prefix}.{name}"), reason),
        other => other,
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Plain,
    Frequency,
    Rate,
    TimeNs,
    TimeUs,
    Phase,
}

fn split_quantity(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || ((c == 'e' || c == 'E') && i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(end);
    let value: f64 = num.trim().parse().ok()?;
    Some((value, unit.trim()))
}

fn convert(kind: Kind, value: f64, unit: &str) -> Option<f64> {
    let u = unit;
    match kind {
        Kind::Plain => u.is_empty().then_some(value),
        Kind::Frequency => match u {
            "" | "rad/ns" => Some(value),
            "GHz" => Some(TAU * value),
            "MHz" => Some(TAU * value * 1e-3),
            "kHz" => Some(TAU * value * 1e-6),
            "Hz" => Some(TAU * value * 1e-9),
            _ => None,
        },
        Kind::Rate => match u {
            "" | "/ns" | "1/ns" => Some(value),
            _ => None,
        },
        Kind::TimeNs | Kind::TimeUs => {
            let ns = match u {
                "ps" => value * 1e-3,
                "ns" => value,
                "us" | "µs" | "μs" => value * 1e3,
                "ms" => value * 1e6,
                "" => return Some(value),
                _ => return None,
            };
            Some(if matches!(kind, Kind::TimeUs) { ns * 1e-3 } else { ns })
        }
        Kind::Phase => match u {
            "" | "rad" => Some(value),
            "turn" | "turns" => Some(TAU * value),
            "deg" => Some(value.to_radians()),
            _ => None,
        },
    }
}

fn unit_hint(kind: Kind) -> &'static str {
    match kind {
        Kind::Plain => "a number",
        Kind::Frequency => "a number in rad/ns or a string with GHz/MHz/kHz/Hz",
        Kind::Rate => "a number in 1/ns or a string with /ns",
        Kind::TimeNs => "a number in ns or a string with ps/ns/us/ms",
        Kind::TimeUs => "a number in µs or a string with ps/ns/us/ms",
        Kind::Phase => "a number in rad or a string with rad/turn/deg",
    }
}

/// A TOML table being consumed; remembers which keys were read so that
/// leftovers can be reported.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    seen: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn root(table: &'a Table) -> Self {
        Section { path: String::new(), table: Some(table), seen: BTreeSet::new() }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &str) -> Option<&'a Value> {
        self.seen.insert(k.to_string());
        self.table.and_then(|t| t.get(k))
    }

    fn sub(&mut self, k: &str) -> Result<Section<'a>> {
        let path = self.key(k);
        let table = match self.raw(k) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(cfg(path, "expected a table")),
        };
        Ok(Section { path, table, seen: BTreeSet::new() })
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn quantity(&mut self, k: &str, kind: Kind) -> Result<Option<f64>> {
        let key = self.key(k);
        let v = match self.raw(k) {
            None => return Ok(None),
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(Value::String(s)) => {
                let (x, unit) = split_quantity(s)
                    .ok_or_else(|| cfg(&key, format!("cannot parse `{s}`; expected {}", unit_hint(kind))))?;
                convert(kind, x, unit)
                    .ok_or_else(|| cfg(&key, format!("unknown unit `{unit}`; expected {}", unit_hint(kind))))?
            }
            Some(_) => return Err(cfg(key, format!("expected {}", unit_hint(kind)))),
        };
        if !v.is_finite() {
            return Err(cfg(key, "must be finite"));
        }
        Ok(Some(v))
    }

    fn required(&mut self, k: &str, kind: Kind) -> Result<f64> {
        self.quantity(k, kind)?.ok_or_else(|| cfg(self.key(k), "missing required value"))
    }

    fn or(&mut self, k: &str, kind: Kind, default: f64) -> Result<f64> {
        Ok(self.quantity(k, kind)?.unwrap_or(default))
    }

    fn integer(&mut self, k: &str, default: u64) -> Result<u64> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(cfg(key, "expected a non-negative integer")),
        }
    }

    fn string(&mut self, k: &str) -> Result<Option<String>> {
        let key = self.key(k);
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(cfg(key, "expected a string")),
        }
    }

    fn pair(&mut self, k: &str, kind: Kind) -> Result<Option<[f64; 2]>> {
        let key = self.key(k);
        let arr = match self.raw(k) {
            None => return Ok(None),
            Some(Value::Array(a)) if a.len() == 2 => a,
            Some(_) => return Err(cfg(key, "expected a two-element array [lo, hi]")),
        };
        let mut out = [0.0; 2];
        for (slot, v) in out.iter_mut().zip(arr) {
            let mut t = Table::new();
            t.insert("v".into(), v.clone());
            let mut s = Section { path: key.clone(), table: Some(&t), seen: BTreeSet::new() };
            *slot = s.quantity("v", kind).map_err(|_| cfg(&key, format!("bounds must be {}", unit_hint(kind))))?.unwrap();
        }
        Ok(Some(out))
    }

    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.seen.contains(*k)) {
                return Err(cfg(self.key(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn param_kind(p: PulseParam) -> Kind {
    match p {
        PulseParam::Sigma1 | PulseParam::Sigma2 | PulseParam::Tau | PulseParam::THold => Kind::TimeNs,
        PulseParam::OmegaMax | PulseParam::Theta1 => Kind::Frequency,
        PulseParam::Theta0 => Kind::Phase,
    }
}

fn read_pulse(s: &mut Section) -> Result<PulseShape<f64>> {
    let mut p = s.sub("pulse")?;
    if !p.present() {
        return Err(cfg(p.path, "missing required table"));
    }
    let pulse = PulseShape {
        sigma1: p.required("sigma1", Kind::TimeNs)?,
        sigma2: p.required("sigma2", Kind::TimeNs)?,
        tau: p.required("tau", Kind::TimeNs)?,
        t_hold: p.or("t_hold", Kind::TimeNs, 0.0)?,
        omega_max: p.required("omega_max", Kind::Frequency)?,
        theta0: p.or("theta0", Kind::Phase, 0.0)?,
        theta1: p.or("theta1", Kind::Frequency, 0.0)?,
    };
    let path = p.path.clone();
    p.finish()?;
    pulse.validate().map_err(|e| in_section(&path, e))?;
    Ok(pulse)
}

/// Decay rate given either directly or as a lifetime.
fn read_decay(s: &mut Section, rate_key: &str, default: f64) -> Result<f64> {
    let rate = s.quantity(rate_key, Kind::Rate)?;
    let lifetime = s.quantity("lifetime", Kind::TimeNs)?;
    match (rate, lifetime) {
        (Some(_), Some(_)) => Err(cfg(s.key("lifetime"), format!("conflicts with `{}`", s.key(rate_key)))),
        (Some(r), None) => Ok(r),
        (None, Some(l)) if l > 0.0 => Ok(1.0 / l),
        (None, Some(_)) => Err(cfg(s.key("lifetime"), "must be > 0")),
        (None, None) => Ok(default),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = e
                .span()
                .map(|sp| {
                    let line = text[..sp.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<document>".into());
            cfg(key, msg)
        })?;
        Self::from_table(&table)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn from_table(table: &Table) -> Result<Self> {
        let mut root = Section::root(table);

        let mut d = root.sub("donor")?;
        if !d.present() {
            return Err(cfg("donor", "missing required table"));
        }
        let donor = DonorParams {
            delta: d.required("delta", Kind::Frequency)?,
            g: d.required("g", Kind::Frequency)?,
            kappa: d.required("kappa", Kind::Frequency)?,
            gamma_in: read_decay(&mut d, "gamma_in", DonorParams::<f64>::default_gamma())?,
            pulse: read_pulse(&mut d)?,
        };
        let bad_cavity_factor = d.or("bad_cavity_factor", Kind::Plain, 3.0)?;
        if !(bad_cavity_factor >= 1.0) {
            return Err(cfg("donor.bad_cavity_factor", "must be >= 1"));
        }
        d.finish()?;
        donor.validate().map_err(|e| in_section("donor", e))?;

        let mut i = root.sub("ion")?;
        if !i.present() {
            return Err(cfg("ion", "missing required table"));
        }
        let ion = IonParams {
            gamma_yb: read_decay(&mut i, "gamma_yb", IonParams::<f64>::default_gamma())?,
            pulse: read_pulse(&mut i)?,
        };
        i.finish()?;
        ion.validate().map_err(|e| in_section("ion", e))?;

        let mut g = root.sub("grid")?;
        let dg = GridSettings::default();
        let grid = GridSettings {
            tolerance: g.or("tolerance", Kind::Plain, dg.tolerance)?,
            max_step: g.or("max_step", Kind::TimeNs, dg.max_step)?,
            output_step: g.or("output_step", Kind::TimeNs, dg.output_step)?,
            t_start: g.quantity("t_start", Kind::TimeNs)?,
            t_end: g.quantity("t_end", Kind::TimeNs)?,
        };
        g.finish()?;
        if !(grid.tolerance > 0.0) {
            return Err(cfg("grid.tolerance", "must be > 0"));
        }
        if !(grid.max_step > 0.0) {
            return Err(cfg("grid.max_step", "must be > 0"));
        }
        if !(grid.output_step >= 0.0) {
            return Err(cfg("grid.output_step", "must be >= 0"));
        }
        if let (Some(a), Some(b)) = (grid.t_start, grid.t_end) {
            if !(a < b) {
                return Err(cfg("grid.t_end", "must exceed grid.t_start"));
            }
        }

        let mut p = root.sub("protocol")?;
        let dp = ProtocolParams::<f64>::default();
        let protocol = ProtocolParams {
            p1_yb: p.or("p1_yb", Kind::Plain, dp.p1_yb)?,
            p1_in: p.or("p1_in", Kind::Plain, dp.p1_in)?,
            p2_yb: p.or("p2_yb", Kind::Plain, dp.p2_yb)?,
            p2_in: p.or("p2_in", Kind::Plain, dp.p2_in)?,
            eta: p.or("eta", Kind::Plain, dp.eta)?,
            f_dyn: p.or("f_dyn", Kind::Plain, dp.f_dyn)?,
            delta_phi: p.or("delta_phi", Kind::Phase, dp.delta_phi)?,
            t_init: p.or("t_init", Kind::TimeUs, dp.t_init)?,
            t_pulse: p.or("t_pulse", Kind::TimeUs, dp.t_pulse)?,
            t_readout: p.or("t_readout", Kind::TimeUs, dp.t_readout)?,
        };
        let protocol_overlap = p.quantity("re_overlap", Kind::Plain)?;
        p.finish()?;
        protocol.validate().map_err(|e| in_section("protocol", e))?;
        for (k, v) in [("p1_yb", protocol.p1_yb), ("p1_in", protocol.p1_in)] {
            if v > WEAK_EXCITATION_BOUND {
                return Err(cfg(
                    format!("protocol.{k}"),
                    format!("{v} violates the weak-excitation bound p1 <= {WEAK_EXCITATION_BOUND}"),
                ));
            }
        }
        if let Some(o) = protocol_overlap {
            if !(-1.0..=1.0).contains(&o) {
                return Err(cfg("protocol.re_overlap", "must lie in [-1, 1]"));
            }
        }

        let mut o = root.sub("optimization")?;
        let optimization = if o.present() {
            let free_side = match o.string("free_side")?.as_deref() {
                None | Some("donor") => Side::Donor,
                Some("ion") => Side::Ion,
                Some(other) => return Err(cfg("optimization.free_side", format!("`{other}` is not `donor` or `ion`"))),
            };
            let default_target = match free_side {
                Side::Donor => protocol.p1_in,
                Side::Ion => protocol.p1_yb,
            };
            let start = match free_side {
                Side::Donor => donor.pulse,
                Side::Ion => ion.pulse,
            };
            let mut bounds = PulseBounds::around(&start);
            let mut b = o.sub("bounds")?;
            for param in PulseParam::ALL {
                if let Some(pair) = b.pair(param.name(), param_kind(param))? {
                    set_bound(&mut bounds, param, pair);
                }
            }
            b.finish()?;
            let cfg_opt = OptimizationConfig {
                free_side,
                target_p1: o.or("target_p1", Kind::Plain, default_target)?,
                p1_tolerance: o.or("p1_tolerance", Kind::Plain, 1e-4)?,
                max_evaluations: o.integer("max_evaluations", 400)? as usize,
                seed: o.integer("seed", 0)?,
                restarts: o.integer("restarts", 0)? as usize,
                max_sweeps: o.integer("max_sweeps", 4)? as usize,
                bounds,
            };
            o.finish()?;
            let spec = cfg_opt.spec(&donor, &ion);
            spec.validate().map_err(|e| in_section("optimization", e))?;
            if !bounds.contains(&start) {
                return Err(cfg("optimization.bounds", "starting pulse lies outside the bounds"));
            }
            Some(cfg_opt)
        } else {
            None
        };

        let mut c = root.sub("cavity")?;
        let mut design = CavityDesign::new(1.0, 1.0);
        design.gamma = donor.gamma_in;
        design.wavelength = c.or("wavelength", Kind::Plain, design.wavelength)?;
        design.refractive_index = c.or("refractive_index", Kind::Plain, design.refractive_index)?;
        design.gamma = read_decay(&mut c, "gamma", design.gamma)?;
        let cavity = CavityMapConfig {
            q_min: c.or("q_min", Kind::Plain, 1e2)?,
            q_max: c.or("q_max", Kind::Plain, 1e7)?,
            q_points: c.integer("q_points", 100)? as usize,
            v_min: c.or("v_min", Kind::Plain, 0.1)?,
            v_max: c.or("v_max", Kind::Plain, 100.0)?,
            v_points: c.integer("v_points", 100)? as usize,
            design,
        };
        c.finish()?;
        design.validate().map_err(|e| in_section("cavity", e))?;
        for (k, lo, hi, n) in [
            ("q", cavity.q_min, cavity.q_max, cavity.q_points),
            ("v", cavity.v_min, cavity.v_max, cavity.v_points),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(cfg(format!("cavity.{k}_max"), format!("requires 0 < {k}_min <= {k}_max")));
            }
            if n == 0 {
                return Err(cfg(format!("cavity.{k}_points"), "must be > 0"));
            }
        }

        let mut out = root.sub("outputs")?;
        let outputs = Outputs {
            summary: out.string("summary")?.unwrap_or_else(|| "summary.json".into()),
            protocol_report: out.string("protocol_report")?.unwrap_or_else(|| "protocol.json".into()),
            optimizer_log: out.string("optimizer_log")?.unwrap_or_else(|| "optimizer_log.csv".into()),
            optimized_pulse: out.string("optimized_pulse")?.unwrap_or_else(|| "optimized_pulse.json".into()),
            cavity_map: out.string("cavity_map")?.unwrap_or_else(|| "cavity_map.csv".into()),
            cavity_summary: out.string("cavity_summary")?.unwrap_or_else(|| "cavity_summary.json".into()),
            sweep: out.string("sweep")?.unwrap_or_else(|| "sweep.csv".into()),
            donor_trajectory: out.string("donor_trajectory")?,
            ion_trajectory: out.string("ion_trajectory")?,
            donor_photon: out.string("donor_photon")?,
            ion_photon: out.string("ion_photon")?,
            overlap: out.string("overlap")?,
        };
        out.finish()?;
        let mut names = BTreeSet::new();
        for (k, v) in outputs.entries() {
            if let Some(v) = v {
                if v.is_empty() {
                    return Err(cfg(format!("outputs.{k}"), "empty file name"));
                }
                if !names.insert(v.clone()) {
                    return Err(cfg(format!("outputs.{k}"), format!("path `{v}` is used by another output")));
                }
            }
        }

        root.finish()?;
        Ok(Scenario {
            donor,
            bad_cavity_factor,
            ion,
            grid,
            protocol,
            protocol_overlap,
            optimization,
            cavity,
            outputs,
        })
    }

    pub fn donor_grid(&self) -> TimeGrid<f64> {
        self.grid.resolve(self.donor.default_grid())
    }

    pub fn ion_grid(&self) -> TimeGrid<f64> {
        self.grid.resolve(self.ion.default_grid())
    }

    /// Fully resolved configuration in internal units. Parsing it back
    /// yields the same scenario.
    pub fn to_table(&self) -> Table {
        fn f(x: f64) -> Value {
            Value::Float(x)
        }
        fn pulse_table(p: &PulseShape<f64>) -> Table {
            PulseParam::ALL.iter().map(|&k| (k.name().to_string(), f(p.get(k)))).collect()
        }
        let mut root = Table::new();

        let mut d = Table::new();
        d.insert("delta".into(), f(self.donor.delta));
        d.insert("g".into(), f(self.donor.g));
        d.insert("kappa".into(), f(self.donor.kappa));
        d.insert("gamma_in".into(), f(self.donor.gamma_in));
        d.insert("bad_cavity_factor".into(), f(self.bad_cavity_factor));
        d.insert("pulse".into(), Value::Table(pulse_table(&self.donor.pulse)));
        root.insert("donor".into(), Value::Table(d));

        let mut i = Table::new();
        i.insert("gamma_yb".into(), f(self.ion.gamma_yb));
        i.insert("pulse".into(), Value::Table(pulse_table(&self.ion.pulse)));
        root.insert("ion".into(), Value::Table(i));

        let mut g = Table::new();
        g.insert("tolerance".into(), f(self.grid.tolerance));
        g.insert("max_step".into(), f(self.grid.max_step));
        g.insert("output_step".into(), f(self.grid.output_step));
        if let Some(t) = self.grid.t_start {
            g.insert("t_start".into(), f(t));
        }
        if let Some(t) = self.grid.t_end {
            g.insert("t_end".into(), f(t));
        }
        root.insert("grid".into(), Value::Table(g));

        let p = &self.protocol;
        let mut pt = Table::new();
        for (k, v) in [
            ("p1_yb", p.p1_yb),
            ("p1_in", p.p1_in),
            ("p2_yb", p.p2_yb),
            ("p2_in", p.p2_in),
            ("eta", p.eta),
            ("f_dyn", p.f_dyn),
            ("delta_phi", p.delta_phi),
            ("t_init", p.t_init),
            ("t_pulse", p.t_pulse),
            ("t_readout", p.t_readout),
        ] {
            pt.insert(k.into(), f(v));
        }
        if let Some(o) = self.protocol_overlap {
            pt.insert("re_overlap".into(), f(o));
        }
        root.insert("protocol".into(), Value::Table(pt));

        if let Some(o) = &self.optimization {
            let mut ot = Table::new();
            let side = match o.free_side {
                Side::Donor => "donor",
                Side::Ion => "ion",
            };
            ot.insert("free_side".into(), Value::String(side.into()));
            ot.insert("target_p1".into(), f(o.target_p1));
            ot.insert("p1_tolerance".into(), f(o.p1_tolerance));
            ot.insert("max_evaluations".into(), Value::Integer(o.max_evaluations as i64));
            ot.insert("seed".into(), Value::Integer(o.seed as i64));
            ot.insert("restarts".into(), Value::Integer(o.restarts as i64));
            ot.insert("max_sweeps".into(), Value::Integer(o.max_sweeps as i64));
            let bt: Table = PulseParam::ALL
                .iter()
                .map(|&k| {
                    let [lo, hi] = o.bounds.get(k);
                    (k.name().to_string(), Value::Array(vec![f(lo), f(hi)]))
                })
                .collect();
            ot.insert("bounds".into(), Value::Table(bt));
            root.insert("optimization".into(), Value::Table(ot));
        }

        let c = &self.cavity;
        let mut ct = Table::new();
        ct.insert("q_min".into(), f(c.q_min));
        ct.insert("q_max".into(), f(c.q_max));
        ct.insert("q_points".into(), Value::Integer(c.q_points as i64));
        ct.insert("v_min".into(), f(c.v_min));
        ct.insert("v_max".into(), f(c.v_max));
        ct.insert("v_points".into(), Value::Integer(c.v_points as i64));
        ct.insert("wavelength".into(), f(c.design.wavelength));
        ct.insert("refractive_index".into(), f(c.design.refractive_index));
        ct.insert("gamma".into(), f(c.design.gamma));
        root.insert("cavity".into(), Value::Table(ct));

        let mut out = Table::new();
        for (k, v) in self.outputs.entries() {
            if let Some(v) = v {
                out.insert(k.into(), Value::String(v.clone()));
            }
        }
        root.insert("outputs".into(), Value::Table(out));
        root
    }

    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("a TOML table always serializes")
    }

    /// Copy with the numeric key `key` (dotted path into the effective
    /// configuration, or [`P1_ALIAS`]) set to `value`.
    pub fn with_override(&self, key: &str, value: f64) -> Result<Scenario> {
        let mut table = self.to_table();
        let keys: Vec<&str> = if key == P1_ALIAS {
            vec!["protocol.p1_yb", "protocol.p1_in"]
        } else {
            vec![key]
        };
        for k in keys {
            set_numeric(&mut table, k, value)?;
        }
        Scenario::from_table(&table)
    }

    /// Whether changing `key` leaves the photon dynamics untouched.
    pub fn is_protocol_key(key: &str) -> bool {
        key == P1_ALIAS || key.starts_with("protocol.")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(o) = &mut self.optimization {
            o.seed = seed;
        }
        self
    }
}

fn set_bound(b: &mut PulseBounds<f64>, p: PulseParam, v: [f64; 2]) {
    match p {
        PulseParam::Sigma1 => b.sigma1 = v,
        PulseParam::Sigma2 => b.sigma2 = v,
        PulseParam::Tau => b.tau = v,
        PulseParam::THold => b.t_hold = v,
        PulseParam::OmegaMax => b.omega_max = v,
        PulseParam::Theta0 => b.theta0 = v,
        PulseParam::Theta1 => b.theta1 = v,
    }
}

fn set_numeric(table: &mut Table, key: &str, value: f64) -> Result<()> {
    let unknown = || cfg(key, "unknown numeric configuration key");
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            let slot = current.get_mut(part).ok_or_else(unknown)?;
            *slot = match slot {
                Value::Float(_) => Value::Float(value),
                Value::Integer(_) if value.fract() == 0.0 && value >= 0.0 => Value::Integer(value as i64),
                Value::Integer(_) => return Err(cfg(key, "expects an integer value")),
                _ => return Err(unknown()),
            };
            return Ok(());
        }
        current = match current.get_mut(part) {
            Some(Value::Table(t)) => t,
            _ => return Err(unknown()),
        };
    }
    Err(unknown())
}

impl OptimizationConfig {
    /// Search specification with the non-free emitter's pulse held fixed.
    pub fn spec(&self, donor: &DonorParams<f64>, ion: &IonParams<f64>) -> OptimizationSpec<f64> {
        OptimizationSpec {
            free_side: self.free_side,
            fixed_pulse: match self.free_side {
                Side::Donor => ion.pulse,
                Side::Ion => donor.pulse,
            },
            bounds: self.bounds,
            target_p1: self.target_p1,
            p1_tolerance: self.p1_tolerance,
            max_evaluations: self.max_evaluations,
            seed: self.seed,
            restarts: self.restarts,
            max_sweeps: self.max_sweeps,
        }
    }
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn sweep_values(key: &str, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(cfg(key, "sweep needs at least one step"));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(cfg(key, "sweep bounds must be finite"));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect())
}

/// Figures of merit written for every pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub re_overlap: f64,
    pub arg_overlap: f64,
    pub p1_yb: f64,
    pub p1_in: f64,
    pub c1: f64,
    pub fidelity: f64,
    pub p_succ: f64,
    pub rate_khz: f64,
    pub abs_overlap: f64,
    /// Emission probabilities from the simulated dynamics, when run.
    pub p_emit_yb: Option<f64>,
    pub p_emit_in: Option<f64>,
    pub balance_residual: f64,
    pub bad_cavity: bool,
}

impl Summary {
    pub fn new(s: &Scenario, overlap: Complex64, p_emit: Option<(f64, f64)>) -> Result<Summary> {
        let report = protocol::evaluate(&s.protocol, overlap.re)?;
        Ok(Summary {
            re_overlap: overlap.re,
            arg_overlap: overlap.arg(),
            p1_yb: s.protocol.p1_yb,
            p1_in: s.protocol.p1_in,
            c1: report.c1,
            fidelity: report.fidelity,
            p_succ: report.p_succ,
            rate_khz: report.rate_khz,
            abs_overlap: overlap.norm(),
            p_emit_yb: p_emit.map(|p| p.0),
            p_emit_in: p_emit.map(|p| p.1),
            balance_residual: report.balance_residual,
            bad_cavity: s.donor.is_bad_cavity(s.bad_cavity_factor),
        })
    }
}

/// Protocol figures plus the reduced density matrix as separate real and
/// imaginary 4×4 grids in the basis `|00⟩, |01⟩, |10⟩, |11⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolJson {
    pub c1: f64,
    pub fidelity: f64,
    pub p_succ: f64,
    pub rate_khz: f64,
    pub balance_residual: f64,
    pub rho: RhoJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoJson {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl ProtocolJson {
    pub fn new(report: &ProtocolReport<f64>, overlap: Complex64, delta_phi: f64) -> Result<Self> {
        let rho = protocol::reduced_density_matrix(overlap, delta_phi, report.c1)?;
        let re = rho.map(|row| row.map(|z| z.re));
        let im = rho.map(|row| row.map(|z| z.im));
        Ok(ProtocolJson {
            c1: report.c1,
            fidelity: report.fidelity,
            p_succ: report.p_succ,
            rate_khz: report.rate_khz,
            balance_residual: report.balance_residual,
            rho: RhoJson { re, im },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[donor]
delta = "200 GHz"
g = "15 GHz"
kappa = "60 GHz"
lifetime = "1.4 ns"

[donor.pulse]
sigma1 = 8.9
sigma2 = "16 ns"
tau = 35.8
t_hold = 0.85
omega_max = "2.9 GHz"
theta0 = "-0.15 turn"
theta1 = "6.9 MHz"

[ion]
gamma_yb = "0.12345679 /ns"

[ion.pulse]
sigma1 = 7.0
sigma2 = 6.4
tau = 28.0
t_hold = 3.9
omega_max = "8.1 MHz"
"#;

    fn err_key(text: &str) -> String {
        match Scenario::from_toml_str(text).unwrap_err() {
            Error::Config { key, .. } => key,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn units_resolve_to_internal_values() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert!((s.donor.delta - TAU * 200.0).abs() < 1e-12);
        assert!((s.donor.pulse.omega_max - TAU * 2.9).abs() < 1e-12);
        assert!((s.donor.pulse.theta1 - TAU * 6.9e-3).abs() < 1e-15);
        assert!((s.donor.pulse.theta0 + TAU * 0.15).abs() < 1e-15);
        assert!((s.donor.gamma_in - 1.0 / 1.4).abs() < 1e-15);
        assert_eq!(s.ion.pulse.theta0, 0.0);
        assert_eq!(s.protocol, ProtocolParams::default());
        assert!(s.optimization.is_none());
    }

    #[test]
    fn quantity_parsing() {
        assert_eq!(split_quantity("1.5e-3 GHz"), Some((1.5e-3, "GHz")));
        assert_eq!(split_quantity("-0.15turn"), Some((-0.15, "turn")));
        assert_eq!(split_quantity("10"), Some((10.0, "")));
        assert_eq!(convert(Kind::TimeUs, 10.0, "ns"), Some(0.01));
        assert_eq!(convert(Kind::TimeNs, 1.0, "us"), Some(1000.0));
        assert_eq!(convert(Kind::Frequency, 1.0, "THz"), None);
    }

    #[test]
    fn effective_config_round_trips() {
        let text = format!("{MINIMAL}\n[optimization]\nfree_side = \"ion\"\nseed = 3\n\n[outputs]\noverlap = \"o.csv\"\n");
        let s = Scenario::from_toml_str(&text).unwrap();
        let again = Scenario::from_toml_str(&s.effective_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(err_key(&format!("{MINIMAL}\n[protocol]\np1_in = 1.0\n")), "protocol.p1_in");
        assert_eq!(err_key(&MINIMAL.replace("kappa = \"60 GHz\"", "kappa = \"60 THz\"")), "donor.kappa");
        assert_eq!(err_key(&MINIMAL.replace("sigma1 = 7.0", "sigma1 = -7.0")), "ion.pulse.sigma1");
        assert_eq!(err_key(&MINIMAL.replace("tau = 28.0", "tua = 28.0")), "ion.pulse.tau");
        assert_eq!(err_key(&format!("{MINIMAL}\n[grid]\nfoo = 1\n")), "grid.foo");
        assert_eq!(err_key(&format!("{MINIMAL}\n[bogus]\n")), "bogus");
        assert_eq!(
            err_key(&format!("{MINIMAL}\n[outputs]\nsummary = \"a.json\"\noverlap = \"a.json\"\n")),
            "outputs.overlap"
        );
        assert_eq!(
            err_key(&format!("{MINIMAL}\n[optimization]\ntarget_p1 = 0.5\n")),
            "optimization.target_p1"
        );
    }

    #[test]
    fn overrides() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        let t = s.with_override("p1", 0.02).unwrap();
        assert_eq!((t.protocol.p1_yb, t.protocol.p1_in), (0.02, 0.02));
        let t = s.with_override("donor.pulse.tau", 30.0).unwrap();
        assert_eq!(t.donor.pulse.tau, 30.0);
        assert!(matches!(s.with_override("donor.nope", 1.0), Err(Error::Config { .. })));
        assert!(matches!(s.with_override("outputs.summary", 1.0), Err(Error::Config { .. })));
        assert!(Scenario::is_protocol_key("protocol.eta"));
        assert!(!Scenario::is_protocol_key("donor.g"));
    }

    #[test]
    fn sweep_grid() {
        assert!(sweep_values("p1", 0.0, 1.0, 0).is_err());
        assert_eq!(sweep_values("p1", 0.0, 1.0, 5).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(sweep_values("p1", 0.3, 1.0, 1).unwrap(), vec![0.3]);
    }

    #[test]
    fn summary_fields() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        let sum = Summary::new(&s, Complex64::new(0.99, 0.0), None).unwrap();
        assert!((sum.fidelity - 0.941).abs() < 1e-3);
        let json = serde_json::to_value(&sum).unwrap();
        for k in ["re_overlap", "arg_overlap", "p1_yb", "p1_in", "c1", "fidelity", "p_succ", "rate_khz"] {
            assert!(json.get(k).is_some(), "{k}");
        }
        let report = protocol::evaluate(&s.protocol, 0.99).unwrap();
        let pj = ProtocolJson::new(&report, Complex64::new(0.99, 0.0), 0.0).unwrap();
        let trace: f64 = (0..4).map(|k| pj.rho.re[k][k]).sum();
        assert!((trace - 1.0).abs() < 1e-12);
    }
}
