//! Pipelines behind each subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use hybridlink::cavity::{self, Region};
use hybridlink::dynamics::{integrate_donor, integrate_ion, DonorTrajectory, IonTrajectory};
use hybridlink::export::fmt_f64;
use hybridlink::optimizer::{optimize_pulse, Side};
use hybridlink::photonics::{common_samples, overlap, photon_wavefunction, DONOR_PHOTON_LEVEL, ION_EXCITED_LEVEL};
use hybridlink::protocol;
use hybridlink::scenario::{sweep_values, ProtocolJson, Summary};
use hybridlink::{Error, Photon, Scenario};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn from_config(e: Error) -> Self {
        Failure::config(e.to_string())
    }

    /// Classifies an error raised while running `stage`.
    pub fn at(stage: &str, e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidParameter { .. } => Failure::config(e.to_string()),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => Failure::io(format!("{stage}: {e}")),
            _ => Failure { code: 3, message: format!("numerical failure in stage `{stage}`: {e}") },
        }
    }
}

pub struct Options {
    pub out_dir: PathBuf,
    pub metadata: bool,
    pub command: &'static str,
}

impl Options {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> hybridlink::Result<()>) -> Result<(), Failure> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_summary(s: &Scenario, opts: &Options, summary: &Summary) -> Result<(), Failure> {
    let mut value = serde_json::to_value(summary).map_err(|e| Failure::io(e.to_string()))?;
    if opts.metadata {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        value["metadata"] = json!({
            "generator": format!("hybridlink {}", env!("CARGO_PKG_VERSION")),
            "command": opts.command,
            "created_unix": created,
        });
    }
    write_json(&opts.path(&s.outputs.summary), &value)
}

pub struct Simulation {
    pub donor: DonorTrajectory<f64>,
    pub ion: IonTrajectory<f64>,
    pub donor_photon: Photon,
    pub ion_photon: Photon,
    /// `∫ A_ion* · A_donor dt`.
    pub overlap: Complex64,
}

pub fn run_dynamics(s: &Scenario) -> Result<Simulation, Failure> {
    let donor = integrate_donor(&s.donor, &s.donor_grid()).map_err(|e| Failure::at("donor dynamics", e))?;
    let ion = integrate_ion(&s.ion, &s.ion_grid()).map_err(|e| Failure::at("ion dynamics", e))?;
    let donor_photon =
        photon_wavefunction(&donor, s.donor.kappa, DONOR_PHOTON_LEVEL).map_err(|e| Failure::at("donor photon", e))?;
    let ion_photon =
        photon_wavefunction(&ion, s.ion.gamma_yb, ION_EXCITED_LEVEL).map_err(|e| Failure::at("ion photon", e))?;
    let o = overlap(&ion_photon, &donor_photon);
    Ok(Simulation { donor, ion, donor_photon, ion_photon, overlap: o })
}

fn write_overlap_csv(sim: &Simulation, w: &mut impl Write) -> hybridlink::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "re_ion", "im_ion", "re_donor", "im_donor"])?;
    if let Some((times, ion, donor)) = common_samples(&sim.ion_photon, &sim.donor_photon) {
        for ((t, a), b) in times.iter().zip(&ion).zip(&donor) {
            csv.write_record([fmt_f64(*t), fmt_f64(a.re), fmt_f64(a.im), fmt_f64(b.re), fmt_f64(b.im)])?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn write_simulation_artifacts(s: &Scenario, opts: &Options, sim: &Simulation) -> Result<(), Failure> {
    let o = &s.outputs;
    if let Some(name) = &o.donor_trajectory {
        write_with(&opts.path(name), |w| sim.donor.write_csv(w))?;
    }
    if let Some(name) = &o.ion_trajectory {
        write_with(&opts.path(name), |w| sim.ion.write_csv(w))?;
    }
    if let Some(name) = &o.donor_photon {
        write_with(&opts.path(name), |w| sim.donor_photon.write_csv(w))?;
    }
    if let Some(name) = &o.ion_photon {
        write_with(&opts.path(name), |w| sim.ion_photon.write_csv(w))?;
    }
    if let Some(name) = &o.overlap {
        write_with(&opts.path(name), |w| write_overlap_csv(sim, w))?;
    }
    Ok(())
}

fn summarize(s: &Scenario, sim: &Simulation) -> Result<Summary, Failure> {
    Summary::new(s, sim.overlap, Some((sim.ion_photon.p_emit, sim.donor_photon.p_emit)))
        .map_err(|e| Failure::at("protocol", e))
}

pub fn simulate(s: &Scenario, opts: &Options) -> Result<(), Failure> {
    let sim = run_dynamics(s)?;
    write_simulation_artifacts(s, opts, &sim)?;
    let summary = summarize(s, &sim)?;
    write_summary(s, opts, &summary)
}

pub fn optimize(s: &Scenario, opts: &Options) -> Result<(), Failure> {
    let cfg = s
        .optimization
        .as_ref()
        .ok_or_else(|| Failure::config("config error at `optimization`: missing required table"))?;
    let spec = cfg.spec(&s.donor, &s.ion);
    let result =
        optimize_pulse(&spec, &s.donor, &s.ion, &s.grid.template()).map_err(|e| Failure::at("optimization", e))?;
    write_with(&opts.path(&s.outputs.optimizer_log), |w| result.write_log_csv(w))?;

    let mut tuned = s.clone();
    match cfg.free_side {
        Side::Donor => tuned.donor.pulse = result.pulse,
        Side::Ion => tuned.ion.pulse = result.pulse,
    }
    let report = json!({
        "free_side": match cfg.free_side { Side::Donor => "donor", Side::Ion => "ion" },
        "pulse": result.pulse,
        "re_overlap": result.re_overlap,
        "arg_overlap": result.arg_overlap,
        "p1": result.p1,
        "start_re_overlap": result.start.re_overlap,
        "evaluations": result.evaluations,
    });
    write_json(&opts.path(&s.outputs.optimized_pulse), &report)?;

    let sim = run_dynamics(&tuned)?;
    write_simulation_artifacts(&tuned, opts, &sim)?;
    let summary = summarize(&tuned, &sim)?;
    write_summary(&tuned, opts, &summary)
}

pub fn protocol(s: &Scenario, opts: &Options) -> Result<(), Failure> {
    let (overlap, p_emit) = match s.protocol_overlap {
        Some(re) => (Complex64::new(re, 0.0), None),
        None => {
            let sim = run_dynamics(s)?;
            write_simulation_artifacts(s, opts, &sim)?;
            (sim.overlap, Some((sim.ion_photon.p_emit, sim.donor_photon.p_emit)))
        }
    };
    let report = protocol::evaluate(&s.protocol, overlap.re).map_err(|e| Failure::at("protocol", e))?;
    let pj = ProtocolJson::new(&report, overlap, s.protocol.delta_phi).map_err(|e| Failure::at("protocol", e))?;
    write_json(&opts.path(&s.outputs.protocol_report), &pj)?;
    let summary = Summary::new(s, overlap, p_emit).map_err(|e| Failure::at("protocol", e))?;
    write_summary(s, opts, &summary)
}

pub fn cavity_map(s: &Scenario, opts: &Options) -> Result<(), Failure> {
    let c = &s.cavity;
    let qs = cavity::log_space(c.q_min, c.q_max, c.q_points);
    let vs = cavity::log_space(c.v_min, c.v_max, c.v_points);
    let samples = cavity::region_map(&c.design, &qs, &vs);
    write_with(&opts.path(&s.outputs.cavity_map), |w| cavity::write_region_csv(&samples, w))?;

    let count = |r: Region| samples.iter().filter(|x| x.region == r).count();
    let d = &s.donor;
    let purcell = d.purcell_rate();
    let summary = json!({
        "samples": samples.len(),
        "outside": count(Region::Outside),
        "green": count(Region::Green),
        "blue": count(Region::Blue),
        "operating_point": {
            "g": d.g,
            "kappa": d.kappa,
            "gamma": d.gamma_in,
            "purcell_rate": purcell,
            "cooperativity": cavity::cooperativity(d.g, d.kappa, d.gamma_in),
            "region": cavity::classify_rates(&cavity::CavityRates {
                g: d.g,
                kappa: d.kappa,
                cooperativity: cavity::cooperativity(d.g, d.kappa, d.gamma_in),
            }).name(),
            "bad_cavity": d.is_bad_cavity(s.bad_cavity_factor),
        },
    });
    write_json(&opts.path(&s.outputs.cavity_summary), &summary)
}

const SWEEP_COLUMNS: [&str; 11] = [
    "re_overlap",
    "arg_overlap",
    "p1_yb",
    "p1_in",
    "c1",
    "fidelity",
    "p_succ",
    "rate_khz",
    "abs_overlap",
    "p_emit_yb",
    "p_emit_in",
];

fn sweep_row(value: f64, sum: &Summary) -> Vec<String> {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    vec![
        fmt_f64(value),
        fmt_f64(sum.re_overlap),
        fmt_f64(sum.arg_overlap),
        fmt_f64(sum.p1_yb),
        fmt_f64(sum.p1_in),
        fmt_f64(sum.c1),
        fmt_f64(sum.fidelity),
        fmt_f64(sum.p_succ),
        fmt_f64(sum.rate_khz),
        fmt_f64(sum.abs_overlap),
        opt(sum.p_emit_yb),
        opt(sum.p_emit_in),
    ]
}

pub fn sweep(s: &Scenario, opts: &Options, key: &str, lo: f64, hi: f64, steps: usize) -> Result<(), Failure> {
    let values = sweep_values(key, lo, hi, steps).map_err(Failure::from_config)?;
    let points: Vec<Scenario> = values
        .iter()
        .map(|&v| s.with_override(key, v))
        .collect::<Result<_, _>>()
        .map_err(Failure::from_config)?;

    let summaries: Vec<Summary> = if Scenario::is_protocol_key(key) {
        // the photons do not depend on the swept key
        let shared = match s.protocol_overlap {
            Some(re) => (Complex64::new(re, 0.0), None),
            None => {
                let sim = run_dynamics(s)?;
                (sim.overlap, Some((sim.ion_photon.p_emit, sim.donor_photon.p_emit)))
            }
        };
        points
            .iter()
            .map(|p| Summary::new(p, shared.0, shared.1).map_err(|e| Failure::at("protocol", e)))
            .collect::<Result<_, _>>()?
    } else {
        points
            .par_iter()
            .map(|p| run_dynamics(p).and_then(|sim| summarize(p, &sim)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_, _>>()?
    };

    write_with(&opts.path(&s.outputs.sweep), |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec![key.to_string()];
        header.extend(SWEEP_COLUMNS.iter().map(|c| c.to_string()));
        csv.write_record(&header)?;
        for (v, sum) in values.iter().zip(&summaries) {
            csv.write_record(sweep_row(*v, sum))?;
        }
        csv.flush()?;
        Ok(())
    })
}
