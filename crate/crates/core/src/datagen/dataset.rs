//! Dataset recipes, the builder and the on-disk container.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json             Manifest (JSON)
//! x.f64                     node coordinates along one axis
//! t.f64                     snapshot times
//! sample_<i>/<field>.f64    one file per sample and field
//! ```
//!
//! Every `.f64` file is a little-endian `f64` array in C order. A field with
//! `s` snapshots on resolution `r` holds `s · Π r` values.

use super::burgers::{burgers_etdrk4, BurgersParams};
use super::forcing::{make_forcing, poisson_reference, Forcing};
use super::navier_stokes::{ns_crank_nicolson, NsParams};
use crate::error::{Error, Result};
use crate::files;
use crate::parallel;
use crate::spectral::{stream_rng, Grf1d, Grf2d, RNG_ID};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pde {
    Burgers,
    NavierStokes,
    Poisson,
}

impl Pde {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "burgers" => Ok(Pde::Burgers),
            "navier_stokes" | "ns" => Ok(Pde::NavierStokes),
            "poisson" => Ok(Pde::Poisson),
            other => Err(Error::Config(format!("unknown pde {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersData {
    pub resolution: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub solver: BurgersParams,
    pub grf: Grf1d,
}

impl Default for BurgersData {
    fn default() -> Self {
        BurgersData {
            resolution: 1024,
            n_samples: 20,
            seed: 7,
            solver: BurgersParams::default(),
            grf: Grf1d::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsData {
    pub resolution: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Spacing of saved frames.
    pub frame_dt: f64,
    /// Frames before this time are discarded.
    pub t_start: f64,
    pub forcing: Forcing,
    pub grf: Grf2d,
}

impl Default for NsData {
    fn default() -> Self {
        NsData {
            resolution: 64,
            n_samples: 10,
            seed: 7,
            nu: 1e-3,
            dt: 1e-3,
            t_final: 50.0,
            frame_dt: 0.25,
            t_start: 40.0,
            forcing: Forcing::TrigNs,
            grf: Grf2d::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonData {
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pde", rename_all = "snake_case")]
pub enum DataConfig {
    Burgers(BurgersData),
    NavierStokes(NsData),
    Poisson(PoissonData),
}

impl DataConfig {
    pub fn pde(&self) -> Pde {
        match self {
            DataConfig::Burgers(_) => Pde::Burgers,
            DataConfig::NavierStokes(_) => Pde::NavierStokes,
            DataConfig::Poisson(_) => Pde::Poisson,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub name: String,
    pub snapshots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub rng: String,
    pub seed: u64,
    /// Overall amplitude constant of the random initial conditions.
    pub grf_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub pde: Pde,
    pub config: DataConfig,
    pub n_samples: usize,
    pub resolution: Vec<usize>,
    pub domain_length: Vec<f64>,
    pub times: Vec<f64>,
    pub fields: Vec<FieldMeta>,
    pub generator: Generator,
    /// Random stream index of each written sample.
    pub sample_streams: Vec<u64>,
    /// Streams whose solve blew up.
    pub skipped: Vec<u64>,
}

impl Manifest {
    pub fn points(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Time between consecutive snapshots.
    pub fn snapshot_dt(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }

    pub fn field(&self, name: &str) -> Option<&FieldMeta> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<BTreeMap<String, Vec<f64>>>,
}

impl Dataset {
    pub fn field(&self, sample: usize, name: &str) -> Result<&[f64]> {
        self.samples
            .get(sample)
            .and_then(|s| s.get(name))
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Invalid(format!("dataset has no field {name:?} for sample {sample}")))
    }

    /// Snapshot `k` of a field.
    pub fn frame(&self, sample: usize, name: &str, k: usize) -> Result<&[f64]> {
        let n = self.manifest.points();
        let data = self.field(sample, name)?;
        data.get(k * n..(k + 1) * n)
            .ok_or_else(|| Error::Invalid(format!("field {name:?} has no snapshot {k}")))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        files::create_dir(dir)?;
        let m = &self.manifest;
        let n0 = m.resolution[0];
        let x: Vec<f64> = (0..n0).map(|i| i as f64 * m.domain_length[0] / n0 as f64).collect();
        files::write_f64(&dir.join("x.f64"), &x)?;
        files::write_f64(&dir.join("t.f64"), &m.times)?;
        for (i, sample) in self.samples.iter().enumerate() {
            let sdir = dir.join(format!("sample_{i}"));
            files::create_dir(&sdir)?;
            for (name, data) in sample {
                files::write_f64(&sdir.join(format!("{name}.f64")), data)?;
            }
        }
        files::write_json(&dir.join("manifest.json"), m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = files::read_json(&dir.join("manifest.json"))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Invalid(format!("unsupported manifest version {}", manifest.version)));
        }
        let n = manifest.points();
        let mut samples = Vec::with_capacity(manifest.n_samples);
        for i in 0..manifest.n_samples {
            let mut fields = BTreeMap::new();
            for f in &manifest.fields {
                let path = dir.join(format!("sample_{i}")).join(format!("{}.f64", f.name));
                let data = files::read_f64(&path)?;
                if data.len() != f.snapshots * n {
                    return Err(Error::Invalid(format!(
                        "{} holds {} values, manifest expects {}",
                        path.display(),
                        data.len(),
                        f.snapshots * n
                    )));
                }
                fields.insert(f.name.clone(), data);
            }
            samples.push(fields);
        }
        Ok(Dataset { manifest, samples })
    }
}

fn check_resolution(n: usize, min: usize) -> Result<()> {
    if !n.is_power_of_two() || n < min {
        return Err(Error::Config(format!("resolution {n} must be a power of two ≥ {min}")));
    }
    Ok(())
}

fn collect(
    results: Vec<(u64, Result<BTreeMap<String, Vec<f64>>>)>,
) -> Result<(Vec<BTreeMap<String, Vec<f64>>>, Vec<u64>, Vec<u64>)> {
    let (mut samples, mut streams, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for (s, r) in results {
        match r {
            Ok(fields) => {
                samples.push(fields);
                streams.push(s);
            }
            Err(Error::BlowUp(msg)) => {
                eprintln!("warning: sample stream {s} skipped: {msg}");
                skipped.push(s);
            }
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() && !skipped.is_empty() {
        return Err(Error::BlowUp("every sample blew up".into()));
    }
    Ok((samples, streams, skipped))
}

/// Generates a dataset in memory. Sample `i` draws from random stream `i`
/// of the configured seed, so output is independent of thread count.
pub fn build_dataset(config: &DataConfig) -> Result<Dataset> {
    match config {
        DataConfig::Burgers(c) => build_burgers(c, config),
        DataConfig::NavierStokes(c) => build_ns(c, config),
        DataConfig::Poisson(c) => {
            let (f, psi) = poisson_reference(c.resolution)?;
            let mut fields = BTreeMap::new();
            fields.insert("f".to_string(), f);
            fields.insert("psi".to_string(), psi);
            Ok(Dataset {
                manifest: Manifest {
                    version: MANIFEST_VERSION,
                    pde: Pde::Poisson,
                    config: config.clone(),
                    n_samples: 1,
                    resolution: vec![c.resolution, c.resolution],
                    domain_length: vec![1.0, 1.0],
                    times: vec![0.0],
                    fields: vec![
                        FieldMeta { name: "f".into(), snapshots: 1 },
                        FieldMeta { name: "psi".into(), snapshots: 1 },
                    ],
                    generator: Generator {
                        rng: RNG_ID.into(),
                        seed: 0,
                        grf_scale: 0.0,
                    },
                    sample_streams: vec![0],
                    skipped: vec![],
                },
                samples: vec![fields],
            })
        }
    }
}

fn build_burgers(c: &BurgersData, config: &DataConfig) -> Result<Dataset> {
    check_resolution(c.resolution, 16)?;
    if c.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let scale = c.grf.scale(c.resolution)?;
    let streams: Vec<u64> = (0..c.n_samples as u64).collect();
    let results = parallel::par_map(streams, |s| {
        let run = || -> Result<BTreeMap<String, Vec<f64>>> {
            let a = c.grf.sample(c.resolution, &mut stream_rng(c.seed, s))?;
            let traj = burgers_etdrk4(&a, &c.solver)?;
            let mut fields = BTreeMap::new();
            fields.insert("u".to_string(), traj.states.concat());
            fields.insert("a".to_string(), a);
            Ok(fields)
        };
        (s, run())
    });
    let (samples, sample_streams, skipped) = collect(results)?;
    let steps = (c.solver.t_final / c.solver.dt).round() as usize;
    let times: Vec<f64> = (0..=steps / c.solver.save_every)
        .map(|k| (k * c.solver.save_every) as f64 * c.solver.dt)
        .collect();
    Ok(Dataset {
        manifest: Manifest {
            version: MANIFEST_VERSION,
            pde: Pde::Burgers,
            config: config.clone(),
            n_samples: samples.len(),
            resolution: vec![c.resolution],
            domain_length: vec![c.solver.length],
            fields: vec![
                FieldMeta { name: "a".into(), snapshots: 1 },
                FieldMeta { name: "u".into(), snapshots: times.len() },
            ],
            times,
            generator: Generator {
                rng: RNG_ID.into(),
                seed: c.seed,
                grf_scale: scale,
            },
            sample_streams,
            skipped,
        },
        samples,
    })
}

fn build_ns(c: &NsData, config: &DataConfig) -> Result<Dataset> {
    check_resolution(c.resolution, 8)?;
    if c.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let save_every = (c.frame_dt / c.dt).round() as usize;
    if save_every == 0 || ((save_every as f64 * c.dt) - c.frame_dt).abs() > 1e-9 {
        return Err(Error::Config(format!("frame spacing {} is not a multiple of dt {}", c.frame_dt, c.dt)));
    }
    let params = NsParams {
        nu: c.nu,
        dt: c.dt,
        t_final: c.t_final,
        save_every,
    };
    let n = c.resolution;
    let forcing = make_forcing(c.forcing, n);
    let first = (c.t_start / c.frame_dt).round() as usize;
    let streams: Vec<u64> = (0..c.n_samples as u64).collect();
    let results = parallel::par_map(streams, |s| {
        let run = || -> Result<(Vec<f64>, BTreeMap<String, Vec<f64>>)> {
            let a = c.grf.sample(n, &mut stream_rng(c.seed, s))?;
            let traj = ns_crank_nicolson(&a, &forcing, &params)?;
            if first >= traj.times.len() {
                return Err(Error::Config("t_start lies beyond t_final".into()));
            }
            let mut fields = BTreeMap::new();
            fields.insert("omega".to_string(), traj.omega[first..].concat());
            fields.insert("ux".to_string(), traj.ux[first..].concat());
            fields.insert("uy".to_string(), traj.uy[first..].concat());
            fields.insert("a".to_string(), a);
            Ok((traj.times[first..].to_vec(), fields))
        };
        (s, run())
    });
    let mut times = None;
    let results = results
        .into_iter()
        .map(|(s, r)| {
            (
                s,
                r.map(|(t, f)| {
                    times.get_or_insert(t);
                    f
                }),
            )
        })
        .collect();
    let (samples, sample_streams, skipped) = collect(results)?;
    let times = times.unwrap_or_default();
    Ok(Dataset {
        manifest: Manifest {
            version: MANIFEST_VERSION,
            pde: Pde::NavierStokes,
            config: config.clone(),
            n_samples: samples.len(),
            resolution: vec![n, n],
            domain_length: vec![1.0, 1.0],
            fields: vec![
                FieldMeta { name: "a".into(), snapshots: 1 },
                FieldMeta { name: "omega".into(), snapshots: times.len() },
                FieldMeta { name: "ux".into(), snapshots: times.len() },
                FieldMeta { name: "uy".into(), snapshots: times.len() },
            ],
            times,
            generator: Generator {
                rng: RNG_ID.into(),
                seed: c.seed,
                grf_scale: c.grf.scale,
            },
            sample_streams,
            skipped,
        },
        samples,
    })
}
