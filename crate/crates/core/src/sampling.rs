//! Sample-set generation over indexed random substreams, and its JSON-lines
//! persistence.
//!
//! Sample `i` of a set with master seed `s` is always drawn from ChaCha8
//! seeded with `s` on stream `i`, so a set is independent of worker count and
//! can be extended without touching existing samples.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{simulate_cascade, CascadeSample, SeedPath, StageModel};
use crate::config::{self, SimulationConfig, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::failure::{FailureModel, PhiParams};
use crate::grid_sim::GridCascade;
use crate::network::{BranchId, Network};
use crate::tiny::TinySystem;

/// Width of the header line including its newline.
const HEADER_WIDTH: usize = 1024;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SampleHeader {
    pub format_version: u32,
    pub network_hash: String,
    pub model_hash: String,
    pub master_seed: u64,
    pub count: u64,
    #[serde(default)]
    pub full_traces: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub header: SampleHeader,
    pub samples: Vec<CascadeSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn truncated(&self) -> usize {
        self.samples.iter().filter(|s| s.truncated).count()
    }
}

pub fn rng_for(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Simulates the given substreams in parallel, returning samples in index order.
pub fn simulate_streams<M>(
    prototype: &M,
    params: &[PhiParams],
    traced: &[bool],
    stage_cap: u32,
    master_seed: u64,
    streams: Range<u64>,
) -> Result<Vec<CascadeSample>>
where
    M: StageModel + Clone + Send + Sync,
{
    streams
        .into_par_iter()
        .map_init(
            || prototype.clone(),
            |model, i| {
                let mut rng = rng_for(master_seed, i);
                let path = SeedPath { master_seed, stream: i };
                simulate_cascade(model, params, traced, stage_cap, path, &mut rng)
            },
        )
        .collect()
}

/// Cascade sampler for one network, baseline model and configuration.
pub struct Simulator<'a> {
    model: GridCascade<'a>,
    params: Vec<PhiParams>,
    traced: Vec<bool>,
    stage_cap: u32,
    full_traces: bool,
    network_hash: String,
    model_hash: String,
}

impl<'a> Simulator<'a> {
    pub fn new(network: &'a Network, baseline: &FailureModel, config: &SimulationConfig) -> Result<Self> {
        config.check()?;
        let params = network
            .branches
            .iter()
            .map(|b| baseline.params(b.id).copied())
            .collect::<Result<Vec<_>>>()?;
        let traced = network.branches.iter().map(|b| config.full_traces || b.maintainable).collect();
        Ok(Self {
            model: GridCascade::new(network, config.lp)?,
            params,
            traced,
            stage_cap: config.stage_cap,
            full_traces: config.full_traces,
            network_hash: config::network_hash(network),
            model_hash: config::model_hash(baseline, config),
        })
    }

    pub fn network_hash(&self) -> &str {
        &self.network_hash
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn sample(&self, master_seed: u64, stream: u64) -> Result<CascadeSample> {
        let mut model = self.model.clone();
        let mut rng = rng_for(master_seed, stream);
        let path = SeedPath { master_seed, stream };
        simulate_cascade(&mut model, &self.params, &self.traced, self.stage_cap, path, &mut rng)
    }

    pub fn generate(&self, n: u64, master_seed: u64) -> Result<SampleSet> {
        let mut set = SampleSet {
            header: SampleHeader {
                format_version: FORMAT_VERSION,
                network_hash: self.network_hash.clone(),
                model_hash: self.model_hash.clone(),
                master_seed,
                count: 0,
                full_traces: self.full_traces,
            },
            samples: Vec::new(),
        };
        self.extend(&mut set, n)?;
        Ok(set)
    }

    /// Grows `set` to `target` samples over the following substreams.
    pub fn extend(&self, set: &mut SampleSet, target: u64) -> Result<()> {
        if set.header.network_hash != self.network_hash || set.header.model_hash != self.model_hash {
            return Err(Error::Format("sample set was generated for a different network or model".into()));
        }
        let have = set.samples.len() as u64;
        if target > have {
            let seed = set.header.master_seed;
            let new = simulate_streams(&self.model, &self.params, &self.traced, self.stage_cap, seed, have..target)?;
            set.samples.extend(new);
            let truncated = set.truncated();
            if truncated > 0 {
                log::warn!("{truncated} of {target} samples reached the stage cap");
            }
        }
        set.header.count = set.samples.len() as u64;
        Ok(())
    }
}

pub fn generate_samples(
    network: &Network,
    baseline: &FailureModel,
    config: &SimulationConfig,
    n: u64,
    master_seed: u64,
) -> Result<SampleSet> {
    Simulator::new(network, baseline, config)?.generate(n, master_seed)
}

/// Samples of a tiny system with every component traced, over `streams`.
pub fn tiny_samples(system: &TinySystem, params: &[PhiParams], master_seed: u64, streams: Range<u64>) -> Result<SampleSet> {
    let traced = vec![true; system.ids.len()];
    let samples = simulate_streams(&system.model(), params, &traced, system.stage_cap, master_seed, streams)?;
    Ok(SampleSet {
        header: SampleHeader {
            format_version: FORMAT_VERSION,
            network_hash: "tiny".into(),
            model_hash: config::digest(serde_json::to_string(params)?.as_bytes()),
            master_seed,
            count: samples.len() as u64,
            full_traces: true,
        },
        samples,
    })
}

/// The baseline model of a tiny system, keyed by its component ids.
pub fn tiny_model(system: &TinySystem, params: &[PhiParams]) -> Result<FailureModel> {
    FailureModel::from_params(system.ids.iter().copied().zip(params.iter().copied()).collect())
}

fn header_line(header: &SampleHeader) -> Result<Vec<u8>> {
    let mut line = serde_json::to_vec(header)?;
    if line.len() >= HEADER_WIDTH {
        return Err(Error::Format("sample header too long".into()));
    }
    line.resize(HEADER_WIDTH - 1, b' ');
    line.push(b'\n');
    Ok(line)
}

fn write_samples<W: Write>(out: &mut W, samples: &[CascadeSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_jsonl(path: &Path, set: &SampleSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header_line(&set.header)?)?;
    write_samples(&mut out, &set.samples)?;
    out.flush()?;
    Ok(())
}

/// Appends the samples past `on_disk` to an existing file and rewrites the
/// fixed-width header in place.
pub fn append_jsonl(path: &Path, set: &SampleSet, on_disk: usize) -> Result<()> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    file.seek(SeekFrom::End(0))?;
    let mut out = BufWriter::new(&mut file);
    write_samples(&mut out, &set.samples[on_disk..])?;
    out.flush()?;
    drop(out);
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&header_line(&set.header)?)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<SampleHeader> {
    let mut line = String::new();
    BufReader::new(File::open(path)?).read_line(&mut line)?;
    Ok(serde_json::from_str(line.trim_end())?)
}

pub fn read_jsonl(path: &Path) -> Result<SampleSet> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty sample file".into()))??;
    let header: SampleHeader = serde_json::from_str(first.trim_end())?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {}", header.format_version)));
    }
    let mut samples = Vec::with_capacity(header.count as usize);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let s: CascadeSample = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("sample line {}: {e}", i + 2)))?;
        if s.index() != samples.len() as u64 || s.seed_path.master_seed != header.master_seed {
            return Err(Error::Format(format!("sample line {} is out of sequence", i + 2)));
        }
        samples.push(s);
    }
    if samples.len() as u64 != header.count {
        return Err(Error::Format(format!("header counts {} samples, file holds {}", header.count, samples.len())));
    }
    Ok(SampleSet { header, samples })
}

/// Components traced in every sample of the set.
pub fn traced_components(set: &SampleSet) -> Vec<BranchId> {
    match set.samples.first() {
        None => Vec::new(),
        Some(s) => s.traces.keys().copied().collect(),
    }
}
