//! Turning collected logs into training and evaluation sets.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ftl_core::datalog::{make_sequences, FrameRecord, split_laps_stratified, split_train_test, LogReader, Split, SplitPolicy};
use ftl_core::models::{downsample, ABSENT, PRESENT};
use ftl_core::nn::{Dataset, Sample, Target};
use ftl_core::sim::LapDirection;
use ftl_core::Tensor;

use crate::collect::{LAP_PREFIX, LOG_EXT, STILLS_FILE};
use crate::scenario::parse_kv;

/// Pixels → network input: dequantize and box-downsample in one pass.
pub fn prepare_frame(pixels: &[u8], shape: [usize; 3], input: [usize; 3]) -> Result<Tensor> {
    let full = Tensor::new(shape, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    Ok(downsample(&full, input)?)
}

#[derive(Debug, Clone, Default)]
pub struct DataDir {
    pub stills: Vec<PathBuf>,
    pub laps: Vec<PathBuf>,
}

/// Find stills and lap logs in a collection directory.
pub fn discover(dir: &Path) -> Result<DataDir> {
    let mut out = DataDir::default();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == LOG_EXT))
        .collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        if name == STILLS_FILE {
            out.stills.push(p);
        } else if name.starts_with(LAP_PREFIX) {
            out.laps.push(p);
        }
    }
    Ok(out)
}

/// Classifier frames with their labels (present = class 0).
pub struct StillsData {
    pub frames: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl StillsData {
    pub fn load(paths: &[PathBuf], input: [usize; 3]) -> Result<Self> {
        let mut frames = Vec::new();
        let mut labels = Vec::new();
        for p in paths {
            let reader = LogReader::open(p).with_context(|| format!("opening {}", p.display()))?;
            let shape = reader.header().shape();
            for rec in reader {
                let rec = rec?;
                frames.push(prepare_frame(&rec.image, shape, input)?);
                labels.push(if rec.present { PRESENT } else { ABSENT });
            }
        }
        if frames.is_empty() {
            bail!("no classifier frames found");
        }
        Ok(Self { frames, labels })
    }

    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<Split> {
        Ok(split_train_test(self.frames.len(), SplitPolicy::Frames { test_fraction }, seed)?)
    }

    /// Training set over all frames whose samples are only `indices`.
    pub fn dataset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            frames: self.frames.clone(),
            samples: indices
                .iter()
                .map(|&i| Sample {
                    frames: vec![i],
                    target: Target::Class(self.labels[i]),
                })
                .collect(),
        }
    }
}

/// One lap prepared for the regressor.
pub struct LapData {
    pub name: String,
    pub direction: LapDirection,
    pub frames: Vec<Tensor>,
    /// Per-frame labels with the image bytes dropped.
    pub records: Vec<FrameRecord>,
}

impl LapData {
    pub fn load(path: &Path, input: [usize; 3]) -> Result<Self> {
        let reader = LogReader::open(path).with_context(|| format!("opening {}", path.display()))?;
        let shape = reader.header().shape();
        let kv = parse_kv(&reader.header().descriptor)?;
        let direction = kv
            .get("lap.direction")
            .or_else(|| kv.get("direction"))
            .map(|(_, v)| v.parse::<LapDirection>())
            .transpose()
            .map_err(anyhow::Error::msg)?
            .unwrap_or(LapDirection::Ccw);
        let mut lap = LapData {
            name: path.file_stem().unwrap().to_string_lossy().to_string(),
            direction,
            frames: Vec::new(),
            records: Vec::new(),
        };
        for rec in reader {
            let rec = rec?;
            lap.frames.push(prepare_frame(&rec.image, shape, input)?);
            lap.records.push(FrameRecord { image: Vec::new(), ..rec });
        }
        Ok(lap)
    }
}

pub fn load_laps(paths: &[PathBuf], input: [usize; 3]) -> Result<Vec<LapData>> {
    if paths.is_empty() {
        bail!("no lap logs found");
    }
    paths.iter().map(|p| LapData::load(p, input)).collect()
}

/// Hold out `per_direction` whole laps from each walking direction.
pub fn split_laps(laps: &[LapData], per_direction: usize, seed: u64) -> Result<Split> {
    let groups: Vec<String> = laps.iter().map(|l| l.direction.to_string()).collect();
    Ok(split_laps_stratified(&groups, per_direction, seed)?)
}

/// Window `window` frames over each lap in `which`; frame indices point
/// into the concatenation of all laps' frames.
pub fn lap_windows(laps: &[LapData], which: &[usize], window: usize) -> Result<Vec<Sample>> {
    let mut offsets = Vec::with_capacity(laps.len());
    let mut total = 0;
    for l in laps {
        offsets.push(total);
        total += l.frames.len();
    }
    let mut out = Vec::new();
    for &i in which {
        let lap = &laps[i];
        for s in make_sequences(&lap.records, window)? {
            out.push(Sample {
                frames: s.frames().map(|f| offsets[i] + f).collect(),
                target: Target::Controls(s.target),
            });
        }
    }
    Ok(out)
}

pub fn regressor_dataset(laps: &[LapData], train: &[usize], window: usize) -> Result<Dataset> {
    Ok(Dataset {
        frames: laps.iter().flat_map(|l| l.frames.iter().cloned()).collect(),
        samples: lap_windows(laps, train, window)?,
    })
}
