//! Turning image files into train/test splits.

use std::path::PathBuf;

use cntnet_core::train::Dataset;

use crate::config::{DataConfig, DataFormat};
use crate::dataio::{cifar, idx, LabelledImages};
use crate::error::{Error, Result};
use crate::presets::TaskName;

pub const CLASSES: usize = 10;

pub fn load_images(cfg: &DataConfig) -> Result<LabelledImages> {
    match cfg.format {
        DataFormat::Mnist => idx::load_dir(&cfg.path),
        DataFormat::Cifar => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&cfg.path)
                .map_err(|e| Error::io(&cfg.path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "bin"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::usage(format!("no .bin batches in {}", cfg.path.display())));
            }
            cifar::load_batches(&files.iter().map(PathBuf::as_path).collect::<Vec<_>>())
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn split(images: &LabelledImages, cfg: &DataConfig, task: TaskName) -> Result<Splits> {
    let need = cfg.train_size + cfg.test_size;
    if cfg.train_size == 0 || cfg.test_size == 0 || need > images.len() {
        return Err(Error::usage(format!(
            "{} train + {} test records requested, {} has {} (both must be positive)",
            cfg.train_size,
            cfg.test_size,
            cfg.path.display(),
            images.len()
        )));
    }
    let dim = images.image_len();
    let all = match task {
        TaskName::Classification => {
            let labels = images.labels[..need].iter().map(|&l| usize::from(l)).collect();
            Dataset::classification(dim, images.pixels[..need * dim].to_vec(), labels, CLASSES)?
        }
        TaskName::Reconstruction => Dataset::reconstruction(dim, images.pixels[..need * dim].to_vec())?,
    };
    Ok(Splits {
        train: all.slice(0, cfg.train_size),
        test: all.slice(cfg.train_size, need),
    })
}

pub fn load(cfg: &DataConfig, task: TaskName) -> Result<Splits> {
    split(&load_images(cfg)?, cfg, task)
}
