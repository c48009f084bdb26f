//! `metric` configuration: JSON file merged with flags, flags winning.

use std::path::Path;

use fdbench_core::kernels::{Bandwidth, Estimator, KernelPreset};
use fdbench_core::mixture::{FldMode, FldParams};
use fdbench_core::moments::Jitter;
use fdbench_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::MetricArgs;

pub const DEFAULT_KID_BLOCK_SIZE: usize = 1000;
pub const DEFAULT_KID_BLOCKS: usize = 100;

/// A number, or one of the keywords a field accepts.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumberOrWord {
    Number(f64),
    Word(String),
}

impl NumberOrWord {
    fn as_text(&self) -> String {
        match self {
            NumberOrWord::Number(v) => v.to_string(),
            NumberOrWord::Word(w) => w.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidConfig {
    pub jitter: Option<NumberOrWord>,
    pub squared: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KidConfig {
    pub kernel: Option<String>,
    pub block_size: Option<usize>,
    pub n_blocks: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmmdConfig {
    pub sigma: Option<NumberOrWord>,
    pub estimator: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FldConfig {
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub n_samples: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Subset of "fid", "kid", "cmmd", "fld"; used when no metric flag is given.
    pub metrics: Option<Vec<String>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub fid: FidConfig,
    #[serde(default)]
    pub kid: KidConfig,
    #[serde(default)]
    pub cmmd: CmmdConfig,
    #[serde(default)]
    pub fld: FldConfig,
}

impl MetricConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Selection {
    pub fid: bool,
    pub kid: bool,
    pub cmmd: bool,
    pub fld: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FidParams {
    pub jitter: String,
    pub squared: bool,
    #[serde(skip)]
    pub resolved_jitter: Jitter,
}

#[derive(Debug, Clone, Serialize)]
pub struct KidParams {
    pub kernel: KernelPreset,
    pub block_size: usize,
    pub n_blocks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CmmdParams {
    pub sigma: String,
    pub estimator: Estimator,
    #[serde(skip)]
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub selection: Selection,
    pub fid: FidParams,
    pub kid: KidParams,
    pub cmmd: CmmdParams,
    pub fld_mode: FldMode,
    pub fld: FldParams,
}

fn parse_jitter(text: &str) -> Result<Jitter> {
    match text {
        "auto" => Ok(Jitter::Auto),
        "off" => Ok(Jitter::Off),
        other => {
            let eps: f64 = other.parse().map_err(|_| {
                Error::Validation(format!("jitter must be auto, off or a number, got {other:?}"))
            })?;
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Validation(format!("jitter must be ≥ 0, got {eps}")));
            }
            Ok(Jitter::Fixed(eps))
        }
    }
}

fn select(names: &[String]) -> Result<Selection> {
    let mut s = Selection::default();
    for n in names {
        match n.as_str() {
            "fid" => s.fid = true,
            "kid" => s.kid = true,
            "cmmd" => s.cmmd = true,
            "fld" => s.fld = true,
            other => return Err(Error::Validation(format!("unknown metric {other:?}"))),
        }
    }
    Ok(s)
}

pub fn resolve(args: &MetricArgs, cfg: MetricConfig) -> Result<Resolved> {
    let flags = Selection {
        fid: args.fid,
        kid: args.kid,
        cmmd: args.cmmd,
        fld: args.fld,
    };
    let selection = if flags != Selection::default() {
        flags
    } else {
        select(cfg.metrics.as_deref().unwrap_or_default())?
    };
    if selection == Selection::default() {
        return Err(Error::Validation(
            "no metric selected; pass --fid, --kid, --cmmd or --fld".into(),
        ));
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let jitter = args
        .jitter
        .clone()
        .or_else(|| cfg.fid.jitter.as_ref().map(NumberOrWord::as_text))
        .unwrap_or_else(|| "auto".into());
    let fid = FidParams {
        resolved_jitter: parse_jitter(&jitter)?,
        jitter,
        squared: args.squared || cfg.fid.squared.unwrap_or(false),
    };

    let kernel: KernelPreset = args
        .kid_kernel
        .as_deref()
        .or(cfg.kid.kernel.as_deref())
        .unwrap_or("kid-poly3")
        .parse()?;
    if kernel == KernelPreset::CmmdRbf {
        return Err(Error::Validation(
            "KID takes kid-poly3 or kid-rq; use --cmmd for the RBF kernel".into(),
        ));
    }
    let kid = KidParams {
        kernel,
        block_size: args
            .kid_block_size
            .or(cfg.kid.block_size)
            .unwrap_or(DEFAULT_KID_BLOCK_SIZE),
        n_blocks: args.kid_blocks.or(cfg.kid.n_blocks).unwrap_or(DEFAULT_KID_BLOCKS),
        seed: args.seed.or(cfg.kid.seed).unwrap_or(seed),
    };

    let sigma = args
        .cmmd_sigma
        .clone()
        .or_else(|| cfg.cmmd.sigma.as_ref().map(NumberOrWord::as_text))
        .unwrap_or_else(|| "median".into());
    let estimator: Estimator = args
        .cmmd_estimator
        .as_deref()
        .or(cfg.cmmd.estimator.as_deref())
        .unwrap_or("unbiased")
        .parse()?;
    let cmmd = CmmdParams {
        bandwidth: sigma.parse()?,
        sigma,
        estimator,
    };

    let fld_mode: FldMode = args
        .fld_mode
        .as_deref()
        .or(cfg.fld.mode.as_deref())
        .unwrap_or("em_kl")
        .parse()?;
    let defaults = FldParams::default();
    let fld = FldParams {
        k: args.fld_k.or(cfg.fld.k),
        seed: args.seed.or(cfg.fld.seed).unwrap_or(seed),
        max_iter: cfg.fld.max_iter.unwrap_or(defaults.max_iter),
        tol: cfg.fld.tol.unwrap_or(defaults.tol),
        n_samples: cfg.fld.n_samples.unwrap_or(defaults.n_samples),
        variance_floor: defaults.variance_floor,
    };

    Ok(Resolved {
        selection,
        fid,
        kid,
        cmmd,
        fld_mode,
        fld,
    })
}
