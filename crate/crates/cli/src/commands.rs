use std::collections::BTreeMap;
use std::path::Path;

use fdbench_core::alignment::ladder::{group_by_ladder, read_ladder_csv, write_ladder_csv};
use fdbench_core::alignment::{alignment_report, consistency_matrix};
use fdbench_core::diagnostics::DiagnosticsReport;
use fdbench_core::features::{
    encode_feature_set, import_csv, payload_checksum, read_feature_set, write_feature_set,
};
use fdbench_core::kernels::{cmmd_score, kid_score, Bandwidth, Estimator, KernelPreset};
use fdbench_core::mixture::fld_score;
use fdbench_core::moments::{fit_gaussian_summary, frechet_report, FrechetOptions};
use fdbench_core::synth::{make_quality_ladder, LadderSpec};
use fdbench_core::{Error, FeatureMeta, FeatureSet, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{AlignArgs, ConsistencyArgs, ConvertArgs, DiagnoseArgs, MetricArgs, SimulateArgs};
use crate::config::{self, MetricConfig};
use crate::json::{emit, render};

#[derive(Serialize)]
struct InputInfo {
    path: String,
    n: usize,
    d: usize,
    checksum: String,
    meta: FeatureMeta,
}

fn describe(path: &Path, fs: &FeatureSet) -> InputInfo {
    let bytes: Vec<u8> = fs.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    InputInfo {
        path: path.display().to_string(),
        n: fs.n(),
        d: fs.d(),
        checksum: format!("{:016x}", payload_checksum(&bytes)),
        meta: fs.meta().clone(),
    }
}

pub fn convert(a: &ConvertArgs) -> Result<()> {
    let source = a.source.clone().unwrap_or_else(|| {
        a.input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let mut meta = FeatureMeta::new(a.role.parse()?)
        .with_extractor(a.extractor.clone())
        .with_source(source);
    meta.preprocessing_tag = a.preprocessing.parse()?;
    let fs = import_csv(&a.input, meta)?;
    write_feature_set(&fs, &a.output)?;
    let summary = json!({
        "output": a.output.display().to_string(),
        "n": fs.n(),
        "d": fs.d(),
        "bytes": encode_feature_set(&fs)?.len(),
    });
    emit(&render(&summary)?, None)
}

pub fn metric(a: &MetricArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => MetricConfig::load(p)?,
        None => MetricConfig::default(),
    };
    let params = config::resolve(a, cfg)?;
    let real = read_feature_set(&a.real)?;
    let gen = read_feature_set(&a.gen)?;
    let train = a.train.as_ref().map(read_feature_set).transpose()?;

    let mut inputs = BTreeMap::new();
    inputs.insert("real", describe(&a.real, &real));
    inputs.insert("gen", describe(&a.gen, &gen));
    if let (Some(p), Some(t)) = (&a.train, &train) {
        inputs.insert("train", describe(p, t));
    }

    let mut metrics = serde_json::Map::new();
    let sel = params.selection;
    if sel.fid {
        let opts = FrechetOptions {
            jitter: params.fid.resolved_jitter,
            ..Default::default()
        };
        let report = frechet_report(
            &fit_gaussian_summary(&real)?,
            &fit_gaussian_summary(&gen)?,
            &opts,
        )?;
        let value = if params.fid.squared {
            report.squared
        } else {
            report.distance
        };
        metrics.insert(
            "fid".into(),
            json!({ "value": value, "report": report, "params": params.fid }),
        );
    }
    if sel.kid {
        let mut kp = params.kid.clone();
        kp.block_size = kp.block_size.min(real.n()).min(gen.n());
        let kernel = kp.kernel.resolve(&real, &gen)?;
        let est = kid_score(&real, &gen, &kernel, kp.block_size, kp.n_blocks, kp.seed)?;
        metrics.insert(
            "kid".into(),
            json!({ "value": est.value, "estimate": est, "params": kp }),
        );
    }
    if sel.cmmd {
        let est = cmmd_score(&real, &gen, params.cmmd.bandwidth, params.cmmd.estimator)?;
        metrics.insert(
            "cmmd".into(),
            json!({ "value": est.value, "estimate": est, "params": params.cmmd }),
        );
    }
    if sel.fld {
        let train = train.as_ref().ok_or_else(|| {
            Error::Protocol("--fld needs --train with role real_train".into())
        })?;
        let r = fld_score(&gen, train, &real, params.fld_mode, &params.fld)?;
        metrics.insert(
            "fld".into(),
            json!({ "value": r.score, "result": r, "params": params.fld }),
        );
    }
    let out = json!({ "inputs": inputs, "metrics": Value::Object(metrics) });
    emit(&render(&out)?, a.output.as_deref())
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    if !(a.threshold >= 0.0 && a.threshold.is_finite()) {
        return Err(Error::Validation(format!(
            "threshold must be ≥ 0, got {}",
            a.threshold
        )));
    }
    let fs = read_feature_set(&a.input)?;
    let report = DiagnosticsReport::compute(&fs, a.threshold);
    if let Some(p) = &a.csv {
        std::fs::write(p, report.to_csv())?;
    }
    let out = json!({ "input": describe(&a.input, &fs), "report": report });
    emit(&render(&out)?, a.output.as_deref())
}

/// Keeps ladder ids safe to use as file stems.
fn file_stem(ladder_id: &str) -> String {
    ladder_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn align(a: &AlignArgs) -> Result<()> {
    let entries = read_ladder_csv(&a.ladder)?;
    let reports = group_by_ladder(&entries)
        .into_iter()
        .map(|(_, group)| alignment_report(&group, &a.score_key))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&a.out_dir)?;
    for r in &reports {
        let stem = file_stem(&r.ladder_id);
        let md = r.to_markdown();
        std::fs::write(a.out_dir.join(format!("{stem}.align.json")), render(r)?)?;
        std::fs::write(a.out_dir.join(format!("{stem}.align.md")), &md)?;
        std::fs::write(a.out_dir.join(format!("{stem}.plot.csv")), r.plot_csv())?;
        println!("{md}");
    }
    Ok(())
}

pub fn consistency(a: &ConsistencyArgs) -> Result<()> {
    let mut entries = Vec::new();
    for p in &a.ladder {
        entries.extend(read_ladder_csv(p)?);
    }
    let m = consistency_matrix(&entries)?;
    if let Some(p) = &a.markdown {
        std::fs::write(p, m.to_markdown())?;
    }
    emit(&render(&m)?, a.output.as_deref())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec: LadderSpec = serde_json::from_str(&std::fs::read_to_string(&a.spec)?)?;
    let mut ladder = make_quality_ladder(&spec, &a.ladder_id)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let reference = &ladder.reference;
    write_feature_set(reference, a.out_dir.join("reference.fdbf"))?;
    let real_summary = fit_gaussian_summary(reference)?;
    let block_size = spec.n_per_step.min(config::DEFAULT_KID_BLOCK_SIZE);
    let mut files = Vec::new();
    for (step, entry) in ladder.steps.iter().zip(ladder.entries.iter_mut()) {
        let name = format!("{}.fdbf", file_stem(&step.model_id));
        write_feature_set(&step.features, a.out_dir.join(&name))?;
        files.push(name);
        let fd = frechet_report(
            &real_summary,
            &fit_gaussian_summary(&step.features)?,
            &FrechetOptions::default(),
        )?;
        entry.set_metric("fd", fd.distance);
        let kernel = KernelPreset::KidPoly3.resolve(reference, &step.features)?;
        let kid = kid_score(reference, &step.features, &kernel, block_size, a.kid_blocks, spec.seed)?;
        entry.set_metric("kid", kid.value);
        let cmmd = cmmd_score(reference, &step.features, Bandwidth::Median, Estimator::Unbiased)?;
        entry.set_metric("cmmd", cmmd.value);
    }
    std::fs::write(a.out_dir.join("ladder.csv"), write_ladder_csv(&ladder.entries))?;
    let summary = json!({
        "spec": spec,
        "ladder_id": a.ladder_id,
        "reference": "reference.fdbf",
        "steps": files,
        "entries": ladder.entries.iter().map(|e| json!({
            "model_id": e.model_id,
            "control_value": e.control_value,
            "metrics": e.metric_values.iter().cloned().collect::<BTreeMap<_, _>>(),
        })).collect::<Vec<_>>(),
        "params": {
            "fd": { "jitter": "auto" },
            "kid": { "kernel": KernelPreset::KidPoly3, "block_size": block_size, "n_blocks": a.kid_blocks, "seed": spec.seed },
            "cmmd": { "sigma": "median", "estimator": Estimator::Unbiased },
        },
    });
    let text = render(&summary)?;
    std::fs::write(a.out_dir.join("simulate.json"), &text)?;
    emit(&text, None)
}
