//! Subcommand implementations.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cerebroflow_core::dataset::{
    augment_networks, read_networks, read_samples, split_networks, synth_networks, write_dataset,
    Manifest, Sample,
};
use cerebroflow_core::eval::{
    evaluate_fold, merge, plan_fold, run_fold, select_samples, Evaluation, FoldReport,
};
use cerebroflow_core::extraction::extract_graph;
use cerebroflow_core::flow::diagnostics;
use cerebroflow_core::gnn::{train, Checkpoint, History};
use cerebroflow_core::io::{nifti, raw, read_volume};
use cerebroflow_core::phantom::y_phantom;
use cerebroflow_core::segmentation::segment;
use cerebroflow_core::{solve_flow, BoundaryConditions, VascularGraph};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Cli, Command};
use crate::config::{provenance, RunConfig};
use crate::plot::{read_scatter_csv, scatter_svg, write_scatter_csv};
use crate::UserError;

/// Writes `value` as pretty JSON with a top-level `provenance` entry.
fn write_json(path: &Path, value: &impl Serialize, prov: &Value) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("provenance".into(), prov.clone());
    }
    fs::write(path, serde_json::to_string_pretty(&v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Adds provenance to a JSON file written by the core crate.
fn stamp_json(path: &Path, prov: &Value) -> Result<()> {
    let v: Value = serde_json::from_slice(&fs::read(path)?)?;
    write_json(path, &v, prov)
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Segment { segment, .. } => segment.apply(&mut cfg),
        Command::Graph { extract, .. } => extract.apply(&mut cfg),
        Command::Synth { synth, .. } => synth.apply(&mut cfg),
        Command::Solve { solve, .. } => solve.apply(&mut cfg),
        Command::Augment { augment, .. } => augment.apply(&mut cfg),
        Command::Split { split, .. } => split.apply(&mut cfg),
        Command::Train { train, .. } => train.apply(&mut cfg),
        Command::Eval { plot, .. } => plot.apply(&mut cfg),
        Command::Plot { .. } => {}
        Command::Pipeline {
            synth,
            augment,
            split,
            train,
            plot,
            ..
        } => {
            synth.apply(&mut cfg);
            augment.apply(&mut cfg);
            split.apply(&mut cfg);
            train.apply(&mut cfg);
            plot.apply(&mut cfg);
        }
        Command::Phantom { phantom, .. } => phantom.apply(&mut cfg),
    }
    Ok(cfg.finalize())
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Segment { .. } => "segment",
        Command::Graph { .. } => "graph",
        Command::Synth { .. } => "synth",
        Command::Solve { .. } => "solve",
        Command::Augment { .. } => "augment",
        Command::Split { .. } => "split",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Plot { .. } => "plot",
        Command::Pipeline { .. } => "pipeline",
        Command::Phantom { .. } => "phantom",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let prov = provenance(command_name(&cli.command), &cfg)?;
    match &cli.command {
        Command::Segment { input, output, .. } => cmd_segment(input, output, &cfg, &prov),
        Command::Graph { mask, output, .. } => cmd_graph(mask, output, &cfg, &prov),
        Command::Synth { out, .. } => cmd_synth(out, &cfg, &prov),
        Command::Solve { graph, output, .. } => cmd_solve(graph, output, &cfg, &prov),
        Command::Augment { data, .. } => cmd_augment(data, &cfg, &prov),
        Command::Split { data, .. } => cmd_split(data, &cfg, &prov),
        Command::Train {
            data, fold, out, ..
        } => cmd_train(data, *fold, out, &cfg, &prov),
        Command::Eval {
            data,
            fold,
            checkpoint,
            out,
            ..
        } => cmd_eval(data, *fold, checkpoint, out, &cfg, &prov),
        Command::Plot {
            input,
            output,
            title,
        } => cmd_plot(input, output, title.as_deref(), &prov),
        Command::Pipeline { out, .. } => cmd_pipeline(out, &cfg, &prov),
        Command::Phantom { output, truth, .. } => {
            cmd_phantom(output, truth.as_deref(), &cfg, &prov)
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn cmd_segment(input: &Path, output: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let grid = read_volume(input).with_context(|| format!("reading {}", input.display()))?;
    let mask = segment(&grid, &cfg.segment)?;
    ensure_parent(output)?;
    raw::write_mask(output, &mask)?;
    stamp_json(output, prov)?;
    println!(
        "{} foreground voxels in {} clusters",
        mask.count(),
        mask.cluster_count()
    );
    Ok(())
}

fn cmd_graph(mask_path: &Path, output: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let mask =
        raw::read_mask(mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
    let graph = extract_graph(&mask, &cfg.extract)?;
    ensure_parent(output)?;
    write_json(output, &graph, prov)?;
    println!("{} nodes, {} edges", graph.nodes.len(), graph.edges.len());
    Ok(())
}

fn cmd_synth(out: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let networks = synth_networks(cfg.seed, &cfg.synth)?;
    write_dataset(out, &networks, &[], None, Some(prov.clone()))?;
    println!("{} networks written to {}", networks.len(), out.display());
    Ok(())
}

fn cmd_solve(graph_path: &Path, output: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let graph = VascularGraph::read(graph_path)
        .with_context(|| format!("reading {}", graph_path.display()))?;
    let s = &cfg.solve;
    let bc = BoundaryConditions::uniform(&graph, s.inlet_pressure, s.outlet_pressure, s.viscosity);
    let state = solve_flow(&graph, &bc)?;
    let diag = diagnostics(&graph, &state);
    let mut v = serde_json::to_value(&state)?;
    v["diagnostics"] = serde_json::to_value(&diag)?;
    ensure_parent(output)?;
    write_json(output, &v, prov)?;
    println!("{}", serde_json::to_string_pretty(&diag)?);
    Ok(())
}

fn load_manifest(data: &Path) -> Result<Manifest> {
    Manifest::read(data)
        .map_err(|e| UserError(format!("no dataset at {}: {e}", data.display())).into())
}

fn cmd_augment(data: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let manifest = load_manifest(data)?;
    let networks = read_networks(data, &manifest)?;
    let samples = augment_networks(&networks, cfg.seed, cfg.augment_count, &cfg.augment)?;
    write_dataset(
        data,
        &networks,
        &samples,
        manifest.split_plan,
        Some(prov.clone()),
    )?;
    println!("{} samples written", samples.len());
    Ok(())
}

fn cmd_split(data: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let mut manifest = load_manifest(data)?;
    let networks = read_networks(data, &manifest)?;
    let plan = split_networks(&networks, cfg.folds, cfg.seed)?;
    for (k, f) in plan.folds.iter().enumerate() {
        println!(
            "fold {k}: {} train / {} test networks",
            f.train.len(),
            f.test.len()
        );
    }
    manifest.split_plan = Some(plan);
    manifest.provenance = Some(prov.clone());
    manifest.write(data)?;
    Ok(())
}

fn load_samples(data: &Path) -> Result<(Manifest, Vec<Sample>)> {
    let manifest = load_manifest(data)?;
    if manifest.samples.is_empty() {
        return Err(UserError(format!(
            "dataset {} has no samples; run augment first",
            data.display()
        ))
        .into());
    }
    let samples = read_samples(data, &manifest)?;
    Ok((manifest, samples))
}

fn write_history(path: &Path, history: &History) -> Result<()> {
    fs::write(path, history.to_csv()).with_context(|| format!("writing {}", path.display()))
}

fn write_checkpoint(path: &Path, ck: &Checkpoint, prov: &Value) -> Result<()> {
    let ck = Checkpoint {
        provenance: Some(prov.clone()),
        ..ck.clone()
    };
    ck.write(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_train(data: &Path, fold: usize, out: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let (manifest, samples) = load_samples(data)?;
    let plan = manifest.split_plan.ok_or_else(|| {
        UserError(format!(
            "dataset {} has no split plan; run split first",
            data.display()
        ))
    })?;
    let fp = plan_fold(&plan, fold, &cfg.train, cfg.val_fraction)?;
    let train_set = select_samples(&samples, &fp.train_networks);
    let val_set = select_samples(&samples, &fp.val_networks);
    let outcome = train(&train_set, &val_set, &fp.config)?;
    fs::create_dir_all(out)?;
    let ck = Checkpoint::new(fp.config.clone(), outcome.stats, outcome.params);
    write_checkpoint(&out.join("checkpoint.json"), &ck, prov)?;
    write_history(&out.join("history.csv"), &outcome.history)?;
    println!(
        "fold {fold}: best validation loss at epoch {}",
        outcome
            .history
            .best_epoch
            .map_or("-".into(), |e| e.to_string())
    );
    Ok(())
}

fn write_scatter(out: &Path, eval: &Evaluation, cfg: &RunConfig, prov: &Value) -> Result<()> {
    for (name, pairs) in [("pressure", &eval.pressure), ("flow", &eval.flow)] {
        let pts = pairs.subsample(cfg.plot_points, cfg.seed);
        write_scatter_csv(&out.join(format!("scatter_{name}.csv")), &pts)?;
        let title = format!("{name}: truth vs prediction");
        fs::write(
            out.join(format!("scatter_{name}.svg")),
            scatter_svg(&pts, &title, Some(prov)),
        )?;
    }
    Ok(())
}

fn print_metrics(label: &str, eval: &Evaluation) {
    let m = &eval.pooled;
    println!(
        "{label}: pressure accuracy {:.2}% pearson {:.4} | flow accuracy {:.2}% pearson {:.4}",
        m.accuracy_pressure, m.pearson_pressure, m.accuracy_flow, m.pearson_flow
    );
}

fn cmd_eval(
    data: &Path,
    fold: usize,
    checkpoint: &Path,
    out: &Path,
    cfg: &RunConfig,
    prov: &Value,
) -> Result<()> {
    let ck = Checkpoint::read(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let stats = ck
        .stats()
        .context("checkpoint has no normalization statistics")?;
    let (manifest, samples) = load_samples(data)?;
    let plan = manifest.split_plan.ok_or_else(|| {
        UserError(format!(
            "dataset {} has no split plan; run split first",
            data.display()
        ))
    })?;
    let test = plan
        .folds
        .get(fold)
        .ok_or_else(|| {
            UserError(format!(
                "fold {fold} does not exist; the plan has {} folds",
                plan.folds.len()
            ))
        })?
        .test
        .clone();
    let eval = evaluate_fold(&ck.params, stats, &select_samples(&samples, &test))?;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("metrics.json"),
        &json!({ "fold": fold, "test_networks": test, "evaluation": eval }),
        prov,
    )?;
    write_scatter(out, &eval, cfg, prov)?;
    print_metrics(&format!("fold {fold}"), &eval);
    Ok(())
}

fn cmd_plot(input: &Path, output: &Path, title: Option<&str>, prov: &Value) -> Result<()> {
    let pts = read_scatter_csv(input)?;
    let title = title
        .map(str::to_owned)
        .unwrap_or_else(|| input.display().to_string());
    ensure_parent(output)?;
    fs::write(output, scatter_svg(&pts, &title, Some(prov)))?;
    Ok(())
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().with_context(|| format!("stage '{name}' failed"))
}

fn cmd_pipeline(out: &Path, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let data = out.join("data");
    let networks = stage("synth", || Ok(synth_networks(cfg.seed, &cfg.synth)?))?;
    let samples = stage("augment", || {
        Ok(augment_networks(
            &networks,
            cfg.seed,
            cfg.augment_count,
            &cfg.augment,
        )?)
    })?;
    let plan = stage("split", || {
        Ok(split_networks(&networks, cfg.folds, cfg.seed)?)
    })?;
    stage("write dataset", || {
        Ok(write_dataset(
            &data,
            &networks,
            &samples,
            Some(plan.clone()),
            Some(prov.clone()),
        )?)
    })?;
    let mut reports: Vec<FoldReport> = Vec::new();
    for k in 0..plan.folds.len() {
        let report = stage(&format!("train fold {k}"), || {
            Ok(run_fold(
                &samples,
                &plan_fold(&plan, k, &cfg.train, cfg.val_fraction)?,
            )?)
        })?;
        let dir = out.join(format!("fold_{k}"));
        fs::create_dir_all(&dir)?;
        if let Some(ck) = &report.checkpoint {
            write_checkpoint(&dir.join("checkpoint.json"), ck, prov)?;
        }
        write_history(&dir.join("history.csv"), &report.history)?;
        print_metrics(&format!("fold {k}"), &report.evaluation);
        reports.push(report);
    }
    let aggregate = stage("eval", || {
        Ok(merge(
            &reports
                .iter()
                .map(|r| r.evaluation.clone())
                .collect::<Vec<_>>(),
        )?)
    })?;
    write_json(
        &out.join("metrics.json"),
        &json!({ "aggregate": aggregate, "folds": reports }),
        prov,
    )?;
    stage("plot", || write_scatter(out, &aggregate, cfg, prov))?;
    print_metrics("all folds", &aggregate);
    Ok(())
}

fn cmd_phantom(output: &Path, truth: Option<&Path>, cfg: &RunConfig, prov: &Value) -> Result<()> {
    let (grid, t) = y_phantom(&cfg.phantom)?;
    ensure_parent(output)?;
    if output.extension().and_then(|e| e.to_str()) == Some("json") {
        raw::write_grid(output, &grid)?;
        stamp_json(output, prov)?;
    } else {
        nifti::write_nifti_f32(output, &grid)?;
    }
    if let Some(path) = truth {
        ensure_parent(path)?;
        write_json(path, &t, prov)?;
    }
    Ok(())
}
