use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rwdre::analysis::{classify_series, run_replicas, zero_one_sweep, Simulator, TrichotomyEstimate};
use rwdre::config::{preset, ExperimentConfig, OutputFormat, PRESETS};
use rwdre::env::Window;
use rwdre::graphical::{evolve_walk, sample_arrow_field};
use rwdre::models::ModelSpec;
use rwdre::path::WalkStatus;
use rwdre::rng::tag;
use rwdre::validate::{run_all, SuiteOptions};
use serde_json::{json, Value};

use crate::{apply_overrides, Failure, GlobalArgs, Selected};

/// Collects the artifacts of one command and writes them once the
/// computation is over, so that a failed run leaves no partial files.
struct Artifacts {
    dir: PathBuf,
    formats: Vec<OutputFormat>,
    files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            dir: config.output.directory.clone(),
            formats: config.output.formats.clone(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, format: OutputFormat, name: impl AsRef<Path>, body: String) {
        if self.formats.contains(&format) {
            self.files.push((self.dir.join(name), body));
        }
    }

    fn jsonl(&mut self, name: &str, records: &[Value]) {
        let mut body = String::new();
        for r in records {
            body.push_str(&serde_json::to_string(r).expect("json values serialise"));
            body.push('\n');
        }
        self.add(OutputFormat::Jsonl, name, body);
    }

    fn write(self) -> Result<(), Failure> {
        for (path, body) in &self.files {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Failure::Io(format!("{}: {e}", parent.display())))?;
            }
            fs::write(path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn record(config: &ExperimentConfig, kind: &str, mut fields: Value) -> Value {
    let obj = fields.as_object_mut().expect("record fields are an object");
    obj.insert("config_hash".into(), json!(config.hash()));
    obj.insert("seed".into(), json!(config.rng.base_seed));
    obj.insert("record".into(), json!(kind));
    fields
}

fn estimate_fields(t: f64, e: &TrichotomyEstimate) -> Value {
    let mut v = serde_json::to_value(e).expect("estimate serialises");
    v.as_object_mut().unwrap().insert("t".into(), json!(t));
    v
}

fn estimate_csv_row(out: &mut String, lead: &str, e: &TrichotomyEstimate) {
    let _ = writeln!(
        out,
        "{lead},{},{},{},{},{},{},{},{},{:?}",
        e.p_right.estimate,
        e.p_left.estimate,
        e.p_rec.estimate,
        e.p_unclassified.estimate,
        e.replicas,
        e.discarded_window,
        e.discarded_explosion,
        e.in_zero_one_band(),
        e.verdict
    );
}

const ESTIMATE_COLUMNS: &str = "p_right,p_left,p_rec,p_unclassified,replicas,discarded_window,discarded_explosion,in_band,verdict";

struct Simulated {
    status: WalkStatus,
    jumps: u64,
    final_position: i64,
    end_time: f64,
    min_position: i64,
    max_position: i64,
    at_checkpoints: Vec<i64>,
    environment: Option<String>,
    arrows: Option<String>,
    path: String,
}

/// Writes `replicas` graphical realisations (environment and arrows on the
/// sites next to the path, and the path itself). Paths of the joint
/// exclusion simulator are written without environment.
pub fn simulate(sel: &Selected, replicas: usize) -> Result<(), Failure> {
    let config = &sel.config;
    if replicas == 0 {
        return Err(Failure::Config("--replicas must be at least 1".into()));
    }
    let plan = config.plan();
    let limits = plan.limits();
    let mut times = config.run.checkpoints.clone();
    times.push(plan.horizon);
    let joint = plan.simulator == Simulator::Joint && matches!(plan.model, ModelSpec::Ssep(_));
    if joint {
        log::warn!("the joint exclusion simulator does not store its environment; writing paths only");
    }
    let runs = run_replicas(replicas, config.rng.base_seed, |seeds| {
        let (path, environment, arrows) = if joint {
            (plan.run(seeds)?, None, None)
        } else {
            let env = Arc::new(plan.environment(seeds)?);
            let field = sample_arrow_field(env.clone(), seeds.child(tag::ARROWS).seed());
            let path = evolve_walk(&field, 0, &limits)?;
            let win = env.window();
            let near = Window::new(
                (path.min_position() - 1).max(win.x_min),
                (path.max_position() + 1).min(win.x_max),
                win.horizon,
            )?;
            (path, Some(env.restrict(near)?.to_text()?), Some(field.restrict(near)?.to_text()?))
        };
        Ok(Simulated {
            status: path.status(),
            jumps: path.arrows_crossed(),
            final_position: path.final_position(),
            end_time: path.end_time(),
            min_position: path.min_position(),
            max_position: path.max_position(),
            at_checkpoints: times.iter().map(|&t| path.position_at(t).unwrap_or(path.final_position())).collect(),
            environment,
            arrows,
            path: path.to_text(),
        })
    })?;

    let mut art = Artifacts::new(config);
    let mut records = Vec::new();
    let mut csv = String::from("replica,t,position,status\n");
    for (i, r) in runs.iter().enumerate() {
        println!(
            "replica {i}: {} jumps, final position {}, status {}",
            r.jumps,
            r.final_position,
            r.status.as_str()
        );
        records.push(record(
            config,
            "path_summary",
            json!({
                "replica": i,
                "status": r.status.as_str(),
                "jumps": r.jumps,
                "final_position": r.final_position,
                "end_time": r.end_time,
                "min_position": r.min_position,
                "max_position": r.max_position,
            }),
        ));
        for (t, x) in times.iter().zip(&r.at_checkpoints) {
            let _ = writeln!(csv, "{i},{t},{x},{}", r.status.as_str());
        }
        let stem = format!("trajectories/replica_{i:05}");
        if let (Some(env), Some(arrows)) = (&r.environment, &r.arrows) {
            art.add(OutputFormat::Text, format!("{stem}.env.txt"), env.clone());
            art.add(OutputFormat::Text, format!("{stem}.arrows.txt"), arrows.clone());
        }
        art.add(OutputFormat::Text, format!("{stem}.path.txt"), r.path.clone());
    }
    art.jsonl("simulate.jsonl", &records);
    art.add(OutputFormat::Csv, "simulate_positions.csv", csv);
    art.write()?;
    if runs.iter().all(|r| r.status != WalkStatus::Completed) {
        return Err(Failure::Suite("no replica completed its horizon".into()));
    }
    Ok(())
}

pub fn classify(sel: &Selected) -> Result<(), Failure> {
    let config = &sel.config;
    let run = &config.run;
    let series = classify_series(&config.plan(), run.level, &run.checkpoints, run.replicas, config.rng.base_seed)?;
    let mut times = run.checkpoints.clone();
    times.push(run.horizon);
    let mut art = Artifacts::new(config);
    let mut records = Vec::new();
    let mut csv = format!("t,{ESTIMATE_COLUMNS}\n");
    for (t, e) in times.iter().zip(&series) {
        records.push(record(config, "trichotomy", estimate_fields(*t, e)));
        estimate_csv_row(&mut csv, &t.to_string(), e);
    }
    let last = series.last().expect("horizon estimate");
    println!(
        "{}: verdict {:?} at T = {}, K = {} over {} replicas: right {:.4} [{:.4}, {:.4}], left {:.4} [{:.4}, {:.4}], recurrent {:.4} [{:.4}, {:.4}], unclassified {:.4}",
        sel.label,
        last.verdict,
        run.horizon,
        run.level,
        last.replicas,
        last.p_right.estimate,
        last.p_right.lower,
        last.p_right.upper,
        last.p_left.estimate,
        last.p_left.lower,
        last.p_left.upper,
        last.p_rec.estimate,
        last.p_rec.lower,
        last.p_rec.upper,
        last.p_unclassified.estimate,
    );
    art.jsonl("classify.jsonl", &records);
    art.add(OutputFormat::Csv, "classify_series.csv", csv);
    art.write()
}

pub fn sweep(sel: &Selected) -> Result<(), Failure> {
    let config = &sel.config;
    let grid = config
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("{}: no [sweep] section", sel.label)))?;
    let run = &config.run;
    let points = zero_one_sweep(
        &config.plan(),
        &grid.parameter,
        &grid.values,
        run.level,
        run.replicas,
        config.rng.base_seed,
    )?;
    let mut art = Artifacts::new(config);
    let mut records = Vec::new();
    let mut csv = format!("{},{ESTIMATE_COLUMNS}\n", grid.parameter);
    for p in &points {
        let mut fields = estimate_fields(run.horizon, &p.estimate);
        let obj = fields.as_object_mut().unwrap();
        obj.insert("parameter".into(), json!(p.parameter));
        obj.insert("value".into(), json!(p.value));
        obj.insert("in_band".into(), json!(p.in_band));
        records.push(record(config, "sweep_point", fields));
        estimate_csv_row(&mut csv, &p.value.to_string(), &p.estimate);
        println!(
            "{} = {}: right {:.4}, left {:.4}, recurrent {:.4}, verdict {:?}{}",
            p.parameter,
            p.value,
            p.estimate.p_right.estimate,
            p.estimate.p_left.estimate,
            p.estimate.p_rec.estimate,
            p.estimate.verdict,
            if p.in_band { "" } else { "  [outside the zero-one bands]" }
        );
    }
    let flagged = points.iter().filter(|p| !p.in_band).count();
    if flagged > 0 {
        eprintln!(
            "warning: {flagged} sweep point(s) outside the zero-one bands; rerun with a longer horizon or more replicas"
        );
    }
    art.jsonl("sweep.jsonl", &records);
    art.add(OutputFormat::Csv, "sweep.csv", csv);
    art.write()
}

/// Runs every suite on the selected configuration, or on the whole preset
/// catalogue when none is selected.
pub fn validate(selected: Option<Selected>, global: &GlobalArgs, inject_fault: bool) -> Result<(), Failure> {
    let catalogue: Vec<(String, ExperimentConfig)> = match selected {
        Some(s) => vec![(s.label, s.config)],
        None => PRESETS
            .iter()
            .map(|&n| {
                let mut c = preset(n)?;
                apply_overrides(&mut c, global);
                Ok((n.to_string(), c))
            })
            .collect::<rwdre::error::Result<_>>()?,
    };
    let seed = catalogue[0].1.rng.base_seed;
    let opts = SuiteOptions {
        inject_fault,
        ..SuiteOptions::default()
    };
    let reports = run_all(&catalogue, &opts, seed)?;
    let mut records = Vec::new();
    for r in &reports {
        println!("{} {} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.model, r.detail);
        let config = &catalogue.iter().find(|(l, _)| *l == r.model).expect("report of a catalogue entry").1;
        let mut fields = serde_json::to_value(r).expect("report serialises");
        fields.as_object_mut().unwrap().insert("fault_injected".into(), json!(inject_fault));
        records.push(record(config, "suite", fields));
    }
    let mut art = Artifacts::new(&catalogue[0].1);
    art.jsonl("validate.jsonl", &records);
    art.write()?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({})", r.suite, r.model))
        .collect();
    if failed.is_empty() {
        println!("all {} suite runs passed", reports.len());
        Ok(())
    } else {
        Err(Failure::Suite(format!("failing suites: {}", failed.join(", "))))
    }
}
