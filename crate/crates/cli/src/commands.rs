use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use mobikg::embed::{train_location_embeddings, EmbedConfig, EmbedError};
use mobikg::fog::{reference_model, write_sweep_csv, FogError, FogModel};
use mobikg::geo::GeoError;
use mobikg::health::HealthError;
use mobikg::io::{
    bench_pkg, build_region_samples, class_counts, daily_times, derive_pkg, load_dataset, load_pkg, mine_patterns,
    save_pkg, synthesize_scenario, write_cases_csv, write_places_csv, write_regions_geojson, write_routes_csv,
    write_trajectories_csv, write_users_csv, Dataset, DatasetPaths, IoError, SampleConfig, ScenarioConfig, Schema,
};
use mobikg::mining::{read_patterns_jsonl, write_patterns_jsonl, MinerError, PatternInstance, PatternKind};
use mobikg::net::{evaluate, predict, train_from, HotspotClass, NetError, NetParams, NetShape, RegionSample, TrainConfig};
use mobikg::pkg::{contact_trace, Entity, Pkg, PkgError, Relation};
use mobikg::spatial::{read_sc_csv, sc_panel, write_sc_csv, CasePanel, ScResult, SpatialError};

use crate::manifest::{digest_all, Manifest, MANIFEST_FORMAT};
use crate::{
    BenchArgs, Cli, Cmd, DeriveArgs, FogArgs, IngestArgs, Kind, MineArgs, PredictArgs, SampleInputs, ScPanelArgs,
    SynthArgs, TraceArgs, TrainArgs,
};

/// A bad argument combination caught before any module runs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

/// Files a command read and wrote, for the manifest.
#[derive(Default)]
struct Record {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Record {
    fn input(&mut self, p: &Path) {
        if p.is_file() {
            self.inputs.push(p.to_path_buf());
        }
    }

    fn inputs_in(&mut self, paths: &DatasetPaths) {
        self.input(&paths.regions);
        for p in [&paths.places, &paths.users, &paths.trajectories, &paths.cases, &paths.routes].into_iter().flatten() {
            self.input(p);
        }
    }
}

pub fn category(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<Invalid>() {
            return "usage";
        }
        if let Some(io) = cause.downcast_ref::<IoError>() {
            return match io {
                IoError::Parse { .. } | IoError::Dangling { .. } | IoError::Version { .. } => "input",
                IoError::Config(_) | IoError::Plant(_) => "config",
                IoError::File { .. } | IoError::Io(_) => "io",
                IoError::Json(_) | IoError::Csv(_) => "input",
                IoError::Pkg(_) => "pkg",
                IoError::Miner(_) => "miner",
                IoError::Geo(_) => "geo",
            };
        }
        if cause.is::<PkgError>() {
            return "pkg";
        }
        if cause.is::<MinerError>() {
            return "miner";
        }
        if cause.is::<SpatialError>() {
            return "spatial";
        }
        if cause.is::<GeoError>() {
            return "geo";
        }
        if cause.is::<NetError>() {
            return "net";
        }
        if cause.is::<EmbedError>() {
            return "embed";
        }
        if cause.is::<FogError>() {
            return "fog";
        }
        if cause.is::<HealthError>() {
            return "health";
        }
        if cause.is::<serde_json::Error>() {
            return "input";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "internal"
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(|e| IoError::File { path: out.clone(), source: e })?;
    let mut rec = Record::default();
    match &cli.cmd {
        Cmd::Ingest(a) => ingest(a, out, &mut rec)?,
        Cmd::Synth(a) => synth(a, cli.seed, out, &mut rec)?,
        Cmd::Derive(a) => derive(a, out, &mut rec)?,
        Cmd::Mine(a) => mine(a, out, &mut rec)?,
        Cmd::ScPanel(a) => sc(a, out, &mut rec)?,
        Cmd::Train(a) => train(a, cli.seed, out, &mut rec)?,
        Cmd::Predict(a) => predict_cmd(a, out, &mut rec)?,
        Cmd::Trace(a) => trace(a, out, &mut rec)?,
        Cmd::Fogsim(a) => fogsim(a, out, &mut rec)?,
        Cmd::BenchPkg(a) => bench(a, cli.seed, out, &mut rec)?,
    }
    let name = cli.cmd.name();
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: name,
        seed: cli.seed,
        args: &cli.cmd,
        inputs: digest_all(&rec.inputs, None)?,
        outputs: digest_all(&rec.outputs, Some(out))?,
    };
    let path = out.join(format!("manifest-{}.json", cli.cmd.manifest_stem()));
    write_json(&path, &manifest)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn open(path: &Path) -> anyhow::Result<BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| IoError::File { path: path.to_path_buf(), source: e })?;
    Ok(BufReader::new(f))
}

fn load_dir(dir: &Path, rec: &mut Record) -> anyhow::Result<Dataset> {
    let paths = DatasetPaths::in_dir(dir);
    rec.inputs_in(&paths);
    Ok(load_dataset(&paths, &Schema::default())?)
}

fn ingest(a: &IngestArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let mut paths = match (&a.data, &a.regions) {
        (Some(d), _) => DatasetPaths::in_dir(d),
        (None, Some(r)) => DatasetPaths { regions: r.clone(), ..Default::default() },
        (None, None) => return Err(Invalid("ingest needs --data or --regions".into()).into()),
    };
    if let Some(r) = &a.regions {
        paths.regions = r.clone();
    }
    for (slot, flag) in [
        (&mut paths.places, &a.places),
        (&mut paths.users, &a.users),
        (&mut paths.trajectories, &a.trajectories),
        (&mut paths.cases, &a.cases),
        (&mut paths.routes, &a.routes),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    let schema = match &a.schema {
        Some(p) => {
            rec.input(p);
            serde_json::from_reader(open(p)?).with_context(|| format!("reading schema {}", p.display()))?
        }
        None => Schema::default(),
    };
    rec.inputs_in(&paths);
    let ds = load_dataset(&paths, &schema)?;

    let targets: [(&str, &dyn Fn(&mut dyn Write) -> Result<(), IoError>); 6] = [
        ("regions.geojson", &|w| write_regions_geojson(&ds.regions, w)),
        ("places.csv", &|w| write_places_csv(&ds.places, w)),
        ("users.csv", &|w| write_users_csv(&ds.users, w)),
        ("trajectories.csv", &|w| write_trajectories_csv(&ds.users, w)),
        ("cases.csv", &|w| write_cases_csv(&ds.cases, w)),
        ("routes.csv", &|w| write_routes_csv(&ds.routes, w)),
    ];
    for (name, write) in targets {
        let path = out.join(name);
        let mut w = create(&path)?;
        write(&mut w)?;
        w.flush()?;
        rec.outputs.push(path);
    }
    let summary = BTreeMap::from([
        ("regions", ds.regions.len()),
        ("places", ds.places.len()),
        ("users", ds.users.len()),
        ("trajectory_points", ds.users.iter().map(|u| u.trajectory.len()).sum()),
        ("case_events", ds.cases.len()),
        ("cases", ds.cases.iter().map(|c| c.count as usize).sum()),
        ("routes", ds.routes.len()),
    ]);
    let path = out.join("ingest_summary.json");
    write_json(&path, &summary)?;
    rec.outputs.push(path);
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let mut cfg: ScenarioConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            let text = std::fs::read_to_string(p).map_err(|e| IoError::File { path: p.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| IoError::Parse {
                file: p.clone(),
                line: e.line() as u64,
                msg: e.to_string(),
            })?
        }
        None => ScenarioConfig::default(),
    };
    cfg.seed = seed;
    let sc = synthesize_scenario(&cfg)?;
    rec.outputs.extend(sc.write_dir(out)?);
    Ok(())
}

fn derive(a: &DeriveArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let settings = a.thresholds.resolve()?;
    if let Some(p) = &a.thresholds.settings {
        rec.input(p);
    }
    let ds = load_dir(&a.data, rec)?;
    let (pkg, counts) = derive_pkg(&ds, &settings)?;
    let path = out.join("pkg.txt");
    save_pkg(&pkg, &path)?;
    rec.outputs.push(path);
    let path = out.join("derive_summary.json");
    write_json(&path, &counts)?;
    rec.outputs.push(path);
    log::info!("derived {} facts", pkg.len());
    Ok(())
}

fn mine(a: &MineArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let settings = a.thresholds.resolve()?;
    if let Some(p) = &a.thresholds.settings {
        rec.input(p);
    }
    rec.input(&a.pkg);
    let pkg = load_pkg(&a.pkg)?;
    let ds = match &a.data {
        Some(d) => load_dir(d, rec)?,
        None => Dataset::default(),
    };
    let kind = match a.kind {
        Kind::Cascading => PatternKind::Cascading,
        Kind::Cooccurrence => PatternKind::CoOccurrence,
    };
    let name = a.kind.as_str();
    let patterns = if pkg.is_empty() { Vec::new() } else { mine_patterns(&pkg, &ds, &settings, kind)? };
    let path = out.join(format!("patterns_{name}.jsonl"));
    let mut w = create(&path)?;
    write_patterns_jsonl(&patterns, &mut w)?;
    w.flush()?;
    rec.outputs.push(path);
    log::info!("{} {name} patterns", patterns.len());
    Ok(())
}

fn sc(a: &ScPanelArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let ds = load_dir(&a.data, rec)?;
    let panel = CasePanel::from_cases(&ds.cases, &ds.regions)?;
    let results = sc_panel(&panel, &ds.regions, Some(&ds.routes))?;
    let path = out.join("sc_panel.csv");
    let mut w = create(&path)?;
    write_sc_csv(&results, &mut w)?;
    w.flush()?;
    rec.outputs.push(path);
    Ok(())
}

struct Loaded {
    ds: Dataset,
    pkg: Pkg,
    samples_cfg: SampleConfig,
    sc: Vec<ScResult>,
    patterns: Vec<PatternInstance>,
}

fn load_inputs(inp: &SampleInputs, rec: &mut Record) -> anyhow::Result<Loaded> {
    if inp.seq_len == 0 {
        return Err(Invalid("--seq-len must be positive".into()).into());
    }
    let ds = load_dir(&inp.data, rec)?;
    rec.input(&inp.pkg);
    let pkg = load_pkg(&inp.pkg)?;
    let mut patterns = Vec::new();
    for p in &inp.patterns {
        rec.input(p);
        patterns.extend(read_patterns_jsonl(open(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    let sc = match &inp.sc {
        Some(p) => {
            rec.input(p);
            read_sc_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?
        }
        None => Vec::new(),
    };
    Ok(Loaded { ds, pkg, samples_cfg: SampleConfig { seq_len: inp.seq_len, ..Default::default() }, sc, patterns })
}

impl Loaded {
    fn samples(&self, times: &[i64]) -> Vec<RegionSample> {
        build_region_samples(&self.ds, &self.pkg, &self.sc, &self.patterns, times, &self.samples_cfg)
    }

    /// Each user's visited regions in time order.
    fn region_corpus(&self) -> Vec<Vec<String>> {
        let place_region: HashMap<&str, &str> =
            self.ds.places.iter().filter_map(|p| p.region_id.as_deref().map(|r| (p.id.as_str(), r))).collect();
        let mut by_user: BTreeMap<&str, Vec<(i64, String)>> = BTreeMap::new();
        for f in self.pkg.facts_with_relation(Relation::Visit) {
            if let (Entity::Id(u), Some(r)) = (&f.subject, f.object.as_id().and_then(|p| place_region.get(p))) {
                by_user.entry(u.as_str()).or_default().push((f.interval.start, r.to_string()));
            }
        }
        by_user
            .into_values()
            .map(|mut v| {
                v.sort();
                v.into_iter().map(|(_, r)| r).collect::<Vec<_>>()
            })
            .filter(|v| v.len() > 1)
            .collect()
    }
}

#[derive(Serialize)]
struct TrainReport {
    samples: usize,
    times: usize,
    class_counts: BTreeMap<String, usize>,
    config: TrainConfig,
    sample_config: SampleConfig,
    pretrained_locations: usize,
    train_accuracy: f64,
    train_loss: f64,
    loss_curve: Vec<f64>,
}

fn train(a: &TrainArgs, seed: u64, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let loaded = load_inputs(&a.inputs, rec)?;
    let times = daily_times(&loaded.ds);
    let samples = loaded.samples(&times);
    let mut cfg = TrainConfig {
        cell_size: a.cell_size,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed,
        learning_rate: a.lr,
        ..Default::default()
    };
    cfg.ablation.no_attention = a.no_attention;
    cfg.ablation.no_bilstm = a.no_bilstm;
    cfg.ablation.no_pkg_features = a.no_pkg_features;
    cfg.ablation.no_two_phase = a.no_two_phase;
    cfg.validate()?;

    let ids: BTreeSet<&str> = samples.iter().flat_map(|s| s.steps.iter().map(|x| x.location.as_str())).collect();
    let shape = NetShape::new(ids.len(), cfg.loc_dim, cfg.time_dim, cfg.cell_size);
    let mut params = NetParams::init(shape, ids.into_iter().map(str::to_string).collect(), seed)?;
    let corpus = loaded.region_corpus();
    let pretrained = if a.embed_epochs > 0 && !corpus.is_empty() {
        let ecfg = EmbedConfig { dim: cfg.loc_dim, epochs: a.embed_epochs, seed, ..Default::default() };
        params.load_location_table(&train_location_embeddings(&corpus, &ecfg)?)?
    } else {
        0
    };
    let result = train_from(params, &samples, &cfg)?;
    let (acc, loss) = evaluate(&result.params, &samples)?;
    log::info!("trained on {} samples: accuracy {acc:.4}, loss {loss:.4}", samples.len());

    let path = out.join("model.txt");
    let mut w = create(&path)?;
    result.params.save(&mut w)?;
    w.flush()?;
    rec.outputs.push(path);
    let report = TrainReport {
        samples: samples.len(),
        times: times.len(),
        class_counts: class_counts(&samples).into_iter().map(|(c, n)| (c.as_str().to_string(), n)).collect(),
        config: cfg,
        sample_config: loaded.samples_cfg.clone(),
        pretrained_locations: pretrained,
        train_accuracy: acc,
        train_loss: loss,
        loss_curve: result.loss_curve,
    };
    let path = out.join("train_report.json");
    write_json(&path, &report)?;
    rec.outputs.push(path);
    Ok(())
}

fn predict_cmd(a: &PredictArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let loaded = load_inputs(&a.inputs, rec)?;
    rec.input(&a.model);
    let params = NetParams::load(open(&a.model)?).with_context(|| format!("reading {}", a.model.display()))?;
    let at = match a.at {
        Some(t) => t,
        None => *daily_times(&loaded.ds).last().ok_or_else(|| Invalid("dataset has no timestamps; pass --at".into()))?,
    };
    let mut samples = loaded.samples(&[at]);
    // Locations the model never saw fall back to the region itself, or the
    // first known id when that is unknown too.
    for s in &mut samples {
        let own = if params.location_index(&s.region_id).is_ok() { s.region_id.clone() } else { params.loc_ids[0].clone() };
        for step in &mut s.steps {
            if params.location_index(&step.location).is_err() {
                step.location.clone_from(&own);
            }
        }
    }

    let path = out.join("predictions.csv");
    let mut w = create(&path)?;
    writeln!(w, "# mobikg-predictions v1")?;
    let mut wr = csv::Writer::from_writer(&mut w);
    let mut header = vec!["region_id".to_string(), "timestamp".into(), "class".into(), "hotspot".into()];
    header.extend(HotspotClass::ALL.iter().map(|c| format!("p_{}", c.as_str())));
    wr.write_record(&header)?;
    let mut hot = 0;
    for s in &samples {
        let (class, probs) = predict(&params, s)?;
        hot += usize::from(class.is_hotspot());
        let mut row = vec![s.region_id.clone(), at.to_string(), class.as_str().to_string(), class.is_hotspot().to_string()];
        row.extend(probs.iter().map(|p| p.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    drop(wr);
    w.flush()?;
    rec.outputs.push(path);
    log::info!("{hot} of {} regions predicted as hotspots", samples.len());
    Ok(())
}

fn trace(a: &TraceArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    rec.input(&a.pkg);
    let pkg = load_pkg(&a.pkg)?;
    let ds = load_dir(&a.data, rec)?;
    let contacts = contact_trace(&pkg, &a.user, &ds.places, a.spatial_tol_m, a.time_tol_s)?;
    let path = out.join("contacts.csv");
    let mut w = create(&path)?;
    writeln!(w, "# mobikg-contacts v1")?;
    writeln!(w, "infected,contact")?;
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
    for c in &contacts {
        wr.write_record([a.user.as_str(), c.as_str()])?;
    }
    wr.flush()?;
    drop(wr);
    w.flush()?;
    rec.outputs.push(path);
    println!("{} contacts of {}", contacts.len(), a.user);
    Ok(())
}

#[derive(Serialize)]
struct FogSummary {
    payloads: usize,
    delay_reduction_pct: [f64; 2],
    power_reduction_pct: [f64; 2],
}

fn fogsim(a: &FogArgs, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let model = match &a.scenario {
        Some(p) => {
            rec.input(p);
            FogModel::load(p)?
        }
        None => reference_model(),
    };
    let rows = model.sweep()?;
    let path = out.join("fog_sweep.csv");
    let mut w = create(&path)?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    rec.outputs.push(path);
    let span = |f: &dyn Fn(&mobikg::fog::SweepRow) -> f64| {
        [rows.iter().map(f).fold(f64::INFINITY, f64::min), rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max)]
    };
    let summary = FogSummary {
        payloads: rows.len(),
        delay_reduction_pct: span(&|r| r.delay_reduction_pct),
        power_reduction_pct: span(&|r| r.power_reduction_pct),
    };
    let path = out.join("fog_summary.json");
    write_json(&path, &summary)?;
    rec.outputs.push(path);
    Ok(())
}

fn bench(a: &BenchArgs, seed: u64, out: &Path, rec: &mut Record) -> anyhow::Result<()> {
    let row = bench_pkg(a.entities, seed, a.reps)?;
    println!(
        "entities {} facts {} queries {}: build {:.4} s, query {:.4} s, total {:.4} s",
        row.entities,
        row.facts,
        row.queries,
        row.build_s,
        row.query_s,
        row.total_s()
    );
    let counts = BTreeMap::from([
        ("entities", row.entities),
        ("facts", row.facts),
        ("queries", row.queries),
        ("hits", row.hits),
    ]);
    let path = out.join("bench_pkg.json");
    write_json(&path, &counts)?;
    rec.outputs.push(path);
    Ok(())
}
