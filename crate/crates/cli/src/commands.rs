//! Subcommand implementations. Each writes its outputs and a manifest into
//! the output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use cppf::eval::{compute_map, write_results_csv, ApRow, EvalScene, ScoredPose};
use cppf::geometry::PointCloud;
use cppf::io::{read_obj, read_ply, write_ply, PoseRecord, SceneRecord, SceneSpecRecord};
use cppf::ppf::sample_pairs;
use cppf::predictor::{from_file, oracle_corrupted, oracle_exact, oracle_scene, predict_all, Predictor};
use cppf::scalar::vec3_from_array;
use cppf::scenegen::{build_scene, builtin_library};
use cppf::targets::write_targets;
use cppf::voting::StageTimings;
use cppf::{Pose9D, Vec3, Voter};
use serde::Serialize;

use crate::config::{default_criteria, parse_criterion, sha256_hex, LoadedConfig, PredictorChoice, RunConfig};
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<LoadedConfig>,
    pub seed: Option<u64>,
    pub predictor: Option<String>,
    pub out: Option<PathBuf>,
}

impl Globals {
    fn require_config(&self) -> CliResult<RunConfig> {
        let mut c = self
            .config
            .as_ref()
            .map(|l| l.config.clone())
            .ok_or_else(|| CliError::config("config", "this command needs --config"))?;
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(p) = &self.predictor {
            c.predictor = p.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|l| l.config.out.clone()))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn manifest(&self, command: &str, seed: u64) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config.as_ref().map(|l| l.sha256.clone()),
            seed,
            inputs: BTreeMap::new(),
        }
    }
}

/// Provenance record written next to every output.
#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    config_sha256: Option<String>,
    seed: u64,
    /// Input file name to its SHA-256.
    inputs: BTreeMap<String, String>,
}

impl Manifest {
    fn input(mut self, path: &Path) -> CliResult<Self> {
        let bytes = read_bytes(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(self)
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}: {e}", path.display())))
}

fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(e.to_string()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> CliResult<D> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Scene spec JSON → `scene.ply` and `scene.json`.
pub fn gen(globals: &Globals, spec_path: &Path) -> CliResult<()> {
    let mut record: SceneSpecRecord = read_json(spec_path)?;
    if let Some(seed) = globals.seed {
        record.seed = seed;
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let mut library = builtin_library::<f64>();
    for (name, rel) in &record.meshes {
        let path = base.join(rel);
        let file = File::open(&path).map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        let mesh = read_obj(BufReader::new(file))
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        library.insert(name.clone(), mesh);
    }
    let spec = record.to_spec::<f64>()?;
    let scene = build_scene(&spec, &library)?;
    log::info!("generated {} points for {} object(s)", scene.cloud.len(), scene.poses.len());

    let dir = globals.out_dir()?;
    let mut ply = create(&dir.join("scene.ply"))?;
    write_ply(&mut ply, &scene.cloud, true)?;
    ply.flush().map_err(|e| CliError::io(e.to_string()))?;
    let sidecar = SceneRecord {
        poses: scene.poses.iter().map(|p| PoseRecord::new(p, None)).collect(),
        labels: scene.labels,
        viewpoint: record.viewpoint,
        seed: record.seed,
    };
    write_json(&dir.join("scene.json"), &sidecar)?;
    globals.manifest("gen", record.seed).input(spec_path)?.write(&dir)
}

/// A point cloud with its ground-truth sidecar when one exists.
pub struct LoadedScene {
    pub path: PathBuf,
    pub cloud: PointCloud<f64>,
    pub record: Option<SceneRecord>,
}

/// Reads `path` (a PLY file, or a directory holding `scene.ply`) and the
/// `.json` sidecar next to it.
pub fn load_scene(path: &Path) -> CliResult<LoadedScene> {
    let ply = if path.is_dir() { path.join("scene.ply") } else { path.to_path_buf() };
    let file = File::open(&ply).map_err(|e| CliError::io(format!("reading {}: {e}", ply.display())))?;
    let data = read_ply::<f64, _>(BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", ply.display())))?;
    let normals = data
        .normals
        .ok_or_else(|| CliError::input(format!("{}: points have no normals", ply.display())))?;
    let sidecar = ply.with_extension("json");
    let record: Option<SceneRecord> = if sidecar.is_file() { Some(read_json(&sidecar)?) } else { None };
    if let Some(r) = &record {
        if r.labels.len() != data.points.len() {
            return Err(CliError::input(format!(
                "{}: {} labels for {} points",
                sidecar.display(),
                r.labels.len(),
                data.points.len()
            )));
        }
    }
    let viewpoint = record.as_ref().map_or(Vec3::zeros(), |r| vec3_from_array(r.viewpoint));
    let cloud = PointCloud::new(data.points, normals, viewpoint)?;
    Ok(LoadedScene { path: ply, cloud, record })
}

impl LoadedScene {
    fn poses(&self) -> CliResult<Vec<Pose9D>> {
        let r = self.record.as_ref().ok_or_else(|| {
            CliError::input(format!("{}: no ground-truth sidecar", self.path.display()))
        })?;
        r.poses.iter().map(|p| p.pose().map_err(CliError::from)).collect()
    }

    fn pose(&self, object: usize) -> CliResult<Pose9D> {
        let poses = self.poses()?;
        let n = poses.len();
        poses
            .into_iter()
            .nth(object)
            .ok_or_else(|| CliError::config("object", format!("scene has {n} object(s), asked for {object}")))
    }
}

fn scene_path(arg: Option<&Path>, config: Option<&RunConfig>) -> CliResult<PathBuf> {
    arg.map(Path::to_path_buf)
        .or_else(|| config.and_then(|c| c.scene.clone()))
        .ok_or_else(|| CliError::config("scene", "no scene given on the command line or in the config"))
}

fn mean_scale(config: Option<&RunConfig>, scene: &LoadedScene, object: usize) -> CliResult<Vec3<f64>> {
    if let Some(m) = config.and_then(|c| c.mean_scale) {
        return Ok(vec3_from_array(m));
    }
    match scene.pose(object) {
        Ok(p) => {
            log::warn!("mean_scale not configured, using the ground-truth extents");
            Ok(p.s)
        }
        Err(_) => Err(CliError::config("mean_scale", "required when the scene has no ground truth")),
    }
}

fn build_predictor(
    config: &RunConfig,
    scene: &LoadedScene,
    mean: Vec3<f64>,
) -> CliResult<Box<dyn Predictor<f64>>> {
    Ok(match PredictorChoice::parse(&config.predictor)? {
        PredictorChoice::Exact => {
            let record = scene.record.as_ref().ok_or_else(|| {
                CliError::input(format!("{}: the exact predictor needs the scene sidecar", scene.path.display()))
            })?;
            let poses = scene.poses()?;
            if poses.len() == 1 && record.labels.iter().all(|&l| l == 0) {
                Box::new(oracle_exact(poses[0], mean))
            } else {
                Box::new(oracle_scene(poses, record.labels.clone(), mean, config.seed))
            }
        }
        PredictorChoice::Corrupted => Box::new(oracle_corrupted(
            scene.pose(config.object)?,
            mean,
            config.corruption.outlier_fraction,
            config.corruption.sigmas(),
            config.seed,
        )?),
        PredictorChoice::File(path) => {
            let p = from_file::<f64>(&path).map_err(|e| CliError::from_core(e).with_path(&path))?;
            if p.clamp_warnings() > 0 {
                log::warn!("{} prediction(s) clamped into range", p.clamp_warnings());
            }
            Box::new(p)
        }
    })
}

impl CliError {
    fn with_path(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

/// Exact statistics of one ground-truth object, one JSON line per pair.
pub fn targets(globals: &Globals, scene_arg: Option<&Path>, object: Option<usize>) -> CliResult<()> {
    let config = globals.config.as_ref().map(|l| l.config.clone());
    let defaults = cppf::VotingConfig::default();
    let n_pairs = config.as_ref().map_or(defaults.n_pairs, |c| c.n_pairs);
    let seed = globals.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
    let object = object.or(config.as_ref().map(|c| c.object)).unwrap_or(0);

    let scene = load_scene(&scene_path(scene_arg, config.as_ref())?)?;
    let pose = scene.pose(object)?;
    let mean = mean_scale(config.as_ref(), &scene, object)?;
    let pairs = sample_pairs(&scene.cloud, n_pairs, seed)?;
    let (stats, _) = predict_all(&oracle_exact(pose, mean), &pairs)?;

    let dir = globals.out_dir()?;
    let mut out = create(&dir.join("targets.jsonl"))?;
    write_targets(&mut out, &pairs, &stats)?;
    globals.manifest("targets", seed).input(&scene.path)?.write(&dir)
}

/// Per-point detection index, `-1` where no detection claims the point.
#[derive(Debug, Serialize)]
struct Segmentation {
    labels: Vec<i32>,
}

/// Single estimate → `pose.json`, or detections with `[detect]` configured →
/// `detections.json` and `segmentation.json`.
pub fn vote(globals: &Globals, scene_arg: Option<&Path>, dump_grid: bool) -> CliResult<()> {
    let config = globals.require_config()?;
    let scene = load_scene(&scene_path(scene_arg, Some(&config))?)?;
    let mean = mean_scale(Some(&config), &scene, config.object)?;
    let predictor = build_predictor(&config, &scene, mean)?;
    let voter = Voter::new(config.voting())?;
    let dir = globals.out_dir()?;

    if let Some(detect) = &config.detect {
        let dets = voter.detect_multi(
            &scene.cloud,
            predictor.as_ref(),
            &mean,
            detect.vote_threshold,
            detect.min_point_votes,
        )?;
        log::info!("{} detection(s)", dets.len());
        let poses: Vec<PoseRecord> = dets.iter().map(|d| PoseRecord::new(&d.pose, Some(d.center_votes))).collect();
        let mut labels = vec![-1i32; scene.cloud.len()];
        for (k, d) in dets.iter().enumerate() {
            for &i in &d.inlier_point_indices {
                labels[i] = k as i32;
            }
        }
        write_json(&dir.join("detections.json"), &poses)?;
        write_json(&dir.join("segmentation.json"), &Segmentation { labels })?;
    } else {
        let est = voter.estimate(&scene.cloud, predictor.as_ref(), &mean)?;
        log_timings(&est.timings);
        log::info!(
            "center votes {}, pool {} pair(s), {} clamped prediction(s)",
            est.center_votes,
            est.pool_size,
            est.clamped_predictions
        );
        write_json(&dir.join("pose.json"), &PoseRecord::new(&est.pose, Some(est.center_votes)))?;
        if dump_grid || config.dump_grid {
            let mut out = create(&dir.join("grid.bin"))?;
            est.grid.write_binary(&mut out)?;
            out.flush().map_err(|e| CliError::io(e.to_string()))?;
        }
    }
    globals.manifest("vote", config.seed).input(&scene.path)?.write(&dir)
}

fn log_timings(t: &StageTimings) {
    for (name, d) in stages(t) {
        log::info!("{name:<12} {:>9.1} ms", ms(d));
    }
}

fn stages(t: &StageTimings) -> [(&'static str, Duration); 6] {
    [
        ("sampling", t.sampling),
        ("prediction", t.prediction),
        ("center", t.center),
        ("backtrace", t.backtrace),
        ("orientation", t.orientation),
        ("scale", t.scale),
    ]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Serialize)]
struct BenchReport {
    repetitions: usize,
    workers: usize,
    points: usize,
    pairs: usize,
    /// Mean milliseconds per stage.
    stages_ms: BTreeMap<&'static str, f64>,
    total_ms: f64,
}

/// Repeated estimates with per-stage wall times → `bench.json`.
pub fn bench(globals: &Globals, scene_arg: Option<&Path>, repetitions: usize) -> CliResult<()> {
    if repetitions == 0 {
        return Err(CliError::config("repetitions", "must be positive"));
    }
    let config = globals.require_config()?;
    let scene = load_scene(&scene_path(scene_arg, Some(&config))?)?;
    let mean = mean_scale(Some(&config), &scene, config.object)?;
    let predictor = build_predictor(&config, &scene, mean)?;
    let voter = Voter::new(config.voting())?;

    let mut sums: BTreeMap<&'static str, f64> = BTreeMap::new();
    for _ in 0..repetitions {
        let est = voter.estimate(&scene.cloud, predictor.as_ref(), &mean)?;
        for (name, d) in stages(&est.timings) {
            *sums.entry(name).or_default() += ms(d);
        }
    }
    let stages_ms: BTreeMap<&'static str, f64> =
        sums.into_iter().map(|(k, v)| (k, v / repetitions as f64)).collect();
    let report = BenchReport {
        repetitions,
        workers: rayon::current_num_threads(),
        points: scene.cloud.len(),
        pairs: config.n_pairs,
        total_ms: stages_ms.values().sum(),
        stages_ms,
    };
    println!("{:<12} {:>10}", "stage", "mean ms");
    for (name, v) in &report.stages_ms {
        println!("{name:<12} {v:>10.1}");
    }
    println!("{:<12} {:>10.1}", "total", report.total_ms);

    let dir = globals.out_dir()?;
    write_json(&dir.join("bench.json"), &report)?;
    globals.manifest("bench", config.seed).input(&scene.path)?.write(&dir)
}

/// Detections of one scene: `detections.json` (a list) or `pose.json`.
fn read_detections(path: &Path) -> CliResult<Vec<PoseRecord>> {
    let bytes = read_bytes(path)?;
    if let Ok(list) = serde_json::from_slice::<Vec<PoseRecord>>(&bytes) {
        return Ok(list);
    }
    serde_json::from_slice::<PoseRecord>(&bytes)
        .map(|p| vec![p])
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Ground-truth scenes of `dir`: subdirectories holding `scene.json`, or
/// loose `*.json` sidecars, keyed by name.
fn ground_truth_scenes(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(format!("reading {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(e.to_string()))?.path();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if path.is_dir() && path.join("scene.json").is_file() {
            out.insert(name, path.join("scene.json"));
        } else if path.extension().is_some_and(|e| e == "json") && name != "manifest" {
            out.insert(name, path);
        }
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{}: no ground-truth scenes", dir.display())));
    }
    Ok(out)
}

fn detections_for(dir: &Path, name: &str) -> Option<PathBuf> {
    [
        dir.join(name).join("detections.json"),
        dir.join(name).join("pose.json"),
        dir.join(format!("{name}.json")),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

/// mAP per criterion over matching scene names → `results.csv`.
pub fn eval(globals: &Globals, detections: &Path, ground_truth: &Path, criteria: &[String]) -> CliResult<()> {
    let config = globals.config.as_ref().map(|l| &l.config);
    let labels = match (criteria.is_empty(), config) {
        (false, _) => criteria.to_vec(),
        (true, Some(c)) => c.criteria.clone(),
        (true, None) => default_criteria(),
    };
    let sym = config.map(|c| c.symmetry.symmetry()).unwrap_or_default();
    let matchers = labels
        .iter()
        .map(|c| Ok(parse_criterion(c)?.with_symmetry(sym)))
        .collect::<CliResult<Vec<_>>>()?;
    let category = config.map_or("object".to_string(), |c| c.category.clone());

    let mut scenes = Vec::new();
    for (name, gt_path) in ground_truth_scenes(ground_truth)? {
        let gt: SceneRecord = read_json(&gt_path)?;
        let ground_truths = gt.poses.iter().map(|p| p.pose()).collect::<cppf::Result<Vec<Pose9D>>>()?;
        let dets = match detections_for(detections, &name) {
            Some(p) => read_detections(&p)?,
            None => {
                log::warn!("no detections for scene {name}");
                Vec::new()
            }
        };
        let detections = dets
            .iter()
            .map(|d| {
                Ok(ScoredPose {
                    pose: d.pose()?,
                    score: d.votes.map_or(0.0, f64::from),
                })
            })
            .collect::<cppf::Result<Vec<_>>>()?;
        scenes.push(EvalScene { detections, ground_truths });
    }
    let aps = compute_map(&scenes, &matchers);
    let rows: Vec<ApRow> = matchers
        .iter()
        .zip(aps)
        .map(|(m, ap)| ApRow {
            criterion: m.label(),
            category: category.clone(),
            ap,
        })
        .collect();

    let dir = globals.out_dir()?;
    let mut out = create(&dir.join("results.csv"))?;
    write_results_csv(&mut out, &rows)?;
    out.flush().map_err(|e| CliError::io(e.to_string()))?;
    globals.manifest("eval", globals.seed.unwrap_or(0)).write(&dir)
}
