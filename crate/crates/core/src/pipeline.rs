//! End-to-end orchestration: render, segment, fuse, explain, export, and
//! evaluate against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{category_miou, load_manifest, DatasetError, EvalReport, ManifestInstruction, ObjectManifest};
use crate::fusion::{assign_labels, compute_scores, select_explanation, FusionError, DEFAULT_TAU};
use crate::gateway::{
    GatewayError, OracleSegmenter, RemoteConfig, RemoteSegmenter, ReplaySegmenter, SegmentRequest, SegmentResponse,
    Segmenter,
};
use crate::geometry::ply::{load_ply_with_label, write_ply, PlyError, DEFAULT_LABEL_PROPERTY};
use crate::geometry::{estimate_normals, knn, GeometryError, PointCloud, BACKGROUND};
use crate::mask::Mask;
use crate::render::{
    make_camera_rig, render_views, CameraError, SplatSettings, DEFAULT_DEPTH_TOLERANCE, DEFAULT_DISTANCE_FACTOR,
    DEFAULT_FOV_DEG, DEFAULT_IMAGE_SIZE, DEFAULT_SPLAT_RADIUS_PX, DEFAULT_VIEWS,
};
use crate::superpoints::{build_superpoints, SuperpointError, SuperpointParams};

pub const DEFAULT_KNN: usize = 10;
pub const DEFAULT_JOBS: usize = 4;
/// Smallest cloud the fusion path handles; normal estimation needs three
/// neighbours per point.
pub const MIN_FUSION_POINTS: usize = 4;
pub const RUN_LOG_FILE: &str = "run_log.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Oracle,
    Replay(PathBuf),
    Remote(String),
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        if let Some(dir) = s.strip_prefix("replay:").filter(|d| !d.is_empty()) {
            return Ok(Self::Replay(dir.into()));
        }
        if let Some(url) = s.strip_prefix("remote:").filter(|u| !u.is_empty()) {
            return Ok(Self::Remote(url.to_string()));
        }
        Err(format!("backend `{s}` is not oracle, replay:<dir> or remote:<url>"))
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Replay(dir) => write!(f, "replay:{}", dir.display()),
            Self::Remote(url) => write!(f, "remote:{url}"),
        }
    }
}

impl Serialize for Backend {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Backend {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Every tunable of a run. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub views: usize,
    pub image_size: u32,
    pub fov_deg: f64,
    pub distance_factor: f64,
    pub splat_radius_px: u32,
    pub depth_tolerance: f64,
    pub knn: usize,
    pub superpoint_angle_deg: f64,
    pub superpoint_color_dist: f64,
    pub superpoint_min_size: usize,
    pub tau: f64,
    pub backend: Backend,
    pub jobs: usize,
    pub seed: u64,
    pub remote_timeout_s: f64,
    pub remote_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sp = SuperpointParams::default();
        let remote = RemoteConfig::new("");
        Self {
            views: DEFAULT_VIEWS,
            image_size: DEFAULT_IMAGE_SIZE,
            fov_deg: DEFAULT_FOV_DEG,
            distance_factor: DEFAULT_DISTANCE_FACTOR,
            splat_radius_px: DEFAULT_SPLAT_RADIUS_PX,
            depth_tolerance: DEFAULT_DEPTH_TOLERANCE,
            knn: DEFAULT_KNN,
            superpoint_angle_deg: sp.normal_angle_deg,
            superpoint_color_dist: sp.color_dist,
            superpoint_min_size: sp.min_size,
            tau: DEFAULT_TAU,
            backend: Backend::Oracle,
            jobs: DEFAULT_JOBS,
            seed: 0,
            remote_timeout_s: remote.timeout.as_secs_f64(),
            remote_retries: remote.retries,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if self.views == 0 {
            return bad("views must be at least 1");
        }
        if self.image_size == 0 || self.image_size > 8192 {
            return bad("image_size must be in 1..=8192");
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("fov_deg must be in (0, 180)");
        }
        if !(self.distance_factor > 1.0 && self.distance_factor.is_finite()) {
            return bad("distance_factor must be greater than 1 so cameras sit outside the object");
        }
        if self.splat_radius_px > 64 {
            return bad("splat_radius_px must be at most 64");
        }
        if !(self.depth_tolerance >= 0.0 && self.depth_tolerance.is_finite()) {
            return bad("depth_tolerance must be nonnegative");
        }
        if self.knn < 3 {
            return bad("knn must be at least 3");
        }
        if !(0.0..=90.0).contains(&self.superpoint_angle_deg) {
            return bad("superpoint_angle_deg must be in [0, 90]");
        }
        if !(self.superpoint_color_dist >= 0.0 && self.superpoint_color_dist.is_finite()) {
            return bad("superpoint_color_dist must be nonnegative");
        }
        if self.superpoint_min_size == 0 {
            return bad("superpoint_min_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must be in [0, 1]");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if !(self.remote_timeout_s > 0.0 && self.remote_timeout_s.is_finite()) {
            return bad("remote_timeout_s must be positive");
        }
        Ok(())
    }

    pub fn superpoint_params(&self) -> SuperpointParams {
        SuperpointParams {
            normal_angle_deg: self.superpoint_angle_deg,
            color_dist: self.superpoint_color_dist,
            min_size: self.superpoint_min_size,
        }
    }

    pub fn splat_settings(&self) -> SplatSettings {
        SplatSettings {
            splat_radius_px: self.splat_radius_px,
            depth_tolerance: self.depth_tolerance,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
    #[error("input file {0} is not readable")]
    MissingInput(PathBuf),
    #[error("no prediction for object `{0}`")]
    MissingPrediction(String),
    #[error("{path}: {source}")]
    Ply {
        path: PathBuf,
        #[source]
        source: PlyError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Superpoints(#[from] SuperpointError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("part id {part} belongs to both `{first}` and `{second}`")]
    PartConflict { part: i32, first: String, second: String },
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Whether the error means the run's inputs could not be read at all.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::Manifest { .. } | Self::MissingInput(_) | Self::MissingPrediction(_) | Self::Config(_)
        )
    }
}

/// A segmenter that outlives single objects. The oracle needs per-object
/// renders and labels, so it is built inside [`segment_object`].
pub enum BackendHandle {
    Oracle,
    Replay(ReplaySegmenter),
    Remote(RemoteSegmenter),
}

impl BackendHandle {
    pub fn from_config(config: &PipelineConfig) -> Self {
        match &config.backend {
            Backend::Oracle => Self::Oracle,
            Backend::Replay(dir) => Self::Replay(ReplaySegmenter::new(dir.clone())),
            Backend::Remote(url) => {
                let mut remote = RemoteConfig::new(url.clone());
                remote.timeout = Duration::from_secs_f64(config.remote_timeout_s);
                remote.retries = config.remote_retries;
                Self::Remote(RemoteSegmenter::new(remote))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExplanation {
    pub query_index: usize,
    pub query_id: String,
    pub category: i32,
    pub view_index: usize,
    pub iou: f64,
    pub text: String,
}

impl QueryExplanation {
    pub fn to_file_text(&self) -> String {
        format!("view_index: {}\niou: {:.6}\n{}\n", self.view_index, self.iou, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: i32,
    pub superpoints: usize,
    pub points: usize,
    /// Mean of the winning score over the superpoints given this label.
    pub mean_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prepare_ms: f64,
    pub render_ms: f64,
    pub segment_ms: f64,
    pub fuse_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub num_points: usize,
    pub num_superpoints: usize,
    pub undefined_superpoints: usize,
    pub background_points: usize,
    pub categories: Vec<CategorySummary>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct ObjectOutput {
    pub point_label: Vec<i32>,
    /// Whether each point was visible in at least one view.
    pub visible_any: Vec<bool>,
    pub explanations: Vec<QueryExplanation>,
    pub summary: ObjectSummary,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn background_output(cloud: &PointCloud, reason: &str, object_id: &str) -> ObjectOutput {
    log::warn!("object {object_id}: {reason}; every point is labelled background");
    ObjectOutput {
        point_label: vec![BACKGROUND; cloud.len()],
        visible_any: vec![false; cloud.len()],
        explanations: Vec::new(),
        summary: ObjectSummary {
            num_points: cloud.len(),
            num_superpoints: 0,
            undefined_superpoints: 0,
            background_points: cloud.len(),
            categories: Vec::new(),
            timings: StageTimings::default(),
        },
    }
}

pub fn query_id(object_id: &str, index: usize) -> String {
    format!("{object_id}_q{index}")
}

/// Runs the full per-object flow. Parallel stages run on the current rayon
/// pool; results do not depend on its size.
pub fn segment_object(
    object_id: &str,
    cloud: &PointCloud,
    instructions: &[ManifestInstruction],
    config: &PipelineConfig,
    backend: &BackendHandle,
) -> Result<ObjectOutput, PipelineError> {
    if cloud.len() < MIN_FUSION_POINTS {
        return Ok(background_output(cloud, "too few points to segment", object_id));
    }
    if instructions.is_empty() {
        return Ok(background_output(cloud, "no instructions", object_id));
    }

    let start = Instant::now();
    let graph = knn(cloud, config.knn)?;
    let oriented;
    let cloud = if cloud.normals().is_some() {
        cloud
    } else {
        let estimate = estimate_normals(cloud, &graph)?;
        if !estimate.degenerate.is_empty() {
            log::warn!(
                "object {object_id}: {} points have a degenerate neighbourhood",
                estimate.degenerate.len()
            );
        }
        oriented = estimate.cloud;
        &oriented
    };
    let partition = build_superpoints(cloud, &graph, config.superpoint_params())?;
    let prepare_ms = millis(start);

    let start = Instant::now();
    let size = (config.image_size, config.image_size);
    let poses = make_camera_rig(cloud, config.views, size, config.fov_deg, config.distance_factor)?;
    let renders = render_views(cloud, &poses, config.splat_settings());
    let render_ms = millis(start);

    let start = Instant::now();
    let query_ids: Vec<String> = (0..instructions.len()).map(|q| query_id(object_id, q)).collect();
    let oracle;
    let segmenter: &dyn Segmenter = match backend {
        BackendHandle::Oracle => {
            let labels = cloud.labels().ok_or(GatewayError {
                query_id: query_ids[0].clone(),
                view_index: 0,
                kind: crate::gateway::GatewayErrorKind::MissingLabels,
            })?;
            oracle = OracleSegmenter::new(
                labels,
                &renders,
                query_ids.iter().cloned().zip(instructions.iter().map(|i| i.category)),
            );
            &oracle
        }
        BackendHandle::Replay(s) => s,
        BackendHandle::Remote(s) => s,
    };
    let queries = instructions.len();
    let results: Vec<Result<SegmentResponse, GatewayError>> = (0..renders.len() * queries)
        .into_par_iter()
        .map(|slot| {
            let (view, q) = (slot / queries, slot % queries);
            let request = SegmentRequest {
                image: renders[view].image().clone(),
                instruction: instructions[q].query.clone(),
                query_id: query_ids[q].clone(),
                view_index: view,
            };
            segmenter.segment(&request)
        })
        .collect();
    let mut responses = Vec::with_capacity(results.len());
    for result in results {
        responses.push(result?);
    }
    let segment_ms = millis(start);

    let start = Instant::now();
    let categories: Vec<i32> = instructions
        .iter()
        .map(|i| i.category)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let column = |category: i32| categories.binary_search(&category).expect("category listed");
    let mut masks: Vec<Vec<Mask>> = renders
        .iter()
        .map(|r| vec![Mask::empty(r.width(), r.height()); categories.len()])
        .collect();
    for (slot, response) in responses.iter().enumerate() {
        let (view, q) = (slot / queries, slot % queries);
        masks[view][column(instructions[q].category)]
            .union_with(&response.mask)
            .map_err(|source| FusionError::Dimensions { view, source })?;
    }
    let scores = compute_scores(&partition, &renders, &masks)?.with_categories(categories.clone())?;
    let labels = assign_labels(&scores, &partition, config.tau);

    let mut explanations = Vec::with_capacity(queries);
    for (q, instruction) in instructions.iter().enumerate() {
        let per_view: Vec<SegmentResponse> = (0..renders.len())
            .map(|view| responses[view * queries + q].clone())
            .collect();
        let chosen = select_explanation(&renders, &per_view, &labels, instruction.category)?;
        explanations.push(QueryExplanation {
            query_index: q,
            query_id: query_ids[q].clone(),
            category: instruction.category,
            view_index: chosen.view_index,
            iou: chosen.iou,
            text: chosen.text,
        });
    }

    let mut visible_any = vec![false; cloud.len()];
    for render in &renders {
        for (p, seen) in visible_any.iter_mut().enumerate() {
            *seen |= render.is_visible(p);
        }
    }
    let undefined_superpoints = (0..scores.num_superpoints()).filter(|&i| scores.row(i).is_none()).count();
    let category_summaries = categories
        .iter()
        .enumerate()
        .map(|(j, &category)| {
            let winners: Vec<usize> = (0..partition.len())
                .filter(|&i| labels.superpoint_label[i] == category)
                .collect();
            let mean_score = if winners.is_empty() {
                0.0
            } else {
                winners.iter().map(|&i| scores.score(i, j).unwrap_or(0.0)).sum::<f64>() / winners.len() as f64
            };
            CategorySummary {
                category,
                superpoints: winners.len(),
                points: labels.point_label.iter().filter(|&&l| l == category).count(),
                mean_score,
            }
        })
        .collect();
    let background_points = labels.point_label.iter().filter(|&&l| l == BACKGROUND).count();
    let fuse_ms = millis(start);

    Ok(ObjectOutput {
        point_label: labels.point_label,
        visible_any,
        explanations,
        summary: ObjectSummary {
            num_points: cloud.len(),
            num_superpoints: partition.len(),
            undefined_superpoints,
            background_points,
            categories: category_summaries,
            timings: StageTimings {
                prepare_ms,
                render_ms,
                segment_ms,
                fuse_ms,
            },
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectLog {
    pub object_id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<ObjectSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub config: PipelineConfig,
    pub objects: Vec<ObjectLog>,
    pub total_ms: f64,
}

impl RunLog {
    pub fn failures(&self) -> impl Iterator<Item = &ObjectLog> {
        self.objects.iter().filter(|o| !o.ok)
    }
}

fn read_cloud(path: &Path, label_property: &str) -> Result<PointCloud, PipelineError> {
    load_ply_with_label(path, label_property).map_err(|source| PipelineError::Ply {
        path: path.to_path_buf(),
        source,
    })
}

fn read_manifest(path: &Path) -> Result<(Vec<ObjectManifest>, PathBuf), PipelineError> {
    let objects = load_manifest(path).map_err(|source| PipelineError::Manifest {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((objects, base))
}

fn run_one(
    entry: &ObjectManifest,
    base: &Path,
    config: &PipelineConfig,
    backend: &BackendHandle,
    out_dir: &Path,
) -> Result<ObjectSummary, PipelineError> {
    let cloud = read_cloud(&entry.resolve_ply(base), &entry.label_property)?;
    let output = segment_object(&entry.object_id, &cloud, &entry.instructions, config, backend)?;
    let labelled = cloud.with_labels(output.point_label)?;
    let ply_path = out_dir.join(format!("{}.ply", entry.object_id));
    write_ply(&labelled, &ply_path, false).map_err(|source| PipelineError::Ply { path: ply_path, source })?;
    for explanation in &output.explanations {
        fs::write(out_dir.join(format!("{}.txt", explanation.query_id)), explanation.to_file_text())?;
    }
    Ok(output.summary)
}

/// Processes every manifest object into `out_dir`. Failures of single
/// objects are recorded in the returned log; only unreadable inputs or a bad
/// configuration abort the run.
pub fn run_manifest(manifest: &Path, config: &PipelineConfig, out_dir: &Path) -> Result<RunLog, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let (objects, base) = read_manifest(manifest)?;
    for entry in &objects {
        let path = entry.resolve_ply(&base);
        if fs::File::open(&path).is_err() {
            return Err(PipelineError::MissingInput(path));
        }
    }
    fs::create_dir_all(out_dir)?;
    if objects.is_empty() {
        log::warn!("manifest {} lists no objects", manifest.display());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let backend = BackendHandle::from_config(config);
    let mut logs = Vec::with_capacity(objects.len());
    for entry in &objects {
        let result = pool.install(|| run_one(entry, &base, config, &backend, out_dir));
        logs.push(match result {
            Ok(summary) => {
                log::info!("object {} done", entry.object_id);
                ObjectLog {
                    object_id: entry.object_id.clone(),
                    ok: true,
                    error: None,
                    summary: Some(summary),
                }
            }
            Err(e) => {
                log::error!("object {} failed: {e}", entry.object_id);
                ObjectLog {
                    object_id: entry.object_id.clone(),
                    ok: false,
                    error: Some(e.to_string()),
                    summary: None,
                }
            }
        });
    }
    let log = RunLog {
        config: config.clone(),
        objects: logs,
        total_ms: millis(start),
    };
    fs::write(out_dir.join(RUN_LOG_FILE), serde_json::to_string_pretty(&log)? + "\n")?;
    Ok(log)
}

/// Scores the labelled PLYs `<pred_dir>/<object_id>.ply` against the
/// manifest's ground truth. Every ground-truth part id is attributed to the
/// object category of the object it occurs in.
pub fn evaluate(manifest: &Path, pred_dir: &Path, include_background: bool) -> Result<EvalReport, PipelineError> {
    let (objects, base) = read_manifest(manifest)?;
    let mut predictions = Vec::with_capacity(objects.len());
    let mut ground_truth = Vec::with_capacity(objects.len());
    let mut part_map: BTreeMap<i32, String> = BTreeMap::new();
    for entry in &objects {
        let pred_path = pred_dir.join(format!("{}.ply", entry.object_id));
        if !pred_path.is_file() {
            return Err(PipelineError::MissingPrediction(entry.object_id.clone()));
        }
        let gt_path = entry.resolve_ply(&base);
        if !gt_path.is_file() {
            return Err(PipelineError::MissingInput(gt_path));
        }
        let gt_cloud = read_cloud(&gt_path, &entry.label_property)?;
        let gt = gt_cloud
            .labels()
            .ok_or(PipelineError::Ply {
                path: gt_path.clone(),
                source: PlyError::NoLabels,
            })?
            .to_vec();
        let pred_cloud = read_cloud(&pred_path, DEFAULT_LABEL_PROPERTY)?;
        let pred = pred_cloud
            .labels()
            .ok_or(PipelineError::Ply {
                path: pred_path.clone(),
                source: PlyError::NoLabels,
            })?
            .to_vec();
        let parts = gt
            .iter()
            .copied()
            .chain(entry.instructions.iter().map(|i| i.category))
            .filter(|&l| l != BACKGROUND);
        for part in parts {
            let category = part_map.entry(part).or_insert_with(|| entry.object_category.clone());
            if *category != entry.object_category {
                return Err(PipelineError::PartConflict {
                    part,
                    first: category.clone(),
                    second: entry.object_category.clone(),
                });
            }
        }
        predictions.push(pred);
        ground_truth.push(gt);
    }
    if objects.is_empty() {
        log::warn!("manifest {} lists no objects", manifest.display());
    }
    Ok(category_miou(&predictions, &ground_truth, &part_map, include_background)?)
}
