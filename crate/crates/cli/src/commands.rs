use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bbav_core::codec::{decode as decode_maps, encode as encode_maps, CodecError, DecodeParams, SkipReason};
use bbav_core::dota_io::{
    parse_annotations, parse_detection_records, write_detection_records, AnnotationRecord, Category,
    DetectionRecord,
};
use bbav_core::geometry::{canonicalize, rotated_iou, Point2};
use bbav_core::mapfile::{self, MapFileError};
use bbav_core::postprocess::{evaluate_map, rotated_nms, MatchResult};
use bbav_core::synth::{parse_config, run_pipeline, SimulationConfig};
use bbav_core::tiling::{self, crop_annotations, make_tiles, to_global, TileSpec, TilingParams};
use bbav_core::Detection;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::fsio::{ensure_dir, list_files, read_text, stem, write_atomic};
use crate::plot;
use crate::{DecodeArgs, EncodeArgs, EvalArgs, IouArgs, MergeArgs, NmsArgs, SimulateArgs, TileArgs};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    parse_annotations(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

fn read_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detection_records(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports always serialize") + "\n"
}

fn codec_error(path: &Path, e: CodecError) -> CliError {
    CliError::Shape(format!("{}: {e}", path.display()))
}

/// Size of the image named `name` in `images`, else `fallback`.
fn image_size(images: Option<&Path>, name: &str, fallback: Option<(u32, u32)>) -> Result<(u32, u32)> {
    if let Some(dir) = images {
        for ext in IMAGE_EXTENSIONS {
            let path = dir.join(format!("{name}.{ext}"));
            if path.is_file() {
                return image::image_dimensions(&path).map_err(|e| CliError::parse(&path, e));
            }
        }
    }
    fallback.ok_or_else(|| match images {
        Some(dir) => CliError::Invalid(format!(
            "no image for {name:?} in {} and no --image-size given",
            dir.display()
        )),
        None => CliError::Invalid("either --images or --image-size is required".into()),
    })
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    if args.classes == 0 || args.classes > Category::COUNT {
        return Err(CliError::Invalid(format!("--classes must be in 1..={}", Category::COUNT)));
    }
    let files = list_files(&args.annotations, "txt")?;
    if files.is_empty() {
        return Err(CliError::Empty(format!("no .txt annotations in {}", args.annotations.display())));
    }
    ensure_dir(&args.out)?;
    let reports = files
        .par_iter()
        .map(|path| {
            let name = stem(path);
            let (w, h) = image_size(args.images.as_deref(), &name, args.image_size)?;
            let anns = read_annotations(path)?;
            let (maps, report) = encode_maps(&anns, h as usize, w as usize, args.classes, args.stride)
                .map_err(|e| codec_error(path, e))?;
            let mut bytes = Vec::new();
            mapfile::write_maps(&maps, &mut bytes).map_err(|e| CliError::Shape(e.to_string()))?;
            write_atomic(&args.out.join(format!("{name}.{}", mapfile::EXTENSION)), &bytes)?;
            write_atomic(
                &args.out.join(format!("{name}.{}", mapfile::HEADER_EXTENSION)),
                mapfile::header_text(&maps).as_bytes(),
            )?;
            let count = |r: SkipReason| report.skipped.iter().filter(|(_, s)| *s == r).count();
            Ok(json!({
                "image": name,
                "encoded": report.encoded,
                "skipped_out_of_bounds": count(SkipReason::OutOfBounds),
                "skipped_degenerate": count(SkipReason::Degenerate),
                "skipped_class": count(SkipReason::ClassOutOfRange),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let encoded: u64 = reports.iter().map(|r| r["encoded"].as_u64().unwrap_or(0)).sum();
    print_json(&json!({ "images": reports.len(), "encoded": encoded, "files": reports }));
    Ok(())
}

fn read_map_file(path: &Path) -> Result<bbav_core::TargetMaps> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    mapfile::read_maps(BufReader::new(file)).map_err(|e| match e {
        MapFileError::Io(source) if source.kind() == std::io::ErrorKind::UnexpectedEof => {
            CliError::parse(path, "map file is truncated")
        }
        MapFileError::Io(source) => CliError::io(path, source),
        MapFileError::Shape(e) => codec_error(path, e),
        other => CliError::parse(path, other),
    })
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    let files = list_files(&args.maps, mapfile::EXTENSION)?;
    if files.is_empty() {
        return Err(CliError::Empty(format!("no .{} files in {}", mapfile::EXTENSION, args.maps.display())));
    }
    let params = DecodeParams { top_k: args.topk, score_thresh: args.score, alpha_thresh: args.alpha };
    let per_image = files
        .par_iter()
        .map(|path| {
            let maps = read_map_file(path)?;
            if maps.classes() > Category::COUNT {
                return Err(CliError::Shape(format!(
                    "{}: {} classes, at most {} are supported",
                    path.display(),
                    maps.classes(),
                    Category::COUNT
                )));
            }
            let name = stem(path);
            Ok(decode_maps(&maps, &params)
                .iter()
                .filter_map(|d| DetectionRecord::from_detection(&name, d))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<DetectionRecord> = per_image.into_iter().flatten().collect();
    write_atomic(&args.out, write_detection_records(&records).as_bytes())?;
    print_json(&json!({ "images": files.len(), "detections": records.len() }));
    Ok(())
}

/// Boxes from either detection records or DOTA annotation lines.
fn read_boxes(path: &Path) -> Result<Vec<[Point2; 4]>> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        let recs = parse_detection_records(&text).map_err(|e| CliError::parse(path, e))?;
        Ok(recs.iter().map(|r| r.corners.map(Point2::from)).collect())
    } else {
        let anns = parse_annotations(&text).map_err(|e| CliError::parse(path, e))?;
        Ok(anns.iter().map(|a| a.corners).collect())
    }
}

pub fn iou(args: &IouArgs) -> Result<()> {
    let canon = |path: &Path| -> Result<Vec<_>> {
        read_boxes(path)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| canonicalize(c).map_err(|e| CliError::parse(path, format!("box {i}: {e}"))))
            .collect()
    };
    let a = canon(&args.a)?;
    let b = canon(&args.b)?;
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Empty("both inputs need at least one box".into()));
    }
    let mut table = String::from("a\\b");
    for j in 0..b.len() {
        table.push_str(&format!("\t{j}"));
    }
    table.push('\n');
    for (i, ba) in a.iter().enumerate() {
        table.push_str(&i.to_string());
        for bb in &b {
            table.push_str(&format!("\t{:.6}", rotated_iou(ba, bb)));
        }
        table.push('\n');
    }
    match &args.out {
        Some(path) => write_atomic(path, table.as_bytes()),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

/// Records grouped by image, keeping first-seen image order.
fn group_by_image(records: Vec<DetectionRecord>) -> Vec<(String, Vec<Detection>)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(&r.image) {
            order.push(r.image.clone());
        }
        groups.entry(r.image.clone()).or_default().push(r.to_detection());
    }
    order
        .into_iter()
        .map(|name| {
            let dets = groups.remove(&name).unwrap_or_default();
            (name, dets)
        })
        .collect()
}

fn records_for(image: &str, dets: &[Detection]) -> Vec<DetectionRecord> {
    dets.iter().filter_map(|d| DetectionRecord::from_detection(image, d)).collect()
}

fn check_iou(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("IOU threshold must lie in [0, 1], got {v}")))
    }
}

pub fn nms(args: &NmsArgs) -> Result<()> {
    check_iou(args.iou)?;
    let groups = group_by_image(read_records(&args.dets)?);
    let kept: Vec<DetectionRecord> = groups
        .par_iter()
        .map(|(image, dets)| records_for(image, &rotated_nms(dets, args.iou)))
        .collect::<Vec<_>>()
        .concat();
    let text = write_detection_records(&kept);
    match &args.out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            print_json(&json!({ "kept": kept.len() }));
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ClassRow {
    class: &'static str,
    class_id: usize,
    num_gt: usize,
    num_dets: usize,
    ap: f64,
    precision: Vec<f64>,
    recall: Vec<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    map: f64,
    iou_thresh: f64,
    images: usize,
    detections: usize,
    classes: Vec<ClassRow>,
    excluded_classes: Vec<&'static str>,
}

fn class_name(id: usize) -> &'static str {
    Category::from_index(id).map(Category::name).unwrap_or("unknown")
}

fn eval_report(result: &MatchResult, iou_thresh: f64, images: usize, detections: usize) -> EvalReport {
    EvalReport {
        map: result.map,
        iou_thresh,
        images,
        detections,
        classes: result
            .classes
            .iter()
            .map(|c| ClassRow {
                class: class_name(c.class_id),
                class_id: c.class_id,
                num_gt: c.num_gt,
                num_dets: c.num_dets,
                ap: c.ap,
                precision: c.precision.clone(),
                recall: c.recall.clone(),
            })
            .collect(),
        excluded_classes: result.excluded_classes.iter().map(|&c| class_name(c)).collect(),
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    check_iou(args.iou)?;
    if !args.gt.is_dir() {
        return Err(CliError::io(
            &args.gt,
            std::io::Error::new(std::io::ErrorKind::NotFound, "ground-truth directory not found"),
        ));
    }
    let records = read_records(&args.dets)?;
    let n_dets = records.len();
    let mut gt: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
    for path in list_files(&args.gt, "txt")? {
        gt.insert(stem(&path), read_annotations(&path)?);
    }
    if gt.is_empty() {
        return Err(CliError::Empty(format!("no .txt ground truth in {}", args.gt.display())));
    }
    let mut dets: BTreeMap<String, Vec<Detection>> = group_by_image(records).into_iter().collect();
    let names: BTreeSet<String> = gt.keys().chain(dets.keys()).cloned().collect();
    let (mut det_lists, mut gt_lists) = (Vec::new(), Vec::new());
    for name in &names {
        det_lists.push(dets.remove(name).unwrap_or_default());
        gt_lists.push(gt.remove(name).unwrap_or_default());
    }
    let result = evaluate_map(&det_lists, &gt_lists, args.iou);
    let report = eval_report(&result, args.iou, names.len(), n_dets);
    write_atomic(&args.report, to_json(&report).as_bytes())?;

    println!("{:<20} {:>6} {:>6} {:>8}", "class", "gt", "dets", "AP");
    for c in &report.classes {
        println!("{:<20} {:>6} {:>6} {:>8.4}", c.class, c.num_gt, c.num_dets, c.ap);
    }
    println!("{:<20} {:>6} {:>6} {:>8.4}", "mAP", "", "", report.map);

    if let Some(dir) = &args.plot {
        ensure_dir(dir)?;
        for c in &report.classes {
            let svg = plot::pr_curve(c.class, &c.precision, &c.recall, c.ap);
            write_atomic(&dir.join(format!("pr_{}.svg", c.class)), svg.as_bytes())?;
        }
        for ((name, d), g) in names.iter().zip(&det_lists).zip(&gt_lists) {
            let svg = plot::overlay(name, g, d);
            write_atomic(&dir.join(format!("overlay_{name}.svg")), svg.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestTile {
    pub id: String,
    pub image: String,
    pub spec: TileSpec,
    pub objects: usize,
    pub truncated: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub patch: u32,
    pub step: u32,
    pub scales: Vec<f64>,
    pub tiles: Vec<ManifestTile>,
}

pub fn tile(args: &TileArgs) -> Result<()> {
    let params = match args.step {
        Some(step) => TilingParams::with_step(args.patch, step, args.scales.clone()),
        None => TilingParams::with_overlap(args.patch, args.overlap, args.scales.clone()),
    }
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    let files = list_files(&args.annotations, "txt")?;
    if files.is_empty() {
        return Err(CliError::Empty(format!("no .txt annotations in {}", args.annotations.display())));
    }
    let ann_dir = args.out.join("annotations");
    ensure_dir(&ann_dir)?;
    let per_image = files
        .par_iter()
        .map(|path| {
            let name = stem(path);
            let (w, h) = image_size(args.images.as_deref(), &name, args.image_size)?;
            let anns = read_annotations(path)?;
            let tiles = make_tiles(w, h, &params).map_err(|e| CliError::Invalid(format!("{name}: {e}")))?;
            let mut entries = Vec::with_capacity(tiles.len());
            for (k, spec) in tiles.into_iter().enumerate() {
                let id = format!("{name}__{k:04}");
                let cropped = crop_annotations(&anns, &spec);
                let records: Vec<AnnotationRecord> = cropped.iter().map(|c| c.record.clone()).collect();
                let text = bbav_core::dota_io::format_annotations(&records);
                write_atomic(&ann_dir.join(format!("{id}.txt")), text.as_bytes())?;
                entries.push(ManifestTile {
                    id,
                    image: name.clone(),
                    spec,
                    objects: cropped.len(),
                    truncated: cropped.iter().filter(|c| c.truncated).count(),
                });
            }
            Ok(entries)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        patch: params.patch,
        step: params.step,
        scales: params.scales.clone(),
        tiles: per_image.into_iter().flatten().collect(),
    };
    write_atomic(&args.out.join("manifest.json"), to_json(&manifest).as_bytes())?;
    print_json(&json!({ "images": files.len(), "tiles": manifest.tiles.len() }));
    Ok(())
}

fn detection_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let files = list_files(path, "jsonl")?;
        if files.is_empty() {
            return Err(CliError::Empty(format!("no .jsonl detections in {}", path.display())));
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn merge(args: &MergeArgs) -> Result<()> {
    check_iou(args.iou)?;
    let manifest: Manifest =
        serde_json::from_str(&read_text(&args.manifest)?).map_err(|e| CliError::parse(&args.manifest, e))?;
    let tiles: BTreeMap<&str, &ManifestTile> = manifest.tiles.iter().map(|t| (t.id.as_str(), t)).collect();

    let mut by_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for path in detection_files(&args.dets)? {
        for rec in read_records(&path)? {
            let tile = tiles
                .get(rec.image.as_str())
                .ok_or_else(|| CliError::parse(&path, format!("tile {:?} is not in the manifest", rec.image)))?;
            by_image.entry(tile.image.clone()).or_default().push(to_global(&rec.to_detection(), &tile.spec));
        }
    }
    let pooled: usize = by_image.values().map(Vec::len).sum();
    let merged: Vec<DetectionRecord> = by_image
        .par_iter()
        .map(|(image, dets)| records_for(image, &tiling::merge(dets, args.iou)))
        .collect::<Vec<_>>()
        .concat();
    write_atomic(&args.out, write_detection_records(&merged).as_bytes())?;
    print_json(&json!({ "images": by_image.len(), "pooled": pooled, "merged": merged.len() }));
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => parse_config(&read_text(path)?).map_err(|e| CliError::parse(path, e))?,
        None => SimulationConfig::default(),
    };
    if args.seeds == 0 {
        return Err(CliError::Empty("--seeds must be at least 1".into()));
    }
    let first = config.scene.seed;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| first.wrapping_add(i)).collect();
    let result = run_pipeline(&config.scene, &config.noise, &config.pipeline, &seeds)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let detections = result.flags.iter().map(Vec::len).sum();
    let report = json!({
        "seeds": { "first": first, "count": args.seeds },
        "config": config,
        "result": eval_report(&result, config.pipeline.eval_iou, seeds.len(), detections),
    });
    write_atomic(&args.report, to_json(&report).as_bytes())?;
    print_json(&json!({ "map": result.map, "seeds": args.seeds, "detections": detections }));
    Ok(())
}
