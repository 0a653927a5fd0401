use std::fs;
use std::path::{Path, PathBuf};

use cardioshape::evaluate::measure_image;
use cardioshape::synth::{self, Deformity, PhantomSpec};
use cardioshape::{
    aggregate, calibrate as calibrate_records, default_thresholds, evaluate_cohort, evaluate_entry,
    parse_manifest, read_mask, render, render_records, write_mask, Canvas, DeformityKind,
    EvaluationRun, Format, GeometricRule, ImageRecord, LabelMap, OutlierVerdict, ShapeKind,
    ShapeSpec, Spacing, ThresholdSet,
};

use crate::error::CliError;
use crate::{DeformityArg, FormatArg, GlobalArgs, ShapeArg, ShapeArgs, SweepArgs, SynthArgs};

fn format_of(arg: FormatArg) -> Format {
    match arg {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
        FormatArg::Md => Format::Markdown,
    }
}

fn jobs(g: &GlobalArgs) -> usize {
    g.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn labels(g: &GlobalArgs) -> Result<LabelMap, CliError> {
    Ok(g.labels.parse::<LabelMap>()?)
}

/// Threshold file or built-in defaults, with `--geo-hd-max` applied, checked
/// to cover every structure of the label map.
fn thresholds(g: &GlobalArgs, labels: &LabelMap) -> Result<ThresholdSet, CliError> {
    let mut t = match &g.thresholds {
        Some(path) => ThresholdSet::load(path)?,
        None => default_thresholds(),
    };
    if let Some(hd) = g.geo_hd_max {
        if !(hd.is_finite() && hd > 0.0) {
            return Err(CliError::Usage(format!(
                "--geo-hd-max must be positive, got {hd}"
            )));
        }
        t = t.with_geometric_rule(GeometricRule {
            hd_max_mm: hd,
            enabled: true,
        });
    }
    for (name, _) in labels.structures() {
        if t.get(name).is_none() {
            return Err(CliError::Data(format!(
                "thresholds do not cover structure {name}"
            )));
        }
    }
    Ok(t)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn manifest_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}

pub fn calibrate(g: &GlobalArgs, manifest: &Path) -> Result<(), CliError> {
    let labels = labels(g)?;
    let base = thresholds(g, &labels)?;
    let entries = parse_manifest(&read_text(manifest)?, manifest_dir(manifest), false)?;
    let strict = !g.lenient;

    let images = evaluate_cohort(&entries, jobs(g), |entry| {
        match read_mask(&entry.prediction) {
            Ok(mask) => Ok(ImageRecord {
                image_id: entry.image_id.clone(),
                tags: entry.tags.clone(),
                structures: measure_image(&mask, None, &labels).unwrap_or_default(),
                verdict: OutlierVerdict::default(),
                error: None,
            }),
            Err(e) if strict => Err(e.into()),
            Err(e) => Ok(ImageRecord::failed(
                entry.image_id.clone(),
                entry.tags.clone(),
                e.to_string(),
            )),
        }
    })?;

    let mut records = Vec::new();
    for img in &images {
        match &img.error {
            Some(e) => eprintln!("warning: skipping {}: {e}", img.image_id),
            None => records.extend(img.structures.iter().cloned()),
        }
    }
    if records.is_empty() {
        return Err(CliError::Data("no usable expert masks".into()));
    }
    let calibrated = calibrate_records(&records, &base)?;
    let path = g.out.join("thresholds.txt");
    write_text(&path, &calibrated.to_text())?;

    for (name, t) in &calibrated.structures {
        let n = records.iter().filter(|r| &r.structure == name).count();
        if n == 0 {
            continue;
        }
        let show = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        println!(
            "{name}\tmin_convexity={}\tmin_simplicity={}\tn={n}",
            show(t.min_convexity),
            show(t.min_simplicity)
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Writes `run.json`, `records.<ext>` and `summary.<ext>` and prints the
/// summary.
fn write_run(g: &GlobalArgs, run: &EvaluationRun) -> Result<(), CliError> {
    let format = format_of(g.format);
    let ext = format.extension();
    let json = serde_json::to_string_pretty(run).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&g.out.join("run.json"), &(json + "\n"))?;
    write_text(
        &g.out.join(format!("records.{ext}")),
        &render_records(&run.images, format)?,
    )?;
    let summary = render(&[aggregate(&run.method, &run.images)?], format)?;
    write_text(&g.out.join(format!("summary.{ext}")), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn evaluate(g: &GlobalArgs, manifest: &Path, method: &str) -> Result<(), CliError> {
    let labels = labels(g)?;
    let thresholds = thresholds(g, &labels)?;
    let entries = parse_manifest(&read_text(manifest)?, manifest_dir(manifest), true)?;
    let strict = g.strict;
    let images = evaluate_cohort(&entries, jobs(g), |entry| {
        evaluate_entry(entry, &labels, &thresholds, strict)
    })?;
    for img in &images {
        if let Some(e) = &img.error {
            eprintln!("warning: {}: {e}", img.image_id);
        }
    }
    write_run(
        g,
        &EvaluationRun {
            method: method.to_string(),
            images,
        },
    )
}

fn load_run(path: &Path) -> Result<EvaluationRun, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("{}: not a stored run: {e}", path.display())))
}

pub fn classify(g: &GlobalArgs, run: &Path) -> Result<(), CliError> {
    let run = load_run(run)?;
    let labels = labels(g)?;
    let thresholds = thresholds(g, &labels)?;
    write_run(g, &run.reclassify(&thresholds)?)
}

pub fn report(g: &GlobalArgs, runs: &[PathBuf]) -> Result<(), CliError> {
    let summaries = runs
        .iter()
        .map(|p| {
            let run = load_run(p)?;
            Ok(aggregate(&run.method, &run.images)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let format = format_of(g.format);
    let text = render(&summaries, format)?;
    write_text(
        &g.out.join(format!("summary.{}", format.extension())),
        &text,
    )?;
    print!("{text}");
    Ok(())
}

fn need<T>(value: Option<T>, flag: &str, shape: ShapeArg) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Usage(format!("--{flag} is required for {shape:?}").to_lowercase())
    })
}

fn shape_kind(shape: ShapeArg, a: &ShapeArgs) -> Result<ShapeKind, CliError> {
    Ok(match shape {
        ShapeArg::Disk => ShapeKind::Disk {
            radius: need(a.radius, "radius", shape)?,
        },
        ShapeArg::Blob => ShapeKind::Blob {
            radius: need(a.radius, "radius", shape)?,
        },
        ShapeArg::Square => ShapeKind::Square {
            side: need(a.side, "side", shape)?,
        },
        ShapeArg::Ellipse => ShapeKind::Ellipse {
            semi_x: need(a.semi_x, "semi-x", shape)?,
            semi_y: need(a.semi_y, "semi-y", shape)?,
        },
        ShapeArg::Bridge => ShapeKind::Bridge {
            inner_radius: need(a.inner, "inner", shape)?,
            outer_radius: need(a.outer, "outer", shape)?,
            span_deg: a.span,
        },
        ShapeArg::Phantom => {
            return Err(CliError::Usage("phantom is not a single shape".into()));
        }
    })
}

fn deformity_kind(d: DeformityArg) -> DeformityKind {
    match d {
        DeformityArg::Spike => DeformityKind::Spike,
        DeformityArg::Notch => DeformityKind::Notch,
        DeformityArg::Neck => DeformityKind::Neck,
    }
}

fn canvas(a: &ShapeArgs) -> Result<Canvas, CliError> {
    let spacing = Spacing::isotropic(a.spacing)
        .map_err(|_| CliError::Usage(format!("--spacing must be positive, got {}", a.spacing)))?;
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("canvas size must be positive".into()));
    }
    Ok(Canvas::new(a.width, a.height, spacing))
}

pub fn synth(g: &GlobalArgs, args: &SynthArgs) -> Result<(), CliError> {
    let a = &args.shape_args;
    let canvas = canvas(a)?;
    let deformity = args.deformity.map(|d| Deformity {
        kind: deformity_kind(d),
        magnitude: args.magnitude,
        angle_deg: a.angle,
    });
    let mask = match args.shape {
        ShapeArg::Phantom => {
            let mut spec = PhantomSpec::new(a.seed);
            if let Some(r) = a.radius {
                spec.cavity_radius = r;
            }
            spec.wall_thickness = a.wall;
            spec.cavity_deformity = deformity;
            synth::cardiac_phantom(&spec, &canvas)?
        }
        shape => synth::generate(
            &ShapeSpec {
                kind: shape_kind(shape, a)?,
                deformity,
                seed: a.seed,
            },
            &canvas,
        )?,
    };
    let path = match &args.output {
        Some(p) => p.clone(),
        None => {
            let name = format!("{:?}.mha", args.shape).to_lowercase();
            g.out.join(name)
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    write_mask(&mask, &path)?;
    println!("{}", path.display());
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let a = &args.shape_args;
    let spec = ShapeSpec::new(shape_kind(args.shape, a)?)
        .with_seed(a.seed)
        .with_deformity(deformity_kind(args.deformity), 0.0, a.angle);
    let rows = synth::sensitivity_sweep(&spec, &canvas(a)?, &args.magnitudes)?;
    let csv = synth::sweep_to_csv(&rows);
    match &args.output {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
