use std::path::{Path, PathBuf};

use cellsplit::augment::{draw_rng, sample_augmentation, AugmentDraw, AugmentSpec};
use cellsplit::decode::{decode, DecodeParams, Strategy};
use cellsplit::gtprep::{instance_to_semantic, one_hot, NeighborhoodSpec};
use cellsplit::imagecore::{
    read_gray_image, read_label_map, read_probability_map, read_semantic_map, read_weight_map,
    write_gray_image, write_label_map, write_probability_map, write_semantic_map, write_weight_map,
    Grid, GrayImage, InstanceMap, SemanticMap, WeightMap,
};
use cellsplit::loss::{combine_probability_maps, weighted_cross_entropy};
use cellsplit::metrics::{evaluate_dataset, AveragedMetrics, DatasetReport, MetricsReport};
use cellsplit::synth::{generate_suite, oracle_probabilities, SceneSpec};
use cellsplit::weights::{balanced_weight_map, w3_weight_map, W3Params};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::files::{create_dir, extension, list_rasters, read_text, write_json, Sidecar};
use crate::{
    resolve_seed, AugmentArgs, CliError, CliResult, Command, DecodeArgs, DecodeFlags, EvalArgs,
    Gt2SemArgs, LossArgs, PipelineArgs, SynthArgs, WeightKind, WeightsArgs,
};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Gt2sem(args) => gt2sem(args),
        Command::Weights(args) => weights(args),
        Command::Augment(args) => augment(args),
        Command::Loss(args) => loss(args),
        Command::Decode(args) => decode_cmd(args),
        Command::Eval(args) => eval(args),
        Command::Pipeline(args) => pipeline(args),
        Command::Synth(args) => synth(args),
    }
}

fn radius(k: u64) -> CliResult<NeighborhoodSpec> {
    Ok(NeighborhoodSpec::new(k as usize)?)
}

fn gt2sem(args: Gt2SemArgs) -> CliResult<()> {
    let k = radius(args.k)?;
    let g = read_label_map(&args.input)?;
    let h = instance_to_semantic(&g, k);
    write_semantic_map(&args.out, &h)?;
    #[derive(Serialize)]
    struct Config {
        k: NeighborhoodSpec,
    }
    Sidecar::new("gt2sem", Config { k })
        .input("gt", &args.input)
        .output(&args.out)
        .write_beside(&args.out)
}

fn require_npy(path: &Path) -> CliResult<()> {
    if extension(path).as_deref() == Some("npy") {
        Ok(())
    } else {
        Err(cellsplit::Error::UnsupportedFormat(path.to_path_buf()).into())
    }
}

fn weights(args: WeightsArgs) -> CliResult<()> {
    let k = radius(args.k)?;
    let defaults = W3Params::default();
    let params = W3Params {
        beta: args.beta.unwrap_or(defaults.beta),
        nu: args.nu.unwrap_or(defaults.nu),
        sigma: args.sigma.unwrap_or(defaults.sigma),
    };
    params.validate()?;
    require_npy(&args.out)?;
    let g = read_label_map(&args.gt)?;
    let h = match &args.classes {
        Some(path) => read_semantic_map(path)?,
        None => instance_to_semantic(&g, k),
    };
    let w = match args.kind {
        WeightKind::W3 => w3_weight_map(&g, &h, &params)?,
        WeightKind::Balanced => balanced_weight_map(&h),
    };
    write_weight_map(&args.out, &w)?;
    #[derive(Serialize)]
    struct Config {
        kind: WeightKind,
        k: NeighborhoodSpec,
        params: W3Params,
    }
    let mut sidecar = Sidecar::new("weights", Config { kind: args.kind, k, params }).input("gt", &args.gt);
    if let Some(path) = &args.classes {
        sidecar = sidecar.input("classes", path);
    }
    sidecar.output(&args.out).write_beside(&args.out)
}

fn label_extension(reference: &Path) -> &'static str {
    if extension(reference).as_deref() == Some("npy") {
        "npy"
    } else {
        "png"
    }
}

#[derive(Serialize)]
struct DrawRecord {
    name: String,
    index: u64,
    draw: AugmentDraw,
    files: Vec<String>,
}

/// Writes `count` augmented samples named `<prefix><i>_*` into `dir`.
#[allow(clippy::too_many_arguments)]
fn write_augmented(
    dir: &Path,
    prefix: &str,
    labels_ext: &str,
    sample: (&GrayImage, &InstanceMap, &SemanticMap, &WeightMap),
    spec: &AugmentSpec,
    first_index: u64,
    count: u64,
) -> CliResult<Vec<DrawRecord>> {
    let (x, g, h, w) = sample;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let index = first_index + i;
            let mut rng = draw_rng(spec.seed, index);
            let out = sample_augmentation(x, g, h, w, spec, &mut rng)?;
            let name = format!("{prefix}{i:04}");
            let files = [
                format!("{name}_image.npy"),
                format!("{name}_labels.{labels_ext}"),
                format!("{name}_classes.png"),
                format!("{name}_weights.npy"),
            ];
            write_gray_image(dir.join(&files[0]), &out.image)?;
            write_label_map(dir.join(&files[1]), &out.instances)?;
            write_semantic_map(dir.join(&files[2]), &out.classes)?;
            write_weight_map(dir.join(&files[3]), &out.weights)?;
            Ok(DrawRecord { name, index, draw: out.draw, files: files.to_vec() })
        })
        .collect()
}

fn augment(args: AugmentArgs) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            toml::from_str::<AugmentSpec>(&read_text(path)?)
                .map_err(|e| CliError::Validation(format!("invalid augmentation spec: {e}")))?
        }
        None => AugmentSpec::default(),
    };
    spec.seed = resolve_seed(args.seed, args.spec.as_ref().map(|_| spec.seed))?;
    spec.validate()?;
    let x = read_gray_image(&args.image)?;
    let g = read_label_map(&args.gt)?;
    let h = instance_to_semantic(&g, spec.k);
    let w = match &args.weights {
        Some(path) => read_weight_map(path)?,
        None => w3_weight_map(&g, &h, &spec.weight_params)?,
    };
    create_dir(&args.out_dir)?;
    let draws = write_augmented(
        &args.out_dir,
        "",
        label_extension(&args.gt),
        (&x, &g, &h, &w),
        &spec,
        0,
        args.count,
    )?;

    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        sidecar: Sidecar<'a, Config<'a>>,
        draws: Vec<DrawRecord>,
    }
    #[derive(Serialize)]
    struct Config<'a> {
        count: u64,
        spec: &'a AugmentSpec,
    }
    let mut sidecar = Sidecar::new("augment", Config { count: args.count, spec: &spec })
        .input("image", &args.image)
        .input("gt", &args.gt);
    if let Some(path) = &args.weights {
        sidecar = sidecar.input("weights", path);
    }
    write_json(&args.out_dir.join("manifest.json"), &Manifest { sidecar, draws })
}

fn loss(args: LossArgs) -> CliResult<()> {
    let k = radius(args.k)?;
    let h = match (&args.classes, &args.gt) {
        (Some(path), _) => read_semantic_map(path)?,
        (None, Some(path)) => instance_to_semantic(&read_label_map(path)?, k),
        (None, None) => return Err(CliError::Usage("one of --gt or --classes is required".into())),
    };
    let z = read_probability_map(&args.prob)?;
    let w = match &args.weights {
        Some(path) => read_weight_map(path)?,
        None => WeightMap::new(Grid::filled(h.width(), h.height(), 1.0))?,
    };
    let report = weighted_cross_entropy(&one_hot(&h), &z, &w)?;

    #[derive(Serialize)]
    struct Report<'a> {
        tool: &'static str,
        version: &'static str,
        total: f64,
        mean: f64,
        pixel_count: usize,
        per_class: PerClass,
        inputs: std::collections::BTreeMap<&'a str, String>,
    }
    #[derive(Serialize)]
    struct PerClass {
        background: f64,
        cell: f64,
        touching: f64,
    }
    let mut inputs = std::collections::BTreeMap::new();
    for (name, path) in [("gt", &args.gt), ("classes", &args.classes), ("weights", &args.weights)] {
        if let Some(path) = path {
            inputs.insert(name, path.display().to_string());
        }
    }
    inputs.insert("prob", args.prob.display().to_string());
    let out = Report {
        tool: "cellsplit",
        version: cellsplit::VERSION,
        total: report.total,
        mean: report.total / report.pixel_count as f64,
        pixel_count: report.pixel_count,
        per_class: PerClass {
            background: report.per_class[0],
            cell: report.per_class[1],
            touching: report.per_class[2],
        },
        inputs,
    };
    match &args.out {
        Some(path) => write_json(path, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Runtime(e.to_string()))?);
            Ok(())
        }
    }
}

fn apply_decode_flags(params: &mut DecodeParams, flags: &DecodeFlags) -> CliResult<()> {
    if let Some(s) = &flags.strategy {
        params.strategy = s.parse::<Strategy>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    params.gamma1 = flags.gamma1.or(params.gamma1);
    params.gamma2 = flags.gamma2.or(params.gamma2);
    params.tau0 = flags.tau0.or(params.tau0);
    params.tau1 = flags.tau1.or(params.tau1);
    if let Some(area) = flags.min_area {
        params.min_instance_area = area;
    }
    Ok(())
}

/// Decode parameters with strategy defaults filled in, as recorded in
/// manifests.
fn resolved_decode(params: &DecodeParams) -> DecodeParams {
    let mut out = params.clone();
    if params.strategy == Strategy::Wt {
        let wt = params.watershed();
        out.tau0 = Some(wt.tau0);
        out.tau1 = Some(wt.tau1);
    }
    out
}

fn decode_cmd(args: DecodeArgs) -> CliResult<()> {
    let mut params = DecodeParams::default();
    apply_decode_flags(&mut params, &args.params)?;
    params.validate()?;
    let maps = args.prob.iter().map(read_probability_map).collect::<Result<Vec<_>, _>>()?;
    let z = if maps.len() == 1 { maps.into_iter().next().unwrap() } else { combine_probability_maps(&maps)? };
    let labels = decode(&z, &params)?;
    write_label_map(&args.out, &labels)?;
    let prob = args.prob.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
    let mut sidecar = Sidecar::new("decode", resolved_decode(&params));
    sidecar.inputs.insert("prob", prob);
    sidecar.output(&args.out).write_beside(&args.out)
}

#[derive(Debug, Serialize)]
struct ImageMetrics {
    name: String,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    tool: &'static str,
    version: &'static str,
    pooled: MetricsReport,
    per_image_mean: AveragedMetrics,
    images: Vec<ImageMetrics>,
}

impl EvalReport {
    fn new(names: Vec<String>, report: DatasetReport) -> Self {
        EvalReport {
            tool: "cellsplit",
            version: cellsplit::VERSION,
            pooled: report.pooled,
            per_image_mean: report.per_image_mean,
            images: names
                .into_iter()
                .zip(report.per_image)
                .map(|(name, metrics)| ImageMetrics { name, metrics })
                .collect(),
        }
    }

    fn csv(&self) -> String {
        let mut out = String::from("image,p05,rq,sq,pq,tp,fp,fn\n");
        let row = |name: &str, m: &MetricsReport| {
            let name = if name.contains([',', '"', '\n']) {
                format!("\"{}\"", name.replace('"', "\"\""))
            } else {
                name.to_owned()
            };
            format!("{name},{},{},{},{},{},{},{}\n", m.p05, m.rq, m.sq, m.pq, m.tp, m.fp, m.fn_)
        };
        for image in &self.images {
            out.push_str(&row(&image.name, &image.metrics));
        }
        out.push_str(&row("pooled", &self.pooled));
        out
    }

    fn write(&self, json: &Path, csv: Option<&Path>) -> CliResult<()> {
        write_json(json, self)?;
        if let Some(path) = csv {
            let text = self.csv();
            cellsplit::imagecore::write_atomic(path, |w| std::io::Write::write_all(w, text.as_bytes()))?;
        }
        Ok(())
    }
}

/// Pairs files of `a` with same-stem files of `b`.
fn paired(a: &Path, b: &Path, what: &str) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let left = list_rasters(a)?;
    if left.is_empty() {
        return Err(CliError::Validation(format!("no label maps in {}", a.display())));
    }
    let mut right = list_rasters(b)?;
    left.into_iter()
        .map(|(stem, path)| match right.remove(&stem) {
            Some(other) => Ok((stem, path, other)),
            None => Err(CliError::Validation(format!("no {what} for '{stem}' in {}", b.display()))),
        })
        .collect()
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let pairs = paired(&args.gt, &args.pred, "prediction")?;
    let maps = pairs
        .par_iter()
        .map(|(_, gt, pred)| Ok((read_label_map(gt)?, read_label_map(pred)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let report = evaluate_dataset(&maps)?;
    let names = pairs.into_iter().map(|(stem, _, _)| stem).collect();
    EvalReport::new(names, report).write(&args.out, args.csv.as_deref())
}

fn pipeline(args: PipelineArgs) -> CliResult<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(out) = args.out {
        config.paths.out = out;
    }
    if let Some(prob) = args.probabilities {
        config.paths.probabilities = Some(prob);
    }
    if let Some(k) = args.k {
        config.k = NeighborhoodSpec::new(k)?;
    }
    apply_decode_flags(&mut config.decode, &args.decode)?;
    let seed = resolve_seed(args.seed, config.seed)?;
    config.seed = Some(seed);
    config.augment.spec.seed = seed;
    config.validate()?;
    run_pipeline(&config)
}

#[derive(Serialize)]
struct ImageRecord {
    name: String,
    gt: String,
    semantic: String,
    weights: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    augmented: Vec<DrawRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<String>,
}

/// Runs every local stage of `config`. Outputs go below `config.paths.out`
/// and are recorded, relative to it, in `manifest.json`.
pub fn run_pipeline(config: &PipelineConfig) -> CliResult<()> {
    let paths = &config.paths;
    let gts: Vec<(String, PathBuf)> = list_rasters(&paths.gt)?.into_iter().collect();
    if gts.is_empty() {
        return Err(CliError::Validation(format!("no label maps in {}", paths.gt.display())));
    }
    let find = |dir: &Option<PathBuf>, what: &str| -> CliResult<Option<Vec<PathBuf>>> {
        let Some(dir) = dir else { return Ok(None) };
        let mut files = list_rasters(dir)?;
        gts.iter()
            .map(|(stem, _)| {
                files.remove(stem).ok_or_else(|| {
                    CliError::Validation(format!("no {what} for '{stem}' in {}", dir.display()))
                })
            })
            .collect::<CliResult<Vec<_>>>()
            .map(Some)
    };
    let images = if config.augment.count > 0 { find(&paths.images, "image")? } else { None };
    let probabilities = find(&paths.probabilities, "probability map")?;

    let out = &paths.out;
    for sub in ["semantic", "weights"] {
        create_dir(&out.join(sub))?;
    }
    if images.is_some() {
        create_dir(&out.join("augment"))?;
    }
    if probabilities.is_some() {
        create_dir(&out.join("pred"))?;
    }

    let count = config.augment.count as u64;
    let results = gts
        .par_iter()
        .enumerate()
        .map(|(i, (stem, gt_path))| -> CliResult<(ImageRecord, Option<(InstanceMap, InstanceMap)>)> {
            let g = read_label_map(gt_path)?;
            let h = instance_to_semantic(&g, config.k);
            let w = w3_weight_map(&g, &h, &config.weights)?;
            let semantic = format!("semantic/{stem}.png");
            let weights = format!("weights/{stem}.npy");
            write_semantic_map(out.join(&semantic), &h)?;
            write_weight_map(out.join(&weights), &w)?;

            let mut augmented = Vec::new();
            if let Some(images) = &images {
                let x = read_gray_image(&images[i])?;
                let mut records = write_augmented(
                    &out.join("augment"),
                    &format!("{stem}_"),
                    label_extension(gt_path),
                    (&x, &g, &h, &w),
                    &config.augment.spec,
                    i as u64 * count,
                    count,
                )?;
                for r in &mut records {
                    r.files.iter_mut().for_each(|f| *f = format!("augment/{f}"));
                }
                augmented = records;
            }

            let mut prediction = None;
            let mut pair = None;
            if let Some(probabilities) = &probabilities {
                let z = read_probability_map(&probabilities[i])?;
                let pred = decode(&z, &config.decode)?;
                let name = format!("pred/{stem}.{}", label_extension(gt_path));
                write_label_map(out.join(&name), &pred)?;
                prediction = Some(name);
                pair = Some((g, pred));
            }
            let record = ImageRecord {
                name: stem.clone(),
                gt: gt_path.display().to_string(),
                semantic,
                weights,
                augmented,
                prediction,
            };
            Ok((record, pair))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let (records, pairs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut resolved = config.clone();
    resolved.decode = resolved_decode(&config.decode);
    let mut report_file = None;
    if probabilities.is_some() {
        let pairs: Vec<_> = pairs.into_iter().flatten().collect();
        let names = records.iter().map(|r| r.name.clone()).collect();
        EvalReport::new(names, evaluate_dataset(&pairs)?)
            .write(&out.join("report.json"), Some(&out.join("report.csv")))?;
        report_file = Some("report.json");
    }

    #[derive(Serialize)]
    struct Manifest<'a> {
        tool: &'static str,
        version: &'static str,
        command: &'static str,
        config: &'a PipelineConfig,
        skipped: Vec<&'static str>,
        images: Vec<ImageRecord>,
        #[serde(skip_serializing_if = "Option::is_none")]
        report: Option<&'static str>,
    }
    let mut skipped = vec!["training"];
    if images.is_none() {
        skipped.push("augment");
    }
    if probabilities.is_none() {
        skipped.extend(["decode", "eval"]);
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            tool: "cellsplit",
            version: cellsplit::VERSION,
            command: "pipeline",
            config: &resolved,
            skipped,
            images: records,
            report: report_file,
        },
    )
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let seed = resolve_seed(args.seed, None)?;
    let spec = SceneSpec { width: args.width, height: args.height, ..Default::default() };
    let k = NeighborhoodSpec::default();
    if !(args.blur >= 0.0 && args.blur.is_finite()) {
        return Err(CliError::Validation(format!("blur must be >= 0, got {}", args.blur)));
    }
    let scenes = generate_suite(&spec, args.count, seed, Some(k))?;
    for sub in ["images", "gt", "probabilities"] {
        create_dir(&args.out.join(sub))?;
    }
    let names: Vec<String> = (0..scenes.len()).map(|i| format!("scene_{i:03}")).collect();
    scenes
        .par_iter()
        .zip(&names)
        .try_for_each(|(scene, name)| -> CliResult<()> {
            let h = instance_to_semantic(&scene.instances, k);
            let z = oracle_probabilities(&h, args.blur)?;
            write_gray_image(args.out.join(format!("images/{name}.npy")), &scene.image)?;
            write_label_map(args.out.join(format!("gt/{name}.png")), &scene.instances)?;
            write_probability_map(args.out.join(format!("probabilities/{name}.npy")), &z)?;
            Ok(())
        })?;

    let config = format!(
        "seed = {seed}\n\n[paths]\ngt = \"gt\"\nimages = \"images\"\nprobabilities = \"probabilities\"\nout = \"run\"\n\n[decode]\nstrategy = \"wt\"\n"
    );
    cellsplit::imagecore::write_atomic(&args.out.join("pipeline.toml"), |w| {
        std::io::Write::write_all(w, config.as_bytes())
    })?;

    #[derive(Serialize)]
    struct Config {
        seed: u64,
        count: usize,
        blur: f64,
        k: NeighborhoodSpec,
        scene: SceneSpec,
    }
    let mut sidecar =
        Sidecar::new("synth", Config { seed, count: args.count, blur: args.blur, k, scene: spec });
    for name in &names {
        sidecar = sidecar.output(Path::new(&format!("gt/{name}.png")));
    }
    write_json(&args.out.join("manifest.json"), &sidecar)
}
