use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use pluralism_core::analytics::{
    bridge_theories, confidence_strata, entropy, evaluate_predictions, overlap_matrix, project_2d, school_aggregate,
    simplex_coords,
};
use pluralism_core::annotate::{AnnotationClient, PromptTemplate};
use pluralism_core::case::{validate_dataset, Case, PriorSimplex};
use pluralism_core::fusion::FusionConfig;
use pluralism_core::io::{load_cases, write_cases, CaseFormat};
use pluralism_core::learners::ClassProbabilities;
use pluralism_core::pipeline::{format_ablation_table, run_ablations, train_and_evaluate, AblationMode};
use pluralism_core::semantic::{EmbeddingProviderSpec, EmbeddingTable};
use pluralism_core::stack::{load_stack, save_stack, StackPrediction};
use pluralism_core::synth::generate;
use pluralism_core::taxonomy::{Subtheory, NUM_SUBTHEORIES};

use crate::output::{fmt_f64, read_json, write_csv, write_json, write_run_json, SCHEMA_VERSION};
use crate::{AnalyzeArgs, AnnotateArgs, CliError, CliResult, CommonArgs, GenerateArgs, RunConfig};

fn case_format(path: &Path) -> CliResult<CaseFormat> {
    CaseFormat::from_path(path)
        .ok_or_else(|| CliError::usage(format!("{}: expected a .csv or .jsonl case file", path.display())))
}

fn load(path: &Path) -> CliResult<Vec<Case>> {
    Ok(load_cases(path, case_format(path)?)?)
}

fn embeddings(cfg: &RunConfig, cases: &[Case]) -> CliResult<Option<EmbeddingTable>> {
    match &cfg.embeddings {
        None => Ok(None),
        Some(spec) => Ok(Some(spec.parse::<EmbeddingProviderSpec>()?.embed(cases)?)),
    }
}

fn require_embeddings(cfg: &RunConfig, cases: &[Case]) -> CliResult<EmbeddingTable> {
    embeddings(cfg, cases)?.ok_or_else(|| CliError::usage("no embeddings given (--embeddings <path|hash>)"))
}

/// Validates a case file; prints the report and fails with exit 1 on
/// duplicate ids, malformed rows or inconsistent labels.
pub fn cmd_ingest(args: &CommonArgs) -> CliResult<String> {
    let cfg = RunConfig::resolve(args)?;
    let cases = load(cfg.data_path()?)?;
    let report = validate_dataset(&cases);
    let label_errors: Vec<String> = cases
        .iter()
        .filter_map(|c| c.check_labels().err().map(|e| format!("{}: {e}", c.case_id)))
        .collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "report": report,
        "label_errors": label_errors,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::domain(e.to_string()))?;
    if !label_errors.is_empty() {
        crate::emit(&text);
        return Err(CliError::domain(format!("{} cases have inconsistent labels", label_errors.len())));
    }
    Ok(text)
}

/// Writes `cases.jsonl` and `embeddings.jsonl` into the output directory.
pub fn cmd_generate(args: &GenerateArgs) -> CliResult<PathBuf> {
    let cfg = RunConfig::resolve(&args.common)?;
    let mut synth = cfg.synth.clone();
    synth.seed = cfg.seed;
    if let Some(o) = args.overlap {
        synth.overlap = o;
    }
    if let Some(n) = args.per_class {
        synth.cases_per_subtheory = n;
    }
    let out = cfg.out_dir()?;
    let (cases, table) = generate(&synth)?;
    let data = out.join("cases.jsonl");
    write_cases(&data, CaseFormat::Jsonl, &cases)?;
    table.save_jsonl(&out.join("embeddings.jsonl"))?;
    let mut recorded = cfg.clone();
    recorded.synth = synth;
    write_run_json(out, "generate", &recorded)?;
    Ok(data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRecord {
    case_id: String,
    label: Subtheory,
    prior: Option<PriorSimplex>,
    #[serde(flatten)]
    prediction: StackPrediction,
}

/// Paths written by `train`.
#[derive(Debug, Clone)]
pub struct TrainFiles {
    pub run: PathBuf,
    pub model: PathBuf,
    pub report: PathBuf,
    pub predictions: PathBuf,
}

pub fn cmd_train(args: &CommonArgs) -> CliResult<TrainFiles> {
    let cfg = RunConfig::resolve(args)?;
    let cases = load(cfg.data_path()?)?;
    let table = require_embeddings(&cfg, &cases)?;
    let out = cfg.out_dir()?;
    let stack = cfg.seeded_stack();
    let result = train_and_evaluate(&cases, Some(&table), FusionConfig::full(), &stack)?;

    let files = TrainFiles {
        run: out.join("run.json"),
        model: out.join("model.json"),
        report: out.join("report.json"),
        predictions: out.join("predictions.json"),
    };
    write_run_json(out, "train", &cfg)?;
    save_stack(&result.model, &files.model)?;
    let [forest, boost, linear] = result.base_accuracies;
    write_json(
        &files.report,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "seed": cfg.seed,
            "train_size": result.train_ids.len(),
            "test_size": result.test_ids.len(),
            "folds": result.log.folds.len(),
            "leak_free": result.log.is_leak_free(),
            "base_accuracies": {"forest": forest, "boost": boost, "linear": linear},
            "report": result.report,
        }),
    )?;
    let by_id = |id: &str| cases.iter().find(|c| c.case_id == id).and_then(|c| c.prior);
    let records: Vec<PredictionRecord> = result
        .test_ids
        .iter()
        .zip(&result.test_labels)
        .zip(&result.predictions)
        .map(|((id, &label), p)| PredictionRecord {
            case_id: id.clone(),
            label,
            prior: by_id(id),
            prediction: p.clone(),
        })
        .collect();
    write_json(
        &files.predictions,
        &json!({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "predictions": records}),
    )?;
    Ok(files)
}

/// Runs one ablation table and returns it as aligned text.
pub fn cmd_evaluate(args: &CommonArgs) -> CliResult<String> {
    let cfg = RunConfig::resolve(args)?;
    let mode: AblationMode = cfg.ablation.parse()?;
    let cases = load(cfg.data_path()?)?;
    let table = require_embeddings(&cfg, &cases)?;
    let out = cfg.out_dir()?;
    let rows = run_ablations(&cases, Some(&table), mode, &cfg.seeded_stack())?;
    let text = format_ablation_table(&rows);
    write_run_json(out, "evaluate", &cfg)?;
    write_json(
        &out.join(format!("ablation_{mode}.json")),
        &json!({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "mode": mode, "rows": rows}),
    )?;
    std::fs::write(out.join(format!("ablation_{mode}.txt")), &text)
        .map_err(|e| CliError::usage(format!("cannot write ablation table: {e}")))?;
    Ok(text)
}

fn read_external_coords(path: &Path) -> CliResult<Vec<(String, [f64; 2])>> {
    let err = |e: csv::Error| CliError::usage(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut out = Vec::new();
    for rec in r.deserialize::<(String, f64, f64)>() {
        let (id, x, y) = rec.map_err(err)?;
        out.push((id, [x, y]));
    }
    Ok(out)
}

/// Writes the four plot-data CSVs, `simplex_priors.csv` and `analytics.json`
/// for the predictions of a trained run.
pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<PathBuf> {
    let mut cfg = RunConfig::resolve(&args.common)?;
    let out = cfg.out_dir()?.to_path_buf();
    let model_path = args.model.clone().unwrap_or_else(|| out.join("model.json"));
    let model = load_stack(&model_path)?;

    // Data and embedding sources default to the ones the run trained on.
    let run_path = out.join("run.json");
    if run_path.exists() {
        let run = read_json(&run_path)?;
        if cfg.data.is_none() {
            cfg.data = run.pointer("/config/data").and_then(|v| v.as_str()).map(PathBuf::from);
        }
        if cfg.embeddings.is_none() {
            cfg.embeddings = run.pointer("/config/embeddings").and_then(|v| v.as_str()).map(String::from);
        }
    }

    let doc = read_json(&out.join("predictions.json"))?;
    let records: Vec<PredictionRecord> = serde_json::from_value(doc["predictions"].clone())
        .map_err(|e| CliError::domain(format!("predictions.json: {e}")))?;
    if records.is_empty() {
        return Err(CliError::domain("predictions.json holds no predictions"));
    }
    let preds: Vec<StackPrediction> = records.iter().map(|r| r.prediction.clone()).collect();
    let labels: Vec<Subtheory> = records.iter().map(|r| r.label).collect();
    let report = evaluate_predictions(&preds, &labels)?;

    let mut points = Vec::with_capacity(records.len());
    let mut mass = [0.0; 3];
    for r in &records {
        let school = school_aggregate(r.prediction.calibrated.as_slice())?;
        for (m, v) in mass.iter_mut().zip(school.components()) {
            *m += v / records.len() as f64;
        }
        let (x, y) = simplex_coords(&school);
        points.push(vec![
            r.case_id.clone(),
            fmt_f64(x),
            fmt_f64(y),
            fmt_f64(entropy(r.prediction.raw.as_slice(), false)),
            fmt_f64(entropy(r.prediction.calibrated.as_slice(), false)),
        ]);
    }
    write_csv(
        &out.join("simplex_points.csv"),
        &["case_id", "x", "y", "entropy_raw", "entropy_calibrated"],
        points,
    )?;
    write_csv(
        &out.join("simplex_priors.csv"),
        &["case_id", "x", "y", "alpha", "beta", "gamma"],
        records.iter().filter_map(|r| {
            let p = r.prior?;
            let (x, y) = simplex_coords(&p);
            let [a, b, g] = p.components();
            Some(vec![r.case_id.clone(), fmt_f64(x), fmt_f64(y), fmt_f64(a), fmt_f64(b), fmt_f64(g)])
        }),
    )?;

    let overlap = overlap_matrix(&report.confusion);
    write_csv(
        &out.join("overlap.csv"),
        &["sub_i", "sub_j", "score"],
        (0..NUM_SUBTHEORIES).flat_map(|i| {
            let overlap = &overlap;
            ((i + 1)..NUM_SUBTHEORIES).map(move |j| {
                vec![
                    Subtheory::ALL[i].name().to_string(),
                    Subtheory::ALL[j].name().to_string(),
                    fmt_f64(overlap.get(i, j)),
                ]
            })
        }),
    )?;
    let bridges = bridge_theories(&overlap, cfg.top_k);

    let calibrated: Vec<ClassProbabilities> = preds.iter().map(|p| p.calibrated.clone()).collect();
    let y: Vec<usize> = labels.iter().map(|s| s.index()).collect();
    let strata = confidence_strata(&calibrated, &y, cfg.bin_width)?;
    write_csv(
        &out.join("confidence_strata.csv"),
        &["bin_low", "bin_high", "coverage", "accuracy"],
        strata.bins.iter().map(|b| {
            vec![
                fmt_f64(b.low),
                fmt_f64(b.high),
                fmt_f64(b.coverage),
                b.accuracy.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )?;

    // Projection source: external coordinates, else supervectors, else the
    // calibrated distributions when no embeddings are reachable.
    let (source, coords, projection) = if let Some(path) = &args.coords {
        let ext = read_external_coords(path)?;
        let coords = records
            .iter()
            .map(|r| {
                ext.iter()
                    .find(|(id, _)| id == &r.case_id)
                    .map(|(_, c)| *c)
                    .ok_or_else(|| CliError::domain(format!("no external coordinates for {}", r.case_id)))
            })
            .collect::<CliResult<Vec<_>>>()?;
        ("external", coords, None)
    } else {
        let table = match (&cfg.data, &cfg.embeddings) {
            (Some(data), Some(_)) => {
                let cases = load(data)?;
                embeddings(&cfg, &cases)?
            }
            _ => None,
        };
        let (source, rows) = match &table {
            Some(t) => (
                "supervector",
                records
                    .iter()
                    .map(|r| Ok(t.supervector(&r.case_id)?.to_vec()))
                    .collect::<CliResult<Vec<_>>>()?,
            ),
            None => ("calibrated", calibrated.iter().map(|p| p.as_slice().to_vec()).collect()),
        };
        let proj = project_2d(&rows)?;
        (source, proj.coords.clone(), Some(proj))
    };
    write_csv(
        &out.join("projection_2d.csv"),
        &["case_id", "x", "y", "label", "predicted"],
        records.iter().zip(&coords).map(|(r, c)| {
            vec![
                r.case_id.clone(),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                r.label.name().to_string(),
                r.prediction.predicted.name().to_string(),
            ]
        }),
    )?;

    let analytics = out.join("analytics.json");
    write_json(
        &analytics,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "seed": cfg.seed,
            "model": model_path,
            "n": report.n,
            "temperature": model.temperature,
            "exact_match_accuracy": report.exact_match_accuracy,
            "macro_f1": report.macro_f1,
            "entropy": {
                "mean_raw": report.mean_entropy_raw,
                "mean_calibrated": report.mean_entropy_calibrated,
                "mean_raw_normalized": report.mean_entropy_raw_normalized,
                "mean_calibrated_normalized": report.mean_entropy_calibrated_normalized,
            },
            "mean_school_mass": {"alpha": mass[0], "beta": mass[1], "gamma": mass[2]},
            "bridges": bridges,
            "strata": strata,
            "projection": {
                "source": source,
                "explained_variance": projection.as_ref().map(|p| p.explained_variance),
                "variance_share": projection.as_ref().map(|p| p.variance_share),
            },
        }),
    )?;
    Ok(analytics)
}

/// Fills priors from the configured endpoint. Writes the annotated case file
/// and `annotate_failures.json`; fails with exit 1 only when every case failed.
pub fn cmd_annotate(args: &AnnotateArgs) -> CliResult<PathBuf> {
    let cfg = RunConfig::resolve(&args.common)?;
    let data = cfg.data_path()?;
    let format = case_format(data)?;
    let mut cases = load_cases(data, format)?;
    let mut annotation = cfg.annotation.clone();
    if let Some(url) = &args.endpoint {
        annotation.endpoint = url.clone();
    }
    let rate = args.rate.unwrap_or(cfg.rate_limit);
    let client = AnnotationClient::new(annotation)?;
    let out = cfg.out_dir()?;

    let results = client.annotate_dataset(&PromptTemplate::default(), &cases, rate);
    let mut failures = Vec::new();
    for (case, (id, result)) in cases.iter_mut().zip(results) {
        match result {
            Ok(prior) => case.prior = Some(prior),
            Err(error) => failures.push(json!({"case_id": id, "error": error})),
        }
    }
    let ext = if format == CaseFormat::Csv { "csv" } else { "jsonl" };
    let target = out.join(format!("annotated.{ext}"));
    write_cases(&target, format, &cases)?;
    write_json(&out.join("annotate_failures.json"), &json!({"failures": failures}))?;
    write_run_json(out, "annotate", &cfg)?;
    if !cases.is_empty() && failures.len() == cases.len() {
        return Err(CliError::domain(format!("all {} cases failed annotation", cases.len())));
    }
    eprintln!("annotated {} of {} cases", cases.len() - failures.len(), cases.len());
    Ok(target)
}
