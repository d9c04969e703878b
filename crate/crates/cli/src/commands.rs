use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use cgpa_core::causal::{
    evaluate_hypothesis_graph, export_graph, ges_discover, graph_compare, grasp_discover, ica_lingam_with,
    parse_graph_json, pc_discover, AnyGraph, GraphComparison, GraphFormat, LingamConfig, ParsedGraph,
};
use cgpa_core::data::{
    encode_and_scale, generate_synthetic, validation_report, write_csv, write_numeric_csv, FactorSchema,
    ScalingPolicy, SemSpec, StudentRecord, TARGET,
};
use cgpa_core::explain::{
    actionable_features, artifact_attribution, feature_domains, global_importance, lime_explain, recommend,
    Attribution, GlobalImportance, ImportanceConfig, ImportanceMethod, ImportanceMetric, LimeConfig,
    LocalExplanation, Recommendation,
};
use cgpa_core::graph::{Dag, PartiallyDirectedGraph, WeightedDag};
use cgpa_core::predictors::{
    bin_cgpa, compare_models, default_suite, read_external_predictions, train_pipeline, Artifact, ModelSpec, Task,
    TrainConfig,
};
use cgpa_core::stats::{correlation_matrix, crosstab, describe};

use crate::run::Run;
use crate::{input, Algo, DiscoverArgs, EvaluateArgs, EvaluateGraphArgs, ExplainArgs, ExplainMethod, GenerateArgs};
use crate::{InspectArgs, ServeArgs, TaskArg, TrainArgs};

fn ok(command: &str, extra: serde_json::Value) -> String {
    let mut v = json!({"status": "ok", "command": command});
    if let (Some(m), serde_json::Value::Object(e)) = (v.as_object_mut(), extra) {
        m.extend(e);
    }
    v.to_string()
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Regression => Task::Regression,
        TaskArg::Classification => Task::Classification,
    }
}

fn parse_task(s: &str) -> Result<Task> {
    match s {
        "regression" | "reg" => Ok(Task::Regression),
        "classification" | "cls" => Ok(Task::Classification),
        _ => bail!("unknown task {s:?}"),
    }
}

pub fn generate(run: &mut Run, a: &GenerateArgs, seed: Option<u64>) -> Result<String> {
    let spec = match &a.spec {
        Some(p) => SemSpec::from_json(&run.read_input_string(p)?).with_context(|| format!("{}", p.display()))?,
        None => SemSpec::fig3_default(),
    };
    let spec = match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    };
    run.set_seed(spec.seed);
    let data = generate_synthetic(&spec, a.n)?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &spec.nodes, &data.records)?;
    run.write("data.csv", &csv)?;
    let mut latent = Vec::new();
    write_numeric_csv(&mut latent, &data.latent)?;
    run.write("latent.csv", &latent)?;
    run.write("graph.json", export_graph(AnyGraph::Weighted(&data.truth), GraphFormat::Json).as_bytes())?;
    run.write("graph.dot", export_graph(AnyGraph::Weighted(&data.truth), GraphFormat::Dot).as_bytes())?;
    run.write_json("spec.json", &spec)?;
    Ok(ok("generate", json!({"rows": a.n, "seed": spec.seed, "edges": data.truth.dag().n_edges()})))
}

#[derive(Serialize)]
struct InspectReport {
    n_rows: usize,
    factors: Vec<cgpa_core::data::FactorSummary>,
    describe: Vec<cgpa_core::stats::ColumnSummary>,
    correlation: CorrelationTable,
    crosstabs: Vec<cgpa_core::stats::CrosstabReport>,
}

#[derive(Serialize)]
struct CorrelationTable {
    columns: Vec<String>,
    /// Row-major; `null` where a column is constant.
    values: Vec<Vec<Option<f64>>>,
}

pub fn inspect(run: &mut Run, a: &InspectArgs) -> Result<String> {
    let schema = FactorSchema::builtin();
    let records = input::records(run, &a.data, &schema)?;
    let ds = encode_and_scale(&records, &schema, &ScalingPolicy::uniform(cgpa_core::data::ScalingMethod::None))?;
    let factors = validation_report(&records, &schema);
    let summary = describe(&ds)?;
    let corr = correlation_matrix(&ds)?;
    let mut crosstabs = Vec::new();
    for spec in &a.crosstabs {
        let (r, c) = spec
            .split_once(':')
            .ok_or_else(|| anyhow!("crosstab {spec:?} is not ROW:COL"))?;
        crosstabs.push(crosstab(&ds, r.trim(), c.trim()).with_context(|| format!("crosstab {spec}"))?);
    }

    let mut text = String::from("Factor summary\n");
    let mut rows = vec![["factor", "non_null", "unique", "mode", "mean", "sd", "min", "max"].map(String::from).to_vec()];
    for (f, d) in factors.iter().zip(&summary) {
        rows.push(vec![
            f.acronym.clone(),
            f.non_null.to_string(),
            f.unique.to_string(),
            f.mode.clone(),
            format!("{:.3}", d.mean),
            format!("{:.3}", d.sd),
            format!("{:.3}", d.min),
            format!("{:.3}", d.max),
        ]);
    }
    text.push_str(&cgpa_core::report::align(&rows));
    for ct in &crosstabs {
        text.push('\n');
        text.push_str(&ct.to_text());
    }
    let report = InspectReport {
        n_rows: records.len(),
        factors,
        describe: summary,
        correlation: CorrelationTable {
            columns: ds.column_names(),
            values: corr
                .row_iter()
                .map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect())
                .collect(),
        },
        crosstabs,
    };
    run.write_json("metrics.json", &report)?;
    run.write("report.txt", text.as_bytes())?;
    Ok(ok("inspect", json!({"rows": report.n_rows})))
}

fn truth_dag(parsed: ParsedGraph) -> Result<(Dag, Option<WeightedDag>)> {
    match parsed {
        ParsedGraph::Dag(d) => Ok((d, None)),
        ParsedGraph::Weighted(w) => Ok((w.dag().clone(), Some(w))),
        ParsedGraph::Pdag(_) => bail!("expected a DAG, got a graph with undirected edges"),
    }
}

#[derive(Serialize)]
struct WeightRecovery {
    /// True edges with |weight| >= this enter the counts.
    min_abs_weight: f64,
    tolerance: f64,
    strong_edges: usize,
    direction_recovered: usize,
    weight_within_tolerance: usize,
}

#[derive(Serialize)]
struct DiscoverReport {
    algo: Algo,
    n_rows: usize,
    n_vars: usize,
    n_edges: usize,
    runtime_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<GraphComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_recovery: Option<WeightRecovery>,
}

pub fn discover(run: &mut Run, a: &DiscoverArgs, seed: u64) -> Result<String> {
    let schema = FactorSchema::builtin();
    let ds = input::dataset(run, &a.data, &schema, &a.columns)?;
    let t0 = Instant::now();
    enum Found {
        Pdag(PartiallyDirectedGraph),
        Dag(Dag),
        Weighted(WeightedDag),
    }
    let found = match a.algo {
        Algo::Pc => Found::Pdag(pc_discover(&ds, a.alpha, a.max_cond)?),
        Algo::Ges => Found::Dag(ges_discover(&ds)?),
        Algo::Grasp => Found::Dag(grasp_discover(&ds, a.lambda)?),
        Algo::Lingam => Found::Weighted(ica_lingam_with(
            &ds,
            &LingamConfig {
                prune_threshold: a.prune,
                seed,
                ..LingamConfig::default()
            },
        )?),
    };
    let runtime_secs = t0.elapsed().as_secs_f64();
    let (graph, pdag) = match &found {
        Found::Pdag(g) => (AnyGraph::Pdag(g), g.clone()),
        Found::Dag(d) => (AnyGraph::Dag(d), PartiallyDirectedGraph::from_dag(d)),
        Found::Weighted(w) => (AnyGraph::Weighted(w), PartiallyDirectedGraph::from_dag(w.dag())),
    };

    let mut comparison = None;
    let mut weight_recovery = None;
    if let Some(p) = &a.truth {
        let (truth, weighted) = truth_dag(parse_graph_json(&run.read_input_string(p)?)?)?;
        comparison = Some(graph_compare(&pdag, &truth)?);
        if let (Found::Weighted(est), Some(tw)) = (&found, weighted) {
            let (min_abs_weight, tolerance) = (0.3, 0.15);
            let mut wr = WeightRecovery {
                min_abs_weight,
                tolerance,
                strong_edges: 0,
                direction_recovered: 0,
                weight_within_tolerance: 0,
            };
            for (f, t, w) in tw.weighted_edges() {
                if w.abs() < min_abs_weight {
                    continue;
                }
                wr.strong_edges += 1;
                let (fi, ti) = (est.dag().index(&tw.nodes()[f])?, est.dag().index(&tw.nodes()[t])?);
                let e = est.weight(fi, ti);
                if e != 0.0 {
                    wr.direction_recovered += 1;
                    if (e - w).abs() <= tolerance {
                        wr.weight_within_tolerance += 1;
                    }
                }
            }
            weight_recovery = Some(wr);
        }
    }
    let report = DiscoverReport {
        algo: a.algo,
        n_rows: ds.n_rows(),
        n_vars: ds.n_cols(),
        n_edges: pdag.n_edges(),
        runtime_secs,
        comparison,
        weight_recovery,
    };
    run.write("graph.json", export_graph(graph, GraphFormat::Json).as_bytes())?;
    run.write("graph.dot", export_graph(graph, GraphFormat::Dot).as_bytes())?;
    run.write_json("metrics.json", &report)?;
    let f1 = report.comparison.as_ref().map(|c| c.skeleton_f1);
    Ok(ok("discover", json!({"edges": report.n_edges, "skeleton_f1": f1})))
}

pub fn evaluate_graph(run: &mut Run, a: &EvaluateGraphArgs, seed: u64) -> Result<String> {
    let schema = FactorSchema::builtin();
    let (dag, _) = truth_dag(parse_graph_json(&run.read_input_string(&a.graph)?)?)?;
    let ds = input::dataset(run, &a.data, &schema, &[])?;
    let report = evaluate_hypothesis_graph(&dag, &ds, a.alpha, a.permutations, seed)?;
    run.write_json("metrics.json", &report)?;
    Ok(ok(
        "evaluate-graph",
        json!({
            "markov_violation_fraction": report.markov_violation_fraction,
            "markov_p": report.markov_p,
            "triangle_violation_fraction": report.triangle_violation_fraction,
            "triangle_p": report.triangle_p,
        }),
    ))
}

pub fn train(run: &mut Run, a: &TrainArgs, seed: u64) -> Result<String> {
    let schema = FactorSchema::builtin();
    let records = input::records(run, &a.data, &schema)?;
    let spec = ModelSpec::from_name(&a.model, a.task.map(task_of))?;
    let cfg = TrainConfig {
        test_fraction: a.test_fraction,
        cv_folds: a.cv_folds,
        ..TrainConfig::new(spec, seed)
    };
    let artifact = train_pipeline(&records, &schema, &cfg)?;
    let path = run.path("model.json");
    let text = artifact.to_json();
    run.write("model.json", text.as_bytes())?;
    run.write_json("metrics.json", &artifact.training_metadata.metrics)?;
    Ok(ok("train", json!({"model": spec.label(), "artifact": path, "sha256": cgpa_core::predictors::sha256_hex(text.as_bytes())})))
}

fn parse_suite(models: &[String]) -> Result<Vec<ModelSpec>> {
    if models.is_empty() {
        return Ok(default_suite());
    }
    models
        .iter()
        .map(|m| {
            let (name, task) = match m.split_once(':') {
                Some((n, t)) => (n, Some(parse_task(t)?)),
                None => (m.as_str(), None),
            };
            Ok(ModelSpec::from_name(name.trim(), task)?)
        })
        .collect()
}

pub fn evaluate(run: &mut Run, a: &EvaluateArgs, seed: u64) -> Result<String> {
    let schema = FactorSchema::builtin();
    let records = input::records(run, &a.data, &schema)?;
    let suite = parse_suite(&a.models)?;
    let mut externals = Vec::new();
    for e in &a.externals {
        let mut parts = e.splitn(3, ':');
        let (Some(name), Some(task), Some(file)) = (parts.next(), parts.next(), parts.next()) else {
            bail!("external {e:?} is not NAME:TASK:FILE");
        };
        let bytes = run.read_input(std::path::Path::new(file))?;
        externals.push(read_external_predictions(bytes.as_slice(), name, parse_task(task)?)?);
    }
    let base = TrainConfig {
        test_fraction: a.test_fraction,
        cv_folds: a.cv_folds,
        ..TrainConfig::new(suite[0], seed)
    };
    let (report, artifacts) = compare_models(&records, &schema, &suite, &base, &externals)?;
    for art in &artifacts {
        run.write(&format!("models/{}.json", art.model_kind.label()), art.to_json().as_bytes())?;
    }
    run.write_json("metrics.json", &report)?;
    run.write("report.txt", report.to_text().as_bytes())?;
    Ok(ok("evaluate", json!({"regression_models": report.regression.len(), "classification_models": report.classification.len()})))
}

#[derive(Serialize)]
struct Explanation {
    model: String,
    task: Task,
    input: StudentRecord,
    /// Model output: CGPA/4 for regression, band index for classification.
    prediction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_cgpa: Option<f64>,
    band: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiency_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attribution: Option<Attribution>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    recommendations: Vec<Recommendation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lime: Option<LocalExplanation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    global_importance: Vec<GlobalImportance>,
}

fn encode_rows(artifact: &Artifact, schema: &FactorSchema, records: &[StudentRecord]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = artifact.feature_names.len();
    let mut x = DMatrix::zeros(records.len(), p);
    let mut y = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let enc = artifact.encode(schema, r).with_context(|| format!("row {i}"))?;
        for (j, v) in enc.scaled.iter().enumerate() {
            x[(i, j)] = *v;
        }
        let cgpa = r
            .get(TARGET)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| anyhow!("row {i}: global importance needs {TARGET}"))?;
        y.push(match artifact.task() {
            Task::Regression => artifact.target_scaling.apply(cgpa),
            Task::Classification => bin_cgpa(cgpa)?.index() as f64,
        });
    }
    Ok((x, y))
}

pub fn explain(run: &mut Run, a: &ExplainArgs, seed: u64) -> Result<String> {
    let schema = FactorSchema::builtin();
    let artifact = Artifact::from_json(&run.read_input_string(&a.model)?)?;
    let data = match &a.data {
        Some(p) => Some(input::records(run, p, &schema)?),
        None => None,
    };
    let mut rec = match (&a.record, a.row, &data) {
        (Some(p), _, _) => input::record_json(run, p)?,
        (None, Some(i), Some(d)) => d.get(i).cloned().ok_or_else(|| anyhow!("row {i} out of range ({} rows)", d.len()))?,
        _ => bail!("give --record or --data with --row"),
    };
    rec.values.retain(|k, _| k != TARGET && schema.get(k).is_some());
    let enc = artifact.encode(&schema, &rec)?;
    let x = enc.scaled;
    let f = |z: &[f64]| artifact.predict_scaled(z);
    let prediction = f(&x);
    let task = artifact.task();
    let (predicted_cgpa, band) = match task {
        Task::Regression => {
            let c = artifact.cgpa_from_output(prediction);
            (Some(c), bin_cgpa(c)?.label().to_string())
        }
        Task::Classification => (
            None,
            artifact.cgpa_bands.get(prediction as usize).map(|b| b.label.clone()).unwrap_or_default(),
        ),
    };
    let want = |m: ExplainMethod| a.method == m || a.method == ExplainMethod::All;
    let domains = feature_domains(&artifact, &schema)?;

    let mut attribution = None;
    let mut recommendations = Vec::new();
    if want(ExplainMethod::Shapley) {
        let raw = artifact.feature_names.iter().map(|n| rec.get(n).cloned().expect("encoded"));
        let attr = artifact_attribution(&artifact, &x, a.samples, seed)?.with_raw_values(raw);
        if task == Task::Regression {
            recommendations = recommend(&attr, &f, &x, &domains, &actionable_features(&schema), a.recommendations);
        }
        attribution = Some(attr);
    }
    let lime = if want(ExplainMethod::Lime) {
        let cfg = LimeConfig {
            n_perturbations: a.perturbations,
            seed,
            ..LimeConfig::default()
        };
        Some(lime_explain(&f, &x, &domains, &cfg)?)
    } else {
        None
    };
    let mut global = Vec::new();
    if want(ExplainMethod::Global) {
        let Some(records) = &data else {
            bail!("global importance needs --data");
        };
        let (xs, ys) = encode_rows(&artifact, &schema, records)?;
        let metric = match task {
            Task::Regression => ImportanceMetric::Mse,
            Task::Classification => ImportanceMetric::Accuracy,
        };
        for method in [ImportanceMethod::Permutation, ImportanceMethod::TreeSurrogate] {
            let cfg = ImportanceConfig {
                method,
                metric,
                seed,
                ..ImportanceConfig::default()
            };
            global.push(global_importance(&f, &xs, &ys, &artifact.feature_names, &cfg)?);
        }
    }
    let out = Explanation {
        model: artifact.model_kind.label(),
        task,
        input: rec,
        prediction,
        predicted_cgpa,
        band,
        efficiency_gap: attribution.as_ref().map(|a| a.efficiency_gap()),
        attribution,
        recommendations,
        lime,
        global_importance: global,
    };
    run.write_json("explanation.json", &out)?;
    Ok(ok("explain", json!({"prediction": out.prediction, "band": out.band})))
}

pub fn serve(run: &mut Run, a: &ServeArgs) -> Result<String> {
    let config = cgpa_service::ServiceConfig::load(a.config.as_deref())?;
    if let Some(p) = &a.config {
        run.read_input(p)?;
    }
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stdout)
        .init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(cgpa_service::serve(config))?;
    Ok(ok("serve", json!({})))
}
