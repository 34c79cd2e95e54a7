use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use steerlab_core::corpus::{
    build_polar_pairs, build_topic_pairs, load_pairs, load_topic_representations, save_pairs, TopicKind,
    TopicRepresentation,
};
use steerlab_core::experiment::{
    aggregate_report, emit_plot_series, execute, read_results, write_report, ExecuteOptions, Mode, RunConfig,
    RunInputs, Scorers, MANIFEST_FILE,
};
use steerlab_core::model::GenerationConfig;
use steerlab_core::newts::{
    convert_newts_csv, load_newts, load_topic_model, sample_articles, save_newts, NewtsRecord, Split,
    TopicModelArtifacts,
};
use steerlab_core::prompt::{render, PromptRequest, PromptVariant};
use steerlab_core::scorers::Lexicon;
use steerlab_core::steering::{extract_steering_vector, load_vector, make_intervention, save_vector, SteeringSpec};
use steerlab_core::{Behavior, BehaviorKind};

use crate::resolve::{load_model, parse, require_dir, require_file, usage};
use crate::{Cli, Command, ConvertCommand, EvaluateArgs, ExtractArgs, ReportArgs, SummarizeArgs, SweepArgs};

pub fn run(cli: Cli) -> Result<()> {
    let (seed, workers) = (cli.seed, cli.workers.max(1));
    match cli.command {
        Command::Extract(a) => extract(a, workers),
        Command::Summarize(a) => summarize(a, seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a, seed, workers),
        Command::Report(a) => report(a),
        Command::Convert(c) => convert(c, seed),
    }
}

fn extract(a: ExtractArgs, workers: usize) -> Result<()> {
    require_file(&a.pairs, "pair file")?;
    let dataset = load_pairs(&a.pairs)?;
    if let Some(b) = &a.behavior {
        let expected: Behavior = parse(b)?;
        if expected != dataset.behavior {
            return Err(usage(format!(
                "--behavior {expected} does not match the pair file, which holds {} pairs",
                dataset.behavior
            )));
        }
    }
    let model = load_model(&a.model)?;
    let layer = a.layer.unwrap_or(model.descriptor().default_steering_layer);
    let vector = extract_steering_vector(model.as_ref(), &dataset, layer, workers)?;
    save_vector(&vector, &a.out)?;
    println!(
        "behavior={} layer={} norm={:.6} num_pairs={} out={}",
        vector.behavior,
        vector.layer,
        vector.l2_norm,
        vector.num_pairs,
        a.out.display()
    );
    Ok(())
}

fn summarize(a: SummarizeArgs, seed: u64) -> Result<()> {
    require_file(&a.article_file, "article file")?;
    let article = fs::read_to_string(&a.article_file)
        .with_context(|| format!("reading {}", a.article_file.display()))?;
    let variant: PromptVariant = parse(&a.prompt_variant)?;
    let request = match &a.prompt_behavior {
        None if variant != PromptVariant::Neutral => {
            return Err(usage("--prompt-variant needs --prompt-behavior"));
        }
        None => PromptRequest::neutral(),
        Some(b) => {
            let kind: BehaviorKind = parse(b)?;
            if kind == BehaviorKind::Topic && a.topic_description.is_none() {
                return Err(usage("topic prompts need --topic-description"));
            }
            PromptRequest {
                behavior: Some(kind),
                variant,
                topic_description: a.topic_description.clone(),
            }
        }
    };
    if !a.strength.is_finite() {
        return Err(usage("--strength must be finite"));
    }
    let model = load_model(&a.generation.model)?;
    let mut interventions = Vec::new();
    if let Some(path) = &a.vector {
        require_file(path, "vector file")?;
        let vector = load_vector(path)?;
        vector.check_compatible(model.descriptor())?;
        if a.strength != 0.0 {
            let spec = SteeringSpec::new(vector, a.strength).with_policy(a.generation.policy()?);
            interventions.push(make_intervention(&spec, model.descriptor())?);
        }
    } else if a.strength != 0.0 {
        return Err(usage("a non-zero --strength needs --vector"));
    }
    let prompt = render(&request, &article)?;
    let config = GenerationConfig {
        max_new_tokens: a.generation.max_tokens,
        decode: a.generation.decode(seed)?,
        stop_at_eos: true,
    };
    let tokens = model.tokenize(&prompt.text);
    let g = model.generate(&tokens, &config, &interventions)?;
    if a.score {
        let scoring = a.scoring.to_config()?;
        let scorers = Scorers::new(&scoring, Some(model.as_ref()), None, Lexicon::builtin())?;
        let scored = scorers.score(&g.text, None);
        let record = json!({
            "summary": g.text,
            "tokens": g.tokens.len(),
            "strength": a.strength,
            "variant": variant,
            "metrics": scored.metrics,
            "flags": scored.flags,
        });
        println!("{record}");
    } else {
        println!("{}", g.text);
    }
    Ok(())
}

fn read_summaries(path: &Path) -> Result<Vec<(usize, Option<String>, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if v.get("format").is_some() {
            continue;
        }
        let Some(summary) = v.get("summary").and_then(Value::as_str) else {
            if v.get("error").is_some() {
                continue;
            }
            return Err(usage(format!("{}:{}: missing `summary` field", path.display(), i + 1)));
        };
        let id = v.get("article_id").and_then(Value::as_str).map(str::to_string);
        out.push((i + 1, id, summary.to_string()));
    }
    if out.is_empty() {
        return Err(usage(format!("{} holds no summaries", path.display())));
    }
    Ok(out)
}

fn load_artifacts(dir: Option<&PathBuf>) -> Result<Option<TopicModelArtifacts>> {
    match dir {
        None => Ok(None),
        Some(d) => {
            require_dir(d, "topic-model directory")?;
            Ok(Some(load_topic_model(d)?))
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    require_file(&a.summaries, "summaries file")?;
    let scoring = a.scoring.to_config()?;
    let explicit = a.scoring.metrics.trim() != "all";
    use steerlab_core::experiment::MetricGroup as G;
    for g in [G::Rouge, G::Similarity, G::Topic] {
        if explicit && scoring.groups.contains(&g) && a.newts.is_none() {
            return Err(usage(format!("metric {g} needs reference records (--newts)")));
        }
    }
    if explicit && scoring.groups.contains(&G::Topic) && a.lda.is_none() {
        return Err(usage("metric topic needs topic-model artifacts (--lda)"));
    }
    let artifacts = load_artifacts(a.lda.as_ref())?;
    let records: HashMap<String, NewtsRecord> = match &a.newts {
        None => HashMap::new(),
        Some(p) => {
            require_file(p, "record file")?;
            let k = artifacts.as_ref().map(TopicModelArtifacts::num_topics);
            load_newts(p, Split::Test, k, false)?
                .into_iter()
                .map(|r| (r.article_id.clone(), r))
                .collect()
        }
    };
    let summaries = read_summaries(&a.summaries)?;
    let model = if scoring.groups.contains(&G::Perplexity) {
        Some(load_model(&a.model)?)
    } else {
        None
    };
    let scorers = Scorers::new(&scoring, model.as_deref(), artifacts.as_ref(), Lexicon::builtin())?;

    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (line, id, summary) in &summaries {
        let record = match id {
            Some(id) if !records.is_empty() => Some(records.get(id).ok_or_else(|| {
                usage(format!("{}:{line}: article `{id}` is not in the record file", a.summaries.display()))
            })?),
            None if !records.is_empty() => {
                return Err(usage(format!(
                    "{}:{line}: reference metrics need an `article_id`",
                    a.summaries.display()
                )))
            }
            _ => None,
        };
        let scored = scorers.score(summary, record);
        for (k, v) in &scored.metrics {
            if let Some(v) = v {
                columns.entry(k.clone()).or_default().push(*v);
            }
        }
        let rec = json!({"line": line, "article_id": id, "metrics": scored.metrics, "flags": scored.flags});
        writeln!(sink, "{rec}")?;
    }
    sink.flush()?;
    drop(sink);
    println!("metric\tn\tmean ± std");
    for (k, vals) in &columns {
        let (m, s) = mean_std(vals);
        println!("{k}\t{}\t{m:.4} ± {s:.4}", vals.len());
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad strength `{}` in --grid", x.trim())))
        })
        .collect()
}

fn sweep(a: SweepArgs, seed: u64, workers: usize) -> Result<()> {
    let behavior: Behavior = parse(&a.behavior)?;
    let split: Split = parse(&a.split)?;
    let modes = a
        .modes
        .split(',')
        .map(|m| parse::<Mode>(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    require_file(&a.newts, "record file")?;
    let artifacts = load_artifacts(a.lda.as_ref())?;
    if behavior.kind() == BehaviorKind::Topic && artifacts.is_none() {
        return Err(usage("topic sweeps need topic-model artifacts (--lda)"));
    }
    let mut vectors = Vec::new();
    for p in &a.vector {
        require_file(p, "vector file")?;
        vectors.push(load_vector(p)?);
    }
    let model = load_model(&a.generation.model)?;
    let perplexity_model = a.perplexity_model.as_deref().map(load_model).transpose()?;
    let layer = a
        .layer
        .or_else(|| vectors.first().map(|v| v.layer))
        .unwrap_or(model.descriptor().default_steering_layer);

    let mut config = RunConfig::new(&model.descriptor().model_id, layer, behavior);
    config.vector_paths = a.vector.iter().map(|p| p.display().to_string()).collect();
    if let Some(g) = &a.grid {
        config.grid = parse_grid(g)?;
    }
    if a.extremes {
        config = config.with_extremes();
    }
    config.modes = modes;
    config.n_articles = a.articles;
    config.seed = seed;
    config.max_new_tokens = a.generation.max_tokens;
    config.decode = a.generation.decode(seed)?;
    config.policy = a.generation.policy()?;
    config.scoring = a.scoring.to_config()?;
    config.validate()?;

    let k = artifacts.as_ref().map(TopicModelArtifacts::num_topics);
    let records = load_newts(&a.newts, split, k, a.full_split)?;
    let sample = sample_articles(&records, a.articles, seed, split)?;
    let inputs = RunInputs {
        model: model.as_ref(),
        perplexity_model: perplexity_model.as_deref(),
        vectors,
        sample: &sample,
        artifacts: artifacts.as_ref(),
        lexicon: Lexicon::builtin(),
    };
    let mut options = ExecuteOptions::new(&a.out);
    options.workers = workers;
    options.resume = !a.no_resume;
    let summary = execute(&config, &inputs, &options)?;
    println!(
        "rows={} errors={} complete={} results={}",
        summary.rows_in_file,
        summary.error_rows,
        summary.complete,
        summary.results_path.display()
    );
    Ok(())
}

fn manifest_behavior(results: &Path) -> Option<String> {
    let dir = if results.is_dir() { results } else { results.parent()? };
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.pointer("/config/behavior")?.as_str().map(str::to_string)
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = read_results(&a.results)?;
    let label = a
        .behavior
        .clone()
        .or_else(|| manifest_behavior(&a.results))
        .unwrap_or_else(|| "unknown".into());
    let property = match &a.property {
        Some(p) => Some(parse::<BehaviorKind>(p)?),
        None => label.parse::<Behavior>().ok().map(Behavior::kind),
    };
    let out = match &a.out {
        Some(o) => o.clone(),
        None if a.results.is_dir() => a.results.clone(),
        None => a.results.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let table = aggregate_report(&rows, &label)?;
    let (long, wide) = write_report(&table, &out)?;
    let series = emit_plot_series(&rows, property, &out)?;
    print!("{}", table.to_wide_tsv());
    eprintln!(
        "wrote {}, {} and {} plot series",
        long.display(),
        wide.display(),
        series.len()
    );
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    require_file(path, "text pool")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .collect())
}

fn convert(c: ConvertCommand, seed: u64) -> Result<()> {
    match c {
        ConvertCommand::NewtsCsv { input, out } => {
            require_file(&input, "CSV file")?;
            let records = convert_newts_csv(&input)?;
            save_newts(&records, &out)?;
            println!("records={} out={}", records.len(), out.display());
        }
        ConvertCommand::TopicPairs {
            tid,
            representations,
            lda,
            kind,
            n,
            out,
        } => {
            let kind: TopicKind = parse(&kind)?;
            let reps: Vec<TopicRepresentation> = match (representations, lda) {
                (Some(p), None) => {
                    require_file(&p, "representation file")?;
                    load_topic_representations(&p)?
                        .into_iter()
                        .filter(|r| r.kind == kind)
                        .collect()
                }
                (None, Some(d)) => {
                    if kind != TopicKind::Words {
                        return Err(usage("LDA artifacts only provide the words representation"));
                    }
                    require_dir(&d, "topic-model directory")?;
                    let artifacts = load_topic_model(&d)?;
                    (0..artifacts.num_topics() as u32)
                        .map(|t| TopicRepresentation::words_from_artifacts(&artifacts, t, 20))
                        .collect::<steerlab_core::Result<_>>()?
                }
                _ => return Err(usage("give exactly one of --representations or --lda")),
            };
            let (target, pool): (Vec<_>, Vec<_>) = reps.into_iter().partition(|r| r.tid == tid);
            let target = target
                .into_iter()
                .next()
                .ok_or_else(|| usage(format!("topic {tid} has no {kind} representation")))?;
            let dataset = build_topic_pairs(&target, &pool, n, seed)?;
            save_pairs(&dataset, &out)?;
            println!("pairs={} out={}", dataset.pairs.len(), out.display());
        }
        ConvertCommand::PolarPairs {
            behavior,
            positive,
            negative,
            n,
            out,
        } => {
            let behavior: Behavior = parse(&behavior)?;
            let dataset = build_polar_pairs(behavior, &read_lines(&positive)?, &read_lines(&negative)?, n, seed)?;
            save_pairs(&dataset, &out)?;
            println!("pairs={} out={}", dataset.pairs.len(), out.display());
            if dataset.provenance.contains("warning") {
                eprintln!("{}", dataset.provenance);
            }
        }
    }
    Ok(())
}
