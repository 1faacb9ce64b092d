use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use kgwalk::config::{load_config, ConfigError, RunConfig};
use kgwalk::corpus::{corpus_stats_in_graph, load_questions, read_question_records, split_records};
use kgwalk::evalkit::{
    aggregate_report, aggregate_retrieval, answer_metrics, retrieval_metrics, retrieve_khop,
    upper_bounds,
};
use kgwalk::kgstore::{load_triples_tsv, GraphOptions};
use kgwalk::miner::{
    build_step_records, mine_gold_paths, mine_question, read_sft_lines, SftHeader, SftLine,
    SFT_FORMAT_VERSION,
};
use kgwalk::policy::{
    render_request, ExternalPolicy, ExternalPolicyConfig, NullPolicy, OraclePolicy, Policy,
    PolicyRequest, PolicySpec, RandomPolicy, StepAction,
};
use kgwalk::rewards::{score_trace, GoldIndex, RewardConfig};
use kgwalk::runtime::{
    run_episode, trace_lines, EpisodeConfig, PredictionLine, Termination, TraceLine,
};
use kgwalk::{build_graph, EntityId, KnowledgeGraph, QuestionInstance};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::ordered::ordered_map;
use crate::{
    BuildKgArgs, Cli, Command, EvalArgs, ExploreArgs, ExportSftArgs, MineArgs, Overrides,
    ScoreArgs, SplitArgs, UsageError,
};

pub fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(UsageError("--jobs must be >= 1".into()).into());
    }
    match &cli.command {
        Command::BuildKg(a) => build_kg(cli, a),
        Command::Mine(a) => mine(cli, a),
        Command::ExportSft(a) => export_sft(a),
        Command::Explore(a) => explore(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Split(a) => split(cli, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn resolve(cli: &Cli, o: &Overrides) -> Result<RunConfig> {
    load_config(cli.config.as_deref(), &o.0).map_err(|e| match e {
        ConfigError::Io { .. } => anyhow::Error::new(e),
        other => usage(other.to_string()),
    })
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| usage(format!("missing --{flag} (or {key} in the config file)")))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn load_graph(cli: &Cli, cfg: &RunConfig) -> Result<(KnowledgeGraph, usize)> {
    let path = required(&cfg.kg_path, "kg", "kg_path")?;
    let started = Instant::now();
    let raw = load_triples_tsv(path)?;
    let opts = GraphOptions {
        augment: !cli.no_augment,
        ..Default::default()
    };
    let g = build_graph(&raw, &opts)?;
    log::info!(
        "graph path={} triples={} entities={} relations={} edges={} ms={:.1}",
        path.display(),
        raw.len(),
        g.entity_count(),
        g.relation_count(),
        g.edge_count(),
        ms(started.elapsed())
    );
    Ok((g, raw.len()))
}

fn load_qs(cli: &Cli, cfg: &RunConfig, g: &KnowledgeGraph) -> Result<(Vec<QuestionInstance>, usize)> {
    let path = required(&cfg.questions_path, "questions", "questions_path")?;
    let (qs, report) = load_questions(path, g, cli.strict_seeds)?;
    log::info!(
        "questions path={} loaded={} dropped_unresolved={}",
        path.display(),
        qs.len(),
        report.dropped_unresolved
    );
    Ok((qs, report.dropped_unresolved))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_line<W: Write + ?Sized, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn build_kg(cli: &Cli, a: &BuildKgArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("kg_path", &a.kg)
        .path("questions_path", &a.questions)
        .path("output_path", &a.out)
        .set("l_max", a.lmax);
    let cfg = resolve(cli, &o)?;
    let (g, n_raw) = load_graph(cli, &cfg)?;
    let mut stats = json!({
        "triples": n_raw,
        "entities": g.entity_count(),
        "relations": g.relation_count(),
        "edges": g.edge_count(),
        "augmented": g.is_augmented(),
        "inverse_suffix": g.inverse_suffix(),
    });
    if cfg.questions_path.is_some() {
        let (qs, dropped) = load_qs(cli, &cfg, &g)?;
        let cs = corpus_stats_in_graph(&qs, &g, cfg.l_max);
        stats["questions"] = json!({
            "n": cs.n_questions,
            "avg_answers": cs.avg_answers,
            "max_hops_observed": cs.max_hops_observed,
            "hop_search_limit": cfg.l_max,
            "dropped_unresolved": dropped,
        });
    }
    let mut w = output(cfg.output_path.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &stats)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn mine(cli: &Cli, a: &MineArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("kg_path", &a.kg)
        .path("questions_path", &a.questions)
        .path("output_path", &a.out)
        .set("l_max", a.lmax)
        .set("neighbor_cap", a.neighbor_cap);
    let cfg = resolve(cli, &o)?;
    let out = required(&cfg.output_path, "out", "output_path")?;
    let (g, _) = load_graph(cli, &cfg)?;
    let (qs, _) = load_qs(cli, &cfg, &g)?;

    let header = SftHeader {
        format_version: SFT_FORMAT_VERSION,
        l_max: cfg.l_max,
        neighbor_cap: Some(cfg.neighbor_cap),
    };
    let mut w = create(out)?;
    write_line(&mut w, &header)?;
    let (mut n_records, mut no_gold) = (0usize, 0usize);
    let started = Instant::now();
    ordered_map(
        &qs,
        cli.jobs,
        |q| {
            let t = Instant::now();
            let res = mine_gold_paths(&g, q, cfg.l_max).and_then(|gold| {
                let recs = build_step_records(&g, q, &gold, cfg.l_max, Some(cfg.neighbor_cap))?;
                Ok((gold.len(), recs))
            });
            (q.qid.clone(), t.elapsed(), res)
        },
        |(qid, dt, res)| {
            let (n_gold, recs) = res.with_context(|| format!("mining {qid}"))?;
            log::info!(
                "mine qid={} ms={:.1} gold_paths={} records={}",
                qid,
                ms(dt),
                n_gold,
                recs.len()
            );
            if n_gold == 0 {
                no_gold += 1;
            }
            n_records += recs.len();
            for r in &recs {
                write_line(&mut w, &SftLine::from_record(&g, r))?;
            }
            Ok(())
        },
    )?;
    w.flush()?;
    log::info!(
        "mined questions={} records={} without_gold={} out={} ms={:.1}",
        qs.len(),
        n_records,
        no_gold,
        out.display(),
        ms(started.elapsed())
    );
    Ok(())
}

#[derive(Serialize)]
struct PromptLine<'a> {
    qid: &'a str,
    depth: usize,
    prompt: String,
    completion: String,
}

fn export_sft(a: &ExportSftArgs) -> Result<()> {
    let (header, lines) = read_sft_lines(&a.gold)?;
    let mut w = output(a.out.as_deref())?;
    for l in &lines {
        let req = PolicyRequest {
            qid: l.qid.clone(),
            question: l.state.question.clone(),
            depth: l.depth,
            current_paths: Arc::new(l.state.current_paths.clone()),
            neighbors: l
                .state
                .frontier_neighbors
                .iter()
                .flat_map(|n| n.edges.iter().cloned())
                .collect(),
        };
        let completion = StepAction {
            answers: l.gold_action.answers.clone(),
            new_paths: l.gold_action.exploration_paths.clone(),
            stop: false,
        };
        write_line(
            &mut w,
            &PromptLine {
                qid: &l.qid,
                depth: l.depth,
                prompt: render_request(&req),
                completion: completion.to_json(),
            },
        )?;
    }
    w.flush()?;
    log::info!(
        "exported records={} l_max={} from={}",
        lines.len(),
        header.l_max,
        a.gold.display()
    );
    Ok(())
}

type Episodes = Vec<(PredictionLine, Vec<TraceLine>)>;

fn explore(cli: &Cli, a: &ExploreArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("kg_path", &a.kg)
        .path("questions_path", &a.questions)
        .path("output_path", &a.out)
        .set("policy", a.policy.as_ref())
        .set("l_max", a.lmax)
        .set("neighbor_cap", a.neighbor_cap)
        .set("d_max", a.dmax)
        .set("batch_budget", a.batch_budget)
        .set("mode", a.mode.as_ref())
        .set("split_seed", a.seed);
    let cfg = resolve(cli, &o)?;
    let spec: PolicySpec = cfg.policy_spec.parse().map_err(|e: kgwalk::policy::PolicyError| usage(e.to_string()))?;
    if a.samples == 0 {
        return Err(usage("--samples must be >= 1"));
    }
    if !(a.policy_timeout.is_finite() && a.policy_timeout > 0.0) {
        return Err(usage("--policy-timeout must be positive"));
    }
    let pred_out = required(&cfg.output_path, "out", "output_path")?;
    let ep = EpisodeConfig {
        d_max: cfg.d_max,
        batch_budget: cfg.batch_budget,
        mode: cfg.mode,
        forbid_revisit: a.forbid_revisit,
        fanout_cap: (a.fanout_cap > 0).then_some(a.fanout_cap),
        ..Default::default()
    };
    ep.validate().map_err(|e| usage(e.to_string()))?;
    let (g, _) = load_graph(cli, &cfg)?;
    let (qs, _) = load_qs(cli, &cfg, &g)?;

    let shared: Option<Box<dyn Policy>> = match &spec {
        PolicySpec::Oracle => match &a.gold {
            Some(path) => {
                let (header, lines) = read_sft_lines(path)?;
                log::info!("oracle gold={} records={} l_max={}", path.display(), lines.len(), header.l_max);
                let mut oracle = OraclePolicy::from_lines(&lines);
                oracle.register_qids(qs.iter().map(|q| q.qid.clone()));
                Some(Box::new(oracle))
            }
            None => None,
        },
        PolicySpec::Null => Some(Box::new(NullPolicy)),
        PolicySpec::Random { .. } => None,
        PolicySpec::External { url } => Some(Box::new(ExternalPolicy::new(ExternalPolicyConfig {
            timeout: Duration::from_secs_f64(a.policy_timeout),
            retries: a.policy_retries,
            ..ExternalPolicyConfig::new(url.clone())
        }))),
    };

    let mut preds = create(pred_out)?;
    let mut traces = a.trace_out.as_deref().map(create).transpose()?;
    let mut aborted = 0usize;
    let started = Instant::now();
    ordered_map(
        &qs,
        cli.jobs,
        |q| -> Result<(Episodes, Duration)> {
            let t = Instant::now();
            let local: Option<OraclePolicy> = match (&shared, &spec) {
                (None, PolicySpec::Oracle) => {
                    let recs = mine_question(&g, q, cfg.l_max, Some(cfg.neighbor_cap))?;
                    let mut oracle = OraclePolicy::from_records(&g, &recs);
                    oracle.register_qids([q.qid.clone()]);
                    Some(oracle)
                }
                _ => None,
            };
            let mut out = Vec::with_capacity(a.samples);
            for s in 0..a.samples {
                let random;
                let policy: &dyn Policy = match (&shared, &local, &spec) {
                    (Some(p), _, _) => p.as_ref(),
                    (None, Some(p), _) => p,
                    (None, None, PolicySpec::Random { k }) => {
                        random = RandomPolicy {
                            k: *k,
                            seed: cfg.split_seed.wrapping_add(s as u64),
                        };
                        &random
                    }
                    _ => unreachable!("policy resolved above"),
                };
                let r = run_episode(&g, q, policy, &ep)?;
                out.push((PredictionLine::from_result(&r, s), trace_lines(&r, s)));
            }
            Ok((out, t.elapsed()))
        },
        |res| {
            let (episodes, dt) = res?;
            for (pred, trace) in &episodes {
                let termination = pred.termination.as_ref().unwrap_or(&Termination::DMax);
                if let Termination::Aborted(msg) = termination {
                    aborted += 1;
                    log::warn!("{} sample {} aborted: {msg}", pred.qid, pred.sample);
                }
                write_line(&mut preds, pred)?;
                if let Some(w) = traces.as_mut() {
                    for line in trace {
                        write_line(w, line)?;
                    }
                }
            }
            if let Some((first, _)) = episodes.first() {
                log::info!(
                    "explore qid={} ms={:.1} samples={} steps={} answers={} termination={:?}",
                    first.qid,
                    ms(dt),
                    episodes.len(),
                    first.steps,
                    first.answers.len(),
                    first.termination
                );
            }
            Ok(())
        },
    )?;
    preds.flush()?;
    if let Some(w) = traces.as_mut() {
        w.flush()?;
    }
    log::info!(
        "explored questions={} samples={} ms={:.1}",
        qs.len(),
        a.samples,
        ms(started.elapsed())
    );
    if aborted > 0 {
        bail!("{aborted} episode(s) aborted after policy transport failures");
    }
    Ok(())
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("kg_path", &a.kg)
        .path("output_path", &a.out)
        .set("beta", a.beta)
        .set("format_value", a.format_value);
    let cfg = resolve(cli, &o)?;
    let rc = RewardConfig {
        beta: cfg.beta,
        format_reward_value: cfg.format_value,
    };
    rc.validate().map_err(|e| usage(e.to_string()))?;
    let (g, _) = load_graph(cli, &cfg)?;
    let trace: Vec<TraceLine> = read_jsonl(&a.trace)?;
    let (_, gold_lines) = read_sft_lines(&a.gold)?;
    let gold = GoldIndex::from_lines(&gold_lines);

    // group by question, keeping first-appearance order
    let mut order: Vec<(String, Vec<TraceLine>)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for line in trace {
        let i = *slot.entry(line.qid.clone()).or_insert_with(|| {
            order.push((line.qid.clone(), Vec::new()));
            order.len() - 1
        });
        order[i].1.push(line);
    }

    let mut w = output(cfg.output_path.as_deref())?;
    let mut n_lines = 0;
    ordered_map(
        &order,
        cli.jobs,
        |(_, lines)| score_trace(&g, lines, &gold, &rc),
        |scored| {
            if let Some(first) = scored.first() {
                let samples: BTreeMap<usize, f64> = scored
                    .iter()
                    .map(|l| (l.sample_index, l.episode_total))
                    .collect();
                let mean = samples.values().sum::<f64>() / samples.len() as f64;
                log::info!(
                    "score qid={} steps={} samples={} mean_episode_total={:.4}",
                    first.qid,
                    scored.len(),
                    samples.len(),
                    mean
                );
            }
            for l in &scored {
                write_line(&mut w, l)?;
            }
            n_lines += scored.len();
            Ok(())
        },
    )?;
    w.flush()?;
    log::info!("scored questions={} lines={}", order.len(), n_lines);
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("kg_path", &a.kg)
        .path("questions_path", &a.questions)
        .path("output_path", &a.out);
    let cfg = resolve(cli, &o)?;
    if a.khop == Some(0) {
        return Err(usage("--khop must be >= 1"));
    }
    let (g, _) = load_graph(cli, &cfg)?;
    let questions = required(&cfg.questions_path, "questions", "questions_path")?;
    let records = read_question_records(questions)?;
    let preds: Vec<PredictionLine> = read_jsonl(&a.pred)?;

    // one prediction per question: the lowest sample index
    let mut by_qid: HashMap<&str, (usize, BTreeSet<String>)> = HashMap::new();
    for p in &preds {
        let entry = by_qid
            .entry(p.qid.as_str())
            .or_insert_with(|| (p.sample, p.answers.iter().cloned().collect()));
        if p.sample < entry.0 {
            *entry = (p.sample, p.answers.iter().cloned().collect());
        }
    }

    let mut excluded = 0;
    let mut included = Vec::new();
    for r in &records {
        let gold: BTreeSet<String> = r.answers.iter().cloned().collect();
        if gold.is_empty() {
            excluded += 1;
        } else {
            included.push((r, gold));
        }
    }
    let missing = included
        .iter()
        .filter(|(r, _)| !by_qid.contains_key(r.qid.as_str()))
        .count();
    if missing > 0 {
        log::warn!("{missing} question(s) have no prediction; scored as empty");
    }

    let empty = BTreeSet::new();
    let mut scores = Vec::with_capacity(included.len());
    let mut retrieval = Vec::new();
    ordered_map(
        &included,
        cli.jobs,
        |(r, gold)| {
            let pred = by_qid.get(r.qid.as_str()).map_or(&empty, |(_, p)| p);
            let score = answer_metrics(&r.qid, pred, gold);
            let khop = a.khop.map(|k| {
                let seeds: BTreeSet<EntityId> = r.seeds.iter().filter_map(|s| g.entity_id(s)).collect();
                let got = retrieve_khop(&g, &seeds, k);
                (retrieval_metrics(&g, &got, gold), got.len())
            });
            (score, khop)
        },
        |(score, khop)| {
            log::info!(
                "eval qid={} hit={} precision={:.4} recall={:.4} f1={:.4}",
                score.qid,
                score.hit,
                score.precision,
                score.recall,
                score.f1
            );
            scores.push(score);
            retrieval.extend(khop);
            Ok(())
        },
    )?;

    let mut report = aggregate_report(&scores);
    (report.hit_ub, report.recall_ub) = upper_bounds(&g, included.iter().map(|(_, gold)| gold));
    report.n_excluded = excluded;
    let mut value = serde_json::to_value(&report)?;
    if let Some(k) = a.khop {
        value["khop"] = serde_json::to_value(aggregate_retrieval(k, &retrieval))?;
    }
    let mut w = output(cfg.output_path.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    writeln!(w)?;
    w.flush()?;
    log::info!(
        "evaluated n={} excluded={} hit_pct={:.2} f1_pct={:.2}",
        report.n,
        excluded,
        report.hit_pct,
        report.f1_pct
    );
    Ok(())
}

fn split(cli: &Cli, a: &SplitArgs) -> Result<()> {
    let mut o = Overrides::default();
    o.path("questions_path", &a.questions).set("split_seed", a.seed);
    let cfg = resolve(cli, &o)?;
    if !(0.0..=1.0).contains(&a.ratio) {
        return Err(usage(format!("--ratio must be in [0, 1], got {}", a.ratio)));
    }
    let path = required(&cfg.questions_path, "questions", "questions_path")?;
    let records = read_question_records(path)?;
    let (first, second) = split_records(&records, a.ratio, cfg.split_seed)?;
    for (out, part) in [(&a.sft_out, &first), (&a.rl_out, &second)] {
        let mut w = create(out)?;
        for r in part {
            write_line(&mut w, r)?;
        }
        w.flush()?;
    }
    log::info!(
        "split questions={} sft={} rl={} ratio={} seed={}",
        records.len(),
        first.len(),
        second.len(),
        a.ratio,
        cfg.split_seed
    );
    Ok(())
}
