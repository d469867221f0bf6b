use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kern_core::baselines::{clamp_unit, Method};
use kern_core::corpus::{
    generate_synthetic_corpus, load_corpus, load_taxonomy_edges, parse_taxonomy_edges, popularity_series,
    render_corpus, render_taxonomy_edges, write_atomic, Corpus, CorpusBuilder, ElementKind,
};
use kern_core::eval::{run_ablation, run_benchmark};
use kern_core::kern::{self, Checkpoint, ForecastQuery};

use crate::config::RunConfig;
use crate::errors::{suggest, Failure};

/// `data/c.csv` → `data/c.taxonomy.csv`
fn taxonomy_sibling(corpus: &Path) -> PathBuf {
    let stem = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    corpus.with_file_name(format!("{stem}.taxonomy.csv"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Loads the corpus and attaches the configured taxonomy, or the sibling
/// `<stem>.taxonomy.csv` when none is configured and it exists.
fn load_corpus_with_taxonomy(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg.require(&cfg.corpus, "corpus")?;
    let mut corpus = load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?;
    let taxonomy = match &cfg.taxonomy {
        Some(t) => Some(t.clone()),
        None => Some(taxonomy_sibling(path)).filter(|p| p.exists()),
    };
    if let Some(t) = taxonomy {
        log::info!("using taxonomy {}", t.display());
        let edges = load_taxonomy_edges(&t)?;
        corpus
            .attach_taxonomy(&edges)
            .with_context(|| format!("taxonomy {}", t.display()))?;
    }
    Ok(corpus)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.require(&cfg.checkpoint, "checkpoint")?;
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require(&cfg.out, "out")?;
    let corpus = generate_synthetic_corpus(&cfg.synth, cfg.seed)?;
    let tax_path = cfg.taxonomy.clone().unwrap_or_else(|| taxonomy_sibling(out));
    let edges = corpus.taxonomy.as_ref().map(|t| t.edge_names()).unwrap_or_default();
    write_atomic(out, &render_corpus(&corpus))?;
    write_atomic(&tax_path, &render_taxonomy_edges(&edges))?;
    eprintln!(
        "wrote {} series ({} groups, {} elements) to {} and {} edges to {}",
        corpus.series.len(),
        corpus.groups.len(),
        corpus.elements.len(),
        out.display(),
        edges.len(),
        tax_path.display()
    );
    Ok(())
}

/// Count lines share the corpus layout with integer counts in place of
/// ratios; element `*` (kind `total`) carries the group's item totals.
fn parse_counts(text: &str) -> Result<Corpus> {
    type Key = (String, u8, u8);
    let mut totals: BTreeMap<Key, (usize, Vec<u64>)> = BTreeMap::new();
    let mut rows: Vec<(usize, Key, String, ElementKind, usize, Vec<u64>)> = Vec::new();
    let mut period: Option<usize> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| Failure::new("corpus", format!("counts line {}: {m}", n + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", f.len())).into());
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            if s.is_empty() && (what == "age_band" || what == "gender") {
                return Ok(0);
            }
            s.parse().map_err(|_| bad(format!("invalid {what} `{s}`")).into())
        };
        let key = (f[0].to_string(), num(f[1], "age_band")? as u8, num(f[2], "gender")? as u8);
        let p = num(f[5], "grid_period")? as usize;
        if *period.get_or_insert(p) != p {
            return Err(bad("grid_period differs from earlier lines".into()).into());
        }
        let start = num(f[6], "start_index")? as usize;
        let counts = f[7].split(';').map(|c| num(c.trim(), "count")).collect::<Result<Vec<_>>>()?;
        if f[3] == "*" {
            if totals.insert(key, (start, counts)).is_some() {
                return Err(bad("duplicate totals line".into()).into());
            }
        } else {
            let kind: ElementKind = f[4].parse().map_err(bad)?;
            rows.push((n + 1, key, f[3].to_string(), kind, start, counts));
        }
    }
    let period = period.ok_or_else(|| Failure::new("corpus", "counts file contains no lines"))?;
    let mut b = CorpusBuilder::new(period)?;
    for (line, key, element, kind, start, counts) in rows {
        let ctx = || format!("counts line {line}");
        let (t_start, total) = totals
            .get(&key)
            .ok_or_else(|| Failure::new("corpus", format!("counts line {line}: no totals line for {}/{}/{}", key.0, key.1, key.2)))?;
        if *t_start != start {
            return Err(Failure::new("corpus", format!("counts line {line}: start_index differs from the totals line")).into());
        }
        let values = popularity_series(&counts, total).with_context(ctx)?;
        let g = b.group(&key.0, key.1, key.2).with_context(ctx)?;
        let e = b.element(&element, kind).with_context(ctx)?;
        b.push_series(g, e, start, values).with_context(ctx)?;
    }
    Ok(b.build())
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let counts = cfg.require(&cfg.counts, "counts")?;
    let out = cfg.require(&cfg.out, "out")?;
    let text = std::fs::read_to_string(counts).map_err(|e| Failure::io(format!("{}: {e}", counts.display())))?;
    let mut corpus = parse_counts(&text)?;
    if let Some(t) = &cfg.taxonomy {
        let edges = parse_taxonomy_edges(
            &std::fs::read_to_string(t).map_err(|e| Failure::io(format!("{}: {e}", t.display())))?,
        )?;
        corpus.attach_taxonomy(&edges)?;
        write_atomic(&taxonomy_sibling(out), &render_taxonomy_edges(&edges))?;
    }
    write_atomic(out, &render_corpus(&corpus))?;
    eprintln!("wrote {} series to {}", corpus.series.len(), out.display());
    Ok(())
}

fn training_log(ck: &Checkpoint) -> String {
    let c = &ck.config;
    let on = |b: bool| if b { "on" } else { "off" };
    let mut out = format!(
        "# variant {} (internal {}, external {}) D={} H={} lambda={} batch={} iterations={} T={} T'={} seed={}\n",
        ck.variant(),
        on(c.use_internal_knowledge),
        on(c.use_external_knowledge),
        c.embed_dim,
        c.hidden,
        c.lambda,
        c.batch_size,
        c.iterations,
        c.input_len,
        c.horizon,
        c.seed
    );
    out.push_str("iteration\tloss\tsequence\ttriplet\tweight_sums\n");
    for r in &ck.history {
        let triplet = r.triplet.map_or_else(|| "NA".to_string(), |t| format!("{t:.8}"));
        let sums: Vec<String> = r.weight_sums.iter().map(|s| format!("{s:.6}")).collect();
        let _ = writeln!(out, "{}\t{:.8}\t{:.8}\t{triplet}\t{}", r.iteration, r.loss, r.sequence, sums.join(";"));
    }
    out
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = cfg
        .out
        .as_deref()
        .or(cfg.checkpoint.as_deref())
        .ok_or_else(|| Failure::usage("missing `out` (checkpoint path)"))?;
    let corpus = load_corpus_with_taxonomy(cfg)?;
    let config = cfg.train_config();
    eprintln!("training {} for {} iterations", config.variant(), config.iterations);
    let ck = kern::train(&corpus, &config)?;
    ck.save(out)?;
    let log_path = with_suffix(out, ".log");
    write_atomic(&log_path, &training_log(&ck))?;
    let last = ck.history.last().map_or(f64::NAN, |r| r.loss);
    eprintln!("final loss {last:.6}; wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, ablation: bool) -> Result<()> {
    let corpus = load_corpus_with_taxonomy(cfg)?;
    if ablation {
        let report = run_ablation(&corpus, cfg.setting, &cfg.train_config())?;
        if let Some(prefix) = &cfg.out {
            write_atomic(&with_suffix(prefix, ".ablation.tsv"), &report.to_tsv())?;
        }
        print!("{}", report.to_table());
        return Ok(());
    }
    let ck = if cfg.methods.contains(&Method::Kern) {
        Some(load_checkpoint(cfg)?)
    } else {
        None
    };
    let report = run_benchmark(&corpus, &cfg.methods, cfg.setting, ck.as_ref())?;
    if let Some(prefix) = &cfg.out {
        write_atomic(&with_suffix(prefix, ".tsv"), &report.to_tsv())?;
        write_atomic(&with_suffix(prefix, ".txt"), &report.to_table())?;
        write_atomic(&with_suffix(prefix, ".forecasts.csv"), &report.forecast_dump(&corpus))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

/// `city[/age_band[/gender]]` with `*` or omitted parts as wildcards.
fn matching_groups(corpus: &Corpus, spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split('/').map(str::trim).collect();
    if parts.len() > 3 || parts[0].is_empty() {
        return Err(Failure::usage(format!("invalid group `{spec}` (expected city[/age_band[/gender]])")).into());
    }
    let number = |i: usize| -> Result<Option<u8>> {
        match parts.get(i).copied() {
            None | Some("*") | Some("") => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Failure::usage(format!("invalid group part `{s}`")).into()),
        }
    };
    let (age, gender) = (number(1)?, number(2)?);
    let city = match parts[0] {
        "*" => None,
        name => Some(corpus.city_id(name).ok_or_else(|| {
            Failure::not_found(format!("unknown city `{name}`{}", suggest(name, &corpus.cities)))
        })?),
    };
    let groups: Vec<usize> = corpus
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| {
            city.is_none_or(|c| g.city == c)
                && age.is_none_or(|a| g.age_band == a)
                && gender.is_none_or(|s| g.gender == s)
        })
        .map(|(i, _)| i)
        .collect();
    if groups.is_empty() {
        return Err(Failure::not_found(format!("no user group matches `{spec}`")).into());
    }
    Ok(groups)
}

fn element_id(corpus: &Corpus, name: &str) -> Result<usize> {
    corpus.element_id(name).ok_or_else(|| {
        let names: Vec<&str> = corpus.elements.iter().map(|e| e.name.as_str()).collect();
        Failure::not_found(format!("unknown element `{name}`{}", suggest(name, &names))).into()
    })
}

/// Forecast from the last `T` points of a series. Returns the imputed
/// input, its first grid index, and the clamped forecast.
fn forecast_tail(corpus: &Corpus, ck: &Checkpoint, group: usize, element: usize) -> Result<Option<(Vec<f64>, usize, Vec<f64>)>> {
    let Some(series) = corpus.series_for(group, element) else {
        return Ok(None);
    };
    let t = ck.input_len();
    if series.len() < t {
        log::warn!("{}: series shorter than T={t}", corpus.group_label(group));
        return Ok(None);
    }
    let dense = series.imputed()?.dense().expect("imputed series is dense");
    let offset = dense.len() - t;
    let g = corpus.groups[group];
    let query = ForecastQuery {
        city: g.city,
        age_band: g.age_band,
        gender: g.gender,
        element,
        input: dense[offset..].to_vec(),
        start_index: series.start_index + offset,
    };
    let mut fc = ck.forecast(&query)?;
    clamp_unit(&mut fc);
    Ok(Some((query.input, query.start_index, fc)))
}

pub fn forecast(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.group.as_deref().ok_or_else(|| Failure::usage("missing `group`"))?;
    let name = cfg.element.as_deref().ok_or_else(|| Failure::usage("missing `element`"))?;
    let corpus = load_corpus_with_taxonomy(cfg)?;
    let ck = load_checkpoint(cfg)?;
    ck.vocabulary.check_corpus(&corpus)?;
    let element = element_id(&corpus, name)?;
    let mut out = String::from("group,element,t,y_observed,y_forecast\n");
    let mut emitted = 0;
    for group in matching_groups(&corpus, spec)? {
        let Some((input, start, fc)) = forecast_tail(&corpus, &ck, group, element)? else {
            continue;
        };
        let label = corpus.group_label(group);
        let raw = &corpus.series_for(group, element).expect("checked").values;
        let raw_offset = raw.len() - input.len();
        for (i, v) in input.iter().enumerate() {
            let observed = raw[raw_offset + i].map_or_else(|| format!("{v}"), |x| format!("{x}"));
            let _ = writeln!(out, "{label},{name},{},{observed},", start + i);
        }
        for (i, v) in fc.iter().enumerate() {
            let _ = writeln!(out, "{label},{name},{},,{v}", start + input.len() + i);
        }
        emitted += 1;
    }
    if emitted == 0 {
        return Err(Failure::not_found(format!("no series of `{name}` long enough in groups matching `{spec}`")).into());
    }
    emit(cfg.out.as_deref(), &out)
}

/// Forecast-window mean minus the mean of the last `T'` input points.
pub fn change_score(input: &[f64], forecast: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let trailing = &input[input.len().saturating_sub(forecast.len())..];
    mean(forecast) - mean(trailing)
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.group.as_deref().ok_or_else(|| Failure::usage("missing `group`"))?;
    let corpus = load_corpus_with_taxonomy(cfg)?;
    let ck = load_checkpoint(cfg)?;
    ck.vocabulary.check_corpus(&corpus)?;
    let groups = matching_groups(&corpus, spec)?;
    if groups.len() > 1 {
        let labels: Vec<String> = groups.iter().take(5).map(|&g| corpus.group_label(g)).collect();
        return Err(Failure::usage(format!(
            "`{spec}` matches {} groups ({}{}); give city/age_band/gender",
            groups.len(),
            labels.join(", "),
            if groups.len() > 5 { ", ..." } else { "" }
        ))
        .into());
    }
    let group = groups[0];
    let mut by_kind: BTreeMap<ElementKind, Vec<(f64, &str, Vec<f64>)>> = BTreeMap::new();
    for (e, el) in corpus.elements.iter().enumerate() {
        if let Some((input, _, fc)) = forecast_tail(&corpus, &ck, group, e)? {
            by_kind.entry(el.kind).or_default().push((change_score(&input, &fc), &el.name, fc));
        }
    }
    let mut out = format!(
        "# trend report for {} ({}, T={}, T'={})\n",
        corpus.group_label(group),
        ck.variant(),
        ck.input_len(),
        ck.horizon()
    );
    for kind in ElementKind::ALL {
        let Some(rows) = by_kind.get_mut(&kind) else {
            continue;
        };
        rows.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let _ = writeln!(out, "\n[{kind}]\nrank,direction,element,change,forecast");
        let top = cfg.top.min(rows.len());
        let fmt_fc = |fc: &[f64]| fc.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(";");
        for (i, (score, name, fc)) in rows.iter().take(top).enumerate() {
            let _ = writeln!(out, "{},riser,{name},{score:.6},{}", i + 1, fmt_fc(fc));
        }
        let mut fallers: Vec<_> = rows.iter().collect();
        fallers.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        for (i, (score, name, fc)) in fallers.iter().take(top).enumerate() {
            let _ = writeln!(out, "{},faller,{name},{score:.6},{}", i + 1, fmt_fc(fc));
        }
    }
    emit(cfg.out.as_deref(), &out)
}
