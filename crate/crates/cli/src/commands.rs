// SPDX-License-Identifier: Apache-2.0

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use lockgraph::attack::{attack_interlock, attack_random_mux, reconstruct_design, AttackReport};
use lockgraph::evalkit::{
    hamming_distance, link_decisions, score_key, EvalReport, HdParams, UnresolvedPolicy,
};
use lockgraph::gnn::{read_model, train, write_model, GnnConfig};
use lockgraph::graphprep::{
    build_attack_graph, build_dataset, read_dataset, read_graph, write_dataset, write_graph,
    DatasetParams, LabeledDesign, LinkOrigin, LinkSet, Scenario,
};
use lockgraph::locking::{lock_interlock, lock_random_mux};
use lockgraph::netlist::{parse_bench, write_bench};
use lockgraph::{KeyAssignment, LockMeta, LockedDesign, Netlist, Scheme};

use crate::{
    AttackArgs, Cli, Command, DatasetOpts, EvalArgs, LockArgs, LockOpts, PipelineArgs, PrepareArgs,
    TrainArgs, TrainOpts,
};

/// Global settings every stage may need.
struct Ctx {
    seed: u64,
    paper_scale: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx {
        seed: cli.seed,
        paper_scale: cli.paper_scale,
    };
    match cli.command {
        Command::Lock(a) => lock(&ctx, &a),
        Command::Prepare(a) => prepare(&ctx, &a),
        Command::Train(a) => train_model(&ctx, &a),
        Command::Attack(a) => attack(&a),
        Command::Eval(a) => eval(&ctx, &a).map(|_| ()),
        Command::Pipeline(a) => pipeline(&ctx, &a),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(
        || "design".to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn read_netlist(path: &Path) -> Result<Netlist> {
    parse_bench(&read(path)?, &stem(path)).with_context(|| format!("parsing {}", path.display()))
}

fn read_key(path: &Path) -> Result<KeyAssignment> {
    read(path)?
        .parse()
        .with_context(|| format!("parsing key file {}", path.display()))
}

fn read_meta(path: &Path, netlist: &Netlist) -> Result<LockMeta> {
    LockMeta::parse(&read(path)?, netlist).with_context(|| format!("parsing {}", path.display()))
}

fn lock(ctx: &Ctx, a: &LockArgs) -> Result<()> {
    let original = read_netlist(&a.input)?;
    let design = lock_design(ctx, &original, &a.lock)?;
    write_atomic(&a.out, &write_bench(&design.netlist))?;
    write_atomic(&a.key_out, &design.correct_key().to_key_file())?;
    write_atomic(&a.meta_out, &design.meta.to_text(&design.netlist))?;
    eprintln!(
        "locked {} with {}: {} key bits",
        original.name,
        design.scheme(),
        design.key_count()
    );
    Ok(())
}

fn lock_design(ctx: &Ctx, original: &Netlist, o: &LockOpts) -> Result<LockedDesign> {
    Ok(match o.scheme {
        Scheme::RandomMux => {
            let k = o.key_size.context("random MUX locking needs --key-size")?;
            lock_random_mux(original, k, ctx.seed)?
        }
        Scheme::InterLock => {
            ensure!(
                o.key_size.is_none(),
                "--key-size applies to random MUX locking only"
            );
            lock_interlock(original, o.keyrbs, o.size, ctx.seed)?
        }
    })
}

fn library(specs: &[String]) -> Result<Vec<LabeledDesign>> {
    specs
        .iter()
        .map(|spec| {
            let parts: Vec<&str> = spec.split(',').collect();
            let [bench, meta, key] = parts[..] else {
                bail!("--library expects `locked.bench,design.meta,design.key`, got `{spec}`");
            };
            let netlist = read_netlist(Path::new(bench))?;
            let meta = read_meta(Path::new(meta), &netlist)?;
            let key = read_key(Path::new(key))?;
            Ok(LabeledDesign::from_locked(&LockedDesign::from_parts(
                netlist, meta, key,
            )?)?)
        })
        .collect()
}

fn check_dataset_opts(o: &DatasetOpts) -> Result<()> {
    match o.scenario {
        Scenario::CircuitLibrary => ensure!(
            !o.library.is_empty(),
            "the circuit-library scenario needs at least one --library design"
        ),
        Scenario::SelfReferencing => ensure!(
            o.library.is_empty(),
            "--library is only used by the circuit-library scenario"
        ),
    }
    ensure!(
        (0.0..1.0).contains(&o.validation_fraction),
        "--validation-fraction must lie in [0, 1)"
    );
    Ok(())
}

fn prepare(ctx: &Ctx, a: &PrepareArgs) -> Result<()> {
    check_dataset_opts(&a.dataset)?;
    let netlist = read_netlist(&a.locked)?;
    let meta = read_meta(&a.meta, &netlist)?;
    let public = lockgraph::PublicDesign {
        netlist: &netlist,
        meta: &meta,
    };
    let (graph, links) = build_attack_graph(public)?;
    let lib = library(&a.dataset.library)?;
    let params = DatasetParams {
        h: a.dataset.h,
        validation_fraction: a.dataset.validation_fraction,
        max_drnl: a.dataset.max_drnl,
        seed: ctx.seed,
    };
    let ds = build_dataset(&graph, &links, &lib, a.dataset.scenario, &params)?;
    write_atomic(&a.graph_out, &write_graph(&graph, &links))?;
    write_atomic(&a.dataset_out, &write_dataset(&ds))?;
    eprintln!(
        "graph: {} nodes, {} edges, {} candidate links; dataset: {} train, {} validation",
        graph.node_count(),
        graph.edge_count(),
        links.links.len(),
        ds.train.len(),
        ds.validation.len()
    );
    Ok(())
}

fn gnn_config(ctx: &Ctx, o: &TrainOpts, h: usize, max_drnl: usize) -> GnnConfig {
    GnnConfig {
        epochs: o.epochs,
        learning_rate: o.learning_rate,
        batch_size: o.batch_size,
        dropout: o.dropout,
        checkpoint: o.checkpoint,
        h_train: h,
        max_drnl,
        seed: ctx.seed,
        ..GnnConfig::default()
    }
}

fn train_model(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let ds = read_dataset(&read(&a.dataset)?)
        .with_context(|| format!("parsing {}", a.dataset.display()))?;
    let config = gnn_config(ctx, &a.train, ds.h, ds.max_drnl);
    let outcome = train(&config, &ds)?;
    for line in &outcome.log {
        eprintln!("{line}");
    }
    eprintln!("kept epoch {}", outcome.best_epoch);
    write_atomic(&a.model_out, &write_model(&outcome.model))
}

fn scheme_of(links: &LinkSet) -> Result<Scheme> {
    let mux = links
        .groups
        .iter()
        .filter(|g| matches!(g.origin, LinkOrigin::Mux { .. }))
        .count();
    match (mux, links.groups.len()) {
        (_, 0) => bail!("the graph has no candidate links"),
        (m, n) if m == n => Ok(Scheme::RandomMux),
        (0, _) => Ok(Scheme::InterLock),
        _ => bail!("the graph mixes MUX and switch-box links"),
    }
}

fn attack(a: &AttackArgs) -> Result<()> {
    let (graph, links) =
        read_graph(&read(&a.graph)?).with_context(|| format!("parsing {}", a.graph.display()))?;
    let model =
        read_model(&read(&a.model)?).with_context(|| format!("parsing {}", a.model.display()))?;
    let scheme = scheme_of(&links)?;
    if let Some(expected) = a.scheme {
        ensure!(
            expected == scheme,
            "--scheme {expected} does not match the graph's {scheme} links"
        );
    }
    let (key, mut report) = match scheme {
        Scheme::RandomMux => attack_random_mux(&graph, &links, &model)?,
        Scheme::InterLock => attack_interlock(&graph, &links, &model)?,
    };
    if a.omit_timing {
        report.runtime_ms = 0;
    }
    write_atomic(&a.key_out, &key.to_key_file())?;
    write_atomic(&a.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    eprintln!(
        "{}: {} of {} key bits resolved, {} rounds, {:?}",
        scheme, report.solved_bits, report.key_count, report.rounds, report.termination
    );
    Ok(())
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<EvalReport> {
    let locked = read_netlist(&a.locked)?;
    let truth = read_key(&a.truth)?;
    let recovered = match (&a.key, a.identity_check) {
        (_, true) => truth.clone(),
        (Some(p), false) => read_key(p)?,
        (None, false) => bail!("--key is required"),
    };
    let metrics = score_key(&recovered, &truth)?;
    let mut scheme = match &a.meta {
        Some(p) => read_meta(p, &locked)?.scheme.to_string(),
        None => String::from("unknown"),
    };
    let mut runtime = 0;
    let iterations = match (&a.attack_report, &a.graph) {
        (Some(rp), Some(gp)) => {
            let report: AttackReport = serde_json::from_str(&read(rp)?)
                .with_context(|| format!("parsing {}", rp.display()))?;
            let (_, links) = read_graph(&read(gp)?)?;
            scheme.clone_from(&report.scheme);
            runtime = report.runtime_ms;
            link_decisions(&report, &links, &truth)?
        }
        _ => Vec::new(),
    };
    let hd = match &a.original {
        Some(p) => {
            let original = read_netlist(p)?;
            let rebuilt = reconstruct_design(&locked, &recovered);
            let params = HdParams {
                seed: ctx.seed,
                ..if ctx.paper_scale {
                    HdParams::full()
                } else {
                    HdParams::desk()
                }
            };
            Some(hamming_distance(
                &original,
                &rebuilt,
                &recovered,
                &UnresolvedPolicy::Random,
                &params,
            )?)
        }
        None => None,
    };
    let report = EvalReport {
        design: locked.name.clone(),
        scheme,
        metrics,
        iterations,
        hd,
        attack_runtime_ms: runtime,
    };
    if let Some(p) = &a.report_out {
        write_atomic(p, &(report.to_json() + "\n"))?;
    }
    if let Some(p) = &a.csv_out {
        write_atomic(p, &report.to_csv())?;
    }
    print!("{}", report.to_text());
    if a.identity_check {
        let m = &report.metrics;
        ensure!(
            m.correct == m.key_count,
            "the key file has {} unresolved bits",
            m.undeciphered
        );
        let hd = report.hd.as_ref().and_then(|h| h.hd_percent);
        ensure!(
            hd == Some(0.0),
            "the correct key does not restore the original function (HD {hd:?})"
        );
    }
    Ok(report)
}

fn pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    check_dataset_opts(&a.dataset)?;
    std::fs::create_dir_all(&a.work_dir)
        .with_context(|| format!("creating {}", a.work_dir.display()))?;
    let name = stem(&a.input);
    let at = |suffix: &str| -> PathBuf { a.work_dir.join(format!("{name}{suffix}")) };
    let (locked, key, meta) = (at("_locked.bench"), at(".key"), at(".meta"));
    let (graph, dataset, model) = (at(".graph"), at(".dataset"), at(".model"));
    let (recovered, attack_report) = (at("_recovered.key"), at("_attack.json"));

    lock(
        ctx,
        &LockArgs {
            lock: a.lock.clone(),
            input: a.input.clone(),
            out: locked.clone(),
            key_out: key.clone(),
            meta_out: meta.clone(),
        },
    )?;
    prepare(
        ctx,
        &PrepareArgs {
            locked: locked.clone(),
            meta,
            dataset: a.dataset.clone(),
            graph_out: graph.clone(),
            dataset_out: dataset.clone(),
        },
    )?;
    train_model(
        ctx,
        &TrainArgs {
            dataset,
            train: a.train.clone(),
            model_out: model.clone(),
        },
    )?;
    attack(&AttackArgs {
        scheme: Some(a.lock.scheme),
        graph: graph.clone(),
        model,
        key_out: recovered.clone(),
        report: attack_report.clone(),
        omit_timing: a.omit_timing,
    })?;
    eval(
        ctx,
        &EvalArgs {
            locked,
            key: Some(recovered),
            truth: key,
            meta: None,
            original: Some(a.input.clone()),
            attack_report: Some(attack_report),
            graph: Some(graph),
            report_out: Some(at("_eval.json")),
            csv_out: Some(at("_eval.csv")),
            identity_check: false,
        },
    )?;
    Ok(())
}
