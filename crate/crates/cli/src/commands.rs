use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;
use vineclass::bicop::Family;
use vineclass::classifier::{
    assign_risk_groups, auc, evaluate, fit_classifier, risk_group_report, ClassifierConfig, ClassifierModel,
    PriorMode, RiskPolicy,
};
use vineclass::data::{load_dataset, SchemaConfig};
use vineclass::diagnostics::{bootstrap_bands, latent_normal_scores, model_conditional_spearman, write_scores_csv};
use vineclass::format::{sig6, sig6_opt};
use vineclass::margins::MarginMethod;
use vineclass::scenario::{axis_metadata, risk_curve, risk_surface, write_curve_csv, BaseProfile, GridSpec, CONTOUR_LEVEL};
use vineclass::simulation::{
    benchmark_run, dgp_schema, simulate_dgp, BenchmarkConfig, CopulaMode, DgpConfig, Variant, FRANK_LABEL,
    GUMBEL_LABEL,
};
use vineclass::vine::{TruncationSearch, VineFitOptions};
use vineclass::{Error, Result};

use crate::args::*;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::RiskGroups(a) => risk_groups(a),
        Command::Scenario(a) => scenario(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

/// Resolves a relative output path against the output directory and
/// creates its parent directory.
fn out_path(dir: &OutDir, p: &Path) -> Result<PathBuf> {
    let full = if p.is_absolute() {
        p.to_path_buf()
    } else {
        let base = dir
            .out_dir
            .clone()
            .or_else(|| std::env::var_os("VINECLASS_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        base.join(p)
    };
    if let Some(parent) = full.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(full)
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", p.display()),
        )))
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "continuous" => Ok(Variant::Continuous),
        "mixed" => Ok(Variant::Mixed),
        _ => Err(Error::InvalidArgument(format!("unknown variant `{s}`"))),
    }
}

fn parse_margins(s: &str) -> Result<MarginMethod> {
    match s {
        "kernel" => Ok(MarginMethod::Kernel),
        "empirical" => Ok(MarginMethod::Empirical),
        _ => Err(Error::InvalidArgument(format!("unknown margin method `{s}`"))),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("cannot parse seeds `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn check_alphas(alphas: &[f64]) -> Result<Vec<RiskPolicy>> {
    alphas.iter().map(|&a| RiskPolicy::new(a)).collect()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let variant = parse_variant(&a.variant)?;
    let mut cfg = DgpConfig::new(variant, a.n, a.seed);
    cfg.replicate = a.replicate;
    let data = simulate_dgp(&cfg)?;
    let out = out_path(&a.dir, &a.out)?;
    data.write_csv(&out)?;
    let schema_out = match &a.schema_out {
        Some(p) => out_path(&a.dir, p)?,
        None => with_suffix(&out, ".schema.json"),
    };
    SchemaConfig {
        variables: dgp_schema(variant).vars().to_vec(),
        label: Some("label".into()),
        aux: None,
    }
    .write(&schema_out)?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    require_file(&a.data)?;
    require_file(&a.schema)?;
    let sc = SchemaConfig::from_path(&a.schema)?;
    let label = sc
        .label
        .clone()
        .ok_or_else(|| Error::InvalidSchema("schema names no label column".into()))?;
    let data = load_dataset(&a.data, &sc.schema()?, Some(&label), sc.aux.as_deref())?;
    let families = match &a.families {
        Some(names) => names.iter().map(|n| Family::parse(n)).collect::<Result<Vec<_>>>()?,
        None => Family::ALL.to_vec(),
    };
    let truncation = match a.truncation.as_str() {
        "greedy" => TruncationSearch::Greedy,
        "full" => TruncationSearch::Full,
        t => return Err(Error::InvalidArgument(format!("unknown truncation search `{t}`"))),
    };
    let priors = match a.priors.as_str() {
        "equal" => PriorMode::Equal,
        "empirical" => PriorMode::Empirical,
        p => return Err(Error::InvalidArgument(format!("unknown prior mode `{p}`"))),
    };
    let config = ClassifierConfig {
        margins: parse_margins(&a.margins)?,
        vine: VineFitOptions {
            families,
            psi0: a.psi0,
            truncation,
            fixed_family: None,
        },
        priors,
    };
    if a.report.is_some() && a.seed.is_none() {
        return Err(Error::InvalidArgument("--report needs --seed".into()));
    }
    let model = fit_classifier(&data, &config)?;
    model.save(out_path(&a.dir, &a.out)?)?;
    if let (Some(report), Some(seed)) = (&a.report, a.seed) {
        write_edge_report(&model, &out_path(&a.dir, report)?, seed)?;
    }
    Ok(())
}

fn write_edge_report(model: &ClassifierModel, path: &Path, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "class", "tree", "edge", "family", "rotation", "copula", "params", "tau", "spearman", "loglik",
    ])?;
    for (class, vine) in model.classes().iter().zip(model.vines()) {
        for e in vine.edge_report(seed)? {
            let params: Vec<String> = e.params.iter().map(|p| sig6(*p)).collect();
            w.write_record([
                class.to_string(),
                e.tree.to_string(),
                e.label,
                format!("{:?}", e.family).to_lowercase(),
                e.rotation.to_string(),
                e.copula,
                params.join(" "),
                sig6(e.tau),
                sig6(e.spearman),
                sig6(e.loglik),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let model = ClassifierModel::load(&a.model)?;
    let (mut label, mut aux) = (a.label.clone(), a.aux.clone());
    if let Some(p) = &a.schema {
        let sc = SchemaConfig::from_path(p)?;
        label = label.or(sc.label);
        aux = aux.or(sc.aux);
    }
    let data = load_dataset(&a.data, model.schema(), label.as_deref(), aux.as_deref())?;
    let policies = check_alphas(&a.alpha)?;
    let post = model.posteriors(&data)?;
    let j = model.class_index(a.adverse)?;
    let mut w = csv::Writer::from_path(out_path(&a.dir, &a.out)?)?;
    let mut header = vec!["row".to_string()];
    if data.labels().is_some() {
        header.push("label".into());
    }
    header.extend(model.classes().iter().map(|c| format!("p_{c}")));
    if let Some(x) = data.aux() {
        header.push(x.name.clone());
    }
    header.extend(a.alpha.iter().map(|al| format!("group_{}", sig6(*al))));
    w.write_record(&header)?;
    let groups: Vec<Vec<_>> = policies
        .iter()
        .map(|&p| assign_risk_groups(&post.iter().map(|r| r[j]).collect::<Vec<_>>(), p))
        .collect();
    for (i, p) in post.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        if let Some(l) = data.labels() {
            rec.push(l[i].to_string());
        }
        rec.extend(p.iter().map(|v| sig6(*v)));
        if let Some(x) = data.aux() {
            rec.push(sig6(x.values[i]));
        }
        rec.extend(groups.iter().map(|g| g[i].name().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Posterior table read back from a `predict` CSV.
struct Predictions {
    classes: Vec<u32>,
    probs: Vec<Vec<f64>>,
    labels: Vec<u32>,
    aux: Option<Vec<f64>>,
}

fn read_predictions(path: &Path, label: &str, aux: Option<&str>) -> Result<Predictions> {
    require_file(path)?;
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(label)?;
    let aux_idx = aux.map(find).transpose()?;
    let mut classes = Vec::new();
    let mut prob_idx = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(c) = h.strip_prefix("p_") {
            classes.push(
                c.parse::<u32>()
                    .map_err(|_| Error::InvalidArgument(format!("bad probability column `{h}`")))?,
            );
            prob_idx.push(i);
        }
    }
    if classes.len() < 2 {
        return Err(Error::MissingColumn("p_<class>".into()));
    }
    let num = |rec: &csv::StringRecord, i: usize, row: usize| -> Result<f64> {
        let cell = rec.get(i).unwrap_or("");
        cell.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
            row,
            column: headers[i].to_string(),
            value: cell.to_string(),
        })
    };
    let mut out = Predictions {
        classes,
        probs: Vec::new(),
        labels: Vec::new(),
        aux: aux_idx.map(|_| Vec::new()),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.probs
            .push(prob_idx.iter().map(|&i| num(&rec, i, row)).collect::<Result<_>>()?);
        out.labels.push(num(&rec, label_idx, row)? as u32);
        if let (Some(i), Some(v)) = (aux_idx, out.aux.as_mut()) {
            v.push(num(&rec, i, row)?);
        }
    }
    if out.probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut w = csv::Writer::from_path(out_path(&a.dir, &a.out)?)?;
    w.write_record(["split", "metric", "class", "value"])?;
    for spec in &a.predictions {
        let (split, path) = match spec.split_once('=') {
            Some((s, p)) => (s.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (stem, p)
            }
        };
        let pr = read_predictions(&path, &a.label, None)?;
        let e = evaluate(&pr.probs, &pr.labels, &pr.classes)?;
        for c in &e.per_class {
            w.write_record([split.clone(), "brier".into(), c.class.to_string(), sig6_opt(c.brier)])?;
            w.write_record([split.clone(), "nll".into(), c.class.to_string(), sig6_opt(c.nll)])?;
        }
        w.write_record([split.clone(), "nll_sum".into(), String::new(), sig6(e.nll_sum)])?;
        w.write_record([split.clone(), "nll_mean".into(), String::new(), sig6(e.nll_mean)])?;
        let j = pr
            .classes
            .iter()
            .position(|&c| c == a.adverse)
            .ok_or_else(|| Error::InvalidArgument(format!("class {} has no probability column", a.adverse)))?;
        let scores: Vec<f64> = pr.probs.iter().map(|p| p[j]).collect();
        let value = auc(&scores, &pr.labels, a.adverse).ok();
        w.write_record([split.clone(), "auc".into(), a.adverse.to_string(), sig6_opt(value)])?;
    }
    w.flush()?;
    Ok(())
}

fn risk_groups(a: RiskGroupsArgs) -> Result<()> {
    let policies = check_alphas(&a.alpha)?;
    let pr = read_predictions(&a.predictions, &a.label, a.aux.as_deref())?;
    let j = pr
        .classes
        .iter()
        .position(|&c| c == a.adverse)
        .ok_or_else(|| Error::InvalidArgument(format!("class {} has no probability column", a.adverse)))?;
    let p: Vec<f64> = pr.probs.iter().map(|r| r[j]).collect();
    let mut w = csv::Writer::from_path(out_path(&a.dir, &a.out)?)?;
    let mut header = vec!["alpha".to_string(), "group".into()];
    header.extend(pr.classes.iter().map(|c| format!("n_class{c}")));
    header.extend(["total".into(), "aux_mean".into(), "aux_sd".into()]);
    w.write_record(&header)?;
    for policy in policies {
        let groups = assign_risk_groups(&p, policy);
        for row in risk_group_report(&groups, &pr.labels, &pr.classes, pr.aux.as_deref(), policy.alpha())? {
            let mut rec = vec![sig6(row.alpha), row.group.name().to_string()];
            rec.extend(row.counts.iter().map(|(_, n)| n.to_string()));
            rec.extend([row.total.to_string(), sig6_opt(row.aux_mean), sig6_opt(row.aux_sd)]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn scenario(a: ScenarioArgs) -> Result<()> {
    require_file(&a.model)?;
    require_file(&a.profile)?;
    let model = ClassifierModel::load(&a.model)?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&std::fs::read_to_string(&a.profile)?)?;
    let base = BaseProfile::from_map(model.schema(), &map)?;
    let grids = a.grid.iter().map(|g| GridSpec::parse(g)).collect::<Result<Vec<_>>>()?;
    let out = out_path(&a.dir, &a.out)?;
    let axes = grids
        .iter()
        .map(|g| axis_metadata(model.schema(), g))
        .collect::<Result<Vec<_>>>()?;
    let mut meta = json!({
        "adverse_class": a.adverse,
        "prior": model.priors()[model.class_index(a.adverse)?],
        "base_profile": map,
        "axes": axes,
    });
    match grids.as_slice() {
        [g] => {
            let curve = risk_curve(&model, &base, g, a.adverse)?;
            write_curve_csv(&out, &g.variable, &curve)?;
        }
        [g1, g2] => {
            let s = risk_surface(&model, &base, g1, g2, a.adverse)?;
            s.write_csv(&out)?;
            meta["contour_level"] = json!(CONTOUR_LEVEL);
            meta["contour_present"] = json!(s.contour.is_some());
            meta["contour_segments"] = json!(s.contour);
        }
        _ => return Err(Error::InvalidGrid("give one grid (curve) or two grids (surface)".into())),
    }
    write_json(&with_suffix(&out, ".meta.json"), &meta)
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    require_file(&a.data)?;
    require_file(&a.schema)?;
    let sc = SchemaConfig::from_path(&a.schema)?;
    let schema = sc.schema()?;
    let label = if a.class.is_some() {
        Some(
            sc.label
                .clone()
                .ok_or_else(|| Error::InvalidSchema("--class needs a label column in the schema".into()))?,
        )
    } else {
        sc.label.clone()
    };
    let mut data = load_dataset(&a.data, &schema, label.as_deref(), None)?;
    if let Some(c) = a.class {
        let labels = data.labels().ok_or(Error::LabelsAbsent)?;
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            return Err(Error::ClassTooSmall { class: c, got: 0, needed: 1 });
        }
        data = data.subset(&idx);
    }
    let model = a.model.as_ref().map(|p| {
        require_file(p)?;
        ClassifierModel::load(p)
    });
    let model = model.transpose()?;
    let mut did_something = false;
    let dir = &a.dir;
    let target = |name: &str| out_path(dir, &a.out.join(name));

    match (&a.x, &a.y, &a.z) {
        (Some(x), Some(y), Some(z)) => {
            let col = |name: &str| -> Result<&[f64]> { Ok(data.column(data.schema().require(name)?)) };
            let zi = data.schema().require(z)?;
            let zspec = &data.schema().vars()[zi];
            if !zspec.is_discrete() {
                return Err(Error::InvalidArgument(format!("conditioning variable `{z}` must be ordinal")));
            }
            let mut bands = bootstrap_bands(col(x)?, col(y)?, col(z)?, zspec.level_count(), a.replicates, a.level, a.seed)?;
            if let (Some(m), Some(edge)) = (&model, &a.edge) {
                let class = a.class.unwrap_or(*m.classes().last().expect("at least two classes"));
                let vine = &m.vines()[m.class_index(class)?];
                bands = bands.with_modeled(model_conditional_spearman(vine, edge, a.seed)?);
            }
            bands.write_csv(target("conditional_rho.csv")?)?;
            did_something = true;
        }
        (None, None, None) => {}
        _ => return Err(Error::InvalidArgument("--x, --y and --z go together".into())),
    }
    if let Some(pair) = &a.scores {
        let [c, k] = pair.as_slice() else {
            return Err(Error::InvalidArgument("--scores takes CONTINUOUS,ORDINAL".into()));
        };
        let ci = data.schema().require(c)?;
        let ki = data.schema().require(k)?;
        let kspec = &data.schema().vars()[ki];
        if data.schema().vars()[ci].is_discrete() || !kspec.is_discrete() {
            return Err(Error::InvalidArgument(format!("`{c}` must be continuous and `{k}` ordinal")));
        }
        let scores = latent_normal_scores(data.column(ci), data.column(ki), kspec.level_count(), a.seed)?;
        write_scores_csv(target("latent_scores.csv")?, &scores)?;
        did_something = true;
    }
    if let Some(m) = &model {
        write_edge_report(m, &target("edges.csv")?, a.seed)?;
        did_something = true;
    }
    if !did_something {
        return Err(Error::InvalidArgument(
            "nothing to diagnose: give --x/--y/--z, --scores or --model".into(),
        ));
    }
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let modes = a
        .modes
        .iter()
        .map(|m| match m.as_str() {
            "oracle" => Ok(CopulaMode::Oracle),
            "mbic" => Ok(CopulaMode::Mbic),
            _ => Err(Error::InvalidArgument(format!("unknown copula mode `{m}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = BenchmarkConfig {
        variant: parse_variant(&a.variant)?,
        seeds: parse_seeds(&a.seeds)?,
        n_train: a.n_train,
        n_test: a.n_test,
        modes,
        margins: parse_margins(&a.margins)?,
        psi0: a.psi0,
        grid_points: a.grid_points,
    };
    let out = benchmark_run(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let path = out_path(&a.dir, &a.out)?;
    out.write_csv(&path)?;
    if cfg.grid_points >= 2 {
        let grid = match &a.grid_out {
            Some(p) => out_path(&a.dir, p)?,
            None => with_suffix(&path, ".grid.csv"),
        };
        out.write_grid_csv(grid)?;
    }
    write_json(
        &with_suffix(&path, ".meta.json"),
        &json!({
            "variant": cfg.variant.name(),
            "seeds": cfg.seeds,
            "n_train_per_class": cfg.n_train,
            "n_test_per_class": cfg.n_test,
            "labels": {
                "frank_class": FRANK_LABEL,
                "gumbel_class": GUMBEL_LABEL,
            },
            "metrics": {
                "nll_sum": "sum over rows of -ln p(true class)",
                "nll_mean": "nll_sum divided by the number of rows",
                "nll_classK": "mean of -ln p(K) over rows of class K",
                "brier_classK": "mean of (1 - p(K))^2 over rows of class K",
            },
            "grid_seed": cfg.seeds.first(),
        }),
    )
}
