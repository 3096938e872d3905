use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use sqnn_ppp::fit::{pgd_fit, train_hidden};
use sqnn_ppp::model::{alpha_heuristic, FileHeader, ModelFile};
use sqnn_ppp::pointprocess::{
    count_percent_error, lattice_bound, mc_integrate, read_events_csv, rescale_for_test, rmse, sample_ppp, split,
    test_nll, write_events_csv, CoordinateStyle, Homogeneous, Lattice, SyntheticR, LATTICE_SAFETY,
};
use sqnn_ppp::{
    ActivationKind, BaseMeasure, Domain, EventSet, Factor, FitConfig, HiddenLayer, HiddenTraining, Intensity,
    IntensityModel, Readout, StepSize, TOOL_VERSION,
};

use crate::config::{Coordinates, Loaded, ModelSection, Preset, Source, Truth};

pub type CmdResult<T> = Result<T, String>;

/// Lattices larger than this are refused.
pub const MAX_GRID_CELLS: usize = 100_000_000;

pub const REPORT_FORMAT: &str = "sqnn-ppp-fit-report";
pub const METRICS_FORMAT: &str = "sqnn-ppp-metrics";
pub const GRID_FORMAT: &str = "sqnn-ppp-grid";
pub const BENCH_FORMAT: &str = "sqnn-ppp-bench";

pub struct Ctx {
    pub loaded: Loaded,
    pub seed: u64,
    pub output: PathBuf,
}

impl Ctx {
    fn header(&self, format: &str) -> FileHeader {
        FileHeader::new(format, self.loaded.hash.clone(), self.seed)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CmdResult<PathBuf> {
        fs::create_dir_all(&self.output).map_err(|e| format!("cannot create '{}': {e}", self.output.display()))?;
        let path = self.output.join(name);
        let mut s = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        s.push('\n');
        fs::write(&path, s).map_err(|e| format!("cannot write '{}': {e}", path.display()))?;
        Ok(path)
    }

    fn write_events(&self, name: &str, events: &EventSet, style: CoordinateStyle, extra: &[String]) -> CmdResult<PathBuf> {
        fs::create_dir_all(&self.output).map_err(|e| format!("cannot create '{}': {e}", self.output.display()))?;
        let path = self.output.join(name);
        let mut comments = vec![
            format!("tool: {TOOL_VERSION}"),
            format!("config_hash: {}", self.loaded.hash),
            format!("seed: {}", self.seed),
        ];
        comments.extend_from_slice(extra);
        let file = fs::File::create(&path).map_err(|e| format!("cannot write '{}': {e}", path.display()))?;
        write_events_csv(std::io::BufWriter::new(file), events, style, &comments).map_err(|e| e.to_string())?;
        Ok(path)
    }
}

fn err<E: std::fmt::Display>(ctx: &str) -> impl Fn(E) -> String + '_ {
    move |e| format!("{ctx}: {e}")
}

fn read_events(path: &Path, domain: &Domain) -> CmdResult<EventSet> {
    let file = fs::File::open(path).map_err(|e| format!("cannot open '{}': {e}", path.display()))?;
    read_events_csv(std::io::BufReader::new(file), domain)
        .map(|(ev, _)| ev)
        .map_err(|e| format!("events '{}': {e}", path.display()))
}

fn load_model(path: &Path) -> CmdResult<(IntensityModel, String)> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read model '{}': {e}", path.display()))?;
    let file = ModelFile::from_json(&text).map_err(|e| format!("model '{}': {e}", path.display()))?;
    Ok((file.model, format!("{:x}", Sha256::digest(text.as_bytes()))))
}

/// Hidden layers drawn from the seed; readout and scale are set once events are known.
fn build_model(sec: &ModelSection, eps1: f64, seed: u64) -> CmdResult<IntensityModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measure = sec.measure.clone().ok_or("model.measure is required unless model.path is given")?;
    let readout = |n| Readout::identity(n, eps1, 1.0).map_err(err("model"));
    if sec.preset == Some(Preset::LogLinear) {
        if sec.time.is_some() || sec.width.is_some_and(|w| w != 1) {
            return Err("model.preset = \"log_linear\" is a single unit on a single factor".into());
        }
        let d = measure.dim();
        let h = HiddenLayer::new(ActivationKind::Exp, DMatrix::zeros(1, d), DVector::zeros(1)).map_err(err("model"))?;
        return IntensityModel::single(h, measure, readout(1)?).map_err(err("model"));
    }
    let act = sec.activation.clone().ok_or("model.activation is required")?;
    let n = sec.width.ok_or("model.width is required")?;
    let hidden = |act: ActivationKind, m: &BaseMeasure, ws: f64, bs: f64, rng: &mut ChaCha8Rng| {
        HiddenLayer::random(act, n, m.dim(), ws, bs, rng).map_err(err("model"))
    };
    let h = hidden(act, &measure, sec.weight_std, sec.bias_std, &mut rng)?;
    match &sec.time {
        None => IntensityModel::single(h, measure, readout(n)?).map_err(err("model")),
        Some(t) => {
            let ht = hidden(t.activation.clone(), &t.measure, t.weight_std, t.bias_std, &mut rng)?;
            let space = Factor::new(h, measure).map_err(err("model"))?;
            let time = Factor::new(ht, t.measure.clone()).map_err(err("model.time"))?;
            IntensityModel::product(space, time, readout(n)?).map_err(err("model"))
        }
    }
}

pub fn fit(ctx: &Ctx) -> CmdResult<()> {
    let cfgf = &ctx.loaded.config;
    let mut cfg: FitConfig = cfgf.fit.clone().ok_or("[fit] section is required")?;
    cfg.seed = ctx.seed;
    cfg.validate().map_err(err("fit"))?;
    let msec = cfgf.model.as_ref().ok_or("[model] section is required")?;
    let data = cfgf.data.as_ref().ok_or("[data] section is required")?;
    let events_path = ctx.loaded.input(&data.events, "data.events")?;

    let (mut model, fresh) = match &msec.path {
        Some(p) => (load_model(&ctx.loaded.input(p, "model.path")?)?.0, false),
        None => (build_model(msec, cfg.eps1, ctx.seed)?, true),
    };
    let domain = model.domain();
    let mut events = read_events(&events_path, &domain)?;
    if let Some(p) = data.split_p {
        let s = split(&events, p, ctx.seed).map_err(err("data.split_p"))?;
        ctx.write_events("test_events.csv", &s.removed, CoordinateStyle::Cartesian, &[format!("removed part of a split with p = {p}")])?;
        events = s.retained;
    }
    if fresh {
        if msec.normalize {
            model.normalize_features().map_err(err("model.normalize"))?;
        }
        let alpha = msec.alpha.unwrap_or_else(|| alpha_heuristic(events.len(), model.total_mass()));
        model = model.with_alpha_scaled(alpha).map_err(err("model.alpha"))?;
    } else if let Some(alpha) = msec.alpha {
        model = model.with_alpha_scaled(alpha / model.alpha()).map_err(err("model.alpha"))?;
    }

    let report = match cfg.hidden {
        HiddenTraining::Frozen => pgd_fit(&events, &model, &cfg),
        HiddenTraining::Train { .. } => train_hidden(&events, &model, &cfg),
    }
    .map_err(err("fit"))?;

    let model_path = ctx.output.join("model.json");
    fs::create_dir_all(&ctx.output).map_err(|e| format!("cannot create '{}': {e}", ctx.output.display()))?;
    ModelFile::new(report.model.clone(), ctx.loaded.hash.clone(), ctx.seed)
        .save(&model_path)
        .map_err(err("writing model"))?;
    let report_path = ctx.write_json("fit_report.json", &json!({ "header": ctx.header(REPORT_FORMAT), "report": &report }))?;
    println!(
        "fit: {} events, final objective {:.10}, {} steps{}; wrote {} and {}",
        events.len(),
        report.final_objective,
        report.steps_taken,
        if report.converged { " (converged)" } else { "" },
        model_path.display(),
        report_path.display()
    );
    Ok(())
}

pub fn eval(ctx: &Ctx) -> CmdResult<()> {
    let sec = ctx.loaded.config.eval.as_ref().ok_or("[eval] section is required")?;
    let (model, model_hash) = load_model(&ctx.loaded.input(&sec.model, "eval.model")?)?;
    let domain = model.domain();
    let events = read_events(&ctx.loaded.input(&sec.events, "eval.events")?, &domain)?;
    let test_model = match sec.p {
        Some(p) => rescale_for_test(&model, p).map_err(err("eval.p"))?,
        None => model.clone(),
    };
    let exact = test_nll(&events, &test_model).map_err(err("eval"))?;
    let mc = mc_integrate(&test_model, &domain, sec.mc_samples, ctx.seed).map_err(err("eval"))?;
    let nll_mc = exact.total - exact.integrated + mc.value;

    let mut warnings = Vec::new();
    let count_error = match sec.p {
        Some(p) => count_percent_error(&model, &events, p).map_err(|e| e.to_string()),
        None if events.is_empty() => Err("count percent error needs at least one test event".to_string()),
        None => Ok((exact.integrated - events.len() as f64).abs() / events.len() as f64),
    };
    let count_error = count_error.map_err(|e| warnings.push(format!("count percent error skipped: {e}"))).ok();

    let full = model.with_alpha_scaled(1.0 / sec.p.unwrap_or(1.0)).map_err(err("eval.p"))?;
    let rmse_value = match &sec.truth {
        None => {
            warnings.push("rmse skipped: no ground truth configured".into());
            None
        }
        Some(truth) => {
            let truth: Box<dyn Intensity> = match truth {
                Truth::RBenchmark => Box::new(SyntheticR::benchmark()),
                Truth::Model { path } => Box::new(load_model(&ctx.loaded.input(path, "eval.truth.path")?)?.0),
            };
            Some(rmse(&full, truth.as_ref(), &domain, sec.rmse_samples, ctx.seed).map_err(err("eval.truth"))?)
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let path = ctx.write_json(
        "metrics.json",
        &json!({
            "header": ctx.header(METRICS_FORMAT),
            "model_hash": model_hash,
            "n_events": events.len(),
            "nll_exact": exact,
            "nll_mc": { "total": nll_mc, "per_event": nll_mc / events.len().max(1) as f64, "integrated": mc },
            "count_percent_error": count_error,
            "rmse": rmse_value,
            "warnings": warnings,
        }),
    )?;
    println!(
        "eval: {} events, NLL exact {:.6}, NLL MC {:.6} (± {:.2e}); wrote {}",
        events.len(),
        exact.total,
        nll_mc,
        mc.stderr,
        path.display()
    );
    Ok(())
}

pub fn simulate(ctx: &Ctx) -> CmdResult<()> {
    let sec = ctx.loaded.config.simulate.as_ref().ok_or("[simulate] section is required")?;
    let (lambda, domain, default_max, label): (Box<dyn Intensity>, Domain, Option<f64>, String) = match &sec.source {
        Source::Homogeneous { rate, domain } => {
            let h = Homogeneous::new(*rate, domain.clone()).map_err(err("simulate.source"))?;
            (Box::new(h), domain.clone(), Some(*rate), format!("homogeneous rate {rate}"))
        }
        Source::Model { path } => {
            let (m, hash) = load_model(&ctx.loaded.input(path, "simulate.source.path")?)?;
            let d = m.domain();
            (Box::new(m), d, None, format!("model {hash}"))
        }
        Source::RBenchmark => {
            let r = SyntheticR::benchmark();
            let d = r.domain();
            let max = r.lambda_max();
            (Box::new(r), d, Some(max), "r benchmark".into())
        }
    };
    let lambda_max = match (sec.lambda_max, default_max) {
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => lattice_bound(lambda.as_ref(), &domain, sec.lattice_resolution).map_err(err("simulate"))?,
    };
    let events = sample_ppp(lambda.as_ref(), lambda_max, &domain, ctx.seed).map_err(err("simulate"))?;
    let style = match sec.coordinates {
        Coordinates::Cartesian => CoordinateStyle::Cartesian,
        Coordinates::LonLat => CoordinateStyle::LonLatDegrees,
    };
    let path = ctx.write_events(
        "events.csv",
        &events,
        style,
        &[format!("source: {label}"), format!("lambda_max: {lambda_max}"), format!("count: {}", events.len())],
    )?;
    println!("simulate: {} events; wrote {}", events.len(), path.display());
    Ok(())
}

pub fn grid(ctx: &Ctx) -> CmdResult<()> {
    let sec = ctx.loaded.config.grid.as_ref().ok_or("[grid] section is required")?;
    let (model, model_hash) = load_model(&ctx.loaded.input(&sec.model, "grid.model")?)?;
    let domain = model.domain();
    let lattice = Lattice::new(&domain, sec.resolution).map_err(err("grid"))?;
    let shape = lattice.shape();
    match lattice.checked_len() {
        Some(n) if n <= MAX_GRID_CELLS => {}
        _ => {
            return Err(format!(
                "grid.resolution: lattice {shape:?} exceeds {MAX_GRID_CELLS} cells"
            ))
        }
    }
    let values = lattice.evaluate(&model).map_err(err("grid"))?;
    let max = values.iter().cloned().fold(0.0, f64::max);
    let path = ctx.write_json(
        "grid.json",
        &json!({
            "header": ctx.header(GRID_FORMAT),
            "model_hash": model_hash,
            "domain": domain,
            "shape": shape,
            "max": max,
            "lambda_max_bound": LATTICE_SAFETY * max,
            "values": values,
        }),
    )?;
    println!("grid: {} points, max {max:.6}; wrote {}", values.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchRun {
    n_events: usize,
    /// Median over repeats.
    wall_clock_seconds: f64,
    seconds_per_step: f64,
    feature_seconds: f64,
    repeats: Vec<f64>,
}

pub fn bench(ctx: &Ctx) -> CmdResult<()> {
    let sec = ctx.loaded.config.bench.as_ref().ok_or("[bench] section is required")?;
    if sec.width == 0 || sec.dim == 0 || sec.repeats == 0 {
        return Err("bench: width, dim and repeats must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let measure = BaseMeasure::LebesgueRect { a: 0.0, b: 1.0, d: sec.dim };
    let hidden = HiddenLayer::random(ActivationKind::Exp, sec.width, sec.dim, 1.0, 0.3, &mut rng).map_err(err("bench"))?;
    let readout = Readout::identity(sec.width, 0.1, 1.0).map_err(err("bench"))?;
    let model = IntensityModel::single(hidden, measure, readout).map_err(err("bench"))?;
    model.gram().map_err(err("bench"))?;
    let mut cfg = FitConfig::new(0.1, 0.0, sec.steps);
    cfg.step_size = StepSize::Lipschitz;

    let mut runs = Vec::new();
    for &size in &sec.sizes {
        let pts: Vec<f64> = (0..size * sec.dim).map(|_| rng.random::<f64>()).collect();
        let events = EventSet::new(pts, model.domain()).map_err(err("bench"))?;
        let mut reps = Vec::new();
        let mut feat = Vec::new();
        for _ in 0..sec.repeats {
            let t = Instant::now();
            let r = pgd_fit(&events, &model, &cfg).map_err(err("bench"))?;
            reps.push(t.elapsed().as_secs_f64());
            feat.push(r.feature_seconds);
        }
        let wall = median(&reps);
        runs.push(BenchRun {
            n_events: size,
            wall_clock_seconds: wall,
            seconds_per_step: wall / sec.steps.max(1) as f64,
            feature_seconds: median(&feat),
            repeats: reps,
        });
    }
    let doubling: Vec<f64> = runs
        .windows(2)
        .filter(|w| w[0].n_events > 0 && w[1].n_events == 2 * w[0].n_events)
        .map(|w| w[1].wall_clock_seconds / w[0].wall_clock_seconds)
        .collect();
    // least-squares slope of log time against log N over nonzero sizes
    let pts: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.n_events > 0 && r.wall_clock_seconds > 0.0)
        .map(|r| ((r.n_events as f64).ln(), r.wall_clock_seconds.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let path = ctx.write_json(
        "bench.json",
        &json!({
            "header": ctx.header(BENCH_FORMAT),
            "width": sec.width,
            "dim": sec.dim,
            "steps": sec.steps,
            "threads": rayon::current_num_threads(),
            "runs": runs,
            "doubling_ratios": doubling,
            "log_log_slope": slope,
        }),
    )?;
    for r in &runs {
        println!("bench: N = {:>8}  {:.4} s ({:.4} s/step)", r.n_events, r.wall_clock_seconds, r.seconds_per_step);
    }
    println!("bench: wrote {}", path.display());
    Ok(())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

