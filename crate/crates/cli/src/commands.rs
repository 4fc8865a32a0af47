//! Subcommand implementations. Results go to stdout and the output files;
//! timings go to stderr only, so reruns produce identical stdout and files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use snmnn::config::KeyValues;
use snmnn::fixtures::{self, FixtureSpec};
use snmnn::flightlog::{
    build_dataset, one_step_samples, FlightLog, ParseOptions, Sample, SplitConfig,
};
use snmnn::fusion::{self, FusionConfig, FusionReport, PositionSource, REPORT_HEADER};
use snmnn::geodesy::{self, EcefCoord, EnuCoord, GeodeticCoord};
use snmnn::par::with_jobs;
use snmnn::trainer::{self, TrainConfig, TrainError};
use snmnn::uav_sim::{generate_flight, FlightConfig};
use snmnn::{Execution, MnnNetwork};

use crate::args::*;
use crate::error::{format_error, log_error, CliError};

type Result<T> = std::result::Result<T, CliError>;

const SIMULATE_KEYS: [&str; 12] = [
    "plan",
    "duration_s",
    "radius_m",
    "side_m",
    "seed",
    "noise_sigma_m",
    "speed_mps",
    "altitude_m",
    "gust_force_n",
    "gust_torque_nm",
    "log_rate_hz",
    "center_m",
];
const TRAIN_EXTRA_KEYS: [&str; 2] = ["split_seed", "hidden"];
const FUSE_EXTRA_KEYS: [&str; 3] = ["noise_sigma", "noise_seed", "seeds"];
const EVALUATE_KEYS: [&str; 1] = ["split_seed"];

const DEFAULT_HIDDEN: usize = 100;
const DEFAULT_NOISE_SIGMA: f64 = 0.5;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => with_jobs(a.common.jobs, || simulate(&a)),
        Command::Train(a) => with_jobs(a.common.jobs, || train(&a)),
        Command::Predict(a) => predict(&a),
        Command::Fuse(a) => with_jobs(a.common.jobs, || fuse(&a)),
        Command::Evaluate(a) => with_jobs(a.common.jobs, || evaluate(&a)),
        Command::Convert(a) => convert(&a),
        Command::Plotdata(a) => plotdata(&a),
    }
}

/// Config file entries restricted to `allowed`, ready for flag overrides.
fn load_config(common: &Common, allowed: &[&str]) -> Result<KeyValues> {
    let kv = match &common.config {
        Some(path) => {
            require_exists(path)?;
            KeyValues::read_file(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => KeyValues::default(),
    };
    kv.check_keys(allowed)?;
    Ok(kv)
}

fn set_opt<T: ToString>(kv: &mut KeyValues, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        kv.set(key, v.to_string());
    }
}

fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_log(path: &Path) -> Result<FlightLog> {
    require_exists(path)?;
    FlightLog::read_file(path, ParseOptions::default()).map_err(|e| log_error(path, e))
}

fn read_model(path: &Path) -> Result<MnnNetwork> {
    require_exists(path)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    MnnNetwork::from_bytes(&bytes).map_err(|e| format_error(path, e))
}

fn suite_specs(suite: Suite) -> Vec<FixtureSpec> {
    match suite {
        Suite::Train => fixtures::suite(),
        Suite::Stress => fixtures::stress_suite(),
        Suite::Replay => fixtures::replay_suite(),
    }
}

/// Logs named by `--data` (directories expand to their `.csv` files in name
/// order), or the selected fixture set, generated if missing.
fn load_logs(data: &DataArgs) -> Result<Vec<FlightLog>> {
    if data.data.is_empty() {
        let specs = suite_specs(data.suite);
        return Ok(fixtures::load_or_generate(
            &data.fixtures,
            &specs,
            Execution::default(),
        )?);
    }
    let mut files = Vec::new();
    for path in &data.data {
        require_exists(path)?;
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Data(format!("{}: no .csv logs", path.display())));
            }
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    Execution::default()
        .map_slice(&files, |p| read_log(p))
        .into_iter()
        .collect()
}

fn sequences(segments: &[snmnn::flightlog::Segment]) -> Vec<Vec<Sample>> {
    segments.iter().map(|s| s.samples.clone()).collect()
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    if a.suite {
        let specs: Vec<FixtureSpec> = fixtures::suite()
            .into_iter()
            .chain(fixtures::stress_suite())
            .chain(fixtures::replay_suite())
            .collect();
        let logs = fixtures::generate_all(&specs, Execution::default())?;
        for (spec, log) in specs.iter().zip(&logs) {
            let path = a.fixtures.join(spec.file_name());
            write_file(&path, log.to_csv())?;
            println!(
                "{}: {} rows, {} s",
                path.display(),
                log.len(),
                log.duration()
            );
        }
    } else {
        let mut kv = load_config(&a.common, &SIMULATE_KEYS)?;
        set_opt(&mut kv, "plan", &a.plan);
        set_opt(&mut kv, "duration_s", &a.duration);
        set_opt(&mut kv, "seed", &a.seed);
        set_opt(&mut kv, "radius_m", &a.radius);
        set_opt(&mut kv, "side_m", &a.side);
        set_opt(&mut kv, "speed_mps", &a.speed);
        set_opt(&mut kv, "noise_sigma_m", &a.noise);
        let mut cfg = FlightConfig::default();
        cfg.apply(&kv)?;
        cfg.validate()?;
        let log = generate_flight(&cfg)?;
        let path = a
            .out
            .as_deref()
            .expect("clap requires --out without --suite");
        write_file(path, log.to_csv())?;
        println!(
            "{}: {} rows, {} s",
            path.display(),
            log.len(),
            log.duration()
        );
    }
    eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let allowed: Vec<&str> = trainer::CONFIG_KEYS
        .iter()
        .chain(&TRAIN_EXTRA_KEYS)
        .copied()
        .collect();
    let mut kv = load_config(&a.common, &allowed)?;
    set_opt(&mut kv, "epochs", &a.epochs);
    set_opt(&mut kv, "eta", &a.eta);
    set_opt(&mut kv, "gamma", &a.gamma);
    set_opt(&mut kv, "seed", &a.seed);
    set_opt(&mut kv, "hidden", &a.hidden);
    set_opt(&mut kv, "split_seed", &a.data.split_seed);
    if a.no_spectral_norm {
        kv.set("renorm_every", "never");
    }
    let mut cfg = TrainConfig::default();
    cfg.apply(&kv)?;
    cfg.validate()?;
    let hidden = kv.parse_value::<usize>("hidden")?.unwrap_or(DEFAULT_HIDDEN);
    let split_seed = kv.parse_value::<u64>("split_seed")?.unwrap_or(0);
    if hidden == 0 {
        return Err(CliError::Usage("hidden must be at least 1".into()));
    }

    let started = Instant::now();
    let logs = load_logs(&a.data)?;
    let ds = build_dataset(&logs, SplitConfig::default(), split_seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let train_seqs = sequences(&ds.train);
    let test_seqs = sequences(&ds.test);
    let constraint = if cfg.renorm == trainer::Renormalize::Never {
        "unconstrained"
    } else {
        "spectral-norm"
    };
    let dims = [snmnn::mnn::INPUT_DIM, hidden, 3];

    match trainer::train_new(&dims, &train_seqs, &cfg) {
        Ok((net, report)) => {
            let rmse_test = trainer::evaluate(&net, &test_seqs, Execution::default());
            write_file(&a.out, net.to_bytes())?;
            let mut summary = String::new();
            writeln!(summary, "constraint={constraint}").unwrap();
            writeln!(summary, "epochs={}", report.per_epoch_loss.len()).unwrap();
            writeln!(
                summary,
                "train_samples={}",
                train_seqs.iter().map(Vec::len).sum::<usize>()
            )
            .unwrap();
            writeln!(
                summary,
                "test_samples={}",
                test_seqs.iter().map(Vec::len).sum::<usize>()
            )
            .unwrap();
            writeln!(
                summary,
                "final_loss={}",
                report.per_epoch_loss.last().copied().unwrap_or(f64::NAN)
            )
            .unwrap();
            writeln!(summary, "final_rmse_train={}", report.final_rmse_train).unwrap();
            writeln!(summary, "rmse_test={rmse_test}").unwrap();
            if let Some(path) = &a.report {
                write_file(path, with_summary(report.loss_table(), &summary))?;
            }
            print!("{summary}");
            eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
            Ok(())
        }
        Err(e @ TrainError::NonFinite { .. }) => {
            if let Some(path) = &a.report {
                let summary = format!("constraint={constraint}\nstatus=diverged\nerror={e}\n");
                write_file(path, with_summary("epoch,loss\n".into(), &summary))?;
            }
            println!("constraint={constraint}\nstatus=diverged");
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Appends `key=value` lines as `# ` comments after a table.
fn with_summary(mut table: String, summary: &str) -> String {
    table.push_str("# summary\n");
    for line in summary.lines() {
        table.push_str("# ");
        table.push_str(line);
        table.push('\n');
    }
    table
}

fn predict(a: &PredictArgs) -> Result<()> {
    let mut net = read_model(&a.model)?;
    let log = read_log(&a.log)?;
    let samples = one_step_samples(&log);
    net.reset_memory();
    let mut out = String::from("t,x,y,z\n");
    let mut se = 0.0;
    let mut prev = log.rows()[0].position;
    for (row, s) in log.rows()[1..].iter().zip(&samples) {
        let mut input = s.input;
        if a.free_running {
            input.prev_position = prev;
        }
        let y = net.forward_input(&input)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(CliError::Numerical(format!(
                "non-finite prediction at t = {}",
                row.t
            )));
        }
        prev = [y.x, y.y, y.z];
        se += (y - s.target).norm_squared();
        writeln!(out, "{},{},{},{}", row.t, y.x, y.y, y.z).unwrap();
    }
    write_file(&a.out, out)?;
    println!("samples={}", samples.len());
    println!("rmse={}", (se / samples.len() as f64).sqrt());
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn fuse(a: &FuseArgs) -> Result<()> {
    let allowed: Vec<&str> = fusion::CONFIG_KEYS
        .iter()
        .chain(&FUSE_EXTRA_KEYS)
        .copied()
        .collect();
    let mut kv = load_config(&a.common, &allowed)?;
    set_opt(&mut kv, "feedback", &a.feedback);
    set_opt(&mut kv, "sigma_gps", &a.sigma_gps);
    set_opt(&mut kv, "q_accel", &a.q_accel);
    set_opt(&mut kv, "gps_every", &a.gps_every);
    set_opt(&mut kv, "gate_sigma", &a.gate_sigma);
    set_opt(&mut kv, "origin", &a.origin);
    set_opt(&mut kv, "noise_sigma", &a.noise_sigma);
    set_opt(&mut kv, "noise_seed", &a.noise_seed);
    set_opt(&mut kv, "seeds", &a.seeds);
    let mut cfg = FusionConfig::default();
    cfg.apply(&kv)?;
    cfg.validate()?;
    let noise_sigma = kv
        .parse_value::<f64>("noise_sigma")?
        .unwrap_or(DEFAULT_NOISE_SIGMA);
    let noise_seed = kv.parse_value::<u64>("noise_seed")?.unwrap_or(0);
    let seeds = kv.parse_value::<usize>("seeds")?.unwrap_or(1);
    if seeds == 0 {
        return Err(CliError::Usage("seeds must be at least 1".into()));
    }
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(CliError::Usage("noise_sigma must be positive".into()));
    }
    let network = match a.model.as_str() {
        "oracle" | "noise" => None,
        path => Some(read_model(Path::new(path))?),
    };
    if seeds > 1 && a.model != "noise" {
        return Err(CliError::Usage(
            "--seeds applies to the noise source only".into(),
        ));
    }
    let log = read_log(&a.log)?;

    let started = Instant::now();
    let source = |i: usize| match (&network, a.model.as_str()) {
        (Some(net), _) => PositionSource::Network(net),
        (None, "oracle") => PositionSource::Oracle,
        _ => PositionSource::WhiteNoise {
            sigma: noise_sigma,
            seed: noise_seed + i as u64,
        },
    };
    let reports: Vec<FusionReport> = Execution::default()
        .map(seeds, |i| fusion::replay(&log, source(i), &cfg))
        .into_iter()
        .collect::<std::result::Result<_, _>>()?;
    if let Some(r) = reports
        .iter()
        .find(|r| !(r.rmse_pred.is_finite() && r.rmse_fused.is_finite()))
    {
        return Err(CliError::Numerical(format!(
            "non-finite RMSE (pred {}, fused {})",
            r.rmse_pred, r.rmse_fused
        )));
    }

    if let [report] = reports.as_slice() {
        if let Some(path) = &a.out {
            write_file(path, report.to_csv())?;
        }
        println!("rmse_pred={}", report.rmse_pred);
        println!("rmse_fused={}", report.rmse_fused);
        println!("rejected_count={}", report.rejected_count());
    } else {
        let mut table = String::from("seed,rmse_pred,rmse_fused,rejected_count\n");
        for (i, r) in reports.iter().enumerate() {
            writeln!(
                table,
                "{},{},{},{}",
                noise_seed + i as u64,
                r.rmse_pred,
                r.rmse_fused,
                r.rejected_count()
            )
            .unwrap();
        }
        let mut pred: Vec<f64> = reports.iter().map(|r| r.rmse_pred).collect();
        let mut fused: Vec<f64> = reports.iter().map(|r| r.rmse_fused).collect();
        let summary = format!(
            "seeds={seeds}\nmedian_rmse_pred={}\nmedian_rmse_fused={}\n",
            median(&mut pred),
            median(&mut fused)
        );
        if let Some(path) = &a.out {
            write_file(path, with_summary(table, &summary))?;
        }
        print!("{summary}");
    }
    eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut kv = load_config(&a.common, &EVALUATE_KEYS)?;
    set_opt(&mut kv, "split_seed", &a.data.split_seed);
    let split_seed = kv.parse_value::<u64>("split_seed")?.unwrap_or(0);
    let network = match a.model.as_str() {
        "oracle" => None,
        path => Some(read_model(Path::new(path))?),
    };
    let logs = load_logs(&a.data)?;
    let seqs: Vec<Vec<Sample>> = match a.set {
        EvalSet::All => logs.iter().map(one_step_samples).collect(),
        set => {
            let ds = build_dataset(&logs, SplitConfig::default(), split_seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            sequences(if set == EvalSet::Train {
                &ds.train
            } else {
                &ds.test
            })
        }
    };
    let samples: usize = seqs.iter().map(Vec::len).sum();
    let rmse = match &network {
        Some(net) => trainer::evaluate(net, &seqs, Execution::default()),
        None => {
            let se: f64 = seqs
                .iter()
                .flatten()
                .map(|s| {
                    // the oracle predicts the logged target itself
                    let prediction = s.target;
                    (prediction - s.target).norm_squared()
                })
                .sum();
            (se / samples as f64).sqrt()
        }
    };
    if !rmse.is_finite() {
        return Err(CliError::Numerical(format!("non-finite RMSE {rmse}")));
    }
    let set = match a.set {
        EvalSet::Train => "train",
        EvalSet::Test => "test",
        EvalSet::All => "all",
    };
    println!("set={set}");
    println!("samples={samples}");
    println!("rmse={rmse}");
    Ok(())
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_triple(text: &str, what: &str) -> Result<[f64; 3]> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{what} must be three comma-separated numbers")))?;
    <[f64; 3]>::try_from(vals)
        .map_err(|_| CliError::Usage(format!("{what} must be three comma-separated numbers")))
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let o = parse_triple(&a.origin, "origin")?;
    let origin = GeodeticCoord::from_degrees(o[0], o[1], o[2])?;
    let p = [a.point[0], a.point[1], a.point[2]];
    if !p.iter().all(|v| v.is_finite()) {
        return Err(CliError::Usage("coordinates must be finite".into()));
    }
    let ecef = match a.from {
        Frame::Enu => geodesy::enu_to_ecef(&EnuCoord::new(p[0], p[1], p[2]), &origin),
        Frame::Ecef => EcefCoord::new(p[0], p[1], p[2]),
        Frame::Geodetic => {
            geodesy::geodetic_to_ecef(&GeodeticCoord::from_degrees(p[0], p[1], p[2])?)
        }
    };
    let out: [f64; 3] = match a.to {
        Frame::Enu => {
            let e = geodesy::ecef_to_enu(&ecef, &origin);
            [e.e, e.n, e.u]
        }
        Frame::Ecef => ecef.to_vector().into(),
        Frame::Geodetic => {
            let g = geodesy::ecef_to_geodetic(&ecef)?;
            [g.lat_deg(), g.lon_deg(), g.z_alt]
        }
    };
    let text: Vec<String> = out.iter().map(|v| format_sig(*v, 12)).collect();
    println!("{}", text.join(" "));
    Ok(())
}

fn plotdata(a: &PlotdataArgs) -> Result<()> {
    require_exists(&a.input)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let header = text.lines().next().unwrap_or_default();
    if header != "epoch,loss" && header != REPORT_HEADER {
        return Err(CliError::Data(format!(
            "{}: not a train or fuse report (header `{header}`)",
            a.input.display()
        )));
    }
    let mut table = String::with_capacity(text.len());
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        table.push_str(line);
        table.push('\n');
    }
    match &a.out {
        Some(path) => write_file(path, table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
