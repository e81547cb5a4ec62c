use std::fs;
use std::path::Path;

use inthedge_core::backtest::{run_backtest, HedgeTable, DEFAULT_BINS};
use inthedge_core::calibration::{
    calibrate, split_train_test, tile, Bound, PricePath, DEFAULT_EPSILON,
};
use inthedge_core::call_analytic::{closed_form, CallOneStepParams};
use inthedge_core::grid::{grid_backward_price, GridSpec, GridTable};
use inthedge_core::real_oracle::{check_convergence, default_domain_cap, real_backward_price};
use inthedge_core::{backward_price, Error, PiecewiseAffine, PricingTable, SupportModel};
use serde::Serialize;

use crate::args::{Backend, BacktestArgs, CalibrateArgs, Mode, PlotArgs, PriceArgs, VerifyArgs};
use crate::config::{pick, require, Config};
use crate::payoff::PayoffSpec;
use crate::CliError;

const DEFAULT_S0_MAX: f64 = 1000.0;
const DEFAULT_N_LIST: [u64; 6] = [1, 2, 5, 10, 50, 100];

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<SupportModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Either backend's table, as loaded from disk.
enum Table {
    Exact(PricingTable),
    Grid(GridTable),
}

impl Table {
    fn load(path: &Path) -> Result<Self, CliError> {
        if path.is_dir() {
            return Ok(Table::Grid(GridTable::read(path)?));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let table = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(Table::Exact(table))
    }

    fn hedge(&self) -> &dyn HedgeTable {
        match self {
            Table::Exact(t) => t,
            Table::Grid(t) => t,
        }
    }

    fn price(&self, t: usize, x: f64) -> f64 {
        match self {
            Table::Exact(table) => table.prices[t].value_at(x),
            Table::Grid(table) => table.price_at(t, x),
        }
    }

    fn unit_payoff(&self) -> PiecewiseAffine {
        match self {
            Table::Exact(t) => t.unit_payoff(),
            Table::Grid(t) => t.payoff.clone(),
        }
    }
}

pub fn calibrate_cmd(args: CalibrateArgs, config: &Config) -> Result<(), CliError> {
    let period_length = require(args.period_length, config.period_length, "period-length")?;
    let mode = pick(args.mode, config.mode, Mode::PerStep);
    let epsilon = pick(args.epsilon, config.epsilon, DEFAULT_EPSILON);
    let strict = args.strict || config.strict.unwrap_or(false);

    let path = PricePath::from_csv(&args.csv)?;
    let train = tile(&path, period_length)?;
    let model = calibrate(&train, mode.into(), epsilon, strict)?;
    for a in &model.adjusted_steps {
        let (name, value) = match a.bound {
            Bound::KDown => ("k_down", model.k_down[a.step]),
            Bound::KUp => ("k_up", model.k_up[a.step]),
        };
        eprintln!(
            "warning: step {}: estimated {name} = {} replaced by {value}",
            a.step, a.estimate
        );
    }
    write_json(&args.out, &model)
}

pub fn price_cmd(args: PriceArgs, config: &Config) -> Result<(), CliError> {
    let model = read_model(&args.model)?;
    let spec = PayoffSpec::resolve(&args.payoff, config)?;
    let payoff = spec.build()?;
    let n = pick(args.n, config.n, 1);
    let backend = pick(args.backend, config.backend, Backend::Exact);

    let table = match backend {
        Backend::Exact => {
            let table = backward_price(&payoff, n, &model)?;
            write_json(&args.out, &table)?;
            Table::Exact(table)
        }
        Backend::Grid => {
            let grid = GridSpec::new(
                pick(args.step, config.step, GridSpec::DEFAULT_STEP),
                pick(args.s0_max, config.s0_max, DEFAULT_S0_MAX),
            )?;
            let table = grid_backward_price(&payoff, n, &model, &grid)?;
            table
                .write(&args.out)
                .map_err(|e| CliError::Input(format!("{}: {e}", args.out.display())))?;
            Table::Grid(table)
        }
    };

    if let Some(s) = args.spot {
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::Input(format!("--spot must be positive, got {s}")));
        }
        let theta = if model.horizon() > 0 {
            table.hedge().theta(0, s).to_string()
        } else {
            "none".into()
        };
        println!("price at {s}: {} (shares {theta})", table.price(0, s));
        if let (Some(strike), 1) = (spec.call_strike(), model.horizon()) {
            let (k_down, k_up) = model.step(0);
            let p = CallOneStepParams::new(strike, n, k_down, k_up, s)?;
            let (value, theta) = closed_form(&p);
            println!("closed form: {value} (shares {theta})");
        }
    }
    Ok(())
}

pub fn verify_cmd(args: VerifyArgs, config: &Config) -> Result<(), CliError> {
    let model = read_model(&args.model)?;
    let payoff = PayoffSpec::resolve(&args.payoff, config)?.build()?;
    let n_list = pick(args.n_list, config.n_list.clone(), DEFAULT_N_LIST.to_vec());
    let cap = match args.cap.or(config.cap) {
        Some(cap) => cap,
        None => default_domain_cap(pick(args.s0_max, config.s0_max, DEFAULT_S0_MAX), &model),
    };
    let report = check_convergence(&payoff, &model, &n_list, cap)?;
    println!(
        "max lower violation {:e}, max upper violation {:e}",
        report.max_lower_violation, report.max_upper_violation
    );
    write_json(&args.out, &report)
}

pub fn backtest_cmd(args: BacktestArgs, config: &Config) -> Result<(), CliError> {
    let table = Table::load(&args.table)?;
    let hedge = table.hedge();
    let bins = pick(args.bins, config.bins, DEFAULT_BINS);
    let path = PricePath::from_csv(&args.csv)?;
    let period_length = hedge.horizon() + 1;
    let test = match args.train_fraction.or(config.train_fraction) {
        Some(f) => split_train_test(&path, period_length, f)?.1,
        None => tile(&path, period_length)?,
    };
    let report = run_backtest(hedge, &test, bins)?;
    write_json(&args.out, &report)?;
    let histogram = args
        .histogram_out
        .unwrap_or_else(|| args.out.with_extension("histogram.csv"));
    report
        .write_histogram_csv(&histogram)
        .map_err(|e| CliError::Input(format!("{}: {e}", histogram.display())))?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4e}"));
    println!(
        "{} periods, {} breached the support; eps_T mean {} min {} max {}",
        report.all.count,
        report.breached,
        show(report.all.mean),
        show(report.all.min),
        show(report.all.max)
    );
    Ok(())
}

pub fn plotdata_cmd(args: PlotArgs, config: &Config) -> Result<(), CliError> {
    let date = pick(args.date, config.date, 0);
    let x_min = pick(args.x_min, config.x_min, 0.0);
    let x_max = pick(args.x_max, config.x_max, 1000.0);
    let points = pick(args.points, config.points, 1001);
    if !(x_min >= 0.0 && x_min < x_max && x_max.is_finite()) {
        return Err(CliError::Input(format!(
            "need 0 <= x_min < x_max, got {x_min} and {x_max}"
        )));
    }
    if points < 2 {
        return Err(CliError::Input("--points must be at least 2".into()));
    }

    let (tables, model, payoff) = match &args.table {
        Some(path) => {
            let table = Table::load(path)?;
            let model = table.hedge().model().clone();
            let payoff = table.unit_payoff();
            let n = table.hedge().n_units();
            (vec![(n, table)], model, payoff)
        }
        None => {
            let model_path = args
                .model
                .as_ref()
                .ok_or_else(|| CliError::Input("either --table or --model is required".into()))?;
            let model = read_model(model_path)?;
            let payoff = PayoffSpec::resolve(&args.payoff, config)?.build()?;
            let n_list = require(args.n_list.clone(), config.n_list.clone(), "n-list")?;
            if n_list.is_empty() {
                return Err(CliError::Input("--n-list must not be empty".into()));
            }
            let mut tables = Vec::with_capacity(n_list.len());
            for n in n_list {
                tables.push((n, Table::Exact(backward_price(&payoff, n, &model)?)));
            }
            (tables, model, payoff)
        }
    };
    if date > model.horizon() {
        return Err(CliError::Input(format!(
            "--date {date} is past the horizon {}",
            model.horizon()
        )));
    }
    let real = match real_backward_price(&payoff, &model) {
        Ok(prices) => Some(prices[date].clone()),
        Err(Error::Unsupported(msg)) => {
            eprintln!("warning: real-strategy column left empty: {msg}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let mut w = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.out.display())))?;
    let mut header = vec!["x".to_string()];
    header.extend(tables.iter().map(|(n, _)| format!("n={n}")));
    header.push("real".into());
    w.write_record(&header).map_err(Error::from)?;
    for i in 0..points {
        let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
        let mut row = vec![x.to_string()];
        row.extend(
            tables
                .iter()
                .map(|(n, t)| (t.price(date, x) / *n as f64).to_string()),
        );
        row.push(
            real.as_ref()
                .map(|g| g.value_at(x).to_string())
                .unwrap_or_default(),
        );
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()
        .map_err(|e| CliError::Input(format!("{}: {e}", args.out.display())))?;
    Ok(())
}
