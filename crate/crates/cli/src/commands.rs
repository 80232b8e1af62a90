use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use stochbs_core::backtest::{
    load_predictions, load_quotes, report_from_predictions, run_backtest, synthetic_fixture,
    write_features_csv, write_quotes, ClosedFormPricer, ComparisonSummary, ExtendedDynamics,
    PassthroughPricer, PdePricer, Pricer, VolSource,
};
use stochbs_core::dynamics::{simulate_paths, SimulationSpec};
use stochbs_core::market_data::{
    load_price_series, write_price_series, PriceFormat, DEFAULT_TRADING_DAYS,
};
use stochbs_core::mc::{mc_price, mc_vs_pde_report, EngineInputs, McSettings};
use stochbs_core::pde::{bs_closed_form, linspace, PdeSolver};
use stochbs_core::{BacktestReport, MarketQuote, OptionKind, PathState, PriceSeries, Scheme};

use crate::args::{Cli, Command, DataArgs, SimulateArgs, SurfaceArgs};
use crate::config::{PricerChoice, RunConfig, SurfaceMode};
use crate::CliError;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
        cfg.fixture.seed = seed;
    }
    if cli.common.out.is_some() {
        cfg.out.clone_from(&cli.common.out);
    }
    let json = cli.common.json;
    match cli.command {
        Command::Price(a) => {
            cfg.apply(&a.model);
            cfg.validate()?;
            price(&cfg, json)
        }
        Command::Surface(a) => {
            cfg.apply(&a.model);
            apply_surface(&mut cfg, &a);
            cfg.validate()?;
            surface(&cfg, json)
        }
        Command::Simulate(a) => {
            cfg.apply(&a.model);
            if let Some(n) = a.n_paths {
                cfg.mc.n_paths = n;
            }
            if a.steps.is_some() {
                cfg.mc.steps = a.steps;
            }
            cfg.validate()?;
            simulate(&cfg, &a, json)
        }
        Command::Backtest(a) => {
            cfg.apply(&a.model);
            apply_data(&mut cfg, &a.data);
            if let Some(p) = a.pricer {
                cfg.backtest.pricer = p;
            }
            cfg.validate()?;
            backtest(&cfg, a.features.as_deref(), json)
        }
        Command::Compare(a) => {
            cfg.apply(&a.model);
            apply_data(&mut cfg, &a.data);
            if a.predictions.is_some() {
                cfg.data.predictions = a.predictions;
            }
            cfg.validate()?;
            compare(&cfg, json)
        }
    }
}

fn apply_surface(cfg: &mut RunConfig, a: &SurfaceArgs) {
    let s = &mut cfg.surface;
    if let Some(m) = a.mode {
        s.mode = m;
    }
    s.k_min = a.k_min.unwrap_or(s.k_min);
    s.k_max = a.k_max.unwrap_or(s.k_max);
    s.k_step = a.k_step.unwrap_or(s.k_step);
    if a.snapshot_every.is_some() {
        s.snapshot_every = a.snapshot_every;
    }
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if a.prices.is_some() {
        cfg.data.prices.clone_from(&a.prices);
    }
    if a.quotes.is_some() {
        cfg.data.quotes.clone_from(&a.quotes);
    }
    if let Some(w) = a.vol_window {
        cfg.backtest.vol_window = w;
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json_file(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PriceRecord {
    kind: OptionKind,
    strike: f64,
    maturity: f64,
    s0: f64,
    sigma0: f64,
    r0: f64,
    scheme: Scheme,
    s_max: f64,
    n_s: usize,
    n_t: usize,
    n_sigma: usize,
    n_r: usize,
    price: f64,
    /// Only on a single-node (σ, r) grid, where it is the exact answer.
    closed_form: Option<f64>,
}

fn price(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let contract = cfg.contract()?;
    let grid = cfg.grid()?;
    let m = &cfg.market;
    let surface =
        PdeSolver::new(cfg.scheme).solve(&contract, &grid, &cfg.heston(), &cfg.vasicek())?;
    let value = surface.lookup(m.s0, m.sigma0, m.r0)?;
    let closed_form = if cfg.is_degenerate() {
        Some(bs_closed_form(&contract, m.s0, m.sigma0, m.r0)?)
    } else {
        None
    };
    let record = PriceRecord {
        kind: contract.kind,
        strike: contract.strike,
        maturity: contract.maturity,
        s0: m.s0,
        sigma0: m.sigma0,
        r0: m.r0,
        scheme: cfg.scheme,
        s_max: grid.s_max,
        n_s: grid.n_s,
        n_t: grid.n_t,
        n_sigma: grid.n_sigma(),
        n_r: grid.n_r(),
        price: value,
        closed_form,
    };
    if let Some(out) = &cfg.out {
        write_json_file(out, &record)?;
    }
    if json {
        print_json(&record)
    } else {
        print!("price {value:.6}");
        if let Some(cf) = closed_form {
            print!(" (closed form {cf:.6})");
        }
        println!();
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct SurfaceRecord {
    mode: SurfaceMode,
    columns: Vec<&'static str>,
    n_rows: usize,
    out: Option<PathBuf>,
    /// The rows themselves when there is no output file.
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<f64>>>,
}

fn surface(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let contract = cfg.contract()?;
    let (h, v) = (cfg.heston(), cfg.vasicek());
    let m = &cfg.market;
    let (columns, rows): (Vec<&'static str>, Vec<Vec<f64>>) = match cfg.surface.mode {
        SurfaceMode::Grid => {
            let grid = cfg.grid()?;
            let s = PdeSolver::new(cfg.scheme).solve(&contract, &grid, &h, &v)?;
            let mut rows = Vec::with_capacity(grid.len());
            for (k, sigma) in grid.sigma_nodes.iter().enumerate() {
                for (l, r) in grid.r_nodes.iter().enumerate() {
                    for j in 0..grid.n_s {
                        rows.push(vec![grid.s_node(j), *sigma, *r, s.value(j, k, l)]);
                    }
                }
            }
            (vec!["s", "sigma", "r", "value"], rows)
        }
        SurfaceMode::Strike => {
            let sc = &cfg.surface;
            if !(sc.k_min > 0.0 && sc.k_min <= sc.k_max && sc.k_step > 0.0) {
                return Err(CliError::Config(format!(
                    "strike sweep needs 0 < k_min <= k_max and k_step > 0, got [{}, {}] step {}",
                    sc.k_min, sc.k_max, sc.k_step
                )));
            }
            let n = ((sc.k_max - sc.k_min) / sc.k_step + 1e-9).floor() as usize + 1;
            let strikes = linspace(sc.k_min, sc.k_min + (n - 1) as f64 * sc.k_step, n)?;
            let mut rows = Vec::with_capacity(n);
            for k in strikes {
                let c = stochbs_core::OptionContract {
                    strike: k,
                    ..contract
                };
                let grid = cfg.grid_for(&c)?;
                let value = PdeSolver::new(cfg.scheme)
                    .solve(&c, &grid, &h, &v)?
                    .lookup(m.s0, m.sigma0, m.r0)?;
                rows.push(vec![k, value]);
            }
            (vec!["strike", "price"], rows)
        }
        SurfaceMode::Time => {
            let grid = cfg.grid()?;
            let every = cfg.surface.snapshot_every.unwrap_or((grid.n_t / 20).max(1));
            let solver = PdeSolver {
                snapshot_every: Some(every),
                ..PdeSolver::new(cfg.scheme)
            };
            let (_, history) = solver.solve_with_history(&contract, &grid, &h, &v)?;
            let k = nearest(&grid.sigma_nodes, m.sigma0);
            let l = nearest(&grid.r_nodes, m.r0);
            let mut rows = Vec::new();
            for slice in history.iter().rev() {
                for j in 0..grid.n_s {
                    rows.push(vec![
                        slice.t,
                        grid.s_node(j),
                        grid.sigma_nodes[k],
                        grid.r_nodes[l],
                        slice.values[grid.index(j, k, l)],
                    ]);
                }
            }
            (vec!["t", "s", "sigma", "r", "value"], rows)
        }
    };

    if let Some(out) = &cfg.out {
        write_rows(BufWriter::new(File::create(out)?), &columns, &rows)?;
    } else if !json {
        write_rows(io::stdout().lock(), &columns, &rows)?;
    }
    if json {
        let record = SurfaceRecord {
            mode: cfg.surface.mode,
            columns,
            n_rows: rows.len(),
            out: cfg.out.clone(),
            rows: cfg.out.is_none().then_some(rows),
        };
        print_json(&record)?;
    }
    Ok(())
}

fn nearest(nodes: &[f64], x: f64) -> usize {
    nodes
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map_or(0, |(i, _)| i)
}

fn write_rows(out: impl Write, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct McRecord {
    kind: OptionKind,
    strike: f64,
    maturity: f64,
    price: f64,
    std_error: f64,
    n_paths: usize,
    steps: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct FixtureRecord {
    prices: PathBuf,
    quotes: PathBuf,
    n_prices: usize,
    n_quotes: usize,
    seed: u64,
}

fn simulate(cfg: &RunConfig, args: &SimulateArgs, json: bool) -> Result<(), CliError> {
    if let Some(dir) = &args.fixture {
        return fixture(cfg, dir, json);
    }
    let contract = cfg.contract()?;
    let m = &cfg.market;
    let inputs = EngineInputs {
        contract,
        initial: PathState::new(m.s0, m.sigma0 * m.sigma0, m.r0)?,
        heston: cfg.heston(),
        vasicek: cfg.vasicek(),
    };
    let settings = McSettings {
        steps: cfg.mc.steps,
        n_paths: cfg.mc.n_paths,
        seed: cfg.seed,
    };
    let steps = settings.steps_for(&contract);

    if args.vs_pde {
        let record = mc_vs_pde_report(&inputs, &inputs, &cfg.grid()?, cfg.scheme, &settings)?;
        if let Some(out) = &cfg.out {
            write_json_file(out, &record)?;
        }
        return if json {
            print_json(&record)
        } else {
            let z = record.z.map_or("n/a".to_owned(), |z| format!("{z:.3}"));
            println!(
                "pde {:.6} mc {:.6} se {:.6} z {z}",
                record.pde, record.mc, record.std_error
            );
            Ok(())
        };
    }

    if let Some(out) = &cfg.out {
        let paths = simulate_paths(
            &inputs.initial,
            &inputs.heston,
            &inputs.vasicek,
            SimulationSpec {
                horizon: contract.maturity,
                steps,
                n_paths: settings.n_paths,
                seed: settings.seed,
            },
        )?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out)?));
        w.write_record(["path", "stock", "variance", "rate", "rate_integral"])?;
        for (i, p) in paths.iter().enumerate() {
            let t = &p.terminal;
            w.write_record([
                i.to_string(),
                t.stock.to_string(),
                t.variance.to_string(),
                t.rate.to_string(),
                p.rate_integral.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let est = mc_price(
        &contract,
        &inputs.initial,
        &inputs.heston,
        &inputs.vasicek,
        steps,
        settings.n_paths,
        settings.seed,
    )?;
    let record = McRecord {
        kind: contract.kind,
        strike: contract.strike,
        maturity: contract.maturity,
        price: est.price,
        std_error: est.std_error,
        n_paths: est.n_paths,
        steps,
        seed: est.seed,
    };
    if json {
        print_json(&record)
    } else {
        println!("mc price {:.6} se {:.6}", record.price, record.std_error);
        Ok(())
    }
}

fn fixture(cfg: &RunConfig, dir: &Path, json: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let (series, quotes) = synthetic_fixture(&cfg.fixture)?;
    let record = FixtureRecord {
        prices: dir.join("prices.csv"),
        quotes: dir.join("quotes.csv"),
        n_prices: series.len(),
        n_quotes: quotes.len(),
        seed: cfg.fixture.seed,
    };
    write_price_series(&series, &record.prices)?;
    write_quotes(&quotes, &record.quotes)?;
    if json {
        print_json(&record)
    } else {
        println!(
            "wrote {} closes to {} and {} quotes to {}",
            record.n_prices,
            record.prices.display(),
            record.n_quotes,
            record.quotes.display()
        );
        Ok(())
    }
}

fn load_inputs(cfg: &RunConfig) -> Result<(PriceSeries, Vec<MarketQuote>), CliError> {
    let prices = cfg
        .data
        .prices
        .as_ref()
        .ok_or_else(|| CliError::Config("a prices file is required (--prices)".into()))?;
    let quotes = cfg
        .data
        .quotes
        .as_ref()
        .ok_or_else(|| CliError::Config("a quotes file is required (--quotes)".into()))?;
    Ok((
        load_price_series(prices, PriceFormat::Csv)?,
        load_quotes(quotes)?,
    ))
}

fn pde_pricer(cfg: &RunConfig) -> Result<PdePricer, CliError> {
    let dynamics = if cfg.is_degenerate() {
        None
    } else {
        let g = &cfg.grid;
        Some(ExtendedDynamics {
            heston: cfg.heston(),
            vasicek: cfg.vasicek(),
            sigma_nodes: linspace(g.sigma_range[0], g.sigma_range[1], g.n_sigma)?,
            r_nodes: linspace(g.r_range[0], g.r_range[1], g.n_r)?,
        })
    };
    Ok(PdePricer {
        n_s: cfg.backtest.n_s,
        min_n_t: cfg.backtest.min_n_t,
        scheme: cfg.scheme,
        dynamics,
    })
}

fn vol_source<'a>(cfg: &RunConfig, series: &'a PriceSeries) -> VolSource<'a> {
    VolSource::Trailing {
        series,
        window: cfg.backtest.vol_window,
        trading_days_per_year: DEFAULT_TRADING_DAYS,
    }
}

fn print_report_line(r: &BacktestReport) {
    println!(
        "{}: rmse {:.6} mae {:.6} quotes {} skipped {}",
        r.model_name, r.rmse, r.mae, r.n_quotes, r.skipped
    );
}

fn backtest(cfg: &RunConfig, features: Option<&Path>, json: bool) -> Result<(), CliError> {
    let (series, quotes) = load_inputs(cfg)?;
    let vol = vol_source(cfg, &series);
    let pde;
    let pricer: &dyn Pricer = match cfg.backtest.pricer {
        PricerChoice::Pde => {
            pde = pde_pricer(cfg)?;
            &pde
        }
        PricerChoice::ClosedForm => &ClosedFormPricer,
        PricerChoice::Passthrough => &PassthroughPricer,
    };
    let report = run_backtest(&quotes, pricer, &vol, cfg.market.r0)?;
    if let Some(path) = features {
        write_features_csv(&quotes, &vol, cfg.market.r0, path)?;
    }
    if let Some(out) = &cfg.out {
        write_json_file(out, &report)?;
    }
    if json {
        print_json(&report)
    } else {
        print_report_line(&report);
        Ok(())
    }
}

fn compare(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let (series, quotes) = load_inputs(cfg)?;
    let vol = vol_source(cfg, &series);
    let pde = run_backtest(&quotes, &pde_pricer(cfg)?, &vol, cfg.market.r0)?;
    let summary = match &cfg.data.predictions {
        Some(path) if path.exists() => {
            let predictions = load_predictions(path)?;
            let lstm = report_from_predictions("lstm", &pde, &predictions)?;
            ComparisonSummary::new(pde, Some(lstm))
        }
        missing => {
            let mut s = ComparisonSummary::new(pde, None);
            if let Some(path) = missing {
                s.notice = Some(format!(
                    "predictions file {} not found; PDE report only",
                    path.display()
                ));
            }
            s
        }
    };
    if let Some(notice) = &summary.notice {
        eprintln!("notice: {notice}");
    }
    if let Some(out) = &cfg.out {
        write_json_file(out, &summary)?;
    }
    if json {
        print_json(&summary)
    } else {
        print_report_line(&summary.pde);
        if let Some(lstm) = &summary.lstm {
            print_report_line(lstm);
        }
        if let Some(delta) = summary.rmse_delta {
            println!("rmse delta (pde - lstm) {delta:.6}");
        }
        Ok(())
    }
}
