mod args;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use disco::io::{emit_results, read_panel_csv, Columns, EmitOptions, RunManifest, RunOutputs};
use disco::{aggregate, bootstrap_gaps, permutation_test, run_disco, BootstrapBands};

use args::Args;

const USAGE: u8 = 2;
const RUNTIME: u8 = 1;

/// Worker count from `DISCO_THREADS`, if set.
fn thread_override() -> Result<Option<usize>, String> {
    match std::env::var("DISCO_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("DISCO_THREADS must be a positive integer, got {raw:?}")),
        },
    }
}

fn run(args: &Args, config: &disco::DiscoConfig) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut columns = Columns::new(&args.id_col, &args.time_col, &args.y_col);
    if let Some(name) = &args.name_col {
        columns = columns.with_name(name);
    }
    let input = read_panel_csv(&args.input, &columns).with_context(|| format!("reading {}", args.input.display()))?;
    let panel = &input.panel;

    let result = run_disco(panel, config)?;
    let permutation = if config.inference.permutation {
        Some(permutation_test(panel, config)?)
    } else {
        None
    };
    let bands = if config.inference.ci {
        let draws = bootstrap_gaps(panel, config, &result)?;
        if draws.dropped > 0 {
            eprintln!("warning: {} of {} bootstrap replicates failed and were dropped", draws.dropped, draws.requested);
        }
        Some(BootstrapBands::new(&result, draws, config.agg, config.inference.cl, config.inference.uniform)?)
    } else {
        None
    };
    let partition = config.partition(config.agg, result.support);
    let summary = aggregate(&result, bands.as_ref(), config.agg, &partition)?;

    let outputs = RunOutputs {
        result: &result,
        permutation: permutation.as_ref(),
        bands: bands.as_ref(),
        summary: &summary,
        names: &input.names,
    };
    let options = EmitOptions {
        top: args.top,
        round: args.round,
        plots: args.plots,
        categorical: args.categorical,
        hline: args.hline,
        vline: args.vline,
    };
    let files = emit_results(&outputs, &RunManifest::new(config, panel), &options, &args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;

    let mut ranked: Vec<(i64, f64)> = result.control_ids.iter().copied().zip(result.weights.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("Top {} weights:", args.top.min(ranked.len()));
    for (id, w) in ranked.iter().take(args.top) {
        let name = input.names.get(id).cloned().unwrap_or_else(|| id.to_string());
        println!("  {name:>24}  {w:.4}");
    }
    if let Some(p) = &permutation {
        println!("Permutation p-value: {:.4}", p.p_value);
    }
    println!("Summary ({}):", summary.kind);
    for row in summary.rows.iter().filter(|r| r.post) {
        let star = if row.significant { "*" } else { "" };
        match (row.se, row.ci_lo, row.ci_hi) {
            (Some(se), Some(lo), Some(hi)) => println!(
                "  {:>6}  {:>10.4}-{:<10.4} {:>12.4} {:>12.4} [{:.4}, {:.4}]{star}",
                row.period, row.range_lo, row.range_hi, row.effect, se, lo, hi
            ),
            _ => println!("  {:>6}  {:>10.4}-{:<10.4} {:>12.4}", row.period, row.range_lo, row.range_hi, row.effect),
        }
    }
    println!("Wrote {} files to {}", files.len(), args.out.display());
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let config = match args.config() {
        Ok(config) => config,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(USAGE);
        }
    };
    match thread_override() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(RUNTIME);
            }
        }
        Ok(None) => {}
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(USAGE);
        }
    }
    match run(&args, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME)
        }
    }
}
