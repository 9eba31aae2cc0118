use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::svg::{render, Panel, Series};
use crate::aggregation::SummaryTable;
use crate::disco::{AggKind, DiscoConfig, DiscoResult};
use crate::distributions::{MicroPanel, Period, UnitId};
use crate::error::{DiscoError, Result};
use crate::inference::{BandKind, BootstrapBands, PermutationResult};

/// Everything a run produced.
pub struct RunOutputs<'a> {
    pub result: &'a DiscoResult,
    pub permutation: Option<&'a PermutationResult>,
    pub bands: Option<&'a BootstrapBands>,
    pub summary: &'a SummaryTable,
    pub names: &'a BTreeMap<UnitId, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitOptions {
    /// Rows in the weights table.
    pub top: usize,
    /// Weights are rounded to a multiple of this.
    pub round: f64,
    pub plots: bool,
    pub categorical: bool,
    pub hline: Option<f64>,
    pub vline: Option<f64>,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self {
            top: 5,
            round: 1e-4,
            plots: false,
            categorical: false,
            hline: None,
            vline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCount {
    pub unit: UnitId,
    pub period: Period,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelDigest {
    pub rows: usize,
    pub units: usize,
    pub periods: Vec<Period>,
    pub cells: Vec<CellCount>,
}

impl PanelDigest {
    pub fn new(panel: &MicroPanel) -> Self {
        Self {
            rows: panel.len(),
            units: panel.units().len(),
            periods: panel.periods().to_vec(),
            cells: panel
                .cell_counts()
                .into_iter()
                .map(|((unit, period), n)| CellCount { unit, period, n })
                .collect(),
        }
    }
}

/// Inputs and outputs of a run. Wall-clock timing is not recorded so that reruns match byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: DiscoConfig,
    pub panel: PanelDigest,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(config: &DiscoConfig, panel: &MicroPanel) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            panel: PanelDigest::new(panel),
            files: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct BandsJson<'a> {
    kind: AggKind,
    band_kind: BandKind,
    boots_requested: usize,
    boots_effective: usize,
    boots_dropped: usize,
    lower: &'a [Vec<f64>],
    upper: &'a [Vec<f64>],
    se: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct PermutationJson<'a> {
    units: &'a [UnitId],
    ratios: &'a [f64],
    pre_rmse: &'a [f64],
    post_rmse: &'a [f64],
}

/// Matrices are lists of per-period columns; `periods` gives their order.
#[derive(Serialize)]
struct ResultJson<'a> {
    version: &'static str,
    target_id: UnitId,
    t0: Period,
    cids: &'a [UnitId],
    weights: &'a [f64],
    period_weights: Vec<&'a [f64]>,
    amin: f64,
    amax: f64,
    periods: &'a [Period],
    pre_periods: &'a [Period],
    post_periods: &'a [Period],
    q_grid: &'a [f64],
    y_grid: &'a [f64],
    quantile_t: &'a [Vec<f64>],
    quantile_synth: &'a [Vec<f64>],
    quantile_diff: &'a [Vec<f64>],
    cdf_t: &'a [Vec<f64>],
    cdf_synth: &'a [Vec<f64>],
    cdf_diff: &'a [Vec<f64>],
    wasserstein_sq: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    pval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation: Option<PermutationJson<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bands: Option<BandsJson<'a>>,
    config: &'a DiscoConfig,
}

fn result_json(outputs: &RunOutputs) -> Result<String> {
    let r = outputs.result;
    let doc = ResultJson {
        version: env!("CARGO_PKG_VERSION"),
        target_id: r.config.target_id,
        t0: r.config.t0,
        cids: &r.control_ids,
        weights: &r.weights,
        period_weights: r.period_weights.iter().map(|w| w.weights.as_slice()).collect(),
        amin: r.support.amin,
        amax: r.support.amax,
        periods: &r.periods,
        pre_periods: &r.pre_periods,
        post_periods: &r.post_periods,
        q_grid: &r.q_grid,
        y_grid: &r.y_grid,
        quantile_t: &r.quantile_t,
        quantile_synth: &r.quantile_synth,
        quantile_diff: &r.quantile_diff,
        cdf_t: &r.cdf_t,
        cdf_synth: &r.cdf_synth,
        cdf_diff: &r.cdf_diff,
        wasserstein_sq: &r.wasserstein_sq,
        pval: outputs.permutation.map(|p| p.p_value),
        permutation: outputs.permutation.map(|p| PermutationJson {
            units: &p.units,
            ratios: &p.ratios,
            pre_rmse: &p.pre_rmse,
            post_rmse: &p.post_rmse,
        }),
        cl: outputs.bands.map(|b| b.cl),
        bands: outputs.bands.map(|b| BandsJson {
            kind: b.kind,
            band_kind: b.bands.band_kind,
            boots_requested: b.draws.requested,
            boots_effective: b.draws.replicates(),
            boots_dropped: b.draws.dropped,
            lower: &b.bands.lower,
            upper: &b.bands.upper,
            se: &b.bands.se,
        }),
        config: &r.config,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| DiscoError::Io(e.into()))?;
    text.push('\n');
    Ok(text)
}

fn decimals(round: f64) -> usize {
    if round >= 1.0 {
        0
    } else {
        (-round.log10()).ceil() as usize
    }
}

fn weights_csv(outputs: &RunOutputs, options: &EmitOptions) -> Result<String> {
    let r = outputs.result;
    let mut ranked: Vec<(UnitId, f64)> = r.control_ids.iter().copied().zip(r.weights.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let places = decimals(options.round);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "id", "name", "weight"]).map_err(csv_write)?;
    for (rank, (id, weight)) in ranked.iter().take(options.top).enumerate() {
        let rounded = (weight / options.round).round() * options.round;
        let name = outputs.names.get(id).map_or("", String::as_str);
        w.write_record([
            (rank + 1).to_string(),
            id.to_string(),
            name.to_string(),
            format!("{:.*}", places, rounded + 0.0),
        ])
        .map_err(csv_write)?;
    }
    finish(w)
}

fn csv_write(e: csv::Error) -> DiscoError {
    DiscoError::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| DiscoError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| DiscoError::Io(std::io::Error::other(e)))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn summary_csv(table: &SummaryTable) -> Result<String> {
    let with_ci = table.cl.is_some();
    let mut header = vec!["period", "post", "range_lo", "range_hi", "effect"];
    if with_ci {
        header.extend(["se", "ci_lo", "ci_hi", "significant"]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_write)?;
    for row in &table.rows {
        let mut record = vec![
            row.period.to_string(),
            row.post.to_string(),
            row.range_lo.to_string(),
            row.range_hi.to_string(),
            row.effect.to_string(),
        ];
        if with_ci {
            record.extend([opt(row.se), opt(row.ci_lo), opt(row.ci_hi), row.significant.to_string()]);
        }
        w.write_record(&record).map_err(csv_write)?;
    }
    finish(w)
}

/// One row per grid point; `point` and `period` columns make it readable as a panel.
fn plot_data_csv(outputs: &RunOutputs, t: usize) -> Result<String> {
    let r = outputs.result;
    let mut header = vec![
        "period",
        "point",
        "probability",
        "quantile_t",
        "quantile_synth",
        "quantile_diff",
        "support",
        "cdf_t",
        "cdf_synth",
        "cdf_diff",
    ];
    if outputs.bands.is_some() {
        header.extend(["lower", "upper", "se"]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_write)?;
    for k in 0..r.q_grid.len() {
        let mut record = vec![
            r.periods[t].to_string(),
            k.to_string(),
            r.q_grid[k].to_string(),
            r.quantile_t[t][k].to_string(),
            r.quantile_synth[t][k].to_string(),
            r.quantile_diff[t][k].to_string(),
            r.y_grid[k].to_string(),
            r.cdf_t[t][k].to_string(),
            r.cdf_synth[t][k].to_string(),
            r.cdf_diff[t][k].to_string(),
        ];
        if let Some(b) = outputs.bands {
            record.extend([
                b.bands.lower[t][k].to_string(),
                b.bands.upper[t][k].to_string(),
                b.bands.se[t][k].to_string(),
            ]);
        }
        w.write_record(&record).map_err(csv_write)?;
    }
    finish(w)
}

/// Bootstrap draws for every representation, scaled by the root of the treated cell size.
fn gaps_csv(bands: &BootstrapBands) -> Result<String> {
    let d = &bands.draws;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replicate", "period", "point", "root_n", "quantile", "cdf", "quantile_diff", "cdf_diff"])
        .map_err(csv_write)?;
    for b in 0..d.replicates() {
        for (t, period) in d.periods.iter().enumerate() {
            for k in 0..d.quantile.grid {
                w.write_record([
                    b.to_string(),
                    period.to_string(),
                    k.to_string(),
                    d.root_n[t].to_string(),
                    d.quantile.get(b, t, k).to_string(),
                    d.cdf.get(b, t, k).to_string(),
                    d.quantile_diff.get(b, t, k).to_string(),
                    d.cdf_diff.get(b, t, k).to_string(),
                ])
                .map_err(csv_write)?;
            }
        }
    }
    finish(w)
}

fn plot_svg(outputs: &RunOutputs, options: &EmitOptions, t: usize) -> String {
    let r = outputs.result;
    let kind = r.config.agg;
    let x = r.coordinates(kind);
    let phase = if r.is_post(t) { "post" } else { "pre" };
    let title = format!("{} · period {} ({phase})", kind, r.periods[t]);
    let x_label = if kind.is_quantile() { "quantile" } else { "outcome" };
    let series = if kind.is_diff() {
        vec![Series {
            label: "treated − synthetic",
            values: &r.values(kind)[t],
            color: "#08519c",
            dashed: false,
        }]
    } else {
        let observed = if kind.is_quantile() { &r.quantile_t[t] } else { &r.cdf_t[t] };
        vec![
            Series {
                label: "treated",
                values: observed,
                color: "#252525",
                dashed: false,
            },
            Series {
                label: "synthetic",
                values: &r.values(kind)[t],
                color: "#d94801",
                dashed: true,
            },
        ]
    };
    let band = outputs
        .bands
        .filter(|b| b.kind == kind)
        .map(|b| (b.bands.lower[t].as_slice(), b.bands.upper[t].as_slice()));
    render(&Panel {
        title,
        x_label,
        x,
        series,
        band,
        bars: options.categorical,
        hline: options.hline,
        vline: options.vline,
    })
}

/// Writes every output file into `out_dir` and returns the inventory, manifest last.
pub fn emit_results(
    outputs: &RunOutputs,
    manifest: &RunManifest,
    options: &EmitOptions,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<FileEntry>> {
    let out_dir = out_dir.as_ref();
    let mut files: Vec<(String, String)> = vec![
        ("result.json".into(), result_json(outputs)?),
        ("weights.csv".into(), weights_csv(outputs, options)?),
        ("summary.csv".into(), summary_csv(outputs.summary)?),
    ];
    for (t, period) in outputs.result.periods.iter().enumerate() {
        files.push((format!("plot_data_period_{period}.csv"), plot_data_csv(outputs, t)?));
    }
    if let Some(bands) = outputs.bands {
        files.push(("bootstrap_gaps.csv".into(), gaps_csv(bands)?));
    }
    if options.plots {
        for (t, period) in outputs.result.periods.iter().enumerate() {
            files.push((format!("plot_period_{period}.svg"), plot_svg(outputs, options, t)));
        }
    }

    fs::create_dir_all(out_dir)?;
    let mut inventory = Vec::with_capacity(files.len() + 1);
    for (name, contents) in &files {
        fs::write(out_dir.join(name), contents)?;
        inventory.push(FileEntry {
            name: name.clone(),
            bytes: contents.len() as u64,
        });
    }
    let mut manifest = manifest.clone();
    manifest.files = inventory.clone();
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| DiscoError::Io(e.into()))?;
    text.push('\n');
    fs::write(out_dir.join("manifest.json"), &text)?;
    inventory.push(FileEntry {
        name: "manifest.json".into(),
        bytes: text.len() as u64,
    });
    Ok(inventory)
}
