use std::path::Path;

use surro_core::climate::{default_suite, load_manifest, manifest_text};
use surro_core::conf::ConfigFile;
use surro_core::dataset::{build_dataset, Dataset};
use surro_core::epw;
use surro_core::fsio;
use surro_core::sampling::DesignSpace;
use surro_core::variability::variability_report;
use surro_core::weather::{fit_scaler, window_weeks, RawWeek};
use surro_eval::grid::baseline_csv;
use surro_eval::{annual_baseline, cross_evaluate, EvaluationMatrix};
use surro_models::{
    train_autoencoder, train_head, train_joint_with, Autoencoder, EncoderKind, Stage, TrainConfig, TrainHooks,
};

use crate::fail::{CliResult, Failure};
use crate::grid::{self, alternate_path, primary_path, read_year};
use crate::manifest::RunManifest;
use crate::{CrossEval, GenData, GenWeather, ParseEpw, Report, Train, Variability};

pub fn gen_weather(a: &GenWeather) -> CliResult<()> {
    let mut run = RunManifest::start("gen-weather");
    let suite = match &a.manifest {
        Some(p) => {
            run.path("manifest", p);
            load_manifest(p).map_err(|e| Failure::data(e.to_string()))?
        }
        None => {
            run.set("manifest", "builtin");
            default_suite()
        }
    };
    if suite.is_empty() {
        return Err(Failure::data("manifest lists no locations"));
    }
    fsio::create_dir(&a.out)?;
    for loc in &suite {
        let id = &loc.location_id;
        fsio::write_atomic(&primary_path(&a.out, id), loc.generate()?.to_csv().as_bytes())?;
        fsio::write_atomic(&alternate_path(&a.out, id), loc.generate_alternate()?.to_csv().as_bytes())?;
    }
    fsio::write_atomic(&a.out.join("locations.txt"), manifest_text(&suite).as_bytes())?;
    let seeds: Vec<String> = suite.iter().map(|l| format!("{}:{}", l.location_id, l.seed)).collect();
    run.set("seeds", seeds.join(",")).path("out", &a.out).write(&a.out)?;
    println!("{} locations, {} weather files", suite.len(), 2 * suite.len());
    Ok(())
}

pub fn parse_epw(a: &ParseEpw) -> CliResult<()> {
    let raw = fsio::read_bytes(&a.input)?;
    let year = epw::parse_epw(&raw).map_err(|e| Failure::data(format!("{}: {e}", a.input.display())))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fsio::create_dir(dir)?;
    }
    fsio::write_atomic(&a.out, year.to_csv().as_bytes())?;
    println!("{}: {} hours", year.location_id(), year.hours().len());
    Ok(())
}

/// Location ids with a primary year in `dir`, sorted.
fn primary_ids(dir: &Path) -> CliResult<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .filter(|n| n.ends_with(".csv") && !n.ends_with(".alt.csv"))
        .map(|n| n.trim_end_matches(".csv").to_string())
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn variability(a: &Variability) -> CliResult<()> {
    let mut run = RunManifest::start("variability");
    let ids = if a.locs.is_empty() { primary_ids(&a.weather)? } else { a.locs.clone() };
    let years = ids
        .iter()
        .map(|id| read_year(&primary_path(&a.weather, id), id))
        .collect::<CliResult<Vec<_>>>()?;
    let report = variability_report(&years)?;
    fsio::create_dir(&a.out)?;
    fsio::write_atomic(&a.out.join("variability.csv"), report.metrics_csv().as_bytes())?;
    fsio::write_atomic(&a.out.join("pairs.csv"), report.pairs_csv().as_bytes())?;
    run.path("weather", &a.weather).set("locations", ids.join(",")).path("out", &a.out).write(&a.out)?;
    print!("{}", report.metrics_csv());
    Ok(())
}

pub fn gen_data(a: &GenData) -> CliResult<()> {
    if a.designs == 0 {
        return Err(Failure::usage("--designs must be at least 1"));
    }
    let mut run = RunManifest::start("gen-data");
    let primary = a
        .locs
        .iter()
        .map(|id| read_year(&primary_path(&a.weather, id), id))
        .collect::<CliResult<Vec<_>>>()?;
    // The scaler always comes from the primary (training) years.
    let weeks: Vec<RawWeek> = primary.iter().flat_map(window_weeks).collect();
    let scaler = fit_scaler(&weeks, &a.locs.join("+"))?;
    let years = if a.alternate {
        a.locs
            .iter()
            .map(|id| read_year(&alternate_path(&a.weather, id), id))
            .collect::<CliResult<Vec<_>>>()?
    } else {
        primary
    };
    let ds = build_dataset(&years, &DesignSpace::standard(), a.designs, a.seed, &scaler)?;
    ds.save(&a.out)?;
    run.path("weather", &a.weather)
        .set("locations", a.locs.join(","))
        .set("year", if a.alternate { "alternate" } else { "primary" })
        .set("seed", a.seed)
        .set("designs", a.designs)
        .path("out", &a.out)
        .write(&a.out)?;
    println!("{}", ds.len());
    Ok(())
}

fn train_config(a: &Train) -> CliResult<TrainConfig> {
    let kind: EncoderKind = a.encoder.parse().map_err(|e: surro_models::Error| Failure::usage(e.to_string()))?;
    let conf = ConfigFile::load(&a.config).map_err(|e| Failure::from(e).into_config())?;
    let mut cfg = TrainConfig::from_conf(&conf, Some(kind)).map_err(|e| Failure::from(e).into_config())?;
    if let Some(s) = &a.stage {
        cfg.stage = match s.as_str() {
            "joint" => Stage::Joint,
            "autoencoder" => Stage::Autoencoder,
            "head" => Stage::Head,
            other => return Err(Failure::usage(format!("unknown stage {other:?}"))),
        };
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::from(e).into_config())?;
    Ok(cfg)
}

pub fn train(a: &Train) -> CliResult<()> {
    let mut cfg = train_config(a)?;
    let mut run = RunManifest::start("train");
    let train = Dataset::load(&a.data)?;
    let val = Dataset::load(&a.val_data)?;
    if cfg.train_locations.is_empty() {
        cfg.train_locations = train.provenance().location_ids.clone();
    }
    let mut report = match cfg.stage {
        Stage::Joint => {
            let hooks = TrainHooks { inject_nan_epoch: a.inject_nan };
            let (model, report) = train_joint_with(&train, &val, &cfg, &hooks)?;
            model.save(&a.out)?;
            report
        }
        Stage::Autoencoder => {
            let (ae, report) = train_autoencoder(train.windows(), val.windows(), train.scaler(), &cfg)?;
            ae.save(&a.out)?;
            report
        }
        Stage::Head => {
            let dir = a.autoencoder.as_ref().ok_or_else(|| Failure::usage("stage head needs --autoencoder <dir>"))?;
            let ae = Autoencoder::load(dir)?;
            run.path("autoencoder", dir);
            let (model, report) = train_head(&ae, &train, &val, &cfg)?;
            model.save(&a.out)?;
            report
        }
    };
    report.model_path = Some(a.out.display().to_string());
    fsio::write_atomic(&a.out.join("report.json"), report.to_json().as_bytes())?;
    run.set("encoder", cfg.encoder.kind().as_str())
        .set("stage", &report.stage)
        .path("config", &a.config)
        .set("seed", cfg.seed)
        .path("data", &a.data)
        .path("val_data", &a.val_data)
        .path("out", &a.out)
        .write(&a.out)?;
    println!(
        "{}: {} epochs, best epoch {} (validation loss {:.6})",
        report.stage, report.epochs_run, report.best_epoch, report.best_val_loss
    );
    Ok(())
}

pub fn cross_eval(a: &CrossEval) -> CliResult<()> {
    let mut run = RunManifest::start("cross-eval");
    let g = grid::load(&a.grid, a.seed)?;
    let ids = g.rows.iter().chain(&g.annual_rows).flat_map(|r| &r.train_locations).chain(&g.tests);
    let weather = grid::load_weather(&g.weather_dir, ids)?;
    let jobs = match a.jobs {
        Some(0) => return Err(Failure::usage("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if !g.rows.is_empty() {
        let matrix = cross_evaluate(&g.rows, &g.tests, &weather, g.seed, jobs)?;
        matrix.write(&a.out)?;
        let failed = matrix.cells().iter().filter(|c| c.metrics().is_none()).count();
        println!("{}×{} matrix, {failed} failed cells", matrix.rows().len(), matrix.cols().len());
    }
    if !g.annual_rows.is_empty() {
        let mut csv = String::new();
        for row in &g.annual_rows {
            let (_, cells) = annual_baseline(row, &g.tests, &weather, g.seed)?;
            let part = baseline_csv(&row.id, &cells);
            csv.push_str(if csv.is_empty() { &part } else { part.split_once('\n').map_or("", |p| p.1) });
        }
        fsio::create_dir(&a.out)?;
        fsio::write_atomic(&a.out.join("annual_baseline.csv"), csv.as_bytes())?;
        println!("{} annual baseline rows", g.annual_rows.len());
    }
    let configs: Vec<String> = g.config_paths.iter().map(|p| p.display().to_string()).collect();
    run.path("grid", &a.grid)
        .set("configs", configs.join(","))
        .set("seed", g.seed)
        .path("weather", &g.weather_dir)
        .set("jobs", jobs)
        .path("out", &a.out)
        .write(&a.out)?;
    Ok(())
}

pub fn report(a: &Report) -> CliResult<()> {
    let text = fsio::read_text(&a.input)?;
    let matrix = EvaluationMatrix::from_csv(&text).map_err(|e| Failure::usage(format!("{}: {e}", a.input.display())))?;
    let svg = matrix.to_svg()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fsio::create_dir(dir)?;
    }
    fsio::write_atomic(&a.out, svg.as_bytes())?;
    println!("{}×{} heatmap", matrix.rows().len(), matrix.cols().len());
    Ok(())
}
