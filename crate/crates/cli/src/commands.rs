//! The four subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use densrecon_core::fft::low_pass;
use densrecon_core::pipeline::{baseline_quadratic_inpaint, compare_spectra, run_data_augmentation, BinningSpec};
use densrecon_core::randfield::{poisson_sample, sample_lognormal_field};
use densrecon_core::rng::ALGORITHM;
use densrecon_core::{CountMap, DMap, Dct2, Dtype, Kind, LogNormalParams, Samples, SeededRng, Shape};

use crate::config::RunConfig;
use crate::descriptor::{MaskSpec, SpectrumSpec};
use crate::files::{read_key_values, resolve, write_pgm, write_text, Manifest, ParamsFile};
use crate::{CliError, CliResult};

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn millis(start: Instant) -> u128 {
    start.elapsed().as_millis()
}

/// Samples of a `kind=density` map, without the `δ > −1` check.
fn load_density_values(path: &Path) -> CliResult<(Shape, Vec<f64>)> {
    let d = DMap::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if d.kind != Kind::Density || d.samples.dtype() != Dtype::F64 {
        return Err(CliError::Usage(format!("{} is not a density map", path.display())));
    }
    let shape = d.shape()?;
    match d.samples {
        Samples::F64(v) => Ok((shape, v)),
        _ => unreachable!(),
    }
}

fn density_map(shape: Shape, values: Vec<f64>) -> CliResult<DMap> {
    Ok(DMap::new(shape.width, shape.height, Kind::Density, Samples::F64(values))?)
}

pub fn cmd_synth(spectrum: &str, size: usize, seed: u64, bins: &str, out: &Path) -> CliResult<()> {
    if size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    let spec: SpectrumSpec = spectrum.parse()?;
    let bins: BinningSpec = bins.parse()?;
    let shape = Shape::square(size)?;
    let binning = Arc::new(bins.build(shape)?);
    let params = LogNormalParams::zero_mean_density(spec.build(binning)?);
    let start = Instant::now();
    let field = sample_lognormal_field(&params, &mut SeededRng::derive(seed, "synth", 0))?;

    create_dir(out)?;
    DMap::from_density(&field).save(out.join("density.dmap"))?;
    let file = ParamsFile {
        shape,
        bins,
        mu: params.mu,
        mean_count: None,
        spectrum: params.cov.spectrum().to_vec(),
    };
    write_text(&out.join("params.txt"), &file.to_text())?;

    let mut m = Manifest::new("synth");
    m.push("spectrum", spectrum);
    m.push("size", size);
    m.push("bins", bins);
    m.push("seed", seed);
    m.push("rng", ALGORITHM);
    m.push("output.dir", out.display());
    m.push("time.synth_ms", millis(start));
    m.save(&out.join("manifest.txt"))
}

pub fn cmd_observe(truth: &Path, mbar: f64, mask_arg: &str, seed: u64, out: &Path) -> CliResult<()> {
    if !(mbar > 0.0 && mbar.is_finite()) {
        return Err(CliError::Usage(format!("--mbar must be positive, got {mbar}")));
    }
    let spec: MaskSpec = mask_arg.parse()?;
    let truth_path = resolve(truth, "density.dmap");
    let field = DMap::load(&truth_path)
        .and_then(|d| d.to_density())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", truth_path.display())))?;
    let shape = field.shape();
    let start = Instant::now();
    let mask = spec.build(shape, &mut SeededRng::derive(seed, "mask", 0))?;
    let intensity: Vec<f64> = field.delta().iter().map(|d| mbar * (1.0 + d)).collect();
    let drawn = poisson_sample(&intensity, &mut SeededRng::derive(seed, "observe", 0))?;
    let counts = drawn.iter().zip(&mask).map(|(&c, &k)| if k == 1 { c } else { 0 }).collect();
    let y = CountMap::new(shape, counts, mask, mbar)?;

    create_dir(out)?;
    DMap::from_counts(&y).save(out.join("counts.dmap"))?;
    DMap::from_mask(&y).save(out.join("mask.dmap"))?;
    write_text(
        &out.join("observation.txt"),
        &format!("mean_count={mbar:?}\nobserved_fraction={:?}\n", y.observed_fraction()),
    )?;

    let mut m = Manifest::new("observe");
    m.push("input.truth", truth_path.display());
    m.push("mbar", format!("{mbar:?}"));
    m.push("mask", mask_arg);
    m.push("seed", seed);
    m.push("rng", ALGORITHM);
    m.push("observed_fraction", format!("{:?}", y.observed_fraction()));
    m.push("output.dir", out.display());
    m.push("time.observe_ms", millis(start));
    m.save(&out.join("manifest.txt"))
}

fn load_observation(obs: &Path) -> CliResult<CountMap> {
    let info = read_key_values(&obs.join("observation.txt"))?;
    let mean_count: f64 = info
        .get("mean_count")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Runtime(format!("{}: missing mean_count", obs.join("observation.txt").display())))?;
    let counts = DMap::load(obs.join("counts.dmap"))?;
    let mask = DMap::load(obs.join("mask.dmap"))?;
    Ok(DMap::to_count_map(&counts, &mask, mean_count)?)
}

pub fn cmd_run(obs: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let config = match config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
    };
    execute_run(obs, &config, out)
}

/// Repeats the run recorded in `manifest`, writing into `out`.
pub fn cmd_rerun(manifest: &Path, out: &Path) -> CliResult<()> {
    let map = read_key_values(manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    if map.get("command").map(String::as_str) != Some("run") {
        return Err(CliError::Usage(format!("{} is not a run manifest", manifest.display())));
    }
    let obs = map
        .get("input.obs")
        .ok_or_else(|| CliError::Usage(format!("{}: missing input.obs", manifest.display())))?;
    let mut config = RunConfig::default();
    for (k, v) in &map {
        if let Some(key) = k.strip_prefix("config.") {
            config.set(key, v)?;
        }
    }
    config.validate()?;
    execute_run(Path::new(obs), &config, out)
}

fn execute_run(obs: &Path, config: &RunConfig, out: &Path) -> CliResult<()> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let y = load_observation(obs)?;
    timings.insert("load", millis(t));

    let t = Instant::now();
    let result = run_data_augmentation(&y, &config.augmentation)?;
    timings.insert("pipeline", millis(t));

    let t = Instant::now();
    let shape = y.shape();
    let dict = Dct2::new(shape);
    let y_hat = y.clone().with_mean_count(result.initial_mean_count)?;
    let lambda = config
        .baseline_lambda
        .unwrap_or(result.initial_mean_count * config.augmentation.solver.lambda);
    let (baseline, _) = baseline_quadratic_inpaint(&y_hat, &dict, lambda, config.baseline_iter)?;
    timings.insert("baseline", millis(t));

    let t = Instant::now();
    create_dir(out)?;
    create_dir(&out.join("baseline"))?;
    DMap::from_density(&result.delta).save(out.join("density.dmap"))?;
    let params = ParamsFile {
        shape,
        bins: config.augmentation.bins,
        mu: result.params.mu,
        mean_count: Some(result.mean_count),
        spectrum: result.params.cov.spectrum().to_vec(),
    };
    write_text(&out.join("params.txt"), &params.to_text())?;
    write_text(&out.join("history.csv"), &result.history_csv())?;

    let binning = result.params.cov.binning();
    let mut spectra = String::from("k_bin_center,mode_count,initial,final\n");
    for b in 0..binning.n_bins() {
        let _ = writeln!(
            spectra,
            "{:?},{},{:?},{:?}",
            binning.centers()[b],
            binning.mode_counts()[b],
            result.initial_params.cov.spectrum()[b],
            result.params.cov.spectrum()[b]
        );
    }
    write_text(&out.join("spectra.csv"), &spectra)?;

    let mut traces = String::from("round,imputation,iteration,objective,step_norm\n");
    for (r, round) in result.traces.iter().enumerate() {
        for (i, trace) in round.iter().enumerate() {
            for (k, (j, s)) in trace.objective.iter().zip(&trace.step_norm).enumerate() {
                let _ = writeln!(traces, "{},{},{},{:?},{:?}", r + 1, i, k + 1, j, s);
            }
        }
    }
    write_text(&out.join("traces.csv"), &traces)?;

    write_pgm(&out.join("delta.pgm"), result.delta.delta(), shape)?;
    if let Some(first) = result.last_imputations.first() {
        write_pgm(&out.join("imputed.pgm"), &first.counts_f64(), shape)?;
    }
    density_map(shape, baseline.clone())?.save(out.join("baseline").join("density.dmap"))?;
    write_pgm(&out.join("baseline").join("delta.pgm"), &baseline, shape)?;
    let baseline_params = format!("lambda={lambda:?}\nn_iter={}\nmean_count={:?}\n", config.baseline_iter, result.initial_mean_count);
    write_text(&out.join("baseline").join("settings.txt"), &baseline_params)?;
    timings.insert("write", millis(t));

    let mut m = Manifest::new("run");
    m.push("input.obs", obs.display());
    m.push("output.dir", out.display());
    m.push("seed", config.augmentation.seed);
    m.push("rng", ALGORITHM);
    m.push("observed_fraction", format!("{:?}", y.observed_fraction()));
    m.push_config(&config.to_text());
    for (stage, ms) in timings {
        m.push(&format!("time.{stage}_ms"), ms);
    }
    m.save(&out.join("manifest.txt"))
}

fn input_name(path: &Path, taken: &[String]) -> String {
    let dir = if path.is_dir() { path } else { path.parent().unwrap_or(path) };
    let base = dir
        .file_name()
        .map(|n| n.to_string_lossy().replace(',', "_"))
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| "estimate".into());
    let mut name = base.clone();
    let mut k = 2;
    while taken.contains(&name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

pub fn cmd_compare(truth: &Path, estimates: &[PathBuf], kmax: Option<&str>, out: &Path) -> CliResult<()> {
    let truth_path = resolve(truth, "params.txt");
    let reference = ParamsFile::load(&truth_path)?;
    let binning = reference.bins.build(reference.shape)?;
    let kmax = kmax
        .map(|k| {
            if k == "nyquist" {
                Ok(reference.shape.max_frequency())
            } else {
                k.parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0)
                    .ok_or_else(|| CliError::Usage(format!("bad --kmax '{k}'")))
            }
        })
        .transpose()?;

    let mut named = Vec::with_capacity(estimates.len());
    let mut names: Vec<String> = Vec::new();
    for est in estimates {
        let path = resolve(est, "params.txt");
        let p = ParamsFile::load(&path)?;
        if p.shape != reference.shape || p.bins != reference.bins {
            return Err(CliError::Usage(format!(
                "binning mismatch: {} uses {}x{} {} but {} uses {}x{} {}",
                truth_path.display(),
                reference.shape.width,
                reference.shape.height,
                reference.bins,
                path.display(),
                p.shape.width,
                p.shape.height,
                p.bins
            )));
        }
        let name = input_name(est, &names);
        names.push(name.clone());
        named.push((name, p.spectrum));
    }
    let table = compare_spectra(&binning, &reference.spectrum, &named)?;

    let out_dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(out_dir)?;
    write_text(out, &table.to_csv())?;

    if let Some(k) = kmax {
        for (est, name) in estimates.iter().zip(&names) {
            let map_path = if est.is_dir() {
                est.join("density.dmap")
            } else {
                est.parent().unwrap_or(est).join("density.dmap")
            };
            let (shape, values) = load_density_values(&map_path)?;
            let filtered = low_pass(&values, shape, k)?;
            density_map(shape, filtered)?.save(out_dir.join(format!("{name}_lowpass.dmap")))?;
        }
    }
    Ok(())
}
