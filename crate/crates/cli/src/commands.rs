use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Deserialize;

use matillum::dataset::{read_dataset, read_truth, write_dataset};
use matillum::estimator::{solve, EstimateFile, SolverConfig};
use matillum::eval::{
    experiment_leave_one_out, experiment_matrix_size, experiment_normal_noise, experiment_prior_sweep,
    experiment_progressive, experiment_structure, progressive_order, rerender_score, Csv, ExperimentConfig,
    RenderSetup,
};
use matillum::image::EnvMap;
use matillum::math::{Mat3, Vec3};
use matillum::nn::{MlpWeights, NetKind};
use matillum::oracle::{fit_pmm_to_envmap, pmm_to_envmap, QuadratureRule};
use matillum::pfm::{read_pfm, write_pfm};
use matillum::scene::{MaterialParams, PmmIllumination};
use matillum::surrogate::{error_stats, make_training_set, relative_errors, train, Surrogate, TrainConfig};
use matillum::synth::{generate_matrix_dataset, parse_mask, Camera, Illumination};

use crate::settings::Settings;
use crate::{
    Cli, CliError, Command, EvalArgs, ExperimentArgs, FitArgs, Kind, RenderArgs, SolverArgs, Study,
    SurrogateArgs, SynthArgs, TrainArgs,
};

type Res<T> = Result<T, CliError>;

/// Seed offset of the held-out set printed by `train-surrogate`.
const HELD_OUT_SEED: u64 = 0x5EED_0F_7E57;

pub fn run(cli: Cli) -> Res<()> {
    let cfg = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(a, &cfg),
        Command::TrainSurrogate(a) => train_surrogate(a, &cfg),
        Command::Fit(a) => fit(a, &cfg),
        Command::Render(a) => render(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Experiment(a) => experiment(a, &cfg),
    }
}

#[derive(Debug, Deserialize)]
struct NamedMaterial {
    name: String,
    #[serde(flatten)]
    params: MaterialParams,
}

#[derive(Debug, Deserialize)]
struct MaterialsFile {
    material: Vec<NamedMaterial>,
}

#[derive(Debug, Deserialize)]
struct IlluminationsFile {
    illumination: Vec<PmmIllumination>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn parse_pair<T: std::str::FromStr>(text: &str, sep: char, what: &str) -> Res<(T, T)> {
    let bad = || CliError::usage(format!("expected {what}, got {text:?}"));
    let (a, b) = text.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_list(text: &str) -> Res<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| CliError::usage(format!("not a number: {s:?}"))))
        .collect()
}

fn quadrature(flag: Option<String>, cfg: &Settings, default: &str) -> Res<QuadratureRule> {
    let text = cfg.pick(flag, "quadrature", default.to_string())?;
    let (t, p): (usize, usize) = parse_pair(&text, 'x', "THETAxPHI node counts")?;
    if t == 0 || p == 0 {
        return Err(CliError::usage("quadrature node counts must be positive"));
    }
    Ok(QuadratureRule::new(t, p))
}

fn load_illuminations(path: &Path, n_lobes: usize, seed: u64) -> Res<Vec<PmmIllumination>> {
    if !path.is_dir() {
        return Ok(read_toml::<IlluminationsFile>(path)?.illumination);
    }
    let mut maps: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pfm")))
        .collect();
    maps.sort();
    if maps.is_empty() {
        return Err(CliError::io(format!("{}: no .pfm environment maps", path.display())));
    }
    maps.iter()
        .map(|p| {
            info!("fitting {n_lobes} lobes to {}", p.display());
            let env = EnvMap::new(read_pfm(p)?);
            Ok(fit_pmm_to_envmap(&env, n_lobes, seed)?)
        })
        .collect()
}

fn synth(a: SynthArgs, cfg: &Settings) -> Res<()> {
    let resolution = cfg.pick(a.resolution, "resolution", 128usize)?;
    let seed = cfg.pick(a.seed, "seed", 0u64)?;
    let envmap_lobes = cfg.pick(a.envmap_lobes, "envmap-lobes", 32usize)?;
    let gamma = cfg.pick_opt(a.gamma, "gamma")?;
    let rule = quadrature(a.quadrature, cfg, "32x64")?;
    if resolution == 0 {
        return Err(CliError::usage("resolution must be positive"));
    }
    let materials = read_toml::<MaterialsFile>(&a.materials)?.material;
    let illums = load_illuminations(&a.envmaps, envmap_lobes, seed)?;
    let pattern = if Path::new(&a.mask).is_file() {
        fs::read_to_string(&a.mask).map_err(|e| CliError::io(format!("{}: {e}", a.mask)))?
    } else {
        a.mask.clone()
    };
    let mask = parse_mask(&pattern, materials.len(), illums.len()).map_err(|e| CliError::usage(e.to_string()))?;
    let params: Vec<MaterialParams> = materials.iter().map(|m| m.params).collect();
    if let Some(bad) = materials.iter().find(|m| !m.params.is_valid()) {
        return Err(CliError::usage(format!("material {:?} is out of range", bad.name)));
    }
    let camera = Camera::orthographic(resolution);
    let ds = generate_matrix_dataset(&params, &illums, &mask, &camera, &rule)?;
    let mut views = ds.views;
    if let Some(g) = gamma {
        for v in &mut views {
            v.radiance
                .data
                .iter_mut()
                .for_each(|p| p.iter_mut().for_each(|c| *c = c.max(0.0).powf(1.0 / g as f32)));
        }
    }
    let names: Vec<String> = materials.into_iter().map(|m| m.name).collect();
    write_dataset(&a.out, &views, &names, illums.len(), gamma, Some(&ds.truth))?;
    println!("wrote {} views to {}", views.len(), a.out.display());
    Ok(())
}

fn train_surrogate(a: TrainArgs, cfg: &Settings) -> Res<()> {
    let kind = match a.kind {
        Kind::Diffuse => NetKind::Diffuse,
        Kind::Specular => NetKind::Specular,
    };
    let defaults = TrainConfig::default();
    let samples = cfg.pick(a.samples, "samples", 200_000usize)?;
    let seed = cfg.pick(a.seed, "seed", 0u64)?;
    let held = cfg.pick(a.held_out, "held-out", 10_000usize)?;
    let tc = TrainConfig {
        epochs: cfg.pick(a.epochs, "epochs", defaults.epochs)?,
        warmup_epochs: cfg.pick(a.warmup_epochs, "warmup-epochs", defaults.warmup_epochs)?,
        seed,
        ..defaults
    };
    if samples == 0 || held == 0 {
        return Err(CliError::usage("sample counts must be positive"));
    }
    let rule = QuadratureRule::training();
    let started = Instant::now();
    info!("generating {samples} {} samples", kind.name());
    let set = make_training_set(kind, samples, seed, &rule);
    let test = make_training_set(kind, held, seed ^ HELD_OUT_SEED, &rule);
    let out = train(kind, &set, &tc)?;
    out.weights.save(&a.out)?;
    let s = error_stats(&relative_errors(&out.weights, &test));
    println!(
        "{} held-out relative error over {} samples: mean {:.4} p95 {:.4} max {:.4} ({:.0}s)",
        kind.name(),
        s.count,
        s.mean,
        s.p95,
        s.max,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn surrogate(a: &SurrogateArgs, cfg: &Settings) -> Res<Surrogate> {
    let d: Option<PathBuf> = cfg.pick_opt(a.diffuse.clone(), "surrogate-d")?;
    let s: Option<PathBuf> = cfg.pick_opt(a.specular.clone(), "surrogate-s")?;
    let bundled = Surrogate::bundled()?;
    let load = |p: Option<PathBuf>, kind| -> Res<MlpWeights> {
        Ok(match p {
            Some(p) => MlpWeights::load(p)?,
            None => bundled.weights(kind).clone(),
        })
    };
    Ok(Surrogate::new(load(d, NetKind::Diffuse)?, load(s, NetKind::Specular)?)?)
}

fn solver_config(a: &SolverArgs, cfg: &Settings, base: SolverConfig) -> Res<SolverConfig> {
    let c = SolverConfig {
        n_lobes: cfg.pick(a.lobes, "lobes", base.n_lobes)?,
        prior_weight: cfg.pick(a.lambda, "lambda", base.prior_weight)?,
        batch_size: cfg.pick(a.batch, "batch", base.batch_size)?,
        seed: cfg.pick(a.seed, "seed", base.seed)?,
        epochs_target: cfg.pick(a.epochs, "epochs", base.epochs_target)?,
        inner_iters: cfg.pick(a.inner_iters, "inner-iters", base.inner_iters)?,
        ..base
    };
    c.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(c)
}

fn fit(a: FitArgs, cfg: &Settings) -> Res<()> {
    let solver = solver_config(&a.solver, cfg, SolverConfig::default())?;
    let sur = surrogate(&a.surrogate, cfg)?;
    let ds = read_dataset(&a.data)?;
    let set = ds.observations()?;
    let started = Instant::now();
    let out = solve(&set, &solver, &sur)?;
    info!("solve took {:.1}s", started.elapsed().as_secs_f64());
    let (init, best) = (out.log.initial_cost(), out.log.best_cost());
    let file = EstimateFile::new(out, ds.manifest.materials.clone(), solver);
    file.save(&a.out)?;
    println!(
        "fitted {} materials and {} illuminations ({} variables): cost {init:.6} -> {best:.6}",
        file.n_materials, file.n_illums, file.variables
    );
    Ok(())
}

fn view_rotation(text: &str) -> Res<Mat3> {
    let v = parse_list(text)?;
    let (yaw, pitch) = match v.as_slice() {
        [y] => (*y, 0.0),
        [y, p] => (*y, *p),
        _ => return Err(CliError::usage(format!("expected YAW[,PITCH], got {text:?}"))),
    };
    let ry = Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), yaw.to_radians());
    let rx = Mat3::rotation(Vec3::new(1.0, 0.0, 0.0), pitch.to_radians());
    Ok(rx.mul(&ry))
}

fn render(a: RenderArgs, cfg: &Settings) -> Res<()> {
    let est = EstimateFile::load(&a.estimate)?;
    let size = cfg.pick_opt(a.size, "size")?;
    let image = if let Some(i) = a.envmap {
        let pmm = est
            .state
            .illuminations
            .get(i)
            .ok_or_else(|| CliError::usage(format!("illumination {i} out of range")))?;
        let (w, h) = parse_pair::<usize>(size.as_deref().unwrap_or("256x128"), 'x', "WIDTHxHEIGHT")?;
        pmm_to_envmap(pmm, w, h).image
    } else {
        let pair = a.pair.as_deref().unwrap_or_default();
        let (m, i) = parse_pair::<usize>(pair, ',', "MATERIAL,ILLUMINATION")?;
        let (Some(rho), Some(pmm)) = (est.state.materials.get(m), est.state.illuminations.get(i)) else {
            return Err(CliError::usage(format!("pair {m},{i} out of range")));
        };
        let (w, h) = parse_pair::<usize>(size.as_deref().unwrap_or("128x128"), 'x', "WIDTHxHEIGHT")?;
        if w != h {
            return Err(CliError::usage("sphere renders must be square"));
        }
        let view = match cfg.pick_opt(a.view, "view")? {
            Some(v) => view_rotation(&v)?,
            None => Mat3::IDENTITY,
        };
        let rule = quadrature(a.quadrature, cfg, "64x128")?;
        let rotated = pmm.rotated(&view);
        matillum::synth::render_sphere(Illumination::Pmm(&rotated), rho, 0, 0, &Camera::orthographic(w), &rule)
            .radiance
    };
    write_pfm(&a.out, &image)?;
    println!("wrote {}x{} image to {}", image.width, image.height, a.out.display());
    Ok(())
}

fn novel_views(flag: Option<String>, cfg: &Settings) -> Res<Vec<f64>> {
    match cfg.pick_opt(flag, "novel-yaws")? {
        Some(t) => parse_list(&t),
        None => Ok(ExperimentConfig::default().novel_view_yaws),
    }
}

fn eval(a: EvalArgs, cfg: &Settings) -> Res<()> {
    let est = EstimateFile::load(&a.estimate)?;
    let truth = read_truth(&a.truth)?;
    let mut setup = RenderSetup::new(truth.camera);
    setup.rule = quadrature(a.quadrature, cfg, "32x64")?;
    setup.novel_views = novel_views(a.novel_yaws, cfg)?
        .iter()
        .map(|d| Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), d.to_radians()))
        .collect();
    let table = rerender_score(&est.state, &truth, &setup)?;
    let mut csv = Csv::new(
        "re-render DSSIM per pair; observed = pair present in the input data",
        &["material", "illumination", "observed", "dssim"],
    );
    for (m, row) in table.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let observed = truth.mask.get(m).and_then(|r| r.get(i)).copied().unwrap_or(false);
            csv.push(vec![m.to_string(), i.to_string(), observed.to_string(), format!("{v:.6}")]);
        }
    }
    csv.write(&a.out)?;
    println!("mean DSSIM {:.6} over {} pairs", matillum::eval::table_mean(&table), table.len() * table[0].len());
    Ok(())
}

fn experiment(a: ExperimentArgs, cfg: &Settings) -> Res<()> {
    let base = ExperimentConfig::default();
    let seeds = cfg.pick(a.seeds, "seeds", base.seeds.len())?;
    if seeds == 0 {
        return Err(CliError::usage("at least one seed is required"));
    }
    let ec = ExperimentConfig {
        resolution: cfg.pick(a.resolution, "resolution", base.resolution)?,
        solver: solver_config(&a.solver, cfg, base.solver.clone())?,
        seeds: (0..seeds as u64).collect(),
        render_nodes: {
            let r = quadrature(a.quadrature, cfg, &format!("{}x{}", base.render_nodes.0, base.render_nodes.1))?;
            (r.n_theta, r.n_phi)
        },
        novel_view_yaws: novel_views(a.novel_yaws, cfg)?,
        colored: base.colored,
        visuals: Some(a.out.join("images")),
    };
    let sur = surrogate(&a.surrogate, cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(format!("{}: {e}", a.out.display())))?;
    let (name, csv) = match a.study {
        Study::MatrixSize => (
            "matrix_size",
            experiment_matrix_size(&[1, 3, 5], &ec, &sur)?.to_csv(
                "complete k x k matrices: mean re-render DSSIM over all pairs",
                "size",
                &ec.seeds,
                "dssim",
            ),
        ),
        Study::Structure => (
            "structure",
            experiment_structure(5, &ec, &sur)?.to_csv(
                "materials x illuminations shapes: mean re-render DSSIM over all pairs",
                "shape",
                &ec.seeds,
                "dssim",
            ),
        ),
        Study::NormalNoise => (
            "normal_noise",
            experiment_normal_noise(&[0.0, 10.0, 20.0, 40.0], &ec, &sur)?.to_csv(
                "3x3 complete matrix with uniform angular normal noise (degrees): mean re-render DSSIM",
                "noise_deg",
                &ec.seeds,
                "dssim",
            ),
        ),
        Study::LeaveOneOut => {
            let held = (1, 2);
            let r = experiment_leave_one_out(3, held, &ec, &sur)?;
            let mut csv = Csv::new(
                "3x3 matrix, pair (material 1, illumination 2) held out: DSSIM of that pair with and without its observations",
                &["seed", "held_out", "baseline"],
            );
            for (k, s) in ec.seeds.iter().enumerate() {
                csv.push(vec![s.to_string(), format!("{:.6}", r.held_out[k]), format!("{:.6}", r.baseline[k])]);
            }
            ("leave_one_out", csv)
        }
        Study::Progressive => (
            "progressive",
            experiment_progressive(3, &progressive_order(3), &ec, &sur)?.to_csv(
                "3x3 matrix, views added diagonal first then row by row: mean re-render DSSIM over all pairs",
                "views",
                &ec.seeds,
                "dssim",
            ),
        ),
        Study::PriorSweep => (
            "prior_sweep",
            experiment_prior_sweep(&[0.0, 0.01, 0.1, 1.0, 10.0], &ec, &sur)?.to_csv(&ec.seeds),
        ),
    };
    let path = a.out.join(format!("{name}.csv"));
    csv.write(&path)?;
    print!("{}", csv.to_text());
    info!("wrote {}", path.display());
    Ok(())
}
