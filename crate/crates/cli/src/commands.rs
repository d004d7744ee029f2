//! File-backed batch commands. Every command validates its configuration
//! first and writes a config echo into its output directory.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pndr_core::bvh::build_bvh;
use pndr_core::dataio::{self, Manifest, ManifestSample, RUN_DIR_ENV};
use pndr_core::metrics::{psnr, ssim, MetricReport};
use pndr_core::oracle::ShadeConfig;
use pndr_core::randomize::{LightSample, MaterialMode, MaterialSample};
use pndr_net::inverse::{recover_scene, render_view, RecoverMode, RecoveryProblem};
use pndr_net::rendernet::{assemble_input, field_to_buffers, forward, load_checkpoint, save_checkpoint, train};

use crate::config::{LightMode, RunConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{self, Geometry, View};

#[derive(Debug, Parser)]
#[command(name = "pndr", version, about = "Neural domain-randomization pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base for relative paths (default: $PNDR_RUN_DIR, else the working directory).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Resolution as WIDTHxHEIGHT.
    #[arg(long, global = true)]
    pub resolution: Option<String>,
    /// `A` or `A+S+R`.
    #[arg(long, global = true)]
    pub material_mode: Option<String>,
    /// `fixed` or `dynamic`.
    #[arg(long, global = true)]
    pub light_mode: Option<LightMode>,
    /// `on` or `off`.
    #[arg(long, global = true)]
    pub indirect: Option<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Place objects into scenes.
    GenScenes {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        objects: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ray cast scenes and draw lights and materials for each.
    Randomize {
        /// Scene files or directories holding them.
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        per_scene: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shade every manifest sample with the physically based oracle.
    RenderOracle {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        indirect_samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the learned renderer on oracle buffers.
    TrainRendernet {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every manifest sample with a trained network.
    RenderNet {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted and reference images (files or directories of PNGs).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "psnr,ssim")]
        metrics: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover light and/or materials for a target image.
    Invert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// G-buffer geometry tensor.
        #[arg(long)]
        gbuffer: PathBuf,
        /// Instance tensor (default: `instances` in place of `gbuffer` in the file name).
        #[arg(long)]
        instances: Option<PathBuf>,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        mode: RecoverMode,
        /// JSON with the known `light` and/or `materials`.
        #[arg(long)]
        known: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time oracle shading against network inference.
    Benchmark {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 64)]
        indirect_samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pndr: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(&cli.global)?;
    match cli.global.threads {
        Some(0) => Err(CliError::config("threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config("threads", e.to_string()))?
            .install(|| ctx.dispatch(cli.command)),
        None => ctx.dispatch(cli.command),
    }
}

struct Context {
    cfg: RunConfig,
    run_dir: Option<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self> {
        let run_dir = g.run_dir.clone().or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from));
        let mut ctx = Context {
            cfg: RunConfig::default(),
            run_dir,
        };
        if let Some(p) = &g.config {
            let p = ctx.path(p);
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            ctx.cfg = serde_json::from_str(&text).map_err(|e| CliError::config("config", format!("{}: {e}", p.display())))?;
        }
        let cfg = &mut ctx.cfg;
        if let Some(r) = &g.resolution {
            let parsed = r.split_once('x').and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)));
            (cfg.width, cfg.height) = parsed.ok_or_else(|| CliError::config("resolution", format!("expected WIDTHxHEIGHT, got {r:?}")))?;
        }
        if let Some(m) = &g.material_mode {
            cfg.materials.mode = match m.as_str() {
                "A" => MaterialMode::AlbedoOnly,
                "A+S+R" => MaterialMode::Full,
                _ => return Err(CliError::config("material_mode", format!("expected A or A+S+R, got {m:?}"))),
            };
        }
        if let Some(m) = g.light_mode {
            cfg.light_mode = m;
        }
        if let Some(i) = &g.indirect {
            cfg.indirect = match i.as_str() {
                "on" => true,
                "off" => false,
                _ => return Err(CliError::config("indirect", format!("expected on or off, got {i:?}"))),
            };
        }
        cfg.validate()?;
        Ok(ctx)
    }

    fn path(&self, p: &Path) -> PathBuf {
        match &self.run_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Runs the command, then writes `<command>.config.json` (the command as
    /// given plus the full configuration) into its output directory.
    fn dispatch(&self, command: Command) -> Result<()> {
        let echo = serde_json::json!({ "command": &command, "config": self.cfg });
        let name = serde_json::to_value(&command)
            .ok()
            .and_then(|v| v.as_object().and_then(|o| o.keys().next().cloned()))
            .unwrap_or_default();
        let echo_dir = match &command {
            Command::GenScenes { out, .. }
            | Command::Randomize { out, .. }
            | Command::RenderOracle { out, .. }
            | Command::TrainRendernet { out, .. }
            | Command::RenderNet { out, .. }
            | Command::Invert { out, .. } => Some(self.path(out)),
            Command::Eval { out, .. } | Command::Benchmark { out, .. } => out.as_ref().map(|o| dataio::manifest_dir(&self.path(o))),
        };
        self.execute(command)?;
        if let Some(dir) = echo_dir {
            let path = dir.join(format!("{name}.config.json"));
            dataio::write_text(&path, &serde_json::to_string_pretty(&echo).expect("echo serializes"))?;
        }
        Ok(())
    }

    fn execute(&self, command: Command) -> Result<()> {
        match command {
            Command::GenScenes { count, objects, seed, out } => self.gen_scenes(count, objects, seed, &self.path(&out)),
            Command::Randomize {
                scenes,
                per_scene,
                seed,
                out,
            } => {
                let scenes: Vec<PathBuf> = scenes.iter().map(|p| self.path(p)).collect();
                self.randomize(&scenes, per_scene, seed, &self.path(&out))
            }
            Command::RenderOracle {
                manifest,
                indirect_samples,
                out,
            } => self.render_oracle(&self.path(&manifest), indirect_samples, &self.path(&out)),
            Command::TrainRendernet { manifest, epochs, lr, out } => self.train(&self.path(&manifest), epochs, lr, &self.path(&out)),
            Command::RenderNet { checkpoint, manifest, out } => self.render_net(&self.path(&checkpoint), &self.path(&manifest), &self.path(&out)),
            Command::Eval { pred, gt, metrics, out } => {
                self.eval(&self.path(&pred), &self.path(&gt), &metrics, out.map(|o| self.path(&o)).as_deref())
            }
            Command::Invert {
                checkpoint,
                target,
                gbuffer,
                instances,
                scene,
                mode,
                known,
                out,
            } => {
                let gbuffer = self.path(&gbuffer);
                let instances = match instances {
                    Some(p) => self.path(&p),
                    None => sibling_instances(&gbuffer)?,
                };
                let known = known.map(|k| self.path(&k));
                self.invert(
                    &self.path(&checkpoint),
                    &self.path(&target),
                    &gbuffer,
                    &instances,
                    &self.path(&scene),
                    mode,
                    known.as_deref(),
                    &self.path(&out),
                )
            }
            Command::Benchmark {
                checkpoint,
                manifest,
                indirect_samples,
                out,
            } => self.benchmark(
                &self.path(&checkpoint),
                &self.path(&manifest),
                indirect_samples,
                out.map(|o| self.path(&o)).as_deref(),
            ),
        }
    }

    fn gen_scenes(&self, count: usize, objects: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
        let mut cfg = self.cfg.clone();
        if let Some(o) = objects {
            cfg.objects = o;
        }
        cfg.validate()?;
        let seed = seed.unwrap_or(cfg.seed);
        if count == 0 {
            return Err(CliError::config("count", "need at least one scene"));
        }
        for id in 0..count as u32 {
            let scene = pipeline::build_scene(&cfg, id, seed)?;
            dataio::save_scene(&out.join(scene_file(id)), &scene)?;
        }
        println!("wrote {count} scenes to {}", out.display());
        Ok(())
    }

    fn randomize(&self, inputs: &[PathBuf], per_scene: usize, seed: Option<u64>, out: &Path) -> Result<()> {
        if per_scene == 0 {
            return Err(CliError::config("per_scene", "need at least one draw per scene"));
        }
        let seed = seed.unwrap_or(self.cfg.seed);
        let mut files = Vec::new();
        for p in inputs {
            if p.is_dir() {
                let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                    .map_err(|e| io_err(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| {
                        f.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("scene_") && n.ends_with(".json"))
                    })
                    .collect();
                found.sort();
                files.extend(found);
            } else {
                files.push(p.clone());
            }
        }
        if files.is_empty() {
            return Err(CliError::config("scenes", "no scene files found"));
        }
        let mut manifest = Manifest::default();
        for file in &files {
            let scene = dataio::load_scene(file)?;
            let id = scene.scene_id;
            let scene_name = scene_file(id);
            dataio::save_scene(&out.join(&scene_name), &scene)?;
            let geo = Geometry::new(&self.cfg, scene);
            let (gname, iname) = (format!("scene_{id:04}_gbuffer.tensor"), format!("scene_{id:04}_instances.tensor"));
            dataio::save_gbuffer(&out.join(&gname), &out.join(&iname), &geo.gbuffer)?;
            for k in 0..per_scene {
                let (ls, ms) = pipeline::draw_seeds(seed, id, k);
                let view = pipeline::randomize_view(&self.cfg, &geo, ls, ms)?;
                let stem = format!("scene_{id:04}_draw_{k:03}");
                let (mname, lname) = (format!("{stem}_materials.tensor"), format!("{stem}_lights.tensor"));
                dataio::save_material_maps(&out.join(&mname), &view.maps)?;
                dataio::save_light_maps(&out.join(&lname), &view.lights)?;
                manifest.samples.push(ManifestSample {
                    scene_id: id,
                    scene: scene_name.clone(),
                    light_seed: ls,
                    material_seed: ms,
                    light: view.light,
                    materials: view.materials,
                    gbuffer: gname.clone(),
                    instances: iname.clone(),
                    material_maps: mname,
                    light_maps: lname,
                    light_buffers: None,
                    ldr_preview: None,
                });
            }
        }
        dataio::write_manifest(&out.join("manifest.json"), &manifest)?;
        println!("wrote {} samples to {}", manifest.samples.len(), out.join("manifest.json").display());
        Ok(())
    }

    fn render_oracle(&self, manifest_path: &Path, indirect_samples: Option<usize>, out: &Path) -> Result<()> {
        let mut shade = self.cfg.effective_shade();
        if let Some(n) = indirect_samples {
            shade = ShadeConfig {
                indirect_samples: n,
                indirect_glossy_samples: n,
                ..shade
            };
        }
        let samples = Samples::load(manifest_path)?;
        let mut manifest = samples.relocated(out)?;
        for (i, entry) in manifest.samples.iter_mut().enumerate() {
            let (geo, view) = samples.view(i)?;
            let buffers = pipeline::oracle_buffers(&geo, &view, &shade)?;
            let (bname, pname) = (format!("sample_{i:05}_buffers.tensor"), format!("sample_{i:05}.png"));
            dataio::save_light_buffers(&out.join(&bname), &buffers)?;
            dataio::save_png(&pipeline::oracle_image(&buffers, &view)?, &out.join(&pname))?;
            entry.light_buffers = Some(bname);
            entry.ldr_preview = Some(pname);
        }
        dataio::write_manifest(&out.join("manifest.json"), &manifest)?;
        println!("shaded {} samples into {}", manifest.samples.len(), out.display());
        Ok(())
    }

    fn train(&self, manifest_path: &Path, epochs: Option<usize>, lr: Option<f64>, out: &Path) -> Result<()> {
        let mut tcfg = self.cfg.train;
        tcfg.epochs = epochs.unwrap_or(tcfg.epochs);
        tcfg.learning_rate = lr.unwrap_or(tcfg.learning_rate);
        tcfg.validate()?;
        let samples = Samples::load(manifest_path)?;
        let mut data = Vec::with_capacity(samples.manifest.samples.len());
        for (i, s) in samples.manifest.samples.iter().enumerate() {
            let rel = s
                .light_buffers
                .as_ref()
                .ok_or_else(|| CliError::config("manifest", format!("sample {i} has no light buffers; run render-oracle first")))?;
            let buffers = dataio::load_light_buffers(&samples.dir.join(rel))?;
            let (geo, view) = samples.view(i)?;
            data.push(pipeline::train_sample(&geo, &view, &buffers)?);
        }
        let ckpt = out.join("rendernet.ckpt");
        let outcome = train(&data, self.cfg.arch, &tcfg, |epoch, params, loss| {
            println!("epoch {epoch}: mean loss {loss:.6}");
            save_checkpoint(&ckpt, params)
        })?;
        let loss_path = out.join("loss.csv");
        let mut w = csv::Writer::from_writer(dataio::create_text(&loss_path)?);
        w.write_record(["epoch", "mean_loss"]).map_err(|e| io_err(&loss_path, e))?;
        for (epoch, loss) in outcome.loss_history.iter().enumerate() {
            w.write_record([epoch.to_string(), format!("{loss}")])
                .map_err(|e| io_err(&loss_path, e))?;
        }
        w.flush().map_err(|e| io_err(&loss_path, e))?;
        save_checkpoint(&ckpt, &outcome.params)?;
        Ok(())
    }

    fn render_net(&self, checkpoint: &Path, manifest_path: &Path, out: &Path) -> Result<()> {
        let params = load_checkpoint(checkpoint)?;
        let samples = Samples::load(manifest_path)?;
        let mut manifest = samples.relocated(out)?;
        for (i, entry) in manifest.samples.iter_mut().enumerate() {
            let (geo, view) = samples.view(i)?;
            let field = forward(&params, &assemble_input(&geo.gbuffer, &view.maps, &view.lights)?)?;
            let buffers = field_to_buffers(&field);
            let (bname, pname) = (format!("sample_{i:05}_buffers.tensor"), format!("sample_{i:05}.png"));
            dataio::save_light_buffers(&out.join(&bname), &buffers)?;
            dataio::save_png(&pipeline::oracle_image(&buffers, &view)?, &out.join(&pname))?;
            entry.light_buffers = Some(bname);
            entry.ldr_preview = Some(pname);
        }
        dataio::write_manifest(&out.join("manifest.json"), &manifest)?;
        println!("rendered {} samples into {}", manifest.samples.len(), out.display());
        Ok(())
    }

    fn eval(&self, pred: &Path, gt: &Path, metrics: &[String], out: Option<&Path>) -> Result<()> {
        for m in metrics {
            if m != "psnr" && m != "ssim" {
                return Err(CliError::config("metrics", format!("unknown metric {m:?} (expected psnr, ssim)")));
            }
        }
        let pairs = image_pairs(pred, gt)?;
        let mut totals: BTreeMap<String, f64> = metrics.iter().map(|m| (m.clone(), 0.0)).collect();
        for (p, g) in &pairs {
            let (a, b) = (dataio::load_png(p)?, dataio::load_png(g)?);
            for (name, total) in totals.iter_mut() {
                *total += if name == "psnr" { psnr(&a.0, &b.0)? } else { ssim(&a.0, &b.0)? };
            }
        }
        let report = MetricReport {
            metrics: totals.into_iter().map(|(k, v)| (k, v / pairs.len() as f64)).collect(),
            samples: pairs.len(),
            config: BTreeMap::from([("pred".into(), pred.display().to_string()), ("gt".into(), gt.display().to_string())]),
        };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        println!("{json}");
        if let Some(out) = out {
            dataio::write_text(out, &json)?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn invert(
        &self,
        checkpoint: &Path,
        target: &Path,
        gbuffer: &Path,
        instances: &Path,
        scene: &Path,
        mode: RecoverMode,
        known: Option<&Path>,
        out: &Path,
    ) -> Result<()> {
        let net = load_checkpoint(checkpoint)?;
        let target = dataio::load_png(target)?;
        let gb = dataio::load_gbuffer(gbuffer, instances)?;
        let scene = dataio::load_scene(scene)?;
        let known: Known = match known {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::config("known", format!("{}: {e}", p.display())))?
            }
            None => Known::default(),
        };
        let w2c = scene.world_to_camera();
        let problem = RecoveryProblem {
            gbuffer: &gb,
            world_to_camera: w2c,
            scene_id: scene.scene_id,
            target: &target,
            known_light: known.light,
            known_materials: known.materials,
        };
        let r = recover_scene(&net, &problem, mode, &self.cfg.inverse)?;
        let preview = render_view(&net, &gb, w2c, r.light, &r.materials)?;
        dataio::write_text(
            &out.join("recovered.json"),
            &serde_json::to_string_pretty(&r).expect("recovery serializes"),
        )?;
        dataio::save_png(&preview, &out.join("recovered.png"))?;
        println!("recovered with loss {:.6} (init {})", r.loss, r.init);
        Ok(())
    }

    fn benchmark(&self, checkpoint: &Path, manifest_path: &Path, indirect_samples: usize, out: Option<&Path>) -> Result<()> {
        let params = load_checkpoint(checkpoint)?;
        let samples = Samples::load(manifest_path)?;
        let shade = ShadeConfig {
            indirect_samples,
            indirect_glossy_samples: indirect_samples,
            ..self.cfg.shade
        };
        let n = samples.manifest.samples.len();
        if n == 0 {
            return Err(CliError::config("manifest", "no samples"));
        }
        let (mut oracle_s, mut net_s) = (0.0, 0.0);
        for i in 0..n {
            let (geo, view) = samples.view(i)?;
            let (t_oracle, t_net) = time_one(&params, &geo, &view, &shade)?;
            oracle_s += t_oracle;
            net_s += t_net;
        }
        let report = BenchmarkReport::new(oracle_s / n as f64, net_s / n as f64, n, indirect_samples);
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        println!("{json}");
        if let Some(out) = out {
            dataio::write_text(out, &json)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
struct Known {
    light: Option<LightSample>,
    materials: Option<Vec<MaterialSample>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub oracle_ms_per_image: f64,
    pub net_ms_per_image: f64,
    pub ratio: f64,
    pub images: usize,
    pub indirect_samples: usize,
}

impl BenchmarkReport {
    pub fn new(oracle_s: f64, net_s: f64, images: usize, indirect_samples: usize) -> Self {
        BenchmarkReport {
            oracle_ms_per_image: oracle_s * 1e3,
            net_ms_per_image: net_s * 1e3,
            ratio: oracle_s / net_s,
            images,
            indirect_samples,
        }
    }
}

/// Wall time (s) of shading one view with the oracle and with the network.
pub fn time_one(params: &pndr_net::rendernet::NetParams, geo: &Geometry, view: &View, shade: &ShadeConfig) -> Result<(f64, f64)> {
    let t = Instant::now();
    let buffers = pipeline::oracle_buffers(geo, view, shade)?;
    pipeline::oracle_image(&buffers, view)?;
    let t_oracle = t.elapsed().as_secs_f64();
    let t = Instant::now();
    pipeline::net_image(params, geo, view)?;
    Ok((t_oracle, t.elapsed().as_secs_f64()))
}

fn scene_file(id: u32) -> String {
    format!("scene_{id:04}.json")
}

fn sibling_instances(gbuffer: &Path) -> Result<PathBuf> {
    let name = gbuffer.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if !name.contains("gbuffer") {
        return Err(CliError::config(
            "instances",
            format!("cannot derive the instance file from {}", gbuffer.display()),
        ));
    }
    Ok(gbuffer.with_file_name(name.replacen("gbuffer", "instances", 1)))
}

/// Pairs PNGs by file name when given directories.
fn image_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !pred.is_dir() {
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut names: Vec<_> = std::fs::read_dir(pred)
        .map_err(|e| io_err(pred, e))?
        .filter_map(|e| e.ok().map(|e| e.file_name()))
        .filter(|n| n.to_str().is_some_and(|s| s.ends_with(".png")))
        .collect();
    names.sort();
    let pairs: Vec<_> = names.into_iter().map(|n| (pred.join(&n), gt.join(&n))).collect();
    if pairs.is_empty() {
        return Err(CliError::config("pred", format!("no PNG files in {}", pred.display())));
    }
    let missing: Vec<String> = pairs.iter().filter(|(_, g)| !g.exists()).map(|(_, g)| g.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!("missing reference images: {}", missing.join(", "))));
    }
    Ok(pairs)
}

/// A loaded manifest and the directory its paths are relative to.
struct Samples {
    manifest: Manifest,
    dir: PathBuf,
}

impl Samples {
    fn load(path: &Path) -> Result<Self> {
        Ok(Samples {
            manifest: dataio::read_manifest(path)?,
            dir: dataio::manifest_dir(path),
        })
    }

    fn view(&self, i: usize) -> Result<(Geometry, View)> {
        let s = &self.manifest.samples[i];
        let scene = dataio::load_scene(&self.dir.join(&s.scene))?;
        let gbuffer = dataio::load_gbuffer(&self.dir.join(&s.gbuffer), &self.dir.join(&s.instances))?;
        let view = View {
            light_seed: s.light_seed,
            material_seed: s.material_seed,
            light: s.light,
            materials: s.materials.clone(),
            maps: dataio::load_material_maps(&self.dir.join(&s.material_maps))?,
            lights: dataio::load_light_maps(&self.dir.join(&s.light_maps))?,
        };
        Ok((
            Geometry {
                bvh: build_bvh(&scene),
                scene,
                gbuffer,
            },
            view,
        ))
    }

    /// The manifest with its input paths rewritten relative to `out`.
    fn relocated(&self, out: &Path) -> Result<Manifest> {
        std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let mut m = self.manifest.clone();
        let rel = |p: &String| relative_path(out, &self.dir.join(p));
        for s in &mut m.samples {
            s.scene = rel(&s.scene)?;
            s.gbuffer = rel(&s.gbuffer)?;
            s.instances = rel(&s.instances)?;
            s.material_maps = rel(&s.material_maps)?;
            s.light_maps = rel(&s.light_maps)?;
            s.light_buffers = None;
            s.ldr_preview = None;
        }
        Ok(m)
    }
}

/// Path of `target` as seen from directory `base`, with `/` separators.
fn relative_path(base: &Path, target: &Path) -> Result<String> {
    let parts = |p: &Path| -> Result<Vec<String>> {
        let abs = std::path::absolute(p).map_err(|e| io_err(p, e))?;
        let mut out: Vec<String> = Vec::new();
        for c in abs.components() {
            match c {
                Component::Normal(s) => out.push(s.to_string_lossy().into_owned()),
                Component::ParentDir => {
                    out.pop();
                }
                _ => {}
            }
        }
        Ok(out)
    };
    let (b, t) = (parts(base)?, parts(target)?);
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    let mut rel: Vec<String> = vec!["..".into(); b.len() - common];
    rel.extend(t[common..].iter().cloned());
    Ok(rel.join("/"))
}
