//! Subcommand implementations. Every command is a pure function of its
//! inputs and seed: re-running with the same spec produces byte-identical
//! artifacts (atomic writes, no timestamps in outputs).

use clap::{Args, Subcommand};
use csc_core::container::{Checkpoint, Container, Section};
use csc_core::corpus::{desk_corpus, synthetic_image, SyntheticKind};
use csc_core::denoise::{denoise_pa, denoise_strided_csc, DenoiseConfig, DenoiseReport};
use csc_core::dict::LocalDictionary;
use csc_core::image::{add_gaussian_noise, psnr, Boundary, Image};
use csc_core::lista::{desk_preset, paper_preset, train_from, ListaParams, TrainerState};
use csc_core::pgm;
use csc_core::pursuit::Acceleration;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Numeric(m) => write!(f, "numerical: {m}"),
        }
    }
}

impl From<csc_core::Error> for CliError {
    fn from(e: csc_core::Error) -> Self {
        use csc_core::Error::*;
        match e {
            ShapeMismatch(_) | InvalidArgument(_) => CliError::Usage(e.to_string()),
            OutOfRange { .. } | Format(_) | Io(_) => CliError::Data(e.to_string()),
            NonFinite(_) | Diverged { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Subcommand)]
pub enum Command {
    /// Add seeded white Gaussian noise to an image.
    Noise(NoiseArgs),
    /// Denoise an image with one of the estimators.
    Denoise(DenoiseArgs),
    /// Train the unrolled denoiser on a corpus of PGM images.
    Train(TrainArgs),
    /// PSNR table over a corpus, methods and noise seeds.
    Eval(EvalArgs),
    /// Write the built-in synthetic test images as PGM files.
    Synth(SynthArgs),
}

pub fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Noise(a) => cmd_noise(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

// ---- shared helpers ----

fn load_image(path: &Path) -> Result<Image<f64>, CliError> {
    if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
        return Ok(pgm::read(path)?);
    }
    let container = Container::read(path)?;
    for section in &container.sections {
        if let Section::FloatImage { image, .. } = section {
            return Ok(image.clone());
        }
    }
    Err(CliError::Data(format!(
        "{} contains no image section",
        path.display()
    )))
}

fn preview_path(output: &Path, avoid: &Path) -> PathBuf {
    let candidate = output.with_extension("pgm");
    if candidate == *output || candidate == *avoid {
        let mut os = output.as_os_str().to_owned();
        os.push(".preview.pgm");
        PathBuf::from(os)
    } else {
        candidate
    }
}

fn write_text_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("txt.tmp");
    std::fs::write(&tmp, text).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, Image<f64>)>, CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("pgm"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(CliError::Data(format!(
            "no .pgm files in {}",
            dir.display()
        )));
    }
    entries
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            Ok((name, pgm::read::<f64>(&p)?))
        })
        .collect()
}

fn resolve_dict(
    dict_file: &Option<PathBuf>,
    patch: usize,
    atoms_per_dim: usize,
) -> Result<(LocalDictionary<f64>, String), CliError> {
    match dict_file {
        Some(path) => {
            let container = Container::read(path)?;
            for section in &container.sections {
                if let Section::Dictionary {
                    dict, provenance, ..
                } = section
                {
                    return Ok((dict.clone(), provenance.clone()));
                }
            }
            Err(CliError::Data(format!(
                "{} contains no dictionary section",
                path.display()
            )))
        }
        None => {
            let d = LocalDictionary::overcomplete_dct(patch, atoms_per_dim)?;
            Ok((d, format!("overcomplete_dct({patch},{atoms_per_dim})")))
        }
    }
}

fn tool_metadata() -> Vec<(String, String)> {
    vec![
        ("tool".into(), "csc".into()),
        ("tool_version".into(), env!("CARGO_PKG_VERSION").into()),
    ]
}

// ---- noise ----

#[derive(Args)]
pub struct NoiseArgs {
    /// Input image (.pgm or container).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output container path; an 8-bit preview is written next to it.
    #[arg(long)]
    output: PathBuf,
}

fn cmd_noise(a: NoiseArgs) -> CmdResult {
    if a.sigma < 0.0 {
        return Err(CliError::usage("sigma must be non-negative"));
    }
    let img = load_image(&a.input)?;
    let noisy = add_gaussian_noise(&img, a.sigma, a.seed);
    let mut metadata = tool_metadata();
    metadata.push(("sigma".into(), format!("{}", a.sigma)));
    metadata.push(("seed".into(), format!("{}", a.seed)));
    let container = Container {
        metadata,
        sections: vec![Section::FloatImage {
            name: "image".into(),
            image: noisy.clone(),
        }],
    };
    container.write(&a.output)?;
    pgm::write(preview_path(&a.output, &a.input), &noisy)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

// ---- denoise ----

#[derive(Args)]
pub struct DenoiseArgs {
    /// pa | csc | cscnet
    #[arg(long)]
    method: String,
    #[arg(long)]
    noisy: PathBuf,
    /// Clean reference; enables PSNR reporting.
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    /// Stride for method=csc.
    #[arg(long)]
    stride: Option<usize>,
    /// Comma-separated stride sweep (csc only), e.g. 1,4,8.
    #[arg(long)]
    stride_list: Option<String>,
    /// Dictionary container; defaults to the overcomplete DCT.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    dict_patch: usize,
    #[arg(long, default_value_t = 16)]
    dict_atoms: usize,
    /// Model checkpoint (method=cscnet).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Estimate container output; preview PGM written next to it.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Structured text report path.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1.1)]
    epsilon_factor: f64,
    /// Skip the least-squares refit on the recovered support.
    #[arg(long)]
    no_debias: bool,
    /// Use the accelerated solver inside the pursuits.
    #[arg(long)]
    fista: bool,
    /// Periodic patch windows for method=pa.
    #[arg(long)]
    pa_periodic: bool,
}

fn denoise_cfg(a: &DenoiseArgs) -> DenoiseConfig<f64> {
    DenoiseConfig {
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        acceleration: if a.fista {
            Acceleration::Fista
        } else {
            Acceleration::Ista
        },
        epsilon_factor: a.epsilon_factor,
        debias: !a.no_debias,
        pa_boundary: if a.pa_periodic {
            Boundary::Periodic
        } else {
            Boundary::Clamped
        },
        ..DenoiseConfig::default()
    }
}

fn report_lines(report: &DenoiseReport<f64>) -> String {
    let mut s = report.config_echo.clone();
    if let Some(p) = report.psnr_vs_clean {
        let _ = writeln!(s, "psnr_unclamped={p:.6}");
    }
    if let Some(p) = report.psnr_vs_clean_clamped {
        let _ = writeln!(s, "psnr_clamped={p:.6}");
    }
    if let Some(shifts) = &report.per_shift_psnr {
        let joined: Vec<String> = shifts.iter().map(|p| format!("{p:.6}")).collect();
        let _ = writeln!(s, "per_shift_psnr={}", joined.join(","));
    }
    s
}

fn run_cscnet(params: &ListaParams<f64>, noisy: &Image<f64>) -> Result<Image<f64>, CliError> {
    let q = params.stride();
    let (h, w) = noisy.dims();
    let (ph, pw) = (h.div_ceil(q) * q, w.div_ceil(q) * q);
    // Periodic padding up to the next stride multiple, cropped back after.
    let padded = if (ph, pw) == (h, w) {
        noisy.clone()
    } else {
        noisy.tile_to(ph, pw)
    };
    let out = params.forward(&padded)?;
    Ok(out.estimate.crop(0, 0, h, w)?)
}

fn cmd_denoise(a: DenoiseArgs) -> CmdResult {
    let noisy = load_image(&a.noisy)?;
    let clean = a.clean.as_deref().map(load_image).transpose()?;
    let cfg = denoise_cfg(&a);

    let mut text;
    let estimate: Option<Image<f64>>;
    match a.method.as_str() {
        "pa" => {
            if a.stride.is_some() || a.stride_list.is_some() {
                return Err(CliError::usage("--stride does not apply to method=pa"));
            }
            let (dict, _) = resolve_dict(&a.dict, a.dict_patch, a.dict_atoms)?;
            let rep = denoise_pa(&noisy, &dict, a.sigma, &cfg, clean.as_ref())?;
            text = report_lines(&rep);
            estimate = Some(rep.estimate);
        }
        "csc" => {
            let (dict, _) = resolve_dict(&a.dict, a.dict_patch, a.dict_atoms)?;
            if let Some(list) = &a.stride_list {
                if a.output.is_some() {
                    return Err(CliError::usage(
                        "--output does not apply to a stride sweep; use --report",
                    ));
                }
                let strides: Vec<usize> = list
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CliError::usage("bad --stride-list"))?;
                text = String::new();
                let _ = writeln!(text, "method=csc_sweep");
                let _ = writeln!(text, "sigma={}", a.sigma);
                let mut last: Option<f64> = None;
                let mut monotone = true;
                for &q in &strides {
                    let rep = denoise_strided_csc(&noisy, &dict, a.sigma, q, &cfg, clean.as_ref())?;
                    match rep.psnr_vs_clean {
                        Some(p) => {
                            let _ = writeln!(text, "stride={q} psnr_unclamped={p:.6}");
                            if let Some(prev) = last {
                                monotone &= p > prev;
                            }
                            last = Some(p);
                        }
                        None => {
                            let _ = writeln!(text, "stride={q} psnr_unclamped=n/a");
                        }
                    }
                }
                if clean.is_some() {
                    let _ = writeln!(text, "monotone_trend={monotone}");
                }
                estimate = None;
            } else {
                let q = a
                    .stride
                    .ok_or_else(|| CliError::usage("method=csc requires --stride"))?;
                let rep = denoise_strided_csc(&noisy, &dict, a.sigma, q, &cfg, clean.as_ref())?;
                text = report_lines(&rep);
                estimate = Some(rep.estimate);
            }
        }
        "cscnet" => {
            if a.stride.is_some() || a.stride_list.is_some() {
                return Err(CliError::usage(
                    "stride comes from the checkpoint for method=cscnet",
                ));
            }
            let path = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::usage("method=cscnet requires --checkpoint"))?;
            let container = Container::read(path)?;
            let mut params = None;
            for section in &container.sections {
                if let Section::Checkpoint { checkpoint, .. } = section {
                    params = Some(checkpoint.params.clone());
                    break;
                }
            }
            let params = params.ok_or_else(|| {
                CliError::Data(format!("{} contains no checkpoint", path.display()))
            })?;
            let est = run_cscnet(&params, &noisy)?;
            text = String::new();
            let _ = writeln!(text, "method=cscnet");
            let _ = writeln!(text, "stride={}", params.stride());
            let _ = writeln!(text, "layers={}", params.layers());
            let _ = writeln!(text, "num_filters={}", params.num_filters());
            let _ = writeln!(text, "filter_side={}", params.filter_side());
            if let Some(clean) = &clean {
                let p = psnr(clean, &est, 255.0)?;
                let pc = psnr(clean, &est.clamped(255.0), 255.0)?;
                let _ = writeln!(text, "psnr_unclamped={p:.6}");
                let _ = writeln!(text, "psnr_clamped={pc:.6}");
            }
            estimate = Some(est);
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown method {other}; expected pa|csc|cscnet"
            )));
        }
    }

    if let (Some(output), Some(est)) = (&a.output, &estimate) {
        let container = Container {
            metadata: tool_metadata(),
            sections: vec![
                Section::FloatImage {
                    name: "estimate".into(),
                    image: est.clone(),
                },
                Section::Report {
                    name: "report".into(),
                    text: text.clone(),
                },
            ],
        };
        container.write(output)?;
        pgm::write(preview_path(output, &a.noisy), est)?;
    }
    if let Some(report) = &a.report {
        write_text_atomic(report, &text)?;
    }
    print!("{text}");
    Ok(())
}

// ---- train ----

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of clean .pgm training images.
    #[arg(long)]
    corpus: PathBuf,
    /// desk | paper
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Checkpoint container output.
    #[arg(long)]
    output: PathBuf,
    /// Loss curve CSV (epoch, mean_loss, lr).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Continue from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let images: Vec<Image<f64>> = load_corpus(&a.corpus)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let (arch, mut cfg) = match a.preset.as_str() {
        "desk" => desk_preset::<f64>(),
        "paper" => paper_preset::<f64>(),
        other => return Err(CliError::usage(format!("unknown preset {other}"))),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.crop {
        cfg.crop_size = v;
    }

    let start = match &a.resume {
        Some(path) => {
            let container = Container::read(path)?;
            let mut state = None;
            for section in container.sections {
                if let Section::Checkpoint { checkpoint, .. } = section {
                    state = Some(checkpoint.into_state());
                    break;
                }
            }
            state.ok_or_else(|| {
                CliError::Data(format!("{} contains no checkpoint", path.display()))
            })?
        }
        None => TrainerState::fresh(ListaParams::init(
            cfg.seed,
            arch.num_filters,
            arch.filter_side,
            arch.stride,
            arch.layers,
            (cfg.crop_size, cfg.crop_size),
        )?),
    };

    let (state, history) = train_from(&images, start, &cfg)?;
    let echo = state.config_echo(&cfg);
    let checkpoint = Checkpoint::from_state(&state, echo);
    let mut metadata = tool_metadata();
    metadata.push(("preset".into(), a.preset.clone()));
    let container = Container {
        metadata,
        sections: vec![Section::Checkpoint {
            name: "model".into(),
            checkpoint,
        }],
    };
    container.write(&a.output)?;

    if let Some(curve) = &a.curve {
        let mut csv = String::from("epoch,mean_loss,lr\n");
        for e in &history {
            let _ = writeln!(csv, "{},{:.6e},{:.6e}", e.epoch, e.mean_loss, e.lr);
        }
        write_text_atomic(curve, &csv)?;
    }
    if let Some(last) = history.last() {
        println!(
            "trained to epoch {} (mean loss {:.6e}); wrote {}",
            last.epoch,
            last.mean_loss,
            a.output.display()
        );
    } else {
        println!("no epochs to run; wrote {}", a.output.display());
    }
    Ok(())
}

// ---- eval ----

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of clean .pgm evaluation images.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    sigma: f64,
    /// Comma-separated noise seeds.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Comma-separated methods: pa, csc:<stride>, cscnet.
    #[arg(long, default_value = "pa,csc:8")]
    methods: String,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    dict_patch: usize,
    #[arg(long, default_value_t = 16)]
    dict_atoms: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1.1)]
    epsilon_factor: f64,
}

enum EvalMethod {
    Pa,
    Csc(usize),
    Net(Box<ListaParams<f64>>),
}

impl EvalMethod {
    fn label(&self) -> String {
        match self {
            EvalMethod::Pa => "pa".into(),
            EvalMethod::Csc(q) => format!("csc_q{q}"),
            EvalMethod::Net(_) => "cscnet".into(),
        }
    }
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let corpus = load_corpus(&a.corpus)?;
    let seeds: Vec<u64> = a
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage("bad --seeds"))?;
    let (dict, _) = resolve_dict(&a.dict, a.dict_patch, a.dict_atoms)?;
    let cfg = DenoiseConfig {
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        epsilon_factor: a.epsilon_factor,
        ..DenoiseConfig::default()
    };

    let mut methods = Vec::new();
    for item in a.methods.split(',') {
        let item = item.trim();
        if item == "pa" {
            methods.push(EvalMethod::Pa);
        } else if item == "cscnet" {
            let path = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::usage("method cscnet requires --checkpoint"))?;
            let container = Container::read(path)?;
            let mut params = None;
            for section in &container.sections {
                if let Section::Checkpoint { checkpoint, .. } = section {
                    params = Some(checkpoint.params.clone());
                }
            }
            let params = params.ok_or_else(|| {
                CliError::Data(format!("{} contains no checkpoint", path.display()))
            })?;
            methods.push(EvalMethod::Net(Box::new(params)));
        } else if let Some(q) = item.strip_prefix("csc:") {
            let q: usize = q
                .parse()
                .map_err(|_| CliError::usage(format!("bad method {item}")))?;
            methods.push(EvalMethod::Csc(q));
        } else {
            return Err(CliError::usage(format!(
                "unknown method {item}; expected pa, csc:<stride> or cscnet"
            )));
        }
    }

    let mut csv = String::from("image,seed,noisy_psnr");
    for m in &methods {
        let _ = write!(csv, ",{}", m.label());
    }
    csv.push('\n');

    let mut sums = vec![0.0f64; methods.len() + 1];
    let mut rows = 0usize;
    for (name, clean) in &corpus {
        for &seed in &seeds {
            let noisy = add_gaussian_noise(clean, a.sigma, seed);
            let noisy_psnr = psnr(clean, &noisy, 255.0)?;
            let _ = write!(csv, "{name},{seed},{noisy_psnr:.6}");
            sums[0] += noisy_psnr;
            for (i, m) in methods.iter().enumerate() {
                let value = match m {
                    EvalMethod::Pa => denoise_pa(&noisy, &dict, a.sigma, &cfg, Some(clean))?
                        .psnr_vs_clean
                        .unwrap(),
                    EvalMethod::Csc(q) => {
                        denoise_strided_csc(&noisy, &dict, a.sigma, *q, &cfg, Some(clean))?
                            .psnr_vs_clean
                            .unwrap()
                    }
                    EvalMethod::Net(params) => {
                        let est = run_cscnet(params, &noisy)?;
                        psnr(clean, &est, 255.0)?
                    }
                };
                let _ = write!(csv, ",{value:.6}");
                sums[i + 1] += value;
            }
            csv.push('\n');
            rows += 1;
        }
    }
    let _ = write!(csv, "mean,-,{:.6}", sums[0] / rows as f64);
    for s in &sums[1..] {
        let _ = write!(csv, ",{:.6}", s / rows as f64);
    }
    csv.push('\n');
    write_text_atomic(&a.output, &csv)?;
    print!("{csv}");
    Ok(())
}

// ---- synth ----

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for the built-in images.
    #[arg(long)]
    outdir: PathBuf,
    #[arg(long, default_value_t = 64)]
    side: usize,
    /// Write one named kind instead of the whole set.
    #[arg(long)]
    kind: Option<String>,
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    std::fs::create_dir_all(&a.outdir).map_err(|e| CliError::Data(e.to_string()))?;
    let images: Vec<(String, Image<f64>)> = match &a.kind {
        Some(name) => {
            let kind = SyntheticKind::from_name(name)
                .ok_or_else(|| CliError::usage(format!("unknown kind {name}")))?;
            vec![(name.clone(), synthetic_image(kind, a.side, a.side))]
        }
        None => desk_corpus(a.side),
    };
    for (name, img) in &images {
        let path = a.outdir.join(format!("{name}.pgm"));
        pgm::write(&path, img)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
