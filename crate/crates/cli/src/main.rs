//! `scft`: run the swarm acquisition pipeline from a JSON experiment config.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use scft_core::codebook::build_codebook;
use scft_core::decoder::decode_spectrum_with;
use scft_core::eval::{sweep, EvalReport, SweepAxis};
use scft_core::pipeline::{acquire, checked_codebook};
use scft_core::swarm_link::{fuse_partial, FILE_EXTENSION};
use scft_core::{
    decode_report, encode_report, fuse, verify_code_uniqueness, Codebook, ExperimentConfig,
    SpectrumEstimate,
};

const DEFAULT_SNR_AXIS: [f64; 6] = [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0];
const DEFAULT_RESOLUTION_AXIS: [f64; 3] = [100e6, 10e6, 1e6];
const DEFAULT_TRIALS: usize = 50;

#[derive(Parser)]
#[command(
    name = "scft",
    version,
    about = "Swarm sub-Nyquist spectrum acquisition simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON with swarm, scenario and policies sections).
    #[arg(long)]
    config: PathBuf,
    /// Output directory. Created if missing; nothing is written elsewhere.
    #[arg(long, default_value = "scft-out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the code matrix and collision report. Exits 3 on collisions.
    Codebook(Common),
    /// Run the pipeline once: per-node reports, decoded spectrum, detections.
    Simulate(Common),
    /// Fuse and decode previously written node reports.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Decode with the nodes present when some reports are missing.
        #[arg(long)]
        allow_missing_node: bool,
        /// Node report files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Monte-Carlo sweep over SNR or resolution.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Axis::Snr)]
        axis: Axis,
        /// Trials per axis point.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
        /// Axis values, comma separated (dB for snr, Hz for resolution).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Draw carriers off the channel grid.
        #[arg(long)]
        off_grid: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Resolution,
}

enum Failure {
    Core(scft_core::Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Collisions(usize),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use scft_core::Error as E;
        match self {
            Failure::Core(
                E::Config { .. } | E::Validation { .. } | E::Parse { .. } | E::Wire(_),
            ) => 1,
            Failure::Core(E::Ambiguity { .. }) | Failure::Collisions(_) => 3,
            Failure::Core(_) | Failure::Io { .. } => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Failure::Collisions(n) => write!(f, "{n} channel pairs share a code column"),
        }
    }
}

impl From<scft_core::Error> for Failure {
    fn from(e: scft_core::Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T> = Result<T, Failure>;

/// Provenance echoed as comment lines at the top of every text output.
struct Manifest {
    subcommand: &'static str,
    config: PathBuf,
    config_sha256: String,
    seed: u64,
    out: PathBuf,
    extra: Vec<(&'static str, String)>,
}

impl Manifest {
    fn header(&self, comment: &str) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &str| {
            let _ = writeln!(s, "{comment} {k}: {v}");
        };
        line("tool", concat!("scft ", env!("CARGO_PKG_VERSION")));
        line("subcommand", self.subcommand);
        line("config", &self.config.display().to_string());
        line("config_sha256", &self.config_sha256);
        line("seed", &self.seed.to_string());
        line("out", &self.out.display().to_string());
        for (k, v) in &self.extra {
            line(k, v);
        }
        s
    }
}

struct Run {
    cfg: ExperimentConfig,
    manifest: Manifest,
}

fn load(common: &Common, subcommand: &'static str) -> Outcome<Run> {
    let text = fs::read(&common.config).map_err(|e| {
        Failure::Core(scft_core::Error::Parse {
            path: common.config.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let doc = std::str::from_utf8(&text).map_err(|e| {
        Failure::Core(scft_core::Error::Parse {
            path: common.config.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let mut cfg = ExperimentConfig::from_json_str(doc)?;
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
    }
    let manifest = Manifest {
        subcommand,
        config: common.config.clone(),
        config_sha256: hex::encode(Sha256::digest(&text)),
        seed: cfg.scenario.seed,
        out: common.out.clone(),
        extra: Vec::new(),
    };
    Ok(Run { cfg, manifest })
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|source| Failure::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Failure::Io { path, source })
}

fn codebook_csv(cb: &Codebook) -> String {
    let mut s = String::from("node_id,m_points");
    for q in 0..cb.q_total() {
        let _ = write!(s, ",q{q}");
    }
    s.push('\n');
    for (row, node) in cb.nodes().iter().enumerate() {
        let _ = write!(s, "{},{}", node.node_id, node.m_points);
        for c in cb.row(row) {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

fn spectrum_csvs(est: &SpectrumEstimate) -> (String, String) {
    let mut spectrum = String::from("channel,frequency_hz,power\n");
    for (q, p) in est.powers.iter().enumerate() {
        let _ = writeln!(spectrum, "{q},{},{p}", q as f64 * est.resolution_hz);
    }
    let mut detections = String::from("channel,frequency_hz,power\n");
    for d in &est.detections {
        let _ = writeln!(detections, "{},{},{}", d.channel, d.frequency_hz, d.power);
    }
    (spectrum, detections)
}

fn write_estimate(run: &Run, est: &SpectrumEstimate) -> Outcome<()> {
    let header = run.manifest.header("#");
    let (spectrum, detections) = spectrum_csvs(est);
    let out = &run.manifest.out;
    write_file(out, "spectrum.csv", (header.clone() + &spectrum).as_bytes())?;
    write_file(out, "detections.csv", (header + &detections).as_bytes())
}

fn cmd_codebook(common: &Common) -> Outcome<()> {
    let run = load(common, "codebook")?;
    run.cfg.swarm.validate()?;
    let cb = build_codebook(&run.cfg.swarm)?;
    let report = verify_code_uniqueness(&cb);
    let header = run.manifest.header("#");
    write_file(
        &common.out,
        "codebook.csv",
        (header.clone() + &codebook_csv(&cb)).as_bytes(),
    )?;
    let mut collisions = String::from("channel_a,channel_b\n");
    for (a, b) in &report.pairs {
        let _ = writeln!(collisions, "{a},{b}");
    }
    write_file(
        &common.out,
        "collisions.csv",
        (header + &collisions).as_bytes(),
    )?;
    if report.is_empty() {
        Ok(())
    } else {
        Err(Failure::Collisions(report.pairs.len()))
    }
}

fn cmd_simulate(common: &Common) -> Outcome<()> {
    let run = load(common, "simulate")?;
    let acq = acquire(&run.cfg.scenario, &run.cfg.swarm, &run.cfg.policies)?;
    for report in &acq.reports {
        let bytes = encode_report(report).map_err(scft_core::Error::from)?;
        write_file(
            &common.out,
            &format!("node_{}.{FILE_EXTENSION}", report.node_id),
            &bytes,
        )?;
    }
    write_estimate(&run, &acq.estimate)
}

fn cmd_decode(common: &Common, allow_missing_node: bool, paths: &[PathBuf]) -> Outcome<()> {
    let run = load(common, "decode")?;
    run.cfg.swarm.validate()?;
    run.cfg.policies.validate()?;
    let cb = checked_codebook(&run.cfg.swarm)?;
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(path).map_err(|source| Failure::Io {
            path: path.clone(),
            source,
        })?;
        let report = decode_report(&bytes).map_err(|e| {
            Failure::Core(scft_core::Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        })?;
        reports.push(report);
    }
    let threshold = run.cfg.policies.detection;
    let est = if allow_missing_node || run.cfg.policies.allow_missing_node {
        let (ys, partial) = fuse_partial(&reports, &cb)?;
        decode_spectrum_with(&ys, &partial, threshold)?
    } else {
        decode_spectrum_with(&fuse(&reports, &cb)?, &cb, threshold)?
    };
    write_estimate(&run, &est)
}

fn sweep_outputs(report: &EvalReport, header: &str) -> (String, String) {
    let mut csv = String::from(header);
    csv.push_str("axis_value,rmse_relative,p_detect,p_false_alarm,k_trials,decoded_floor_rel\n");
    let mut dat = String::from(header);
    let _ = writeln!(
        dat,
        "# axis_value rmse_relative p_detect p_false_alarm k_trials decoded_floor_rel"
    );
    for p in &report.points {
        let rmse = p.rmse_relative.map(|r| r.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            p.axis_value,
            rmse.clone().unwrap_or_default(),
            p.p_detect,
            p.p_false_alarm,
            p.k_trials,
            p.decoded_floor_rel
        );
        let _ = writeln!(
            dat,
            "{} {} {} {} {} {}",
            p.axis_value,
            rmse.unwrap_or_else(|| "NaN".into()),
            p.p_detect,
            p.p_false_alarm,
            p.k_trials,
            p.decoded_floor_rel
        );
    }
    (csv, dat)
}

fn cmd_sweep(
    common: &Common,
    axis: Axis,
    k: Option<u64>,
    values: &[f64],
    off_grid: bool,
) -> Outcome<()> {
    let mut run = load(common, "sweep")?;
    if off_grid {
        run.cfg.policies.off_grid = true;
    }
    run.cfg.validate()?;
    let defaults = &run.cfg.policies.sweep;
    let pick = |configured: &[f64], fallback: &[f64]| {
        if !values.is_empty() {
            values.to_vec()
        } else if !configured.is_empty() {
            configured.to_vec()
        } else {
            fallback.to_vec()
        }
    };
    let axis = match axis {
        Axis::Snr => SweepAxis::SnrDb(pick(&defaults.snr_db, &DEFAULT_SNR_AXIS)),
        Axis::Resolution => {
            SweepAxis::ResolutionHz(pick(&defaults.resolution_hz, &DEFAULT_RESOLUTION_AXIS))
        }
    };
    let k = k
        .map(|k| k as usize)
        .or(defaults.k)
        .unwrap_or(DEFAULT_TRIALS);
    let report = sweep(&axis, &run.cfg, k, run.cfg.scenario.seed)?;
    run.manifest.extra = vec![
        ("axis", report.axis.to_string()),
        ("k_trials", report.k_trials.to_string()),
        ("capture_duration_s", report.capture_duration_s.to_string()),
        ("off_grid", run.cfg.policies.off_grid.to_string()),
    ];
    let (csv, dat) = sweep_outputs(&report, &run.manifest.header("#"));
    write_file(&common.out, "sweep.csv", csv.as_bytes())?;
    write_file(&common.out, "sweep.dat", dat.as_bytes())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Codebook(c) => cmd_codebook(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Decode {
            common,
            allow_missing_node,
            reports,
        } => cmd_decode(common, *allow_missing_node, reports),
        Command::Sweep {
            common,
            axis,
            k,
            values,
            off_grid,
        } => cmd_sweep(common, *axis, *k, values, *off_grid),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scft: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
