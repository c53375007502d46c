//! The `resonator` command line.
//!
//! Every subcommand assembles its outputs in memory and writes them only
//! after the whole computation succeeded. Failures print a one-line JSON
//! error record on stderr. Exit codes: 0 success, 2 usage, 3 data error,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::cpw::{self, CpwGeometry, KiResult};
use crate::delay::{correct, fit_delay};
use crate::error::{Error, ErrorClass, Result};
use crate::fit::{fit_pipeline, FitConfig, ResonatorFit};
use crate::format::{format_parenthetical, ghz};
use crate::io::{
    parse_trace, sidecar_path, table_to_string, InputDigest, OutputBatch, Quantity, ResultFile,
    ResultKind, S21Format,
};
use crate::notch::{synth_trace, NoiseSpec, NotchParams};
use crate::reference;
use crate::tls::{self, QiSurface, RegimeReport, RegimeThresholds, TlsFit};
use crate::trace::{Band, ScanKind, Trace, TraceMeta};

/// Environment variable naming a default fit-configuration file.
pub const CONFIG_ENV: &str = "RESONATOR_FIT_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "resonator", version, about = "Notch-coupled CPW resonator analysis")]
struct Cli {
    /// Leave the timestamp out of result files.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a wide and a narrow scan of one resonance.
    Synth(SynthArgs),
    /// Fit the electrical delay of a wide scan.
    Delay(DelayArgs),
    /// Full delay + phase-model fit of a wide/narrow scan pair.
    Fit(FitArgs),
    /// CPW line constants from geometry.
    Cpw(CpwArgs),
    /// Kinetic inductance from measured and model frequencies.
    Ki(KiArgs),
    /// Assemble fits over temperature and power into a Qi surface.
    Sweep(SweepArgs),
    /// Compare two sweeps cell by cell.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Reim,
    Dbdeg,
}

impl From<FormatArg> for S21Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Reim => S21Format::ReIm,
            FormatArg::Dbdeg => S21Format::DbDeg,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Resonance frequency, Hz.
    #[arg(long)]
    f0: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    qc: f64,
    /// Asymmetry, Hz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta_omega: f64,
    /// Phase offset, rad.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    phi0: f64,
    /// Electrical delay, s.
    #[arg(long, default_value_t = 0.0)]
    delay: f64,
    #[arg(long, default_value_t = 1.0)]
    amp: f64,
    /// Narrow-scan span, Hz [default: two linewidths].
    #[arg(long)]
    narrow_span: Option<f64>,
    #[arg(long, default_value_t = 201)]
    narrow_points: usize,
    /// Wide-scan span in units of the narrow span.
    #[arg(long, default_value_t = 100.0)]
    wide_factor: f64,
    #[arg(long, default_value_t = 2001)]
    wide_points: usize,
    /// Noise standard deviation per quadrature.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Noise seed; the wide scan uses seed + 1.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    device: String,
    #[arg(long, default_value_t = 1)]
    resonator: u8,
    #[arg(long)]
    temperature_mk: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    power_dbm: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Reim)]
    format: FormatArg,
    /// Output path of the wide scan.
    #[arg(long)]
    wide: PathBuf,
    /// Output path of the narrow scan.
    #[arg(long)]
    narrow: PathBuf,
}

#[derive(Debug, Args)]
struct DelayArgs {
    #[arg(long)]
    wide: PathBuf,
    /// Narrow scan whose frequency range sets the excluded band.
    #[arg(long, required_unless_present_all = ["center", "span"])]
    narrow: Option<PathBuf>,
    /// Narrow band center, Hz.
    #[arg(long, conflicts_with = "narrow", requires = "span")]
    center: Option<f64>,
    /// Narrow band span, Hz.
    #[arg(long, conflicts_with = "narrow", requires = "center")]
    span: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    wide: PathBuf,
    #[arg(long)]
    narrow: PathBuf,
    /// JSON fit configuration; falls back to $RESONATOR_FIT_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Phase data/model/residual table over the wide scan.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CpwArgs {
    /// Center conductor width, µm.
    #[arg(long)]
    width_um: f64,
    /// Gap to ground, µm.
    #[arg(long)]
    gap_um: f64,
    #[arg(long, default_value_t = 11.7)]
    eps_r: f64,
    #[arg(long, default_value_t = 0.0)]
    tan_delta: f64,
    /// Resonator length, mm; adds the quarter-wave frequency.
    #[arg(long)]
    length_mm: Option<f64>,
    /// Kinetic inductance, H/m.
    #[arg(long, default_value_t = 0.0)]
    l_ki: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KiArgs {
    /// CSV with columns f_meas_hz,f_model_hz.
    #[arg(long, required_unless_present = "device", conflicts_with = "device")]
    table: Option<PathBuf>,
    /// Use the built-in measured tones of this device (A, B1, B2, B3, C, D, E).
    #[arg(long)]
    device: Option<String>,
    /// Geometric inductance, H/m.
    #[arg(long, default_value_t = reference::L_GEOM)]
    l_geom: f64,
    #[arg(long)]
    out: PathBuf,
    /// Resonance frequency versus kinetic inductance curves.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Directory of fit result files.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    exponent: f64,
    #[arg(long, default_value_t = 0.05)]
    saturated: f64,
    #[arg(long, default_value_t = 0.2)]
    power_dependent: f64,
    #[arg(long)]
    out: PathBuf,
    /// Qi versus temperature per power.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// First sweep result.
    #[arg(long)]
    a: PathBuf,
    /// Second sweep result.
    #[arg(long)]
    b: PathBuf,
    /// Only compare cells at this power, dBm.
    #[arg(long, allow_negative_numbers = true)]
    power_dbm: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    table: Option<PathBuf>,
}

struct Outcome {
    batch: OutputBatch,
    summary: String,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    eprintln!("{}", json!({"error": "usage", "class": "usage", "message": e.kind().to_string()}));
                    2
                }
            };
        }
    };
    let timestamp = (!cli.no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Delay(a) => delay(a, timestamp),
        Command::Fit(a) => fit(a, timestamp),
        Command::Cpw(a) => cpw_cmd(a, timestamp),
        Command::Ki(a) => ki(a, timestamp),
        Command::Sweep(a) => sweep(a, timestamp),
        Command::Report(a) => report(a, timestamp),
    }
    .and_then(|o| {
        o.batch.commit()?;
        Ok(o.summary)
    });
    match result {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            let class = e.class();
            eprintln!(
                "{}",
                json!({
                    "error": e.kind(),
                    "class": match class { ErrorClass::Data => "data", ErrorClass::Numerical => "numerical" },
                    "message": e.to_string(),
                })
            );
            match class {
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            }
        }
    }
}

fn digests(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    let mut out = Vec::new();
    for p in paths {
        out.push(InputDigest::of(p)?);
        let side = sidecar_path(p);
        if side.exists() {
            out.push(InputDigest::of(&side)?);
        }
    }
    Ok(out)
}

fn finish(mut r: ResultFile, timestamp: Option<u64>, out: &Path, batch: &mut OutputBatch) -> Result<()> {
    r.timestamp = timestamp;
    r.validate()?;
    batch.add(out, r.to_json()?);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let p = NotchParams::new(a.f0, a.q, a.qc)
        .with_asymmetry(a.delta_omega)
        .with_phase(a.phi0)
        .with_delay(a.delay)
        .with_amp(a.amp);
    p.validate()?;
    let narrow_band = Band::new(a.f0, a.narrow_span.unwrap_or(2.0 * p.linewidth()))?;
    let wide_band = narrow_band.scaled(a.wide_factor)?;
    let mut meta = TraceMeta::new(a.device, a.resonator);
    meta.temperature_mk = a.temperature_mk;
    meta.power_dbm = a.power_dbm;
    let narrow = synth_trace(
        &p,
        &narrow_band,
        a.narrow_points,
        &NoiseSpec::new(a.sigma, a.seed),
        meta.clone().with_scan_kind(ScanKind::Narrow),
    )?;
    let wide = synth_trace(
        &p,
        &wide_band,
        a.wide_points,
        &NoiseSpec::new(a.sigma, a.seed.wrapping_add(1)),
        meta.with_scan_kind(ScanKind::Wide),
    )?;
    let mut batch = OutputBatch::default();
    batch.add_trace(&a.wide, &wide, a.format.into())?;
    batch.add_trace(&a.narrow, &narrow, a.format.into())?;
    let summary = format!(
        "wide: {} points over {} Hz\nnarrow: {} points over {} Hz\n",
        wide.len(),
        wide_band.span,
        narrow.len(),
        narrow_band.span
    );
    Ok(Outcome { batch, summary })
}

fn delay(a: DelayArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let wide = parse_trace(&a.wide)?;
    let mut inputs = vec![a.wide.as_path()];
    let band = match (&a.narrow, a.center, a.span) {
        (Some(n), _, _) => {
            inputs.push(n.as_path());
            parse_trace(n)?.band()
        }
        (None, Some(c), Some(s)) => Band::new(c, s)?,
        _ => return Err(Error::InvalidParameter("narrow band not given".into())),
    };
    let d = fit_delay(&wide, &band)?;
    let mut r = ResultFile::new(ResultKind::DelayFit);
    r.inputs = digests(&inputs)?;
    r.config = json!({ "narrow_band": band });
    r.value("tau", Quantity::new(d.tau, "s"))
        .value("phase_intercept", Quantity::new(d.phase_intercept, "rad"))
        .value("excluded_center", Quantity::new(d.excluded_band.center, "Hz"))
        .value("excluded_span", Quantity::new(d.excluded_band.span, "Hz"))
        .value("rms_residual", Quantity::new(d.rms_residual, "rad"));
    r.records = json!({ "delay": d });
    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    let summary = format!(
        "tau = {:e} s ({} samples retained, excluded {} Hz)\n",
        d.tau, d.n_retained, d.excluded_band.span
    );
    Ok(Outcome { batch, summary })
}

fn load_config(path: Option<&Path>) -> Result<(FitConfig, Option<PathBuf>)> {
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let cfg = match &path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    Ok((cfg, path))
}

fn fit_values(r: &mut ResultFile, fit: &ResonatorFit) {
    r.value("f0", Quantity::measured(fit.f0, "Hz"))
        .value("q_total", Quantity::measured(fit.q_total, "1"))
        .value("q_c", Quantity::measured(fit.q_c, "1"))
        .value("delta_omega", Quantity::measured(fit.delta_omega, "Hz"))
        .value("phi0", Quantity::measured(fit.phi0, "rad"))
        .value("rms_residual", Quantity::new(fit.rms_residual, "rad"));
    if let Some(qi) = fit.q_i {
        r.value("q_i", Quantity::measured(qi, "1"));
    }
}

fn fit(a: FitArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let (cfg, cfg_path) = load_config(a.config.as_deref())?;
    let wide = parse_trace(&a.wide)?;
    let narrow = parse_trace(&a.narrow)?;
    let res = fit_pipeline(&wide, &narrow, &cfg)?;
    let fit = &res.fit;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.n_iterations,
        });
    }

    let mut inputs = vec![a.wide.as_path(), a.narrow.as_path()];
    if let Some(p) = &cfg_path {
        inputs.push(p);
    }
    let mut r = ResultFile::new(ResultKind::ResonatorFit);
    r.inputs = digests(&inputs)?;
    r.config = serde_json::to_value(&cfg)?;
    fit_values(&mut r, fit);
    r.value("tau", Quantity::new(res.delay.tau, "s"))
        .value("extrapolation_rms", Quantity::new(res.extrapolation_rms, "rad"));
    r.records = json!({
        "fit": fit,
        "delay": res.delay,
        "meta": narrow.meta(),
        "extrapolation_rms": res.extrapolation_rms,
        "background_iterations": res.background_iterations,
    });

    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    if let Some(t) = &a.table {
        batch.add(t, phase_table(&wide, &res.delay, fit)?);
    }
    let qi = fit
        .q_i
        .map_or("-".to_string(), |q| format_parenthetical(q.value, q.sigma));
    let summary = format!(
        "f0 = {} GHz\nQ = {}\nQc = {}\nQi = {}\ntau = {:e} s\n",
        format_parenthetical(fit.f0.value * 1e-9, fit.f0.sigma * 1e-9),
        format_parenthetical(fit.q_total.value, fit.q_total.sigma),
        format_parenthetical(fit.q_c.value, fit.q_c.sigma),
        qi,
        res.delay.tau
    );
    Ok(Outcome { batch, summary })
}

/// Corrected wide-scan phase against the fitted model.
fn phase_table(wide: &Trace, d: &crate::delay::DelayFit, fit: &ResonatorFit) -> Result<String> {
    let corrected = correct(wide, d)?;
    let data = corrected.unwrapped_phase();
    let model = fit.model_phase(wide.freq());
    let mean: f64 = data.iter().zip(&model).map(|(x, m)| x - m).sum::<f64>() / data.len() as f64;
    let shift = std::f64::consts::TAU * (mean / std::f64::consts::TAU).round();
    let rows: Vec<Vec<String>> = wide
        .freq()
        .iter()
        .zip(data.iter().zip(&model))
        .map(|(&f, (&x, &m))| {
            let x = x - shift;
            vec![
                f.to_string(),
                x.to_string(),
                m.to_string(),
                (x - m).to_string(),
                u8::from(fit.fit_band.contains(f)).to_string(),
            ]
        })
        .collect();
    table_to_string(
        &["freq_hz", "data_phase_rad", "model_phase_rad", "residual_rad", "in_fit_band"],
        &rows,
    )
}

fn cpw_cmd(a: CpwArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let geom = CpwGeometry::new(a.width_um * 1e-6, a.gap_um * 1e-6, a.eps_r, a.tan_delta)?;
    let line = cpw::line_params(&geom)?;
    let mut r = ResultFile::new(ResultKind::LineParams);
    r.config = json!({ "geometry": geom, "length_mm": a.length_mm, "l_ki": a.l_ki });
    r.value("l_geom", Quantity::new(line.l_geom, "H/m"))
        .value("c_per_len", Quantity::new(line.c_per_len, "F/m"))
        .value("z0", Quantity::new(line.z0, "ohm"))
        .value("eps_eff", Quantity::new(line.eps_eff, "1"));
    let mut summary = format!(
        "L = {:.4e} H/m\nC = {:.4e} F/m\nZ0 = {:.3} ohm\neps_eff = {}\n",
        line.l_geom, line.c_per_len, line.z0, line.eps_eff
    );
    let mut f0 = None;
    if let Some(mm) = a.length_mm {
        let f = cpw::quarter_wave_freq(&line, mm * 1e-3, a.l_ki)?;
        r.value("f0", Quantity::new(f, "Hz"));
        summary.push_str(&format!("f0 = {} GHz\n", ghz(f)));
        f0 = Some(f);
    }
    r.records = json!({ "line": line, "f0": f0 });
    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    Ok(Outcome { batch, summary })
}

fn read_ki_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["f_meas_hz", "f_model_hz"] {
        return Err(Error::Schema {
            line: 1,
            column: 1,
            message: "expected header f_meas_hz,f_model_hz".into(),
        });
    }
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 2];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec[i].parse().map_err(|_| Error::Schema {
                line,
                column: i + 1,
                message: format!("not a number: {:?}", &rec[i]),
            })?;
        }
        pairs.push((v[0], v[1]));
    }
    Ok(pairs)
}

fn ki(a: KiArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let (pairs, inputs) = match (&a.table, &a.device) {
        (Some(p), _) => (read_ki_table(p)?, digests(&[p.as_path()])?),
        (None, Some(d)) => {
            let pairs = reference::ki_pairs(d);
            if pairs.is_empty() {
                return Err(Error::InvalidParameter(format!("no reference tones for device {d:?}")));
            }
            (pairs, Vec::new())
        }
        _ => return Err(Error::InvalidParameter("no frequencies given".into())),
    };
    let tones: Vec<KiResult> = pairs
        .iter()
        .map(|&(m, f)| cpw::extract_lki(m, f, a.l_geom))
        .collect::<Result<_>>()?;
    let device = cpw::fit_device_lki(&pairs, a.l_geom)?;

    let mut r = ResultFile::new(ResultKind::KineticInductance);
    r.inputs = inputs;
    r.config = json!({ "l_geom": a.l_geom, "device": a.device });
    for (i, t) in tones.iter().enumerate() {
        r.value(&format!("l_ki_{}", i + 1), Quantity::new(t.l_ki, "H/m"));
    }
    r.value("device_l_ki", Quantity::new(device.l_ki, "H/m"))
        .value("device_rms_residual", Quantity::new(device.rms_residual, "Hz"));
    r.records = json!({ "tones": tones, "device_fit": device });

    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    if let Some(c) = &a.curves {
        batch.add(c, ki_curves(&tones, a.l_geom)?);
    }
    let mut summary = String::new();
    for t in &tones {
        summary.push_str(&format!(
            "{} GHz -> {} GHz: L_ki = {:.1} nH/m\n",
            ghz(t.f_model),
            ghz(t.f_meas),
            t.l_ki * 1e9
        ));
    }
    summary.push_str(&format!("device L_ki = {:.1} nH/m\n", device.l_ki * 1e9));
    Ok(Outcome { batch, summary })
}

/// Resonance frequency of each model mode as kinetic inductance grows,
/// with the measured points appended.
fn ki_curves(tones: &[KiResult], l_geom: f64) -> Result<String> {
    let mut models: Vec<f64> = tones.iter().map(|t| t.f_model).collect();
    models.sort_by(f64::total_cmp);
    models.dedup();
    let mut rows = Vec::new();
    for &fm in &models {
        for k in 0..=100 {
            let l_ki = 10e-9 * k as f64;
            rows.push(vec![
                "curve".to_string(),
                (fm * 1e-9).to_string(),
                (l_ki * 1e9).to_string(),
                (cpw::shifted_frequency(fm, l_geom, l_ki) * 1e-9).to_string(),
            ]);
        }
    }
    for t in tones {
        rows.push(vec![
            "measured".to_string(),
            (t.f_model * 1e-9).to_string(),
            (t.l_ki * 1e9).to_string(),
            (t.f_meas * 1e-9).to_string(),
        ]);
    }
    table_to_string(&["kind", "f_model_ghz", "l_ki_nh_per_m", "f0_ghz"], &rows)
}

fn sweep(a: SweepArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".meta.json"));
    paths.sort();
    let mut fits = Vec::new();
    let mut used = Vec::new();
    for p in &paths {
        let r = ResultFile::read(p)?;
        if r.kind != ResultKind::ResonatorFit {
            continue;
        }
        let fit: ResonatorFit = serde_json::from_value(r.records["fit"].clone())?;
        let meta: TraceMeta = serde_json::from_value(r.records["meta"].clone())?;
        fits.push((fit, meta));
        used.push(p.as_path());
    }
    let surface = tls::aggregate(&fits)?;
    let th = RegimeThresholds {
        saturated: a.saturated,
        power_dependent: a.power_dependent,
        ..RegimeThresholds::default()
    };
    let report = tls::classify_regimes(&surface, &th)?;
    let surface = surface.with_regimes(&report);
    let mut f0s: Vec<f64> = fits.iter().map(|(f, _)| f.f0.value).collect();
    f0s.sort_by(f64::total_cmp);
    let frequency = f0s[f0s.len() / 2];
    let law: Option<TlsFit> = if surface.powers.len() >= 3 {
        Some(tls::fit_tls_law(&surface, frequency, a.exponent)?)
    } else {
        None
    };

    let mut r = ResultFile::new(ResultKind::Sweep);
    r.inputs = used.iter().map(|p| InputDigest::of(p)).collect::<Result<_>>()?;
    r.config = json!({ "thresholds": th, "exponent": a.exponent });
    r.value("frequency", Quantity::new(frequency, "Hz"))
        .value("cells", Quantity::new(surface.cells().len() as f64, "1"));
    if let Some(l) = &law {
        r.value("f_delta0", Quantity::new(l.law.f_delta0, "1"))
            .value("pc", Quantity::new(l.law.pc_dbm, "dBm"))
            .value("q_other", Quantity::new(l.law.q_other, "1"))
            .value("tls_log_rms", Quantity::new(l.rms, "1"));
    }
    r.records = json!({ "surface": surface, "report": report, "tls_fit": law });

    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    if let Some(t) = &a.table {
        batch.add(t, qi_table(&surface)?);
    }
    let mut summary = format!(
        "{} fits, {} temperatures x {} powers\n{}\n",
        fits.len(),
        surface.temperatures.len(),
        surface.powers.len(),
        report.notes
    );
    if let Some(l) = &law {
        summary.push_str(&format!(
            "F delta0 = {:.4e}, Pc = {:.2} dBm, Q_other = {:.4e}\n",
            l.law.f_delta0, l.law.pc_dbm, l.law.q_other
        ));
    }
    Ok(Outcome { batch, summary })
}

fn regime_name(r: tls::Regime) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn qi_table(s: &QiSurface) -> Result<String> {
    let mut rows = Vec::new();
    for (pi, p) in s.powers.iter().enumerate() {
        for (ti, t) in s.temperatures.iter().enumerate() {
            if let Some(q) = s.get(ti, pi) {
                rows.push(vec![
                    p.to_string(),
                    t.to_string(),
                    q.value.to_string(),
                    q.sigma.to_string(),
                    regime_name(s.regime[ti][pi]),
                ]);
            }
        }
    }
    table_to_string(&["power_dbm", "temperature_mk", "q_i", "q_i_sigma", "regime"], &rows)
}

fn read_sweep(path: &Path) -> Result<(QiSurface, RegimeReport)> {
    let r = ResultFile::read(path)?;
    if r.kind != ResultKind::Sweep {
        return Err(Error::ResultSchema(format!("{} is not a sweep result", path.display())));
    }
    Ok((
        serde_json::from_value(r.records["surface"].clone())?,
        serde_json::from_value(r.records["report"].clone())?,
    ))
}

fn report(a: ReportArgs, timestamp: Option<u64>) -> Result<Outcome> {
    let (sa, _) = read_sweep(&a.a)?;
    let (sb, _) = read_sweep(&a.b)?;
    let label = |s: &QiSurface| format!("{}#{}", s.device_id, s.resonator_index);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for ca in sa.cells() {
        if a.power_dbm.is_some_and(|p| p != ca.power_dbm) {
            continue;
        }
        let Some(cb) = sb
            .cells()
            .into_iter()
            .find(|c| c.temperature_mk == ca.temperature_mk && c.power_dbm == ca.power_dbm)
        else {
            continue;
        };
        let ratio = cb.q_i.value / ca.q_i.value;
        ratios.push(ratio);
        rows.push(vec![
            ca.temperature_mk.to_string(),
            ca.power_dbm.to_string(),
            ca.q_i.value.to_string(),
            ca.q_i.sigma.to_string(),
            cb.q_i.value.to_string(),
            cb.q_i.sigma.to_string(),
            ratio.to_string(),
        ]);
    }
    if ratios.is_empty() {
        return Err(Error::Precondition("the sweeps share no (temperature, power) cells".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };

    let mut r = ResultFile::new(ResultKind::Comparison);
    r.inputs = digests(&[a.a.as_path(), a.b.as_path()])?;
    r.config = json!({ "power_dbm": a.power_dbm });
    r.value("median_ratio", Quantity::new(median, "1"))
        .value("shared_cells", Quantity::new(ratios.len() as f64, "1"));
    r.records = json!({ "a": label(&sa), "b": label(&sb), "rows": rows.len() });

    let mut batch = OutputBatch::default();
    finish(r, timestamp, &a.out, &mut batch)?;
    if let Some(t) = &a.table {
        batch.add(
            t,
            table_to_string(
                &["temperature_mk", "power_dbm", "q_i_a", "q_i_a_sigma", "q_i_b", "q_i_b_sigma", "ratio_b_over_a"],
                &rows,
            )?,
        );
    }
    let summary = format!(
        "{} vs {}: {} shared cells, median Qi ratio {:.3}\n",
        label(&sa),
        label(&sb),
        ratios.len(),
        median
    );
    Ok(Outcome { batch, summary })
}
