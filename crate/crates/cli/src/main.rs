//! `icedd`: runs experiments, closed-form sweeps and oracle checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ris_icedd::harness::{
    self, expand_sweep, parse_experiment, ExperimentFile, ExperimentKind, Profile,
};

#[derive(Parser)]
#[command(
    name = "icedd",
    version,
    about = "Multi-RIS uplink channel estimation simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo run of the configured experiment.
    Simulate(Common),
    /// Closed-form quantities over the power grid.
    Analyze(Common),
    /// Oracle suite; exits nonzero if any check fails.
    Validate(Common),
    /// Runs the experiment once per value of the `[sweep]` grid.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ci,
    Desk,
    Full,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Ci => Profile::Ci,
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Full => Profile::Full,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (simulate, sweep) or file (analyze, validate).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per sweep point, applied after the profile.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
}

impl Common {
    fn load(&self) -> Result<ExperimentFile> {
        let mut file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                parse_experiment(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => parse_experiment("")?,
        };
        let profile: Profile = self.profile.into();
        profile.apply(&mut file.experiment, &mut file.config);
        if let Some(bits) = (profile != Profile::Desk).then_some(file.config.code.block_bits) {
            harness::spec::set_key(
                &mut file.system_table,
                "code.block_bits",
                toml::Value::Integer(bits as i64),
            )?;
        }
        if let Some(s) = self.seed {
            file.experiment.seed = s;
        }
        if let Some(t) = self.trials {
            file.experiment.trials = t;
        }
        file.config.validate()?;
        file.experiment.validate(&file.config)?;
        Ok(file)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn simulate(c: &Common) -> Result<()> {
    let f = c.load()?;
    let dir = c.out_dir();
    let t = harness::run_to_dir(&f.experiment, &f.config, c.profile.into(), "", &dir)?;
    eprintln!("{} rows written to {}", t.rows.len(), dir.display());
    Ok(())
}

fn sweep(c: &Common) -> Result<()> {
    let f = c.load()?;
    if f.sweep.is_none() {
        bail!("the experiment file has no [sweep] table");
    }
    let root = c.out_dir();
    for (label, cfg) in expand_sweep(&f)? {
        let dir = root.join(label.replace(['/', '\\'], "_"));
        let t = harness::run_to_dir(&f.experiment, &cfg, c.profile.into(), &label, &dir)?;
        eprintln!(
            "{label}: {} rows written to {}",
            t.rows.len(),
            dir.display()
        );
    }
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{}", String::from_utf8_lossy(text)),
    }
    Ok(())
}

fn analyze(c: &Common) -> Result<()> {
    let f = c.load()?;
    let mut spec = f.experiment.clone();
    spec.kind = ExperimentKind::FormulaSweep;
    let rows = harness::formula_table(&spec, &f.config)?;
    let mut buf = Vec::new();
    harness::table::write_rows(&mut buf, &rows)?;
    write_or_print(c.out.as_deref(), &buf)
}

fn validate(c: &Common) -> Result<bool> {
    let trials = c.trials.unwrap_or(match c.profile {
        ProfileArg::Ci => 200,
        ProfileArg::Desk => 1000,
        ProfileArg::Full => 5000,
    });
    let checks = harness::validate::suite(trials, c.seed.unwrap_or(1))?;
    let mut ok = true;
    let mut text = String::new();
    for ch in &checks {
        ok &= ch.pass;
        text.push_str(&format!(
            "{} {}: {}\n",
            if ch.pass { "PASS" } else { "FAIL" },
            ch.name,
            ch.detail
        ));
    }
    write_or_print(c.out.as_deref(), text.as_bytes())?;
    if c.out.is_some() {
        print!("{text}");
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Simulate(c) => simulate(c).map(|_| true),
        Cmd::Analyze(c) => analyze(c).map(|_| true),
        Cmd::Validate(c) => validate(c),
        Cmd::Sweep(c) => sweep(c).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
