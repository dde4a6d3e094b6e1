//! Experiment runner for the `ghostpixel` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod imageio;

use std::fmt::Write as _;
use std::io::Write;

use config::{Settings, KEYS};
pub use error::{CliError, CliResult};

pub const THREADS_ENV: &str = "GHOSTPIXEL_THREADS";

const COMMANDS: &[(&str, &str)] = &[
    ("basis", "write the ordered, compressed basis export (HAD k=.. order=..)"),
    ("phantom", "write a phantom image"),
    ("simulate", "simulate an acquisition and write the measurement series"),
    ("reconstruct", "reconstruct an image from --input.series; writes <output>.diag too"),
    ("evaluate", "score --input.image against --input.reference"),
    ("sweep", "CNR / MSE / PSNR / correlation over an exposure or rate axis"),
];

pub fn help() -> String {
    let mut h = String::from(
        "usage: ghostpixel <command> [--config FILE] [--key value]...\n\ncommands:\n",
    );
    for (name, what) in COMMANDS {
        let _ = writeln!(h, "  {name:<12} {what}");
    }
    h.push_str("\nkeys (config file lines `key = value`, or flags `--key value`):\n");
    for (key, default, what) in KEYS {
        let default = if default.is_empty() { "-" } else { default };
        let _ = writeln!(h, "  {key:<28} {default:<18} {what}");
    }
    h.push_str(
        "\nshort flags: --k --ordering --rate --method --series --image --reference --out --kind\n\
         \nimages: .pgm is binary P5 (maxval 65535, big-endian); .txt is one row per line at\n\
         17 significant digits. Reconstructions are min-max normalized before PGM output.\n\
         \nsweep CSV columns (floats at 9 significant digits):\n",
    );
    let _ = writeln!(h, "  {}", commands::SWEEP_COLUMNS);
    h.push_str("summary CSV columns (one row per axis value and method):\n");
    let _ = writeln!(h, "  {}", commands::SUMMARY_COLUMNS);
    h.push_str(
        "\nenvironment: GHOSTPIXEL_THREADS caps worker threads.\n\
         exit codes: 0 success (including non-convergence), 2 usage, 3 I/O, 4 config inconsistency\n",
    );
    h
}

/// Sizes the global worker pool from `GHOSTPIXEL_THREADS`, if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}='{raw}' is not a positive integer")))?;
    // A pool that is already built (e.g. a second call in tests) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs one command; `args` excludes the program name.
pub fn run(args: &[String], out: &mut dyn Write) -> CliResult<()> {
    let Some((command, rest)) = args.split_first() else {
        return Err(CliError::Usage(format!("missing command\n\n{}", help())));
    };
    if matches!(command.as_str(), "help" | "--help" | "-h") || rest.iter().any(|a| a == "--help" || a == "-h") {
        return out
            .write_all(help().as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}")));
    }
    let settings = Settings::from_args(rest)?;
    match command.as_str() {
        "basis" => commands::basis(&settings, out),
        "phantom" => commands::phantom(&settings),
        "simulate" => commands::simulate(&settings, out),
        "reconstruct" => commands::reconstruct(&settings),
        "evaluate" => commands::evaluate(&settings, out),
        "sweep" => commands::sweep(&settings, out),
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}
