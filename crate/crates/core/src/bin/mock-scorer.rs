//! Stand-in external scorer for testing the `al-scorer` protocol.
//!
//! Answers every text from a fixed probability table (keyed by raw text),
//! falling back to `--default`. Fault flags make it misbehave on purpose.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use hope_al::scorer_protocol::{Handshake, ScoreRequest, ScoreResponse, PROTOCOL_NAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    /// Return one more row than requested.
    ExtraRow,
    /// Answer every text with [0.6, 0.6].
    BadProbs,
    /// Echo the wrong request id.
    WrongId,
    /// Emit a line that is not JSON.
    Malformed,
    /// Exit right after the handshake.
    Close,
    /// Never send the handshake.
    Silent,
}

#[derive(Debug, Parser)]
#[command(about = "Fixed-table scorer speaking the al-scorer protocol")]
struct Args {
    /// JSON object mapping raw text to [p_not_hope, p_hope].
    #[arg(long)]
    table: Option<PathBuf>,
    /// Probabilities for texts missing from the table, as `a,b`.
    #[arg(long, default_value = "0.5,0.5")]
    default: String,
    /// Protocol version announced in the handshake.
    #[arg(long, default_value_t = 1)]
    version: u64,
    #[arg(long, value_enum)]
    fault: Option<Fault>,
    /// Append every request line to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err(format!("expected `a,b`, got `{s}`")),
    }
}

fn main() {
    let args = Args::parse();
    let table: HashMap<String, [f64; 2]> = match &args.table {
        Some(path) => {
            let text = std::fs::read_to_string(path).unwrap_or_else(|e| {
                eprintln!("mock-scorer: {}: {e}", path.display());
                std::process::exit(1)
            });
            serde_json::from_str(&text).unwrap_or_else(|e| {
                eprintln!("mock-scorer: bad table: {e}");
                std::process::exit(1)
            })
        }
        None => HashMap::new(),
    };
    let default = parse_pair(&args.default).unwrap_or_else(|e| {
        eprintln!("mock-scorer: {e}");
        std::process::exit(1)
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    if args.fault != Some(Fault::Silent) {
        let hs = Handshake {
            protocol: PROTOCOL_NAME.to_string(),
            version: args.version,
        };
        writeln!(out, "{}", serde_json::to_string(&hs).unwrap()).unwrap();
        out.flush().unwrap();
    }
    if args.fault == Some(Fault::Close) {
        return;
    }

    let mut log = args
        .log
        .as_ref()
        .map(|p| OpenOptions::new().create(true).append(true).open(p).expect("open log"));

    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if let Some(f) = log.as_mut() {
            writeln!(f, "{line}").unwrap();
        }
        if args.fault == Some(Fault::Silent) {
            continue;
        }
        let request: ScoreRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("mock-scorer: bad request: {e}");
                continue;
            }
        };
        let mut probs: Vec<Vec<f64>> = request
            .texts
            .iter()
            .map(|t| table.get(t).copied().unwrap_or(default).to_vec())
            .collect();
        let mut request_id = request.request_id;
        match args.fault {
            Some(Fault::ExtraRow) => probs.push(default.to_vec()),
            Some(Fault::BadProbs) => probs.iter_mut().for_each(|p| *p = vec![0.6, 0.6]),
            Some(Fault::WrongId) => request_id += 100,
            Some(Fault::Malformed) => {
                writeln!(out, "this is not json").unwrap();
                out.flush().unwrap();
                continue;
            }
            _ => {}
        }
        let response = ScoreResponse { request_id, probs };
        writeln!(out, "{}", serde_json::to_string(&response).unwrap()).unwrap();
        out.flush().unwrap();
    }
}
