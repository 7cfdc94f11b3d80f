//! Reference worker for the subprocess classifier protocol.
//!
//! Usage: `specmcd-stub-worker <mode> [arg]`
//!
//! Modes:
//!   const <v>        reply `v` to every frame (out-of-range values allowed)
//!   mean-band0       reply the mean of the first band
//!   spectral [s]     same formula as the built-in classifier, saturation `s`
//!   die-after <n>    answer `n` frames, then exit without answering
//!   sleep <secs>     wait before every reply
//!   garbage          reply with a frame carrying the wrong magic

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;
use std::time::Duration;

use specmcd::classifier::protocol::{read_request, write_response, Request};

enum Mode {
    Const(f32),
    MeanBand0,
    Spectral(f64),
    DieAfter(usize),
    Sleep(f64),
    Garbage,
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let arg = |i: usize| args.get(i).and_then(|s| s.parse::<f64>().ok());
    Some(match args.first()?.as_str() {
        "const" => Mode::Const(arg(1)? as f32),
        "mean-band0" => Mode::MeanBand0,
        "spectral" => Mode::Spectral(arg(1).unwrap_or(1.0)),
        "die-after" => Mode::DieAfter(args.get(1)?.parse().ok()?),
        "sleep" => Mode::Sleep(arg(1)?),
        "garbage" => Mode::Garbage,
        _ => return None,
    })
}

fn mean_band0(req: &Request) -> f32 {
    let n = (req.width * req.height) as usize;
    let band = &req.samples[..n];
    (band.iter().map(|&v| v as f64).sum::<f64>() / n as f64) as f32
}

/// Assumes band order blue, green, ...
fn spectral(req: &Request, saturation: f64) -> f32 {
    let n = (req.width * req.height) as usize;
    let (blue, green) = (&req.samples[..n], &req.samples[n..2 * n]);
    let sum: f64 = blue
        .iter()
        .zip(green)
        .map(|(&b, &g)| (2.0 * b as f64 - 0.95 * g as f64).max(0.0))
        .sum();
    (sum / n as f64 / saturation).clamp(0.0, 1.0) as f32
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!(
            "usage: specmcd-stub-worker const <v> | mean-band0 | spectral [s] | die-after <n> | sleep <secs> | garbage"
        );
        return ExitCode::from(2);
    };

    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    let mut answered = 0usize;
    loop {
        let req = match read_request(&mut input) {
            Ok(Some(req)) => req,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("stub worker: bad request: {e}");
                return ExitCode::from(3);
            }
        };
        if req.bands < 2 && matches!(mode, Mode::Spectral(_)) {
            eprintln!("stub worker: spectral mode needs blue and green");
            return ExitCode::from(3);
        }
        let score = match mode {
            Mode::Const(v) => v,
            Mode::MeanBand0 => mean_band0(&req),
            Mode::Spectral(s) => spectral(&req, s),
            Mode::DieAfter(n) => {
                if answered == n {
                    eprintln!("stub worker: exiting after {n} frames");
                    return ExitCode::from(4);
                }
                0.5
            }
            Mode::Sleep(secs) => {
                std::thread::sleep(Duration::from_secs_f64(secs));
                0.5
            }
            Mode::Garbage => {
                let _ = output.write_all(b"XXXX\0\0\0\0");
                let _ = output.flush();
                answered += 1;
                continue;
            }
        };
        if write_response(&mut output, score).and_then(|_| output.flush()).is_err() {
            return ExitCode::from(5);
        }
        answered += 1;
    }
}
