//! Scriptable stand-in for an external model adapter, used by the test
//! suite to exercise the wire protocol and restart handling.
//!
//! Usage: `mock-adapter [--model ID] [--mode MODE] [--state FILE] [--fail N]`
//!
//! Modes:
//! - `gaussian`: seasonal-naive point with Gaussian quantiles
//! - `point-only`: point forecast, no quantiles
//! - `crossing`: quantiles with every row reversed
//! - `error`: replies with a model error to every request
//! - `crash`: exits without replying on the first `--fail` requests,
//!   counted across processes through `--state`
//! - `hang`: never replies to forecast requests
//! - `bad-handshake`: answers hello with garbage
//! - `wrong-task`: replies under a different task id

use std::io::{BufRead, Write};

use loadbench_core::dist::normal_quantile;
use loadbench_harness::protocol::{decode, encode, ErrorReply, ForecastReply, ForecastRequest, Message, ModelInfo};

struct Options {
    model: String,
    mode: String,
    state: Option<String>,
    fail: usize,
}

fn parse_args() -> Options {
    let mut o = Options {
        model: "mock".into(),
        mode: "gaussian".into(),
        state: None,
        fail: 1,
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut i = 0;
    while i < args.len() {
        let value = args.get(i + 1).cloned().unwrap_or_default();
        match args[i].as_str() {
            "--model" => o.model = value,
            "--mode" => o.mode = value,
            "--state" => o.state = Some(value),
            "--fail" => o.fail = value.parse().expect("--fail takes an integer"),
            "--seed" => {}
            other => {
                eprintln!("mock-adapter: unknown argument {other}");
                std::process::exit(2);
            }
        }
        i += 2;
    }
    o
}

fn bump_counter(path: &str) -> usize {
    let n = std::fs::read_to_string(path)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0)
        + 1;
    std::fs::write(path, n.to_string()).expect("write state file");
    n
}

fn forecast(req: &ForecastRequest, mode: &str) -> ForecastReply {
    let n = req.values.len();
    let point: Vec<f64> = (0..req.horizon)
        .map(|h| {
            let lag = if n >= 24 { 24 } else { n };
            req.values[n - lag + (h % lag)]
        })
        .collect();
    let mean = req.values.iter().sum::<f64>() / n as f64;
    let sigma = 0.05 * mean.abs().max(1.0);
    let quantiles = if mode == "point-only" {
        Vec::new()
    } else {
        point
            .iter()
            .enumerate()
            .map(|(h, &p)| {
                let s = sigma * (1.0 + h as f64 / req.horizon as f64);
                let mut row: Vec<f64> = req.quantile_levels.iter().map(|&q| p + s * normal_quantile(q)).collect();
                if mode == "crossing" {
                    row.reverse();
                }
                row
            })
            .collect()
    };
    ForecastReply {
        task_id: req.task_id.clone(),
        point,
        quantiles,
        inference_seconds: 0.001,
        includes_fit: false,
        rank_deficient: false,
    }
}

fn main() {
    let o = parse_args();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    let mut send = |m: &Message| {
        stdout.write_all(encode(m).as_bytes()).expect("write stdout");
        stdout.flush().expect("flush stdout");
    };
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let message = match decode(&line) {
            Ok(m) => m,
            Err(e) => {
                send(&Message::Error(ErrorReply {
                    task_id: None,
                    message: format!("bad message: {e}"),
                }));
                continue;
            }
        };
        match message {
            Message::Hello { .. } => {
                if o.mode == "bad-handshake" {
                    println!("this is not json");
                    continue;
                }
                let levels = if o.mode == "point-only" {
                    Vec::new()
                } else {
                    vec![0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95]
                };
                send(&Message::ModelInfo(ModelInfo {
                    model_id: o.model.clone(),
                    quantile_levels: levels,
                    parameter_count: Some(0),
                    version: Some("mock-1".into()),
                    seed: Some(0),
                }));
            }
            Message::Forecast(req) => match o.mode.as_str() {
                "error" => send(&Message::Error(ErrorReply {
                    task_id: Some(req.task_id),
                    message: "model refused the task".into(),
                })),
                "hang" => std::thread::sleep(std::time::Duration::from_secs(3600)),
                "crash" => {
                    let count = o.state.as_deref().map_or(1, bump_counter);
                    if count <= o.fail {
                        std::process::exit(3);
                    }
                    send(&Message::ForecastResult(forecast(&req, "gaussian")));
                }
                "wrong-task" => {
                    let mut reply = forecast(&req, "gaussian");
                    reply.task_id.push_str("-other");
                    send(&Message::ForecastResult(reply));
                }
                mode => send(&Message::ForecastResult(forecast(&req, mode))),
            },
            other => send(&Message::Error(ErrorReply {
                task_id: None,
                message: format!("unexpected message {other:?}"),
            })),
        }
    }
}
