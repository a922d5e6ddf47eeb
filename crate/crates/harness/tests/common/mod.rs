#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use loadbench_core::series::HourlySeries;
use loadbench_harness::config::AdapterConfig;

pub fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

/// Deterministic load-like series: daily and weekly cycles, an annual swing
/// and hash noise.
pub fn synthetic(start: DateTime<Utc>, end: DateTime<Utc>) -> HourlySeries<f64> {
    let n = (end - start).num_hours() as usize;
    let values = (0..n)
        .map(|t| {
            let tf = t as f64;
            let day = (2.0 * std::f64::consts::PI * tf / 24.0).sin();
            let week = (2.0 * std::f64::consts::PI * tf / 168.0).cos();
            let year = (2.0 * std::f64::consts::PI * tf / 8766.0).cos();
            let mut h = (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            h ^= h >> 29;
            h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            h ^= h >> 32;
            let noise = (h % 10_000) as f64 / 10_000.0 - 0.5;
            45_000.0 + 8_000.0 * day + 3_000.0 * week + 6_000.0 * year + 1_500.0 * noise
        })
        .collect();
    HourlySeries::new("synthetic", start, values).unwrap()
}

pub fn mock(args: &[&str]) -> AdapterConfig {
    let mut command = vec![env!("CARGO_BIN_EXE_mock-adapter").to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    AdapterConfig {
        command,
        timeout_seconds: 10.0,
        handshake_timeout_seconds: 10.0,
        ..AdapterConfig::default()
    }
}
