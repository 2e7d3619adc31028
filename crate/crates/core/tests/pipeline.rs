use cyclephase::circstats::{band_scan, resultant_length, ScanConfig};
use cyclephase::filtering::BandSpec;
use cyclephase::report::{prepare_ibi, run_report, RunConfig};
use cyclephase::synth::{gen_events, gen_series, gen_sleep_series, Component, SynthConfig};
use cyclephase::timeseries::{contiguous_segments, zscore, HOUR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn ks_uniform(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

/// Beat-to-beat style samples every few minutes with jittered timestamps.
fn write_irregular_ibi(path: &Path, days: i64, gaps: &[(i64, i64)], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = 1_704_067_200;
    let mut out = String::from("timestamp,ibi_ms\n");
    let mut t = start;
    while t < start + days * 86_400 {
        let in_gap = gaps.iter().any(|&(a, b)| t >= start + a && t < start + b);
        if !in_gap {
            let day = (t - start) as f64 / 86_400.0;
            let v = 800.0 + 60.0 * (2.0 * PI * day).cos() + rng.gen_range(-20.0..20.0);
            writeln!(out, "{t},{v:.3}").unwrap();
        }
        t += rng.gen_range(240..360);
    }
    fs::write(path, out).unwrap();
}

#[test]
fn irregular_input_resamples_fills_short_gaps_and_splits_long_ones() {
    let dir = tempfile::tempdir().unwrap();
    let ibi = dir.path().join("ibi.csv");
    // a 4 h gap is interpolated, a 3 day gap splits the record
    write_irregular_ibi(
        &ibi,
        40,
        &[
            (10 * 86_400, 10 * 86_400 + 4 * 3600),
            (20 * 86_400, 23 * 86_400),
        ],
        1,
    );
    let events = dir.path().join("events.csv");
    fs::write(&events, "onset_timestamp\n1704500000\n").unwrap();
    let config = RunConfig::new(&ibi, &events);
    let series = prepare_ibi(&config).unwrap();
    assert_eq!(series.step(), HOUR);
    let segments = contiguous_segments(&series);
    assert_eq!(segments.len(), 2);
    assert_eq!(segments[0].length, 20 * 24);
    let present: Vec<f64> = series.values().iter().flatten().copied().collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / present.len() as f64;
    assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
}

fn write_synth(dir: &Path, cfg: &SynthConfig) {
    cyclephase::io::write_series_csv(&dir.join("ibi.csv"), &gen_series(cfg).unwrap()).unwrap();
    cyclephase::io::write_events_csv(&dir.join("events.csv"), &gen_events(cfg).unwrap()).unwrap();
    cyclephase::io::write_series_csv(&dir.join("sleep.csv"), &gen_sleep_series(cfg).unwrap())
        .unwrap();
}

#[test]
fn full_report_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    write_synth(dir.path(), &cfg);
    let mut config = RunConfig::new(dir.path().join("ibi.csv"), dir.path().join("events.csv"));
    config.sleep_path = Some(dir.path().join("sleep.csv"));
    config.output_dir = dir.path().join("out");
    config.montecarlo_draws = 20_000;
    run_report(&config).unwrap();
    let out = &config.output_dir;

    let scan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("bandscan.json")).unwrap()).unwrap();
    let circ = &scan[0];
    assert_eq!(circ["band"], "0.8-1.2");
    assert_eq!(circ["n"], 29);
    assert!(circ["p"].as_f64().unwrap() < 0.01);
    let analytic_p = circ["p"].as_f64().unwrap();
    let mc_p = circ["p_montecarlo"].as_f64().unwrap();
    assert!(mc_p >= analytic_p.min(1.0 / 20_001.0) * 0.5);

    // psd.csv: largest power at 1 day
    let psd = fs::read_to_string(out.join("psd.csv")).unwrap();
    let (period, _) = psd
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            let period: f64 = f.next().unwrap().parse().unwrap();
            let power: f64 = f.nth(1).unwrap().parse().unwrap();
            (period, power)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((period - 1.0).abs() < 0.02, "{period}");

    // manifest hashes match the inputs
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    for role in ["ibi", "events", "sleep"] {
        let bytes = fs::read(dir.path().join(format!("{role}.csv"))).unwrap();
        assert_eq!(
            manifest["input_sha256"][role],
            hex::encode(Sha256::digest(bytes))
        );
    }
    for name in manifest["outputs"].as_array().unwrap() {
        assert!(out.join(name.as_str().unwrap()).exists(), "{name}");
    }

    let baselines: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("baselines.json")).unwrap()).unwrap();
    let aucs: Vec<f64> = baselines
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["auc"].as_f64().unwrap())
        .collect();
    assert_eq!(aucs.len(), 3);
    assert!(aucs[1] > aucs[2], "phase {} vs sleep {}", aucs[1], aucs[2]);

    // every emitted phase file agrees with its reported R
    for band in scan.as_array().unwrap() {
        let label = band["band"].as_str().unwrap();
        let phases: Vec<f64> = fs::read_to_string(out.join(format!("phases_{label}.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        if let Some(r) = band["R"].as_f64() {
            assert!((resultant_length(&phases).unwrap() - r).abs() <= 1e-12);
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(
        dir.path(),
        &SynthConfig {
            seed: 5,
            ..Default::default()
        },
    );
    let mut config = RunConfig::new(dir.path().join("ibi.csv"), dir.path().join("events.csv"));
    config.sleep_path = Some(dir.path().join("sleep.csv"));
    config.montecarlo_draws = 20_000;
    let mut listings = Vec::new();
    for name in ["a", "b"] {
        config.output_dir = dir.path().join(name);
        let summary = run_report(&config).unwrap();
        let files: Vec<(String, Vec<u8>)> = summary
            .outputs
            .iter()
            .filter(|n| n.as_str() != "run_manifest.json")
            .map(|n| (n.clone(), fs::read(config.output_dir.join(n)).unwrap()))
            .collect();
        listings.push(files);
    }
    assert_eq!(listings[0], listings[1]);
}

#[test]
fn locked_events_single_out_the_circadian_band() {
    let bands = BandSpec::standard_scan();
    let clean = (0..100u64)
        .filter(|&seed| {
            let cfg = SynthConfig {
                seed: 50_000 + seed,
                ..Default::default()
            };
            let series = zscore(&gen_series(&cfg).unwrap()).unwrap();
            let r = band_scan(
                &series,
                &gen_events(&cfg).unwrap(),
                &bands,
                &ScanConfig::default(),
            )
            .unwrap();
            r[0].rayleigh_p.unwrap() < 0.01
                && r[1..].iter().all(|b| b.fdr_adjusted_p.unwrap() >= 0.05)
        })
        .count();
    println!("circadian significant with all multi-day bands clear: {clean}/100");
    assert!(clean >= 90, "{clean}/100");
}

#[test]
fn null_p_values_are_uniform_in_every_band() {
    let bands = BandSpec::standard_scan();
    let mut p: Vec<Vec<f64>> = vec![Vec::new(); bands.len()];
    for seed in 0..300u64 {
        let cfg = SynthConfig {
            seed: 60_000 + seed,
            components: Vec::<Component>::new(),
            lock_band_index: None,
            noise_sd: 1.0,
            ..Default::default()
        };
        let series = zscore(&gen_series(&cfg).unwrap()).unwrap();
        let r = band_scan(
            &series,
            &gen_events(&cfg).unwrap(),
            &bands,
            &ScanConfig::default(),
        )
        .unwrap();
        for (acc, b) in p.iter_mut().zip(&r) {
            acc.push(b.rayleigh_p.unwrap());
        }
    }
    // asymptotic KS critical value at a 5% level split across the bands
    let alpha = 0.05 / bands.len() as f64;
    let critical = (-(alpha / 2.0).ln() / 2.0).sqrt() / (300f64).sqrt();
    let mut failing = Vec::new();
    for (band, values) in bands.iter().zip(p) {
        let d = ks_uniform(values);
        println!("{}: KS D = {d:.3}", band.label);
        if d >= critical {
            failing.push(format!("{} (D = {d:.3})", band.label));
        }
    }
    assert!(
        failing.is_empty(),
        "non-uniform null p in {failing:?}, critical {critical:.3}"
    );
}
