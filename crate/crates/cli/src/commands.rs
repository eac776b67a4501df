use std::time::Instant;

use dbm_lab::fredholm::{gap_probability, GapProblem, GapResult};
use dbm_lab::freeconv::{t_critical, FreeConvolutionState};
use dbm_lab::kernel::{sine_kernel, FrameMetadata};
use dbm_lab::montecarlo::{dbm_paths, empirical_gap_frequency, sample_many, GapFrequency, GueSampler};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{rounded, Cell, Csv, Summary};
use crate::CliError;

const DENSITY_POINTS: usize = 201;
const PATH_STEPS: usize = 100;

fn label(n: usize, t: f64) -> String {
    format!("n={n};t={}", rounded(t))
}

pub fn density(cfg: &RunConfig) -> Result<(), CliError> {
    let mu = cfg.reference_measure()?;
    let (lo, hi) = mu.hull();
    let mut csv = Csv::new(&["t", "x", "psi"]);
    let mut summary = Summary::new();
    summary.add("t_cr", t_critical(&mu, cfg.window.x_star)?);
    let mut times: Vec<f64> = cfg.sizes().iter().flat_map(|&n| cfg.times(n)).collect();
    times.dedup();
    for t in times {
        let clock = Instant::now();
        let state = FreeConvolutionState::new(mu.clone(), t)?;
        let pad = 2.1 * t.sqrt();
        let (a, b) = (lo - pad, hi + pad);
        for k in 0..DENSITY_POINTS {
            let x = a + (b - a) * k as f64 / (DENSITY_POINTS - 1) as f64;
            csv.row(&[Cell::Num(t), Cell::Num(x), Cell::Num(state.psi_t(x)?)]);
        }
        let (x_star_t, c_t) = state.psi_parametric(cfg.window.x_star)?;
        summary.add(&format!("x_star_t[t={}]", rounded(t)), x_star_t);
        summary.add(&format!("c_t[t={}]", rounded(t)), c_t);
        eprintln!("density t={} {:.2}s", rounded(t), clock.elapsed().as_secs_f64());
    }
    csv.write(&cfg.output.join("density.csv"))?;
    summary.write(&cfg.output.join("summary.csv"))?;
    Ok(())
}

pub fn kernel(cfg: &RunConfig) -> Result<(), CliError> {
    let us = cfg.u_grid()?;
    let mut csv = Csv::new(&["n", "t", "u", "v", "value", "a_n", "i_n", "sine", "residual"]);
    let mut summary = Summary::new();
    let mut meta: Vec<FrameMetadata> = Vec::new();
    for n in cfg.sizes() {
        for t in cfg.times(n) {
            let clock = Instant::now();
            let frame = cfg.frame(n, t)?;
            let grid = frame.grid(&us, &us)?;
            let (mut sup_res, mut sup_abs) = (0.0f64, 0.0f64);
            for (u, row) in us.iter().zip(&grid) {
                for (v, r) in us.iter().zip(row) {
                    let sine = sine_kernel(*u, *v);
                    let res = r.value - sine;
                    sup_res = sup_res.max(res.abs());
                    sup_abs = sup_abs.max(r.value.abs());
                    csv.row(&[
                        Cell::Int(n as u64),
                        Cell::Num(t),
                        Cell::Num(*u),
                        Cell::Num(*v),
                        Cell::Num(r.value),
                        Cell::Num(r.a_n),
                        Cell::Num(r.i_n),
                        Cell::Num(sine),
                        Cell::Num(res),
                    ]);
                }
            }
            summary.add(&format!("sup_residual[{}]", label(n, t)), sup_res);
            summary.add(&format!("sup_abs_kernel[{}]", label(n, t)), sup_abs);
            meta.push(frame.metadata()?);
            eprintln!("kernel {} {:.2}s", label(n, t), clock.elapsed().as_secs_f64());
        }
    }
    csv.write(&cfg.output.join("kernel.csv"))?;
    summary.write(&cfg.output.join("summary.csv"))?;
    std::fs::write(cfg.output.join("kernel_meta.json"), serde_json::to_string_pretty(&meta).unwrap() + "\n")?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let us = cfg.u_grid()?;
    let mut header = vec!["n", "t", "D", "D_rounded"];
    if cfg.gap.is_some() {
        header.extend(["gap_probability", "gap_rounded"]);
    }
    let mut csv = Csv::new(&header);
    for n in cfg.sizes() {
        for t in cfg.times(n) {
            let clock = Instant::now();
            let frame = cfg.frame(n, t)?;
            let d = frame.sine_distance(&us, &us)?;
            let dr = rounded(d);
            let mut row = vec![Cell::Int(n as u64), Cell::Num(t), Cell::Num(d), Cell::Text(&dr)];
            let gap_text;
            if let Some(g) = cfg.gap {
                let c = frame.position(0.0);
                let p = GapProblem { m: cfg.quadrature.nystrom_nodes, ..GapProblem::new(frame.evaluator(), c - g.half_width, c + g.half_width) };
                let r = gap_probability(&p)?;
                gap_text = rounded(r.raw_det);
                row.extend([Cell::Num(r.raw_det), Cell::Text(&gap_text)]);
            }
            csv.row(&row);
            eprintln!("sweep {} D={dr} {:.2}s", label(n, t), clock.elapsed().as_secs_f64());
        }
    }
    csv.write(&cfg.output.join("sweep.csv"))?;
    Ok(())
}

#[derive(Serialize)]
struct GapRecord {
    n: usize,
    t: f64,
    #[serde(flatten)]
    fredholm: GapResult,
    monte_carlo: GapFrequency,
}

pub fn gap(cfg: &RunConfig) -> Result<(), CliError> {
    let half = cfg
        .gap
        .map(|g| g.half_width)
        .or(cfg.window.epsilon)
        .ok_or_else(|| CliError::Validation("gap needs gap.half_width or window.epsilon".into()))?;
    let mut csv = Csv::new(&["n", "t", "a", "b", "fredholm", "raw_det", "m_final", "mc_frequency", "mc_stderr", "samples"]);
    let mut records = Vec::new();
    for n in cfg.sizes() {
        for t in cfg.times(n) {
            let clock = Instant::now();
            let frame = cfg.frame(n, t)?;
            let c = frame.position(0.0);
            let (a, b) = (c - half, c + half);
            let p = GapProblem { m: cfg.quadrature.nystrom_nodes, ..GapProblem::new(frame.evaluator(), a, b) };
            let fredholm = gap_probability(&p)?;
            let sampler = GueSampler::new(n, cfg.seed)?;
            let samples = sample_many(&sampler, frame.evaluator().config(), t, 0, cfg.monte_carlo.samples)?;
            let mc = empirical_gap_frequency(&samples, a, b)?;
            csv.row(&[
                Cell::Int(n as u64),
                Cell::Num(t),
                Cell::Num(a),
                Cell::Num(b),
                Cell::Num(fredholm.probability),
                Cell::Num(fredholm.raw_det),
                Cell::Int(fredholm.m_final as u64),
                Cell::Num(mc.frequency),
                Cell::Num(mc.stderr),
                Cell::Int(mc.samples as u64),
            ]);
            eprintln!(
                "gap {} fredholm={} sampled={} {:.2}s",
                label(n, t),
                rounded(fredholm.raw_det),
                rounded(mc.frequency),
                clock.elapsed().as_secs_f64()
            );
            records.push(GapRecord { n, t, fredholm, monte_carlo: mc });
        }
    }
    csv.write(&cfg.output.join("gap.csv"))?;
    std::fs::write(cfg.output.join("gap.json"), serde_json::to_string_pretty(&records).unwrap() + "\n")?;
    Ok(())
}

pub fn paths(cfg: &RunConfig) -> Result<(), CliError> {
    for n in cfg.sizes() {
        let times = match (&cfg.t_grid, cfg.times(n).as_slice()) {
            (Some(g), _) => g.clone(),
            (None, &[t]) => (0..=PATH_STEPS).map(|k| t * k as f64 / PATH_STEPS as f64).collect(),
            _ => unreachable!("validated: one time per size"),
        };
        let config = cfg.configuration(n)?;
        let sampler = GueSampler::new(n, cfg.seed)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("lambda_{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        for index in 0..cfg.monte_carlo.paths {
            let path = dbm_paths(&sampler, &config, &times, index)?;
            let mut csv = Csv::new(&header);
            for (t, ev) in times.iter().zip(&path) {
                let mut row = vec![Cell::Num(*t)];
                row.extend(ev.iter().map(|&x| Cell::Num(x)));
                csv.row(&row);
            }
            csv.write(&cfg.output.join(format!("paths_n{n}_s{index}.csv")))?;
        }
    }
    Ok(())
}
