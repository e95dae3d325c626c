//! Experiment driver: dispatches subcommands, reads the config file and
//! writes CSV/JSON artifacts. Reruns with the same config and seed
//! overwrite byte-identical artifacts.

use crate::bins::SignedBins;
use crate::config::ExperimentConfig;
use crate::drift::DriftSpec;
use crate::duhamel::{
    resolvent_check, sum_series, verify_convolution_inequality, Regime, SeriesOptions,
    SpaceTimeGrid,
};
use crate::error::Error;
use crate::geometry::{from_signed_radial, DomainSpec, EPoint, ModelParams};
use crate::green::{
    classify, comparison_form, fit_green, green_pde, GreenPair, GreenReport,
};
use crate::kernels::{alpha_grid, fit_sandwich, BoundReport, KernelCell};
use crate::pde::{
    chapman_kolmogorov_residual, default_targets, free_space_grid, solve_kernel, SolveOptions,
};
use crate::sim::{
    estimate_density, occupation_and_exit, simulate_full, simulate_radial, DriftMode, PolarBins,
    SimConfig,
};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

impl RunContext {
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Error> {
        std::fs::create_dir_all(&self.out_dir)?;
        let text = serde_json::to_string_pretty(value).expect("serializable report");
        std::fs::write(self.out_dir.join(name), text + "\n")?;
        Ok(())
    }

    fn write_csv(
        &self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), Error> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut buf = Vec::new();
        write(&mut buf)?;
        std::fs::write(self.out_dir.join(name), buf)?;
        Ok(())
    }
}

fn sim_config(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<SimConfig, Error> {
    let dt = cfg.f64("sim", "dt")?;
    let mut c = SimConfig::new(
        dt,
        cfg.f64("sim", "horizon")?,
        cfg.usize_or("sim", "n_paths", 100_000)?,
        ctx.seed.unwrap_or(cfg.u64_or("sim", "seed", 1)?),
    );
    c.band = cfg.f64_or("sim", "band", 3.0 * dt.sqrt())?;
    c.bessel_term = cfg.bool_or("sim", "bessel", true)?;
    c.drift_mode = match cfg.string_or("sim", "mode", "driftless")?.as_str() {
        "driftless" => DriftMode::Driftless,
        "euler_maruyama" => DriftMode::EulerMaruyama,
        "girsanov" => DriftMode::Girsanov,
        other => {
            return Err(crate::error::ConfigError::BadValue {
                key: "sim.mode".into(),
                message: format!("unknown mode `{other}`"),
            }
            .into())
        }
    };
    Ok(c)
}

pub fn run_simulate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), Error> {
    let params = cfg.model()?;
    let drift = cfg.drift()?;
    let sc = sim_config(cfg, ctx)?;
    let x0 = cfg.f64_or("sim", "x0", 0.0)?;
    let space = cfg.string_or("sim", "space", "radial")?;
    let bins = SignedBins::uniform(
        cfg.f64_or("sim", "window_leg", 2.5)?,
        cfg.f64_or("sim", "window_plane", 2.5)?,
        cfg.usize_or("sim", "bins_leg", 50)?,
        cfg.usize_or("sim", "bins_plane", 50)?,
    )?;
    let dump_endpoints = cfg.bool_or("sim", "dump_endpoints", false)?;
    cfg.finish()?;

    let ensemble = match space.as_str() {
        "radial" => simulate_radial(x0, &sc, &params, &drift)?,
        "full" => {
            let pt = from_signed_radial(x0, &params)?;
            simulate_full(&pt, &sc, &params, &drift)?
        }
        other => {
            return Err(crate::error::ConfigError::BadValue {
                key: "sim.space".into(),
                message: format!("unknown space `{other}` (radial, full)"),
            }
            .into())
        }
    };
    let density = estimate_density(&ensemble, &bins, &params)?;
    ctx.write_csv("density.csv", |buf| density.write_csv(buf))?;
    if dump_endpoints {
        ctx.write_csv("endpoints.csv", |buf| ensemble.write_csv(&params, buf))?;
    }
    ctx.write_json(
        "sim_summary.json",
        &json!({
            "n_paths": ensemble.n_paths(),
            "seed": ensemble.seed,
            "mode": format!("{:?}", sc.drift_mode),
            "mean_weight": ensemble.mean_weight(),
            "mean_weight_se": ensemble.mean_weight_se(),
            "effective_sample_size": density.effective_sample_size,
            "in_window_fraction": density.in_window_fraction,
            "clipped_weights": ensemble.clipped_weights,
            "total_mass_check": density.total_mass(),
        }),
    )?;
    Ok(())
}

pub fn run_pde(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), Error> {
    let params = cfg.model()?;
    let drift = cfg.drift()?;
    let times = cfg.f64_list("pde", "times")?;
    let h = cfg.f64("pde", "h")?;
    let grid = free_space_grid(
        params,
        cfg.f64_or("pde", "l_leg", 3.0)?,
        cfg.f64_or("pde", "l_plane", 3.0)?,
        h,
    )?;
    let x0 = cfg.f64_or("pde", "x0", 0.0)?;
    let drifted = cfg.bool_or("pde", "drifted", false)?;
    let ck = cfg.bool_or("pde", "ck_check", true)?;
    cfg.finish()?;

    let beta = drifted.then(|| drift.sample_line(grid.nodes()));
    let opts = SolveOptions::default();
    let table = solve_kernel(&grid, x0, &times, beta.as_deref(), &opts)?;
    ctx.write_csv("kernel.csv", |buf| table.write_csv(buf))?;

    let masses: Vec<f64> = (0..times.len()).map(|k| table.mass_at_index(k)).collect();
    let fluxes: Vec<f64> = times
        .iter()
        .map(|&t| table.flux_at_star(t))
        .collect::<Result<_, _>>()?;
    let ck_residual = if ck && !drifted && times.len() >= 2 {
        let t = *times.last().unwrap();
        if times.iter().any(|&s| (s - t / 2.0).abs() < 1e-12) {
            Some(chapman_kolmogorov_residual(
                &table,
                t / 2.0,
                t,
                &default_targets(&grid, 17),
                &opts,
            )?)
        } else {
            None
        }
    } else {
        None
    };
    ctx.write_json(
        "pde_summary.json",
        &json!({
            "times": times,
            "masses": masses,
            "flux_at_star": fluxes,
            "worst_undershoot": table.worst_undershoot,
            "chapman_kolmogorov_residual": ck_residual,
            "drifted": drifted,
        }),
    )?;
    Ok(())
}

pub fn run_duhamel(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), Error> {
    let params = cfg.model()?;
    let drift = cfg.drift()?;
    let grid = free_space_grid(
        params,
        cfg.f64_or("duhamel", "l_leg", 2.5)?,
        cfg.f64_or("duhamel", "l_plane", 2.5)?,
        cfg.f64_or("duhamel", "h", 0.02)?,
    )?;
    let st = SpaceTimeGrid::new(
        grid,
        cfg.f64_or("duhamel", "dt", 0.0125)?,
        cfg.usize_or("duhamel", "n_times", 10)?,
    )?;
    let x0 = cfg.f64_or("duhamel", "x0", 0.0)?;
    let mut series_opts = SeriesOptions::default();
    series_opts.alpha_norm = cfg.f64_or("duhamel", "alpha_norm", 0.25)?;
    let extend_to = cfg.f64_or("duhamel", "extend_to", 0.0)?;
    let alpha_res = cfg.f64_or("duhamel", "resolvent_alpha", 40.0)?;
    let n_terms = cfg.usize_or("duhamel", "resolvent_terms", 4)?;
    cfg.finish()?;

    let series = sum_series(&st, x0, &drift, &params, &series_opts)?;
    ctx.write_json("series_diagnostics.json", &series.state)?;
    let table = series.as_table();
    ctx.write_csv("series_sum.csv", |buf| table.write_csv(buf))?;

    if extend_to > st.horizon() {
        let outs: Vec<f64> = (1..=4)
            .map(|k| st.horizon() + (extend_to - st.horizon()) * k as f64 / 4.0)
            .collect();
        let ext = crate::duhamel::extend_time(
            &series,
            &drift,
            extend_to,
            &outs,
            &SolveOptions::default(),
        )?;
        ctx.write_csv("series_extended.csv", |buf| ext.write_csv(buf))?;
    }
    let resolvent = resolvent_check(&series, &drift, &params, alpha_res, n_terms)?;
    ctx.write_json("resolvent.json", &resolvent)?;
    Ok(())
}

pub fn sandwich_from_table(
    table: &crate::pde::KernelTable,
    times: &[f64],
    params: &ModelParams,
    alphas: &[f64],
    stride: usize,
) -> Result<BoundReport, Error> {
    let grid = &table.grid;
    let mut cells = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        for (i, &y) in grid.nodes().iter().enumerate() {
            if i % stride != 0 {
                continue;
            }
            let v = table.values[k][i];
            if v <= 0.0 {
                continue;
            }
            cells.push(KernelCell {
                t,
                x: from_signed_radial(table.source, params)?,
                y: from_signed_radial(y, params)?,
                value: v,
            });
        }
    }
    Ok(fit_sandwich(&cells, 0, crate::kernels::DEFAULT_M, alphas, params)?)
}

pub fn run_verify_bounds(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), Error> {
    let params = cfg.model()?;
    let drift = cfg.drift()?;
    let h = cfg.f64_or("bounds", "h", 4e-3)?;
    let t_lo = cfg.f64_or("bounds", "t_lo", 0.05)?;
    let t_hi = cfg.f64_or("bounds", "t_hi", 1.0)?;
    let n_times = cfg.usize_or("bounds", "n_times", 12)?;
    let alphas = alpha_grid(
        cfg.f64_or("bounds", "alpha_lo", 1e-2)?,
        cfg.f64_or("bounds", "alpha_hi", 1e2)?,
        cfg.usize_or("bounds", "per_decade", 64)?,
    )?;
    let battery_m = cfg.f64_or("bounds", "battery_m", 1.0)?;
    let battery_alpha = cfg.f64_or("bounds", "battery_alpha", 0.2)?;
    let battery_samples = cfg.usize_or("bounds", "battery_samples", 8)?;
    let battery_times = cfg
        .f64_list("bounds", "battery_times")
        .unwrap_or_else(|_| vec![0.05, 0.1, 0.2, 0.4]);
    let seed = ctx.seed.unwrap_or(cfg.u64_or("bounds", "seed", 9)?);
    cfg.finish()?;

    // two-sided sandwich on the driftless and drifted kernels
    let span = 1.4 * (2.0 * t_hi).sqrt() + 1.0;
    let grid = free_space_grid(params, span, span, h)?;
    let times: Vec<f64> = (0..n_times)
        .map(|k| t_lo * (t_hi / t_lo).powf(k as f64 / (n_times - 1) as f64))
        .collect();
    let opts = SolveOptions::default();
    let driftless = solve_kernel(&grid, 0.0, &times, None, &opts)?;
    let report0 = sandwich_from_table(&driftless, &times, &params, &alphas, 4)?;
    ctx.write_json("bound_report_driftless.json", &report0)?;
    if !drift.is_zero() {
        let beta = drift.sample_line(grid.nodes());
        let drifted = solve_kernel(&grid, 0.0, &times, Some(&beta), &opts)?;
        let report_b = sandwich_from_table(&drifted, &times, &params, &alphas, 4)?;
        ctx.write_json("bound_report_drifted.json", &report_b)?;
    }

    // convolution battery over the seven regimes
    let bat_grid = free_space_grid(params, 4.0, 4.0, 0.025)?;
    let bat_dt = battery_times
        .iter()
        .fold(f64::INFINITY, |m, &t| m.min(t))
        / 4.0;
    let horizon = battery_times.iter().fold(0.0f64, |m, &t| m.max(t));
    let bat_st = SpaceTimeGrid::new(bat_grid, bat_dt, (horizon / bat_dt).round() as usize)?;
    let mut battery = Vec::new();
    for regime in Regime::all() {
        battery.push(verify_convolution_inequality(
            &bat_st,
            regime,
            &drift,
            &params,
            &battery_times,
            battery_samples,
            seed,
            battery_m,
            battery_alpha,
            &opts,
        )?);
    }
    ctx.write_json("convolution_battery.json", &battery)?;
    Ok(())
}

/// Builds the comparison pairs for the Green report: leg/leg and mixed
/// pairs from deterministic columns started on the leg and at the darning
/// point, plane/plane pairs from polar Monte Carlo occupation.
pub fn green_pairs(
    domain: &DomainSpec,
    params: &ModelParams,
    h: f64,
    t_max: f64,
    mc: &SimConfig,
    n_pairs: usize,
) -> Result<(Vec<GreenPair>, f64, f64, f64), Error> {
    let opts = SolveOptions::default();
    let mut pairs = Vec::new();
    let span = domain.plane_rho_span(params);
    let exclusion = 3.0 * h;

    // deterministic columns: sources on the leg and at the darning point
    let sources = [
        EPoint::Star,
        EPoint::leg(0.25 * domain.leg_length).unwrap(),
        EPoint::leg(0.5 * domain.leg_length).unwrap(),
        EPoint::leg(0.75 * domain.leg_length).unwrap(),
    ];
    let per_source = (n_pairs * 7 / 10) / sources.len();
    // columns for distinct sources solve in parallel
    use rayon::prelude::*;
    let columns: Result<Vec<_>, _> = sources
        .par_iter()
        .map(|x| green_pde(domain, x, None, params, h, t_max, &opts))
        .collect();
    let columns = columns?;
    for (x, col) in sources.iter().zip(&columns) {
        let x_signed = col.source;
        for k in 0..per_source {
            // alternate leg and plane targets
            let y_signed = if k % 2 == 0 {
                -domain.leg_length * (0.08 + 0.84 * (k as f64 / per_source as f64))
            } else {
                span * (0.08 + 0.84 * (k as f64 / per_source as f64))
            };
            if (y_signed - x_signed).abs() < exclusion {
                continue;
            }
            let y = from_signed_radial(y_signed, params)?;
            if y.is_star() || !domain.contains(&y, params) {
                continue;
            }
            let estimate = col.value_at(y_signed).unwrap();
            let form = comparison_form(domain, x, &y, params)?;
            pairs.push(GreenPair {
                x: *x,
                y,
                case: classify(x, &y),
                estimate,
                form,
            });
        }
    }

    // plane/plane pairs from polar occupation around two plane sources
    let polar = PolarBins {
        n_rho: 12,
        n_theta: 12,
    };
    let plane_sources = [
        EPoint::plane_radial(0.35 * span, params)?,
        EPoint::plane_radial(0.7 * span, params)?,
    ];
    let bins = SignedBins::uniform(domain.leg_length, span, 16, 16)?;
    let mut occupation_mass = 0.0;
    let mut mean_exit = 0.0;
    let mut exit_se = 0.0;
    for (si, x) in plane_sources.iter().enumerate() {
        let rep = occupation_and_exit(x, mc, params, &DriftSpec::zero(), domain, &bins, Some(polar))?;
        if si == 0 {
            occupation_mass = rep.green_mass(params);
            mean_exit = rep.mean_exit_time;
            exit_se = rep.exit_time_se;
        }
        let (pb, values, ses) = rep.polar.as_ref().expect("polar bins requested");
        let EPoint::Plane { x1, x2 } = x else { unreachable!() };
        let want = n_pairs - pairs.len().min(n_pairs);
        let mut taken = 0;
        for ir in 0..pb.n_rho {
            for it in 0..pb.n_theta {
                if taken >= want / (plane_sources.len() - si) {
                    break;
                }
                let k = ir * pb.n_theta + it;
                let rho_mid = span * (ir as f64 + 0.5) / pb.n_rho as f64;
                let th_mid =
                    2.0 * std::f64::consts::PI * (it as f64 + 0.5) / pb.n_theta as f64;
                let radius = rho_mid + params.eps();
                let y = EPoint::Plane {
                    x1: radius * th_mid.cos(),
                    x2: radius * th_mid.sin(),
                };
                if !domain.contains(&y, params) {
                    continue;
                }
                let d = crate::geometry::euclid_dist(x, &y, params);
                if d < 3.0 * span / pb.n_rho as f64 {
                    continue; // diagonal exclusion at the bin scale
                }
                let g = values[k];
                // skip statistically empty bins
                if g <= 0.0 || ses[k] > 0.5 * g {
                    continue;
                }
                let form = comparison_form(domain, x, &y, params)?;
                pairs.push(GreenPair {
                    x: EPoint::Plane { x1: *x1, x2: *x2 },
                    y,
                    case: classify(x, &y),
                    estimate: g,
                    form,
                });
                taken += 1;
            }
        }
    }
    Ok((pairs, occupation_mass, mean_exit, exit_se))
}

pub fn run_green(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), Error> {
    let params = cfg.model()?;
    let domain = DomainSpec::new(
        cfg.f64_or("green", "l", 1.0)?,
        cfg.f64_or("green", "r", 2.0)?,
        true,
        &params,
    )
    .map_err(crate::error::Error::Geometry)?;
    let h = cfg.f64_or("green", "h", 4e-3)?;
    let t_max = cfg.f64_or("green", "t_max", 40.0)?;
    let n_pairs = cfg.usize_or("green", "n_pairs", 200)?;
    let mc_dt = cfg.f64_or("green", "mc_dt", 5e-5)?;
    let mut mc = SimConfig::new(
        mc_dt,
        cfg.f64_or("green", "mc_horizon", 30.0)?,
        cfg.usize_or("green", "mc_paths", 30_000)?,
        ctx.seed.unwrap_or(cfg.u64_or("green", "seed", 3)?),
    );
    mc.band = 3.0 * mc_dt.sqrt();
    cfg.finish()?;

    let col = green_pde(&domain, &EPoint::Star, None, &params, h, t_max, &SolveOptions::default())?;
    ctx.write_csv("green_column.csv", |buf| col.write_csv(buf))?;

    let (pairs, _, _, _) = green_pairs(&domain, &params, h, t_max, &mc, n_pairs)?;
    let report: GreenReport = fit_green(pairs);

    // occupation identity from the same source as the deterministic column
    let bins = SignedBins::uniform(
        domain.leg_length,
        domain.plane_rho_span(&params),
        16,
        16,
    )?;
    let star_occ = occupation_and_exit(
        &EPoint::Star,
        &mc,
        &params,
        &DriftSpec::zero(),
        &domain,
        &bins,
        None,
    )?;
    ctx.write_json(
        "green_report.json",
        &json!({
            "cases": report.cases,
            "n_pairs": report.pairs.len(),
            "pde_green_mass_from_star": col.total_mass(),
            "mc_mean_exit_time_from_star": star_occ.mean_exit_time,
            "mc_exit_time_se": star_occ.exit_time_se,
            "identity_gap_in_se": (col.total_mass() - star_occ.mean_exit_time).abs()
                / star_occ.exit_time_se,
        }),
    )?;
    Ok(())
}

pub fn run_report(ctx: &RunContext) -> Result<(), Error> {
    let mut aggregate = serde_json::Map::new();
    let names = [
        "pde_summary.json",
        "sim_summary.json",
        "series_diagnostics.json",
        "resolvent.json",
        "bound_report_driftless.json",
        "bound_report_drifted.json",
        "convolution_battery.json",
        "green_report.json",
    ];
    for name in names {
        let path = ctx.out_dir.join(name);
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).unwrap_or(serde_json::Value::Null);
            aggregate.insert(name.trim_end_matches(".json").to_string(), value);
        }
    }
    ctx.write_json("summary.json", &serde_json::Value::Object(aggregate))?;
    Ok(())
}

/// Dispatches one subcommand against a loaded config.
pub fn run(subcommand: &str, config_path: Option<&Path>, ctx: &RunContext) -> Result<(), Error> {
    if subcommand == "report" {
        return run_report(ctx);
    }
    let path = config_path.ok_or_else(|| {
        Error::Config(crate::error::ConfigError::BadValue {
            key: "--config".into(),
            message: "this subcommand requires a config file".into(),
        })
    })?;
    let cfg = ExperimentConfig::load(path)?;
    match subcommand {
        "simulate" => run_simulate(&cfg, ctx),
        "pde" => run_pde(&cfg, ctx),
        "duhamel" => run_duhamel(&cfg, ctx),
        "verify-bounds" => run_verify_bounds(&cfg, ctx),
        "green" => run_green(&cfg, ctx),
        other => Err(Error::Config(crate::error::ConfigError::BadValue {
            key: "subcommand".into(),
            message: format!("unknown subcommand `{other}`"),
        })),
    }
}
