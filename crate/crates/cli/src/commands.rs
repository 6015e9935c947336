use std::collections::HashMap;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use skyrmap_core::distortion::track_branches;
use skyrmap_core::euler_lagrange::{
    minimize_profile_run, nomizu_grid, residual_grid, residual_grid_inset, ProfileSettings, System,
};
use skyrmap_core::stability::standard_field_family;
use skyrmap_core::*;

use crate::config::{FormChoice, RunConfig, SystemChoice};
use crate::output::Outputs;

/// Builds the configured map, resolving grid profiles and the domain deformation.
pub fn build_map(cfg: &RunConfig) -> Result<MapFamily> {
    let spec = cfg.map.as_deref().ok_or_else(|| anyhow!("config key `map` is required for this command"))?;
    let mut store = HashMap::new();
    for (name, path) in &cfg.profiles {
        let mut p = Profile::from_csv(path).with_context(|| format!("profile `{name}` from {}", path.display()))?;
        p.name = name.clone();
        store.insert(name.clone(), p);
    }
    let map = make_map_with(spec, &store)?;
    match &cfg.chart.deform {
        None => Ok(map),
        Some(d) => Ok(map.deformed(&Deformation::parse(d)?)?),
    }
}

fn map_header(map: &MapFamily) -> Value {
    json!({
        "name": map.name,
        "domain": map.domain.name,
        "codomain": map.codomain.name,
        "jacobian_mode": format!("{:?}", map.jacobian_mode).to_lowercase(),
        "params": map.params,
        "claims": map.claims,
    })
}

pub fn analyze(cfg: &RunConfig, out: &Outputs) -> Result<()> {
    let map = build_map(cfg)?;
    let grid = map.domain.sample_grid(cfg.grid.analyze);
    let flags = classify(&map, &grid, cfg.tol.classify);
    let m = map.dim_domain();
    let rank = m.min(map.dim_codomain());
    let mut header: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
    header.extend((1..=m).map(|i| format!("lambda2_{i}")));
    header.extend(["sigma1", "sigma2", "four_energy_density"].map(String::from));
    let mut rows = Vec::with_capacity(grid.len());
    let mut newton_excess = f64::NEG_INFINITY;
    for x in &grid {
        let d = analyze_point(&map, x)?;
        let bound = d.newton_bound(rank);
        newton_excess = newton_excess.max((d.sigma2() - bound) / bound.max(f64::MIN_POSITIVE));
        let mut row: Vec<String> = x.iter().chain(&d.eigenvalues).map(|v| format!("{v:.17e}")).collect();
        row.extend([d.sigma1(), d.sigma2(), four_energy_density(&d)].map(|v| format!("{v:.17e}")));
        rows.push(row);
    }
    out.table_rows("spectrum", &header, rows)?;
    // eigenvalue branches along one axis through the middle of the chart
    let axis = map.reduced_axis.unwrap_or(0);
    let centre: Vec<f64> = map.domain.coord_ranges.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let (lo, hi) = map.domain.coord_ranges[axis];
    let n = 4 * cfg.grid.analyze;
    let ts: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect();
    let sweep: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            let mut x = centre.clone();
            x[axis] = t;
            Ok(analyze_point(&map, &x)?.eigenvalues)
        })
        .collect::<Result<_>>()?;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|i| format!("lambda2_{i}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    out.series("spectrum_sweep", &cols, ts.iter().zip(track_branches(&sweep)).map(|(t, v)| [vec![*t], v].concat()))?;
    out.report(&json!({
        "command": "analyze",
        "map": map_header(&map),
        "points": grid.len(),
        "tolerance": cfg.tol.classify,
        "flags": flags,
        "newton": { "rank": rank, "max_relative_excess": newton_excess, "holds": newton_excess <= 1e-12 },
        "sweep_axis": axis,
    }))?;
    Ok(())
}

pub fn energy(cfg: &RunConfig, out: &Outputs) -> Result<()> {
    let map = build_map(cfg)?;
    let rep = full_report(&map, cfg.kappa, cfg.quad.orders())?;
    let bound = match &rep.charge {
        Some(_) => Some(bounds_report(&rep)?),
        None => None,
    };
    EnergyReport::write_csv(std::slice::from_ref(&rep), out.table("energy")?)?;
    if let Some(opt) = &rep.radius_opt {
        // E(R) = A R + κ B / R on either side of the optimum
        let r0 = map.domain.radius.unwrap_or(1.0);
        let (a, b) = (rep.e_sigma1 / r0, rep.e_sigma2 * r0);
        let rows = (1..=60).map(|i| {
            let r = opt.r_star * (0.25 + 0.05 * i as f64);
            vec![r, a * r + cfg.kappa * b / r]
        });
        out.series("radius_curve", &["radius", "energy"], rows)?;
    }
    out.report(&json!({
        "command": "energy",
        "map": map_header(&map),
        "kappa_cal": KAPPA_CAL,
        "energy": rep,
        "bound": bound,
        "newton_integrated_holds": rep.newton_holds(1e-12),
    }))?;
    Ok(())
}

fn residual_summary(r: &ResidualReport) -> Value {
    json!({
        "system": r.system,
        "points": r.grid.len(),
        "norms": r.norms,
        "sup": r.sup(),
        "tol_crit": r.tol_crit,
        "verdict": r.verdict,
        "route_mismatch": r.route_mismatch,
        "notes": r.notes,
        "companions": r.companions.iter().map(residual_summary).collect::<Vec<_>>(),
    })
}

pub fn critical(cfg: &RunConfig, out: &Outputs) -> Result<()> {
    let map = build_map(cfg)?;
    let grid = if cfg.grid.inset > 0.0 {
        residual_grid_inset(&map, cfg.grid.residual, cfg.grid.inset)
    } else {
        residual_grid(&map, cfg.grid.residual)
    };
    let system = match cfg.critical.system {
        SystemChoice::Auto if map.dim_codomain() == 2 => SystemChoice::Fh,
        SystemChoice::Auto => SystemChoice::Sig3,
        s => s,
    };
    let mut rep = match system {
        SystemChoice::Fh => residual_2target(&map, &grid)?,
        SystemChoice::Sig3 => residual_3target(&map, &grid)?,
        SystemChoice::Contactsig3 => residual_contact(&map, &grid)?,
        SystemChoice::Fourharm => residual_4harmonic(&map, &grid)?,
        SystemChoice::Nomizu => {
            let alpha = map.profile.clone().ok_or_else(|| anyhow!("nomizu system needs a profile family"))?;
            let k = *map.params.get("k").ok_or_else(|| anyhow!("nomizu system needs a family with parameter k"))?;
            nomizu_residual(&alpha, k, &nomizu_grid(cfg.grid.residual))?
        }
        SystemChoice::Auto => unreachable!(),
    };
    if let Some(t) = cfg.tol.crit {
        rep.tol_crit = t;
        rep.verdict = rep.verdict_at(t);
    }
    let d = rep.grid.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend((0..rep.norms.len()).map(|e| format!("eq{e}")));
    let rows = rep.grid.iter().zip(&rep.residuals).map(|(x, r)| x.iter().chain(r).map(|v| format!("{v:.17e}")).collect());
    out.table_rows("residuals", &header, rows)?;
    let axis = if rep.system == System::Nomizu { 0 } else { map.reduced_axis.unwrap_or(0) };
    out.series(
        "residual_profile",
        &["t", "max_abs_residual"],
        rep.grid.iter().zip(&rep.residuals).map(|(x, r)| vec![x[axis], r.iter().fold(0.0, |m: f64, v| m.max(v.abs()))]),
    )?;
    out.report(&json!({ "command": "critical", "map": map_header(&map), "residual": residual_summary(&rep) }))?;
    Ok(())
}

pub fn minimize(cfg: &RunConfig, out: &Outputs) -> Result<()> {
    let p = &cfg.profile;
    let settings = ProfileSettings { max_iter: p.max_iter, grad_tol: p.grad_tol, log_every: p.log_every };
    let r = minimize_profile_run(p.k, p.l, cfg.kappa, p.cells, settings)?;
    r.write_profile_csv(out.table("profile")?)?;
    r.write_log_csv(out.table("log")?)?;
    let ansatz = Profile::arccos_cos2();
    out.series("profile", &["s", "alpha", "contact_ansatz"], r.s.iter().zip(&r.alpha).map(|(s, a)| vec![*s, *a, ansatz.value(*s)]))?;
    out.series("convergence", &["iteration", "ratio"], r.log.iter().map(|row| vec![row.iteration as f64, row.ratio]))?;
    out.report(&json!({
        "command": "minimize-profile",
        "k": p.k,
        "l": p.l,
        "kappa": cfg.kappa,
        "cells": p.cells,
        "iterations": r.iterations,
        "converged": r.converged,
        "gradient_norm": r.gradient_norm,
        "ratio": r.report.radius_opt.as_ref().map(|o| o.ratio),
        "discrete_ratio": r.discrete_ratio,
        "literature_b2_ratio": energy::LITERATURE_B2_RATIO,
        "residual_monotone": r.residual_monotone,
        "profile_monotone": r.profile_monotone,
        "energy": r.report,
    }))?;
    if !r.converged {
        bail!("profile minimizer stopped after {} iterations with gradient norm {:.3e}; last iterate written", r.iterations, r.gradient_norm);
    }
    Ok(())
}

pub fn stability(cfg: &RunConfig, out: &Outputs) -> Result<()> {
    let s = &cfg.stability;
    let chart = make_chart_str(&s.chart)?;
    let seeds: Vec<u64> = (0..s.random_fields as u64).map(|i| cfg.seed + i).collect();
    let fields = standard_field_family(&chart, &seeds, s.band)?;
    let rule = QuadratureRule::product(&chart, s.order);
    let reports: Vec<HessianReport> = fields
        .iter()
        .map(|f| match s.form {
            FormChoice::Hopf => hessian_hopf(f, &rule),
            FormChoice::Sigma2 => hessian_homothety(f, s.n, s.lambda, cfg.kappa, &rule, HessianForm::Sigma2Homothety),
            FormChoice::Full => hessian_homothety(f, s.n, s.lambda, cfg.kappa, &rule, HessianForm::Sigma12Full),
            FormChoice::Dirichlet => hessian_homothety(f, s.n, s.lambda, cfg.kappa, &rule, HessianForm::DirichletPart),
        })
        .collect::<skyrmap_core::Result<_>>()?;
    let scale = reports.iter().flat_map(|r| r.terms.iter().map(|t| t.1.abs())).fold(0.0, f64::max);
    let min_value = reports.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let nonnegative = min_value >= -1e-8 * scale.max(1.0);
    let header = ["field", "form", "value", "terms", "yano_mismatch"].map(String::from);
    out.table_rows(
        "hessians",
        &header,
        reports.iter().map(|r| {
            vec![
                serde_json::to_string(&r.field).unwrap_or_default(),
                serde_json::to_string(&r.form).unwrap_or_default().trim_matches('"').to_string(),
                format!("{:.17e}", r.value),
                r.terms.iter().map(|(n, v)| format!("{n}={v:.17e}")).collect::<Vec<_>>().join(";"),
                r.yano_mismatch().map_or(String::new(), |m| format!("{m:.3e}")),
            ]
        }),
    )?;
    let scan = if s.form == FormChoice::Full && cfg.kappa > 0.0 {
        let step = (s.lambda_max - s.lambda_min) / (s.lambda_steps - 1) as f64;
        let lambdas: Vec<f64> = (0..s.lambda_steps).map(|i| s.lambda_min + step * i as f64).collect();
        let scan = threshold_scan(cfg.kappa, &lambdas, &fields, &rule)?;
        scan.write_csv(out.plot("threshold")?)?;
        Some(json!({ "kappa": scan.kappa, "lambda_star": scan.lambda_star, "predicted": scan.predicted }))
    } else {
        None
    };
    out.report(&json!({
        "command": "stability",
        "chart": chart.name,
        "form": s.form,
        "parameters": { "n": s.n, "lambda": s.lambda, "kappa": cfg.kappa },
        "quadrature_order": s.order,
        "fields": reports,
        "min_value": min_value,
        "verdict": if nonnegative { "nonnegative on the tested field family" } else { "negative direction found in the tested field family" },
        "threshold_scan": scan,
    }))?;
    Ok(())
}
