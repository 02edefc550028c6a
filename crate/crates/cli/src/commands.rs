//! One function per subcommand. Each returns a JSON report, the artifact
//! files to write and a short text summary.

use serde_json::{json, Value};

use fiberfold::analysis::{
    classified_critical_points, count_from_pieces, critical_points, find_preimages, link_csv, preimages_on_model, uniform_grid,
    verify_spectral_link, FiberModel, HeightEval, HeightModel, PreimageSet,
};
use fiberfold::asymptotics::{asymptotic_directions, asymptotic_report, direction_defect, fucik_check, half_fiber_divergence, locate_fucik_pair, ratio_csv};
use fiberfold::config::{Instance, ProblemConfig, Resolved, RunConfig};
use fiberfold::fiber::trace_fiber;
use fiberfold::oracle::{compare_sets, newton_multistart, normal_form_toy, NewtonOptions, NormalFormToy};
use fiberfold::problem::ProblemSpec;
use fiberfold::{Error, Field, Result};

use crate::svg::{self, Marker, Series};

pub struct Outcome {
    pub report: Value,
    pub files: Vec<(String, String)>,
    pub lines: Vec<String>,
    /// All invariant checks of the command passed.
    pub ok: bool,
}

macro_rules! to_value {
    ($v:expr) => {
        serde_json::to_value($v).unwrap_or(Value::Null)
    };
}

fn z0_of(cfg: &Resolved, ps: &ProblemSpec) -> Result<Field> {
    match &cfg.fiber.z0 {
        Some(c) => {
            let z = Field::from_slice(c);
            ps.check(&z)?;
            Ok(ps.project_h(&z))
        }
        None => Ok(ps.project_h(ps.rhs().ok_or_else(|| Error::Config("problem has no right-hand side".into()))?)),
    }
}

fn window(cfg: &Resolved) -> (f64, f64, usize) {
    (cfg.fiber.t_min, cfg.fiber.t_max, cfg.fiber.steps)
}

fn evals_csv(samples: &[HeightEval]) -> String {
    let mut out = String::from("t,height,slope\r\n");
    for e in samples {
        out.push_str(&format!("{:.17e},{:.17e},{:.17e}\r\n", e.t, e.height, e.slope));
    }
    out
}

fn height_svg(title: &str, samples: &[HeightEval], hline: Option<f64>, markers: Vec<Marker>) -> String {
    let ts: Vec<f64> = samples.iter().map(|e| e.t).collect();
    let hs: Vec<f64> = samples.iter().map(|e| e.height).collect();
    svg::line_plot(title, "t", "height", &[Series { xs: &ts, ys: &hs, color: "#1f4e9c" }], hline, &markers)
}

fn toy_of(inst: &Instance) -> Option<&NormalFormToy> {
    match inst {
        Instance::Toy(t) => Some(t),
        Instance::Problem(_) => None,
    }
}

pub fn eigs(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let ps = inst.problem()?;
    let gap = ps.gap();
    let mu = ps.mu();
    let shown = &mu[..mu.len().min(10)];
    let mut csv = String::from("index,mu\r\n");
    for (k, m) in mu.iter().enumerate() {
        csv.push_str(&format!("{},{:.17e}\r\n", k + 1, m));
    }
    let mut lines: Vec<String> = shown.iter().enumerate().map(|(k, m)| format!("lambda_{} = {:.6}", k + 1, m)).collect();
    lines.push(format!(
        "shift gamma = {:.6}, n = {:.6}, c = {:.6}, n/c = {:.4}, interacting mode {}",
        gap.gamma,
        gap.lipschitz_n,
        gap.gap_c,
        gap.ratio(),
        ps.p() + 1
    ));
    lines.push("gap condition: holds".into());
    let _ = cfg;
    Ok(Outcome {
        report: json!({
            "eigenvalues": mu,
            "basis": ps.basis().map(|b| to_value!(&b.describe())),
            "gap": to_value!(gap),
            "gap_condition": "holds",
        }),
        files: vec![("eigenvalues.csv".into(), csv)],
        lines,
        ok: true,
    })
}

pub fn fiber(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let (lo, hi, steps) = window(cfg);
    if let Some(toy) = toy_of(inst) {
        let z = toy.z_along(0.0);
        let samples = toy.sample(&z, &uniform_grid(lo, hi, steps))?;
        let mut files = vec![("trace.csv".into(), evals_csv(&samples))];
        if cfg.output.svg {
            files.push(("height.svg".into(), height_svg("height along the fiber", &samples, None, vec![])));
        }
        return Ok(Outcome {
            report: json!({ "samples": samples.len(), "heights": samples.iter().map(|e| e.height).collect::<Vec<_>>() }),
            files,
            lines: vec![format!("traced {} points of the normal form", samples.len())],
            ok: true,
        });
    }
    let ps = inst.problem()?;
    let z0 = z0_of(cfg, ps)?;
    let trace = trace_fiber(ps, &z0, lo, hi, steps, &cfg.solve_options())?;
    let steep = trace.steepness(ps);
    let samples: Vec<HeightEval> = trace
        .points
        .iter()
        .map(|p| HeightEval { t: p.t, height: p.height, slope: p.slope, u: None })
        .collect();
    let ok = trace.meta.max_residual <= 1e3 * cfg.solver.tol && steep.max_quotient_x <= steep.bound_x * (1.0 + 1e-6) + 1e-9;
    let hs = trace.heights();
    let (hmin, hmax) = hs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), h| (a.min(*h), b.max(*h)));
    let lines = vec![
        format!("traced {} points on t in [{lo}, {hi}]", trace.points.len()),
        format!("height range [{hmin:.6}, {hmax:.6}]"),
        format!(
            "max residual {:.3e}, max contraction rate {:.4} (n/c = {:.4})",
            trace.meta.max_residual,
            trace.meta.max_rate,
            ps.gap().ratio()
        ),
        format!("steepness {:.4} within bound {:.4}", steep.max_quotient_x, steep.bound_x),
    ];
    let mut files = vec![("trace.csv".into(), trace.to_csv(ps))];
    if cfg.output.svg {
        files.push(("height.svg".into(), height_svg("height along the fiber", &samples, None, vec![])));
    }
    Ok(Outcome {
        report: json!({
            "z0": to_value!(&z0),
            "meta": to_value!(&trace.meta),
            "steepness": to_value!(&steep),
            "t": trace.ts(),
            "height": hs,
            "slope": trace.slopes(),
        }),
        files,
        lines,
        ok,
    })
}

/// `u_i ≤ u_{i+1}` on the grid, up to `1e−6 · max |u|`.
pub fn pointwise_ordered(ps: &ProblemSpec, set: &PreimageSet) -> Result<Option<bool>> {
    let Some(basis) = ps.basis() else {
        return Ok(None);
    };
    let grids = set
        .solutions
        .iter()
        .map(|s| basis.to_grid(s.u.as_ref().expect("fiber solution")))
        .collect::<Result<Vec<_>>>()?;
    let scale = grids.iter().map(|g| g.max_abs()).fold(1.0, f64::max);
    Ok(Some(grids.windows(2).all(|w| {
        let (a, b) = (w[0].values(), w[1].values());
        a.iter().zip(b.iter()).all(|(x, y)| *x <= *y + 1e-6 * scale)
    })))
}

fn solution_artifacts(ps: &ProblemSpec, set: &PreimageSet, svg_on: bool, files: &mut Vec<(String, String)>) -> Result<()> {
    let Some(basis) = ps.basis() else {
        return Ok(());
    };
    let mut grids = Vec::new();
    for (k, s) in set.solutions.iter().enumerate() {
        let g = basis.to_grid(s.u.as_ref().expect("fiber solution"))?;
        files.push((format!("solution_{}.csv", k + 1), basis.grid_csv(&g)));
        let (nx, ny) = g.shape();
        grids.push((0..nx).map(|i| (0..ny).map(|j| g.values()[(i, j)]).collect::<Vec<f64>>()).collect::<Vec<_>>());
    }
    if svg_on && !grids.is_empty() {
        if basis.dim() == 2 {
            files.push(("solutions.svg".into(), svg::heatmaps("preimages on the grid", &grids)));
        } else {
            let xs: Vec<f64> = (0..grids[0].len()).map(|i| basis.node(i, 0)[0]).collect();
            let ys: Vec<Vec<f64>> = grids.iter().map(|g| g.iter().map(|r| r[0]).collect()).collect();
            let colors = ["#1f4e9c", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"];
            let series: Vec<Series> = ys
                .iter()
                .enumerate()
                .map(|(k, y)| Series { xs: &xs, ys: y, color: colors[k % colors.len()] })
                .collect();
            files.push(("solutions.svg".into(), svg::line_plot("preimages", "x", "u", &series, None, &[])));
        }
    }
    Ok(())
}

pub fn preimages(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let (lo, hi, steps) = window(cfg);
    let analysis = &cfg.analysis;
    if let Some(toy) = toy_of(inst) {
        let s = cfg.preimages.height.unwrap_or(0.0);
        let z = toy.z_along(0.0);
        let samples = toy.sample(&z, &uniform_grid(lo, hi, steps))?;
        let cps = critical_points(toy, &z, &samples, analysis)?;
        let set = preimages_on_model(toy, &z, s, &samples, &cps, analysis)?;
        return Ok(Outcome {
            lines: vec![format!("height {s}: {} preimages at t = {:?}", set.len(), set.solutions.iter().map(|p| p.t).collect::<Vec<_>>())],
            report: to_value!(&set),
            files: vec![],
            ok: true,
        });
    }
    let ps = inst.problem()?;
    let z0 = z0_of(cfg, ps)?;
    let s = match cfg.preimages.height {
        Some(s) => s,
        None => ps.rhs().map(|g| g[ps.p()]).unwrap_or(0.0),
    };
    let mut g = z0.clone();
    g[ps.p()] = s;
    let model = FiberModel::new(ps, cfg.solve_options());
    let samples = model.sample(&z0, &uniform_grid(lo, hi, steps))?;
    let cps = critical_points(&model, &z0, &samples, analysis)?;
    let set = preimages_on_model(&model, &z0, s, &samples, &cps, analysis)?;
    let ordered = pointwise_ordered(ps, &set)?;
    let sorted = set.solutions.windows(2).all(|w| w[0].t < w[1].t);
    let residual_ok = set.max_residual() <= 1e-8;
    let mut lines = vec![format!("height s = {s}: {} preimages on t in [{lo}, {hi}]", set.len())];
    for (k, p) in set.solutions.iter().enumerate() {
        lines.push(format!("  u{} at t = {:.6}, residual {:.2e}{}", k + 1, p.t, p.residual, if p.touch { " (tangency)" } else { "" }));
    }
    if let Some(o) = ordered {
        lines.push(format!("pointwise ordered: {}", if o { "yes" } else { "no" }));
    }
    lines.extend(set.warnings.iter().cloned());
    let mut csv = String::from("index,t,residual,touch\r\n");
    for (k, p) in set.solutions.iter().enumerate() {
        csv.push_str(&format!("{},{:.17e},{:.17e},{}\r\n", k + 1, p.t, p.residual, p.touch));
    }
    let mut files = vec![("preimages.csv".into(), csv), ("trace.csv".into(), evals_csv(&samples))];
    if cfg.output.svg {
        let markers = set.solutions.iter().map(|p| Marker { x: p.t, y: s, color: "#c0392b" }).collect();
        files.push(("height.svg".into(), height_svg(&format!("height along the fiber, s = {s}"), &samples, Some(s), markers)));
    }
    solution_artifacts(ps, &set, cfg.output.svg, &mut files)?;
    Ok(Outcome {
        report: json!({
            "height": s,
            "count": set.len(),
            "pointwise_ordered": ordered,
            "sorted_by_t": sorted,
            "critical_values": cps.iter().map(|c| c.height).collect::<Vec<_>>(),
            "set": to_value!(&set),
        }),
        files,
        lines,
        ok: sorted && residual_ok,
    })
}

pub fn classify(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let (lo, hi, steps) = window(cfg);
    let analysis = &cfg.analysis;
    if let Some(toy) = toy_of(inst) {
        let rep = normal_form_toy(toy.kind, toy.dim, analysis)?;
        let o = &rep.origin;
        let lines = vec![
            format!(
                "origin: t* = {:.3e}, Morin order {:?} ({:?}), transversal: {}",
                o.t_star, o.morin_order, o.kind_tag, o.transversality_ok
            ),
            format!("critical points per fiber at <z, phi~> = {:?}: {:?}", rep.sweep, rep.counts),
        ];
        return Ok(Outcome {
            ok: rep.order_ok,
            report: to_value!(&rep),
            files: vec![],
            lines,
        });
    }
    let ps = inst.problem()?;
    let z0 = z0_of(cfg, ps)?;
    let model = FiberModel::new(ps, cfg.solve_options());
    let samples = model.sample(&z0, &uniform_grid(lo, hi, steps))?;
    let cps = classified_critical_points(&model, &z0, &samples, analysis)?;
    let radius = cfg.link.radius.unwrap_or(0.1 * (hi - lo));
    let link = verify_spectral_link(&model, &z0, &samples, &cps, radius, cfg.link.gap_tol)?;
    let mut lines = vec![format!("{} critical points on t in [{lo}, {hi}]", cps.len())];
    let mut csv = String::from("t_star,height,morin_order,kind,extremum,lambda_min,tracked_eigenvalue,d1,d2,d3,d4,transversal\r\n");
    for c in &cps {
        lines.push(format!(
            "  t* = {:.6}, h = {:.6}, order {:?} {:?} {:?}, tracked eigenvalue {:.2e}",
            c.t_star,
            c.height,
            c.morin_order,
            c.kind_tag,
            c.extremum,
            c.tracked_eigenvalue.unwrap_or(f64::NAN)
        ));
        let d = c.derivative_table;
        csv.push_str(&format!(
            "{:.17e},{:.17e},{},{:?},{:?},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}\r\n",
            c.t_star,
            c.height,
            c.morin_order.map_or("unclassified".to_string(), |k| k.to_string()),
            c.kind_tag,
            c.extremum,
            c.lambda_min.unwrap_or(f64::NAN),
            c.tracked_eigenvalue.unwrap_or(f64::NAN),
            d[0],
            d[1],
            d[2],
            d[3],
            c.transversality_ok
        ));
    }
    lines.push(format!(
        "spectral link: {} samples checked within radius {radius}, {} disagreements, tracked eigenvalue changes sign {} times",
        link.checked,
        link.disagreements.len(),
        link.tracked_sign_changes
    ));
    let ok = link.ok() && cps.iter().all(|c| c.morin_order.is_some());
    let mut files = vec![("critical_points.csv".into(), csv), ("link.csv".into(), link_csv(&link))];
    if cfg.output.svg {
        let markers = cps.iter().map(|c| Marker { x: c.t_star, y: c.height, color: "#c0392b" }).collect();
        files.push(("height.svg".into(), height_svg("critical points of the height", &samples, None, markers)));
    }
    Ok(Outcome {
        report: json!({ "critical_points": to_value!(&cps), "spectral_link": to_value!(&link) }),
        files,
        lines,
        ok,
    })
}

pub fn sweep(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let (lo, hi, steps) = window(cfg);
    let analysis = &cfg.analysis;
    let (samples, cps) = match inst {
        Instance::Toy(toy) => {
            let z = toy.z_along(0.0);
            let samples = toy.sample(&z, &uniform_grid(lo, hi, steps))?;
            let cps = critical_points(toy, &z, &samples, analysis)?;
            (samples, cps)
        }
        Instance::Problem(ps) => {
            let z0 = z0_of(cfg, ps)?;
            let model = FiberModel::new(ps, cfg.solve_options());
            let samples = model.sample(&z0, &uniform_grid(lo, hi, steps))?;
            let cps = critical_points(&model, &z0, &samples, analysis)?;
            (samples, cps)
        }
    };
    let (hmin, hmax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e.height), b.max(e.height)));
    let s_min = cfg.sweep.s_min.unwrap_or(hmin + 0.01 * (hmax - hmin));
    // past the largest critical value the count is constant; beyond the
    // traced window it is unknown, so stop at the window's top height
    let top = cps.iter().map(|c| c.height).fold(f64::NEG_INFINITY, f64::max);
    let s_max = cfg.sweep.s_max.unwrap_or(if top.is_finite() { (top + 0.1 * (hmax - hmin)).min(hmax) } else { hmax });
    let s_values = uniform_grid(s_min, s_max, cfg.sweep.count);
    let scale = samples.iter().map(|e| e.height.abs()).fold(1.0, f64::max);
    let rep = count_from_pieces(&samples, &cps, &s_values, 1e-9 * scale);
    let mut hist = std::collections::BTreeMap::new();
    for c in &rep.counts {
        *hist.entry(*c).or_insert(0usize) += 1;
    }
    let mut csv = String::from("s,count\r\n");
    for (s, c) in rep.s_values.iter().zip(&rep.counts) {
        csv.push_str(&format!("{s:.17e},{c}\r\n"));
    }
    let lines = vec![
        format!("{} heights on [{s_min:.6}, {s_max:.6}], max height s* = {:.6}", s_values.len(), rep.s_star),
        format!("preimage counts (count: occurrences): {hist:?}"),
        format!("critical values: {:?}", rep.critical_values),
    ];
    let mut files = vec![("sweep.csv".into(), csv)];
    if cfg.output.svg {
        let counts: Vec<f64> = rep.counts.iter().map(|c| *c as f64).collect();
        files.push((
            "sweep.svg".into(),
            svg::line_plot("preimage count", "s", "count", &[Series { xs: &rep.s_values, ys: &counts, color: "#1f4e9c" }], None, &[]),
        ));
    }
    Ok(Outcome {
        ok: rep.monotone_pieces,
        report: to_value!(&rep),
        files,
        lines,
    })
}

pub fn asymptotics(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let ps = inst.problem()?;
    let solve = cfg.solve_options();
    if let ProblemConfig::Fucik { a, mode, length, .. } = &cfg.problem {
        let b0 = locate_fucik_pair(*a, *mode, *length)?;
        let rep = fucik_check(ps, *a, b0, cfg.fiber.t_max, cfg.asymptotics.steps, &solve)?;
        let contrast_cfg = RunConfig::preset("ap-convex-1d")?.resolve()?;
        let contrast_ps = contrast_cfg.problem.build(&solve)?;
        let contrast = half_fiber_divergence(contrast_ps.problem()?, &Field::zeros(contrast_ps.problem()?.dim()), cfg.fiber.t_max, &solve)?;
        let lines = vec![
            format!("Fucik pair (a, b) = ({a}, {:.12}) [shooting {:.12}]", rep.b_discrete, rep.b_shooting),
            format!(
                "half-fiber t in [0, {}]: max |h| = {:.3e}, max |F(u)| = {:.3e}, collapses: {}",
                rep.t_max, rep.max_abs_height, rep.max_f_norm, rep.collapse_ok
            ),
            format!("growth condition at +inf holds: {}", rep.v_plus_ok),
            format!("convex contrast heights {:?}: diverges to -inf: {}", contrast.heights, contrast.diverges),
        ];
        return Ok(Outcome {
            report: json!({ "fucik": to_value!(&rep), "contrast": to_value!(&contrast) }),
            files: vec![],
            lines,
            ok: true,
        });
    }
    let z0 = z0_of(cfg, ps)?;
    let rep = asymptotic_report(ps, &z0, cfg.asymptotics.steps, &solve)?;
    let dirs = asymptotic_directions(ps, &solve)?;
    let big = cfg.asymptotics.large_t;
    let defects = (direction_defect(ps, &z0, big, &dirs, &solve)?, direction_defect(ps, &z0, -big, &dirs, &solve)?);
    let mut verticality = Vec::new();
    for t in [big, -big] {
        let p = fiberfold::fiber::fiber_point(ps, &z0, t, &solve)?;
        verticality.push(ps.norm_x(&p.w) / t.abs());
    }
    let v = &rep.v;
    let mut lines = vec![
        format!(
            "growth conditions (eps = {:.4}, T = {:.2}): +inf {} (eps+ = {:.4}), -inf {} (eps- = {:.4})",
            v.epsilon, v.t_threshold, v.v_plus_ok, v.epsilon_plus, v.v_minus_ok, v.epsilon_minus
        ),
        format!(
            "asymptotic directions: |w+| = {:.3e}, |w-| = {:.3e} (residuals {:.1e}, {:.1e})",
            rep.w_plus.norm_y(),
            rep.w_minus.norm_y(),
            rep.direction_residuals.0,
            rep.direction_residuals.1
        ),
        format!("|w(z,t)|/|t| at t = +-{big}: {:.3e}, {:.3e}", verticality[0], verticality[1]),
        format!("|w(z,t)/t - w+-| at t = +-{big}: {:.3e}, {:.3e}", defects.0, defects.1),
    ];
    if let Some(s) = &rep.slope_limit {
        lines.push(format!(
            "slope comparison: kappa = {:.4}, hypotheses {}, lim h/t = {:.6}, conclusion {}",
            s.kappa, s.hypotheses_ok, s.limit, s.conclusion_holds
        ));
    }
    let (lo, hi) = (-4.0 * v.t_threshold, 4.0 * v.t_threshold);
    let trace = trace_fiber(ps, &z0, lo, hi, cfg.asymptotics.steps, &solve)?;
    let samples: Vec<HeightEval> = trace
        .points
        .iter()
        .map(|p| HeightEval { t: p.t, height: p.height, slope: p.slope, u: None })
        .collect();
    let ok = rep.direction_residuals.0 <= 1e-8 && rep.direction_residuals.1 <= 1e-8;
    Ok(Outcome {
        report: json!({
            "report": to_value!(&rep),
            "verticality": verticality,
            "direction_defects": [defects.0, defects.1],
        }),
        files: vec![("ratio.csv".into(), ratio_csv(&samples))],
        lines,
        ok,
    })
}

pub fn oracle(cfg: &Resolved, inst: &Instance) -> Result<Outcome> {
    let ps = inst.problem()?;
    let (lo, hi, steps) = window(cfg);
    let z0 = z0_of(cfg, ps)?;
    let s = match cfg.preimages.height {
        Some(s) => s,
        None => ps.rhs().map(|g| g[ps.p()]).unwrap_or(0.0),
    };
    let mut g = z0.clone();
    g[ps.p()] = s;
    let fiber_set = find_preimages(ps, &g, (lo, hi, steps), &cfg.solve_options(), &cfg.analysis)?;
    let opts = NewtonOptions {
        tol: cfg.oracle.tol,
        t_window: (lo, hi),
        ..Default::default()
    };
    let newton = newton_multistart(ps, &g, cfg.oracle.starts, cfg.oracle.seed, &opts)?;
    let cmp = compare_sets(&fiber_set, &newton.set, cfg.oracle.match_tol);
    let lines = vec![
        format!("height s = {s}: fiber method {} preimages, Newton {} ({} of {} starts converged)", fiber_set.len(), newton.set.len(), newton.converged, newton.starts),
        format!("max Y-distance between matched solutions {:.3e}", cmp.max_distance),
        cmp.summary(),
    ];
    Ok(Outcome {
        ok: cmp.equal,
        report: json!({
            "height": s,
            "comparison": to_value!(&cmp),
            "fiber": to_value!(&fiber_set),
            "newton": to_value!(&newton),
        }),
        files: vec![],
        lines,
    })
}
