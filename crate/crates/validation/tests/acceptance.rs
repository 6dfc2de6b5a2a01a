//! Acceptance runs: theory fixtures, theory against simulation, and
//! property sweeps. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcov::bulk::{edge, integrate_density, t_of, DEFAULT_EPSILON};
use xcov::linalg::{squared_singular_values, SvdOptions};
use xcov::outliers::{b_of, critical_lambda_symmetric, detection_margin, phase_boundary, predict_outliers, BoundaryValue};
use xcov::overlaps::{beta_optimal, coupling_matrix, j_derivative, j_derivative_fd, j_func, overlap_m};
use xcov::pls::{normalized_overlap, pls_mode_a_with, pls_svd_with};
use xcov::polys::{r_pair, tau_plus};
use xcov::sim::{cross_cov, empirical_overlaps, run_trials, sample_instance, top_triplets, Histogram, ModelConfig};
use xcov::{AspectRatios, Branch, Result, Spike};

struct Outcome {
    pass: bool,
    detail: String,
}

fn opts() -> SvdOptions {
    SvdOptions { tol: 1e-8, ..SvdOptions::default() }
}

fn ratios(ax: f64, ay: f64) -> AspectRatios {
    AspectRatios::new(ax, ay).unwrap()
}

fn spike(lx: f64, ly: f64, rho: f64) -> Spike {
    Spike::new(lx, ly, rho).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn root_fixtures() -> Result<Outcome> {
    let tau = tau_plus(&ratios(1.0, 1.0))?;
    let (lo, hi) = r_pair(&spike(4.0, 1.0, 0.0))?;
    let crit = critical_lambda_symmetric(&ratios(1.0, 1.0), 0.0)?;
    let pass = (tau - 0.5).abs() <= 1e-12 && (lo - 0.25).abs() <= 1e-10 && (hi - 1.0).abs() <= 1e-10 && (crit - 2.0).abs() <= 1e-8;
    Ok(Outcome { pass, detail: format!("tau+ {tau:.15}, r_pair ({lo:.12}, {hi:.12}), critical {crit:.10}") })
}

fn edge_convergence() -> Result<Outcome> {
    let target = edge(&ratios(1.0, 1.0))?;
    let config = ModelConfig::new(ratios(1.0, 1.0), vec![], 4000, 20_001)?;
    let tops = run_trials(&config, 10, |_, inst| Ok(top_triplets(inst, 1, &opts())?.values[0]))?;
    let m = mean(&tops);
    let rel = (m / target - 1.0).abs();
    Ok(Outcome { pass: rel < 0.02, detail: format!("mean top {m:.5} vs edge {target:.6} (rel {rel:.2e})") })
}

fn bulk_density() -> Result<Outcome> {
    let a = ratios(1.0, 1.0);
    let config = ModelConfig::new(a, vec![], 2000, 20_002)?;
    let inst = sample_instance(&config)?;
    let values = squared_singular_values(&cross_cov(&inst));
    let hi = edge(&config.realized_ratios())?.powi(2);
    let bins = 40;
    let hist = Histogram::new(&values, 0.0, hi, bins)?;
    let empirical = hist.densities(values.len());
    let mut worst = (0.0_f64, 0);
    for (i, e) in hist.edges.windows(2).enumerate() {
        let theory = integrate_density(&config.realized_ratios(), e[0], e[1], DEFAULT_EPSILON)? / (e[1] - e[0]);
        let gap = (empirical[i] - theory).abs();
        if gap > worst.0 {
            worst = (gap, i);
        }
    }
    Ok(Outcome { pass: worst.0 < 0.05, detail: format!("sup |hist - density| = {:.4} at bin {}", worst.0, worst.1) })
}

fn bbp_sweep() -> Result<Outcome> {
    let (a, rho) = (ratios(1.0, 1.0), 0.5);
    let lambdas = [0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 24.0];
    let mut worst = 0.0_f64;
    let mut lines = Vec::new();
    for (k, &l) in lambdas.iter().enumerate() {
        let s = spike(l, l, rho);
        let config = ModelConfig::new(a, vec![s], 2000, 20_100 + k as u64)?;
        let preds = predict_outliers(&config.realized_ratios(), &[s])?;
        let tops = run_trials(&config, 10, |_, inst| Ok(top_triplets(inst, 2, &opts())?.values))?;
        for (i, p) in preds.iter().enumerate() {
            let emp = mean(&tops.iter().map(|t| t[i]).collect::<Vec<_>>());
            let rel = (emp / p.position - 1.0).abs();
            worst = worst.max(rel);
            lines.push(format!("l={l} sv{}: {emp:.4}/{:.4}", i + 1, p.position));
        }
    }
    println!("    {}", lines.join(", "));
    Ok(Outcome { pass: worst < 0.03, detail: format!("worst relative gap {worst:.4} over {} points", lambdas.len()) })
}

const OVERLAP_POINTS: [((f64, f64), (f64, f64, f64)); 5] = [
    ((1.0, 1.0), (6.0, 6.0, 0.6)),
    ((2.0, 0.5), (5.0, 3.0, 0.6)),
    ((1.5, 1.0), (4.0, 8.0, 0.3)),
    ((0.8, 0.8), (3.0, 5.0, 0.8)),
    ((1.0, 1.0), (10.0, 10.0, 0.3)),
];

fn overlap_theory() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut compared = 0;
    for (k, &((ax, ay), (lx, ly, rho))) in OVERLAP_POINTS.iter().enumerate() {
        let s = spike(lx, ly, rho);
        let config = ModelConfig::new(ratios(ax, ay), vec![s], 4000, 20_200 + k as u64)?;
        let theory = config.realized_ratios();
        if detection_margin(&theory, &s)? <= 0.0 {
            return Ok(Outcome { pass: false, detail: format!("point {k} is not detectable") });
        }
        let tables = run_trials(&config, 10, |_, inst| Ok(empirical_overlaps(inst, &top_triplets(inst, 2, &opts())?)))?;
        for (idx, branch) in [Branch::Minus, Branch::Plus].into_iter().enumerate() {
            let m = overlap_m(&theory, &s, branch)?;
            let plus_detectable = predict_outliers(&theory, &[s])?.iter().any(|p| p.branch == Branch::Plus && p.detectable);
            if branch == Branch::Plus && !plus_detectable {
                continue;
            }
            let ex = mean(&tables.iter().map(|t| t.x[0][idx]).collect::<Vec<_>>());
            let ey = mean(&tables.iter().map(|t| t.y[0][idx]).collect::<Vec<_>>());
            println!(
                "    point {k} {}: x {ex:.4}/{:.4}, y {ey:.4}/{:.4}",
                branch.label(),
                m.m_x,
                m.m_y
            );
            worst = worst.max((ex - m.m_x).abs()).max((ey - m.m_y).abs());
            compared += 1;
        }
    }
    Ok(Outcome { pass: worst <= 0.05, detail: format!("worst |empirical - theory| {worst:.4} over {compared} branches") })
}

const NULL_POINTS: [((f64, f64), (f64, f64, f64)); 5] = [
    ((1.0, 1.0), (1.0, 1.0, 0.3)),
    ((1.0, 1.0), (0.5, 0.5, 0.9)),
    ((2.0, 0.5), (1.0, 0.5, 0.5)),
    ((1.5, 1.0), (0.3, 1.2, 0.0)),
    ((0.8, 0.8), (0.8, 0.8, 0.5)),
];

fn null_regime() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    for (k, &((ax, ay), (lx, ly, rho))) in NULL_POINTS.iter().enumerate() {
        let s = spike(lx, ly, rho);
        let config = ModelConfig::new(ratios(ax, ay), vec![s], 4000, 20_300 + k as u64)?;
        let margin = detection_margin(&config.realized_ratios(), &s)?;
        if margin >= 0.0 {
            return Ok(Outcome { pass: false, detail: format!("point {k} is detectable (margin {margin})") });
        }
        let tables = run_trials(&config, 5, |_, inst| Ok(empirical_overlaps(inst, &top_triplets(inst, 1, &opts())?)))?;
        let local = tables.iter().map(|t| t.x[0][0].max(t.y[0][0])).fold(0.0, f64::max);
        println!("    point {k}: margin {margin:.4}, largest top-vector overlap {local:.4}");
        worst = worst.max(local);
    }
    Ok(Outcome { pass: worst < 0.1, detail: format!("largest top-vector overlap {worst:.4}") })
}

const RECOVERY_LEVEL: f64 = 0.1;

fn pls_threshold() -> Result<Outcome> {
    let (a, rho, step) = (ratios(1.0, 1.0), 0.9, 0.05);
    let crit = critical_lambda_symmetric(&a, rho)?;
    let start = ((crit - 0.3) / step).floor() * step;
    let grid: Vec<f64> = (0..18).map(|i| start + step * i as f64).collect();
    let mut theory_onset = None;
    let mut onset = [None, None];
    for (k, &l) in grid.iter().enumerate() {
        let s = spike(l, l, rho);
        let config = ModelConfig::new(a, vec![s], 4000, 20_400 + k as u64)?;
        if theory_onset.is_none() && detection_margin(&config.realized_ratios(), &s)? >= 0.0 {
            theory_onset = Some(l);
        }
        let rows = run_trials(&config, 3, |_, inst| {
            let mode_a = pls_mode_a_with(&inst.x_tilde, &inst.y_tilde, 1, &opts())?;
            let svd = pls_svd_with(&inst.x_tilde, &inst.y_tilde, 1, &opts())?;
            Ok([mode_a, svd].map(|e| normalized_overlap(&e.steps[0].v_hat_x, &inst.v_x[0])))
        })?;
        let means = [0, 1].map(|v| mean(&rows.iter().map(|r| r[v]).collect::<Vec<_>>()));
        println!("    lambda {l:.2}: mode-A {:.4}, PLS-SVD {:.4}", means[0], means[1]);
        for v in 0..2 {
            if onset[v].is_none() && means[v] >= RECOVERY_LEVEL {
                onset[v] = Some(l);
            }
        }
    }
    let Some(theory) = theory_onset else {
        return Ok(Outcome { pass: false, detail: "margin never changes sign on the grid".into() });
    };
    let within = |o: Option<f64>| o.is_some_and(|o| (o - theory).abs() <= step + 1e-9);
    let asymptotic = overlap_m(&a, &spike(theory, theory, rho), Branch::Minus)?.m_x;
    Ok(Outcome {
        pass: within(onset[0]) && within(onset[1]),
        detail: format!(
            "critical {crit:.4}, first detectable grid point {theory:.2} (limiting overlap there {asymptotic:.4}), \
             onset at overlap >= {RECOVERY_LEVEL}: mode-A {:?}, PLS-SVD {:?}",
            onset[0], onset[1]
        ),
    })
}

const ROTATION_POINTS: [((f64, f64), (f64, f64, f64)); 3] =
    [((1.0, 1.0), (10.0, 10.0, 0.3)), ((1.0, 1.0), (20.0, 20.0, 0.5)), ((2.0, 0.5), (12.0, 10.0, 0.2))];

fn aligned(v: DVector<f64>, planted: &DVector<f64>) -> DVector<f64> {
    if v.dot(planted) < 0.0 {
        -v
    } else {
        v
    }
}

fn rotated_overlap(minus: DVector<f64>, plus: DVector<f64>, planted: &DVector<f64>, beta: f64) -> f64 {
    let w = aligned(minus, planted) * beta + aligned(plus, planted) * (1.0 - beta * beta).sqrt();
    normalized_overlap(&w, planted)
}

fn rotation_dominance() -> Result<Outcome> {
    let mut pass = true;
    for (k, &((ax, ay), (lx, ly, rho))) in ROTATION_POINTS.iter().enumerate() {
        let s = spike(lx, ly, rho);
        let config = ModelConfig::new(ratios(ax, ay), vec![s], 4000, 20_500 + k as u64)?;
        let theory = config.realized_ratios();
        if !predict_outliers(&theory, &[s])?.iter().all(|p| p.detectable) {
            return Ok(Outcome { pass: false, detail: format!("point {k} is not doubly detectable") });
        }
        let minus = overlap_m(&theory, &s, Branch::Minus)?;
        let plus = overlap_m(&theory, &s, Branch::Plus)?;
        let plan_x = beta_optimal(minus.m_x, plus.m_x)?;
        let plan_y = beta_optimal(minus.m_y, plus.m_y)?;
        let rows = run_trials(&config, 5, |_, inst| {
            let t = top_triplets(inst, 2, &opts())?;
            let (vx, vy) = (&inst.v_x[0], &inst.v_y[0]);
            let col = |m: &nalgebra::DMatrix<f64>, i: usize| m.column(i).into_owned();
            Ok([
                normalized_overlap(&col(&t.left, 0), vx),
                normalized_overlap(&col(&t.left, 1), vx),
                rotated_overlap(col(&t.left, 0), col(&t.left, 1), vx, plan_x.beta_opt),
                normalized_overlap(&col(&t.right, 0), vy),
                normalized_overlap(&col(&t.right, 1), vy),
                rotated_overlap(col(&t.right, 0), col(&t.right, 1), vy, plan_y.beta_opt),
            ])
        })?;
        let m: Vec<f64> = (0..6).map(|c| mean(&rows.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
        let empirical_ok = m[2] >= m[0].max(m[1]) - 0.02 && m[5] >= m[3].max(m[4]) - 0.02;
        let analytic_ok = plan_x.q_opt > minus.m_x.max(plus.m_x) && plan_y.q_opt > minus.m_y.max(plus.m_y);
        println!(
            "    point {k}: x branches {:.4}/{:.4} rotated {:.4} (q_opt {:.4}); y branches {:.4}/{:.4} rotated {:.4} (q_opt {:.4})",
            m[0], m[1], m[2], plan_x.q_opt, m[3], m[4], m[5], plan_y.q_opt
        );
        pass &= empirical_ok && analytic_ok;
    }
    Ok(Outcome { pass, detail: format!("{} doubly detectable points", ROTATION_POINTS.len()) })
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_ratios(rng: &mut ChaCha8Rng) -> AspectRatios {
    ratios(log_uniform(rng, 0.05, 20.0), log_uniform(rng, 0.05, 20.0))
}

fn random_spike(rng: &mut ChaCha8Rng) -> Spike {
    spike(log_uniform(rng, 0.01, 100.0), log_uniform(rng, 0.01, 100.0), rng.random_range(-0.98..0.98))
}

fn property_suites() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_600);
    let mut failures = Vec::new();

    for _ in 0..1000 {
        let (lx, ly) = (log_uniform(&mut rng, 0.01, 100.0), log_uniform(&mut rng, 0.01, 100.0));
        let (r1, r2): (f64, f64) = (rng.random_range(0.0..0.98), rng.random_range(0.0..0.98));
        let (weak_sq, strong_sq) = (r1.min(r2), r1.max(r2));
        let weak = r_pair(&spike(lx, ly, weak_sq.sqrt()))?;
        let strong = r_pair(&spike(lx, ly, strong_sq.sqrt()))?;
        if strong.0 > weak.0 * (1.0 + 1e-12) || strong.1 < weak.1 * (1.0 - 1e-12) {
            failures.push(format!("monotonicity at ({lx}, {ly}, {weak_sq}, {strong_sq})"));
        }
    }

    for _ in 0..300 {
        let (a, s) = (random_ratios(&mut rng), random_spike(&mut rng));
        let z = edge(&a)? * (1.0 + log_uniform(&mut rng, 1e-3, 5.0));
        let det = coupling_matrix(&a, &s, z)?.determinant();
        let j = j_func(&a, &s, z)?;
        let terms = 1.0 / (s.lambda_x * s.lambda_y) + 1.0;
        if (det - j).abs() > 1e-8 * j.abs().max(1e-8 * terms) {
            failures.push(format!("determinant {det} vs j {j} at {s:?}"));
        }

        let z = edge(&a)? * (1.0 + log_uniform(&mut rng, 1e-2, 5.0));
        let fd = j_derivative_fd(&a, &s, z)?;
        if fd.abs() > 1e-6 {
            match j_derivative(&a, &s, z) {
                Ok(an) if (an - fd).abs() <= 1e-5 * an.abs().max(fd.abs()) => {}
                other => failures.push(format!("derivative {other:?} vs {fd} at {s:?}")),
            }
        }

        let tau = tau_plus(&a)?;
        let mut prev = f64::INFINITY;
        for i in 1..=500 {
            let b = b_of(&a, 4.0 * tau * i as f64 / 500.0)?;
            if b > prev * (1.0 + 1e-13) {
                failures.push(format!("b increases at {a:?}"));
                break;
            }
            prev = b;
        }
        let gap = (b_of(&a, tau * (1.0 - 1e-10))? - b_of(&a, tau)?).abs();
        if gap >= 1e-8 || b_of(&a, tau)? != edge(&a)? {
            failures.push(format!("b discontinuous at tau+ for {a:?}"));
        }
        let (z1, z2) = (edge(&a)?.powi(2) * 1.5, edge(&a)?.powi(2) * 3.0);
        if t_of(&a, z1)? <= t_of(&a, z2)? {
            failures.push(format!("transform not decreasing at {a:?}"));
        }
    }
    let detail = if failures.is_empty() {
        "1000 monotonicity draws, 300 draws each for determinant, derivative and b".to_string()
    } else {
        format!("{} failures, first: {}", failures.len(), failures[0])
    };
    Ok(Outcome { pass: failures.is_empty(), detail })
}

fn phase_shape() -> Result<Outcome> {
    let a = ratios(1.0, 1.0);
    let grid: Vec<f64> = (0..40).map(|i| 0.05 + 0.1 * i as f64).collect();
    let l_corner = 1.0 / tau_plus(&a)?;
    let base = phase_boundary(&a, 0.0, &grid)?;
    let mut l_gap = 0.0_f64;
    let mut l_ok = true;
    for p in &base {
        match p.critical_lambda_y {
            BoundaryValue::Finite(v) if p.lambda_x < l_corner => l_gap = l_gap.max((v - l_corner).abs()),
            BoundaryValue::AnyPositive if p.lambda_x >= l_corner => {}
            _ => l_ok = false,
        }
    }
    let mut monotone = true;
    let mut prev = base.iter().map(|p| p.critical_lambda_y.as_f64()).collect::<Vec<_>>();
    for rho_sq in [0.25_f64, 0.5, 0.81] {
        let next: Vec<f64> = phase_boundary(&a, rho_sq.sqrt(), &grid)?.iter().map(|p| p.critical_lambda_y.as_f64()).collect();
        monotone &= next.iter().zip(&prev).all(|(n, p)| *n <= p + 1e-8);
        prev = next;
    }
    Ok(Outcome {
        pass: l_ok && l_gap <= 1e-6 && monotone,
        detail: format!("L-curve gap {l_gap:.2e} (shape ok: {l_ok}), non-increasing in rho^2: {monotone}"),
    })
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("root fixtures", root_fixtures),
        ("edge convergence", edge_convergence),
        ("bulk density", bulk_density),
        ("BBP sweep", bbp_sweep),
        ("overlap theory", overlap_theory),
        ("null regime", null_regime),
        ("PLS threshold", pls_threshold),
        ("rotation dominance", rotation_dominance),
        ("property suites", property_suites),
        ("phase diagram shape", phase_shape),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        failed += usize::from(!outcome.pass);
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
