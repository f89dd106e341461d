//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::time::Instant;

use common::{delta_y, poly_eval, positive_roots, q, random_walk, rng, y_coefficients};
use qpwalk::compensation::{self, CompensationSeries};
use qpwalk::curve::{self, Arc};
use qpwalk::gamma::{self, GammaSet, WeightedTerm, COUPLING_TOL};
use qpwalk::oracle;
use qpwalk::poly::ExtReal;
use qpwalk::presets;
use qpwalk::walk::ValidatedWalk;
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn switch_series(w: &ValidatedWalk) -> Result<Vec<CompensationSeries>, String> {
    let seeds = compensation::find_seeds(w, curve::DEFAULT_TRACE_POINTS, true).map_err(|e| e.to_string())?;
    seeds
        .into_iter()
        .map(|s| compensation::build_series(w, s, 1e-12, compensation::DEFAULT_MAX_TERMS))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn switch_end_to_end() -> Outcome {
    let start = Instant::now();
    let w = presets::switch_fig7();
    let series = switch_series(&w)?;
    check(series.len() >= 2, || format!("{} series", series.len()))?;
    let a = compensation::assemble_measure(&w, &series, 12).map_err(|e| e.to_string())?;
    let pi = oracle::truncated_stationary(&w, 80).map_err(|e| e.to_string())?;
    let err = oracle::compare(&a.gamma, &pi, 8).map_err(|e| e.to_string())?;
    let interior = a.report.max_residual_interior;
    let secs = start.elapsed().as_secs_f64();
    check(err <= 1e-4, || format!("sup relative error {err:e}"))?;
    check(interior <= 1e-8, || format!("interior residual {interior:e}"))?;
    check(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} series, sup rel error {err:.2e}, interior residual {interior:.2e}, {secs:.2} s",
        series.len()
    ))
}

fn sign_condition() -> Outcome {
    let w = presets::switch_fig7();
    let series = switch_series(&w)?;
    let a = compensation::assemble_measure(&w, &series, 12).map_err(|e| e.to_string())?;
    let min_alpha = a.gamma.terms.iter().map(|t| t.alpha).fold(f64::INFINITY, f64::min);
    check(min_alpha < 0.0, || format!("min alpha {min_alpha}"))?;
    let mut onsets = Vec::new();
    for s in &series {
        for ratios in [s.t_ratios(&w), s.t_ratios_v(&w)] {
            check(!ratios.is_empty(), || "series without coupled pairs".into())?;
            let onset = ratios.iter().rposition(|r| !(*r > 0.0)).map_or(0, |k| k + 1);
            check(onset <= 10 && onset < ratios.len(), || {
                format!("ratios positive only from pair {onset} of {}", ratios.len())
            })?;
            onsets.push(onset);
        }
    }
    Ok(format!("min alpha {min_alpha:.3}, positive ratios from pair indices {onsets:?}"))
}

fn branch_values() -> Outcome {
    let r = curve::branch_points(&presets::fig2c()).map_err(|e| e.to_string())?;
    let s = 645f64.sqrt();
    let want_l = ((27.0 - s) / 42.0).sqrt();
    let want_r = ((27.0 + s) / 42.0).sqrt();
    let x_r = r.x_r().finite().ok_or("x_r infinite")?;
    check((r.x_l() - want_l).abs() <= 1e-10, || format!("x_l {} vs {want_l}", r.x_l()))?;
    check((x_r - want_r).abs() <= 1e-10, || format!("x_r {x_r} vs {want_r}"))?;

    let d = presets::fig2d();
    let want = [0.0, 0.0, 0.75, 0.0, -0.5];
    let got = curve::KernelPoly::of(d.spec()).delta_y();
    let hand = delta_y(d.spec());
    for k in 0..5 {
        check((got[k] - want[k]).abs() <= 1e-12 && (hand[k] - want[k]).abs() <= 1e-12, || {
            format!("coefficient {k}: {} (hand {}) vs {}", got[k], hand[k], want[k])
        })?;
    }
    Ok(format!("x_l = {:.12}, x_r = {x_r:.12}, fig2d discriminant exact", r.x_l()))
}

fn singularity_equivalence() -> Outcome {
    let mut g = rng(4);
    let (mut forced, mut free) = (0, 0);
    for n in 0..1000 {
        let no_ne = n % 2 == 0;
        let w = random_walk(&mut g, 0.3, no_ne);
        let found = curve::detect_singularity(&w).map_err(|e| format!("walk {n}: {e}"))?;
        match (no_ne, found) {
            (true, Some(s)) if s.x == 0.0 && s.y == 0.0 => forced += 1,
            (false, None) => free += 1,
            (_, other) => return Err(format!("walk {n} (forced {no_ne}): {other:?}")),
        }
        // Central differences are exact on a biquadratic.
        let h = 0.5;
        let gx = (q(&w, h, 0.0) - q(&w, -h, 0.0)) / (2.0 * h);
        let gy = (q(&w, 0.0, h) - q(&w, 0.0, -h)) / (2.0 * h);
        let numeric = q(&w, 0.0, 0.0).abs() <= 1e-12 && gx.abs() <= 1e-12 && gy.abs() <= 1e-12;
        check(numeric == no_ne, || format!("walk {n}: numeric derivative test says {numeric}"))?;
    }
    Ok(format!("{forced} crunodes at the origin, {free} smooth walks, derivative test agrees"))
}

/// Sign class of a finite or infinite branch point.
fn sign(r: ExtReal) -> i8 {
    match r {
        ExtReal::Infinite => 2,
        ExtReal::Finite(x) if x.abs() <= 1e-8 => 0,
        ExtReal::Finite(x) if x > 0.0 => 1,
        ExtReal::Finite(_) => -1,
    }
}

fn branch_location() -> Outcome {
    let mut g = rng(5);
    let mut tested = 0;
    let mut boundary_cases = 0;
    while tested < 1000 {
        let w = random_walk(&mut g, 0.3, false);
        if w.drift().my.abs() <= 1e-3 {
            continue;
        }
        tested += 1;
        let r = curve::branch_points(&w).map_err(|e| e.to_string())?;
        let roots = r.roots_x.roots;
        let disc = delta_y(&w);
        let scale = disc.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for root in roots.iter().filter_map(|r| r.finite()) {
            let res = poly_eval(&disc, root).abs() / (scale * (1.0 + root.abs()).powi(4));
            check(res <= 1e-8, || format!("walk {tested}: residual {res:e} at {root}"))?;
        }
        let inside = roots.iter().filter(|r| r.modulus() < 1.0).count();
        check(inside == 2, || format!("walk {tested}: {inside} roots inside, {roots:?}"))?;

        let case = |q: f64, a: f64, c: f64| {
            let rhs = 2.0 * (a * c).sqrt();
            if (q - rhs).abs() <= 1e-12 {
                0
            } else if q > rhs {
                1
            } else {
                -1
            }
        };
        let inner = case(w.p(1, 0), w.p(1, -1), w.p(1, 1));
        let outer = case(w.p(-1, 0), w.p(-1, -1), w.p(-1, 1));
        boundary_cases += usize::from(inner == 0) + usize::from(outer == 0);
        let mut pair_in = [sign(roots[0]), sign(roots[1])];
        let mut pair_out = [sign(roots[2]), sign(roots[3])];
        pair_in.sort_unstable();
        pair_out.sort_unstable();
        let inner_ok = match inner {
            1 => pair_in == [1, 1],
            0 => pair_in == [0, 0] || pair_in == [0, 1],
            _ => pair_in == [-1, 1],
        };
        let outer_ok = match outer {
            1 => pair_out == [1, 1],
            0 => pair_out == [1, 2] || pair_out == [2, 2],
            _ => pair_out == [-1, 1],
        };
        check(inner_ok && outer_ok, || {
            format!("walk {tested}: cases ({inner}, {outer}) but roots {roots:?}")
        })?;
        let violations = curve::branch_point_violations(&r.roots_x, r.drift.my, r.drift.mx);
        check(violations.is_empty(), || format!("walk {tested}: {violations:?}"))?;
    }
    Ok(format!("{tested} walks, {boundary_cases} boundary sub-cases, zero failures"))
}

fn trace_violations(w: &ValidatedWalk, label: &str) -> Result<(), String> {
    let t = curve::trace_qplus(w, 2048).map_err(|e| format!("{label}: {e}"))?;
    let mut saw_one = false;
    for p in &t.points {
        let mag: f64 = [p.x * p.x, p.x * p.y, p.y * p.y, 1.0, p.x, p.y]
            .iter()
            .fold(0.0, |m, v| m + v.abs())
            + (p.x * p.y).powi(2)
            + p.x * p.x * p.y
            + p.x * p.y * p.y;
        let res = q(w, p.x, p.y).abs() / mag;
        check(res <= 1e-10, || format!("{label}: |Q| = {res:e} at ({}, {})", p.x, p.y))?;
        let small = (p.x < 1e-10, p.y < 1e-10);
        check(small.0 == small.1, || format!("{label}: axis crossing at ({}, {})", p.x, p.y))?;
        saw_one |= (p.x - 1.0).abs() <= 1e-12 && (p.y - 1.0).abs() <= 1e-12;
    }
    check(saw_one && q(w, 1.0, 1.0).abs() <= 1e-14, || format!("{label}: (1,1) not on the trace"))?;

    for pair in t.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.arc != b.arc || a.x == b.x {
            continue;
        }
        let slope_sign = (b.y - a.y) * (b.x - a.x).signum();
        let ok = if a.arc.increasing() { slope_sign > -1e-9 } else { slope_sign < 1e-9 };
        check(ok, || format!("{label}: arc {:?} not monotone at x = {}", a.arc, a.x))?;
    }
    let arcs: Vec<Arc> = t.points.iter().map(|p| p.arc).collect();
    let changes = arcs.windows(2).filter(|a| a[0] != a[1]).count();
    check(changes <= 3, || format!("{label}: arc label changes {changes} times"))?;

    // Connectivity: no jumps along the loop, and the loop is the whole
    // positive zero set on every vertical line. A trace cut at the cap is
    // open where the branches are joined.
    let span = t.points.iter().fold(0.0f64, |m, p| m.max(p.x).max(p.y));
    let gap = t
        .points
        .windows(2)
        .filter(|p| t.closed || p[0].branch == p[1].branch)
        .map(|p| (p[0].x - p[1].x).hypot(p[0].y - p[1].y))
        .fold(0.0f64, f64::max);
    check(gap <= 0.05 * span.max(1.0), || format!("{label}: gap {gap} along the loop"))?;
    let x_l = t.corners.left.x.finite().ok_or("left corner at infinity")?;
    let x_max = t.points.iter().map(|p| p.x).fold(0.0, f64::max);
    let x_r = t.corners.right.x.finite().unwrap_or(f64::INFINITY);
    let cap = if x_r.is_finite() { 2.0 * x_r + 1.0 } else { x_max };
    for k in 1..400 {
        let x = cap * k as f64 / 400.0;
        let margin = 1e-6 * (1.0 + x);
        if (x - x_l).abs() < margin || (x - x_r).abs() < margin {
            continue;
        }
        let (a, b, c) = y_coefficients(w, x);
        let n = positive_roots(a, b, c).len();
        let want = if x > x_l && x < x_r { 2 } else { 0 };
        check(n == want, || format!("{label}: {n} positive points above x = {x}, expected {want}"))?;
    }
    Ok(())
}

fn geometry() -> Outcome {
    let mut walks: Vec<(String, ValidatedWalk)> = presets::fig2()
        .into_iter()
        .zip(["fig2a", "fig2b", "fig2c", "fig2d"])
        .map(|(w, n)| (n.to_string(), w))
        .collect();
    let mut g = rng(6);
    for k in 0..50 {
        walks.push((format!("random walk {k}"), random_walk(&mut g, 0.25, false)));
    }
    for (label, w) in &walks {
        trace_violations(w, label)?;
    }
    Ok(format!("{} traces, zero violations", walks.len()))
}

fn random_terms(g: &mut impl Rng) -> Vec<WeightedTerm> {
    loop {
        let n = g.gen_range(1..=8);
        let pool_size = g.gen_range(1..=5);
        let pool: Vec<f64> = (0..pool_size).map(|_| g.gen_range(0.05..0.95)).collect();
        let coord = |g: &mut dyn rand::RngCore| -> f64 {
            let base = if g.gen_bool(0.7) { pool[g.gen_range(0..pool.len())] } else { g.gen_range(0.05..0.95) };
            // Jitter well inside the coupling tolerance.
            base * (1.0 + g.gen_range(-1e-12..1e-12))
        };
        let terms: Vec<WeightedTerm> = (0..n)
            .map(|_| {
                let alpha = if g.gen_bool(0.5) { 1.0 } else { -1.0 } * g.gen_range(0.1..2.0);
                WeightedTerm::new(coord(g), coord(g), alpha)
            })
            .collect();
        if GammaSet::new(terms.clone()).is_ok() {
            return terms;
        }
    }
}

fn fig5_fixture() -> Result<Vec<WeightedTerm>, String> {
    let w = presets::switch_fig7();
    let series = switch_series(&w)?;
    let mut terms = Vec::new();
    for s in series.iter().take(2) {
        // Pairs (0,1) and (3,4) are linked by different axes.
        check(s.terms.len() >= 5 && s.links[0] != s.links[3], || "short series".into())?;
        terms.extend([s.terms[0], s.terms[1], s.terms[3], s.terms[4]]);
    }
    Ok(terms)
}

fn partitions() -> Outcome {
    let mut g = rng(7);
    let mut coupled = 0;
    for n in 0..500 {
        let terms = random_terms(&mut g);
        let set = GammaSet::new(terms.clone()).map_err(|e| e.to_string())?;
        let fast = gamma::maximal_partitions(&set);
        let brute = oracle::brute_force_partition(&terms, COUPLING_TOL).map_err(|e| e.to_string())?;
        check(fast == brute, || format!("set {n}: {fast:?} vs {brute:?}"))?;
        coupled += usize::from(fast.g_groups.len() < terms.len());
    }
    let mut fixture = fig5_fixture()?;
    fixture.shuffle(&mut g);
    let set = GammaSet::new(fixture).map_err(|e| e.to_string())?;
    let counts = gamma::maximal_partitions(&set).counts();
    check(counts == (6, 6, 4), || format!("fixture counts {counts:?}"))?;
    Ok(format!("500 sets agree ({coupled} with coupling), fixture counts {counts:?}"))
}

fn convexity() -> Outcome {
    let mut walks = presets::fig2().to_vec();
    let mut g = rng(8);
    walks.extend((0..20).map(|_| random_walk(&mut g, 0.25, false)));
    let mut pairs = 0;
    for (k, w) in walks.iter().enumerate() {
        let r = oracle::convexity_check(w, 10_000, 100 + k as u64).map_err(|e| e.to_string())?;
        check(r.pass() && r.pairs_tested == 10_000, || {
            format!("walk {k}: {} pairs, {} violations", r.pairs_tested, r.violations.len())
        })?;
        pairs += r.pairs_tested;
    }
    Ok(format!("{} walks, {pairs} midpoints, zero violations", walks.len()))
}

fn oracle_cross_validation() -> Outcome {
    let w = presets::switch_fig7();
    let mut diffs = Vec::new();
    for n in [40, 80] {
        let direct = oracle::direct_stationary(&w, n).map_err(|e| e.to_string())?;
        let power = oracle::power_stationary(&w, n, oracle::POWER_TOL, oracle::POWER_MAX_ITER)
            .map_err(|e| e.to_string())?;
        let d = direct
            .values
            .iter()
            .zip(&power.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        check(d <= 1e-10, || format!("n = {n}: direct vs power {d:e}"))?;
        diffs.push(d);
    }
    let a = oracle::truncated_stationary(&w, 80).map_err(|e| e.to_string())?;
    let b = oracle::truncated_stationary(&w, 100).map_err(|e| e.to_string())?;
    let mut stab: f64 = 0.0;
    for i in 0..=8 {
        for j in 0..=8 {
            stab = stab.max((a.get(i, j) - b.get(i, j)).abs());
        }
    }
    check(stab <= 1e-8, || format!("n = 80 vs 100: {stab:e}"))?;
    Ok(format!("direct vs power {:.1e} / {:.1e}, truncation {stab:.1e}", diffs[0], diffs[1]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("switch end to end", switch_end_to_end),
        ("sign condition", sign_condition),
        ("branch point values", branch_values),
        ("singularity equivalence", singularity_equivalence),
        ("branch point location", branch_location),
        ("trace geometry", geometry),
        ("partitions", partitions),
        ("convexity", convexity),
        ("oracle cross-validation", oracle_cross_validation),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
