//! End-to-end acceptance run. Criteria execute sequentially in one test so
//! the runtime budgets are measured without interference; each prints one
//! PASS/FAIL line on stderr (not captured by the test harness).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::Instant;
use subharnack::action::{minimize_action, oracle_action, ActionOptions, AnalyticPotential, ConstantPotential, Domain, Potential};
use subharnack::coefficients::{
    condition_residuals, family_cor1, family_cor2, family_cor3, family_sasakian, integrate_stable_r, CurvatureConstants,
};
use subharnack::field::{Coords, Field};
use subharnack::geometry::{Geometry, HPoint, HTangent};
use subharnack::grid::{GridScalarField, GridSpec};
use subharnack::harnack::{check_baga, check_bound, integrated_harnack_check, HarnackReport};
use subharnack::identities::verify_all;
use subharnack::solver::{
    integrate, make_smooth_density, steps_to, step, DiffusionState, ProblemSpec, SmoothDensity,
};
use subharnack::transport::{keylem_check, riccati_residual, test_family};

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    secs: f64,
    detail: String,
}

fn say(msg: &str) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}

// ---------------------------------------------------------------- 1

fn identity_suite() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut vacuous = Vec::new();
    for n in 1..=2 {
        for r in verify_all(n, 100, 7).expect("identity suite runs") {
            worst = worst.max(r.max_residual);
            count += 1;
            // every identity must have a nonzero side somewhere
            if r.max_lhs < 1e-3 {
                vacuous.push(format!("{}(n={n})", r.identity_id));
            }
            assert_eq!(r.samples, 100);
        }
    }
    (
        worst < 1e-8,
        format!("{count} identities x 100 trials, n in {{1,2}}, worst residual {worst:.2e}; trivially zero: {vacuous:?}"),
    )
}

// ---------------------------------------------------------------- 2

/// Structure-constant oracle on H¹: frame X, Y, R with [X, Y] = −R, the
/// Koszul formula for ⟨∇_a b, c⟩, and the Tanaka modification with J read
/// off ∇_a R = −½ J a.
struct Koszul {
    gamma: [[[f64; 3]; 3]; 3],
    bracket: [[[f64; 3]; 3]; 3],
}

impl Koszul {
    fn heisenberg() -> Self {
        let mut bracket = [[[0.0; 3]; 3]; 3];
        bracket[0][1][2] = -1.0;
        bracket[1][0][2] = 1.0;
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    gamma[a][b][c] = 0.5 * (bracket[a][b][c] - bracket[b][c][a] + bracket[c][a][b]);
                }
            }
        }
        Self { gamma, bracket }
    }

    fn tanaka(&self) -> Self {
        // J a = −2 ∇_a R
        let mut j = [[0.0; 3]; 3];
        for a in 0..3 {
            for c in 0..3 {
                j[a][c] = -2.0 * self.gamma[a][2][c];
            }
        }
        let mut gamma = self.gamma;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let ra = if a == 2 { 1.0 } else { 0.0 };
                    let rb = if b == 2 { 1.0 } else { 0.0 };
                    let rc = if c == 2 { 1.0 } else { 0.0 };
                    gamma[a][b][c] += 0.5 * ra * j[b][c] + 0.5 * rb * j[a][c] - 0.5 * j[a][b] * rc;
                }
            }
        }
        Self { gamma, bracket: self.bracket }
    }

    fn nabla(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..3 {
                    out[c] += a[i] * b[j] * self.gamma[i][j][c];
                }
            }
        }
        out
    }

    fn bracket_of(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..3 {
                    out[c] += a[i] * b[j] * self.bracket[i][j][c];
                }
            }
        }
        out
    }

    /// `Rm(a,b)c` for constant-coefficient fields.
    fn rm(&self, a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> [f64; 3] {
        let t1 = self.nabla(a, &self.nabla(b, c));
        let t2 = self.nabla(b, &self.nabla(a, c));
        let t3 = self.nabla(&self.bracket_of(a, b), c);
        [t1[0] - t2[0] - t3[0], t1[1] - t2[1] - t3[1], t1[2] - t2[2] - t3[2]]
    }

    fn ricci_over(&self, v: &[f64; 3], idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                self.rm(&e, v, v)[i]
            })
            .sum()
    }
}

fn curvature_constants() -> (bool, String) {
    let g = Geometry::heisenberg(1);
    let lc = Koszul::heisenberg();
    let tk = lc.tanaka();
    let x = [1.0, 0.0, 0.0];
    let r = [0.0, 0.0, 1.0];
    let o = HPoint::new(vec![0.3, -0.2, 0.7]);
    let tx = HTangent::basis(o.clone(), 0);
    let tr = HTangent::basis(o, 2);
    let rows = [
        ("ric_ver(X)", g.ric_ver(&tx), 0.25, lc.ricci_over(&x, &[2])),
        ("ric_hor(R)", g.ric_hor(&tr), 0.5, lc.ricci_over(&r, &[0, 1])),
        ("ric_hor(X)", g.ric_hor(&tx), -0.75, lc.ricci_over(&x, &[0, 1])),
        ("tanaka_ric(X)", g.tanaka_ric(&tx), 0.0, tk.ricci_over(&x, &[0, 1, 2])),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, lib, expect, oracle) in rows {
        let good = (lib - expect).abs() < 1e-10 && (oracle - expect).abs() < 1e-10;
        ok &= good;
        parts.push(format!("{name}={lib:.12} (oracle {oracle:.12}, expected {expect})"));
    }
    (ok, parts.join("; "))
}

// ---------------------------------------------------------------- 3

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn coefficient_consistency() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let ts = [0.01, 0.1, 0.37, 1.0, 4.2];
    for n in 1..=3 {
        let nf = n as f64;
        // linear family against the heat display
        let fam = family_cor2(&CurvatureConstants::heisenberg(n)).unwrap();
        for &t in &ts {
            let [a1, a2, _, _] = fam.coeffs(t);
            worst = worst.max(rel(a1 + 1.0, 1.0 + 3.0 / nf));
            worst = worst.max(rel(a2, t * nf / 3.0));
            worst = worst.max(rel(fam.r(t).unwrap(), 2.0 * nf * (1.0 + 3.0 / nf).powi(2) / t));
        }
        // saturating family against the Sasakian display
        for &kappa2 in &[0.5, 1.0, 2.0] {
            let kappa1 = 0.3;
            let fam = family_sasakian(n, kappa1, kappa2).unwrap();
            let c2 = (nf * kappa2 / 2.0).sqrt() / (nf + 3.0);
            worst = worst.max(rel(fam.c2, c2));
            worst = worst.max(rel(fam.c1 / 2.0, (1.0 + nf / 3.0) * (nf / (2.0 * kappa2)).sqrt()));
            worst = worst.max(rel(fam.c + 1.0, 1.0 + 3.0 / nf));
            for &t in &ts {
                let rhs = kappa2 / c2 / (c2 * t).tanh() + 3.0 * kappa1 / nf;
                worst = worst.max(rel(fam.r(t).unwrap(), rhs));
                let vert = fam.coeffs(t)[1] / 2.0;
                worst = worst.max(rel(vert, (1.0 + nf / 3.0) * (nf / (2.0 * kappa2)).sqrt() * (c2 * t).tanh()));
            }
        }
    }
    (worst < 1e-12, format!("n in {{1,2,3}}, kappa2 in {{0.5,1,2}}: worst relative deviation {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn ode_residuals() -> (bool, String) {
    let grid: Vec<f64> = (0..1000).map(|i| 0.01 + (10.0 - 0.01) * i as f64 / 999.0).collect();
    let mut worst: f64 = 0.0;
    let mut families = 0;
    for n in 1..=3 {
        let nf = n as f64;
        let h = CurvatureConstants::heisenberg(n);
        let mut fams = vec![family_cor2(&h).unwrap(), family_cor1(&h, 2.5 / nf).unwrap(), family_cor1(&h, 3.5 / nf).unwrap()];
        for &k2 in &[0.5, 1.0, 2.0] {
            let hp = CurvatureConstants::heisenberg_with_potential(n, 0.2, k2);
            fams.push(family_cor3(&hp, 2.5 / nf).unwrap());
            fams.push(family_sasakian(n, 0.2, k2).unwrap());
        }
        for f in &fams {
            let res = condition_residuals(f, &grid);
            assert!(!res.res_r.is_nan(), "closed-form families report the r residual");
            worst = worst.max(res.max());
            families += 1;
        }
    }
    let fam = family_cor2(&CurvatureConstants::heisenberg(1)).unwrap();
    let ts: Vec<f64> = (0..=95).map(|i| 0.05 + 0.01 * i as f64).collect();
    let tab = integrate_stable_r(&fam, 0.0, 1e-3, &ts, None).unwrap();
    let dev = tab.t.iter().zip(&tab.r).map(|(&t, &r)| rel(r, fam.r(t).unwrap())).fold(0.0, f64::max);
    (
        worst < 1e-8 && dev < 1e-4,
        format!("{families} families on [0.01,10]: max residual {worst:.2e}; stable r vs closed form on [0.05,1]: {dev:.2e}"),
    )
}

// ---------------------------------------------------------------- heat runs

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn snapshot_times() -> Vec<f64> {
    let mut t = vec![0.05];
    t.extend((1..=10).map(|i| 0.1 * i as f64));
    t
}

struct HeatRun {
    n: usize,
    seed: u64,
    spec: ProblemSpec,
    initial_mass: f64,
    snaps: Vec<DiffusionState>,
}

fn heat_run(n: usize, seed: u64) -> HeatRun {
    let g = GridSpec::square(n).unwrap();
    let spec = ProblemSpec::free(g, 0.0, 2).unwrap();
    let rho = make_smooth_density(g, &SmoothDensity { seed, ..Default::default() }).unwrap();
    let mut s = DiffusionState::new(rho, 0.0).unwrap();
    let initial_mass = s.mass();
    let (_, dt) = steps_to(0.05, spec.dt_max());
    let mut snaps = Vec::new();
    for t in snapshot_times() {
        s = integrate(&s, &spec, dt, t, |_| Ok(())).unwrap();
        snaps.push(s.clone());
    }
    HeatRun { n, seed, spec, initial_mass, snaps }
}

// ---------------------------------------------------------------- 5

fn max_diff_on_coarse(a: &GridScalarField, b: &GridScalarField) -> f64 {
    let r = b.spec.n / a.spec.n;
    let mut m: f64 = 0.0;
    for i in 0..a.spec.n {
        for j in 0..a.spec.n {
            for k in 0..a.spec.nz {
                m = m.max((a.values[a.spec.flat(i, j, k)] - b.values[b.spec.flat(i * r, j * r, k * r)]).abs());
            }
        }
    }
    m
}

fn run_to(n: usize, order: u8, seed: u64, t: f64) -> GridScalarField {
    let g = GridSpec::square(n).unwrap();
    let spec = ProblemSpec::free(g, 0.0, order).unwrap();
    let rho = make_smooth_density(g, &SmoothDensity { seed, ..Default::default() }).unwrap();
    let (_, dt) = steps_to(t, spec.dt_max());
    integrate(&DiffusionState::new(rho, 0.0).unwrap(), &spec, dt, t, |_| Ok(())).unwrap().rho
}

fn solver_checks(runs: &[HeatRun]) -> (bool, String) {
    // mass over unit time, heat case, N = 32
    let drift = runs
        .iter()
        .filter(|r| r.n == 32)
        .map(|r| rel(r.snaps.last().unwrap().mass(), r.initial_mass))
        .fold(0.0, f64::max);
    // order between N = 16 and N = 32 against an order-4 reference
    let reference = run_to(32, 4, 7, 0.25);
    let e16 = max_diff_on_coarse(&run_to(16, 2, 7, 0.25), &reference);
    let e32 = max_diff_on_coarse(&run_to(32, 2, 7, 0.25), &reference);
    let order = (e16 / e32).log2();
    // steady state
    let g = GridSpec::square(8).unwrap();
    let free = ProblemSpec::free(g, 0.0, 2).unwrap();
    let one = DiffusionState::new(GridScalarField::constant(g, 1.0), 0.0).unwrap();
    let steady = integrate(&one, &free, free.dt_max(), 1.0, |_| Ok(())).unwrap();
    let steady_ok = steady.rho.values.iter().all(|&v| v == 1.0);
    // exponential growth: the RK4 local error for ρ' = cρ is (c dt)⁵/120 to leading order
    let c = 0.7;
    let growth = ProblemSpec::new(GridScalarField::zeros(g), GridScalarField::constant(g, c), 0.0, 2).unwrap();
    let local = |dt: f64| (step(&one, &growth, dt).unwrap().rho.values[0] - (c * dt).exp()).abs();
    let (d1, d2) = (0.2, 0.1);
    let (l1, l2) = (local(d1), local(d2));
    let lead = |dt: f64| (c * dt).powi(5) / 120.0;
    let growth_ok = rel(l1, lead(d1)) < 0.2 && rel(l2, lead(d2)) < 0.1 && (l1 / l2 - 32.0).abs() < 4.0;
    let (_, dt) = steps_to(1.0, growth.dt_max());
    let end = integrate(&one, &growth, dt, 1.0, |_| Ok(())).unwrap();
    let uniform = end.rho.values.iter().all(|&v| v == end.rho.values[0]);
    let global = rel(end.rho.values[0], c.exp());
    let ok = drift < 1e-10
        && (order - 2.0).abs() <= 0.3
        && steady_ok
        && growth_ok
        && uniform
        && global < (c * dt).powi(4);
    (
        ok,
        format!(
            "mass drift {drift:.2e}; order {order:.3} (e16 {e16:.3e}, e32 {e32:.3e}); steady exact {steady_ok}; \
             RK4 local error {l1:.3e}/{l2:.3e} (ratio {:.1}); growth at t=1 rel err {global:.2e}",
            l1 / l2
        ),
    )
}

// ---------------------------------------------------------------- 6

fn most_negative(reports: &[&HarnackReport]) -> f64 {
    reports.iter().map(|r| r.min_relative_margin()).fold(f64::INFINITY, f64::min)
}

fn harnack_margins(runs: &[HeatRun]) -> (bool, String) {
    let fam = family_cor2(&CurvatureConstants::heisenberg(1)).unwrap();
    let mut ok = true;
    let mut heat = [Vec::new(), Vec::new()];
    let mut linear = [Vec::new(), Vec::new()];
    for r in runs {
        let b = check_baga(&r.snaps, &r.spec, 1, 0.05).unwrap();
        let g = check_bound(&r.snaps, &r.spec, &fam, None, 0.05).unwrap();
        for rep in [&b, &g] {
            for (l, bd) in rep.lhs_max.iter().zip(&rep.bound) {
                if !(*l <= bd * 1.05) {
                    ok = false;
                    say(&format!("  seed {} N={} {:?}: lhs {l} > 1.05 x {bd}", r.seed, r.n, rep.form));
                }
            }
        }
        let slot = usize::from(r.n == 32);
        heat[slot].push(b);
        linear[slot].push(g);
    }
    let m = |v: &Vec<HarnackReport>| most_negative(&v.iter().collect::<Vec<_>>());
    let (h16, h32, g16, g32) = (m(&heat[0]), m(&heat[1]), m(&linear[0]), m(&linear[1]));
    let refine_ok = h32 >= h16 && g32 >= g16;
    (
        ok && refine_ok,
        format!(
            "5 seeds, t in [0.05,1]: all snapshots within 1.05 x bound: {ok}; worst relative margin heat form \
             N16 {h16:.4} -> N32 {h32:.4}, linear form N16 {g16:.4} -> N32 {g32:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn riccati_transport() -> (bool, String) {
    let mut defects: f64 = 0.0;
    let mut ratios = Vec::new();
    for n in 1..=2 {
        let g = Geometry::heisenberg(n);
        let f = test_family(n);
        let x0 = HPoint::new((0..2 * n + 1).map(|i| 0.1 * (i + 1) as f64).collect());
        let a = riccati_residual(&g, &f, &x0, 0.3, 2e-3).unwrap();
        let b = riccati_residual(&g, &f, &x0, 0.3, 1e-3).unwrap();
        for tr in [&a, &b] {
            defects = defects.max(tr.n10_defect.iter().cloned().fold(0.0, f64::max));
            defects = defects.max(tr.trace_defect.iter().cloned().fold(0.0, f64::max));
        }
        ratios.push(b.max_residual() / a.max_residual());
    }
    let g = Geometry::heisenberg(1);
    let x0 = HPoint::new(vec![0.1, 0.2, 0.3]);
    let margin = keylem_check(&g, &test_family(1), &x0, 0.3, 1e-4).unwrap().min_margin();
    let linear = keylem_check(&g, &Coords { n: 1 }.x(0), &x0, 0.3, 1e-4).unwrap().min_margin();
    let halves = ratios.iter().all(|&r| r <= 0.55);
    let ok = defects < 1e-8 && halves && margin >= -1e-3 && linear.abs() < 1e-6;
    (
        ok,
        format!(
            "block/trace defects {defects:.2e}; residual ratio per dt halving {ratios:.3?}; key margin at dt=1e-4 \
             {margin:.4e}; linear equality case {linear:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn seeded_pairs() -> Vec<(HPoint, HPoint, f64, f64, Box<dyn Potential + Sync>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..10)
        .map(|i| {
            let mut pt = || HPoint::new((0..3).map(|_| rng.gen_range(-0.8..0.8)).collect());
            let (a, b) = (pt(), pt());
            let s0 = rng.gen_range(0.0..0.5);
            let s1 = s0 + rng.gen_range(0.5..1.5);
            let w: Box<dyn Potential + Sync> = if i % 2 == 0 {
                Box::new(ConstantPotential(rng.gen_range(0.0..0.5)))
            } else {
                let x = Field::coord(0);
                let y = Field::coord(1);
                let amp = rng.gen_range(0.2..1.0);
                // W = amp·(1 + sin x cos y) ≥ 0
                let f = ((x.sin() * y.cos()) + 1.0) * amp;
                Box::new(AnalyticPotential::new(f, Some(0.0)))
            };
            (a, b, s0, s1, w)
        })
        .collect()
}

fn action_checks(runs: &[HeatRun]) -> (bool, String) {
    let o = HPoint::origin(1);
    let straight = minimize_action(&o, &HPoint::new(vec![1.0, 0.0, 0.0]), 0.0, 1.0, &ConstantPotential(0.0), &ActionOptions::default())
        .unwrap()
        .cost;
    let mut worst_pair: f64 = 0.0;
    for (a, b, s0, s1, w) in seeded_pairs() {
        let fast = minimize_action(&a, &b, s0, s1, w.as_ref(), &ActionOptions::default()).unwrap().cost;
        let oracle = oracle_action(&a, &b, s0, s1, w.as_ref()).unwrap();
        worst_pair = worst_pair.max(rel(fast, oracle));
    }
    // integrated inequality on the N = 32, seed 1 heat run
    let run = runs.iter().find(|r| r.n == 32 && r.seed == 1).unwrap();
    let g = run.spec.grid;
    let times = snapshot_times();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut slacks = Vec::new();
    let opts = ActionOptions { domain: Domain::Nilmanifold, ..Default::default() };
    while slacks.len() < 5 {
        let i0 = rng.gen_range(0..times.len() - 1);
        let i1 = rng.gen_range(i0 + 1..times.len());
        let mut idx = || (rng.gen_range(0..g.n), rng.gen_range(0..g.n), rng.gen_range(0..g.nz));
        let (p0, p1) = (idx(), idx());
        let c0 = g.coords(p0.0, p0.1, p0.2);
        let c1 = g.coords(p1.0, p1.1, p1.2);
        let (s0, s1) = (times[i0], times[i1]);
        let cost = minimize_action(&HPoint::new(c0.to_vec()), &HPoint::new(c1.to_vec()), s0, s1, &ConstantPotential(0.0), &opts)
            .unwrap()
            .cost;
        let rep = integrated_harnack_check(&run.snaps[i0].rho, &run.snaps[i1].rho, p0, p1, s0, s1, &run.spec.u1, 1, 0.0, cost);
        assert!(rep.skipped.is_none());
        slacks.push(rep.slack);
    }
    let min_slack = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = (straight - 0.5).abs() < 1e-4 && worst_pair < 0.01 && min_slack >= -0.05;
    (
        ok,
        format!(
            "straight-line cost {straight:.8}; worst relative gap to oracle over 10 pairs {worst_pair:.2e}; \
             integrated slacks {slacks:.3?}"
        ),
    )
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance_criteria() {
    let mut lines: Vec<Line> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &mut dyn FnMut() -> (bool, String)| {
        let t0 = Instant::now();
        let (pass, detail) = f();
        let secs = t0.elapsed().as_secs_f64();
        let line = Line { id, name, pass, secs, detail };
        say(&format!(
            "criterion {}: {} [{}] ({:.1}s) {}",
            line.id,
            if line.pass { "PASS" } else { "FAIL" },
            line.name,
            line.secs,
            line.detail
        ));
        lines.push(line);
    };
    timed(1, "identity suite", &mut || {
        let t0 = Instant::now();
        let (ok, d) = identity_suite();
        let s = t0.elapsed().as_secs_f64();
        (ok && s < 30.0, d)
    });
    timed(2, "curvature constants on H1", &mut curvature_constants);
    timed(3, "coefficient consistency", &mut coefficient_consistency);
    timed(4, "ODE residuals", &mut ode_residuals);
    let t0 = Instant::now();
    let runs: Vec<HeatRun> = [16usize, 32].iter().flat_map(|&n| SEEDS.iter().map(move |&s| heat_run(n, s))).collect();
    let run_secs = t0.elapsed().as_secs_f64();
    timed(5, "solver", &mut || solver_checks(&runs));
    timed(6, "differential Harnack margins", &mut || {
        let t0 = Instant::now();
        let (ok, d) = harnack_margins(&runs);
        let secs = run_secs + t0.elapsed().as_secs_f64();
        (ok && secs < 300.0, format!("{d} (heat runs + checks {secs:.0}s)"))
    });
    timed(7, "Riccati and transport", &mut riccati_transport);
    timed(8, "action and integrated Harnack", &mut || action_checks(&runs));
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
