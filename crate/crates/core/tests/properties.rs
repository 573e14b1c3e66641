use proptest::prelude::*;
use subharnack::action::{lattice_translate, minimize_action, ActionOptions, ConstantPotential, HorizontalPath};
use subharnack::coefficients::{family_cor2, family_sasakian, CurvatureConstants};
use subharnack::geometry::{Geometry, HPoint};
use subharnack::grid::{derivative_at, discrete_sub_laplacian, frame_derivative, Direction, GridScalarField, GridSpec};
use subharnack::harnack::{baga_lhs_rhs, harnack_quantity, integrated_rhs, sasakian_lhs_rhs};
use subharnack::identities::verify_fact;
use subharnack::runner::ConfigMap;
use subharnack::solver::{
    dt_max, f_field, make_initial_density, make_smooth_density, smooth_log_density, step, DiffusionState,
    InitialDensity, ProblemSpec, SmoothDensity,
};

fn small_grid() -> GridSpec {
    GridSpec::new(8, 16).unwrap()
}

fn noise_state(seed: u64, amplitude: f64, t: f64) -> DiffusionState {
    let rho = make_initial_density(small_grid(), &InitialDensity { seed, amplitude, ..Default::default() }).unwrap();
    DiffusionState::new(rho, t).unwrap()
}

/// Contact form `dz + ½Σ(x_i dy_i − y_i dx_i)` evaluated on coordinate components.
fn alpha(p: &[f64], v: &[f64]) -> f64 {
    let n = (p.len() - 1) / 2;
    v[2 * n] + 0.5 * (0..n).map(|i| p[i] * v[n + i] - p[n + i] * v[i]).sum::<f64>()
}

/// Metric whose orthonormal frame is the left-invariant one: planar part plus `α²`.
fn metric(p: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let n = (p.len() - 1) / 2;
    (0..2 * n).map(|i| u[i] * v[i]).sum::<f64>() + alpha(p, u) * alpha(p, v)
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 2 * n + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_is_orthonormal_and_dual_to_alpha(n in 1usize..=3, raw in point(3)) {
        let coords = raw[..2 * n + 1].to_vec();
        let g = Geometry::heisenberg(n);
        let frame = g.frame_at(&HPoint::new(coords.clone()));
        for a in 0..frame.len() {
            let expect_alpha = if a == 2 * n { 1.0 } else { 0.0 };
            prop_assert!((alpha(&coords, &frame[a]) - expect_alpha).abs() < 1e-12);
            for b in 0..frame.len() {
                let delta = if a == b { 1.0 } else { 0.0 };
                prop_assert!((metric(&coords, &frame[a], &frame[b]) - delta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lattice_action_is_a_left_action(
        p in point(1),
        g1 in prop::collection::vec(-3i64..=3, 3),
        g2 in prop::collection::vec(-3i64..=3, 3),
    ) {
        // labels compose as (a₁ + a₂, b₁ + b₂, m₁ + m₂ + a₂b₁)
        let product = [g1[0] + g2[0], g1[1] + g2[1], g1[2] + g2[2] + g2[0] * g1[1]];
        let composed = lattice_translate(&product, &p);
        let nested = lattice_translate(&g1, &lattice_translate(&g2, &p));
        for (a, b) in composed.iter().zip(&nested) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_log_density_is_deck_invariant(
        seed in 0u64..1000,
        p in prop::collection::vec(0.0..1.0f64, 3),
        g in (-1i64..=1, -1i64..=1, -3i64..=3),
    ) {
        // the truncated image sum is exact while planar coordinates stay in [−1, 2]
        let g = [g.0, g.1, g.2];
        let f = smooth_log_density(&SmoothDensity { seed, ..Default::default() });
        let q = lattice_translate(&g, &p);
        let a = f.eval(&p, 0.0);
        let b = f.eval(&q, 0.0);
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn discrete_laplacian_has_zero_sum(seed in any::<u64>(), order in prop::sample::select(vec![2u8, 4])) {
        let s = noise_state(seed, 2.0, 0.1);
        let l = discrete_sub_laplacian(&s.rho, order).unwrap();
        let n2 = (s.rho.spec.n * s.rho.spec.n) as f64;
        prop_assert!(l.sum().abs() < 1e-12 * s.rho.norm_l1() * n2);
    }

    #[test]
    fn derivatives_commute_with_central_shift(seed in any::<u64>(), shift in 1i64..16, order in prop::sample::select(vec![2u8, 4])) {
        // z-translation by whole cells is the grid-preserving part of the centre,
        // so shifting then differentiating must equal differentiating then shifting
        let s = noise_state(seed, 1.0, 0.1);
        let spec = s.rho.spec;
        let shifted = |f: &GridScalarField| GridScalarField::from_index_fn(spec, |i, j, k| f.get(i as i64, j as i64, k as i64 + shift));
        for dir in [Direction::X, Direction::Y, Direction::R] {
            let a = frame_derivative(&shifted(&s.rho), dir, order).unwrap();
            let b = shifted(&frame_derivative(&s.rho, dir, order).unwrap());
            prop_assert!(a.sub(&b).norm_inf() <= 1e-12 * b.norm_inf(), "{dir:?}");
        }
        let la = discrete_sub_laplacian(&shifted(&s.rho), order).unwrap();
        let lb = shifted(&discrete_sub_laplacian(&s.rho, order).unwrap());
        prop_assert!(la.sub(&lb).norm_inf() <= 1e-12 * lb.norm_inf());
    }

    #[test]
    fn pointwise_stencil_matches_fast_path(seed in any::<u64>(), i in 0usize..8, j in 0usize..8, k in 0usize..16, order in prop::sample::select(vec![2u8, 4])) {
        let s = noise_state(seed, 1.0, 0.1);
        for dir in [Direction::X, Direction::Y, Direction::R] {
            let full = frame_derivative(&s.rho, dir, order).unwrap();
            let at = derivative_at(&s.rho, dir, order, i as i64, j as i64, k as i64).unwrap();
            let stored = full.values[s.rho.spec.flat(i, j, k)];
            prop_assert!((at - stored).abs() <= 1e-12 * full.norm_inf(), "{dir:?}");
        }
    }

    #[test]
    fn rk4_step_conserves_mass(seed in any::<u64>(), order in prop::sample::select(vec![2u8, 4])) {
        // only the pure diffusion conserves mass; K ρ log ρ and U₂ρ are sources
        let s = noise_state(seed, 2.0, 0.0);
        let spec = ProblemSpec::free(small_grid(), 0.0, order).unwrap();
        let next = step(&s, &spec, 0.5 * dt_max(small_grid(), order)).unwrap();
        prop_assert!((next.mass() - s.mass()).abs() < 1e-12 * s.mass());
    }

    #[test]
    fn heat_form_is_general_form_plus_vertical_term(seed in any::<u64>(), t in 0.01..3.0f64) {
        let n = 1;
        let s = noise_state(seed, 2.0, t);
        let spec = ProblemSpec::free(small_grid(), 0.0, 2).unwrap();
        let fam = family_cor2(&CurvatureConstants::heisenberg(n)).unwrap();
        let general = harnack_quantity(&s, &spec, &fam, t).unwrap();
        let (heat, bound) = baga_lhs_rhs(&s, &spec, n, t).unwrap();
        let rf = frame_derivative(&f_field(&s, &spec).unwrap(), Direction::R, 2).unwrap();
        let a2 = fam.coeffs(t)[1];
        let shifted = general.add(&rf.mul(&rf).scale(0.5 * a2));
        prop_assert!(shifted.sub(&heat).norm_inf() < 1e-10 * general.norm_inf().max(1.0));
        prop_assert!((bound - fam.r(t).unwrap()).abs() < 1e-12 * bound);
    }

    #[test]
    fn sasakian_form_equals_general_form(seed in any::<u64>(), t in 0.01..3.0f64, k1 in 0.0..1.0f64, k2 in 0.1..4.0f64) {
        let s = noise_state(seed, 1.0, t);
        let g = small_grid();
        let u2 = GridScalarField::from_fn(g, |x, y, z| 0.05 * (6.28 * x).sin() * (6.28 * (y + z)).cos());
        let spec = ProblemSpec::new(GridScalarField::zeros(g), u2, 0.0, 2).unwrap();
        let fam = family_sasakian(1, k1, k2).unwrap();
        let general = harnack_quantity(&s, &spec, &fam, t).unwrap();
        let (sas, rhs) = sasakian_lhs_rhs(&s, &spec, 1, k1, k2, t).unwrap();
        prop_assert!(general.sub(&sas).norm_inf() < 1e-10 * general.norm_inf().max(1.0));
        prop_assert!((rhs - fam.r(t).unwrap()).abs() < 1e-12 * rhs);
    }

    #[test]
    fn integrated_rhs_decreases_in_cost(
        n in 1usize..=3,
        k2 in 0.0..3.0f64,
        s0 in 0.05..0.5f64,
        ds in 0.01..1.0f64,
        c in 0.0..2.0f64,
        dc in 0.01..1.0f64,
    ) {
        let a = integrated_rhs(n, k2, s0, s0 + ds, 0.0, c);
        let b = integrated_rhs(n, k2, s0, s0 + ds, 0.0, c + dc);
        prop_assert!(b < a && a <= 1.0);
    }

    #[test]
    fn path_action_shifts_by_constant_potential(
        controls in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 16),
        w in -3.0..3.0f64,
        s1 in 0.1..2.0f64,
    ) {
        let path = HorizontalPath::from_controls(&HPoint::new(vec![0.1, 0.2, 0.3]), 0.0, s1, controls);
        let free = path.action(&ConstantPotential(0.0));
        let shifted = path.action(&ConstantPotential(w));
        prop_assert!((shifted - free - w * s1).abs() < 1e-10 * free.abs().max(1.0));
        prop_assert!(path.knot_mismatch() < 1e-14);
        // Cauchy–Schwarz: kinetic part is at least length²/(2·span)
        let len = path.length();
        prop_assert!(free >= 0.5 * len * len / s1 * (1.0 - 1e-12));
    }

    #[test]
    fn config_text_round_trips(values in prop::collection::vec((0usize..4, -1e6..1e6f64), 1..6)) {
        let keys = ["time.t_end", "model.k", "harnack.kappa1", "coeffs.c"];
        let mut text = String::from("# generated\n");
        let mut expect = ConfigMap::default();
        for (idx, v) in &values {
            let (section, key) = keys[*idx].split_once('.').unwrap();
            text.push_str(&format!("[{section}]\n{key} = {v}\n"));
            expect.set(keys[*idx], v.to_string());
        }
        let parsed = ConfigMap::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &expect);
        for (idx, _) in &values {
            let got: f64 = parsed.get(keys[*idx]).unwrap().parse().unwrap();
            prop_assert_eq!(got.to_string(), expect.get(keys[*idx]).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn minimized_action_respects_planar_bound(p in point(1), q in point(1), s1 in 0.5..2.0f64) {
        let opts = ActionOptions { segments: 16, restarts: 2, ..Default::default() };
        let x0 = HPoint::new(p.iter().map(|v| 0.1 * v).collect());
        let x1 = HPoint::new(q.iter().map(|v| 0.1 * v).collect());
        let r = minimize_action(&x0, &x1, 0.0, s1, &ConstantPotential(0.0), &opts).unwrap();
        let planar: f64 = (0..2).map(|i| (x1.coords[i] - x0.coords[i]).powi(2)).sum();
        prop_assert!(r.cost >= 0.5 * planar / s1 * (1.0 - 1e-9) - 1e-12);
        prop_assert!(r.endpoint_error <= opts.tol);
        let shifted = minimize_action(&x0, &x1, 0.0, s1, &ConstantPotential(0.7), &opts).unwrap();
        prop_assert!((shifted.cost - r.cost - 0.7 * s1).abs() < 1e-5 * r.cost.max(1.0));
    }
}

#[test]
fn identity_checks_are_reproducible() {
    for id in [1u8, 7, 13] {
        let a = verify_fact(id, 2, 20, 99).unwrap();
        let b = verify_fact(id, 2, 20, 99).unwrap();
        assert_eq!(a.max_residual.to_bits(), b.max_residual.to_bits());
        assert_eq!(a.worst_point, b.worst_point);
    }
}

#[test]
fn initial_density_is_deterministic_with_exact_floor() {
    let p = InitialDensity { seed: 11, ..Default::default() };
    let a = make_initial_density(small_grid(), &p).unwrap();
    let b = make_initial_density(small_grid(), &p).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.min(), p.floor);
}

fn stays_positive(rho: GridScalarField, dt: f64, t_end: f64) -> f64 {
    let spec = ProblemSpec::free(rho.spec, 0.0, 2).unwrap();
    let mut s = DiffusionState::new(rho, 0.0).unwrap();
    let steps = (t_end / dt).ceil() as usize;
    let h = t_end / steps as f64;
    let mut lo = f64::INFINITY;
    for _ in 0..steps {
        s = step(&s, &spec, h).unwrap();
        lo = lo.min(s.rho.min());
    }
    lo
}

#[test]
fn noise_density_stays_positive_at_half_dt() {
    let g = GridSpec::square(16).unwrap();
    for seed in 1..=3 {
        let rho = make_initial_density(g, &InitialDensity { seed, ..Default::default() }).unwrap();
        let lo = stays_positive(rho, 0.5 * dt_max(g, 2), 1.0);
        assert!(lo > 0.0, "seed {seed}: min {lo}");
    }
}

#[test]
#[ignore = "about two minutes per seed"]
fn noise_density_stays_positive_at_half_dt_fine_grid() {
    let g = GridSpec::square(32).unwrap();
    for seed in 1..=3 {
        let rho = make_initial_density(g, &InitialDensity { seed, ..Default::default() }).unwrap();
        let lo = stays_positive(rho, 0.5 * dt_max(g, 2), 1.0);
        assert!(lo > 0.0, "seed {seed}: min {lo}");
    }
}

fn evolve(g: GridSpec, order: u8, t: f64) -> GridScalarField {
    let rho = make_smooth_density(g, &SmoothDensity::default()).unwrap();
    let spec = ProblemSpec::free(g, 0.0, order).unwrap();
    let mut s = DiffusionState::new(rho, 0.0).unwrap();
    let steps = (t / spec.dt_max()).ceil() as usize;
    for _ in 0..steps {
        s = step(&s, &spec, t / steps as f64).unwrap();
    }
    s.rho
}

#[test]
#[ignore = "runs a 64³ grid, several minutes"]
fn three_grid_self_convergence_is_second_order() {
    let t = 0.25;
    let r16 = evolve(GridSpec::square(16).unwrap(), 2, t);
    let r32 = evolve(GridSpec::square(32).unwrap(), 2, t);
    let r64 = evolve(GridSpec::square(64).unwrap(), 2, t);
    let e1 = r32.restrict().unwrap().sub(&r16).norm_inf();
    let e2 = r64.restrict().unwrap().restrict().unwrap().sub(&r32.restrict().unwrap()).norm_inf();
    let ratio = e1 / e2;
    assert!((2f64.powf(1.7)..=2f64.powf(2.3)).contains(&ratio), "ratio {ratio}");
}
