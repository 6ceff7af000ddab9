//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs sequentially so the wall-clock limits are measured without other
//! tests competing for cores. Exits nonzero on a failed criterion only when
//! `ACCEPTANCE_STRICT=1`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dnapl_core::analysis::total_mass;
use dnapl_core::benchmark::{buckley_leverett_scenario, LENGTH, PORE_VOLUMES};
use dnapl_core::constitutive::{effective_saturation, MaterialProperties};
use dnapl_core::grid::MaterialId;
use dnapl_core::interface::{entry_state, equilibrium_residual, equilibrium_saturation, threshold_saturation, EntryState};
use dnapl_core::io::parse_scenario;
use dnapl_core::io::timeseries::timeseries_to_string;
use dnapl_core::simulation::{compute_flow, run, run_with, sample, Sample, Simulation};
use dnapl_core::{Model, Scenario};

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.scenario"));
    parse_scenario(path).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1: hydrostatic initial state is stationary

fn hydrostatic() -> Outcome {
    let start = Instant::now();
    let sc = scenario("field_section_2d");
    let mut sim = Simulation::from_scenario(&sc).unwrap();
    let s0 = sim.state().s_n.clone();
    let mut max_ds: f64 = 0.0;
    let mut max_v: f64 = 0.0;
    for _ in 0..200 {
        sim.step_towards(sc.time.end_s).unwrap();
        let state = sim.state();
        for (a, b) in state.s_n.iter().zip(&s0) {
            max_ds = max_ds.max((a - b).abs());
        }
        let flow = compute_flow(sim.model(), &sc.solver, state, true).unwrap();
        max_v = max_v.max(flow.fluxes.max_velocity(sim.model()));
    }
    let wall = start.elapsed();
    let cells = sim.model().num_cells();
    outcome(
        max_ds <= 1e-10 && max_v < 1e-12 && secs(wall) < 10.0 && sim.steps() == 200,
        format!(
            "{cells} cells, 200 steps to t = {:.3e} s: max |ds_n| = {max_ds:.2e} (<= 1e-10), max velocity = {max_v:.2e} m/s (< 1e-12), {:.2} s (< 10 s)",
            sim.state().time,
            secs(wall)
        ),
    )
}

// 2: waterflood against a sampled tangent construction

/// Brooks-Corey/Burdine water fractional flow over effective saturation,
/// tabulated on a uniform grid.
struct SampledFlow {
    se: Vec<f64>,
    f: Vec<f64>,
}

impl SampledFlow {
    fn new(m: &MaterialProperties, mu_w: f64, mu_n: f64, samples: usize) -> Self {
        let l = m.lambda;
        let se: Vec<f64> = (0..=samples).map(|k| k as f64 / samples as f64).collect();
        let f = se
            .iter()
            .map(|&s| {
                let krw = s.powf((2.0 + 3.0 * l) / l);
                let krn = (1.0 - s).powi(2) * (1.0 - s.powf((2.0 + l) / l));
                let (a, b) = (krw / mu_w, krn / mu_n);
                if a + b == 0.0 {
                    0.0
                } else {
                    a / (a + b)
                }
            })
            .collect();
        Self { se, f }
    }

    /// Index of the tangent point from the origin: the largest chord slope f/S.
    fn shock(&self) -> usize {
        (1..self.se.len())
            .max_by(|&a, &b| (self.f[a] / self.se[a]).total_cmp(&(self.f[b] / self.se[b])))
            .unwrap()
    }

    fn slope(&self, k: usize) -> f64 {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(self.se.len() - 1));
        (self.f[b] - self.f[a]) / (self.se[b] - self.se[a])
    }

    /// Saturation at `xd` (fraction of the column) after `td` pore volumes.
    fn profile(&self, xd: f64, td: f64, range: f64) -> f64 {
        let shock = self.shock();
        let speed = |k: usize| td * self.slope(k) / range;
        if xd >= speed(shock) {
            return 0.0;
        }
        (shock..self.se.len()).find(|&k| speed(k) <= xd).map_or(1.0, |k| self.se[k])
    }
}

fn buckley_leverett() -> Outcome {
    let start = Instant::now();
    let cells = 400;
    let sc = buckley_leverett_scenario(cells);
    let result = run(&sc).unwrap();
    let wall = start.elapsed();
    let sand = sc.material_table()[0];
    let range = 1.0 - sand.s_wr - sand.s_nr;
    let oracle = SampledFlow::new(&sand, sc.fluids.wetting.viscosity_pa_s, sc.fluids.non_wetting.viscosity_pa_s, 200_000);
    let dz = LENGTH / cells as f64;
    let l1 = result
        .final_state
        .s_n
        .iter()
        .enumerate()
        .map(|(i, &sn)| {
            let numerical = (1.0 - sn - sand.s_wr) / range;
            let exact = oracle.profile((i as f64 + 0.5) * dz / LENGTH, PORE_VOLUMES, range);
            (numerical - exact).abs()
        })
        .sum::<f64>()
        / cells as f64;
    let shock = oracle.se[oracle.shock()];
    outcome(
        l1 < 0.02 && secs(wall) < 30.0,
        format!(
            "{cells} cells at {PORE_VOLUMES} PV: shock Se = {shock:.4}, L1 error = {:.3}% of mobile range (< 2%), {:.2} s (< 30 s)",
            100.0 * l1,
            secs(wall)
        ),
    )
}

// 3: blocking at a sand-over-clay interface

fn bisection_threshold(coarse: &MaterialProperties, fine: &MaterialProperties) -> f64 {
    let g = |s: f64| coarse.p_entry * s.powf(-1.0 / coarse.lambda) - fine.p_entry;
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn interface_blocking() -> Outcome {
    let start = Instant::now();
    let sc = scenario("sand_clay_column");
    let mut sim = Simulation::from_scenario(&sc).unwrap();
    let model: Model = sim.model().clone();
    let clay_id = sc.material_id("clay").unwrap();
    let sand = *model.material(model.num_cells() - 1);
    let clay = model.materials[clay_id.0];
    let clay_cells: Vec<usize> = (0..model.num_cells()).filter(|&c| model.map.material(c) == clay_id).collect();
    let interface = clay_cells.iter().max().unwrap() + 1;
    assert_ne!(model.map.material(interface), clay_id);
    let baseline = sc.initial.non_wetting_saturation;

    let se_star = threshold_saturation(&sand, &clay);
    let oracle = bisection_threshold(&sand, &clay);
    let rule = *model.rules.get(MaterialId(0), MaterialId(1));

    let mut blocked_steps = 0usize;
    let mut leaked_while_blocked = 0usize;
    let mut penetrating_steps = 0usize;
    let mut worst_residual: f64 = 0.0;
    let mut first_penetration = None;
    while sim.state().time < sc.time.end_s {
        let se_before = effective_saturation(1.0 - sim.state().s_n[interface], &sand);
        sim.step_towards(sc.time.end_s).unwrap();
        let state = sim.state();
        if se_before >= se_star && first_penetration.is_none() {
            blocked_steps += 1;
            let below = total_mass(sim.model(), &restrict(&state.s_n, &clay_cells, baseline), baseline);
            if below != 0.0 || clay_cells.iter().any(|&c| state.s_n[c] != baseline) {
                leaked_while_blocked += 1;
            }
        } else if se_before < se_star {
            penetrating_steps += 1;
            first_penetration.get_or_insert(state.time);
            let state_ok = entry_state(se_before, &rule) == EntryState::Penetrating;
            let se_fine = equilibrium_saturation(se_before, &sand, &clay).unwrap();
            let r = equilibrium_residual(se_before, &sand, se_fine, &clay);
            worst_residual = worst_residual.max(if state_ok { r } else { f64::INFINITY });
        }
    }
    let wall = start.elapsed();
    let clay_mass = total_mass(sim.model(), &restrict(&sim.state().s_n, &clay_cells, baseline), baseline);
    let pass = leaked_while_blocked == 0
        && blocked_steps > 0
        && penetrating_steps > 0
        && (se_star - oracle).abs() <= 1e-6
        && worst_residual < 1e-8
        && secs(wall) < 30.0;
    outcome(
        pass,
        format!(
            "Se* = {se_star:.6e}, bisection {oracle:.6e} (|diff| {:.1e} <= 1e-6; 8.85e-3 is this value rounded, offset {:.2e}); \
             {blocked_steps} blocked steps with clay excess mass exactly 0 ({leaked_while_blocked} violations); \
             penetration from t = {:.0} s, {penetrating_steps} steps, worst interface residual {worst_residual:.1e} (< 1e-8), \
             clay holds {clay_mass:.3e} kg at the end; {:.2} s (< 30 s)",
            (se_star - oracle).abs(),
            (se_star - 8.85e-3).abs(),
            first_penetration.unwrap_or(f64::NAN),
            secs(wall)
        ),
    )
}

/// `s` on `cells`, `baseline` elsewhere.
fn restrict(s: &[f64], cells: &[usize], baseline: f64) -> Vec<f64> {
    let mut out = vec![baseline; s.len()];
    for &c in cells {
        out[c] = s[c];
    }
    out
}

// 4-8: the single-lens desk scenario

#[derive(Debug, Default)]
struct Morphology {
    /// Largest (max above lens) / (max in the incoming plume band) before DNAPL passes the lens.
    best_ratio: f64,
    incoming_at_best: f64,
    above_at_best: f64,
    passed_at: Option<f64>,
    edge_at: Option<f64>,
    beneath_at: Option<f64>,
    lens_touched: usize,
}

struct DeskRun {
    cells: usize,
    samples: Vec<Sample>,
    csv: String,
    wall: Duration,
    steps: usize,
    morphology: Morphology,
}

fn desk_scenario(cells: usize) -> Scenario {
    let mut sc = scenario("desk_single_lens");
    sc.grid.cells = vec![cells, cells];
    sc
}

fn lens_box(sc: &Scenario) -> ([f64; 2], [f64; 2]) {
    let lens = sc.layout.regions.iter().find(|r| r.label == "lens").unwrap();
    ([lens.min_m[0], lens.max_m[0]], [lens.min_m[1], lens.max_m[1]])
}

fn desk_run(cells: usize) -> DeskRun {
    let start = Instant::now();
    let sc = desk_scenario(cells);
    let mut sim = Simulation::from_scenario(&sc).unwrap();
    let model = sim.model().clone();
    let baseline = sc.initial.non_wetting_saturation;
    let detect = sc.analysis.detection_threshold;
    let ([x0, x1], [z0, z1]) = lens_box(&sc);
    let clay_id = sc.material_id("clay").unwrap();
    let centers: Vec<[f64; 3]> = (0..model.num_cells()).map(|c| model.grid.cell_center(c)).collect();
    let lens: Vec<usize> = (0..model.num_cells()).filter(|&c| model.map.material(c) == clay_id).collect();
    let above: Vec<usize> = (0..model.num_cells())
        .filter(|&c| {
            let [x, z, _] = centers[c];
            x >= x0 && x <= x1 && z > z1 && z <= z1 + 0.25
        })
        .collect();
    // band crossed by the descending plume well above any pool on the lens
    let band: Vec<usize> = (0..model.num_cells())
        .filter(|&c| (9.5..=9.7).contains(&centers[c][1]))
        .collect();

    let mut m = Morphology::default();
    let mut samples = Vec::new();
    for t in sc.report_schedule() {
        while sim.state().time < t {
            sim.step_towards(t).unwrap();
            let s = &sim.state().s_n;
            let now = sim.state().time;
            m.lens_touched += lens.iter().filter(|&&c| s[c] != baseline).count();
            let detected = |c: usize| s[c] > detect;
            let below_top_outside = (0..s.len()).any(|c| {
                let [x, z, _] = centers[c];
                detected(c) && z < z1 && (x < x0 || x > x1)
            });
            let beneath = (0..s.len()).any(|c| {
                let [x, z, _] = centers[c];
                detected(c) && z < z0 && x > x0 && x < x1
            });
            let passed = (0..s.len()).any(|c| detected(c) && centers[c][1] < z1);
            if below_top_outside {
                m.edge_at.get_or_insert(now);
            }
            if beneath {
                m.beneath_at.get_or_insert(now);
            }
            if passed {
                m.passed_at.get_or_insert(now);
            }
            if m.passed_at.is_none() {
                let incoming = band.iter().map(|&c| s[c]).fold(0.0, f64::max);
                let top = above.iter().map(|&c| s[c]).fold(0.0, f64::max);
                if incoming > detect && top / incoming > m.best_ratio {
                    m.best_ratio = top / incoming;
                    m.incoming_at_best = incoming;
                    m.above_at_best = top;
                }
            }
        }
        samples.push(sample(sim.model(), sim.state(), &sim.ledger(), baseline, &sc.analysis));
    }
    DeskRun {
        cells,
        csv: timeseries_to_string(&samples),
        samples,
        wall: start.elapsed(),
        steps: sim.steps(),
        morphology: m,
    }
}

fn shutoff(sc: &Scenario) -> f64 {
    sc.injection.iter().map(|i| i.end_s).fold(0.0, f64::max)
}

fn sample_at(run: &DeskRun, t: f64) -> &Sample {
    run.samples.iter().find(|s| s.time() == t).expect("report at shutoff")
}

fn mass_conservation(run: &DeskRun, sc: &Scenario) -> Outcome {
    let worst = run.samples.iter().map(|s| s.mass_error.abs()).fold(0.0, f64::max);
    let t_off = shutoff(sc);
    let at_off = sample_at(run, t_off).partition.total_mass;
    let drift = run
        .samples
        .iter()
        .filter(|s| s.time() >= t_off)
        .map(|s| ((s.partition.total_mass - at_off) / at_off).abs())
        .fold(0.0, f64::max);
    let injected = sc.injected_mass(sc.time.end_s);
    outcome(
        worst < 5e-3 && drift <= 1e-6 && secs(run.wall) < 300.0,
        format!(
            "{0}x{0}, {1} reports, {2} steps: worst |mass error| = {worst:.2e} (< 5e-3), post-shutoff drift = {drift:.2e} (<= 1e-6), \
             {injected:.1} kg injected; {3:.1} s (< 300 s)",
            run.cells,
            run.samples.len(),
            run.steps,
            secs(run.wall)
        ),
    )
}

fn morphology(run: &DeskRun) -> Outcome {
    let m = &run.morphology;
    let a = m.best_ratio >= 1.5;
    let b = match (m.edge_at, m.beneath_at) {
        (Some(e), Some(u)) => e < u,
        (Some(_), None) => true,
        _ => false,
    };
    let c = m.lens_touched == 0;
    let fmt = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{:.2} h", t / 3600.0));
    outcome(
        a && b && c,
        format!(
            "(a) above-lens max {:.3} vs incoming {:.3} = {:.2}x (>= 1.5x) before DNAPL passed the lens at {}; \
             (b) beyond edges at {}, beneath interior at {}; (c) {} lens cell-steps with DNAPL (0)",
            m.above_at_best,
            m.incoming_at_best,
            m.best_ratio,
            fmt(m.passed_at),
            fmt(m.edge_at),
            fmt(m.beneath_at),
            m.lens_touched
        ),
    )
}

fn sign_pattern(run: &DeskRun, sc: &Scenario, model: &Model) -> Outcome {
    let t_off = shutoff(sc);
    let depth = model.grid.extent(model.grid.vertical_axis());
    let deepest = depth - 0.5 * model.grid.spacing()[model.grid.vertical_axis()];
    let arrival = run
        .samples
        .iter()
        .find(|s| s.time() >= t_off && s.metrics.front_depth >= deepest - 1e-9)
        .map(|s| s.time());
    let end = arrival.unwrap_or(f64::INFINITY);
    let window: Vec<&Sample> = run.samples.iter().filter(|s| s.time() >= t_off && s.time() <= end).collect();
    let mut pool_up = Vec::new();
    let mut ganglia_down = Vec::new();
    for w in window.windows(2) {
        let (p, q) = (&w[0].partition, &w[1].partition);
        if q.pool_mass > p.pool_mass {
            pool_up.push((q.time, q.pool_mass - p.pool_mass));
        }
        if q.ganglia_mass < p.ganglia_mass {
            ganglia_down.push((q.time, q.ganglia_mass - p.ganglia_mass));
        }
    }
    let identity = run.samples.iter().all(|s| {
        let p = &s.partition;
        p.pool_mass + p.ganglia_mass + p.background_mass == p.total_mass
    });
    let list = |v: &[(f64, f64)]| {
        v.iter()
            .map(|(t, d)| format!("{:.1} h {d:+.3} kg", t / 3600.0))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        pool_up.is_empty() && ganglia_down.is_empty() && identity && arrival.is_some(),
        format!(
            "{} reports from shutoff to bottom arrival at {}: pool increases [{}], ganglia decreases [{}]; \
             pool + ganglia + background = total exactly at all {} samples: {identity}",
            window.len(),
            arrival.map_or("never".into(), |t| format!("{:.1} h", t / 3600.0)),
            list(&pool_up),
            list(&ganglia_down),
            run.samples.len()
        ),
    )
}

fn grid_convergence(fine: &DeskRun, coarse: &DeskRun, sc: &Scenario) -> Outcome {
    let t_off = shutoff(sc);
    let a = sample_at(coarse, t_off).metrics.front_depth;
    let b = sample_at(fine, t_off).metrics.front_depth;
    let rel = (a - b).abs() / b;
    outcome(
        rel < 0.05,
        format!(
            "front depth at shutoff: {}x{} {a:.3} m, {}x{} {b:.3} m, difference {:.2}% (< 5%)",
            coarse.cells,
            coarse.cells,
            fine.cells,
            fine.cells,
            100.0 * rel
        ),
    )
}

fn determinism(first: &DeskRun) -> Outcome {
    let sc = desk_scenario(first.cells);
    let start = Instant::now();
    let second = run_with(&sc, |_, _| Ok(())).unwrap();
    let csv = timeseries_to_string(&second.samples);
    let same = csv.as_bytes() == first.csv.as_bytes();
    outcome(
        same,
        format!(
            "two {0}x{0} runs: CSV {1} bytes vs {2} bytes, bitwise identical: {same} (second run {3:.1} s)",
            first.cells,
            first.csv.len(),
            csv.len(),
            secs(start.elapsed())
        ),
    )
}

fn report(id: u8, title: &str, o: &Outcome, failures: &mut Vec<u8>) {
    if !o.pass {
        failures.push(id);
    }
    println!("criterion {id} [{}] {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    // `cargo test -- --list` and similar harness probes
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = Vec::new();
    report(1, "hydrostatic equilibrium", &hydrostatic(), &mut failures);
    report(2, "Buckley-Leverett", &buckley_leverett(), &mut failures);
    report(3, "interface blocking", &interface_blocking(), &mut failures);

    let sc = desk_scenario(200);
    let model = Model::from_scenario(&sc).unwrap();
    let fine = desk_run(200);
    report(4, "mass conservation", &mass_conservation(&fine, &sc), &mut failures);
    report(5, "pooling and diversion", &morphology(&fine), &mut failures);
    report(6, "pool/ganglia sign pattern", &sign_pattern(&fine, &sc, &model), &mut failures);
    let coarse = desk_run(100);
    report(7, "grid convergence", &grid_convergence(&fine, &coarse, &sc), &mut failures);
    report(8, "determinism", &determinism(&fine), &mut failures);

    println!("acceptance: {} of 8 criteria passed", 8 - failures.len());
    if !failures.is_empty() {
        println!("acceptance: failed criteria {failures:?}");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
