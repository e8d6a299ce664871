"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the PASS/FAIL line of
every criterion as it completes (captured output appears only for failures
otherwise).  The expensive scenario artifacts (calibrated drives, skin-depth
tables, transient oracles) are built once per module and shared.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from lamhb import analytic, bench, fe1d, hbsolver, homog, lut as lut_mod, material
from lamhb.analytic import eddy_loss_density_linear, skin_depth
from lamhb.bench import Scenario, calibrate_flux_drive, generate_scenario_lut
from lamhb.fe1d import Drive, StackGeometry, build_homogenized_mesh, build_stack_mesh
from lamhb.hbsolver import HarmonicSet, SolverOptions, hb_solve
from lamhb.homog import HomogenizationParams, ModifiedWavenumbers

SIGMA = 10.4e6
D = 5e-4
GAMMA = 0.985
FREQS = (50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0)
THREADS = 4


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# Shared expensive artifacts


@pytest.fixture(scope="module")
def steel():
    return material.BHCurve(material.PAPER_COLD_ROLLED_STEEL)


@pytest.fixture(scope="module")
def stack():
    return StackGeometry(n_laminations=10, d=D,
                         d_ins=D * (1.0 / GAMMA - 1.0))


def _run_scenario_cells(scenario):
    """(f, mode) -> metrics for the requested scenario, plus oracle data."""
    out = {}
    for f in scenario.freqs:
        cells, _, _ = bench._frequency_cells(scenario, f)
        for c in cells:
            out[(f, c.mode)] = c
    return out


@pytest.fixture(scope="module")
def scenario_a(steel, stack, tmp_path_factory):
    """Moderate saturation: B-bar_max = 1.5 T at 50 Hz, ac:dc = 1:5."""
    drive, record = calibrate_flux_drive(stack, steel, SIGMA, 1.5, 0.2)
    lut = generate_scenario_lut(stack, steel, SIGMA, FREQS, 5.0,
                                n_levels=25, threads=THREADS)
    scenario = Scenario(
        name="A", geometry=stack, curve=steel, sigma=SIGMA, drive=drive,
        freqs=FREQS, modes=("hom_naive_dc", "hom_refined_dc"), lut=lut,
        calibration=record,
        output_dir=tmp_path_factory.mktemp("acceptance_A"))
    cells = _run_scenario_cells(scenario)
    return scenario, cells


@pytest.fixture(scope="module")
def scenario_a2(steel, stack, tmp_path_factory):
    """High saturation: B-bar_max = 1.75 T at 50 Hz, ac:dc = 2:5."""
    freqs = (50.0, 500.0, 1000.0, 5000.0, 10000.0)
    drive, record = calibrate_flux_drive(stack, steel, SIGMA, 1.75, 0.4)
    lut = generate_scenario_lut(stack, steel, SIGMA, freqs, 2.5,
                                n_levels=25, threads=THREADS)
    scenario = Scenario(
        name="A2", geometry=stack, curve=steel, sigma=SIGMA, drive=drive,
        freqs=freqs, modes=("hom_refined_dc",), lut=lut, calibration=record,
        output_dir=tmp_path_factory.mktemp("acceptance_A2"))
    cells = _run_scenario_cells(scenario)
    return scenario, cells


# ---------------------------------------------------------------------------
# Criterion 1: tensor limit identities


def test_criterion_1_tensor_limits():
    rng = np.random.default_rng(1)
    params = HomogenizationParams.from_stacking_factor(
        d=D, gamma=GAMMA, sigma=SIGMA, nu_ins=material.NU_VAC)
    worst_red = 0.0
    for _ in range(100):
        nu = 10 ** rng.uniform(2, 4)
        omega = 10 ** rng.uniform(2, 6)
        w = homog.standard_wavenumbers(params, nu, omega)
        a = homog.original_reluctivity_xy(params, nu, omega)
        b = homog.modified_reluctivity_xy(params, nu, omega, w)
        worst_red = max(worst_red, abs(a - b) / abs(a))

    nu = 400.0
    nutld = homog.mixed_reluctivity_xy(params, nu)
    omega = 2 * nutld / (GAMMA * SIGMA * (params.d_tilde / 1e-4) ** 2)
    entry = homog.original_reluctivity_xy(params, nu, omega)
    dev_limit = abs(entry - nutld) / nutld

    ok = worst_red <= 1e-12 and dev_limit <= 1e-6
    report("1 tensor limit identities", ok,
           f"reduction {worst_red:.2e} (tol 1e-12), "
           f"dc limit {dev_limit:.2e} (tol 1e-6)")
    assert worst_red <= 1e-12
    assert dev_limit <= 1e-6


# ---------------------------------------------------------------------------
# Criterion 2: construction identity


def test_criterion_2_construction_identity(steel):
    rng = np.random.default_rng(2)
    # loss formula vs |J|^2 quadrature over random draws
    worst_quad = 0.0
    for _ in range(100):
        nu = 10 ** rng.uniform(2, 4)
        sigma = 10 ** rng.uniform(6, 7.5)
        d = 10 ** rng.uniform(-4, -2.5)
        omega = 2 * math.pi * 10 ** rng.uniform(1, 4.5)
        h0 = 10 ** rng.uniform(1, 3.5)
        delta = skin_depth(nu, sigma, omega)
        k = (1 + 1j) / delta

        def j_sq(z):
            return abs(-k * h0 * np.sinh(k * z) / np.cosh(k * d / 2)) ** 2

        q, _ = quad(j_sq, -d / 2, d / 2, limit=400)
        ana = eddy_loss_density_linear(h0, sigma, d, delta)
        worst_quad = max(worst_quad, abs(q / (2 * sigma * d) - ana) / ana)

    # homogenized harmonic-balance loss of a linear sheet vs the formula
    f = 1000.0
    h0 = 500.0
    lin = material.LinearMaterial(400.0)
    sheet = StackGeometry(n_laminations=1, d=D)
    params = HomogenizationParams.from_stacking_factor(
        d=D, gamma=1.0, sigma=SIGMA, nu_ins=material.NU_VAC)
    mesh = build_homogenized_mesh(sheet, params, n_elements=3)
    sol = hb_solve(mesh, lin, Drive(h_dc=0.0, h_ac=h0, f_f=f),
                   HarmonicSet(1, "odd_only"),
                   SolverOptions(mode="hom_original", n_time_samples=16),
                   geometry=sheet)
    loss_hb = hbsolver.solution_loss(sol)
    oracle = eddy_loss_density_linear(
        h0, SIGMA, D, skin_depth(400.0, SIGMA, 2 * math.pi * f)) * D
    dev_hb = abs(loss_hb - oracle) / oracle

    ok = worst_quad <= 1e-8 and dev_hb <= 1e-6
    report("2 construction identity", ok,
           f"quadrature {worst_quad:.2e} (tol 1e-8), "
           f"hb-vs-formula {dev_hb:.2e} (tol 1e-6)")
    assert worst_quad <= 1e-8
    assert dev_hb <= 1e-6


# ---------------------------------------------------------------------------
# Criterion 3: oracle validation


def test_criterion_3_oracle_validation():
    lin = material.LinearMaterial(400.0)
    sheet = StackGeometry(n_laminations=1, d=D)
    f = 50.0
    omega = 2 * math.pi * f
    delta = skin_depth(400.0, SIGMA, omega)
    mesh = build_stack_mesh(sheet, SIGMA, lam_h=min(delta / 2, D / 4))
    drive = Drive(h_dc=0.0, h_ac=500.0, f_f=f)
    res = fe1d.transient_solve(mesh, lin, drive, steps_per_period=400,
                               n_periods=3)
    idx = res.final_period()
    phase = np.exp(-1j * omega * res.t[idx])
    coeff = (res.b[idx] * phase[:, None]).mean(axis=0)
    k = (1 + 1j) / delta
    b_s = 500.0 / 400.0

    def a_exact(z):
        return b_s * np.sinh(k * z) / (k * np.cosh(k * D / 2))

    z_local = mesh.nodes - D / 2
    b_avg = np.diff(a_exact(z_local)) / mesh.lengths
    l2 = np.linalg.norm(2 * coeff - b_avg) / np.linalg.norm(b_avg)

    # dt-convergence order on the final-period losses (Richardson triplet)
    f2 = 1000.0
    delta2 = skin_depth(400.0, SIGMA, 2 * math.pi * f2)
    mesh2 = build_stack_mesh(sheet, SIGMA, lam_h=delta2 / 4)
    drive2 = Drive(h_dc=0.0, h_ac=500.0, f_f=f2)
    losses = {}
    for steps in (100, 200, 400):
        r = fe1d.transient_solve(mesh2, lin, drive2, steps_per_period=steps,
                                 n_periods=3)
        losses[steps] = fe1d.compute_losses_transient(r)
    order = math.log2(abs(losses[100] - losses[200])
                      / abs(losses[200] - losses[400]))

    ok = l2 < 0.01 and 0.9 <= order <= 1.1
    report("3 oracle validation", ok,
           f"profile L2 {100 * l2:.3f}% (tol 1%), dt order {order:.3f} "
           f"(range [0.9, 1.1])")
    assert l2 < 0.01
    assert 0.9 <= order <= 1.1


# ---------------------------------------------------------------------------
# Criterion 4: fine-mesh HBFEM vs transient oracle


def test_criterion_4_fine_hbfem(steel):
    f = 1000.0
    sheet = StackGeometry(n_laminations=1, d=D)
    delta_in = skin_depth(400.0, SIGMA, 2 * math.pi * f)
    mesh = build_stack_mesh(sheet, SIGMA, lam_h=min(delta_in / 2, D / 4))
    drive = Drive(h_dc=430.0, h_ac=86.0, f_f=f)
    res = fe1d.transient_solve(mesh, steel, drive, steps_per_period=400,
                               n_periods=3, newton=True)
    b_max = fe1d.max_average_flux_density(res)
    loss_ref = fe1d.compute_losses_transient(res)
    w_ref = fe1d.compute_energy_transient(res)
    idx = res.final_period()

    sol = hb_solve(mesh, steel, drive, HarmonicSet(5),
                   SolverOptions(mode="fine_hbfem"))
    loss_hb = hbsolver.solution_loss(sol)
    w_hb = hbsolver.solution_energy_series(sol, res.t[idx])
    loss_err = abs(loss_hb - loss_ref) / loss_ref
    energy_err = float(np.max(np.abs(w_hb - w_ref[idx]) / w_ref[idx]))

    ok = loss_err < 0.05 and energy_err < 0.05 and 0.9 <= b_max <= 1.15
    report("4 fine-mesh HBFEM", ok,
           f"B-bar_max {b_max:.2f} T, loss err {100 * loss_err:.2f}% "
           f"(tol 5%), energy max err {100 * energy_err:.2f}% (tol 5%)")
    assert 0.9 <= b_max <= 1.15
    assert loss_err < 0.05
    assert energy_err < 0.05


# ---------------------------------------------------------------------------
# Criteria 5 and 6: moderate-saturation scenario trends


def test_criterion_5_loss_trend(scenario_a):
    scenario, cells = scenario_a
    refined_errs = {f: cells[(f, "hom_refined_dc")].loss_err_pct
                    for f in FREQS}
    naive_errs = {f: cells[(f, "hom_naive_dc")].loss_err_pct for f in FREQS}
    below_bound = all(e < 10.0 for e in refined_errs.values())
    ordered = all(refined_errs[f] < naive_errs[f]
                  for f in FREQS if f >= 1000.0)
    detail = ", ".join(f"{f:g}Hz: r={refined_errs[f]:.1f}%/n={naive_errs[f]:.1f}%"
                       for f in FREQS)
    report("5 loss trend (Table I analog)", below_bound and ordered, detail)
    assert below_bound, f"refined loss errors above 10%: {refined_errs}"
    assert ordered, "refined should beat naive at f >= 1 kHz"


def test_criterion_6_energy_trend(scenario_a):
    scenario, cells = scenario_a
    errs = {f: cells[(f, "hom_refined_dc")].energy_max_err_pct
            for f in FREQS}
    ok = all(e < 10.0 for e in errs.values())
    detail = ", ".join(f"{f:g}Hz: {errs[f]:.1f}%" for f in FREQS)
    report("6 energy trend (Table IV analog)", ok, detail)
    assert ok, (
        "max energy error exceeds 10% at some frequencies: "
        f"{ {f: round(e, 1) for f, e in errs.items() if e >= 10.0} }; "
        "the quasi-linear through-thickness reconstruction cannot track the "
        "saturated-front energy waveform of the flux-forced sheet at "
        "several kilohertz (see the decisions ledger)")


# ---------------------------------------------------------------------------
# Criterion 7: DoF reduction


def test_criterion_7_dof_reduction(scenario_a):
    scenario, _ = scenario_a
    rows = bench.dof_convergence_study(
        scenario, 10_000.0, resolved_factors=(4.0, 2.0, 1.0, 0.5, 0.25),
        hom_ladder=(1, 2, 4, 8), timestamp=False)
    ref = sorted(rows["reference"])
    hom = sorted(rows["hom_refined_dc"])
    ref_converged = bench.converged_dofs(ref)
    hom_converged = bench.converged_dofs(hom)
    ratio = ref_converged / hom_converged
    coarse_over = ref[0][1] > ref[-1][1]
    ok = ratio >= 10.0 and coarse_over
    report("7 DoF reduction (Table II analog)", ok,
           f"resolved converged at {ref_converged} DoFs, homogenized at "
           f"{hom_converged} DoFs (ratio {ratio:.0f}x, need >= 10x); "
           f"coarsest resolved overestimates: {coarse_over}")
    assert coarse_over, "coarsest resolved mesh should overestimate losses"
    assert ratio >= 10.0


# ---------------------------------------------------------------------------
# Criterion 8: high-saturation behavior


def test_criterion_8_high_saturation(scenario_a2):
    scenario, cells = scenario_a2
    freqs = scenario.freqs
    b_max = cells[(50.0, "reference")].b_max_ref
    errs = {f: cells[(f, "hom_refined_dc")].loss_err_pct for f in freqs}
    low = {f: e for f, e in errs.items() if f <= 1000.0}
    high = {f: e for f, e in errs.items() if f >= 5000.0}
    low_ok = all(e < 10.0 for e in low.values())
    degradation = max(high.values()) > max(low.values())
    detail = (f"B-bar_max {b_max:.2f} T; "
              + ", ".join(f"{f:g}Hz: {errs[f]:.2f}%" for f in freqs)
              + f"; degradation at 5-10 kHz: {degradation}")
    report("8 high-saturation degradation", low_ok and degradation, detail)
    assert 1.6 <= b_max <= 1.9
    assert low_ok, f"refined errors at <= 1 kHz must stay below 10%: {low}"
    assert degradation, (
        "no frequency degradation: with the family-matched, cell-consistent "
        "skin-depth calibration the refined mode stays uniformly accurate "
        "at 1.75 T in this flux-anchored 1-D setting; the deterioration the "
        "3-D study reports does not transfer (see the decisions ledger)")


# ---------------------------------------------------------------------------
# Criterion 9: parity and symmetry invariants


def test_criterion_9_parity_and_symmetry(steel):
    sheet = StackGeometry(n_laminations=1, d=D)
    mesh = build_stack_mesh(sheet, SIGMA, lam_h=D / 6)
    sol = hb_solve(mesh, steel, Drive(h_dc=0.0, h_ac=450.0, f_f=1000.0),
                   HarmonicSet(4), SolverOptions(mode="fine_hbfem"))
    fundamental = np.max(np.abs(sol.a[sol.order_index(1)]))
    even_leak = max(np.max(np.abs(sol.a[sol.order_index(n)]))
                    for n in (0, 2, 4)) / fundamental

    dc_imag = np.max(np.abs(sol.b[sol.order_index(0)].imag)) / max(
        np.max(np.abs(sol.b)), 1e-300)

    drive = Drive(h_dc=430.0, h_ac=86.0, f_f=1000.0)
    opts = SolverOptions(mode="fine_hbfem")
    s1 = hb_solve(mesh, steel, drive, HarmonicSet(3), opts)
    s2 = hb_solve(mesh, steel, drive, HarmonicSet(3), opts)
    deterministic = np.array_equal(s1.a, s2.a)

    ok = even_leak < 1e-10 and dc_imag < 1e-12 and deterministic
    report("9 parity and symmetry", ok,
           f"even leak {even_leak:.1e} (tol 1e-10), dc imag {dc_imag:.1e} "
           f"(tol 1e-12), rerun bitwise identical: {deterministic}")
    assert even_leak < 1e-10
    assert dc_imag < 1e-12
    assert deterministic


# ---------------------------------------------------------------------------
# Criterion 10: look-up table correctness


def test_criterion_10_lut(tmp_path):
    lin = material.LinearMaterial(400.0)
    freqs = (50.0, 500.0, 2000.0, 10_000.0)
    table = lut_mod.generate_lut(lin, SIGMA, D, freqs,
                                 drive_levels=[50.0, 150.0, 400.0],
                                 newton=False, threads=THREADS)
    worst = 0.0
    for f in freqs:
        delta = skin_depth(400.0, SIGMA, 2 * math.pi * f)
        _, dh = table.entries[f]
        worst = max(worst, float(np.max(np.abs(dh - delta) / delta)))

    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    lut_mod.save_lut(table, p1)
    lut_mod.save_lut(lut_mod.load_lut(p1), p2)
    byte_identical = p1.read_bytes() == p2.read_bytes()

    ok = worst < 0.01 and byte_identical
    report("10 LUT correctness", ok,
           f"worst analytic-depth deviation {100 * worst:.2f}% (tol 1%), "
           f"round trip byte-identical: {byte_identical}")
    assert worst < 0.01
    assert byte_identical
