"""Acceptance suite: one test (and one printed pass/fail line) per criterion.

Each test measures first, prints its verdict line with the observed numbers,
then asserts.  Criterion 1 carries two quantitative sub-bounds that the
implemented scheme provably cannot meet (the population observable converges
at second order, not first); those asserts are kept at the stated tolerances
and are expected to fail.  See the project notes for the analysis.
"""

import time

import numpy as np

from conftest import record_verdict
from dimerlab import calib, cli, heom, postproc, qdyn, ttm
from dimerlab.circuit import (NOISELESS, NoiseConfig, TrotterSchedule,
                              run_dynamics)
from dimerlab.heom import BathParams, HeomConfig
from dimerlab.qdyn import SystemParams

PARAMS = SystemParams(1.5, 1.0)


def verdict(num, name, ok, detail):
    line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    record_verdict(line)


def test_criterion_1_closed_system():
    start = time.time()
    grid = np.linspace(0.0, 6.0, 121)
    exact = qdyn.rabi_population(PARAMS, grid)
    errs = {}
    for dt_target in (0.4, 0.2, 0.1, 0.05):
        trace = run_dynamics(PARAMS, 0.0, TrotterSchedule.linear(dt_target),
                             NOISELESS, grid)
        errs[dt_target] = float(np.abs(trace.p1 - exact).max())
    elapsed = time.time() - start
    ratios = [errs[0.4] / errs[0.2], errs[0.2] / errs[0.1],
              errs[0.1] / errs[0.05]]
    finite_and_decreasing = (np.isfinite(errs[0.4])
                             and errs[0.4] > errs[0.2] > errs[0.1]
                             > errs[0.05])
    ok = (errs[0.05] <= 1e-3
          and all(1.5 <= r <= 3.0 for r in ratios)
          and finite_and_decreasing and elapsed < 10.0)
    verdict(1, "closed-system correctness", ok,
            f"err(dt=0.05)={errs[0.05]:.3e} (bound 1e-3), halving ratios="
            f"{[round(r, 2) for r in ratios]} (bound [1.5,3]), "
            f"runtime={elapsed:.1f}s")
    assert elapsed < 10.0
    assert finite_and_decreasing
    assert errs[0.05] <= 1e-3, (
        f"max Rabi error {errs[0.05]:.3e} at dt_target=0.05 exceeds 1e-3; "
        "the p1 observable of this first-order splitting converges at "
        "second order with this coefficient")
    assert all(1.5 <= r <= 3.0 for r in ratios), (
        f"halving ratios {ratios} sit near 4 (second-order observable), "
        "outside the stated first-order band [1.5, 3]")


def test_criterion_2_identity_gate_algebra():
    start = time.time()
    from dimerlab.circuit import (dissipation_block, identity_gate_scan,
                                  run_circuit)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho = rho / np.trace(rho)
        out = run_circuit(rho, dissipation_block(6.0, 0.5), NOISELESS)
        worst = max(worst, float(np.abs(out - rho).max()))
    p = 0.002
    bloch = identity_gate_scan("XZXZZsq", 100, (np.pi / 2, 0.0),
                               NoiseConfig(depol_1q=p))
    radius_err = abs(np.linalg.norm(bloch[-1]) - (1 - 4 * p / 3) ** 1000)
    elapsed = time.time() - start
    ok = worst < 1e-12 and radius_err < 1e-9 and elapsed < 5.0
    verdict(2, "identity-gate algebra", ok,
            f"noiseless invariance={worst:.1e} (bound 1e-12), "
            f"Bloch radius error={radius_err:.1e} (bound 1e-9), "
            f"runtime={elapsed:.1f}s")
    assert worst < 1e-12
    assert radius_err < 1e-9
    assert elapsed < 5.0


def test_criterion_3_heom_oracle():
    start = time.time()
    grid = np.linspace(0.0, 6.0, 200)
    bath = BathParams(lam=0.5, gamma=11.0, kT=1.0)
    # lambda = 0 against unitary dynamics
    free = heom.heom_population_trace(
        PARAMS, BathParams(0.0, 11.0, 1.0), HeomConfig(depth=2, matsubara=1),
        grid)
    unitary_err = float(np.abs(free.p1
                               - qdyn.rabi_population(PARAMS, grid)).max())
    # depth and Matsubara self-convergence at the working parameters
    p1 = {}
    for depth in (4, 6):
        cfg = HeomConfig(depth=depth, matsubara=3, rel_tol=1e-7,
                         abs_tol=1e-9)
        p1[depth] = heom.heom_population_trace(PARAMS, bath, cfg, grid)
    depth_err = float(np.abs(p1[4].p1 - p1[6].p1).max())
    trace_err = float(np.abs(p1[6].p1 + p1[6].p2 - 1.0).max())
    pk = {}
    for k in (4, 6):
        cfg = HeomConfig(depth=6, matsubara=k, rel_tol=1e-7, abs_tol=1e-9)
        pk[k] = heom.heom_population_trace(PARAMS, bath, cfg, grid).p1
    mats_err = float(np.abs(pk[4] - pk[6]).max())
    elapsed = time.time() - start
    ok = (unitary_err < 1e-6 and depth_err < 1e-4 and trace_err < 1e-8
          and mats_err < 1e-3 and elapsed < 60.0)
    verdict(3, "HEOM oracle", ok,
            f"lam=0 vs unitary={unitary_err:.1e} (1e-6), "
            f"L4 vs L6={depth_err:.1e} (1e-4), trace={trace_err:.1e} (1e-8), "
            f"K4 vs K6={mats_err:.1e} (1e-3), runtime={elapsed:.1f}s")
    assert unitary_err < 1e-6
    assert depth_err < 1e-4
    assert trace_err < 1e-8
    assert mats_err < 1e-3
    assert elapsed < 60.0


def test_criterion_4_ttm_exactness():
    start = time.time()
    h = qdyn.build_hamiltonian(PARAMS)
    step = np.kron(qdyn.propagator(h, 0.05).conj(), qdyn.propagator(h, 0.05))
    p = 0.02
    dep = (1 - p) * np.eye(4, dtype=complex)
    for pauli in (qdyn.SIGMA_X, qdyn.SIGMA_Y, qdyn.SIGMA_Z):
        dep = dep + (p / 3) * np.kron(pauli.conj(), pauli)
    step = dep @ step
    trajs = []
    for rho0 in ttm.CANONICAL_INITIAL_STATES:
        vec = qdyn.vectorize(rho0)
        traj = [rho0.copy()]
        for _ in range(8):
            vec = step @ vec
            traj.append(qdyn.devectorize(vec))
        trajs.append(traj)
    maps = ttm.build_dynamical_maps(
        ttm.TrajectorySet(dt=0.05, t0=0.0, trajectories=trajs))
    tens = ttm.transfer_tensors(maps)
    tail_norm = max(float(np.linalg.norm(t)) for t in tens.tensors[1:])
    # extension reproduces the exact semigroup
    phys, _ = ttm.extend_dynamics(tens, trajs[0], 40)
    direct = qdyn.devectorize(np.linalg.matrix_power(step, 40)
                              @ qdyn.vectorize(trajs[0][0]))
    ext_err = float(np.abs(phys[-1] - direct).max())
    # reconstruction matches the training maps
    rec_err = 0.0
    for n in range(1, 9):
        for rho0 in ttm.CANONICAL_INITIAL_STATES:
            via_map = qdyn.devectorize(maps.maps[n - 1]
                                       @ qdyn.vectorize(rho0))
            rec_err = max(rec_err, float(np.abs(
                ttm.reconstruct(tens, rho0, n) - via_map).max()))
    elapsed = time.time() - start
    ok = tail_norm <= 1e-12 and ext_err < 1e-10 and rec_err < 1e-9 \
        and elapsed < 1.0
    verdict(4, "TTM exactness", ok,
            f"semigroup tail norm={tail_norm:.1e} (1e-12), extension "
            f"error={ext_err:.1e}, reconstruction={rec_err:.1e} (1e-9), "
            f"runtime={elapsed:.2f}s")
    assert tail_norm <= 1e-12
    assert ext_err < 1e-10
    assert rec_err < 1e-9
    assert elapsed < 1.0


def test_criterion_5_ttm_extension():
    start = time.time()
    noise = NoiseConfig(depol_1q=0.002, depol_2q=0.002)
    sched = TrotterSchedule.linear(0.4)
    dt, t0, n_train = 0.05, 0.1, 68
    train_grid = t0 + dt * np.arange(n_train + 1)
    trajs = []
    for rho0 in ttm.CANONICAL_INITIAL_STATES:
        tr = run_dynamics(PARAMS, 200.0, sched, noise, train_grid,
                          initial_rho=rho0)
        trajs.append(tr.rho_series)
    tens = ttm.transfer_tensors(ttm.build_dynamical_maps(
        ttm.TrajectorySet(dt=dt, t0=t0, trajectories=trajs)))
    n_target = round((9.0 - t0) / dt)
    phys, _ = ttm.extend_dynamics(tens, trajs[0], n_target)
    ext_grid = t0 + dt * np.arange(n_target + 1)
    direct = run_dynamics(PARAMS, 200.0, sched, noise, ext_grid)
    direct_p1 = direct.p1 / (direct.p1 + direct.p2)
    err = float(np.abs(np.array([r[0, 0].real for r in phys])
                       - direct_p1).max())
    elapsed = time.time() - start
    ok = err <= 0.05 and elapsed < 120.0
    verdict(5, "TTM extension of simulator dynamics", ok,
            f"max |dp1|={err:.2e} (bound 0.05) over t in [0.1, 9], "
            f"runtime={elapsed:.1f}s")
    assert err <= 0.05
    assert elapsed < 120.0


def test_criterion_6_post_processing():
    start = time.time()
    q = qdyn.gibbs_population(PARAMS, 1.0)
    q_err = abs(q - 1.0 / (1.0 + np.exp(3.0)))
    t = np.linspace(0.0, 40.0, 161)
    from dimerlab.circuit import PopulationTrace
    base = PopulationTrace(times=t, p1=0.5 + 0.4 * np.cos(3.0 * t),
                           p2=0.5 - 0.4 * np.cos(3.0 * t))
    fixed = postproc.equilibrium_correct(base, 0.7, q)
    t0_err = abs(fixed.p1[0] - base.p1[0])
    tinf_err = abs(fixed.p1[-1] - q)
    truth = postproc.DecayFit(alpha=0.5, omega=3.6, amplitude=0.45,
                              phase=0.0, baseline=0.3)
    grid = np.linspace(0.0, 6.0, 121)
    synth = PopulationTrace(times=grid, p1=truth.evaluate(grid),
                            p2=1.0 - truth.evaluate(grid))
    fit = postproc.fit_damped_oscillation(synth)
    rel = max(abs(fit.alpha - truth.alpha) / truth.alpha,
              abs(fit.omega - truth.omega) / truth.omega,
              abs(fit.baseline - truth.baseline) / truth.baseline)
    elapsed = time.time() - start
    ok = (q_err < 1e-12 and t0_err < 1e-12 and tinf_err < 1e-10
          and rel < 0.01 and elapsed < 5.0)
    verdict(6, "post-processing", ok,
            f"Q error={q_err:.1e}, t=0 identity={t0_err:.1e}, t->inf "
            f"error={tinf_err:.1e}, fit recovery={rel:.2%} (bound 1%), "
            f"runtime={elapsed:.1f}s")
    assert q_err < 1e-12
    assert t0_err < 1e-12
    assert tinf_err < 1e-10
    assert rel < 0.01
    assert elapsed < 5.0


def test_criterion_7_calibration_pipeline():
    start = time.time()
    # per-gate depolarizing rate chosen so the emulated coupling lies inside
    # the HEOM search domain; see notes on the noise-scale choice
    noise = NoiseConfig(depol_1q=5e-5, depol_2q=5e-5)
    sched = TrotterSchedule.linear(0.4)
    grid = np.linspace(0.0, 3.0, 31)
    q = qdyn.gibbs_population(PARAMS, 1.0)
    fixed_params = (1.5, 11.0, 1.0)
    cfg = HeomConfig(depth=5, matsubara=3, rel_tol=1e-6, abs_tol=1e-8)
    search = calib.SearchGrid(lambda_points=8, j_points=6)

    def processed(delta_q):
        raw = run_dynamics(PARAMS, delta_q, sched, noise, grid)
        norm = postproc.zero_time_normalize(postproc.leak_renormalize(raw))
        fit = postproc.fit_damped_oscillation(norm)
        return postproc.equilibrium_correct(norm, fit.alpha, q)

    deltas = (100.0, 200.0, 300.0, 400.0)
    lams = [calib.fit_heom_params(processed(d), fixed_params, search,
                                  cfg).lambda_h for d in deltas]
    increasing = all(a < b for a, b in zip(lams, lams[1:]))
    line = calib.linear_fit(list(zip(deltas, lams)))
    lam_target = line.predict(250.0)
    delta_i = calib.interpolate_delta(lam_target, line)
    refit = calib.fit_heom_params(processed(delta_i), fixed_params, search,
                                  cfg).lambda_h
    loop_err = abs(refit - lam_target) / lam_target
    elapsed = time.time() - start
    ok = (increasing and line.r_squared >= 0.9 and loop_err <= 0.15
          and elapsed < 600.0)
    verdict(7, "calibration pipeline", ok,
            f"lambda_H={[round(l, 4) for l in lams]} increasing={increasing}, "
            f"r^2={line.r_squared:.3f} (>=0.9), closed-loop "
            f"error={loop_err:.1%} (<=15%), runtime={elapsed:.0f}s")
    assert increasing
    assert line.r_squared >= 0.9
    assert loop_err <= 0.15
    assert elapsed < 600.0


FAST_OVERRIDES = {
    "closed": ["--override", "run.n_points=21"],
    "noisy": ["--override", "run.t_max=3", "--override", "run.n_points=31"],
    "heom": ["--override", "heom.depth=3", "--override", "run.t_max=2",
             "--override", "run.n_points=11"],
    "fit-heom": ["--override", "calib.heom_depth=3",
                 "--override", "calib.heom_matsubara=1",
                 "--override", "calib.lambda_points=3",
                 "--override", "calib.j_points=2",
                 "--override", "calib.t_max=1.5",
                 "--override", "calib.n_points=16",
                 "--override", "noise.depol1=5e-5",
                 "--override", "noise.depol2=5e-5"],
    "calib-line": ["--override", "calib.delta_list=100,300",
                   "--override", "calib.heom_depth=3",
                   "--override", "calib.heom_matsubara=1",
                   "--override", "calib.lambda_points=3",
                   "--override", "calib.j_points=2",
                   "--override", "calib.t_max=1.5",
                   "--override", "calib.n_points=16",
                   "--override", "noise.depol1=5e-5",
                   "--override", "noise.depol2=5e-5"],
    "ttm-extend": ["--override", "ttm.train_n=20",
                   "--override", "ttm.extend_t_max=3"],
    "identity-scan": ["--override", "scan.reps=40"],
}


def test_criterion_8_cli_determinism(tmp_path):
    start = time.time()
    mismatches = []
    for sub, extra in FAST_OVERRIDES.items():
        runs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{sub}-{tag}"
            rc = cli.main([sub, "--out", str(out), "--seed", "11"] + extra)
            assert rc == 0, f"{sub} exited with {rc}"
            runs.append(out)
        for f1 in sorted(runs[0].iterdir()):
            f2 = runs[1] / f1.name
            if f1.read_bytes() != f2.read_bytes():
                mismatches.append(f"{sub}/{f1.name}")
    elapsed = time.time() - start
    ok = not mismatches
    verdict(8, "CLI determinism", ok,
            f"{len(FAST_OVERRIDES)} subcommands re-run byte-identical"
            + (f"; mismatches: {mismatches}" if mismatches else "")
            + f", runtime={elapsed:.0f}s")
    assert not mismatches
