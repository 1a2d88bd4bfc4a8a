"""Acceptance suite: one test per shipping criterion, each printing a
pass line with its measured numbers (run with ``pytest -v -s`` to see
them).  Statistical gates use fixed seeds so results are reproducible."""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from bgrass import engine, pg, posterior, select, simgen
from bgrass.cli import fit_simulated, main
from bgrass.engine import GibbsSampler, Hyperparams, Schedule
from bgrass.ontology import build_graph, correlation_from_precision, laplacian
from helpers import (
    ReferenceBss,
    geweke_zscores,
    make_cells,
    simulate_binomial_cells,
    toy_model,
)


def _report(num, name, detail):
    print(f"\nACCEPTANCE {num:02d} {name}: PASS [{detail}]")


def test_c01_pg_kernel_moments():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for b in (1, 5, 64, 500):
        for c in (0.0, 0.5, 2.0, 8.0):
            draws = pg.sample_pg(np.full(100_000, b), c, rng)
            se = np.sqrt(pg.variance(b, c) / draws.size)
            z = abs(draws.mean() - pg.mean(b, c)) / se
            worst = max(worst, z)
            assert z < 3.0, f"(b={b}, c={c}): z={z:.2f}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _report(1, "PG kernel moments", f"max |z|={worst:.2f}, {elapsed:.1f}s, backend={pg.current_backend()}")


def test_c02_correlation_exactness():
    g = build_graph({"a": {"G"}, "b": {"G"}}, ["a", "b"])
    corr = correlation_from_precision(laplacian(g), 1.0)
    np.testing.assert_allclose(corr.omega, [[1.0, 0.5], [0.5, 1.0]], atol=1e-12)

    worst = 0.0
    for seed in range(8):
        rng = np.random.default_rng(seed)
        j_count = int(rng.integers(5, 31))
        vocab = [f"t{j}" for j in range(j_count)]
        mapping = {}
        for term in vocab:
            gids = {f"G{g_}" for g_ in range(4) if rng.random() < 0.35}
            if gids:
                mapping[term] = gids
        corr = correlation_from_precision(
            laplacian(build_graph(mapping, vocab)),
            float(rng.choice([0.001, 0.1, 1.0, 10.0])),
        )
        err = np.max(np.abs(corr.precision @ corr.omega - np.eye(j_count)))
        worst = max(worst, err)
        assert err < 1e-8
    _report(2, "correlation exactness", f"2-node exact to 1e-12; worst identity residual {worst:.2e}")


def test_c03_geweke_joint_distribution():
    t0 = time.perf_counter()
    cells = toy_model(j_count=4)
    g = build_graph(
        {"ae0": {"G"}, "ae1": {"G"}, "ae2": {"G"}}, [f"ae{j}" for j in range(4)]
    )
    corr = correlation_from_precision(laplacian(g), 1.0)
    hyper = Hyperparams(a_alpha=3.0, b_alpha=3.0, k=3.0, pi=0.3)
    sampler = GibbsSampler(cells, corr, hyper)
    z = geweke_zscores(sampler, n_forward=20_000, n_sweeps=20_000, seed=0)
    elapsed = time.perf_counter() - t0
    assert z.size >= 12
    assert np.max(np.abs(z)) < 4.0, f"z={np.round(z, 2)}"
    assert elapsed < 300.0
    _report(3, "sampler joint-distribution test", f"{z.size} statistics, max |z|={np.abs(z).max():.2f}, {elapsed:.0f}s")


def test_c04_independence_limit_equivalence():
    rng = np.random.default_rng(2024)
    cells = simulate_binomial_cells(
        np.array([1.2, -0.8, 0.0]), np.full(3, -1.0), 400, rng
    )
    hyper = Hyperparams()
    sched = Schedule(iters=5500, burn_in=500, thin=10)
    corr = correlation_from_precision(np.eye(3), math.inf)
    worst = 1.0
    for seed in range(5):
        eng = GibbsSampler(cells, corr, hyper).run(sched, seed=1000 + seed)
        ref = ReferenceBss(cells, hyper).run(sched, seed=2000 + seed)
        for j in range(3):
            p = stats.ks_2samp(eng.beta[:, j], ref[:, j]).pvalue
            worst = min(worst, p)
            assert p > 0.01, f"seed {seed}, term {j}: KS p={p:.4f}"
    _report(4, "independence-limit equivalence", f"15 KS tests, min p={worst:.3f}")


def test_c05_sim1_mmse_ratio():
    t0 = time.perf_counter()
    hyper = Hyperparams()
    sched = Schedule(iters=1500, burn_in=500, thin=2)
    sq = {"bgrass": [], "bss": []}
    group_of = None
    for rep in range(20):
        data = simgen.generate_sim1(seed=rep, n_reports=5000)
        group_of = data.group_of
        for model, eps in (("bgrass", 0.01), ("bss", math.inf)):
            beta_hat, _, _ = fit_simulated(data, eps, hyper, sched, seed=rep, chains=1)
            sq[model].append((beta_hat - data.beta_true) ** 2)
    mmse_b = np.mean(sq["bgrass"], axis=0)
    mmse_s = np.mean(sq["bss"], axis=0)
    grouped = group_of > 0
    ratios = mmse_b[grouped] / mmse_s[grouped]
    elapsed = time.perf_counter() - t0
    assert ratios.mean() < 1.0
    assert elapsed < 3600.0
    _report(
        5,
        "small-design MMSE ratio",
        f"mean grouped ratio={ratios.mean():.3f}, {(ratios < 1).mean():.0%} of grouped "
        f"terms below 1, {elapsed:.0f}s",
    )


GRID = (0.001, 0.1, 1.0, math.inf)


def _sim2_replicate(eps_true, seed):
    hyper = Hyperparams()
    sched = Schedule(iters=1500, burn_in=500, thin=2)
    mapping, vocab, _ = simgen.block_groups([6] * 8, n_isolated=12)
    data = simgen.generate_sim2(mapping, vocab, eps_true, seed, n_reports=5000)
    fits = {}
    for eps in GRID:
        beta_hat, p_pos, stores = fit_simulated(data, eps, hyper, sched, seed=seed, chains=1)
        fits[eps] = {
            "dic": select.dic(stores, data.cells)["dic"],
            "beta_hat": beta_hat,
            "p_pos": p_pos,
            "delta_hat": posterior.pool(stores, "delta").mean(axis=0),
        }
    chosen = min(fits, key=lambda e: (round(fits[e]["dic"], 9), 0 if math.isinf(e) else -e))
    return data, fits, chosen


@pytest.fixture(scope="module")
def sim2_runs():
    strong = [_sim2_replicate(0.001, 100 + rep) for rep in range(12)]
    zero = [_sim2_replicate(math.inf, 200 + rep) for rep in range(10)]
    return strong, zero


def test_c06_sim2_rsse_auc(sim2_runs):
    strong, zero = sim2_runs

    def collect(runs):
        out = {"rsse_bg": [], "rsse_bss": [], "auc_bg": [], "auc_bss": []}
        for data, fits, chosen in runs:
            labels = data.beta_true > 0
            out["rsse_bg"].append(simgen.rsse(data.beta_true, fits[chosen]["beta_hat"]))
            out["rsse_bss"].append(simgen.rsse(data.beta_true, fits[math.inf]["beta_hat"]))
            out["auc_bg"].append(simgen.auc_positive(fits[chosen]["p_pos"], labels))
            out["auc_bss"].append(simgen.auc_positive(fits[math.inf]["p_pos"], labels))
        return {k: float(np.mean(v)) for k, v in out.items()}

    s = collect(strong)
    assert s["rsse_bg"] < s["rsse_bss"]
    assert s["auc_bg"] >= s["auc_bss"]
    z = collect(zero)
    gap = abs(z["auc_bg"] - z["auc_bss"])
    assert gap <= 0.02
    n_finite = sum(1 for _, _, chosen in strong if not math.isinf(chosen))
    assert n_finite >= 0.8 * len(strong)  # borrowing detected when present
    _report(
        6,
        "graph-prior gains at scale",
        f"strong: RSSE {s['rsse_bg']:.3f}<{s['rsse_bss']:.3f}, "
        f"AUC {s['auc_bg']:.4f}>={s['auc_bss']:.4f}; zero-corr AUC gap {gap:.4f}; "
        f"finite eps chosen {n_finite}/{len(strong)}",
    )


def test_c07_realized_fdr(sim2_runs):
    strong, zero = sim2_runs
    fdps = []
    for data, fits, chosen in strong + zero:
        selected, _ = posterior.fdr_select(fits[chosen]["delta_hat"], alpha=0.05)
        if selected.sum() == 0:
            fdps.append(0.0)
        else:
            false = selected & (data.beta_true == 0.0)
            fdps.append(float(false.sum() / selected.sum()))
    mean_fdp = float(np.mean(fdps))
    assert len(fdps) >= 20
    assert mean_fdp <= 0.10
    _report(7, "realized FDR control", f"mean FDP over {len(fdps)} replicates = {mean_fdp:.4f} at alpha=0.05")


def test_c08_default_schedule_convergence():
    t0 = time.perf_counter()
    hyper = Hyperparams()
    sched = Schedule()  # the default: 20000 iterations, 10000 burn-in, thin 2
    n_pass = 0
    max_seen = 0.0
    n_reps = 10
    for rep in range(n_reps):
        mapping, vocab, _ = simgen.block_groups([5] * 3, n_isolated=5)
        data = simgen.generate_sim2(mapping, vocab, 0.02, 700 + rep, n_reports=2000)
        graph = build_graph(data.mapping, data.cells.ae_vocabulary)
        corr = correlation_from_precision(laplacian(graph), 0.1)
        stores = engine.run_chains(data.cells, corr, hyper, sched, base_seed=rep, chains=3)
        rhat, _ = posterior.gelman_rubin([st.beta for st in stores])
        max_seen = max(max_seen, float(rhat.max()))
        if rhat.max() < 1.1:
            n_pass += 1
    assert n_pass >= 0.9 * n_reps
    _report(
        8,
        "convergence at default schedule",
        f"{n_pass}/{n_reps} replicates with max R_c < 1.1 (worst {max_seen:.4f}), "
        f"{time.perf_counter() - t0:.0f}s",
    )


def test_c09_cli_determinism(tmp_path):
    data = simgen.generate_sim1(seed=31, n_reports=600, intercept=-2.0, keep_reports=True)
    a_mat, v_vec, cov = data.reports
    reports = tmp_path / "reports.csv"
    ontology_path = tmp_path / "ontology.csv"
    simgen.write_report_rows(reports, a_mat, v_vec, cov, data.cells.ae_vocabulary)
    simgen.write_ontology_csv(ontology_path, data.mapping)
    cfg = {
        "reports": str(reports),
        "ontology": str(ontology_path),
        "schema": {
            "report_id": "report_id",
            "vaccine": "vaccine",
            "ae_list": "ae_terms",
            "vaccine_map": {"0": 0, "1": 1},
        },
        "filters": {"min_ae_count": 5},
        "schedule": {"iters": 400, "burn_in": 100, "thin": 2},
        "chains": 2,
        "seed": 77,
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    for run in ("r1", "r2"):
        rc = main(
            ["fit", "--config", str(cfg_path), "--outdir", str(tmp_path / run),
             "--epsilon", "1.0", "--threads", "1", "--allow-nonconverged"]
        )
        assert rc in (0, 3)
    b1 = (tmp_path / "r1" / "summary.csv").read_bytes()
    b2 = (tmp_path / "r2" / "summary.csv").read_bytes()
    assert b1 == b2
    _report(9, "seeded reruns byte-identical", f"summary.csv {len(b1)} bytes equal")


def test_c10_full_scale_runtime():
    j_count, s_count = 346, 48
    rng = np.random.default_rng(0)
    sizes = [4] * 60 + [5] * 8
    mapping, vocab, _ = simgen.block_groups(sizes, n_isolated=j_count - sum(sizes))
    graph = build_graph(mapping, vocab)
    corr = correlation_from_precision(laplacian(graph), 0.1)

    levels = np.array(
        np.meshgrid([0, 1], [0, 1, 2, 3], [0, 1, 2], [0, 1], indexing="ij")
    ).reshape(4, -1).T
    X = np.zeros((s_count, 6))
    X[:, 0] = 1.0
    X[:, 1] = levels[:, 0]
    X[:, 2:5] = np.eye(4)[levels[:, 1]][:, 1:]
    X[:, 5] = levels[:, 2] == 1
    V = levels[:, 3].astype(float)
    n = rng.integers(800, 1400, size=s_count)
    base = rng.normal(-3.0, 0.4, size=(1, j_count)) + 0.3 * rng.standard_normal((s_count, j_count))
    y = rng.binomial(n[:, None], 1.0 / (1.0 + np.exp(-base)))
    cells = make_cells(X, V, n, y, vocab=vocab)

    sched = Schedule()  # 20000 / 10000 / thin 2
    t0 = time.perf_counter()
    stores = engine.run_chains(cells, corr, Hyperparams(), sched, base_seed=5, chains=3)
    elapsed = time.perf_counter() - t0
    assert all(st.n_draws == sched.n_draws for st in stores)
    assert elapsed < 1800.0
    _report(
        10,
        "full-scale runtime budget",
        f"J={j_count}, S={s_count}, 3x{sched.iters} iterations in {elapsed / 60:.1f} min "
        f"({elapsed / (3 * sched.iters) * 1e3:.1f} ms/sweep, single worker)",
    )
