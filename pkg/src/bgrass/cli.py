"""Command-line pipeline: fit, simulate, validate.

Configuration lives in a single JSON file (echoed verbatim into the run
manifest); command-line flags override file values.  Progress goes to
stderr, human summaries to stdout, machine-readable results to files in
the run directory: summary.csv, enrichment.csv, grid.csv,
diagnostics.json, draws.bin, manifest.json.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__, engine, ingest, ontology, posterior, select, simgen
from ._util import file_sha256, parallel_map

DEFAULTS = {
    "filters": {
        "min_ae_count": 25,
        "age_breaks": None,
        "age_covariate": None,
        "min_age": None,
        "reference_levels": {},
    },
    "hyperparams": {"a_alpha": 0.5, "b_alpha": 0.5, "k": 1.0, "pi": 0.5},
    "epsilon_grid": [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, "inf"],
    "epsilon": None,
    "schedule": {"iters": 20000, "burn_in": 10000, "thin": 2},
    "chains": 3,
    "seed": 20210101,
    "fdr_alpha": 0.01,
    "effect_threshold": math.log(2.0),
    "min_group_size": 20,
    "negative_controls": None,
}


def _merge(base, override):
    out = dict(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    cfg = _merge(DEFAULTS, raw)
    for req in ("reports", "ontology", "schema"):
        if req not in cfg:
            raise ValueError(f"config is missing required key {req!r}")
    return cfg


def _parse_epsilon(value):
    if value in ("inf", "Inf", "INF", None):
        return math.inf if value is not None else None
    return float(value)


def _schema_from_config(cfg):
    sc = cfg["schema"]
    return ingest.ReportSchema(
        report_id=sc["report_id"],
        vaccine=sc["vaccine"],
        ae_list=sc["ae_list"],
        vaccine_map={k: int(v) for k, v in sc["vaccine_map"].items()},
        covariates=tuple(sc.get("covariates", ())),
        delimiter=sc.get("delimiter", ","),
        ae_delimiter=sc.get("ae_delimiter", ";"),
    )


def _build_cells(cfg):
    schema = _schema_from_config(cfg)
    parsed = ingest.parse_reports(cfg["reports"], schema)
    for line in parsed.diagnostics[:20]:
        print(f"reports: {line}", file=sys.stderr)
    if len(parsed.diagnostics) > 20:
        print(f"reports: ... {len(parsed.diagnostics)} rows skipped total", file=sys.stderr)

    filters = cfg["filters"]
    age_idx = None
    if filters.get("age_covariate") is not None:
        age_idx = schema.covariates.index(filters["age_covariate"])
    exclusions = []
    if filters.get("min_age") is not None:
        if age_idx is None:
            raise ValueError("min_age filter needs filters.age_covariate")
        min_age = float(filters["min_age"])
        idx = age_idx
        exclusions.append(lambda rec: float(rec.covariates[idx]) < min_age)

    cells = ingest.filter_and_stratify(
        parsed.records,
        min_ae_count=int(filters.get("min_ae_count", 0)),
        age_breaks=filters.get("age_breaks"),
        age_index=age_idx,
        exclusions=exclusions,
        reference_levels=filters.get("reference_levels") or {},
        covariate_names=schema.covariates,
    )
    return cells, parsed


def _progress_printer(label):
    def cb(it, total):
        print(f"{label}: iteration {it}/{total}", file=sys.stderr)

    return cb


def _chain_progress(schedule, label):
    every = max(schedule.iters // 4, 1)
    return (every, _progress_printer(label))


def cmd_fit(args):
    cfg = load_config(args.config)
    if args.epsilon is not None:
        cfg["epsilon"] = args.epsilon
    if args.seed is not None:
        cfg["seed"] = args.seed
    outdir = args.outdir or cfg.get("output_dir")
    if not outdir:
        raise ValueError("no output directory (config output_dir or --outdir)")
    os.makedirs(outdir, exist_ok=True)

    cells, parsed = _build_cells(cfg)
    mapping = ingest.parse_ontology(cfg["ontology"])
    graph = ontology.build_graph(mapping, cells.ae_vocabulary)
    hyper = engine.Hyperparams(**cfg["hyperparams"])
    schedule = engine.Schedule(**cfg["schedule"])
    chains = int(cfg["chains"])
    seed = int(cfg["seed"])

    print(
        f"fit: {cells.counts['retained']} reports, {cells.n_strata} strata, "
        f"{cells.n_terms} terms, {graph.n_edges} edges",
        file=sys.stderr,
    )

    fixed_eps = _parse_epsilon(cfg.get("epsilon"))
    grid_path = os.path.join(outdir, "grid.csv")
    if fixed_eps is None:
        grid = [_parse_epsilon(e) for e in cfg["epsilon_grid"]]
        result = select.grid_search(
            cells, graph, hyper, schedule, seed, grid=grid, chains=chains,
            threads=args.threads,
        )
        result.write_csv(grid_path)
        chosen = result.chosen
        print(f"fit: DIC selected epsilon={chosen}", file=sys.stderr)
    else:
        chosen = fixed_eps
        with open(grid_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "dbar", "pd", "dic", "chosen", "error"])
            writer.writerow(["inf" if math.isinf(chosen) else repr(chosen), "", "", "", 1, "fixed"])

    corr = ontology.correlation_from_precision(ontology.laplacian(graph), chosen)
    sampler_args = [(cells, corr, hyper, schedule, seed, c) for c in range(chains)]
    stores = parallel_map(_run_final_chain, sampler_args, threads=args.threads)

    summary = posterior.summarize(stores, cells.ae_vocabulary)
    rhat, degenerate = posterior.gelman_rubin([st.beta for st in stores])
    summary.rhat, summary.rhat_degenerate = rhat, degenerate

    alpha_fdr = float(cfg["fdr_alpha"])
    effect_thr = float(cfg["effect_threshold"])
    flag_fdr, _ = posterior.fdr_select(
        summary.delta_hat, alpha_fdr, effect=summary.beta_mean, effect_threshold=effect_thr
    )
    summary.flags["fdr"] = flag_fdr
    if cfg.get("negative_controls"):
        with open(cfg["negative_controls"], encoding="utf-8") as fh:
            nc_terms = [line.strip() for line in fh if line.strip()]
        nc_idx = posterior.resolve_nc_terms(cells.ae_vocabulary, nc_terms)
        summary.ncprob = posterior.nc_adjust(posterior.pool(stores, "beta"), nc_idx)
        flag_nc, _ = posterior.fdr_select(
            summary.ncprob, alpha_fdr, effect=summary.beta_mean, effect_threshold=effect_thr
        )
        summary.flags["nc"] = flag_nc

    enrich = posterior.enrichment(
        posterior.pool(stores, "delta"), graph.groups, min_group_size=int(cfg["min_group_size"])
    )
    enrich_flags = {}
    if enrich:
        gids = sorted(enrich)
        scores = np.array([enrich[g]["score"] for g in gids])
        mask, _ = posterior.fdr_select(scores, alpha_fdr)
        enrich_flags = dict(zip(gids, mask))
    posterior.write_enrichment_csv(os.path.join(outdir, "enrichment.csv"), enrich, enrich_flags)
    summary.write_csv(os.path.join(outdir, "summary.csv"))

    max_rhat = float(np.max(rhat)) if rhat.size else 1.0
    converged = bool(max_rhat < 1.1)
    dic_info = select.dic(stores, cells)
    diagnostics = {
        "max_rhat": max_rhat,
        "n_rhat_degenerate": int(np.sum(degenerate)),
        "converged": converged,
        "epsilon": None if math.isinf(chosen) else chosen,
        "independent_prior": math.isinf(chosen),
        "dic": dic_info,
        "counts": cells.counts,
        "n_report_diagnostics": len(parsed.diagnostics),
    }
    with open(os.path.join(outdir, "diagnostics.json"), "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    draws_path = os.path.join(outdir, "draws.bin")
    manifest = {
        "version": __version__,
        "config": cfg,
        "inputs": {
            "reports_sha256": file_sha256(cfg["reports"]),
            "ontology_sha256": file_sha256(cfg["ontology"]),
        },
        "chosen_epsilon": None if math.isinf(chosen) else chosen,
    }
    engine.save_draws(stores, draws_path, os.path.join(outdir, "manifest.json"), manifest)

    n_signals = int(np.sum(flag_fdr))
    label = "independent-prior (epsilon=inf)" if math.isinf(chosen) else f"epsilon={chosen}"
    print(f"fit complete [{label}]: {n_signals} signals, max R_c={max_rhat:.4f} -> {outdir}")
    if not converged and not args.allow_nonconverged:
        print(f"error: max R_c={max_rhat:.4f} >= 1.1; rerun longer or pass "
              "--allow-nonconverged", file=sys.stderr)
        return 3
    return 0


def _run_final_chain(args):
    cells, corr, hyper, schedule, seed, chain = args
    sampler = engine.GibbsSampler(cells, corr, hyper)
    label = f"chain {chain}"
    return sampler.run(
        schedule, engine.chain_seed(seed, chain), progress=_chain_progress(schedule, label)
    )


def cmd_simulate(args):
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    hyper = engine.Hyperparams()
    schedule = engine.Schedule(iters=args.iters, burn_in=args.burn_in, thin=args.thin)
    eps_bgrass = _parse_epsilon(args.epsilon)
    rows = []  # long format: replicate, model, metric, value
    sq_err = {"bgrass": [], "bss": []}
    group_of = None
    for rep in range(args.replicates):
        seed = args.seed + rep
        if args.design == "sim1":
            data = simgen.generate_sim1(seed, n_reports=args.reports)
        else:
            sizes, isolated = _sim2_blocks(args.terms)
            mapping, vocab, _ = simgen.block_groups(sizes, n_isolated=isolated)
            data = simgen.generate_sim2(
                mapping, vocab, args.eps_true, seed,
                signal_frac=args.signal_frac, n_reports=args.reports,
            )
        group_of = data.group_of
        for model, eps in (("bgrass", eps_bgrass), ("bss", math.inf)):
            beta_hat, p_pos, _ = fit_simulated(
                data, eps, hyper, schedule, seed, chains=args.chains
            )
            m = simgen.metrics(data.beta_true, beta_hat, p_pos)
            sq_err[model].append(m["sq_errors"])
            rows.append((rep, model, "rsse", m["rsse"]))
            rows.append((rep, model, "auc", m["auc"] if m["auc"] is not None else ""))
        print(f"simulate: replicate {rep + 1}/{args.replicates} done", file=sys.stderr)

    with open(os.path.join(outdir, "metrics_long.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "model", "metric", "value"])
        writer.writerows(rows)

    mmse_b = np.mean(sq_err["bgrass"], axis=0)
    mmse_s = np.mean(sq_err["bss"], axis=0)
    with open(os.path.join(outdir, "mmse.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ae_index", "group", "mmse_bgrass", "mmse_bss", "ratio"])
        for j in range(mmse_b.size):
            ratio = mmse_b[j] / mmse_s[j] if mmse_s[j] > 0 else ""
            writer.writerow(
                [j, int(group_of[j]), f"{mmse_b[j]:.8f}", f"{mmse_s[j]:.8f}",
                 f"{ratio:.6f}" if ratio != "" else ""]
            )
    grouped = group_of > 0
    if grouped.any() and np.all(mmse_s[grouped] > 0):
        mean_ratio = float(np.mean(mmse_b[grouped] / mmse_s[grouped]))
        print(f"simulate: mean grouped MMSE ratio (model vs independent) = {mean_ratio:.4f}")
    print(f"simulate complete -> {outdir}")
    return 0


def _sim2_blocks(terms):
    # ~80% of terms in groups of 6, remainder isolated
    n_grouped = int(terms * 0.8) // 6 * 6
    return [6] * (n_grouped // 6), terms - n_grouped


def fit_simulated(data, epsilon, hyper, schedule, seed, chains=1):
    """Fit one simulated dataset at a fixed epsilon; returns estimates."""
    graph = ontology.build_graph(data.mapping, data.cells.ae_vocabulary)
    corr = ontology.correlation_from_precision(ontology.laplacian(graph), epsilon)
    eps_key = 0 if math.isinf(epsilon) else 1
    stores = engine.run_chains(
        data.cells, corr, hyper, schedule, seed, chains=chains, context=(eps_key,)
    )
    beta = posterior.pool(stores, "beta")
    return beta.mean(axis=0), (beta > 0).mean(axis=0), stores


def cmd_validate(args):
    cfg = load_config(args.config)
    for key in ("reports", "ontology"):
        if not os.path.exists(cfg[key]):
            print(f"error: {key} file not found: {cfg[key]}", file=sys.stderr)
            return 2
    if cfg.get("negative_controls") and not os.path.exists(cfg["negative_controls"]):
        print(f"error: negative_controls file not found: {cfg['negative_controls']}",
              file=sys.stderr)
        return 2
    try:
        cells, parsed = _build_cells(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    mapping = ingest.parse_ontology(cfg["ontology"])
    graph = ontology.build_graph(mapping, cells.ae_vocabulary)
    lap = ontology.laplacian(graph)
    print(f"reports: {cells.counts['retained']} retained, "
          f"{cells.counts['excluded']} excluded, "
          f"{len(parsed.diagnostics)} malformed rows")
    print(f"cells: S={cells.n_strata} strata, J={cells.n_terms} terms, "
          f"design columns={len(cells.design_columns)}")
    print(f"graph: |E|={graph.n_edges}, groups={len(graph.groups)}, "
          f"isolated={int(np.sum(graph.degrees == 0))}")
    for eps in (0.001, 1.0):
        shifted = lap + eps * np.eye(lap.shape[0])
        cond = float(np.linalg.cond(shifted))
        print(f"conditioning: cond(L + {eps}*I) = {cond:.4e}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bgrass",
        description="Graph-regularized Bayesian signal detection for vaccine adverse events",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="run the full pipeline on report files")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--outdir", default=None)
    p_fit.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_fit.add_argument("--epsilon", default=None,
                       help="fix epsilon (skips the DIC grid); 'inf' for independence")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--allow-nonconverged", action="store_true")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a synthetic-study comparison")
    p_sim.add_argument("--design", choices=("sim1", "sim2"), required=True)
    p_sim.add_argument("--replicates", type=int, default=1)
    p_sim.add_argument("--outdir", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--reports", type=int, default=5000)
    p_sim.add_argument("--terms", type=int, default=60, help="sim2 vocabulary size")
    p_sim.add_argument("--eps-true", type=_parse_epsilon, default=0.001)
    p_sim.add_argument("--signal-frac", type=float, default=0.5)
    p_sim.add_argument("--epsilon", default="0.1", help="model epsilon for the graph fit")
    p_sim.add_argument("--iters", type=int, default=2000)
    p_sim.add_argument("--burn-in", type=int, default=1000)
    p_sim.add_argument("--thin", type=int, default=2)
    p_sim.add_argument("--chains", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_val = sub.add_parser("validate", help="dry-run config, input, and graph checks")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
