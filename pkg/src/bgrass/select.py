"""Information-borrowing strength selection via DIC over an epsilon grid."""

import csv
import math
import sys
import warnings
from dataclasses import dataclass, field

from ._util import parallel_map
from .engine import plugin_deviance, run_chains
from .ontology import correlation_from_precision, laplacian

DEFAULT_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, math.inf)


def dic(stores, cells):
    """Deviance information criterion from one or more chains.

    Returns {"dic", "dbar", "pd"} with dbar the mean stored deviance and
    the plug-in deviance evaluated at the posterior-mean linear predictor
    (equivalently, at the means of alpha and of the composed beta, since
    the predictor is linear in both).
    """
    stores = [stores] if not isinstance(stores, (list, tuple)) else list(stores)
    total = sum(st.n_draws for st in stores)
    if total == 0:
        raise ValueError("empty draw store; DIC undefined")
    dbar = float(sum(st.deviance.sum() for st in stores) / total)
    alpha_hat = sum(st.alpha.sum(axis=0) for st in stores) / total
    beta_hat = sum(st.beta.sum(axis=0) for st in stores) / total
    d_hat = plugin_deviance(cells, alpha_hat, beta_hat)
    pd = dbar - d_hat
    if pd < 0:
        warnings.warn(f"negative effective parameter count p_D={pd:.3f}")
    return {"dic": dbar + pd, "dbar": dbar, "pd": pd}


@dataclass
class EpsilonGrid:
    """Per-epsilon DIC results and the selected value."""

    epsilons: list[float]
    results: list[dict]  # {"dic","dbar","pd"} or {"error": str}
    chosen: float = field(init=False)

    def __post_init__(self):
        best = None
        for eps, res in zip(self.epsilons, self.results):
            if "error" in res:
                continue
            # ties go to the larger epsilon (weaker borrowing)
            if best is None or res["dic"] < best[1] or (res["dic"] == best[1] and eps > best[0]):
                best = (eps, res["dic"])
        if best is None:
            raise RuntimeError("every epsilon in the grid failed")
        self.chosen = best[0]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "dbar", "pd", "dic", "chosen", "error"])
            for eps, res in zip(self.epsilons, self.results):
                label = "inf" if math.isinf(eps) else repr(eps)
                if "error" in res:
                    writer.writerow([label, "", "", "", "", res["error"]])
                else:
                    writer.writerow(
                        [
                            label,
                            f"{res['dbar']:.6f}",
                            f"{res['pd']:.6f}",
                            f"{res['dic']:.6f}",
                            int(eps == self.chosen),
                            "",
                        ]
                    )


def _fit_one_epsilon(args):
    cells, lap, hyper, schedule, base_seed, chains, eps_index, eps = args
    corr = correlation_from_precision(lap, eps)
    stores = run_chains(
        cells, corr, hyper, schedule, base_seed, chains=chains, context=(eps_index,)
    )
    return dic(stores, cells)


def grid_search(cells, graph, hyper, schedule, base_seed, grid=DEFAULT_GRID, chains=3, threads=1):
    """Fit the full sampler at every epsilon and pick the smallest DIC.

    Failed epsilons are recorded and skipped; selection runs over the
    survivors.  Each epsilon gets its own deterministic seed context, so
    the search result depends only on (base_seed, grid).
    """
    grid = list(grid)
    if not grid:
        raise ValueError("epsilon grid is empty")
    lap = laplacian(graph)
    tasks = [
        (cells, lap, hyper, schedule, base_seed, chains, i, eps)
        for i, eps in enumerate(grid)
    ]
    results = []
    for i, res in enumerate(parallel_map(_try_fit, tasks, threads=threads)):
        if isinstance(res, dict) and "error" in res:
            print(f"epsilon={grid[i]}: failed: {res['error']}", file=sys.stderr)
        results.append(res)
    return EpsilonGrid(epsilons=grid, results=results)


def _try_fit(args):
    try:
        return _fit_one_epsilon(args)
    except Exception as exc:  # chain failure marks this epsilon, not the run
        return {"error": f"{type(exc).__name__}: {exc}"}
