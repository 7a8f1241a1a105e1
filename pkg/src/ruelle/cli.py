"""Command-line front end: ``ruelle <command> --config run.json --out DIR``.

Each command writes ``<command>.json`` (manifest with the resolved config,
tool version and results) and CSV sidecars into the output directory.
Exit codes: 0 success, 2 invalid configuration, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__

OUT_ENV = "RUELLE_OUT_DIR"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    v = float(x)
    if v == 0.0:
        v = 0.0  # drop the sign of negative zero
    return format(v, ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(x):
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def write_manifest(out: Path, command: str, cfg, results: dict, outputs: list[str], status: str = "ok") -> None:
    manifest = {
        "tool": "ruelle",
        "version": __version__,
        "command": command,
        "status": status,
        "config": cfg.resolved(),
        "results": results,
        "outputs": sorted(outputs),
    }
    (out / f"{command}.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def _word(grid, i) -> str:
    return " ".join(str(int(a)) for a in grid.words[int(i)])


class Run:
    """Shared state for one command invocation."""

    def __init__(self, command: str, cfg, out: Path):
        from .config import build_grid, build_measure, build_potential

        self.command = command
        self.cfg = cfg
        self.out = out
        self.outputs: list[str] = []
        self.measure = build_measure(cfg)
        if cfg.alphabet["kind"] != "path-space":
            self.grid = build_grid(cfg, self.measure)
            if cfg.potential is None:
                raise _config_error(f"command {command} needs a 'potential' section")
            self.f = build_potential(cfg.potential, self.measure)

    def csv(self, suffix: str, header, rows) -> None:
        name = f"{self.command}_{suffix}.csv"
        write_csv(self.out / name, header, rows)
        self.outputs.append(name)

    def eig_kwargs(self) -> dict:
        return {"tol": self.cfg.eigen_tol, "max_iter": self.cfg.max_iter}

    def measure_rows(self, mu):
        return [(int(i), _word(self.grid, i), float(w)) for i, w in zip(mu.index, mu.weights)]


def _config_error(msg):
    from .config import ConfigError

    return ConfigError(msg)


def cmd_eigen(run: Run) -> dict:
    from .transfer import eigen_triple, spectral_gap_estimate

    t = eigen_triple(run.f, run.grid, **run.eig_kwargs())
    gap = spectral_gap_estimate(run.f, t)
    run.csv("h", ["index", "word", "value"], [(i, _word(run.grid, i), v) for i, v in enumerate(t.h.flat)])
    run.csv("nu", ["index", "word", "weight"], run.measure_rows(t.nu))
    run.csv("history", ["iteration", "lower", "upper"], [(k + 1, lo, hi) for k, (lo, hi) in enumerate(t.history)])
    res = t.manifest()
    res.pop("history")
    res["spectral_gap"] = gap.as_dict()
    res["depth"] = run.grid.depth
    res["potential"] = run.f.describe()
    return res


def cmd_pressure(run: Run) -> dict:
    from .transfer import eigen_triple

    t = eigen_triple(run.f, run.grid, **run.eig_kwargs())
    run.csv("value", ["log_lambda", "lambda", "lower", "upper"], [(t.log_lam, t.lam, *t.bracket)])
    return {"pressure": t.log_lam, "lambda": t.lam, "bracket": list(t.bracket), "residuals": t.residuals}


def cmd_equilibrium(run: Run) -> dict:
    from .thermo import equilibrium_state, standard_candidates, variational_check

    kw = run.eig_kwargs()
    eq = equilibrium_state(run.f, run.grid, residual_tol=run.cfg.residual_tol, **kw)
    count = run.cfg.params("equilibrium")["candidates"]
    cands = standard_candidates(run.grid, run.cfg.seed, count)
    rep = variational_check(run.f, cands, run.grid, deficit_tol=run.cfg.variational_tol, **kw)
    run.csv("measure", ["index", "word", "weight"], run.measure_rows(eq.measure))
    run.csv(
        "variational",
        ["candidate", "entropy_estimate", "integral", "deficit", "invariance_residual"],
        [(r.name, r.entropy_estimate, r.integral, r.deficit, r.invariance_residual) for r in rep.rows],
    )
    return {**eq.summary(), "variational_ok": rep.ok, "marginal": eq.measure.marginal(1).tolist()}


def cmd_betascan(run: Run) -> dict:
    from .thermo import beta_scan

    betas = run.cfg.params("betascan")["betas"]
    scan = beta_scan(run.f, betas, run.grid, **run.eig_kwargs())
    n = run.grid.n
    rows = [(r.beta, r.log_lambda, r.mean_f, r.entropy, *r.marginal) for r in scan.rows]
    run.csv("table", ["beta", "log_lambda", "mean_f", "entropy", *[f"marginal_{a}" for a in range(n)]], rows)
    return {
        "m_estimate": scan.m_estimate,
        "monotone": scan.monotone(),
        "error": scan.error,
        "rows": len(scan.rows),
    }


def _kernel(run: Run):
    from .markov import build_kernel
    from .transfer import normalize_potential

    fbar, t = normalize_potential(run.f, run.grid, residual_tol=run.cfg.residual_tol, **run.eig_kwargs())
    return build_kernel(fbar, run.grid, run.cfg.residual_tol), t


def cmd_markov_sim(run: Run) -> dict:
    from .markov import simulate_chain, stationary_marginal_check

    p = run.cfg.params("markov-sim")
    k, _ = _kernel(run)
    x0 = None if p["start"] is None else run.grid.point(int(p["start"]))
    trace = simulate_chain(k, x0, p["n"], run.cfg.seed)
    run.csv("trace", ["step", "index", "word"], [(s, int(i), _word(run.grid, i)) for s, i in enumerate(trace.indices)])
    import numpy as np

    freq = np.bincount(trace.first_coordinates()[1:], minlength=run.grid.n) / trace.n
    res = {
        "steps": trace.n,
        "window_depth": k.window_depth,
        "normalization_residual": k.normalization_residual,
        "empirical_first_marginal": freq.tolist(),
        "stationary_first_marginal": (k.stationary.marginal(1) / k.stationary.total_mass).tolist(),
    }
    if k.fbar.depth is not None and k.fbar.depth <= 2:
        res["marginal_stationarity_residual"] = stationary_marginal_check(k).residual
    return res


def cmd_ergodicity(run: Run) -> dict:
    import numpy as np

    from .markov import geometric_ergodicity_fit

    p = run.cfg.params("ergodicity")
    k, _ = _kernel(run)
    rng = np.random.default_rng(run.cfg.seed)
    starts = sorted(set([0] + rng.choice(run.grid.size, size=max(0, p["starts"] - 1), replace=True).tolist()))
    fit = geometric_ergodicity_fit(k, starts, p["n_max"], p["fit_from"], cap=run.cfg.atom_cap)
    rows = [(s, n + 1, d) for s, curve in zip(starts, fit.distances) for n, d in enumerate(curve)]
    run.csv("distances", ["start", "n", "distance"], rows)
    return {**fit.as_dict(), "starts": starts}


def cmd_clt(run: Run) -> dict:
    import numpy as np

    from .config import build_potential
    from .markov import clt_check, clt_variance
    from .potential import first_coordinate

    p = run.cfg.params("clt")
    k, _ = _kernel(run)
    if p["xi"] is None:
        xi = first_coordinate(np.arange(run.grid.n) == 0)
    else:
        xi = build_potential(p["xi"], run.measure)
    var = clt_variance(k, xi, p["lag_max"])
    res = clt_check(k, xi, p["n"], p["samples"], run.cfg.seed, var)
    counts, edges = np.histogram(res.normalized_sums, bins=p["bins"])
    run.csv("histogram", ["bin_left", "bin_right", "count"], zip(edges[:-1], edges[1:], counts.tolist()))
    run.csv("autocovariance", ["lag", "covariance"], enumerate(var.autocov))
    return {**res.as_dict(), "s2": var.s2, "s2_untapered": var.s2_untapered, "variance_source": var.used}


def cmd_convexity(run: Run) -> dict:
    from .config import build_potential
    from .thermo import pressure_convexity_probe

    p = run.cfg.params("convexity")
    g = build_potential(p["g"], run.measure)
    rows, ok = pressure_convexity_probe(run.f, g, p["ts"], run.grid, **run.eig_kwargs())
    run.csv("table", ["t", "log_lambda", "chord", "slack"], [(r.t, r.log_lambda, r.chord, r.slack) for r in rows])
    return {"convex": ok, "min_slack": min(r.slack for r in rows)}


def cmd_paths_demo(run: Run) -> dict:
    import numpy as np

    from .paths import hausdorff_distance, mc_apply, path_potential, sample_path

    p = run.cfg.params("paths-demo")
    f = path_potential(p["J0"], p["r"], p["alpha"], p["K"])
    rng = np.random.default_rng(run.cfg.seed)
    count = max(p["paths"], f.K - 1)
    paths = [sample_path(p["dim"], p["segments"], rng) for _ in range(count)]
    rows = [(j, i + 1, i + 1, *q) for j, g in enumerate(paths) for i, q in enumerate(g.points)]
    run.csv("vertices", ["path", "index", "t", *[f"x{c}" for c in range(p["dim"])]], rows)
    shown = paths[: p["paths"]]
    D = [[hausdorff_distance(a, b) for b in shown] for a in shown]
    run.csv("hausdorff", ["i", "j", "distance"], [(i, j, D[i][j]) for i in range(len(shown)) for j in range(len(shown))])
    x = paths[: f.K - 1]
    value, stderr = mc_apply(f, lambda s: 1.0, x, p["samples"], run.cfg.seed)
    return {
        "potential": f.describe(),
        "potential_at_sample": f([paths[0], *x]) if f.K > 1 else 0.0,
        "bounds": [f.lower_bound, 0.0],
        "tail_bound": f.tail_bound,
        "operator_one": value,
        "operator_one_stderr": stderr,
    }


COMMANDS = {
    "eigen": cmd_eigen,
    "pressure": cmd_pressure,
    "equilibrium": cmd_equilibrium,
    "betascan": cmd_betascan,
    "markov-sim": cmd_markov_sim,
    "ergodicity": cmd_ergodicity,
    "clt": cmd_clt,
    "convexity": cmd_convexity,
    "paths-demo": cmd_paths_demo,
}


def run(command: str, config_path, out_dir, seed: int | None = None) -> int:
    from .config import ConfigError, RunConfig
    from .thermo import InvarianceError
    from .transfer import ConvergenceError

    if command not in COMMANDS:
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = RunConfig.load(config_path)
        if seed is not None:
            cfg.seed = seed
            cfg.validate()
        if command == "paths-demo" and cfg.alphabet["kind"] != "path-space":
            raise ConfigError("paths-demo needs alphabet.kind = 'path-space'")
        if command != "paths-demo" and cfg.alphabet["kind"] == "path-space":
            raise ConfigError(f"{command} needs a grid alphabet; path-space supports only paths-demo")
        state = Run(command, cfg, Path(out_dir))
    except (ConfigError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        results = COMMANDS[command](state)
    except ConvergenceError as exc:
        state.csv("history", ["iteration", "value_1", "value_2"], _history_rows(exc.history))
        write_manifest(out, command, cfg, {"error": str(exc)}, state.outputs, status="convergence-failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InvarianceError as exc:
        write_manifest(out, command, cfg, {"error": str(exc), "residual": exc.residual}, state.outputs,
                       status="convergence-failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OverflowError) as exc:
        # precondition failures found while computing: degenerate variance, unsupported case, ...
        write_manifest(out, command, cfg, {"error": str(exc)}, state.outputs, status="precondition-failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_manifest(out, command, cfg, results, state.outputs)
    return EXIT_OK


def _history_rows(history):
    rows = []
    for k, h in enumerate(history):
        if isinstance(h, (tuple, list)):
            rows.append((k + 1, *h[:2]) if len(h) >= 2 else (k + 1, h[0], ""))
        else:
            rows.append((k + 1, h, ""))
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruelle", description="Transfer-operator computations on sequence spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./ruelle-out)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None, help="cap numerical library threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.environ.get(OUT_ENV) or "ruelle-out"
    return run(args.command, args.config, out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
