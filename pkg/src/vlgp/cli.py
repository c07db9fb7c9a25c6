"""Command-line interface: simulate, fit, predict, loglik-grid, benchmark.

Data files are CSV with coordinate columns x1..xd, a response column z
and an optional truth column y. Reports are JSON; benchmark scores are
CSV rows with a fixed column order. Exit codes: 0 success, 1 the mode
search failed to converge, 2 usage or I/O errors.
"""

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .kernels import MaternParams, MeanModel
from .likelihoods import get_likelihood
from .oracle import DENSE_GUARD, dense_laplace, simulate_data, simulate_gp
from .scores import ScoreReport, crps_mean, dls, log_score, log_score_precision, mse, rrmse
from .vecchia import build_spec_iw, build_spec_lowrank, build_spec_rf
from .vl import integrated_loglik, loglik_grid, ml_estimate, predict, vl_inference

_EXIT_OK = 0
_EXIT_NOCONV = 1
_EXIT_USAGE = 2


class CliError(Exception):
    pass


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: missing file {exc.filename}", file=sys.stderr)
        return _EXIT_USAGE


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="vlgp",
        description="Vecchia-Laplace inference for generalized Gaussian processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--likelihood", choices=["gaussian", "bernoulli", "poisson", "gamma"])
    common.add_argument("--lik-param", type=float, help="tau2 for gaussian, shape for gamma")
    common.add_argument("--sigma2", type=float, help="kernel variance")
    common.add_argument("--range", type=float, help="kernel range")
    common.add_argument("--smoothness", type=float, help="kernel smoothness")
    common.add_argument("--beta", help="mean: constant or comma-separated trend coefficients")
    common.add_argument("--scheme", choices=["auto", "iw", "rf", "lowrank"])
    common.add_argument("--m", type=int, help="conditioning-set size")
    common.add_argument("--ordering", choices=["auto", "coordinate", "maxmin"])
    common.add_argument("--epsilon", type=float, help="RMS step tolerance")
    common.add_argument("--max-iter", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path")

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate a dataset")
    p_sim.add_argument("--n", type=int, help="number of locations")
    p_sim.add_argument("--dim", type=int, help="spatial dimension")
    p_sim.add_argument("--design", choices=["grid", "random"], help="location layout")
    p_sim.add_argument("--out-truth", help="CSV path for the latent truth")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", parents=[common], help="fit the latent posterior")
    p_fit.add_argument("--data", help="input CSV")
    p_fit.add_argument(
        "--estimate",
        nargs="?",
        const="variance,range",
        help="estimate parameters first; optionally a comma list of names",
    )
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", parents=[common], help="predict at new locations")
    p_pred.add_argument("--data", help="input CSV")
    p_pred.add_argument("--pred", help="CSV of prediction locations")
    p_pred.add_argument("--samples", type=int, help="posterior draws for data-scale summaries")
    p_pred.set_defaults(func=cmd_predict)

    p_grid = sub.add_parser("loglik-grid", parents=[common], help="likelihood surface on a grid")
    p_grid.add_argument("--data", help="input CSV")
    p_grid.add_argument("--grid", help='grid spec "param:lo:hi:steps,..."')
    p_grid.add_argument("--log-spaced", action="store_true", help="space grid values geometrically")
    p_grid.set_defaults(func=cmd_loglik_grid)

    p_bench = sub.add_parser("benchmark", parents=[common], help="score methods on simulations")
    p_bench.add_argument("--n", type=int)
    p_bench.add_argument("--n-list", help="comma-separated sample sizes (overrides --n)")
    p_bench.add_argument("--dim", type=int)
    p_bench.add_argument("--design", choices=["grid", "random"])
    p_bench.add_argument("--methods", help="comma list from laplace,vl-iw,vl-rf,lowrank")
    p_bench.add_argument("--m-list", help="comma-separated conditioning sizes")
    p_bench.add_argument("--replicates", type=int)
    p_bench.add_argument("--jobs", type=int, help="parallel replicate workers")
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


_DEFAULTS = {
    "likelihood": "poisson",
    "lik_param": None,
    "sigma2": 1.0,
    "range": 0.05,
    "smoothness": 0.5,
    "beta": "0.0",
    "scheme": "auto",
    "m": 20,
    "ordering": "auto",
    "epsilon": 1e-6,
    "max_iter": 50,
    "seed": 0,
    "n": 400,
    "dim": 2,
    "design": "grid",
    "replicates": 1,
    "jobs": 1,
    "samples": 0,
}

_TYPES = {
    "lik_param": float,
    "sigma2": float,
    "range": float,
    "smoothness": float,
    "m": int,
    "epsilon": float,
    "max_iter": int,
    "seed": int,
    "n": int,
    "dim": int,
    "replicates": int,
    "jobs": int,
    "samples": int,
}


def _load_config(path):
    cfg = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _settings(args):
    """Defaults, overridden by the config file, overridden by flags."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        for key, value in _load_config(args.config).items():
            merged[key] = _TYPES[key](value) if key in _TYPES else value
    for key, value in vars(args).items():
        if key in ("func", "command", "config") or value is None:
            continue
        merged[key] = value
    return merged


def _kernel(s):
    return MaternParams(s["sigma2"], s["range"], s["smoothness"])


def _likelihood(s):
    name = s["likelihood"]
    param = s["lik_param"] if name in ("gaussian", "gamma") else None
    if name == "gaussian" and param is None:
        raise CliError("gaussian likelihood needs --lik-param (tau2)")
    if name == "gamma" and param is None:
        raise CliError("gamma likelihood needs --lik-param (shape)")
    return get_likelihood(name, param)


def _mean(s):
    beta = [float(v) for v in str(s["beta"]).split(",")]
    return float(beta[0]) if len(beta) == 1 else MeanModel(np.asarray(beta))


def _spec_builder(scheme, dim):
    if scheme == "auto":
        scheme = "iw" if dim == 1 else "rf"
    return {
        "iw": build_spec_iw,
        "rf": build_spec_rf,
        "lowrank": build_spec_lowrank,
    }[scheme], scheme


def _ordering_arg(s, dim):
    ordering = s["ordering"]
    if ordering == "auto":
        return None
    if ordering == "coordinate" and dim != 1:
        raise CliError("coordinate ordering requires 1-D data")
    return ordering


def _design_coords(s, rng):
    n, dim = s["n"], s["dim"]
    if s["design"] == "grid":
        side = round(n ** (1.0 / dim))
        if side**dim != n:
            raise CliError(f"grid design needs n with an integer {dim}-th root, got {n}")
        axes = [(np.arange(side) + 0.5) / side for _ in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([a.ravel() for a in mesh])
    return rng.random((n, dim))


def _read_csv(path, need_z=True):
    try:
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except FileNotFoundError:
        raise CliError(f"missing file: {path}")
    if header is None:
        raise CliError(f"empty file: {path}")
    header = [h.strip() for h in header]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise CliError(f"{path}: no coordinate columns x1..xd found")
    data = np.asarray([[float(v) for v in row] for row in rows], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, len(header))
    X = data[:, xcols]
    z = None
    if "z" in header:
        z = data[:, header.index("z")]
    elif need_z:
        raise CliError(f"{path}: no response column z")
    y = data[:, header.index("y")] if "y" in header else None
    return X, z, y


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_simulate(args):
    s = _settings(args)
    rng = np.random.default_rng(s["seed"])
    coords = _design_coords(s, rng)
    lik = _likelihood(s)
    y = simulate_gp(coords, _kernel(s), _mean(s), random_state=rng)
    z = simulate_data(y, lik, random_state=rng)
    out = s.get("out") or "data.csv"
    dim = coords.shape[1]
    header = [f"x{k + 1}" for k in range(dim)] + ["z"]
    _write_csv(out, header, np.column_stack([coords, z]))
    truth_path = s.get("out_truth")
    if truth_path:
        _write_csv(
            truth_path,
            [f"x{k + 1}" for k in range(dim)] + ["y"],
            np.column_stack([coords, y]),
        )
    print(f"wrote {len(z)} rows to {out}")
    return _EXIT_OK


def _fit_once(s, X, z):
    dim = X.shape[1]
    builder, scheme = _spec_builder(s["scheme"], dim)
    spec = builder(X, s["m"], _ordering_arg(s, dim))
    lik = _likelihood(s)
    post = vl_inference(
        z,
        X,
        spec,
        lik,
        _kernel(s),
        mean=_mean(s),
        epsilon=s["epsilon"],
        max_iter=s["max_iter"],
    )
    return post, scheme


def cmd_fit(args):
    s = _settings(args)
    X, z, _ = _read_csv(s.get("data") or _missing("--data"))
    start = time.perf_counter()
    estimate = [v for v in str(s.get("estimate") or "").split(",") if v]
    report = {}
    if estimate:
        theta0 = {}
        for name in estimate:
            theta0[name] = {
                "variance": s["sigma2"],
                "range": s["range"],
                "smoothness": s["smoothness"],
                "lik_param": s["lik_param"] or 1.0,
            }.get(name) or _bad_estimate(name)
        fixed = {"variance": s["sigma2"], "range": s["range"], "smoothness": s["smoothness"]}
        if s["lik_param"] is not None:
            fixed["lik_param"] = s["lik_param"]
        for name in estimate:
            fixed.pop(name, None)
        ml = ml_estimate(
            z,
            X,
            s["likelihood"],
            theta0,
            fixed=fixed,
            m=s["m"],
            ordering=_ordering_arg(s, X.shape[1]),
            mean=_mean(s),
            epsilon=s["epsilon"],
            max_iter=s["max_iter"],
        )
        report["theta"] = ml.theta
        report["ml_loglik"] = ml.loglik
        report["ml_evals"] = ml.n_evals
        s = dict(s)
        s["sigma2"] = ml.theta.get("variance", s["sigma2"])
        s["range"] = ml.theta.get("range", s["range"])
        s["smoothness"] = ml.theta.get("smoothness", s["smoothness"])
        s["lik_param"] = ml.theta.get("lik_param", s["lik_param"])

    post, scheme = _fit_once(s, X, z)
    seconds = time.perf_counter() - start
    loglik = None
    if scheme in ("iw", "lowrank"):
        from .vl import loglik_at_mode

        loglik = loglik_at_mode(post)
    report.update(
        {
            "n": int(len(z)),
            "scheme": scheme,
            "m": int(s["m"]),
            "iterations": int(post.iterations),
            "converged": bool(post.converged),
            "loglik": loglik,
            "seconds": seconds,
            "alpha": [float(v) for v in post.alpha],
        }
    )
    out = s.get("out")
    text = json.dumps(report, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if not post.converged:
        print("error: mode search did not converge", file=sys.stderr)
        return _EXIT_NOCONV
    return _EXIT_OK


def _missing(flag):
    raise CliError(f"{flag} is required")


def _bad_estimate(name):
    raise CliError(f"cannot estimate unknown parameter {name!r}")


def cmd_predict(args):
    s = _settings(args)
    X, z, _ = _read_csv(s.get("data") or _missing("--data"))
    Xp, _, _ = _read_csv(s.get("pred") or _missing("--pred"), need_z=False)
    post, _ = _fit_once(s, X, z)
    if not post.converged:
        print("error: mode search did not converge", file=sys.stderr)
        return _EXIT_NOCONV
    n_samples = int(s.get("samples") or 0)
    if s["likelihood"] == "bernoulli" and n_samples == 0:
        n_samples = 2000
    result = predict(post, Xp, m=s["m"], n_samples=n_samples, random_state=s["seed"])
    dim = X.shape[1]
    header = [f"x{k + 1}" for k in range(dim)] + ["mean", "variance", "data_mean"]
    data_mean = result.data_mean
    if data_mean is None:
        data_mean = np.full(len(result.mean), np.nan)
    rows = np.column_stack([Xp, result.mean, result.variance, data_mean]) if len(result.mean) else []
    out = s.get("out") or "predictions.csv"
    _write_csv(out, header, rows)
    print(f"wrote {len(result.mean)} predictions to {out}")
    return _EXIT_OK


def _parse_grid(text):
    grid = {}
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 4:
            raise CliError(f'bad grid component {part!r}; expected "param:lo:hi:steps"')
        name, lo, hi, steps = pieces
        key = {"sigma2": "variance"}.get(name.strip(), name.strip())
        grid[key] = (float(lo), float(hi), int(steps))
    return grid


def cmd_loglik_grid(args):
    s = _settings(args)
    X, z, _ = _read_csv(s.get("data") or _missing("--data"))
    spec_text = s.get("grid") or _missing("--grid")
    grid_def = _parse_grid(spec_text)
    space = np.geomspace if s.get("log_spaced") else np.linspace
    grid = {k: space(lo, hi, steps) for k, (lo, hi, steps) in grid_def.items()}
    base = {
        "variance": s["sigma2"],
        "range": s["range"],
        "smoothness": s["smoothness"],
    }
    if s["lik_param"] is not None:
        base["lik_param"] = s["lik_param"]
    for k in grid:
        base.pop(k, None)
    rows = loglik_grid(
        z,
        X,
        s["likelihood"],
        grid,
        base=base,
        m=s["m"],
        ordering=_ordering_arg(s, X.shape[1]),
        mean=_mean(s),
        epsilon=s["epsilon"],
        max_iter=s["max_iter"],
    )
    header = list(grid) + ["loglik"]
    table = [[row[k] for k in header] for row in rows]
    out = s.get("out") or "loglik_grid.csv"
    _write_csv(out, header, table)
    print(f"wrote {len(table)} grid points to {out}")
    return _EXIT_OK


def _benchmark_replicate(payload):
    (s, n, rep) = payload
    rng_seed = s["seed"] + 1000 * rep
    rng = np.random.default_rng(rng_seed)
    s_local = dict(s)
    s_local["n"] = n
    coords = _design_coords(s_local, rng)
    lik = _likelihood(s)
    kernel = _kernel(s)
    mean = _mean(s)
    y = simulate_gp(coords, kernel, mean, random_state=rng)
    z = simulate_data(y, lik, random_state=rng)

    laplace = None
    rows = []
    methods = [v for v in s["methods"].split(",") if v]
    if "laplace" in methods and n <= DENSE_GUARD:
        t0 = time.perf_counter()
        laplace = dense_laplace(z, coords, lik, kernel, mean, s["epsilon"], s["max_iter"])
        lap_seconds = time.perf_counter() - t0
        lap_ls = log_score_precision(laplace.alpha, laplace.W, y)
        rows.append(
            ScoreReport("laplace", 0, n, 1.0, 0.0, mse(laplace.alpha, y), np.nan, lap_seconds)
        )

    builders = {"vl-iw": build_spec_iw, "vl-rf": build_spec_rf, "lowrank": build_spec_lowrank}
    m_list = [int(v) for v in str(s["m_list"]).split(",") if v]
    for method in methods:
        if method == "laplace":
            continue
        if method not in builders:
            raise CliError(f"unknown method {method!r}")
        for m in m_list:
            dim = coords.shape[1]
            ordering = _ordering_arg(s, dim)
            t0 = time.perf_counter()
            spec = builders[method](coords, m, ordering)
            post = vl_inference(
                z, coords, spec, lik, kernel, mean, s["epsilon"], s["max_iter"]
            )
            seconds = time.perf_counter() - t0
            r = d = np.nan
            if laplace is not None:
                r = rrmse(post.alpha, laplace.alpha, y)
                ls = log_score(post.alpha, post.V, y, post.spec.ordering.perm)
                d = dls(ls, log_score_precision(laplace.alpha, laplace.W, y))
            draws = post.sample(200, random_state=rng_seed + 1)
            crps = crps_mean(lik.conditional_mean(draws), z)
            rows.append(
                ScoreReport(method, m, n, r, d, mse(post.alpha, y), crps, seconds)
            )
    return rows


def cmd_benchmark(args):
    s = _settings(args)
    s.setdefault("methods", "laplace,vl-iw,vl-rf,lowrank")
    s.setdefault("m_list", str(s["m"]))
    if s.get("n_list"):
        n_values = [int(v) for v in str(s["n_list"]).split(",") if v]
    else:
        n_values = [s["n"]]
    payloads = [
        (s, n, rep) for n in n_values for rep in range(int(s["replicates"]))
    ]
    if int(s["jobs"]) > 1:
        with ProcessPoolExecutor(max_workers=int(s["jobs"])) as pool:
            all_rows = list(pool.map(_benchmark_replicate, payloads))
    else:
        all_rows = [_benchmark_replicate(p) for p in payloads]

    # average replicate rows per (method, m, n)
    groups = {}
    for rows in all_rows:
        for r in rows:
            groups.setdefault((r.method, r.m, r.n), []).append(r)
    reports = []
    for (method, m, n), rows in sorted(groups.items()):
        def agg(name):
            vals = np.asarray([getattr(r, name) for r in rows], dtype=np.float64)
            good = vals[np.isfinite(vals)]
            return float(np.mean(good)) if good.size else np.nan

        reports.append(
            ScoreReport(method, m, n, agg("rrmse"), agg("dls"), agg("mse"), agg("crps"), agg("seconds"))
        )
    out = s.get("out") or "benchmark.csv"
    with open(out, "w", newline="") as fh:
        ScoreReport.write_csv(reports, fh)
    print(f"wrote {len(reports)} score rows to {out}")
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
