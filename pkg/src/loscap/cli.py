"""Command-line experiment runner.

Each subcommand sweeps a parameter grid and writes one CSV row per grid
point. Grids are comma lists whose items are numbers (``2^-3`` allowed),
geometric ranges ``start:stop:xfactor`` or arithmetic ranges
``start:stop:+step``. A ``--config`` file of ``key = value`` lines supplies
defaults that command-line flags override.

Exit codes: 0 success, 1 a checked inequality or criterion failed, 2 usage
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import geometry, hc_planner, mimo, protocol_sim, spectral_stats
from .errors import InvalidArgument

JOBS_ENV = "LOSCAP_JOBS"
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Grids and formatting
# ---------------------------------------------------------------------------
def parse_number(tok):
    """Parse ``1e-3``, ``0.5`` or ``2^-3``."""
    tok = tok.strip()
    try:
        if "^" in tok:
            base, exp = tok.split("^", 1)
            return float(base) ** float(exp)
        return float(tok)
    except ValueError:
        raise UsageError(f"bad number {tok!r}") from None


def parse_grid(text, integer=False):
    """Expand a grid expression into a list of values (see module docs)."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            raise UsageError(f"empty grid item in {text!r}")
        parts = item.split(":")
        if len(parts) == 1:
            out.append(parse_number(parts[0]))
        elif len(parts) == 3:
            out.extend(_range(parse_number(parts[0]), parse_number(parts[1]), parts[2].strip()))
        else:
            raise UsageError(f"bad grid item {item!r}")
    if integer:
        ints = [int(round(v)) for v in out]
        if any(abs(a - b) > 1e-9 * max(1.0, abs(b)) for a, b in zip(ints, out)):
            raise UsageError(f"grid {text!r} must contain integers")
        return ints
    return out


def _range(start, stop, step):
    if step.startswith("x"):
        f = parse_number(step[1:])
        if f <= 0 or f == 1 or start <= 0 or stop <= 0:
            raise UsageError("geometric grids need positive ends and a factor != 1")
        ratio = math.log(stop / start) / math.log(f)
        if ratio < -1e-9:
            raise UsageError("geometric factor points away from stop")
        return [start * f ** i for i in range(int(math.floor(ratio + 1e-9)) + 1)]
    if step.startswith("+"):
        s = parse_number(step[1:])
        if s == 0:
            raise UsageError("arithmetic step must be nonzero")
        ratio = (stop - start) / s
        if ratio < -1e-9:
            raise UsageError("arithmetic step points away from stop")
        return [start + i * s for i in range(int(math.floor(ratio + 1e-9)) + 1)]
    raise UsageError(f"range step must start with 'x' or '+', got {step!r}")


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def read_config(path):
    """``{key: value}`` from a ``key = value`` file; '#' starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    cfg = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = val
    return cfg


# ---------------------------------------------------------------------------
# Per-point tasks (module level so worker processes can import them)
# ---------------------------------------------------------------------------
def _task_mimo(p, ss):
    rng = np.random.default_rng(ss)
    N, L, lam = p["N"], p["L"], p["lam"]
    pair, H, S = mimo.mimo_instance(N, p["D"], L, lam, p["sigma"], rng=rng,
                                    P=p["P"], G=p["G"], alpha=p["alpha"])
    mi = mimo.mutual_information_gaussian(H, S, p["P"])
    es = mimo.eigen_summary(H, S, L, p["G"], p["P"], p["alpha"])
    bounds = [mimo.theorem2_bound(None, None, d, D=p["D"], L=L, lam=lam, G=p["G"], P=p["P"],
                                  alpha=p["alpha"], summary=es) for d in mimo.DELTA_GRID]
    best = max(bounds, key=lambda b: b.value)
    ok = all(mi >= b.value for b in bounds)
    return [p["instance"], N, p["D"], L, lam, p["sigma"], mi, best.value, best.delta, best.M,
            S.rho1, S.rho2, ok], ok


def _task_eq(p, ss):
    pt = spectral_stats.estimate_EQ(p["D"], p["L"], p["lam"], p["trials"], ss,
                                    alpha=p["alpha"], receivers=p["receivers"])
    return [pt.lam, pt.M, pt.mean, pt.se, pt.half_width, pt.trials], True


def _task_lln(p, ss):
    seeds = ss.spawn(p["seeds"] + 1)
    rep = spectral_stats.lln_convergence_check(
        p["Ns"], p["D"], p["L"], p["lam"], [np.random.default_rng(s) for s in seeds[1:]],
        alpha=p["alpha"], trials=p["trials"], mc_seed=seeds[0], receivers=p["receivers"])
    rows = []
    for t, N in enumerate(rep.Ns):
        diff = rep.mean_abs_diff[t - 1] if t else float("nan")
        rows.append([p["lam"], N, rep.means[:, t].mean(), rep.means[:, t].std(ddof=1)
                     if len(seeds) > 2 else 0.0, diff, rep.reference.mean, rep.reference.se,
                     rep.z[t]])
    ok = rep.relative_last_diff < 0.05 and abs(rep.z[-1]) <= 3
    return rows, ok


def _task_scaling(p, ss):
    pr = hc_planner.predicted_throughput(p["n"], p["lam"], p["h"], p["regime"], alpha=p["alpha"])
    return [pr.n, pr.lam, pr.regime_index, pr.delta, pr.tau, pr.lower_bound, pr.upper_bound,
            pr.dof_limited], True


def _task_protocol(p, ss):
    plan = hc_planner.optimal_cluster_sizes(p["n"], p["lam"], p["h"], p["Q"])
    rows, ok = [], True
    for k in range(1, plan.h + 1):
        sch = protocol_sim.simulate_level(k, plan, accounting=p["accounting"])
        ref = plan.throughputs[k]
        if p["accounting"] == "real":
            ok &= math.isclose(sch.throughput, ref, rel_tol=1e-12)
        rows.append([plan.n, plan.lam, k, plan.n_seq[k - 1], plan.n_seq[k], plan.m_seq[k - 1],
                     sch.phase1, sch.phase2, sch.phase3, sch.throughput, ref])
    return rows, ok


def _task_integral(p, ss):
    rng = np.random.default_rng(ss)
    g, h, c1, c2 = random_integral_instance(rng)
    res = spectral_stats.integral_bound_check(g, h, c1, c2)
    return [p["instance"], c1, c2, h.m, res.lhs, res.rhs, res.tol, res.ok], res.ok


def _task_angles(p, ss):
    rng = np.random.default_rng(ss)
    found, worst, bad = corner_angle_batch(p["D"], p["L"], p["instances"], rng)
    return [p["D"], p["L"], p["instances"], found, worst, bad], bad == 0


# ---------------------------------------------------------------------------
# Random instance families shared with the test suite
# ---------------------------------------------------------------------------
def _triangle_fixed(x):
    # triangle wave with g(x + 1/2) = -g(x)
    y = np.mod(x, 1.0)
    return np.where(y < 0.5, 1 - 4 * np.abs(y - 0.25), -(1 - 4 * np.abs(y - 0.75)))


def random_integral_instance(rng):
    """Random admissible ``(g, h, c1, c2)`` for the periodic-integral check.

    `g` is one of cos, sin, a square wave or a triangle wave; `h` is a
    nonnegative piecewise function whose cells are increasing or decreasing
    power, exponential or linear segments.
    """
    kinds = [
        (lambda x: np.cos(x), 2 * math.pi),
        (lambda x: np.sin(x), 2 * math.pi),
        (lambda x: np.where(np.mod(x, 2.0) < 1.0, 1.0, -1.0), 2.0),
        (_triangle_fixed, 1.0),
    ]
    gf, period = kinds[int(rng.integers(len(kinds)))]
    g = spectral_stats.PeriodicFunction(gf, period)
    m = int(rng.integers(1, 6))
    a = float(rng.uniform(-5, 5))
    widths = rng.uniform(0.05, 3.0, m)
    bp = tuple(float(v) for v in a + np.concatenate([[0.0], np.cumsum(widths)]))
    segs = []
    for x0, x1 in zip(bp[:-1], bp[1:]):
        shape = int(rng.integers(3))
        up = bool(rng.integers(2))
        scale = float(rng.uniform(0.1, 5.0))
        p = float(rng.uniform(0.3, 3.0))
        segs.append((x0, x1, shape, up, scale, p))
    h = spectral_stats.PiecewiseMonotone(_Piecewise(tuple(segs)), bp)
    c1 = float(rng.choice([-1, 1]) * 10 ** rng.uniform(-0.5, 1.3))
    c2 = float(rng.uniform(-10, 10))
    return g, h, c1, c2


class _Piecewise:
    """Picklable piecewise monotone function built from segment specs."""

    def __init__(self, segs):
        self.segs = segs

    @staticmethod
    def _shape(t, shape, p):
        if shape == 0:
            return t ** p
        if shape == 1:
            return np.expm1(p * t) / np.expm1(p)
        return 0.2 + t

    def __call__(self, x):
        if np.ndim(x) == 0:
            # scalar fast path for quadrature
            x = float(x)
            for idx, (x0, x1, shape, up, scale, p) in enumerate(self.segs):
                if x0 <= x < x1 or (idx == len(self.segs) - 1 and x0 <= x <= x1):
                    t = (x - x0) / (x1 - x0)
                    return scale * float(self._shape(t if up else 1 - t, shape, p))
            return 0.0
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        for idx, (x0, x1, shape, up, scale, p) in enumerate(self.segs):
            last = idx == len(self.segs) - 1
            sel = (xa >= x0) & ((xa <= x1) if last else (xa < x1))
            t = (xa[sel] - x0) / (x1 - x0)
            out[sel] = scale * self._shape(t if up else 1 - t, shape, p)
        return out if out.ndim else float(out)


def corner_angle_batch(D, L, count, rng, chunk=20000):
    """Draw transmit pairs until `count` are in GAMMA2 and test the corner bound.

    Returns ``(count, min margin, violations)`` where the margin is
    ``|phi(z_s)| - phi_corner_min`` for a uniform receive point ``z_s``.
    """
    pair = geometry.ClusterPair(D, L, np.zeros((1, 2)), np.array([[L, 0.0]]))
    corners = pair.rx_corners
    found, worst, bad = 0, math.inf, 0
    while found < count:
        u = rng.uniform(0, D, (chunk, 2))
        v = rng.uniform(0, D, (chunk, 2))
        s = rng.uniform(0, D, (chunk, 2))
        s[:, 0] += L
        side = geometry._cross((v - u)[:, None, :], corners[None, :, :] - u[:, None, :])
        g2 = (side.min(axis=1) > 0) | (side.max(axis=1) < 0)
        idx = np.flatnonzero(g2)[: count - found]
        if len(idx) == 0:
            continue
        uu, vv, ss_ = u[idx], v[idx], s[idx]
        phi = np.abs(geometry.angles_phi(uu, vv, ss_))
        cmin = np.min(np.stack([np.abs(geometry.angles_phi(uu, vv, np.broadcast_to(c, uu.shape)))
                                for c in corners]), axis=0)
        margin = phi - cmin
        worst = min(worst, float(margin.min()))
        bad += int(np.sum(margin < -1e-12))
        found += len(idx)
    return found, worst, bad


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------
HEADERS = {
    "mimo-bound": ["instance", "N", "D", "L", "lambda", "sigma", "mi", "bound", "delta", "M",
                   "rho1", "rho2", "ok"],
    "eq-decay": ["lambda", "M", "mean", "se", "half_width", "trials"],
    "lln": ["lambda", "N", "mean", "sd_seeds", "mean_abs_diff", "mc_mean", "mc_se", "z"],
    "scaling": ["n", "lambda", "b", "delta", "tau", "lower", "upper", "dof_limited"],
    "protocol": ["n", "lambda", "k", "n_prev", "n_cur", "m", "phase1", "phase2", "phase3",
                 "throughput", "recursion"],
    "lemma7": ["instance", "c1", "c2", "m", "lhs", "rhs", "tol", "ok"],
    "lemma8": ["D", "L", "instances", "gamma2", "min_margin", "violations"],
}


def _lams(args, n):
    if args.beta is not None:
        return [float(n) ** -b for b in parse_grid(args.beta)]
    return parse_grid(args.lam)


def build_points(args):
    """``(task, [params])`` for the selected experiment, in grid order."""
    cmd = args.command
    if cmd == "mimo-bound":
        Ns = parse_grid(args.n_nodes, integer=True)
        Ls = parse_grid(args.l)
        lams = parse_grid(args.lam)
        kinds = [s.strip() for s in args.sigma.split(",")]
        if any(k not in mimo.SIGMA_KINDS for k in kinds):
            raise UsageError(f"sigma kinds must be among {mimo.SIGMA_KINDS}")
        combos = [(N, L, lam, k) for N in Ns for L in Ls for lam in lams for k in kinds]
        pts = []
        for i in range(args.instances):
            N, L, lam, k = combos[i % len(combos)]
            pts.append(dict(instance=i, N=N, D=args.d, L=L, lam=lam, sigma=k, P=args.power,
                            G=args.gain, alpha=args.alpha))
        return _task_mimo, pts
    if cmd == "eq-decay":
        return _task_eq, [dict(D=args.d, L=args.l, lam=lam, trials=args.trials, alpha=args.alpha,
                               receivers=args.receivers) for lam in parse_grid(args.lam)]
    if cmd == "lln":
        Ns = parse_grid(args.n_nodes, integer=True)
        return _task_lln, [dict(Ns=Ns, D=args.d, L=args.l, lam=lam, seeds=args.seeds,
                                trials=args.trials, alpha=args.alpha, receivers=args.receivers)
                           for lam in parse_grid(args.lam)]
    if cmd == "scaling":
        pts = []
        for n in parse_grid(args.n, integer=True):
            for lam in _lams(args, n):
                pts.append(dict(n=n, lam=lam, h=args.h, regime=args.regime, alpha=args.alpha))
        return _task_scaling, pts
    if cmd == "protocol":
        pts = []
        for n in parse_grid(args.n, integer=True):
            for lam in _lams(args, n):
                pts.append(dict(n=n, lam=lam, h=args.h, Q=args.q, accounting=args.accounting))
        return _task_protocol, pts
    if cmd == "lemma7":
        return _task_integral, [dict(instance=i) for i in range(args.instances)]
    if cmd == "lemma8":
        return _task_angles, [dict(D=args.d, L=L, instances=args.instances)
                              for L in parse_grid(args.l)]
    raise UsageError(f"unknown experiment {cmd!r}")


def run(args):
    """Execute an experiment; returns ``(exit code, csv text)``."""
    task, points = build_points(args)
    if not points:
        raise UsageError("empty grid")
    seeds = np.random.SeedSequence(args.seed).spawn(len(points))
    if args.jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(task, points, seeds))
    else:
        results = [task(p, s) for p, s in zip(points, seeds)]

    buf = io.StringIO(newline="")
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("jobs", "out", "config")}
    buf.write(f"# loscap {__version__}\r\n")
    buf.write(f"# run {json.dumps(params, sort_keys=True)}\r\n")
    w = csv.writer(buf)
    w.writerow(HEADERS[args.command])
    ok = True
    for rows, good in results:
        ok &= bool(good)
        for row in (rows if rows and isinstance(rows[0], list) else [rows]):
            w.writerow([fmt(v) for v in row])
    if args.command == "eq-decay" and args.check:
        ok &= _decay_ok([r for r, _ in results])
    return (EXIT_OK if ok else EXIT_CHECK), buf.getvalue()


def _decay_ok(rows):
    M = np.array([r[1] for r in rows])
    E = np.array([r[2] for r in rows])
    series = spectral_stats.DecaySeries(0, 0, 2, tuple(
        spectral_stats.DecayPoint(r[0], r[1], r[2], r[3], r[4], r[5]) for r in rows))
    slope = spectral_stats.decay_regression((M, E))
    top, cap = spectral_stats.decay_envelope(series)
    print(f"slope {slope:.4f} envelope {top:.4g} <= {cap:.4g}", file=sys.stderr)
    return slope <= -0.8 and top <= cap


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------
def _default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    common.add_argument("--jobs", type=int, default=_default_jobs(),
                        help=f"worker processes (default ${JOBS_ENV} or 1)")
    common.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    common.add_argument("--config", help="key = value file with default flag values")

    p = argparse.ArgumentParser(prog="loscap", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"loscap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mimo-bound", parents=[common], help="MI versus the MIMO lower bound")
    s.add_argument("--n-nodes", default="4,8,16,32,64", help="nodes per cluster (grid)")
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--l", default="2,4,8", help="cluster distance (grid)")
    s.add_argument("--lambda", dest="lam", default="2^-2:2^-10:x0.5", help="wavelength grid")
    s.add_argument("--sigma", default="zero,interference,random", help="interference kinds")
    s.add_argument("--instances", type=int, default=200)
    s.add_argument("--power", type=float, default=1.0)
    s.add_argument("--gain", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=2.0)

    s = sub.add_parser("eq-decay", parents=[common], help="Monte Carlo E[Q] versus M")
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--l", type=float, default=2.0)
    s.add_argument("--lambda", dest="lam", default="2^-3:2^-12:x0.5")
    s.add_argument("--trials", type=int, default=spectral_stats.DEFAULT_TRIALS)
    s.add_argument("--receivers", type=int, default=2, help="receive nodes drawn per trial")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--check", action="store_true", help="exit 1 unless the decay criterion holds")

    s = sub.add_parser("lln", parents=[common], help="full sample means on growing clusters")
    s.add_argument("--n-nodes", default="16,32,64,128")
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--l", type=float, default=8.0)
    s.add_argument("--lambda", dest="lam", default="2^-3")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--trials", type=int, default=spectral_stats.DEFAULT_TRIALS)
    s.add_argument("--receivers", type=int, default=64)
    s.add_argument("--alpha", type=float, default=2.0)

    for name, helptext in (("scaling", "predicted throughput bounds"),
                           ("protocol", "slot accounting per level")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--n", default="1024:1048576:x4", help="network sizes (grid)")
        s.add_argument("--beta", default=None, help="lambda = n^-beta (grid)")
        s.add_argument("--lambda", dest="lam", default="1e-3", help="used when --beta is absent")
        s.add_argument("--h", type=int, default=3)
        if name == "scaling":
            s.add_argument("--regime", choices=hc_planner.REGIMES, default="dense")
            s.add_argument("--alpha", type=float, default=2.0)
        else:
            s.add_argument("--q", type=int, default=3)
            s.add_argument("--accounting", choices=("real", "ceil"), default="real")

    s = sub.add_parser("lemma7", parents=[common], help="random periodic-integral bound checks")
    s.add_argument("--instances", type=int, default=1000)

    s = sub.add_parser("lemma8", parents=[common], help="corner bound on transmit-pair angles")
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--l", default="2,4,8")
    s.add_argument("--instances", type=int, default=100000)
    return p


def parse_args(argv):
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        subp = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in subp._actions}
        unknown = set(cfg) - dests - {"lambda"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        subp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    for name in ("instances", "trials", "seeds", "receivers"):
        if getattr(args, name, 1) < 1:
            raise UsageError(f"--{name} must be >= 1")
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"loscap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"loscap: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        fh = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8", newline="")
    except OSError as exc:
        print(f"loscap: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        code, text = run(args)
    except (UsageError, InvalidArgument) as exc:
        print(f"loscap: usage error: {exc}", file=sys.stderr)
        code, text = EXIT_USAGE, None
    try:
        if text is not None:
            fh.write(text)
            fh.flush()
    except OSError as exc:
        print(f"loscap: cannot write {args.out}: {exc}", file=sys.stderr)
        code = EXIT_IO
    finally:
        if fh is not sys.stdout:
            fh.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
