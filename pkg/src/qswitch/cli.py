"""``qswitch`` command-line interface.

Exit status: 0 on success, 1 when a run fails, 2 when the input is invalid.
CSV output starts with ``#`` metadata lines (version, seed, the effective
configuration as JSON), then a header row and the data rows.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .arrivals import ArrivalModel, LoadProfile
from .capacity import (
    BOUNDARY, INSIDE, as_link_model, boundary_scaling, capacity_membership,
)
from .config import ConfigError, RunConfig
from .congestion import (
    InvalidParametersError, InvariantViolation, lemma1_check, run_congestion, static_congestion_solve,
)
from .decoherent import run_decoherent
from .experiments import RunMetrics, experiment1, experiment2, profile_boundary
from .topology import build_topology

OUT_DIR_ENV = "QSWITCH_OUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("qswitch")


# -- formatting -------------------------------------------------------------


def fmt(v) -> str:
    """Decimal text for a CSV field; floats keep 12 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if v == 0.0:
            return "0"
        return format(v, ".12g")
    return str(v)


def write_csv(fh, columns: Sequence[str], rows: Iterable[Sequence], config: RunConfig,
              seed, extra: Optional[dict] = None) -> None:
    fh.write(f"# qswitch {__version__}\n")
    fh.write(f"# seed: {seed}\n")
    fh.write(f"# config: {config.to_json()}\n")
    for k, v in (extra or {}).items():
        fh.write(f"# {k}: {json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else fmt(v)}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])


def read_csv_config(text: str) -> RunConfig:
    """Re-parse the configuration echoed in a CSV header."""
    for line in text.splitlines():
        if line.startswith("# config: "):
            return RunConfig.from_json(line[len("# config: "):])
        if not line.startswith("#"):
            break
    raise ConfigError("config", "no configuration line in CSV header")


def _emit(text: str, cfg: RunConfig, default_name: str) -> Optional[str]:
    """Write CSV text to ``--out``, the output directory, or stdout."""
    path = cfg.out
    if path is None and os.environ.get(OUT_DIR_ENV):
        path = os.path.join(os.environ[OUT_DIR_ENV], default_name)
    if path is None or path == "-":
        sys.stdout.write(text)
        return None
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _csv_text(columns, rows, cfg, seed, extra=None) -> str:
    buf = io.StringIO()
    write_csv(buf, columns, rows, cfg, seed, extra)
    return buf.getvalue()


# -- argument parsing -------------------------------------------------------


def _floats(text: str):
    """Parse ``"0.5"`` as a float and ``"0.5,0.8"`` as a tuple."""
    if text.strip() == "":
        return ()
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return vals[0] if len(vals) == 1 else vals


def _float_list(text: str) -> tuple:
    v = _floats(text)
    return v if isinstance(v, tuple) else (v,)


def _int_list(text: str) -> tuple:
    if text.strip() == "":
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override its values")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--slots", type=int, help="number of slots to simulate")
    common.add_argument("--out", help=f"output file ('-' for stdout; default ${OUT_DIR_ENV} or stdout)")
    common.add_argument("--format", choices=("human", "csv"), default="human")
    common.add_argument("-v", "--verbose", action="store_true")

    switch = argparse.ArgumentParser(add_help=False)
    switch.add_argument("--n", type=int, help="number of clients")
    switch.add_argument("--tau", type=_floats, help="LLE success probability, scalar or per client")

    congestion = argparse.ArgumentParser(add_help=False)
    congestion.add_argument("--gamma", type=float)
    congestion.add_argument("--delta", type=float)

    p = argparse.ArgumentParser(prog="qswitch", description="Quantum switch capacity and scheduling toolkit.")
    p.add_argument("--version", action="version", version=f"qswitch {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", parents=[common, switch], help="capacity region membership")
    c.add_argument("--b", type=_floats, help="request rate vector, scalar or per request type")
    c.add_argument("--direction", type=_floats, help="direction for the boundary scaling (default: b)")
    c.set_defaults(func=cmd_capacity)

    s = sub.add_parser("static-solve", parents=[common, switch, congestion],
                       help="static admission/service problem")
    s.add_argument("--b", type=_floats)
    s.add_argument("--b-hat", dest="b_hat", type=_floats)
    s.add_argument("--service-cost", dest="gap_cost", choices=("literal", "per-request"),
                   help="delta per served request ('per-request') or per request and LLE ('literal', default)")
    s.set_defaults(func=cmd_static_solve)

    m = sub.add_parser("lemma1-check", parents=[common, switch, congestion],
                       help="does the static optimum serve every request within the LLE budget")
    m.add_argument("--b", type=_floats)
    m.add_argument("--b-hat", dest="b_hat", type=_floats)
    m.add_argument("--service-cost", dest="gap_cost", choices=("literal", "per-request"))
    m.set_defaults(func=cmd_lemma1)

    for name, func, what in (("simulate", cmd_simulate, "simulate one run"),
                             ("sweep", cmd_sweep, "run an experiment grid")):
        r = sub.add_parser(name, parents=[common, switch, congestion], help=what)
        r.add_argument("--model", choices=("decoherent", "congestion"))
        r.add_argument("--profile", choices=("uniform", "skewed"))
        r.add_argument("--total-load", dest="total_load", type=float)
        r.add_argument("--skew-factor", dest="skew_factor", type=float)
        r.add_argument("--heavy-types", dest="heavy_types", type=_int_list)
        r.add_argument("--p-req", dest="p_req", type=_floats)
        r.add_argument("--p-lle", dest="p_lle", type=_floats)
        r.add_argument("--alpha", type=float)
        r.add_argument("--memory", type=int)
        r.add_argument("--service-rule", dest="service_rule", choices=("per-request", "literal"))
        r.add_argument("--gap-cost", dest="gap_cost", choices=("per-request", "literal"))
        r.add_argument("--checkpoint", type=int)
        r.add_argument("--force", action="store_const", const=True,
                       help="run theorem-invalid congestion parameters anyway")
        if name == "sweep":
            r.add_argument("--seeds", type=_int_list)
            r.add_argument("--loads", type=_float_list, help="total loads (expected requests per slot)")
            r.add_argument("--load-fractions", dest="load_fractions", type=_float_list,
                           help="loads as fractions of the profile boundary")
            r.add_argument("--alphas", type=_float_list)
            r.add_argument("--workers", type=int, default=1)
        r.set_defaults(func=func)
    return p


_CONFIG_KEYS = None


def config_from_args(args) -> RunConfig:
    global _CONFIG_KEYS
    if _CONFIG_KEYS is None:
        _CONFIG_KEYS = set(RunConfig().to_dict())
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    flags = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    return cfg.override(**flags).validate()


# -- subcommands ------------------------------------------------------------


def cmd_capacity(args, cfg: RunConfig) -> int:
    topo = build_topology(cfg.n)
    if cfg.b is None:
        raise ConfigError("b", "a rate vector is required")
    model = as_link_model(cfg.tau, cfg.n)
    b = np.broadcast_to(np.asarray(cfg.b, dtype=float), (topo.d,))
    res = capacity_membership(topo, model, b)
    u = np.broadcast_to(np.asarray(cfg.direction if cfg.direction is not None else cfg.b, dtype=float),
                        (topo.d,))
    if not u.any():
        u = np.ones(topo.d)
    rho = boundary_scaling(topo, model, u)
    cols = ("verdict", "margin", "boundary_scaling", "boundary_total_load")
    row = (res.verdict, res.margin, rho, rho * float(u.sum()))
    if args.format == "csv":
        _emit(_csv_text(cols, [row], cfg, cfg.seed), cfg, "capacity.csv")
        return EXIT_OK
    print(res.verdict)
    print(f"margin (uniform slack): {fmt(res.margin)}")
    print(f"boundary scaling along direction: {fmt(rho)} (total load {fmt(rho * float(u.sum()))})")
    if res.certificate is not None and res.verdict in (INSIDE, BOUNDARY):
        served = res.certificate.served()
        used = sum(int(np.count_nonzero(w > 1e-12)) for w in res.certificate.weights)
        print(f"certificate: {used} (state, matching) columns, served rates {fmt_vec(served)}")
    return EXIT_OK


def fmt_vec(v) -> str:
    return "(" + ", ".join(fmt(float(x)) for x in v) + ")"


def _rates(cfg, key, size, default=None):
    v = getattr(cfg, key)
    if v is None:
        if default is None:
            raise ConfigError(key, "a rate vector is required")
        v = default
    return np.broadcast_to(np.asarray(v, dtype=float), (size,)).copy()


def cmd_static_solve(args, cfg: RunConfig) -> int:
    topo = build_topology(cfg.n)
    b = _rates(cfg, "b", topo.d)
    bh = _rates(cfg, "b_hat", topo.n_clients)
    delta = cfg.delta if cfg.delta is not None else 2 * (cfg.gamma + cfg.alpha) + cfg.alpha
    cost = cfg.gap_cost or "literal"
    sol = static_congestion_solve(topo, b, bh, cfg.gamma, delta, cost)
    if args.format == "csv":
        cols = ("kind", "index", "value")
        rows = [("objective", -1, sol.objective)]
        rows += [("x", e, v) for e, v in enumerate(sol.x)]
        rows += [("z", e, v) for e, v in enumerate(sol.z)]
        rows += [("z_hat", j, v) for j, v in enumerate(sol.z_hat)]
        _emit(_csv_text(cols, rows, cfg, cfg.seed, {"service_cost": cost}), cfg, "static-solve.csv")
        return EXIT_OK
    print(f"objective: {fmt(sol.objective)}  (service cost {cost}, gamma {fmt(cfg.gamma)}, delta {fmt(delta)})")
    print(f"x     = {fmt_vec(sol.x)}")
    print(f"z     = {fmt_vec(sol.z)}")
    print(f"z_hat = {fmt_vec(sol.z_hat)}")
    return EXIT_OK


def cmd_lemma1(args, cfg: RunConfig) -> int:
    topo = build_topology(cfg.n)
    b = _rates(cfg, "b", topo.d)
    bh = _rates(cfg, "b_hat", topo.n_clients)
    if cfg.delta is None:
        raise ConfigError("delta", "required")
    rep = lemma1_check(topo, b, bh, cfg.gamma, cfg.delta, service_cost=cfg.gap_cost or "literal")
    verdict = "preconditions-unmet" if rep.verdict is None else ("true" if rep.verdict else "false")
    if args.format == "csv":
        cols = ("verdict", "shortfall", "excess", "objective")
        obj = rep.solution.objective if rep.solution is not None else math.nan
        _emit(_csv_text(cols, [(verdict, rep.shortfall, rep.excess, obj)], cfg, cfg.seed), cfg,
              "lemma1-check.csv")
        return EXIT_OK
    print(verdict)
    print(rep.reason)
    return EXIT_OK


def _decoherent_arrivals(cfg, topo) -> ArrivalModel:
    if cfg.p_req is not None:
        return ArrivalModel.for_topology(topo, cfg.p_req)
    if cfg.total_load is None:
        raise ConfigError("total_load", "give total_load or p_req for the decoherent model")
    prof = LoadProfile(cfg.profile, cfg.total_load, cfg.skew_factor, cfg.heavy_types)
    try:
        p = prof.probabilities(topo)
    except ValueError as exc:
        raise ConfigError("total_load", str(exc)) from None
    return ArrivalModel.for_topology(topo, p)


def _congestion_arrivals(cfg, topo) -> ArrivalModel:
    p = 0.3 if cfg.p_req is None else cfg.p_req
    ph = 0.3 if cfg.p_lle is None else cfg.p_lle
    return ArrivalModel.for_topology(topo, p, ph)


def cmd_simulate(args, cfg: RunConfig) -> int:
    topo = build_topology(cfg.n)
    name = f"simulate-{cfg.model}-seed{cfg.seed}.csv"
    if cfg.model == "decoherent":
        am = _decoherent_arrivals(cfg, topo)
        tr = run_decoherent(topo, cfg.tau, am, cfg.slots, cfg.seed, checkpoint=cfg.checkpoint, alpha=cfg.alpha)
        extra = {}
        summary = (f"final sum of multipliers {fmt(tr.sum_lambda[-1])}, served {int(tr.served_total[-1])}"
                   if tr.checkpoints.size else "no slots simulated")
    else:
        params = cfg.congestion_params()
        if not params.theorem_valid and not cfg.force:
            raise InvalidParametersError("theorem-invalid parameters (use --force to run anyway): "
                                         + "; ".join(params.problems()))
        am = _congestion_arrivals(cfg, topo)
        tr = run_congestion(topo, am, params, cfg.slots, cfg.seed, checkpoint=cfg.checkpoint,
                            force=cfg.force, gap_cost=cfg.gap_cost)
        extra = {"theorem_valid": params.theorem_valid, "delta": params.delta,
                 "memory_capacity": params.memory_capacity, "optimal_objective": tr.optimum.objective,
                 "optimal_admission": tr.optimum.admission}
        summary = (f"final gap {fmt(tr.gap[-1])}, average admission {fmt(tr.avg_admission_req[-1])} "
                   f"(optimum {fmt(tr.optimum.admission)}), underflows {int(tr.underflows[-1])}"
                   if tr.checkpoints.size else "no slots simulated")
    text = _csv_text(tr.columns, tr.rows(), cfg, cfg.seed, extra)
    if args.format == "csv":
        _emit(text, cfg, name)
        return EXIT_OK
    where = None
    if cfg.out not in (None, "-") or os.environ.get(OUT_DIR_ENV):
        where = _emit(text, cfg, name)
    print(f"{cfg.model}: {cfg.slots} slots, seed {cfg.seed}: {summary}")
    if where:
        print(f"wrote {where}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    workers = getattr(args, "workers", 1)
    if cfg.model == "decoherent":
        loads = list(cfg.loads)
        boundary = None
        if cfg.load_fractions:
            boundary = profile_boundary(cfg.n, cfg.tau, cfg.profile, cfg.skew_factor, cfg.heavy_types)
            loads += [f * boundary for f in cfg.load_fractions]
        m = experiment1(loads, cfg.profile, cfg.slots, cfg.seeds, cfg.n, cfg.tau, cfg.skew_factor,
                        cfg.heavy_types, workers=workers, boundary=boundary)
        extra = {"boundary_total_load": m.meta["boundary"] if m.meta["boundary"] is not None else math.nan}
    else:
        m = experiment2(cfg.alphas, 0.3 if cfg.p_req is None else cfg.p_req, cfg.slots, cfg.seeds, cfg.n,
                        cfg.gamma, cfg.delta, cfg.p_lle, cfg.memory, cfg.service_rule, cfg.gap_cost,
                        bool(cfg.force), workers=workers)
        extra = {"gap_cost": m.meta["gap_cost"]}
    seeds = ",".join(str(s) for s in sorted(cfg.seeds))
    text = _csv_text(m.columns, m.rows, cfg, seeds, extra)
    if args.format == "csv" or cfg.out not in (None, "-") or os.environ.get(OUT_DIR_ENV):
        where = _emit(text, cfg, f"sweep-{cfg.model}.csv")
        if args.format == "csv":
            return EXIT_OK
    else:
        where = None
    _print_table(m)
    if where:
        print(f"wrote {where}")
    return EXIT_OK


def _print_table(m: RunMetrics):
    agg = [r for r in m.rows if r[m.columns.index("seed")] == -1]
    print("  ".join(f"{c:>14}" for c in m.columns))
    for r in agg:
        print("  ".join(f"{fmt(x):>14}" for x in r))


# -- entry point ------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"qswitch: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qswitch: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except InvariantViolation as exc:
        print(f"qswitch: invariant violated: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:  # configuration, parameter and topology errors
        print(f"qswitch: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - anything else is a failed run
        print(f"qswitch: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
