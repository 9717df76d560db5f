"""``attacklab`` command line.

Exit codes: 0 pass, 1 failed check, 2 configuration error, 3 transport error,
4 precondition violation.  Every artifact embeds the resolved configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import theory
from .attack import AttackConfig, AttackError, run_attack
from .estimator import EstimatorConfig, UndefinedCosineError, cosine_to_truth, estimate_gradient
from .numerics import make_rng, spawn_rngs
from .projections import DecoderFormatError, InvalidParameterError, InvalidProjectionError, ProjectionSpec
from .remote import TransportError, connect_remote_victim, serve_victim
from .scenarios import make_pairs, random_boundary_point
from .victims import VictimError, VictimSpec, build_victim, load_victim_spec

log = logging.getLogger("attacklab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_TRANSPORT, EXIT_PRECONDITION = 0, 1, 2, 3, 4
CHECKPOINT_FRACTIONS = (0.1, 0.25, 0.5, 1.0)
CONFIG_ERRORS = (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError,
                 VictimError, InvalidProjectionError, InvalidParameterError, DecoderFormatError)


class ConfigError(Exception):
    pass


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, doc: dict) -> None:
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def default_seed() -> int:
    raw = os.environ.get("ATTACKLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"ATTACKLAB_SEED must be an integer, got {raw!r}") from None


def _resolved(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------- victim serve

def cmd_victim_serve(args) -> int:
    try:
        spec = load_victim_spec(args.config)
    except CONFIG_ERRORS as exc:
        log.error("bad victim config: %s", exc)
        return EXIT_CONFIG
    try:
        server = serve_victim(spec, args.listen)
    except TransportError as exc:
        log.error("%s", exc)
        return EXIT_TRANSPORT
    except ValueError as exc:
        log.error("bad victim config: %s", exc)
        return EXIT_CONFIG
    print(f"listening on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# ---------------------------------------------------------------- shared loading

def _load_local(path: str):
    spec = load_victim_spec(path)
    if spec.kind == "remote":
        raise ConfigError("a local victim spec is required here")
    oracle, truth = build_victim(spec)
    return spec, oracle, truth


def _load_projection(path: str | None) -> ProjectionSpec:
    if path is None:
        return ProjectionSpec("identity", {})
    return ProjectionSpec.load(path)


def _load_pairs_file(path: str) -> list[tuple[np.ndarray, np.ndarray]]:
    with open(path) as fh:
        doc = json.load(fh)
    items = doc["pairs"] if isinstance(doc, dict) else doc
    pairs = []
    for it in items:
        pairs.append((np.asarray(it["x_src"], dtype=float), np.asarray(it["x_tgt"], dtype=float)))
    if not pairs:
        raise ConfigError("pairs file is empty")
    return pairs


# ---------------------------------------------------------------- attack

def _attack_setup(args):
    """Parse and validate everything before the first query is issued."""
    if args.budget <= 0 or not 0 < args.theta < 1 or args.pairs < 1:
        raise ConfigError("need budget > 0, 0 < theta < 1 and pairs >= 1")
    proj = _load_projection(args.projection)
    remote = args.victim.startswith("tcp://")
    truth = None
    local_oracle = None
    if not remote:
        _, local_oracle, truth = _load_local(args.victim)
    if args.pairs_file:
        pairs = _load_pairs_file(args.pairs_file)[: args.pairs]
    else:
        source = truth
        m = local_oracle.dim if local_oracle is not None else None
        if args.pair_source:
            _, src_oracle, source = _load_local(args.pair_source)
            m = src_oracle.dim
        if source is None:
            raise ConfigError("a tcp:// victim needs --pairs-file or --pair-source")
        pairs = [(p.x_src, p.x_tgt) for p in make_pairs(source, m, args.pairs, seed=args.seed)]
    m = len(pairs[0][1])
    if any(len(a) != m or len(b) != m for a, b in pairs):
        raise ConfigError("pairs have inconsistent dimensions")
    if local_oracle is not None and local_oracle.dim != m:
        raise ConfigError(f"pairs are {m}-dimensional but the victim takes {local_oracle.dim}")
    if proj.whitebox and truth is None:
        raise ConfigError("constructed_a projections need a local victim")
    factory = proj.factory(truth)
    factory(pairs[0][1])  # shape check against m
    return proj, remote, truth, pairs, factory, m


def cmd_attack(args) -> int:
    if args.seed is None:
        args.seed = default_seed()
    try:
        proj, remote, truth, pairs, factory, m = _attack_setup(args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    results, violated = [], 0
    for i, (x_src, x_tgt) in enumerate(pairs):
        cfg = AttackConfig(budget=args.budget, theta=args.theta, initial_B=args.initial_B,
                           seed=args.seed + i, sampling_mode=args.sampling_mode)
        try:
            if remote:
                with connect_remote_victim(args.victim, m, args.timeout_ms) as oracle:
                    trace = run_attack(oracle, factory, x_src, x_tgt, cfg)
            else:
                _, oracle, _ = _load_local(args.victim)
                trace = run_attack(oracle, factory, x_src, x_tgt, cfg)
        except AttackError as exc:
            log.warning("pair %d skipped: %s", i, exc)
            violated += 1
            results.append({"pair": i, "skipped": str(exc)})
            continue
        except TransportError as exc:
            log.error("transport error on pair %d: %s", i, exc)
            return EXIT_TRANSPORT
        atomic_write(os.path.join(args.out, f"pair_{i:03d}.csv"), trace.to_csv())
        results.append({"pair": i, "final_mse": trace.final_mse, "queries": trace.queries,
                        "success": trace.success, "iterations": trace.iterations})
    done = [r for r in results if "final_mse" in r]
    checkpoints = {}
    for frac in CHECKPOINT_FRACTIONS:
        q = int(round(frac * args.budget))
        vals = []
        for r in done:
            with open(os.path.join(args.out, f"pair_{r['pair']:03d}.csv")) as fh:
                rows = [line.split(",") for line in fh.read().splitlines()[1:]]
            best = math.inf
            for row in rows:
                if int(row[0]) > q:
                    break
                best = float(row[2])
            vals.append(best)
        checkpoints[str(q)] = {"median_mse": float(np.median(vals)) if vals else None,
                               "mean_mse": float(np.mean(vals)) if vals else None}
    finals = [r["final_mse"] for r in done]
    summary = {"config": _resolved(args), "projection": proj.kind, "dim": m,
               "pairs": results, "checkpoints": checkpoints,
               "median_final_mse": float(np.median(finals)) if finals else None,
               "mean_final_mse": float(np.mean(finals)) if finals else None,
               "skipped": violated}
    write_json(os.path.join(args.out, "summary.json"), summary)
    return EXIT_PRECONDITION if violated else EXIT_OK


# ---------------------------------------------------------------- estimate

def cmd_estimate(args) -> int:
    if args.seed is None:
        args.seed = default_seed()
    try:
        if args.victim.startswith("tcp://"):
            raise ConfigError("estimate measures cosines and needs a local victim spec")
        _, oracle, truth = _load_local(args.victim)
        proj = _load_projection(args.projection)
        factory = proj.factory(truth)
        n = proj.latent_dim(oracle.dim)
        if args.trials < 2 or not args.delta > 0 or not args.B_list:
            raise ConfigError("need trials >= 2, delta > 0 and a non-empty B list")
    except (ConfigError, *CONFIG_ERRORS) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    if args.sampling_mode == "orthonormal_frame" and max(args.B_list) > n:
        log.error("B=%d exceeds the latent dimension n=%d in frame mode", max(args.B_list), n)
        return EXIT_PRECONDITION
    lines = ["B,mean_cos,stderr,mean_omega_proxy"]
    setup = make_rng(args.seed)
    bases = [random_boundary_point(truth, oracle.dim, setup) for _ in range(args.trials)]
    for k, B in enumerate(args.B_list):
        cfg = EstimatorConfig(B, args.delta, args.sampling_mode)
        cs, px = [], []
        for x_b, r in zip(bases, spawn_rngs(args.seed + k + 1, args.trials)):
            e = estimate_gradient(factory(x_b), oracle, cfg, r)
            try:
                cs.append(cosine_to_truth(e, truth, x_b))
            except UndefinedCosineError:
                continue
            px.append(e.omega_proxy)
        cs = np.array(cs)
        se = cs.std(ddof=1) / math.sqrt(len(cs)) if len(cs) > 1 else float("nan")
        lines.append(f"{B},{cs.mean():.17g},{se:.17g},{np.mean(px):.17g}")
    header = "# " + json.dumps(_resolved(args), sort_keys=True, default=_jsonable)
    atomic_write(args.out, header + "\n" + "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- theory

def _theory_report(args) -> dict:
    sub = args.which
    if sub == "cn":
        return theory.verify_lemma4(args.n_max)
    if sub == "pa":
        rows = [{"x": x, "pdf": theory.pa_pdf(args.n, x), "cdf": theory.pa_cdf(args.n, x)}
                for x in np.linspace(-1.0, 1.0, args.points)]
        mass = float(theory.pa_cdf(args.n, 1.0) - theory.pa_cdf(args.n, -1.0))
        return theory.make_report("pa_table", {"n": args.n, "points": args.points},
                                  {"total_mass": mass}, {}, abs(mass - 1) < 1e-12, rows=rows)
    if sub == "lemma1":
        return theory.verify_lemma1(args.n, args.samples, args.seed)
    if sub == "bounds":
        with open(args.profile) as fh:
            doc = json.load(fh)
        prof = theory.SmoothnessProfile.from_dict(doc)
        omega = float(doc["omega"]) if "omega" in doc else theory.compute_omega(prof)
        if args.omega is not None:
            omega = args.omega
        params = {"profile": prof.to_dict(), "omega": omega}
        try:
            b = theory.theorem1_bounds(prof, omega)
        except theory.AssumptionViolatedError as exc:
            return theory.make_report("theorem1_bounds", params, None, None, False,
                                      reason="assumption_violated", detail=str(exc))
        return theory.make_report("theorem1_bounds", params, None,
                                  {"lower": b.lower, "upper": b.upper, "relaxed_lower": b.relaxed_lower},
                                  b.lower <= b.upper)
    if sub == "sandwich":
        return theory.verify_theorem1_sandwich(args.case, args.trials, args.seed, m=args.m, n=args.n,
                                               B=args.B, alignment=args.alignment,
                                               omega_ratio=args.omega_ratio)
    if sub == "qcfit":
        return theory.fit_query_complexity(args.B_list, args.trials, args.seed, m=args.m, n=args.n,
                                           alignment=args.alignment)
    if sub == "omegacorr":
        return theory.omega_correlation_sweep(trials=args.trials, rng=args.seed, m=args.m, n=args.n,
                                              delta=args.delta)
    raise ConfigError(f"unknown theory check {sub!r}")


def cmd_theory(args) -> int:
    if getattr(args, "seed", 0) is None:
        args.seed = default_seed()
    try:
        report = _theory_report(args)
    except (ConfigError, theory.InvalidProfileError, *CONFIG_ERRORS) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    report["config"] = _resolved(args)
    out = args.out or f"theory_{args.which}.json"
    write_json(out, report)
    print(f"{report['check']}: {'pass' if report['pass'] else 'FAIL'}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attacklab", description="Projection-based boundary attack toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    vic = sub.add_parser("victim", help="victim utilities")
    vsub = vic.add_subparsers(dest="action", required=True)
    serve = vsub.add_parser("serve", help="serve a local victim over TCP")
    serve.add_argument("--config", required=True)
    serve.add_argument("--listen", default="127.0.0.1:0")
    serve.set_defaults(func=cmd_victim_serve)

    att = sub.add_parser("attack", help="run targeted attacks and write traces")
    att.add_argument("--victim", required=True, help="victim spec JSON or tcp://host:port")
    att.add_argument("--projection", help="projection spec JSON (default identity)")
    att.add_argument("--budget", type=int, default=5000)
    att.add_argument("--theta", type=float, default=1e-3)
    att.add_argument("--initial-B", dest="initial_B", type=int, default=100)
    att.add_argument("--sampling-mode", default="orthonormal_frame",
                     choices=("orthonormal_frame", "normalized_gaussian"))
    att.add_argument("--seed", type=int, default=None)
    att.add_argument("--pairs", type=int, default=1)
    att.add_argument("--pairs-file")
    att.add_argument("--pair-source", help="local victim spec used to build pairs for a tcp:// victim")
    att.add_argument("--timeout-ms", type=int, default=5000)
    att.add_argument("--out", required=True, help="trace directory")
    att.set_defaults(func=cmd_attack)

    est = sub.add_parser("estimate", help="cosine of the gradient estimate against the truth")
    est.add_argument("--victim", required=True)
    est.add_argument("--projection")
    est.add_argument("--B-list", dest="B_list", type=_int_list, default=[4, 8, 16])
    est.add_argument("--trials", type=int, default=200)
    est.add_argument("--delta", type=float, default=1e-3)
    est.add_argument("--sampling-mode", default="orthonormal_frame",
                     choices=("orthonormal_frame", "normalized_gaussian"))
    est.add_argument("--seed", type=int, default=None)
    est.add_argument("--out", required=True)
    est.set_defaults(func=cmd_estimate)

    th = sub.add_parser("theory", help="closed-form and Monte Carlo checks")
    tsub = th.add_subparsers(dest="which", required=True)

    def add(name, **kw):
        p = tsub.add_parser(name, **kw)
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=cmd_theory)
        return p

    add("cn").add_argument("--n-max", type=int, default=200)
    p = add("pa")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--points", type=int, default=21)
    p = add("lemma1")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--samples", type=int, default=100_000)
    p = add("bounds")
    p.add_argument("--profile", required=True)
    p.add_argument("--omega", type=float)
    p = add("sandwich")
    p.add_argument("--case", choices=("linear", "quadratic"), default="linear")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--B", type=int, default=16)
    p.add_argument("--alignment", type=float, default=0.7)
    p.add_argument("--omega-ratio", type=float, default=0.1)
    p = add("qcfit")
    p.add_argument("--B-list", dest="B_list", type=_int_list, default=[4, 8, 16, 32, 64])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alignment", type=float, default=0.7)
    p = add("omegacorr")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.05)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "victim" else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
