"""Command-line front end.

Every command reads one input file, writes its artifacts into ``--out`` and
exits with 0 (all checks pass), 1 (a check failed) or 2 (invalid input).
Artifacts are written atomically and carry the seed; no timestamps are
emitted, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from ergocert._logspace import format_log, to_jsonable
from ergocert.certificate import (
    DriftParams,
    MinorizationParams,
    certificate_assemble,
    verify_h1_h2,
)
from ergocert.diffusion import (
    certify_diffusion,
    drift_check,
    euler_simulate,
    model_from_json,
)
from ergocert.errors import ConditionError, ErgocertError
from ergocert.markov import (
    deviation_reports,
    reports_to_csv,
    simulate_chain,
    simulate_coupling,
)
from ergocert.renewal import Pmf, best_rate, kendall_constants, renewal_sequence, stationary_delay
from ergocert.split import FiniteChain

EXIT_OK, EXIT_CHECK, EXIT_INVALID = 0, 1, 2


class CheckFailure(Exception):
    """A bound or condition check failed; artifacts were still written."""


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _num(x: float) -> str:
    return repr(float(x))


def _table(header: list[str], rows: list[list], fmt: str, seed: int, command: str) -> tuple[str, str]:
    """Render rows as (suffix, text) in CSV or JSON."""
    if fmt == "json":
        return ".json", _json_text({"command": command, "seed": seed, "columns": header, "rows": rows})
    buf = io.StringIO()
    buf.write(f"# ergocert {command} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, float) else v for v in row])
    return ".csv", buf.getvalue()


def _load_json(path: Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ErgocertError(f"{path}: invalid JSON ({exc})") from exc


def _load_input(path: Path):
    """Classify the input file: ('pmf', Pmf) | ('family', ...) | ('params', ...) | ('model', ...)."""
    if not path.exists():
        raise ErgocertError(f"input file {path} does not exist")
    text = path.read_text()
    stripped = text.lstrip()
    if not stripped.startswith(("{", "[")):
        return "pmf", Pmf.from_text(text)
    obj = _load_json(path)
    if isinstance(obj, list) or "pmf" in obj:
        return "pmf", Pmf.from_json(obj)
    if "chains" in obj or "transition" in obj:
        return "family", _family_from_json(obj)
    if "drift" in obj:
        return "model", model_from_json(obj)
    if "rho" in obj:
        drift = DriftParams(float(obj["rho"]), float(obj["D"]), float(obj["V_star"]))
        return "params", (drift, MinorizationParams(float(obj["delta"])))
    raise ErgocertError("unrecognized input: expected a pmf, a chain family, drift parameters or a model")


def _family_from_json(obj: dict):
    raw = obj["chains"] if "chains" in obj else [obj]
    chains = []
    for i, ch in enumerate(raw):
        try:
            chains.append(FiniteChain.from_json(ch if isinstance(ch, dict) else {"transition": ch}))
        except ErgocertError as exc:
            raise ErgocertError(f"chain {i}: {exc}") from exc
    n = chains[0].n_states
    v = obj.get("v", [1.0] * n)
    c_set = obj.get("c_set", list(range(n)))
    return chains, np.asarray(v, dtype=float), [int(c) for c in c_set]


def _rate_grid(args) -> list[float] | None:
    if args.r_grid is None:
        return None
    try:
        grid = [float(r) for r in args.r_grid.split(",") if r.strip()]
    except ValueError as exc:
        raise ErgocertError(f"--r-grid must be comma-separated numbers: {exc}") from exc
    if not grid or any(not r > 0 for r in grid):
        raise ErgocertError("--r-grid needs positive rates")
    return grid


def _coupling_ledger(c) -> list[dict]:
    from ergocert.renewal import COUPLING_CITATIONS

    out = []
    for name, value in c.items():
        v, lv = to_jsonable(value)
        out.append({"name": name, "value": v, "log_value": lv, "citation": COUPLING_CITATIONS[name]})
    return out


def cmd_renewal(args, out: Path) -> None:
    kind, p = _load_input(Path(args.input))
    if kind != "pmf":
        raise ErgocertError("renewal expects an increment pmf")
    p.require_increment()
    n_max = args.n_max
    u = renewal_sequence(p, n_max)
    m = p.mean()
    grid = _rate_grid(args)
    summary = {"command": "renewal", "seed": args.seed, "n_max": n_max, "mean": m}
    consts = None
    failure = None
    try:
        consts = best_rate(p, grid) if grid is None or len(grid) > 1 else kendall_constants(p, grid[0])
    except ErgocertError as exc:
        failure = str(exc)
    rows = []
    violations = 0
    for n in range(n_max + 1):
        dev = abs(u[n] - 1.0 / m)
        if consts is None:
            rows.append([n, float(u[n]), float(dev), "", ""])
            continue
        log_b = consts.log_bound([n])[0]
        b = math.exp(log_b) if log_b < 709 else math.inf
        bound_text = _num(b) if math.isfinite(b) and b > 0 else format_log(log_b)
        dominated = dev == 0.0 or math.log(dev) <= log_b
        if n >= 2 and not dominated:
            violations += 1
        rows.append([n, float(u[n]), float(dev), bound_text, "true" if dominated else "false"])
    suffix, text = _table(["n", "u", "abs_dev", "bound", "dominated"], rows, args.format, args.seed, "renewal")
    atomic_write(out / f"renewal{suffix}", text)
    if consts is not None:
        summary["r"] = float(consts.r)
        summary["ledger"] = _coupling_ledger(consts)
    summary["violations"] = violations
    summary["error"] = failure
    atomic_write(out / "renewal_ledger.json", _json_text(summary))
    if failure is not None:
        raise CheckFailure(failure)
    if violations:
        raise CheckFailure(f"{violations} renewal bound violations")


def _certificate_for(kind, payload):
    if kind == "family":
        chains, v, c_set = payload
        drift, minor, nu = verify_h1_h2(chains, v, c_set)
        return certificate_assemble(drift, minor), nu
    if kind == "params":
        return certificate_assemble(*payload), None
    raise ErgocertError("expected a chain family or drift/minorization parameters")


def cmd_certify_chain(args, out: Path) -> None:
    kind, payload = _load_input(Path(args.input))
    try:
        cert, nu = _certificate_for(kind, payload)
    except ConditionError as exc:
        atomic_write(out / "certificate.json", _json_text({"seed": args.seed, "error": str(exc)}))
        raise CheckFailure(str(exc)) from exc
    obj = {"seed": args.seed} | cert.to_json()
    if nu is not None:
        obj["nu"] = nu.tolist()
    atomic_write(out / "certificate.json", _json_text(obj))


def cmd_certify_diffusion(args, out: Path) -> None:
    kind, payload = _load_input(Path(args.input))
    if kind != "model":
        raise ErgocertError("certify-diffusion expects a diffusion model specification")
    model, cls = payload
    report = drift_check(model, cls)
    atomic_write(out / "lyapunov.json", _json_text({"seed": args.seed} | report.to_json()))
    try:
        cert = certify_diffusion(cls, model)
    except ConditionError as exc:
        raise CheckFailure(str(exc)) from exc
    atomic_write(out / "certificate.json", _json_text({"seed": args.seed} | cert.to_json()))


def cmd_simulate(args, out: Path) -> None:
    kind, payload = _load_input(Path(args.input))
    seed = args.seed
    if kind == "pmf":
        p = payload
        grid = _rate_grid(args)
        consts = best_rate(p, grid) if grid is None or len(grid) > 1 else kendall_constants(p, grid[0])
        est = simulate_coupling(Pmf.delta(0), stationary_delay(p), p, args.n_paths, args.horizon, seed,
                                r=float(consts.r), gamma1=float(consts.gamma1))
        atomic_write(out / "coupling.json", _json_text(est.to_json()))
    elif kind == "family":
        chains, _, _ = payload
        rows = []
        for i, ch in enumerate(chains):
            path = simulate_chain(ch, args.x0_state, args.n_max, seed + i)
            rows += [[i, t, int(x)] for t, x in enumerate(path)]
        suffix, text = _table(["chain", "n", "state"], rows, args.format, seed, "simulate")
        atomic_write(out / f"paths{suffix}", text)
    elif kind == "model":
        model, _ = payload
        sample = euler_simulate(model, args.x0, args.t_end, args.dt, seed, args.n_paths)
        rows = [[int(i), t, float(y)] for i in range(sample.skeleton.shape[0])
                for t, y in enumerate(sample.skeleton[i])]
        suffix, text = _table(["path", "t", "y"], rows, args.format, seed, "simulate")
        atomic_write(out / f"skeleton{suffix}", text)
    else:
        raise ErgocertError("simulate expects a pmf, a chain family or a diffusion model")


def cmd_verify(args, out: Path) -> None:
    kind, payload = _load_input(Path(args.input))
    summary = {"command": "verify", "seed": args.seed, "checks": []}
    checks = summary["checks"]
    if kind == "pmf":
        try:
            cmd_renewal(args, out)
            checks.append({"name": "renewal_domination", "passed": True})
        except CheckFailure as exc:
            checks.append({"name": "renewal_domination", "passed": False, "detail": str(exc)})
        u = renewal_sequence(payload, args.n_max)
        b = stationary_delay(payload)
        conv = np.convolve(b.to_dense(args.n_max), u)[: args.n_max + 1]
        err = float(np.abs(conv[1:] - 1.0 / payload.mean()).max())
        checks.append({"name": "stationary_delay_identity", "passed": err <= 1e-10, "max_error": err})
    elif kind == "family":
        chains, v, c_set = payload
        try:
            cert, _ = _certificate_for(kind, payload)
        except ConditionError as exc:
            checks.append({"name": "certificate", "passed": False, "detail": str(exc)})
            cert = None
        if cert is not None:
            atomic_write(out / "certificate.json", _json_text({"seed": args.seed} | cert.to_json()))
            for i, ch in enumerate(chains):
                for x in range(ch.n_states):
                    reps = deviation_reports(ch, v, x, args.n_max, cert.kappa, cert.r_big)
                    text = f"# ergocert verify seed={args.seed} chain={i} x={x}\n" + reports_to_csv(reps)
                    atomic_write(out / f"deviation_chain{i}_x{x}.csv", text)
                    bad = sum(not r.dominated for r in reps)
                    checks.append({"name": f"domination_chain{i}_x{x}", "passed": bad == 0, "violations": bad})
    elif kind == "model":
        model, cls = payload
        report = drift_check(model, cls)
        checks.append({"name": "drift_check", "passed": report.passed,
                       "grid_violations": report.grid_violations})
        if report.passed:
            try:
                cert = certify_diffusion(cls, model)
                atomic_write(out / "certificate.json", _json_text({"seed": args.seed} | cert.to_json()))
                checks.append({"name": "certificate", "passed": True})
            except ConditionError as exc:
                checks.append({"name": "certificate", "passed": False, "detail": str(exc)})
    else:
        raise ErgocertError("verify expects a pmf, a chain family or a diffusion model")
    summary["passed"] = all(c["passed"] for c in checks)
    atomic_write(out / "summary.json", _json_text(summary))
    if not summary["passed"]:
        raise CheckFailure("some checks failed")


COMMANDS = {
    "renewal": cmd_renewal,
    "certify-chain": cmd_certify_chain,
    "certify-diffusion": cmd_certify_diffusion,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergocert", description="Explicit geometric-ergodicity certificates.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--input", required=True, help="pmf (text/JSON), chain family, parameters or model JSON")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-max", type=int, default=200, dest="n_max")
    parser.add_argument("--r-grid", default=None, dest="r_grid", help="comma-separated rates")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--n-paths", type=int, default=10_000, dest="n_paths")
    parser.add_argument("--horizon", type=int, default=10**6)
    parser.add_argument("--x0", type=float, default=0.0, help="diffusion start point")
    parser.add_argument("--x0-state", type=int, default=0, dest="x0_state", help="chain start state")
    parser.add_argument("--t-end", type=float, default=10.0, dest="t_end")
    parser.add_argument("--dt", type=float, default=1e-3)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            print(json.dumps({"status": "invalid_input", "error": "UsageError", "message": "bad command line"}))
            return EXIT_INVALID
        return EXIT_OK
    out = Path(args.out)
    try:
        if args.n_max < 0:
            raise ErgocertError("--n-max must be >= 0")
        COMMANDS[args.command](args, out)
    except CheckFailure as exc:
        print(json.dumps({"status": "check_failed", "command": args.command, "detail": str(exc)}))
        return EXIT_CHECK
    except (ErgocertError, KeyError, TypeError, ValueError, OSError) as exc:
        err = {"status": "invalid_input", "command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err))
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
