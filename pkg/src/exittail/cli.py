"""Command-line front end.

Settings are resolved in increasing priority: built-in defaults, a
``key=value`` config file (``--config``), ``EXITTAIL_<KEY>`` environment
variables, ``--set key=value`` overrides, and explicit flags.  Every run
writes its artifacts plus ``manifest.json`` into ``--out``.

Exit codes: 0 pass, 1 property failure, 2 inconclusive, 3 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
ENV_PREFIX = "EXITTAIL_"


class UsageError(Exception):
    def __init__(self, message: str, **extra):
        super().__init__(message)
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).replace(",", " ").split()]


# per-subcommand settings: name -> (type, default)
COMMON = {
    "seed": (int, 20240601),
    "replicas": (int, 20000),
    "out": (str, "exittail-out"),
    "mode": (str, None),
    "tol": (float, 0.0),
}
SETTINGS: dict[tuple[str, str], dict] = {
    ("chain", "analyze"): {"chain": (str, None), "event": (_ints, None), "t_max": (int, 50)},
    ("bound", "tmain"): {"chain": (str, None), "event": (_ints, None), "t_max": (int, 50),
                         "constant": (str, "published"), "k_max": (int, None)},
    ("bound", "aksz"): {"probs": (_floats, None), "delta": (float, None), "gaps": (_floats, "")},
    ("verify", "suite"): {"criteria": (_ints, "1 2 3 4 5 6 7 8 9 10")},
    ("example", "conductance"): {"beta": (float, 1.5), "n": (int, 2000), "t_max": (int, 100000),
                                 "points": (int, 40)},
    ("example", "even-sites"): {"beta": (float, 1.5), "n": (int, 2000)},
    ("dynperc", "piv"): {"kind": (str, "TriSite"), "n": (int, 32)},
    ("dynperc", "survival"): {"kind": (str, "TriSite"), "n": (int, 32), "t_max": (float, 4.0),
                              "step": (float, 0.5), "piv": (float, None)},
    ("dynperc", "decorr"): {"kind": (str, "TriSite"), "n": (int, 32), "t_max": (float, 16.0),
                            "horizon": (float, 48.0), "piv": (float, None)},
    ("dynperc", "fkg"): {"kind": (str, "TriSite"), "n": (int, 32), "t": (float, 1.0), "piv": (float, None)},
    ("dynperc", "fet"): {"kind": (str, "TriSite"), "radii": (_ints, "8 16"), "t_max": (float, 10.0)},
    ("scan", "question33"): {"instances": (int, 50), "t_max": (int, 120)},
}


def build_parser() -> _Parser:
    p = _Parser(prog="exittail", description="Exit-time tails of reversible chains and related experiments.",
                argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    groups = p.add_subparsers(dest="group", required=True)
    by_group: dict[str, argparse._SubParsersAction] = {}
    for (group, cmd), spec in SETTINGS.items():
        if group not in by_group:
            gp = groups.add_parser(group, argument_default=argparse.SUPPRESS)
            by_group[group] = gp.add_subparsers(dest="command", required=True)
        sp = by_group[group].add_parser(cmd, argument_default=argparse.SUPPRESS)
        for name in list(COMMON) + list(spec):
            flag = "--" + name.replace("_", "-")
            sp.add_argument(flag, dest=name, type=str)
        sp.add_argument("--config", dest="config_sub", help="key=value settings file")
        sp.add_argument("--set", dest="set_sub", action="append", metavar="KEY=VALUE")
    return p


def read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"expected key=value, got {line!r}", path=path, line=lineno)
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(argv=None) -> tuple[tuple[str, str], dict]:
    ns = vars(build_parser().parse_args(argv))
    key = (ns.pop("group"), ns.pop("command"))
    spec = {**COMMON, **SETTINGS[key]}
    raw: dict[str, object] = {k: d for k, (_, d) in spec.items()}
    config = ns.pop("config_sub", None) or ns.pop("config", None)
    ns.pop("config", None)
    sets = (ns.pop("set", None) or []) + (ns.pop("set_sub", None) or [])
    layers = []
    if config:
        layers.append(read_config(config))
    layers.append({k[len(ENV_PREFIX):].lower(): v for k, v in os.environ.items()
                   if k.startswith(ENV_PREFIX)})
    override = {}
    for item in sets:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        override[k.strip().replace("-", "_")] = v.strip()
    layers += [override, ns]
    for layer in layers:
        for k, v in layer.items():
            if k in spec:
                raw[k] = v
            elif layer is override or layer is ns:
                raise UsageError(f"unknown setting {k!r} for {' '.join(key)}")
    settings = {}
    for k, (typ, _) in spec.items():
        v = raw[k]
        if v is None or (not isinstance(v, str)):
            settings[k] = v
            continue
        try:
            settings[k] = typ(v)
        except ValueError:
            raise UsageError(f"bad value {v!r} for {k}") from None
    return key, settings


# ---------------------------------------------------------------------------
# commands


def _require(settings, *names):
    missing = [n for n in names if settings.get(n) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_chain_event(settings):
    from .chain_core import EventSet, read_chain

    _require(settings, "chain", "event")
    chain = read_chain(settings["chain"])
    bad = [s for s in settings["event"] if not 0 <= s < chain.n]
    if bad:
        raise UsageError(f"event states out of range: {bad}")
    return chain, EventSet.of(chain, settings["event"])


def _dump(path: Path, obj) -> None:
    from .acceptance import _jsonable

    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def cmd_chain_analyze(s, out: Path) -> int:
    from . import bounds, spectral

    chain, C = _load_chain_event(s)
    rep = spectral.spectrum(chain)
    _dump(out / "spectrum.json", rep.to_dict())
    curve = spectral.decorrelation_curve(chain, C, 2 * s["t_max"], mode=s["mode"])
    curve.to_csv(out / "decorrelation.csv")
    tail = bounds.exit_tail_series(chain, C, s["t_max"])
    with open(out / "exit_tail.csv", "w") as fh:
        fh.write("t,survival\n")
        for t, v in enumerate(tail):
            fh.write(f"{t},{v:.17g}\n")
    print(json.dumps({"p": C.p, "gap": rep.gap, "abs_gap": rep.abs_gap}))
    return EXIT_PASS


def cmd_bound_tmain(s, out: Path) -> int:
    from . import bounds, spectral

    chain, C = _load_chain_event(s)
    curve = spectral.decorrelation_curve(chain, C, 2 * s["t_max"], mode=s["mode"])
    tail = bounds.exit_tail_series(chain, C, s["t_max"])
    fails = 0
    rows = []
    for t in range(1, s["t_max"] + 1):
        rep = bounds.tmain_bound(C.p, curve, t, s["k_max"], constant=s["constant"], target=float(tail[t]))
        rows.append(rep)
        fails += not rep.holds(0.0) and (rep.target - rep.raw_bound) > s["tol"]
    with open(out / "tmain.csv", "w") as fh:
        fh.write("t,target,bound,argmin_k,slack\n")
        for r in rows:
            fh.write(f"{r.t},{r.target:.17g},{r.bound:.17g},{r.argmin_k},{r.slack:.17g}\n")
    (out / "tmain.jsonl").write_text("".join(r.to_json() + "\n" for r in rows))
    print(json.dumps({"violations": fails, "checked": len(rows)}))
    return EXIT_FAIL if fails else EXIT_PASS


def cmd_bound_aksz(s, out: Path) -> int:
    from .bounds import aksz_bound

    _require(s, "probs", "delta")
    try:
        value = aksz_bound(s["probs"], s["delta"], s["gaps"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _dump(out / "aksz.json", {"probs": s["probs"], "delta": s["delta"], "gaps": s["gaps"], "bound": value})
    print(json.dumps({"bound": value}))
    return EXIT_PASS


def cmd_verify_suite(s, out: Path) -> int:
    from . import acceptance

    results = acceptance.run_suite(s["criteria"], seed=s["seed"], echo=print)
    _dump(out / "suite.json", [r.to_dict() for r in results])
    status = acceptance.overall_status(results)
    return {acceptance.PASS: EXIT_PASS, acceptance.FAIL: EXIT_FAIL}.get(status, EXIT_INCONCLUSIVE)


def cmd_example_conductance(s, out: Path) -> int:
    from . import sharp_examples as sx

    spec = sx.ConductanceWalkSpec(s["beta"], s["n"])
    chain = sx.build_conductance_walk(spec)
    C = sx.positive_side(spec, chain)
    sw = sx.walk_sweep(chain, C, s["t_max"])
    grid = sx.log_grid(1, s["t_max"], s["points"])
    sx.write_sweep_csv(out / "sweep.csv", [(s["beta"], s["n"], int(t), sw.survival[t], sw.corr[t]) for t in grid])
    fit_grid = sx.log_grid(min(100, max(1, s["t_max"] // 10)), s["t_max"], s["points"])
    fit = sx.fit_exponent(fit_grid, sw.survival[fit_grid], (1 - s["beta"]) / 2, s["tol"] or 0.08)
    (out / "fit.json").write_text(fit.to_json() + "\n")
    half_bad = int((sw.corr > sw.survival / 2).sum())
    print(json.dumps({**fit.to_dict(), "half_bound_violations": half_bad}))
    return EXIT_PASS if fit.passed and half_bad == 0 else EXIT_FAIL


def cmd_example_even_sites(s, out: Path) -> int:
    from . import sharp_examples as sx

    rep = sx.even_sites_example(sx.ConductanceWalkSpec(s["beta"], s["n"]))
    _dump(out / "even_sites.json", rep.to_dict())
    print(json.dumps(rep.to_dict()["excess_fit"]))
    return EXIT_PASS if rep.excess_fit.passed and rep.survival_r2 >= 0.99 else EXIT_FAIL


def _lattice(s):
    from .dynperc import LatticeSpec

    try:
        return LatticeSpec(s["kind"], s["n"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _piv(s, spec) -> float:
    from .dynperc import estimate_piv

    return s["piv"] if s.get("piv") else estimate_piv(spec, 10_000, s["seed"]).mean


def cmd_dynperc_piv(s, out: Path) -> int:
    from .dynperc import estimate_piv

    est = estimate_piv(_lattice(s), s["replicas"], s["seed"])
    _dump(out / "piv.json", asdict(est))
    print(json.dumps(asdict(est)))
    return EXIT_PASS


def cmd_dynperc_survival(s, out: Path) -> int:
    from .dynperc import lower_bound_half_units, simulate_crossing, survival_curve
    from .stats import Z95

    spec = _lattice(s)
    piv = _piv(s, spec)
    grid = np.arange(0.0, s["t_max"] + 1e-9, s["step"])
    est = survival_curve(simulate_crossing(spec, grid, s["replicas"], s["seed"], piv=piv))
    est.to_csv(out / "survival.csv")
    bad = [float(t) for t, v, ci in zip(est.t, est.survival, est.ci)
           if t > 0 and v < lower_bound_half_units(t) - 3 * ci / Z95]
    print(json.dumps({"piv": piv, "lower_bound_violations": bad}))
    return EXIT_FAIL if bad else EXIT_PASS


def cmd_dynperc_decorr(s, out: Path) -> int:
    from .dynperc import estimate_decorrelation, simulate_crossing

    spec = _lattice(s)
    piv = _piv(s, spec)
    horizon = max(s["horizon"], s["t_max"])
    run = simulate_crossing(spec, np.arange(0.0, horizon + 1e-9), s["replicas"], s["seed"],
                            piv=piv, track=False)
    dec = estimate_decorrelation(run, p=0.5, max_lag=int(s["t_max"]), average_origins=True)
    dec.to_csv(out / "decorrelation.csv")
    fit = dec.fit(1.0, s["t_max"])
    _dump(out / "fit.json", fit.to_dict())
    print(json.dumps(fit.to_dict()))
    return EXIT_PASS


def cmd_dynperc_fkg(s, out: Path) -> int:
    from .dynperc import fkg_domination_test

    spec = _lattice(s)
    rep = fkg_domination_test(spec, s["t"], s["replicas"], s["seed"], piv=_piv(s, spec))
    payload = {"t": rep.t, "survivors": rep.survivors, "inconclusive": rep.inconclusive,
               "comparisons": [asdict(c) for c in rep.comparisons]}
    _dump(out / "fkg.json", payload)
    print(json.dumps({"survivors": rep.survivors, "passed": rep.passed, "inconclusive": rep.inconclusive}))
    if rep.inconclusive:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_dynperc_fet(s, out: Path) -> int:
    from .dynperc import KINDS, simulate_fet

    if s["kind"] not in KINDS:
        raise UsageError(f"unknown lattice kind {s['kind']!r}; expected one of {KINDS}")
    res = simulate_fet(s["kind"], s["radii"], s["t_max"], s["replicas"], s["seed"])
    t = np.linspace(0.0, s["t_max"], 21)
    res.to_csv(out / "fet.csv", t)
    fits = {}
    status = EXIT_PASS
    for R in res.radii:
        try:
            fits[int(R)] = res.fit(int(R), 1.0, s["t_max"]).to_dict()
        except ValueError as exc:
            fits[int(R)] = {"error": str(exc)}
            status = EXIT_INCONCLUSIVE
    _dump(out / "fit.json", fits)
    viol = res.monotone_violations()
    print(json.dumps({"fits": fits, "monotone_violations": viol}))
    return EXIT_FAIL if viol else status


def cmd_scan_rates(s, out: Path) -> int:
    from .bounds import ScanEnsemble, counterexample_scan

    rep = counterexample_scan(ScanEnsemble(instances=s["instances"], t_max=s["t_max"]), s["seed"])
    _dump(out / "scan.json", rep.to_dict())
    print(json.dumps({"worst_ratio": rep.worst_ratio, "worst_index": rep.worst_index}, default=str))
    return EXIT_PASS


COMMANDS = {
    ("chain", "analyze"): cmd_chain_analyze,
    ("bound", "tmain"): cmd_bound_tmain,
    ("bound", "aksz"): cmd_bound_aksz,
    ("verify", "suite"): cmd_verify_suite,
    ("example", "conductance"): cmd_example_conductance,
    ("example", "even-sites"): cmd_example_even_sites,
    ("dynperc", "piv"): cmd_dynperc_piv,
    ("dynperc", "survival"): cmd_dynperc_survival,
    ("dynperc", "decorr"): cmd_dynperc_decorr,
    ("dynperc", "fkg"): cmd_dynperc_fkg,
    ("dynperc", "fet"): cmd_dynperc_fet,
    ("scan", "question33"): cmd_scan_rates,
}


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"exittail": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _error(code: int, kind: str, message: str, **extra) -> int:
    rec = {"error": kind, "message": message, "exit_code": code}
    rec.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .chain_core import ChainError, ChainParseError

    try:
        key, settings = resolve(argv)
    except UsageError as exc:
        return _error(EXIT_USAGE, "usage", str(exc), **exc.extra)
    except OSError as exc:
        return _error(EXIT_USAGE, "usage", str(exc))
    out = Path(settings["out"])
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[key](settings, out)
    except ChainParseError as exc:
        return _error(EXIT_USAGE, "parse", str(exc), path=exc.path, line=exc.lineno)
    except UsageError as exc:
        return _error(EXIT_USAGE, "usage", str(exc), **exc.extra)
    except (ChainError, OSError) as exc:
        return _error(EXIT_USAGE, "input", str(exc))
    manifest = {"command": " ".join(key), "config": settings, "seed": settings["seed"],
                "versions": _versions(), "wall_time": time.perf_counter() - t0, "exit_code": code}
    _dump(out / "manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())

