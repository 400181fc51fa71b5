"""Command-line interface: every capability as a subcommand with
reproducible, machine-readable CSV or JSON output.

Outputs start with comment lines echoing the resolved configuration; the
``# args:`` line can be fed back verbatim to reproduce the run byte for
byte.  Worker count is excluded from the echo since it never affects
results.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from . import inequalities as ineq_mod
from .localpolytope import Verdict, build_lp, check_local_model, extract_inequality
from .montecarlo import (
    RunConfig,
    compare_models,
    critical_eta_estimate,
    derive_seed,
    estimate_pv,
    relative_growth,
    sweep_eta,
)
from .quantum import Behavior, DetectionKind, Scenario, outcome_symbols, parse_state

SQRT2 = math.sqrt(2)


class ConfigError(ValueError):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _parse_grid(spec: str, flag: str) -> list[float]:
    try:
        lo, hi, step = (float(tok) for tok in spec.split(":"))
    except ValueError:
        raise ConfigError(flag, f"expected lo:hi:step, got {spec!r}") from None
    if step <= 0 or hi < lo:
        raise ConfigError(flag, "need step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(n)]


def _parse_etas(ns, n_parties: int) -> tuple[float, ...]:
    if ns.eta_asym is not None:
        try:
            etas = tuple(float(t) for t in ns.eta_asym.split(","))
        except ValueError:
            raise ConfigError("--eta-asym", f"expected comma-separated reals, got {ns.eta_asym!r}")
        if len(etas) != n_parties:
            raise ConfigError("--eta-asym", f"need {n_parties} values, got {len(etas)}")
        return etas
    eta = ns.eta if ns.eta is not None else 1.0
    return (float(eta),) * n_parties


def _state_and_settings(ns):
    try:
        state = parse_state(ns.state)
    except ValueError as exc:
        raise ConfigError("--state", str(exc)) from None
    if ns.parties is not None and ns.parties != state.n_parties:
        raise ConfigError("--parties", f"state {ns.state!r} has {state.n_parties} parties")
    raw = str(ns.settings)
    if "," in raw:
        m = tuple(int(t) for t in raw.split(","))
        if len(m) != state.n_parties:
            raise ConfigError("--settings", f"need {state.n_parties} entries, got {len(m)}")
    else:
        m = (int(raw),) * state.n_parties
    if any(v < 1 for v in m):
        raise ConfigError("--settings", "every party needs at least one setting")
    return state, m


def _model(ns) -> DetectionKind:
    return DetectionKind(ns.model)


def _default_workers() -> int:
    return int(os.environ.get("BELLPV_WORKERS", "1"))


def _echo_args(command: str, pairs: list[tuple[str, str]]) -> str:
    parts = []
    for flag, value in pairs:
        parts.append(f"{flag} {value}")
    return f"{command} " + " ".join(parts)


ESTIMATE_COLUMNS = "state,model,N,m,eta,n,k,borderline,p_hat,wilson_low,wilson_high,seed"


def _eta_field(etas) -> str:
    vals = [f"{e:.6g}" for e in etas]
    return vals[0] if len(set(vals)) == 1 else "|".join(vals)


def _m_field(m) -> str:
    vals = [str(v) for v in m]
    return vals[0] if len(set(vals)) == 1 else "|".join(vals)


def _record_row(r) -> str:
    return ",".join(
        [
            r.state,
            r.model,
            str(r.n_parties),
            _m_field(r.m),
            _eta_field(r.etas),
            str(r.n),
            str(r.k),
            str(r.borderline),
            _fmt(r.p_hat),
            _fmt(r.wilson_low),
            _fmt(r.wilson_high),
            str(r.seed),
        ]
    )


def _record_json(r) -> dict:
    return {
        "state": r.state,
        "model": r.model,
        "n_parties": r.n_parties,
        "m": list(r.m),
        "etas": list(r.etas),
        "n": r.n,
        "k": r.k,
        "borderline": r.borderline,
        "p_hat": r.p_hat,
        "wilson_low": r.wilson_low,
        "wilson_high": r.wilson_high,
        "confidence": r.confidence,
        "sidedness": r.sidedness,
        "z": r.z,
        "seed": r.seed,
        "tol": r.tol,
    }


def _emit(ns, command: str, args_echo: str, columns: str, rows: list[str], json_payload) -> str:
    if ns.format == "json":
        doc = {"command": command, "args": args_echo, "records": json_payload}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    lines = [f"# bellpv {command}", f"# args: {args_echo}", columns]
    lines.extend(rows)
    return "\n".join(lines) + "\n"


def _write(ns, text: str) -> None:
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(p, samples_default=10_000):
    p.add_argument("--state", default="singlet")
    p.add_argument("--parties", type=int, default=None)
    p.add_argument("--settings", default="2")
    p.add_argument("--model", choices=["three-outcome", "binning"], default="binning")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eta-asym", dest="eta_asym", default=None)
    p.add_argument("--samples", type=int, default=samples_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.add_argument("--progress", action="store_true", help="report chunk progress to stderr")


def _run_config(ns, etas, m) -> RunConfig:
    workers = ns.workers if ns.workers is not None else _default_workers()
    return RunConfig(
        state=ns.state,
        m=m,
        model=_model(ns),
        etas=etas,
        n_samples=ns.samples,
        seed=ns.seed,
        tol=ns.tol,
        workers=workers,
    )


def cmd_estimate(ns) -> int:
    state, m = _state_and_settings(ns)
    etas = _parse_etas(ns, state.n_parties)
    config = _run_config(ns, etas, m)
    echo = _echo_args(
        "estimate",
        [
            ("--state", ns.state),
            ("--settings", ",".join(map(str, m)) if len(set(m)) > 1 else str(m[0])),
            ("--model", ns.model),
            ("--eta-asym", ",".join(f"{e:g}" for e in etas)),
            ("--samples", str(ns.samples)),
            ("--seed", str(ns.seed)),
            ("--tol", f"{ns.tol:g}"),
            ("--format", ns.format),
        ],
    )
    if ns.compare_models:
        cmp = compare_models(config)
        columns = "state,N,m,eta,n,agreements,k_three_outcome,k_binning,borderline_three_outcome,borderline_binning,binning_only,seed"
        row = ",".join(
            [
                ns.state,
                str(state.n_parties),
                _m_field(m),
                _eta_field(etas),
                str(cmp.n),
                str(cmp.agreements),
                str(cmp.k_three_outcome),
                str(cmp.k_binning),
                str(cmp.borderline_three_outcome),
                str(cmp.borderline_binning),
                str(cmp.binning_only_violations),
                str(ns.seed),
            ]
        )
        payload = {
            "n": cmp.n,
            "agreements": cmp.agreements,
            "k_three_outcome": cmp.k_three_outcome,
            "k_binning": cmp.k_binning,
            "borderline_three_outcome": cmp.borderline_three_outcome,
            "borderline_binning": cmp.borderline_binning,
            "binning_only": cmp.binning_only_violations,
        }
        _write(ns, _emit(ns, "estimate --compare-models", echo, columns, [row], [payload]))
        return 0
    record = estimate_pv(config, progress=ns.progress)
    _write(ns, _emit(ns, "estimate", echo, ESTIMATE_COLUMNS, [_record_row(record)], [_record_json(record)]))
    return 0


def cmd_sweep(ns) -> int:
    state, m = _state_and_settings(ns)
    if ns.eta_grid is None:
        raise ConfigError("--eta-grid", "sweep requires a grid lo:hi:step")
    grid = _parse_grid(ns.eta_grid, "--eta-grid")
    config = _run_config(ns, (1.0,) * state.n_parties, m)
    records = sweep_eta(config, grid, progress=ns.progress)
    echo = _echo_args(
        "sweep",
        [
            ("--state", ns.state),
            ("--settings", ",".join(map(str, m)) if len(set(m)) > 1 else str(m[0])),
            ("--model", ns.model),
            ("--eta-grid", ns.eta_grid),
            ("--samples", str(ns.samples)),
            ("--seed", str(ns.seed)),
            ("--tol", f"{ns.tol:g}"),
            ("--format", ns.format),
        ],
    )
    rows = [_record_row(r) for r in records]
    _write(ns, _emit(ns, "sweep", echo, ESTIMATE_COLUMNS, rows, [_record_json(r) for r in records]))
    return 0


def cmd_bound(ns) -> int:
    pairs: list[tuple[float, float]] = []
    if ns.eta_asym is not None:
        try:
            a, b = (float(t) for t in ns.eta_asym.split(","))
        except ValueError:
            raise ConfigError("--eta-asym", f"expected two reals, got {ns.eta_asym!r}")
        pairs.append((a, b))
    elif ns.eta is not None:
        pairs.append((float(ns.eta), float(ns.eta)))
    elif ns.eta_grid is not None:
        for eta in _parse_grid(ns.eta_grid, "--eta-grid"):
            pairs.append((1.0, eta) if ns.case == "asym" else (eta, eta))
    else:
        raise ConfigError("--eta", "bound requires --eta, --eta-asym or --eta-grid")
    results = []
    for eta_a, eta_b in pairs:
        if not (0 <= eta_a <= 1 and 0 <= eta_b <= 1):
            raise ConfigError("--eta", f"efficiencies must lie in [0, 1], got {(eta_a, eta_b)}")
        if ns.method == "closed":
            if eta_a == 1.0:
                results.append(bounds_mod.pv_bound_asym(eta_b))
            elif eta_b == 1.0:
                results.append(bounds_mod.pv_bound_asym(eta_a))
            elif eta_a == eta_b:
                results.append(bounds_mod.pv_bound_sym(eta_a))
            else:
                raise ConfigError(
                    "--method", "closed form covers eta_a = 1 or symmetric pairs; use quadrature or mc"
                )
        elif ns.method == "quadrature":
            results.append(bounds_mod.pv_bound_quadrature(eta_a, eta_b))
        else:
            results.append(bounds_mod.pv_bound_geometric_mc(eta_a, eta_b, ns.samples, ns.seed))
    echo = _echo_args(
        "bound",
        [
            ("--method", ns.method),
            ("--eta-asym", ",".join(f"{v:g}" for pair in pairs[:1] for v in pair))
            if len(pairs) == 1
            else ("--eta-grid", ns.eta_grid),
            ("--case", ns.case),
            ("--samples", str(ns.samples)),
            ("--seed", str(ns.seed)),
            ("--format", ns.format),
        ],
    )
    columns = "eta_a,eta_b,method,value,error_estimate"
    rows = [
        ",".join([_fmt(r.eta_a), _fmt(r.eta_b), r.method.value, _fmt(r.value), _fmt(r.error_estimate)])
        for r in results
    ]
    payload = [
        {
            "eta_a": r.eta_a,
            "eta_b": r.eta_b,
            "method": r.method.value,
            "value": r.value,
            "error_estimate": r.error_estimate,
        }
        for r in results
    ]
    _write(ns, _emit(ns, "bound", echo, columns, rows, payload))
    return 0


def cmd_critical(ns) -> int:
    state, m = _state_and_settings(ns)
    config = _run_config(ns, (1.0,) * state.n_parties, m)
    est = critical_eta_estimate(config, ns.frames, ns.bisect_tol)
    echo = _echo_args(
        "critical",
        [
            ("--state", ns.state),
            ("--settings", str(m[0])),
            ("--model", ns.model),
            ("--frames", str(ns.frames)),
            ("--bisect-tol", f"{ns.bisect_tol:g}"),
            ("--seed", str(ns.seed)),
            ("--format", ns.format),
        ],
    )
    q = est.quantiles
    columns = "state,model,N,m,frames,frames_drawn,bisect_tol,eta_upper,q01,q10,median,seed"
    row = ",".join(
        [
            ns.state,
            ns.model,
            str(state.n_parties),
            _m_field(m),
            str(est.n_frames),
            str(est.frames_drawn),
            _fmt(est.bisect_tol),
            _fmt(est.eta_upper),
            _fmt(q["q01"]),
            _fmt(q["q10"]),
            _fmt(q["median"]),
            str(ns.seed),
        ]
    )
    payload = {
        "eta_upper": est.eta_upper,
        "n_frames": est.n_frames,
        "frames_drawn": est.frames_drawn,
        "bisect_tol": est.bisect_tol,
        "quantiles": q,
        "seed": ns.seed,
    }
    _write(ns, _emit(ns, "critical", echo, columns, [row], [payload]))
    return 0


def cmd_growth(ns) -> int:
    state, _ = _state_and_settings(ns)
    etas = _parse_etas(ns, state.n_parties)
    n_parties = state.n_parties
    records = []
    for i, m in enumerate((ns.m1, ns.m2)):
        config = RunConfig(
            state=ns.state,
            m=(m,) * n_parties,
            model=_model(ns),
            etas=etas,
            n_samples=ns.samples,
            seed=derive_seed(ns.seed, i),
            tol=ns.tol,
            workers=ns.workers if ns.workers is not None else _default_workers(),
        )
        records.append(estimate_pv(config))
    growth = relative_growth(records[0].p_hat, records[1].p_hat)
    echo = _echo_args(
        "growth",
        [
            ("--state", ns.state),
            ("--model", ns.model),
            ("--eta-asym", ",".join(f"{e:g}" for e in etas)),
            ("--m1", str(ns.m1)),
            ("--m2", str(ns.m2)),
            ("--samples", str(ns.samples)),
            ("--seed", str(ns.seed)),
            ("--format", ns.format),
        ],
    )
    columns = "state,model,eta,m1,m2,n,p_m1,p_m2,growth_percent,seed"
    row = ",".join(
        [
            ns.state,
            ns.model,
            _eta_field(etas),
            str(ns.m1),
            str(ns.m2),
            str(ns.samples),
            _fmt(records[0].p_hat),
            _fmt(records[1].p_hat),
            _fmt(growth),
            str(ns.seed),
        ]
    )
    payload = {
        "p_m1": records[0].p_hat,
        "p_m2": records[1].p_hat,
        "growth_percent": growth,
        "records": [_record_json(r) for r in records],
    }
    _write(ns, _emit(ns, "growth", echo, columns, [row], [payload]))
    return 0


def cmd_ineq(ns) -> int:
    rows: list[str] = []
    payload: list[dict] = []
    columns = "name,quantity,value"

    def add(name, quantity, value):
        rows.append(f"{name},{quantity},{_fmt(value)}")
        payload.append({"name": name, "quantity": quantity, "value": value})

    if ns.name == "chsh-eta":
        q = ns.q if ns.q is not None else 2 + SQRT2
        eta_a, eta_b = (ns.eta, ns.eta) if ns.eta is not None else (1.0, 1.0)
        if ns.eta_asym is not None:
            eta_a, eta_b = (float(t) for t in ns.eta_asym.split(","))
        add("chsh-eta", "q", q)
        add("chsh-eta", "value", ineq_mod.chsh_eta_value(q, eta_a, eta_b))
        add("chsh-eta", "local_bound", 3.0)
        if ns.report_critical:
            add("chsh-eta", "eta_critical", ineq_mod.chsh_symmetric_critical(q))
    elif ns.name == "ic":
        state = parse_state(ns.state or "ghz3")
        if state.n_parties != 3:
            raise ConfigError("--state", "the ic expression needs a three-party state")
        if ns.report_critical:
            grid = _parse_grid(ns.grid, "--grid")
            found = ineq_mod.ic_critical_search(state, grid, n_starts=ns.starts, seed=ns.seed)
            add("ic", "eta_critical", found)
        else:
            eta = ns.eta if ns.eta is not None else 1.0
            value, _, _ = ineq_mod.optimize_ic(
                state, eta, np.random.default_rng(ns.seed), n_starts=ns.starts
            )
            add("ic", "optimized_value", value)
            add("ic", "local_bound", 1.0)
    elif ns.name in ("iabc1", "iabc2", "mermin-cg"):
        mermin = ns.name != "iabc1"
        phi = ns.phi if ns.phi is not None else (0.0 if mermin else math.atan(1 / 3))
        terms = ineq_mod.rotated_ghz_quantum_terms(phi)
        if mermin:
            i, j, k = terms.i222_tilde, terms.j222_tilde, terms.k22_tilde
        else:
            i, j, k = terms.i222, terms.j222, terms.k22
        add(ns.name, "i222", i)
        add(ns.name, "j222", j)
        add(ns.name, "k22", k)
        add(ns.name, "quantum_value", i + j - k)
        if ns.report_critical:
            add(ns.name, "eta_critical", ineq_mod.cg3_eta_critical(i, j, k))
    else:
        raise ConfigError("--name", f"unknown expression {ns.name!r}")
    echo = _echo_args("ineq", [("--name", ns.name), ("--format", ns.format)])
    _write(ns, _emit(ns, "ineq", echo, columns, rows, payload))
    return 0


def read_behavior_file(path: str) -> Behavior:
    """Parse the line-oriented behavior format: header ``N m1..mN d`` then
    one line of d**N probabilities per setting tuple, fixed outcome order."""
    with open(path) as fh:
        tokens_lines = [
            line.strip() for line in fh if line.strip() and not line.strip().startswith("#")
        ]
    if not tokens_lines:
        raise ValueError("empty behavior file")
    header = tokens_lines[0].split()
    n = int(header[0])
    if len(header) != n + 2:
        raise ValueError(f"header must be 'N m1..mN d', got {tokens_lines[0]!r}")
    m = tuple(int(t) for t in header[1 : n + 1])
    d = int(header[-1])
    scenario = Scenario(n, m, d)
    expected = scenario.n_setting_tuples
    if len(tokens_lines) - 1 != expected:
        raise ValueError(f"expected {expected} probability rows, got {len(tokens_lines) - 1}")
    table = np.array([[float(t) for t in line.split()] for line in tokens_lines[1:]])
    return Behavior(scenario, table)


def write_behavior_file(behavior: Behavior, path: str) -> None:
    sc = behavior.scenario
    with open(path, "w") as fh:
        fh.write(f"{sc.n_parties} {' '.join(map(str, sc.m))} {sc.d}\n")
        for row in behavior.table:
            fh.write(" ".join(repr(float(p)) for p in row) + "\n")


def cmd_certify(ns) -> int:
    try:
        behavior = read_behavior_file(ns.behavior_file)
    except (OSError, ValueError) as exc:
        raise ConfigError("behavior_file", str(exc)) from None
    result = check_local_model(build_lp(behavior), ns.tol)
    lines = [f"verdict: {result.verdict.value}", f"slack: {result.slack!r}"]
    if result.verdict is Verdict.NONLOCAL:
        functional = extract_inequality(result)
        lines.append(f"local_bound: {functional.local_bound!r}")
        lines.append(f"value: {functional.value_on(behavior)!r}")
        lines.append("coefficients (settings | outcomes | weight):")
        symbols = outcome_symbols(behavior.scenario.d)
        for (settings, outcomes), coeff in functional.as_dict().items():
            outs = ",".join(f"{symbols[o]:+d}" for o in outcomes)
            sets = ",".join(str(s) for s in settings)
            lines.append(f"{sets} | {outs} | {coeff!r}")
    _write(ns, "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellpv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the violation probability")
    _add_common(p)
    p.add_argument("--compare-models", action="store_true")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("sweep", help="estimate over an efficiency grid")
    _add_common(p)
    p.add_argument("--eta-grid", dest="eta_grid", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("bound", help="closed-form / quadrature / Monte Carlo bounds")
    p.add_argument("--method", choices=["closed", "quadrature", "mc"], required=True)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eta-asym", dest="eta_asym", default=None)
    p.add_argument("--eta-grid", dest="eta_grid", default=None)
    p.add_argument("--case", choices=["sym", "asym"], default="sym")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("critical", help="sampled upper bound on the critical efficiency")
    _add_common(p)
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--bisect-tol", dest="bisect_tol", type=float, default=1e-3)
    p.set_defaults(fn=cmd_critical)

    p = sub.add_parser("growth", help="relative growth when adding settings")
    _add_common(p, samples_default=100_000)
    p.add_argument("--m1", type=int, required=True)
    p.add_argument("--m2", type=int, required=True)
    p.set_defaults(fn=cmd_growth)

    p = sub.add_parser("ineq", help="named Bell expressions and critical efficiencies")
    p.add_argument("--name", required=True,
                   choices=["chsh-eta", "ic", "iabc1", "iabc2", "mermin-cg"])
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eta-asym", dest="eta_asym", default=None)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--state", default=None)
    p.add_argument("--grid", default="0.64:0.70:0.002")
    p.add_argument("--starts", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-critical", dest="report_critical", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_ineq)

    p = sub.add_parser("certify", help="verdict and extracted functional for a behavior file")
    p.add_argument("behavior_file")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_certify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.fn(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and signal runtime failure
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
