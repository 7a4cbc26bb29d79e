"""Command-line front end.

Subcommands: ``simulate`` (integrate a scenario and write trajectory CSV +
JSON run summary), ``check`` (capture verdict), ``estimate`` (couplings and
timescales), ``coefficients`` (expansion-table CSV), ``cascade`` (resonance
history).  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass

from .analysis import (
    capture_certainty,
    cascade,
    core_condition,
    crust_condition,
    detect_lock,
)
from .bodies import (
    SECONDS_PER_YEAR,
    couplings,
    coupling_ratio,
    load_body,
    moments_of_inertia,
    timescales,
)
from .kepler import expansion_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class ScenarioConfig:
    """Fully resolved simulation scenario; serialized into every run summary."""

    coefficient_source: str          # "eq35" or "derived-from-body"
    body: str | None
    k: int
    initial: tuple[float, float, float, float]  # gamma, v_gamma, eta, v_eta
    t_end: float
    tol: float
    sample_dt: float | None
    stride: int
    time_unit: str
    unaveraged: bool
    output: str | None
    summary: str | None

    def validate(self) -> None:
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.coefficient_source == "derived-from-body" and self.body is None:
            raise ValueError("a body file is required to derive coefficients")


# Initial conditions and horizons of the two reference scenarios (years).
SCENARIO_PRESETS: dict[str, dict] = {
    "fig3": {"coefficient_source": "eq35", "k": 1,
             "initial": (0.1, 1000.0, 0.1, 50.0), "t_end": 1e5,
             "tol": 1e-8, "sample_dt": 1.0, "stride": 1},
    "fig4": {"coefficient_source": "eq35", "k": 1,
             "initial": (0.1, 1000.0, 0.1, 5.0), "t_end": 1e7,
             "tol": 1e-8, "sample_dt": 100.0, "stride": 1},
}


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="coreshell",
        description="Core-shell spin-orbit resonance simulator and estimates.")
    sub = top.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a scenario")
    sim.add_argument("--preset", choices=sorted(SCENARIO_PRESETS),
                     help="named scenario preset")
    sim.add_argument("--body", help="body name or parameter-file path")
    sim.add_argument("--k", type=int, help="resonance index (default 1)")
    sim.add_argument("--coefficients", choices=["eq35", "derived"],
                     help="coefficient source (default: preset's, else derived)")
    sim.add_argument("--initial", help="gamma,v_gamma,eta,v_eta")
    sim.add_argument("--t-end", type=float, dest="t_end", help="duration (yr)")
    sim.add_argument("--tol", type=float, help="relative tolerance")
    sim.add_argument("--sample-dt", type=float, dest="sample_dt",
                     help="output sample spacing (default 1 yr)")
    sim.add_argument("--stride", type=int, default=1,
                     help="write every N-th sample to the CSV")
    sim.add_argument("--unaveraged", action="store_true",
                     help="integrate the full time-dependent equations "
                          "(needs --body)")
    sim.add_argument("--out", help="trajectory CSV path")
    sim.add_argument("--summary", help="JSON summary path (default: stdout)")

    chk = sub.add_parser("check", help="capture verdict for a body")
    chk.add_argument("--body", required=True)
    chk.add_argument("--k", type=int, default=1)
    chk.add_argument("--v-eta", type=float, default=0.0, dest="v_eta",
                     help="core rate for the crust condition, rad/s")

    est = sub.add_parser("estimate", help="couplings and timescales for a body")
    est.add_argument("--body", required=True)
    est.add_argument("--k", type=int, default=1)

    cof = sub.add_parser("coefficients", help="expansion-table CSV")
    cof.add_argument("--e", type=float, required=True)
    cof.add_argument("--n-max", type=int, default=8, dest="n_max")
    cof.add_argument("--out", help="CSV path (default: stdout)")

    cas = sub.add_parser("cascade", help="multi-resonance cascade history")
    cas.add_argument("--body", required=True)
    cas.add_argument("--k-start", type=int, default=1, dest="k_start")
    cas.add_argument("--e0", type=float, help="initial eccentricity "
                     "(default: the body's)")
    cas.add_argument("--spin0", type=float,
                     help="initial rotation rate, rad/s")
    cas.add_argument("--freeze-e", action="store_true", dest="freeze_e",
                     help="hold the eccentricity fixed")
    cas.add_argument("--out", help="CSV path (default: stdout)")
    cas.add_argument("--json", action="store_true",
                     help="emit JSON instead of CSV")
    return top


def _resolve_scenario(args) -> ScenarioConfig:
    base = {"coefficient_source": "derived-from-body", "k": 1,
            "initial": (0.1, 0.0, 0.1, 0.0), "t_end": 100.0, "tol": 1e-8,
            "sample_dt": None, "stride": 1}
    if args.preset:
        base.update(SCENARIO_PRESETS[args.preset])
    if args.coefficients:
        base["coefficient_source"] = ("eq35" if args.coefficients == "eq35"
                                      else "derived-from-body")
    if args.k is not None:
        base["k"] = args.k
    if args.initial:
        parts = [float(v) for v in args.initial.split(",")]
        if len(parts) != 4:
            raise ValueError("--initial needs gamma,v_gamma,eta,v_eta")
        base["initial"] = tuple(parts)
    if args.t_end is not None:
        base["t_end"] = args.t_end
    if args.tol is not None:
        base["tol"] = args.tol
    if args.sample_dt is not None:
        base["sample_dt"] = args.sample_dt
    if args.stride != 1:
        base["stride"] = args.stride
    cfg = ScenarioConfig(body=args.body, time_unit="yr",
                         unaveraged=bool(args.unaveraged),
                         output=args.out, summary=args.summary, **base)
    cfg.validate()
    return cfg


def cmd_simulate(args) -> int:
    # Deferred import: keeps the estimate/check/coefficients paths free of
    # the compiled-kernel dependency.
    from .dynamics import (
        COEFFICIENT_PRESETS,
        ModelCoefficients,
        SpinState,
        Trajectory,
        UnaveragedField,
        AveragedField,
        integrate,
    )
    import numpy as np

    cfg = _resolve_scenario(args)
    body = load_body(cfg.body) if cfg.body else None
    if cfg.coefficient_source == "eq35":
        coeffs = COEFFICIENT_PRESETS["eq35"]
    else:
        coeffs = ModelCoefficients.from_body(body, cfg.k, time_unit="yr")
    if cfg.unaveraged:
        if body is None:
            raise ValueError("--unaveraged needs --body")
        field = UnaveragedField.from_body(body, cfg.k, time_unit="yr")
    else:
        field = AveragedField(coeffs)

    initial = SpinState(0.0, *cfg.initial)
    if cfg.t_end <= 0.0:
        data = np.array([[0.0, *cfg.initial]])
        traj = Trajectory(data=data, naccepted=0, nrejected=0, rtol=cfg.tol,
                          atol=cfg.tol * 1e-3, time_unit=cfg.time_unit)
    else:
        traj = integrate(field, initial, cfg.t_end, cfg.tol,
                         sample_dt=cfg.sample_dt)

    verdicts = {}
    for which in ("crust", "core"):
        try:
            verdicts[which] = detect_lock(traj, which).label()
        except ValueError:
            verdicts[which] = "unclassified (trajectory too short)"

    if cfg.output:
        traj.to_csv(cfg.output, stride=cfg.stride)
    summary = {
        "config": asdict(cfg),
        "coefficients": {
            "A_crust": coeffs.A_crust, "A_core": coeffs.A_core,
            "inv_tau_gamma": coeffs.inv_tau_gamma,
            "inv_tau_eta": coeffs.inv_tau_eta,
            "inv_tau_eta_prime": coeffs.inv_tau_eta_prime,
            "drift": coeffs.drift, "k": coeffs.k,
            "time_unit": coeffs.time_unit,
        },
        "integrator": traj.stats(),
        "lock_verdicts": verdicts,
        "final_state": {
            "t": traj.final.t, "gamma": traj.final.gamma,
            "v_gamma": traj.final.v_gamma, "eta": traj.final.eta,
            "v_eta": traj.final.v_eta,
        },
    }
    _emit_json(summary, cfg.summary)
    return EXIT_OK


def cmd_check(args) -> int:
    body = load_body(args.body)
    verdict = capture_certainty(body, args.k, v_eta=args.v_eta)
    core = core_condition(body, args.k)
    crust = crust_condition(body, args.k, args.v_eta)
    _emit_json({
        "inputs": {"body": args.body, "k": args.k, "v_eta": args.v_eta},
        "verdict": verdict.to_dict(),
        "crust_condition": {
            "satisfied": crust.satisfied, "threshold": crust.threshold,
            "gamma_bar": crust.gamma_bar,
        },
        "core_condition": {
            "satisfied": core.satisfied, "e": core.e, "e_min": core.e_min,
            "e_min_field": core.e_min_field,
            "unsatisfiable": core.unsatisfiable,
        },
    }, None)
    return EXIT_OK


def cmd_estimate(args) -> int:
    body = load_body(args.body)
    cset = couplings(body, args.k)
    tau_g, tau_e, tau_ep = timescales(cset)
    C, C_prime = moments_of_inertia(body)
    _emit_json({
        "inputs": {"body": args.body, "k": args.k},
        "lambda": cset.lam,
        "lambda_prime": cset.lam_prime,
        "lambda_ratio": coupling_ratio(body, args.k),
        "C": C,
        "C_prime": C_prime,
        "tau_gamma_s": tau_g,
        "tau_eta_s": tau_e,
        "tau_eta_prime_s": tau_ep,
        "tau_eta_prime_yr": tau_ep / SECONDS_PER_YEAR,
    }, None)
    return EXIT_OK


def cmd_coefficients(args) -> int:
    table = expansion_table(args.e, args.n_max)
    lines = ["n,a_n,c_n"]
    for n in range(table.max_order + 1):
        c = "" if n == 0 else repr(table.c_coeffs[n - 1])
        lines.append(f"{n},{table.a_coeffs[n]!r},{c}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_cascade(args) -> int:
    body = load_body(args.body)
    e0 = args.e0 if args.e0 is not None else body.e
    episodes = cascade(body, args.k_start, e0, spin0=args.spin0,
                       freeze_eccentricity=args.freeze_e)
    if args.json:
        _emit_json({
            "inputs": {"body": args.body, "k_start": args.k_start, "e0": e0,
                       "spin0": args.spin0, "freeze_e": args.freeze_e},
            "episodes": [ep.to_dict() for ep in episodes],
        }, args.out)
        return EXIT_OK
    lines = ["k,t_enter,t_exit,e_enter,e_exit,exit_cause"]
    for ep in episodes:
        lines.append(f"{ep.k},{ep.t_enter!r},{ep.t_exit!r},"
                     f"{ep.e_enter!r},{ep.e_exit!r},{ep.exit_cause}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sanitize(value):
    # Strict JSON has no Infinity literal; cascade episodes use it for
    # open-ended exit times.
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(_sanitize(payload), indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_COMMANDS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "estimate": cmd_estimate,
    "coefficients": cmd_coefficients,
    "cascade": cmd_cascade,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
