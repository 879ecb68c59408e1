"""Command-line entry point: ``kreboot <command> [flags]``.

Every run writes its CSV/JSON artifacts and a ``manifest.json`` holding the
fully resolved parameters into ``--out``. A manifest is itself a valid
``--config`` file, so ``kreboot <command> --config manifest.json`` repeats a
run; explicit flags override values from the file.

Exit codes: 0 ok, 2 usage, 3 IO, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from kreboot import __version__
from kreboot import experiments as ex
from kreboot.boosting import (
    ConstantAlpha,
    ConstantEll,
    EpsilonBoosting,
    HarmonicAlpha,
    KReBooT,
    LogarithmicEll,
    Rboosting,
    RTboosting,
    Schedules,
    fit,
    load_model,
    save_model,
)
from kreboot.datagen import PRNG_NAME, DataGenConfig, InputLaw, generate, read_csv, write_csv
from kreboot.errors import DegenerateAtomError, InputDomainError, SingularSystemError
from kreboot.kernels import RadialKernel

log = logging.getLogger("kreboot")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

COMMANDS = ("generate", "fit", "predict", "sim1", "sim2", "sim3", "sim45", "rates")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "jobs": None,  # resolved to the logical CPU count
    "out": "out",
    "trials": None,
    "full": False,
    "c0": None,
    "kmax": None,
    "noise": None,
    "m": None,
    "method": "kreboot",
    "alpha": "harmonic",
    "L": None,
    "eps": 1e-2,
    "rt_c0": 1.0,
    "data": None,
    "model": None,
    "window": None,
    "input_law": "ball",
    "selection": "plain",
}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kreboot", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=None, help="flat JSON file of flag values (flags override it)")
    p.add_argument("--seed", type=int, default=S, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=S, help="worker processes for trials (default: CPU count)")
    p.add_argument("--out", default=S, help="output directory (default ./out)")
    p.add_argument("--trials", type=int, default=S, help="trials per cell (default 20; 100 with --full)")
    p.add_argument("--full", action="store_true", default=S, help="100 trials and the larger training sizes")
    p.add_argument("--c0", type=_floats, default=S, help="c0 (a list sweeps it in sim1)")
    p.add_argument("--kmax", type=int, default=S, help="boosting iterations")
    p.add_argument("--noise", type=_floats, default=S, help="noise variance(s)")
    p.add_argument("--m", type=_floats, default=S, help="training size(s)")
    p.add_argument("--method", default=S, choices=("kreboot", "rboosting", "rtboosting", "epsilon"))
    p.add_argument("--alpha", default=S, help="'harmonic' for 2/(k+2) or a constant in [0, 1)")
    p.add_argument("--L", type=float, default=S, help="constant l1 budget instead of c0*log(k+1)")
    p.add_argument("--eps", type=float, default=S, help="epsilon-boosting step (default 0.01)")
    p.add_argument("--rt-c0", dest="rt_c0", type=float, default=S, help="RTboosting cap constant (default 1)")
    p.add_argument("--data", default=S, help="dataset CSV (x1..xd,y[,clean])")
    p.add_argument("--model", default=S, help="model JSON for predict")
    p.add_argument("--window", type=_floats, default=S, help="rate-fit window 'start,end' (default 100,10000)")
    p.add_argument("--input-law", dest="input_law", default=S, choices=("ball", "cube"))
    p.add_argument("--selection", default=S, choices=("plain", "rescaled"), help="residual used to pick atoms")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(argv: list[str] | None = None) -> dict[str, Any]:
    args = build_parser().parse_args(argv)
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config {args.config}: not valid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"--config {args.config}: expected a JSON object")
        for key, value in loaded.items():
            if key.startswith("_") or key == "command":
                continue
            if key not in DEFAULTS:
                raise UsageError(f"--config: unknown field {key!r}")
            cfg[key] = value
    for key, value in vars(args).items():
        if key in DEFAULTS:
            cfg[key] = value
    cfg["command"] = args.command
    cfg["verbose"] = args.verbose
    return _validate(cfg)


def _scalar(cfg, key):
    v = cfg[key]
    if isinstance(v, list):
        if len(v) != 1:
            raise UsageError(f"--{key} takes a single value for {cfg['command']}")
        return v[0]
    return v


def _as_list(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _validate(cfg: dict[str, Any]) -> dict[str, Any]:
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    if cfg["trials"] is not None and cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    if cfg["kmax"] is not None and cfg["kmax"] < 1:
        raise UsageError("--kmax must be >= 1")
    for c0 in _as_list(cfg["c0"]) or []:
        if not c0 > 0:
            raise UsageError("--c0 must be positive")
    for noise in _as_list(cfg["noise"]) or []:
        if not noise >= 0:
            raise UsageError("--noise must be nonnegative")
    for m in _as_list(cfg["m"]) or []:
        if m != int(m) or m < 1:
            raise UsageError("--m must be a positive integer")
    if cfg["L"] is not None and not cfg["L"] > 0:
        raise UsageError("--L must be positive")
    if not cfg["eps"] > 0:
        raise UsageError("--eps must be positive")
    if not cfg["rt_c0"] > 0:
        raise UsageError("--rt-c0 must be positive")
    if cfg["alpha"] != "harmonic":
        try:
            a = float(cfg["alpha"])
        except ValueError:
            raise UsageError("--alpha must be 'harmonic' or a number in [0, 1)") from None
        if not 0 <= a < 1:
            raise UsageError("--alpha must lie in [0, 1)")
    if cfg["window"] is not None:
        w = _as_list(cfg["window"])
        if len(w) != 2 or not 1 <= w[0] < w[1] or any(v != int(v) for v in w):
            raise UsageError("--window needs two integers 'start,end' with 1 <= start < end")
    if cfg["command"] == "predict" and not cfg["model"]:
        raise UsageError("predict needs --model")
    if cfg["command"] == "predict" and not cfg["data"]:
        raise UsageError("predict needs --data")
    return cfg


def _trials(cfg, default=20, full=100):
    if cfg["trials"] is not None:
        return cfg["trials"]
    return full if cfg["full"] else default


def _alpha(cfg):
    return HarmonicAlpha() if cfg["alpha"] == "harmonic" else ConstantAlpha(float(cfg["alpha"]))


def _policy(cfg):
    method = cfg["method"]
    c0 = _scalar(cfg, "c0")
    if method == "kreboot":
        ell = ConstantEll(cfg["L"]) if cfg["L"] is not None else LogarithmicEll(0.5 if c0 is None else c0)
        return KReBooT(), Schedules(_alpha(cfg), ell)
    if method == "rboosting":
        return Rboosting(), Schedules(_alpha(cfg), LogarithmicEll(1.0))
    if method == "rtboosting":
        return RTboosting(cfg["rt_c0"]), Schedules(ConstantAlpha(0.0), LogarithmicEll(1.0))
    return EpsilonBoosting(cfg["eps"]), Schedules(ConstantAlpha(0.0), LogarithmicEll(1.0))


def _dataset(cfg, default_m=500, default_noise=1.0):
    if cfg["data"]:
        return read_csv(cfg["data"])
    m = _scalar(cfg, "m")
    noise = _scalar(cfg, "noise")
    return generate(DataGenConfig(
        int(default_m if m is None else m),
        default_noise if noise is None else noise,
        cfg["seed"],
        InputLaw(cfg["input_law"]),
    ))


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg, out: Path) -> dict[str, Any]:
    data = _dataset(cfg)
    write_csv(out / "data.csv", data)
    return {"files": ["data.csv"]}


def cmd_fit(cfg, out: Path) -> dict[str, Any]:
    data = _dataset(cfg)
    kernel = RadialKernel.wendland31()
    policy, schedules = _policy(cfg)
    k_max = cfg["kmax"] or 2000
    state, hist = fit(data, kernel, schedules, policy, k_max, selection_residual=cfg["selection"])
    save_model(out / "model.json", state, data.X, kernel, schedules, policy)
    rows = [
        {"iteration": k, "risk": r, "l1": l, "index": j, "beta": b, "clipped": int(c)}
        for k, r, l, j, b, c in zip(hist.iteration, hist.risk, hist.l1, hist.index, hist.beta, hist.clipped)
    ]
    ex.write_rows(out / "history.csv", ("iteration", "risk", "l1", "index", "beta", "clipped"), rows)
    if not cfg["data"]:
        write_csv(out / "data.csv", data)
    summary = {"final_risk": hist.risk[-1] if hist.risk else None, "final_l1": state.l1, "k": state.k}
    if np.all(np.isfinite(data.clean)):
        summary["train_mse_vs_clean"] = ex.test_mse(state.fitted, data)
    return {"files": ["model.json", "history.csv"], "summary": summary}


def cmd_predict(cfg, out: Path) -> dict[str, Any]:
    model = load_model(cfg["model"])
    data = read_csv(cfg["data"])
    pred = model.predict(data.X)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(data.X.shape[1])] + ["prediction"])
        for row, p in zip(data.X, pred):
            w.writerow([repr(float(v)) for v in row] + [repr(float(p))])
    return {"files": ["predictions.csv"]}


def cmd_sim1(cfg, out: Path) -> dict[str, Any]:
    c0 = _as_list(cfg["c0"])
    grid = ex.SweepSpec("c0", tuple(c0) if c0 else ex.C0_GRID, _trials(cfg, 20, 20))
    kw = {}
    if cfg["noise"] is not None:
        kw["noise_levels"] = tuple(_as_list(cfg["noise"]))
    if cfg["m"] is not None:
        kw["m"] = int(_scalar(cfg, "m"))
    sim = ex.Sim1Config(grid, k_max=cfg["kmax"] or (10000 if cfg["full"] else 2000), seed=cfg["seed"],
                        input_law=InputLaw(cfg["input_law"]), **kw)
    rows = ex.simulation_1(sim, jobs=cfg["jobs"])
    ex.write_rows(out / "sim1.csv", ex.SIM1_HEADER, rows)
    return {"files": ["sim1.csv"]}


def cmd_sim2(cfg, out: Path) -> dict[str, Any]:
    kw = {}
    if cfg["m"] is not None:
        kw["m_grid"] = tuple(int(v) for v in _as_list(cfg["m"]))
    elif cfg["full"]:
        kw["m_grid"] = ex.FULL_M_GRID
    if cfg["noise"] is not None:
        kw["noise_levels"] = tuple(_as_list(cfg["noise"]))
    c0 = _scalar(cfg, "c0")
    sim = ex.Sim2Config(trials=_trials(cfg), c0=0.5 if c0 is None else c0, k_max=cfg["kmax"], seed=cfg["seed"],
                        input_law=InputLaw(cfg["input_law"]), **kw)
    rows = ex.simulation_2(sim, jobs=cfg["jobs"])
    ex.write_rows(out / "sim2.csv", ex.SIM2_HEADER, rows)
    return {"files": ["sim2.csv"]}


def cmd_sim3(cfg, out: Path) -> dict[str, Any]:
    ms = [int(v) for v in _as_list(cfg["m"])] if cfg["m"] is not None else [300, 1000]
    noises = _as_list(cfg["noise"]) if cfg["noise"] is not None else [1.0, 2.0]
    c0 = _scalar(cfg, "c0")
    sim = ex.Sim3Config(
        settings=tuple((m, n) for m in ms for n in noises),
        trials=_trials(cfg),
        k_max=cfg["kmax"] or 5000,
        c0=0.5 if c0 is None else c0,
        rt_c0=cfg["rt_c0"],
        eps=cfg["eps"],
        seed=cfg["seed"],
        input_law=InputLaw(cfg["input_law"]),
    )
    table, per_trial = ex.simulation_3(sim, jobs=cfg["jobs"])
    ex.write_rows(out / "sim3.csv", ex.SIM3_HEADER, table)
    ex.write_rows(out / "sim3_trials.csv", ex.SIM3_TRIAL_HEADER, per_trial)
    header, rows = ex.table_layout(table)
    ex.write_rows(out / "sim3_table.csv", header, rows)
    return {"files": ["sim3.csv", "sim3_trials.csv", "sim3_table.csv"]}


def cmd_sim45(cfg, out: Path) -> dict[str, Any]:
    kw = {}
    if cfg["noise"] is not None:
        kw["noise_levels"] = tuple(_as_list(cfg["noise"]))
    if cfg["m"] is not None:
        kw["m"] = int(_scalar(cfg, "m"))
    c0 = _scalar(cfg, "c0")
    sim = ex.Sim45Config(trials=_trials(cfg), k_max=cfg["kmax"] or 10000, c0=0.5 if c0 is None else c0,
                         rt_c0=cfg["rt_c0"], seed=cfg["seed"], input_law=InputLaw(cfg["input_law"]), **kw)
    rows = ex.simulation_4_5(sim, jobs=cfg["jobs"])
    ex.write_rows(out / "sim45.csv", ex.SIM45_HEADER, rows)
    return {"files": ["sim45.csv"]}


def cmd_rates(cfg, out: Path) -> dict[str, Any]:
    window = tuple(int(v) for v in _as_list(cfg["window"])) if cfg["window"] else (100, 10_000)
    if cfg["kmax"] is not None and cfg["kmax"] != window[1]:
        raise UsageError("rates: --kmax must equal the window end (or be omitted)")
    m = _scalar(cfg, "m")
    c0 = _scalar(cfg, "c0")
    noise = _scalar(cfg, "noise")
    rate = ex.RateConfig(
        m=50 if m is None else int(m),
        c0=5.0 if c0 is None else c0,
        noise_variance=0.0 if noise is None else noise,
        window=window,
        alpha=None if cfg["alpha"] == "harmonic" else float(cfg["alpha"]),
        seed=cfg["seed"],
        input_law=InputLaw(cfg["input_law"]),
    )
    report, hist = ex.convergence_rate(rate)
    for w in report.warnings:
        log.warning("rates: %s", w)
    (out / "rates.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    rows = [{"k": k, "risk": r, "excess": r - report.optimum_risk, "l1": l}
            for k, r, l in zip(hist.iteration, hist.risk, hist.l1)]
    ex.write_rows(out / "rates.csv", ("k", "risk", "excess", "l1"), rows)
    return {"files": ["rates.json", "rates.csv"], "summary": report.to_dict()}


HANDLERS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "sim1": cmd_sim1,
    "sim2": cmd_sim2,
    "sim3": cmd_sim3,
    "sim45": cmd_sim45,
    "rates": cmd_rates,
}


def run(cfg: dict[str, Any]) -> int:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_IO
    if not os.access(out, os.W_OK):
        log.error("output directory %s is not writable", out)
        return EXIT_IO
    t0 = time.perf_counter()
    try:
        result = HANDLERS[cfg["command"]](cfg, out)
    except (UsageError, InputDomainError) as exc:
        log.error("usage error: %s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("IO error: %s", exc)
        return EXIT_IO
    except (SingularSystemError, DegenerateAtomError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    manifest = {k: v for k, v in cfg.items() if k in DEFAULTS or k == "command"}
    manifest["_meta"] = {
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "prng": PRNG_NAME,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        **result,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve(argv)
    except UsageError as exc:
        print(f"kreboot: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"kreboot: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.DEBUG if cfg.pop("verbose") else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
