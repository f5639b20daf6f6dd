"""Command-line entry point: ``truend synth|optimise|apply|impact``.

Settings come from three layers, later ones winning: built-in defaults, a
flat ``key=value`` file given by ``--config``, and command-line flags. Keys
in the file use the flag names with ``-`` replaced by ``_``; any
:class:`~truend.synthgen.SynthParams` field is also accepted for ``synth``.

Every run writes ``manifest.txt`` next to its outputs: the effective settings
(paths reduced to file names, thread count left out) and a sha256 of every
input and output file, so two runs can be compared byte for byte.

Exit codes: 0 success, 1 usage error, 2 data error, 3 computation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from ._io import kv_text, write_kv
from .data_model import ingest_csv, subsample_clustered, write_csv
from .errors import ComputationError, DataError, InvalidParams, MismatchedPortfolios
from .impact import (
    align_curves,
    curve_mae,
    discrete_hazard,
    distribution_summary,
    extract_default_spells,
    km_estimator,
    workout_loss_rate,
    write_spells,
)
from .optimiser import SearchSpace, optimise
from .synthgen import SynthParams, generate
from .treatment import Scope, age_impact, apply_policy

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3

DEFAULTS = {
    "input": None,
    "out": ".",
    "thresholds": "default24",
    "tau": 6,
    "min_len": 1,
    "w": "auto",
    "scope": "terminated",
    "discount_rate": 0.0,
    "horizon": 120,
    "seed": 0,
    "subsample": None,
    "threads": None,
    "b": None,
    "before": None,
    "after": None,
    "bins": 20,
}

# settings that do not influence output bytes
_NOT_ECHOED = {"threads", "config", "out"}
_PATH_KEYS = {"input", "before", "after"}
_SYNTH_FIELDS = {f.name: f for f in dataclasses.fields(SynthParams) if f.init}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# config ---------------------------------------------------------------------

def read_config(path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_").lower()] = value
    return cfg


def _to_int(key, value):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{key} must be an integer, got {value!r}") from None
    if not f.is_integer():
        raise UsageError(f"{key} must be an integer, got {value!r}")
    return int(f)


def _to_float(key, value):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{key} must be a number, got {value!r}") from None
    if not math.isfinite(f):
        raise UsageError(f"{key} must be finite")
    return f


def _merge(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "synth_overrides"):
            continue
        if value is not None:
            settings[key] = value
    for item in getattr(args, "synth_overrides", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        settings[k.strip().replace("-", "_")] = v.strip()
    return settings


def _synth_params(settings) -> SynthParams:
    kwargs = {}
    for name, f in _SYNTH_FIELDS.items():
        if name not in settings or settings[name] is None:
            continue
        raw = settings[name]
        default = f.default
        if name.endswith("_range"):
            parts = raw.split(",") if isinstance(raw, str) else list(raw)
            if len(parts) != 2:
                raise UsageError(f"{name} needs two comma-separated numbers")
            kwargs[name] = tuple(_to_float(name, p) for p in parts)
        elif isinstance(default, bool):
            kwargs[name] = str(raw).strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int) and name != "closing_balance_cap":
            kwargs[name] = _to_int(name, raw)
        elif isinstance(default, str):
            kwargs[name] = str(raw)
        elif raw in ("", "none", "None"):
            kwargs[name] = None
        else:
            kwargs[name] = _to_float(name, raw)
    if "eps" in settings and settings["eps"] is not None:
        kwargs["tail_balance_cap"] = _to_float("eps", settings["eps"])
    kwargs.setdefault("seed", _to_int("seed", settings["seed"]))
    return SynthParams(**kwargs)


def _common(settings):
    tau = _to_int("tau", settings["tau"])
    min_len = _to_int("min_len", settings["min_len"])
    if tau < 1:
        raise UsageError("tau must be >= 1")
    if min_len < 1:
        raise UsageError("min_len must be >= 1")
    return tau, min_len


# manifest -------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _echo(settings) -> list:
    items = []
    for key in sorted(settings):
        if key in _NOT_ECHOED:
            continue
        value = settings[key]
        if key in _PATH_KEYS and value is not None:
            value = Path(value).name
        items.append((key, value))
    return items


def _write_manifest(out: Path, command, settings, inputs, outputs):
    lines = [f"command={command}", f"version={__version__}"]
    lines += [f"config.{k}={'' if v is None else v}" for k, v in _echo(settings)]
    lines += [f"input.{Path(p).name}=sha256:{_sha256(p)}" for p in inputs]
    lines += [f"output.{Path(p).name}=sha256:{_sha256(p)}" for p in sorted(outputs, key=lambda p: Path(p).name)]
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _outdir(settings) -> Path:
    out = Path(settings["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _need(settings, key):
    if settings.get(key) in (None, ""):
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return settings[key]


# subcommands ----------------------------------------------------------------

def cmd_synth(settings) -> list:
    params = _synth_params(settings)
    out = _outdir(settings)
    portfolio, truth = generate(params)
    files = [write_csv(portfolio, out / "portfolio.csv"), truth.write_csv(out / "truth.csv")]
    settings.update({k: getattr(params, k) for k in _SYNTH_FIELDS})
    return [], files


def _space(settings) -> SearchSpace:
    t = settings["thresholds"]
    return SearchSpace.parse(",".join(str(x) for x in t) if isinstance(t, (list, tuple)) else t)


def _w(settings):
    w = settings["w"]
    if w is None or str(w).strip().lower() == "auto":
        return None
    return _to_float("w", w)


def cmd_optimise(settings) -> list:
    src = _need(settings, "input")
    tau, min_len = _common(settings)
    space = _space(settings)
    w = _w(settings)
    portfolio = ingest_csv(src)
    out = _outdir(settings)
    outcome = optimise(portfolio, space, tau=tau, min_len=min_len, w=w)
    files = [outcome.write_curve(out / "curve.csv"), out / "outcome.txt"]
    files[1].write_text(outcome.as_text())
    if settings.get("subsample") not in (None, ""):
        n = _to_int("subsample", settings["subsample"])
        sub = subsample_clustered(portfolio, n, _to_int("seed", settings["seed"]))
        sub_outcome = optimise(sub, space, tau=tau, min_len=min_len, w=w)
        files.append(sub_outcome.write_curve(out / "curve_subsample.csv"))
        path = out / "outcome_subsample.txt"
        path.write_text(sub_outcome.as_text() + kv_text([("subsample_n", n)]))
        files.append(path)
    return [src], files


def cmd_apply(settings) -> list:
    src = _need(settings, "input")
    tau, min_len = _common(settings)
    b_raw = _need(settings, "b")
    portfolio = ingest_csv(src)
    if str(b_raw).strip().lower() == "auto":
        b = optimise(portfolio, _space(settings), tau=tau, min_len=min_len, w=_w(settings)).b_star
    else:
        b = _to_float("b", b_raw)
    scope = Scope.parse(settings["scope"])
    out = _outdir(settings)
    treated, report = apply_policy(portfolio, b, tau=tau, min_len=min_len, scope=scope)
    files = [write_csv(treated, out / "treated.csv"), report.write_csv(out / "treatment_report.csv")]
    return [src], files


def _losses(spells, rate):
    return np.array([workout_loss_rate(s, rate) for s in spells if s.written_off and s.ead > 0])


def _histograms(out, name, before, after, bins):
    both = np.r_[before, after]
    files = []
    if both.size == 0:
        return files
    rng = (float(both.min()), float(both.max()))
    if rng[0] == rng[1]:
        rng = (rng[0] - 0.5, rng[1] + 0.5)
    for tag, values in (("before", before), ("after", after)):
        if values.size:
            hist = distribution_summary(values, bins=bins, range=rng)
            files.append(hist.write_csv(out / f"{name}_hist_{tag}.csv"))
    return files


def cmd_impact(settings) -> list:
    before_path = settings.get("before") or settings.get("input")
    if before_path in (None, ""):
        raise UsageError("--before (or --input) is required")
    after_path = _need(settings, "after")
    rate = _to_float("discount_rate", settings["discount_rate"])
    if rate < 0:
        raise InvalidParams("discount_rate must be >= 0")
    horizon = _to_int("horizon", settings["horizon"])
    if horizon < 1:
        raise InvalidParams("horizon must be >= 1")
    bins = _to_int("bins", settings["bins"])

    before, after = ingest_csv(before_path), ingest_csv(after_path)
    if before.loan_ids != after.loan_ids:
        raise MismatchedPortfolios(
            f"{Path(before_path).name} and {Path(after_path).name} hold different loan_id sets"
        )
    if np.any(after.lengths > before.lengths):
        raise MismatchedPortfolios("after-treatment histories must not be longer than before")
    out = _outdir(settings)
    files = []

    spells_b, spells_a = extract_default_spells(before), extract_default_spells(after)
    files.append(write_spells(spells_b, out / "spells_before.csv", rate))
    files.append(write_spells(spells_a, out / "spells_after.csv", rate))

    mae = []
    if spells_b and spells_a:
        cb, ca = align_curves(km_estimator(spells_b), km_estimator(spells_a), horizon)
        cb, ca = discrete_hazard(cb), discrete_hazard(ca)
        files.append(cb.write_csv(out / "survival_before.csv"))
        files.append(ca.write_csv(out / "survival_after.csv"))
        for tag, c in (("before", cb), ("after", ca)):
            path = out / f"hazard_{tag}.csv"
            with open(path, "w", newline="\n") as fh:
                fh.write("t,at_risk,events,h\n")
                for t, n, d, h in zip(c.t.tolist(), c.at_risk.tolist(), c.events.tolist(), c.h.tolist()):
                    fh.write(f"{t},{n},{d},{h!r}\n")
            files.append(path)
        mae = [("horizon", int(cb.t[-1])), ("mae_F", curve_mae(cb.F, ca.F, horizon)),
               ("mae_S", curve_mae(cb.S, ca.S, horizon)), ("mae_f", curve_mae(cb.f_dens, ca.f_dens, horizon)),
               ("mae_h", curve_mae(cb.h, ca.h, horizon))]
    else:
        mae = [("horizon", horizon), ("mae_F", None), ("mae_S", None), ("mae_f", None), ("mae_h", None)]
    files.append(write_kv(out / "mae.txt", mae))

    loss_b, loss_a = _losses(spells_b, rate), _losses(spells_a, rate)
    files += _histograms(out, "age", before.ages.astype(np.float64), after.ages.astype(np.float64), bins)
    files += _histograms(out, "loss", loss_b, loss_a, bins)

    ages = age_impact(before, after)
    summary = [
        ("loans", before.N),
        ("spells_before", len(spells_b)), ("spells_after", len(spells_a)),
        ("writeoffs_before", int(sum(s.written_off for s in spells_b))),
        ("writeoffs_after", int(sum(s.written_off for s in spells_a))),
        ("mean_loss_before", math.fsum(loss_b) / loss_b.size if loss_b.size else None),
        ("mean_loss_after", math.fsum(loss_a) / loss_a.size if loss_a.size else None),
        ("mean_age_before", ages.mean_before), ("mean_age_after", ages.mean_after),
        ("median_age_before", ages.median_before), ("median_age_after", ages.median_after),
    ]
    files.append(write_kv(out / "impact_summary.txt", summary))
    return [before_path, after_path], files


COMMANDS = {"synth": cmd_synth, "optimise": cmd_optimise, "apply": cmd_apply, "impact": cmd_impact}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="truend", description="Detect and remove trailing zero-valued balances in loan panels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key=value settings file")
        p.add_argument("--out", help="output directory (default: .)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="cap on worker threads")
        return p

    def detection(p):
        p.add_argument("--input", help="loan panel CSV")
        p.add_argument("--thresholds", help="'default24' or comma-separated list")
        p.add_argument("--tau", type=int)
        p.add_argument("--min-len", dest="min_len", type=int)
        p.add_argument("--w", help="loan-objective weight or 'auto'")
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic portfolio and its ground truth"))
    p.add_argument("--n-loans", dest="n_loans", type=int)
    p.add_argument("--tzb-fraction", dest="tzb_fraction", type=float)
    p.add_argument("--eps", type=float, help="tail balance cap")
    p.add_argument("--genuine-floor", dest="genuine_floor", type=float)
    p.add_argument("--unflagged-fraction", dest="unflagged_fraction", type=float)
    p.add_argument("--set", dest="synth_overrides", action="append", metavar="KEY=VALUE",
                   help="any other generator parameter")

    p = detection(common(sub.add_parser("optimise", help="search the threshold space for b*")))
    p.add_argument("--subsample", type=int, help="also optimise a clustered subsample of this many loans")

    p = detection(common(sub.add_parser("apply", help="discard TZB periods at a chosen threshold")))
    p.add_argument("--b", help="threshold, or 'auto' to optimise first")
    p.add_argument("--scope", help="'terminated' (default) or 'all'")

    p = common(sub.add_parser("impact", help="compare portfolios before and after treatment"))
    p.add_argument("--input", help="alias for --before")
    p.add_argument("--before")
    p.add_argument("--after")
    p.add_argument("--discount-rate", dest="discount_rate", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--bins", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        settings = _merge(args)
        if settings.get("threads") not in (None, ""):
            _kernels.set_threads(_to_int("threads", settings["threads"]))
        inputs, outputs = COMMANDS[args.command](settings)
        _write_manifest(Path(settings["out"]), args.command, settings, inputs, outputs)
    except UsageError as exc:
        print(f"truend {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidParams, ValueError) as exc:
        if isinstance(exc, DataError) and not isinstance(exc, InvalidParams):
            print(f"truend {args.command}: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"truend {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ComputationError as exc:
        print(f"truend {args.command}: computation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        name = exc.filename if exc.filename else ""
        print(f"truend {args.command}: data error: {exc.strerror or exc} {name}".rstrip(), file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
