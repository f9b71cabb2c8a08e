"""Batch front end: ``python -m twistlab <experiment> [flags]``.

Every experiment resolves a flat parameter map from an optional ``key=value``
config file overridden by flags, then writes
``<outdir>/<experiment>-<hash>/{config.json, report.json, *.csv, tree.jsonl}``.
Reports are sorted JSON and carry no wall-clock data; the timestamp lives in
``stamp.json`` next to them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    BadnessViolation,
    BudgetExhausted,
    InsufficientPrecision,
    InvalidParameter,
    NoWitness,
    OutOfDomain,
    PrecisionExhausted,
    TwistlabError,
)
from .realnum import _split_top_level, parse_pair

EXIT_OK, EXIT_CONFIG, EXIT_PRECISION, EXIT_INVARIANT, EXIT_BADNESS = 0, 2, 3, 4, 5


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Param:
    type: type
    default: object = None
    required: bool = False
    help: str = ""


def _ints(text: str) -> str:
    # validated here, kept as text so the config stays readable
    try:
        [int(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None
    return text


_WEIGHTS = {"i": Param(float, required=True), "j": Param(float, required=True)}

SCHEMA: dict[str, dict[str, Param]] = {
    "profile": {
        "x": Param(str, required=True, help="pair of real sources, e.g. quad:(0+1*sqrt(2))/1,..."),
        **_WEIGHTS,
        "Q": Param(int, required=True, help="scan limit"),
    },
    "adversary": {
        **_WEIGHTS,
        "lacunary": Param(_ints, help="binary exponents of the lacunary pair"),
        "liouville": Param(_ints, help="growth,terms of a Liouville pair"),
        "rounding": Param(str, "minimal", help="witness rounding: tight or minimal"),
        "K": Param(int, 3, help="number of witness blocks"),
        "measure_budget": Param(int, 100_000, help="max rectangles for measuring R*"),
        "sabotage": Param(float, 1.0, help="shrink factor for S* (negative control)"),
    },
    "density": {
        "x": Param(str, required=True),
        **_WEIGHTS,
        "psi": Param(str, required=True, help="e.g. pow:C=2e-5,s=1"),
        "k": Param(int, 8),
        "t0": Param(int, 1),
        "T": Param(int, 4),
        "c": Param(str, "from-profile", help="number or from-profile[:Q=...]"),
    },
    "cantor": {
        "x": Param(str, required=True),
        **_WEIGHTS,
        "k": Param(int, required=True),
        "depth": Param(int, 3),
        "c": Param(str, "from-profile", help="number or from-profile[:Q=...]"),
        "budget": Param(int, 1 << 25, help="largest |q| the construction may scan"),
        "points": Param(int, 0, help="deep points to extract with certificates"),
    },
    "metric": {
        "family": Param(str, required=True, help="interval, sup_norm or multiplicative"),
        "psi": Param(str, required=True),
        "N": Param(int, required=True),
        "Q": Param(int, required=True),
        "seed": Param(int, required=True),
        "i": Param(float, 0.5),
        "j": Param(float, 0.5),
        "gallagher_N": Param(int, 0, help="also report Gallagher's partial sum to this N"),
    },
}

# flags accepted everywhere that never enter the hash or the reports
RUNTIME_KEYS = ("config", "outdir", "threads")


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ConfigError(f"{path}:{n}: expected key=value")
        out[key.strip()] = val.strip()
    return out


def resolve(experiment: str, flags: dict, file_values: dict[str, str] | None = None) -> dict:
    """Merge config-file values with flags, apply defaults and types."""
    schema = SCHEMA[experiment]
    file_values = file_values or {}
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {experiment}: {', '.join(unknown)}")
    out = {}
    for key, p in schema.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            if p.required:
                raise ConfigError(f"missing required parameter --{key}")
            out[key] = p.default
            continue
        try:
            out[key] = p.type(raw) if isinstance(raw, str) else raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if "i" in out and "j" in out:
        i, j = out["i"], out["j"]
        if not (i > 0 and j > 0 and abs(i + j - 1) < 1e-12):
            raise ConfigError(f"weights must satisfy i, j > 0 and i + j = 1 (got i={i}, j={j})")
    return out


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (tuple, set)):
        return list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_plain, allow_nan=True) + "\n"


def config_hash(experiment: str, config: dict) -> str:
    blob = json.dumps({"experiment": experiment, **config}, sort_keys=True, default=_plain)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def write_artifacts(outdir: str, experiment: str, config: dict, report: dict,
                    extra: dict[str, str]) -> Path:
    run_dir = Path(outdir) / f"{experiment}-{config_hash(experiment, config)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(dumps({"experiment": experiment, **config}))
    (run_dir / "report.json").write_text(dumps(report))
    for name, text in extra.items():
        (run_dir / name).write_text(text)
    stamp = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    (run_dir / "stamp.json").write_text(dumps(stamp))
    return run_dir


def config_to_text(config: dict) -> str:
    """``key=value`` rendering that ``read_config_file`` reads back."""
    return "".join(f"{k}={v}\n" for k, v in sorted(config.items()) if v is not None)


def load_config(path: str, experiment: str) -> dict:
    """A ``key=value`` file, or the ``config.json`` emitted by an earlier run."""
    if path.endswith(".json"):
        data = json.loads(Path(path).read_text())
        tag = data.pop("experiment", experiment)
        if tag != experiment:
            raise ConfigError(f"{path} belongs to experiment {tag!r}, not {experiment!r}")
        return {k: v for k, v in data.items() if v is not None}
    return read_config_file(path)


# ---------------------------------------------------------------- experiments


def _pair(cfg):
    x = parse_pair(cfg["x"])
    return x, tuple(_split_top_level(cfg["x"]))


def _profile_q(spec: str) -> int | None:
    """``from-profile`` or ``from-profile:Q=...``; returns Q or None."""
    _, _, rest = spec.partition(":")
    if not rest:
        return None
    key, eq, val = rest.partition("=")
    if key.strip() != "Q" or not eq:
        raise ConfigError(f"cannot parse c={spec!r}; expected from-profile:Q=<int>")
    return int(float(val))


def run_profile(cfg: dict):
    from .badness import profile

    x, text = _pair(cfg)
    prof = profile(x, cfg["i"], cfg["j"], cfg["Q"])
    prof.x_text = text
    report = {**prof.summary(), "records": [[q, v] for q, v in prof.records]}
    return report, {"records.csv": prof.records_csv()}, EXIT_OK


def run_adversary_cmd(cfg: dict):
    from .kurzweil import run_adversary
    from .psi import lacunary_witness
    from .realnum import lacunary_vector, liouville_vector

    if cfg["lacunary"] and cfg["liouville"]:
        raise ConfigError("give either lacunary or liouville, not both")
    if cfg["liouville"]:
        growth, terms = (int(t) for t in cfg["liouville"].split(","))
        vec = liouville_vector(growth, terms)
    else:
        vec = lacunary_vector([int(t) for t in (cfg["lacunary"] or "1,4,10,21").split(",")])
    w = lacunary_witness(vec, cfg["i"], cfg["j"], cfg["rounding"])
    run = run_adversary(vec.pair, cfg["i"], cfg["j"], w, cfg["K"],
                        measure_budget=cfg["measure_budget"], sabotage=cfg["sabotage"])
    report = {**run.to_dict(), "exponents": list(vec.exponents)}
    ok = run.margin > 0 and run.all_covered
    return report, {"blocks.csv": run.blocks_csv()}, EXIT_OK if ok else EXIT_INVARIANT


def run_density_cmd(cfg: dict):
    from .kurzweil import _badness_constant, run_density
    from .psi import parse_psi

    x, _ = _pair(cfg)
    c = None
    if cfg["c"].startswith("from-profile"):
        Q = _profile_q(cfg["c"])
        if Q is not None:
            c = _badness_constant(x, cfg["i"], cfg["j"], Q)
    else:
        c = float(cfg["c"])
    run = run_density(x, cfg["i"], cfg["j"], parse_psi(cfg["psi"]), cfg["k"], cfg["t0"],
                      cfg["T"], c=c)
    return run.to_dict(), {"levels.csv": run.levels_csv()}, EXIT_OK if run.ok else EXIT_INVARIANT


def run_cantor(cfg: dict):
    from .ktv import (KtvParams, box_dimension, build_tree, check_structure, extract_points,
                      params_from_profile)

    x, text = _pair(cfg)
    k, i, j, depth = cfg["k"], cfg["i"], cfg["j"], cfg["depth"]
    if cfg["c"].startswith("from-profile"):
        p = params_from_profile(x, k, i, j, depth, _profile_q(cfg["c"]))
    else:
        p = KtvParams(k, i, j, float(cfg["c"]), depth, "supplied")
    tree = build_tree(x, p, budget=cfg["budget"])
    tree.x_text = text
    report = {"tree": tree.summary(), "structure": check_structure(tree)}
    rows = ["m,nodes,pruned,scale,boxes"]
    ok = all(report["structure"].values())
    if tree.depth >= 2:
        dim = box_dimension(tree)
        report["dimension"] = dim.to_dict()
        ok &= report["tree"]["min_survivors_per_node"] >= p.survivor_floor
        for m, lv in enumerate(tree.levels, 1):
            rows.append(f"{m},{lv.ids.size},{len(lv.pruned)},{dim.scales[m - 1]!r},"
                        f"{dim.counts[m - 1]}")
        points = extract_points(tree, cfg["points"], x)
        report["points"] = [pt.to_dict() for pt in points]
        ok &= all(pt.certificate > 0 for pt in points)
    extra = {"levels.csv": "\n".join(rows) + "\n", "tree.jsonl": tree.to_jsonl()}
    return report, extra, EXIT_OK if ok else EXIT_INVARIANT


def run_metric(cfg: dict):
    from .metric import RegionFamily, gallagher_sum, gallagher_tag, run_mc
    from .psi import parse_psi

    psi = parse_psi(cfg["psi"])
    fam = RegionFamily(cfg["family"], psi, cfg["i"], cfg["j"])
    run = run_mc(fam, cfg["N"], cfg["Q"], cfg["seed"])
    report = run.to_dict()
    report["gallagher_tag"] = gallagher_tag(psi)
    if cfg["gallagher_N"]:
        total, err = gallagher_sum(psi, cfg["gallagher_N"])
        report["gallagher_sum"] = {"N": cfg["gallagher_N"], "value": total, "error": err}
    rows = ["eps,floor,empirical,sigma"]
    rows += [f"{e},{r['floor']!r},{r['empirical']!r},{r['sigma']!r}"
             for e, r in run.pz_table.items()]
    ok = all(run.verdicts().values())
    return report, {"pz_table.csv": "\n".join(rows) + "\n"}, EXIT_OK if ok else EXIT_INVARIANT


RUNNERS = {
    "profile": run_profile,
    "adversary": run_adversary_cmd,
    "density": run_density_cmd,
    "cantor": run_cantor,
    "metric": run_metric,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, schema in SCHEMA.items():
        sp = sub.add_parser(name)
        for key, p in schema.items():
            extra = " (required)" if p.required else f" (default {p.default})"
            sp.add_argument(f"--{key}", dest=key, default=None, help=p.help + extra)
        sp.add_argument("--config", help="key=value file or an emitted config.json")
        sp.add_argument("--outdir", default="runs", help="artifact root (default runs)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="parallelism cap (default: available cores)")
    return parser


def summary_lines(report: dict, prefix: str = "") -> list[str]:
    """Scalar fields of a report, one ``key  value`` line each."""
    lines = []
    for key in sorted(report):
        v = report[key]
        if isinstance(v, dict):
            lines += summary_lines(v, f"{prefix}{key}.")
        elif not isinstance(v, list):
            lines.append(f"{prefix + key:<36} {v}")
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in RUNTIME_KEYS + ("experiment",)}
    try:
        file_values = load_config(args.config, args.experiment) if args.config else {}
        cfg = resolve(args.experiment, flags, file_values)
        report, extra, code = RUNNERS[args.experiment](cfg)
    except (ConfigError, InvalidParameter, OutOfDomain, NoWitness, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientPrecision, PrecisionExhausted, BudgetExhausted) as exc:
        print(f"precision error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except BadnessViolation as exc:
        print(f"badness violation: {exc}", file=sys.stderr)
        return EXIT_BADNESS
    except TwistlabError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    run_dir = write_artifacts(args.outdir, args.experiment, cfg, report, extra)
    print("\n".join(summary_lines(report)))
    print(f"artifacts: {run_dir}")
    if code == EXIT_INVARIANT:
        print("invariant violation: see report.json", file=sys.stderr)
    return code
