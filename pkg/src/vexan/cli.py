"""Command line entry point.

Subcommands::

    vexan verify CONFIG [--seed S] [--out PREFIX] [--jobs J] [--figures]
    vexan norm CSV --exponent SPEC [--tol T]
    vexan kernel-cert SPEC [--samples K] [--seed S]
    vexan list-suites

Exit codes: 0 success, 1 a verification or certification failed, 2 the
configuration or input could not be used.  The config format is described
in README.md.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .discretize import GridError, read_grid_function
from .exponent import ExponentError, ExponentField
from .harness import KINDS, ExperimentError, ExperimentSpec, aggregate_pass, run_suite
from .norms import NormError, luxemburg_norm
from .operators import (
    DEFAULT_SEED,
    KernelError,
    kernel_size_check,
    kernel_smoothness_check,
    make_fractional_kernel,
    make_mollified_cz_kernel,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

CONFIG_KEYS = {"domain", "exponents", "kernel", "suite", "seed", "output", "parallelism"}
DOMAIN_KEYS = {"dim", "half_extent", "resolutions"}
MOLLIFIED_KINDS = ("pointwise_sharp", "thm31_domination", "thm31_ratio", "thm32_ratio")
DEFAULT_OUTPUT = "vexan_report"


class ConfigError(ValueError):
    pass


# -- config -------------------------------------------------------------------


def _load_json(text_or_path: str) -> dict:
    """Parse inline JSON, or the contents of the named file."""
    text = text_or_path
    if not text_or_path.lstrip().startswith("{"):
        try:
            text = Path(text_or_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {text_or_path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {text_or_path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("expected a JSON object")
    return data


def _resolve_exponents(entry: dict, named: dict) -> dict:
    out = {}
    for slot, desc in entry.items():
        if isinstance(desc, str):
            if desc not in named:
                raise ConfigError(f"exponent {desc!r} is not defined in the config")
            desc = named[desc]
        out[slot] = desc
    return out


def _kernel_for(kind: str, kernel: dict) -> dict:
    if kind in MOLLIFIED_KINDS:
        return {k: v for k, v in kernel.items() if k in ("rho", "rho_cells")}
    if kind == "frac_bound":
        return {k: v for k, v in kernel.items() if k == "alpha"}
    return {}


def build_specs(config: dict, seed: int | None = None) -> list[ExperimentSpec]:
    """Turn a run config into experiment specs; raises ConfigError on anything unusable."""
    extra = set(config) - CONFIG_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    domain = dict(config.get("domain", {}))
    extra = set(domain) - DOMAIN_KEYS
    if extra:
        raise ConfigError(f"unknown domain keys: {sorted(extra)}")
    res = domain.get("resolutions")
    if res is not None and (not res or any(b <= a for a, b in zip(res, res[1:]))):
        raise ConfigError("domain resolutions must be a non-empty ascending list")
    base_seed = int(config.get("seed", 0) if seed is None else seed)
    if base_seed < 0:
        raise ConfigError("seed must be >= 0")
    named = config.get("exponents", {})
    for name, desc in named.items():
        try:
            ExponentField.from_dict({"dim": domain.get("dim", 1), **desc})
        except (ExponentError, KeyError, TypeError) as exc:
            raise ConfigError(f"exponent {name!r}: {exc}") from exc
    kernel = dict(config.get("kernel", {}))
    suite = config.get("suite", "all")
    if suite == "all":
        suite = [{"kind": k} for k in KINDS]
    if not isinstance(suite, list):
        raise ConfigError("suite must be a list of experiments or the string 'all'")

    specs = []
    for i, entry in enumerate(suite):
        if not isinstance(entry, dict):
            raise ConfigError(f"suite entry {i} is not an object")
        d = {k: v for k, v in domain.items() if v is not None}
        d.update(entry)
        d.setdefault("seed", base_seed)
        d["exponents"] = _resolve_exponents(entry.get("exponents", {}), named)
        if "kind" in d:
            d["kernel"] = {**_kernel_for(d["kind"], kernel), **entry.get("kernel", {})}
        try:
            specs.append(ExperimentSpec.from_dict(d))
        except (ExperimentError, ExponentError, TypeError) as exc:
            raise ConfigError(f"suite entry {i}: {exc}") from exc
    return specs


def _jobs(flag: int | None, config: dict) -> int:
    if flag is not None:
        return flag
    if "parallelism" in config:
        return int(config["parallelism"])
    return int(os.environ.get("VEXAN_JOBS", "1"))


# -- output -------------------------------------------------------------------


def _sweep_key(row: dict) -> str:
    key = f"value_N{row['N']}"
    if "rho_cells" in row:
        key += f"_rho{row['rho_cells']:g}"
    return key


def write_reports(reports: list[dict], prefix: str | Path) -> tuple[Path, Path]:
    """JSONL with one report per line plus a CSV summary with sweep columns."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    jsonl, summary = prefix.with_suffix(".jsonl"), prefix.with_suffix(".csv")
    with open(jsonl, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    sweep_cols: list[str] = []
    for r in reports:
        for row in r["resolutions"]:
            if _sweep_key(row) not in sweep_cols:
                sweep_cols.append(_sweep_key(row))
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "measured", "bound", "pass", "status", *sweep_cols])
        for r in reports:
            sweep = {_sweep_key(row): row["value"] for row in r["resolutions"]}
            w.writerow(
                [
                    r["kind"],
                    _cell(r["measured_constant"]),
                    _cell(r["asserted_bound"]),
                    r["pass"],
                    r.get("status", "ok"),
                    *(_cell(sweep.get(c)) for c in sweep_cols),
                ]
            )
    return jsonl, summary


def _cell(v) -> str:
    return "" if v is None else repr(v)


# -- subcommands ----------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        config = _load_json(args.config)
        specs = build_specs(config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    prefix = args.out or config.get("output", DEFAULT_OUTPUT)
    reports = run_suite(specs, _jobs(args.jobs, config))
    records = [r.to_json() for r in reports]
    jsonl, summary = write_reports(records, prefix)
    for r in records:
        verdict = "PASS" if r["pass"] else ("ERROR" if r["status"] == "error" else "FAIL")
        print(f"{verdict:5s} {r['kind']:22s} measured={r['measured_constant']}")
    print(f"wrote {jsonl} and {summary}")
    if args.figures:
        from . import plotting

        figs = plotting.write_figures(records, Path(str(prefix) + "_figures"))
        print(f"wrote {len(figs)} figures to {figs[0].parent if figs else prefix}")
    return EXIT_OK if aggregate_pass(reports) else EXIT_FAIL


def cmd_norm(args) -> int:
    try:
        f = read_grid_function(args.csv)
        desc = _load_json(args.exponent)
        desc.setdefault("dim", f.grid.dim)
        p = ExponentField.from_dict(desc)
        result = luxemburg_norm(f, p, tol=args.tol)
    except (ConfigError, GridError, ExponentError, NormError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(repr(result.value))
    return EXIT_OK


def _kernel_from(desc: dict):
    kind = desc.get("kind")
    extra = set(desc) - {"kind", "m", "n", "rho", "alpha"}
    if extra:
        raise ConfigError(f"unknown kernel keys: {sorted(extra)}")
    m, n = int(desc.get("m", 1)), int(desc.get("n", 1))
    if kind == "mollified_cz":
        return make_mollified_cz_kernel(m, n, float(desc["rho"]), certify=False)
    if kind == "fractional":
        alpha = float(desc["alpha"])
        if not 0 < alpha < m * n:
            raise ConfigError("need 0 < alpha < mn")
        return make_fractional_kernel(m, n, alpha)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def cmd_kernel_cert(args) -> int:
    try:
        K = _kernel_from(_load_json(args.spec))
    except (ConfigError, KernelError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = DEFAULT_SEED if args.seed is None else args.seed
    size = kernel_size_check(K, args.samples, seed)
    ax, ay = kernel_smoothness_check(K, args.samples, seed)
    ok = size <= K.A + 1e-12 and (K.kind != "mollified_cz" or max(ax, ay) <= K.A_smooth)
    out = {
        "kernel": K.describe(),
        "samples": args.samples,
        "seed": seed,
        "measured_A": size,
        "certified_A": K.A,
        "smoothness_x": ax,
        "smoothness_y": ay,
        "certified_A_smooth": K.A_smooth if K.kind == "mollified_cz" else None,
        "eps": K.eps,
        "pass": ok,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_list_suites(args) -> int:
    for kind in KINDS:
        print(kind)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vexan", description="Variable-exponent commutator verification")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run an experiment suite and write JSONL + CSV reports")
    v.add_argument("config", help="JSON run config")
    v.add_argument("--seed", type=int, help="override the config seed")
    v.add_argument("--out", help="output path prefix (default from config)")
    v.add_argument("--jobs", type=int, help="worker processes (default: config, then VEXAN_JOBS, then 1)")
    v.add_argument("--figures", action="store_true", help="also render resolution-sweep PNGs")
    v.set_defaults(func=cmd_verify)

    n = sub.add_parser("norm", help="Luxemburg norm of a grid function stored as CSV")
    n.add_argument("csv")
    n.add_argument("--exponent", required=True, help="exponent descriptor (inline JSON or file)")
    n.add_argument("--tol", type=float, default=1e-10)
    n.set_defaults(func=cmd_norm)

    k = sub.add_parser("kernel-cert", help="measure size and smoothness constants of a kernel")
    k.add_argument("spec", help='kernel descriptor, e.g. {"kind": "mollified_cz", "m": 2, "n": 1, "rho": 0.1}')
    k.add_argument("--samples", type=int, default=10_000)
    k.add_argument("--seed", type=int)
    k.set_defaults(func=cmd_kernel_cert)

    ls = sub.add_parser("list-suites", help="print the available experiment kinds")
    ls.set_defaults(func=cmd_list_suites)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
