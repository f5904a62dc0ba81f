"""Command line entry point: ``stostokes --test time --desk --out results/t1.csv``."""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import sys
from fractions import Fraction
from pathlib import Path

from .experiment import (
    DESK_PRESETS,
    KINDS,
    FULL_PRESETS,
    SINGLE_HEADER,
    ConfigError,
    ExperimentConfig,
    emit_csv,
    emit_meta,
    emit_paired_csv,
    emit_plot_data,
    run_deterministic_study,
    run_em_comparison,
    run_single,
    run_space_convergence,
    run_time_convergence,
    write_paired,
    write_table,
)

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in ("n_list", "M_list"):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    if name in ("n", "M", "samples", "seed", "fine_steps", "reference_M", "workers", "block_size"):
        return int(raw)
    if name in ("alpha", "nu", "T"):
        return float(Fraction(raw))
    if name == "check":
        return raw.lower() in ("1", "true", "yes", "on")
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys are :class:`ExperimentConfig` field names."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[experiment]\n" + text)
    out = {}
    for key, raw in parser["experiment"].items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        try:
            out[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return out


def _step_counts(klist: str, T: float) -> tuple[int, ...]:
    counts = []
    for tok in klist.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            k = Fraction(tok)
        except ValueError as exc:
            raise ConfigError(f"bad step size {tok!r}") from exc
        M = Fraction(T).limit_denominator() / k
        if k <= 0 or M.denominator != 1:
            raise ConfigError(f"step size {tok} does not divide T={T}")
        counts.append(int(M))
    return tuple(counts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stostokes", description=__doc__)
    p.add_argument("--test", choices=["time", "space", "det", "em", "single"], default=None)
    p.add_argument("--config", help="flat key = value file with ExperimentConfig fields")
    p.add_argument("--n", help="mesh subdivisions (comma list for space/det studies)")
    p.add_argument("--klist", help="comma list of step sizes, e.g. 1/64,1/128")
    p.add_argument("--samples", type=int)
    p.add_argument("--alpha", type=lambda s: float(Fraction(s)))
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=["milstein", "euler-maruyama"])
    p.add_argument("--pressure-alignment", choices=["pointwise", "average"])
    p.add_argument("--workers", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--desk", action="store_true", help="scaled-down preset that runs in minutes")
    return p


def config_from_args(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(read_config_file(args.config))
    kind = args.test or values.get("kind", "time")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base = dict((DESK_PRESETS if args.desk else FULL_PRESETS)[kind])
    base.update(values)
    base["kind"] = kind
    if kind == "det":
        base.setdefault("alpha", 0.0)
    T = base.get("T", 1.0)
    if args.n:
        ns = tuple(int(v) for v in args.n.split(","))
        if kind in ("space", "det") and (len(ns) > 1 or kind == "space"):
            base["n_list"] = ns
        else:
            base["n"] = ns[0]
    if args.klist:
        Ms = _step_counts(args.klist, T)
        if kind in ("space", "single") or (kind == "det" and len(Ms) == 1):
            base["M"] = Ms[0]
        else:
            base["M_list"] = Ms
    for name in ("samples", "alpha", "seed", "scheme", "workers", "out"):
        v = getattr(args, name)
        if v is not None:
            base[name] = v
    if args.pressure_alignment:
        base["pressure_alignment"] = args.pressure_alignment
    if args.block_size:
        base["block_size"] = args.block_size
    if kind == "det" and base.get("alpha", 0.0) != 0.0:
        raise ConfigError("the deterministic study requires alpha = 0")
    return ExperimentConfig(**base).validate()


def _write(rows_fn, out):
    if out is None:
        buf = io.StringIO()
        rows_fn(buf)
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            rows_fn(fh)


def _stem(out: str, suffix: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + suffix)


def run(cfg: ExperimentConfig) -> None:
    out = cfg.out
    if cfg.kind in ("time", "space"):
        table = run_time_convergence(cfg) if cfg.kind == "time" else run_space_convergence(cfg)
        _emit_table(table, out)
    elif cfg.kind == "det":
        study = run_deterministic_study(cfg)
        if out is None:
            for name, tab in (("spatial", study.spatial), ("temporal", study.temporal),
                              ("temporal, spatial floor subtracted", study.temporal_corrected)):
                sys.stdout.write(f"# {name}\n")
                _emit_table(tab, None)
        else:
            _emit_table(study.spatial, _stem(out, "_spatial.csv"))
            _emit_table(study.temporal, _stem(out, "_temporal.csv"))
            _emit_table(study.temporal_corrected, _stem(out, "_temporal_corrected.csv"))
    elif cfg.kind == "em":
        table = run_em_comparison(cfg)
        if out is None:
            write_paired(table, sys.stdout)
        else:
            emit_paired_csv(table, out)
            emit_meta(table.meta, _stem(out, ".meta.json"))
    else:
        rows = run_single(cfg)

        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SINGLE_HEADER)
            w.writerows([[repr(v) for v in r] for r in rows])

        _write(write, out)


def _emit_table(table, out) -> None:
    if out is None:
        write_table(table, sys.stdout)
        return
    emit_csv(table, out)
    emit_plot_data(table, _stem(str(out), ".plot.csv"))
    emit_meta(table.meta, _stem(str(out), ".meta.json"))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"stostokes: configuration error: {exc}", file=sys.stderr)
        return 2
    run(cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
