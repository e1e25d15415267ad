"""Batch command line: ``idauth-lab <command> --config FILE``.

Commands: ``region``, ``binary``, ``simulate``, ``attack`` and ``check``.
Reports go to ``--out`` (default ``$IDAUTH_LAB_OUT`` or ``./idauth-out``) and
embed the resolved configuration and seed.  The thread count is left out of
reports so outputs are byte-identical for any ``--threads``.

Exit codes: 0 success, 1 property failure, 2 invalid config, 3 resource cap.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import probability as pr
from .analysis import (ExactCapExceeded, build_exact_model, best_response_csv,
                       exact_error_probability, exact_mfap, map_attack,
                       markov_chain_suite, metrics_report, monte_carlo)
from .codec import (CodebookSpec, CodecError, MemoryCapExceeded,
                    TypicalityParams, generate_codebook)
from .region import (AuxChannels, RegionError, SourceModel, _fmt,
                     binary_erasure_closed_form, bsc_aux, erasure_cascade,
                     evaluate_corner, frontier_csv, optimize_frontier)

SCHEMA_VERSION = 1
OUT_ENV = "IDAUTH_LAB_OUT"
COMMANDS = ("region", "binary", "simulate", "attack", "check")

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

def _prob(v, name):
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"{name}={v!r} outside [0, 1]")
    return v


def parse_source(d: dict) -> SourceModel:
    if "erasure" in d and ("px" in d or "pyz_given_x" in d):
        raise ConfigError("source: give either the erasure shorthand or tables")
    try:
        if "erasure" in d:
            e = d["erasure"]
            return erasure_cascade(_prob(e["p"], "p"), _prob(e["q"], "q"))
        return SourceModel.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"source: missing or bad field {exc}") from None
    except (RegionError, pr.ProbabilityError) as exc:
        raise ConfigError(f"source: {exc}") from None


def parse_aux(d: dict) -> AuxChannels:
    keys = {"bsc", "identity"} & set(d)
    if len(keys) > 1 or (keys and ("pvx" in d or "puv" in d)):
        raise ConfigError("aux: give exactly one of bsc, identity or tables")
    try:
        if "bsc" in d:
            b = d["bsc"]
            return bsc_aux(_prob(b["alpha"], "alpha"), b.get("u", "constant"))
        if "identity" in d:
            u = d["identity"].get("u", "constant")
            puv = pr.constant_channel(2) if u == "constant" else pr.identity_channel(2)
            return AuxChannels(pr.identity_channel(2), puv)
        return AuxChannels.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"aux: missing or bad field {exc}") from None
    except (RegionError, pr.ProbabilityError) as exc:
        raise ConfigError(f"aux: {exc}") from None


def parse_codec(d: dict, src: SourceModel, aux: AuxChannels) -> CodebookSpec:
    try:
        return CodebookSpec(int(d["n"]), int(d.get("k_users", 2)),
                            float(d.get("r_i", 0.0)), src, aux,
                            TypicalityParams(float(d["epsilon"]),
                                             float(d["delta_eps"])),
                            int(d.get("seed", 0)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"codec: missing or bad field {exc}") from None
    except CodecError as exc:
        raise ConfigError(f"codec: {exc}") from None


def resolve_config(raw: dict, seed=None) -> dict:
    """Apply flag overrides; flags win over the file."""
    cfg = copy.deepcopy(raw)
    if seed is not None:
        cfg["seed"] = int(seed)
        if "codec" in cfg:
            cfg["codec"]["seed"] = int(seed)
    cfg.setdefault("seed", int(cfg.get("codec", {}).get("seed", 0)))
    return cfg


# ----------------------------------------------------------------- writers

def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _report(command: str, cfg: dict, result) -> dict:
    return {"schema": f"idauth-lab/{command}/{SCHEMA_VERSION}",
            "config": cfg, "seed": cfg["seed"], "result": result}


def svg_line_plot(xs, ys, title: str, xlabel: str, ylabel: str,
                  width: int = 420, height: int = 300) -> str:
    """Minimal SVG polyline plot."""
    pad = 50
    xs, ys = list(map(float, xs)), list(map(float, ys))
    x0, x1 = min(xs), max(xs)
    y0, y1 = 0.0, max(max(ys), 1e-12)
    sx = (width - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (height - 2 * pad) / ((y1 - y0) or 1.0)
    pts = " ".join(f"{pad + (x - x0) * sx:.2f},{height - pad - (y - y0) * sy:.2f}"
                   for x, y in zip(xs, ys))
    ticks = "".join(
        f'<text x="{pad + (x - x0) * sx:.2f}" y="{height - pad + 16}" '
        f'font-size="11" text-anchor="middle">{x:g}</text>' for x in xs)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">\n'
        f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>\n'
        f'<text x="{pad - 6}" y="{pad}" font-size="11" text-anchor="end">'
        f'{y1:.3g}</text>\n{ticks}\n'
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">'
        f'{xlabel}</text>\n'
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
        f'text-anchor="middle">{ylabel}</text>\n'
        f'<polyline points="{pts}" fill="none" stroke="steelblue" '
        f'stroke-width="2"/>\n</svg>\n')


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def cmd_region(cfg: dict, threads: int, fmt: str) -> dict:
    src = parse_source(cfg["source"])
    opts = cfg.get("region", {})
    mode = opts.get("mode", "corner")
    if mode == "optimize":
        w = opts.get("weights")
        if w is None or len(w) != 4 or not any(float(v) != 0 for v in w):
            raise ConfigError("region.weights must be 4 numbers, not all zero")
        found = optimize_frontier(src, [float(v) for v in w],
                                  int(opts.get("budget", 1000)), cfg["seed"],
                                  u_size=opts.get("u_size"),
                                  v_size=opts.get("v_size"), threads=threads)
        rows = [(i, c) for i, (_, c) in enumerate(found)]
    elif mode == "sweep":
        alphas = opts.get("alphas")
        if not alphas:
            raise ConfigError("region.alphas required for a sweep")
        u = opts.get("u", "constant")
        rows = [(i, evaluate_corner(src, bsc_aux(_prob(a, "alpha"), u)))
                for i, a in enumerate(alphas)]
    elif mode == "corner":
        rows = [(0, evaluate_corner(src, parse_aux(cfg["aux"])))]
    else:
        raise ConfigError(f"unknown region.mode {mode!r}")
    if fmt == "csv":
        return {"region.csv": frontier_csv(rows)}
    corners = [{"id": i, "r_i": c.i_yu, "r_c_min": c.r_c_min, "l_min": c.l_min,
                "key_max": c.key_max, "aux": c.aux.to_dict()} for i, c in rows]
    return {"region.json": _dump_json(_report("region", cfg, corners))}


def cmd_binary(cfg: dict, threads: int, fmt: str) -> dict:
    b = cfg.get("binary", {})
    try:
        p, q = _prob(b["p"], "p"), _prob(b["q"], "q")
        alphas = [_prob(a, "alpha") for a in b.get("alphas", np.linspace(0, 0.5, 11))]
    except KeyError as exc:
        raise ConfigError(f"binary: missing field {exc}") from None
    case_i, case_ii = [], []
    for a in alphas:
        c1 = binary_erasure_closed_form(p, q, a, "i")
        c2 = binary_erasure_closed_form(p, q, a, "ii")
        case_i.append((a, c1.r_c_min, c1.l_min, c1.r_s_max))
        case_ii.append((a, c2.r_i_max, c2.r_i_max + c2.r_c_excess, c2.l_min))
    if fmt == "json":
        res = {"case_i": [dict(zip(("alpha", "r_c", "l", "r_s"), r)) for r in case_i],
               "case_ii": [dict(zip(("alpha", "r_i", "r_c_min", "l"), r))
                           for r in case_ii]}
        return {"binary.json": _dump_json(_report("binary", cfg, res))}
    return {"binary_case_i.csv": _csv(["alpha", "r_c", "l", "r_s"], case_i),
            "binary_case_ii.csv": _csv(["alpha", "r_i", "r_c_min", "l"], case_ii)}


def _codebook(cfg: dict, n=None, overrides=None):
    src, aux = parse_source(cfg["source"]), parse_aux(cfg["aux"])
    d = dict(cfg["codec"])
    if n is not None:
        d["n"] = n
    spec = parse_codec(d, src, aux)
    try:
        return generate_codebook(spec, overrides)
    except MemoryCapExceeded:
        raise
    except CodecError as exc:
        raise ConfigError(f"codec: {exc}") from None


def cmd_simulate(cfg: dict, threads: int, fmt: str) -> dict:
    opts = cfg.get("simulate", {})
    mode = opts.get("mode", "exact")
    out = {}
    if mode == "mc":
        cb = _codebook(cfg)
        rep = monte_carlo(cb, int(opts.get("trials", 1000)), cfg["seed"],
                          threads=threads)
        result = json.loads(rep.to_json())
    elif mode == "exact":
        cb = _codebook(cfg)
        try:
            m = build_exact_model(cb)
        except ExactCapExceeded:
            if not opts.get("fallback", False):
                raise
            rep = monte_carlo(cb, int(opts.get("trials", 1000)), cfg["seed"],
                              threads=threads)
            result = {"fallback": "monte_carlo", **json.loads(rep.to_json())}
        else:
            result = json.loads(metrics_report(
                m, attack=bool(opts.get("attack", False)), threads=threads).to_json())
        sweep = opts.get("n_sweep")
        if sweep:
            errs = []
            for n in sweep:
                errs.append(exact_error_probability(
                    build_exact_model(_codebook(cfg, n=int(n)))).max_error)
            result["n_sweep"] = {"n": list(map(int, sweep)), "max_error": errs}
            if opts.get("svg", True):
                out["error_vs_n.svg"] = svg_line_plot(
                    sweep, errs, "exact error vs blocklength", "n", "max error")
    else:
        raise ConfigError(f"unknown simulate.mode {mode!r}")
    out["simulate.json"] = _dump_json(_report("simulate", cfg, result))
    return out


def cmd_attack(cfg: dict, threads: int, fmt: str) -> dict:
    opts = cfg.get("attack", {})
    overrides = {"n_s": int(opts["force_n_s"])} if "force_n_s" in opts else None
    src, aux = parse_source(cfg["source"]), parse_aux(cfg["aux"])
    key_rate = evaluate_corner(src, aux).key_raw
    warning = None
    if key_rate <= 0:
        warning = (f"single-letter key rate {key_rate:.6g} <= 0; "
                   "no secret key is available at this operating point")
        print(f"warning: {warning}", file=sys.stderr)
        if overrides is None:
            raise ConfigError("key rate is not positive; set attack.force_n_s "
                              "to build a degenerate instance anyway")
    cb = _codebook(cfg, overrides=overrides)
    m = build_exact_model(cb)
    dump = bool(opts.get("dump_best_response", False))
    res = exact_mfap(m, threads=threads, dump_best_response=dump)
    result = res.to_dict()
    result["map_attack"] = map_attack(m)
    result["single_letter_exponent"] = key_rate
    if warning:
        result["warning"] = warning
    out = {"attack.json": _dump_json(_report("attack", cfg, result))}
    if dump:
        out["best_response.csv"] = best_response_csv(res)
    return out


def cmd_check(cfg: dict, threads: int, fmt: str) -> dict:
    opts = cfg.get("check", {})
    tol = float(opts.get("tol", 1e-9))
    worst = pr.identity_suite(cfg["seed"], int(opts.get("joints", 100)))
    if opts.get("markov", True):
        mc = cfg.get("check_model", {
            "source": {"erasure": {"p": 0.0, "q": 0.5}},
            "aux": {"identity": {"u": "constant"}},
            "codec": {"n": 4, "k_users": 2, "epsilon": 0.75,
                      "delta_eps": 0.25, "seed": cfg["seed"]}})
        m = build_exact_model(_codebook(mc))
        rep = markov_chain_suite(m, corrupt=bool(opts.get("inject_corrupt", False)))
        worst.update({"markov_i": rep.chain_i, "markov_ii": rep.chain_ii,
                      "markov_iii": rep.chain_iii, "markov_iv": rep.chain_iv})
    failures = sorted(k for k, v in worst.items() if v > tol)
    result = {"tolerance": tol, "worst": worst, "failures": failures,
              "passed": not failures}
    return {"check.json": _dump_json(_report("check", cfg, result))}


HANDLERS = {"region": cmd_region, "binary": cmd_binary, "simulate": cmd_simulate,
            "attack": cmd_attack, "check": cmd_check}


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idauth-lab", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1, help="0 = all cores")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    out_dir = Path(args.out or os.environ.get(OUT_ENV, "idauth-out"))
    try:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        cfg = resolve_config(raw, args.seed)
        files = HANDLERS[args.command](cfg, threads, args.format)
    except (ExactCapExceeded, MemoryCapExceeded, pr.CellCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, RegionError, CodecError, pr.ProbabilityError,
            json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, newline="\n")
        print(out_dir / name)
    if args.command == "check":
        res = json.loads(files["check.json"])["result"]
        for name in res["failures"]:
            print(f"violated: {name}", file=sys.stderr)
        return EXIT_OK if res["passed"] else EXIT_PROPERTY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
