"""Batch command-line driver: every experiment is a subcommand reading a
JSON config and writing JSON/CSV reports into an output directory.

Exit codes: 0 success, 1 a checked inequality or identity failed,
2 configuration error.  All outputs are buffered in memory and written
only after the run succeeds, so a failing run leaves no partial files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import combinatorics as comb
from . import engine, verifier
from .config import ConfigError, RunConfig, __version__, load_config
from .grids import estimate_pi_good_by_level, make_shifted_grid


class _Out:
    """Deferred file writes: nothing touches disk until flush()."""

    def __init__(self, outdir):
        self.outdir = outdir
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def flush(self):
        os.makedirs(self.outdir, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(self.outdir, name), "w") as fh:
                fh.write(text)


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _prov_cols(cfg):
    return ["config_hash", "seed", "version"], \
           [cfg.hash, cfg.data["seed"], __version__]


def _plot_script(csv_name, xcol, ycol, title):
    return (
        "#!/usr/bin/env python3\n"
        "# plot helper; reads the CSV next to it\n"
        "import csv, sys\n"
        "import matplotlib.pyplot as plt\n"
        f"rows = list(csv.DictReader(open('{csv_name}')))\n"
        f"x = [float(r['{xcol}']) for r in rows]\n"
        f"y = [float(r['{ycol}']) for r in rows]\n"
        "plt.plot(x, y, 'o-')\n"
        f"plt.xlabel('{xcol}'); plt.ylabel('{ycol}'); plt.title('{title}')\n"
        "plt.savefig(sys.argv[1] if len(sys.argv) > 1 else "
        f"'{csv_name}.png', dpi=150)\n")


# ----------------------------------------------------------------------
# subcommands


def cmd_verify_kernel(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    kernel = cfg.kernel()
    g1, g2 = cfg.standard_grids()
    spec = cfg.product_spec()
    samples, seed = d["samples"], d["seed"]
    reports = [verifier.check_size(kernel, samples, seed),
               verifier.check_holder(kernel, samples, seed),
               verifier.check_mixed_1(kernel, samples, seed),
               verifier.check_mixed_2(kernel, samples, seed)]
    cubes1 = comb.fitting_cubes(
        g1, engine._split_specs(spec)[0])
    cubes2 = comb.fitting_cubes(
        g2, engine._split_specs(spec)[1])
    for direction, cubes in (("size-1", cubes1), ("size-2", cubes2),
                             ("holder-1", cubes1), ("holder-2", cubes2)):
        reports.append(verifier.check_carleson_standard(
            kernel, cubes, direction, samples, seed, d["q"], spec))
    family = cfg.omega_family(g1, g2)
    reports.append(verifier.check_biparam_carleson(
        kernel, g1, g2, family, spec, d["q"]))
    out.add("verify_kernel.json", "\n".join(r.to_json() for r in reports) + "\n")
    ph, pv = _prov_cols(cfg)
    rows = [pv + [r.assumption_id, r.empirical_constant, r.sample_count]
            for r in reports]
    out.add("verify_kernel.csv",
            _csv(ph + ["assumption_id", "constant", "samples"], rows))
    width = max(len(r.assumption_id) for r in reports)
    summary = "\n".join(f"{r.assumption_id:<{width}}  "
                        f"constant={r.empirical_constant:.6g}  "
                        f"samples={r.sample_count}" for r in reports)
    out.add("verify_kernel.txt", summary + "\n")
    return 0


def cmd_mc_average(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    if d["trials"] < 30:
        print("config error: trials must be at least 30", file=sys.stderr)
        return 2
    kernel = cfg.kernel()
    spec = cfg.product_spec()
    results = []
    for i, f in enumerate(cfg.input_fields(spec)):
        res = engine.averaging_identity_mc(
            kernel, f, cfg.params(1), cfg.params(2),
            d["trials"], d["seed"] + i, d["q"])
        results.append(res)
    ph, pv = _prov_cols(cfg)
    rows = []
    all_pass = True
    for i, res in enumerate(results):
        ok = res.passes()
        all_pass = all_pass and ok
        rows.append(pv + [i, res.lhs, res.rhs_mean, res.rhs_se,
                          int(res.exact), int(ok)])
    out.add("mc_average.csv", _csv(
        ph + ["input", "lhs", "rhs_mean", "rhs_se", "exact", "pass"], rows))
    out.add("mc_average.json", json.dumps({
        "provenance": cfg.provenance(),
        "results": [{"lhs": r.lhs, "rhs_mean": r.rhs_mean,
                     "rhs_se": r.rhs_se, "exact": r.exact,
                     "pass": r.passes()} for r in results]}) + "\n")
    trows = []
    for i, res in enumerate(results):
        for t, v in enumerate(res.trial_values):
            trows.append([i, t, float(v)])
    out.add("mc_average_trials.csv", _csv(["input", "trial", "rhs"], trows))
    out.add("mc_average_plot.py", _plot_script(
        "mc_average_trials.csv", "trial", "rhs", "per-trial corrected sums"))
    return 0 if all_pass else 1


def cmd_decompose(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    kernel = cfg.kernel()
    g1, g2 = cfg.standard_grids()
    spec = cfg.product_spec()
    ph, pv = _prov_cols(cfg)
    rows = []
    ok = True
    for i, f in enumerate(cfg.input_fields(spec)):
        led = engine.term_decomposition(kernel, f, g1, g2, d["q"])
        for key, val in led.as_dict().items():
            rows.append(pv + [i, key, float(val)])
        ok = ok and led.total <= 4.0 * sum(
            led.scale.values()) * (1.0 + 1e-9) + 1e-15
    out.add("decompose.csv", _csv(ph + ["input", "term", "value"], rows))
    return 0 if ok else 1


def cmd_journe(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    try:
        weight = cfg.weight_fn()
        depth = d["level_max"] - d["level_min"]
        w = [weight(k) for k in range(depth + 1)]
        if any(w[i] < w[i + 1] for i in range(depth)):
            raise ConfigError("weight sequence must be decreasing")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    g1 = make_shifted_grid(cfg.params(1), None)
    g2 = make_shifted_grid(cfg.params(2), None)
    family = cfg.omega_family(g1, g2)
    ph, pv = _prov_cols(cfg)
    rows, all_pass = [], True
    for i, om in enumerate(family):
        lhs, rhs, ok = comb.journe_check(om, weight)
        all_pass = all_pass and ok
        rows.append(pv + [i, lhs, rhs, int(ok)])
    out.add("journe.csv", _csv(ph + ["omega", "lhs", "rhs", "pass"], rows))
    return 0 if all_pass else 1


def cmd_necessity(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    kernel = cfg.kernel()
    g1, g2 = cfg.standard_grids()
    spec = cfg.product_spec()
    family = cfg.omega_family(g1, g2)
    cache = None
    if family:
        cache = verifier.carleson_table(kernel, g1, g2, spec, d["q"])
    ph, pv = _prov_cols(cfg)
    rows, ok = [], True
    for i, om in enumerate(family):
        res = comb.necessity_check(kernel, om, d["q"], table_cache=cache)
        ok = ok and np.isfinite(res["ratio"])
        rows.append(pv + [i, res["sum"], res["measure"], res["ratio"]])
    out.add("necessity.csv",
            _csv(ph + ["omega", "sum", "measure", "ratio"], rows))
    out.add("necessity_plot.py", _plot_script(
        "necessity.csv", "omega", "ratio", "Carleson sum over measure"))
    return 0 if ok else 1


def cmd_pi_good(cfg: RunConfig, out: _Out) -> int:
    d = cfg.data
    p = cfg.params(1)
    exact = engine.exact_pi_good(p)
    levels, est, se = estimate_pi_good_by_level(p, d["trials"], d["seed"])
    ph, pv = _prov_cols(cfg)
    rows = [pv + [int(j), float(exact[i]), float(est[i]), float(se[i])]
            for i, j in enumerate(levels)]
    out.add("pi_good.csv",
            _csv(ph + ["level", "exact", "estimate", "stderr"], rows))
    out.add("pi_good_plot.py", _plot_script(
        "pi_good.csv", "level", "estimate", "goodness probability by level"))
    ok = all(abs(est[i] - exact[i]) <= 4.0 * max(se[i], 1e-12) + 1e-12
             for i in range(len(levels)))
    return 0 if ok else 1


_COMMANDS = {"verify-kernel": cmd_verify_kernel,
             "mc-average": cmd_mc_average,
             "decompose": cmd_decompose,
             "journe": cmd_journe,
             "necessity": cmd_necessity,
             "pi-good": cmd_pi_good}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bisquare",
        description="batch experiments on dyadic square-function machinery")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", required=True, help="JSON config path")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None,
                    help="override the config seed")
    ap.add_argument("--jobs", type=int, default=1,
                    help="worker count (reports are identical at any value)")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            data = dict(cfg.data)
            data["seed"] = args.seed
            cfg = RunConfig(data)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = _Out(args.out)
    try:
        code = _COMMANDS[args.command](cfg, out)
    except (ConfigError, engine.EngineError, verifier.VerifierError,
            comb.CombinatoricsError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if code == 2:
        return 2
    out.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
