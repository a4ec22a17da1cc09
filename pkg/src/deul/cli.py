"""Command-line front end.

Exit status: 0 when every executed check passes, 1 when a check fails,
2 on a configuration error.  A one-line JSON summary of any failure goes to
standard error.
"""

import argparse
import configparser
import csv
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagonalizer, envelopes, nonlinear, plots, spectra, verify
from .damping import ConfigError, DampingLaw
from .propagator import (
    green_batch,
    multipliers_batch,
    reconstruct_green,
    translation_probe,
    write_green_csv,
    write_multipliers_csv,
)
from .zones import ZoneConfig, classify, fmt, write_atlas

DEFAULT_OUT = "deul_out"

# sections and keys accepted in a --config file
CONFIG_SCHEMA = {
    "law": {"mu", "lambda"},
    "zones": {"eps", "bign", "t_ell", "c0"},
    "run": {"seed", "out", "threads"},
    "nonlinear": set(nonlinear.CONFIG_KEYS) | {"gamma"},
}


def read_run_config(path):
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_string(fh.read())
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if sec not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in CONFIG_SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
        out[sec] = dict(cp[sec])
    return out


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


class Context:
    """Resolved settings shared by the subcommands."""

    def __init__(self, args):
        for name in ("mu", "lam", "config", "out", "seed", "threads"):
            if not hasattr(args, name):
                setattr(args, name, None)
        conf = read_run_config(args.config) if args.config else {}
        self.conf = conf
        law = conf.get("law", {})
        mu = args.mu if args.mu is not None else float(law.get("mu", 1.0))
        lam = args.lam if args.lam is not None else float(law.get("lambda", 0.5))
        self.law = DampingLaw(mu, lam)
        z = conf.get("zones", {})
        base = ZoneConfig.default(self.law)
        try:
            self.zcfg = ZoneConfig(
                eps=float(z.get("eps", base.eps)),
                bigN=float(z.get("bign", base.bigN)),
                t_ell=float(z.get("t_ell", base.t_ell)),
                c0=float(z.get("c0", base.c0)),
            ).validate(self.law)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        run = conf.get("run", {})
        self.seed = args.seed if args.seed is not None else int(run.get("seed", 0))
        self.threads = args.threads or int(run.get("threads", 1))
        out = args.out or os.environ.get("DEUL_OUT") or run.get("out") or DEFAULT_OUT
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        return self.out / name


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(verify._jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# subcommands


def cmd_rates(ctx, args):
    lams = _floats(args.sweep) if args.sweep else [ctx.law.lam]
    t_grid = np.concatenate([[0.0], np.geomspace(args.t_min, args.t_max, args.nt)])
    window = (args.t_min, args.t_max)
    prof = spectra.make_profile("hat", n=args.n, R=args.R)
    failed, fits, all_series, sweep = [], [], [], []
    print("lambda field order predicted fitted tol pass")
    for lam in lams:
        law = DampingLaw(ctx.law.mu, lam)
        ser = spectra.evolve_norms(prof, law, t_grid, orders=(0, 1, 2), channels=("v", "u"), l1hat=True)
        pv, pu = spectra.expected_slopes(args.n, lam)
        rows = [("v", a, pv(a), 0.03 if a == 0 else 0.05) for a in (0, 1, 2)]
        rows += [("u", 0, pu(0), 0.03), ("v_l1hat", 0, -(1 + lam) / 2 * args.n, 0.05)]
        for name, a, pred, tol in rows:
            label = name if a == 0 else f"{name}_a{a}"
            f = spectra.fit_slope(ser[label], window)
            # swept values other than the primary lambda only carry the base rate check
            checked = lam == ctx.law.lam or label == "v"
            ok = abs(f.slope - pred) <= tol
            f.extra.update({"lambda": lam, "predicted": pred, "tol": tol, "checked": checked, "passed": ok})
            fits.append(f)
            state = ("ok" if ok else "FAIL") if checked else "info"
            print(f"{fmt(lam)} {name} {a} {fmt(pred)} {fmt(f.slope)} {tol} {state}")
            if checked and not ok:
                failed.append(f"rates lambda={lam:g} {label}")
        tag = f"lam{lam:g}"
        for s in ser.values():
            all_series.append(spectra.NormSeries(f"{tag}:{s.label}", s.t, s.value))
        sweep.append(spectra.NormSeries(f"lambda={lam:g}", ser["v"].t[1:], ser["v"].value[1:]))
    spectra.write_series_csv(ctx.path("rates_series.csv"), all_series)
    spectra.write_fits_json(ctx.path("rates_fits.json"), fits)
    lam0 = ctx.law.lam if ctx.law.lam in lams else lams[0]
    pv, pu = spectra.expected_slopes(args.n, lam0)
    first = [s for s in all_series if s.label.startswith(f"lam{lam0:g}:") and not s.label.endswith("l1hat")]
    guides = {s.label: None for s in first}
    for s in first:
        ch = s.label.split(":")[1]
        a = int(ch.split("_a")[1]) if "_a" in ch else 0
        guides[s.label] = pv(a) if ch.startswith("v") else pu(a)
    plots.emit_plot(
        [spectra.NormSeries(s.label, s.t[1:], s.value[1:]) for s in first],
        ctx.path("rates.svg"),
        guides=guides,
        title=f"decay, lambda={lam0:g}, n={args.n}",
    )
    if len(lams) > 1:
        plots.emit_plot(sweep, ctx.path("rates_sweep.svg"), title="||v|| for several lambda")
        sl = [next(f.slope for f in fits if f.label == "v" and f.extra["lambda"] == lam) for lam in lams]
        order = np.argsort(lams)
        if not all(sl[order[i + 1]] < sl[order[i]] for i in range(len(lams) - 1)):
            failed.append("rates sweep not strictly decreasing")
    return failed


def cmd_zones(ctx, args):
    law, zcfg = ctx.law, ctx.zcfg
    ts = _floats(args.t)
    ks = _floats(args.k)
    print("t k family zone")
    for t in ts:
        for k in ks:
            print(f"{fmt(t)} {fmt(k)} {args.family} {classify(t, k, args.family, law, zcfg).name}")
    at = np.geomspace(1, args.atlas_t_max, args.atlas_nt) - 1
    ak = np.geomspace(1e-4, 10, args.atlas_nk)
    codes = write_atlas(ctx.path(f"zones_{args.family}.csv"), args.family, law, zcfg, at, ak)
    plots.plot_atlas(at + 1, ak, codes, ctx.path(f"zones_{args.family}.svg"), title=f"zones {args.family} (x axis 1+t)")
    return []


def cmd_multipliers(ctx, args):
    ks = np.array(_floats(args.k))
    ts = np.array(_floats(args.t))
    if np.any(ts < args.s):
        raise ConfigError("every t must be at least s")
    T = np.broadcast_to(ts, (ks.size, ts.size))
    m = multipliers_batch(args.family, ctx.law, ks, np.full(ks.size, args.s), T)
    write_multipliers_csv(ctx.path(f"multipliers_{args.family}.csv"), args.family, ks, np.full(ks.size, args.s), T, m)
    print("family k s t phi1 phi2")
    for i, k in enumerate(ks):
        for j, t in enumerate(ts):
            print(f"{args.family} {fmt(k)} {fmt(args.s)} {fmt(t)} {fmt(m.phi1[i, j])} {fmt(m.phi2[i, j])}")
    return []


def cmd_green(ctx, args):
    law = ctx.law
    ks = np.array(_floats(args.k))
    ts = np.array(_floats(args.t))
    if np.any(ts < args.s):
        raise ConfigError("every t must be at least s")
    S = np.full(ks.size, args.s)
    T = np.broadcast_to(ts, (ks.size, ts.size))
    g = green_batch(law, ks, S, T)
    write_green_csv(ctx.path("green.csv"), ks, S, T, g)
    mv = multipliers_batch("V", law, ks, S, T)
    mu_ = multipliers_batch("U", law, ks, S, T)
    err = float(np.max(np.abs(reconstruct_green(mv, mu_, ks[:, None], law.b(S)[:, None]).g - g)))
    probes = {fmt(k): translation_probe(law, k, args.s, ts.max()) for k in ks}
    _dump_json(ctx.path("green.json"), {"reconstruction_max_abs_error": err, "translation_probe": probes, "t": ts.max(), "s": args.s})
    print(f"reconstruction max abs error {fmt(err)}")
    for k, v in probes.items():
        print(f"translation probe k={k} s={fmt(args.s)} t={fmt(ts.max())}: {fmt(v)}")
    return [] if err <= 1e-8 else ["green reconstruction"]


def cmd_diag(ctx, args):
    rep = diagonalizer.report(args.family, ctx.law, ctx.zcfg, args.k, args.s, args.t, ctx.path(f"diag_{args.family}.json"))
    print(f"equivalence {fmt(rep['equivalence'])} picard iterations {rep['picard_iterations']}")
    return [] if rep["equivalence"] <= 1e-5 else ["diagonalization equivalence"]


def cmd_envelopes(ctx, args):
    suite = verify.Suite(mu=ctx.law.mu, lam=ctx.law.lam, seed=ctx.seed)
    suite.cfg = ctx.zcfg
    reps = list(suite.envelope_reports())
    reps.append(suite.cancellation())
    for beta, g, var, k in verify.INTEGRAL_CASES:
        reps.append(envelopes.check_integral_lemma(beta, g, ctx.law, var, k))
    envelopes.write_reports(ctx.path("envelopes.json"), reps)
    with open(ctx.path("envelope_ratios.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["claim", "min_ratio", "max_ratio", "passed"])
        for r in reps:
            w.writerow([r.claim, fmt(r.min_ratio), fmt(r.max_ratio), int(r.passed)])
    plots.plot_ratios(reps, ctx.path("envelopes.svg"))
    print(f"T0 {fmt(suite.t0())}")
    for r in reps:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.claim}: ratio in [{fmt(r.min_ratio)}, {fmt(r.max_ratio)}]")
    return [r.claim for r in reps if not r.passed]


def _nonlinear_setup(ctx, args):
    values = dict(ctx.conf.get("nonlinear", {}))
    if args.run_config:
        params, cfg = nonlinear.load_config(args.run_config)
        values = {}
    else:
        law_vals = {"mu": ctx.law.mu, "lambda": ctx.law.lam}
        params, cfg = nonlinear.parse_config({**law_vals, **values})
    over = {k: getattr(args, k) for k in ("L", "N", "T", "dt", "eps") if getattr(args, k) is not None}
    if args.gamma is not None:
        params = nonlinear.EulerParams(args.gamma, params.law)
    cfg = replace(cfg, threads=ctx.threads, **over).validate()
    return params, cfg


def cmd_nonlinear(ctx, args):
    params, cfg = _nonlinear_setup(ctx, args)
    t0 = time.perf_counter()
    cmp = nonlinear.linear_compare(params, cfg)
    res = cmp.run
    f0 = nonlinear.init_field(params, cfg)
    drift = nonlinear.mass_drift(params, res, f0)
    e_ok, margin = nonlinear.energy_check(res)
    ser = [spectra.NormSeries(k, res.t, v) for k, v in res.norms.items()]
    spectra.write_series_csv(ctx.path("nonlinear_norms.csv"), ser)
    with open(ctx.path("nonlinear_ledger.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "energy", "dissipation", "mass", "deviation_ratio"])
        for row in zip(res.t, res.energy, res.dissipation, res.mass, cmp.ratio):
            w.writerow([fmt(x) for x in row])
    window = (min(verify.NL_WINDOW[0], cfg.T / 4), cfg.T)
    slopes = {}
    # runs too short for a window of three outputs simply report no slopes
    if cfg.eps > 0 and np.count_nonzero((res.t >= window[0]) & (res.t <= window[1])) >= 3:
        for s in ser:
            slopes[s.label] = spectra.fit_slope(s, window).slope
    summary = {
        "config": {k: getattr(cfg, k) for k in ("L", "N", "T", "dt", "eps", "cadence", "r0", "sigma", "startup", "refine")},
        "gamma": params.gamma_adiabatic,
        "mass_drift": drift,
        "energy_ratio_max": float(np.max(nonlinear.energy_ratio(res))),
        "energy_constant": nonlinear.ENERGY_CONSTANT,
        "energy_ok": e_ok,
        "max_deviation_ratio": float(np.max(cmp.ratio)),
        "slopes": slopes,
        "slope_window": list(window),
        "seconds": time.perf_counter() - t0,
    }
    _dump_json(ctx.path("nonlinear.json"), summary)
    if cfg.eps > 0:
        plots.emit_plot(
            [spectra.NormSeries(s.label, s.t[1:], s.value[1:]) for s in ser],
            ctx.path("nonlinear.svg"),
            guides={"v": -(1 + params.law.lam) / 2, "v_a1": -(1 + params.law.lam), "u": -(1 + params.law.lam) / 2 - (1 - params.law.lam) / 2},
            title="nonlinear norms",
        )
    if args.snapshot:
        nonlinear.write_snapshot(args.snapshot, res.final)
    for k, v in summary.items():
        if k not in ("config", "slopes"):
            print(f"{k} {v if not isinstance(v, float) else fmt(v)}")
    for k, v in slopes.items():
        print(f"slope {k} {fmt(v)}")
    failed = []
    if drift > 1e-8:
        failed.append("mass conservation")
    if not e_ok:
        failed.append("energy ledger")
    return failed


def cmd_verify_all(ctx, args):
    t0 = time.perf_counter()
    suite = verify.Suite(quick=args.quick, mu=ctx.law.mu, lam=ctx.law.lam, seed=ctx.seed, log=print)
    ids = range(1, 15) if not args.only else [int(x) for x in args.only.split(",")]
    checks = suite.run_all(ids)
    elapsed = time.perf_counter() - t0
    if args.quick and not args.only:
        c15 = verify.criterion_15(checks, elapsed)
        print(c15.line())
        checks.append(c15)
    verify.write_report(ctx.path("verify.json"), checks)
    with open(ctx.path("verify.txt"), "w") as fh:
        for c in checks:
            fh.write(c.line() + "\n")
    return [f"criterion {c.cid}" for c in checks if not c.passed]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mu", type=float, default=argparse.SUPPRESS, help="damping strength (default 1)")
    common.add_argument("--lambda", dest="lam", type=float, default=argparse.SUPPRESS, help="damping decay exponent in [0, 1) (default 0.5)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key-value file with [law], [zones], [run], [nonlinear] sections")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (else $DEUL_OUT, else ./deul_out)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="FFT worker threads for the nonlinear solver")
    p = argparse.ArgumentParser(prog="deul", parents=[common], description="Decay of damped Euler flows: linear multipliers, envelopes and a nonlinear solver.")
    sub = p.add_subparsers(dest="cmd", required=True)
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)

    r = add("rates", help="linear decay-rate table")
    r.add_argument("--n", type=int, default=2)
    r.add_argument("--R", type=float, default=0.25)
    r.add_argument("--t-min", type=float, default=1e2)
    r.add_argument("--t-max", type=float, default=1e4)
    r.add_argument("--nt", type=int, default=41)
    r.add_argument("--sweep", default=None, help="comma-separated lambda values to overlay")

    z = add("zones", help="zone classification and atlas")
    z.add_argument("--family", choices=("V", "U"), default="V")
    z.add_argument("--t", default="5")
    z.add_argument("--k", default="0.001,0.01,0.1,1,10")
    z.add_argument("--atlas-t-max", type=float, default=1e5)
    z.add_argument("--atlas-nt", type=int, default=60)
    z.add_argument("--atlas-nk", type=int, default=60)

    m = add("multipliers", help="multiplier dump")
    m.add_argument("--family", choices=("V", "U"), default="V")
    m.add_argument("--k", default="0.01,0.1,1")
    m.add_argument("--s", type=float, default=0.0)
    m.add_argument("--t", default="1,10,100")

    g = add("green", help="Green matrix dump and translation probe")
    g.add_argument("--k", default="0.01,0.1,1")
    g.add_argument("--s", type=float, default=10.0)
    g.add_argument("--t", default="20,40,100")

    d = add("diag", help="diagonalization equivalence report")
    d.add_argument("--family", choices=("V", "U"), default="V")
    d.add_argument("--k", type=float, default=1e-3)
    d.add_argument("--s", type=float, default=100.0)
    d.add_argument("--t", type=float, default=400.0)

    add("envelopes", help="envelope, cancellation and integral reports")

    n = add("nonlinear", help="nonlinear run with linear comparison and energy ledger")
    n.add_argument("--run-config", default=None, help="solver key-value file (L, N, T, dt, eps, lambda, mu, gamma, cadence)")
    for key, typ in (("L", float), ("N", int), ("T", float), ("dt", float), ("eps", float), ("gamma", float)):
        n.add_argument(f"--{key}", type=typ, default=None)
    n.add_argument("--snapshot", default=None, help="write the final state in DEUL1 layout")

    v = add("verify-all", help="acceptance suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return p


COMMANDS = {
    "rates": cmd_rates,
    "zones": cmd_zones,
    "multipliers": cmd_multipliers,
    "green": cmd_green,
    "diag": cmd_diag,
    "envelopes": cmd_envelopes,
    "nonlinear": cmd_nonlinear,
    "verify-all": cmd_verify_all,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        ctx = Context(args)
        failed = COMMANDS[args.cmd](ctx, args)
    except ConfigError as exc:
        print(json.dumps({"status": "config_error", "command": args.cmd, "message": str(exc)}), file=sys.stderr)
        return 2
    except nonlinear.SolverError as exc:
        print(json.dumps({"status": "fail", "command": args.cmd, "failed": [str(exc)]}), file=sys.stderr)
        return 1
    if failed:
        print(json.dumps({"status": "fail", "command": args.cmd, "failed": failed}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
