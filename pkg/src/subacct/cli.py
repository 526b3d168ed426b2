"""Command-line interface: ``subacct <command> [flags]``.

Every command prints CSV (or JSON with ``--json``) to stdout or ``--out``.
A run manifest is written next to ``--out`` (as ``<out>.manifest.json``) or to
``--manifest``; ``subacct replay <manifest>`` re-runs it.

Exit codes: 0 success, 1 computation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

import subacct
from subacct import calibrate as cal
from subacct.errors import AccountingError, UnsupportedVariantError
from subacct.mc import MCConfig, mc_delta_curve
from subacct.pairs import MechanismSpec, Relation, SamplingScheme, pair_add, pair_remove
from subacct.pld import DEFAULT_STEP, DEFAULT_TAIL, DiscretePLD
from subacct.rdp import DEFAULT_ORDERS

DEFAULTS = {"step": DEFAULT_STEP, "tail_mass_bound": DEFAULT_TAIL,
            "rdp_orders": [DEFAULT_ORDERS[0], DEFAULT_ORDERS[-1]],
            "sigma_bisection_rtol": cal.SIGMA_RTOL, "sigma_bracket": list(cal.SIGMA_BRACKET)}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- output


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def render(rows: list[dict], as_json: bool) -> str:
    if as_json:
        return json.dumps([{k: _json_value(v) for k, v in r.items()} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_cell(v) for v in r.values()])
    return buf.getvalue()


# --------------------------------------------------------------------------- commands


def _config(args, scale=None) -> cal.AccountantConfig:
    try:
        mech = MechanismSpec(args.noise, args.sigma if scale is None else scale)
        scheme = SamplingScheme(args.scheme, args.gamma)
        return cal.AccountantConfig(mech, scheme, Relation(args.relation), args.k, args.step,
                                    args.tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_plds(path):
    with open(path) as fh:
        doc = json.load(fh)
    return [(d["direction"], DiscretePLD.from_dict(d["pld"]), d.get("tight", True)) for d in doc]


def cmd_delta(args):
    if args.pld:
        plds = _load_plds(args.pld)
        rows = []
        for e in args.eps:
            vals = [(pl.delta(e), name, tight) for name, pl, tight in plds]
            d, name, tight = max(vals, key=lambda v: v[0])
            rows.append({"epsilon": e, "delta": d, "direction": name, "tight": tight})
        return rows
    cfg = _config(args)
    deltas, names = cal.delta_detail(cfg, np.asarray(args.eps, float))
    return [{"epsilon": e, "delta": d, "direction": n, "tight": cfg.tight}
            for e, d, n in zip(args.eps, deltas, names)]


def cmd_epsilon(args):
    for d in args.delta:
        if not 0 < d < 1:
            raise UsageError("delta values must lie in (0, 1)")
    if args.pld:
        plds = _load_plds(args.pld)
        rows = []
        for d in args.delta:
            e, name, tight = max(((pl.epsilon(d), n, t) for n, pl, t in plds), key=lambda v: v[0])
            rows.append({"delta": d, "epsilon": e, "direction": name, "tight": tight})
        return rows
    cfg = _config(args)
    rows = []
    for d in args.delta:
        e, name, tight = cal.epsilon_detail(cfg, d)
        rows.append({"delta": d, "epsilon": e, "direction": name, "tight": tight})
    return rows


def cmd_calibrate(args):
    if not args.epsilon > 0 or not 0 < args.delta < 1:
        raise UsageError("need --epsilon > 0 and --delta in (0, 1)")
    cfg = _config(args, scale=1.0)
    sigma = cal.sigma_for(cfg, args.epsilon, args.delta)
    return [{"noise": args.noise, "scheme": args.scheme, "relation": args.relation,
             "gamma": args.gamma, "k": args.k, "epsilon": args.epsilon, "delta": args.delta,
             "sigma": sigma, "tight": cfg.tight}]


def cmd_sweep(args):
    if not args.figure2:
        raise UsageError("sweep currently supports only --figure2")
    targets = [(s, float(e)) for s, e in (t.split(":") for t in args.targets)]
    return cal.sweep_figure2(tuple(args.gammas), tuple(targets), args.delta, args.k, args.step,
                             args.tail)


def _eps_grid(args):
    if args.eps:
        return np.asarray(args.eps, float)
    return np.linspace(args.eps_min, args.eps_max, args.eps_points)


def cmd_mc(args):
    if args.relation not in ("add", "remove"):
        raise UsageError("mc needs --relation add or remove")
    try:
        mech = MechanismSpec(args.noise, args.sigma)
        scheme = SamplingScheme(args.scheme, args.gamma)
        cfg = MCConfig(args.accuracy, args.confidence, tuple(_eps_grid(args)), args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    pair = (pair_add if args.relation == "add" else pair_remove)(mech, scheme)
    c = mc_delta_curve(pair.p, pair.q, args.k, cfg)
    return [{"epsilon": e, "delta": d, "lower": lo, "upper": hi, "samples": cfg.samples,
             "direction": args.relation}
            for e, d, lo, hi in zip(c.epsilons, c.deltas, c.metadata["lower"], c.metadata["upper"])]


def cmd_rr_oracle(args):
    values = cal.rr_oracle()
    ok = (values["H_{4/3}(P||Q)"] > values["H_{4/3}(Q||P)"]
          and values["H_2(P||Q)"] < values["H_2(Q||P)"])
    if not ok:
        raise AccountingError("the divergence ordering does not flip between alpha = 4/3 and 2")
    if args.json:
        return [{"quantity": k, "value": str(v)} for k, v in values.items()]
    return cal.format_rr(values) + "\n"


def cmd_fig1(args):
    eps = _eps_grid(args)
    mc_cfg = None
    if args.mc:
        mc_cfg = MCConfig(args.accuracy, args.confidence, tuple(eps), args.seed)
    res = cal.experiment_fig1(args.scale, args.gamma, tuple(args.k_list), eps, mc_cfg, args.step)
    rows = []
    for (k, direction, method), deltas in res.curves.items():
        for e, d in zip(res.eps_grid, deltas):
            rows.append({"scale": res.scale, "gamma": res.gamma, "k": k, "direction": direction,
                         "method": method, "epsilon": e, "delta": d})
    return rows


def cmd_fig3(args):
    eps, curves = cal.experiment_fig3(_eps_grid(args), args.step)
    names = list(curves)
    rows = []
    for i, e in enumerate(eps):
        vals = {n: curves[n][i] for n in names}
        rows.append({"epsilon": e, **vals, "max": max(vals, key=vals.get)})
    return rows


def cmd_fig4(args):
    rows = cal.experiment_fig4(args.sigma, args.gamma, args.k, tuple(args.deltas), args.step,
                               args.tail)
    return [{**r, "upper_label": cal.UPPER_BOUND_LABEL} for r in rows]


def cmd_pld(args):
    if not args.out:
        raise UsageError("pld needs --out")
    cfg = _config(args)
    doc = [{"direction": d.name, "tight": d.tight, "pld": d.pld.to_dict()}
           for d in cal.directions(cfg)]
    return json.dumps(doc) + "\n"


# --------------------------------------------------------------------------- parser


def _out_flags():
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", help="write results here instead of stdout")
    out.add_argument("--json", action="store_true", help="JSON array instead of CSV")
    out.add_argument("--manifest", help="write the run manifest here")
    return out


def _accountant_flags(relation="add-remove"):
    acct = argparse.ArgumentParser(add_help=False)
    acct.add_argument("--noise", choices=("gaussian", "laplace"), default="gaussian")
    acct.add_argument("--sigma", "--scale", dest="sigma", type=float, default=1.0,
                      help="Gaussian sigma or Laplace scale")
    acct.add_argument("--scheme", choices=("poisson", "wor"), default="poisson")
    acct.add_argument("--gamma", type=float, default=0.01)
    acct.add_argument("--relation", choices=[r.value for r in Relation], default=relation)
    acct.add_argument("--k", type=int, default=1)
    acct.add_argument("--step", type=float, default=DEFAULT_STEP)
    acct.add_argument("--tail", type=float, default=DEFAULT_TAIL)
    return acct


def _grid_flags(eps_max=2.0, points=41):
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--eps", type=float, nargs="+", help="explicit epsilon grid")
    grid.add_argument("--eps-min", type=float, default=0.0)
    grid.add_argument("--eps-max", type=float, default=eps_max)
    grid.add_argument("--eps-points", type=int, default=points)
    return grid


def _mc_flags():
    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--accuracy", type=float, default=1e-2)
    mc.add_argument("--confidence", type=float, default=1e-2)
    mc.add_argument("--seed", type=int, default=0)
    return mc


def build_parser() -> argparse.ArgumentParser:
    acct, out = _accountant_flags(), _out_flags()
    p = argparse.ArgumentParser(prog="subacct", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=subacct.__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("delta", parents=[acct, out], help="delta at given epsilons")
    s.add_argument("--eps", type=float, nargs="+", required=True)
    s.add_argument("--pld", help="use composed PLDs saved by the pld command")
    s.set_defaults(func=cmd_delta)

    s = sub.add_parser("epsilon", parents=[acct, out], help="epsilon at given deltas")
    s.add_argument("--delta", type=float, nargs="+", required=True)
    s.add_argument("--pld", help="use composed PLDs saved by the pld command")
    s.set_defaults(func=cmd_epsilon)

    s = sub.add_parser("calibrate", parents=[acct, out], help="smallest noise for (epsilon, delta)")
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", parents=[out], help="noise calibration sweeps")
    s.add_argument("--figure2", action="store_true", help="sampling-rate sweep under add/remove")
    s.add_argument("--gammas", type=float, nargs="+", default=list(cal.FIG2_GAMMAS))
    s.add_argument("--targets", nargs="+", default=[f"{k}:{e:g}" for k, e in cal.FIG2_TARGETS],
                   help="scheme:epsilon pairs")
    s.add_argument("--delta", type=float, default=1e-6)
    s.add_argument("--k", type=int, default=10_000)
    s.add_argument("--step", type=float, default=DEFAULT_STEP)
    s.add_argument("--tail", type=float, default=DEFAULT_TAIL)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("mc", parents=[_accountant_flags("add"), _grid_flags(), _mc_flags(), out],
                       help="Monte Carlo delta curve")
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("rr-oracle", parents=[out], help="exact randomized-response divergences")
    s.set_defaults(func=cmd_rr_oracle)

    s = sub.add_parser("fig1", parents=[_grid_flags(2.0, 201), _mc_flags(), out],
                       help="subsampled Laplace add vs remove")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--gamma", type=float, default=None, help="default: searched")
    s.add_argument("--k-list", type=int, nargs="+", default=[1, 2, 16])
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--mc", action="store_true", help="add Monte Carlo curves")
    s.set_defaults(func=cmd_fig1)

    s = sub.add_parser("fig3", parents=[_grid_flags(1.2, 241), out],
                       help="three-pair Laplace substitution example")
    s.add_argument("--step", type=float, default=DEFAULT_STEP)
    s.set_defaults(func=cmd_fig3)

    s = sub.add_parser("fig4", parents=[out], help="WOR substitution bounds versus RDP")
    s.add_argument("--sigma", type=float, default=4.0)
    s.add_argument("--gamma", type=float, default=0.05)
    s.add_argument("--k", type=int, default=1000)
    s.add_argument("--deltas", type=float, nargs="+", default=list(cal.FIG4_DELTAS))
    s.add_argument("--step", type=float, default=DEFAULT_STEP)
    s.add_argument("--tail", type=float, default=DEFAULT_TAIL)
    s.set_defaults(func=cmd_fig4)

    s = sub.add_parser("pld", parents=[acct, out], help="save composed PLDs as JSON")
    s.set_defaults(func=cmd_pld)

    s = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    s.add_argument("manifest")
    s.set_defaults(func=None)
    return p


def _manifest(args, argv, outputs) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return {"command": args.command, "argv": list(argv), "config": config,
            "seed": getattr(args, "seed", None), "tool_version": subacct.__version__,
            "defaults": DEFAULTS, "outputs": outputs}


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        try:
            with open(args.manifest) as fh:
                recorded = json.load(fh)["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"subacct: cannot read manifest: {exc}", file=sys.stderr)
            return 2
        return run(recorded)
    try:
        result = args.func(args)
    except (UsageError, UnsupportedVariantError) as exc:
        parser.print_usage(sys.stderr)
        print(f"subacct: error: {exc}", file=sys.stderr)
        return 2
    except AccountingError as exc:
        print(f"subacct: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = result if isinstance(result, str) else render(result, args.json)
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        outputs.append(args.out)
    else:
        sys.stdout.write(text)
    manifest_path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if manifest_path:
        with open(manifest_path, "w") as fh:
            json.dump(_manifest(args, argv, outputs), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
