"""Command line interface: ``lrising <subcommand> ...``.

Exit status 0 on success, 1 on usage or validation errors, 2 on runtime
failures.  Tables are whitespace-delimited with ``#`` header lines.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import exactsum, harness
from .enumeration import build_exact
from .kernel import AnisoLRNN, BiAxialLR, BoxGeometry, Dobrushin, IsotropicLR, Minus, Plus


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _model_args(p, kinds=("isotropic", "aniso", "biaxial"), default="isotropic"):
    p.add_argument("--model", choices=kinds, default=default)
    p.add_argument("--alpha", type=float, help="isotropic decay exponent (> 2)")
    p.add_argument("--alpha1", type=float, help="row exponent (> 1)")
    p.add_argument("--alpha2", type=float, help="column exponent (> 1)")


def _model(a):
    need = {"isotropic": ("alpha",), "aniso": ("alpha1",), "biaxial": ("alpha1", "alpha2")}[a.model]
    missing = [n for n in need if getattr(a, n) is None]
    if missing:
        raise ValueError(f"--model {a.model} needs --{missing[0]}")
    ctor = {"isotropic": IsotropicLR, "aniso": AnisoLRNN, "biaxial": BiAxialLR}[a.model]
    return ctor(*(getattr(a, n) for n in need))


def _box_args(p):
    p.add_argument("--L", type=int, required=True, help="half-width")
    p.add_argument("--M", type=int, required=True, help="half-height")
    p.add_argument("--interface-height", type=int, default=None,
                   help="use the 2M rows symmetric about this height minus 1/2")


def _box(a) -> BoxGeometry:
    if a.interface_height is not None:
        return BoxGeometry.about_interface(a.L, a.M, a.interface_height)
    return BoxGeometry(a.L, a.M)


def _bc_args(p):
    p.add_argument("--bc", choices=("plus", "minus", "dobrushin"), default="dobrushin")
    p.add_argument("--h", type=int, default=0, help="Dobrushin height")


def _bc(a):
    return {"plus": Plus(), "minus": Minus()}.get(a.bc) or Dobrushin(a.h)


def _emit(rows, header, out=None):
    out = out or sys.stdout
    print("# " + " ".join(header), file=out)
    for r in rows:
        print(" ".join(f"{x:.12g}" if isinstance(x, float) else str(x) for x in r), file=out)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_step_energy(a):
    v = exactsum.step_energy(a.alpha, a.tol)
    _emit([(a.alpha, v.value, float(v.tail_bound), v.truncation_radius)],
          ["alpha", "value", "tail_bound", "radius"])


def cmd_shift_bound(a):
    model = IsotropicLR(a.alpha)
    rows = []
    for L in a.L:
        v = exactsum.shift_energy_bound(model, L, a.tol)
        rows.append((L, v.value, float(v.tail_bound)))
    _emit(rows, ["L", "D", "tail_bound"])


def cmd_rel_entropy(a):
    model = IsotropicLR(a.alpha)
    rows = []
    for L in a.L:
        ell = L if a.ell is None else a.ell
        v = exactsum.relative_entropy_bound(model, L, ell, 1.0, a.tol)
        rows.append((L, ell, v.value, float(v.tail_bound)))
    _emit(rows, ["L", "ell", "B", "tail_bound"])


def cmd_boundary_field(a):
    box = _box(a)
    t = exactsum.boundary_field(_model(a), box, _bc(a), a.epsilon)
    rows = []
    for k, s in enumerate(box.sites()):
        rows.append((s.i, s.j, float(t.values[k]), float(t.tail_bounds[k])))
    _emit(rows, ["i", "j", "field", "tail_bound"])


def cmd_enumerate(a):
    box = _box(a)
    g = build_exact(_model(a), box, _bc(a), a.beta, a.epsilon)
    m = g.magnetization()
    _emit([(s.i, s.j, float(m[k])) for k, s in enumerate(box.sites())], ["i", "j", "magnetization"])


def cmd_simulate(a):
    spec = harness.ExperimentSpec.load(a.config)
    if a.output_root:
        spec = harness.ExperimentSpec.from_dict({**spec.to_dict(),
                                                 "output": {**spec.to_dict()["output"], "root": a.output_root}})
    res = harness.run_experiment(spec, max_runs=a.max_runs, workers=a.workers)
    print(f"# experiment {spec.name} in {res.directory}")
    print(f"# executed {len(res.executed)} skipped {len(res.skipped)} "
          f"pending {len(spec.runs()) - len(res.executed) - len(res.skipped)}")
    for rel in res.executed:
        print(rel)


def _run_profile(run_dir: Path):
    from .observables import MagnetizationProfile

    summary = json.loads((run_dir / "summary.json").read_text())
    box = harness.geometry_of(summary["geometry"])
    text = "".join(l for l in (run_dir / "profile.csv").read_text().splitlines(True) if not l.startswith("#"))
    return summary, MagnetizationProfile.from_csv(text, box, summary["n_samples"])


def cmd_profile(a):
    from .observables import antisymmetry_residual

    run_dir = Path(a.run)
    if not (run_dir / "summary.json").is_file():
        raise ValueError(f"{run_dir} is not a run directory (summary.json missing)")
    summary, prof = _run_profile(run_dir)
    residual = None
    h = summary.get("interface_reference")
    if summary["bc"]["kind"] == "dobrushin" and prof.geometry.is_symmetric_about(h):
        rep = antisymmetry_residual(prof, h)
        residual = rep.residual
        print(f"# antisymmetry about {h}-1/2: max_abs {rep.max_abs:.6g} max_ratio {rep.max_ratio:.6g}")
    g = prof.geometry
    rows = []
    for r in range(g.height):
        for c in range(g.width):
            row = [c - g.L, r + g.j_min, float(prof.mean[r, c]), float(prof.stderr[r, c])]
            if residual is not None:
                row.append(float(residual[r, c]))
            rows.append(row)
    _emit(rows, ["i", "j", "mean", "stderr"] + (["residual"] if residual is not None else []))
    if a.figure:
        from .plotting import profile_figure

        print(f"# figure {profile_figure(prof, a.figure, residual)}")


def cmd_fluctuations(a):
    from .observables import interface_fluctuations

    table = harness.size_table(a.experiment, a.beta)
    rep = interface_fluctuations(table, block=a.block)
    if a.emit_plot_data:
        for r in rep.table():
            print(r["L"], repr(r["variance"]), repr(r["ci_low"]), repr(r["ci_high"]))
    else:
        _emit([(r["L"], r["n"], r["variance"], r["ci_low"], r["ci_high"], r["bootstrap_se"]) for r in rep.table()],
              ["L", "n", "variance", "ci_low", "ci_high", "bootstrap_se"])
        print(f"# exponent {rep.exponent:.6g} +- {rep.exponent_se:.3g} degenerate {rep.degenerate} "
              f"separated {rep.separated()}")
    if a.figure:
        from .plotting import fluctuation_figure

        fluctuation_figure(rep, a.figure)
        print(f"# figure {a.figure}", file=sys.stderr if a.emit_plot_data else sys.stdout)


def cmd_van_beijeren(a):
    import warnings

    from .observables import van_beijeren_check

    box = BoxGeometry.about_interface(a.L, a.M, 1)
    plan = None
    if a.mc_samples:
        plan = {"seed": a.seed, "n_samples": a.mc_samples, "burn_in_sweeps": a.burn_in,
                "thinning_sweeps": a.thinning}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = van_beijeren_check(_model(a), box, a.beta, mc_plan=plan, chain_L=a.chain_L,
                                 exploratory=a.exploratory)
    for w in caught:
        print(f"# warning: {w.message}", file=sys.stderr)
    _emit([(int(i), float(l), float(r), float(l - r), float(s))
           for i, l, r, s in zip(rep.columns, rep.lhs, rep.rhs, rep.margin_stderr)],
          ["i", "lhs", "rhs", "margin", "margin_stderr"])
    print(f"# exact {rep.exact} holds {rep.holds()}")


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lrising", description="Long-range Ising lattice sums, exact enumeration and Monte Carlo.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    es = sub.add_parser("exact-sum", help="certified lattice sums")
    ess = es.add_subparsers(dest="quantity", required=True, parser_class=_Parser)
    q = ess.add_parser("step-energy", help="ground state vs half-line flipped step energy")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--tol", type=float, default=1e-8)
    q.set_defaults(func=cmd_step_energy)
    q = ess.add_parser("shift-bound", help="interface shift energy D(L)")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--L", type=_int_list, required=True, help="comma-separated sizes")
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_shift_bound)
    q = ess.add_parser("rel-entropy-bound", help="unit-profile relative entropy bound B(L, ell)")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--L", type=_int_list, required=True, help="comma-separated sizes")
    q.add_argument("--ell", type=int, default=None, help="split distance (default: ell = L)")
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_rel_entropy)
    q = ess.add_parser("boundary-field", help="exterior field on every box site")
    _model_args(q)
    _box_args(q)
    _bc_args(q)
    q.add_argument("--epsilon", type=float, default=1e-9)
    q.set_defaults(func=cmd_boundary_field)

    q = sub.add_parser("enumerate", help="exact site magnetizations (<= 20 sites)")
    _model_args(q)
    _box_args(q)
    _bc_args(q)
    q.add_argument("--beta", type=float, required=True)
    q.add_argument("--epsilon", type=float, default=1e-10)
    q.set_defaults(func=cmd_enumerate)

    q = sub.add_parser("simulate", help="run (or resume) an experiment from a TOML config")
    q.add_argument("--config", required=True)
    q.add_argument("--output-root", default=None,
                   help=f"override [output].root (default ${harness.OUTPUT_ROOT_ENV} or ./out)")
    q.add_argument("--max-runs", type=int, default=None)
    q.add_argument("--workers", type=int, default=None)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("profile", help="magnetization profile and anti-symmetry residual of one run")
    q.add_argument("run", help="run directory containing summary.json and profile.csv")
    q.add_argument("--figure", default=None, help="write a heat map to this file")
    q.set_defaults(func=cmd_profile)

    q = sub.add_parser("fluctuations", help="mid-column height variance across sizes of an experiment")
    q.add_argument("experiment", help="experiment directory containing manifest.json")
    q.add_argument("--beta", type=float, default=None)
    q.add_argument("--block", type=int, default=1, help="bootstrap block length")
    q.add_argument("--emit-plot-data", action="store_true", help="bare columns: L variance ci_low ci_high")
    q.add_argument("--figure", default=None, help="write a log-log plot to this file")
    q.set_defaults(func=cmd_fluctuations)

    q = sub.add_parser("van-beijeren", help="row-1 magnetization vs one-dimensional chain")
    _model_args(q, ("aniso", "biaxial"), "aniso")
    q.add_argument("--L", type=int, required=True)
    q.add_argument("--M", type=int, required=True)
    q.add_argument("--beta", type=float, required=True)
    q.add_argument("--chain-L", type=int, default=None)
    q.add_argument("--mc-samples", type=int, default=0, help="use Monte Carlo with this many samples")
    q.add_argument("--burn-in", type=int, default=200)
    q.add_argument("--thinning", type=int, default=2)
    q.add_argument("--seed", type=int, default=1)
    q.add_argument("--exploratory", action="store_true")
    q.set_defaults(func=cmd_van_beijeren)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        args.func(args)
    except (ValueError, TypeError, KeyError, FileNotFoundError, harness.ConfigError) as e:
        print(f"lrising: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"lrising: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
