"""Command-line front end.

    planarflow run COMMAND [-c CONFIG] [--set section.key=value ...] [-o DIR] [--workers N]
    planarflow defaults COMMAND

Each run writes its data files, optional SVG/PNG figures and a
``manifest.json`` into the output directory, and prints ``key: value``
summary lines.  Exit status is 0 on success, 2 on a validation error and 3
on a numerical failure (explosion or singularity).
"""

import argparse
import hashlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from . import analysis, derivative as deriv, fields, flow, loewner, paths
from .config import COMMANDS, ConfigError, default_text, format_complex, load_config
from .errors import NumericalError, PlanarFlowError
from .svg import render_loglog_svg, render_svg

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _c(z):
    return [float(np.real(z)), float(np.imag(z))]


def build_driver(cfg):
    d = cfg["driver"]
    if d["kind"] == "custom":
        return paths.custom_path(d["t0"], d["t1"], d["values"])
    n = (d["t1"] - d["t0"]) / d["step"]
    if abs(n - round(n)) > 1e-6 * max(n, 1):
        raise ConfigError(f"driver.step: {d['step']} does not divide [{d['t0']}, {d['t1']}]")
    n = int(round(n))
    if d["kind"] == "zero":
        return paths.zero_path(d["t0"], d["t1"], n)
    return paths.sample_brownian(d["seed"], d["t0"], d["t1"], n, d["scale"])


def build_field(cfg, driver=None):
    f = cfg["field"]
    kind = f["kind"]
    if kind == "power":
        F = fields.power(f["alpha"])
    elif kind == "herglotz":
        F = fields.herglotz(f["C"], f["D"], f["atoms"])
    elif kind == "inversion":
        F = fields.inversion(f["kappa"])
    else:
        F = fields.constant(f["c"])
    if f["shift"] > 0:
        F = fields.shift_field(F, f["shift"])
    if f["iterate"] > 0:
        F = fields.iterate_field(F, driver, f["iterate"])
    return F


class Emitter:
    """Writes files into the output directory and remembers them."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = cfg.out_dir
        os.makedirs(self.dir, exist_ok=True)
        self.files = []
        self.emit = cfg["emit"]

    def _write(self, name, data, binary=False):
        path = os.path.join(self.dir, name)
        mode = "wb" if binary else "w"
        with open(path, mode, **({} if binary else {"newline": "\n"})) as fh:
            fh.write(data)
        self.files.append(name)
        return path

    def csv(self, name, text):
        if self.emit["csv"]:
            self._write(name, text)

    def json(self, name, obj):
        if self.emit["json"]:
            self._write(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def svg(self, name, text):
        if self.emit["svg"]:
            self._write(name, text)

    def png(self, name, fn, *args, **kw):
        """``fn(*args, path, **kw)`` renders the figure to ``path``."""
        if self.emit["png"]:
            fn(*args, os.path.join(self.dir, name), **kw)
            self.files.append(name)

    def manifest(self, summary, warns, wall, status):
        entries = []
        for name in sorted(set(self.files)):
            with open(os.path.join(self.dir, name), "rb") as fh:
                data = fh.read()
            entries.append({"name": name, "bytes": len(data),
                            "sha256": hashlib.sha256(data).hexdigest()})
        man = {"command": self.cfg.command, "config_hash": self.cfg.digest(),
               "config": self.cfg.canonical(), "version": __version__,
               "wall_time_s": round(wall, 3), "workers": self.cfg.workers, "status": status,
               "files": entries, "warnings": warns, "summary": summary}
        with open(os.path.join(self.dir, "manifest.json"), "w", newline="\n") as fh:
            fh.write(json.dumps(man, indent=2, sort_keys=True) + "\n")
        return man


def _curve_png(curves, path, title=None, points=None):
    from .plotting import plot_curves
    plot_curves(curves, path, title=title, points=points)


# -- commands -------------------------------------------------------------------

def cmd_simulate(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    F = build_field(cfg, drv)
    rows = ["index,t,re,im"]
    curves, finals = {}, []
    for i, z in enumerate(e["z"]):
        tr = flow.integrate(F, drv, e["s"], e["t"], z, e["scheme"])
        rows += [f"{i},{t:.17g},{p.real:.17g},{p.imag:.17g}" for t, p in zip(tr.times, tr.states)]
        curves[f"z{i}"] = tr.states
        finals.append(_c(tr.states[-1]))
    out.csv("trajectories.csv", "\n".join(rows) + "\n")
    out.csv("driver.csv", drv.to_csv())
    out.json("simulate.json", {"field": F.describe(), "path": drv.describe(), "z": [_c(z) for z in e["z"]],
                               "final": finals, "step": drv.dt, "scheme": e["scheme"]})
    out.svg("trajectories.svg", render_svg(curves))
    out.png("trajectories.png", _curve_png, curves, title="trajectories")
    return {"n_trajectories": len(finals), "final_0": format_complex(complex(*finals[0]))}


def cmd_boundary(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    F = build_field(cfg, drv)
    curve = flow.boundary_curve(F, drv, e["s"], e["t"], e["a"], e["b"], e["n"], e["delta"],
                                e["max_levels"], scheme=e["scheme"], workers=cfg.workers)
    out.csv("boundary.csv", curve.to_csv())
    out.json("boundary.json", {**curve.meta, "s": curve.s, "t": curve.t, "seed": drv.seed})
    out.svg("boundary.svg", render_svg({"boundary": curve.points}))
    out.png("boundary.png", _curve_png, {"boundary": curve.points}, title="boundary image")
    return {"n_points": int(curve.params.size), "cap_reached": curve.meta["cap_reached"]}


def cmd_derivative(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    F = build_field(cfg, drv)
    xs = np.linspace(e["a"], e["b"], e["n"])
    dphi = deriv.derivative_field(F, drv, e["s"], e["t"], xs, e["scheme"], e["compensate_qv"])
    rows = ["x,re_dphi,im_dphi"] + [f"{x:.17g},{d.real:.17g},{d.imag:.17g}" for x, d in zip(xs, dphi)]
    out.csv("derivative.csv", "\n".join(rows) + "\n")
    reports = []
    for z in e["z"]:
        r = deriv.compute_V(F, drv, e["s"], e["t"], z, z, e["theta_nodes"], e["scheme"], e["compensate_qv"])
        d = r.as_dict()
        d["finite_difference"] = _c(deriv.finite_difference_derivative(F, drv, e["s"], e["t"], z, e["fd_h"]))
        reports.append(d)
    out.json("derivative.json", {"field": F.describe(), "path": drv.describe(), "queries": reports})
    fin = np.isfinite(dphi)
    if fin.any():
        out.svg("derivative.svg", render_svg({"dphi": dphi[fin]}))
    return {"phi_prime_0": format_complex(complex(*reports[0]["phi_prime"])) if reports else "none"}


def cmd_identity(cfg, out):
    e = cfg["experiment"]
    if len(e["z"]) != len(e["w"]):
        raise ConfigError("experiment.w: needs as many entries as experiment.z")
    drv = build_driver(cfg)
    F = build_field(cfg, drv)
    rows = ["re_z,im_z,re_w,im_w,residual"]
    reports, worst = [], 0.0
    for z, w in zip(e["z"], e["w"]):
        r = deriv.compute_V(F, drv, e["s"], e["t"], z, w, e["theta_nodes"], e["scheme"], e["compensate_qv"])
        res = abs(r.phi_z - r.phi_w - (r.z - r.w) * np.exp(r.V_val)) / abs(r.z - r.w)
        worst = max(worst, res)
        rows.append(f"{z.real:.17g},{z.imag:.17g},{w.real:.17g},{w.imag:.17g},{res:.17g}")
        reports.append({**r.as_dict(), "residual": res})
    out.csv("identity.csv", "\n".join(rows) + "\n")
    out.json("identity.json", {"field": F.describe(), "path": drv.describe(), "pairs": reports})
    return {"max_residual": f"{worst:.6e}"}


def _moments(cfg, out, quantity):
    e = cfg["experiment"]
    d = cfg["driver"]
    if d["kind"] != "brownian":
        raise ConfigError("driver.kind: moment experiments sample Brownian paths")
    F = build_field(cfg)
    s, t = e["s"], e["t"]
    z = e["z"][0]
    if quantity == "phi":
        rep = analysis.moment_scaling(F, e["p"], e["axis"], (s, t, z), e["lags"], e["n_paths"],
                                      e["master_seed"], d["step"], d["scale"], e["direction"],
                                      cfg.workers)
    else:
        rep = analysis.j_moment_scaling(F, e["p"], e["axis"], (s, t, z, e["w"][0]), e["lags"],
                                        e["n_paths"], e["master_seed"], d["step"], d["scale"],
                                        e["direction"], e["theta_nodes"], cfg.workers)
    stem = "moments" if quantity == "phi" else "j_moments"
    out.csv(f"{stem}.csv", rep.to_csv())
    out.json(f"{stem}.json", rep.as_dict())
    out.svg(f"{stem}.svg", render_loglog_svg(rep.lags, rep.estimates, (rep.slope, rep.intercept)))
    if cfg["emit"]["png"]:
        from .plotting import plot_moments
        out.png(f"{stem}.png", plot_moments, rep)
    return {"slope": f"{rep.slope:.6f}", "stderr": f"{rep.stderr:.6f}",
            "censored_fraction": f"{rep.censored_fraction:.4f}"}


def cmd_trace(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    tr = loewner.trace(drv, e["times"], e["eps"])
    out.csv("trace.csv", tr.to_csv())
    out.json("trace.json", {"path": drv.describe(), "eps": tr.eps, "times": tr.times.tolist(),
                            "points": [_c(p) for p in tr.points],
                            "error_proxy": tr.error_proxy.tolist()})
    out.svg("trace.svg", render_svg({"trace": tr.points}, points=tr.points))
    out.png("trace.png", _curve_png, {"trace": tr.points}, title="trace", points=tr.points)
    return {"gamma_last": format_complex(tr.points[-1]), "eps": f"{tr.eps:.6g}"}


def cmd_hull(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    xs = np.linspace(e["re_min"], e["re_max"], e["nx"])
    ys = np.linspace(0.0, e["im_max"], e["ny"])
    grid = (xs[None, :] + 1j * ys[:, None]).ravel()
    t = e["t"]
    member = loewner.hull(drv, t, grid)
    out.csv("hull.csv", loewner.hull_csv(grid, member))
    out.json("hull.json", {"path": drv.describe(), "t": t, "n_grid": int(grid.size),
                           "n_member": int(member.sum())})
    if member.any():
        out.svg("hull.svg", render_svg([], viewport=(xs[0], xs[-1], -0.05 * ys[-1], ys[-1]),
                                       points=grid[member]))
    return {"n_member": int(member.sum()), "n_grid": int(grid.size)}


def cmd_hcap(cfg, out):
    e = cfg["experiment"]
    drv = build_driver(cfg)
    b = loewner.hcap_estimate(drv, np.asarray(e["times"]), e["probe_radius"])
    rows = ["t,hcap"] + [f"{t:.17g},{v:.17g}" for t, v in zip(e["times"], b)]
    out.csv("hcap.csv", "\n".join(rows) + "\n")
    out.json("hcap.json", {"path": drv.describe(), "probe_radius": e["probe_radius"],
                           "times": list(e["times"]), "hcap": b.tolist()})
    return {"hcap_last": f"{b[-1]:.12g}"}


def cmd_corner(cfg, out):
    e = cfg["experiment"]
    d = cfg["driver"]
    F = build_field(cfg)
    n = int(round((d["t1"] - d["t0"]) / d["step"]))
    bm = paths.sample_brownian(d["seed"], d["t0"], d["t1"], n, d["scale"])
    zp = paths.zero_path(d["t0"], d["t1"], n)
    seqs = {}
    for name, drv in (("zero", zp), ("brownian", bm)):
        seq = analysis.corner_sequence(F, drv, e["s"], e["t"], e["center"], e["windows"],
                                       e["refine_factor"], e["per_side"], cfg.workers)
        seqs[name] = seq
        curve = flow.boundary_curve(F, drv, e["s"], e["t"], e["a"], e["b"], e["n"], e["delta"],
                                    e["max_levels"], workers=cfg.workers)
        out.csv(f"corner_{name}.csv", curve.to_csv())
        out.csv(f"corner_{name}_local.csv", seq.curves[-1].to_csv())
    report = {"field": F.describe(), "seed": d["seed"], "center": e["center"],
              "refine_factor": e["refine_factor"], "qualitative": True,
              "expected_deterministic": np.pi * (1 - F.alpha) if hasattr(F, "alpha") else None,
              **{name: s.as_dict() for name, s in seqs.items()}}
    out.json("corner.json", report)
    out.svg("corner.svg", render_svg({n: s.curves[0].points for n, s in seqs.items()}))
    if cfg["emit"]["png"]:
        from .plotting import plot_angles
        out.png("corner_angles.png", plot_angles, seqs["zero"].windows,
                {n: s.angles for n, s in seqs.items()})
    return {"angle_zero": f"{seqs['zero'].angles[-1]:.6f}",
            "angle_brownian": f"{seqs['brownian'].angles[-1]:.6f}",
            "brownian_monotone": seqs["brownian"].monotone}


def cmd_phi(cfg, out):
    e = cfg["experiment"]
    d = cfg["driver"]
    F = build_field(cfg)
    z = e["z"][0]
    rows = ["lambda,re,im,stderr,re_residual,im_residual"]
    reps = []
    for lam in e["lambda"]:
        r = analysis.phi_transform_estimate(F, lam, z, e["n_paths"], e["horizon"], e["master_seed"],
                                            d["step"], d["scale"], e["fd_step"], workers=cfg.workers)
        res = r.residual if r.residual is not None else complex("nan")
        rows.append(f"{lam:.17g},{r.value.real:.17g},{r.value.imag:.17g},{r.stderr:.17g},"
                    f"{res.real:.17g},{res.imag:.17g}")
        reps.append(r.as_dict())
    out.csv("phi.csv", "\n".join(rows) + "\n")
    out.json("phi.json", {"field": F.describe(), "estimates": reps})
    return {"phi_0": format_complex(complex(*reps[0]["value"]))}


HANDLERS = {
    "simulate": cmd_simulate, "boundary": cmd_boundary, "derivative": cmd_derivative,
    "identity-check": cmd_identity,
    "moments": lambda cfg, out: _moments(cfg, out, "phi"),
    "j-moments": lambda cfg, out: _moments(cfg, out, "J"),
    "loewner-trace": cmd_trace, "hull": cmd_hull, "hcap": cmd_hcap,
    "corner-demo": cmd_corner, "phi-estimate": cmd_phi,
}


def run(command, config_path=None, overrides=(), out_dir=None, workers=None, stream=None):
    """Run one command; returns the exit status."""
    stream = stream or sys.stdout
    ov = list(overrides)
    if out_dir is not None:
        ov.append(f"run.out_dir={out_dir}")
    if workers is not None:
        ov.append(f"run.workers={workers}")
    try:
        cfg = load_config(command, config_path, overrides=ov)
    except PlanarFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Emitter(cfg)
    t0 = time.perf_counter()
    status, summary = EXIT_OK, {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            summary = HANDLERS[command](cfg, out)
        except NumericalError as exc:
            status = EXIT_NUMERIC
            summary = {"error": str(exc)}
        except (PlanarFlowError, ValueError) as exc:
            status = EXIT_INVALID
            summary = {"error": str(exc)}
    warns = [{"category": w.category.__name__, "message": str(w.message)} for w in caught
             if not issubclass(w.category, (DeprecationWarning, RuntimeWarning))]
    man = out.manifest(summary, warns, time.perf_counter() - t0, status)
    print(f"command: {command}", file=stream)
    print(f"status: {status}", file=stream)
    for k, v in summary.items():
        print(f"{k}: {v}", file=stream)
    for w in warns:
        print(f"warning: {w['category']}: {w['message']}", file=stream)
    print(f"config_hash: {man['config_hash']}", file=stream)
    for f in man["files"]:
        print(f"file: {os.path.join(out.dir, f['name'])} ({f['bytes']} bytes)", file=stream)
    if status != EXIT_OK:
        print(f"error: {summary['error']}", file=sys.stderr)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="planarflow", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run an experiment and write its files")
    r.add_argument("command", choices=COMMANDS)
    r.add_argument("-c", "--config", help="INI configuration file")
    r.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one configuration key")
    r.add_argument("-o", "--out", help="output directory (default: $PLANARFLOW_OUT or ./planarflow-out)")
    r.add_argument("--workers", type=int, help="parallel workers")
    d = sub.add_parser("defaults", help="print the default configuration of a command")
    d.add_argument("command", choices=COMMANDS)
    args = ap.parse_args(argv)
    if args.action == "defaults":
        print(default_text(args.command))
        return EXIT_OK
    return run(args.command, args.config, args.overrides, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
