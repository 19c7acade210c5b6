"""Command-line orchestration: run experiments, persist CSV/JSON artifacts.

Subcommands: profile | evans | evolve | linear | stability | report.
Configuration comes from an optional key=value file plus flags (flags win).
Every run writes a manifest.json listing inputs, outputs, wall time, and
verdicts.  Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, dynamics, evans, linearized, modulation
from . import profile as profile_mod
from .grid import default_grid, default_weights, norms


class ValidationError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# ------------------------------------------------------------------ config

_DEFAULTS = dict(K=1.0, eps=0.05, L=None, N=None, A=100.0, B=10.0, A1=None,
                 kappa=0.1, rho=0.3, delta=1e-3, shape="even", T=None,
                 n_saves=41, segment="0.02:1:25", lam="0.3+0.2j",
                 seed=0, workers=1)

_INT_KEYS = {"N", "n_saves", "seed", "workers"}
_STR_KEYS = {"shape", "segment", "lam"}


@dataclass
class RunConfig:
    subcommand: str
    out: str
    force: bool = False
    values: dict = field(default_factory=lambda: dict(_DEFAULTS))

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        if name in values:
            return values[name]
        raise AttributeError(name)


def _parse_value(key, raw):
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def load_config(path, base=None):
    """key=value text file; unknown keys rejected, '#' comments allowed."""
    values = dict(base or _DEFAULTS)
    text = Path(path).read_text()
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ValidationError(f"{path}:{ln}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError:
            raise ValidationError(f"{path}:{ln}: bad value for {key}: {raw!r}")
    return values


def validate(values):
    problems = []
    if values["K"] <= 0:
        problems.append("K must be positive")
    if values["eps"] <= 0:
        problems.append("eps must be positive")
    if values["B"] <= 1:
        problems.append("B must exceed 1")
    if values["A"] < values["B"] ** 2:
        problems.append("A must be at least B^2 (weight-scale ordering A >> B^2)")
    if values["kappa"] <= 0:
        problems.append("kappa must be positive")
    if values["delta"] < 0:
        problems.append("delta must be nonnegative")
    if values["n_saves"] < 2:
        problems.append("n_saves must be at least 2")
    if values["shape"] not in ("even", "odd", "shift", "kick"):
        problems.append(f"unknown perturbation shape {values['shape']!r}")
    if problems:
        raise ValidationError("; ".join(problems))


# ------------------------------------------------------------------ output

def _outdir(cfg):
    out = Path(cfg.out)
    if out.exists() and any(out.iterdir()) and not cfg.force:
        raise ValidationError(
            f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_long_csv(path, t, series):
    """Long-format time series: columns t,name,value."""
    rows = []
    for name, vals in series.items():
        for ti, vi in zip(t, vals):
            rows.append((repr(float(ti)), name, repr(float(vi))))
    write_csv(path, ("t", "name", "value"), rows)


def _manifest(out, cfg, t_wall, files, scalars=None, verdicts=None):
    man = {
        "version": __version__,
        "subcommand": cfg.subcommand,
        "inputs": cfg.values,
        "wall_time_s": t_wall,
        "outputs": [str(f) for f in files],
        "scalars": scalars or {},
        "verdicts": verdicts or {},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=2, default=float) + "\n")
    return man


def _grid_of(cfg):
    if cfg.L is not None or cfg.N is not None:
        from .grid import Grid
        L = cfg.L if cfg.L is not None else 40.0 / np.sqrt(cfg.eps)
        N = cfg.N if cfg.N is not None else 512
        return Grid(L=L, N=int(N))
    return default_grid(cfg.eps)


# ------------------------------------------------------------- subcommands

def cmd_profile(cfg, out):
    g = _grid_of(cfg)
    p = profile_mod.profile_from_eps(cfg.eps, cfg.K, g)
    f = out / "profile.csv"
    write_csv(f, ("x", "n", "u", "phi", "psi", "dn", "du"),
              zip(g.x, p.n, p.u, p.phi, p.psi, p.dn, p.du))
    scal = {"c": p.c, "eps": cfg.eps,
            "mu4_at_zero": profile_mod.mu4_at_zero(p.c, cfg.K),
            "fitted_tail_rate": profile_mod.tail_rate_check(p)}
    side = out / "profile.json"
    side.write_text(json.dumps(scal, indent=2, default=float) + "\n")
    return [f, side], scal, {}


def cmd_evans(cfg, out):
    g = _grid_of(cfg)
    p = profile_mod.profile_from_eps(cfg.eps, cfg.K, g)
    cache = evans.CoefficientCache(p)
    try:
        lo, hi, npts = cfg.segment.split(":")
        taus = np.linspace(float(lo), float(hi), int(npts))
    except ValueError:
        raise ValidationError(f"bad --segment {cfg.segment!r}, expected lo:hi:n")
    scan = evans.evans_scan(1j * taus, p, cache, closed=False, rtol=1e-9)
    f = out / "evans.csv"
    write_csv(f, ("re_lambda", "im_lambda", "re_D", "im_D", "abs_D"),
              ((z.real, z.imag, d.real, d.imag, abs(d))
               for z, d in zip(scan.lam, scan.D)))
    D0, D1, D2 = evans.evans_derivs_at0(p, cache)
    scal = {"min_abs_D": scan.min_modulus, "abs_D0": abs(D0),
            "abs_D1_at0": abs(D1), "D2_at0_real": D2.real}
    verd = {"min_abs_D_positive": bool(scan.min_modulus > 0),
            "double_zero_at_origin": bool(
                abs(D0) < 1e-6 * abs(D2) and abs(D1) < 1e-6 * abs(D2))}
    return [f], scal, verd


def cmd_evolve(cfg, out):
    g = _grid_of(cfg)
    p = profile_mod.profile_from_eps(cfg.eps, cfg.K, g)
    dn, du = diagnostics.perturbation(cfg.shape, cfg.delta, g)
    s0 = dynamics.State(0.0, p.n + dn, p.u + du)
    T = cfg.T if cfg.T is not None else 50.0 / np.sqrt(cfg.eps)
    traj = dynamics.evolve(s0, T, cfg.K, g, n_saves=cfg.n_saves)
    if traj.blown_up:
        raise NumericalFailure(f"blow-up at t = {traj.blowup_time}")
    series = {"E": [], "E_K": [], "E_P": [], "M": []}
    for s in traj.states:
        inv = dynamics.invariants_of(s, cfg.K, g)
        for k in series:
            series[k].append(inv[k])
    f = out / "invariants.csv"
    write_long_csv(f, traj.times, series)
    f2 = out / "final_state.csv"
    sT = traj.states[-1]
    write_csv(f2, ("x", "n", "u"), zip(g.x, sT.n, sT.u))
    dE = abs(series["E"][-1] - series["E"][0]) / max(abs(series["E"][0]), 1e-300)
    dM = abs(series["M"][-1] - series["M"][0]) / max(abs(series["M"][0]), 1e-300)
    return [f, f2], {"rel_dE": dE, "rel_dM": dM, "T": T}, \
        {"conserved": bool(dE < 1e-6 and dM < 1e-8)}


def cmd_linear(cfg, out):
    g = _grid_of(cfg)
    p = profile_mod.profile_from_eps(cfg.eps, cfg.K, g)
    ctx = linearized.LinearContext.build(p)
    w = default_weights(cfg.eps, g, A=cfg.A, B=cfg.B, kappa=cfg.kappa,
                        rho=cfg.rho)
    V0 = np.array([cfg.delta * np.exp(-(g.x / 4.0) ** 2) * np.cos(g.x),
                   np.zeros(g.N)])
    T = cfg.T if cfg.T is not None else linearized.wrap_time(ctx)
    td, nd, rate = linearized.dispersive_decay_experiment(V0, ctx, w.a_rate, T)
    tk, run = linearized.kato_smoothing_experiment(V0, ctx, w, T)
    f = out / "linear.csv"
    write_long_csv(f, td, {"weighted_norm": nd})
    f2 = out / "kato.csv"
    write_long_csv(f2, tk, {"running_integral": run})
    excess = (run[-1] - run[len(run) // 2]) / max(run[-1], 1e-300)
    return [f, f2], {"decay_rate": rate, "kato_excess": float(excess)}, \
        {"decay_positive": bool(rate > 0),
         "kato_plateau": bool(excess < 0.1)}


def cmd_stability(cfg, out):
    sc = diagnostics.StabilityConfig(
        K=cfg.K, eps=cfg.eps, delta=cfg.delta, shape=cfg.shape,
        T=cfg.T, n_saves=cfg.n_saves, A=cfg.A, B=cfg.B, kappa=cfg.kappa,
        rho=cfg.rho,
        grid=_grid_of(cfg) if (cfg.L is not None or cfg.N is not None) else None)
    rep = diagnostics.stability_experiment(sc)
    files = []
    f = out / "report.json"
    f.write_text(json.dumps(rep.to_json_dict(), indent=2, default=float) + "\n")
    files.append(f)
    if rep.track is not None:
        series = {"c": rep.track.c, "D": rep.track.D,
                  "I1": rep.I1, "I2": rep.I2, "J": rep.J,
                  "local_decay": rep.local,
                  "local_running": rep.local_running}
        series.update({k: v for k, v in rep.bundle.items()})
        f2 = out / "stability_series.csv"
        write_long_csv(f2, rep.t[:len(rep.track.t)], series)
        files.append(f2)
    if rep.error or rep.blown_up:
        raise NumericalFailure(rep.error or f"blow-up at t={rep.blowup_time}")
    return files, {"c_tail_spread": rep.c_tail_spread}, rep.verdicts


def cmd_report(cfg, out):
    """Aggregate manifests/report.json files below --out into a summary."""
    root = Path(cfg.out)
    found = sorted(root.glob("**/manifest.json"))
    if not found:
        raise ValidationError(f"no manifest.json found under {root}")
    summary = []
    for m in found:
        man = json.loads(m.read_text())
        summary.append({"path": str(m.parent), "subcommand": man.get("subcommand"),
                        "scalars": man.get("scalars"), "verdicts": man.get("verdicts")})
    f = root / "report.json"
    f.write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return [f], {"n_runs": len(summary)}, {}


_COMMANDS = {"profile": cmd_profile, "evans": cmd_evans, "evolve": cmd_evolve,
             "linear": cmd_linear, "stability": cmd_stability,
             "report": cmd_report}


# -------------------------------------------------------------------- main

def _build_parser():
    ap = argparse.ArgumentParser(prog="epsoliton",
                                 description="Euler-Poisson solitary-wave laboratory")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--out", default=f"runs/{name}")
        sp.add_argument("--config")
        sp.add_argument("--force", action="store_true")
        for key, default in _DEFAULTS.items():
            flag = f"--{key}"
            sp.add_argument(flag, dest=key, default=None,
                            help=f"default {default}")
    return ap


def run(argv=None):
    ap = _build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        values = dict(_DEFAULTS)
        if ns.config:
            values = load_config(ns.config, values)
        for key in _DEFAULTS:
            raw = getattr(ns, key, None)
            if raw is not None:
                values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
        validate(values)
        cfg = RunConfig(subcommand=ns.subcommand, out=ns.out,
                        force=ns.force, values=values)
        np.random.seed(values["seed"])
        t0 = time.time()
        if ns.subcommand == "report":
            files, scalars, verdicts = cmd_report(cfg, Path(cfg.out))
        else:
            out = _outdir(cfg)
            files, scalars, verdicts = _COMMANDS[ns.subcommand](cfg, out)
            _manifest(out, cfg, time.time() - t0, files, scalars, verdicts)
        return 0
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (NumericalFailure, RuntimeError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
