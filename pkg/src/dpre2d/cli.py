"""Command-line entry point.

Every command reads one JSON document with the sections ``coupling``,
``sim``, ``ladder``, ``experiment`` and ``output`` (all optional, unknown
keys rejected), applies flag overrides, runs, and writes

* ``results.jsonl`` (or ``results.csv`` with ``--format csv``),
* ``tables/*.csv`` and ``fields/*.pgm`` where relevant,
* ``manifest.json`` with the fully resolved configuration and the sha256
  checksum of every emitted file.

``dpre2d rerun OUT/manifest.json --out NEW`` re-executes a manifest and
checks that the outputs are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed ``--assert`` check.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import export, moments, sim, walk
from .coupling import (GAUSSIAN, RADEMACHER, Critical, QuasiCritical, SubCritical, chaos_variance, delta_scale,
                       resolve_window)
from .lattice import point_mass, uniform_ball

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4

DEFAULTS = {
    "coupling": {
        "regime": "quasi-critical",  # critical | quasi-critical | sub-critical | none
        "theta": 0.0,
        "theta_N": 4.0,
        "beta_hat": 0.5,
        "law": "rademacher",
    },
    "sim": {
        "N": 1024,
        "init": "ball",  # ball | point | kernel
        "radius": None,  # ball radius; None means delta_N^rho sqrt(N) (or sqrt(N)/4 outside quasi-critical)
        "rho": 1.0,
        "kernel_time": 16,
        "noise_off": [],
        "leak_c": 16.0,
        "leak_bound": 1e-8,
        "jump_min": 64,
        "field_radius": 32,
    },
    "ladder": {"M": 4, "log_power": 3.0},
    "experiment": {
        "replicas": 200,
        "seed": 0,
        "threads": 1,
        "beta0": False,
        "n": 16,  # kernel time
        "kernel_radius": None,
        "L": None,  # moments horizon (None means sim.N)
        "deltas": [0.5, 0.25, 0.125, 0.0625],
        "alpha": 0.5,
        "h_max": 4,
        "resamples": 2000,
        "bootstrap_seed": 0,
    },
    "output": {"dir": "out", "format": "jsonl"},
}

COMMANDS = ("kernel", "coupling", "moments", "simulate", "multiscale", "lognormal", "singularity", "heatmap")


class ConfigError(ValueError):
    """Invalid or incompatible configuration."""


class AssertionFailed(RuntimeError):
    """A property check requested by ``--assert`` failed."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def merge_config(base: dict, override: dict, path: str = "") -> dict:
    """Deep merge rejecting keys absent from ``base``."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"section {path + k!r} must be an object")
            out[k] = merge_config(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _parse_value(s: str):
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        cfg = merge_config(cfg, doc)
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, val = item.split("=", 1)
        sec, name = key.split(".", 1)
        cfg = merge_config(cfg, {sec: {name: _parse_value(val)}})
    exp = cfg["experiment"]
    if args.seed is not None:
        exp["seed"] = args.seed
    if args.replicas is not None:
        exp["replicas"] = args.replicas
    if args.threads is not None:
        exp["threads"] = args.threads
    if getattr(args, "beta0", False):
        exp["beta0"] = True
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    if args.format is not None:
        cfg["output"]["format"] = args.format
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    c, s, e, o = cfg["coupling"], cfg["sim"], cfg["experiment"], cfg["output"]
    if c["regime"] not in ("critical", "quasi-critical", "sub-critical", "none"):
        raise ConfigError(f"unknown regime {c['regime']!r}")
    if c["law"] not in ("gaussian", "rademacher"):
        raise ConfigError(f"unknown law {c['law']!r}")
    if s["init"] not in ("ball", "point", "kernel"):
        raise ConfigError(f"unknown initial law {s['init']!r}")
    if not isinstance(s["N"], int) or s["N"] < 2:
        raise ConfigError("sim.N must be an integer >= 2")
    if not isinstance(e["seed"], int) or not 0 <= e["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(e["replicas"], int) or e["replicas"] < 1:
        raise ConfigError("replicas must be a positive integer")
    if not isinstance(e["threads"], int) or e["threads"] < 1:
        raise ConfigError("threads must be a positive integer")
    if o["format"] not in ("csv", "jsonl"):
        raise ConfigError("output.format must be csv or jsonl")


def _regime(cfg: dict):
    c = cfg["coupling"]
    if cfg["experiment"]["beta0"] or c["regime"] == "none":
        return None
    if c["regime"] == "critical":
        return Critical(float(c["theta"]))
    if c["regime"] == "quasi-critical":
        return QuasiCritical(float(c["theta_N"]))
    return SubCritical(float(c["beta_hat"]))


def _spec(cfg: dict):
    return GAUSSIAN if cfg["coupling"]["law"] == "gaussian" else RADEMACHER


def _window(cfg: dict, N: int | None = None):
    reg = _regime(cfg)
    if reg is None:
        return None
    try:
        return resolve_window(reg, N or cfg["sim"]["N"], _spec(cfg))
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _radius(cfg: dict, N: int | None = None) -> float:
    s = cfg["sim"]
    N = N or s["N"]
    if s["radius"] is not None:
        return float(s["radius"])
    if cfg["coupling"]["regime"] == "quasi-critical":
        return delta_scale(abs(cfg["coupling"]["theta_N"])) ** s["rho"] * math.sqrt(N)
    return math.sqrt(N) / 4.0


def _phi(cfg: dict, N: int | None = None):
    s = cfg["sim"]
    if s["init"] == "point":
        return point_mass()
    if s["init"] == "kernel":
        t = int(s["kernel_time"])
        if t % 2:
            raise ConfigError("sim.kernel_time must be even (initial law on the even sublattice)")
        return walk.srw_kernel(t).field
    return uniform_ball(_radius(cfg, N))


def _sim_config(cfg: dict, window, phi, N: int | None = None, **kw) -> sim.SimConfig:
    s = cfg["sim"]
    kw.setdefault("noise_off", tuple(tuple(p) for p in s["noise_off"]))
    return sim.SimConfig(N=N or s["N"], window=window, phi=phi, seed=cfg["experiment"]["seed"],
                         leak_c=float(s["leak_c"]), leak_bound=float(s["leak_bound"]),
                         jump_min=int(s["jump_min"]), **kw)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class Outputs:
    def __init__(self, cfg: dict):
        self.dir = Path(cfg["output"]["dir"])
        self.format = cfg["output"]["format"]
        self.files: list[Path] = []
        self.info: dict = {}
        self.checks: dict = {}
        self.dir.mkdir(parents=True, exist_ok=True)

    def add(self, path: Path):
        self.files.append(Path(path))

    def results(self, records: list[dict]):
        if self.format == "jsonl":
            p = self.dir / "results.jsonl"
            p.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
        else:
            p = self.dir / "results.csv"
            keys = sorted({k for r in records for k in r})
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(keys)
                for r in records:
                    w.writerow([json.dumps(r[k]) if isinstance(r.get(k), (list, dict)) else r.get(k, "")
                                for k in keys])
        self.add(p)

    def json(self, name: str, obj):
        p = self.dir / name
        p.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")
        self.add(p)

    def table(self, name: str, header, rows):
        self.add(export.write_table_csv(self.dir / "tables" / name, header, rows))

    def check(self, name: str, ok: bool, detail=""):
        self.checks[name] = {"passed": bool(ok), "detail": detail}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_kernel(cfg: dict, out: Outputs):
    """Exact walk kernel table, CSV and PGM."""
    e = cfg["experiment"]
    n = int(e["n"])
    radius = n if e["kernel_radius"] is None else int(e["kernel_radius"])
    try:
        K = walk.srw_kernel(n, radius)
    except walk.CapabilityError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from err
    f = K.field
    out.add(export.write_field_csv(f, out.dir / "tables" / f"kernel_n{n}.csv"))
    out.add(export.write_pgm_p2(f, out.dir / "fields" / f"kernel_n{n}.pgm"))
    mass = float(f.values.sum())
    sym = max(float(np.abs(f.values - g).max()) for g in (f.values.T, f.values[::-1], f.values[:, ::-1]))
    rec = {"n": n, "radius": radius, "mass": mass, "q0": f.at((0, 0)) if n % 2 == 0 else 0.0,
           "overlap": walk.overlap(max(1, n // 2)), "symmetry_error": sym}
    out.results([rec])
    out.check("mass", abs(mass - 1.0) <= 1e-14 or radius < n, mass)
    out.check("dihedral_symmetry", sym == 0.0, sym)


def cmd_coupling(cfg: dict, out: Outputs):
    """Resolve a coupling window to (beta, sigma^2)."""
    N = cfg["sim"]["N"]
    w = _window(cfg)
    if w is None:
        raise ConfigError("coupling command needs a regime (not beta0/none)")
    rec = w.to_dict()
    rec["R_N"] = walk.overlap(N)
    rec["identity_error"] = abs(chaos_variance(w.spec, w.beta) - w.sigma2)
    if isinstance(w.regime, QuasiCritical):
        rec["delta_N"] = delta_scale(abs(w.regime.theta_N))
    out.results([rec])
    out.check("sigma_identity", rec["identity_error"] <= 1e-12, rec["identity_error"])


def cmd_moments(cfg: dict, out: Outputs):
    """Renewal table and exact variance of the averaged partition function."""
    N = cfg["sim"]["N"]
    L = int(cfg["experiment"]["L"] or N)
    w = _window(cfg, N)
    s2 = 0.0 if w is None else w.sigma2
    table = moments.renewal_function(s2, L)
    p = out.dir / "tables" / "renewal.csv"
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(table.to_csv())
    out.add(p)
    phi = _phi(cfg)
    var = moments.variance_averaged(s2, L, phi, table)
    lo, hi = moments.variance_bounds(s2, L, phi, table)
    rec = {"sigma2": s2, "L": L, "barU": float(table.barU[-1]), "variance": var,
           "lower": lo, "upper": hi}
    if cfg["sim"]["noise_off"]:
        rec["variance_restricted"] = moments.variance_restricted(s2, L, phi, cfg["sim"]["noise_off"])
    out.results([rec])
    out.check("sandwich", lo <= var * (1 + 1e-12) and var <= hi * (1 + 1e-12), [lo, var, hi])
    out.check("barU_monotone", bool(np.all(np.diff(table.barU) >= 0)))


def cmd_simulate(cfg: dict, out: Outputs):
    """Replica ensemble of partition functions."""
    e = cfg["experiment"]
    w = _window(cfg)
    scfg = _sim_config(cfg, w, _phi(cfg))
    Z = sim.partition_ensemble(scfg, e["replicas"], e["threads"])
    out.results([{"replica": r, "Z": float(z)} for r, z in enumerate(Z)])
    s2 = 0.0 if w is None else w.sigma2
    exact = moments.variance_restricted(s2, scfg.N, scfg.phi, scfg.noise_off)
    leak, c = sim.dry_run_leak(scfg)
    out.info.update(exact_variance=exact, leak=leak, truncation_c=c)
    if len(Z) >= 2:
        rep = ex.moment_report(Z, e["h_max"], e["resamples"], seed=e["bootstrap_seed"])
        d = rep.to_dict()
        d["exact_variance"] = exact
        out.json("report.json", d)
        se_mean = Z.std(ddof=1) / math.sqrt(len(Z))
        out.check("mean_one", abs(rep.mean - 1.0) <= 4 * se_mean + 1e-12, [rep.mean, se_mean])
        out.check("variance_exact", abs(rep.variance - exact) <= 4 * rep.se["variance"] + 1e-12,
                  [rep.variance, exact, rep.se["variance"]])


def _require_quasi(cfg: dict, what: str):
    if cfg["coupling"]["regime"] != "quasi-critical" or cfg["experiment"]["beta0"]:
        raise ConfigError(f"{what} requires coupling.regime = quasi-critical (the scale ladder and "
                          "log-normal target are defined through theta_N)")


def cmd_multiscale(cfg: dict, out: Outputs):
    """Multiscale decomposition over a scale ladder."""
    _require_quasi(cfg, "multiscale")
    e, s, lad = cfg["experiment"], cfg["sim"], cfg["ladder"]
    theta = float(cfg["coupling"]["theta_N"])
    try:
        ladder = sim.build_scale_ladder(s["N"], s["rho"], theta, int(lad["M"]), float(lad["log_power"]))
    except (sim.LadderError, ValueError) as err:
        raise ConfigError(str(err)) from err
    w = _window(cfg)
    scfg = sim.multiscale_config(s["N"], w, ladder, _phi(cfg), e["seed"], leak_c=float(s["leak_c"]),
                                 leak_bound=float(s["leak_bound"]), jump_min=int(s["jump_min"]))
    recs = sim.multiscale_ensemble(scfg, ladder, e["replicas"], e["threads"])
    rows = []
    for r in recs:
        d = r.to_json()
        d["telescope_error"] = float(r.telescope_error()) if not r.dead else None
        rows.append(d)
    out.results(rows)
    out.json("ladder.json", ladder.to_dict())
    live = [r for r in recs if not r.dead]
    M = ladder.M
    preds = [moments.multiscale_variance_prediction(M, i, s["rho"]) for i in range(1, M + 1)]
    if len(live) >= 2:
        D = np.array([r.delta[1:] for r in live])
        mm = np.array([r.m[1:] for r in live])
        rep = ex.clt_sums(D, mm, ex.lognormal_sigma2(s["rho"]), preds, e["resamples"], seed=e["bootstrap_seed"])
        out.json("clt_report.json", rep.to_dict())
    tel = max((r.telescope_error() for r in live), default=0.0)
    out.info.update(dead=len(recs) - len(live), max_telescope_error=tel)
    out.check("telescope", tel <= 1e-10, tel)
    out.check("delta_above_minus_one", all(np.all(r.delta[1:] > -1) for r in live))


def cmd_lognormal(cfg: dict, out: Outputs):
    """Log-normality diagnostics in the quasi-critical window."""
    _require_quasi(cfg, "lognormal")
    e, s = cfg["experiment"], cfg["sim"]
    w = _window(cfg)
    scfg = _sim_config(cfg, w, _phi(cfg))
    Z = sim.partition_ensemble(scfg, e["replicas"], e["threads"])
    out.results([{"replica": r, "Z": float(z)} for r, z in enumerate(Z)])
    sigma2 = ex.lognormal_sigma2(s["rho"])
    rep = ex.lognormal_test(Z, sigma2, e["resamples"], seed=e["bootstrap_seed"])
    d = rep.to_dict()
    exact2 = 1.0 + moments.variance_averaged(w.sigma2, scfg.N, scfg.phi)
    d["exact_second_moment"] = exact2
    out.json("report.json", d)
    se = rep.se.get("raw2", 0.0)
    out.check("second_moment_exact", abs(float(np.mean(Z**2)) - exact2) <= 4 * se + 1e-12, [exact2, se])


def cmd_singularity(cfg: dict, out: Outputs):
    """Averaged mass on shrinking balls at criticality."""
    e, s = cfg["experiment"], cfg["sim"]
    if cfg["coupling"]["regime"] != "critical" and not e["beta0"]:
        raise ConfigError("singularity requires coupling.regime = critical")
    N = s["N"]
    w = _window(cfg)
    samples = {}
    rows = []
    for d in sorted(e["deltas"], reverse=True):
        if d * math.sqrt(N) < 2:
            raise ConfigError(f"radius delta sqrt(N) = {d * math.sqrt(N):.3g} is below lattice resolution 2")
        scfg = _sim_config(cfg, w, uniform_ball(d * math.sqrt(N)))
        Z = sim.partition_ensemble(scfg, e["replicas"], e["threads"])
        samples[d] = Z
        rows += [{"delta": d, "replica": r, "Z": float(z)} for r, z in enumerate(Z)]
    out.results(rows)
    rep = ex.singularity_probe(samples, N, e["alpha"])
    out.json("report.json", rep.to_dict())
    out.table("singularity.csv", ["delta", "median", "frac_moment"],
              zip(rep.deltas, rep.medians, rep.frac_moments))
    out.check("median_decreasing", rep.passed, [rep.spearman, rep.pvalue])


def cmd_heatmap(cfg: dict, out: Outputs):
    """Partition-function field from one backward sweep, as a PGM."""
    s = cfg["sim"]
    w = _window(cfg)
    scfg = _sim_config(cfg, w, point_mass())
    f = sim.run_field(scfg, int(s["field_radius"]), replica=0)
    out.add(export.write_field_csv(f, out.dir / "tables" / "field.csv"))
    path, q = export.write_pgm_p5(f, out.dir / "fields" / "heatmap.pgm")
    out.add(path)
    v = f.values[f.window.parity_mask()]
    pos = v[v > 0]
    logvar = float(np.var(np.log(pos))) if len(pos) > 1 else 0.0
    out.info.update(quantiles=list(q), log_variance=logvar)
    out.results([{"mean": float(v.mean()), "log_variance": logvar, "q01": q[0], "q99": q[1],
                  "sites": int(len(v))}])
    out.check("positive", bool(np.all(v > 0)))


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def execute(command: str, cfg: dict, do_assert: bool = False) -> int:
    """Run one command with a resolved configuration; returns the exit code."""
    out = Outputs(cfg)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    HANDLERS[command](cfg, out)
    failed = [k for k, v in out.checks.items() if not v["passed"]]
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg["experiment"]["seed"],
        "version": _version(),
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": [{"path": str(p.relative_to(out.dir)), "sha256": sha256(p)} for p in out.files],
        "info": out.info,
        "checks": out.checks,
        "assert": bool(do_assert),
    }
    (out.dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1, default=_json_default) + "\n")
    if do_assert and failed:
        raise AssertionFailed("failed checks: " + ", ".join(failed))
    return EXIT_OK


def rerun(manifest_path, out_dir=None, threads=None) -> int:
    """Re-execute a manifest; exit 4 if any output differs byte-wise."""
    man = json.loads(Path(manifest_path).read_text())
    cfg = merge_config(DEFAULTS, man["config"])
    if out_dir is not None:
        cfg["output"]["dir"] = str(out_dir)
    if threads is not None:
        cfg["experiment"]["threads"] = threads
    _validate(cfg)
    execute(man["command"], cfg, False)
    new = json.loads((Path(cfg["output"]["dir"]) / "manifest.json").read_text())
    old = {o["path"]: o["sha256"] for o in man["outputs"]}
    cur = {o["path"]: o["sha256"] for o in new["outputs"]}
    if old != cur:
        diff = sorted(k for k in set(old) | set(cur) if old.get(k) != cur.get(k))
        raise AssertionFailed("outputs differ from the manifest: " + ", ".join(diff))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpre2d", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=(HANDLERS[name].__doc__ or f"run {name}").strip().splitlines()[0])
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--assert", dest="do_assert", action="store_true",
                        help="turn property checks into pass/fail (exit 4)")
        sp.add_argument("--format", choices=("csv", "jsonl"))
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one configuration key (JSON value)")
        sp.add_argument("--beta0", action="store_true", help="switch the disorder off")
    rp = sub.add_parser("rerun", help="re-execute a manifest and compare checksums")
    rp.add_argument("manifest")
    rp.add_argument("--out")
    rp.add_argument("--threads", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            return rerun(args.manifest, args.out, args.threads)
        cfg = resolve_config(args)
        return execute(args.command, cfg, args.do_assert)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionFailed as e:
        print(f"assertion failed: {e}", file=sys.stderr)
        return EXIT_ASSERT
    except (sim.LeakError, walk.CapabilityError, FloatingPointError, OverflowError, ZeroDivisionError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
