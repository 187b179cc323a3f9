"""Command-line entry point: ``massive-sle {sample,evolve,unzip,verify,dual-kappa}``.

Every run is described by a manifest: plain ``key = value`` lines (``#``
starts a comment).  Flags mirror the keys one to one and override the
manifest.  Each output file carries the SHA-256 hash of the resolved
manifest (without ``out`` and ``workers``, which do not affect results).

Exit status: 0 success (all suites PASS), 1 some suite FAILs, 2 invalid
input, 3 the run halted (resolution or domain error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import loewner as L
from . import msle as E
from . import observables as O
from . import samplers as S
from . import verify as V
from .lattice import HEXAGONAL, SQUARE, DomainError, build_domain
from .potential import MassParams

SUBCOMMANDS = ("sample", "evolve", "unzip", "verify", "dual-kappa")
SUITES = ("martingale", "drift-recovery", "novikov", "abs-continuity", "round-trip",
          "spec-table", "hadamard")
MODELS = ("lerw", "he", "forest")
DRIFTS = (E.LERW, E.BOSONIC, E.UST)
STATISTICS = ("one", "left", "xi_T")


class ManifestError(ValueError):
    """Invalid manifest entry (message carries the source location)."""


class RunHalted(RuntimeError):
    """A run stopped on a resolution or domain error."""


def _number(text):
    """Float from ``'0.25'``, ``'1/32'`` or ``'1e-3'``."""
    return float(Fraction(text)) if "/" in text else float(text)


def _complex(text):
    return complex(text.replace(" ", "").replace("i", "j"))


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text):
    return tuple(_number(x) for x in text.split(",") if x.strip())


def _auto_number(text):
    return "auto" if text == "auto" else _number(text)


def _opt_number(text):
    return None if text in ("", "none") else _number(text)


def _opt_complex(text):
    return None if text in ("", "none") else _complex(text)


#: key -> (parser, default, help)
KEYS = {
    "model": (str, "lerw", "sampler: lerw | he | forest"),
    "lattice": (str, SQUARE, "square | hexagonal"),
    "domain": (str, "unit-square", "unit-square | rectangle | path to a JSON polygon file"),
    "width": (_number, 1.0, "rectangle width"),
    "height": (_number, 1.0, "rectangle height"),
    "a": (_opt_complex, None, "start point (complex, e.g. 0.5+0j)"),
    "b": (_opt_complex, None, "target point"),
    "eps": (_number, 1 / 16, "lattice mesh (e.g. 1/32)"),
    "m": (_number, 0.0, "mass"),
    "alpha": (_number, 0.0, "forest component weight"),
    "kappa": (_opt_number, None, "SLE parameter"),
    "drift": (str, E.BOSONIC, "drift functional: lerw | bosonic | ust"),
    "experimental": (_bool, False, "allow the experimental UST drift"),
    "T": (_number, 0.1, "capacity horizon"),
    "dt": (_auto_number, "auto", "capacity step (auto = 4-cell lattice floor)"),
    "n": (int, 10, "number of curves / runs"),
    "seed": (int, 0, "master seed"),
    "refine": (int, 2, "zipper segment refinement"),
    "suite": (str, "spec-table", "verification suite"),
    "steps": (_ints, (2, 5, 10), "martingale stopping steps"),
    "points": (int, 5, "number of martingale test points"),
    "bins": (_floats, (0.0, 0.005, 0.01, 0.02, 0.04), "capacity bins for drift recovery"),
    "k": (_number, 3.0, "tolerance in standard errors"),
    "control": (_bool, False, "run the broken-control martingale test instead"),
    "statistic": (str, "xi_T", "abs-continuity statistic: one | left | xi_T"),
    "input": (str, "", "curve file for unzip"),
    "out": (str, "out", "output directory"),
    "workers": (int, 1, "worker processes (results do not depend on it)"),
}
UNHASHED = ("out", "workers")


def read_manifest(path):
    """Parse a manifest file into raw strings, with line-precise errors."""
    raw = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ManifestError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in KEYS:
            raise ManifestError(f"{path}:{no}: unknown key {key!r}")
        raw[key] = (value, f"{path}:{no}")
    return raw


def resolve(raw):
    """Typed manifest from ``{key: (text, where)}`` plus defaults, validated."""
    out = {}
    for key, (parse, default, _) in KEYS.items():
        if key in raw:
            text, where = raw[key]
            try:
                out[key] = parse(text)
            except (ValueError, ZeroDivisionError) as exc:
                raise ManifestError(f"{where}: bad value for {key!r}: {exc}") from None
        else:
            out[key] = default
    _validate(out, {k: w for k, (_, w) in raw.items()})
    return out


def _validate(man, where):
    def fail(key, msg):
        raise ManifestError(f"{where.get(key, '--' + key)}: {msg}")

    if man["m"] < 0:
        fail("m", "mass must be nonnegative")
    if man["eps"] <= 0 or man["eps"] > 0.5:
        fail("eps", "mesh must lie in (0, 1/2]")
    if man["model"] not in MODELS:
        fail("model", f"model must be one of {', '.join(MODELS)}")
    if man["lattice"] not in (SQUARE, HEXAGONAL):
        fail("lattice", "lattice must be square or hexagonal")
    if man["model"] == "he" and man["lattice"] != HEXAGONAL:
        fail("lattice", "the harmonic explorer requires the hexagonal lattice")
    if man["drift"] not in DRIFTS:
        fail("drift", f"drift must be one of {', '.join(DRIFTS)}")
    if man["kappa"] is not None and man["kappa"] <= 0:
        fail("kappa", "kappa must be positive")
    if man["n"] < 1:
        fail("n", "n must be at least 1")
    if man["T"] <= 0:
        fail("T", "T must be positive")
    if man["dt"] != "auto" and man["dt"] <= 0:
        fail("dt", "dt must be positive")
    if man["workers"] < 1:
        fail("workers", "workers must be at least 1")
    if man["alpha"] < 0:
        fail("alpha", "alpha must be nonnegative")
    if man["suite"] not in SUITES:
        fail("suite", f"unknown suite {man['suite']!r}")
    if man["statistic"] not in STATISTICS:
        fail("statistic", f"statistic must be one of {', '.join(STATISTICS)}")


def manifest_text(man):
    """Canonical ``key = value`` text (sorted, without unhashed keys)."""
    lines = []
    for key in sorted(man):
        if key in UNHASHED:
            continue
        v = man[key]
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def manifest_hash(man):
    return hashlib.sha256(manifest_text(man).encode()).hexdigest()


# ------------------------------------------------------------- domains ----

def make_domain(man):
    kind = man["lattice"]
    eps = man["eps"]
    name = man["domain"]
    if name == "unit-square":
        poly = np.array([0, 1, 1 + 1j, 1j])
        a, b = 0.5 + 0j, 0.5 + 1j
    elif name == "rectangle":
        w, h = man["width"], man["height"]
        poly = np.array([0, w, w + 1j * h, 1j * h])
        a, b = 0.5 * w + 0j, 0.5 * w + 1j * h
    else:
        geom = json.loads(Path(name).read_text())
        poly = np.array([complex(x, y) for x, y in geom["polygon"]])
        a = complex(*geom["a"]) if "a" in geom else poly[0]
        b = complex(*geom["b"]) if "b" in geom else poly[len(poly) // 2]
    a = man["a"] if man["a"] is not None else a
    b = man["b"] if man["b"] is not None else b
    return build_domain(poly, eps, kind, a, b)


# ----------------------------------------------------------- utilities ----

def _map(fn, items, workers):
    """Ordered map; the reduction order never depends on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _dump(obj):
    return json.dumps(V._plain(obj), sort_keys=True, separators=(",", ":"))


def _write_json(path, obj, mhash):
    body = dict(obj)
    body["manifest_hash"] = mhash
    path.write_text(json.dumps(V._plain(body), sort_keys=True, indent=2) + "\n")


def _write_csv(path, header, rows, mhash):
    lines = [f"# manifest_hash={mhash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _outdir(man):
    out = Path(man["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stats(x):
    x = np.asarray(x, dtype=float)
    return {"mean": float(x.mean()), "std": float(x.std()), "min": float(x.min()),
            "max": float(x.max()), "median": float(np.median(x))}


# ------------------------------------------------------------- sample ----

class _SampleTask:
    def __init__(self, man):
        self.man = man
        self.d = make_domain(man)
        self.p = MassParams(man["m"], man["eps"])
        self._sampler = None

    def _get(self):
        if self._sampler is None:
            model = self.man["model"]
            if model == "lerw":
                self._sampler = S.ConditionedWalk(self.d, self.p)
            elif model == "he":
                self._sampler = S.HarmonicExplorer(self.d, self.p)
            else:
                self._sampler = S.ForestConfig(self.man["alpha"])
        return self._sampler

    def __call__(self, item):
        k, seed = item
        model = self.man["model"]
        smp = self._get()
        if model == "lerw":
            c = S.sample_massive_lerw(self.d, self.p, seed, walk=smp)
        elif model == "he":
            c, _ = smp.run(seed)
        else:
            c = S.sample_forest_peano(self.d, smp, seed)
        return {"index": k, "vertices": [int(v) for v in c.vertices],
                "points": [[float(z.real), float(z.imag)] for z in c.points],
                "complete": bool(c.complete), "length": len(c.points)}

    def __getstate__(self):
        return {"man": self.man}

    def __setstate__(self, state):
        self.__init__(state["man"])


def cmd_sample(man):
    out = _outdir(man)
    mhash = manifest_hash(man)
    task = _SampleTask(man)
    seeds = S.task_seeds(man["seed"], man["n"])
    curves = _map(task, enumerate(seeds), man["workers"])
    d = task.d
    zb = d.z[d.b_vertex]
    lines = []
    ends = []
    for c in curves:
        c["manifest_hash"] = mhash
        lines.append(_dump(c))
        ends.append(abs(complex(*c["points"][-1]) - zb) <= d.eps * 1.000001)
    (out / "curves.jsonl").write_text("\n".join(lines) + "\n")
    lengths = [c["length"] for c in curves]
    summary = {"model": man["model"], "n": len(curves), "length": _stats(lengths),
               "complete": int(sum(c["complete"] for c in curves)),
               "ends_at_b": int(sum(ends))}
    _write_json(out / "summary.json", summary, mhash)
    print(f"sampled {len(curves)} {man['model']} curves; mean length "
          f"{summary['length']['mean']:.1f}; {summary['ends_at_b']} end at b  [{mhash[:12]}]")
    return 0


# ------------------------------------------------------------- evolve ----

def _drift(man):
    kind = man["drift"]
    kappa = man["kappa"]
    if kind == E.LERW:
        kappa = 2.0 if kappa is None else kappa
    elif kind == E.UST:
        kappa = 8.0 if kappa is None else kappa
    elif kappa is None:
        kappa = 4.0
    try:
        return E.DriftFunctional(kind, kappa, man["m"], experimental=man["experimental"])
    except ValueError as exc:
        raise ManifestError(f"--drift/--kappa: {exc}") from None


class _EvolveTask:
    def __init__(self, man, apply_drift=True):
        self.man = man
        self.apply_drift = apply_drift
        self.d = make_domain(man)
        self.p = MassParams(man["m"], man["eps"])
        self.chart = L.base_chart(self.d)
        self.drift = _drift(man)
        self.dt = self._dt()

    def _dt(self):
        if self.man["dt"] != "auto":
            return self.man["dt"]
        floor = E.dt_floor(E.MsleState.start(self.d, self.p, self.chart), 4.0)
        n = max(1, int(np.floor(self.man["T"] / floor)))
        return self.man["T"] / n

    def __call__(self, seed):
        try:
            run = E.evolve(self.d, self.p, self.drift, self.man["T"], self.dt, seed=seed,
                           apply_drift=self.apply_drift, chart=self.chart)
        except (E.ResolutionError, DomainError) as exc:
            return {"error": f"{type(exc).__name__}: {exc}"}
        return {"t": run.drive.t, "xi": run.drive.xi, "noise": run.drive.noise,
                "drift": run.drive.drift, "lam": run.lam, "lam2": run.lam2, "trace": run.trace}

    def __getstate__(self):
        return {"man": self.man, "apply_drift": self.apply_drift}

    def __setstate__(self, state):
        self.__init__(state["man"], state["apply_drift"])


def _runs(man, seed, n, apply_drift=True):
    task = _EvolveTask(man, apply_drift)
    res = _map(task, S.task_seeds(seed, n), man["workers"])
    for k, r in enumerate(res):
        if "error" in r:
            raise RunHalted(f"run {k}: {r['error']}")
    return task, res


def _as_drive(r):
    return L.DrivingFunction(r["t"], r["xi"], r["noise"], r["drift"])


def cmd_evolve(man):
    out = _outdir(man)
    mhash = manifest_hash(man)
    task, res = _runs(man, man["seed"], man["n"])
    width = len(str(len(res) - 1))
    for k, r in enumerate(res):
        tag = f"{k:0{width}d}"
        _write_csv(out / f"drive_{tag}.csv", ["t", "xi", "noise", "drift"],
                   zip(r["t"], r["xi"], np.r_[r["noise"], np.nan], np.r_[r["drift"], np.nan]), mhash)
        _write_csv(out / f"trace_{tag}.csv", ["x", "y"],
                   ((z.real, z.imag) for z in r["trace"]), mhash)
        _write_csv(out / f"lambda_{tag}.csv", ["t", "lambda"], zip(r["t"][:-1], r["lam"]), mhash)
    lam2 = [r["lam2"] for r in res]
    summary = {"runs": len(res), "kappa": task.drift.kappa, "drift": task.drift.kind,
               "m": man["m"], "dt": task.dt, "T": man["T"], "lam2": lam2}
    if task.drift.kind == E.BOSONIC and man["m"] > 0:
        summary["novikov_bound"] = V.stated_novikov_bound(task.d, task.p)
    if len(res) >= 2:
        est = L.estimate_kappa([_as_drive(r) for r in res])
        summary["kappa_hat"] = [est.kappa, est.lo, est.hi]
    _write_json(out / "summary.json", summary, mhash)
    line = f"evolved {len(res)} runs to T={man['T']:g} (dt={task.dt:.4g}); max lam2 {max(lam2):.4g}"
    if "kappa_hat" in summary:
        line += f"; kappa_hat {summary['kappa_hat'][0]:.3f}"
    print(f"{line}  [{mhash[:12]}]")
    return 0


# -------------------------------------------------------------- unzip ----

def cmd_unzip(man):
    if not man["input"]:
        raise ManifestError("--input: a curve file (curves.jsonl) is required")
    out = _outdir(man)
    mhash = manifest_hash(man)
    d = make_domain(man)
    chart = L.base_chart(d)
    drives = []
    for line in Path(man["input"]).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        pts = np.array([complex(x, y) for x, y in rec["points"]])
        try:
            drive = L.unzip(pts, chart=chart, refine=man["refine"])
        except ValueError as exc:
            raise RunHalted(f"curve {rec.get('index')}: {exc}") from None
        _write_csv(out / f"unzipped_{rec['index']:05d}.csv", ["t", "xi"],
                   zip(drive.t, drive.xi), mhash)
        drives.append(drive)
    summary = {"curves": len(drives), "T": [dr.T for dr in drives]}
    coarse = [V.coarse_drive(dr, 0.01, 0.1) for dr in drives if dr.T > 0.1]
    if coarse:
        est = L.estimate_kappa(coarse)
        summary["kappa_hat"] = [est.kappa, est.lo, est.hi]
        summary["kappa_grid"] = [0.01, 0.1]
    _write_json(out / "unzip_summary.json", summary, mhash)
    msg = f"unzipped {len(drives)} curves"
    if coarse:
        msg += f"; kappa_hat {summary['kappa_hat'][0]:.3f}"
    print(f"{msg}  [{mhash[:12]}]")
    return 0


# ------------------------------------------------------------- verify ----

def _suite_spec_table(man):
    rows = O.spec_table()
    ok = all(r[-1] for r in rows)
    for name, k, b, s, got, good in rows:
        print(f"  {name:<12} kappa={str(k):<5} beta={str(b):<5} sigma={str(got):<4} "
              f"expected {str(s):<4} {'ok' if good else 'MISMATCH'}")
    return [V.EnsembleReport("spec-table", len(rows), float(sum(r[-1] for r in rows)), 0.0, ok,
                             "exact equality", {}, {"rows": [[str(x) for x in r] for r in rows]})]


def _suite_round_trip(man):
    reports = []
    errs = []
    for s in S.task_seeds(man["seed"], man["n"]):
        drive = L.DrivingFunction.brownian(2.0, 1.0, 1e-4, seed=s)
        back = L.unzip(L.forward_trace(drive))
        errs.append(float(np.max(np.abs(np.interp(drive.t, back.t, back.xi) - drive.xi))))
    reports.append(V.EnsembleReport("round-trip-sup", len(errs), max(errs), 0.0, max(errs) < 1e-3,
                                    "sup |xi - unzip(trace(xi))| < 1e-3",
                                    {"master": man["seed"], "N": man["n"]}, {"errors": errs}))
    for kappa in (2.0, 4.0):
        drives = [L.DrivingFunction.brownian(kappa, 1.0, 1e-3, seed=s)
                  for s in S.task_seeds(man["seed"] + 1, 500)]
        est = L.estimate_kappa(drives)
        rel = abs(est.kappa - kappa) / kappa
        reports.append(V.EnsembleReport(f"kappa-synthetic-{kappa:g}", 500, est.kappa, 0.0,
                                        rel < 0.05, "relative error < 5%",
                                        {"master": man["seed"] + 1, "N": 500},
                                        {"ci": [est.lo, est.hi]}))
    return reports


def _suite_martingale(man):
    d = make_domain(man)
    p = MassParams(man["m"], man["eps"])
    points = V.default_test_points(d, man["points"])
    steps = man["steps"]
    if man["model"] == "lerw":
        hist = V.LerwHistory(d, p)
        obs_p = MassParams(0.0, man["eps"]) if man["control"] else p
        obs = V.LerwObservable(d, obs_p)
    elif man["model"] == "he":
        hist = V.ExplorerHistory(d, p, max(steps) + 1)
        obs_p = MassParams(0.0, man["eps"]) if man["control"] else p
        obs = V.ExplorerObservable(d, obs_p)
    else:
        raise ManifestError("--model: the martingale suite supports lerw and he")
    name = f"martingale-{man['model']}-m{man['m']:g}" + ("-control" if man["control"] else "")
    rep = V.martingale_test(hist, obs, points, steps, man["n"], man["seed"], man["k"], name=name)
    if man["control"]:
        # a control passes when the harness detects the violation
        rep = V.EnsembleReport(rep.name, rep.n, rep.estimate, rep.se, not rep.passed,
                               f"control: some cell must reach {man['k']} SE", rep.seeds,
                               rep.details)
    return [rep]


def _suite_drift_recovery(man):
    d = make_domain(man)
    if man["drift"] == E.LERW or man["model"] == "lerw":
        p = MassParams(man["m"], man["eps"])
        return [V.lerw_drift_recovery(d, p, man["n"], man["seed"], man["bins"], man["k"],
                                      man["refine"])]
    raise ManifestError("--model: drift recovery runs on massive LERW ensembles")


def _suite_novikov(man):
    task, res = _runs(man, man["seed"], man["n"])
    if task.drift.kind == E.BOSONIC:
        bound = V.stated_novikov_bound(task.d, task.p)
    else:
        bound = V.novikov_bound(task.d, task.p)
    return [V.novikov_audit([r["lam2"] for r in res], bound, f"novikov-{task.drift.kind}",
                            {"master": man["seed"], "N": man["n"]})]


def _statistic(name, d):
    centre = 0.5 * (d.z.real.min() + d.z.real.max())

    def f(r):
        if name == "one":
            return 1.0
        if name == "xi_T":
            return float(r.drive.xi[-1])
        return float(np.mean(r.trace.real) < centre)

    return f


def _suite_abs_continuity(man):
    task, crit = _runs(man, man["seed"], man["n"], apply_drift=False)
    _, mass = _runs(man, man["seed"] + 1, man["n"], apply_drift=True)
    wrap = [_Run(r) for r in crit]
    wrap_m = [_Run(r) for r in mass]
    f = _statistic(man["statistic"], task.d)
    return [V.abs_continuity_check(wrap, wrap_m, f, task.drift.kappa, man["k"],
                                   name=f"abs-continuity-{man['statistic']}",
                                   seeds={"critical": man["seed"], "massive": man["seed"] + 1,
                                          "N": man["n"]})]


class _Run:
    def __init__(self, r):
        self.drive = _as_drive(r)
        self.lam = r["lam"]
        self.trace = np.asarray(r["trace"])


def _suite_hadamard(man):
    d = make_domain(man)
    pairs = [(0.2 + 0.5j, 0.8 + 0.4j), (0.3 + 0.6j, 0.3 + 0.6j), (0.75 + 0.7j, 0.25 + 0.35j)]
    k = int(round(0.25 / man["eps"]))
    return [V.hadamard_check(d, pairs, (k - 2, k, k + 2), man["refine"])]


SUITE_RUNNERS = {
    "spec-table": _suite_spec_table,
    "round-trip": _suite_round_trip,
    "martingale": _suite_martingale,
    "drift-recovery": _suite_drift_recovery,
    "novikov": _suite_novikov,
    "abs-continuity": _suite_abs_continuity,
    "hadamard": _suite_hadamard,
}


def cmd_verify(man):
    out = _outdir(man)
    mhash = manifest_hash(man)
    reports = SUITE_RUNNERS[man["suite"]](man)
    for rep in reports:
        print(rep.summary())
        _write_json(out / f"report_{rep.name}.json", rep.to_dict(), mhash)
    ok = all(r.passed for r in reports)
    print(f"{man['suite']}: {'PASS' if ok else 'FAIL'}  [{mhash[:12]}]")
    return 0 if ok else 1


def cmd_dual_kappa(man):
    if man["kappa"] is None:
        raise ManifestError("--kappa: required")
    k = man["kappa"]
    exact = Fraction(k).limit_denominator(10 ** 6)
    use = exact if float(exact) == k else k
    try:
        dual = O.dual_kappa(use)
    except ValueError as exc:
        raise ManifestError(f"--kappa: {exc}") from None
    print(f"kappa={use} dual={dual}")
    return 0


COMMANDS = {"sample": cmd_sample, "evolve": cmd_evolve, "unzip": cmd_unzip,
            "verify": cmd_verify, "dual-kappa": cmd_dual_kappa}


# ---------------------------------------------------------------- main ----

def build_parser():
    parser = argparse.ArgumentParser(prog="massive-sle", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("suite_arg", nargs="?", help="suite name (verify only)")
    parser.add_argument("--manifest", help="manifest file (key = value lines)")
    for key, (_, default, help_) in KEYS.items():
        parser.add_argument(f"--{key}", dest=f"opt_{key}", metavar="VALUE",
                            help=f"{help_} (default: {default})")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = read_manifest(args.manifest) if args.manifest else {}
        for key in KEYS:
            val = getattr(args, f"opt_{key}")
            if val is not None:
                raw[key] = (val, f"--{key}")
        if args.suite_arg is not None:
            if args.command != "verify":
                raise ManifestError(f"unexpected argument {args.suite_arg!r}")
            raw["suite"] = (args.suite_arg, "verify <suite>")
        man = resolve(raw)
        return COMMANDS[args.command](man)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RunHalted, E.ResolutionError, DomainError) as exc:
        print(f"halted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
