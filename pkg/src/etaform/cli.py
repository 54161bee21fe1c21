"""Command-line entry point.

Every command prints (or writes with ``--report``) a JSON run report with the
inputs digest, results, diagnostics, library versions, seed and the tolerance
table.  Exit codes: 0 success, 1 usage or parse error, 2 mathematical
degeneracy, 3 verification failure, 4 resource guard (time limit) exceeded.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import click
import numpy as np
import scipy

from . import __version__
from .config import DEFAULTS, KAPPA, TOLERANCES
from .errors import ContractViolation, Degenerate, EtaFormError, PoorFit
from .families import (
    BUILTINS,
    CutoffPair,
    SurfaceFamily,
    builtin_family,
    family_from_dict,
    family_to_dict,
    split_chern_integral,
)
from .maslov import maslov_index, triple_form
from .spectral_eta import (
    boundary_phases,
    eta_closed_form,
    eta_cocycle_sum,
    eta_galerkin,
    eta_heat_oracle,
    eta_zeta_oracle,
)
from .superconnection import (
    PAIRS,
    cocycle_closedness,
    discretize_family,
    eta_form,
    surface_cocycle_integral,
)
from .symplectic import orthonormal_frame, random_transverse_triple, space_from_complex_structure, standard_space

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_FAILED, EXIT_TIMEOUT = 0, 1, 2, 3, 4
THREADS_ENV = "ETAFORM_THREADS"

# cross-method tolerances for ``eta --method all``
ETA_CROSS_TOL = {"zeta": 1e-12, "heat": 1e-3, "galerkin": 1e-4}


class ResourceGuard(Exception):
    """Raised when a verification suite exceeds its time budget."""


class Deadline:
    def __init__(self, seconds):
        self.limit = seconds
        self.start = time.monotonic()

    def check(self, *_):
        if self.limit is not None and time.monotonic() - self.start > self.limit:
            raise ResourceGuard(f"time limit of {self.limit:g} s exceeded")


class InputError(Exception):
    """Malformed input file."""


# --------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def digest(obj):
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    text = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@dataclass
class RunReport:
    command: str
    inputs: dict
    results: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    seed: int | None = None
    status: str = "ok"

    def to_dict(self):
        d = asdict(self)
        d["inputs_digest"] = digest(self.inputs)
        d["results_digest"] = digest(self.results)
        d["versions"] = {
            "etaform": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        }
        d["tolerances"] = dict(TOLERANCES)
        d["defaults"] = dict(DEFAULTS, kappa=KAPPA)
        return _jsonable(d)


def emit(report, path=None):
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


# --------------------------------------------------------------------------
# frames documents


def parse_frames_document(doc):
    """Validate a frames document; returns ``(space, frames)`` with ``frames`` a name -> frame map."""
    from .families import complex_from_json

    if not isinstance(doc, dict):
        raise InputError("frames document must be a JSON object")
    for key in ("dim", "I", "frames"):
        if key not in doc:
            raise InputError(f"frames document lacks field {key!r}")
    try:
        I = complex_from_json(doc["I"])
    except (ValueError, ContractViolation) as exc:
        raise InputError(f"cannot read I: {exc}") from exc
    if I.shape != (doc["dim"], doc["dim"]):
        raise InputError(f"I has shape {I.shape}, expected ({doc['dim']}, {doc['dim']})")
    try:
        space = space_from_complex_structure(I)
    except ContractViolation as exc:
        raise InputError(str(exc)) from exc
    frames = {}
    for name, raw in doc["frames"].items():
        try:
            F = complex_from_json(raw)
        except (ValueError, ContractViolation) as exc:
            raise InputError(f"cannot read frame {name}: {exc}") from exc
        if F.shape != (space.dim, space.l):
            raise InputError(f"frame {name} has shape {F.shape}, expected ({space.dim}, {space.l})")
        sv = np.linalg.svd(F, compute_uv=False)
        if sv[-1] < 1e-10 * max(1.0, sv[0]):
            raise InputError(f"frame {name} is rank deficient (smallest singular value {sv[-1]:.3e})")
        F = orthonormal_frame(F)
        res = float(np.linalg.norm(F.conj().T @ (space.I @ F)))
        if res > 1e-8:
            raise InputError(f"frame {name} is not Lagrangian (residual ||F^H I F|| = {res:.3e})")
        frames[name] = F
    return space, frames


def frames_document(space, frames):
    from .families import complex_to_json

    return {
        "dim": space.dim,
        "I": complex_to_json(space.I),
        "frames": {k: complex_to_json(v) for k, v in frames.items()},
    }


def load_frames(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_frames_document(doc)


def _need(frames, names):
    missing = [n for n in names if n not in frames]
    if missing:
        raise InputError(f"frames document lacks {', '.join(missing)}")
    return [frames[n] for n in names]


# --------------------------------------------------------------------------
# verification suites (pure functions returning (passed, results))


def suite_cocycle0(count=50, seed=0, l_max=4, deadline=None):
    """Degree-0 identity ``sum of three eta invariants = Maslov index`` on random triples."""
    rng = np.random.default_rng(seed)
    worst, indices = 0.0, {}
    for k in range(count):
        if deadline:
            deadline.check()
        l = int(rng.integers(1, l_max + 1))
        space = standard_space(l)
        Ls = random_transverse_triple(space, int(rng.integers(2**31)))
        tau = maslov_index(*Ls, space=space)
        worst = max(worst, abs(eta_cocycle_sum(*Ls, space=space) - tau))
        indices[tau] = indices.get(tau, 0) + 1
    tol = 1e-8
    return worst < tol, {
        "count": count,
        "max_residual": worst,
        "tolerance": tol,
        "index_histogram": {str(k): v for k, v in sorted(indices.items())},
    }


def _gauge_vertex(fam):
    base = fam.basepoint
    return tuple(min(b + 1, n - 1) for b, n in zip(base, fam.shape))


def suite_gauge(fam, vertex=None, K=128, deadline=None):
    """Eta forms under two cutoff/transport choices at a vertex away from the base."""
    v = _gauge_vertex(fam) if vertex is None else tuple(vertex)
    choices = [(CutoffPair(), "standard"), (CutoffPair(0.25, 0.35), "alt")]
    method = "quadrature"
    rows = []
    for pair in PAIRS:
        vals = []
        for cutoff, transport in choices:
            if deadline:
                deadline.check()
            op = discretize_family(fam, K, pair=pair, cutoff=cutoff, transport=transport)
            vals.append(eta_form(op, v, method=method))
        rows.append(
            {
                "pair": list(pair),
                "f0": [x.f0 for x in vals],
                "f2": [x.f2.tolist() for x in vals],
                "f0_diff": abs(vals[0].f0 - vals[1].f0),
                "f2_diff": float(np.max(np.abs(vals[0].f2 - vals[1].f2), initial=0.0)),
                "fit_relative": max(x.diagnostics["fit_relative_max"] for x in vals),
            }
        )
    f0d = max(r["f0_diff"] for r in rows)
    f2d = max(r["f2_diff"] for r in rows)
    tol0, tol2 = 1e-6, 1e-4
    return f0d < tol0 and f2d < tol2, {
        "vertex": list(v),
        "K": K,
        "method": method,
        "pairs": rows,
        "max_f0_diff": f0d,
        "max_f2_diff": f2d,
        "tolerance_f0": tol0,
        "tolerance_f2": tol2,
    }


def suite_closedness(seed=4, n=5, h=0.04, refinements=2, K=64, threads=1, deadline=None):
    """``d`` of the summed eta 2-forms on the three-parameter test chart under step refinement."""
    from .families import three_param_test

    hs = [h / 2**k for k in range(refinements + 1)]
    runs = []
    for hk in hs:
        if deadline:
            deadline.check()
        fam = three_param_test(n=n, h=hk, seed=seed)
        runs.append(dict(cocycle_closedness(fam, K=K, threads=threads), h=hk))
    ds = [r["max_d"] for r in runs]
    orders = [math.log(ds[k] / ds[k + 1]) / math.log(hs[k] / hs[k + 1]) for k in range(len(ds) - 1)]
    spread = max(r["f0_spread"] for r in runs)
    int_dist = max(r["f0_integer_distance"] for r in runs)
    matches = all(r["f0_matches_maslov"] for r in runs)
    passed = bool(orders) and min(orders) >= 1.5 and spread < 1e-3 and int_dist < 1e-2 and matches
    return passed, {
        "runs": runs,
        "orders": orders,
        "f0_spread": spread,
        "f0_integer_distance": int_dist,
        "f0_matches_maslov": matches,
        "min_order_required": 1.5,
    }


def suite_cp2(fam, K=64, threads=1, deadline=None):
    """Sphere integral of the summed eta 2-forms against ``-2``."""
    progress = deadline.check if deadline else None
    r = surface_cocycle_integral(fam, K=K, threads=threads, progress=progress)
    value = r["integral"]
    return abs(value + 2) <= 0.2, {
        "integral": value,
        "target": -2.0,
        "window": [-2.2, -1.8],
        "f0_sum_range": [float(r["f0_sum"].min()), float(r["f0_sum"].max())],
        "split_chern_integral": split_chern_integral(fam),
        "mesh": list(fam.shape),
        "K": K,
    }


# --------------------------------------------------------------------------
# commands


def _threads_default():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@click.group()
@click.option("--threads", type=int, default=None, help=f"Worker threads (default: ${THREADS_ENV} or 1).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None, help="Write the JSON report here.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, threads, report_path):
    """Maslov indices, eta invariants and eta forms of Lagrangian triples."""
    ctx.obj = {"threads": threads or _threads_default(), "report": report_path}


@main.command()
@click.argument("frames_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def maslov(ctx, frames_path):
    """Triple index (n, m, tau0) of the triple L0, L1, L2."""
    space, frames = load_frames(frames_path)
    L0, L1, L2 = _need(frames, ("L0", "L1", "L2"))
    t = triple_form(L0, L1, L2, space)
    rep = RunReport("maslov", {"frames": file_digest(frames_path)})
    rep.results = {"n": t.n, "m": t.m, "tau0": t.tau0}
    rep.diagnostics = {
        "q_eigenvalues": np.linalg.eigvalsh(t.q_matrix),
        "eta_cocycle_sum": eta_cocycle_sum(L0, L1, L2, space),
    }
    emit(rep, ctx.obj["report"])


@main.command()
@click.argument("frames_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["closed", "zeta", "heat", "galerkin", "all"]), default="closed")
@click.option("--basis", "K", type=int, default=DEFAULTS["basis_K"], show_default=True, help="Galerkin truncation K.")
@click.option("--pair", default="L0,L1", show_default=True, help="Names of the two boundary frames.")
@click.pass_context
def eta(ctx, frames_path, method, K, pair):
    """Eta invariant of I d/dt on [0, 1] with the given boundary pair."""
    space, frames = load_frames(frames_path)
    names = [p.strip() for p in pair.split(",")]
    if len(names) != 2:
        raise InputError("--pair takes two comma separated frame names")
    La, Lb = _need(frames, names)
    rep = RunReport("eta", {"frames": file_digest(frames_path), "method": method, "K": K, "pair": names})
    phases = boundary_phases(La, Lb, space).thetas
    methods = ["closed", "zeta", "heat", "galerkin"] if method == "all" else [method]
    values = {}
    for m in methods:
        if m == "closed":
            values[m] = eta_closed_form(La, Lb, space)
        elif m == "zeta":
            values[m] = eta_zeta_oracle(La, Lb, 0.0, space)
        elif m == "heat":
            values[m] = eta_heat_oracle(La, Lb, space=space)
        else:
            values[m] = eta_galerkin(La, Lb, K, space)[0]
    rep.results = {"eta": values[methods[0]], "values": values, "phases": phases}
    ok = True
    if method == "all":
        diffs = {m: abs(values[m] - values["closed"]) for m in ETA_CROSS_TOL}
        ok = all(diffs[m] < ETA_CROSS_TOL[m] for m in diffs)
        rep.diagnostics = {"cross_check": {"differences": diffs, "tolerances": ETA_CROSS_TOL, "passed": ok}}
        rep.status = "pass" if ok else "fail"
    emit(rep, ctx.obj["report"])
    if not ok:
        ctx.exit(EXIT_FAILED)


def _load_or_build(path, name, **params):
    if path:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: invalid JSON: {exc.msg}") from exc
        return family_from_dict(doc), {"family": file_digest(path)}
    return builtin_family(name, **params), {"family": name, **params}


@main.command()
@click.option("--suite", type=click.Choice(["cocycle0", "gauge", "closedness", "cp2"]), required=True)
@click.option("--family", "family_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Family JSON (gauge, cp2).")
@click.option("--seed", type=int, default=None, help="Seed (cocycle0: default 0; closedness: default 4).")
@click.option("--count", type=int, default=50, show_default=True, help="Random triples (cocycle0).")
@click.option("--basis", "K", type=int, default=None, help="Basis truncation (gauge 128, closedness 64, cp2 64).")
@click.option("--h", "h", type=float, default=0.04, show_default=True, help="Coarsest step (closedness).")
@click.option("--n-theta", type=int, default=16, show_default=True)
@click.option("--n-phi", type=int, default=32, show_default=True)
@click.option("--timeout", type=float, default=None, help="Time budget in seconds.")
@click.pass_context
def verify(ctx, suite, family_path, seed, count, K, h, n_theta, n_phi, timeout):
    """Run a verification suite and report pass/fail with measured residuals."""
    threads = ctx.obj["threads"]
    deadline = Deadline(timeout)
    inputs = {"suite": suite}
    if suite == "cocycle0":
        seed = 0 if seed is None else seed
        inputs.update(count=count, seed=seed)
        ok, res = suite_cocycle0(count, seed, deadline=deadline)
    elif suite == "gauge":
        fam, src = _load_or_build(family_path, "rotating-l1")
        K = 128 if K is None else K
        inputs.update(src, K=K)
        ok, res = suite_gauge(fam, K=K, deadline=deadline)
    elif suite == "closedness":
        seed = 4 if seed is None else seed
        K = 64 if K is None else K
        inputs.update(seed=seed, h=h, K=K)
        ok, res = suite_closedness(seed=seed, h=h, K=K, threads=threads, deadline=deadline)
    else:
        fam, src = _load_or_build(family_path, "cp2", n_theta=n_theta, n_phi=n_phi)
        if not isinstance(fam, SurfaceFamily):
            raise InputError("the cp2 suite needs a sphere family")
        K = 64 if K is None else K
        inputs.update(src, K=K)
        ok, res = suite_cp2(fam, K=K, threads=threads, deadline=deadline)
    rep = RunReport("verify", inputs, results=res, seed=seed, status="pass" if ok else "fail")
    rep.diagnostics = {"elapsed_s": round(time.monotonic() - deadline.start, 1), "threads": threads}
    emit(rep, ctx.obj["report"])
    if not ok:
        ctx.exit(EXIT_FAILED)


@main.command()
@click.argument("name")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Family JSON output path.")
@click.option("--n-theta", type=int, default=16, show_default=True, help="cp2 latitudes.")
@click.option("--n-phi", type=int, default=32, show_default=True, help="cp2 longitudes (even).")
@click.option("--n", type=int, default=None, help="Grid points per axis (rotating-l1: 21, three-param-test: 5).")
@click.option("--h", "h", type=float, default=None, help="Step (three-param-test: 0.05).")
@click.option("--seed", type=int, default=None, help="Seed (three-param-test: 4).")
@click.pass_context
def example(ctx, name, out_path, n_theta, n_phi, n, h, seed):
    """Write a builtin family (cp2, rotating-l1, three-param-test) as JSON."""
    if name not in BUILTINS:
        raise click.UsageError(f"unknown example {name!r}; choose from {', '.join(sorted(BUILTINS))}")
    params = {}
    if name == "cp2":
        params = {"n_theta": n_theta, "n_phi": n_phi}
    else:
        if n is not None:
            params["n"] = n
        if name == "three-param-test":
            if h is not None:
                params["h"] = h
            if seed is not None:
                params["seed"] = seed
    fam = builtin_family(name, **params)
    doc = family_to_dict(fam)
    with open(out_path, "w") as fh:
        json.dump(doc, fh)
    rep = RunReport("example", {"name": name, **params}, seed=params.get("seed"))
    rep.results = {
        "kind": doc["kind"],
        "dim": fam.dim,
        "shape": list(fam.shape),
        "vertices": int(np.prod(fam.shape)),
        "min_transversality_gap": fam.min_gap(),
        "document_digest": file_digest(out_path),
    }
    emit(rep, ctx.obj["report"])


def run(argv=None):
    """Console entry point mapping errors to exit codes."""
    try:
        code = main.main(args=argv, prog_name="etaform", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except Degenerate as exc:
        extra = f" (residual {exc.residual:.3e})" if exc.residual is not None else ""
        click.echo(f"degenerate: {exc}{extra}", err=True)
        return EXIT_DEGENERATE
    except ResourceGuard as exc:
        click.echo(f"resource guard: {exc}", err=True)
        return EXIT_TIMEOUT
    except PoorFit as exc:
        click.echo(f"verification failed: {exc}", err=True)
        return EXIT_FAILED
    except (ContractViolation, EtaFormError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return code if isinstance(code, int) else EXIT_OK


def entry():
    sys.exit(run())


if __name__ == "__main__":
    entry()
