"""Run orchestration: config -> geometry -> meshes -> checks -> report."""

from __future__ import annotations

import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .charts import CHARTS, NormalSet, identity_chart
from .checks import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    CheckReport,
    FrozenState,
    SolverConfig,
    check_hessian_qc,
    check_qc_boundary,
    check_qc_interior,
    check_second_variation,
    check_spatially_local,
    check_weak_EL,
    cube_patch_mesh,
)
from .config import SCHEMA_VERSION, RunConfig
from .cover import build_cover, validate_cover
from .errors import ConfigError, VarQCError
from .geometry import DOMAINS, HalfSpace, Polytope, facelike_classify
from .integrands import check_growth_bounds, excess_origin_checks, fit_C_from_Gb, make_extremal, make_integrand
from .mesh import DiscreteVariation, mesh_region
from .necessity import BlowupFamily, necessity_verdict
from .regions import build_Bdk, unit_ball

REPORT_SCHEMA_VERSION = 1


@dataclass
class RunReport:
    """Config echo, one record per check, environment stamp and wall times."""

    config: dict
    checks: list
    environment: dict
    wall_times: dict
    exit_code: int
    schema_version: int = REPORT_SCHEMA_VERSION
    outputs: list = field(default_factory=list)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "checks": self.checks,
            "environment": self.environment,
            "wall_times": self.wall_times,
            "exit_code": self.exit_code,
            "outputs": self.outputs,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def margins(self):
        return [(c["label"], c["margin"]) for c in self.checks]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def environment_stamp():
    import scipy

    return {
        "varqc": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


# ---- setup --------------------------------------------------------------------


def build_domain(spec):
    try:
        if spec.name is not None:
            if spec.name not in DOMAINS:
                raise ConfigError("unknown domain", [("domain.name", f"{spec.name!r}; known: {sorted(DOMAINS)}")])
            return DOMAINS[spec.name]()
        return Polytope.from_halfspace_lists([[HalfSpace(h.m, h.b) for h in piece] for piece in spec.pieces])
    except ConfigError:
        raise
    except VarQCError as exc:
        raise ConfigError("invalid domain", [("domain", str(exc))]) from None


@dataclass
class Setup:
    cfg: RunConfig
    domain: Polytope
    integrand: object
    extremal: object
    dirichlet: list
    neumann: list


def prepare(cfg):
    """Resolve registry names and check the boundary partition.

    Raises
    ------
    ConfigError
    """
    P = build_domain(cfg.domain)
    d = P.dim
    facets = sorted(f.id for f in P.faces_of_dim(d - 1))
    diags = []
    bad = [i for i in cfg.dirichlet_faces if i not in facets]
    if bad:
        diags.append(("dirichlet_faces", f"ids {bad} are not facets; facets are {facets}"))
    dirichlet = sorted(set(cfg.dirichlet_faces))
    neumann = sorted(set(facets) - set(dirichlet)) if cfg.neumann_faces is None else sorted(set(cfg.neumann_faces))
    if cfg.neumann_faces is not None and (set(dirichlet) & set(neumann) or set(dirichlet) | set(neumann) != set(facets)):
        diags.append(("neumann_faces", "Dirichlet and Neumann faces must partition the facets"))
    try:
        F = make_integrand(cfg.integrand.name, **cfg.integrand.params)
    except ConfigError as exc:
        diags.append(("integrand", str(exc)))
        F = None
    try:
        params = dict(cfg.extremal.params)
        if F is not None and F.N is not None and cfg.extremal.name != "affine":
            params.setdefault("N", F.N)
        ex = make_extremal(cfg.extremal.name, **params)
    except ConfigError as exc:
        diags.append(("extremal", str(exc)))
        ex = None
    if F is not None and cfg.p is not None and cfg.p != F.p:
        diags.append(("p", f"integrand {F.name!r} has growth exponent {F.p}, config says {cfg.p}"))
    if F is not None and ex is not None:
        if F.N is not None and F.N != ex.N:
            diags.append(("extremal", f"integrand needs N = {F.N}, extremal has N = {ex.N}"))
        if F.d is not None and F.d != d:
            diags.append(("integrand", f"integrand needs d = {F.d}, domain has d = {d}"))
        if cfg.extremal.name == "affine" and ex.M.shape[1] != d:
            diags.append(("extremal.params.M", f"needs {d} columns"))
    for i, chk in enumerate(cfg.checks):
        for key in ("x0",):
            v = getattr(chk, key)
            if v is not None and len(v) != d:
                diags.append((f"checks.{i}.{key}", f"expected {d} coordinates"))
        if chk.name == "necessity" and chk.chart is not None and chk.chart.name not in ("identity", "radial_warp"):
            diags.append((f"checks.{i}.chart.name", "necessity supports 'identity' and 'radial_warp'"))
    if diags:
        raise ConfigError("config is inconsistent", diags)
    return Setup(cfg, P, F, ex, dirichlet, neumann)


def neumann_points(setup):
    """Sample points of the faces in the closure of the Neumann part."""
    P = setup.domain
    tol = 1e-9 * max(1.0, P.scale)
    neu = [P.face(i) for i in setup.neumann]
    pts = []
    for f in P.faces:
        if f.id in setup.neumann or any(g.contains(f.sample_point, tol) for g in neu):
            pts.append((f.id, f.sample_point))
    return pts


# ---- tasks --------------------------------------------------------------------


class _Context:
    """Shared meshes, built once before checks run."""

    def __init__(self, setup, need):
        self.setup = setup
        cfg = setup.cfg
        P = setup.domain
        self.domain_mesh = (mesh_region(P, cfg.mesh.domain_h, fixed_faces=setup.dirichlet)
                            if need & {"weak_EL", "second_variation"} else None)
        self.ball_mesh = (mesh_region(unit_ball(P.dim), cfg.mesh.ball_h)
                          if need & {"qc_interior", "hessian_qc"} else None)
        self._cover = build_cover(P, cfg.R) if need & {"cover", "spatially_local"} else None

    def cover(self):
        return self._cover


def _solver(cfg, seed):
    s = cfg.solver
    return SolverConfig(restarts=s.restarts, amplitudes=tuple(s.amplitudes), seed=seed, maxiter=s.maxiter,
                        box=s.box, h=cfg.mesh.region_h)


def _interior_point(setup, spec):
    if spec.x0 is not None:
        return np.asarray(spec.x0, float)
    return np.asarray(setup.domain.pieces[0].interior_point, float)


def _run_check(ctx, spec, seed, out_dir):
    setup = ctx.setup
    cfg, P, F, ex = setup.cfg, setup.domain, setup.integrand, setup.extremal
    name = spec.name
    if name == "weak_EL":
        return [check_weak_EL(ex, F, ctx.domain_mesh)]
    if name == "second_variation":
        return [check_second_variation(ex, F, ctx.domain_mesh, cfg.c0)]
    if name == "qc_interior":
        state = FrozenState.from_extremal(ex, _interior_point(setup, spec))
        return [check_qc_interior(state, F, cfg.c0, ctx.ball_mesh, _solver(cfg, seed))]
    if name == "hessian_qc":
        state = FrozenState.from_extremal(ex, _interior_point(setup, spec))
        Fzz = F.F_zz(state.x0[None], state.y0[None], state.A[None])[0]
        return [check_hessian_qc(Fzz, cfg.c0, ctx.ball_mesh)]
    if name == "qc_boundary":
        if spec.points is not None or spec.x0 is not None:
            pts = [(None, np.asarray(x, float)) for x in (spec.points or [spec.x0])]
        else:
            pts = neumann_points(setup)
        out = []
        for k, (fid, x0) in enumerate(pts):
            face = facelike_classify(P, x0)
            if face.orientation is None:
                out.append(CheckReport("qc_boundary", INCONCLUSIVE, 0.0, None, {}, ["ambiguous-orientation"],
                                       {"x0": x0.tolist(), "face_id": face.id}))
                continue
            region = build_Bdk(NormalSet.from_vectors(face.normals, face.orientation))
            state = FrozenState.from_extremal(ex, x0)
            rep = check_qc_boundary(state, F, cfg.c0, region, _solver(cfg, seed + k))
            rep.detail["face_id"] = face.id
            out.append(rep)
        return out
    if name == "growth":
        out = []
        for kind in spec.kinds:
            b = check_growth_bounds(F, ex, kind, samples=spec.samples or 10_000, seed=seed, d=P.dim,
                                    xbox=(P.lo, P.hi))
            out.append(CheckReport(f"growth:{kind}", b.status, b.fitted_constant, None,
                                   {"growth_ratio": b.growth_ratio, "samples": b.samples},
                                   [], {"box": b.box, **b.detail}))
        return out
    if name == "excess":
        g0, dg = excess_origin_checks(F, ex, samples=spec.samples or 50, seed=seed, d=P.dim, xbox=(P.lo, P.hi))
        m = max(g0, dg)
        return [CheckReport("excess", PASS if m <= 1e-6 else FAIL, m, None, {},
                            [], {"G_at_origin": g0, "differential_at_origin": dg})]
    if name == "cover":
        cover = ctx.cover()
        rep = validate_cover(cover, P, seed=seed)
        path = os.path.join(out_dir, "traces", "cover.json")
        _write(path, cover.to_json())
        return [CheckReport("cover", PASS if rep.passed else FAIL, float(cover.base_radius), None, {},
                            [], {"cubes": len(cover.cubes), "failures": rep.failures(), **rep.detail,
                                 "output": path})]
    if name == "spatially_local":
        return [_spatially_local(ctx, spec, seed)]
    if name == "necessity":
        return [_necessity(ctx, spec, out_dir)]
    raise ConfigError("unknown check", [("checks.name", name)])


def _spatially_local(ctx, spec, seed):
    setup = ctx.setup
    cfg, P, F, ex = setup.cfg, setup.domain, setup.integrand, setup.extremal
    cover = ctx.cover()
    if spec.cube is not None:
        cube = cover.cubes[spec.cube]
    else:
        cube = next((c for c in cover.cubes if c.face_id is not None), cover.cubes[0])
    mesh = cube_patch_mesh(P, cube.x, cube.r, cfg.mesh.domain_h, setup.dirichlet)
    if cfg.C == "fit":
        C = fit_C_from_Gb(check_growth_bounds(F, ex, "G_b", samples=2000, seed=seed, d=P.dim, xbox=(P.lo, P.hi)))
    else:
        C = float(cfg.C)
    rng = np.random.default_rng(seed)
    worst = None
    for _ in range(spec.samples or 20):
        phi = DiscreteVariation.random(mesh, ex.N, rng)
        s = phi.sup_norm()
        if s > 0:
            phi = phi.scaled(0.9 * cfg.delta * rng.uniform(0.05, 1.0) / s)
        rep = check_spatially_local(ex, F, mesh, cfg.c0, C, phi, cfg.delta, cube=cube.to_dict())
        if worst is None or rep.margin < worst.margin:
            worst = rep
    worst.trace["samples"] = spec.samples or 20
    return worst


def _necessity(ctx, spec, out_dir):
    setup = ctx.setup
    cfg, P, F, ex = setup.cfg, setup.domain, setup.integrand, setup.extremal
    chart_spec = spec.chart
    if chart_spec is None or chart_spec.name == "identity":
        radius = float((chart_spec.params if chart_spec else {}).get("radius", 0.5))
        if spec.x0 is not None:
            x0 = np.asarray(spec.x0, float)
        else:
            x0 = np.asarray(P.face(setup.neumann[0]).sample_point, float)
        chart = identity_chart(P, x0, radius)
    else:
        chart = CHARTS[chart_spec.name](**chart_spec.params)
        x0 = chart.center
    v = np.zeros(ex.N)
    prof = np.asarray(spec.profile, float)[: ex.N]
    v[: prof.size] = prof

    def profile(Y):
        return (1.0 - np.sum(Y * Y, axis=1))[:, None] * v[None, :]

    fam = BlowupFamily.at_point(chart, x0, cfg.mesh.region_h, profile, ex.N, spec.epsilons)
    label = spec.label or "necessity"
    path = os.path.join(out_dir, "traces", f"{label}.csv")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    rep = necessity_verdict(fam, F, ex, csv_path=path)
    rep.detail["output"] = path
    return rep


def _write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _write_restart_trace(path, rep):
    vals = rep.trace.get("restart_values")
    if vals is None:
        return False
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "value", "iterations"])
        for i, (v, it) in enumerate(zip(vals, rep.trace["iterations"])):
            w.writerow([i, repr(v), it])
    return True


# ---- entry point --------------------------------------------------------------


def run(cfg, out_dir, threads=None, only=None, emit_mesh=False):
    """Execute the configured checks and write ``report.json``.

    Parameters
    ----------
    cfg : RunConfig
    out_dir : str
    threads : int, optional
        Overrides ``cfg.threads``.
    only : iterable of str, optional
        Check names to keep.
    emit_mesh : bool
        Dump shared meshes as OFF files under ``out_dir/meshes``.

    Returns
    -------
    RunReport
    """
    t_start = time.perf_counter()
    setup = prepare(cfg)
    # indices refer to the full check list so filtering keeps labels and seeds
    specs = [(i, s) for i, s in enumerate(cfg.checks) if not only or s.name in set(only)]
    need = {s.name for _, s in specs}
    t0 = time.perf_counter()
    ctx = _Context(setup, need)
    t_mesh = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    if emit_mesh:
        for nm, m in (("domain", ctx.domain_mesh), ("ball", ctx.ball_mesh)):
            if m is not None:
                path = os.path.join(out_dir, "meshes", f"{nm}.off")
                os.makedirs(os.path.dirname(path), exist_ok=True)
                m.dump_off(path)
                outputs.append(path)

    def task(item):
        i, spec = item
        seed = cfg.seed + 1000 * i
        t = time.perf_counter()
        try:
            reps = _run_check(ctx, spec, seed, out_dir)
        except (VarQCError, ValueError, np.linalg.LinAlgError) as exc:
            reps = [CheckReport(spec.name, INCONCLUSIVE, float("nan"), None, {}, ["error"],
                                {"error": f"{type(exc).__name__}: {exc}"})]
        return reps, time.perf_counter() - t

    n_threads = threads or cfg.threads
    with ThreadPoolExecutor(max_workers=max(1, int(n_threads))) as pool:
        results = list(pool.map(task, specs))

    records = []
    wall = {"setup_and_mesh": t_mesh}
    for (i, spec), (reps, dt) in zip(specs, results):
        base = spec.label or f"{i:02d}_{spec.name}"
        wall[base] = dt
        for j, rep in enumerate(reps):
            label = base if len(reps) == 1 else f"{base}.{j}"
            rec = rep.to_dict()
            rec["label"] = label
            trace = os.path.join(out_dir, "traces", f"{label}.csv")
            if _write_restart_trace(trace, rep):
                outputs.append(trace)
            records.append(rec)
        outputs += [r.detail["output"] for r in reps if "output" in r.detail]
    statuses = [r["status"] for r in records]
    if FAIL in statuses:
        code = 1
    elif INCONCLUSIVE in statuses:
        code = 2
    else:
        code = 0
    wall["total"] = time.perf_counter() - t_start
    cfg_echo = cfg.model_dump(mode="json")
    report = RunReport(cfg_echo, records, environment_stamp(), wall, code, outputs=outputs)
    path = os.path.join(out_dir, "report.json")
    _write(path, report.to_json())
    return report


def resolve_threads(flag):
    """``--threads`` if given, else ``VARQC_THREADS``, else ``None``."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("VARQC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("bad VARQC_THREADS", [("VARQC_THREADS", f"{env!r} is not an integer")]) from None
    return None


__all__ = ["RunReport", "run", "prepare", "resolve_threads", "SCHEMA_VERSION"]
