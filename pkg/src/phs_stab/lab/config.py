"""Experiment configuration: YAML ingestion, validation and model assembly.

A config document has the sections ``space``, ``operator``, ``coefficients``,
``noise``, ``sim`` and ``experiment``.  Validation errors name the offending
key path and, when the document came from a file, its line number.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..coefficients import (
    CoefficientSet,
    JumpMeasureSpec,
    MarkDistribution,
    QWienerSpec,
    additive_jump,
    constant_diffusion,
    constant_drift,
    constant_jump,
    linear_diffusion,
    linear_drift,
    linear_jump,
    tanh_drift,
    tanh_jump,
    zero_diffusion,
    zero_drift,
    zero_jump,
)
from ..simulate import SimConfig
from ..space import BlockOperator, SpaceDecomposition, build_damped_wave_chain

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "read_document",
    "load_config",
    "parse_config",
    "SEED_ENV",
]

SEED_ENV = "PHS_SEED"
SECTIONS = ("space", "operator", "coefficients", "noise", "sim", "experiment")


class ConfigError(ValueError):
    def __init__(self, message, path=(), line=None, source=None):
        self.path = tuple(path)
        self.line = line
        self.source = source
        where = ".".join(str(p) for p in self.path)
        loc = ""
        if source:
            loc += f"{source}"
        if line is not None:
            loc += f":{line}"
        prefix = f"{loc}: " if loc else ""
        if where:
            prefix += f"[{where}] "
        super().__init__(prefix + message)


# --------------------------------------------------------------------------
# Reading
# --------------------------------------------------------------------------


def _line_index(node, path=(), out=None):
    """Map key paths to 1-based line numbers from a composed YAML node."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


def read_document(text: str, source: str | None = None) -> tuple[Any, dict]:
    """Parse YAML text; returns the data and a key-path -> line index."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line=line, source=source) from None
    lines = _line_index(node) if node is not None else {}
    return data, lines


# --------------------------------------------------------------------------
# Validation helpers
# --------------------------------------------------------------------------


class _Ctx:
    def __init__(self, lines, source, prefix=()):
        self.lines = lines
        self.source = source
        self.prefix = tuple(prefix)

    def within(self, prefix) -> "_Ctx":
        """Same checks, with error paths reported relative to the document root."""
        return _Ctx(self.lines, self.source, self.prefix + tuple(prefix))

    def error(self, path, message):
        line = None
        path = self.prefix + tuple(path)
        p = path
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        raise ConfigError(message, path, line, self.source)

    def section(self, doc, path, required=True):
        value = _get(doc, path)
        if value is None:
            if required:
                self.error(path, "missing section")
            return {}
        if not isinstance(value, dict):
            self.error(path, "expected a mapping")
        return value

    def number(self, doc, path, default=None, minimum=None, positive=False, integer=False):
        value = _get(doc, path)
        if value is None:
            if default is None:
                self.error(path, "missing required value")
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, f"expected a number, got {value!r}")
        if integer and int(value) != value:
            self.error(path, f"expected an integer, got {value!r}")
        if not np.isfinite(value):
            self.error(path, "value must be finite")
        if positive and not value > 0:
            self.error(path, f"must be positive, got {value!r}")
        if minimum is not None and value < minimum:
            self.error(path, f"must be >= {minimum}, got {value!r}")
        return int(value) if integer else float(value)

    def array(self, doc, path, shape=None, default=None):
        """Vector/matrix value.

        Accepts nested lists, a scalar (times the identity for square shapes,
        broadcast for vectors) or ``{diag: [...]}``.
        """
        value = _get(doc, path)
        if value is None:
            if default is None:
                self.error(path, "missing required value")
            return np.asarray(default, dtype=float)
        try:
            if isinstance(value, dict):
                if set(value) != {"diag"}:
                    self.error(path, "matrix mappings support only the 'diag' key")
                arr = np.diag(np.asarray(value["diag"], dtype=float))
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                if shape is None:
                    arr = np.asarray(float(value))
                elif len(shape) == 1:
                    arr = np.full(shape, float(value))
                else:
                    arr = float(value) * np.eye(*shape)
            else:
                arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            self.error(path, f"cannot interpret {value!r} as a numeric array")
        if shape is not None and arr.shape != tuple(shape):
            self.error(path, f"expected shape {tuple(shape)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            self.error(path, "array entries must be finite")
        return arr

    def choice(self, doc, path, options, default=None):
        value = _get(doc, path)
        if value is None:
            if default is None:
                self.error(path, "missing required value")
            return default
        if value not in options:
            self.error(path, f"expected one of {list(options)}, got {value!r}")
        return value

    def flag(self, doc, path, default=False):
        value = _get(doc, path)
        if value is None:
            return default
        if not isinstance(value, bool):
            self.error(path, f"expected true/false, got {value!r}")
        return value


def _get(doc, path):
    cur = doc
    for p in path:
        if not isinstance(cur, dict) or p not in cur:
            return None
        cur = cur[p]
    return cur


# --------------------------------------------------------------------------
# Assembled configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    name: str
    blocks: BlockOperator
    coeffs: CoefficientSet
    sim: SimConfig
    experiment: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    raw: dict = field(default_factory=dict)

    @property
    def space(self) -> SpaceDecomposition:
        return self.blocks.space

    @property
    def A(self) -> np.ndarray:
        return self.blocks.assemble()

    def with_sim(self, **changes) -> "ExperimentConfig":
        return replace(self, sim=replace(self.sim, **changes))


def load_config(path, seed: int | None = None, out_dir=None, env=None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    data, lines = read_document(text, source=str(path))
    return parse_config(data, lines, source=str(path), seed=seed, out_dir=out_dir,
                        env=env, base_dir=path.parent)


def parse_config(data, lines=None, source=None, seed=None, out_dir=None, env=None,
                 base_dir=None) -> ExperimentConfig:
    """Validate a config document and build the model objects.

    Seed precedence: explicit ``seed`` argument, then the ``PHS_SEED``
    environment variable, then ``noise.seed`` in the document.
    """
    ctx = _Ctx(lines or {}, source)
    if not isinstance(data, dict):
        ctx.error((), "config document must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        ctx.error((unknown[0],), f"unknown section; expected some of {list(SECTIONS)}")

    blocks = _operator(ctx, data, base_dir)
    space = blocks.space
    if "space" in data:
        sp = ctx.section(data, ("space",))
        sc = ctx.within(("space",))
        declared = SpaceDecomposition(
            sc.number(sp, ("n0",), integer=True, minimum=1),
            sc.number(sp, ("n1",), integer=True, minimum=1),
        )
        if declared != space:
            ctx.error(("space",), f"declares {declared} but the operator acts on {space}")

    measure = _jump_measure(ctx, data)
    wiener = _wiener(ctx, data, space)
    coeffs = _coefficients(ctx, data, space, measure, wiener)

    env = os.environ if env is None else env
    if seed is None and env.get(SEED_ENV, "").strip():
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    if seed is None:
        seed = ctx.number(data, ("noise", "seed"), default=0, integer=True, minimum=0)
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")

    sim = _sim(ctx, data, seed)
    exp = ctx.section(data, ("experiment",), required=False)
    name = exp.get("name", Path(source).stem if source else "experiment")
    if not isinstance(name, str) or not name:
        ctx.error(("experiment", "name"), "name must be a non-empty string")
    out = Path(out_dir) if out_dir is not None else Path(exp.get("out_dir", "out")) / name
    experiment = _experiment(ctx, exp, space)
    return ExperimentConfig(name, blocks, coeffs, sim, experiment, out, data)


def _operator(ctx, data, base_dir):
    op = ctx.section(data, ("operator",))
    oc = ctx.within(("operator",))
    family = oc.choice(op, ("family",), ("damped_wave_chain", "explicit", "file"), "explicit")
    path = ("operator",)
    if family == "damped_wave_chain":
        p = ctx.section(data, path + ("params",))
        pc = oc.within(("params",))
        try:
            return build_damped_wave_chain(
                pc.number(p, ("m",), integer=True, minimum=1),
                pc.number(p, ("r_q",), minimum=0.0),
                pc.number(p, ("r_p",), minimum=0.0),
                pc.number(p, ("k",), default=1.0),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            ctx.error(path + ("params",), str(exc))
    if family == "file":
        ref = op.get("path")
        if not isinstance(ref, str):
            ctx.error(path + ("path",), "operator file path required")
        f = Path(ref) if base_dir is None else Path(base_dir) / ref
        try:
            doc, _ = read_document(f.read_text(), source=str(f))
        except OSError as exc:
            ctx.error(path + ("path",), f"cannot read operator file: {exc.strerror}")
        try:
            return BlockOperator.from_dict(doc)
        except (ValueError, TypeError) as exc:
            ctx.error(path + ("path",), f"invalid operator document: {exc}")
    n0 = oc.number(op, ("n0",), integer=True, minimum=1)
    n1 = oc.number(op, ("n1",), integer=True, minimum=1)
    return BlockOperator(
        R0=oc.array(op, ("R0",), (n0, n0)),
        R1=oc.array(op, ("R1",), (n1, n1)),
        D0=oc.array(op, ("D0",), (n0, n1), default=np.zeros((n0, n1))),
        D1=oc.array(op, ("D1",), (n1, n0), default=np.zeros((n1, n0))),
    )


_MARKS = ("none", "uniform_pm", "gaussian", "constant")


def _jump_measure(ctx, data):
    j = _get(data, ("noise", "jump"))
    if j is None:
        return JumpMeasureSpec(0.0)
    path = ("noise", "jump")
    if not isinstance(j, dict):
        ctx.error(path, "expected a mapping")
    jc = ctx.within(path)
    kind = jc.choice(j, ("mark_dist",), _MARKS, "none")
    intensity = jc.number(j, ("intensity",), default=0.0, minimum=0.0)
    params = _get(j, ("params",)) or {}
    if not isinstance(params, dict):
        ctx.error(path + ("params",), "expected a mapping")
    pc = jc.within(("params",))
    dim = pc.number(params, ("dim",), default=1, integer=True, minimum=1)
    p = {k: v for k, v in params.items() if k != "dim"}
    allowed = {"none": set(), "uniform_pm": {"c"}, "gaussian": {"mean", "std"},
               "constant": {"value"}}[kind]
    extra = sorted(set(p) - allowed)
    if extra:
        ctx.error(path + ("params", extra[0]), f"unknown parameter for {kind} marks")
    for k in p:
        p[k] = pc.array(params, (k,), None)
    if kind == "none":
        intensity = 0.0
    try:
        return JumpMeasureSpec(intensity, MarkDistribution(kind, dim, p))
    except ValueError as exc:
        ctx.error(path, str(exc))


def _wiener(ctx, data, space):
    if _get(data, ("noise", "q_half")) is None:
        return None
    q = ctx.array(data, ("noise", "q_half"))
    if q.ndim == 0:
        q = float(q) * np.eye(space.n)
    if q.ndim != 2:
        ctx.error(("noise", "q_half"), "q_half must be a matrix")
    return QWienerSpec(q)


_FAMILIES = {
    "drift": ("zero", "constant", "linear", "tanh"),
    "diffusion": ("zero", "constant", "linear"),
    "jump": ("zero", "constant", "additive", "linear", "tanh"),
}
_DECLARED = {"drift": "L_F", "diffusion": "L_sigma", "jump": "L_gamma"}


def _coefficients(ctx, data, space, measure, wiener):
    sec = ctx.section(data, ("coefficients",), required=False)
    n = space.n
    maps = {}
    for kind in ("drift", "diffusion", "jump"):
        path = ("coefficients", kind)
        spec = _get(sec, (kind,)) or {"family": "zero"}
        if not isinstance(spec, dict):
            ctx.error(path, "expected a mapping")
        sc = ctx.within(path)
        family = sc.choice(spec, ("family",), _FAMILIES[kind], "zero")
        port = sc.flag(spec, ("port",))
        params = _get(spec, ("params",)) or {}
        pp = path + ("params",)

        def arr(key, shape=None, default=None):
            return ctx.array(data, pp + (key,), shape, default)

        try:
            if kind == "drift":
                if family == "zero":
                    m = zero_drift(space)
                elif family == "constant":
                    m = constant_drift(space, arr("c", (n,)), port=port)
                elif family == "linear":
                    m = linear_drift(space, arr("B", (n, n)), arr("c", (n,), np.zeros(n)), port=port)
                else:
                    M = arr("M")
                    M = M * np.eye(n) if M.ndim == 0 else np.atleast_2d(M)
                    h = M.shape[1]
                    m = tanh_drift(space, M, arr("W", (h, n)), arr("b", (h,), np.zeros(h)), port=port)
            elif kind == "diffusion":
                u = n if wiener is None else wiener.u
                q = None if wiener is None else wiener.q_half
                if family == "zero":
                    m = zero_diffusion(space, u)
                elif family == "constant":
                    m = constant_diffusion(space, arr("C", (n, u)), port=port)
                else:
                    G = _diffusion_tensor(ctx, data, pp, n, u)
                    m = linear_diffusion(space, G, arr("C", (n, u), np.zeros((n, u))), q, port=port)
            else:
                d = measure.mark_dimension
                if family == "zero":
                    m = zero_jump(space)
                elif family == "constant":
                    m = constant_jump(space, arr("c", (n,)), port=port)
                elif family == "additive":
                    m = additive_jump(space, arr("B", (n, d)), port=port)
                elif family == "linear":
                    B = arr("B", (n, d), np.zeros((n, d)))
                    m = linear_jump(space, arr("G", (n, n)), measure, B, port=port)
                else:
                    M = arr("M")
                    M = M * np.eye(n) if M.ndim == 0 else np.atleast_2d(M)
                    h = M.shape[1]
                    m = tanh_jump(space, M, arr("W", (h, n)), measure, arr("b", (h,), np.zeros(h)),
                                  port=port)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            ctx.error(path, str(exc))
        key = _DECLARED[kind]
        if _get(spec, ("L",)) is not None:
            m = replace(m, **{key: sc.number(spec, ("L",), minimum=0.0)})
        maps[kind] = m
    try:
        return CoefficientSet(maps["drift"], maps["diffusion"], maps["jump"], measure, wiener)
    except ValueError as exc:
        ctx.error(("coefficients",), str(exc))


def _diffusion_tensor(ctx, data, pp, n, u):
    """``G`` as a full ``(n, n, u)`` list or ``{diag: g}`` for ``sigma(x) = diag(g * x)``."""
    raw = _get(data, pp + ("G",))
    if isinstance(raw, dict):
        if set(raw) != {"diag"}:
            ctx.error(pp + ("G",), "diffusion tensor mappings support only the 'diag' key")
        if u != n:
            ctx.error(pp + ("G",), "diagonal multiplicative noise needs u == n")
        g = ctx.array(data, pp + ("G", "diag"), (n,))
        G = np.zeros((n, n, n))
        G[np.arange(n), np.arange(n), np.arange(n)] = g
        return G
    return ctx.array(data, pp + ("G",), (n, n, u))


def _sim(ctx, data, seed):
    sec = ctx.section(data, ("sim",), required=False)
    path = ("sim",)
    ctx = ctx.within(path)
    dt = ctx.number(sec, ("dt",), default=1e-3, positive=True)
    t_end = ctx.number(sec, ("t_end",), default=1.0, positive=True)
    workers = _get(sec, ("workers",))
    if workers is not None:
        workers = ctx.number(sec, ("workers",), integer=True, minimum=1)
    try:
        return SimConfig(
            dt=dt,
            t_end=t_end,
            n_paths=ctx.number(sec, ("n_paths",), default=1000, integer=True, minimum=1),
            seed=seed,
            record_every=ctx.number(sec, ("record_every",), default=1, integer=True, minimum=1),
            substeps=ctx.number(sec, ("substeps",), default=1, integer=True, minimum=1),
            workers=workers,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        ctx.error((), str(exc))


_EXPERIMENT_KEYS = {
    "name", "out_dir", "x0", "y0", "beta_mode", "dissipativity_pairs", "lipschitz_trials",
    "w2_times", "w2_subsample", "se_factor", "rerun_substeps", "T", "x0_alt", "x0_alt_spread",
    "stationarity_margin", "w2_gaussian_threshold", "invariant_blocks", "collapse_tol",
}


def _experiment(ctx, exp, space):
    extra = sorted(set(exp) - _EXPERIMENT_KEYS)
    if extra:
        ctx.error(("experiment", extra[0]), "unknown experiment key")
    n = space.n
    out = {}
    path = ("experiment",)
    ec = ctx.within(path)
    full = {"experiment": exp}
    out["x0"] = ctx.array(full, path + ("x0",), (n,), np.ones(n))
    out["y0"] = ctx.array(full, path + ("y0",), (n,), -np.ones(n))
    out["x0_alt"] = ctx.array(full, path + ("x0_alt",), (n,), -2.0 * np.ones(n))
    out["x0_alt_spread"] = ec.number(exp, ("x0_alt_spread",), default=1.0, minimum=0.0)
    out["beta_mode"] = ec.choice(exp, ("beta_mode",), ("sharp", "remark_bounded", "remark_skew"), "sharp")
    out["dissipativity_pairs"] = ec.number(exp, ("dissipativity_pairs",), default=10_000, integer=True, minimum=1)
    out["lipschitz_trials"] = ec.number(exp, ("lipschitz_trials",), default=2_000, integer=True, minimum=1)
    times = _get(exp, ("w2_times",))
    if times is None:
        times = [1.0, 2.0, 4.0]
    if not isinstance(times, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in times):
        ctx.error(path + ("w2_times",), "expected a list of times")
    out["w2_times"] = [float(t) for t in times]
    out["w2_subsample"] = ec.number(exp, ("w2_subsample",), default=2000, integer=True, minimum=2)
    out["se_factor"] = ec.number(exp, ("se_factor",), default=3.0, minimum=0.0)
    out["rerun_substeps"] = ec.number(exp, ("rerun_substeps",), default=1, integer=True, minimum=1)
    T = _get(exp, ("T",))
    out["T"] = None if T is None else ec.number(exp, ("T",), positive=True)
    out["stationarity_margin"] = ec.number(exp, ("stationarity_margin",), default=0.10, minimum=0.0)
    out["w2_gaussian_threshold"] = ec.number(exp, ("w2_gaussian_threshold",), default=0.02, positive=True)
    out["invariant_blocks"] = ec.number(exp, ("invariant_blocks",), default=4, integer=True, minimum=2)
    out["collapse_tol"] = ec.number(exp, ("collapse_tol",), default=1e-6, positive=True)
    return out
