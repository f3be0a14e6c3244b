"""The experiment runners behind the CLI.

Each runner takes an :class:`ExperimentConfig` and returns a
:class:`ReportRecord` whose verdicts hold the measured value, the bound and
the tolerance that decided them.  Monte-Carlo tolerances (a multiple of the
standard error, empirical W2 bias baselines) are policy of this harness.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..certificate import beta_bound, compute_certificate, verify_dissipativity
from ..coefficients import (
    estimate_lipschitz,
    moment_check,
    no_jumps,
    random_pair_sampler,
    zero_diffusion,
    zero_jump,
)
from ..noise import auxiliary_generator
from ..simulate import (
    SimConfig,
    _time_index,
    integrate,
    integrate_coupled,
    integrate_ensemble,
    mean_energy,
    mean_square_gap,
    mean_state,
)
from ..transport import (
    BRUTEFORCE_MAX_N,
    GaussianMeasure,
    covariance_standard_errors,
    fit_gaussian,
    lyapunov_stationary,
    w2_assignment,
    w2_empirical_bruteforce,
    w2_empirical_exact,
    w2_gaussian,
)
from .config import ConfigError, ExperimentConfig
from .report import ReportRecord, check

__all__ = [
    "run_certify",
    "run_simulate",
    "run_contraction",
    "run_invariant",
    "run_w2_selftest",
    "run_experiment",
    "EXPERIMENTS",
]

ROUNDOFF = 1e-12
MC_NOTE = "Monte-Carlo tolerance policy"

# keys for auxiliary generators; 1 is taken by the simulator's compensator
_AUX_DISSIPATIVITY = 10
_AUX_LIPSCHITZ = 11
_AUX_MOMENTS = 12
_AUX_ALT_INITIAL = 13
_AUX_SELFTEST = 14


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        record = fn(*args, **kwargs)
        record.wall_clock = time.perf_counter() - t0
        return record

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def _certificate(cfg: ExperimentConfig):
    mode = cfg.experiment.get("beta_mode", "sharp")
    try:
        return compute_certificate(cfg.blocks, cfg.coeffs, mode)
    except ValueError as exc:
        raise ConfigError(f"beta mode {mode!r}: {exc}", ("experiment", "beta_mode")) from None


def _refuse(record, cert):
    record.refused = f"certificate not stable (epsilon = {cert.epsilon!r})"
    record.verdicts.append(check("certificate_stable", cert.epsilon, 0.0, 0.0, ">"))
    return record


def _noise_free(coeffs) -> bool:
    return coeffs.diffusion.is_zero and (coeffs.jump.is_zero or coeffs.jump_measure.intensity == 0)


def _affine_drift(coeffs) -> bool:
    return coeffs.drift.family in ("zero", "constant", "linear")


def _drift_flow(cfg: ExperimentConfig, x0) -> np.ndarray:
    """The same scheme with every noise term removed; for affine drift this is ``E[X_t]``."""
    space = cfg.space
    quiet = cfg.coeffs.with_(
        diffusion=zero_diffusion(space, cfg.coeffs.diffusion.u),
        jump=zero_jump(space),
        jump_measure=no_jumps(),
    )
    return integrate(x0, cfg.A, quiet, replace_paths(cfg.sim, 1)).states


def replace_paths(sim: SimConfig, n_paths: int, **changes) -> SimConfig:
    d = dict(dt=sim.dt, t_end=sim.t_end, n_paths=n_paths, seed=sim.seed,
             record_every=sim.record_every, substeps=sim.substeps, workers=sim.workers)
    d.update(changes)
    return SimConfig(**d)


def _zscore(diff, se, scale) -> np.ndarray:
    """``|diff| / se`` with zero-variance entries scored 0 when they agree to roundoff."""
    diff = np.abs(np.asarray(diff, dtype=float))
    se = np.asarray(se, dtype=float)
    slack = ROUNDOFF * max(1.0, float(scale))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.maximum(diff - slack, 0.0) / np.where(se > 0, se, 1.0),
                     np.where(diff <= slack, 0.0, np.inf))
    return z


def _aborted_verdict(aborted, name="no_aborted_paths"):
    return check(name, int(np.sum(aborted)), 0, 0)


def _require_time(cfg, t, key):
    try:
        _time_index(cfg.sim.times(), t)
    except ValueError:
        raise ConfigError(
            f"time {t:g} is not on the recording grid (dt={cfg.sim.dt:g}, "
            f"record_every={cfg.sim.record_every}, t_end={cfg.sim.t_end:g})",
            ("experiment", key),
        ) from None


# --------------------------------------------------------------------------
# certify
# --------------------------------------------------------------------------


@_timed
def run_certify(cfg: ExperimentConfig) -> ReportRecord:
    """Certificate in every beta mode plus sampled checks of its hypotheses."""
    cert = _certificate(cfg)
    b = cfg.blocks
    record = ReportRecord(cfg.name, "certify", cfg.sim.seed, cert.to_dict(), columns=["t"])
    skew = b.is_skew_coupled()
    for mode in ("sharp", "remark_bounded", "remark_skew"):
        if mode == "remark_skew" and not skew:
            record.alternatives[mode] = None
            continue
        record.alternatives[mode] = compute_certificate(b, cfg.coeffs, mode).to_dict()

    beta_sharp = beta_bound(b.D0, b.D1, "sharp")
    beta_bounded = beta_bound(b.D0, b.D1, "remark_bounded")
    record.verdicts.append(check("beta_sharp_le_bounded", beta_sharp, beta_bounded,
                                 ROUNDOFF * max(1.0, beta_bounded)))
    if skew:
        record.verdicts.append(check("beta_sharp_zero_for_skew_coupling", abs(beta_sharp), 0.0, 0.0))

    seed = cfg.sim.seed
    sampler = random_pair_sampler(cfg.space)
    diss = verify_dissipativity(b, cfg.coeffs, cert, sampler, cfg.experiment["dissipativity_pairs"],
                                rng=auxiliary_generator(seed, _AUX_DISSIPATIVITY))
    record.verdicts.append(check("dissipativity", diss.max_ratio, diss.bound, diss.tolerance,
                                 note=f"{diss.n_pairs} sampled pairs"))

    c = cfg.coeffs
    trials = cfg.experiment["lipschitz_trials"]
    rng = auxiliary_generator(seed, _AUX_LIPSCHITZ)
    for label, m in (("L_F", c.drift), ("L_sigma", c.diffusion), ("L_gamma", c.jump)):
        est = estimate_lipschitz(m, sampler, trials, rng=rng, measure=c.jump_measure,
                                 q_half=c.wiener.q_half)
        record.summary[f"{label}_sampled"] = est.estimate
        record.verdicts.append(check(f"{label}_declared_covers_sample", est.estimate, est.declared,
                                     1e-9 * max(1.0, est.declared)))

    moments = moment_check(c.jump, c.jump_measure, cfg.experiment["x0"],
                           rng=auxiliary_generator(seed, _AUX_MOMENTS))
    record.summary["jump_second_moment_at_zero"] = moments.second_moment
    record.summary["jump_fourth_moment_at_x0"] = moments.fourth_moment
    record.verdicts.append(check("jump_moments_finite", 0.0 if moments.finite else 1.0, 0.0, 0.0,
                                 note=moments.diagnostic))

    record.summary.update(epsilon=cert.epsilon, alpha=cert.alpha, a=cert.a, omega=cert.omega,
                          stable=cert.stable, dissipativity_max_ratio=diss.max_ratio)
    record.verdicts.append(check("certificate_stable", cert.epsilon, 0.0, 0.0, ">"))
    return record


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


@_timed
def run_simulate(cfg: ExperimentConfig) -> ReportRecord:
    """Ensemble from ``x0``: mean energy and mean state over time."""
    cert = _certificate(cfg)
    n = cfg.space.n
    x0 = cfg.experiment["x0"]
    k = cfg.experiment["se_factor"]
    ens = integrate_ensemble(x0, cfg.A, cfg.coeffs, cfg.sim)
    affine = _affine_drift(cfg.coeffs)
    flow = _drift_flow(cfg, x0) if affine else None

    cols = ["t", "mean_energy", "mean_energy_se"]
    cols += [f"mean_x{i}" for i in range(n)] + [f"mean_x{i}_se" for i in range(n)]
    if affine:
        cols += [f"flow_x{i}" for i in range(n)] + ["mean_vs_flow_z"]
    record = ReportRecord(cfg.name, "simulate", cfg.sim.seed, cert.to_dict(), columns=cols)

    worst = (0.0, 0.0)
    for j, t in enumerate(ens.times):
        e = mean_energy(ens, t)
        m = mean_state(ens, t)
        row = [float(t), e.value, e.se, *np.atleast_1d(m.value), *np.atleast_1d(m.se)]
        if affine:
            z = float(np.max(_zscore(m.value - flow[j], m.se, np.max(np.abs(flow[j])))))
            row += [*flow[j], z]
            if z > worst[0] or j == 0:
                worst = (z, float(t))
        record.rows.append(row)

    record.verdicts.append(_aborted_verdict(ens.aborted))
    if affine:
        record.verdicts.append(check("mean_matches_drift_flow", worst[0], k, 0.0, at=worst[1],
                                     note=f"max standardised deviation; {MC_NOTE}"))
    t_end = ens.times[-1]
    record.summary.update(epsilon=cert.epsilon, n_paths=ens.n_paths,
                          n_valid=int(np.sum(ens.valid)), t_end=float(t_end),
                          final_mean_energy=mean_energy(ens, t_end).value)
    return record


# --------------------------------------------------------------------------
# contraction
# --------------------------------------------------------------------------


def _gap_rows(ens, d0sq, eps, k):
    """Per-time gap estimates and the worst (gap - bound - tolerance) point.

    The start time holds with equality, so it is only reported when it fails
    or is the sole recorded time.
    """
    rows, worst, start = [], None, None
    for t in ens.times:
        g = mean_square_gap(ens, t)
        bound = math.exp(-eps * t) * d0sq
        tol = k * g.se + ROUNDOFF * d0sq
        rows.append((float(t), g.value, g.se, bound))
        point = (g.value - bound - tol, float(t), g.value, bound, tol)
        if t == 0:
            start = point
        elif worst is None or point[0] > worst[0]:
            worst = point
    if worst is None or (start is not None and start[0] > 0):
        worst = start
    return rows, worst


@_timed
def run_contraction(cfg: ExperimentConfig) -> ReportRecord:
    """Synchronously coupled ensembles from ``x0`` and ``y0``.

    Checks the mean-square gap against ``exp(-eps t) |x0 - y0|^2`` at every
    recorded time, and the empirical W2 between the two marginals against
    ``exp(-eps t / 2) W2(0)`` plus the same-distribution baseline.
    """
    ex = cfg.experiment
    N = ex["w2_subsample"]
    for t in ex["w2_times"]:
        _require_time(cfg, t, "w2_times")
    if cfg.sim.n_paths < 2 * N:
        raise ConfigError(f"n_paths={cfg.sim.n_paths} is below twice w2_subsample={N}",
                          ("sim", "n_paths"))
    cert = _certificate(cfg)
    record = ReportRecord(cfg.name, "contraction", cfg.sim.seed, cert.to_dict())
    if not cert.stable:
        record.columns = ["t"]
        return _refuse(record, cert)

    x0, y0, k = ex["x0"], ex["y0"], ex["se_factor"]
    eps = cert.epsilon
    d0sq = float(np.sum((x0 - y0) ** 2))
    ens = integrate_coupled(x0, y0, cfg.A, cfg.coeffs, cfg.sim)
    rows, worst = _gap_rows(ens, d0sq, eps, k)
    record.verdicts.append(_aborted_verdict(ens.aborted))
    record.verdicts.append(check("mean_square_gap_bound", worst[2], worst[3], worst[4], at=worst[1],
                                 note=f"worst recorded time; tolerance {k:g} SE; {MC_NOTE}"))

    refined_rows = None
    K = ex["rerun_substeps"]
    if K > 1:
        sim2 = replace_paths(cfg.sim, cfg.sim.n_paths, substeps=cfg.sim.substeps * K)
        ens2 = integrate_coupled(x0, y0, cfg.A, cfg.coeffs, sim2)
        refined_rows, w2 = _gap_rows(ens2, d0sq, eps, k)
        record.verdicts.append(_aborted_verdict(ens2.aborted, "no_aborted_paths_refined"))
        record.verdicts.append(check("mean_square_gap_bound_refined", w2[2], w2[3], w2[4], at=w2[1],
                                     note=f"step dt/{K}; worst recorded time; {MC_NOTE}"))

    w2_cols = {}
    xe, ye = ens.x, ens.y
    w2_zero = w2_empirical_exact(xe.at(0.0)[:N], ye.at(0.0)[:N])[0]
    for t in ex["w2_times"]:
        X, Y = xe.at(t), ye.at(t)
        if len(X) < 2 * N:
            raise ConfigError(f"only {len(X)} valid paths at t={t:g}; need {2 * N}",
                              ("experiment", "w2_subsample"))
        w = w2_empirical_exact(X[:N], Y[:N])[0]
        base = w2_empirical_exact(X[N:2 * N], X[:N])[0]
        bound = math.exp(-eps * t / 2) * w2_zero
        w2_cols[_time_index(ens.times, t)] = (w, bound, base)
        record.verdicts.append(check(f"w2_contraction@t={t:g}", w, bound, base + ROUNDOFF * w2_zero,
                                     at=t, note=f"tolerance is the same-distribution baseline, N={N}"))

    cols = ["t", "mean_square_gap", "mean_square_gap_se", "gap_bound"]
    if refined_rows is not None:
        cols += ["mean_square_gap_refined", "mean_square_gap_refined_se"]
    cols += ["w2", "w2_bound", "w2_baseline"]
    record.columns = cols
    for j, r in enumerate(rows):
        row = list(r)
        if refined_rows is not None:
            row += [refined_rows[j][1], refined_rows[j][2]]
        row += list(w2_cols.get(j, ("", "", "")))
        record.rows.append(row)
    record.summary.update(epsilon=eps, initial_gap_sq=d0sq, w2_initial=w2_zero,
                          n_paths=ens.n_paths, n_valid=int(np.sum(~ens.aborted)), w2_subsample=N)
    return record


# --------------------------------------------------------------------------
# invariant
# --------------------------------------------------------------------------


def _blocks(X, B):
    N = len(X) // B
    return [X[i * N:(i + 1) * N] for i in range(B)]


def _block_w2(P_blocks, Q_blocks):
    """Mean over ``k`` of ``W2(P_k, Q_{k+1})`` with cyclic indexing."""
    B = len(P_blocks)
    return float(np.mean([w2_empirical_exact(P_blocks[i], Q_blocks[(i + 1) % B])[0]
                          for i in range(B)]))


def _gaussian_oracle(cfg):
    """Analytic stationary Gaussian when the model is linear with additive noise, else None."""
    c = cfg.coeffs
    if not (c.jump.is_zero or c.jump_measure.intensity == 0):
        return None
    if c.diffusion.family not in ("zero", "constant"):
        return None
    if c.drift.family not in ("zero", "linear", "constant"):
        return None
    n = cfg.space.n
    A = cfg.A.copy()
    shift = np.zeros(n)
    p = c.drift.params
    if c.drift.family == "linear":
        A = A + np.asarray(p["B"], dtype=float)
        shift = np.asarray(p.get("c", np.zeros(n)), dtype=float)
    elif c.drift.family == "constant":
        shift = np.asarray(p["c"], dtype=float)
    C = c.diffusion(np.zeros(n))
    noise = C @ c.wiener.q_half
    try:
        cov = lyapunov_stationary(A, noise)
    except ValueError:
        return None
    mean = -np.linalg.solve(A, shift)
    return GaussianMeasure(mean, cov)


@_timed
def run_invariant(cfg: ExperimentConfig) -> ReportRecord:
    """Stationarity, initial-condition independence and, when available, the Gaussian oracle."""
    ex = cfg.experiment
    T = ex["T"] if ex["T"] is not None else cfg.sim.t_end / 2
    _require_time(cfg, T, "T")
    _require_time(cfg, 2 * T, "T")
    B = ex["invariant_blocks"]
    if cfg.sim.n_paths // B < 2:
        raise ConfigError(f"n_paths={cfg.sim.n_paths} too small for {B} blocks",
                          ("experiment", "invariant_blocks"))
    cert = _certificate(cfg)
    n = cfg.space.n
    record = ReportRecord(cfg.name, "invariant", cfg.sim.seed, cert.to_dict())
    if not cert.stable:
        record.columns = ["t"]
        return _refuse(record, cert)

    k = ex["se_factor"]
    margin = ex["stationarity_margin"]
    x0 = ex["x0"]
    ens = integrate_ensemble(x0, cfg.A, cfg.coeffs, cfg.sim)
    record.verdicts.append(_aborted_verdict(ens.aborted))
    XT, X2T = ens.at(T), ens.at(2 * T)
    t_end = float(ens.times[-1])

    if _noise_free(cfg.coeffs) and cfg.coeffs.drift.is_zero:
        # the invariant law is the point mass at the origin
        final = ens.at(t_end)
        record.verdicts.append(check("collapse_to_origin", float(np.max(np.linalg.norm(final, axis=-1))),
                                     0.0, ex["collapse_tol"], at=t_end))
    else:
        stat = _block_w2(_blocks(XT, B), _blocks(X2T, B))
        base = _block_w2(_blocks(X2T, B), _blocks(X2T, B))
        record.verdicts.append(check("stationarity_w2", stat, base, margin * base, at=2 * T,
                                     note=f"W2(T, 2T) vs same-distribution baseline, {B} blocks"))
        record.summary.update(stationarity_w2=stat, stationarity_baseline=base)

        rng = auxiliary_generator(cfg.sim.seed, _AUX_ALT_INITIAL)
        P = cfg.sim.n_paths
        alt0 = ex["x0_alt"] + ex["x0_alt_spread"] * rng.standard_normal((P, n))
        alt = integrate_ensemble(alt0, cfg.A, cfg.coeffs, cfg.sim, first_path=P)
        record.verdicts.append(_aborted_verdict(alt.aborted, "no_aborted_paths_alt"))
        AT = alt.at(T)
        indep = _block_w2(_blocks(XT, B), _blocks(AT, B))
        base_T = _block_w2(_blocks(XT, B), _blocks(XT, B))
        record.verdicts.append(check("initial_condition_independence_w2", indep, base_T,
                                     margin * base_T, at=T,
                                     note=f"two initial laws vs same-distribution baseline, {B} blocks"))
        record.summary.update(initial_independence_w2=indep, initial_independence_baseline=base_T)

    oracle = _gaussian_oracle(cfg)
    if oracle is not None and not _noise_free(cfg.coeffs):
        fitted = fit_gaussian(XT)
        se_cov = covariance_standard_errors(XT)
        iu = np.triu_indices(n)
        scale = float(np.max(np.abs(oracle.cov)))
        z_cov = _zscore((fitted.cov - oracle.cov)[iu], se_cov[iu], scale)
        zi = int(np.argmax(z_cov))
        record.verdicts.append(check("stationary_covariance", float(z_cov[zi]), k, 0.0, at=T,
                                     note=f"max standardised entry deviation; {MC_NOTE}"))
        m = mean_state(ens, T)
        z_mean = _zscore(m.value - oracle.mean, m.se, float(np.max(np.abs(oracle.mean))))
        record.verdicts.append(check("stationary_mean", float(np.max(z_mean)), k, 0.0, at=T,
                                     note=f"max standardised deviation; {MC_NOTE}"))
        gap = w2_gaussian(fitted, oracle)
        record.verdicts.append(check("w2_gaussian_fitted_vs_analytic", gap,
                                     ex["w2_gaussian_threshold"], 0.0, "<", at=T))
        record.summary.update(analytic_covariance=oracle.cov, fitted_covariance=fitted.cov,
                              w2_gaussian=gap)
    elif _affine_drift(cfg.coeffs):
        flow = _drift_flow(cfg, x0)
        worst = 0.0
        for t in (T, 2 * T):
            j = _time_index(ens.times, t)
            m = mean_state(ens, t)
            worst = max(worst, float(np.max(_zscore(m.value - flow[j], m.se,
                                                     float(np.max(np.abs(flow[j])))))))
        record.verdicts.append(check("mean_matches_drift_flow", worst, k, 0.0,
                                     note=f"at T and 2T; {MC_NOTE}"))

    record.columns = ["t", "mean_energy", "mean_energy_se"] + [f"mean_x{i}" for i in range(n)]
    for t in ens.times:
        e = mean_energy(ens, t)
        record.rows.append([float(t), e.value, e.se, *np.atleast_1d(mean_state(ens, t).value)])
    record.summary.update(epsilon=cert.epsilon, T=T, n_paths=ens.n_paths)
    return record


# --------------------------------------------------------------------------
# transport self-test
# --------------------------------------------------------------------------


@_timed
def run_w2_selftest(cfg: ExperimentConfig | None = None, seed: int | None = None,
                    instances: int = 100, n_points: int = 6, dim: int = 2) -> ReportRecord:
    """Assignment vs brute force, metric axioms and Gaussian closed forms."""
    if seed is None:
        seed = 0 if cfg is None else cfg.sim.seed
    if n_points > BRUTEFORCE_MAX_N:
        raise ValueError(f"n_points must be <= {BRUTEFORCE_MAX_N}")
    name = "w2_selftest" if cfg is None else cfg.name
    rng = auxiliary_generator(seed, _AUX_SELFTEST)
    record = ReportRecord(name, "w2", seed, None,
                          columns=["instance", "w2_assignment", "w2_bruteforce", "abs_diff"])

    worst_bf = 0.0
    for i in range(instances):
        P = rng.standard_normal((n_points, dim))
        Q = rng.standard_normal((n_points, dim)) + rng.uniform(-1, 1, dim)
        w = w2_empirical_exact(P, Q)[0]
        bf = w2_empirical_bruteforce(P, Q)
        worst_bf = max(worst_bf, abs(w - bf))
        record.rows.append([i, w, bf, abs(w - bf)])
    record.verdicts.append(check("assignment_matches_bruteforce", worst_bf, 0.0, 1e-12,
                                 note=f"{instances} instances, N={n_points}, d={dim}"))

    worst_1d = 0.0
    for _ in range(instances):
        P = rng.standard_normal((n_points, 1))
        Q = 2.0 * rng.standard_normal((n_points, 1))
        worst_1d = max(worst_1d, abs(w2_empirical_exact(P, Q)[0] - w2_assignment(P, Q)[0]),
                       abs(w2_empirical_exact(P, Q)[0] - w2_empirical_bruteforce(P, Q)))
    record.verdicts.append(check("sorted_matching_matches_assignment", worst_1d, 0.0, 1e-12))

    sym = ident = tri = 0.0
    for _ in range(instances):
        P, Q, R = (rng.standard_normal((n_points, dim)) * rng.uniform(0.5, 2) for _ in range(3))
        pq, qp = w2_empirical_exact(P, Q)[0], w2_empirical_exact(Q, P)[0]
        pr, qr = w2_empirical_exact(P, R)[0], w2_empirical_exact(Q, R)[0]
        sym = max(sym, abs(pq - qp))
        ident = max(ident, w2_empirical_exact(P, P.copy())[0])
        tri = max(tri, pr - pq - qr)
    record.verdicts.append(check("metric_symmetry", sym, 0.0, 1e-10))
    record.verdicts.append(check("metric_identity", ident, 0.0, 1e-10))
    record.verdicts.append(check("metric_triangle_excess", tri, 0.0, 1e-10))

    trans = scal = 0.0
    for _ in range(instances):
        L = rng.standard_normal((dim, dim))
        S = L @ L.T + 0.1 * np.eye(dim)
        m1, m2 = rng.standard_normal(dim), rng.standard_normal(dim)
        d = w2_gaussian(GaussianMeasure(m1, S), GaussianMeasure(m2, S))
        trans = max(trans, abs(d - float(np.linalg.norm(m1 - m2))))
        a, b = rng.uniform(0.1, 3.0, 2)
        u, v = rng.standard_normal(2)
        d1 = w2_gaussian(GaussianMeasure([u], [[a * a]]), GaussianMeasure([v], [[b * b]]))
        scal = max(scal, abs(d1 - math.hypot(u - v, a - b)))
    record.verdicts.append(check("gaussian_translation_case", trans, 0.0, 1e-12))
    record.verdicts.append(check("gaussian_scalar_case", scal, 0.0, 1e-12))

    ou = lyapunov_stationary([[-1.0]], [[1.0]])
    record.verdicts.append(check("lyapunov_scalar_ou", abs(float(ou[0, 0]) - 0.5), 0.0, 1e-12))
    record.summary.update(instances=instances, n_points=n_points, dim=dim)
    return record


EXPERIMENTS = {
    "certify": run_certify,
    "simulate": run_simulate,
    "contraction": run_contraction,
    "invariant": run_invariant,
    "w2": run_w2_selftest,
}


def run_experiment(kind: str, cfg: ExperimentConfig | None) -> ReportRecord:
    try:
        fn = EXPERIMENTS[kind]
    except KeyError:
        raise ValueError(f"unknown experiment {kind!r}; expected one of {sorted(EXPERIMENTS)}") from None
    if cfg is None and kind != "w2":
        raise ValueError(f"experiment {kind!r} needs a config")
    return fn(cfg)
