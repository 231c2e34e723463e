"""
Verification suites: executable acceptance checks over the engine, the
estimators and the oracles. Every suite derives its runs from the user config
(seed, resolution, ensemble size, horizon) and returns a SuiteResult.
"""
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from app.core.config import settings
from app.core.errors import ErrorCode, SkewSimError
from app.core.fields import build_drift, build_field
from app.models.models import ValidatedConfig
from app.schemas.schemas import CheckResult, SimConfig, SuiteResult
from app.services.collision_service import build_model, simulate_particles
from app.services.config_service import validate_config, with_overrides
from app.services.ensemble_service import PathCollector, run_ensemble
from app.services.girsanov_service import self_normalized_estimate
from app.services.oracle_service import (
    exact_chain_law,
    law_sup_distance,
    reflected_local_time_mean,
    sign_probability,
    skew_bm_reference_cdf,
)
from app.services.skew_chain_service import (
    martingale_bound,
    one_step_law,
    step_law,
    zstar_one_step_law,
)
from app.services.skorohod_service import (
    next_step_local_time,
    occupation_local_time,
    one_sided_local_times,
    randomization_bound,
    remainder_bound,
    skorohod_representation,
    tanaka_local_time,
)
from app.services.stats_service import (
    dkw_band,
    empirical_law,
    ks_distance,
    lattice_ks_distance,
    mean_with_stderr,
    two_sample_ks,
)
from app.utils.lattice import grid_index

logger = logging.getLogger(__name__)

Suite = Callable[[ValidatedConfig, int], SuiteResult]

ZERO = {"family": "Zero"}
FRICTIONLESS = {
    "zeta1": {"family": "Constant", "params": {"value": 1.0}},
    "zeta2": {"family": "Constant", "params": {"value": 1.0}},
    "eta1": {"family": "Constant", "params": {"value": 1.0}},
    "eta2": {"family": "Constant", "params": {"value": 1.0}},
}
PERFECT_REFLECTION = {
    "zeta1": {"family": "Constant", "params": {"value": -1.0}},
    "zeta2": {"family": "Constant", "params": {"value": 1.0}},
    "eta1": {"family": "Constant", "params": {"value": -1.0}},
    "eta2": {"family": "Constant", "params": {"value": 1.0}},
}
UNIQUENESS_FIELD = {
    "family": "SigmoidAffine",
    "params": {"offset": [0.0, 0.0], "amplitude": [0.5, 0.5], "frequency": [1.0]},
}
OCCUPATION_WINDOWS = (0.1, 0.05, 0.025)
SKOROHOD_PATHS = 10


def constant_field(values: List[float]) -> dict:
    return {"family": "Constant", "params": {"value": [float(v) for v in values]}}


def random_field_spec(rng: np.random.Generator, dimension: int) -> dict:
    """SigmoidAffine field with |c_1| + |A_1| <= 1 and arbitrary transverse coordinates."""
    offset = np.concatenate([rng.uniform(-0.5, 0.5, 1), rng.uniform(-3.0, 3.0, dimension - 1)])
    amplitude = np.concatenate([rng.uniform(-0.5, 0.5, 1), rng.uniform(-2.0, 2.0, dimension - 1)])
    return {
        "family": "SigmoidAffine",
        "params": {
            "offset": offset.tolist(),
            "amplitude": amplitude.tolist(),
            "frequency": rng.uniform(-2.0, 2.0, dimension - 1).tolist(),
        },
    }


def _check(
    name: str,
    value: Optional[float],
    threshold: Optional[float],
    passed: bool,
    detail: Optional[str] = None,
) -> CheckResult:
    return CheckResult(
        name=name,
        value=None if value is None else float(value),
        threshold=None if threshold is None else float(threshold),
        passed=bool(passed),
        detail=detail,
    )


def _result(suite: str, checks: List[CheckResult], metrics: Dict = None) -> SuiteResult:
    passed = all(check.passed for check in checks)
    logger.info(f"Suite {suite}: {'passed' if passed else 'FAILED'} ({len(checks)} checks)")
    return SuiteResult(suite=suite, passed=passed, checks=checks, metrics=metrics or {})


def _derive(validated: ValidatedConfig, **changes) -> ValidatedConfig:
    """A run config derived from the user config; collision section dropped unless given."""
    changes.setdefault("collision", None)
    changes.setdefault("drift", ZERO)
    return with_overrides(validated, **changes)


# Pathwise identities
def pathwise_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """Exact identities on every path plus the diagnostic bounds on the remainders."""
    config = validated.config
    rng = np.random.default_rng(config.seed)
    cases = [("config", _derive(validated, drift=config.drift.model_dump(mode="json", exclude_none=True),
                                 paths_m=settings.PATHWISE_RUNS))]
    for d in (1, 2, 3):
        start = [0.0] + rng.uniform(-1.0, 1.0, d - 1).tolist()
        cases.append((f"d{d}", _derive(
            validated,
            dimension=d,
            start=start,
            field=random_field_spec(rng, d),
            paths_m=settings.PATHWISE_RUNS,
        )))

    checks = []
    metrics = {}
    for label, case in cases:
        d = case.dimension
        n = case.resolution
        T = case.horizon
        field = build_field(case.config.field, d)
        ensemble = run_ensemble(case, threads=threads, field=field, record_diagnostics=True, check_identities=True)

        checks.append(_check(f"identities_{label}", ensemble.identity_failures, 0, ensemble.identity_failures == 0))
        c1 = martingale_bound(field, d)
        checks.append(_check(
            f"martingale_increment_{label}", ensemble.max_martingale_increment, c1,
            ensemble.max_martingale_increment <= c1 + 1e-9,
        ))

        mean_l, se_l = mean_with_stderr(ensemble.local_time)
        bound = abs(case.scaled_start[0]) + math.sqrt(T) + 3.0 * se_l
        checks.append(_check(f"local_time_mean_bound_{label}", mean_l, bound, mean_l <= bound))

        rem_mean, rem_se = mean_with_stderr(ensemble.max_remainder_sq)
        rem_bound = remainder_bound(field, d, mean_l, n)
        checks.append(_check(f"remainder_{label}", rem_mean, rem_bound, rem_mean <= rem_bound + 3.0 * rem_se))

        gap_mean, gap_se = mean_with_stderr(ensemble.max_randomization_gap_sq)
        gap_bound = randomization_bound(mean_l, n)
        checks.append(_check(f"randomization_gap_{label}", gap_mean, gap_bound, gap_mean <= gap_bound + 3.0 * gap_se))

        skorohod_gap = 0.0
        one_sided_gap = 0.0
        collected = run_ensemble(
            case, threads=1, field=field, reducer=PathCollector(T), paths=min(SKOROHOD_PATHS, case.config.paths_m)
        )
        for path in collected.records:
            pair = skorohod_representation(path)
            skorohod_gap = max(
                skorohod_gap,
                float(np.max(np.abs(pair.S - np.abs(path.U)))),
                float(np.max(np.abs(pair.V - next_step_local_time(path)))),
            )
            plus, minus = one_sided_local_times(path.U)
            one_sided_gap = max(one_sided_gap, float(np.max(np.abs(plus + minus - tanaka_local_time(path.U)))))
        checks.append(_check(f"skorohod_representation_{label}", skorohod_gap, 1e-12, skorohod_gap <= 1e-12))
        checks.append(_check(f"one_sided_sum_{label}", one_sided_gap, 1e-10, one_sided_gap <= 1e-10))

        metrics[label] = {"mean_local_time": mean_l, "mean_max_remainder_sq": rem_mean, "mean_max_gap_sq": gap_mean}

    return _result("pathwise", checks, metrics)


# One-step law
def one_step_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """Exact enumeration of the transition law from random states and fields."""
    config = validated.config
    rng = np.random.default_rng(config.seed)
    mass_error = 0.0
    mean_error = 0.0
    product_error = 0.0
    zstar_error = 0.0
    oracle_error = 0.0

    for case in range(settings.ONE_STEP_CASES):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 10_001))
        spec = random_field_spec(rng, d)
        field = build_field(validate_config(_case_config(config, d, n, [0.0] * d, spec)).config.field, d)
        state = rng.integers(-5, 6, d)
        if case % 2 == 0:
            state[0] = 0

        law = one_step_law(state, n, field)
        mass_error = max(mass_error, abs(sum(law.values()) - 1.0))
        mean = np.sum([np.array(u) * p for u, p in law.items()], axis=0)
        expected = field.evaluate(state[1:] / math.sqrt(n))[0] if state[0] == 0 else np.zeros(d)
        mean_error = max(mean_error, float(np.max(np.abs(mean - expected))))

        if state[0] == 0:
            product_error = max(product_error, _product_error(law, step_law(state[1:] / math.sqrt(n), field)))

        zstar = zstar_one_step_law(state, n, field)
        zstar_error = max(zstar_error, abs(zstar.get(1, 0.0) - 0.5), abs(zstar.get(-1, 0.0) - 0.5))

        if d <= 2:
            lattice = validate_config(_case_config(config, d, n, (state / math.sqrt(n)).tolist(), spec))
            dp = exact_chain_law(lattice, 1, field).as_dict()
            enumerated = {
                tuple(int(v) for v in np.add(lattice.lattice_start, u)): p for u, p in law.items() if p > 0
            }
            keys = set(dp) | set(enumerated)
            oracle_error = max(oracle_error, max(abs(dp.get(k, 0.0) - enumerated.get(k, 0.0)) for k in keys))

    checks = [
        _check("unit_mass", mass_error, 1e-12, mass_error <= 1e-12),
        _check("conditional_mean", mean_error, 1e-12, mean_error <= 1e-12),
        _check("product_form", product_error, 1e-12, product_error <= 1e-12),
        _check("randomized_walk_law", zstar_error, 1e-15, zstar_error <= 1e-15),
        _check("oracle_one_step", oracle_error, 1e-12, oracle_error <= 1e-12),
    ]
    return _result("one-step", checks, {"cases": settings.ONE_STEP_CASES})


def _case_config(config: SimConfig, d: int, n: int, start: List[float], field: dict) -> dict:
    return {
        "dimension": d,
        "resolution_n": n,
        "horizon_t": 1.0 / n,
        "paths_m": 1,
        "start": start,
        "field": field,
        "seed": config.seed,
    }


def _product_error(law: Dict, expected) -> float:
    worst = 0.0
    for increment, probability in law.items():
        product = 1.0
        for i, du in enumerate(increment):
            sign = du - int(expected.shift[i])
            product *= expected.probs[i, 0] if sign == 1 else expected.probs[i, 1]
        worst = max(worst, abs(product - probability))
    return worst


# Skew law
def skew_law_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """Monte Carlo versus the exact oracle, then the oracle versus the closed-form skew law."""
    checks = []
    metrics = {}
    for b1 in settings.SKEW_LAW_B1_VALUES:
        case = _derive(validated, dimension=1, start=[0.0], field=constant_field([b1]))
        T = case.horizon
        m = case.config.paths_m
        alpha = (1.0 + b1) / 2.0

        ensemble = run_ensemble(case, threads=threads)
        law = exact_chain_law(case, grid_index(case.resolution, T))
        support, masses = law.marginal(0)
        ks = lattice_ks_distance(empirical_law(ensemble.terminal), support, masses)
        band = dkw_band(m)
        checks.append(_check(f"mc_vs_oracle_b1={b1:g}", ks, band, ks <= band))

        distance = law_sup_distance(law, skew_bm_reference_cdf(alpha, T))
        tolerance = settings.REFERENCE_LAW_TOLERANCE
        checks.append(_check(f"oracle_vs_reference_b1={b1:g}", distance, tolerance, distance <= tolerance))

        p_minus, p_zero, p_plus = sign_probability(law)
        ratio = p_plus / (p_plus + p_minus)
        checks.append(_check(
            f"sign_ratio_b1={b1:g}", abs(ratio - alpha), settings.SIGN_RATIO_TOLERANCE,
            abs(ratio - alpha) <= settings.SIGN_RATIO_TOLERANCE,
        ))
        metrics[f"{b1:g}"] = {"p_minus": p_minus, "p_zero": p_zero, "p_plus": p_plus, "ks": ks}
    return _result("skew-law", checks, metrics)


# Reflection
def reflection_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """b_1 = 1 from 0: local-time mean against the folded normal, plus the growth bound."""
    probe_times = sorted(settings.REFLECTION_PROBE_TIMES)
    case = _derive(validated, dimension=1, start=[0.0], field=constant_field([1.0]), horizon_t=max(probe_times))
    ensemble = run_ensemble(case, threads=threads, probe_times=probe_times)
    checks = []

    checks.append(_check("nonnegative", float(ensemble.terminal[:, 0].min()), 0.0, ensemble.terminal[:, 0].min() >= 0))

    at_one = probe_times.index(1.0) if 1.0 in probe_times else None
    if at_one is not None:
        mean_one, _ = mean_with_stderr(ensemble.probes[:, at_one])
        reference = reflected_local_time_mean(1.0)
        relative = abs(mean_one - reference) / reference
        checks.append(_check("local_time_mean_t=1", relative, settings.REFLECTION_TOLERANCE,
                             relative <= settings.REFLECTION_TOLERANCE, detail=f"reference {reference:.6f}"))

    for i, t in enumerate(probe_times):
        mean_t, se_t = mean_with_stderr(ensemble.probes[:, i])
        bound = abs(case.scaled_start[0]) + math.sqrt(t) + 3.0 * se_t
        checks.append(_check(f"local_time_bound_t={t:g}", mean_t, bound, mean_t <= bound))

    # Estimators on individual reflected paths
    field = build_field(case.config.field, 1)
    one_sided_gap = 0.0
    errors = np.zeros(len(OCCUPATION_WINDOWS))
    paths = min(settings.PATHWISE_RUNS, case.config.paths_m)
    one = _derive(case, horizon_t=1.0)
    collected = run_ensemble(one, threads=threads, field=field, reducer=PathCollector(1.0), paths=paths)
    for path in collected.records:
        plus, minus = one_sided_local_times(path.U)
        one_sided_gap = max(one_sided_gap, float(np.max(np.abs(minus))), float(np.max(np.abs(plus - path.L))))
        tanaka = tanaka_local_time(path.U)[-1]
        for k, eps in enumerate(OCCUPATION_WINDOWS):
            errors[k] += abs(occupation_local_time(path.U, eps, path.dt)[-1] - tanaka) / paths
    checks.append(_check("one_sided_reflected", one_sided_gap, 1e-10, one_sided_gap <= 1e-10))
    checks.append(_check("occupation_trend", errors[-1], errors[0], errors[-1] <= errors[0]))

    metrics = {
        "probe_times": probe_times,
        "mean_local_time": [mean_with_stderr(ensemble.probes[:, i])[0] for i in range(len(probe_times))],
        "occupation_errors": errors.tolist(),
    }
    return _result("reflection", checks, metrics)


# Girsanov
def girsanov_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """d = 1, b = 0, constant drift: weighted mean of X(T) against x + mu T."""
    mu = settings.GIRSANOV_DEFAULT_DRIFT
    case = _derive(
        validated,
        dimension=1,
        start=[0.0],
        field=constant_field([0.0]),
        drift=constant_field([mu]),
    )
    T = case.horizon
    ensemble = run_ensemble(case, threads=threads)
    weights = ensemble.weights

    estimate = self_normalized_estimate(ensemble.terminal[:, 0], weights)
    target = case.scaled_start[0] + mu * T
    error = abs(estimate.estimate - target)
    mean_weight, se_weight = mean_with_stderr(weights)

    checks = [
        _check("drifted_mean", error, 3.0 * estimate.stderr, error <= 3.0 * estimate.stderr,
               detail=f"estimate {estimate.estimate:.6f}, target {target:.6f}"),
        _check("mean_weight", abs(mean_weight - 1.0), 3.0 * se_weight, abs(mean_weight - 1.0) <= 3.0 * se_weight),
    ]
    metrics = {
        "estimate": estimate.estimate,
        "stderr": estimate.stderr,
        "effective_sample_size": estimate.effective_sample_size,
        "mean_weight": mean_weight,
    }
    return _result("girsanov", checks, metrics)


# Collisions
def collisions_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """Frictionless and perfect-reflection models."""
    checks = []
    metrics = {}
    base = _derive(validated, dimension=2, start=[0.0, 0.0], field=ZERO)
    T = base.horizon
    m = base.config.paths_m

    frictionless = _derive(base, dimension=2, collision=FRICTIONLESS)
    _, records = simulate_particles(build_model(frictionless.config.collision), (0.0, 0.0), frictionless, threads)
    contribution = max(r.max_contribution for r in records)
    checks.append(_check("frictionless_contribution", contribution, 0.0, contribution == 0.0))
    gaps = max(max(r.driver_gap1, r.driver_gap2) for r in records)
    checks.append(_check("frictionless_driver_identity", gaps, 0.0, gaps == 0.0))
    X1 = np.array([r.terminal[0] for r in records])
    ks = ks_distance(empirical_law(X1), stats.norm(loc=0.0, scale=math.sqrt(T / 2.0)).cdf)
    allowance = dkw_band(m) + settings.DISCRETIZATION_ALLOWANCE
    checks.append(_check("frictionless_x1_law", ks, allowance, ks <= allowance))
    metrics["frictionless_x1_variance"] = float(np.var(X1))

    reflection = _derive(base, dimension=2, collision=PERFECT_REFLECTION)
    _, reflected = simulate_particles(build_model(reflection.config.collision), (1.0, 0.0), reflection, threads)
    min_gap = min(r.min_gap for r in reflected)
    checks.append(_check("reflection_order", min_gap, 0.0, min_gap >= 0.0))
    crossings = sum(r.sign_changes for r in reflected)
    checks.append(_check("reflection_sign", crossings, 0, crossings == 0))
    gap2 = max(r.driver_gap2 for r in reflected)
    checks.append(_check("reflection_x2_driver", gap2, 0.0, gap2 == 0.0))

    split = max(r.split_gap for r in records + reflected)
    checks.append(_check("local_time_split", split, 1e-10, split <= 1e-10))
    round_trip = max(r.round_trip_gap for r in records + reflected)
    checks.append(_check("round_trip", round_trip, 1e-12, round_trip <= 1e-12))
    return _result("collisions", checks, metrics)


# Uniqueness consistency
def uniqueness_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """Terminal laws at two resolutions agree, and Monte Carlo agrees with the d = 2 oracle."""
    checks = []
    base = _derive(validated, dimension=2, start=[0.0, 0.0], field=UNIQUENESS_FIELD)
    m = base.config.paths_m
    band = dkw_band(m)

    terminals = []
    for n in settings.UNIQUENESS_RESOLUTIONS:
        terminals.append(run_ensemble(_derive(base, resolution_n=n), threads=threads).terminal)
    for coordinate in range(2):
        for (n0, first), (n1, second) in zip(
            zip(settings.UNIQUENESS_RESOLUTIONS, terminals),
            zip(settings.UNIQUENESS_RESOLUTIONS[1:], terminals[1:]),
        ):
            ks = two_sample_ks(first[:, coordinate], second[:, coordinate])
            allowance = 2.0 * band + settings.DISCRETIZATION_ALLOWANCE
            checks.append(_check(f"resolution_{n0}_vs_{n1}_x{coordinate + 1}", ks, allowance, ks <= allowance))

    dp_config = _derive(base, resolution_n=settings.UNIQUENESS_DP_RESOLUTION)
    ensemble = run_ensemble(dp_config, threads=threads)
    law = exact_chain_law(dp_config, grid_index(dp_config.resolution, dp_config.horizon))
    emp = empirical_law(ensemble.terminal)
    for coordinate in range(2):
        support, masses = law.marginal(coordinate)
        ks = lattice_ks_distance(emp, support, masses, coordinate)
        checks.append(_check(f"mc_vs_oracle_n={dp_config.resolution}_x{coordinate + 1}", ks, band, ks <= band))
    return _result("uniqueness-consistency", checks)


# Determinism
def determinism_suite(validated: ValidatedConfig, threads: int) -> SuiteResult:
    """The same ensemble with one and with several workers, compared bit for bit."""
    drift = build_drift(validated.config.drift, validated.dimension)
    single = run_ensemble(validated, threads=1, drift=drift)
    pooled = run_ensemble(validated, threads=max(threads, 2), drift=drift)
    checks = [
        _check(name, None, None, np.array_equal(getattr(single, name), getattr(pooled, name)))
        for name in ("terminal", "terminal_W", "local_time", "log_weights")
    ]
    return _result("determinism", checks)


SUITES: Dict[str, Suite] = {
    "pathwise": pathwise_suite,
    "one-step": one_step_suite,
    "skew-law": skew_law_suite,
    "reflection": reflection_suite,
    "girsanov": girsanov_suite,
    "collisions": collisions_suite,
    "uniqueness-consistency": uniqueness_suite,
    "determinism": determinism_suite,
}


def run_suite(name: str, validated: ValidatedConfig, threads: int = 1) -> List[SuiteResult]:
    """
    Run a named suite, or every suite for "all".

    Raises:
        SkewSimError: UNKNOWN_SUITE
    """
    if name == "all":
        return [suite(validated, threads) for suite in SUITES.values()]
    if name not in SUITES:
        raise SkewSimError(ErrorCode.UNKNOWN_SUITE, f"unknown suite '{name}', expected one of {', '.join(SUITES)} or all")
    return [SUITES[name](validated, threads)]
