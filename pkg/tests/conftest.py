"""Shared fixtures.  The trained reference run and the variant suite are
expensive, so they are session-scoped and reused by the unit tests and
the acceptance criteria alike."""

import time

import pytest

from twohead import MethodVariant, TrainConfig, build_toy_scenario, evaluate
from twohead.trainer import train

REFERENCE_SEED = 7


@pytest.fixture(scope="session")
def toy_data():
    return build_toy_scenario(REFERENCE_SEED)


@pytest.fixture(scope="session")
def reference_run(toy_data):
    """Full-variant training at the frozen default config; returns
    (state, report, wall_seconds)."""
    source, target = toy_data
    t0 = time.perf_counter()
    state = train(source, target, TrainConfig(seed=REFERENCE_SEED))
    elapsed = time.perf_counter() - t0
    report = evaluate(state.model, target, state.delta)
    return state, report, elapsed


@pytest.fixture(scope="session")
def variant_reports(toy_data, reference_run):
    """EvalReport per method variant, all on identical data and seed."""
    source, target = toy_data
    reports = {MethodVariant.FULL: reference_run[1]}
    for variant in MethodVariant:
        if variant is MethodVariant.FULL:
            continue
        state = train(source, target, TrainConfig(seed=REFERENCE_SEED, variant=variant))
        reports[variant] = evaluate(state.model, target, state.delta)
    return reports
