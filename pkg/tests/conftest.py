import pytest

from gridsentry.simulate import make_eval_set

SCENARIO_SEEDS = range(100)
SCENARIO_SHAPES = {"GOOSE": (55, 25), "SV": (60, 20)}


@pytest.fixture(scope="session")
def eval_scenarios():
    """100 seeded mixed-injection scenarios per protocol, shared by the
    soundness, monotonicity, and pipeline-equivalence acceptance checks."""
    scenarios = []
    for protocol, (anomalies, normals) in SCENARIO_SHAPES.items():
        for seed in SCENARIO_SEEDS:
            scenarios.append(make_eval_set(protocol, anomalies=anomalies,
                                           normals=normals, seed=seed))
    return scenarios
