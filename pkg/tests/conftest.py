import warnings

import pytest

from edgefed import Address, Algorithm, ConsensusConfig, ScenarioConfig
from edgefed.simkernel import generate_topology
from edgefed.units import to_micro


def addr(tag) -> Address:
    return Address.derive("test", tag)


def clique_config(validators, period_s=5.0, **kw) -> ConsensusConfig:
    return ConsensusConfig(
        algorithm=Algorithm.CLIQUE,
        block_period_us=to_micro(period_s),
        validators=tuple(validators),
        **kw,
    )


def qbft_config(validators, period_s=5.0, **kw) -> ConsensusConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ConsensusConfig(
            algorithm=Algorithm.QBFT,
            block_period_us=to_micro(period_s),
            validators=tuple(validators),
            **kw,
        )


def scenario(n=2, variant="clique", seed=7, runs=1, **kw) -> ScenarioConfig:
    consumers, providers = generate_topology(n)
    return ScenarioConfig(
        scenario_id="test",
        n_systems=n,
        consumers=consumers,
        providers=providers,
        variant=variant,
        seed=seed,
        runs=runs,
        **kw,
    )


@pytest.fixture(autouse=True)
def _silence_small_validator_warning():
    # Most scenario fixtures run QBFT with fewer than four validators on
    # purpose; the warning itself has a dedicated test.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        yield
