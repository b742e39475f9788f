import numpy as np
import pytest

from ecgilab.fem import interpolation_matrix, torso_mesh
from ecgilab.propagation import ScenarioConfig, StimulusSpec, run_forward
from ecgilab.transfer import AveragedModelParams, build_transfer

_ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    """Collect one line per acceptance criterion for the terminal summary."""
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case1_forward():
    cfg = ScenarioConfig(name="case1", stimuli=(StimulusSpec(angle=0.0),))
    return cfg, run_forward(cfg)


@pytest.fixture(scope="session")
def inverse_op():
    cfg = ScenarioConfig()
    return build_transfer(torso_mesh(cfg.epi_radius, cfg.torso_radius, cfg.n_theta_inverse),
                          AveragedModelParams.from_scenario(cfg))


@pytest.fixture(scope="session")
def case1_on_inverse(case1_forward, inverse_op):
    """Noiseless forward signals interpolated onto the inverse curves."""
    _, fw = case1_forward
    pb = interpolation_matrix(fw.meshes.body, inverse_op.body)
    pe = interpolation_matrix(fw.meshes.epi, inverse_op.epi)
    return {
        "Z": fw.Z_body.with_values((pb @ fw.Z_body.values.T).T),
        "U": fw.U_epi.with_values((pe @ fw.U_epi.values.T).T),
        "V": fw.V_epi.with_values((pe @ fw.V_epi.values.T).T),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CASE2_BLOCK_ANGLE = np.pi / 2


@pytest.fixture(scope="session")
def case2_forward():
    from ecgilab.propagation import BlockRegion
    cfg = ScenarioConfig(name="case2", stimuli=(StimulusSpec(angle=0.0),),
                         blocks=(BlockRegion(angle=CASE2_BLOCK_ANGLE, width=0.1,
                                             depth_fraction=1.0),),
                         t_end=240.0)
    return cfg, run_forward(cfg)
