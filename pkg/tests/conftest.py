import numpy as np
import pytest

from fereit.forward import extract_data_vector, solve_all
from fereit.mesh import assign_electrodes, generate_disk_mesh
from fereit.sensitivity import assemble_sensitivity, build_fidelity_regularizer


class Setup:
    """Mesh, layout, homogeneous potentials, S and the fidelity regularizer for one disk."""

    def __init__(self, h, symmetry=16):
        self.mesh = generate_disk_mesh(1.0, h, symmetry=symmetry)
        self.layout = assign_electrodes(self.mesh, 16, 0.5)
        self.ps = solve_all(self.mesh, self.layout)
        self.V = extract_data_vector(self.ps)
        self.S = assemble_sensitivity(self.mesh, self.ps)
        self.reg = build_fidelity_regularizer(self.S)


@pytest.fixture(scope="session")
def disk():
    """Default reconstruction disk (h = 0.05, 2560 elements)."""
    return Setup(0.05)


@pytest.fixture(scope="session")
def small_disk():
    """Coarse disk for brute-force oracles."""
    return Setup(0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
