"""Time-difference EIT with fidelity-embedded regularization.

The usual flow::

    mesh = generate_disk_mesh(1.0, 0.05, symmetry=16)
    layout = assign_electrodes(mesh, 16, coverage=0.5)
    ps = solve_all(mesh, layout)
    S = assemble_sensitivity(mesh, ps)
    reg = build_fidelity_regularizer(S)
    image = fer_reconstruct(S, reg, vdot)          # lambda = inf by default
"""
__version__ = "0.1.0"

from .forward import (assemble_system, extract_data_vector, forward_data, measurement_pairs,
                      solve_adjoint_dipole, solve_all, solve_injection)
from .mesh import (ElectrodeLayout, Mesh, assign_electrodes, boundary_elements, generate_disk_mesh,
                   load_mesh, refine, refine_layout, save_mesh)
from .phantom import (FrameSequence, MotionSpec, Scenario, breathing_scenario, simulate_frames,
                      simulate_motion_frames)
from .recon import (ConductivityImage, fer_reconstruct, motion_filter, standard_reconstruct,
                    time_difference)
from .sensitivity import (assemble_sensitivity, boundary_submatrix, build_fidelity_regularizer,
                          kernel_row)
