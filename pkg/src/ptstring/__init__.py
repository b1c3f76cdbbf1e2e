"""Prescribed-time backstepping boundary control of a flexible-string wave PDE.

Submodules: core (parameters, grids, quadrature), gain (blow-up schedule),
kernel_series (exact monomial kernel), kernel_fd (characteristic-march FD
solver and boundary traces), bounds (Bessel envelopes), transforms
(Volterra maps), controller, simulator, diagnostics, scenarios, config,
cli, verification.
"""
from .core import (PTConfig, SpatialGrid, StringParams, TriGrid,
                   integrate_1d, integrate_lemma2_check, minimal_time, wave_speed)
from .gain import GainSchedule
from .kernel_series import SeriesKernel, build_series_kernel, to_characteristic
from .kernel_fd import (BoundaryTraces, KernelField, InverseKernelField,
                        boundary_traces, solve_inverse_kernel, solve_kernel_fd)
from .bounds import bessel_i1, calibrate_Ck, gain_envelope_Mk, kernel_bound
from .transforms import FieldSnapshot, forward_transform, inverse_transform, target_residual
from .controller import ControlSample, exp_baseline_control, pt_control
from .simulator import Trajectory, WaveState, init_state, simulate, step
from .diagnostics import (LyapunovWeights, energy_eval, lyapunov_eval,
                          poincare_check, theorem4_envelope)
from .config import ScenarioConfig, load_config, parse_config, serialize_config

__version__ = "0.1.0"
