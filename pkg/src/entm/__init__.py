"""Markov-chain model of entanglement distribution over one inter-satellite hop."""
from .errors import (DegenerateGenerationError, DimensionMismatchError, EmptySpaceError, EntmError,
                     InfeasibleLinkError, MissingFieldError, MissingFixtureError, NoRootInBracketError,
                     NotAchievableError, NotConvergedError, RangeError, ScenarioError,
                     UnknownDistanceError)
from .feasibility import (DmaxResult, dmax_closed_form, dmax_feasible, dmax_link_model,
                          dmax_with_rotation, fidelity_qualifies, max_threshold_for_range,
                          min_aperture_for_range)
from .fidelity import (LinkBudget, cutoff_time, initial_fidelity, link_budget, loss_fidelity,
                       max_age, stored_fidelity)
from .markov import (StateSpace, build_state_space, evolve, steady_state, transition_matrix)
from .mcsim import SimConfig, SimStats, compare, run_simulation
from .metrics import (MetricsReport, analyze, expected_consumed_fidelity, expected_consumption_age,
                      expected_waiting_time, link_p_prime, utilization)
from .optics import capture_probability, channel_transmittance, spot_radius, transmittance_avg
from .params import (OpticsParams, OrbitParams, NoiseParams, ScenarioParams, TimingParams,
                     default_scenario, load_scenario, validate_scenario)
from .polarization import expected_rotation_fidelity, systematic_rotation

__version__ = "0.1.0"
