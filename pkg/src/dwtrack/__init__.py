"""dwtrack: shape-configured domain-wall track neurons, grid to network."""

from .geometry import (GridSpec, Mask, ShapeKind, TrackShape, make_track_shape,
                       rasterize, width_at)
from .currentmap import CurrentMap, cross_section_current, solve_current
from .llg import (DriveSpec, MagState, MaterialParams, effective_field,
                  init_domain_wall, run, step, total_energy)
from .analysis import (ActivationCurve, PositionTrace, dw_position,
                       extract_activation, linearity_rmse, sigmoidality_check,
                       simulate_integration, simulate_leaking,
                       steady_leaked_position)
from .reduced import (NeuronModel, NeuronState, build_neuron_model, calibrate,
                      shape_force, step_neuron)
from .network import Crossbar, Network, SpikeTrain, infer, layer_step

__version__ = "0.1.0"
