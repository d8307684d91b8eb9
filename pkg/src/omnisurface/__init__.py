"""Joint beamforming, phase and energy-split design for an omni-surface assisted downlink."""
from .model import (Beamformers, ChannelSet, DimensionError, Geometry, IosState, Mode,
                    SolveReport, Status, SystemConfig, composite_channel, effective_channels,
                    mse_all, sinr_all, sum_rate, total_power)
from .channels import path_loss, sample_channels, trial_seed, user_distance
from .manifold import RcgOptions, lse_smooth, rcg_minimize, retract, riemannian_grad
from .powermin import InfeasibleError, PowerMinOptions, power_min_solve, solve_tx_beamforming
from .sumrate import SumRateOptions, WmmseState, sum_rate_solve
from .modes import ModeSpec, project_mode, solve_with_mode

__version__ = "0.1.0"
