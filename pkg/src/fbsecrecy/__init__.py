"""Ergodic secrecy-rate bounds for fading broadcast channels with b-bit CSI feedback.

Values are in nats per channel use.  The main entry points are in
:mod:`fbsecrecy.bounds`; :mod:`fbsecrecy.sim` runs the feedback protocols
by Monte Carlo and :mod:`fbsecrecy.cli` wraps both for the command line.
"""

from .bounds import (BoundKind, BoundResult, common_message_lower, common_message_upper,
                     perfect_csi_common, perfect_csi_sum, protocol_rate, selection_occupancy,
                     sum_rate_lower, sum_rate_upper)
from .dist import ExponentialMean, Gamma, colluding_eavesdropper, max_order_statistic
from .errors import DomainError, NumericalError, QuadratureError, UnsupportedFamilyError
from .opt import (CsiPowerProfile, PowerPolicy, kkt_check, optimize_powers, optimize_thresholds_and_powers,
                  perfect_csi_power_policy)
from .quadrature import QuadratureSettings
from .quantize import Quantizer, cell_probabilities, equiprobable_quantizer
from .rates import conditional_upper_gain, expected_secrecy_gain
from .sim import SimConfig, simulate_common, simulate_sum

__version__ = "0.1.0"
