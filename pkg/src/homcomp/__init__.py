"""Cost model, simulator, codecs and loopback harness for compressed parameter exchange."""

from .codec import (
    CodecError,
    DecodeError,
    EncodedBlob,
    ParamBlob,
    QuantizedBlob,
    average_error_bound,
    decode,
    encode,
    get_codec,
    h_add,
    h_average,
    h_scale,
    quantize,
)
from .config import RunConfig, load
from .cost_model import (
    ClusterConfig,
    CodecProfile,
    ConfigError,
    FrontierPoint,
    PhaseBreakdown,
    Strategy,
    computation_time,
    continuous_optimum,
    crossover_workers,
    frontier_h_max,
    optimal_workers,
    speedup,
    transfer_time,
    update_time,
)
from .simulator import (
    HRhoGrid,
    SpeedupCurve,
    compare_curves,
    simulate_training,
    simulate_update,
    sweep_h_rho,
    sweep_workers,
)

__version__ = "0.1.0"
