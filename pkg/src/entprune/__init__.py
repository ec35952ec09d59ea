"""Conditional-entropy filter pruning for small CNNs.

A numpy library in seven parts: a deterministic CNN engine (engine), dataset
ingestion (data), per-sample activation/loss traces (trace), quantized
entropy statistics (entstats), filter-importance criteria (criteria),
network surgery (surgery), and the two-phase pruning driver (driver).
The `entprune` command line wraps the common recipes.
"""

from .data import Dataset, NoiseSpec, add_gaussian_noise, batches, load_idx, synthetic_blobs
from .engine import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    SgdConfig,
    SoftmaxCrossEntropy,
    count_flops,
    evaluate,
    forward,
    init_network,
    load_checkpoint,
    loss_and_grads,
    param_bytes,
    save_checkpoint,
    sgd_step,
)
from .entstats import (
    EntropyAccumulator,
    QuantSpec,
    activation_entropy,
    conditional_entropy,
    loss_entropy,
    mutual_information,
    quantize,
)
from .criteria import (
    FilterScore,
    PrunePlan,
    rank_and_select,
    score_act_ent,
    score_apoz,
    score_cond_ent,
    score_l1,
    score_taylor,
)
from .driver import (
    PhaseConfig,
    PruneLogEntry,
    bench_inference,
    criteria_comparison,
    finetune,
    phase1_global,
    phase2_layerwise,
    run_2pfpce,
    train,
)
from .models import PRESETS, build_preset
from .surgery import bias_compensate, mark_freeze, remove_filters
from .trace import TraceFile, TraceRecord, capture, read_trace, write_trace

__version__ = "0.1.0"
