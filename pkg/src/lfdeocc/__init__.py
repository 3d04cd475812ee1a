"""Light-field de-occlusion toolkit."""

from .lf_core import (
    LightField,
    extract_patches,
    rectify,
    resize_bilinear,
    shift_view,
    stack_channels,
    unstack_channels,
    upsample2x,
)
from .mask_embed import (
    MaskAsset,
    OcclusionLayer,
    SynthesisConfig,
    channel_shuffle,
    composite,
    occlusion_rate,
    refocus_check,
    synthesize,
    warp_mask,
)
from .metrics import EvalReport, EvalRow, assemble_report, evaluate_scene, mean_l1, psnr, ssim
from .model import DeOccNet, NetworkConfig, build, load_model, load_weights, receptive_field, save_weights
from .refocus import focal_stack, sa_average, sa_median
from .train import Adam, AdamConfig, TrainConfig, TrainingLog, lr_at, make_batches, train

__version__ = "0.1.0"
