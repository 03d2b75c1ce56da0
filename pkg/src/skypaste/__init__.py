"""skypaste: seeded cut-and-paste augmentation and detection evaluation.

The package synthesizes labeled detection training images by compositing
alpha-matted cutouts onto backgrounds, applies classical augmentation
recipes, extracts Canny edge maps, and scores detections with per-class
NMS, greedy IoU matching, and interpolated AP — all deterministic under a
root seed.
"""

from .classicaug import ClassicOps, augment_classical
from .compose import (
    ComposeConfig,
    ComposedSample,
    ComposeParams,
    ForegroundAsset,
    batch_compose,
    composite_sample,
    sample_params,
)
from .core import (
    Annotation,
    Channels,
    Detection,
    ImageBuffer,
    NormBBox,
    PixelRect,
    RngStream,
    derive_stream,
    norm_to_pixel,
    pixel_to_norm,
    round_half_away,
)
from .dataset import (
    DatasetConfig,
    LabeledItem,
    NewItem,
    SplitSummary,
    assemble,
    list_split_items,
    load_data_config,
    load_image,
    parse_data_config,
    parse_yolo_labels,
    save_image,
    summarize_split,
    write_yolo_labels,
)
from .errors import SkypasteError, ValidationError
from .evaluation import (
    EvalReport,
    MatchLedger,
    average_precision,
    evaluate,
    iou,
    match_detections,
    nms,
    parse_predictions,
    precision_recall,
)
from .imgproc import (
    AlphaMask,
    Kernel,
    adjust_exposure,
    alpha_composite,
    auto_sigma,
    canny,
    convolve,
    feather_mask,
    gaussian_blur,
    gaussian_kernel,
    hflip,
    resize_bilinear,
    rotate_rgba,
    tight_bbox,
)
from .toytrain import (
    EarlyStopper,
    LossBreakdown,
    Target,
    ToyModel,
    TrainConfig,
    TrainHistory,
    TrainSample,
    grad,
    loss_total,
    make_toy_data,
    optimizer_step,
    train_loop,
)

__version__ = "0.1.0"
