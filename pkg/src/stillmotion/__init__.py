"""stillmotion: looping landscape animation from a single photograph.

Two small convolutional predictors, trained self-supervised on time-lapse
footage, animate a still image: one infers backward optical flow for
motion, the other per-pixel color transfer maps for time-of-day appearance.
Latent codes extracted during training (the codebooks) select among
plausible futures and can be steered with arrow/patch annotations.
"""

from .appearance import (
    AppearanceHyperParams,
    ColorTransferMap,
    color_transfer,
    predict_appearance_frame,
    train_appearance,
)
from .control import (
    AppearanceAnnotation,
    Arrow,
    MotionAnnotation,
    Patch,
    optimize_appearance_code,
    optimize_motion_code,
    predict_code_sequence,
    train_latent_lstm,
)
from .dataset import (
    Clip,
    ClipStore,
    Codebook,
    ingest_appearance_clips,
    ingest_motion_clips,
    load_codebook,
    save_codebook,
)
from .errors import CodebookFormatError, ConfigurationError, MissingArtifactError
from .imageops import (
    compose_flows,
    denormalize_image,
    normalize_image,
    reflect_pad,
    resize,
    restrict_flow,
    warp,
)
from .motion import (
    MotionHyperParams,
    motion_reconstruction_rmse,
    predict_motion_sequence,
    train_motion,
)
from .networks import (
    EncoderNet,
    FeatureExtractor,
    LatentLSTM,
    PredictorNet,
    load_checkpoint,
    save_checkpoint,
    vgg16_features,
)
from .synthesis import (
    SynthesisConfig,
    evaluate_sequence,
    generate_loop,
    interpolate_latent_sequence,
    synthesize,
    write_frame_sequence,
)

__version__ = "0.1.0"
