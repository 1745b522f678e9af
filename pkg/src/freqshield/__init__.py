"""Frequency-domain backdoor attacks and augmentation defenses, desk scale."""

from .analysis import (
    AmplificationResult,
    ResidualStats,
    blur_identity_check,
    compaction_error,
    residual_stats,
    variance_amplification,
)
from .attacks import (
    CtrlSpec,
    FibaSpec,
    HtbaSpec,
    TriggerSpec,
    ctrl_poison,
    fiba_poison,
    htba_poison,
    poison_image,
    residual,
)
from .data import (
    Dataset,
    PoisonManifest,
    export_dataset,
    gen_synthetic,
    import_dataset,
    load_cifar10,
    load_cifar100,
    poison_dataset,
)
from .defenses import (
    AugmentConfig,
    FreqMask,
    apply_freq_mask,
    blur_augment,
    freq_patch,
    luma_view,
    make_views,
)
from .evaluation import (
    EmbeddingSet,
    MetricsReport,
    compute_acc,
    compute_asr,
    knn_classify,
    pca_project,
)
from .trainer import (
    EncoderParams,
    EquiTransform,
    TrainConfig,
    aug_invariance_loss,
    embed_dataset,
    equi_loss,
    ntxent_loss,
    train_encoder,
)
from .transforms import (
    Image,
    clamp_unit,
    convolve2d,
    convolve_image,
    dct2,
    fft2,
    gaussian_kernel,
    idct2,
    ifft2,
    luma,
    rgb_to_yuv,
    yuv_to_rgb,
)

__version__ = "0.1.0"
