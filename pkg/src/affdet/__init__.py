"""affdet: synthetic-speech detection with fused cepstral features.

The package splits into a DSP front half and an NN back half:

* `audio` / `dsp` / `features` — WAV decoding, MFCC/LFCC extraction,
  canonical-grid padding, masking augmentation, feature files.
* `nn` / `blocks` — numpy tensor layers with manual backward passes, and
  the SE / MS-CAM / AFF blocks assembled into SE-ResNet classifiers.
* `metrics` / `synth` / `config` / `pipeline` / `cli` — evaluation,
  synthetic data, and manifest-driven orchestration.
"""

from .audio import AudioClip, load_wav, resample, save_wav, segment_one_second
from .blocks import AFF, MSCAM, BackboneConfig, FusionClassifier, SEBlock, build_model
from .config import RunConfig
from .dsp import (
    FeatureMatrix,
    LfccConfig,
    MfccConfig,
    extract_lfcc,
    extract_mfcc,
)
from .features import MaskSpec, PaddedFeature, apply_mask, pad_center, read_feature, write_feature
from .metrics import EvalReport, ScoredSample, auc, eer, evaluate, roc_curve
from .synth import SynthTaskSpec

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "load_wav",
    "save_wav",
    "resample",
    "segment_one_second",
    "FeatureMatrix",
    "MfccConfig",
    "LfccConfig",
    "extract_mfcc",
    "extract_lfcc",
    "PaddedFeature",
    "MaskSpec",
    "pad_center",
    "apply_mask",
    "read_feature",
    "write_feature",
    "SEBlock",
    "MSCAM",
    "AFF",
    "BackboneConfig",
    "FusionClassifier",
    "build_model",
    "ScoredSample",
    "EvalReport",
    "roc_curve",
    "auc",
    "eer",
    "evaluate",
    "SynthTaskSpec",
    "RunConfig",
    "__version__",
]
