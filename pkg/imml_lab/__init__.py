from imml_lab.errors import (
    ShapeMismatch, DegenerateNorm, NonFiniteValue, DimensionMismatch, NonPositiveInput, NonSimplexInput,
    BatchTooSmall, NonFiniteLoss, DegenerateVariance,
)
from imml_lab.autodiff import Tensor, Tape, grad_check
from imml_lab.config import (
    SynthConfig, ModelConfig, LossConfig, FusionSpec, OptimizerConfig, SweepConfig, ExperimentConfig,
    load_experiment_config,
)
from imml_lab.losses import (
    MixedSample, mod_index, mdke_loss, per_modality_mdke, fuse_unpaired, mixed_label, beta_loss, imml_loss,
)
from imml_lab.model import ImmlModel
from imml_lab.synth import Dataset, SynthData, generate_synth
from imml_lab.trainer import TrainResult, train, evaluate, mask_sweep, build_model
from imml_lab.bounds import (
    BoundReport, bound_report, check_cauchy_schwarz_step, check_jensen_step, check_convexity_step,
)
from imml_lab.stats import SignificanceResult, significance_test
