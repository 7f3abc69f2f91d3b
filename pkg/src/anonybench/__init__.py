from .version import VERSION
from .exception import AnonybenchException, ArtifactIOException, ConfigException, DomainException
from .exception import NumericalException, ShapeException, StepIsolationException, TapeException
from .tensor import Tape, Tensor, backward, no_record
from .gradcheck import GradCheckResult, grad_check
from .nets import ActionClassifier, Anonymizer, BudgetEncoder, ConvActionClassifier, ConvPrivacyClassifier
from .nets import LinearActionClassifier, LinearPrivacyClassifier, Parameters, PrivacyClassifier
from .nets import anonymize, classify_action, embed_privacy
from .losses import LossTerms, anonymizer_loss, binary_cross_entropy, cross_entropy, l1_recon_loss
from .losses import nt_xent, penalty_loss, rms_diff
from .config import DataConfig, RunConfig, TrainConfig, load_config
from .synthdata import Clip, DatasetSplit, PrivacySample, make_clip, make_splits, sample_frame_pair
from .checkpoint import Checkpoint
from .trainer import Trainer, pretrain_anonymizer, train_action_probe, train_anonymization
from .trainer import train_privacy_probe, train_step1, train_step2
from .metrics import MetricsReport, average_precision, cmap, macro_f1, top1
from .pipeline import run_pipeline
from .sweep import run_sweep
from .manifest import RunManifest
