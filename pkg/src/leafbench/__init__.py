"""leafbench: multi-plant, multi-disease leaf diagnosis toolkit.

A numpy library for joint plant + condition classification from leaf
images: dataset ingestion and stratified splitting, a multi-label
sigmoid label codec, a small reference CNN trained with plain Adam,
micro-averaged metrics, and a benchmark harness that compares pretrained
backbones through one adapter interface.
"""

from .bench import (BenchmarkPlan, RunRecord, emit_f1_curves, emit_report,
                    load_records, predict, run_benchmark)
from .data import (ArrayDataset, DatasetManifest, ImageSample, SplitSpec,
                   load_and_resize, load_split, normalize_image,
                   read_manifest, scan_dataset, stratified_split,
                   write_manifest)
from .errors import (BackboneUnavailable, CheckpointCorrupt, ClassTooSmall,
                     ConfigError, DatasetError, DecodeError, DegenerateBatch,
                     Diverged, EmptyDataset, InvalidPair, LeafbenchError,
                     NoSuccessfulRuns, OutOfRange, ShapeMismatch,
                     UnknownLabel)
from .gradcheck import (GradCheckReport, check_model_gradients,
                        micro_cnn_gradient_check)
from .labels import (CANONICAL_PAIRS, PLANTS, LabelSpace, build_label_space,
                     decode_prediction, encode_label, full_space, valid_pairs)
from .layers import (BatchNormState, ConvLayerParams, DenseParams, FeatureMap,
                     batchnorm_forward, conv2d_forward, dense_forward, relu,
                     sigmoid)
from .metrics import (ConfusionCounts, MetricsReport, binarize,
                      confusion_counts, evaluate_model, evaluate_predictions,
                      f1_score, precision, recall)
from .model import (MicroCNNConfig, SigmoidHeadModel, attach_multilabel_head,
                    build_micro_cnn, count_parameters, load_checkpoint,
                    save_checkpoint)
from .training import (Adam, EpochRecord, RunResult, TrainConfig,
                       aggregate_runs, bce_loss, early_stop_check, train,
                       train_runs)

__version__ = "0.1.0"
