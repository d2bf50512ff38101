"""Action completion-moment detection by recurrent frame-level voting."""

from .aggregation import (ALL_SCHEMES, VOTING_SCHEMES, MomentPrediction, Scheme, accumulate,
                          baseline_last_frame_regression, baseline_pre_voting, predict,
                          predict_moment)
from .data import (CompletionAnnotation, DatasetSplit, FeatureSequence, FrameLabel, SynthConfig,
                   frame_labels, load_dataset, make_split, save_dataset, synthesize_dataset)
from .evaluation import (EvaluationReport, SequenceRecord, aggregate, render_report,
                         sequence_accuracy, sequence_rd, threshold_curve)
from .network import (FrameOutput, ModelParams, TrainConfig, backward_sequence, forward_sequence,
                      frame_losses, load_params, save_params, sequence_loss, train)
from .voting import VoteParams, classification_vote, predicted_moment, regression_vote

__version__ = "0.1.0"
