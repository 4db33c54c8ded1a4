from .features import AssociationSample, SPATIAL_DIM, box_center, pair_feature
from .mining import label_balance, mine_training_pairs, select_candidates
from .model import (
    HIDDEN_SIZE, INPUT_SIZE, SEQUENCE_LENGTH, GruModel, bce_loss, forward_batch, gru_forward,
    gru_loss_and_grads, load_model, loss_and_grads_packed, pack_sequences, predict_similarity, save_model,
)
from .optim import AdamState, adam_step
from .training import TrainHistory, auc, init_for_samples, input_statistics, train
