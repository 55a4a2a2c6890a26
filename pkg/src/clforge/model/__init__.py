from .checkpoint import load_checkpoint, save_checkpoint
from .decode import (generate_usage, generate_usage_batch, next_token_logits, next_token_topk,
                     ranked_ids, topk_batch)
from .train import (CausalObjective, MaskedObjective, PretrainSchedule, SpanObjective, TrainingError,
                    pretrain)
from .transformer import ADDED_AT_FINETUNING, ModelConfig, ModelState, attention_mask, param_groups
from .vocab import SPECIALS, Vocab, build_vocab
