from .config import (ConfigError, EvalConfig, FinetuneSchedule, PretrainConfig, RunConfig, Seeds, VocabConfig,
                     config_hash, load_pretrain_config, load_run_config)
from .continual import ContinualResult, run_continual
from .evaluate import evaluate_all, evaluate_call, evaluate_usage
from .report import emit_report, read_heatmap, write_heatmap
from .tasks import API_CALL, API_USAGE, TaskInstance, build_task_instances
from .zeroshot import PUBLISHED_REFERENCE, run_zeroshot
