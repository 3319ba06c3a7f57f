from .a2c import (LossRecord, NumericError, Step, Trajectory, a2c_loss, a2c_update,
                  discounted_returns, run_episode)
from .evaluate import (EvalRow, OraclePolicy, RandomPolicy, aggregate, evaluate,
                       evaluate_baseline, play_games, write_eval_csv)
from .train import METRICS_HEADER, ConfigError, KnowledgePhase, TrainConfig, train

__all__ = [
    "ConfigError", "EvalRow", "KnowledgePhase", "LossRecord", "METRICS_HEADER", "NumericError",
    "OraclePolicy", "RandomPolicy", "Step", "TrainConfig", "Trajectory", "a2c_loss",
    "a2c_update", "aggregate", "discounted_returns", "evaluate", "evaluate_baseline",
    "play_games", "run_episode", "train", "write_eval_csv",
]
