from .engine import (GRAMMARS, LEVELS, MAX_STEPS, CleanupEnv, GameSpec, GameState,
                     Observation, admissible_actions, describe, game_path, generate_game,
                     load_games, normalized_score, oracle_policy, reset, step)
from .vocab import (EntityVocabulary, GameError, LocationEntry, ObjectEntry, load_vocab,
                    make_splits)

__all__ = [
    "GRAMMARS", "LEVELS", "MAX_STEPS", "CleanupEnv", "EntityVocabulary", "GameError",
    "GameSpec", "GameState", "LocationEntry", "ObjectEntry", "Observation",
    "admissible_actions", "describe", "game_path", "generate_game", "load_games",
    "load_vocab", "make_splits", "normalized_score", "oracle_policy", "reset", "step",
]
