"""Seedable agent-based simulation of a recommender platform with live item feedback."""

from .config import SimulationConfig, load_config
from .domain import Action, ActionKind, EventRecord, HistoricalInteraction, Intervention, ItemDynamics, ItemRecord, Review
from .errors import InteractSimError
from .ingestion import Dataset
from .llm import Gateway, MockBackend
from .recommenders import TrainConfig, train_recommender
from .simulation import SimulationState, run_simulation
from .store import ItemStore

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "Dataset",
    "EventRecord",
    "Gateway",
    "HistoricalInteraction",
    "InteractSimError",
    "Intervention",
    "ItemDynamics",
    "ItemRecord",
    "ItemStore",
    "MockBackend",
    "Review",
    "SimulationConfig",
    "SimulationState",
    "TrainConfig",
    "load_config",
    "run_simulation",
    "train_recommender",
]
