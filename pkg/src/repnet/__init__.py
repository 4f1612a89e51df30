from .config import RepNetConfig, RunConfig
from .domain.models import Dataset, RepressionKind
from .network import RepNetParams, embed, forward, init_params, train_step
from .pipelines.training import TrainingResult, train_model
from .storage.checkpoint import load_checkpoint, save_checkpoint
from .storage.manifest import read_manifest


def train_from_yaml(config_path: str, manifest_dir: str) -> TrainingResult:
    cfg = RunConfig.load(config_path)
    return train_model(cfg, read_manifest(manifest_dir))
