"""
Background worker task for per-width model training.
This runs in a separate process via RQ worker (`rq worker default`).
"""
import logging

from config import load_pipeline_config
from pipeline import prepare, train_width

logger = logging.getLogger(__name__)


def train_width_task(config_path, overrides, bits):
    """
    Background task: train the codes and hash functions of one bit width.
    Topic models and the selection are reused from the model directory cache.
    """
    try:
        pc = load_pipeline_config(config_path, overrides)
        prep = prepare(pc)
        manifest = train_width(pc, prep, bits)
        return {
            'status': 'completed',
            'message': f"Trained {bits}-bit {pc.variant} model in {pc.model_dir}",
            'bits': bits,
            'selection': manifest['selection'],
        }
    except Exception as e:
        logger.error(f"Training {bits}-bit model failed: {e}")
        return {
            'status': 'failed',
            'message': f"Training {bits}-bit model failed: {str(e)}",
            'bits': bits,
        }
