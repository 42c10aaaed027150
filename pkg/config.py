"""Configuration management for the driver action prediction toolkit."""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Application configuration.

    Every default mirrors the standard training recipe, so running the CLI
    without flags or environment overrides reproduces it.
    """

    # Reproducibility
    SEED = int(os.getenv("DBRNN_SEED", 0))

    # Network (64 hidden units per cell, 5 s windows at 10 Hz)
    HIDDEN_SIZE = int(os.getenv("DBRNN_HIDDEN_SIZE", 64))
    WINDOW = int(os.getenv("DBRNN_WINDOW", 50))

    # Labelling
    HORIZON_S = float(os.getenv("DBRNN_HORIZON_S", 5.0))
    STRIDE = int(os.getenv("DBRNN_STRIDE", 5))
    EXEC_LEN_S = float(os.getenv("DBRNN_EXEC_LEN_S", 2.0))
    BALANCE_RATIO = float(os.getenv("DBRNN_BALANCE_RATIO", 1.5))

    # Training
    LEARNING_RATE = float(os.getenv("DBRNN_LEARNING_RATE", 1e-2))
    DECAY_FACTOR = float(os.getenv("DBRNN_DECAY_FACTOR", 0.1))
    DECAY_EVERY = int(os.getenv("DBRNN_DECAY_EVERY", 100))
    MAX_EPOCHS = int(os.getenv("DBRNN_MAX_EPOCHS", 1000))
    CLIP_VALUE = float(os.getenv("DBRNN_CLIP_VALUE", 10.0))
    BATCH_SIZE = int(os.getenv("DBRNN_BATCH_SIZE", 32))

    # Evaluation
    BIN_WIDTH_S = float(os.getenv("DBRNN_BIN_WIDTH_S", 0.5))

    # Paths and logging
    DATA_DIR = os.getenv("DBRNN_DATA_DIR", "data")
    LOG_LEVEL = os.getenv("DBRNN_LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("DBRNN_LOG_FILE")  # unset → stderr only

    @classmethod
    def validate(cls):
        """Validate that configured values are usable."""
        positive = [
            "HIDDEN_SIZE",
            "WINDOW",
            "HORIZON_S",
            "STRIDE",
            "LEARNING_RATE",
            "DECAY_EVERY",
            "CLIP_VALUE",
            "BATCH_SIZE",
            "BALANCE_RATIO",
            "BIN_WIDTH_S",
        ]
        invalid = [key for key in positive if not getattr(cls, key) > 0]
        if not 0 < cls.DECAY_FACTOR <= 1:
            invalid.append("DECAY_FACTOR")
        if cls.MAX_EPOCHS < 0:
            invalid.append("MAX_EPOCHS")
        if cls.EXEC_LEN_S < 0:
            invalid.append("EXEC_LEN_S")
        if invalid:
            raise ValueError(f"Invalid configuration: {', '.join('DBRNN_' + key for key in invalid)}")
