import logging
import os
from dotenv import load_dotenv
from pathlib import Path

# Get the directory where this config file is located
config_dir = Path(__file__).parent.parent
env_file = config_dir / ".env"

# Load environment variables from the correct .env file
load_dotenv(env_file)

LOG_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class Settings:
    def __init__(self):
        self.log_mode: str = os.getenv("ACE_LOG", "info").strip().lower()
        self.threads: int = int(os.getenv("ACE_THREADS", str(os.cpu_count() or 1)))
        self.output_dir: str = os.getenv("ACE_OUTPUT_DIR", "output")
        self.n_grid: int = int(os.getenv("ACE_N_GRID", "10000"))
        self.fisher_mc_size: int = int(os.getenv("ACE_FISHER_MC_SIZE", "20"))
        self.max_rejections: int = int(os.getenv("ACE_MAX_REJECTIONS", "100"))

    @property
    def log_level(self) -> int:
        return LOG_LEVELS.get(self.log_mode, logging.INFO)


settings = Settings()
