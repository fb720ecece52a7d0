import os
from dataclasses import dataclass
from dotenv import load_dotenv


@dataclass
class Settings:
    data_dir: str
    runs_dir: str
    use_duckdb: bool
    duckdb_path: str
    log_level: str
    mnist_base_url: str


def load_settings() -> Settings:
    # Load .env if present
    load_dotenv(override=False)

    data_dir = os.getenv("HAT_DATA_DIR", "data")
    runs_dir = os.getenv("HAT_RUNS_DIR", "runs")
    use_duckdb = os.getenv("USE_DUCKDB", "false").lower() in {"1", "true", "yes"}
    duckdb_path = os.getenv("DUCKDB_PATH", os.path.join(runs_dir, "hat.duckdb"))
    log_level = os.getenv("HAT_LOG_LEVEL", "INFO").upper()
    mnist_base_url = os.getenv(
        "MNIST_BASE_URL", "https://ossci-datasets.s3.amazonaws.com/mnist/"
    )

    return Settings(
        data_dir=data_dir,
        runs_dir=runs_dir,
        use_duckdb=use_duckdb,
        duckdb_path=duckdb_path,
        log_level=log_level,
        mnist_base_url=mnist_base_url,
    )
