from typing import Optional
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Settings(BaseSettings):
    """
    Centralized configuration for the solver and its command-line harness.
    Every tolerance and default used by the library is defined here and can be
    overridden through SPARSE_BPI_* environment variables or a .env file.
    """

    # Application Settings
    APP_NAME: str = "sparse-bpi"
    APP_VERSION: str = "1.0.0"
    APP_DESCRIPTION: str = "Bounded policy iteration for POMDPs with sparse stochastic finite-state controllers"

    # Logging Settings
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(name)s - %(message)s"

    # Model / controller tolerances
    ZERO_PROB_TOLERANCE: float = 1e-12
    DROP_TOLERANCE: float = 1e-12
    PARAM_TOLERANCE: float = 1e-6
    STOCHASTIC_TOLERANCE: float = 1e-9
    PARSE_ROW_TOLERANCE: float = 1e-6

    # Policy evaluation
    DIRECT_SOLVE_LIMIT: int = 5000
    DIRECT_SOLVE_ORDERING: str = "MMD_AT_PLUS_A"
    GAUSS_SEIDEL_TOLERANCE: float = 1e-10
    GAUSS_SEIDEL_MAX_SWEEPS: int = 100000
    EVALUATION_RESIDUAL_LIMIT: float = 1e-8

    # Linear programming
    LP_FEASIBILITY_TOLERANCE: float = 1e-9
    LP_OPTIMALITY_TOLERANCE: float = 1e-9
    LP_PIVOT_TOLERANCE: float = 1e-9
    LP_BLAND_AFTER: int = 500
    LP_DUMP_DIR: Optional[str] = None

    # Policy improvement
    EPSILON_TOLERANCE: float = 1e-8
    BACKUP_GAP_TOLERANCE: float = 1e-9
    STALL_GAP_TOLERANCE: float = 1e-6
    ESCAPE_GAP_TOLERANCE: float = 1e-8

    # Run defaults
    DEFAULT_ADD_K: int = 5
    DEFAULT_MAX_NODES: int = 300
    DEFAULT_MAX_OUTER_ITERATIONS: int = 1000
    DEFAULT_MAX_SWEEPS: int = 200
    DEFAULT_BENCH_SWEEPS: int = 3
    DEFAULT_ROLLOUTS: int = 10000
    MC_BIAS_TARGET: float = 1e-6

    # Persistence
    REPORT_SCHEMA_VERSION: str = "1.0"
    POLICY_SCHEMA_VERSION: str = "1.0"

    class Config:
        env_prefix = "SPARSE_BPI_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"

# Create a global settings instance
settings = Settings()

# Function to get settings (useful for dependency injection)
def get_settings() -> Settings:
    return settings
