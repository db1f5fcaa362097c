from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="GAUGEFORGE_")

    # Logging settings
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"

    # Thread pool for independent (x0, r) experiments
    MAX_WORKERS: int = 4

    # Incomplete LU used as the zero-Dirichlet inverse Laplacian preconditioner
    ILU_DROP_TOL: float = 1e-5
    ILU_FILL_FACTOR: float = 20.0

    # Krylov iteration cap per solve
    KRYLOV_MAXITER: int = 2000


settings = Settings()
