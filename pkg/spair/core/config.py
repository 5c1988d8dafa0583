"""Runtime settings using pydantic-settings."""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="SPAIR_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_env: str = "development"
    log_level: str = "INFO"

    # Artifacts
    output_dir: str = "runs"

    # Training data producer (0 disables the background thread)
    prefetch_depth: int = 2

    # Native thread cap applied while the benchmark times its loops
    bench_threads: int = 1


settings = Settings()
