import os

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        # Top level .env file, next to pyproject.toml
        env_file=".env",
        env_ignore_empty=True,
        env_file_encoding="utf-8",
        extra="ignore",
    )

    COOLSIM_WORKERS: int = os.cpu_count() or 1
    COOLSIM_BATCH_NUM: int = 20
    COOLSIM_OUTPUT_DIR: str = "out"
    COOLSIM_CSV_FLOAT_FORMAT: str = "%.12e"


settings = Settings()  # type: ignore
