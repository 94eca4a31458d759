from functools import lru_cache

import numpy as np
import sympy
from pydantic import BaseConfig, BaseSettings, validator

from herglotz.printer import print_expression


class ExprConfig(BaseConfig):
    arbitrary_types_allowed = True
    allow_mutation = False
    json_encoders = {
        sympy.Basic: print_expression,
        np.ndarray: lambda array: array.tolist(),
    }


class Settings(BaseSettings):
    threads: int = 1
    residual_tol: float = 1e-8
    refinement_scale: float = 100.0
    truncation_safety: float = 3.0
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 200
    cfl_max: float = 0.9
    kdv_safety: float = 0.4
    singular_cond: float = 1e12

    class Config:
        env_prefix = "HERGLOTZ_"

    @validator("threads")
    def _at_least_one_thread(cls, value: int) -> int:  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("HERGLOTZ_THREADS must be at least 1")
        return value


@lru_cache(maxsize=None)
def get_settings() -> Settings:
    return Settings()
