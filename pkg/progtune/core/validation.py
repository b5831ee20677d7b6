from __future__ import annotations

from typing import Any, Mapping, Type, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import ConfigError

M = TypeVar("M", bound="ConfigModel")


class ConfigModel(BaseModel):
    """Pydantic base for every domain config; ``parse`` reports failures as ConfigError."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    @classmethod
    def parse(cls: Type[M], data: Any) -> M:
        if isinstance(data, cls):
            return data
        try:
            if isinstance(data, Mapping):
                return cls.model_validate(dict(data))
            return cls.model_validate(data)
        except ValidationError as exc:
            problems = [
                {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
                for err in exc.errors()
            ]
            raise ConfigError(f"invalid {cls.__name__}", {"problems": problems}) from exc
