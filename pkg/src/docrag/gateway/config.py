"""Endpoint configuration for the four model roles: vlm, llm, judge, embedder.

Values come from a config dict (usually a JSON file), overridden by
DOCRAG_<ROLE>_<FIELD> environment variables.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

ROLES = ("vlm", "llm", "judge", "embedder")

# model defaults: temperature 1.0 everywhere; 16384 tokens for the vision
# role, 8192 for the language roles
ROLE_MAX_TOKENS = {"vlm": 16384, "llm": 8192, "judge": 8192, "embedder": 0}

ENV_PREFIX = "DOCRAG"


class ConfigError(ValueError):
    """Bad or missing configuration; raised before any pipeline work starts."""


@dataclass(frozen=True)
class RoleEndpoint:
    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    temperature: float = 1.0
    max_tokens: int = 8192
    dims: int | None = None  # embedder role only

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("endpoint base_url must be non-empty")
        if not self.model:
            raise ConfigError("endpoint model must be non-empty")


@dataclass(frozen=True)
class GatewayConfig:
    roles: dict[str, RoleEndpoint] = field(default_factory=dict)
    retries: int = 3
    backoff_base: float = 1.0
    max_batch: int = 32
    max_image_bytes: int = 8 * 1024 * 1024
    concurrency: int = 4

    def role(self, name: str) -> RoleEndpoint:
        endpoint = self.roles.get(name)
        if endpoint is None:
            raise ConfigError(f"no endpoint configured for role {name!r}")
        return endpoint


def _env(role: str, key: str) -> str | None:
    return os.environ.get(f"{ENV_PREFIX}_{role.upper()}_{key.upper()}")


def _role_from_dict(role: str, raw: dict) -> RoleEndpoint:
    base_url = _env(role, "base_url") or raw.get("base_url", "")
    model = _env(role, "model") or raw.get("model", "")
    api_key = _env(role, "api_key") or raw.get("api_key")
    timeout = float(_env(role, "timeout") or raw.get("timeout", 60.0))
    temperature = float(_env(role, "temperature") or raw.get("temperature", 1.0))
    max_tokens = int(
        _env(role, "max_tokens") or raw.get("max_tokens", ROLE_MAX_TOKENS.get(role, 8192))
    )
    dims_raw = _env(role, "dims") or raw.get("dims")
    dims = int(dims_raw) if dims_raw is not None else None
    return RoleEndpoint(
        base_url=base_url,
        model=model,
        api_key=api_key,
        timeout=timeout,
        temperature=temperature,
        max_tokens=max_tokens,
        dims=dims,
    )


def gateway_config_from_dict(raw: dict) -> GatewayConfig:
    """Build a GatewayConfig from the "roles" section of a config file,
    applying environment overrides. Roles absent from both stay unset."""
    roles: dict[str, RoleEndpoint] = {}
    raw_roles = raw.get("roles", {})
    if not isinstance(raw_roles, dict):
        raise ConfigError("config 'roles' must be an object")
    for role in ROLES:
        role_raw = raw_roles.get(role, {})
        if not isinstance(role_raw, dict):
            raise ConfigError(f"config role {role!r} must be an object")
        has_env = _env(role, "base_url") is not None
        if not role_raw and not has_env:
            continue
        try:
            roles[role] = _role_from_dict(role, role_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad endpoint config for role {role!r}: {exc}") from exc
    config = GatewayConfig(roles=roles)
    for key in ("retries", "max_batch", "max_image_bytes", "concurrency"):
        if key in raw:
            config = replace(config, **{key: int(raw[key])})
    if "backoff_base" in raw:
        config = replace(config, backoff_base=float(raw["backoff_base"]))
    return config
