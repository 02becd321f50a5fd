"""Run configuration: one JSON file holding endpoints, pipeline knobs and
the layout provider, with environment overrides. Explicit flags (CLI or
service request fields) take precedence over both.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .extraction import FallbackPolicy
from .gateway.client import Gateway
from .gateway.config import ConfigError, GatewayConfig, gateway_config_from_dict
from .layout import HttpService, LayoutProvider, PrecomputedFiles
from .store import DEFAULT_DIMS, Embedder, GatewayEmbedder, HashingEmbedder
from .types import RationaleMode

EMBEDDER_KINDS = ("hashing", "gateway")


@dataclass
class RunSettings:
    gateway_config: GatewayConfig = field(default_factory=GatewayConfig)
    layout: LayoutProvider = None
    embedder_kind: str = "hashing"
    hashing_dims: int = DEFAULT_DIMS
    policy: FallbackPolicy = FallbackPolicy.ALWAYS
    rationale_mode: RationaleMode = RationaleMode.TEMPLATE
    k: int = 10
    workers: int = 4
    partition: int | None = None

    def with_overrides(
        self,
        *,
        policy: str | None = None,
        embedder: str | None = None,
        rationale_mode: str | None = None,
        k: int | None = None,
        workers: int | None = None,
    ) -> "RunSettings":
        out = self
        if policy is not None:
            out = replace(out, policy=_parse_policy(policy))
        if embedder is not None:
            out = replace(out, embedder_kind=_parse_embedder_kind(embedder))
        if rationale_mode is not None:
            out = replace(out, rationale_mode=_parse_rationale_mode(rationale_mode))
        if k is not None:
            out = replace(out, k=k)
        if workers is not None:
            out = replace(out, workers=workers)
        return out


def _parse_policy(value: str) -> FallbackPolicy:
    try:
        return FallbackPolicy(value)
    except ValueError as exc:
        raise ConfigError(f"unknown fallback policy {value!r}") from exc


def _parse_rationale_mode(value: str) -> RationaleMode:
    try:
        mode = RationaleMode(value)
    except ValueError as exc:
        raise ConfigError(f"unknown rationale mode {value!r}") from exc
    if mode is RationaleMode.PASSTHROUGH:
        raise ConfigError("rationale mode 'passthrough' cannot be configured globally")
    return mode


def _parse_embedder_kind(value: str) -> str:
    if value not in EMBEDDER_KINDS:
        raise ConfigError(f"embedder must be one of {EMBEDDER_KINDS}, got {value!r}")
    return value


def _resolve_mock_urls(config: GatewayConfig, base_dir: Path) -> GatewayConfig:
    roles = {}
    for name, endpoint in config.roles.items():
        url = endpoint.base_url
        if url.startswith("mock://"):
            fixtures = Path(url[len("mock://") :])
            if not fixtures.is_absolute():
                fixtures = base_dir / fixtures
            endpoint = replace(endpoint, base_url=f"mock://{fixtures}")
        roles[name] = endpoint
    return replace(config, roles=roles)


def _layout_from_dict(raw: dict | None, base_dir: Path) -> LayoutProvider:
    if not raw:
        return None
    kind = raw.get("provider", "none")
    if kind == "none":
        return None
    if kind == "precomputed":
        directory = Path(raw.get("dir", "."))
        if not directory.is_absolute():
            directory = base_dir / directory
        return PrecomputedFiles(dir=directory)
    if kind == "http":
        base_url = raw.get("base_url")
        if not base_url:
            raise ConfigError("http layout provider requires base_url")
        return HttpService(base_url=base_url, timeout=float(raw.get("timeout", 30.0)))
    raise ConfigError(f"unknown layout provider {kind!r}")


def load_settings(path: Path | str | None) -> RunSettings:
    """Settings from a JSON config file plus DOCRAG_* environment overrides.
    Relative paths inside the file resolve against the file's directory."""
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        base_dir = path.parent.resolve()

    gateway_config = _resolve_mock_urls(gateway_config_from_dict(raw), base_dir)
    settings = RunSettings(
        gateway_config=gateway_config,
        layout=_layout_from_dict(raw.get("layout"), base_dir),
        embedder_kind=_parse_embedder_kind(raw.get("embedder", "hashing")),
        hashing_dims=int(raw.get("hashing_dims", DEFAULT_DIMS)),
        policy=_parse_policy(raw.get("policy", FallbackPolicy.ALWAYS.value)),
        rationale_mode=_parse_rationale_mode(
            raw.get("rationale_mode", RationaleMode.TEMPLATE.value)
        ),
        k=int(raw.get("k", 10)),
        workers=int(raw.get("workers", 4)),
        partition=int(raw["partition"]) if raw.get("partition") is not None else None,
    )

    env = os.environ
    if env.get("DOCRAG_POLICY"):
        settings = replace(settings, policy=_parse_policy(env["DOCRAG_POLICY"]))
    if env.get("DOCRAG_EMBEDDER"):
        settings = replace(settings, embedder_kind=_parse_embedder_kind(env["DOCRAG_EMBEDDER"]))
    if env.get("DOCRAG_RATIONALE_MODE"):
        settings = replace(
            settings, rationale_mode=_parse_rationale_mode(env["DOCRAG_RATIONALE_MODE"])
        )
    if env.get("DOCRAG_K"):
        settings = replace(settings, k=int(env["DOCRAG_K"]))
    if env.get("DOCRAG_WORKERS"):
        settings = replace(settings, workers=int(env["DOCRAG_WORKERS"]))
    return settings


def make_gateway(settings: RunSettings) -> Gateway:
    return Gateway(settings.gateway_config)


def make_embedder(settings: RunSettings, gateway: Gateway) -> Embedder:
    if settings.embedder_kind == "hashing":
        return HashingEmbedder(dims=settings.hashing_dims)
    return GatewayEmbedder(gateway)
