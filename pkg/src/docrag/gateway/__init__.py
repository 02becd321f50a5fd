"""Wire-protocol clients for the model endpoints, plus the offline mock."""

from .client import (
    BadStatus,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    Gateway,
    GatewayError,
    GatewayTimeout,
    ImagePart,
    ImageTooLarge,
    MalformedResponse,
    TextPart,
    TokenAlternative,
    TokenLogprob,
    chat,
    embed,
)
from .config import ConfigError, GatewayConfig, RoleEndpoint, gateway_config_from_dict
from .mock import Fixture, MockGateway, create_mock_app, load_fixtures, mock_serve

__all__ = [
    "BadStatus",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "ConfigError",
    "Fixture",
    "Gateway",
    "GatewayConfig",
    "GatewayError",
    "GatewayTimeout",
    "ImagePart",
    "ImageTooLarge",
    "MalformedResponse",
    "MockGateway",
    "RoleEndpoint",
    "TextPart",
    "TokenAlternative",
    "TokenLogprob",
    "chat",
    "create_mock_app",
    "embed",
    "gateway_config_from_dict",
    "load_fixtures",
    "mock_serve",
]
