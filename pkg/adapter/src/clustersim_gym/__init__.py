"""Standard RL environment API over the clustersim serve-env protocol."""

__version__ = "0.1.0"

from .check import ConformanceError, check_env
from .client import (AdapterError, EnvClientConfig, ProtocolClient, ProtocolReplyError,
                     SessionStateError, TransportError, default_server_command)
from .env import ClusterSchedulingEnv
from .spaces import Box, Discrete

__all__ = [
    "AdapterError", "Box", "ClusterSchedulingEnv", "ConformanceError", "Discrete",
    "EnvClientConfig", "ProtocolClient", "ProtocolReplyError", "SessionStateError",
    "TransportError", "check_env", "default_server_command",
]
