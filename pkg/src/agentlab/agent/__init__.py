from .backends import (
    BackendError,
    ChatBackendParams,
    HttpBackend,
    MockBackend,
    RateLimited,
    complete,
    make_script,
)
from .parsing import AgentResponse, ParseError, parse_response
from .personas import Persona, bundled_personas, load_persona
from .prompts import AgentMemory, DailyPrompt, build_prompt
from .runtime import Agent, AgentAbort, agent_step, run_episode

__all__ = [
    "Agent",
    "AgentAbort",
    "AgentMemory",
    "AgentResponse",
    "BackendError",
    "ChatBackendParams",
    "DailyPrompt",
    "HttpBackend",
    "MockBackend",
    "ParseError",
    "Persona",
    "RateLimited",
    "agent_step",
    "build_prompt",
    "bundled_personas",
    "complete",
    "load_persona",
    "make_script",
    "parse_response",
    "run_episode",
]
