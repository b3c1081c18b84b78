"""Shared fixtures: pipeline services over the embedded demo database."""

import pytest

from terrasql.config import EngineConfig
from terrasql.llm import LlmGateway, ScriptedProvider
from terrasql.runtime import assemble_services


@pytest.fixture(scope="session")
def shared_kb_dir(tmp_path_factory):
    # one knowledge base for the whole run; tests that write memory use
    # their own directory instead
    return str(tmp_path_factory.mktemp("kb"))


@pytest.fixture
def make_services(shared_kb_dir):
    """Factory: PipelineServices whose model is a scripted handler."""

    def _make(handler, kb_dir=None):
        config = EngineConfig()
        config.kb_dir = kb_dir or shared_kb_dir
        config.llm.mode = "live"
        config.llm.provider = "scripted"
        llm = LlmGateway(config.llm, provider=ScriptedProvider(handler))
        return assemble_services(config, llm=llm)

    return _make


@pytest.fixture
def replay_services(shared_kb_dir):
    """PipelineServices replaying the bundled recorded exchanges."""
    config = EngineConfig()
    config.kb_dir = shared_kb_dir
    config.llm.mode = "replay"
    return assemble_services(config, llm=LlmGateway(config.llm))
