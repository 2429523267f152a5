"""Test cases for the backend factory module."""
import pytest

from parley.backends.chat import ChatBackend
from parley.backends.factory import BackendFactory, factory
from parley.backends.scripted import ScriptedBackend, ScriptedPolicy


def test_registered_identifiers():
    """Every built-in backend kind is registered."""
    assert {"chat", "responses", "scripted"} <= set(factory.registered_identifiers)


def test_create():
    """Backends are created by kind with keyword arguments."""
    backend = factory.create("chat", model="m", base_url="http://127.0.0.1:1")
    assert isinstance(backend, ChatBackend)
    scripted = factory.create("scripted", policy=ScriptedPolicy.from_identifier("hardline"))
    assert isinstance(scripted, ScriptedBackend)


def test_create_invalid():
    """Raises when the backend kind is not registered."""
    with pytest.raises(ValueError):
        factory.create("invalid")


def test_register_frozen():
    """Importing the backends package freezes the registry."""
    assert factory.frozen
    with pytest.raises(ValueError):
        factory.register("late")


def test_registry_is_read_only():
    """The registry cannot be modified through its public view."""
    with pytest.raises(TypeError):
        factory.registry["late"] = ChatBackend


def test_register_unfrozen():
    """A fresh factory accepts registrations until it is frozen."""
    local = BackendFactory()
    local.register("scripted")(ScriptedBackend)
    assert local.registered_identifiers == ["scripted"]
    local.freeze()
    with pytest.raises(ValueError):
        local.register("chat")
