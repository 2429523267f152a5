"""Backend factory module."""
import logging
import types
import typing as t

from attrs import define, field

from .core import Backend

logger = logging.getLogger(__name__)


@define
class BackendFactory:
    """
    Backend factory class.

    Backend classes register under their kind until the factory is frozen;
    ``parley.backends`` freezes it once every built-in backend is imported.
    """

    _registry: t.Dict[str, t.Type[Backend]] = field(factory=dict)
    _frozen: bool = field(default=False, init=False)

    @property
    def registry(self) -> t.Mapping[str, t.Type[Backend]]:
        """Read-only view of the registered backend classes."""
        return types.MappingProxyType(self._registry)

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def registered_identifiers(self) -> t.List[str]:
        """
        Registered backend kinds.

        Returns:
            List of registered backend kinds.
        """
        return list(self._registry.keys())

    def register(
        self,
        identifier: str,
    ) -> t.Callable:
        """
        Register a backend class.

        Args:
            identifier: Backend kind.

        Raises:
            ValueError: If the factory is frozen.

        Returns:
            Decorator function.
        """
        if self._frozen:
            msg = f"Cannot register backend {identifier}: the factory is frozen"
            logger.critical(msg)
            raise ValueError(msg)

        def inner_wrapper(wrapped_class: t.Type[Backend]) -> t.Type[Backend]:
            logger.debug("Registering backend %s", identifier)
            if identifier in self._registry:
                logger.warning(  # pragma: no cover
                    "Backend %s already exists. Will replace it",
                    identifier,
                )
            self._registry[identifier] = wrapped_class
            return wrapped_class

        return inner_wrapper

    def freeze(self) -> None:
        """Reject any further registration."""
        self._frozen = True

    def create(self, identifier: str, **kwargs: t.Any) -> Backend:
        """
        Create a backend instance.

        Args:
            identifier: Backend kind.
            kwargs: Keyword arguments forwarded to the backend class.

        Raises:
            ValueError: If no backend is registered under `identifier`.

        Returns:
            Backend instance.
        """
        if identifier not in self._registry:
            msg = f"Backend {identifier} does not exist in the registry"
            logger.critical(msg)
            raise ValueError(msg)

        logger.debug("Creating backend %s", identifier)
        return self._registry[identifier](**kwargs)


factory = BackendFactory()
